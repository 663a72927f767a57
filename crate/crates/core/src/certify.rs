//! The inter-procedural analyzer, the certificate format, the single-pass
//! checker, and leak reporting.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alias::Representative;
use crate::dataflow::{Context, FactSet, SummaryEnv};
use crate::ir::{MethodId, Program};

pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CertError {
    #[error("malformed certificate: {0}")]
    Malformed(String),
    #[error("unsupported certificate version {0}")]
    Version(u32),
    #[error("unknown representative `{0}`")]
    UnknownRepresentative(String),
    #[error("malformed method id `{0}`")]
    MethodId(String),
}

pub type Entry = BTreeSet<(String, String)>;

/// The method-to-summary map, bound to the program it was computed for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub version: u32,
    pub digest: String,
    pub entries: BTreeMap<MethodId, Entry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCertificate {
    version: u32,
    digest: String,
    entries: BTreeMap<String, Vec<(String, String)>>,
}

impl Certificate {
    pub fn from_env(ctx: &Context<'_>, env: &SummaryEnv) -> Self {
        let entries = ctx
            .program
            .method_ids()
            .iter()
            .map(|m| {
                let facts = env.get(m).cloned().unwrap_or_default();
                (m.clone(), facts.encode(ctx.reps()))
            })
            .collect();
        Certificate {
            version: VERSION,
            digest: ctx.program.digest().to_string(),
            entries,
        }
    }

    /// Canonical JSON text: entries sorted by method, pairs sorted.
    pub fn encode(&self) -> String {
        let raw = RawCertificate {
            version: self.version,
            digest: self.digest.clone(),
            entries: self
                .entries
                .iter()
                .map(|(m, e)| (m.to_string(), e.iter().cloned().collect()))
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&raw).expect("certificate serializes");
        s.push('\n');
        s
    }

    pub fn decode(text: &str) -> Result<Self, CertError> {
        let raw: RawCertificate =
            serde_json::from_str(text).map_err(|e| CertError::Malformed(e.to_string()))?;
        if raw.version != VERSION {
            return Err(CertError::Version(raw.version));
        }
        if raw.digest.len() != 64 || !raw.digest.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(CertError::Malformed(format!("bad digest `{}`", raw.digest)));
        }
        let mut entries = BTreeMap::new();
        for (m, pairs) in raw.entries {
            let id = MethodId::parse(&m).ok_or(CertError::MethodId(m))?;
            let mut entry = Entry::new();
            for (a, b) in pairs {
                for r in [&a, &b] {
                    if Representative::decode(r).is_none() {
                        return Err(CertError::UnknownRepresentative(r.clone()));
                    }
                }
                entry.insert((a, b));
            }
            entries.insert(id, entry);
        }
        Ok(Certificate {
            version: raw.version,
            digest: raw.digest,
            entries,
        })
    }

    /// Load the entries as a summary environment of `ctx`.
    pub fn to_env(&self, ctx: &mut Context<'_>) -> SummaryEnv {
        self.entries
            .iter()
            .map(|(m, e)| {
                let reps: Vec<(Representative, Representative)> = e
                    .iter()
                    .map(|(a, b)| {
                        (
                            Representative::decode(a).expect("validated on decode"),
                            Representative::decode(b).expect("validated on decode"),
                        )
                    })
                    .collect();
                (
                    m.clone(),
                    ctx.decode_facts(reps.iter().map(|(a, b)| (a, b))),
                )
            })
            .collect()
    }
}

/// Summaries after each round of the analyzer worklist.
pub type Round = BTreeMap<MethodId, Entry>;

#[derive(Debug, Clone)]
pub struct Analysis {
    pub certificate: Certificate,
    pub summarise_calls: usize,
    pub node_evaluations: usize,
    /// State of the summary map after each worklist round; round `k + 1`
    /// processes exactly the methods re-enqueued during round `k`.
    pub rounds: Vec<Round>,
}

/// Initial worklist order: callers before callees (reverse postorder of a
/// depth-first walk of the call graph from methods without callers), ties by id.
pub fn callers_first_order(ctx: &Context<'_>) -> Vec<MethodId> {
    let cg = &ctx.call_graph;
    let ids = ctx.program.method_ids();
    let mut seen: HashSet<&MethodId> = HashSet::new();
    let mut post = vec![];
    let roots = ids
        .iter()
        .filter(|m| cg.callers_of(m).next().is_none())
        .chain(ids.iter());
    for root in roots {
        if !seen.insert(root) {
            continue;
        }
        let mut stack: Vec<(&MethodId, Vec<&MethodId>)> =
            vec![(root, cg.callees_of(root).collect())];
        while let Some((m, pending)) = stack.last_mut() {
            let m = *m;
            if pending.is_empty() {
                post.push(m.clone());
                stack.pop();
                continue;
            }
            let next = pending.remove(0);
            if seen.insert(next) {
                stack.push((next, cg.callees_of(next).collect()));
            }
        }
    }
    post.reverse();
    post
}

/// Compute the certificate of a program.
pub fn analyze(ctx: &Context<'_>) -> Analysis {
    analyze_with(ctx, &callers_first_order(ctx), None)
}

/// Worklist analysis from a given initial order, optionally starting from
/// existing summaries instead of empty ones.
///
/// Every method is summarised once per visit; whenever its filtered summary
/// changes, its callers are put back on the worklist unless already pending.
pub fn analyze_with(ctx: &Context<'_>, order: &[MethodId], seed: Option<&SummaryEnv>) -> Analysis {
    let mut env: SummaryEnv = ctx
        .program
        .method_ids()
        .iter()
        .map(|m| {
            let init = seed.and_then(|s| s.get(m)).cloned().unwrap_or_default();
            (m.clone(), init)
        })
        .collect();
    let mut queue: VecDeque<MethodId> = VecDeque::new();
    let mut pending: HashSet<MethodId> = HashSet::new();
    for m in order {
        if pending.insert(m.clone()) {
            queue.push_back(m.clone());
        }
    }
    let mut calls = 0;
    let mut evals = 0;
    let mut rounds = vec![];
    let mut left_in_round = queue.len();
    while let Some(m) = queue.pop_front() {
        pending.remove(&m);
        let (s, n) = ctx.summarise_counted(&m, &env);
        calls += 1;
        evals += n;
        if env.get(&m) != Some(&s) {
            env.insert(m.clone(), s);
            for caller in ctx.call_graph.callers_of(&m) {
                if pending.insert(caller.clone()) {
                    queue.push_back(caller.clone());
                }
            }
        }
        left_in_round -= 1;
        if left_in_round == 0 {
            rounds.push(snapshot(ctx, &env));
            left_in_round = queue.len();
        }
    }
    Analysis {
        certificate: Certificate::from_env(ctx, &env),
        summarise_calls: calls,
        node_evaluations: evals,
        rounds,
    }
}

fn snapshot(ctx: &Context<'_>, env: &SummaryEnv) -> Round {
    env.iter()
        .map(|(m, d)| (m.clone(), d.encode(ctx.reps())))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Valid,
    Invalid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureReason {
    MissingEntry,
    UnknownEntry,
    SummaryMismatch,
    DigestMismatch,
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailureReason::MissingEntry => "missing-entry",
            FailureReason::UnknownEntry => "unknown-entry",
            FailureReason::SummaryMismatch => "summary-mismatch",
            FailureReason::DigestMismatch => "digest-mismatch",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Failure {
    pub method: Option<MethodId>,
    pub reason: FailureReason,
    /// Pairs the recomputed summary has but the certificate lacks.
    pub missing: Vec<(String, String)>,
    /// Pairs the certificate claims but the recomputed summary lacks.
    pub unexpected: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckResult {
    pub verdict: Verdict,
    pub failure: Option<Failure>,
    pub summarise_calls: usize,
}

impl CheckResult {
    pub fn is_valid(&self) -> bool {
        self.verdict == Verdict::Valid
    }

    fn invalid(failure: Failure, calls: usize) -> Self {
        CheckResult {
            verdict: Verdict::Invalid,
            failure: Some(failure),
            summarise_calls: calls,
        }
    }
}

/// Validate a certificate with one summary recomputation per method, reading
/// callee summaries from the certificate itself.
///
/// With `parallel`, methods are checked concurrently and the failure with the
/// lowest method id is reported.
pub fn check(p: &Program, cert: &Certificate, parallel: bool) -> Result<CheckResult, crate::Error> {
    let mut ctx = Context::new(p)?;
    Ok(check_in(&mut ctx, cert, parallel))
}

pub fn check_in(ctx: &mut Context<'_>, cert: &Certificate, parallel: bool) -> CheckResult {
    if cert.digest != ctx.program.digest() {
        return CheckResult::invalid(
            Failure {
                method: None,
                reason: FailureReason::DigestMismatch,
                missing: vec![],
                unexpected: vec![],
            },
            0,
        );
    }
    if let Some(m) = ctx
        .program
        .method_ids()
        .iter()
        .find(|m| !cert.entries.contains_key(*m))
    {
        return CheckResult::invalid(
            Failure {
                method: Some(m.clone()),
                reason: FailureReason::MissingEntry,
                missing: vec![],
                unexpected: vec![],
            },
            0,
        );
    }
    if let Some(m) = cert
        .entries
        .keys()
        .find(|m| ctx.program.method_ids().binary_search(m).is_err())
    {
        return CheckResult::invalid(
            Failure {
                method: Some(m.clone()),
                reason: FailureReason::UnknownEntry,
                missing: vec![],
                unexpected: vec![],
            },
            0,
        );
    }
    let env = cert.to_env(ctx);
    let ctx = &*ctx;
    let check_one = |m: &MethodId| -> Option<Failure> {
        let s = ctx.summarise(m, &env);
        (Some(&s) != env.get(m)).then(|| diff(ctx, m, &s, &env[m]))
    };
    let ids = ctx.program.method_ids();
    if parallel {
        let failures: Vec<Option<Failure>> = ids.par_iter().map(check_one).collect();
        let calls = failures.len();
        match failures.into_iter().flatten().next() {
            Some(f) => CheckResult::invalid(f, calls),
            None => CheckResult {
                verdict: Verdict::Valid,
                failure: None,
                summarise_calls: calls,
            },
        }
    } else {
        for (i, m) in ids.iter().enumerate() {
            if let Some(f) = check_one(m) {
                return CheckResult::invalid(f, i + 1);
            }
        }
        CheckResult {
            verdict: Verdict::Valid,
            failure: None,
            summarise_calls: ids.len(),
        }
    }
}

fn diff(ctx: &Context<'_>, m: &MethodId, actual: &FactSet, claimed: &FactSet) -> Failure {
    let a = actual.encode(ctx.reps());
    let c = claimed.encode(ctx.reps());
    Failure {
        method: Some(m.clone()),
        reason: FailureReason::SummaryMismatch,
        missing: a.difference(&c).cloned().collect(),
        unexpected: c.difference(&a).cloned().collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Leak {
    pub method: MethodId,
    pub sink: String,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LeakReport {
    pub leaks: Vec<Leak>,
    pub entry_only: bool,
}

/// Source-to-sink pairs recorded in the certificate, optionally restricted to entry points.
pub fn leaks(cert: &Certificate, p: &Program, entry_only: bool) -> LeakReport {
    let sinks = p.config.sink_symbols();
    let sources = p.config.source_symbols();
    let mut out = vec![];
    for (m, entry) in &cert.entries {
        if entry_only && !p.config.entries.contains(m) {
            continue;
        }
        for (a, b) in entry {
            let (Some(Representative::Sym(snk)), Some(Representative::Sym(src))) =
                (Representative::decode(a), Representative::decode(b))
            else {
                continue;
            };
            if sinks.contains(snk.as_str()) && sources.contains(src.as_str()) {
                out.push(Leak {
                    method: m.clone(),
                    sink: snk,
                    source: src,
                });
            }
        }
    }
    out.sort();
    LeakReport {
        leaks: out,
        entry_only,
    }
}
