//! Analyze-versus-check timing on generated programs.

use std::time::{Duration, Instant};

use serde::Serialize;

use crate::certify::{analyze, check_in};
use crate::corpus::gen::{generate, GenSpec};
use crate::dataflow::Context;
use crate::ir::parse_program;

/// One row of the benchmark table. Times are medians over the repetitions
/// and exclude parsing and graph construction.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub methods: usize,
    pub depth: usize,
    pub analyze_ms: f64,
    pub check_ms: f64,
    pub ratio: f64,
    pub analyze_summarise_calls: usize,
    pub check_summarise_calls: usize,
    pub valid: bool,
}

/// Chain depth used for a corpus of `n` methods.
pub fn default_depth(n: usize) -> usize {
    ((n as f64).sqrt().round() as usize)
        .max(20)
        .min(n.saturating_sub(1))
}

pub fn bench_row(spec: &GenSpec, repetitions: usize) -> Result<BenchRow, crate::Error> {
    let g = generate(spec)?;
    let p = parse_program(&g.ir, &g.config)?;
    let mut ctx = Context::new(&p)?;
    let mut analyze_times = vec![];
    let mut check_times = vec![];
    let mut analysis = None;
    let mut checked = None;
    for _ in 0..repetitions.max(1) {
        let t = Instant::now();
        let a = analyze(&ctx);
        analyze_times.push(t.elapsed());
        let t = Instant::now();
        let c = check_in(&mut ctx, &a.certificate, false);
        check_times.push(t.elapsed());
        analysis = Some(a);
        checked = Some(c);
    }
    let (a, c) = (analysis.unwrap(), checked.unwrap());
    let analyze_ms = median_ms(&mut analyze_times);
    let check_ms = median_ms(&mut check_times);
    Ok(BenchRow {
        methods: spec.method_count,
        depth: spec.call_chain_depth,
        analyze_ms,
        check_ms,
        ratio: analyze_ms / check_ms.max(1e-9),
        analyze_summarise_calls: a.summarise_calls,
        check_summarise_calls: c.summarise_calls,
        valid: c.is_valid(),
    })
}

fn median_ms(v: &mut [Duration]) -> f64 {
    v.sort();
    v[v.len() / 2].as_secs_f64() * 1e3
}

pub fn to_tsv(rows: &[BenchRow]) -> String {
    let mut out = String::from(
        "methods\tdepth\tanalyze_ms\tcheck_ms\tratio\tanalyze_summarise\tcheck_summarise\tvalid\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{:.3}\t{:.3}\t{:.2}\t{}\t{}\t{}\n",
            r.methods,
            r.depth,
            r.analyze_ms,
            r.check_ms,
            r.ratio,
            r.analyze_summarise_calls,
            r.check_summarise_calls,
            r.valid
        ));
    }
    out
}
