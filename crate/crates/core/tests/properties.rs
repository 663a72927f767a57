use std::collections::BTreeSet;

use proptest::prelude::*;

use flowcert::alias::Representative;
use flowcert::certify::{analyze, check_in, Certificate};
use flowcert::corpus::gen::ENTRY;
use flowcert::corpus::{dyn_taint_run, generate, GenSpec};
use flowcert::dataflow::{Context, FactSet, SummaryEnv};
use flowcert::ir::{parse_program, MethodId, Program};

fn spec_strategy() -> impl Strategy<Value = GenSpec> {
    (
        3usize..25,
        1usize..5,
        1usize..4,
        1usize..10,
        0.0f64..0.6,
        0.0f64..0.6,
        any::<u64>(),
    )
        .prop_map(|(n, d, fan_out, stmts, branch, array, seed)| GenSpec {
            method_count: n.max(d + 1),
            call_chain_depth: d,
            fan_out,
            stmts_per_method: stmts,
            branch_density: branch,
            array_field_density: array,
            seed,
        })
}

fn program(spec: &GenSpec) -> Program {
    let g = generate(spec).unwrap();
    parse_program(&g.ir, &g.config).unwrap()
}

fn rep_strategy() -> impl Strategy<Value = Representative> {
    let ident = "[a-z][a-z0-9_]{0,5}";
    prop_oneof![
        (ident, ident, 0usize..4, ident).prop_map(|(c, m, n, x)| Representative::Var {
            method: MethodId::new(&c.to_uppercase(), &m, n),
            name: x,
        }),
        (0usize..8).prop_map(Representative::Param),
        Just(Representative::Ret),
        (ident, ident).prop_map(|(c, f)| Representative::Field {
            class: c.to_uppercase(),
            field: f,
        }),
        (ident, ident, ident).prop_map(|(c, m, x)| Representative::Array(format!(
            "{}.{m}/1::{x}",
            c.to_uppercase()
        ))),
        ident.prop_map(Representative::Sym),
    ]
}

type Pairs = Vec<(String, String)>;

/// A subset of `pool`, chosen by `mask`, and a superset of it.
fn nested(pool: &[(String, String)], mask: &[bool], extra: &[bool]) -> (Pairs, Pairs) {
    let small: Vec<_> = pool
        .iter()
        .zip(mask)
        .filter(|(_, &b)| b)
        .map(|(p, _)| p.clone())
        .collect();
    let large: Vec<_> = pool
        .iter()
        .zip(mask.iter().zip(extra))
        .filter(|(_, (&a, &b))| a || b)
        .map(|(p, _)| p.clone())
        .collect();
    (small, large)
}

fn decode(ctx: &mut Context<'_>, pairs: &[(String, String)]) -> FactSet {
    let reps: Vec<(Representative, Representative)> = pairs
        .iter()
        .map(|(a, b)| {
            (
                Representative::decode(a).unwrap(),
                Representative::decode(b).unwrap(),
            )
        })
        .collect();
    ctx.decode_facts(reps.iter().map(|(a, b)| (a, b)))
}

const SMALL: &str = "
extern class Ext {
  method get/2(this, s: String) -> String
}
class S {
  field f: String
  method m/3(this, a: String, n: int) -> String {
    var x: String
    var y: String
    var o: S
    var e: Ext
    var arr: String[]
    x := const \"k\"
    y := a
    if n > 0 goto L
    x := y add a
    o.f := x
    arr[n] := y
    y := arr[n]
    label L
    x := o.f
    y := call Ext.get/2(e, x)
    return y
  }
}
";

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn printing_round_trips(spec in spec_strategy()) {
        let p = program(&spec);
        let text = p.to_string();
        let q = parse_program(&text, &generate(&spec).unwrap().config).unwrap();
        prop_assert_eq!(text, q.to_string());
        prop_assert_eq!(p.classes, q.classes);
    }

    #[test]
    fn representative_encoding_is_injective(a in rep_strategy(), b in rep_strategy()) {
        prop_assert_eq!(Representative::decode(&a.to_string()), Some(a.clone()));
        prop_assert_eq!(a == b, a.to_string() == b.to_string());
    }

    #[test]
    fn transfer_is_monotone(mask in proptest::collection::vec(any::<bool>(), 36), extra in proptest::collection::vec(any::<bool>(), 36)) {
        let p = parse_program(SMALL, "").unwrap();
        let mut ctx = Context::new(&p).unwrap();
        let m = MethodId::new("S", "m", 3);
        let reps = ["v:S.m/3::x", "v:S.m/3::y", "p:1", "f:S.f", "arr:S.m/3::arr", "v:S.m/3::e"];
        let pool: Vec<(String, String)> = reps
            .iter()
            .flat_map(|a| reps.iter().map(move |b| (a.to_string(), b.to_string())))
            .collect();
        let (small, large) = nested(&pool, &mask, &extra);
        let (d, d2) = (decode(&mut ctx, &small), decode(&mut ctx, &large));
        for s in 0..p.methods().next().unwrap().body().len() {
            let a = ctx.transfer(&d, &m, s, &SummaryEnv::new());
            let b = ctx.transfer(&d2, &m, s, &SummaryEnv::new());
            prop_assert!(a.is_subset(&b), "statement {}", s);
        }
    }

    #[test]
    fn summaries_are_monotone_in_the_environment(spec in spec_strategy(), picks in proptest::collection::vec((any::<prop::sample::Index>(), any::<prop::sample::Index>(), any::<prop::sample::Index>()), 0..12)) {
        let p = program(&spec);
        let mut ctx = Context::new(&p).unwrap();
        let cert = analyze(&ctx).certificate;
        let env = cert.to_env(&mut ctx);
        let ids = p.method_ids().to_vec();
        let pool = ["p:0", "p:1", "p:2", "p:3", "ret", "sym:id", "sym:num", "sym:net", "f:Holder.s0"];
        let mut bigger = cert.clone();
        for (m, a, b) in picks {
            let m = &ids[m.index(ids.len())];
            bigger.entries.get_mut(m).unwrap().insert((a.get(&pool).to_string(), b.get(&pool).to_string()));
        }
        let env2 = bigger.to_env(&mut ctx);
        for m in &ids {
            let (small, _) = ctx.summarise_raw(m, &env);
            let (large, _) = ctx.summarise_raw(m, &env2);
            prop_assert!(small.is_subset(&large), "{}", m);
        }
    }

    #[test]
    fn evaluations_are_bounded(spec in spec_strategy()) {
        let p = program(&spec);
        let ctx = Context::new(&p).unwrap();
        let env = analyze(&ctx).certificate;
        let mut ctx = ctx;
        let env = env.to_env(&mut ctx);
        let reps = ctx.reps().len();
        for m in p.method_ids() {
            let (_, evals) = ctx.summarise_counted(m, &env);
            let nodes = ctx.cfg(m).unwrap().len();
            prop_assert!(evals <= nodes * reps * reps, "{} evals for {} nodes", evals, nodes);
        }
    }

    #[test]
    fn generated_programs_round_trip_and_are_sound(spec in spec_strategy()) {
        let p = program(&spec);
        let mut ctx = Context::new(&p).unwrap();
        let a = analyze(&ctx);
        let decoded = Certificate::decode(&a.certificate.encode()).unwrap();
        let r = check_in(&mut ctx, &decoded, false);
        prop_assert!(r.is_valid());
        prop_assert_eq!(r.summarise_calls, p.method_ids().len());

        let trace = dyn_taint_run(&ctx, &MethodId::parse(ENTRY).unwrap(), 1_000_000).unwrap();
        for (m, flows) in &trace.flows {
            let claimed = &a.certificate.entries[m];
            prop_assert!(flows.is_subset(claimed), "{}: {:?} not in {:?}", m, flows, claimed);
        }
        let edges: BTreeSet<_> = ctx.call_graph.edges().clone();
        prop_assert!(trace.call_edges.is_subset(&edges));
    }

    #[test]
    fn summaries_never_mention_own_locals(spec in spec_strategy()) {
        let p = program(&spec);
        let ctx = Context::new(&p).unwrap();
        let cert = analyze(&ctx).certificate;
        for (m, entry) in &cert.entries {
            let own = format!("v:{m}::");
            for (a, b) in entry {
                prop_assert!(a != b);
                prop_assert!(!a.starts_with(&own) && !b.starts_with(&own));
            }
        }
    }
}
