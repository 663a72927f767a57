use std::collections::BTreeSet;

use flowcert::certify::{
    analyze, analyze_with, check, check_in, leaks, Certificate, FailureReason, Verdict,
};
use flowcert::corpus::{dyn_taint_run, fixture, FIXTURES};
use flowcert::dataflow::Context;
use flowcert::ir::{parse_program, MethodId};

fn mid(s: &str) -> MethodId {
    MethodId::parse(s).unwrap()
}

#[test]
fn every_fixture_reproduces_its_certificate() {
    for f in FIXTURES {
        let p = parse_program(f.ir, f.config).unwrap();
        let ctx = Context::new(&p).unwrap();
        assert_eq!(analyze(&ctx).certificate.encode(), f.cert, "{}", f.name);
    }
}

#[test]
fn stored_certificates_check_in_both_modes() {
    for f in FIXTURES {
        let p = parse_program(f.ir, f.config).unwrap();
        let cert = Certificate::decode(f.cert).unwrap();
        for parallel in [false, true] {
            let r = check(&p, &cert, parallel).unwrap();
            assert_eq!(r.verdict, Verdict::Valid, "{} parallel={parallel}", f.name);
            assert_eq!(r.summarise_calls, p.method_ids().len());
        }
    }
}

#[test]
fn leak_example_reports_the_identifier_leak() {
    let f = fixture("leak_chain").unwrap();
    let p = parse_program(f.ir, f.config).unwrap();
    let cert = Certificate::decode(f.cert).unwrap();
    let at_entry = leaks(&cert, &p, true);
    assert_eq!(at_entry.leaks.len(), 1);
    assert_eq!(at_entry.leaks[0].method, mid("App.foo/1"));
    assert_eq!(
        (
            at_entry.leaks[0].source.as_str(),
            at_entry.leaks[0].sink.as_str()
        ),
        ("id", "sms")
    );
    let everywhere = leaks(&cert, &p, false);
    let methods: Vec<_> = everywhere
        .leaks
        .iter()
        .map(|l| l.method.to_string())
        .collect();
    assert_eq!(methods, ["App.bar/1", "App.foo/1"]);
}

#[test]
fn fixtures_without_leaks_report_none() {
    let f = fixture("library_models").unwrap();
    let p = parse_program(f.ir, f.config).unwrap();
    let cert = Certificate::decode(f.cert).unwrap();
    // The pure call launders nothing through `clean`, but `wrap` still leaks.
    assert_eq!(leaks(&cert, &p, true).leaks.len(), 1);
    assert!(cert.entries[&mid("Lib.clean/2")].is_empty());
}

#[test]
fn missing_entry_names_the_method() {
    let f = fixture("leak_chain").unwrap();
    let p = parse_program(f.ir, f.config).unwrap();
    let mut cert = Certificate::decode(f.cert).unwrap();
    cert.entries.remove(&mid("App.getNumber/1"));
    let r = check(&p, &cert, false).unwrap();
    let failure = r.failure.unwrap();
    assert_eq!(failure.reason, FailureReason::MissingEntry);
    assert_eq!(failure.method, Some(mid("App.getNumber/1")));
}

#[test]
fn mismatch_reports_the_diff() {
    let f = fixture("leak_chain").unwrap();
    let p = parse_program(f.ir, f.config).unwrap();
    let mut cert = Certificate::decode(f.cert).unwrap();
    let send = cert.entries.get_mut(&mid("App.Send/2")).unwrap();
    send.clear();
    send.insert(("sym:sms".into(), "p:0".into()));
    let r = check(&p, &cert, false).unwrap();
    let failure = r.failure.unwrap();
    assert_eq!(failure.reason, FailureReason::SummaryMismatch);
    assert_eq!(failure.method, Some(mid("App.Send/2")));
    assert_eq!(
        failure.missing,
        [("sym:sms".to_string(), "p:1".to_string())]
    );
    assert_eq!(
        failure.unexpected,
        [("sym:sms".to_string(), "p:0".to_string())]
    );
}

#[test]
fn parallel_check_reports_the_same_failure() {
    let f = fixture("leak_chain").unwrap();
    let p = parse_program(f.ir, f.config).unwrap();
    let mut cert = Certificate::decode(f.cert).unwrap();
    for m in ["App.bar/1", "App.getId/1"] {
        cert.entries.get_mut(&mid(m)).unwrap().clear();
    }
    let seq = check(&p, &cert, false).unwrap();
    let par = check(&p, &cert, true).unwrap();
    assert_eq!(seq.failure, par.failure);
    assert_eq!(par.summarise_calls, p.method_ids().len());
}

#[test]
fn certificate_is_bound_to_the_program_text() {
    let f = fixture("leak_chain").unwrap();
    let edited = format!("{}\n# trailing comment\n", f.ir);
    let p = parse_program(&edited, f.config).unwrap();
    let cert = Certificate::decode(f.cert).unwrap();
    let r = check(&p, &cert, false).unwrap();
    assert_eq!(r.failure.unwrap().reason, FailureReason::DigestMismatch);
    assert_eq!(r.summarise_calls, 0);
}

#[test]
fn entries_for_unknown_methods_are_rejected() {
    let f = fixture("dispatch").unwrap();
    let p = parse_program(f.ir, f.config).unwrap();
    let mut cert = Certificate::decode(f.cert).unwrap();
    cert.entries.insert(mid("Channel.emit/2"), BTreeSet::new());
    let r = check(&p, &cert, false).unwrap();
    assert_eq!(r.failure.unwrap().reason, FailureReason::UnknownEntry);
}

#[test]
fn reanalysis_from_a_valid_certificate_is_one_pass() {
    for f in FIXTURES {
        let p = parse_program(f.ir, f.config).unwrap();
        let mut ctx = Context::new(&p).unwrap();
        let cert = Certificate::decode(f.cert).unwrap();
        let env = cert.to_env(&mut ctx);
        let order = flowcert::certify::callers_first_order(&ctx);
        let again = analyze_with(&ctx, &order, Some(&env));
        assert_eq!(again.summarise_calls, p.method_ids().len(), "{}", f.name);
        assert_eq!(again.certificate, cert, "{}", f.name);
    }
}

#[test]
fn recursion_converges_with_a_shared_summary() {
    let f = fixture("recursion").unwrap();
    let cert = Certificate::decode(f.cert).unwrap();
    assert_eq!(
        cert.entries[&mid("Rec.ping/3")],
        cert.entries[&mid("Rec.pong/3")]
    );
}

#[test]
fn dispatch_covers_every_implementation() {
    let f = fixture("dispatch").unwrap();
    let p = parse_program(f.ir, f.config).unwrap();
    let ctx = Context::new(&p).unwrap();
    let callees: Vec<String> = ctx
        .call_graph
        .callees_of(&mid("Disp.relay/3"))
        .map(|m| m.to_string())
        .collect();
    assert_eq!(callees, ["Loud.emit/2", "Quiet.emit/2"]);
    // At run time only the quiet channel is used.
    let trace = dyn_taint_run(&ctx, &mid("Disp.main/1"), 10_000).unwrap();
    assert!(trace
        .call_edges
        .contains(&(mid("Disp.relay/3"), mid("Quiet.emit/2"))));
    assert!(!trace
        .call_edges
        .contains(&(mid("Disp.relay/3"), mid("Loud.emit/2"))));
}

#[test]
fn oracle_sees_the_example_leak() {
    let f = fixture("leak_chain").unwrap();
    let p = parse_program(f.ir, f.config).unwrap();
    let ctx = Context::new(&p).unwrap();
    let trace = dyn_taint_run(&ctx, &mid("App.foo/1"), 10_000).unwrap();
    let foo = &trace.flows[&mid("App.foo/1")];
    assert!(foo.contains(&("sym:sms".into(), "sym:id".into())));
    assert!(foo.contains(&("ret".into(), "sym:num".into())));
}

#[test]
fn check_in_reuses_a_context() {
    let f = fixture("arrays").unwrap();
    let p = parse_program(f.ir, f.config).unwrap();
    let mut ctx = Context::new(&p).unwrap();
    let cert = analyze(&ctx).certificate;
    for _ in 0..3 {
        assert!(check_in(&mut ctx, &cert, false).is_valid());
    }
}
