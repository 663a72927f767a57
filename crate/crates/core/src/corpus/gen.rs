//! Seeded generator of synthetic programs with a deep call structure.
//!
//! Methods are arranged in levels `0..=depth`. A chain `m0 → … → m_depth`
//! threads a source value from the deepest level up to a sink call in the
//! root `m0`; every other method hangs off a random method one level up and
//! may call further into deeper levels. All calls go strictly deeper, so
//! generated programs always terminate.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenSpec {
    pub method_count: usize,
    pub call_chain_depth: usize,
    pub fan_out: usize,
    pub stmts_per_method: usize,
    pub branch_density: f64,
    pub array_field_density: f64,
    pub seed: u64,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec {
            method_count: 8,
            call_chain_depth: 3,
            fan_out: 2,
            stmts_per_method: 8,
            branch_density: 0.2,
            array_field_density: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenError {
    #[error("infeasible generator spec: {0}")]
    Infeasible(String),
}

/// A generated program and its taint configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generated {
    pub ir: String,
    pub config: String,
}

pub const ENTRY: &str = "Gen.m0/4";

const CONFIG: &str =
    "source Device.id/1 id\nsource Device.number/1 num\nsink Net.send/2 net\nentry Gen.m0/4\n";

const PRELUDE: &str = "\
extern class Device {
  method id/1(this) -> String
  method number/1(this) -> String
}
extern class Net {
  method send/2(this, s: String)
}
extern class Buf {
  method append/2(this, s: String) -> Buf
  method text/1(this) -> String
}
";

const VALUES: usize = 4;
const STRING_FIELDS: usize = 3;
const ARRAY_FIELDS: usize = 2;
/// Generous upper bound on method count, so text size stays manageable.
const MAX_METHODS: usize = 1_000_000;

pub fn generate(spec: &GenSpec) -> Result<Generated, GenError> {
    let bad = |m: &str| Err(GenError::Infeasible(m.to_string()));
    if spec.method_count == 0 || spec.fan_out == 0 || spec.stmts_per_method == 0 {
        return bad("method count, fan-out and statements per method must be positive");
    }
    if spec.method_count > MAX_METHODS {
        return bad("method count too large");
    }
    if spec.method_count < spec.call_chain_depth + 1 {
        return bad("a chain of depth d needs at least d + 1 methods");
    }
    for d in [spec.branch_density, spec.array_field_density] {
        if !(0.0..=1.0).contains(&d) {
            return bad("densities must lie in [0, 1]");
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let depth = spec.call_chain_depth;

    // Level of every method; methods 0..=depth form the chain.
    let mut level: Vec<usize> = (0..=depth).collect();
    for _ in depth + 1..spec.method_count {
        level.push(if depth == 0 {
            0
        } else {
            rng.gen_range(1..=depth)
        });
    }
    let mut by_level: Vec<Vec<usize>> = vec![vec![]; depth + 1];
    for (m, &l) in level.iter().enumerate() {
        by_level[l].push(m);
    }
    // Calls of every method: chain child, adopted children, random deeper callees.
    let mut calls: Vec<Vec<usize>> = vec![vec![]; spec.method_count];
    for (m, c) in calls.iter_mut().enumerate().take(depth) {
        c.push(m + 1);
    }
    for (m, &l) in level.iter().enumerate().skip(depth + 1) {
        if l == 0 {
            continue;
        }
        let parent = *by_level[l - 1].choose(&mut rng).unwrap();
        calls[parent].push(m);
    }
    for m in 0..spec.method_count {
        let l = level[m];
        if l == depth {
            continue;
        }
        for _ in 1..spec.fan_out {
            let tl = rng.gen_range(l + 1..=depth);
            let callee = *by_level[tl].choose(&mut rng).unwrap();
            if !calls[m].contains(&callee) {
                calls[m].push(callee);
            }
        }
    }

    let mut out = String::from(PRELUDE);
    out.push_str("class Holder {\n");
    for i in 0..STRING_FIELDS {
        let _ = writeln!(out, "  field s{i}: String");
    }
    for i in 0..ARRAY_FIELDS {
        let _ = writeln!(out, "  field a{i}: String[]");
    }
    out.push_str("}\nclass Gen {\n");
    for m in 0..spec.method_count {
        let leaf = level[m] == depth || (m > depth && calls[m].is_empty());
        MethodGen {
            rng: &mut rng,
            spec,
            out: &mut out,
            labels: 0,
        }
        .method(m, &calls[m], leaf);
    }
    out.push_str("}\n");
    Ok(Generated {
        ir: out,
        config: CONFIG.to_string(),
    })
}

struct MethodGen<'a> {
    rng: &'a mut ChaCha8Rng,
    spec: &'a GenSpec,
    out: &'a mut String,
    labels: usize,
}

impl MethodGen<'_> {
    fn line(&mut self, s: &str) {
        self.out.push_str("    ");
        self.out.push_str(s);
        self.out.push('\n');
    }

    fn value(&mut self) -> String {
        format!("v{}", self.rng.gen_range(0..VALUES))
    }

    fn method(&mut self, m: usize, calls: &[usize], leaf: bool) {
        let _ = writeln!(
            self.out,
            "  method m{m}(this, p: String, n: int, h: Holder) -> String {{"
        );
        for i in 0..VALUES {
            self.line(&format!("var v{i}: String"));
        }
        for decl in [
            "var r: String",
            "var res: String",
            "var g: String",
            "var t: int",
            "var arr: String[]",
            "var b: Buf",
            "var b2: Buf",
            "var d: Device",
            "var net: Net",
        ] {
            self.line(decl);
        }
        self.line("v0 := p");
        self.line("t := const 0");
        if m == 0 {
            // The root owns the holder's arrays so element accesses never hit null.
            for i in 0..ARRAY_FIELDS {
                self.line("t := const 2");
                self.line("arr := call Array.new/1(t)");
                self.line(&format!("h.a{i} := arr"));
            }
            self.line("t := const 0");
        }
        if leaf {
            let src = if self.rng.gen_bool(0.5) {
                "id"
            } else {
                "number"
            };
            self.line("d := call Device.new/0()");
            self.line(&format!("r := call Device.{src}/1(d)"));
        } else {
            self.line("r := const \"\"");
        }

        // Random filler interleaved with the calls; the first call is the chain child.
        let mut slots: Vec<Option<usize>> = calls.iter().copied().map(Some).collect();
        slots.extend(std::iter::repeat_n(None, self.spec.stmts_per_method));
        if slots.len() > 1 {
            slots[1..].shuffle(self.rng);
        }
        let mut open: Vec<(String, usize)> = vec![];
        let mut guard_taken = false;
        for slot in slots {
            match slot {
                Some(c) => {
                    let arg = self.value();
                    let dst = if calls.first() == Some(&c) {
                        "r".to_string()
                    } else {
                        self.value()
                    };
                    self.line(&format!("{dst} := call Gen.m{c}/4(this, {arg}, n, h)"));
                }
                None => self.filler(&mut open, &mut guard_taken),
            }
            self.close_labels(&mut open);
        }
        for (l, _) in open.drain(..) {
            self.line(&format!("label {l}"));
        }

        let mix = self.value();
        self.line(&format!("res := r add {mix}"));
        if m == 0 {
            self.line("net := call Net.new/0()");
            self.line("call Net.send/2(net, r)");
            self.line("g := const \"fixed\"");
            self.line("call Net.send/2(net, g)");
        }
        self.line("return res");
        self.out.push_str("  }\n");
    }

    fn close_labels(&mut self, open: &mut Vec<(String, usize)>) {
        for o in open.iter_mut() {
            o.1 -= 1;
        }
        while let Some(pos) = open.iter().position(|o| o.1 == 0) {
            let (l, _) = open.remove(pos);
            self.line(&format!("label {l}"));
        }
    }

    fn filler(&mut self, open: &mut Vec<(String, usize)>, guard_taken: &mut bool) {
        if self.rng.gen_bool(self.spec.branch_density) {
            let label = format!("L{}", self.labels);
            self.labels += 1;
            // Condition variables are never reassigned after their test.
            let cond = if !*guard_taken && self.rng.gen_bool(0.5) {
                *guard_taken = true;
                let v = self.value();
                self.line(&format!("g := {v}"));
                "g"
            } else {
                "n"
            };
            let op = [">", "<", "="][self.rng.gen_range(0..3)];
            self.line(&format!("if {cond} {op} 0 goto {label}"));
            let span = self.rng.gen_range(1..=3);
            open.push((label, span + 1));
            return;
        }
        if self.rng.gen_bool(self.spec.array_field_density) {
            let a = self.rng.gen_range(0..ARRAY_FIELDS);
            let v = self.value();
            self.line(&format!("arr := h.a{a}"));
            if self.rng.gen_bool(0.5) {
                self.line(&format!("arr[t] := {v}"));
            } else {
                self.line(&format!("{v} := arr[t]"));
            }
            return;
        }
        let (x, y, z) = (self.value(), self.value(), self.value());
        let f = self.rng.gen_range(0..STRING_FIELDS);
        let s = match self.rng.gen_range(0..8) {
            0 => format!("{x} := {y}"),
            1 => format!("{x} := {y} add {z}"),
            2 => format!("{x} := const \"k\""),
            3 => format!("h.s{f} := {y}"),
            4 => format!("{x} := h.s{f}"),
            5 => format!("b := call Buf.new/0()\n    b2 := call Buf.append/2(b, {y})\n    {x} := call Buf.text/1(b)"),
            6 => format!("{x} := r add {y}"),
            _ => format!("{x} := p"),
        };
        self.line(&s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_program;

    #[test]
    fn same_seed_same_text() {
        let spec = GenSpec {
            seed: 42,
            ..GenSpec::default()
        };
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = GenSpec { seed: 43, ..spec };
        assert_ne!(generate(&spec).unwrap().ir, generate(&other).unwrap().ir);
    }

    #[test]
    fn chain_of_depth_three() {
        let spec = GenSpec {
            method_count: 4,
            call_chain_depth: 3,
            fan_out: 1,
            ..GenSpec::default()
        };
        let g = generate(&spec).unwrap();
        let p = parse_program(&g.ir, &g.config).unwrap();
        assert_eq!(p.methods().len(), 4);
    }

    #[test]
    fn single_straight_line_method() {
        let spec = GenSpec {
            method_count: 1,
            call_chain_depth: 0,
            fan_out: 1,
            branch_density: 0.0,
            ..GenSpec::default()
        };
        let g = generate(&spec).unwrap();
        let p = parse_program(&g.ir, &g.config).unwrap();
        let m = p.methods().next().unwrap();
        assert!(m.body().iter().all(|s| !matches!(
            s.kind,
            crate::ir::StmtKind::If { .. } | crate::ir::StmtKind::Goto { .. }
        )));
        assert!(!m.body().iter().any(|s| matches!(
            &s.kind,
            crate::ir::StmtKind::Call { callee, .. } if callee.class() == "Gen"
        )));
    }

    #[test]
    fn infeasible_specs_rejected() {
        for spec in [
            GenSpec {
                method_count: 0,
                ..GenSpec::default()
            },
            GenSpec {
                method_count: 3,
                call_chain_depth: 3,
                ..GenSpec::default()
            },
            GenSpec {
                fan_out: 0,
                ..GenSpec::default()
            },
            GenSpec {
                branch_density: 1.5,
                ..GenSpec::default()
            },
        ] {
            assert!(generate(&spec).is_err(), "{spec:?}");
        }
    }

    #[test]
    fn many_seeds_parse() {
        for seed in 0..50 {
            let spec = GenSpec {
                method_count: 20,
                call_chain_depth: 5,
                fan_out: 3,
                stmts_per_method: 12,
                branch_density: 0.3,
                array_field_density: 0.3,
                seed,
            };
            let g = generate(&spec).unwrap();
            parse_program(&g.ir, &g.config)
                .unwrap_or_else(|e| panic!("seed {seed}: {e}\n{}", g.ir));
        }
    }
}
