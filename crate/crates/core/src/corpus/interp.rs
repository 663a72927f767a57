//! Concrete interpreter with taint labels, used as a soundness oracle.
//!
//! Every value carries labels `(invocation, origin)`: an origin is the
//! representative whose entry value reached it within that invocation (a
//! formal, a field or array set read before the invocation wrote it, or a
//! source symbol). Observations are made where the summary of a method says
//! something: at returns, at writes to fields and array elements, and at sink
//! calls. Each observation is attributed to every invocation still active.
//!
//! Only values are tracked: reading `a[i]` or `o.f` yields the labels of the
//! cell, not of the reference or the index.
//!
//! Implicit flows are tracked within a frame: an assignment picks up the
//! labels the condition variables of its controlling predicates had when
//! those predicates last ran.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::alias::{representative, LValue, Representative};
use crate::dataflow::Context;
use crate::ir::{BinOp, Cond, Literal, Method, MethodId, StmtKind, TypeName, UnOp, ALLOC, ARRAY};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DynError {
    #[error("step budget of {0} exhausted")]
    Budget(usize),
    #[error("runtime error in {method} line {line}: {msg}")]
    Runtime {
        method: MethodId,
        line: usize,
        msg: String,
    },
    #[error("unknown entry method `{0}`")]
    UnknownEntry(MethodId),
}

/// Flows observed per method, and call edges taken.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DynTrace {
    pub flows: BTreeMap<MethodId, BTreeSet<(String, String)>>,
    pub call_edges: BTreeSet<(MethodId, MethodId)>,
}

type Label = (usize, Representative);
type Labels = BTreeSet<Label>;

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Int(i64),
    Str(String),
    Null,
    Obj(usize),
    Arr(usize),
}

#[derive(Debug, Clone)]
struct Cell {
    value: Value,
    labels: Labels,
    written: u64,
}

impl Cell {
    fn fresh(value: Value) -> Self {
        Cell {
            value,
            labels: Labels::new(),
            written: 0,
        }
    }
}

#[derive(Debug)]
struct Object {
    class: String,
    fields: HashMap<String, Cell>,
}

struct Frame<'m> {
    method: &'m Method,
    vars: HashMap<&'m str, (Value, Labels)>,
    /// Labels of each predicate's condition variable at its last execution, by statement index.
    predicates: HashMap<usize, Labels>,
}

struct Interp<'c, 'p> {
    ctx: &'c Context<'p>,
    budget: usize,
    steps: usize,
    clock: u64,
    rng: u64,
    objects: Vec<Object>,
    arrays: Vec<Vec<Cell>>,
    /// Active invocations: (id, method, start time).
    active: Vec<(usize, MethodId, u64)>,
    next_invocation: usize,
    trace: DynTrace,
}

/// Run `entry` on default arguments: fresh objects for `this` and class-typed
/// formals, `1` for integers, empty strings, and two-element arrays.
pub fn dyn_taint_run(
    ctx: &Context<'_>,
    entry: &MethodId,
    budget: usize,
) -> Result<DynTrace, DynError> {
    let p = ctx.program;
    let m = p
        .method(entry)
        .filter(|m| m.body.is_some())
        .ok_or_else(|| DynError::UnknownEntry(entry.clone()))?;
    let mut it = Interp {
        ctx,
        budget,
        steps: 0,
        clock: 1,
        rng: 0x9e37_79b9_7f4a_7c15,
        objects: vec![],
        arrays: vec![],
        active: vec![],
        next_invocation: 0,
        trace: DynTrace::default(),
    };
    let args: Vec<(Value, Labels)> = m
        .params
        .iter()
        .map(|prm| (it.default_arg(&prm.ty), Labels::new()))
        .collect();
    it.invoke(m, args)?;
    Ok(it.trace)
}

impl<'c, 'p> Interp<'c, 'p> {
    fn default_arg(&mut self, ty: &TypeName) -> Value {
        if ty.is_array() {
            return self.new_array(2);
        }
        match ty.as_str() {
            "String" => Value::Str(String::new()),
            s if ty.is_primitive() || s == "void" => Value::Int(1),
            class => self.new_object(class),
        }
    }

    fn new_object(&mut self, class: &str) -> Value {
        let mut fields = HashMap::new();
        if let Ok(chain) = self.ctx.program.superchain(class) {
            for c in chain {
                for f in &self.ctx.program.class(c).unwrap().fields {
                    let v = if f.ty.is_primitive() {
                        Value::Int(0)
                    } else {
                        Value::Null
                    };
                    fields.entry(f.name.clone()).or_insert(Cell::fresh(v));
                }
            }
        }
        self.objects.push(Object {
            class: class.to_string(),
            fields,
        });
        Value::Obj(self.objects.len() - 1)
    }

    fn new_array(&mut self, len: i64) -> Value {
        let len = len.clamp(1, 64) as usize;
        self.arrays.push(vec![Cell::fresh(Value::Null); len]);
        Value::Arr(self.arrays.len() - 1)
    }

    fn random(&mut self) -> u64 {
        self.rng = self
            .rng
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        self.rng >> 33
    }

    fn result_value(&mut self, ty: &TypeName) -> Option<Value> {
        if ty.is_void() {
            return None;
        }
        if ty.is_array() {
            return Some(self.new_array(2));
        }
        Some(match ty.as_str() {
            "String" => Value::Str("x".repeat((self.random() % 3) as usize)),
            _ if ty.is_primitive() => Value::Int((self.random() % 5) as i64 - 2),
            class => self.new_object(class),
        })
    }

    fn tick(&mut self) -> Result<u64, DynError> {
        self.steps += 1;
        if self.steps > self.budget {
            return Err(DynError::Budget(self.budget));
        }
        self.clock += 1;
        Ok(self.clock)
    }

    /// Record that `labels` flowed into `to`, for every active invocation
    /// (or only the innermost one).
    fn observe(&mut self, to: &Representative, labels: &Labels, innermost: bool) {
        let skip = if innermost { self.active.len() - 1 } else { 0 };
        for (k, m, _) in &self.active[skip..] {
            let set = self.trace.flows.entry(m.clone()).or_default();
            for (inv, origin) in labels {
                if inv == k && origin != to {
                    set.insert((to.to_string(), origin.to_string()));
                }
            }
        }
    }

    /// Labels for reading a heap cell: its own, plus the cell's representative
    /// for every invocation that began before the cell was last written.
    fn read_cell(&self, cell: &Cell, rep: &Representative) -> Labels {
        let mut l = cell.labels.clone();
        for (k, _, start) in &self.active {
            if cell.written < *start {
                l.insert((*k, rep.clone()));
            }
        }
        l
    }

    fn invoke(
        &mut self,
        m: &'p Method,
        args: Vec<(Value, Labels)>,
    ) -> Result<Option<(Value, Labels)>, DynError> {
        let k = self.next_invocation;
        self.next_invocation += 1;
        let start = self.tick()?;
        self.active.push((k, m.id.clone(), start));
        let mut frame = Frame {
            method: m,
            vars: HashMap::new(),
            predicates: HashMap::new(),
        };
        for (i, (prm, (v, mut l))) in m.params.iter().zip(args).enumerate() {
            l.insert((k, Representative::Param(i)));
            frame.vars.insert(prm.name.as_str(), (v, l));
        }
        for loc in &m.locals {
            let v = if loc.ty.is_primitive() {
                Value::Int(0)
            } else {
                Value::Null
            };
            frame.vars.insert(loc.name.as_str(), (v, Labels::new()));
        }
        let result = self.run(&mut frame);
        self.active.pop();
        result
    }

    fn run(&mut self, f: &mut Frame<'p>) -> Result<Option<(Value, Labels)>, DynError> {
        let m = f.method;
        let body = m.body();
        let labels: HashMap<&str, usize> = body
            .iter()
            .enumerate()
            .filter_map(|(i, s)| match &s.kind {
                StmtKind::Label { label } => Some((label.as_str(), i)),
                _ => None,
            })
            .collect();
        let cfg = self.ctx.cfg(&m.id).expect("method has a CFG");
        let deps = self
            .ctx
            .control_deps(&m.id)
            .expect("method has control deps");
        let node_of: HashMap<usize, usize> = cfg
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(n, node)| node.stmt.map(|s| (s, n)))
            .collect();

        let mut pc = 0;
        while pc < body.len() {
            let now = self.tick()?;
            let stmt = &body[pc];
            let err = |msg: String| DynError::Runtime {
                method: m.id.clone(),
                line: stmt.line,
                msg,
            };
            // Implicit-flow labels for this statement.
            let mut implicit = Labels::new();
            if let Some(&n) = node_of.get(&pc) {
                for (p, _) in deps.of(n) {
                    let s = cfg.nodes[*p].stmt.expect("predicates are statements");
                    if let Some(l) = f.predicates.get(&s) {
                        implicit.extend(l.iter().cloned());
                    }
                }
            }
            let get = |f: &Frame<'p>, x: &str| f.vars[x].clone();
            let mut next = pc + 1;
            match &stmt.kind {
                StmtKind::Const { dst, value } => {
                    let v = match value {
                        Literal::Int(i) => Value::Int(*i),
                        Literal::Str(s) => Value::Str(s.clone()),
                        Literal::Null => Value::Null,
                    };
                    f.vars.insert(dst.as_str(), (v, implicit));
                }
                StmtKind::Copy { dst, src } => {
                    let (v, mut l) = get(f, src);
                    l.extend(implicit);
                    f.vars.insert(dst.as_str(), (v, l));
                }
                StmtKind::Unary { dst, op, src } => {
                    let (v, mut l) = get(f, src);
                    let v = match (op, v) {
                        (UnOp::Neg, Value::Int(i)) => Value::Int(i.wrapping_neg()),
                        (UnOp::Not, Value::Int(i)) => Value::Int(!i),
                        (_, other) => other,
                    };
                    l.extend(implicit);
                    f.vars.insert(dst.as_str(), (v, l));
                }
                StmtKind::Binary { dst, op, lhs, rhs } => {
                    let (a, mut l) = get(f, lhs);
                    let (b, lb) = get(f, rhs);
                    l.extend(lb);
                    l.extend(implicit);
                    let v = match (a, b) {
                        (Value::Int(x), Value::Int(y)) => Value::Int(arith(*op, x, y)),
                        (Value::Str(x), Value::Str(y)) => Value::Str(format!("{x}{y}")),
                        _ => Value::Str(String::new()),
                    };
                    f.vars.insert(dst.as_str(), (v, l));
                }
                StmtKind::ArrayRead { dst, array, index } => {
                    let rep = self.rep(m, LValue::Element { array });
                    let (a, _) = get(f, array);
                    let (i, _) = get(f, index);
                    let Value::Arr(a) = a else {
                        return Err(err(format!("`{array}` is not an array")));
                    };
                    let cell = &self.arrays[a][slot(&i, self.arrays[a].len())];
                    let v = cell.value.clone();
                    let mut l = self.read_cell(cell, &rep);
                    l.extend(implicit);
                    f.vars.insert(dst.as_str(), (v, l));
                }
                StmtKind::ArrayWrite { array, index, src } => {
                    let rep = self.rep(m, LValue::Element { array });
                    let (a, _) = get(f, array);
                    let (i, _) = get(f, index);
                    let (v, mut l) = get(f, src);
                    let Value::Arr(a) = a else {
                        return Err(err(format!("`{array}` is not an array")));
                    };
                    l.extend(implicit);
                    self.observe(&rep, &l, false);
                    let len = self.arrays[a].len();
                    self.arrays[a][slot(&i, len)] = Cell {
                        value: v,
                        labels: l,
                        written: now,
                    };
                }
                StmtKind::FieldRead { dst, object, field } => {
                    let rep = self.rep(m, LValue::Field { object, field });
                    let (o, _) = get(f, object);
                    let Value::Obj(o) = o else {
                        return Err(err(format!("`{object}` is not an object")));
                    };
                    let cell = self.objects[o]
                        .fields
                        .get(field.as_str())
                        .ok_or_else(|| err(format!("no field `{field}`")))?;
                    let v = cell.value.clone();
                    let mut l = self.read_cell(cell, &rep);
                    l.extend(implicit);
                    f.vars.insert(dst.as_str(), (v, l));
                }
                StmtKind::FieldWrite { object, field, src } => {
                    let rep = self.rep(m, LValue::Field { object, field });
                    let (o, _) = get(f, object);
                    let (v, mut l) = get(f, src);
                    let Value::Obj(o) = o else {
                        return Err(err(format!("`{object}` is not an object")));
                    };
                    l.extend(implicit);
                    self.observe(&rep, &l, false);
                    let cell = self.objects[o]
                        .fields
                        .get_mut(field.as_str())
                        .ok_or_else(|| err(format!("no field `{field}`")))?;
                    *cell = Cell {
                        value: v,
                        labels: l,
                        written: now,
                    };
                }
                StmtKind::Call { ret, callee, args } => {
                    let actuals: Vec<(Value, Labels)> = args.iter().map(|a| get(f, a)).collect();
                    let result = self.call(m, stmt.line, callee, actuals, &implicit, f, args)?;
                    if let Some(r) = ret {
                        let (v, mut l) =
                            result.ok_or_else(|| err(format!("{callee} returned no value")))?;
                        l.extend(implicit);
                        f.vars.insert(r.as_str(), (v, l));
                    }
                }
                StmtKind::Return { value } => {
                    return Ok(match value {
                        Some(x) => {
                            let (v, mut l) = get(f, x);
                            l.extend(implicit);
                            self.observe(&Representative::Ret, &l, true);
                            Some((v, l))
                        }
                        None => None,
                    });
                }
                StmtKind::Goto { label } => next = labels[label.as_str()],
                StmtKind::Label { .. } => {}
                StmtKind::If { var, cond, label } => {
                    let (v, l) = get(f, var);
                    f.predicates.insert(pc, l);
                    let x = match v {
                        Value::Int(i) => i,
                        Value::Str(s) => s.len() as i64,
                        Value::Null => 0,
                        Value::Obj(_) | Value::Arr(_) => 1,
                    };
                    let taken = match cond {
                        Cond::Gt => x > 0,
                        Cond::Lt => x < 0,
                        Cond::Eq => x == 0,
                    };
                    if taken {
                        next = labels[label.as_str()];
                    }
                }
            }
            pc = next;
        }
        Ok(None)
    }

    fn rep(&self, m: &Method, lv: LValue<'_>) -> Representative {
        representative(lv, m, self.ctx.program, &self.ctx.partition)
            .expect("representatives resolved when the context was built")
    }

    #[allow(clippy::too_many_arguments)]
    fn call(
        &mut self,
        caller: &Method,
        line: usize,
        callee: &MethodId,
        actuals: Vec<(Value, Labels)>,
        implicit: &Labels,
        f: &mut Frame<'p>,
        arg_names: &[String],
    ) -> Result<Option<(Value, Labels)>, DynError> {
        let p = self.ctx.program;
        let cfg = &p.config;
        let err = |msg: String| DynError::Runtime {
            method: caller.id.clone(),
            line,
            msg,
        };
        // Runtime dispatch on the receiver's class.
        let decl = p.lookup_method(callee.class(), callee.name(), callee.arity());
        let target: Option<&'p Method> = match decl {
            Some(d) if d.is_instance() => {
                let class = match actuals.first().map(|a| &a.0) {
                    Some(Value::Obj(o)) => self.objects[*o].class.clone(),
                    Some(Value::Arr(_)) | Some(Value::Str(_)) => callee.class().to_string(),
                    _ => return Err(err(format!("null receiver calling {callee}"))),
                };
                let chain = p.superchain(&class).map_err(|e| err(e.to_string()))?;
                chain
                    .iter()
                    .find_map(|c| {
                        p.class(c)
                            .and_then(|k| k.method(callee.name(), callee.arity()))
                    })
                    .or(Some(d))
            }
            other => other,
        };
        let endpoint_of = |id: &MethodId| (cfg.sources.get(id), cfg.sinks.get(id));
        let (mut source, mut sink) = endpoint_of(callee);
        if let Some(t) = target {
            let (s, k) = endpoint_of(&t.id);
            source = source.or(s);
            sink = sink.or(k);
        }
        if let (Some(t), None, None) = (target, source, sink) {
            if t.body.is_some() {
                self.trace
                    .call_edges
                    .insert((caller.id.clone(), t.id.clone()));
                return self.invoke(t, actuals);
            }
        }

        // Unavailable code.
        let ret_ty = match target {
            Some(t) => t.return_type.clone(),
            None if callee.name() == ALLOC && callee.arity() == 0 => TypeName::new(callee.class()),
            None => return Err(err(format!("unknown method {callee}"))),
        };
        let is_alloc = callee.name() == ALLOC
            && (callee.arity() == 0 || callee.class() == ARRAY)
            && target.is_none_or(|t| t.body.is_none());
        let value = if is_alloc && callee.class() == ARRAY {
            let n = match actuals.first().map(|a| &a.0) {
                Some(Value::Int(i)) => *i,
                _ => 1,
            };
            Some(self.new_array(n))
        } else if is_alloc {
            Some(self.new_object(callee.class()))
        } else {
            self.result_value(&ret_ty)
        };
        let pure = cfg.pure.contains(callee) || target.is_some_and(|t| cfg.pure.contains(&t.id));
        let mut result_labels = Labels::new();
        if !pure || source.is_some() || sink.is_some() {
            for (_, l) in &actuals {
                result_labels.extend(l.iter().cloned());
            }
            // The receiver variable absorbs the other arguments.
            if let Some(recv) = arg_names.first() {
                let extra: Labels = actuals
                    .iter()
                    .skip(1)
                    .flat_map(|a| a.1.iter().cloned())
                    .collect();
                if let Some(slot) = f.vars.get_mut(recv.as_str()) {
                    slot.1.extend(extra);
                    slot.1.extend(implicit.iter().cloned());
                }
            }
        }
        if let Some(sym) = source {
            let s = Representative::Sym(sym.clone());
            for (k, _, _) in &self.active {
                result_labels.insert((*k, s.clone()));
            }
        }
        if let Some(sym) = sink {
            let mut all: Labels = actuals.iter().flat_map(|a| a.1.iter().cloned()).collect();
            all.extend(implicit.iter().cloned());
            self.observe(&Representative::Sym(sym.clone()), &all, false);
        }
        Ok(value.map(|v| (v, result_labels)))
    }
}

fn slot(i: &Value, len: usize) -> usize {
    match i {
        Value::Int(i) => i.rem_euclid(len as i64) as usize,
        _ => 0,
    }
}

fn arith(op: BinOp, x: i64, y: i64) -> i64 {
    match op {
        BinOp::Add => x.wrapping_add(y),
        BinOp::Sub => x.wrapping_sub(y),
        BinOp::Mul => x.wrapping_mul(y),
        BinOp::Div => x.checked_div(y).unwrap_or(0),
        BinOp::Rem => x.checked_rem(y).unwrap_or(0),
        BinOp::And => x & y,
        BinOp::Or => x | y,
        BinOp::Xor => x ^ y,
        BinOp::Shl => x.wrapping_shl(y as u32),
        BinOp::Shr => x.wrapping_shr(y as u32),
    }
}
