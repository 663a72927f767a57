//! Flow facts, the statement transfer function and per-method summaries.
//!
//! A fact `(x, y)` says that the value of `y` at method entry may flow to `x`.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use crate::alias::{
    build_array_partition, representative, ArrayPartition, LValue, RepId, RepTable, Representative,
};
use crate::graphs::{
    build_call_graph, build_cfg, control_dependencies, CallGraph, Cfg, ControlDeps, NodeId,
};
use crate::ir::{Method, MethodId, Program, StmtKind};
use crate::Error;

pub type Pair = (RepId, RepId);

/// A set of `(to, from)` pairs, kept sorted and free of duplicates.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct FactSet(Vec<Pair>);

impl FactSet {
    pub fn new() -> Self {
        FactSet(vec![])
    }

    fn from_unsorted(mut v: Vec<Pair>) -> Self {
        v.sort_unstable();
        v.dedup();
        FactSet(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, p: &Pair) -> bool {
        self.0.binary_search(p).is_ok()
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &Pair> + '_ {
        self.0.iter()
    }

    pub fn is_subset(&self, other: &FactSet) -> bool {
        self.0.iter().all(|p| other.contains(p))
    }

    pub fn union(&self, other: &FactSet) -> FactSet {
        let mut v = Vec::with_capacity(self.len() + other.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].cmp(&other.0[j]) {
                std::cmp::Ordering::Less => {
                    v.push(self.0[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    v.push(other.0[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    v.push(self.0[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        v.extend_from_slice(&self.0[i..]);
        v.extend_from_slice(&other.0[j..]);
        FactSet(v)
    }

    /// Pairs of `self` whose first component is `to`.
    fn targeting(&self, to: RepId) -> &[Pair] {
        let lo = self.0.partition_point(|p| p.0 < to);
        let hi = self.0.partition_point(|p| p.0 <= to);
        &self.0[lo..hi]
    }

    /// Relational composition `{(x, y) | (x, z) ∈ flow, (z, y) ∈ self}`.
    fn compose_after(&self, flow: &[Pair]) -> Vec<Pair> {
        let mut out = vec![];
        for &(x, z) in flow {
            out.extend(self.targeting(z).iter().map(|&(_, y)| (x, y)));
        }
        out
    }

    /// Canonical strings, sorted.
    pub fn encode(&self, reps: &RepTable) -> BTreeSet<(String, String)> {
        self.0
            .iter()
            .map(|&(a, b)| (reps.rep(a).to_string(), reps.rep(b).to_string()))
            .collect()
    }
}

impl FromIterator<Pair> for FactSet {
    fn from_iter<T: IntoIterator<Item = Pair>>(iter: T) -> Self {
        FactSet::from_unsorted(iter.into_iter().collect())
    }
}

/// Summaries of callees; a missing entry reads as the empty set.
pub type SummaryEnv = HashMap<MethodId, FactSet>;

/// What a CFG node does, with representatives already resolved.
#[derive(Debug, Clone)]
enum NodeOp {
    Nop,
    /// `lhs` receives every rep in `from`; `kill` for strong updates of simple variables.
    Assign {
        lhs: RepId,
        kill: bool,
        from: Vec<RepId>,
    },
    Call {
        ret: Option<RepId>,
        args: Vec<RepId>,
        app: Vec<MethodId>,
        /// Library-model and source/sink pairs.
        fixed: Vec<Pair>,
        /// Condition variables of the controlling predicates.
        conds: Vec<RepId>,
    },
}

#[derive(Debug, Clone)]
struct MethodCtx {
    cfg: Cfg,
    deps: ControlDeps,
    ops: Vec<NodeOp>,
    /// Reps of formals and locals.
    vars: Vec<RepId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RepKind {
    Param(usize),
    Ret,
    Other,
}

/// Everything needed to summarise methods of one program.
#[derive(Debug, Clone)]
pub struct Context<'p> {
    pub program: &'p Program,
    pub call_graph: CallGraph,
    pub partition: ArrayPartition,
    reps: RepTable,
    kinds: Vec<RepKind>,
    /// For `Var` reps, index of the owning method in `program.method_ids()`.
    owners: Vec<Option<usize>>,
    method_index: HashMap<MethodId, usize>,
    methods: Vec<MethodCtx>,
    symbols: Vec<RepId>,
}

impl<'p> Context<'p> {
    pub fn new(program: &'p Program) -> Result<Self, Error> {
        let call_graph = build_call_graph(program)?;
        let partition = build_array_partition(program, &call_graph)?;
        let method_index = program
            .method_ids()
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        let mut ctx = Context {
            program,
            call_graph,
            partition,
            reps: RepTable::default(),
            kinds: vec![],
            owners: vec![],
            method_index,
            methods: vec![],
            symbols: vec![],
        };
        for s in program.config.symbols() {
            let id = ctx.intern(Representative::Sym(s.to_string()));
            ctx.symbols.push(id);
        }
        for m in program.methods() {
            let mc = ctx.prepare(m)?;
            ctx.methods.push(mc);
        }
        Ok(ctx)
    }

    pub fn reps(&self) -> &RepTable {
        &self.reps
    }

    pub fn intern(&mut self, r: Representative) -> RepId {
        let id = self.reps.intern(r);
        if id as usize == self.kinds.len() {
            let r = self.reps.rep(id);
            self.kinds.push(match r {
                Representative::Param(i) => RepKind::Param(*i),
                Representative::Ret => RepKind::Ret,
                _ => RepKind::Other,
            });
            self.owners.push(match r {
                Representative::Var { method, .. } => self.method_index.get(method).copied(),
                _ => None,
            });
        }
        id
    }

    pub fn cfg(&self, m: &MethodId) -> Option<&Cfg> {
        self.method_index.get(m).map(|&i| &self.methods[i].cfg)
    }

    /// Transitively closed control dependences of a method's CFG nodes.
    pub fn control_deps(&self, m: &MethodId) -> Option<&ControlDeps> {
        self.method_index.get(m).map(|&i| &self.methods[i].deps)
    }

    fn rep_of(&mut self, lv: LValue<'_>, m: &Method) -> Result<RepId, Error> {
        let r = representative(lv, m, self.program, &self.partition)?;
        Ok(self.intern(r))
    }

    fn prepare(&mut self, m: &Method) -> Result<MethodCtx, Error> {
        let cfg = build_cfg(m)?;
        let deps = control_dependencies(m, &cfg).transitive();
        let mut vars = vec![];
        for v in m.params.iter().chain(m.locals.iter()) {
            vars.push(self.rep_of(LValue::Var(&v.name), m)?);
        }
        let mut ops = Vec::with_capacity(cfg.len());
        for n in 0..cfg.len() {
            let Some(stmt_index) = cfg.nodes[n].stmt else {
                ops.push(NodeOp::Nop);
                continue;
            };
            let stmt = &m.body()[stmt_index];
            let mut conds = vec![];
            for (_, c) in deps.of(n) {
                conds.push(self.rep_of(LValue::Var(c), m)?);
            }
            conds.sort_unstable();
            conds.dedup();
            let var = |ctx: &mut Self, x: &str| ctx.rep_of(LValue::Var(x), m);
            let assign = |lhs: RepId, kill: bool, mut from: Vec<RepId>| {
                from.extend(&conds);
                NodeOp::Assign { lhs, kill, from }
            };
            let op = match &stmt.kind {
                StmtKind::Const { dst, .. } => assign(var(self, dst)?, true, vec![]),
                StmtKind::Copy { dst, src } | StmtKind::Unary { dst, src, .. } => {
                    let from = vec![var(self, src)?];
                    assign(var(self, dst)?, true, from)
                }
                StmtKind::Binary { dst, lhs, rhs, .. } => {
                    let from = vec![var(self, lhs)?, var(self, rhs)?];
                    assign(var(self, dst)?, true, from)
                }
                StmtKind::ArrayRead { dst, array, .. } => {
                    let from = vec![self.rep_of(LValue::Element { array }, m)?];
                    assign(var(self, dst)?, true, from)
                }
                StmtKind::FieldRead { dst, object, field } => {
                    let from = vec![self.rep_of(LValue::Field { object, field }, m)?];
                    assign(var(self, dst)?, true, from)
                }
                StmtKind::ArrayWrite { array, src, .. } => {
                    let lhs = self.rep_of(LValue::Element { array }, m)?;
                    assign(lhs, false, vec![var(self, src)?])
                }
                StmtKind::FieldWrite { object, field, src } => {
                    let lhs = self.rep_of(LValue::Field { object, field }, m)?;
                    assign(lhs, false, vec![var(self, src)?])
                }
                StmtKind::Return { value: Some(x) } => {
                    let lhs = self.rep_of(LValue::Ret, m)?;
                    assign(lhs, false, vec![var(self, x)?])
                }
                StmtKind::Call { ret, args, .. } => {
                    let site = self
                        .call_graph
                        .site(&m.id, stmt_index)
                        .cloned()
                        .expect("call graph covers every call site");
                    let ret = ret.as_deref().map(|r| var(self, r)).transpose()?;
                    let args = args
                        .iter()
                        .map(|a| var(self, a))
                        .collect::<Result<Vec<_>, _>>()?;
                    let mut fixed = vec![];
                    if site.library {
                        fixed.extend(library_flow(ret, &args));
                    }
                    if let Some(s) = &site.source {
                        let sym = self.intern(Representative::Sym(s.clone()));
                        fixed.extend(ret.map(|r| (r, sym)));
                    }
                    if let Some(s) = &site.sink {
                        let sym = self.intern(Representative::Sym(s.clone()));
                        fixed.extend(args.iter().map(|&a| (sym, a)));
                    }
                    NodeOp::Call {
                        ret,
                        args,
                        app: site.app,
                        fixed,
                        conds: conds.clone(),
                    }
                }
                StmtKind::Return { value: None }
                | StmtKind::Goto { .. }
                | StmtKind::Label { .. }
                | StmtKind::If { .. } => NodeOp::Nop,
            };
            ops.push(op);
        }
        Ok(MethodCtx {
            cfg,
            deps,
            ops,
            vars,
        })
    }

    fn method_ctx(&self, m: &MethodId) -> &MethodCtx {
        &self.methods[self.method_index[m]]
    }

    /// A callee summary rewritten into the caller: formals become the actual
    /// arguments and `ret` the return-to variable. Pairs mentioning a formal
    /// without a matching argument, or `ret` without a return-to variable, are dropped.
    fn substitute(&self, summary: &FactSet, args: &[RepId], ret: Option<RepId>) -> Vec<Pair> {
        let map = |r: RepId| match self.kinds[r as usize] {
            RepKind::Param(i) => args.get(i).copied(),
            RepKind::Ret => ret,
            RepKind::Other => Some(r),
        };
        summary
            .iter()
            .filter_map(|&(a, b)| Some((map(a)?, map(b)?)))
            .collect()
    }

    /// Flow pairs of a node and the simple variable it overwrites.
    fn node_flow(&self, op: &NodeOp, env: &SummaryEnv) -> (FactSet, Option<RepId>) {
        match op {
            NodeOp::Nop => (FactSet::new(), None),
            NodeOp::Assign { lhs, kill, from } => (
                from.iter().map(|&f| (*lhs, f)).collect(),
                kill.then_some(*lhs),
            ),
            NodeOp::Call {
                ret,
                args,
                app,
                fixed,
                conds,
            } => {
                let mut pairs = fixed.clone();
                for callee in app {
                    if let Some(s) = env.get(callee) {
                        pairs.extend(self.substitute(s, args, *ret));
                    }
                }
                if !conds.is_empty() {
                    let mut targets: Vec<RepId> = pairs.iter().map(|p| p.0).chain(*ret).collect();
                    targets.sort_unstable();
                    targets.dedup();
                    for t in targets {
                        pairs.extend(conds.iter().map(|&c| (t, c)));
                    }
                }
                (FactSet::from_unsorted(pairs), *ret)
            }
        }
    }

    fn op_at(&self, m: &MethodId, stmt: usize) -> Option<&NodeOp> {
        let mc = self.method_ctx(m);
        let n = mc.cfg.nodes.iter().position(|n| n.stmt == Some(stmt))?;
        Some(&mc.ops[n])
    }

    /// Statement-local flow pairs (including implicit flows) of body statement `stmt` of `m`.
    /// Unreachable statements have no flow.
    pub fn flow(&self, m: &MethodId, stmt: usize, env: &SummaryEnv) -> FactSet {
        self.op_at(m, stmt)
            .map_or_else(FactSet::new, |op| self.node_flow(op, env).0)
    }

    /// The facts of `d` the statement overwrites.
    pub fn kill(&self, m: &MethodId, stmt: usize, d: &FactSet) -> FactSet {
        let killed = self
            .op_at(m, stmt)
            .and_then(|op| self.node_flow(op, &SummaryEnv::new()).1);
        match killed {
            Some(x) => FactSet(d.targeting(x).to_vec()),
            None => FactSet::new(),
        }
    }

    /// `F(d, s)`: compose the statement's flow with `d` and keep what it does not kill.
    pub fn transfer(&self, d: &FactSet, m: &MethodId, stmt: usize, env: &SummaryEnv) -> FactSet {
        match self.op_at(m, stmt) {
            Some(op) => {
                let (flow, kill) = self.node_flow(op, env);
                apply(d, &flow, kill)
            }
            None => d.clone(),
        }
    }

    /// Per-method fixpoint; returns the summary with method-local and
    /// reflexive pairs removed.
    pub fn summarise(&self, m: &MethodId, env: &SummaryEnv) -> FactSet {
        self.summarise_counted(m, env).0
    }

    /// As [`Context::summarise`], also reporting how many node evaluations it took.
    pub fn summarise_counted(&self, m: &MethodId, env: &SummaryEnv) -> (FactSet, usize) {
        let (raw, evals) = self.summarise_raw(m, env);
        (self.filter(m, &raw), evals)
    }

    /// Unfiltered `OUT[final]`.
    pub fn summarise_raw(&self, m: &MethodId, env: &SummaryEnv) -> (FactSet, usize) {
        let mc = self.method_ctx(m);
        let g = &mc.cfg;
        let flows: Vec<(FactSet, Option<RepId>)> =
            mc.ops.iter().map(|op| self.node_flow(op, env)).collect();

        let mut seed: Vec<RepId> = mc.vars.clone();
        seed.extend(&self.symbols);
        for (f, _) in &flows {
            seed.extend(f.iter().map(|p| p.1));
        }
        let seed = FactSet::from_unsorted(seed.into_iter().map(|r| (r, r)).collect());

        let rpo = g.reverse_postorder();
        let mut pos = vec![usize::MAX; g.len()];
        for (i, &n) in rpo.iter().enumerate() {
            pos[n] = i;
        }
        let mut out: Vec<FactSet> = vec![FactSet::new(); g.len()];
        let mut work: BTreeSet<usize> = (0..rpo.len()).collect();
        let mut evals = 0;
        while let Some(i) = work.pop_first() {
            let n: NodeId = rpo[i];
            evals += 1;
            let mut inp = if n == g.init() {
                seed.clone()
            } else {
                FactSet::new()
            };
            for &p in g.pred(n) {
                inp = inp.union(&out[p]);
            }
            let (flow, kill) = &flows[n];
            let new = apply(&inp, flow, *kill);
            if new != out[n] {
                out[n] = new;
                work.extend(g.succ(n).iter().map(|&s| pos[s]));
            }
        }
        (out[g.final_node()].clone(), evals)
    }

    /// Drop pairs mentioning locals of `m` and reflexive pairs.
    pub fn filter(&self, m: &MethodId, d: &FactSet) -> FactSet {
        let own = self.method_index.get(m).copied();
        let local = |r: RepId| own.is_some() && self.owners[r as usize] == own;
        FactSet(
            d.iter()
                .filter(|&&(a, b)| a != b && !local(a) && !local(b))
                .copied()
                .collect(),
        )
    }

    /// Parse a canonical pair set back into ids, interning unseen representatives.
    pub fn decode_facts<'a>(
        &mut self,
        pairs: impl IntoIterator<Item = (&'a Representative, &'a Representative)>,
    ) -> FactSet {
        let v: Vec<Pair> = pairs
            .into_iter()
            .map(|(a, b)| (self.intern(a.clone()), self.intern(b.clone())))
            .collect();
        FactSet::from_unsorted(v)
    }

    pub fn display<'a>(&'a self, d: &'a FactSet) -> DisplayFacts<'a> {
        DisplayFacts {
            reps: &self.reps,
            d,
        }
    }
}

/// Library model for a call to unavailable code: the result depends on every
/// argument, and the receiver on every other argument.
pub fn library_flow(ret: Option<RepId>, args: &[RepId]) -> Vec<Pair> {
    let mut out = vec![];
    if let Some(r) = ret {
        out.extend(args.iter().map(|&a| (r, a)));
    }
    if let Some((&recv, rest)) = args.split_first() {
        out.extend(rest.iter().map(|&a| (recv, a)));
    }
    out
}

fn apply(d: &FactSet, flow: &FactSet, kill: Option<RepId>) -> FactSet {
    let mut v = d.compose_after(&flow.0);
    match kill {
        Some(x) => v.extend(d.iter().filter(|p| p.0 != x)),
        None => v.extend_from_slice(&d.0),
    }
    FactSet::from_unsorted(v)
}

pub struct DisplayFacts<'a> {
    reps: &'a RepTable,
    d: &'a FactSet,
}

impl fmt::Display for DisplayFacts<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (a, b)) in self.d.encode(self.reps).iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "({a}, {b})")?;
        }
        f.write_str("}")
    }
}
