//! Control-flow graphs, postdominance, control dependence, and the
//! class-hierarchy call graph.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

use crate::ir::{Method, MethodId, Program, Stmt, StmtKind, ALLOC};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("{method}: jump to undefined label `{label}`")]
    UndefinedLabel { method: MethodId, label: String },
    #[error("{method} line {line}: call to unknown method `{callee}`")]
    UnknownMethod {
        method: MethodId,
        line: usize,
        callee: MethodId,
    },
}

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    /// Index of the statement in the method body; `None` for the synthetic exit.
    pub stmt: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Cfg {
    pub nodes: Vec<Node>,
    succ: Vec<Vec<NodeId>>,
    pred: Vec<Vec<NodeId>>,
    init: NodeId,
    fin: NodeId,
}

impl Cfg {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn succ(&self, n: NodeId) -> &[NodeId] {
        &self.succ[n]
    }

    pub fn pred(&self, n: NodeId) -> &[NodeId] {
        &self.pred[n]
    }

    pub fn init(&self) -> NodeId {
        self.init
    }

    pub fn final_node(&self) -> NodeId {
        self.fin
    }

    pub fn stmt<'m>(&self, m: &'m Method, n: NodeId) -> Option<&'m Stmt> {
        self.nodes[n].stmt.map(|i| &m.body()[i])
    }

    /// Nodes in reverse postorder of a depth-first walk from `init`.
    pub fn reverse_postorder(&self) -> Vec<NodeId> {
        let mut seen = vec![false; self.len()];
        let mut order = Vec::with_capacity(self.len());
        let mut stack = vec![(self.init, 0usize)];
        seen[self.init] = true;
        while let Some((n, i)) = stack.pop() {
            if let Some(&s) = self.succ[n].get(i) {
                stack.push((n, i + 1));
                if !seen[s] {
                    seen[s] = true;
                    stack.push((s, 0));
                }
            } else {
                order.push(n);
            }
        }
        order.reverse();
        order
    }

    pub fn to_dot(&self, m: &Method) -> String {
        let mut out = format!("digraph \"{}\" {{\n", m.id);
        for (n, node) in self.nodes.iter().enumerate() {
            let label = match node.stmt {
                Some(i) => format!("{i}: {}", m.body()[i].kind),
                None => "exit".to_string(),
            };
            let _ = writeln!(out, "  n{n} [label={label:?}];");
        }
        for (n, ss) in self.succ.iter().enumerate() {
            for s in ss {
                let _ = writeln!(out, "  n{n} -> n{s};");
            }
        }
        out.push_str("}\n");
        out
    }
}

/// Build the control-flow graph of a method body.
///
/// Jumps to a label at the very first statement are redirected to the
/// statement after it, so `init` never has predecessors. Returns and falling
/// off the end of the body lead to the final node; a synthetic exit node is
/// added when there is more than one such node. Regions that can never reach
/// the end get an extra edge to the final node from their last statement.
pub fn build_cfg(m: &Method) -> Result<Cfg, GraphError> {
    let body = m.body();
    let n = body.len();
    if n == 0 {
        return Ok(Cfg {
            nodes: vec![Node { stmt: None }],
            succ: vec![vec![]],
            pred: vec![vec![]],
            init: 0,
            fin: 0,
        });
    }
    let mut labels = HashMap::new();
    for (i, s) in body.iter().enumerate() {
        if let StmtKind::Label { label } = &s.kind {
            labels.insert(label.as_str(), i);
        }
    }
    let target = |label: &str| -> Result<usize, GraphError> {
        let t = *labels
            .get(label)
            .ok_or_else(|| GraphError::UndefinedLabel {
                method: m.id.clone(),
                label: label.to_string(),
            })?;
        Ok(if t == 0 { 1 } else { t })
    };
    // Statement successors; `n` stands for "leaves the method".
    let mut succ: Vec<Vec<usize>> = Vec::with_capacity(n);
    for (i, s) in body.iter().enumerate() {
        let mut ss = match &s.kind {
            StmtKind::Goto { label } => vec![target(label)?],
            StmtKind::If { label, .. } => vec![i + 1, target(label)?],
            StmtKind::Return { .. } => vec![n],
            _ => vec![i + 1],
        };
        dedup_in_order(&mut ss);
        succ.push(ss);
    }

    let reachable = reach(&succ, 0, n);
    let pruned: Vec<usize> = (0..n).filter(|&i| !reachable[i]).collect();
    if !pruned.is_empty() {
        log::warn!(
            "{}: pruning {} unreachable statement(s) starting at line {}",
            m.id,
            pruned.len(),
            body[pruned[0]].line
        );
    }

    // Connect regions that cannot leave the method.
    loop {
        let mut exits = vec![false; n + 1];
        exits[n] = true;
        let mut changed = true;
        while changed {
            changed = false;
            for i in (0..n).rev() {
                if reachable[i] && !exits[i] && succ[i].iter().any(|&s| exits[s]) {
                    exits[i] = true;
                    changed = true;
                }
            }
        }
        match (0..n).rev().find(|&i| reachable[i] && !exits[i]) {
            Some(i) => succ[i].push(n),
            None => break,
        }
    }

    let terminals: Vec<usize> = (0..n)
        .filter(|&i| reachable[i] && succ[i].contains(&n))
        .collect();
    let single_final = terminals.len() == 1 && succ[terminals[0]].len() == 1;

    let mut index = vec![usize::MAX; n + 1];
    let mut nodes = vec![];
    for i in 0..n {
        if reachable[i] {
            index[i] = nodes.len();
            nodes.push(Node { stmt: Some(i) });
        }
    }
    let fin = if single_final {
        index[terminals[0]]
    } else {
        nodes.push(Node { stmt: None });
        nodes.len() - 1
    };
    index[n] = fin;
    let mut g_succ = vec![vec![]; nodes.len()];
    let mut g_pred = vec![vec![]; nodes.len()];
    for (v, node) in nodes.iter().enumerate() {
        let Some(i) = node.stmt else { continue };
        for &s in &succ[i] {
            if s == n && v == fin {
                continue;
            }
            let w = index[s];
            g_succ[v].push(w);
            g_pred[w].push(v);
        }
    }
    Ok(Cfg {
        nodes,
        succ: g_succ,
        pred: g_pred,
        init: 0,
        fin,
    })
}

fn dedup_in_order(v: &mut Vec<usize>) {
    let mut seen = BTreeSet::new();
    v.retain(|x| seen.insert(*x));
}

fn reach(succ: &[Vec<usize>], from: usize, n: usize) -> Vec<bool> {
    let mut seen = vec![false; n + 1];
    let mut stack = vec![from];
    seen[from] = true;
    while let Some(i) = stack.pop() {
        if i == n {
            continue;
        }
        for &s in &succ[i] {
            if !seen[s] {
                seen[s] = true;
                stack.push(s);
            }
        }
    }
    seen
}

/// Postdominator sets, reflexive: `pdom[n]` holds every node on all paths from `n` to final.
pub fn postdominators(g: &Cfg) -> Vec<Vec<bool>> {
    let n = g.len();
    let mut pdom = vec![vec![true; n]; n];
    pdom[g.fin] = vec![false; n];
    pdom[g.fin][g.fin] = true;
    let order: Vec<NodeId> = g.reverse_postorder().into_iter().rev().collect();
    let mut changed = true;
    while changed {
        changed = false;
        for &v in &order {
            if v == g.fin {
                continue;
            }
            let mut set = vec![true; n];
            for &s in &g.succ[v] {
                for (a, b) in set.iter_mut().zip(&pdom[s]) {
                    *a &= *b;
                }
            }
            set[v] = true;
            if set != pdom[v] {
                pdom[v] = set;
                changed = true;
            }
        }
    }
    pdom
}

/// For every node, the conditional-goto nodes it is control dependent on,
/// together with their condition variables.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ControlDeps {
    deps: Vec<Vec<(NodeId, String)>>,
}

impl ControlDeps {
    pub fn of(&self, n: NodeId) -> &[(NodeId, String)] {
        &self.deps[n]
    }

    pub fn is_empty(&self) -> bool {
        self.deps.iter().all(Vec::is_empty)
    }

    /// Closure under "the predicate is itself control dependent on another":
    /// a node then depends on every predicate that governs whether it runs.
    pub fn transitive(&self) -> ControlDeps {
        let mut deps = self.deps.clone();
        let mut changed = true;
        while changed {
            changed = false;
            for n in 0..deps.len() {
                let mut extra = vec![];
                for (p, _) in &deps[n] {
                    for d in &deps[*p] {
                        if !deps[n].contains(d) && !extra.contains(d) {
                            extra.push(d.clone());
                        }
                    }
                }
                if !extra.is_empty() {
                    deps[n].extend(extra);
                    deps[n].sort();
                    changed = true;
                }
            }
        }
        ControlDeps { deps }
    }

    pub fn pairs(&self) -> BTreeSet<(NodeId, NodeId)> {
        self.deps
            .iter()
            .enumerate()
            .flat_map(|(n, ps)| ps.iter().map(move |(p, _)| (*p, n)))
            .collect()
    }
}

/// `n` is control dependent on predicate `p` iff some successor `s` of `p` is
/// postdominated by `n` while `p` is not.
pub fn control_dependencies(m: &Method, g: &Cfg) -> ControlDeps {
    let pdom = postdominators(g);
    let mut deps = vec![vec![]; g.len()];
    for p in 0..g.len() {
        let Some(StmtKind::If { var, .. }) = g.stmt(m, p).map(|s| &s.kind) else {
            continue;
        };
        if g.succ[p].len() < 2 {
            continue;
        }
        for n in 0..g.len() {
            if !pdom[p][n] && g.succ[p].iter().any(|&s| pdom[s][n]) {
                deps[n].push((p, var.clone()));
            }
        }
    }
    ControlDeps { deps }
}

/// How a call site is modelled.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CallTargets {
    /// Possible callees with bodies, sorted.
    pub app: Vec<MethodId>,
    /// Some possible callee is unavailable code that is not declared pure.
    pub library: bool,
    pub source: Option<String>,
    pub sink: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct CallGraph {
    edges: BTreeSet<(MethodId, MethodId)>,
    callers: BTreeMap<MethodId, BTreeSet<MethodId>>,
    callees: BTreeMap<MethodId, BTreeSet<MethodId>>,
    sites: HashMap<MethodId, HashMap<usize, CallTargets>>,
}

impl CallGraph {
    pub fn edges(&self) -> &BTreeSet<(MethodId, MethodId)> {
        &self.edges
    }

    pub fn callers_of(&self, m: &MethodId) -> impl Iterator<Item = &MethodId> {
        self.callers.get(m).into_iter().flatten()
    }

    pub fn callees_of(&self, m: &MethodId) -> impl Iterator<Item = &MethodId> {
        self.callees.get(m).into_iter().flatten()
    }

    /// Resolution of the call statement at body index `stmt` of `m`.
    pub fn site(&self, m: &MethodId, stmt: usize) -> Option<&CallTargets> {
        self.sites.get(m)?.get(&stmt)
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph callgraph {\n");
        let nodes: BTreeSet<&MethodId> = self.sites.keys().collect();
        for m in nodes {
            let _ = writeln!(out, "  \"{m}\";");
        }
        for (a, b) in &self.edges {
            let _ = writeln!(out, "  \"{a}\" -> \"{b}\";");
        }
        out.push_str("}\n");
        out
    }
}

/// Resolve `call callee(args)` inside `caller` by class-hierarchy analysis.
///
/// Instance calls dispatch on every class that may be the runtime type of the
/// receiver: the receiver's declared type (or the named class, when the
/// declared type is not a subtype of it) and all its subclasses and
/// implementers.
pub fn resolve_call(
    p: &Program,
    caller: &Method,
    line: usize,
    callee: &MethodId,
    args: &[String],
) -> Result<CallTargets, GraphError> {
    let cfg = &p.config;
    let mut t = CallTargets::default();
    let endpoint = |t: &mut CallTargets, id: &MethodId| -> bool {
        if let Some(s) = cfg.sources.get(id) {
            t.source = Some(s.clone());
        }
        if let Some(s) = cfg.sinks.get(id) {
            t.sink = Some(s.clone());
        }
        if t.source.is_some() || t.sink.is_some() {
            t.library = true;
            true
        } else {
            false
        }
    };
    if endpoint(&mut t, callee) {
        return Ok(t);
    }
    let unknown = || GraphError::UnknownMethod {
        method: caller.id.clone(),
        line,
        callee: callee.clone(),
    };
    let class = callee.class();
    if p.class(class).is_none() {
        return Err(unknown());
    }
    let Some(decl) = p.lookup_method(class, callee.name(), callee.arity()) else {
        if callee.name() == ALLOC && callee.arity() == 0 {
            t.library = !cfg.pure.contains(callee);
            return Ok(t);
        }
        return Err(unknown());
    };
    if endpoint(&mut t, &decl.id) {
        return Ok(t);
    }
    let mut targets: BTreeMap<&MethodId, &Method> = BTreeMap::new();
    if !decl.is_instance() {
        targets.insert(&decl.id, decl);
    } else {
        let declared = args
            .first()
            .and_then(|a| caller.var_type(a))
            .and_then(|ty| ty.class_name())
            .filter(|c| p.is_subtype(c, class))
            .unwrap_or(class);
        for c in p.classes.iter().filter(|c| !c.interface) {
            if !p.is_subtype(&c.name, declared) {
                continue;
            }
            let dispatched = p.superchain(&c.name).ok().and_then(|chain| {
                chain.iter().find_map(|k| {
                    p.class(k)
                        .and_then(|d| d.method(callee.name(), callee.arity()))
                })
            });
            if let Some(m) = dispatched {
                targets.insert(&m.id, m);
            }
        }
        if targets.is_empty() && decl.body.is_none() && !p.class(&decl.class).unwrap().interface {
            targets.insert(&decl.id, decl);
        }
    }
    for m in targets.into_values() {
        if endpoint(&mut t, &m.id) {
            continue;
        }
        if m.body.is_some() {
            t.app.push(m.id.clone());
        } else if !cfg.pure.contains(&m.id) && !cfg.pure.contains(callee) {
            t.library = true;
        }
    }
    t.app.sort();
    t.app.dedup();
    Ok(t)
}

/// Class-hierarchy call graph over all methods with bodies.
pub fn build_call_graph(p: &Program) -> Result<CallGraph, GraphError> {
    let mut cg = CallGraph::default();
    for m in p.methods() {
        let mut sites = HashMap::new();
        for (i, s) in m.body().iter().enumerate() {
            if let StmtKind::Call { callee, args, .. } = &s.kind {
                let t = resolve_call(p, m, s.line, callee, args)?;
                for callee in &t.app {
                    cg.edges.insert((m.id.clone(), callee.clone()));
                    cg.callers
                        .entry(callee.clone())
                        .or_default()
                        .insert(m.id.clone());
                    cg.callees
                        .entry(m.id.clone())
                        .or_default()
                        .insert(callee.clone());
                }
                sites.insert(i, t);
            }
        }
        cg.sites.insert(m.id.clone(), sites);
    }
    Ok(cg)
}
