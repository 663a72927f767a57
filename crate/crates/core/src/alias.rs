//! Representatives: canonical abstract names for l-values and taint symbols.
//!
//! Simple variables stand for themselves, field accesses are named after the
//! topmost class declaring the field, and array elements after the alias set
//! of the array they belong to.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use thiserror::Error;

use crate::graphs::CallGraph;
use crate::ir::{Method, MethodId, Program, StmtKind, TypeName};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AliasError {
    #[error("field `{field}` not found in the hierarchy of `{class}`")]
    FieldNotFound { class: String, field: String },
    #[error("{method}: `{var}` of type `{ty}` has no fields")]
    NotAnObject {
        method: MethodId,
        var: String,
        ty: String,
    },
    #[error("{method}: `{var}` of type `{ty}` is not an array")]
    NotAnArray {
        method: MethodId,
        var: String,
        ty: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Representative {
    Var { method: MethodId, name: String },
    Param(usize),
    Ret,
    Field { class: String, field: String },
    Array(String),
    Sym(String),
}

impl fmt::Display for Representative {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Representative::Var { method, name } => write!(f, "v:{method}::{name}"),
            Representative::Param(i) => write!(f, "p:{i}"),
            Representative::Ret => f.write_str("ret"),
            Representative::Field { class, field } => write!(f, "f:{class}.{field}"),
            Representative::Array(id) => write!(f, "arr:{id}"),
            Representative::Sym(s) => write!(f, "sym:{s}"),
        }
    }
}

impl Representative {
    /// Inverse of the canonical encoding; `None` for anything malformed.
    pub fn decode(s: &str) -> Option<Self> {
        use crate::ir::is_ident;
        if s == "ret" {
            return Some(Representative::Ret);
        }
        let (tag, rest) = s.split_once(':')?;
        match tag {
            "v" => {
                let (m, name) = rest.split_once("::")?;
                let method = MethodId::parse(m)?;
                is_ident(name).then(|| Representative::Var {
                    method,
                    name: name.to_string(),
                })
            }
            "p" => {
                let i: usize = rest.parse().ok()?;
                (i.to_string() == rest).then_some(Representative::Param(i))
            }
            "f" => {
                let (class, field) = rest.split_once('.')?;
                (is_ident(class) && is_ident(field)).then(|| Representative::Field {
                    class: class.to_string(),
                    field: field.to_string(),
                })
            }
            "arr" => (!rest.is_empty() && !rest.chars().any(char::is_whitespace))
                .then(|| Representative::Array(rest.to_string())),
            "sym" => is_ident(rest).then(|| Representative::Sym(rest.to_string())),
            _ => None,
        }
    }

    pub fn is_symbol(&self) -> bool {
        matches!(self, Representative::Sym(_))
    }
}

pub type RepId = u32;

/// Interner mapping representatives to dense ids.
#[derive(Debug, Clone, Default)]
pub struct RepTable {
    reps: Vec<Representative>,
    ids: HashMap<Representative, RepId>,
}

impl RepTable {
    pub fn intern(&mut self, r: Representative) -> RepId {
        if let Some(&id) = self.ids.get(&r) {
            return id;
        }
        let id = self.reps.len() as RepId;
        self.reps.push(r.clone());
        self.ids.insert(r, id);
        id
    }

    pub fn get(&self, r: &Representative) -> Option<RepId> {
        self.ids.get(r).copied()
    }

    pub fn rep(&self, id: RepId) -> &Representative {
        &self.reps[id as usize]
    }

    pub fn len(&self) -> usize {
        self.reps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reps.is_empty()
    }
}

/// The topmost class in the superchain of `declared` that declares `field`.
pub fn hoist_field(declared: &str, field: &str, p: &Program) -> Result<String, AliasError> {
    let not_found = || AliasError::FieldNotFound {
        class: declared.to_string(),
        field: field.to_string(),
    };
    let chain = p.superchain(declared).map_err(|_| not_found())?;
    chain
        .iter()
        .rev()
        .find(|c| p.class(c).is_some_and(|d| d.field(field).is_some()))
        .map(|c| c.to_string())
        .ok_or_else(not_found)
}

/// Union-find over array-typed identifiers of the whole program.
///
/// Members are keyed `<method>::<name>` for locals and formals,
/// `<class>.<field>` for (hoisted) fields and `<method>#ret` for returned arrays.
#[derive(Debug, Clone, Default)]
pub struct ArrayPartition {
    keys: Vec<String>,
    index: HashMap<String, usize>,
    parent: Vec<usize>,
    /// Smallest member key of each root's set.
    ids: Vec<String>,
}

impl ArrayPartition {
    fn key(&mut self, k: String) -> usize {
        if let Some(&i) = self.index.get(&k) {
            return i;
        }
        let i = self.keys.len();
        self.keys.push(k.clone());
        self.ids.push(k.clone());
        self.parent.push(i);
        self.index.insert(k, i);
        i
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: String, b: String) {
        let a = self.key(a);
        let b = self.key(b);
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        let (keep, gone) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[gone] = keep;
        if self.ids[gone] < self.ids[keep] {
            self.ids[keep] = std::mem::take(&mut self.ids[gone]);
        }
    }

    fn find_ro(&self, mut i: usize) -> usize {
        while self.parent[i] != i {
            i = self.parent[i];
        }
        i
    }

    /// Alias-set identifier of a member key; unknown keys are singletons.
    pub fn partition_id(&self, key: &str) -> String {
        match self.index.get(key) {
            Some(&i) => self.ids[self.find_ro(i)].clone(),
            None => key.to_string(),
        }
    }

    /// All sets with at least one member, keyed by id.
    pub fn sets(&self) -> BTreeMap<String, Vec<String>> {
        let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (i, k) in self.keys.iter().enumerate() {
            out.entry(self.ids[self.find_ro(i)].clone())
                .or_default()
                .push(k.clone());
        }
        for v in out.values_mut() {
            v.sort();
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

pub fn var_key(m: &MethodId, name: &str) -> String {
    format!("{m}::{name}")
}

pub fn ret_key(m: &MethodId) -> String {
    format!("{m}#ret")
}

fn is_array(ty: Option<&TypeName>) -> bool {
    ty.is_some_and(TypeName::is_array)
}

/// Close array identifiers under copies, call bindings, returns and shared fields.
pub fn build_array_partition(p: &Program, cg: &CallGraph) -> Result<ArrayPartition, AliasError> {
    let mut ap = ArrayPartition::default();
    for m in p.methods() {
        for v in m.params.iter().chain(m.locals.iter()) {
            if v.ty.is_array() {
                ap.key(var_key(&m.id, &v.name));
            }
        }
        if m.return_type.is_array() {
            ap.key(ret_key(&m.id));
        }
    }
    for m in p.methods() {
        let key = |v: &str| var_key(&m.id, v);
        let arr = |v: &str| is_array(m.var_type(v));
        for (i, s) in m.body().iter().enumerate() {
            match &s.kind {
                StmtKind::Copy { dst, src } if arr(dst) && arr(src) => ap.union(key(dst), key(src)),
                StmtKind::ArrayRead { dst, array, .. } if arr(dst) => {
                    ap.union(key(dst), key(array))
                }
                StmtKind::ArrayWrite { array, src, .. } if arr(src) => {
                    ap.union(key(array), key(src))
                }
                StmtKind::FieldRead { dst, object, field } if arr(dst) => {
                    let f = field_key(p, m, object, field)?;
                    ap.union(key(dst), f);
                }
                StmtKind::FieldWrite { object, field, src } if arr(src) => {
                    let f = field_key(p, m, object, field)?;
                    ap.union(f, key(src));
                }
                StmtKind::Return { value: Some(v) } if arr(v) && m.return_type.is_array() => {
                    ap.union(ret_key(&m.id), key(v))
                }
                StmtKind::Call { ret, args, .. } => {
                    let Some(site) = cg.site(&m.id, i) else {
                        continue;
                    };
                    for t in &site.app {
                        let callee = p.method(t).expect("resolved callee exists");
                        for (a, formal) in args.iter().zip(&callee.params) {
                            if arr(a) && formal.ty.is_array() {
                                ap.union(key(a), var_key(t, &formal.name));
                            }
                        }
                        if let Some(r) = ret {
                            if arr(r) && callee.return_type.is_array() {
                                ap.union(key(r), ret_key(t));
                            }
                        }
                    }
                }
                _ => {}
            }
        }
    }
    Ok(ap)
}

fn field_key(p: &Program, m: &Method, object: &str, field: &str) -> Result<String, AliasError> {
    let class = object_class(m, object)?;
    Ok(format!("{}.{field}", hoist_field(class, field, p)?))
}

fn object_class<'m>(m: &'m Method, var: &str) -> Result<&'m str, AliasError> {
    let ty = m
        .var_type(var)
        .expect("identifiers validated by the parser");
    ty.class_name().ok_or_else(|| AliasError::NotAnObject {
        method: m.id.clone(),
        var: var.to_string(),
        ty: ty.to_string(),
    })
}

/// An l-value as it occurs in a statement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LValue<'a> {
    Var(&'a str),
    Field { object: &'a str, field: &'a str },
    Element { array: &'a str },
    Ret,
}

pub fn representative(
    lv: LValue<'_>,
    m: &Method,
    p: &Program,
    ap: &ArrayPartition,
) -> Result<Representative, AliasError> {
    Ok(match lv {
        LValue::Var(x) => match m.param_index(x) {
            Some(i) => Representative::Param(i),
            None => Representative::Var {
                method: m.id.clone(),
                name: x.to_string(),
            },
        },
        LValue::Field { object, field } => {
            let class = object_class(m, object)?;
            Representative::Field {
                class: hoist_field(class, field, p)?,
                field: field.to_string(),
            }
        }
        LValue::Element { array } => {
            let ty = m
                .var_type(array)
                .expect("identifiers validated by the parser");
            if !ty.is_array() {
                return Err(AliasError::NotAnArray {
                    method: m.id.clone(),
                    var: array.to_string(),
                    ty: ty.to_string(),
                });
            }
            Representative::Array(ap.partition_id(&var_key(&m.id, array)))
        }
        LValue::Ret => Representative::Ret,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::build_call_graph;
    use crate::ir::parse_program;

    fn setup(text: &str) -> (Program, ArrayPartition) {
        let p = parse_program(text, "").unwrap();
        let cg = build_call_graph(&p).unwrap();
        let ap = build_array_partition(&p, &cg).unwrap();
        (p, ap)
    }

    #[test]
    fn encodings() {
        let cases = [
            (
                Representative::Var {
                    method: MethodId::new("A", "m", 1),
                    name: "x".into(),
                },
                "v:A.m/1::x",
            ),
            (Representative::Param(1), "p:1"),
            (Representative::Ret, "ret"),
            (
                Representative::Field {
                    class: "B".into(),
                    field: "f".into(),
                },
                "f:B.f",
            ),
            (Representative::Array("A.m/1::a".into()), "arr:A.m/1::a"),
            (Representative::Sym("id".into()), "sym:id"),
        ];
        for (r, s) in cases {
            assert_eq!(r.to_string(), s);
            assert_eq!(Representative::decode(s), Some(r));
        }
        for bad in [
            "", "x", "p:01", "p:-1", "q:1", "sym:", "f:B", "v:A::x", "arr:",
        ] {
            assert_eq!(Representative::decode(bad), None, "{bad}");
        }
    }

    #[test]
    fn hoisting_picks_topmost_declarer() {
        let (p, _) = setup("class A { field f: int }\nclass B extends A { field f: int; field g: int }\nclass C extends B { field h: int }");
        assert_eq!(hoist_field("C", "f", &p).unwrap(), "A");
        assert_eq!(hoist_field("B", "f", &p).unwrap(), "A");
        assert_eq!(hoist_field("C", "g", &p).unwrap(), "B");
        assert_eq!(hoist_field("C", "h", &p).unwrap(), "C");
        assert!(matches!(
            hoist_field("A", "h", &p),
            Err(AliasError::FieldNotFound { .. })
        ));
    }

    #[test]
    fn field_accesses_through_subtypes_share_representative() {
        let (p, ap) = setup(
            "class B { field f: int }\nclass C extends B {}\nclass U { method m(o: C, o2: B) {} }",
        );
        let m = p.methods().next().unwrap();
        let r1 = representative(
            LValue::Field {
                object: "o",
                field: "f",
            },
            m,
            &p,
            &ap,
        )
        .unwrap();
        let r2 = representative(
            LValue::Field {
                object: "o2",
                field: "f",
            },
            m,
            &p,
            &ap,
        )
        .unwrap();
        assert_eq!(r1, r2);
        assert_eq!(r1.to_string(), "f:B.f");
    }

    #[test]
    fn simple_variables() {
        let (p, ap) = setup("class U { method m(this, y: int) { var x: int } }");
        let m = p.methods().next().unwrap();
        assert_eq!(
            representative(LValue::Var("x"), m, &p, &ap)
                .unwrap()
                .to_string(),
            "v:U.m/2::x"
        );
        assert_eq!(
            representative(LValue::Var("y"), m, &p, &ap).unwrap(),
            Representative::Param(1)
        );
    }

    #[test]
    fn copies_merge_array_sets() {
        let (p, ap) =
            setup("class U { method m() { var a: int[]; var b: int[]; var c: int[]\nb := a } }");
        let m = p.methods().next().unwrap();
        let ra = representative(LValue::Element { array: "a" }, m, &p, &ap).unwrap();
        let rb = representative(LValue::Element { array: "b" }, m, &p, &ap).unwrap();
        let rc = representative(LValue::Element { array: "c" }, m, &p, &ap).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(ra.to_string(), "arr:U.m/0::a");
        assert_ne!(ra, rc);
    }

    #[test]
    fn no_arrays_no_partition() {
        let (_, ap) = setup("class U { method m(x: int) {} }");
        assert!(ap.is_empty());
    }

    #[test]
    fn call_bindings_cross_methods() {
        let (_, ap) = setup(
            "class U {\n method f(this, q: int[]) -> int[] { return q }\n method g(this) { var a: int[]; var r: int[]\n r := call U.f/2(this, a) }\n method h(this) { var z: int[] } }",
        );
        let sets = ap.sets();
        assert_eq!(
            sets.get("U.f/2#ret").unwrap(),
            &vec!["U.f/2#ret", "U.f/2::q", "U.g/1::a", "U.g/1::r"]
        );
        assert_eq!(sets.get("U.h/1::z").unwrap(), &vec!["U.h/1::z"]);
    }

    #[test]
    fn fields_merge_array_sets() {
        let (_, ap) = setup(
            "class H { field buf: int[] }\nclass U { method m(h: H) { var a: int[]; var b: int[]\n h.buf := a\n b := h.buf } }",
        );
        assert_eq!(ap.partition_id("U.m/1::b"), "H.buf");
        assert_eq!(ap.partition_id("U.m/1::a"), "H.buf");
    }
}
