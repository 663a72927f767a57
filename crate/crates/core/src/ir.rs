//! The textual object-oriented IR: classes, a single-inheritance hierarchy,
//! methods whose bodies are flat lists of three-address statements, and the
//! taint configuration (sources, sinks, entry points, pure library methods).
//!
//! A program text looks like
//!
//! ```text
//! class App extends Object {
//!   field buf: String[]
//!   method foo(this) -> String {
//!     var x: String
//!     x := call App.bar/1(this)
//!     return x
//!   }
//! }
//! extern class TelephonyManager { method getDeviceId/1(this) -> String }
//! ```
//!
//! Statements are separated by newlines or `;`. Instance methods name their
//! receiver `this` as the first parameter; the receiver is argument 0 at
//! call sites.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use sha2::{Digest, Sha256};
use thiserror::Error;

/// Root of the class hierarchy; implicitly declared.
pub const OBJECT: &str = "Object";
/// Implicit opaque string class.
pub const STRING: &str = "String";
/// Implicit class providing `Array.new/1(len)` for array allocation.
pub const ARRAY: &str = "Array";
/// Name of the implicit zero-argument allocator every class provides.
pub const ALLOC: &str = "new";

const PRIMITIVES: &[&str] = &[
    "int", "long", "short", "byte", "char", "boolean", "float", "double",
];
const KEYWORDS: &[&str] = &[
    "const", "call", "neg", "not", "goto", "label", "if", "return", "var", "null",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IrError {
    #[error("{line}:{col}: syntax error: expected {expected}, found {found}")]
    Syntax {
        line: usize,
        col: usize,
        expected: String,
        found: String,
    },
    #[error("{line}: unknown type `{name}`")]
    UnknownType { line: usize, name: String },
    #[error("{line}: duplicate label `{label}` in {method}")]
    DuplicateLabel {
        line: usize,
        method: String,
        label: String,
    },
    #[error("{line}: undefined label `{label}` in {method}")]
    UndefinedLabel {
        line: usize,
        method: String,
        label: String,
    },
    #[error("{line}: undeclared identifier `{name}` in {method}")]
    UndeclaredIdentifier {
        line: usize,
        method: String,
        name: String,
    },
    #[error("cyclic extends involving class `{0}`")]
    CyclicExtends(String),
    #[error("{line}: duplicate declaration `{name}`")]
    Duplicate { line: usize, name: String },
    #[error("{line}: {msg}")]
    Invalid { line: usize, msg: String },
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("unknown class `{0}`")]
    UnknownClass(String),
}

pub type Result<T, E = IrError> = std::result::Result<T, E>;

/// Globally unique method identity `Class.name/arity`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MethodId(String);

impl MethodId {
    pub fn new(class: &str, name: &str, arity: usize) -> Self {
        MethodId(format!("{class}.{name}/{arity}"))
    }

    pub fn parse(s: &str) -> Option<Self> {
        let (head, arity) = s.rsplit_once('/')?;
        let arity: usize = arity.parse().ok()?;
        let (class, name) = head.rsplit_once('.')?;
        if !is_ident(class) || !is_ident(name) {
            return None;
        }
        Some(Self::new(class, name, arity))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn class(&self) -> &str {
        self.0
            .rsplit_once('/')
            .unwrap()
            .0
            .rsplit_once('.')
            .unwrap()
            .0
    }

    pub fn name(&self) -> &str {
        self.0
            .rsplit_once('/')
            .unwrap()
            .0
            .rsplit_once('.')
            .unwrap()
            .1
    }

    pub fn arity(&self) -> usize {
        self.0.rsplit_once('/').unwrap().1.parse().unwrap()
    }
}

impl serde::Serialize for MethodId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A type as written: primitive, `void`, class name, or `T[]`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TypeName(String);

impl TypeName {
    pub fn new(s: impl Into<String>) -> Self {
        TypeName(s.into())
    }

    pub fn void() -> Self {
        TypeName("void".into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_void(&self) -> bool {
        self.0 == "void"
    }

    pub fn is_array(&self) -> bool {
        self.0.ends_with("[]")
    }

    pub fn is_primitive(&self) -> bool {
        PRIMITIVES.contains(&self.0.as_str())
    }

    /// The class name, when this is a (non-array) reference type.
    pub fn class_name(&self) -> Option<&str> {
        if self.is_void() || self.is_array() || self.is_primitive() {
            None
        } else {
            Some(&self.0)
        }
    }

    /// Innermost element type of an array type (itself otherwise).
    pub fn base(&self) -> &str {
        self.0.trim_end_matches("[]")
    }
}

impl fmt::Display for TypeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Literal {
    Int(i64),
    Str(String),
    Null,
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Int(i) => write!(f, "{i}"),
            Literal::Str(s) => write!(f, "{s:?}"),
            Literal::Null => f.write_str("null"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    And,
    Or,
    Xor,
    Shl,
    Shr,
}

impl BinOp {
    const ALL: [(BinOp, &'static str); 10] = [
        (BinOp::Add, "add"),
        (BinOp::Sub, "sub"),
        (BinOp::Mul, "mul"),
        (BinOp::Div, "div"),
        (BinOp::Rem, "rem"),
        (BinOp::And, "and"),
        (BinOp::Or, "or"),
        (BinOp::Xor, "xor"),
        (BinOp::Shl, "shl"),
        (BinOp::Shr, "shr"),
    ];

    fn from_name(s: &str) -> Option<Self> {
        Self::ALL.iter().find(|(_, n)| *n == s).map(|(op, _)| *op)
    }

    pub fn name(self) -> &'static str {
        Self::ALL.iter().find(|(op, _)| *op == self).unwrap().1
    }
}

/// Branch condition on a single variable compared against zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cond {
    Gt,
    Lt,
    Eq,
}

impl Cond {
    fn symbol(self) -> &'static str {
        match self {
            Cond::Gt => ">",
            Cond::Lt => "<",
            Cond::Eq => "=",
        }
    }
}

/// The thirteen statement forms of the IR.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StmtKind {
    Const {
        dst: String,
        value: Literal,
    },
    Copy {
        dst: String,
        src: String,
    },
    Unary {
        dst: String,
        op: UnOp,
        src: String,
    },
    Binary {
        dst: String,
        op: BinOp,
        lhs: String,
        rhs: String,
    },
    ArrayRead {
        dst: String,
        array: String,
        index: String,
    },
    ArrayWrite {
        array: String,
        index: String,
        src: String,
    },
    FieldRead {
        dst: String,
        object: String,
        field: String,
    },
    FieldWrite {
        object: String,
        field: String,
        src: String,
    },
    Call {
        ret: Option<String>,
        callee: MethodId,
        args: Vec<String>,
    },
    Return {
        value: Option<String>,
    },
    Goto {
        label: String,
    },
    Label {
        label: String,
    },
    If {
        var: String,
        cond: Cond,
        label: String,
    },
}

impl StmtKind {
    /// Short stable name of the production, used by coverage tests and diagnostics.
    pub fn production(&self) -> &'static str {
        match self {
            StmtKind::Const { .. } => "const",
            StmtKind::Copy { .. } => "copy",
            StmtKind::Unary { .. } => "unary",
            StmtKind::Binary { .. } => "binary",
            StmtKind::ArrayRead { .. } => "array-read",
            StmtKind::ArrayWrite { .. } => "array-write",
            StmtKind::FieldRead { .. } => "field-read",
            StmtKind::FieldWrite { .. } => "field-write",
            StmtKind::Call { .. } => "call",
            StmtKind::Return { .. } => "return",
            StmtKind::Goto { .. } => "goto",
            StmtKind::Label { .. } => "label",
            StmtKind::If { .. } => "if",
        }
    }

    /// Every identifier the statement mentions (variables only, no fields or labels).
    pub fn identifiers(&self) -> Vec<&str> {
        match self {
            StmtKind::Const { dst, .. } => vec![dst],
            StmtKind::Copy { dst, src } | StmtKind::Unary { dst, src, .. } => vec![dst, src],
            StmtKind::Binary { dst, lhs, rhs, .. } => vec![dst, lhs, rhs],
            StmtKind::ArrayRead { dst, array, index } => vec![dst, array, index],
            StmtKind::ArrayWrite { array, index, src } => vec![array, index, src],
            StmtKind::FieldRead { dst, object, .. } => vec![dst, object],
            StmtKind::FieldWrite { object, src, .. } => vec![object, src],
            StmtKind::Call { ret, args, .. } => {
                ret.iter().chain(args.iter()).map(String::as_str).collect()
            }
            StmtKind::Return { value } => value.iter().map(String::as_str).collect(),
            StmtKind::Goto { .. } | StmtKind::Label { .. } => vec![],
            StmtKind::If { var, .. } => vec![var],
        }
    }

    /// The simple variable this statement overwrites, if any.
    pub fn assigned_var(&self) -> Option<&str> {
        match self {
            StmtKind::Const { dst, .. }
            | StmtKind::Copy { dst, .. }
            | StmtKind::Unary { dst, .. }
            | StmtKind::Binary { dst, .. }
            | StmtKind::ArrayRead { dst, .. }
            | StmtKind::FieldRead { dst, .. } => Some(dst),
            StmtKind::Call { ret, .. } => ret.as_deref(),
            _ => None,
        }
    }
}

impl fmt::Display for StmtKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StmtKind::Const { dst, value } => write!(f, "{dst} := const {value}"),
            StmtKind::Copy { dst, src } => write!(f, "{dst} := {src}"),
            StmtKind::Unary { dst, op, src } => {
                let op = match op {
                    UnOp::Neg => "neg",
                    UnOp::Not => "not",
                };
                write!(f, "{dst} := {op} {src}")
            }
            StmtKind::Binary { dst, op, lhs, rhs } => {
                write!(f, "{dst} := {lhs} {} {rhs}", op.name())
            }
            StmtKind::ArrayRead { dst, array, index } => write!(f, "{dst} := {array}[{index}]"),
            StmtKind::ArrayWrite { array, index, src } => write!(f, "{array}[{index}] := {src}"),
            StmtKind::FieldRead { dst, object, field } => write!(f, "{dst} := {object}.{field}"),
            StmtKind::FieldWrite { object, field, src } => write!(f, "{object}.{field} := {src}"),
            StmtKind::Call { ret, callee, args } => {
                if let Some(r) = ret {
                    write!(f, "{r} := ")?;
                }
                write!(f, "call {callee}({})", args.join(", "))
            }
            StmtKind::Return { value: Some(v) } => write!(f, "return {v}"),
            StmtKind::Return { value: None } => f.write_str("return"),
            StmtKind::Goto { label } => write!(f, "goto {label}"),
            StmtKind::Label { label } => write!(f, "label {label}"),
            StmtKind::If { var, cond, label } => {
                write!(f, "if {var} {} 0 goto {label}", cond.symbol())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stmt {
    pub kind: StmtKind,
    /// 1-based source line.
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub ty: TypeName,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Method {
    pub id: MethodId,
    pub class: String,
    pub name: String,
    pub params: Vec<Param>,
    pub return_type: TypeName,
    pub locals: Vec<Param>,
    /// `None` for extern and interface methods.
    pub body: Option<Vec<Stmt>>,
    pub entry_point: bool,
    pub line: usize,
}

impl Method {
    pub fn is_instance(&self) -> bool {
        self.params.first().is_some_and(|p| p.name == "this")
    }

    pub fn body(&self) -> &[Stmt] {
        self.body.as_deref().unwrap_or(&[])
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn var_type(&self, name: &str) -> Option<&TypeName> {
        self.params
            .iter()
            .chain(self.locals.iter())
            .find(|p| p.name == name)
            .map(|p| &p.ty)
    }

    pub fn is_local(&self, name: &str) -> bool {
        self.locals.iter().any(|p| p.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassDecl {
    pub name: String,
    pub superclass: Option<String>,
    pub interfaces: Vec<String>,
    pub fields: Vec<Param>,
    pub methods: Vec<Method>,
    pub external: bool,
    pub interface: bool,
    /// Implicitly declared (`Object`, `String`, `Array`); never printed.
    pub builtin: bool,
    pub line: usize,
}

impl ClassDecl {
    pub fn field(&self, name: &str) -> Option<&Param> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn method(&self, name: &str, arity: usize) -> Option<&Method> {
        self.methods
            .iter()
            .find(|m| m.name == name && m.params.len() == arity)
    }
}

/// Sources, sinks, entry points and pure library methods.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TaintConfig {
    pub sources: BTreeMap<MethodId, String>,
    pub sinks: BTreeMap<MethodId, String>,
    pub entries: BTreeSet<MethodId>,
    pub pure: BTreeSet<MethodId>,
}

impl TaintConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TaintConfig::default();
        for (no, raw) in text.lines().enumerate() {
            let line = no + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let words: Vec<&str> = content.split_whitespace().collect();
            let bad = |msg: String| IrError::Config { line, msg };
            let method = |w: &str| {
                MethodId::parse(w).ok_or_else(|| bad(format!("malformed method id `{w}`")))
            };
            match words.as_slice() {
                ["source", m, sym] | ["sink", m, sym] => {
                    if !is_ident(sym) || KEYWORDS.contains(sym) {
                        return Err(bad(format!("malformed symbol `{sym}`")));
                    }
                    let id = method(m)?;
                    let map = if words[0] == "source" {
                        &mut cfg.sources
                    } else {
                        &mut cfg.sinks
                    };
                    if map.insert(id.clone(), sym.to_string()).is_some() {
                        return Err(bad(format!("`{id}` configured twice")));
                    }
                }
                ["entry", m] => {
                    cfg.entries.insert(method(m)?);
                }
                ["pure", m] => {
                    cfg.pure.insert(method(m)?);
                }
                _ => return Err(bad(format!("unrecognised directive `{content}`"))),
            }
        }
        for id in cfg.sources.keys() {
            if cfg.sinks.contains_key(id) {
                return Err(IrError::Config {
                    line: 0,
                    msg: format!("`{id}` is both a source and a sink"),
                });
            }
        }
        let src_syms: BTreeSet<&String> = cfg.sources.values().collect();
        if let Some(s) = cfg.sinks.values().find(|s| src_syms.contains(s)) {
            return Err(IrError::Config {
                line: 0,
                msg: format!("symbol `{s}` names both a source and a sink"),
            });
        }
        Ok(cfg)
    }

    pub fn source_symbols(&self) -> BTreeSet<&str> {
        self.sources.values().map(String::as_str).collect()
    }

    pub fn sink_symbols(&self) -> BTreeSet<&str> {
        self.sinks.values().map(String::as_str).collect()
    }

    /// All symbols b(SR ∪ SK), sorted.
    pub fn symbols(&self) -> BTreeSet<&str> {
        self.sources
            .values()
            .chain(self.sinks.values())
            .map(String::as_str)
            .collect()
    }
}

impl fmt::Display for TaintConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (m, s) in &self.sources {
            writeln!(f, "source {m} {s}")?;
        }
        for (m, s) in &self.sinks {
            writeln!(f, "sink {m} {s}")?;
        }
        for m in &self.entries {
            writeln!(f, "entry {m}")?;
        }
        for m in &self.pure {
            writeln!(f, "pure {m}")?;
        }
        Ok(())
    }
}

/// A parsed and validated program.
#[derive(Debug, Clone)]
pub struct Program {
    pub classes: Vec<ClassDecl>,
    pub config: TaintConfig,
    digest: String,
    class_index: HashMap<String, usize>,
    method_index: HashMap<MethodId, (usize, usize)>,
    /// Methods with bodies, sorted by id.
    app_methods: Vec<MethodId>,
}

impl Program {
    /// Content hash of the IR text and configuration text this program was parsed from.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn class(&self, name: &str) -> Option<&ClassDecl> {
        self.class_index.get(name).map(|&i| &self.classes[i])
    }

    /// Any declared method, including extern and interface ones.
    pub fn method(&self, id: &MethodId) -> Option<&Method> {
        self.method_index
            .get(id)
            .map(|&(c, m)| &self.classes[c].methods[m])
    }

    /// The methods that carry bodies (the ones a certificate covers), sorted by id.
    pub fn methods(&self) -> impl ExactSizeIterator<Item = &Method> + '_ {
        self.app_methods.iter().map(|id| self.method(id).unwrap())
    }

    pub fn method_ids(&self) -> &[MethodId] {
        &self.app_methods
    }

    /// `c` followed by its superclasses up to the root.
    pub fn superchain(&self, c: &str) -> Result<Vec<&str>> {
        let mut decl = self
            .class(c)
            .ok_or_else(|| IrError::UnknownClass(c.to_string()))?;
        let mut chain = vec![decl.name.as_str()];
        while let Some(sup) = &decl.superclass {
            decl = self
                .class(sup)
                .ok_or_else(|| IrError::UnknownClass(sup.clone()))?;
            if chain.len() > self.classes.len() {
                return Err(IrError::CyclicExtends(c.to_string()));
            }
            chain.push(decl.name.as_str());
        }
        Ok(chain)
    }

    /// Whether `sub` is `sup` or (transitively) extends or implements it.
    pub fn is_subtype(&self, sub: &str, sup: &str) -> bool {
        let mut seen = HashSet::new();
        let mut stack = vec![sub];
        while let Some(c) = stack.pop() {
            if c == sup {
                return true;
            }
            if !seen.insert(c) {
                continue;
            }
            if let Some(decl) = self.class(c) {
                stack.extend(decl.superclass.as_deref());
                stack.extend(decl.interfaces.iter().map(String::as_str));
            }
        }
        false
    }

    /// Declaration of `name/arity` visible from class `c`: the nearest declaration in
    /// its superchain, then in implemented interfaces.
    pub fn lookup_method(&self, c: &str, name: &str, arity: usize) -> Option<&Method> {
        let chain = self.superchain(c).ok()?;
        for cls in &chain {
            if let Some(m) = self.class(cls).and_then(|d| d.method(name, arity)) {
                return Some(m);
            }
        }
        let mut seen = HashSet::new();
        let mut stack: Vec<&str> = chain
            .iter()
            .filter_map(|c| self.class(c))
            .flat_map(|d| d.interfaces.iter().map(String::as_str))
            .collect();
        while let Some(i) = stack.pop() {
            if !seen.insert(i) {
                continue;
            }
            if let Some(d) = self.class(i) {
                if let Some(m) = d.method(name, arity) {
                    return Some(m);
                }
                stack.extend(d.interfaces.iter().map(String::as_str));
            }
        }
        None
    }

    fn type_exists(&self, ty: &TypeName) -> bool {
        let base = ty.base();
        ty.is_void() && !ty.is_array()
            || PRIMITIVES.contains(&base)
            || self.class_index.contains_key(base)
    }
}

impl fmt::Display for Program {
    /// Canonical text form; reparses to a structurally identical program.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in self.classes.iter().filter(|c| !c.builtin) {
            if c.external {
                f.write_str("extern ")?;
            }
            if c.interface {
                write!(f, "interface {}", c.name)?;
                if !c.interfaces.is_empty() {
                    write!(f, " extends {}", c.interfaces.join(", "))?;
                }
            } else {
                write!(f, "class {}", c.name)?;
                if let Some(s) = &c.superclass {
                    write!(f, " extends {s}")?;
                }
                if !c.interfaces.is_empty() {
                    write!(f, " implements {}", c.interfaces.join(", "))?;
                }
            }
            f.write_str(" {\n")?;
            for fld in &c.fields {
                writeln!(f, "  field {}: {}", fld.name, fld.ty)?;
            }
            for m in &c.methods {
                let params: Vec<String> = m
                    .params
                    .iter()
                    .map(|p| {
                        if p.name == "this" {
                            "this".to_string()
                        } else {
                            format!("{}: {}", p.name, p.ty)
                        }
                    })
                    .collect();
                write!(
                    f,
                    "  method {}/{}({})",
                    m.name,
                    m.params.len(),
                    params.join(", ")
                )?;
                if !m.return_type.is_void() {
                    write!(f, " -> {}", m.return_type)?;
                }
                match &m.body {
                    None => f.write_str("\n")?,
                    Some(body) => {
                        f.write_str(" {\n")?;
                        for l in &m.locals {
                            writeln!(f, "    var {}: {}", l.name, l.ty)?;
                        }
                        for s in body {
                            writeln!(f, "    {}", s.kind)?;
                        }
                        f.write_str("  }\n")?;
                    }
                }
            }
            f.write_str("}\n")?;
        }
        Ok(())
    }
}

pub fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_' || c == '$')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '$')
}

/// Hex SHA-256 over the program text and configuration text.
pub fn content_digest(ir_text: &str, config_text: &str) -> String {
    let mut h = Sha256::new();
    h.update((ir_text.len() as u64).to_le_bytes());
    h.update(ir_text.as_bytes());
    h.update(config_text.as_bytes());
    hex::encode(h.finalize())
}

/// Parse and validate a program together with its taint configuration.
pub fn parse_program(text: &str, config_text: &str) -> Result<Program> {
    let config = TaintConfig::parse(config_text)?;
    let tokens = lex(text)?;
    let mut parser = Parser {
        toks: tokens,
        pos: 0,
    };
    let mut classes = builtin_classes();
    while !parser.at_end() {
        classes.push(parser.class_decl()?);
    }
    build_program(classes, config, content_digest(text, config_text))
}

fn builtin_classes() -> Vec<ClassDecl> {
    let class = |name: &str, sup: Option<&str>, methods: Vec<Method>| ClassDecl {
        name: name.into(),
        superclass: sup.map(Into::into),
        interfaces: vec![],
        fields: vec![],
        methods,
        external: true,
        interface: false,
        builtin: true,
        line: 0,
    };
    let array_new = Method {
        id: MethodId::new(ARRAY, ALLOC, 1),
        class: ARRAY.into(),
        name: ALLOC.into(),
        params: vec![Param {
            name: "len".into(),
            ty: TypeName::new("int"),
        }],
        return_type: TypeName::new("Object[]"),
        locals: vec![],
        body: None,
        entry_point: false,
        line: 0,
    };
    vec![
        class(OBJECT, None, vec![]),
        class(STRING, Some(OBJECT), vec![]),
        class(ARRAY, Some(OBJECT), vec![array_new]),
    ]
}

fn build_program(
    mut classes: Vec<ClassDecl>,
    config: TaintConfig,
    digest: String,
) -> Result<Program> {
    let mut class_index = HashMap::new();
    for (i, c) in classes.iter().enumerate() {
        if class_index.insert(c.name.clone(), i).is_some() {
            return Err(IrError::Duplicate {
                line: c.line,
                name: c.name.clone(),
            });
        }
    }
    // Classes without an explicit superclass extend Object.
    for c in classes.iter_mut() {
        if c.superclass.is_none() && !c.interface && c.name != OBJECT {
            c.superclass = Some(OBJECT.into());
        }
    }
    let mut program = Program {
        classes,
        config,
        digest,
        class_index,
        method_index: HashMap::new(),
        app_methods: vec![],
    };
    for c in &program.classes {
        if let Some(sup) = &c.superclass {
            match program.class(sup) {
                None => {
                    return Err(IrError::UnknownType {
                        line: c.line,
                        name: sup.clone(),
                    })
                }
                Some(s) if s.interface => {
                    return Err(IrError::Invalid {
                        line: c.line,
                        msg: format!("`{}` extends interface `{sup}`", c.name),
                    })
                }
                _ => {}
            }
        }
        for i in &c.interfaces {
            match program.class(i) {
                None => {
                    return Err(IrError::UnknownType {
                        line: c.line,
                        name: i.clone(),
                    })
                }
                Some(d) if !d.interface => {
                    return Err(IrError::Invalid {
                        line: c.line,
                        msg: format!("`{i}` is not an interface"),
                    })
                }
                _ => {}
            }
        }
    }
    for c in &program.classes {
        program.superchain(&c.name)?;
        if c.interface && program.is_interface_cycle(&c.name) {
            return Err(IrError::CyclicExtends(c.name.clone()));
        }
    }

    let mut method_index = HashMap::new();
    let mut app = vec![];
    for (ci, c) in program.classes.iter().enumerate() {
        let mut fields = HashSet::new();
        for f in &c.fields {
            if !fields.insert(&f.name) {
                return Err(IrError::Duplicate {
                    line: c.line,
                    name: format!("{}.{}", c.name, f.name),
                });
            }
            program.check_type(&f.ty, c.line)?;
        }
        for (mi, m) in c.methods.iter().enumerate() {
            if method_index.insert(m.id.clone(), (ci, mi)).is_some() {
                return Err(IrError::Duplicate {
                    line: m.line,
                    name: m.id.to_string(),
                });
            }
            program.check_method(m)?;
            if m.body.is_some() {
                app.push(m.id.clone());
            }
        }
    }
    app.sort();
    program.method_index = method_index;
    program.app_methods = app;

    let cfg = program.config.clone();
    for id in cfg
        .sources
        .keys()
        .chain(cfg.sinks.keys())
        .chain(cfg.entries.iter())
        .chain(cfg.pure.iter())
    {
        let known = program.method(id).is_some()
            || (id.name() == ALLOC && id.arity() == 0 && program.class(id.class()).is_some());
        if !known {
            return Err(IrError::Config {
                line: 0,
                msg: format!("configured method `{id}` is not declared"),
            });
        }
    }
    for id in &cfg.entries {
        if let Some(&(c, m)) = program.method_index.get(id) {
            program.classes[c].methods[m].entry_point = true;
        }
    }
    Ok(program)
}

impl Program {
    fn is_interface_cycle(&self, start: &str) -> bool {
        let mut stack: Vec<(&str, usize)> = vec![(start, 0)];
        let mut visited = HashSet::new();
        while let Some((c, depth)) = stack.pop() {
            if depth > 0 && c == start {
                return true;
            }
            if !visited.insert(c) {
                continue;
            }
            if let Some(d) = self.class(c) {
                for i in &d.interfaces {
                    stack.push((i, depth + 1));
                }
            }
        }
        false
    }

    fn check_type(&self, ty: &TypeName, line: usize) -> Result<()> {
        if self.type_exists(ty) {
            Ok(())
        } else {
            Err(IrError::UnknownType {
                line,
                name: ty.to_string(),
            })
        }
    }

    fn check_method(&self, m: &Method) -> Result<()> {
        let mut names = HashSet::new();
        for p in m.params.iter().chain(m.locals.iter()) {
            if !names.insert(p.name.as_str()) {
                return Err(IrError::Duplicate {
                    line: m.line,
                    name: format!("{}::{}", m.id, p.name),
                });
            }
            if p.ty.is_void() {
                return Err(IrError::Invalid {
                    line: m.line,
                    msg: format!("`{}` declared void", p.name),
                });
            }
            self.check_type(&p.ty, m.line)?;
        }
        if let Some(pos) = m.params.iter().position(|p| p.name == "this") {
            if pos != 0 {
                return Err(IrError::Invalid {
                    line: m.line,
                    msg: "`this` must be the first parameter".into(),
                });
            }
        }
        self.check_type(&m.return_type, m.line)?;
        let Some(body) = &m.body else {
            return Ok(());
        };
        let mut labels = HashSet::new();
        for s in body {
            if let StmtKind::Label { label } = &s.kind {
                if !labels.insert(label.as_str()) {
                    return Err(IrError::DuplicateLabel {
                        line: s.line,
                        method: m.id.to_string(),
                        label: label.clone(),
                    });
                }
            }
        }
        for s in body {
            for id in s.kind.identifiers() {
                if m.var_type(id).is_none() {
                    return Err(IrError::UndeclaredIdentifier {
                        line: s.line,
                        method: m.id.to_string(),
                        name: id.to_string(),
                    });
                }
            }
            if let StmtKind::Goto { label } | StmtKind::If { label, .. } = &s.kind {
                if !labels.contains(label.as_str()) {
                    return Err(IrError::UndefinedLabel {
                        line: s.line,
                        method: m.id.to_string(),
                        label: label.clone(),
                    });
                }
            }
            if let StmtKind::Return { value: None } = &s.kind {
                if !m.return_type.is_void() {
                    return Err(IrError::Invalid {
                        line: s.line,
                        msg: format!("{} must return a value", m.id),
                    });
                }
            }
        }
        if !m.return_type.is_void() {
            if let Some(last) = body.last() {
                if !matches!(last.kind, StmtKind::Return { .. } | StmtKind::Goto { .. }) {
                    return Err(IrError::Invalid {
                        line: last.line,
                        msg: format!("{} can fall off its end without returning", m.id),
                    });
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Lexing and parsing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Str(String),
    Punct(&'static str),
    Newline,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(i) => write!(f, "`{i}`"),
            Tok::Str(s) => write!(f, "{s:?}"),
            Tok::Punct(p) => write!(f, "`{p}`"),
            Tok::Newline => f.write_str("end of line"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

const PUNCTS: &[&str] = &[
    ":=", "->", "[]", ":", ".", "/", "(", ")", ",", "[", "]", "{", "}", ">", "<", "=", ";",
];

fn lex(text: &str) -> Result<Vec<Token>> {
    let mut out = vec![];
    for (ln, line) in text.lines().enumerate() {
        let line_no = ln + 1;
        let bytes = line.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i] as char;
            let col = i + 1;
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            if c == '#' || line[i..].starts_with("//") {
                break;
            }
            if c.is_ascii_alphabetic() || c == '_' || c == '$' {
                let start = i;
                while i < bytes.len()
                    && ((bytes[i] as char).is_ascii_alphanumeric()
                        || matches!(bytes[i], b'_' | b'$'))
                {
                    i += 1;
                }
                out.push(Token {
                    tok: Tok::Ident(line[start..i].to_string()),
                    line: line_no,
                    col,
                });
                continue;
            }
            if c.is_ascii_digit() || (c == '-' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit))
            {
                let start = i;
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let v = line[start..i].parse().map_err(|_| IrError::Syntax {
                    line: line_no,
                    col,
                    expected: "integer literal".into(),
                    found: line[start..i].to_string(),
                })?;
                out.push(Token {
                    tok: Tok::Int(v),
                    line: line_no,
                    col,
                });
                continue;
            }
            if c == '"' {
                let mut s = String::new();
                i += 1;
                let mut closed = false;
                while i < bytes.len() {
                    let ch = line[i..].chars().next().unwrap();
                    i += ch.len_utf8();
                    match ch {
                        '"' => {
                            closed = true;
                            break;
                        }
                        '\\' if i < bytes.len() => {
                            let esc = line[i..].chars().next().unwrap();
                            i += esc.len_utf8();
                            s.push(match esc {
                                'n' => '\n',
                                't' => '\t',
                                other => other,
                            });
                        }
                        other => s.push(other),
                    }
                }
                if !closed {
                    return Err(IrError::Syntax {
                        line: line_no,
                        col,
                        expected: "closing `\"`".into(),
                        found: "end of line".into(),
                    });
                }
                out.push(Token {
                    tok: Tok::Str(s),
                    line: line_no,
                    col,
                });
                continue;
            }
            match PUNCTS.iter().find(|p| line[i..].starts_with(**p)) {
                Some(p) => {
                    out.push(Token {
                        tok: Tok::Punct(p),
                        line: line_no,
                        col,
                    });
                    i += p.len();
                }
                None => {
                    return Err(IrError::Syntax {
                        line: line_no,
                        col,
                        expected: "token".into(),
                        found: format!("`{c}`"),
                    })
                }
            }
        }
        out.push(Token {
            tok: Tok::Newline,
            line: line_no,
            col: line.len() + 1,
        });
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn skip_newlines(&mut self) {
        while matches!(
            self.toks.get(self.pos),
            Some(Token {
                tok: Tok::Newline,
                ..
            })
        ) {
            self.pos += 1;
        }
    }

    fn at_end(&mut self) -> bool {
        self.skip_newlines();
        self.pos >= self.toks.len()
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k).map(|t| &t.tok)
    }

    fn line(&self) -> usize {
        self.toks
            .get(self.pos)
            .or_else(|| self.toks.last())
            .map_or(1, |t| t.line)
    }

    fn err<T>(&self, expected: &str) -> Result<T> {
        let (line, col, found) = match self.toks.get(self.pos) {
            Some(t) => (t.line, t.col, t.tok.to_string()),
            None => (self.line(), 1, "end of input".into()),
        };
        Err(IrError::Syntax {
            line,
            col,
            expected: expected.into(),
            found,
        })
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Some(Tok::Punct(q)) if *q == p)
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == w)
    }

    fn punct(&mut self, p: &str) -> Result<()> {
        if self.is_punct(p) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(&format!("`{p}`"))
        }
    }

    fn word(&mut self, w: &str) -> Result<()> {
        if self.is_word(w) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(&format!("`{w}`"))
        }
    }

    fn ident(&mut self) -> Result<String> {
        match self.peek() {
            Some(Tok::Ident(s)) if !KEYWORDS.contains(&s.as_str()) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => self.err("identifier"),
        }
    }

    fn int(&mut self) -> Result<i64> {
        match self.peek() {
            Some(Tok::Int(i)) => {
                let i = *i;
                self.pos += 1;
                Ok(i)
            }
            _ => self.err("integer"),
        }
    }

    fn type_name(&mut self) -> Result<TypeName> {
        let mut s = self.ident()?;
        while self.is_punct("[]")
            || (self.is_punct("[") && self.peek_at(1) == Some(&Tok::Punct("]")))
        {
            if self.is_punct("[]") {
                self.pos += 1;
            } else {
                self.pos += 2;
            }
            s.push_str("[]");
        }
        Ok(TypeName(s))
    }

    fn ident_list(&mut self) -> Result<Vec<String>> {
        let mut v = vec![self.ident()?];
        while self.is_punct(",") {
            self.pos += 1;
            v.push(self.ident()?);
        }
        Ok(v)
    }

    fn class_decl(&mut self) -> Result<ClassDecl> {
        self.skip_newlines();
        let line = self.line();
        let external = if self.is_word("extern") {
            self.pos += 1;
            true
        } else {
            false
        };
        let interface = if self.is_word("interface") {
            self.pos += 1;
            true
        } else {
            self.word("class")
                .or_else(|_| self.err("`class`, `extern class` or `interface`"))?;
            false
        };
        let name = self.ident()?;
        let mut superclass = None;
        let mut interfaces = vec![];
        if self.is_word("extends") {
            self.pos += 1;
            if interface {
                interfaces = self.ident_list()?;
            } else {
                superclass = Some(self.ident()?);
            }
        }
        if !interface && self.is_word("implements") {
            self.pos += 1;
            interfaces = self.ident_list()?;
        }
        self.skip_newlines();
        self.punct("{")?;
        let mut fields = vec![];
        let mut methods = vec![];
        loop {
            self.skip_newlines();
            if self.is_punct("}") {
                self.pos += 1;
                break;
            }
            if self.is_word("field") {
                self.pos += 1;
                let fname = self.ident()?;
                self.punct(":")?;
                let ty = self.type_name()?;
                fields.push(Param { name: fname, ty });
                self.end_of_item()?;
            } else if self.is_word("method") {
                methods.push(self.method_decl(&name, external || interface)?);
            } else {
                return self.err("`field`, `method` or `}`");
            }
        }
        Ok(ClassDecl {
            name,
            superclass,
            interfaces,
            fields,
            methods,
            external,
            interface,
            builtin: false,
            line,
        })
    }

    fn end_of_item(&mut self) -> Result<()> {
        match self.peek() {
            Some(Tok::Newline) | None => Ok(()),
            Some(Tok::Punct(";")) => {
                self.pos += 1;
                Ok(())
            }
            Some(Tok::Punct("}")) => Ok(()),
            _ => self.err("end of line"),
        }
    }

    fn method_decl(&mut self, class: &str, bodiless: bool) -> Result<Method> {
        let line = self.line();
        self.word("method")?;
        let name = self.ident()?;
        let declared_arity = if self.is_punct("/") {
            self.pos += 1;
            Some(self.int()?)
        } else {
            None
        };
        self.punct("(")?;
        let mut params = vec![];
        if !self.is_punct(")") {
            loop {
                let pname = if self.is_word("this") {
                    self.pos += 1;
                    "this".to_string()
                } else {
                    self.ident()?
                };
                let ty = if self.is_punct(":") {
                    self.pos += 1;
                    self.type_name()?
                } else if pname == "this" {
                    TypeName(class.to_string())
                } else {
                    TypeName(OBJECT.into())
                };
                params.push(Param { name: pname, ty });
                if self.is_punct(",") {
                    self.pos += 1;
                } else {
                    break;
                }
            }
        }
        self.punct(")")?;
        if let Some(a) = declared_arity {
            if a < 0 || a as usize != params.len() {
                return Err(IrError::Invalid {
                    line,
                    msg: format!(
                        "{class}.{name}: declared arity {a} but {} parameters",
                        params.len()
                    ),
                });
            }
        }
        let return_type = if self.is_punct("->") {
            self.pos += 1;
            self.type_name()?
        } else {
            TypeName::void()
        };
        let id = MethodId::new(class, &name, params.len());
        let (locals, body) = if self.is_punct("{") {
            if bodiless {
                return Err(IrError::Invalid {
                    line,
                    msg: format!("{id}: extern and interface methods have no body"),
                });
            }
            self.pos += 1;
            let (locals, body) = self.body()?;
            (locals, Some(body))
        } else {
            if !bodiless {
                return self.err("`{`");
            }
            self.end_of_item()?;
            (vec![], None)
        };
        Ok(Method {
            id,
            class: class.to_string(),
            name,
            params,
            return_type,
            locals,
            body,
            entry_point: false,
            line,
        })
    }

    fn body(&mut self) -> Result<(Vec<Param>, Vec<Stmt>)> {
        let mut locals = vec![];
        let mut stmts = vec![];
        loop {
            while matches!(self.peek(), Some(Tok::Newline) | Some(Tok::Punct(";"))) {
                self.pos += 1;
            }
            if self.is_punct("}") {
                self.pos += 1;
                return Ok((locals, stmts));
            }
            if self.peek().is_none() {
                return self.err("`}`");
            }
            let line = self.line();
            if self.is_word("var") {
                self.pos += 1;
                let name = self.ident()?;
                self.punct(":")?;
                let ty = self.type_name()?;
                locals.push(Param { name, ty });
            } else {
                let kind = self.stmt()?;
                stmts.push(Stmt { kind, line });
            }
            match self.peek() {
                Some(Tok::Newline) | Some(Tok::Punct(";")) | Some(Tok::Punct("}")) => {}
                _ => return self.err("end of statement"),
            }
        }
    }

    fn method_ref(&mut self) -> Result<MethodId> {
        let class = self.ident()?;
        self.punct(".")?;
        let name = self.ident()?;
        self.punct("/")?;
        let arity = self.int()?;
        if arity < 0 {
            return self.err("non-negative arity");
        }
        Ok(MethodId::new(&class, &name, arity as usize))
    }

    fn call_tail(&mut self, ret: Option<String>) -> Result<StmtKind> {
        self.word("call")?;
        let callee = self.method_ref()?;
        self.punct("(")?;
        let args = if self.is_punct(")") {
            vec![]
        } else {
            self.ident_list()?
        };
        self.punct(")")?;
        if args.len() != callee.arity() {
            return self.err(&format!("{} arguments for {callee}", callee.arity()));
        }
        Ok(StmtKind::Call { ret, callee, args })
    }

    fn stmt(&mut self) -> Result<StmtKind> {
        if self.is_word("goto") {
            self.pos += 1;
            return Ok(StmtKind::Goto {
                label: self.ident()?,
            });
        }
        if self.is_word("label") {
            self.pos += 1;
            return Ok(StmtKind::Label {
                label: self.ident()?,
            });
        }
        if self.is_word("return") {
            self.pos += 1;
            let value = match self.peek() {
                Some(Tok::Ident(_)) => Some(self.ident()?),
                _ => None,
            };
            return Ok(StmtKind::Return { value });
        }
        if self.is_word("call") {
            return self.call_tail(None);
        }
        if self.is_word("if") {
            self.pos += 1;
            let var = self.ident()?;
            let cond = if self.is_punct(">") {
                Cond::Gt
            } else if self.is_punct("<") {
                Cond::Lt
            } else if self.is_punct("=") {
                Cond::Eq
            } else {
                return self.err("`>`, `<` or `=`");
            };
            self.pos += 1;
            if self.int()? != 0 {
                self.pos -= 1;
                return self.err("`0`");
            }
            self.word("goto")?;
            let label = self.ident()?;
            return Ok(StmtKind::If { var, cond, label });
        }
        let lhs = self.ident()?;
        if self.is_punct("[") {
            self.pos += 1;
            let index = self.ident()?;
            self.punct("]")?;
            self.punct(":=")?;
            let src = self.ident()?;
            return Ok(StmtKind::ArrayWrite {
                array: lhs,
                index,
                src,
            });
        }
        if self.is_punct(".") {
            self.pos += 1;
            let field = self.ident()?;
            self.punct(":=")?;
            let src = self.ident()?;
            return Ok(StmtKind::FieldWrite {
                object: lhs,
                field,
                src,
            });
        }
        self.punct(":=")?;
        let dst = lhs;
        if self.is_word("const") {
            self.pos += 1;
            let value = match self.peek().cloned() {
                Some(Tok::Int(i)) => Literal::Int(i),
                Some(Tok::Str(s)) => Literal::Str(s),
                Some(Tok::Ident(s)) if s == "null" => Literal::Null,
                _ => return self.err("literal"),
            };
            self.pos += 1;
            return Ok(StmtKind::Const { dst, value });
        }
        if self.is_word("call") {
            return self.call_tail(Some(dst));
        }
        if self.is_word("neg") || self.is_word("not") {
            let op = if self.is_word("neg") {
                UnOp::Neg
            } else {
                UnOp::Not
            };
            self.pos += 1;
            let src = self.ident()?;
            return Ok(StmtKind::Unary { dst, op, src });
        }
        let src = self.ident()?;
        if self.is_punct("[") {
            self.pos += 1;
            let index = self.ident()?;
            self.punct("]")?;
            return Ok(StmtKind::ArrayRead {
                dst,
                array: src,
                index,
            });
        }
        if self.is_punct(".") {
            self.pos += 1;
            let field = self.ident()?;
            return Ok(StmtKind::FieldRead {
                dst,
                object: src,
                field,
            });
        }
        if let Some(Tok::Ident(op)) = self.peek() {
            let Some(op) = BinOp::from_name(op) else {
                return self.err("binary operator");
            };
            self.pos += 1;
            let rhs = self.ident()?;
            return Ok(StmtKind::Binary {
                dst,
                op,
                lhs: src,
                rhs,
            });
        }
        Ok(StmtKind::Copy { dst, src })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Program> {
        parse_program(text, "")
    }

    #[test]
    fn empty_program_has_no_methods() {
        let p = parse("").unwrap();
        assert_eq!(p.methods().len(), 0);
    }

    #[test]
    fn binary_then_return() {
        let p = parse(
            "class A { method f(y: int, z: int) -> int { var x: int; x := y add z; return x } }",
        )
        .unwrap();
        let m = p.methods().next().unwrap();
        let kinds: Vec<_> = m.body().iter().map(|s| s.kind.clone()).collect();
        assert_eq!(
            kinds,
            vec![
                StmtKind::Binary {
                    dst: "x".into(),
                    op: BinOp::Add,
                    lhs: "y".into(),
                    rhs: "z".into()
                },
                StmtKind::Return {
                    value: Some("x".into())
                }
            ]
        );
    }

    #[test]
    fn every_production_parses() {
        let text = r#"
class A {
  field f: int
  field arr: int[]
  method m(this, y: int, o: A, a: int[]) -> int {
    var x: int
    x := const 5
    x := y
    x := neg y
    x := y add y
    x := a[y]
    a[y] := x
    x := o.f
    o.f := x
    x := call A.m/4(this, y, o, a)
    call A.m/4(this, y, o, a)
    if x > 0 goto L
    goto L
    label L
    return x
  }
}
"#;
        let p = parse(text).unwrap();
        let m = p.methods().next().unwrap();
        let prods: BTreeSet<&str> = m.body().iter().map(|s| s.kind.production()).collect();
        assert_eq!(prods.len(), 13, "{prods:?}");
    }

    #[test]
    fn superchain_walks_to_root() {
        let p = parse("class A {}\nclass B extends A {}\nclass C extends B {}").unwrap();
        assert_eq!(p.superchain("C").unwrap(), vec!["C", "B", "A", OBJECT]);
        assert_eq!(p.superchain(OBJECT).unwrap(), vec![OBJECT]);
        assert!(matches!(
            p.superchain("Nope"),
            Err(IrError::UnknownClass(_))
        ));
    }

    #[test]
    fn interfaces_are_not_in_superchain() {
        let p = parse("interface I {}\nclass A implements I {}").unwrap();
        assert_eq!(p.superchain("A").unwrap(), vec!["A", OBJECT]);
        assert!(p.is_subtype("A", "I"));
    }

    #[test]
    fn cyclic_extends_rejected() {
        let err = parse("class A extends B {}\nclass B extends A {}").unwrap_err();
        assert!(matches!(err, IrError::CyclicExtends(_)), "{err}");
    }

    #[test]
    fn unknown_type_rejected() {
        let err = parse("class A { field f: Nope }").unwrap_err();
        assert!(matches!(err, IrError::UnknownType { .. }), "{err}");
    }

    #[test]
    fn duplicate_label_rejected() {
        let err = parse("class A { method m() { label L; label L } }").unwrap_err();
        assert!(matches!(err, IrError::DuplicateLabel { .. }), "{err}");
    }

    #[test]
    fn undefined_label_rejected() {
        let err = parse("class A { method m() { goto L } }").unwrap_err();
        assert!(matches!(err, IrError::UndefinedLabel { .. }), "{err}");
    }

    #[test]
    fn undeclared_identifier_rejected() {
        let err = parse("class A { method m() -> int { return q } }").unwrap_err();
        assert!(matches!(err, IrError::UndeclaredIdentifier { .. }), "{err}");
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse("class A {\n  method m() {\n    x := := y\n  }\n}").unwrap_err();
        match err {
            IrError::Syntax { line, col, .. } => assert_eq!((line, col), (3, 10)),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn missing_return_rejected() {
        let err = parse("class A { method m(y: int) -> int { var x: int; x := y } }").unwrap_err();
        assert!(matches!(err, IrError::Invalid { .. }), "{err}");
    }

    #[test]
    fn config_rejects_source_that_is_sink() {
        let ir = "extern class T { method g/1(this) -> String }";
        let err = parse_program(ir, "source T.g/1 a\nsink T.g/1 b").unwrap_err();
        assert!(matches!(err, IrError::Config { .. }), "{err}");
        let err = parse_program(ir, "source T.g/1 a\nsink T.h/1 a").unwrap_err();
        assert!(matches!(err, IrError::Config { .. }), "{err}");
    }

    #[test]
    fn config_marks_entry_points() {
        let p = parse_program("class A { method m() {} }", "entry A.m/0").unwrap();
        assert!(p.methods().next().unwrap().entry_point);
    }

    #[test]
    fn printed_form_is_canonical() {
        let text = "class A { field f: int[]\n method m(this, y: int) -> int { var x: int; x := y; if x < 0 goto E; x := this.f; label E; return x } }\nextern class T { method g/1(this) -> String }";
        let p = parse(text).unwrap();
        let printed = p.to_string();
        let q = parse(&printed).unwrap();
        assert_eq!(q.to_string(), printed);
        assert_eq!(p.methods().len(), q.methods().len());
        for (a, b) in p.methods().zip(q.methods()) {
            let ka: Vec<_> = a.body().iter().map(|s| &s.kind).collect();
            let kb: Vec<_> = b.body().iter().map(|s| &s.kind).collect();
            assert_eq!(
                (&a.id, &a.params, &a.locals, ka),
                (&b.id, &b.params, &b.locals, kb)
            );
        }
    }

    #[test]
    fn method_id_round_trip() {
        let id = MethodId::new("App", "foo", 2);
        assert_eq!(id.as_str(), "App.foo/2");
        assert_eq!(MethodId::parse("App.foo/2"), Some(id.clone()));
        assert_eq!((id.class(), id.name(), id.arity()), ("App", "foo", 2));
        assert_eq!(MethodId::parse("App.foo"), None);
    }
}
