//! The guarded-command modeling language: AST, static checks and a reference
//! semantics.
//!
//! A program declares integer variables over bounded domains, a set of
//! probabilistic guarded commands and (optionally) an init block whose
//! satisfying evaluations are the entry points of the family members.

mod explicit;
mod parse;
#[cfg(test)]
mod tests;

pub use explicit::{explicit_semantics, ExplicitError, ExplicitGraph};
pub use parse::parse;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

/// Inclusive integer interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Domain {
    pub lo: i64,
    pub hi: i64,
}

impl Domain {
    pub fn new(lo: i64, hi: i64) -> Self {
        assert!(lo <= hi, "empty domain");
        Domain { lo, hi }
    }

    pub fn size(&self) -> u64 {
        (self.hi - self.lo) as u64 + 1
    }

    pub fn contains(&self, v: i64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn values(&self) -> impl Iterator<Item = i64> + '_ {
        self.lo..=self.hi
    }
}

/// One variable declaration; `initer` is the optional per-variable
/// initializer used when the program has no init block.
#[derive(Clone, Debug)]
pub struct VarDecl {
    pub name: String,
    pub domain: Domain,
    pub initer: Option<i64>,
    pub line: usize,
}

// source positions are diagnostics, not structure
impl PartialEq for VarDecl {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.domain == other.domain && self.initer == other.initer
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    /// Integer division, truncating towards zero.
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn test(self, a: i64, b: i64) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        }
    }
}

/// Expression tree over integer arithmetic and Boolean connectives.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Int(i64),
    Bool(bool),
    Var(String),
    Arith(ArithOp, Box<Expr>, Box<Expr>),
    Cmp(CmpOp, Box<Expr>, Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
}

impl Expr {
    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn eq_int(name: impl Into<String>, v: i64) -> Expr {
        Expr::Cmp(CmpOp::Eq, Box::new(Expr::var(name)), Box::new(Expr::Int(v)))
    }

    pub fn and(a: Expr, b: Expr) -> Expr {
        Expr::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Expr, b: Expr) -> Expr {
        Expr::Or(Box::new(a), Box::new(b))
    }

    /// Variables referenced anywhere in the expression.
    pub fn variables(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            Expr::Int(_) | Expr::Bool(_) => {}
            Expr::Var(name) => {
                out.insert(name);
            }
            Expr::Arith(_, a, b) | Expr::Cmp(_, a, b) | Expr::And(a, b) | Expr::Or(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Not(a) => a.collect_vars(out),
        }
    }
}

/// Simultaneous assignments of one probabilistic branch; variables not
/// mentioned keep their value. The empty update is the identity.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Update {
    pub assigns: Vec<(String, Expr)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub prob: f64,
    pub update: Update,
}

#[derive(Clone, Debug)]
pub struct Command {
    pub action: Option<String>,
    pub guard: Expr,
    pub branches: Vec<Branch>,
    pub line: usize,
}

impl PartialEq for Command {
    fn eq(&self, other: &Self) -> bool {
        self.action == other.action && self.guard == other.guard && self.branches == other.branches
    }
}

/// A parsed and validated program.
#[derive(Clone, Debug, PartialEq)]
pub struct Program {
    pub decls: Vec<VarDecl>,
    pub commands: Vec<Command>,
    /// The init block, if the source had one.
    pub init_block: Option<Expr>,
}

impl Program {
    pub fn decl(&self, name: &str) -> Option<&VarDecl> {
        self.decls.iter().find(|d| d.name == name)
    }

    pub fn var_names(&self) -> impl Iterator<Item = &str> {
        self.decls.iter().map(|d| d.name.as_str())
    }

    /// The initial-state expression: the init block when present, otherwise
    /// the conjunction of the declared (or lower-bound) initializers.
    pub fn init_expr(&self) -> Expr {
        if let Some(block) = &self.init_block {
            return block.clone();
        }
        self.decls
            .iter()
            .map(|d| Expr::eq_int(&d.name, d.initer.unwrap_or(d.domain.lo)))
            .reduce(Expr::and)
            .expect("validated programs declare at least one variable")
    }

    /// Declaration order as a variable order.
    pub fn declaration_order(&self) -> crate::reorder::VarOrder {
        crate::reorder::VarOrder(self.decls.iter().map(|d| d.name.clone()).collect())
    }

    /// Source text that reparses to a structurally identical program.
    pub fn to_source(&self) -> String {
        let mut out = String::new();
        for d in &self.decls {
            out.push_str(&format!("var {} : [{}..{}]", d.name, d.domain.lo, d.domain.hi));
            if let Some(v) = d.initer {
                out.push_str(&format!(" init {v}"));
            }
            out.push_str(";\n");
        }
        out.push('\n');
        for c in &self.commands {
            let action = c.action.as_deref().unwrap_or("");
            out.push_str(&format!("[{action}] {} -> ", print_expr(&c.guard)));
            let branches: Vec<String> = c
                .branches
                .iter()
                .map(|b| format!("{}:{}", b.prob, print_update(&b.update)))
                .collect();
            out.push_str(&branches.join(" + "));
            out.push_str(";\n");
        }
        if let Some(block) = &self.init_block {
            out.push_str(&format!("\ninit {} endinit\n", print_expr(block)));
        }
        out
    }
}

fn print_update(u: &Update) -> String {
    if u.assigns.is_empty() {
        return "true".to_owned();
    }
    u.assigns
        .iter()
        .map(|(v, e)| format!("({v}'={})", print_expr(e)))
        .collect::<Vec<_>>()
        .join(" & ")
}

/// Fully parenthesized rendering; reparsing yields the identical tree.
pub fn print_expr(e: &Expr) -> String {
    match e {
        Expr::Int(v) => v.to_string(),
        Expr::Bool(b) => b.to_string(),
        Expr::Var(name) => name.clone(),
        Expr::Arith(op, a, b) => {
            let sym = match op {
                ArithOp::Add => "+",
                ArithOp::Sub => "-",
                ArithOp::Mul => "*",
                ArithOp::Div => "/",
            };
            format!("({} {sym} {})", print_expr(a), print_expr(b))
        }
        Expr::Cmp(op, a, b) => {
            let sym = match op {
                CmpOp::Eq => "=",
                CmpOp::Ne => "!=",
                CmpOp::Lt => "<",
                CmpOp::Le => "<=",
                CmpOp::Gt => ">",
                CmpOp::Ge => ">=",
            };
            format!("({} {sym} {})", print_expr(a), print_expr(b))
        }
        Expr::And(a, b) => format!("({} & {})", print_expr(a), print_expr(b)),
        Expr::Or(a, b) => format!("({} | {})", print_expr(a), print_expr(b)),
        Expr::Not(a) => format!("(!{})", print_expr(a)),
    }
}

/// Total assignment of in-domain values to the program variables.
pub type Evaluation = BTreeMap<String, i64>;

/// Result of evaluating an expression.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Value {
    Int(i64),
    Bool(bool),
}

impl Value {
    pub fn as_int(self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(v),
            Value::Bool(_) => None,
        }
    }

    pub fn as_bool(self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(b),
            Value::Int(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("arithmetic overflow")]
    Overflow,
    #[error("unbound variable {0}")]
    Unbound(String),
    #[error("operator applied to a value of the wrong type")]
    Type,
}

/// Standard integer/Boolean semantics; integer division truncates towards
/// zero.
pub fn eval_expr(e: &Expr, eta: &Evaluation) -> Result<Value, EvalError> {
    match e {
        Expr::Int(v) => Ok(Value::Int(*v)),
        Expr::Bool(b) => Ok(Value::Bool(*b)),
        Expr::Var(name) => eta
            .get(name)
            .map(|v| Value::Int(*v))
            .ok_or_else(|| EvalError::Unbound(name.clone())),
        Expr::Arith(op, a, b) => {
            let a = eval_expr(a, eta)?.as_int().ok_or(EvalError::Type)?;
            let b = eval_expr(b, eta)?.as_int().ok_or(EvalError::Type)?;
            let v = match op {
                ArithOp::Add => a.checked_add(b).ok_or(EvalError::Overflow)?,
                ArithOp::Sub => a.checked_sub(b).ok_or(EvalError::Overflow)?,
                ArithOp::Mul => a.checked_mul(b).ok_or(EvalError::Overflow)?,
                ArithOp::Div => {
                    if b == 0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    a.checked_div(b).ok_or(EvalError::Overflow)?
                }
            };
            Ok(Value::Int(v))
        }
        Expr::Cmp(op, a, b) => {
            let a = eval_expr(a, eta)?.as_int().ok_or(EvalError::Type)?;
            let b = eval_expr(b, eta)?.as_int().ok_or(EvalError::Type)?;
            Ok(Value::Bool(op.test(a, b)))
        }
        Expr::And(a, b) => {
            let a = eval_expr(a, eta)?.as_bool().ok_or(EvalError::Type)?;
            let b = eval_expr(b, eta)?.as_bool().ok_or(EvalError::Type)?;
            Ok(Value::Bool(a && b))
        }
        Expr::Or(a, b) => {
            let a = eval_expr(a, eta)?.as_bool().ok_or(EvalError::Type)?;
            let b = eval_expr(b, eta)?.as_bool().ok_or(EvalError::Type)?;
            Ok(Value::Bool(a || b))
        }
        Expr::Not(a) => {
            let a = eval_expr(a, eta)?.as_bool().ok_or(EvalError::Type)?;
            Ok(Value::Bool(!a))
        }
    }
}

/// Guard evaluation shorthand used all over the explicit semantics.
pub fn eval_bool(e: &Expr, eta: &Evaluation) -> Result<bool, EvalError> {
    eval_expr(e, eta)?.as_bool().ok_or(EvalError::Type)
}

/// Static type of an expression.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Type {
    Int,
    Bool,
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Int => write!(f, "int"),
            Type::Bool => write!(f, "bool"),
        }
    }
}

/// Parse- and validation-time errors.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("{line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("line {line}: duplicate declaration of {name}")]
    DuplicateDeclaration { name: String, line: usize },
    #[error("line {line}: undeclared variable {name}")]
    UndeclaredVariable { name: String, line: usize },
    #[error("line {line}: {msg}")]
    TypeError { line: usize, msg: String },
    #[error("line {line}: {msg}")]
    BadProbabilities { line: usize, msg: String },
    #[error("program declares no variables")]
    NoVariables,
}

pub(crate) fn expr_type(e: &Expr, p: &Program, line: usize) -> Result<Type, ParseError> {
    let type_err = |msg: String| ParseError::TypeError { line, msg };
    match e {
        Expr::Int(_) => Ok(Type::Int),
        Expr::Bool(_) => Ok(Type::Bool),
        Expr::Var(name) => {
            if p.decl(name).is_some() {
                Ok(Type::Int)
            } else {
                Err(ParseError::UndeclaredVariable {
                    name: name.clone(),
                    line,
                })
            }
        }
        Expr::Arith(_, a, b) => {
            for side in [a, b] {
                if expr_type(side, p, line)? != Type::Int {
                    return Err(type_err("arithmetic over a Boolean operand".into()));
                }
            }
            Ok(Type::Int)
        }
        Expr::Cmp(_, a, b) => {
            for side in [a, b] {
                if expr_type(side, p, line)? != Type::Int {
                    return Err(type_err("comparison over a Boolean operand".into()));
                }
            }
            Ok(Type::Bool)
        }
        Expr::And(a, b) | Expr::Or(a, b) => {
            for side in [a, b] {
                if expr_type(side, p, line)? != Type::Bool {
                    return Err(type_err("connective over an integer operand".into()));
                }
            }
            Ok(Type::Bool)
        }
        Expr::Not(a) => {
            if expr_type(a, p, line)? != Type::Bool {
                return Err(type_err("negation of an integer operand".into()));
            }
            Ok(Type::Bool)
        }
    }
}

/// Whole-program validation; `parse` runs this before returning.
pub fn validate(p: &Program) -> Result<(), ParseError> {
    if p.decls.is_empty() {
        return Err(ParseError::NoVariables);
    }
    for (i, d) in p.decls.iter().enumerate() {
        if p.decls[..i].iter().any(|other| other.name == d.name) {
            return Err(ParseError::DuplicateDeclaration {
                name: d.name.clone(),
                line: d.line,
            });
        }
        if let Some(v) = d.initer {
            if !d.domain.contains(v) {
                return Err(ParseError::TypeError {
                    line: d.line,
                    msg: format!("initial value {v} outside the domain of {}", d.name),
                });
            }
        }
    }
    for c in &p.commands {
        if expr_type(&c.guard, p, c.line)? != Type::Bool {
            return Err(ParseError::TypeError {
                line: c.line,
                msg: "guard is not Boolean".into(),
            });
        }
        let mut sum = 0.0;
        for b in &c.branches {
            if !(b.prob > 0.0 && b.prob <= 1.0) {
                return Err(ParseError::BadProbabilities {
                    line: c.line,
                    msg: format!("branch probability {} outside (0,1]", b.prob),
                });
            }
            sum += b.prob;
            let mut assigned = BTreeSet::new();
            for (name, rhs) in &b.update.assigns {
                if p.decl(name).is_none() {
                    return Err(ParseError::UndeclaredVariable {
                        name: name.clone(),
                        line: c.line,
                    });
                }
                if !assigned.insert(name.as_str()) {
                    return Err(ParseError::TypeError {
                        line: c.line,
                        msg: format!("{name} assigned twice in one update"),
                    });
                }
                if expr_type(rhs, p, c.line)? != Type::Int {
                    return Err(ParseError::TypeError {
                        line: c.line,
                        msg: format!("update of {name} is not an integer expression"),
                    });
                }
            }
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ParseError::BadProbabilities {
                line: c.line,
                msg: format!("probabilities must sum to 1 (got {sum})"),
            });
        }
    }
    if let Some(block) = &p.init_block {
        // the init block's line is not tracked; report line 0
        if expr_type(block, p, 0)? != Type::Bool {
            return Err(ParseError::TypeError {
                line: 0,
                msg: "init block is not Boolean".into(),
            });
        }
    }
    Ok(())
}
