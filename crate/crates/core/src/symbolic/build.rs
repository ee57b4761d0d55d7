//! Translation of program expressions and commands into diagrams.
//!
//! Comparisons are grounded by enumerating the joint values of the variables
//! they mention and or-ing the satisfying cubes; Boolean structure maps to
//! apply operations. All integer semantics (division, overflow) therefore
//! come from the one evaluator in `program`, keeping the two construction
//! routes consistent.

use std::collections::HashMap;

use crate::dd::{ApplyOp, NodeRef, Terminal, FALSE, TRUE};
use crate::program::{eval_expr, Evaluation, Expr, Program, Value};
use crate::NodeTable64;

use super::{BuildError, EncodedVar, Encoding, Side};

/// Joint assignments above this are refused rather than enumerated.
const COMPARISON_ENUM_CAP: u64 = 1 << 20;

/// Keeps intermediate diagrams registered while later operations (and their
/// garbage collections) run; everything pinned is unregistered on `release`.
struct Pins {
    pinned: Vec<NodeRef>,
}

impl Pins {
    fn new() -> Self {
        Pins { pinned: Vec::new() }
    }

    fn pin(&mut self, table: &mut NodeTable64, r: NodeRef) -> NodeRef {
        table.register_root(r);
        self.pinned.push(r);
        r
    }

    /// Replaces a pinned accumulator value.
    fn swap(&mut self, table: &mut NodeTable64, old: NodeRef, new: NodeRef) -> NodeRef {
        table.register_root(new);
        table.unregister_root(old);
        let slot = self
            .pinned
            .iter()
            .rposition(|r| *r == old)
            .expect("swap of an unpinned diagram");
        self.pinned[slot] = new;
        new
    }

    fn release(&mut self, table: &mut NodeTable64) {
        for r in self.pinned.drain(..) {
            table.unregister_root(r);
        }
    }
}

/// Diagram of the encoded evaluations satisfying the Boolean expression `e`,
/// conjoined with every variable's range constraint on the chosen side.
pub fn expr_to_bdd(
    table: &mut NodeTable64,
    enc: &Encoding,
    e: &Expr,
    side: Side,
) -> Result<NodeRef, BuildError> {
    let mut pins = Pins::new();
    let core = bool_to_bdd(table, enc, e, side, &mut pins)?;
    pins.pin(table, core);
    let range = enc.range_all(table, side)?;
    let out = table.apply(ApplyOp::And, core, range)?;
    pins.release(table);
    Ok(out)
}

fn bool_to_bdd(
    table: &mut NodeTable64,
    enc: &Encoding,
    e: &Expr,
    side: Side,
    pins: &mut Pins,
) -> Result<NodeRef, BuildError> {
    match e {
        Expr::Bool(b) => Ok(table.bool_const(*b)),
        Expr::Not(a) => {
            let f = bool_to_bdd(table, enc, a, side, pins)?;
            Ok(table.not(f)?)
        }
        Expr::And(a, b) | Expr::Or(a, b) => {
            let op = if matches!(e, Expr::And(..)) {
                ApplyOp::And
            } else {
                ApplyOp::Or
            };
            let f = bool_to_bdd(table, enc, a, side, pins)?;
            pins.pin(table, f);
            let g = bool_to_bdd(table, enc, b, side, pins)?;
            Ok(table.apply(op, f, g)?)
        }
        Expr::Cmp(..) => comparison_to_bdd(table, enc, e, side, pins),
        Expr::Int(_) | Expr::Var(_) | Expr::Arith(..) => {
            unreachable!("validated expressions have Boolean roots here")
        }
    }
}

/// Grounds one comparison by enumerating the domains of its variables.
fn comparison_to_bdd(
    table: &mut NodeTable64,
    enc: &Encoding,
    e: &Expr,
    side: Side,
    pins: &mut Pins,
) -> Result<NodeRef, BuildError> {
    let names = e.variables();
    let mentioned: Vec<&EncodedVar> = enc
        .vars()
        .iter()
        .filter(|v| names.contains(v.name.as_str()))
        .collect();
    let product: u64 = mentioned.iter().map(|v| v.size).product();
    if product > COMPARISON_ENUM_CAP {
        return Err(BuildError::ComparisonTooWide { product });
    }

    let mut result = pins.pin(table, FALSE);
    for mut idx in 0..product {
        let mut eta = Evaluation::new();
        for v in &mentioned {
            eta.insert(v.name.clone(), v.value_of(idx % v.size));
            idx /= v.size;
        }
        let holds = match eval_expr(e, &eta)? {
            Value::Bool(b) => b,
            Value::Int(_) => unreachable!("comparisons are Boolean"),
        };
        if !holds {
            continue;
        }
        let mut cube = pins.pin(table, TRUE);
        for v in &mentioned {
            let vc = enc.value_cube(table, v, eta[&v.name], side)?;
            let next = table.apply(ApplyOp::And, cube, vc)?;
            cube = pins.swap(table, cube, next);
        }
        let next = table.apply(ApplyOp::Or, result, cube)?;
        result = pins.swap(table, result, next);
    }
    Ok(result)
}

/// The transition probability matrix of `p`:
/// per command `guard -> p1:u1 + ... + pn:un` the matrix gains
/// `guard(s) * Σ pi * [s' = ui(s)]`; states enabling no command get an
/// identity self-loop. Commands with overlapping (in-range) guards are
/// rejected, since two enabled commands would break row stochasticity.
pub(crate) fn build_transition(
    table: &mut NodeTable64,
    enc: &Encoding,
    p: &Program,
) -> Result<NodeRef, BuildError> {
    let mut pins = Pins::new();
    let zero = table.mk_const(Terminal::Real(0.0))?;
    let one = table.mk_const(Terminal::Real(1.0))?;

    let mut guards = Vec::new();
    for c in &p.commands {
        let g = expr_to_bdd(table, enc, &c.guard, Side::Row)?;
        guards.push(pins.pin(table, g));
    }
    for i in 0..guards.len() {
        for j in i + 1..guards.len() {
            if table.apply(ApplyOp::And, guards[i], guards[j])? != FALSE {
                pins.release(table);
                return Err(BuildError::OverlappingGuards {
                    first: p.commands[i].line,
                    second: p.commands[j].line,
                });
            }
        }
    }

    let mut identities: HashMap<String, NodeRef> = HashMap::new();
    let mut total = pins.pin(table, zero);
    for (c, &g) in p.commands.iter().zip(&guards) {
        let mut command_matrix = pins.pin(table, zero);
        for b in &c.branches {
            let rel = branch_relation(table, enc, &b.update.assigns, &mut identities, &mut pins)?;
            let pin_rel = pins.pin(table, rel);
            let prob = table.mk_const(Terminal::Real(b.prob))?;
            let weighted = table.ite(pin_rel, prob, zero)?;
            let next = table.apply(ApplyOp::Plus, command_matrix, weighted)?;
            command_matrix = pins.swap(table, command_matrix, next);
        }
        let guarded = table.ite(g, command_matrix, zero)?;
        let next = table.apply(ApplyOp::Plus, total, guarded)?;
        total = pins.swap(table, total, next);
    }

    // identity self-loops on (in-range) deadlock states
    let mut enabled = pins.pin(table, FALSE);
    for &g in &guards {
        let next = table.apply(ApplyOp::Or, enabled, g)?;
        enabled = pins.swap(table, enabled, next);
    }
    let not_enabled = table.not(enabled)?;
    pins.pin(table, not_enabled);
    let in_range = enc.range_all(table, Side::Row)?;
    let deadlock = table.apply(ApplyOp::And, in_range, not_enabled)?;
    let mut stay = pins.pin(table, deadlock);
    for v in enc.vars() {
        let id = identity_relation(table, enc, v, &mut identities, &mut pins)?;
        let next = table.apply(ApplyOp::And, stay, id)?;
        stay = pins.swap(table, stay, next);
    }
    let self_loops = table.ite(stay, one, zero)?;
    let out = table.apply(ApplyOp::Plus, total, self_loops)?;
    pins.release(table);
    Ok(out)
}

/// Conjunction over all variables of either the update's assignment relation
/// or the identity.
fn branch_relation(
    table: &mut NodeTable64,
    enc: &Encoding,
    assigns: &[(String, Expr)],
    identities: &mut HashMap<String, NodeRef>,
    pins: &mut Pins,
) -> Result<NodeRef, BuildError> {
    let mut acc = pins.pin(table, TRUE);
    for v in enc.vars() {
        let rel = match assigns.iter().find(|(name, _)| *name == v.name) {
            Some((_, rhs)) => assignment_relation(table, enc, v, rhs, pins)?,
            None => identity_relation(table, enc, v, identities, pins)?,
        };
        let next = table.apply(ApplyOp::And, acc, rel)?;
        acc = pins.swap(table, acc, next);
    }
    Ok(acc)
}

/// `v' = v` over the valid codes: bitwise row/column equality plus the row
/// range constraint.
fn identity_relation(
    table: &mut NodeTable64,
    enc: &Encoding,
    v: &EncodedVar,
    identities: &mut HashMap<String, NodeRef>,
    pins: &mut Pins,
) -> Result<NodeRef, BuildError> {
    if let Some(&r) = identities.get(&v.name) {
        return Ok(r);
    }
    let mut acc = pins.pin(table, TRUE);
    for (&r, &c) in v.row_bits.iter().zip(&v.col_bits) {
        let rb = table.var(r)?;
        let cb = table.var(c)?;
        let differ = table.apply(ApplyOp::Xor, rb, cb)?;
        let same = table.not(differ)?;
        let next = table.apply(ApplyOp::And, acc, same)?;
        acc = pins.swap(table, acc, next);
    }
    let range = enc.range_bdd(table, v, Side::Row)?;
    let out = table.apply(ApplyOp::And, acc, range)?;
    identities.insert(v.name.clone(), pins.pin(table, out));
    Ok(out)
}

/// `v' = e(current state)`, enumerated over the joint values of the
/// variables `e` mentions. Values that fall outside the domain of `v`
/// contribute no transition; the explicit semantics flags them.
fn assignment_relation(
    table: &mut NodeTable64,
    enc: &Encoding,
    target: &EncodedVar,
    rhs: &Expr,
    pins: &mut Pins,
) -> Result<NodeRef, BuildError> {
    let names = rhs.variables();
    let mentioned: Vec<&EncodedVar> = enc
        .vars()
        .iter()
        .filter(|v| names.contains(v.name.as_str()))
        .collect();
    let product: u64 = mentioned.iter().map(|v| v.size).product();
    if product > COMPARISON_ENUM_CAP {
        return Err(BuildError::ComparisonTooWide { product });
    }
    let mut result = pins.pin(table, FALSE);
    for mut idx in 0..product {
        let mut eta = Evaluation::new();
        for v in &mentioned {
            eta.insert(v.name.clone(), v.value_of(idx % v.size));
            idx /= v.size;
        }
        let value = eval_expr(rhs, &eta)?
            .as_int()
            .expect("validated updates assign integers");
        if !target.contains(value) {
            continue;
        }
        let mut cube = pins.pin(table, TRUE);
        for v in &mentioned {
            let vc = enc.value_cube(table, v, eta[&v.name], Side::Row)?;
            let next = table.apply(ApplyOp::And, cube, vc)?;
            cube = pins.swap(table, cube, next);
        }
        let tc = enc.value_cube(table, target, value, Side::Col)?;
        let full = table.apply(ApplyOp::And, cube, tc)?;
        let next = table.apply(ApplyOp::Or, result, full)?;
        result = pins.swap(table, result, next);
    }
    Ok(result)
}
