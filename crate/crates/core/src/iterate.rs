//! Iterative variable reordering.
//!
//! Starting from a single family member that is known to be constructible,
//! the loop alternates between admitting more members (growing the
//! per-variable evaluation domain towards the goal domain read off the init
//! expression) and sifting the freshly built intermediate model. Each round
//! is built in a fresh table under the latest order; when every intermediate
//! construction fits the budget, the final order makes the whole family
//! constructible.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use num_bigint::BigUint;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::dd::{ApplyOp, DdError, NodeRef, FALSE};
use crate::program::{Evaluation, Expr, Program};
use crate::reorder::{reorder, SiftConfig, VarOrder};
use crate::symbolic::{construct, Budget, ConstructError, Encoding, Side};
use crate::NodeTable64;

/// Variable selection rule for the growth step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selection {
    /// Minimal in the initial order.
    PiMinimal,
    /// Minimal in the current reordered order.
    RhoMinimal,
    /// Maximal in the current reordered order.
    RhoMaximal,
}

impl Selection {
    pub const ALL: [Selection; 3] = [
        Selection::PiMinimal,
        Selection::RhoMinimal,
        Selection::RhoMaximal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Selection::PiMinimal => "pi-min",
            Selection::RhoMinimal => "rho-min",
            Selection::RhoMaximal => "rho-max",
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Heuristic {
    pub selection: Selection,
    /// Number of pick/grow sub-steps per loop body, n >= 1.
    pub step: usize,
}

impl Default for Heuristic {
    fn default() -> Self {
        Heuristic {
            selection: Selection::PiMinimal,
            step: 1,
        }
    }
}

/// Per-variable admitted value sets (the running E and the goal G).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvaluationDomain {
    /// Declaration order; fixes the clause order of [`cnf`].
    vars: Vec<String>,
    values: BTreeMap<String, BTreeSet<i64>>,
}

impl EvaluationDomain {
    pub fn new(vars: Vec<String>) -> Self {
        let values = vars.iter().map(|v| (v.clone(), BTreeSet::new())).collect();
        EvaluationDomain { vars, values }
    }

    /// Domain pinning a single evaluation.
    pub fn singleton(eta: &Evaluation, vars: Vec<String>) -> Self {
        let mut d = Self::new(vars);
        for (v, x) in eta {
            d.values.get_mut(v).expect("evaluation covers vars").insert(*x);
        }
        d
    }

    pub fn vars(&self) -> impl Iterator<Item = &str> {
        self.vars.iter().map(String::as_str)
    }

    pub fn get(&self, var: &str) -> &BTreeSet<i64> {
        &self.values[var]
    }

    pub fn insert(&mut self, var: &str, value: i64) {
        self.values.get_mut(var).expect("known variable").insert(value);
    }

    /// Σ over variables of the admitted value count.
    pub fn total_values(&self) -> usize {
        self.values.values().map(BTreeSet::len).sum()
    }

    pub fn is_subset_of(&self, other: &EvaluationDomain) -> bool {
        self.vars
            .iter()
            .all(|v| self.get(v).is_subset(other.get(v)))
    }
}

/// Conjunctive-normal-form expression admitting exactly the evaluations in
/// `e`: one clause per variable, one equality literal per admitted value.
/// Clause order follows the domain's variable order, literals are ascending.
pub fn cnf(e: &EvaluationDomain) -> Expr {
    e.vars()
        .map(|v| {
            e.get(v)
                .iter()
                .map(|x| Expr::eq_int(v, *x))
                .reduce(Expr::or)
                .expect("nonempty value set")
        })
        .reduce(Expr::and)
        .expect("nonempty variable set")
}

/// The variable the growth step extends next, under the given selection.
/// Returns `None` when `e` already equals `g`.
pub fn pick_variable<'a>(
    sel: Selection,
    e: &EvaluationDomain,
    g: &'a EvaluationDomain,
    pi: &VarOrder,
    rho: &VarOrder,
) -> Option<&'a str> {
    let differs = |v: &str| e.get(v) != g.get(v);
    let order = match sel {
        Selection::PiMinimal => pi,
        Selection::RhoMinimal | Selection::RhoMaximal => rho,
    };
    let mut candidates = order.iter().filter(|v| differs(v));
    let picked = match sel {
        Selection::RhoMaximal => candidates.last(),
        _ => candidates.next(),
    }?;
    g.vars().find(|v| *v == picked)
}

/// Admits the smallest missing goal value of `var`.
pub fn grow(e: &mut EvaluationDomain, g: &EvaluationDomain, var: &str) {
    let missing = g
        .get(var)
        .difference(e.get(var))
        .next()
        .copied()
        .expect("grow called with a completed variable");
    e.insert(var, missing);
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IterateError {
    #[error("the init expression is unsatisfiable")]
    EmptyInit,
    #[error("the supplied evaluation is not an initial state")]
    EtaOutsideInit,
    #[error("iteration {iteration} failed: {cause}")]
    ConstructionFailed {
        iteration: usize,
        cause: ConstructError,
        /// Rows completed before the failure.
        rows: Vec<IterationStats>,
        /// Last order under which a construction succeeded.
        last_order: VarOrder,
    },
}

/// One row of the per-iteration statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationStats {
    pub iteration: usize,
    /// Family members admitted so far (exact).
    pub combinations: BigUint,
    /// Reachable states (exact).
    pub states: BigUint,
    pub nodes_before: usize,
    pub nodes_after: usize,
    pub model_time_s: f64,
    pub reorder_time_s: f64,
}

impl IterationStats {
    pub const CSV_HEADER: &'static str =
        "iteration,combinations,states,nodes_before,nodes_after,model_time_s,reorder_time_s";

    /// Counts as decimal strings, times with two decimals.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{:.2},{:.2}",
            self.iteration,
            self.combinations,
            self.states,
            self.nodes_before,
            self.nodes_after,
            self.model_time_s,
            self.reorder_time_s
        )
    }
}

impl Serialize for IterationStats {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("IterationStats", 7)?;
        s.serialize_field("iteration", &self.iteration)?;
        s.serialize_field("combinations", &self.combinations.to_string())?;
        s.serialize_field("states", &self.states.to_string())?;
        s.serialize_field("nodes_before", &self.nodes_before)?;
        s.serialize_field("nodes_after", &self.nodes_after)?;
        s.serialize_field("model_time_s", &self.model_time_s)?;
        s.serialize_field("reorder_time_s", &self.reorder_time_s)?;
        s.end()
    }
}

/// Outcome of a completed or deadline-truncated run.
#[derive(Clone, Debug, PartialEq)]
pub struct IterateReport {
    /// The final (or last reached) variable order.
    pub order: VarOrder,
    pub rows: Vec<IterationStats>,
    /// False when a snapshot deadline stopped the loop early.
    pub completed: bool,
}

#[derive(Clone, Debug, Default)]
pub struct IterateOptions {
    pub heuristic: Heuristic,
    pub budget: Budget,
    pub sift: SiftConfig,
    /// The known-constructible member; defaults to the lexicographically
    /// minimal initial evaluation.
    pub eta: Option<Evaluation>,
    /// Wall-clock snapshot: the loop stops (without error) before the first
    /// body that would start after this point.
    pub deadline: Option<Instant>,
}

/// Values of `var` that occur in some satisfying evaluation of `init`.
fn admitted_values(
    table: &mut NodeTable64,
    enc: &Encoding,
    init: NodeRef,
    var: &str,
) -> Result<BTreeSet<i64>, DdError> {
    let v = enc.var(var);
    let others: Vec<_> = enc
        .row_bit_ids()
        .into_iter()
        .filter(|b| !v.row_bits.contains(b))
        .collect();
    let projected = table.exists_abstract(init, &others)?;
    table.register_root(projected);
    let mut out = BTreeSet::new();
    for x in v.values() {
        let cube = enc.value_cube(table, v, x, Side::Row)?;
        if table.apply(ApplyOp::And, projected, cube)? != FALSE {
            out.insert(x);
        }
    }
    table.unregister_root(projected);
    Ok(out)
}

/// The goal domain G: per variable, every value it takes in some initial
/// evaluation.
pub fn goal_domain(
    table: &mut NodeTable64,
    enc: &Encoding,
    init: NodeRef,
) -> Result<EvaluationDomain, IterateError> {
    if init == FALSE {
        return Err(IterateError::EmptyInit);
    }
    let vars: Vec<String> = enc.vars().iter().map(|v| v.name.clone()).collect();
    let mut g = EvaluationDomain::new(vars.clone());
    for var in &vars {
        let values = admitted_values(table, enc, init, var).map_err(scratch_failure)?;
        debug_assert!(!values.is_empty(), "projection of a nonempty set");
        for x in values {
            g.insert(var, x);
        }
    }
    Ok(g)
}

/// The lexicographically minimal satisfying evaluation of `init`, reading
/// variables in `order` sequence and values in domain order.
pub fn minimal_member(
    table: &mut NodeTable64,
    enc: &Encoding,
    init: NodeRef,
    order: &VarOrder,
) -> Result<Evaluation, IterateError> {
    if init == FALSE {
        return Err(IterateError::EmptyInit);
    }
    let mut current = init;
    table.register_root(current);
    let mut eta = Evaluation::new();
    for name in order.iter() {
        let v = enc.var(name);
        let mut chosen = None;
        for x in v.values() {
            let cube = enc.value_cube(table, v, x, Side::Row).map_err(scratch_failure)?;
            let restricted = table
                .apply(ApplyOp::And, current, cube)
                .map_err(scratch_failure)?;
            if restricted != FALSE {
                chosen = Some((x, restricted));
                break;
            }
        }
        let (x, restricted) = chosen.expect("satisfiable set has a minimal member");
        eta.insert(name.to_owned(), x);
        table.unregister_root(current);
        current = restricted;
        table.register_root(current);
    }
    table.unregister_root(current);
    Ok(eta)
}

fn scratch_failure(e: DdError) -> IterateError {
    // the init diagram alone broke the budget: report it as iteration 0
    IterateError::ConstructionFailed {
        iteration: 0,
        cause: ConstructError {
            phase: crate::symbolic::Phase::Init,
            source: e.into(),
        },
        rows: Vec::new(),
        last_order: VarOrder(Vec::new()),
    }
}

fn with_init(p: &Program, init: Expr) -> Program {
    Program {
        init_block: Some(init),
        ..p.clone()
    }
}

fn pinned_expr(p: &Program, eta: &Evaluation) -> Expr {
    p.var_names()
        .map(|v| Expr::eq_int(v, eta[v]))
        .reduce(Expr::and)
        .expect("at least one variable")
}

/// Runs the iterative reordering loop on `p`, starting from order `pi`.
pub fn iterate(
    p: &Program,
    pi: &VarOrder,
    opts: &IterateOptions,
) -> Result<IterateReport, IterateError> {
    let heuristic = opts.heuristic;
    assert!(heuristic.step >= 1, "step size must be at least 1");
    let iota = p.init_expr();

    // Scratch pass over the init diagram alone: goal domain and the starting
    // member. The init diagram is small next to the model, so this shares
    // the construction budget.
    let enc = crate::symbolic::encode(p, pi);
    let (goal, eta) = {
        let mut scratch = enc.new_table(pi, &opts.budget);
        let init = crate::symbolic::expr_to_bdd(&mut scratch, &enc, &iota, Side::Row)
            .map_err(|e| match e {
                crate::symbolic::BuildError::Dd(dd) => scratch_failure(dd),
                other => IterateError::ConstructionFailed {
                    iteration: 0,
                    cause: ConstructError {
                        phase: crate::symbolic::Phase::Init,
                        source: other,
                    },
                    rows: Vec::new(),
                    last_order: VarOrder(Vec::new()),
                },
            })?;
        scratch.register_root(init);
        let goal = goal_domain(&mut scratch, &enc, init)?;
        let eta = match &opts.eta {
            Some(eta) => {
                let a = enc.state_assignment(eta);
                match scratch.eval(init, &a) {
                    Ok(crate::dd::Terminal::Bool(true)) => eta.clone(),
                    _ => return Err(IterateError::EtaOutsideInit),
                }
            }
            None => minimal_member(&mut scratch, &enc, init, pi)?,
        };
        (goal, eta)
    };

    let vars: Vec<String> = p.var_names().map(str::to_owned).collect();
    let mut admitted = EvaluationDomain::singleton(&eta, vars);
    debug_assert!(admitted.is_subset_of(&goal));

    // Line 1: the pinned single-member model under pi, then the first
    // reorder initializes rho.
    let mut rows = Vec::new();
    let single = with_init(p, pinned_expr(p, &eta));
    let mut rho = run_iteration(&single, pi, opts, 0, &mut rows)?;

    let mut iteration = 1;
    while admitted != goal {
        if let Some(deadline) = opts.deadline {
            if Instant::now() >= deadline {
                return Ok(IterateReport {
                    order: rho,
                    rows,
                    completed: false,
                });
            }
        }
        for _ in 0..heuristic.step {
            if admitted == goal {
                break;
            }
            let var = pick_variable(heuristic.selection, &admitted, &goal, pi, &rho)
                .expect("loop guard ensures a difference");
            grow(&mut admitted, &goal, var);
        }
        debug_assert!(admitted.is_subset_of(&goal));
        let restricted = with_init(p, Expr::and(iota.clone(), cnf(&admitted)));
        rho = run_iteration(&restricted, &rho, opts, iteration, &mut rows)?;
        iteration += 1;
    }

    Ok(IterateReport {
        order: rho,
        rows,
        completed: true,
    })
}

/// Builds one intermediate model, reorders it, appends the stats row, and
/// returns the reordered order.
fn run_iteration(
    p: &Program,
    order: &VarOrder,
    opts: &IterateOptions,
    iteration: usize,
    rows: &mut Vec<IterationStats>,
) -> Result<VarOrder, IterateError> {
    let fail = |cause: ConstructError, rows: &[IterationStats]| IterateError::ConstructionFailed {
        iteration,
        cause,
        rows: rows.to_vec(),
        last_order: order.clone(),
    };

    let model_start = Instant::now();
    let mut model = construct(p, order, &opts.budget).map_err(|e| fail(e, rows))?;
    let model_time_s = model_start.elapsed().as_secs_f64();

    let combinations = model
        .member_count()
        .expect("the init diagram is Boolean over row bits");
    let nodes_before = model.node_count();

    let reorder_start = Instant::now();
    let groups = model.encoding.bit_groups();
    let roots = model.roots();
    let beta = reorder(&mut model.table, &roots, order, &groups, &opts.sift).map_err(
        |e| {
            fail(
                ConstructError {
                    phase: crate::symbolic::Phase::Reorder,
                    source: e.into(),
                },
                rows,
            )
        },
    )?;
    let reorder_time_s = reorder_start.elapsed().as_secs_f64();
    let nodes_after = model.node_count();
    debug_assert!(nodes_after <= nodes_before);

    rows.push(IterationStats {
        iteration,
        combinations,
        states: model.states.clone(),
        nodes_before,
        nodes_after,
        model_time_s,
        reorder_time_s,
    });
    Ok(beta)
}
