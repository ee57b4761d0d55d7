//! Symbolic model construction: bit encoding, init/transition/reachable
//! diagrams and the resource budget that bounds a construction.

mod build;

pub use build::expr_to_bdd;

use std::collections::HashMap;
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use serde_json::json;
use thiserror::Error;

use crate::dd::{ApplyOp, Assignment, BitId, DdError, NodeRef, Terminal};
use crate::program::{EvalError, Evaluation, Program};
use crate::reorder::{BitGroups, VarOrder};
use crate::NodeTable64;

/// Which bit family of a variable an expression talks about: current-state
/// (row) or next-state (column) bits.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Side {
    Row,
    Col,
}

/// Bit layout of one program variable: `width` row bits and `width` column
/// bits, interleaved pairwise from the most significant bit downwards.
#[derive(Clone, Debug)]
pub struct EncodedVar {
    pub name: String,
    pub lo: i64,
    pub size: u64,
    pub width: u32,
    /// `row_bits[j]` carries weight `2^j`.
    pub row_bits: Vec<BitId>,
    pub col_bits: Vec<BitId>,
}

impl EncodedVar {
    pub fn code_of(&self, value: i64) -> u64 {
        debug_assert!(value >= self.lo && ((value - self.lo) as u64) < self.size);
        (value - self.lo) as u64
    }

    pub fn value_of(&self, code: u64) -> i64 {
        self.lo + code as i64
    }

    pub fn contains(&self, value: i64) -> bool {
        value >= self.lo && ((value - self.lo) as u64) < self.size
    }

    pub fn values(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.size).map(|c| self.value_of(c))
    }

    fn bits(&self, side: Side) -> &[BitId] {
        match side {
            Side::Row => &self.row_bits,
            Side::Col => &self.col_bits,
        }
    }

    /// Group block in level order: r/c pairs, most significant first.
    fn level_block(&self) -> Vec<BitId> {
        (0..self.width as usize)
            .rev()
            .flat_map(|j| [self.row_bits[j], self.col_bits[j]])
            .collect()
    }
}

/// Deterministic bit allocation for all program variables.
///
/// Bit ids are assigned in declaration order and do not depend on the
/// variable order, so diagrams built under different orders share bit
/// identities; only the level arrangement differs.
#[derive(Clone, Debug)]
pub struct Encoding {
    vars: Vec<EncodedVar>,
    by_name: HashMap<String, usize>,
}

/// Bit width for a domain of `size` values; singleton domains still get one
/// (constantly false) bit.
pub fn width_for(size: u64) -> u32 {
    if size <= 1 {
        1
    } else {
        u64::BITS - (size - 1).leading_zeros()
    }
}

/// Allocates bits for every variable of `p`. `order` must be a permutation
/// of the program variables.
pub fn encode(p: &Program, order: &VarOrder) -> Encoding {
    assert!(
        order.is_permutation_of(p.var_names()),
        "order is not a permutation of the program variables"
    );
    let mut vars = Vec::new();
    let mut by_name = HashMap::new();
    let mut next = 0u32;
    for d in &p.decls {
        let width = width_for(d.domain.size());
        let mut row_bits = vec![BitId(0); width as usize];
        let mut col_bits = vec![BitId(0); width as usize];
        for j in (0..width as usize).rev() {
            row_bits[j] = BitId(next);
            col_bits[j] = BitId(next + 1);
            next += 2;
        }
        by_name.insert(d.name.clone(), vars.len());
        vars.push(EncodedVar {
            name: d.name.clone(),
            lo: d.domain.lo,
            size: d.domain.size(),
            width,
            row_bits,
            col_bits,
        });
    }
    Encoding { vars, by_name }
}

impl Encoding {
    pub fn vars(&self) -> &[EncodedVar] {
        &self.vars
    }

    pub fn var(&self, name: &str) -> &EncodedVar {
        &self.vars[self.by_name[name]]
    }

    pub fn num_bits(&self) -> usize {
        self.vars.iter().map(|v| 2 * v.width as usize).sum()
    }

    /// Per-variable level blocks for group sifting.
    pub fn bit_groups(&self) -> BitGroups {
        let mut groups = BitGroups::new();
        for v in &self.vars {
            groups.insert(&v.name, v.level_block());
        }
        groups
    }

    pub fn row_bit_ids(&self) -> Vec<BitId> {
        self.vars.iter().flat_map(|v| v.row_bits.clone()).collect()
    }

    pub fn col_bit_ids(&self) -> Vec<BitId> {
        self.vars.iter().flat_map(|v| v.col_bits.clone()).collect()
    }

    pub fn col_to_row(&self) -> HashMap<BitId, BitId> {
        self.vars
            .iter()
            .flat_map(|v| v.col_bits.iter().copied().zip(v.row_bits.iter().copied()))
            .collect()
    }

    /// Fresh table whose levels follow the bit expansion of `order`.
    pub fn new_table(&self, order: &VarOrder, budget: &Budget) -> NodeTable64 {
        let levels = self.bit_groups().level_order(order);
        let mut table = NodeTable64::new(&levels);
        table.set_node_limit(budget.node_limit);
        if let Some(limit) = budget.time_limit {
            table.set_deadline(Some(Instant::now() + limit));
        }
        for v in &self.vars {
            for (j, (&r, &c)) in v.row_bits.iter().zip(&v.col_bits).enumerate() {
                table.set_bit_name(r, format!("{}.r{j}", v.name));
                table.set_bit_name(c, format!("{}.c{j}", v.name));
            }
        }
        table
    }

    /// Row-bit assignment encoding the evaluation.
    pub fn state_assignment(&self, eta: &Evaluation) -> Assignment {
        let mut a = Assignment::new();
        self.fill(&mut a, eta, Side::Row);
        a
    }

    /// Row+column assignment for a transition-matrix entry.
    pub fn pair_assignment(&self, from: &Evaluation, to: &Evaluation) -> Assignment {
        let mut a = Assignment::new();
        self.fill(&mut a, from, Side::Row);
        self.fill(&mut a, to, Side::Col);
        a
    }

    fn fill(&self, a: &mut Assignment, eta: &Evaluation, side: Side) {
        for v in &self.vars {
            let code = v.code_of(eta[&v.name]);
            for (j, &bit) in v.bits(side).iter().enumerate() {
                a.set(bit, code >> j & 1 == 1);
            }
        }
    }

    /// Cube fixing one variable to one value on the given side.
    pub fn value_cube(
        &self,
        table: &mut NodeTable64,
        var: &EncodedVar,
        value: i64,
        side: Side,
    ) -> Result<NodeRef, DdError> {
        let code = var.code_of(value);
        let mut cube = crate::dd::TRUE;
        for (j, &bit) in var.bits(side).iter().enumerate() {
            let lit = table.var(bit)?;
            let lit = if code >> j & 1 == 1 {
                lit
            } else {
                table.not(lit)?
            };
            cube = table.apply(ApplyOp::And, cube, lit)?;
        }
        Ok(cube)
    }

    /// Constraint admitting exactly the codes below the domain size.
    pub fn range_bdd(
        &self,
        table: &mut NodeTable64,
        var: &EncodedVar,
        side: Side,
    ) -> Result<NodeRef, DdError> {
        let max_code = var.size - 1;
        if var.size == 1u64 << var.width {
            return Ok(crate::dd::TRUE);
        }
        // code <= max_code, folded from the least significant bit
        let mut acc = crate::dd::TRUE;
        for (j, &bit) in var.bits(side).iter().enumerate() {
            let b = table.var(bit)?;
            if max_code >> j & 1 == 1 {
                let nb = table.not(b)?;
                acc = table.apply(ApplyOp::Or, nb, acc)?;
            } else {
                let nb = table.not(b)?;
                acc = table.apply(ApplyOp::And, nb, acc)?;
            }
        }
        Ok(acc)
    }

    /// Conjunction of every variable's range constraint on one side.
    pub fn range_all(&self, table: &mut NodeTable64, side: Side) -> Result<NodeRef, DdError> {
        let mut acc = crate::dd::TRUE;
        for v in &self.vars {
            let r = self.range_bdd(table, v, side)?;
            acc = table.apply(ApplyOp::And, acc, r)?;
        }
        Ok(acc)
    }
}

/// Resource budget for one construction.
#[derive(Clone, Copy, Debug)]
pub struct Budget {
    pub node_limit: usize,
    pub time_limit: Option<Duration>,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            node_limit: usize::MAX,
            time_limit: None,
        }
    }
}

impl Budget {
    pub fn with_node_limit(node_limit: usize) -> Self {
        Budget {
            node_limit,
            ..Budget::default()
        }
    }
}

/// Construction phase in which a budget breach happened. `Reorder` only
/// occurs in the iterative loop, never in `construct` itself.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Init,
    Transition,
    Reachability,
    Reorder,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Phase::Init => "init",
            Phase::Transition => "transition",
            Phase::Reachability => "reachability",
            Phase::Reorder => "reorder",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BuildError {
    #[error(transparent)]
    Dd(#[from] DdError),
    #[error("evaluation inside an expression translation failed: {0}")]
    Eval(#[from] EvalError),
    #[error("comparison ranges over {product} assignments, too wide to enumerate")]
    ComparisonTooWide { product: u64 },
    #[error("commands at lines {first} and {second} have overlapping guards")]
    OverlappingGuards { first: usize, second: usize },
}

/// A construction failure, tagged with the phase that broke the budget.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("construction failed during {phase}: {source}")]
pub struct ConstructError {
    pub phase: Phase,
    pub source: BuildError,
}

impl ConstructError {
    /// The budget breach behind this failure, if it was one.
    pub fn dd_cause(&self) -> Option<&DdError> {
        match &self.source {
            BuildError::Dd(e) => Some(e),
            _ => None,
        }
    }
}

/// Timing and size statistics of one construction.
#[derive(Clone, Debug, Default)]
pub struct BuildStats {
    pub build_seconds: f64,
    pub init_nodes: usize,
    pub trans_nodes: usize,
    pub reach_nodes: usize,
    pub peak_live: usize,
}

/// The symbolic family model: initial states, transition probability matrix
/// and reachable states, all rooted in one owned table.
///
/// The three roots stay registered in the table, so follow-up operations
/// (sifting in particular) may collect anything else.
pub struct SymbolicModel {
    pub table: NodeTable64,
    pub encoding: Encoding,
    pub order: VarOrder,
    pub init: NodeRef,
    pub trans: NodeRef,
    pub reach: NodeRef,
    /// Exact reachable-state count.
    pub states: BigUint,
    pub stats: BuildStats,
}

/// Builds the full model of `p` under `order` within `budget`.
pub fn construct(p: &Program, order: &VarOrder, budget: &Budget) -> Result<SymbolicModel, ConstructError> {
    let started = Instant::now();
    let encoding = encode(p, order);
    let mut table = encoding.new_table(order, budget);

    let at = |phase: Phase| move |source: BuildError| ConstructError { phase, source };

    let init = expr_to_bdd(&mut table, &encoding, &p.init_expr(), Side::Row)
        .map_err(at(Phase::Init))?;
    table.register_root(init);

    let trans = build::build_transition(&mut table, &encoding, p).map_err(at(Phase::Transition))?;
    table.register_root(trans);

    let (reach, states) =
        reachable(&mut table, &encoding, init, trans).map_err(|e| at(Phase::Reachability)(e.into()))?;
    table.register_root(reach);

    let stats = BuildStats {
        build_seconds: started.elapsed().as_secs_f64(),
        init_nodes: table.size(init),
        trans_nodes: table.size(trans),
        reach_nodes: table.size(reach),
        peak_live: table.peak_live_nodes(),
    };
    table.set_deadline(None);
    Ok(SymbolicModel {
        table,
        encoding,
        order: order.clone(),
        init,
        trans,
        reach,
        states,
        stats,
    })
}

/// Least fixpoint of the image under `trans` starting from `init`, plus the
/// exact state count.
pub fn reachable(
    table: &mut NodeTable64,
    enc: &Encoding,
    init: NodeRef,
    trans: NodeRef,
) -> Result<(NodeRef, BigUint), DdError> {
    let row_bits = enc.row_bit_ids();
    let col_to_row = enc.col_to_row();
    let tpos = table.greater_than_zero(trans)?;
    table.register_root(tpos);
    let mut reach = init;
    table.register_root(reach);
    loop {
        let image_cols = table.and_abstract(reach, tpos, &row_bits)?;
        let image = table.rename_bits(image_cols, &col_to_row)?;
        let next = table.apply(ApplyOp::Or, reach, image)?;
        if next == reach {
            break;
        }
        table.unregister_root(reach);
        reach = next;
        table.register_root(reach);
    }
    table.unregister_root(tpos);
    table.unregister_root(reach);
    let states = table.sat_count(reach, &row_bits)?;
    Ok((reach, states))
}

impl std::fmt::Debug for SymbolicModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SymbolicModel")
            .field("order", &self.order)
            .field("states", &self.states)
            .field("trans_nodes", &self.stats.trans_nodes)
            .finish_non_exhaustive()
    }
}

impl SymbolicModel {
    /// The three diagrams that make up the model, for sifting and size
    /// bookkeeping.
    pub fn roots(&self) -> [NodeRef; 3] {
        [self.init, self.trans, self.reach]
    }

    /// Combined size of the model's roots.
    pub fn node_count(&self) -> usize {
        self.table.size_many(&self.roots())
    }

    /// Number of initial states (family members admitted by the init
    /// expression).
    pub fn member_count(&self) -> Result<BigUint, DdError> {
        self.table.sat_count(self.init, &self.encoding.row_bit_ids())
    }

    /// Transition probability between two explicit states.
    pub fn probability(&self, from: &Evaluation, to: &Evaluation) -> f64 {
        let a = self.encoding.pair_assignment(from, to);
        match self.table.eval(self.trans, &a) {
            Ok(Terminal::Real(p)) => p,
            _ => 0.0,
        }
    }

    pub fn contains_state(&self, eta: &Evaluation) -> bool {
        let a = self.encoding.state_assignment(eta);
        matches!(self.table.eval(self.reach, &a), Ok(Terminal::Bool(true)))
    }

    /// Largest deviation of any reachable row sum from 1, computed
    /// symbolically by plus-abstracting the columns of the matrix restricted
    /// to the reachable states.
    pub fn stochastic_deviation(&mut self) -> Result<f64, DdError> {
        let cols = self.encoding.col_bit_ids();
        let sums = self.table.sum_abstract(self.trans, &cols)?;
        let one = self.table.mk_const(Terminal::Real(1.0))?;
        let masked = self.table.ite(self.reach, sums, one)?;
        let mut worst = 0.0f64;
        for t in self.table.terminals_of(masked) {
            if let Terminal::Real(v) = t {
                worst = worst.max((v - 1.0).abs());
            }
        }
        Ok(worst)
    }

    /// Stats in the stable JSON shape.
    pub fn stats_json(&self) -> serde_json::Value {
        json!({
            "states": self.states.to_string(),
            "trans_nodes": self.stats.trans_nodes,
            "init_nodes": self.stats.init_nodes,
            "build_seconds": self.stats.build_seconds,
        })
    }
}
