//! Reduced ordered decision diagrams with hash consing.
//!
//! A single [`NodeTable`] owns every node: the two Boolean terminals, numeric
//! terminals (multi-terminal diagrams) and decision nodes. Diagrams are
//! canonical under the table's current level order: two [`NodeRef`]s are
//! equal iff they denote the same function. Canonicity is maintained by the
//! usual two reduction rules — no node has identical children, and no two
//! nodes share the same (bit, low, high) triple.
//!
//! The table is single-threaded. Nodes are reclaimed by mark-and-sweep from
//! explicitly registered roots; a collection may run at the entry of any
//! public operation once the live count crosses the watermark, so any
//! `NodeRef` held across public calls must either be registered as a root or
//! passed as an argument to the next call.

mod apply;
mod swap;

pub use apply::ApplyOp;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::time::Instant;

use thiserror::Error;

use crate::value::Value;

/// Identifier of one bit-level decision variable.
///
/// Ids are dense: a table over `n` bits uses the ids `0..n`. The id is the
/// stable identity of a bit; its position in the order (its *level*) changes
/// under swaps.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct BitId(pub u32);

/// Handle to a node owned by a [`NodeTable`].
///
/// Refs are only meaningful for the table that produced them.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct NodeRef(u32);

/// The Boolean `false` terminal of every table.
pub const FALSE: NodeRef = NodeRef(0);
/// The Boolean `true` terminal of every table.
pub const TRUE: NodeRef = NodeRef(1);

impl NodeRef {
    fn index(self) -> usize {
        self.0 as usize
    }
}

/// Terminal payload: Boolean diagrams and numeric-valued diagrams share one
/// table but never mix within a single diagram.
#[derive(Clone, Copy, PartialEq, Debug)]
pub enum Terminal<V> {
    Bool(bool),
    Real(V),
}

/// Terminal kind of a diagram.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Kind {
    Bool,
    Real,
}

#[derive(Clone, Copy, Debug)]
enum Slot<V> {
    Free,
    Term(Terminal<V>),
    Node { bit: BitId, low: NodeRef, high: NodeRef },
}

/// Errors surfaced by table operations.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DdError {
    #[error("node limit of {limit} live nodes exceeded")]
    NodeLimit { limit: usize },
    #[error("wall-time budget exceeded")]
    TimeBudget,
    #[error("operand kind does not match the operator")]
    KindMismatch,
    #[error("assignment does not cover bit {0:?}")]
    IncompleteAssignment(BitId),
    #[error("diagram mentions bit {0:?} outside the given support")]
    SupportViolation(BitId),
}

/// Total assignment of Boolean values to bits, used by [`NodeTable::eval`].
#[derive(Clone, Debug, Default)]
pub struct Assignment {
    bits: HashMap<BitId, bool>,
}

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, bit: BitId, value: bool) {
        self.bits.insert(bit, value);
    }

    pub fn get(&self, bit: BitId) -> Option<bool> {
        self.bits.get(&bit).copied()
    }
}

impl FromIterator<(BitId, bool)> for Assignment {
    fn from_iter<I: IntoIterator<Item = (BitId, bool)>>(iter: I) -> Self {
        Assignment {
            bits: iter.into_iter().collect(),
        }
    }
}

/// Manager for a shared, multi-rooted decision-diagram graph.
pub struct NodeTable<V: Value> {
    slots: Vec<Slot<V>>,
    free: Vec<u32>,
    /// (bit, low, high) -> decision node.
    unique: HashMap<(BitId, NodeRef, NodeRef), NodeRef>,
    /// Bit-exact value key -> numeric terminal.
    terms: HashMap<V::Key, NodeRef>,
    /// level -> bit.
    order: Vec<BitId>,
    /// bit id -> level.
    level_of: Vec<u32>,
    bit_names: Vec<String>,
    apply_cache: HashMap<(u8, NodeRef, NodeRef), NodeRef>,
    ite_cache: HashMap<(NodeRef, NodeRef, NodeRef), NodeRef>,
    /// Registered roots with multiplicity.
    roots: HashMap<NodeRef, u32>,
    live_count: usize,
    peak_live: usize,
    node_limit: usize,
    gc_watermark: usize,
    deadline: Option<Instant>,
    tick_counter: u32,
}

impl<V: Value> NodeTable<V> {
    /// Creates a table whose level order is `order`, which must be a
    /// permutation of the dense bit ids `0..order.len()`.
    pub fn new(order: &[BitId]) -> Self {
        let n = order.len();
        let mut level_of = vec![u32::MAX; n];
        for (level, bit) in order.iter().enumerate() {
            let idx = bit.0 as usize;
            assert!(idx < n, "bit ids must be dense");
            assert!(level_of[idx] == u32::MAX, "duplicate bit in order");
            level_of[idx] = level as u32;
        }
        NodeTable {
            slots: vec![Slot::Term(Terminal::Bool(false)), Slot::Term(Terminal::Bool(true))],
            free: Vec::new(),
            unique: HashMap::new(),
            terms: HashMap::new(),
            order: order.to_vec(),
            level_of,
            bit_names: (0..n).map(|i| format!("b{i}")).collect(),
            apply_cache: HashMap::new(),
            ite_cache: HashMap::new(),
            roots: HashMap::new(),
            live_count: 2,
            peak_live: 2,
            node_limit: usize::MAX,
            gc_watermark: usize::MAX,
            deadline: None,
            tick_counter: 0,
        }
    }

    /// Creates a table over bits `0..n` in id order.
    pub fn with_bits(n: usize) -> Self {
        let order: Vec<BitId> = (0..n as u32).map(BitId).collect();
        Self::new(&order)
    }

    pub fn set_node_limit(&mut self, limit: usize) {
        self.node_limit = limit;
        self.gc_watermark = limit - limit / 4;
    }

    pub fn node_limit(&self) -> usize {
        self.node_limit
    }

    pub fn set_deadline(&mut self, deadline: Option<Instant>) {
        self.deadline = deadline;
    }

    pub fn set_bit_name(&mut self, bit: BitId, name: impl Into<String>) {
        self.bit_names[bit.0 as usize] = name.into();
    }

    pub fn bit_name(&self, bit: BitId) -> &str {
        &self.bit_names[bit.0 as usize]
    }

    /// Number of levels (= number of bits).
    pub fn num_levels(&self) -> usize {
        self.order.len()
    }

    pub fn bit_at_level(&self, level: usize) -> BitId {
        self.order[level]
    }

    pub fn level_of_bit(&self, bit: BitId) -> usize {
        self.level_of[bit.0 as usize] as usize
    }

    /// Current level order, outermost bit first.
    pub fn level_order(&self) -> &[BitId] {
        &self.order
    }

    /// Live nodes currently in the table, terminals included.
    pub fn live_nodes(&self) -> usize {
        self.live_count
    }

    /// High-water mark of live nodes since creation.
    pub fn peak_live_nodes(&self) -> usize {
        self.peak_live
    }

    // -- node accessors -------------------------------------------------

    fn slot(&self, r: NodeRef) -> &Slot<V> {
        &self.slots[r.index()]
    }

    pub(crate) fn is_terminal(&self, r: NodeRef) -> bool {
        matches!(self.slot(r), Slot::Term(_))
    }

    /// Terminal payload, if `r` is a terminal.
    pub fn terminal(&self, r: NodeRef) -> Option<Terminal<V>> {
        match self.slot(r) {
            Slot::Term(t) => Some(*t),
            _ => None,
        }
    }

    /// (bit, low, high) of a decision node; panics on terminals.
    pub fn node(&self, r: NodeRef) -> (BitId, NodeRef, NodeRef) {
        match self.slot(r) {
            Slot::Node { bit, low, high } => (*bit, *low, *high),
            _ => panic!("terminal node has no children"),
        }
    }

    /// Level of a node's root; terminals sit below every level.
    pub(crate) fn level(&self, r: NodeRef) -> u32 {
        match self.slot(r) {
            Slot::Term(_) => u32::MAX,
            Slot::Node { bit, .. } => self.level_of[bit.0 as usize],
            Slot::Free => panic!("dangling node reference"),
        }
    }

    fn tests_bit(&self, r: NodeRef, bit: BitId) -> bool {
        matches!(self.slot(r), Slot::Node { bit: b, .. } if *b == bit)
    }

    /// Terminal kind of the diagram rooted at `r`.
    pub fn kind(&self, r: NodeRef) -> Kind {
        let mut cur = r;
        loop {
            match self.slot(cur) {
                Slot::Term(Terminal::Bool(_)) => return Kind::Bool,
                Slot::Term(Terminal::Real(_)) => return Kind::Real,
                Slot::Node { low, .. } => cur = *low,
                Slot::Free => panic!("dangling node reference"),
            }
        }
    }

    // -- construction ---------------------------------------------------

    /// Unique terminal node for `t`.
    pub fn mk_const(&mut self, t: Terminal<V>) -> Result<NodeRef, DdError> {
        match t {
            Terminal::Bool(false) => Ok(FALSE),
            Terminal::Bool(true) => Ok(TRUE),
            Terminal::Real(v) => {
                if let Some(&r) = self.terms.get(&v.key()) {
                    return Ok(r);
                }
                let r = self.alloc(Slot::Term(Terminal::Real(v)))?;
                self.terms.insert(v.key(), r);
                Ok(r)
            }
        }
    }

    pub fn bool_const(&self, b: bool) -> NodeRef {
        if b {
            TRUE
        } else {
            FALSE
        }
    }

    /// Decision node for `bit ? high : low`, reduced and hash-consed.
    ///
    /// `bit`'s level must lie strictly above the levels of `low` and `high`.
    pub fn mk_node(&mut self, bit: BitId, low: NodeRef, high: NodeRef) -> Result<NodeRef, DdError> {
        assert!(
            self.level_of[bit.0 as usize] < self.level(low)
                && self.level_of[bit.0 as usize] < self.level(high),
            "mk_node: bit {:?} does not lie above both children",
            bit
        );
        self.maybe_gc(&[low, high]);
        self.mk_raw(bit, low, high)
    }

    /// The single-bit Boolean diagram of `bit`.
    pub fn var(&mut self, bit: BitId) -> Result<NodeRef, DdError> {
        self.mk_raw(bit, FALSE, TRUE)
    }

    pub(crate) fn mk_raw(
        &mut self,
        bit: BitId,
        low: NodeRef,
        high: NodeRef,
    ) -> Result<NodeRef, DdError> {
        if low == high {
            return Ok(low);
        }
        if let Some(&r) = self.unique.get(&(bit, low, high)) {
            return Ok(r);
        }
        let r = self.alloc(Slot::Node { bit, low, high })?;
        self.unique.insert((bit, low, high), r);
        Ok(r)
    }

    fn alloc(&mut self, slot: Slot<V>) -> Result<NodeRef, DdError> {
        self.tick()?;
        if self.live_count >= self.node_limit {
            return Err(DdError::NodeLimit {
                limit: self.node_limit,
            });
        }
        let idx = match self.free.pop() {
            Some(i) => {
                self.slots[i as usize] = slot;
                i
            }
            None => {
                self.slots.push(slot);
                (self.slots.len() - 1) as u32
            }
        };
        self.live_count += 1;
        self.peak_live = self.peak_live.max(self.live_count);
        Ok(NodeRef(idx))
    }

    fn tick(&mut self) -> Result<(), DdError> {
        if self.deadline.is_some() {
            self.tick_counter = self.tick_counter.wrapping_add(1);
            if self.tick_counter % 256 == 0 {
                self.check_deadline()?;
            }
        }
        Ok(())
    }

    pub(crate) fn check_deadline(&self) -> Result<(), DdError> {
        match self.deadline {
            Some(d) if Instant::now() > d => Err(DdError::TimeBudget),
            _ => Ok(()),
        }
    }

    // -- roots and garbage collection ------------------------------------

    /// Protects `r` (and everything below it) from garbage collection.
    pub fn register_root(&mut self, r: NodeRef) {
        *self.roots.entry(r).or_insert(0) += 1;
    }

    pub fn unregister_root(&mut self, r: NodeRef) {
        match self.roots.get_mut(&r) {
            Some(n) if *n > 1 => *n -= 1,
            Some(_) => {
                self.roots.remove(&r);
            }
            None => debug_assert!(false, "unregister_root: {r:?} is not registered"),
        }
    }

    pub(crate) fn maybe_gc(&mut self, extra: &[NodeRef]) {
        if self.live_count >= self.gc_watermark {
            self.collect_garbage(extra);
            let floor = self.node_limit - self.node_limit / 4;
            let next = floor.max(self.live_count + self.live_count / 2).max(64);
            self.gc_watermark = next.min(self.node_limit);
        }
    }

    /// Mark-and-sweep from the registered roots plus `extra`.
    ///
    /// Drops the operation caches; refs to swept nodes become invalid.
    pub fn collect_garbage(&mut self, extra: &[NodeRef]) {
        let mut marked = vec![false; self.slots.len()];
        marked[FALSE.index()] = true;
        marked[TRUE.index()] = true;
        let mut stack: Vec<NodeRef> = self.roots.keys().copied().collect();
        stack.extend_from_slice(extra);
        while let Some(r) = stack.pop() {
            if marked[r.index()] {
                continue;
            }
            marked[r.index()] = true;
            if let Slot::Node { low, high, .. } = self.slots[r.index()] {
                stack.push(low);
                stack.push(high);
            }
        }
        for idx in 0..self.slots.len() {
            if marked[idx] || matches!(self.slots[idx], Slot::Free) {
                continue;
            }
            match self.slots[idx] {
                Slot::Node { bit, low, high } => {
                    self.unique.remove(&(bit, low, high));
                }
                Slot::Term(Terminal::Real(v)) => {
                    self.terms.remove(&v.key());
                }
                _ => unreachable!(),
            }
            self.slots[idx] = Slot::Free;
            self.free.push(idx as u32);
            self.live_count -= 1;
        }
        self.apply_cache.clear();
        self.ite_cache.clear();
    }

    pub(crate) fn clear_caches(&mut self) {
        self.apply_cache.clear();
        self.ite_cache.clear();
    }

    // -- inspection -------------------------------------------------------

    /// Number of distinct nodes reachable from `f`, terminals included.
    pub fn size(&self, f: NodeRef) -> usize {
        self.size_many(&[f])
    }

    /// Distinct nodes reachable from any of `roots`, counted once each.
    pub fn size_many(&self, roots: &[NodeRef]) -> usize {
        let mut seen = vec![false; self.slots.len()];
        let mut stack: Vec<NodeRef> = Vec::new();
        let mut count = 0usize;
        for &r in roots {
            stack.push(r);
        }
        while let Some(r) = stack.pop() {
            if seen[r.index()] {
                continue;
            }
            seen[r.index()] = true;
            count += 1;
            if let Slot::Node { low, high, .. } = self.slots[r.index()] {
                stack.push(low);
                stack.push(high);
            }
        }
        count
    }

    /// Distinct terminal values reachable from `f`.
    pub fn terminals_of(&self, f: NodeRef) -> Vec<Terminal<V>> {
        let mut seen = vec![false; self.slots.len()];
        let mut stack = vec![f];
        let mut out = Vec::new();
        while let Some(r) = stack.pop() {
            if seen[r.index()] {
                continue;
            }
            seen[r.index()] = true;
            match self.slots[r.index()] {
                Slot::Term(t) => out.push(t),
                Slot::Node { low, high, .. } => {
                    stack.push(low);
                    stack.push(high);
                }
                Slot::Free => unreachable!(),
            }
        }
        out
    }

    /// All bits occurring in the diagrams rooted at `roots`.
    pub fn support(&self, roots: &[NodeRef]) -> Vec<BitId> {
        let mut seen = vec![false; self.slots.len()];
        let mut bits = vec![false; self.order.len()];
        let mut stack: Vec<NodeRef> = roots.to_vec();
        while let Some(r) = stack.pop() {
            if seen[r.index()] {
                continue;
            }
            seen[r.index()] = true;
            if let Slot::Node { bit, low, high } = self.slots[r.index()] {
                bits[bit.0 as usize] = true;
                stack.push(low);
                stack.push(high);
            }
        }
        let mut out: Vec<BitId> = bits
            .iter()
            .enumerate()
            .filter(|(_, present)| **present)
            .map(|(i, _)| BitId(i as u32))
            .collect();
        out.sort_by_key(|b| self.level_of[b.0 as usize]);
        out
    }

    /// Structural audit of every non-free slot: ordered-ness, both reduction
    /// rules, and unique-table consistency. Intended for tests.
    pub fn audit(&self) -> Result<(), String> {
        let mut live = 0usize;
        for (idx, slot) in self.slots.iter().enumerate() {
            match slot {
                Slot::Free => continue,
                Slot::Term(Terminal::Bool(b)) => {
                    live += 1;
                    let expect = if *b { TRUE } else { FALSE };
                    if NodeRef(idx as u32) != expect {
                        return Err(format!("boolean terminal at unexpected slot {idx}"));
                    }
                }
                Slot::Term(Terminal::Real(v)) => {
                    live += 1;
                    if self.terms.get(&v.key()) != Some(&NodeRef(idx as u32)) {
                        return Err(format!("terminal {v} not canonical in slot {idx}"));
                    }
                }
                Slot::Node { bit, low, high } => {
                    live += 1;
                    let level = self.level_of[bit.0 as usize];
                    if low == high {
                        return Err(format!("redundant node in slot {idx}"));
                    }
                    for child in [low, high] {
                        if matches!(self.slot(*child), Slot::Free) {
                            return Err(format!("slot {idx} points at a freed slot"));
                        }
                        if self.level(*child) <= level {
                            return Err(format!("slot {idx} violates the level order"));
                        }
                    }
                    if self.unique.get(&(*bit, *low, *high)) != Some(&NodeRef(idx as u32)) {
                        return Err(format!(
                            "slot {idx} is not the canonical node for its triple"
                        ));
                    }
                }
            }
        }
        if live != self.live_count {
            return Err(format!(
                "live count {} does not match arena contents {}",
                self.live_count, live
            ));
        }
        for (key, r) in &self.unique {
            match self.slot(*r) {
                Slot::Node { bit, low, high } if (*bit, *low, *high) == *key => {}
                _ => return Err(format!("stale unique-table entry {key:?}")),
            }
        }
        Ok(())
    }

    /// Debug dump as DOT text: solid edges for 1-successors, dashed for
    /// 0-successors. Not a stability contract.
    pub fn dump_dot(&self, roots: &[NodeRef]) -> String {
        let mut out = String::from("digraph dd {\n");
        let mut seen = vec![false; self.slots.len()];
        let mut stack: Vec<NodeRef> = roots.to_vec();
        let mut order: Vec<NodeRef> = Vec::new();
        while let Some(r) = stack.pop() {
            if seen[r.index()] {
                continue;
            }
            seen[r.index()] = true;
            order.push(r);
            if let Slot::Node { low, high, .. } = self.slots[r.index()] {
                stack.push(low);
                stack.push(high);
            }
        }
        order.sort_by_key(|r| (self.level(*r), r.index()));
        for r in &order {
            match self.slot(*r) {
                Slot::Term(Terminal::Bool(b)) => {
                    let _ = writeln!(out, "  n{} [shape=box,label=\"{}\"];", r.index(), b);
                }
                Slot::Term(Terminal::Real(v)) => {
                    let _ = writeln!(out, "  n{} [shape=box,label=\"{}\"];", r.index(), v);
                }
                Slot::Node { bit, low, high } => {
                    let _ = writeln!(
                        out,
                        "  n{} [label=\"{} (L{})\"];",
                        r.index(),
                        self.bit_names[bit.0 as usize],
                        self.level_of[bit.0 as usize]
                    );
                    let _ = writeln!(out, "  n{} -> n{} [style=dashed];", r.index(), low.index());
                    let _ = writeln!(out, "  n{} -> n{};", r.index(), high.index());
                }
                Slot::Free => unreachable!(),
            }
        }
        out.push_str("}\n");
        out
    }
}
