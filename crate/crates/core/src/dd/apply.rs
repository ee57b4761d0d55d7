//! Pointwise operations: apply, if-then-else, abstraction, evaluation and
//! model counting.

use std::collections::{HashMap, HashSet};

use num_bigint::BigUint;
use num_traits::{One, Zero};

use super::{Assignment, BitId, DdError, Kind, NodeRef, NodeTable, Terminal, FALSE, TRUE};
use crate::value::Value;

/// Binary pointwise operators accepted by [`NodeTable::apply`].
///
/// The first four act on Boolean diagrams, the rest on numeric ones.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ApplyOp {
    And,
    Or,
    Xor,
    /// Difference `f ∧ ¬g`.
    Diff,
    Plus,
    Times,
    Max,
    Min,
}

impl ApplyOp {
    fn operand_kind(self) -> Kind {
        match self {
            ApplyOp::And | ApplyOp::Or | ApplyOp::Xor | ApplyOp::Diff => Kind::Bool,
            _ => Kind::Real,
        }
    }

    fn commutative(self) -> bool {
        !matches!(self, ApplyOp::Diff)
    }

    fn code(self) -> u8 {
        match self {
            ApplyOp::And => 0,
            ApplyOp::Or => 1,
            ApplyOp::Xor => 2,
            ApplyOp::Diff => 3,
            ApplyOp::Plus => 4,
            ApplyOp::Times => 5,
            ApplyOp::Max => 6,
            ApplyOp::Min => 7,
        }
    }
}

const GZ_CODE: u8 = 8;

impl<V: Value> NodeTable<V> {
    /// Pointwise `op(f, g)`.
    pub fn apply(&mut self, op: ApplyOp, f: NodeRef, g: NodeRef) -> Result<NodeRef, DdError> {
        self.check_deadline()?;
        if self.kind(f) != op.operand_kind() || self.kind(g) != op.operand_kind() {
            return Err(DdError::KindMismatch);
        }
        self.maybe_gc(&[f, g]);
        self.apply_rec(op, f, g)
    }

    pub(crate) fn apply_rec(
        &mut self,
        op: ApplyOp,
        f: NodeRef,
        g: NodeRef,
    ) -> Result<NodeRef, DdError> {
        if let Some(result) = self.apply_shortcut(op, f, g)? {
            return Ok(result);
        }
        let key = if op.commutative() && g < f {
            (op.code(), g, f)
        } else {
            (op.code(), f, g)
        };
        if let Some(&r) = self.apply_cache.get(&key) {
            return Ok(r);
        }
        let (lf, lg) = (self.level(f), self.level(g));
        let top = lf.min(lg);
        let bit = self.bit_at_level(top as usize);
        let (f0, f1) = self.cofactors(f, top);
        let (g0, g1) = self.cofactors(g, top);
        let low = self.apply_rec(op, f0, g0)?;
        let high = self.apply_rec(op, f1, g1)?;
        let r = self.mk_raw(bit, low, high)?;
        self.apply_cache.insert(key, r);
        Ok(r)
    }

    fn cofactors(&self, f: NodeRef, level: u32) -> (NodeRef, NodeRef) {
        if self.level(f) == level {
            let (_, low, high) = self.node(f);
            (low, high)
        } else {
            (f, f)
        }
    }

    /// Terminal and identity cases; `None` means recursion must proceed.
    fn apply_shortcut(
        &mut self,
        op: ApplyOp,
        f: NodeRef,
        g: NodeRef,
    ) -> Result<Option<NodeRef>, DdError> {
        let r = match op {
            ApplyOp::And => {
                if f == FALSE || g == FALSE {
                    Some(FALSE)
                } else if f == TRUE || f == g {
                    Some(g)
                } else if g == TRUE {
                    Some(f)
                } else {
                    None
                }
            }
            ApplyOp::Or => {
                if f == TRUE || g == TRUE {
                    Some(TRUE)
                } else if f == FALSE || f == g {
                    Some(g)
                } else if g == FALSE {
                    Some(f)
                } else {
                    None
                }
            }
            ApplyOp::Xor => {
                if f == g {
                    Some(FALSE)
                } else if f == FALSE {
                    Some(g)
                } else if g == FALSE {
                    Some(f)
                } else {
                    None
                }
            }
            ApplyOp::Diff => {
                if f == FALSE || g == TRUE || f == g {
                    Some(FALSE)
                } else if g == FALSE {
                    Some(f)
                } else {
                    None
                }
            }
            ApplyOp::Plus => match (self.real_value(f), self.real_value(g)) {
                (Some(a), _) if a.is_zero() => Some(g),
                (_, Some(b)) if b.is_zero() => Some(f),
                (Some(a), Some(b)) => Some(self.mk_const(Terminal::Real(a + b))?),
                _ => None,
            },
            ApplyOp::Times => match (self.real_value(f), self.real_value(g)) {
                (Some(a), _) if a.is_zero() => Some(f),
                (_, Some(b)) if b.is_zero() => Some(g),
                (Some(a), _) if a.is_one() => Some(g),
                (_, Some(b)) if b.is_one() => Some(f),
                (Some(a), Some(b)) => Some(self.mk_const(Terminal::Real(a * b))?),
                _ => None,
            },
            ApplyOp::Max | ApplyOp::Min => {
                if f == g {
                    Some(f)
                } else {
                    match (self.real_value(f), self.real_value(g)) {
                        (Some(a), Some(b)) => {
                            let keep_f = (a > b) == matches!(op, ApplyOp::Max);
                            Some(if keep_f { f } else { g })
                        }
                        _ => None,
                    }
                }
            }
        };
        Ok(r)
    }

    fn real_value(&self, r: NodeRef) -> Option<V> {
        match self.terminal(r) {
            Some(Terminal::Real(v)) => Some(v),
            _ => None,
        }
    }

    /// Pointwise if-then-else: `f` Boolean, `g` and `h` of one kind.
    pub fn ite(&mut self, f: NodeRef, g: NodeRef, h: NodeRef) -> Result<NodeRef, DdError> {
        self.check_deadline()?;
        if self.kind(f) != Kind::Bool || self.kind(g) != self.kind(h) {
            return Err(DdError::KindMismatch);
        }
        self.maybe_gc(&[f, g, h]);
        self.ite_rec(f, g, h)
    }

    pub(crate) fn ite_rec(
        &mut self,
        f: NodeRef,
        g: NodeRef,
        h: NodeRef,
    ) -> Result<NodeRef, DdError> {
        if f == TRUE {
            return Ok(g);
        }
        if f == FALSE {
            return Ok(h);
        }
        if g == h {
            return Ok(g);
        }
        if g == TRUE && h == FALSE {
            return Ok(f);
        }
        if let Some(&r) = self.ite_cache.get(&(f, g, h)) {
            return Ok(r);
        }
        let top = self.level(f).min(self.level(g)).min(self.level(h));
        let bit = self.bit_at_level(top as usize);
        let (f0, f1) = self.cofactors(f, top);
        let (g0, g1) = self.cofactors(g, top);
        let (h0, h1) = self.cofactors(h, top);
        let low = self.ite_rec(f0, g0, h0)?;
        let high = self.ite_rec(f1, g1, h1)?;
        let r = self.mk_raw(bit, low, high)?;
        self.ite_cache.insert((f, g, h), r);
        Ok(r)
    }

    /// Boolean negation, defined as `ite(f, false, true)`.
    pub fn not(&mut self, f: NodeRef) -> Result<NodeRef, DdError> {
        self.ite(f, FALSE, TRUE)
    }

    /// Boolean diagram of the states where the numeric diagram `f` is > 0.
    pub fn greater_than_zero(&mut self, f: NodeRef) -> Result<NodeRef, DdError> {
        self.check_deadline()?;
        if self.kind(f) != Kind::Real {
            return Err(DdError::KindMismatch);
        }
        self.maybe_gc(&[f]);
        self.gz_rec(f)
    }

    fn gz_rec(&mut self, f: NodeRef) -> Result<NodeRef, DdError> {
        if let Some(Terminal::Real(v)) = self.terminal(f) {
            return Ok(self.bool_const(v > V::zero()));
        }
        let key = (GZ_CODE, f, f);
        if let Some(&r) = self.apply_cache.get(&key) {
            return Ok(r);
        }
        let (bit, low, high) = self.node(f);
        let l = self.gz_rec(low)?;
        let h = self.gz_rec(high)?;
        let r = self.mk_raw(bit, l, h)?;
        self.apply_cache.insert(key, r);
        Ok(r)
    }

    /// Existential quantification of a Boolean diagram over `bits`.
    pub fn exists_abstract(&mut self, f: NodeRef, bits: &[BitId]) -> Result<NodeRef, DdError> {
        self.check_deadline()?;
        if self.kind(f) != Kind::Bool {
            return Err(DdError::KindMismatch);
        }
        self.maybe_gc(&[f]);
        let set: HashSet<BitId> = bits.iter().copied().collect();
        let mut memo = HashMap::new();
        self.exists_rec(f, &set, &mut memo)
    }

    fn exists_rec(
        &mut self,
        f: NodeRef,
        bits: &HashSet<BitId>,
        memo: &mut HashMap<NodeRef, NodeRef>,
    ) -> Result<NodeRef, DdError> {
        if self.is_terminal(f) {
            return Ok(f);
        }
        if let Some(&r) = memo.get(&f) {
            return Ok(r);
        }
        let (bit, low, high) = self.node(f);
        let l = self.exists_rec(low, bits, memo)?;
        let r = if bits.contains(&bit) {
            if l == TRUE {
                TRUE
            } else {
                let h = self.exists_rec(high, bits, memo)?;
                self.apply_rec(ApplyOp::Or, l, h)?
            }
        } else {
            let h = self.exists_rec(high, bits, memo)?;
            self.mk_raw(bit, l, h)?
        };
        memo.insert(f, r);
        Ok(r)
    }

    /// Sums a numeric diagram over `bits` (the abstraction backing row-sum
    /// checks on probability matrices). A bit from `bits` that a path does
    /// not mention contributes a factor of 2 to that path's value.
    pub fn sum_abstract(&mut self, f: NodeRef, bits: &[BitId]) -> Result<NodeRef, DdError> {
        self.check_deadline()?;
        if self.kind(f) != Kind::Real {
            return Err(DdError::KindMismatch);
        }
        self.maybe_gc(&[f]);
        let set: HashSet<BitId> = bits.iter().copied().collect();
        let mut levels: Vec<u32> = bits
            .iter()
            .map(|b| self.level_of_bit(*b) as u32)
            .collect();
        levels.sort_unstable();
        levels.dedup();
        let mut memo = HashMap::new();
        let below = self.sum_rec(f, &set, &levels, &mut memo)?;
        let above = count_levels_between(&levels, None, self.level(f));
        self.scale_pow2(below, above)
    }

    /// Sum over the abstracted bits strictly below `f`'s top level.
    fn sum_rec(
        &mut self,
        f: NodeRef,
        bits: &HashSet<BitId>,
        levels: &[u32],
        memo: &mut HashMap<NodeRef, NodeRef>,
    ) -> Result<NodeRef, DdError> {
        if self.is_terminal(f) {
            return Ok(f);
        }
        if let Some(&r) = memo.get(&f) {
            return Ok(r);
        }
        let (bit, low, high) = self.node(f);
        let level = self.level(f);
        let mut branches = [FALSE; 2];
        for (slot, child) in branches.iter_mut().zip([low, high]) {
            let below = self.sum_rec(child, bits, levels, memo)?;
            let skipped = count_levels_between(levels, Some(level), self.level(child));
            *slot = self.scale_pow2(below, skipped)?;
        }
        let r = if bits.contains(&bit) {
            self.apply_rec(ApplyOp::Plus, branches[0], branches[1])?
        } else {
            self.mk_raw(bit, branches[0], branches[1])?
        };
        memo.insert(f, r);
        Ok(r)
    }

    fn scale_pow2(&mut self, f: NodeRef, exp: u32) -> Result<NodeRef, DdError> {
        if exp == 0 {
            return Ok(f);
        }
        let two = V::one() + V::one();
        let mut factor = V::one();
        for _ in 0..exp {
            factor = factor * two;
        }
        let c = self.mk_const(Terminal::Real(factor))?;
        self.apply_rec(ApplyOp::Times, f, c)
    }

    /// `∃bits. f ∧ g` without materializing the conjunction.
    pub fn and_abstract(
        &mut self,
        f: NodeRef,
        g: NodeRef,
        bits: &[BitId],
    ) -> Result<NodeRef, DdError> {
        self.check_deadline()?;
        if self.kind(f) != Kind::Bool || self.kind(g) != Kind::Bool {
            return Err(DdError::KindMismatch);
        }
        self.maybe_gc(&[f, g]);
        let set: HashSet<BitId> = bits.iter().copied().collect();
        let mut memo = HashMap::new();
        self.and_abstract_rec(f, g, &set, &mut memo)
    }

    fn and_abstract_rec(
        &mut self,
        f: NodeRef,
        g: NodeRef,
        bits: &HashSet<BitId>,
        memo: &mut HashMap<(NodeRef, NodeRef), NodeRef>,
    ) -> Result<NodeRef, DdError> {
        if f == FALSE || g == FALSE {
            return Ok(FALSE);
        }
        if f == TRUE && g == TRUE {
            return Ok(TRUE);
        }
        if let Some(&r) = memo.get(&(f, g)) {
            return Ok(r);
        }
        let top = self.level(f).min(self.level(g));
        let bit = self.bit_at_level(top as usize);
        let (f0, f1) = self.cofactors(f, top);
        let (g0, g1) = self.cofactors(g, top);
        let r = if bits.contains(&bit) {
            let low = self.and_abstract_rec(f0, g0, bits, memo)?;
            if low == TRUE {
                TRUE
            } else {
                let high = self.and_abstract_rec(f1, g1, bits, memo)?;
                self.apply_rec(ApplyOp::Or, low, high)?
            }
        } else {
            let low = self.and_abstract_rec(f0, g0, bits, memo)?;
            let high = self.and_abstract_rec(f1, g1, bits, memo)?;
            self.mk_raw(bit, low, high)?
        };
        memo.insert((f, g), r);
        Ok(r)
    }

    /// Substitutes bits according to `map`, rebuilding the diagram so the
    /// result is canonical under the current order.
    pub fn rename_bits(
        &mut self,
        f: NodeRef,
        map: &HashMap<BitId, BitId>,
    ) -> Result<NodeRef, DdError> {
        self.check_deadline()?;
        self.maybe_gc(&[f]);
        let mut memo = HashMap::new();
        self.rename_rec(f, map, &mut memo)
    }

    fn rename_rec(
        &mut self,
        f: NodeRef,
        map: &HashMap<BitId, BitId>,
        memo: &mut HashMap<NodeRef, NodeRef>,
    ) -> Result<NodeRef, DdError> {
        if self.is_terminal(f) {
            return Ok(f);
        }
        if let Some(&r) = memo.get(&f) {
            return Ok(r);
        }
        let (bit, low, high) = self.node(f);
        let target = map.get(&bit).copied().unwrap_or(bit);
        let l = self.rename_rec(low, map, memo)?;
        let h = self.rename_rec(high, map, memo)?;
        let guard = self.var(target)?;
        let r = self.ite_rec(guard, h, l)?;
        memo.insert(f, r);
        Ok(r)
    }

    /// Follows the assignment from `f` down to a terminal.
    pub fn eval(&self, f: NodeRef, a: &Assignment) -> Result<Terminal<V>, DdError> {
        let mut cur = f;
        loop {
            match self.terminal(cur) {
                Some(t) => return Ok(t),
                None => {
                    let (bit, low, high) = self.node(cur);
                    match a.get(bit) {
                        Some(true) => cur = high,
                        Some(false) => cur = low,
                        None => return Err(DdError::IncompleteAssignment(bit)),
                    }
                }
            }
        }
    }

    /// Exact number of satisfying assignments of a Boolean diagram over
    /// `support`, which must cover every bit occurring in `f`.
    pub fn sat_count(&self, f: NodeRef, support: &[BitId]) -> Result<BigUint, DdError> {
        if self.kind(f) != Kind::Bool {
            return Err(DdError::KindMismatch);
        }
        let mut sup: Vec<BitId> = support.to_vec();
        sup.sort_by_key(|b| self.level_of_bit(*b));
        sup.dedup();
        let pos_of_level: HashMap<u32, usize> = sup
            .iter()
            .enumerate()
            .map(|(i, b)| (self.level_of_bit(*b) as u32, i))
            .collect();
        let mut memo: HashMap<NodeRef, BigUint> = HashMap::new();
        let n = sup.len();
        let root_pos = self.support_pos(f, &pos_of_level, n)?;
        let below_root = self.count_rec(f, &pos_of_level, n, &mut memo)?;
        Ok(below_root << root_pos)
    }

    fn support_pos(
        &self,
        f: NodeRef,
        pos_of_level: &HashMap<u32, usize>,
        n: usize,
    ) -> Result<usize, DdError> {
        if self.is_terminal(f) {
            return Ok(n);
        }
        let (bit, _, _) = self.node(f);
        match pos_of_level.get(&(self.level_of_bit(bit) as u32)) {
            Some(&p) => Ok(p),
            None => Err(DdError::SupportViolation(bit)),
        }
    }

    /// Satisfying count over the support bits at `f`'s own position and
    /// below, with `f`'s bit still to be decided.
    fn count_rec(
        &self,
        f: NodeRef,
        pos_of_level: &HashMap<u32, usize>,
        n: usize,
        memo: &mut HashMap<NodeRef, BigUint>,
    ) -> Result<BigUint, DdError> {
        if f == FALSE {
            return Ok(BigUint::zero());
        }
        if f == TRUE {
            return Ok(BigUint::one());
        }
        if let Some(c) = memo.get(&f) {
            return Ok(c.clone());
        }
        let pos = self.support_pos(f, pos_of_level, n)?;
        let (_, low, high) = self.node(f);
        let mut total = BigUint::zero();
        for child in [low, high] {
            let child_pos = self.support_pos(child, pos_of_level, n)?;
            debug_assert!(child_pos > pos);
            let below = self.count_rec(child, pos_of_level, n, memo)?;
            total += below << (child_pos - pos - 1);
        }
        memo.insert(f, total.clone());
        Ok(total)
    }
}

/// Number of sorted `levels` strictly between `lo` (exclusive; `None` means
/// above everything) and `hi` (exclusive).
fn count_levels_between(levels: &[u32], lo: Option<u32>, hi: u32) -> u32 {
    let upper = levels.partition_point(|&l| l < hi);
    let lower = match lo {
        Some(lo) => levels.partition_point(|&l| l <= lo),
        None => 0,
    };
    (upper - lower) as u32
}
