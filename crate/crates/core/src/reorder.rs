//! Variable reordering by group sifting.
//!
//! Program variables are reordered as units: the bits encoding one variable
//! form a contiguous block of levels that moves as a whole, so the bit-level
//! structure of each variable survives any reorder. The central contract of
//! [`reorder`] is that the combined size of the given roots never increases.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::dd::{BitId, DdError, NodeRef, NodeTable};
use crate::value::Value;

/// Total order on program variables. Serializes as a JSON array of names.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VarOrder(pub Vec<String>);

impl VarOrder {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Self {
        VarOrder(names.into_iter().map(Into::into).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.0.iter().position(|n| n == name)
    }

    /// Checks that `self` is a permutation of `names`.
    pub fn is_permutation_of<'a>(&self, names: impl IntoIterator<Item = &'a str>) -> bool {
        let mut sorted: Vec<&str> = self.0.iter().map(String::as_str).collect();
        sorted.sort_unstable();
        let mut expect: Vec<&str> = names.into_iter().collect();
        expect.sort_unstable();
        sorted.windows(2).all(|w| w[0] != w[1]) && sorted == expect
    }
}

/// The bit block of every program variable: bit ids in their fixed internal
/// sequence, outermost first. Expanding a [`VarOrder`] concatenates these
/// blocks.
#[derive(Clone, Debug, Default)]
pub struct BitGroups {
    blocks: BTreeMap<String, Vec<BitId>>,
}

impl BitGroups {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, bits: Vec<BitId>) {
        assert!(!bits.is_empty(), "a variable needs at least one bit");
        self.blocks.insert(name.into(), bits);
    }

    pub fn bits(&self, name: &str) -> &[BitId] {
        &self.blocks[name]
    }

    pub fn width(&self, name: &str) -> usize {
        self.blocks[name].len()
    }

    /// Bit-level order induced by `order`.
    pub fn level_order(&self, order: &VarOrder) -> Vec<BitId> {
        order
            .iter()
            .flat_map(|name| self.bits(name).iter().copied())
            .collect()
    }
}

/// Tuning knobs for one sifting run.
#[derive(Clone, Debug)]
pub struct SiftConfig {
    /// Transient ceiling while one group is on the move, as a factor of the
    /// size at the start of that group's sift. Must be > 1.
    pub max_growth: f64,
    /// Number of full passes over all groups.
    pub passes: usize,
}

impl Default for SiftConfig {
    fn default() -> Self {
        SiftConfig {
            max_growth: 1.2,
            passes: 1,
        }
    }
}

/// Sifts the variable groups of `order` and returns an order under which the
/// combined size of `roots` is no larger than under the input order.
///
/// Each group in turn (largest first) is moved through all positions by
/// adjacent block swaps, scanning towards the bottom and then towards the
/// top, and is parked at the best position seen; ties prefer the position
/// closest to where the group started. `roots` must be registered in the
/// table, and the table's current level arrangement must match `order`.
pub fn reorder<V: Value>(
    table: &mut NodeTable<V>,
    roots: &[NodeRef],
    order: &VarOrder,
    groups: &BitGroups,
    cfg: &SiftConfig,
) -> Result<VarOrder, DdError> {
    assert!(cfg.max_growth > 1.0, "max_growth must exceed 1");
    assert_eq!(
        groups.level_order(order),
        table.level_order(),
        "order does not describe the table's current level arrangement"
    );
    table.collect_garbage(&[]);

    let names: Vec<String> = order.iter().map(str::to_owned).collect();
    let widths: Vec<usize> = names.iter().map(|n| groups.width(n)).collect();
    let mut layout: Vec<usize> = (0..names.len()).collect();
    let base_size = table.size_many(roots);

    for _ in 0..cfg.passes.max(1) {
        let before_pass = table.size_many(roots);
        sift_pass(table, roots, &mut layout, &widths, cfg)?;
        if table.size_many(roots) >= before_pass {
            break;
        }
    }

    // Guard for the non-increase contract: fall back to the input order if a
    // pass somehow ended larger.
    if table.size_many(roots) > base_size {
        let home: Vec<usize> = (0..names.len()).collect();
        restore_layout(table, &mut layout, &widths, &home)?;
        return Ok(order.clone());
    }

    Ok(VarOrder(layout.iter().map(|&g| names[g].clone()).collect()))
}

/// One largest-first pass: every group is sifted once.
fn sift_pass<V: Value>(
    table: &mut NodeTable<V>,
    roots: &[NodeRef],
    layout: &mut Vec<usize>,
    widths: &[usize],
    cfg: &SiftConfig,
) -> Result<(), DdError> {
    let counts = group_node_counts(table, roots, layout, widths);
    let mut agenda: Vec<usize> = layout.clone();
    agenda.sort_by_key(|&g| {
        let pos = layout.iter().position(|&x| x == g).unwrap();
        (std::cmp::Reverse(counts[g]), pos)
    });
    for g in agenda {
        sift_group(table, roots, layout, widths, g, cfg)?;
    }
    Ok(())
}

/// Decision nodes reachable from `roots`, tallied per group.
fn group_node_counts<V: Value>(
    table: &NodeTable<V>,
    roots: &[NodeRef],
    layout: &[usize],
    widths: &[usize],
) -> Vec<usize> {
    let mut group_of_level: Vec<usize> = Vec::new();
    for &g in layout {
        group_of_level.extend(std::iter::repeat(g).take(widths[g]));
    }
    let mut counts = vec![0usize; layout.len()];
    let mut seen = HashSet::new();
    let mut stack: Vec<NodeRef> = roots.to_vec();
    while let Some(r) = stack.pop() {
        if !seen.insert(r) || table.terminal(r).is_some() {
            continue;
        }
        let (bit, low, high) = table.node(r);
        counts[group_of_level[table.level_of_bit(bit)]] += 1;
        stack.push(low);
        stack.push(high);
    }
    counts
}

fn sift_group<V: Value>(
    table: &mut NodeTable<V>,
    roots: &[NodeRef],
    layout: &mut [usize],
    widths: &[usize],
    group: usize,
    cfg: &SiftConfig,
) -> Result<(), DdError> {
    let last = layout.len() - 1;
    let start = layout.iter().position(|&g| g == group).unwrap();
    let start_size = table.size_many(roots);
    let ceiling = (cfg.max_growth * start_size as f64).ceil() as usize;

    // position -> (size, scan index), seeded with the starting position.
    let mut seen: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    seen.insert(start, (start_size, 0));
    let mut scan_index = 0usize;

    let mut pos = start;
    while pos < last {
        swap_group_pair(table, layout, widths, pos)?;
        pos += 1;
        scan_index += 1;
        let size = table.size_many(roots);
        seen.entry(pos).or_insert((size, scan_index));
        if size > ceiling {
            break;
        }
    }
    while pos > 0 {
        swap_group_pair(table, layout, widths, pos - 1)?;
        pos -= 1;
        scan_index += 1;
        let size = table.size_many(roots);
        seen.entry(pos).or_insert((size, scan_index));
        if size > ceiling && pos < start {
            break;
        }
    }

    let (&best_pos, _) = seen
        .iter()
        .min_by_key(|(p, (size, idx))| (*size, p.abs_diff(start), *idx))
        .expect("at least the start position was seen");
    while pos < best_pos {
        swap_group_pair(table, layout, widths, pos)?;
        pos += 1;
    }
    while pos > best_pos {
        swap_group_pair(table, layout, widths, pos - 1)?;
        pos -= 1;
    }
    Ok(())
}

/// Exchanges the adjacent groups at positions `pos` and `pos + 1`.
///
/// Swapping orphans the nodes that got restructured away; sweeping them
/// right here keeps the arena near the live size, which every swap scans.
fn swap_group_pair<V: Value>(
    table: &mut NodeTable<V>,
    layout: &mut [usize],
    widths: &[usize],
    pos: usize,
) -> Result<(), DdError> {
    let upper_width = widths[layout[pos]];
    let lower_width = widths[layout[pos + 1]];
    let start: usize = layout[..pos].iter().map(|&g| widths[g]).sum();
    for k in 0..lower_width {
        let from = start + upper_width + k;
        let to = start + k;
        for level in (to..from).rev() {
            table.swap_adjacent(level)?;
        }
    }
    table.collect_garbage(&[]);
    layout.swap(pos, pos + 1);
    Ok(())
}

/// Moves groups until `layout` equals `target` (selection sort by moves).
fn restore_layout<V: Value>(
    table: &mut NodeTable<V>,
    layout: &mut [usize],
    widths: &[usize],
    target: &[usize],
) -> Result<(), DdError> {
    for want in 0..target.len() {
        let at = layout.iter().position(|&g| g == target[want]).unwrap();
        for pos in (want..at).rev() {
            swap_group_pair(table, layout, widths, pos)?;
        }
    }
    Ok(())
}

/// Rebuilds `roots` in a fresh table whose level order is the bit expansion
/// of `target`. Each returned root denotes the same function as its input.
/// The new table inherits the node limit of the source.
pub fn rebuild_under<V: Value>(
    table: &NodeTable<V>,
    roots: &[NodeRef],
    target: &VarOrder,
    groups: &BitGroups,
) -> Result<(NodeTable<V>, Vec<NodeRef>), DdError> {
    let levels = groups.level_order(target);
    let mut dst = NodeTable::new(&levels);
    dst.set_node_limit(table.node_limit());
    for &bit in &levels {
        dst.set_bit_name(bit, table.bit_name(bit));
    }
    let mut memo: HashMap<NodeRef, NodeRef> = HashMap::new();
    let mut out = Vec::with_capacity(roots.len());
    for &root in roots {
        let copied = transfer(table, &mut dst, root, &mut memo)?;
        out.push(copied);
    }
    for r in memo.values() {
        dst.unregister_root(*r);
    }
    Ok((dst, out))
}

fn transfer<V: Value>(
    src: &NodeTable<V>,
    dst: &mut NodeTable<V>,
    f: NodeRef,
    memo: &mut HashMap<NodeRef, NodeRef>,
) -> Result<NodeRef, DdError> {
    if let Some(t) = src.terminal(f) {
        return dst.mk_const(t);
    }
    if let Some(&r) = memo.get(&f) {
        return Ok(r);
    }
    let (bit, low, high) = src.node(f);
    let l = transfer(src, dst, low, memo)?;
    let h = transfer(src, dst, high, memo)?;
    let guard = dst.var(bit)?;
    let r = dst.ite(guard, h, l)?;
    // Transferred pieces must survive collections triggered by later ite
    // calls on the destination table.
    dst.register_root(r);
    memo.insert(f, r);
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dd::ApplyOp::{And, Or};
    use crate::dd::{Assignment, Terminal, TRUE};

    type Table = NodeTable<f64>;

    fn singleton_groups(n: u32) -> (BitGroups, VarOrder) {
        let mut groups = BitGroups::new();
        let mut names = Vec::new();
        for i in 0..n {
            let name = format!("v{i}");
            groups.insert(&name, vec![BitId(i)]);
            names.push(name);
        }
        (groups, VarOrder(names))
    }

    /// OR of pairwise ANDs with all left bits before all right bits.
    fn pair_function(t: &mut Table, pairs: u32) -> NodeRef {
        let mut f = crate::dd::FALSE;
        for i in 0..pairs {
            let x = t.var(BitId(i)).unwrap();
            let y = t.var(BitId(pairs + i)).unwrap();
            let conj = t.apply(And, x, y).unwrap();
            f = t.apply(Or, f, conj).unwrap();
        }
        f
    }

    /// Builds the same function directly under the interleaved order
    /// x1 y1 x2 y2 ... — the size oracle for the separation tests.
    fn interleaved_pair_size(pairs: u32) -> usize {
        let order: Vec<BitId> = (0..pairs)
            .flat_map(|i| [BitId(i), BitId(pairs + i)])
            .collect();
        let mut t = Table::new(&order);
        let f = pair_function(&mut t, pairs);
        t.size(f)
    }

    #[test]
    fn constant_roots_are_left_alone() {
        let (groups, order) = singleton_groups(3);
        let mut t = Table::with_bits(3);
        t.register_root(TRUE);
        let result = reorder(&mut t, &[TRUE], &order, &groups, &SiftConfig::default()).unwrap();
        assert_eq!(result, order);
        assert_eq!(t.size(TRUE), 1);
    }

    #[test]
    fn sifting_beats_the_separated_pair_order() {
        let (groups, order) = singleton_groups(6);
        let mut t = Table::with_bits(6);
        let f = pair_function(&mut t, 3);
        t.register_root(f);
        let separated = t.size(f);
        let oracle = interleaved_pair_size(3);
        assert!(separated > oracle);
        let after_order =
            reorder(&mut t, &[f], &order, &groups, &SiftConfig::default()).unwrap();
        let after = t.size(f);
        assert!(after <= oracle, "sifted size {after} vs oracle {oracle}");
        assert!((after as f64) <= 1.5 * oracle as f64);
        assert!(after_order.is_permutation_of(order.iter()));
        t.audit().unwrap();

        // The level arrangement equals the bit expansion of the result.
        assert_eq!(groups.level_order(&after_order), t.level_order());
    }

    #[test]
    fn reordering_twice_never_grows() {
        let (groups, order) = singleton_groups(6);
        let mut t = Table::with_bits(6);
        let f = pair_function(&mut t, 3);
        t.register_root(f);
        let first_order = reorder(&mut t, &[f], &order, &groups, &SiftConfig::default()).unwrap();
        let first = t.size(f);
        let _ = reorder(&mut t, &[f], &first_order, &groups, &SiftConfig::default()).unwrap();
        assert!(t.size(f) <= first);
    }

    #[test]
    fn random_grouped_functions_shrink_and_keep_their_semantics() {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(97);
        for round in 0..30 {
            let bits = rng.gen_range(4..=10u32);
            let mut groups = BitGroups::new();
            let mut names = Vec::new();
            // split the bits into at most 4 contiguous blocks
            let mut next = 0u32;
            while next < bits {
                let take = if names.len() == 3 {
                    bits - next
                } else {
                    rng.gen_range(1..=(bits - next).min(4))
                };
                let name = format!("g{}", names.len());
                groups.insert(&name, (next..next + take).map(BitId).collect());
                names.push(name);
                next += take;
            }
            let order = VarOrder(names);
            let mut t = Table::with_bits(bits as usize);
            let rows: Vec<bool> = (0..1usize << bits).map(|_| rng.gen()).collect();
            let f = build_from_rows(&mut t, bits, &rows);
            t.register_root(f);
            let before = t.size(f);
            let result = reorder(&mut t, &[f], &order, &groups, &SiftConfig::default()).unwrap();
            let after = t.size(f);
            assert!(after <= before, "round {round}: {after} > {before}");
            assert_eq!(groups.level_order(&result), t.level_order());
            t.audit().unwrap();
            for mask in 0..1usize << bits {
                let a: Assignment = (0..bits).map(|i| (BitId(i), mask >> i & 1 == 1)).collect();
                assert_eq!(t.eval(f, &a).unwrap(), Terminal::Bool(rows[mask]));
            }
        }
    }

    /// Truth-table build where bit `i` of the row mask is the value of
    /// `BitId(i)`; built with apply so it works under any level order.
    fn build_from_rows(t: &mut Table, bits: u32, rows: &[bool]) -> NodeRef {
        let mut f = crate::dd::FALSE;
        for (mask, _) in rows.iter().enumerate().filter(|(_, r)| **r) {
            let mut cube = TRUE;
            for i in 0..bits {
                let v = t.var(BitId(i)).unwrap();
                let lit = if mask >> i & 1 == 1 { v } else { t.not(v).unwrap() };
                cube = t.apply(And, cube, lit).unwrap();
            }
            f = t.apply(Or, f, cube).unwrap();
        }
        f
    }

    #[test]
    fn grouped_blocks_move_as_units() {
        // Two-bit groups; after reordering, each variable's bits must remain
        // adjacent and in internal sequence.
        let mut groups = BitGroups::new();
        groups.insert("a", vec![BitId(0), BitId(1)]);
        groups.insert("b", vec![BitId(2), BitId(3)]);
        groups.insert("c", vec![BitId(4), BitId(5)]);
        let order = VarOrder::new(["a", "b", "c"]);
        let mut t = Table::with_bits(6);
        let f = pair_function(&mut t, 3);
        t.register_root(f);
        let result = reorder(&mut t, &[f], &order, &groups, &SiftConfig::default()).unwrap();
        assert_eq!(groups.level_order(&result), t.level_order());
        t.audit().unwrap();
    }

    #[test]
    fn rebuild_keeps_functions_and_budget() {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let (groups, order) = singleton_groups(6);
        let mut t = Table::with_bits(6);
        let f = pair_function(&mut t, 3);

        // identical order: same size
        let (t2, roots) = rebuild_under(&t, &[f], &order, &groups).unwrap();
        assert_eq!(t2.size(roots[0]), t.size(f));
        t2.audit().unwrap();

        // interleaved order: function preserved on random assignments
        let target = VarOrder::new(["v0", "v3", "v1", "v4", "v2", "v5"]);
        let (t3, roots3) = rebuild_under(&t, &[f], &target, &groups).unwrap();
        let mut rng = StdRng::seed_from_u64(12);
        for _ in 0..100 {
            let mask: usize = rng.gen_range(0..64);
            let a: Assignment = (0..6).map(|i| (BitId(i), mask >> i & 1 == 1)).collect();
            assert_eq!(t.eval(f, &a).unwrap(), t3.eval(roots3[0], &a).unwrap());
        }
        t3.audit().unwrap();

        // constants rebuild to constants
        let (t4, roots4) = rebuild_under(&t, &[TRUE], &target, &groups).unwrap();
        assert_eq!(t4.size(roots4[0]), 1);
    }
}
