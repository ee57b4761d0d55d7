//! In-place exchange of two adjacent levels.
//!
//! The unique table is keyed by bit id, not by level, so a swap only has to
//! touch nodes at the upper level that actually depend on the lower level's
//! bit: those are rewritten in place to test the lower bit first. Every other
//! node keeps its key; updating the level maps moves it implicitly. Existing
//! `NodeRef`s keep denoting the same function throughout.

use super::{DdError, NodeRef, NodeTable, Slot};
use crate::value::Value;

impl<V: Value> NodeTable<V> {
    /// Exchanges levels `level` and `level + 1` in the global order.
    pub fn swap_adjacent(&mut self, level: usize) -> Result<(), DdError> {
        assert!(
            level + 1 < self.num_levels(),
            "swap_adjacent: no level below {level}"
        );
        self.check_deadline()?;
        self.maybe_gc(&[]);
        self.clear_caches();
        let upper = self.bit_at_level(level);
        let lower = self.bit_at_level(level + 1);

        // Nodes testing `upper` with at least one child testing `lower` get
        // restructured; everything else is untouched.
        let mut dependent: Vec<NodeRef> = Vec::new();
        for idx in 0..self.slots.len() {
            if let Slot::Node { bit, low, high } = self.slots[idx] {
                if bit == upper && (self.tests_bit(low, lower) || self.tests_bit(high, lower)) {
                    dependent.push(NodeRef(idx as u32));
                }
            }
        }

        // Restructuring allocates at most two fresh nodes per rewritten one;
        // reserving up front keeps a limit breach from leaving the table
        // half-swapped.
        let needed = 2 * dependent.len();
        if self.live_count + needed > self.node_limit {
            self.collect_garbage(&[]);
            dependent.retain(|r| !matches!(self.slots[r.index()], Slot::Free));
            if self.live_count + 2 * dependent.len() > self.node_limit {
                return Err(DdError::NodeLimit {
                    limit: self.node_limit,
                });
            }
        }

        for &f in &dependent {
            let (bit, low, high) = self.node(f);
            self.unique.remove(&(bit, low, high));
        }
        self.order.swap(level, level + 1);
        self.level_of[upper.0 as usize] = (level + 1) as u32;
        self.level_of[lower.0 as usize] = level as u32;

        // The mutation below must run to completion; a time budget firing
        // halfway through would leave the table inconsistent. Capacity was
        // reserved above, so the only abort source left is the deadline tick.
        let saved_deadline = self.deadline.take();

        for &f in &dependent {
            let (_, low, high) = self.node(f);
            let (f00, f01) = if self.tests_bit(low, lower) {
                let (_, l, h) = self.node(low);
                (l, h)
            } else {
                (low, low)
            };
            let (f10, f11) = if self.tests_bit(high, lower) {
                let (_, l, h) = self.node(high);
                (l, h)
            } else {
                (high, high)
            };
            let new_low = self.mk_raw(upper, f00, f10)?;
            let new_high = self.mk_raw(upper, f01, f11)?;
            // A node that depends on both bits cannot lose its dependency on
            // `lower` by the exchange.
            debug_assert_ne!(new_low, new_high);
            self.slots[f.index()] = Slot::Node {
                bit: lower,
                low: new_low,
                high: new_high,
            };
            let previous = self.unique.insert((lower, new_low, new_high), f);
            debug_assert!(previous.is_none(), "swap produced a duplicate triple");
        }
        self.deadline = saved_deadline;
        Ok(())
    }
}
