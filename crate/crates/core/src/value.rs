//! Terminal value abstraction for multi-terminal diagrams.

use std::fmt::{Debug, Display};
use std::hash::Hash;
use std::ops::{Add, Mul};

use num_traits::{One, Zero};

/// Scalar type stored in numeric terminal nodes.
///
/// Hash consing needs a hashable identity for every terminal, so the trait
/// asks for a `Key` that is bit-exact: two values map to the same key iff the
/// table must treat them as the same terminal. Floating-point values use
/// their raw bit pattern, which makes terminal equality bit-exact; any
/// tolerance handling belongs to callers.
///
/// `max`/`min` rely on `PartialOrd` being total on the values that actually
/// occur; diagrams holding NaN are not supported.
pub trait Value:
    Copy + Debug + Display + PartialOrd + Zero + One + Add<Output = Self> + Mul<Output = Self>
{
    /// Bit-exact identity used by the unique table.
    type Key: Copy + Eq + Hash + Debug;

    fn key(self) -> Self::Key;
}

impl Value for f64 {
    type Key = u64;

    fn key(self) -> u64 {
        self.to_bits()
    }
}

impl Value for f32 {
    type Key = u32;

    fn key(self) -> u32 {
        self.to_bits()
    }
}
