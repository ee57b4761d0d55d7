//! Symbolic construction of guarded-command family models.
//!
//! The crate bundles everything needed to build discrete-time Markov chain
//! family models symbolically and to search for variable orders under which
//! large families stay constructible:
//!
//! - [`dd`] — reduced ordered decision diagrams (Boolean terminals and
//!   numeric terminals in one table) with hash consing, apply caching and
//!   adjacent-level swapping,
//! - [`reorder`] — group sifting over program-variable bit blocks,
//! - [`program`] — the guarded-command input language: AST, parser,
//!   validator and an explicit-state reference semantics,
//! - [`symbolic`] — bit encoding and construction of init/transition/reachable
//!   diagrams under a variable order and a resource budget,
//! - [`iterate`] — the iterative reordering loop that grows a family from a
//!   single member towards the full init set, reordering after every step,
//! - [`familygen`] — a deterministic generator of redundancy-family benchmark
//!   programs (none/comparison/voting protection per block),
//! - [`compare`] — the heuristic fan-out harness used by the CLI.
//!
//! The decision-diagram core is generic over the terminal value type through
//! [`value::Value`]; the concrete tables used by the model builder are the
//! [`NodeTable64`]/[`NodeTable32`] aliases below.

pub mod compare;
pub mod dd;
pub mod familygen;
pub mod iterate;
pub mod program;
pub mod reorder;
pub mod symbolic;
pub mod value;

/// Node table with `f64` terminals — the type the model builder works on.
pub type NodeTable64 = dd::NodeTable<f64>;

/// Node table with `f32` terminals.
pub type NodeTable32 = dd::NodeTable<f32>;
