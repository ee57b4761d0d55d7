//! Heuristic comparison fan-out.
//!
//! Runs the iterative loop once per (selection, step size) cell, each in its
//! own worker with a private engine instance, against one shared wall-clock
//! snapshot deadline. A failing cell is recorded in its row and never
//! affects the other cells.

use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use num_traits::Zero;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::iterate::{iterate, Heuristic, IterateError, IterateOptions, Selection};
use crate::program::Program;
use crate::reorder::{SiftConfig, VarOrder};
use crate::symbolic::Budget;

#[derive(Clone, Debug)]
pub struct CompareConfig {
    pub selections: Vec<Selection>,
    pub steps: Vec<usize>,
    pub budget: Budget,
    pub sift: SiftConfig,
    /// Wall-clock snapshot measured from the start of the comparison; cells
    /// still running at the snapshot report their last completed iteration.
    pub deadline: Option<Duration>,
    pub workers: usize,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            selections: Selection::ALL.to_vec(),
            steps: vec![1, 2, 3, 4],
            budget: Budget::default(),
            sift: SiftConfig::default(),
            deadline: None,
            workers: 1,
        }
    }
}

/// One cell of the comparison table: the state of a heuristic at the
/// snapshot (or at completion/failure, whichever came first).
#[derive(Clone, Debug, PartialEq)]
pub struct CompareRow {
    pub selection: Selection,
    pub step: usize,
    /// Index of the last completed iteration.
    pub iterations: usize,
    pub combinations: BigUint,
    pub states: BigUint,
    /// Size of the model's roots after the last completed reorder.
    pub nodes: usize,
    /// Whether the full family was constructed before the snapshot.
    pub completed: bool,
    /// Failure of this cell, if any.
    pub error: Option<String>,
}

impl CompareRow {
    pub const CSV_HEADER: &'static str = "selection,step,iterations,combinations,states,nodes";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.selection.name(),
            self.step,
            self.iterations,
            self.combinations,
            self.states,
            self.nodes
        )
    }
}

impl Serialize for CompareRow {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("CompareRow", 8)?;
        s.serialize_field("selection", self.selection.name())?;
        s.serialize_field("step", &self.step)?;
        s.serialize_field("iterations", &self.iterations)?;
        s.serialize_field("combinations", &self.combinations.to_string())?;
        s.serialize_field("states", &self.states.to_string())?;
        s.serialize_field("nodes", &self.nodes)?;
        s.serialize_field("completed", &self.completed)?;
        s.serialize_field("error", &self.error)?;
        s.end()
    }
}

/// Runs every (selection, step) cell and returns the rows in configuration
/// order: selections outermost, step sizes within.
pub fn compare(p: &Program, pi: &VarOrder, cfg: &CompareConfig) -> Vec<CompareRow> {
    let deadline = cfg.deadline.map(|d| Instant::now() + d);
    let cells: Vec<(usize, Selection, usize)> = cfg
        .selections
        .iter()
        .flat_map(|&sel| cfg.steps.iter().map(move |&step| (sel, step)))
        .enumerate()
        .map(|(i, (sel, step))| (i, sel, step))
        .collect();
    let queue: Mutex<VecDeque<(usize, Selection, usize)>> =
        Mutex::new(cells.iter().copied().collect());
    let results: Mutex<Vec<Option<CompareRow>>> = Mutex::new(vec![None; cells.len()]);

    let worker_count = cfg.workers.max(1).min(cells.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..worker_count {
            scope.spawn(|| loop {
                let cell = queue.lock().unwrap().pop_front();
                let Some((index, selection, step)) = cell else {
                    return;
                };
                let row = run_cell(p, pi, cfg, deadline, selection, step);
                results.lock().unwrap()[index] = Some(row);
            });
        }
    });

    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every cell ran"))
        .collect()
}

fn run_cell(
    p: &Program,
    pi: &VarOrder,
    cfg: &CompareConfig,
    deadline: Option<Instant>,
    selection: Selection,
    step: usize,
) -> CompareRow {
    let opts = IterateOptions {
        heuristic: Heuristic { selection, step },
        budget: cfg.budget,
        sift: cfg.sift.clone(),
        eta: None,
        deadline,
    };
    let mut row = CompareRow {
        selection,
        step,
        iterations: 0,
        combinations: BigUint::zero(),
        states: BigUint::zero(),
        nodes: 0,
        completed: false,
        error: None,
    };
    let rows = match iterate(p, pi, &opts) {
        Ok(report) => {
            row.completed = report.completed;
            report.rows
        }
        Err(IterateError::ConstructionFailed { cause, rows, .. }) => {
            row.error = Some(cause.to_string());
            rows
        }
        Err(other) => {
            row.error = Some(other.to_string());
            Vec::new()
        }
    };
    if let Some(last) = rows.last() {
        row.iterations = last.iteration;
        row.combinations = last.combinations.clone();
        row.states = last.states.clone();
        row.nodes = last.nodes_after;
    }
    row
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::familygen::{generate, GenConfig, ALL_MECHANISMS};
    use crate::program::parse;

    fn family(m: usize) -> Program {
        let fam = generate(&GenConfig {
            blocks: m,
            fault_prob: 0.1,
            mechanisms: ALL_MECHANISMS.to_vec(),
            jitter_seed: None,
        })
        .unwrap();
        parse(&fam.source).unwrap()
    }

    #[test]
    fn full_grid_completes_on_a_small_family() {
        let p = family(2);
        let cfg = CompareConfig {
            workers: 3,
            ..CompareConfig::default()
        };
        let rows = compare(&p, &p.declaration_order(), &cfg);
        assert_eq!(rows.len(), 12);
        for row in &rows {
            assert!(row.completed, "{row:?}");
            assert_eq!(row.combinations, 9u32.into());
            assert!(row.error.is_none());
        }
        // step-major order within each selection; higher steps take fewer
        // iterations than step 1
        for chunk in rows.chunks(4) {
            let step1 = chunk[0].iterations;
            for row in chunk {
                assert!(row.iterations <= step1);
            }
        }
    }

    #[test]
    fn zero_deadline_truncates_to_row_zero() {
        let p = family(2);
        let cfg = CompareConfig {
            deadline: Some(Duration::ZERO),
            ..CompareConfig::default()
        };
        let rows = compare(&p, &p.declaration_order(), &cfg);
        for row in &rows {
            assert_eq!(row.iterations, 0);
            assert_eq!(row.combinations, 1u32.into());
            assert!(!row.completed);
            assert!(row.error.is_none());
        }
    }

    #[test]
    fn failing_cells_stay_isolated() {
        let p = family(2);
        let cfg = CompareConfig {
            budget: Budget::with_node_limit(8),
            workers: 4,
            ..CompareConfig::default()
        };
        let rows = compare(&p, &p.declaration_order(), &cfg);
        assert_eq!(rows.len(), 12);
        for row in &rows {
            assert!(row.error.is_some());
            assert!(!row.completed);
        }
    }

    #[test]
    fn csv_rows_have_the_stable_header_shape() {
        assert_eq!(
            CompareRow::CSV_HEADER,
            "selection,step,iterations,combinations,states,nodes"
        );
        let row = CompareRow {
            selection: Selection::RhoMaximal,
            step: 2,
            iterations: 3,
            combinations: 27u32.into(),
            states: 100u32.into(),
            nodes: 42,
            completed: true,
            error: None,
        };
        assert_eq!(row.csv_row(), "rho-max,2,3,27,100,42");
    }
}
