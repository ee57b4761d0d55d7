//! Brute-force reference semantics for small programs.
//!
//! Enumerates the reachable state graph from every initial evaluation; the
//! symbolic construction is checked against this on small instances.

use std::collections::{BTreeMap, HashMap, VecDeque};

use thiserror::Error;

use super::{eval_bool, eval_expr, EvalError, Evaluation, Program};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExplicitError {
    #[error("explicit state space exceeds the bound of {bound} states")]
    BoundExceeded { bound: usize },
    #[error("line {line}: update drives {var} to {value}, outside its domain (in state {state:?})")]
    OutOfDomainUpdate {
        state: Evaluation,
        line: usize,
        var: String,
        value: i64,
    },
    #[error("lines {first} and {second}: overlapping guards in state {state:?}")]
    OverlappingGuards {
        state: Evaluation,
        first: usize,
        second: usize,
    },
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
}

/// Explicit state graph: states are evaluations, edges carry probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitGraph {
    pub states: Vec<Evaluation>,
    pub initial: Vec<usize>,
    /// Per state, successors sorted by index with probabilities merged.
    pub edges: Vec<Vec<(usize, f64)>>,
}

impl ExplicitGraph {
    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn probability(&self, from: usize, to: usize) -> f64 {
        self.edges[from]
            .iter()
            .find(|(t, _)| *t == to)
            .map(|(_, p)| *p)
            .unwrap_or(0.0)
    }
}

/// Cap on the domain-product scan that enumerates the initial states.
const INIT_SCAN_CAP: u64 = 1 << 22;

/// Explores the reachable graph of `p`, stopping with an error once more
/// than `bound` states are discovered.
pub fn explicit_semantics(p: &Program, bound: usize) -> Result<ExplicitGraph, ExplicitError> {
    let init = p.init_expr();
    let product: u64 = p
        .decls
        .iter()
        .map(|d| d.domain.size())
        .try_fold(1u64, |acc, s| acc.checked_mul(s))
        .unwrap_or(u64::MAX);
    if product > INIT_SCAN_CAP {
        return Err(ExplicitError::BoundExceeded {
            bound: INIT_SCAN_CAP as usize,
        });
    }

    let mut states: Vec<Evaluation> = Vec::new();
    let mut index: HashMap<Evaluation, usize> = HashMap::new();
    let mut initial = Vec::new();
    let mut queue = VecDeque::new();

    let intern = |eta: Evaluation,
                      states: &mut Vec<Evaluation>,
                      index: &mut HashMap<Evaluation, usize>,
                      queue: &mut VecDeque<usize>|
     -> Result<usize, ExplicitError> {
        if let Some(&i) = index.get(&eta) {
            return Ok(i);
        }
        if states.len() >= bound {
            return Err(ExplicitError::BoundExceeded { bound });
        }
        let i = states.len();
        states.push(eta.clone());
        index.insert(eta, i);
        queue.push_back(i);
        Ok(i)
    };

    for eta in enumerate_evaluations(p) {
        if eval_bool(&init, &eta)? {
            let i = intern(eta, &mut states, &mut index, &mut queue)?;
            initial.push(i);
        }
    }

    let mut edges: Vec<Vec<(usize, f64)>> = Vec::new();
    while let Some(i) = queue.pop_front() {
        let eta = states[i].clone();
        let mut enabled: Option<usize> = None;
        for (ci, c) in p.commands.iter().enumerate() {
            if eval_bool(&c.guard, &eta)? {
                if let Some(prev) = enabled {
                    return Err(ExplicitError::OverlappingGuards {
                        state: eta,
                        first: p.commands[prev].line,
                        second: c.line,
                    });
                }
                enabled = Some(ci);
            }
        }
        let mut out: BTreeMap<usize, f64> = BTreeMap::new();
        match enabled {
            None => {
                // deadlock: implicit self-loop keeps the chain stochastic
                out.insert(i, 1.0);
            }
            Some(ci) => {
                let c = &p.commands[ci];
                for b in &c.branches {
                    let mut succ = eta.clone();
                    for (var, rhs) in &b.update.assigns {
                        let v = eval_expr(rhs, &eta)?
                            .as_int()
                            .ok_or(EvalError::Type)?;
                        let domain = p.decl(var).expect("validated").domain;
                        if !domain.contains(v) {
                            return Err(ExplicitError::OutOfDomainUpdate {
                                state: eta,
                                line: c.line,
                                var: var.clone(),
                                value: v,
                            });
                        }
                        succ.insert(var.clone(), v);
                    }
                    let j = intern(succ, &mut states, &mut index, &mut queue)?;
                    *out.entry(j).or_insert(0.0) += b.prob;
                }
            }
        }
        if edges.len() <= i {
            edges.resize(i + 1, Vec::new());
        }
        edges[i] = out.into_iter().collect();
    }
    edges.resize(states.len(), Vec::new());

    Ok(ExplicitGraph {
        states,
        initial,
        edges,
    })
}

/// All total evaluations over the declared domains, in lexicographic order
/// of the declaration sequence.
fn enumerate_evaluations(p: &Program) -> impl Iterator<Item = Evaluation> + '_ {
    let sizes: Vec<u64> = p.decls.iter().map(|d| d.domain.size()).collect();
    let total: u64 = sizes.iter().product();
    (0..total).map(move |mut idx| {
        let mut eta = Evaluation::new();
        for d in p.decls.iter().rev() {
            let s = d.domain.size();
            let offset = (idx % s) as i64;
            idx /= s;
            eta.insert(d.name.clone(), d.domain.lo + offset);
        }
        eta
    })
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;

    #[test]
    fn empty_command_set_yields_one_selfloop() {
        let p = parse("var x : [0..3] init 2;").unwrap();
        let g = explicit_semantics(&p, 100).unwrap();
        assert_eq!(g.state_count(), 1);
        assert_eq!(g.initial, vec![0]);
        assert_eq!(g.edges[0], vec![(0, 1.0)]);
    }

    #[test]
    fn counter_chain_reaches_three_states() {
        let p = parse(
            "var x : [0..2] init 0;\n\
             [] x<2 -> 1:(x'=x+1);",
        )
        .unwrap();
        let g = explicit_semantics(&p, 100).unwrap();
        assert_eq!(g.state_count(), 3);
        // 0 -> 1 -> 2 -> 2
        let idx = |v: i64| {
            g.states
                .iter()
                .position(|s| s["x"] == v)
                .unwrap()
        };
        assert_eq!(g.edges[idx(0)], vec![(idx(1), 1.0)]);
        assert_eq!(g.edges[idx(1)], vec![(idx(2), 1.0)]);
        assert_eq!(g.edges[idx(2)], vec![(idx(2), 1.0)]);
    }

    #[test]
    fn init_block_creates_a_member_union() {
        let p = parse(
            "var x : [0..1];\n\
             var y : [4..6];\n\
             init (x=1) & ((y=4) | (y=5)) endinit",
        )
        .unwrap();
        let g = explicit_semantics(&p, 100).unwrap();
        assert_eq!(g.initial.len(), 2);
        assert_eq!(g.state_count(), 2);
        for &i in &g.initial {
            assert_eq!(g.states[i]["x"], 1);
            assert!(g.states[i]["y"] == 4 || g.states[i]["y"] == 5);
            assert_eq!(g.edges[i], vec![(i, 1.0)]);
        }
    }

    #[test]
    fn out_of_domain_updates_are_flagged() {
        let p = parse(
            "var x : [0..2] init 0;\n\
             [] true -> 1:(x'=x+3);",
        )
        .unwrap();
        match explicit_semantics(&p, 100) {
            Err(ExplicitError::OutOfDomainUpdate { var, value, .. }) => {
                assert_eq!(var, "x");
                assert_eq!(value, 3);
            }
            other => panic!("expected an out-of-domain error, got {other:?}"),
        }
    }

    #[test]
    fn overlapping_guards_are_rejected() {
        let p = parse(
            "var x : [0..2] init 0;\n\
             [] x<2 -> 1:(x'=x+1);\n\
             [] x=1 -> 1:(x'=0);",
        )
        .unwrap();
        match explicit_semantics(&p, 100) {
            Err(ExplicitError::OverlappingGuards { state, .. }) => {
                assert_eq!(state["x"], 1);
            }
            other => panic!("expected overlapping guards, got {other:?}"),
        }
    }

    #[test]
    fn bound_is_enforced() {
        let p = parse(
            "var x : [0..100] init 0;\n\
             [] x<100 -> 1:(x'=x+1);",
        )
        .unwrap();
        assert_eq!(
            explicit_semantics(&p, 5),
            Err(ExplicitError::BoundExceeded { bound: 5 })
        );
    }

    #[test]
    fn rows_are_stochastic() {
        let p = parse(
            "var x : [0..3] init 0;\n\
             [] x<3 -> 0.5:(x'=x+1) + 0.25:(x'=0) + 0.25:true;",
        )
        .unwrap();
        let g = explicit_semantics(&p, 100).unwrap();
        for row in &g.edges {
            let sum: f64 = row.iter().map(|(_, p)| p).sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }
}
