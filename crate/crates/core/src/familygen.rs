//! Generator of synthetic redundancy-family benchmark programs.
//!
//! A generated model pushes a token through a fixed pipeline of `m` blocks,
//! one block per step. Each block is guarded by a frozen switch variable
//! selecting its protection mechanism; the init expression ranges over the
//! admitted mechanism codes, so every switch assignment is one family
//! member. A block either computes correctly, silently corrupts the token,
//! or (under comparison protection) detects a replica mismatch and moves the
//! system into an absorbing fail-stop state. Already-erroneous tokens
//! propagate unchanged.

use num_bigint::BigUint;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Protection mechanism of one block; the value is the switch code.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mechanism {
    None = 0,
    Comparison = 1,
    Voting = 2,
}

pub const ALL_MECHANISMS: [Mechanism; 3] =
    [Mechanism::None, Mechanism::Comparison, Mechanism::Voting];

impl Mechanism {
    pub fn code(self) -> i64 {
        self as i64
    }

    pub fn name(self) -> &'static str {
        match self {
            Mechanism::None => "none",
            Mechanism::Comparison => "comparison",
            Mechanism::Voting => "voting",
        }
    }
}

/// Probability that a block with this mechanism emits a silently erroneous
/// output on an error-free input token, per fault probability `p`.
pub fn silent_error_prob(mech: Mechanism, p: f64) -> f64 {
    match mech {
        Mechanism::None => p,
        // both replicas fail together
        Mechanism::Comparison => p * p,
        // at least two of three replicas fail
        Mechanism::Voting => 3.0 * p * p * (1.0 - p) + p * p * p,
    }
}

/// Probability that the block detects a replica mismatch and fail-stops.
pub fn failstop_prob(mech: Mechanism, p: f64) -> f64 {
    match mech {
        Mechanism::Comparison => 2.0 * p * (1.0 - p),
        _ => 0.0,
    }
}

#[derive(Clone, Debug)]
pub struct GenConfig {
    /// Number of pipeline blocks, m >= 1.
    pub blocks: usize,
    /// Fault probability of one replica execution.
    pub fault_prob: f64,
    /// Mechanisms admitted per block (the init expression ranges over them).
    pub mechanisms: Vec<Mechanism>,
    /// Seeded per-block jitter of the fault probability (up to ±10%).
    pub jitter_seed: Option<u64>,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            blocks: 1,
            fault_prob: 0.1,
            mechanisms: ALL_MECHANISMS.to_vec(),
            jitter_seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenError {
    #[error("block count must be at least 1")]
    NoBlocks,
    #[error("fault probability {0} outside [0,1]")]
    BadProbability(f64),
    #[error("at least one mechanism is required")]
    NoMechanisms,
}

/// Sidecar metadata emitted next to the program source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyMetadata {
    pub m: usize,
    pub p: f64,
    pub mechanisms: Vec<String>,
    /// Exact family size as a decimal string.
    pub family_size: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedFamily {
    pub source: String,
    pub metadata: FamilyMetadata,
    /// Fault probability per block after jitter.
    pub block_probs: Vec<f64>,
}

impl GeneratedFamily {
    pub fn metadata_json(&self) -> String {
        serde_json::to_string_pretty(&self.metadata).expect("metadata serializes")
    }
}

pub fn generate(cfg: &GenConfig) -> Result<GeneratedFamily, GenError> {
    if cfg.blocks == 0 {
        return Err(GenError::NoBlocks);
    }
    if !(0.0..=1.0).contains(&cfg.fault_prob) || cfg.fault_prob.is_nan() {
        return Err(GenError::BadProbability(cfg.fault_prob));
    }
    let mut mechanisms = cfg.mechanisms.clone();
    mechanisms.sort_unstable();
    mechanisms.dedup();
    if mechanisms.is_empty() {
        return Err(GenError::NoMechanisms);
    }

    let m = cfg.blocks;
    let block_probs: Vec<f64> = match cfg.jitter_seed {
        None => vec![cfg.fault_prob; m],
        Some(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..m)
                .map(|_| {
                    let factor = 1.0 + rng.gen_range(-0.1..=0.1);
                    (cfg.fault_prob * factor).clamp(0.0, 1.0)
                })
                .collect()
        }
    };

    let mut src = String::new();
    src.push_str(&format!(
        "// redundancy family: {m} block(s), fault probability {}\n",
        cfg.fault_prob
    ));
    for i in 0..m {
        src.push_str(&format!("var sw{i} : [0..2];\n"));
    }
    src.push_str(&format!("var pc : [0..{m}];\n"));
    src.push_str("var err : [0..1];\n");
    src.push_str("var fail : [0..1];\n\n");

    for (i, &p) in block_probs.iter().enumerate() {
        let step = format!("(pc'={})", i + 1);
        for mech in ALL_MECHANISMS {
            let base = format!("(pc={i}) & (fail=0) & (sw{i}={})", mech.code());
            let silent = silent_error_prob(mech, p);
            let stop = failstop_prob(mech, p);
            let ok = 1.0 - silent - stop;
            let mut branches: Vec<String> = Vec::new();
            if ok > 0.0 {
                branches.push(format!("{ok}:{step}"));
            }
            if silent > 0.0 {
                branches.push(format!("{silent}:{step} & (err'=1)"));
            }
            if stop > 0.0 {
                branches.push(format!("{stop}:(fail'=1)"));
            }
            src.push_str(&format!(
                "[] {base} & (err=0) -> {};\n",
                branches.join(" + ")
            ));
            // erroneous tokens propagate through every mechanism
            src.push_str(&format!("[] {base} & (err=1) -> 1:{step};\n"));
        }
        src.push('\n');
    }

    let mut clauses: Vec<String> = vec!["(pc=0)".into(), "(err=0)".into(), "(fail=0)".into()];
    for i in 0..m {
        let options: Vec<String> = mechanisms
            .iter()
            .map(|mech| format!("(sw{i}={})", mech.code()))
            .collect();
        clauses.push(format!("({})", options.join(" | ")));
    }
    src.push_str(&format!("init {} endinit\n", clauses.join(" & ")));

    let family_size = BigUint::from(mechanisms.len()).pow(m as u32);
    Ok(GeneratedFamily {
        source: src,
        metadata: FamilyMetadata {
            m,
            p: cfg.fault_prob,
            mechanisms: mechanisms.iter().map(|mech| mech.name().into()).collect(),
            family_size: family_size.to_string(),
        },
        block_probs,
    })
}
