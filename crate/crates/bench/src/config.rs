use attnscale_core::{ExecutionMode, MechanismConfig, MechanismKind};

use crate::error::{BenchError, Result};

/// One (mechanism, mode) series of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BenchTarget {
    pub kind: MechanismKind,
    pub mode: ExecutionMode,
}

impl BenchTarget {
    pub fn new(kind: MechanismKind, mode: ExecutionMode) -> Self {
        BenchTarget { kind, mode }
    }

    /// Label used for RNG stream derivation and progress output.
    pub fn label(&self) -> String {
        format!("{}/{}", self.kind.id(), self.mode.id())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub mechanisms: Vec<MechanismKind>,
    /// Mode applied to every mechanism; `None` uses each mechanism's
    /// natural mode (recurrent when bounded, parallel otherwise).
    pub mode: Option<ExecutionMode>,
    pub lengths: Vec<usize>,
    pub model_dim: usize,
    pub num_heads: usize,
    pub slots: usize,
    pub gate_rank: Option<usize>,
    pub repeats: usize,
    pub warmup: usize,
    pub seed: u64,
    /// Lengths above the cap are recorded as failures instead of run.
    pub max_length_cap: Option<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        let base = MechanismConfig::default();
        BenchConfig {
            mechanisms: MechanismKind::ALL.to_vec(),
            mode: None,
            lengths: vec![512, 1024, 2048, 4096, 8192, 16384],
            model_dim: base.model_dim,
            num_heads: base.num_heads,
            slots: base.slots,
            gate_rank: base.gate_rank,
            repeats: 5,
            warmup: 2,
            seed: 0,
            max_length_cap: None,
        }
    }
}

impl BenchConfig {
    pub fn targets(&self) -> Vec<BenchTarget> {
        self.mechanisms
            .iter()
            .map(|&kind| BenchTarget::new(kind, self.mode.unwrap_or(kind.default_mode())))
            .collect()
    }

    pub fn mechanism_config(&self) -> MechanismConfig {
        MechanismConfig::new(self.model_dim, self.num_heads)
            .with_slots(self.slots)
            .with_gate_rank(self.gate_rank)
            .with_seed(self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.lengths.contains(&0) {
            return bad("lengths must be >= 1".into());
        }
        if self.lengths.windows(2).any(|w| w[0] >= w[1]) {
            return bad("lengths must be strictly ascending".into());
        }
        if self.repeats < 3 {
            return bad(format!("repeats must be >= 3 (got {})", self.repeats));
        }
        let mut seen = Vec::new();
        for t in self.targets() {
            if seen.contains(&t.kind) {
                return bad(format!("mechanism {} listed twice", t.kind.id()));
            }
            seen.push(t.kind);
            if !t.kind.supports(t.mode) {
                return bad(format!("{} does not support {} mode", t.kind, t.mode));
            }
        }
        if self.max_length_cap == Some(0) {
            return bad("max length cap must be >= 1".into());
        }
        self.mechanism_config().validate()?;
        Ok(())
    }
}
