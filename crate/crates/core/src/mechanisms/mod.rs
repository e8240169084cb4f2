//! Causal sequence-to-sequence operators `R^{L×D} → R^{L×D}`.
//!
//! Six mechanisms share one interface: [`Mechanism::forward`] over a whole
//! sequence in a chosen [`ExecutionMode`], and, for the bounded-memory ones,
//! [`Mechanism::step`] over a single token with an explicit
//! [`RecurrentState`].
//!
//! | kind     | parallel | recurrent | state per head         |
//! |----------|----------|-----------|------------------------|
//! | SA       | yes      | no        | unbounded              |
//! | RetNet   | yes      | yes       | `d×d`                  |
//! | LightNet | yes      | yes       | `d×d` + `d` + 1        |
//! | GSA      | no       | yes       | two `m×d` slot banks   |
//! | FoX      | yes      | no        | unbounded              |
//! | KDA      | no       | yes       | `d×d`                  |

use std::fmt;
use std::str::FromStr;

use crate::error::{ensure, Error, Result};
use crate::memory::Workspace;
use crate::tensor::{Matrix, SequenceTensor};

pub mod attention;
pub mod gsa;
pub mod kda;
pub mod lightnet;
mod multihead;
mod params;
pub mod retnet;
mod state;

pub use multihead::{multihead_apply, HeadInputs};
pub use params::{param_count, GateProjection, HeadExtra, HeadParams, Mechanism};
pub use state::{HeadState, RecurrentState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MechanismKind {
    Sa,
    RetNet,
    LightNet,
    Gsa,
    Fox,
    Kda,
}

impl MechanismKind {
    pub const ALL: [MechanismKind; 6] = [
        MechanismKind::Sa,
        MechanismKind::RetNet,
        MechanismKind::LightNet,
        MechanismKind::Gsa,
        MechanismKind::Fox,
        MechanismKind::Kda,
    ];

    /// Mechanisms with a fixed-size recurrent state.
    pub const BOUNDED: [MechanismKind; 4] = [
        MechanismKind::RetNet,
        MechanismKind::LightNet,
        MechanismKind::Gsa,
        MechanismKind::Kda,
    ];

    /// Lower-case identifier used on the command line and in CSV files.
    pub fn id(self) -> &'static str {
        match self {
            MechanismKind::Sa => "sa",
            MechanismKind::RetNet => "retnet",
            MechanismKind::LightNet => "lightnet",
            MechanismKind::Gsa => "gsa",
            MechanismKind::Fox => "fox",
            MechanismKind::Kda => "kda",
        }
    }

    pub fn supports(self, mode: ExecutionMode) -> bool {
        use MechanismKind::*;
        match mode {
            ExecutionMode::Parallel => matches!(self, Sa | Fox | RetNet | LightNet),
            ExecutionMode::Recurrent => matches!(self, Gsa | Kda | RetNet | LightNet),
        }
    }

    pub fn is_bounded(self) -> bool {
        self.supports(ExecutionMode::Recurrent)
    }

    /// Recurrent when available, parallel otherwise.
    pub fn default_mode(self) -> ExecutionMode {
        if self.is_bounded() {
            ExecutionMode::Recurrent
        } else {
            ExecutionMode::Parallel
        }
    }

    pub fn modes(self) -> impl Iterator<Item = ExecutionMode> {
        [ExecutionMode::Parallel, ExecutionMode::Recurrent]
            .into_iter()
            .filter(move |m| self.supports(*m))
    }
}

impl fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MechanismKind::Sa => "SA",
            MechanismKind::RetNet => "RetNet",
            MechanismKind::LightNet => "LightNet",
            MechanismKind::Gsa => "GSA",
            MechanismKind::Fox => "FoX",
            MechanismKind::Kda => "KDA",
        })
    }
}

impl FromStr for MechanismKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        MechanismKind::ALL
            .into_iter()
            .find(|k| k.id() == lower)
            .ok_or_else(|| {
                Error::contract(format!(
                    "unknown mechanism '{s}' (expected one of sa, retnet, lightnet, gsa, fox, kda)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExecutionMode {
    Parallel,
    Recurrent,
}

impl ExecutionMode {
    pub fn id(self) -> &'static str {
        match self {
            ExecutionMode::Parallel => "parallel",
            ExecutionMode::Recurrent => "recurrent",
        }
    }
}

impl fmt::Display for ExecutionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ExecutionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "parallel" => Ok(ExecutionMode::Parallel),
            "recurrent" => Ok(ExecutionMode::Recurrent),
            other => Err(Error::contract(format!(
                "unknown mode '{other}' (expected parallel or recurrent)"
            ))),
        }
    }
}

/// Shape and seed of a mechanism instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MechanismConfig {
    /// Model dimension `D`.
    pub model_dim: usize,
    /// Number of heads `H`; must divide `model_dim`.
    pub num_heads: usize,
    /// Latent slots per head (GSA only).
    pub slots: usize,
    /// Rank of the GSA/KDA gate projections; `None` means full rank.
    pub gate_rank: Option<usize>,
    pub seed: u64,
}

impl Default for MechanismConfig {
    fn default() -> Self {
        Self {
            model_dim: 256,
            num_heads: 4,
            slots: 64,
            gate_rank: Some(16),
            seed: 0,
        }
    }
}

impl MechanismConfig {
    pub fn new(model_dim: usize, num_heads: usize) -> Self {
        Self {
            model_dim,
            num_heads,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_slots(mut self, slots: usize) -> Self {
        self.slots = slots;
        self
    }

    pub fn with_gate_rank(mut self, rank: Option<usize>) -> Self {
        self.gate_rank = rank;
        self
    }

    /// Per-head width `d = D / H`.
    pub fn head_dim(&self) -> usize {
        self.model_dim / self.num_heads.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.num_heads >= 1, "num_heads must be >= 1");
        ensure!(
            self.model_dim >= self.num_heads && self.model_dim.is_multiple_of(self.num_heads),
            "model_dim {} is not divisible by num_heads {}",
            self.model_dim,
            self.num_heads
        );
        ensure!(self.slots >= 1, "slot count must be >= 1");
        ensure!(self.gate_rank != Some(0), "gate rank must be >= 1");
        Ok(())
    }
}

impl Mechanism {
    /// Runs the operator over a whole sequence.
    pub fn forward(&self, u: &SequenceTensor, mode: ExecutionMode) -> Result<SequenceTensor> {
        self.forward_with(u, mode, &Workspace::new())
    }

    /// As [`forward`](Self::forward), charging scratch buffers to `ws`.
    pub fn forward_with(
        &self,
        u: &SequenceTensor,
        mode: ExecutionMode,
        ws: &Workspace,
    ) -> Result<SequenceTensor> {
        if !self.kind.supports(mode) {
            return Err(Error::UnsupportedMode {
                kind: self.kind,
                mode,
            });
        }
        self.validate()?;
        ensure!(u.rows() >= 1, "input sequence is empty");
        ensure!(
            u.cols() == self.config.model_dim,
            "input width {} does not match model_dim {}",
            u.cols(),
            self.config.model_dim
        );
        u.ensure_finite("input")?;
        let out = match mode {
            ExecutionMode::Parallel => self.forward_parallel(u, ws)?,
            ExecutionMode::Recurrent => self.forward_recurrent(u, ws)?,
        };
        out.ensure_finite("mechanism output")?;
        Ok(out)
    }

    fn forward_parallel(&self, u: &Matrix, ws: &Workspace) -> Result<Matrix> {
        let acct = &ws.memory;
        multihead_apply(u, &self.heads, &self.w_o, acct, |_, head, x, out| {
            match (&self.kind, &head.extra) {
                (MechanismKind::Sa, _) => {
                    attention::causal_softmax_head(x.q, x.k, x.v, x.len, x.d, None, acct, out)
                }
                (MechanismKind::Fox, HeadExtra::Fox { w_f, b_f }) => {
                    let mut log_f = acct.buffer(x.len)?;
                    for (t, lf) in log_f.iter_mut().enumerate() {
                        *lf = crate::math::log_logistic(crate::math::dot(w_f, u.row(t)) + b_f);
                    }
                    let bias = attention::ForgetBias::from_log_gates(&log_f);
                    attention::causal_softmax_head(x.q, x.k, x.v, x.len, x.d, Some(&bias), acct, out)
                }
                (MechanismKind::RetNet, HeadExtra::RetNet { gamma }) => {
                    retnet::parallel_head(x.q, x.k, x.v, x.len, x.d, *gamma, acct, out)
                }
                (MechanismKind::LightNet, _) => lightnet::parallel_head(
                    x.q,
                    x.k,
                    x.v,
                    x.len,
                    x.d,
                    acct,
                    &ws.diagnostics,
                    out,
                ),
                (kind, _) => Err(Error::contract(format!(
                    "{kind} head parameters are inconsistent with parallel execution"
                ))),
            }
        })
    }

    fn forward_recurrent(&self, u: &Matrix, ws: &Workspace) -> Result<Matrix> {
        let mut state = self.fresh_state()?;
        let _state_charge = ws.memory.charge(state.scalar_count() * std::mem::size_of::<f64>());
        let mut scratch = state::StepScratch::new(self, &ws.memory)?;
        let mut out = Matrix::zeros(u.rows(), self.config.model_dim);
        for t in 0..u.rows() {
            self.step_into(&mut state, u.row(t), &mut scratch, &ws.diagnostics, out.row_mut(t));
        }
        Ok(out)
    }
}
