use super::params::{accumulate_output, project_qkv, HeadExtra, Mechanism};
use super::{gsa, kda, lightnet, retnet, ExecutionMode, MechanismKind};
use crate::error::{ensure, Error, Result};
use crate::math::{dot, logistic};
use crate::memory::{Diagnostics, MemoryAccountant, Scratch};

/// Fixed-size memory of one head.
#[derive(Debug, Clone, PartialEq)]
pub enum HeadState {
    /// RetNet: `d × d`.
    Retention { s: Vec<f64> },
    /// LightNet: `d × d` numerator, `d` normalizer, running key maximum.
    Normalized { s: Vec<f64>, z: Vec<f64>, max: f64 },
    /// GSA: key and value slot banks, each `m × d`.
    Slots { keys: Vec<f64>, values: Vec<f64> },
    /// KDA: `d × d`.
    Delta { s: Vec<f64> },
}

impl HeadState {
    pub fn scalar_count(&self) -> usize {
        match self {
            HeadState::Retention { s } | HeadState::Delta { s } => s.len(),
            HeadState::Normalized { s, z, .. } => s.len() + z.len() + 1,
            HeadState::Slots { keys, values } => keys.len() + values.len(),
        }
    }
}

/// Streaming state of a bounded-memory mechanism. Its size never depends on
/// how many tokens have been consumed.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentState {
    kind: MechanismKind,
    heads: Vec<HeadState>,
    position: usize,
}

impl RecurrentState {
    pub fn kind(&self) -> MechanismKind {
        self.kind
    }

    pub fn heads(&self) -> &[HeadState] {
        &self.heads
    }

    /// Tokens consumed so far.
    pub fn position(&self) -> usize {
        self.position
    }

    /// Number of `f64` values held.
    pub fn scalar_count(&self) -> usize {
        self.heads.iter().map(HeadState::scalar_count).sum()
    }
}

/// Work buffers for one step, reused across a sequence.
pub(crate) struct StepScratch<'a> {
    q: Scratch<'a>,
    k: Scratch<'a>,
    v: Scratch<'a>,
    o: Scratch<'a>,
    gate: Scratch<'a>,
    low_rank: Scratch<'a>,
    work_a: Scratch<'a>,
    work_b: Scratch<'a>,
}

impl<'a> StepScratch<'a> {
    pub(crate) fn new(mech: &Mechanism, acct: &'a MemoryAccountant) -> Result<Self> {
        let d = mech.heads.iter().map(|h| h.head_dim()).max().unwrap_or(0);
        let (mut gate, mut rank) = (0, 0);
        for head in &mech.heads {
            match &head.extra {
                HeadExtra::Gsa { w_alpha, .. } => {
                    gate = gate.max(w_alpha.out_dim());
                    rank = rank.max(w_alpha.rank());
                }
                HeadExtra::Kda { w_a, .. } => {
                    gate = gate.max(w_a.out_dim());
                    rank = rank.max(w_a.rank());
                }
                _ => {}
            }
        }
        Ok(Self {
            q: acct.buffer(d)?,
            k: acct.buffer(d)?,
            v: acct.buffer(d)?,
            o: acct.buffer(d)?,
            gate: acct.buffer(gate)?,
            low_rank: acct.buffer(rank)?,
            work_a: acct.buffer(d.max(gate))?,
            work_b: acct.buffer(d)?,
        })
    }
}

impl Mechanism {
    /// All-zero state for streaming execution.
    pub fn fresh_state(&self) -> Result<RecurrentState> {
        if !self.kind.is_bounded() {
            return Err(Error::UnsupportedMode {
                kind: self.kind,
                mode: ExecutionMode::Recurrent,
            });
        }
        let heads = self
            .heads
            .iter()
            .map(|head| {
                let d = head.head_dim();
                match (&self.kind, &head.extra) {
                    (MechanismKind::Gsa, HeadExtra::Gsa { w_alpha, .. }) => {
                        let m = w_alpha.out_dim();
                        Ok(HeadState::Slots {
                            keys: vec![0.0; m * d],
                            values: vec![0.0; m * d],
                        })
                    }
                    (MechanismKind::RetNet, _) => Ok(HeadState::Retention { s: vec![0.0; d * d] }),
                    (MechanismKind::LightNet, _) => Ok(HeadState::Normalized {
                        s: vec![0.0; d * d],
                        z: vec![0.0; d],
                        max: 0.0,
                    }),
                    (MechanismKind::Kda, _) => Ok(HeadState::Delta { s: vec![0.0; d * d] }),
                    (kind, _) => Err(Error::contract(format!("{kind} head parameters are malformed"))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RecurrentState {
            kind: self.kind,
            heads,
            position: 0,
        })
    }

    /// Consumes one token `u_t` (length `D`) and returns the output row.
    ///
    /// Folding `step` over a sequence from [`fresh_state`](Self::fresh_state)
    /// reproduces `forward(.., Recurrent)` bit for bit.
    pub fn step(&self, state: &mut RecurrentState, u_t: &[f64]) -> Result<Vec<f64>> {
        if !self.kind.is_bounded() {
            return Err(Error::UnsupportedMode {
                kind: self.kind,
                mode: ExecutionMode::Recurrent,
            });
        }
        self.validate()?;
        ensure!(
            state.kind == self.kind,
            "state belongs to {}, mechanism is {}",
            state.kind,
            self.kind
        );
        let expected = self.fresh_state()?;
        ensure!(
            state.heads.len() == expected.heads.len()
                && state
                    .heads
                    .iter()
                    .zip(&expected.heads)
                    .all(|(a, b)| a.scalar_count() == b.scalar_count()),
            "state shape does not match the mechanism configuration"
        );
        ensure!(
            u_t.len() == self.config.model_dim,
            "token width {} does not match model_dim {}",
            u_t.len(),
            self.config.model_dim
        );
        ensure!(u_t.iter().all(|x| x.is_finite()), "token has non-finite entries");

        let acct = MemoryAccountant::new();
        let mut scratch = StepScratch::new(self, &acct)?;
        let mut out = vec![0.0; self.config.model_dim];
        self.step_into(state, u_t, &mut scratch, &Diagnostics::default(), &mut out);
        ensure!(out.iter().all(|x| x.is_finite()), "step produced non-finite output");
        Ok(out)
    }

    pub(crate) fn step_into(
        &self,
        state: &mut RecurrentState,
        u: &[f64],
        scratch: &mut StepScratch<'_>,
        diag: &Diagnostics,
        out: &mut [f64],
    ) {
        out.fill(0.0);
        let mut offset = 0;
        for (head, hs) in self.heads.iter().zip(state.heads.iter_mut()) {
            let d = head.head_dim();
            let (q, k, v, o) = (
                &mut scratch.q[..d],
                &mut scratch.k[..d],
                &mut scratch.v[..d],
                &mut scratch.o[..d],
            );
            project_qkv(head, u, q, k, v);
            match (&head.extra, hs) {
                (HeadExtra::RetNet { gamma }, HeadState::Retention { s }) => {
                    retnet::step_head(s, *gamma, q, k, v, o)
                }
                (HeadExtra::None, HeadState::Normalized { s, z, max }) => lightnet::step_head(
                    s,
                    z,
                    max,
                    q,
                    k,
                    v,
                    &mut scratch.work_a[..d],
                    diag,
                    o,
                ),
                (HeadExtra::Gsa { w_alpha, b_alpha }, HeadState::Slots { keys, values }) => {
                    let m = b_alpha.len();
                    let alpha = &mut scratch.gate[..m];
                    w_alpha.apply_into(u, &mut scratch.low_rank, alpha);
                    for (x, b) in alpha.iter_mut().zip(b_alpha) {
                        *x = logistic(*x + b);
                    }
                    gsa::step_head(keys, values, alpha, q, k, v, &mut scratch.work_a[..m], o)
                }
                (
                    HeadExtra::Kda {
                        w_a,
                        b_a,
                        w_beta,
                        b_beta,
                    },
                    HeadState::Delta { s },
                ) => {
                    let a = &mut scratch.gate[..d];
                    w_a.apply_into(u, &mut scratch.low_rank, a);
                    for (x, b) in a.iter_mut().zip(b_a) {
                        *x = logistic(*x + b);
                    }
                    let beta = logistic(dot(w_beta, u) + b_beta);
                    kda::step_head(
                        s,
                        a,
                        beta,
                        q,
                        k,
                        v,
                        &mut scratch.work_a[..d],
                        &mut scratch.work_b[..d],
                        o,
                    )
                }
                _ => unreachable!("state variant checked against mechanism kind"),
            }
            accumulate_output(&self.w_o, offset, o, out);
            offset += d;
        }
        state.position += 1;
    }
}
