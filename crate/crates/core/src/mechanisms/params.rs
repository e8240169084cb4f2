use super::{MechanismConfig, MechanismKind};
use crate::error::{ensure, Result};
use crate::math::{dot, gaussian_init, matvec_into};
use crate::rng::Rng;
use crate::tensor::Matrix;

/// Initial forget-gate bias (FoX); `logistic(3) ≈ 0.95`.
const FOX_GATE_BIAS: f64 = 3.0;
/// Initial slot-retention bias (GSA).
const GSA_GATE_BIAS: f64 = 2.0;
/// Initial per-dimension decay bias (KDA).
const KDA_DECAY_BIAS: f64 = 3.0;

/// Affine map `R^D → R^out` used by the GSA and KDA gates.
#[derive(Debug, Clone, PartialEq)]
pub enum GateProjection {
    /// `out × D`
    Full(Matrix),
    /// `up (out × r) · down (r × D)`
    LowRank { down: Matrix, up: Matrix },
}

impl GateProjection {
    fn init(rng: &mut Rng, out: usize, model_dim: usize, rank: Option<usize>) -> Result<Self> {
        let std_in = 1.0 / (model_dim as f64).sqrt();
        Ok(match rank {
            None => GateProjection::Full(gaussian_init(rng, out, model_dim, std_in)?),
            Some(r) => GateProjection::LowRank {
                down: gaussian_init(rng, r, model_dim, std_in)?,
                up: gaussian_init(rng, out, r, 1.0 / (r as f64).sqrt())?,
            },
        })
    }

    pub fn out_dim(&self) -> usize {
        match self {
            GateProjection::Full(w) => w.rows(),
            GateProjection::LowRank { up, .. } => up.rows(),
        }
    }

    pub fn in_dim(&self) -> usize {
        match self {
            GateProjection::Full(w) => w.cols(),
            GateProjection::LowRank { down, .. } => down.cols(),
        }
    }

    /// Width of the intermediate buffer [`apply_into`](Self::apply_into) needs.
    pub fn rank(&self) -> usize {
        match self {
            GateProjection::Full(_) => 0,
            GateProjection::LowRank { down, .. } => down.rows(),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            GateProjection::Full(w) => w.rows() * w.cols(),
            GateProjection::LowRank { down, up } => {
                down.rows() * down.cols() + up.rows() * up.cols()
            }
        }
    }

    /// `out = W u`; `tmp` must hold [`rank`](Self::rank) values.
    #[inline]
    pub fn apply_into(&self, u: &[f64], tmp: &mut [f64], out: &mut [f64]) {
        match self {
            GateProjection::Full(w) => matvec_into(w, u, out),
            GateProjection::LowRank { down, up } => {
                let tmp = &mut tmp[..down.rows()];
                matvec_into(down, u, tmp);
                matvec_into(up, tmp, out);
            }
        }
    }
}

/// Mechanism-specific parameters of one head.
#[derive(Debug, Clone, PartialEq)]
pub enum HeadExtra {
    None,
    /// Fixed per-head retention decay, in `(0, 1)`.
    RetNet { gamma: f64 },
    /// Scalar forget gate `f = logistic(w_f · u + b_f)`.
    Fox { w_f: Vec<f64>, b_f: f64 },
    /// Slot retention `α = logistic(W_α u + b_α) ∈ (0,1)^m`.
    Gsa {
        w_alpha: GateProjection,
        b_alpha: Vec<f64>,
    },
    /// Per-dimension decay `a = logistic(W_a u + b_a)` and write strength
    /// `β = logistic(w_β · u + b_β)`.
    Kda {
        w_a: GateProjection,
        b_a: Vec<f64>,
        w_beta: Vec<f64>,
        b_beta: f64,
    },
}

impl HeadExtra {
    fn param_count(&self) -> usize {
        match self {
            HeadExtra::None => 0,
            HeadExtra::RetNet { .. } => 1,
            HeadExtra::Fox { w_f, .. } => w_f.len() + 1,
            HeadExtra::Gsa { w_alpha, b_alpha } => w_alpha.param_count() + b_alpha.len(),
            HeadExtra::Kda {
                w_a, b_a, w_beta, ..
            } => w_a.param_count() + b_a.len() + w_beta.len() + 1,
        }
    }
}

/// Projections `W_q, W_k, W_v` (each `d × D`) plus mechanism extras.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub extra: HeadExtra,
}

impl HeadParams {
    pub fn head_dim(&self) -> usize {
        self.w_q.rows()
    }

    pub fn param_count(&self) -> usize {
        3 * self.w_q.rows() * self.w_q.cols() + self.extra.param_count()
    }
}

/// A seeded, frozen instance of one mechanism.
#[derive(Debug, Clone, PartialEq)]
pub struct Mechanism {
    pub kind: MechanismKind,
    pub config: MechanismConfig,
    pub heads: Vec<HeadParams>,
    /// `D × (H·d)` output projection shared by all heads.
    pub w_o: Matrix,
}

/// RetNet decay schedule `γ_h = 1 − 2^(−5−h)`.
pub(crate) fn retnet_gamma(head: usize) -> f64 {
    1.0 - 2f64.powi(-5 - head as i32)
}

impl Mechanism {
    /// Draws every parameter from sub-streams of `config.seed`.
    pub fn new(kind: MechanismKind, config: MechanismConfig) -> Result<Self> {
        config.validate()?;
        let dm = config.model_dim;
        let d = config.head_dim();
        let root = Rng::new(config.seed);
        let std_in = 1.0 / (dm as f64).sqrt();
        let mut heads = Vec::with_capacity(config.num_heads);
        for h in 0..config.num_heads {
            let mut rng = root.child(&format!("{}.head{h}", kind.id()));
            let w_q = gaussian_init(&mut rng, d, dm, std_in)?;
            let w_k = gaussian_init(&mut rng, d, dm, std_in)?;
            let w_v = gaussian_init(&mut rng, d, dm, std_in)?;
            let extra = match kind {
                MechanismKind::Sa | MechanismKind::LightNet => HeadExtra::None,
                MechanismKind::RetNet => HeadExtra::RetNet {
                    gamma: retnet_gamma(h),
                },
                MechanismKind::Fox => HeadExtra::Fox {
                    w_f: gaussian_init(&mut rng, 1, dm, std_in)?.into_vec(),
                    b_f: FOX_GATE_BIAS,
                },
                MechanismKind::Gsa => HeadExtra::Gsa {
                    w_alpha: GateProjection::init(&mut rng, config.slots, dm, config.gate_rank)?,
                    b_alpha: vec![GSA_GATE_BIAS; config.slots],
                },
                MechanismKind::Kda => HeadExtra::Kda {
                    w_a: GateProjection::init(&mut rng, d, dm, config.gate_rank)?,
                    b_a: vec![KDA_DECAY_BIAS; d],
                    w_beta: gaussian_init(&mut rng, 1, dm, std_in)?.into_vec(),
                    b_beta: 0.0,
                },
            };
            heads.push(HeadParams {
                w_q,
                w_k,
                w_v,
                extra,
            });
        }
        let hd = config.num_heads * d;
        let w_o = gaussian_init(&mut root.child("w_o"), dm, hd, 1.0 / (hd as f64).sqrt())?;
        Ok(Self {
            kind,
            config,
            heads,
            w_o,
        })
    }

    pub fn kind(&self) -> MechanismKind {
        self.kind
    }

    pub fn config(&self) -> &MechanismConfig {
        &self.config
    }

    /// Scalars actually held by this instance.
    pub fn param_count(&self) -> usize {
        self.heads.iter().map(HeadParams::param_count).sum::<usize>()
            + self.w_o.rows() * self.w_o.cols()
    }

    /// Checks shapes and value ranges of all parameters.
    pub fn validate(&self) -> Result<()> {
        let dm = self.config.model_dim;
        ensure!(!self.heads.is_empty(), "mechanism has no heads");
        let mut total = 0;
        for (h, head) in self.heads.iter().enumerate() {
            let d = head.head_dim();
            ensure!(d >= 1, "head {h} has zero width");
            for (name, w) in [("w_q", &head.w_q), ("w_k", &head.w_k), ("w_v", &head.w_v)] {
                ensure!(
                    w.shape() == (d, dm),
                    "head {h} {name} has shape {:?}, expected ({d}, {dm})",
                    w.shape()
                );
            }
            match &head.extra {
                HeadExtra::RetNet { gamma } => ensure!(
                    *gamma > 0.0 && *gamma < 1.0,
                    "head {h}: RetNet decay {gamma} outside (0, 1)"
                ),
                HeadExtra::Fox { w_f, b_f } => {
                    ensure!(w_f.len() == dm, "head {h}: forget-gate weight length");
                    ensure!(b_f.is_finite(), "head {h}: forget-gate bias not finite");
                }
                HeadExtra::Gsa { w_alpha, b_alpha } => {
                    ensure!(w_alpha.out_dim() >= 1, "head {h}: GSA needs at least one slot");
                    ensure!(
                        w_alpha.in_dim() == dm && b_alpha.len() == w_alpha.out_dim(),
                        "head {h}: GSA gate shape"
                    );
                }
                HeadExtra::Kda {
                    w_a, b_a, w_beta, ..
                } => ensure!(
                    w_a.out_dim() == d && w_a.in_dim() == dm && b_a.len() == d && w_beta.len() == dm,
                    "head {h}: KDA gate shape"
                ),
                HeadExtra::None => {}
            }
            total += d;
        }
        ensure!(
            self.w_o.shape() == (dm, total),
            "w_o has shape {:?}, expected ({dm}, {total})",
            self.w_o.shape()
        );
        Ok(())
    }
}

/// Parameter count of `kind` under `config`, from the declared shapes alone.
///
/// With `with_head`, adds the attention-pooling query and the classifier.
pub fn param_count(kind: MechanismKind, config: &MechanismConfig, with_head: bool) -> usize {
    let dm = config.model_dim;
    let h = config.num_heads;
    let d = config.head_dim();
    let gate = |out: usize| match config.gate_rank {
        None => out * dm,
        Some(r) => r * dm + out * r,
    };
    let per_head = 3 * d * dm
        + match kind {
            MechanismKind::Sa | MechanismKind::LightNet => 0,
            MechanismKind::RetNet => 1,
            MechanismKind::Fox => dm + 1,
            MechanismKind::Gsa => gate(config.slots) + config.slots,
            MechanismKind::Kda => gate(d) + d + dm + 1,
        };
    let head = if with_head {
        crate::pooling::PoolingParams::param_count(dm) + crate::pooling::ClassifierParams::param_count(dm)
    } else {
        0
    };
    h * per_head + dm * h * d + head
}

/// Projects `u` onto a head's query, key and value.
#[inline]
pub(crate) fn project_qkv(head: &HeadParams, u: &[f64], q: &mut [f64], k: &mut [f64], v: &mut [f64]) {
    matvec_into(&head.w_q, u, q);
    matvec_into(&head.w_k, u, k);
    matvec_into(&head.w_v, u, v);
}

/// `out += W_o[:, offset..offset+d] · o_head`
#[inline]
pub(crate) fn accumulate_output(w_o: &Matrix, offset: usize, o_head: &[f64], out: &mut [f64]) {
    let d = o_head.len();
    for (r, y) in out.iter_mut().enumerate() {
        *y += dot(&w_o.row(r)[offset..offset + d], o_head);
    }
}
