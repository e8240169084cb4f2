//! End-to-end forward model: synthetic speech and text features are
//! concatenated along time, contextualized by a mechanism, pooled, and
//! classified.

use crate::config::KvConfig;
use crate::error::{ensure, Error, Result};
use crate::mechanisms::{ExecutionMode, Mechanism, MechanismConfig, MechanismKind};
use crate::pooling::{
    attention_pool, classifier_forward, predict, ClassifierParams, PoolingParams, NUM_CLASSES,
};
use crate::rng::Rng;
use crate::tensor::{Matrix, SequenceTensor};

/// Per-dimension mean and standard deviation of synthetic features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    /// Zero mean, unit standard deviation.
    pub fn standard(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// `len × D` Gaussian features with the given per-dimension statistics.
pub fn synth_features(rng: &mut Rng, len: usize, stats: &FeatureStats) -> Result<SequenceTensor> {
    ensure!(len >= 1, "feature sequence length must be >= 1");
    ensure!(
        stats.mean.len() == stats.std.len(),
        "feature mean/std lengths differ"
    );
    ensure!(
        stats.std.iter().all(|s| *s >= 0.0 && s.is_finite()),
        "feature std must be finite and >= 0"
    );
    let dim = stats.dim();
    let mut data = Vec::with_capacity(len * dim);
    for _ in 0..len {
        for (m, s) in stats.mean.iter().zip(&stats.std) {
            data.push(m + s * rng.standard_normal());
        }
    }
    Matrix::from_vec(len, dim, data)
}

/// Description of a synthetic corpus of (speech, text) feature pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpusSpec {
    pub num_samples: usize,
    pub speech_len: (usize, usize),
    pub text_len: (usize, usize),
    pub stats: FeatureStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub speech: SequenceTensor,
    pub text: SequenceTensor,
}

/// Draws `num_samples` pairs with lengths uniform in the given inclusive ranges.
pub fn synth_corpus(spec: &SyntheticCorpusSpec, rng: &mut Rng) -> Result<Vec<Sample>> {
    let (smin, smax) = spec.speech_len;
    let (tmin, tmax) = spec.text_len;
    ensure!(smin >= 1 && smin <= smax, "speech length range {smin}..={smax} is invalid");
    ensure!(tmin >= 1 && tmin <= tmax, "text length range {tmin}..={tmax} is invalid");
    ensure!(spec.stats.std.iter().all(|s| *s > 0.0), "corpus feature std must be > 0");
    (0..spec.num_samples)
        .map(|_| {
            let m = smin + rng.below(smax - smin + 1);
            let n = tmin + rng.below(tmax - tmin + 1);
            Ok(Sample {
                speech: synth_features(rng, m, &spec.stats)?,
                text: synth_features(rng, n, &spec.stats)?,
            })
        })
        .collect()
}

/// `[S; E]`: rows of `speech` followed by rows of `text`.
pub fn concat_modalities(speech: &SequenceTensor, text: &SequenceTensor) -> Result<SequenceTensor> {
    ensure!(speech.rows() >= 1, "speech sequence is empty");
    ensure!(
        text.rows() == 0 || speech.cols() == text.cols(),
        "speech width {} and text width {} differ",
        speech.cols(),
        text.cols()
    );
    let mut data = Vec::with_capacity((speech.rows() + text.rows()) * speech.cols());
    data.extend_from_slice(speech.as_slice());
    data.extend_from_slice(text.as_slice());
    Matrix::from_vec(speech.rows() + text.rows(), speech.cols(), data)
}

/// Splits a fused sequence back into its first `speech_len` rows and the rest.
pub fn split_modalities(u: &SequenceTensor, speech_len: usize) -> Result<(SequenceTensor, SequenceTensor)> {
    ensure!(speech_len <= u.rows(), "split point {speech_len} past end {}", u.rows());
    Ok((u.slice_rows(0, speech_len), u.slice_rows(speech_len, u.rows())))
}

/// Crops (random contiguous window) or cyclically repeats rows to reach
/// exactly `target_len` rows.
pub fn length_adjust(seq: &SequenceTensor, target_len: usize, rng: &mut Rng) -> Result<SequenceTensor> {
    ensure!(target_len >= 1, "target length must be >= 1");
    ensure!(seq.rows() >= 1, "cannot adjust an empty sequence");
    let rows = seq.rows();
    Ok(if rows > target_len {
        let start = rng.below(rows - target_len + 1);
        seq.slice_rows(start, start + target_len)
    } else if rows < target_len {
        let mut data = Vec::with_capacity(target_len * seq.cols());
        for i in 0..target_len {
            data.extend_from_slice(seq.row(i % rows));
        }
        Matrix::from_vec(target_len, seq.cols(), data)?
    } else {
        seq.clone()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// `M`, rows of speech features.
    pub speech_len: usize,
    /// `N`, rows of text features; zero for speech-only runs.
    pub text_len: usize,
    pub mechanism: MechanismKind,
    pub mode: ExecutionMode,
    pub mechanism_config: MechanismConfig,
    pub seed: u64,
}

impl PipelineConfig {
    pub fn new(mechanism: MechanismKind, model_dim: usize, seed: u64) -> Self {
        Self {
            speech_len: 64,
            text_len: 16,
            mechanism,
            mode: mechanism.default_mode(),
            mechanism_config: MechanismConfig {
                model_dim,
                ..MechanismConfig::default()
            },
            seed,
        }
    }

    pub fn model_dim(&self) -> usize {
        self.mechanism_config.model_dim
    }

    /// `L = M + N`
    pub fn total_len(&self) -> usize {
        self.speech_len + self.text_len
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.speech_len >= 1, "speech_len must be >= 1");
        self.mechanism_config.validate()?;
        if !self.mechanism.supports(self.mode) {
            return Err(Error::UnsupportedMode {
                kind: self.mechanism,
                mode: self.mode,
            });
        }
        Ok(())
    }

    /// Overrides fields present in a key-value config.
    pub fn apply_kv(&mut self, kv: &KvConfig) -> Result<()> {
        if let Some(m) = kv.get::<MechanismKind>("mechanism")? {
            self.mechanism = m;
            self.mode = m.default_mode();
        }
        if let Some(m) = kv.get::<ExecutionMode>("mode")? {
            self.mode = m;
        }
        if let Some(v) = kv.get("dim")? {
            self.mechanism_config.model_dim = v;
        }
        if let Some(v) = kv.get("heads")? {
            self.mechanism_config.num_heads = v;
        }
        if let Some(v) = kv.get("slots")? {
            self.mechanism_config.slots = v;
        }
        if let Some(v) = kv.get("gate_rank")? {
            self.mechanism_config.gate_rank = Some(v);
        }
        if let Some(v) = kv.get("seed")? {
            self.seed = v;
        }
        if let Some(v) = kv.get("speech_len")? {
            self.speech_len = v;
        }
        if let Some(v) = kv.get("text_len")? {
            self.text_len = v;
        }
        Ok(())
    }

    /// Deterministic synthetic (speech, text) inputs for this configuration.
    pub fn synth_inputs(&self) -> Result<(SequenceTensor, SequenceTensor)> {
        let root = Rng::new(self.seed);
        let stats = FeatureStats::standard(self.model_dim());
        let speech = synth_features(&mut root.child("speech"), self.speech_len, &stats)?;
        let text = if self.text_len == 0 {
            Matrix::zeros(0, self.model_dim())
        } else {
            synth_features(&mut root.child("text"), self.text_len, &stats)?
        };
        Ok((speech, text))
    }
}

/// All parameters of the forward model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub mechanism: Mechanism,
    pub pooling: PoolingParams,
    pub classifier: ClassifierParams,
}

impl ModelParams {
    pub fn init(config: &PipelineConfig) -> Result<Self> {
        config.validate()?;
        let root = Rng::new(config.seed);
        let dim = config.model_dim();
        let mech_cfg = MechanismConfig {
            seed: config.seed,
            ..config.mechanism_config
        };
        Ok(Self {
            mechanism: Mechanism::new(config.mechanism, mech_cfg)?,
            pooling: PoolingParams::init(&mut root.child("pooling"), dim)?,
            classifier: ClassifierParams::init(&mut root.child("classifier"), dim)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub logits: [f64; NUM_CLASSES],
    /// 1-based class index.
    pub class: usize,
}

/// `classifier(pool(mechanism([S; E])))`.
pub fn model_forward(
    speech: &SequenceTensor,
    text: &SequenceTensor,
    params: &ModelParams,
    mode: ExecutionMode,
) -> Result<Prediction> {
    let u = concat_modalities(speech, text)?;
    let h = params.mechanism.forward(&u, mode)?;
    head_forward(&h, params)
}

/// Streaming variant for bounded mechanisms: tokens are fed one at a time
/// through [`Mechanism::step`] and the collected outputs are pooled.
pub fn model_forward_streaming(
    speech: &SequenceTensor,
    text: &SequenceTensor,
    params: &ModelParams,
) -> Result<Prediction> {
    let u = concat_modalities(speech, text)?;
    let mech = &params.mechanism;
    let mut state = mech.fresh_state()?;
    let mut h = Matrix::zeros(u.rows(), u.cols());
    for t in 0..u.rows() {
        let o = mech.step(&mut state, u.row(t))?;
        h.row_mut(t).copy_from_slice(&o);
    }
    head_forward(&h, params)
}

fn head_forward(h: &SequenceTensor, params: &ModelParams) -> Result<Prediction> {
    let c = attention_pool(h, &params.pooling)?;
    let logits = classifier_forward(&c, &params.classifier)?;
    Ok(Prediction {
        class: predict(&logits),
        logits,
    })
}
