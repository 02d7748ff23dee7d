//! One-hidden-layer success classifier trained on summed negative
//! log-likelihood with Adam.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario_features::{feature_map, FeatureVector, Scenario};

const P_MIN: f64 = 1e-7;
const P_MAX: f64 = 1.0 - 1e-7;

/// Hidden width used for `n` vehicles: 10, 15, 20 for 4, 5, 6 vehicles.
pub fn default_hidden_width(n_vehicles: usize) -> usize {
    5 * n_vehicles.saturating_sub(2).max(1)
}

/// Per-feature affine map `(h - offset) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub scales: Vec<f64>,
    pub offsets: Vec<f64>,
}

impl Normalization {
    pub fn identity(n: usize) -> Self {
        Self {
            scales: vec![1.0; n],
            offsets: vec![0.0; n],
        }
    }

    /// Max-abs scaling for linear features, division by π for angles.
    pub fn fit(rows: &[&[f64]], angular: &[bool]) -> Self {
        let n = angular.len();
        let mut scales = vec![0.0f64; n];
        for row in rows {
            for (s, x) in scales.iter_mut().zip(row.iter()) {
                *s = s.max(x.abs());
            }
        }
        for (s, &ang) in scales.iter_mut().zip(angular) {
            if ang {
                *s = PI;
            } else if !(*s > 0.0) {
                *s = 1.0;
            }
        }
        Self {
            scales,
            offsets: vec![0.0; n],
        }
    }

    pub fn apply(&self, h: &[f64]) -> Vec<f64> {
        h.iter()
            .zip(self.scales.iter().zip(&self.offsets))
            .map(|(x, (s, o))| (x - o) / s)
            .collect()
    }
}

/// Which entries of a scenario feature vector are headings.
pub fn scenario_angular_mask(n_vehicles: usize) -> Vec<bool> {
    let mut mask = vec![false; 5 * n_vehicles];
    for k in 0..n_vehicles {
        mask[3 * k + 2] = true;
    }
    mask
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub n_in: usize,
    pub n_hidden: usize,
    /// Row-major `n_hidden × n_in`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    pub norm: Normalization,
}

/// Gradient of the loss, laid out like [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl Gradients {
    pub fn zeros(n_in: usize, n_hidden: usize) -> Self {
        Self {
            w1: vec![0.0; n_in * n_hidden],
            b1: vec![0.0; n_hidden],
            w2: vec![0.0; n_hidden],
            b2: 0.0,
        }
    }

    fn slices(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.w2, std::slice::from_ref(&self.b2)]
    }
}

impl MlpParams {
    pub fn zeros(n_in: usize, n_hidden: usize) -> Self {
        Self {
            n_in,
            n_hidden,
            w1: vec![0.0; n_in * n_hidden],
            b1: vec![0.0; n_hidden],
            w2: vec![0.0; n_hidden],
            b2: 0.0,
            norm: Normalization::identity(n_in),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (i, h) = (self.n_in, self.n_hidden);
        let sizes = [
            (self.w1.len(), i * h),
            (self.b1.len(), h),
            (self.w2.len(), h),
            (self.norm.scales.len(), i),
            (self.norm.offsets.len(), i),
        ];
        for (got, expected) in sizes {
            if got != expected {
                return Err(Error::DimensionMismatch { expected, got });
            }
        }
        let finite = self
            .w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(std::iter::once(&self.b2))
            .chain(&self.norm.offsets)
            .all(|x| x.is_finite());
        if !finite || self.norm.scales.iter().any(|s| !(s.is_finite() && *s != 0.0)) {
            return Err(Error::NonFinite("network parameters".into()));
        }
        Ok(())
    }

    fn slices_mut(&mut self) -> [&mut [f64]; 4] {
        [
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            std::slice::from_mut(&mut self.b2),
        ]
    }
}

/// Glorot-uniform weights, zero biases, identity normalization.
pub fn init_params<R: Rng + ?Sized>(n_in: usize, n_hidden: usize, rng: &mut R) -> Result<MlpParams> {
    if n_in == 0 || n_hidden == 0 {
        return Err(Error::Config(format!("layer widths must be positive, got {n_in}, {n_hidden}")));
    }
    let mut p = MlpParams::zeros(n_in, n_hidden);
    let a1 = (6.0 / (n_in + n_hidden) as f64).sqrt();
    let a2 = (6.0 / (n_hidden + 1) as f64).sqrt();
    p.w1.iter_mut().for_each(|w| *w = rng.gen_range(-a1..=a1));
    p.w2.iter_mut().for_each(|w| *w = rng.gen_range(-a2..=a2));
    Ok(p)
}

/// Intermediate values of one forward pass.
struct Pass {
    x: Vec<f64>,
    pre: Vec<f64>,
    hidden: Vec<f64>,
    raw: f64,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn run(p: &MlpParams, h: &[f64]) -> Result<Pass> {
    if h.len() != p.n_in {
        return Err(Error::DimensionMismatch {
            expected: p.n_in,
            got: h.len(),
        });
    }
    let x = p.norm.apply(h);
    let pre: Vec<f64> = p
        .w1
        .chunks_exact(p.n_in)
        .zip(&p.b1)
        .map(|(row, b)| row.iter().zip(&x).map(|(w, xi)| w * xi).sum::<f64>() + b)
        .collect();
    let hidden: Vec<f64> = pre.iter().map(|a| a.max(0.0)).collect();
    let z = p.w2.iter().zip(&hidden).map(|(w, a)| w * a).sum::<f64>() + p.b2;
    Ok(Pass {
        x,
        pre,
        hidden,
        raw: sigmoid(z),
    })
}

/// Success probability, clamped to `[1e-7, 1 - 1e-7]`.
pub fn forward(p: &MlpParams, h: &FeatureVector) -> Result<f64> {
    forward_slice(p, h.as_slice())
}

pub fn forward_slice(p: &MlpParams, h: &[f64]) -> Result<f64> {
    Ok(run(p, h)?.raw.clamp(P_MIN, P_MAX))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub h: FeatureVector,
    pub y: u8,
}

fn sample_loss(prob: f64, y: u8) -> f64 {
    if y == 1 {
        -prob.ln()
    } else {
        -(1.0 - prob).ln()
    }
}

/// Summed cross-entropy over the batch.
pub fn nll_loss(p: &MlpParams, batch: &[LabeledSample]) -> Result<f64> {
    batch.iter().map(|s| Ok(sample_loss(forward(p, &s.h)?, s.y))).sum()
}

fn accumulate(p: &MlpParams, h: &[f64], y: u8, g: &mut Gradients) -> Result<f64> {
    let pass = run(p, h)?;
    let prob = pass.raw.clamp(P_MIN, P_MAX);
    // the clamp passes no gradient at the rails
    let dz = if pass.raw > P_MIN && pass.raw < P_MAX {
        pass.raw - y as f64
    } else {
        0.0
    };
    g.b2 += dz;
    for k in 0..p.n_hidden {
        g.w2[k] += dz * pass.hidden[k];
        if pass.pre[k] > 0.0 {
            let da = dz * p.w2[k];
            g.b1[k] += da;
            let row = &mut g.w1[k * p.n_in..(k + 1) * p.n_in];
            for (gw, xi) in row.iter_mut().zip(&pass.x) {
                *gw += da * xi;
            }
        }
    }
    Ok(sample_loss(prob, y))
}

/// Analytic gradient of [`nll_loss`] (with `relu'(0) = 0`).
pub fn backward(p: &MlpParams, batch: &[LabeledSample]) -> Result<Gradients> {
    let mut g = Gradients::zeros(p.n_in, p.n_hidden);
    for s in batch {
        accumulate(p, s.h.as_slice(), s.y, &mut g)?;
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Share of the data held out to report validation accuracy.
    pub holdout_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            batch_size: 64,
            epochs: 200,
            seed: 0,
            holdout_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps_adam > 0.0
            && self.batch_size >= 1
            && (0.0..1.0).contains(&self.holdout_fraction);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid training configuration {self:?}")))
        }
    }
}

/// Adam first and second moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Gradients,
    pub v: Gradients,
}

impl AdamState {
    pub fn new(p: &MlpParams) -> Self {
        Self {
            m: Gradients::zeros(p.n_in, p.n_hidden),
            v: Gradients::zeros(p.n_in, p.n_hidden),
        }
    }
}

/// One bias-corrected Adam update; `t` counts from 1.
pub fn adam_step(p: &mut MlpParams, grads: &Gradients, state: &mut AdamState, t: u64, cfg: &TrainConfig) {
    assert!(t >= 1, "Adam steps count from 1");
    let c1 = 1.0 - cfg.beta1.powf(t as f64);
    let c2 = 1.0 - cfg.beta2.powf(t as f64);
    let AdamState { m, v } = state;
    let ms = [&mut m.w1[..], &mut m.b1[..], &mut m.w2[..], std::slice::from_mut(&mut m.b2)];
    let vs = [&mut v.w1[..], &mut v.b1[..], &mut v.w2[..], std::slice::from_mut(&mut v.b2)];
    for (((theta, g), m), v) in p.slices_mut().into_iter().zip(grads.slices()).zip(ms).zip(vs) {
        for k in 0..theta.len() {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            theta[k] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps_adam);
        }
    }
}

/// Samples plus the heading mask used to fit the input normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<LabeledSample>,
    pub angular: Vec<bool>,
}

impl Dataset {
    pub fn scenarios(samples: Vec<LabeledSample>, n_vehicles: usize) -> Self {
        Self {
            samples,
            angular: scenario_angular_mask(n_vehicles),
        }
    }

    /// Samples whose features are all linear.
    pub fn plain(samples: Vec<LabeledSample>) -> Self {
        let n = samples.first().map_or(0, |s| s.h.len());
        Self {
            samples,
            angular: vec![false; n],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub params: MlpParams,
    /// Mean per-sample training loss of every epoch.
    pub loss_history: Vec<f64>,
    pub train_accuracy: f64,
    pub validation_accuracy: Option<f64>,
    pub n_train: usize,
    pub n_validation: usize,
}

pub fn accuracy(p: &MlpParams, samples: &[LabeledSample]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(f64::NAN);
    }
    let mut hits = 0usize;
    for s in samples {
        if (forward(p, &s.h)? >= 0.5) == (s.y == 1) {
            hits += 1;
        }
    }
    Ok(hits as f64 / samples.len() as f64)
}

/// Seeded minibatch Adam on the summed loss.
///
/// A holdout split is drawn first, then the network is initialized and the
/// training split reshuffled every epoch, all from one stream seeded by
/// `cfg.seed`.
pub fn train(data: &Dataset, n_hidden: usize, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let n_in = data.angular.len();
    if data.samples.is_empty() {
        return Err(Error::Config("empty dataset".into()));
    }
    for s in &data.samples {
        if s.h.len() != n_in {
            return Err(Error::DimensionMismatch {
                expected: n_in,
                got: s.h.len(),
            });
        }
        if s.y > 1 {
            return Err(Error::Format(format!("label {} is not binary", s.y)));
        }
        if s.h.0.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("feature vector".into()));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.samples.len()).collect();
    order.shuffle(&mut rng);
    let n_val = (cfg.holdout_fraction * data.samples.len() as f64).floor() as usize;
    let (val_idx, train_idx) = order.split_at(n_val);
    let train_set: Vec<&LabeledSample> = train_idx.iter().map(|&k| &data.samples[k]).collect();
    let val_set: Vec<LabeledSample> = val_idx.iter().map(|&k| data.samples[k].clone()).collect();

    let positives = train_set.iter().filter(|s| s.y == 1).count();
    if positives == 0 || positives == train_set.len() {
        return Err(Error::SingleClass(train_set[0].y));
    }

    let mut params = init_params(n_in, n_hidden, &mut rng)?;
    let rows: Vec<&[f64]> = train_set.iter().map(|s| s.h.as_slice()).collect();
    params.norm = Normalization::fit(&rows, &data.angular);

    let mut adam = AdamState::new(&params);
    let mut t = 0u64;
    let mut loss_history = Vec::with_capacity(cfg.epochs);
    let mut epoch_order: Vec<usize> = (0..train_set.len()).collect();
    for _ in 0..cfg.epochs {
        epoch_order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in epoch_order.chunks(cfg.batch_size) {
            let mut g = Gradients::zeros(n_in, n_hidden);
            for &k in batch {
                let s = train_set[k];
                total += accumulate(&params, s.h.as_slice(), s.y, &mut g)?;
            }
            t += 1;
            adam_step(&mut params, &g, &mut adam, t, cfg);
        }
        let mean = total / train_set.len() as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite(format!("training loss at step {t}")));
        }
        loss_history.push(mean);
    }
    params.validate()?;

    let owned: Vec<LabeledSample> = train_set.iter().map(|s| (*s).clone()).collect();
    Ok(TrainReport {
        train_accuracy: accuracy(&params, &owned)?,
        validation_accuracy: if val_set.is_empty() {
            None
        } else {
            Some(accuracy(&params, &val_set)?)
        },
        n_train: owned.len(),
        n_validation: val_set.len(),
        params,
        loss_history,
    })
}

pub fn predict_success(p: &MlpParams, sc: &Scenario) -> Result<f64> {
    if p.n_in != 5 * sc.n() {
        return Err(Error::DimensionMismatch {
            expected: p.n_in / 5,
            got: sc.n(),
        });
    }
    forward(p, &feature_map(sc))
}

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    pub n_vehicles: usize,
    pub n_in: usize,
    pub n_hidden: usize,
    #[serde(rename = "W1")]
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    #[serde(rename = "W2")]
    pub w2: Vec<Vec<f64>>,
    pub b2: f64,
    pub norm: Normalization,
    pub train_config: TrainConfig,
    pub final_loss: f64,
}

impl ModelFile {
    pub fn new(p: &MlpParams, n_vehicles: usize, train_config: TrainConfig, final_loss: f64) -> Self {
        Self {
            version: MODEL_VERSION,
            n_vehicles,
            n_in: p.n_in,
            n_hidden: p.n_hidden,
            w1: p.w1.chunks_exact(p.n_in).map(<[f64]>::to_vec).collect(),
            b1: p.b1.clone(),
            w2: vec![p.w2.clone()],
            b2: p.b2,
            norm: p.norm.clone(),
            train_config,
            final_loss,
        }
    }

    pub fn params(&self) -> Result<MlpParams> {
        if self.version != MODEL_VERSION {
            return Err(Error::Format(format!("unsupported model version {}", self.version)));
        }
        if self.w1.len() != self.n_hidden || self.w1.iter().any(|r| r.len() != self.n_in) {
            return Err(Error::Format("W1 shape does not match n_hidden × n_in".into()));
        }
        if self.w2.len() != 1 {
            return Err(Error::Format("W2 must have exactly one row".into()));
        }
        let p = MlpParams {
            n_in: self.n_in,
            n_hidden: self.n_hidden,
            w1: self.w1.concat(),
            b1: self.b1.clone(),
            w2: self.w2[0].clone(),
            b2: self.b2,
            norm: self.norm.clone(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
