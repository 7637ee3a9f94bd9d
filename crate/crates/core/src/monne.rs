//! Monotonic neural network ensemble utility surrogate.
//!
//! Each member is a small feedforward network whose effective weights are
//! `exp(raw)`, so with a non-decreasing activation the score is non-decreasing
//! in every output coordinate. Members are trained on pairwise comparisons
//! with a hinge loss whose scale `alpha = softplus(raw)` is learned jointly,
//! then rescaled so their scores are comparable before aggregation.

use crate::gp::GaussianBelief;
use crate::problems::{Bounds, OutputVector};
use crate::{seed, Error, Result};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Pairwise comparisons: `label` is +1 if the first output is preferred,
/// -1 if the second is, 0 for a tie.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSet {
    pairs: Vec<(OutputVector, OutputVector)>,
    labels: Vec<i8>,
}

impl ComparisonSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, y1: OutputVector, y2: OutputVector, label: i8) -> Result<()> {
        if !matches!(label, -1..=1) {
            return Err(Error::Input(format!("preference label must be -1, 0 or 1, got {label}")));
        }
        if y1.len() != y2.len() || self.pairs.first().is_some_and(|(a, _)| a.len() != y1.len()) {
            return Err(Error::Input("comparison outputs differ in dimension".into()));
        }
        if y1.iter().chain(y2.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Input("comparison outputs must be finite".into()));
        }
        self.pairs.push((y1, y2));
        self.labels.push(label);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(OutputVector, OutputVector)] {
        &self.pairs
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn dim(&self) -> Option<usize> {
        self.pairs.first().map(|(a, _)| a.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Swish,
    Sigmoid,
    LeakyRelu,
}

const LEAKY_SLOPE: f64 = 0.25;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Swish => x * sigmoid(x),
            Activation::Sigmoid => sigmoid(x),
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
        }
    }

    #[inline]
    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Swish => {
                let s = sigmoid(x);
                s + x * s * (1.0 - s)
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Activation::LeakyRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Cosine annealing floor.
    pub lr_min: f64,
    /// Cosine annealing period in epochs.
    pub t_max: usize,
    /// Training stops once the loss is at or below this value.
    pub early_stop_loss: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub activation: Activation,
    /// Hidden layer widths; the output layer has width 1.
    pub hidden: Vec<usize>,
    /// Positive weights via `exp`; off gives an unconstrained network.
    pub monotone: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1600,
            lr: 0.01,
            lr_min: 1e-4,
            t_max: 1600,
            early_stop_loss: 1e-8,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            activation: Activation::Swish,
            hidden: vec![100, 10],
            monotone: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("train.epochs must be at least 1".into()));
        }
        if !(self.lr > 0.0) || !(self.lr_min >= 0.0) || self.lr_min >= self.lr {
            return Err(Error::Config("train.lr must be positive and above train.lr_min".into()));
        }
        if self.t_max == 0 || self.hidden.contains(&0) {
            return Err(Error::Config("train.t_max and hidden widths must be positive".into()));
        }
        Ok(())
    }

    /// Learning rate at `epoch` under cosine annealing.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let t = (epoch % (2 * self.t_max)) as f64 / self.t_max as f64;
        self.lr_min + 0.5 * (self.lr - self.lr_min) * (1.0 + (std::f64::consts::PI * t).cos())
    }

    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(&Sha256::digest(json.as_bytes())[..8])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Layer {
    n_in: usize,
    n_out: usize,
    /// Row-major `n_out x n_in`.
    w: Vec<f64>,
    b: Vec<f64>,
}

/// One member network with its raw (unconstrained) parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicNet {
    layers: Vec<Layer>,
    hinge_raw: f64,
    activation: Activation,
    monotone: bool,
}

/// `softplus^{-1}(1)`, so that alpha starts at 1.
const HINGE_RAW_INIT: f64 = 0.541_324_854_612_918_1;

impl MonotonicNet {
    /// Fresh network for `k` inputs. Raw weights feeding a node with fan-in
    /// `s` are uniform on `[-(1/s) - 6, 1/s]` (or `[-1/s, 1/s]` when not
    /// monotone), biases on `[-1/s, 1/s]`.
    pub fn init(k: usize, cfg: &TrainConfig, rng: &mut seed::Rng) -> Self {
        let mut widths = vec![k];
        widths.extend(&cfg.hidden);
        widths.push(1);
        let layers = widths
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let s = 1.0 / n_in as f64;
                let lo = if cfg.monotone { -s - 6.0 } else { -s };
                Layer {
                    n_in,
                    n_out,
                    w: (0..n_in * n_out).map(|_| rng.random_range(lo..s)).collect(),
                    b: (0..n_out).map(|_| rng.random_range(-s..s)).collect(),
                }
            })
            .collect();
        Self {
            layers,
            hinge_raw: HINGE_RAW_INIT,
            activation: cfg.activation,
            monotone: cfg.monotone,
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn alpha(&self) -> f64 {
        softplus(self.hinge_raw)
    }

    pub fn is_monotone(&self) -> bool {
        self.monotone
    }

    /// Raw weights of layer `l`, row-major `n_out x n_in`.
    pub fn raw_weights(&self, l: usize) -> &[f64] {
        &self.layers[l].w
    }

    pub fn raw_weights_mut(&mut self, l: usize) -> &mut [f64] {
        &mut self.layers[l].w
    }

    /// All parameters flattened: per layer weights then biases, then the
    /// hinge scale.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::new();
        for l in &self.layers {
            p.extend(&l.w);
            p.extend(&l.b);
        }
        p.push(self.hinge_raw);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let mut i = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.copy_from_slice(&p[i..i + nw]);
            i += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&p[i..i + nb]);
            i += nb;
        }
        self.hinge_raw = p[i];
    }

    pub fn frozen(&self) -> FrozenNet {
        FrozenNet {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    n_in: l.n_in,
                    n_out: l.n_out,
                    w: if self.monotone { l.w.iter().map(|v| v.exp()).collect() } else { l.w.clone() },
                    b: l.b.clone(),
                })
                .collect(),
            activation: self.activation,
        }
    }

    pub fn forward(&self, y: &[f64]) -> Result<f64> {
        if y.len() != self.n_inputs() {
            return Err(Error::Input(format!("network expects {} inputs, got {}", self.n_inputs(), y.len())));
        }
        Ok(self.frozen().forward(y))
    }

    /// Hinge loss over `data` (inputs already in network scale).
    pub fn hinge_loss(&self, data: &ComparisonSet) -> f64 {
        let f = self.frozen();
        let alpha = self.alpha();
        data.pairs
            .iter()
            .zip(&data.labels)
            .map(|((a, b), p)| pair_loss(f.forward(a) - f.forward(b), *p, alpha).0)
            .sum()
    }

    /// Hinge loss and its gradient with respect to [`params`](Self::params).
    pub fn loss_and_grad(&self, data: &ComparisonSet) -> (f64, Vec<f64>) {
        let f = self.frozen();
        let alpha = self.alpha();
        let mut grad = vec![0.0; self.params().len()];
        let mut loss = 0.0;
        let mut dalpha = 0.0;
        let mut cache_a = Cache::default();
        let mut cache_b = Cache::default();
        for ((a, b), p) in data.pairs.iter().zip(&data.labels) {
            let ga = f.forward_cached(a, &mut cache_a);
            let gb = f.forward_cached(b, &mut cache_b);
            let (l, dd, da) = pair_loss(ga - gb, *p, alpha);
            loss += l;
            dalpha += da;
            if dd != 0.0 {
                self.backward(&f, &cache_a, dd, &mut grad);
                self.backward(&f, &cache_b, -dd, &mut grad);
            }
        }
        let n = grad.len();
        grad[n - 1] = dalpha * sigmoid(self.hinge_raw);
        (loss, grad)
    }

    fn backward(&self, f: &FrozenNet, cache: &Cache, upstream: f64, grad: &mut [f64]) {
        // parameter offsets per layer
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            offsets.push(off);
            off += l.w.len() + l.b.len();
        }
        let mut delta = vec![upstream];
        for li in (0..f.layers.len()).rev() {
            let l = &f.layers[li];
            let input = &cache.acts[li];
            let o = offsets[li];
            for r in 0..l.n_out {
                let dr = delta[r];
                if dr == 0.0 {
                    continue;
                }
                let row = &l.w[r * l.n_in..(r + 1) * l.n_in];
                let g = &mut grad[o + r * l.n_in..o + (r + 1) * l.n_in];
                if self.monotone {
                    for ((gi, a), w) in g.iter_mut().zip(input).zip(row) {
                        *gi += dr * a * w;
                    }
                } else {
                    for (gi, a) in g.iter_mut().zip(input) {
                        *gi += dr * a;
                    }
                }
                grad[o + l.w.len() + r] += dr;
            }
            if li > 0 {
                let z = &cache.pre[li - 1];
                let mut next = vec![0.0; l.n_in];
                for r in 0..l.n_out {
                    let dr = delta[r];
                    if dr == 0.0 {
                        continue;
                    }
                    for (nx, w) in next.iter_mut().zip(&l.w[r * l.n_in..(r + 1) * l.n_in]) {
                        *nx += dr * w;
                    }
                }
                for (nx, zi) in next.iter_mut().zip(z) {
                    *nx *= f.activation.derivative(*zi);
                }
                delta = next;
            }
        }
    }
}

/// Per-pair loss, d loss / d(g1 - g2), d loss / d alpha.
fn pair_loss(delta: f64, label: i8, alpha: f64) -> (f64, f64, f64) {
    if !(delta * alpha).is_finite() {
        return (f64::NAN, 0.0, 0.0);
    }
    if label == 0 {
        return (delta.abs(), delta.signum() * (delta != 0.0) as i8 as f64, 0.0);
    }
    let p = label as f64;
    let r = 1.0 - alpha * delta * p;
    if r > 0.0 {
        (r, -alpha * p, -delta * p)
    } else {
        (0.0, 0.0, 0.0)
    }
}

#[derive(Debug, Default)]
struct Cache {
    /// Input to each layer.
    acts: Vec<Vec<f64>>,
    /// Pre-activations of each hidden layer.
    pre: Vec<Vec<f64>>,
}

/// A member with its effective weights materialised, for fast evaluation.
#[derive(Debug, Clone)]
pub struct FrozenNet {
    layers: Vec<Layer>,
    activation: Activation,
}

impl FrozenNet {
    pub fn forward(&self, y: &[f64]) -> f64 {
        let mut cur: Vec<f64> = y.to_vec();
        let last = self.layers.len() - 1;
        for (li, l) in self.layers.iter().enumerate() {
            let mut next = l.b.clone();
            for (r, nx) in next.iter_mut().enumerate() {
                *nx += l.w[r * l.n_in..(r + 1) * l.n_in].iter().zip(&cur).map(|(w, a)| w * a).sum::<f64>();
            }
            if li < last {
                for v in next.iter_mut() {
                    *v = self.activation.apply(*v);
                }
            }
            cur = next;
        }
        cur[0]
    }

    fn forward_cached(&self, y: &[f64], cache: &mut Cache) -> f64 {
        cache.acts.clear();
        cache.pre.clear();
        let mut cur: Vec<f64> = y.to_vec();
        let last = self.layers.len() - 1;
        for (li, l) in self.layers.iter().enumerate() {
            let mut next = l.b.clone();
            for (r, nx) in next.iter_mut().enumerate() {
                *nx += l.w[r * l.n_in..(r + 1) * l.n_in].iter().zip(&cur).map(|(w, a)| w * a).sum::<f64>();
            }
            cache.acts.push(cur);
            if li < last {
                cache.pre.push(next.clone());
                for v in next.iter_mut() {
                    *v = self.activation.apply(*v);
                }
            }
            cur = next;
        }
        cur[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Epochs in which a parameter update was applied.
    pub epochs_run: usize,
    pub early_stopped: bool,
}

/// Full-batch Adam with cosine-annealed learning rate. The parameters with
/// the lowest loss seen are kept, so the final loss never exceeds the initial.
pub fn train_member(
    net: &mut MonotonicNet,
    data: &ComparisonSet,
    cfg: &TrainConfig,
    member: Option<usize>,
) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(Error::State("training needs at least one comparison".into()));
    }
    if data.dim() != Some(net.n_inputs()) {
        return Err(Error::Input("comparison dimension does not match network inputs".into()));
    }
    let mut p = net.params();
    let mut m = vec![0.0; p.len()];
    let mut v = vec![0.0; p.len()];
    let mut best = (f64::INFINITY, p.clone());
    let mut initial = f64::NAN;
    let mut epochs_run = 0;
    let mut early = false;
    for epoch in 0..=cfg.epochs {
        let (loss, g) = net.loss_and_grad(data);
        if !loss.is_finite() || g.iter().any(|x| !x.is_finite()) {
            return Err(Error::Training {
                member,
                epoch,
                detail: format!("non-finite loss or gradient (loss = {loss})"),
            });
        }
        if epoch == 0 {
            initial = loss;
        }
        if loss < best.0 {
            best = (loss, p.clone());
        }
        if loss <= cfg.early_stop_loss {
            early = true;
            break;
        }
        if epoch == cfg.epochs {
            break;
        }
        let t = (epoch + 1) as i32;
        let lr = cfg.lr_at(epoch);
        let c1 = 1.0 - cfg.adam_beta1.powi(t);
        let c2 = 1.0 - cfg.adam_beta2.powi(t);
        for i in 0..p.len() {
            m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * g[i];
            v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * g[i] * g[i];
            p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + cfg.adam_eps);
        }
        net.set_params(&p);
        epochs_run += 1;
    }
    net.set_params(&best.1);
    Ok(TrainReport {
        initial_loss: initial,
        final_loss: best.0,
        epochs_run,
        early_stopped: early,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub g_max: f64,
    pub mean: f64,
    pub sigma: f64,
    /// Set when all compared scores were identical and sigma fell back to 1.
    pub sigma_fallback: bool,
}

impl NormStats {
    pub fn apply(&self, score: f64) -> f64 {
        (score - self.g_max) / self.sigma
    }
}

/// Normalisation statistics of one member over the 2m compared outputs.
/// The spread divides by m (the number of pairs), not 2m.
pub fn normalization_stats(scores: &[f64], n_pairs: usize) -> NormStats {
    let g_max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    let ss: f64 = scores.iter().map(|s| (s - mean).powi(2)).sum();
    let sigma = (ss / n_pairs as f64).sqrt();
    if sigma > 0.0 && sigma.is_finite() {
        NormStats {
            g_max,
            mean,
            sigma,
            sigma_fallback: false,
        }
    } else {
        NormStats {
            g_max,
            mean,
            sigma: 1.0,
            sigma_fallback: true,
        }
    }
}

/// Positive affine map applied to outputs before they enter the networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputScaling {
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl InputScaling {
    pub fn identity(k: usize) -> Self {
        Self {
            offset: vec![0.0; k],
            scale: vec![1.0; k],
        }
    }

    /// Maps each range onto `[-1, 1]`.
    pub fn from_ranges(ranges: &[Bounds]) -> Self {
        Self {
            offset: ranges.iter().map(|b| 0.5 * (b.lower + b.upper)).collect(),
            scale: ranges
                .iter()
                .map(|b| if b.width() > 0.0 { 2.0 / b.width() } else { 1.0 })
                .collect(),
        }
    }

    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(self.offset.iter().zip(&self.scale))
            .map(|(v, (o, s))| (v - o) * s)
            .collect()
    }

    fn apply_set(&self, data: &ComparisonSet) -> ComparisonSet {
        ComparisonSet {
            pairs: data
                .pairs
                .iter()
                .map(|(a, b)| (OutputVector(self.apply(a)), OutputVector(self.apply(b))))
                .collect(),
            labels: data.labels.clone(),
        }
    }
}

pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Artifact {
    version: u32,
    config_hash: String,
    config: TrainConfig,
    scaling: InputScaling,
    members: Vec<MonotonicNet>,
    stats: Vec<NormStats>,
    reports: Vec<TrainReport>,
}

/// Trained, normalised ensemble; the utility surrogate.
#[derive(Debug, Clone)]
pub struct MonotonicEnsemble {
    config: TrainConfig,
    scaling: InputScaling,
    members: Vec<MonotonicNet>,
    stats: Vec<NormStats>,
    reports: Vec<TrainReport>,
    frozen: Vec<FrozenNet>,
}

impl MonotonicEnsemble {
    /// Trains `n_members` independently initialised networks on `data`.
    /// Member `j` draws its initialisation from `seed::derive(seed, j)`.
    pub fn train(
        data: &ComparisonSet,
        n_members: usize,
        cfg: &TrainConfig,
        scaling: InputScaling,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        if n_members == 0 {
            return Err(Error::Config("ensemble needs at least one member".into()));
        }
        let Some(k) = data.dim() else {
            return Err(Error::State("training needs at least one comparison".into()));
        };
        if scaling.offset.len() != k {
            return Err(Error::Input("input scaling does not match output dimension".into()));
        }
        let scaled = scaling.apply_set(data);
        let mut members = Vec::with_capacity(n_members);
        let mut reports = Vec::with_capacity(n_members);
        for j in 0..n_members {
            let mut rng = seed::rng(seed::derive(seed, j as u64));
            let mut net = MonotonicNet::init(k, cfg, &mut rng);
            reports.push(train_member(&mut net, &scaled, cfg, Some(j))?);
            members.push(net);
        }
        Ok(Self::assemble(cfg.clone(), scaling, members, reports, &scaled))
    }

    fn assemble(
        config: TrainConfig,
        scaling: InputScaling,
        members: Vec<MonotonicNet>,
        reports: Vec<TrainReport>,
        scaled: &ComparisonSet,
    ) -> Self {
        let frozen: Vec<FrozenNet> = members.iter().map(MonotonicNet::frozen).collect();
        let stats = frozen
            .iter()
            .map(|f| {
                let scores: Vec<f64> = scaled
                    .pairs
                    .iter()
                    .flat_map(|(a, b)| [f.forward(a), f.forward(b)])
                    .collect();
                normalization_stats(&scores, scaled.len())
            })
            .collect();
        Self {
            config,
            scaling,
            members,
            stats,
            reports,
            frozen,
        }
    }

    pub fn n_members(&self) -> usize {
        self.members.len()
    }

    pub fn members(&self) -> &[MonotonicNet] {
        &self.members
    }

    pub fn stats(&self) -> &[NormStats] {
        &self.stats
    }

    pub fn reports(&self) -> &[TrainReport] {
        &self.reports
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn scaling(&self) -> &InputScaling {
        &self.scaling
    }

    /// Raw (unnormalised) score of member `j`.
    pub fn raw_score(&self, j: usize, y: &[f64]) -> f64 {
        self.frozen[j].forward(&self.scaling.apply(y))
    }

    /// Normalised score of member `j`.
    pub fn score(&self, j: usize, y: &[f64]) -> f64 {
        self.stats[j].apply(self.raw_score(j, y))
    }

    pub fn scores(&self, y: &[f64]) -> Vec<f64> {
        let s = self.scaling.apply(y);
        self.frozen
            .iter()
            .zip(&self.stats)
            .map(|(f, st)| st.apply(f.forward(&s)))
            .collect()
    }

    /// Mean and population variance of the normalised member scores.
    pub fn predict_belief(&self, y: &[f64]) -> GaussianBelief {
        let s = self.scores(y);
        let n = s.len() as f64;
        let mean = s.iter().sum::<f64>() / n;
        let variance = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        GaussianBelief { mean, variance }
    }

    pub fn to_artifact(&self) -> String {
        let a = Artifact {
            version: ARTIFACT_VERSION,
            config_hash: self.config.hash(),
            config: self.config.clone(),
            scaling: self.scaling.clone(),
            members: self.members.clone(),
            stats: self.stats.clone(),
            reports: self.reports.clone(),
        };
        serde_json::to_string(&a).expect("artifact serializes")
    }

    pub fn from_artifact(s: &str) -> Result<Self> {
        let a: Artifact = serde_json::from_str(s)?;
        if a.version != ARTIFACT_VERSION {
            return Err(Error::Config(format!("unsupported ensemble artifact version {}", a.version)));
        }
        if a.config_hash != a.config.hash() || a.members.len() != a.stats.len() || a.members.is_empty() {
            return Err(Error::Config("ensemble artifact is inconsistent".into()));
        }
        let frozen = a.members.iter().map(MonotonicNet::frozen).collect();
        Ok(Self {
            config: a.config,
            scaling: a.scaling,
            members: a.members,
            stats: a.stats,
            reports: a.reports,
            frozen,
        })
    }
}
