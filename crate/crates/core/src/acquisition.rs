//! Experimentation (qNEIUU) and preference-exploration (IEUBO / EUBO)
//! acquisition functions and their optimisers.

use crate::gp::{AnchoredPosterior, GaussianBelief, GpSurrogate, ObservationSet};
use crate::monne::{ComparisonSet, MonotonicEnsemble};
use crate::optim::{fd_gradient, BoxLbfgs, Status};
use crate::problems::{Bounds, OutputVector, UtilityFunction};
use crate::qmc::SobolSequence;
use crate::{normal, seed, Error, Result};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PairCriterion {
    #[default]
    Ieubo,
    Eubo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcquisitionConfig {
    /// GP posterior samples per evaluation.
    pub n_mc: usize,
    pub raw_samples: usize,
    pub restarts: usize,
    /// Batch size; only 1 is supported.
    pub q: usize,
    pub pair_criterion: PairCriterion,
    pub exclude_asked_pairs: bool,
    /// L-BFGS iterations per restart.
    pub max_iter: usize,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            n_mc: 32,
            raw_samples: 256,
            restarts: 12,
            q: 1,
            pair_criterion: PairCriterion::Ieubo,
            exclude_asked_pairs: true,
            max_iter: 50,
        }
    }
}

impl AcquisitionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_mc == 0 {
            return Err(Error::Config("acquisition.n_mc must be at least 1".into()));
        }
        if self.raw_samples == 0 || self.restarts > self.raw_samples {
            return Err(Error::Config(
                "acquisition.restarts must not exceed acquisition.raw_samples (which must be positive)".into(),
            ));
        }
        if self.q != 1 {
            return Err(Error::Config(format!("acquisition.q = {} is unsupported; only 1 is", self.q)));
        }
        Ok(())
    }
}

/// A finite set of utility functions `g^1..g^M` over output vectors.
pub trait UtilitySampler {
    fn n_samples(&self) -> usize;
    fn eval(&self, j: usize, y: &[f64]) -> f64;
}

impl UtilitySampler for MonotonicEnsemble {
    fn n_samples(&self) -> usize {
        self.n_members()
    }

    fn eval(&self, j: usize, y: &[f64]) -> f64 {
        self.score(j, y)
    }
}

/// The exact utility, used by the known-utility baseline (M = 1).
pub struct TrueUtility<'a>(pub &'a UtilityFunction);

impl UtilitySampler for TrueUtility<'_> {
    fn n_samples(&self) -> usize {
        1
    }

    fn eval(&self, _: usize, y: &[f64]) -> f64 {
        self.0.evaluate_unchecked(y)
    }
}

/// Every output has the same utility.
pub struct ConstantUtility(pub f64);

impl UtilitySampler for ConstantUtility {
    fn n_samples(&self) -> usize {
        1
    }

    fn eval(&self, _: usize, _: &[f64]) -> f64 {
        self.0
    }
}

/// Monte Carlo qNEIUU for a single candidate with fixed base samples.
///
/// Joint draws over `X_n ∪ {x}` are built from one set of standard normal
/// base samples tied to the observed designs in lexicographic order, so the
/// value does not depend on the order of the observation set and is smooth in
/// `x` for the optimiser.
pub struct Qneiuu<'a, U: UtilitySampler + ?Sized> {
    posterior: AnchoredPosterior,
    util: &'a U,
    n_mc: usize,
    /// `[o][k]` base samples for the candidate.
    z_x: Vec<Vec<f64>>,
    /// `[o][k]` anchor base vectors.
    z: Vec<Vec<nalgebra::DVector<f64>>>,
    /// `[k][i][o]` draws at the observed designs.
    anchor_draws: Vec<Vec<Vec<f64>>>,
    /// `[j][k]` incumbent utility `max_i g^j(f^k(x_i))`.
    best: Vec<Vec<f64>>,
}

impl<'a, U: UtilitySampler + ?Sized> Qneiuu<'a, U> {
    pub fn new(gp: &GpSurrogate, util: &'a U, data: &ObservationSet, n_mc: usize, seed: u64) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::State("qNEIUU needs at least one observation".into()));
        }
        let mut anchors: Vec<Vec<f64>> = data.xs().iter().map(|x| x.0.clone()).collect();
        anchors.sort_by(|a, b| a.partial_cmp(b).expect("finite designs"));
        let posterior = gp.anchored(&anchors)?;
        let n = anchors.len();
        let k_out = gp.n_outputs();
        let mut rng = seed::rng(seed);
        let mut z = vec![Vec::with_capacity(n_mc); k_out];
        let mut z_x = vec![Vec::with_capacity(n_mc); k_out];
        for o in 0..k_out {
            for _ in 0..n_mc {
                z[o].push(nalgebra::DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng)));
                z_x[o].push(StandardNormal.sample(&mut rng));
            }
        }
        let mut anchor_draws = vec![vec![vec![0.0; k_out]; n]; n_mc];
        for o in 0..k_out {
            let mean = posterior.anchor_mean(o);
            let l = posterior.anchor_factor(o);
            for (k, zk) in z[o].iter().enumerate() {
                let f = mean + l * zk;
                for i in 0..n {
                    anchor_draws[k][i][o] = f[i];
                }
            }
        }
        let best = (0..util.n_samples())
            .map(|j| {
                anchor_draws
                    .iter()
                    .map(|draw| draw.iter().map(|y| util.eval(j, y)).fold(f64::NEG_INFINITY, f64::max))
                    .collect()
            })
            .collect();
        Ok(Self {
            posterior,
            util,
            n_mc,
            z_x,
            z,
            anchor_draws,
            best,
        })
    }

    /// Joint draws at the candidate, `[k][o]`.
    pub fn candidate_draws(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let ext = self.posterior.extend(x);
        (0..self.n_mc)
            .map(|k| {
                ext.iter()
                    .enumerate()
                    .map(|(o, e)| e.mean + e.w.dot(&self.z[o][k]) + e.w_x * self.z_x[o][k])
                    .collect()
            })
            .collect()
    }

    /// Draws at the observed designs (sorted lexicographically), `[k][i][o]`.
    pub fn anchor_draws(&self) -> &[Vec<Vec<f64>>] {
        &self.anchor_draws
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let draws = self.candidate_draws(x);
        let m = self.util.n_samples();
        let mut total = 0.0;
        for j in 0..m {
            for (k, y) in draws.iter().enumerate() {
                total += (self.util.eval(j, y) - self.best[j][k]).max(0.0);
            }
        }
        total / (m * self.n_mc) as f64
    }
}

#[derive(Debug, Clone)]
pub struct AcquisitionResult {
    pub x: Vec<f64>,
    pub value: f64,
    /// Best value among the raw quasi-random samples.
    pub raw_best: f64,
    pub warning: Option<String>,
}

/// Maximises `f` over the box: quasi-random raw samples, then bounded
/// L-BFGS with finite-difference gradients from the best few. Refined points
/// replace the raw incumbent only if they are at least as good.
pub fn maximize<F: Fn(&[f64]) -> f64>(
    f: F,
    bounds: &[Bounds],
    cfg: &AcquisitionConfig,
    seed: u64,
) -> AcquisitionResult {
    let seq = SobolSequence::new(bounds, seed);
    let raw: Vec<(Vec<f64>, f64)> = seq
        .points(0, cfg.raw_samples)
        .into_iter()
        .map(|x| {
            let v = f(&x);
            (x, if v.is_finite() { v } else { f64::NEG_INFINITY })
        })
        .collect();
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|a, b| raw[*b].1.total_cmp(&raw[*a].1).then(a.cmp(b)));
    let (mut best_x, mut best_v) = raw[order[0]].clone();
    let raw_best = best_v;

    let lower: Vec<f64> = bounds.iter().map(|b| b.lower).collect();
    let upper: Vec<f64> = bounds.iter().map(|b| b.upper).collect();
    let h = 1e-6 * bounds.iter().map(Bounds::width).fold(0.0, f64::max);
    let solver = BoxLbfgs {
        max_iter: cfg.max_iter,
        pg_tol: 1e-10,
        f_rel_tol: 1e-10,
        ..BoxLbfgs::default()
    };
    let objective = |x: &[f64]| {
        let v = -f(x);
        v.is_finite().then(|| (v, fd_gradient(|p| -f(p), x, &lower, &upper, h)))
    };
    let mut failures = 0;
    let starts = cfg.restarts.min(order.len());
    for &i in order.iter().take(starts) {
        match solver.minimize(objective, &raw[i].0, &lower, &upper) {
            Some(m) => {
                if m.status == Status::LineSearchFailed && m.iterations <= 1 {
                    failures += 1;
                }
                let v = f(&m.x);
                if v > best_v {
                    best_v = v;
                    best_x = m.x;
                }
            }
            None => failures += 1,
        }
    }
    let warning = (starts > 0 && failures == starts && best_v == raw_best)
        .then(|| "every acquisition restart failed its line search; using the best raw sample".to_string());
    AcquisitionResult {
        x: best_x,
        value: best_v,
        raw_best,
        warning,
    }
}

/// Optimises qNEIUU over the box.
pub fn optimize_qneiuu<U: UtilitySampler + ?Sized>(
    acq: &Qneiuu<'_, U>,
    bounds: &[Bounds],
    cfg: &AcquisitionConfig,
    seed: u64,
) -> AcquisitionResult {
    maximize(|x| acq.value(x), bounds, cfg, seed)
}

/// `E[max(X, Y)]` for independent `X ~ N(m1, s1^2)` and `Y ~ N(m2, s2^2)`.
pub fn expected_max_gaussian(m1: f64, s1: f64, m2: f64, s2: f64) -> f64 {
    let s3 = (s1 * s1 + s2 * s2).sqrt();
    if s3 == 0.0 {
        return m1.max(m2);
    }
    let a = (m1 - m2) / s3;
    m1 * normal::cdf(a) + m2 * normal::cdf(-a) + s3 * normal::pdf(a)
}

/// A utility model that can be queried by the preference-exploration stage.
pub trait PreferenceModel {
    fn belief(&self, y: &[f64]) -> GaussianBelief;
    /// Normalised score of every member.
    fn member_scores(&self, y: &[f64]) -> Vec<f64>;
}

impl PreferenceModel for MonotonicEnsemble {
    fn belief(&self, y: &[f64]) -> GaussianBelief {
        self.predict_belief(y)
    }

    fn member_scores(&self, y: &[f64]) -> Vec<f64> {
        self.scores(y)
    }
}

pub fn ieubo_beliefs(a: &GaussianBelief, b: &GaussianBelief) -> f64 {
    expected_max_gaussian(a.mean, a.std(), b.mean, b.std())
}

pub fn ieubo<M: PreferenceModel + ?Sized>(y1: &[f64], y2: &[f64], model: &M) -> f64 {
    ieubo_beliefs(&model.belief(y1), &model.belief(y2))
}

pub fn eubo_scores(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.max(*y)).sum::<f64>() / a.len() as f64
}

/// `(1/M) Σ_j max{g^j(y1), g^j(y2)}`.
pub fn eubo_observed<M: PreferenceModel + ?Sized>(y1: &[f64], y2: &[f64], model: &M) -> f64 {
    eubo_scores(&model.member_scores(y1), &model.member_scores(y2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairChoice {
    pub i: usize,
    pub j: usize,
    pub value: f64,
    /// Set when every pair had been asked and the exclusion was lifted.
    pub fallback: bool,
}

fn same_pair(a: &[f64], b: &[f64], asked: &(OutputVector, OutputVector)) -> bool {
    let eq = |x: &[f64], y: &[f64]| x.len() == y.len() && x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits());
    (eq(a, &asked.0) && eq(b, &asked.1)) || (eq(a, &asked.1) && eq(b, &asked.0))
}

/// Exhaustive argmax of the pair criterion over all unordered pairs of
/// observed outputs. Ties go to the lexicographically first `(i, j)`.
pub fn select_pair<M: PreferenceModel + ?Sized>(
    outputs: &[OutputVector],
    model: &M,
    history: &ComparisonSet,
    criterion: PairCriterion,
    exclude_asked: bool,
) -> Result<PairChoice> {
    let n = outputs.len();
    if n < 2 {
        return Err(Error::State(format!("pair selection needs at least 2 observed outputs, got {n}")));
    }
    let value: Box<dyn Fn(usize, usize) -> f64> = match criterion {
        PairCriterion::Ieubo => {
            let b: Vec<GaussianBelief> = outputs.iter().map(|y| model.belief(y)).collect();
            Box::new(move |i, j| ieubo_beliefs(&b[i], &b[j]))
        }
        PairCriterion::Eubo => {
            let s: Vec<Vec<f64>> = outputs.iter().map(|y| model.member_scores(y)).collect();
            Box::new(move |i, j| eubo_scores(&s[i], &s[j]))
        }
    };
    let search = |exclude: bool| {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            for j in i + 1..n {
                if exclude && history.pairs().iter().any(|p| same_pair(&outputs[i], &outputs[j], p)) {
                    continue;
                }
                let v = value(i, j);
                if best.is_none_or(|(_, _, b)| v > b) {
                    best = Some((i, j, v));
                }
            }
        }
        best
    };
    if exclude_asked {
        if let Some((i, j, v)) = search(true) {
            return Ok(PairChoice {
                i,
                j,
                value: v,
                fallback: false,
            });
        }
    }
    let (i, j, v) = search(false).expect("n >= 2");
    Ok(PairChoice {
        i,
        j,
        value: v,
        fallback: exclude_asked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(Vec<f64>);

    impl PreferenceModel for Fixed {
        fn belief(&self, y: &[f64]) -> GaussianBelief {
            GaussianBelief {
                mean: y[0],
                variance: self.0[0],
            }
        }
        fn member_scores(&self, y: &[f64]) -> Vec<f64> {
            vec![y[0]]
        }
    }

    #[test]
    fn expected_max_examples() {
        let v = expected_max_gaussian(0.0, 1.0, 0.0, 1.0);
        assert!((v - 2f64.sqrt() * normal::pdf(0.0)).abs() < 1e-15);
        assert!((v - 0.564_189_583_547_756_3).abs() < 1e-12);
        assert_eq!(expected_max_gaussian(5.0, 0.0, 0.0, 0.0), 5.0);
        assert!((expected_max_gaussian(10.0, 0.01, -10.0, 0.01) - 10.0).abs() < 1e-9);
        // iid case: mu + sigma / sqrt(pi)
        let (m, s) = (0.7, 1.3);
        let iid = expected_max_gaussian(m, s, m, s);
        assert!((iid - (m + s / std::f64::consts::PI.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn n_equals_two_returns_only_pair() {
        let ys: Vec<OutputVector> = vec![vec![1.0].into(), vec![2.0].into()];
        let c = select_pair(&ys, &Fixed(vec![0.1]), &ComparisonSet::new(), PairCriterion::Ieubo, true).unwrap();
        assert_eq!((c.i, c.j, c.fallback), (0, 1, false));
        assert!(select_pair(&ys[..1], &Fixed(vec![0.1]), &ComparisonSet::new(), PairCriterion::Ieubo, true).is_err());
    }

    #[test]
    fn asked_pairs_excluded_then_fallback() {
        let ys: Vec<OutputVector> = vec![vec![1.0].into(), vec![2.0].into(), vec![3.0].into()];
        let mut h = ComparisonSet::new();
        h.push(ys[2].clone(), ys[1].clone(), 1).unwrap();
        let c = select_pair(&ys, &Fixed(vec![0.0]), &h, PairCriterion::Eubo, true).unwrap();
        assert_eq!((c.i, c.j), (0, 2));
        h.push(ys[0].clone(), ys[2].clone(), 1).unwrap();
        h.push(ys[1].clone(), ys[0].clone(), 1).unwrap();
        let c = select_pair(&ys, &Fixed(vec![0.0]), &h, PairCriterion::Eubo, true).unwrap();
        assert!(c.fallback);
        assert_eq!((c.i, c.j), (0, 2));
        let c = select_pair(&ys, &Fixed(vec![0.0]), &h, PairCriterion::Eubo, false).unwrap();
        assert!(!c.fallback);
    }

    #[test]
    fn constant_utility_gives_zero() {
        use crate::gp::GpConfig;
        let b = vec![Bounds::new(0.0, 1.0)];
        let mut d = ObservationSet::new(1, 2);
        for x in [0.1, 0.5, 0.9] {
            d.push(vec![x].into(), vec![x, 1.0 - x * x].into()).unwrap();
        }
        let gp = GpSurrogate::fit(&d, &b, &GpConfig::default(), 1).unwrap();
        let acq = Qneiuu::new(&gp, &ConstantUtility(3.0), &d, 16, 2).unwrap();
        for x in [0.0, 0.3, 0.77] {
            assert_eq!(acq.value(&[x]), 0.0);
        }
    }
}
