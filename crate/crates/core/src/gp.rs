//! Independent Matérn-5/2 ARD Gaussian processes, one per objective.
//!
//! Inputs are min-max scaled to the unit cube with the problem bounds and each
//! output column is standardised before fitting. Hyperparameters are stored as
//! natural logs and fitted by multi-start bounded L-BFGS on the exact log
//! marginal likelihood.

use crate::optim::BoxLbfgs;
use crate::problems::{Bounds, DesignPoint, OutputVector};
use crate::{seed, Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const SQRT5: f64 = 2.236_067_977_499_79;

/// Evaluated designs and their observed outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    d: usize,
    k: usize,
    xs: Vec<DesignPoint>,
    ys: Vec<OutputVector>,
}

impl ObservationSet {
    pub fn new(d: usize, k: usize) -> Self {
        Self {
            d,
            k,
            xs: Vec::new(),
            ys: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n_outputs(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn xs(&self) -> &[DesignPoint] {
        &self.xs
    }

    pub fn ys(&self) -> &[OutputVector] {
        &self.ys
    }

    /// Whether a design within 1e-12 (max-norm) of `x` is already present.
    pub fn contains(&self, x: &[f64]) -> bool {
        self.xs
            .iter()
            .any(|p| p.iter().zip(x).all(|(a, b)| (a - b).abs() <= 1e-12))
    }

    pub fn push(&mut self, x: DesignPoint, y: OutputVector) -> Result<()> {
        if x.len() != self.d || y.len() != self.k {
            return Err(Error::Input(format!(
                "observation shape ({}, {}) does not match ({}, {})",
                x.len(),
                y.len(),
                self.d,
                self.k
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input(format!("non-finite output {:?}", y.0)));
        }
        if self.contains(&x) {
            return Err(Error::Input(format!("duplicate design {:?}", x.0)));
        }
        self.xs.push(x);
        self.ys.push(y);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianBelief {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianBelief {
    pub fn std(&self) -> f64 {
        self.variance.max(0.0).sqrt()
    }
}

/// Kernel hyperparameters in the normalised (unit cube, standardised) space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHyperparams {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl GpHyperparams {
    /// `[log l_1, ..., log l_d, log s2, log noise]`.
    pub fn to_log(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.lengthscales.iter().map(|l| l.ln()).collect();
        v.push(self.signal_variance.ln());
        v.push(self.noise_variance.ln());
        v
    }

    pub fn from_log(v: &[f64]) -> Self {
        let d = v.len() - 2;
        Self {
            lengthscales: v[..d].iter().map(|x| x.exp()).collect(),
            signal_variance: v[d].exp(),
            noise_variance: v[d + 1].exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpConfig {
    /// Total number of optimizer starts (one fixed default plus random ones).
    pub restarts: usize,
    pub lengthscale_bounds: (f64, f64),
    pub signal_bounds: (f64, f64),
    pub noise_bounds: (f64, f64),
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            restarts: 5,
            lengthscale_bounds: (1e-3, 1e2),
            signal_bounds: (1e-3, 1e3),
            noise_bounds: (1e-8, 1.0),
        }
    }
}

/// Matérn-5/2 correlation as a function of scaled distance.
fn matern52(r: f64) -> f64 {
    let s = SQRT5 * r;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

fn scaled_dist(a: &[f64], b: &[f64], ls: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(ls)
        .map(|((x, y), l)| ((x - y) / l).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn gram(x: &[Vec<f64>], h: &GpHyperparams) -> DMatrix<f64> {
    let n = x.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = h.signal_variance;
        for j in 0..i {
            let v = h.signal_variance * matern52(scaled_dist(&x[i], &x[j], &h.lengthscales));
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

fn cross(a: &[Vec<f64>], b: &[Vec<f64>], h: &GpHyperparams) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| {
        h.signal_variance * matern52(scaled_dist(&a[i], &b[j], &h.lengthscales))
    })
}

const JITTER_LADDER: [f64; 6] = [0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

/// Cholesky of `m`, adding increasing multiples of the mean diagonal on
/// failure. Returns the factor and the absolute jitter used.
pub(crate) fn robust_cholesky(m: &DMatrix<f64>, context: &str) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = m.nrows();
    let scale = (m.trace() / n.max(1) as f64).abs().max(f64::MIN_POSITIVE);
    for rel in JITTER_LADDER {
        let jitter = rel * scale;
        let mut a = m.clone();
        for i in 0..n {
            a[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(a) {
            if c.l_dirty().diagonal().iter().all(|v| *v > 0.0 && v.is_finite()) {
                return Ok((c, jitter));
            }
        }
    }
    Err(Error::numerical(
        context,
        format!(
            "matrix of size {n} not positive definite after jitter {:e}; diagonal range [{:e}, {:e}]",
            JITTER_LADDER[JITTER_LADDER.len() - 1] * scale,
            m.diagonal().min(),
            m.diagonal().max()
        ),
    ))
}

/// Exact log marginal likelihood of a zero-mean GP and its gradient with
/// respect to `[log l_1..d, log s2, log noise]`.
pub fn log_marginal_likelihood(h: &GpHyperparams, x: &[Vec<f64>], y: &[f64]) -> Result<(f64, Vec<f64>)> {
    let n = x.len();
    let d = h.lengthscales.len();
    let mut k = gram(x, h);
    for i in 0..n {
        k[(i, i)] += h.noise_variance;
    }
    let (chol, _) = robust_cholesky(&k, "log marginal likelihood")?;
    let yv = DVector::from_column_slice(y);
    let alpha = chol.solve(&yv);
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
    let lml = -0.5 * yv.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * (2.0 * PI).ln();

    // W = alpha alpha^T - K^{-1}; grad_i = 0.5 * sum(W .* dK_i)
    let mut w = chol.inverse();
    w.neg_mut();
    w.ger(1.0, &alpha, &alpha, 1.0);

    let mut grad = vec![0.0; d + 2];
    for i in 0..n {
        // diagonal: only the signal and noise terms depend on parameters
        grad[d] += 0.5 * w[(i, i)] * h.signal_variance;
        grad[d + 1] += 0.5 * w[(i, i)] * h.noise_variance;
        for j in 0..i {
            let r = scaled_dist(&x[i], &x[j], &h.lengthscales);
            let e = (-SQRT5 * r).exp();
            let kij = h.signal_variance * (1.0 + SQRT5 * r + 5.0 * r * r / 3.0) * e;
            let common = h.signal_variance * 5.0 / 3.0 * (1.0 + SQRT5 * r) * e;
            let wij = w[(i, j)]; // symmetric: counted twice, halved by 0.5
            grad[d] += wij * kij;
            for (l, g) in grad.iter_mut().take(d).enumerate() {
                let dl = (x[i][l] - x[j][l]) / h.lengthscales[l];
                *g += wij * common * dl * dl;
            }
        }
    }
    Ok((lml, grad))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Log marginal likelihood at each optimizer start.
    pub initial_lml: Vec<f64>,
    pub final_lml: f64,
    pub jitter: f64,
    pub degenerate_column: bool,
}

#[derive(Debug, Clone)]
struct OutputGp {
    hyper: GpHyperparams,
    mean: f64,
    std: f64,
    x: Vec<Vec<f64>>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    diag: FitDiagnostics,
}

impl OutputGp {
    fn kvec(&self, xn: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.x.len(),
            self.x
                .iter()
                .map(|t| self.hyper.signal_variance * matern52(scaled_dist(t, xn, &self.hyper.lengthscales))),
        )
    }
}

/// Fitted output model: one GP per objective.
#[derive(Debug, Clone)]
pub struct GpSurrogate {
    bounds: Vec<Bounds>,
    outputs: Vec<OutputGp>,
}

fn fit_single(x: &[Vec<f64>], y: &[f64], cfg: &GpConfig, rng: &mut seed::Rng) -> Result<OutputGp> {
    let n = y.len();
    let d = x[0].len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    let degenerate = !(var.sqrt() > 1e-12 * mean.abs().max(1.0));
    let std = if degenerate { 1.0 } else { var.sqrt() };
    let ys: Vec<f64> = y.iter().map(|v| (v - mean) / std).collect();

    let mut lower = vec![cfg.lengthscale_bounds.0.ln(); d];
    let mut upper = vec![cfg.lengthscale_bounds.1.ln(); d];
    lower.extend([cfg.signal_bounds.0.ln(), cfg.noise_bounds.0.ln()]);
    upper.extend([cfg.signal_bounds.1.ln(), cfg.noise_bounds.1.ln()]);

    let objective = |v: &[f64]| {
        let h = GpHyperparams::from_log(v);
        let (lml, g) = log_marginal_likelihood(&h, x, &ys).ok()?;
        lml.is_finite().then(|| (-lml, g.iter().map(|v| -v).collect()))
    };

    let mut starts = Vec::with_capacity(cfg.restarts.max(1));
    starts.push(GpHyperparams {
        lengthscales: vec![0.5; d],
        signal_variance: 1.0,
        noise_variance: 1e-4,
    });
    while starts.len() < cfg.restarts.max(1) {
        starts.push(GpHyperparams {
            lengthscales: (0..d).map(|_| 10f64.powf(rng.random_range(-1.3..0.3))).collect(),
            signal_variance: 10f64.powf(rng.random_range(-1.0..1.0)),
            noise_variance: 10f64.powf(rng.random_range(-6.0..-1.0)),
        });
    }

    let solver = BoxLbfgs {
        max_iter: 200,
        pg_tol: 1e-6,
        f_rel_tol: 1e-10,
        ..BoxLbfgs::default()
    };
    let mut initial_lml = Vec::with_capacity(starts.len());
    let mut best: Option<(f64, Vec<f64>)> = None;
    for s in &starts {
        let v0: Vec<f64> = s.to_log().iter().zip(lower.iter().zip(&upper)).map(|(v, (l, u))| v.clamp(*l, *u)).collect();
        let Some(m) = solver.minimize(objective, &v0, &lower, &upper) else {
            initial_lml.push(f64::NEG_INFINITY);
            continue;
        };
        initial_lml.push(objective(&v0).map_or(f64::NEG_INFINITY, |(f, _)| -f));
        if best.as_ref().is_none_or(|(b, _)| -m.value > *b) {
            best = Some((-m.value, m.x));
        }
    }
    let Some((final_lml, v)) = best else {
        return Err(Error::numerical("GP fit", "log marginal likelihood undefined at every restart"));
    };
    let hyper = GpHyperparams::from_log(&v);
    let mut k = gram(x, &hyper);
    for i in 0..n {
        k[(i, i)] += hyper.noise_variance;
    }
    let (chol, jitter) = robust_cholesky(&k, "GP fit")?;
    let alpha = chol.solve(&DVector::from_column_slice(&ys));
    Ok(OutputGp {
        hyper,
        mean,
        std,
        x: x.to_vec(),
        chol,
        alpha,
        diag: FitDiagnostics {
            initial_lml,
            final_lml,
            jitter,
            degenerate_column: degenerate,
        },
    })
}

impl GpSurrogate {
    /// Fits one GP per objective to `data`.
    pub fn fit(data: &ObservationSet, bounds: &[Bounds], cfg: &GpConfig, seed: u64) -> Result<Self> {
        if data.len() < 2 {
            return Err(Error::Input(format!("GP fit needs at least 2 observations, got {}", data.len())));
        }
        if bounds.len() != data.dim() {
            return Err(Error::Input("bounds do not match design dimension".into()));
        }
        let x: Vec<Vec<f64>> = data.xs().iter().map(|p| normalize(bounds, p)).collect();
        let mut rng = seed::rng(seed);
        let outputs = (0..data.n_outputs())
            .map(|o| {
                let y: Vec<f64> = data.ys().iter().map(|v| v[o]).collect();
                fit_single(&x, &y, cfg, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            bounds: bounds.to_vec(),
            outputs,
        })
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn hyperparams(&self) -> Vec<GpHyperparams> {
        self.outputs.iter().map(|o| o.hyper.clone()).collect()
    }

    pub fn diagnostics(&self) -> Vec<FitDiagnostics> {
        self.outputs.iter().map(|o| o.diag.clone()).collect()
    }

    /// Posterior predictive of the latent function, in original output units.
    pub fn predict(&self, x: &[f64]) -> Vec<GaussianBelief> {
        let xn = normalize(&self.bounds, x);
        self.outputs
            .iter()
            .map(|o| {
                let ks = o.kvec(&xn);
                let mean = ks.dot(&o.alpha);
                let v = o.chol.l_dirty().solve_lower_triangular(&ks).expect("factor has positive diagonal");
                let var = (o.hyper.signal_variance - v.norm_squared()).max(0.0);
                GaussianBelief {
                    mean: o.mean + o.std * mean,
                    variance: var * o.std * o.std,
                }
            })
            .collect()
    }

    /// Joint posterior mean and covariance over `xs`, per objective.
    pub fn posterior(&self, xs: &[Vec<f64>]) -> Vec<(DVector<f64>, DMatrix<f64>)> {
        let xn: Vec<Vec<f64>> = xs.iter().map(|p| normalize(&self.bounds, p)).collect();
        self.outputs
            .iter()
            .map(|o| {
                let kxs = cross(&o.x, &xn, &o.hyper);
                let mean = kxs.tr_mul(&o.alpha).map(|m| o.mean + o.std * m);
                let v = o.chol.l_dirty().solve_lower_triangular(&kxs).expect("positive diagonal");
                let mut cov = gram(&xn, &o.hyper) - v.tr_mul(&v);
                cov *= o.std * o.std;
                (mean, cov)
            })
            .collect()
    }

    /// `n` exact joint posterior draws over `xs`; each draw is `|xs| x k`.
    pub fn sample_posterior(&self, xs: &[Vec<f64>], n: usize, seed: u64) -> Result<Vec<DMatrix<f64>>> {
        if xs.is_empty() {
            return Err(Error::Input("posterior sampling needs at least one point".into()));
        }
        let mut rng = seed::rng(seed);
        let q = xs.len();
        let mut out = vec![DMatrix::zeros(q, self.outputs.len()); n];
        for (o, (mean, cov)) in self.posterior(xs).into_iter().enumerate() {
            let (chol, _) = robust_cholesky(&cov, "posterior sampling")?;
            let l = chol.l();
            for s in out.iter_mut() {
                let z = DVector::from_fn(q, |_, _| StandardNormal.sample(&mut rng));
                let f = &mean + &l * z;
                s.set_column(o, &f);
            }
        }
        Ok(out)
    }

    /// Precomputes the posterior over a fixed anchor set so that joint draws
    /// over `anchors ∪ {x}` can be extended to any new `x` cheaply.
    pub fn anchored(&self, anchors: &[Vec<f64>]) -> Result<AnchoredPosterior> {
        let an: Vec<Vec<f64>> = anchors.iter().map(|p| normalize(&self.bounds, p)).collect();
        let per = self
            .outputs
            .iter()
            .zip(self.posterior(anchors))
            .map(|(o, (mean, cov))| {
                let (chol, jitter) = robust_cholesky(&cov, "anchored posterior")?;
                let kxa = cross(&o.x, &an, &o.hyper);
                let va = o.chol.l_dirty().solve_lower_triangular(&kxa).expect("positive diagonal");
                Ok(AnchorOutput {
                    mean,
                    l: chol.l(),
                    jitter,
                    va,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AnchoredPosterior {
            model: self.clone(),
            anchors: an,
            per,
        })
    }
}

fn normalize(bounds: &[Bounds], x: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(bounds)
        .map(|(v, b)| if b.width() > 0.0 { (v - b.lower) / b.width() } else { 0.0 })
        .collect()
}

#[derive(Debug, Clone)]
struct AnchorOutput {
    mean: DVector<f64>,
    /// Lower Cholesky factor of the (jittered, de-standardised) anchor covariance.
    l: DMatrix<f64>,
    jitter: f64,
    /// L_train^{-1} K(train, anchors), standardised units.
    va: DMatrix<f64>,
}

/// Posterior conditioned on a fixed anchor set; see [`GpSurrogate::anchored`].
#[derive(Debug, Clone)]
pub struct AnchoredPosterior {
    model: GpSurrogate,
    anchors: Vec<Vec<f64>>,
    per: Vec<AnchorOutput>,
}

/// Per-objective quantities for extending an anchored draw to a new point.
///
/// With anchor draw `f_a = mean_a + L z` and an independent `z_x`, the joint
/// draw at `x` is `mean + w·z + w_x z_x`.
#[derive(Debug, Clone)]
pub struct Extension {
    pub mean: f64,
    pub w: DVector<f64>,
    pub w_x: f64,
}

impl AnchoredPosterior {
    pub fn n_anchors(&self) -> usize {
        self.anchors.len()
    }

    pub fn anchor_mean(&self, o: usize) -> &DVector<f64> {
        &self.per[o].mean
    }

    pub fn anchor_factor(&self, o: usize) -> &DMatrix<f64> {
        &self.per[o].l
    }

    pub fn extend(&self, x: &[f64]) -> Vec<Extension> {
        let xn = normalize(&self.model.bounds, x);
        self.model
            .outputs
            .iter()
            .zip(&self.per)
            .map(|(o, a)| {
                let ks = o.kvec(&xn);
                let v = o.chol.l_dirty().solve_lower_triangular(&ks).expect("positive diagonal");
                let s2 = o.std * o.std;
                let mean = o.mean + o.std * ks.dot(&o.alpha);
                let var = (o.hyper.signal_variance - v.norm_squared()).max(0.0) * s2;
                let k_ax = DVector::from_iterator(
                    self.anchors.len(),
                    self.anchors
                        .iter()
                        .map(|t| o.hyper.signal_variance * matern52(scaled_dist(t, &xn, &o.hyper.lengthscales))),
                );
                let cov_ax = (k_ax - a.va.tr_mul(&v)) * s2;
                let w = a.l.solve_lower_triangular(&cov_ax).expect("positive diagonal");
                let w_x = (var + a.jitter - w.norm_squared()).max(0.0).sqrt();
                Extension { mean, w, w_x }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::OutputProblem;
    use crate::qmc::SobolSequence;

    fn toy(n: usize) -> (ObservationSet, Vec<Bounds>) {
        let b = vec![Bounds::new(0.0, 1.0); 2];
        let mut d = ObservationSet::new(2, 1);
        for p in SobolSequence::new(&b, 4).points(0, n) {
            let y = (3.0 * p[0]).sin() + p[1] * p[1];
            d.push(p.into(), vec![y].into()).unwrap();
        }
        (d, b)
    }

    #[test]
    fn single_point_lml_is_gaussian_density() {
        let h = GpHyperparams {
            lengthscales: vec![0.3],
            signal_variance: 1.7,
            noise_variance: 0.3,
        };
        let (lml, _) = log_marginal_likelihood(&h, &[vec![0.2]], &[0.9]).unwrap();
        let v: f64 = 2.0;
        let expected = -0.5 * 0.81 / v - 0.5 * (2.0 * PI * v).ln();
        assert!((lml - expected).abs() < 1e-12);
    }

    #[test]
    fn duplicate_designs_rejected() {
        let mut d = ObservationSet::new(1, 1);
        d.push(vec![0.5].into(), vec![1.0].into()).unwrap();
        assert!(d.push(vec![0.5 + 1e-13].into(), vec![2.0].into()).is_err());
        assert!(d.push(vec![0.6].into(), vec![f64::NAN].into()).is_err());
    }

    #[test]
    fn two_points_interpolate() {
        let b = vec![Bounds::new(0.0, 1.0)];
        let mut d = ObservationSet::new(1, 1);
        d.push(vec![0.2].into(), vec![1.0].into()).unwrap();
        d.push(vec![0.8].into(), vec![3.0].into()).unwrap();
        let gp = GpSurrogate::fit(&d, &b, &GpConfig::default(), 1).unwrap();
        for (x, y) in [(0.2, 1.0), (0.8, 3.0)] {
            let p = gp.predict(&[x])[0];
            assert!((p.mean - y).abs() < 1e-2, "{p:?}");
        }
    }

    #[test]
    fn constant_column_predicts_constant() {
        let b = vec![Bounds::new(0.0, 1.0)];
        let mut d = ObservationSet::new(1, 1);
        for x in [0.1, 0.4, 0.7, 0.9] {
            d.push(vec![x].into(), vec![2.5].into()).unwrap();
        }
        let gp = GpSurrogate::fit(&d, &b, &GpConfig::default(), 1).unwrap();
        assert!(gp.diagnostics()[0].degenerate_column);
        for x in [0.0, 0.25, 1.0] {
            assert!((gp.predict(&[x])[0].mean - 2.5).abs() < 1e-8);
        }
    }

    #[test]
    fn returned_hyperparameters_beat_every_start() {
        let p = OutputProblem::dtlz2();
        let mut d = ObservationSet::new(3, 2);
        for x in SobolSequence::new(p.bounds(), 9).points(0, 16) {
            let y = p.evaluate_unchecked(&x);
            d.push(x.into(), y.into()).unwrap();
        }
        let gp = GpSurrogate::fit(&d, p.bounds(), &GpConfig::default(), 5).unwrap();
        for diag in gp.diagnostics() {
            assert_eq!(diag.initial_lml.len(), 5);
            for l in &diag.initial_lml {
                assert!(diag.final_lml >= *l - 1e-9);
            }
        }
    }

    #[test]
    fn training_points_reproduced_and_far_points_revert() {
        let (d, b) = toy(12);
        let gp = GpSurrogate::fit(&d, &b, &GpConfig::default(), 3).unwrap();
        for (x, y) in d.xs().iter().zip(d.ys()) {
            let p = gp.predict(x)[0];
            assert!((p.mean - y[0]).abs() <= 1e-3 * y[0].abs().max(1.0), "{} vs {}", p.mean, y[0]);
        }
        let far = gp.predict(&[100.0, 100.0])[0];
        let o = &gp.outputs[0];
        assert!((far.mean - o.mean).abs() < 1e-9);
        assert!((far.variance - o.hyper.signal_variance * o.std * o.std).abs() < 1e-9);
    }

    #[test]
    fn midpoint_variance_below_far_variance() {
        let b = vec![Bounds::new(0.0, 1.0)];
        let mut d = ObservationSet::new(1, 1);
        for (x, y) in [(0.48, 0.2), (0.52, 0.3), (0.1, -0.4), (0.95, 0.9)] {
            d.push(vec![x].into(), vec![y].into()).unwrap();
        }
        let gp = GpSurrogate::fit(&d, &b, &GpConfig::default(), 2).unwrap();
        assert!(gp.predict(&[0.5])[0].variance < gp.predict(&[0.3])[0].variance);
    }

    #[test]
    fn one_point_standardisation_round_trip() {
        // two points, hand-checked: mean 2, std 1; predictions return to original units
        let b = vec![Bounds::new(0.0, 10.0)];
        let mut d = ObservationSet::new(1, 1);
        d.push(vec![0.0].into(), vec![1.0].into()).unwrap();
        d.push(vec![10.0].into(), vec![3.0].into()).unwrap();
        let gp = GpSurrogate::fit(&d, &b, &GpConfig::default(), 0).unwrap();
        assert_eq!(gp.outputs[0].mean, 2.0);
        assert_eq!(gp.outputs[0].std, 1.0);
        assert!((gp.predict(&[0.0])[0].mean - 1.0).abs() < 1e-2);
    }

    #[test]
    fn sampling_is_reproducible_and_consistent() {
        let (d, b) = toy(8);
        let gp = GpSurrogate::fit(&d, &b, &GpConfig::default(), 3).unwrap();
        let q = vec![vec![0.33, 0.71], vec![0.9, 0.05]];
        let a = gp.sample_posterior(&q[..1], 1, 42).unwrap();
        let a2 = gp.sample_posterior(&q[..1], 1, 42).unwrap();
        assert_eq!(a, a2);

        let n = 20_000;
        let s = gp.sample_posterior(&q, n, 7).unwrap();
        for (i, x) in q.iter().enumerate() {
            let p = gp.predict(x)[0];
            let m = s.iter().map(|m| m[(i, 0)]).sum::<f64>() / n as f64;
            let se = (p.variance / n as f64).sqrt();
            assert!((m - p.mean).abs() < 3.0 * se + 1e-9, "{m} vs {}", p.mean);
        }
    }

    #[test]
    fn extension_matches_joint_covariance() {
        let (d, b) = toy(10);
        let gp = GpSurrogate::fit(&d, &b, &GpConfig::default(), 3).unwrap();
        let anchors = vec![vec![0.1, 0.2], vec![0.6, 0.6], vec![0.3, 0.9]];
        let ap = gp.anchored(&anchors).unwrap();
        let x = vec![0.45, 0.5];
        let ext = &ap.extend(&x)[0];
        let mut all = anchors.clone();
        all.push(x.clone());
        let (mean, cov) = &gp.posterior(&all)[0];
        assert!((ext.mean - mean[3]).abs() < 1e-10);
        // reconstructed cross covariance L w equals the joint block
        let cross = ap.anchor_factor(0) * &ext.w;
        for i in 0..3 {
            assert!((cross[i] - cov[(i, 3)]).abs() < 1e-8);
        }
        let var = ext.w.norm_squared() + ext.w_x * ext.w_x;
        assert!((var - cov[(3, 3)]).abs() < 1e-6 * cov[(3, 3)].max(1e-6));
    }
}
