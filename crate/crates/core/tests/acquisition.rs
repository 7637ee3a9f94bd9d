use bope_core::acquisition::{
    expected_max_gaussian, maximize, optimize_qneiuu, AcquisitionConfig, ConstantUtility, Qneiuu, TrueUtility,
    UtilitySampler,
};
use bope_core::gp::{GpConfig, GpSurrogate, ObservationSet};
use bope_core::problems::{Bounds, OutputProblem, UtilityFunction};
use bope_core::qmc::SobolSequence;
use proptest::prelude::*;
use std::collections::BTreeMap;

fn dtlz2_setup(n: usize, seed: u64) -> (OutputProblem, ObservationSet, GpSurrogate, UtilityFunction) {
    let p = OutputProblem::dtlz2();
    let seq = SobolSequence::new(p.bounds(), seed);
    let mut data = ObservationSet::new(p.dim(), p.n_outputs());
    for x in seq.points(0, n) {
        let y = p.evaluate_unchecked(&x);
        data.push(x.into(), y.into()).unwrap();
    }
    let gp = GpSurrogate::fit(&data, p.bounds(), &GpConfig::default(), 11).unwrap();
    let u = UtilityFunction::builtin("Linear", &BTreeMap::new()).unwrap();
    (p, data, gp, u)
}

fn brute_force<U: UtilitySampler>(acq: &Qneiuu<'_, U>, util: &U, x: &[f64]) -> f64 {
    let cand = acq.candidate_draws(x);
    let anchors = acq.anchor_draws();
    let mut total = 0.0;
    let mut count = 0.0;
    for j in 0..util.n_samples() {
        for (k, y) in cand.iter().enumerate() {
            let best = anchors[k].iter().map(|a| util.eval(j, a)).fold(f64::NEG_INFINITY, f64::max);
            total += (util.eval(j, y) - best).max(0.0);
            count += 1.0;
        }
    }
    total / count
}

#[test]
fn value_matches_brute_force_and_is_nonnegative() {
    let (p, data, gp, u) = dtlz2_setup(12, 3);
    let util = TrueUtility(&u);
    let acq = Qneiuu::new(&gp, &util, &data, 64, 5).unwrap();
    for x in SobolSequence::new(p.bounds(), 99).points(0, 50) {
        let v = acq.value(&x);
        assert!(v >= 0.0);
        assert!((v - brute_force(&acq, &util, &x)).abs() <= 1e-12);
    }
}

#[test]
fn value_ignores_observation_order() {
    let (p, data, gp, u) = dtlz2_setup(10, 4);
    let util = TrueUtility(&u);
    let mut reversed = ObservationSet::new(p.dim(), p.n_outputs());
    for (x, y) in data.xs().iter().zip(data.ys()).rev() {
        reversed.push(x.clone(), y.clone()).unwrap();
    }
    let a = Qneiuu::new(&gp, &util, &data, 32, 8).unwrap();
    let b = Qneiuu::new(&gp, &util, &reversed, 32, 8).unwrap();
    for x in SobolSequence::new(p.bounds(), 1).points(0, 20) {
        assert_eq!(a.value(&x).to_bits(), b.value(&x).to_bits());
    }
}

#[test]
fn observed_design_has_no_improvement() {
    let (_, data, gp, u) = dtlz2_setup(12, 6);
    let util = TrueUtility(&u);
    let acq = Qneiuu::new(&gp, &util, &data, 64, 2).unwrap();
    for x in data.xs() {
        assert!(acq.value(x) < 1e-6, "{}", acq.value(x));
    }
}

#[test]
fn constant_utility_gives_zero() {
    let (p, data, gp, _) = dtlz2_setup(8, 1);
    let acq = Qneiuu::new(&gp, &ConstantUtility(2.5), &data, 16, 0).unwrap();
    for x in SobolSequence::new(p.bounds(), 3).points(0, 10) {
        assert_eq!(acq.value(&x), 0.0);
    }
}

#[test]
fn empty_data_is_rejected() {
    let (p, _, gp, u) = dtlz2_setup(6, 1);
    let empty = ObservationSet::new(p.dim(), p.n_outputs());
    assert!(Qneiuu::new(&gp, &TrueUtility(&u), &empty, 8, 0).is_err());
}

#[test]
fn optimizer_beats_raw_samples_and_is_deterministic() {
    let (p, data, gp, u) = dtlz2_setup(12, 9);
    let util = TrueUtility(&u);
    let acq = Qneiuu::new(&gp, &util, &data, 32, 1).unwrap();
    let cfg = AcquisitionConfig {
        raw_samples: 64,
        restarts: 4,
        ..AcquisitionConfig::default()
    };
    let r = optimize_qneiuu(&acq, p.bounds(), &cfg, 17);
    assert!(r.value >= r.raw_best);
    assert_eq!(r.value, acq.value(&r.x));
    for (v, b) in r.x.iter().zip(p.bounds()) {
        assert!(b.contains(*v));
    }
    let again = optimize_qneiuu(&acq, p.bounds(), &cfg, 17);
    assert_eq!(r.x, again.x);
}

#[test]
fn one_dimensional_toy_finds_grid_argmax() {
    let bounds = vec![Bounds::new(0.0, 2.0)];
    let p = OutputProblem::custom("wave", bounds.clone(), 1, |x| vec![(3.0 * x[0]).sin() + 0.3 * x[0]]);
    let mut data = ObservationSet::new(1, 1);
    for x in [0.1, 0.45, 0.9, 1.3, 1.95] {
        data.push(vec![x].into(), p.evaluate_unchecked(&[x]).into()).unwrap();
    }
    let gp = GpSurrogate::fit(&data, &bounds, &GpConfig::default(), 2).unwrap();
    let u = UtilityFunction::custom("id", Some(1), |y| y[0]);
    let util = TrueUtility(&u);
    let acq = Qneiuu::new(&gp, &util, &data, 128, 4).unwrap();
    let (gx, gv) = (0..=4000)
        .map(|i| 2.0 * i as f64 / 4000.0)
        .map(|x| (x, acq.value(&[x])))
        .fold((0.0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    let r = optimize_qneiuu(&acq, &bounds, &AcquisitionConfig::default(), 3);
    assert!(r.value >= gv - 1e-9, "{} < {gv}", r.value);
    assert!((r.x[0] - gx).abs() <= 1e-2, "{} vs {gx}", r.x[0]);
}

#[test]
fn maximize_handles_smooth_quadratic() {
    let bounds = vec![Bounds::new(-1.0, 1.0), Bounds::new(0.0, 3.0)];
    let f = |x: &[f64]| -(x[0] - 0.3).powi(2) - (x[1] - 2.5).powi(2);
    let r = maximize(f, &bounds, &AcquisitionConfig::default(), 0);
    assert!((r.x[0] - 0.3).abs() < 1e-4 && (r.x[1] - 2.5).abs() < 1e-4, "{:?}", r.x);
    assert!(r.warning.is_none());
}

proptest! {
    #[test]
    fn expected_max_is_symmetric_and_dominates(
        m1 in -5.0..5.0f64, s1 in 0.0..3.0f64, m2 in -5.0..5.0f64, s2 in 0.0..3.0f64,
    ) {
        let a = expected_max_gaussian(m1, s1, m2, s2);
        let b = expected_max_gaussian(m2, s2, m1, s1);
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        prop_assert!(a >= m1.max(m2) - 1e-12);
        // E (X - Y)+ <= (m1 - m2)+ + s3 / sqrt(2 pi)
        let s3 = (s1 * s1 + s2 * s2).sqrt();
        prop_assert!(a <= m1.max(m2) + s3 / (2.0 * std::f64::consts::PI).sqrt() + 1e-12);
    }

    #[test]
    fn expected_max_is_monotone_in_means(
        m1 in -5.0..5.0f64, s1 in 0.01..3.0f64, m2 in -5.0..5.0f64, s2 in 0.0..3.0f64, d in 0.0..2.0f64,
    ) {
        prop_assert!(expected_max_gaussian(m1 + d, s1, m2, s2) >= expected_max_gaussian(m1, s1, m2, s2) - 1e-12);
    }

    #[test]
    fn expected_max_is_translation_equivariant(
        m1 in -5.0..5.0f64, s1 in 0.0..3.0f64, m2 in -5.0..5.0f64, s2 in 0.0..3.0f64, c in -10.0..10.0f64,
    ) {
        let a = expected_max_gaussian(m1 + c, s1, m2 + c, s2);
        let b = expected_max_gaussian(m1, s1, m2, s2) + c;
        prop_assert!((a - b).abs() <= 1e-9);
    }
}
