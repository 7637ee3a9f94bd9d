use bope_core::acquisition::{
    eubo_observed, ieubo, select_pair, PairCriterion, PreferenceModel,
};
use bope_core::dm::{preference_probability, respond, DmConfig};
use bope_core::gp::GaussianBelief;
use bope_core::monne::ComparisonSet;
use bope_core::seed;
use bope_core::OutputVector;
use proptest::prelude::*;
use rand::Rng;

/// Belief and member scores looked up by the first coordinate of the output.
struct Table {
    beliefs: Vec<GaussianBelief>,
    scores: Vec<Vec<f64>>,
}

impl PreferenceModel for Table {
    fn belief(&self, y: &[f64]) -> GaussianBelief {
        self.beliefs[y[0] as usize]
    }
    fn member_scores(&self, y: &[f64]) -> Vec<f64> {
        self.scores[y[0] as usize].clone()
    }
}

fn random_state(rng: &mut seed::Rng, n: usize, m: usize) -> (Vec<OutputVector>, Table) {
    let outputs = (0..n).map(|i| OutputVector(vec![i as f64, rng.random()])).collect();
    let table = Table {
        beliefs: (0..n)
            .map(|_| GaussianBelief {
                mean: rng.random_range(-1.0..1.0),
                // some exact zeros exercise the degenerate branch
                variance: if rng.random::<f64>() < 0.2 { 0.0 } else { rng.random_range(0.0..0.5) },
            })
            .collect(),
        scores: (0..n).map(|_| (0..m).map(|_| rng.random_range(-2.0..2.0)).collect()).collect(),
    };
    (outputs, table)
}

fn brute_force(
    outputs: &[OutputVector],
    model: &Table,
    asked: &[(usize, usize)],
    criterion: PairCriterion,
) -> (usize, usize, bool) {
    let value = |i: usize, j: usize| match criterion {
        PairCriterion::Ieubo => ieubo(&outputs[i], &outputs[j], model),
        PairCriterion::Eubo => eubo_observed(&outputs[i], &outputs[j], model),
    };
    let n = outputs.len();
    let mut all: Vec<(usize, usize)> = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            all.push((i, j));
        }
    }
    let open: Vec<(usize, usize)> = all
        .iter()
        .copied()
        .filter(|&(i, j)| !asked.iter().any(|&(a, b)| (a, b) == (i, j) || (a, b) == (j, i)))
        .collect();
    let (pool, fallback) = if open.is_empty() { (all, true) } else { (open, false) };
    let best = pool.iter().map(|&(i, j)| value(i, j)).fold(f64::NEG_INFINITY, f64::max);
    let &(i, j) = pool.iter().find(|&&(i, j)| value(i, j) == best).unwrap();
    (i, j, fallback)
}

#[test]
fn select_pair_matches_brute_force() {
    let mut rng = seed::rng(42);
    for state in 0..100 {
        let n = rng.random_range(2..9);
        let (outputs, model) = random_state(&mut rng, n, 4);
        let mut history = ComparisonSet::new();
        let mut asked = Vec::new();
        let n_asked = rng.random_range(0..=n * (n - 1) / 2);
        while asked.len() < n_asked {
            let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
            if a == b || asked.iter().any(|&(p, q)| (p, q) == (a, b) || (p, q) == (b, a)) {
                continue;
            }
            history.push(outputs[a].clone(), outputs[b].clone(), 1).unwrap();
            asked.push((a, b));
        }
        for criterion in [PairCriterion::Ieubo, PairCriterion::Eubo] {
            let got = select_pair(&outputs, &model, &history, criterion, true).unwrap();
            let (i, j, fallback) = brute_force(&outputs, &model, &asked, criterion);
            assert_eq!((got.i, got.j, got.fallback), (i, j, fallback), "state {state} {criterion:?}");
            let free = select_pair(&outputs, &model, &history, criterion, false).unwrap();
            let (i, j, _) = brute_force(&outputs, &model, &[], criterion);
            assert_eq!((free.i, free.j, free.fallback), (i, j, false));
        }
    }
}

#[test]
fn select_pair_breaks_ties_lexicographically() {
    let outputs: Vec<OutputVector> = (0..4).map(|i| OutputVector(vec![i as f64])).collect();
    let model = Table {
        beliefs: vec![GaussianBelief { mean: 0.0, variance: 0.1 }; 4],
        scores: vec![vec![1.0]; 4],
    };
    for criterion in [PairCriterion::Ieubo, PairCriterion::Eubo] {
        let c = select_pair(&outputs, &model, &ComparisonSet::new(), criterion, true).unwrap();
        assert_eq!((c.i, c.j), (0, 1));
    }
    let one = vec![OutputVector(vec![0.0])];
    assert!(select_pair(&one, &model, &ComparisonSet::new(), PairCriterion::Ieubo, true).is_err());
}

#[test]
fn ieubo_and_eubo_dominate_their_parts() {
    let mut rng = seed::rng(3);
    let (outputs, model) = random_state(&mut rng, 10, 5);
    for a in &outputs {
        for b in &outputs {
            let (ba, bb) = (model.belief(a), model.belief(b));
            assert!(ieubo(a, b, &model) >= ba.mean.max(bb.mean) - 1e-12);
            let (sa, sb) = (model.member_scores(a), model.member_scores(b));
            let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
            assert!(eubo_observed(a, b, &model) >= mean(&sa).max(mean(&sb)) - 1e-12);
            assert_eq!(eubo_observed(a, b, &model), eubo_observed(b, a, &model));
        }
    }
}

#[test]
fn gaussian_dm_is_calibrated() {
    let mut rng = seed::rng(9);
    let n = 40_000;
    for sigma in [0.05, 0.1, 0.5] {
        let cfg = DmConfig::Gaussian { sigma };
        for delta in [-0.2, -0.05, 0.0, 0.03, 0.1, 0.4] {
            let hits = (0..n).filter(|_| respond(delta, 0.0, &cfg, &mut rng).unwrap().label == 1).count();
            let p = preference_probability(delta, &cfg);
            let se = (p * (1.0 - p) / n as f64).sqrt().max(1.0 / n as f64);
            let freq = hits as f64 / n as f64;
            assert!((freq - p).abs() <= 4.0 * se, "sigma {sigma} delta {delta}: {freq} vs {p}");
        }
    }
}

#[test]
fn bradley_terry_dm_is_calibrated() {
    let mut rng = seed::rng(10);
    let cfg = DmConfig::BradleyTerry { beta: 5.0 };
    let n = 40_000;
    for delta in [-0.5, 0.0, 0.2] {
        let hits = (0..n).filter(|_| respond(delta, 0.0, &cfg, &mut rng).unwrap().label == 1).count();
        let p = preference_probability(delta, &cfg);
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((hits as f64 / n as f64 - p).abs() <= 4.0 * se);
    }
}

#[test]
fn error_flags_match_labels() {
    let mut rng = seed::rng(2);
    let cfg = DmConfig::Gaussian { sigma: 0.3 };
    for _ in 0..2000 {
        let (g1, g2) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let r = respond(g1, g2, &cfg, &mut rng).unwrap();
        assert_eq!(r.utility_gap_true, g1 - g2);
        assert_eq!(r.was_error, (g1 - g2) * f64::from(r.label) < 0.0);
    }
}

fn dm_configs() -> impl Strategy<Value = DmConfig> {
    prop_oneof![
        Just(DmConfig::Noiseless),
        (0.001..2.0f64).prop_map(|sigma| DmConfig::Gaussian { sigma }),
        (0.1..50.0f64).prop_map(|beta| DmConfig::BradleyTerry { beta }),
    ]
}

proptest! {
    #[test]
    fn preference_probability_is_antisymmetric(delta in -5.0..5.0f64, cfg in dm_configs()) {
        let p = preference_probability(delta, &cfg);
        let q = preference_probability(-delta, &cfg);
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!((p + q - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn preference_probability_is_monotone(a in -5.0..5.0f64, d in 0.0..3.0f64, cfg in dm_configs()) {
        prop_assert!(preference_probability(a + d, &cfg) >= preference_probability(a, &cfg));
    }
}
