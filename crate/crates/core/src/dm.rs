//! Simulated decision maker.

use crate::{normal, Error, Result};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum DmConfig {
    /// Deterministic sign of the utility gap; exact ties answer +1.
    Noiseless,
    /// Gaussian noise added to the utility gap before taking its sign.
    Gaussian { sigma: f64 },
    /// Logistic choice probability `1 / (1 + exp(-beta * delta))`.
    BradleyTerry { beta: f64 },
    /// Answers come from a person through the session service.
    LiveHuman,
}

impl Default for DmConfig {
    fn default() -> Self {
        DmConfig::Gaussian { sigma: 0.1 }
    }
}

impl DmConfig {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DmConfig::Gaussian { sigma } if !(sigma >= 0.0 && sigma.is_finite()) => {
                Err(Error::Config(format!("dm.sigma must be finite and >= 0, got {sigma}")))
            }
            DmConfig::BradleyTerry { beta } if !(beta > 0.0 && beta.is_finite()) => {
                Err(Error::Config(format!("dm.beta must be finite and > 0, got {beta}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreferenceResponse {
    /// +1 when the first output is preferred, -1 otherwise.
    pub label: i8,
    pub utility_gap_true: f64,
    pub was_error: bool,
}

/// Probability that the first item is preferred when `delta = g1 - g2`.
pub fn preference_probability(delta: f64, cfg: &DmConfig) -> f64 {
    let step = || match delta.partial_cmp(&0.0) {
        Some(std::cmp::Ordering::Greater) => 1.0,
        Some(std::cmp::Ordering::Less) => 0.0,
        _ => 0.5,
    };
    match *cfg {
        DmConfig::Gaussian { sigma } if sigma > 0.0 => normal::cdf(delta / sigma),
        DmConfig::BradleyTerry { beta } => {
            // symmetric form keeps p(d) + p(-d) = 1 exact
            if delta >= 0.0 {
                1.0 / (1.0 + (-beta * delta).exp())
            } else {
                1.0 - 1.0 / (1.0 + (beta * delta).exp())
            }
        }
        _ => step(),
    }
}

/// Simulated answer to "do you prefer the output with utility `g1` over the
/// one with utility `g2`?".
pub fn respond<R: Rng + ?Sized>(g1: f64, g2: f64, cfg: &DmConfig, rng: &mut R) -> Result<PreferenceResponse> {
    if !(g1.is_finite() && g2.is_finite()) {
        return Err(Error::Input(format!("utilities must be finite, got {g1} and {g2}")));
    }
    let delta = g1 - g2;
    let prefers_first = match *cfg {
        DmConfig::Noiseless => delta >= 0.0,
        DmConfig::Gaussian { sigma } => {
            let eps = if sigma > 0.0 {
                Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?.sample(rng)
            } else {
                0.0
            };
            delta + eps >= 0.0
        }
        DmConfig::BradleyTerry { .. } => rng.random::<f64>() < preference_probability(delta, cfg),
        DmConfig::LiveHuman => {
            return Err(Error::State("a live human decision maker cannot be simulated".into()));
        }
    };
    let label = if prefers_first { 1 } else { -1 };
    Ok(PreferenceResponse {
        label,
        utility_gap_true: delta,
        was_error: (delta > 0.0 && label < 0) || (delta < 0.0 && label > 0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn noiseless_examples() {
        let mut rng = seed::rng(0);
        let r = respond(2.0, 1.0, &DmConfig::Noiseless, &mut rng).unwrap();
        assert_eq!((r.label, r.was_error), (1, false));
        assert_eq!(respond(1.0, 1.0, &DmConfig::Noiseless, &mut rng).unwrap().label, 1);
        assert_eq!(respond(0.0, 1.0, &DmConfig::Noiseless, &mut rng).unwrap().label, -1);
        assert!(respond(f64::NAN, 1.0, &DmConfig::Noiseless, &mut rng).is_err());
        assert!(respond(0.0, 1.0, &DmConfig::LiveHuman, &mut rng).is_err());
    }

    #[test]
    fn probability_limits() {
        for cfg in [DmConfig::Gaussian { sigma: 1.0 }, DmConfig::BradleyTerry { beta: 1.8 }] {
            assert_eq!(preference_probability(0.0, &cfg), 0.5);
            assert!(preference_probability(1e6, &cfg) > 1.0 - 1e-12);
        }
        assert_eq!(preference_probability(0.3, &DmConfig::Gaussian { sigma: 0.0 }), 1.0);
        assert_eq!(preference_probability(-0.3, &DmConfig::Noiseless), 0.0);
    }

    #[test]
    fn invalid_configs() {
        assert!(DmConfig::Gaussian { sigma: -1.0 }.validate().is_err());
        assert!(DmConfig::BradleyTerry { beta: 0.0 }.validate().is_err());
        assert!(DmConfig::default().validate().is_ok());
    }

    #[test]
    fn serde_shape() {
        let s = serde_json::to_string(&DmConfig::Gaussian { sigma: 0.1 }).unwrap();
        assert_eq!(s, r#"{"model":"gaussian","sigma":0.1}"#);
    }
}
