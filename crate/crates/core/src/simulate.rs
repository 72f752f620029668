//! Seeded synthetic data generators.
//!
//! All models share one draw sequence per study (`s_i`, then `e_i`, then an
//! auxiliary `h_i`), so nested models produce identical output for the same
//! seed when the extra parameters are at their null values. Replicates use
//! separate ChaCha streams of the same seed, so results do not depend on the
//! order in which replicates are generated.
//!
//! | model                  | y_i                                         |
//! |------------------------|---------------------------------------------|
//! | `fixed`                | `mu + s e`                                  |
//! | `additive`             | `mu + s e + tau h`                          |
//! | `multiplicative`       | `mu + sqrt(phi) s e`                        |
//! | `egger`                | `mu + beta0 s + s e`                        |
//! | `egger_multiplicative` | `mu + beta0 s + sqrt(phi) s e`              |
//! | `pleiotropy`           | `mu + beta0 s + s e + sigma_beta0 s h`      |

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mr::{MrDataset, MrVariant};
use crate::study::{Study, StudySet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimModel {
    Fixed,
    Additive,
    Multiplicative,
    Egger,
    EggerMultiplicative,
    Pleiotropy,
}

impl std::str::FromStr for SimModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "fixed" => SimModel::Fixed,
            "additive" => SimModel::Additive,
            "multiplicative" => SimModel::Multiplicative,
            "egger" => SimModel::Egger,
            "egger_multiplicative" => SimModel::EggerMultiplicative,
            "pleiotropy" => SimModel::Pleiotropy,
            other => {
                return Err(Error::Validation(format!(
                    "unknown simulation model `{other}`"
                )))
            }
        })
    }
}

/// Law for the standard errors `s_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum SeLaw {
    Uniform { lo: f64, hi: f64 },
    LogUniform { lo: f64, hi: f64 },
}

impl Default for SeLaw {
    fn default() -> Self {
        SeLaw::Uniform { lo: 0.05, hi: 1.0 }
    }
}

impl SeLaw {
    fn bounds(&self) -> (f64, f64) {
        match *self {
            SeLaw::Uniform { lo, hi } | SeLaw::LogUniform { lo, hi } => (lo, hi),
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        let u: f64 = rng.random();
        match *self {
            SeLaw::Uniform { lo, hi } => lo + (hi - lo) * u,
            SeLaw::LogUniform { lo, hi } => (lo.ln() + (hi.ln() - lo.ln()) * u).exp(),
        }
    }
}

/// Distribution of the standardized pleiotropy term (unit variance either way).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PleiotropyLaw {
    #[default]
    Normal,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    pub mu: f64,
    pub tau2: f64,
    pub phi: f64,
    pub beta0: f64,
    pub sigma2_beta0: f64,
    pub se_law: SeLaw,
    pub pleiotropy_law: PleiotropyLaw,
    /// Instrument strength for MR output: `se_xg = mu_xg / sqrt(instrument_f)`.
    pub instrument_f: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            mu: 0.0,
            tau2: 0.0,
            phi: 1.0,
            beta0: 0.0,
            sigma2_beta0: 0.0,
            se_law: SeLaw::default(),
            pleiotropy_law: PleiotropyLaw::Normal,
            instrument_f: 100.0,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Domain(m));
        if !self.mu.is_finite() || !self.beta0.is_finite() {
            return bad("mu and beta0 must be finite".into());
        }
        if !(self.tau2 >= 0.0 && self.tau2.is_finite()) {
            return bad(format!("tau2 must be >= 0, got {}", self.tau2));
        }
        if !(self.phi > 0.0 && self.phi.is_finite()) {
            return bad(format!("phi must be > 0, got {}", self.phi));
        }
        if !(self.sigma2_beta0 >= 0.0 && self.sigma2_beta0.is_finite()) {
            return bad(format!(
                "sigma2_beta0 must be >= 0, got {}",
                self.sigma2_beta0
            ));
        }
        if !(self.instrument_f > 0.0 && self.instrument_f.is_finite()) {
            return bad(format!(
                "instrument_f must be > 0, got {}",
                self.instrument_f
            ));
        }
        let (lo, hi) = self.se_law.bounds();
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return bad(format!(
                "standard-error law needs 0 < lo <= hi, got [{lo}, {hi}]"
            ));
        }
        Ok(())
    }
}

/// Generator for replicate `replicate` of `seed`.
pub fn rng_for(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

/// Draw `k` `(y, s)` pairs from `model`.
fn draw_pairs(model: SimModel, p: &SimParams, k: usize, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    // neutral values, then switch on what the model uses
    let (mut beta0, mut phi, mut tau, mut sigma) = (0.0, 1.0, 0.0, 0.0);
    match model {
        SimModel::Fixed => {}
        SimModel::Additive => tau = p.tau2.sqrt(),
        SimModel::Multiplicative => phi = p.phi,
        SimModel::Egger => beta0 = p.beta0,
        SimModel::EggerMultiplicative => {
            beta0 = p.beta0;
            phi = p.phi;
        }
        SimModel::Pleiotropy => {
            beta0 = p.beta0;
            sigma = p.sigma2_beta0.sqrt();
        }
    }
    let sd_e = phi.sqrt();
    (0..k)
        .map(|_| {
            let s = p.se_law.draw(rng);
            let e: f64 = rng.sample(StandardNormal);
            let h: f64 = match p.pleiotropy_law {
                PleiotropyLaw::Normal => rng.sample(StandardNormal),
                // uniform on [-sqrt 3, sqrt 3] has unit variance
                PleiotropyLaw::Uniform => (2.0 * rng.random::<f64>() - 1.0) * 3f64.sqrt(),
            };
            let y = p.mu + beta0 * s + sd_e * s * e + tau * h + sigma * s * h;
            (y, s)
        })
        .collect()
}

/// Simulate a study set of size `k`.
pub fn simulate(model: SimModel, params: &SimParams, k: usize, seed: u64) -> Result<StudySet> {
    simulate_replicate(model, params, k, seed, 0)
}

/// Simulate replicate `replicate` of `seed`; replicate 0 is [`simulate`].
pub fn simulate_replicate(
    model: SimModel,
    params: &SimParams,
    k: usize,
    seed: u64,
    replicate: u64,
) -> Result<StudySet> {
    params.validate()?;
    if k == 0 {
        return Err(Error::domain("k must be >= 1"));
    }
    let mut rng = rng_for(seed, replicate);
    StudySet::from_pairs(&draw_pairs(model, params, k, &mut rng))
}

/// Simulate summary MR associations under the pleiotropy model.
///
/// With `se_yg = 1` and `mu_xg = 1/s_i`, the Wald ratios reproduce the
/// `(y_i, s_i)` of [`simulate_replicate`] for the `pleiotropy` model, i.e.
/// `mu_yg = mu * mu_xg + beta0 + e_i + psi_i`.
pub fn simulate_mr(params: &SimParams, k: usize, seed: u64, replicate: u64) -> Result<MrDataset> {
    let set = simulate_replicate(SimModel::Pleiotropy, params, k, seed, replicate)?;
    let variants = set
        .studies()
        .iter()
        .map(|s: &Study| {
            let mu_xg = 1.0 / s.se;
            MrVariant::new(
                format!("v{}", s.id),
                mu_xg,
                mu_xg / params.instrument_f.sqrt(),
                s.y * mu_xg,
                1.0,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    MrDataset::new(variants)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let p = SimParams::default();
        assert_eq!(
            simulate(SimModel::Fixed, &p, 20, 7).unwrap(),
            simulate(SimModel::Fixed, &p, 20, 7).unwrap()
        );
        assert_ne!(
            simulate_replicate(SimModel::Fixed, &p, 20, 7, 0).unwrap(),
            simulate_replicate(SimModel::Fixed, &p, 20, 7, 1).unwrap()
        );
    }

    #[test]
    fn additive_with_zero_tau_nests_fixed() {
        let p = SimParams {
            mu: 0.3,
            tau2: 0.0,
            ..Default::default()
        };
        assert_eq!(
            simulate(SimModel::Additive, &p, 50, 11).unwrap(),
            simulate(SimModel::Fixed, &p, 50, 11).unwrap()
        );
    }

    #[test]
    fn egger_multiplicative_null_nests_fixed() {
        let p = SimParams {
            mu: -0.2,
            beta0: 0.0,
            phi: 1.0,
            ..Default::default()
        };
        assert_eq!(
            simulate(SimModel::EggerMultiplicative, &p, 50, 3).unwrap(),
            simulate(SimModel::Fixed, &p, 50, 3).unwrap()
        );
    }

    #[test]
    fn invalid_params() {
        let bad = [
            SimParams {
                tau2: -0.1,
                ..Default::default()
            },
            SimParams {
                phi: 0.0,
                ..Default::default()
            },
            SimParams {
                sigma2_beta0: -1.0,
                ..Default::default()
            },
            SimParams {
                se_law: SeLaw::Uniform { lo: 0.0, hi: 1.0 },
                ..Default::default()
            },
        ];
        for p in bad {
            assert!(matches!(
                simulate(SimModel::Fixed, &p, 5, 1),
                Err(Error::Domain(_))
            ));
        }
        assert!(simulate(SimModel::Fixed, &SimParams::default(), 0, 1).is_err());
    }

    #[test]
    fn se_law_bounds() {
        let p = SimParams {
            se_law: SeLaw::LogUniform { lo: 0.1, hi: 0.4 },
            ..Default::default()
        };
        let set = simulate(SimModel::Fixed, &p, 200, 5).unwrap();
        assert!(set.studies().iter().all(|s| (0.1..=0.4).contains(&s.se)));
    }

    #[test]
    fn mr_wald_ratios_match_study_form() {
        let p = SimParams {
            mu: 0.5,
            beta0: 0.1,
            sigma2_beta0: 0.25,
            ..Default::default()
        };
        let set = simulate_replicate(SimModel::Pleiotropy, &p, 30, 9, 4).unwrap();
        let mr = simulate_mr(&p, 30, 9, 4).unwrap();
        let wald = crate::mr::wald_ratios(&mr).unwrap();
        for (a, b) in set.studies().iter().zip(wald.studies()) {
            assert!((a.y - b.y).abs() < 1e-12 * a.y.abs().max(1.0));
            assert!((a.se - b.se).abs() < 1e-15);
        }
    }
}
