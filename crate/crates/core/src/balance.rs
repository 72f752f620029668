//! The balance ("Meta-Analyzer") rendering model.
//!
//! Each study is a mass hanging at its effect estimate; the pooled estimate is
//! the pivot where the torques cancel and the stand spans the confidence
//! interval. Under additive random effects each mass has a square of side
//! `hole_len` drilled out so that `hole_len^2 + 1/(s^2 + tau^2) = 1/s^2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pooling::{torque, ModelTag};
use crate::registry::{Estimator, Fit, FitOptions};
use crate::study::StudySet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BalanceMass {
    pub id: String,
    /// Horizontal position: `y_i`, or the transformed outcome for Egger fits.
    pub x: f64,
    /// Vertical position: precision on the active scale; `None` if unbounded.
    pub height: Option<f64>,
    pub mass_pct: f64,
    pub hole_len: f64,
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BalanceState {
    pub model: ModelTag,
    pub masses: Vec<BalanceMass>,
    pub pivot: f64,
    pub stand_low: f64,
    pub stand_high: f64,
    pub tau2: f64,
    pub torque_residual: f64,
    /// State before the latest change, drawn as the grey stand.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ghost: Option<Box<BalanceState>>,
}

/// Relative tolerance for the torque balance.
pub const TORQUE_RTOL: f64 = 1e-8;

impl BalanceState {
    pub fn stand_width(&self) -> f64 {
        self.stand_high - self.stand_low
    }

    /// Attach `previous` as the ghost; any ghost it carried is dropped.
    pub fn with_ghost(mut self, mut previous: BalanceState) -> Self {
        previous.ghost = None;
        self.ghost = Some(Box::new(previous));
        self
    }

    /// Active weights implied by the masses (percent scale).
    pub fn torque_scale(&self) -> f64 {
        self.masses
            .iter()
            .filter(|m| !m.excluded)
            .map(|m| m.mass_pct * m.x.abs())
            .sum()
    }
}

fn rel_close(a: f64, b: f64, rtol: f64) -> bool {
    (a - b).abs() <= rtol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Build the balance state for a fit of `set`.
pub fn build_balance(set: &StudySet, fit: &Fit) -> Result<BalanceState> {
    let fit_weights = match fit {
        Fit::Pooled { estimate, .. } => &estimate.weights,
        Fit::Egger(f) => &f.weights,
    };
    if fit_weights.len() != set.len() {
        return Err(Error::Contract(format!(
            "fit covers {} studies but the set has {}",
            fit_weights.len(),
            set.len()
        )));
    }
    let tau2 = match fit {
        Fit::Pooled { heterogeneity, .. } => heterogeneity.tau2,
        Fit::Egger(_) => 0.0,
    };
    let additive = matches!(fit.tag(), ModelTag::ReAdditiveDl | ModelTag::ReAdditivePm);
    let tau2 = if additive { tau2 } else { 0.0 };

    let mut active = Vec::with_capacity(set.len());
    for (s, &w_fit) in set.studies().iter().zip(fit_weights) {
        let w = if s.included {
            1.0 / (s.se * s.se + tau2)
        } else {
            0.0
        };
        // multiplicative fits carry 1/s^2; the common phi cancels from the masses
        if (w_fit == 0.0) != (w == 0.0) || (w > 0.0 && !rel_close(w, w_fit, 1e-9)) {
            return Err(Error::Contract(format!(
                "weight of study `{}` does not match the fit",
                s.id
            )));
        }
        active.push(w);
    }
    let total: f64 = active.iter().sum();

    let (positions, heights): (Vec<f64>, Vec<Option<f64>>) = match fit {
        Fit::Pooled { .. } => set
            .studies()
            .iter()
            .map(|s| (s.y, Some(1.0 / s.se)))
            .unzip(),
        Fit::Egger(f) => f.transformed.iter().map(|t| (t.y, t.precision)).unzip(),
    };

    let pivot = fit.mu_hat();
    let (stand_low, stand_high) = fit.ci();
    let torque_residual = torque(&active, &positions, pivot);
    let scale: f64 = active
        .iter()
        .zip(&positions)
        .map(|(w, x)| w * x.abs())
        .sum();
    if torque_residual.abs() > TORQUE_RTOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Contract(format!(
            "pivot {pivot} does not balance the masses (torque {torque_residual})"
        )));
    }

    let masses = set
        .studies()
        .iter()
        .zip(active.iter().zip(positions.iter().zip(heights)))
        .map(|(s, (&w, (&x, height)))| {
            let v = s.se * s.se;
            BalanceMass {
                id: s.id.clone(),
                x,
                height,
                mass_pct: 100.0 * w / total,
                // 1/v - 1/(v + tau2), written to avoid cancellation
                hole_len: (tau2 / (v * (v + tau2))).sqrt(),
                excluded: !s.included,
            }
        })
        .collect();

    Ok(BalanceState {
        model: fit.tag(),
        masses,
        pivot,
        stand_low,
        stand_high,
        tau2,
        torque_residual,
        ghost: None,
    })
}

/// One leave-one-out refit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LooEntry {
    pub excluded_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<Fit>,
    /// Why no fit was produced (e.g. too few studies remain).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag: Option<String>,
}

/// Refit `model` once per included study with that study excluded.
pub fn leave_one_out(
    set: &StudySet,
    model: &dyn Estimator,
    opts: &FitOptions,
) -> Result<Vec<LooEntry>> {
    let min_k = model.min_k();
    if set.k() < 2 {
        return Err(Error::Domain(format!(
            "leave-one-out needs at least 2 included studies, got {}",
            set.k()
        )));
    }
    set.included()
        .map(|s| {
            let subset = set.excluding(&[s.id.as_str()])?;
            let (fit, flag) = if subset.k() < min_k {
                (
                    None,
                    Some(format!(
                        "{} needs {min_k} studies, {} remain",
                        model.name(),
                        subset.k()
                    )),
                )
            } else {
                match model.fit(&subset, opts) {
                    Ok(f) => (Some(f), None),
                    Err(e) => (None, Some(e.to_string())),
                }
            };
            Ok(LooEntry {
                excluded_id: s.id.clone(),
                fit,
                flag,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::builtin;

    fn fit(name: &str, set: &StudySet) -> Fit {
        builtin()
            .get(name)
            .unwrap()
            .fit(set, &FitOptions::default())
            .unwrap()
    }

    #[test]
    fn symmetric_pair() {
        let set = StudySet::from_pairs(&[(-1.0, 1.0), (1.0, 1.0)]).unwrap();
        let b = build_balance(&set, &fit("fixed", &set)).unwrap();
        assert_eq!(b.pivot, 0.0);
        assert_eq!(b.masses[0].mass_pct, 50.0);
        assert_eq!(b.masses[1].mass_pct, 50.0);
        assert!(b.masses.iter().all(|m| m.hole_len == 0.0));
        assert!(b.stand_low < 0.0 && b.stand_high > 0.0);
    }

    #[test]
    fn pm_holes() {
        let set = StudySet::from_pairs(&[(-1.0, 0.3), (1.0, 0.5), (0.2, 0.2), (2.0, 0.9)]).unwrap();
        let f = fit("re_additive_pm", &set);
        let b = build_balance(&set, &f).unwrap();
        assert!(b.tau2 > 0.0);
        for (m, s) in b.masses.iter().zip(set.studies()) {
            let v = s.se * s.se;
            let expect = 1.0 / v - 1.0 / (v + b.tau2);
            assert!((m.hole_len.powi(2) - expect).abs() < 1e-12 * (1.0 / v));
        }
    }

    #[test]
    fn mismatched_fit_rejected() {
        let set = StudySet::from_pairs(&[(-1.0, 1.0), (1.0, 1.0)]).unwrap();
        let other = StudySet::from_pairs(&[(-1.0, 1.0), (1.0, 1.0), (0.0, 2.0)]).unwrap();
        let err = build_balance(&set, &fit("fixed", &other)).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
        let shifted = StudySet::from_pairs(&[(-1.0, 0.5), (1.0, 1.0)]).unwrap();
        assert!(matches!(
            build_balance(&set, &fit("fixed", &shifted)),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn excluded_masses() {
        let set = StudySet::from_pairs(&[(-1.0, 1.0), (1.0, 1.0), (5.0, 0.1)])
            .unwrap()
            .excluding(&["3"])
            .unwrap();
        let b = build_balance(&set, &fit("fixed", &set)).unwrap();
        assert!(b.masses[2].excluded);
        assert_eq!(b.masses[2].mass_pct, 0.0);
        assert_eq!(b.pivot, 0.0);
    }

    #[test]
    fn ghost_keeps_previous_pivot() {
        let set = StudySet::from_pairs(&[(-1.0, 1.0), (1.0, 1.0), (3.0, 0.5)]).unwrap();
        let before = build_balance(&set, &fit("fixed", &set)).unwrap();
        let ex = set.excluding(&["3"]).unwrap();
        let after = build_balance(&ex, &fit("fixed", &ex))
            .unwrap()
            .with_ghost(before.clone());
        assert_eq!(after.ghost.as_ref().unwrap().pivot, before.pivot);
    }

    #[test]
    fn loo_two_identical() {
        let set = StudySet::from_pairs(&[(0.4, 0.5), (0.4, 0.5)]).unwrap();
        let m = builtin().get("fixed").unwrap();
        let out = leave_one_out(&set, m.as_ref(), &FitOptions::default()).unwrap();
        assert_eq!(out.len(), 2);
        for e in &out {
            assert_eq!(e.fit.as_ref().unwrap().mu_hat(), 0.4);
        }
    }

    #[test]
    fn loo_flags_too_few() {
        let set = StudySet::from_pairs(&[(0.4, 0.5), (0.1, 0.3), (0.9, 0.2)]).unwrap();
        let m = builtin().get("egger").unwrap();
        let out = leave_one_out(&set, m.as_ref(), &FitOptions::default()).unwrap();
        assert!(out.iter().all(|e| e.fit.is_none() && e.flag.is_some()));
    }
}
