//! Fixed-effect and random-effects pooling, Cochran's Q and heterogeneity.
//!
//! Every pooled estimate is the weighted centre of mass
//! `mu = sum(w_i y_i) / sum(w_i)`; the models differ only in the weights and
//! in how the variance of `mu` is scaled:
//!
//! | model                | weight              | Var(mu)            |
//! |----------------------|---------------------|--------------------|
//! | fixed                | `1/s^2`             | `1/sum w`          |
//! | additive (DL / PM)   | `1/(s^2 + tau^2)`   | `1/sum w`          |
//! | multiplicative       | `1/(phi s^2)`       | `phi / sum(1/s^2)` |

use serde::{Deserialize, Serialize};

use crate::dist::{critical_value, test_stat, IntervalOptions, Reference};
use crate::error::{Error, Result};
use crate::solver::{expand_upper, Bisection};
use crate::study::StudySet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelTag {
    Fixed,
    ReAdditiveDl,
    ReAdditivePm,
    ReMultiplicative,
    Egger,
}

impl ModelTag {
    pub const ALL: [ModelTag; 5] = [
        ModelTag::Fixed,
        ModelTag::ReAdditiveDl,
        ModelTag::ReAdditivePm,
        ModelTag::ReMultiplicative,
        ModelTag::Egger,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelTag::Fixed => "fixed",
            ModelTag::ReAdditiveDl => "re_additive_dl",
            ModelTag::ReAdditivePm => "re_additive_pm",
            ModelTag::ReMultiplicative => "re_multiplicative",
            ModelTag::Egger => "egger",
        }
    }

    /// Fewest included studies the model can be fitted to.
    pub fn min_k(self) -> usize {
        match self {
            ModelTag::Fixed => 1,
            ModelTag::ReAdditiveDl | ModelTag::ReAdditivePm | ModelTag::ReMultiplicative => 2,
            ModelTag::Egger => 3,
        }
    }
}

impl std::fmt::Display for ModelTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelTag::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown model `{s}`")))
    }
}

/// Pooled estimate of the common (or mean) effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PooledEstimate {
    pub model: ModelTag,
    pub mu_hat: f64,
    pub se_mu: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ci_level: f64,
    pub reference: Reference,
    /// `mu_hat / se_mu`; absent when `se_mu == 0`.
    pub stat: Option<f64>,
    pub p_value: Option<f64>,
    /// Per-study weight in input order; zero for excluded studies.
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Heterogeneity {
    pub k: usize,
    /// Cochran's Q about the fixed-effect estimate.
    pub q: f64,
    pub i2: f64,
    /// Between-study variance used by the model (0 unless additive).
    pub tau2: f64,
    /// Multiplicative dispersion; multiplicative model only.
    pub phi: Option<f64>,
    /// Typical within-study variance `(k-1) / (S1 - S2/S1)`; needs k >= 2.
    pub s2_typ: Option<f64>,
}

/// Bisection settings for the Paule-Mandel solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmConfig {
    pub bisection: Bisection,
    pub max_doublings: u32,
}

impl Default for PmConfig {
    fn default() -> Self {
        PmConfig {
            bisection: Bisection::default(),
            max_doublings: 64,
        }
    }
}

fn check_finite(set: &StudySet) -> Result<()> {
    for s in set.included() {
        if !s.y.is_finite() || !s.se.is_finite() || s.se <= 0.0 {
            return Err(Error::domain(format!(
                "study `{}` has non-finite or invalid values",
                s.id
            )));
        }
    }
    Ok(())
}

/// Weights in input order (zero for excluded studies) from a per-variance map.
fn weights_with(set: &StudySet, f: impl Fn(f64) -> f64) -> Vec<f64> {
    set.studies()
        .iter()
        .map(|s| if s.included { f(s.se * s.se) } else { 0.0 })
        .collect()
}

/// Weighted mean of the included `y`, clamped into their range to absorb rounding.
pub(crate) fn weighted_mean(set: &StudySet, weights: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (s, &w) in set.studies().iter().zip(weights) {
        if s.included {
            num += w * s.y;
            den += w;
            lo = lo.min(s.y);
            hi = hi.max(s.y);
        }
    }
    (num / den).clamp(lo, hi)
}

fn pooled(
    set: &StudySet,
    model: ModelTag,
    weights: Vec<f64>,
    variance: f64,
    opts: &IntervalOptions,
) -> Result<PooledEstimate> {
    opts.validate()?;
    let k = set.k();
    let mu_hat = weighted_mean(set, &weights);
    let se_mu = variance.sqrt();
    let reference = opts.resolve(Reference::Normal);
    let dof = k as f64 - 1.0;
    let crit = critical_value(opts.level, reference, dof)?;
    let (stat, p_value) = test_stat(mu_hat, se_mu, reference, dof)?;
    Ok(PooledEstimate {
        model,
        mu_hat,
        se_mu,
        ci_low: mu_hat - crit * se_mu,
        ci_high: mu_hat + crit * se_mu,
        ci_level: opts.level,
        reference,
        stat,
        p_value,
        weights,
    })
}

/// Inverse-variance fixed-effect estimate.
pub fn fixed_effect(set: &StudySet, opts: &IntervalOptions) -> Result<PooledEstimate> {
    set.require_k(1, "fixed-effect pooling")?;
    check_finite(set)?;
    let weights = weights_with(set, |v| 1.0 / v);
    let total: f64 = weights.iter().sum();
    pooled(set, ModelTag::Fixed, weights, 1.0 / total, opts)
}

/// Cochran's Q about `mu`: `sum (y_i - mu)^2 / s_i^2` over included studies.
pub fn cochran_q(set: &StudySet, mu: f64) -> Result<f64> {
    if !mu.is_finite() {
        return Err(Error::domain("Q evaluated at a non-finite mean"));
    }
    set.require_k(1, "Cochran's Q")?;
    Ok(set
        .included()
        .map(|s| (s.y - mu).powi(2) / (s.se * s.se))
        .sum())
}

/// Generalized Q at `tau2` with the mean profiled out. Returns `(mu(tau2), Q(tau2))`.
pub fn generalized_q(set: &StudySet, tau2: f64) -> (f64, f64) {
    let weights = weights_with(set, |v| 1.0 / (v + tau2));
    let mu = weighted_mean(set, &weights);
    let q = set
        .studies()
        .iter()
        .zip(&weights)
        .filter(|(s, _)| s.included)
        .map(|(s, w)| w * (s.y - mu).powi(2))
        .sum();
    (mu, q)
}

/// `(S1, S2)` = sums of `1/s^2` and `1/s^4` over included studies.
fn weight_moments(set: &StudySet) -> (f64, f64) {
    set.included().fold((0.0, 0.0), |(a, b), s| {
        let w = s.weight();
        (a + w, b + w * w)
    })
}

/// Q, I^2 and s2_typ; `tau2` and `phi` left at their fixed-effect values.
fn base_heterogeneity(set: &StudySet) -> Result<Heterogeneity> {
    let k = set.k();
    let fe = fixed_effect(set, &IntervalOptions::default())?;
    let q = cochran_q(set, fe.mu_hat)?;
    let df = k as f64 - 1.0;
    let i2 = if q > df { (q - df) / q } else { 0.0 };
    let s2_typ = if k >= 2 {
        let (s1, s2) = weight_moments(set);
        Some(df / (s1 - s2 / s1))
    } else {
        None
    };
    Ok(Heterogeneity {
        k,
        q,
        i2,
        tau2: 0.0,
        phi: None,
        s2_typ,
    })
}

/// Heterogeneity summary for the fixed-effect model (tau2 = 0).
pub fn fixed_heterogeneity(set: &StudySet) -> Result<Heterogeneity> {
    set.require_k(1, "heterogeneity")?;
    check_finite(set)?;
    base_heterogeneity(set)
}

/// DerSimonian-Laird moment estimate of tau^2.
pub fn dl_tau2(set: &StudySet) -> Result<Heterogeneity> {
    set.require_k(2, "DerSimonian-Laird")?;
    check_finite(set)?;
    let mut het = base_heterogeneity(set)?;
    let (s1, s2) = weight_moments(set);
    let df = het.k as f64 - 1.0;
    het.tau2 = ((het.q - df) / (s1 - s2 / s1)).max(0.0);
    Ok(het)
}

/// Additive random-effects estimate at a given tau^2.
pub fn additive_at(
    set: &StudySet,
    tau2: f64,
    model: ModelTag,
    opts: &IntervalOptions,
) -> Result<PooledEstimate> {
    if !(tau2 >= 0.0 && tau2.is_finite()) {
        return Err(Error::domain(format!(
            "tau2 must be finite and >= 0, got {tau2}"
        )));
    }
    set.require_k(1, "additive pooling")?;
    check_finite(set)?;
    let weights = weights_with(set, |v| 1.0 / (v + tau2));
    let total: f64 = weights.iter().sum();
    pooled(set, model, weights, 1.0 / total, opts)
}

/// Random-effects fit with tau^2 from DerSimonian-Laird.
pub fn dl_fit(set: &StudySet, opts: &IntervalOptions) -> Result<(PooledEstimate, Heterogeneity)> {
    let het = dl_tau2(set)?;
    let est = additive_at(set, het.tau2, ModelTag::ReAdditiveDl, opts)?;
    Ok((est, het))
}

/// Paule-Mandel fit: solves the weight, mean and generalized-Q equations jointly.
pub fn pm_fit(
    set: &StudySet,
    opts: &IntervalOptions,
    cfg: &PmConfig,
) -> Result<(PooledEstimate, Heterogeneity)> {
    set.require_k(2, "Paule-Mandel")?;
    check_finite(set)?;
    let mut het = base_heterogeneity(set)?;
    let target = het.k as f64 - 1.0;
    let excess = |tau2: f64| generalized_q(set, tau2).1 - target;

    het.tau2 = if excess(0.0) <= 0.0 {
        0.0
    } else {
        let ys: Vec<f64> = set.included().map(|s| s.y).collect();
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let var_y = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (ys.len() as f64 - 1.0);
        let max_v = set.included().map(|s| s.se * s.se).fold(0.0, f64::max);
        let hi = expand_upper(excess, 0.0, var_y + max_v, cfg.max_doublings)?;
        cfg.bisection.solve(excess, 0.0, hi)?
    };
    let est = additive_at(set, het.tau2, ModelTag::ReAdditivePm, opts)?;
    Ok((est, het))
}

/// Multiplicative random-effects fit with `phi = Q / (k-1)`.
pub fn multiplicative_fit(
    set: &StudySet,
    opts: &IntervalOptions,
) -> Result<(PooledEstimate, Heterogeneity)> {
    set.require_k(2, "multiplicative random effects")?;
    check_finite(set)?;
    let mut het = base_heterogeneity(set)?;
    let phi = het.q / (het.k as f64 - 1.0);
    het.phi = Some(phi);
    let weights = weights_with(set, |v| 1.0 / v);
    let total: f64 = weights.iter().sum();
    let est = pooled(set, ModelTag::ReMultiplicative, weights, phi / total, opts)?;
    Ok((est, het))
}

/// Torque about `pivot`: `sum w_i (x_i - pivot)` over the given positions.
pub fn torque(weights: &[f64], positions: &[f64], pivot: f64) -> f64 {
    weights
        .iter()
        .zip(positions)
        .map(|(w, x)| w * (x - pivot))
        .sum()
}
