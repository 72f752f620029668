//! Multiplicative Egger regression and funnel-asymmetry diagnostics.
//!
//! The working model is `y_i = mu + beta0 * c_i + sqrt(phi) * s_i * e_i` with
//! weights `w_i = 1/s_i^2`, where the covariate `c_i` is `s_i` (classic
//! Egger) or `1/n_i` (sample-size variant). Two routes fit it:
//!
//! * [`egger_wls`]: closed-form weighted least squares of `y` on `c`.
//! * [`egger_gest`]: root-finding on the estimating equation that makes the
//!   transformed outcomes `y_i - beta0 * c_i` uncorrelated with `c_i`.
//!
//! Both return the same coefficients; the second is what the balance view
//! animates, since `y_i - beta0 * c_i` are the positions of the shifted masses.

use serde::{Deserialize, Serialize};

use crate::dist::{critical_value, test_stat, IntervalOptions, Reference};
use crate::error::{Error, Result};
use crate::solver::{expand_symmetric, Bisection};
use crate::study::{PrecisionMetric, StudySet};

/// One study after the potential-outcome transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformedStudy {
    pub id: String,
    /// `y_i - beta0 * c_i`.
    pub y: f64,
    /// `1 / (sqrt(phi) * s_i)`; `None` marks an unbounded precision (`phi == 0`).
    pub precision: Option<f64>,
    pub included: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EggerFit {
    /// Intercept on the standardized scale: the mean small-study bias.
    pub beta0_hat: f64,
    /// Bias-adjusted effect.
    pub mu_hat: f64,
    pub phi_hat: f64,
    pub se_beta0: f64,
    pub se_mu: f64,
    pub cov_beta0_mu: f64,
    pub stat_beta0: Option<f64>,
    pub p_beta0: Option<f64>,
    pub stat_mu: Option<f64>,
    pub p_mu: Option<f64>,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ci_level: f64,
    pub reference: Reference,
    pub dof: usize,
    pub metric: PrecisionMetric,
    /// `1/s_i^2` in input order; zero for excluded studies.
    pub weights: Vec<f64>,
    pub transformed: Vec<TransformedStudy>,
}

/// Included rows as `(y, s, c)` triples.
fn rows(set: &StudySet, metric: PrecisionMetric) -> Result<Vec<(f64, f64, f64)>> {
    set.included()
        .map(|s| Ok((s.y, s.se, s.covariate(metric)?)))
        .collect()
}

fn check_design(rows: &[(f64, f64, f64)]) -> Result<()> {
    let (lo, hi) = rows
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(r.2), hi.max(r.2))
        });
    if hi - lo <= 1e-12 * hi.abs().max(lo.abs()) {
        return Err(Error::Regression(
            "precision covariate is constant across studies; intercept and slope are collinear"
                .into(),
        ));
    }
    Ok(())
}

fn prepare(set: &StudySet, metric: PrecisionMetric) -> Result<Vec<(f64, f64, f64)>> {
    set.require_k(3, "Egger regression")?;
    let rows = rows(set, metric)?;
    check_design(&rows)?;
    Ok(rows)
}

/// Pearson correlation; `None` when either coordinate has zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return None;
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Correlation between effect size and precision `1/s_i` over included studies.
///
/// `Ok(None)` flags an undefined correlation (constant effects or precisions).
pub fn asymmetry_correlation(set: &StudySet) -> Result<Option<f64>> {
    set.require_k(3, "asymmetry correlation")?;
    let ys: Vec<f64> = set.included().map(|s| s.y).collect();
    let prec: Vec<f64> = set.included().map(|s| 1.0 / s.se).collect();
    Ok(pearson(&ys, &prec))
}

/// Model-based covariance of `(mu, beta0)` at dispersion `phi`:
/// `phi * (X' W X)^-1` with `X = [1, c]`.
struct Covariance {
    var_mu: f64,
    var_beta0: f64,
    cov: f64,
}

fn covariance(rows: &[(f64, f64, f64)], phi: f64) -> Covariance {
    let (mut sw, mut swc) = (0.0, 0.0);
    for &(_, s, c) in rows {
        let w = 1.0 / (s * s);
        sw += w;
        swc += w * c;
    }
    let c_bar = swc / sw;
    let (mut sxx, mut swc2) = (0.0, 0.0);
    for &(_, s, c) in rows {
        let w = 1.0 / (s * s);
        sxx += w * (c - c_bar).powi(2);
        swc2 += w * c * c;
    }
    Covariance {
        var_mu: phi * swc2 / (sw * sxx),
        var_beta0: phi / sxx,
        cov: -phi * c_bar / sxx,
    }
}

fn dispersion(rows: &[(f64, f64, f64)], beta0: f64, mu: f64) -> f64 {
    let q: f64 = rows
        .iter()
        .map(|&(y, s, c)| (y - beta0 * c - mu).powi(2) / (s * s))
        .sum();
    q / (rows.len() as f64 - 2.0)
}

fn assemble(
    set: &StudySet,
    metric: PrecisionMetric,
    rows: &[(f64, f64, f64)],
    beta0: f64,
    mu: f64,
    opts: &IntervalOptions,
) -> Result<EggerFit> {
    opts.validate()?;
    let k = rows.len();
    let dof = k - 2;
    let phi = dispersion(rows, beta0, mu);
    let cov = covariance(rows, phi);
    let (se_mu, se_beta0) = (cov.var_mu.sqrt(), cov.var_beta0.sqrt());

    if metric == PrecisionMetric::InvSe && log::log_enabled!(log::Level::Debug) {
        // Var(mu) times the mean squared within-study variance, as sometimes
        // quoted; it differs from the WLS covariance in general.
        let mean_s2 = rows.iter().map(|r| r.1 * r.1).sum::<f64>() / k as f64;
        let alt = cov.var_mu * mean_s2;
        if (alt - cov.var_beta0).abs() > 1e-8 * cov.var_beta0.abs().max(f64::MIN_POSITIVE) {
            log::debug!(
                "Var(beta0): WLS covariance {} vs Var(mu)*mean(s^2) {}",
                cov.var_beta0,
                alt
            );
        }
    }

    let reference = opts.resolve(Reference::StudentT);
    let df = dof as f64;
    let crit = critical_value(opts.level, reference, df)?;
    let (stat_beta0, p_beta0) = test_stat(beta0, se_beta0, reference, df)?;
    let (stat_mu, p_mu) = test_stat(mu, se_mu, reference, df)?;

    let weights = set
        .studies()
        .iter()
        .map(|s| if s.included { s.weight() } else { 0.0 })
        .collect();
    let transformed = transform_studies(set, metric, beta0, phi)?;

    Ok(EggerFit {
        beta0_hat: beta0,
        mu_hat: mu,
        phi_hat: phi,
        se_beta0,
        se_mu,
        cov_beta0_mu: cov.cov,
        stat_beta0,
        p_beta0,
        stat_mu,
        p_mu,
        ci_low: mu - crit * se_mu,
        ci_high: mu + crit * se_mu,
        ci_level: opts.level,
        reference,
        dof,
        metric,
        weights,
        transformed,
    })
}

fn transform_studies(
    set: &StudySet,
    metric: PrecisionMetric,
    beta0: f64,
    phi: f64,
) -> Result<Vec<TransformedStudy>> {
    set.studies()
        .iter()
        .map(|s| {
            let c = match (s.included, s.covariate(metric)) {
                (_, Ok(c)) => c,
                // excluded rows may lack n; they are only drawn, never fitted
                (false, Err(_)) => s.se,
                (true, Err(e)) => return Err(e),
            };
            let precision = if phi > 0.0 {
                Some(1.0 / (phi.sqrt() * s.se))
            } else {
                None
            };
            Ok(TransformedStudy {
                id: s.id.clone(),
                y: s.y - beta0 * c,
                precision,
                included: s.included,
            })
        })
        .collect()
}

/// Egger regression by weighted least squares of `y` on the covariate.
pub fn egger_wls(
    set: &StudySet,
    metric: PrecisionMetric,
    opts: &IntervalOptions,
) -> Result<EggerFit> {
    let rows = prepare(set, metric)?;
    let (mut sw, mut swc, mut swy) = (0.0, 0.0, 0.0);
    for &(y, s, c) in &rows {
        let w = 1.0 / (s * s);
        sw += w;
        swc += w * c;
        swy += w * y;
    }
    let (c_bar, y_bar) = (swc / sw, swy / sw);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &(y, s, c) in &rows {
        let w = 1.0 / (s * s);
        sxx += w * (c - c_bar).powi(2);
        sxy += w * (c - c_bar) * (y - y_bar);
    }
    if sxx.is_nan() || sxx <= 0.0 {
        return Err(Error::Regression("singular weighted design matrix".into()));
    }
    let beta0 = sxy / sxx;
    let mu = y_bar - beta0 * c_bar;
    assemble(set, metric, &rows, beta0, mu, opts)
}

/// Mean equation solution: weighted mean of `y_i - beta0 * c_i`.
fn profiled_mu(rows: &[(f64, f64, f64)], beta0: f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for &(y, s, c) in rows {
        let w = 1.0 / (s * s);
        num += w * (y - beta0 * c);
        den += w;
    }
    num / den
}

fn g_value(rows: &[(f64, f64, f64)], beta0: f64, mu: f64) -> f64 {
    let c_mean = rows.iter().map(|r| r.2).sum::<f64>() / rows.len() as f64;
    rows.iter()
        .map(|&(y, s, c)| (y - beta0 * c - mu) * (c - c_mean) / (s * s))
        .sum()
}

/// Value of the G-estimation function `sum w_i {y_i(beta0) - mu} (c_i - mean c)`
/// at the supplied parameters, over included studies.
pub fn g_statistic(set: &StudySet, metric: PrecisionMetric, beta0: f64, mu: f64) -> Result<f64> {
    let rows = rows(set, metric)?;
    Ok(g_value(&rows, beta0, mu))
}

/// Mean-equation residual `sum w_i {y_i(beta0) - mu}` over included studies.
pub fn mean_residual(set: &StudySet, metric: PrecisionMetric, beta0: f64, mu: f64) -> Result<f64> {
    let rows = rows(set, metric)?;
    Ok(rows
        .iter()
        .map(|&(y, s, c)| (y - beta0 * c - mu) / (s * s))
        .sum())
}

/// Egger regression by G-estimation: find the `beta0` whose transformed
/// outcomes are weighted-uncorrelated with the covariate, profiling `mu`
/// through the mean equation.
pub fn egger_gest(
    set: &StudySet,
    metric: PrecisionMetric,
    opts: &IntervalOptions,
    solver: &Bisection,
) -> Result<EggerFit> {
    let rows = prepare(set, metric)?;
    let g = |beta0: f64| g_value(&rows, beta0, profiled_mu(&rows, beta0));
    // exact solve: keep bisecting until the bracket collapses in floating point
    let exact = Bisection {
        xtol: 0.0,
        ftol: 0.0,
        ..*solver
    };
    let (lo, hi) = expand_symmetric(g, 0.0, 1.0, 64)?;
    let beta0 = exact.solve(g, lo, hi)?;
    let mu = profiled_mu(&rows, beta0);
    assemble(set, metric, &rows, beta0, mu, opts)
}

/// Transformed pairs `(y_i - beta0 * c_i, 1/(sqrt(phi) * s_i))` in study order.
pub fn potential_outcome_view(fit: &EggerFit, set: &StudySet) -> Result<Vec<TransformedStudy>> {
    if fit.weights.len() != set.len() {
        return Err(Error::Contract(format!(
            "fit covers {} studies but the set has {}",
            fit.weights.len(),
            set.len()
        )));
    }
    transform_studies(set, fit.metric, fit.beta0_hat, fit.phi_hat)
}
