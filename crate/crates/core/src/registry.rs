//! Named estimators behind one trait, selected at runtime by model name.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::dist::IntervalOptions;
use crate::egger::{egger_gest, egger_wls, EggerFit};
use crate::error::{Error, Result};
use crate::pooling::{
    dl_fit, fixed_effect, fixed_heterogeneity, multiplicative_fit, pm_fit, Heterogeneity, ModelTag,
    PmConfig, PooledEstimate,
};
use crate::solver::Bisection;
use crate::study::{PrecisionMetric, StudySet};

/// Result of fitting any registered model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Fit {
    Pooled {
        estimate: PooledEstimate,
        heterogeneity: Heterogeneity,
    },
    Egger(EggerFit),
}

impl Fit {
    pub fn tag(&self) -> ModelTag {
        match self {
            Fit::Pooled { estimate, .. } => estimate.model,
            Fit::Egger(_) => ModelTag::Egger,
        }
    }

    /// Pooled (or bias-adjusted) effect.
    pub fn mu_hat(&self) -> f64 {
        match self {
            Fit::Pooled { estimate, .. } => estimate.mu_hat,
            Fit::Egger(f) => f.mu_hat,
        }
    }

    pub fn ci(&self) -> (f64, f64) {
        match self {
            Fit::Pooled { estimate, .. } => (estimate.ci_low, estimate.ci_high),
            Fit::Egger(f) => (f.ci_low, f.ci_high),
        }
    }

    pub fn heterogeneity(&self) -> Option<&Heterogeneity> {
        match self {
            Fit::Pooled { heterogeneity, .. } => Some(heterogeneity),
            Fit::Egger(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FitOptions {
    pub interval: IntervalOptions,
    pub metric: PrecisionMetric,
    pub pm: PmConfig,
    pub bisection: Bisection,
}

pub trait Estimator: Send + Sync {
    /// Registry key.
    fn name(&self) -> &'static str;
    fn tag(&self) -> ModelTag;
    fn fit(&self, set: &StudySet, opts: &FitOptions) -> Result<Fit>;

    fn min_k(&self) -> usize {
        self.tag().min_k()
    }
}

pub struct FixedEffect;
pub struct DerSimonianLaird;
pub struct PauleMandel;
pub struct Multiplicative;
pub struct EggerWls;
pub struct EggerGEstimation;

impl Estimator for FixedEffect {
    fn name(&self) -> &'static str {
        "fixed"
    }
    fn tag(&self) -> ModelTag {
        ModelTag::Fixed
    }
    fn fit(&self, set: &StudySet, opts: &FitOptions) -> Result<Fit> {
        Ok(Fit::Pooled {
            estimate: fixed_effect(set, &opts.interval)?,
            heterogeneity: fixed_heterogeneity(set)?,
        })
    }
}

impl Estimator for DerSimonianLaird {
    fn name(&self) -> &'static str {
        "re_additive_dl"
    }
    fn tag(&self) -> ModelTag {
        ModelTag::ReAdditiveDl
    }
    fn fit(&self, set: &StudySet, opts: &FitOptions) -> Result<Fit> {
        let (estimate, heterogeneity) = dl_fit(set, &opts.interval)?;
        Ok(Fit::Pooled {
            estimate,
            heterogeneity,
        })
    }
}

impl Estimator for PauleMandel {
    fn name(&self) -> &'static str {
        "re_additive_pm"
    }
    fn tag(&self) -> ModelTag {
        ModelTag::ReAdditivePm
    }
    fn fit(&self, set: &StudySet, opts: &FitOptions) -> Result<Fit> {
        let (estimate, heterogeneity) = pm_fit(set, &opts.interval, &opts.pm)?;
        Ok(Fit::Pooled {
            estimate,
            heterogeneity,
        })
    }
}

impl Estimator for Multiplicative {
    fn name(&self) -> &'static str {
        "re_multiplicative"
    }
    fn tag(&self) -> ModelTag {
        ModelTag::ReMultiplicative
    }
    fn fit(&self, set: &StudySet, opts: &FitOptions) -> Result<Fit> {
        let (estimate, heterogeneity) = multiplicative_fit(set, &opts.interval)?;
        Ok(Fit::Pooled {
            estimate,
            heterogeneity,
        })
    }
}

impl Estimator for EggerWls {
    fn name(&self) -> &'static str {
        "egger"
    }
    fn tag(&self) -> ModelTag {
        ModelTag::Egger
    }
    fn fit(&self, set: &StudySet, opts: &FitOptions) -> Result<Fit> {
        Ok(Fit::Egger(egger_wls(set, opts.metric, &opts.interval)?))
    }
}

impl Estimator for EggerGEstimation {
    fn name(&self) -> &'static str {
        "egger_gest"
    }
    fn tag(&self) -> ModelTag {
        ModelTag::Egger
    }
    fn fit(&self, set: &StudySet, opts: &FitOptions) -> Result<Fit> {
        Ok(Fit::Egger(egger_gest(
            set,
            opts.metric,
            &opts.interval,
            &opts.bisection,
        )?))
    }
}

#[derive(Clone, Default)]
pub struct ModelRegistry {
    models: BTreeMap<String, Arc<dyn Estimator>>,
}

impl ModelRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::new();
        r.register(Arc::new(FixedEffect));
        r.register(Arc::new(DerSimonianLaird));
        r.register(Arc::new(PauleMandel));
        r.register(Arc::new(Multiplicative));
        r.register(Arc::new(EggerWls));
        r.register(Arc::new(EggerGEstimation));
        r
    }

    pub fn register(&mut self, model: Arc<dyn Estimator>) {
        self.models.insert(model.name().to_string(), model);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Estimator>> {
        self.models.get(name).cloned().ok_or_else(|| {
            Error::Validation(format!(
                "unknown model `{name}` (known: {})",
                self.names().join(", ")
            ))
        })
    }

    /// The registered estimator for a tag (the closed-form route for Egger).
    pub fn for_tag(&self, tag: ModelTag) -> Result<Arc<dyn Estimator>> {
        self.get(tag.as_str())
    }

    pub fn names(&self) -> Vec<&str> {
        self.models.keys().map(String::as_str).collect()
    }
}

/// Shared registry of the built-in models.
pub fn builtin() -> &'static ModelRegistry {
    static REGISTRY: OnceLock<ModelRegistry> = OnceLock::new();
    REGISTRY.get_or_init(ModelRegistry::with_builtins)
}
