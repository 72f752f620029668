//! Summary-data Mendelian randomization.
//!
//! Each variant contributes a Wald ratio `mu_yg / mu_xg` with first-order
//! standard error `se_yg / |mu_xg|`; the inverse-variance weighted estimate is
//! the fixed-effect pool of those ratios and MR-Egger is Egger regression on
//! them. Associations are taken as already standardized (no allele-frequency
//! modelling).

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::dist::IntervalOptions;
use crate::egger::{egger_wls, EggerFit};
use crate::error::{Error, Result};
use crate::pooling::{fixed_effect, PooledEstimate};
use crate::study::{PrecisionMetric, Study, StudySet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MrVariant {
    pub id: String,
    pub mu_xg: f64,
    pub se_xg: f64,
    pub mu_yg: f64,
    pub se_yg: f64,
}

impl MrVariant {
    pub fn new(
        id: impl Into<String>,
        mu_xg: f64,
        se_xg: f64,
        mu_yg: f64,
        se_yg: f64,
    ) -> Result<Self> {
        let v = MrVariant {
            id: id.into(),
            mu_xg,
            se_xg,
            mu_yg,
            se_yg,
        };
        v.validate()?;
        Ok(v)
    }

    fn validate(&self) -> Result<()> {
        if !self.mu_xg.is_finite() || !self.mu_yg.is_finite() {
            return Err(Error::domain(format!(
                "variant `{}`: non-finite association",
                self.id
            )));
        }
        for (name, se) in [("se_xg", self.se_xg), ("se_yg", self.se_yg)] {
            if !se.is_finite() || se <= 0.0 {
                return Err(Error::domain(format!(
                    "variant `{}`: {name} must be finite and > 0, got {se}",
                    self.id
                )));
            }
        }
        if self.mu_xg == 0.0 {
            return Err(Error::ZeroExposure(self.id.clone()));
        }
        Ok(())
    }

    pub fn wald_ratio(&self) -> f64 {
        self.mu_yg / self.mu_xg
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MrDataset {
    variants: Vec<MrVariant>,
}

impl MrDataset {
    pub fn new(variants: Vec<MrVariant>) -> Result<Self> {
        let mut seen = HashSet::new();
        for v in &variants {
            v.validate()?;
            if !seen.insert(v.id.as_str()) {
                return Err(Error::DuplicateId(v.id.clone()));
            }
        }
        Ok(MrDataset { variants })
    }

    pub fn variants(&self) -> &[MrVariant] {
        &self.variants
    }

    pub fn len(&self) -> usize {
        self.variants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variants.is_empty()
    }

    /// Copy with every variant flipped so that `mu_xg > 0`, plus the number flipped.
    pub fn oriented(&self) -> (MrDataset, usize) {
        let mut flipped = 0;
        let variants = self
            .variants
            .iter()
            .map(|v| {
                let mut v = v.clone();
                if v.mu_xg < 0.0 {
                    v.mu_xg = -v.mu_xg;
                    v.mu_yg = -v.mu_yg;
                    flipped += 1;
                }
                v
            })
            .collect();
        (MrDataset { variants }, flipped)
    }
}

/// Per-variant Wald ratios as a study set (ids carried over).
pub fn wald_ratios(data: &MrDataset) -> Result<StudySet> {
    let studies = data
        .variants
        .iter()
        .map(|v| {
            v.validate()?;
            Study::new(v.id.clone(), v.wald_ratio(), v.se_yg / v.mu_xg.abs())
        })
        .collect::<Result<Vec<_>>>()?;
    StudySet::new(studies)
}

/// Inverse-variance weighted causal estimate.
pub fn ivw(data: &MrDataset, opts: &IntervalOptions) -> Result<PooledEstimate> {
    fixed_effect(&wald_ratios(data)?, opts)
}

/// Between-variant pleiotropy variance implied by the Egger dispersion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PleiotropyEstimate {
    /// `phi - 1`, available when the fit is over-dispersed.
    Estimated { sigma2_beta0: f64 },
    /// `phi <= 1`: no over-dispersion to attribute to pleiotropy.
    NotIdentified { phi_hat: f64 },
}

impl PleiotropyEstimate {
    pub fn from_phi(phi_hat: f64) -> Self {
        if phi_hat > 1.0 {
            PleiotropyEstimate::Estimated {
                sigma2_beta0: phi_hat - 1.0,
            }
        } else {
            PleiotropyEstimate::NotIdentified { phi_hat }
        }
    }

    pub fn sigma2(&self) -> Option<f64> {
        match *self {
            PleiotropyEstimate::Estimated { sigma2_beta0 } => Some(sigma2_beta0),
            PleiotropyEstimate::NotIdentified { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MrEggerFit {
    pub fit: EggerFit,
    pub pleiotropy: PleiotropyEstimate,
    /// Variants whose signs were flipped to make `mu_xg > 0`.
    pub reoriented: usize,
}

/// MR-Egger: Egger regression on oriented Wald ratios.
pub fn mr_egger(data: &MrDataset, opts: &IntervalOptions) -> Result<MrEggerFit> {
    if data.len() < 3 {
        return Err(Error::domain(format!(
            "MR-Egger needs at least 3 variants, got {}",
            data.len()
        )));
    }
    let (oriented, reoriented) = data.oriented();
    let fit = egger_wls(&wald_ratios(&oriented)?, PrecisionMetric::InvSe, opts)?;
    let pleiotropy = PleiotropyEstimate::from_phi(fit.phi_hat);
    Ok(MrEggerFit {
        fit,
        pleiotropy,
        reoriented,
    })
}
