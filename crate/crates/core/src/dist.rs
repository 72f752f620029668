//! Reference distributions for intervals and two-sided p-values.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    Normal,
    StudentT,
}

impl std::str::FromStr for Reference {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "z" | "normal" => Ok(Reference::Normal),
            "t" | "student_t" => Ok(Reference::StudentT),
            other => Err(Error::Validation(format!(
                "unknown interval reference `{other}`"
            ))),
        }
    }
}

/// Confidence level plus an optional reference override.
///
/// With no override, pooling models use the normal and Egger fits use t(k-2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalOptions {
    pub level: f64,
    pub reference: Option<Reference>,
}

impl Default for IntervalOptions {
    fn default() -> Self {
        IntervalOptions {
            level: 0.95,
            reference: None,
        }
    }
}

impl IntervalOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Validation(format!(
                "confidence level must lie in (0, 1), got {}",
                self.level
            )));
        }
        Ok(())
    }

    pub(crate) fn resolve(&self, default: Reference) -> Reference {
        self.reference.unwrap_or(default)
    }
}

fn students_t(dof: f64) -> Result<StudentsT> {
    if dof.is_nan() || dof <= 0.0 {
        return Err(Error::domain(format!(
            "t reference needs positive degrees of freedom, got {dof}"
        )));
    }
    StudentsT::new(0.0, 1.0, dof).map_err(|e| Error::domain(e.to_string()))
}

/// Two-sided critical value for `level`.
pub fn critical_value(level: f64, reference: Reference, dof: f64) -> Result<f64> {
    let p = 0.5 + 0.5 * level;
    match reference {
        Reference::Normal => Ok(Normal::standard().inverse_cdf(p)),
        Reference::StudentT => Ok(students_t(dof)?.inverse_cdf(p)),
    }
}

/// Two-sided p-value for a test statistic.
pub fn two_sided_p(stat: f64, reference: Reference, dof: f64) -> Result<f64> {
    if stat.is_nan() {
        return Err(Error::domain("test statistic is NaN"));
    }
    let a = stat.abs();
    let tail = match reference {
        Reference::Normal => Normal::standard().sf(a),
        Reference::StudentT => students_t(dof)?.sf(a),
    };
    Ok((2.0 * tail).min(1.0))
}

/// Statistic and p-value pair; both `None` when the standard error is zero.
pub(crate) fn test_stat(
    est: f64,
    se: f64,
    reference: Reference,
    dof: f64,
) -> Result<(Option<f64>, Option<f64>)> {
    if se > 0.0 {
        let t = est / se;
        Ok((Some(t), Some(two_sided_p(t, reference, dof)?)))
    } else {
        Ok((None, None))
    }
}
