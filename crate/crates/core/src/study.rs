//! Summary-data inputs: one `(y, se)` row per study.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which per-study quantity plays the role of the small-study covariate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecisionMetric {
    /// Standard error `s_i` (classic Egger regression).
    #[default]
    InvSe,
    /// Reciprocal sample size `1 / n_i`.
    InvN,
}

impl PrecisionMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            PrecisionMetric::InvSe => "inv_se",
            PrecisionMetric::InvN => "inv_n",
        }
    }
}

impl std::str::FromStr for PrecisionMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inv_se" => Ok(Self::InvSe),
            "inv_n" => Ok(Self::InvN),
            other => Err(Error::Validation(format!(
                "unknown precision metric `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Study {
    pub id: String,
    pub y: f64,
    pub se: f64,
    /// Sample size, needed only for the `inv_n` metric.
    pub n: Option<f64>,
    pub included: bool,
}

impl Study {
    pub fn new(id: impl Into<String>, y: f64, se: f64) -> Result<Self> {
        let id = id.into();
        if !y.is_finite() {
            return Err(Error::domain(format!(
                "study `{id}`: effect estimate is not finite"
            )));
        }
        if !se.is_finite() || se <= 0.0 {
            return Err(Error::domain(format!(
                "study `{id}`: standard error must be finite and > 0, got {se}"
            )));
        }
        Ok(Study {
            id,
            y,
            se,
            n: None,
            included: true,
        })
    }

    pub fn with_n(mut self, n: f64) -> Result<Self> {
        if !n.is_finite() || n <= 0.0 {
            return Err(Error::domain(format!(
                "study `{}`: sample size must be finite and > 0, got {n}",
                self.id
            )));
        }
        self.n = Some(n);
        Ok(self)
    }

    /// Fixed-effect (inverse-variance) weight.
    pub fn weight(&self) -> f64 {
        1.0 / (self.se * self.se)
    }

    /// The covariate `c_i` that the Egger intercept multiplies.
    pub fn covariate(&self, metric: PrecisionMetric) -> Result<f64> {
        match metric {
            PrecisionMetric::InvSe => Ok(self.se),
            PrecisionMetric::InvN => self
                .n
                .map(|n| 1.0 / n)
                .ok_or_else(|| Error::domain(format!("study `{}` has no sample size", self.id))),
        }
    }
}

/// Ordered collection of studies with unique ids.
///
/// Studies flagged as excluded stay in the set (so they can be drawn greyed
/// out) but take no part in any fit.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StudySet {
    studies: Vec<Study>,
}

impl StudySet {
    pub fn new(studies: Vec<Study>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(studies.len());
        for s in &studies {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::DuplicateId(s.id.clone()));
            }
        }
        Ok(StudySet { studies })
    }

    /// Build from `(y, se)` pairs with ids `"1"`, `"2"`, ...
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        let studies = pairs
            .iter()
            .enumerate()
            .map(|(i, &(y, se))| Study::new((i + 1).to_string(), y, se))
            .collect::<Result<Vec<_>>>()?;
        Self::new(studies)
    }

    pub fn studies(&self) -> &[Study] {
        &self.studies
    }

    pub fn len(&self) -> usize {
        self.studies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.studies.is_empty()
    }

    pub fn included(&self) -> impl Iterator<Item = &Study> + '_ {
        self.studies.iter().filter(|s| s.included)
    }

    /// Number of included studies.
    pub fn k(&self) -> usize {
        self.included().count()
    }

    pub fn get(&self, id: &str) -> Option<&Study> {
        self.studies.iter().find(|s| s.id == id)
    }

    /// Copy of the set with the given ids marked excluded. Unknown ids are an error.
    pub fn excluding<S: AsRef<str>>(&self, ids: &[S]) -> Result<Self> {
        let mut out = self.clone();
        for id in ids {
            let id = id.as_ref();
            let study = out
                .studies
                .iter_mut()
                .find(|s| s.id == id)
                .ok_or_else(|| Error::UnknownId(id.to_string()))?;
            study.included = false;
        }
        Ok(out)
    }

    /// Copy of the set with the given id's inclusion flag flipped.
    pub fn toggled(&self, id: &str) -> Result<Self> {
        let mut out = self.clone();
        let study = out
            .studies
            .iter_mut()
            .find(|s| s.id == id)
            .ok_or_else(|| Error::UnknownId(id.to_string()))?;
        study.included = !study.included;
        Ok(out)
    }

    /// Copy of the set with every `y` multiplied by `c` and every `se` by `|c|`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let mut out = self.clone();
        for s in &mut out.studies {
            s.y *= c;
            s.se *= c.abs();
            if !(s.se > 0.0 && s.se.is_finite() && s.y.is_finite()) {
                return Err(Error::domain("scaling produced an invalid study"));
            }
        }
        Ok(out)
    }

    pub(crate) fn require_k(&self, min: usize, what: &str) -> Result<usize> {
        let k = self.k();
        if k < min {
            return Err(Error::domain(format!(
                "{what} needs at least {min} included studies, got {k}"
            )));
        }
        Ok(k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_se() {
        assert!(Study::new("a", 1.0, 0.0).is_err());
        assert!(Study::new("a", 1.0, -1.0).is_err());
        assert!(Study::new("a", 1.0, f64::NAN).is_err());
        assert!(Study::new("a", f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn rejects_duplicate_ids() {
        let a = Study::new("a", 1.0, 1.0).unwrap();
        let err = StudySet::new(vec![a.clone(), a]).unwrap_err();
        assert_eq!(err, Error::DuplicateId("a".into()));
    }

    #[test]
    fn exclusion_and_toggle() {
        let set = StudySet::from_pairs(&[(0.0, 1.0), (1.0, 1.0), (2.0, 1.0)]).unwrap();
        let ex = set.excluding(&["2"]).unwrap();
        assert_eq!(ex.k(), 2);
        assert_eq!(ex.len(), 3);
        assert_eq!(ex.toggled("2").unwrap(), set);
        assert_eq!(
            set.excluding(&["9"]).unwrap_err(),
            Error::UnknownId("9".into())
        );
    }

    #[test]
    fn covariate_needs_n_under_inv_n() {
        let s = Study::new("a", 1.0, 0.5).unwrap();
        assert_eq!(s.covariate(PrecisionMetric::InvSe).unwrap(), 0.5);
        assert!(s.covariate(PrecisionMetric::InvN).is_err());
        let s = s.with_n(40.0).unwrap();
        assert_eq!(s.covariate(PrecisionMetric::InvN).unwrap(), 0.025);
    }
}
