//! Request handling shared by the command line and the HTTP service.
//!
//! Both front ends build one of the request types below and call the same
//! function, so their outputs are byte-identical for identical requests.

use serde::{Deserialize, Serialize};

use crate::balance::{build_balance, leave_one_out};
use crate::dist::{IntervalOptions, Reference};
use crate::error::{Error, Result};
use crate::io::{parse_mr, parse_studies, Envelope, Format, MrSummary};
use crate::mr::{ivw, mr_egger, wald_ratios, MrDataset};
use crate::pooling::fixed_heterogeneity;
use crate::registry::{builtin, Fit, FitOptions};
use crate::study::{PrecisionMetric, StudySet};

/// Where the data for a request comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// JSON row objects, as in the JSON file format.
    Inline(serde_json::Value),
    /// CSV text including the header line.
    Csv(String),
    File {
        path: String,
        format: Format,
    },
}

impl DatasetSource {
    fn load(&self) -> Result<(Vec<u8>, Format)> {
        match self {
            DatasetSource::Inline(v) => Ok((
                serde_json::to_vec(v).map_err(|e| Error::Format(e.to_string()))?,
                Format::Json,
            )),
            DatasetSource::Csv(text) => Ok((text.as_bytes().to_vec(), Format::Csv)),
            DatasetSource::File { path, format } => std::fs::read(path)
                .map(|b| (b, *format))
                .map_err(|e| Error::Validation(format!("cannot read `{path}`: {e}"))),
        }
    }

    pub fn studies(&self) -> Result<StudySet> {
        let (bytes, format) = self.load()?;
        parse_studies(&bytes, format)
    }

    pub fn mr(&self) -> Result<MrDataset> {
        let (bytes, format) = self.load()?;
        parse_mr(&bytes, format)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tau2Method {
    Dl,
    Pm,
}

impl std::str::FromStr for Tau2Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dl" => Ok(Tau2Method::Dl),
            "pm" => Ok(Tau2Method::Pm),
            other => Err(Error::Validation(format!("unknown tau2 method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RequestOptions {
    pub exclude_ids: Vec<String>,
    pub precision_metric: PrecisionMetric,
    pub ci_level: f64,
    pub ci_reference: Option<Reference>,
    pub tau2_method: Option<Tau2Method>,
}

impl Default for RequestOptions {
    fn default() -> Self {
        RequestOptions {
            exclude_ids: Vec::new(),
            precision_metric: PrecisionMetric::InvSe,
            ci_level: 0.95,
            ci_reference: None,
            tau2_method: None,
        }
    }
}

impl RequestOptions {
    fn interval(&self) -> Result<IntervalOptions> {
        let i = IntervalOptions {
            level: self.ci_level,
            reference: self.ci_reference,
        };
        i.validate()?;
        Ok(i)
    }
}

fn default_model() -> String {
    "fixed".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisRequest {
    pub dataset: DatasetSource,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default)]
    pub options: RequestOptions,
}

/// Map the requested model name and options onto a registry key.
fn resolve_model(model: &str, opts: &RequestOptions, warnings: &mut Vec<String>) -> Result<String> {
    let tau2 = opts.tau2_method;
    let name = match (model, tau2) {
        ("re_additive", None | Some(Tau2Method::Pm)) => "re_additive_pm",
        ("re_additive", Some(Tau2Method::Dl)) => "re_additive_dl",
        ("re_additive_dl", Some(Tau2Method::Pm)) | ("re_additive_pm", Some(Tau2Method::Dl)) => {
            return Err(Error::Validation(format!(
                "model `{model}` conflicts with tau2_method `{}`",
                if tau2 == Some(Tau2Method::Pm) {
                    "pm"
                } else {
                    "dl"
                }
            )))
        }
        (m, Some(_)) if !m.starts_with("re_additive") => {
            warnings.push(format!("tau2_method is ignored for model `{m}`"));
            m
        }
        (m, _) => m,
    };
    builtin().get(name)?;
    if opts.precision_metric != PrecisionMetric::InvSe && !name.starts_with("egger") {
        warnings.push(format!("precision_metric is ignored for model `{name}`"));
    }
    Ok(name.to_string())
}

struct Prepared {
    model: String,
    set: StudySet,
    opts: FitOptions,
    warnings: Vec<String>,
}

fn prepare(req: &AnalysisRequest) -> Result<Prepared> {
    let mut warnings = Vec::new();
    let model = resolve_model(&req.model, &req.options, &mut warnings)?;
    let interval = req.options.interval()?;
    let set = req.dataset.studies()?.excluding(&req.options.exclude_ids)?;
    let opts = FitOptions {
        interval,
        metric: req.options.precision_metric,
        ..Default::default()
    };
    Ok(Prepared {
        model,
        set,
        opts,
        warnings,
    })
}

fn fit_envelope(p: &Prepared) -> Result<Envelope> {
    let estimator = builtin().get(&p.model)?;
    let fit = estimator.fit(&p.set, &p.opts)?;
    let balance = build_balance(&p.set, &fit)?;
    let mut env = Envelope::new(p.model.clone(), fit, Some(balance));
    env.warnings = p.warnings.clone();
    Ok(env)
}

/// Fit one model and return its envelope with the balance state.
pub fn analyze(req: &AnalysisRequest) -> Result<Envelope> {
    fit_envelope(&prepare(req)?)
}

/// Egger fit with the potential-outcome balance view. The closed-form route is
/// used unless `egger_gest` is requested explicitly.
pub fn egger(req: &AnalysisRequest) -> Result<Envelope> {
    let mut req = req.clone();
    let mut warnings = Vec::new();
    if !req.model.starts_with("egger") {
        if req.model != default_model() {
            warnings.push(format!("model `{}` replaced by `egger`", req.model));
        }
        req.model = "egger".into();
    }
    let mut p = prepare(&req)?;
    p.warnings.splice(0..0, warnings);
    fit_envelope(&p)
}

/// Full fit plus one refit per excluded study.
pub fn sensitivity(req: &AnalysisRequest) -> Result<Envelope> {
    let p = prepare(req)?;
    let mut env = fit_envelope(&p)?;
    let estimator = builtin().get(&p.model)?;
    env.leave_one_out = Some(leave_one_out(&p.set, estimator.as_ref(), &p.opts)?);
    Ok(env)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MrMethod {
    Ivw,
    Egger,
}

impl std::str::FromStr for MrMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ivw" => Ok(MrMethod::Ivw),
            "egger" => Ok(MrMethod::Egger),
            other => Err(Error::Validation(format!("unknown MR method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MrOptions {
    pub ci_level: f64,
    pub ci_reference: Option<Reference>,
}

impl Default for MrOptions {
    fn default() -> Self {
        MrOptions {
            ci_level: 0.95,
            ci_reference: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MrRequest {
    pub dataset: DatasetSource,
    pub method: MrMethod,
    #[serde(default)]
    pub options: MrOptions,
}

/// IVW or MR-Egger on summary associations.
pub fn mendelian(req: &MrRequest) -> Result<Envelope> {
    let interval = IntervalOptions {
        level: req.options.ci_level,
        reference: req.options.ci_reference,
    };
    interval.validate()?;
    let data = req.dataset.mr()?;
    let (model, fit, set, summary) = match req.method {
        MrMethod::Ivw => {
            let set = wald_ratios(&data)?;
            let fit = Fit::Pooled {
                estimate: ivw(&data, &interval)?,
                heterogeneity: fixed_heterogeneity(&set)?,
            };
            let summary = MrSummary {
                variants: data.len(),
                reoriented: 0,
                pleiotropy: None,
            };
            ("ivw", fit, set, summary)
        }
        MrMethod::Egger => {
            let (oriented, _) = data.oriented();
            let set = wald_ratios(&oriented)?;
            let out = mr_egger(&data, &interval)?;
            let summary = MrSummary {
                variants: data.len(),
                reoriented: out.reoriented,
                pleiotropy: Some(out.pleiotropy),
            };
            ("mr_egger", Fit::Egger(out.fit), set, summary)
        }
    };
    let balance = build_balance(&set, &fit)?;
    let mut env = Envelope::new(model, fit, Some(balance));
    env.mr = Some(summary);
    Ok(env)
}
