//! Study and MR file formats plus the versioned result envelope.
//!
//! CSV layouts are fixed: `id,y,se[,n]` for studies and
//! `id,mu_xg,se_xg,mu_yg,se_yg` for MR summary data, comma separated, UTF-8,
//! header on the first line. JSON inputs are arrays of row objects with the
//! same field names; unknown fields are rejected.

use serde::{Deserialize, Serialize};

use crate::balance::{BalanceState, LooEntry};
use crate::egger::EggerFit;
use crate::error::{Error, Result};
use crate::mr::{MrDataset, MrVariant, PleiotropyEstimate};
use crate::pooling::{Heterogeneity, PooledEstimate};
use crate::registry::Fit;
use crate::study::{Study, StudySet};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Validation(format!("unknown format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyRow {
    pub id: String,
    pub y: f64,
    pub se: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<f64>,
}

impl StudyRow {
    fn into_study(self, row: usize) -> Result<Study> {
        let field_err = |field: &str, message: String| Error::Row {
            row,
            field: field.into(),
            message,
        };
        if self.id.is_empty() {
            return Err(field_err("id", "empty id".into()));
        }
        if !self.y.is_finite() {
            return Err(field_err("y", "must be finite".into()));
        }
        if !(self.se.is_finite() && self.se > 0.0) {
            return Err(field_err(
                "se",
                format!("must be finite and > 0, got {}", self.se),
            ));
        }
        let study = Study::new(self.id, self.y, self.se)?;
        match self.n {
            Some(n) if !(n.is_finite() && n > 0.0) => {
                Err(field_err("n", format!("must be finite and > 0, got {n}")))
            }
            Some(n) => study.with_n(n),
            None => Ok(study),
        }
    }
}

fn parse_f64(raw: &str, row: usize, field: &str) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|_| Error::Row {
        row,
        field: field.into(),
        message: format!("not a number: `{raw}`"),
    })
}

fn csv_reader(bytes: &[u8]) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(bytes)
}

fn check_header(reader: &mut csv::Reader<&[u8]>, allowed: &[&[&str]]) -> Result<usize> {
    let header = reader.headers().map_err(|e| Error::Format(e.to_string()))?;
    let cols: Vec<&str> = header.iter().collect();
    allowed
        .iter()
        .find(|a| a[..] == cols[..])
        .map(|a| a.len())
        .ok_or_else(|| {
            Error::Format(format!(
                "unexpected header `{}`; expected one of: {}",
                cols.join(","),
                allowed
                    .iter()
                    .map(|a| a.join(","))
                    .collect::<Vec<_>>()
                    .join(" | ")
            ))
        })
}

fn csv_records(reader: &mut csv::Reader<&[u8]>) -> Result<Vec<(usize, csv::StringRecord)>> {
    reader
        .records()
        .enumerate()
        .map(|(i, r)| {
            r.map(|rec| (i + 1, rec)).map_err(|e| Error::Row {
                row: i + 1,
                field: "*".into(),
                message: e.to_string(),
            })
        })
        .collect()
}

fn json_rows<T: serde::de::DeserializeOwned>(bytes: &[u8]) -> Result<Vec<(usize, T)>> {
    let values: Vec<serde_json::Value> =
        serde_json::from_slice(bytes).map_err(|e| Error::Format(e.to_string()))?;
    values
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            serde_json::from_value(v)
                .map(|t| (i + 1, t))
                .map_err(|e| Error::Row {
                    row: i + 1,
                    field: "*".into(),
                    message: e.to_string(),
                })
        })
        .collect()
}

/// Parse a study file, preserving row order.
pub fn parse_studies(bytes: &[u8], format: Format) -> Result<StudySet> {
    let rows: Vec<(usize, StudyRow)> = match format {
        Format::Csv => {
            let mut reader = csv_reader(bytes);
            let width = check_header(&mut reader, &[&["id", "y", "se"], &["id", "y", "se", "n"]])?;
            csv_records(&mut reader)?
                .into_iter()
                .map(|(row, rec)| {
                    let n = match rec.get(3) {
                        Some(raw) if width == 4 && !raw.is_empty() => {
                            Some(parse_f64(raw, row, "n")?)
                        }
                        _ => None,
                    };
                    Ok((
                        row,
                        StudyRow {
                            id: rec[0].to_string(),
                            y: parse_f64(&rec[1], row, "y")?,
                            se: parse_f64(&rec[2], row, "se")?,
                            n,
                        },
                    ))
                })
                .collect::<Result<_>>()?
        }
        Format::Json => json_rows(bytes)?,
    };
    if rows.is_empty() {
        return Err(Error::Domain("input contains no studies".into()));
    }
    let studies = rows
        .into_iter()
        .map(|(row, r)| r.into_study(row))
        .collect::<Result<Vec<_>>>()?;
    StudySet::new(studies)
}

fn num(x: f64) -> String {
    // shortest representation that parses back to the same bits
    format!("{x:?}")
}

/// Write a study set in the given format (inclusion flags are not part of the file).
pub fn serialize_studies(set: &StudySet, format: Format) -> Result<Vec<u8>> {
    let with_n = set.studies().iter().any(|s| s.n.is_some());
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec!["id", "y", "se"];
            if with_n {
                header.push("n");
            }
            w.write_record(&header)
                .map_err(|e| Error::Format(e.to_string()))?;
            for s in set.studies() {
                let mut rec = vec![s.id.clone(), num(s.y), num(s.se)];
                if with_n {
                    rec.push(s.n.map(num).unwrap_or_default());
                }
                w.write_record(&rec)
                    .map_err(|e| Error::Format(e.to_string()))?;
            }
            w.into_inner().map_err(|e| Error::Format(e.to_string()))
        }
        Format::Json => {
            let rows: Vec<StudyRow> = set
                .studies()
                .iter()
                .map(|s| StudyRow {
                    id: s.id.clone(),
                    y: s.y,
                    se: s.se,
                    n: s.n,
                })
                .collect();
            let mut out = serde_json::to_vec(&rows).map_err(|e| Error::Format(e.to_string()))?;
            out.push(b'\n');
            Ok(out)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MrRow {
    pub id: String,
    pub mu_xg: f64,
    pub se_xg: f64,
    pub mu_yg: f64,
    pub se_yg: f64,
}

/// Parse MR summary associations, preserving row order.
pub fn parse_mr(bytes: &[u8], format: Format) -> Result<MrDataset> {
    let rows: Vec<(usize, MrRow)> = match format {
        Format::Csv => {
            let mut reader = csv_reader(bytes);
            check_header(&mut reader, &[&["id", "mu_xg", "se_xg", "mu_yg", "se_yg"]])?;
            csv_records(&mut reader)?
                .into_iter()
                .map(|(row, rec)| {
                    Ok((
                        row,
                        MrRow {
                            id: rec[0].to_string(),
                            mu_xg: parse_f64(&rec[1], row, "mu_xg")?,
                            se_xg: parse_f64(&rec[2], row, "se_xg")?,
                            mu_yg: parse_f64(&rec[3], row, "mu_yg")?,
                            se_yg: parse_f64(&rec[4], row, "se_yg")?,
                        },
                    ))
                })
                .collect::<Result<_>>()?
        }
        Format::Json => json_rows(bytes)?,
    };
    if rows.is_empty() {
        return Err(Error::Domain("input contains no variants".into()));
    }
    let variants = rows
        .into_iter()
        .map(|(row, r)| {
            let row_err = |field: &str, message: String| Error::Row {
                row,
                field: field.into(),
                message,
            };
            for (field, v) in [("mu_xg", r.mu_xg), ("mu_yg", r.mu_yg)] {
                if !v.is_finite() {
                    return Err(row_err(field, "must be finite".into()));
                }
            }
            for (field, v) in [("se_xg", r.se_xg), ("se_yg", r.se_yg)] {
                if !(v.is_finite() && v > 0.0) {
                    return Err(row_err(field, format!("must be finite and > 0, got {v}")));
                }
            }
            if r.mu_xg == 0.0 {
                return Err(row_err(
                    "mu_xg",
                    format!("variant `{}` has zero gene-exposure association", r.id),
                ));
            }
            MrVariant::new(r.id, r.mu_xg, r.se_xg, r.mu_yg, r.se_yg)
        })
        .collect::<Result<Vec<_>>>()?;
    MrDataset::new(variants)
}

pub fn serialize_mr(data: &MrDataset, format: Format) -> Result<Vec<u8>> {
    let rows: Vec<MrRow> = data
        .variants()
        .iter()
        .map(|v| MrRow {
            id: v.id.clone(),
            mu_xg: v.mu_xg,
            se_xg: v.se_xg,
            mu_yg: v.mu_yg,
            se_yg: v.se_yg,
        })
        .collect();
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["id", "mu_xg", "se_xg", "mu_yg", "se_yg"])
                .map_err(|e| Error::Format(e.to_string()))?;
            for r in rows {
                w.write_record([r.id, num(r.mu_xg), num(r.se_xg), num(r.mu_yg), num(r.se_yg)])
                    .map_err(|e| Error::Format(e.to_string()))?;
            }
            w.into_inner().map_err(|e| Error::Format(e.to_string()))
        }
        Format::Json => {
            let mut out = serde_json::to_vec(&rows).map_err(|e| Error::Format(e.to_string()))?;
            out.push(b'\n');
            Ok(out)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Estimates {
    Pooled(PooledEstimate),
    Egger(EggerFit),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MrSummary {
    pub variants: usize,
    /// Variants re-oriented to a positive gene-exposure association.
    pub reoriented: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pleiotropy: Option<PleiotropyEstimate>,
}

/// Versioned response envelope shared by the CLI and the service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope {
    pub schema_version: String,
    pub model: String,
    pub estimates: Estimates,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heterogeneity: Option<Heterogeneity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub balance: Option<BalanceState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mr: Option<MrSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leave_one_out: Option<Vec<LooEntry>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl Envelope {
    pub fn new(model: impl Into<String>, fit: Fit, balance: Option<BalanceState>) -> Self {
        let (estimates, heterogeneity) = match fit {
            Fit::Pooled {
                estimate,
                heterogeneity,
            } => (Estimates::Pooled(estimate), Some(heterogeneity)),
            Fit::Egger(f) => (Estimates::Egger(f), None),
        };
        Envelope {
            schema_version: SCHEMA_VERSION.into(),
            model: model.into(),
            estimates,
            heterogeneity,
            balance,
            mr: None,
            leave_one_out: None,
            warnings: Vec::new(),
        }
    }
}

/// Canonical JSON bytes for a result envelope (newline terminated).
pub fn serialize_result(envelope: &Envelope) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec(envelope).map_err(|e| Error::Format(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

pub fn decode_result(bytes: &[u8]) -> Result<Envelope> {
    let env: Envelope = serde_json::from_slice(bytes).map_err(|e| Error::Format(e.to_string()))?;
    if env.schema_version != SCHEMA_VERSION {
        return Err(Error::Format(format!(
            "unsupported schema version `{}`",
            env.schema_version
        )));
    }
    Ok(env)
}
