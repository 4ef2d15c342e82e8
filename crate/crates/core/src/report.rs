//! CSV and JSON report formats.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classify::{CvReport, Hyperparams, TrainedModel};
use crate::dea::{DeaModel, EfficiencyResult, WeightVector};
use crate::error::{Error, Result};
use crate::eval::{MetricReport, RocCurve};
use crate::ingest::ChannelKey;
use crate::scalar::Scalar;
use crate::select::SelectionResult;
use crate::sigmetrics::{ChannelMetrics, MetricsRow};

pub const METRICS_HEADER: [&str; 9] = [
    "sensor_id",
    "load_pct",
    "monotonicity",
    "robustness",
    "trendability",
    "detectability",
    "variance",
    "rms",
    "total_cost",
];

pub const EVALUATION_HEADER: [&str; 10] = [
    "method",
    "n_selected",
    "accuracy",
    "recall_pos",
    "recall_neg",
    "precision_pos",
    "precision_neg",
    "f_pos",
    "f_neg",
    "auc",
];

pub const ROC_HEADER: [&str; 3] = ["fpr", "tpr", "threshold"];

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

pub fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn flush<W: Write>(w: csv::Writer<W>) -> Result<()> {
    w.into_inner()
        .map_err(|e| Error::io("<report>", e.into_error()))?
        .flush()
        .map_err(|e| Error::io("<report>", e))
}

fn header_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Schema(format!("missing column '{name}'")))
}

fn parse_cell<T: Scalar>(record: &csv::StringRecord, idx: usize, row: usize, name: &str) -> Result<T> {
    let raw = record.get(idx).unwrap_or("").trim();
    raw.parse::<f64>()
        .ok()
        .and_then(T::from_f64)
        .ok_or_else(|| Error::Data {
            row,
            message: format!("column '{name}': cannot parse '{raw}' as a number"),
        })
}

// ---------------------------------------------------------------- metrics

pub fn write_metrics<T: Scalar, W: Write>(rows: &[MetricsRow<T>], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(METRICS_HEADER)?;
    for r in rows {
        let m = &r.metrics;
        w.write_record([
            r.key.sensor_id.clone(),
            r.key.load_pct.clone(),
            m.monotonicity.to_string(),
            m.robustness.to_string(),
            m.trendability.to_string(),
            m.detectability.to_string(),
            m.variance.to_string(),
            m.rms.to_string(),
            r.total_cost.to_string(),
        ])?;
    }
    flush(w)
}

/// Reads a metrics table. Empty metric cells load as NaN so that DMU
/// assembly can name the missing field.
pub fn read_metrics<T: Scalar, R: Read>(reader: R) -> Result<Vec<MetricsRow<T>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let idx: Vec<usize> = METRICS_HEADER
        .iter()
        .map(|h| header_index(&headers, h))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let get = |j: usize| -> Result<T> {
            if rec.get(idx[j]).is_none_or(str::is_empty) {
                Ok(T::nan())
            } else {
                parse_cell(&rec, idx[j], row, METRICS_HEADER[j])
            }
        };
        rows.push(MetricsRow {
            key: ChannelKey::new(&rec[idx[0]], &rec[idx[1]]),
            metrics: ChannelMetrics {
                monotonicity: get(2)?,
                robustness: get(3)?,
                trendability: get(4)?,
                detectability: get(5)?,
                variance: get(6)?,
                rms: get(7)?,
            },
            total_cost: get(8)?,
        });
    }
    Ok(rows)
}

pub fn write_flagged<W: Write>(flagged: &[(ChannelKey, Error)], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["sensor_id", "load_pct", "error"])?;
    for (k, e) in flagged {
        w.write_record([k.sensor_id.as_str(), k.load_pct.as_str(), &e.to_string()])?;
    }
    flush(w)
}

// ---------------------------------------------------------------- efficiency

pub fn write_efficiency<T: Scalar, W: Write>(results: &[EfficiencyResult<T>], writer: W) -> Result<()> {
    let (r, s) = results
        .first()
        .map_or((0, 0), |e| (e.weights.u.len(), e.weights.v.len()));
    let mut header: Vec<String> = ["sensor_id", "load_pct", "model", "score", "efficient"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=r).map(|i| format!("u_{i}")));
    header.extend((1..=s).map(|i| format!("v_{i}")));
    header.push("free_term".into());
    header.push("eps_used".into());
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(&header)?;
    for e in results {
        let mut rec = vec![
            e.id.sensor_id.clone(),
            e.id.load_pct.clone(),
            e.model.name().to_string(),
            e.score.to_string(),
            e.efficient.to_string(),
        ];
        rec.extend(e.weights.u.iter().map(ToString::to_string));
        rec.extend(e.weights.v.iter().map(ToString::to_string));
        rec.push(e.weights.free.map(|f| f.to_string()).unwrap_or_default());
        rec.push(e.eps_used.to_string());
        w.write_record(&rec)?;
    }
    flush(w)
}

pub fn read_efficiency<T: Scalar, R: Read>(reader: R) -> Result<Vec<EfficiencyResult<T>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let fixed: Vec<usize> = [
        "sensor_id",
        "load_pct",
        "model",
        "score",
        "efficient",
        "free_term",
        "eps_used",
    ]
    .iter()
    .map(|h| header_index(&headers, h))
    .collect::<Result<_>>()?;
    let cols = |prefix: &str| -> Vec<usize> {
        (1..)
            .map_while(|i| headers.iter().position(|h| h == format!("{prefix}{i}")))
            .collect()
    };
    let (u_idx, v_idx) = (cols("u_"), cols("v_"));
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let model: DeaModel = rec[fixed[2]].parse().map_err(|e: Error| Error::Data {
            row,
            message: e.to_string(),
        })?;
        let efficient = match &rec[fixed[4]] {
            "true" => true,
            "false" => false,
            other => {
                return Err(Error::Data {
                    row,
                    message: format!("column 'efficient': expected true/false, got '{other}'"),
                })
            }
        };
        let free = if rec[fixed[5]].is_empty() {
            None
        } else {
            Some(parse_cell(&rec, fixed[5], row, "free_term")?)
        };
        out.push(EfficiencyResult {
            id: ChannelKey::new(&rec[fixed[0]], &rec[fixed[1]]),
            model,
            score: parse_cell(&rec, fixed[3], row, "score")?,
            weights: WeightVector {
                u: u_idx
                    .iter()
                    .map(|&j| parse_cell(&rec, j, row, "u"))
                    .collect::<Result<_>>()?,
                v: v_idx
                    .iter()
                    .map(|&j| parse_cell(&rec, j, row, "v"))
                    .collect::<Result<_>>()?,
                free,
            },
            efficient,
            eps_used: parse_cell(&rec, fixed[6], row, "eps_used")?,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------- selection

pub fn write_selection<T: Scalar, W: Write>(sel: &SelectionResult<T>, mut writer: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, sel)?;
    writer.write_all(b"\n").map_err(|e| Error::io("<selection>", e))?;
    writer.flush().map_err(|e| Error::io("<selection>", e))
}

pub fn read_selection<T: Scalar, R: Read>(reader: R) -> Result<SelectionResult<T>> {
    Ok(serde_json::from_reader(reader)?)
}

// ---------------------------------------------------------------- evaluation

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRow<T> {
    pub method: String,
    pub n_selected: usize,
    pub report: MetricReport<T>,
}

pub fn write_evaluation<T: Scalar, W: Write>(rows: &[EvaluationRow<T>], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(EVALUATION_HEADER)?;
    for r in rows {
        let m = &r.report;
        w.write_record([
            r.method.clone(),
            r.n_selected.to_string(),
            m.accuracy.to_string(),
            m.recall_pos.to_string(),
            m.recall_neg.to_string(),
            m.precision_pos.to_string(),
            m.precision_neg.to_string(),
            m.f_pos.to_string(),
            m.f_neg.to_string(),
            m.auc.map(|a| a.to_string()).unwrap_or_default(),
        ])?;
    }
    flush(w)
}

pub fn write_failures<W: Write>(failures: &[(String, String)], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["method", "error"])?;
    for (m, e) in failures {
        w.write_record([m, e])?;
    }
    flush(w)
}

pub fn write_roc<T: Scalar, W: Write>(roc: &RocCurve<T>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(ROC_HEADER)?;
    for p in &roc.points {
        w.write_record([p.fpr.to_string(), p.tpr.to_string(), p.threshold.to_string()])?;
    }
    flush(w)
}

// ---------------------------------------------------------------- models

/// Everything needed to reapply a tuned classifier, minus wall-clock timing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary<T> {
    pub method: String,
    pub hyperparameters: Hyperparams<T>,
    pub features: Vec<ChannelKey>,
    pub cv: CvReport<T>,
    pub model: TrainedModel<T>,
}

pub fn write_model<T: Scalar, W: Write>(summary: &ModelSummary<T>, mut writer: W) -> Result<()> {
    serde_json::to_writer(&mut writer, summary)?;
    writer.write_all(b"\n").map_err(|e| Error::io("<model>", e))?;
    writer.flush().map_err(|e| Error::io("<model>", e))
}

pub fn read_model<T: Scalar, R: Read>(reader: R) -> Result<ModelSummary<T>> {
    Ok(serde_json::from_reader(reader)?)
}

pub fn write_timings<W: Write>(timings: &[(String, f64)], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["method", "train_seconds"])?;
    for (m, t) in timings {
        w.write_record([m.clone(), format!("{t:.6}")])?;
    }
    flush(w)
}
