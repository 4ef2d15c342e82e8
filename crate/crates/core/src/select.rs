//! Turning channel metrics into DMUs and efficiency scores into a channel selection.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dea::{shift_nonpositive, ColumnShift, DeaModel, DmuRecord, EfficiencyResult, Side};
use crate::error::{Error, Result};
use crate::ingest::{ChannelKey, SignalDataset};
use crate::scalar::{pearson, Scalar};
use crate::sigmetrics::MetricsRow;

/// Desirable DMU outputs, in column order.
pub const OUTPUT_FIELDS: [&str; 5] = ["monotonicity", "robustness", "trendability", "detectability", "rms"];
/// Undesirable DMU inputs, in column order.
pub const INPUT_FIELDS: [&str; 2] = ["variance", "total_cost"];

pub fn field_name(side: Side, index: usize) -> &'static str {
    match side {
        Side::Output => OUTPUT_FIELDS[index],
        Side::Input => INPUT_FIELDS[index],
    }
}

#[derive(Debug, Clone)]
pub struct Assembly<T> {
    pub dmus: Vec<DmuRecord<T>>,
    pub shifts: Vec<ColumnShift<T>>,
}

/// Builds one DMU per channel (R = 5 outputs, S = 2 inputs) and lifts
/// non-positive columns. An empty input yields an empty table.
pub fn assemble_dmus<T: Scalar>(rows: &[MetricsRow<T>]) -> Result<Assembly<T>> {
    let mut dmus = Vec::with_capacity(rows.len());
    for row in rows {
        let m = &row.metrics;
        let outputs = vec![m.monotonicity, m.robustness, m.trendability, m.detectability, m.rms];
        let inputs = vec![m.variance, row.total_cost];
        let cells = outputs.iter().zip(OUTPUT_FIELDS).chain(inputs.iter().zip(INPUT_FIELDS));
        for (v, field) in cells {
            if !v.is_finite() {
                return Err(Error::Assembly {
                    channel: row.key.to_string(),
                    field,
                });
            }
        }
        dmus.push(DmuRecord::new(row.key.clone(), outputs, inputs));
    }
    let shifts = shift_nonpositive(&mut dmus);
    for s in &shifts {
        log::info!(
            "shifted DEA column {} by {} to make it strictly positive",
            field_name(s.side, s.index),
            s.amount
        );
    }
    Ok(Assembly { dmus, shifts })
}

/// What produced a selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Dea(DeaModel),
    Pearson,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Dea(m) => m.name(),
            Method::Pearson => "pearson",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::Dea(m) => m.label(),
            Method::Pearson => "Pearson",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("pearson") {
            Ok(Method::Pearson)
        } else {
            s.parse().map(Method::Dea)
        }
    }
}

impl Serialize for Method {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredChannel<T> {
    #[serde(flatten)]
    pub key: ChannelKey,
    pub score: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult<T> {
    #[serde(rename = "model")]
    pub method: Method,
    pub threshold: Option<T>,
    /// Descending score, ties by channel key.
    pub selected: Vec<ScoredChannel<T>>,
    pub rejected: Vec<ScoredChannel<T>>,
}

impl<T: Scalar> SelectionResult<T> {
    pub fn keys(&self) -> Vec<ChannelKey> {
        self.selected.iter().map(|c| c.key.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn contains(&self, key: &ChannelKey) -> bool {
        self.selected.iter().any(|c| &c.key == key)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SelectionRule<T> {
    /// `None` keeps exactly the efficient units; `Some(t)` with `t` in (0, 1]
    /// also keeps units scoring at least `t` (ratio models) or at least
    /// `-(1 - t) * |min score|` (additive).
    pub threshold: Option<T>,
    pub top_n: Option<usize>,
}

fn by_score<T: Scalar>(a: &ScoredChannel<T>, b: &ScoredChannel<T>) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.key.cmp(&b.key))
}

fn split_ranked<T: Scalar>(
    mut ranked: Vec<(ScoredChannel<T>, bool)>,
    top_n: Option<usize>,
) -> (Vec<ScoredChannel<T>>, Vec<ScoredChannel<T>>) {
    ranked.sort_by(|a, b| by_score(&a.0, &b.0));
    let mut selected = Vec::new();
    let mut rejected = Vec::new();
    for (c, keep) in ranked {
        if keep && top_n.is_none_or(|n| selected.len() < n) {
            selected.push(c);
        } else {
            rejected.push(c);
        }
    }
    (selected, rejected)
}

pub fn select_by_efficiency<T: Scalar>(
    results: &[EfficiencyResult<T>],
    rule: &SelectionRule<T>,
) -> Result<SelectionResult<T>> {
    let Some(first) = results.first() else {
        return Err(Error::Usage("no efficiency results to select from".into()));
    };
    let model = first.model;
    if let Some(other) = results.iter().find(|r| r.model != model) {
        return Err(Error::Usage(format!(
            "selection mixes {model} and {} results",
            other.model
        )));
    }
    if let Some(t) = rule.threshold {
        if !(t > T::zero() && t <= T::one()) {
            return Err(Error::Usage(format!("selection threshold {t} outside (0, 1]")));
        }
    }
    if rule.top_n == Some(0) {
        return Err(Error::Usage("top_n must be at least 1".into()));
    }
    let cutoff = rule.threshold.map(|t| {
        if model.is_ratio() {
            t
        } else {
            let worst = results.iter().map(|r| r.score).fold(T::zero(), T::min);
            -(T::one() - t) * worst.abs()
        }
    });
    let ranked = results
        .iter()
        .map(|r| {
            let keep = r.efficient || cutoff.is_some_and(|c| r.score >= c);
            (
                ScoredChannel {
                    key: r.id.clone(),
                    score: r.score,
                },
                keep,
            )
        })
        .collect();
    let (selected, rejected) = split_ranked(ranked, rule.top_n);
    Ok(SelectionResult {
        method: Method::Dea(model),
        threshold: rule.threshold,
        selected,
        rejected,
    })
}

/// Ranks channels by |r| between their samples (states concatenated in code
/// order) and the numeric state codes at the same positions.
pub fn pearson_rank<T: Scalar>(dataset: &SignalDataset<T>, top_n: Option<usize>) -> Result<SelectionResult<T>> {
    if top_n == Some(0) {
        return Err(Error::Usage("top_n must be at least 1".into()));
    }
    let n = dataset.samples_per_state();
    let labels: Vec<T> = dataset
        .states()
        .iter()
        .flat_map(|s| std::iter::repeat_n(T::from_count(s.code as usize), n))
        .collect();
    let ranked = dataset
        .channels()
        .iter()
        .map(|ch| {
            let samples: Vec<T> = ch.states().concat();
            let r = pearson(&samples, &labels);
            (
                ScoredChannel {
                    key: ch.key.clone(),
                    score: r.abs(),
                },
                true,
            )
        })
        .collect();
    let (selected, rejected) = split_ranked(ranked, top_n);
    Ok(SelectionResult {
        method: Method::Pearson,
        threshold: None,
        selected,
        rejected,
    })
}
