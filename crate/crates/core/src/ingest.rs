//! Loading and validation of signal recordings and sensor cost tables.
//!
//! Both file formats are plain CSV with a fixed header:
//!
//! ```text
//! sensor_id,load_pct,state_code,sample_index,value
//! sensor_id,load_pct,purchase,installation,replacement,disassembly,inspection[,communication]
//! ```

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const SIGNALS_HEADER: [&str; 5] = ["sensor_id", "load_pct", "state_code", "sample_index", "value"];
pub const COSTS_HEADER: [&str; 7] = [
    "sensor_id",
    "load_pct",
    "purchase",
    "installation",
    "replacement",
    "disassembly",
    "inspection",
];

/// Identifies one channel: a physical sensor under one load condition.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChannelKey {
    pub sensor_id: String,
    pub load_pct: String,
}

impl ChannelKey {
    pub fn new(sensor_id: impl Into<String>, load_pct: impl Into<String>) -> Self {
        ChannelKey {
            sensor_id: sensor_id.into(),
            load_pct: load_pct.into(),
        }
    }
}

impl fmt::Display for ChannelKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.sensor_id, self.load_pct)
    }
}

/// Numeric fields compare numerically, anything else lexically; numbers sort first.
fn natural_cmp(a: &str, b: &str) -> Ordering {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.partial_cmp(&y).unwrap_or(Ordering::Equal).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

impl Ord for ChannelKey {
    fn cmp(&self, other: &Self) -> Ordering {
        natural_cmp(&self.sensor_id, &other.sensor_id).then_with(|| natural_cmp(&self.load_pct, &other.load_pct))
    }
}

impl PartialOrd for ChannelKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateLabel {
    pub name: String,
    pub code: u32,
}

impl StateLabel {
    /// Default names for the two gearbox states; other codes get a generic name.
    pub fn from_code(code: u32) -> Self {
        let name = match code {
            1 => "healthy".to_string(),
            2 => "broken_tooth".to_string(),
            c => format!("state_{c}"),
        };
        StateLabel { name, code }
    }
}

/// Samples of one channel, one sequence per dataset state (same order as
/// [`SignalDataset::states`]).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSeries<T> {
    pub key: ChannelKey,
    pub per_state: Vec<Vec<T>>,
}

impl<T: Scalar> ChannelSeries<T> {
    pub fn new(key: ChannelKey, per_state: Vec<Vec<T>>) -> Self {
        ChannelSeries { key, per_state }
    }

    pub fn states(&self) -> &[Vec<T>] {
        &self.per_state
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalDataset<T> {
    channels: Vec<ChannelSeries<T>>,
    states: Vec<StateLabel>,
    samples_per_state: usize,
    positive_code: u32,
}

impl<T: Scalar> SignalDataset<T> {
    /// Validates and canonicalizes (channels sorted by key, states by code).
    pub fn new(mut channels: Vec<ChannelSeries<T>>, states: Vec<StateLabel>, positive_code: u32) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::Shape("dataset has no channels".into()));
        }
        if states.len() < 2 {
            return Err(Error::Shape(format!(
                "need at least 2 distinct states, found {}",
                states.len()
            )));
        }
        let mut order: Vec<usize> = (0..states.len()).collect();
        order.sort_by_key(|&i| states[i].code);
        for w in order.windows(2) {
            if states[w[0]].code == states[w[1]].code {
                return Err(Error::Shape(format!("duplicate state code {}", states[w[0]].code)));
            }
        }
        if !states.iter().any(|s| s.code == positive_code) {
            return Err(Error::Shape(format!(
                "positive state code {positive_code} not present in dataset"
            )));
        }
        let sorted_states: Vec<StateLabel> = order.iter().map(|&i| states[i].clone()).collect();

        let n = channels[0].per_state.first().map_or(0, Vec::len);
        for ch in &mut channels {
            if ch.per_state.len() != states.len() {
                return Err(Error::Shape(format!(
                    "channel {} has {} states, dataset has {}",
                    ch.key,
                    ch.per_state.len(),
                    states.len()
                )));
            }
            for (j, seq) in ch.per_state.iter().enumerate() {
                if seq.len() != n {
                    return Err(Error::Shape(format!(
                        "channel {} state {} has {} samples, expected {}",
                        ch.key,
                        states[j].code,
                        seq.len(),
                        n
                    )));
                }
                if let Some(pos) = seq.iter().position(|v| !v.is_finite()) {
                    return Err(Error::Data {
                        row: pos,
                        message: format!("non-finite sample in channel {} state {}", ch.key, states[j].code),
                    });
                }
            }
            let reordered = order.iter().map(|&i| std::mem::take(&mut ch.per_state[i])).collect();
            ch.per_state = reordered;
        }
        if n < 2 {
            return Err(Error::Shape(format!("need at least 2 samples per state, found {n}")));
        }
        channels.sort_by(|a, b| a.key.cmp(&b.key));
        for w in channels.windows(2) {
            if w[0].key == w[1].key {
                return Err(Error::Conflict(format!("duplicate channel {}", w[0].key)));
            }
        }
        Ok(SignalDataset {
            channels,
            states: sorted_states,
            samples_per_state: n,
            positive_code,
        })
    }

    pub fn channels(&self) -> &[ChannelSeries<T>] {
        &self.channels
    }

    pub fn channel(&self, key: &ChannelKey) -> Option<&ChannelSeries<T>> {
        self.channels
            .binary_search_by(|c| c.key.cmp(key))
            .ok()
            .map(|i| &self.channels[i])
    }

    pub fn states(&self) -> &[StateLabel] {
        &self.states
    }

    pub fn samples_per_state(&self) -> usize {
        self.samples_per_state
    }

    pub fn positive_code(&self) -> u32 {
        self.positive_code
    }

    /// Same data with a different positive class.
    pub fn with_positive_code(mut self, code: u32) -> Result<Self> {
        if !self.states.iter().any(|s| s.code == code) {
            return Err(Error::Usage(format!("state code {code} not present in dataset")));
        }
        self.positive_code = code;
        Ok(self)
    }
}

/// Column names to read a signals file with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignalSchema {
    pub sensor_id: String,
    pub load_pct: String,
    pub state_code: String,
    pub sample_index: String,
    pub value: String,
    pub positive_code: u32,
}

impl Default for SignalSchema {
    fn default() -> Self {
        SignalSchema {
            sensor_id: SIGNALS_HEADER[0].into(),
            load_pct: SIGNALS_HEADER[1].into(),
            state_code: SIGNALS_HEADER[2].into(),
            sample_index: SIGNALS_HEADER[3].into(),
            value: SIGNALS_HEADER[4].into(),
            positive_code: 1,
        }
    }
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

pub fn load_signals<T: Scalar>(path: impl AsRef<Path>, schema: &SignalSchema) -> Result<SignalDataset<T>> {
    read_signals(open(path.as_ref())?, schema)
}

/// Reads a signals table. Row numbers in errors are 1-based data rows
/// (the header is row 0).
pub fn read_signals<T: Scalar, R: Read>(reader: R, schema: &SignalSchema) -> Result<SignalDataset<T>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let c_sensor = column(&headers, &schema.sensor_id)?;
    let c_load = column(&headers, &schema.load_pct)?;
    let c_state = column(&headers, &schema.state_code)?;
    let c_index = column(&headers, &schema.sample_index)?;
    let c_value = column(&headers, &schema.value)?;

    // (channel, state) -> [(sample_index, value)]
    let mut groups: BTreeMap<ChannelKey, BTreeMap<u32, Vec<(i64, T)>>> = BTreeMap::new();
    let mut codes: Vec<u32> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let bad = |message: String| Error::Data { row, message };
        let key = ChannelKey::new(field(c_sensor), field(c_load));
        let code: u32 = field(c_state)
            .parse()
            .map_err(|_| bad(format!("invalid state_code `{}`", field(c_state))))?;
        if code == 0 {
            return Err(bad("state_code must be a positive integer".into()));
        }
        let index: i64 = field(c_index)
            .parse()
            .map_err(|_| bad(format!("invalid sample_index `{}`", field(c_index))))?;
        let raw: f64 = field(c_value)
            .parse()
            .map_err(|_| bad(format!("invalid value `{}`", field(c_value))))?;
        let value = T::lit(raw);
        if !raw.is_finite() || !value.is_finite() {
            return Err(bad(format!("non-finite value `{}`", field(c_value))));
        }
        if !codes.contains(&code) {
            codes.push(code);
        }
        groups
            .entry(key)
            .or_default()
            .entry(code)
            .or_default()
            .push((index, value));
    }
    codes.sort_unstable();
    let states: Vec<StateLabel> = codes.iter().map(|&c| StateLabel::from_code(c)).collect();

    let mut channels = Vec::with_capacity(groups.len());
    for (key, by_state) in groups {
        let mut per_state = Vec::with_capacity(codes.len());
        for code in &codes {
            let Some(samples) = by_state.get(code) else {
                return Err(Error::Shape(format!("channel {key} has no samples for state {code}")));
            };
            let mut samples = samples.clone();
            samples.sort_by_key(|s| s.0);
            if let Some(w) = samples.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(Error::Conflict(format!(
                    "channel {key} state {code} repeats sample_index {}",
                    w[0].0
                )));
            }
            per_state.push(samples.into_iter().map(|s| s.1).collect());
        }
        channels.push(ChannelSeries::new(key, per_state));
    }
    SignalDataset::new(channels, states, schema.positive_code)
}

/// Writes the canonical signals CSV: channels by key, states by code,
/// sample indices renumbered from 0.
pub fn write_signals<T: Scalar, W: Write>(dataset: &SignalDataset<T>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SIGNALS_HEADER)?;
    for ch in dataset.channels() {
        for (state, seq) in dataset.states().iter().zip(ch.states()) {
            let code = state.code.to_string();
            for (i, v) in seq.iter().enumerate() {
                w.write_record([
                    ch.key.sensor_id.as_str(),
                    ch.key.load_pct.as_str(),
                    code.as_str(),
                    i.to_string().as_str(),
                    v.to_string().as_str(),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io("<signals>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostProfile<T> {
    pub key: ChannelKey,
    pub purchase: T,
    pub installation: T,
    pub replacement: T,
    pub disassembly: T,
    pub inspection: T,
    /// Not part of the reference cost table; zero unless the file carries it.
    pub communication: T,
}

impl<T: Scalar> CostProfile<T> {
    pub fn total(&self) -> T {
        self.components().into_iter().sum()
    }

    fn components(&self) -> [T; 6] {
        [
            self.purchase,
            self.installation,
            self.replacement,
            self.disassembly,
            self.inspection,
            self.communication,
        ]
    }

    fn validate(&self, row: usize) -> Result<()> {
        let comps = self.components();
        if comps.iter().any(|c| !c.is_finite()) {
            return Err(Error::Data {
                row,
                message: format!("non-finite cost for {}", self.key),
            });
        }
        if comps.iter().any(|&c| c < T::zero()) {
            return Err(Error::Data {
                row,
                message: format!("negative cost for {}", self.key),
            });
        }
        if self.total() <= T::zero() {
            return Err(Error::Data {
                row,
                message: format!("total cost for {} must be positive", self.key),
            });
        }
        Ok(())
    }
}

pub fn load_costs<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<CostProfile<T>>> {
    read_costs(open(path.as_ref())?)
}

pub fn read_costs<T: Scalar, R: Read>(reader: R) -> Result<Vec<CostProfile<T>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols: Vec<usize> = COSTS_HEADER
        .iter()
        .map(|name| column(&headers, name))
        .collect::<Result<_>>()?;
    let c_comm = headers.iter().position(|h| h.trim() == "communication");

    let mut seen: HashMap<ChannelKey, usize> = HashMap::new();
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let num = |c: usize| -> Result<T> {
            let s = field(c);
            if s.is_empty() {
                return Ok(T::zero());
            }
            s.parse::<f64>().map(T::lit).map_err(|_| Error::Data {
                row,
                message: format!("invalid cost `{s}` in column `{}`", headers.get(c).unwrap_or("?")),
            })
        };
        let key = ChannelKey::new(field(cols[0]), field(cols[1]));
        let profile = CostProfile {
            purchase: num(cols[2])?,
            installation: num(cols[3])?,
            replacement: num(cols[4])?,
            disassembly: num(cols[5])?,
            inspection: num(cols[6])?,
            communication: match c_comm {
                Some(c) => num(c)?,
                None => T::zero(),
            },
            key,
        };
        profile.validate(row)?;
        if let Some(first) = seen.insert(profile.key.clone(), row) {
            return Err(Error::Conflict(format!(
                "duplicate cost rows for {} (rows {first} and {row})",
                profile.key
            )));
        }
        out.push(profile);
    }
    Ok(out)
}

pub fn write_costs<T: Scalar, W: Write>(costs: &[CostProfile<T>], writer: W) -> Result<()> {
    let with_comm = costs.iter().any(|c| c.communication != T::zero());
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = COSTS_HEADER.to_vec();
    if with_comm {
        header.push("communication");
    }
    w.write_record(&header)?;
    for c in costs {
        let mut rec = vec![
            c.key.sensor_id.clone(),
            c.key.load_pct.clone(),
            c.purchase.to_string(),
            c.installation.to_string(),
            c.replacement.to_string(),
            c.disassembly.to_string(),
            c.inspection.to_string(),
        ];
        if with_comm {
            rec.push(c.communication.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<costs>", e))?;
    Ok(())
}

/// A dataset whose channels each carry a total sensor cost.
#[derive(Debug, Clone, PartialEq)]
pub struct JoinedDataset<T> {
    pub dataset: SignalDataset<T>,
    /// Aligned with `dataset.channels()`.
    pub total_costs: Vec<T>,
    /// Cost rows that matched no channel.
    pub unused_costs: Vec<ChannelKey>,
}

impl<T: Scalar> JoinedDataset<T> {
    pub fn warning_count(&self) -> usize {
        self.unused_costs.len()
    }

    pub fn cost_of(&self, key: &ChannelKey) -> Option<T> {
        self.dataset
            .channels()
            .binary_search_by(|c| c.key.cmp(key))
            .ok()
            .map(|i| self.total_costs[i])
    }
}

pub fn join<T: Scalar>(dataset: SignalDataset<T>, costs: &[CostProfile<T>]) -> Result<JoinedDataset<T>> {
    let mut by_key: HashMap<&ChannelKey, &CostProfile<T>> = HashMap::with_capacity(costs.len());
    for c in costs {
        if by_key.insert(&c.key, c).is_some() {
            return Err(Error::Conflict(format!("duplicate cost rows for {}", c.key)));
        }
    }
    let mut missing = Vec::new();
    let mut totals = Vec::with_capacity(dataset.channels().len());
    for ch in dataset.channels() {
        match by_key.remove(&ch.key) {
            Some(c) => totals.push(c.total()),
            None => missing.push(ch.key.to_string()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Join { missing });
    }
    let mut unused: Vec<ChannelKey> = by_key.into_keys().cloned().collect();
    unused.sort();
    if !unused.is_empty() {
        log::warn!("{} cost row(s) match no channel", unused.len());
    }
    Ok(JoinedDataset {
        dataset,
        total_costs: totals,
        unused_costs: unused,
    })
}
