//! Flat `section.key = value` configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key can also be
//! set programmatically (the CLI maps `--section.key value` onto [`Config::set`]).
//! Path defaults are relative to `paths.out`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::classify::{ClassifierKind, GridConfig};
use crate::dea::DeaModel;
use crate::error::{Error, Result};
use crate::ingest::{ChannelKey, SignalSchema};
use crate::pipeline::PipelineConfig;
use crate::sigmetrics::TrendMode;
use crate::synth::{ChannelSpec, SynthSpec, BENCHMARK_CHANNELS, BENCHMARK_SAMPLES, BENCHMARK_SEED};

/// Every recognised key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("paths.out", "output directory (default: out)"),
    ("paths.signals", "signals CSV (default: <out>/signals.csv)"),
    ("paths.costs", "costs CSV (default: <out>/costs.csv)"),
    (
        "paths.metrics",
        "metrics CSV read by `dea` (default: <out>/metrics.csv)",
    ),
    ("signals.sensor_id", "column holding the sensor id"),
    ("signals.load_pct", "column holding the load level"),
    ("signals.state_code", "column holding the state code"),
    ("signals.sample_index", "column holding the sample index"),
    ("signals.value", "column holding the sample value"),
    (
        "labels.positive",
        "state code treated as the positive class (default: 1)",
    ),
    ("denoise.levels", "Haar decomposition levels or `auto`"),
    ("trend.mode", "`normalized` or `literal`"),
    ("trend.max_lag", "largest autocorrelation lag or `auto`"),
    (
        "detect.cap",
        "detectability used for singular channels, or `none` to flag them",
    ),
    ("dea.model", "`all` or a comma list of ccr, iobcc, oobcc, additive"),
    ("dea.eps", "multiplier floor for ratio models (default: 1e-6)"),
    (
        "dea.efficiency_tol",
        "distance from the frontier still counted efficient (default: 1e-6)",
    ),
    (
        "dea.normalize",
        "column-max normalization for the additive model (default: true)",
    ),
    ("dea.threshold", "`none` (efficient units only) or a value in (0, 1]"),
    ("dea.top_n", "cap on selected channels, or `none`"),
    ("classify.classifier", "`all` or a comma list of knn, gnb, svm"),
    ("classify.knn_grid", "comma list of k values (default: 1,3,5,7,9)"),
    ("classify.svm_grid", "comma list of C values (default: 0.1,1,10)"),
    ("classify.svm_epochs", "SVM training epochs (default: 200)"),
    ("split.seed", "seed for splits, folds and SVM order (default: 42)"),
    ("split.test_fraction", "held-out share of rows per class (default: 0.5)"),
    (
        "select.pearson",
        "also evaluate the Pearson-ranked baseline (default: false)",
    ),
    (
        "select.pearson_top_n",
        "channels kept by the Pearson baseline, or `none` for all",
    ),
    ("synth.preset", "`benchmark` (mixed quality) or `uniform`"),
    ("synth.channels", "number of channels (default: 40)"),
    ("synth.samples", "samples per state (default: 500)"),
    ("synth.seed", "generator seed (default: 42)"),
    ("synth.offset", "uniform preset: channel offset"),
    (
        "synth.snr",
        "uniform preset: signal-to-noise ratio, noise sd = 1/snr (`inf` allowed)",
    ),
    ("synth.trend", "uniform preset: ramp height over one state"),
    (
        "synth.separation",
        "uniform preset: mean shift between consecutive states",
    ),
    ("synth.cost_min", "uniform preset: lower bound of each cost component"),
    ("synth.cost_max", "uniform preset: upper bound of each cost component"),
];

pub fn is_known(key: &str) -> bool {
    KEYS.iter().any(|(k, _)| *k == key)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

fn bad(key: &str, value: &str, expected: &str) -> Error {
    Error::Config(format!("{key} = '{value}': expected {expected}"))
}

fn is_unset(v: &str) -> bool {
    matches!(v.to_ascii_lowercase().as_str(), "" | "none" | "auto")
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `section.key = value`", i + 1)))?;
            let key = key.trim();
            if cfg.values.contains_key(key) {
                return Err(Error::Config(format!("line {}: duplicate key {key}", i + 1)));
            }
            cfg.set(key, value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !is_known(key) {
            return Err(Error::Config(format!("unknown key {key}")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parsed<V: FromStr>(&self, key: &str, expected: &str) -> Result<Option<V>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) if is_unset(v) => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| bad(key, v, expected)),
        }
    }

    fn parsed_or<V: FromStr>(&self, key: &str, expected: &str, default: V) -> Result<V> {
        Ok(self.parsed(key, expected)?.unwrap_or(default))
    }

    fn flag(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key).map(|v| v.to_ascii_lowercase()) {
            None => Ok(default),
            Some(v) => match v.as_str() {
                "true" | "yes" | "on" | "1" => Ok(true),
                "false" | "no" | "off" | "0" => Ok(false),
                _ => Err(bad(key, &v, "true or false")),
            },
        }
    }

    fn list<V: FromStr>(&self, key: &str, expected: &str) -> Result<Option<Vec<V>>> {
        let Some(v) = self.get(key) else {
            return Ok(None);
        };
        let items = v
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| bad(key, v, expected)))
            .collect::<Result<Vec<V>>>()?;
        if items.is_empty() {
            return Err(bad(key, v, expected));
        }
        Ok(Some(items))
    }

    fn kinds<V: FromStr<Err = Error> + Copy>(&self, key: &str, all: &[V]) -> Result<Vec<V>> {
        match self.get(key) {
            None => Ok(all.to_vec()),
            Some(v) if v.trim().eq_ignore_ascii_case("all") => Ok(all.to_vec()),
            Some(v) => {
                let out = v
                    .split(',')
                    .map(|s| s.parse::<V>())
                    .collect::<Result<Vec<V>>>()
                    .map_err(|e| Error::Config(format!("{key}: {e}")))?;
                Ok(out)
            }
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.get("paths.out").unwrap_or("out"))
    }

    fn path(&self, key: &str, default_name: &str) -> PathBuf {
        self.get(key)
            .map(PathBuf::from)
            .unwrap_or_else(|| self.out_dir().join(default_name))
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.path("paths.metrics", "metrics.csv")
    }

    pub fn pipeline(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig {
            signals: self.path("paths.signals", "signals.csv"),
            costs: self.path("paths.costs", "costs.csv"),
            out_dir: self.out_dir(),
            ..PipelineConfig::default()
        };

        let schema = &mut cfg.schema;
        for (key, field) in [
            ("signals.sensor_id", &mut schema.sensor_id),
            ("signals.load_pct", &mut schema.load_pct),
            ("signals.state_code", &mut schema.state_code),
            ("signals.sample_index", &mut schema.sample_index),
            ("signals.value", &mut schema.value),
        ] {
            if let Some(v) = self.get(key) {
                *field = v.to_string();
            }
        }
        schema.positive_code =
            self.parsed_or("labels.positive", "a state code", SignalSchema::default().positive_code)?;

        let m = &mut cfg.metrics;
        m.denoise.levels = self.parsed("denoise.levels", "a level count or auto")?;
        if m.denoise.levels == Some(0) {
            return Err(bad("denoise.levels", "0", "at least 1 level"));
        }
        m.trend.mode = match self.get("trend.mode").map(str::to_ascii_lowercase).as_deref() {
            None | Some("normalized") => TrendMode::Normalized,
            Some("literal") => TrendMode::Literal,
            Some(v) => return Err(bad("trend.mode", v, "normalized or literal")),
        };
        m.trend.max_lag = self.parsed("trend.max_lag", "a lag or auto")?;
        m.detectability_cap = self.parsed("detect.cap", "a number or none")?;

        cfg.models = self.kinds("dea.model", &DeaModel::ALL)?;
        cfg.dea.eps = self.parsed_or("dea.eps", "a non-negative number", cfg.dea.eps)?;
        if !(cfg.dea.eps >= 0.0 && cfg.dea.eps < 1.0) {
            return Err(bad("dea.eps", &cfg.dea.eps.to_string(), "a value in [0, 1)"));
        }
        cfg.dea.efficiency_tol = self.parsed_or("dea.efficiency_tol", "a small number", cfg.dea.efficiency_tol)?;
        cfg.dea.normalize_additive = self.flag("dea.normalize", true)?;
        cfg.rule.threshold = self.parsed("dea.threshold", "a value in (0, 1] or none")?;
        if let Some(t) = cfg.rule.threshold {
            if !(t > 0.0 && t <= 1.0) {
                return Err(bad("dea.threshold", &t.to_string(), "a value in (0, 1] or none"));
            }
        }
        cfg.rule.top_n = self.parsed("dea.top_n", "a count or none")?;
        if cfg.rule.top_n == Some(0) {
            return Err(bad("dea.top_n", "0", "a positive count or none"));
        }

        cfg.classifiers = self.kinds("classify.classifier", &ClassifierKind::ALL)?;
        let defaults = GridConfig::<f64>::default();
        cfg.grids = GridConfig {
            knn_k: self
                .list("classify.knn_grid", "comma-separated k values")?
                .unwrap_or(defaults.knn_k),
            svm_c: self
                .list("classify.svm_grid", "comma-separated C values")?
                .unwrap_or(defaults.svm_c),
            svm_epochs: self.parsed_or("classify.svm_epochs", "an epoch count", defaults.svm_epochs)?,
        };
        if cfg.grids.knn_k.contains(&0) {
            return Err(bad("classify.knn_grid", "0", "k >= 1"));
        }
        if cfg.grids.svm_c.iter().any(|&c| c.is_nan() || c <= 0.0) {
            return Err(bad(
                "classify.svm_grid",
                &format!("{:?}", cfg.grids.svm_c),
                "positive C values",
            ));
        }

        cfg.seed = self.parsed_or("split.seed", "an unsigned integer", cfg.seed)?;
        cfg.test_fraction = self.parsed_or("split.test_fraction", "a fraction", cfg.test_fraction)?;
        if !(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0) {
            return Err(bad(
                "split.test_fraction",
                &cfg.test_fraction.to_string(),
                "a value in (0, 1)",
            ));
        }
        cfg.pearson = self.flag("select.pearson", false)?;
        cfg.pearson_top_n = self.parsed("select.pearson_top_n", "a count or none")?;
        Ok(cfg)
    }

    pub fn synth(&self) -> Result<SynthSpec> {
        let channels: usize = self.parsed_or("synth.channels", "a channel count", BENCHMARK_CHANNELS)?;
        let samples: usize = self.parsed_or("synth.samples", "a sample count", BENCHMARK_SAMPLES)?;
        let seed: u64 = self.parsed_or("synth.seed", "an unsigned integer", BENCHMARK_SEED)?;
        if channels == 0 {
            return Err(bad("synth.channels", "0", "a positive count"));
        }
        let spec = match self.get("synth.preset").map(str::to_ascii_lowercase).as_deref() {
            None | Some("benchmark") => SynthSpec::benchmark(channels, samples, seed),
            Some("uniform") => {
                let template = ChannelSpec {
                    key: ChannelKey::new("s", "0"),
                    offset: self.parsed_or("synth.offset", "a number", 10.0)?,
                    snr: self.parsed_or("synth.snr", "a positive number or inf", 100.0)?,
                    trend: self.parsed_or("synth.trend", "a number", 1.0)?,
                    separation: self.parsed_or("synth.separation", "a number", 1.0)?,
                    cost_range: (
                        self.parsed_or("synth.cost_min", "a positive number", 50.0)?,
                        self.parsed_or("synth.cost_max", "a positive number", 150.0)?,
                    ),
                    informative: true,
                };
                SynthSpec::uniform(channels, samples, seed, &template)
            }
            Some(v) => return Err(bad("synth.preset", v, "benchmark or uniform")),
        };
        spec.validate()?;
        Ok(spec)
    }
}
