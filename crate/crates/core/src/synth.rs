//! Seeded synthetic recordings and cost tables.
//!
//! Each channel is `offset + trend * t/N + separation * state_index + noise`,
//! with `t` the sample index within a state and noise drawn from
//! `N(0, (1/snr)^2)`. An infinite SNR gives noise-free channels.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{write_costs, write_signals, ChannelKey, ChannelSeries, CostProfile, SignalDataset, StateLabel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub key: ChannelKey,
    pub offset: f64,
    pub snr: f64,
    pub trend: f64,
    pub separation: f64,
    /// Each of the five cost components is drawn uniformly from this range.
    pub cost_range: (f64, f64),
    /// Ground truth for tests and reports; the generator ignores it.
    pub informative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub channels: Vec<ChannelSpec>,
    pub samples_per_state: usize,
    /// State codes in generation order; the first gets no mean shift.
    pub states: Vec<u32>,
    pub seed: u64,
}

pub const BENCHMARK_SEED: u64 = 42;
pub const BENCHMARK_CHANNELS: usize = 40;
pub const BENCHMARK_SAMPLES: usize = 500;

const SENSORS: usize = 10;
const LOADS: [&str; 4] = ["0", "25", "50", "75"];

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

impl SynthSpec {
    /// Channels with identical knobs, keyed `s1@0 .. sN@0`.
    pub fn uniform(channels: usize, samples_per_state: usize, seed: u64, template: &ChannelSpec) -> Self {
        let channels = (0..channels)
            .map(|i| ChannelSpec {
                key: ChannelKey::new(format!("s{}", i + 1), "0"),
                ..template.clone()
            })
            .collect();
        SynthSpec {
            channels,
            samples_per_state,
            states: vec![1, 2],
            seed,
        }
    }

    /// Mixed-quality layout: half the channels are low-noise, trending,
    /// well-separated and cheap; the rest are noisy, flat, barely separated
    /// and expensive. Channels are spread over sensors and load levels and the
    /// informative half is picked at random from the seed.
    pub fn benchmark(channels: usize, samples_per_state: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed_5eed_5eed);
        let mut informative = vec![false; channels];
        let mut order: Vec<usize> = (0..channels).collect();
        order.shuffle(&mut rng);
        for &i in &order[..channels / 2] {
            informative[i] = true;
        }
        let sensors = SENSORS.max(channels.div_ceil(LOADS.len()));
        let specs = (0..channels)
            .map(|i| {
                let key = if channels <= sensors * LOADS.len() {
                    ChannelKey::new(format!("s{}", i % sensors + 1), LOADS[i / sensors % LOADS.len()])
                } else {
                    ChannelKey::new(format!("s{}", i + 1), "0")
                };
                if informative[i] {
                    ChannelSpec {
                        key,
                        offset: uniform(&mut rng, 9.0, 11.0),
                        snr: uniform(&mut rng, 1000.0, 2000.0),
                        trend: uniform(&mut rng, 2.5, 5.0),
                        separation: uniform(&mut rng, 3.0, 8.0),
                        cost_range: (50.0, 150.0),
                        informative: true,
                    }
                } else {
                    ChannelSpec {
                        key,
                        offset: uniform(&mut rng, 1.5, 2.5),
                        snr: uniform(&mut rng, 1.0 / 3.0, 0.5),
                        trend: uniform(&mut rng, 0.0, 0.2),
                        separation: uniform(&mut rng, 0.0, 0.2),
                        cost_range: (160.0, 300.0),
                        informative: false,
                    }
                }
            })
            .collect();
        SynthSpec {
            channels: specs,
            samples_per_state,
            states: vec![1, 2],
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::Config("synthetic spec needs at least one channel".into()));
        }
        if self.samples_per_state < 2 {
            return Err(Error::Config(format!(
                "synthetic spec needs at least 2 samples per state, got {}",
                self.samples_per_state
            )));
        }
        if self.states.len() < 2 {
            return Err(Error::Config("synthetic spec needs at least 2 states".into()));
        }
        for c in &self.channels {
            let (lo, hi) = c.cost_range;
            let bad = |what: &str| Err(Error::Config(format!("channel {}: {what}", c.key)));
            if c.snr.is_nan() || c.snr <= 0.0 {
                return bad("SNR must be positive");
            }
            if !c.offset.is_finite() || !c.trend.is_finite() || !c.separation.is_finite() {
                return bad("offset, trend and separation must be finite");
            }
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return bad("cost range must satisfy 0 < min <= max");
            }
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<(SignalDataset<f64>, Vec<CostProfile<f64>>)> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let n = self.samples_per_state;
        let mut series = Vec::with_capacity(self.channels.len());
        let mut costs = Vec::with_capacity(self.channels.len());
        for c in &self.channels {
            let sigma = 1.0 / c.snr;
            let per_state = (0..self.states.len())
                .map(|j| {
                    (0..n)
                        .map(|t| {
                            let z: f64 = rng.sample(StandardNormal);
                            c.offset + c.trend * t as f64 / n as f64 + c.separation * j as f64 + sigma * z
                        })
                        .collect()
                })
                .collect();
            series.push(ChannelSeries::new(c.key.clone(), per_state));
            let (lo, hi) = c.cost_range;
            let mut draw = || uniform(&mut rng, lo, hi);
            costs.push(CostProfile {
                key: c.key.clone(),
                purchase: draw(),
                installation: draw(),
                replacement: draw(),
                disassembly: draw(),
                inspection: draw(),
                communication: 0.0,
            });
        }
        let states = self.states.iter().map(|&c| StateLabel::from_code(c)).collect();
        let dataset = SignalDataset::new(series, states, self.states[0])?;
        costs.sort_by(|a, b| a.key.cmp(&b.key));
        Ok((dataset, costs))
    }

    /// Writes `signals.csv` and `costs.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let (dataset, costs) = self.generate()?;
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let sig = dir.join("signals.csv");
        write_signals(
            &dataset,
            BufWriter::new(File::create(&sig).map_err(|e| Error::io(&sig, e))?),
        )?;
        let cost = dir.join("costs.csv");
        write_costs(
            &costs,
            BufWriter::new(File::create(&cost).map_err(|e| Error::io(&cost, e))?),
        )?;
        Ok(())
    }
}
