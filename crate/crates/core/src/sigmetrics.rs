//! Per-channel signal quality indicators: monotonicity, robustness,
//! trendability, detectability, variance and RMS.
//!
//! Every function takes the channel as one sample sequence per state. Averages
//! over states weight each state equally, regardless of its length.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ChannelKey, JoinedDataset};
use crate::scalar::{mean, median, pearson, Scalar};

/// Samples with a magnitude below this are left out of the robustness ratio.
pub const ZERO_SAMPLE: f64 = 1e-12;

/// Consistency constant turning a median absolute deviation into a Gaussian sigma.
const MAD_TO_SIGMA: f64 = 0.6745;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelMetrics<T> {
    pub monotonicity: T,
    pub robustness: T,
    pub trendability: T,
    pub detectability: T,
    pub variance: T,
    pub rms: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ThresholdRule {
    /// `sigma * sqrt(2 ln N)`
    #[default]
    Universal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ThresholdMode {
    #[default]
    Soft,
}

/// Haar wavelet shrinkage settings. `levels: None` picks `min(4, floor(log2 N))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DenoiseConfig {
    pub levels: Option<usize>,
    pub threshold_rule: ThresholdRule,
    pub mode: ThresholdMode,
}

impl DenoiseConfig {
    pub fn with_levels(levels: usize) -> Self {
        DenoiseConfig {
            levels: Some(levels),
            ..Default::default()
        }
    }

    fn resolve(&self, n: usize) -> Result<usize> {
        if n < 2 {
            return Err(Error::Shape(format!("cannot denoise {n} sample(s)")));
        }
        let max = max_levels(n);
        match self.levels {
            None => Ok(max.min(4)),
            Some(0) => Err(Error::Config("denoise levels must be positive".into())),
            Some(l) if l > max => Err(Error::Config(format!(
                "{l} denoise levels too deep for {n} samples (max {max})"
            ))),
            Some(l) => Ok(l),
        }
    }
}

fn max_levels(n: usize) -> usize {
    (usize::BITS - 1 - n.leading_zeros()) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TrendMode {
    /// Mean absolute lag-τ Pearson autocorrelation, τ = 1..=max_lag.
    #[default]
    Normalized,
    /// Raw sum of `|x_t * x_{t-τ}|` over t and τ = 1..=max_lag.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TrendConfig {
    pub mode: TrendMode,
    /// `None` picks `max(1, min(50, N / 4))`.
    pub max_lag: Option<usize>,
}

impl TrendConfig {
    fn resolve(&self, n: usize) -> Result<usize> {
        let lag = self.max_lag.unwrap_or_else(|| (n / 4).clamp(1, 50));
        if lag == 0 {
            return Err(Error::Parameter("max_lag must be at least 1".into()));
        }
        if lag >= n {
            return Err(Error::Parameter(format!(
                "max_lag {lag} must be below the state length {n}"
            )));
        }
        Ok(lag)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsConfig<T> {
    pub denoise: DenoiseConfig,
    pub trend: TrendConfig,
    /// When set, zero within-state scatter yields this detectability instead
    /// of flagging the channel.
    pub detectability_cap: Option<T>,
}

fn check_states<T>(states: &[Vec<T>], min_len: usize) -> Result<()> {
    if states.is_empty() {
        return Err(Error::Shape("channel has no states".into()));
    }
    if let Some(s) = states.iter().find(|s| s.len() < min_len) {
        return Err(Error::Shape(format!(
            "state has {} sample(s), need at least {min_len}",
            s.len()
        )));
    }
    Ok(())
}

fn state_average<T: Scalar>(states: &[Vec<T>], f: impl Fn(&[T]) -> T) -> T {
    states.iter().map(|s| f(s)).sum::<T>() / T::from_count(states.len())
}

pub fn monotonicity<T: Scalar>(states: &[Vec<T>]) -> Result<T> {
    check_states(states, 2)?;
    Ok(state_average(states, |x| {
        let (mut up, mut down) = (0i64, 0i64);
        for w in x.windows(2) {
            let d = w[1] - w[0];
            if d > T::zero() {
                up += 1;
            } else if d < T::zero() {
                down += 1;
            }
        }
        T::from_count((up - down).unsigned_abs() as usize) / T::from_count(x.len() - 1)
    }))
}

/// Haar wavelet shrinkage: forward transform, soft-threshold every detail band
/// at the universal threshold (noise scale from the finest band), inverse.
/// Odd-length bands are extended by repeating their last sample.
pub fn smooth<T: Scalar>(samples: &[T], cfg: &DenoiseConfig) -> Result<Vec<T>> {
    let n = samples.len();
    let levels = cfg.resolve(n)?;
    let h = T::lit(std::f64::consts::FRAC_1_SQRT_2);

    let mut approx = samples.to_vec();
    let mut details: Vec<Vec<T>> = Vec::with_capacity(levels);
    let mut lengths = Vec::with_capacity(levels);
    for _ in 0..levels {
        lengths.push(approx.len());
        if approx.len() % 2 == 1 {
            approx.push(*approx.last().expect("non-empty band"));
        }
        let (a, d): (Vec<T>, Vec<T>) = approx
            .chunks_exact(2)
            .map(|p| ((p[0] + p[1]) * h, (p[0] - p[1]) * h))
            .unzip();
        approx = a;
        details.push(d);
    }

    let finest = &details[0];
    let centre = median(finest);
    let abs_dev: Vec<T> = finest.iter().map(|&d| (d - centre).abs()).collect();
    let sigma = median(&abs_dev) / T::lit(MAD_TO_SIGMA);
    let threshold = match cfg.threshold_rule {
        ThresholdRule::Universal => sigma * (T::lit(2.0) * T::from_count(n).ln()).sqrt(),
    };
    for band in &mut details {
        for d in band.iter_mut() {
            *d = match cfg.mode {
                ThresholdMode::Soft => d.signum() * (d.abs() - threshold).max(T::zero()),
            };
        }
    }

    for (band, len) in details.iter().zip(&lengths).rev() {
        let mut next = Vec::with_capacity(band.len() * 2);
        for (&a, &d) in approx.iter().zip(band) {
            next.push((a + d) * h);
            next.push((a - d) * h);
        }
        next.truncate(*len);
        approx = next;
    }
    Ok(approx)
}

pub fn robustness<T: Scalar>(states: &[Vec<T>], cfg: &DenoiseConfig) -> Result<T> {
    check_states(states, 2)?;
    let trends = states.iter().map(|s| smooth(s, cfg)).collect::<Result<Vec<_>>>()?;
    robustness_with_trend(states, &trends)
}

/// Robustness against a caller-supplied trend (one sequence per state, same lengths).
pub fn robustness_with_trend<T: Scalar>(states: &[Vec<T>], trends: &[Vec<T>]) -> Result<T> {
    check_states(states, 1)?;
    if trends.len() != states.len() || trends.iter().zip(states).any(|(t, s)| t.len() != s.len()) {
        return Err(Error::Shape("trend does not match the signal shape".into()));
    }
    let tiny = T::lit(ZERO_SAMPLE);
    let per_state = states.iter().zip(trends).map(|(x, sm)| {
        let (sum, count) = x
            .iter()
            .zip(sm)
            .filter(|(v, _)| v.abs() >= tiny)
            .fold((T::zero(), 0usize), |(acc, c), (&v, &s)| {
                (acc + (-((v - s) / v).abs()).exp(), c + 1)
            });
        // An all-zero state has nothing to be perturbed.
        if count == 0 {
            T::one()
        } else {
            sum / T::from_count(count)
        }
    });
    Ok(per_state.sum::<T>() / T::from_count(states.len()))
}

pub fn trendability<T: Scalar>(states: &[Vec<T>], cfg: &TrendConfig) -> Result<T> {
    check_states(states, 2)?;
    let n = states.iter().map(Vec::len).min().unwrap_or(0);
    let max_lag = cfg.resolve(n)?;
    Ok(state_average(states, |x| match cfg.mode {
        TrendMode::Normalized => {
            let total: T = (1..=max_lag)
                .map(|lag| pearson(&x[lag..], &x[..x.len() - lag]).abs())
                .sum();
            total / T::from_count(max_lag)
        }
        TrendMode::Literal => (1..=max_lag)
            .flat_map(|lag| (lag..x.len()).map(move |t| (t, lag)))
            .map(|(t, lag)| (x[t] * x[t - lag]).abs())
            .sum(),
    }))
}

/// Between-state and within-state scatter, the two halves of the Fisher ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scatter<T> {
    pub between: T,
    pub within: T,
    /// Sum of squared samples; the scale against which `within` counts as zero.
    pub energy: T,
}

pub fn scatter<T: Scalar>(states: &[Vec<T>]) -> Result<Scatter<T>> {
    check_states(states, 1)?;
    if states.len() < 2 {
        return Err(Error::Shape("detectability needs at least 2 states".into()));
    }
    let total_n: usize = states.iter().map(Vec::len).sum();
    let grand = states.iter().flatten().copied().sum::<T>() / T::from_count(total_n);
    let mut out = Scatter {
        between: T::zero(),
        within: T::zero(),
        energy: T::zero(),
    };
    for s in states {
        let m = mean(s);
        out.between = out.between + T::from_count(s.len()) * (m - grand) * (m - grand);
        for &x in s {
            out.within = out.within + (x - m) * (x - m);
            out.energy = out.energy + x * x;
        }
    }
    Ok(out)
}

/// Fisher discriminant ratio: between-state scatter over within-state scatter.
pub fn detectability<T: Scalar>(states: &[Vec<T>]) -> Result<T> {
    let sc = scatter(states)?;
    if sc.within <= T::epsilon() * sc.energy {
        return Err(Error::Singularity { channel: String::new() });
    }
    Ok(sc.between / sc.within)
}

pub fn variance<T: Scalar>(states: &[Vec<T>]) -> Result<T> {
    check_states(states, 2)?;
    Ok(state_average(states, |x| {
        let m = mean(x);
        x.iter().map(|&v| (v - m) * (v - m)).sum::<T>() / T::from_count(x.len() - 1)
    }))
}

pub fn rms<T: Scalar>(states: &[Vec<T>]) -> Result<T> {
    check_states(states, 1)?;
    Ok(state_average(states, |x| {
        (x.iter().map(|&v| v * v).sum::<T>() / T::from_count(x.len())).sqrt()
    }))
}

pub fn channel_metrics<T: Scalar>(states: &[Vec<T>], cfg: &MetricsConfig<T>) -> Result<ChannelMetrics<T>> {
    let detectability = match (detectability(states), cfg.detectability_cap) {
        (Ok(d), Some(cap)) => d.min(cap),
        (Ok(d), None) => d,
        (Err(Error::Singularity { .. }), Some(cap)) => cap,
        (Err(e), _) => return Err(e),
    };
    Ok(ChannelMetrics {
        monotonicity: monotonicity(states)?,
        robustness: robustness(states, &cfg.denoise)?,
        trendability: trendability(states, &cfg.trend)?,
        detectability,
        variance: variance(states)?,
        rms: rms(states)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow<T> {
    pub key: ChannelKey,
    pub metrics: ChannelMetrics<T>,
    pub total_cost: T,
}

#[derive(Debug)]
pub struct Characterization<T> {
    pub rows: Vec<MetricsRow<T>>,
    pub flagged: Vec<(ChannelKey, Error)>,
}

/// Computes metrics for every channel. Failing channels are collected in
/// `flagged` rather than aborting the run.
pub fn characterize<T: Scalar>(joined: &JoinedDataset<T>, cfg: &MetricsConfig<T>) -> Characterization<T> {
    let mut rows = Vec::new();
    let mut flagged = Vec::new();
    for (ch, &total_cost) in joined.dataset.channels().iter().zip(&joined.total_costs) {
        match channel_metrics(ch.states(), cfg) {
            Ok(metrics) => rows.push(MetricsRow {
                key: ch.key.clone(),
                metrics,
                total_cost,
            }),
            Err(Error::Singularity { .. }) => flagged.push((
                ch.key.clone(),
                Error::Singularity {
                    channel: ch.key.to_string(),
                },
            )),
            Err(e) => flagged.push((ch.key.clone(), e)),
        }
    }
    Characterization { rows, flagged }
}
