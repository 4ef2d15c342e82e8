//! Data envelopment analysis in multiplier form.
//!
//! Each model is the Charnes–Cooper linearization of a ratio program and is
//! solved with [`crate::lp`]:
//!
//! | model     | objective            | normalization        | per-DMU constraint              | free term |
//! |-----------|----------------------|----------------------|---------------------------------|-----------|
//! | CCR       | `u·y_l`              | `v·o_l = 1`          | `u·y_j - v·o_j <= 0`            | none      |
//! | IO-BCC    | `u·y_l + u0`         | `v·o_l = 1`          | `u·y_j + u0 - v·o_j <= 0`       | `u0`      |
//! | OO-BCC    | `u·y_l`              | `v·o_l + v0 = 1`     | `u·y_j - v·o_j - v0 <= 0`       | `v0`      |
//! | Additive  | `u·y_l - v·o_l - w0` | none                 | `u·y_j - v·o_j - w0 <= 0`       | `w0`      |
//!
//! Ratio models floor every multiplier at the non-Archimedean `eps`, measured
//! in units of the column maximum (`u_r * max_j y_rj >= eps`), which keeps
//! scores invariant to the units of each column. The additive model bounds
//! multipliers below by 1 and is solved on max-normalized columns by default.
//!
//! Returned weights always refer to the caller's (un-normalized) data.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::ChannelKey;
use crate::lp::{self, LinearProgram, LpStatus, Relation, SolverOptions};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeaModel {
    Ccr,
    IoBcc,
    OoBcc,
    Additive,
}

impl DeaModel {
    pub const ALL: [DeaModel; 4] = [DeaModel::Ccr, DeaModel::IoBcc, DeaModel::OoBcc, DeaModel::Additive];

    /// Lower-case identifier used on the command line and in file names.
    pub fn name(self) -> &'static str {
        match self {
            DeaModel::Ccr => "ccr",
            DeaModel::IoBcc => "iobcc",
            DeaModel::OoBcc => "oobcc",
            DeaModel::Additive => "additive",
        }
    }

    /// Display label used in evaluation tables.
    pub fn label(self) -> &'static str {
        match self {
            DeaModel::Ccr => "CCR",
            DeaModel::IoBcc => "IOBCC",
            DeaModel::OoBcc => "OOBCC",
            DeaModel::Additive => "Additive",
        }
    }

    pub fn is_ratio(self) -> bool {
        self != DeaModel::Additive
    }
}

impl fmt::Display for DeaModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DeaModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "ccr" => Ok(DeaModel::Ccr),
            "iobcc" => Ok(DeaModel::IoBcc),
            "oobcc" => Ok(DeaModel::OoBcc),
            "additive" | "add" => Ok(DeaModel::Additive),
            other => Err(Error::Usage(format!("unknown DEA model `{other}`"))),
        }
    }
}

/// One decision-making unit: desirable outputs and undesirable inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmuRecord<T> {
    pub id: ChannelKey,
    pub outputs: Vec<T>,
    pub inputs: Vec<T>,
}

impl<T> DmuRecord<T> {
    pub fn new(id: ChannelKey, outputs: Vec<T>, inputs: Vec<T>) -> Self {
        DmuRecord { id, outputs, inputs }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector<T> {
    pub u: Vec<T>,
    pub v: Vec<T>,
    /// `u0` (IO-BCC), `v0` (OO-BCC) or `w0` (additive); `None` for CCR.
    pub free: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyResult<T> {
    pub id: ChannelKey,
    pub model: DeaModel,
    pub score: T,
    pub weights: WeightVector<T>,
    pub efficient: bool,
    /// Multiplier floor the reported solve used (after any retry).
    pub eps_used: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeaOptions<T> {
    /// Non-Archimedean floor for ratio models; zero gives the literal `u, v >= 0`.
    pub eps: T,
    /// Divide columns by their maximum before solving the additive model.
    pub normalize_additive: bool,
    pub efficiency_tol: T,
    pub solver: SolverOptions<T>,
}

impl<T: Scalar> Default for DeaOptions<T> {
    fn default() -> Self {
        DeaOptions {
            eps: T::tolerance(1e-6),
            normalize_additive: true,
            efficiency_tol: T::tolerance(1e-6),
            solver: SolverOptions::default(),
        }
    }
}

impl<T: Scalar> DeaOptions<T> {
    pub fn is_efficient(&self, model: DeaModel, score: T) -> bool {
        if model.is_ratio() {
            score >= T::one() - self.efficiency_tol
        } else {
            score >= -self.efficiency_tol
        }
    }
}

fn dims<T: Scalar>(dmus: &[DmuRecord<T>]) -> Result<(usize, usize)> {
    let first = dmus.first().ok_or_else(|| Error::Usage("no DMUs to score".into()))?;
    let (r, s) = (first.outputs.len(), first.inputs.len());
    if r == 0 || s == 0 {
        return Err(Error::Shape("DMUs need at least one output and one input".into()));
    }
    for d in dmus {
        if d.outputs.len() != r || d.inputs.len() != s {
            return Err(Error::Shape(format!(
                "DMU {} has {} outputs / {} inputs, expected {r} / {s}",
                d.id,
                d.outputs.len(),
                d.inputs.len()
            )));
        }
        if d.outputs
            .iter()
            .chain(&d.inputs)
            .any(|v| !v.is_finite() || *v <= T::zero())
        {
            return Err(Error::Parameter(format!(
                "DMU {} has non-positive or non-finite data",
                d.id
            )));
        }
    }
    Ok((r, s))
}

/// Column-scaled copy of the data.
struct Scaled<T> {
    outputs: Vec<Vec<T>>,
    inputs: Vec<Vec<T>>,
    out_scale: Vec<T>,
    in_scale: Vec<T>,
}

impl<T: Scalar> Scaled<T> {
    fn new(dmus: &[DmuRecord<T>], normalize: bool) -> Result<Self> {
        let (r, s) = dims(dmus)?;
        let col_max = |f: &dyn Fn(&DmuRecord<T>) -> T| {
            if normalize {
                dmus.iter().map(f).fold(T::zero(), T::max)
            } else {
                T::one()
            }
        };
        let out_scale: Vec<T> = (0..r).map(|i| col_max(&|d| d.outputs[i])).collect();
        let in_scale: Vec<T> = (0..s).map(|i| col_max(&|d| d.inputs[i])).collect();
        let outputs = dmus
            .iter()
            .map(|d| d.outputs.iter().zip(&out_scale).map(|(&y, &c)| y / c).collect())
            .collect();
        let inputs = dmus
            .iter()
            .map(|d| d.inputs.iter().zip(&in_scale).map(|(&o, &c)| o / c).collect())
            .collect();
        Ok(Scaled {
            outputs,
            inputs,
            out_scale,
            in_scale,
        })
    }

    fn r(&self) -> usize {
        self.out_scale.len()
    }

    fn s(&self) -> usize {
        self.in_scale.len()
    }

    fn unscale(&self, x: &[T], has_free: bool) -> WeightVector<T> {
        let (r, s) = (self.r(), self.s());
        WeightVector {
            u: x[..r].iter().zip(&self.out_scale).map(|(&u, &c)| u / c).collect(),
            v: x[r..r + s].iter().zip(&self.in_scale).map(|(&v, &c)| v / c).collect(),
            free: has_free.then(|| x[r + s]),
        }
    }
}

/// Variables are laid out as `[u_1..u_R, v_1..v_S, free?]`.
fn build_lp<T: Scalar>(data: &Scaled<T>, l: usize, model: DeaModel, floor: T) -> LinearProgram<T> {
    let (r, s) = (data.r(), data.s());
    let has_free = model != DeaModel::Ccr;
    let nvars = r + s + usize::from(has_free);
    let free = r + s;

    let mut objective = vec![T::zero(); nvars];
    objective[..r].copy_from_slice(&data.outputs[l]);
    match model {
        DeaModel::IoBcc => objective[free] = T::one(),
        DeaModel::Additive => {
            for (c, &o) in objective[r..r + s].iter_mut().zip(&data.inputs[l]) {
                *c = -o;
            }
            objective[free] = -T::one();
        }
        DeaModel::Ccr | DeaModel::OoBcc => {}
    }
    let mut lp = LinearProgram::maximize(objective);

    if model != DeaModel::Additive {
        let mut norm = vec![T::zero(); nvars];
        norm[r..r + s].copy_from_slice(&data.inputs[l]);
        if model == DeaModel::OoBcc {
            norm[free] = T::one();
        }
        lp.add_constraint(norm, Relation::Eq, T::one());
    }

    for (y, o) in data.outputs.iter().zip(&data.inputs) {
        let mut row = vec![T::zero(); nvars];
        row[..r].copy_from_slice(y);
        for (c, &v) in row[r..r + s].iter_mut().zip(o) {
            *c = -v;
        }
        match model {
            DeaModel::IoBcc => row[free] = T::one(),
            DeaModel::OoBcc | DeaModel::Additive => row[free] = -T::one(),
            DeaModel::Ccr => {}
        }
        lp.add_constraint(row, Relation::Le, T::zero());
    }

    for j in 0..r + s {
        lp.set_lower_bound(j, floor);
    }
    if has_free {
        lp.set_free(free);
    }
    lp
}

fn model_error(id: &ChannelKey, message: impl Into<String>) -> Error {
    Error::Model {
        dmu: id.to_string(),
        message: message.into(),
    }
}

fn solve_scaled<T: Scalar>(
    dmus: &[DmuRecord<T>],
    data: &Scaled<T>,
    l: usize,
    model: DeaModel,
    opts: &DeaOptions<T>,
) -> Result<EfficiencyResult<T>> {
    if l >= dmus.len() {
        return Err(Error::Usage(format!(
            "DMU index {l} out of range ({} DMUs)",
            dmus.len()
        )));
    }
    let floors: Vec<T> = if model.is_ratio() {
        if opts.eps > T::zero() {
            vec![opts.eps, opts.eps / T::lit(100.0)]
        } else {
            vec![T::zero()]
        }
    } else {
        vec![T::one()]
    };

    for &floor in &floors {
        let lp = build_lp(data, l, model, floor);
        let sol = lp::solve_with(&lp, &opts.solver)?;
        match sol.status {
            LpStatus::Optimal => {
                let score = sol.objective;
                return Ok(EfficiencyResult {
                    id: dmus[l].id.clone(),
                    model,
                    score,
                    weights: data.unscale(&sol.x, model != DeaModel::Ccr),
                    efficient: opts.is_efficient(model, score),
                    eps_used: if model.is_ratio() { floor } else { T::zero() },
                });
            }
            LpStatus::Infeasible if model.is_ratio() => {
                log::debug!("{model} LP for {} infeasible with eps {floor}", dmus[l].id);
            }
            status => {
                return Err(model_error(&dmus[l].id, format!("{model} program is {status:?}")));
            }
        }
    }
    Err(model_error(
        &dmus[l].id,
        format!("{model} program infeasible even with eps {}", floors[floors.len() - 1]),
    ))
}

pub fn evaluate<T: Scalar>(
    dmus: &[DmuRecord<T>],
    l: usize,
    model: DeaModel,
    opts: &DeaOptions<T>,
) -> Result<EfficiencyResult<T>> {
    let normalize = model.is_ratio() || opts.normalize_additive;
    let data = Scaled::new(dmus, normalize)?;
    solve_scaled(dmus, &data, l, model, opts)
}

/// Constant returns to scale.
pub fn ccr<T: Scalar>(dmus: &[DmuRecord<T>], l: usize, opts: &DeaOptions<T>) -> Result<EfficiencyResult<T>> {
    evaluate(dmus, l, DeaModel::Ccr, opts)
}

/// Variable returns to scale, free term in the numerator.
pub fn bcc_input<T: Scalar>(dmus: &[DmuRecord<T>], l: usize, opts: &DeaOptions<T>) -> Result<EfficiencyResult<T>> {
    evaluate(dmus, l, DeaModel::IoBcc, opts)
}

/// Variable returns to scale, free term in the denominator.
pub fn bcc_output<T: Scalar>(dmus: &[DmuRecord<T>], l: usize, opts: &DeaOptions<T>) -> Result<EfficiencyResult<T>> {
    evaluate(dmus, l, DeaModel::OoBcc, opts)
}

/// Additive gap model; the score is `<= 0` and zero exactly on the frontier.
pub fn additive<T: Scalar>(dmus: &[DmuRecord<T>], l: usize, opts: &DeaOptions<T>) -> Result<EfficiencyResult<T>> {
    evaluate(dmus, l, DeaModel::Additive, opts)
}

/// Scores every DMU. Per-DMU failures are collected into [`Error::Dmus`].
pub fn score_all<T: Scalar>(
    dmus: &[DmuRecord<T>],
    model: DeaModel,
    opts: &DeaOptions<T>,
) -> Result<Vec<EfficiencyResult<T>>> {
    let normalize = model.is_ratio() || opts.normalize_additive;
    let data = Scaled::new(dmus, normalize)?;
    let mut results = Vec::with_capacity(dmus.len());
    let mut failures = Vec::new();
    for l in 0..dmus.len() {
        match solve_scaled(dmus, &data, l, model, opts) {
            Ok(r) => results.push(r),
            Err(e) => failures.push((dmus[l].id.to_string(), e)),
        }
    }
    if failures.is_empty() {
        Ok(results)
    } else {
        Err(Error::Dmus(failures))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Output,
    Input,
}

/// Record of a column lifted to strictly positive values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnShift<T> {
    pub side: Side,
    pub index: usize,
    pub amount: T,
}

/// Values below this count as non-positive for DEA purposes.
pub const POSITIVITY_FLOOR: f64 = 1e-9;
/// Shift target relative to the column's largest magnitude.
pub const SHIFT_FRACTION: f64 = 1e-6;

/// Adds a constant to every column whose minimum is below [`POSITIVITY_FLOOR`]
/// so that its minimum becomes `SHIFT_FRACTION * max|column|` (or `SHIFT_FRACTION`
/// for an all-zero column).
pub fn shift_nonpositive<T: Scalar>(dmus: &mut [DmuRecord<T>]) -> Vec<ColumnShift<T>> {
    let Some(first) = dmus.first() else {
        return Vec::new();
    };
    let (r, s) = (first.outputs.len(), first.inputs.len());
    let mut shifts = Vec::new();
    let columns = (0..r)
        .map(|i| (Side::Output, i))
        .chain((0..s).map(|i| (Side::Input, i)));
    for (side, index) in columns {
        let get = |d: &DmuRecord<T>| match side {
            Side::Output => d.outputs[index],
            Side::Input => d.inputs[index],
        };
        let min = dmus.iter().map(get).fold(T::infinity(), T::min);
        if min >= T::lit(POSITIVITY_FLOOR) {
            continue;
        }
        let mut scale = dmus.iter().map(|d| get(d).abs()).fold(T::zero(), T::max);
        if scale <= T::zero() {
            scale = T::one();
        }
        let amount = T::lit(SHIFT_FRACTION) * scale - min;
        for d in dmus.iter_mut() {
            let cell = match side {
                Side::Output => &mut d.outputs[index],
                Side::Input => &mut d.inputs[index],
            };
            *cell = *cell + amount;
        }
        shifts.push(ColumnShift { side, index, amount });
    }
    shifts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dmu(name: &str, outputs: &[f64], inputs: &[f64]) -> DmuRecord<f64> {
        DmuRecord::new(ChannelKey::new(name, "0"), outputs.to_vec(), inputs.to_vec())
    }

    fn opts() -> DeaOptions<f64> {
        DeaOptions::default()
    }

    #[test]
    fn lone_unit_is_efficient_everywhere() {
        let dmus = [dmu("a", &[3.0, 1.0], &[2.0])];
        for model in DeaModel::ALL {
            let r = evaluate(&dmus, 0, model, &opts()).unwrap();
            assert!(r.efficient, "{model}: {}", r.score);
            let target = if model.is_ratio() { 1.0 } else { 0.0 };
            assert!((r.score - target).abs() < 1e-9);
        }
    }

    #[test]
    fn single_ratio_ccr() {
        let dmus = [dmu("a", &[2.0], &[1.0]), dmu("b", &[1.0], &[1.0])];
        let a = ccr(&dmus, 0, &opts()).unwrap();
        let b = ccr(&dmus, 1, &opts()).unwrap();
        assert!((a.score - 1.0).abs() < 1e-9 && a.efficient);
        assert!((b.score - 0.5).abs() < 1e-9 && !b.efficient);
    }

    #[test]
    fn duplicates_share_the_frontier() {
        let dmus = [dmu("a", &[2.0, 5.0], &[1.0]), dmu("a2", &[2.0, 5.0], &[1.0])];
        for model in DeaModel::ALL {
            for l in 0..2 {
                assert!(evaluate(&dmus, l, model, &opts()).unwrap().efficient);
            }
        }
    }

    #[test]
    fn additive_dominated_is_negative() {
        let dmus = [dmu("a", &[2.0], &[1.0]), dmu("b", &[1.0], &[1.0])];
        let b = additive(&dmus, 1, &opts()).unwrap();
        assert!(b.score < -1e-3 && !b.efficient);
        let a = additive(&dmus, 0, &opts()).unwrap();
        assert!(a.efficient);
        // u, v >= 1 on normalized data
        let raw = DeaOptions {
            normalize_additive: false,
            ..opts()
        };
        let b = additive(&dmus, 1, &raw).unwrap();
        assert!(b.score <= -(2.0 - 1.0) + 1e-9);
    }

    #[test]
    fn weights_reproduce_score_on_original_data() {
        let dmus = [
            dmu("a", &[1.0, 30.0], &[10.0, 0.5]),
            dmu("b", &[4.0, 10.0], &[20.0, 0.2]),
            dmu("c", &[2.0, 25.0], &[15.0, 0.9]),
        ];
        for model in DeaModel::ALL {
            for l in 0..3 {
                let r = evaluate(&dmus, l, model, &opts()).unwrap();
                let w = &r.weights;
                let uy: f64 = w.u.iter().zip(&dmus[l].outputs).map(|(a, b)| a * b).sum();
                let vo: f64 = w.v.iter().zip(&dmus[l].inputs).map(|(a, b)| a * b).sum();
                let rebuilt = match model {
                    DeaModel::Ccr => uy / vo,
                    DeaModel::IoBcc => (uy + w.free.unwrap()) / vo,
                    DeaModel::OoBcc => uy / (vo + w.free.unwrap()),
                    DeaModel::Additive => uy - vo - w.free.unwrap(),
                };
                assert!(
                    (rebuilt - r.score).abs() < 1e-9,
                    "{model} l={l}: {rebuilt} vs {}",
                    r.score
                );
            }
        }
    }

    #[test]
    fn invalid_tables_rejected() {
        assert!(matches!(
            score_all::<f64>(&[], DeaModel::Ccr, &opts()),
            Err(Error::Usage(_))
        ));
        let bad = [dmu("a", &[0.0], &[1.0])];
        assert!(matches!(ccr(&bad, 0, &opts()), Err(Error::Parameter(_))));
        let ragged = [dmu("a", &[1.0], &[1.0]), dmu("b", &[1.0, 2.0], &[1.0])];
        assert!(matches!(ccr(&ragged, 0, &opts()), Err(Error::Shape(_))));
    }

    #[test]
    fn model_names_round_trip() {
        for m in DeaModel::ALL {
            assert_eq!(m.name().parse::<DeaModel>().unwrap(), m);
            assert_eq!(m.label().parse::<DeaModel>().unwrap(), m);
        }
        assert!("bcc".parse::<DeaModel>().is_err());
    }

    #[test]
    fn shift_lifts_zero_columns() {
        let mut dmus = vec![dmu("a", &[0.0, 2.0], &[5.0]), dmu("b", &[0.5, 4.0], &[1.0])];
        let shifts = shift_nonpositive(&mut dmus);
        assert_eq!(shifts.len(), 1);
        assert_eq!(shifts[0].side, Side::Output);
        assert_eq!(shifts[0].index, 0);
        assert!((shifts[0].amount - 0.5e-6).abs() < 1e-18);
        assert!(dmus[0].outputs[0] > 0.0);
        assert_eq!(dmus[1].outputs[1], 4.0);

        let mut zeros = vec![dmu("a", &[0.0], &[1.0]), dmu("b", &[0.0], &[2.0])];
        let shifts = shift_nonpositive(&mut zeros);
        assert_eq!(shifts[0].amount, 1e-6);
    }
}
