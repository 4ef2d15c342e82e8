//! Supervised classifiers on selected channels: k-nearest neighbours, Gaussian
//! naive Bayes and a linear SVM, with stratified k-fold tuning.
//!
//! Every model standardizes its inputs with statistics of its own training rows.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ChannelKey, SignalDataset};
use crate::scalar::Scalar;

pub const CV_FOLDS: usize = 5;
pub const DEFAULT_KNN_GRID: [usize; 5] = [1, 3, 5, 7, 9];
pub const DEFAULT_SVM_GRID: [f64; 3] = [0.1, 1.0, 10.0];
pub const DEFAULT_SVM_EPOCHS: usize = 200;
pub const GNB_SMOOTHING: f64 = 1e-9;

/// Observations in rows, selected channels in columns. `labels[i]` is true
/// for the positive (healthy) state.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<T> {
    pub columns: Vec<ChannelKey>,
    pub rows: Vec<Vec<T>>,
    pub labels: Vec<bool>,
}

impl<T: Scalar> FeatureMatrix<T> {
    pub fn new(columns: Vec<ChannelKey>, rows: Vec<Vec<T>>, labels: Vec<bool>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::Shape(format!("{} rows but {} labels", rows.len(), labels.len())));
        }
        if let Some(i) = rows.iter().position(|r| r.len() != columns.len()) {
            return Err(Error::Shape(format!(
                "row {i} has {} values, expected {}",
                rows[i].len(),
                columns.len()
            )));
        }
        Ok(FeatureMatrix { columns, rows, labels })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        FeatureMatrix {
            columns: self.columns.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&l| l).count();
        (pos, self.labels.len() - pos)
    }
}

/// Row `t` of state `c` holds every selected channel's sample `t` in state `c`;
/// states are stacked in code order.
pub fn build_features<T: Scalar>(dataset: &SignalDataset<T>, selection: &[ChannelKey]) -> Result<FeatureMatrix<T>> {
    if selection.is_empty() {
        return Err(Error::Usage("cannot build features from an empty selection".into()));
    }
    let mut series = Vec::with_capacity(selection.len());
    for key in selection {
        let ch = dataset
            .channel(key)
            .ok_or_else(|| Error::Usage(format!("selected channel {key} is not in the dataset")))?;
        series.push(ch);
    }
    let n = dataset.samples_per_state();
    let mut rows = Vec::with_capacity(n * dataset.states().len());
    let mut labels = Vec::with_capacity(rows.capacity());
    for (j, state) in dataset.states().iter().enumerate() {
        for t in 0..n {
            rows.push(series.iter().map(|ch| ch.states()[j][t]).collect());
            labels.push(state.code == dataset.positive_code());
        }
    }
    FeatureMatrix::new(selection.to_vec(), rows, labels)
}

/// Per-column affine map to zero mean and unit (population) variance.
/// Constant columns are only centred.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer<T> {
    pub mean: Vec<T>,
    pub scale: Vec<T>,
}

impl<T: Scalar> Standardizer<T> {
    pub fn fit(rows: &[Vec<T>]) -> Self {
        let d = rows.first().map_or(0, Vec::len);
        let n = T::from_count(rows.len().max(1));
        let mut mean = vec![T::zero(); d];
        let mut scale = vec![T::one(); d];
        for j in 0..d {
            let m = rows.iter().map(|r| r[j]).sum::<T>() / n;
            let var = rows.iter().map(|r| (r[j] - m) * (r[j] - m)).sum::<T>() / n;
            let sd = var.sqrt();
            mean[j] = m;
            if sd > T::epsilon() * T::lit(64.0) * m.abs().max(T::one()) {
                scale[j] = sd;
            }
        }
        Standardizer { mean, scale }
    }

    pub fn apply(&self, row: &[T]) -> Vec<T> {
        row.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(&x, (&m, &s))| (x - m) / s)
            .collect()
    }

    pub fn apply_all(&self, rows: &[Vec<T>]) -> Vec<Vec<T>> {
        rows.iter().map(|r| self.apply(r)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Knn,
    Gnb,
    Svm,
}

impl ClassifierKind {
    /// Report order.
    pub const ALL: [ClassifierKind; 3] = [ClassifierKind::Knn, ClassifierKind::Svm, ClassifierKind::Gnb];

    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::Knn => "knn",
            ClassifierKind::Gnb => "gnb",
            ClassifierKind::Svm => "svm",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ClassifierKind::Knn => "KNN",
            ClassifierKind::Gnb => "NaiveBayes",
            ClassifierKind::Svm => "SVM",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .trim()
            .chars()
            .filter(|c| !matches!(c, '-' | '_' | ' '))
            .collect::<String>()
            .to_ascii_lowercase();
        match norm.as_str() {
            "knn" => Ok(ClassifierKind::Knn),
            "gnb" | "nb" | "naivebayes" => Ok(ClassifierKind::Gnb),
            "svm" => Ok(ClassifierKind::Svm),
            _ => Err(Error::Usage(format!(
                "unknown classifier '{s}' (expected knn, gnb or svm)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predictions<T> {
    pub labels: Vec<bool>,
    /// Larger means more likely positive.
    pub scores: Vec<T>,
}

fn check_rows<T: Scalar>(rows: &[Vec<T>], width: usize) -> Result<()> {
    for (i, r) in rows.iter().enumerate() {
        if r.len() != width {
            return Err(Error::Shape(format!(
                "row {i} has {} features, model expects {width}",
                r.len()
            )));
        }
    }
    Ok(())
}

fn check_training<T: Scalar>(fm: &FeatureMatrix<T>, min_per_class: usize) -> Result<()> {
    if fm.n_cols() == 0 {
        return Err(Error::Training("no feature columns".into()));
    }
    if let Some(i) = fm.rows.iter().position(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(Error::Training(format!("non-finite feature in training row {i}")));
    }
    let (pos, neg) = fm.class_counts();
    if pos == 0 || neg == 0 {
        return Err(Error::Training("training data contains a single class".into()));
    }
    if pos < min_per_class || neg < min_per_class {
        return Err(Error::Training(format!(
            "need at least {min_per_class} rows per class, have {pos} positive and {neg} negative"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------- KNN

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel<T> {
    pub k: usize,
    pub standardizer: Standardizer<T>,
    pub rows: Vec<Vec<T>>,
    pub labels: Vec<bool>,
}

pub fn knn_train<T: Scalar>(fm: &FeatureMatrix<T>, k: usize) -> Result<KnnModel<T>> {
    if k == 0 || k > fm.n_rows() {
        return Err(Error::Parameter(format!("k = {k} must be in 1..={}", fm.n_rows())));
    }
    check_training(fm, 1)?;
    let standardizer = Standardizer::fit(&fm.rows);
    Ok(KnnModel {
        k,
        rows: standardizer.apply_all(&fm.rows),
        standardizer,
        labels: fm.labels.clone(),
    })
}

impl<T: Scalar> KnnModel<T> {
    /// Positive-neighbour fraction and majority label (ties positive).
    /// Equal distances are broken by training-row order.
    fn score_one(&self, query: &[T], dist: &mut Vec<(T, usize)>) -> T {
        dist.clear();
        dist.extend(self.rows.iter().enumerate().map(|(i, r)| {
            let d = r.iter().zip(query).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>();
            (d, i)
        }));
        let cmp = |a: &(T, usize), b: &(T, usize)| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1));
        if self.k < dist.len() {
            dist.select_nth_unstable_by(self.k - 1, cmp);
        }
        let pos = dist[..self.k].iter().filter(|(_, i)| self.labels[*i]).count();
        T::from_count(pos) / T::from_count(self.k)
    }

    pub fn predict(&self, rows: &[Vec<T>]) -> Result<Predictions<T>> {
        check_rows(rows, self.standardizer.mean.len())?;
        let mut buf = Vec::with_capacity(self.rows.len());
        let scores: Vec<T> = rows
            .iter()
            .map(|r| self.score_one(&self.standardizer.apply(r), &mut buf))
            .collect();
        let labels = scores.iter().map(|&s| s >= T::lit(0.5)).collect();
        Ok(Predictions { labels, scores })
    }
}

// ---------------------------------------------------------------- Gaussian NB

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnbModel<T> {
    pub standardizer: Standardizer<T>,
    /// Index 0 is the positive class.
    pub means: [Vec<T>; 2],
    pub variances: [Vec<T>; 2],
    pub priors: [T; 2],
    pub smoothing: T,
}

pub fn gnb_train<T: Scalar>(fm: &FeatureMatrix<T>) -> Result<GnbModel<T>> {
    check_training(fm, 2)?;
    let standardizer = Standardizer::fit(&fm.rows);
    let rows = standardizer.apply_all(&fm.rows);
    let d = fm.n_cols();
    let overall = Standardizer::fit(&rows);
    let max_var = (0..d)
        .map(|j| {
            let m = overall.mean[j];
            rows.iter().map(|r| (r[j] - m) * (r[j] - m)).sum::<T>() / T::from_count(rows.len())
        })
        .fold(T::zero(), T::max);
    // All-constant data still needs a positive floor.
    let smoothing = T::lit(GNB_SMOOTHING) * if max_var > T::zero() { max_var } else { T::one() };

    let mut means = [vec![T::zero(); d], vec![T::zero(); d]];
    let mut variances = [vec![T::zero(); d], vec![T::zero(); d]];
    let mut priors = [T::zero(); 2];
    for (c, want) in [true, false].into_iter().enumerate() {
        let members: Vec<&Vec<T>> = rows
            .iter()
            .zip(&fm.labels)
            .filter(|(_, &l)| l == want)
            .map(|(r, _)| r)
            .collect();
        let n = T::from_count(members.len());
        priors[c] = n / T::from_count(rows.len());
        for j in 0..d {
            let m = members.iter().map(|r| r[j]).sum::<T>() / n;
            let v = members.iter().map(|r| (r[j] - m) * (r[j] - m)).sum::<T>() / n;
            means[c][j] = m;
            variances[c][j] = v + smoothing;
        }
    }
    Ok(GnbModel {
        standardizer,
        means,
        variances,
        priors,
        smoothing,
    })
}

impl<T: Scalar> GnbModel<T> {
    fn log_joint(&self, row: &[T], c: usize) -> T {
        let two_pi = T::lit(std::f64::consts::TAU);
        let half = T::lit(0.5);
        let mut acc = self.priors[c].ln();
        for ((&x, &m), &v) in row.iter().zip(&self.means[c]).zip(&self.variances[c]) {
            acc = acc - half * (two_pi * v).ln() - (x - m) * (x - m) / (T::lit(2.0) * v);
        }
        acc
    }

    /// Posterior probabilities `(positive, negative)` of one raw row.
    pub fn posteriors(&self, row: &[T]) -> (T, T) {
        let z = self.standardizer.apply(row);
        let (lp, ln) = (self.log_joint(&z, 0), self.log_joint(&z, 1));
        let pos = T::one() / (T::one() + (ln - lp).exp());
        let neg = T::one() / (T::one() + (lp - ln).exp());
        (pos, neg)
    }

    pub fn predict(&self, rows: &[Vec<T>]) -> Result<Predictions<T>> {
        check_rows(rows, self.standardizer.mean.len())?;
        let mut labels = Vec::with_capacity(rows.len());
        let mut scores = Vec::with_capacity(rows.len());
        for r in rows {
            let z = self.standardizer.apply(r);
            let (lp, ln) = (self.log_joint(&z, 0), self.log_joint(&z, 1));
            labels.push(lp >= ln);
            scores.push(T::one() / (T::one() + (ln - lp).exp()));
        }
        Ok(Predictions { labels, scores })
    }
}

// ---------------------------------------------------------------- linear SVM

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel<T> {
    pub standardizer: Standardizer<T>,
    pub weights: Vec<T>,
    pub bias: T,
    pub c: T,
    pub epochs: usize,
}

/// Regularized hinge loss `lambda/2 |w|^2 + mean(max(0, 1 - y f(x)))` of an
/// augmented weight vector (bias last) on augmented standardized rows.
fn hinge_objective<T: Scalar>(w: &[T], rows: &[Vec<T>], y: &[T], lambda: T) -> T {
    let reg = w.iter().map(|&v| v * v).sum::<T>() * lambda / T::lit(2.0);
    let loss = rows
        .iter()
        .zip(y)
        .map(|(r, &yi)| {
            let m = r.iter().zip(w).map(|(&a, &b)| a * b).sum::<T>();
            (T::one() - yi * m).max(T::zero())
        })
        .sum::<T>()
        / T::from_count(rows.len());
    reg + loss
}

/// Stochastic subgradient descent with step `1/(lambda t)`, `lambda = 1/(C n)`,
/// one seeded permutation per epoch and projection onto the ball of radius
/// `1/sqrt(lambda)`. The returned weights are the average of all iterates; the
/// trace holds the objective of that average at every epoch boundary.
fn svm_fit<T: Scalar>(
    fm: &FeatureMatrix<T>,
    c: T,
    epochs: usize,
    seed: u64,
    mut trace: Option<&mut Vec<T>>,
) -> Result<SvmModel<T>> {
    if !c.is_finite() || c <= T::zero() {
        return Err(Error::Parameter(format!("SVM regularization C = {c} must be positive")));
    }
    if epochs == 0 {
        return Err(Error::Parameter("SVM needs at least one epoch".into()));
    }
    check_training(fm, 1)?;
    let standardizer = Standardizer::fit(&fm.rows);
    let rows: Vec<Vec<T>> = fm
        .rows
        .iter()
        .map(|r| {
            let mut z = standardizer.apply(r);
            z.push(T::one());
            z
        })
        .collect();
    let y: Vec<T> = fm
        .labels
        .iter()
        .map(|&l| if l { T::one() } else { -T::one() })
        .collect();
    let n = rows.len();
    let d = rows[0].len();
    let lambda = T::one() / (c * T::from_count(n));
    let radius = T::one() / lambda.sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut w = vec![T::zero(); d];
    let mut avg = vec![T::zero(); d];
    let mut t = 0usize;
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = T::one() / (lambda * T::from_count(t));
            let margin = y[i] * rows[i].iter().zip(&w).map(|(&a, &b)| a * b).sum::<T>();
            let shrink = T::one() - eta * lambda;
            for v in w.iter_mut() {
                *v = *v * shrink;
            }
            if margin < T::one() {
                for (v, &x) in w.iter_mut().zip(&rows[i]) {
                    *v = *v + eta * y[i] * x;
                }
            }
            let norm = w.iter().map(|&v| v * v).sum::<T>().sqrt();
            if norm > radius {
                let f = radius / norm;
                for v in w.iter_mut() {
                    *v = *v * f;
                }
            }
            let tf = T::from_count(t);
            for (a, &v) in avg.iter_mut().zip(&w) {
                *a = *a + (v - *a) / tf;
            }
        }
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(hinge_objective(&avg, &rows, &y, lambda));
        }
    }
    if avg.iter().any(|v| !v.is_finite()) {
        return Err(Error::Training("SVM weights diverged".into()));
    }
    let bias = avg.pop().unwrap_or_else(T::zero);
    Ok(SvmModel {
        standardizer,
        weights: avg,
        bias,
        c,
        epochs,
    })
}

pub fn svm_train<T: Scalar>(fm: &FeatureMatrix<T>, c: T, epochs: usize, seed: u64) -> Result<SvmModel<T>> {
    svm_fit(fm, c, epochs, seed, None)
}

/// Like [`svm_train`], also returning the objective at each epoch boundary.
pub fn svm_train_traced<T: Scalar>(
    fm: &FeatureMatrix<T>,
    c: T,
    epochs: usize,
    seed: u64,
) -> Result<(SvmModel<T>, Vec<T>)> {
    let mut trace = Vec::with_capacity(epochs);
    let model = svm_fit(fm, c, epochs, seed, Some(&mut trace))?;
    Ok((model, trace))
}

impl<T: Scalar> SvmModel<T> {
    pub fn margin(&self, row: &[T]) -> T {
        let z = self.standardizer.apply(row);
        z.iter().zip(&self.weights).map(|(&a, &b)| a * b).sum::<T>() + self.bias
    }

    pub fn predict(&self, rows: &[Vec<T>]) -> Result<Predictions<T>> {
        check_rows(rows, self.weights.len())?;
        let scores: Vec<T> = rows.iter().map(|r| self.margin(r)).collect();
        let labels = scores.iter().map(|&s| s >= T::zero()).collect();
        Ok(Predictions { labels, scores })
    }
}

// ---------------------------------------------------------------- common surface

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Hyperparams<T> {
    Knn { k: usize },
    Gnb,
    Svm { c: T, epochs: usize },
}

impl<T: Scalar> Hyperparams<T> {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            Hyperparams::Knn { .. } => ClassifierKind::Knn,
            Hyperparams::Gnb => ClassifierKind::Gnb,
            Hyperparams::Svm { .. } => ClassifierKind::Svm,
        }
    }

    /// Ordering used to break ties: smaller k, smaller C.
    fn size(&self) -> T {
        match *self {
            Hyperparams::Knn { k } => T::from_count(k),
            Hyperparams::Gnb => T::zero(),
            Hyperparams::Svm { c, .. } => c,
        }
    }
}

impl<T: Scalar> fmt::Display for Hyperparams<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hyperparams::Knn { k } => write!(f, "k={k}"),
            Hyperparams::Gnb => f.write_str("default"),
            Hyperparams::Svm { c, epochs } => write!(f, "C={c},epochs={epochs}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "lowercase")]
pub enum TrainedModel<T> {
    Knn(KnnModel<T>),
    Gnb(GnbModel<T>),
    Svm(SvmModel<T>),
}

/// Trains one model. `seed` only affects the SVM sample order.
pub fn train<T: Scalar>(fm: &FeatureMatrix<T>, params: &Hyperparams<T>, seed: u64) -> Result<TrainedModel<T>> {
    Ok(match *params {
        Hyperparams::Knn { k } => TrainedModel::Knn(knn_train(fm, k)?),
        Hyperparams::Gnb => TrainedModel::Gnb(gnb_train(fm)?),
        Hyperparams::Svm { c, epochs } => TrainedModel::Svm(svm_train(fm, c, epochs, seed)?),
    })
}

impl<T: Scalar> TrainedModel<T> {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            TrainedModel::Knn(_) => ClassifierKind::Knn,
            TrainedModel::Gnb(_) => ClassifierKind::Gnb,
            TrainedModel::Svm(_) => ClassifierKind::Svm,
        }
    }

    pub fn hyperparams(&self) -> Hyperparams<T> {
        match self {
            TrainedModel::Knn(m) => Hyperparams::Knn { k: m.k },
            TrainedModel::Gnb(_) => Hyperparams::Gnb,
            TrainedModel::Svm(m) => Hyperparams::Svm {
                c: m.c,
                epochs: m.epochs,
            },
        }
    }

    pub fn predict(&self, rows: &[Vec<T>]) -> Result<Predictions<T>> {
        match self {
            TrainedModel::Knn(m) => m.predict(rows),
            TrainedModel::Gnb(m) => m.predict(rows),
            TrainedModel::Svm(m) => m.predict(rows),
        }
    }
}

// ---------------------------------------------------------------- splitting and tuning

fn class_indices(labels: &[bool]) -> [Vec<usize>; 2] {
    let mut out = [Vec::new(), Vec::new()];
    for (i, &l) in labels.iter().enumerate() {
        out[usize::from(!l)].push(i);
    }
    out
}

/// Stratified hold-out split; returns sorted `(train, test)` row indices.
pub fn stratified_split(labels: &[bool], test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Split(format!("test fraction {test_fraction} outside (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (c, mut idx) in class_indices(labels).into_iter().enumerate() {
        let n_test = (idx.len() as f64 * test_fraction).round() as usize;
        if n_test == 0 || n_test == idx.len() {
            return Err(Error::Split(format!(
                "{} class has {} rows; cannot place rows on both sides of a {test_fraction} split",
                if c == 0 { "positive" } else { "negative" },
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Fold id per row: each class is shuffled and dealt round-robin.
pub fn stratified_folds(labels: &[bool], folds: usize, seed: u64) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; labels.len()];
    for (c, mut idx) in class_indices(labels).into_iter().enumerate() {
        if idx.len() < folds {
            return Err(Error::Split(format!(
                "{} class has {} rows, need at least {folds} for {folds}-fold cross-validation",
                if c == 0 { "positive" } else { "negative" },
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        for (j, &i) in idx.iter().enumerate() {
            fold[i] = j % folds;
        }
    }
    Ok(fold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCandidate<T> {
    pub params: Hyperparams<T>,
    pub fold_accuracy: Vec<T>,
    pub mean_accuracy: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport<T> {
    pub kind: ClassifierKind,
    pub folds: usize,
    pub candidates: Vec<CvCandidate<T>>,
    pub chosen: Hyperparams<T>,
}

fn accuracy<T: Scalar>(truth: &[bool], pred: &[bool]) -> T {
    let hits = truth.iter().zip(pred).filter(|(a, b)| a == b).count();
    T::from_count(hits) / T::from_count(truth.len())
}

/// Stratified 5-fold search over `grid` (all of one classifier kind). The
/// best mean validation accuracy wins, ties going to the smallest
/// hyperparameter; the winner is refit on every row.
pub fn cross_validate<T: Scalar>(
    fm: &FeatureMatrix<T>,
    grid: &[Hyperparams<T>],
    seed: u64,
) -> Result<(CvReport<T>, TrainedModel<T>)> {
    let Some(first) = grid.first() else {
        return Err(Error::Usage("empty hyperparameter grid".into()));
    };
    let kind = first.kind();
    if grid.iter().any(|p| p.kind() != kind) {
        return Err(Error::Usage("hyperparameter grid mixes classifier kinds".into()));
    }
    let fold = stratified_folds(&fm.labels, CV_FOLDS, seed)?;
    let mut candidates = Vec::with_capacity(grid.len());
    for params in grid {
        let mut fold_accuracy = Vec::with_capacity(CV_FOLDS);
        for f in 0..CV_FOLDS {
            let (val, tr): (Vec<usize>, Vec<usize>) = (0..fm.n_rows()).partition(|&i| fold[i] == f);
            let train_fm = fm.subset(&tr);
            let val_fm = fm.subset(&val);
            let model = train(&train_fm, params, seed)?;
            let pred = model.predict(&val_fm.rows)?;
            fold_accuracy.push(accuracy(&val_fm.labels, &pred.labels));
        }
        let mean_accuracy = fold_accuracy.iter().copied().sum::<T>() / T::from_count(CV_FOLDS);
        candidates.push(CvCandidate {
            params: *params,
            fold_accuracy,
            mean_accuracy,
        });
    }
    let best = candidates
        .iter()
        .min_by(|a, b| {
            b.mean_accuracy
                .partial_cmp(&a.mean_accuracy)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.params.size().partial_cmp(&b.params.size()).unwrap_or(Ordering::Equal))
        })
        .map(|c| c.params)
        .unwrap_or(*first);
    let model = train(fm, &best, seed)?;
    Ok((
        CvReport {
            kind,
            folds: CV_FOLDS,
            candidates,
            chosen: best,
        },
        model,
    ))
}

/// Candidate lists for each classifier kind.
#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig<T> {
    pub knn_k: Vec<usize>,
    pub svm_c: Vec<T>,
    pub svm_epochs: usize,
}

impl<T: Scalar> Default for GridConfig<T> {
    fn default() -> Self {
        GridConfig {
            knn_k: DEFAULT_KNN_GRID.to_vec(),
            svm_c: DEFAULT_SVM_GRID.iter().map(|&c| T::lit(c)).collect(),
            svm_epochs: DEFAULT_SVM_EPOCHS,
        }
    }
}

impl<T: Scalar> GridConfig<T> {
    pub fn grid(&self, kind: ClassifierKind) -> Vec<Hyperparams<T>> {
        match kind {
            ClassifierKind::Knn => self.knn_k.iter().map(|&k| Hyperparams::Knn { k }).collect(),
            ClassifierKind::Gnb => vec![Hyperparams::Gnb],
            ClassifierKind::Svm => self
                .svm_c
                .iter()
                .map(|&c| Hyperparams::Svm {
                    c,
                    epochs: self.svm_epochs,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{ChannelSeries, StateLabel};
    use proptest::prelude::*;
    use rand_distr::{Distribution, Normal};

    fn fm(rows: Vec<Vec<f64>>, labels: Vec<bool>) -> FeatureMatrix<f64> {
        let d = rows[0].len();
        let cols = (0..d).map(|j| ChannelKey::new(format!("c{j}"), "0")).collect();
        FeatureMatrix::new(cols, rows, labels).unwrap()
    }

    /// Two Gaussian clusters centred at +5 and -5 in every coordinate.
    fn clusters(n_per_class: usize, d: usize, seed: u64) -> FeatureMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (centre, label) in [(5.0, true), (-5.0, false)] {
            for _ in 0..n_per_class {
                rows.push((0..d).map(|_| centre + noise.sample(&mut rng)).collect());
                labels.push(label);
            }
        }
        fm(rows, labels)
    }

    fn two_state_dataset() -> SignalDataset<f64> {
        let ch = |name: &str, a: Vec<f64>, b: Vec<f64>| ChannelSeries::new(ChannelKey::new(name, "0"), vec![a, b]);
        SignalDataset::new(
            vec![
                ch("a", vec![1.0, 2.0], vec![3.0, 4.0]),
                ch("b", vec![5.0, 6.0], vec![7.0, 8.0]),
            ],
            vec![StateLabel::from_code(1), StateLabel::from_code(2)],
            1,
        )
        .unwrap()
    }

    #[test]
    fn features_stack_states_in_code_order() {
        let d = two_state_dataset();
        let f = build_features(&d, &[ChannelKey::new("b", "0")]).unwrap();
        assert_eq!((f.n_rows(), f.n_cols()), (4, 1));
        assert_eq!(f.rows, vec![vec![5.0], vec![6.0], vec![7.0], vec![8.0]]);
        assert_eq!(f.labels, vec![true, true, false, false]);
        let both = build_features(&d, &[ChannelKey::new("a", "0"), ChannelKey::new("b", "0")]).unwrap();
        assert_eq!(both.rows[2], vec![3.0, 7.0]);
    }

    #[test]
    fn features_reject_empty_or_unknown_selection() {
        let d = two_state_dataset();
        assert!(matches!(build_features(&d, &[]), Err(Error::Usage(_))));
        let err = build_features(&d, &[ChannelKey::new("zz", "0")]).unwrap_err();
        assert!(err.to_string().contains("zz@0"));
    }

    #[test]
    fn standardizer_centres_and_scales() {
        let f = clusters(30, 4, 1);
        let s = Standardizer::fit(&f.rows);
        let z = s.apply_all(&f.rows);
        for j in 0..4 {
            let m: f64 = z.iter().map(|r| r[j]).sum::<f64>() / z.len() as f64;
            let v: f64 = z.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / z.len() as f64;
            assert!(m.abs() < 1e-9 && (v - 1.0).abs() < 1e-9);
        }
        let constant = Standardizer::fit(&[vec![3.25], vec![3.25]]);
        assert_eq!(constant.scale, vec![1.0]);
    }

    #[test]
    fn knn_recovers_training_labels_at_k1() {
        let f = clusters(20, 3, 2);
        let m = knn_train(&f, 1).unwrap();
        assert_eq!(m.predict(&f.rows).unwrap().labels, f.labels);
        let q = m.predict(&[f.rows[7].clone()]).unwrap();
        assert_eq!(q.labels, vec![f.labels[7]]);
    }

    #[test]
    fn knn_vote_fraction() {
        let f = fm(
            vec![vec![0.0], vec![1.0], vec![2.0], vec![10.0], vec![11.0]],
            vec![true, true, false, false, false],
        );
        let m = knn_train(&f, 3).unwrap();
        let p = m.predict(&[vec![0.5]]).unwrap();
        assert!(p.labels[0]);
        assert!((p.scores[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!(matches!(knn_train(&f, 6), Err(Error::Parameter(_))));
        assert!(matches!(knn_train(&f, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn gnb_tie_goes_positive() {
        let f = fm(
            vec![vec![-1.0], vec![-2.0], vec![1.0], vec![2.0]],
            vec![true, true, false, false],
        );
        let m = gnb_train(&f).unwrap();
        let (p, n) = m.posteriors(&[0.0]);
        assert!((p - 0.5).abs() < 1e-12 && (n - 0.5).abs() < 1e-12);
        assert!(m.predict(&[vec![0.0]]).unwrap().labels[0]);
    }

    #[test]
    fn gnb_separated_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (c, l) in [(10.0, true), (-10.0, false)] {
            for _ in 0..200 {
                rows.push(vec![c + noise.sample(&mut rng)]);
                labels.push(l);
            }
        }
        let m = gnb_train(&fm(rows, labels)).unwrap();
        let p = m.predict(&[vec![10.0]]).unwrap();
        assert!(p.labels[0] && p.scores[0] > 0.999);
    }

    #[test]
    fn gnb_prior_decides_identical_likelihoods() {
        let mut rows = vec![vec![1.0], vec![-1.0]];
        let mut labels = vec![true, true];
        for i in 0..18 {
            rows.push(vec![if i % 2 == 0 { 1.0 } else { -1.0 }]);
            labels.push(false);
        }
        let m = gnb_train(&fm(rows, labels)).unwrap();
        let p = m.predict(&[vec![1.0], vec![0.0]]).unwrap();
        assert_eq!(p.labels, vec![false, false]);
        assert!((p.scores[0] - 0.1).abs() < 1e-9);
    }

    #[test]
    fn gnb_needs_two_classes_of_two() {
        let one_class = fm(vec![vec![1.0], vec![2.0]], vec![true, true]);
        assert!(matches!(gnb_train(&one_class), Err(Error::Training(_))));
        let thin = fm(vec![vec![1.0], vec![2.0], vec![3.0]], vec![true, false, false]);
        assert!(matches!(gnb_train(&thin), Err(Error::Training(_))));
    }

    #[test]
    fn svm_separates_clusters() {
        let f = clusters(50, 3, 4);
        let m = svm_train(&f, 1.0, DEFAULT_SVM_EPOCHS, 7).unwrap();
        assert_eq!(m.predict(&f.rows).unwrap().labels, f.labels);
        assert!(m.weights.iter().all(|w| w.is_finite()));
    }

    #[test]
    fn svm_objective_non_increasing_on_separable_data() {
        let f = clusters(50, 3, 5);
        for c in DEFAULT_SVM_GRID {
            let (_, trace) = svm_train_traced(&f, c, DEFAULT_SVM_EPOCHS, 11).unwrap();
            for w in trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-6, "C={c}: objective rose from {} to {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn svm_constant_features_follow_majority() {
        let mut labels = vec![true; 7];
        labels.extend(vec![false; 3]);
        let f = fm(vec![vec![2.0, 2.0]; 10], labels);
        let m = svm_train(&f, 1.0, 50, 1).unwrap();
        assert!(m.weights.iter().all(|w| w.abs() < 1e-12));
        assert!(m.predict(&[vec![2.0, 2.0]]).unwrap().labels[0]);
    }

    #[test]
    fn svm_rejects_non_finite_and_bad_c() {
        let f = fm(vec![vec![f64::NAN], vec![1.0]], vec![true, false]);
        assert!(matches!(svm_train(&f, 1.0, 5, 0), Err(Error::Training(_))));
        let g = fm(vec![vec![0.0], vec![1.0]], vec![true, false]);
        assert!(matches!(svm_train(&g, 0.0, 5, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn svm_predictions_survive_feature_rescaling() {
        let f = clusters(40, 3, 6);
        let scaled = fm(
            f.rows.iter().map(|r| r.iter().map(|v| v * 10.0).collect()).collect(),
            f.labels.clone(),
        );
        let a = svm_train(&f, 1.0, 100, 3).unwrap();
        let b = svm_train(&scaled, 1.0, 100, 3).unwrap();
        let probe = clusters(20, 3, 99);
        let probe_scaled: Vec<Vec<f64>> = probe
            .rows
            .iter()
            .map(|r| r.iter().map(|v| v * 10.0).collect())
            .collect();
        assert_eq!(
            a.predict(&probe.rows).unwrap().labels,
            b.predict(&probe_scaled).unwrap().labels
        );
    }

    #[test]
    fn cv_single_candidate_and_ties() {
        let f = clusters(20, 2, 8);
        let (r, m) = cross_validate(&f, &[Hyperparams::Knn { k: 3 }], 0).unwrap();
        assert_eq!(r.chosen, Hyperparams::Knn { k: 3 });
        assert_eq!(m.kind(), ClassifierKind::Knn);
        let grid = GridConfig::<f64>::default().grid(ClassifierKind::Knn);
        let (r, _) = cross_validate(&f, &grid, 0).unwrap();
        assert!(r.candidates.iter().all(|c| c.mean_accuracy == 1.0));
        assert_eq!(r.chosen, Hyperparams::Knn { k: 1 });
        let svm = GridConfig::<f64>::default().grid(ClassifierKind::Svm);
        let (r, _) = cross_validate(&f, &svm, 0).unwrap();
        assert_eq!(r.chosen, Hyperparams::Svm { c: 0.1, epochs: 200 });
    }

    #[test]
    fn cv_needs_five_per_class() {
        let f = fm(
            (0..9).map(|i| vec![f64::from(i)]).collect(),
            (0..9).map(|i| i < 4).collect(),
        );
        assert!(matches!(
            cross_validate(&f, &[Hyperparams::Gnb], 0),
            Err(Error::Split(_))
        ));
    }

    #[test]
    fn split_is_stratified_and_deterministic() {
        let labels: Vec<bool> = (0..1000).map(|i| i < 500).collect();
        let (tr, te) = stratified_split(&labels, 0.5, 42).unwrap();
        assert_eq!((tr.len(), te.len()), (500, 500));
        assert_eq!(te.iter().filter(|&&i| labels[i]).count(), 250);
        assert_eq!(stratified_split(&labels, 0.5, 42).unwrap(), (tr, te));
        assert!(stratified_split(&labels, 1.0, 42).is_err());
    }

    #[test]
    fn model_json_round_trip() {
        let f = clusters(10, 2, 9);
        for p in [
            Hyperparams::Knn { k: 3 },
            Hyperparams::Gnb,
            Hyperparams::Svm { c: 1.0, epochs: 10 },
        ] {
            let m = train(&f, &p, 1).unwrap();
            let json = serde_json::to_string(&m).unwrap();
            let back: TrainedModel<f64> = serde_json::from_str(&json).unwrap();
            assert_eq!(back.predict(&f.rows).unwrap(), m.predict(&f.rows).unwrap());
            assert_eq!(back.hyperparams(), p);
        }
    }

    #[test]
    fn kind_names_parse() {
        for k in ClassifierKind::ALL {
            assert_eq!(k.name().parse::<ClassifierKind>().unwrap(), k);
        }
        assert_eq!("Naive_Bayes".parse::<ClassifierKind>().unwrap(), ClassifierKind::Gnb);
        assert!("tree".parse::<ClassifierKind>().is_err());
    }

    #[test]
    fn f32_models_train() {
        let f = clusters(20, 2, 10);
        let f32m = FeatureMatrix::new(
            f.columns.clone(),
            f.rows.iter().map(|r| r.iter().map(|&v| v as f32).collect()).collect(),
            f.labels.clone(),
        )
        .unwrap();
        for p in [
            Hyperparams::Knn { k: 3 },
            Hyperparams::Gnb,
            Hyperparams::Svm { c: 1.0f32, epochs: 20 },
        ] {
            let m = train(&f32m, &p, 1).unwrap();
            assert_eq!(m.predict(&f32m.rows).unwrap().labels, f32m.labels);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn gnb_posteriors_sum_to_one(seed in any::<u64>(), q in prop::collection::vec(-8.0f64..8.0, 3)) {
            let m = gnb_train(&clusters(10, 3, seed)).unwrap();
            let (p, n) = m.posteriors(&q);
            prop_assert!((p + n - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn training_is_bitwise_reproducible(seed in any::<u64>()) {
            let f = clusters(15, 2, seed);
            for p in [Hyperparams::Knn { k: 3 }, Hyperparams::Gnb, Hyperparams::Svm { c: 1.0, epochs: 20 }] {
                let a = train(&f, &p, seed).unwrap();
                let b = train(&f, &p, seed).unwrap();
                prop_assert_eq!(a, b);
            }
        }
    }
}
