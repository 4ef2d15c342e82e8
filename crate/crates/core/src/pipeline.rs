//! End-to-end flow: characterize channels, score them with DEA, select, then
//! tune, train and evaluate each classifier on each selection.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::classify::{build_features, cross_validate, stratified_split, ClassifierKind, FeatureMatrix, GridConfig};
use crate::dea::{score_all, ColumnShift, DeaModel, DeaOptions, EfficiencyResult};
use crate::error::{Error, Result};
use crate::eval::{confusion, metrics, roc_auc, RocCurve};
use crate::ingest::{join, load_costs, load_signals, JoinedDataset, SignalDataset, SignalSchema};
use crate::report::{self, EvaluationRow, ModelSummary};
use crate::select::{assemble_dmus, pearson_rank, select_by_efficiency, Method, SelectionResult, SelectionRule};
use crate::sigmetrics::{characterize, Characterization, MetricsConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub signals: PathBuf,
    pub costs: PathBuf,
    pub out_dir: PathBuf,
    /// Column names and the positive state code.
    pub schema: SignalSchema,
    pub metrics: MetricsConfig<f64>,
    pub models: Vec<DeaModel>,
    pub dea: DeaOptions<f64>,
    pub rule: SelectionRule<f64>,
    pub classifiers: Vec<ClassifierKind>,
    pub grids: GridConfig<f64>,
    pub seed: u64,
    pub test_fraction: f64,
    /// Also evaluate the Pearson-ranked baseline.
    pub pearson: bool,
    pub pearson_top_n: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            signals: PathBuf::from("signals.csv"),
            costs: PathBuf::from("costs.csv"),
            out_dir: PathBuf::from("out"),
            schema: SignalSchema::default(),
            metrics: MetricsConfig::default(),
            models: DeaModel::ALL.to_vec(),
            dea: DeaOptions::default(),
            rule: SelectionRule::default(),
            classifiers: ClassifierKind::ALL.to_vec(),
            grids: GridConfig::default(),
            seed: 42,
            test_fraction: 0.5,
            pearson: false,
            pearson_top_n: None,
        }
    }
}

pub fn method_name(method: Method, kind: ClassifierKind) -> String {
    format!("{}-{}", method.label(), kind.label())
}

pub fn efficiency_file(model: DeaModel) -> String {
    format!("efficiency_{}.csv", model.name())
}

pub fn selection_file(method: Method) -> String {
    format!("selection_{}.json", method.name())
}

pub fn model_file(method: Method, kind: ClassifierKind) -> String {
    format!("model_{}_{}.json", method.name(), kind.name())
}

pub fn roc_file(method: Method, kind: ClassifierKind) -> String {
    format!("roc_{}_{}.csv", method.name(), kind.name())
}

/// Loads signals and costs and joins them.
pub fn load_inputs(cfg: &PipelineConfig) -> Result<JoinedDataset<f64>> {
    let dataset = load_signals(&cfg.signals, &cfg.schema)?;
    let costs = load_costs(&cfg.costs)?;
    join(dataset, &costs)
}

#[derive(Debug, Clone)]
pub struct ModelOutcome {
    pub model: DeaModel,
    pub results: Vec<EfficiencyResult<f64>>,
    pub selection: SelectionResult<f64>,
}

#[derive(Debug)]
pub struct DeaStage {
    pub shifts: Vec<ColumnShift<f64>>,
    pub outcomes: Vec<ModelOutcome>,
    /// Models whose scoring or selection failed.
    pub failures: Vec<(DeaModel, Error)>,
}

/// Scores every channel under each model and applies the selection rule.
pub fn run_dea(
    rows: &[crate::sigmetrics::MetricsRow<f64>],
    models: &[DeaModel],
    opts: &DeaOptions<f64>,
    rule: &SelectionRule<f64>,
) -> Result<DeaStage> {
    let assembly = assemble_dmus(rows)?;
    let mut outcomes = Vec::new();
    let mut failures = Vec::new();
    for &model in models {
        let scored = score_all(&assembly.dmus, model, opts)
            .and_then(|results| select_by_efficiency(&results, rule).map(|selection| (results, selection)));
        match scored {
            Ok((results, selection)) => {
                log::info!("{model}: {} of {} channels selected", selection.len(), results.len());
                outcomes.push(ModelOutcome {
                    model,
                    results,
                    selection,
                });
            }
            Err(e) => {
                log::error!("{model}: {e}");
                failures.push((model, e));
            }
        }
    }
    Ok(DeaStage {
        shifts: assembly.shifts,
        outcomes,
        failures,
    })
}

/// The shared hold-out split: rows depend only on the dataset, so every
/// selection sees the same train/test partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn make_split(dataset: &SignalDataset<f64>, test_fraction: f64, seed: u64) -> Result<Split> {
    let probe = build_features(dataset, &[dataset.channels()[0].key.clone()])?;
    let (train, test) = stratified_split(&probe.labels, test_fraction, seed)?;
    Ok(Split { train, test })
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub summary: ModelSummary<f64>,
    pub seconds: f64,
}

/// Cross-validates the grid on the training rows and refits the winner there.
pub fn train_on_split(
    features: &FeatureMatrix<f64>,
    split: &Split,
    method: Method,
    kind: ClassifierKind,
    grids: &GridConfig<f64>,
    seed: u64,
) -> Result<Trained> {
    let start = Instant::now();
    let train = features.subset(&split.train);
    let (cv, model) = cross_validate(&train, &grids.grid(kind), seed)?;
    let seconds = start.elapsed().as_secs_f64();
    Ok(Trained {
        summary: ModelSummary {
            method: method_name(method, kind),
            hyperparameters: cv.chosen,
            features: features.columns.clone(),
            cv,
            model,
        },
        seconds,
    })
}

#[derive(Debug, Clone)]
pub struct Evaluated {
    pub row: EvaluationRow<f64>,
    pub roc: RocCurve<f64>,
}

/// Scores the held-out rows.
pub fn evaluate_on_split(
    summary: &ModelSummary<f64>,
    features: &FeatureMatrix<f64>,
    split: &Split,
) -> Result<Evaluated> {
    let test = features.subset(&split.test);
    let pred = summary.model.predict(&test.rows)?;
    let cm = confusion(&test.labels, &pred.labels)?;
    let roc = roc_auc(&pred.scores, &test.labels)?;
    let mut m = metrics(&cm);
    m.auc = Some(roc.auc);
    Ok(Evaluated {
        row: EvaluationRow {
            method: summary.method.clone(),
            n_selected: features.n_cols(),
            report: m,
        },
        roc,
    })
}

#[derive(Debug, Clone)]
pub struct PairOutcome {
    pub method: Method,
    pub kind: ClassifierKind,
    pub trained: Trained,
    pub evaluated: Evaluated,
}

#[derive(Debug)]
pub struct PipelineReport {
    pub characterization: Characterization<f64>,
    pub dea: DeaStage,
    pub pearson: Option<SelectionResult<f64>>,
    pub pairs: Vec<PairOutcome>,
    /// `(method, message)` for every pair that did not produce a row.
    pub failures: Vec<(String, String)>,
}

impl PipelineReport {
    pub fn rows(&self) -> Vec<&EvaluationRow<f64>> {
        self.pairs.iter().map(|p| &p.evaluated.row).collect()
    }

    pub fn selection(&self, method: Method) -> Option<&SelectionResult<f64>> {
        match method {
            Method::Pearson => self.pearson.as_ref(),
            Method::Dea(m) => self.dea.outcomes.iter().find(|o| o.model == m).map(|o| &o.selection),
        }
    }

    pub fn pair(&self, method: Method, kind: ClassifierKind) -> Option<&PairOutcome> {
        self.pairs.iter().find(|p| p.method == method && p.kind == kind)
    }
}

fn run_pair(
    dataset: &SignalDataset<f64>,
    selection: &SelectionResult<f64>,
    split: &Split,
    kind: ClassifierKind,
    cfg: &PipelineConfig,
) -> Result<PairOutcome> {
    let features = build_features(dataset, &selection.keys())?;
    let trained = train_on_split(&features, split, selection.method, kind, &cfg.grids, cfg.seed)?;
    let evaluated = evaluate_on_split(&trained.summary, &features, split)?;
    Ok(PairOutcome {
        method: selection.method,
        kind,
        trained,
        evaluated,
    })
}

/// Runs every stage. Input errors abort; a failing (model, classifier) pair
/// is recorded and the remaining pairs still run.
pub fn run(cfg: &PipelineConfig) -> Result<PipelineReport> {
    let joined = load_inputs(cfg)?;
    run_joined(&joined, cfg)
}

pub fn run_joined(joined: &JoinedDataset<f64>, cfg: &PipelineConfig) -> Result<PipelineReport> {
    let characterization = characterize(joined, &cfg.metrics);
    for (key, e) in &characterization.flagged {
        log::warn!("channel {key} excluded: {e}");
    }
    if characterization.rows.is_empty() {
        return Err(Error::Channels(
            characterization
                .flagged
                .into_iter()
                .map(|(k, e)| (k.to_string(), e))
                .collect(),
        ));
    }
    let dea = run_dea(&characterization.rows, &cfg.models, &cfg.dea, &cfg.rule)?;
    let pearson = if cfg.pearson {
        Some(pearson_rank(&joined.dataset, cfg.pearson_top_n)?)
    } else {
        None
    };
    let split = make_split(&joined.dataset, cfg.test_fraction, cfg.seed)?;

    let mut pairs = Vec::new();
    let mut failures = Vec::new();
    for &kind in &cfg.classifiers {
        for (model, err) in &dea.failures {
            failures.push((method_name(Method::Dea(*model), kind), err.to_string()));
        }
        let selections = dea.outcomes.iter().map(|o| &o.selection).chain(pearson.as_ref());
        for selection in selections {
            let name = method_name(selection.method, kind);
            match run_pair(&joined.dataset, selection, &split, kind, cfg) {
                Ok(p) => {
                    log::info!(
                        "{name}: accuracy {} auc {}",
                        p.evaluated.row.report.accuracy,
                        p.evaluated.roc.auc
                    );
                    pairs.push(p);
                }
                Err(e) => {
                    log::error!("{name}: {e}");
                    failures.push((name, e.to_string()));
                }
            }
        }
    }
    Ok(PipelineReport {
        characterization,
        dea,
        pearson,
        pairs,
        failures,
    })
}

pub fn write_metrics_files(characterization: &Characterization<f64>, dir: &Path) -> Result<()> {
    report::write_metrics(&characterization.rows, report::create(&dir.join("metrics.csv"))?)?;
    report::write_flagged(&characterization.flagged, report::create(&dir.join("flagged.csv"))?)
}

pub fn write_dea_files(stage: &DeaStage, dir: &Path) -> Result<()> {
    for o in &stage.outcomes {
        report::write_efficiency(&o.results, report::create(&dir.join(efficiency_file(o.model)))?)?;
        report::write_selection(
            &o.selection,
            report::create(&dir.join(selection_file(Method::Dea(o.model))))?,
        )?;
    }
    Ok(())
}

/// Writes every report. `timings.csv` is the only file whose content
/// depends on anything but the inputs and the seed.
pub fn write_reports(report: &PipelineReport, dir: &Path) -> Result<()> {
    write_metrics_files(&report.characterization, dir)?;
    write_dea_files(&report.dea, dir)?;
    if let Some(p) = &report.pearson {
        report::write_selection(p, report::create(&dir.join(selection_file(Method::Pearson)))?)?;
    }
    let rows: Vec<EvaluationRow<f64>> = report.rows().into_iter().cloned().collect();
    report::write_evaluation(&rows, report::create(&dir.join("evaluation.csv"))?)?;
    report::write_failures(&report.failures, report::create(&dir.join("failures.csv"))?)?;
    let mut timings = Vec::new();
    for p in &report.pairs {
        report::write_roc(&p.evaluated.roc, report::create(&dir.join(roc_file(p.method, p.kind)))?)?;
        report::write_model(
            &p.trained.summary,
            report::create(&dir.join(model_file(p.method, p.kind)))?,
        )?;
        timings.push((p.trained.summary.method.clone(), p.trained.seconds));
    }
    report::write_timings(&timings, report::create(&dir.join("timings.csv"))?)
}
