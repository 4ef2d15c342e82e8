use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};
use sensor_select::classify::build_features;
use sensor_select::config::{self, Config};
use sensor_select::ingest::{join, load_costs, load_signals};
use sensor_select::pipeline::{self, PipelineConfig};
use sensor_select::report::{self, EvaluationRow, ModelSummary};
use sensor_select::select::{field_name, pearson_rank, select_by_efficiency, Method};
use sensor_select::sigmetrics::characterize;
use sensor_select::{Error, Result};

const AFTER_HELP: &str = "\
Any configuration key can be given as a flag of the same dotted name,
e.g. `--dea.threshold 0.9` or `--split.test_fraction=0.3`.
Run `sensor-select keys` for the full list.

Exit status: 0 success, 1 computation failure, 2 input or usage error.";

#[derive(Parser, Debug)]
#[command(name = "sensor-select", version, about = "Sensor channel selection with DEA", after_help = AFTER_HELP)]
struct Cli {
    /// `section.key = value` configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Seed for the generator, the split, the folds and the SVM.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// DEA model(s): ccr, iobcc, oobcc, additive or all (comma list accepted).
    #[arg(long, global = true)]
    model: Option<String>,
    /// Classifier(s): knn, gnb, svm or all (comma list accepted).
    #[arg(long, global = true)]
    classifier: Option<String>,
    /// Output directory; also the default location of every input file.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Write synthetic signals.csv and costs.csv.
    Synth,
    /// Compute per-channel metrics into metrics.csv.
    Characterize,
    /// Score metrics.csv with DEA; writes efficiency and selection reports.
    Dea,
    /// Re-apply the selection rule to existing efficiency reports.
    Select,
    /// Tune and fit classifiers on the training split of each selection.
    Train,
    /// Score trained models on the held-out split.
    Evaluate,
    /// Run every stage and write all reports.
    Pipeline,
    /// List configuration keys.
    Keys,
}

type Overrides = Vec<(String, String)>;

/// Pulls `--section.key value` / `--section.key=value` pairs out of the
/// argument list so clap only sees its own flags.
fn split_overrides(args: Vec<String>) -> std::result::Result<(Vec<String>, Overrides), String> {
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let Some(flag) = arg
            .strip_prefix("--")
            .filter(|f| f.split('=').next().is_some_and(|k| k.contains('.')))
        else {
            rest.push(arg);
            continue;
        };
        let (key, value) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it.next().ok_or_else(|| format!("--{flag} needs a value"))?;
                (flag.to_string(), v)
            }
        };
        if !config::is_known(&key) {
            return Err(format!("unknown option --{key}; run `sensor-select keys` for the list"));
        }
        overrides.push((key, value));
    }
    Ok((rest, overrides))
}

fn build_config(cli: &Cli, overrides: &[(String, String)]) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    if let Some(seed) = cli.seed {
        cfg.set("split.seed", &seed.to_string())?;
        cfg.set("synth.seed", &seed.to_string())?;
    }
    if let Some(m) = &cli.model {
        cfg.set("dea.model", m)?;
    }
    if let Some(c) = &cli.classifier {
        cfg.set("classify.classifier", c)?;
    }
    if let Some(out) = &cli.out {
        cfg.set("paths.out", &out.to_string_lossy())?;
    }
    Ok(cfg)
}

/// Outcome of a command that ran to completion but may have partial failures.
enum Status {
    Ok,
    Partial(String),
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn methods(p: &PipelineConfig) -> Vec<Method> {
    let mut m: Vec<Method> = p.models.iter().map(|&d| Method::Dea(d)).collect();
    if p.pearson {
        m.push(Method::Pearson);
    }
    m
}

fn cmd_synth(cfg: &Config) -> Result<Status> {
    let spec = cfg.synth()?;
    let dir = cfg.out_dir();
    spec.write(&dir)?;
    let informative = spec.channels.iter().filter(|c| c.informative).count();
    println!(
        "wrote {} channels ({} informative), {} samples per state, to {}",
        spec.channels.len(),
        informative,
        spec.samples_per_state,
        dir.display()
    );
    Ok(Status::Ok)
}

fn cmd_characterize(p: &PipelineConfig) -> Result<Status> {
    let joined = pipeline::load_inputs(p)?;
    let ch = characterize(&joined, &p.metrics);
    create_dir(&p.out_dir)?;
    pipeline::write_metrics_files(&ch, &p.out_dir)?;
    println!("{} channels characterized, {} flagged", ch.rows.len(), ch.flagged.len());
    if ch.flagged.is_empty() {
        return Ok(Status::Ok);
    }
    for (key, e) in &ch.flagged {
        eprintln!("channel {key}: {e}");
    }
    Ok(Status::Partial(format!("{} channel(s) flagged", ch.flagged.len())))
}

fn cmd_dea(cfg: &Config, p: &PipelineConfig) -> Result<Status> {
    let path = cfg.metrics_path();
    let rows = report::read_metrics(report::open(&path)?)?;
    let stage = pipeline::run_dea(&rows, &p.models, &p.dea, &p.rule)?;
    create_dir(&p.out_dir)?;
    pipeline::write_dea_files(&stage, &p.out_dir)?;
    for s in &stage.shifts {
        log::warn!(
            "column {} shifted by {} to make it positive",
            field_name(s.side, s.index),
            s.amount
        );
    }
    for o in &stage.outcomes {
        println!(
            "{}: {} of {} channels selected",
            o.model.label(),
            o.selection.len(),
            o.results.len()
        );
    }
    if stage.failures.is_empty() {
        return Ok(Status::Ok);
    }
    for (m, e) in &stage.failures {
        eprintln!("{}: {e}", m.label());
    }
    Ok(Status::Partial(format!("{} model(s) failed", stage.failures.len())))
}

fn cmd_select(p: &PipelineConfig) -> Result<Status> {
    create_dir(&p.out_dir)?;
    for &model in &p.models {
        let path = p.out_dir.join(pipeline::efficiency_file(model));
        let results = report::read_efficiency::<f64, _>(report::open(&path)?)?;
        let sel = select_by_efficiency(&results, &p.rule)?;
        let out = p.out_dir.join(pipeline::selection_file(Method::Dea(model)));
        report::write_selection(&sel, report::create(&out)?)?;
        println!(
            "{}: {} of {} channels selected",
            model.label(),
            sel.len(),
            results.len()
        );
    }
    if p.pearson {
        let dataset = load_signals::<f64>(&p.signals, &p.schema)?;
        let sel = pearson_rank(&dataset, p.pearson_top_n)?;
        report::write_selection(
            &sel,
            report::create(&p.out_dir.join(pipeline::selection_file(Method::Pearson)))?,
        )?;
        println!("Pearson: {} channels selected", sel.len());
    }
    Ok(Status::Ok)
}

fn load_dataset(p: &PipelineConfig) -> Result<sensor_select::SignalDataset> {
    // Costs are not needed past selection, but joining keeps the same
    // channel checks as the earlier stages.
    let dataset = load_signals::<f64>(&p.signals, &p.schema)?;
    let costs = load_costs::<f64>(&p.costs)?;
    Ok(join(dataset, &costs)?.dataset)
}

fn cmd_train(p: &PipelineConfig) -> Result<Status> {
    let dataset = load_dataset(p)?;
    let split = pipeline::make_split(&dataset, p.test_fraction, p.seed)?;
    let mut timings = Vec::new();
    let mut failures = Vec::new();
    create_dir(&p.out_dir)?;
    for method in methods(p) {
        let path = p.out_dir.join(pipeline::selection_file(method));
        let sel = report::read_selection::<f64, _>(report::open(&path)?)?;
        let features = build_features(&dataset, &sel.keys())?;
        for &kind in &p.classifiers {
            let name = pipeline::method_name(method, kind);
            match pipeline::train_on_split(&features, &split, method, kind, &p.grids, p.seed) {
                Ok(t) => {
                    report::write_model(
                        &t.summary,
                        report::create(&p.out_dir.join(pipeline::model_file(method, kind)))?,
                    )?;
                    println!("{name}: {:?}", t.summary.hyperparameters);
                    timings.push((name, t.seconds));
                }
                Err(e) => {
                    eprintln!("{name}: {e}");
                    failures.push((name, e.to_string()));
                }
            }
        }
    }
    report::write_timings(&timings, report::create(&p.out_dir.join("timings.csv"))?)?;
    Ok(partial(&failures))
}

fn cmd_evaluate(p: &PipelineConfig) -> Result<Status> {
    let dataset = load_dataset(p)?;
    let split = pipeline::make_split(&dataset, p.test_fraction, p.seed)?;
    let mut rows: Vec<EvaluationRow<f64>> = Vec::new();
    let mut failures = Vec::new();
    create_dir(&p.out_dir)?;
    for &kind in &p.classifiers {
        for method in methods(p) {
            let path = p.out_dir.join(pipeline::model_file(method, kind));
            let summary: ModelSummary<f64> = report::read_model(report::open(&path)?)?;
            let name = summary.method.clone();
            let evaluated = build_features(&dataset, &summary.features)
                .and_then(|f| pipeline::evaluate_on_split(&summary, &f, &split));
            match evaluated {
                Ok(ev) => {
                    report::write_roc(
                        &ev.roc,
                        report::create(&p.out_dir.join(pipeline::roc_file(method, kind)))?,
                    )?;
                    rows.push(ev.row);
                }
                Err(e) => {
                    eprintln!("{name}: {e}");
                    failures.push((name, e.to_string()));
                }
            }
        }
    }
    report::write_evaluation(&rows, report::create(&p.out_dir.join("evaluation.csv"))?)?;
    report::write_failures(&failures, report::create(&p.out_dir.join("failures.csv"))?)?;
    print_rows(rows.iter());
    Ok(partial(&failures))
}

fn cmd_pipeline(p: &PipelineConfig) -> Result<Status> {
    let rep = pipeline::run(p)?;
    create_dir(&p.out_dir)?;
    pipeline::write_reports(&rep, &p.out_dir)?;
    for (key, e) in &rep.characterization.flagged {
        eprintln!("channel {key} excluded: {e}");
    }
    for o in &rep.dea.outcomes {
        println!(
            "{}: {} of {} channels selected",
            o.model.label(),
            o.selection.len(),
            o.results.len()
        );
    }
    if let Some(s) = &rep.pearson {
        println!("Pearson: {} channels selected", s.len());
    }
    print_rows(rep.rows().into_iter());
    for (m, e) in &rep.failures {
        eprintln!("{m}: {e}");
    }
    Ok(partial(&rep.failures))
}

fn partial(failures: &[(String, String)]) -> Status {
    if failures.is_empty() {
        Status::Ok
    } else {
        Status::Partial(format!("{} pair(s) failed", failures.len()))
    }
}

fn print_rows<'a>(rows: impl Iterator<Item = &'a EvaluationRow<f64>>) {
    for r in rows {
        let m = &r.report;
        println!(
            "{:<20} n={:<3} accuracy={:.4} F+={:.4} F-={:.4} AUC={}",
            r.method,
            r.n_selected,
            m.accuracy,
            m.f_pos,
            m.f_neg,
            m.auc.map(|a| format!("{a:.4}")).unwrap_or_else(|| "-".into())
        );
    }
}

fn run(cli: &Cli, overrides: &[(String, String)]) -> Result<Status> {
    if cli.command == Command::Keys {
        for (k, d) in config::KEYS {
            println!("{k:<24} {d}");
        }
        return Ok(Status::Ok);
    }
    let cfg = build_config(cli, overrides)?;
    if cli.command == Command::Synth {
        return cmd_synth(&cfg);
    }
    let p = cfg.pipeline()?;
    match cli.command {
        Command::Characterize => cmd_characterize(&p),
        Command::Dea => cmd_dea(&cfg, &p),
        Command::Select => cmd_select(&p),
        Command::Train => cmd_train(&p),
        Command::Evaluate => cmd_evaluate(&p),
        Command::Pipeline => cmd_pipeline(&p),
        Command::Synth | Command::Keys => unreachable!(),
    }
}

fn main() -> ExitCode {
    let (args, overrides) = match split_overrides(std::env::args().collect()) {
        Ok(x) => x,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(&cli, &overrides) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Partial(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 1 })
        }
    }
}
