use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use edgecare::classify::{
    evaluate_classifier, train_decision_tree, train_naive_bayes, train_random_forest,
    ClassifierModel, ForestParams, LabeledDataset, ModelDocument, Schema, TreeParams, Value,
};
use edgecare::config::Config;
use edgecare::manifest::{PatientFiles, RunManifest};
use edgecare::measurement::read_measurements_csv;
use edgecare::messaging::{build_message_xml, file_stem, MeasurementStore};
use edgecare::pipeline::{PatientInput, PatientRun, Pipeline};
use edgecare::rules::{parse_rules, Disease};
use edgecare::signal::read_signal_csv;
use edgecare::time::{now_ms, parse_timestamp, TimestampMs};
use edgecare::SignalKind;

const EXIT_ALARM: u8 = 2;
const EXIT_ERROR: u8 = 1;
const EXIT_USAGE: u8 = 64;

/// Edge-side monitoring pipeline for chronic patients.
#[derive(Parser)]
#[command(name = "edgecare", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Process signals and measurements, evaluate rules, and build the outbound message.
    Run(RunArgs),
    /// Train a classifier on a labelled CSV of the 41 standard attributes.
    Train(TrainArgs),
    /// Print MAE, RMSE, RAE and accuracy of a model on a labelled CSV.
    Eval(EvalArgs),
    /// Parse and validate rule files without running them.
    RulesCheck(RulesCheckArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML manifest listing patients and their files.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Pipeline configuration (defaults apply when omitted).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Rule file; overrides the manifest and the config.
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Classifier model document; overrides the config.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Output directory for the artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Persistent store directory. Without it every run starts from an empty in-memory store.
    #[arg(long)]
    store: Option<PathBuf>,
    /// Single-patient mode: the patient id.
    #[arg(long)]
    patient: Option<String>,
    /// ECG CSV (`timestamp_ms,value`, mV).
    #[arg(long)]
    ecg: Option<PathBuf>,
    /// Respiration-band CSV (`timestamp_ms,value`).
    #[arg(long)]
    respiration: Option<PathBuf>,
    /// Measurement CSV (`patient_id,kind,value,timestamp[,mode]`).
    #[arg(long)]
    measurements: Option<PathBuf>,
    /// Run only the rules for this disease; overrides the config.
    #[arg(long, value_enum)]
    disease: Option<DiseaseArg>,
    /// Daily send time, HH:MM UTC; overrides the config.
    #[arg(long)]
    send_time: Option<String>,
    /// Pin the clock (ISO 8601 or epoch ms). Defaults to the wall clock.
    #[arg(long)]
    now: Option<String>,
    /// Worker threads for per-patient signal processing [default: all cores].
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DiseaseArg {
    Copd,
    Ckd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Algorithm {
    Tree,
    Forest,
    Bayes,
}

#[derive(Args)]
struct TrainArgs {
    /// Labelled CSV: the 41 attribute columns then `class`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    algorithm: Algorithm,
    /// Where to write the model document.
    #[arg(long)]
    out: PathBuf,
    /// Tree depth limit (root is depth 0) [default: unbounded].
    #[arg(long)]
    max_depth: Option<usize>,
    /// Minimum rows per leaf.
    #[arg(long, default_value_t = 1)]
    min_leaf: usize,
    /// Forest size.
    #[arg(long, default_value_t = 25)]
    trees: usize,
    /// Attributes sampled per split [default: ceil(sqrt(41)) = 7].
    #[arg(long)]
    attrs_per_split: Option<usize>,
    /// Seed for the forest's bootstrap and attribute sampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Train each forest tree on the full data instead of a bootstrap sample.
    #[arg(long)]
    no_bootstrap: bool,
    /// Worker threads for forest training [default: all cores].
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// Labelled CSV with the model's attribute columns then `class`.
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args)]
struct RulesCheckArgs {
    #[arg(required = true)]
    files: Vec<PathBuf>,
}

enum Failure {
    Usage(String),
    Error(String),
}

impl From<edgecare::Error> for Failure {
    fn from(e: edgecare::Error) -> Self {
        Failure::Error(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Error(e.to_string())
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn in_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, Failure> {
    if jobs == Some(0) {
        return Err(usage("--jobs must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Failure::Error(e.to_string()))?;
    Ok(pool.install(f))
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::Error(format!("{}: {e}", path.display())))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Train(a) => cmd_train(a).map(|_| 0),
        Command::Eval(a) => cmd_eval(a).map(|_| 0),
        Command::RulesCheck(a) => cmd_rules_check(a).map(|_| 0),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(m)) => {
            eprintln!("usage error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Error(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn manifest_from(a: &RunArgs) -> Result<RunManifest, Failure> {
    let mut m = match &a.manifest {
        Some(p) if !p.is_file() => {
            return Err(usage(format!("cannot read manifest `{}`", p.display())))
        }
        Some(p) => RunManifest::load(p)?,
        None => RunManifest::default(),
    };
    let single = a.ecg.is_some() || a.respiration.is_some() || a.measurements.is_some();
    match &a.patient {
        Some(id) => m.patients.push(PatientFiles {
            id: id.clone(),
            ecg: a.ecg.clone(),
            respiration: a.respiration.clone(),
            measurements: a.measurements.clone(),
        }),
        None if single => {
            return Err(usage(
                "--ecg, --respiration and --measurements need --patient",
            ))
        }
        None => {}
    }
    if a.config.is_some() {
        m.config = a.config.clone();
    }
    if a.rules.is_some() {
        m.rules = a.rules.clone();
    }
    if a.out.is_some() {
        m.output = a.out.clone();
    }
    if a.store.is_some() {
        m.store = a.store.clone();
    }
    Ok(m)
}

fn cmd_run(a: RunArgs) -> Result<u8, Failure> {
    let mut m = manifest_from(&a)?;
    let mut config = match &m.config {
        Some(p) if p.is_file() => Config::load(p)?,
        Some(p) => return Err(usage(format!("cannot read `{}`", p.display()))),
        None => Config::default(),
    };
    if m.rules.is_none() {
        m.rules = config.rules.path.clone();
    }
    let problems = m.problems();
    if !problems.is_empty() {
        return Err(usage(problems.join("; ")));
    }
    if let Some(d) = a.disease {
        config.disease = Some(match d {
            DiseaseArg::Copd => Disease::Copd,
            DiseaseArg::Ckd => Disease::Ckd,
        });
    }
    if let Some(t) = &a.send_time {
        config.schedule.send_time = t.clone();
    }
    if let Some(p) = &a.model {
        config.classifier.model = Some(p.clone());
    }
    let now: TimestampMs = match &a.now {
        Some(t) => parse_timestamp(t).map_err(|e| usage(format!("--now: {e}")))?,
        None => now_ms(),
    };
    let rules_path = m.rules.clone().expect("checked by problems()");
    let rules = parse_rules(&fs::read_to_string(&rules_path)?)
        .map_err(|e| Failure::Error(format!("{}: {e}", rules_path.display())))?;
    let model = match &config.classifier.model {
        Some(p) if !p.is_file() => {
            return Err(usage(format!("cannot read model `{}`", p.display())))
        }
        Some(p) => Some(ModelDocument::from_json(&fs::read_to_string(p)?)?.model),
        None => None,
    };
    let mut inputs = Vec::new();
    for p in &m.patients {
        let ecg = match &p.ecg {
            Some(f) => Some(read_signal_csv(
                open(f)?,
                config.ecg.rate_hz,
                SignalKind::Ecg,
            )?),
            None => None,
        };
        let respiration = match &p.respiration {
            Some(f) => Some(read_signal_csv(
                open(f)?,
                config.respiration.rate_hz,
                SignalKind::Respiration,
            )?),
            None => None,
        };
        let records = match &p.measurements {
            Some(f) => read_measurements_csv(open(f)?)?,
            None => Vec::new(),
        };
        inputs.push(PatientInput {
            patient_id: p.id.clone(),
            ecg,
            respiration,
            records,
        });
    }
    let pipeline = Pipeline::new(config, rules, model)?;
    let mut store = match &m.store {
        Some(dir) => MeasurementStore::open(dir)?,
        None => MeasurementStore::in_memory(),
    };
    let runs = in_pool(a.jobs, || pipeline.run(&mut store, inputs, now))??;
    let out = m.output.expect("checked by problems()");
    write_artifacts(&out, &pipeline, &runs)?;
    for r in &runs {
        let alerts: Vec<String> = r
            .report
            .alerts
            .iter()
            .map(|a| format!("{} {}", a.severity.as_str(), a.rule_id))
            .collect();
        println!(
            "{}: {} alert(s){}, decision {}",
            r.patient_id,
            alerts.len(),
            if alerts.is_empty() {
                String::new()
            } else {
                format!(" [{}]", alerts.join(", "))
            },
            r.decision.as_str()
        );
        if let Some(c) = &r.classification {
            println!("{}: classified {}", r.patient_id, c.label.as_str());
        }
        for n in &r.notes {
            eprintln!("warning: {}: {n}", r.patient_id);
        }
    }
    Ok(if runs.iter().any(PatientRun::has_alarm) {
        EXIT_ALARM
    } else {
        0
    })
}

fn write_artifacts(out: &Path, pipeline: &Pipeline, runs: &[PatientRun]) -> Result<(), Failure> {
    fs::create_dir_all(out)
        .map_err(|e| usage(format!("cannot create `{}`: {e}", out.display())))?;
    let mut alerts = BufWriter::new(File::create(out.join("alerts.jsonl"))?);
    for r in runs {
        writeln!(alerts, "{}", r.report.to_json_line()?)?;
    }
    alerts.flush()?;

    let mut csv =
        csv::Writer::from_path(out.join("features.csv")).map_err(edgecare::Error::from)?;
    let header: Vec<&str> = ["patient_id", "timestamp"]
        .into_iter()
        .chain(pipeline.schema.names())
        .collect();
    csv.write_record(&header).map_err(edgecare::Error::from)?;
    for r in runs {
        let mut row = vec![r.patient_id.clone(), r.report.ts.clone()];
        row.extend(r.features.values().iter().map(|v| match v {
            None => "?".to_string(),
            Some(Value::Num(x)) => x.to_string(),
            Some(Value::Cat(s)) => s.clone(),
        }));
        csv.write_record(&row).map_err(edgecare::Error::from)?;
    }
    csv.flush()?;

    if pipeline.model.is_some() {
        let mut c = BufWriter::new(File::create(out.join("classification.csv"))?);
        writeln!(c, "patient_id,class,p_stable,p_light_worsening,p_worsening")?;
        for r in runs {
            if let Some(k) = &r.classification {
                let [a, b, d] = k.distribution;
                writeln!(c, "{},{},{a},{b},{d}", r.patient_id, k.label.as_str())?;
            }
        }
        c.flush()?;
    }

    for r in runs {
        let path = out.join(format!("outbound-{}.xml", file_stem(&r.patient_id)));
        match &r.message {
            Some(msg) => fs::write(&path, build_message_xml(msg)?)?,
            None if path.exists() => fs::remove_file(&path)?,
            None => {}
        }
    }
    Ok(())
}

fn read_dataset(schema: &Schema, path: &Path) -> Result<LabeledDataset, Failure> {
    if !path.is_file() {
        return Err(usage(format!("cannot read `{}`", path.display())));
    }
    let data = LabeledDataset::read_csv(schema, open(path)?)?;
    if data.is_empty() {
        return Err(usage(format!("`{}` has no rows", path.display())));
    }
    Ok(data)
}

fn cmd_train(a: TrainArgs) -> Result<(), Failure> {
    let data = read_dataset(Schema::chronic(), &a.data)?;
    let tree = TreeParams {
        max_depth: a.max_depth,
        min_leaf: a.min_leaf,
    };
    let model = match a.algorithm {
        Algorithm::Tree => ClassifierModel::Tree(train_decision_tree(&data, &tree)?),
        Algorithm::Bayes => ClassifierModel::Bayes(train_naive_bayes(&data)?),
        Algorithm::Forest => {
            let params = ForestParams {
                n_trees: a.trees,
                attrs_per_split: a.attrs_per_split,
                seed: a.seed,
                bootstrap: !a.no_bootstrap,
                tree,
            };
            ClassifierModel::Forest(in_pool(a.jobs, || train_random_forest(&data, &params))??)
        }
    };
    fs::write(&a.out, ModelDocument::new(model.clone()).to_json()?)?;
    println!("trained on {} rows; {}", data.len(), model.summary());
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<(), Failure> {
    if !a.model.is_file() {
        return Err(usage(format!("cannot read `{}`", a.model.display())));
    }
    let doc = ModelDocument::from_json(&fs::read_to_string(&a.model)?)?;
    let schema = edgecare::classify::Classifier::schema(&doc.model).clone();
    let data = read_dataset(&schema, &a.data)?;
    print!("{}", evaluate_classifier(&doc.model, &data)?);
    Ok(())
}

fn cmd_rules_check(a: RulesCheckArgs) -> Result<(), Failure> {
    let mut failed = 0;
    for f in &a.files {
        if !f.is_file() {
            return Err(usage(format!("cannot read `{}`", f.display())));
        }
        match parse_rules(&fs::read_to_string(f)?) {
            Ok(set) => println!("{}: ok, {} rule(s)", f.display(), set.len()),
            Err(e) => {
                println!("{}: {e}", f.display());
                failed += 1;
            }
        }
    }
    if failed > 0 {
        return Err(Failure::Error(format!("{failed} rule file(s) invalid")));
    }
    Ok(())
}
