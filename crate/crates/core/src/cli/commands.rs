use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use super::{
    Cli, Command, DatasetArgs, FeaturesArgs, Inputs, RankArgs, ReportArgs, RunArgs, RunConfig, RunManifest, SynthArgs,
    ValidateArgs, EXIT_OK, EXIT_PIPELINE, EXIT_VALIDATION,
};
use crate::dataset::{build_dataset, Dataset, Scenario};
use crate::evaluation::{group_kfold, grid_search, rank_techniques, EvaluationReport, RankedList};
use crate::learners::{LearnerKind, LearnerSpec, ModelArtifact, TrainedModel};
use crate::metrics::{extract_session_features, write_feature_csv};
use crate::pipeline::FittedPipeline;
use crate::questionnaire::{read_questionnaire_file, QuestionnaireRecord};
use crate::selection::RankingReport;
use crate::session::{validate_session_log, SessionLog, TechniqueId};
use crate::synth::{generate_cohort, write_cohort, DemandMatrix};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("validation failed:\n{0}")]
    Validation(String),
    #[error("{stage}: {message}")]
    Stage { stage: &'static str, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Stage { .. } => EXIT_PIPELINE,
        }
    }
}

fn stage<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> CliError {
    move |e| CliError::Stage {
        stage,
        message: e.to_string(),
    }
}

/// The invocation as recorded in manifests: program name and `--threads`
/// dropped, since neither affects outputs.
pub fn recorded_argv(argv: &[OsString]) -> Vec<String> {
    let mut out = Vec::new();
    let mut skip = false;
    for a in argv.iter().skip(1) {
        let s = a.to_string_lossy().into_owned();
        if skip {
            skip = false;
            continue;
        }
        if s == "--threads" {
            skip = true;
            continue;
        }
        if s.starts_with("--threads=") {
            continue;
        }
        out.push(s);
    }
    out
}

pub fn dispatch(cli: Cli, recorded: Vec<String>) -> Result<i32, CliError> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(stage("config"))?,
        None => RunConfig::default(),
    };
    let seed = cli.seed.unwrap_or(config.seed);
    config = config.with_seed(seed);
    if let Some(n) = cli.threads {
        if rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global().is_err() {
            log::debug!("thread pool already initialized");
        }
    }
    log::info!("seed {seed}");
    match cli.command {
        Command::Validate(a) => cmd_validate(&a),
        Command::Features(a) => cmd_features(&a, &config, recorded),
        Command::Dataset(a) => cmd_dataset(&a, &config, recorded),
        Command::Run(a) => cmd_run(&a, config, recorded),
        Command::Rank(a) => cmd_rank(&a, config, recorded),
        Command::Synth(a) => cmd_synth(&a, config, recorded),
        Command::Report(a) => cmd_report(&a),
    }
}

/// Files as given; directories contribute their `.jsonl` files, sorted.
pub fn expand_paths(paths: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .map_err(stage("inputs"))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|q| q.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        return Err(CliError::Stage {
            stage: "inputs",
            message: "no session logs found".into(),
        });
    }
    Ok(out)
}

#[derive(Serialize)]
struct ViolationOut {
    path: String,
    line: Option<usize>,
    message: String,
}

fn collect_sessions(paths: &[PathBuf]) -> (Vec<SessionLog>, Vec<ViolationOut>) {
    let mut logs = Vec::new();
    let mut violations = Vec::new();
    for p in paths {
        match validate_session_log(p) {
            Ok(report) => {
                for v in &report.violations {
                    violations.push(ViolationOut {
                        path: p.display().to_string(),
                        line: v.line(),
                        message: v.to_string(),
                    });
                }
                if report.violations.is_empty() {
                    logs.extend(report.log);
                }
            }
            Err(e) => violations.push(ViolationOut {
                path: p.display().to_string(),
                line: e.line(),
                message: e.to_string(),
            }),
        }
    }
    (logs, violations)
}

fn render_violations(v: &[ViolationOut]) -> String {
    v.iter()
        .map(|v| match v.line {
            Some(l) => format!("{}:{l}: {}", v.path, v.message),
            None => format!("{}: {}", v.path, v.message),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn load_sessions(paths: &[PathBuf]) -> Result<(Vec<PathBuf>, Vec<SessionLog>), CliError> {
    let files = expand_paths(paths)?;
    let (logs, violations) = collect_sessions(&files);
    if !violations.is_empty() {
        return Err(CliError::Validation(render_violations(&violations)));
    }
    Ok((files, logs))
}

fn load_inputs(inputs: &Inputs) -> Result<(Vec<PathBuf>, Vec<SessionLog>, Vec<QuestionnaireRecord>), CliError> {
    let (files, logs) = load_sessions(&inputs.sessions)?;
    let q = read_questionnaire_file(&inputs.questionnaires).map_err(|e| CliError::Validation(e.to_string()))?;
    Ok((files, logs, q))
}

fn cmd_validate(a: &ValidateArgs) -> Result<i32, CliError> {
    let files = expand_paths(&a.paths)?;
    let (logs, violations) = collect_sessions(&files);
    if a.json {
        println!("{}", serde_json::to_string_pretty(&violations).expect("violations serialize"));
    } else if violations.is_empty() {
        println!("{} session logs, {} trials, no violations", logs.len(), logs.iter().map(|l| l.trials.len()).sum::<usize>());
    } else {
        println!("{}", render_violations(&violations));
        println!("{} violations", violations.len());
    }
    Ok(if violations.is_empty() { EXIT_OK } else { EXIT_VALIDATION })
}

/// Writes files into a directory and records their digests.
struct OutDir {
    dir: PathBuf,
    manifest: RunManifest,
}

impl OutDir {
    fn create(dir: &Path, manifest: RunManifest) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(stage("output"))?;
        Ok(OutDir {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    fn inputs(&mut self, files: &[PathBuf]) -> Result<(), CliError> {
        for f in files {
            self.manifest.add_input(f).map_err(stage("inputs"))?;
        }
        Ok(())
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        fs::write(self.dir.join(name), bytes).map_err(stage("output"))?;
        self.manifest.add_output(name, bytes);
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(stage("output"))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn finish(self) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(&self.manifest).map_err(stage("output"))?;
        text.push('\n');
        fs::write(self.dir.join("manifest.json"), text).map_err(stage("output"))
    }
}

fn features_csv(sessions: &[SessionLog], config: &RunConfig) -> Result<Vec<u8>, CliError> {
    let rows = extract_session_features(sessions, &config.metrics).map_err(stage("features"))?;
    let mut buf = Vec::new();
    write_feature_csv(&rows, config.metrics.all_device_pairs, &mut buf).map_err(stage("features"))?;
    Ok(buf)
}

fn dataset_csv(ds: &Dataset) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    ds.write_csv(&mut buf).map_err(stage("dataset"))?;
    Ok(buf)
}

fn cmd_features(a: &FeaturesArgs, config: &RunConfig, recorded: Vec<String>) -> Result<i32, CliError> {
    let (files, logs) = load_sessions(&a.sessions)?;
    let mut cfg = config.clone();
    cfg.metrics.all_device_pairs |= a.all_device_pairs;
    let csv = features_csv(&logs, &cfg)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(stage("output"))?;
    }
    fs::write(&a.out, &csv).map_err(stage("output"))?;
    let mut manifest = RunManifest::new(recorded, &cfg);
    for f in &files {
        manifest.add_input(f).map_err(stage("inputs"))?;
    }
    manifest.add_output(&a.out.display().to_string(), &csv);
    let mpath = a.out.with_extension("manifest.json");
    fs::write(&mpath, serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n")
        .map_err(stage("output"))?;
    println!("wrote {} ({} bytes)", a.out.display(), csv.len());
    Ok(EXIT_OK)
}

fn build(
    scenario: Scenario,
    calibration: Option<TechniqueId>,
    logs: &[SessionLog],
    q: &[QuestionnaireRecord],
    config: &RunConfig,
) -> Result<Dataset, CliError> {
    build_dataset(scenario, logs, q, calibration, &config.metrics).map_err(stage("dataset"))
}

fn cmd_dataset(a: &DatasetArgs, config: &RunConfig, recorded: Vec<String>) -> Result<i32, CliError> {
    let (files, logs, q) = load_inputs(&a.inputs)?;
    let ds = build(a.scenario, a.calibration, &logs, &q, config)?;
    let mut out = OutDir::create(&a.out_dir, RunManifest::new(recorded, config))?;
    out.inputs(&files)?;
    out.inputs(std::slice::from_ref(&a.inputs.questionnaires))?;
    out.write("dataset.csv", &dataset_csv(&ds)?)?;
    out.write_json("dataset_manifest.json", &ds.manifest())?;
    out.finish()?;
    println!("{} instances × {} features", ds.len(), ds.n_features());
    Ok(EXIT_OK)
}

fn calibrations(scenario: Scenario, arg: Option<&str>) -> Result<Vec<Option<TechniqueId>>, CliError> {
    match (scenario, arg) {
        (Scenario::Qs, _) => Ok(vec![None]),
        (_, Some(s)) if s.eq_ignore_ascii_case("all") => Ok(TechniqueId::ALL.into_iter().map(Some).collect()),
        (_, Some(s)) => Ok(vec![Some(s.parse().map_err(stage("arguments"))?)]),
        (_, None) => Err(CliError::Stage {
            stage: "arguments",
            message: format!("scenario {scenario} needs --calibration <technique|all>"),
        }),
    }
}

#[derive(Serialize)]
struct RankingFile<'a> {
    #[serde(flatten)]
    features: RankingReport,
    technique_rankings: &'a [RankedList],
}

fn manifest_digest(ds: &Dataset) -> String {
    super::sha256_hex(serde_json::to_string(&ds.manifest()).expect("manifest serializes").as_bytes())
}

/// Fits the final pipeline on every instance and writes the shared outputs.
#[allow(clippy::too_many_arguments)]
fn finish_outputs(
    out: &mut OutDir,
    ds: &Dataset,
    learner: &LearnerSpec,
    config: &RunConfig,
    report: &EvaluationReport,
    lists: &[RankedList],
    features: &[u8],
) -> Result<(), CliError> {
    let all: Vec<usize> = (0..ds.len()).collect();
    let fitted = FittedPipeline::fit(ds, &all, &config.selection, learner).map_err(stage("final fit"))?;
    let feature_report = match &fitted.selection.ranking {
        Some(r) => RankingReport::new(r, config.selection.top_k),
        None => RankingReport {
            ordering: fitted.selection.names.clone(),
            cv_scores_by_size: Vec::new(),
            selected: fitted.selection.names.clone(),
            capped: fitted.selection.names.clone(),
        },
    };
    out.write("features.csv", features)?;
    out.write("dataset.csv", &dataset_csv(ds)?)?;
    out.write_json(
        "ranking.json",
        &RankingFile {
            features: feature_report,
            technique_rankings: lists,
        },
    )?;
    out.write_json("report.json", report)?;
    let text = report.to_text();
    out.write("report.txt", text.as_bytes())?;
    out.write_json(
        "model.json",
        &ModelArtifact {
            model: fitted.model,
            training_manifest_digest: manifest_digest(ds),
        },
    )?;
    print!("{text}");
    Ok(())
}

fn cmd_run(a: &RunArgs, mut config: RunConfig, recorded: Vec<String>) -> Result<i32, CliError> {
    if let Some(k) = a.folds {
        config.folds = k;
    }
    if let Some(k) = a.rank_folds {
        config.rank_folds = k;
    }
    if let Some(k) = a.top_k {
        config.selection.top_k = k;
    }
    if a.no_selection {
        config.selection.enabled = false;
    }
    let calibs = calibrations(a.scenario, a.calibration.as_deref())?;
    let (files, logs, q) = load_inputs(&a.inputs)?;
    let features = features_csv(&logs, &config)?;
    for calib in &calibs {
        let dir = match calib {
            Some(c) if calibs.len() > 1 => a.out_dir.join(c.name()),
            _ => a.out_dir.clone(),
        };
        let ds = build(a.scenario, *calib, &logs, &q, &config)?;
        let participants = ds.participants();
        let plan = group_kfold(&participants, config.folds.min(participants.len()), config.seed)
            .map_err(stage("cross-validation"))?;
        let grid = grid_search(&ds, a.learner, &config.grid, &plan, &config.selection, config.seed)
            .map_err(stage("grid search"))?;
        log::info!("best hyperparameters: {:?}", grid.best);
        let ranking = rank_techniques(&ds, &grid.best, &config.selection, config.rank_folds, config.seed)
            .map_err(stage("ranking"))?;
        let report = EvaluationReport::new(&ds, &grid.best, &grid.best_cv, &ranking);
        let mut out = OutDir::create(&dir, RunManifest::new(recorded.clone(), &config))?;
        out.inputs(&files)?;
        out.inputs(std::slice::from_ref(&a.inputs.questionnaires))?;
        out.write_json("grid.json", &grid.cells)?;
        finish_outputs(&mut out, &ds, &grid.best, &config, &report, &ranking.lists, &features)?;
        out.finish()?;
    }
    Ok(EXIT_OK)
}

fn cmd_rank(a: &RankArgs, mut config: RunConfig, recorded: Vec<String>) -> Result<i32, CliError> {
    if let Some(k) = a.rank_folds {
        config.rank_folds = k;
    }
    if let Some(k) = a.top_k {
        config.selection.top_k = k;
    }
    if a.no_selection {
        config.selection.enabled = false;
    }
    let learner = match &a.model {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(stage("model"))?;
            let art = ModelArtifact::from_json(&text).map_err(stage("model"))?;
            match art.model {
                TrainedModel::ElasticNet(m) => LearnerSpec::ElasticNet(m.hyperparameters),
                TrainedModel::RandomForest(m) => LearnerSpec::RandomForest(m.hyperparameters),
            }
        }
        None => match a.learner {
            LearnerKind::ElasticNet => LearnerSpec::ElasticNet(config.rank_enet),
            LearnerKind::RandomForest => LearnerSpec::RandomForest(config.rank_forest),
        },
    };
    if a.scenario != Scenario::Qs && a.calibration.is_none() {
        return Err(CliError::Stage {
            stage: "arguments",
            message: format!("scenario {} needs --calibration", a.scenario),
        });
    }
    let (files, logs, q) = load_inputs(&a.inputs)?;
    let features = features_csv(&logs, &config)?;
    let ds = build(a.scenario, a.calibration, &logs, &q, &config)?;
    let ranking =
        rank_techniques(&ds, &learner, &config.selection, config.rank_folds, config.seed).map_err(stage("ranking"))?;
    let report = EvaluationReport::new(&ds, &learner, &ranking.cv, &ranking);
    let mut out = OutDir::create(&a.out_dir, RunManifest::new(recorded, &config))?;
    out.inputs(&files)?;
    out.inputs(std::slice::from_ref(&a.inputs.questionnaires))?;
    if let Some(m) = &a.model {
        out.inputs(std::slice::from_ref(m))?;
    }
    finish_outputs(&mut out, &ds, &learner, &config, &report, &ranking.lists, &features)?;
    out.finish()?;
    Ok(EXIT_OK)
}

fn cmd_synth(a: &SynthArgs, mut config: RunConfig, recorded: Vec<String>) -> Result<i32, CliError> {
    let c = &mut config.synth;
    if let Some(n) = a.n_impaired {
        c.n_impaired = n;
    }
    if let Some(n) = a.n_non_impaired {
        c.n_non_impaired = n;
    }
    if let Some(s) = a.sigma {
        c.noise_sigma = s;
    }
    if let Some(r) = a.sample_rate {
        c.sample_rate = r;
    }
    let demands = match &a.demands {
        Some(p) => DemandMatrix::load(p).map_err(stage("synth"))?,
        None => DemandMatrix::default(),
    };
    let cohort = generate_cohort(&config.synth, &demands).map_err(stage("synth"))?;
    let files = write_cohort(&cohort, &demands, &a.out_dir).map_err(stage("synth"))?;
    let mut manifest = RunManifest::new(recorded, &config);
    if let Some(p) = &a.demands {
        manifest.add_input(p).map_err(stage("inputs"))?;
    }
    let all = files
        .sessions
        .iter()
        .chain([&files.questionnaires, &files.ground_truth, &files.demands]);
    for f in all {
        let bytes = fs::read(f).map_err(stage("output"))?;
        let rel = f.strip_prefix(&a.out_dir).unwrap_or(f);
        manifest.add_output(&rel.display().to_string(), &bytes);
    }
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    fs::write(a.out_dir.join("manifest.json"), text).map_err(stage("output"))?;
    println!(
        "{} participants, {} trials -> {}",
        cohort.sessions.len(),
        cohort.sessions.iter().map(|s| s.trials.len()).sum::<usize>(),
        a.out_dir.display()
    );
    Ok(EXIT_OK)
}

fn cmd_report(a: &ReportArgs) -> Result<i32, CliError> {
    let text = fs::read_to_string(&a.input).map_err(stage("report"))?;
    let report: EvaluationReport = serde_json::from_str(&text).map_err(stage("report"))?;
    let rendered = report.to_text();
    let out = a.out.clone().unwrap_or_else(|| a.input.with_file_name("report.txt"));
    fs::write(&out, &rendered).map_err(stage("report"))?;
    print!("{rendered}");
    Ok(EXIT_OK)
}
