use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use geocheck_core::chat::{Backend, ScriptedBackend, ToolExecutor, WireBackend};
use geocheck_core::corpus::{load_corpus, validate_corpus, Corpus, CorpusError, ValidationReport};
use geocheck_core::runner::{echo_gold_backend, read_records, run_corpus, RunConfig, RunRecord, RunSummary, ScenarioKind};
use geocheck_core::stats::{
    accuracy_table, build_design, cells_from_records, confusion_matrices, fit_logit_with, observations_from_records,
    read_cells, reconstruct_observations, relative_gap, wald_summary, write_confusion_csv, AccuracyCell,
    ConfusionMatrix, FitOptions, LogisticFit, References, StatsError,
};
use geocheck_core::wikitools::{
    FixtureTransport, HttpTransport, PageCache, WikiTools, WikiTransport, SECONDS_PER_DAY,
};
use geocheck_core::Execution;

use crate::{CliError, Config};

fn io_err(context: impl std::fmt::Display, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{context}: {e}"))
}

fn corpus_err(path: &Path, e: CorpusError) -> CliError {
    match e {
        CorpusError::Io(e) => io_err(format!("cannot read corpus {}", path.display()), e),
        other => CliError::Failure(format!("{}: {other}", path.display())),
    }
}

/// Prints the validation report; strict mode fails on any violation.
pub fn validate(corpus_path: &Path, strict: bool, out: &mut dyn Write) -> Result<ValidationReport, CliError> {
    let corpus = load_corpus(corpus_path, false).map_err(|e| corpus_err(corpus_path, e))?;
    let report = validate_corpus(&corpus);
    write!(out, "{report}").map_err(|e| io_err("stdout", e))?;
    if strict && !report.is_strict_valid() {
        return Err(CliError::Failure(format!(
            "{}: {} strict violation(s)",
            corpus_path.display(),
            report.violations.len()
        )));
    }
    Ok(report)
}

/// Where completions come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Wire,
    /// Answers each statement with its gold label.
    EchoGold,
    /// Replays a trajectory fixture.
    Script(PathBuf),
}

impl FromStr for BackendSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "wire" => Ok(BackendSpec::Wire),
            "scripted:echo-gold" => Ok(BackendSpec::EchoGold),
            _ => match s.strip_prefix("scripted:") {
                Some(path) if !path.is_empty() => Ok(BackendSpec::Script(PathBuf::from(path))),
                _ => Err(format!("unknown backend '{s}' (expected wire, scripted:echo-gold or scripted:<file>)")),
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunArgs {
    pub corpus: PathBuf,
    pub scenario: ScenarioKind,
    pub backend: BackendSpec,
    pub out: PathBuf,
    pub config: Config,
    pub strict: bool,
    pub telemetry: bool,
}

fn build_backend(args: &RunArgs, corpus: &Corpus, cfg: &RunConfig) -> Result<Box<dyn Backend>, CliError> {
    let backend: Box<dyn Backend> = match &args.backend {
        BackendSpec::Wire => Box::new(
            WireBackend::new(
                &args.config.base_url,
                args.config.api_key_env.clone(),
                Duration::from_secs(args.config.timeout_secs),
            )
            .map_err(|e| io_err("backend", e))?,
        ),
        BackendSpec::EchoGold => {
            Box::new(echo_gold_backend(corpus, args.scenario, cfg).map_err(|e| io_err("backend", e))?)
        }
        BackendSpec::Script(path) => Box::new(
            ScriptedBackend::from_trajectory_file(path)
                .map_err(|e| io_err(format!("cannot load script {}", path.display()), e))?,
        ),
    };
    backend.preflight().map_err(|e| io_err(format!("backend {} is not usable", backend.describe()), e))?;
    Ok(backend)
}

fn build_tools(config: &Config) -> Result<WikiTools, CliError> {
    let ttl = config.cache_ttl_days * SECONDS_PER_DAY;
    let cache = match &config.cache_dir {
        Some(dir) => PageCache::on_disk(dir, ttl).map_err(|e| io_err(format!("cache {}", dir.display()), e))?,
        None => PageCache::in_memory(ttl),
    };
    let transport: Box<dyn WikiTransport> = match &config.wiki_fixtures {
        Some(dir) => {
            if !dir.is_dir() {
                return Err(CliError::Io(format!("wiki fixture directory {} does not exist", dir.display())));
            }
            Box::new(FixtureTransport::new(dir))
        }
        None => Box::new(
            HttpTransport::new(&config.wiki_api_url, Duration::from_secs(config.timeout_secs))
                .map_err(|e| io_err("wikipedia transport", e))?,
        ),
    };
    Ok(WikiTools::new(Arc::<dyn WikiTransport>::from(transport), cache).with_page_cap(config.page_cap))
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

/// Runs one scenario over a corpus and writes one record per line to `out`.
pub fn run(args: &RunArgs, log: &mut dyn Write) -> Result<RunSummary, CliError> {
    args.config.validate()?;
    if same_file(&args.corpus, &args.out) {
        return Err(CliError::Io("--out must not point at the corpus file".into()));
    }
    let corpus = load_corpus(&args.corpus, args.strict).map_err(|e| corpus_err(&args.corpus, e))?;
    let cfg = RunConfig {
        model_id: args.config.model_id.clone(),
        char_cap: args.config.char_cap,
        step_cap: args.config.step_cap,
        timeout: Duration::from_secs(args.config.timeout_secs),
        telemetry: args.telemetry,
        ..RunConfig::new(args.config.model_id.clone())
    };
    let backend = build_backend(args, &corpus, &cfg)?;
    let tools = match args.scenario {
        ScenarioKind::AgentWiki => Some(build_tools(&args.config)?),
        _ => None,
    };

    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(format!("cannot create {}", dir.display()), e))?;
    }
    // write to a sibling temp file so a failed run never leaves a partial record file behind
    let tmp = args.out.with_extension("partial");
    let file = File::create(&tmp).map_err(|e| io_err(format!("cannot create {}", tmp.display()), e))?;
    let mut writer = BufWriter::new(file);
    let summary = run_corpus(
        &corpus,
        args.scenario,
        &cfg,
        backend.as_ref(),
        tools.as_ref().map(|t| t as &dyn ToolExecutor),
        Execution::with_parallelism(args.config.parallelism),
        &mut |r: RunRecord| writeln!(writer, "{}", r.to_json_line()),
    )
    .map_err(|e| io_err("run", e))?;
    writer.flush().map_err(|e| io_err(format!("cannot write {}", tmp.display()), e))?;
    drop(writer);
    std::fs::rename(&tmp, &args.out).map_err(|e| io_err(format!("cannot write {}", args.out.display()), e))?;
    writeln!(
        log,
        "{} / {} / {}: {summary}",
        args.scenario.label(),
        cfg.model_id,
        backend.describe()
    )
    .map_err(|e| io_err("stdout", e))?;
    Ok(summary)
}

#[derive(Debug, Clone)]
pub struct AnalyzeArgs {
    /// Record file (`.jsonl`) or accuracy-cell table (CSV with a `model,scenario,region,n,n_correct` header).
    pub input: PathBuf,
    pub out_dir: PathBuf,
    pub references: References,
    pub parallelism: usize,
}

#[derive(Debug, Clone)]
pub struct AnalyzeReport {
    pub cells: Vec<AccuracyCell>,
    pub confusion: Vec<ConfusionMatrix>,
    pub fit: LogisticFit,
    pub relative_gap_pct: f64,
}

const CELL_HEADER: &str = "model,scenario,region,n,n_correct";

fn is_cell_table(path: &Path) -> Result<bool, CliError> {
    let f = File::open(path).map_err(|e| io_err(format!("cannot read {}", path.display()), e))?;
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| io_err(format!("cannot read {}", path.display()), e))?;
        if !line.trim().is_empty() {
            return Ok(line.trim() == CELL_HEADER);
        }
    }
    Ok(false)
}

fn analysis_err(e: StatsError) -> CliError {
    match e {
        StatsError::Table(m) => CliError::Failure(format!("malformed table: {m}")),
        other => CliError::Failure(format!("analysis failed: {other}")),
    }
}

fn write_file(dir: &Path, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> Result<(), CliError>) -> Result<(), CliError> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| io_err(format!("cannot create {}", path.display()), e))?;
    let mut w = BufWriter::new(file);
    f(&mut w)?;
    w.flush().map_err(|e| io_err(format!("cannot write {}", path.display()), e))
}

/// Accuracy table, confusion matrices (record input only) and the logistic
/// regression, written under `out_dir`.
pub fn analyze(args: &AnalyzeArgs, log: &mut dyn Write) -> Result<AnalyzeReport, CliError> {
    let (cells, observations, confusion) = if is_cell_table(&args.input)? {
        let f = File::open(&args.input).map_err(|e| io_err(format!("cannot read {}", args.input.display()), e))?;
        let cells = read_cells(f).map_err(analysis_err)?;
        let obs = reconstruct_observations(&cells).map_err(analysis_err)?;
        (cells, obs, Vec::new())
    } else {
        let f = File::open(&args.input).map_err(|e| io_err(format!("cannot read {}", args.input.display()), e))?;
        let records = read_records(BufReader::new(f)).map_err(|e| match e.kind() {
            std::io::ErrorKind::InvalidData => CliError::Failure(format!("{}: {e}", args.input.display())),
            _ => io_err(format!("cannot read {}", args.input.display()), e),
        })?;
        if records.is_empty() {
            return Err(CliError::Failure(format!("{}: no run records", args.input.display())));
        }
        let confusion = confusion_matrices(&records).map_err(analysis_err)?;
        (cells_from_records(&records), observations_from_records(&records), confusion)
    };

    let table = accuracy_table(&cells).map_err(analysis_err)?;
    let gap = relative_gap(&table).map_err(analysis_err)?;
    let design = build_design(&observations, &args.references).map_err(analysis_err)?;
    let opts = FitOptions { exec: Execution::with_parallelism(args.parallelism), ..FitOptions::default() };
    let fit = fit_logit_with(&design, &opts).map_err(analysis_err)?;

    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| io_err(format!("cannot create {}", args.out_dir.display()), e))?;
    let table_err = |e: StatsError| io_err("write table", e);
    write_file(&args.out_dir, "accuracy.csv", |w| table.write_csv(w).map_err(table_err))?;
    write_file(&args.out_dir, "accuracy.txt", |w| {
        write!(w, "{table}\nMean relative Global North advantage: {gap:.1} %\n").map_err(|e| io_err("accuracy.txt", e))
    })?;
    if !confusion.is_empty() {
        write_file(&args.out_dir, "confusion.csv", |w| write_confusion_csv(w, &confusion).map_err(table_err))?;
    }
    let report = fit.report();
    write_file(&args.out_dir, "regression.txt", |w| w.write_all(report.as_bytes()).map_err(|e| io_err("regression.txt", e)))?;
    write_file(&args.out_dir, "coefficients.csv", |w| wald_summary(&fit).write_csv(w).map_err(table_err))?;

    writeln!(log, "{table}\nMean relative Global North advantage: {gap:.1} %\n\n{report}").map_err(|e| io_err("stdout", e))?;
    Ok(AnalyzeReport { cells, confusion, fit, relative_gap_pct: gap })
}
