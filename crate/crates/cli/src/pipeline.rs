//! End-to-end run: sample, measure, fit, diagnose, threshold, evaluate.
//!
//! Both modes go through the same request/response batches. Synthetic mode
//! answers them in-process; external mode writes the requests and waits for
//! a response file (or runs `oracle_cmd` to produce one).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use tasksel_core::oracle::{separation_check, Separation};
use tasksel_core::selection::{grid_search_gamma, induced_subsets};
use tasksel_core::subset::{indicator_matrix, sample_holdout, sample_subsets};
use tasksel_core::surrogate::{holdout_diagnostics, FitDiagnostics, FitOptions};
use tasksel_core::synthworld::{generate_world, SyntheticWorld};
use tasksel_core::{Error, PerformanceRecord, SelectionResult, Subset, SurrogateModel};

use crate::config::{Mode, RunConfig};
use crate::error::{AtPhase, CliError, CliResult, Phase};
use crate::extoracle::{answer, read_responses, requests_for, requests_to_string, responses_to_string, OracleRequest, ResponseBatch};
use crate::format::{self, fmt_f64, parse_f64, parse_tasks, read_file, write_once, Fields, SelectionFile};
use crate::parallel::parallel_fit;

pub const RECORD_TAG: &str = "#tasksel-record v1";

#[derive(Debug, Clone, PartialEq)]
pub struct HoldoutRow {
    pub subset: Subset,
    pub predicted: f64,
    pub actual: f64,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub config: RunConfig,
    pub run_dir: PathBuf,
    pub model: SurrogateModel,
    pub diagnostics: FitDiagnostics,
    pub selection: SelectionFile,
    pub final_f: f64,
    pub stl_f: f64,
    pub naive_all_f: f64,
    /// Synthetic mode only.
    pub separation: Option<Separation>,
    pub holdout: Vec<HoldoutRow>,
    /// Train and holdout requests without a usable response.
    pub dropped: usize,
    pub timing: Vec<(Phase, Duration)>,
}

impl RunRecord {
    /// Population variance of the measured holdout values: the spread a
    /// constant predictor would leave as its MSE.
    pub fn holdout_f_variance(&self) -> f64 {
        let n = self.holdout.len() as f64;
        let mean = self.holdout.iter().map(|r| r.actual).sum::<f64>() / n;
        self.holdout.iter().map(|r| (r.actual - mean).powi(2)).sum::<f64>() / n
    }
}

#[derive(Debug)]
pub enum RunOutcome {
    Completed(Box<RunRecord>),
    /// External mode: the named batch has no response file yet.
    AwaitingResponses { phase: Phase, requests: PathBuf, responses: PathBuf },
}

impl RunOutcome {
    pub fn completed(self) -> Option<RunRecord> {
        match self {
            RunOutcome::Completed(r) => Some(*r),
            RunOutcome::AwaitingResponses { .. } => None,
        }
    }
}

struct Timer(Vec<(Phase, Duration)>, Instant);

impl Timer {
    fn new() -> Self {
        Timer(Vec::new(), Instant::now())
    }

    fn lap(&mut self, phase: Phase) {
        let now = Instant::now();
        self.0.push((phase, now - self.1));
        self.1 = now;
    }
}

enum Source<'w> {
    World { world: &'w SyntheticWorld, sampled: tasksel_core::synthworld::WorldOracle<'w>, full: tasksel_core::synthworld::WorldOracle<'w> },
    External,
}

/// Runs (or resumes) the pipeline for `config` under its run directory.
pub fn run_pipeline(config: &RunConfig) -> CliResult<RunOutcome> {
    let config = config.clone().resolve()?;
    let dir = config.run_dir();
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    write_once(&dir.join("config.txt"), &config.canonical())?;
    let mut timer = Timer::new();

    let world = match config.mode {
        Mode::Synthetic => {
            let w = generate_world(&config.world).at(Phase::World)?;
            write_once(&dir.join("world.txt"), &format::world_to_string(w.params()))?;
            Some(w)
        }
        Mode::External => None,
    };
    let source = match &world {
        Some(w) => Source::World {
            world: w,
            sampled: w.evaluator(config.downsample).at(Phase::World)?,
            full: w.evaluator(1.0).at(Phase::World)?,
        },
        None => Source::External,
    };
    timer.lap(Phase::World);

    let (k, n) = (config.k, config.n);
    let train = sample_subsets(k, config.alpha, n, config.seed).at(Phase::Sample)?;
    let holdout = sample_holdout(k, config.alpha, config.holdout_n, config.seed, &train).at(Phase::Sample)?;
    let mut requests = requests_for(&train, config.downsample, "train");
    for (i, s) in holdout.iter().enumerate() {
        requests.push(OracleRequest { id: (n + i + 1) as u64, tasks: s.clone(), downsample: 1.0, notes: "holdout".into() });
    }
    timer.lap(Phase::Sample);

    let Some(batch) = obtain(&config, &dir, "train", &requests, &source, Phase::Evaluate)? else {
        return Ok(awaiting(&dir, "train", Phase::Evaluate));
    };
    let all_subsets: Vec<Subset> = requests.iter().map(|r| r.tasks.clone()).collect();
    let records = batch.records(&all_subsets, oracle_id(config.mode))?;
    let (train_records, holdout_records): (Vec<_>, Vec<_>) = records.into_iter().partition(|(i, _)| *i < n);
    let dropped = all_subsets.len() - train_records.len() - holdout_records.len();
    if dropped > 0 {
        log::warn!("{dropped} of {} requests have no usable value; fitting on the rest", all_subsets.len());
    }
    timer.lap(Phase::Evaluate);

    let train_subsets: Vec<Subset> = train_records.iter().map(|(_, r)| r.subset.clone()).collect();
    let values: Vec<f64> = train_records.iter().map(|(_, r)| r.value).collect();
    if values.is_empty() {
        return Err(CliError::Protocol("no usable training responses".into()));
    }
    let design = indicator_matrix(&train_subsets, k).at(Phase::Fit)?;
    let opts = FitOptions { ridge: config.ridge, seed: config.seed };
    let model = parallel_fit(&design, &values, &opts, config.workers).at(Phase::Fit)?;
    write_once(&dir.join("model.txt"), &format::model_to_string(&model))?;
    timer.lap(Phase::Fit);

    let holdout_records: Vec<PerformanceRecord> = holdout_records.into_iter().map(|(_, r)| r).collect();
    let diagnostics = holdout_diagnostics(&model, &holdout_records).at(Phase::Diagnostics)?;
    let holdout_rows = holdout_records
        .iter()
        .map(|r| Ok(HoldoutRow { subset: r.subset.clone(), predicted: model.predict(&r.subset)?, actual: r.value }))
        .collect::<tasksel_core::Result<Vec<_>>>()
        .at(Phase::Diagnostics)?;
    write_once(&dir.join("holdout.tsv"), &holdout_to_string(&holdout_rows))?;
    timer.lap(Phase::Diagnostics);

    let scores = model.theta().to_vec();
    let induced = induced_subsets(&scores, &config.gamma_grid);
    let mut select: Vec<Subset> = Vec::new();
    for s in induced.iter().map(|(_, s)| s.clone()).chain([Subset::empty(), Subset::full(k)]) {
        if !select.contains(&s) {
            select.push(s);
        }
    }
    let select_requests = requests_for(&select, 1.0, "select");
    let Some(select_batch) = obtain(&config, &dir, "select", &select_requests, &source, Phase::Select)? else {
        return Ok(awaiting(&dir, "select", Phase::Select));
    };
    let measured: BTreeMap<Subset, f64> =
        select_batch.values.iter().map(|(id, v)| (select[*id as usize - 1].clone(), *v)).collect();
    let lookup = |s: &Subset| -> CliResult<f64> {
        measured.get(s).copied().ok_or_else(|| CliError::Protocol(format!("no measured value for {s}")))
    };
    let stl_f = lookup(&Subset::empty())?;
    let naive_all_f = lookup(&Subset::full(k))?;
    // failed candidates are dropped from the grid rather than imputed
    let grid: Vec<f64> = config
        .gamma_grid
        .iter()
        .copied()
        .filter(|g| measured.contains_key(&tasksel_core::selection::select_tasks(&scores, *g)))
        .collect();
    if grid.len() < config.gamma_grid.len() {
        log::warn!("{} grid points dropped for lack of a measured value", config.gamma_grid.len() - grid.len());
    }
    if grid.is_empty() {
        return Err(CliError::Protocol("no grid candidate has a measured value".into()));
    }
    let table = |s: &Subset| -> tasksel_core::Result<f64> {
        measured.get(s).copied().ok_or_else(|| Error::Evaluation { subset: s.to_string(), message: "not measured".into() })
    };
    let outcome = grid_search_gamma(&scores, &table, &grid).at(Phase::Select)?;
    timer.lap(Phase::Select);

    let final_f = outcome.best_value;
    let separation = match &source {
        Source::World { world, .. } => Some(separation_check(world, &model).at(Phase::Final)?),
        Source::External => None,
    };
    let selection = SelectionFile {
        selection: SelectionResult { gamma: outcome.gamma, selected: outcome.selected, scores, stl_baseline: stl_f },
        candidates: outcome.candidates,
    };
    write_once(&dir.join("selection.tsv"), &format::selection_to_string(&selection))?;
    timer.lap(Phase::Final);

    let record = RunRecord {
        config,
        run_dir: dir.clone(),
        model,
        diagnostics,
        selection,
        final_f,
        stl_f,
        naive_all_f,
        separation,
        holdout: holdout_rows,
        dropped,
        timing: timer.0,
    };
    write_once(&dir.join("record.tsv"), &record_to_string(&record))?;
    append_timing(&dir.join("timing.tsv"), &record.timing)?;
    Ok(RunOutcome::Completed(Box::new(record)))
}

fn oracle_id(mode: Mode) -> &'static str {
    match mode {
        Mode::Synthetic => "synthetic",
        Mode::External => "external",
    }
}

fn batch_paths(dir: &Path, name: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{name}.requests.tsv")), dir.join(format!("{name}.responses.tsv")))
}

fn awaiting(dir: &Path, name: &str, phase: Phase) -> RunOutcome {
    let (requests, responses) = batch_paths(dir, name);
    RunOutcome::AwaitingResponses { phase, requests, responses }
}

/// Writes the request batch and returns its responses, or `None` while an
/// external batch is still outstanding.
fn obtain(
    config: &RunConfig,
    dir: &Path,
    name: &str,
    requests: &[OracleRequest],
    source: &Source<'_>,
    phase: Phase,
) -> CliResult<Option<ResponseBatch>> {
    let (req_path, resp_path) = batch_paths(dir, name);
    write_once(&req_path, &requests_to_string(requests))?;
    match source {
        Source::World { sampled, full, .. } => {
            let responses = answer(
                requests,
                |r| if r.downsample == 1.0 { full.evaluate_f(&r.tasks) } else { sampled.evaluate_f(&r.tasks) },
                config.workers,
            );
            let text = responses_to_string(&responses);
            write_once(&resp_path, &text)?;
            let batch = crate::extoracle::parse_responses(&text, requests.len())?;
            for w in batch.warnings() {
                log::warn!("[{phase}] {w}");
            }
            Ok(Some(batch))
        }
        Source::External => {
            if !resp_path.exists() {
                match &config.oracle_cmd {
                    Some(cmd) => run_oracle_cmd(cmd, &req_path, &resp_path)?,
                    None => return Ok(None),
                }
            }
            read_responses(&resp_path, requests.len()).map(Some)
        }
    }
}

/// Runs `cmd` (split on whitespace) with the request and response paths appended.
pub fn run_oracle_cmd(cmd: &str, requests: &Path, responses: &Path) -> CliResult<()> {
    let mut parts = cmd.split_whitespace();
    let program = parts.next().ok_or_else(|| CliError::Config("oracle_cmd is empty".into()))?;
    let status = Command::new(program)
        .args(parts)
        .arg(requests)
        .arg(responses)
        .status()
        .map_err(|e| CliError::io(program, e))?;
    if !status.success() {
        return Err(CliError::Protocol(format!("oracle command exited with {status}")));
    }
    if !responses.exists() {
        return Err(CliError::Protocol(format!("oracle command did not write {}", responses.display())));
    }
    Ok(())
}

pub fn holdout_to_string(rows: &[HoldoutRow]) -> String {
    let mut s = String::from("id\ttasks\tpredicted\tactual\n");
    for (i, r) in rows.iter().enumerate() {
        writeln!(s, "{}\t{}\t{}\t{}", i + 1, r.subset.to_id_list(), fmt_f64(r.predicted), fmt_f64(r.actual)).unwrap();
    }
    s
}

pub fn parse_holdout(text: &str) -> CliResult<Vec<HoldoutRow>> {
    let fail = |msg: String| CliError::Format(msg);
    let mut lines = text.lines();
    if lines.next() != Some("id\ttasks\tpredicted\tactual") {
        return Err(fail("holdout table has an unexpected header".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            if f.len() != 4 {
                return Err(fail(format!("malformed holdout row {l:?}")));
            }
            Ok(HoldoutRow { subset: parse_tasks(f[1])?, predicted: parse_f64(f[2], "predicted")?, actual: parse_f64(f[3], "actual")? })
        })
        .collect()
}

fn record_to_string(r: &RunRecord) -> String {
    let d = &r.diagnostics;
    let mut s = String::new();
    writeln!(s, "{RECORD_TAG}").unwrap();
    writeln!(s, "config_hash\t{}", r.config.hash()).unwrap();
    writeln!(s, "dropped\t{}", r.dropped).unwrap();
    writeln!(s, "holdout_n\t{}", d.holdout_n).unwrap();
    writeln!(s, "holdout_mse\t{}", fmt_f64(d.holdout_mse)).unwrap();
    match (d.spearman_rho, &d.spearman_error) {
        (Some(rho), _) => writeln!(s, "spearman_rho\t{}", fmt_f64(rho)).unwrap(),
        (None, err) => writeln!(s, "spearman_error\t{}", err.as_deref().unwrap_or("undefined")).unwrap(),
    }
    writeln!(s, "condition_estimate\t{}", fmt_f64(d.condition_estimate)).unwrap();
    writeln!(s, "holdout_f_variance\t{}", fmt_f64(r.holdout_f_variance())).unwrap();
    writeln!(s, "final_f\t{}", fmt_f64(r.final_f)).unwrap();
    writeln!(s, "stl_f\t{}", fmt_f64(r.stl_f)).unwrap();
    writeln!(s, "naive_all_f\t{}", fmt_f64(r.naive_all_f)).unwrap();
    if let Some(sep) = &r.separation {
        writeln!(s, "separated\t{}", sep.separated).unwrap();
        writeln!(s, "margin\t{}", fmt_f64(sep.margin)).unwrap();
        writeln!(s, "vacuous\t{}", sep.vacuous).unwrap();
    }
    s
}

fn append_timing(path: &Path, timing: &[(Phase, Duration)]) -> CliResult<()> {
    let fresh = !path.exists();
    let mut file = fs::OpenOptions::new().create(true).append(true).open(path).map_err(|e| CliError::io(path, e))?;
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let mut s = String::new();
    if fresh {
        s.push_str("started\tphase\tseconds\n");
    }
    for (phase, d) in timing {
        writeln!(s, "{started}\t{phase}\t{}", d.as_secs_f64()).unwrap();
    }
    file.write_all(s.as_bytes()).map_err(|e| CliError::io(path, e))
}

fn parse_bool(s: &str) -> CliResult<bool> {
    s.parse::<bool>().map_err(|_| CliError::Format(format!("expected true or false, found {s:?}")))
}

/// Reloads a completed run from its directory.
pub fn load_record(dir: &Path) -> CliResult<RunRecord> {
    let mut config = RunConfig::default();
    config.apply_text(&read_file(&dir.join("config.txt"))?)?;
    if let Some(parent) = dir.parent() {
        config.output_dir = parent.to_path_buf();
    }
    let config = config.resolve()?;
    let model = format::parse_model(&read_file(&dir.join("model.txt"))?)?;
    let selection = format::parse_selection(&read_file(&dir.join("selection.tsv"))?)?;
    let holdout = parse_holdout(&read_file(&dir.join("holdout.tsv"))?)?;
    let f = Fields::parse(&read_file(&dir.join("record.tsv"))?, RECORD_TAG)?;
    let separation = match f.get("separated") {
        Ok(sep) => Some(Separation { separated: parse_bool(sep)?, margin: f.f64("margin")?, vacuous: parse_bool(f.get("vacuous")?)? }),
        Err(_) => None,
    };
    let diagnostics = FitDiagnostics {
        holdout_mse: f.f64("holdout_mse")?,
        spearman_rho: f.f64("spearman_rho").ok(),
        spearman_error: f.get("spearman_error").ok().map(str::to_string),
        condition_estimate: f.f64("condition_estimate")?,
        holdout_n: f.usize("holdout_n")?,
    };
    Ok(RunRecord {
        config,
        run_dir: dir.to_path_buf(),
        model,
        diagnostics,
        selection,
        final_f: f.f64("final_f")?,
        stl_f: f.f64("stl_f")?,
        naive_all_f: f.f64("naive_all_f")?,
        separation,
        holdout,
        dropped: f.usize("dropped")?,
        timing: Vec::new(),
    })
}
