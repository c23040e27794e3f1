use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tasksel::config::{parse_grid, RunConfig};
use tasksel::error::{AtPhase, CliError, CliResult, Phase};
use tasksel::extoracle::{self, answer, read_batch, read_responses, requests_for, OracleRequest};
use tasksel::format::{self, atomic_write, fmt_f64, parse_tasks, read_file, SelectionFile};
use tasksel::parallel::{parallel_fit, Evaluator};
use tasksel::pipeline::{load_record, run_pipeline, RunOutcome};
use tasksel::report::{report, ReportKind};
use tasksel_core::oracle::exhaustive_search;
use tasksel_core::selection::{grid_search_gamma, induced_subsets, select_tasks};
use tasksel_core::subset::{indicator_matrix, sample_holdout, sample_subsets};
use tasksel_core::surrogate::FitOptions;
use tasksel_core::synthworld::generate_world;
use tasksel_core::{PerformanceOracle, SelectionResult, Subset};

#[derive(Parser)]
#[command(name = "tasksel", version, about = "Select source tasks with a fitted linear surrogate of multitask performance")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write world parameters (and optionally every generated matrix).
    GenWorld {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// Directory for betas, masks and per-task data as TSV.
        #[arg(long)]
        dump_world: Option<PathBuf>,
    },
    /// Draw training (or holdout) subsets.
    Sample {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// Draw holdout subsets disjoint from the training draws instead.
        #[arg(long)]
        holdout: bool,
        /// Write an oracle request file instead of a subsets file.
        #[arg(long)]
        requests: bool,
    },
    /// Answer a request or subsets file with a synthetic world.
    Eval {
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        requests: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Downsample applied to subsets files (request files carry their own).
        #[arg(long, default_value_t = 1.0)]
        downsample: f64,
        #[arg(long, default_value_t = default_workers())]
        workers: usize,
    },
    /// Fit the surrogate from subsets and oracle responses.
    Fit {
        #[arg(long)]
        subsets: PathBuf,
        #[arg(long)]
        responses: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Number of source tasks; defaults to the largest id present.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 0.0)]
        ridge: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = default_workers())]
        workers: usize,
    },
    /// Threshold the relevance scores of a fitted model.
    Select {
        #[arg(long)]
        model: PathBuf,
        /// Use a single threshold instead of a grid search.
        #[arg(long, allow_hyphen_values = true)]
        gamma: Option<f64>,
        #[arg(long, allow_hyphen_values = true, default_value = "default")]
        gamma_grid: String,
        /// Grid-search against a synthetic world.
        #[arg(long)]
        world: Option<PathBuf>,
        /// Write the grid candidates (plus the empty and full sets) as a request batch and stop.
        #[arg(long)]
        requests_out: Option<PathBuf>,
        /// Request batch previously written with --requests-out.
        #[arg(long, requires = "responses")]
        candidates: Option<PathBuf>,
        #[arg(long, requires = "candidates")]
        responses: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict f for subsets with a fitted model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, conflicts_with = "tasks")]
        subsets: Option<PathBuf>,
        /// Space-separated task ids.
        #[arg(long)]
        tasks: Option<String>,
    },
    /// Evaluate every subset of a synthetic world.
    Exhaustive {
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        max_alpha: Option<usize>,
        #[arg(long, default_value_t = 1.0)]
        downsample: f64,
        #[arg(long, default_value_t = default_workers())]
        workers: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full pipeline, or resume an external run.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Tabulate completed runs.
    Report {
        /// convergence, separation or transfer_f1.
        #[arg(long)]
        kind: String,
        /// Run directories, or output directories holding run-* subdirectories.
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Flags mirroring the config file keys; they override the file.
#[derive(Args, Default)]
struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    gamma_grid: Option<String>,
    #[arg(long)]
    holdout_n: Option<String>,
    #[arg(long)]
    downsample: Option<String>,
    #[arg(long)]
    ridge: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    #[arg(long)]
    output_dir: Option<String>,
    #[arg(long)]
    oracle_cmd: Option<String>,
    #[arg(long)]
    world_p: Option<String>,
    #[arg(long)]
    world_d: Option<String>,
    #[arg(long)]
    world_m: Option<String>,
    #[arg(long)]
    world_a: Option<String>,
    #[arg(long)]
    world_b: Option<String>,
    #[arg(long)]
    world_frac_good: Option<String>,
    #[arg(long)]
    world_sigma: Option<String>,
    #[arg(long)]
    world_beta_scale: Option<String>,
    #[arg(long)]
    world_layout: Option<String>,
    #[arg(long)]
    world_seed: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> CliResult<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        let overrides = [
            ("mode", &self.mode),
            ("k", &self.k),
            ("alpha", &self.alpha),
            ("n", &self.n),
            ("seed", &self.seed),
            ("gamma_grid", &self.gamma_grid),
            ("holdout_n", &self.holdout_n),
            ("downsample", &self.downsample),
            ("ridge", &self.ridge),
            ("workers", &self.workers),
            ("output_dir", &self.output_dir),
            ("oracle_cmd", &self.oracle_cmd),
            ("world_p", &self.world_p),
            ("world_d", &self.world_d),
            ("world_m", &self.world_m),
            ("world_a", &self.world_a),
            ("world_b", &self.world_b),
            ("world_frac_good", &self.world_frac_good),
            ("world_sigma", &self.world_sigma),
            ("world_beta_scale", &self.world_beta_scale),
            ("world_layout", &self.world_layout),
            ("world_seed", &self.world_seed),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                c.set(key, v)?;
            }
        }
        c.resolve()
    }
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => atomic_write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_world(path: &Path) -> CliResult<tasksel_core::SyntheticWorld> {
    let params = format::parse_world(&read_file(path)?)?;
    generate_world(&params).at(Phase::World)
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Cmd::GenWorld { config, out, dump_world } => {
            let c = config.resolve()?;
            let world = generate_world(&c.world).at(Phase::World)?;
            atomic_write(&out, &format::world_to_string(world.params()))?;
            if let Some(dir) = dump_world {
                format::dump_world(&world, &dir)?;
            }
        }
        Cmd::Sample { config, out, holdout, requests } => {
            let c = config.resolve()?;
            let train = sample_subsets(c.k, c.alpha, c.n, c.seed).at(Phase::Sample)?;
            let (subsets, notes, ds) = if holdout {
                (sample_holdout(c.k, c.alpha, c.holdout_n, c.seed, &train).at(Phase::Sample)?, "holdout", 1.0)
            } else {
                (train, "train", c.downsample)
            };
            if requests {
                extoracle::write_request_batch(&requests_for(&subsets, ds, notes), &out)?;
            } else {
                atomic_write(&out, &format::subsets_to_string(&subsets))?;
            }
        }
        Cmd::Eval { world, requests, out, downsample, workers } => {
            let world = load_world(&world)?;
            let batch = read_batch(&requests, downsample)?;
            let mut oracles = std::collections::BTreeMap::new();
            for r in &batch {
                if let std::collections::btree_map::Entry::Vacant(e) = oracles.entry(r.downsample.to_bits()) {
                    e.insert(world.evaluator(r.downsample).at(Phase::Evaluate)?);
                }
            }
            let responses = answer(&batch, |r: &OracleRequest| oracles[&r.downsample.to_bits()].evaluate_f(&r.tasks), workers);
            extoracle::write_responses(&responses, &out)?;
        }
        Cmd::Fit { subsets, responses, out, k, ridge, seed, workers } => {
            let batch = read_batch(&subsets, 1.0)?;
            let all: Vec<Subset> = batch.iter().map(|r| r.tasks.clone()).collect();
            let got = read_responses(&responses, batch.len())?;
            let records = got.records(&all, "external")?;
            if records.is_empty() {
                return Err(CliError::Protocol("no usable responses".into()));
            }
            let k = k.unwrap_or_else(|| all.iter().flat_map(|s| s.ids()).max().unwrap_or(0));
            let subs: Vec<Subset> = records.iter().map(|(_, r)| r.subset.clone()).collect();
            let values: Vec<f64> = records.iter().map(|(_, r)| r.value).collect();
            let design = indicator_matrix(&subs, k).at(Phase::Fit)?;
            let model = parallel_fit(&design, &values, &FitOptions { ridge, seed }, workers).at(Phase::Fit)?;
            atomic_write(&out, &format::model_to_string(&model))?;
            eprintln!("fitted k={k} on {} of {} responses, train_mse={}", records.len(), batch.len(), fmt_f64(model.train_mse()));
        }
        Cmd::Select { model, gamma, gamma_grid, world, requests_out, candidates, responses, out } => {
            let model = format::parse_model(&read_file(&model)?)?;
            let scores = model.theta().to_vec();
            let k = model.k();
            let grid = parse_grid(&gamma_grid)?;
            let world = world.map(|p| load_world(&p)).transpose()?;
            if let Some(path) = requests_out {
                let mut subs: Vec<Subset> = induced_subsets(&scores, &grid).into_iter().map(|(_, s)| s).collect();
                for extra in [Subset::empty(), Subset::full(k)] {
                    if !subs.contains(&extra) {
                        subs.push(extra);
                    }
                }
                let count = extoracle::write_request_batch(&requests_for(&subs, 1.0, "select"), &path)?;
                eprintln!("wrote {count} candidate requests to {}", path.display());
                return Ok(());
            }
            let file = if let Some(g) = gamma {
                let stl = match &world {
                    Some(w) => w.evaluator(1.0).at(Phase::Select)?.evaluate_f(&Subset::empty()).at(Phase::Select)?,
                    None => f64::NAN,
                };
                SelectionFile {
                    selection: SelectionResult { gamma: g, selected: select_tasks(&scores, g), scores, stl_baseline: stl },
                    candidates: Vec::new(),
                }
            } else if let Some(w) = &world {
                let oracle = Evaluator::new(w.evaluator(1.0).at(Phase::Select)?, default_workers());
                let outcome = grid_search_gamma(&scores, &oracle, &grid).at(Phase::Select)?;
                let stl = oracle.evaluate(&Subset::empty()).at(Phase::Select)?;
                SelectionFile {
                    selection: SelectionResult { gamma: outcome.gamma, selected: outcome.selected, scores, stl_baseline: stl },
                    candidates: outcome.candidates,
                }
            } else if let (Some(req), Some(resp)) = (candidates, responses) {
                let batch = read_batch(&req, 1.0)?;
                let got = read_responses(&resp, batch.len())?;
                let measured: std::collections::BTreeMap<Subset, f64> =
                    got.values.iter().map(|(id, v)| (batch[*id as usize - 1].tasks.clone(), *v)).collect();
                let table = |s: &Subset| -> tasksel_core::Result<f64> {
                    measured.get(s).copied().ok_or_else(|| tasksel_core::Error::Evaluation { subset: s.to_string(), message: "not measured".into() })
                };
                let usable: Vec<f64> = grid.iter().copied().filter(|g| measured.contains_key(&select_tasks(&scores, *g))).collect();
                let outcome = grid_search_gamma(&scores, &table, &usable).at(Phase::Select)?;
                let stl = measured.get(&Subset::empty()).copied().unwrap_or(f64::NAN);
                SelectionFile {
                    selection: SelectionResult { gamma: outcome.gamma, selected: outcome.selected, scores, stl_baseline: stl },
                    candidates: outcome.candidates,
                }
            } else {
                return Err(CliError::Config("select needs --gamma, --world, --requests-out or --candidates/--responses".into()));
            };
            eprintln!("gamma={} selected={{{}}}", fmt_f64(file.selection.gamma), file.selection.selected.to_id_list());
            emit(out.as_deref(), &format::selection_to_string(&file))?;
        }
        Cmd::Predict { model, subsets, tasks } => {
            let model = format::parse_model(&read_file(&model)?)?;
            let batch = match (subsets, tasks) {
                (Some(p), _) => read_batch(&p, 1.0)?,
                (None, Some(t)) => requests_for(&[parse_tasks(&t)?], 1.0, ""),
                (None, None) => return Err(CliError::Config("predict needs --subsets or --tasks".into())),
            };
            let mut text = String::from("id\ttasks\tprediction\n");
            for r in &batch {
                let v = model.predict(&r.tasks).at(Phase::Final)?;
                text.push_str(&format!("{}\t{}\t{}\n", r.id, r.tasks.to_id_list(), fmt_f64(v)));
            }
            print!("{text}");
        }
        Cmd::Exhaustive { world, max_alpha, downsample, workers, out } => {
            let world = load_world(&world)?;
            let oracle = Evaluator::new(world.evaluator(downsample).at(Phase::Evaluate)?, workers);
            let report = exhaustive_search(&oracle, world.k(), max_alpha).at(Phase::Evaluate)?;
            eprintln!(
                "best={{{}}} value={} stl={} all={}",
                report.best_subset.to_id_list(),
                fmt_f64(report.best_value),
                fmt_f64(report.stl_value),
                fmt_f64(report.naive_all_value)
            );
            emit(out.as_deref(), &format::exhaustive_to_string(&report))?;
        }
        Cmd::Run { config } => {
            let c = config.resolve()?;
            match run_pipeline(&c)? {
                RunOutcome::Completed(r) => {
                    println!("run_dir\t{}", r.run_dir.display());
                    println!("selected\t{}", r.selection.selection.selected.to_id_list());
                    println!("gamma\t{}", fmt_f64(r.selection.selection.gamma));
                    println!("final_f\t{}", fmt_f64(r.final_f));
                    println!("stl_f\t{}", fmt_f64(r.stl_f));
                    println!("naive_all_f\t{}", fmt_f64(r.naive_all_f));
                    if let Some(rho) = r.diagnostics.spearman_rho {
                        println!("spearman_rho\t{}", fmt_f64(rho));
                    }
                }
                RunOutcome::AwaitingResponses { phase, requests, responses } => {
                    println!("awaiting\t{phase}");
                    println!("requests\t{}", requests.display());
                    println!("responses\t{}", responses.display());
                    eprintln!("write the response file (ending in #done) and rerun the same command to resume");
                }
            }
        }
        Cmd::Report { kind, dirs, out } => {
            let kind = ReportKind::parse(&kind)?;
            let mut records = Vec::new();
            for dir in dirs {
                if dir.join("record.tsv").exists() {
                    records.push(load_record(&dir)?);
                    continue;
                }
                let entries = std::fs::read_dir(&dir).map_err(|e| CliError::io(&dir, e))?;
                let mut runs: Vec<PathBuf> = entries
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.join("record.tsv").exists())
                    .collect();
                runs.sort();
                for run in runs {
                    records.push(load_record(&run)?);
                }
            }
            emit(out.as_deref(), &report(&records, kind)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
