//! The `brainformer` command line: `search`, `train`, `count-params` and
//! `report`. Every command writes its outputs plus a `manifest.json` into
//! `--out`.

use std::ffi::OsString;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use brainformer_core::model::{
    count_params, forward_flops, scale_model_dim, FlopEstimate, ModelSpec, ParamCount, ScaleFactor,
};
use brainformer_core::model::{BlockSpec, LanguageModel};
use brainformer_core::search::{
    evolve, finalize_topk, glam_0_1b_32e, measure_baseline, Baseline, ConstraintMode, ProxyTrainer,
    ReplayExecutor, Search, SequentialExecutor, SurrogateTrainer, TrainingProxy, TrialExecutor,
    TrialOutcome, TrialRecord, GLAM_0_1B_32E_PUBLISHED,
};
use brainformer_core::training::{
    evaluate_perplexity, Budget, BudgetMeter, Split, Trainer, TrajectoryPoint,
};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::clock::StdClock;
use crate::config::{check_budget_mode, SearchConfig, TrainRunConfig, TrainerConfig};
use crate::error::{AppError, AppResult};
use crate::executor::ThreadedExecutor;
use crate::io::{ensure_dir, load_corpus, read_genome, read_json, write_json};
use crate::ledger::{self, Ledger};
use crate::manifest::RunManifest;
use crate::report::{
    build_report, lineage, reward_over_time, summary_rows, write_csv, REWARD_HEADER, SUMMARY_HEADER,
};

pub const LOG_ENV: &str = "BRAINFORMER_LOG_LEVEL";

pub const LEDGER_FILE: &str = "ledger.jsonl";
pub const BASELINE_FILE: &str = "baseline.json";
pub const TOPK_FILE: &str = "topk.json";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const TRAJECTORY_FILE: &str = "trajectory.jsonl";
pub const TRAIN_SUMMARY_FILE: &str = "train_summary.json";
pub const COUNT_REPORT_FILE: &str = "count_report.json";
pub const REWARD_FILE: &str = "reward_over_time.csv";
pub const VIOLATIONS_FILE: &str = "violations.csv";
pub const LINEAGE_FILE: &str = "lineage.csv";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Parser)]
#[command(
    name = "brainformer",
    version,
    about = "Brainformer block search, training and accounting"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BudgetMode {
    Wallclock,
    Cost,
}

impl From<BudgetMode> for ConstraintMode {
    fn from(m: BudgetMode) -> Self {
        match m {
            BudgetMode::Wallclock => ConstraintMode::Wallclock,
            BudgetMode::Cost => ConstraintMode::Cost,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Reference {
    #[value(name = "glam-0.1b-32e")]
    Glam01b32e,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evolve blocks under a step-time constraint and keep the best k.
    Search {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `evolution.seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Overrides `constraint`.
        #[arg(long, value_enum)]
        budget_mode: Option<BudgetMode>,
        /// Continue from the ledger already in `--out`.
        #[arg(long)]
        resume: bool,
    },
    /// Train one genome on a byte corpus.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `genome`.
        #[arg(long)]
        genome: Option<PathBuf>,
        /// Overrides `corpus`.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Overrides `train.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Checks that the budget unit matches this mode.
        #[arg(long, value_enum)]
        budget_mode: Option<BudgetMode>,
        /// Continue from the checkpoint in `--out`.
        #[arg(long)]
        resume: bool,
    },
    /// Report total and activated parameters and FLOPs per token.
    CountParams {
        #[arg(
            long,
            conflicts_with = "reference",
            required_unless_present = "reference"
        )]
        genome: Option<PathBuf>,
        #[arg(long, value_enum)]
        reference: Option<Reference>,
        #[arg(long)]
        out: PathBuf,
        /// Multiply all widths by 2 or 4.
        #[arg(long, value_parser = ["2", "4"])]
        scale: Option<String>,
        /// Number of block repetitions; overrides the genome file.
        #[arg(long)]
        stack: Option<usize>,
    },
    /// Summarize a trial ledger as CSV and JSON.
    Report {
        #[arg(long)]
        ledger: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Initializes logging from [`LOG_ENV`], defaulting to `info`.
pub fn init_logging() {
    let env = env_logger::Env::new().filter_or(LOG_ENV, "info");
    let _ = env_logger::Builder::from_env(env)
        .format_timestamp_millis()
        .try_init();
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs one command. `Ok` carries the exit code of a command that produced
/// its outputs, which is nonzero when training diverged.
pub fn run(command: Command) -> AppResult<i32> {
    match command {
        Command::Search {
            config,
            out,
            seed,
            workers,
            budget_mode,
            resume,
        } => cmd_search(&config, &out, seed, workers, budget_mode, resume),
        Command::Train {
            config,
            out,
            genome,
            corpus,
            seed,
            budget_mode,
            resume,
        } => cmd_train(
            config.as_deref(),
            &out,
            genome,
            corpus,
            seed,
            budget_mode,
            resume,
        ),
        Command::CountParams {
            genome,
            reference,
            out,
            scale,
            stack,
        } => cmd_count_params(genome.as_deref(), reference, &out, scale.as_deref(), stack),
        Command::Report { ledger, out } => cmd_report(&ledger, &out),
    }
}

/// Contents of `baseline.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineDoc {
    pub genome: BlockSpec,
    pub baseline: Baseline,
    pub outcome: TrialOutcome,
}

fn cmd_search(
    config_path: &Path,
    out: &Path,
    seed: Option<u64>,
    workers: usize,
    budget_mode: Option<BudgetMode>,
    resume: bool,
) -> AppResult<i32> {
    let mut cfg: SearchConfig = read_json(config_path)?;
    cfg.resolve_paths(config_path);
    if let Some(s) = seed {
        cfg.evolution.seed = s;
    }
    if let Some(m) = budget_mode {
        cfg.constraint = m.into();
    }
    if workers == 0 {
        return Err(AppError::Usage("--workers must be at least 1".into()));
    }
    cfg.validate()?;
    ensure_dir(out)?;
    let manifest = RunManifest::begin("search", Some(config_path), Some(cfg.evolution.seed), out);

    match &cfg.trainer {
        TrainerConfig::Surrogate { curve } => {
            let proxy = SurrogateTrainer::new(cfg.proxy, curve.clone());
            search_with(&cfg, &&proxy, out, workers, resume)?;
        }
        TrainerConfig::Training {
            corpus,
            valid_fraction,
            train,
            eval_tokens,
        } => {
            let corpus = load_corpus(corpus, *valid_fraction)?;
            let proxy = TrainingProxy {
                corpus: &corpus,
                train: train.clone(),
                shape: cfg.proxy,
                mode: cfg.constraint,
                clock: StdClock::new(),
                eval_tokens: *eval_tokens,
            };
            search_with(&cfg, &&proxy, out, workers, resume)?;
        }
    }
    manifest.finish(&[LEDGER_FILE, BASELINE_FILE, TOPK_FILE, SUMMARY_FILE], 0)?;
    Ok(0)
}

fn search_with<P: ProxyTrainer>(
    cfg: &SearchConfig,
    proxy: &P,
    out: &Path,
    workers: usize,
    resume: bool,
) -> AppResult<()> {
    let baseline_path = out.join(BASELINE_FILE);
    let baseline = if !cfg.baseline.enabled {
        None
    } else if resume && baseline_path.exists() {
        let doc: BaselineDoc = read_json(&baseline_path)?;
        Some(doc.baseline)
    } else {
        let genome = cfg.baseline_genome();
        log::info!(
            "measuring baseline {}",
            brainformer_core::search::genome_label(&genome)
        );
        let (baseline, outcome) = measure_baseline(proxy, &genome, &cfg.trial)?;
        write_json(
            &baseline_path,
            &BaselineDoc {
                genome,
                baseline,
                outcome,
            },
        )?;
        Some(baseline)
    };

    let ledger_path = out.join(LEDGER_FILE);
    let (mut ledger, recorded) = if resume {
        let (l, r) = Ledger::resume(&ledger_path)?;
        log::info!("resuming with {} recorded trials", r.len());
        (l, r)
    } else {
        (Ledger::create(&ledger_path)?, Vec::new())
    };

    let threaded = ThreadedExecutor { workers };
    let inner: &dyn TrialExecutor = if workers == 1 {
        &SequentialExecutor
    } else {
        &threaded
    };
    let executor = ReplayExecutor::new(recorded, inner);
    let search = Search {
        space: &cfg.space,
        config: &cfg.evolution,
        trial: &cfg.trial,
        proxy,
        executor: &executor,
        baseline,
    };
    let mut io_error = None;
    let state = evolve(&search, &mut |r: &TrialRecord| {
        log::debug!(
            "trial {} round {} {:?} reward {:.5}",
            r.trial_id,
            r.round,
            r.outcome.stop_reason,
            r.outcome.reward
        );
        if let Err(e) = ledger.append(r) {
            let msg = e.to_string();
            io_error = Some(e);
            return Err(brainformer_core::Error::Input(msg));
        }
        Ok(())
    });
    let state = match (state, io_error) {
        (_, Some(e)) => return Err(e),
        (s, None) => s?,
    };
    if let Some(best) = state.best() {
        log::info!(
            "best trial {} reward {:.5}: {}",
            best.trial_id,
            best.outcome.reward,
            brainformer_core::search::genome_label(&best.genome)
        );
    }
    let topk = finalize_topk(&state.history, &cfg.finalize)?;
    if topk.short {
        log::warn!(
            "only {} of {} requested candidates completed",
            topk.candidates.len(),
            topk.requested
        );
    }
    write_json(&out.join(TOPK_FILE), &topk)?;
    write_csv(
        &out.join(SUMMARY_FILE),
        &SUMMARY_HEADER,
        &summary_rows(&state.history),
    )?;
    Ok(())
}

/// One training-split perplexity check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerplexityCheck {
    pub step: u64,
    pub train_perplexity: f64,
}

/// Contents of `train_summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub spec: ModelSpec,
    pub start_step: u64,
    pub steps: u64,
    pub cost_consumed: f64,
    pub secs_elapsed: f64,
    pub final_train_loss: Option<f64>,
    pub checks: Vec<PerplexityCheck>,
    pub final_train_perplexity: Option<f64>,
    pub final_valid_perplexity: Option<f64>,
    pub target_train_perplexity: Option<f64>,
    pub target_reached: Option<bool>,
    pub diverged: Option<String>,
}

/// Budget left after `done` steps have already been taken under `budget`.
fn remaining_budget(budget: Budget, done: u64, cost_per_step: f64) -> Budget {
    match budget {
        Budget::MaxSteps(n) => Budget::MaxSteps(n.saturating_sub(done)),
        Budget::MaxCostUnits(c) => Budget::MaxCostUnits((c - done as f64 * cost_per_step).max(0.0)),
        Budget::MaxSeconds(s) => Budget::MaxSeconds(s),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    config_path: Option<&Path>,
    out: &Path,
    genome: Option<PathBuf>,
    corpus: Option<PathBuf>,
    seed: Option<u64>,
    budget_mode: Option<BudgetMode>,
    resume: bool,
) -> AppResult<i32> {
    let mut cfg = match config_path {
        Some(p) => {
            let mut c: TrainRunConfig = read_json(p)?;
            c.resolve_paths(p);
            c
        }
        None => crate::io::parse_json(Path::new("<defaults>"), "{}")?,
    };
    if genome.is_some() {
        cfg.genome = genome;
    }
    if corpus.is_some() {
        cfg.corpus = corpus;
    }
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    if let Some(m) = budget_mode {
        check_budget_mode(cfg.budget(), m.into())?;
    }
    cfg.train.validate()?;
    let genome_path = cfg.genome.clone().ok_or_else(|| {
        AppError::Usage("no genome given (--genome or `genome` in the config)".into())
    })?;
    let corpus_path = cfg.corpus.clone().ok_or_else(|| {
        AppError::Usage("no corpus given (--corpus or `corpus` in the config)".into())
    })?;
    let spec = read_genome(&genome_path, cfg.n_blocks, cfg.train.seq_len)?;
    let corpus = load_corpus(&corpus_path, cfg.valid_fraction)?;
    ensure_dir(out)?;
    let manifest = RunManifest::begin("train", config_path, Some(cfg.train.seed), out);

    let mut trainer = if resume {
        let t = checkpoint::load(out, Some(cfg.train.clone()))?;
        if t.model.spec != spec {
            return Err(AppError::Usage(format!(
                "checkpoint in {} was trained on a different genome",
                out.display()
            )));
        }
        log::info!("resuming at step {}", t.step);
        t
    } else {
        Trainer::new(
            LanguageModel::new(spec.clone(), cfg.train.seed)?,
            cfg.train.clone(),
        )?
    };
    let start_step = trainer.step;

    let traj_path = out.join(TRAJECTORY_FILE);
    let traj_file = if resume {
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(&traj_path)
    } else {
        File::create(&traj_path)
    }
    .map_err(|e| AppError::io(&traj_path, e))?;
    let mut traj = BufWriter::new(traj_file);

    let clock = StdClock::new();
    let budget = remaining_budget(cfg.budget(), start_step, trainer.cost_per_step());
    let mut meter = BudgetMeter::new(budget);
    let check_every = match (cfg.target_train_perplexity, cfg.train.eval_interval) {
        (Some(_), 0) => 100,
        (Some(_), n) => n,
        (None, _) => u64::MAX,
    };
    let train_tokens = corpus.tokens(Split::Train);
    let mut checks = Vec::new();
    let mut last_loss = None;
    let mut diverged = None;
    let mut target_reached = cfg.target_train_perplexity.map(|_| false);
    let mut write_error = None;
    let log_every = cfg.log_interval.max(1);

    while !meter.exhausted() {
        let seg = trainer.advance_at_most(
            &corpus,
            &mut meter,
            1.0,
            check_every,
            &clock,
            &mut |p: &TrajectoryPoint| {
                if write_error.is_some() || !p.step.is_multiple_of(log_every) {
                    return;
                }
                let line = serde_json::to_string(p).expect("trajectory points serialize");
                if let Err(e) = writeln!(traj, "{line}") {
                    write_error = Some(e);
                }
            },
        );
        if let Some(e) = write_error.take() {
            return Err(AppError::io(&traj_path, e));
        }
        if let Some(p) = seg.points.last() {
            last_loss = Some(p.train_loss);
            log::info!("step {} loss {:.4} lr {:.5}", p.step, p.train_loss, p.lr);
        }
        if seg.diverged.is_some() {
            diverged = seg.diverged;
            break;
        }
        if let Some(target) = cfg.target_train_perplexity {
            let ppl = evaluate_perplexity(&trainer.model, train_tokens, trainer.cfg.seq_len)?;
            log::info!("step {} train perplexity {:.4}", trainer.step, ppl);
            checks.push(PerplexityCheck {
                step: trainer.step,
                train_perplexity: ppl,
            });
            if ppl < target {
                target_reached = Some(true);
                break;
            }
        }
        if seg.points.is_empty() {
            break;
        }
    }
    traj.flush().map_err(|e| AppError::io(&traj_path, e))?;
    drop(traj);

    let (final_train, final_valid) = if diverged.is_none() {
        let valid = corpus.tokens(Split::Valid);
        (
            evaluate_perplexity(&trainer.model, train_tokens, trainer.cfg.seq_len).ok(),
            (valid.len() >= 2)
                .then(|| evaluate_perplexity(&trainer.model, valid, trainer.cfg.seq_len).ok())
                .flatten(),
        )
    } else {
        (None, None)
    };
    let summary = TrainSummary {
        spec,
        start_step,
        steps: trainer.step,
        cost_consumed: meter.cost,
        secs_elapsed: meter.secs,
        final_train_loss: last_loss,
        checks,
        final_train_perplexity: final_train,
        final_valid_perplexity: final_valid,
        target_train_perplexity: cfg.target_train_perplexity,
        target_reached,
        diverged: diverged.clone(),
    };
    write_json(&out.join(TRAIN_SUMMARY_FILE), &summary)?;

    let code = if let Some(d) = &diverged {
        log::error!("training diverged: {d}");
        1
    } else {
        checkpoint::save(out, &trainer)?;
        if target_reached == Some(false) {
            log::warn!("target training perplexity not reached");
        }
        0
    };
    manifest.finish(
        &[
            TRAJECTORY_FILE,
            TRAIN_SUMMARY_FILE,
            checkpoint::VALUES_FILE,
            checkpoint::SIDECAR_FILE,
        ],
        code,
    )?;
    Ok(code)
}

/// Published totals next to the reconstruction's counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceComparison {
    pub reference: String,
    pub published_n_params: u64,
    pub published_n_act_params: u64,
    pub n_params: u64,
    pub n_act_params_excl_embeddings: u64,
    /// `100 * (counted - published) / published`.
    pub n_params_deviation_pct: f64,
    pub n_act_params_deviation_pct: f64,
    pub convention: String,
}

/// Contents of `count_report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountReport {
    pub spec: ModelSpec,
    pub counts: ParamCount,
    /// Forward FLOPs for a full `max_seq_len` sequence.
    pub flops: FlopEstimate,
    pub flops_per_token: f64,
    pub comparison: Option<ReferenceComparison>,
}

pub const COUNT_CONVENTION: &str = "n_params includes the token and position tables and the untied output \
projection; activated counts charge each MoE layer its gate plus the experts a token uses on average \
(2 for top-2, c for expert choice). The published activated count is compared against the activated count \
without embeddings.";

fn deviation_pct(counted: u64, published: u64) -> f64 {
    100.0 * (counted as f64 - published as f64) / published as f64
}

pub fn count_report(spec: ModelSpec, reference: Option<Reference>) -> AppResult<CountReport> {
    spec.validate()?;
    let counts = count_params(&spec)?;
    let flops = forward_flops(&spec, spec.max_seq_len)?;
    let comparison = reference.map(|r| {
        let (pub_total, pub_act) = match r {
            Reference::Glam01b32e => GLAM_0_1B_32E_PUBLISHED,
        };
        ReferenceComparison {
            reference: "glam-0.1b-32e".into(),
            published_n_params: pub_total,
            published_n_act_params: pub_act,
            n_params: counts.n_params,
            n_act_params_excl_embeddings: counts.n_act_params_excl_embeddings,
            n_params_deviation_pct: deviation_pct(counts.n_params, pub_total),
            n_act_params_deviation_pct: deviation_pct(counts.n_act_params_excl_embeddings, pub_act),
            convention: COUNT_CONVENTION.into(),
        }
    });
    Ok(CountReport {
        flops_per_token: flops.total() / spec.max_seq_len as f64,
        spec,
        counts,
        flops,
        comparison,
    })
}

fn cmd_count_params(
    genome: Option<&Path>,
    reference: Option<Reference>,
    out: &Path,
    scale: Option<&str>,
    stack: Option<usize>,
) -> AppResult<i32> {
    let mut spec = match (genome, reference) {
        (Some(p), _) => read_genome(p, stack.unwrap_or(3), 1024)?,
        (None, Some(Reference::Glam01b32e)) => glam_0_1b_32e(),
        (None, None) => {
            return Err(AppError::Usage(
                "--genome or --reference is required".into(),
            ))
        }
    };
    if let Some(n) = stack {
        spec.n_blocks = n;
    }
    if let Some(s) = scale {
        let factor = ScaleFactor::try_from(
            s.parse::<u32>()
                .map_err(|e| AppError::Usage(e.to_string()))?,
        )?;
        spec.block = scale_model_dim(&spec.block, factor);
    }
    // Only the unmodified reconstruction is comparable to the published row.
    let compare = reference.filter(|_| scale.is_none() && stack.is_none());
    let report = count_report(spec, compare)?;
    ensure_dir(out)?;
    let manifest = RunManifest::begin("count-params", genome, None, out);
    write_json(&out.join(COUNT_REPORT_FILE), &report)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("report serializes")
    );
    manifest.finish(&[COUNT_REPORT_FILE], 0)?;
    Ok(0)
}

#[derive(Debug, Serialize)]
struct ViolationRow<'a> {
    stop_reason: &'a str,
    count: usize,
}

#[derive(Debug, Serialize)]
struct LineageRow {
    depth: usize,
    trial_id: u64,
    parent_id: Option<u64>,
    round: usize,
    mutated_field: Option<String>,
    reward: f64,
}

fn cmd_report(ledger_path: &Path, out: &Path) -> AppResult<i32> {
    let scan = ledger::scan(ledger_path)?;
    for (line, msg) in &scan.skipped {
        log::warn!("{}:{line}: skipped: {msg}", ledger_path.display());
    }
    ensure_dir(out)?;
    let manifest = RunManifest::begin("report", Some(ledger_path), None, out);
    let records = &scan.records;
    let report = build_report(records, scan.skipped.len());

    write_csv(
        &out.join(REWARD_FILE),
        &REWARD_HEADER,
        &reward_over_time(records),
    )?;
    write_csv(
        &out.join(SUMMARY_FILE),
        &SUMMARY_HEADER,
        &summary_rows(records),
    )?;
    let violations: Vec<ViolationRow> = report
        .stop_reasons
        .iter()
        .map(|(k, v)| ViolationRow {
            stop_reason: k,
            count: *v,
        })
        .collect();
    write_csv(
        &out.join(VIOLATIONS_FILE),
        &["stop_reason", "count"],
        &violations,
    )?;
    let by_id: std::collections::BTreeMap<u64, &TrialRecord> =
        records.iter().map(|r| (r.trial_id, r)).collect();
    let lineage_rows: Vec<LineageRow> = report
        .best_trial
        .map(|b| lineage(records, b))
        .unwrap_or_default()
        .into_iter()
        .enumerate()
        .filter_map(|(depth, id)| {
            by_id.get(&id).map(|r| LineageRow {
                depth,
                trial_id: id,
                parent_id: r.parent_id,
                round: r.round,
                mutated_field: r.mutated_field.map(|f| {
                    serde_json::to_value(f)
                        .ok()
                        .and_then(|v| v.as_str().map(str::to_string))
                        .unwrap_or_default()
                }),
                reward: r.outcome.reward,
            })
        })
        .collect();
    write_csv(
        &out.join(LINEAGE_FILE),
        &[
            "depth",
            "trial_id",
            "parent_id",
            "round",
            "mutated_field",
            "reward",
        ],
        &lineage_rows,
    )?;
    write_json(&out.join(REPORT_FILE), &report)?;
    manifest.finish(
        &[
            REWARD_FILE,
            SUMMARY_FILE,
            VIOLATIONS_FILE,
            LINEAGE_FILE,
            REPORT_FILE,
        ],
        0,
    )?;
    Ok(0)
}
