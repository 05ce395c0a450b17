//! Command-line entry point: config resolution, run directories, and the
//! subcommands (generate, train-mcts, train-supervised, eval, oracle,
//! describe-checkpoint, emit-fixtures).
//!
//! Every run creates a directory containing a resolved config snapshot plus
//! the subcommand's artifacts. With a fixed config and seed, metrics CSVs
//! and checkpoints are byte-identical across runs; wall-clock timings go to
//! a separate `timings.csv` that carries no reproducibility guarantee.

use crate::config::{BuiltEnv, ConfigError, EnvConfig, RunConfig};
use crate::env::{EnvError, StatePair};
use crate::image_env::procedural_texture;
use crate::mcts::{self, NetEvaluator, SearchError};
use crate::nn::checkpoint::{self, CheckpointMeta};
use crate::nn::{CkptError, HeadKind, NetError, PolicyValueNet};
use crate::oracle::{self, OracleError};
use crate::pgm::{self, PgmError};
use crate::retrieval::{evaluate, NetFactory};
use crate::training::{self, EpochMetrics, TrainError};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Checkpoint(#[from] CkptError),
    #[error(transparent)]
    Pgm(#[from] PgmError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "ConfigError",
            CliError::Env(_) => "EnvError",
            CliError::Train(_) => "TrainError",
            CliError::Checkpoint(_) => "CheckpointError",
            CliError::Pgm(_) => "PgmError",
            CliError::Oracle(_) => "OracleError",
            CliError::Net(_) => "NetError",
            CliError::Search(_) => "SearchError",
            CliError::Io(_) => "IoError",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "itsr",
    about = "Image transformation sequence retrieval: environments, training, search, evaluation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Default, Clone)]
pub struct CommonArgs {
    /// JSON run configuration; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Environment shorthand: toy-constrained, toy-free, or image.
    #[arg(long)]
    pub env: Option<String>,
    /// Master seed; every component derives its own stream from it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Exact run directory (default: <root>/<subcommand>-<timestamp>, with
    /// the root from $ITSR_OUT, the config, or ./runs).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sample problem pairs and write them as JSONL (optionally with PGM renders).
    Generate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// Ground-truth length cap (default: the environment's depth cap).
        #[arg(long)]
        max_len: Option<usize>,
        /// Also write source/target PGMs under renders/.
        #[arg(long)]
        render: bool,
    },
    /// Curriculum self-play training with search.
    TrainMcts {
        #[command(flatten)]
        common: CommonArgs,
        /// Continue from a checkpoint (skips its completed epochs).
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Dump per-move search traces for the first episode of each epoch.
        #[arg(long)]
        trace_search: bool,
    },
    /// Supervised next-action baseline on the same episode stream.
    TrainSupervised {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Single-shot and top-K accuracy of a checkpoint on held-out pairs.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        num_pairs: Option<usize>,
    },
    /// Brute-force solving and counting.
    Oracle {
        #[command(subcommand)]
        command: OracleCommand,
    },
    /// Print checkpoint metadata and tensor shapes.
    DescribeCheckpoint { path: PathBuf },
    /// Write a reproducible PGM fixture pool.
    EmitFixtures {
        #[arg(long, default_value = "fixtures")]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        count: usize,
        #[arg(long, default_value_t = 32)]
        side: u32,
    },
}

#[derive(Subcommand, Debug)]
pub enum OracleCommand {
    /// Breadth-first shortest solution between two PGM images.
    Solve {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        max_depth: Option<usize>,
    },
    /// Count legal sequences under a per-symbol repetition cap.
    CountSequences {
        /// `image` selects the 5-transform, cap-2, length 1..=10 grammar.
        #[arg(long)]
        env: Option<String>,
        #[arg(long)]
        alphabet: Option<usize>,
        #[arg(long)]
        cap: Option<usize>,
        #[arg(long, default_value_t = 1)]
        min_len: usize,
        #[arg(long)]
        max_len: Option<usize>,
    },
    /// Count distinct solutions of an exact length between two PGM images.
    CountSolutions {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        length: usize,
    },
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate {
            common,
            count,
            max_len,
            render,
        } => run_generate(&common, count, max_len, render),
        Command::TrainMcts {
            common,
            resume,
            trace_search,
        } => run_train(&common, resume.as_deref(), trace_search, TrainKind::Mcts),
        Command::TrainSupervised { common, resume } => {
            run_train(&common, resume.as_deref(), false, TrainKind::Supervised)
        }
        Command::Eval {
            common,
            checkpoint,
            num_pairs,
        } => run_eval(&common, checkpoint.as_deref(), num_pairs),
        Command::Oracle { command } => run_oracle(command),
        Command::DescribeCheckpoint { path } => run_describe(&path),
        Command::EmitFixtures {
            out,
            seed,
            count,
            side,
        } => run_emit_fixtures(&out, seed, count, side),
    }
}

fn resolve_config(common: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(env) = &common.env {
        cfg.env = EnvConfig::from_shorthand(env)?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(workers) = common.workers {
        cfg.workers = workers;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn init_workers(workers: usize) {
    if workers > 0 {
        // Only the first global-pool build wins; later calls are no-ops.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
}

fn make_run_dir(
    cfg: &RunConfig,
    cli_out: Option<&PathBuf>,
    subcommand: &str,
) -> Result<PathBuf, CliError> {
    if let Some(out) = cli_out {
        fs::create_dir_all(out)?;
        return Ok(out.clone());
    }
    let root = std::env::var_os("ITSR_OUT")
        .map(PathBuf::from)
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("runs"));
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut suffix = 0u32;
    loop {
        let name = if suffix == 0 {
            format!("{subcommand}-{stamp}")
        } else {
            format!("{subcommand}-{stamp}-{suffix}")
        };
        let dir = root.join(name);
        if !dir.exists() {
            fs::create_dir_all(&dir)?;
            return Ok(dir);
        }
        suffix += 1;
    }
}

fn write_config_snapshot(cfg: &RunConfig, dir: &Path) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(cfg).expect("config serializes");
    fs::write(dir.join("config-resolved.json"), text)?;
    Ok(())
}

#[derive(Clone, Copy, PartialEq)]
enum TrainKind {
    Mcts,
    Supervised,
}

impl TrainKind {
    fn name(self) -> &'static str {
        match self {
            TrainKind::Mcts => "train-mcts",
            TrainKind::Supervised => "train-supervised",
        }
    }

    fn meta_kind(self) -> &'static str {
        match self {
            TrainKind::Mcts => "mcts",
            TrainKind::Supervised => "supervised",
        }
    }

    fn head(self) -> HeadKind {
        match self {
            TrainKind::Mcts => HeadKind::ActorCritic,
            TrainKind::Supervised => HeadKind::Classifier,
        }
    }
}

fn run_train(
    common: &CommonArgs,
    resume: Option<&Path>,
    trace_search: bool,
    kind: TrainKind,
) -> Result<(), CliError> {
    let cfg = resolve_config(common)?;
    init_workers(cfg.workers);
    let run_dir = make_run_dir(&cfg, common.out.as_ref(), kind.name())?;
    write_config_snapshot(&cfg, &run_dir)?;
    let built = cfg.build_env()?;
    let env = built.as_env();

    let (mut net, skip) = match resume {
        Some(path) => {
            let (net, meta) = checkpoint::load(path)?;
            checkpoint::ensure_env_compatible(&net, env)?;
            if meta.kind != kind.meta_kind() {
                return Err(ConfigError::Invalid(format!(
                    "checkpoint was trained with '{}', not '{}'",
                    meta.kind,
                    kind.meta_kind()
                ))
                .into());
            }
            (net, Some((meta.stage, meta.epoch)))
        }
        None => (
            PolicyValueNet::<f32>::new(cfg.network_config(env, kind.head()), cfg.seed)?,
            None,
        ),
    };

    let mut metrics_file = fs::File::create(run_dir.join("metrics.csv"))?;
    writeln!(
        metrics_file,
        "stage,epoch,policy_ce,value_mse,total_loss,success_rate,episodes,new_items,buffer_size"
    )?;
    let mut timings_file = fs::File::create(run_dir.join("timings.csv"))?;
    writeln!(timings_file, "stage,epoch,wall_ms")?;
    let mut trace_file = if trace_search {
        Some(fs::File::create(run_dir.join("trace.jsonl"))?)
    } else {
        None
    };

    let mut last_tick = Instant::now();
    let stages = cfg.training.stages.clone();
    let mcts_cfg = cfg.mcts;
    let seed = cfg.seed;
    let run_dir_hook = run_dir.clone();
    let env_ref = env;
    let mut hook = move |net: &PolicyValueNet<f32>, m: &EpochMetrics| -> Result<(), String> {
        let err = |e: io::Error| e.to_string();
        writeln!(
            metrics_file,
            "{},{},{:.6},{:.6},{:.6},{:.6},{},{},{}",
            m.stage,
            m.epoch,
            m.policy_ce,
            m.value_mse,
            m.total_loss,
            m.success_rate,
            m.episodes,
            m.new_items,
            m.buffer_size
        )
        .map_err(err)?;
        writeln!(
            timings_file,
            "{},{},{}",
            m.stage,
            m.epoch,
            last_tick.elapsed().as_millis()
        )
        .map_err(err)?;
        last_tick = Instant::now();

        let meta = CheckpointMeta {
            kind: kind.meta_kind().into(),
            stage: m.stage,
            epoch: m.epoch,
            seed,
            network: net.cfg.clone(),
        };
        let path = run_dir_hook.join(format!("checkpoint-s{}e{}.itsr", m.stage, m.epoch));
        checkpoint::save(net, &meta, &path).map_err(|e| e.to_string())?;
        checkpoint::save(net, &meta, &run_dir_hook.join("latest.itsr"))
            .map_err(|e| e.to_string())?;

        if let Some(trace_file) = trace_file.as_mut() {
            let max_len = stages[m.stage]
                .max_len
                .unwrap_or(env_ref.max_depth())
                .min(env_ref.max_depth());
            let episode = training::generate_episodes(
                env_ref,
                1,
                max_len,
                seed,
                "gen",
                &[m.stage as u64, m.epoch as u64],
            )
            .map_err(|e| e.to_string())?
            .remove(0);
            let evaluator = NetEvaluator::new(net, &episode.target).map_err(|e| e.to_string())?;
            let mut rng = crate::seeds::rng(seed, "trace", &[m.stage as u64, m.epoch as u64]);
            let outcome = mcts::self_play_episode(
                env_ref, &episode, &evaluator, &mcts_cfg, max_len, &mut rng, true,
            )
            .map_err(|e| e.to_string())?;
            let line = json!({
                "stage": m.stage,
                "epoch": m.epoch,
                "episode": 0,
                "replayed_after_update": true,
                "reward": outcome.reward,
                "moves": outcome.traces,
            });
            writeln!(trace_file, "{line}").map_err(err)?;
        }
        Ok(())
    };

    let metrics = match kind {
        TrainKind::Mcts => training::train_mcts(
            env,
            &mut net,
            &cfg.training,
            &cfg.mcts,
            cfg.seed,
            skip,
            Some(&mut hook),
        )?,
        TrainKind::Supervised => training::train_supervised(
            env,
            &mut net,
            &cfg.training,
            cfg.seed,
            skip,
            Some(&mut hook),
        )?,
    };

    let last = metrics.last();
    println!(
        "{}",
        json!({
            "run_dir": run_dir,
            "epochs": metrics.len(),
            "final_success_rate": last.map(|m| m.success_rate),
            "final_loss": last.map(|m| m.total_loss),
            "checkpoint": run_dir.join("latest.itsr"),
        })
    );
    Ok(())
}

fn run_eval(
    common: &CommonArgs,
    ckpt: Option<&Path>,
    num_pairs: Option<usize>,
) -> Result<(), CliError> {
    let cfg = resolve_config(common)?;
    let Some(ckpt) = ckpt else {
        return Err(ConfigError::Invalid("eval requires --checkpoint <path>".into()).into());
    };
    init_workers(cfg.workers);
    let run_dir = make_run_dir(&cfg, common.out.as_ref(), "eval")?;
    write_config_snapshot(&cfg, &run_dir)?;
    let built = cfg.build_env()?;
    let env = built.as_env();
    let (net, meta) = checkpoint::load(ckpt)?;
    checkpoint::ensure_env_compatible(&net, env)?;

    let n = num_pairs.unwrap_or(cfg.eval.num_pairs);
    let max_depth = cfg.eval.max_depth.unwrap_or(env.max_depth());
    let mut ks = cfg.eval.ks.clone();
    ks.sort_unstable();
    ks.dedup();
    let episodes = training::generate_episodes(env, n, env.max_depth(), cfg.seed, "eval", &[])?;
    let report = evaluate(env, &NetFactory { net: &net }, &episodes, &ks, max_depth);

    let env_name = cfg.env.name();
    report.write_csv(&meta.kind, &env_name, &run_dir.join("eval.csv"))?;
    report.write_jsonl(&run_dir.join("episodes.jsonl"))?;
    report.write_plot_data(&run_dir.join("plot.csv"))?;
    println!(
        "{}",
        json!({
            "run_dir": run_dir,
            "model": meta.kind,
            "env": env_name,
            "pairs": n,
            "single_shot_accuracy": report.single_shot_accuracy,
            "top_k": report.top_k,
            "mean_expansions": report.mean_expansions_to_solution,
        })
    );
    Ok(())
}

fn run_generate(
    common: &CommonArgs,
    count: usize,
    max_len: Option<usize>,
    render: bool,
) -> Result<(), CliError> {
    let cfg = resolve_config(common)?;
    init_workers(cfg.workers);
    let run_dir = make_run_dir(&cfg, common.out.as_ref(), "generate")?;
    write_config_snapshot(&cfg, &run_dir)?;
    let built = cfg.build_env()?;
    let env = built.as_env();
    let max_len = max_len.unwrap_or(env.max_depth()).min(env.max_depth());
    let episodes = training::generate_episodes(env, count, max_len, cfg.seed, "gen-cli", &[])?;

    let mut out = io::BufWriter::new(fs::File::create(run_dir.join("episodes.jsonl"))?);
    let render_dir = run_dir.join("renders");
    if render {
        fs::create_dir_all(&render_dir)?;
    }
    for (i, ep) in episodes.iter().enumerate() {
        let names = ep.ground_truth.names(env);
        let row = match &built {
            BuiltEnv::Toy(toy) => {
                let source = toy.decode_image(&ep.source).expect("generator output");
                let target = toy.decode_image(&ep.target).expect("generator output");
                json!({
                    "index": i,
                    "env": cfg.env.name(),
                    "source_cells": source.to_ints(),
                    "target_cells": target.to_ints(),
                    "actions": names,
                })
            }
            BuiltEnv::Image(image_env) => json!({
                "index": i,
                "env": "image",
                "pool_index": image_env.pool_index_of(&ep.source),
                "actions": names,
            }),
        };
        writeln!(out, "{row}")?;
        if render {
            pgm::write(&ep.source, &render_dir.join(format!("ep{i:05}_source.pgm")))?;
            pgm::write(&ep.target, &render_dir.join(format!("ep{i:05}_target.pgm")))?;
        }
    }
    out.flush()?;
    println!(
        "{}",
        json!({"run_dir": run_dir, "count": count, "max_len": max_len})
    );
    Ok(())
}

fn run_oracle(command: OracleCommand) -> Result<(), CliError> {
    match command {
        OracleCommand::Solve {
            common,
            source,
            target,
            max_depth,
        } => {
            let cfg = resolve_config(&common)?;
            let built = cfg.build_env()?;
            let env = built.as_env();
            let pair = StatePair::new(pgm::read(&source)?, pgm::read(&target)?)?;
            let max_depth = max_depth.unwrap_or(env.max_depth()).min(env.max_depth());
            match oracle::bfs_solve(&pair, env, max_depth)? {
                Some(trajectory) => println!(
                    "{}",
                    json!({
                        "found": true,
                        "length": trajectory.len(),
                        "actions": trajectory.names(env),
                    })
                ),
                None => println!("{}", json!({"found": false, "max_depth": max_depth})),
            }
        }
        OracleCommand::CountSequences {
            env,
            alphabet,
            cap,
            min_len,
            max_len,
        } => {
            let (alphabet, cap, min_len, max_len) = match env.as_deref() {
                Some("image") | None if alphabet.is_none() => (5, 2, 1, 10),
                _ => (
                    alphabet.ok_or_else(|| {
                        ConfigError::Invalid("--alphabet required without --env image".into())
                    })?,
                    cap.ok_or_else(|| ConfigError::Invalid("--cap required".into()))?,
                    min_len,
                    max_len.ok_or_else(|| ConfigError::Invalid("--max-len required".into()))?,
                ),
            };
            let count = oracle::count_sequences(alphabet, cap, min_len, max_len);
            println!(
                "{}",
                json!({
                    "alphabet": alphabet,
                    "cap": cap,
                    "min_len": min_len,
                    "max_len": max_len,
                    "count": count,
                })
            );
        }
        OracleCommand::CountSolutions {
            common,
            source,
            target,
            length,
        } => {
            let cfg = resolve_config(&common)?;
            let built = cfg.build_env()?;
            let env = built.as_env();
            let pair = StatePair::new(pgm::read(&source)?, pgm::read(&target)?)?;
            let count = oracle::count_solutions(&pair, env, length)?;
            println!("{}", json!({"length": length, "count": count}));
        }
    }
    Ok(())
}

fn run_describe(path: &Path) -> Result<(), CliError> {
    let (meta, tensors) = checkpoint::describe(path)?;
    let tensor_list: Vec<_> = tensors
        .iter()
        .map(|t| json!({"name": t.name, "shape": t.shape}))
        .collect();
    println!(
        "{}",
        json!({
            "kind": meta.kind,
            "stage": meta.stage,
            "epoch": meta.epoch,
            "seed": meta.seed,
            "action_count": meta.network.action_count,
            "input_side": meta.network.input_side,
            "tensors": tensor_list,
        })
    );
    Ok(())
}

fn run_emit_fixtures(out: &Path, seed: u64, count: usize, side: u32) -> Result<(), CliError> {
    fs::create_dir_all(out)?;
    for i in 0..count {
        let img = procedural_texture(side, seed, i as u64);
        pgm::write(&img, &out.join(format!("fixture_{i:04}.pgm")))?;
    }
    println!(
        "{}",
        json!({"dir": out, "count": count, "seed": seed, "side": side})
    );
    Ok(())
}
