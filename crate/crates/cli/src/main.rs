use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use assignee_core::config::PipelineConfig;
use assignee_core::eval::evaluate;
use assignee_core::ingest::{load_assignee_table, load_gold_standard};
use assignee_core::pipeline::{
    apply_params, load_mapping, mapping_partition, open_cache, params_from_config, run_pipeline, summarize, TuningCorpus,
};
use assignee_core::tsv::write_atomic;
use assignee_core::tune::{optimize, TrialStore};
use assignee_core::Error;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "terr", version, about = "Harmonize variant company names in patent-assignee tables")]
struct Cli {
    /// TOML configuration file
    #[arg(long, global = true, env = "TERR_CONFIG")]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for community detection and tuning
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Use only the augmentation cache, never the network
    #[arg(long, global = true)]
    offline: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fill the augmentation cache for every name in the input table
    Augment {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Run the full pipeline and write the mapping, summary and manifest
    Run {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a mapping against gold clusters
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Search matching and filtering hyperparameters against gold clusters
    Tune {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        /// Trial log (JSON lines)
        #[arg(long)]
        out: PathBuf,
        /// Write the best configuration here
        #[arg(long)]
        best_config: Option<PathBuf>,
    },
    /// Before/after counts and largest communities of a mapping
    Summarize {
        #[arg(long)]
        mapping: PathBuf,
        /// Assignee table, for patent counts
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let Some(e) = err.chain().find_map(|c| c.downcast_ref::<Error>()) else {
        return 4;
    };
    match e.root() {
        Error::Config(_) => 2,
        Error::Io { .. } | Error::Malformed { .. } | Error::DuplicateId(_) | Error::Schema(_) | Error::InvalidInput(_) => 3,
        _ => 4,
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::from_toml_with_env("", std::env::vars())?,
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if cli.offline {
        cfg.augment.offline = true;
    }
    Ok(cfg)
}

fn require(path: &Option<PathBuf>, what: &str) -> anyhow::Result<PathBuf> {
    path.clone()
        .ok_or_else(|| Error::Config(format!("no {what} given (flag or config)")).into())
}

fn write_json(path: Option<&Path>, value: &impl serde::Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match path {
        Some(p) => write_atomic(p, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("configuring the thread pool")?;
    }
    let mut cfg = load_config(&cli)?;
    match &cli.command {
        Command::Augment { input, cache } => {
            if let Some(p) = input {
                cfg.io.input = Some(p.clone());
            }
            if let Some(p) = cache {
                cfg.io.cache = Some(p.clone());
            }
            cfg.augment.enabled = true;
            let records = load_assignee_table(&require(&cfg.io.input, "input")?)?;
            let names: Vec<String> = records.iter().map(|r| r.raw_name.clone()).collect();
            let (_, report) = open_cache(&cfg, &names)?;
            let report = report.unwrap_or_default();
            eprintln!(
                "augment: {} cached, {} fetched, {} failed, {} missing",
                report.cache_hits,
                report.fetched,
                report.failed.len(),
                report.missing.len()
            );
            write_json(None, &report)
        }
        Command::Run { input, cache, out } => {
            if let Some(p) = input {
                cfg.io.input = Some(p.clone());
            }
            if let Some(p) = cache {
                cfg.io.cache = Some(p.clone());
            }
            if let Some(p) = out {
                cfg.io.output_dir = p.clone();
            }
            let output = run_pipeline(&cfg)?;
            for note in &output.summary.notes {
                eprintln!("warning: {note}");
            }
            eprintln!(
                "run: {} records, {} names -> {} communities (reduction {}), outputs in {}",
                output.summary.n_records,
                output.summary.n_unique_names,
                output.summary.n_communities,
                output.summary.reduction_rate.map_or("n/a".to_string(), |r| format!("{r:.4}")),
                output.output_dir.display()
            );
            Ok(())
        }
        Command::Evaluate { pred, gold, out } => {
            let rows = load_mapping(pred)?;
            let gold = load_gold_standard(gold)?;
            let report = evaluate(&mapping_partition(&rows), &gold)?;
            write_json(out.as_deref(), &report)
        }
        Command::Tune { input, gold, cache, trials, out, best_config } => {
            if let Some(p) = input {
                cfg.io.input = Some(p.clone());
            }
            if let Some(p) = gold {
                cfg.io.gold = Some(p.clone());
            }
            if let Some(p) = cache {
                cfg.io.cache = Some(p.clone());
            }
            if let Some(n) = trials {
                cfg.tune.trials = *n;
            }
            // tuning replays cached results only
            cfg.augment.offline = true;
            let records = load_assignee_table(&require(&cfg.io.input, "input")?)?;
            let gold = load_gold_standard(&require(&cfg.io.gold, "gold")?)?;
            let names: Vec<String> = records.iter().map(|r| r.raw_name.clone()).collect();
            let (cache, _) = open_cache(&cfg, &names)?;
            let corpus = TuningCorpus::new(&cfg, records, cache.as_ref(), gold)?;
            let space = cfg.tune.search_space()?;
            let defaults = params_from_config(&cfg);
            let enqueued = if cfg.tune.enqueue_default && space.contains(&defaults) { vec![defaults] } else { Vec::new() };
            let mut store = TrialStore::create(out, &space)?;
            let history = optimize(
                |p, seed| corpus.evaluate(p, seed).map(|r| r.f1),
                &space,
                cfg.tune.trials,
                &cfg.tune.tpe(),
                &enqueued,
                Some(&mut store),
            )?;
            let best = history.best().context("no trials were run")?;
            eprintln!("tune: best F1 {:.4} at trial {}", best.objective, best.trial_id);
            if let Some(path) = best_config {
                let mut tuned = apply_params(&cfg, &best.params)?;
                tuned.graph.seed = best.seed;
                write_atomic(path, tuned.to_toml().as_bytes())?;
            }
            write_json(None, &serde_json::json!({
                "trial_id": best.trial_id,
                "objective": best.objective,
                "seed": best.seed,
                "params": space.named(&best.params),
            }))
        }
        Command::Summarize { mapping, input, out } => {
            let rows = load_mapping(mapping)?;
            let records = match input.as_ref().or(cfg.io.input.as_ref()) {
                Some(p) => load_assignee_table(p)?,
                None => Vec::new(),
            };
            let summary = summarize(&rows, &records);
            for note in &summary.notes {
                eprintln!("warning: {note}");
            }
            write_json(out.as_deref(), &summary)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
