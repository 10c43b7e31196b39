//! The `cgir` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::CliConfig;
use crate::datamodel::io::{ensure_dir, write_atomic};
use crate::datamodel::{available_attribute_count, write_triples, Dataset};
use crate::engine::{resolve_oracle_path, Engine, RetrieveRequest};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, select_provider, sweep_csv, SweepRow};
use crate::retrieval::Action;
use crate::synthworld::generate_world;
use crate::trainer::{save_checkpoint, train};

pub const HISTORY_FILE: &str = "history.csv";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const TRIPLES_FILE: &str = "triples.tsv";

#[derive(Debug, Parser)]
#[command(name = "cgir", version, about = "Gradient item retrieval with disentangled item representations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ConfigArgs {
    /// JSON configuration file; unknown keys are rejected.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one key by dotted path, e.g. `--set loss.beta=0`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<CliConfig> {
        let cfg = CliConfig::resolve(self.config.as_deref(), &self.sets)?;
        log::info!("resolved config: {}", cfg.to_value());
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic world (interactions, attributes, word vectors, oracle).
    GenSynth {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// World seed; overrides `synth.seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Enumerate one-attribute-difference triples and write triples.tsv.
    BuildTriples {
        /// Data directory.
        #[arg(long)]
        data: PathBuf,
        /// Output file; defaults to `<data>/triples.tsv`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Train a model and write a checkpoint directory with history.csv.
    Train {
        /// Data directory.
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint directory.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Evaluate a checkpoint on its held-out triples and write report.json.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Oracle file, or a data directory containing oracle.tsv.
        #[arg(long)]
        oracle: Option<PathBuf>,
        /// Report path; defaults to `<checkpoint>/report.json`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Print the gradient sequence for one modification as JSON.
    Retrieve {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Reference item id.
        #[arg(long)]
        item: String,
        /// Attribute name.
        #[arg(long)]
        attribute: String,
        /// `more` or `less`.
        #[arg(long)]
        action: Action,
        #[arg(long, default_value_t = 0.1)]
        gamma_start: f64,
        #[arg(long, default_value_t = 0.1)]
        gamma_step: f64,
        /// Number of sweep steps.
        #[arg(long, default_value_t = 10)]
        steps: usize,
        /// Candidates reported per step.
        #[arg(long, default_value_t = 1)]
        top_k: usize,
        /// Oracle file, or a data directory containing oracle.tsv, for relevance maps.
        #[arg(long)]
        oracle: Option<PathBuf>,
        /// Also write the JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train over the β/ρ/seed grid and write report.csv.
    Sweep {
        /// Data directory.
        #[arg(long)]
        data: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Serve a checkpoint over HTTP.
    Serve {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Oracle file, or a data directory containing oracle.tsv, for relevance maps.
        #[arg(long)]
        oracle: Option<PathBuf>,
        /// Listen address; falls back to $CGIR_BIND, then 127.0.0.1:8080.
        #[arg(long)]
        bind: Option<String>,
    },
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprintln!("error_code: usage: {}", e.to_string().trim_end());
            return 1;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error_code: {}: {e}", e.code());
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::GenSynth { out, seed, config } => gen_synth(&out, seed, &config),
        Command::BuildTriples { data, out, config } => build_triples(&data, out.as_deref(), &config),
        Command::Train { data, out, config } => train_cmd(&data, &out, &config),
        Command::Eval {
            checkpoint,
            oracle,
            out,
            config,
        } => eval_cmd(&checkpoint, oracle.as_deref(), out.as_deref(), &config),
        Command::Retrieve {
            checkpoint,
            item,
            attribute,
            action,
            gamma_start,
            gamma_step,
            steps,
            top_k,
            oracle,
            out,
        } => {
            let req = RetrieveRequest {
                item_id: item,
                attribute,
                action,
                gamma_start,
                gamma_step,
                steps,
                top_k,
            };
            retrieve_cmd(&checkpoint, oracle.as_deref(), &req, out.as_deref())
        }
        Command::Sweep { data, out, config } => sweep_cmd(&data, &out, &config),
        Command::Serve {
            checkpoint,
            oracle,
            bind,
        } => serve_cmd(&checkpoint, oracle.as_deref(), bind.as_deref()),
    }
}

fn load_data(dir: &Path, cfg: &CliConfig) -> Result<Dataset> {
    let data = Dataset::load_dir(dir, cfg.data.load_options())?;
    if !data.dropped_attributes.is_empty() {
        log::warn!(
            "dropped {} attribute(s) without word vectors: {}",
            data.dropped_attributes.len(),
            data.dropped_attributes.join(", ")
        );
    }
    Ok(data)
}

fn gen_synth(out: &Path, seed: Option<u64>, args: &ConfigArgs) -> Result<()> {
    let mut cfg = args.resolve()?;
    if let Some(s) = seed {
        cfg.synth.seed = s;
    }
    let world = generate_world(&cfg.synth)?;
    world.write_dir(out)?;
    log::info!(
        "wrote {} users, {} items, {} attributes to {}",
        world.interactions.num_users(),
        world.interactions.num_items(),
        world.catalog.num_attributes(),
        out.display()
    );
    Ok(())
}

fn build_triples(data_dir: &Path, out: Option<&Path>, args: &ConfigArgs) -> Result<()> {
    let cfg = args.resolve()?;
    let data = load_data(data_dir, &cfg)?;
    let triples = data.triples();
    let path = out.map(Path::to_path_buf).unwrap_or_else(|| data_dir.join(TRIPLES_FILE));
    write_triples(&path, &triples, data.interactions.items(), &data.catalog)?;
    println!(
        "{}",
        serde_json::json!({
            "triples": triples.len(),
            "available_attribute_count": available_attribute_count(&triples),
        })
    );
    Ok(())
}

fn train_cmd(data_dir: &Path, out: &Path, args: &ConfigArgs) -> Result<()> {
    let cfg = args.resolve()?;
    let data = load_data(data_dir, &cfg)?;
    let outcome = train(&data, &cfg.train)?;
    save_checkpoint(out, &outcome.checkpoint_parts(&data, &cfg.train))?;
    write_atomic(&out.join(HISTORY_FILE), outcome.history.to_csv().as_bytes())?;
    if let Some(last) = outcome.history.last() {
        log::info!(
            "trained {} steps: total {:.4}, hit@20 {:.4}",
            outcome.steps,
            last.loss.total,
            last.hit20
        );
    }
    Ok(())
}

fn eval_cmd(checkpoint: &Path, oracle: Option<&Path>, out: Option<&Path>, args: &ConfigArgs) -> Result<()> {
    let cfg = args.resolve()?;
    let engine = Engine::open(checkpoint, oracle)?;
    let bundle = engine.bundle();
    let triples = crate::datamodel::build_triples(&bundle.catalog);
    let split = bundle.manifest.config.split(&triples)?;
    let provider = select_provider(
        cfg.metrics.relevance,
        engine.oracle().cloned(),
        engine.retriever(),
        &bundle.catalog,
        cfg.metrics.occurrence_pool,
    )?;
    let report = evaluate(engine.retriever(), &split.test, provider.as_ref(), &cfg.metrics)?;
    let text = serde_json::to_string_pretty(&report).expect("serializable");
    let path = out.map(Path::to_path_buf).unwrap_or_else(|| checkpoint.join(REPORT_JSON));
    write_atomic(&path, format!("{text}\n").as_bytes())?;
    println!("{text}");
    Ok(())
}

fn retrieve_cmd(checkpoint: &Path, oracle: Option<&Path>, req: &RetrieveRequest, out: Option<&Path>) -> Result<()> {
    log::info!("retrieve request: {}", serde_json::to_string(req).expect("serializable"));
    let engine = Engine::open(checkpoint, oracle)?;
    let seq = engine.retrieve(req)?;
    let text = serde_json::to_string_pretty(&seq).expect("serializable");
    if let Some(p) = out {
        write_atomic(p, format!("{text}\n").as_bytes())?;
    }
    println!("{text}");
    Ok(())
}

fn sweep_cmd(data_dir: &Path, out: &Path, args: &ConfigArgs) -> Result<()> {
    let cfg = args.resolve()?;
    let data = load_data(data_dir, &cfg)?;
    let triples = data.triples();
    let mut rows = Vec::new();
    for &beta in &cfg.sweep.betas {
        for &rho in &cfg.sweep.rhos {
            for &seed in &cfg.sweep.seeds {
                let mut tc = cfg.train.clone();
                tc.loss.beta = beta;
                tc.loss.rho = rho;
                tc.seed = seed;
                tc.model.init_seed = seed;
                tc.validate()?;
                let outcome = train(&data, &tc)?;
                let retriever = crate::retrieval::Retriever::new(&outcome.params, &data.lexicon)?;
                let provider = select_provider(
                    cfg.metrics.relevance,
                    data.oracle.clone(),
                    &retriever,
                    &data.catalog,
                    cfg.metrics.occurrence_pool,
                )?;
                let split = tc.split(&triples)?;
                let report = evaluate(&retriever, &split.test, provider.as_ref(), &cfg.metrics)?;
                log::info!(
                    "beta {beta} rho {rho} seed {seed}: ind {:.4} mgs {:.4}",
                    report.ind_level,
                    report.mgs
                );
                rows.push(SweepRow {
                    beta,
                    rho,
                    seed,
                    report,
                });
            }
        }
    }
    ensure_dir(out)?;
    write_atomic(&out.join(REPORT_CSV), sweep_csv(&rows).as_bytes())
}

fn serve_cmd(checkpoint: &Path, oracle: Option<&Path>, bind: Option<&str>) -> Result<()> {
    let engine = Engine::open(checkpoint, oracle)?;
    let bind = crate::service::resolve_bind(bind);
    log::info!(
        "serve: checkpoint {}, oracle {}, bind {bind}",
        checkpoint.display(),
        oracle
            .map(|p| resolve_oracle_path(p).display().to_string())
            .unwrap_or_else(|| "none".into())
    );
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::Usage(format!("cannot start runtime: {e}")))?;
    rt.block_on(crate::service::serve(engine, &bind))
}
