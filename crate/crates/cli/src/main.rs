use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use splash::datagen::{gen_synthetic_shift, ShiftGenConfig};
use splash::harness::bench::{run_scalability, BenchConfig};
use splash::harness::config::FileOptions;
use splash::harness::io::{self as edge_io, LoadOptions};
use splash::harness::pipeline::{self, FeatureBundle, Prepared, SelectionArtifact};
use splash::harness::stream::{self, evaluate_dataset, PredictionWriter};
use splash::harness::{DataSource, Deployment, ExperimentConfig, ProcessMode};
use splash::{par, rng, Parallelism};

#[derive(Parser)]
#[command(name = "splash", version, about = "Streaming node property prediction on dynamic graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a class-shift dataset with an experiment config next to it.
    GenSynthetic {
        /// Shift intensity in percent (50..=100).
        #[arg(long)]
        p: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20_000)]
        edges: usize,
    },
    /// Run automatic feature selection only.
    Select {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Select, train and test; writes all run artifacts.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// auto, or fixed:R|P|S|Joint|ZF|RF.
        #[arg(long)]
        process: Option<ProcessMode>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Score a checkpoint on a labeled edge file.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Score every query instead of only those after the validation period.
        #[arg(long)]
        all: bool,
        /// Per-query predictions CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Answer queries from an interleaved event file.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        events: PathBuf,
        /// Predictions CSV (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serving throughput on a generated stream.
    Bench {
        #[arg(long)]
        edges: u64,
        #[arg(long)]
        nodes: u64,
        #[arg(long, default_value_t = 100)]
        k: usize,
        #[arg(long, default_value_t = 8)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seeds to run (overrides the config; SPLASH_SEED wins over both).
    #[arg(long, num_args = 1..)]
    seeds: Vec<u64>,
    /// Disable data-parallel inner loops.
    #[arg(long)]
    sequential: bool,
}

impl RunArgs {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if !self.seeds.is_empty() {
            cfg.seeds = self.seeds.clone();
        }
        if self.sequential {
            cfg.parallelism = Parallelism::Sequential;
        }
        cfg.apply_env();
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    par::init_threads_from_env();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn print_json<T: serde::Serialize + ?Sized>(value: &T) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenSynthetic { p, seed, out, edges } => gen_synthetic(p, seed, &out, edges),
        Command::Select { config, run } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            run.apply(&mut cfg);
            cfg.process = ProcessMode::Auto;
            let data = Prepared::load(&cfg)?;
            let mut reports = Vec::new();
            for &seed in &cfg.seeds {
                let bundle = FeatureBundle::build(&cfg, &data, seed, &cfg.candidates)?;
                let report = pipeline::run_selection(&cfg, &data, &bundle)?;
                let dir = pipeline::seed_dir(&cfg.output_dir, seed);
                fs::create_dir_all(&dir)?;
                let artifact = SelectionArtifact {
                    mode: ProcessMode::Auto,
                    chosen: report.chosen,
                    report: Some(report),
                };
                pipeline::write_json(dir.join("selection.json"), &artifact)?;
                reports.push(artifact);
            }
            print_json(&reports)
        }
        Command::Train { config, process, run } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            if let Some(p) = process {
                cfg.process = p;
            }
            run.apply(&mut cfg);
            let summary = pipeline::run_experiment(&cfg)?;
            print_json(&summary)
        }
        Command::Eval { checkpoint, data, all, out } => {
            let dep = Deployment::load(&checkpoint)
                .with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
            let opts = LoadOptions {
                task: dep.task,
                format: None,
                label_dim: Some(dep.model.dims.label_dim),
                affinity_window: dep.dataset.affinity_window,
            };
            let dataset = edge_io::load_edge_csv(&data, &opts).with_context(|| format!("loading {}", data.display()))?;
            let (report, preds) = evaluate_dataset(&dep, &dataset, all, Parallelism::default())?;
            if let Some(out) = out {
                pipeline::write_predictions(File::create(out)?, &preds)?;
            }
            print_json(&report)
        }
        Command::Predict { checkpoint, events, out } => {
            let dep = Deployment::load(&checkpoint)
                .with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
            let reader = edge_io::read_events(BufReader::new(File::open(&events)?))?;
            if reader.d_e() != dep.stream.d_e {
                bail!("event file has {} edge features, checkpoint expects {}", reader.d_e(), dep.stream.d_e);
            }
            let sink: Box<dyn Write> = match out {
                Some(p) => Box::new(BufWriter::new(File::create(p)?)),
                None => Box::new(BufWriter::new(io::stdout().lock())),
            };
            let mut writer = PredictionWriter::new(sink);
            let stats = stream::stream_predict(&dep, reader, |p| writer.write(&p))?;
            writer.finish()?;
            log::info!(
                "{} edges and {} queries in {:.2}s",
                stats.edges,
                stats.queries,
                stats.seconds
            );
            Ok(())
        }
        Command::Bench { edges, nodes, k, dim, seed } => {
            let report = run_scalability(&BenchConfig {
                n_nodes: nodes,
                n_edges: edges,
                k,
                dim,
                rng_seed: rng::seed_override().unwrap_or(seed),
            })?;
            print_json(&report)
        }
    }
}

fn gen_synthetic(p: u32, seed: u64, out: &Path, edges: usize) -> Result<()> {
    let gen = ShiftGenConfig {
        p,
        rng_seed: rng::seed_override().unwrap_or(seed),
        n_edges: edges,
        ..Default::default()
    };
    let data = gen_synthetic_shift(&gen)?;
    fs::create_dir_all(out)?;
    edge_io::write_edge_csv(BufWriter::new(File::create(out.join("edges.csv"))?), &data.edges, &data.props)?;
    pipeline::write_json(out.join("manifest.json"), &data.manifest)?;
    let cfg = ExperimentConfig {
        data: DataSource::File {
            path: PathBuf::from("edges.csv"),
            options: FileOptions {
                label_dim: Some(gen.n_classes),
                ..Default::default()
            },
        },
        output_dir: out.join("runs"),
        ..Default::default()
    };
    fs::write(out.join("config.json"), cfg.to_json()? + "\n")?;
    log::info!(
        "wrote {} edges and {} queries to {}",
        data.edges.len(),
        data.props.len(),
        out.display()
    );
    Ok(())
}
