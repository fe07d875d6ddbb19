use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mtgcn::config::{parse_config_with, ConfigOverrides, ExperimentConfig};
use mtgcn::graph::{load_bundle, planted_partition, write_bundle, PlantedPartition};
use mtgcn::harness::{collect_results, emit_report, run_grid, GridSpec, NetworkResult};
use mtgcn::train::{aggregate, train_prepared, Checkpoint, PreparedData};
use mtgcn::{Error, Result};

#[derive(Parser)]
#[command(name = "mtgcn", version, about = "Multi-task GCN experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// Number of seeded runs (run k uses seed + k).
    #[arg(long)]
    runs: Option<usize>,
    /// Base seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Bundle directory, replacing the config's `dataset`.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Output directory, replacing the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Overrides {
    fn to_config(&self) -> ConfigOverrides {
        ConfigOverrides {
            dataset: self.dataset.clone(),
            runs: self.runs,
            seed: self.seed,
            epochs: self.epochs,
            output_dir: self.out.clone(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train `runs` seeded runs of one configuration.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Grid search; only the winning point's test accuracy is reported.
    Grid {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Score a saved checkpoint on a bundle.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        bundle: PathBuf,
    },
    /// Collect `summary.json` files into one report with baseline deltas.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a planted-partition toy bundle.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long, default_value_t = 40)]
        nodes_per_class: usize,
        #[arg(long, default_value_t = 30)]
        features: usize,
        #[arg(long, default_value_t = 0.15)]
        p_in: f64,
        #[arg(long, default_value_t = 0.01)]
        p_out: f64,
        /// Probability that an active feature comes from the class block.
        #[arg(long, default_value_t = 0.6)]
        affinity: f64,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io_err(path))
}

fn prepare(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let bundle = load_bundle(cfg.dataset_path())?;
    PreparedData::new(bundle, cfg.normalize_features)
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

fn train(config: &Path, overrides: &Overrides) -> Result<()> {
    let cfg = parse_config_with(config, &overrides.to_config())?;
    let data = prepare(&cfg)?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(io_err(out))?;
    write(&out.join("config.toml"), &cfg.to_toml())?;
    let mut reports = Vec::with_capacity(cfg.runs);
    for k in 0..cfg.runs as u64 {
        let seed = cfg.seed + k;
        let run = train_prepared(&data, &cfg, seed)?;
        let r = &run.report;
        eprintln!(
            "{} seed {seed}: best epoch {} val {:.4} test {:.4} ({:.1}s)",
            cfg.name, r.best_epoch, r.best_val_accuracy, r.test_accuracy, r.wall_clock_secs
        );
        write(&out.join(format!("run-{seed}.json")), &(r.to_json() + "\n"))?;
        Checkpoint::from_run(&run, &cfg).save(&out.join(format!("checkpoint-{seed}.json")))?;
        reports.push(run.report);
    }
    let agg = aggregate(&reports)?;
    eprintln!("{}: test accuracy {:.4} ± {:.4} over {} runs", cfg.name, agg.mean, agg.sem, reports.len());
    let summary = NetworkResult::new(&cfg, &data.bundle.name, agg);
    write(&out.join("summary.json"), &to_json(&summary))
}

fn grid(config: &Path, grid: &Path, overrides: &Overrides) -> Result<()> {
    let cfg = parse_config_with(config, &overrides.to_config())?;
    let spec = GridSpec::read(grid)?;
    let data = prepare(&cfg)?;
    let results = run_grid(&cfg, &spec, &data)?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(io_err(out))?;
    write(&out.join("grid.json"), &to_json(&results))?;
    for p in &results.points {
        eprintln!("point {}: {}", p.index, serde_json::to_string(&p.outcome).expect("serializable"));
    }
    match &results.winner {
        Some(w) => {
            eprintln!(
                "winner point {} {}: val {:.4}, test {:.4} ± {:.4}",
                w.index,
                serde_json::to_string(&w.point).expect("serializable"),
                w.aggregate.val_mean,
                w.aggregate.mean,
                w.aggregate.sem
            );
            let winner_cfg = w.point.apply(&cfg);
            write(&out.join("winner.toml"), &winner_cfg.to_toml())?;
            let summary = NetworkResult::new(&winner_cfg, &data.bundle.name, w.aggregate.clone());
            write(&out.join("summary.json"), &to_json(&summary))
        }
        None => Err(Error::Invalid("every grid point failed".into())),
    }
}

fn eval(checkpoint: &Path, bundle: &Path) -> Result<()> {
    let ck = Checkpoint::load(checkpoint)?;
    let eval = ck.evaluate(load_bundle(bundle)?)?;
    print!("{}", to_json(&eval));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, overrides } => train(&config, &overrides),
        Command::Grid {
            config,
            grid: g,
            overrides,
        } => grid(&config, &g, &overrides),
        Command::Eval { checkpoint, bundle } => eval(&checkpoint, &bundle),
        Command::Report { input, out } => emit_report(&collect_results(&input)?, &out),
        Command::Synth {
            out,
            seed,
            classes,
            nodes_per_class,
            features,
            p_in,
            p_out,
            affinity,
        } => {
            let spec = PlantedPartition {
                classes,
                nodes_per_class,
                features,
                p_in,
                p_out,
                word_affinity: affinity,
                ..Default::default()
            };
            Ok(write_bundle(&planted_partition(&spec, seed)?, &out)?)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
