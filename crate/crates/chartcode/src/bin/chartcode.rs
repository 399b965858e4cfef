//! Command-line front end: dataset generation, training, evaluation,
//! single-chart generation, the ablation grid, and report rendering. All
//! heavy lifting lives in the library; this binary is argument plumbing.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use chartcode::chartlab::{gen_dataset, ChartSpec, ChartType, Dataset, Raster, TypeMix};
use chartcode::model::infer::{GenMode, InferenceModel};
use chartcode::rng::Rng;
use chartcode::training::{
    evaluate, load_checkpoint, render_report, run_ablation, train, write_metrics_csv, GridSelect,
    RunConfig,
};
use chartcode::Error;

#[derive(Parser)]
#[command(name = "chartcode", about = "Chart-to-code toy lab: routed experts + low-rank adapters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a stratified synthetic dataset (train/val/test JSONL).
    GenData {
        /// Number of charts to sample (>= 10).
        #[arg(long, default_value_t = 1000)]
        count: usize,
        /// Root RNG seed.
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output directory for the three split manifests.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model from a config file.
    Train {
        /// TOML run config; see the key list below.
        #[arg(long)]
        config: PathBuf,
        /// Dataset directory (from gen-data).
        #[arg(long)]
        data: PathBuf,
        /// Output directory (checkpoint, run log, metrics).
        #[arg(long)]
        out: PathBuf,
        /// Dotted-key overrides, e.g. --set moe.experts=12.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Evaluate a checkpoint on a dataset split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Split to score: train, val, or test.
        #[arg(long, default_value = "test")]
        split: String,
        /// Metrics CSV output path.
        #[arg(long)]
        out: PathBuf,
        /// Success threshold on mask IoU.
        #[arg(long, default_value_t = 0.85)]
        tau: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Cap on evaluated samples; 0 = whole split.
        #[arg(long, default_value_t = 0)]
        limit: usize,
    },
    /// Decode one chart raster into a DSL program (printed to stdout).
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Input chart as PNG (64x64 by default config).
        #[arg(long, conflicts_with = "spec")]
        raster: Option<PathBuf>,
        /// Input chart as a spec JSON (rendered first).
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Chart type hint for the complexity metric (bar, line, scatter,
        /// pie, complex); required with --raster, read from --spec otherwise.
        #[arg(long)]
        chart_type: Option<String>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Sweep the routing and adapter grids; emit one CSV row per cell.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Working directory for per-cell artifacts.
        #[arg(long)]
        work: PathBuf,
        /// Which sub-grid: moe, lora, or both.
        #[arg(long, default_value = "both")]
        grid: String,
        /// Parallel workers.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Render a markdown summary from a training output directory.
    Report {
        /// Training output directory.
        #[arg(long)]
        run: PathBuf,
        /// Markdown output path.
        #[arg(long)]
        out: PathBuf,
    },
}

fn chart_type_from_name(name: &str) -> Result<ChartType, Error> {
    ChartType::ALL
        .into_iter()
        .find(|t| t.name() == name)
        .ok_or_else(|| Error::Config(format!("unknown chart type {name:?}")))
}

fn load_config(path: &PathBuf, overrides: &[String]) -> Result<RunConfig, (u8, String)> {
    if !path.exists() {
        return Err((2, format!("config not found: {}", path.display())));
    }
    RunConfig::from_file(path, overrides).map_err(|e| (1, e.to_string()))
}

fn run(cli: Cli) -> Result<(), (u8, String)> {
    let fail = |e: Error| -> (u8, String) {
        let code = if matches!(e, Error::Numerical { .. }) { 3 } else { 1 };
        (code, e.to_string())
    };
    match cli.command {
        Command::GenData { count, seed, out } => {
            if count < 10 {
                return Err((1, format!("count must be >= 10, got {count}")));
            }
            let data = gen_dataset(seed, count, &TypeMix::default_mix()).map_err(fail)?;
            std::fs::create_dir_all(&out).map_err(|e| (1, e.to_string()))?;
            data.write_dir(&out).map_err(fail)?;
            let c = data.counts();
            println!(
                "wrote {} train / {} val / {} test records to {}",
                c.train,
                c.val,
                c.test,
                out.display()
            );
        }
        Command::Train {
            config,
            data,
            out,
            overrides,
        } => {
            let cfg = load_config(&config, &overrides)?;
            let dataset = Dataset::read_dir(&data).map_err(fail)?;
            let outcome = train(&cfg, &dataset, &out).map_err(fail)?;
            let last = outcome.evals.last().expect("train always evaluates");
            println!(
                "{} steps; val success {:.3}; checkpoint {}",
                outcome.steps,
                last.success_rate,
                outcome.checkpoint.display()
            );
        }
        Command::Eval {
            checkpoint,
            data,
            split,
            out,
            tau,
            seed,
            limit,
        } => {
            let (model, _) = load_checkpoint(&checkpoint).map_err(fail)?;
            let dataset = Dataset::read_dir(&data).map_err(fail)?;
            let records = match split.as_str() {
                "train" => &dataset.train,
                "val" => &dataset.val,
                "test" => &dataset.test,
                other => return Err((1, format!("unknown split {other:?}"))),
            };
            let rec = evaluate(&model, records, &split, 0, tau, seed, limit).map_err(fail)?;
            write_metrics_csv(&out, std::slice::from_ref(&rec)).map_err(fail)?;
            println!(
                "success {:.3} | iou {:.3} | parse {:.3} -> {}",
                rec.success_rate,
                rec.mean_iou,
                rec.parse_rate,
                out.display()
            );
        }
        Command::Generate {
            checkpoint,
            raster,
            spec,
            chart_type,
            seed,
        } => {
            let (model, _) = load_checkpoint(&checkpoint).map_err(fail)?;
            let (image, ctype) = match (raster, spec) {
                (Some(path), None) => {
                    let bytes = std::fs::read(&path).map_err(|e| (1, e.to_string()))?;
                    let r = Raster::from_png(&bytes).map_err(|e| (1, e.to_string()))?;
                    let name = chart_type
                        .ok_or((1, "--chart-type is required with --raster".to_string()))?;
                    (r.to_f64(), chart_type_from_name(&name).map_err(fail)?)
                }
                (None, Some(path)) => {
                    let text = std::fs::read_to_string(&path).map_err(|e| (1, e.to_string()))?;
                    let spec: ChartSpec =
                        serde_json::from_str(&text).map_err(|e| (1, e.to_string()))?;
                    let r = chartcode::chartlab::rasterize_spec(&spec)
                        .map_err(|e| (1, e.to_string()))?;
                    (r.to_f64(), spec.chart_type)
                }
                _ => return Err((1, "exactly one of --raster / --spec is required".into())),
            };
            let inf = InferenceModel::from_model(&model).map_err(fail)?;
            let mut rng = Rng::from_seed(seed).child("generate");
            let (program, _) = inf
                .generate(
                    &image,
                    ctype,
                    GenMode::Greedy,
                    model.cfg.max_len - 1,
                    false,
                    &mut rng,
                )
                .map_err(fail)?;
            println!("{}", program.to_text());
        }
        Command::Ablate {
            config,
            data,
            out,
            work,
            grid,
            jobs,
            overrides,
        } => {
            let cfg = load_config(&config, &overrides)?;
            let select = GridSelect::from_str(&grid).map_err(fail)?;
            let dataset = Dataset::read_dir(&data).map_err(fail)?;
            run_ablation(&cfg, &dataset, select, &out, &work, jobs).map_err(fail)?;
            println!("ablation table -> {}", out.display());
        }
        Command::Report { run, out } => {
            let md = render_report(&run).map_err(fail)?;
            std::fs::write(&out, md).map_err(|e| (1, e.to_string()))?;
            println!("report -> {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    // list every config key with its default in the help of config-driven verbs
    let keys: String = RunConfig::default()
        .documented_keys()
        .into_iter()
        .map(|(k, v)| format!("  {k} = {v}\n"))
        .collect();
    let key_help = format!("Config keys (TOML / --set) with defaults:\n{keys}");
    let mut cmd = Cli::command();
    for verb in ["train", "ablate"] {
        cmd = cmd.mut_subcommand(verb, |c| c.after_help(key_help.clone()));
    }
    let cli = match Cli::from_arg_matches(&cmd.get_matches()) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
