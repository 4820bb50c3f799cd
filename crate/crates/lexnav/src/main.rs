//! Command-line front end: train, transfer, evaluate, inspect similarities,
//! render maps, and plot learning curves.
//!
//! Exit codes: 0 success, 1 validation error, 2 runtime error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lexnav::embedding::similarity_report;
use lexnav::gridworld::render_map_summary;
use lexnav::harness::{
    aggregate_success, emit_plot, evaluate, load_eval_policy, load_map, load_store, parse_config,
    parse_csv, run_training, run_transfer, write_output, HarnessError, PlotSeries, RunConfig,
};

#[derive(Parser)]
#[command(
    name = "lexnav",
    version,
    about = "Goal-conditional gridworld navigation workbench"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent per a config file and write the metrics CSV.
    Train(TrainArgs),
    /// Train on a new goal with a frozen prior policy mixed into exploration.
    Transfer(TransferArgs),
    /// Greedy evaluation of a saved policy checkpoint.
    Eval(EvalArgs),
    /// Rank prior goals by cosine similarity to a target word.
    Similarity(SimilarityArgs),
    /// Validate a map file and print its objects and success regions.
    RenderMap(RenderMapArgs),
    /// Plot success-rate curves from metrics CSVs into an SVG.
    Plot(PlotArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Run config file.
    #[arg(long)]
    config: PathBuf,
    /// Seed override; distinct seeds give independent runs.
    #[arg(long)]
    seed: Option<u64>,
    /// Metrics CSV destination.
    #[arg(long)]
    out: PathBuf,
    /// Save the trained policy checkpoint here.
    #[arg(long)]
    save_policy: Option<PathBuf>,
}

#[derive(Args)]
struct TransferArgs {
    #[arg(long)]
    config: PathBuf,
    /// Prior goal word, or `auto` to pick by embedding similarity.
    #[arg(long)]
    prior: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    save_policy: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Policy checkpoint (`lexnav-tab` or `lexnav-net`).
    #[arg(long)]
    policy: PathBuf,
    /// Comma-separated goal words.
    #[arg(long, value_delimiter = ',')]
    goals: Vec<String>,
    #[arg(long, default_value = "data/apartment.map")]
    map: PathBuf,
    /// Embedding file, needed for embedding-encoded net checkpoints.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SimilarityArgs {
    #[arg(long)]
    target: String,
    #[arg(long, value_delimiter = ',')]
    priors: Vec<String>,
    #[arg(long, default_value = "data/objects_glove50.txt")]
    embeddings: PathBuf,
    /// Emit `word,score` CSV instead of aligned text.
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct RenderMapArgs {
    #[arg(long)]
    map: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    /// Metrics CSVs aggregated into one series (mean with min/max band).
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    inputs: Vec<PathBuf>,
    /// Extra named series: `label=a.csv,b.csv`. Repeatable.
    #[arg(long)]
    series: Vec<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "success rate")]
    title: String,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // clap prints help/version through the error path with status 0
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Train(args) => {
            let mut config = load_run_config(&args.config, args.seed, args.save_policy)?;
            // a training run never mixes in a prior
            config.transfer = None;
            let run = run_training(&config)?;
            write_output(&args.out, &run.metrics.to_csv())?;
            print_summary("train", &config, &run.metrics);
            Ok(())
        }
        Command::Transfer(args) => {
            let mut config = load_run_config(&args.config, args.seed, args.save_policy)?;
            if let Some(word) = &args.prior {
                let transfer = config
                    .transfer
                    .as_mut()
                    .ok_or_else(|| HarnessError::Config("config has no transfer block".into()))?;
                transfer.prior = (word != "auto").then(|| word.clone());
            }
            let run = run_transfer(&config)?;
            write_output(&args.out, &run.metrics.to_csv())?;
            if let Some(prior) = &run.prior_goal {
                println!("prior goal: {prior}");
            }
            print_summary("transfer", &config, &run.metrics);
            Ok(())
        }
        Command::Eval(args) => {
            let map = load_map(&args.map)?;
            let store = args.embeddings.as_deref().map(load_store).transpose()?;
            let policy = load_eval_policy(&args.policy, &map, store.as_ref())?;
            let summary = evaluate(policy.as_ref(), &map, &args.goals, args.episodes, args.seed)?;
            println!(
                "episodes {}  success_rate {:.4}  mean_ep_len {:.2}",
                args.episodes, summary.success_rate, summary.mean_length
            );
            Ok(())
        }
        Command::Similarity(args) => {
            let store = load_store(&args.embeddings)?;
            let report = similarity_report(&store, &args.target, &args.priors)?;
            if args.csv {
                println!("word,score");
                for (word, score) in &report.rankings {
                    println!("{word},{score:.6}");
                }
            } else {
                println!("similarity to {:?}:", report.target);
                for (word, score) in &report.rankings {
                    println!("  {word:<12} {score:+.6}");
                }
            }
            Ok(())
        }
        Command::RenderMap(args) => {
            let map = load_map(&args.map)?;
            print!("{}", render_map_summary(&map));
            Ok(())
        }
        Command::Plot(args) => {
            let mut series = Vec::new();
            if !args.inputs.is_empty() {
                series.push(series_from_csvs("runs", &args.inputs)?);
            }
            for entry in &args.series {
                let (label, list) = entry.split_once('=').ok_or_else(|| {
                    HarnessError::Config(format!("--series expects label=csv,..., got {entry:?}"))
                })?;
                let paths: Vec<PathBuf> = list.split(',').map(PathBuf::from).collect();
                series.push(series_from_csvs(label, &paths)?);
            }
            let svg = emit_plot(&series, &args.title)?;
            write_output(&args.out, &svg)?;
            Ok(())
        }
    }
}

fn load_run_config(
    path: &PathBuf,
    seed: Option<u64>,
    save_policy: Option<PathBuf>,
) -> Result<RunConfig, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Input {
        path: path.clone(),
        source,
    })?;
    let mut config = parse_config(&text, path.parent())?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if save_policy.is_some() {
        config.out_policy = save_policy;
    }
    Ok(config)
}

fn series_from_csvs(label: &str, paths: &[PathBuf]) -> Result<PlotSeries, HarnessError> {
    let mut curves = Vec::new();
    for path in paths {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Input {
            path: path.clone(),
            source,
        })?;
        curves.push(parse_csv(&text)?);
    }
    Ok(PlotSeries {
        label: label.to_string(),
        points: aggregate_success(&curves)?,
    })
}

fn print_summary(kind: &str, config: &RunConfig, metrics: &lexnav::harness::RunMetrics) {
    match metrics.steps_to_criterion {
        Some(steps) => println!(
            "{kind} seed {} reached the {:.2} criterion at env step {steps} ({} episodes)",
            config.seed,
            config.criterion_rate,
            metrics.episodes.len()
        ),
        None => println!(
            "{kind} seed {} exhausted the budget of {} env steps ({} episodes)",
            config.seed,
            config.max_env_steps,
            metrics.episodes.len()
        ),
    }
}
