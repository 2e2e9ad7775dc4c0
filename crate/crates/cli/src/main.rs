use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lexis::ingest::BatchOptions;
use lexis::pipeline::{self, Format, RunConfig, RunError};

#[derive(Parser)]
#[command(name = "lexis", version, about = "Build and analyse hierarchical DAGs of token sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a corpus and write its normalized form and statistics.
    Ingest {
        corpus: PathBuf,
        #[command(flatten)]
        batching: Batching,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Build one DAG over the whole corpus and report its metrics.
    Build {
        corpus: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Grow a DAG year by year and report per-year metrics.
    Evolve {
        corpus: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// Keep at most this many live targets, retiring the oldest years.
        #[arg(long)]
        steady_state: Option<usize>,
    },
    /// Core and H-score of a saved DAG snapshot.
    Core {
        snapshot: PathBuf,
        #[arg(long, default_value_t = 0.85)]
        tau: f64,
        /// Also write core.json into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Batching {
    #[arg(long, default_value_t = 2)]
    min_target_len: usize,
    /// Inclusive year range, `first:last`.
    #[arg(long, default_value = "2003:2017", value_parser = parse_years)]
    year_range: (i32, i32),
}

impl Batching {
    fn options(&self) -> BatchOptions {
        BatchOptions {
            min_target_len: self.min_target_len,
            years: self.year_range,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value_t = 0.85)]
    tau: f64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Comma-separated subset of csv,json.
    #[arg(long, default_value = "csv,json", value_delimiter = ',')]
    format: Vec<Format>,
    #[command(flatten)]
    batching: Batching,
}

impl RunArgs {
    fn config(&self, steady_state: Option<usize>) -> RunConfig {
        RunConfig {
            tau: self.tau,
            steady_state,
            output_dir: self.out.clone(),
            formats: self.format.iter().copied().collect::<BTreeSet<_>>(),
            batching: self.batching.options(),
        }
    }
}

fn parse_years(s: &str) -> Result<(i32, i32), String> {
    let (a, b) = s.split_once(':').ok_or("expected first:last")?;
    let a: i32 = a.trim().parse().map_err(|_| format!("bad year {a:?}"))?;
    let b: i32 = b.trim().parse().map_err(|_| format!("bad year {b:?}"))?;
    if a > b {
        return Err(format!("empty range {a}:{b}"));
    }
    Ok((a, b))
}

fn init_threads() {
    let Ok(v) = std::env::var("LEXIS_THREADS") else { return };
    match v.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::warn!("cannot size thread pool: {e}");
            }
        }
        _ => log::warn!("ignoring LEXIS_THREADS={v:?}"),
    }
}

fn print_rows(summary: &pipeline::RunSummary) {
    for r in &summary.rows {
        let m = &r.metrics;
        println!(
            "{}\ttargets {}\tcost {}\tnormalized {}\tcore {}/{}\tH {}",
            m.label,
            r.report.targets_added,
            r.report.cost_after_stage2,
            pipeline::format_real(m.normalized_cost),
            m.core_size,
            m.flat_core_size,
            pipeline::format_real(m.h_score),
        );
    }
}

fn run(cli: Cli) -> Result<(), RunError> {
    match cli.command {
        Command::Ingest { corpus, batching, out } => {
            let stats = pipeline::ingest(&corpus, batching.options(), &out)?;
            println!(
                "{} records, {} targets kept, {} sources, total length {}, lengths {}..{}",
                stats.records, stats.targets, stats.sources, stats.total_length, stats.min_length, stats.max_length
            );
            println!(
                "dropped: {} short, {} out of range",
                stats.dropped_short, stats.dropped_out_of_range
            );
        }
        Command::Build { corpus, run } => print_rows(&pipeline::build(&corpus, &run.config(None))?),
        Command::Evolve {
            corpus,
            run,
            steady_state,
        } => print_rows(&pipeline::evolve(&corpus, &run.config(steady_state))?),
        Command::Core { snapshot, tau, out } => {
            let report = pipeline::core_of_snapshot(&snapshot, tau)?;
            print!("{report}");
            if let Some(dir) = out {
                let mut data = serde_json::to_vec_pretty(&report).expect("serializable");
                data.push(b'\n');
                pipeline::write_atomic(&dir.join("core.json"), &data)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // Usage errors are input errors; 2 is reserved for invariant violations.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    init_threads();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
