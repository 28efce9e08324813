use clap::{Args, Parser, Subcommand};
use lottery_cli::config::DEFAULT_FETCH_URL;
use lottery_cli::{CliError, Overrides, RunConfig, SynthOptions};
use std::path::PathBuf;
use std::process::ExitCode;

/// Audit attribution agreement across prediction-equivalent models.
#[derive(Parser)]
#[command(name = "lottery", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full audit and write report.json plus raw CSVs.
    Audit(RunArgs),
    /// Run a synthetic experiment: gap, escape, persistence, density, lemma1, lemma2, stochasticity.
    Synth {
        experiment: String,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Score the instances of a CSV file and write reliability.csv.
    Reliability {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        instances: PathBuf,
    },
    /// Download a dataset into the cache.
    Fetch {
        id: String,
        #[arg(long, default_value = DEFAULT_FETCH_URL)]
        url: String,
    },
    /// Render a saved report as text tables.
    Report { path: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    /// Flat key = value config file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV path, or `fetch:<id>` for a cached remote dataset.
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    label_col: Option<String>,
    /// JSON synthetic DGP spec used instead of --data.
    #[arg(long)]
    synthetic: Option<PathBuf>,
    #[arg(long)]
    synthetic_rows: Option<usize>,
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    train_frac: Option<f64>,
    /// Comma-separated lottery thresholds.
    #[arg(long)]
    tau: Option<String>,
    #[arg(long)]
    kernel_samples: Option<usize>,
    /// Comma-separated roster, e.g. gbt,gbt2,forest,cart,logistic,ridge,mlp.
    #[arg(long)]
    models: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    no_timestamp: bool,
}

impl RunArgs {
    fn resolve(self) -> Result<RunConfig, CliError> {
        let mut layers = Vec::new();
        if let Some(path) = &self.config {
            layers.push(Overrides::from_config_file(path)?);
        }
        layers.push(Overrides {
            data: self.data,
            synthetic: self.synthetic,
            synthetic_rows: self.synthetic_rows,
            label_col: self.label_col,
            models: self.models,
            seeds: self.seeds,
            train_frac: self.train_frac,
            tau: self.tau,
            kernel_samples: self.kernel_samples,
            out: self.out,
            jobs: self.jobs,
            no_timestamp: self.no_timestamp.then_some(true),
            ..Overrides::default()
        });
        RunConfig::resolve(&layers)
    }
}

fn set_jobs(jobs: Option<usize>) {
    if let Some(n) = jobs {
        // Fails only if the pool was already initialized, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Audit(args) => {
            let config = args.resolve()?;
            set_jobs(config.jobs);
            let report = lottery_cli::cmd_audit(&config)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", lottery_cli::render_run(&report));
            println!("wrote {}", config.out.display());
        }
        Command::Synth {
            experiment,
            seeds,
            n,
            out,
            jobs,
        } => {
            set_jobs(jobs);
            let report = lottery_cli::cmd_synth(&experiment, &SynthOptions { seeds, n }, out.as_deref())?;
            print!("{}", lottery_cli::render_synth(&report));
        }
        Command::Reliability { run, instances } => {
            let config = run.resolve()?;
            set_jobs(config.jobs);
            let outcome = lottery_cli::cmd_reliability(&config, &instances)?;
            for (zone, count) in &outcome.zone_counts {
                println!("{zone:<9} {count}");
            }
            println!("wrote {}", config.out.join("reliability.csv").display());
        }
        Command::Fetch { id, url } => {
            println!("{}", lottery_cli::cmd_fetch(&id, &url)?.display());
        }
        Command::Report { path } => print!("{}", lottery_cli::cmd_report(&path)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Help and version requests are not errors; usage errors exit 1.
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
