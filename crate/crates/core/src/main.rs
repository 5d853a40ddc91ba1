use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use tabsynth::generator::{
    cache_store, CandidateGenerator, EndpointConfig, GenerationParams, HttpTransport, MockGenerator, MockPriorConfig,
    RandomRequest, RemoteGenerator,
};
use tabsynth::harness::{
    compare_methods, run_experiment, write_summary_csv, ExperimentConfig, Method, Pipeline, Report, SummaryRow,
};
use tabsynth::schema::{domain_size, load_dataset, ClampPolicy, DEFAULT_DOMAIN_CAP};
use tabsynth::workload::{build_marginal_workload, evaluate, workload_error};
use tabsynth::{Error, Norm, Provenance, SeedTree, TableSchema};

#[derive(Parser)]
#[command(name = "tabsynth", version, about = "Differentially private synthetic tabular data")]
struct Cli {
    /// Root seed; replaces the config's seed list for experiment commands.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config's.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Schema utilities.
    Schema {
        #[command(subcommand)]
        action: SchemaAction,
    },
    /// Generate one batch of records and store it as a cache file.
    Generate {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, conflicts_with = "endpoint_config", required_unless_present = "endpoint_config")]
        mock_config: Option<PathBuf>,
        #[arg(long)]
        endpoint_config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every method in the config.
    Run,
    /// Run the config's Private Evolution methods.
    RunPe,
    /// Run the config's one-shot public-data methods.
    RunOneshot {
        #[arg(long, value_parser = parse_pipeline)]
        pipeline: Option<Pipeline>,
    },
    /// Run the config's baselines.
    Baseline {
        /// Baseline id, e.g. dp-workload or independent.
        #[arg(long)]
        kind: Option<String>,
    },
    /// Workload error of a synthetic CSV against the private CSV.
    Evaluate {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        private: PathBuf,
        #[arg(long)]
        synthetic: PathBuf,
        /// Marginal order of the workload.
        #[arg(long, default_value_t = 2)]
        k: usize,
    },
    /// Merge reports (files or run directories) into a summary table.
    Compare {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum SchemaAction {
    Validate { path: PathBuf },
}

fn parse_pipeline(s: &str) -> Result<Pipeline, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn load_config(cli: &Cli) -> tabsynth::Result<ExperimentConfig> {
    let path = cli.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        config.seeds = vec![seed];
    }
    if let Some(dir) = &cli.out_dir {
        config.set_output_dir(dir);
    }
    Ok(config)
}

fn print_summary(rows: &[SummaryRow]) -> tabsynth::Result<()> {
    write_summary_csv(rows, std::io::stdout().lock()).map_err(|e| Error::Config(format!("stdout: {e}")))
}

fn experiment(cli: &Cli, keep: impl Fn(&Method) -> bool) -> tabsynth::Result<()> {
    let mut config = load_config(cli)?;
    config.retain_methods(|m| keep(&m.method))?;
    let (report, artifacts) = run_experiment(&config)?;
    for r in report.rows.iter().filter(|r| r.error.is_some()) {
        eprintln!("{} eps={} seed={}: {}", r.method, r.epsilon, r.seed, r.error.as_deref().unwrap_or_default());
    }
    print_summary(&tabsynth::harness::summarize(&report.rows))?;
    eprintln!("wrote {}", artifacts.report_csv.display());
    Ok(())
}

fn run(cli: &Cli) -> tabsynth::Result<()> {
    match &cli.command {
        Command::Schema { action: SchemaAction::Validate { path } } => {
            let schema = TableSchema::load(path)?;
            let size = domain_size(&schema, DEFAULT_DOMAIN_CAP)?;
            for c in &schema.columns {
                println!("{}\t{}\t{} bins", c.name, if c.is_categorical() { "categorical" } else { "numerical" }, c.size());
            }
            println!("domain size {}", size.total);
            Ok(())
        }
        Command::Generate { schema, n, mock_config, endpoint_config, out } => {
            let schema = Arc::new(TableSchema::load(schema)?);
            let seed = cli.seed.unwrap_or(0);
            let mut rng = SeedTree::new(seed).stream("generate");
            let request = RandomRequest::new(schema.clone(), *n);
            let batch = match (mock_config, endpoint_config) {
                (Some(p), _) => MockGenerator::new(schema, &MockPriorConfig::load(p)?)?.random_api(&request, &mut rng)?,
                (None, Some(p)) => {
                    let cfg = EndpointConfig::load(p)?;
                    let transport = HttpTransport::from_config(&cfg)?;
                    RemoteGenerator::new(cfg, transport, schema)?.random_api(&request, &mut rng)?
                }
                (None, None) => unreachable!("clap requires one generator config"),
            };
            debug_assert_eq!(batch.params, GenerationParams::default());
            let timestamp = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            cache_store(&batch, out, timestamp)?;
            eprintln!(
                "stored {} records ({} rejected{}) in {}",
                batch.len(),
                batch.rejected_count,
                if batch.partial { ", partial" } else { "" },
                out.display()
            );
            Ok(())
        }
        Command::Run => experiment(cli, |_| true),
        Command::RunPe => experiment(cli, |m| matches!(m, Method::Pe { .. })),
        Command::RunOneshot { pipeline } => {
            experiment(cli, |m| matches!(m, Method::Oneshot { pipeline: p, .. } if pipeline.is_none_or(|want| *p == want)))
        }
        Command::Baseline { kind } => experiment(cli, |m| {
            matches!(m, Method::Baseline { baseline, .. } if kind.as_deref().is_none_or(|k| baseline.id() == k))
        }),
        Command::Evaluate { schema, private, synthetic, k } => {
            let schema = Arc::new(TableSchema::load(schema)?);
            let workload = build_marginal_workload(schema.clone(), *k, None)?;
            let s_priv = load_dataset(private, schema.clone(), ClampPolicy::Reject, Provenance::Private)?;
            let synth = load_dataset(synthetic, schema, ClampPolicy::Clamp, Provenance::Synthetic)?;
            let (a, b) = (evaluate(&workload, &s_priv)?, evaluate(&workload, &synth)?);
            println!("werror_l1,werror_linf");
            println!("{},{}", workload_error(&a, &b, Norm::L1)?, workload_error(&a, &b, Norm::Linf)?);
            Ok(())
        }
        Command::Compare { reports, out } => {
            let loaded = reports.iter().map(Report::load).collect::<tabsynth::Result<Vec<_>>>()?;
            let rows = compare_methods(&loaded)?;
            match out {
                Some(path) => {
                    let file = std::fs::File::create(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                    write_summary_csv(&rows, file).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
                }
                None => print_summary(&rows),
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() {
                2
            } else if e.is_budget_error() {
                3
            } else {
                1
            })
        }
    }
}
