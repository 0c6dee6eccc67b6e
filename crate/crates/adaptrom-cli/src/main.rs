use std::path::PathBuf;
use std::process::ExitCode;

use adaptrom::adaptive::Strategy;
use adaptrom_cli::bench::bench_compare;
use adaptrom_cli::config::ExperimentConfig;
use adaptrom_cli::pipeline::{Pipeline, ResultRecord};
use adaptrom_cli::{field, romx};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "adaptrom",
    version,
    about = "Adaptive-basis reduced-order modeling harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate snapshots and persist them as a ROMX matrix.
    Snapshot {
        #[arg(long)]
        config: PathBuf,
        /// Sanity check: must match the problem kind in the config.
        #[arg(long)]
        problem: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the POD basis of a snapshot matrix.
    Pod {
        #[arg(long)]
        config: PathBuf,
        /// Snapshot ROMX file; generated from the config when omitted.
        #[arg(long)]
        snapshots: Option<PathBuf>,
        /// Override the configured mode count.
        #[arg(long)]
        modes: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Optional output for the singular values (one column).
        #[arg(long)]
        sv: Option<PathBuf>,
    },
    /// Run the adaptive pipeline for one strategy and write a result record.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the configured strategy.
        #[arg(long)]
        strategy: Option<String>,
        /// Override the configured number of selection rows.
        #[arg(long)]
        nsel: Option<usize>,
        /// Embed full difference fields in the record.
        #[arg(long)]
        include_fields: bool,
        /// Output path for the result JSON (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare all configured strategies against the full model.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Prefix for the `<prefix>.csv` and `<prefix>.json` outputs.
        #[arg(long)]
        out_prefix: PathBuf,
        /// Concurrent strategy runs (defaults to ADAPTROM_THREADS, then 1).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Export a difference field from a result record as a CSV grid.
    ExportField {
        #[arg(long)]
        result: PathBuf,
        /// Evaluation index within the record.
        #[arg(long, default_value_t = 0)]
        eval: usize,
        /// Field name (e.g. u, v, T); defaults to the first field.
        #[arg(long)]
        field: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(message)) => {
            eprintln!("{}", machine_error(&message));
            ExitCode::from(2)
        }
        Err(Failure::Runtime(message)) => {
            eprintln!("{}", machine_error(&message));
            ExitCode::FAILURE
        }
    }
}

enum Failure {
    Usage(String),
    Runtime(String),
}

fn machine_error(message: &str) -> String {
    serde_json::json!({ "error": message }).to_string()
}

impl<E: std::error::Error> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Snapshot {
            config,
            problem,
            out,
        } => {
            let config = ExperimentConfig::from_path(&config)?;
            if let Some(kind) = problem {
                if kind != config.problem.kind() {
                    return Err(Failure::Usage(format!(
                        "--problem {kind} does not match config problem {}",
                        config.problem.kind()
                    )));
                }
            }
            let snapshots = Pipeline::new(&config).snapshots()?;
            romx::write_matrix(&out, snapshots.data())?;
            eprintln!(
                "wrote {} snapshots of dimension {} to {}",
                snapshots.len(),
                snapshots.dim(),
                out.display()
            );
            Ok(())
        }
        Command::Pod {
            config,
            snapshots,
            modes,
            out,
            sv,
        } => {
            let mut config = ExperimentConfig::from_path(&config)?;
            if let Some(m) = modes {
                config.pod.modes = m;
            }
            let pipeline = Pipeline::new(&config);
            let snaps = match snapshots {
                Some(path) => {
                    let data = romx::read_matrix(&path)?;
                    let params: Vec<f64> = (0..data.ncols()).map(|i| i as f64).collect();
                    adaptrom::pod::SnapshotMatrix::new(data, params)
                        .map_err(|e| Failure::Runtime(e.to_string()))?
                }
                None => pipeline.snapshots()?,
            };
            let (basis, trial, _pool) = pipeline.pod(&snaps)?;
            romx::write_matrix(&out, &trial)?;
            if let Some(sv_path) = sv {
                let values = basis.singular_values();
                let column = nalgebra::DMatrix::from_fn(values.len(), 1, |i, _| values[i]);
                romx::write_matrix(&sv_path, &column)?;
            }
            eprintln!(
                "wrote {}x{} trial basis to {} ({} vectors available)",
                trial.nrows(),
                trial.ncols(),
                out.display(),
                basis.len()
            );
            Ok(())
        }
        Command::Run {
            config,
            strategy,
            nsel,
            include_fields,
            out,
        } => {
            let mut config = ExperimentConfig::from_path(&config)?;
            if let Some(s) = strategy {
                config.strategy = s.parse::<Strategy>().map_err(Failure::Usage)?;
            }
            if let Some(n) = nsel {
                config.adaptive.n_sel = n;
            }
            if include_fields {
                config.include_fields = true;
            }
            let pipeline = Pipeline::new(&config);
            let prepared = pipeline.prepare()?;
            let record = pipeline.run_strategy(config.strategy, &prepared);
            write_record(&record, out.as_deref())?;
            Ok(())
        }
        Command::Bench {
            config,
            out_prefix,
            threads,
        } => {
            let config = ExperimentConfig::from_path(&config)?;
            let threads = threads
                .or_else(|| {
                    std::env::var("ADAPTROM_THREADS")
                        .ok()
                        .and_then(|v| v.parse().ok())
                })
                .unwrap_or(1);
            let report = bench_compare(&config, threads)?;
            let csv_path = out_prefix.with_extension("csv");
            let json_path = out_prefix.with_extension("json");
            std::fs::write(&csv_path, report.to_csv())
                .map_err(|e| Failure::Runtime(e.to_string()))?;
            let json = serde_json::to_string_pretty(&report)
                .map_err(|e| Failure::Runtime(e.to_string()))?;
            std::fs::write(&json_path, json).map_err(|e| Failure::Runtime(e.to_string()))?;
            eprintln!("wrote {} and {}", csv_path.display(), json_path.display());
            Ok(())
        }
        Command::ExportField {
            result,
            eval,
            field: field_name,
            out,
        } => {
            let text =
                std::fs::read_to_string(&result).map_err(|e| Failure::Runtime(e.to_string()))?;
            let record: ResultRecord =
                serde_json::from_str(&text).map_err(|e| Failure::Runtime(e.to_string()))?;
            let evaluation = record
                .evaluations
                .get(eval)
                .ok_or_else(|| Failure::Usage(format!("no evaluation at index {eval}")))?;
            let outcome = evaluation.outcome.as_ref().ok_or_else(|| {
                Failure::Runtime("evaluation recorded an error, no fields".into())
            })?;
            if outcome.difference_fields.is_empty() {
                return Err(Failure::Runtime(
                    "record holds no difference fields; re-run with --include-fields".into(),
                ));
            }
            let grid: &field::FieldGrid = match &field_name {
                Some(name) => outcome
                    .difference_fields
                    .iter()
                    .find(|f| f.name.starts_with(name.as_str()))
                    .ok_or_else(|| Failure::Usage(format!("no field named {name}")))?,
                None => &outcome.difference_fields[0],
            };
            grid.write_csv(&out)?;
            eprintln!(
                "wrote {}x{} field {} to {}",
                grid.nx,
                grid.ny,
                grid.name,
                out.display()
            );
            Ok(())
        }
    }
}

fn write_record(record: &ResultRecord, out: Option<&std::path::Path>) -> Result<(), Failure> {
    let json = serde_json::to_string_pretty(record).map_err(|e| Failure::Runtime(e.to_string()))?;
    match out {
        Some(path) => std::fs::write(path, json).map_err(|e| Failure::Runtime(e.to_string()))?,
        None => println!("{json}"),
    }
    Ok(())
}
