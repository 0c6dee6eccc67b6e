//! Strategy benchmarking: one full-model baseline row plus one row per
//! (strategy, evaluation point), with times normalized against the full
//! model. Strategy runs may execute concurrently; the thread cap comes from
//! the caller (the CLI reads `ADAPTROM_THREADS`).

use std::fmt::Write as _;

use adaptrom::adaptive::Strategy;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::pipeline::{HarnessError, Pipeline, Prepared, ResultRecord};

/// One comparison row. For the `full` baseline rows the total time is the
/// full-order solve itself; for strategy rows it is the online reduced cost
/// (reduced solves plus enrichment).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRow {
    pub strategy: String,
    pub parameter: f64,
    pub total_ns: u64,
    pub rom_solve_ns: u64,
    pub enrich_ns: u64,
    pub final_eps: f64,
    pub adaptations: usize,
    pub enrich_solve_dim: usize,
    /// `total_ns` divided by the full-model row at the same parameter.
    pub normalized_time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub problem: String,
    pub seed: u64,
    pub rows: Vec<BenchRow>,
    /// The per-strategy result records the rows were derived from.
    pub results: Vec<ResultRecord>,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "strategy,parameter,total_ns,rom_solve_ns,enrich_ns,final_eps,adaptations,enrich_solve_dim,normalized_time,error\n",
        );
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                row.strategy,
                row.parameter,
                row.total_ns,
                row.rom_solve_ns,
                row.enrich_ns,
                row.final_eps,
                row.adaptations,
                row.enrich_solve_dim,
                row.normalized_time,
                row.error.as_deref().unwrap_or("")
            );
        }
        out
    }
}

/// Runs every configured strategy against the shared pipeline prefix and
/// tabulates the comparison. `threads` caps how many strategies run
/// concurrently (1 = sequential, for undisturbed timing).
pub fn bench_compare(
    config: &ExperimentConfig,
    threads: usize,
) -> Result<BenchReport, HarnessError> {
    let strategies: Vec<Strategy> = if config.strategies.is_empty() {
        vec![config.strategy]
    } else {
        config.strategies.clone()
    };

    let pipeline = Pipeline::new(config);
    let prepared = pipeline.prepare()?;
    let results = run_strategies(&pipeline, &prepared, &strategies, threads.max(1));

    let mut rows = Vec::new();
    for baseline in &prepared.baselines {
        rows.push(BenchRow {
            strategy: "full".to_string(),
            parameter: baseline.parameter,
            total_ns: baseline.solve_ns,
            rom_solve_ns: 0,
            enrich_ns: 0,
            // the full model solves to the Newton tolerance by construction
            final_eps: config.fom_tol,
            adaptations: 0,
            enrich_solve_dim: 0,
            normalized_time: 1.0,
            error: None,
        });
    }
    for record in &results {
        for evaluation in &record.evaluations {
            let full_ns = prepared
                .baselines
                .iter()
                .find(|b| b.parameter == evaluation.parameter)
                .map(|b| b.solve_ns)
                .unwrap_or(0);
            match (&evaluation.outcome, &evaluation.error) {
                (Some(out), _) => {
                    let total = out.timings.rom_solve_ns + out.timings.enrich_ns;
                    rows.push(BenchRow {
                        strategy: record.strategy.clone(),
                        parameter: evaluation.parameter,
                        total_ns: total,
                        rom_solve_ns: out.timings.rom_solve_ns,
                        enrich_ns: out.timings.enrich_ns,
                        final_eps: out.final_eps,
                        adaptations: out.adaptation_count,
                        enrich_solve_dim: out
                            .trace
                            .iter()
                            .map(|r| r.enrich_solve_dim)
                            .max()
                            .unwrap_or(0),
                        normalized_time: if full_ns > 0 {
                            total as f64 / full_ns as f64
                        } else {
                            f64::NAN
                        },
                        error: None,
                    });
                }
                (None, err) => {
                    // failures become rows, not aborts
                    rows.push(BenchRow {
                        strategy: record.strategy.clone(),
                        parameter: evaluation.parameter,
                        total_ns: 0,
                        rom_solve_ns: 0,
                        enrich_ns: 0,
                        final_eps: f64::NAN,
                        adaptations: 0,
                        enrich_solve_dim: 0,
                        normalized_time: f64::NAN,
                        error: err.clone(),
                    });
                }
            }
        }
    }

    Ok(BenchReport {
        schema_version: crate::pipeline::RESULT_SCHEMA_VERSION,
        problem: config.problem.kind().to_string(),
        seed: config.seed,
        rows,
        results,
    })
}

fn run_strategies(
    pipeline: &Pipeline<'_>,
    prepared: &Prepared,
    strategies: &[Strategy],
    threads: usize,
) -> Vec<ResultRecord> {
    if threads <= 1 || strategies.len() <= 1 {
        return strategies
            .iter()
            .map(|&s| pipeline.run_strategy(s, prepared))
            .collect();
    }
    let mut results: Vec<Option<ResultRecord>> = strategies.iter().map(|_| None).collect();
    for wave in strategies
        .iter()
        .copied()
        .enumerate()
        .collect::<Vec<_>>()
        .chunks(threads)
    {
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for &(index, strategy) in wave {
                handles.push((
                    index,
                    scope.spawn(move || pipeline.run_strategy(strategy, prepared)),
                ));
            }
            for (index, handle) in handles {
                results[index] = Some(handle.join().expect("strategy run panicked"));
            }
        });
    }
    results
        .into_iter()
        .map(|r| r.expect("all runs completed"))
        .collect()
}
