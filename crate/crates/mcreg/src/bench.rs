//! Replicated benchmark protocol: simulate, tune, fit, and score both
//! estimators over seeded replications, then aggregate means and standard
//! errors per metric.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lasso::SolverConfig;
use crate::mcr::{symmetrize_pattern, SymmetrizeRule};
use crate::metrics::{estimation_errors, selection_metrics, selection_metrics_omega};
use crate::simgen::{derive_rep_seed, gen_dataset, ModelSpec};
use crate::tuning::{grid_search, tune_initial, TuningGrid};
use crate::{baselines, tuning};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    Amcr,
    Sep,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Amcr => "amcr",
            Method::Sep => "sep",
        }
    }

    pub fn parse_list(s: &str) -> Result<Vec<Method>> {
        let mut out = Vec::new();
        for part in s.split(',') {
            match part.trim() {
                "amcr" => out.push(Method::Amcr),
                "sep" => out.push(Method::Sep),
                other => {
                    return Err(Error::Parameter(format!(
                        "unknown method '{other}' (expected amcr or sep)"
                    )))
                }
            }
        }
        if out.is_empty() {
            return Err(Error::Parameter("no methods given".into()));
        }
        Ok(out)
    }
}

/// Names of the per-replication metrics, in reporting order.
pub const METRIC_NAMES: [&str; 11] = [
    "b_frob",
    "b_one_norm",
    "b_inf_norm",
    "b_dist",
    "b_spe",
    "b_sen",
    "b_mcc",
    "omega_dist",
    "omega_spe",
    "omega_sen",
    "omega_mcc",
];

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub spec: ModelSpec,
    pub reps: usize,
    pub methods: Vec<Method>,
    pub rule: SymmetrizeRule,
    pub solver: SolverConfig,
    /// One-dimensional penalty grid for the initial stage and the baseline.
    pub lambdas: Vec<f64>,
    /// Two-dimensional grid for the conditional-regression stage.
    pub grid: TuningGrid,
}

impl BenchConfig {
    pub fn standard(spec: ModelSpec, reps: usize, methods: Vec<Method>, rule: SymmetrizeRule) -> Self {
        BenchConfig {
            spec,
            reps,
            methods,
            rule,
            solver: SolverConfig::default(),
            lambdas: tuning::grid_points(),
            grid: tuning::default_grid(),
        }
    }
}

/// One replication of one method: metric values keyed by `METRIC_NAMES`,
/// plus the tuned penalties and the worst stationarity violation.
#[derive(Debug, Clone, Serialize)]
pub struct RepResult {
    pub rep: usize,
    pub seed: u64,
    pub method: &'static str,
    pub metrics: BTreeMap<String, f64>,
    pub lambda1: f64,
    pub lambda2: f64,
    pub max_kkt_violation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchFailure {
    pub rep: usize,
    pub method: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Sample standard deviation over replications divided by sqrt(reps).
    pub stderr: f64,
    pub reps: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchOutput {
    pub rows: Vec<RepResult>,
    pub failures: Vec<BenchFailure>,
    /// method -> metric -> summary.
    pub summary: BTreeMap<String, BTreeMap<String, MetricSummary>>,
    /// Worst stationarity violation over every converged fit in the run.
    pub max_kkt_violation: f64,
    /// True when some replication failed and the summary covers a subset.
    pub partial: bool,
}

fn run_one(cfg: &BenchConfig, rep: usize, method: Method) -> Result<RepResult> {
    let seed = derive_rep_seed(cfg.spec.seed, rep as u64);
    let spec = ModelSpec { seed, ..cfg.spec };
    let (ds, truth) = gen_dataset(&spec)?;

    let (b_hat, pattern, lambda1, lambda2, max_kkt) = match method {
        Method::Amcr => {
            let init = tune_initial(&ds.x, &ds.y, &cfg.lambdas, &cfg.solver)?;
            let tuned = grid_search(&ds.x, &ds.y, &cfg.grid, &init, &cfg.solver)?;
            let pattern = symmetrize_pattern(&tuned.best_fit.gamma_hat, cfg.rule);
            (
                tuned.best_fit.b_hat,
                pattern,
                tuned.best_lambda1,
                tuned.best_lambda2,
                tuned.max_kkt_violation,
            )
        }
        Method::Sep => {
            let fit = baselines::tune_sep(&ds.x, &ds.y, &cfg.lambdas, &cfg.solver, cfg.rule)?;
            let (l1, l2) = fit.lambdas_used;
            (fit.b_hat, fit.pattern, l1, l2, fit.max_kkt_violation)
        }
    };

    let est = estimation_errors(&b_hat, &truth.b_star)?;
    let b_sel = selection_metrics(
        &b_hat.support(),
        &truth.b_star.support(),
        spec.p * spec.q,
    )?;
    let omega_sel = selection_metrics_omega(&pattern, &truth.omega_star)?;

    let mut metrics = BTreeMap::new();
    metrics.insert("b_frob".into(), est.frob);
    metrics.insert("b_one_norm".into(), est.one_norm);
    metrics.insert("b_inf_norm".into(), est.inf_norm);
    metrics.insert("b_dist".into(), b_sel.dist);
    metrics.insert("b_spe".into(), b_sel.spe);
    metrics.insert("b_sen".into(), b_sel.sen);
    metrics.insert("b_mcc".into(), b_sel.mcc);
    metrics.insert("omega_dist".into(), omega_sel.dist);
    metrics.insert("omega_spe".into(), omega_sel.spe);
    metrics.insert("omega_sen".into(), omega_sel.sen);
    metrics.insert("omega_mcc".into(), omega_sel.mcc);

    Ok(RepResult {
        rep,
        seed,
        method: method.as_str(),
        metrics,
        lambda1,
        lambda2,
        max_kkt_violation: max_kkt,
    })
}

/// Runs the full protocol. Individual replication failures are recorded and
/// the run continues; the summary flags partial data.
pub fn run_bench(cfg: &BenchConfig) -> BenchOutput {
    let jobs: Vec<(usize, Method)> = (0..cfg.reps)
        .flat_map(|rep| cfg.methods.iter().map(move |m| (rep, *m)))
        .collect();
    let results: Vec<std::result::Result<RepResult, BenchFailure>> = jobs
        .par_iter()
        .map(|&(rep, method)| {
            run_one(cfg, rep, method).map_err(|e| BenchFailure {
                rep,
                method: method.as_str(),
                message: e.to_string(),
            })
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for res in results {
        match res {
            Ok(row) => rows.push(row),
            Err(f) => failures.push(f),
        }
    }

    let mut summary: BTreeMap<String, BTreeMap<String, MetricSummary>> = BTreeMap::new();
    for method in &cfg.methods {
        let name = method.as_str();
        let method_rows: Vec<&RepResult> = rows.iter().filter(|r| r.method == name).collect();
        let mut per_metric = BTreeMap::new();
        for metric in METRIC_NAMES {
            let values: Vec<f64> = method_rows
                .iter()
                .filter_map(|r| r.metrics.get(metric).copied())
                .collect();
            if values.is_empty() {
                continue;
            }
            per_metric.insert(metric.to_string(), summarize(&values));
        }
        summary.insert(name.to_string(), per_metric);
    }

    let max_kkt_violation = rows
        .iter()
        .map(|r| r.max_kkt_violation)
        .fold(0.0, f64::max);
    let partial = !failures.is_empty();
    BenchOutput {
        rows,
        failures,
        summary,
        max_kkt_violation,
        partial,
    }
}

fn summarize(values: &[f64]) -> MetricSummary {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let stderr = if n > 1 {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    MetricSummary {
        mean,
        stderr,
        reps: n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_list_parsing() {
        assert_eq!(
            Method::parse_list("amcr,sep").unwrap(),
            vec![Method::Amcr, Method::Sep]
        );
        assert!(Method::parse_list("amcr,alt").is_err());
        assert!(Method::parse_list("").is_err());
    }

    #[test]
    fn summary_matches_row_averages() {
        let spec = ModelSpec {
            p: 3,
            q: 3,
            n: 60,
            b_nonzero_expect: 1.5,
            omega_nonzero_expect: 1.5,
            seed: 5,
        };
        let cfg = BenchConfig::standard(
            spec,
            2,
            vec![Method::Amcr, Method::Sep],
            SymmetrizeRule::Or,
        );
        let out = run_bench(&cfg);
        assert!(out.failures.is_empty(), "{:?}", out.failures);
        assert!(!out.partial);
        assert_eq!(out.rows.len(), 4);
        for method in ["amcr", "sep"] {
            let rows: Vec<&RepResult> =
                out.rows.iter().filter(|r| r.method == method).collect();
            assert_eq!(rows.len(), 2);
            let mean_frob: f64 =
                rows.iter().map(|r| r.metrics["b_frob"]).sum::<f64>() / 2.0;
            let summary = &out.summary[method]["b_frob"];
            assert!((summary.mean - mean_frob).abs() < 1e-12);
            // stderr = sample stdev / sqrt(R), recomputed from the raw rows.
            let var: f64 = rows
                .iter()
                .map(|r| (r.metrics["b_frob"] - mean_frob).powi(2))
                .sum::<f64>();
            let stderr = (var / 1.0 / 2.0).sqrt();
            assert!((summary.stderr - stderr).abs() < 1e-12);
        }
    }

    #[test]
    fn reruns_are_bit_identical() {
        let spec = ModelSpec {
            p: 2,
            q: 2,
            n: 40,
            b_nonzero_expect: 1.0,
            omega_nonzero_expect: 1.0,
            seed: 11,
        };
        let cfg = BenchConfig::standard(spec, 2, vec![Method::Amcr], SymmetrizeRule::Or);
        let a = run_bench(&cfg);
        let b = run_bench(&cfg);
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert_eq!(ra.metrics, rb.metrics);
            assert_eq!(ra.seed, rb.seed);
        }
    }
}
