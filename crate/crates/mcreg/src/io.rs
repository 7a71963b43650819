//! File formats: headerless CSV matrices (shortest round-trip float
//! formatting), signed-edge pattern JSON, DOT graph export, and the JSON
//! report/manifest structures written next to every command's outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bench::{BenchFailure, BenchOutput, MetricSummary, RepResult};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::mcr::PrecisionPattern;

/// Writes a matrix as comma-separated rows, no header. Rust's float
/// formatting emits the shortest string that parses back bit-exactly.
pub fn write_matrix_csv(path: &Path, m: &DenseMatrix) -> Result<()> {
    let mut out = String::new();
    for i in 0..m.rows() {
        let row = m.row(i);
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a headerless numeric CSV; reports ragged rows and non-numeric
/// cells with one-based row/column positions.
pub fn read_matrix_csv(path: &Path) -> Result<DenseMatrix> {
    let text = fs::read_to_string(path)?;
    let path_str = path.display().to_string();
    let mut data = Vec::new();
    let mut cols = 0usize;
    let mut rows = 0usize;
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if rows == 0 {
            cols = cells.len();
        } else if cells.len() != cols {
            return Err(Error::Parse {
                path: path_str,
                row: i + 1,
                col: cells.len().min(cols) + 1,
                message: format!("expected {cols} columns, found {}", cells.len()),
            });
        }
        for (j, cell) in cells.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                path: path_str.clone(),
                row: i + 1,
                col: j + 1,
                message: format!("'{cell}' is not a number"),
            })?;
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Format {
            path: path_str,
            message: "file contains no rows".into(),
        });
    }
    DenseMatrix::new(rows, cols, data)
}

/// One line per response label; used to name graph nodes.
pub fn read_labels(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path)?;
    Ok(text.lines().map(|l| l.trim().to_string()).collect())
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PatternEdge {
    pub i: usize,
    pub j: usize,
    pub sign: i8,
}

/// On-disk form of a precision pattern: response count plus the undirected
/// signed edge list (i < j).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PatternFile {
    pub q: usize,
    pub edges: Vec<PatternEdge>,
}

impl PatternFile {
    pub fn from_pattern(p: &PrecisionPattern) -> Self {
        PatternFile {
            q: p.q(),
            edges: p
                .edges()
                .into_iter()
                .map(|(i, j, sign)| PatternEdge { i, j, sign })
                .collect(),
        }
    }

    pub fn to_pattern(&self) -> Result<PrecisionPattern> {
        let edges: Vec<(usize, usize, i8)> =
            self.edges.iter().map(|e| (e.i, e.j, e.sign)).collect();
        PrecisionPattern::from_edges(self.q, &edges)
    }
}

pub fn write_pattern(path: &Path, pattern: &PrecisionPattern) -> Result<()> {
    let file = PatternFile::from_pattern(pattern);
    fs::write(path, serde_json::to_string_pretty(&file).unwrap() + "\n")?;
    Ok(())
}

pub fn read_pattern(path: &Path) -> Result<PrecisionPattern> {
    let text = fs::read_to_string(path)?;
    let file: PatternFile = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    file.to_pattern()
}

fn node_label(labels: Option<&[String]>, idx: usize) -> String {
    match labels {
        Some(ls) if idx < ls.len() && !ls[idx].is_empty() => ls[idx].clone(),
        _ => format!("y{}", idx + 1),
    }
}

/// Undirected DOT graph: one node per response, one edge per pattern edge
/// with a `sign` attribute of +1 or -1.
pub fn pattern_to_dot(pattern: &PrecisionPattern, labels: Option<&[String]>) -> String {
    let mut out = String::from("graph dependency {\n");
    for k in 0..pattern.q() {
        out.push_str(&format!("  \"{}\";\n", node_label(labels, k)));
    }
    for (i, j, sign) in pattern.edges() {
        out.push_str(&format!(
            "  \"{}\" -- \"{}\" [sign=\"{}\"];\n",
            node_label(labels, i),
            node_label(labels, j),
            if sign > 0 { "+1" } else { "-1" }
        ));
    }
    out.push_str("}\n");
    out
}

/// JSON graph export: named nodes plus the signed edge list. Re-importable
/// as a pattern through [`GraphFile::to_pattern`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GraphFile {
    pub nodes: Vec<String>,
    pub edges: Vec<PatternEdge>,
}

impl GraphFile {
    pub fn from_pattern(pattern: &PrecisionPattern, labels: Option<&[String]>) -> Self {
        GraphFile {
            nodes: (0..pattern.q()).map(|k| node_label(labels, k)).collect(),
            edges: PatternFile::from_pattern(pattern).edges,
        }
    }

    pub fn to_pattern(&self) -> Result<PrecisionPattern> {
        PatternFile {
            q: self.nodes.len(),
            edges: self.edges.clone(),
        }
        .to_pattern()
    }
}

/// Run provenance written beside every command's outputs. Reruns with the
/// same command, seed, inputs, and version reproduce the data files
/// byte-for-byte; the timestamp records when, not what.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub args: BTreeMap<String, String>,
    /// SHA-256 of each input file.
    pub input_hashes: BTreeMap<String, String>,
    pub created_unix: u64,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: None,
            args: BTreeMap::new(),
            input_hashes: BTreeMap::new(),
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    pub fn arg(mut self, key: &str, value: impl ToString) -> Self {
        self.args.insert(key.to_string(), value.to_string());
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn hash_input(mut self, name: &str, path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        self.input_hashes
            .insert(name.to_string(), sha256_hex(&bytes));
        Ok(self)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self).unwrap() + "\n")?;
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Fit diagnostics written as `fit_report.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub method: String,
    pub sym_rule: String,
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub tuned: bool,
    /// BIC per grid cell (lambda1-major) when tuning ran.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bic_surface: Option<Vec<Vec<f64>>>,
    /// Initial-stage penalties per response (conditional-regression method only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init_lambda_b: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init_lambda_gamma: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual_variances: Option<Vec<f64>>,
    pub kkt_max_violation: f64,
    /// Covariates used by at least one response.
    pub selected_covariates: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pse: Option<f64>,
    pub edges: usize,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value).unwrap() + "\n")?;
    Ok(())
}

/// `bench_results.csv`: one row per replication x method x metric.
pub fn write_bench_results_csv(path: &Path, rows: &[RepResult]) -> Result<()> {
    let mut out = String::from("rep,seed,method,metric,value\n");
    for row in rows {
        for (metric, value) in &row.metrics {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                row.rep, row.seed, row.method, metric, value
            ));
        }
        out.push_str(&format!(
            "{},{},{},lambda1,{}\n",
            row.rep, row.seed, row.method, row.lambda1
        ));
        out.push_str(&format!(
            "{},{},{},lambda2,{}\n",
            row.rep, row.seed, row.method, row.lambda2
        ));
        out.push_str(&format!(
            "{},{},{},max_kkt_violation,{}\n",
            row.rep, row.seed, row.method, row.max_kkt_violation
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// `bench_summary.json` contents.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchSummaryFile {
    pub model: BenchModelInfo,
    pub reps: usize,
    pub seed: u64,
    pub sym_rule: String,
    pub methods: BTreeMap<String, BTreeMap<String, MetricSummaryFile>>,
    pub max_kkt_violation: f64,
    pub partial: bool,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchModelInfo {
    pub p: usize,
    pub q: usize,
    pub n: usize,
    pub b_nonzero_expect: f64,
    pub omega_nonzero_expect: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MetricSummaryFile {
    pub mean: f64,
    pub stderr: f64,
    pub reps: usize,
}

impl From<MetricSummary> for MetricSummaryFile {
    fn from(m: MetricSummary) -> Self {
        MetricSummaryFile {
            mean: m.mean,
            stderr: m.stderr,
            reps: m.reps,
        }
    }
}

pub fn bench_summary_file(
    spec: &crate::simgen::ModelSpec,
    reps: usize,
    rule: &str,
    out: &BenchOutput,
) -> BenchSummaryFile {
    let methods = out
        .summary
        .iter()
        .map(|(m, metrics)| {
            (
                m.clone(),
                metrics
                    .iter()
                    .map(|(k, v)| (k.clone(), MetricSummaryFile::from(*v)))
                    .collect(),
            )
        })
        .collect();
    BenchSummaryFile {
        model: BenchModelInfo {
            p: spec.p,
            q: spec.q,
            n: spec.n,
            b_nonzero_expect: spec.b_nonzero_expect,
            omega_nonzero_expect: spec.omega_nonzero_expect,
        },
        reps,
        seed: spec.seed,
        sym_rule: rule.to_string(),
        methods,
        max_kkt_violation: out.max_kkt_violation,
        partial: out.partial,
        failures: out
            .failures
            .iter()
            .map(|f: &BenchFailure| format!("rep {} {}: {}", f.rep, f.method, f.message))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn matrix_csv_round_trip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = DenseMatrix::new(
            2,
            3,
            vec![
                1.0 / 3.0,
                -2.718281828459045,
                1e-17,
                0.1 + 0.2,
                -0.0,
                123456.789012345,
            ],
        )
        .unwrap();
        write_matrix_csv(&path, &m).unwrap();
        let back = read_matrix_csv(&path).unwrap();
        assert_eq!(back.rows(), 2);
        assert_eq!(back.cols(), 3);
        for (a, b) in m.entries().iter().zip(back.entries()) {
            assert_eq!(a.to_bits(), b.to_bits(), "{a} vs {b}");
        }
    }

    #[test]
    fn csv_errors_carry_positions() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "1,2\n3,oops\n").unwrap();
        match read_matrix_csv(&path).unwrap_err() {
            Error::Parse { row, col, .. } => assert_eq!((row, col), (2, 2)),
            other => panic!("unexpected {other:?}"),
        }
        fs::write(&path, "1,2\n3\n").unwrap();
        match read_matrix_csv(&path).unwrap_err() {
            Error::Parse { row, .. } => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn pattern_json_round_trip() {
        let pattern = PrecisionPattern::from_edges(4, &[(0, 2, 1), (1, 3, -1)]).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("pattern.json");
        write_pattern(&path, &pattern).unwrap();
        let back = read_pattern(&path).unwrap();
        assert_eq!(back, pattern);
    }

    #[test]
    fn dot_export_lists_nodes_and_signed_edges() {
        let pattern = PrecisionPattern::from_edges(3, &[(0, 1, 1), (1, 2, -1)]).unwrap();
        let dot = pattern_to_dot(&pattern, None);
        assert!(dot.starts_with("graph"));
        assert!(dot.contains("\"y1\" -- \"y2\" [sign=\"+1\"]"));
        assert!(dot.contains("\"y2\" -- \"y3\" [sign=\"-1\"]"));
        assert_eq!(dot.matches(" -- ").count(), 2);

        let labels = vec!["alpha".to_string(), "beta".to_string(), "gamma".to_string()];
        let dot = pattern_to_dot(&pattern, Some(&labels));
        assert!(dot.contains("\"alpha\" -- \"beta\""));
    }

    #[test]
    fn graph_json_reimports_to_same_pattern() {
        let pattern = PrecisionPattern::from_edges(3, &[(0, 2, -1)]).unwrap();
        let graph = GraphFile::from_pattern(&pattern, None);
        let text = serde_json::to_string(&graph).unwrap();
        let parsed: GraphFile = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed.to_pattern().unwrap(), pattern);
    }

    #[test]
    fn diagonal_pattern_exports_zero_edges() {
        let pattern = PrecisionPattern::diagonal(5);
        let dot = pattern_to_dot(&pattern, None);
        assert_eq!(dot.matches(" -- ").count(), 0);
        assert_eq!(dot.matches(';').count(), 5);
    }
}
