//! Weighted (adaptive) Lasso via cyclic coordinate descent.
//!
//! This is the single optimizer behind every fit in the crate: the initial
//! separate regressions, the per-response conditional regressions, and the
//! separate-estimation baseline. The objective is
//!
//! ```text
//!   ||y - Z b||²  +  lambda * sum_j w_j |b_j|
//! ```
//!
//! with no 1/n or 1/2 factor on the squared error. A weight of `+inf`
//! excludes its coordinate outright (the solution is exactly zero there),
//! which is the limit behaviour of adaptive weights built from a zero
//! initial estimate.

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// sign(z) * max(|z| - t, 0)
#[inline]
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// One weighted Lasso instance.
#[derive(Debug, Clone)]
pub struct LassoProblem {
    pub design: DenseMatrix,
    pub response: Vec<f64>,
    /// Per-coordinate penalty weights; `+inf` excludes the coordinate.
    pub weights: Vec<f64>,
    pub lambda: f64,
}

impl LassoProblem {
    pub fn new(
        design: DenseMatrix,
        response: Vec<f64>,
        weights: Vec<f64>,
        lambda: f64,
    ) -> Result<Self> {
        if design.rows() != response.len() {
            return Err(Error::Dimension(format!(
                "design has {} rows but response has {} entries",
                design.rows(),
                response.len()
            )));
        }
        if design.cols() != weights.len() {
            return Err(Error::Dimension(format!(
                "design has {} columns but {} weights were given",
                design.cols(),
                weights.len()
            )));
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::Parameter(format!("lambda must be >= 0, got {lambda}")));
        }
        if weights.iter().any(|w| w.is_nan() || *w < 0.0) {
            return Err(Error::Parameter("weights must be nonnegative".into()));
        }
        if response.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("response must be finite".into()));
        }
        Ok(LassoProblem {
            design,
            response,
            weights,
            lambda,
        })
    }

    /// Objective value at `coef`; infinite if a coordinate with infinite
    /// weight is nonzero.
    pub fn objective(&self, coef: &[f64]) -> f64 {
        let n = self.design.rows();
        let mut rss = 0.0;
        for i in 0..n {
            let fit: f64 = self
                .design
                .row(i)
                .iter()
                .zip(coef)
                .map(|(z, b)| z * b)
                .sum();
            let r = self.response[i] - fit;
            rss += r * r;
        }
        let mut penalty = 0.0;
        for (w, b) in self.weights.iter().zip(coef) {
            if !w.is_finite() {
                if *b != 0.0 {
                    return f64::INFINITY;
                }
            } else {
                penalty += self.lambda * w * b.abs();
            }
        }
        rss + penalty
    }
}

/// Coordinate descent stopping rules.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Stop when the largest coordinate change in a full sweep falls below this.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Alternative stop: relative objective decrease over a full sweep.
    pub rel_objective_tol: f64,
    /// Rescale columns to unit norm internally (exact reparameterization;
    /// fixed points are unchanged). Off by default: inputs are centered but
    /// never standardized.
    pub standardize: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-7,
            max_sweeps: 10_000,
            rel_objective_tol: 1e-10,
            standardize: false,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Parameter(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_sweeps == 0 {
            return Err(Error::Parameter("max_sweeps must be >= 1".into()));
        }
        if self.rel_objective_tol < 0.0 {
            return Err(Error::Parameter("rel_objective_tol must be >= 0".into()));
        }
        Ok(())
    }
}

/// Minimizes the weighted Lasso objective. Coordinates with infinite weight
/// come back exactly zero. The returned vector satisfies the stationarity
/// system checked by [`kkt_check`].
pub fn solve_weighted_lasso(
    prob: &LassoProblem,
    cfg: &SolverConfig,
    warm_start: Option<&[f64]>,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if let Some(w) = warm_start {
        if w.len() != prob.design.cols() {
            return Err(Error::Dimension(format!(
                "warm start has {} entries for {} coordinates",
                w.len(),
                prob.design.cols()
            )));
        }
    }
    let m = prob.design.cols();
    let mut ws = CdWorkspace::from_design(&prob.design, &prob.response);
    let mut thresholds = thresholds_from_weights(prob.lambda, &prob.weights);
    let mut scales = Vec::new();
    if cfg.standardize {
        scales = ws.normalize_columns();
        for (t, s) in thresholds.iter_mut().zip(&scales) {
            if t.is_finite() && *s > 0.0 {
                *t /= s;
            }
        }
    }
    let warm_scaled;
    let warm = match (cfg.standardize, warm_start) {
        (true, Some(w)) => {
            warm_scaled = w
                .iter()
                .zip(&scales)
                .map(|(b, s)| b * s)
                .collect::<Vec<f64>>();
            Some(warm_scaled.as_slice())
        }
        (_, w) => w,
    };
    let sol = ws.solve(&thresholds, warm, cfg)?;
    let mut coef = sol.coef;
    if cfg.standardize {
        for (b, s) in coef.iter_mut().zip(&scales) {
            if *s > 0.0 {
                *b /= s;
            }
        }
    }
    debug_assert_eq!(coef.len(), m);
    Ok(coef)
}

/// Per-coordinate soft thresholds at penalty level `lambda`. An infinite
/// weight maps to an infinite threshold (exclusion) even when `lambda` is 0.
pub(crate) fn thresholds_from_weights(lambda: f64, weights: &[f64]) -> Vec<f64> {
    weights
        .iter()
        .map(|w| {
            if !w.is_finite() {
                f64::INFINITY
            } else {
                0.5 * lambda * w
            }
        })
        .collect()
}

/// Stationarity certificate. Returns the coordinates violating the
/// subgradient conditions by more than `tol`, with the excess magnitude:
///
/// * nonzero coordinate: |2 z_jᵀ(y - Z b) - lambda w_j sign(b_j)| must be <= tol
/// * zero coordinate:    |2 z_jᵀ(y - Z b)| must be <= lambda w_j + tol
///
/// A nonzero coordinate with infinite weight is reported with infinite
/// violation (the objective is unbounded there).
pub fn kkt_check(prob: &LassoProblem, coef: &[f64], tol: f64) -> Vec<(usize, f64)> {
    assert_eq!(coef.len(), prob.design.cols(), "coefficient length mismatch");
    let n = prob.design.rows();
    let mut residual = prob.response.clone();
    for i in 0..n {
        let fit: f64 = prob
            .design
            .row(i)
            .iter()
            .zip(coef)
            .map(|(z, b)| z * b)
            .sum();
        residual[i] -= fit;
    }
    let mut violations = Vec::new();
    for j in 0..prob.design.cols() {
        let w = prob.weights[j];
        if !w.is_finite() {
            if coef[j] != 0.0 {
                violations.push((j, f64::INFINITY));
            }
            continue;
        }
        let g: f64 = (0..n).map(|i| prob.design.get(i, j) * residual[i]).sum();
        let g = 2.0 * g;
        let viol = if coef[j] != 0.0 {
            (g - prob.lambda * w * coef[j].signum()).abs()
        } else {
            (g.abs() - prob.lambda * w).max(0.0)
        };
        if viol > tol {
            violations.push((j, viol));
        }
    }
    violations
}

/// Column-major scratch for repeated solves against one design/response pair
/// (tuning paths re-solve the same problem at many penalty levels).
pub(crate) struct CdWorkspace {
    n: usize,
    m: usize,
    cols: Vec<f64>,
    col_sq: Vec<f64>,
    y: Vec<f64>,
}

pub(crate) struct CdSolution {
    pub coef: Vec<f64>,
    /// Residual y - Z b, recomputed from scratch after convergence.
    pub residual: Vec<f64>,
    pub rss: f64,
    pub sweeps: usize,
    /// Worst stationarity violation at the solution.
    pub max_kkt: f64,
}

impl CdWorkspace {
    pub fn from_design(design: &DenseMatrix, y: &[f64]) -> Self {
        let n = design.rows();
        let m = design.cols();
        Self::from_filler(y.to_vec(), m, |j, out| {
            for (i, v) in out.iter_mut().enumerate() {
                *v = design.get(i, j);
            }
        })
    }

    /// Builds the workspace column by column through `fill`; avoids
    /// materializing augmented designs as row-major matrices first.
    pub fn from_filler(y: Vec<f64>, m: usize, mut fill: impl FnMut(usize, &mut [f64])) -> Self {
        let n = y.len();
        let mut cols = vec![0.0; n * m];
        let mut col_sq = vec![0.0; m];
        for j in 0..m {
            let col = &mut cols[j * n..(j + 1) * n];
            fill(j, col);
            col_sq[j] = col.iter().map(|v| v * v).sum();
        }
        CdWorkspace {
            n,
            m,
            cols,
            col_sq,
            y,
        }
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.cols[j * self.n..(j + 1) * self.n]
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    /// Scales every nonzero column to unit norm; returns the scale factors.
    fn normalize_columns(&mut self) -> Vec<f64> {
        let mut scales = vec![0.0; self.m];
        for j in 0..self.m {
            let s = self.col_sq[j].sqrt();
            scales[j] = s;
            if s > 0.0 {
                for v in &mut self.cols[j * self.n..(j + 1) * self.n] {
                    *v /= s;
                }
                self.col_sq[j] = 1.0;
            }
        }
        scales
    }

    /// Cyclic coordinate descent at the given per-coordinate thresholds.
    ///
    /// Convergence requires a full sweep whose largest coordinate change is
    /// below `cfg.tol` (or whose relative objective decrease is below
    /// `cfg.rel_objective_tol`); between full sweeps, iteration narrows to
    /// the current active set. Fixed coordinate order keeps results
    /// bit-identical across runs and thread counts.
    pub fn solve(
        &self,
        thresholds: &[f64],
        warm: Option<&[f64]>,
        cfg: &SolverConfig,
    ) -> Result<CdSolution> {
        assert_eq!(thresholds.len(), self.m);
        let mut beta = match warm {
            Some(w) => {
                let mut b = w.to_vec();
                for (bj, t) in b.iter_mut().zip(thresholds) {
                    // Hard exclusion regardless of the warm start.
                    if !t.is_finite() {
                        *bj = 0.0;
                    }
                }
                b
            }
            None => vec![0.0; self.m],
        };
        let candidates: Vec<usize> = (0..self.m)
            .filter(|&j| thresholds[j].is_finite() && self.col_sq[j] > 0.0)
            .collect();
        for j in 0..self.m {
            if self.col_sq[j] == 0.0 {
                beta[j] = 0.0; // zero column: coefficient is immaterial, pin it
            }
        }
        let mut residual = self.fresh_residual(&beta);

        let mut sweeps = 0usize;
        let mut prev_obj = f64::INFINITY;
        let mut converged = false;
        while sweeps < cfg.max_sweeps {
            // Full sweep: the only place convergence is declared.
            let delta = self.sweep(&candidates, thresholds, &mut beta, &mut residual);
            sweeps += 1;
            let obj = self.objective(&beta, thresholds, &residual);
            debug_assert!(
                obj <= prev_obj * (1.0 + 1e-12) + 1e-12,
                "objective increased: {prev_obj} -> {obj}"
            );
            let rel_drop = (prev_obj - obj) / prev_obj.abs().max(f64::MIN_POSITIVE);
            if delta < cfg.tol || (prev_obj.is_finite() && rel_drop < cfg.rel_objective_tol) {
                converged = true;
                break;
            }
            prev_obj = obj;

            // Inner refinement on the active set until it stabilizes.
            let active: Vec<usize> = candidates
                .iter()
                .copied()
                .filter(|&j| beta[j] != 0.0)
                .collect();
            while sweeps < cfg.max_sweeps {
                let delta = self.sweep(&active, thresholds, &mut beta, &mut residual);
                sweeps += 1;
                let obj = self.objective(&beta, thresholds, &residual);
                debug_assert!(obj <= prev_obj * (1.0 + 1e-12) + 1e-12);
                prev_obj = obj;
                if delta < cfg.tol {
                    break;
                }
            }
        }

        // Recompute the residual from scratch so downstream RSS and KKT
        // figures do not inherit incremental-update drift.
        let residual = self.fresh_residual(&beta);
        let rss = residual.iter().map(|v| v * v).sum();
        let max_kkt = self.max_kkt_violation(&beta, thresholds, &residual);
        if !converged {
            return Err(Error::NonConvergence {
                sweeps,
                max_kkt,
                last_iterate: beta,
            });
        }
        Ok(CdSolution {
            coef: beta,
            residual,
            rss,
            sweeps,
            max_kkt,
        })
    }

    fn sweep(
        &self,
        order: &[usize],
        thresholds: &[f64],
        beta: &mut [f64],
        residual: &mut [f64],
    ) -> f64 {
        let mut max_delta = 0.0f64;
        for &j in order {
            let old = beta[j];
            let col = self.col(j);
            let mut rho: f64 = col.iter().zip(residual.iter()).map(|(z, r)| z * r).sum();
            rho += self.col_sq[j] * old;
            let new = soft_threshold(rho, thresholds[j]) / self.col_sq[j];
            if new != old {
                let step = new - old;
                for (r, z) in residual.iter_mut().zip(col) {
                    *r -= step * z;
                }
                beta[j] = new;
                max_delta = max_delta.max(step.abs());
            }
        }
        max_delta
    }

    fn fresh_residual(&self, beta: &[f64]) -> Vec<f64> {
        let mut r = self.y.clone();
        for (j, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                for (ri, z) in r.iter_mut().zip(self.col(j)) {
                    *ri -= b * z;
                }
            }
        }
        r
    }

    fn objective(&self, beta: &[f64], thresholds: &[f64], residual: &[f64]) -> f64 {
        let rss: f64 = residual.iter().map(|v| v * v).sum();
        let penalty: f64 = beta
            .iter()
            .zip(thresholds)
            .filter(|(_, t)| t.is_finite())
            .map(|(b, t)| 2.0 * t * b.abs())
            .sum();
        rss + penalty
    }

    /// Worst violation of the stationarity system, in the same units as
    /// [`kkt_check`] (gradient scaled by 2, thresholds are lambda*w/2).
    pub fn max_kkt_violation(&self, beta: &[f64], thresholds: &[f64], residual: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..self.m {
            let t = thresholds[j];
            if !t.is_finite() {
                continue;
            }
            let g: f64 = self
                .col(j)
                .iter()
                .zip(residual.iter())
                .map(|(z, r)| z * r)
                .sum();
            let g = 2.0 * g;
            let viol = if beta[j] != 0.0 {
                (g - 2.0 * t * beta[j].signum()).abs()
            } else {
                (g.abs() - 2.0 * t).max(0.0)
            };
            worst = worst.max(viol);
        }
        worst
    }
}
