//! Fully separate estimation baseline: each response's coefficients come
//! from a plain Lasso on the covariates alone, and the response-network
//! pattern from neighborhood selection on the residuals, ignoring the joint
//! structure throughout.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lasso::{CdWorkspace, SolverConfig};
use crate::linalg::DenseMatrix;
use crate::mcr::{symmetrize_pattern, CoefMatrix, GammaMatrix, PrecisionPattern, SymmetrizeRule};
use crate::tuning::bic_term;

/// Output of the separate baseline.
#[derive(Debug, Clone)]
pub struct SepFit {
    pub b_hat: CoefMatrix,
    pub pattern: PrecisionPattern,
    /// Penalty levels used: (coefficient stage, neighborhood stage).
    pub lambdas_used: (f64, f64),
    pub max_kkt_violation: f64,
}

/// Coefficient stage for one response. Takes only the covariates and that
/// response's values, so the estimate cannot depend on the other responses.
fn sep_b_column(
    x: &DenseMatrix,
    yk: Vec<f64>,
    lambda_b: f64,
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let p = x.cols();
    let ws = CdWorkspace::from_filler(yk, p, |j, out| {
        for (i, v) in out.iter_mut().enumerate() {
            *v = x.get(i, j);
        }
    });
    let thr = vec![0.5 * lambda_b; p];
    let sol = ws.solve(&thr, None, cfg)?;
    Ok((sol.coef, sol.residual, sol.max_kkt))
}

/// Separate estimation at fixed penalty levels: per-response Lasso on the
/// covariates, then neighborhood selection on the residuals, symmetrized
/// with the given rule.
pub fn fit_sep(
    x: &DenseMatrix,
    y: &DenseMatrix,
    lambda_b: f64,
    lambda_omega: f64,
    cfg: &SolverConfig,
    rule: SymmetrizeRule,
) -> Result<SepFit> {
    if x.rows() != y.rows() {
        return Err(Error::Dimension(format!(
            "x has {} rows but y has {}",
            x.rows(),
            y.rows()
        )));
    }
    if !(lambda_b >= 0.0) || !(lambda_omega >= 0.0) {
        return Err(Error::Parameter("penalty levels must be nonnegative".into()));
    }
    let p = x.cols();
    let q = y.cols();
    let n = x.rows();

    let stage_b: Vec<Result<(Vec<f64>, Vec<f64>, f64)>> = (0..q)
        .into_par_iter()
        .map(|k| {
            sep_b_column(x, y.column(k), lambda_b, cfg).map_err(|e| Error::ResponseFit {
                response: k,
                stage: "separate coefficient stage",
                source: Box::new(e),
            })
        })
        .collect();

    let mut b_hat = DenseMatrix::zeros(p, q);
    let mut residuals = DenseMatrix::zeros(n, q);
    let mut max_kkt = 0.0f64;
    for (k, res) in stage_b.into_iter().enumerate() {
        let (coef, resid, kkt) = res?;
        for (j, v) in coef.iter().enumerate() {
            b_hat.set(j, k, *v);
        }
        for (i, r) in resid.iter().enumerate() {
            residuals.set(i, k, *r);
        }
        max_kkt = max_kkt.max(kkt);
    }

    let (theta, kkt_omega) = neighborhood_stage(&residuals, lambda_omega, cfg)?;
    max_kkt = max_kkt.max(kkt_omega);
    let pattern = symmetrize_pattern(&theta, rule);
    Ok(SepFit {
        b_hat: CoefMatrix::new(b_hat),
        pattern,
        lambdas_used: (lambda_b, lambda_omega),
        max_kkt_violation: max_kkt,
    })
}

/// Lasso of each residual column on the remaining residual columns.
fn neighborhood_stage(
    residuals: &DenseMatrix,
    lambda_omega: f64,
    cfg: &SolverConfig,
) -> Result<(GammaMatrix, f64)> {
    let q = residuals.cols();
    let mut theta = GammaMatrix::zeros(q);
    if q == 1 {
        return Ok((theta, 0.0));
    }
    let per_k: Vec<Result<(Vec<f64>, f64)>> = (0..q)
        .into_par_iter()
        .map(|k| {
            let others: Vec<usize> = (0..q).filter(|s| *s != k).collect();
            let ws = CdWorkspace::from_filler(residuals.column(k), q - 1, |j, out| {
                let s = others[j];
                for (i, v) in out.iter_mut().enumerate() {
                    *v = residuals.get(i, s);
                }
            });
            let thr = vec![0.5 * lambda_omega; q - 1];
            let sol = ws.solve(&thr, None, cfg).map_err(|e| Error::ResponseFit {
                response: k,
                stage: "separate neighborhood stage",
                source: Box::new(e),
            })?;
            Ok((sol.coef, sol.max_kkt))
        })
        .collect();
    let mut max_kkt = 0.0f64;
    for (k, res) in per_k.into_iter().enumerate() {
        let (coef, kkt) = res?;
        theta.set_column_compact(k, &coef);
        max_kkt = max_kkt.max(kkt);
    }
    Ok((theta, max_kkt))
}

/// Summed-BIC path scores for one design/response pair at every penalty in
/// `lambdas` (ascending); +inf marks zero-residual points.
fn path_scores(
    ws: &CdWorkspace,
    lambdas: &[f64],
    cfg: &SolverConfig,
) -> Result<Vec<f64>> {
    let n = ws.n() as f64;
    let mut scores = vec![f64::INFINITY; lambdas.len()];
    let mut warm: Option<Vec<f64>> = None;
    for (idx, &lambda) in lambdas.iter().enumerate().rev() {
        let thr = vec![0.5 * lambda; ws.m()];
        let sol = ws.solve(&thr, warm.as_deref(), cfg)?;
        if sol.rss > 0.0 {
            let df = sol.coef.iter().filter(|b| **b != 0.0).count();
            scores[idx] = bic_term(n, sol.rss, df);
        }
        warm = Some(sol.coef);
    }
    Ok(scores)
}

/// Picks the argmin of summed scores; exact ties go to the larger penalty.
fn pick_lambda(lambdas: &[f64], total: &[f64]) -> Result<f64> {
    let mut best: Option<(usize, f64)> = None;
    for (idx, &v) in total.iter().enumerate() {
        if !v.is_finite() {
            continue;
        }
        match best {
            Some((_, bv)) if v > bv => {}
            _ => best = Some((idx, v)),
        }
    }
    best.map(|(idx, _)| lambdas[idx])
        .ok_or_else(|| Error::TuningFailed("no scoreable penalty level".into()))
}

/// Tunes the two stages independently with a shared single penalty per
/// stage: the coefficient-stage penalty minimizes the summed BIC of the
/// per-response covariate regressions, then the neighborhood penalty
/// minimizes the summed BIC of the residual regressions.
pub fn tune_sep(
    x: &DenseMatrix,
    y: &DenseMatrix,
    lambdas: &[f64],
    cfg: &SolverConfig,
    rule: SymmetrizeRule,
) -> Result<SepFit> {
    let p = x.cols();
    let q = y.cols();
    let n = x.rows();

    let b_scores: Vec<Result<Vec<f64>>> = (0..q)
        .into_par_iter()
        .map(|k| {
            let ws = CdWorkspace::from_filler(y.column(k), p, |j, out| {
                for (i, v) in out.iter_mut().enumerate() {
                    *v = x.get(i, j);
                }
            });
            path_scores(&ws, lambdas, cfg).map_err(|e| Error::ResponseFit {
                response: k,
                stage: "separate coefficient tuning",
                source: Box::new(e),
            })
        })
        .collect();
    let lambda_b = pick_lambda(lambdas, &sum_scores(b_scores, lambdas.len())?)?;

    // Residuals at the chosen coefficient penalty feed the neighborhood stage.
    let mut residuals = DenseMatrix::zeros(n, q);
    for k in 0..q {
        let (_, resid, _) = sep_b_column(x, y.column(k), lambda_b, cfg)?;
        for (i, r) in resid.iter().enumerate() {
            residuals.set(i, k, *r);
        }
    }
    let lambda_omega = if q > 1 {
        let o_scores: Vec<Result<Vec<f64>>> = (0..q)
            .into_par_iter()
            .map(|k| {
                let others: Vec<usize> = (0..q).filter(|s| *s != k).collect();
                let ws = CdWorkspace::from_filler(residuals.column(k), q - 1, |j, out| {
                    let s = others[j];
                    for (i, v) in out.iter_mut().enumerate() {
                        *v = residuals.get(i, s);
                    }
                });
                path_scores(&ws, lambdas, cfg).map_err(|e| Error::ResponseFit {
                    response: k,
                    stage: "separate neighborhood tuning",
                    source: Box::new(e),
                })
            })
            .collect();
        pick_lambda(lambdas, &sum_scores(o_scores, lambdas.len())?)?
    } else {
        *lambdas.last().expect("nonempty grid")
    };

    fit_sep(x, y, lambda_b, lambda_omega, cfg, rule)
}

fn sum_scores(per_k: Vec<Result<Vec<f64>>>, len: usize) -> Result<Vec<f64>> {
    let mut total = vec![0.0; len];
    for res in per_k {
        let scores = res?;
        for (t, s) in total.iter_mut().zip(&scores) {
            *t += s;
        }
    }
    Ok(total)
}
