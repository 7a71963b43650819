//! Penalty selection: per-response BIC over the fitted conditional
//! regressions, minimized by exhaustive search on a two-dimensional
//! logarithmic grid (19 points per axis, 1e-3 through 1e3 in third-decade
//! steps).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lasso::{CdWorkspace, SolverConfig};
use crate::linalg::DenseMatrix;
use crate::mcr::{
    compute_adaptive_weights, fit_mcr, residualized_responses, response_thresholds,
    response_workspace, CoefMatrix, GammaMatrix, InitialFit, McrFit,
};

/// Candidate penalty levels for the two penalty blocks.
#[derive(Debug, Clone)]
pub struct TuningGrid {
    pub lambda1_values: Vec<f64>,
    pub lambda2_values: Vec<f64>,
}

impl TuningGrid {
    pub fn new(lambda1_values: Vec<f64>, lambda2_values: Vec<f64>) -> Result<Self> {
        for axis in [&lambda1_values, &lambda2_values] {
            if axis.is_empty() {
                return Err(Error::Parameter("tuning grid axis is empty".into()));
            }
            if axis.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::Parameter("grid values must be positive".into()));
            }
            if axis.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Parameter(
                    "grid values must be strictly increasing".into(),
                ));
            }
        }
        Ok(TuningGrid {
            lambda1_values,
            lambda2_values,
        })
    }
}

/// The 19 standard grid points 10^(-3 + (s-1)/3), s = 1..=19.
pub fn grid_points() -> Vec<f64> {
    (1..=19)
        .map(|s: i32| {
            let thirds = s - 10; // exponent numerator: -9..=9 over 3
            if thirds % 3 == 0 {
                10f64.powi(thirds / 3)
            } else {
                10f64.powf(f64::from(thirds) / 3.0)
            }
        })
        .collect()
}

/// Standard 19x19 grid on both axes.
pub fn default_grid() -> TuningGrid {
    TuningGrid::new(grid_points(), grid_points()).expect("standard grid is valid")
}

/// Result of the two-dimensional search.
#[derive(Debug, Clone)]
pub struct TuningResult {
    pub best_lambda1: f64,
    pub best_lambda2: f64,
    /// BIC per grid cell, lambda1 on rows, lambda2 on columns; +inf marks a
    /// degenerate (zero-residual) cell.
    pub score_surface: DenseMatrix,
    pub best_fit: McrFit,
    /// Worst stationarity violation over every cell fit plus the final refit.
    pub max_kkt_violation: f64,
}

pub(crate) fn bic_term(n: f64, rss: f64, df: usize) -> f64 {
    n * (rss / n).ln() + n.ln() * df as f64
}

/// BIC of a fitted model, recomputed from scratch: the sum over responses of
/// n log(RSS_k / n) + log(n) * df_k, where RSS_k is the conditional-regression
/// residual at (b_k, g_k) and df_k counts their nonzero coefficients.
pub fn bic_score(
    x: &DenseMatrix,
    y: &DenseMatrix,
    b_hat: &CoefMatrix,
    gamma_hat: &GammaMatrix,
    init: &InitialFit,
) -> Result<f64> {
    let n = x.rows();
    let p = x.cols();
    let q = y.cols();
    if b_hat.p() != p || b_hat.q() != q || gamma_hat.q() != q {
        return Err(Error::Dimension("fit does not match the dataset".into()));
    }
    let resid0 = residualized_responses(x, y, &init.b0)?;
    let mut total = 0.0;
    for k in 0..q {
        let mut rss = 0.0;
        for i in 0..n {
            let mut r = y.get(i, k);
            for j in 0..p {
                let b = b_hat.get(j, k);
                if b != 0.0 {
                    r -= x.get(i, j) * b;
                }
            }
            for s in 0..q {
                if s == k {
                    continue;
                }
                let g = gamma_hat.get(s, k);
                if g != 0.0 {
                    r -= resid0.get(i, s) * g;
                }
            }
            rss += r * r;
        }
        if rss <= 0.0 {
            return Err(Error::DegenerateFit { response: k });
        }
        let df = (0..p).filter(|&j| b_hat.get(j, k) != 0.0).count()
            + (0..q).filter(|&s| s != k && gamma_hat.get(s, k) != 0.0).count();
        total += bic_term(n as f64, rss, df);
    }
    Ok(total)
}

/// Argmin over a score surface; ties go to the lexicographically largest
/// (lambda1, lambda2), i.e. the sparser model. Errors if every cell is
/// non-finite.
pub fn argmin_cell(surface: &DenseMatrix) -> Result<(usize, usize)> {
    let mut best: Option<(usize, usize, f64)> = None;
    for s in 0..surface.rows() {
        for t in 0..surface.cols() {
            let v = surface.get(s, t);
            if !v.is_finite() {
                continue;
            }
            // `<=` keeps the later (larger-penalty) cell on exact ties.
            match best {
                Some((_, _, bv)) if v > bv => {}
                _ => best = Some((s, t, v)),
            }
        }
    }
    best.map(|(s, t, _)| (s, t))
        .ok_or_else(|| Error::TuningFailed("all grid cells are degenerate".into()))
}

/// Exhaustive BIC search for the conditional-regression stage. Every cell is
/// solved to its own stationarity tolerance; warm starts run along
/// decreasing lambda2 within a row and chain between row heads, so they
/// affect runtime only. Per-response work is parallel.
pub fn grid_search(
    x: &DenseMatrix,
    y: &DenseMatrix,
    grid: &TuningGrid,
    init: &InitialFit,
    cfg: &SolverConfig,
) -> Result<TuningResult> {
    let n = x.rows();
    let q = y.cols();
    let rows = grid.lambda1_values.len();
    let cols = grid.lambda2_values.len();
    let weights = compute_adaptive_weights(init);
    let resid = residualized_responses(x, y, &init.b0)?;

    struct PerResponse {
        rss: Vec<f64>,
        df: Vec<usize>,
        max_kkt: f64,
    }

    let per_k: Vec<Result<PerResponse>> = (0..q)
        .into_par_iter()
        .map(|k| {
            let ws = response_workspace(x, &resid, y, k);
            let mut rss = vec![0.0; rows * cols];
            let mut df = vec![0usize; rows * cols];
            let mut max_kkt = 0.0f64;
            let mut row_head_warm: Option<Vec<f64>> = None;
            for s in (0..rows).rev() {
                let lambda1 = grid.lambda1_values[s];
                let mut warm = row_head_warm.clone();
                for t in (0..cols).rev() {
                    let lambda2 = grid.lambda2_values[t];
                    let thr = response_thresholds(&weights, k, lambda1, lambda2);
                    let sol =
                        ws.solve(&thr, warm.as_deref(), cfg)
                            .map_err(|e| Error::ResponseFit {
                                response: k,
                                stage: "grid search",
                                source: Box::new(e),
                            })?;
                    let cell = s * cols + t;
                    rss[cell] = sol.rss;
                    df[cell] = sol.coef.iter().filter(|b| **b != 0.0).count();
                    max_kkt = max_kkt.max(sol.max_kkt);
                    if t == cols - 1 {
                        row_head_warm = Some(sol.coef.clone());
                    }
                    warm = Some(sol.coef);
                }
            }
            Ok(PerResponse { rss, df, max_kkt })
        })
        .collect();

    let mut surface = DenseMatrix::zeros(rows, cols);
    let mut max_kkt = 0.0f64;
    let mut collected = Vec::with_capacity(q);
    for res in per_k {
        collected.push(res?);
    }
    for cell in 0..rows * cols {
        let mut score = 0.0;
        for pr in &collected {
            if pr.rss[cell] <= 0.0 {
                score = f64::INFINITY;
                break;
            }
            score += bic_term(n as f64, pr.rss[cell], pr.df[cell]);
        }
        surface.set(cell / cols, cell % cols, score);
    }
    for pr in &collected {
        max_kkt = max_kkt.max(pr.max_kkt);
    }

    let (bs, bt) = argmin_cell(&surface)?;
    let best_lambda1 = grid.lambda1_values[bs];
    let best_lambda2 = grid.lambda2_values[bt];
    let best_fit = fit_mcr(x, y, best_lambda1, best_lambda2, init, cfg)?;
    max_kkt = max_kkt.max(best_fit.max_kkt_violation);
    Ok(TuningResult {
        best_lambda1,
        best_lambda2,
        score_surface: surface,
        best_fit,
        max_kkt_violation: max_kkt,
    })
}

/// Best penalty on a descending path by per-response BIC; ties keep the
/// larger penalty. Shared by the initial stage and the separate baseline.
pub(crate) struct PathChoice {
    pub lambda: f64,
    pub coef: Vec<f64>,
    pub rss: f64,
    pub max_kkt: f64,
}

pub(crate) fn best_bic_on_path(
    ws: &CdWorkspace,
    lambdas_ascending: &[f64],
    cfg: &SolverConfig,
) -> Result<PathChoice> {
    let n = ws.n() as f64;
    let mut warm: Option<Vec<f64>> = None;
    let mut best: Option<(f64, PathChoice)> = None;
    for &lambda in lambdas_ascending.iter().rev() {
        let thr: Vec<f64> = vec![0.5 * lambda; ws.m()];
        let sol = ws.solve(&thr, warm.as_deref(), cfg)?;
        if sol.rss > 0.0 {
            let df = sol.coef.iter().filter(|b| **b != 0.0).count();
            let score = bic_term(n, sol.rss, df);
            // Strict improvement keeps the largest-lambda winner on ties.
            if best.as_ref().map_or(true, |(bs, _)| score < *bs) {
                best = Some((
                    score,
                    PathChoice {
                        lambda,
                        coef: sol.coef.clone(),
                        rss: sol.rss,
                        max_kkt: sol.max_kkt,
                    },
                ));
            }
        }
        warm = Some(sol.coef);
    }
    best.map(|(_, c)| c)
        .ok_or_else(|| Error::TuningFailed("every path point had zero residual".into()))
}

/// Initial stage with per-response penalty selection: each response's
/// covariate regression and neighborhood regression are tuned separately by
/// BIC on the one-dimensional grid.
pub fn tune_initial(
    x: &DenseMatrix,
    y: &DenseMatrix,
    lambdas: &[f64],
    cfg: &SolverConfig,
) -> Result<InitialFit> {
    if x.rows() != y.rows() {
        return Err(Error::Dimension(format!(
            "x has {} rows but y has {}",
            x.rows(),
            y.rows()
        )));
    }
    let p = x.cols();
    let q = y.cols();

    struct PerK {
        coef_b: Vec<f64>,
        lambda_b: f64,
        coef_g: Vec<f64>,
        lambda_g: f64,
    }

    let per_k: Vec<Result<PerK>> = (0..q)
        .into_par_iter()
        .map(|k| {
            let yk = y.column(k);
            let ws_b = CdWorkspace::from_filler(yk.clone(), p, |j, out| {
                for (i, v) in out.iter_mut().enumerate() {
                    *v = x.get(i, j);
                }
            });
            let choice_b = best_bic_on_path(&ws_b, lambdas, cfg).map_err(|e| {
                Error::ResponseFit {
                    response: k,
                    stage: "initial covariate tuning",
                    source: Box::new(e),
                }
            })?;
            let (coef_g, lambda_g) = if q > 1 {
                let others: Vec<usize> = (0..q).filter(|s| *s != k).collect();
                let ws_g = CdWorkspace::from_filler(yk, q - 1, |j, out| {
                    let s = others[j];
                    for (i, v) in out.iter_mut().enumerate() {
                        *v = y.get(i, s);
                    }
                });
                let choice_g = best_bic_on_path(&ws_g, lambdas, cfg).map_err(|e| {
                    Error::ResponseFit {
                        response: k,
                        stage: "initial neighborhood tuning",
                        source: Box::new(e),
                    }
                })?;
                (choice_g.coef, choice_g.lambda)
            } else {
                (Vec::new(), f64::NAN)
            };
            Ok(PerK {
                coef_b: choice_b.coef,
                lambda_b: choice_b.lambda,
                coef_g,
                lambda_g,
            })
        })
        .collect();

    let mut b0 = DenseMatrix::zeros(p, q);
    let mut gamma0 = GammaMatrix::zeros(q);
    let mut lambda_b = vec![0.0; q];
    let mut lambda_gamma = vec![0.0; q];
    for (k, res) in per_k.into_iter().enumerate() {
        let pk = res?;
        for (j, v) in pk.coef_b.iter().enumerate() {
            b0.set(j, k, *v);
        }
        lambda_b[k] = pk.lambda_b;
        if q > 1 {
            gamma0.set_column_compact(k, &pk.coef_g);
        }
        lambda_gamma[k] = pk.lambda_g;
    }
    Ok(InitialFit {
        b0: CoefMatrix::new(b0),
        gamma0,
        lambda_b,
        lambda_gamma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints_and_midpoint() {
        let pts = grid_points();
        assert_eq!(pts.len(), 19);
        assert_eq!(pts[0], 1e-3);
        assert_eq!(pts[9], 1.0);
        assert_eq!(pts[18], 1e3);
        for w in pts.windows(2) {
            assert!(w[0] < w[1]);
        }
        // Third-decade spacing: ratios all equal 10^(1/3).
        let step = 10f64.powf(1.0 / 3.0);
        for w in pts.windows(2) {
            assert!((w[1] / w[0] - step).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_validation() {
        assert!(TuningGrid::new(vec![0.1, 0.1], vec![1.0]).is_err());
        assert!(TuningGrid::new(vec![0.0, 0.1], vec![1.0]).is_err());
        assert!(TuningGrid::new(vec![], vec![1.0]).is_err());
        assert!(TuningGrid::new(vec![0.1, 1.0], vec![0.5]).is_ok());
    }

    #[test]
    fn argmin_unique_and_tiebreak() {
        let mut surf = DenseMatrix::zeros(19, 19);
        for s in 0..19 {
            for t in 0..19 {
                surf.set(s, t, 100.0 + (s as f64) + (t as f64) * 0.01);
            }
        }
        surf.set(4, 6, -5.0);
        assert_eq!(argmin_cell(&surf).unwrap(), (4, 6));

        // Tie: the lexicographically larger cell wins.
        surf.set(7, 2, -5.0);
        assert_eq!(argmin_cell(&surf).unwrap(), (7, 2));
        surf.set(7, 9, -5.0);
        assert_eq!(argmin_cell(&surf).unwrap(), (7, 9));
    }

    #[test]
    fn argmin_rejects_all_degenerate() {
        let mut surf = DenseMatrix::zeros(2, 2);
        for s in 0..2 {
            for t in 0..2 {
                surf.set(s, t, f64::INFINITY);
            }
        }
        assert!(matches!(argmin_cell(&surf), Err(Error::TuningFailed(_))));
    }

    #[test]
    fn single_cell_grid_returns_that_cell() {
        let x = DenseMatrix::new(6, 1, vec![1.0, -1.0, 2.0, -2.0, 0.5, -0.5]).unwrap();
        let y = DenseMatrix::new(
            6,
            2,
            vec![1.1, 0.4, -0.9, -0.6, 2.2, 1.0, -2.1, -0.8, 0.6, 0.3, -0.4, -0.2],
        )
        .unwrap();
        let cfg = SolverConfig::default();
        let init = tune_initial(&x, &y, &grid_points(), &cfg).unwrap();
        let grid = TuningGrid::new(vec![0.3], vec![0.7]).unwrap();
        let result = grid_search(&x, &y, &grid, &init, &cfg).unwrap();
        assert_eq!(result.best_lambda1, 0.3);
        assert_eq!(result.best_lambda2, 0.7);
        assert_eq!(result.score_surface.rows(), 1);
        assert_eq!(result.score_surface.cols(), 1);
    }

    #[test]
    fn bic_penalizes_spurious_coefficient_by_log_n() {
        let n = 50;
        let x = DenseMatrix::from_fn(n, 2, |i, j| ((i * (j + 2)) % 7) as f64 - 3.0);
        let y = DenseMatrix::from_fn(n, 1, |i, _| (i % 5) as f64 - 2.0 + 0.5 * x.get(i, 0));
        let init = InitialFit {
            b0: CoefMatrix::zeros(2, 1),
            gamma0: GammaMatrix::zeros(1),
            lambda_b: vec![1e9],
            lambda_gamma: vec![f64::NAN],
        };
        let sparse = CoefMatrix::new(DenseMatrix::new(2, 1, vec![0.5, 0.0]).unwrap());
        let with_spurious =
            CoefMatrix::new(DenseMatrix::new(2, 1, vec![0.5, 1e-13]).unwrap());
        let g = GammaMatrix::zeros(1);
        let s0 = bic_score(&x, &y, &sparse, &g, &init).unwrap();
        let s1 = bic_score(&x, &y, &with_spurious, &g, &init).unwrap();
        let log_n = (n as f64).ln();
        assert!(
            ((s1 - s0) - log_n).abs() < 1e-6,
            "spurious coefficient changed BIC by {} (expected about {log_n})",
            s1 - s0
        );
    }

    #[test]
    fn bic_all_zero_fit_matches_response_energy() {
        let x = DenseMatrix::new(4, 1, vec![1.0, -1.0, 2.0, -2.0]).unwrap();
        let y = DenseMatrix::new(4, 2, vec![1.0, 2.0, -1.0, -2.0, 3.0, 1.0, -3.0, -1.0]).unwrap();
        let init = InitialFit {
            b0: CoefMatrix::zeros(1, 2),
            gamma0: GammaMatrix::zeros(2),
            lambda_b: vec![1e9; 2],
            lambda_gamma: vec![1e9; 2],
        };
        let score = bic_score(
            &x,
            &y,
            &CoefMatrix::zeros(1, 2),
            &GammaMatrix::zeros(2),
            &init,
        )
        .unwrap();
        let n = 4.0;
        let expected: f64 = (0..2)
            .map(|k| {
                let rss: f64 = (0..4).map(|i| y.get(i, k) * y.get(i, k)).sum();
                n * (rss / n).ln()
            })
            .sum();
        assert!((score - expected).abs() < 1e-12);
    }

    #[test]
    fn bic_degenerate_on_zero_residual() {
        let x = DenseMatrix::new(2, 1, vec![1.0, -1.0]).unwrap();
        let y = DenseMatrix::new(2, 1, vec![2.0, -2.0]).unwrap();
        let init = InitialFit {
            b0: CoefMatrix::zeros(1, 1),
            gamma0: GammaMatrix::zeros(1),
            lambda_b: vec![0.0],
            lambda_gamma: vec![f64::NAN],
        };
        // Exact fit: residual is identically zero.
        let b = CoefMatrix::new(DenseMatrix::new(1, 1, vec![2.0]).unwrap());
        let err = bic_score(&x, &y, &b, &GammaMatrix::zeros(1), &init).unwrap_err();
        assert!(matches!(err, Error::DegenerateFit { response: 0 }));
    }
}
