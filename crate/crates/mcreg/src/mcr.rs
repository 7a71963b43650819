//! Joint estimation of a sparse coefficient matrix and the sparsity pattern
//! of the response precision matrix via per-response conditional regressions.
//!
//! The procedure has two stages. First, every response is regressed
//! separately on the covariates (and on the other responses) with a plain
//! Lasso; those estimates seed adaptive penalty weights. Second, each
//! response is regressed on the covariates *plus the residualized other
//! responses* with the weighted Lasso:
//!
//! ```text
//!   min_{b_k, g_k} ||y^k - X b_k - (Y^{-k} - X B0^{-k}) g_k||²
//!                  + lambda1 * sum_j u_jk |b_jk| + lambda2 * sum_s v_sk |g_sk|
//! ```
//!
//! The coefficients `g_sk` on the other responses are proportional to the
//! corresponding off-diagonal entries of the response precision matrix with
//! the sign flipped, so their support (after symmetrization) is the estimated
//! conditional dependency graph among the responses. The per-response fits
//! are independent given the initial stage and run in parallel.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lasso::{CdWorkspace, SolverConfig};
use crate::linalg::DenseMatrix;

/// Dense p x q coefficient matrix; the support is read off exact zeros
/// (the solver produces exact zeros by soft thresholding).
#[derive(Debug, Clone)]
pub struct CoefMatrix {
    values: DenseMatrix,
}

impl CoefMatrix {
    pub fn new(values: DenseMatrix) -> Self {
        CoefMatrix { values }
    }

    pub fn zeros(p: usize, q: usize) -> Self {
        CoefMatrix {
            values: DenseMatrix::zeros(p, q),
        }
    }

    #[inline]
    pub fn values(&self) -> &DenseMatrix {
        &self.values
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.values.rows()
    }

    #[inline]
    pub fn q(&self) -> usize {
        self.values.cols()
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.values.get(j, k)
    }

    /// Index pairs (covariate, response) with nonzero coefficients.
    pub fn support(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for j in 0..self.p() {
            for k in 0..self.q() {
                if self.values.get(j, k) != 0.0 {
                    out.push((j, k));
                }
            }
        }
        out
    }

    pub fn nnz(&self) -> usize {
        self.values.entries().iter().filter(|v| **v != 0.0).count()
    }

    /// Number of covariates used by at least one response.
    pub fn active_covariates(&self) -> usize {
        (0..self.p())
            .filter(|&j| (0..self.q()).any(|k| self.values.get(j, k) != 0.0))
            .count()
    }
}

/// q x q matrix of conditional-regression coefficients; entry (s, k) is the
/// coefficient of response s in the regression for response k. The diagonal
/// is structurally zero.
#[derive(Debug, Clone)]
pub struct GammaMatrix {
    values: DenseMatrix,
}

impl GammaMatrix {
    pub fn new(values: DenseMatrix) -> Result<Self> {
        if values.rows() != values.cols() {
            return Err(Error::Dimension(format!(
                "gamma matrix must be square, got {}x{}",
                values.rows(),
                values.cols()
            )));
        }
        for k in 0..values.rows() {
            if values.get(k, k) != 0.0 {
                return Err(Error::Parameter(format!(
                    "gamma matrix must have a zero diagonal, entry ({k}, {k}) is {}",
                    values.get(k, k)
                )));
            }
        }
        Ok(GammaMatrix { values })
    }

    pub fn zeros(q: usize) -> Self {
        GammaMatrix {
            values: DenseMatrix::zeros(q, q),
        }
    }

    #[inline]
    pub fn q(&self) -> usize {
        self.values.rows()
    }

    #[inline]
    pub fn get(&self, s: usize, k: usize) -> f64 {
        self.values.get(s, k)
    }

    #[inline]
    pub fn values(&self) -> &DenseMatrix {
        &self.values
    }

    /// Writes column k from a compacted coefficient vector of length q-1
    /// (response k itself skipped).
    pub(crate) fn set_column_compact(&mut self, k: usize, coef: &[f64]) {
        debug_assert_eq!(coef.len(), self.q() - 1);
        let mut idx = 0;
        for s in 0..self.q() {
            if s == k {
                continue;
            }
            self.values.set(s, k, coef[idx]);
            idx += 1;
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.entries().iter().filter(|v| **v != 0.0).count()
    }
}

/// Symmetric signed support of the response precision matrix. `signs` holds
/// -1/0/+1 per entry with +1 on the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionPattern {
    q: usize,
    signs: Vec<i8>,
    magnitudes: Option<DenseMatrix>,
}

impl PrecisionPattern {
    pub fn diagonal(q: usize) -> Self {
        let mut signs = vec![0i8; q * q];
        for k in 0..q {
            signs[k * q + k] = 1;
        }
        PrecisionPattern {
            q,
            signs,
            magnitudes: None,
        }
    }

    pub fn from_edges(q: usize, edges: &[(usize, usize, i8)]) -> Result<Self> {
        let mut pat = Self::diagonal(q);
        for &(a, b, sign) in edges {
            if a >= q || b >= q || a == b {
                return Err(Error::Parameter(format!(
                    "invalid edge ({a}, {b}) for {q} responses"
                )));
            }
            if sign != 1 && sign != -1 {
                return Err(Error::Parameter(format!("edge sign must be +-1, got {sign}")));
            }
            pat.signs[a * q + b] = sign;
            pat.signs[b * q + a] = sign;
        }
        Ok(pat)
    }

    #[inline]
    pub fn q(&self) -> usize {
        self.q
    }

    #[inline]
    pub fn sign(&self, s: usize, k: usize) -> i8 {
        self.signs[s * self.q + k]
    }

    /// Undirected edges as (s, k, sign) with s < k.
    pub fn edges(&self) -> Vec<(usize, usize, i8)> {
        let mut out = Vec::new();
        for s in 0..self.q {
            for k in (s + 1)..self.q {
                let v = self.sign(s, k);
                if v != 0 {
                    out.push((s, k, v));
                }
            }
        }
        out
    }

    /// Off-diagonal support as ordered pairs (both directions).
    pub fn support_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for s in 0..self.q {
            for k in 0..self.q {
                if s != k && self.sign(s, k) != 0 {
                    out.push((s, k));
                }
            }
        }
        out
    }

    pub fn magnitudes(&self) -> Option<&DenseMatrix> {
        self.magnitudes.as_ref()
    }

    pub fn with_magnitudes(mut self, magnitudes: DenseMatrix) -> Self {
        self.magnitudes = Some(magnitudes);
        self
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.q).all(|s| (0..self.q).all(|k| self.sign(s, k) == self.sign(k, s)))
    }
}

/// How the two directed estimates of an edge are combined into presence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymmetrizeRule {
    /// Edge present iff either directed coefficient is nonzero (default).
    Or,
    /// Edge present iff both directed coefficients are nonzero.
    And,
}

/// What to do when the two directed estimates disagree in sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignConflictPolicy {
    /// Take the sign of the larger-magnitude coefficient (default).
    Magnitude,
    /// Fail, listing the conflicting pairs.
    Strict,
}

/// First-stage estimates: separate Lasso per response, one column each for
/// the covariate regression and the response-on-other-responses regression,
/// plus the penalty levels that produced them.
#[derive(Debug, Clone)]
pub struct InitialFit {
    pub b0: CoefMatrix,
    pub gamma0: GammaMatrix,
    /// Penalty level used for each response's covariate regression.
    pub lambda_b: Vec<f64>,
    /// Penalty level used for each response's neighborhood regression.
    pub lambda_gamma: Vec<f64>,
}

/// Adaptive penalty weights: reciprocals of the initial estimates, infinite
/// where the initial estimate is zero (hard exclusion downstream).
#[derive(Debug, Clone)]
pub struct AdaptiveWeights {
    p: usize,
    q: usize,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl AdaptiveWeights {
    #[inline]
    pub fn u(&self, j: usize, k: usize) -> f64 {
        self.u[j * self.q + k]
    }

    #[inline]
    pub fn v(&self, s: usize, k: usize) -> f64 {
        self.v[s * self.q + k]
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }
}

/// Output of the conditional-regression stage.
#[derive(Debug, Clone)]
pub struct McrFit {
    pub b_hat: CoefMatrix,
    pub gamma_hat: GammaMatrix,
    /// Per-response residual sum of squares divided by n.
    pub residual_variances: Vec<f64>,
    /// Worst stationarity violation over all per-response solves.
    pub max_kkt_violation: f64,
}

fn check_xy(x: &DenseMatrix, y: &DenseMatrix) -> Result<()> {
    if x.rows() != y.rows() {
        return Err(Error::Dimension(format!(
            "x has {} rows but y has {}",
            x.rows(),
            y.rows()
        )));
    }
    Ok(())
}

/// Separate unweighted Lasso fits at a single penalty level: each response
/// on the covariates (for `b0`) and on the remaining responses (for
/// `gamma0`). Both matrices seed the adaptive weights.
pub fn fit_initial_separate(
    x: &DenseMatrix,
    y: &DenseMatrix,
    lambda_init: f64,
    cfg: &SolverConfig,
) -> Result<InitialFit> {
    check_xy(x, y)?;
    if !(lambda_init >= 0.0) {
        return Err(Error::Parameter(format!(
            "lambda_init must be >= 0, got {lambda_init}"
        )));
    }
    let p = x.cols();
    let q = y.cols();

    let per_k: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..q)
        .into_par_iter()
        .map(|k| {
            let yk = y.column(k);
            let ws_b = CdWorkspace::from_filler(yk.clone(), p, |j, out| {
                for (i, v) in out.iter_mut().enumerate() {
                    *v = x.get(i, j);
                }
            });
            let thr_b = vec![0.5 * lambda_init; p];
            let sol_b = ws_b.solve(&thr_b, None, cfg).map_err(|e| Error::ResponseFit {
                response: k,
                stage: "initial covariate regression",
                source: Box::new(e),
            })?;

            let coef_g = if q > 1 {
                let others: Vec<usize> = (0..q).filter(|s| *s != k).collect();
                let ws_g = CdWorkspace::from_filler(yk, q - 1, |j, out| {
                    let s = others[j];
                    for (i, v) in out.iter_mut().enumerate() {
                        *v = y.get(i, s);
                    }
                });
                let thr_g = vec![0.5 * lambda_init; q - 1];
                let sol_g = ws_g.solve(&thr_g, None, cfg).map_err(|e| Error::ResponseFit {
                    response: k,
                    stage: "initial neighborhood regression",
                    source: Box::new(e),
                })?;
                sol_g.coef
            } else {
                Vec::new()
            };
            Ok((sol_b.coef, coef_g))
        })
        .collect();

    let mut b0 = DenseMatrix::zeros(p, q);
    let mut gamma0 = GammaMatrix::zeros(q);
    for (k, res) in per_k.into_iter().enumerate() {
        let (coef_b, coef_g) = res?;
        for (j, v) in coef_b.iter().enumerate() {
            b0.set(j, k, *v);
        }
        if q > 1 {
            gamma0.set_column_compact(k, &coef_g);
        }
    }
    Ok(InitialFit {
        b0: CoefMatrix::new(b0),
        gamma0,
        lambda_b: vec![lambda_init; q],
        lambda_gamma: vec![lambda_init; q],
    })
}

/// Reciprocal-magnitude weights from the initial estimates; zero initial
/// estimates give infinite weights.
pub fn compute_adaptive_weights(init: &InitialFit) -> AdaptiveWeights {
    let p = init.b0.p();
    let q = init.b0.q();
    let mut u = vec![f64::INFINITY; p * q];
    for j in 0..p {
        for k in 0..q {
            let b = init.b0.get(j, k);
            if b != 0.0 {
                u[j * q + k] = 1.0 / b.abs();
            }
        }
    }
    let mut v = vec![f64::INFINITY; q * q];
    for s in 0..q {
        for k in 0..q {
            if s == k {
                continue; // diagonal unused
            }
            let g = init.gamma0.get(s, k);
            if g != 0.0 {
                v[s * q + k] = 1.0 / g.abs();
            }
        }
    }
    AdaptiveWeights { p, q, u, v }
}

/// Residualized responses: Y - X * B0, the surrogate noise block whose
/// columns augment the design of every conditional regression.
pub fn residualized_responses(
    x: &DenseMatrix,
    y: &DenseMatrix,
    b0: &CoefMatrix,
) -> Result<DenseMatrix> {
    check_xy(x, y)?;
    if b0.p() != x.cols() || b0.q() != y.cols() {
        return Err(Error::Dimension(format!(
            "initial coefficients are {}x{}, expected {}x{}",
            b0.p(),
            b0.q(),
            x.cols(),
            y.cols()
        )));
    }
    let fitted = x.matmul(b0.values())?;
    let mut out = y.clone();
    let data = out.entries_mut();
    for (d, f) in data.iter_mut().zip(fitted.entries()) {
        *d -= f;
    }
    Ok(out)
}

/// Augmented design for response k: the covariates followed by the
/// residualized other responses, in index order with column k skipped.
pub fn build_augmented_design(
    x: &DenseMatrix,
    y: &DenseMatrix,
    b0: &CoefMatrix,
    k: usize,
) -> Result<DenseMatrix> {
    let q = y.cols();
    if k >= q {
        return Err(Error::Dimension(format!(
            "response index {k} out of range for {q} responses"
        )));
    }
    let resid = residualized_responses(x, y, b0)?;
    let n = x.rows();
    let p = x.cols();
    let mut out = DenseMatrix::zeros(n, p + q - 1);
    for i in 0..n {
        for j in 0..p {
            out.set(i, j, x.get(i, j));
        }
        let mut c = p;
        for s in 0..q {
            if s == k {
                continue;
            }
            out.set(i, c, resid.get(i, s));
            c += 1;
        }
    }
    Ok(out)
}

/// Workspace for response k over the augmented design, built without
/// materializing the row-major augmented matrix.
pub(crate) fn response_workspace(
    x: &DenseMatrix,
    resid: &DenseMatrix,
    y: &DenseMatrix,
    k: usize,
) -> CdWorkspace {
    let p = x.cols();
    let q = y.cols();
    let others: Vec<usize> = (0..q).filter(|s| *s != k).collect();
    CdWorkspace::from_filler(y.column(k), p + q - 1, |j, out| {
        if j < p {
            for (i, v) in out.iter_mut().enumerate() {
                *v = x.get(i, j);
            }
        } else {
            let s = others[j - p];
            for (i, v) in out.iter_mut().enumerate() {
                *v = resid.get(i, s);
            }
        }
    })
}

/// Per-coordinate soft thresholds for response k at the given penalty pair:
/// lambda1 scales the covariate block, lambda2 the response block.
pub(crate) fn response_thresholds(
    weights: &AdaptiveWeights,
    k: usize,
    lambda1: f64,
    lambda2: f64,
) -> Vec<f64> {
    let p = weights.p();
    let q = weights.q();
    let mut thr = Vec::with_capacity(p + q - 1);
    for j in 0..p {
        let u = weights.u(j, k);
        thr.push(if !u.is_finite() {
            f64::INFINITY
        } else {
            0.5 * lambda1 * u
        });
    }
    for s in 0..q {
        if s == k {
            continue;
        }
        let v = weights.v(s, k);
        thr.push(if !v.is_finite() {
            f64::INFINITY
        } else {
            0.5 * lambda2 * v
        });
    }
    thr
}

/// Splits a stacked coefficient vector for response k into its covariate
/// part and compacted response part.
fn split_coef(coef: &[f64], p: usize) -> (&[f64], &[f64]) {
    (&coef[..p], &coef[p..])
}

/// Solves the conditional regression for every response at a fixed penalty
/// pair. The q sub-fits are independent given the initial stage and run in
/// parallel; results do not depend on the schedule.
pub fn fit_mcr(
    x: &DenseMatrix,
    y: &DenseMatrix,
    lambda1: f64,
    lambda2: f64,
    init: &InitialFit,
    cfg: &SolverConfig,
) -> Result<McrFit> {
    check_xy(x, y)?;
    if !(lambda1 >= 0.0) || !(lambda2 >= 0.0) {
        return Err(Error::Parameter(
            "penalty levels must be nonnegative".into(),
        ));
    }
    let p = x.cols();
    let q = y.cols();
    let n = x.rows() as f64;
    let weights = compute_adaptive_weights(init);
    let resid = residualized_responses(x, y, &init.b0)?;

    let per_k: Vec<Result<(Vec<f64>, f64, f64)>> = (0..q)
        .into_par_iter()
        .map(|k| {
            let ws = response_workspace(x, &resid, y, k);
            let thr = response_thresholds(&weights, k, lambda1, lambda2);
            let sol = ws.solve(&thr, None, cfg).map_err(|e| Error::ResponseFit {
                response: k,
                stage: "conditional regression",
                source: Box::new(e),
            })?;
            Ok((sol.coef, sol.rss, sol.max_kkt))
        })
        .collect();

    let mut b_hat = DenseMatrix::zeros(p, q);
    let mut gamma_hat = GammaMatrix::zeros(q);
    let mut residual_variances = vec![0.0; q];
    let mut max_kkt = 0.0f64;
    for (k, res) in per_k.into_iter().enumerate() {
        let (coef, rss, kkt) = res?;
        let (cb, cg) = split_coef(&coef, p);
        for (j, v) in cb.iter().enumerate() {
            b_hat.set(j, k, *v);
        }
        if q > 1 {
            gamma_hat.set_column_compact(k, cg);
        }
        residual_variances[k] = rss / n;
        max_kkt = max_kkt.max(kkt);
    }
    Ok(McrFit {
        b_hat: CoefMatrix::new(b_hat),
        gamma_hat,
        residual_variances,
        max_kkt_violation: max_kkt,
    })
}

/// Symmetrizes the directed conditional-regression supports into an
/// undirected signed pattern, resolving sign disagreements by magnitude.
pub fn symmetrize_pattern(gamma: &GammaMatrix, rule: SymmetrizeRule) -> PrecisionPattern {
    symmetrize_pattern_with(gamma, rule, SignConflictPolicy::Magnitude)
        .expect("magnitude policy cannot fail")
}

/// Symmetrization with an explicit sign-conflict policy. Edge signs are the
/// negated signs of the generating coefficients (the precision entry and the
/// conditional coefficient always have opposite signs).
pub fn symmetrize_pattern_with(
    gamma: &GammaMatrix,
    rule: SymmetrizeRule,
    policy: SignConflictPolicy,
) -> Result<PrecisionPattern> {
    let q = gamma.q();
    let mut pat = PrecisionPattern::diagonal(q);
    let mut conflicts = Vec::new();
    for a in 0..q {
        for b in (a + 1)..q {
            let g_ab = gamma.get(a, b);
            let g_ba = gamma.get(b, a);
            let present = match rule {
                SymmetrizeRule::Or => g_ab != 0.0 || g_ba != 0.0,
                SymmetrizeRule::And => g_ab != 0.0 && g_ba != 0.0,
            };
            if !present {
                continue;
            }
            let sign = match (g_ab != 0.0, g_ba != 0.0) {
                (true, false) => -g_ab.signum(),
                (false, true) => -g_ba.signum(),
                (true, true) => {
                    if g_ab.signum() == g_ba.signum() {
                        -g_ab.signum()
                    } else {
                        match policy {
                            SignConflictPolicy::Magnitude => {
                                if g_ab.abs() >= g_ba.abs() {
                                    -g_ab.signum()
                                } else {
                                    -g_ba.signum()
                                }
                            }
                            SignConflictPolicy::Strict => {
                                conflicts.push((a, b));
                                continue;
                            }
                        }
                    }
                }
                (false, false) => unreachable!(),
            };
            let s = sign as i8;
            pat.signs[a * q + b] = s;
            pat.signs[b * q + a] = s;
        }
    }
    if !conflicts.is_empty() {
        return Err(Error::SignConflict { pairs: conflicts });
    }
    Ok(pat)
}

/// Rebuilds precision-matrix magnitudes from the conditional coefficients
/// and residual variances: the diagonal is the reciprocal residual variance,
/// off-diagonals are -g_sk / residual_variance_k averaged with their mirror,
/// then zeroed off the pattern.
pub fn reconstruct_precision(
    gamma: &GammaMatrix,
    residual_variances: &[f64],
    pattern: &PrecisionPattern,
) -> Result<DenseMatrix> {
    let q = gamma.q();
    if residual_variances.len() != q || pattern.q() != q {
        return Err(Error::Dimension(
            "gamma, residual variances, and pattern sizes disagree".into(),
        ));
    }
    if let Some(k) = residual_variances.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::Parameter(format!(
            "residual variance for response {k} must be positive, got {}",
            residual_variances[k]
        )));
    }
    let omega_diag: Vec<f64> = residual_variances.iter().map(|v| 1.0 / v).collect();
    let mut omega = DenseMatrix::zeros(q, q);
    for k in 0..q {
        omega.set(k, k, omega_diag[k]);
    }
    for s in 0..q {
        for k in (s + 1)..q {
            if pattern.sign(s, k) == 0 {
                continue;
            }
            let raw_sk = -gamma.get(s, k) * omega_diag[k];
            let raw_ks = -gamma.get(k, s) * omega_diag[s];
            let v = 0.5 * (raw_sk + raw_ks);
            omega.set(s, k, v);
            omega.set(k, s, v);
        }
    }
    Ok(omega)
}
