//! Performance measures: estimation-error norms, support-recovery scores
//! (symmetric difference, specificity, sensitivity, Matthews correlation),
//! predictive square error, and the standardized-estimate scale used by the
//! normality diagnostic.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{invert_spd, DenseMatrix};
use crate::mcr::{CoefMatrix, PrecisionPattern};
use crate::simgen::GroundTruth;

/// Matrix norms of the estimation error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimationReport {
    /// Frobenius norm of the difference.
    pub frob: f64,
    /// Maximum column absolute sum.
    pub one_norm: f64,
    /// Maximum row absolute sum.
    pub inf_norm: f64,
}

/// Confusion counts and the derived selection scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SelectionReport {
    /// Symmetric-difference cardinality over the reporting denominator.
    pub dist: f64,
    pub spe: f64,
    pub sen: f64,
    pub mcc: f64,
    pub true_pos: usize,
    pub true_neg: usize,
    pub false_pos: usize,
    pub false_neg: usize,
}

/// Norms of `b_hat - b_star`.
pub fn estimation_errors(b_hat: &CoefMatrix, b_star: &CoefMatrix) -> Result<EstimationReport> {
    if b_hat.p() != b_star.p() || b_hat.q() != b_star.q() {
        return Err(Error::Dimension(format!(
            "coefficient matrices are {}x{} and {}x{}",
            b_hat.p(),
            b_hat.q(),
            b_star.p(),
            b_star.q()
        )));
    }
    let mut delta = b_hat.values().clone();
    for (d, t) in delta.entries_mut().iter_mut().zip(b_star.values().entries()) {
        *d -= t;
    }
    Ok(EstimationReport {
        frob: delta.frobenius_norm(),
        one_norm: delta.one_norm(),
        inf_norm: delta.inf_norm(),
    })
}

fn confusion(
    est: &BTreeSet<(usize, usize)>,
    truth: &BTreeSet<(usize, usize)>,
    classified: usize,
    dist_denominator: usize,
) -> Result<SelectionReport> {
    if classified == 0 || dist_denominator == 0 {
        return Err(Error::Parameter("selection universe is empty".into()));
    }
    let tp = est.intersection(truth).count();
    let fp = est.len() - tp;
    let fn_count = truth.len() - tp;
    if tp + fp + fn_count > classified {
        return Err(Error::Parameter(
            "supports exceed the comparison universe".into(),
        ));
    }
    let tn = classified - tp - fp - fn_count;

    let dist = (fp + fn_count) as f64 / dist_denominator as f64;
    let spe = if tn + fp == 0 {
        1.0
    } else {
        tn as f64 / (tn + fp) as f64
    };
    let sen = if tp + fn_count == 0 {
        1.0
    } else {
        tp as f64 / (tp + fn_count) as f64
    };
    let (tp_f, tn_f, fp_f, fn_f) = (tp as f64, tn as f64, fp as f64, fn_count as f64);
    let denom = (tp_f + fn_f) * (tn_f + fp_f) * (tp_f + fp_f) * (tn_f + fn_f);
    let mcc = if denom == 0.0 {
        0.0
    } else {
        (tp_f * tn_f - fp_f * fn_f) / denom.sqrt()
    };
    Ok(SelectionReport {
        dist,
        spe,
        sen,
        mcc,
        true_pos: tp,
        true_neg: tn,
        false_pos: fp,
        false_neg: fn_count,
    })
}

/// Support-recovery scores over a universe of `universe` candidate cells;
/// the same count is the symmetric-difference denominator.
pub fn selection_metrics(
    est_support: &[(usize, usize)],
    true_support: &[(usize, usize)],
    universe: usize,
) -> Result<SelectionReport> {
    let est: BTreeSet<_> = est_support.iter().copied().collect();
    let truth: BTreeSet<_> = true_support.iter().copied().collect();
    confusion(&est, &truth, universe, universe)
}

/// Off-diagonal nonzero entries of a square matrix as ordered pairs.
pub fn offdiagonal_support(m: &DenseMatrix) -> Vec<(usize, usize)> {
    let q = m.rows();
    let mut out = Vec::new();
    for s in 0..q {
        for k in 0..q {
            if s != k && m.get(s, k) != 0.0 {
                out.push((s, k));
            }
        }
    }
    out
}

/// Selection scores for an estimated precision pattern against the true
/// precision matrix. Ordered off-diagonal pairs are classified (the diagonal
/// is structural and excluded from the confusion counts); the
/// symmetric-difference denominator is q² to match the reporting convention.
pub fn selection_metrics_omega(
    pattern: &PrecisionPattern,
    omega_star: &DenseMatrix,
) -> Result<SelectionReport> {
    let q = pattern.q();
    if omega_star.rows() != q || omega_star.cols() != q {
        return Err(Error::Dimension(format!(
            "pattern is over {q} responses but the precision matrix is {}x{}",
            omega_star.rows(),
            omega_star.cols()
        )));
    }
    let est: BTreeSet<_> = pattern.support_pairs().into_iter().collect();
    let truth: BTreeSet<_> = offdiagonal_support(omega_star).into_iter().collect();
    confusion(&est, &truth, q * q - q, q * q)
}

/// Mean squared prediction error per held-out observation. The test dataset
/// must already be centered with the training means; predictions are then
/// `x_i · b_hat` in the centered frame.
pub fn predictive_square_error(b_hat: &CoefMatrix, test: &Dataset) -> Result<f64> {
    if test.p() != b_hat.p() || test.q() != b_hat.q() {
        return Err(Error::Dimension(format!(
            "coefficients are {}x{} but the test data is {}x{}",
            b_hat.p(),
            b_hat.q(),
            test.p(),
            test.q()
        )));
    }
    let n = test.n();
    if n == 0 {
        return Err(Error::Parameter("test set is empty".into()));
    }
    let fitted = test.x.matmul(b_hat.values())?;
    let mut total = 0.0;
    for i in 0..n {
        for k in 0..test.q() {
            let e = test.y.get(i, k) - fitted.get(i, k);
            total += e * e;
        }
    }
    Ok(total / n as f64)
}

/// Active set of response k in the stacked (coefficients, neighbors)
/// parameterization: covariate indices with nonzero true coefficients,
/// then p + s for responses s with nonzero true precision entries.
pub fn active_set(truth: &GroundTruth, k: usize) -> Vec<usize> {
    let p = truth.b_star.p();
    let q = truth.b_star.q();
    let mut idx = Vec::new();
    for j in 0..p {
        if truth.b_star.get(j, k) != 0.0 {
            idx.push(j);
        }
    }
    for s in 0..q {
        if s != k && truth.omega_star.get(s, k) != 0.0 {
            idx.push(p + s);
        }
    }
    idx
}

/// Conditional noise variance of response k given the others:
/// sigma_kk - Sigma_{-k,k}ᵀ (Sigma_{-k,-k})⁻¹ Sigma_{-k,k}.
pub fn conditional_noise_variance(sigma_star: &DenseMatrix, k: usize) -> Result<f64> {
    let q = sigma_star.rows();
    if k >= q {
        return Err(Error::Dimension(format!(
            "response index {k} out of range for {q} responses"
        )));
    }
    if q == 1 {
        return Ok(sigma_star.get(0, 0));
    }
    let others: Vec<usize> = (0..q).filter(|s| *s != k).collect();
    let sub = DenseMatrix::from_fn(q - 1, q - 1, |a, b| sigma_star.get(others[a], others[b]));
    let inv = invert_spd(&sub)?;
    let col: Vec<f64> = others.iter().map(|&s| sigma_star.get(s, k)).collect();
    let mut quad = 0.0;
    for a in 0..q - 1 {
        for b in 0..q - 1 {
            quad += col[a] * inv.get(a, b) * col[b];
        }
    }
    Ok(sigma_star.get(k, k) - quad)
}

/// Asymptotic scale of the standardized estimate for response k:
/// sqrt(conditional variance × alphaᵀ M⁻¹ alpha) over the principal
/// submatrix of M = blockdiag(XᵀX / n, Sigma*) at the true active set.
/// `alpha` must be a unit vector of the active-set length.
pub fn asymptotic_se(
    truth: &GroundTruth,
    x: &DenseMatrix,
    k: usize,
    alpha: &[f64],
) -> Result<f64> {
    let p = truth.b_star.p();
    let idx = active_set(truth, k);
    if idx.is_empty() {
        return Err(Error::Parameter(format!(
            "active set of response {k} is empty"
        )));
    }
    if alpha.len() != idx.len() {
        return Err(Error::Dimension(format!(
            "alpha has {} entries for an active set of {}",
            alpha.len(),
            idx.len()
        )));
    }
    let norm: f64 = alpha.iter().map(|a| a * a).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::Parameter(format!(
            "alpha must have unit length, got {norm}"
        )));
    }
    let n = x.rows() as f64;
    let sub = DenseMatrix::from_fn(idx.len(), idx.len(), |a, b| {
        let (ia, ib) = (idx[a], idx[b]);
        match (ia < p, ib < p) {
            (true, true) => {
                let mut dot = 0.0;
                for i in 0..x.rows() {
                    dot += x.get(i, ia) * x.get(i, ib);
                }
                dot / n
            }
            (false, false) => truth.sigma_star.get(ia - p, ib - p),
            _ => 0.0,
        }
    });
    let inv = invert_spd(&sub)?;
    let mut quad = 0.0;
    for a in 0..idx.len() {
        for b in 0..idx.len() {
            quad += alpha[a] * inv.get(a, b) * alpha[b];
        }
    }
    let cond_var = conditional_noise_variance(&truth.sigma_star, k)?;
    Ok((cond_var * quad).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cholesky_lower;

    fn coef(p: usize, q: usize, data: &[f64]) -> CoefMatrix {
        CoefMatrix::new(DenseMatrix::new(p, q, data.to_vec()).unwrap())
    }

    #[test]
    fn estimation_errors_hand_cases() {
        let a = coef(2, 2, &[1.0, -1.0, 0.0, 0.0]);
        let zero = CoefMatrix::zeros(2, 2);
        let r = estimation_errors(&a, &zero).unwrap();
        assert!((r.frob - 2.0_f64.sqrt()).abs() < 1e-15);
        assert_eq!(r.one_norm, 1.0);
        assert_eq!(r.inf_norm, 2.0);

        let same = estimation_errors(&a, &a).unwrap();
        assert_eq!((same.frob, same.one_norm, same.inf_norm), (0.0, 0.0, 0.0));

        let single = coef(3, 2, &[0.0, 0.0, 0.0, 0.0, 3.0, 0.0]);
        let r = estimation_errors(&single, &CoefMatrix::zeros(3, 2)).unwrap();
        assert_eq!((r.frob, r.one_norm, r.inf_norm), (3.0, 3.0, 3.0));
    }

    #[test]
    fn selection_perfect_agreement() {
        let support = vec![(0, 0), (1, 2)];
        let r = selection_metrics(&support, &support, 6).unwrap();
        assert_eq!(r.dist, 0.0);
        assert_eq!((r.spe, r.sen, r.mcc), (1.0, 1.0, 1.0));
        assert_eq!(r.true_pos + r.true_neg + r.false_pos + r.false_neg, 6);
    }

    #[test]
    fn selection_empty_estimate_conventions() {
        let truth = vec![(0, 0), (0, 1)];
        let r = selection_metrics(&[], &truth, 4).unwrap();
        assert_eq!(r.sen, 0.0);
        assert_eq!(r.false_pos, 0);
        assert_eq!(r.spe, 1.0);
        assert_eq!(r.mcc, 0.0);
    }

    #[test]
    fn selection_complement_gives_dist_one() {
        let universe: Vec<(usize, usize)> = (0..2).flat_map(|a| (0..3).map(move |b| (a, b))).collect();
        let truth = vec![(0, 0), (1, 1)];
        let est: Vec<_> = universe
            .iter()
            .copied()
            .filter(|c| !truth.contains(c))
            .collect();
        let r = selection_metrics(&est, &truth, 6).unwrap();
        assert_eq!(r.dist, 1.0);
        // Brute-force confusion counting over the universe.
        let mut tp = 0;
        let mut tn = 0;
        let mut fp = 0;
        let mut fn_count = 0;
        for c in &universe {
            match (est.contains(c), truth.contains(c)) {
                (true, true) => tp += 1,
                (false, false) => tn += 1,
                (true, false) => fp += 1,
                (false, true) => fn_count += 1,
            }
        }
        assert_eq!(
            (r.true_pos, r.true_neg, r.false_pos, r.false_neg),
            (tp, tn, fp, fn_count)
        );
        let (tp, tn, fp, fn_f) = (tp as f64, tn as f64, fp as f64, fn_count as f64);
        let mcc = (tp * tn - fp * fn_f)
            / ((tp + fn_f) * (tn + fp) * (tp + fp) * (tn + fn_f)).sqrt();
        assert!((r.mcc - mcc).abs() < 1e-15);
    }

    #[test]
    fn dist_is_fp_plus_fn_over_universe() {
        let est = vec![(0, 1), (1, 0)];
        let truth = vec![(0, 1), (1, 1)];
        let r = selection_metrics(&est, &truth, 9).unwrap();
        assert_eq!(r.dist, (r.false_pos + r.false_neg) as f64 / 9.0);
    }

    #[test]
    fn omega_universe_excludes_diagonal_but_keeps_q_squared_denominator() {
        let mut omega = DenseMatrix::identity(3);
        omega.set(0, 1, 0.4);
        omega.set(1, 0, 0.4);
        let pattern = PrecisionPattern::from_edges(3, &[(0, 1, -1)]).unwrap();
        let r = selection_metrics_omega(&pattern, &omega).unwrap();
        assert_eq!(r.true_pos, 2, "both ordered pairs counted");
        assert_eq!(r.true_neg, 3 * 3 - 3 - 2);
        assert_eq!(r.dist, 0.0);
        assert_eq!((r.spe, r.sen), (1.0, 1.0));

        // Remove the edge: two false negatives over a q^2 denominator.
        let empty = PrecisionPattern::diagonal(3);
        let r = selection_metrics_omega(&empty, &omega).unwrap();
        assert_eq!(r.false_neg, 2);
        assert_eq!(r.dist, 2.0 / 9.0);
    }

    #[test]
    fn pse_zero_for_exact_coefficients_and_energy_for_zero() {
        let x_raw = DenseMatrix::new(4, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let b = coef(1, 2, &[1.0, -2.0]);
        let y_raw = x_raw.matmul(b.values()).unwrap();
        let train = Dataset::from_raw(&x_raw, &y_raw).unwrap();
        let test = Dataset::from_raw_with_means(
            &x_raw,
            &y_raw,
            &train.x_means,
            &train.y_means,
        )
        .unwrap();
        let pse = predictive_square_error(&b, &test).unwrap();
        assert!(pse < 1e-24);

        let zero = CoefMatrix::zeros(1, 2);
        let pse0 = predictive_square_error(&zero, &test).unwrap();
        let mut expect = 0.0;
        for i in 0..test.n() {
            for k in 0..2 {
                expect += test.y.get(i, k) * test.y.get(i, k);
            }
        }
        expect /= test.n() as f64;
        assert!((pse0 - expect).abs() < 1e-12);
    }

    #[test]
    fn conditional_variance_matches_precision_reciprocal() {
        // The conditional variance equals 1 / omega_kk for any SPD precision.
        let mut omega = DenseMatrix::identity(4);
        omega.set(0, 1, 0.3);
        omega.set(1, 0, 0.3);
        omega.set(2, 3, -0.25);
        omega.set(3, 2, -0.25);
        omega.set(1, 2, 0.15);
        omega.set(2, 1, 0.15);
        let sigma = invert_spd(&omega).unwrap();
        for k in 0..4 {
            let v = conditional_noise_variance(&sigma, k).unwrap();
            assert!(
                (v - 1.0 / omega.get(k, k)).abs() < 1e-10,
                "response {k}: {v} vs {}",
                1.0 / omega.get(k, k)
            );
        }
    }

    #[test]
    fn asymptotic_se_identity_blocks() {
        // Orthonormal-column design (after the 1/n scaling) and identity
        // covariance: the scale is exactly 1 for any singleton active set.
        let n = 8;
        let mut x = DenseMatrix::zeros(n, 2);
        for i in 0..n {
            x.set(i, 0, if i % 2 == 0 { 1.0 } else { -1.0 });
            x.set(i, 1, if (i / 2) % 2 == 0 { 1.0 } else { -1.0 });
        }
        // Columns have squared norm n, so XᵀX / n = I.
        let b = coef(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let truth = GroundTruth {
            b_star: b,
            omega_star: DenseMatrix::identity(2),
            sigma_star: DenseMatrix::identity(2),
            v_min: 1.0,
        };
        let s = asymptotic_se(&truth, &x, 0, &[1.0]).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
        // Diagonal covariance: no conditioning effect.
        assert_eq!(
            conditional_noise_variance(&truth.sigma_star, 0).unwrap(),
            1.0
        );
    }

    #[test]
    fn asymptotic_se_validates_alpha() {
        let truth = GroundTruth {
            b_star: coef(1, 2, &[1.0, 0.0]),
            omega_star: DenseMatrix::identity(2),
            sigma_star: DenseMatrix::identity(2),
            v_min: 1.0,
        };
        let x = DenseMatrix::new(3, 1, vec![1.0, -1.0, 0.5]).unwrap();
        assert!(asymptotic_se(&truth, &x, 0, &[0.5]).is_err());
        assert!(asymptotic_se(&truth, &x, 0, &[1.0, 0.0]).is_err());
        // Empty active set for response 1.
        assert!(asymptotic_se(&truth, &x, 1, &[1.0]).is_err());
    }

    #[test]
    fn generated_truth_conditional_variance_is_precision_reciprocal() {
        use crate::simgen::{gen_truth, ModelSpec};
        let spec = ModelSpec {
            p: 3,
            q: 4,
            n: 10,
            b_nonzero_expect: 1.5,
            omega_nonzero_expect: 2.0,
            seed: 77,
        };
        let truth = gen_truth(&spec).unwrap();
        let _ = cholesky_lower(&truth.sigma_star).unwrap();
        for k in 0..4 {
            let v = conditional_noise_variance(&truth.sigma_star, k).unwrap();
            assert!((v - 1.0 / truth.omega_star.get(k, k)).abs() < 1e-9);
        }
    }
}
