//! Dense linear-algebra helpers shared by the oracles and estimators.
//!
//! Pseudo-inverses truncate singular values below `PINV_RTOL * sigma_max`,
//! numerical ranks count singular values above `RANK_RTOL * sigma_max`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative singular-value cutoff for Moore-Penrose inverses.
pub const PINV_RTOL: f64 = 1e-10;
/// Relative singular-value cutoff for numerical ranks.
pub const RANK_RTOL: f64 = 1e-8;
/// Maximum tolerated residual of a dense linear solve.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-8;

/// Moore-Penrose pseudo-inverse with relative truncation at `PINV_RTOL`.
pub fn pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    pinv_with_tol(m, PINV_RTOL)
}

pub fn pinv_with_tol(m: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return DMatrix::zeros(cols, rows);
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let sigma_max = svd.singular_values.max();
    if !(sigma_max > 0.0) {
        return DMatrix::zeros(cols, rows);
    }
    let cutoff = rtol * sigma_max;
    let mut out = DMatrix::zeros(cols, rows);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff {
            let vk = v_t.row(k).transpose();
            let uk = u.column(k);
            out += (vk * uk.transpose()) / s;
        }
    }
    out
}

/// Solves `a x = b` by partial-pivot LU and verifies the residual.
pub fn solve_checked(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if a.nrows() != a.ncols() || a.nrows() != b.len() {
        return Err(Error::argument(format!(
            "solve: shape mismatch {}x{} vs {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    let x = a
        .clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::numerical("singular linear system"))?;
    let residual = (a * &x - b).amax();
    let scale = 1.0 + b.amax();
    if !residual.is_finite() || residual > SOLVE_RESIDUAL_TOL * scale {
        return Err(Error::Numerical {
            message: "linear solve residual too large".into(),
            residual: Some(residual),
        });
    }
    Ok(x)
}

/// Singular values in decreasing order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RankInfo {
    pub rank: usize,
    pub sigma_max: f64,
    /// Smallest singular value over `min(rows, cols)` values.
    pub sigma_min: f64,
    /// Smallest singular value counted towards the rank.
    pub sigma_min_nonzero: f64,
}

/// Numerical rank at `rtol * sigma_max`.
pub fn numerical_rank(m: &DMatrix<f64>, rtol: f64) -> RankInfo {
    let s = singular_values(m);
    let sigma_max = s.first().copied().unwrap_or(0.0);
    let sigma_min = s.last().copied().unwrap_or(0.0);
    let cutoff = rtol * sigma_max;
    let kept: Vec<f64> = s.iter().copied().filter(|&v| sigma_max > 0.0 && v > cutoff).collect();
    RankInfo {
        rank: kept.len(),
        sigma_max,
        sigma_min,
        sigma_min_nonzero: kept.last().copied().unwrap_or(0.0),
    }
}

/// `sup_x (x' num x) / (x' den x)` over `x` with `x' den x != 0`, for
/// symmetric PSD `num` and `den`.
///
/// The denominator kernel is projected out first. If `num` does not vanish
/// on that kernel the supremum is unbounded and `f64::INFINITY` is returned.
pub fn generalized_rayleigh_sup(num: &DMatrix<f64>, den: &DMatrix<f64>, rtol: f64) -> f64 {
    let n = den.nrows();
    if n == 0 {
        return 0.0;
    }
    let eig = SymmetricEigen::new(symmetrize(den));
    let lambda_max = eig.eigenvalues.iter().fold(0.0_f64, |m, &v| m.max(v));
    if lambda_max <= 0.0 {
        return if num.amax() > 0.0 { f64::INFINITY } else { 0.0 };
    }
    let cutoff = rtol * lambda_max;
    let range: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > cutoff).collect();
    let kernel: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] <= cutoff).collect();

    let num_scale = num.amax().max(f64::MIN_POSITIVE);
    if !kernel.is_empty() {
        let basis = eig.eigenvectors.select_columns(&kernel);
        let restricted = basis.transpose() * num * &basis;
        if restricted.amax() > rtol * num_scale {
            return f64::INFINITY;
        }
    }
    let basis = eig.eigenvectors.select_columns(&range);
    let mut whiten = basis.clone();
    for (j, &i) in range.iter().enumerate() {
        let scale = 1.0 / eig.eigenvalues[i].sqrt();
        whiten.column_mut(j).scale_mut(scale);
    }
    let reduced = whiten.transpose() * num * &whiten;
    let reduced_eig = SymmetricEigen::new(symmetrize(&reduced));
    reduced_eig
        .eigenvalues
        .iter()
        .fold(0.0_f64, |m, &v| m.max(v))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest asymmetry `|m_ij - m_ji|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).amax()
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &v| a.min(v))
}

/// Least-squares fit `y = a + b x`; returns `(a, b)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (my - slope * mx, slope)
}
