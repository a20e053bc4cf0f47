//! Dense linear algebra used throughout the crate.
//!
//! Matrices are `nalgebra` dynamic matrices. Tolerances are relative to the
//! magnitude of the input with an absolute floor of [`ABS_FLOOR`].

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Absolute floor applied to every relative tolerance.
pub const ABS_FLOOR: f64 = 1e-14;

/// Relative rank tolerance for factorizations.
pub const RANK_TOL: f64 = 1e-12;

const POWER_MAX_ITER: usize = 10_000;
const POWER_REL_TOL: f64 = 1e-12;

/// Largest dimension for which the spectral norm is taken from a dense
/// eigendecomposition of the smaller Gram matrix.
const DENSE_GRAM_LIMIT: usize = 400;

pub(crate) fn tol(scale: f64, rel: f64) -> f64 {
    (rel * scale).max(ABS_FLOOR)
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn all_finite(m: &Matrix) -> bool {
    m.iter().all(|x| x.is_finite())
}

/// Orthonormal basis for the column span of `columns`.
///
/// Modified Gram-Schmidt with one reorthogonalization pass, so the result
/// keeps the orientation of the input (positive diagonal in the implied `R`).
pub fn orthonormalize(columns: &Matrix) -> Result<Matrix> {
    if !all_finite(columns) {
        return Err(Error::BadData("non-finite matrix entry".into()));
    }
    let cols = columns.ncols();
    let largest = (0..cols)
        .map(|j| columns.column(j).norm())
        .fold(0.0_f64, f64::max);
    let threshold = tol(largest, RANK_TOL);

    let mut q = columns.clone();
    for j in 0..cols {
        for _pass in 0..2 {
            for k in 0..j {
                let proj = q.column(k).dot(&q.column(j));
                let qk = q.column(k).clone_owned();
                q.column_mut(j).axpy(-proj, &qk, 1.0);
            }
        }
        let norm = q.column(j).norm();
        if norm <= threshold {
            return Err(Error::RankDeficient { rank: j, cols });
        }
        q.column_mut(j).unscale_mut(norm);
    }
    Ok(q)
}

/// Thin Householder QR of a tall matrix, with a rank check on `R`.
struct ThinQr {
    q: Matrix,
    r: Matrix,
}

fn thin_qr(a: &Matrix) -> Result<ThinQr> {
    let (rows, cols) = a.shape();
    if rows < cols {
        return Err(Error::RankDeficient { rank: rows, cols });
    }
    let qr = a.clone().qr();
    let r = qr.r();
    let q = qr.q();
    let diag_max = r.diagonal().iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let threshold = tol(diag_max, RANK_TOL);
    let rank = r.diagonal().iter().filter(|x| x.abs() > threshold).count();
    if rank < cols {
        return Err(Error::RankDeficient { rank, cols });
    }
    Ok(ThinQr { q, r })
}

/// Least-squares solution of `A X = B` via orthogonal factorization.
pub fn lstsq_solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            actual: b.nrows(),
        });
    }
    let ThinQr { q, r } = thin_qr(a)?;
    let qtb = q.transpose() * b;
    r.solve_upper_triangular(&qtb)
        .ok_or(Error::RankDeficient { rank: 0, cols: a.ncols() })
}

/// Moore-Penrose left inverse `(AᵀA)⁻¹Aᵀ` of a tall full-rank matrix,
/// computed as `R⁻¹Qᵀ`.
pub fn left_pseudo_inverse(a: &Matrix) -> Result<Matrix> {
    let ThinQr { q, r } = thin_qr(a)?;
    r.solve_upper_triangular(&q.transpose())
        .ok_or(Error::RankDeficient { rank: 0, cols: a.ncols() })
}

/// Ratio of largest to smallest singular value. Infinite when singular.
pub fn condition_number(a: &Matrix) -> f64 {
    let small = if a.nrows() >= a.ncols() {
        a.clone().qr().r()
    } else {
        a.transpose().qr().r()
    };
    let sv = small.singular_values();
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Extreme eigenvalues of a symmetric matrix.
pub fn symmetric_eigen_bounds(s: &Matrix) -> (f64, f64) {
    let sym = (s + s.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// Largest singular value.
pub fn spectral_norm(a: &Matrix) -> Result<f64> {
    let scale = max_abs(a);
    if scale == 0.0 {
        return Ok(0.0);
    }
    // Rescale to keep the Gram matrix well inside floating-point range.
    let a_scaled = a / scale;
    let sigma = if a.nrows().min(a.ncols()) <= DENSE_GRAM_LIMIT {
        let gram = if a.nrows() <= a.ncols() {
            &a_scaled * a_scaled.transpose()
        } else {
            a_scaled.transpose() * &a_scaled
        };
        symmetric_eigen_bounds(&gram).1.max(0.0).sqrt()
    } else {
        power_norm(
            a.ncols(),
            |v| &a_scaled * v,
            |u| a_scaled.transpose() * u,
        )?
    };
    Ok(sigma * scale)
}

/// Power iteration on `AᵀA` for operators given only by their action.
///
/// `apply` computes `A v`, `apply_adjoint` computes `Aᵀ u`. Returns the
/// largest singular value once the estimate stabilizes to relative
/// `1e-12`, or `NoConvergence` after `1e4` iterations.
pub fn power_norm<F, G>(dim: usize, apply: F, apply_adjoint: G) -> Result<f64>
where
    F: Fn(&Vector) -> Vector,
    G: Fn(&Vector) -> Vector,
{
    power_norm_with(dim, POWER_MAX_ITER, POWER_REL_TOL, apply, apply_adjoint)
        .and_then(|(sigma, converged)| {
            if converged {
                Ok(sigma)
            } else {
                Err(Error::NoConvergence {
                    iterations: POWER_MAX_ITER,
                })
            }
        })
}

/// Like [`power_norm`], but with explicit limits and returning the final
/// estimate together with a convergence flag instead of failing.
pub fn power_norm_with<F, G>(
    dim: usize,
    max_iter: usize,
    rel_tol: f64,
    apply: F,
    apply_adjoint: G,
) -> Result<(f64, bool)>
where
    F: Fn(&Vector) -> Vector,
    G: Fn(&Vector) -> Vector,
{
    if dim == 0 {
        return Ok((0.0, true));
    }
    // Deterministic start with no special alignment.
    let mut v = Vector::from_fn(dim, |i, _| 1.0 + ((i as f64) * 0.618_033_988_75).fract());
    v.normalize_mut();
    let mut sigma = 0.0_f64;
    for _ in 0..max_iter {
        let u = apply(&v);
        let next_sigma = u.norm();
        if next_sigma == 0.0 {
            return Ok((0.0, true));
        }
        let mut w = apply_adjoint(&u);
        let wn = w.norm();
        if wn == 0.0 {
            return Ok((next_sigma, true));
        }
        w.unscale_mut(wn);
        let done = (next_sigma - sigma).abs() <= rel_tol * next_sigma;
        sigma = next_sigma;
        v = w;
        if done {
            return Ok((sigma, true));
        }
    }
    Ok((sigma, false))
}
