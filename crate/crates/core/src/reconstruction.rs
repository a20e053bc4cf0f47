//! Canonical and Sobolev left inverses of the analysis operator, and the
//! quantization-error diagnostics built on them.

use log::warn;
use serde::Serialize;

use crate::block_ops::{DirectSumOps, FilterOps};
use crate::error::{check_dim, Error, Result};
use crate::filter::{FilterSpec, StabilityParams};
use crate::fusion_frame::{BlockVector, FusionFrame};
use crate::numerics::{self, Matrix, Vector};
use crate::quantizer::RunResult;

/// Condition number of `D^{-r} T` above which a Sobolev inverse is flagged.
pub const ILL_CONDITIONED: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LeftInverseKind {
    Canonical,
    Sobolev(usize),
}

/// A `d × Nd` map from stacked ambient blocks to `R^d` with `L T = I`.
#[derive(Clone, Debug)]
pub struct LeftInverse {
    pub matrix: Matrix,
    pub kind: LeftInverseKind,
    /// Condition estimate of the least-squares system, when one was solved.
    pub condition: Option<f64>,
}

impl LeftInverse {
    pub fn is_ill_conditioned(&self) -> bool {
        self.condition.is_some_and(|c| c > ILL_CONDITIONED)
    }

    /// `max |L T - I|`.
    pub fn identity_defect(&self, frame: &FusionFrame) -> f64 {
        let d = frame.ambient_dim();
        numerics::max_abs(&(&self.matrix * frame.analysis_matrix() - Matrix::identity(d, d)))
    }

    /// Applies `L` to a block vector (`x̃ = L q`).
    pub fn reconstruct(&self, q: &BlockVector) -> Result<Vector> {
        let stacked = q.stacked();
        check_dim(self.matrix.ncols(), stacked.len())?;
        Ok(&self.matrix * stacked)
    }

    /// `‖L D^r‖` over the direct sum.
    pub fn l_dr_norm(&self, frame: &FusionFrame, r: usize) -> Result<f64> {
        let ops = DirectSumOps::new(frame);
        let lt = self.matrix.transpose();
        let y_t = ops.map_columns(&lt, |c| ops.apply_d_adjoint_pow(c, r));
        let embedding = crate::block_ops::BasisEmbedding::new(frame);
        numerics::spectral_norm(&embedding.right_restrict(&y_t.transpose()))
    }
}

fn require_frame(frame: &FusionFrame) -> Result<()> {
    let bounds = frame.frame_bounds();
    if bounds.is_frame() {
        Ok(())
    } else {
        Err(Error::NotAFrame { lower: bounds.lower })
    }
}

/// `L = S⁻¹ T*`, via a linear solve against `S`.
pub fn canonical_left_inverse(frame: &FusionFrame) -> Result<LeftInverse> {
    require_frame(frame)?;
    let s = frame.frame_operator();
    let matrix = numerics::lstsq_solve(&s, &frame.analysis_matrix().transpose())?;
    Ok(LeftInverse {
        matrix,
        kind: LeftInverseKind::Canonical,
        condition: None,
    })
}

/// `L = ((D^{-r}T)*(D^{-r}T))⁻¹ (D^{-r}T)* D^{-r}`.
///
/// `M = D^{-r} T` is formed by forward substitution, its left
/// pseudo-inverse by QR, and the trailing `D^{-r}` is folded in by backward
/// substitution on the transpose. `r = 0` gives the Moore-Penrose left
/// inverse of `T`.
pub fn sobolev_left_inverse(frame: &FusionFrame, r: usize) -> Result<LeftInverse> {
    require_frame(frame)?;
    let ops = DirectSumOps::new(frame);
    let m = ops.map_columns(&frame.analysis_matrix(), |c| ops.apply_d_inv_pow(c, r));
    let condition = numerics::condition_number(&m);
    if condition > ILL_CONDITIONED {
        warn!("Sobolev system for N = {} is ill-conditioned ({condition:e})", frame.len());
    }
    let pinv_t = numerics::left_pseudo_inverse(&m)?.transpose();
    let lt = ops.map_columns(&pinv_t, |c| ops.apply_d_inv_adjoint_pow(c, r));
    Ok(LeftInverse {
        matrix: lt.transpose(),
        kind: LeftInverseKind::Sobolev(r),
        condition: Some(condition),
    })
}

pub fn reconstruct(l: &LeftInverse, q: &BlockVector) -> Result<Vector> {
    l.reconstruct(q)
}

/// Error quantities for a left inverse paired with a filter, and optionally
/// a completed run.
#[derive(Clone, Debug, Serialize)]
pub struct ErrorReport {
    pub l_dr_norm: f64,
    /// `‖G‖` over the direct sum (power-iteration estimate).
    pub g_norm: f64,
    pub g_norm_converged: bool,
    pub c_bound: f64,
    /// `‖G‖ · C · √N · ‖L D^r‖`.
    pub apriori_bound: f64,
    /// `‖L(y - q)‖` when a run is supplied.
    pub aposteriori_error: Option<f64>,
    /// `‖x - x̃‖` when a run and signal are supplied.
    pub observed_error: Option<f64>,
    /// `‖(x - x̃) - L(y - q)‖`.
    pub identity_residual: Option<f64>,
    /// `‖L(y - q) - L D^r G v‖`.
    pub chain_residual: Option<f64>,
}

/// Signal, measurements and quantizer output of one run.
pub struct RunContext<'a> {
    pub x: &'a Vector,
    pub y: &'a BlockVector,
    pub run: &'a RunResult,
}

pub const G_NORM_MAX_ITER: usize = 5_000;
pub const G_NORM_REL_TOL: f64 = 1e-9;

pub fn error_diagnostics(
    frame: &FusionFrame,
    filter: &FilterSpec,
    l: &LeftInverse,
    stability: &StabilityParams,
    ctx: Option<RunContext<'_>>,
) -> Result<ErrorReport> {
    let r = filter.order();
    let l_dr_norm = l.l_dr_norm(frame, r)?;
    let ops = FilterOps::new(frame, filter);
    let (g_norm, g_norm_converged) = ops.g_norm(G_NORM_MAX_ITER, G_NORM_REL_TOL)?;
    let apriori_bound = g_norm * stability.c_bound * (frame.len() as f64).sqrt() * l_dr_norm;

    let mut report = ErrorReport {
        l_dr_norm,
        g_norm,
        g_norm_converged,
        c_bound: stability.c_bound,
        apriori_bound,
        aposteriori_error: None,
        observed_error: None,
        identity_residual: None,
        chain_residual: None,
    };
    if let Some(RunContext { x, y, run }) = ctx {
        let x_tilde = l.reconstruct(&run.q)?;
        let err = x - &x_tilde;
        let via_l = l.reconstruct(&y.sub(&run.q))?;
        let v = run.v.stacked();
        let gv = ops.apply_g(&v);
        let dr_gv = ops.direct_sum().apply_d_pow(&gv, r);
        let via_chain = &l.matrix * dr_gv;
        report.aposteriori_error = Some(via_l.norm());
        report.observed_error = Some(err.norm());
        report.identity_residual = Some((&err - &via_l).norm());
        report.chain_residual = Some((&via_l - via_chain).norm());
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::stability_params;
    use crate::fusion_frame::{example_frame_r3, random_frame, Subspace};
    use crate::quantizer::ffsd_run;

    fn signal() -> Vector {
        Vector::from_vec(vec![
            1.0 / 25.0,
            std::f64::consts::PI / 57.0,
            1.0 / (2.0 * 57.0_f64.sqrt()),
        ])
    }

    #[test]
    fn canonical_tight_frame_shortcut() {
        for big_n in [5, 50, 300] {
            let f = example_frame_r3(big_n).unwrap();
            let l = canonical_left_inverse(&f).unwrap();
            let shortcut = f.analysis_matrix().transpose() * (3.0 / (2.0 * big_n as f64));
            assert!(numerics::max_abs(&(&l.matrix - shortcut)) <= 1e-10);
            assert!(l.identity_defect(&f) <= 1e-8);
        }
    }

    #[test]
    fn canonical_single_full_subspace() {
        let f = FusionFrame::unweighted(vec![Subspace::full(3)]).unwrap();
        let l = canonical_left_inverse(&f).unwrap();
        assert!((l.matrix.clone() - Matrix::identity(3, 3)).abs().max() < 1e-15);
    }

    #[test]
    fn not_a_frame_rejected() {
        let f = random_frame(3, &[1, 1], 2).unwrap();
        assert!(matches!(canonical_left_inverse(&f), Err(Error::NotAFrame { .. })));
        assert!(matches!(sobolev_left_inverse(&f, 2), Err(Error::NotAFrame { .. })));
    }

    #[test]
    fn left_inverse_identities() {
        let frames = [
            example_frame_r3(50).unwrap(),
            random_frame(4, &[2, 3, 1, 2, 2, 1, 3, 2, 2, 1], 5).unwrap(),
        ];
        for f in &frames {
            assert!(canonical_left_inverse(f).unwrap().identity_defect(f) <= 1e-8);
            for r in 0..=3 {
                let l = sobolev_left_inverse(f, r).unwrap();
                assert!(l.identity_defect(f) <= 1e-8, "r = {r}");
                assert!(!l.is_ill_conditioned());
            }
        }
    }

    #[test]
    fn zeroth_order_is_moore_penrose() {
        let f = random_frame(3, &[2, 1, 2, 2], 3).unwrap();
        let l = sobolev_left_inverse(&f, 0).unwrap();
        let t = f.analysis_matrix();
        let mp = (t.transpose() * &t).try_inverse().unwrap() * t.transpose();
        assert!(numerics::max_abs(&(&l.matrix - mp)) < 1e-12);
    }

    #[test]
    fn sobolev_matches_dense_formula() {
        let f = random_frame(3, &[2, 1, 2, 2, 1, 2, 2, 1], 4).unwrap();
        let r = 2;
        let dinv = crate::block_ops::build_d_inv_pow(&f, r);
        let m = dinv.ambient() * f.analysis_matrix();
        let dense = (m.transpose() * &m).try_inverse().unwrap() * m.transpose() * dinv.ambient();
        let l = sobolev_left_inverse(&f, r).unwrap();
        assert!(numerics::max_abs(&(&l.matrix - dense)) < 1e-10);
    }

    #[test]
    fn reconstruct_examples() {
        let f = example_frame_r3(30).unwrap();
        let x = signal();
        let y = f.analysis(&x).unwrap();
        for l in [canonical_left_inverse(&f).unwrap(), sobolev_left_inverse(&f, 2).unwrap()] {
            assert!((reconstruct(&l, &y).unwrap() - &x).norm() <= 1e-8);
            assert_eq!(reconstruct(&l, &BlockVector::zeros(30, 3)).unwrap(), Vector::zeros(3));
            assert!(reconstruct(&l, &BlockVector::zeros(29, 3)).is_err());
        }
    }

    #[test]
    fn sobolev_adapts_to_noise_shaping() {
        let f = example_frame_r3(300).unwrap();
        let can = canonical_left_inverse(&f).unwrap().l_dr_norm(&f, 2).unwrap();
        let sob = sobolev_left_inverse(&f, 2).unwrap().l_dr_norm(&f, 2).unwrap();
        assert!(sob < can, "{sob} vs {can}");
    }

    #[test]
    fn sobolev_l_dr_is_pseudo_inverse_norm() {
        // L D^r = pinv(D^{-r} T) on the direct sum.
        let f = example_frame_r3(40).unwrap();
        let r = 2;
        let ops = DirectSumOps::new(&f);
        let m = ops.map_columns(&f.analysis_matrix(), |c| ops.apply_d_inv_pow(c, r));
        let sv = m.singular_values();
        let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        let l = sobolev_left_inverse(&f, r).unwrap();
        assert!((l.l_dr_norm(&f, r).unwrap() - 1.0 / smin).abs() <= 1e-8 / smin);
    }

    #[test]
    fn diagnostics_identities() {
        let f = example_frame_r3(150).unwrap();
        let filter = FilterSpec::new(2, 50).unwrap();
        let stab = stability_params(2, 0.1, 1.101).unwrap();
        let x = signal();
        let y = f.analysis(&x).unwrap();
        let run = ffsd_run(&f, &filter, &y).unwrap();
        for l in [canonical_left_inverse(&f).unwrap(), sobolev_left_inverse(&f, 2).unwrap()] {
            let rep = error_diagnostics(&f, &filter, &l, &stab, Some(RunContext { x: &x, y: &y, run: &run }))
                .unwrap();
            assert!(rep.identity_residual.unwrap() <= 1e-10);
            assert!(rep.chain_residual.unwrap() <= 1e-9);
            assert!((rep.aposteriori_error.unwrap() - rep.observed_error.unwrap()).abs() <= 1e-12);
            assert!(rep.observed_error.unwrap() <= rep.apriori_bound);
        }
    }
}
