//! Self-check suite bundling the structural identities of every module.

use num::rational::BigRational;
use num::{BigInt, Zero};
use serde::Serialize;

use crate::alphabet::Alphabet;
use crate::block_ops::{
    build_d, build_d_inv_pow, build_g, factorization_residual, BasisEmbedding,
};
use crate::error::Result;
use crate::filter::{self, interpolation_defect, FilterSpec};
use crate::fusion_frame::{example_frame_r3, random_frame, FusionFrame, Subspace};
use crate::numerics::{self, Matrix};
use crate::quantizer::{ffsd_run, recursion_residual};
use crate::reconstruction::{
    canonical_left_inverse, error_diagnostics, sobolev_left_inverse, RunContext,
};

use super::config::example_signal;

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl VerifyReport {
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct VerifyOptions {
    /// Adds `1e-3` to the first filter weight before the exact
    /// interpolation check (negative control).
    pub perturb_h1: bool,
}

pub fn verify_suite() -> VerifyReport {
    verify_suite_with(VerifyOptions::default())
}

pub fn verify_suite_with(options: VerifyOptions) -> VerifyReport {
    let mut checks = Vec::new();
    let mut add = |name: String, measured: Result<f64>, tolerance: f64| {
        let (measured, passed) = match measured {
            Ok(m) => (m, m <= tolerance),
            Err(e) => {
                log::error!("{name}: {e}");
                (f64::NAN, false)
            }
        };
        checks.push(Check { name, passed, measured, tolerance });
    };

    for r in 1..=3 {
        for sigma in [10, 50] {
            add(
                format!("filter.interpolation_identity[r={r},sigma={sigma}]"),
                interpolation_failures(r, sigma, options.perturb_h1),
                0.0,
            );
            add(
                format!("filter.weight_sum[r={r},sigma={sigma}]"),
                weight_sum_defect(r, sigma),
                0.0,
            );
        }
    }
    add("filter.stability_constants".into(), stability_constants_defect(), 5e-4);

    for m in 1..=5 {
        add(format!("alphabet.simplex_gram[m={m}]"), Ok(simplex_defect(m)), 1e-10);
    }

    let mixed = [
        random_frame(4, &[2, 3, 1, 2, 4, 1, 3, 2, 2, 3, 1, 2], 11),
        random_frame(3, &[1, 2, 2, 1, 2, 2, 1, 2, 1, 2], 12),
        example_frame_r3(15),
    ];
    for (k, f) in mixed.into_iter().enumerate() {
        let f = match f {
            Ok(f) => f,
            Err(e) => {
                add(format!("block_ops.frame[{k}]"), Err(e), 0.0);
                continue;
            }
        };
        for r in 1..=3 {
            add(format!("block_ops.d_inv_closed_form[frame={k},r={r}]"), d_inv_defect(&f, r), 1e-9);
        }
    }

    for n in [12, 20, 30, 45, 60] {
        add(
            format!("block_ops.factorization[random,r=3,sigma=10,N={n}]"),
            random_frame(3, &vec![2; n], n as u64)
                .and_then(|f| Ok(factorization_residual(&f, &FilterSpec::new(3, 10)?))),
            1e-9,
        );
    }
    add(
        "block_ops.factorization[r3,r=2,sigma=50,N=120]".into(),
        example_frame_r3(120).and_then(|f| Ok(factorization_residual(&f, &FilterSpec::new(2, 50)?))),
        1e-9,
    );

    for (r, sigma, n) in [(2, 10, 30), (3, 5, 50), (2, 50, 120)] {
        let built = example_frame_r3(n).and_then(|f| Ok((FilterSpec::new(r, sigma)?, f)));
        match built {
            Ok((flt, f)) => {
                let g = build_g(&f, &flt);
                add(
                    format!("block_ops.g_band[r={r},sigma={sigma},N={n}]"),
                    Ok(g.max_block_norm_beyond(flt.bandwidth())),
                    1e-9,
                );
                let eps = flt.h_l1() - 1.0;
                let bound = (2.0 + eps) * flt.m_r() * flt.bandwidth() as f64;
                add(
                    format!("block_ops.g_norm_over_bound[r={r},sigma={sigma},N={n}]"),
                    g.op_norm(&BasisEmbedding::new(&f)).map(|nrm| nrm / bound),
                    1.0,
                );
            }
            Err(e) => add(format!("block_ops.g[r={r},sigma={sigma},N={n}]"), Err(e), 0.0),
        }
    }

    let frames = [
        example_frame_r3(50),
        example_frame_r3(300),
        random_frame(4, &[2, 3, 1, 2, 2, 1, 3, 2, 2, 1, 2, 3], 5),
    ];
    for (k, f) in frames.into_iter().enumerate() {
        let f = match f {
            Ok(f) => f,
            Err(e) => {
                add(format!("reconstruction.frame[{k}]"), Err(e), 0.0);
                continue;
            }
        };
        let f = &f;
        add(
            format!("reconstruction.canonical_identity[frame={k}]"),
            canonical_left_inverse(f).map(|l| l.identity_defect(f)),
            1e-8,
        );
        for r in 1..=3 {
            add(
                format!("reconstruction.sobolev_identity[frame={k},r={r}]"),
                sobolev_left_inverse(f, r).map(|l| l.identity_defect(f)),
                1e-8,
            );
        }
    }
    add("reconstruction.tight_shortcut[N=300]".into(), tight_shortcut_defect(300), 1e-10);

    for (r, n) in [(2, 300), (3, 300)] {
        add(format!("pipeline.error_identity[r={r},N={n}]"), error_chain_defect(r, n), 1e-10);
    }

    let passed = checks.iter().all(|c| c.passed);
    VerifyReport { checks, passed }
}

/// Count of `n ∈ [K, K + 400]` where the exact identity fails.
fn interpolation_failures(r: usize, sigma: u64, perturb: bool) -> Result<f64> {
    let flt = FilterSpec::new(r, sigma)?;
    let mut coeffs = flt.coeffs_exact().to_vec();
    if perturb {
        coeffs[0] += BigRational::new(BigInt::from(1), BigInt::from(1000));
    }
    let k = flt.bandwidth();
    let fails = (k..=k + 400)
        .filter(|&n| !interpolation_defect(r, flt.supports(), &coeffs, n).is_zero())
        .count();
    Ok(fails as f64)
}

fn weight_sum_defect(r: usize, sigma: u64) -> Result<f64> {
    let flt = FilterSpec::new(r, sigma)?;
    let sum: BigRational = flt.coeffs_exact().iter().cloned().sum();
    Ok(if sum == BigRational::from_integer(1.into()) { 0.0 } else { 1.0 })
}

fn stability_constants_defect() -> Result<f64> {
    let (a1, a2) = filter::alpha_limits(2, 0.1)?;
    let sigma = filter::min_sigma_for_alpha(1.101)?;
    let sigma_defect = if sigma == 50 { 0.0 } else { f64::INFINITY };
    Ok((a1 - 1.1015).abs().max((a2 - 1.2198).abs()).max(sigma_defect))
}

fn simplex_defect(m: usize) -> f64 {
    let a = Alphabet::simplex(&Subspace::full(m));
    let mut worst = 0.0_f64;
    let mut sum = crate::numerics::Vector::zeros(m);
    for (i, u) in a.elements().iter().enumerate() {
        sum += u;
        worst = worst.max((u.norm() - 1.0).abs());
        for v in &a.elements()[i + 1..] {
            worst = worst.max((u.dot(v) + 1.0 / m as f64).abs());
        }
    }
    worst.max(sum.norm())
}

/// Relative Frobenius distance between the closed-form `D^{-r}` and the
/// numerically inverted intrinsic restriction of `D`, raised to `r`.
pub fn d_inv_defect(frame: &FusionFrame, r: usize) -> Result<f64> {
    let e = BasisEmbedding::new(frame);
    let d = build_d(frame).intrinsic(&e);
    let inv = d
        .clone()
        .try_inverse()
        .ok_or(crate::Error::RankDeficient { rank: 0, cols: d.ncols() })?;
    let mut oracle = Matrix::identity(inv.nrows(), inv.ncols());
    for _ in 0..r {
        oracle = &oracle * &inv;
    }
    let closed = build_d_inv_pow(frame, r).intrinsic(&e);
    Ok((&closed - &oracle).norm() / oracle.norm())
}

fn tight_shortcut_defect(n: usize) -> Result<f64> {
    let f = example_frame_r3(n)?;
    let l = canonical_left_inverse(&f)?;
    let shortcut = f.analysis_matrix().transpose() * (3.0 / (2.0 * n as f64));
    Ok(numerics::max_abs(&(&l.matrix - shortcut)))
}

fn error_chain_defect(r: usize, n: usize) -> Result<f64> {
    let f = example_frame_r3(n)?;
    let flt = FilterSpec::new(r, 50)?;
    let stab = filter::stability_params(2, 0.1, 1.101)?;
    let x = example_signal();
    let y = f.analysis(&x)?;
    let run = ffsd_run(&f, &flt, &y)?;
    let l = sobolev_left_inverse(&f, r)?;
    let rep = error_diagnostics(&f, &flt, &l, &stab, Some(RunContext { x: &x, y: &y, run: &run }))?;
    let id = rep.identity_residual.unwrap_or(f64::INFINITY);
    let chain = rep.chain_residual.unwrap_or(f64::INFINITY);
    Ok(id.max(chain).max(recursion_residual(&f, &flt, &y, &run)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_build_passes() {
        let rep = verify_suite();
        let bad: Vec<_> = rep.failures().collect();
        assert!(bad.is_empty(), "{bad:#?}");
        assert!(rep.passed);
    }

    #[test]
    fn perturbed_weight_fails_interpolation_only() {
        let rep = verify_suite_with(VerifyOptions { perturb_h1: true });
        assert!(!rep.passed);
        assert!(rep.failures().all(|c| c.name.starts_with("filter.interpolation_identity")));
        assert_eq!(rep.failures().count(), 6);
    }

    #[test]
    fn report_serializes() {
        let rep = verify_suite();
        let text = serde_json::to_string(&rep).unwrap();
        assert!(text.contains("\"checks\""));
    }
}
