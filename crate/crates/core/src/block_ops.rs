//! Block operators on `W_1 ⊕ … ⊕ W_N`.
//!
//! Two representations are provided. [`BlockOperator`] materializes the
//! ambient `Nd × Nd` matrix with a block sparsity mask and backs the exact
//! structural checks. [`DirectSumOps`] and [`FilterOps`] apply `D`, `D⁻¹`,
//! `H` and `G` to stacked vectors without materializing anything, for the
//! large-`N` experiment path.
//!
//! All block indices in the public API are 1-based (`1..=N`), matching the
//! usual operator notation; storage is 0-based.

use std::io::Write;

use rayon::prelude::*;

use crate::error::Result;
use crate::filter::{binomial, FilterSpec};
use crate::fusion_frame::FusionFrame;
use crate::numerics::{self, Matrix, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OperatorKind {
    Identity,
    D,
    DInvPow(usize),
    DPow(usize),
    H,
    IMinusH,
    G,
    Product,
    Difference,
}

#[derive(Clone, Debug)]
pub struct BlockOperator {
    n: usize,
    d: usize,
    ambient: Matrix,
    /// Row-major `N × N` mask of blocks that may be nonzero.
    mask: Vec<bool>,
    kind: OperatorKind,
}

impl BlockOperator {
    fn empty(n: usize, d: usize, kind: OperatorKind) -> Self {
        Self {
            n,
            d,
            ambient: Matrix::zeros(n * d, n * d),
            mask: vec![false; n * n],
            kind,
        }
    }

    pub fn identity(n: usize, d: usize) -> Self {
        let mut op = Self::empty(n, d, OperatorKind::Identity);
        for i in 1..=n {
            op.set_block(i, i, &Matrix::identity(d, d));
        }
        op
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn num_blocks(&self) -> usize {
        self.n
    }

    pub fn block_dim(&self) -> usize {
        self.d
    }

    pub fn ambient(&self) -> &Matrix {
        &self.ambient
    }

    fn set_block(&mut self, i: usize, j: usize, value: &Matrix) {
        let d = self.d;
        self.ambient
            .view_mut(((i - 1) * d, (j - 1) * d), (d, d))
            .copy_from(value);
        self.mask[(i - 1) * self.n + (j - 1)] = true;
    }

    fn is_masked(&self, i: usize, j: usize) -> bool {
        self.mask[(i - 1) * self.n + (j - 1)]
    }

    /// Block `(i, j)`, 1-based.
    pub fn block(&self, i: usize, j: usize) -> Matrix {
        let d = self.d;
        self.ambient
            .view(((i - 1) * d, (j - 1) * d), (d, d))
            .clone_owned()
    }

    pub fn block_norm(&self, i: usize, j: usize) -> f64 {
        if self.is_masked(i, j) {
            numerics::spectral_norm(&self.block(i, j)).unwrap_or(f64::INFINITY)
        } else {
            0.0
        }
    }

    pub fn apply(&self, v: &Vector) -> Vector {
        &self.ambient * v
    }

    /// Product with block-sparsity-aware accumulation.
    pub fn mul(&self, rhs: &BlockOperator) -> BlockOperator {
        assert_eq!((self.n, self.d), (rhs.n, rhs.d), "operator shapes differ");
        let (n, d) = (self.n, self.d);
        let rhs_rows: Vec<Vec<usize>> = (1..=n)
            .map(|k| (1..=n).filter(|&j| rhs.is_masked(k, j)).collect())
            .collect();
        let rows: Vec<(Vec<bool>, Matrix)> = (1..=n)
            .into_par_iter()
            .map(|i| {
                let mut mask = vec![false; n];
                let mut band = Matrix::zeros(d, n * d);
                for k in (1..=n).filter(|&k| self.is_masked(i, k)) {
                    let a = self.ambient.view(((i - 1) * d, (k - 1) * d), (d, d));
                    for &j in &rhs_rows[k - 1] {
                        let b = rhs.ambient.view(((k - 1) * d, (j - 1) * d), (d, d));
                        let mut target = band.view_mut((0, (j - 1) * d), (d, d));
                        target.gemm(1.0, &a, &b, 1.0);
                        mask[j - 1] = true;
                    }
                }
                (mask, band)
            })
            .collect();
        let mut out = Self::empty(n, d, OperatorKind::Product);
        for (i, (mask, band)) in rows.into_iter().enumerate() {
            out.ambient.view_mut((i * d, 0), (d, n * d)).copy_from(&band);
            out.mask[i * n..(i + 1) * n].copy_from_slice(&mask);
        }
        out
    }

    pub fn sub(&self, rhs: &BlockOperator) -> BlockOperator {
        assert_eq!((self.n, self.d), (rhs.n, rhs.d), "operator shapes differ");
        BlockOperator {
            n: self.n,
            d: self.d,
            ambient: &self.ambient - &rhs.ambient,
            mask: self.mask.iter().zip(&rhs.mask).map(|(a, b)| *a || *b).collect(),
            kind: OperatorKind::Difference,
        }
    }

    pub fn pow(&self, r: usize) -> BlockOperator {
        let mut acc = BlockOperator::identity(self.n, self.d);
        for _ in 0..r {
            acc = acc.mul(self);
        }
        acc
    }

    /// Whether all blocks strictly above (or, with `strict`, on or above)
    /// the diagonal vanish.
    pub fn is_block_lower_triangular(&self, strict: bool) -> bool {
        (1..=self.n).all(|i| {
            (1..=self.n)
                .filter(|&j| if strict { j >= i } else { j > i })
                .all(|j| numerics::max_abs(&self.block(i, j)) == 0.0)
        })
    }

    /// Largest block spectral norm over offsets `i - j ≥ min_offset`.
    pub fn max_block_norm_beyond(&self, min_offset: usize) -> f64 {
        let mut worst = 0.0_f64;
        for i in 1..=self.n {
            for j in 1..=self.n {
                if i >= j + min_offset {
                    worst = worst.max(self.block_norm(i, j));
                }
            }
        }
        worst
    }

    /// Restriction `Eᵀ A E` to intrinsic coordinates of the direct sum.
    pub fn intrinsic(&self, e: &BasisEmbedding) -> Matrix {
        let total = e.total_dim();
        let mut out = Matrix::zeros(total, total);
        for i in 1..=self.n {
            for j in (1..=self.n).filter(|&j| self.is_masked(i, j)) {
                let bi = &e.bases[i - 1];
                let bj = &e.bases[j - 1];
                let block = bi.transpose() * self.block(i, j) * bj;
                out.view_mut((e.offsets[i - 1], e.offsets[j - 1]), block.shape())
                    .copy_from(&block);
            }
        }
        out
    }

    /// Operator norm over the direct sum.
    pub fn op_norm(&self, e: &BasisEmbedding) -> Result<f64> {
        numerics::spectral_norm(&self.intrinsic(e))
    }

    /// Whether every output block lies in its subspace for input `v`.
    pub fn maps_into_direct_sum(&self, frame: &FusionFrame, v: &Vector, tol: f64) -> bool {
        let out = self.apply(v);
        let d = self.d;
        (0..self.n).all(|n| {
            let b = out.rows(n * d, d).clone_owned();
            frame.subspace(n).contains(&b, tol)
        })
    }

    /// Dense CSV dump of the ambient matrix.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        for row in self.ambient.row_iter() {
            let line: Vec<String> = row.iter().map(|x| format!("{x:e}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Block-diagonal stack of subspace bases, `Nd × Σ m_n`.
#[derive(Clone, Debug)]
pub struct BasisEmbedding {
    d: usize,
    bases: Vec<Matrix>,
    offsets: Vec<usize>,
    total: usize,
}

impl BasisEmbedding {
    pub fn new(frame: &FusionFrame) -> Self {
        let bases: Vec<Matrix> = frame.subspaces().iter().map(|s| s.basis().clone()).collect();
        let mut offsets = Vec::with_capacity(bases.len());
        let mut total = 0;
        for b in &bases {
            offsets.push(total);
            total += b.ncols();
        }
        Self {
            d: frame.ambient_dim(),
            bases,
            offsets,
            total,
        }
    }

    pub fn total_dim(&self) -> usize {
        self.total
    }

    pub fn matrix(&self) -> Matrix {
        let d = self.d;
        let mut e = Matrix::zeros(self.bases.len() * d, self.total);
        for (n, b) in self.bases.iter().enumerate() {
            e.view_mut((n * d, self.offsets[n]), b.shape()).copy_from(b);
        }
        e
    }

    /// Ambient stacked vector from intrinsic coordinates.
    pub fn embed(&self, coords: &Vector) -> Vector {
        let d = self.d;
        let mut out = Vector::zeros(self.bases.len() * d);
        for (n, b) in self.bases.iter().enumerate() {
            let c = coords.rows(self.offsets[n], b.ncols());
            out.rows_mut(n * d, d).copy_from(&(b * c));
        }
        out
    }

    /// Intrinsic coordinates `Eᵀ v`.
    pub fn coordinates(&self, v: &Vector) -> Vector {
        let d = self.d;
        let mut out = Vector::zeros(self.total);
        for (n, b) in self.bases.iter().enumerate() {
            let c = b.tr_mul(&v.rows(n * d, d));
            out.rows_mut(self.offsets[n], b.ncols()).copy_from(&c);
        }
        out
    }

    /// `A E` for a wide matrix `A` with `Nd` columns.
    pub fn right_restrict(&self, a: &Matrix) -> Matrix {
        let d = self.d;
        let mut out = Matrix::zeros(a.nrows(), self.total);
        for (n, b) in self.bases.iter().enumerate() {
            let block = a.columns(n * d, d) * b;
            out.columns_mut(self.offsets[n], b.ncols()).copy_from(&block);
        }
        out
    }
}

/// `P_{W_i} P_{W_{i-1}} ⋯ P_{W_{j+1}}` for `i > j` (1-based), `I` for `i = j`.
pub fn chain(frame: &FusionFrame, i: usize, j: usize) -> Matrix {
    let d = frame.ambient_dim();
    let mut acc = Matrix::identity(d, d);
    for k in (j + 1)..=i {
        acc = frame.subspace(k - 1).projector() * acc;
    }
    acc
}

/// `D`: identity diagonal, `-P_{W_n}` at `(n, n-1)`.
pub fn build_d(frame: &FusionFrame) -> BlockOperator {
    let (n, d) = (frame.len(), frame.ambient_dim());
    let mut op = BlockOperator::identity(n, d);
    op.kind = OperatorKind::D;
    for i in 2..=n {
        op.set_block(i, i - 1, &-frame.subspace(i - 1).projector());
    }
    op
}

/// Closed form of `D^{-r}`: block `(i, j)` is
/// `C(r+i-j-1, r-1) P_{W_i} ⋯ P_{W_{j+1}}` for `i > j`.
pub fn build_d_inv_pow(frame: &FusionFrame, r: usize) -> BlockOperator {
    let (n, d) = (frame.len(), frame.ambient_dim());
    let mut op = BlockOperator::identity(n, d);
    op.kind = OperatorKind::DInvPow(r);
    if r == 0 {
        return op;
    }
    for j in 1..n {
        let mut c = Matrix::identity(d, d);
        for i in (j + 1)..=n {
            c = frame.subspace(i - 1).projector() * c;
            let coeff = binomial((r + i - j - 1) as u64, (r - 1) as u64);
            op.set_block(i, j, &(&c * coeff));
        }
    }
    op
}

/// `H`: block `(n, k) = h_{n-k} P_{W_n} ⋯ P_{W_{k+1}}` on the tap offsets.
pub fn build_h(frame: &FusionFrame, filter: &FilterSpec) -> BlockOperator {
    let (n, d) = (frame.len(), frame.ambient_dim());
    let mut op = BlockOperator::empty(n, d, OperatorKind::H);
    for (j, h) in filter.taps() {
        for i in (j + 1)..=n {
            op.set_block(i, i - j, &(chain(frame, i, i - j) * h));
        }
    }
    op
}

pub fn build_i_minus_h(frame: &FusionFrame, filter: &FilterSpec) -> BlockOperator {
    let h = build_h(frame, filter);
    let mut op = BlockOperator::identity(frame.len(), frame.ambient_dim()).sub(&h);
    op.kind = OperatorKind::IMinusH;
    op
}

/// `G = D^{-r}(I - H)`, formed as a product.
pub fn build_g(frame: &FusionFrame, filter: &FilterSpec) -> BlockOperator {
    let mut g = build_d_inv_pow(frame, filter.order()).mul(&build_i_minus_h(frame, filter));
    g.kind = OperatorKind::G;
    g
}

/// Relative Frobenius residual of `(I - H) - D^r G` on the direct sum.
pub fn factorization_residual(frame: &FusionFrame, filter: &FilterSpec) -> f64 {
    let e = BasisEmbedding::new(frame);
    let lhs = build_i_minus_h(frame, filter);
    let rhs = build_d(frame).pow(filter.order()).mul(&build_g(frame, filter));
    let diff = lhs.sub(&rhs).intrinsic(&e).norm();
    diff / lhs.intrinsic(&e).norm().max(numerics::ABS_FLOOR)
}

/// Matrix-free `D`, `Dᵀ`, `D⁻¹`, `D⁻ᵀ` on stacked `Nd` vectors.
pub struct DirectSumOps<'a> {
    frame: &'a FusionFrame,
    d: usize,
}

impl<'a> DirectSumOps<'a> {
    pub fn new(frame: &'a FusionFrame) -> Self {
        Self {
            frame,
            d: frame.ambient_dim(),
        }
    }

    pub fn frame(&self) -> &FusionFrame {
        self.frame
    }

    pub fn dim(&self) -> usize {
        self.frame.len() * self.d
    }

    fn proj(&self, n: usize, v: &Vector, block: usize) -> Vector {
        let d = self.d;
        self.frame
            .subspace(n)
            .project_unchecked(&v.rows(block * d, d).clone_owned())
    }

    /// Blockwise `P_{W_n}`; the orthogonal projector onto the direct sum.
    pub fn project(&self, v: &Vector) -> Vector {
        let mut out = v.clone();
        for n in 0..self.frame.len() {
            out.rows_mut(n * self.d, self.d).copy_from(&self.proj(n, v, n));
        }
        out
    }

    /// `(D v)_n = v_n - P_{W_n} v_{n-1}`.
    pub fn apply_d(&self, v: &Vector) -> Vector {
        let mut out = v.clone();
        for n in 1..self.frame.len() {
            let p = self.proj(n, v, n - 1);
            out.rows_mut(n * self.d, self.d).axpy(-1.0, &p, 1.0);
        }
        out
    }

    /// `(Dᵀ w)_k = w_k - P_{W_{k+1}} w_{k+1}`.
    pub fn apply_d_adjoint(&self, w: &Vector) -> Vector {
        let mut out = w.clone();
        for k in 0..self.frame.len().saturating_sub(1) {
            let p = self.proj(k + 1, w, k + 1);
            out.rows_mut(k * self.d, self.d).axpy(-1.0, &p, 1.0);
        }
        out
    }

    /// Forward substitution `u_n = w_n + P_{W_n} u_{n-1}`, the `r = 1`
    /// closed form evaluated recursively.
    pub fn apply_d_inv(&self, w: &Vector) -> Vector {
        let mut u = w.clone();
        for n in 1..self.frame.len() {
            let p = self.proj(n, &u, n - 1);
            u.rows_mut(n * self.d, self.d).axpy(1.0, &p, 1.0);
        }
        u
    }

    /// Backward substitution `u_k = w_k + P_{W_{k+1}} u_{k+1}`.
    pub fn apply_d_inv_adjoint(&self, w: &Vector) -> Vector {
        let mut u = w.clone();
        for k in (0..self.frame.len().saturating_sub(1)).rev() {
            let p = self.proj(k + 1, &u, k + 1);
            u.rows_mut(k * self.d, self.d).axpy(1.0, &p, 1.0);
        }
        u
    }

    pub fn apply_d_pow(&self, v: &Vector, r: usize) -> Vector {
        (0..r).fold(v.clone(), |acc, _| self.apply_d(&acc))
    }

    pub fn apply_d_adjoint_pow(&self, v: &Vector, r: usize) -> Vector {
        (0..r).fold(v.clone(), |acc, _| self.apply_d_adjoint(&acc))
    }

    pub fn apply_d_inv_pow(&self, v: &Vector, r: usize) -> Vector {
        (0..r).fold(v.clone(), |acc, _| self.apply_d_inv(&acc))
    }

    pub fn apply_d_inv_adjoint_pow(&self, v: &Vector, r: usize) -> Vector {
        (0..r).fold(v.clone(), |acc, _| self.apply_d_inv_adjoint(&acc))
    }

    /// Applies `f` to every column of `m`.
    pub fn map_columns(&self, m: &Matrix, f: impl Fn(&Vector) -> Vector + Sync) -> Matrix {
        let cols: Vec<Vector> = (0..m.ncols())
            .into_par_iter()
            .map(|j| f(&m.column(j).clone_owned()))
            .collect();
        Matrix::from_columns(&cols)
    }
}

/// Matrix-free `H`, `G` and their adjoints, with the tap projection chains
/// `P_{W_n} ⋯ P_{W_{n-j+1}}` precomputed once per `(n, tap)`.
pub struct FilterOps<'a> {
    sum: DirectSumOps<'a>,
    filter: &'a FilterSpec,
    /// `chains[t][n]` for 0-based `n` with `n + 1 > n_t`.
    chains: Vec<Vec<Matrix>>,
}

impl<'a> FilterOps<'a> {
    pub fn new(frame: &'a FusionFrame, filter: &'a FilterSpec) -> Self {
        let big_n = frame.len();
        let chains = filter
            .supports()
            .iter()
            .map(|&j| {
                (0..big_n)
                    .into_par_iter()
                    .map(|n| {
                        if n + 1 > j {
                            chain(frame, n + 1, n + 1 - j)
                        } else {
                            Matrix::zeros(0, 0)
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            sum: DirectSumOps::new(frame),
            filter,
            chains,
        }
    }

    pub fn direct_sum(&self) -> &DirectSumOps<'a> {
        &self.sum
    }

    pub fn filter(&self) -> &FilterSpec {
        self.filter
    }

    pub fn apply_h(&self, v: &Vector) -> Vector {
        let d = self.sum.d;
        let mut out = Vector::zeros(v.len());
        for (t, (j, h)) in self.filter.taps().enumerate() {
            for n in j..self.sum.frame.len() {
                let src = v.rows((n - j) * d, d);
                let contrib = &self.chains[t][n] * src;
                out.rows_mut(n * d, d).axpy(h, &contrib, 1.0);
            }
        }
        out
    }

    pub fn apply_h_adjoint(&self, w: &Vector) -> Vector {
        let d = self.sum.d;
        let mut out = Vector::zeros(w.len());
        for (t, (j, h)) in self.filter.taps().enumerate() {
            for n in j..self.sum.frame.len() {
                let src = w.rows(n * d, d);
                let contrib = self.chains[t][n].tr_mul(&src);
                out.rows_mut((n - j) * d, d).axpy(h, &contrib, 1.0);
            }
        }
        out
    }

    /// `G v = D^{-r}(v - H v)`.
    pub fn apply_g(&self, v: &Vector) -> Vector {
        let w = v - self.apply_h(v);
        self.sum.apply_d_inv_pow(&w, self.filter.order())
    }

    pub fn apply_g_adjoint(&self, w: &Vector) -> Vector {
        let z = self.sum.apply_d_inv_adjoint_pow(w, self.filter.order());
        &z - self.apply_h_adjoint(&z)
    }

    /// Estimate of `‖G‖` over the direct sum by power iteration on
    /// `(G P)ᵀ(G P)`, `P` the direct-sum projector. Returns the estimate and
    /// whether it met `rel_tol` within `max_iter` steps.
    pub fn g_norm(&self, max_iter: usize, rel_tol: f64) -> Result<(f64, bool)> {
        numerics::power_norm_with(
            self.sum.dim(),
            max_iter,
            rel_tol,
            |v| self.apply_g(&self.sum.project(v)),
            |u| self.sum.project(&self.apply_g_adjoint(u)),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion_frame::{example_frame_r3, random_frame, Subspace};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_stacked(len: usize, seed: u64) -> Vector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Vector::from_fn(len, |_, _| rng.sample(StandardNormal))
    }

    fn mixed_frame(n: usize, seed: u64) -> FusionFrame {
        let dims: Vec<usize> = (0..n).map(|k| 1 + (k * 7 + seed as usize) % 3).collect();
        random_frame(4, &dims, seed).unwrap()
    }

    #[test]
    fn d_examples() {
        let one = example_frame_r3(3).unwrap().prefix(1).unwrap();
        let d1 = build_d(&one);
        assert_eq!(d1.ambient(), &Matrix::identity(3, 3));

        let f = random_frame(3, &[2, 1], 3).unwrap();
        let d = build_d(&f);
        let v = random_stacked(6, 1);
        let dv = d.apply(&v);
        let v1 = v.rows(0, 3).clone_owned();
        let v2 = v.rows(3, 3).clone_owned();
        let expected = &v2 - f.subspace(1).project(&v1).unwrap();
        assert!((dv.rows(3, 3) - expected).norm() < 1e-14);
        assert!((dv.rows(0, 3) - v1).norm() < 1e-15);
    }

    #[test]
    fn d_restriction_is_bidiagonal() {
        let f = mixed_frame(6, 2);
        let e = BasisEmbedding::new(&f);
        let r = build_d(&f).intrinsic(&e);
        let em = e.matrix();
        assert!((em.transpose() * build_d(&f).ambient() * &em - &r).abs().max() < 1e-13);
        for i in 1..=6 {
            for j in 1..=6 {
                let oi = e.offsets[i - 1];
                let oj = e.offsets[j - 1];
                let (mi, mj) = (f.subspace(i - 1).dim(), f.subspace(j - 1).dim());
                let block = r.view((oi, oj), (mi, mj)).clone_owned();
                let expected = if i == j {
                    Matrix::identity(mi, mj)
                } else if i == j + 1 {
                    -(f.subspace(i - 1).basis().transpose() * f.subspace(j - 1).basis())
                } else {
                    Matrix::zeros(mi, mj)
                };
                assert!((block - expected).abs().max() < 1e-13, "block ({i},{j})");
            }
        }
    }

    #[test]
    fn d_inv_pow_examples() {
        let f = mixed_frame(7, 5);
        let inv1 = build_d_inv_pow(&f, 1);
        for i in 1..=7 {
            assert_eq!(inv1.block(i, i), Matrix::identity(4, 4));
            for j in 1..i {
                assert!((inv1.block(i, j) - chain(&f, i, j)).abs().max() < 1e-15);
            }
        }
        let inv2 = build_d_inv_pow(&f, 2);
        let sq = inv1.mul(&inv1);
        assert!((inv2.block(5, 3) - chain(&f, 5, 3) * 3.0).abs().max() < 1e-14);
        assert!((inv2.ambient() - sq.ambient()).abs().max() < 1e-12);
        for r in 1..=4 {
            let p = build_d_inv_pow(&f, r);
            for i in 1..=7 {
                assert_eq!(p.block(i, i), Matrix::identity(4, 4));
            }
            assert!(p.is_block_lower_triangular(false));
        }
    }

    #[test]
    fn d_inv_pow_matches_numeric_inverse() {
        for seed in 0..5 {
            let f = mixed_frame(12 + seed as usize, seed);
            let e = BasisEmbedding::new(&f);
            let inv = build_d(&f).intrinsic(&e).try_inverse().unwrap();
            for r in 1..=3 {
                let numeric = (1..r).fold(inv.clone(), |acc, _| &acc * &inv);
                let closed = build_d_inv_pow(&f, r).intrinsic(&e);
                let rel = (&closed - &numeric).norm() / numeric.norm();
                assert!(rel <= 1e-9, "seed {seed} r {r}: {rel:e}");
            }
        }
    }

    #[test]
    fn h_support_pattern() {
        let filter = FilterSpec::new(2, 50).unwrap();
        let f40 = example_frame_r3(40).unwrap();
        let h = build_h(&f40, &filter);
        for i in 1..=40 {
            for j in 1..=40 {
                let nz = numerics::max_abs(&h.block(i, j)) > 0.0;
                assert_eq!(nz, i == j + 1, "({i},{j})");
            }
        }
        assert!((h.block(2, 1) - f40.subspace(1).projector() * (51.0 / 50.0)).abs().max() < 1e-15);

        let f100 = example_frame_r3(100).unwrap();
        let h = build_h(&f100, &filter);
        for i in 1..=100 {
            for j in 1..=100 {
                let nz = numerics::max_abs(&h.block(i, j)) > 0.0;
                assert_eq!(nz, i == j + 1 || i == j + 51, "({i},{j})");
            }
        }
        assert!(h.is_block_lower_triangular(true));
    }

    #[test]
    fn h_matches_live_loop() {
        let f = example_frame_r3(120).unwrap();
        let filter = FilterSpec::new(2, 10).unwrap();
        let x = Vector::from_vec(vec![0.04, 0.05, -0.03]);
        let y = f.analysis(&x).unwrap();
        let run = crate::quantizer::ffsd_run(&f, &filter, &y).unwrap();
        // Loop feedback s_n = v_n - y_n + q_n.
        let s = run.v.stacked() - y.stacked() + run.q.stacked();
        let by_dense = build_h(&f, &filter).apply(&run.v.stacked());
        let by_ops = FilterOps::new(&f, &filter).apply_h(&run.v.stacked());
        assert!((&by_dense - &s).norm() <= 1e-10);
        assert!((&by_ops - &s).norm() <= 1e-10);
    }

    #[test]
    fn g_closed_form_and_band() {
        let f = example_frame_r3(70).unwrap();
        let filter = FilterSpec::new(3, 4).unwrap();
        let k = filter.bandwidth();
        let g = build_g(&f, &filter);
        for i in 1..=70 {
            for j in 1..=70 {
                let block = g.block(i, j);
                let expected = if i == j {
                    Matrix::identity(3, 3)
                } else if i > j && i - j < k {
                    chain(&f, i, j) * filter.g_coefficient(i - j)
                } else {
                    Matrix::zeros(3, 3)
                };
                assert!((block - expected).abs().max() <= 1e-9, "({i},{j})");
            }
        }
        assert!(g.max_block_norm_beyond(k) <= 1e-9);
        assert!(g.is_block_lower_triangular(false));
    }

    #[test]
    fn g_norm_bound_r2_sigma50() {
        let f = example_frame_r3(120).unwrap();
        let filter = FilterSpec::new(2, 50).unwrap();
        let e = BasisEmbedding::new(&f);
        let norm = build_g(&f, &filter).op_norm(&e).unwrap();
        assert!(norm <= 2.101 * 50.0 * 50.0);
        let eps = filter.h_l1() - 1.0;
        assert!(norm <= (2.0 + eps) * filter.m_r() * filter.bandwidth() as f64);
    }

    #[test]
    fn factorization_residuals() {
        let r1 = FilterSpec::new(1, 1).unwrap();
        let f = mixed_frame(20, 9);
        assert!(factorization_residual(&f, &r1) <= 1e-12);
        let i_minus_h = build_i_minus_h(&f, &r1);
        assert!((i_minus_h.ambient() - build_d(&f).ambient()).abs().max() <= 1e-15);

        let f = random_frame(4, &(0..60).map(|k| 1 + k % 3).collect::<Vec<_>>(), 3).unwrap();
        assert!(factorization_residual(&f, &FilterSpec::new(3, 10).unwrap()) <= 1e-9);
    }

    #[test]
    fn op_norm_examples() {
        let f = random_frame(3, &[2, 1, 3], 1).unwrap();
        let e = BasisEmbedding::new(&f);
        assert!((BlockOperator::identity(3, 3).op_norm(&e).unwrap() - 1.0).abs() < 1e-12);
        let zero = BlockOperator::identity(3, 3).sub(&BlockOperator::identity(3, 3));
        assert_eq!(zero.op_norm(&e).unwrap(), 0.0);

        let full = FusionFrame::unweighted(vec![Subspace::full(2), Subspace::full(2)]).unwrap();
        let d = build_d(&full);
        let golden = (1.0 + 5.0_f64.sqrt()) / 2.0;
        assert!((d.op_norm(&BasisEmbedding::new(&full)).unwrap() - golden).abs() < 1e-12);
    }

    #[test]
    fn operators_preserve_direct_sum() {
        let f = mixed_frame(15, 4);
        let filter = FilterSpec::new(2, 3).unwrap();
        let e = BasisEmbedding::new(&f);
        let w = e.embed(&random_stacked(e.total_dim(), 6));
        for op in [
            build_d(&f),
            build_d_inv_pow(&f, 2),
            build_h(&f, &filter),
            build_g(&f, &filter),
        ] {
            assert!(op.maps_into_direct_sum(&f, &w, 1e-9), "{:?}", op.kind());
        }
    }

    #[test]
    fn matrix_free_matches_dense() {
        let f = mixed_frame(30, 8);
        let filter = FilterSpec::new(3, 2).unwrap();
        let ops = FilterOps::new(&f, &filter);
        let sum = ops.direct_sum();
        let v = random_stacked(120, 2);
        let r = 3;
        let checks = [
            (sum.apply_d(&v), build_d(&f).apply(&v)),
            (sum.apply_d_adjoint(&v), build_d(&f).ambient().transpose() * &v),
            (sum.apply_d_inv_pow(&v, r), build_d_inv_pow(&f, r).apply(&v)),
            (
                sum.apply_d_inv_adjoint_pow(&v, r),
                build_d_inv_pow(&f, r).ambient().transpose() * &v,
            ),
            (ops.apply_h(&v), build_h(&f, &filter).apply(&v)),
            (
                ops.apply_h_adjoint(&v),
                build_h(&f, &filter).ambient().transpose() * &v,
            ),
            (ops.apply_g(&v), build_g(&f, &filter).apply(&v)),
            (
                ops.apply_g_adjoint(&v),
                build_g(&f, &filter).ambient().transpose() * &v,
            ),
        ];
        for (k, (a, b)) in checks.iter().enumerate() {
            assert!((a - b).norm() <= 1e-9 * b.norm().max(1.0), "check {k}");
        }

        let e = BasisEmbedding::new(&f);
        let dense = build_g(&f, &filter).op_norm(&e).unwrap();
        let (free, converged) = ops.g_norm(20_000, 1e-13).unwrap();
        assert!(converged);
        assert!((dense - free).abs() <= 1e-6 * dense, "{dense} vs {free}");
    }

    #[test]
    fn csv_dump() {
        let f = example_frame_r3(3).unwrap();
        let mut buf = Vec::new();
        build_d(&f).write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 9);
        assert!(text.lines().all(|l| l.split(',').count() == 9));
    }
}
