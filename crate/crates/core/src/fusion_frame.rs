//! Subspaces of `R^d`, fusion frames and their analysis/synthesis operators.

use std::f64::consts::PI;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::numerics::{self, Matrix, Vector};

const ORTHO_TOL: f64 = 1e-10;

/// An `m`-dimensional subspace of `R^d` with a stored orthonormal basis.
#[derive(Clone, Debug)]
pub struct Subspace {
    basis: Matrix,
    projector: Matrix,
}

impl Subspace {
    /// Wraps a `d × m` matrix whose columns are already orthonormal.
    pub fn from_orthonormal(basis: Matrix) -> Result<Self> {
        let (d, m) = basis.shape();
        if m == 0 || m > d {
            return Err(Error::BadParameter(format!(
                "subspace dimension {m} must lie in 1..={d}"
            )));
        }
        if !numerics::all_finite(&basis) {
            return Err(Error::BadData("non-finite basis entry".into()));
        }
        let gram = basis.transpose() * &basis;
        let defect = numerics::max_abs(&(gram - Matrix::identity(m, m)));
        if defect > ORTHO_TOL {
            return Err(Error::BadData(format!(
                "basis columns are not orthonormal (defect {defect:e})"
            )));
        }
        let projector = &basis * basis.transpose();
        Ok(Self { basis, projector })
    }

    /// The span of arbitrary linearly independent columns.
    pub fn from_span(columns: &Matrix) -> Result<Self> {
        Self::from_orthonormal(numerics::orthonormalize(columns)?)
    }

    /// The whole space `R^d`.
    pub fn full(d: usize) -> Self {
        Self::from_orthonormal(Matrix::identity(d, d)).expect("identity is orthonormal")
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn projector(&self) -> &Matrix {
        &self.projector
    }

    /// Orthogonal projection `P_W x`, evaluated as `B (Bᵀ x)`.
    pub fn project(&self, x: &Vector) -> Result<Vector> {
        check_dim(self.ambient_dim(), x.len())?;
        Ok(self.project_unchecked(x))
    }

    pub(crate) fn project_unchecked(&self, x: &Vector) -> Vector {
        &self.basis * (self.basis.transpose() * x)
    }

    /// Coordinates of `x` in the stored basis, `Bᵀ x`.
    pub fn coordinates(&self, x: &Vector) -> Vector {
        self.basis.transpose() * x
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        x.len() == self.ambient_dim()
            && (x - self.project_unchecked(x)).norm() <= tol * x.norm().max(1.0)
    }
}

/// An element of the direct sum `W_1 ⊕ … ⊕ W_N`, stored as ambient
/// `d`-vectors, one per subspace.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockVector {
    pub blocks: Vec<Vector>,
}

impl BlockVector {
    pub fn zeros(n: usize, d: usize) -> Self {
        Self {
            blocks: vec![Vector::zeros(d); n],
        }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn block_dim(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.len())
    }

    /// Concatenated `N d` ambient vector.
    pub fn stacked(&self) -> Vector {
        let d = self.block_dim();
        let mut out = Vector::zeros(self.len() * d);
        for (n, b) in self.blocks.iter().enumerate() {
            out.rows_mut(n * d, d).copy_from(b);
        }
        out
    }

    pub fn from_stacked(v: &Vector, d: usize) -> Self {
        assert!(d > 0 && v.len().is_multiple_of(d), "stacked length not a multiple of d");
        Self {
            blocks: (0..v.len() / d)
                .map(|n| v.rows(n * d, d).clone_owned())
                .collect(),
        }
    }

    /// `(Σ ‖w_n‖²)^{1/2}`.
    pub fn norm(&self) -> f64 {
        self.blocks.iter().map(|b| b.norm_squared()).sum::<f64>().sqrt()
    }

    /// `sup_n ‖w_n‖`.
    pub fn norm_inf(&self) -> f64 {
        self.blocks.iter().map(|b| b.norm()).fold(0.0, f64::max)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            blocks: self
                .blocks
                .iter()
                .zip(&other.blocks)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

/// Extreme eigenvalues of the frame operator.
#[derive(Clone, Copy, Debug)]
pub struct FrameBounds {
    pub lower: f64,
    pub upper: f64,
}

impl FrameBounds {
    /// Lower bound positive relative to the upper bound.
    pub fn is_frame(&self) -> bool {
        self.lower > numerics::tol(self.upper, 1e-10)
    }

    pub fn is_tight(&self) -> bool {
        (self.upper - self.lower).abs() <= 1e-9 * self.upper.abs().max(1.0)
    }
}

/// An ordered, weighted collection of subspaces of a common `R^d`.
#[derive(Clone, Debug)]
pub struct FusionFrame {
    ambient_dim: usize,
    subspaces: Vec<Subspace>,
    weights: Vec<f64>,
}

impl FusionFrame {
    pub fn new(subspaces: Vec<Subspace>, weights: Vec<f64>) -> Result<Self> {
        let first = subspaces
            .first()
            .ok_or_else(|| Error::BadParameter("fusion frame needs at least one subspace".into()))?;
        let ambient_dim = first.ambient_dim();
        for s in &subspaces {
            check_dim(ambient_dim, s.ambient_dim())?;
        }
        check_dim(subspaces.len(), weights.len())?;
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::BadParameter(format!("weight {w} is not positive")));
        }
        Ok(Self {
            ambient_dim,
            subspaces,
            weights,
        })
    }

    pub fn unweighted(subspaces: Vec<Subspace>) -> Result<Self> {
        let n = subspaces.len();
        Self::new(subspaces, vec![1.0; n])
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn len(&self) -> usize {
        self.subspaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subspaces.is_empty()
    }

    pub fn subspaces(&self) -> &[Subspace] {
        &self.subspaces
    }

    pub fn subspace(&self, n: usize) -> &Subspace {
        &self.subspaces[n]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_unweighted(&self) -> bool {
        self.weights.iter().all(|&w| w == 1.0)
    }

    /// Largest subspace dimension `d*`.
    pub fn max_dim(&self) -> usize {
        self.subspaces.iter().map(Subspace::dim).max().unwrap_or(0)
    }

    /// Sum of subspace dimensions, the dimension of the direct sum.
    pub fn total_dim(&self) -> usize {
        self.subspaces.iter().map(Subspace::dim).sum()
    }

    /// The first `n` subspaces as a frame of their own.
    pub fn prefix(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.len() {
            return Err(Error::BadParameter(format!(
                "prefix length {n} outside 1..={}",
                self.len()
            )));
        }
        Self::new(self.subspaces[..n].to_vec(), self.weights[..n].to_vec())
    }

    /// `T x = {c_n P_{W_n} x}`.
    pub fn analysis(&self, x: &Vector) -> Result<BlockVector> {
        check_dim(self.ambient_dim, x.len())?;
        Ok(BlockVector {
            blocks: self
                .subspaces
                .iter()
                .zip(&self.weights)
                .map(|(s, &c)| s.project_unchecked(x) * c)
                .collect(),
        })
    }

    /// `T* w = Σ c_n w_n`.
    pub fn synthesis(&self, w: &BlockVector) -> Result<Vector> {
        check_dim(self.len(), w.len())?;
        let mut out = Vector::zeros(self.ambient_dim);
        for (b, &c) in w.blocks.iter().zip(&self.weights) {
            check_dim(self.ambient_dim, b.len())?;
            out.axpy(c, b, 1.0);
        }
        Ok(out)
    }

    /// `S = Σ c_n² P_{W_n}`.
    pub fn frame_operator(&self) -> Matrix {
        let d = self.ambient_dim;
        self.subspaces
            .iter()
            .zip(&self.weights)
            .fold(Matrix::zeros(d, d), |acc, (s, &c)| acc + s.projector() * (c * c))
    }

    pub fn frame_bounds(&self) -> FrameBounds {
        let (lower, upper) = numerics::symmetric_eigen_bounds(&self.frame_operator());
        FrameBounds { lower, upper }
    }

    /// Ambient `N d × d` matrix of the analysis operator (stacked `c_n P_n`).
    pub fn analysis_matrix(&self) -> Matrix {
        let d = self.ambient_dim;
        let mut t = Matrix::zeros(self.len() * d, d);
        for (n, (s, &c)) in self.subspaces.iter().zip(&self.weights).enumerate() {
            t.view_mut((n * d, 0), (d, d)).copy_from(&(s.projector() * c));
        }
        t
    }

    /// Whether every block lies in its subspace, to `tol` relative.
    pub fn contains(&self, w: &BlockVector, tol: f64) -> bool {
        w.len() == self.len()
            && w.blocks
                .iter()
                .zip(&self.subspaces)
                .all(|(b, s)| s.contains(b, tol))
    }

    pub fn to_json(&self) -> FrameJson {
        FrameJson {
            ambient_dim: self.ambient_dim,
            weights: self.weights.clone(),
            bases: self
                .subspaces
                .iter()
                .map(|s| {
                    s.basis()
                        .column_iter()
                        .map(|c| c.iter().copied().collect())
                        .collect()
                })
                .collect(),
        }
    }

    pub fn from_json(json: &FrameJson) -> Result<Self> {
        check_dim(json.bases.len(), json.weights.len())?;
        let subspaces = json
            .bases
            .iter()
            .map(|cols| {
                for c in cols {
                    check_dim(json.ambient_dim, c.len())?;
                }
                let flat: Vec<f64> = cols.iter().flatten().copied().collect();
                Subspace::from_orthonormal(Matrix::from_column_slice(
                    json.ambient_dim,
                    cols.len(),
                    &flat,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(subspaces, json.weights.clone())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.to_json())?)?;
        Ok(())
    }
}

/// On-disk frame layout: one list of basis column vectors per subspace.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FrameJson {
    pub ambient_dim: usize,
    pub weights: Vec<f64>,
    pub bases: Vec<Vec<Vec<f64>>>,
}

/// Unit normal `φ_n^N` of the `n`-th plane (1-based `n`) of the R³ family.
pub fn r3_normal(n: usize, big_n: usize) -> Vector {
    let t = 2.0 * PI * n as f64 / big_n as f64;
    let s = (2.0_f64 / 3.0).sqrt();
    Vector::from_vec(vec![1.0 / 3.0_f64.sqrt(), s * t.cos(), s * t.sin()])
}

/// Orthonormal basis `(e_{1,n}, e_{2,n})` of the `n`-th plane (1-based).
pub fn r3_basis(n: usize, big_n: usize) -> Matrix {
    let t = 2.0 * PI * n as f64 / big_n as f64;
    let c = 1.0 / 3.0_f64.sqrt();
    Matrix::from_column_slice(
        3,
        2,
        &[
            0.0,
            t.sin(),
            -t.cos(),
            -2.0_f64.sqrt() * c,
            c * t.cos(),
            c * t.sin(),
        ],
    )
}

/// The tight frame of `N` planes in `R³` orthogonal to
/// `(1/√3, √(2/3) cos(2πn/N), √(2/3) sin(2πn/N))`, frame bound `2N/3`.
pub fn example_frame_r3(big_n: usize) -> Result<FusionFrame> {
    if big_n < 3 {
        return Err(Error::BadParameter(format!("R³ family needs N ≥ 3, got {big_n}")));
    }
    let subspaces = (1..=big_n)
        .map(|n| Subspace::from_orthonormal(r3_basis(n, big_n)))
        .collect::<Result<Vec<_>>>()?;
    FusionFrame::unweighted(subspaces)
}

/// Unweighted frame of subspaces spanned by orthonormalized Gaussian columns.
pub fn random_frame(d: usize, dims: &[usize], seed: u64) -> Result<FusionFrame> {
    if d == 0 || dims.is_empty() {
        return Err(Error::BadParameter("random frame needs d ≥ 1 and at least one subspace".into()));
    }
    if let Some(&m) = dims.iter().find(|&&m| m == 0 || m > d) {
        return Err(Error::BadParameter(format!("subspace dimension {m} outside 1..={d}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut subspaces = Vec::with_capacity(dims.len());
    for &m in dims {
        let s = loop {
            let cols = Matrix::from_fn(d, m, |_, _| StandardNormal.sample(&mut rng));
            match Subspace::from_span(&cols) {
                Ok(s) => break s,
                Err(Error::RankDeficient { .. }) => continue,
                Err(e) => return Err(e),
            }
        };
        subspaces.push(s);
    }
    FusionFrame::unweighted(subspaces)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(d: usize, coords: &[f64]) -> Subspace {
        Subspace::from_span(&Matrix::from_column_slice(d, 1, coords)).unwrap()
    }

    #[test]
    fn project_onto_axis() {
        let w = line(2, &[1.0, 0.0]);
        let p = w.project(&Vector::from_vec(vec![3.0, 4.0])).unwrap();
        assert_eq!(p, Vector::from_vec(vec![3.0, 0.0]));
        let inside = Vector::from_vec(vec![-2.0, 0.0]);
        assert!((w.project(&inside).unwrap() - &inside).norm() < 1e-15);
        assert!(matches!(
            w.project(&Vector::zeros(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn r3_plane_projector_is_identity_minus_normal_dyad() {
        let n = 4;
        let w = Subspace::from_orthonormal(r3_basis(1, n)).unwrap();
        let phi = r3_normal(1, n);
        let e1 = Vector::from_vec(vec![1.0, 0.0, 0.0]);
        let expected = &e1 - &phi * phi.dot(&e1);
        assert!((w.project(&e1).unwrap() - expected).norm() < 1e-14);
    }

    #[test]
    fn analysis_examples() {
        let f = example_frame_r3(3).unwrap();
        assert!(f.analysis(&Vector::zeros(3)).unwrap().norm() == 0.0);

        let e1 = Vector::from_vec(vec![1.0, 0.0, 0.0]);
        let y = f.analysis(&e1).unwrap();
        for n in 1..=3 {
            let phi = r3_normal(n, 3);
            // P e1 = e1 − ⟨e1, φ⟩ φ with ⟨e1, φ⟩ = 1/√3.
            let expected = &e1 - &phi / 3.0_f64.sqrt();
            assert!((&y.blocks[n - 1] - expected).norm() < 1e-14);
        }

        let whole = FusionFrame::unweighted(vec![Subspace::full(3)]).unwrap();
        let x = Vector::from_vec(vec![1.0, -2.0, 0.5]);
        assert_eq!(whole.analysis(&x).unwrap().blocks, vec![x]);
    }

    #[test]
    fn synthesis_examples() {
        let f = random_frame(3, &[2, 1, 2], 7).unwrap();
        assert_eq!(f.synthesis(&BlockVector::zeros(3, 3)).unwrap(), Vector::zeros(3));

        let one = FusionFrame::unweighted(vec![line(2, &[0.6, 0.8])]).unwrap();
        let fvec = Vector::from_vec(vec![0.3, 0.4]);
        let w = BlockVector { blocks: vec![fvec.clone()] };
        assert_eq!(one.synthesis(&w).unwrap(), fvec);

        let x = Vector::from_vec(vec![0.2, -1.0, 3.0]);
        let tstar_t = f.synthesis(&f.analysis(&x).unwrap()).unwrap();
        assert!((tstar_t - f.frame_operator() * &x).norm() < 1e-13);

        assert!(matches!(
            f.synthesis(&BlockVector::zeros(2, 3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn frame_operator_examples() {
        let whole = FusionFrame::unweighted(vec![Subspace::full(4)]).unwrap();
        assert!((whole.frame_operator() - Matrix::identity(4, 4)).abs().max() < 1e-15);

        let f = example_frame_r3(12).unwrap();
        assert!((f.frame_operator() - Matrix::identity(3, 3) * 8.0).abs().max() < 1e-10);

        let axes = FusionFrame::unweighted(vec![line(2, &[1.0, 0.0]), line(2, &[0.0, 1.0])]).unwrap();
        assert!((axes.frame_operator() - Matrix::identity(2, 2)).abs().max() < 1e-15);
    }

    #[test]
    fn frame_bounds_examples() {
        let b = example_frame_r3(30).unwrap().frame_bounds();
        assert!((b.lower - 20.0).abs() < 1e-8 && (b.upper - 20.0).abs() < 1e-8);
        assert!(b.is_tight() && b.is_frame());

        let single = FusionFrame::unweighted(vec![line(2, &[1.0, 1.0])]).unwrap().frame_bounds();
        assert!(single.lower.abs() < 1e-14);
        assert!(!single.is_frame());

        let axes = FusionFrame::unweighted(vec![
            line(3, &[1.0, 0.0, 0.0]),
            line(3, &[0.0, 1.0, 0.0]),
            line(3, &[0.0, 0.0, 1.0]),
        ])
        .unwrap()
        .frame_bounds();
        assert!((axes.lower - 1.0).abs() < 1e-14 && (axes.upper - 1.0).abs() < 1e-14);
    }

    #[test]
    fn r3_family_formulas() {
        assert!(matches!(example_frame_r3(2), Err(Error::BadParameter(_))));
        for big_n in [3, 5, 17] {
            for n in 1..=big_n {
                let phi = r3_normal(n, big_n);
                assert!((phi.norm() - 1.0).abs() < 1e-15);
                let b = r3_basis(n, big_n);
                let (e1, e2) = (b.column(0), b.column(1));
                assert!(e1.dot(&e2).abs() < 1e-15);
                assert!(e1.dot(&phi).abs() < 1e-15 && e2.dot(&phi).abs() < 1e-15);
                assert!((e1.norm() - 1.0).abs() < 1e-15 && (e2.norm() - 1.0).abs() < 1e-15);
            }
            let b = example_frame_r3(big_n).unwrap().frame_bounds();
            let a = 2.0 * big_n as f64 / 3.0;
            assert!((b.lower - a).abs() < 1e-10 && (b.upper - a).abs() < 1e-10);
        }
    }

    #[test]
    fn r3_family_is_tight() {
        for big_n in [3, 4, 7, 30, 100] {
            let s = example_frame_r3(big_n).unwrap().frame_operator();
            let a = 2.0 * big_n as f64 / 3.0;
            assert!(numerics::max_abs(&(s - Matrix::identity(3, 3) * a)) <= 1e-9);
        }
    }

    #[test]
    fn random_frame_examples() {
        let a = random_frame(4, &[1, 2, 3], 42).unwrap();
        let b = random_frame(4, &[1, 2, 3], 42).unwrap();
        for (sa, sb) in a.subspaces().iter().zip(b.subspaces()) {
            assert_eq!(sa.basis(), sb.basis());
        }

        let whole = random_frame(3, &[3], 5).unwrap();
        assert!((whole.subspace(0).projector() - Matrix::identity(3, 3)).abs().max() < 1e-12);

        let f = random_frame(3, &[2, 2, 2, 2], 1).unwrap();
        assert!(f.frame_bounds().lower > 0.0);

        assert!(matches!(random_frame(3, &[4], 1), Err(Error::BadParameter(_))));
        assert!(matches!(random_frame(3, &[0], 1), Err(Error::BadParameter(_))));
    }

    #[test]
    fn projectors_symmetric_idempotent() {
        let f = random_frame(5, &[1, 2, 3, 4, 5], 11).unwrap();
        for s in f.subspaces() {
            let p = s.projector();
            assert!(numerics::max_abs(&(p * p - p)) <= 1e-10);
            assert!(numerics::max_abs(&(p - p.transpose())) <= 1e-10);
        }
    }

    #[test]
    fn weights_validated() {
        let s = vec![Subspace::full(2)];
        assert!(FusionFrame::new(s.clone(), vec![0.0]).is_err());
        assert!(FusionFrame::new(s.clone(), vec![1.0, 1.0]).is_err());
        let weighted = FusionFrame::new(s, vec![2.0]).unwrap();
        assert!(!weighted.is_unweighted());
        assert!((weighted.frame_operator() - Matrix::identity(2, 2) * 4.0).abs().max() < 1e-15);
    }

    #[test]
    fn json_round_trip() {
        let f = random_frame(3, &[1, 2, 2], 3).unwrap();
        let json = serde_json::to_string(&f.to_json()).unwrap();
        let back = FusionFrame::from_json(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back.to_json(), f.to_json());

        let mut bad = f.to_json();
        bad.bases[0][0] = vec![2.0, 0.0, 0.0];
        assert!(FusionFrame::from_json(&bad).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn vec3() -> impl Strategy<Value = Vector> {
            proptest::collection::vec(-5.0..5.0f64, 3).prop_map(Vector::from_vec)
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(100))]

            #[test]
            fn frame_inequality(x in vec3(), seed in 0u64..20) {
                let f = random_frame(3, &[2, 1, 2, 1], seed).unwrap();
                let b = f.frame_bounds();
                let energy: f64 = f.analysis(&x).unwrap().blocks.iter().map(|v| v.norm_squared()).sum();
                let xx = x.norm_squared();
                prop_assert!(b.lower * xx <= energy + 1e-8 * energy.max(1e-14));
                prop_assert!(energy <= b.upper * xx + 1e-8 * (b.upper * xx).max(1e-14));
            }

            #[test]
            fn canonical_reconstruction_formula(x in vec3(), seed in 0u64..20, big_n in 3usize..40) {
                for f in [example_frame_r3(big_n).unwrap(), random_frame(3, &[2, 2, 1, 2], seed).unwrap()] {
                    if !f.frame_bounds().is_frame() {
                        continue;
                    }
                    let s = f.frame_operator();
                    let y = f.analysis(&x).unwrap();
                    let sum = y.blocks.iter().zip(f.weights())
                        .fold(Vector::zeros(3), |acc, (b, c)| acc + b * *c);
                    let lu = s.lu();
                    let rec = lu.solve(&sum).unwrap();
                    prop_assert!((rec - &x).norm() <= 1e-8 * x.norm().max(1.0));
                }
            }
        }
    }
}
