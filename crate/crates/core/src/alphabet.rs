//! Simplex alphabets: `m + 1` unit vectors in an `m`-dimensional subspace
//! with pairwise inner products `-1/m`, and the nearest-point quantizer.

use crate::fusion_frame::{FusionFrame, Subspace};
use crate::numerics::{self, Matrix, Vector};

#[derive(Clone, Debug)]
pub struct Alphabet {
    subspace: Subspace,
    /// Element coordinates in the subspace basis, one column per element.
    coords: Matrix,
    elements: Vec<Vector>,
    covering_angle: f64,
}

/// Coordinates of the regular simplex in `R^m`, one column per vertex.
///
/// The centered vertices of the standard simplex in `R^{m+1}` are expressed
/// in the basis obtained by orthonormalizing the first `m` of them, so vertex
/// 0 is `(1, 0, …, 0)` and vertex `k` has a positive `k`-th coordinate.
fn simplex_coordinates(m: usize) -> Matrix {
    let centered = Matrix::from_fn(m + 1, m + 1, |i, j| {
        let c = if i == j { 1.0 } else { 0.0 };
        c - 1.0 / (m + 1) as f64
    });
    let mut vertices = centered;
    for mut col in vertices.column_iter_mut() {
        let n = col.norm();
        col.unscale_mut(n);
    }
    let frame = numerics::orthonormalize(&vertices.columns(0, m).clone_owned())
        .expect("simplex vertices are affinely independent");
    frame.transpose() * vertices
}

impl Alphabet {
    pub fn simplex(subspace: &Subspace) -> Self {
        let m = subspace.dim();
        let coords = simplex_coordinates(m);
        let elements = coords
            .column_iter()
            .map(|c| subspace.basis() * c)
            .collect();
        Self {
            subspace: subspace.clone(),
            coords,
            elements,
            covering_angle: (1.0 / m as f64).acos(),
        }
    }

    pub fn subspace(&self) -> &Subspace {
        &self.subspace
    }

    pub fn elements(&self) -> &[Vector] {
        &self.elements
    }

    pub fn element(&self, index: usize) -> &Vector {
        &self.elements[index]
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// `arccos(1/m)`: every nonzero vector of the subspace is within this
    /// angle of some element.
    pub fn covering_angle(&self) -> f64 {
        self.covering_angle
    }

    /// `log₂(m + 1)`.
    pub fn bits(&self) -> f64 {
        (self.len() as f64).log2()
    }

    /// Index of the element nearest to `w` after projecting `w` onto the
    /// subspace. Ties go to the smallest index, so `w = 0` maps to 0.
    pub fn quantize_index(&self, w: &Vector) -> usize {
        // Unit-norm elements: nearest point = largest inner product.
        let coords = self.subspace.coordinates(w);
        let scores = self.coords.tr_mul(&coords);
        let mut best = 0;
        for k in 1..scores.len() {
            if scores[k] > scores[best] {
                best = k;
            }
        }
        best
    }

    pub fn quantize(&self, w: &Vector) -> (&Vector, usize) {
        let k = self.quantize_index(w);
        (&self.elements[k], k)
    }
}

/// One simplex alphabet per subspace of `frame`.
pub fn frame_alphabets(frame: &FusionFrame) -> Vec<Alphabet> {
    frame.subspaces().iter().map(Alphabet::simplex).collect()
}
