//! Low-bit, high-order Sigma-Delta quantization for fusion frames.
//!
//! Measurements `y_n = P_{W_n} x` of a signal `x ∈ R^d` on subspaces `W_n`
//! are quantized sequentially to simplex alphabets of `dim(W_n) + 1`
//! vectors by an `r`th order noise-shaping recursion, and the signal is
//! recovered with a canonical or Sobolev left inverse of the analysis
//! operator.
//!
//! ```
//! use ffsd::{example_frame_r3, ffsd_run, sobolev_left_inverse, FilterSpec, Vector};
//!
//! let frame = example_frame_r3(300).unwrap();
//! let filter = FilterSpec::new(2, 50).unwrap();
//! let x = Vector::from_vec(vec![0.04, 0.05, 0.06]);
//! let y = frame.analysis(&x).unwrap();
//! let run = ffsd_run(&frame, &filter, &y).unwrap();
//! let l = sobolev_left_inverse(&frame, 2).unwrap();
//! let x_rec = l.reconstruct(&run.q).unwrap();
//! assert!((x - x_rec).norm() < 1e-2);
//! ```

pub mod alphabet;
pub mod block_ops;
pub mod error;
pub mod filter;
pub mod fusion_frame;
pub mod harness;
pub mod numerics;
pub mod quantizer;
pub mod reconstruction;

pub use alphabet::{frame_alphabets, Alphabet};
pub use block_ops::{
    build_d, build_d_inv_pow, build_g, build_h, build_i_minus_h, factorization_residual, BasisEmbedding,
    BlockOperator, FilterOps,
};
pub use error::{Error, Result};
pub use filter::{min_sigma_for_alpha, stability_params, FilterSpec, StabilityParams};
pub use fusion_frame::{example_frame_r3, random_frame, BlockVector, FusionFrame, Subspace};
pub use numerics::{Matrix, Vector};
pub use quantizer::{ffsd_run, memoryless_run, recursion_residual, RunResult};
pub use reconstruction::{
    canonical_left_inverse, error_diagnostics, sobolev_left_inverse, LeftInverse,
};
