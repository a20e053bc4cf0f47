//! The fusion-frame Sigma-Delta iteration and the memoryless baseline.
//!
//! At step `n ≥ 1`
//!
//! ```text
//! s_n = Σ_j h_j P_{W_n} ⋯ P_{W_{n-j+1}} v_{n-j}      (taps with n > j)
//! q_n = Q_n(y_n + s_n)
//! v_n = y_n - q_n + s_n
//! ```
//!
//! with zero initial state. Only the `r` nonzero taps are evaluated.

use std::collections::VecDeque;

use log::warn;

use crate::alphabet::{frame_alphabets, Alphabet};
use crate::block_ops::FilterOps;
use crate::error::{check_dim, Error, Result};
use crate::filter::{FilterSpec, StabilityParams};
use crate::fusion_frame::{BlockVector, FusionFrame};
use crate::numerics::Vector;

#[derive(Clone, Debug)]
pub struct RunResult {
    pub q: BlockVector,
    pub q_indices: Vec<usize>,
    pub v: BlockVector,
    pub max_state_norm: f64,
}

impl RunResult {
    fn from_steps(steps: Vec<Step>) -> Self {
        let mut q = Vec::with_capacity(steps.len());
        let mut v = Vec::with_capacity(steps.len());
        let mut q_indices = Vec::with_capacity(steps.len());
        let mut max_state_norm = 0.0_f64;
        for s in steps {
            max_state_norm = max_state_norm.max(s.v.norm());
            q_indices.push(s.index);
            q.push(s.q);
            v.push(s.v);
        }
        Self {
            q: BlockVector { blocks: q },
            q_indices,
            v: BlockVector { blocks: v },
            max_state_norm,
        }
    }
}

/// Output of a single iteration step.
#[derive(Clone, Debug)]
pub struct Step {
    pub index: usize,
    pub q: Vector,
    pub v: Vector,
}

/// Streaming Sigma-Delta encoder: consumes measurements one subspace at a
/// time and emits alphabet indices.
///
/// Keeps exactly `L = n_r` past states.
pub struct FfsdEncoder<'a> {
    frame: &'a FusionFrame,
    alphabets: &'a [Alphabet],
    filter: &'a FilterSpec,
    /// Most recent state first.
    history: VecDeque<Vector>,
    step: usize,
}

impl<'a> FfsdEncoder<'a> {
    pub fn new(
        frame: &'a FusionFrame,
        alphabets: &'a [Alphabet],
        filter: &'a FilterSpec,
    ) -> Result<Self> {
        if let Some((index, &weight)) = frame.weights().iter().enumerate().find(|(_, &w)| w != 1.0) {
            return Err(Error::WeightedFrame { index, weight });
        }
        check_dim(frame.len(), alphabets.len())?;
        Ok(Self {
            frame,
            alphabets,
            filter,
            history: VecDeque::with_capacity(filter.length() + 1),
            step: 0,
        })
    }

    /// Number of steps taken so far.
    pub fn position(&self) -> usize {
        self.step
    }

    /// Feedback term `Σ_j H_{n,j}(v_{n-j})` for the next step.
    fn feedback(&self, n: usize) -> Vector {
        let d = self.frame.ambient_dim();
        let mut acc = Vector::zeros(d);
        for (j, h) in self.filter.taps() {
            if n <= j {
                continue;
            }
            let mut u = self.history[j - 1].clone();
            // P_{W_{n-j+1}} first, P_{W_n} last; subspaces are 0-based.
            for k in (n - j)..n {
                u = self.frame.subspace(k).project_unchecked(&u);
            }
            acc.axpy(h, &u, 1.0);
        }
        acc
    }

    pub fn push(&mut self, y: &Vector) -> Result<Step> {
        let n = self.step + 1;
        if n > self.frame.len() {
            return Err(Error::BadParameter(format!(
                "frame has only {} subspaces",
                self.frame.len()
            )));
        }
        check_dim(self.frame.ambient_dim(), y.len())?;
        let s = self.feedback(n);
        let z = y + &s;
        let subspace = self.frame.subspace(n - 1);
        let z = subspace.project_unchecked(&z);
        let alphabet = &self.alphabets[n - 1];
        let index = alphabet.quantize_index(&z);
        let q = alphabet.element(index).clone();
        let v = y - &q + s;

        self.history.push_front(v.clone());
        self.history.truncate(self.filter.length());
        self.step = n;
        Ok(Step { index, q, v })
    }
}

/// Runs the Sigma-Delta iteration over all of `y`.
pub fn ffsd_run(frame: &FusionFrame, filter: &FilterSpec, y: &BlockVector) -> Result<RunResult> {
    let alphabets = frame_alphabets(frame);
    ffsd_run_with(frame, &alphabets, filter, y)
}

pub fn ffsd_run_with(
    frame: &FusionFrame,
    alphabets: &[Alphabet],
    filter: &FilterSpec,
    y: &BlockVector,
) -> Result<RunResult> {
    check_dim(frame.len(), y.len())?;
    let mut enc = FfsdEncoder::new(frame, alphabets, filter)?;
    let steps = y
        .blocks
        .iter()
        .map(|yn| enc.push(yn))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunResult::from_steps(steps))
}

/// Outcome of comparing a run against the theoretical state bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StabilityCheck {
    /// Some input exceeded `δ`, so the bound does not apply.
    NotApplicable,
    Within,
    Violation,
}

/// Checks `max_n ‖v_n‖ ≤ C` when every input satisfies `‖y_n‖ ≤ δ`.
/// A violation means an implementation defect and is logged.
pub fn check_stability(y: &BlockVector, run: &RunResult, params: &StabilityParams) -> StabilityCheck {
    if y.norm_inf() > params.delta {
        return StabilityCheck::NotApplicable;
    }
    if run.max_state_norm <= params.c_bound * (1.0 + 1e-12) {
        StabilityCheck::Within
    } else {
        warn!(
            "state norm {} exceeds stability bound {}",
            run.max_state_norm, params.c_bound
        );
        StabilityCheck::Violation
    }
}

/// `q_n = Q_n(y_n)`, `v_n = y_n - q_n`.
pub fn memoryless_run(frame: &FusionFrame, y: &BlockVector) -> Result<RunResult> {
    check_dim(frame.len(), y.len())?;
    let alphabets = frame_alphabets(frame);
    let steps = y
        .blocks
        .iter()
        .zip(&alphabets)
        .map(|(yn, a)| {
            check_dim(frame.ambient_dim(), yn.len())?;
            let index = a.quantize_index(yn);
            let q = a.element(index).clone();
            let v = yn - &q;
            Ok(Step { index, q, v })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RunResult::from_steps(steps))
}

/// `‖y - q - (I - H) v‖` over the direct sum, with `H` applied through
/// precomputed projection chains rather than the loop's own arithmetic.
pub fn recursion_residual(
    frame: &FusionFrame,
    filter: &FilterSpec,
    y: &BlockVector,
    run: &RunResult,
) -> f64 {
    let ops = FilterOps::new(frame, filter);
    let v = run.v.stacked();
    let i_minus_h = &v - ops.apply_h(&v);
    (y.stacked() - run.q.stacked() - i_minus_h).norm()
}

/// Index-stream codecs: one unsigned integer per step.
pub mod codec {
    use super::*;

    pub fn to_csv(indices: &[usize]) -> String {
        let mut out = String::from("index\n");
        for i in indices {
            out.push_str(&i.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Vec<usize>> {
        let mut lines = text.lines();
        match lines.next() {
            Some("index") => {}
            other => {
                return Err(Error::BadData(format!("expected header `index`, got {other:?}")))
            }
        }
        lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.trim()
                    .parse()
                    .map_err(|e| Error::BadData(format!("bad index {l:?}: {e}")))
            })
            .collect()
    }

    pub fn to_json(indices: &[usize]) -> String {
        serde_json::to_string(indices).expect("integers serialize")
    }

    pub fn from_json(text: &str) -> Result<Vec<usize>> {
        Ok(serde_json::from_str(text)?)
    }

    /// Maps an index stream back to alphabet vectors.
    pub fn decode(alphabets: &[Alphabet], indices: &[usize]) -> Result<BlockVector> {
        check_dim(alphabets.len(), indices.len())?;
        let blocks = alphabets
            .iter()
            .zip(indices)
            .map(|(a, &i)| {
                if i < a.len() {
                    Ok(a.element(i).clone())
                } else {
                    Err(Error::BadData(format!("index {i} outside alphabet of size {}", a.len())))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BlockVector { blocks })
    }
}
