//! Systematic scalar MDS code `[I; Cauchy]`. Used directly as the Reed-Solomon
//! baseline and per layer as the uncoupled code inside Clay.

use super::gf::{mul_add_slice, Gf};
use super::matrix::Matrix;
use super::CodecError;

#[derive(Clone, Debug)]
pub struct MdsCode {
    k: usize,
    n: usize,
    generator: Matrix,
}

/// Coefficients expressing `wanted` symbols as combinations of `known` ones.
#[derive(Clone, Debug)]
pub struct RecoveryPlan {
    pub known: Vec<usize>,
    pub wanted: Vec<usize>,
    coefficients: Matrix,
}

impl MdsCode {
    pub fn new(k: usize, n: usize) -> Result<Self, CodecError> {
        if k == 0 || n <= k || n > 255 {
            return Err(CodecError::InvalidParams(format!(
                "MDS code needs 1 <= k < n <= 255, got k={k} n={n}"
            )));
        }
        let generator = Matrix::vstack(&Matrix::identity(k), &Matrix::cauchy(n - k, k));
        Ok(MdsCode { k, n, generator })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Build the linear map from the first `k` entries of `known` to `wanted`.
    pub fn plan(&self, known: &[usize], wanted: &[usize]) -> Result<RecoveryPlan, CodecError> {
        if known.len() < self.k {
            return Err(CodecError::InsufficientShards {
                have: known.len(),
                need: self.k,
            });
        }
        let known: Vec<usize> = known[..self.k].to_vec();
        let basis = self
            .generator
            .select_rows(&known)
            .invert()
            .expect("every k rows of a systematic Cauchy generator are independent");
        let coefficients = self.generator.select_rows(wanted).mul(&basis);
        Ok(RecoveryPlan {
            known,
            wanted: wanted.to_vec(),
            coefficients,
        })
    }

    /// Parity symbols for `data` (k equal-length slices).
    pub fn encode_parity(&self, data: &[&[u8]], parity: &mut [Vec<u8>]) {
        debug_assert_eq!(data.len(), self.k);
        debug_assert_eq!(parity.len(), self.n - self.k);
        for (p, out) in parity.iter_mut().enumerate() {
            out.fill(0);
            let row = self.generator.row(self.k + p);
            for (j, src) in data.iter().enumerate() {
                mul_add_slice(out, src, row[j]);
            }
        }
    }
}

impl RecoveryPlan {
    /// `outputs[i] = sum_j coeff[i][j] * inputs[j]`, where `inputs` follow
    /// `self.known` order and `outputs` follow `self.wanted` order.
    pub fn apply(&self, inputs: &[&[u8]], outputs: &mut [&mut [u8]]) {
        debug_assert_eq!(inputs.len(), self.known.len());
        debug_assert_eq!(outputs.len(), self.wanted.len());
        for (i, out) in outputs.iter_mut().enumerate() {
            out.fill(0);
            for (j, src) in inputs.iter().enumerate() {
                mul_add_slice(out, src, self.coefficients[(i, j)]);
            }
        }
    }

    pub fn coefficient(&self, wanted_pos: usize, known_pos: usize) -> Gf {
        self.coefficients[(wanted_pos, known_pos)]
    }
}
