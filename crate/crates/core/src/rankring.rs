//! Finite levels of a rank ring: weighted direct sums of matrix algebras.
//!
//! An element of a level is a [`BlockOperator`] `⊕ (p_α, A_α)`. The
//! normalized rank is `Σ p_α · Rank(A_α) / n_α`, and the spectral function
//! `σ_T(λ)` is the weighted fraction of singular values of the blocks that
//! are `≤ λ`. For positive self-adjoint blocks this coincides with the
//! weighted eigenvalue counting function.

use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::{self, LinalgError, Matrix};
use crate::stepfn::{self, StepFunction, TailFunction, MASS_TOL};

#[derive(Debug, Error, PartialEq)]
pub enum RankError {
    #[error("block operator has no blocks")]
    Empty,
    #[error("block {index} has non-positive weight {weight}")]
    NonPositiveWeight { index: usize, weight: f64 },
    #[error("block weights sum to {0}, expected 1")]
    WeightSum(f64),
    #[error("operators are not compatible: {0}")]
    Incompatible(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub weight: f64,
    pub matrix: Matrix,
}

/// Weighted direct sum of square matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockOperator {
    blocks: Vec<Block>,
    level: Option<usize>,
}

impl BlockOperator {
    pub fn new(blocks: Vec<Block>) -> Result<Self, RankError> {
        if blocks.is_empty() {
            return Err(RankError::Empty);
        }
        for (index, b) in blocks.iter().enumerate() {
            if !(b.weight > 0.0 && b.weight <= 1.0 + MASS_TOL) {
                return Err(RankError::NonPositiveWeight {
                    index,
                    weight: b.weight,
                });
            }
        }
        let sum = stepfn::neumaier_sum(blocks.iter().map(|b| b.weight));
        if (sum - 1.0).abs() > MASS_TOL {
            return Err(RankError::WeightSum(sum));
        }
        Ok(Self {
            blocks,
            level: None,
        })
    }

    pub fn from_parts(parts: Vec<(f64, Matrix)>) -> Result<Self, RankError> {
        Self::new(
            parts
                .into_iter()
                .map(|(weight, matrix)| Block { weight, matrix })
                .collect(),
        )
    }

    pub fn with_level(mut self, level: usize) -> Self {
        self.level = Some(level);
        self
    }

    pub fn level(&self) -> Option<usize> {
        self.level
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Same block count, weights and block sizes.
    pub fn is_compatible(&self, other: &Self) -> bool {
        self.blocks.len() == other.blocks.len()
            && self
                .blocks
                .iter()
                .zip(&other.blocks)
                .all(|(a, b)| a.weight == b.weight && a.matrix.dim() == b.matrix.dim())
    }

    fn zip_blocks(
        &self,
        other: &Self,
        op: impl Fn(&Matrix, &Matrix) -> Result<Matrix, LinalgError>,
    ) -> Result<Self, RankError> {
        if !self.is_compatible(other) {
            return Err(RankError::Incompatible(format!(
                "{} blocks vs {} blocks or differing weights/sizes",
                self.blocks.len(),
                other.blocks.len()
            )));
        }
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| {
                Ok(Block {
                    weight: a.weight,
                    matrix: op(&a.matrix, &b.matrix)?,
                })
            })
            .collect::<Result<Vec<_>, LinalgError>>()?;
        Ok(Self {
            blocks,
            level: self.level,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self, RankError> {
        self.zip_blocks(other, Matrix::add)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, RankError> {
        self.zip_blocks(other, Matrix::sub)
    }

    pub fn mul(&self, other: &Self) -> Result<Self, RankError> {
        self.zip_blocks(other, Matrix::mul)
    }

    /// Normalized rank `Σ p_α Rank(A_α) / n_α` with numerical ranks taken at
    /// relative tolerance `tol`.
    pub fn rank(&self, tol: f64) -> Result<f64, RankError> {
        let ranks: Vec<f64> = self
            .blocks
            .par_iter()
            .map(|b| {
                let r = linalg::numerical_rank(&b.matrix, tol)?;
                Ok(b.weight * r as f64 / b.matrix.dim() as f64)
            })
            .collect::<Result<_, LinalgError>>()?;
        Ok(stepfn::neumaier_sum(ranks).clamp(0.0, 1.0))
    }

    /// Singular values of each block, in block order.
    pub fn block_singular_values(&self) -> Result<Vec<Vec<f64>>, RankError> {
        Ok(self
            .blocks
            .par_iter()
            .map(|b| linalg::singular_values(&b.matrix))
            .collect::<Result<_, LinalgError>>()?)
    }

    /// `σ_T(λ) = Σ p_α · #{singular values of A_α ≤ λ} / n_α`.
    pub fn sigma(&self) -> Result<StepFunction, RankError> {
        let singular = self.block_singular_values()?;
        Ok(weighted_counting(
            self.blocks
                .iter()
                .zip(&singular)
                .map(|(b, s)| (b.weight, s.as_slice())),
        ))
    }

    /// `σ̃_T = 1 − σ_T`, the maximal λ⁺-space dimension.
    pub fn sigma_tilde(&self) -> Result<TailFunction, RankError> {
        Ok(self.sigma()?.complement())
    }
}

/// Weighted merge of per-block spectra, each normalized by its own length.
/// When all parts have weight `1/K` and a common length `n` the result is
/// built from integer counts over `K·n`, so its values are exact ratios.
pub(crate) fn weighted_counting<'a>(
    parts: impl Iterator<Item = (f64, &'a [f64])>,
) -> StepFunction {
    let parts: Vec<(f64, &[f64])> = parts.collect();
    let k = parts.len();
    let n = parts.first().map_or(0, |p| p.1.len());
    if k > 0 && n > 0 && parts.iter().all(|&(w, v)| w == 1.0 / k as f64 && v.len() == n) {
        let values = parts.iter().flat_map(|p| p.1.iter().copied()).collect();
        return StepFunction::from_counts(values, k * n);
    }
    let mut jumps = Vec::new();
    for (w, values) in parts {
        let mass = w / values.len() as f64;
        jumps.extend(values.iter().map(|&v| (v, mass)));
    }
    StepFunction::from_jumps(jumps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{SymMatrix, DEFAULT_RANK_TOL};
    use crate::stepfn::sup_distance;

    fn m(dim: usize, data: &[f64]) -> Matrix {
        Matrix::new(dim, data.to_vec()).unwrap()
    }

    #[test]
    fn construction_checks_weights() {
        assert_eq!(BlockOperator::new(vec![]), Err(RankError::Empty));
        assert!(matches!(
            BlockOperator::from_parts(vec![(0.0, Matrix::identity(1)), (1.0, Matrix::identity(1))]),
            Err(RankError::NonPositiveWeight { index: 0, .. })
        ));
        assert!(matches!(
            BlockOperator::from_parts(vec![(0.5, Matrix::identity(1)), (0.4, Matrix::identity(1))]),
            Err(RankError::WeightSum(_))
        ));
    }

    #[test]
    fn rank_examples() {
        let ident = BlockOperator::from_parts(vec![
            (0.3, Matrix::identity(2)),
            (0.7, Matrix::identity(5)),
        ])
        .unwrap();
        assert_eq!(ident.rank(DEFAULT_RANK_TOL).unwrap(), 1.0);

        let zero = BlockOperator::from_parts(vec![(0.3, Matrix::zeros(2)), (0.7, Matrix::zeros(5))])
            .unwrap();
        assert_eq!(zero.rank(DEFAULT_RANK_TOL).unwrap(), 0.0);

        let half = BlockOperator::from_parts(vec![(0.5, Matrix::identity(2)), (0.5, Matrix::zeros(2))])
            .unwrap();
        assert_eq!(half.rank(DEFAULT_RANK_TOL).unwrap(), 0.5);

        let ones = BlockOperator::from_parts(vec![(1.0, m(2, &[1.0, 1.0, 1.0, 1.0]))]).unwrap();
        assert_eq!(ones.rank(DEFAULT_RANK_TOL).unwrap(), 0.5);
    }

    #[test]
    fn sigma_examples() {
        let path = BlockOperator::from_parts(vec![(1.0, m(2, &[1.0, -1.0, -1.0, 1.0]))]).unwrap();
        let s = path.sigma().unwrap();
        let expected = StepFunction::from_samples(&[0.0, 2.0], &[0.5, 0.5]).unwrap();
        assert!(sup_distance(&s, &expected) == 0.0);

        let ident = BlockOperator::from_parts(vec![(1.0, Matrix::identity(3))]).unwrap();
        let s = ident.sigma().unwrap();
        assert_eq!((s.breakpoints(), s.cumulative()), (&[1.0][..], &[1.0][..]));
        let t = ident.sigma_tilde().unwrap();
        assert_eq!(t.eval(0.999), 1.0);
        assert_eq!(t.eval(1.0), 0.0);
    }

    #[test]
    fn sigma_tilde_of_zero_operator_vanishes() {
        let zero = BlockOperator::from_parts(vec![(1.0, Matrix::zeros(3))]).unwrap();
        let t = zero.sigma_tilde().unwrap();
        assert_eq!(t.eval(0.0), 0.0);
        assert_eq!(t.eval(10.0), 0.0);
    }

    #[test]
    fn sigma_uses_singular_values_for_general_blocks() {
        // Nilpotent block: eigenvalues {0, 0}, singular values {0, 1}.
        let nil = BlockOperator::from_parts(vec![(1.0, m(2, &[0.0, 1.0, 0.0, 0.0]))]).unwrap();
        let s = nil.sigma().unwrap();
        assert_eq!(s.eval(0.0), 0.5);
        assert_eq!(s.eval(1.0), 1.0);
        // Negative definite: singular values are |eigenvalues|.
        let neg = BlockOperator::from_parts(vec![(1.0, m(1, &[-3.0]))]).unwrap();
        assert_eq!(neg.sigma().unwrap().breakpoints(), &[3.0]);
    }

    #[test]
    fn sigma_matches_weighted_eigenvalue_counting_on_psd_blocks() {
        let a = SymMatrix::new(2, vec![2.0, -1.0, -1.0, 3.0]).unwrap();
        let b = SymMatrix::diagonal(&[1.0, 4.0, 4.0]);
        let op = BlockOperator::from_parts(vec![
            (0.25, a.as_matrix().clone()),
            (0.75, b.as_matrix().clone()),
        ])
        .unwrap();
        let na = linalg::spectral_distribution(&a).unwrap();
        let nb = linalg::spectral_distribution(&b).unwrap();
        let weighted = stepfn::mix(&[(0.25, &na), (0.75, &nb)]).unwrap();
        assert!(sup_distance(&op.sigma().unwrap(), &weighted) < 1e-15);
    }

    #[test]
    fn arithmetic_requires_compatible_shapes() {
        let a = BlockOperator::from_parts(vec![(1.0, Matrix::identity(2))]).unwrap();
        let b = BlockOperator::from_parts(vec![(1.0, Matrix::identity(3))]).unwrap();
        assert!(matches!(a.sub(&b), Err(RankError::Incompatible(_))));
        let d = a.sub(&a).unwrap();
        assert_eq!(d.rank(DEFAULT_RANK_TOL).unwrap(), 0.0);
    }
}
