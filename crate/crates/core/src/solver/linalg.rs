//! Sparse SPD factorizations of Laplacian blocks.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

use crate::energy::VolLaplacian;

/// Sparse Cholesky factor `A = L Lᵀ` computed with a fill-reducing (AMD)
/// ordering.
#[derive(Clone, Debug)]
pub struct SpdFactor {
    llt: Option<Llt<usize, f64>>,
    n: usize,
}

#[derive(Debug)]
pub(crate) enum FactorError {
    NotPositiveDefinite,
    Other,
}

impl SpdFactor {
    /// Factors the symmetric matrix whose lower triangle is given as
    /// triplets. `symbolic` is reused when the pattern matches.
    pub(crate) fn from_lower_triplets(
        n: usize,
        lower: &[Triplet<usize, usize, f64>],
        symbolic: Option<&SymbolicLlt<usize>>,
    ) -> Result<(Self, Option<SymbolicLlt<usize>>), FactorError> {
        if n == 0 {
            return Ok((SpdFactor { llt: None, n }, None));
        }
        let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, lower)
            .map_err(|_| FactorError::Other)?;
        let symbolic = match symbolic {
            Some(s) => s.clone(),
            None => SymbolicLlt::try_new(a.symbolic(), Side::Lower).map_err(|_| FactorError::Other)?,
        };
        let llt = Llt::try_new_with_symbolic(symbolic.clone(), a.as_ref(), Side::Lower).map_err(|e| {
            match e {
                faer::sparse::linalg::LltError::Numeric(_) => FactorError::NotPositiveDefinite,
                faer::sparse::linalg::LltError::Generic(_) => FactorError::Other,
            }
        })?;
        Ok((SpdFactor { llt: Some(llt), n }, Some(symbolic)))
    }

    /// Factors a dense symmetric matrix; used for small systems and tests.
    pub fn from_dense(a: &nalgebra::DMatrix<f64>) -> Option<Self> {
        let n = a.nrows();
        let lower: Vec<_> = (0..n)
            .flat_map(|j| (j..n).map(move |i| (i, j)))
            .filter(|&(i, j)| a[(i, j)] != 0.0)
            .map(|(i, j)| Triplet::new(i, j, a[(i, j)]))
            .collect();
        Self::from_lower_triplets(n, &lower, None).ok().map(|(f, _)| f)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_columns(&[b]).pop().unwrap()
    }

    /// Solves for several right-hand sides at once.
    pub fn solve_columns(&self, rhs: &[&[f64]]) -> Vec<Vec<f64>> {
        let Some(llt) = &self.llt else {
            return rhs.iter().map(|_| Vec::new()).collect();
        };
        let b = Mat::<f64>::from_fn(self.n, rhs.len(), |i, j| rhs[j][i]);
        let x = llt.solve(&b);
        (0..rhs.len())
            .map(|j| (0..self.n).map(|i| x[(i, j)]).collect())
            .collect()
    }
}

/// Lower-triangle triplets of the principal block of `lap` on `rows`.
pub(crate) fn block_triplets(
    lap: &VolLaplacian,
    rows: &[usize],
    n_total: usize,
) -> Vec<Triplet<usize, usize, f64>> {
    let mut local = vec![None; n_total];
    for (k, &r) in rows.iter().enumerate() {
        local[r] = Some(k);
    }
    lap.block_lower_triplets(rows, &local)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn one_by_one() {
        let f = SpdFactor::from_dense(&DMatrix::from_element(1, 1, 2.0)).unwrap();
        assert!((f.solve(&[4.0])[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn indefinite_is_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let lower: Vec<_> = [(0, 0, 1.0), (1, 0, 2.0), (1, 1, 1.0)]
            .iter()
            .map(|&(i, j, v)| Triplet::new(i, j, v))
            .collect();
        assert!(matches!(
            SpdFactor::from_lower_triplets(2, &lower, None),
            Err(FactorError::NotPositiveDefinite)
        ));
        assert!(SpdFactor::from_dense(&a).is_none());
    }

    #[test]
    fn residual_small_on_random_spd() {
        let n = 30;
        let b = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 13) % 11) as f64 / 11.0 - 0.5);
        let a = &b * b.transpose() + DMatrix::identity(n, n) * 0.5;
        let f = SpdFactor::from_dense(&a).unwrap();
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let x = f.solve(&rhs);
        let r = &a * nalgebra::DVector::from_vec(x) - nalgebra::DVector::from_vec(rhs.clone());
        assert!(r.amax() < 1e-10 * rhs.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }
}
