//! Block preconditioner `M = diag(L_II, L_II, L_II, L_BB, L_BB)` taken from
//! the Laplacian of the starting map.

use super::linalg::{block_triplets, FactorError, SpdFactor};
use crate::energy::VolLaplacian;
use crate::mesh::TetMesh;
use crate::spherical::Stacked;
use crate::{Error, Result};

/// Relative diagonal shift applied to `L_BB` when the mesh has no interior
/// vertices and the block is the full, singular Laplacian.
const EMPTY_INTERIOR_SHIFT: f64 = 1e-8;

/// Cholesky factors of the two diagonal blocks of the preconditioner.
#[derive(Clone, Debug)]
pub struct Preconditioner {
    interior: SpdFactor,
    boundary: SpdFactor,
}

/// Factors `L_II` and `L_BB` once.
pub fn factor_preconditioner(lap: &VolLaplacian, mesh: &TetMesh) -> Result<Preconditioner> {
    let n = mesh.n_vertices();
    let interior = factor_block(block_triplets(lap, mesh.interior(), n), mesh.interior().len(), "interior")?;
    let mut lower = block_triplets(lap, mesh.boundary(), n);
    if mesh.interior().is_empty() {
        let shift = EMPTY_INTERIOR_SHIFT * mesh.boundary().iter().map(|&b| lap.get(b, b)).fold(0.0, f64::max);
        for k in 0..mesh.boundary().len() {
            lower.push(faer::sparse::Triplet::new(k, k, shift));
        }
    }
    let boundary = factor_block(lower, mesh.boundary().len(), "boundary")?;
    Ok(Preconditioner { interior, boundary })
}

fn factor_block(
    lower: Vec<faer::sparse::Triplet<usize, usize, f64>>,
    n: usize,
    block: &'static str,
) -> Result<SpdFactor> {
    SpdFactor::from_lower_triplets(n, &lower, None)
        .map(|(f, _)| f)
        .map_err(|e| match e {
            FactorError::NotPositiveDefinite | FactorError::Other => Error::NotPositiveDefinite { block },
        })
}

impl Preconditioner {
    /// `M⁻¹ g`.
    pub fn apply(&self, g: &Stacked) -> Stacked {
        let xi = self.interior.solve_columns(&[g.interior(0), g.interior(1), g.interior(2)]);
        let xb = self.boundary.solve_columns(&[g.theta(), g.phi()]);
        let mut data = Vec::with_capacity(g.data.len());
        for col in xi.into_iter().chain(xb) {
            data.extend(col);
        }
        g.like(data)
    }
}
