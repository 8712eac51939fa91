//! Fixed-point iteration with a prescribed boundary: rebuild `L_V(f)` and
//! solve `L_II f_I = -L_IB f_B` for the interior.

use std::sync::Arc;

use faer::sparse::linalg::solvers::SymbolicLlt;

use super::linalg::{block_triplets, FactorError, SpdFactor};
use crate::energy::{build_laplacian_with, iso_energy, LaplacianPattern, VolLaplacian};
use crate::mesh::{SimplicialMap, TetMesh};
use crate::{Error, Result, Vec3};

/// Result of a run of fixed-point steps.
#[derive(Clone, Debug)]
pub struct VsemOutcome {
    pub map: SimplicialMap,
    /// `E_I` after each solve, starting with the initial one.
    pub energies: Vec<f64>,
    /// Set when some step raised the energy; the iteration has no
    /// monotonicity guarantee, so this is only a diagnostic.
    pub nondecreasing: bool,
}

pub(crate) struct InteriorSolver {
    pattern: Arc<LaplacianPattern>,
    symbolic: Option<SymbolicLlt<usize>>,
}

impl InteriorSolver {
    pub(crate) fn new(pattern: Arc<LaplacianPattern>) -> Self {
        InteriorSolver {
            pattern,
            symbolic: None,
        }
    }

    pub(crate) fn pattern(&self) -> &Arc<LaplacianPattern> {
        &self.pattern
    }

    /// Replaces the interior rows of `f` with the solution of
    /// `L_II f_I = -L_IB f_B`.
    pub(crate) fn solve(&mut self, mesh: &TetMesh, lap: &VolLaplacian, f: &mut SimplicialMap) -> Result<()> {
        let interior = mesh.interior();
        if interior.is_empty() {
            return Ok(());
        }
        let lower = block_triplets(lap, interior, mesh.n_vertices());
        let (factor, symbolic) =
            SpdFactor::from_lower_triplets(interior.len(), &lower, self.symbolic.as_ref()).map_err(
                |e| match e {
                    FactorError::NotPositiveDefinite | FactorError::Other => Error::SingularSystem,
                },
            )?;
        self.symbolic = symbolic;
        let rhs = boundary_rhs(mesh, lap, &f.coords);
        let cols: Vec<&[f64]> = rhs.iter().map(Vec::as_slice).collect();
        let sol = factor.solve_columns(&cols);
        for (k, &v) in interior.iter().enumerate() {
            let p = Vec3::new(sol[0][k], sol[1][k], sol[2][k]);
            if !p.iter().all(|c| c.is_finite()) {
                return Err(Error::SingularSystem);
            }
            f.coords[v] = p;
        }
        Ok(())
    }
}

/// `-L_IB f_B`, one column per coordinate.
fn boundary_rhs(mesh: &TetMesh, lap: &VolLaplacian, coords: &[Vec3]) -> [Vec<f64>; 3] {
    let pattern = lap.pattern();
    let values = lap.values();
    let mut rhs = [vec![0.0; mesh.interior().len()], vec![0.0; mesh.interior().len()], vec![
        0.0;
        mesh.interior().len()
    ]];
    for (k, &i) in mesh.interior().iter().enumerate() {
        let mut acc = Vec3::zeros();
        for s in pattern.row(i) {
            let j = pattern.col(s);
            if mesh.is_boundary(j) {
                acc -= values[s] * coords[j];
            }
        }
        for c in 0..3 {
            rhs[c][k] = acc[c];
        }
    }
    rhs
}

/// Residual `‖L_II f_I + L_IB f_B‖∞` of the interior equations.
pub fn interior_residual(mesh: &TetMesh, lap: &VolLaplacian, f: &SimplicialMap) -> f64 {
    let lf = lap.mul_vec3(&f.coords);
    mesh.interior()
        .iter()
        .map(|&i| lf[i].amax())
        .fold(0.0, f64::max)
}

/// Initial solve with the weights of the identity map, then `steps` rounds
/// of rebuild-and-solve. `f_b` is indexed like [`TetMesh::boundary`].
pub fn vsem_fixed_point(mesh: &TetMesh, f_b: &[Vec3], steps: usize) -> Result<VsemOutcome> {
    assert_eq!(f_b.len(), mesh.boundary().len());
    let mut solver = InteriorSolver::new(Arc::new(LaplacianPattern::new(mesh)));
    let identity = SimplicialMap::identity(mesh);
    let lap = build_laplacian_with(solver.pattern(), mesh, &identity)?;
    let mut f = SimplicialMap::new(vec![Vec3::zeros(); mesh.n_vertices()]);
    for (&v, p) in mesh.boundary().iter().zip(f_b) {
        f.coords[v] = *p;
    }
    solver.solve(mesh, &lap, &mut f)?;
    let e0 = iso_energy(mesh, &f)?;
    let mut out = iterate(&mut solver, mesh, f, steps)?;
    out.nondecreasing |= out.energies.first().is_some_and(|&e| e > e0);
    out.energies.insert(0, e0);
    Ok(out)
}

/// `steps` rebuild-and-solve rounds starting from `f0`, whose boundary rows
/// are kept.
pub fn vsem_iterate(mesh: &TetMesh, f0: &SimplicialMap, steps: usize) -> Result<VsemOutcome> {
    f0.check_matches(mesh)?;
    let mut solver = InteriorSolver::new(Arc::new(LaplacianPattern::new(mesh)));
    let e0 = iso_energy(mesh, f0)?;
    let mut out = iterate(&mut solver, mesh, f0.clone(), steps)?;
    out.nondecreasing |= out.energies.first().is_some_and(|&e| e > e0);
    out.energies.insert(0, e0);
    Ok(out)
}

fn iterate(solver: &mut InteriorSolver, mesh: &TetMesh, mut f: SimplicialMap, steps: usize) -> Result<VsemOutcome> {
    let mut energies = Vec::with_capacity(steps);
    let mut nondecreasing = false;
    for _ in 0..steps {
        let lap = build_laplacian_with(solver.pattern(), mesh, &f)?;
        solver.solve(mesh, &lap, &mut f)?;
        let e = iso_energy(mesh, &f)?;
        if energies.last().is_some_and(|&prev| e > prev) {
            nondecreasing = true;
        }
        energies.push(e);
    }
    Ok(VsemOutcome {
        map: f,
        energies,
        nondecreasing,
    })
}
