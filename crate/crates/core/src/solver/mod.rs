//! The parameterization pipeline: anisotropic scaling, spherical boundary
//! initialization, fixed-point warm start and preconditioned nonlinear CG.

mod ast;
mod boundary_init;
mod cg;
mod linalg;
mod precond;
mod vsem;

use std::fmt::Write as _;
use std::time::Duration;

pub use ast::{ast_normalize, principal_frame, AstTransform};
pub use boundary_init::{init_boundary_sphere, init_boundary_sphere_with, BoundaryInitConfig, SphereMap, CENTROID_TOL};
pub use cg::{cg_minimize, quadratic_step};
pub use linalg::SpdFactor;
pub use precond::{factor_preconditioner, Preconditioner};
pub use vsem::{interior_residual, vsem_fixed_point, vsem_iterate, VsemOutcome};

use crate::mesh::{SimplicialMap, TetMesh};
use crate::{Error, Result};

/// Step-length control for the CG iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Safeguard {
    /// Quadratic-interpolation step, halved until the energy does not
    /// increase and no new tet folds.
    QuadraticGuarded,
    /// Bracketing line search for the strong Wolfe conditions.
    StrongWolfe { c1: f64, c2: f64 },
}

impl Safeguard {
    pub const WOLFE_DEFAULT: Safeguard = Safeguard::StrongWolfe { c1: 1e-4, c2: 0.4 };
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub vsem_warm_steps: usize,
    pub cg_max_iters: usize,
    /// Stop once an iteration lowers the energy by at most this much.
    pub tol_epsilon: f64,
    /// First trial step, relative to the max-norm of the first direction.
    pub alpha0: f64,
    pub ast_enabled: bool,
    pub safeguard: Safeguard,
    pub boundary_smoothing_rounds: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            vsem_warm_steps: 15,
            cg_max_iters: 500,
            tol_epsilon: 1e-9,
            alpha0: 1e-3,
            ast_enabled: true,
            safeguard: Safeguard::QuadraticGuarded,
            boundary_smoothing_rounds: 10,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_epsilon >= 0.0) {
            return Err(Error::InvalidConfig(format!("tolerance must be nonnegative, got {}", self.tol_epsilon)));
        }
        if !(self.alpha0 > 0.0 && self.alpha0.is_finite()) {
            return Err(Error::InvalidConfig(format!("alpha0 must be positive, got {}", self.alpha0)));
        }
        if let Safeguard::StrongWolfe { c1, c2 } = self.safeguard {
            if !(0.0 < c1 && c1 < c2 && c2 < 0.5) {
                return Err(Error::InvalidConfig(format!(
                    "Wolfe constants need 0 < c1 < c2 < 1/2, got c1 = {c1}, c2 = {c2}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    TolReached,
    MaxIters,
    LineSearchFailure,
}

/// State after `iter` iterations.
#[derive(Clone, Debug, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    pub energy: f64,
    /// Step taken to reach this state.
    pub alpha: f64,
    pub beta: f64,
    /// Euclidean norm of the gradient at this state.
    pub grad_norm: f64,
    /// `sqrt(gᵀ M⁻¹ g)` at this state.
    pub precond_grad_norm: f64,
    pub foldings: usize,
}

#[derive(Clone, Debug)]
pub struct SolverReport {
    pub records: Vec<IterRecord>,
    pub termination: Termination,
    pub elapsed: Duration,
}

impl SolverReport {
    pub fn iterations(&self) -> usize {
        self.records.last().map_or(0, |r| r.iter)
    }

    pub fn final_energy(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.energy)
    }

    /// Per-iteration trace as CSV. Wall time is left out so that identical
    /// runs produce identical files.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,E_I,alpha,beta,grad_norm,foldings\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{:e},{:e},{:e},{:e},{}",
                r.iter, r.energy, r.alpha, r.beta, r.grad_norm, r.foldings
            );
        }
        out
    }

    /// `Err(LineSearchFailure)` when the run ended that way.
    pub fn check(&self) -> Result<()> {
        match self.termination {
            Termination::LineSearchFailure => Err(Error::LineSearchFailure { iter: self.iterations() + 1 }),
            _ => Ok(()),
        }
    }
}

/// Output of [`parameterize`].
#[derive(Clone, Debug)]
pub struct Parameterization {
    /// The mesh the map is defined on (after the AST when enabled).
    pub mesh: TetMesh,
    pub map: SimplicialMap,
    pub transform: AstTransform,
    pub report: SolverReport,
    /// Inverted spherical triangles left by the boundary initializer.
    pub boundary_flips: usize,
    /// `E_I` over the warm-start steps.
    pub warm_energies: Vec<f64>,
}

/// The full pipeline on `mesh`.
pub fn parameterize(mesh: &TetMesh, cfg: &SolverConfig) -> Result<Parameterization> {
    cfg.validate()?;
    let (mesh, transform) = if cfg.ast_enabled {
        ast_normalize(mesh)?
    } else {
        (mesh.clone(), AstTransform::identity())
    };
    let sphere = init_boundary_sphere_with(
        &mesh,
        &BoundaryInitConfig {
            smoothing_rounds: cfg.boundary_smoothing_rounds,
            ..Default::default()
        },
    );
    let warm = vsem_fixed_point(&mesh, &sphere.points, cfg.vsem_warm_steps)?;
    let (map, report) = cg_minimize(&mesh, &warm.map, cfg)?;
    Ok(Parameterization {
        mesh,
        map,
        transform,
        report,
        boundary_flips: sphere.flipped,
        warm_energies: warm.energies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wolfe_constants_are_checked() {
        let mut cfg = SolverConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.safeguard = Safeguard::WOLFE_DEFAULT;
        assert!(cfg.validate().is_ok());
        for (c1, c2) in [(0.0, 0.4), (0.4, 0.3), (1e-4, 0.5), (0.2, 0.2)] {
            cfg.safeguard = Safeguard::StrongWolfe { c1, c2 };
            assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        let report = SolverReport {
            records: vec![IterRecord {
                iter: 0,
                energy: 0.5,
                alpha: 0.0,
                beta: 0.0,
                grad_norm: 1.0,
                precond_grad_norm: 1.0,
                foldings: 2,
            }],
            termination: Termination::MaxIters,
            elapsed: Duration::ZERO,
        };
        assert_eq!(report.to_csv(), "iter,E_I,alpha,beta,grad_norm,foldings\n0,5e-1,0e0,0e0,1e0,2\n");
    }
}
