//! Volume-preserving parameterization of simply connected tetrahedral meshes
//! onto the solid unit ball.
//!
//! The pipeline minimizes the isovolumetric energy
//! `E_I(f) = V(e)/V(f) * E_V(f) - V(f)` over interior vertex positions and
//! spherical coordinates of the boundary vertices, using a preconditioned
//! nonlinear conjugate-gradient method. Parameterizations of two solids can
//! then be composed into a volume-preserving registration.
//!
//! ```no_run
//! use volball::mesh::{generate_mesh, MeshKind};
//! use volball::solver::{parameterize, SolverConfig};
//! use volball::metrics::{folding_count, local_distortion, summarize};
//!
//! let mesh = generate_mesh(MeshKind::Cube, 6);
//! let run = parameterize(&mesh, &SolverConfig::default()).unwrap();
//! let dist = local_distortion(&run.mesh, &run.map).unwrap();
//! let summary = summarize(&dist, folding_count(&run.mesh, &run.map));
//! println!("p95 = {}", summary.p95);
//! ```

pub mod energy;
mod error;
pub mod mesh;
pub mod metrics;
mod numeric;
pub mod registration;
pub mod solver;
pub mod spherical;

pub use error::{Error, Result};
pub use mesh::{SimplicialMap, TetMesh};

/// Points and vectors in 3-space.
pub type Vec3 = nalgebra::Vector3<f64>;

/// Caps the worker threads used by the sparse factorizations; `0` or `1`
/// selects sequential execution, which makes runs bit-for-bit reproducible.
pub fn set_threads(n: usize) {
    faer::set_global_parallelism(if n <= 1 { faer::Par::Seq } else { faer::Par::rayon(n) });
}
