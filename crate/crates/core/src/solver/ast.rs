//! Anisotropic scaling transformation: principal-axis rotation followed by
//! per-axis scaling so the rotated cloud reaches exactly 1 along each
//! positive axis.

use nalgebra::{DMatrix, Matrix3};

use crate::mesh::TetMesh;
use crate::{Error, Result, Vec3};

#[derive(Clone, Debug, PartialEq)]
pub struct AstTransform {
    /// Rows are the principal axes, largest variance first.
    pub rotation: Matrix3<f64>,
    pub scales: Vec3,
    pub center: Vec3,
}

impl AstTransform {
    pub fn identity() -> Self {
        AstTransform {
            rotation: Matrix3::identity(),
            scales: Vec3::repeat(1.0),
            center: Vec3::zeros(),
        }
    }

    pub fn apply(&self, x: &Vec3) -> Vec3 {
        (self.rotation * (x - self.center)).component_mul(&self.scales)
    }

    pub fn invert(&self, y: &Vec3) -> Vec3 {
        self.rotation.transpose() * y.component_div(&self.scales) + self.center
    }
}

/// Principal-axis frame of a point cloud via the SVD of the centred
/// coordinates, with column signs fixed and `det = +1`.
pub fn principal_frame(points: &[Vec3]) -> Result<(Vec3, Matrix3<f64>, Vec3)> {
    let n = points.len();
    let center = points.iter().sum::<Vec3>() / n as f64;
    let p = DMatrix::from_fn(n, 3, |i, j| points[i][j] - center[j]);
    let svd = p.svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sigma = Vec3::new(
        svd.singular_values[order[0]],
        svd.singular_values[order[1]],
        svd.singular_values[order[2]],
    );
    if !(sigma[2] > 1e-12 * sigma[0]) {
        return Err(Error::RankDeficientCloud { sigma: sigma[2] });
    }
    let mut axes: [Vec3; 3] = order.map(|k| Vec3::new(v_t[(k, 0)], v_t[(k, 1)], v_t[(k, 2)]));
    for a in axes.iter_mut().take(2) {
        let big = a.iamax();
        if a[big] < 0.0 {
            *a = -*a;
        }
    }
    axes[2] = axes[0].cross(&axes[1]);
    let rotation = Matrix3::from_rows(&[axes[0].transpose(), axes[1].transpose(), axes[2].transpose()]);
    Ok((center, rotation, sigma))
}

/// Applies the AST to every vertex.
pub fn ast_normalize(mesh: &TetMesh) -> Result<(TetMesh, AstTransform)> {
    let (center, rotation, _) = principal_frame(mesh.vertices())?;
    let mut max = Vec3::repeat(f64::NEG_INFINITY);
    for v in mesh.vertices() {
        max = max.sup(&(rotation * (v - center)));
    }
    if max.iter().any(|&m| !(m > 0.0)) {
        return Err(Error::RankDeficientCloud { sigma: max.min() });
    }
    let transform = AstTransform {
        rotation,
        scales: max.map(|m| 1.0 / m),
        center,
    };
    let vertices = mesh.vertices().iter().map(|v| transform.apply(v)).collect();
    Ok((mesh.with_vertices(vertices), transform))
}
