//! Initial map of the boundary surface onto the unit sphere.
//!
//! The surface is first put on the sphere, either by central projection from
//! the centroid when that is already fold-free (star-shaped boundaries) or
//! by a uniform-weight Tutte embedding of the surface punctured at one face
//! followed by inverse stereographic projection. A few projected
//! gradient-descent rounds on the discrete authalic energy then even out the
//! area distribution, and a Möbius normalization centres the result.

use faer::sparse::Triplet;

use super::linalg::SpdFactor;
use crate::mesh::TetMesh;
use crate::numeric::CompensatedSum;
use crate::{Error, Result, Vec3};

/// Stop centring once the area-weighted centroid is this close to the origin.
pub const CENTROID_TOL: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct BoundaryInitConfig {
    pub smoothing_rounds: usize,
    /// Skip central projection and always use the Tutte embedding.
    pub force_tutte: bool,
}

impl Default for BoundaryInitConfig {
    fn default() -> Self {
        BoundaryInitConfig {
            smoothing_rounds: 10,
            force_tutte: false,
        }
    }
}

/// Boundary vertex positions on the unit sphere (indexed like
/// [`TetMesh::boundary`]) and the number of spherical triangles that ended up
/// inverted.
#[derive(Clone, Debug)]
pub struct SphereMap {
    pub points: Vec<Vec3>,
    pub flipped: usize,
}

/// The boundary surface in local boundary numbering.
struct Surface {
    faces: Vec<[usize; 3]>,
    source: Vec<Vec3>,
    neighbors: Vec<Vec<usize>>,
}

impl Surface {
    fn new(mesh: &TetMesh) -> Self {
        let faces: Vec<[usize; 3]> = mesh
            .boundary_faces()
            .iter()
            .map(|f| f.map(|v| mesh.local_index(v)))
            .collect();
        let source: Vec<Vec3> = mesh.boundary().iter().map(|&v| mesh.vertices()[v]).collect();
        let mut neighbors = vec![Vec::new(); source.len()];
        for f in &faces {
            for k in 0..3 {
                neighbors[f[k]].push(f[(k + 1) % 3]);
                neighbors[f[k]].push(f[(k + 2) % 3]);
            }
        }
        for n in &mut neighbors {
            n.sort_unstable();
            n.dedup();
        }
        Surface {
            faces,
            source,
            neighbors,
        }
    }

    fn flipped(&self, u: &[Vec3]) -> usize {
        self.faces
            .iter()
            .filter(|f| u[f[0]].dot(&u[f[1]].cross(&u[f[2]])) <= 0.0)
            .count()
    }
}

/// Maps the boundary onto the unit sphere; fails if any spherical triangle
/// is inverted.
pub fn init_boundary_sphere(mesh: &TetMesh) -> Result<Vec<Vec3>> {
    let m = init_boundary_sphere_with(mesh, &BoundaryInitConfig::default());
    if m.flipped > 0 {
        return Err(Error::InitFailure { flipped: m.flipped });
    }
    Ok(m.points)
}

/// Like [`init_boundary_sphere`] but reports inverted triangles instead of
/// failing.
pub fn init_boundary_sphere_with(mesh: &TetMesh, cfg: &BoundaryInitConfig) -> SphereMap {
    let surf = Surface::new(mesh);
    let mut u = None;
    if !cfg.force_tutte {
        let radial = central_projection(&surf.source);
        if radial.iter().all(|p| p.iter().all(|c| c.is_finite())) && surf.flipped(&radial) == 0 {
            u = Some(radial);
        }
    }
    let mut u = u.unwrap_or_else(|| tutte_sphere(&surf));
    for _ in 0..cfg.smoothing_rounds {
        if !authalic_round(&surf, &mut u) {
            break;
        }
    }
    mobius_center(&surf, &mut u);
    let flipped = surf.flipped(&u);
    SphereMap { points: u, flipped }
}

fn central_projection(points: &[Vec3]) -> Vec<Vec3> {
    let c = points.iter().sum::<Vec3>() / points.len() as f64;
    points.iter().map(|p| (p - c).normalize()).collect()
}

fn tutte_sphere(surf: &Surface) -> Vec<Vec3> {
    let n = surf.source.len();
    let outer = surf.faces[0];
    let mut fixed = vec![None; n];
    for (k, &v) in outer.iter().enumerate() {
        let a = std::f64::consts::TAU * k as f64 / 3.0;
        fixed[v] = Some((a.cos(), a.sin()));
    }
    let free: Vec<usize> = (0..n).filter(|&v| fixed[v].is_none()).collect();
    let mut local = vec![usize::MAX; n];
    for (k, &v) in free.iter().enumerate() {
        local[v] = k;
    }

    let mut lower = Vec::new();
    let mut rhs = [vec![0.0; free.len()], vec![0.0; free.len()]];
    for (k, &v) in free.iter().enumerate() {
        lower.push(Triplet::new(k, k, surf.neighbors[v].len() as f64));
        for &w in &surf.neighbors[v] {
            match fixed[w] {
                Some((x, y)) => {
                    rhs[0][k] += x;
                    rhs[1][k] += y;
                }
                None if local[w] > k => lower.push(Triplet::new(local[w], k, -1.0)),
                None => {}
            }
        }
    }
    let (factor, _) = SpdFactor::from_lower_triplets(free.len(), &lower, None)
        .unwrap_or_else(|_| panic!("graph Laplacian of a connected surface is positive definite"));
    let sol = factor.solve_columns(&[&rhs[0], &rhs[1]]);

    let mut plane = vec![(0.0, 0.0); n];
    for (v, slot) in plane.iter_mut().enumerate() {
        *slot = match fixed[v] {
            Some(p) => p,
            None => (sol[0][local[v]], sol[1][local[v]]),
        };
    }
    // half the free vertices end up in each hemisphere
    let mut radii: Vec<f64> = free.iter().map(|&v| plane[v].0.hypot(plane[v].1)).collect();
    radii.sort_by(f64::total_cmp);
    let median = radii.get(radii.len() / 2).copied().unwrap_or(1.0).max(1e-12);

    let mut u: Vec<Vec3> = plane
        .iter()
        .map(|&(x, y)| {
            let (x, y) = (x / median, y / median);
            let r2 = x * x + y * y;
            Vec3::new(2.0 * x, 2.0 * y, r2 - 1.0) / (1.0 + r2)
        })
        .collect();
    if surf.flipped(&u) * 2 > surf.faces.len() {
        for p in &mut u {
            p.x = -p.x;
        }
    }
    u
}

fn flat_area_vector(a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    (b - a).cross(&(c - a)) * 0.5
}

/// `(S/A) Σ a_t²/s_t - A` for image areas `a_t` and source areas `s_t`; zero
/// exactly when the areas are proportional.
fn authalic_energy(surf: &Surface, src_area: &[f64], u: &[Vec3]) -> f64 {
    let s_total: f64 = src_area.iter().sum();
    let mut a_total = CompensatedSum::default();
    let mut quad = CompensatedSum::default();
    for (f, &s) in surf.faces.iter().zip(src_area) {
        let a = flat_area_vector(&u[f[0]], &u[f[1]], &u[f[2]]).norm();
        a_total.add(a);
        quad.add(a * a / s);
    }
    let a_total = a_total.value();
    s_total / a_total * quad.value() - a_total
}

/// One projected gradient step on the authalic energy that neither raises
/// the energy nor inverts a triangle. Returns `false` when no step helps.
fn authalic_round(surf: &Surface, u: &mut Vec<Vec3>) -> bool {
    let src_area: Vec<f64> = surf
        .faces
        .iter()
        .map(|f| flat_area_vector(&surf.source[f[0]], &surf.source[f[1]], &surf.source[f[2]]).norm())
        .collect();
    let s_total: f64 = src_area.iter().sum();
    let areas: Vec<(f64, Vec3)> = surf
        .faces
        .iter()
        .map(|f| {
            let n = flat_area_vector(&u[f[0]], &u[f[1]], &u[f[2]]);
            (n.norm(), n.normalize())
        })
        .collect();
    let a_total: f64 = areas.iter().map(|a| a.0).sum();
    let quad: f64 = areas.iter().zip(&src_area).map(|(a, s)| a.0 * a.0 / s).sum();
    let e0 = s_total / a_total * quad - a_total;
    if !(e0 > 1e-14 * a_total) {
        return false;
    }

    let mut grad = vec![Vec3::zeros(); u.len()];
    for ((f, &(a, n)), &s) in surf.faces.iter().zip(&areas).zip(&src_area) {
        let de_da = s_total / a_total * 2.0 * a / s - s_total / (a_total * a_total) * quad - 1.0;
        for k in 0..3 {
            let (p, q) = (u[f[(k + 1) % 3]], u[f[(k + 2) % 3]]);
            grad[f[k]] += de_da * 0.5 * n.cross(&(q - p));
        }
    }
    for (g, p) in grad.iter_mut().zip(u.iter()) {
        *g -= p * g.dot(p);
    }
    let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.norm()));
    if gmax == 0.0 {
        return false;
    }
    let mean_edge = surf
        .faces
        .iter()
        .map(|f| (u[f[1]] - u[f[0]]).norm())
        .sum::<f64>()
        / surf.faces.len() as f64;
    let flips0 = surf.flipped(u);
    let mut step = 0.5 * mean_edge / gmax;
    for _ in 0..30 {
        let trial: Vec<Vec3> = u
            .iter()
            .zip(&grad)
            .map(|(p, g)| (p - step * g).normalize())
            .collect();
        if surf.flipped(&trial) <= flips0 && authalic_energy(surf, &src_area, &trial) < e0 {
            *u = trial;
            return true;
        }
        step *= 0.5;
    }
    false
}

/// Hyperbolic translation of the ball taking `a` to the origin; keeps the
/// unit sphere invariant.
fn mobius(a: &Vec3, x: &Vec3) -> Vec3 {
    let d = x - a;
    let num = (1.0 - a.norm_squared()) * d - d.norm_squared() * a;
    let den = 1.0 - 2.0 * a.dot(x) + a.norm_squared() * x.norm_squared();
    num / den
}

fn area_centroid(surf: &Surface, u: &[Vec3]) -> Vec3 {
    let mut c = Vec3::zeros();
    let mut total = 0.0;
    for f in &surf.faces {
        let a = flat_area_vector(&u[f[0]], &u[f[1]], &u[f[2]]).norm();
        c += a * (u[f[0]] + u[f[1]] + u[f[2]]) / 3.0;
        total += a;
    }
    c / total
}

fn mobius_center(surf: &Surface, u: &mut Vec<Vec3>) {
    let flips0 = surf.flipped(u);
    for _ in 0..100 {
        let c = area_centroid(surf, u);
        if c.norm() < CENTROID_TOL {
            return;
        }
        let mut damping = 0.5;
        loop {
            let a = c * damping;
            let trial: Vec<Vec3> = u.iter().map(|p| mobius(&a, p).normalize()).collect();
            if surf.flipped(&trial) <= flips0 && area_centroid(surf, &trial).norm() < c.norm() {
                *u = trial;
                break;
            }
            damping *= 0.5;
            if damping < 1e-6 {
                return;
            }
        }
    }
}
