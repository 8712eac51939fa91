//! Registration of two parameterized solids through their ball images:
//! `φ = f₁⁻¹ ∘ h ∘ f₀` with `h = g₁⁻¹ g₀` built from optimal rotations.

use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::{Matrix3, SVD};

use crate::mesh::{signed_volume, vertex_volumes, SimplicialMap, TetMesh};
use crate::{Error, Result, Vec3};

/// Barycentric weights may undershoot zero by this much and still count as
/// inside.
const INSIDE_TOL: f64 = 1e-10;

/// Rotation `R` with `det R = 1` minimizing `Σ w ‖R a - b‖²`.
pub fn kabsch(a: &[Vec3], b: &[Vec3], w: &[f64]) -> Result<Matrix3<f64>> {
    let mut c = Matrix3::zeros();
    for ((p, q), &wi) in a.iter().zip(b).zip(w) {
        c += wi * p * q.transpose();
    }
    let svd = SVD::new(c, true, true);
    let mut s = svd.singular_values.as_slice().to_vec();
    s.sort_by(|x, y| y.total_cmp(x));
    if !(s[1] > 1e-12 * s[0]) {
        return Err(Error::RankDeficient);
    }
    let u = svd.u.expect("requested U");
    let v = svd.v_t.expect("requested V").transpose();
    let d = (v * u.transpose()).determinant().signum();
    Ok(v * Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * u.transpose())
}

/// Rotation `g` of the ball best aligning `f(v)` with `v`, weighted by vertex
/// volumes.
pub fn optimal_rotation(mesh: &TetMesh, f: &SimplicialMap) -> Result<Matrix3<f64>> {
    f.check_matches(mesh)?;
    let vols = vertex_volumes(mesh);
    kabsch(&f.coords, mesh.vertices(), &vols)
}

/// Where a point lies in the image of a map.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Location {
    /// Inside tetrahedron `0` with barycentric weights `1`.
    Tet(usize, [f64; 4]),
    /// Radially projected onto boundary face `0` (index into
    /// [`TetMesh::boundary_faces`]) with weights `1`.
    Face(usize, [f64; 3]),
}

/// Point location in the image `f(M)` of a mesh.
pub struct ImageLocator<'a> {
    mesh: &'a TetMesh,
    f: &'a SimplicialMap,
    // neighbor across the face opposite each local vertex
    neighbors: Vec<[Option<usize>; 4]>,
}

impl<'a> ImageLocator<'a> {
    pub fn new(mesh: &'a TetMesh, f: &'a SimplicialMap) -> Self {
        let mut faces: HashMap<[usize; 3], (usize, usize)> = HashMap::new();
        let mut neighbors = vec![[None; 4]; mesh.n_tets()];
        for (t, tet) in mesh.tets().iter().enumerate() {
            for k in 0..4 {
                let mut key = [tet[(k + 1) % 4], tet[(k + 2) % 4], tet[(k + 3) % 4]];
                key.sort_unstable();
                if let Some((u, j)) = faces.remove(&key) {
                    neighbors[t][k] = Some(u);
                    neighbors[u][j] = Some(t);
                } else {
                    faces.insert(key, (t, k));
                }
            }
        }
        ImageLocator { mesh, f, neighbors }
    }

    fn corners(&self, t: usize) -> [Vec3; 4] {
        self.mesh.tets()[t].map(|v| self.f.coords[v])
    }

    /// Barycentric weights of `p` in image tet `t`.
    pub fn barycentric(&self, t: usize, p: &Vec3) -> [f64; 4] {
        let c = self.corners(t);
        let vol = signed_volume(&c[0], &c[1], &c[2], &c[3]);
        let mut w = [0.0; 4];
        for (k, wk) in w.iter_mut().enumerate() {
            let mut q = c;
            q[k] = *p;
            *wk = signed_volume(&q[0], &q[1], &q[2], &q[3]) / vol;
        }
        w
    }

    /// Walks from `start` towards `p`, crossing the face with the most
    /// negative weight; falls back to a full scan and then to radial
    /// projection onto the boundary.
    pub fn locate(&self, p: &Vec3, start: Option<usize>) -> Result<Location> {
        let mut t = start.unwrap_or(0).min(self.mesh.n_tets().saturating_sub(1));
        for _ in 0..self.mesh.n_tets() {
            let w = self.barycentric(t, p);
            let (k, min) = w
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (k, &x)| if x < acc.1 { (k, x) } else { acc });
            if min >= -INSIDE_TOL {
                return Ok(Location::Tet(t, clean(w)));
            }
            match self.neighbors[t][k] {
                Some(u) => t = u,
                None => break,
            }
        }
        self.locate_brute(p)
    }

    /// Exhaustive scan over all image tets.
    pub fn locate_brute(&self, p: &Vec3) -> Result<Location> {
        let mut best = (f64::NEG_INFINITY, 0, [0.0; 4]);
        for t in 0..self.mesh.n_tets() {
            let w = self.barycentric(t, p);
            let min = w.iter().copied().fold(f64::INFINITY, f64::min);
            if min > best.0 {
                best = (min, t, w);
            }
        }
        if best.0 >= -INSIDE_TOL {
            return Ok(Location::Tet(best.1, clean(best.2)));
        }
        self.project_to_boundary(p)
    }

    fn project_to_boundary(&self, p: &Vec3) -> Result<Location> {
        let mut best = (f64::NEG_INFINITY, 0, [0.0; 3]);
        for (i, face) in self.mesh.boundary_faces().iter().enumerate() {
            let [a, b, c] = face.map(|v| self.f.coords[v]);
            let raw = [p.dot(&b.cross(&c)), a.dot(&p.cross(&c)), a.dot(&b.cross(p))];
            let sum: f64 = raw.iter().sum();
            if !(sum > 0.0) {
                continue;
            }
            let w = raw.map(|x| x / sum);
            let min = w.iter().copied().fold(f64::INFINITY, f64::min);
            if min > best.0 {
                best = (min, i, w);
            }
        }
        if best.0 >= -INSIDE_TOL {
            let w = best.2.map(|x| x.max(0.0));
            let s: f64 = w.iter().sum();
            Ok(Location::Face(best.1, w.map(|x| x / s)))
        } else {
            Err(Error::LocationFailure {
                vertex: usize::MAX,
                point: [p.x, p.y, p.z],
            })
        }
    }

    /// Evaluates `Σ w_k x_k` for the vertices of `loc` in `coords`.
    pub fn interpolate(&self, loc: &Location, coords: &[Vec3]) -> Vec3 {
        match *loc {
            Location::Tet(t, w) => {
                let tet = self.mesh.tets()[t];
                (0..4).map(|k| w[k] * coords[tet[k]]).sum()
            }
            Location::Face(i, w) => {
                let face = self.mesh.boundary_faces()[i];
                (0..3).map(|k| w[k] * coords[face[k]]).sum()
            }
        }
    }
}

fn clean(w: [f64; 4]) -> [f64; 4] {
    let w = w.map(|x| x.max(0.0));
    let s: f64 = w.iter().sum();
    w.map(|x| x / s)
}

/// Locates `p` in the image of `f` starting from tet 0.
pub fn locate_point(mesh: &TetMesh, f: &SimplicialMap, p: &Vec3) -> Result<Location> {
    ImageLocator::new(mesh, f).locate(p, None)
}

#[derive(Clone, Debug)]
pub struct RegistrationMap {
    /// `h = g₁⁻¹ g₀`.
    pub rotation: Matrix3<f64>,
    pub locations: Vec<Location>,
    /// `φ(v)` per source vertex, in target coordinates.
    pub phi: Vec<Vec3>,
}

/// Builds `φ = f₁⁻¹ ∘ h ∘ f₀` vertex by vertex.
pub fn register(mesh0: &TetMesh, f0: &SimplicialMap, mesh1: &TetMesh, f1: &SimplicialMap) -> Result<RegistrationMap> {
    let g0 = optimal_rotation(mesh0, f0)?;
    let g1 = optimal_rotation(mesh1, f1)?;
    let h = g1.transpose() * g0;
    let locator = ImageLocator::new(mesh1, f1);
    let mut locations = Vec::with_capacity(mesh0.n_vertices());
    let mut phi = Vec::with_capacity(mesh0.n_vertices());
    let mut start = None;
    for (v, p) in f0.coords.iter().enumerate() {
        let mut q = h * p;
        let r = q.norm();
        if r > 1.0 {
            q /= r;
        }
        let loc = locator.locate(&q, start).map_err(|e| match e {
            Error::LocationFailure { point, .. } => Error::LocationFailure { vertex: v, point },
            e => e,
        })?;
        if let Location::Tet(t, _) = loc {
            start = Some(t);
        }
        phi.push(locator.interpolate(&loc, mesh1.vertices()));
        locations.push(loc);
    }
    Ok(RegistrationMap {
        rotation: h,
        locations,
        phi,
    })
}

/// `(1 - t) v + t φ(v)` per source vertex.
pub fn homotopy(mesh0: &TetMesh, reg: &RegistrationMap, t: f64) -> Vec<Vec3> {
    mesh0
        .vertices()
        .iter()
        .zip(&reg.phi)
        .map(|(v, p)| (1.0 - t) * v + t * p)
        .collect()
}

/// `Σ ‖v - φ(v)‖ vol(v) / |M₀|`.
pub fn deformation_measure(mesh0: &TetMesh, reg: &RegistrationMap) -> f64 {
    let vols = vertex_volumes(mesh0);
    let total: f64 = vols.iter().sum();
    mesh0
        .vertices()
        .iter()
        .zip(&reg.phi)
        .zip(&vols)
        .map(|((v, p), w)| (v - p).norm() * w)
        .sum::<f64>()
        / total
}

pub fn registration_csv(reg: &RegistrationMap) -> String {
    let mut out = String::from("src_vertex,tet_or_face,w0,w1,w2,w3,phi_x,phi_y,phi_z\n");
    for (v, (loc, p)) in reg.locations.iter().zip(&reg.phi).enumerate() {
        let (id, w) = match *loc {
            Location::Tet(t, w) => (format!("tet:{t}"), w),
            Location::Face(i, w) => (format!("face:{i}"), [w[0], w[1], w[2], 0.0]),
        };
        let _ = writeln!(
            out,
            "{v},{id},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            w[0], w[1], w[2], w[3], p.x, p.y, p.z
        );
    }
    out
}
