//! Tetrahedral meshes, simplicial maps and the geometric primitives built on
//! them.

mod generate;
mod io;

use std::collections::{HashMap, HashSet};

use crate::numeric::CompensatedSum;
use crate::{Error, Result, Vec3};

pub use generate::{five_tet_cube, generate_mesh, jitter_interior, MeshKind, CUBE_TETS_PER_CELL};
pub use io::{parse_medit, parse_mesh, parse_tetgen, read_mesh, write_medit, MeshFormat, RawMesh};

/// Signed volume of the tetrahedron `[p0, p1, p2, p3]`.
#[inline]
pub fn signed_volume(p0: &Vec3, p1: &Vec3, p2: &Vec3, p3: &Vec3) -> f64 {
    (p1 - p0).cross(&(p2 - p0)).dot(&(p3 - p0)) / 6.0
}

/// An immutable, consistently oriented tetrahedral mesh of a simply connected
/// solid.
///
/// Every tetrahedron has strictly positive signed volume and the boundary is
/// a closed genus-0 triangulated surface whose faces are oriented outward.
#[derive(Clone, Debug, PartialEq)]
pub struct TetMesh {
    vertices: Vec<Vec3>,
    tets: Vec<[usize; 4]>,
    boundary_faces: Vec<[usize; 3]>,
    boundary: Vec<usize>,
    interior: Vec<usize>,
    // position of each vertex inside `boundary` or `interior`
    local: Vec<usize>,
    on_boundary: Vec<bool>,
}

impl TetMesh {
    /// Validates `tets` against `vertices`, flips negatively oriented tets and
    /// extracts the boundary.
    pub fn new(vertices: Vec<Vec3>, mut tets: Vec<[usize; 4]>) -> Result<Self> {
        let n = vertices.len();
        for (t, tet) in tets.iter_mut().enumerate() {
            if tet.iter().any(|&i| i >= n) {
                return Err(Error::MalformedFile(format!(
                    "tetrahedron {t} references a vertex out of range"
                )));
            }
            let distinct: HashSet<usize> = tet.iter().copied().collect();
            if distinct.len() != 4 {
                return Err(Error::MalformedFile(format!(
                    "tetrahedron {t} repeats a vertex"
                )));
            }
            let [a, b, c, d] = tet.map(|i| vertices[i]);
            let vol = signed_volume(&a, &b, &c, &d);
            let scale = [b - a, c - a, d - a, c - b, d - b, d - c]
                .iter()
                .fold(0.0f64, |m, e| m.max(e.norm()));
            if !vol.is_finite() || vol.abs() <= 1e-14 * scale.powi(3) {
                return Err(Error::DegenerateTet { tet: t });
            }
            if vol < 0.0 {
                tet.swap(2, 3);
            }
        }

        let (boundary_faces, boundary, interior) = boundary_extract(&vertices, &tets)?;

        let mut edges = HashSet::new();
        for f in &boundary_faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                edges.insert((a.min(b), a.max(b)));
            }
        }
        let euler = boundary.len() as i64 - edges.len() as i64 + boundary_faces.len() as i64;
        if euler != 2 {
            return Err(Error::DisconnectedBoundary { euler });
        }

        let mut local = vec![0; n];
        let mut on_boundary = vec![false; n];
        for (k, &b) in boundary.iter().enumerate() {
            local[b] = k;
            on_boundary[b] = true;
        }
        for (k, &i) in interior.iter().enumerate() {
            local[i] = k;
        }

        Ok(TetMesh {
            vertices,
            tets,
            boundary_faces,
            boundary,
            interior,
            local,
            on_boundary,
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn tets(&self) -> &[[usize; 4]] {
        &self.tets
    }

    /// Outward-oriented boundary triangles.
    pub fn boundary_faces(&self) -> &[[usize; 3]] {
        &self.boundary_faces
    }

    /// Sorted indices of boundary vertices.
    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    /// Sorted indices of interior vertices.
    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_tets(&self) -> usize {
        self.tets.len()
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.on_boundary[v]
    }

    /// Position of `v` within [`boundary`](Self::boundary) or
    /// [`interior`](Self::interior), whichever contains it.
    pub fn local_index(&self, v: usize) -> usize {
        self.local[v]
    }

    pub fn tet_volume(&self, t: usize) -> f64 {
        let [a, b, c, d] = self.tets[t].map(|i| self.vertices[i]);
        signed_volume(&a, &b, &c, &d)
    }

    pub fn tet_volumes(&self) -> Vec<f64> {
        (0..self.tets.len()).map(|t| self.tet_volume(t)).collect()
    }

    /// Total volume, i.e. the image volume of the identity map.
    pub fn volume(&self) -> f64 {
        (0..self.tets.len())
            .map(|t| self.tet_volume(t))
            .collect::<CompensatedSum>()
            .value()
    }

    /// Same connectivity with new vertex positions. Orientation is not
    /// re-checked, so `f` must preserve it.
    pub(crate) fn with_vertices(&self, vertices: Vec<Vec3>) -> TetMesh {
        assert_eq!(vertices.len(), self.vertices.len());
        TetMesh {
            vertices,
            ..self.clone()
        }
    }

    /// Radius of the smallest origin-centred ball containing the mesh.
    pub fn bounding_radius(&self) -> f64 {
        self.vertices.iter().fold(0.0, |m, v| m.max(v.norm()))
    }
}

/// Faces that belong to exactly one tetrahedron, oriented so that the
/// opposite vertex of their tetrahedron lies on the negative side, together
/// with the boundary and interior vertex index sets.
pub fn boundary_extract(
    vertices: &[Vec3],
    tets: &[[usize; 4]],
) -> Result<(Vec<[usize; 3]>, Vec<usize>, Vec<usize>)> {
    // key -> (count, face as listed, opposite vertex)
    let mut faces: HashMap<[usize; 3], (u32, [usize; 3], usize)> = HashMap::new();
    let mut order = Vec::new();
    for tet in tets {
        for skip in 0..4 {
            let mut face = [0; 3];
            let mut k = 0;
            for (j, &v) in tet.iter().enumerate() {
                if j != skip {
                    face[k] = v;
                    k += 1;
                }
            }
            let mut key = face;
            key.sort_unstable();
            let entry = faces.entry(key).or_insert_with(|| {
                order.push(key);
                (0, face, tet[skip])
            });
            entry.0 += 1;
            if entry.0 > 2 {
                return Err(Error::NonManifoldBoundary(key[0], key[1], key[2]));
            }
        }
    }

    let mut boundary_faces = Vec::new();
    let mut on_boundary = vec![false; vertices.len()];
    for key in order {
        let (count, mut face, opposite) = faces[&key];
        if count != 1 {
            continue;
        }
        let [a, b, c] = face.map(|i| vertices[i]);
        let normal = (b - a).cross(&(c - a));
        if normal.dot(&(vertices[opposite] - a)) > 0.0 {
            face.swap(1, 2);
        }
        for &v in &face {
            on_boundary[v] = true;
        }
        boundary_faces.push(face);
    }

    let (boundary, interior): (Vec<usize>, Vec<usize>) =
        (0..vertices.len()).partition(|&v| on_boundary[v]);
    Ok((boundary_faces, boundary, interior))
}

/// One quarter of the total volume of the tetrahedra incident to `v`.
pub fn vertex_volume(mesh: &TetMesh, v: usize) -> f64 {
    mesh.tets()
        .iter()
        .enumerate()
        .filter(|(_, tet)| tet.contains(&v))
        .map(|(t, _)| mesh.tet_volume(t))
        .collect::<CompensatedSum>()
        .value()
        / 4.0
}

/// [`vertex_volume`] for every vertex in a single pass.
pub fn vertex_volumes(mesh: &TetMesh) -> Vec<f64> {
    let mut vol = vec![0.0; mesh.n_vertices()];
    for (t, tet) in mesh.tets().iter().enumerate() {
        let q = mesh.tet_volume(t) / 4.0;
        for &v in tet {
            vol[v] += q;
        }
    }
    vol
}

/// Image positions of the mesh vertices under a simplicial map; row `s` is
/// `f(v_s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimplicialMap {
    pub coords: Vec<Vec3>,
}

impl SimplicialMap {
    pub fn new(coords: Vec<Vec3>) -> Self {
        SimplicialMap { coords }
    }

    pub fn identity(mesh: &TetMesh) -> Self {
        SimplicialMap {
            coords: mesh.vertices().to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn scaled(&self, s: f64) -> Self {
        SimplicialMap {
            coords: self.coords.iter().map(|p| p * s).collect(),
        }
    }

    pub fn check_matches(&self, mesh: &TetMesh) -> Result<()> {
        if self.coords.len() != mesh.n_vertices() {
            return Err(Error::VertexCountMismatch {
                mesh: mesh.n_vertices(),
                map: self.coords.len(),
            });
        }
        Ok(())
    }

    /// Signed volume of the image of tetrahedron `t`.
    #[inline]
    pub fn image_tet_volume(&self, mesh: &TetMesh, t: usize) -> f64 {
        let [a, b, c, d] = mesh.tets()[t].map(|i| self.coords[i]);
        signed_volume(&a, &b, &c, &d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corner_tet() -> TetMesh {
        TetMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
                Vec3::new(0.0, 0.0, 1.0),
            ],
            vec![[0, 1, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn signed_volume_of_corner_tet() {
        let o = Vec3::zeros();
        let (x, y, z) = (Vec3::x(), Vec3::y(), Vec3::z());
        assert_eq!(signed_volume(&o, &x, &y, &z), 1.0 / 6.0);
        assert_eq!(signed_volume(&o, &y, &x, &z), -1.0 / 6.0);
        assert_eq!(signed_volume(&o, &x, &y, &(x + y)), 0.0);
    }

    #[test]
    fn single_tet_is_all_boundary() {
        let m = corner_tet();
        assert_eq!(m.boundary_faces().len(), 4);
        assert_eq!(m.boundary(), &[0, 1, 2, 3]);
        assert!(m.interior().is_empty());
        for v in 0..4 {
            assert!((vertex_volume(&m, v) - 1.0 / 24.0).abs() < 1e-16);
        }
    }

    #[test]
    fn negative_tets_are_reoriented() {
        let m = TetMesh::new(
            vec![Vec3::zeros(), Vec3::y(), Vec3::x(), Vec3::z()],
            vec![[0, 1, 2, 3]],
        )
        .unwrap();
        assert!(m.tet_volume(0) > 0.0);
    }

    #[test]
    fn degenerate_tet_rejected() {
        let err = TetMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::new(1.0, 1.0, 0.0)],
            vec![[0, 1, 2, 3]],
        )
        .unwrap_err();
        assert!(matches!(err, Error::DegenerateTet { tet: 0 }));
    }

    #[test]
    fn repeated_index_rejected() {
        let err = TetMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()],
            vec![[0, 0, 2, 3]],
        )
        .unwrap_err();
        assert!(matches!(err, Error::MalformedFile(_)));
    }

    #[test]
    fn face_shared_by_three_tets_is_non_manifold() {
        let vertices = vec![
            Vec3::zeros(),
            Vec3::x(),
            Vec3::y(),
            Vec3::z(),
            Vec3::new(0.3, 0.3, -1.0),
            Vec3::new(-1.0, -1.0, 0.2),
        ];
        let err = TetMesh::new(vertices, vec![[0, 1, 2, 3], [0, 1, 2, 4], [0, 1, 2, 5]])
            .unwrap_err();
        assert!(matches!(err, Error::NonManifoldBoundary(0, 1, 2)));
    }

    #[test]
    fn two_disjoint_tets_fail_euler_check() {
        let mut vertices = vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()];
        vertices.extend(vertices.clone().iter().map(|p| p + Vec3::new(5.0, 0.0, 0.0)));
        let err = TetMesh::new(vertices, vec![[0, 1, 2, 3], [4, 5, 6, 7]]).unwrap_err();
        assert!(matches!(err, Error::DisconnectedBoundary { euler: 4 }));
    }

    #[test]
    fn boundary_faces_point_outward() {
        let m = five_tet_cube();
        let centre = Vec3::repeat(0.5);
        for f in m.boundary_faces() {
            let [a, b, c] = f.map(|i| m.vertices()[i]);
            let n = (b - a).cross(&(c - a));
            assert!(n.dot(&(a - centre)) > 0.0);
        }
    }

    #[test]
    fn vertex_volumes_sum_to_total() {
        let m = generate_mesh(MeshKind::Ball, 3);
        let total: f64 = vertex_volumes(&m).iter().sum();
        assert!((total - m.volume()).abs() < 1e-12);
        for v in [0, 7, 20] {
            assert!((vertex_volume(&m, v) - vertex_volumes(&m)[v]).abs() < 1e-15);
        }
    }
}
