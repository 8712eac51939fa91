//! The volumetric stretch energy, its weighted Laplacian, the image volume and
//! the isovolumetric energy.
//!
//! For a tetrahedron `τ = [v0, v1, v2, v3]` the Laplacian gets, on every edge
//! `(i, j)` with opposite edge `(k, l)`, the modified cotangent weight
//!
//! ```text
//! ω_ij = |f_k - f_l| cot θ_kl(f) |f(τ)| / (9 |τ|)
//! ```
//!
//! where `θ_kl(f)` is the dihedral angle of the image tetrahedron at its edge
//! `f_k f_l`. Writing `G_i = ∂|f(τ)|/∂f_i` this equals `-(2/3) G_i·G_j / |τ|`,
//! which is what gets assembled: it is a polynomial in the image coordinates,
//! so it stays finite for flat or inverted image tetrahedra. With these
//! weights `½ tr(fᵀ L f) = E_V(f)` and `∇E_V = 3 L(f) f` hold exactly.

use std::sync::Arc;

use crate::mesh::{SimplicialMap, TetMesh};
use crate::numeric::CompensatedSum;
use crate::{Error, Result, Vec3};

/// Local vertex pairs of the six tetrahedron edges.
pub(crate) const TET_EDGES: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// Gradients of the signed volume of `[p0, p1, p2, p3]` with respect to each
/// vertex.
#[inline]
pub(crate) fn volume_gradients(p: &[Vec3; 4]) -> [Vec3; 4] {
    let e1 = p[1] - p[0];
    let e2 = p[2] - p[0];
    let e3 = p[3] - p[0];
    let g1 = e2.cross(&e3) / 6.0;
    let g2 = e3.cross(&e1) / 6.0;
    let g3 = e1.cross(&e2) / 6.0;
    [-(g1 + g2 + g3), g1, g2, g3]
}

/// Cotangent of the dihedral angle of tetrahedron `p` at edge `(k, l)`,
/// measured between the faces opposite the remaining vertices `i` and `j`.
pub fn dihedral_cot(p: &[Vec3; 4], i: usize, j: usize) -> f64 {
    let (k, l) = match (i.min(j), i.max(j)) {
        (0, 1) => (2, 3),
        (0, 2) => (1, 3),
        (0, 3) => (1, 2),
        (1, 2) => (0, 3),
        (1, 3) => (0, 2),
        (2, 3) => (0, 1),
        _ => panic!("invalid edge ({i}, {j})"),
    };
    let e = p[l] - p[k];
    // normals of faces (k, l, i) and (k, l, j), each pointing toward the
    // vertex not on the face
    let inward = |a: usize, opp: usize| {
        let n = e.cross(&(p[a] - p[k]));
        if n.dot(&(p[opp] - p[k])) < 0.0 {
            -n
        } else {
            n
        }
    };
    let n1 = inward(i, j);
    let n2 = inward(j, i);
    // the interior dihedral angle is π minus the angle between inward normals
    -n1.dot(&n2) / n1.cross(&n2).norm()
}

/// Compressed sparse row pattern of the vertex adjacency of a mesh (diagonal
/// included), with the storage slots touched by each tetrahedron.
#[derive(Debug)]
pub struct LaplacianPattern {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    diag: Vec<usize>,
    // for each tet, slots of (i, j) and (j, i) for the six edges
    tet_slots: Vec<[[usize; 2]; 6]>,
}

impl LaplacianPattern {
    pub fn new(mesh: &TetMesh) -> Self {
        let n = mesh.n_vertices();
        let mut adj: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for tet in mesh.tets() {
            for &(a, b) in &TET_EDGES {
                adj[tet[a]].push(tet[b]);
                adj[tet[b]].push(tet[a]);
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut diag = Vec::with_capacity(n);
        row_ptr.push(0);
        for (i, row) in adj.iter_mut().enumerate() {
            row.sort_unstable();
            row.dedup();
            diag.push(cols.len() + row.binary_search(&i).unwrap());
            cols.extend_from_slice(row);
            row_ptr.push(cols.len());
        }
        let slot = |i: usize, j: usize| {
            let row = &cols[row_ptr[i]..row_ptr[i + 1]];
            row_ptr[i] + row.binary_search(&j).unwrap()
        };
        let tet_slots = mesh
            .tets()
            .iter()
            .map(|tet| {
                TET_EDGES.map(|(a, b)| [slot(tet[a], tet[b]), slot(tet[b], tet[a])])
            })
            .collect();
        LaplacianPattern {
            row_ptr,
            cols,
            diag,
            tet_slots,
        }
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    pub fn col(&self, slot: usize) -> usize {
        self.cols[slot]
    }
}

/// The weighted Laplacian `L_V(f)`: a shared sparsity pattern plus values
/// for one particular map.
#[derive(Clone, Debug)]
pub struct VolLaplacian {
    pattern: Arc<LaplacianPattern>,
    values: Vec<f64>,
}

impl VolLaplacian {
    pub fn pattern(&self) -> &Arc<LaplacianPattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.pattern.n()
    }

    /// Entry `(i, j)`, zero outside the pattern.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.pattern.row(i);
        match self.pattern.cols[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    /// `L x` for a vector-valued `x`, one 3-vector per vertex.
    pub fn mul_vec3(&self, x: &[Vec3]) -> Vec<Vec3> {
        (0..self.n())
            .map(|i| {
                self.pattern
                    .row(i)
                    .map(|s| self.values[s] * x[self.pattern.cols[s]])
                    .sum()
            })
            .collect()
    }

    /// `tr(fᵀ L f)`.
    pub fn trace_form(&self, x: &[Vec3]) -> f64 {
        let lx = self.mul_vec3(x);
        x.iter()
            .zip(&lx)
            .map(|(a, b)| a.dot(b))
            .collect::<CompensatedSum>()
            .value()
    }

    /// Dense copy, for tests and small diagnostics.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.n();
        let mut d = nalgebra::DMatrix::zeros(n, n);
        for i in 0..n {
            for s in self.pattern.row(i) {
                d[(i, self.pattern.cols[s])] = self.values[s];
            }
        }
        d
    }

    /// Principal submatrix on `rows` (global indices, ascending), as
    /// lower-triangular column-major triplets in local numbering.
    pub(crate) fn block_lower_triplets(
        &self,
        rows: &[usize],
        local: &[Option<usize>],
    ) -> Vec<faer::sparse::Triplet<usize, usize, f64>> {
        let mut out = Vec::new();
        for (li, &i) in rows.iter().enumerate() {
            for s in self.pattern.row(i) {
                if let Some(lj) = local[self.pattern.cols[s]] {
                    if lj >= li {
                        out.push(faer::sparse::Triplet::new(lj, li, self.values[s]));
                    }
                }
            }
        }
        out
    }
}

/// Assembles `L_V(f)` using a precomputed pattern.
pub fn build_laplacian_with(
    pattern: &Arc<LaplacianPattern>,
    mesh: &TetMesh,
    f: &SimplicialMap,
) -> Result<VolLaplacian> {
    f.check_matches(mesh)?;
    let mut values = vec![0.0; pattern.nnz()];
    for (t, tet) in mesh.tets().iter().enumerate() {
        let p = tet.map(|i| f.coords[i]);
        let g = volume_gradients(&p);
        let image_vol = g[3].dot(&(p[3] - p[0]));
        if image_vol == 0.0 || !image_vol.is_finite() {
            return Err(Error::DegenerateImageTet { tet: t });
        }
        let scale = -2.0 / (3.0 * mesh.tet_volume(t));
        for (e, &(a, b)) in TET_EDGES.iter().enumerate() {
            let w = scale * g[a].dot(&g[b]);
            let [ij, ji] = pattern.tet_slots[t][e];
            values[ij] -= w;
            values[ji] -= w;
        }
    }
    for i in 0..pattern.n() {
        let d = pattern.diag[i];
        let off: f64 = pattern.row(i).filter(|&s| s != d).map(|s| values[s]).sum();
        values[d] = -off;
    }
    Ok(VolLaplacian {
        pattern: Arc::clone(pattern),
        values,
    })
}

/// Assembles `L_V(f)`.
pub fn build_laplacian(mesh: &TetMesh, f: &SimplicialMap) -> Result<VolLaplacian> {
    build_laplacian_with(&Arc::new(LaplacianPattern::new(mesh)), mesh, f)
}

/// `E_V(f) = Σ_τ |f(τ)|² / |τ|`, summed directly over tetrahedra.
pub fn stretch_energy(mesh: &TetMesh, f: &SimplicialMap) -> f64 {
    (0..mesh.n_tets())
        .map(|t| {
            let v = f.image_tet_volume(mesh, t);
            v * v / mesh.tet_volume(t)
        })
        .collect::<CompensatedSum>()
        .value()
}

/// Volume enclosed by the image of the boundary, as the fan of tetrahedra
/// joining each outward boundary face to the origin.
pub fn image_volume(mesh: &TetMesh, f: &SimplicialMap) -> f64 {
    mesh.boundary_faces()
        .iter()
        .map(|&[i, j, k]| f.coords[i].dot(&f.coords[j].cross(&f.coords[k])))
        .collect::<CompensatedSum>()
        .value()
        / 6.0
}

/// `E_I(f) = V(e)/V(f) · E_V(f) - V(f)`; nonnegative, and zero exactly for
/// volume-preserving maps.
pub fn iso_energy(mesh: &TetMesh, f: &SimplicialMap) -> Result<f64> {
    let vf = image_volume(mesh, f);
    if vf == 0.0 {
        return Err(Error::ZeroImageVolume);
    }
    Ok(iso_energy_from_parts(mesh.volume(), vf, stretch_energy(mesh, f)))
}

#[inline]
pub(crate) fn iso_energy_from_parts(ve: f64, vf: f64, ev: f64) -> f64 {
    ve / vf * ev - vf
}
