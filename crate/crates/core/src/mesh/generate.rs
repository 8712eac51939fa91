//! Deterministic synthetic meshes used for tests, benchmarks and the CLI.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TetMesh;
use crate::Vec3;

/// Each cube cell is split into this many tetrahedra (Kuhn/Freudenthal
/// subdivision along a main diagonal, mirrored per octant so that the
/// diagonal always leaves the cell corner nearest the centre), so `cube` at resolution `r` has
/// `6 r^3` tetrahedra and `(r + 1)^3` vertices.
pub const CUBE_TETS_PER_CELL: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MeshKind {
    /// `[-1, 1]^3`.
    Cube,
    /// Unit ball: the cube grid pushed radially onto concentric spheres.
    /// Boundary vertices lie exactly on the unit sphere.
    Ball,
    /// Ellipsoid with semi-axes `(a, b, c)`. The grid gets cells per axis in
    /// proportion to the axes (`resolution` along the shortest), so cells
    /// stay roughly isotropic.
    Ellipsoid(f64, f64, f64),
    /// Ball with a smooth radial perturbation drawn from `seed`.
    Blob(u64),
}

/// Generates a valid, simply connected mesh centred at the origin.
/// `resolution` is the number of grid cells per axis.
pub fn generate_mesh(kind: MeshKind, resolution: usize) -> TetMesh {
    assert!(resolution >= 1, "resolution must be at least 1");
    let cells = match kind {
        MeshKind::Ellipsoid(a, b, c) => {
            let min = a.min(b).min(c);
            [a, b, c].map(|s| ((resolution as f64 * s / min).round() as usize).max(1))
        }
        _ => [resolution; 3],
    };
    let (grid, tets) = kuhn_grid(cells);
    let vertices: Vec<Vec3> = match kind {
        MeshKind::Cube => grid,
        MeshKind::Ball => grid.iter().map(cube_to_ball).collect(),
        MeshKind::Ellipsoid(a, b, c) => grid
            .iter()
            .map(|p| cube_to_ball(p).component_mul(&Vec3::new(a, b, c)))
            .collect(),
        MeshKind::Blob(seed) => {
            let bumps = Bumps::new(seed);
            grid.iter()
                .map(|p| {
                    let q = cube_to_ball(p);
                    let r = q.norm();
                    if r == 0.0 {
                        q
                    } else {
                        q * bumps.radius(&(q / r))
                    }
                })
                .collect()
        }
    };
    TetMesh::new(vertices, tets).expect("generated mesh is valid")
}

/// Moves every interior vertex by a random offset of length up to
/// `amount` times its shortest incident edge, rejecting moves that would
/// invert a tetrahedron. Boundary vertices stay put.
pub fn jitter_interior(mesh: &TetMesh, amount: f64, seed: u64) -> TetMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vertices = mesh.vertices().to_vec();
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); vertices.len()];
    for (t, tet) in mesh.tets().iter().enumerate() {
        for &v in tet {
            incident[v].push(t);
        }
    }
    let positive = |vs: &[Vec3], t: usize| {
        let [a, b, c, d] = mesh.tets()[t].map(|i| vs[i]);
        super::signed_volume(&a, &b, &c, &d) > 0.0
    };
    for &v in mesh.interior() {
        let h = incident[v]
            .iter()
            .flat_map(|&t| mesh.tets()[t])
            .filter(|&w| w != v)
            .map(|w| (vertices[w] - vertices[v]).norm())
            .fold(f64::INFINITY, f64::min);
        let dir = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let original = vertices[v];
        let mut step = amount * h * dir / dir.norm().max(1.0);
        for _ in 0..10 {
            vertices[v] = original + step;
            if incident[v].iter().all(|&t| positive(&vertices, t)) {
                break;
            }
            vertices[v] = original;
            step *= 0.5;
        }
    }
    mesh.with_vertices(vertices)
}

/// The standard 5-tetrahedron split of the unit cube `[0, 1]^3`; vertex
/// `x + 2y + 4z` sits at corner `(x, y, z)`.
pub fn five_tet_cube() -> TetMesh {
    let vertices = (0..8)
        .map(|i| Vec3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64))
        .collect();
    let tets = vec![
        [0, 1, 2, 4],
        [3, 1, 2, 7],
        [5, 1, 4, 7],
        [6, 2, 4, 7],
        [1, 2, 4, 7],
    ];
    TetMesh::new(vertices, tets).expect("five-tet cube is valid")
}

fn kuhn_grid(r: [usize; 3]) -> (Vec<Vec3>, Vec<[usize; 4]>) {
    let n = r.map(|c| c + 1);
    let idx = |i: usize, j: usize, k: usize| i + n[0] * (j + n[1] * k);
    let h = r.map(|c| 2.0 / c as f64);
    let mut vertices = Vec::with_capacity(n[0] * n[1] * n[2]);
    for k in 0..n[2] {
        for j in 0..n[1] {
            for i in 0..n[0] {
                vertices.push(Vec3::new(
                    -1.0 + h[0] * i as f64,
                    -1.0 + h[1] * j as f64,
                    -1.0 + h[2] * k as f64,
                ));
            }
        }
    }
    const PERMS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut tets = Vec::with_capacity(CUBE_TETS_PER_CELL * r[0] * r[1] * r[2]);
    for k in 0..r[2] {
        for j in 0..r[1] {
            for i in 0..r[0] {
                let lower = [i, j, k];
                // the diagonal runs from the corner nearest the centre outwards
                let flip = [0, 1, 2].map(|a| 2 * lower[a] + 1 < r[a]);
                let start = [0, 1, 2].map(|a| if flip[a] { lower[a] + 1 } else { lower[a] });
                let flips = flip.iter().filter(|&&f| f).count();
                for perm in PERMS {
                    let mut c = start;
                    let mut tet = [idx(c[0], c[1], c[2]); 4];
                    for (slot, &axis) in perm.iter().enumerate() {
                        if flip[axis] {
                            c[axis] -= 1;
                        } else {
                            c[axis] += 1;
                        }
                        tet[slot + 1] = idx(c[0], c[1], c[2]);
                    }
                    // odd permutations and odd numbers of mirrored axes
                    // reverse the orientation
                    let odd = matches!(perm, [0, 2, 1] | [1, 0, 2] | [2, 1, 0]);
                    if odd != (flips % 2 == 1) {
                        tet.swap(1, 2);
                    }
                    tets.push(tet);
                }
            }
        }
    }
    (vertices, tets)
}

fn cube_to_ball(p: &Vec3) -> Vec3 {
    let r2 = p.norm();
    if r2 == 0.0 {
        return *p;
    }
    p * (p.amax() / r2)
}

struct Bumps {
    terms: Vec<(Vec3, f64, f64, f64)>,
}

impl Bumps {
    fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let terms = (0..4)
            .map(|_| {
                let z: f64 = rng.random_range(-1.0..1.0);
                let a: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                let s = (1.0 - z * z).sqrt();
                let dir = Vec3::new(s * a.cos(), s * a.sin(), z);
                let amp = rng.random_range(0.02..0.05);
                let freq = rng.random_range(1.0..2.0);
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                (dir, amp, freq, phase)
            })
            .collect();
        Bumps { terms }
    }

    fn radius(&self, u: &Vec3) -> f64 {
        1.0 + self
            .terms
            .iter()
            .map(|(d, amp, freq, phase)| amp * (freq * std::f64::consts::PI * u.dot(d) + phase).cos())
            .sum::<f64>()
    }
}
