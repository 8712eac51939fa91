//! Spherical coordinates for the boundary map and the analytic gradient of the
//! isovolumetric energy with respect to the free variables
//! `(f_I¹, f_I², f_I³, θ, φ)`.

use std::f64::consts::PI;

use crate::energy::{image_volume, stretch_energy, VolLaplacian};
use crate::mesh::{SimplicialMap, TetMesh};
use crate::{Error, Result, Vec3};

/// Polar angles are kept inside `[POLE_EPS, π - POLE_EPS]`.
pub const POLE_EPS: f64 = 1e-9;

/// Boundary vertex positions on the unit sphere as polar angle `theta` in
/// `[0, π]` and azimuth `phi` in `(-π, π]`, indexed like
/// [`TetMesh::boundary`].
#[derive(Clone, Debug, PartialEq)]
pub struct SphericalBoundary {
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
}

impl SphericalBoundary {
    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Brings every angle pair back to its canonical range without moving
    /// the point it represents, then keeps `theta` off the poles.
    pub fn canonicalize(&mut self) {
        for (t, p) in self.theta.iter_mut().zip(self.phi.iter_mut()) {
            let mut th = t.rem_euclid(2.0 * PI);
            if th > PI {
                th = 2.0 * PI - th;
                *p += PI;
            }
            *t = th.clamp(POLE_EPS, PI - POLE_EPS);
            *p = wrap_angle(*p);
        }
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

#[inline]
pub fn sphere_point(theta: f64, phi: f64) -> Vec3 {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Vec3::new(st * cp, st * sp, ct)
}

pub fn from_spherical(sb: &SphericalBoundary) -> Vec<Vec3> {
    sb.theta
        .iter()
        .zip(&sb.phi)
        .map(|(&t, &p)| sphere_point(t, p))
        .collect()
}

/// Inverse of [`from_spherical`]; rows are renormalized first. Points on the
/// polar axis get `phi = 0`.
pub fn to_spherical(points: &[Vec3]) -> SphericalBoundary {
    let mut theta = Vec::with_capacity(points.len());
    let mut phi = Vec::with_capacity(points.len());
    for p in points {
        let u = p / p.norm();
        theta.push(u.z.clamp(-1.0, 1.0).acos());
        phi.push(if u.x == 0.0 && u.y == 0.0 {
            0.0
        } else {
            wrap_angle(u.y.atan2(u.x))
        });
    }
    SphericalBoundary { theta, phi }
}

/// Gradient of the image volume with respect to the boundary angles,
/// accumulated face by face over the boundary fan.
pub fn grad_volume_angles(
    mesh: &TetMesh,
    f: &SimplicialMap,
    sb: &SphericalBoundary,
) -> (Vec<f64>, Vec<f64>) {
    let nb = mesh.boundary().len();
    let mut d_theta = vec![0.0; nb];
    let mut d_phi = vec![0.0; nb];
    for face in mesh.boundary_faces() {
        let p = face.map(|v| f.coords[v]);
        let grads = [
            p[1].cross(&p[2]) / 6.0,
            p[2].cross(&p[0]) / 6.0,
            p[0].cross(&p[1]) / 6.0,
        ];
        for (&v, g) in face.iter().zip(&grads) {
            let b = mesh.local_index(v);
            let (dt, dp) = angle_partials(sb.theta[b], sb.phi[b]);
            d_theta[b] += g.dot(&dt);
            d_phi[b] += g.dot(&dp);
        }
    }
    (d_theta, d_phi)
}

/// Partial derivatives of `sphere_point` with respect to `theta` and `phi`.
#[inline]
fn angle_partials(theta: f64, phi: f64) -> (Vec3, Vec3) {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    (Vec3::new(ct * cp, ct * sp, -st), Vec3::new(-st * sp, st * cp, 0.0))
}

/// A vector over the free variables, laid out as the three interior
/// coordinate blocks followed by the `theta` and `phi` blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct Stacked {
    n_interior: usize,
    n_boundary: usize,
    pub data: Vec<f64>,
}

/// Gradient of `E_I` in [`Stacked`] layout.
pub type StackedGradient = Stacked;

impl Stacked {
    pub fn zeros(n_interior: usize, n_boundary: usize) -> Self {
        Stacked {
            n_interior,
            n_boundary,
            data: vec![0.0; 3 * n_interior + 2 * n_boundary],
        }
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    pub fn n_boundary(&self) -> usize {
        self.n_boundary
    }

    /// Interior block for coordinate `s` in `0..3`.
    pub fn interior(&self, s: usize) -> &[f64] {
        &self.data[s * self.n_interior..(s + 1) * self.n_interior]
    }

    pub fn interior_mut(&mut self, s: usize) -> &mut [f64] {
        &mut self.data[s * self.n_interior..(s + 1) * self.n_interior]
    }

    pub fn theta(&self) -> &[f64] {
        let o = 3 * self.n_interior;
        &self.data[o..o + self.n_boundary]
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        let o = 3 * self.n_interior;
        &mut self.data[o..o + self.n_boundary]
    }

    pub fn phi(&self) -> &[f64] {
        &self.data[3 * self.n_interior + self.n_boundary..]
    }

    pub fn phi_mut(&mut self) -> &mut [f64] {
        let o = 3 * self.n_interior + self.n_boundary;
        &mut self.data[o..]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Packs a map and its boundary angles into the free variables.
    pub fn pack(mesh: &TetMesh, f: &SimplicialMap, sb: &SphericalBoundary) -> Self {
        let mut x = Stacked::zeros(mesh.interior().len(), mesh.boundary().len());
        for s in 0..3 {
            let block = x.interior_mut(s);
            for (k, &v) in mesh.interior().iter().enumerate() {
                block[k] = f.coords[v][s];
            }
        }
        x.theta_mut().copy_from_slice(&sb.theta);
        x.phi_mut().copy_from_slice(&sb.phi);
        x
    }

    /// Boundary angles held in this vector.
    pub fn angles(&self) -> SphericalBoundary {
        SphericalBoundary {
            theta: self.theta().to_vec(),
            phi: self.phi().to_vec(),
        }
    }

    /// The map described by these free variables; boundary rows come from
    /// the angles and lie on the unit sphere.
    pub fn unpack(&self, mesh: &TetMesh) -> SimplicialMap {
        let mut coords = vec![Vec3::zeros(); mesh.n_vertices()];
        for (k, &v) in mesh.interior().iter().enumerate() {
            coords[v] = Vec3::new(self.interior(0)[k], self.interior(1)[k], self.interior(2)[k]);
        }
        for (k, &v) in mesh.boundary().iter().enumerate() {
            coords[v] = sphere_point(self.theta()[k], self.phi()[k]);
        }
        SimplicialMap::new(coords)
    }

    /// Canonical angle ranges; see [`SphericalBoundary::canonicalize`].
    pub fn canonicalize(&mut self) {
        let mut sb = self.angles();
        sb.canonicalize();
        self.theta_mut().copy_from_slice(&sb.theta);
        self.phi_mut().copy_from_slice(&sb.phi);
    }

    /// `self + alpha * dir`.
    pub fn axpy(&self, alpha: f64, dir: &Stacked) -> Stacked {
        Stacked {
            data: self.data.iter().zip(&dir.data).map(|(x, p)| x + alpha * p).collect(),
            ..*self
        }
    }
}

impl Stacked {
    fn with_data(n_interior: usize, n_boundary: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), 3 * n_interior + 2 * n_boundary);
        Stacked {
            n_interior,
            n_boundary,
            data,
        }
    }

    pub(crate) fn like(&self, data: Vec<f64>) -> Self {
        Self::with_data(self.n_interior, self.n_boundary, data)
    }
}

/// Scalars shared by the energy and its gradient at one map.
#[derive(Clone, Copy, Debug)]
pub struct EnergyParts {
    /// Source volume `V(e)`.
    pub source_volume: f64,
    /// Image volume `V(f)`.
    pub image_volume: f64,
    /// Stretch energy `E_V(f)`.
    pub stretch: f64,
}

impl EnergyParts {
    pub fn compute(mesh: &TetMesh, f: &SimplicialMap) -> Self {
        EnergyParts {
            source_volume: mesh.volume(),
            image_volume: image_volume(mesh, f),
            stretch: stretch_energy(mesh, f),
        }
    }

    pub fn iso_energy(&self) -> f64 {
        crate::energy::iso_energy_from_parts(self.source_volume, self.image_volume, self.stretch)
    }
}

/// Gradient of `E_I` with respect to the interior coordinates and the
/// boundary angles, from an already assembled `L_V(f)`.
pub fn grad_iso_energy(
    mesh: &TetMesh,
    f: &SimplicialMap,
    sb: &SphericalBoundary,
    lap: &VolLaplacian,
) -> Result<StackedGradient> {
    grad_iso_energy_with(mesh, f, sb, lap, &EnergyParts::compute(mesh, f))
}

pub(crate) fn grad_iso_energy_with(
    mesh: &TetMesh,
    f: &SimplicialMap,
    sb: &SphericalBoundary,
    lap: &VolLaplacian,
    parts: &EnergyParts,
) -> Result<StackedGradient> {
    let vf = parts.image_volume;
    if vf == 0.0 {
        return Err(Error::ZeroImageVolume);
    }
    let ve = parts.source_volume;
    let c = 3.0 * ve / vf;
    // tr(fᵀ L f) = 2 E_V
    let trace = 2.0 * parts.stretch;
    let vol_factor = 1.0 + ve * trace / (2.0 * vf * vf);

    let lf = lap.mul_vec3(&f.coords);
    let mut g = Stacked::zeros(mesh.interior().len(), mesh.boundary().len());
    for s in 0..3 {
        let block = g.interior_mut(s);
        for (k, &v) in mesh.interior().iter().enumerate() {
            block[k] = c * lf[v][s];
        }
    }
    let (dv_theta, dv_phi) = grad_volume_angles(mesh, f, sb);
    for (k, &v) in mesh.boundary().iter().enumerate() {
        let (dt, dp) = angle_partials(sb.theta[k], sb.phi[k]);
        g.theta_mut()[k] = c * dt.dot(&lf[v]) - vol_factor * dv_theta[k];
        g.phi_mut()[k] = c * dp.dot(&lf[v]) - vol_factor * dv_phi[k];
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{build_laplacian, iso_energy};
    use crate::mesh::{generate_mesh, MeshKind};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn reference_points() {
        let sb = SphericalBoundary {
            theta: vec![0.0, PI / 2.0, PI / 2.0],
            phi: vec![1.234, 0.0, PI / 2.0],
        };
        let p = from_spherical(&sb);
        assert_relative_eq!(p[0], Vec3::z(), epsilon = 1e-15);
        assert_relative_eq!(p[1], Vec3::x(), epsilon = 1e-15);
        assert_relative_eq!(p[2], Vec3::y(), epsilon = 1e-15);

        let back = to_spherical(&[-Vec3::z(), Vec3::x(), Vec3::new(-1.0, -0.0, 0.0)]);
        assert_eq!(back.theta[0], PI);
        assert_eq!(back.phi[0], 0.0);
        assert_eq!((back.theta[1], back.phi[1]), (PI / 2.0, 0.0));
        assert_eq!(back.phi[2], PI);
    }

    #[test]
    fn canonicalize_keeps_points() {
        let mut sb = SphericalBoundary {
            theta: vec![-0.3, 3.5, 7.0, 0.0],
            phi: vec![0.2, -3.0, 10.0, 0.5],
        };
        let before = from_spherical(&sb);
        sb.canonicalize();
        let after = from_spherical(&sb);
        for k in 0..3 {
            assert_relative_eq!(before[k], after[k], epsilon = 1e-14);
            assert!(sb.theta[k] >= POLE_EPS && sb.theta[k] <= PI - POLE_EPS);
            assert!(sb.phi[k] > -PI && sb.phi[k] <= PI);
        }
        assert_eq!(sb.theta[3], POLE_EPS);
    }

    proptest! {
        #[test]
        fn unit_rows(theta in 0.0..PI, phi in -PI..PI) {
            let p = sphere_point(theta, phi);
            prop_assert!((p.norm() - 1.0).abs() < 1e-14);
        }

        #[test]
        fn roundtrip_away_from_poles(theta in 1e-9..(PI - 1e-9), phi in -PI..PI) {
            let phi = if phi == -PI { PI } else { phi };
            let back = to_spherical(&[sphere_point(theta, phi)]);
            prop_assert!((back.theta[0] - theta).abs() < 1e-12 || theta < 1e-4 || theta > PI - 1e-4);
            let p = sphere_point(back.theta[0], back.phi[0]);
            prop_assert!((p - sphere_point(theta, phi)).norm() < 1e-12);
        }
    }

    fn fd_volume_gradient(mesh: &TetMesh, x: &Stacked, h: f64) -> (Vec<f64>, Vec<f64>) {
        let nb = x.n_boundary();
        let mut dt = vec![0.0; nb];
        let mut dp = vec![0.0; nb];
        for k in 0..nb {
            for (out, offset) in [(&mut dt, 3 * x.n_interior()), (&mut dp, 3 * x.n_interior() + nb)] {
                let mut plus = x.clone();
                let mut minus = x.clone();
                plus.data[offset + k] += h;
                minus.data[offset + k] -= h;
                out[k] = (image_volume(mesh, &plus.unpack(mesh))
                    - image_volume(mesh, &minus.unpack(mesh)))
                    / (2.0 * h);
            }
        }
        (dt, dp)
    }

    fn perturbed_ball(r: usize, amp: f64) -> (TetMesh, Stacked) {
        let mesh = generate_mesh(MeshKind::Ball, r);
        let id = SimplicialMap::identity(&mesh);
        let mut x = Stacked::pack(&mesh, &id, &to_spherical(&boundary_rows(&mesh, &id)));
        for (i, v) in x.data.iter_mut().enumerate() {
            *v += amp * ((i as f64) * 0.731).sin();
        }
        x.canonicalize();
        (mesh, x)
    }

    fn boundary_rows(mesh: &TetMesh, f: &SimplicialMap) -> Vec<Vec3> {
        mesh.boundary().iter().map(|&b| f.coords[b]).collect()
    }

    #[test]
    fn volume_gradient_matches_finite_differences() {
        let (mesh, x) = perturbed_ball(3, 0.05);
        let f = x.unpack(&mesh);
        let (dt, dp) = grad_volume_angles(&mesh, &f, &x.angles());
        let (ft, fp) = fd_volume_gradient(&mesh, &x, 1e-5);
        for k in 0..dt.len() {
            assert_relative_eq!(dt[k], ft[k], epsilon = 1e-9, max_relative = 1e-6);
            assert_relative_eq!(dp[k], fp[k], epsilon = 1e-9, max_relative = 1e-6);
        }
    }

    #[test]
    fn azimuthal_shift_leaves_volume() {
        let (mesh, x) = perturbed_ball(3, 0.05);
        let f = x.unpack(&mesh);
        let (_, dp) = grad_volume_angles(&mesh, &f, &x.angles());
        assert!(dp.iter().sum::<f64>().abs() < 1e-10);
    }

    #[test]
    fn identity_on_ball_is_stationary() {
        let mesh = generate_mesh(MeshKind::Ball, 4);
        let id = SimplicialMap::identity(&mesh);
        let mut sb = to_spherical(&boundary_rows(&mesh, &id));
        sb.canonicalize();
        let x = Stacked::pack(&mesh, &id, &sb);
        let f = x.unpack(&mesh);
        let lap = build_laplacian(&mesh, &f).unwrap();
        let g = grad_iso_energy(&mesh, &f, &sb, &lap).unwrap();
        let norm = g.data.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-8 * mesh.n_vertices() as f64, "{norm}");
        assert!(iso_energy(&mesh, &f).unwrap().abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_full_finite_differences() {
        let (mesh, x) = perturbed_ball(3, 0.04);
        let f = x.unpack(&mesh);
        let lap = build_laplacian(&mesh, &f).unwrap();
        let g = grad_iso_energy(&mesh, &f, &x.angles(), &lap).unwrap();
        let h = 1e-5;
        let scale = g.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..x.data.len() {
            let mut plus = x.clone();
            let mut minus = x.clone();
            plus.data[k] += h;
            minus.data[k] -= h;
            let fd = (iso_energy(&mesh, &plus.unpack(&mesh)).unwrap()
                - iso_energy(&mesh, &minus.unpack(&mesh)).unwrap())
                / (2.0 * h);
            assert!((fd - g.data[k]).abs() <= 1e-6 * scale, "component {k}: {fd} vs {}", g.data[k]);
        }
    }

    #[test]
    fn pole_gradients_are_finite() {
        let mesh = generate_mesh(MeshKind::Ball, 3);
        let id = SimplicialMap::identity(&mesh);
        let mut sb = to_spherical(&boundary_rows(&mesh, &id));
        sb.theta[0] = 1e-12;
        sb.theta[1] = PI - 1e-12;
        let x = Stacked::pack(&mesh, &id, &sb);
        let f = x.unpack(&mesh);
        let lap = build_laplacian(&mesh, &f).unwrap();
        let g = grad_iso_energy(&mesh, &f, &sb, &lap).unwrap();
        assert!(g.is_finite());
    }
}
