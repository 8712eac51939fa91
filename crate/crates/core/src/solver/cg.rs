//! Preconditioned nonlinear conjugate gradients on `E_I` over the interior
//! coordinates and the boundary angles.

use std::sync::Arc;
use std::time::Instant;

use super::precond::factor_preconditioner;
use super::{IterRecord, Safeguard, SolverConfig, SolverReport, Termination};
use crate::energy::{build_laplacian_with, LaplacianPattern};
use crate::mesh::{SimplicialMap, TetMesh};
use crate::numeric::{dot, norm_inf, CompensatedSum};
use crate::spherical::{grad_iso_energy_with, to_spherical, EnergyParts, Stacked};
use crate::{Error, Result};

/// Halvings allowed before a step is given up.
const MAX_HALVINGS: usize = 30;
/// Trial energies this close (relative to the image volume) to the current
/// one are indistinguishable from it.
const ROUNDOFF: f64 = 1e-12;

/// Minimizer of the quadratic through `Φ(0)`, `Φ'(0)` and `Φ(a_prev)`:
/// `α = -a_prev² Φ'(0) / (2 (Φ(a_prev) - Φ(0) - a_prev Φ'(0)))`.
pub fn quadratic_step(phi0: f64, dphi0: f64, a_prev: f64, phi_a_prev: f64) -> f64 {
    -a_prev * a_prev * dphi0 / (2.0 * (phi_a_prev - phi0 - a_prev * dphi0))
}

/// The map at one point of the free variables with the quantities the line
/// search needs.
#[derive(Clone, Debug)]
struct Point {
    x: Stacked,
    f: SimplicialMap,
    parts: EnergyParts,
    energy: f64,
    foldings: usize,
}

struct Problem<'a> {
    mesh: &'a TetMesh,
    pattern: Arc<LaplacianPattern>,
    src_volumes: Vec<f64>,
    source_volume: f64,
}

impl<'a> Problem<'a> {
    fn new(mesh: &'a TetMesh) -> Self {
        Problem {
            mesh,
            pattern: Arc::new(LaplacianPattern::new(mesh)),
            src_volumes: mesh.tet_volumes(),
            source_volume: mesh.volume(),
        }
    }

    /// `None` when some image tet is degenerate or the image volume is not
    /// positive.
    fn evaluate(&self, x: Stacked) -> Option<Point> {
        let f = x.unpack(self.mesh);
        let mut stretch = CompensatedSum::default();
        let mut foldings = 0;
        for (t, &src) in self.src_volumes.iter().enumerate() {
            let v = f.image_tet_volume(self.mesh, t);
            if v == 0.0 || !v.is_finite() {
                return None;
            }
            if v < 0.0 {
                foldings += 1;
            }
            stretch.add(v * v / src);
        }
        let image_volume = crate::energy::image_volume(self.mesh, &f);
        if !(image_volume > 0.0) {
            return None;
        }
        let parts = EnergyParts {
            source_volume: self.source_volume,
            image_volume,
            stretch: stretch.value(),
        };
        let energy = parts.iso_energy();
        energy.is_finite().then_some(Point {
            x,
            f,
            parts,
            energy,
            foldings,
        })
    }

    fn canonical(&self, x: &Stacked, alpha: f64, dir: &Stacked) -> Option<Point> {
        let mut y = x.axpy(alpha, dir);
        y.canonicalize();
        self.evaluate(y)
    }

    fn gradient(&self, p: &Point) -> Result<Stacked> {
        let lap = build_laplacian_with(&self.pattern, self.mesh, &p.f)?;
        grad_iso_energy_with(self.mesh, &p.f, &p.x.angles(), &lap, &p.parts)
    }
}

/// Accepted step, or the lowest trial energy seen when none was accepted.
type StepResult = std::result::Result<(f64, Point), f64>;

fn guarded_step(problem: &Problem, cur: &Point, dir: &Stacked, dphi0: f64, a_init: f64) -> StepResult {
    let mut lowest = f64::INFINITY;
    let ok = |p: &Point| p.energy <= cur.energy && p.foldings <= cur.foldings;

    let mut a_prev = a_init;
    let mut probe = None;
    for _ in 0..=MAX_HALVINGS {
        if let Some(p) = problem.canonical(&cur.x, a_prev, dir) {
            lowest = lowest.min(p.energy);
            probe = Some(p);
            break;
        }
        a_prev *= 0.5;
    }
    let Some(probe) = probe else {
        return Err(lowest);
    };

    let fit = quadratic_step(cur.energy, dphi0, a_prev, probe.energy);
    let mut alpha = if fit.is_finite() && fit > 0.0 { fit } else { a_prev };
    let mut accepted = None;
    for _ in 0..=MAX_HALVINGS {
        if let Some(p) = problem.canonical(&cur.x, alpha, dir) {
            lowest = lowest.min(p.energy);
            if ok(&p) {
                accepted = Some((alpha, p));
                break;
            }
        }
        alpha *= 0.5;
    }
    match accepted {
        Some((_, p)) if ok(&probe) && probe.energy < p.energy => Ok((a_prev, probe)),
        Some(step) => Ok(step),
        None if ok(&probe) => Ok((a_prev, probe)),
        None => Err(lowest),
    }
}

/// Bracketing and zoom line search for the strong Wolfe conditions.
fn wolfe_step(
    problem: &Problem,
    cur: &Point,
    dir: &Stacked,
    dphi0: f64,
    a_init: f64,
    c1: f64,
    c2: f64,
) -> Result<StepResult> {
    let mut lowest = f64::INFINITY;
    // raw (uncanonicalized) angles keep the line smooth across the poles
    let mut eval = |a: f64| -> Result<Option<(Point, f64)>> {
        let Some(p) = problem.evaluate(cur.x.axpy(a, dir)) else {
            return Ok(None);
        };
        lowest = lowest.min(p.energy);
        let g = problem.gradient(&p)?;
        let d = dot(&g.data, &dir.data);
        Ok(Some((p, d)))
    };
    let sufficient = |a: f64, e: f64| e <= cur.energy + c1 * a * dphi0;
    let curvature = |d: f64| d.abs() <= -c2 * dphi0;

    let mut a_lo = 0.0;
    let mut e_lo = cur.energy;
    let mut a = a_init;
    let mut bracket = None;
    for i in 0..MAX_HALVINGS {
        match eval(a)? {
            None => {
                bracket = Some((a_lo, e_lo, a));
                break;
            }
            Some((p, d)) => {
                if !sufficient(a, p.energy) || (i > 0 && p.energy >= e_lo) {
                    bracket = Some((a_lo, e_lo, a));
                    break;
                }
                if curvature(d) {
                    return Ok(Ok((a, p)));
                }
                if d >= 0.0 {
                    bracket = Some((a, p.energy, a_lo));
                    break;
                }
                a_lo = a;
                e_lo = p.energy;
                a *= 2.0;
            }
        }
    }
    let Some((mut lo, mut e_lo, mut hi)) = bracket else {
        return Ok(Err(lowest));
    };
    for _ in 0..MAX_HALVINGS {
        let a = 0.5 * (lo + hi);
        match eval(a)? {
            Some((p, d)) if sufficient(a, p.energy) && p.energy < e_lo => {
                if curvature(d) {
                    return Ok(Ok((a, p)));
                }
                if d * (hi - lo) >= 0.0 {
                    hi = lo;
                }
                lo = a;
                e_lo = p.energy;
            }
            _ => hi = a,
        }
    }
    Ok(Err(lowest))
}

fn stacked_norm(s: &Stacked) -> f64 {
    dot(&s.data, &s.data).sqrt()
}

/// Runs the CG iteration from `f0`, whose boundary rows must lie on the unit
/// sphere. The preconditioner is factored once from `L_V(f0)`.
pub fn cg_minimize(mesh: &TetMesh, f0: &SimplicialMap, cfg: &SolverConfig) -> Result<(SimplicialMap, SolverReport)> {
    cfg.validate()?;
    f0.check_matches(mesh)?;
    let start = Instant::now();
    let problem = Problem::new(mesh);

    let boundary: Vec<_> = mesh.boundary().iter().map(|&b| f0.coords[b]).collect();
    let mut sb = to_spherical(&boundary);
    sb.canonicalize();
    let x0 = Stacked::pack(mesh, f0, &sb);
    let mut cur = problem.evaluate(x0).ok_or(Error::ZeroImageVolume)?;
    let lap0 = build_laplacian_with(&problem.pattern, mesh, &cur.f)?;
    let precond = factor_preconditioner(&lap0, mesh)?;
    let mut g = grad_iso_energy_with(mesh, &cur.f, &cur.x.angles(), &lap0, &cur.parts)?;

    let mut h = precond.apply(&g);
    let mut lambda = dot(&g.data, &h.data);
    let mut records = vec![IterRecord {
        iter: 0,
        energy: cur.energy,
        alpha: 0.0,
        beta: 0.0,
        grad_norm: stacked_norm(&g),
        precond_grad_norm: lambda.max(0.0).sqrt(),
        foldings: cur.foldings,
    }];
    let mut prev: Option<(Stacked, f64)> = None;
    let mut a_prev: Option<f64> = None;
    let mut termination = Termination::MaxIters;

    for iter in 1..=cfg.cg_max_iters {
        if !(lambda > 0.0) || !lambda.is_finite() {
            termination = Termination::TolReached;
            break;
        }
        let steepest = h.like(h.data.iter().map(|v| -v).collect());
        let (mut dir, mut beta) = match &prev {
            Some((p, lambda_prev)) => {
                let beta = lambda / lambda_prev;
                (steepest.axpy(beta, p), beta)
            }
            None => (steepest.clone(), 0.0),
        };
        if dot(&dir.data, &g.data) >= 0.0 {
            dir = steepest.clone();
            beta = 0.0;
        }

        let mut step = None;
        let mut lowest = f64::INFINITY;
        for attempt in 0..2 {
            if attempt == 1 {
                if beta == 0.0 {
                    break;
                }
                dir = steepest.clone();
                beta = 0.0;
            }
            let dphi0 = dot(&dir.data, &g.data);
            let a_init = a_prev.unwrap_or(cfg.alpha0 / norm_inf(&dir.data));
            let res = match cfg.safeguard {
                Safeguard::QuadraticGuarded => guarded_step(&problem, &cur, &dir, dphi0, a_init),
                Safeguard::StrongWolfe { c1, c2 } => {
                    let fit = problem
                        .canonical(&cur.x, a_init, &dir)
                        .map(|p| quadratic_step(cur.energy, dphi0, a_init, p.energy))
                        .filter(|a| a.is_finite() && *a > 0.0)
                        .unwrap_or(a_init);
                    wolfe_step(&problem, &cur, &dir, dphi0, fit, c1, c2)?
                }
            };
            match res {
                Ok(s) => {
                    step = Some(s);
                    break;
                }
                Err(e) => lowest = lowest.min(e),
            }
        }
        let Some((alpha, mut next)) = step else {
            let scale = ROUNDOFF * (cur.energy.abs() + cur.parts.image_volume);
            termination = if (lowest - cur.energy).abs() <= scale || lowest.is_infinite() && lambda.sqrt() <= scale {
                Termination::TolReached
            } else {
                Termination::LineSearchFailure
            };
            break;
        };
        if matches!(cfg.safeguard, Safeguard::StrongWolfe { .. }) {
            let mut x = next.x.clone();
            x.canonicalize();
            next = problem.evaluate(x).ok_or(Error::ZeroImageVolume)?;
        }

        let delta = cur.energy - next.energy;
        prev = Some((dir, lambda));
        a_prev = Some(alpha);
        cur = next;
        g = problem.gradient(&cur)?;
        h = precond.apply(&g);
        lambda = dot(&g.data, &h.data);
        records.push(IterRecord {
            iter,
            energy: cur.energy,
            alpha,
            beta,
            grad_norm: stacked_norm(&g),
            precond_grad_norm: lambda.max(0.0).sqrt(),
            foldings: cur.foldings,
        });
        if delta <= cfg.tol_epsilon {
            termination = Termination::TolReached;
            break;
        }
    }

    Ok((
        cur.f,
        SolverReport {
            records,
            termination,
            elapsed: start.elapsed(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::iso_energy;
    use crate::mesh::{generate_mesh, MeshKind};
    use crate::solver::boundary_init::init_boundary_sphere;
    use crate::solver::vsem::vsem_fixed_point;

    #[test]
    fn quadratic_fit_is_exact_on_a_parabola() {
        // Φ(α) = (α - 2)²
        assert_eq!(quadratic_step(4.0, -4.0, 1.0, 1.0), 2.0);
    }

    #[test]
    fn unit_ball_identity_stops_at_once() {
        let mesh = generate_mesh(MeshKind::Ball, 4);
        let id = SimplicialMap::identity(&mesh);
        let (f, report) = cg_minimize(&mesh, &id, &SolverConfig::default()).unwrap();
        assert_eq!(report.termination, Termination::TolReached);
        assert!(report.records.len() <= 3);
        for (a, b) in f.coords.iter().zip(&id.coords) {
            assert!((a - b).norm() < 1e-8);
        }
    }

    fn warm_start(kind: MeshKind, r: usize) -> (TetMesh, SimplicialMap) {
        let mesh = generate_mesh(kind, r);
        let fb = init_boundary_sphere(&mesh).unwrap();
        let f = vsem_fixed_point(&mesh, &fb, 5).unwrap().map;
        (mesh, f)
    }

    #[test]
    fn guarded_trace_is_monotone_with_unit_boundary() {
        let (mesh, f0) = warm_start(MeshKind::Blob(3), 4);
        let cfg = SolverConfig {
            cg_max_iters: 40,
            ..Default::default()
        };
        let (f, report) = cg_minimize(&mesh, &f0, &cfg).unwrap();
        assert_ne!(report.termination, Termination::LineSearchFailure);
        for w in report.records.windows(2) {
            assert!(w[1].energy <= w[0].energy);
            assert!(w[1].beta >= 0.0);
        }
        assert!(report.records.last().unwrap().energy < report.records[0].energy);
        assert_eq!(report.records.last().unwrap().energy, iso_energy(&mesh, &f).unwrap());
        for &b in mesh.boundary() {
            assert!((f.coords[b].norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn wolfe_mode_decreases_energy() {
        let (mesh, f0) = warm_start(MeshKind::Cube, 4);
        let cfg = SolverConfig {
            cg_max_iters: 20,
            safeguard: Safeguard::StrongWolfe { c1: 1e-4, c2: 0.4 },
            ..Default::default()
        };
        let (_, report) = cg_minimize(&mesh, &f0, &cfg).unwrap();
        assert!(report.records.last().unwrap().energy < report.records[0].energy);
        // minimum preconditioned gradient norm so far never increases
        let mut best = f64::INFINITY;
        for r in &report.records {
            best = best.min(r.precond_grad_norm);
        }
        assert!(best < report.records[0].precond_grad_norm);
    }
}
