//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{Matrix3, Rotation3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use volball::energy::{build_laplacian, image_volume, iso_energy, stretch_energy};
use volball::mesh::{generate_mesh, jitter_interior, MeshKind};
use volball::metrics::{folding_count, local_distortion, summarize};
use volball::registration::{deformation_measure, register, ImageLocator, Location};
use volball::solver::{
    init_boundary_sphere_with, parameterize, quadratic_step, vsem_fixed_point, vsem_iterate, BoundaryInitConfig,
    SolverConfig,
};
use volball::spherical::{grad_iso_energy, to_spherical, Stacked};
use volball::{SimplicialMap, TetMesh, Vec3};

type Outcome = (bool, String);

fn warm_map(mesh: &TetMesh, steps: usize) -> SimplicialMap {
    let sphere = init_boundary_sphere_with(mesh, &BoundaryInitConfig::default());
    vsem_fixed_point(mesh, &sphere.points, steps).unwrap().map
}

fn pack(mesh: &TetMesh, f: &SimplicialMap) -> Stacked {
    let b: Vec<Vec3> = mesh.boundary().iter().map(|&v| f.coords[v]).collect();
    let mut sb = to_spherical(&b);
    sb.canonicalize();
    Stacked::pack(mesh, f, &sb)
}

/// Random perturbation of `base` with positive image volume and no more
/// folded tets than `base`.
fn random_feasible(mesh: &TetMesh, base: &Stacked, amp: f64, rng: &mut ChaCha8Rng) -> Stacked {
    let folds = folding_count(mesh, &base.unpack(mesh));
    let mut amp = amp;
    loop {
        let mut x = base.clone();
        for v in &mut x.data {
            *v += rng.random_range(-amp..amp);
        }
        let f = x.unpack(mesh);
        let ok = image_volume(mesh, &f) > 0.0
            && (0..mesh.n_tets()).all(|t| f.image_tet_volume(mesh, t) != 0.0)
            && folding_count(mesh, &f) <= folds;
        if ok {
            return x;
        }
        amp *= 0.5;
    }
}

fn criterion_1() -> Outcome {
    let meshes = [
        ("ball", generate_mesh(MeshKind::Ball, 4)),
        ("cube", generate_mesh(MeshKind::Cube, 4)),
        ("blob", generate_mesh(MeshKind::Blob(3), 4)),
        ("ellipsoid", jitter_interior(&generate_mesh(MeshKind::Ellipsoid(3.0, 1.0, 1.0), 2), 0.2, 4)),
    ];
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_full, mut worst_frozen) = (0.0f64, 0.0f64);
    let mut components = 0;
    for (_, mesh) in &meshes {
        assert!(mesh.n_vertices() <= 2000);
        let base = pack(mesh, &warm_map(mesh, 2));
        let ve = mesh.volume();
        for _ in 0..5 {
            let x = random_feasible(mesh, &base, 0.02, &mut rng);
            let f = x.unpack(mesh);
            let lap = build_laplacian(mesh, &f).unwrap();
            let g = grad_iso_energy(mesh, &f, &x.angles(), &lap).unwrap();
            let gmax = g.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let v0 = image_volume(mesh, &f);
            let t0 = lap.trace_form(&f.coords);
            for k in 0..x.data.len() {
                let mut plus = x.clone();
                let mut minus = x.clone();
                plus.data[k] += h;
                minus.data[k] -= h;
                let (fp, fm) = (plus.unpack(mesh), minus.unpack(mesh));
                let full = (iso_energy(mesh, &fp).unwrap() - iso_energy(mesh, &fm).unwrap()) / (2.0 * h);
                // L frozen at f; its trace term enters with the Euler factor 3
                let (vp, vm) = (image_volume(mesh, &fp), image_volume(mesh, &fm));
                let d_inv_v = (1.0 / vp - 1.0 / vm) / (2.0 * h);
                let d_trace = (lap.trace_form(&fp.coords) - lap.trace_form(&fm.coords)) / (2.0 * h);
                let d_v = (vp - vm) / (2.0 * h);
                let frozen = 0.5 * ve * t0 * d_inv_v + 0.5 * ve / v0 * 3.0 * d_trace - d_v;
                let scale = g.data[k].abs().max(1e-3 * gmax);
                worst_full = worst_full.max((full - g.data[k]).abs() / scale);
                worst_frozen = worst_frozen.max((frozen - g.data[k]).abs() / scale);
                components += 1;
            }
        }
    }
    (
        worst_full < 1e-5 && worst_frozen < 1e-5,
        format!(
            "{components} components on {} meshes x 5 maps; max rel err frozen-L oracle {worst_frozen:.2e}, full FD {worst_full:.2e}",
            meshes.len()
        ),
    )
}

fn criterion_2() -> Outcome {
    let mut ok = true;
    let mut worst_id = 0.0f64;
    for kind in [MeshKind::Ball, MeshKind::Cube, MeshKind::Blob(8)] {
        let mesh = generate_mesh(kind, 5);
        let id = SimplicialMap::identity(&mesh);
        for s in [1.0, 0.5, 2.0] {
            let e = iso_energy(&mesh, &id.scaled(s)).unwrap();
            worst_id = worst_id.max(e.abs());
            ok &= e.abs() < 1e-10;
        }
    }
    let mesh = generate_mesh(MeshKind::Blob(9), 4);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_trace = 0.0f64;
    for _ in 0..100 {
        let f = SimplicialMap::new(
            (0..mesh.n_vertices())
                .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect(),
        );
        let lap = build_laplacian(&mesh, &f).unwrap();
        let direct = stretch_energy(&mesh, &f);
        let rel = (0.5 * lap.trace_form(&f.coords) - direct).abs() / direct;
        worst_trace = worst_trace.max(rel);
    }
    ok &= worst_trace < 1e-10;
    (ok, format!("max |E_I(s*id)| {worst_id:.2e}; max rel trace-form gap {worst_trace:.2e} over 100 maps"))
}

fn criterion_3() -> Outcome {
    let mesh = generate_mesh(MeshKind::Blob(10), 3);
    let ve = mesh.volume();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut min_ei, mut min_cs) = (f64::INFINITY, f64::INFINITY);
    let mut made = 0;
    while made < 1000 {
        let a = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0)) + Matrix3::identity() * 1.5;
        if a.determinant() <= 0.1 {
            continue;
        }
        let amp = rng.random_range(0.0..0.08);
        let f = SimplicialMap::new(
            mesh.vertices()
                .iter()
                .map(|v| a * v + Vec3::new(rng.random_range(-amp..amp), rng.random_range(-amp..amp), rng.random_range(-amp..amp)))
                .collect(),
        );
        if folding_count(&mesh, &f) > 0 {
            continue;
        }
        made += 1;
        let vf = image_volume(&mesh, &f);
        min_ei = min_ei.min(iso_energy(&mesh, &f).unwrap() / vf.max(1.0));
        min_cs = min_cs.min((stretch_energy(&mesh, &f) * ve - vf * vf) / (vf * vf));
    }
    (
        min_ei >= -1e-10 && min_cs >= -1e-10,
        format!("1000 orientation-preserving maps; min E_I {min_ei:.2e}, min (E_V V(e) - V(f)^2)/V(f)^2 {min_cs:.2e}"),
    )
}

fn criterion_4() -> Outcome {
    let mut ok = true;
    let mut details = Vec::new();
    for (name, kind) in [("ball", MeshKind::Ball), ("cube", MeshKind::Cube), ("blob", MeshKind::Blob(1))] {
        let start = Instant::now();
        let mesh = generate_mesh(kind, 12);
        let cfg = SolverConfig {
            cg_max_iters: 100,
            ..Default::default()
        };
        let run = parameterize(&mesh, &cfg).unwrap();
        let warm = warm_map(&run.mesh, cfg.vsem_warm_steps);
        let gap = (iso_energy(&run.mesh, &warm).unwrap() - run.report.records[0].energy).abs();
        let same_start = gap <= 1e-12 * run.mesh.volume();
        let vsem = vsem_iterate(&run.mesh, &warm, 100).unwrap();
        let e_vsem = *vsem.energies.last().unwrap();
        let e_iem = run.report.final_energy();
        let monotone = run.report.records.windows(2).all(|w| w[1].energy <= w[0].energy);
        let secs = start.elapsed().as_secs_f64();
        ok &= same_start && e_iem < e_vsem && monotone && secs < 300.0;
        details.push(format!(
            "{name} (n={}): start gap {gap:.1e}, IEM {e_iem:.3e} after {} it vs VSEM {e_vsem:.3e}, monotone {monotone}, {secs:.1}s",
            mesh.n_vertices(),
            run.report.iterations()
        ));
    }
    (ok, details.join("; "))
}

fn criterion_5() -> Outcome {
    let mut ok = true;
    let mut details = Vec::new();
    for (name, kind) in [("ball", MeshKind::Ball), ("cube", MeshKind::Cube)] {
        let mesh = generate_mesh(kind, 10);
        let run = parameterize(&mesh, &SolverConfig::default()).unwrap();
        let d = local_distortion(&run.mesh, &run.map).unwrap();
        let s = summarize(&d, folding_count(&run.mesh, &run.map));
        ok &= s.p95 < 0.1 && s.folding_count == 0;
        details.push(format!("{name}: p95 {:.3e}, foldings {}", s.p95, s.folding_count));
    }
    (ok, details.join("; "))
}

fn criterion_6() -> Outcome {
    let mesh = generate_mesh(MeshKind::Ellipsoid(3.0, 1.0, 1.0), 6);
    let mut stats = Vec::new();
    for ast in [true, false] {
        let cfg = SolverConfig {
            ast_enabled: ast,
            ..Default::default()
        };
        let run = parameterize(&mesh, &cfg).unwrap();
        let d = local_distortion(&run.mesh, &run.map).unwrap();
        stats.push(summarize(&d, folding_count(&run.mesh, &run.map)));
    }
    let (on, off) = (&stats[0], &stats[1]);
    let folds_ok = on.folding_count <= off.folding_count;
    let rel_gap = (on.mean - off.mean).abs() / on.mean.max(off.mean);
    (
        folds_ok && rel_gap <= 0.2,
        format!(
            "foldings AST {} vs no-AST {}; mean D_V AST {:.3e} vs no-AST {:.3e} (gap {:.0}%)",
            on.folding_count,
            off.folding_count,
            on.mean,
            off.mean,
            100.0 * rel_gap
        ),
    )
}

fn criterion_7() -> Outcome {
    let mesh = generate_mesh(MeshKind::Blob(2), 8);
    let run = parameterize(&mesh, &SolverConfig::default()).unwrap();
    let (m, f) = (&run.mesh, &run.map);

    let reg = register(m, f, m, f).unwrap();
    let self_disp = m.vertices().iter().zip(&reg.phi).map(|(v, p)| (v - p).norm()).fold(0.0, f64::max);

    let q = Rotation3::from_euler_angles(0.4, -0.9, 1.3).into_inner();
    let rotated = SimplicialMap::new(f.coords.iter().map(|p| q * p).collect());
    let d_rot = deformation_measure(m, &register(m, f, m, &rotated).unwrap());

    let locator = ImageLocator::new(m, f);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut agree = 0;
    let mut queries = 0;
    while queries < 1000 {
        let p = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if p.norm() > 0.95 {
            continue;
        }
        queries += 1;
        let walk = locator.locate(&p, Some(rng.random_range(0..m.n_tets()))).unwrap();
        let brute = locator.locate_brute(&p).unwrap();
        let same = match (walk, brute) {
            (Location::Tet(a, wa), Location::Tet(b, wb)) => {
                a == b || wa.iter().zip(&wb).all(|(x, y)| (x - y).abs() < 1e-10) || {
                    // on a shared face both tets are correct; compare points
                    let pa = locator.interpolate(&walk, &f.coords);
                    let pb = locator.interpolate(&brute, &f.coords);
                    (pa - pb).norm() < 1e-10
                }
            }
            _ => false,
        };
        agree += same as usize;
    }
    (
        self_disp < 1e-6 && d_rot < 1e-3 && agree == queries,
        format!(
            "self-registration max displacement {self_disp:.2e}; rotated-pair d(phi) {d_rot:.2e}; walk = brute force on {agree}/{queries} queries"
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let a = rng.random_range(0.1..10.0);
        let m = rng.random_range(0.01..5.0);
        let c = rng.random_range(-1.0..1.0);
        let phi = |x: f64| a * (x - m) * (x - m) + c;
        let a_prev = rng.random_range(0.1..5.0);
        let alpha = quadratic_step(phi(0.0), -2.0 * a * m, a_prev, phi(a_prev));
        worst = worst.max((alpha - m).abs());
    }
    (worst < 1e-12, format!("max |alpha - argmin| {worst:.2e} over 100 quadratics"))
}

fn criterion_9() -> Outcome {
    volball::set_threads(1);
    let mesh = generate_mesh(MeshKind::Blob(4), 8);
    let cfg = SolverConfig {
        ast_enabled: false,
        ..Default::default()
    };
    let a = parameterize(&mesh, &cfg).unwrap();
    let b = parameterize(&mesh, &cfg).unwrap();
    let same_report = a.report.to_csv() == b.report.to_csv();
    let same_map = a.map.coords.iter().zip(&b.map.coords).all(|(p, q)| {
        p.iter().zip(q.iter()).all(|(x, y)| x.to_bits() == y.to_bits())
    });
    (
        same_report && same_map,
        format!(
            "two sequential runs: reports identical {same_report} ({} bytes), maps bitwise identical {same_map}",
            a.report.to_csv().len()
        ),
    )
}

fn main() -> ExitCode {
    volball::set_threads(1);
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("gradient correctness", criterion_1),
        ("energy identities", criterion_2),
        ("nonnegativity and Cauchy-Schwarz", criterion_3),
        ("solver ordering", criterion_4),
        ("distortion quality", criterion_5),
        ("AST ablation", criterion_6),
        ("registration", criterion_7),
        ("quadratic step exactness", criterion_8),
        ("determinism", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = run();
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {} [{}] {name}: {detail} ({:.1}s)",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
