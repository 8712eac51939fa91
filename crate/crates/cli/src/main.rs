use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use volball::mesh::{generate_mesh, parse_medit, read_mesh, write_medit, MeshKind};
use volball::metrics::{distortion_csv, folding_count, histogram, histogram_csv, local_distortion, summarize, summary_csv};
use volball::registration::{deformation_measure, homotopy, register, registration_csv, RegistrationMap};
use volball::solver::{parameterize, Safeguard, SolverConfig, Termination};
use volball::{SimplicialMap, TetMesh};

/// Volume-preserving parameterization of tetrahedral meshes onto the unit ball.
#[derive(Parser, Debug)]
#[command(name = "volball", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Map a mesh onto the unit ball.
    Param(ParamArgs),
    /// Local volume distortion of a map.
    Metrics {
        mesh: PathBuf,
        map: PathBuf,
        #[arg(short, long, default_value = ".")]
        output: PathBuf,
    },
    /// Register a source solid onto a target through their ball maps.
    Register {
        #[command(flatten)]
        pair: PairArgs,
        #[arg(short, long, default_value = ".")]
        output: PathBuf,
    },
    /// Frames of the linear homotopy between source and registered positions.
    Morph {
        #[command(flatten)]
        pair: PairArgs,
        /// Comma-separated times in [0, 1].
        #[arg(long = "t", value_delimiter = ',', default_values_t = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0])]
        times: Vec<f64>,
        #[arg(short, long, default_value = ".")]
        output: PathBuf,
    },
    /// Write a synthetic test mesh.
    Generate {
        kind: Kind,
        #[arg(long, default_value_t = 8)]
        resolution: usize,
        /// Perturbation seed for `blob`.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Args, Debug)]
struct PairArgs {
    mesh0: PathBuf,
    map0: PathBuf,
    mesh1: PathBuf,
    map1: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    Cube,
    Ball,
    Ellipsoid,
    Blob,
}

#[derive(Args, Debug)]
struct ParamArgs {
    input: PathBuf,
    #[arg(short, long, default_value = "out")]
    output: PathBuf,
    /// Maximum CG iterations.
    #[arg(long)]
    iters: Option<usize>,
    /// Energy-decrease tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Fixed-point warm-start steps.
    #[arg(long)]
    warm_steps: Option<usize>,
    /// Skip the anisotropic scaling step.
    #[arg(long)]
    no_ast: bool,
    /// Strong-Wolfe line search instead of the guarded quadratic step.
    #[arg(long)]
    wolfe: bool,
    /// Accepted for reproducible batch scripts; the pipeline draws no random numbers.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the factorizations (1 = sequential).
    #[arg(long)]
    threads: Option<usize>,
    /// TOML file with any of the keys above; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct FileConfig {
    iters: Option<usize>,
    tol: Option<f64>,
    warm_steps: Option<usize>,
    no_ast: Option<bool>,
    wolfe: Option<bool>,
    #[allow(dead_code)]
    seed: Option<u64>,
    threads: Option<usize>,
}

/// An error with the process exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn io_err(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 1, error: error.into() }
}

fn solver_err(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, error: error.into() }
}

type CliResult<T> = Result<T, Failure>;

fn load_mesh(path: &Path) -> CliResult<TetMesh> {
    read_mesh(path).with_context(|| format!("reading mesh {}", path.display())).map_err(io_err)
}

/// A map file is a MEDIT mesh whose vertices are the images.
fn load_map(path: &Path, mesh: &TetMesh) -> CliResult<SimplicialMap> {
    let text = fs::read_to_string(path).with_context(|| format!("reading map {}", path.display())).map_err(io_err)?;
    let raw = parse_medit(&text).with_context(|| format!("parsing map {}", path.display())).map_err(io_err)?;
    let map = SimplicialMap::new(raw.vertices);
    map.check_matches(mesh).with_context(|| format!("map {}", path.display())).map_err(io_err)?;
    Ok(map)
}

fn prepare_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display())).map_err(io_err)
}

fn write(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display())).map_err(io_err)
}

fn solver_config(args: &ParamArgs) -> CliResult<(SolverConfig, usize)> {
    let file = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display())).map_err(io_err)?;
            toml::from_str::<FileConfig>(&text).with_context(|| format!("parsing config {}", path.display())).map_err(io_err)?
        }
        None => FileConfig::default(),
    };
    let mut cfg = SolverConfig::default();
    if let Some(n) = args.iters.or(file.iters) {
        cfg.cg_max_iters = n;
    }
    if let Some(t) = args.tol.or(file.tol) {
        cfg.tol_epsilon = t;
    }
    if let Some(n) = args.warm_steps.or(file.warm_steps) {
        cfg.vsem_warm_steps = n;
    }
    if args.no_ast || file.no_ast == Some(true) {
        cfg.ast_enabled = false;
    }
    if args.wolfe || file.wolfe == Some(true) {
        cfg.safeguard = Safeguard::WOLFE_DEFAULT;
    }
    cfg.validate().map_err(io_err)?;
    let threads = args.threads.or(file.threads).unwrap_or(1);
    Ok((cfg, threads))
}

fn cmd_param(args: &ParamArgs) -> CliResult<()> {
    let (cfg, threads) = solver_config(args)?;
    let mesh = load_mesh(&args.input)?;
    prepare_dir(&args.output)?;
    volball::set_threads(threads);

    let run = parameterize(&mesh, &cfg).map_err(solver_err)?;
    write(&args.output.join("report.csv"), &run.report.to_csv())?;
    write(&args.output.join("map.mesh"), &write_medit(&run.map.coords, mesh.tets()))?;
    let foldings = folding_count(&run.mesh, &run.map);
    println!("E_I = {:e}", run.report.final_energy());
    println!("iterations = {}", run.report.iterations());
    println!("foldings = {foldings}");
    if run.report.termination == Termination::LineSearchFailure {
        return Err(solver_err(run.report.check().unwrap_err()));
    }
    Ok(())
}

fn cmd_metrics(mesh: &Path, map: &Path, output: &Path) -> CliResult<()> {
    let mesh = load_mesh(mesh)?;
    let map = load_map(map, &mesh)?;
    prepare_dir(output)?;
    let dist = local_distortion(&mesh, &map).map_err(solver_err)?;
    let summary = summary_csv(&summarize(&dist, folding_count(&mesh, &map)));
    write(&output.join("summary.csv"), &summary)?;
    write(&output.join("distortion.csv"), &distortion_csv(&dist))?;
    write(&output.join("histogram.csv"), &histogram_csv(&histogram(&dist)))?;
    print!("{summary}");
    Ok(())
}

fn load_pair(pair: &PairArgs, output: &Path) -> CliResult<(TetMesh, RegistrationMap)> {
    let mesh0 = load_mesh(&pair.mesh0)?;
    let map0 = load_map(&pair.map0, &mesh0)?;
    let mesh1 = load_mesh(&pair.mesh1)?;
    let map1 = load_map(&pair.map1, &mesh1)?;
    prepare_dir(output)?;
    let reg = register(&mesh0, &map0, &mesh1, &map1).map_err(solver_err)?;
    Ok((mesh0, reg))
}

fn cmd_register(pair: &PairArgs, output: &Path) -> CliResult<()> {
    let (mesh0, reg) = load_pair(pair, output)?;
    write(&output.join("registration.csv"), &registration_csv(&reg))?;
    println!("d(phi) = {:e}", deformation_measure(&mesh0, &reg));
    Ok(())
}

fn cmd_morph(pair: &PairArgs, times: &[f64], output: &Path) -> CliResult<()> {
    if let Some(t) = times.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(io_err(anyhow!("morph time {t} is outside [0, 1]")));
    }
    let (mesh0, reg) = load_pair(pair, output)?;
    for &t in times {
        let path = output.join(format!("frame_{t}.mesh"));
        write(&path, &write_medit(&homotopy(&mesh0, &reg, t), mesh0.tets()))?;
        println!("{}", path.display());
    }
    Ok(())
}

fn cmd_generate(kind: Kind, resolution: usize, seed: u64, output: &Path) -> CliResult<()> {
    if resolution == 0 {
        return Err(io_err(anyhow!("resolution must be at least 1")));
    }
    let kind = match kind {
        Kind::Cube => MeshKind::Cube,
        Kind::Ball => MeshKind::Ball,
        Kind::Ellipsoid => MeshKind::Ellipsoid(3.0, 1.0, 1.0),
        Kind::Blob => MeshKind::Blob(seed),
    };
    let mesh = generate_mesh(kind, resolution);
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        prepare_dir(dir)?;
    }
    write(output, &write_medit(mesh.vertices(), mesh.tets()))
}

fn run(cli: Cli) -> CliResult<()> {
    match &cli.command {
        Command::Param(args) => cmd_param(args),
        Command::Metrics { mesh, map, output } => cmd_metrics(mesh, map, output),
        Command::Register { pair, output } => cmd_register(pair, output),
        Command::Morph { pair, times, output } => cmd_morph(pair, times, output),
        Command::Generate {
            kind,
            resolution,
            seed,
            output,
        } => cmd_generate(*kind, *resolution, *seed, output),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}
