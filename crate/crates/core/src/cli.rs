//! `swetop` command line: `forward`, `adjoint`, `td` and `validate`.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::adjoint::{discrete_transpose_propagate, run_adjoint, tangent_propagate, AdjointTrajectory};
use crate::config::{parse_config, DumpKind, RunConfig, Scene};
use crate::dump::{adjoint_table, forward_table, td_table, write_table};
use crate::error::{Result, SweError};
use crate::forward::{run_forward, StoragePolicy, Trajectory};
use crate::grid::{AdjointState, ConservedState, PerturbationShape};
use crate::objective::evaluate_j;
use crate::topo::TdContext;
use crate::validation::{affinity_check, dot_product_with, fd_td_oracle, white_noise, BaseProblem, HoleModel};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;

pub const DOT_TOL: f64 = 1e-10;
pub const AFFINITY_TOL: f64 = 1e-12;
pub const FD_REL_TOL: f64 = 0.25;

/// At most this many points are handed to the FD oracle by `validate`.
const FD_MAX_POINTS: usize = 5;

pub const USAGE: &str = "\
usage: swetop [--threads N] <command> <config>

commands:
  forward <config>    run the forward solver, dump the trajectory
  adjoint <config>    forward + adjoint, dump the adjoint trajectory
  td <config>         forward + adjoint + topological derivative field
  validate <config>   dot-product, affinity and FD-oracle checks

options:
  --threads N                cap worker threads (1 gives bit-identical dumps)
  --inject-fault adjoint     validate against a deliberately wrong adjoint

SWETOP_OUT overrides output.dir.";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    Forward,
    Adjoint,
    Td,
    Validate,
}

#[derive(Debug)]
struct Invocation {
    command: Command,
    config: PathBuf,
    threads: Option<usize>,
    fault: bool,
}

fn parse_args(args: &[String]) -> std::result::Result<Invocation, String> {
    let mut threads = None;
    let mut fault = false;
    let mut positional = Vec::new();
    let mut it = args.iter();
    while let Some(a) = it.next() {
        match a.as_str() {
            "--threads" => {
                let v = it.next().ok_or("--threads needs a value")?;
                let n: usize = v.parse().map_err(|_| format!("--threads expects a positive integer, got `{v}`"))?;
                if n == 0 {
                    return Err("--threads must be >= 1".into());
                }
                threads = Some(n);
            }
            "--inject-fault" => match it.next().map(String::as_str) {
                Some("adjoint") => fault = true,
                other => return Err(format!("unknown fault `{}`", other.unwrap_or(""))),
            },
            s if s.starts_with("--") => return Err(format!("unknown option `{s}`")),
            _ => positional.push(a.clone()),
        }
    }
    let [cmd, config] = &positional[..] else {
        return Err(if positional.is_empty() { "missing command".into() } else { "expected exactly <command> <config>".into() });
    };
    let command = match cmd.as_str() {
        "forward" => Command::Forward,
        "adjoint" => Command::Adjoint,
        "td" => Command::Td,
        "validate" => Command::Validate,
        other => return Err(format!("unknown command `{other}`")),
    };
    if fault && command != Command::Validate {
        return Err("--inject-fault applies to `validate` only".into());
    }
    Ok(Invocation { command, config: PathBuf::from(config), threads, fault })
}

fn exit_code(e: &SweError) -> i32 {
    match e {
        SweError::Config { .. } | SweError::Parse { .. } | SweError::Io(_) => EXIT_USAGE,
        _ => EXIT_NUMERICAL,
    }
}

/// Runs the CLI on `args` (without the program name).
pub fn cli_main(args: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let inv = match parse_args(args) {
        Ok(inv) => inv,
        Err(msg) => {
            let _ = writeln!(err, "error: {msg}\n\n{USAGE}");
            return EXIT_USAGE;
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = inv.threads {
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: cannot build thread pool: {e}");
            return EXIT_USAGE;
        }
    };
    let mut buf = Vec::new();
    let result = pool.install(|| run(&inv, &mut buf));
    let _ = out.write_all(&buf);
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn load(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| SweError::Io(format!("{}: {e}", path.display())))?;
    let mut cfg = parse_config(&text)?;
    if let Some(dir) = std::env::var_os("SWETOP_OUT") {
        cfg.output.dir = PathBuf::from(dir);
    }
    Ok(cfg)
}

fn run(inv: &Invocation, out: &mut dyn Write) -> Result<i32> {
    let cfg = load(&inv.config)?;
    let scene = cfg.scene()?;
    let grid = &scene.model.grid;
    writeln!(out, "grid {}x{}, dt = {:e}, steps = {}", grid.nx, grid.ny, grid.dt, grid.n_steps)?;
    match inv.command {
        Command::Forward => {
            let traj = forward(&scene, out)?;
            dump_forward(&cfg, &scene, &traj, out)?;
        }
        Command::Adjoint => {
            let (traj, adj) = forward_adjoint(&cfg, &scene, out)?;
            dump_forward(&cfg, &scene, &traj, out)?;
            dump_adjoint(&cfg, &scene, &adj, out)?;
        }
        Command::Td => {
            let (traj, adj) = forward_adjoint(&cfg, &scene, out)?;
            dump_forward(&cfg, &scene, &traj, out)?;
            dump_adjoint(&cfg, &scene, &adj, out)?;
            td(&cfg, &scene, &traj, &adj, out)?;
        }
        Command::Validate => return validate(&cfg, &scene, inv.fault, out),
    }
    Ok(EXIT_OK)
}

fn forward(scene: &Scene, out: &mut dyn Write) -> Result<Trajectory> {
    let traj = run_forward(&scene.init, &scene.model, scene.storage)?;
    let d = &traj.diagnostics;
    let (m0, m1) = (d.mass[0], *d.mass.last().unwrap_or(&d.mass[0]));
    writeln!(out, "mass: initial {m0:.16e}, final {m1:.16e}, max relative drift {:.3e}", d.relative_mass_drift())?;
    writeln!(out, "max wave speed {:.6e}, clamp events {}", d.max_wave_speed.iter().fold(0.0f64, |a, b| a.max(*b)), d.clamp_events)?;
    Ok(traj)
}

fn forward_adjoint(cfg: &RunConfig, scene: &Scene, out: &mut dyn Write) -> Result<(Trajectory, AdjointTrajectory)> {
    let traj = forward(scene, out)?;
    let j = evaluate_j(&traj, &scene.target, &scene.model.grid)?;
    writeln!(out, "objective J = {:.16e} (gradient {:.6e}, misfit {:.6e})", j.j_total, j.j_gradient, j.j_misfit)?;
    let adj = run_adjoint(&traj, &scene.target, &scene.model, cfg.td.adjoint_mode)?;
    writeln!(out, "adjoint ({}) max |P| = {:.6e}", cfg.td.adjoint_mode, adj.max_abs())?;
    Ok((traj, adj))
}

fn dump_path(cfg: &RunConfig, kind: DumpKind) -> Option<PathBuf> {
    cfg.output.formats.contains(&kind).then(|| cfg.output.dir.join(format!("{}.txt", kind.name())))
}

fn dump_forward(cfg: &RunConfig, scene: &Scene, traj: &Trajectory, out: &mut dyn Write) -> Result<()> {
    if let Some(p) = dump_path(cfg, DumpKind::Forward) {
        write_table(&p, &forward_table(traj, &scene.model.grid))?;
        writeln!(out, "wrote {}", p.display())?;
    }
    Ok(())
}

fn dump_adjoint(cfg: &RunConfig, scene: &Scene, adj: &AdjointTrajectory, out: &mut dyn Write) -> Result<()> {
    if let Some(p) = dump_path(cfg, DumpKind::Adjoint) {
        write_table(&p, &adjoint_table(adj, &scene.model.grid))?;
        writeln!(out, "wrote {}", p.display())?;
    }
    Ok(())
}

fn td(cfg: &RunConfig, scene: &Scene, traj: &Trajectory, adj: &AdjointTrajectory, out: &mut dyn Write) -> Result<()> {
    let ctx = TdContext::new(traj, adj, &scene.model, &scene.target)?;
    let points = cfg.td_points(&scene.model.grid);
    let mut samples = Vec::with_capacity(points.len());
    for (x, y, r) in ctx.field(&points) {
        match r {
            Ok(s) => samples.push(s),
            Err(e) => writeln!(out, "skipped ({x}, {y}): {e}")?,
        }
    }
    if samples.is_empty() {
        return Err(SweError::Domain("no admissible sample points".into()));
    }
    let (lo, hi) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s.breakdown.total), hi.max(s.breakdown.total)));
    writeln!(out, "td at {} points, range [{lo:.6e}, {hi:.6e}]", samples.len())?;
    if let Some(p) = dump_path(cfg, DumpKind::Td) {
        write_table(&p, &td_table(&samples))?;
        writeln!(out, "wrote {}", p.display())?;
    }
    Ok(())
}

/// The tangent applied where its transpose belongs.
fn untransposed(traj: &Trajectory, model: &crate::forward::SweModel, w: &AdjointState) -> Result<AdjointState> {
    let u: ConservedState = w.clone().into();
    Ok(tangent_propagate(traj, model, &u)?.into())
}

struct Check {
    name: &'static str,
    value: String,
    pass: bool,
}

fn validate(cfg: &RunConfig, scene: &Scene, fault: bool, out: &mut dyn Write) -> Result<i32> {
    use rand::SeedableRng;
    let grid = &scene.model.grid;
    let traj = run_forward(&scene.init, &scene.model, StoragePolicy::every_step())?;
    let mut checks = Vec::new();

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.validate.seed);
    let du0 = white_noise(grid, &mut rng);
    let w: AdjointState = white_noise(grid, &mut rng).into();
    let dot = if fault { dot_product_with(&traj, &scene.model, &du0, &w, untransposed)? } else { dot_product_with(&traj, &scene.model, &du0, &w, discrete_transpose_propagate)? };
    checks.push(Check { name: "dot-product", value: format!("residual {:.3e} (tol {DOT_TOL:e})", dot.residual), pass: dot.residual <= DOT_TOL });

    let aff = affinity_check(cfg.validate.seed);
    checks.push(Check { name: "affinity", value: format!("defect {aff:.3e} (tol {AFFINITY_TOL:e})"), pass: aff <= AFFINITY_TOL });

    let base = BaseProblem { model: scene.model.clone(), init: scene.init.clone(), target: scene.target.clone() };
    let adj = run_adjoint(&traj, &scene.target, &scene.model, cfg.td.adjoint_mode)?;
    let ctx = TdContext::new(&traj, &adj, &scene.model, &scene.target)?;
    let eps: Vec<f64> = cfg.validate.fd_eps.iter().map(|e| e * grid.dx.min(grid.dy)).collect();
    let candidates: Vec<(f64, f64)> = cfg
        .td_points(grid)
        .into_iter()
        .filter(|&p| PerturbationShape::disk(p, cfg.td.omega_radius, eps[0]).and_then(|s| s.check_interior(grid)).is_ok())
        .collect();
    let step = candidates.len().div_ceil(FD_MAX_POINTS).max(1);
    let points: Vec<(f64, f64)> = candidates.into_iter().step_by(step).take(FD_MAX_POINTS).collect();
    let (mut signs, mut close, mut total) = (0usize, 0usize, 0usize);
    for &p in &points {
        let analytic = ctx.evaluate(p.0, p.1)?.breakdown.total;
        let report = match fd_td_oracle(p, &eps, &base, cfg.td.omega_radius, HoleModel::Full) {
            Ok(r) => r,
            Err(SweError::Degenerate(m)) => {
                writeln!(out, "fd oracle skipped ({}, {}): {m}", p.0, p.1)?;
                continue;
            }
            Err(e) => return Err(e),
        };
        let a = report.agreement(analytic);
        total += 1;
        signs += a.sign_agrees as usize;
        close += (a.relative_error <= FD_REL_TOL) as usize;
    }
    if total > 0 {
        let pass = 5 * signs >= 4 * total && 5 * close >= 3 * total;
        checks.push(Check { name: "fd-oracle", value: format!("sign {signs}/{total}, within {FD_REL_TOL} {close}/{total}"), pass });
    } else {
        writeln!(out, "fd oracle: no admissible points, check not run")?;
    }

    writeln!(out, "{:<12} {:<6} detail", "check", "result")?;
    for c in &checks {
        writeln!(out, "{:<12} {:<6} {}", c.name, if c.pass { "pass" } else { "FAIL" }, c.value)?;
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
    if failed.is_empty() {
        Ok(EXIT_OK)
    } else {
        writeln!(out, "failed: {}", failed.join(", "))?;
        Ok(EXIT_VALIDATION)
    }
}
