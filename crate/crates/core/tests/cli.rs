use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const GOOD: &str = "\
grid.nx = 16
grid.ny = 16
grid.dx = 0.0625
grid.dy = 0.0625
grid.t_end = 0.02
grid.dt_hint = 0.002
physics.alpha1 = 0.02
physics.alpha2 = 0.02
physics.init_h = gaussian(1, 0.05, 0.5, 0.5, 0.12)
physics.target_h = constant(1)
td.points = 0.5 0.5; 0.45 0.55; 0.55 0.45
";

fn swetop(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swetop")).args(args).env("SWETOP_OUT", dir.join("out")).output().unwrap()
}

fn write_cfg(dir: &Path, text: &str) -> String {
    let p = dir.join("run.cfg");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn no_arguments_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = swetop(dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("usage"));
}

#[test]
fn forward_writes_dump_and_mass_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), GOOD);
    let out = swetop(dir.path(), &["forward", &cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("max relative drift"));
    let dump = fs::read_to_string(dir.path().join("out/forward.txt")).unwrap();
    let mut lines = dump.lines();
    assert_eq!(lines.next(), Some("# x y t h q1 q2"));
    assert_eq!(lines.count(), 16 * 16 * 11);
}

#[test]
fn td_dumps_are_identical_across_runs_with_one_thread() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), GOOD);
    let mut dumps = Vec::new();
    for _ in 0..2 {
        let out = swetop(dir.path(), &["--threads", "1", "td", &cfg]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        dumps.push(["adjoint.txt", "td.txt"].map(|f| fs::read(dir.path().join("out").join(f)).unwrap()));
    }
    assert_eq!(dumps[0], dumps[1]);
    let td = String::from_utf8(dumps[0][1].clone()).unwrap();
    assert!(td.starts_with("# x y td r1_a1 r2_a1 dl_a1 r2_a2 dl_a2 dl_j\n"));
    assert_eq!(td.lines().count(), 4);
}

#[test]
fn bad_config_is_usage_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), &GOOD.replace("grid.nx = 16", "grid.nx = -4"));
    let out = swetop(dir.path(), &["forward", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid.nx"));
}

#[test]
fn blow_up_is_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    // Outflow drains the crest of a near-emergent bump; the flow speeds up
    // past the step limit.
    let text = GOOD.replace("gaussian(1, 0.05, 0.5, 0.5, 0.12)", "lake_at_rest(1)")
        + "physics.bathymetry = gaussian(0, 0.999, 0.5, 0.5, 0.3)\nphysics.init_q1 = ramp(-1, 2, 0)\n";
    let cfg = write_cfg(dir.path(), &text);
    let out = swetop(dir.path(), &["forward", &cfg]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

const SMOOTH: &str = "\
grid.nx = 32
grid.ny = 32
grid.dx = 0.03125
grid.dy = 0.03125
grid.t_end = 0.05
grid.dt_hint = 0.0015625
physics.alpha1 = 0.05
physics.alpha2 = 0.05
physics.init_h = gaussian(1, 0.1, 0.5, 0.5, 0.1)
physics.target_h = constant(1)
td.points = 0.4 0.5; 0.6 0.45; 0.5 0.62; 0.38 0.38; 0.55 0.35
";

#[test]
fn validate_passes_and_catches_a_broken_adjoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), SMOOTH);
    let ok = swetop(dir.path(), &["validate", &cfg]);
    let stdout = String::from_utf8_lossy(&ok.stdout);
    assert_eq!(ok.status.code(), Some(0), "{stdout}{}", String::from_utf8_lossy(&ok.stderr));
    assert!(stdout.contains("dot-product") && stdout.contains("affinity"));

    let bad = swetop(dir.path(), &["validate", &cfg, "--inject-fault", "adjoint"]);
    assert_eq!(bad.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("failed: dot-product"));
}
