//! Line-oriented run configuration.
//!
//! ```text
//! # comment
//! grid.nx = 32
//! physics.init_h = gaussian(1, 0.1, 0.5, 0.5, 0.1)
//! ```
//!
//! Defaults: `grid.g = 9.81`, `grid.cfl = 0.5`, `physics.alpha1 = physics.alpha2 = 0`,
//! flat bathymetry, zero discharges, `td.stride = 4`, `td.omega_radius = 1`,
//! continuous adjoint, `output.dir = out`, all dump kinds, `output.stride = 1`,
//! `validate.seed = 42`, `validate.fd_eps = 6 4 3` (in cells). The target depth
//! defaults to the initial depth spec.

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::adjoint::AdjointMode;
use crate::error::{Result, SweError};
use crate::forward::{StoragePolicy, SweModel};
use crate::grid::{make_grid, Bathymetry, ConservedState, Field, GridSpec, TargetField, ViscosityParams, H_MIN};

/// Analytic field addressed by name in a config.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldSpec {
    Constant(f64),
    /// `c + sx·x + sy·y`
    Ramp { c: f64, sx: f64, sy: f64 },
    /// `base + amp·exp(−|x − x₀|²/(2σ²))`
    Gaussian { base: f64, amp: f64, x0: f64, y0: f64, sigma: f64 },
    /// Depth `η − ψ` over the configured bathymetry; depth channels only.
    LakeAtRest(f64),
}

impl FieldSpec {
    fn eval(&self, x: f64, y: f64, psi: f64) -> f64 {
        match *self {
            FieldSpec::Constant(c) => c,
            FieldSpec::Ramp { c, sx, sy } => c + sx * x + sy * y,
            FieldSpec::Gaussian { base, amp, x0, y0, sigma } => {
                let r2 = (x - x0).powi(2) + (y - y0).powi(2);
                base + amp * (-r2 / (2.0 * sigma * sigma)).exp()
            }
            FieldSpec::LakeAtRest(eta) => eta - psi,
        }
    }

    /// Samples at cell centres; `psi` is needed only by `LakeAtRest`.
    pub fn sample(&self, grid: &GridSpec, psi: Option<&Field>) -> Field {
        let mut f = Field::zeros(grid.nx, grid.ny);
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let p = psi.map_or(0.0, |p| p.at(i, j));
                f.set(i, j, self.eval(grid.x_center(i), grid.y_center(j), p));
            }
        }
        f
    }

    fn params(&self) -> Vec<f64> {
        match *self {
            FieldSpec::Constant(c) => vec![c],
            FieldSpec::Ramp { c, sx, sy } => vec![c, sx, sy],
            FieldSpec::Gaussian { base, amp, x0, y0, sigma } => vec![base, amp, x0, y0, sigma],
            FieldSpec::LakeAtRest(eta) => vec![eta],
        }
    }
}

impl fmt::Display for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            FieldSpec::Constant(_) => "constant",
            FieldSpec::Ramp { .. } => "ramp",
            FieldSpec::Gaussian { .. } => "gaussian",
            FieldSpec::LakeAtRest(_) => "lake_at_rest",
        };
        let args: Vec<String> = self.params().iter().map(|v| v.to_string()).collect();
        write!(f, "{name}({})", args.join(", "))
    }
}

impl FromStr for FieldSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        let open = s.find('(').ok_or_else(|| format!("expected name(args), got `{s}`"))?;
        if !s.ends_with(')') {
            return Err(format!("missing `)` in `{s}`"));
        }
        let name = s[..open].trim();
        let inner = &s[open + 1..s.len() - 1];
        let args: Vec<f64> = if inner.trim().is_empty() {
            Vec::new()
        } else {
            inner.split(',').map(|a| a.trim().parse::<f64>().map_err(|e| format!("bad number `{}`: {e}", a.trim()))).collect::<std::result::Result<_, _>>()?
        };
        if args.iter().any(|v| !v.is_finite()) {
            return Err("arguments must be finite".into());
        }
        let want = |n: usize| if args.len() == n { Ok(()) } else { Err(format!("{name} takes {n} argument(s), got {}", args.len())) };
        match name {
            "constant" => want(1).map(|_| FieldSpec::Constant(args[0])),
            "ramp" => want(3).map(|_| FieldSpec::Ramp { c: args[0], sx: args[1], sy: args[2] }),
            "gaussian" => {
                want(5)?;
                if args[4] <= 0.0 {
                    return Err("gaussian sigma must be > 0".into());
                }
                Ok(FieldSpec::Gaussian { base: args[0], amp: args[1], x0: args[2], y0: args[3], sigma: args[4] })
            }
            "lake_at_rest" => want(1).map(|_| FieldSpec::LakeAtRest(args[0])),
            other => Err(format!("unknown field spec `{other}`")),
        }
    }
}

/// Which dumps the CLI writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DumpKind {
    Forward,
    Adjoint,
    Td,
}

impl DumpKind {
    pub const ALL: [DumpKind; 3] = [DumpKind::Forward, DumpKind::Adjoint, DumpKind::Td];

    pub fn name(self) -> &'static str {
        match self {
            DumpKind::Forward => "forward",
            DumpKind::Adjoint => "adjoint",
            DumpKind::Td => "td",
        }
    }
}

impl FromStr for DumpKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        DumpKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| format!("unknown dump kind `{s}` (forward, adjoint, td)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub t_end: f64,
    pub dt_hint: f64,
    pub g: f64,
    pub cfl: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicsConfig {
    pub alpha1: f64,
    pub alpha2: f64,
    pub bathymetry: FieldSpec,
    pub init: [FieldSpec; 3],
    pub target: [FieldSpec; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct TdConfig {
    /// Explicit sample points; empty means an interior sweep with `stride`.
    pub points: Vec<(f64, f64)>,
    pub stride: usize,
    pub omega_radius: f64,
    pub adjoint_mode: AdjointMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub formats: Vec<DumpKind>,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidateConfig {
    pub seed: u64,
    /// FD hole sizes in cells, strictly decreasing.
    pub fd_eps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub physics: PhysicsConfig,
    pub td: TdConfig,
    pub output: OutputConfig,
    pub validate: ValidateConfig,
}

/// Everything a solver run needs, built from a config.
#[derive(Debug, Clone)]
pub struct Scene {
    pub model: SweModel,
    pub init: ConservedState,
    pub target: TargetField,
    pub storage: StoragePolicy,
}

const KEYS: &[&str] = &[
    "grid.nx",
    "grid.ny",
    "grid.dx",
    "grid.dy",
    "grid.t_end",
    "grid.dt_hint",
    "grid.g",
    "grid.cfl",
    "physics.alpha1",
    "physics.alpha2",
    "physics.bathymetry",
    "physics.init_h",
    "physics.init_q1",
    "physics.init_q2",
    "physics.target_h",
    "physics.target_q1",
    "physics.target_q2",
    "td.points",
    "td.stride",
    "td.omega_radius",
    "td.adjoint_mode",
    "output.dir",
    "output.formats",
    "output.stride",
    "validate.seed",
    "validate.fd_eps",
];

const REQUIRED: &[&str] = &["grid.nx", "grid.ny", "grid.dx", "grid.dy", "grid.t_end", "grid.dt_hint", "physics.init_h"];

struct Entries {
    map: HashMap<&'static str, (usize, String)>,
}

impl Entries {
    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|(_, v)| v.as_str())
    }

    fn get<T: FromStr>(&self, key: &'static str, default: Option<T>) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        match self.map.get(key) {
            Some((_, v)) => v.parse::<T>().map_err(|e| SweError::config(key, format!("cannot parse `{v}`: {e}"))),
            None => default.ok_or_else(|| SweError::config(key, "missing required key")),
        }
    }

    /// Signed integers are accepted by the parser so that `-4` is reported as
    /// an out-of-range value rather than a syntax error.
    fn count(&self, key: &'static str, default: Option<usize>, min: i64) -> Result<usize> {
        let v: i64 = self.get(key, default.map(|d| d as i64))?;
        if v < min {
            return Err(SweError::config(key, format!("must be >= {min}, got {v}")));
        }
        Ok(v as usize)
    }

    fn number(&self, key: &'static str, default: Option<f64>) -> Result<f64> {
        let v: f64 = self.get(key, default)?;
        if !v.is_finite() {
            return Err(SweError::config(key, format!("must be finite, got {v}")));
        }
        Ok(v)
    }

    fn positive(&self, key: &'static str, default: Option<f64>) -> Result<f64> {
        let v = self.number(key, default)?;
        if v <= 0.0 {
            return Err(SweError::config(key, format!("must be > 0, got {v}")));
        }
        Ok(v)
    }
}

fn parse_points(s: &str) -> std::result::Result<Vec<(f64, f64)>, String> {
    s.split(';')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            let v: Vec<f64> = p.split_whitespace().map(|t| t.parse::<f64>().map_err(|e| format!("bad number `{t}`: {e}"))).collect::<std::result::Result<_, _>>()?;
            match v[..] {
                [x, y] if x.is_finite() && y.is_finite() => Ok((x, y)),
                _ => Err(format!("expected `x y`, got `{p}`")),
            }
        })
        .collect()
}

fn parse_numbers(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split_whitespace().map(|t| t.parse::<f64>().map_err(|e| format!("bad number `{t}`: {e}"))).collect()
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut map: HashMap<&'static str, (usize, String)> = HashMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| SweError::Parse { line: line_no, msg: format!("expected `section.key = value`, got `{line}`") })?;
        let key = key.trim();
        let value = value.trim();
        let known = KEYS.iter().find(|k| **k == key).ok_or_else(|| SweError::Parse { line: line_no, msg: format!("unknown key `{key}`") })?;
        if value.is_empty() {
            return Err(SweError::Parse { line: line_no, msg: format!("empty value for `{key}`") });
        }
        if let Some((first, _)) = map.get(known) {
            return Err(SweError::Parse { line: line_no, msg: format!("duplicate key `{key}` (lines {first} and {line_no})") });
        }
        map.insert(known, (line_no, value.to_string()));
    }
    for key in REQUIRED {
        if !map.contains_key(key) {
            return Err(SweError::config(*key, "missing required key"));
        }
    }
    let e = Entries { map };

    let grid = GridConfig {
        nx: e.count("grid.nx", None, 3)?,
        ny: e.count("grid.ny", None, 3)?,
        dx: e.positive("grid.dx", None)?,
        dy: e.positive("grid.dy", None)?,
        t_end: {
            let t = e.number("grid.t_end", None)?;
            if t < 0.0 {
                return Err(SweError::config("grid.t_end", format!("must be >= 0, got {t}")));
            }
            t
        },
        dt_hint: e.positive("grid.dt_hint", None)?,
        g: e.positive("grid.g", Some(9.81))?,
        cfl: {
            let c = e.positive("grid.cfl", Some(0.5))?;
            if c > 1.0 {
                return Err(SweError::config("grid.cfl", format!("must be in (0, 1], got {c}")));
            }
            c
        },
    };

    let spec = |key: &'static str, default: Option<FieldSpec>| -> Result<FieldSpec> {
        let s: FieldSpec = e.get(key, default)?;
        if matches!(s, FieldSpec::LakeAtRest(_)) && !key.ends_with("_h") {
            return Err(SweError::config(key, "lake_at_rest applies to depth fields only"));
        }
        Ok(s)
    };
    let zero = Some(FieldSpec::Constant(0.0));
    let alpha1 = e.number("physics.alpha1", Some(0.0))?;
    let alpha2 = e.number("physics.alpha2", Some(0.0))?;
    ViscosityParams::new(alpha1, alpha2)?;
    let init_h = spec("physics.init_h", None)?;
    let physics = PhysicsConfig {
        alpha1,
        alpha2,
        bathymetry: spec("physics.bathymetry", zero)?,
        init: [init_h, spec("physics.init_q1", zero)?, spec("physics.init_q2", zero)?],
        target: [spec("physics.target_h", Some(init_h))?, spec("physics.target_q1", zero)?, spec("physics.target_q2", zero)?],
    };

    let points = match e.raw("td.points") {
        Some(s) => parse_points(s).map_err(|m| SweError::config("td.points", m))?,
        None => Vec::new(),
    };
    let td = TdConfig {
        points,
        stride: e.count("td.stride", Some(4), 1)?,
        omega_radius: e.positive("td.omega_radius", Some(1.0))?,
        adjoint_mode: e.get("td.adjoint_mode", Some(AdjointMode::Continuous))?,
    };

    let formats = match e.raw("output.formats") {
        Some(s) => {
            let mut v = Vec::new();
            for item in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
                let k: DumpKind = item.parse().map_err(|m: String| SweError::config("output.formats", m))?;
                if !v.contains(&k) {
                    v.push(k);
                }
            }
            v
        }
        None => DumpKind::ALL.to_vec(),
    };
    let output = OutputConfig { dir: PathBuf::from(e.raw("output.dir").unwrap_or("out")), formats, stride: e.count("output.stride", Some(1), 1)? };

    let fd_eps = match e.raw("validate.fd_eps") {
        Some(s) => parse_numbers(s).map_err(|m| SweError::config("validate.fd_eps", m))?,
        None => vec![6.0, 4.0, 3.0],
    };
    if fd_eps.len() < 3 || fd_eps.iter().any(|v| !(v.is_finite() && *v > 0.0)) || fd_eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(SweError::config("validate.fd_eps", "need at least 3 positive, strictly decreasing sizes"));
    }
    let validate = ValidateConfig { seed: e.get("validate.seed", Some(42))?, fd_eps };

    Ok(RunConfig { grid, physics, td, output, validate })
}

/// Inverse of [`parse_config`]: every key written explicitly.
pub fn print_config(c: &RunConfig) -> String {
    let g = &c.grid;
    let p = &c.physics;
    let mut lines = vec![
        format!("grid.nx = {}", g.nx),
        format!("grid.ny = {}", g.ny),
        format!("grid.dx = {}", g.dx),
        format!("grid.dy = {}", g.dy),
        format!("grid.t_end = {}", g.t_end),
        format!("grid.dt_hint = {}", g.dt_hint),
        format!("grid.g = {}", g.g),
        format!("grid.cfl = {}", g.cfl),
        format!("physics.alpha1 = {}", p.alpha1),
        format!("physics.alpha2 = {}", p.alpha2),
        format!("physics.bathymetry = {}", p.bathymetry),
    ];
    for (k, name) in ["h", "q1", "q2"].iter().enumerate() {
        lines.push(format!("physics.init_{name} = {}", p.init[k]));
    }
    for (k, name) in ["h", "q1", "q2"].iter().enumerate() {
        lines.push(format!("physics.target_{name} = {}", p.target[k]));
    }
    if !c.td.points.is_empty() {
        let pts: Vec<String> = c.td.points.iter().map(|(x, y)| format!("{x} {y}")).collect();
        lines.push(format!("td.points = {}", pts.join("; ")));
    }
    lines.push(format!("td.stride = {}", c.td.stride));
    lines.push(format!("td.omega_radius = {}", c.td.omega_radius));
    lines.push(format!("td.adjoint_mode = {}", c.td.adjoint_mode));
    lines.push(format!("output.dir = {}", c.output.dir.display()));
    let f: Vec<&str> = c.output.formats.iter().map(|k| k.name()).collect();
    lines.push(format!("output.formats = {}", f.join(", ")));
    lines.push(format!("output.stride = {}", c.output.stride));
    lines.push(format!("validate.seed = {}", c.validate.seed));
    let eps: Vec<String> = c.validate.fd_eps.iter().map(f64::to_string).collect();
    lines.push(format!("validate.fd_eps = {}", eps.join(" ")));
    let mut out = lines.join("\n");
    out.push('\n');
    out
}

impl RunConfig {
    /// Builds the model, initial state and target.
    ///
    /// The time step is `dt_hint` capped at `cfl ×` the stable step of the
    /// initial state, then shrunk so that it divides `t_end`.
    pub fn scene(&self) -> Result<Scene> {
        let g = &self.grid;
        let p = &self.physics;
        let probe = make_grid(g.nx, g.ny, g.dx, g.dy, g.t_end, g.dt_hint, g.g)?;
        let psi = p.bathymetry.sample(&probe, None);
        let sample = |specs: &[FieldSpec; 3], what: &str| -> Result<ConservedState> {
            let h = specs[0].sample(&probe, Some(&psi));
            if let Some(v) = h.data.iter().find(|v| !(**v >= H_MIN)) {
                return Err(SweError::config(format!("physics.{what}_h"), format!("depth must be >= {H_MIN:e} everywhere, got {v}")));
            }
            Ok(ConservedState { h, q1: specs[1].sample(&probe, None), q2: specs[2].sample(&probe, None) })
        };
        let init = sample(&p.init, "init")?;
        let target_state = sample(&p.target, "target")?;
        let visc = ViscosityParams::new(p.alpha1, p.alpha2)?;

        let trial = SweModel::for_initial(probe.clone(), Bathymetry::new(&probe, psi.clone())?, visc, &init)?;
        let cap = g.cfl * trial.max_stable_dt(&init);
        let grid = if g.dt_hint > cap { make_grid(g.nx, g.ny, g.dx, g.dy, g.t_end, cap, g.g)? } else { probe };
        let model = SweModel::for_initial(grid.clone(), Bathymetry::new(&grid, psi)?, visc, &init)?;
        let target = TargetField::constant_in_time(target_state);
        Ok(Scene { model, init, target, storage: StoragePolicy::stride(self.output.stride)? })
    }

    /// Sample points: the explicit list, or an interior sweep.
    pub fn td_points(&self, grid: &GridSpec) -> Vec<(f64, f64)> {
        if self.td.points.is_empty() {
            crate::topo::interior_sweep(grid, self.td.stride)
        } else {
            self.td.points.clone()
        }
    }
}
