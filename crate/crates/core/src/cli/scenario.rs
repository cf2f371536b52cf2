//! Scenario files: flat TOML sections under a versioned schema id.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::control::AlignmentConfig;
use crate::dynamics::{IntegratorConfig, InteractionKernel, Scheme};
use crate::measures::sampling::Sampler;
use crate::measures::{read_csv, EmpiricalMeasure, SupportBox};

pub const SCHEMA: &str = "kinalign.scenario/1";

/// A scenario error with the line it refers to, when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioError {
    pub origin: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "{}:{}: {}", self.origin, l, self.message),
            None => write!(f, "{}: {}", self.origin, self.message),
        }
    }
}

impl std::error::Error for ScenarioError {}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSection {
    pub dimension: usize,
    /// `uniform`, `truncated-gaussian`, `two-cluster` or `csv`.
    pub sampler: String,
    pub particles: Option<usize>,
    pub seed: Option<u64>,
    pub x_lo: Option<Vec<f64>>,
    pub x_hi: Option<Vec<f64>>,
    pub v_lo: Option<Vec<f64>>,
    pub v_hi: Option<Vec<f64>>,
    pub mean_x: Option<Vec<f64>>,
    pub mean_v: Option<Vec<f64>>,
    pub std_x: Option<Vec<f64>>,
    pub std_v: Option<Vec<f64>>,
    pub second_x_lo: Option<Vec<f64>>,
    pub second_x_hi: Option<Vec<f64>>,
    pub second_v_lo: Option<Vec<f64>>,
    pub second_v_hi: Option<Vec<f64>>,
    pub fraction_first: Option<f64>,
    /// Particle CSV, relative to the scenario file.
    pub path: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    /// `constant` or `power-law`.
    pub name: String,
    pub k: f64,
    pub beta: Option<f64>,
    /// Declared Lipschitz constant; derived from the kernel when absent.
    pub lipschitz: Option<f64>,
    /// Velocity diameter for the power-law constant; the initial support's
    /// when absent.
    pub velocity_diameter: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSection {
    pub c: f64,
    pub epsilon: f64,
    pub v_star: Vec<f64>,
    pub max_steps: Option<usize>,
}

fn default_scheme() -> String {
    "rk4".into()
}

fn default_dt() -> f64 {
    1e-3
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    #[serde(default = "default_scheme")]
    pub scheme: String,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "yes")]
    pub snap_to_switches: bool,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        Self { scheme: default_scheme(), dt: default_dt(), snap_to_switches: true }
    }
}

fn default_horizon() -> f64 {
    1.0
}

fn default_checkpoints() -> usize {
    10
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_checkpoints")]
    pub checkpoints: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { horizon: default_horizon(), checkpoints: default_checkpoints() }
    }
}

fn default_cfl() -> f64 {
    0.5
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub nx: usize,
    pub nv: usize,
    /// Particle count of the companion particle run.
    pub particles: Option<usize>,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub c: Option<Vec<f64>>,
    pub epsilon: Option<Vec<f64>>,
    pub particles: Option<Vec<usize>>,
}

fn default_dir() -> String {
    "out".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: String,
    /// Write the state after every this many steps; 0 keeps only the
    /// initial and final states.
    #[serde(default)]
    pub snapshot_every: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: default_dir(), snapshot_every: 0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: String,
    pub measure: MeasureSection,
    pub kernel: KernelSection,
    pub control: ControlSection,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    pub grid: Option<GridSection>,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub output: OutputSection,
    /// Directory of the scenario file; relative paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
    #[serde(skip)]
    pub origin: String,
    #[serde(skip)]
    source: String,
}

/// Line (1-based) of `key = ...` inside `[section]`, or of the section
/// header when `key` is empty.
fn locate(source: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (n, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            if key.is_empty() && current == section {
                return Some(n + 1);
            }
            continue;
        }
        if current == section && !key.is_empty() {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(n + 1);
                }
            }
        }
    }
    None
}

/// Everything a run needs, resolved and validated.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub initial: EmpiricalMeasure,
    pub kernel: InteractionKernel,
    pub align: AlignmentConfig,
}

impl Scenario {
    pub fn parse(source: &str, origin: &str, base_dir: &Path) -> Result<Self, ScenarioError> {
        let mut s: Scenario = toml::from_str(source).map_err(|e| ScenarioError {
            origin: origin.into(),
            line: e.span().map(|sp| source[..sp.start.min(source.len())].matches('\n').count() + 1),
            message: e.message().to_string(),
        })?;
        s.base_dir = base_dir.to_path_buf();
        s.origin = origin.into();
        s.source = source.into();
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let origin = path.display().to_string();
        let source = std::fs::read_to_string(path)
            .map_err(|e| ScenarioError { origin: origin.clone(), line: None, message: e.to_string() })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&source, &origin, &base)
    }

    /// Raw scenario text, for manifests.
    pub fn source(&self) -> &str {
        &self.source
    }

    fn err(&self, section: &str, key: &str, message: impl Into<String>) -> ScenarioError {
        ScenarioError {
            origin: self.origin.clone(),
            line: locate(&self.source, section, key).or_else(|| locate(&self.source, section, "")),
            message: message.into(),
        }
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        if self.schema != SCHEMA {
            return Err(self.err("", "schema", format!("unknown schema `{}`, expected `{SCHEMA}`", self.schema)));
        }
        let d = self.measure.dimension;
        if d == 0 {
            return Err(self.err("measure", "dimension", "dimension must be at least 1"));
        }
        let c = self.control.c;
        if !(c > 0.0 && c <= 1.0) {
            return Err(self.err("control", "c", format!("c must lie in (0, 1], got {c}")));
        }
        if !(self.control.epsilon.is_finite() && self.control.epsilon > 0.0) {
            return Err(self.err("control", "epsilon", format!("epsilon must be positive, got {}", self.control.epsilon)));
        }
        if self.control.v_star.len() != d {
            return Err(self.err("control", "v_star", format!("v_star needs {d} components")));
        }
        if self.control.max_steps == Some(0) {
            return Err(self.err("control", "max_steps", "max_steps must be at least 1"));
        }
        if !matches!(self.integrator.scheme.as_str(), "rk4" | "euler") {
            return Err(self.err("integrator", "scheme", format!("unknown scheme `{}` (rk4, euler)", self.integrator.scheme)));
        }
        if !(self.integrator.dt.is_finite() && self.integrator.dt > 0.0) {
            return Err(self.err("integrator", "dt", format!("dt must be positive, got {}", self.integrator.dt)));
        }
        if !(self.simulate.horizon.is_finite() && self.simulate.horizon >= 0.0) {
            return Err(self.err("simulate", "horizon", "horizon must be non-negative"));
        }
        match self.kernel.name.as_str() {
            "constant" => {}
            "power-law" => {
                if !self.kernel.beta.is_some_and(|b| b >= 0.0) {
                    return Err(self.err("kernel", "beta", "power-law kernel needs beta >= 0"));
                }
            }
            other => return Err(self.err("kernel", "name", format!("unknown kernel `{other}` (constant, power-law)"))),
        }
        if !(self.kernel.k.is_finite() && self.kernel.k >= 0.0) {
            return Err(self.err("kernel", "k", format!("k must be non-negative, got {}", self.kernel.k)));
        }
        if let Some(l) = self.kernel.lipschitz {
            if !(l.is_finite() && l > 0.0) {
                return Err(self.err("kernel", "lipschitz", format!("lipschitz must be positive, got {l}")));
            }
        }
        self.validate_measure()?;
        if let Some(g) = &self.grid {
            if d != 1 {
                return Err(self.err("grid", "", "the grid solver needs dimension = 1"));
            }
            if !(g.cfl > 0.0 && g.cfl <= crate::tolerances::GRID_CFL) {
                return Err(self.err("grid", "cfl", format!("cfl must lie in (0, {}]", crate::tolerances::GRID_CFL)));
            }
            if g.nx < 5 || g.nv < 5 {
                return Err(self.err("grid", "nx", "grids need at least 5 cells per axis"));
            }
        }
        if let Some(cs) = &self.sweep.c {
            if let Some(bad) = cs.iter().find(|c| !(**c > 0.0 && **c <= 1.0)) {
                return Err(self.err("sweep", "c", format!("c must lie in (0, 1], got {bad}")));
            }
        }
        if let Some(es) = &self.sweep.epsilon {
            if let Some(bad) = es.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
                return Err(self.err("sweep", "epsilon", format!("epsilon must be positive, got {bad}")));
            }
        }
        if self.sweep.particles.as_ref().is_some_and(|p| p.contains(&0)) {
            return Err(self.err("sweep", "particles", "particle counts must be positive"));
        }
        Ok(())
    }

    fn vec_field(&self, key: &str, v: &Option<Vec<f64>>) -> Result<Vec<f64>, ScenarioError> {
        let d = self.measure.dimension;
        match v {
            Some(v) if v.len() == d && v.iter().all(|x| x.is_finite()) => Ok(v.clone()),
            Some(_) => Err(self.err("measure", key, format!("`{key}` needs {d} finite components"))),
            None => Err(self.err("measure", "sampler", format!("sampler `{}` needs `{key}`", self.measure.sampler))),
        }
    }

    fn bounds(&self, prefix: &str) -> Result<SupportBox, ScenarioError> {
        let m = &self.measure;
        let pick = |k: &str| match (prefix, k) {
            ("", "x_lo") => &m.x_lo,
            ("", "x_hi") => &m.x_hi,
            ("", "v_lo") => &m.v_lo,
            ("", "v_hi") => &m.v_hi,
            (_, "x_lo") => &m.second_x_lo,
            (_, "x_hi") => &m.second_x_hi,
            (_, "v_lo") => &m.second_v_lo,
            _ => &m.second_v_hi,
        };
        let mut parts = Vec::with_capacity(4);
        for k in ["x_lo", "x_hi", "v_lo", "v_hi"] {
            parts.push(self.vec_field(&format!("{prefix}{k}"), pick(k))?);
        }
        let [xl, xh, vl, vh]: [Vec<f64>; 4] = parts.try_into().expect("four bounds");
        SupportBox::new(xl, xh, vl, vh).map_err(|e| self.err("measure", &format!("{prefix}x_lo"), e.to_string()))
    }

    /// The sampler named in `[measure]`, or `None` for a particle file.
    pub fn sampler(&self) -> Result<Option<Sampler>, ScenarioError> {
        let m = &self.measure;
        Ok(Some(match m.sampler.as_str() {
            "uniform" => Sampler::Uniform { bounds: self.bounds("")? },
            "truncated-gaussian" => Sampler::TruncatedGaussian {
                mean_x: self.vec_field("mean_x", &m.mean_x)?,
                mean_v: self.vec_field("mean_v", &m.mean_v)?,
                std_x: self.vec_field("std_x", &m.std_x)?,
                std_v: self.vec_field("std_v", &m.std_v)?,
                bounds: self.bounds("")?,
            },
            "two-cluster" => {
                let f = m.fraction_first.ok_or_else(|| self.err("measure", "sampler", "two-cluster needs `fraction_first`"))?;
                if !(0.0..=1.0).contains(&f) {
                    return Err(self.err("measure", "fraction_first", format!("fraction_first must lie in [0, 1], got {f}")));
                }
                Sampler::TwoCluster { first: self.bounds("")?, second: self.bounds("second_")?, fraction_first: f }
            }
            "csv" => return Ok(None),
            other => {
                return Err(self.err(
                    "measure",
                    "sampler",
                    format!("unknown sampler `{other}` (uniform, truncated-gaussian, two-cluster, csv)"),
                ))
            }
        }))
    }

    fn validate_measure(&self) -> Result<(), ScenarioError> {
        let m = &self.measure;
        if self.sampler()?.is_some() {
            if m.seed.is_none() {
                return Err(self.err("measure", "sampler", "samplers need an explicit `seed`"));
            }
            if !m.particles.is_some_and(|n| n > 0) {
                return Err(self.err("measure", "particles", "samplers need `particles` >= 1"));
            }
        } else if m.path.is_none() {
            return Err(self.err("measure", "sampler", "the csv sampler needs `path`"));
        }
        Ok(())
    }

    pub fn particles(&self) -> Option<usize> {
        self.measure.particles
    }

    /// Initial measure with `n` particles (samplers only honour `n`).
    pub fn initial_measure(&self, n: Option<usize>) -> Result<EmpiricalMeasure, ScenarioError> {
        match self.sampler()? {
            Some(s) => {
                let n = n.or(self.measure.particles).unwrap_or(0);
                let seed = self.measure.seed.unwrap_or(0);
                s.sample(n, seed).map_err(|e| self.err("measure", "sampler", e.to_string()))
            }
            None => {
                let rel = self.measure.path.clone().unwrap_or_default();
                let path = self.base_dir.join(&rel);
                let file = std::fs::File::open(&path)
                    .map_err(|e| self.err("measure", "path", format!("{}: {e}", path.display())))?;
                let mu = read_csv(file).map_err(|e| self.err("measure", "path", e.to_string()))?;
                if mu.dim() != self.measure.dimension {
                    return Err(self.err("measure", "dimension", format!("particle file has d = {}", mu.dim())));
                }
                Ok(mu)
            }
        }
    }

    /// Kernel for an initial measure; the power-law Lipschitz constant uses
    /// the declared velocity diameter or that of `mu`'s support box.
    pub fn kernel_for(&self, mu: &EmpiricalMeasure) -> Result<InteractionKernel, ScenarioError> {
        let k = &self.kernel;
        let base = match k.name.as_str() {
            "constant" => InteractionKernel::constant(k.k),
            _ => {
                let diam = k.velocity_diameter.unwrap_or_else(|| mu.support_box().velocity_diameter());
                InteractionKernel::power_law(k.k, k.beta.unwrap_or(1.0), diam)
            }
        }
        .map_err(|e| self.err("kernel", "name", e.to_string()))?;
        match k.lipschitz {
            Some(l) => base.with_lipschitz(l).map_err(|e| self.err("kernel", "lipschitz", e.to_string())),
            None => Ok(base),
        }
    }

    pub fn integrator(&self) -> IntegratorConfig {
        let scheme = if self.integrator.scheme == "euler" { Scheme::ExplicitEuler } else { Scheme::Rk4 };
        IntegratorConfig { scheme, dt_max: self.integrator.dt, snap_to_switches: self.integrator.snap_to_switches }
    }

    /// Resolves the scenario with optional overrides of `c`, `epsilon` and
    /// the particle count.
    pub fn resolve_with(&self, c: Option<f64>, epsilon: Option<f64>, n: Option<usize>) -> Result<Resolved, ScenarioError> {
        let initial = self.initial_measure(n)?;
        let kernel = self.kernel_for(&initial)?;
        let mut align = AlignmentConfig::new(
            c.unwrap_or(self.control.c),
            epsilon.unwrap_or(self.control.epsilon),
            self.control.v_star.clone(),
            kernel.lipschitz(),
            self.integrator(),
        )
        .map_err(|e| self.err("control", "c", e.to_string()))?;
        align.max_steps = self.control.max_steps;
        Ok(Resolved { initial, kernel, align })
    }

    pub fn resolve(&self) -> Result<Resolved, ScenarioError> {
        self.resolve_with(None, None, None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMOKE: &str = r#"schema = "kinalign.scenario/1"

[measure]
dimension = 1
sampler = "uniform"
particles = 50
seed = 7
x_lo = [0.0]
x_hi = [1.0]
v_lo = [0.0]
v_hi = [1.0]

[kernel]
name = "power-law"
k = 1.0
beta = 1.0

[control]
c = 0.4
epsilon = 0.05
v_star = [0.0]
"#;

    fn parse(src: &str) -> Result<Scenario, ScenarioError> {
        Scenario::parse(src, "s.toml", Path::new("."))
    }

    #[test]
    fn smoke_parses_with_defaults() {
        let s = parse(SMOKE).unwrap();
        assert_eq!(s.integrator.dt, 1e-3);
        assert_eq!(s.output.dir, "out");
        let r = s.resolve().unwrap();
        assert_eq!(r.initial.len(), 50);
        assert!(r.kernel.lipschitz() > 1.0 && r.kernel.lipschitz() < 1.3);
    }

    #[test]
    fn bad_c_reports_its_line() {
        let e = parse(&SMOKE.replace("c = 0.4", "c = 1.5")).unwrap_err();
        assert_eq!(e.line, Some(19));
        assert!(e.to_string().starts_with("s.toml:19: c must lie in (0, 1]"), "{e}");
    }

    #[test]
    fn unknown_keys_and_syntax_errors_have_lines() {
        let e = parse(&SMOKE.replace("seed = 7", "seed = 7\ncolour = 3")).unwrap_err();
        assert_eq!(e.line, Some(8), "{e}");
        let e = parse(&SMOKE.replace("k = 1.0", "k = ")).unwrap_err();
        assert_eq!(e.line, Some(15), "{e}");
    }

    #[test]
    fn samplers_need_seeds_and_known_names() {
        assert!(parse(&SMOKE.replace("seed = 7\n", "")).is_err());
        let e = parse(&SMOKE.replace("\"uniform\"", "\"sobol\"")).unwrap_err();
        assert_eq!(e.line, Some(5));
        assert!(parse(&SMOKE.replace("kinalign.scenario/1", "kinalign.scenario/0")).is_err());
    }

    #[test]
    fn overrides_apply() {
        let s = parse(SMOKE).unwrap();
        let r = s.resolve_with(Some(0.2), Some(0.1), Some(30)).unwrap();
        assert_eq!((r.align.c, r.align.epsilon, r.initial.len()), (0.2, 0.1, 30));
    }
}
