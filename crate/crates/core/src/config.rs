//! Design configuration: sectioned `key = value` text.
//!
//! ```text
//! # comment
//! [design]
//! mode = single            # single | double
//! beta = 1.0               # target plane (single); optional screen (double)
//! seed = 42
//!
//! [indices]
//! n1 = 1.0
//! n2 = 1.5
//! n3 = 1.0                 # double mode
//!
//! [source]                 # also [target]
//! bounds = 0 1 0 1         # x_min x_max y_min y_max
//! resolution = 32 32       # nx ny
//! density = uniform        # uniform | gaussian SIGMA CX CY | ramp x|y OFFSET
//!                          # | paraboloid A CX CY | csv PATH
//!
//! [surface_f]              # also [surface_g] (double mode)
//! shape = constant 0       # constant H | affine H SX SY | paraboloid H K CX CY
//!                          # | gaussian H A SIGMA CX CY | csv PATH
//!
//! [field]
//! kind = collimated        # collimated | point PX PY PZ
//!
//! [solver]
//! epsilon_rel = 1e-3       # entropic epsilon relative to the mean cost
//! max_iter = 10000
//! marginal_tol = 1e-6
//! exact_cap = 64
//!
//! [conditions]
//! alpha = 0.9
//! alpha1 = 0.25
//! alpha2 = 1.0
//! enforce = true
//!
//! [verify]
//! ray_count = 100000
//! l1_tol = 0.05
//! ```
//!
//! CSV paths are resolved against the directory of the config file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::{Vector2, Vector3};
use thiserror::Error;

use crate::conditions::{DEFAULT_ALPHA, DEFAULT_ALPHA1, DEFAULT_ALPHA2};
use crate::geometry::{Density, Grid2, IncidentField, SampledField, Surface};
use crate::ot::EXACT_CAP;

#[derive(Debug, Error)]
#[error("{}{field}: {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
pub struct ConfigError {
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl ConfigError {
    fn at(line: Option<usize>, field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { line, field: field.into(), message: message.into() }
    }
}

pub type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Single,
    Double,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Single => "single",
            Mode::Double => "double",
        })
    }
}

/// A catalog density or surface, remembering the CSV path it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct DensitySpec {
    pub density: Density,
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSpec {
    pub surface: Surface,
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainConfig {
    pub grid: Grid2,
    pub density: DensitySpec,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub epsilon_rel: f64,
    pub max_iter: usize,
    pub marginal_tol: f64,
    pub exact_cap: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionConfig {
    pub alpha: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    /// Stop before solving when a bound is inconclusive.
    pub enforce: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyConfig {
    pub ray_count: usize,
    pub l1_tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignConfig {
    pub mode: Mode,
    pub beta: Option<f64>,
    pub seed: u64,
    pub n1: f64,
    pub n2: f64,
    pub n3: Option<f64>,
    pub source: DomainConfig,
    pub target: DomainConfig,
    pub surface_f: SurfaceSpec,
    pub surface_g: Option<SurfaceSpec>,
    pub field: IncidentField,
    pub solver: SolverConfig,
    pub conditions: ConditionConfig,
    pub verify: VerifyConfig,
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("design", &["mode", "beta", "seed"]),
    ("indices", &["n1", "n2", "n3"]),
    ("source", &["bounds", "resolution", "density"]),
    ("target", &["bounds", "resolution", "density"]),
    ("surface_f", &["shape"]),
    ("surface_g", &["shape"]),
    ("field", &["kind"]),
    ("solver", &["epsilon_rel", "max_iter", "marginal_tol", "exact_cap"]),
    ("conditions", &["alpha", "alpha1", "alpha2", "enforce"]),
    ("verify", &["ray_count", "l1_tol"]),
];

/// `section.key -> (line, value)`
struct Entries {
    map: BTreeMap<String, (usize, String)>,
    base: PathBuf,
}

impl Entries {
    fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut section: Option<&str> = None;
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::at(Some(line), content, "unterminated section header"))?
                    .trim();
                section = Some(
                    SECTIONS
                        .iter()
                        .find(|(s, _)| *s == name)
                        .map(|(s, _)| *s)
                        .ok_or_else(|| ConfigError::at(Some(line), name, "unknown section"))?,
                );
                continue;
            }
            let sec = section.ok_or_else(|| ConfigError::at(Some(line), content, "key outside any section"))?;
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| ConfigError::at(Some(line), content, "expected `key = value`"))?;
            let key = key.trim();
            let full = format!("{sec}.{key}");
            let allowed = SECTIONS.iter().find(|(s, _)| *s == sec).map(|(_, k)| *k).unwrap_or(&[]);
            if !allowed.contains(&key) {
                return Err(ConfigError::at(Some(line), full, "unknown key"));
            }
            if let Some((first, _)) = map.get(&full) {
                return Err(ConfigError::at(Some(line), full, format!("duplicate key (first set on line {first})")));
            }
            map.insert(full, (line, value.trim().to_string()));
        }
        Ok(Self { map, base: base.to_path_buf() })
    }

    fn has_section(&self, sec: &str) -> bool {
        let prefix = format!("{sec}.");
        self.map.keys().any(|k| k.starts_with(&prefix))
    }

    fn raw(&self, key: &str) -> Option<(usize, &str)> {
        self.map.get(key).map(|(l, v)| (*l, v.as_str()))
    }

    fn required(&self, key: &str) -> Result<(usize, &str)> {
        self.raw(key).ok_or_else(|| ConfigError::at(None, key, "missing required field"))
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => {
                v.parse().map(Some).map_err(|_| ConfigError::at(Some(line), key, format!("cannot parse `{v}`")))
            }
        }
    }

    fn positive(&self, key: &str, default: Option<f64>) -> Result<f64> {
        let value = match self.parsed::<f64>(key)? {
            Some(v) => v,
            None => default.ok_or_else(|| ConfigError::at(None, key, "missing required field"))?,
        };
        if !(value > 0.0 && value.is_finite()) {
            return Err(ConfigError::at(self.raw(key).map(|r| r.0), key, format!("must be positive, got {value}")));
        }
        Ok(value)
    }

    fn numbers(&self, key: &str, line: usize, words: &[&str], count: usize) -> Result<Vec<f64>> {
        if words.len() != count {
            return Err(ConfigError::at(Some(line), key, format!("expected {count} numbers, got {}", words.len())));
        }
        words
            .iter()
            .map(|w| w.parse::<f64>().map_err(|_| ConfigError::at(Some(line), key, format!("cannot parse `{w}`"))))
            .collect()
    }

    fn path(&self, value: &str) -> PathBuf {
        let p = Path::new(value);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    fn load_csv(&self, key: &str, line: usize, rest: &[&str]) -> Result<(SampledField, PathBuf)> {
        if rest.len() != 1 {
            return Err(ConfigError::at(Some(line), key, "expected `csv PATH`"));
        }
        let path = self.path(rest[0]);
        let field = SampledField::load(&path).map_err(|e| ConfigError::at(Some(line), key, e.to_string()))?;
        Ok((field, path))
    }

    fn domain(&self, sec: &str) -> Result<DomainConfig> {
        let key = format!("{sec}.bounds");
        let (line, v) = self.required(&key)?;
        let b = self.numbers(&key, line, &v.split_whitespace().collect::<Vec<_>>(), 4)?;
        let key_r = format!("{sec}.resolution");
        let (line_r, v) = self.required(&key_r)?;
        let res: Vec<usize> = v
            .split_whitespace()
            .map(|w| {
                w.parse::<usize>().map_err(|_| ConfigError::at(Some(line_r), &key_r, format!("cannot parse `{w}`")))
            })
            .collect::<Result<_>>()?;
        if res.len() != 2 {
            return Err(ConfigError::at(Some(line_r), key_r, "expected `NX NY`"));
        }
        let grid = Grid2::new(res[0], res[1], b[0], b[1], b[2], b[3])
            .map_err(|e| ConfigError::at(Some(line), format!("{sec}.bounds/resolution"), e.to_string()))?;
        let key_d = format!("{sec}.density");
        let density = match self.raw(&key_d) {
            None => DensitySpec { density: Density::Uniform, csv: None },
            Some((line, v)) => self.density(&key_d, line, v)?,
        };
        Ok(DomainConfig { grid, density })
    }

    fn density(&self, key: &str, line: usize, v: &str) -> Result<DensitySpec> {
        let words: Vec<&str> = v.split_whitespace().collect();
        let (kind, rest) = words.split_first().ok_or_else(|| ConfigError::at(Some(line), key, "empty value"))?;
        let density = match *kind {
            "uniform" => {
                self.numbers(key, line, rest, 0)?;
                Density::Uniform
            }
            "gaussian" => {
                let n = self.numbers(key, line, rest, 3)?;
                if !(n[0] > 0.0) {
                    return Err(ConfigError::at(Some(line), key, "sigma must be positive"));
                }
                Density::Gaussian { sigma: n[0], center: Vector2::new(n[1], n[2]) }
            }
            "ramp" => {
                if rest.len() != 2 {
                    return Err(ConfigError::at(Some(line), key, "expected `ramp x|y OFFSET`"));
                }
                let axis = match rest[0] {
                    "x" => 0,
                    "y" => 1,
                    other => return Err(ConfigError::at(Some(line), key, format!("unknown axis `{other}`"))),
                };
                let offset = self.numbers(key, line, &rest[1..], 1)?[0];
                Density::Ramp { axis, offset }
            }
            "paraboloid" => {
                let n = self.numbers(key, line, rest, 3)?;
                Density::Paraboloid { a: n[0], center: Vector2::new(n[1], n[2]) }
            }
            "csv" => {
                let (field, path) = self.load_csv(key, line, rest)?;
                return Ok(DensitySpec { density: Density::Sampled(field), csv: Some(path) });
            }
            other => return Err(ConfigError::at(Some(line), key, format!("unknown density `{other}`"))),
        };
        Ok(DensitySpec { density, csv: None })
    }

    fn surface(&self, sec: &str) -> Result<Option<SurfaceSpec>> {
        let key = format!("{sec}.shape");
        let Some((line, v)) = self.raw(&key) else { return Ok(None) };
        let words: Vec<&str> = v.split_whitespace().collect();
        let (kind, rest) = words.split_first().ok_or_else(|| ConfigError::at(Some(line), &key, "empty value"))?;
        let surface = match *kind {
            "constant" => Surface::Constant(self.numbers(&key, line, rest, 1)?[0]),
            "affine" => {
                let n = self.numbers(&key, line, rest, 3)?;
                Surface::Affine { offset: n[0], slope: Vector2::new(n[1], n[2]) }
            }
            "paraboloid" => {
                let n = self.numbers(&key, line, rest, 4)?;
                Surface::Paraboloid { offset: n[0], curvature: n[1], center: Vector2::new(n[2], n[3]) }
            }
            "gaussian" => {
                let n = self.numbers(&key, line, rest, 5)?;
                if !(n[2] > 0.0) {
                    return Err(ConfigError::at(Some(line), &key, "sigma must be positive"));
                }
                Surface::Gaussian { offset: n[0], amplitude: n[1], sigma: n[2], center: Vector2::new(n[3], n[4]) }
            }
            "csv" => {
                let (field, path) = self.load_csv(&key, line, rest)?;
                return Ok(Some(SurfaceSpec { surface: Surface::Sampled(field), csv: Some(path) }));
            }
            other => return Err(ConfigError::at(Some(line), &key, format!("unknown shape `{other}`"))),
        };
        Ok(Some(SurfaceSpec { surface, csv: None }))
    }

    fn field(&self) -> Result<IncidentField> {
        let Some((line, v)) = self.raw("field.kind") else { return Ok(IncidentField::Collimated) };
        let words: Vec<&str> = v.split_whitespace().collect();
        match words.split_first() {
            Some((&"collimated", [])) => Ok(IncidentField::Collimated),
            Some((&"point", rest)) => {
                let n = self.numbers("field.kind", line, rest, 3)?;
                IncidentField::point_source(Vector3::new(n[0], n[1], n[2]))
                    .map_err(|e| ConfigError::at(Some(line), "field.kind", e.to_string()))
            }
            _ => Err(ConfigError::at(
                Some(line),
                "field.kind",
                format!("expected `collimated` or `point PX PY PZ`, got `{v}`"),
            )),
        }
    }
}

impl DesignConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let e = Entries::parse(text, base)?;
        let (mode_line, mode) = e.required("design.mode")?;
        let mode = match mode {
            "single" => Mode::Single,
            "double" => Mode::Double,
            other => {
                return Err(ConfigError::at(
                    Some(mode_line),
                    "design.mode",
                    format!("expected single|double, got `{other}`"),
                ))
            }
        };
        let beta = e.parsed::<f64>("design.beta")?;
        if mode == Mode::Single && beta.is_none() {
            return Err(ConfigError::at(None, "design.beta", "missing required field (single mode)"));
        }
        let seed = e.parsed::<u64>("design.seed")?.unwrap_or(42);
        let n1 = e.positive("indices.n1", None)?;
        let n2 = e.positive("indices.n2", None)?;
        let n3 = match mode {
            Mode::Double => Some(e.positive("indices.n3", None)?),
            Mode::Single => e.parsed::<f64>("indices.n3")?,
        };
        for sec in ["source", "target"] {
            if !e.has_section(sec) {
                return Err(ConfigError::at(None, sec, "missing required section"));
            }
        }
        let source = e.domain("source")?;
        let target = e.domain("target")?;
        let surface_f = e.surface("surface_f")?.unwrap_or(SurfaceSpec { surface: Surface::Constant(0.0), csv: None });
        let surface_g = e.surface("surface_g")?;
        if mode == Mode::Double && surface_g.is_none() {
            return Err(ConfigError::at(None, "surface_g.shape", "missing required field (double mode)"));
        }
        let solver = SolverConfig {
            epsilon_rel: e.positive("solver.epsilon_rel", Some(1e-3))?,
            max_iter: e.parsed("solver.max_iter")?.unwrap_or(10_000),
            marginal_tol: e.positive("solver.marginal_tol", Some(1e-6))?,
            exact_cap: e.parsed("solver.exact_cap")?.unwrap_or(EXACT_CAP),
        };
        if solver.max_iter == 0 {
            return Err(ConfigError::at(e.raw("solver.max_iter").map(|r| r.0), "solver.max_iter", "must be positive"));
        }
        let conditions = ConditionConfig {
            alpha: e.positive("conditions.alpha", Some(DEFAULT_ALPHA))?,
            alpha1: e.positive("conditions.alpha1", Some(DEFAULT_ALPHA1))?,
            alpha2: e.positive("conditions.alpha2", Some(DEFAULT_ALPHA2))?,
            enforce: e.parsed("conditions.enforce")?.unwrap_or(true),
        };
        let verify = VerifyConfig {
            ray_count: e.parsed("verify.ray_count")?.unwrap_or(100_000),
            l1_tol: e.positive("verify.l1_tol", Some(0.05))?,
        };
        if verify.ray_count == 0 {
            return Err(ConfigError::at(
                e.raw("verify.ray_count").map(|r| r.0),
                "verify.ray_count",
                "must be positive",
            ));
        }
        Ok(Self {
            mode,
            beta,
            seed,
            n1,
            n2,
            n3,
            source,
            target,
            surface_f,
            surface_g,
            field: e.field()?,
            solver,
            conditions,
            verify,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|err| ConfigError::at(None, path.display().to_string(), err.to_string()))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Every CSV input the configuration reads.
    pub fn csv_inputs(&self) -> Vec<&Path> {
        [&self.source.density.csv, &self.target.density.csv, &self.surface_f.csv]
            .into_iter()
            .chain(self.surface_g.as_ref().map(|g| &g.csv))
            .filter_map(|p| p.as_deref())
            .collect()
    }
}

fn write_density(f: &mut fmt::Formatter<'_>, d: &DensitySpec) -> fmt::Result {
    if let Some(p) = &d.csv {
        return write!(f, "csv {}", p.display());
    }
    match &d.density {
        Density::Uniform => write!(f, "uniform"),
        Density::Gaussian { sigma, center } => write!(f, "gaussian {sigma} {} {}", center.x, center.y),
        Density::Ramp { axis, offset } => write!(f, "ramp {} {offset}", if *axis == 0 { "x" } else { "y" }),
        Density::Paraboloid { a, center } => write!(f, "paraboloid {a} {} {}", center.x, center.y),
        Density::Sampled(_) => write!(f, "csv ?"),
    }
}

fn write_surface(f: &mut fmt::Formatter<'_>, s: &SurfaceSpec) -> fmt::Result {
    if let Some(p) = &s.csv {
        return write!(f, "csv {}", p.display());
    }
    match &s.surface {
        Surface::Constant(h) => write!(f, "constant {h}"),
        Surface::Affine { offset, slope } => write!(f, "affine {offset} {} {}", slope.x, slope.y),
        Surface::Paraboloid { offset, curvature, center } => {
            write!(f, "paraboloid {offset} {curvature} {} {}", center.x, center.y)
        }
        Surface::Gaussian { offset, amplitude, sigma, center } => {
            write!(f, "gaussian {offset} {amplitude} {sigma} {} {}", center.x, center.y)
        }
        Surface::Sampled(_) => write!(f, "csv ?"),
    }
}

fn write_domain(f: &mut fmt::Formatter<'_>, name: &str, d: &DomainConfig) -> fmt::Result {
    let g = &d.grid;
    writeln!(f, "[{name}]")?;
    writeln!(f, "bounds = {} {} {} {}", g.x_min, g.x_max, g.y_min, g.y_max)?;
    writeln!(f, "resolution = {} {}", g.nx, g.ny)?;
    write!(f, "density = ")?;
    write_density(f, &d.density)?;
    writeln!(f)
}

/// Canonical text form; parses back to an equal configuration.
impl fmt::Display for DesignConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[design]")?;
        writeln!(f, "mode = {}", self.mode)?;
        if let Some(b) = self.beta {
            writeln!(f, "beta = {b}")?;
        }
        writeln!(f, "seed = {}", self.seed)?;
        writeln!(f, "[indices]")?;
        writeln!(f, "n1 = {}", self.n1)?;
        writeln!(f, "n2 = {}", self.n2)?;
        if let Some(n3) = self.n3 {
            writeln!(f, "n3 = {n3}")?;
        }
        write_domain(f, "source", &self.source)?;
        write_domain(f, "target", &self.target)?;
        write!(f, "[surface_f]\nshape = ")?;
        write_surface(f, &self.surface_f)?;
        writeln!(f)?;
        if let Some(g) = &self.surface_g {
            write!(f, "[surface_g]\nshape = ")?;
            write_surface(f, g)?;
            writeln!(f)?;
        }
        writeln!(f, "[field]\nkind = {}", self.field)?;
        let s = &self.solver;
        writeln!(f, "[solver]")?;
        writeln!(f, "epsilon_rel = {:e}", s.epsilon_rel)?;
        writeln!(f, "max_iter = {}", s.max_iter)?;
        writeln!(f, "marginal_tol = {:e}", s.marginal_tol)?;
        writeln!(f, "exact_cap = {}", s.exact_cap)?;
        let c = &self.conditions;
        writeln!(f, "[conditions]")?;
        writeln!(f, "alpha = {}", c.alpha)?;
        writeln!(f, "alpha1 = {}", c.alpha1)?;
        writeln!(f, "alpha2 = {}", c.alpha2)?;
        writeln!(f, "enforce = {}", c.enforce)?;
        writeln!(f, "[verify]")?;
        writeln!(f, "ray_count = {}", self.verify.ray_count)?;
        writeln!(f, "l1_tol = {}", self.verify.l1_tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SINGLE: &str = "\
[design]
mode = single
beta = 1.0
[indices]
n1 = 1
n2 = 1.5
[source]
bounds = 0 1 0 1
resolution = 8 8
[target]
bounds = 0 1 0 1
resolution = 8 8
density = ramp x 0.5   # brighter to the right
";

    #[test]
    fn parses_with_defaults() {
        let c = DesignConfig::parse(SINGLE, Path::new(".")).unwrap();
        assert_eq!(c.mode, Mode::Single);
        assert_eq!(c.beta, Some(1.0));
        assert_eq!(c.seed, 42);
        assert_eq!(c.target.density.density, Density::Ramp { axis: 0, offset: 0.5 });
        assert_eq!(c.surface_f.surface, Surface::Constant(0.0));
        assert_eq!(c.field, IncidentField::Collimated);
        assert_eq!(c.solver.exact_cap, 64);
        assert_eq!(c.verify.ray_count, 100_000);
        assert!(c.conditions.enforce);
    }

    #[test]
    fn display_round_trips() {
        let c = DesignConfig::parse(SINGLE, Path::new(".")).unwrap();
        let again = DesignConfig::parse(&c.to_string(), Path::new(".")).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn missing_beta_names_the_field() {
        let text = SINGLE.replace("beta = 1.0\n", "");
        let err = DesignConfig::parse(&text, Path::new(".")).unwrap_err();
        assert_eq!(err.field, "design.beta");
    }

    #[test]
    fn double_needs_g_and_n3() {
        let text = SINGLE.replace("mode = single", "mode = double");
        let err = DesignConfig::parse(&text, Path::new(".")).unwrap_err();
        assert_eq!(err.field, "indices.n3");
        let text = text.replace("n2 = 1.5", "n2 = 1.5\nn3 = 1");
        let err = DesignConfig::parse(&text, Path::new(".")).unwrap_err();
        assert_eq!(err.field, "surface_g.shape");
    }

    #[test]
    fn diagnostics_carry_lines() {
        let text = SINGLE.replace("n2 = 1.5", "n2 = fast");
        let err = DesignConfig::parse(&text, Path::new(".")).unwrap_err();
        assert_eq!((err.line, err.field.as_str()), (Some(6), "indices.n2"));
        let err = DesignConfig::parse("[design]\nmode = single\nbogus = 1\n", Path::new(".")).unwrap_err();
        assert_eq!(err.line, Some(3));
        let err = DesignConfig::parse("[nowhere]\n", Path::new(".")).unwrap_err();
        assert_eq!(err.line, Some(1));
        let err = DesignConfig::parse(&format!("{SINGLE}[design]\nbeta = 2\n"), Path::new(".")).unwrap_err();
        assert!(err.message.contains("duplicate"));
        let err = DesignConfig::parse(
            &SINGLE.replace("resolution = 8 8\n[target]", "resolution = 1 8\n[target]"),
            Path::new("."),
        )
        .unwrap_err();
        assert!(err.field.starts_with("source"));
    }

    #[test]
    fn point_source_must_sit_below() {
        let text = format!("{SINGLE}[field]\nkind = point 0 0 1\n");
        assert_eq!(DesignConfig::parse(&text, Path::new(".")).unwrap_err().field, "field.kind");
        let text = format!("{SINGLE}[field]\nkind = point 0.5 0.5 -2\n");
        let c = DesignConfig::parse(&text, Path::new(".")).unwrap();
        assert_eq!(c.field, IncidentField::PointSource(Vector3::new(0.5, 0.5, -2.0)));
    }
}
