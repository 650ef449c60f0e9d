//! End-to-end design and verification: configuration in, artifact files out.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector2;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::conditions::{check_all, ConditionError, ConditionParams, ConditionReport};
use crate::config::{ConfigError, DesignConfig, Mode};
use crate::cost::{CostError, CostModel, Footprint};
use crate::geometry::{build_measure, phi_collisions, DiscreteMeasure, GeometryError, Grid2, PhiMap};
use crate::optics::{
    pushforward, stratified_rays, trace, verify_energy, BinnedMeasure, Design, DesignMode, EnergyReport, OpticsError,
    SecondSurface,
};
use crate::ot::{
    c_transform_target, solve_exact_capped, solve_sinkhorn, CostMatrix, OtError, SinkhornOptions, TransportSolution,
};
use crate::phase::{
    centroid_values_to_nodes, compose_surface_gradient, integrate_gradient, recover_phase_single,
    recover_phases_double, regrid_nearest, IntegratedPhase, PhaseError, PhaseField,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("ConfigError: {0}")]
    Config(#[from] ConfigError),
    #[error("GeometryError: {0}")]
    Geometry(#[from] GeometryError),
    #[error("CostError: {0}")]
    Cost(#[from] CostError),
    #[error("OtError: {0}")]
    Ot(#[from] OtError),
    #[error("PhaseError: {0}")]
    Phase(#[from] PhaseError),
    #[error("OpticsError: {0}")]
    Optics(#[from] OpticsError),
    #[error("ConditionError: {0}")]
    Conditions(#[from] ConditionError),
    #[error("conditions inconclusive; not solving (set conditions.enforce = false to override)\n{0}")]
    ConditionsInconclusive(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("ManifestError: {0}")]
    Manifest(String),
}

impl PipelineError {
    /// A quantitative verdict rather than a malfunction (exit status 2).
    pub fn is_quantitative(&self) -> bool {
        matches!(self, PipelineError::ConditionsInconclusive(_) | PipelineError::Optics(OpticsError::ExcessiveLoss(_)))
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

/// The discretized transport problem described by a configuration.
#[derive(Debug, Clone)]
pub struct Problem {
    pub model: CostModel,
    pub source_grid: Grid2,
    pub target_grid: Grid2,
    pub mu: DiscreteMeasure,
    pub nu: DiscreteMeasure,
}

pub fn build_problem(config: &DesignConfig) -> Result<Problem> {
    let source_grid = config.source.grid.clone();
    let target_grid = config.target.grid.clone();
    let phi = PhiMap::new(config.field, config.surface_f.surface.clone(), &source_grid);
    let model = match config.mode {
        Mode::Single => CostModel::single(phi, config.beta.expect("validated"), config.n1, config.n2)?,
        Mode::Double => CostModel::double(
            phi,
            config.surface_g.as_ref().expect("validated").surface.clone(),
            config.n1,
            config.n2,
            config.n3.expect("validated"),
        )?,
    };
    let rho0 = &config.source.density.density;
    let rho1 = &config.target.density.density;
    let mu = build_measure(&source_grid, |p| rho0.eval(p))?;
    let nu = build_measure(&target_grid, |p| rho1.eval(p))?;
    Ok(Problem { model, source_grid, target_grid, mu, nu })
}

pub fn condition_report(config: &DesignConfig, problem: &Problem) -> Result<ConditionReport> {
    let c = &config.conditions;
    let params = ConditionParams { alpha: c.alpha, alpha1: c.alpha1, alpha2: c.alpha2, seed: config.seed };
    Ok(check_all(&problem.model, &problem.source_grid, &problem.target_grid, &params)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Exact,
    Sinkhorn,
}

/// How well traced rays reproduce the transport map at the grid nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundTrip {
    /// Non-diffuse source nodes traced.
    pub nodes: usize,
    /// Share of them landing within two target-grid spacings of `Tx`.
    pub within_two_spacings: f64,
    pub max_distance: f64,
    /// Largest angle between the exit direction and vertical (doublets).
    pub max_vertical_deviation: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SecondSurfaceResult {
    pub field: PhaseField,
    pub integrated: IntegratedPhase,
    pub regrid_distance: f64,
    /// Composed planar gradient on the target grid.
    pub grid_gradient: Vec<Vector2<f64>>,
}

#[derive(Debug, Clone)]
pub struct DesignResult {
    pub problem: Problem,
    pub conditions: ConditionReport,
    /// Source-node pairs whose first-surface hits lie within 1e-9 of each
    /// other: the grid-resolution injectivity check of `phi`.
    pub phi_collisions: usize,
    pub solver: SolverKind,
    pub cost: CostMatrix,
    pub solution: TransportSolution,
    /// Assigned target for every source grid node.
    pub targets: Vec<Vector2<f64>>,
    pub s1: PhaseField,
    pub s1_integrated: IntegratedPhase,
    /// Planar gradient of the first phase pulled back to the source grid.
    pub s1_grid_gradient: Vec<Vector2<f64>>,
    pub s2: Option<SecondSurfaceResult>,
    pub design: Design,
    pub round_trip: RoundTrip,
}

/// Assembles the traceable design from phase samples.
pub fn assemble_design(
    config: &DesignConfig,
    problem: &Problem,
    s1_grad: Vec<Vector2<f64>>,
    s2: Option<SecondSurface>,
) -> Result<Design> {
    let mode = match config.mode {
        Mode::Single => DesignMode::Single { beta: config.beta.expect("validated") },
        Mode::Double => DesignMode::Double {
            g: config.surface_g.as_ref().expect("validated").surface.clone(),
            n3: config.n3.expect("validated"),
            screen: config.beta,
        },
    };
    Ok(Design::new(
        mode,
        problem.model.phi.clone(),
        config.n1,
        config.n2,
        problem.source_grid.clone(),
        s1_grad,
        s2,
        &problem.target_grid,
    )?)
}

pub fn run_design(config: &DesignConfig) -> Result<DesignResult> {
    let problem = build_problem(config)?;
    let conditions = condition_report(config, &problem)?;
    if config.conditions.enforce && !conditions.pass() {
        return Err(PipelineError::ConditionsInconclusive(conditions.to_string()));
    }
    let model = &problem.model;
    let nodes = problem.source_grid.nodes();
    let all_sources: Vec<Footprint> = model.footprints(nodes)?;
    let hits: Vec<Vector2<f64>> = all_sources.iter().map(|fp| fp.hit).collect();
    let phi_collisions = phi_collisions(&hits, PHI_SEPARATION).len();
    let rows: Vec<Footprint> = problem.mu.nodes.iter().map(|&k| all_sources[k]).collect();
    let cols = problem.nu.points.clone();
    let cost = CostMatrix::from_model(model, &rows, &cols);
    let cap = config.solver.exact_cap;
    let (solver, solution) = if cost.m <= cap && cost.n <= cap {
        (SolverKind::Exact, solve_exact_capped(&cost, &problem.mu.masses, &problem.nu.masses, cap)?)
    } else {
        let opts = SinkhornOptions {
            epsilon: config.solver.epsilon_rel * cost.mean(),
            max_iter: config.solver.max_iter,
            marginal_tol: config.solver.marginal_tol,
        };
        (SolverKind::Sinkhorn, solve_sinkhorn(&cost, &problem.mu.masses, &problem.nu.masses, &opts)?)
    };

    // Node masses stand for their dual cells, so a row's plan-weighted mean
    // of target dual-cell centroids is the map at the source dual-cell
    // centroid. Nodes without source mass take the c-transform minimizer.
    let target_centroids: Vec<Vector2<f64>> =
        problem.nu.nodes.iter().map(|&k| problem.target_grid.dual_centroid(k)).collect();
    let barycentres = solution.barycentric_targets(&target_centroids);
    let mut row_of = vec![None; nodes.len()];
    for (i, &k) in problem.mu.nodes.iter().enumerate() {
        row_of[k] = Some(i);
    }
    let targets: Vec<Vector2<f64>> = all_sources
        .iter()
        .zip(&row_of)
        .map(|(fp, row)| match row {
            Some(i) => barycentres[*i],
            None => cols[c_transform_target(model, fp, &solution.potential_psi_c, &cols)],
        })
        .collect();
    let targets = centroid_values_to_nodes(&problem.source_grid, &targets);

    let (s1, s2_field) = match config.mode {
        Mode::Single => (recover_phase_single(model, &all_sources, &targets)?, None),
        Mode::Double => {
            let (a, b) = recover_phases_double(model, &all_sources, &targets)?;
            (a, Some(b))
        }
    };
    let s1_grid_gradient: Vec<Vector2<f64>> =
        compose_surface_gradient(&s1).iter().zip(&all_sources).map(|(g, fp)| fp.jacobian.transpose() * g).collect();
    let s1_integrated = integrate_gradient(&s1_grid_gradient, &problem.source_grid)?;
    let s2 = match s2_field {
        None => None,
        Some(field) => {
            let composed = compose_surface_gradient(&field);
            let (grid_gradient, regrid_distance) = regrid_nearest(&field.points, &composed, &problem.target_grid);
            let integrated = integrate_gradient(&grid_gradient, &problem.target_grid)?;
            Some(SecondSurfaceResult { field, integrated, regrid_distance, grid_gradient })
        }
    };
    let design = assemble_design(
        config,
        &problem,
        s1.grad2.clone(),
        s2.as_ref().map(|s| SecondSurface { targets: targets.clone(), grad: s.field.grad2.clone() }),
    )?;
    let round_trip = round_trip(&design, &problem, &solution, &cols)?;
    Ok(DesignResult {
        problem,
        conditions,
        phi_collisions,
        solver,
        cost,
        solution,
        targets,
        s1,
        s1_integrated,
        s1_grid_gradient,
        s2,
        design,
        round_trip,
    })
}

/// Traces every non-diffuse source node and compares with the extracted map.
pub fn round_trip(
    design: &Design,
    problem: &Problem,
    solution: &TransportSolution,
    cols: &[Vector2<f64>],
) -> Result<RoundTrip> {
    let (hx, hy) = problem.target_grid.spacing();
    let radius = 2.0 * hx.max(hy);
    let mut nodes = 0;
    let mut within = 0;
    let mut max_distance: f64 = 0.0;
    let mut max_dev: Option<f64> = None;
    for (i, entry) in solution.map.entries.iter().enumerate() {
        if entry.diffuse {
            continue;
        }
        let x = problem.mu.points[i];
        let res = trace(design, &x)?;
        let d = (res.landing - cols[entry.target]).norm();
        nodes += 1;
        if d <= radius {
            within += 1;
        }
        max_distance = max_distance.max(d);
        if res.s2_hit.is_some() {
            let dev = res.deviation_from_vertical();
            max_dev = Some(max_dev.map_or(dev, |m| m.max(dev)));
        }
    }
    Ok(RoundTrip {
        nodes,
        within_two_spacings: if nodes > 0 { within as f64 / nodes as f64 } else { 1.0 },
        max_distance,
        max_vertical_deviation: max_dev,
    })
}

fn grid_header(kind: &str, surface: &str, grid: &Grid2) -> String {
    format!(
        "# {kind} surface={surface} nx={} ny={} bounds={} {} {} {}\n",
        grid.nx, grid.ny, grid.x_min, grid.x_max, grid.y_min, grid.y_max
    )
}

fn scalar_csv(surface: &str, grid: &Grid2, values: &[f64]) -> String {
    let mut out = grid_header("phase", surface, grid);
    for row in values.chunks(grid.nx) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

fn vector_csv(surface: &str, grid: &Grid2, values: &[Vector2<f64>]) -> String {
    let mut out = grid_header("phase_grad", surface, grid);
    out.push_str("gx,gy\n");
    for v in values {
        let _ = writeln!(out, "{},{}", v.x, v.y);
    }
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct Artifacts {
    dir: PathBuf,
    hashes: Vec<(String, String)>,
}

impl Artifacts {
    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(io_err(&path))?;
        self.hashes.push((name.to_string(), sha256_hex(contents.as_bytes())));
        Ok(())
    }
}

const PHI_SEPARATION: f64 = 1e-9;

pub const MANIFEST: &str = "manifest.txt";
pub const VERIFY_REPORT: &str = "verify.txt";

pub fn design_report(config: &DesignConfig, r: &DesignResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "mode                 {}", config.mode);
    let _ = writeln!(
        out,
        "solver               {}",
        match r.solver {
            SolverKind::Exact => "exact",
            SolverKind::Sinkhorn => "sinkhorn",
        }
    );
    let _ = writeln!(out, "points               {} x {}", r.solution.m, r.solution.n);
    let _ = writeln!(out, "phi_collisions       {}", r.phi_collisions);
    if let Some(eps) = r.solution.epsilon {
        let _ = writeln!(out, "epsilon              {eps:.6e}");
    }
    let _ = writeln!(out, "iterations           {}", r.solution.iterations);
    let _ = writeln!(out, "marginal_error       {:.6e}", r.solution.marginal_error);
    let _ = writeln!(out, "total_cost           {:.12e}", r.solution.total_cost);
    let gap = r.solution.total_cost - r.solution.dual_value(&r.problem.mu.masses, &r.problem.nu.masses);
    let _ = writeln!(out, "duality_gap          {gap:.6e}");
    let _ = writeln!(out, "diffuse_fraction     {:.6e}", r.solution.map.diffuse_fraction);
    let _ = writeln!(out, "tangentiality_s1     {:.3e}", r.s1.tangentiality_residual());
    let _ = writeln!(out, "curl_max_s1          {:.6e}", r.s1_integrated.max_curl());
    if r.s1_integrated.curl_warning {
        let _ = writeln!(out, "warning              S1 gradient has large curl; scalar phase is a least-squares fit");
    }
    if let Some(s2) = &r.s2 {
        let _ = writeln!(out, "tangentiality_s2     {:.3e}", s2.field.tangentiality_residual());
        let _ = writeln!(out, "curl_max_s2          {:.6e}", s2.integrated.max_curl());
        let _ = writeln!(out, "regrid_distance_s2   {:.6e}", s2.regrid_distance);
        if s2.integrated.curl_warning {
            let _ =
                writeln!(out, "warning              S2 gradient has large curl; scalar phase is a least-squares fit");
        }
    }
    let rt = &r.round_trip;
    let _ = writeln!(out, "round_trip_nodes     {}", rt.nodes);
    let _ = writeln!(out, "round_trip_within_2h {:.6}", rt.within_two_spacings);
    let _ = writeln!(out, "round_trip_max_dist  {:.6e}", rt.max_distance);
    if let Some(dev) = rt.max_vertical_deviation {
        let _ = writeln!(out, "exit_angle_max       {dev:.6e}");
    }
    let _ = writeln!(out, "[conditions]");
    let _ = writeln!(out, "{}", r.conditions);
    out
}

/// Runs the design and writes every artifact into `out`.
pub fn design_to_dir(config: &DesignConfig, out: &Path, dump_plan: bool) -> Result<DesignResult> {
    let result = run_design(config)?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let mut files = Artifacts { dir: out.to_path_buf(), hashes: Vec::new() };
    let src = &result.problem.source_grid;
    let tgt = &result.problem.target_grid;
    files.write("phase_s1.csv", &scalar_csv("S1", src, &result.s1_integrated.values))?;
    files.write("phase_s1_grad.csv", &vector_csv("S1", src, &result.s1.grad2))?;
    if let Some(s2) = &result.s2 {
        files.write("phase_s2.csv", &scalar_csv("S2", tgt, &s2.integrated.values))?;
        files.write("phase_s2_grad.csv", &vector_csv("S2", tgt, &s2.grid_gradient))?;
        let mut samples = grid_header("phase_samples", "S2", src);
        samples.push_str("tx,ty,gx,gy\n");
        for (t, g) in result.targets.iter().zip(&s2.field.grad2) {
            let _ = writeln!(samples, "{},{},{},{}", t.x, t.y, g.x, g.y);
        }
        files.write("phase_s2_samples.csv", &samples)?;
    }
    let mut map = String::from("x,y,tx,ty,row,share,diffuse\n");
    let mut row_of = vec![None; src.len()];
    for (i, &k) in result.problem.mu.nodes.iter().enumerate() {
        row_of[k] = Some(i);
    }
    for ((x, t), row) in src.nodes().iter().zip(&result.targets).zip(&row_of) {
        match row {
            Some(i) => {
                let e = result.solution.map.entries[*i];
                let _ = writeln!(map, "{},{},{},{},{},{},{}", x.x, x.y, t.x, t.y, i, e.share, e.diffuse);
            }
            None => {
                let _ = writeln!(map, "{},{},{},{},,,", x.x, x.y, t.x, t.y);
            }
        }
    }
    files.write("map.csv", &map)?;
    let mut pot = String::from("side,index,x,y,value\n");
    for (i, (p, v)) in result.problem.mu.points.iter().zip(&result.solution.potential_psi).enumerate() {
        let _ = writeln!(pot, "source,{i},{},{},{v}", p.x, p.y);
    }
    for (j, (p, v)) in result.problem.nu.points.iter().zip(&result.solution.potential_psi_c).enumerate() {
        let _ = writeln!(pot, "target,{j},{},{},{v}", p.x, p.y);
    }
    files.write("potentials.csv", &pot)?;
    if dump_plan {
        let mut plan = String::from("row,col,mass\n");
        for i in 0..result.solution.m {
            for (j, p) in result.solution.row(i).iter().enumerate() {
                if *p > 0.0 {
                    let _ = writeln!(plan, "{i},{j},{p}");
                }
            }
        }
        files.write("plan.csv", &plan)?;
    }
    files.write("report.txt", &design_report(config, &result))?;

    let mut manifest = String::from("# metalens design manifest\n[config]\n");
    manifest.push_str(&config.to_string());
    manifest.push_str("[inputs]\n");
    for path in config.csv_inputs() {
        let bytes = fs::read(path).map_err(io_err(path))?;
        let _ = writeln!(manifest, "{} {}", sha256_hex(&bytes), path.display());
    }
    manifest.push_str("[files]\n");
    for (name, hash) in &files.hashes {
        let _ = writeln!(manifest, "{hash} {name}");
    }
    let path = out.join(MANIFEST);
    fs::write(&path, manifest).map_err(io_err(&path))?;
    Ok(result)
}

/// A parsed manifest: the configuration echo and the recorded hashes.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub config: DesignConfig,
    pub inputs: Vec<(String, PathBuf)>,
    pub files: Vec<(String, String)>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let bad = |m: String| PipelineError::Manifest(m);
        let mut section = "";
        let mut config_text = String::new();
        let mut inputs = Vec::new();
        let mut files = Vec::new();
        for line in text.lines() {
            match line.trim() {
                "[config]" | "[inputs]" | "[files]" => {
                    section = line.trim();
                    continue;
                }
                l if l.starts_with('#') && section.is_empty() => continue,
                _ => {}
            }
            match section {
                "[config]" => {
                    config_text.push_str(line);
                    config_text.push('\n');
                }
                "[inputs]" | "[files]" => {
                    let (hash, rest) = line.split_once(' ').ok_or_else(|| bad(format!("malformed entry `{line}`")))?;
                    if section == "[inputs]" {
                        inputs.push((hash.to_string(), PathBuf::from(rest)));
                    } else {
                        files.push((hash.to_string(), rest.to_string()));
                    }
                }
                _ => return Err(bad(format!("content outside a section: `{line}`"))),
            }
        }
        let config = DesignConfig::parse(&config_text, dir)?;
        Ok(Self { config, inputs, files })
    }

    /// Reads a recorded file, checking its hash.
    fn checked(&self, dir: &Path, name: &str) -> Result<String> {
        let (hash, _) = self
            .files
            .iter()
            .find(|(_, n)| n == name)
            .ok_or_else(|| PipelineError::Manifest(format!("{name} is not recorded in the manifest")))?;
        let path = dir.join(name);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        if &sha256_hex(text.as_bytes()) != hash {
            return Err(PipelineError::Manifest(format!("{name} does not match its recorded hash")));
        }
        Ok(text)
    }

    fn check_inputs(&self) -> Result<()> {
        for (hash, path) in &self.inputs {
            let bytes = fs::read(path).map_err(io_err(path))?;
            if &sha256_hex(&bytes) != hash {
                return Err(PipelineError::Manifest(format!("input {} changed since design", path.display())));
            }
        }
        Ok(())
    }
}

fn parse_rows(name: &str, text: &str, width: usize, expected: usize) -> Result<Vec<Vec<f64>>> {
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with(|c: char| c.is_ascii_alphabetic()))
        .map(|l| {
            let vals: Vec<f64> = l
                .split(',')
                .map(|w| w.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| PipelineError::Manifest(format!("{name}: cannot parse `{l}`")))?;
            if vals.len() != width {
                return Err(PipelineError::Manifest(format!("{name}: expected {width} columns in `{l}`")));
            }
            Ok(vals)
        })
        .collect::<Result<_>>()?;
    if rows.len() != expected {
        return Err(PipelineError::Manifest(format!("{name}: expected {expected} rows, got {}", rows.len())));
    }
    Ok(rows)
}

/// Rebuilds the traceable design from a design directory.
pub fn load_design(dir: &Path) -> Result<(Manifest, Problem, Design)> {
    let manifest = Manifest::read(dir)?;
    manifest.check_inputs()?;
    let config = &manifest.config;
    let problem = build_problem(config)?;
    let n = problem.source_grid.len();
    let s1: Vec<Vector2<f64>> = parse_rows("phase_s1_grad.csv", &manifest.checked(dir, "phase_s1_grad.csv")?, 2, n)?
        .iter()
        .map(|r| Vector2::new(r[0], r[1]))
        .collect();
    let s2 = match config.mode {
        Mode::Single => None,
        Mode::Double => {
            let rows = parse_rows("phase_s2_samples.csv", &manifest.checked(dir, "phase_s2_samples.csv")?, 4, n)?;
            Some(SecondSurface {
                targets: rows.iter().map(|r| Vector2::new(r[0], r[1])).collect(),
                grad: rows.iter().map(|r| Vector2::new(r[2], r[3])).collect(),
            })
        }
    };
    let design = assemble_design(config, &problem, s1, s2)?;
    Ok((manifest, problem, design))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOutcome {
    pub report: EnergyReport,
    pub l1_tol: f64,
    pub pass: bool,
}

/// Traces `ray_count` stratified rays through a stored design and compares
/// the landed histogram with the target measure. Writes `verify.txt`.
pub fn verify_dir(dir: &Path, seed: Option<u64>) -> Result<VerifyOutcome> {
    let (manifest, problem, design) = load_design(dir)?;
    let config = &manifest.config;
    let seed = seed.unwrap_or(config.seed);
    let rho0 = config.source.density.density.clone();
    let (points, weights) =
        stratified_rays(&problem.source_grid, &move |p: &Vector2<f64>| rho0.eval(p), config.verify.ray_count, seed);
    let push = pushforward(&design, &points, &weights, &problem.target_grid)?;
    let target = BinnedMeasure::from_measure(&problem.target_grid, &problem.nu);
    let report = verify_energy(&push, &target)?;
    let l1_tol = config.verify.l1_tol;
    let line = format!("{}\n", report.line(l1_tol));
    let path = dir.join(VERIFY_REPORT);
    fs::write(&path, line).map_err(io_err(&path))?;
    Ok(VerifyOutcome { report, l1_tol, pass: report.passes(l1_tol) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(extra: &str) -> DesignConfig {
        let text = format!(
            "[design]\nmode = single\nbeta = 1\n[indices]\nn1 = 1\nn2 = 1\n\
             [source]\nbounds = 0 1 0 1\nresolution = 4 4\n[target]\nbounds = 0 1 0 1\nresolution = 4 4\n{extra}"
        );
        DesignConfig::parse(&text, Path::new(".")).unwrap()
    }

    #[test]
    fn identity_design_round_trips() {
        let r = run_design(&config("")).unwrap();
        assert_eq!(r.solver, SolverKind::Exact);
        assert!(r.s1.grad2.iter().all(|g| g.norm() < 1e-12));
        assert_eq!(r.round_trip.within_two_spacings, 1.0);
        assert!(r.round_trip.max_distance < 1e-12);
    }

    #[test]
    fn design_then_verify_passes() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config("[verify]\nray_count = 2000\n");
        design_to_dir(&cfg, dir.path(), true).unwrap();
        for name in
            ["phase_s1.csv", "phase_s1_grad.csv", "map.csv", "potentials.csv", "plan.csv", "report.txt", MANIFEST]
        {
            assert!(dir.path().join(name).exists(), "{name}");
        }
        let out = verify_dir(dir.path(), None).unwrap();
        assert!(out.pass, "{}", out.report);
        assert!(out.report.l1 < 0.05, "{}", out.report);
        let line = fs::read_to_string(dir.path().join(VERIFY_REPORT)).unwrap();
        assert!(line.starts_with("l1=") && line.trim_end().ends_with("verdict=PASS"));
    }

    #[test]
    fn tampered_artifact_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        design_to_dir(&config("[verify]\nray_count = 100\n"), dir.path(), false).unwrap();
        let path = dir.path().join("phase_s1_grad.csv");
        let mut text = fs::read_to_string(&path).unwrap();
        text.push_str("0,0\n");
        fs::write(&path, text).unwrap();
        assert!(matches!(verify_dir(dir.path(), None), Err(PipelineError::Manifest(_))));
    }

    #[test]
    fn enforced_conditions_stop_the_solve() {
        let cfg = config("[surface_f]\nshape = affine 0 2 0\n");
        let cfg = DesignConfig { beta: Some(2.5), ..cfg };
        let err = run_design(&cfg).unwrap_err();
        assert!(err.is_quantitative());
    }
}
