//! Generalized Snell refraction and reflection, ray tracing through a
//! designed singlet or doublet, and the energy-conservation check.

use std::fmt;

use nalgebra::{Vector2, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{DiscreteMeasure, GeometryError, Grid2, PhiMap, Surface};

#[derive(Debug, Error)]
pub enum OpticsError {
    #[error("no transmitted ray (discriminant {0:e})")]
    Evanescent(f64),
    #[error("no reflected ray (discriminant {0:e})")]
    NoRealRoot(f64),
    #[error("phase gradient has normal component {0:e}")]
    NonTangentialPhase(f64),
    #[error("surface normal is zero")]
    ZeroNormal,
    #[error("ray from ({0}, {1}) leaves the working domain before the next surface")]
    MissedSurface(f64, f64),
    #[error("{0:.4} of the source mass failed to land in the target domain")]
    ExcessiveLoss(f64),
    #[error("measures are binned on different grids")]
    GridMismatch,
    #[error("design has {got} phase samples, source grid has {expected} nodes")]
    SizeMismatch { got: usize, expected: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub type Result<T> = std::result::Result<T, OpticsError>;

/// Share of the source mass allowed to miss the target domain.
pub const MAX_LOSS: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vector3<f64>,
    /// Unit length.
    pub direction: Vector3<f64>,
}

impl Ray {
    pub fn new(origin: Vector3<f64>, direction: Vector3<f64>) -> Self {
        Self { origin, direction: direction.normalize() }
    }

    pub fn at(&self, t: f64) -> Vector3<f64> {
        self.origin + self.direction * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefractionResult {
    /// Unit outgoing direction.
    pub direction: Vector3<f64>,
    pub lambda: f64,
    /// Reflection only: the incident ray was tangent to the surface and is
    /// returned unchanged.
    pub grazing: bool,
}

fn check_inputs(normal: &Vector3<f64>, grad_phase: &Vector3<f64>) -> Result<f64> {
    let nn = normal.norm_squared();
    if !(nn > 0.0) {
        return Err(OpticsError::ZeroNormal);
    }
    let normal_part = normal.dot(grad_phase) / nn.sqrt();
    if normal_part.abs() > 1e-9 * grad_phase.norm().max(1.0) {
        return Err(OpticsError::NonTangentialPhase(normal_part));
    }
    Ok(nn)
}

/// Solves `n1 e - n2 m = lambda nu + grad Phi` for a unit `m` with
/// `m . nu > 0`.
///
/// With `w = n1 e - grad Phi`, `|w - lambda nu| = n2` is a quadratic in
/// `lambda` with discriminant `D = (w.nu)^2 - |nu|^2 (|w|^2 - n2^2)`; the
/// root `lambda = (w.nu - sqrt D) / |nu|^2` gives `m . nu = sqrt D / n2`.
pub fn refract(
    incident: &Vector3<f64>,
    normal: &Vector3<f64>,
    grad_phase: &Vector3<f64>,
    n1: f64,
    n2: f64,
) -> Result<RefractionResult> {
    let nn = check_inputs(normal, grad_phase)?;
    let w = incident * n1 - grad_phase;
    let wn = w.dot(normal);
    let disc = wn * wn - nn * (w.norm_squared() - n2 * n2);
    if !(disc > 0.0) {
        return Err(OpticsError::Evanescent(disc));
    }
    let lambda = (wn - disc.sqrt()) / nn;
    let m = (w - normal * lambda) / n2;
    Ok(RefractionResult { direction: m.normalize(), lambda, grazing: false })
}

/// Solves `n1 e - n1 r = lambda nu + grad Phi` for a unit `r` on the
/// opposite side of the surface from the incidence direction.
pub fn reflect(
    incident: &Vector3<f64>,
    normal: &Vector3<f64>,
    grad_phase: &Vector3<f64>,
    n1: f64,
) -> Result<RefractionResult> {
    let nn = check_inputs(normal, grad_phase)?;
    let w = incident - grad_phase / n1;
    let wn = w.dot(normal);
    let disc = wn * wn - nn * (w.norm_squared() - 1.0);
    if disc < 0.0 {
        return Err(OpticsError::NoRealRoot(disc));
    }
    if disc == 0.0 {
        return Ok(RefractionResult { direction: *incident, lambda: 0.0, grazing: true });
    }
    // r . nu = wn - lambda |nu|^2 = -sign(e . nu) sqrt D
    let side = if incident.dot(normal) >= 0.0 { 1.0 } else { -1.0 };
    let lambda = (wn + side * disc.sqrt()) / nn;
    let r = w - normal * lambda;
    Ok(RefractionResult { direction: r.normalize(), lambda, grazing: false })
}

/// Upward normal `(-grad h, 1)` of a graph surface, unnormalized.
pub fn graph_normal(slope: &Vector2<f64>) -> Vector3<f64> {
    Vector3::new(-slope.x, -slope.y, 1.0)
}

/// Tangential completion `(g1, g2, g . grad h)` of a planar phase gradient.
pub fn tangential(grad2: &Vector2<f64>, slope: &Vector2<f64>) -> Vector3<f64> {
    Vector3::new(grad2.x, grad2.y, grad2.dot(slope))
}

/// What follows the first metasurface in a design.
#[derive(Debug, Clone, PartialEq)]
pub enum DesignMode {
    /// Rays land on the plane `z = beta`.
    Single { beta: f64 },
    /// Second metasurface `z = g`; rays exit into index `n3` and land on
    /// `z = screen` if set, else are read off where they cross `g`.
    Double { g: Surface, n3: f64, screen: Option<f64> },
}

/// Second-surface phase samples, indexed by source node.
#[derive(Debug, Clone)]
pub struct SecondSurface {
    /// Assigned target of each source node.
    pub targets: Vec<Vector2<f64>>,
    /// `(Psi_x1, Psi_x2)` at each target.
    pub grad: Vec<Vector2<f64>>,
}

/// A designed lens: surfaces, indices, and phase gradients sampled on the
/// source grid.
#[derive(Debug, Clone)]
pub struct Design {
    pub mode: DesignMode,
    pub phi: PhiMap,
    pub n1: f64,
    pub n2: f64,
    pub source_grid: Grid2,
    /// `(Phi_x1, Phi_x2)` at `phi(x)` for every source node `x`.
    pub s1_grad: Vec<Vector2<f64>>,
    pub s2: Option<SecondSurface>,
    /// Largest height of the second surface over the working domain.
    pub s2_top: f64,
}

impl Design {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        mode: DesignMode,
        phi: PhiMap,
        n1: f64,
        n2: f64,
        source_grid: Grid2,
        s1_grad: Vec<Vector2<f64>>,
        s2: Option<SecondSurface>,
        working_domain: &Grid2,
    ) -> Result<Self> {
        let expected = source_grid.len();
        let mut sizes = vec![s1_grad.len()];
        if let Some(s) = &s2 {
            sizes.push(s.targets.len());
            sizes.push(s.grad.len());
        }
        if let Some(&got) = sizes.iter().find(|&&n| n != expected) {
            return Err(OpticsError::SizeMismatch { got, expected });
        }
        let s2_top = match &mode {
            DesignMode::Single { beta } => *beta,
            DesignMode::Double { g, .. } => {
                let samples = s2.iter().flat_map(|s| s.targets.iter());
                working_domain.nodes().iter().chain(samples).map(|y| g.eval(y)).fold(f64::NEG_INFINITY, f64::max)
            }
        };
        Ok(Self { mode, phi, n1, n2, source_grid, s1_grad, s2, s2_top })
    }

    pub fn surface_f(&self) -> &Surface {
        &self.phi.surface
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceResult {
    /// Lateral coordinates where the ray is read off.
    pub landing: Vector2<f64>,
    /// Final unit direction.
    pub direction: Vector3<f64>,
    /// Where the ray crossed the second surface (doublets).
    pub s2_hit: Option<Vector2<f64>>,
}

impl TraceResult {
    /// Angle between the final direction and `(0, 0, 1)`.
    pub fn deviation_from_vertical(&self) -> f64 {
        self.direction.xy().norm().atan2(self.direction.z)
    }
}

const S2_SCAN: usize = 64;

/// Parameter where `ray` first crosses `z = g`, searching up to the height
/// `top`.
fn cross_surface(ray: &Ray, g: &Surface, top: f64) -> Option<f64> {
    let d = ray.direction;
    if d.z <= 0.0 {
        return None;
    }
    let gap = |t: f64| {
        let p = ray.at(t);
        p.z - g.eval(&p.xy())
    };
    if let Surface::Constant(h) = g {
        let t = (h - ray.origin.z) / d.z;
        return (t >= 0.0).then_some(t);
    }
    if gap(0.0) >= 0.0 {
        return None;
    }
    let t_max = 2.0 * (top - ray.origin.z).max(1e-12) / d.z;
    let dt = t_max / S2_SCAN as f64;
    let (mut lo, mut hi) = (0.0, 0.0);
    let mut found = false;
    for k in 1..=S2_SCAN {
        let t = k as f64 * dt;
        if gap(t) >= 0.0 {
            lo = t - dt;
            hi = t;
            found = true;
            break;
        }
    }
    if !found {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gap(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 * t_max {
            break;
        }
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..3 {
        let slope = d.z - g.grad(&ray.at(t).xy()).dot(&d.xy());
        if slope.abs() < 1e-300 {
            break;
        }
        let next = t - gap(t) / slope;
        if next >= lo - dt && next <= hi + dt {
            t = next;
        }
    }
    Some(t)
}

/// Source point whose interpolated target is `y`, by Newton iteration on
/// the bilinear interpolant of the sampled targets starting from `guess`.
fn invert_targets(grid: &Grid2, targets: &[Vector2<f64>], y: &Vector2<f64>, guess: &Vector2<f64>) -> Vector2<f64> {
    let scale = grid.diameter();
    let mut x = *guess;
    for _ in 0..50 {
        let (tx, jac) = grid.interpolate_with_jacobian(targets, &x);
        let r = tx - y;
        if r.norm() <= 1e-14 * scale {
            break;
        }
        let Some(inv) = jac.try_inverse() else { break };
        let step = inv * r;
        // keep the iterate near the grid so extrapolation stays sane
        x -= step;
        if !grid.contains(&x, scale) {
            break;
        }
    }
    x
}

/// Follows the ray leaving the source point `x` through the design.
pub fn trace(design: &Design, x: &Vector2<f64>) -> Result<TraceResult> {
    let missed = || OpticsError::MissedSurface(x.x, x.y);
    let e = design.phi.field.direction(x);
    let hit = design.phi.map(x)?;
    let f = design.surface_f();
    let slope_f = f.grad(&hit);
    let grad_phi = design.source_grid.interpolate(&design.s1_grad, x);
    let m = refract(&e, &graph_normal(&slope_f), &tangential(&grad_phi, &slope_f), design.n1, design.n2)?.direction;
    let ray = Ray { origin: Vector3::new(hit.x, hit.y, f.eval(&hit)), direction: m };
    match &design.mode {
        DesignMode::Single { beta } => {
            if m.z <= 0.0 {
                return Err(missed());
            }
            let t = (beta - ray.origin.z) / m.z;
            Ok(TraceResult { landing: ray.at(t).xy(), direction: m, s2_hit: None })
        }
        DesignMode::Double { g, n3, screen } => {
            let s2 = design.s2.as_ref().ok_or_else(missed)?;
            let t = cross_surface(&ray, g, design.s2_top).ok_or_else(missed)?;
            let p = ray.at(t);
            let y = p.xy();
            let slope_g = g.grad(&y);
            let label = invert_targets(&design.source_grid, &s2.targets, &y, x);
            let grad_psi = design.source_grid.interpolate(&s2.grad, &label);
            let out = refract(&m, &graph_normal(&slope_g), &tangential(&grad_psi, &slope_g), design.n2, *n3)?.direction;
            let landing = match screen {
                None => y,
                Some(z) => {
                    if out.z <= 0.0 {
                        return Err(missed());
                    }
                    (p + out * ((z - p.z) / out.z)).xy()
                }
            };
            Ok(TraceResult { landing, direction: out, s2_hit: Some(y) })
        }
    }
}

/// Source samples for Monte Carlo verification: `count` points allocated
/// to grid cells in proportion to the estimated cell mass (largest
/// remainder), jittered within each cell (one point in each of `n` distinct
/// sub-cells of a `k x k` split, `k = ceil(sqrt n)`), weighted by
/// `density * area / n` and normalized. Each cell draws from its own
/// stream of a ChaCha8 generator seeded with `seed`.
pub fn stratified_rays(
    grid: &Grid2,
    density: &(dyn Fn(&Vector2<f64>) -> f64 + Sync),
    count: usize,
    seed: u64,
) -> (Vec<Vector2<f64>>, Vec<f64>) {
    let (nx, ny) = (grid.nx, grid.ny);
    let (hx, hy) = grid.spacing();
    let cells = (nx - 1) * (ny - 1);
    let cell_mass: Vec<f64> = (0..cells)
        .map(|c| {
            let (ix, iy) = (c % (nx - 1), c / (nx - 1));
            let corners = [grid.node(ix, iy), grid.node(ix + 1, iy), grid.node(ix, iy + 1), grid.node(ix + 1, iy + 1)];
            corners.iter().map(|p| density(p).max(0.0)).sum::<f64>() * 0.25 * hx * hy
        })
        .collect();
    let total: f64 = cell_mass.iter().sum();
    let quotas: Vec<f64> = cell_mass.iter().map(|m| count as f64 * m / total).collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut rest = count - alloc.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..cells).collect();
    order.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())).then(a.cmp(&b)));
    for &c in &order {
        if rest == 0 {
            break;
        }
        alloc[c] += 1;
        rest -= 1;
    }
    let per_cell: Vec<(Vec<Vector2<f64>>, Vec<f64>)> = (0..cells)
        .into_par_iter()
        .map(|c| {
            let n = alloc[c];
            let (ix, iy) = (c % (nx - 1), c / (nx - 1));
            let corner = grid.node(ix, iy);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            // jittered: one ray in each of n distinct sub-cells of a k x k split
            let k = (n as f64).sqrt().ceil() as usize;
            let mut slots: Vec<usize> = (0..k * k).collect();
            slots.shuffle(&mut rng);
            let (sx, sy) = (hx / k as f64, hy / k as f64);
            let mut pts = Vec::with_capacity(n);
            let mut ws = Vec::with_capacity(n);
            for &slot in &slots[..n] {
                let (a, b) = ((slot % k) as f64, (slot / k) as f64);
                let p = corner + Vector2::new((a + rng.gen::<f64>()) * sx, (b + rng.gen::<f64>()) * sy);
                ws.push(density(&p).max(0.0) * hx * hy / n as f64);
                pts.push(p);
            }
            (pts, ws)
        })
        .collect();
    let mut points = Vec::with_capacity(count);
    let mut weights = Vec::with_capacity(count);
    for (p, w) in per_cell {
        points.extend(p);
        weights.extend(w);
    }
    let sum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= sum);
    (points, weights)
}

/// Masses attached to the nodes of a grid (each node owns its dual cell).
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedMeasure {
    pub grid: Grid2,
    pub masses: Vec<f64>,
}

impl BinnedMeasure {
    pub fn from_measure(grid: &Grid2, measure: &DiscreteMeasure) -> Self {
        let mut masses = vec![0.0; grid.len()];
        for (node, m) in measure.nodes.iter().zip(&measure.masses) {
            masses[*node] += m;
        }
        Self { grid: grid.clone(), masses }
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }
}

#[derive(Debug, Clone)]
pub struct Pushforward {
    /// Landed mass, renormalized to 1.
    pub measure: BinnedMeasure,
    /// Share of the input mass that failed to trace or landed outside.
    pub lost_mass: f64,
    /// Share of the input mass that landed, before renormalization.
    pub landed_mass: f64,
    pub rays: usize,
    pub failed_traces: usize,
}

const PUSH_CHUNK: usize = 4096;

/// Traces weighted source points and bins the landings onto `target_grid`.
pub fn pushforward(
    design: &Design,
    points: &[Vector2<f64>],
    masses: &[f64],
    target_grid: &Grid2,
) -> Result<Pushforward> {
    let total: f64 = masses.iter().sum();
    let tol = 1e-9 * target_grid.diameter();
    let partials: Vec<(Vec<f64>, f64, usize)> = points
        .par_chunks(PUSH_CHUNK)
        .zip(masses.par_chunks(PUSH_CHUNK))
        .map(|(pts, ms)| {
            let mut hist = vec![0.0; target_grid.len()];
            let mut lost = 0.0;
            let mut failed = 0;
            for (p, m) in pts.iter().zip(ms) {
                match trace(design, p) {
                    Ok(res) => match target_grid.nearest_node(&res.landing, tol) {
                        Some(k) => hist[k] += m,
                        None => lost += m,
                    },
                    Err(_) => {
                        lost += m;
                        failed += 1;
                    }
                }
            }
            (hist, lost, failed)
        })
        .collect();
    let mut hist = vec![0.0; target_grid.len()];
    let mut lost = 0.0;
    let mut failed_traces = 0;
    for (h, l, f) in partials {
        hist.iter_mut().zip(&h).for_each(|(a, b)| *a += b);
        lost += l;
        failed_traces += f;
    }
    let lost_mass = lost / total;
    if lost_mass > MAX_LOSS {
        return Err(OpticsError::ExcessiveLoss(lost_mass));
    }
    let landed: f64 = hist.iter().sum();
    let measure = BinnedMeasure { grid: target_grid.clone(), masses: hist.iter().map(|h| h / landed).collect() };
    Ok(Pushforward { measure, lost_mass, landed_mass: landed / total, rays: points.len(), failed_traces })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    /// Total-variation distance, `0.5 * sum |p - q|`.
    pub l1: f64,
    pub linf_cell: f64,
    pub lost_mass: f64,
    pub rays: usize,
}

impl EnergyReport {
    pub fn passes(&self, l1_tol: f64) -> bool {
        self.l1 <= l1_tol
    }

    pub fn line(&self, l1_tol: f64) -> String {
        format!("{self} verdict={}", if self.passes(l1_tol) { "PASS" } else { "FAIL" })
    }
}

impl fmt::Display for EnergyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "l1={:.6e} linf_cell={:.6e} lost_mass={:.6e} rays={}",
            self.l1, self.linf_cell, self.lost_mass, self.rays
        )
    }
}

pub fn verify_energy(push: &Pushforward, target: &BinnedMeasure) -> Result<EnergyReport> {
    if !push.measure.grid.same_layout(&target.grid) {
        return Err(OpticsError::GridMismatch);
    }
    let (mut l1, mut linf) = (0.0, 0.0_f64);
    for (p, q) in push.measure.masses.iter().zip(&target.masses) {
        let d = (p - q).abs();
        l1 += d;
        linf = linf.max(d);
    }
    Ok(EnergyReport { l1: 0.5 * l1, linf_cell: linf, lost_mass: push.lost_mass, rays: push.rays })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_measure, IncidentField};

    fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    #[test]
    fn matched_indices_pass_straight() {
        let e = v(0.3, -0.2, 1.0).normalize();
        let r = refract(&e, &v(0.1, 0.4, 1.0), &Vector3::zeros(), 1.3, 1.3).unwrap();
        assert!((r.direction - e).norm() < 1e-15);
    }

    #[test]
    fn classical_snell() {
        let e = v(0.5, 0.0, 3f64.sqrt() / 2.0);
        let r = refract(&e, &v(0.0, 0.0, 1.0), &Vector3::zeros(), 1.0, 1.5).unwrap();
        assert!((r.direction - v(1.0 / 3.0, 0.0, 8f64.sqrt() / 3.0)).norm() < 1e-15);
    }

    #[test]
    fn total_internal_reflection() {
        let e = v(0.9, 0.0, (1.0 - 0.81f64).sqrt());
        assert!(matches!(refract(&e, &v(0.0, 0.0, 1.0), &Vector3::zeros(), 1.5, 1.0), Err(OpticsError::Evanescent(_))));
    }

    #[test]
    fn normal_phase_component_is_rejected() {
        let e = v(0.0, 0.0, 1.0);
        assert!(matches!(
            refract(&e, &v(0.0, 0.0, 2.0), &v(0.0, 0.0, 0.1), 1.0, 1.0),
            Err(OpticsError::NonTangentialPhase(_))
        ));
    }

    #[test]
    fn mirror_reflection() {
        let e = v(0.3, 0.4, 0.75f64.sqrt());
        let r = reflect(&e, &v(0.0, 0.0, 1.0), &Vector3::zeros(), 1.0).unwrap();
        assert!((r.direction - v(0.3, 0.4, -(0.75f64.sqrt()))).norm() < 1e-15);
        let back = reflect(&r.direction, &v(0.0, 0.0, 1.0), &Vector3::zeros(), 1.0).unwrap();
        assert!((back.direction - e).norm() < 1e-12);
    }

    #[test]
    fn grazing_reflection_is_flagged() {
        let r = reflect(&v(1.0, 0.0, 0.0), &v(0.0, 0.0, 1.0), &Vector3::zeros(), 1.0).unwrap();
        assert!(r.grazing);
        assert_eq!(r.direction, v(1.0, 0.0, 0.0));
        assert_eq!(r.lambda, 0.0);
    }

    #[test]
    fn reflection_with_phase() {
        let r = reflect(&v(0.0, 0.0, 1.0), &v(0.0, 0.0, 1.0), &v(0.5, 0.0, 0.0), 1.0).unwrap();
        assert!((r.direction - v(-0.5, 0.0, -(0.75f64.sqrt()))).norm() < 1e-15);
    }

    #[test]
    fn oversized_phase_has_no_reflection() {
        assert!(matches!(
            reflect(&v(0.0, 0.0, 1.0), &v(0.0, 0.0, 1.0), &v(2.5, 0.0, 0.0), 1.0),
            Err(OpticsError::NoRealRoot(_))
        ));
    }

    fn flat_design(grid: &Grid2, grad: Vec<Vector2<f64>>, n2: f64) -> Design {
        let phi = PhiMap::new(IncidentField::Collimated, Surface::Constant(0.0), grid);
        Design::new(DesignMode::Single { beta: 1.0 }, phi, 1.0, n2, grid.clone(), grad, None, grid).unwrap()
    }

    #[test]
    fn zero_phase_lands_in_place() {
        let grid = Grid2::unit_square(4).unwrap();
        let d = flat_design(&grid, vec![Vector2::zeros(); grid.len()], 1.0);
        let x = Vector2::new(0.37, 0.81);
        assert!((trace(&d, &x).unwrap().landing - x).norm() < 1e-15);
    }

    #[test]
    fn translation_round_trip() {
        let grid = Grid2::unit_square(4).unwrap();
        let g = Vector2::new(-1.5 / 2f64.sqrt(), 0.0);
        let d = flat_design(&grid, vec![g; grid.len()], 1.5);
        let x = Vector2::new(0.2, 0.6);
        assert!((trace(&d, &x).unwrap().landing - (x + Vector2::new(1.0, 0.0))).norm() < 1e-8);
    }

    #[test]
    fn flat_doublet_exits_vertically() {
        let grid = Grid2::unit_square(4).unwrap();
        let shift = Vector2::new(0.5, 0.0);
        let c = (1.0f64 + 0.25).sqrt();
        let phi_grad = shift * (-1.5 / c);
        let targets: Vec<_> = grid.nodes().iter().map(|x| x + shift).collect();
        let s2 = SecondSurface { targets, grad: vec![-phi_grad; grid.len()] };
        let phi = PhiMap::new(IncidentField::Collimated, Surface::Constant(0.0), &grid);
        let mode = DesignMode::Double { g: Surface::Constant(1.0), n3: 1.0, screen: None };
        let d = Design::new(mode, phi, 1.0, 1.5, grid.clone(), vec![phi_grad; grid.len()], Some(s2), &grid).unwrap();
        let x = Vector2::new(0.25, 0.5);
        let res = trace(&d, &x).unwrap();
        assert!(res.deviation_from_vertical() < 1e-8);
        assert!((res.landing - (x + shift)).norm() < 1e-8);
    }

    #[test]
    fn identity_pushforward_matches_source() {
        let grid = Grid2::unit_square(6).unwrap();
        let d = flat_design(&grid, vec![Vector2::zeros(); grid.len()], 1.0);
        let source = build_measure(&grid, |_| 1.0).unwrap();
        let push = pushforward(&d, &source.points, &source.masses, &grid).unwrap();
        assert!((push.measure.total() - 1.0).abs() < 1e-12);
        assert!((push.landed_mass + push.lost_mass - 1.0).abs() < 1e-12);
        let target = BinnedMeasure::from_measure(&grid, &source);
        let report = verify_energy(&push, &target).unwrap();
        assert!(report.l1 < 1e-15);
        assert!(report.line(0.05).ends_with("verdict=PASS"));
    }

    #[test]
    fn disjoint_supports_are_maximally_apart() {
        let grid = Grid2::unit_square(3).unwrap();
        let mut a = vec![0.0; 9];
        let mut b = vec![0.0; 9];
        a[0] = 1.0;
        b[8] = 1.0;
        let push = Pushforward {
            measure: BinnedMeasure { grid: grid.clone(), masses: a },
            lost_mass: 0.0,
            landed_mass: 1.0,
            rays: 1,
            failed_traces: 0,
        };
        let report = verify_energy(&push, &BinnedMeasure { grid: grid.clone(), masses: b.clone() }).unwrap();
        assert_eq!(report.l1, 1.0);
        let other = Grid2::unit_square(4).unwrap();
        assert!(matches!(
            verify_energy(&push, &BinnedMeasure { grid: other, masses: vec![0.0; 16] }),
            Err(OpticsError::GridMismatch)
        ));
    }

    #[test]
    fn translated_design_loses_mass() {
        let grid = Grid2::unit_square(4).unwrap();
        let g = Vector2::new(-1.5 / 2f64.sqrt(), 0.0);
        let d = flat_design(&grid, vec![g; grid.len()], 1.5);
        let source = build_measure(&grid, |_| 1.0).unwrap();
        assert!(matches!(pushforward(&d, &source.points, &source.masses, &grid), Err(OpticsError::ExcessiveLoss(_))));
        let shifted = Grid2::new(4, 4, 1.0, 2.0, 0.0, 1.0).unwrap();
        let push = pushforward(&d, &source.points, &source.masses, &shifted).unwrap();
        assert!((push.measure.masses.iter().zip(&source.masses).map(|(a, b)| (a - b).abs()).sum::<f64>()) < 1e-12);
    }

    #[test]
    fn stratified_rays_are_normalized_and_seeded() {
        let grid = Grid2::unit_square(5).unwrap();
        let density = |p: &Vector2<f64>| 1.0 + p.x;
        let (p1, w1) = stratified_rays(&grid, &density, 1000, 42);
        let (p2, w2) = stratified_rays(&grid, &density, 1000, 42);
        assert_eq!(p1.len(), 1000);
        assert_eq!(p1, p2);
        assert_eq!(w1, w2);
        assert!((w1.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let (p3, _) = stratified_rays(&grid, &density, 1000, 7);
        assert_ne!(p1, p3);
    }
}
