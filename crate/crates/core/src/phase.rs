//! Phase-discontinuity gradients from a transport solution, and their
//! integration to scalar phases.
//!
//! Phases are stored in optical-path units (the units of the cost); multiply
//! by the free-space wavenumber for radians.

use nalgebra::{Matrix2, Vector2};
use thiserror::Error;

use crate::cost::{slope_projector, CostMode, CostModel, Footprint};
use crate::geometry::{phi_collisions, Grid2};
use crate::ot::{OtError, TransportSolution};

#[derive(Debug, Error)]
pub enum PhaseError {
    #[error(transparent)]
    Ot(#[from] OtError),
    #[error("cost model is in {0} mode")]
    WrongMode(&'static str),
    #[error("J_phi is singular at source point ({0}, {1})")]
    SingularJacobian(f64, f64),
    #[error("sources {0} and {1} are sent to targets closer than 1e-9")]
    NonInjectiveTargetSampling(usize, usize),
    #[error("the two expressions for the second phase disagree by {0:e} at source {1}")]
    InconsistentRoutes(f64, usize),
    #[error("conjugate gradients did not converge in {0} iterations")]
    SolverDiverged(usize),
    #[error("field has {got} samples, grid has {expected} nodes")]
    SizeMismatch { got: usize, expected: usize },
}

pub type Result<T> = std::result::Result<T, PhaseError>;

/// Tolerance on the agreement of the two expressions for the second phase.
pub const ROUTE_TOL: f64 = 1e-10;
/// Targets closer than this make the second phase multivalued.
pub const TARGET_SEPARATION: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceId {
    S1,
    S2,
}

impl std::fmt::Display for SurfaceId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SurfaceId::S1 => "S1",
            SurfaceId::S2 => "S2",
        })
    }
}

/// Phase gradient sampled at points of one metasurface.
#[derive(Debug, Clone)]
pub struct PhaseField {
    pub surface: SurfaceId,
    /// Planar coordinates of the samples on the surface.
    pub points: Vec<Vector2<f64>>,
    /// Surface slope at each sample.
    pub slopes: Vec<Vector2<f64>>,
    /// `(Phi_x1, Phi_x2)`
    pub grad2: Vec<Vector2<f64>>,
    /// `Phi_x3 = grad2 . slope`
    pub grad3: Vec<f64>,
}

impl PhaseField {
    fn new(surface: SurfaceId, points: Vec<Vector2<f64>>, slopes: Vec<Vector2<f64>>, grad2: Vec<Vector2<f64>>) -> Self {
        let grad3 = grad2.iter().zip(&slopes).map(|(g, s)| g.dot(s)).collect();
        Self { surface, points, slopes, grad2, grad3 }
    }

    /// `-Phi_x1 h_x1 - Phi_x2 h_x2 + Phi_x3` at every sample.
    pub fn tangentiality_residual(&self) -> f64 {
        self.grad2
            .iter()
            .zip(&self.slopes)
            .zip(&self.grad3)
            .map(|((g, s), g3)| (g3 - g.dot(s)).abs())
            .fold(0.0, f64::max)
    }
}

/// How a plan row is turned into one target point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetRule {
    /// Heaviest column; diffuse rows are an error.
    Argmax,
    /// Plan-weighted mean of the row's targets.
    Barycentric,
}

pub fn assigned_targets(
    sol: &TransportSolution,
    col_points: &[Vector2<f64>],
    rule: TargetRule,
) -> Result<Vec<Vector2<f64>>> {
    Ok(match rule {
        TargetRule::Argmax => sol.map_targets(col_points)?,
        TargetRule::Barycentric => sol.barycentric_targets(col_points),
    })
}

fn inverse_transpose(fp: &Footprint) -> Result<Matrix2<f64>> {
    fp.jacobian.transpose().try_inverse().ok_or(PhaseError::SingularJacobian(fp.x.x, fp.x.y))
}

/// `(Phi_x1, Phi_x2)` on the first surface for a ray from `fp` assigned to `y`:
/// `P_f (n2 J_phi^-T D psi + n1 e3 grad f + n1 (e1, e2))` with
/// `D psi = D_x c(x, y)`.
pub fn first_phase_gradient(model: &CostModel, fp: &Footprint, y: &Vector2<f64>) -> Result<Vector2<f64>> {
    let e = model.phi.field.direction(&fp.x);
    let d_psi = model.grad_x_at(fp, y);
    let inner =
        inverse_transpose(fp)? * d_psi * model.n2 + fp.slope * (model.n1 * e.z) + Vector2::new(e.x, e.y) * model.n1;
    Ok(slope_projector(&fp.slope) * inner)
}

/// `(Psi_x1, Psi_x2)` on the second surface at `y`, by both expressions:
/// from `D psi` with the height correction, and from `D_y c`.
pub fn second_phase_gradient_routes(
    model: &CostModel,
    fp: &Footprint,
    y: &Vector2<f64>,
) -> Result<(Vector2<f64>, Vector2<f64>)> {
    let n3 = match &model.mode {
        CostMode::Double { n3, .. } => *n3,
        CostMode::Single { .. } => return Err(PhaseError::WrongMode("single")),
    };
    let grad_g = model.target_slope(y);
    let dz = model.target_height(y) - fp.height;
    let c = model.cost_at(fp, y);
    let projector = slope_projector(&grad_g);
    let d_psi = model.grad_x_at(fp, y);
    let via_potential = projector
        * (inverse_transpose(fp)? * d_psi * (-model.n2) + (grad_g - fp.slope) * (model.n2 * dz / c) - grad_g * n3);
    let via_target = projector * (model.grad_y_at(fp, y) * model.n2 - grad_g * n3);
    Ok((via_potential, via_target))
}

/// First-surface phase gradient at every source point.
pub fn recover_phase_single(model: &CostModel, sources: &[Footprint], targets: &[Vector2<f64>]) -> Result<PhaseField> {
    if model.is_double() {
        return Err(PhaseError::WrongMode("double"));
    }
    first_surface(model, sources, targets)
}

fn first_surface(model: &CostModel, sources: &[Footprint], targets: &[Vector2<f64>]) -> Result<PhaseField> {
    let grad2 = sources.iter().zip(targets).map(|(fp, y)| first_phase_gradient(model, fp, y)).collect::<Result<_>>()?;
    Ok(PhaseField::new(
        SurfaceId::S1,
        sources.iter().map(|fp| fp.hit).collect(),
        sources.iter().map(|fp| fp.slope).collect(),
        grad2,
    ))
}

/// Phase gradients on both surfaces of a doublet. The second-surface samples
/// sit at the assigned targets, in source order.
pub fn recover_phases_double(
    model: &CostModel,
    sources: &[Footprint],
    targets: &[Vector2<f64>],
) -> Result<(PhaseField, PhaseField)> {
    if !model.is_double() {
        return Err(PhaseError::WrongMode("single"));
    }
    if let Some(&(a, b)) = phi_collisions(targets, TARGET_SEPARATION).first() {
        return Err(PhaseError::NonInjectiveTargetSampling(a, b));
    }
    let s1 = first_surface(model, sources, targets)?;
    let mut grad2 = Vec::with_capacity(sources.len());
    for (i, (fp, y)) in sources.iter().zip(targets).enumerate() {
        let (a, b) = second_phase_gradient_routes(model, fp, y)?;
        let gap = (a - b).norm();
        if gap > ROUTE_TOL * (1.0 + b.norm()) {
            return Err(PhaseError::InconsistentRoutes(gap, i));
        }
        grad2.push(b);
    }
    let slopes = targets.iter().map(|y| model.target_slope(y)).collect();
    let s2 = PhaseField::new(SurfaceId::S2, targets.to_vec(), slopes, grad2);
    Ok((s1, s2))
}

/// Planar gradient of `x -> Phi(x, h(x))`: `grad2 + Phi_x3 grad h`.
pub fn compose_surface_gradient(pf: &PhaseField) -> Vec<Vector2<f64>> {
    pf.grad2.iter().zip(&pf.grad3).zip(&pf.slopes).map(|((g, g3), s)| g + s * *g3).collect()
}

/// Nearest-sample value at every grid node, and the largest node-to-sample
/// distance used.
pub fn regrid_nearest(points: &[Vector2<f64>], values: &[Vector2<f64>], grid: &Grid2) -> (Vec<Vector2<f64>>, f64) {
    let mut max_dist: f64 = 0.0;
    let out = grid
        .nodes()
        .iter()
        .map(|node| {
            let mut best = (f64::INFINITY, 0);
            for (k, p) in points.iter().enumerate() {
                let d = (p - node).norm_squared();
                if d < best.0 {
                    best = (d, k);
                }
            }
            max_dist = max_dist.max(best.0.sqrt());
            values[best.1]
        })
        .collect();
    (out, max_dist)
}

/// Resamples values known at the dual-cell centroids of `grid` onto its
/// nodes. Interior centroids are nodes; boundary values are extrapolated
/// linearly along each axis from the two centroids nearest the boundary.
pub fn centroid_values_to_nodes(grid: &Grid2, values: &[Vector2<f64>]) -> Vec<Vector2<f64>> {
    let (hx, hy) = grid.spacing();
    let mut out = values.to_vec();
    let axis_fix = |out: &mut Vec<Vector2<f64>>, n: usize, h: f64, index: &dyn Fn(usize) -> usize| {
        // centroid offsets from the nodes along this axis
        let offset = |i: usize| match i {
            0 => 0.25 * h,
            i if i == n - 1 => -0.25 * h,
            _ => 0.0,
        };
        let (v0, v1) = (out[index(0)], out[index(1)]);
        let t = -offset(0) / (h + offset(1) - offset(0));
        let (w0, w1) = (out[index(n - 2)], out[index(n - 1)]);
        let s = -offset(n - 1) / (h + offset(n - 1) - offset(n - 2));
        out[index(0)] = v0 + (v1 - v0) * t;
        out[index(n - 1)] = w1 + (w1 - w0) * s;
    };
    for iy in 0..grid.ny {
        axis_fix(&mut out, grid.nx, hx, &|ix| grid.index(ix, iy));
    }
    for ix in 0..grid.nx {
        axis_fix(&mut out, grid.ny, hy, &|iy| grid.index(ix, iy));
    }
    out
}

#[derive(Debug, Clone)]
pub struct IntegratedPhase {
    /// Mean-zero scalar phase at the grid nodes.
    pub values: Vec<f64>,
    /// `d1 F2 - d2 F1` per grid cell, row-major over `(nx - 1) x (ny - 1)`.
    pub curl_residual: Vec<f64>,
    /// Set when `max |curl| > 0.1 max |F| / diameter`.
    pub curl_warning: bool,
    pub iterations: usize,
}

impl IntegratedPhase {
    pub fn max_curl(&self) -> f64 {
        self.curl_residual.iter().fold(0.0, |a, c| a.max(c.abs()))
    }
}

/// Least-squares potential of a gradient field on a grid.
///
/// Minimizes the sum over grid edges of `((u_b - u_a) / h - t_ab)^2`, where
/// `t_ab` is the trapezoid average of the field's edge component. The normal
/// equations are the Neumann graph Laplacian, solved by conjugate gradients
/// in the mean-zero subspace.
pub fn integrate_gradient(field: &[Vector2<f64>], grid: &Grid2) -> Result<IntegratedPhase> {
    let n = grid.len();
    if field.len() != n {
        return Err(PhaseError::SizeMismatch { got: field.len(), expected: n });
    }
    let (nx, ny) = (grid.nx, grid.ny);
    let (hx, hy) = grid.spacing();
    let (wx, wy) = (1.0 / (hx * hx), 1.0 / (hy * hy));

    let mut rhs = vec![0.0; n];
    for iy in 0..ny {
        for ix in 0..nx {
            let a = grid.index(ix, iy);
            if ix + 1 < nx {
                let b = a + 1;
                let t = 0.5 * (field[a].x + field[b].x) / hx;
                rhs[b] += t;
                rhs[a] -= t;
            }
            if iy + 1 < ny {
                let b = a + nx;
                let t = 0.5 * (field[a].y + field[b].y) / hy;
                rhs[b] += t;
                rhs[a] -= t;
            }
        }
    }
    let apply = |u: &[f64], out: &mut [f64]| {
        out.iter_mut().for_each(|o| *o = 0.0);
        for iy in 0..ny {
            for ix in 0..nx {
                let a = iy * nx + ix;
                if ix + 1 < nx {
                    let d = wx * (u[a + 1] - u[a]);
                    out[a] -= d;
                    out[a + 1] += d;
                }
                if iy + 1 < ny {
                    let d = wy * (u[a + nx] - u[a]);
                    out[a] -= d;
                    out[a + nx] += d;
                }
            }
        }
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    // apply() is the negative Laplacian with the opposite sign convention;
    // solve -L u = -rhs so the operator is positive semidefinite.
    let b: Vec<f64> = rhs.iter().map(|r| -r).collect();
    let b_norm = dot(&b, &b).sqrt();
    let mut u = vec![0.0; n];
    let mut iterations = 0;
    if b_norm > 0.0 {
        let tol = 1e-12 * b_norm;
        let mut r = b.clone();
        let mut p = r.clone();
        let mut ap = vec![0.0; n];
        let mut rr = dot(&r, &r);
        let cap = 10 * n;
        loop {
            if rr.sqrt() <= tol {
                break;
            }
            if iterations >= cap {
                return Err(PhaseError::SolverDiverged(iterations));
            }
            apply(&p, &mut ap);
            ap.iter_mut().for_each(|v| *v = -*v);
            let alpha = rr / dot(&p, &ap);
            for k in 0..n {
                u[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            let rr_next = dot(&r, &r);
            let beta = rr_next / rr;
            for k in 0..n {
                p[k] = r[k] + beta * p[k];
            }
            rr = rr_next;
            iterations += 1;
        }
        let mean = u.iter().sum::<f64>() / n as f64;
        u.iter_mut().for_each(|v| *v -= mean);
    }

    let mut curl_residual = Vec::with_capacity((nx - 1) * (ny - 1));
    for iy in 0..ny - 1 {
        for ix in 0..nx - 1 {
            let a = grid.index(ix, iy);
            let (f00, f10, f01, f11) = (field[a], field[a + 1], field[a + nx], field[a + nx + 1]);
            let d1f2 = (f10.y + f11.y - f00.y - f01.y) / (2.0 * hx);
            let d2f1 = (f01.x + f11.x - f00.x - f10.x) / (2.0 * hy);
            curl_residual.push(d1f2 - d2f1);
        }
    }
    let max_field = field.iter().fold(0.0_f64, |a, v| a.max(v.norm()));
    let max_curl = curl_residual.iter().fold(0.0_f64, |a, c| a.max(c.abs()));
    let curl_warning = max_curl > 0.1 * max_field / grid.diameter();
    Ok(IntegratedPhase { values: u, curl_residual, curl_warning, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{IncidentField, PhiMap, Surface};

    fn collimated(f: Surface) -> PhiMap {
        PhiMap::new(IncidentField::Collimated, f, &Grid2::unit_square(3).unwrap())
    }

    #[test]
    fn translation_single() {
        let model = CostModel::single(collimated(Surface::Constant(0.0)), 1.0, 1.0, 1.5).unwrap();
        let x = Vector2::new(0.3, 0.2);
        let fp = model.footprint(&x).unwrap();
        let pf = recover_phase_single(&model, &[fp], &[x + Vector2::new(1.0, 0.0)]).unwrap();
        let expected = Vector2::new(-1.5 / 2f64.sqrt(), 0.0);
        assert!((pf.grad2[0] - expected).norm() < 1e-15);
        assert!((pf.grad2[0].x + 1.060660).abs() < 1e-6);
    }

    #[test]
    fn identity_gives_zero_phase() {
        let model = CostModel::single(collimated(Surface::Constant(0.0)), 2.0, 1.0, 1.5).unwrap();
        let xs = [Vector2::new(0.0, 0.0), Vector2::new(0.5, 1.0)];
        let fps = model.footprints(&xs).unwrap();
        let pf = recover_phase_single(&model, &fps, &xs).unwrap();
        assert!(pf.grad2.iter().all(|g| g.norm() == 0.0));
    }

    #[test]
    fn collimated_flat_reduces_to_scaled_potential_gradient() {
        let model = CostModel::single(collimated(Surface::Constant(0.2)), 3.0, 1.0, 1.7).unwrap();
        let fp = model.footprint(&Vector2::new(0.1, 0.9)).unwrap();
        let y = Vector2::new(-0.4, 1.3);
        let g = first_phase_gradient(&model, &fp, &y).unwrap();
        let expected = model.grad_x_at(&fp, &y) * 1.7;
        assert!((g - expected).abs().max() < 1e-12);
    }

    #[test]
    fn translation_double() {
        let model =
            CostModel::double(collimated(Surface::Constant(0.0)), Surface::Constant(1.0), 1.0, 1.5, 1.0).unwrap();
        let x = Vector2::new(0.0, 0.0);
        let fp = model.footprint(&x).unwrap();
        let (s1, s2) = recover_phases_double(&model, &[fp], &[Vector2::new(1.0, 0.0)]).unwrap();
        let r = 1.5 / 2f64.sqrt();
        assert!((s1.grad2[0] - Vector2::new(-r, 0.0)).norm() < 1e-15);
        assert!((s2.grad2[0] - Vector2::new(r, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn double_routes_agree_on_curved_surfaces() {
        let f = Surface::Paraboloid { offset: 0.1, curvature: 0.2, center: Vector2::new(0.5, 0.5) };
        let g = Surface::Gaussian { offset: 2.0, amplitude: 0.3, sigma: 0.4, center: Vector2::new(0.2, 0.7) };
        let grid = Grid2::unit_square(5).unwrap();
        let phi = PhiMap::new(IncidentField::point_source(nalgebra::Vector3::new(0.4, 0.5, -3.0)).unwrap(), f, &grid);
        let model = CostModel::double(phi, g, 1.0, 1.5, 1.2).unwrap();
        for (x, y) in [((0.1, 0.2), (0.8, 0.3)), ((0.9, 0.9), (0.0, 0.4)), ((0.5, 0.5), (0.5, 0.6))] {
            let fp = model.footprint(&Vector2::new(x.0, x.1)).unwrap();
            let (a, b) = second_phase_gradient_routes(&model, &fp, &Vector2::new(y.0, y.1)).unwrap();
            assert!((a - b).norm() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn repeated_targets_are_rejected() {
        let model =
            CostModel::double(collimated(Surface::Constant(0.0)), Surface::Constant(1.0), 1.0, 1.5, 1.0).unwrap();
        let fps = model.footprints(&[Vector2::new(0.0, 0.0), Vector2::new(1.0, 0.0)]).unwrap();
        let y = Vector2::new(0.5, 0.5);
        assert!(matches!(
            recover_phases_double(&model, &fps, &[y, y]),
            Err(PhaseError::NonInjectiveTargetSampling(0, 1))
        ));
    }

    #[test]
    fn tangentiality_and_composition() {
        let pf = PhaseField::new(
            SurfaceId::S1,
            vec![Vector2::zeros(); 3],
            vec![Vector2::new(1.0, 0.0), Vector2::zeros(), Vector2::new(0.3, -0.7)],
            vec![Vector2::new(1.0, 0.0), Vector2::new(0.4, 0.1), Vector2::zeros()],
        );
        assert!(pf.tangentiality_residual() < 1e-12);
        let composed = compose_surface_gradient(&pf);
        assert_eq!(pf.grad3[0], 1.0);
        assert_eq!(composed[0], Vector2::new(2.0, 0.0));
        assert_eq!(composed[1], Vector2::new(0.4, 0.1));
        assert_eq!(composed[2], Vector2::zeros());
    }

    #[test]
    fn projector_inverts_rank_one_update() {
        let h = Vector2::new(0.7, -1.3);
        let p = slope_projector(&h);
        let prod = p * (Matrix2::identity() + h * h.transpose());
        assert!((prod - Matrix2::identity()).abs().max() < 1e-12);
    }

    #[test]
    fn integrates_quadratic() {
        let grid = Grid2::unit_square(32).unwrap();
        let field: Vec<_> = grid.nodes().iter().map(|p| Vector2::new(2.0 * p.x, 0.0)).collect();
        let out = integrate_gradient(&field, &grid).unwrap();
        let mean = grid.nodes().iter().map(|p| p.x * p.x).sum::<f64>() / grid.len() as f64;
        let err = grid.nodes().iter().zip(&out.values).map(|(p, u)| (p.x * p.x - mean - u).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
        assert!(!out.curl_warning);
    }

    #[test]
    fn zero_field_integrates_to_zero() {
        let grid = Grid2::unit_square(8).unwrap();
        let out = integrate_gradient(&vec![Vector2::zeros(); grid.len()], &grid).unwrap();
        assert!(out.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rotation_has_curl_two() {
        let grid = Grid2::unit_square(16).unwrap();
        let field: Vec<_> = grid.nodes().iter().map(|p| Vector2::new(-p.y, p.x)).collect();
        let out = integrate_gradient(&field, &grid).unwrap();
        assert!(out.curl_residual.iter().all(|c| (c - 2.0).abs() < 1e-12));
        assert!(out.curl_warning);
    }

    #[test]
    fn centroid_resampling_is_exact_for_affine_maps() {
        for (nx, ny) in [(2, 2), (3, 5), (8, 8)] {
            let grid = Grid2::new(nx, ny, -1.0, 1.0, 0.0, 3.0).unwrap();
            let affine = |p: Vector2<f64>| Vector2::new(2.0 * p.x - p.y + 1.0, 0.5 * p.x + 3.0 * p.y);
            let at_centroids: Vec<_> = (0..grid.len()).map(|k| affine(grid.dual_centroid(k))).collect();
            let at_nodes = centroid_values_to_nodes(&grid, &at_centroids);
            for (v, p) in at_nodes.iter().zip(grid.nodes()) {
                assert!((v - affine(*p)).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn regrid_reports_distance() {
        let grid = Grid2::unit_square(2).unwrap();
        let pts = vec![Vector2::new(0.1, 0.0), Vector2::new(1.0, 1.0)];
        let vals = vec![Vector2::new(1.0, 0.0), Vector2::new(2.0, 0.0)];
        let (out, d) = regrid_nearest(&pts, &vals, &grid);
        assert_eq!(out[0].x, 1.0);
        assert_eq!(out[3].x, 2.0);
        assert!((d - 1.0).abs() < 1e-15);
    }
}
