//! Planar domains, graph surfaces, incident ray fields and the map that sends
//! a source point to the place where its ray meets the first metasurface.

use std::fmt;
use std::ops::{Add, Mul};
use std::path::Path;

use nalgebra::{Matrix2, Vector2, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("grid needs at least 2x2 nodes, got {0}x{1}")]
    GridTooSmall(usize, usize),
    #[error("degenerate domain bounds [{0}, {1}] x [{2}, {3}]")]
    BadBounds(f64, f64, f64, f64),
    #[error("density evaluates to zero at every node")]
    AllZeroDensity,
    #[error("density is negative ({value}) at node {node}")]
    NegativeDensity { node: usize, value: f64 },
    #[error("point source must lie below the source plane (p3 < 0), got p3 = {0}")]
    InvalidSource(f64),
    #[error("ray from ({0}, {1}) does not meet the surface within t_max = {2}")]
    NoIntersection(f64, f64, f64),
    #[error("ray from ({0}, {1}) crosses the surface {2} times")]
    MultipleIntersections(f64, f64, usize),
    #[error("surface file: {0}")]
    SurfaceFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GeometryError>;

/// Node-centred rectangular grid with trapezoidal quadrature weights.
///
/// Nodes are stored row-major: node `iy * nx + ix` sits at
/// `(x_min + ix * hx, y_min + iy * hy)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2 {
    pub nx: usize,
    pub ny: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    nodes: Vec<Vector2<f64>>,
    weights: Vec<f64>,
}

impl Grid2 {
    pub fn new(nx: usize, ny: usize, x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(GeometryError::GridTooSmall(nx, ny));
        }
        if !(x_max > x_min && y_max > y_min) || ![x_min, x_max, y_min, y_max].iter().all(|v| v.is_finite()) {
            return Err(GeometryError::BadBounds(x_min, x_max, y_min, y_max));
        }
        let hx = (x_max - x_min) / (nx - 1) as f64;
        let hy = (y_max - y_min) / (ny - 1) as f64;
        let mut nodes = Vec::with_capacity(nx * ny);
        let mut weights = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            for ix in 0..nx {
                nodes.push(Vector2::new(x_min + ix as f64 * hx, y_min + iy as f64 * hy));
                let wx = if ix == 0 || ix == nx - 1 { 0.5 } else { 1.0 };
                let wy = if iy == 0 || iy == ny - 1 { 0.5 } else { 1.0 };
                weights.push(wx * wy * hx * hy);
            }
        }
        Ok(Self { nx, ny, x_min, x_max, y_min, y_max, nodes, weights })
    }

    /// Centroid of the dual cell of node `k`: the node itself in the
    /// interior, a quarter spacing inward along each boundary axis.
    pub fn dual_centroid(&self, k: usize) -> Vector2<f64> {
        let (hx, hy) = self.spacing();
        let (ix, iy) = (k % self.nx, k / self.nx);
        let shift = |i: usize, n: usize, h: f64| match i {
            0 => 0.25 * h,
            i if i == n - 1 => -0.25 * h,
            _ => 0.0,
        };
        self.nodes[k] + Vector2::new(shift(ix, self.nx, hx), shift(iy, self.ny, hy))
    }

    pub fn unit_square(n: usize) -> Result<Self> {
        Self::new(n, n, 0.0, 1.0, 0.0, 1.0)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Vector2<f64>] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn node(&self, ix: usize, iy: usize) -> Vector2<f64> {
        self.nodes[iy * self.nx + ix]
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn spacing(&self) -> (f64, f64) {
        ((self.x_max - self.x_min) / (self.nx - 1) as f64, (self.y_max - self.y_min) / (self.ny - 1) as f64)
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn diameter(&self) -> f64 {
        (self.x_max - self.x_min).hypot(self.y_max - self.y_min)
    }

    pub fn contains(&self, p: &Vector2<f64>, tol: f64) -> bool {
        p.x >= self.x_min - tol && p.x <= self.x_max + tol && p.y >= self.y_min - tol && p.y <= self.y_max + tol
    }

    /// Same node layout (counts and bounds), ignoring floating noise.
    pub fn same_layout(&self, other: &Grid2) -> bool {
        let tol = 1e-12 * self.diameter().max(1.0);
        self.nx == other.nx
            && self.ny == other.ny
            && (self.x_min - other.x_min).abs() <= tol
            && (self.x_max - other.x_max).abs() <= tol
            && (self.y_min - other.y_min).abs() <= tol
            && (self.y_max - other.y_max).abs() <= tol
    }

    /// Cell containing `p` (clamped to the grid) and local coordinates.
    /// Local coordinates are not clamped, so points outside the grid are
    /// extrapolated from the nearest boundary cell.
    pub fn locate(&self, p: &Vector2<f64>) -> (usize, usize, f64, f64) {
        let (hx, hy) = self.spacing();
        let fx = (p.x - self.x_min) / hx;
        let fy = (p.y - self.y_min) / hy;
        let ix = (fx.floor().max(0.0) as usize).min(self.nx - 2);
        let iy = (fy.floor().max(0.0) as usize).min(self.ny - 2);
        (ix, iy, fx - ix as f64, fy - iy as f64)
    }

    /// Index of the node whose dual cell contains `p`, if `p` is in the
    /// domain (within `tol`).
    pub fn nearest_node(&self, p: &Vector2<f64>, tol: f64) -> Option<usize> {
        if !self.contains(p, tol) {
            return None;
        }
        let (hx, hy) = self.spacing();
        let ix = ((p.x - self.x_min) / hx).round().clamp(0.0, (self.nx - 1) as f64) as usize;
        let iy = ((p.y - self.y_min) / hy).round().clamp(0.0, (self.ny - 1) as f64) as usize;
        Some(self.index(ix, iy))
    }

    /// Bilinear interpolation of nodal values.
    pub fn interpolate<T>(&self, values: &[T], p: &Vector2<f64>) -> T
    where
        T: Copy + Add<Output = T> + Mul<f64, Output = T>,
    {
        let (ix, iy, tx, ty) = self.locate(p);
        let i00 = self.index(ix, iy);
        let i10 = i00 + 1;
        let i01 = i00 + self.nx;
        let i11 = i01 + 1;
        values[i00] * ((1.0 - tx) * (1.0 - ty))
            + values[i10] * (tx * (1.0 - ty))
            + values[i01] * ((1.0 - tx) * ty)
            + values[i11] * (tx * ty)
    }

    /// Bilinear interpolation of a vector field together with its Jacobian
    /// (rows: output components, columns: d/dx, d/dy).
    pub fn interpolate_with_jacobian(&self, values: &[Vector2<f64>], p: &Vector2<f64>) -> (Vector2<f64>, Matrix2<f64>) {
        let (hx, hy) = self.spacing();
        let (ix, iy, tx, ty) = self.locate(p);
        let i00 = self.index(ix, iy);
        let (v00, v10, v01, v11) = (values[i00], values[i00 + 1], values[i00 + self.nx], values[i00 + self.nx + 1]);
        let value =
            v00 * ((1.0 - tx) * (1.0 - ty)) + v10 * (tx * (1.0 - ty)) + v01 * ((1.0 - tx) * ty) + v11 * (tx * ty);
        let d_dx = ((v10 - v00) * (1.0 - ty) + (v11 - v01) * ty) / hx;
        let d_dy = ((v01 - v00) * (1.0 - tx) + (v11 - v10) * tx) / hy;
        (value, Matrix2::from_columns(&[d_dx, d_dy]))
    }
}

/// Heights sampled on a rectangular grid, bilinear between nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledField {
    pub grid: Grid2,
    pub values: Vec<f64>,
}

impl SampledField {
    pub fn new(grid: Grid2, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(GeometryError::SurfaceFile(format!("expected {} samples, found {}", grid.len(), values.len())));
        }
        Ok(Self { grid, values })
    }

    pub fn eval(&self, p: &Vector2<f64>) -> f64 {
        self.grid.interpolate(&self.values, p)
    }

    pub fn grad(&self, p: &Vector2<f64>) -> Vector2<f64> {
        let (hx, hy) = self.grid.spacing();
        let (ix, iy, tx, ty) = self.grid.locate(p);
        let i00 = self.grid.index(ix, iy);
        let nx = self.grid.nx;
        let (v00, v10, v01, v11) =
            (self.values[i00], self.values[i00 + 1], self.values[i00 + nx], self.values[i00 + nx + 1]);
        Vector2::new(
            ((v10 - v00) * (1.0 - ty) + (v11 - v01) * ty) / hx,
            ((v01 - v00) * (1.0 - tx) + (v11 - v10) * tx) / hy,
        )
    }

    /// Parse the grid file format:
    /// `# surface nx=<int> ny=<int> x0=<float> x1=<float> y0=<float> y1=<float>`
    /// followed by row-major comma separated samples.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| GeometryError::SurfaceFile("empty file".into()))?;
        let header = header
            .trim()
            .strip_prefix('#')
            .map(str::trim)
            .and_then(|h| h.strip_prefix("surface"))
            .ok_or_else(|| GeometryError::SurfaceFile(format!("bad header line: {header}")))?;
        let mut dims = [None::<usize>; 2];
        let mut bounds = [None::<f64>; 4];
        for token in header.split_whitespace() {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| GeometryError::SurfaceFile(format!("bad header token: {token}")))?;
            let bad = || GeometryError::SurfaceFile(format!("bad value for {key}: {value}"));
            match key {
                "nx" => dims[0] = Some(value.parse().map_err(|_| bad())?),
                "ny" => dims[1] = Some(value.parse().map_err(|_| bad())?),
                "x0" => bounds[0] = Some(value.parse().map_err(|_| bad())?),
                "x1" => bounds[1] = Some(value.parse().map_err(|_| bad())?),
                "y0" => bounds[2] = Some(value.parse().map_err(|_| bad())?),
                "y1" => bounds[3] = Some(value.parse().map_err(|_| bad())?),
                _ => return Err(GeometryError::SurfaceFile(format!("unknown header key: {key}"))),
            }
        }
        let missing = |name: &str| GeometryError::SurfaceFile(format!("header is missing {name}"));
        let nx = dims[0].ok_or_else(|| missing("nx"))?;
        let ny = dims[1].ok_or_else(|| missing("ny"))?;
        let [x0, x1, y0, y1] = [
            bounds[0].ok_or_else(|| missing("x0"))?,
            bounds[1].ok_or_else(|| missing("x1"))?,
            bounds[2].ok_or_else(|| missing("y0"))?,
            bounds[3].ok_or_else(|| missing("y1"))?,
        ];
        let grid = Grid2::new(nx, ny, x0, x1, y0, y1)?;
        let mut values = Vec::with_capacity(nx * ny);
        for line in lines {
            if line.trim_start().starts_with('#') {
                continue;
            }
            for field in line.split(',') {
                let field = field.trim();
                if field.is_empty() {
                    continue;
                }
                values.push(
                    field.parse::<f64>().map_err(|_| GeometryError::SurfaceFile(format!("bad sample: {field}")))?,
                );
            }
        }
        Self::new(grid, values)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// A graph surface `z = h(x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Surface {
    Constant(f64),
    /// `offset + slope . x`
    Affine {
        offset: f64,
        slope: Vector2<f64>,
    },
    /// `offset + curvature * |x - center|^2`
    Paraboloid {
        offset: f64,
        curvature: f64,
        center: Vector2<f64>,
    },
    /// `offset + amplitude * exp(-|x - center|^2 / (2 sigma^2))`
    Gaussian {
        offset: f64,
        amplitude: f64,
        sigma: f64,
        center: Vector2<f64>,
    },
    Sampled(SampledField),
}

impl Surface {
    pub fn eval(&self, p: &Vector2<f64>) -> f64 {
        match self {
            Surface::Constant(h) => *h,
            Surface::Affine { offset, slope } => offset + slope.dot(p),
            Surface::Paraboloid { offset, curvature, center } => offset + curvature * (p - center).norm_squared(),
            Surface::Gaussian { offset, amplitude, sigma, center } => {
                offset + amplitude * (-(p - center).norm_squared() / (2.0 * sigma * sigma)).exp()
            }
            Surface::Sampled(s) => s.eval(p),
        }
    }

    pub fn grad(&self, p: &Vector2<f64>) -> Vector2<f64> {
        match self {
            Surface::Constant(_) => Vector2::zeros(),
            Surface::Affine { slope, .. } => *slope,
            Surface::Paraboloid { curvature, center, .. } => (p - center) * (2.0 * curvature),
            Surface::Gaussian { amplitude, sigma, center, .. } => {
                let d = p - center;
                let s2 = sigma * sigma;
                d * (-amplitude / s2 * (-d.norm_squared() / (2.0 * s2)).exp())
            }
            Surface::Sampled(s) => s.grad(p),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Surface::Constant(_))
    }

    pub fn is_sampled(&self) -> bool {
        matches!(self, Surface::Sampled(_))
    }
}

/// Scalar density catalog used for the source and target measures.
#[derive(Debug, Clone, PartialEq)]
pub enum Density {
    Uniform,
    /// `exp(-|x - center|^2 / (2 sigma^2))`
    Gaussian {
        sigma: f64,
        center: Vector2<f64>,
    },
    /// `offset + x[axis]`
    Ramp {
        axis: usize,
        offset: f64,
    },
    /// `1 + a |x - center|^2`
    Paraboloid {
        a: f64,
        center: Vector2<f64>,
    },
    Sampled(SampledField),
}

impl Density {
    pub fn eval(&self, p: &Vector2<f64>) -> f64 {
        match self {
            Density::Uniform => 1.0,
            Density::Gaussian { sigma, center } => (-(p - center).norm_squared() / (2.0 * sigma * sigma)).exp(),
            Density::Ramp { axis, offset } => offset + p[*axis],
            Density::Paraboloid { a, center } => 1.0 + a * (p - center).norm_squared(),
            Density::Sampled(s) => s.eval(p),
        }
    }
}

/// Weighted point cloud with unit total mass and strictly positive masses.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    pub points: Vec<Vector2<f64>>,
    pub masses: Vec<f64>,
    /// Grid node each point came from, when built from a grid.
    pub nodes: Vec<usize>,
}

impl DiscreteMeasure {
    /// Normalizes `masses`, dropping entries below `1e-14 * max`.
    pub fn from_weighted(points: Vec<Vector2<f64>>, masses: Vec<f64>) -> Result<Self> {
        let nodes = (0..points.len()).collect();
        Self::from_parts(points, masses, nodes)
    }

    fn from_parts(points: Vec<Vector2<f64>>, masses: Vec<f64>, nodes: Vec<usize>) -> Result<Self> {
        if let Some((node, &value)) = masses.iter().enumerate().find(|(_, m)| **m < 0.0 || m.is_nan()) {
            return Err(GeometryError::NegativeDensity { node, value });
        }
        let max = masses.iter().cloned().fold(0.0, f64::max);
        if max <= 0.0 {
            return Err(GeometryError::AllZeroDensity);
        }
        let cutoff = 1e-14 * max;
        let keep: Vec<usize> = (0..masses.len()).filter(|&i| masses[i] > cutoff).collect();
        let total: f64 = keep.iter().map(|&i| masses[i]).sum();
        Ok(Self {
            points: keep.iter().map(|&i| points[i]).collect(),
            masses: keep.iter().map(|&i| masses[i] / total).collect(),
            nodes: keep.iter().map(|&i| nodes[i]).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn centroid(&self) -> Vector2<f64> {
        self.points.iter().zip(&self.masses).fold(Vector2::zeros(), |acc, (p, m)| acc + p * *m)
    }
}

/// Discretizes `density dx` on the grid nodes (mass = density * weight).
pub fn build_measure(grid: &Grid2, density: impl Fn(&Vector2<f64>) -> f64) -> Result<DiscreteMeasure> {
    let masses: Vec<f64> = grid
        .nodes()
        .iter()
        .zip(grid.weights())
        .enumerate()
        .map(|(i, (p, w))| {
            let d = density(p);
            if d < 0.0 || d.is_nan() {
                Err(GeometryError::NegativeDensity { node: i, value: d })
            } else {
                Ok(d * w)
            }
        })
        .collect::<Result<_>>()?;
    DiscreteMeasure::from_parts(grid.nodes().to_vec(), masses, (0..grid.len()).collect())
}

/// Field of unit incident directions on the source plane `z = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IncidentField {
    Collimated,
    PointSource(Vector3<f64>),
}

impl IncidentField {
    pub fn point_source(p: Vector3<f64>) -> Result<Self> {
        if !(p.z < 0.0) {
            return Err(GeometryError::InvalidSource(p.z));
        }
        Ok(IncidentField::PointSource(p))
    }

    pub fn direction(&self, x: &Vector2<f64>) -> Vector3<f64> {
        match self {
            IncidentField::Collimated => Vector3::z(),
            IncidentField::PointSource(p) => Vector3::new(x.x - p.x, x.y - p.y, -p.z).normalize(),
        }
    }

    /// Planar displacement per unit height along the ray, `(e1, e2) / e3`,
    /// and its derivative with respect to `x`.
    fn slope_and_derivative(&self, x: &Vector2<f64>) -> (Vector2<f64>, Matrix2<f64>) {
        match self {
            IncidentField::Collimated => (Vector2::zeros(), Matrix2::zeros()),
            IncidentField::PointSource(p) => {
                let depth = -p.z;
                (Vector2::new(x.x - p.x, x.y - p.y) / depth, Matrix2::identity() / depth)
            }
        }
    }
}

impl fmt::Display for IncidentField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IncidentField::Collimated => write!(f, "collimated"),
            IncidentField::PointSource(p) => write!(f, "point {} {} {}", p.x, p.y, p.z),
        }
    }
}

/// Sends a source point `x` to the planar coordinates of the point where
/// the ray `(x, 0) + t e(x)` meets `z = f`.
#[derive(Debug, Clone)]
pub struct PhiMap {
    pub field: IncidentField,
    pub surface: Surface,
    pub t_max: f64,
    pub fd_step: f64,
}

const SCAN_INTERVALS: usize = 64;

impl PhiMap {
    /// Bracket `[0, 2 max f / min e3]` and finite-difference step
    /// `1e-4 * diameter`, both taken over the nodes of `domain`.
    pub fn new(field: IncidentField, surface: Surface, domain: &Grid2) -> Self {
        let (max_f, min_e3) = domain
            .nodes()
            .iter()
            .fold((0.0_f64, 1.0_f64), |(mf, me), x| (mf.max(surface.eval(x)), me.min(field.direction(x).z)));
        let t_max = 2.0 * max_f.max(1e-12) / min_e3;
        Self { field, surface, t_max, fd_step: 1e-4 * domain.diameter() }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.field, IncidentField::Collimated)
    }

    /// Ray parameter of the intersection, by sign-change scan, bisection
    /// and a short Newton polish.
    fn hit_parameter(&self, x: &Vector2<f64>) -> Result<f64> {
        let e = self.field.direction(x);
        let planar = Vector2::new(e.x, e.y);
        let gap = |t: f64| t * e.z - self.surface.eval(&(x + planar * t));
        let g0 = gap(0.0);
        if g0.abs() <= 1e-14 {
            return Ok(0.0);
        }
        if g0 > 0.0 {
            return Err(GeometryError::NoIntersection(x.x, x.y, self.t_max));
        }
        let dt = self.t_max / SCAN_INTERVALS as f64;
        let mut crossings = Vec::new();
        let mut prev = g0;
        for k in 1..=SCAN_INTERVALS {
            let t = k as f64 * dt;
            let cur = gap(t);
            if (prev < 0.0) != (cur < 0.0) || cur == 0.0 {
                crossings.push(((k - 1) as f64 * dt, t));
            }
            prev = cur;
        }
        let (mut lo, mut hi) = match crossings.len() {
            0 => return Err(GeometryError::NoIntersection(x.x, x.y, self.t_max)),
            1 => crossings[0],
            n => return Err(GeometryError::MultipleIntersections(x.x, x.y, n)),
        };
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if gap(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-16 * self.t_max {
                break;
            }
        }
        let mut t = 0.5 * (lo + hi);
        for _ in 0..3 {
            let slope = e.z - self.surface.grad(&(x + planar * t)).dot(&planar);
            if slope.abs() < 1e-300 {
                break;
            }
            let next = t - gap(t) / slope;
            if next >= lo - dt && next <= hi + dt {
                t = next;
            }
        }
        Ok(t)
    }

    pub fn map(&self, x: &Vector2<f64>) -> Result<Vector2<f64>> {
        match (&self.field, &self.surface) {
            (IncidentField::Collimated, _) => Ok(*x),
            (_, Surface::Constant(h)) => Ok(x + self.field.slope_and_derivative(x).0 * *h),
            _ => {
                let e = self.field.direction(x);
                let t = self.hit_parameter(x)?;
                Ok(x + Vector2::new(e.x, e.y) * t)
            }
        }
    }

    /// `phi(x)` and its Jacobian.
    pub fn eval(&self, x: &Vector2<f64>) -> Result<(Vector2<f64>, Matrix2<f64>)> {
        match (&self.field, &self.surface) {
            (IncidentField::Collimated, _) => Ok((*x, Matrix2::identity())),
            (_, Surface::Constant(h)) => {
                let (slope, dslope) = self.field.slope_and_derivative(x);
                Ok((x + slope * *h, Matrix2::identity() + dslope * *h))
            }
            _ => {
                let center = self.map(x)?;
                let s = self.fd_step;
                let mut jac = Matrix2::zeros();
                for axis in 0..2 {
                    let mut step = Vector2::zeros();
                    step[axis] = s;
                    let d = (self.map(&(x + step))? - self.map(&(x - step))?) / (2.0 * s);
                    jac.set_column(axis, &d);
                }
                Ok((center, jac))
            }
        }
    }
}

/// Checks at grid resolution that no two nodes are sent within `tol` of
/// each other; returns the offending node pairs.
pub fn phi_collisions(images: &[Vector2<f64>], tol: f64) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..images.len()).collect();
    order.sort_by(|&a, &b| images[a].x.total_cmp(&images[b].x));
    let mut hits = Vec::new();
    for (k, &a) in order.iter().enumerate() {
        for &b in &order[k + 1..] {
            if images[b].x - images[a].x > tol {
                break;
            }
            if (images[a] - images[b]).norm() <= tol {
                hits.push((a.min(b), a.max(b)));
            }
        }
    }
    hits
}
