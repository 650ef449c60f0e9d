//! Refraction transport costs for one or two metasurfaces and their
//! derivatives.
//!
//! With `h` the height of the second surface (the plane `z = beta` for a
//! single metasurface, the graph of `g` for a doublet) the cost between a
//! source point `x` and a target point `y` is
//!
//! ```text
//! c(x, y) = sqrt((h(y) - f(phi(x)))^2 + |phi(x) - y|^2)
//! ```
//!
//! Derivatives in `x` factor through `phi`: `D_x c(x, y) = J_phi(x)^T D c'(phi(x), y)`
//! where `c'` is the same expression with `phi` replaced by the identity.

use nalgebra::{Matrix2, SMatrix, SVector, Vector2};
use thiserror::Error;

use crate::geometry::{GeometryError, PhiMap, Surface};

#[derive(Debug, Error)]
pub enum CostError {
    #[error("rank-one update is singular: |1 + v.u| = {0:e}")]
    SingularUpdate(f64),
    #[error("Id + grad g (x) grad f is singular: |1 + grad g . grad f| = {0:e}")]
    SingularA(f64),
    #[error("refractive index {name} must be positive, got {value}")]
    BadIndex { name: &'static str, value: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub type Result<T> = std::result::Result<T, CostError>;

/// What the transported ray meets after the first metasurface.
#[derive(Debug, Clone, PartialEq)]
pub enum CostMode {
    /// Plane `z = beta`.
    Single { beta: f64 },
    /// Second metasurface `z = g(y)` followed by a medium of index `n3`.
    Double { g: Surface, n3: f64 },
}

#[derive(Debug, Clone)]
pub struct CostModel {
    pub mode: CostMode,
    pub f: Surface,
    pub phi: PhiMap,
    pub n1: f64,
    pub n2: f64,
}

/// Per-source-point quantities that every cost evaluation needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Footprint {
    pub x: Vector2<f64>,
    /// `phi(x)`
    pub hit: Vector2<f64>,
    pub jacobian: Matrix2<f64>,
    /// `f(phi(x))`
    pub height: f64,
    /// `grad f(phi(x))`
    pub slope: Vector2<f64>,
}

fn check_index(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(CostError::BadIndex { name, value })
    }
}

impl CostModel {
    pub fn single(phi: PhiMap, beta: f64, n1: f64, n2: f64) -> Result<Self> {
        check_index("n1", n1)?;
        check_index("n2", n2)?;
        Ok(Self { mode: CostMode::Single { beta }, f: phi.surface.clone(), phi, n1, n2 })
    }

    pub fn double(phi: PhiMap, g: Surface, n1: f64, n2: f64, n3: f64) -> Result<Self> {
        check_index("n1", n1)?;
        check_index("n2", n2)?;
        check_index("n3", n3)?;
        Ok(Self { mode: CostMode::Double { g, n3 }, f: phi.surface.clone(), phi, n1, n2 })
    }

    pub fn is_double(&self) -> bool {
        matches!(self.mode, CostMode::Double { .. })
    }

    /// Height of the second surface above `y`.
    pub fn target_height(&self, y: &Vector2<f64>) -> f64 {
        match &self.mode {
            CostMode::Single { beta } => *beta,
            CostMode::Double { g, .. } => g.eval(y),
        }
    }

    pub fn target_slope(&self, y: &Vector2<f64>) -> Vector2<f64> {
        match &self.mode {
            CostMode::Single { .. } => Vector2::zeros(),
            CostMode::Double { g, .. } => g.grad(y),
        }
    }

    pub fn footprint(&self, x: &Vector2<f64>) -> Result<Footprint> {
        let (hit, jacobian) = self.phi.eval(x)?;
        Ok(Footprint { x: *x, hit, jacobian, height: self.f.eval(&hit), slope: self.f.grad(&hit) })
    }

    pub fn footprints(&self, xs: &[Vector2<f64>]) -> Result<Vec<Footprint>> {
        xs.iter().map(|x| self.footprint(x)).collect()
    }

    pub fn cost_at(&self, fp: &Footprint, y: &Vector2<f64>) -> f64 {
        let dz = self.target_height(y) - fp.height;
        (dz * dz + (fp.hit - y).norm_squared()).sqrt()
    }

    /// `D c'(phi(x), y)`: the x-gradient before the chain rule through `phi`.
    pub fn grad_hit_at(&self, fp: &Footprint, y: &Vector2<f64>) -> Vector2<f64> {
        let dz = self.target_height(y) - fp.height;
        let c = (dz * dz + (fp.hit - y).norm_squared()).sqrt();
        (fp.hit - y - fp.slope * dz) / c
    }

    pub fn grad_x_at(&self, fp: &Footprint, y: &Vector2<f64>) -> Vector2<f64> {
        fp.jacobian.transpose() * self.grad_hit_at(fp, y)
    }

    pub fn grad_y_at(&self, fp: &Footprint, y: &Vector2<f64>) -> Vector2<f64> {
        let dz = self.target_height(y) - fp.height;
        let c = (dz * dz + (fp.hit - y).norm_squared()).sqrt();
        (y - fp.hit + self.target_slope(y) * dz) / c
    }

    /// Determinant of the mixed Hessian `d^2 c / dx dy`.
    ///
    /// The inner matrix is `-(1/c) (A + u v^T)` with `A = Id + grad g (x) grad f`,
    /// so its determinant is `c^-2 (1 + v^T A^-1 u) det A`; the outer factor
    /// is `det J_phi`.
    pub fn mixed_hessian_det_at(&self, fp: &Footprint, y: &Vector2<f64>) -> Result<f64> {
        let grad_f = fp.slope;
        let grad_g = self.target_slope(y);
        let dz = self.target_height(y) - fp.height;
        let c = (dz * dz + (fp.hit - y).norm_squared()).sqrt();
        let u = (grad_g * (-dz) + fp.hit - y) / c;
        let v = (grad_f * dz + y - fp.hit) / c;
        let (a_inv, det_a) = sm_inverse(&grad_g, &grad_f).map_err(|e| match e {
            CostError::SingularUpdate(d) => CostError::SingularA(d),
            other => other,
        })?;
        let inner = (1.0 + v.dot(&(a_inv * u))) * det_a / (c * c);
        Ok(inner * fp.jacobian.determinant())
    }

    pub fn cost(&self, x: &Vector2<f64>, y: &Vector2<f64>) -> Result<f64> {
        Ok(self.cost_at(&self.footprint(x)?, y))
    }

    pub fn grad_x(&self, x: &Vector2<f64>, y: &Vector2<f64>) -> Result<Vector2<f64>> {
        Ok(self.grad_x_at(&self.footprint(x)?, y))
    }

    pub fn grad_y(&self, x: &Vector2<f64>, y: &Vector2<f64>) -> Result<Vector2<f64>> {
        Ok(self.grad_y_at(&self.footprint(x)?, y))
    }

    pub fn mixed_hessian_det(&self, x: &Vector2<f64>, y: &Vector2<f64>) -> Result<f64> {
        self.mixed_hessian_det_at(&self.footprint(x)?, y)
    }
}

/// Sherman–Morrison: inverse and determinant of `Id + u v^T`.
pub fn sm_inverse<const N: usize>(u: &SVector<f64, N>, v: &SVector<f64, N>) -> Result<(SMatrix<f64, N, N>, f64)> {
    let det = 1.0 + v.dot(u);
    if det.abs() < 1e-12 {
        return Err(CostError::SingularUpdate(det.abs()));
    }
    Ok((SMatrix::<f64, N, N>::identity() - u * v.transpose() / det, det))
}

/// `(Id + h (x) h)^-1 = Id - h (x) h / (1 + |h|^2)`, the projector used to
/// solve for tangential phase gradients.
pub fn slope_projector(slope: &Vector2<f64>) -> Matrix2<f64> {
    Matrix2::identity() - slope * slope.transpose() / (1.0 + slope.norm_squared())
}
