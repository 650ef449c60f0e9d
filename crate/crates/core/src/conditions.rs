//! Sufficient conditions for a single-valued, regular transport map: the
//! twist bounds and the nondegeneracy (C3) bounds, evaluated over the grid
//! nodes, with empirical corroboration.
//!
//! The bounds are sufficient, not necessary. A failed bound makes the
//! report inconclusive; it never proves the condition is violated.
//! Extrema are taken over grid nodes, so they are inner approximations of
//! the continuum sup and min.

use std::fmt;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cost::{CostError, CostMode, CostModel, Footprint};
use crate::geometry::{phi_collisions, Grid2};

#[derive(Debug, Error)]
pub enum ConditionError {
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("alpha1 = {0}, alpha2 = {1} violate alpha1, alpha2 > 0 and 1 - alpha1 (2 + alpha2^2 + alpha1) > 0")]
    InvalidAlphas(f64, f64),
    #[error(transparent)]
    Cost(#[from] CostError),
}

pub type Result<T> = std::result::Result<T, ConditionError>;

/// Default `alpha` for the twist bounds.
pub const DEFAULT_ALPHA: f64 = 0.9;
pub const DEFAULT_ALPHA1: f64 = 0.25;
pub const DEFAULT_ALPHA2: f64 = 1.0;

/// Separation below which two values of `y -> D_x c(x, y)` count as equal.
pub const COLLISION_TOL: f64 = 1e-9;
/// Samples per axis of each grid for the determinant scan.
pub const DET_SAMPLES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConstants {
    /// `max |phi(x) - y|`
    pub g: f64,
    /// `min (h(y) - f(phi(x)))`
    pub m0: f64,
    /// `max |grad f|` at the hit points
    pub m_f: f64,
    /// `max |grad g|` over the target nodes (0 for a plane)
    pub m_g: f64,
    /// `max |f|` at the hit points
    pub f_sup: f64,
    /// Target plane height in single mode.
    pub beta: Option<f64>,
}

impl fmt::Display for BoundConstants {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:.9e}", "G", self.g)?;
        writeln!(f, "{:<10} {:.9e}", "M0", self.m0)?;
        writeln!(f, "{:<10} {:.9e}", "M_f", self.m_f)?;
        writeln!(f, "{:<10} {:.9e}", "M_g", self.m_g)?;
        write!(f, "{:<10} {:.9e}", "sup|f|", self.f_sup)?;
        if let Some(b) = self.beta {
            write!(f, "\n{:<10} {:.9e}", "beta", b)?;
        }
        Ok(())
    }
}

pub fn bound_constants(model: &CostModel, sources: &[Footprint], targets: &[Vector2<f64>]) -> BoundConstants {
    let mut g: f64 = 0.0;
    for fp in sources {
        for y in targets {
            g = g.max((fp.hit - y).norm());
        }
    }
    let f_max = sources.iter().map(|fp| fp.height).fold(f64::NEG_INFINITY, f64::max);
    let h_min = targets.iter().map(|y| model.target_height(y)).fold(f64::INFINITY, f64::min);
    let beta = match model.mode {
        CostMode::Single { beta } => Some(beta),
        CostMode::Double { .. } => None,
    };
    BoundConstants {
        g,
        m0: h_min - f_max,
        m_f: sources.iter().map(|fp| fp.slope.norm()).fold(0.0, f64::max),
        m_g: targets.iter().map(|y| model.target_slope(y).norm()).fold(0.0, f64::max),
        f_sup: sources.iter().map(|fp| fp.height.abs()).fold(0.0, f64::max),
        beta,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionEntry {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`
    pub margin: f64,
    pub pass: bool,
}

impl ConditionEntry {
    fn new(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        let margin = rhs - lhs;
        Self { name: name.into(), lhs, rhs, margin, pass: margin >= 0.0 }
    }
}

/// Twist bounds. Single mode: `M_f^2 (beta + sup|f|) + 2 M_f G <= M0`, plus
/// the injectivity of `D_y c`, which holds whenever `M0 > 0`. Double mode:
/// `M_f + G/M0 <= alpha`, `M_g + G/M0 <= alpha`,
/// `(M_f + alpha) M_g <= 1 - alpha`, `(M_g + alpha) M_f <= 1 - alpha`.
pub fn check_twist(model: &CostModel, k: &BoundConstants, alpha: f64) -> Result<Vec<ConditionEntry>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ConditionError::InvalidAlpha(alpha));
    }
    Ok(match model.mode {
        CostMode::Single { beta } => vec![
            ConditionEntry::new("twist_x", k.m_f * k.m_f * (beta + k.f_sup) + 2.0 * k.m_f * k.g, k.m0),
            ConditionEntry::new("twist_y (M0 > 0)", 0.0, k.m0),
        ],
        CostMode::Double { .. } => {
            let ratio = k.g / k.m0;
            vec![
                ConditionEntry::new("twist_f", k.m_f + ratio, alpha),
                ConditionEntry::new("twist_g", k.m_g + ratio, alpha),
                ConditionEntry::new("twist_fg", (k.m_f + alpha) * k.m_g, 1.0 - alpha),
                ConditionEntry::new("twist_gf", (k.m_g + alpha) * k.m_f, 1.0 - alpha),
            ]
        }
    })
}

/// Nondegeneracy bounds. Single mode: `G M_f < M0`. Double mode:
/// `M_f + M_g <= alpha2`, `G M_f <= alpha1 M0`, `G M_g <= alpha1 M0`.
pub fn check_c3(model: &CostModel, k: &BoundConstants, alpha1: f64, alpha2: f64) -> Result<Vec<ConditionEntry>> {
    if !(alpha1 > 0.0 && alpha2 > 0.0 && 1.0 - alpha1 * (2.0 + alpha2 * alpha2 + alpha1) > 0.0) {
        return Err(ConditionError::InvalidAlphas(alpha1, alpha2));
    }
    Ok(match model.mode {
        CostMode::Single { .. } => {
            let mut e = ConditionEntry::new("c3_flat", k.g * k.m_f, k.m0);
            e.pass = e.margin > 0.0;
            vec![e]
        }
        CostMode::Double { .. } => vec![
            ConditionEntry::new("c3_slopes", k.m_f + k.m_g, alpha2),
            ConditionEntry::new("c3_f", k.g * k.m_f, alpha1 * k.m0),
            ConditionEntry::new("c3_g", k.g * k.m_g, alpha1 * k.m0),
        ],
    })
}

/// The cost is C2 with bounded norm when the surfaces stay apart.
pub fn check_c0(k: &BoundConstants) -> ConditionEntry {
    let mut e = ConditionEntry::new("c0 (M0 > 0)", 0.0, k.m0);
    e.pass = k.m0 > 0.0;
    e
}

fn subsample(n: usize, per_axis: usize) -> Vec<usize> {
    if n <= per_axis {
        return (0..n).collect();
    }
    (0..per_axis).map(|k| k * (n - 1) / (per_axis - 1)).collect()
}

/// Nodes of `grid` on a `per_axis x per_axis` evenly strided subgrid.
pub fn grid_subsample(grid: &Grid2, per_axis: usize) -> Vec<usize> {
    let xs = subsample(grid.nx, per_axis);
    let ys = subsample(grid.ny, per_axis);
    ys.iter().flat_map(|&iy| xs.iter().map(move |&ix| grid.index(ix, iy))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeterminantScan {
    pub samples: usize,
    pub min_abs: f64,
    /// Every sampled determinant has the same nonzero sign.
    pub sign_constant: bool,
}

pub fn scan_mixed_hessian(
    model: &CostModel,
    sources: &[Footprint],
    targets: &[Vector2<f64>],
) -> Result<DeterminantScan> {
    let mut min_abs = f64::INFINITY;
    let (mut pos, mut neg) = (false, false);
    let mut samples = 0;
    for fp in sources {
        for y in targets {
            let d = model.mixed_hessian_det_at(fp, y)?;
            min_abs = min_abs.min(d.abs());
            pos |= d > 0.0;
            neg |= d < 0.0;
            samples += 1;
        }
    }
    Ok(DeterminantScan { samples, min_abs, sign_constant: pos != neg && min_abs > 0.0 })
}

/// For `count` seeded random source points, counts the pairs of target nodes
/// whose `D_x c` values coincide within [`COLLISION_TOL`].
pub fn twist_collisions(
    model: &CostModel,
    source_grid: &Grid2,
    targets: &[Vector2<f64>],
    count: usize,
    seed: u64,
) -> Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0;
    for _ in 0..count {
        let x = Vector2::new(
            source_grid.x_min + rng.gen::<f64>() * (source_grid.x_max - source_grid.x_min),
            source_grid.y_min + rng.gen::<f64>() * (source_grid.y_max - source_grid.y_min),
        );
        let fp = model.footprint(&x)?;
        let grads: Vec<Vector2<f64>> = targets.iter().map(|y| model.grad_x_at(&fp, y)).collect();
        total += phi_collisions(&grads, COLLISION_TOL).len();
    }
    Ok(total)
}

#[derive(Debug, Clone)]
pub struct ConditionReport {
    pub constants: BoundConstants,
    pub entries: Vec<ConditionEntry>,
    pub determinant: Option<DeterminantScan>,
    pub twist_collisions: Option<usize>,
}

impl ConditionReport {
    pub fn pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn verdict(&self) -> &'static str {
        if self.pass() {
            "pass"
        } else {
            "inconclusive"
        }
    }

    pub fn entry(&self, name: &str) -> Option<&ConditionEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

impl fmt::Display for ConditionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.constants)?;
        for e in &self.entries {
            writeln!(
                f,
                "{:<18} lhs={:<+.9e} rhs={:<+.9e} margin={:<+.9e} {}",
                e.name,
                e.lhs,
                e.rhs,
                e.margin,
                if e.pass { "pass" } else { "inconclusive" }
            )?;
        }
        if let Some(d) = &self.determinant {
            writeln!(
                f,
                "{:<18} samples={} min_abs={:.9e} sign_constant={}",
                "mixed_hessian_det", d.samples, d.min_abs, d.sign_constant
            )?;
        }
        if let Some(c) = self.twist_collisions {
            writeln!(f, "{:<18} {}", "twist_collisions", c)?;
        }
        write!(f, "{:<18} {}", "overall", self.verdict())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionParams {
    pub alpha: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub seed: u64,
}

impl Default for ConditionParams {
    fn default() -> Self {
        Self { alpha: DEFAULT_ALPHA, alpha1: DEFAULT_ALPHA1, alpha2: DEFAULT_ALPHA2, seed: 42 }
    }
}

/// All bounds plus the determinant scan (on a 16x16 subgrid of each side)
/// and, when the twist bounds hold, the 50-point injectivity scan.
pub fn check_all(
    model: &CostModel,
    source_grid: &Grid2,
    target_grid: &Grid2,
    params: &ConditionParams,
) -> Result<ConditionReport> {
    let sources = model.footprints(source_grid.nodes())?;
    let targets = target_grid.nodes();
    let constants = bound_constants(model, &sources, targets);
    let mut entries = vec![check_c0(&constants)];
    let twist = check_twist(model, &constants, params.alpha)?;
    let twist_pass = twist.iter().all(|e| e.pass);
    entries.extend(twist);
    entries.extend(check_c3(model, &constants, params.alpha1, params.alpha2)?);
    let sub_s: Vec<Footprint> = grid_subsample(source_grid, DET_SAMPLES).into_iter().map(|i| sources[i]).collect();
    let sub_t: Vec<Vector2<f64>> = grid_subsample(target_grid, DET_SAMPLES).into_iter().map(|i| targets[i]).collect();
    let determinant = Some(scan_mixed_hessian(model, &sub_s, &sub_t)?);
    let twist_collisions =
        if twist_pass { Some(twist_collisions(model, source_grid, targets, 50, params.seed)?) } else { None };
    Ok(ConditionReport { constants, entries, determinant, twist_collisions })
}
