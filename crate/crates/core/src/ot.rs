//! Discrete Kantorovich solvers for the refraction cost.
//!
//! [`solve_exact`] runs successive shortest paths on the transportation
//! network and is the correctness reference for small instances;
//! [`solve_sinkhorn`] is the entropic solver used on design grids. Both return
//! c-concave potentials `(psi, psi_c)` tightened by exact c-transforms.

use nalgebra::Vector2;
use rayon::prelude::*;
use thiserror::Error;

use crate::cost::{CostModel, Footprint};

/// Largest side handled by the exact solver.
pub const EXACT_CAP: usize = 64;
/// A row is concentrated when its heaviest entry carries this share.
pub const CONCENTRATION: f64 = 0.9;

#[derive(Debug, Error)]
pub enum OtError {
    #[error("exact solver is capped at {cap} points per side, got {m}x{n}")]
    SizeExceeded { m: usize, n: usize, cap: usize },
    #[error("Sinkhorn did not converge in {iterations} iterations (marginal error {marginal_error:e})")]
    NotConverged { iterations: usize, marginal_error: f64 },
    #[error("row {0} of the plan is diffuse; no single target")]
    DiffuseRow(usize),
    #[error("epsilon must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("shape mismatch: cost is {m}x{n}, masses are {rows} and {cols}")]
    ShapeMismatch { m: usize, n: usize, rows: usize, cols: usize },
}

pub type Result<T> = std::result::Result<T, OtError>;

/// Dense row-major cost matrix between two point sets.
#[derive(Debug, Clone)]
pub struct CostMatrix {
    pub m: usize,
    pub n: usize,
    pub entries: Vec<f64>,
    pub row_points: Vec<Vector2<f64>>,
    pub col_points: Vec<Vector2<f64>>,
}

impl CostMatrix {
    pub fn from_fn(
        row_points: Vec<Vector2<f64>>,
        col_points: Vec<Vector2<f64>>,
        cost: impl Fn(usize, usize) -> f64 + Sync,
    ) -> Self {
        let (m, n) = (row_points.len(), col_points.len());
        let mut entries = vec![0.0; m * n];
        entries.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, row)| {
            for (j, e) in row.iter_mut().enumerate() {
                *e = cost(i, j);
            }
        });
        Self { m, n, entries, row_points, col_points }
    }

    pub fn from_model(model: &CostModel, sources: &[Footprint], targets: &[Vector2<f64>]) -> Self {
        Self::from_fn(sources.iter().map(|fp| fp.x).collect(), targets.to_vec(), |i, j| {
            model.cost_at(&sources[i], &targets[j])
        })
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn mean(&self) -> f64 {
        self.entries.iter().sum::<f64>() / self.entries.len() as f64
    }

    fn check(&self, mu: &[f64], nu: &[f64]) -> Result<()> {
        if mu.len() != self.m || nu.len() != self.n {
            return Err(OtError::ShapeMismatch { m: self.m, n: self.n, rows: mu.len(), cols: nu.len() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapEntry {
    /// Column carrying the most mass (lowest index on ties).
    pub target: usize,
    /// Share of the row mass on `target`.
    pub share: f64,
    pub diffuse: bool,
}

#[derive(Debug, Clone)]
pub struct TransportMap {
    pub entries: Vec<MapEntry>,
    /// Source mass on diffuse rows.
    pub diffuse_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct TransportSolution {
    pub m: usize,
    pub n: usize,
    /// Row-major coupling.
    pub plan: Vec<f64>,
    pub map: TransportMap,
    pub potential_psi: Vec<f64>,
    pub potential_psi_c: Vec<f64>,
    pub total_cost: f64,
    /// Entropic regularization of the final plan; `None` for the exact solver.
    pub epsilon: Option<f64>,
    pub iterations: usize,
    pub marginal_error: f64,
}

impl TransportSolution {
    fn assemble(cost: &CostMatrix, plan: Vec<f64>, psi: Vec<f64>, epsilon: Option<f64>, iterations: usize) -> Self {
        let total_cost = plan.iter().zip(&cost.entries).map(|(p, c)| p * c).sum();
        let (potential_psi, potential_psi_c) = tighten(cost, &psi);
        let mut sol = Self {
            m: cost.m,
            n: cost.n,
            plan,
            map: TransportMap { entries: Vec::new(), diffuse_fraction: 0.0 },
            potential_psi,
            potential_psi_c,
            total_cost,
            epsilon,
            iterations,
            marginal_error: 0.0,
        };
        sol.map = extract_map(&sol);
        sol
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.plan[i * self.n..(i + 1) * self.n]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.m).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n];
        for i in 0..self.m {
            for (s, p) in sums.iter_mut().zip(self.row(i)) {
                *s += p;
            }
        }
        sums
    }

    /// `sum mu psi + sum nu psi_c`.
    pub fn dual_value(&self, mu: &[f64], nu: &[f64]) -> f64 {
        mu.iter().zip(&self.potential_psi).map(|(a, b)| a * b).sum::<f64>()
            + nu.iter().zip(&self.potential_psi_c).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Plan-weighted mean target of every row.
    pub fn barycentric_targets(&self, col_points: &[Vector2<f64>]) -> Vec<Vector2<f64>> {
        (0..self.m)
            .map(|i| {
                let row = self.row(i);
                let mass: f64 = row.iter().sum();
                row.iter().zip(col_points).fold(Vector2::zeros(), |acc, (p, y)| acc + y * *p) / mass
            })
            .collect()
    }

    /// Target points of the extracted map; fails on the first diffuse row.
    pub fn map_targets(&self, col_points: &[Vector2<f64>]) -> Result<Vec<Vector2<f64>>> {
        self.map
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| if e.diffuse { Err(OtError::DiffuseRow(i)) } else { Ok(col_points[e.target]) })
            .collect()
    }
}

/// `psi_c(y_j) = min_i (c_ij - psi_i)`, then `psi(x_i) = min_j (c_ij - psi_c(y_j))`.
fn tighten(cost: &CostMatrix, psi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut psi_c = vec![f64::INFINITY; cost.n];
    for (i, p) in psi.iter().enumerate() {
        for (j, slot) in psi_c.iter_mut().enumerate() {
            *slot = slot.min(cost.at(i, j) - p);
        }
    }
    let psi =
        (0..cost.m).map(|i| (0..cost.n).map(|j| cost.at(i, j) - psi_c[j]).fold(f64::INFINITY, f64::min)).collect();
    (psi, psi_c)
}

/// Per row, the heaviest column and whether it carries at least 90% of the row.
pub fn extract_map(sol: &TransportSolution) -> TransportMap {
    let mut diffuse_mass = 0.0;
    let mut total = 0.0;
    let entries = (0..sol.m)
        .map(|i| {
            let row = sol.row(i);
            let mut best = 0;
            for (j, p) in row.iter().enumerate() {
                if *p > row[best] {
                    best = j;
                }
            }
            let mass: f64 = row.iter().sum();
            let share = if mass > 0.0 { row[best] / mass } else { 0.0 };
            let diffuse = share < CONCENTRATION;
            total += mass;
            if diffuse {
                diffuse_mass += mass;
            }
            MapEntry { target: best, share, diffuse }
        })
        .collect();
    TransportMap { entries, diffuse_fraction: if total > 0.0 { diffuse_mass / total } else { 0.0 } }
}

/// `D psi(x_i) = D_x c(x_i, T x_i)` at a concentrated row.
pub fn potential_gradient(
    model: &CostModel,
    source: &Footprint,
    sol: &TransportSolution,
    row: usize,
    col_points: &[Vector2<f64>],
) -> Result<Vector2<f64>> {
    let entry = sol.map.entries[row];
    if entry.diffuse {
        return Err(OtError::DiffuseRow(row));
    }
    Ok(model.grad_x_at(source, &col_points[entry.target]))
}

/// Column attaining `min_j (c(x, y_j) - psi_c(y_j))`: the c-superdifferential
/// of the potential at an arbitrary source point.
pub fn c_transform_target(model: &CostModel, source: &Footprint, psi_c: &[f64], col_points: &[Vector2<f64>]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (j, (y, p)) in col_points.iter().zip(psi_c).enumerate() {
        let v = model.cost_at(source, y) - p;
        if v < best.0 {
            best = (v, j);
        }
    }
    best.1
}

/// Exact optimal coupling by successive shortest augmenting paths.
pub fn solve_exact(cost: &CostMatrix, mu: &[f64], nu: &[f64]) -> Result<TransportSolution> {
    solve_exact_capped(cost, mu, nu, EXACT_CAP)
}

pub fn solve_exact_capped(cost: &CostMatrix, mu: &[f64], nu: &[f64], cap: usize) -> Result<TransportSolution> {
    cost.check(mu, nu)?;
    let (m, n) = (cost.m, cost.n);
    if m > cap || n > cap {
        return Err(OtError::SizeExceeded { m, n, cap });
    }
    let scale = cost.entries.iter().fold(0.0_f64, |a, c| a.max(c.abs())).max(1e-300);
    let mass_tol = 1e-14;
    let relax_tol = 1e-13 * scale;
    let mut flow = vec![0.0; m * n];
    let mut supply = mu.to_vec();
    let mut demand = nu.to_vec();
    let mut augmentations = 0;

    // nodes: rows 0..m, columns m..m+n
    let mut dist = vec![0.0; m + n];
    let mut pred = vec![usize::MAX; m + n];
    let mut in_queue = vec![false; m + n];
    loop {
        if supply.iter().all(|s| *s <= mass_tol) || demand.iter().all(|d| *d <= mass_tol) {
            break;
        }
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        pred.iter_mut().for_each(|p| *p = usize::MAX);
        let mut queue = std::collections::VecDeque::new();
        for i in 0..m {
            if supply[i] > mass_tol {
                dist[i] = 0.0;
                queue.push_back(i);
                in_queue[i] = true;
            }
        }
        while let Some(node) = queue.pop_front() {
            in_queue[node] = false;
            if node < m {
                let i = node;
                for j in 0..n {
                    let cand = dist[i] + cost.at(i, j);
                    if cand < dist[m + j] - relax_tol {
                        dist[m + j] = cand;
                        pred[m + j] = i;
                        if !in_queue[m + j] {
                            in_queue[m + j] = true;
                            queue.push_back(m + j);
                        }
                    }
                }
            } else {
                let j = node - m;
                for i in 0..m {
                    if flow[i * n + j] > mass_tol {
                        let cand = dist[node] - cost.at(i, j);
                        if cand < dist[i] - relax_tol {
                            dist[i] = cand;
                            pred[i] = node;
                            if !in_queue[i] {
                                in_queue[i] = true;
                                queue.push_back(i);
                            }
                        }
                    }
                }
            }
        }
        let sink = (0..n)
            .filter(|&j| demand[j] > mass_tol && dist[m + j].is_finite())
            .min_by(|&a, &b| dist[m + a].total_cmp(&dist[m + b]));
        let Some(sink) = sink else { break };
        // walk back to the originating row
        let mut bottleneck = demand[sink];
        let mut node = m + sink;
        while pred[node] != usize::MAX {
            let prev = pred[node];
            if prev >= m {
                // reverse arc column prev -> row node
                bottleneck = bottleneck.min(flow[node * n + (prev - m)]);
            }
            node = prev;
        }
        let origin = node;
        bottleneck = bottleneck.min(supply[origin]);
        let mut node = m + sink;
        while pred[node] != usize::MAX {
            let prev = pred[node];
            if prev < m {
                flow[prev * n + (node - m)] += bottleneck;
            } else {
                let idx = node * n + (prev - m);
                flow[idx] = (flow[idx] - bottleneck).max(0.0);
            }
            node = prev;
        }
        supply[origin] -= bottleneck;
        demand[sink] -= bottleneck;
        augmentations += 1;
    }

    // Duals from shortest distances on the final residual graph, rooted at
    // every node with distance 0.
    let mut p = vec![0.0; m + n];
    for _ in 0..(m + n + 1) {
        let mut changed = false;
        for i in 0..m {
            for j in 0..n {
                let c = cost.at(i, j);
                if p[i] + c < p[m + j] - relax_tol {
                    p[m + j] = p[i] + c;
                    changed = true;
                }
                if flow[i * n + j] > mass_tol && p[m + j] - c < p[i] - relax_tol {
                    p[i] = p[m + j] - c;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let psi: Vec<f64> = p[..m].iter().map(|v| -v).collect();
    let mut sol = TransportSolution::assemble(cost, flow, psi, None, augmentations);
    sol.marginal_error = marginal_error(&sol, mu, nu);
    Ok(sol)
}

fn marginal_error(sol: &TransportSolution, mu: &[f64], nu: &[f64]) -> f64 {
    let rows: f64 = sol.row_sums().iter().zip(mu).map(|(a, b)| (a - b).abs()).sum();
    let cols: f64 = sol.col_sums().iter().zip(nu).map(|(a, b)| (a - b).abs()).sum();
    rows.max(cols)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornOptions {
    /// Target regularization (absolute, cost units).
    pub epsilon: f64,
    pub max_iter: usize,
    pub marginal_tol: f64,
}

impl SinkhornOptions {
    /// Target `epsilon = 1e-3 * mean(cost)`, tolerance `1e-6`, 10 000
    /// iterations per level.
    pub fn for_cost(cost: &CostMatrix) -> Self {
        Self { epsilon: 1e-3 * cost.mean(), max_iter: 10_000, marginal_tol: 1e-6 }
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

const ROW_CHUNK: usize = 32;
const SCALING_LIMIT: f64 = 1e100;
/// Over-relaxation of the scaling updates. A level falls back to plain
/// Sinkhorn once its marginal error exceeds `DIVERGENCE_FACTOR` times the
/// best seen in that level.
const OVERRELAXATION: f64 = 1.5;
const DIVERGENCE_FACTOR: f64 = 10.0;

/// Entropic transport with epsilon scaling.
///
/// Potentials `(f, g)` are carried in the log domain; within a level the
/// iterations run on scalings `(u, v)` of the kernel
/// `exp((f_i + g_j - c_ij) / eps)`, which are absorbed back into the
/// potentials whenever they leave `[1e-100, 1e100]` and at every level
/// change. Epsilon is halved from `0.1 * mean(cost)` down to the target.
/// Scaling updates are over-relaxed, `u <- u^(1 - w) (a / K v)^w`.
pub fn solve_sinkhorn(cost: &CostMatrix, mu: &[f64], nu: &[f64], opts: &SinkhornOptions) -> Result<TransportSolution> {
    cost.check(mu, nu)?;
    if !(opts.epsilon > 0.0 && opts.epsilon.is_finite()) {
        return Err(OtError::InvalidEpsilon(opts.epsilon));
    }
    let (m, n) = (cost.m, cost.n);
    let mut schedule = Vec::new();
    let mut eps = 0.1 * cost.mean();
    while eps > opts.epsilon {
        schedule.push(eps);
        eps *= 0.5;
    }
    schedule.push(opts.epsilon);

    let mut f = vec![0.0; m];
    let mut g = vec![0.0; n];
    let mut kernel = vec![0.0; m * n];
    let mut u = vec![1.0; m];
    let mut v = vec![1.0; n];
    let mut row_mass = vec![0.0; m];
    let mut total_iterations = 0;
    let mut last_error = f64::INFINITY;

    for (level, &eps) in schedule.iter().enumerate() {
        let final_level = level + 1 == schedule.len();
        let tol = if final_level { opts.marginal_tol } else { opts.marginal_tol.max(1e-4) };
        // one log-domain sweep recentres the potentials for this epsilon
        log_sweep(cost, mu, nu, eps, &mut f, &mut g);
        build_kernel(cost, eps, &f, &g, &mut kernel);
        u.iter_mut().for_each(|x| *x = 1.0);
        v.iter_mut().for_each(|x| *x = 1.0);
        let mut converged = false;
        let mut iterations = 0;
        let mut omega = OVERRELAXATION;
        let mut best_error = f64::INFINITY;
        // column marginal error left by the last (relaxed) update of v
        let mut col_error = f64::INFINITY;
        while iterations < opts.max_iter {
            kernel.par_chunks(n * ROW_CHUNK).zip(row_mass.par_chunks_mut(ROW_CHUNK)).for_each(|(rows, out)| {
                for (row, s) in rows.chunks(n).zip(out.iter_mut()) {
                    *s = row.iter().zip(&v).map(|(k, vj)| k * vj).sum();
                }
            });
            let row_error: f64 = row_mass.iter().zip(&u).zip(mu).map(|((s, ui), a)| (s * ui - a).abs()).sum();
            last_error = row_error + col_error;
            if last_error <= tol {
                converged = true;
                break;
            }
            if last_error > DIVERGENCE_FACTOR * best_error {
                omega = 1.0;
            }
            best_error = best_error.min(last_error);
            let relax =
                |x: f64, target: f64| if omega == 1.0 { target } else { x.powf(1.0 - omega) * target.powf(omega) };
            let mut degenerate = false;
            for ((ui, s), a) in u.iter_mut().zip(&row_mass).zip(mu) {
                if *s > 0.0 {
                    *ui = relax(*ui, a / s);
                } else {
                    degenerate = true;
                }
            }
            let partials: Vec<Vec<f64>> = kernel
                .par_chunks(n * ROW_CHUNK)
                .zip(u.par_chunks(ROW_CHUNK))
                .map(|(rows, us)| {
                    let mut acc = vec![0.0; n];
                    for (row, ui) in rows.chunks(n).zip(us) {
                        for (a, k) in acc.iter_mut().zip(row) {
                            *a += k * ui;
                        }
                    }
                    acc
                })
                .collect();
            let mut col = vec![0.0; n];
            for part in &partials {
                for (c, p) in col.iter_mut().zip(part) {
                    *c += p;
                }
            }
            col_error = 0.0;
            for ((vj, s), b) in v.iter_mut().zip(&col).zip(nu) {
                if *s > 0.0 {
                    *vj = relax(*vj, b / s);
                    col_error += (s * *vj - b).abs();
                } else {
                    degenerate = true;
                }
            }
            iterations += 1;
            let out_of_range = |x: &f64| !(*x < SCALING_LIMIT && *x > 1.0 / SCALING_LIMIT);
            if degenerate || u.iter().any(out_of_range) || v.iter().any(out_of_range) {
                absorb(eps, &mut f, &mut u, &mut g, &mut v);
                if degenerate {
                    log_sweep(cost, mu, nu, eps, &mut f, &mut g);
                }
                build_kernel(cost, eps, &f, &g, &mut kernel);
            }
        }
        total_iterations += iterations;
        if final_level {
            // plan = diag(u) K diag(v)
            let mut plan = kernel;
            plan.par_chunks_mut(n).zip(u.par_iter()).for_each(|(row, ui)| {
                for (p, vj) in row.iter_mut().zip(&v) {
                    *p *= ui * vj;
                }
            });
            absorb(eps, &mut f, &mut u, &mut g, &mut v);
            if !converged {
                return Err(OtError::NotConverged { iterations: total_iterations, marginal_error: last_error });
            }
            let mut sol = TransportSolution::assemble(cost, plan, f, Some(eps), total_iterations);
            sol.marginal_error = marginal_error(&sol, mu, nu);
            return Ok(sol);
        }
        absorb(eps, &mut f, &mut u, &mut g, &mut v);
    }
    unreachable!("schedule always ends with the target epsilon")
}

fn absorb(eps: f64, f: &mut [f64], u: &mut [f64], g: &mut [f64], v: &mut [f64]) {
    for (fi, ui) in f.iter_mut().zip(u.iter_mut()) {
        *fi += eps * ui.ln();
        *ui = 1.0;
    }
    for (gj, vj) in g.iter_mut().zip(v.iter_mut()) {
        *gj += eps * vj.ln();
        *vj = 1.0;
    }
}

fn build_kernel(cost: &CostMatrix, eps: f64, f: &[f64], g: &[f64], kernel: &mut [f64]) {
    let n = cost.n;
    kernel.par_chunks_mut(n).zip(cost.entries.par_chunks(n)).zip(f.par_iter()).for_each(|((krow, crow), fi)| {
        for ((k, c), gj) in krow.iter_mut().zip(crow).zip(g) {
            *k = ((fi + gj - c) / eps).exp();
        }
    });
}

/// Exact log-domain updates of `f` then `g`.
fn log_sweep(cost: &CostMatrix, mu: &[f64], nu: &[f64], eps: f64, f: &mut [f64], g: &mut [f64]) {
    let n = cost.n;
    f.par_iter_mut().zip(cost.entries.par_chunks(n)).zip(mu.par_iter()).for_each(|((fi, crow), a)| {
        *fi = eps * a.ln() - eps * log_sum_exp(crow.iter().zip(g.iter()).map(|(c, gj)| (gj - c) / eps));
    });
    let f_ref: &[f64] = f;
    g.par_iter_mut().enumerate().zip(nu.par_iter()).for_each(|((j, gj), b)| {
        *gj = eps * b.ln() - eps * log_sum_exp((0..cost.m).map(|i| (f_ref[i] - cost.entries[i * n + j]) / eps));
    });
}
