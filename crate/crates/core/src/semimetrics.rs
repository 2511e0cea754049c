//! Phase-space transforms (Husimi, Wigner, particle deposition), debiased entropic
//! Wasserstein-2 transport, the `d hbar` floor and the semiclassical growth envelope.
//!
//! Husimi convention: coherent states `g_{x,xi}(y) = (pi hbar)^{-d/4}
//! exp(-|y-x|^2/(2 hbar) + i xi.(y-x)/hbar)` (position width `sqrt(hbar/2)`) and
//! `f_hbar(x, xi) = (2 pi hbar)^{-d} sum_j lambda_j |<g_{x,xi}, psi_j>|^2`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::MAX_DIM;
use crate::state::{ClassicalEnsemble, QuantumMixedState};

/// Tensor grid in phase space; axes ordered `x_1..x_d, xi_1..xi_d`, each uniform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub d: usize,
    pub axes: Vec<Vec<f64>>,
}

impl PhaseGrid {
    pub fn new(d: usize, axes: Vec<Vec<f64>>) -> Result<Self> {
        if d == 0 || d > MAX_DIM || axes.len() != 2 * d {
            return Err(Error::invalid("phase_grid", format!("need 2d = {} axes, got {}", 2 * d, axes.len())));
        }
        for (a, ax) in axes.iter().enumerate() {
            if ax.len() < 2 {
                return Err(Error::invalid("phase_grid", format!("axis {a} needs >= 2 points")));
            }
            let step = ax[1] - ax[0];
            if !(step > 0.0) || ax.windows(2).any(|w| ((w[1] - w[0]) - step).abs() > 1e-9 * step.abs()) {
                return Err(Error::invalid("phase_grid", format!("axis {a} is not uniform and increasing")));
            }
        }
        Ok(PhaseGrid { d, axes })
    }

    /// Symmetric uniform axes of `points` nodes around the given centers.
    pub fn centered(
        d: usize,
        x_center: &[f64],
        xi_center: &[f64],
        x_half_width: f64,
        xi_half_width: f64,
        points_x: usize,
        points_xi: usize,
    ) -> Result<Self> {
        let axis = |c: f64, hw: f64, n: usize| -> Vec<f64> {
            (0..n).map(|i| c - hw + 2.0 * hw * i as f64 / (n - 1) as f64).collect()
        };
        let mut axes = Vec::with_capacity(2 * d);
        for a in 0..d {
            axes.push(axis(x_center.get(a).copied().unwrap_or(0.0), x_half_width, points_x));
        }
        for a in 0..d {
            axes.push(axis(xi_center.get(a).copied().unwrap_or(0.0), xi_half_width, points_xi));
        }
        PhaseGrid::new(d, axes)
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.axes[axis][1] - self.axes[axis][0]
    }

    pub fn cell_volume(&self) -> f64 {
        (0..2 * self.d).map(|a| self.spacing(a)).product()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.len()).collect()
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; 2 * self.d];
        for a in (0..2 * self.d).rev() {
            let n = self.axes[a].len();
            idx[a] = flat % n;
            flat /= n;
        }
        idx
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat).iter().enumerate().map(|(a, &i)| self.axes[a][i]).collect()
    }
}

/// Real field on a phase grid; `values` are densities (mass = sum * cell volume).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpaceDensity {
    pub grid: PhaseGrid,
    pub values: Vec<f64>,
}

impl PhaseSpaceDensity {
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Mean and per-coordinate variance.
    pub fn moments(&self) -> (Vec<f64>, Vec<f64>) {
        let k = 2 * self.grid.d;
        let dv = self.grid.cell_volume();
        let m = self.mass();
        let mut mean = vec![0.0; k];
        for (f, v) in self.values.iter().enumerate() {
            for (a, z) in self.grid.point(f).iter().enumerate() {
                mean[a] += v * z * dv / m;
            }
        }
        let mut var = vec![0.0; k];
        for (f, v) in self.values.iter().enumerate() {
            for (a, z) in self.grid.point(f).iter().enumerate() {
                var[a] += v * (z - mean[a]).powi(2) * dv / m;
            }
        }
        (mean, var)
    }

    /// Unit-mass point mass at a grid node.
    pub fn point_mass(grid: PhaseGrid, node: &[usize], mass: f64) -> Self {
        let mut values = vec![0.0; grid.len()];
        let flat = node.iter().zip(grid.axes.iter()).fold(0, |acc, (&i, ax)| acc * ax.len() + i);
        values[flat] = mass / grid.cell_volume();
        PhaseSpaceDensity { grid, values }
    }
}

/// `out[pre, p, post] = sum_y m[p][y] cur[pre, y, post]`.
fn contract(cur: &[Complex64], shape: &[usize], axis: usize, m: &[Vec<Complex64>]) -> Vec<Complex64> {
    let pre: usize = shape[..axis].iter().product();
    let n = shape[axis];
    let post: usize = shape[axis + 1..].iter().product();
    let p = m.len();
    let mut out = vec![Complex64::default(); pre * p * post];
    out.par_chunks_mut(p * post).enumerate().for_each(|(i, block)| {
        let src = &cur[i * n * post..(i + 1) * n * post];
        for (q, row) in m.iter().enumerate() {
            let dst = &mut block[q * post..(q + 1) * post];
            for (y, &c) in row.iter().enumerate() {
                if c == Complex64::default() {
                    continue;
                }
                let line = &src[y * post..(y + 1) * post];
                for (o, s) in dst.iter_mut().zip(line) {
                    *o += c * s;
                }
            }
        }
    });
    out
}

/// Minimum spatial points per axis for which the Husimi window is resolved.
pub fn husimi_min_points(box_length: f64, hbar: f64) -> usize {
    let width = (hbar / 2.0).sqrt();
    ((2.0 * box_length / width).ceil() as usize).next_power_of_two()
}

pub fn husimi(state: &QuantumMixedState, pg: &PhaseGrid) -> Result<PhaseSpaceDensity> {
    let g = state.grid;
    let d = g.dim;
    if pg.d != d {
        return Err(Error::invalid("phase_grid", "dimension differs from the state"));
    }
    let hbar = state.hbar;
    let width = (hbar / 2.0).sqrt();
    if g.spacing() > 0.5 * width {
        return Err(Error::Resolution(format!(
            "Husimi window sqrt(hbar/2) = {width:.4} spans < 2 cells; use grid_points >= {}",
            husimi_min_points(g.length, hbar)
        )));
    }
    let n = g.points;
    let norm = (std::f64::consts::PI * hbar).powf(-0.25);
    // per-axis window matrices: rows (x, xi) pairs, columns spatial nodes
    let matrices: Vec<Vec<Vec<Complex64>>> = (0..d)
        .map(|a| {
            let xs = &pg.axes[a];
            let xis = &pg.axes[d + a];
            let mut rows = Vec::with_capacity(xs.len() * xis.len());
            for &x in xs {
                for &xi in xis {
                    rows.push(
                        (0..n)
                            .map(|i| {
                                let mut dy = g.centered_coordinate(i) - x;
                                dy -= g.length * (dy / g.length).round();
                                let amp = norm * (-dy * dy / (2.0 * hbar)).exp();
                                if amp < 1e-300 {
                                    Complex64::default()
                                } else {
                                    Complex64::from_polar(amp * g.spacing(), -xi * dy / hbar)
                                }
                            })
                            .collect(),
                    );
                }
            }
            rows
        })
        .collect();
    let pre = (2.0 * std::f64::consts::PI * hbar).powi(-(d as i32));
    let out_shape: Vec<usize> = (0..d).map(|a| pg.axes[a].len() * pg.axes[d + a].len()).collect();
    let mut acc = vec![0.0; out_shape.iter().product()];
    for (lambda, psi) in state.weights.iter().zip(&state.wavefunctions) {
        let mut cur = psi.clone();
        let mut shape = vec![n; d];
        for a in 0..d {
            cur = contract(&cur, &shape, a, &matrices[a]);
            shape[a] = out_shape[a];
        }
        for (v, z) in acc.iter_mut().zip(&cur) {
            *v += lambda * z.norm_sqr();
        }
    }
    // reorder (x_1 xi_1, x_2 xi_2, ..) -> (x_1, x_2, .., xi_1, xi_2, ..)
    let mut values = vec![0.0; pg.len()];
    for (f, v) in values.iter_mut().enumerate() {
        let idx = pg.multi_index(f);
        let mut src = 0;
        for a in 0..d {
            src = src * out_shape[a] + idx[a] * pg.axes[d + a].len() + idx[d + a];
        }
        *v = pre * acc[src];
    }
    Ok(PhaseSpaceDensity { grid: pg.clone(), values })
}

/// Discrete Wigner function on spatial grid nodes (`x` axes must lie on nodes), with
/// the lag window `|y| < L/2`:
/// `W(x, xi) = (2 pi hbar)^{-d} sum_m rho(x + m h, x - m h) e^{-2 i xi.m h / hbar} (2h)^d`.
pub fn wigner(state: &QuantumMixedState, pg: &PhaseGrid) -> Result<PhaseSpaceDensity> {
    let g = state.grid;
    let d = g.dim;
    if d > 2 {
        return Err(Error::Unsupported("dense Wigner transform needs d <= 2".into()));
    }
    if pg.d != d {
        return Err(Error::invalid("phase_grid", "dimension differs from the state"));
    }
    let h = g.spacing();
    let n = g.points as i64;
    let node_of = |x: f64| -> Result<i64> {
        let s = (x + 0.5 * g.length) / h;
        if (s - s.round()).abs() > 1e-9 {
            return Err(Error::invalid("phase_grid", format!("x = {x} is not a grid node")));
        }
        Ok((s.round() as i64).rem_euclid(n))
    };
    let x_nodes: Vec<Vec<i64>> =
        (0..d).map(|a| pg.axes[a].iter().map(|&x| node_of(x)).collect::<Result<Vec<_>>>()).collect::<Result<_>>()?;
    let pre = (2.0 * std::f64::consts::PI * state.hbar).powi(-(d as i32)) * (2.0 * h).powi(d as i32);
    // |y| = 2|m|h < L/2 keeps the periodic images of x + y/2 and x - y/2 apart
    let mmax = n / 4 - 1;
    let offsets: Vec<[i64; 2]> = if d == 1 {
        (-mmax..=mmax).map(|m| [m, 0]).collect()
    } else {
        (-mmax..=mmax).flat_map(|m0| (-mmax..=mmax).map(move |m1| [m0, m1])).collect()
    };
    let idx_of = |base: &[i64], m: &[i64; 2], s: i64| -> usize {
        let mut flat = 0usize;
        for a in 0..d {
            flat = flat * g.points + (base[a] + s * m[a]).rem_euclid(n) as usize;
        }
        flat
    };
    let values: Vec<f64> = (0..pg.len())
        .into_par_iter()
        .map(|f| {
            let idx = pg.multi_index(f);
            let base: Vec<i64> = (0..d).map(|a| x_nodes[a][idx[a]]).collect();
            let xi: Vec<f64> = (0..d).map(|a| pg.axes[d + a][idx[d + a]]).collect();
            let mut acc = 0.0;
            for m in &offsets {
                let phase = -2.0 * h / state.hbar * (0..d).map(|a| xi[a] * m[a] as f64).sum::<f64>();
                let e = Complex64::from_polar(1.0, phase);
                let (p, q) = (idx_of(&base, m, 1), idx_of(&base, m, -1));
                let rho: Complex64 = state
                    .weights
                    .iter()
                    .zip(&state.wavefunctions)
                    .map(|(l, psi)| psi[p] * psi[q].conj() * *l)
                    .sum();
                acc += (rho * e).re;
            }
            pre * acc
        })
        .collect();
    Ok(PhaseSpaceDensity { grid: pg.clone(), values })
}

/// Multilinear deposition of a particle ensemble on a phase grid; returns the density
/// and the mass that fell outside the grid.
pub fn deposit_phase(ensemble: &ClassicalEnsemble, pg: &PhaseGrid) -> Result<(PhaseSpaceDensity, f64)> {
    let d = ensemble.grid.dim;
    if pg.d != d {
        return Err(Error::invalid("phase_grid", "dimension differs from the ensemble"));
    }
    let k = 2 * d;
    let inv_dv = 1.0 / pg.cell_volume();
    let shape = pg.shape();
    let mut values = vec![0.0; pg.len()];
    let mut lost = 0.0;
    for i in 0..ensemble.len() {
        let w = ensemble.weights[i];
        let mut lower = vec![0usize; k];
        let mut frac = vec![0.0; k];
        let mut inside = true;
        for a in 0..k {
            let z = if a < d { ensemble.positions[i][a] } else { ensemble.velocities[i][a - d] };
            let s = (z - pg.axes[a][0]) / pg.spacing(a);
            let last = (shape[a] - 1) as f64;
            if !(s >= 0.0 && s <= last) {
                inside = false;
                break;
            }
            let fl = s.floor().min(last - 1.0);
            lower[a] = fl as usize;
            frac[a] = s - fl;
        }
        if !inside {
            lost += w;
            continue;
        }
        for c in 0..(1usize << k) {
            let mut flat = 0;
            let mut weight = 1.0;
            for a in 0..k {
                let up = c >> a & 1 == 1;
                flat = flat * shape[a] + lower[a] + up as usize;
                weight *= if up { frac[a] } else { 1.0 - frac[a] };
            }
            values[flat] += w * weight * inv_dv;
        }
    }
    Ok((PhaseSpaceDensity { grid: pg.clone(), values }, lost))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportResult {
    /// Richardson-extrapolated debiased value, clamped at 0.
    pub w2_squared: f64,
    pub epsilon: f64,
    /// Debiased values at `epsilon` and `epsilon / 2`.
    pub debiased: [f64; 2],
    /// L1 marginal residuals of the cross problem at `epsilon / 2`.
    pub marginal_errors: [f64; 2],
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinkhornOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        SinkhornOptions { tolerance: 1e-6, max_iterations: 5000 }
    }
}

struct AxisKernel {
    neg_cost: Vec<f64>,
    kernel: Vec<f64>,
    n: usize,
}

struct Separable {
    shape: Vec<usize>,
    axes: Vec<AxisKernel>,
}

impl Separable {
    fn new(pg: &PhaseGrid, eps: f64) -> Self {
        let axes = pg
            .axes
            .iter()
            .map(|ax| {
                let n = ax.len();
                let mut neg_cost = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..n {
                        neg_cost[i * n + j] = -(ax[i] - ax[j]).powi(2) / eps;
                    }
                }
                let kernel = neg_cost.iter().map(|c| c.exp()).collect();
                AxisKernel { neg_cost, kernel, n }
            })
            .collect();
        Separable { shape: pg.shape(), axes }
    }

    /// `out_i = log sum_j exp(phi_j - |z_i - z_j|^2 / eps)`, one axis at a time.
    fn log_apply(&self, phi: &[f64]) -> Vec<f64> {
        let mut cur = phi.to_vec();
        for (a, ak) in self.axes.iter().enumerate() {
            let n = ak.n;
            let post: usize = self.shape[a + 1..].iter().product();
            let block = n * post;
            let mut next = vec![0.0; cur.len()];
            next.par_chunks_mut(block).zip(cur.par_chunks(block)).for_each(|(dst, src)| {
                let mut line = vec![0.0; n];
                let mut scaled = vec![0.0; n];
                for p in 0..post {
                    for j in 0..n {
                        line[j] = src[j * post + p];
                    }
                    let top = line.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    if top == f64::NEG_INFINITY {
                        for i in 0..n {
                            dst[i * post + p] = f64::NEG_INFINITY;
                        }
                        continue;
                    }
                    for j in 0..n {
                        scaled[j] = (line[j] - top).exp();
                    }
                    for i in 0..n {
                        let row = &ak.kernel[i * n..(i + 1) * n];
                        let s: f64 = row.iter().zip(&scaled).map(|(k, e)| k * e).sum();
                        dst[i * post + p] = if s > 1e-290 {
                            top + s.ln()
                        } else {
                            let nc = &ak.neg_cost[i * n..(i + 1) * n];
                            let m = line.iter().zip(nc).map(|(l, c)| l + c).fold(f64::NEG_INFINITY, f64::max);
                            if m == f64::NEG_INFINITY {
                                m
                            } else {
                                m + line.iter().zip(nc).map(|(l, c)| (l + c - m).exp()).sum::<f64>().ln()
                            }
                        };
                    }
                }
            });
            cur = next;
        }
        cur
    }
}

struct Potentials {
    f: Vec<f64>,
    g: Vec<f64>,
}

struct Solve {
    value: f64,
    errors: [f64; 2],
    iterations: usize,
    converged: bool,
}

fn log_weights(a: &[f64]) -> Vec<f64> {
    a.iter().map(|&v| if v > 0.0 { v.ln() } else { f64::NEG_INFINITY }).collect()
}

fn dual_terms(la: &[f64], pot: &[f64], eps: f64) -> Vec<f64> {
    la.iter().zip(pot).map(|(l, p)| if *l == f64::NEG_INFINITY { *l } else { l + p / eps }).collect()
}

fn sinkhorn(
    pg: &PhaseGrid,
    a: &[f64],
    b: &[f64],
    schedule: &[f64],
    pot: &mut Potentials,
    opts: &SinkhornOptions,
) -> Solve {
    let la = log_weights(a);
    let lb = log_weights(b);
    let mut iterations = 0;
    let mut errors = [f64::INFINITY; 2];
    let mut converged = false;
    for (level, &eps) in schedule.iter().enumerate() {
        let last = level + 1 == schedule.len();
        let op = Separable::new(pg, eps);
        let (tol, cap) = if last { (opts.tolerance, opts.max_iterations) } else { (1e-3, 200) };
        let mut it = 0;
        loop {
            let r = op.log_apply(&dual_terms(&lb, &pot.g, eps));
            pot.f = r.iter().map(|v| -eps * v).collect();
            let c = op.log_apply(&dual_terms(&la, &pot.f, eps));
            pot.g = c.iter().map(|v| -eps * v).collect();
            it += 1;
            if it % 5 == 0 || it >= cap {
                let r = op.log_apply(&dual_terms(&lb, &pot.g, eps));
                let row: f64 = a
                    .iter()
                    .zip(pot.f.iter().zip(&r))
                    .filter(|(ai, _)| **ai > 0.0)
                    .map(|(ai, (fi, ri))| (ai * ((fi / eps + ri).exp() - 1.0)).abs())
                    .sum();
                errors = [row, 0.0];
                if row < tol {
                    converged = last;
                    break;
                }
                if it >= cap {
                    break;
                }
            }
        }
        iterations += it;
        log::debug!("sinkhorn level {level} eps {eps:.3e}: {it} iterations, marginal error {:.3e}", errors[0]);
    }
    let value = a.iter().zip(&pot.f).filter(|(x, _)| **x > 0.0).map(|(x, f)| x * f).sum::<f64>()
        + b.iter().zip(&pot.g).filter(|(x, _)| **x > 0.0).map(|(x, g)| x * g).sum::<f64>();
    Solve { value, errors, iterations, converged }
}

/// Self-transport `OT(a, a)` with the averaged symmetric update `f <- (f + T f) / 2`;
/// plain alternating updates oscillate on this problem.
fn sinkhorn_symmetric(pg: &PhaseGrid, a: &[f64], schedule: &[f64], pot: &mut Vec<f64>, opts: &SinkhornOptions) -> Solve {
    let la = log_weights(a);
    let mut iterations = 0;
    let mut error = f64::INFINITY;
    let mut converged = false;
    for (level, &eps) in schedule.iter().enumerate() {
        let last = level + 1 == schedule.len();
        let op = Separable::new(pg, eps);
        let (tol, cap) = if last { (opts.tolerance, opts.max_iterations) } else { (1e-3, 200) };
        let mut it = 0;
        loop {
            let r = op.log_apply(&dual_terms(&la, pot, eps));
            it += 1;
            if it % 5 == 0 || it >= cap {
                error = a
                    .iter()
                    .zip(pot.iter().zip(&r))
                    .filter(|(ai, _)| **ai > 0.0)
                    .map(|(ai, (fi, ri))| (ai * ((fi / eps + ri).exp() - 1.0)).abs())
                    .sum();
                if error < tol {
                    converged = last;
                    break;
                }
            }
            pot.iter_mut().zip(&r).for_each(|(f, ri)| *f = 0.5 * (*f - eps * ri));
            if it >= cap {
                break;
            }
        }
        iterations += it;
        log::debug!("symmetric level {level} eps {eps:.3e}: {it} iterations, marginal error {error:.3e}");
    }
    let value = 2.0 * a.iter().zip(pot.iter()).filter(|(x, _)| **x > 0.0).map(|(x, f)| x * f).sum::<f64>();
    Solve { value, errors: [error, 0.0], iterations, converged }
}

fn eps_schedule(pg: &PhaseGrid, target: f64) -> Vec<f64> {
    let diameter2: f64 = pg.axes.iter().map(|a| (a[a.len() - 1] - a[0]).powi(2)).sum();
    let mut out = Vec::new();
    let mut e = diameter2.max(target);
    while e > target * 1.0001 {
        out.push(e);
        e *= 0.5;
    }
    out.push(target);
    out
}

fn normalized_masses(f: &PhaseSpaceDensity) -> Vec<f64> {
    let dv = f.grid.cell_volume();
    let m = f.mass();
    f.values.iter().map(|v| (v * dv / m).max(0.0)).collect()
}

/// Debiased entropic `W_2^2` between two densities on the same phase grid, with
/// two-level Richardson extrapolation `2 S(eps/2) - S(eps)`.
pub fn wasserstein2(f: &PhaseSpaceDensity, g: &PhaseSpaceDensity, epsilon: f64) -> Result<TransportResult> {
    wasserstein2_with(f, g, epsilon, &SinkhornOptions::default())
}

pub fn wasserstein2_with(
    f: &PhaseSpaceDensity,
    g: &PhaseSpaceDensity,
    epsilon: f64,
    opts: &SinkhornOptions,
) -> Result<TransportResult> {
    if f.grid != g.grid {
        return Err(Error::invalid("phase_grid", "densities live on different phase grids"));
    }
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon", "must be > 0"));
    }
    let (mf, mg) = (f.mass(), g.mass());
    if !(mf > 0.0 && mg > 0.0) {
        return Err(Error::invalid("mass", "transport needs positive masses"));
    }
    if (mf - mg).abs() > 1e-6 * mf.max(mg) {
        log::warn!("masses differ ({mf} vs {mg}); both renormalized to 1");
    }
    let a = normalized_masses(f);
    let b = normalized_masses(g);
    let pg = &f.grid;
    let n = pg.len();
    let zero = || Potentials { f: vec![0.0; n], g: vec![0.0; n] };
    let mut pab = zero();
    let (mut paa, mut pbb) = (vec![0.0; n], vec![0.0; n]);
    let mut debiased = [0.0; 2];
    let mut iterations = 0;
    let mut errors = [0.0; 2];
    let mut converged = true;
    for (k, eps) in [epsilon, 0.5 * epsilon].into_iter().enumerate() {
        let schedule = if k == 0 { eps_schedule(pg, eps) } else { vec![eps] };
        let ab = sinkhorn(pg, &a, &b, &schedule, &mut pab, opts);
        let aa = sinkhorn_symmetric(pg, &a, &schedule, &mut paa, opts);
        let bb = sinkhorn_symmetric(pg, &b, &schedule, &mut pbb, opts);
        debiased[k] = ab.value - 0.5 * aa.value - 0.5 * bb.value;
        iterations += ab.iterations + aa.iterations + bb.iterations;
        converged &= ab.converged && aa.converged && bb.converged;
        if k == 1 {
            // after the g-update the column marginal is exact by construction
            errors = [ab.errors[0], 0.0];
        }
    }
    if !converged {
        log::warn!("Sinkhorn did not reach tolerance {} in {} iterations", opts.tolerance, opts.max_iterations);
    }
    Ok(TransportResult {
        w2_squared: (2.0 * debiased[1] - debiased[0]).max(0.0),
        epsilon,
        debiased,
        marginal_errors: errors,
        iterations,
        converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub w2_squared: f64,
    pub transport: TransportResult,
    /// Implied window `[max(d hbar, W2^2 - d hbar), inf)` for the quantum-classical distance squared.
    pub window_lower: f64,
    pub floor: f64,
}

/// `W_2(f, husimi(state))^2` and the implied window for the semiclassical distance.
pub fn semiclassical_gap(
    f_classical: &PhaseSpaceDensity,
    state: &QuantumMixedState,
    epsilon: f64,
) -> Result<GapReport> {
    let hus = husimi(state, &f_classical.grid)?;
    let transport = wasserstein2(f_classical, &hus, epsilon)?;
    Ok(gap_from_transport(transport, state.grid.dim, state.hbar))
}

pub fn gap_from_transport(transport: TransportResult, d: usize, hbar: f64) -> GapReport {
    let floor = d as f64 * hbar;
    GapReport {
        w2_squared: transport.w2_squared,
        window_lower: floor.max(transport.w2_squared - floor),
        floor,
        transport,
    }
}

/// `max(sqrt(d hbar), W0^{e^{t/sqrt2}} e^{lambda (e^{t/sqrt2} - 1)})`.
pub fn growth_envelope(w0_sq: f64, lambda: f64, hbar: f64, d: usize, t: f64) -> f64 {
    let e = (t / std::f64::consts::SQRT_2).exp();
    let w0 = w0_sq.max(0.0).sqrt();
    (d as f64 * hbar).sqrt().max(w0.powf(e) * (lambda * (e - 1.0)).exp())
}

/// `lambda = C_d (1 + B sup_t (||rho_f||_inf + ||rho||_inf) / (1 + t^{n0 (1 + c_n / b')}))`.
pub fn assemble_lambda(
    c_d: f64,
    besov_bound: f64,
    samples: &[(f64, f64)],
    n0: usize,
    c_n: f64,
    b: f64,
) -> f64 {
    let b_conj = crate::certificates::conjugate(b);
    let expo = n0 as f64 * (1.0 + c_n / b_conj);
    let sup = samples.iter().map(|(t, s)| s / (1.0 + t.powf(expo))).fold(0.0, f64::max);
    c_d * (1.0 + besov_bound * sup)
}
