//! Velocity, position and transported moments, weighted densities, Lebesgue and
//! Schatten norms, and interpolation-inequality ratios.
//!
//! Quantum moments are traces against the mixture `sum_j lambda_j |psi_j><psi_j|`;
//! `p = -i hbar grad` acts spectrally, positions are box-centered. Classical moments
//! are weighted particle sums in whole-space coordinates.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::certificates::conjugate;
use crate::error::{Error, Result};
use crate::grid::{Grid, Spectral};
use crate::kernels::KernelSpec;
use crate::state::{norm_sq, ClassicalEnsemble, DensityField, QuantumMixedState};
use crate::transport::impulsion_boost;

fn check_even(n: usize) -> Result<()> {
    if n % 2 == 1 {
        Err(Error::Unsupported(format!("odd moment order n = {n}")))
    } else {
        Ok(())
    }
}

/// `p_axis psi`, spectral.
fn apply_momentum(spectral: &Spectral, hbar: f64, psi: &[Complex64], axis: usize) -> Vec<Complex64> {
    let g = *spectral.grid();
    let mut data = psi.to_vec();
    spectral.forward(&mut data);
    for (f, z) in data.iter_mut().enumerate() {
        *z *= hbar * g.wavenumber(g.multi_index(f)[axis]);
    }
    spectral.inverse(&mut data);
    data
}

/// `(x_axis - t p_axis) psi`.
fn apply_transported(
    spectral: &Spectral,
    hbar: f64,
    t: f64,
    psi: &[Complex64],
    axis: usize,
) -> Vec<Complex64> {
    let g = *spectral.grid();
    let mut out = if t == 0.0 { vec![Complex64::default(); psi.len()] } else { apply_momentum(spectral, hbar, psi, axis) };
    for (f, z) in out.iter_mut().enumerate() {
        *z = psi[f] * g.position(f)[axis] - *z * t;
    }
    out
}

/// Operator family `B_i = x_i - t p_i` (or `p_i` alone) and `A = sum_i B_i^2`.
#[derive(Clone, Copy)]
enum Family {
    Momentum,
    Transported(f64),
}

struct Ops {
    spectral: Spectral,
    grid: Grid,
    hbar: f64,
    family: Family,
}

impl Ops {
    fn new(grid: Grid, hbar: f64, family: Family) -> Self {
        Ops { spectral: Spectral::new(grid), grid, hbar, family }
    }

    fn component(&self, psi: &[Complex64], axis: usize) -> Vec<Complex64> {
        match self.family {
            Family::Momentum => apply_momentum(&self.spectral, self.hbar, psi, axis),
            Family::Transported(t) => apply_transported(&self.spectral, self.hbar, t, psi, axis),
        }
    }

    fn square(&self, psi: &[Complex64]) -> Vec<Complex64> {
        if let Family::Momentum = self.family {
            let mut data = psi.to_vec();
            self.spectral.forward(&mut data);
            let h2 = self.hbar * self.hbar;
            for (z, k2) in data.iter_mut().zip(self.grid.k_squared()) {
                *z *= h2 * k2;
            }
            self.spectral.inverse(&mut data);
            return data;
        }
        let mut acc = vec![Complex64::default(); psi.len()];
        for axis in 0..self.grid.dim {
            let once = self.component(psi, axis);
            let twice = self.component(&once, axis);
            acc.iter_mut().zip(&twice).for_each(|(a, b)| *a += b);
        }
        acc
    }

    fn square_power(&self, psi: &[Complex64], m: usize) -> Vec<Complex64> {
        let mut cur = psi.to_vec();
        for _ in 0..m {
            cur = self.square(&cur);
        }
        cur
    }

    /// `<psi, A^{n/2} psi>` with `n` even.
    fn expectation(&self, psi: &[Complex64], n: usize) -> f64 {
        let m = n / 2;
        let half = self.square_power(psi, m / 2);
        if m % 2 == 0 {
            norm_sq(&self.grid, &half)
        } else {
            (0..self.grid.dim).map(|a| norm_sq(&self.grid, &self.component(&half, a))).sum()
        }
    }

    /// `|B^{k/2} psi|^2` pointwise, summed over vector components when `k/2` is odd.
    fn weighted(&self, psi: &[Complex64], k: usize) -> Vec<f64> {
        let m = k / 2;
        let half = self.square_power(psi, m / 2);
        if m % 2 == 0 {
            half.iter().map(|z| z.norm_sqr()).collect()
        } else {
            let mut out = vec![0.0; psi.len()];
            for a in 0..self.grid.dim {
                for (o, z) in out.iter_mut().zip(self.component(&half, a)) {
                    *o += z.norm_sqr();
                }
            }
            out
        }
    }
}

/// `M_n = Tr(|p|^n rho)`.
pub fn moment_m(state: &QuantumMixedState, n: usize) -> Result<f64> {
    check_even(n)?;
    if n == 0 {
        return Ok(state.mass());
    }
    let g = state.grid;
    let spectral = Spectral::new(g);
    let weights: Vec<f64> = g
        .k_squared()
        .iter()
        .map(|k2| (state.hbar * state.hbar * k2).powi(n as i32 / 2))
        .collect();
    let scale = g.cell_volume() / g.len() as f64;
    let mut total = 0.0;
    for (lambda, psi) in state.weights.iter().zip(&state.wavefunctions) {
        let mut data = psi.clone();
        spectral.forward(&mut data);
        let s: f64 = data.iter().zip(&weights).map(|(z, w)| w * z.norm_sqr()).sum();
        total += lambda * s * scale;
    }
    Ok(total)
}

/// `N_n = int rho |x|^n` in centered coordinates.
pub fn moment_n(state: &QuantumMixedState, n: usize) -> Result<f64> {
    check_even(n)?;
    Ok(density_moment(&state.density(), n))
}

pub fn density_moment(rho: &DensityField, n: usize) -> f64 {
    let g = rho.grid;
    let r2 = g.r_squared();
    rho.values.iter().zip(&r2).map(|(v, r)| v * r.powi(n as i32 / 2)).sum::<f64>() * g.cell_volume()
}

/// Fraction of spectral energy located in the outer third of each axis' band.
fn high_frequency_fraction(grid: &Grid, psi: &[Complex64]) -> f64 {
    let spectral = Spectral::new(*grid);
    let mut data = psi.to_vec();
    spectral.forward(&mut data);
    let n = grid.points as i64;
    let cut = n / 3;
    let (mut hi, mut total) = (0.0, 0.0);
    for (f, z) in data.iter().enumerate() {
        let e = z.norm_sqr();
        total += e;
        let idx = grid.multi_index(f);
        let outer = idx.iter().take(grid.dim).any(|&i| {
            let s = if (i as i64) < n / 2 { i as i64 } else { i as i64 - n };
            s.abs() > cut
        });
        if outer {
            hi += e;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        hi / total
    }
}

const BOOST_RESOLUTION: f64 = 1e-12;

/// `L_n(t) = Tr(|x - t p|^n rho)` through the boost identity
/// `L_n = t^n M_n(boost(state, 1/t))`. Only meaningful when the boosted state is
/// spectrally resolved on the grid; see [`boost_route_resolved`].
pub fn moment_l_boost(state: &QuantumMixedState, n: usize, t: f64) -> Result<f64> {
    check_even(n)?;
    if t == 0.0 {
        return moment_n(state, n);
    }
    let boosted = impulsion_boost(state, 1.0 / t);
    Ok(t.powi(n as i32) * moment_m(&boosted, n)?)
}

pub fn boost_route_resolved(state: &QuantumMixedState, t: f64) -> bool {
    if t == 0.0 {
        return true;
    }
    let boosted = impulsion_boost(state, 1.0 / t);
    boosted
        .wavefunctions
        .iter()
        .all(|psi| high_frequency_fraction(&boosted.grid, psi) < BOOST_RESOLUTION)
}

/// `L_n(t)` by applying `x - t p` directly.
pub fn moment_l_direct(state: &QuantumMixedState, n: usize, t: f64) -> Result<f64> {
    check_even(n)?;
    if t == 0.0 {
        return moment_n(state, n);
    }
    let ops = Ops::new(state.grid, state.hbar, Family::Transported(t));
    Ok(state.weights.iter().zip(&state.wavefunctions).map(|(l, psi)| l * ops.expectation(psi, n)).sum())
}

/// `L_n(t)`; the boost route when the boosted state is resolved, the direct
/// operator route otherwise. `t = 0` returns `N_n`.
pub fn moment_l(state: &QuantumMixedState, n: usize, t: f64) -> Result<f64> {
    check_even(n)?;
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("moment_L needs t >= 0, got {t}")));
    }
    if t == 0.0 {
        moment_n(state, n)
    } else if boost_route_resolved(state, t) {
        moment_l_boost(state, n, t)
    } else {
        moment_l_direct(state, n, t)
    }
}

/// `rho_k = sum_j lambda_j |p^{k/2} psi_j|^2`.
pub fn weighted_density(state: &QuantumMixedState, k: usize) -> Result<DensityField> {
    weighted_field(state, k, Family::Momentum)
}

/// `l_k = sum_j lambda_j |(x - t p)^{k/2} psi_j|^2`.
pub fn transported_density(state: &QuantumMixedState, k: usize, t: f64) -> Result<DensityField> {
    weighted_field(state, k, Family::Transported(t))
}

fn weighted_field(state: &QuantumMixedState, k: usize, family: Family) -> Result<DensityField> {
    check_even(k)?;
    if k == 0 {
        return Ok(state.density());
    }
    let ops = Ops::new(state.grid, state.hbar, family);
    let mut values = vec![0.0; state.grid.len()];
    for (l, psi) in state.weights.iter().zip(&state.wavefunctions) {
        for (v, w) in values.iter_mut().zip(ops.weighted(psi, k)) {
            *v += l * w;
        }
    }
    Ok(DensityField { grid: state.grid, values })
}

/// Grid quadrature of `||f||_{L^p}`; `p = inf` gives the max.
pub fn lp_norm(field: &DensityField, p: f64) -> f64 {
    if p.is_infinite() {
        return field.values.iter().fold(0.0, |m, v| m.max(v.abs()));
    }
    let dv = field.grid.cell_volume();
    (field.values.iter().map(|v| v.abs().powf(p)).sum::<f64>() * dv).powf(1.0 / p)
}

/// `||rho_hat||_{L^r} = h^{-d/r'} (sum_j lambda_j^r)^{1/r}` with `h = 2 pi hbar`.
pub fn quantum_lebesgue_norm(state: &QuantumMixedState, r: f64) -> f64 {
    let h = 2.0 * std::f64::consts::PI * state.hbar;
    let d = state.grid.dim as f64;
    let rc = conjugate(r);
    let schatten = if r.is_infinite() {
        state.weights.iter().fold(0.0, |m: f64, l| m.max(l.abs()))
    } else {
        state.weights.iter().map(|l| l.abs().powf(r)).sum::<f64>().powf(1.0 / r)
    };
    let prefactor = if rc.is_infinite() { 1.0 } else { h.powf(-d / rc) };
    prefactor * schatten
}

/// Exponents `(p_{n,k}, theta)` of the kinetic interpolation inequality.
pub fn interpolation_exponents(d: usize, n: usize, k: usize, r: f64) -> Result<(f64, f64)> {
    if k > n || n == 0 {
        return Err(Error::Domain(format!("need 0 <= k <= n and n > 0, got k = {k}, n = {n}")));
    }
    let rc = conjugate(r);
    if rc.is_infinite() {
        return Err(Error::Domain("r = 1 gives r' = inf; the inequality degenerates".into()));
    }
    let pn = rc + d as f64 / n as f64;
    let pnk_conj = if k == n { f64::INFINITY } else { n as f64 / (n - k) as f64 * pn };
    let theta = if pnk_conj.is_infinite() { 0.0 } else { rc / pnk_conj };
    Ok((conjugate(pnk_conj), theta))
}

/// `||rho_k||_{L^{p_{n,k}}} / (M_n^{1-theta} ||rho_hat||_{L^r}^theta)`, or with `t` the
/// transported form `t^{d/p'_{n,k}} ||l_k||_{L^{p_{n,k}}} / (L_n^{1-theta} ||rho_hat||^theta)`.
pub fn interpolation_ratio(
    state: &QuantumMixedState,
    n: usize,
    k: usize,
    r: f64,
    t: Option<f64>,
) -> Result<f64> {
    check_even(n)?;
    check_even(k)?;
    let d = state.grid.dim;
    let (p, theta) = interpolation_exponents(d, n, k, r)?;
    let q = quantum_lebesgue_norm(state, r);
    let (numerator, moment) = match t {
        None => (lp_norm(&weighted_density(state, k)?, p), moment_m(state, n)?),
        Some(t) if t > 0.0 => {
            let pc = conjugate(p);
            let weight = if pc.is_infinite() { 1.0 } else { t.powf(d as f64 / pc) };
            (weight * lp_norm(&transported_density(state, k, t)?, p), moment_l_direct(state, n, t)?)
        }
        Some(t) => return Err(Error::Domain(format!("transported ratio needs t > 0, got {t}"))),
    };
    if !(moment > 0.0) || !(q > 0.0) {
        return Err(Error::UndefinedRatio(format!(
            "denominator vanishes (moment {moment:e}, Lebesgue norm {q:e})"
        )));
    }
    Ok(numerator / (moment.powf(1.0 - theta) * q.powf(theta)))
}

pub fn classical_moment_l(ensemble: &ClassicalEnsemble, n: usize, t: f64) -> f64 {
    classical_sum(ensemble, n, |x, v| x - t * v)
}

pub fn classical_moment_m(ensemble: &ClassicalEnsemble, n: usize) -> f64 {
    classical_sum(ensemble, n, |_, v| v)
}

pub fn classical_moment_n(ensemble: &ClassicalEnsemble, n: usize) -> f64 {
    classical_sum(ensemble, n, |x, _| x)
}

fn classical_sum(ensemble: &ClassicalEnsemble, n: usize, f: impl Fn(f64, f64) -> f64) -> f64 {
    let d = ensemble.grid.dim;
    ensemble
        .positions
        .iter()
        .zip(&ensemble.velocities)
        .zip(&ensemble.weights)
        .map(|((x, v), w)| {
            let r2: f64 = (0..d).map(|a| f(x[a], v[a]).powi(2)).sum();
            w * if n % 2 == 0 { r2.powi(n as i32 / 2) } else { r2.sqrt().powi(n as i32) }
        })
        .sum()
}

/// One row of a moment time series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRecord {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    /// `L_n`, `M_n`, `N_n` in the order of [`MomentSeries::orders`].
    pub l: Vec<f64>,
    pub m: Vec<f64>,
    pub n: Vec<f64>,
    /// `||rho||_{L^p}` in the order of [`MomentSeries::lp_exponents`].
    pub lp: Vec<f64>,
    pub rho_max: f64,
    pub boundary_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub scenario: String,
    pub hbar: f64,
    pub d: usize,
    pub kernel: KernelSpec,
    /// "quantum" or "classical".
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSeries {
    pub meta: SeriesMeta,
    pub orders: Vec<usize>,
    pub lp_exponents: Vec<f64>,
    pub records: Vec<MomentRecord>,
    /// Set when the run stopped at the validity horizon (boundary mass).
    pub horizon_breached: bool,
}

impl MomentSeries {
    pub fn new(meta: SeriesMeta, orders: Vec<usize>, lp_exponents: Vec<f64>) -> Self {
        MomentSeries { meta, orders, lp_exponents, records: Vec::new(), horizon_breached: false }
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn order_index(&self, n: usize) -> Option<usize> {
        self.orders.iter().position(|&o| o == n)
    }

    pub fn lp_index(&self, p: f64) -> Option<usize> {
        self.lp_exponents.iter().position(|&q| (q - p).abs() < 1e-12 || (q.is_infinite() && p.is_infinite()))
    }

    pub fn column_l(&self, n: usize) -> Option<Vec<f64>> {
        let i = self.order_index(n)?;
        Some(self.records.iter().map(|r| r.l[i]).collect())
    }

    pub fn column_m(&self, n: usize) -> Option<Vec<f64>> {
        let i = self.order_index(n)?;
        Some(self.records.iter().map(|r| r.m[i]).collect())
    }

    pub fn column_n(&self, n: usize) -> Option<Vec<f64>> {
        let i = self.order_index(n)?;
        Some(self.records.iter().map(|r| r.n[i]).collect())
    }

    pub fn column_lp(&self, p: f64) -> Option<Vec<f64>> {
        let i = self.lp_index(p)?;
        Some(self.records.iter().map(|r| r.lp[i]).collect())
    }

    /// Checks the series invariants: increasing times, constant mass.
    pub fn validate(&self) -> Result<()> {
        for w in self.records.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(Error::invalid("times", "not strictly increasing"));
            }
        }
        if let Some(first) = self.records.first() {
            for r in &self.records {
                if (r.mass - first.mass).abs() > 1e-10 * first.mass.abs().max(1e-300) {
                    return Err(Error::invalid("mass", format!("drifted from {} to {}", first.mass, r.mass)));
                }
            }
        }
        Ok(())
    }

    /// Scalar multiple of every `L_n` column (used for negative controls).
    pub fn scaled_l(&self, factor: f64) -> MomentSeries {
        let mut out = self.clone();
        for r in &mut out.records {
            r.l.iter_mut().for_each(|v| *v *= factor);
        }
        out
    }
}

/// Observables of a quantum state at time `t`.
pub fn quantum_record(
    state: &QuantumMixedState,
    t: f64,
    energy: f64,
    orders: &[usize],
    lp_exponents: &[f64],
) -> Result<MomentRecord> {
    let rho = state.density();
    let mut rec = MomentRecord {
        t,
        mass: state.mass(),
        energy,
        l: Vec::with_capacity(orders.len()),
        m: Vec::with_capacity(orders.len()),
        n: Vec::with_capacity(orders.len()),
        lp: lp_exponents.iter().map(|&p| lp_norm(&rho, p)).collect(),
        rho_max: rho.max(),
        boundary_mass: rho.boundary_mass(),
    };
    let resolved = t == 0.0 || boost_route_resolved(state, t);
    for &n in orders {
        rec.l.push(if t == 0.0 {
            density_moment(&rho, n)
        } else if resolved {
            moment_l_boost(state, n, t)?
        } else {
            moment_l_direct(state, n, t)?
        });
        rec.m.push(moment_m(state, n)?);
        rec.n.push(density_moment(&rho, n));
    }
    Ok(rec)
}

/// Observables of a particle ensemble at time `t`; `rho` is its deposited density.
pub fn classical_record(
    ensemble: &ClassicalEnsemble,
    rho: &DensityField,
    t: f64,
    energy: f64,
    orders: &[usize],
    lp_exponents: &[f64],
) -> MomentRecord {
    MomentRecord {
        t,
        mass: ensemble.mass(),
        energy,
        l: orders.iter().map(|&n| classical_moment_l(ensemble, n, t)).collect(),
        m: orders.iter().map(|&n| classical_moment_m(ensemble, n)).collect(),
        n: orders.iter().map(|&n| classical_moment_n(ensemble, n)).collect(),
        lp: lp_exponents.iter().map(|&p| lp_norm(rho, p)).collect(),
        rho_max: rho.max(),
        boundary_mass: rho.boundary_mass(),
    }
}
