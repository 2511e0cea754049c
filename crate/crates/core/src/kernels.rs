//! Radial interaction kernels, their weak-Lorentz gradient norms, and the
//! mean-field potential / force by spectral convolution on the periodic grid.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Spectral, MAX_DIM};
use crate::state::DensityField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelFamily {
    /// No interaction.
    None,
    /// `|x|^{-a_pow}`.
    PowerLaw { a_pow: f64 },
    /// `1/|x|` inside the unit ball, `|x|^{-1-eps_tail}` outside.
    TruncatedCoulomb { eps_tail: f64 },
    /// Smooth `exp(-|x|^2 / (2 width^2))`, used for convergence studies.
    Gaussian { width: f64 },
}

fn default_sign() -> f64 {
    -1.0
}

fn default_coupling() -> f64 {
    1.0
}

fn default_lorentz_b() -> f64 {
    1.45
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(flatten)]
    pub family: KernelFamily,
    /// +1 repulsive, -1 attractive.
    #[serde(default = "default_sign")]
    pub sign: f64,
    /// Overall strength multiplying the profile.
    #[serde(default = "default_coupling")]
    pub coupling: f64,
    /// Exponent at which the weak norm of the gradient is evaluated.
    #[serde(default = "default_lorentz_b")]
    pub lorentz_b: f64,
    /// User bound standing in for the Besov norm of the gradient.
    #[serde(default)]
    pub besov_bound: Option<f64>,
}

impl KernelSpec {
    pub fn none() -> Self {
        KernelSpec {
            family: KernelFamily::None,
            sign: 1.0,
            coupling: 1.0,
            lorentz_b: default_lorentz_b(),
            besov_bound: None,
        }
    }

    pub fn truncated_coulomb(sign: f64, eps_tail: f64) -> Self {
        KernelSpec { family: KernelFamily::TruncatedCoulomb { eps_tail }, sign, ..Self::none() }
    }

    pub fn power_law(sign: f64, a_pow: f64) -> Self {
        KernelSpec { family: KernelFamily::PowerLaw { a_pow }, sign, ..Self::none() }
    }

    pub fn gaussian(sign: f64, width: f64) -> Self {
        KernelSpec { family: KernelFamily::Gaussian { width }, sign, ..Self::none() }
    }

    pub fn with_coupling(mut self, coupling: f64) -> Self {
        self.coupling = coupling;
        self
    }

    pub fn with_lorentz_b(mut self, b: f64) -> Self {
        self.lorentz_b = b;
        self
    }

    pub fn is_none(&self) -> bool {
        matches!(self.family, KernelFamily::None) || self.coupling == 0.0
    }

    /// Signed prefactor of the radial profile.
    pub fn amplitude(&self) -> f64 {
        self.sign * self.coupling
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.sign != 1.0 && self.sign != -1.0 {
            return Err(Error::invalid("kernel.sign", format!("{} must be +1 or -1", self.sign)));
        }
        if !(self.coupling >= 0.0 && self.coupling.is_finite()) {
            return Err(Error::invalid("kernel.coupling", "must be a finite nonnegative number"));
        }
        if let Some(b) = self.besov_bound {
            if !(b >= 0.0) {
                return Err(Error::invalid("kernel.besov_bound", "must be >= 0"));
            }
        }
        match self.family {
            KernelFamily::None => Ok(()),
            KernelFamily::PowerLaw { a_pow } => {
                if !(a_pow > 0.0 && a_pow < d as f64 - 1.0) {
                    Err(Error::invalid(
                        "kernel.a_pow",
                        format!("{a_pow} outside (0, d-1) = (0, {})", d as f64 - 1.0),
                    ))
                } else {
                    Ok(())
                }
            }
            KernelFamily::TruncatedCoulomb { eps_tail } => {
                if !(eps_tail > 0.0) {
                    Err(Error::invalid("kernel.eps_tail", "must be > 0"))
                } else if d < 2 {
                    Err(Error::invalid("kernel.family", "the 1/|x| core is not integrable in d = 1"))
                } else {
                    Ok(())
                }
            }
            KernelFamily::Gaussian { width } => {
                if !(width > 0.0) {
                    Err(Error::invalid("kernel.width", "must be > 0"))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Unsigned radial profile.
    pub fn profile(&self, r: f64) -> f64 {
        match self.family {
            KernelFamily::None => 0.0,
            KernelFamily::PowerLaw { a_pow } => r.powf(-a_pow),
            KernelFamily::TruncatedCoulomb { eps_tail } => {
                if r <= 1.0 {
                    1.0 / r
                } else {
                    r.powf(-1.0 - eps_tail)
                }
            }
            KernelFamily::Gaussian { width } => (-r * r / (2.0 * width * width)).exp(),
        }
    }

    /// Unsigned `|grad K|(r)` without the coupling factor.
    pub fn gradient_profile(&self, r: f64) -> f64 {
        match self.family {
            KernelFamily::None => 0.0,
            KernelFamily::PowerLaw { a_pow } => a_pow * r.powf(-a_pow - 1.0),
            KernelFamily::TruncatedCoulomb { eps_tail } => {
                if r < 1.0 {
                    1.0 / (r * r)
                } else {
                    (1.0 + eps_tail) * r.powf(-2.0 - eps_tail)
                }
            }
            KernelFamily::Gaussian { width } => {
                r / (width * width) * (-r * r / (2.0 * width * width)).exp()
            }
        }
    }

    fn is_singular(&self) -> bool {
        matches!(self.family, KernelFamily::PowerLaw { .. } | KernelFamily::TruncatedCoulomb { .. })
    }
}

/// Exact kernel value `K(x)`.
pub fn eval_kernel(spec: &KernelSpec, x: &[f64]) -> Result<f64> {
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if r == 0.0 && spec.is_singular() {
        return Err(Error::Singularity);
    }
    Ok(spec.amplitude() * spec.profile(r))
}

pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => PI,
        3 => 4.0 * PI / 3.0,
        _ => PI.powf(d as f64 / 2.0) / gamma_half_integer(d + 2),
    }
}

// Gamma(m / 2) for integer m >= 1.
fn gamma_half_integer(m: usize) -> f64 {
    if m == 1 {
        PI.sqrt()
    } else if m == 2 {
        1.0
    } else {
        (m as f64 / 2.0 - 1.0) * gamma_half_integer(m - 2)
    }
}

/// Radial interval on which `|grad K|` is monotone.
#[derive(Debug, Clone, Copy)]
struct Piece {
    lo: f64,
    hi: f64,
}

fn monotone_pieces(spec: &KernelSpec) -> Vec<Piece> {
    match spec.family {
        KernelFamily::None => vec![],
        KernelFamily::PowerLaw { .. } => vec![Piece { lo: 0.0, hi: f64::INFINITY }],
        KernelFamily::TruncatedCoulomb { .. } => {
            vec![Piece { lo: 0.0, hi: 1.0 }, Piece { lo: 1.0, hi: f64::INFINITY }]
        }
        KernelFamily::Gaussian { width } => {
            vec![Piece { lo: 0.0, hi: width }, Piece { lo: width, hi: f64::INFINITY }]
        }
    }
}

// Sub-interval of a monotone piece where g(r) > t.
fn superlevel_interval(spec: &KernelSpec, piece: Piece, t: f64) -> Option<(f64, f64)> {
    let g = |r: f64| spec.gradient_profile(r);
    // Closed forms for power-type pieces.
    match spec.family {
        KernelFamily::PowerLaw { a_pow } => {
            let r = (a_pow / t).powf(1.0 / (a_pow + 1.0));
            return Some((0.0, r));
        }
        KernelFamily::TruncatedCoulomb { eps_tail } => {
            let r = if piece.hi <= 1.0 {
                t.powf(-0.5).min(1.0)
            } else {
                ((1.0 + eps_tail) / t).powf(1.0 / (2.0 + eps_tail)).max(1.0)
            };
            let (a, b) = (piece.lo, r.min(piece.hi));
            return if b > a { Some((a, b)) } else { None };
        }
        _ => {}
    }
    // Monotone bisection for the remaining families.
    let lo_val = if piece.lo == 0.0 { g(1e-300_f64.max(piece.lo)) } else { g(piece.lo) };
    let hi_r = if piece.hi.is_finite() { piece.hi } else { piece.lo.max(1.0) * 1e3 };
    let hi_val = g(hi_r);
    let increasing = hi_val > lo_val;
    let above = |r: f64| g(r) > t;
    let (mut a, mut b) = (piece.lo, hi_r);
    if increasing {
        if !above(b) {
            return None;
        }
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if above(m) {
                b = m;
            } else {
                a = m;
            }
        }
        Some((b, piece.hi))
    } else {
        if !above(piece.lo.max(1e-300)) {
            return None;
        }
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if above(m) {
                a = m;
            } else {
                b = m;
            }
        }
        Some((piece.lo, a))
    }
}

/// Distribution function `|{x : |grad K|(x) > t}|` of the unsigned gradient profile.
pub fn gradient_distribution(spec: &KernelSpec, d: usize, t: f64) -> f64 {
    let omega = unit_ball_volume(d);
    monotone_pieces(spec)
        .into_iter()
        .filter_map(|p| superlevel_interval(spec, p, t))
        .map(|(a, b)| omega * (b.powi(d as i32) - a.powi(d as i32)))
        .sum()
}

// Power-like asymptotics (constant, exponent) of |grad K| at the origin and at infinity.
fn asymptotics(spec: &KernelSpec) -> (Option<(f64, f64)>, Option<(f64, f64)>) {
    match spec.family {
        KernelFamily::PowerLaw { a_pow } => (Some((a_pow, a_pow + 1.0)), Some((a_pow, a_pow + 1.0))),
        KernelFamily::TruncatedCoulomb { eps_tail } => {
            (Some((1.0, 2.0)), Some((1.0 + eps_tail, 2.0 + eps_tail)))
        }
        _ => (None, None),
    }
}

/// `sup_t t |{|grad K| > t}|^{1/b}` for the kernel's gradient magnitude.
pub fn lorentz_weak_norm(spec: &KernelSpec, b: f64, d: usize) -> Result<f64> {
    if !(b >= 1.0) {
        return Err(Error::invalid("b", format!("{b} must be >= 1")));
    }
    spec.validate(d)?;
    if spec.is_none() {
        return Ok(0.0);
    }
    let scale = spec.coupling;
    let omega = unit_ball_volume(d);
    let df = d as f64;
    let (origin, tail) = asymptotics(spec);
    let mut limit: f64 = 0.0;
    for (regime, asym) in [("origin", origin), ("tail", tail)] {
        if let Some((c, q)) = asym {
            let exponent = 1.0 - df / (q * b);
            let diverges = if regime == "origin" { exponent > 1e-14 } else { exponent < -1e-14 };
            if diverges {
                return Err(Error::Divergence {
                    regime,
                    detail: format!(
                        "|grad K| ~ {c} r^-{q} gives t*mu(t)^(1/b) ~ t^{exponent:.4} as t -> {}",
                        if regime == "origin" { "infinity" } else { "0" }
                    ),
                });
            }
            if exponent.abs() <= 1e-14 {
                limit = limit.max(omega.powf(1.0 / b) * c.powf(df / (q * b)));
            }
        }
    }
    if let KernelFamily::PowerLaw { .. } = spec.family {
        return Ok(scale * limit);
    }
    let f = |t: f64| t * gradient_distribution(spec, d, t).powf(1.0 / b);
    // break points: profile values at the ends of the monotone pieces
    let mut marks = Vec::new();
    for p in monotone_pieces(spec) {
        for r in [p.lo, p.hi] {
            if r > 0.0 && r.is_finite() {
                marks.push(spec.gradient_profile(r * (1.0 - 1e-12)));
                marks.push(spec.gradient_profile(r * (1.0 + 1e-12)));
            }
        }
    }
    if let KernelFamily::Gaussian { width } = spec.family {
        marks.push(spec.gradient_profile(width));
    }
    let center = marks.iter().copied().fold(1.0, f64::max);
    let (t_lo, t_hi) = (center * 1e-12, center * 1e8);
    let samples = 4000;
    let ratio = (t_hi / t_lo).powf(1.0 / samples as f64);
    let mut ts: Vec<f64> = (0..=samples).map(|i| t_lo * ratio.powi(i)).collect();
    ts.extend(marks.iter().copied().filter(|m| *m > 0.0));
    ts.sort_by(f64::total_cmp);
    let mut best_i = 0;
    let mut best = f64::NEG_INFINITY;
    for (i, &t) in ts.iter().enumerate() {
        let v = f(t);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    // golden-section refinement on each neighbouring bracket
    let golden = 0.5 * (5f64.sqrt() - 1.0);
    for (a0, b0) in [
        (ts[best_i.saturating_sub(1)], ts[best_i]),
        (ts[best_i], ts[(best_i + 1).min(ts.len() - 1)]),
    ] {
        let (mut a, mut c) = (a0.ln(), b0.ln());
        for _ in 0..200 {
            if (c - a).abs() < 1e-14 {
                break;
            }
            let x1 = c - golden * (c - a);
            let x2 = a + golden * (c - a);
            if f(x1.exp()) >= f(x2.exp()) {
                c = x2;
            } else {
                a = x1;
            }
        }
        best = best.max(f((0.5 * (a + c)).exp()));
    }
    Ok(scale * best.max(limit))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Admissibility {
    pub admissible: bool,
    pub gate_k1: bool,
    pub gate_k2: bool,
    pub weak_norm: Option<f64>,
    pub reason: String,
}

/// Checks the kernel's weak-norm exponent against the global-bound window and that
/// the weak norm of its gradient is finite there.
pub fn admissibility(spec: &KernelSpec, d: usize, n: usize, r: f64) -> Admissibility {
    if spec.is_none() {
        return Admissibility {
            admissible: true,
            gate_k1: true,
            gate_k2: true,
            weak_norm: Some(0.0),
            reason: "no interaction".into(),
        };
    }
    let b = spec.lorentz_b;
    let e = crate::certificates::exponents(d, n, r, b);
    let norm = lorentz_weak_norm(spec, b, d);
    let mut reasons = Vec::new();
    if !e.gate_k1 {
        reasons.push(format!(
            "b = {b} outside (max(d/3, beta_4, beta_n), d/2) = ({:.4}, {:.4})",
            (d as f64 / 3.0).max(e.beta_4).max(e.beta_n),
            d as f64 / 2.0
        ));
    }
    if let Err(err) = &norm {
        reasons.push(err.to_string());
    }
    Admissibility {
        admissible: reasons.is_empty(),
        gate_k1: e.gate_k1,
        gate_k2: e.gate_k2,
        weak_norm: norm.ok(),
        reason: if reasons.is_empty() { "admissible".into() } else { reasons.join("; ") },
    }
}

/// Spectral symbol of a kernel sampled on a grid, cached per (kernel, grid).
#[derive(Debug, Clone)]
pub struct KernelSymbol {
    pub spec: KernelSpec,
    pub grid: Grid,
    /// Real, even symbol including the cell volume factor.
    pub symbol: Vec<f64>,
    /// Fraction of the sampled kernel's absolute mass carried by the origin cell.
    pub core_fraction: f64,
}

/// Cell average of the unsigned profile over the grid cell centred at the origin.
fn origin_cell_average(spec: &KernelSpec, grid: &Grid) -> f64 {
    let h = grid.spacing();
    let m: usize = match grid.dim {
        1 => 4096,
        2 => 256,
        _ => 48,
    };
    let sub = h / m as f64;
    let total = m.pow(grid.dim as u32);
    let mut acc = 0.0;
    for flat in 0..total {
        let mut rem = flat;
        let mut r2 = 0.0;
        for _ in 0..grid.dim {
            let i = rem % m;
            rem /= m;
            let x = -0.5 * h + (i as f64 + 0.5) * sub;
            r2 += x * x;
        }
        acc += spec.profile(r2.sqrt());
    }
    acc / total as f64
}

pub const CORE_FRACTION_LIMIT: f64 = 0.1;

impl KernelSymbol {
    pub fn new(spec: &KernelSpec, grid: Grid) -> Result<Self> {
        spec.validate(grid.dim)?;
        let n = grid.len();
        if spec.is_none() {
            return Ok(KernelSymbol { spec: *spec, grid, symbol: vec![0.0; n], core_fraction: 0.0 });
        }
        let center = grid.flat_index(&[grid.points / 2; MAX_DIM]);
        let mut table = vec![0.0; n];
        for (f, v) in table.iter_mut().enumerate() {
            let x = grid.position(f);
            let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
            *v = if f == center {
                if spec.is_singular() {
                    origin_cell_average(spec, &grid)
                } else {
                    spec.profile(0.0)
                }
            } else {
                spec.profile(r)
            };
        }
        let abs_total: f64 = table.iter().map(|v| v.abs()).sum();
        let core_fraction = if spec.is_singular() { table[center].abs() / abs_total } else { 0.0 };
        if core_fraction > CORE_FRACTION_LIMIT {
            return Err(Error::Resolution(format!(
                "the origin cell carries {:.1}% of the kernel mass; refine the grid",
                100.0 * core_fraction
            )));
        }
        // node `center` is the origin in centered coordinates: shift it to index 0
        let mut shifted = vec![Complex64::default(); n];
        for (f, v) in table.iter().enumerate() {
            let idx = grid.multi_index(f);
            let mut s = [0; MAX_DIM];
            for a in 0..grid.dim {
                s[a] = (idx[a] + grid.points - grid.points / 2) % grid.points;
            }
            shifted[grid.flat_index(&s)] = Complex64::new(v * spec.amplitude(), 0.0);
        }
        let spectral = Spectral::new(grid);
        spectral.forward(&mut shifted);
        let dv = grid.cell_volume();
        let mut symbol: Vec<f64> = shifted.iter().map(|z| z.re * dv).collect();
        if let KernelFamily::PowerLaw { .. } = spec.family {
            log::warn!("power-law kernel: zero mode of the potential neutralized");
            symbol[0] = 0.0;
        }
        Ok(KernelSymbol { spec: *spec, grid, symbol, core_fraction })
    }

    /// `V = K * rho`.
    pub fn potential(&self, rho: &DensityField) -> Vec<f64> {
        if self.spec.is_none() {
            return vec![0.0; self.grid.len()];
        }
        let spectral = Spectral::new(self.grid);
        let mut data = spectral.forward_real(&rho.values);
        for (z, s) in data.iter_mut().zip(&self.symbol) {
            *z *= *s;
        }
        spectral.inverse(&mut data);
        data.iter().map(|z| z.re).collect()
    }

    /// `E = -grad (K * rho)`; Nyquist modes of the derivative are dropped.
    pub fn force(&self, rho: &DensityField) -> VectorField {
        let g = self.grid;
        if self.spec.is_none() {
            return VectorField { grid: g, components: vec![vec![0.0; g.len()]; g.dim] };
        }
        let spectral = Spectral::new(g);
        let mut base = spectral.forward_real(&rho.values);
        for (z, s) in base.iter_mut().zip(&self.symbol) {
            *z *= *s;
        }
        let components = (0..g.dim)
            .map(|axis| {
                let mut data = base.clone();
                for (f, z) in data.iter_mut().enumerate() {
                    let i = g.multi_index(f)[axis];
                    let k = if g.is_nyquist(i) { 0.0 } else { g.wavenumber(i) };
                    *z *= Complex64::new(0.0, -k);
                }
                spectral.inverse(&mut data);
                data.iter().map(|z| z.re).collect()
            })
            .collect();
        VectorField { grid: g, components }
    }

    /// Mean-field interaction energy `1/2 int rho (K * rho)`.
    pub fn interaction_energy(&self, rho: &DensityField) -> f64 {
        let v = self.potential(rho);
        0.5 * rho.values.iter().zip(&v).map(|(r, p)| r * p).sum::<f64>() * self.grid.cell_volume()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub grid: Grid,
    pub components: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn max_abs(&self) -> f64 {
        self.components.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Convenience form that builds the symbol for a single evaluation.
pub fn mean_field_force(rho: &DensityField, spec: &KernelSpec) -> Result<VectorField> {
    Ok(KernelSymbol::new(spec, rho.grid)?.force(rho))
}
