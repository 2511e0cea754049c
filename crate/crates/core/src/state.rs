//! Quantum mixtures, classical particle ensembles and spatial densities.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, MAX_DIM};

/// Fraction of the box (per side) treated as the boundary layer for horizon checks.
pub const BOUNDARY_LAYER: f64 = 0.05;
/// Boundary mass above which whole-space statements stop applying.
pub const HORIZON_BOUNDARY_MASS: f64 = 1e-6;
/// Upper bound on the boundary mass of freshly constructed coherent states.
pub const CONSTRUCTION_BOUNDARY_MASS: f64 = 1e-10;
/// Default cap on the number of mixture components.
pub const DEFAULT_MAX_COMPONENTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub d: usize,
    pub hbar: f64,
    pub box_length: f64,
    pub grid_points: usize,
    pub dt: f64,
    pub t_final: f64,
    pub seed: u64,
}

impl SimParams {
    pub fn validate(&self) -> Result<Grid> {
        if !(self.hbar > 0.0 && self.hbar.is_finite()) {
            return Err(Error::invalid("hbar", format!("{} must be strictly positive", self.hbar)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("dt", format!("{} must be strictly positive", self.dt)));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::invalid("t_final", format!("{} must be >= 0", self.t_final)));
        }
        Grid::new(self.d, self.grid_points, self.box_length)
    }

    pub fn grid(&self) -> Result<Grid> {
        self.validate()
    }
}

/// `sum_j weights[j] |psi_j><psi_j|` with orthonormal `psi_j` on a periodic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumMixedState {
    pub grid: Grid,
    pub hbar: f64,
    pub weights: Vec<f64>,
    pub wavefunctions: Vec<Vec<Complex64>>,
}

pub(crate) fn inner(grid: &Grid, a: &[Complex64], b: &[Complex64]) -> Complex64 {
    let s: Complex64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    s * grid.cell_volume()
}

pub(crate) fn norm_sq(grid: &Grid, a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>() * grid.cell_volume()
}

impl QuantumMixedState {
    pub fn new(
        grid: Grid,
        hbar: f64,
        weights: Vec<f64>,
        wavefunctions: Vec<Vec<Complex64>>,
    ) -> Result<Self> {
        if !(hbar > 0.0) {
            return Err(Error::invalid("hbar", "must be strictly positive"));
        }
        if weights.len() != wavefunctions.len() || weights.is_empty() {
            return Err(Error::invalid(
                "weights",
                format!("{} weights for {} wavefunctions", weights.len(), wavefunctions.len()),
            ));
        }
        if let Some(j) = weights.iter().position(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::invalid("weights", format!("weight {j} is negative or not finite")));
        }
        if let Some(j) = wavefunctions.iter().position(|w| w.len() != grid.len()) {
            return Err(Error::invalid("wavefunctions", format!("component {j} has wrong length")));
        }
        Ok(QuantumMixedState { grid, hbar, weights, wavefunctions })
    }

    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn gram_matrix(&self) -> Vec<Vec<Complex64>> {
        self.wavefunctions
            .iter()
            .map(|a| self.wavefunctions.iter().map(|b| inner(&self.grid, a, b)).collect())
            .collect()
    }

    /// Largest deviation of the Gram matrix from the identity.
    pub fn gram_defect(&self) -> f64 {
        let g = self.gram_matrix();
        let mut worst: f64 = 0.0;
        for (i, row) in g.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((v - target).norm());
            }
        }
        worst
    }

    /// Spatial density `sum_j weights[j] |psi_j|^2` with a fixed reduction order.
    pub fn density(&self) -> DensityField {
        let mut values = vec![0.0; self.grid.len()];
        for (w, psi) in self.weights.iter().zip(&self.wavefunctions) {
            for (v, z) in values.iter_mut().zip(psi) {
                *v += w * z.norm_sqr();
            }
        }
        DensityField { grid: self.grid, values }
    }

    /// Apply the same map to every component (components processed in parallel).
    pub(crate) fn map_components<F>(&self, f: F) -> QuantumMixedState
    where
        F: Fn(&[Complex64]) -> Vec<Complex64> + Sync + Send,
    {
        let wavefunctions = self.wavefunctions.par_iter().map(|psi| f(psi)).collect();
        QuantumMixedState {
            grid: self.grid,
            hbar: self.hbar,
            weights: self.weights.clone(),
            wavefunctions,
        }
    }

    /// Build the exact spectral decomposition of `sum_j w_j |phi_j><phi_j|` for
    /// arbitrary (not necessarily orthogonal) vectors `phi_j`.
    pub fn from_mixture(
        grid: Grid,
        hbar: f64,
        weights: &[f64],
        vectors: &[Vec<Complex64>],
    ) -> Result<Self> {
        let j = vectors.len();
        if j == 0 || weights.len() != j {
            return Err(Error::invalid("weights", "need one weight per vector"));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::invalid("weights", "weights must be nonnegative"));
        }
        let sw: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
        let m = DMatrix::<Complex64>::from_fn(j, j, |a, b| {
            inner(&grid, &vectors[a], &vectors[b]) * sw[a] * sw[b]
        });
        let eig = SymmetricEigen::new(m);
        let mut order: Vec<usize> = (0..j).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let top = eig.eigenvalues[order[0]].max(0.0);
        let mut out_w = Vec::new();
        let mut out_v = Vec::new();
        for &k in &order {
            let lam = eig.eigenvalues[k];
            if lam <= 1e-13 * top {
                continue;
            }
            let mut psi = vec![Complex64::default(); grid.len()];
            for a in 0..j {
                let c = eig.eigenvectors[(a, k)] * sw[a] / lam.sqrt();
                for (p, v) in psi.iter_mut().zip(&vectors[a]) {
                    *p += c * v;
                }
            }
            out_w.push(lam);
            out_v.push(psi);
        }
        QuantumMixedState::new(grid, hbar, out_w, out_v)?.orthonormalize()
    }

    /// Gram-Schmidt (two passes) on the components; weights are kept, so the
    /// total mass `sum_j weights[j]` is unchanged.
    pub fn orthonormalize(&self) -> Result<Self> {
        if self.wavefunctions.iter().all(|w| w.iter().all(|z| z.norm_sqr() == 0.0)) {
            return Err(Error::invalid("wavefunctions", "all components are zero"));
        }
        let g = self.grid;
        let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(self.rank());
        for (index, psi) in self.wavefunctions.iter().enumerate() {
            let original = norm_sq(&g, psi).sqrt();
            let mut v = psi.clone();
            for _ in 0..2 {
                for b in &basis {
                    let c = inner(&g, b, &v);
                    for (x, y) in v.iter_mut().zip(b) {
                        *x -= c * y;
                    }
                }
            }
            let residual = norm_sq(&g, &v).sqrt();
            if original == 0.0 || residual <= 1e-8 * original {
                return Err(Error::RankDeficient {
                    index,
                    residual: if original == 0.0 { 0.0 } else { residual / original },
                });
            }
            let inv = 1.0 / residual;
            v.iter_mut().for_each(|z| *z *= inv);
            basis.push(v);
        }
        QuantumMixedState::new(g, self.hbar, self.weights.clone(), basis)
    }

    /// Largest boundary-layer mass fraction of the spatial density.
    pub fn boundary_mass(&self) -> f64 {
        self.density().boundary_mass()
    }
}

/// Gaussian wave packet `exp(-|x-x0|^2/(4 sigma^2) + i xi0.(x-x0)/hbar)`, normalized on the grid.
pub fn gaussian_wavefunction(
    grid: &Grid,
    hbar: f64,
    center: &[f64],
    momentum: &[f64],
    sigma: f64,
) -> Vec<Complex64> {
    let mut psi: Vec<Complex64> = (0..grid.len())
        .map(|f| {
            let x = grid.position(f);
            let mut r2 = 0.0;
            let mut phase = 0.0;
            for a in 0..grid.dim {
                let dx = x[a] - center.get(a).copied().unwrap_or(0.0);
                r2 += dx * dx;
                phase += momentum.get(a).copied().unwrap_or(0.0) * dx / hbar;
            }
            Complex64::from_polar((-r2 / (4.0 * sigma * sigma)).exp(), phase)
        })
        .collect();
    let n = norm_sq(grid, &psi).sqrt();
    psi.iter_mut().for_each(|z| *z /= n);
    psi
}

/// Pure coherent state with per-coordinate position variance `sigma^2`.
pub fn coherent_state(
    center: &[f64],
    momentum: &[f64],
    sigma: f64,
    grid: Grid,
    hbar: f64,
) -> Result<QuantumMixedState> {
    if !(sigma > 0.0) {
        return Err(Error::invalid("sigma", "must be positive"));
    }
    if sigma < 2.0 * grid.spacing() {
        return Err(Error::Resolution(format!(
            "sigma = {sigma} is below two grid spacings ({})",
            2.0 * grid.spacing()
        )));
    }
    let momentum_width = hbar / (2.0 * sigma);
    let kmax = momentum
        .iter()
        .take(grid.dim)
        .map(|p| p.abs())
        .fold(0.0, f64::max)
        / hbar
        + 8.0 * momentum_width / hbar;
    if kmax > grid.nyquist() {
        return Err(Error::Resolution(format!(
            "momentum content up to k = {kmax:.3} exceeds the Nyquist wavenumber {:.3}",
            grid.nyquist()
        )));
    }
    let psi = gaussian_wavefunction(&grid, hbar, center, momentum, sigma);
    let state = QuantumMixedState::new(grid, hbar, vec![1.0], vec![psi])?;
    let bm = state.boundary_mass();
    if bm > CONSTRUCTION_BOUNDARY_MASS {
        return Err(Error::invalid(
            "box_length",
            format!("boundary mass {bm:.3e} exceeds {CONSTRUCTION_BOUNDARY_MASS:e}; enlarge the box"),
        ));
    }
    Ok(state)
}

/// Random smooth mixture: each component is a superposition of a few random
/// Gaussian packets inside the central half of the box; components are then
/// orthonormalized and given random weights summing to `mass`.
pub fn random_mixture(
    grid: Grid,
    hbar: f64,
    components: usize,
    width: f64,
    mass: f64,
    seed: u64,
) -> Result<QuantumMixedState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spread = 0.1 * grid.length;
    let pmax = 0.5 * hbar / width;
    let mut vectors = Vec::with_capacity(components);
    for _ in 0..components {
        let mut psi = vec![Complex64::default(); grid.len()];
        for _ in 0..3 {
            let mut c = [0.0; MAX_DIM];
            let mut p = [0.0; MAX_DIM];
            for a in 0..grid.dim {
                c[a] = rng.random_range(-spread..spread);
                p[a] = rng.random_range(-pmax..pmax);
            }
            let amp = Complex64::from_polar(rng.random_range(0.5..1.0), rng.random_range(0.0..6.283));
            let g = gaussian_wavefunction(&grid, hbar, &c, &p, width);
            for (x, y) in psi.iter_mut().zip(&g) {
                *x += amp * y;
            }
        }
        vectors.push(psi);
    }
    let raw: Vec<f64> = (0..components).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let weights = raw.iter().map(|w| w * mass / total).collect();
    QuantumMixedState::new(grid, hbar, weights, vectors)?.orthonormalize()
}

/// Weighted particles in whole-space centered coordinates. Positions are never
/// wrapped; the periodic image is taken only when coupling to the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalEnsemble {
    pub grid: Grid,
    pub positions: Vec<[f64; MAX_DIM]>,
    pub velocities: Vec<[f64; MAX_DIM]>,
    pub weights: Vec<f64>,
}

impl ClassicalEnsemble {
    pub fn new(
        grid: Grid,
        positions: Vec<[f64; MAX_DIM]>,
        velocities: Vec<[f64; MAX_DIM]>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if positions.len() != velocities.len() || positions.len() != weights.len() {
            return Err(Error::invalid("ensemble", "positions, velocities and weights differ in length"));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::invalid("weights", "particle weights must be nonnegative"));
        }
        let mut e = ClassicalEnsemble { grid, positions, velocities, weights };
        let d = grid.dim;
        for v in e.positions.iter_mut().chain(e.velocities.iter_mut()) {
            v[d..].iter_mut().for_each(|c| *c = 0.0);
        }
        Ok(e)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Box coordinate in `[0, L)^d` of the periodic image of particle `i`.
    pub fn box_position(&self, i: usize) -> [f64; MAX_DIM] {
        let mut x = [0.0; MAX_DIM];
        for (a, xa) in x.iter_mut().enumerate().take(self.grid.dim) {
            *xa = self.grid.wrap(self.positions[i][a] + 0.5 * self.grid.length);
        }
        x
    }

    pub fn momentum(&self) -> [f64; MAX_DIM] {
        let mut p = [0.0; MAX_DIM];
        for (w, v) in self.weights.iter().zip(&self.velocities) {
            for a in 0..MAX_DIM {
                p[a] += w * v[a];
            }
        }
        p
    }

    pub fn translated(&self, shift: &[f64]) -> ClassicalEnsemble {
        let mut out = self.clone();
        for x in &mut out.positions {
            for a in 0..self.grid.dim {
                x[a] += shift.get(a).copied().unwrap_or(0.0);
            }
        }
        out
    }
}

/// Independent Gaussian samples in position (centered coordinates) and velocity;
/// unit total mass split evenly.
pub fn sample_classical_gaussian(
    grid: Grid,
    center: &[f64],
    momentum: &[f64],
    sigma_x: f64,
    sigma_xi: f64,
    count: usize,
    seed: u64,
) -> Result<ClassicalEnsemble> {
    if count == 0 {
        return Err(Error::invalid("count", "must be >= 1"));
    }
    if !(sigma_x > 0.0) {
        return Err(Error::invalid("sigma_x", "must be positive"));
    }
    if !(sigma_xi > 0.0) {
        return Err(Error::invalid("sigma_xi", "must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nx = Normal::new(0.0, sigma_x).expect("valid normal");
    let nv = Normal::new(0.0, sigma_xi).expect("valid normal");
    let mut positions = Vec::with_capacity(count);
    let mut velocities = Vec::with_capacity(count);
    for _ in 0..count {
        let mut x = [0.0; MAX_DIM];
        let mut v = [0.0; MAX_DIM];
        for a in 0..grid.dim {
            x[a] = center.get(a).copied().unwrap_or(0.0) + nx.sample(&mut rng);
            v[a] = momentum.get(a).copied().unwrap_or(0.0) + nv.sample(&mut rng);
        }
        positions.push(x);
        velocities.push(v);
    }
    let w = 1.0 / count as f64;
    ClassicalEnsemble::new(grid, positions, velocities, vec![w; count])
}

/// Real field on the spatial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl DensityField {
    pub fn zeros(grid: Grid) -> Self {
        DensityField { grid, values: vec![0.0; grid.len()] }
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Mass in the outer layer (any centered coordinate beyond `(1/2 - BOUNDARY_LAYER) L`)
    /// relative to the total.
    pub fn boundary_mass(&self) -> f64 {
        let g = self.grid;
        let edge = (0.5 - BOUNDARY_LAYER) * g.length;
        let mut outer = 0.0;
        let mut total = 0.0;
        for (f, v) in self.values.iter().enumerate() {
            total += v;
            let x = g.position(f);
            if x.iter().take(g.dim).any(|c| c.abs() > edge) {
                outer += v;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            outer / total
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid1() -> Grid {
        Grid::new(1, 128, 20.0).unwrap()
    }

    #[test]
    fn orthonormalize_leaves_normalized_gaussian_unchanged() {
        let g = grid1();
        let s = coherent_state(&[0.0], &[0.0], 1.0, g, 1.0).unwrap();
        let o = s.orthonormalize().unwrap();
        for (a, b) in s.wavefunctions[0].iter().zip(&o.wavefunctions[0]) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn orthonormalize_random_fields_gives_identity_gram() {
        let g = Grid::new(2, 16, 10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fields: Vec<Vec<Complex64>> = (0..2)
            .map(|_| {
                (0..g.len())
                    .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                    .collect()
            })
            .collect();
        let s = QuantumMixedState::new(g, 1.0, vec![0.3, 0.7], fields).unwrap();
        let o = s.orthonormalize().unwrap();
        // independent quadrature of the Gram matrix
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = Complex64::default();
                for f in 0..g.len() {
                    acc += o.wavefunctions[i][f].conj() * o.wavefunctions[j][f];
                }
                acc *= g.spacing() * g.spacing();
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((acc - target).norm() < 1e-10);
            }
        }
        assert_eq!(o.mass(), 1.0);
    }

    #[test]
    fn dependent_components_are_reported() {
        let g = grid1();
        let a = gaussian_wavefunction(&g, 1.0, &[0.0], &[0.0], 1.0);
        let b: Vec<Complex64> = a.iter().map(|z| z * 2.0).collect();
        let s = QuantumMixedState::new(g, 1.0, vec![0.5, 0.5], vec![a, b]).unwrap();
        match s.orthonormalize() {
            Err(Error::RankDeficient { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn coherent_state_rejects_unresolved_width() {
        let g = grid1();
        assert!(matches!(
            coherent_state(&[0.0], &[0.0], 0.2, g, 1.0),
            Err(Error::Resolution(_))
        ));
    }

    #[test]
    fn coherent_state_has_unit_mass_anywhere() {
        let g = grid1();
        for c in [-1.0, 0.0, 1.3] {
            let s = coherent_state(&[c], &[0.4], 1.0, g, 1.0).unwrap();
            assert_eq!(s.mass(), 1.0);
            assert!((s.density().integral() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mixture_decomposition_is_orthonormal_and_keeps_mass() {
        let g = grid1();
        let a = gaussian_wavefunction(&g, 0.5, &[-0.5], &[0.0], 0.5);
        let b = gaussian_wavefunction(&g, 0.5, &[0.5], &[0.2], 0.5);
        let s = QuantumMixedState::from_mixture(g, 0.5, &[0.25, 0.75], &[a.clone(), b.clone()]).unwrap();
        assert!(s.gram_defect() < 1e-10);
        assert!((s.mass() - 1.0).abs() < 1e-12);
        // density is that of the original (non-orthogonal) mixture
        let rho = s.density();
        for f in 0..g.len() {
            let direct = 0.25 * a[f].norm_sqr() + 0.75 * b[f].norm_sqr();
            assert!((rho.values[f] - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn classical_sampling_is_deterministic_and_has_target_variance() {
        let g = Grid::new(1, 64, 40.0).unwrap();
        let count = 100_000;
        let e1 = sample_classical_gaussian(g, &[0.0], &[0.0], 1.0, 0.5, count, 11).unwrap();
        let e2 = sample_classical_gaussian(g, &[0.0], &[0.0], 1.0, 0.5, count, 11).unwrap();
        assert_eq!(e1, e2);
        let mean: f64 = (0..count).map(|i| e1.positions[i][0]).sum::<f64>() / count as f64;
        let var: f64 = (0..count)
            .map(|i| (e1.positions[i][0] - mean).powi(2))
            .sum::<f64>()
            / count as f64;
        assert!((var - 1.0).abs() < 3.0 / (count as f64).sqrt());
        let single = sample_classical_gaussian(g, &[0.0], &[0.0], 1.0, 1.0, 1, 5).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single.mass(), 1.0);
    }

    #[test]
    fn sim_params_validation_names_fields() {
        let mut p = SimParams {
            d: 1,
            hbar: -0.1,
            box_length: 10.0,
            grid_points: 64,
            dt: 0.01,
            t_final: 1.0,
            seed: 0,
        };
        let err = p.validate().unwrap_err().to_string();
        assert!(err.contains("hbar"));
        p.hbar = 0.1;
        p.grid_points = 48;
        assert!(p.validate().unwrap_err().to_string().contains("grid_points"));
    }
}
