//! Exact free propagators: the torus Schrödinger multiplier, the impulsion boost and
//! classical free streaming.

use num_complex::Complex64;

use crate::grid::Spectral;
use crate::state::{ClassicalEnsemble, QuantumMixedState};

/// `e^{-i t H_0 / hbar}` with `H_0 = -hbar^2 Delta / 2`, applied as a Fourier multiplier.
pub fn free_evolve_quantum(state: &QuantumMixedState, t: f64) -> QuantumMixedState {
    if t == 0.0 {
        return state.clone();
    }
    let g = state.grid;
    let spectral = Spectral::new(g);
    let phase: Vec<Complex64> = g
        .k_squared()
        .iter()
        .map(|k2| Complex64::from_polar(1.0, -0.5 * t * state.hbar * k2))
        .collect();
    state.map_components(|psi| {
        let mut data = psi.to_vec();
        spectral.forward(&mut data);
        data.iter_mut().zip(&phase).for_each(|(z, p)| *z *= p);
        spectral.inverse(&mut data);
        data
    })
}

/// Pointwise phase `e^{-i s |x|^2 / (2 hbar)}` in box-centered coordinates; shifts
/// the momentum observable by `-s x`.
pub fn impulsion_boost(state: &QuantumMixedState, s: f64) -> QuantumMixedState {
    if s == 0.0 {
        return state.clone();
    }
    let phase: Vec<Complex64> = state
        .grid
        .r_squared()
        .iter()
        .map(|r2| Complex64::from_polar(1.0, -0.5 * s * r2 / state.hbar))
        .collect();
    state.map_components(|psi| psi.iter().zip(&phase).map(|(z, p)| z * p).collect())
}

/// Characteristics of `d_t f + xi . grad_x f = 0`.
pub fn free_flow_classical(ensemble: &ClassicalEnsemble, t: f64) -> ClassicalEnsemble {
    let mut out = ensemble.clone();
    let d = ensemble.grid.dim;
    for (x, v) in out.positions.iter_mut().zip(&ensemble.velocities) {
        for a in 0..d {
            x[a] += t * v[a];
        }
    }
    out
}
