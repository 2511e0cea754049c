//! Self-consistent Hartree dynamics by Strang split-step spectral propagation.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{admissibility, KernelSpec, KernelSymbol};
use crate::observables::{moment_m, quantum_record, MomentSeries, SeriesMeta};
use crate::state::{QuantumMixedState, SimParams, HORIZON_BOUNDARY_MASS};
use crate::transport::free_evolve_quantum;

/// Peak phase `max(V) - min(V)` times `|dt| / hbar` allowed per potential step.
pub const PHASE_BUDGET: f64 = std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct HartreeStepper {
    pub symbol: KernelSymbol,
}

impl HartreeStepper {
    pub fn new(spec: &KernelSpec, state: &QuantumMixedState) -> Result<Self> {
        Ok(HartreeStepper { symbol: KernelSymbol::new(spec, state.grid)? })
    }

    /// Half kinetic step, potential phase from the current density, half kinetic step.
    pub fn step(&self, state: &QuantumMixedState, dt: f64) -> Result<QuantumMixedState> {
        let half = free_evolve_quantum(state, 0.5 * dt);
        if self.symbol.spec.is_none() {
            return Ok(free_evolve_quantum(&half, 0.5 * dt));
        }
        let v = self.symbol.potential(&half.density());
        let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(*x), b.max(*x)));
        let phase = (hi - lo) * dt.abs() / state.hbar;
        if phase > PHASE_BUDGET {
            return Err(Error::StepSize {
                dt,
                phase,
                suggested: 0.5 * PHASE_BUDGET * state.hbar / (hi - lo),
            });
        }
        let factors: Vec<Complex64> =
            v.iter().map(|vx| Complex64::from_polar(1.0, -dt * vx / state.hbar)).collect();
        let kicked = half.map_components(|psi| psi.iter().zip(&factors).map(|(z, f)| z * f).collect());
        Ok(free_evolve_quantum(&kicked, 0.5 * dt))
    }

    /// `sum_j lambda_j <psi_j, |p|^2/2 psi_j> + 1/2 int rho (K * rho)`.
    pub fn energy(&self, state: &QuantumMixedState) -> Result<f64> {
        Ok(0.5 * moment_m(state, 2)? + self.symbol.interaction_energy(&state.density()))
    }
}

pub fn step_hartree(state: &QuantumMixedState, dt: f64, spec: &KernelSpec) -> Result<QuantumMixedState> {
    HartreeStepper::new(spec, state)?.step(state, dt)
}

pub fn hartree_energy(state: &QuantumMixedState, spec: &KernelSpec) -> Result<f64> {
    HartreeStepper::new(spec, state)?.energy(state)
}

/// What to record and how often.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// Record every `every` steps (and at t = 0).
    pub every: usize,
    pub orders: Vec<usize>,
    pub lp_exponents: Vec<f64>,
}

/// Admissibility gate inputs; `None` skips the gate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gate {
    pub n: usize,
    pub r: f64,
    pub override_admissibility: bool,
}

pub(crate) fn check_gate(spec: &KernelSpec, d: usize, gate: Option<Gate>) -> Result<()> {
    let Some(g) = gate else { return Ok(()) };
    let adm = admissibility(spec, d, g.n, g.r);
    if adm.admissible {
        return Ok(());
    }
    if g.override_admissibility {
        log::warn!("kernel outside the admissible window ({}); continuing on override", adm.reason);
        Ok(())
    } else {
        Err(Error::Regime(format!("kernel not admissible: {}", adm.reason)))
    }
}

#[derive(Debug, Clone)]
pub struct HartreeRun {
    pub series: MomentSeries,
    pub final_state: QuantumMixedState,
    pub final_time: f64,
}

/// Integrates from `t = 0` to `params.t_final` with step `params.dt`, recording the
/// schedule; stops early (flagging the series) once the boundary mass passes the
/// validity horizon.
pub fn run_hartree(
    initial: &QuantumMixedState,
    spec: &KernelSpec,
    params: &SimParams,
    schedule: &Schedule,
    scenario: &str,
    gate: Option<Gate>,
) -> Result<HartreeRun> {
    run_hartree_observed(initial, spec, params, schedule, scenario, gate, &mut |_, _, _| {})
}

/// As [`run_hartree`], calling `observe(step, t, state)` at every step before the horizon.
pub fn run_hartree_observed(
    initial: &QuantumMixedState,
    spec: &KernelSpec,
    params: &SimParams,
    schedule: &Schedule,
    scenario: &str,
    gate: Option<Gate>,
    observe: &mut dyn FnMut(usize, f64, &QuantumMixedState),
) -> Result<HartreeRun> {
    params.validate()?;
    check_gate(spec, initial.grid.dim, gate)?;
    let stepper = HartreeStepper::new(spec, initial)?;
    let meta = SeriesMeta {
        scenario: scenario.to_string(),
        hbar: initial.hbar,
        d: initial.grid.dim,
        kernel: *spec,
        kind: "quantum".into(),
    };
    let mut series = MomentSeries::new(meta, schedule.orders.clone(), schedule.lp_exponents.clone());
    let steps = (params.t_final / params.dt).round() as usize;
    let every = schedule.every.max(1);
    let mut state = initial.clone();
    let mut t = 0.0;
    let record = |state: &QuantumMixedState, t: f64| -> Result<_> {
        quantum_record(state, t, stepper.energy(state)?, &schedule.orders, &schedule.lp_exponents)
    };
    series.records.push(record(&state, 0.0)?);
    observe(0, 0.0, &state);
    for step in 1..=steps {
        state = stepper.step(&state, params.dt)?;
        t = step as f64 * params.dt;
        if step % every == 0 || step == steps {
            if state.boundary_mass() > HORIZON_BOUNDARY_MASS {
                series.horizon_breached = true;
                log::warn!("validity horizon reached at t = {t}; series truncated");
                break;
            }
            series.records.push(record(&state, t)?);
        }
        observe(step, t, &state);
    }
    Ok(HartreeRun { series, final_state: state, final_time: t })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::state::coherent_state;

    #[test]
    fn no_kernel_matches_free_evolution() {
        let g = Grid::new(1, 128, 30.0).unwrap();
        let s = coherent_state(&[0.0], &[0.5], 1.0, g, 0.7).unwrap();
        let a = step_hartree(&s, 0.1, &KernelSpec::none()).unwrap();
        let b = free_evolve_quantum(&s, 0.1);
        for (x, y) in a.wavefunctions[0].iter().zip(&b.wavefunctions[0]) {
            assert!((x - y).norm() < 1e-13);
        }
    }

    #[test]
    fn oversized_step_is_rejected_with_suggestion() {
        let g = Grid::new(1, 128, 30.0).unwrap();
        let s = coherent_state(&[0.0], &[0.0], 1.0, g, 0.1).unwrap();
        let k = KernelSpec::gaussian(-1.0, 1.0).with_coupling(50.0);
        match step_hartree(&s, 1.0, &k) {
            Err(Error::StepSize { suggested, .. }) => {
                assert!(step_hartree(&s, suggested, &k).is_ok());
            }
            other => panic!("{other:?}"),
        }
    }
}
