//! Particle-mesh Vlasov solver: cloud-in-cell deposition, spectral mean-field force,
//! kick-drift-kick leapfrog.

use rayon::prelude::*;

use crate::error::Result;
use crate::grid::{Grid, MAX_DIM};
use crate::hartree::{check_gate, Gate, Schedule};
use crate::kernels::{KernelSpec, KernelSymbol, VectorField};
use crate::observables::{classical_record, MomentSeries, SeriesMeta};
use crate::state::{ClassicalEnsemble, DensityField, SimParams, HORIZON_BOUNDARY_MASS};
use crate::transport::free_flow_classical;

// Fixed so that the merge order does not depend on the worker count.
const CHUNK: usize = 4096;

/// Cloud-in-cell stencil: up to `2^d` (flat index, weight) pairs.
fn stencil(grid: &Grid, x: &[f64; MAX_DIM]) -> ([usize; 8], [f64; 8], usize) {
    let h = grid.spacing();
    let n = grid.points;
    let mut lower = [0usize; MAX_DIM];
    let mut frac = [0.0; MAX_DIM];
    for a in 0..grid.dim {
        let s = x[a] / h;
        let f = s.floor();
        lower[a] = (f as i64).rem_euclid(n as i64) as usize;
        frac[a] = s - f;
    }
    let count = 1 << grid.dim;
    let mut idx = [0usize; 8];
    let mut w = [0.0; 8];
    for c in 0..count {
        let mut node = [0usize; MAX_DIM];
        let mut weight = 1.0;
        for a in 0..grid.dim {
            if c >> a & 1 == 1 {
                node[a] = (lower[a] + 1) % n;
                weight *= frac[a];
            } else {
                node[a] = lower[a];
                weight *= 1.0 - frac[a];
            }
        }
        idx[c] = grid.flat_index(&node);
        w[c] = weight;
    }
    (idx, w, count)
}

/// `rho_f` on the grid by cloud-in-cell deposition of the periodic images.
pub fn deposit_density(ensemble: &ClassicalEnsemble) -> DensityField {
    let g = ensemble.grid;
    let inv_dv = 1.0 / g.cell_volume();
    let partial: Vec<Vec<f64>> = (0..ensemble.len())
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut local = vec![0.0; g.len()];
            for &i in chunk {
                let (idx, w, count) = stencil(&g, &ensemble.box_position(i));
                for c in 0..count {
                    local[idx[c]] += ensemble.weights[i] * w[c] * inv_dv;
                }
            }
            local
        })
        .collect();
    let mut values = vec![0.0; g.len()];
    for local in &partial {
        values.iter_mut().zip(local).for_each(|(v, l)| *v += l);
    }
    DensityField { grid: g, values }
}

fn interpolate(field: &VectorField, grid: &Grid, x: &[f64; MAX_DIM]) -> [f64; MAX_DIM] {
    let (idx, w, count) = stencil(grid, x);
    let mut out = [0.0; MAX_DIM];
    for a in 0..grid.dim {
        out[a] = (0..count).map(|c| w[c] * field.components[a][idx[c]]).sum();
    }
    out
}

#[derive(Debug, Clone)]
pub struct VlasovStepper {
    pub symbol: KernelSymbol,
}

impl VlasovStepper {
    pub fn new(spec: &KernelSpec, grid: Grid) -> Result<Self> {
        Ok(VlasovStepper { symbol: KernelSymbol::new(spec, grid)? })
    }

    /// Mean-field acceleration at every particle.
    pub fn accelerations(&self, ensemble: &ClassicalEnsemble) -> Vec<[f64; MAX_DIM]> {
        if self.symbol.spec.is_none() {
            return vec![[0.0; MAX_DIM]; ensemble.len()];
        }
        let g = ensemble.grid;
        let field = self.symbol.force(&deposit_density(ensemble));
        (0..ensemble.len()).into_par_iter().map(|i| interpolate(&field, &g, &ensemble.box_position(i))).collect()
    }

    pub fn step(&self, ensemble: &ClassicalEnsemble, dt: f64) -> ClassicalEnsemble {
        if self.symbol.spec.is_none() {
            return free_flow_classical(ensemble, dt);
        }
        let acc = self.accelerations(ensemble);
        self.step_with(ensemble, dt, &acc).0
    }

    /// One KDK step from precomputed accelerations; returns the accelerations at the
    /// new positions for reuse.
    pub fn step_with(
        &self,
        ensemble: &ClassicalEnsemble,
        dt: f64,
        acc: &[[f64; MAX_DIM]],
    ) -> (ClassicalEnsemble, Vec<[f64; MAX_DIM]>) {
        let d = ensemble.grid.dim;
        let h = ensemble.grid.spacing();
        let vmax = ensemble.velocities.iter().flat_map(|v| v[..d].iter()).fold(0.0f64, |m, v| m.max(v.abs()));
        if vmax * dt.abs() > h {
            log::warn!("dt * max|xi| = {:.3e} exceeds one cell ({h:.3e})", vmax * dt.abs());
        }
        let mut out = ensemble.clone();
        out.velocities.par_iter_mut().zip(out.positions.par_iter_mut()).zip(acc).for_each(|((v, x), a)| {
            for k in 0..d {
                v[k] += 0.5 * dt * a[k];
                x[k] += dt * v[k];
            }
        });
        let next = self.accelerations(&out);
        out.velocities.par_iter_mut().zip(&next).for_each(|(v, a)| {
            for k in 0..d {
                v[k] += 0.5 * dt * a[k];
            }
        });
        (out, next)
    }

    /// `1/2 sum w |xi|^2 + 1/2 int rho_f (K * rho_f)`.
    pub fn energy(&self, ensemble: &ClassicalEnsemble) -> f64 {
        let d = ensemble.grid.dim;
        let kinetic: f64 = ensemble
            .weights
            .iter()
            .zip(&ensemble.velocities)
            .map(|(w, v)| 0.5 * w * v[..d].iter().map(|c| c * c).sum::<f64>())
            .sum();
        kinetic + self.symbol.interaction_energy(&deposit_density(ensemble))
    }
}

pub fn step_vlasov(ensemble: &ClassicalEnsemble, dt: f64, spec: &KernelSpec) -> Result<ClassicalEnsemble> {
    Ok(VlasovStepper::new(spec, ensemble.grid)?.step(ensemble, dt))
}

#[derive(Debug, Clone)]
pub struct VlasovRun {
    pub series: MomentSeries,
    pub final_ensemble: ClassicalEnsemble,
    pub final_time: f64,
}

pub fn run_vlasov(
    initial: &ClassicalEnsemble,
    spec: &KernelSpec,
    params: &SimParams,
    schedule: &Schedule,
    scenario: &str,
    gate: Option<Gate>,
) -> Result<VlasovRun> {
    run_vlasov_observed(initial, spec, params, schedule, scenario, gate, &mut |_, _, _| {})
}

/// As [`run_vlasov`], calling `observe(step, t, ensemble)` at every step before the horizon.
pub fn run_vlasov_observed(
    initial: &ClassicalEnsemble,
    spec: &KernelSpec,
    params: &SimParams,
    schedule: &Schedule,
    scenario: &str,
    gate: Option<Gate>,
    observe: &mut dyn FnMut(usize, f64, &ClassicalEnsemble),
) -> Result<VlasovRun> {
    params.validate()?;
    check_gate(spec, initial.grid.dim, gate)?;
    let stepper = VlasovStepper::new(spec, initial.grid)?;
    let meta = SeriesMeta {
        scenario: scenario.to_string(),
        hbar: params.hbar,
        d: initial.grid.dim,
        kernel: *spec,
        kind: "classical".into(),
    };
    let mut series = MomentSeries::new(meta, schedule.orders.clone(), schedule.lp_exponents.clone());
    let steps = (params.t_final / params.dt).round() as usize;
    let every = schedule.every.max(1);
    let record = |e: &ClassicalEnsemble, t: f64| {
        let rho = deposit_density(e);
        let energy = stepper.energy(e);
        classical_record(e, &rho, t, energy, &schedule.orders, &schedule.lp_exponents)
    };
    let mut ensemble = initial.clone();
    let mut t = 0.0;
    series.records.push(record(&ensemble, 0.0));
    observe(0, 0.0, &ensemble);
    let mut acc = stepper.accelerations(&ensemble);
    for step in 1..=steps {
        let (next, next_acc) = stepper.step_with(&ensemble, params.dt, &acc);
        ensemble = next;
        acc = next_acc;
        t = step as f64 * params.dt;
        if step % every == 0 || step == steps {
            let rec = record(&ensemble, t);
            if rec.boundary_mass > HORIZON_BOUNDARY_MASS {
                series.horizon_breached = true;
                log::warn!("validity horizon reached at t = {t}; series truncated");
                break;
            }
            series.records.push(rec);
        }
        observe(step, t, &ensemble);
    }
    Ok(VlasovRun { series, final_ensemble: ensemble, final_time: t })
}
