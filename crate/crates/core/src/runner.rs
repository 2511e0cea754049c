//! Scenario runner behind the command-line subcommands.

use std::path::{Path, PathBuf};

use crate::certificates::{
    conjugate, default_quasi_convexity, drive_constant, exponents_with_c4, p_conj, short_time_constants,
    smallness_threshold, verify_run, CertificateReport, ExponentSet, ThresholdParams, VerdictRow, VerifyOptions,
};
use crate::checkpoint::{self, Checkpoint};
use crate::config::{Config, Initial, Mode};
use crate::error::{Error, Result};
use crate::grid::{Spectral, MAX_DIM};
use crate::hartree::{run_hartree_observed, Gate, Schedule};
use crate::kernels::lorentz_weak_norm;
use crate::observables::{moment_l, moment_m, moment_n, quantum_lebesgue_norm, MomentSeries};
use crate::output::{write_series_csv, write_summary, Check, RunSection, Summary, TransportSample, TransportSection};
use crate::semimetrics::{
    assemble_lambda, deposit_phase, gap_from_transport, growth_envelope, husimi, wasserstein2, PhaseGrid,
};
use crate::state::{coherent_state, random_mixture, sample_classical_gaussian, ClassicalEnsemble, QuantumMixedState};
use crate::transport::{free_evolve_quantum, impulsion_boost};
use crate::vlasov::run_vlasov_observed;

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub output_dir: PathBuf,
    pub seed_override: Option<u64>,
    pub override_admissibility: bool,
    pub write_checkpoints: bool,
}

impl RunOptions {
    pub fn new(output_dir: impl Into<PathBuf>) -> Self {
        RunOptions { output_dir: output_dir.into(), seed_override: None, override_admissibility: false, write_checkpoints: false }
    }
}

fn effective(cfg: &Config, opts: &RunOptions) -> Config {
    let mut c = cfg.clone();
    if let Some(seed) = opts.seed_override {
        c.scenario.seed = seed;
    }
    c
}

/// Wigner widths `(sigma, hbar / (2 sigma))` of a coherent packet: the classical twin
/// starts from the (positive) Wigner function, so both runs share `rho(0)`.
pub fn matched_widths(sigma: f64, hbar: f64) -> (f64, f64) {
    (sigma, hbar / (2.0 * sigma))
}

/// `||G||_{L^r}` of a phase-space Gaussian of mass `m` with isotropic widths `sx`, `sxi`.
pub fn gaussian_phase_lebesgue(mass: f64, sx: f64, sxi: f64, d: usize, r: f64) -> f64 {
    let var = [sx * sx, sxi * sxi];
    let per = |v: f64| -> f64 {
        let base = (2.0 * std::f64::consts::PI * v).powf(-0.5);
        if r.is_infinite() {
            base
        } else {
            base.powf(1.0 - 1.0 / r) * r.powf(-0.5 / r)
        }
    };
    mass * (per(var[0]) * per(var[1])).powi(d as i32)
}

pub fn initial_quantum(cfg: &Config) -> Result<QuantumMixedState> {
    let s = &cfg.scenario;
    let grid = cfg.params().grid()?;
    match s.initial {
        Initial::Coherent => {
            let mut st = coherent_state(&s.center, &s.momentum, s.sigma, grid, s.hbar)?;
            st.weights[0] = s.mass;
            Ok(st)
        }
        Initial::Mixture => random_mixture(grid, s.hbar, s.components, s.sigma, s.mass, s.seed),
    }
}

/// Particle sample of the Wigner function of the coherent initial packet.
pub fn initial_classical(cfg: &Config) -> Result<ClassicalEnsemble> {
    let s = &cfg.scenario;
    if s.initial != Initial::Coherent {
        return Err(Error::Unsupported("classical twin needs coherent initial data".into()));
    }
    let (sx, sxi) = matched_widths(s.sigma, s.hbar);
    let mut e =
        sample_classical_gaussian(cfg.params().grid()?, &s.center, &s.momentum, sx, sxi, s.particles, s.seed)?;
    e.weights.iter_mut().for_each(|w| *w *= s.mass);
    Ok(e)
}

pub fn schedule(cfg: &Config) -> Schedule {
    let mut lp = cfg.moments.lp.clone();
    if cfg.certificates.enabled {
        let p = decay_exponent(cfg);
        if p.is_finite() && !lp.iter().any(|q| (q - p).abs() < 1e-12) {
            lp.push(p);
        }
    }
    Schedule { every: cfg.moments.every, orders: cfg.moments.orders.clone(), lp_exponents: lp }
}

/// `p` with `p' = r' + d/n`.
fn decay_exponent(cfg: &Config) -> f64 {
    let c = &cfg.certificates;
    conjugate(p_conj(c.n, conjugate(c.r), cfg.scenario.d))
}

fn gate(cfg: &Config, opts: &RunOptions) -> Option<Gate> {
    (!cfg.kernel.is_none() && cfg.certificates.enabled).then_some(Gate {
        n: cfg.certificates.n,
        r: cfg.certificates.r,
        override_admissibility: opts.override_admissibility,
    })
}

#[derive(Debug, Clone)]
pub struct Certification {
    pub exponents: ExponentSet,
    pub report: Option<CertificateReport>,
    pub note: Option<String>,
}

/// Exponents, drive constant and threshold certificate from initial-data moments.
pub fn certify_from(cfg: &Config, n_init: f64, m: f64, m0: f64, lebesgue: f64) -> Certification {
    let c = &cfg.certificates;
    let d = cfg.scenario.d;
    let exps = exponents_with_c4(d, c.n, c.r, cfg.kernel.lorentz_b, c.c4);
    let weak = match lorentz_weak_norm(&cfg.kernel, cfg.kernel.lorentz_b, d) {
        Ok(w) => w,
        Err(e) => return Certification { exponents: exps, report: None, note: Some(e.to_string()) },
    };
    let c_drive = drive_constant(c.drive_constant, weak, m0, lebesgue, &exps);
    let c_n = c.c_n.unwrap_or_else(|| default_quasi_convexity(c.n));
    let short = short_time_constants(n_init, m, m0, c.short_time, cfg.scenario.hbar, d, c.n, c_n);
    match smallness_threshold(&ThresholdParams { exps_a: exps.a, n: c.n, c_drive, short }) {
        Ok(report) => Certification { exponents: exps, report: Some(report), note: None },
        Err(e) => Certification { exponents: exps, report: None, note: Some(e.to_string()) },
    }
}

pub fn certify_quantum(cfg: &Config, state: &QuantumMixedState) -> Result<Certification> {
    let n = cfg.certificates.n;
    Ok(certify_from(
        cfg,
        moment_n(state, n)?,
        moment_m(state, n)?,
        state.mass(),
        quantum_lebesgue_norm(state, cfg.certificates.r),
    ))
}

pub fn certify_classical(cfg: &Config, ensemble: &ClassicalEnsemble) -> Certification {
    let n = cfg.certificates.n;
    let (sx, sxi) = matched_widths(cfg.scenario.sigma, cfg.scenario.hbar);
    let lebesgue = gaussian_phase_lebesgue(ensemble.mass(), sx, sxi, cfg.scenario.d, cfg.certificates.r);
    certify_from(
        cfg,
        crate::observables::classical_moment_n(ensemble, n),
        crate::observables::classical_moment_m(ensemble, n),
        ensemble.mass(),
        lebesgue,
    )
}

fn verdicts(cfg: &Config, series: &MomentSeries, cert: &Certification) -> Result<Vec<VerdictRow>> {
    let Some(report) = &cert.report else { return Ok(Vec::new()) };
    let c = &cfg.certificates;
    let opts = VerifyOptions {
        c_n: cert.exponents.c_n.unwrap_or(c.c4),
        p_conj: cert.exponents.p_n_conj,
        lp_exponent: decay_exponent(cfg),
        slope_tolerance: c.slope_tolerance,
    };
    verify_run(series, report, &opts)
}

fn relative_drift(values: &[f64]) -> f64 {
    match (values.first(), values.last()) {
        (Some(a), Some(b)) if *a != 0.0 => (b - a).abs() / a.abs(),
        (Some(a), Some(b)) => (b - a).abs(),
        _ => 0.0,
    }
}

fn run_section(series: &MomentSeries, csv: &Path, final_time: f64, verdicts: Vec<VerdictRow>) -> RunSection {
    let mass: Vec<f64> = series.records.iter().map(|r| r.mass).collect();
    let energy: Vec<f64> = series.records.iter().map(|r| r.energy).collect();
    RunSection {
        kind: series.meta.kind.clone(),
        csv: file_name(csv),
        records: series.records.len(),
        final_time,
        horizon_breached: series.horizon_breached,
        mass_drift: relative_drift(&mass),
        energy_drift: relative_drift(&energy),
        verdicts,
        checkpoint: None,
    }
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn prepare_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn attach(summary: &mut Summary, cert: &Certification) {
    if summary.exponents.is_none() {
        summary.ledger_hash = Some(cert.exponents.ledger_hash());
        summary.exponents = Some(cert.exponents.clone());
        summary.certificate = cert.report.clone();
        summary.certificate_note = cert.note.clone();
    }
}

/// Output of a simulate or compare command.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub summary: Summary,
    pub summary_path: PathBuf,
    pub quantum: Option<MomentSeries>,
    pub classical: Option<MomentSeries>,
}

pub fn simulate(cfg: &Config, opts: &RunOptions, mode: Mode, command: &str) -> Result<Outcome> {
    let cfg = effective(cfg, opts);
    let s = &cfg.scenario;
    prepare_dir(&opts.output_dir)?;
    let params = cfg.params();
    let sched = schedule(&cfg);
    let gate = gate(&cfg, opts);
    let mut summary = Summary::new(command, &s.name, s.seed, s.hbar, s.d, cfg.kernel);
    let metrics = cfg.metrics.enabled && mode == Mode::Paired;
    let sample_every = cfg.metrics.sample_every.max(1);
    let mut q_snaps: Vec<(usize, f64, QuantumMixedState)> = Vec::new();
    let mut c_snaps: Vec<(usize, f64, ClassicalEnsemble)> = Vec::new();
    let mut quantum = None;
    let mut classical = None;

    if mode != Mode::Vlasov {
        let init = initial_quantum(&cfg)?;
        let cert = if cfg.certificates.enabled { Some(certify_quantum(&cfg, &init)?) } else { None };
        let run = run_hartree_observed(&init, &cfg.kernel, &params, &sched, &s.name, gate, &mut |step, t, st| {
            if metrics && step % sample_every == 0 {
                q_snaps.push((step, t, st.clone()));
            }
        })?;
        let ledger = cert.as_ref().map(|c| c.exponents.ledger_hash()).unwrap_or_else(|| "none".into());
        let csv = opts.output_dir.join(format!("{}_quantum.csv", s.name));
        write_series_csv(&run.series, &ledger, &csv)?;
        let rows = match &cert {
            Some(c) => verdicts(&cfg, &run.series, c)?,
            None => Vec::new(),
        };
        let mut section = run_section(&run.series, &csv, run.final_time, rows);
        if opts.write_checkpoints {
            let path = opts.output_dir.join(format!("{}_quantum_final.smkl", s.name));
            checkpoint::write_quantum(&run.final_state, &path)?;
            section.checkpoint = Some(file_name(&path));
        }
        summary.runs.push(section);
        if let Some(c) = &cert {
            attach(&mut summary, c);
        }
        quantum = Some(run.series);
    }

    if mode != Mode::Hartree {
        let init = initial_classical(&cfg)?;
        let cert = cfg.certificates.enabled.then(|| certify_classical(&cfg, &init));
        let run = run_vlasov_observed(&init, &cfg.kernel, &params, &sched, &s.name, gate, &mut |step, t, e| {
            if metrics && step % sample_every == 0 {
                c_snaps.push((step, t, e.clone()));
            }
        })?;
        let ledger = cert.as_ref().map(|c| c.exponents.ledger_hash()).unwrap_or_else(|| "none".into());
        let csv = opts.output_dir.join(format!("{}_classical.csv", s.name));
        write_series_csv(&run.series, &ledger, &csv)?;
        let rows = match &cert {
            Some(c) => verdicts(&cfg, &run.series, c)?,
            None => Vec::new(),
        };
        let mut section = run_section(&run.series, &csv, run.final_time, rows);
        if opts.write_checkpoints {
            let path = opts.output_dir.join(format!("{}_classical_final.smkl", s.name));
            checkpoint::write_classical(&run.final_ensemble, s.hbar, &path)?;
            section.checkpoint = Some(file_name(&path));
        }
        summary.runs.push(section);
        if let Some(c) = &cert {
            attach(&mut summary, c);
        }
        classical = Some(run.series);
    }

    if metrics {
        let (q, c) = (quantum.as_ref().expect("paired"), classical.as_ref().expect("paired"));
        summary.transport = Some(paired_transport(&cfg, &q_snaps, &c_snaps, q, c)?);
    }

    let summary_path = opts.output_dir.join(format!("{}_{command}.json", s.name));
    write_summary(&summary, &summary_path)?;
    Ok(Outcome { summary, summary_path, quantum, classical })
}

/// Centers and largest per-axis standard deviations in position and velocity.
#[derive(Debug, Clone, Copy)]
struct Spread {
    cx: [f64; MAX_DIM],
    cv: [f64; MAX_DIM],
    sx: f64,
    sv: f64,
}

fn ensemble_spread(e: &ClassicalEnsemble) -> Spread {
    let d = e.grid.dim;
    let m = e.mass();
    let mut cx = [0.0; MAX_DIM];
    let mut cv = [0.0; MAX_DIM];
    for i in 0..e.len() {
        for a in 0..d {
            cx[a] += e.weights[i] * e.positions[i][a] / m;
            cv[a] += e.weights[i] * e.velocities[i][a] / m;
        }
    }
    let (mut sx, mut sv) = (0.0f64, 0.0f64);
    for a in 0..d {
        let vx: f64 = (0..e.len()).map(|i| e.weights[i] * (e.positions[i][a] - cx[a]).powi(2)).sum::<f64>() / m;
        let vv: f64 = (0..e.len()).map(|i| e.weights[i] * (e.velocities[i][a] - cv[a]).powi(2)).sum::<f64>() / m;
        sx = sx.max(vx.sqrt());
        sv = sv.max(vv.sqrt());
    }
    Spread { cx, cv, sx, sv }
}

fn quantum_spread(state: &QuantumMixedState) -> Spread {
    let g = state.grid;
    let d = g.dim;
    let m = state.mass();
    let rho = state.density();
    let dv = g.cell_volume();
    let spectral = Spectral::new(g);
    let mut momentum = vec![0.0; g.len()];
    for (w, psi) in state.weights.iter().zip(&state.wavefunctions) {
        let mut data = psi.clone();
        spectral.forward(&mut data);
        let norm: f64 = data.iter().map(|z| z.norm_sqr()).sum();
        momentum.iter_mut().zip(&data).for_each(|(p, z)| *p += w * z.norm_sqr() / norm);
    }
    let mut cx = [0.0; MAX_DIM];
    let mut cv = [0.0; MAX_DIM];
    let mut x2 = [0.0; MAX_DIM];
    let mut v2 = [0.0; MAX_DIM];
    for f in 0..g.len() {
        let x = g.position(f);
        let k = g.wavevector(f);
        for a in 0..d {
            let (rx, pv) = (rho.values[f] * dv / m, momentum[f] / m);
            cx[a] += rx * x[a];
            x2[a] += rx * x[a] * x[a];
            let p = state.hbar * k[a];
            cv[a] += pv * p;
            v2[a] += pv * p * p;
        }
    }
    let (mut sx, mut sv) = (0.0f64, 0.0f64);
    for a in 0..d {
        sx = sx.max((x2[a] - cx[a] * cx[a]).max(0.0).sqrt());
        sv = sv.max((v2[a] - cv[a] * cv[a]).max(0.0).sqrt());
    }
    Spread { cx, cv, sx, sv }
}

/// Phase grid covering `half_width` standard deviations of every spread, each widened by
/// the Husimi smoothing (`hbar / 2` per coordinate).
fn phase_grid_covering(cfg: &Config, d: usize, spreads: &[Spread]) -> Result<PhaseGrid> {
    let smooth = 0.5 * cfg.scenario.hbar;
    let hw = cfg.metrics.half_width;
    let mut lo = [f64::INFINITY; 2 * MAX_DIM];
    let mut hi = [f64::NEG_INFINITY; 2 * MAX_DIM];
    for s in spreads {
        let (wx, wv) = (hw * (s.sx * s.sx + smooth).sqrt(), hw * (s.sv * s.sv + smooth).sqrt());
        for a in 0..d {
            lo[a] = lo[a].min(s.cx[a] - wx);
            hi[a] = hi[a].max(s.cx[a] + wx);
            lo[d + a] = lo[d + a].min(s.cv[a] - wv);
            hi[d + a] = hi[d + a].max(s.cv[a] + wv);
        }
    }
    let center = |a: usize| 0.5 * (lo[a] + hi[a]);
    let half = |r: std::ops::Range<usize>| r.map(|a| 0.5 * (hi[a] - lo[a])).fold(0.0, f64::max);
    let cx: Vec<f64> = (0..d).map(center).collect();
    let cv: Vec<f64> = (d..2 * d).map(center).collect();
    PhaseGrid::centered(d, &cx, &cv, half(0..d), half(d..2 * d), cfg.metrics.points_x, cfg.metrics.points_xi)
}

/// Phase grid for comparing an ensemble with the Husimi transform of its quantum twin.
pub fn phase_grid_for(cfg: &Config, e: &ClassicalEnsemble) -> Result<PhaseGrid> {
    phase_grid_covering(cfg, e.grid.dim, &[ensemble_spread(e)])
}

/// `W_2(f, husimi)^2` at matched snapshot times against the growth envelope.
pub fn paired_transport(
    cfg: &Config,
    q_snaps: &[(usize, f64, QuantumMixedState)],
    c_snaps: &[(usize, f64, ClassicalEnsemble)],
    quantum: &MomentSeries,
    classical: &MomentSeries,
) -> Result<TransportSection> {
    let d = cfg.scenario.d;
    let hbar = cfg.scenario.hbar;
    let besov = cfg.kernel.besov_bound.ok_or_else(|| {
        Error::Config { location: "field kernel.besov_bound".into(), message: "required for the envelope check".into() }
    })?;
    let exps = exponents_with_c4(d, cfg.certificates.n, cfg.certificates.r, cfg.kernel.lorentz_b, cfg.certificates.c4);
    let sup_samples: Vec<(f64, f64)> =
        quantum.records.iter().zip(&classical.records).map(|(q, c)| (q.t, q.rho_max + c.rho_max)).collect();
    let lambda = assemble_lambda(
        cfg.metrics.c_d,
        besov,
        &sup_samples,
        exps.n0,
        exps.c_n.unwrap_or(cfg.certificates.c4),
        cfg.kernel.lorentz_b,
    );
    let mut measured = Vec::new();
    for (step, t, st) in q_snaps {
        let Some((_, _, e)) = c_snaps.iter().find(|(s, _, _)| s == step) else { continue };
        let pg = phase_grid_for(cfg, e)?;
        let hus = husimi(st, &pg)?;
        let (f, lost) = deposit_phase(e, &pg)?;
        let spacing = (0..2 * d).map(|a| pg.spacing(a)).fold(f64::INFINITY, f64::min);
        let tr = wasserstein2(&f, &hus, cfg.metrics.epsilon_cells * spacing * spacing)?;
        log::info!("t = {t}: W2^2 = {:.5e} ({} iterations)", tr.w2_squared, tr.iterations);
        measured.push((*t, tr, lost));
    }
    let w0_squared = measured.first().map_or(0.0, |m| m.1.w2_squared) + d as f64 * hbar;
    let mut samples = Vec::new();
    for (t, tr, lost) in measured {
        let envelope = growth_envelope(w0_squared, lambda, hbar, d, t);
        let bound = envelope * envelope + d as f64 * hbar;
        let gap = gap_from_transport(tr.clone(), d, hbar);
        samples.push(TransportSample {
            t,
            epsilon: tr.epsilon,
            w2_squared: tr.w2_squared,
            envelope,
            bound,
            window_lower: gap.window_lower,
            marginal_error: tr.marginal_errors[0],
            converged: tr.converged,
            deposition_loss: lost,
            pass: tr.w2_squared <= bound,
        });
    }
    let all_pass = !samples.is_empty() && samples.iter().all(|s| s.pass);
    Ok(TransportSection { lambda, w0_squared, epsilon_cells: cfg.metrics.epsilon_cells, samples, all_pass })
}

pub fn compare(cfg: &Config, opts: &RunOptions) -> Result<Outcome> {
    let mut c = cfg.clone();
    c.metrics.enabled = true;
    simulate(&c, opts, Mode::Paired, "compare")
}

/// Exponents and threshold from the configured initial data, without dynamics.
pub fn certify(cfg: &Config, opts: &RunOptions) -> Result<Summary> {
    let cfg = effective(cfg, opts);
    let s = &cfg.scenario;
    prepare_dir(&opts.output_dir)?;
    let mut summary = Summary::new("certify", &s.name, s.seed, s.hbar, s.d, cfg.kernel);
    let cert = match cfg.scenario.mode {
        Mode::Vlasov => certify_classical(&cfg, &initial_classical(&cfg)?),
        _ => certify_quantum(&cfg, &initial_quantum(&cfg)?)?,
    };
    attach(&mut summary, &cert);
    let adm = crate::kernels::admissibility(&cfg.kernel, s.d, cfg.certificates.n, cfg.certificates.r);
    summary.checks.push(Check {
        name: format!("kernel admissible ({})", adm.reason),
        value: adm.weak_norm.unwrap_or(f64::NAN),
        tolerance: f64::NAN,
        pass: adm.admissible,
    });
    write_summary(&summary, &opts.output_dir.join(format!("{}_certify.json", s.name)))?;
    Ok(summary)
}

pub const TRANSPORT_TOLERANCE: f64 = 1e-7;

/// Largest relative deviation of `L_n(t)` from `L_n(0)` under free evolution.
pub fn l_invariance(state: &QuantumMixedState, n: usize, times: &[f64]) -> Result<f64> {
    let l0 = moment_l(state, n, 0.0)?;
    let mut worst: f64 = 0.0;
    for &t in times {
        let lt = moment_l(&free_evolve_quantum(state, t), n, t)?;
        worst = worst.max((lt - l0).abs() / l0.abs());
    }
    Ok(worst)
}

pub fn transport_check(cfg: &Config, opts: &RunOptions) -> Result<Summary> {
    let cfg = effective(cfg, opts);
    let s = &cfg.scenario;
    prepare_dir(&opts.output_dir)?;
    let mut summary = Summary::new("transport-check", &s.name, s.seed, s.hbar, s.d, cfg.kernel);
    let base = initial_quantum(&cfg)?;
    let grid = base.grid;
    let boost = 0.25 * s.hbar / (s.sigma * s.sigma);
    let mut states = vec![("initial", base.clone()), ("boosted", impulsion_boost(&base, boost))];
    let mixture_width = (s.sigma).max(2.0 * grid.spacing());
    states.push(("mixture", random_mixture(grid, s.hbar, 3, mixture_width, s.mass, s.seed)?));
    let tf = if cfg.grid.t_final > 0.0 { cfg.grid.t_final } else { 1.0 };
    let times = [0.25 * tf, 0.5 * tf, tf];
    for (label, st) in &states {
        for &n in cfg.moments.orders.iter().filter(|n| **n % 2 == 0) {
            let dev = l_invariance(st, n, &times)?;
            summary.checks.push(Check {
                name: format!("L_{n} invariance ({label})"),
                value: dev,
                tolerance: TRANSPORT_TOLERANCE,
                pass: dev < TRANSPORT_TOLERANCE,
            });
        }
    }
    write_summary(&summary, &opts.output_dir.join(format!("{}_transport-check.json", s.name)))?;
    Ok(summary)
}

/// Relative mass a `half_width = 3` phase grid may leave outside its box.
pub const PHASE_GRID_LOSS: f64 = 2e-2;

/// Husimi diagnostics of a quantum checkpoint and, when a second checkpoint is given,
/// `W_2^2` against it (classical ensembles are deposited on the Husimi grid).
pub fn metrics(cfg: &Config, opts: &RunOptions, first: &Path, second: Option<&Path>) -> Result<Summary> {
    let cfg = effective(cfg, opts);
    let s = &cfg.scenario;
    prepare_dir(&opts.output_dir)?;
    let mut summary = Summary::new("metrics", &s.name, s.seed, s.hbar, s.d, cfg.kernel);
    let (Checkpoint::Quantum(state), hbar) = checkpoint::read(first)? else {
        return Err(Error::invalid("checkpoint", "the first checkpoint must hold a quantum state"));
    };
    let other = second.map(checkpoint::read).transpose()?;
    let mut spreads = vec![quantum_spread(&state)];
    match &other {
        Some((Checkpoint::Classical(e), _)) => spreads.push(ensemble_spread(e)),
        Some((Checkpoint::Quantum(q), _)) => spreads.push(quantum_spread(q)),
        None => {}
    }
    let pg = phase_grid_covering(&cfg, state.grid.dim, &spreads)?;
    let hus = husimi(&state, &pg)?;
    let lost = (hus.mass() - state.mass()).abs() / state.mass();
    summary.checks.push(Check {
        name: "husimi mass outside the phase grid".into(),
        value: lost,
        tolerance: PHASE_GRID_LOSS,
        pass: lost < PHASE_GRID_LOSS,
    });
    let target = match other {
        Some((Checkpoint::Classical(e), _)) => Some(deposit_phase(&e, &pg)?.0),
        Some((Checkpoint::Quantum(q), _)) => Some(husimi(&q, &pg)?),
        None => None,
    };
    if let Some(f) = target {
        let spacing = (0..2 * cfg.scenario.d).map(|a| pg.spacing(a)).fold(f64::INFINITY, f64::min);
        let tr = wasserstein2(&f, &hus, cfg.metrics.epsilon_cells * spacing * spacing)?;
        let gap = gap_from_transport(tr.clone(), state.grid.dim, hbar);
        summary.checks.push(Check {
            name: "W2^2".into(),
            value: tr.w2_squared,
            tolerance: tr.epsilon,
            pass: tr.converged,
        });
        summary.checks.push(Check {
            name: "window lower edge >= d hbar".into(),
            value: gap.window_lower,
            tolerance: gap.floor,
            pass: gap.window_lower >= gap.floor,
        });
    }
    write_summary(&summary, &opts.output_dir.join(format!("{}_metrics.json", s.name)))?;
    Ok(summary)
}
