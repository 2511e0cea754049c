//! Shared test oracles.
#![allow(dead_code)]

/// Adaptive Dormand-Prince 5(4) integration of `y' = f(t, y)` from `t0` to `t1`.
pub fn dopri<F>(f: F, t0: f64, t1: f64, y0: &[f64], rtol: f64, atol: f64) -> Vec<f64>
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
{
    const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut t = t0;
    let span = t1 - t0;
    if span == 0.0 {
        return y;
    }
    let dir = span.signum();
    let mut h = 1e-3 * span.abs() * dir;
    while (t1 - t) * dir > 0.0 {
        if (t + h - t1) * dir > 0.0 {
            h = t1 - t;
        }
        let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
        for s in 0..7 {
            let mut ys = y.clone();
            for (j, kj) in k.iter().enumerate() {
                for i in 0..n {
                    ys[i] += h * A[s][j] * kj[i];
                }
            }
            k.push(f(t + C[s] * h, &ys));
        }
        let mut y5 = y.clone();
        let mut err: f64 = 0.0;
        for i in 0..n {
            let mut d5 = 0.0;
            let mut d4 = 0.0;
            for s in 0..7 {
                d5 += B5[s] * k[s][i];
                d4 += B4[s] * k[s][i];
            }
            y5[i] += h * d5;
            let sc = atol + rtol * y[i].abs().max(y5[i].abs());
            err = err.max((h * (d5 - d4)).abs() / sc);
        }
        if err <= 1.0 {
            t += h;
            y = y5;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
    }
    y
}

/// Bisection root of a sign-changing function on `[a, b]`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..400 {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
        if (b - a).abs() <= tol * m.abs().max(1e-300) {
            break;
        }
    }
    0.5 * (a + b)
}

use semiclassical::grid::Grid;
use semiclassical::state::{gaussian_wavefunction, QuantumMixedState};

/// One Gaussian packet of a superposition: amplitude, center, momentum, width.
#[derive(Debug, Clone)]
pub struct Packet {
    pub amp: num_complex::Complex64,
    pub center: Vec<f64>,
    pub momentum: Vec<f64>,
    pub width: f64,
}

/// Mixture whose components are superpositions of packets, orthonormalized.
pub fn packet_mixture(grid: Grid, hbar: f64, weights: &[f64], comps: &[Vec<Packet>]) -> QuantumMixedState {
    let vectors = comps
        .iter()
        .map(|c| {
            let mut psi = vec![num_complex::Complex64::default(); grid.len()];
            for p in c {
                let g = gaussian_wavefunction(&grid, hbar, &p.center, &p.momentum, p.width);
                // Restore the unnormalized packet so that dilation acts exactly.
                let scale = p.amp * p.width.powf(0.5 * grid.dim as f64);
                psi.iter_mut().zip(&g).for_each(|(x, y)| *x += scale * y);
            }
            psi
        })
        .collect();
    QuantumMixedState::new(grid, hbar, weights.to_vec(), vectors).unwrap().orthonormalize().unwrap()
}

/// The dilation `psi(x) -> s^{d/2} psi(s x)` acting on packet parameters.
pub fn dilate(comps: &[Vec<Packet>], s: f64) -> Vec<Vec<Packet>> {
    comps
        .iter()
        .map(|c| {
            c.iter()
                .map(|p| Packet {
                    amp: p.amp,
                    center: p.center.iter().map(|x| x / s).collect(),
                    momentum: p.momentum.iter().map(|m| m * s).collect(),
                    width: p.width / s,
                })
                .collect()
        })
        .collect()
}

/// Random family member: `components` superpositions of three packets each.
pub fn random_packets<R: rand::Rng>(rng: &mut R, d: usize, components: usize, hbar: f64) -> (Vec<f64>, Vec<Vec<Packet>>) {
    let raw: Vec<f64> = (0..components).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let weights = raw.iter().map(|w| w / total).collect();
    let comps = (0..components)
        .map(|_| {
            (0..3)
                .map(|_| {
                    let width = rng.random_range(0.7..1.1);
                    Packet {
                        amp: num_complex::Complex64::from_polar(rng.random_range(0.5..1.0), rng.random_range(0.0..6.283)),
                        center: (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
                        momentum: (0..d).map(|_| rng.random_range(-0.5..0.5) * hbar / width).collect(),
                        width,
                    }
                })
                .collect()
        })
        .collect();
    (weights, comps)
}

/// Random envelope parameters `(a, n, C_drive, L_tau, tau)` with `a` in the admissible window.
pub fn envelope_draw<R: rand::Rng>(rng: &mut R) -> (f64, usize, f64, f64, f64) {
    let a = rng.random_range(1.05..1.95);
    let n = [2, 4, 6][rng.random_range(0..3)];
    let c = 10f64.powf(rng.random_range(-2.0..0.5));
    let l_tau = 10f64.powf(rng.random_range(-1.0..1.0));
    let tau = 10f64.powf(rng.random_range(-1.0..0.5));
    (a, n, c, l_tau, tau)
}

/// Largest relative gap between the closed-form envelope and an adaptive integration of
/// `L' = C L^{1 + a/n} t^{-a}` at checkpoints up to `min(40 tau, 0.9 t*)`.
pub fn envelope_ode_gap(a: f64, n: usize, c: f64, l_tau: f64, tau: f64) -> f64 {
    use semiclassical::certificates::{Envelope, Verdict};
    let env = Envelope::new(a, n, c, l_tau, tau).unwrap();
    let end = match env.verdict {
        Verdict::BlowUpHorizon { t_star } => (40.0 * tau).min(tau + 0.9 * (t_star - tau)),
        _ => 40.0 * tau,
    };
    let rhs = |t: f64, y: &[f64]| vec![c * y[0].powf(1.0 + a / n as f64) * t.powf(-a)];
    let mut worst = 0.0_f64;
    let mut y = vec![l_tau];
    let mut t0 = tau;
    for k in 1..=8 {
        let t1 = tau + (end - tau) * k as f64 / 8.0;
        y = dopri(rhs, t0, t1, &y, 1e-12, 1e-14);
        t0 = t1;
        let closed = env.value(t1).unwrap();
        worst = worst.max((closed - y[0]).abs() / y[0].abs());
    }
    worst
}
