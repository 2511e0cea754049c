use semiclassical::grid::Grid;
use semiclassical::observables::{classical_moment_l, classical_moment_n, moment_l, moment_m, moment_n};
use semiclassical::state::{coherent_state, random_mixture, sample_classical_gaussian, QuantumMixedState};
use semiclassical::transport::{free_evolve_quantum, free_flow_classical, impulsion_boost};

fn states(d: usize) -> Vec<(&'static str, QuantumMixedState)> {
    let (n, l, sigma) = match d {
        1 => (128, 16.0, 0.5),
        2 => (64, 12.0, 0.5),
        _ => (64, 12.0, 0.5),
    };
    let g = Grid::new(d, n, l).unwrap();
    let hbar = 0.25;
    let x0 = [0.3, -0.2, 0.1];
    let p0 = [0.2, 0.1, -0.15];
    let coherent = coherent_state(&x0[..d], &p0[..d], sigma, g, hbar).unwrap();
    let boosted = impulsion_boost(&coherent, 0.25);
    let mixture = random_mixture(g, hbar, 3, sigma, 1.0, 17).unwrap();
    vec![("coherent", coherent), ("boosted", boosted), ("mixture", mixture)]
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn transported_moment_is_invariant_under_free_evolution() {
    for d in 1..=3 {
        for (label, s) in states(d) {
            for n in [2, 4] {
                let l0 = moment_l(&s, n, 0.0).unwrap();
                for t in [0.25, 0.5, 1.0] {
                    let lt = moment_l(&free_evolve_quantum(&s, t), n, t).unwrap();
                    assert!(rel(lt, l0) < 1e-7, "d={d} {label} n={n} t={t}: {lt} vs {l0}");
                }
            }
        }
    }
}

#[test]
fn second_moment_grows_quadratically() {
    // |x|^2 at time t is tr |x + t p|^2 at time zero, i.e. L_2(t) of the conjugate state.
    for (label, s) in states(2) {
        let mut reversed = s.clone();
        reversed.wavefunctions.iter_mut().flatten().for_each(|z| *z = z.conj());
        for t in [0.3, 0.8] {
            let direct = moment_n(&free_evolve_quantum(&s, t), 2).unwrap();
            let predicted = moment_l(&reversed, 2, t).unwrap();
            assert!(rel(direct, predicted) < 1e-8, "{label} t={t}: {direct} vs {predicted}");
        }
    }
}

#[test]
fn free_evolution_conserves_kinetic_moments_and_mass() {
    for (label, s) in states(3) {
        let e = free_evolve_quantum(&s, 0.7);
        assert!(rel(e.mass(), s.mass()) < 1e-12, "{label}");
        for n in [2, 4] {
            assert!(rel(moment_m(&e, n).unwrap(), moment_m(&s, n).unwrap()) < 1e-10, "{label} n={n}");
        }
        assert_eq!(e.weights, s.weights);
    }
}

#[test]
fn forward_then_backward_is_identity() {
    for (label, s) in states(2) {
        let back = free_evolve_quantum(&free_evolve_quantum(&s, 0.9), -0.9);
        let worst = s
            .wavefunctions
            .iter()
            .zip(&back.wavefunctions)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).norm()))
            .fold(0.0, f64::max);
        assert!(worst < 1e-12, "{label}: {worst}");
    }
}

#[test]
fn evolution_composes() {
    let (_, s) = states(1).remove(2);
    let once = free_evolve_quantum(&s, 1.0);
    let twice = free_evolve_quantum(&free_evolve_quantum(&s, 0.4), 0.6);
    let gap = once.wavefunctions[0]
        .iter()
        .zip(&twice.wavefunctions[0])
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    assert!(gap < 1e-12, "{gap}");
}

#[test]
fn classical_transported_moment_is_exact() {
    let g = Grid::new(3, 16, 10.0).unwrap();
    let e = sample_classical_gaussian(g, &[0.1, 0.0, -0.2], &[0.3, -0.1, 0.0], 0.6, 0.4, 500, 3).unwrap();
    for n in [2, 4] {
        let n0 = classical_moment_n(&e, n);
        for t in [0.5, 2.0, 8.0] {
            let lt = classical_moment_l(&free_flow_classical(&e, t), n, t);
            assert!(rel(lt, n0) < 1e-12, "n={n} t={t}");
        }
    }
}
