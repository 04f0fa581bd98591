//! Independent oracles for the closed forms, the sampler and the simulator.

use collide::circuit::{generate_qv_circuit, random_unitary_4x4, simulate, Gate};
use collide::collision::{
    collision_anomaly, collision_count, expected_collisions, expected_collisions_uniform, expected_merged_collisions,
    UniformMode,
};
use collide::distribution::{
    depolarize, haar_random_state, measurement_distribution, uniform_distribution, NoiseModel,
    ProbabilityDistribution,
};
use collide::rng::{mix_seed, stream_rng};
use collide::sampling::{build_sampler, draw, draw_noisy, Sampler};
use num_complex::Complex64;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn random_distribution(dim: usize, seed: u64) -> ProbabilityDistribution {
    let mut rng = stream_rng(seed, 0);
    let w: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() + 0.01).collect();
    let total: f64 = w.iter().sum();
    ProbabilityDistribution::new(w.iter().map(|x| x / total).collect()).unwrap()
}

/// Collisions of one outcome sequence: `len - distinct`.
fn sequence_collisions(seq: &[usize]) -> usize {
    let mut seen = seq.to_vec();
    seen.sort_unstable();
    seen.dedup();
    seq.len() - seen.len()
}

/// `E(R)` by summing over all `D^N` sequences.
fn enumerate_expectation(probs: &[f64], shots: usize) -> f64 {
    let d = probs.len();
    let mut total = 0.0;
    let mut seq = vec![0usize; shots];
    for code in 0..d.pow(shots as u32) {
        let mut c = code;
        let mut weight = 1.0;
        for s in seq.iter_mut() {
            *s = c % d;
            c /= d;
            weight *= probs[*s];
        }
        total += weight * sequence_collisions(&seq) as f64;
    }
    total
}

#[test]
fn expected_collisions_matches_enumeration() {
    for seed in 0..5 {
        let dist = random_distribution(4, seed);
        for shots in 0..=6 {
            let oracle = enumerate_expectation(dist.probs(), shots);
            let closed = expected_collisions(&dist, shots as u64);
            assert!((oracle - closed).abs() < 1e-12, "seed {seed} N {shots}: {oracle} vs {closed}");
        }
    }
}

#[test]
fn merged_expectation_matches_enumeration() {
    let a = random_distribution(4, 10);
    let b = random_distribution(4, 11);
    for (na, nb) in [(1, 1), (2, 1), (2, 3), (3, 3)] {
        // enumerate A and B sequences jointly
        let d = 4usize;
        let mut oracle = 0.0;
        for ca in 0..d.pow(na as u32) {
            for cb in 0..d.pow(nb as u32) {
                let (mut x, mut y) = (ca, cb);
                let mut seq = Vec::new();
                let mut weight = 1.0;
                for _ in 0..na {
                    seq.push(x % d);
                    weight *= a.probs()[x % d];
                    x /= d;
                }
                for _ in 0..nb {
                    seq.push(y % d);
                    weight *= b.probs()[y % d];
                    y /= d;
                }
                oracle += weight * sequence_collisions(&seq) as f64;
            }
        }
        let closed = expected_merged_collisions(&a, &b, na as u64, nb as u64).unwrap();
        assert!((oracle - closed).abs() < 1e-12, "({na},{nb}): {oracle} vs {closed}");
    }
}

#[test]
fn uniform_exact_form_matches_generic_sum() {
    for n in [2u32, 6, 10] {
        let dist = uniform_distribution(n).unwrap();
        for shots in [1u64, 7, 100, 5000] {
            let generic = expected_collisions(&dist, shots);
            let exact = expected_collisions_uniform(1 << n, shots, UniformMode::Exact);
            assert!((generic - exact).abs() <= 1e-9 * generic.max(1.0), "n {n} N {shots}");
        }
    }
}

/// Kolmogorov-Smirnov distance between `D p_j` and Exp(1).
fn ks_exponential(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let cdf = 1.0 - (-x).exp();
            (cdf - i as f64 / n).abs().max(((i + 1) as f64 / n - cdf).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn haar_probabilities_follow_porter_thomas() {
    let n = 12;
    let dim: f64 = 4096.0;
    // 1% critical value of the one-sample KS statistic
    let critical = 1.63 / dim.sqrt();
    for seed in 0..5 {
        let dist = measurement_distribution(&haar_random_state(n, seed).unwrap());
        let scaled: Vec<f64> = dist.probs().iter().map(|p| p * dim).collect();
        let d = ks_exponential(scaled);
        assert!(d < critical, "seed {seed}: KS {d} >= {critical}");
    }
}

#[test]
fn haar_state_second_moment() {
    // E[D sum p^2] = 2D / (D + 1) for Haar states
    let dim = 1024.0;
    let values: Vec<f64> = (0..40)
        .map(|s| dim * measurement_distribution(&haar_random_state(10, 100 + s).unwrap()).collision_probability())
        .collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    assert!((mean - 2.0 * dim / (dim + 1.0)).abs() < 0.02, "{mean}");
}

#[test]
fn haar_unitary_entry_moments() {
    // E|U_ij|^2 = 1/4 and E|U_ij|^4 = 2 / (4 * 5) for Haar U(4)
    let mut rng = stream_rng(77, 0);
    let trials = 20_000;
    let (mut m2, mut m4) = (0.0, 0.0);
    for _ in 0..trials {
        let u = random_unitary_4x4(&mut rng);
        let x = u[1][2].norm_sqr();
        m2 += x;
        m4 += x * x;
    }
    m2 /= trials as f64;
    m4 /= trials as f64;
    assert!((m2 - 0.25).abs() < 0.005, "{m2}");
    assert!((m4 - 0.1).abs() < 0.004, "{m4}");
}

fn chi_square_p_value(counts: &[u64], probs: &[f64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let stat: f64 = counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let e = p * total as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    1.0 - ChiSquared::new((probs.len() - 1) as f64).unwrap().cdf(stat)
}

fn histogram(sampler: &Sampler, shots: u64, seed: u64) -> Vec<u64> {
    let set = draw(sampler, shots, seed);
    let mut counts = vec![0u64; sampler.dim() as usize];
    for (k, m) in set.iter() {
        counts[k as usize] += m;
    }
    counts
}

#[test]
fn alias_sampler_chi_square() {
    for seed in 0..3 {
        let dist = random_distribution(64, 200 + seed);
        let counts = histogram(&build_sampler(&dist), 1_000_000, seed);
        let p = chi_square_p_value(&counts, dist.probs());
        assert!(p > 1e-3, "seed {seed}: p = {p}");
    }
    let skewed = measurement_distribution(&haar_random_state(8, 5).unwrap());
    let counts = histogram(&build_sampler(&skewed), 2_000_000, 9);
    assert!(chi_square_p_value(&counts, skewed.probs()) > 1e-3);
}

#[test]
fn uniform_sampler_chi_square() {
    let s = Sampler::uniform(6).unwrap();
    let counts = histogram(&s, 500_000, 4);
    assert!(chi_square_p_value(&counts, &[1.0 / 64.0; 64]) > 1e-3);
}

#[test]
fn noisy_draws_match_depolarized_distribution() {
    let ideal = measurement_distribution(&haar_random_state(6, 21).unwrap());
    let sampler = build_sampler(&ideal);
    for alpha in [0.0, 0.3, 0.8] {
        let noise = NoiseModel::new(alpha).unwrap();
        let set = draw_noisy(&sampler, noise, 1_000_000, 31);
        let mut counts = vec![0u64; 64];
        for (k, m) in set.iter() {
            counts[k as usize] += m;
        }
        let mixed = depolarize(&ideal, noise);
        let p = chi_square_p_value(&counts, mixed.probs());
        assert!(p > 1e-3, "alpha {alpha}: p = {p}");
    }
}

/// Full `2^n x 2^n` matrix of a two-qubit gate on qubits `qa`, `qb`.
fn dense_gate(n: usize, gate: &Gate, qa: usize, qb: usize) -> Vec<Vec<Complex64>> {
    let dim = 1 << n;
    let mask = (1 << qa) | (1 << qb);
    let local = |i: usize| ((i >> qa) & 1) + 2 * ((i >> qb) & 1);
    (0..dim)
        .map(|row| {
            (0..dim)
                .map(|col| {
                    if row & !mask == col & !mask {
                        gate[local(row)][local(col)]
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
                .collect()
        })
        .collect()
}

#[test]
fn simulator_matches_dense_matrices() {
    for n in 2..=3usize {
        for seed in 0..50u64 {
            let depth = 1 + (seed as usize % 4);
            let circuit = generate_qv_circuit(n, depth, mix_seed(seed, n as u64)).unwrap();
            let dim = 1 << n;
            let mut psi = vec![Complex64::new(0.0, 0.0); dim];
            psi[0] = Complex64::new(1.0, 0.0);
            for layer in circuit.layers() {
                for (gate, (qa, qb)) in layer.gates.iter().zip(layer.pairs()) {
                    let m = dense_gate(n, gate, qa, qb);
                    psi = m.iter().map(|row| row.iter().zip(&psi).map(|(a, b)| a * b).sum()).collect();
                }
            }
            let state = simulate(&circuit).unwrap();
            for (a, b) in state.amplitudes().iter().zip(&psi) {
                assert!((a - b).norm() < 1e-12, "n {n} seed {seed}");
            }
        }
    }
}

#[test]
fn qv_circuits_look_porter_thomas() {
    let n = 12u32;
    let dim = 1u64 << n;
    let shots = 8192;
    let anomalies: Vec<f64> = (0..10u64)
        .map(|c| {
            let state = simulate(&generate_qv_circuit(n as usize, n as usize, 500 + c).unwrap()).unwrap();
            let sampler = build_sampler(&measurement_distribution(&state));
            let r = collision_count(&draw(&sampler, shots, c));
            collision_anomaly(r, shots, dim).unwrap().anomaly
        })
        .collect();
    let mean = anomalies.iter().sum::<f64>() / anomalies.len() as f64;
    assert!((0.85..=1.1).contains(&mean), "mean QV anomaly {mean}");
}
