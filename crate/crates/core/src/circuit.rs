//! Quantum-volume style random circuits and a statevector simulator.
//!
//! A circuit on `n` qubits is a list of layers. Each layer applies a random
//! permutation `pi` of the qubits and then one Haar-random two-qubit unitary to
//! each consecutive pair `(pi[0], pi[1])`, `(pi[2], pi[3])`, ...; with odd `n`
//! the last permuted qubit idles.
//!
//! Gate matrices act on the local basis index `b_a + 2 b_b`, where `b_a` and
//! `b_b` are the bits of the first and second qubit of the pair.

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::{StateVector, MAX_STATE_QUBITS};
use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// 4x4 complex matrix, row-major.
pub type Gate = [[Complex64; 4]; 4];

/// Tolerance on `max |U^H U - I|` for every stored gate.
pub const UNITARITY_TOLERANCE: f64 = 1e-10;

const PARALLEL_MIN_DIM: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub permutation: Vec<usize>,
    pub gates: Vec<Gate>,
}

impl Layer {
    /// Qubit pairs the gates act on, in gate order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.permutation.chunks_exact(2).map(|p| (p[0], p[1]))
    }
}

/// Canonical, regenerable description of a seeded QV circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CircuitKey {
    pub seed: u64,
    pub n_qubits: usize,
    pub depth: usize,
}

impl CircuitKey {
    pub fn generate(&self) -> Result<Circuit> {
        generate_qv_circuit(self.n_qubits, self.depth, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    n_qubits: usize,
    layers: Vec<Layer>,
    key: Option<CircuitKey>,
}

impl Circuit {
    /// Builds a circuit from explicit layers, checking permutations and unitarity.
    pub fn new(n_qubits: usize, layers: Vec<Layer>) -> Result<Self> {
        for (i, layer) in layers.iter().enumerate() {
            if !is_permutation(&layer.permutation, n_qubits) {
                return Err(Error::domain(format!(
                    "layer {i}: {:?} is not a permutation of 0..{n_qubits}",
                    layer.permutation
                )));
            }
            if layer.gates.len() != n_qubits / 2 {
                return Err(Error::domain(format!(
                    "layer {i}: expected {} gates, found {}",
                    n_qubits / 2,
                    layer.gates.len()
                )));
            }
            for (g, gate) in layer.gates.iter().enumerate() {
                let err = unitarity_error(gate);
                if err >= UNITARITY_TOLERANCE {
                    return Err(Error::domain(format!(
                        "layer {i} gate {g} is not unitary (deviation {err:e})"
                    )));
                }
            }
        }
        Ok(Self {
            n_qubits,
            layers,
            key: None,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// The seed-based description, when the circuit came from [`generate_qv_circuit`].
    pub fn key(&self) -> Option<CircuitKey> {
        self.key
    }
}

fn is_permutation(p: &[usize], n: usize) -> bool {
    if p.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    p.iter().all(|&q| q < n && !std::mem::replace(&mut seen[q], true))
}

/// `max_{ij} |(U^H U - I)_{ij}|`.
pub fn unitarity_error(u: &Gate) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..4 {
        for j in 0..4 {
            let mut s = Complex64::new(0.0, 0.0);
            for k in 0..4 {
                s += u[k][i].conj() * u[k][j];
            }
            if i == j {
                s -= 1.0;
            }
            worst = worst.max(s.norm());
        }
    }
    worst
}

/// Random `depth`-layer circuit; deterministic in `seed`.
pub fn generate_qv_circuit(n_qubits: usize, depth: usize, seed: u64) -> Result<Circuit> {
    if n_qubits == 0 || depth == 0 {
        return Err(Error::domain("a QV circuit needs at least one qubit and one layer"));
    }
    let mut rng = stream_rng(seed, 0);
    let layers = (0..depth)
        .map(|_| {
            let mut permutation: Vec<usize> = (0..n_qubits).collect();
            permutation.shuffle(&mut rng);
            let gates = (0..n_qubits / 2).map(|_| random_unitary_4x4(&mut rng)).collect();
            Layer { permutation, gates }
        })
        .collect();
    Ok(Circuit {
        n_qubits,
        layers,
        key: Some(CircuitKey {
            seed,
            n_qubits,
            depth,
        }),
    })
}

/// Haar-random element of U(4): Householder QR of a complex Ginibre matrix,
/// with each column of Q rotated by the phase of the matching diagonal of R.
pub fn random_unitary_4x4<R: Rng + ?Sized>(rng: &mut R) -> Gate {
    let zero = Complex64::new(0.0, 0.0);
    let mut a = [[zero; 4]; 4];
    for row in a.iter_mut() {
        for z in row.iter_mut() {
            *z = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        }
    }
    let mut q = identity();
    for k in 0..3 {
        let norm = (k..4).map(|i| a[i][k].norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let phase = if a[k][k].norm() > 0.0 {
            a[k][k] / a[k][k].norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        // reflect x onto -phase * |x| e_k
        let mut v = [zero; 4];
        for i in k..4 {
            v[i] = a[i][k];
        }
        v[k] += phase * norm;
        let vnorm = (k..4).map(|i| v[i].norm_sqr()).sum::<f64>().sqrt();
        for vi in v.iter_mut().skip(k) {
            *vi /= vnorm;
        }
        // A <- (I - 2 v v^H) A
        for j in 0..4 {
            let dot: Complex64 = (k..4).map(|i| v[i].conj() * a[i][j]).sum();
            for i in k..4 {
                a[i][j] -= 2.0 * v[i] * dot;
            }
        }
        // Q <- Q (I - 2 v v^H)
        for row in q.iter_mut() {
            let dot: Complex64 = (k..4).map(|i| row[i] * v[i]).sum();
            for i in k..4 {
                row[i] -= 2.0 * dot * v[i].conj();
            }
        }
    }
    for j in 0..4 {
        let r = a[j][j];
        let phase = if r.norm() > 0.0 {
            r / r.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        for row in q.iter_mut() {
            row[j] *= phase;
        }
    }
    q
}

fn identity() -> Gate {
    let mut m = [[Complex64::new(0.0, 0.0); 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = Complex64::new(1.0, 0.0);
    }
    m
}

/// Runs the circuit on `|0...0>`.
pub fn simulate(circuit: &Circuit) -> Result<StateVector> {
    if circuit.n_qubits > MAX_STATE_QUBITS as usize {
        return Err(Error::Resource(format!(
            "simulating {} qubits exceeds the {MAX_STATE_QUBITS}-qubit limit",
            circuit.n_qubits
        )));
    }
    let mut state = StateVector::zero_state(circuit.n_qubits as u32)?;
    for layer in &circuit.layers {
        for (gate, (qa, qb)) in layer.gates.iter().zip(layer.pairs()) {
            apply_two_qubit_gate(state.amplitudes_mut(), gate, qa, qb);
        }
    }
    Ok(state)
}

/// Applies `gate` to qubits `qa`, `qb` in place.
///
/// Amplitudes are processed in blocks of `2^(max(qa, qb) + 1)`; every group of
/// four amplitudes the gate mixes lies inside one block, so blocks are
/// updated independently (in parallel for large states).
pub fn apply_two_qubit_gate(amps: &mut [Complex64], gate: &Gate, qa: usize, qb: usize) {
    assert_ne!(qa, qb, "two-qubit gate needs distinct qubits");
    let block = 1usize << (qa.max(qb) + 1);
    assert!(amps.len() >= block, "qubit index out of range");
    let kernel = |chunk: &mut [Complex64]| apply_in_block(chunk, gate, qa, qb);
    if amps.len() >= PARALLEL_MIN_DIM && amps.len() / block >= 2 {
        amps.par_chunks_mut(block).for_each(kernel);
    } else {
        amps.chunks_mut(block).for_each(kernel);
    }
}

fn apply_in_block(chunk: &mut [Complex64], gate: &Gate, qa: usize, qb: usize) {
    let (lo, hi) = (qa.min(qb), qa.max(qb));
    let ma = 1usize << qa;
    let mb = 1usize << qb;
    for g in 0..chunk.len() / 4 {
        let base = insert_zero_bit(insert_zero_bit(g, lo), hi);
        let idx = [base, base | ma, base | mb, base | ma | mb];
        let input = idx.map(|i| chunk[i]);
        for (row, &i) in gate.iter().zip(idx.iter()) {
            chunk[i] = row[0] * input[0] + row[1] * input[1] + row[2] * input[2] + row[3] * input[3];
        }
    }
}

#[inline]
fn insert_zero_bit(x: usize, bit: usize) -> usize {
    let low = x & ((1 << bit) - 1);
    ((x >> bit) << (bit + 1)) | low
}
