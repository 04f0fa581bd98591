//! Outcome distributions over `D = 2^n` bitstrings.
//!
//! A noisy device state `alpha |psi><psi| + (1 - alpha) I / D` is never stored
//! as a density matrix: it is the pair (measurement distribution of `|psi>`,
//! [`NoiseModel`]), and [`depolarize`] produces the mixed distribution when a
//! dense one is needed.

use std::io::{Read, Write};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Largest `n` for which a dense uniform distribution is materialized.
pub const MAX_UNIFORM_QUBITS: u32 = 30;
/// Largest `n` for which a dense state vector is materialized.
pub const MAX_STATE_QUBITS: u32 = 24;
/// Absolute tolerance on the total probability (or squared norm).
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Probabilities `p_j` of the `D = 2^n` measurement outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityDistribution {
    probs: Vec<f64>,
}

impl ProbabilityDistribution {
    /// Validates and wraps a probability vector.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || !probs.len().is_power_of_two() {
            return Err(Error::domain(format!(
                "distribution length {} is not a power of two",
                probs.len()
            )));
        }
        if let Some((j, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(Error::domain(format!("probability p[{j}] = {p} is negative or not finite")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::domain(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { probs })
    }

    pub fn dim(&self) -> usize {
        self.probs.len()
    }

    pub fn n_qubits(&self) -> u32 {
        self.probs.len().trailing_zeros()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    /// `sum_j p_j^2`.
    pub fn collision_probability(&self) -> f64 {
        self.probs.iter().map(|p| p * p).sum()
    }

    /// Writes `dim` as a little-endian u64 followed by `dim` little-endian f64 values.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.probs.len() as u64).to_le_bytes())?;
        for p in &self.probs {
            w.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 8 * self.probs.len());
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    /// Inverse of [`write_to`](Self::write_to).
    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut word = [0u8; 8];
        read_word(&mut r, &mut word, 0)?;
        let dim = u64::from_le_bytes(word);
        if dim == 0 || !dim.is_power_of_two() || dim > 1u64 << MAX_UNIFORM_QUBITS {
            return Err(Error::format(0, format!("invalid dimension {dim}")));
        }
        let mut probs = Vec::with_capacity(dim as usize);
        for j in 0..dim {
            let offset = 8 + 8 * j;
            read_word(&mut r, &mut word, offset)?;
            probs.push(f64::from_le_bytes(word));
        }
        Self::new(probs).map_err(|e| Error::format(8, e.to_string()))
    }
}

fn read_word<R: Read>(r: &mut R, word: &mut [u8; 8], offset: u64) -> Result<()> {
    r.read_exact(word).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::format(offset, "unexpected end of data"),
        _ => Error::Io(e),
    })
}

/// Amplitudes of a pure `n`-qubit state; bit `k` of an index is qubit `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: u32,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.is_empty() || !amplitudes.len().is_power_of_two() {
            return Err(Error::domain(format!(
                "state length {} is not a power of two",
                amplitudes.len()
            )));
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::domain(format!("state has squared norm {norm}, not 1")));
        }
        Ok(Self {
            n_qubits: amplitudes.len().trailing_zeros(),
            amplitudes,
        })
    }

    /// `|0...0>`.
    pub fn zero_state(n_qubits: u32) -> Result<Self> {
        check_guard(n_qubits, MAX_STATE_QUBITS, "state vector")?;
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(Self {
            n_qubits,
            amplitudes,
        })
    }

    pub fn n_qubits(&self) -> u32 {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }
}

/// Global depolarizing noise with ideal-state weight `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    alpha: f64,
}

impl NoiseModel {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::domain(format!("alpha = {alpha} is outside [0, 1]")));
        }
        Ok(Self { alpha })
    }

    pub fn noiseless() -> Self {
        Self { alpha: 1.0 }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

fn check_guard(n_qubits: u32, limit: u32, what: &str) -> Result<()> {
    if n_qubits > limit {
        return Err(Error::Resource(format!(
            "{what} with {n_qubits} qubits exceeds the {limit}-qubit limit"
        )));
    }
    Ok(())
}

/// `p_j = 1 / 2^n` for every outcome.
pub fn uniform_distribution(n_qubits: u32) -> Result<ProbabilityDistribution> {
    check_guard(n_qubits, MAX_UNIFORM_QUBITS, "uniform distribution")?;
    let dim = 1usize << n_qubits;
    Ok(ProbabilityDistribution {
        probs: vec![1.0 / dim as f64; dim],
    })
}

/// Haar-random pure state: i.i.d. standard complex normals, normalized.
pub fn haar_random_state(n_qubits: u32, seed: u64) -> Result<StateVector> {
    check_guard(n_qubits, MAX_STATE_QUBITS, "state vector")?;
    let mut rng = stream_rng(seed, 0);
    let mut amplitudes: Vec<Complex64> = (0..1usize << n_qubits)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    for a in &mut amplitudes {
        *a /= norm;
    }
    Ok(StateVector {
        n_qubits,
        amplitudes,
    })
}

/// Born rule.
pub fn measurement_distribution(state: &StateVector) -> ProbabilityDistribution {
    let mut probs: Vec<f64> = state.amplitudes.iter().map(|a| a.norm_sqr()).collect();
    // renormalize away the accumulated rounding of the state's own norm
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    ProbabilityDistribution { probs }
}

/// Porter-Thomas density `D exp(-D p)`.
pub fn porter_thomas_pdf(p: f64, dim: u64) -> Result<f64> {
    if p.is_nan() || p < 0.0 {
        return Err(Error::domain(format!("probability {p} is negative")));
    }
    if dim == 0 {
        return Err(Error::domain("dimension must be at least 1"));
    }
    let d = dim as f64;
    Ok(d * (-d * p).exp())
}

/// `alpha p_j + (1 - alpha) / D`.
pub fn depolarize(dist: &ProbabilityDistribution, noise: NoiseModel) -> ProbabilityDistribution {
    let alpha = noise.alpha();
    let floor = (1.0 - alpha) / dist.dim() as f64;
    ProbabilityDistribution {
        probs: dist.probs.iter().map(|p| alpha * p + floor).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_small_cases() {
        assert_eq!(uniform_distribution(1).unwrap().probs(), &[0.5, 0.5]);
        assert_eq!(uniform_distribution(0).unwrap().probs(), &[1.0]);
        let d = uniform_distribution(16).unwrap();
        assert_eq!(d.dim(), 65536);
        assert!(d.probs().iter().all(|&p| p == 2f64.powi(-16)));
        assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_guard() {
        assert!(matches!(uniform_distribution(31), Err(Error::Resource(_))));
        assert!(matches!(haar_random_state(25, 0), Err(Error::Resource(_))));
    }

    #[test]
    fn haar_zero_qubits_has_unit_amplitude() {
        let s = haar_random_state(0, 99).unwrap();
        assert_eq!(s.amplitudes().len(), 1);
        assert!((s.amplitudes()[0].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn haar_is_reproducible() {
        let a = haar_random_state(6, 1234).unwrap();
        let b = haar_random_state(6, 1234).unwrap();
        let c = haar_random_state(6, 1235).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!((a.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn born_rule_basics() {
        let zero = StateVector::zero_state(1).unwrap();
        assert_eq!(measurement_distribution(&zero).probs(), &[1.0, 0.0]);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let plus = StateVector::new(vec![Complex64::new(h, 0.0), Complex64::new(0.0, h)]).unwrap();
        let d = measurement_distribution(&plus);
        assert!((d.probs()[0] - 0.5).abs() < 1e-15 && (d.probs()[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn porter_thomas_values() {
        assert_eq!(porter_thomas_pdf(0.0, 16).unwrap(), 16.0);
        assert!(porter_thomas_pdf(-0.1, 16).is_err());
        assert!(porter_thomas_pdf(0.1, 0).is_err());
    }

    #[test]
    fn depolarize_cases() {
        let d = ProbabilityDistribution::new(vec![1.0, 0.0]).unwrap();
        let half = depolarize(&d, NoiseModel::new(0.5).unwrap());
        assert_eq!(half.probs(), &[0.75, 0.25]);
        assert_eq!(depolarize(&d, NoiseModel::new(1.0).unwrap()), d);
        let u = depolarize(&d, NoiseModel::new(0.0).unwrap());
        assert_eq!(u, uniform_distribution(1).unwrap());
    }

    #[test]
    fn noise_model_range() {
        assert!(NoiseModel::new(-0.01).is_err());
        assert!(NoiseModel::new(1.01).is_err());
        assert!(NoiseModel::new(f64::NAN).is_err());
        assert!(NoiseModel::new(0.0).is_ok());
    }

    #[test]
    fn distribution_validation() {
        assert!(ProbabilityDistribution::new(vec![0.5, 0.25, 0.25]).is_err());
        assert!(ProbabilityDistribution::new(vec![1.5, -0.5]).is_err());
        assert!(ProbabilityDistribution::new(vec![0.6, 0.6]).is_err());
        assert!(ProbabilityDistribution::new(vec![]).is_err());
    }

    #[test]
    fn binary_round_trip_and_truncation() {
        let d = ProbabilityDistribution::new(vec![0.5, 0.25, 0.125, 0.125]).unwrap();
        let bytes = d.to_bytes();
        assert_eq!(bytes.len(), 8 + 4 * 8);
        assert_eq!(&bytes[..8], &4u64.to_le_bytes());
        assert_eq!(ProbabilityDistribution::read_from(&bytes[..]).unwrap(), d);
        match ProbabilityDistribution::read_from(&bytes[..20]) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 16),
            other => panic!("expected format error, got {other:?}"),
        }
    }
}
