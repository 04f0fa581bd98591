//! Collision counts and their closed-form expectations.
//!
//! A collision is a draw that repeats an earlier one, so `k` copies of a
//! bitstring contribute `k - 1` and `R = N - W` with `W` the distinct count.
//! Cross-collisions between two sets are `R_X = R_AB - R_A - R_B`, which equals
//! the number of bitstrings seen by both sides.
//!
//! Closed forms are evaluated in cancellation-free form. With `x = N / D`,
//! every expectation is `D` times a combination of `e^y - 1 - y` and
//! `t - ln(1 + t)`, both computed by short series near zero; this keeps full
//! relative precision when `N << D` (for example `D = 1e8`, `N = 100`).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::{NoiseModel, ProbabilityDistribution};
use crate::error::{Error, Result};
use crate::sampling::SampleSet;

/// Anomaly denominators smaller than this are rejected.
pub const DEGENERATE_DENOMINATOR: f64 = 1e-12;

/// Outcome of normalizing an observed collision count.
///
/// For single-device reports `shots_a`/`shots_b` are absent. For cross reports
/// `shots = shots_a + shots_b`, `expected_uniform` is the uniform/uniform
/// expectation and `expected_quantum` the same-state expectation. Reports
/// pooled over several circuits carry summed counts and expectations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyReport {
    pub collisions: u64,
    pub shots: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots_a: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots_b: Option<u64>,
    pub dim: u64,
    pub anomaly: f64,
    pub expected_uniform: f64,
    pub expected_quantum: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_estimate: Option<f64>,
}

/// Wall-clock time for a sampling campaign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub shots: u64,
    pub rep_rate: f64,
    pub parallel_factor: u64,
    pub seconds: f64,
}

/// How the uniform baseline `E_u(R)` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UniformMode {
    /// `N - D + D (1 - 1/D)^N`.
    Exact,
    /// `N - D (1 - e^{-N/D})`, the large-`D` form used by the anomaly.
    #[default]
    Asymptotic,
}

/// `e^y - 1 - y`.
fn exp_m1_minus(y: f64) -> f64 {
    if y.abs() < 1e-3 {
        y * y * (0.5 + y * (1.0 / 6.0 + y * (1.0 / 24.0 + y * (1.0 / 120.0 + y / 720.0))))
    } else {
        y.exp_m1() - y
    }
}

/// `t - ln(1 + t)`.
fn sub_ln_1p(t: f64) -> f64 {
    if t.abs() < 1e-3 {
        t * t * (0.5 - t * (1.0 / 3.0 - t * (0.25 - t * (0.2 - t / 6.0))))
    } else {
        t - t.ln_1p()
    }
}

/// `prod_k (1 - p_k)^{n_k} - 1 + sum_k n_k p_k`, the per-outcome term of
/// `E(R) = sum_j [...]` once `sum_j p_j = 1` is used to absorb `N - D`.
fn complement_term(parts: &[(f64, f64)]) -> f64 {
    let linear: f64 = parts.iter().map(|&(p, n)| n * p).sum();
    let active = || parts.iter().filter(|&&(p, n)| n > 0.0 && p > 0.0);
    if active().any(|&(p, _)| p >= 1.0) {
        return linear - 1.0;
    }
    let z: f64 = active().map(|&(p, n)| n * (-p).ln_1p()).sum();
    if z.abs() < 1e-3 {
        exp_m1_minus(z) - active().map(|&(p, n)| n * sub_ln_1p(-p)).sum::<f64>()
    } else {
        z.exp_m1() + linear
    }
}

const SUM_CHUNK: usize = 1 << 14;

/// Deterministic (fixed-order) parallel sum of `f(j)` over `0..len`.
fn chunked_sum<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let partials: Vec<f64> = (0..len.div_ceil(SUM_CHUNK))
        .into_par_iter()
        .map(|c| (c * SUM_CHUNK..len.min((c + 1) * SUM_CHUNK)).map(&f).sum())
        .collect();
    partials.into_iter().sum()
}

/// `R = N - W`.
pub fn collision_count(samples: &SampleSet) -> u64 {
    samples.total() - samples.distinct()
}

/// `R_X = W_A + W_B - W_AB`, the number of bitstrings sampled by both sides.
pub fn cross_collision_count(samples_a: &SampleSet, samples_b: &SampleSet) -> Result<u64> {
    if samples_a.n_bits() != samples_b.n_bits() {
        return Err(Error::domain(format!(
            "cross-collisions need equal widths, got {} and {} bits",
            samples_a.n_bits(),
            samples_b.n_bits()
        )));
    }
    Ok(samples_a.shared_support(samples_b))
}

/// `E(R) = N - D + sum_j (1 - p_j)^N`, exact for any distribution.
pub fn expected_collisions(dist: &ProbabilityDistribution, shots: u64) -> f64 {
    let n = shots as f64;
    let probs = dist.probs();
    chunked_sum(probs.len(), |j| complement_term(&[(probs[j], n)]))
}

/// Expected collisions for the uniform distribution over `dim` outcomes.
pub fn expected_collisions_uniform(dim: u64, shots: u64, mode: UniformMode) -> f64 {
    if shots == 0 || dim == 0 {
        return 0.0;
    }
    let (d, n) = (dim as f64, shots as f64);
    match mode {
        UniformMode::Asymptotic => d * exp_m1_minus(-n / d),
        UniformMode::Exact => {
            if dim == 1 {
                return n - 1.0;
            }
            // D [x + (1 - 1/D)^N - 1] with z = N ln(1 - 1/D)
            let z = n * (-1.0 / d).ln_1p();
            d * (exp_m1_minus(z) - n * sub_ln_1p(-1.0 / d))
        }
    }
}

/// `E_q(R) = N^2 / (N + D)` for a Porter-Thomas distributed state.
pub fn expected_collisions_quantum(dim: u64, shots: u64) -> f64 {
    let (d, n) = (dim as f64, shots as f64);
    if shots == 0 {
        return 0.0;
    }
    n * n / (n + d)
}

/// `(observed - baseline) / (target - baseline)`.
///
/// The target must exceed the baseline by at least [`DEGENERATE_DENOMINATOR`].
/// For cross-collisions this fails once `N / D` is above about 0.6, where the
/// uniform/uniform expectation overtakes the same-state one.
pub fn normalized_anomaly(observed: f64, baseline: f64, target: f64) -> Result<f64> {
    let denominator = target - baseline;
    if !(denominator >= DEGENERATE_DENOMINATOR) {
        return Err(Error::domain(format!(
            "anomaly denominator {denominator:e} is degenerate (target {target} does not exceed baseline {baseline})"
        )));
    }
    Ok((observed - baseline) / denominator)
}

/// Collision anomaly `Delta` with the large-`D` uniform baseline.
pub fn collision_anomaly(collisions: u64, shots: u64, dim: u64) -> Result<AnomalyReport> {
    collision_anomaly_with(collisions, shots, dim, UniformMode::Asymptotic)
}

/// Collision anomaly with a selectable uniform baseline.
pub fn collision_anomaly_with(
    collisions: u64,
    shots: u64,
    dim: u64,
    mode: UniformMode,
) -> Result<AnomalyReport> {
    if shots == 0 {
        return Err(Error::domain("collision anomaly needs at least one shot"));
    }
    let expected_uniform = expected_collisions_uniform(dim, shots, mode);
    let expected_quantum = expected_collisions_quantum(dim, shots);
    let anomaly = normalized_anomaly(collisions as f64, expected_uniform, expected_quantum)?;
    Ok(AnomalyReport {
        collisions,
        shots,
        shots_a: None,
        shots_b: None,
        dim,
        anomaly,
        expected_uniform,
        expected_quantum,
        alpha_estimate: None,
    })
}

/// `E_uu(R_X) = D (1 - e^{-N_A/D}) (1 - e^{-N_B/D})`.
pub fn expected_cross_uu(dim: u64, shots_a: u64, shots_b: u64) -> f64 {
    let d = dim as f64;
    d * (-(shots_a as f64) / d).exp_m1() * (-(shots_b as f64) / d).exp_m1()
}

/// `E_qq(R_X)` when both sides sample the same Porter-Thomas state.
pub fn expected_cross_qq(dim: u64, shots_a: u64, shots_b: u64) -> f64 {
    if shots_a == 0 || shots_b == 0 {
        return 0.0;
    }
    let total = shots_a + shots_b;
    expected_collisions_quantum(dim, total)
        - expected_collisions_quantum(dim, shots_a)
        - expected_collisions_quantum(dim, shots_b)
}

/// `E_qu(R_X)`: side A samples a Porter-Thomas state, side B the uniform distribution.
pub fn expected_cross_qu(dim: u64, shots_a: u64, shots_b: u64) -> f64 {
    let (d, na, nb) = (dim as f64, shots_a as f64, shots_b as f64);
    if shots_a == 0 || shots_b == 0 {
        return 0.0;
    }
    na * d / (na + d) * -(-nb / d).exp_m1()
}

/// Expected collisions in the union of `N_A` draws from `dist_a` and `N_B` from `dist_b`.
pub fn expected_merged_collisions(
    dist_a: &ProbabilityDistribution,
    dist_b: &ProbabilityDistribution,
    shots_a: u64,
    shots_b: u64,
) -> Result<f64> {
    if dist_a.dim() != dist_b.dim() {
        return Err(Error::domain(format!(
            "distributions have different dimensions {} and {}",
            dist_a.dim(),
            dist_b.dim()
        )));
    }
    let (na, nb) = (shots_a as f64, shots_b as f64);
    let (pa, pb) = (dist_a.probs(), dist_b.probs());
    if pa == pb {
        return Ok(expected_collisions(dist_a, shots_a + shots_b));
    }
    Ok(chunked_sum(pa.len(), |j| complement_term(&[(pa[j], na), (pb[j], nb)])))
}

/// Cross-collision anomaly `Delta_X = (R_X - E_uu) / (E_qq - E_uu)`.
pub fn cross_anomaly(r_x: u64, shots_a: u64, shots_b: u64, dim: u64) -> Result<AnomalyReport> {
    if shots_a == 0 || shots_b == 0 {
        return Err(Error::domain("cross anomaly needs at least one shot on each side"));
    }
    let expected_uniform = expected_cross_uu(dim, shots_a, shots_b);
    let expected_quantum = expected_cross_qq(dim, shots_a, shots_b);
    let anomaly = normalized_anomaly(r_x as f64, expected_uniform, expected_quantum)?;
    Ok(AnomalyReport {
        collisions: r_x,
        shots: shots_a + shots_b,
        shots_a: Some(shots_a),
        shots_b: Some(shots_b),
        dim,
        anomaly,
        expected_uniform,
        expected_quantum,
        alpha_estimate: None,
    })
}

/// `E_{q_alpha}(R) = N - D + D^2 e^{-(1-alpha) N/D} / (alpha N + D)`.
pub fn expected_collisions_noisy(dim: u64, shots: u64, noise: NoiseModel) -> f64 {
    if shots == 0 {
        return 0.0;
    }
    let (d, n, alpha) = (dim as f64, shots as f64, noise.alpha());
    let x = n / d;
    // D [psi(alpha x) + chi(y)], y = -(1 - alpha) x - ln(1 + alpha x)
    let y = -(1.0 - alpha) * x - (alpha * x).ln_1p();
    d * (sub_ln_1p(alpha * x) + exp_m1_minus(y))
}

/// Expected anomaly of a depolarized state; rises from 0 at `alpha = 0` to 1 at `alpha = 1`.
pub fn expected_anomaly_noisy(dim: u64, shots: u64, noise: NoiseModel) -> Result<f64> {
    if shots == 0 {
        return Err(Error::domain("expected anomaly needs at least one shot"));
    }
    let baseline = expected_collisions_uniform(dim, shots, UniformMode::Asymptotic);
    let target = expected_collisions_quantum(dim, shots);
    normalized_anomaly(expected_collisions_noisy(dim, shots, noise), baseline, target)
}

/// Which side of `[0, 1]` a measured anomaly fell outside of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clamp {
    Below,
    Above,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityEstimate {
    pub alpha: f64,
    /// Set when the measured anomaly was outside `[0, 1]` and `alpha` was pinned to an end.
    pub clamped: Option<Clamp>,
}

const BISECTION_MAX_ITERATIONS: usize = 60;
const BISECTION_TOLERANCE: f64 = 1e-12;

/// Inverts [`expected_anomaly_noisy`] for `alpha` by bisection.
pub fn estimate_fidelity(measured_anomaly: f64, shots: u64, dim: u64) -> Result<FidelityEstimate> {
    if !measured_anomaly.is_finite() {
        return Err(Error::domain(format!("measured anomaly {measured_anomaly} is not finite")));
    }
    // surfaces a degenerate (shots, dim) pair as an error
    expected_anomaly_noisy(dim, shots, NoiseModel::noiseless())?;
    if measured_anomaly <= 0.0 {
        return Ok(FidelityEstimate {
            alpha: 0.0,
            clamped: (measured_anomaly < 0.0).then_some(Clamp::Below),
        });
    }
    if measured_anomaly >= 1.0 {
        return Ok(FidelityEstimate {
            alpha: 1.0,
            clamped: (measured_anomaly > 1.0).then_some(Clamp::Above),
        });
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..BISECTION_MAX_ITERATIONS {
        if hi - lo < BISECTION_TOLERANCE {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let value = expected_anomaly_noisy(dim, shots, NoiseModel::new(mid)?)?;
        if value < measured_anomaly {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(FidelityEstimate {
        alpha: 0.5 * (lo + hi),
        clamped: None,
    })
}

/// First-order estimate `alpha = sqrt(Delta)`, clamped to `[0, 1]`.
pub fn estimate_fidelity_first_order(measured_anomaly: f64) -> f64 {
    measured_anomaly.clamp(0.0, 1.0).sqrt()
}

/// Shots needed for a clear collision signal: `ceil(2^{n/2 + 5} / alpha)`.
pub fn shot_budget(n_qubits: u32, alpha: f64) -> Result<u64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::domain(format!("alpha = {alpha} must lie in (0, 1]")));
    }
    let shots = (f64::from(n_qubits) / 2.0 + 5.0).exp2() / alpha;
    if !shots.is_finite() || shots >= u64::MAX as f64 {
        return Err(Error::domain(format!(
            "shot budget for n = {n_qubits}, alpha = {alpha} overflows"
        )));
    }
    Ok(shots.ceil() as u64)
}

/// `seconds = shots / (rep_rate * parallel_factor)`.
pub fn execution_time(shots: u64, rep_rate: f64, parallel_factor: u64) -> Result<CostEstimate> {
    if !(rep_rate > 0.0 && rep_rate.is_finite()) {
        return Err(Error::domain(format!("repetition rate {rep_rate} must be positive")));
    }
    if parallel_factor == 0 {
        return Err(Error::domain("parallel factor must be at least 1"));
    }
    Ok(CostEstimate {
        shots,
        rep_rate,
        parallel_factor,
        seconds: shots as f64 / (rep_rate * parallel_factor as f64),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::uniform_distribution;

    fn set(n_bits: u32, counts: &[(u64, u64)]) -> SampleSet {
        SampleSet::from_counts(n_bits, counts.iter().copied()).unwrap()
    }

    #[test]
    fn counting_conventions() {
        assert_eq!(collision_count(&set(4, &[(1, 1), (2, 1), (3, 1)])), 0);
        assert_eq!(collision_count(&set(4, &[(9, 7)])), 6);
        assert_eq!(collision_count(&set(4, &[(1, 2), (2, 3)])), 3);
        assert_eq!(collision_count(&SampleSet::empty(4).unwrap()), 0);
    }

    #[test]
    fn cross_counting() {
        let (a, b, c) = (1, 2, 3);
        assert_eq!(cross_collision_count(&set(4, &[(a, 1)]), &set(4, &[(b, 1)])).unwrap(), 0);
        assert_eq!(cross_collision_count(&set(4, &[(a, 1)]), &set(4, &[(a, 1)])).unwrap(), 1);
        let x = set(4, &[(a, 2), (b, 1)]);
        let y = set(4, &[(b, 1), (c, 2)]);
        assert_eq!(cross_collision_count(&x, &y).unwrap(), 1);
        assert!(cross_collision_count(&x, &set(5, &[])).is_err());
    }

    #[test]
    fn small_exact_values() {
        let u = uniform_distribution(2).unwrap();
        assert!(expected_collisions(&u, 1).abs() < 1e-15);
        assert!((expected_collisions(&u, 3) - 0.6875).abs() < 1e-12);
        let point = ProbabilityDistribution::new(vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(expected_collisions(&point, 10), 9.0);
        assert_eq!(expected_collisions(&point, 0), 0.0);
        assert!((expected_collisions_uniform(4, 3, UniformMode::Exact) - 0.6875).abs() < 1e-12);
    }

    #[test]
    fn closed_form_reference_values() {
        let d = 65536;
        assert!((expected_collisions_uniform(d, 8192, UniformMode::Asymptotic) - 491.317_007_784).abs() < 1e-6);
        assert!((expected_collisions_quantum(d, 8192) - 910.222_222_222).abs() < 1e-6);
        assert_eq!(expected_collisions_uniform(d, 0, UniformMode::Exact), 0.0);
        assert_eq!(expected_collisions_uniform(d, 0, UniformMode::Asymptotic), 0.0);
        assert_eq!(expected_collisions_quantum(d, 0), 0.0);
        assert!((expected_cross_uu(d, 8192, 8192) - 904.854_103_800).abs() < 1e-6);
        assert!((expected_cross_qq(d, 8192, 8192) - 1456.355_555_556).abs() < 1e-6);
        assert!((expected_cross_qu(d, 8192, 8192) - 855.631_443_580).abs() < 1e-6);
    }

    #[test]
    fn anomaly_endpoints() {
        let (d, n) = (65536, 8192);
        let eu = expected_collisions_uniform(d, n, UniformMode::Asymptotic);
        let eq = expected_collisions_quantum(d, n);
        assert_eq!(normalized_anomaly(eu, eu, eq).unwrap(), 0.0);
        assert_eq!(normalized_anomaly(eq, eu, eq).unwrap(), 1.0);
        let r = collision_anomaly(700, n, d).unwrap();
        assert!((r.anomaly - 0.498_162_794).abs() < 1e-6);
        assert!(collision_anomaly(0, 0, d).is_err());
        // one shot: both expectations vanish, denominator degenerate
        assert!(collision_anomaly(0, 1, 1 << 40).is_err());
    }

    #[test]
    fn cross_anomaly_reference() {
        let r = cross_anomaly(1200, 8192, 8192, 65536).unwrap();
        assert!((r.anomaly - 0.535_167_941).abs() < 1e-6);
        assert_eq!(r.shots, 16384);
        assert!(cross_anomaly(1, 0, 5, 16).is_err());
    }

    #[test]
    fn noisy_reductions() {
        let (d, n) = (65536, 8192);
        let one = expected_collisions_noisy(d, n, NoiseModel::new(1.0).unwrap());
        let zero = expected_collisions_noisy(d, n, NoiseModel::new(0.0).unwrap());
        assert!((one - expected_collisions_quantum(d, n)).abs() < 1e-9);
        assert!((zero - expected_collisions_uniform(d, n, UniformMode::Asymptotic)).abs() < 1e-9);
        assert!(expected_anomaly_noisy(d, n, NoiseModel::new(0.0).unwrap()).unwrap().abs() < 1e-12);
        assert!((expected_anomaly_noisy(d, n, NoiseModel::new(1.0).unwrap()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fidelity_clamping() {
        let f = estimate_fidelity(-0.2, 8192, 65536).unwrap();
        assert_eq!((f.alpha, f.clamped), (0.0, Some(Clamp::Below)));
        let f = estimate_fidelity(1.3, 8192, 65536).unwrap();
        assert_eq!((f.alpha, f.clamped), (1.0, Some(Clamp::Above)));
        assert_eq!(estimate_fidelity(1.0, 8192, 65536).unwrap().alpha, 1.0);
        assert_eq!(estimate_fidelity(0.0, 8192, 65536).unwrap().alpha, 0.0);
        assert!(estimate_fidelity(f64::NAN, 8192, 65536).is_err());
        assert!((estimate_fidelity_first_order(0.25) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn shot_budget_values() {
        assert_eq!(shot_budget(16, 1.0).unwrap(), 8192);
        assert_eq!(shot_budget(20, 1.0).unwrap(), 32768);
        assert_eq!(shot_budget(20, 0.5).unwrap(), 65536);
        assert!(shot_budget(53, 0.002).unwrap() > 1_000_000_000_000);
        assert!(shot_budget(16, 0.0).is_err());
        assert!(shot_budget(16, -1.0).is_err());
        assert!(shot_budget(16, 1.5).is_err());
    }

    #[test]
    fn execution_time_values() {
        assert_eq!(execution_time(1_000_000, 1e6, 1).unwrap().seconds, 1.0);
        let t = execution_time(1_000_000_000_000, 1e6, 1).unwrap();
        assert!((t.seconds / 86400.0 - 11.574).abs() < 1e-3);
        let t10 = execution_time(1_000_000_000_000, 1e6, 10).unwrap();
        assert_eq!(t10.seconds, t.seconds / 10.0);
        assert!(execution_time(1, 0.0, 1).is_err());
        assert!(execution_time(1, 1.0, 0).is_err());
    }

    #[test]
    fn report_json_field_names() {
        let r = collision_anomaly(700, 8192, 65536).unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(
            keys,
            ["anomaly", "collisions", "dim", "expected_quantum", "expected_uniform", "shots"]
        );
        let c = serde_json::to_value(execution_time(10, 1.0, 1).unwrap()).unwrap();
        assert!(c.get("seconds").is_some() && c.get("shots").is_some());
    }
}
