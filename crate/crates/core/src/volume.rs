//! The adaptive collision-volume (CV) and cross-collision-volume (XCV) tests.
//!
//! A CV test at `n` qubits samples `N = ceil(2^{n/2+5})` shots from one circuit,
//! grows `N` until at least `min_collisions` collisions are seen, and passes
//! when the anomaly exceeds `pass_threshold`. The XCV test does the same with
//! cross-collisions between two devices running the same circuit.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::collision::{
    collision_count, cross_anomaly, cross_collision_count, estimate_fidelity, estimate_fidelity_first_order,
    expected_collisions_quantum, expected_collisions_uniform, expected_cross_qq, expected_cross_uu,
    normalized_anomaly, shot_budget, AnomalyReport, UniformMode,
};
use crate::device::BitstringSource;
use crate::error::{Error, Result};
use crate::rng::mix_seed;
use crate::sampling::SampleSet;

/// Widest register the tests accept (`D = 2^n` must fit in a `u64`).
pub const MAX_TEST_QUBITS: u32 = 63;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TestConfig {
    pub min_collisions: u64,
    pub shot_growth_factor: f64,
    pub max_shots: u64,
    pub pass_threshold: f64,
    /// XCV shot ratio: `N_A = ceil(lambda N)`, `N_B = ceil(N / lambda)`.
    pub lambda: f64,
    pub seed: u64,
    /// Keep earlier rounds' samples and top up to the new `N` instead of resampling.
    pub accumulate: bool,
    /// Number of circuits per test; counts and expectations are pooled.
    pub circuits: u32,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            min_collisions: 500,
            shot_growth_factor: 2.0,
            max_shots: 1 << 26,
            pass_threshold: 0.5,
            lambda: 1.0,
            seed: 0,
            accumulate: false,
            circuits: 1,
        }
    }
}

impl TestConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_collisions == 0 {
            return Err(Error::domain("min_collisions must be at least 1"));
        }
        if !(self.shot_growth_factor > 1.0 && self.shot_growth_factor.is_finite()) {
            return Err(Error::domain(format!(
                "shot_growth_factor {} must exceed 1",
                self.shot_growth_factor
            )));
        }
        if !(self.pass_threshold > 0.0 && self.pass_threshold < 1.0) {
            return Err(Error::domain(format!(
                "pass_threshold {} must lie in (0, 1)",
                self.pass_threshold
            )));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::domain(format!("lambda {} must be positive", self.lambda)));
        }
        if self.max_shots == 0 {
            return Err(Error::domain("max_shots must be positive"));
        }
        if self.circuits == 0 {
            return Err(Error::domain("at least one circuit is required"));
        }
        Ok(())
    }

    /// Seed of circuit `index` at width `n_qubits`; shared by both XCV devices.
    pub fn circuit_seed(&self, n_qubits: u32, index: u32) -> u64 {
        mix_seed(mix_seed(self.seed, u64::from(n_qubits)), u64::from(index))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestOutcome {
    Passed,
    Failed,
    /// `max_shots` was reached with fewer than `min_collisions` collisions.
    Inconclusive,
}

/// One adaptive round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRow {
    pub round: u32,
    pub shots: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shots_b: Option<u64>,
    pub collisions: u64,
    pub anomaly: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub n_qubits: u32,
    pub passed: bool,
    pub outcome: TestOutcome,
    /// Shots per circuit in the last round (device A for XCV).
    pub final_shots: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_shots_b: Option<u64>,
    pub report: AnomalyReport,
    pub alpha_estimate: f64,
    pub iterations: u32,
    pub transcript: Vec<TranscriptRow>,
}

impl TestResult {
    /// Writes the transcript as CSV: `round,shots,shots_b,collisions,anomaly`.
    pub fn write_transcript_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["round", "shots", "shots_b", "collisions", "anomaly"])
            .map_err(csv_error)?;
        for row in &self.transcript {
            out.write_record([
                row.round.to_string(),
                row.shots.to_string(),
                row.shots_b.map(|s| s.to_string()).unwrap_or_default(),
                row.collisions.to_string(),
                row.anomaly.to_string(),
            ])
            .map_err(csv_error)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

fn check_width(n_qubits: u32) -> Result<u64> {
    if n_qubits == 0 || n_qubits > MAX_TEST_QUBITS {
        return Err(Error::domain(format!(
            "tests run on 1 to {MAX_TEST_QUBITS} qubits, got {n_qubits}"
        )));
    }
    Ok(1u64 << n_qubits)
}

fn check_device<S: BitstringSource + ?Sized>(device: &S, n_qubits: u32) -> Result<()> {
    if device.max_qubits() < n_qubits {
        return Err(Error::domain(format!(
            "device supports at most {} qubits, test needs {n_qubits}",
            device.max_qubits()
        )));
    }
    Ok(())
}

/// Draws `shots` for a circuit, topping up `previous` in accumulate mode.
fn sample_round<S: BitstringSource + ?Sized>(
    device: &mut S,
    circuit_seed: u64,
    n_qubits: u32,
    shots: u64,
    previous: Option<&SampleSet>,
) -> Result<SampleSet> {
    let have = previous.map_or(0, SampleSet::total);
    let fresh = device.sample(circuit_seed, n_qubits, shots - have)?;
    if fresh.n_bits() != n_qubits || fresh.total() != shots - have {
        return Err(Error::domain(format!(
            "device returned {} {}-bit samples, {} {n_qubits}-bit samples expected",
            fresh.total(),
            fresh.n_bits(),
            shots - have
        )));
    }
    match previous {
        Some(prev) => prev.merge(&fresh),
        None => Ok(fresh),
    }
}

fn next_shots(shots: u64, config: &TestConfig) -> u64 {
    grow_shots(shots, config.shot_growth_factor, config.max_shots)
}

fn grow_shots(shots: u64, factor: f64, cap: u64) -> u64 {
    let grown = (shots as f64 * factor).ceil();
    if grown >= cap as f64 {
        cap
    } else {
        (grown as u64).max(shots + 1)
    }
}

fn outcome_of(collisions: u64, anomaly: f64, config: &TestConfig) -> TestOutcome {
    if collisions < config.min_collisions {
        TestOutcome::Inconclusive
    } else if anomaly > config.pass_threshold {
        TestOutcome::Passed
    } else {
        TestOutcome::Failed
    }
}

/// Single-device collision-volume test at `n_qubits`.
pub fn run_cv_test<S: BitstringSource + ?Sized>(
    device: &mut S,
    n_qubits: u32,
    config: &TestConfig,
) -> Result<TestResult> {
    config.validate()?;
    let dim = check_width(n_qubits)?;
    check_device(device, n_qubits)?;
    let circuits = config.circuits;
    let seeds: Vec<u64> = (0..circuits).map(|c| config.circuit_seed(n_qubits, c)).collect();

    let mut shots = shot_budget(n_qubits, 1.0)?.min(config.max_shots);
    let mut kept: Vec<Option<SampleSet>> = vec![None; circuits as usize];
    let mut transcript = Vec::new();
    loop {
        let mut collisions = 0;
        for (slot, &seed) in kept.iter_mut().zip(&seeds) {
            let previous = if config.accumulate { slot.as_ref() } else { None };
            let set = sample_round(device, seed, n_qubits, shots, previous)?;
            collisions += collision_count(&set);
            *slot = config.accumulate.then_some(set);
        }
        let report = pooled_report(collisions, shots, dim, circuits)?;
        transcript.push(TranscriptRow {
            round: transcript.len() as u32 + 1,
            shots,
            shots_b: None,
            collisions,
            anomaly: report.anomaly,
        });
        if collisions >= config.min_collisions || shots >= config.max_shots {
            let outcome = outcome_of(collisions, report.anomaly, config);
            let alpha_estimate = estimate_fidelity(report.anomaly, shots, dim)?.alpha;
            let report = AnomalyReport {
                alpha_estimate: Some(alpha_estimate),
                ..report
            };
            return Ok(TestResult {
                n_qubits,
                passed: outcome == TestOutcome::Passed,
                outcome,
                final_shots: shots,
                final_shots_b: None,
                report,
                alpha_estimate,
                iterations: transcript.len() as u32,
                transcript,
            });
        }
        shots = next_shots(shots, config);
    }
}

/// Anomaly of `circuits` pooled runs of `shots` each; equals the mean per-circuit anomaly.
fn pooled_report(collisions: u64, shots: u64, dim: u64, circuits: u32) -> Result<AnomalyReport> {
    if circuits == 1 {
        return crate::collision::collision_anomaly(collisions, shots, dim);
    }
    let c = f64::from(circuits);
    let expected_uniform = c * expected_collisions_uniform(dim, shots, UniformMode::Asymptotic);
    let expected_quantum = c * expected_collisions_quantum(dim, shots);
    Ok(AnomalyReport {
        collisions,
        shots: shots * u64::from(circuits),
        shots_a: None,
        shots_b: None,
        dim,
        anomaly: normalized_anomaly(collisions as f64, expected_uniform, expected_quantum)?,
        expected_uniform,
        expected_quantum,
        alpha_estimate: None,
    })
}

fn pooled_cross_report(r_x: u64, shots_a: u64, shots_b: u64, dim: u64, circuits: u32) -> Result<AnomalyReport> {
    if circuits == 1 {
        return cross_anomaly(r_x, shots_a, shots_b, dim);
    }
    let c = u64::from(circuits);
    let expected_uniform = c as f64 * expected_cross_uu(dim, shots_a, shots_b);
    let expected_quantum = c as f64 * expected_cross_qq(dim, shots_a, shots_b);
    Ok(AnomalyReport {
        collisions: r_x,
        shots: (shots_a + shots_b) * c,
        shots_a: Some(shots_a * c),
        shots_b: Some(shots_b * c),
        dim,
        anomaly: normalized_anomaly(r_x as f64, expected_uniform, expected_quantum)?,
        expected_uniform,
        expected_quantum,
        alpha_estimate: None,
    })
}

fn split_shots(shots: u64, lambda: f64) -> (u64, u64) {
    let a = (shots as f64 * lambda).ceil().max(1.0) as u64;
    let b = (shots as f64 / lambda).ceil().max(1.0) as u64;
    (a, b)
}

/// Round size `N` at which `E_qq - E_uu` peaks for the given shot ratio.
///
/// Past this point the gap shrinks, and once `N / D` is above about 0.6 (at
/// `lambda = 1`) the uniform pair is expected to share more outcomes than the
/// same-state pair, so the cross anomaly is undefined.
pub fn xcv_shot_cap(dim: u64, lambda: f64) -> u64 {
    let gap = |n: u64| {
        let (a, b) = split_shots(n, lambda);
        expected_cross_qq(dim, a, b) - expected_cross_uu(dim, a, b)
    };
    let (mut lo, mut hi) = (1u64, dim.saturating_mul(4).max(4));
    while hi - lo > 2 {
        let m1 = lo + (hi - lo) / 3;
        let m2 = hi - (hi - lo) / 3;
        if gap(m1) < gap(m2) {
            lo = m1 + 1;
        } else {
            hi = m2;
        }
    }
    (lo..=hi).max_by(|&x, &y| gap(x).total_cmp(&gap(y))).unwrap_or(lo)
}

/// Two-device cross-collision-volume test. Both devices run the same circuits.
///
/// The round size `N` follows the CV schedule and is capped by `max_shots`
/// and by [`xcv_shot_cap`]; each side then draws `ceil(lambda N)` and
/// `ceil(N / lambda)` shots. Hitting either cap short of `min_collisions`
/// is inconclusive.
pub fn run_xcv_test<A, B>(device_a: &mut A, device_b: &mut B, n_qubits: u32, config: &TestConfig) -> Result<TestResult>
where
    A: BitstringSource + ?Sized,
    B: BitstringSource + ?Sized,
{
    config.validate()?;
    let dim = check_width(n_qubits)?;
    check_device(device_a, n_qubits)?;
    check_device(device_b, n_qubits)?;
    let circuits = config.circuits;
    let seeds: Vec<u64> = (0..circuits).map(|c| config.circuit_seed(n_qubits, c)).collect();

    let cap = config.max_shots.min(xcv_shot_cap(dim, config.lambda));
    let mut shots = shot_budget(n_qubits, 1.0)?.min(cap);
    let mut kept: Vec<Option<(SampleSet, SampleSet)>> = vec![None; circuits as usize];
    let mut transcript = Vec::new();
    loop {
        let (shots_a, shots_b) = split_shots(shots, config.lambda);
        let mut r_x = 0;
        for (slot, &seed) in kept.iter_mut().zip(&seeds) {
            let previous = if config.accumulate { slot.as_ref() } else { None };
            let a = sample_round(device_a, seed, n_qubits, shots_a, previous.map(|p| &p.0))?;
            let b = sample_round(device_b, seed, n_qubits, shots_b, previous.map(|p| &p.1))?;
            r_x += cross_collision_count(&a, &b)?;
            *slot = config.accumulate.then_some((a, b));
        }
        let report = pooled_cross_report(r_x, shots_a, shots_b, dim, circuits)?;
        transcript.push(TranscriptRow {
            round: transcript.len() as u32 + 1,
            shots: shots_a,
            shots_b: Some(shots_b),
            collisions: r_x,
            anomaly: report.anomaly,
        });
        if r_x >= config.min_collisions || shots >= cap {
            let outcome = outcome_of(r_x, report.anomaly, config);
            let alpha_estimate = estimate_fidelity_first_order(report.anomaly);
            let report = AnomalyReport {
                alpha_estimate: Some(alpha_estimate),
                ..report
            };
            return Ok(TestResult {
                n_qubits,
                passed: outcome == TestOutcome::Passed,
                outcome,
                final_shots: shots_a,
                final_shots_b: Some(shots_b),
                report,
                alpha_estimate,
                iterations: transcript.len() as u32,
                transcript,
            });
        }
        shots = grow_shots(shots, config.shot_growth_factor, cap);
    }
}

/// Result of an upward collision-volume scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeResult {
    /// Largest passing `n` before the first failure, or `n_min - 1`.
    pub log_volume: i64,
    /// Set when the scan stopped on an inconclusive test.
    pub halted_inconclusive: bool,
    pub results: Vec<TestResult>,
}

impl VolumeResult {
    /// Collision volume `2^n`, or `None` when nothing passed below 64 qubits.
    pub fn volume(&self) -> Option<u64> {
        u32::try_from(self.log_volume).ok().and_then(|n| 1u64.checked_shl(n))
    }
}

/// Runs CV tests for `n_min, n_min + 1, ...` and stops at the first test that does not pass.
pub fn measure_collision_volume<S: BitstringSource + ?Sized>(
    device: &mut S,
    n_min: u32,
    n_max: u32,
    config: &TestConfig,
) -> Result<VolumeResult> {
    if n_min > n_max {
        return Err(Error::domain(format!("empty qubit range {n_min}..={n_max}")));
    }
    let mut log_volume = i64::from(n_min) - 1;
    let mut results = Vec::new();
    let mut halted_inconclusive = false;
    for n in n_min..=n_max {
        let result = run_cv_test(device, n, config)?;
        let outcome = result.outcome;
        results.push(result);
        match outcome {
            TestOutcome::Passed => log_volume = i64::from(n),
            TestOutcome::Failed => break,
            TestOutcome::Inconclusive => {
                halted_inconclusive = true;
                break;
            }
        }
    }
    Ok(VolumeResult {
        log_volume,
        halted_inconclusive,
        results,
    })
}
