//! Bitstring sources.
//!
//! Every device answers `sample(circuit_seed, n_qubits, shots)`. The circuit
//! seed fixes the underlying distribution; two devices given the same seed
//! (Alice and Bob) sample the same ideal state. Device-internal randomness
//! comes from the device's own seed and a per-call counter, so a run is
//! reproducible from `(spec, device seed)`.

mod archive;
pub mod protocol;
mod remote;
mod server;

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::{Arc, RwLock};

use rand::seq::SliceRandom;

use crate::circuit::{generate_qv_circuit, simulate};
use crate::distribution::{haar_random_state, measurement_distribution, NoiseModel, MAX_STATE_QUBITS};
use crate::error::{Error, Result};
use crate::rng::{mix_seed, stream_rng};
use crate::sampling::{build_sampler, draw, draw_noisy, SampleSet, Sampler};

pub use archive::{archive_samples, load_samples, ARCHIVE_MAGIC};
pub use remote::RemoteDevice;
pub use server::{serve, Server, ServerHandle};

/// A device that returns measured bitstrings for a seeded random circuit.
pub trait BitstringSource: Send {
    /// Widest register the device accepts.
    fn max_qubits(&self) -> u32;

    fn sample(&mut self, circuit_seed: u64, n_qubits: u32, shots: u64) -> Result<SampleSet>;
}

impl<T: BitstringSource + ?Sized> BitstringSource for Box<T> {
    fn max_qubits(&self) -> u32 {
        (**self).max_qubits()
    }

    fn sample(&mut self, circuit_seed: u64, n_qubits: u32, shots: u64) -> Result<SampleSet> {
        (**self).sample(circuit_seed, n_qubits, shots)
    }
}

/// Device description, written as a compact string:
///
/// | string | device |
/// |---|---|
/// | `haar`, `haar:<k>` | ideal sampler of a Haar-random state keyed by the circuit seed; `k` selects an independent family of states |
/// | `qv`, `qv:<depth>` | ideal sampler of the simulated QV circuit (depth defaults to `n`) |
/// | `noisy:<alpha>@<haar…\|qv…>` | depolarized version of an ideal device |
/// | `uniform` | uniform random bitstrings |
/// | `constant:<bits>` | always returns the same bitstring (hex with `0x`, else decimal) |
/// | `archive:<path>` | replays a sample archive |
/// | `remote:<host:port>` | a sample server reached over TCP |
#[derive(Debug, Clone, PartialEq)]
pub enum DeviceSpec {
    IdealHaar { family: u64 },
    IdealQv { depth: Option<usize> },
    Noisy { alpha: f64, base: Box<DeviceSpec> },
    Uniform,
    ConstantOutput { bitstring: u64 },
    Archive { path: PathBuf },
    Remote { address: String },
}

impl DeviceSpec {
    pub fn noisy(alpha: f64, base: DeviceSpec) -> Result<Self> {
        let spec = DeviceSpec::Noisy {
            alpha,
            base: Box::new(base),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DeviceSpec::Noisy { alpha, base } => {
                NoiseModel::new(*alpha)?;
                match **base {
                    DeviceSpec::IdealHaar { .. } | DeviceSpec::IdealQv { .. } => Ok(()),
                    _ => Err(Error::domain("noise applies only to haar or qv devices")),
                }
            }
            DeviceSpec::IdealQv { depth: Some(0) } => Err(Error::domain("QV depth must be positive")),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for DeviceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeviceSpec::IdealHaar { family: 0 } => write!(f, "haar"),
            DeviceSpec::IdealHaar { family } => write!(f, "haar:{family}"),
            DeviceSpec::IdealQv { depth: None } => write!(f, "qv"),
            DeviceSpec::IdealQv { depth: Some(d) } => write!(f, "qv:{d}"),
            DeviceSpec::Noisy { alpha, base } => write!(f, "noisy:{alpha}@{base}"),
            DeviceSpec::Uniform => write!(f, "uniform"),
            DeviceSpec::ConstantOutput { bitstring } => write!(f, "constant:{bitstring:#x}"),
            DeviceSpec::Archive { path } => write!(f, "archive:{}", path.display()),
            DeviceSpec::Remote { address } => write!(f, "remote:{address}"),
        }
    }
}

fn parse_u64(s: &str) -> Option<u64> {
    match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16).ok(),
        None => s.parse().ok(),
    }
}

impl FromStr for DeviceSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::domain(format!("unrecognized device spec {s:?}"));
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let spec = match (kind, arg) {
            ("haar", None) => DeviceSpec::IdealHaar { family: 0 },
            ("haar", Some(k)) => DeviceSpec::IdealHaar {
                family: parse_u64(k).ok_or_else(bad)?,
            },
            ("qv", None) => DeviceSpec::IdealQv { depth: None },
            ("qv", Some(d)) => DeviceSpec::IdealQv {
                depth: Some(d.parse().map_err(|_| bad())?),
            },
            ("noisy", Some(rest)) => {
                let (alpha, base) = rest.split_once('@').ok_or_else(bad)?;
                DeviceSpec::Noisy {
                    alpha: alpha.parse().map_err(|_| bad())?,
                    base: Box::new(base.parse()?),
                }
            }
            ("uniform", None) => DeviceSpec::Uniform,
            ("constant", Some(b)) => DeviceSpec::ConstantOutput {
                bitstring: parse_u64(b).ok_or_else(bad)?,
            },
            ("archive", Some(p)) if !p.is_empty() => DeviceSpec::Archive { path: p.into() },
            ("remote", Some(a)) if !a.is_empty() => DeviceSpec::Remote { address: a.to_string() },
            _ => return Err(bad()),
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug)]
enum ModelKind {
    Haar { family: u64 },
    Qv { depth: Option<usize> },
    Uniform,
    Constant(u64),
    Archive(SampleSet),
}

/// Thread-safe sampling core shared by local devices and server sessions.
///
/// Ideal samplers are built once per `(circuit_seed, n_qubits)` and cached.
#[derive(Debug)]
pub struct DeviceModel {
    kind: ModelKind,
    noise: NoiseModel,
    cache: RwLock<HashMap<(u64, u32), Arc<Sampler>>>,
}

impl DeviceModel {
    /// Builds the model for any non-remote spec.
    pub fn new(spec: &DeviceSpec) -> Result<Self> {
        spec.validate()?;
        let (kind, noise) = match spec {
            DeviceSpec::IdealHaar { family } => (ModelKind::Haar { family: *family }, NoiseModel::noiseless()),
            DeviceSpec::IdealQv { depth } => (ModelKind::Qv { depth: *depth }, NoiseModel::noiseless()),
            DeviceSpec::Noisy { alpha, base } => {
                let inner = Self::new(base)?;
                (inner.kind, NoiseModel::new(*alpha)?)
            }
            DeviceSpec::Uniform => (ModelKind::Uniform, NoiseModel::noiseless()),
            DeviceSpec::ConstantOutput { bitstring } => (ModelKind::Constant(*bitstring), NoiseModel::noiseless()),
            DeviceSpec::Archive { path } => (ModelKind::Archive(load_samples(path)?), NoiseModel::noiseless()),
            DeviceSpec::Remote { .. } => {
                return Err(Error::domain("a remote device has no local model"));
            }
        };
        Ok(Self {
            kind,
            noise,
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn max_qubits(&self) -> u32 {
        match &self.kind {
            ModelKind::Haar { .. } | ModelKind::Qv { .. } => MAX_STATE_QUBITS,
            ModelKind::Uniform | ModelKind::Constant(_) => 64,
            ModelKind::Archive(set) => set.n_bits(),
        }
    }

    fn ideal_sampler(&self, circuit_seed: u64, n_qubits: u32) -> Result<Arc<Sampler>> {
        let key = (circuit_seed, n_qubits);
        if let Some(s) = self.cache.read().expect("sampler cache poisoned").get(&key) {
            return Ok(Arc::clone(s));
        }
        let mut cache = self.cache.write().expect("sampler cache poisoned");
        if let Some(s) = cache.get(&key) {
            return Ok(Arc::clone(s));
        }
        let state = match &self.kind {
            ModelKind::Haar { family } => {
                let seed = if *family == 0 { circuit_seed } else { mix_seed(circuit_seed, *family) };
                haar_random_state(n_qubits, seed)?
            }
            ModelKind::Qv { depth } => {
                let n = n_qubits as usize;
                if n == 0 {
                    return Err(Error::domain("a QV circuit needs at least one qubit"));
                }
                if n_qubits > MAX_STATE_QUBITS {
                    return Err(Error::Resource(format!(
                        "simulating {n_qubits} qubits exceeds the {MAX_STATE_QUBITS}-qubit limit"
                    )));
                }
                simulate(&generate_qv_circuit(n, depth.unwrap_or(n), circuit_seed)?)?
            }
            _ => unreachable!("only ideal devices build samplers"),
        };
        let sampler = Arc::new(build_sampler(&measurement_distribution(&state)));
        cache.insert(key, Arc::clone(&sampler));
        Ok(sampler)
    }

    /// Samples with explicit device randomness `rng_seed`.
    ///
    /// Archive replay ignores `rng_seed`: it returns the whole archive, or a
    /// random sub-multiset chosen from `(circuit_seed, shots)` alone, so a
    /// replay is identical whether served locally or remotely.
    pub fn sample(&self, circuit_seed: u64, n_qubits: u32, shots: u64, rng_seed: u64) -> Result<SampleSet> {
        if n_qubits > self.max_qubits() && !matches!(self.kind, ModelKind::Archive(_)) {
            return Err(Error::Resource(format!(
                "device supports at most {} qubits, {n_qubits} requested",
                self.max_qubits()
            )));
        }
        match &self.kind {
            ModelKind::Haar { .. } | ModelKind::Qv { .. } => {
                let sampler = self.ideal_sampler(circuit_seed, n_qubits)?;
                if self.noise.alpha() == 1.0 {
                    Ok(draw(&sampler, shots, rng_seed))
                } else {
                    Ok(draw_noisy(&sampler, self.noise, shots, rng_seed))
                }
            }
            ModelKind::Uniform => Ok(draw(&Sampler::uniform(n_qubits)?, shots, rng_seed)),
            ModelKind::Constant(bits) => SampleSet::from_counts(n_qubits, [(*bits, shots)]),
            ModelKind::Archive(set) => replay(set, circuit_seed, n_qubits, shots),
        }
    }
}

fn replay(set: &SampleSet, circuit_seed: u64, n_qubits: u32, shots: u64) -> Result<SampleSet> {
    if n_qubits != set.n_bits() {
        return Err(Error::domain(format!(
            "archive holds {}-bit samples, {n_qubits} requested",
            set.n_bits()
        )));
    }
    if shots > set.total() {
        return Err(Error::domain(format!(
            "archive holds {} samples, {shots} requested",
            set.total()
        )));
    }
    if shots == set.total() {
        return Ok(set.clone());
    }
    let mut draws = set.to_draws();
    let mut rng = stream_rng(mix_seed(circuit_seed, shots), 0);
    let (chosen, _) = draws.partial_shuffle(&mut rng, shots as usize);
    SampleSet::from_draws(n_qubits, chosen.to_vec())
}

/// In-process device.
#[derive(Debug)]
pub struct LocalDevice {
    model: Arc<DeviceModel>,
    seed: u64,
    calls: u64,
}

impl LocalDevice {
    pub fn new(spec: &DeviceSpec, seed: u64) -> Result<Self> {
        Ok(Self {
            model: Arc::new(DeviceModel::new(spec)?),
            seed,
            calls: 0,
        })
    }
}

impl BitstringSource for LocalDevice {
    fn max_qubits(&self) -> u32 {
        self.model.max_qubits()
    }

    fn sample(&mut self, circuit_seed: u64, n_qubits: u32, shots: u64) -> Result<SampleSet> {
        let rng_seed = mix_seed(self.seed, self.calls);
        self.calls += 1;
        self.model.sample(circuit_seed, n_qubits, shots, rng_seed)
    }
}

/// Opens the device described by `spec`; `seed` drives its internal randomness.
pub fn open_device(spec: &DeviceSpec, seed: u64) -> Result<Box<dyn BitstringSource>> {
    match spec {
        DeviceSpec::Remote { address } => Ok(Box::new(RemoteDevice::connect(address)?)),
        _ => Ok(Box::new(LocalDevice::new(spec, seed)?)),
    }
}
