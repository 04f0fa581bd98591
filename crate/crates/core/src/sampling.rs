//! Bitstring sampling.
//!
//! [`Sampler`] is a Walker/Vose alias table (O(D) build, O(1) per draw).
//! [`draw`] and [`draw_noisy`] split the requested shots into fixed-size
//! shards, each driven by its own ChaCha stream of the caller's seed, and merge
//! the shard results; the output depends only on `(sampler, shots, seed)`.

use std::io::{Read, Write};

use rand::{Rng, RngCore};
use rayon::prelude::*;

use crate::distribution::{NoiseModel, ProbabilityDistribution};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, StreamRng};

/// Shots drawn per independent RNG stream.
pub const SHARD_SHOTS: u64 = 1 << 18;

/// Multiset of sampled `n_bits`-bit strings.
///
/// Stored as `(bitstring, multiplicity)` pairs sorted by bitstring, with every
/// multiplicity positive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSet {
    n_bits: u32,
    entries: Vec<(u64, u64)>,
    total: u64,
}

impl SampleSet {
    pub fn empty(n_bits: u32) -> Result<Self> {
        check_bits(n_bits)?;
        Ok(Self {
            n_bits,
            entries: Vec::new(),
            total: 0,
        })
    }

    /// Builds a set from `(bitstring, multiplicity)` pairs in any order.
    /// Repeated keys are merged and zero multiplicities dropped.
    pub fn from_counts<I>(n_bits: u32, counts: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u64, u64)>,
    {
        check_bits(n_bits)?;
        let mut entries: Vec<(u64, u64)> = counts.into_iter().filter(|&(_, m)| m > 0).collect();
        if let Some(&(key, _)) = entries.iter().find(|(k, _)| !fits(*k, n_bits)) {
            return Err(Error::domain(format!("bitstring {key:#x} has more than {n_bits} bits")));
        }
        entries.sort_unstable_by_key(|&(k, _)| k);
        let entries = coalesce(entries);
        let total = checked_total(&entries)?;
        Ok(Self {
            n_bits,
            entries,
            total,
        })
    }

    /// Builds a set from individual draws.
    pub fn from_draws(n_bits: u32, mut draws: Vec<u64>) -> Result<Self> {
        check_bits(n_bits)?;
        if let Some(key) = draws.iter().find(|&&k| !fits(k, n_bits)) {
            return Err(Error::domain(format!("bitstring {key:#x} has more than {n_bits} bits")));
        }
        draws.sort_unstable();
        Ok(Self::from_sorted_draws(n_bits, &draws))
    }

    fn from_sorted_draws(n_bits: u32, draws: &[u64]) -> Self {
        let mut entries: Vec<(u64, u64)> = Vec::new();
        for &k in draws {
            match entries.last_mut() {
                Some((last, m)) if *last == k => *m += 1,
                _ => entries.push((k, 1)),
            }
        }
        Self {
            n_bits,
            total: draws.len() as u64,
            entries,
        }
    }

    pub fn n_bits(&self) -> u32 {
        self.n_bits
    }

    /// `N`, the number of sampled bitstrings.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// `W`, the number of distinct bitstrings.
    pub fn distinct(&self) -> u64 {
        self.entries.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// `(bitstring, multiplicity)` pairs in increasing bitstring order.
    pub fn iter(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn keys(&self) -> impl Iterator<Item = u64> + '_ {
        self.entries.iter().map(|&(k, _)| k)
    }

    pub fn get(&self, key: u64) -> u64 {
        self.entries
            .binary_search_by_key(&key, |&(k, _)| k)
            .map(|i| self.entries[i].1)
            .unwrap_or(0)
    }

    /// Multiset union (multiplicities add).
    pub fn merge(&self, other: &SampleSet) -> Result<SampleSet> {
        if self.n_bits != other.n_bits {
            return Err(Error::domain(format!(
                "cannot merge {}-bit and {}-bit sample sets",
                self.n_bits, other.n_bits
            )));
        }
        let mut entries = Vec::with_capacity(self.entries.len() + other.entries.len());
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.entries, &other.entries);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => {
                    entries.push(a[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    entries.push(b[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    entries.push((a[i].0, a[i].1 + b[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        entries.extend_from_slice(&a[i..]);
        entries.extend_from_slice(&b[j..]);
        Ok(SampleSet {
            n_bits: self.n_bits,
            entries,
            total: self.total + other.total,
        })
    }

    /// Number of bitstrings present in both sets.
    pub(crate) fn shared_support(&self, other: &SampleSet) -> u64 {
        let (a, b) = (&self.entries, &other.entries);
        let (mut i, mut j, mut shared) = (0, 0, 0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    shared += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        shared
    }

    /// Serialized size in bytes.
    pub fn encoded_len(&self) -> usize {
        16 + 16 * self.entries.len()
    }

    /// Little-endian `n_bits: u64`, `entries: u64`, then `(key: u64, multiplicity: u64)`
    /// pairs in increasing key order.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(&u64::from(self.n_bits).to_le_bytes())?;
        w.write_all(&(self.entries.len() as u64).to_le_bytes())?;
        for &(k, m) in &self.entries {
            w.write_all(&k.to_le_bytes())?;
            w.write_all(&m.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    /// Parses the [`write_to`](Self::write_to) layout. `base_offset` is added to
    /// the byte offsets reported in format errors.
    pub fn read_from<R: Read>(mut r: R, base_offset: u64) -> Result<Self> {
        let mut word = [0u8; 8];
        let mut offset = base_offset;
        let mut next = |r: &mut R, offset: &mut u64| -> Result<u64> {
            r.read_exact(&mut word).map_err(|e| match e.kind() {
                std::io::ErrorKind::UnexpectedEof => Error::format(*offset, "unexpected end of data"),
                _ => Error::Io(e),
            })?;
            *offset += 8;
            Ok(u64::from_le_bytes(word))
        };
        let n_bits = next(&mut r, &mut offset)?;
        if n_bits > 64 {
            return Err(Error::format(base_offset, format!("n_bits {n_bits} exceeds 64")));
        }
        let n_bits = n_bits as u32;
        let count = next(&mut r, &mut offset)?;
        let mut entries: Vec<(u64, u64)> = Vec::with_capacity(count.min(1 << 20) as usize);
        let mut total: u64 = 0;
        for _ in 0..count {
            let at = offset;
            let key = next(&mut r, &mut offset)?;
            let mult = next(&mut r, &mut offset)?;
            if !fits(key, n_bits) {
                return Err(Error::format(at, format!("bitstring {key:#x} has more than {n_bits} bits")));
            }
            if mult == 0 {
                return Err(Error::format(at + 8, "zero multiplicity"));
            }
            if entries.last().is_some_and(|&(prev, _)| prev >= key) {
                return Err(Error::format(at, "bitstrings are not strictly increasing"));
            }
            total = total
                .checked_add(mult)
                .ok_or_else(|| Error::format(at + 8, "total multiplicity overflows"))?;
            entries.push((key, mult));
        }
        Ok(Self {
            n_bits,
            entries,
            total,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let set = Self::read_from(bytes, 0)?;
        if set.encoded_len() != bytes.len() {
            return Err(Error::format(set.encoded_len() as u64, "trailing bytes after sample set"));
        }
        Ok(set)
    }

    /// Expands the multiset into one entry per sample, in key order.
    pub fn to_draws(&self) -> Vec<u64> {
        let mut out = Vec::with_capacity(self.total as usize);
        for &(k, m) in &self.entries {
            out.extend(std::iter::repeat_n(k, m as usize));
        }
        out
    }
}

fn check_bits(n_bits: u32) -> Result<()> {
    if n_bits > 64 {
        return Err(Error::domain(format!("bitstrings are limited to 64 bits, got {n_bits}")));
    }
    Ok(())
}

fn fits(key: u64, n_bits: u32) -> bool {
    n_bits >= 64 || key >> n_bits == 0
}

fn coalesce(sorted: Vec<(u64, u64)>) -> Vec<(u64, u64)> {
    let mut out: Vec<(u64, u64)> = Vec::with_capacity(sorted.len());
    for (k, m) in sorted {
        match out.last_mut() {
            Some((last, acc)) if *last == k => *acc += m,
            _ => out.push((k, m)),
        }
    }
    out
}

fn checked_total(entries: &[(u64, u64)]) -> Result<u64> {
    entries
        .iter()
        .try_fold(0u64, |acc, &(_, m)| acc.checked_add(m))
        .ok_or_else(|| Error::domain("total multiplicity overflows u64"))
}

#[derive(Debug, Clone)]
enum Table {
    /// Every outcome of `2^n_bits` equally likely; no table is stored.
    Uniform,
    Alias { threshold: Vec<f64>, alias: Vec<u32> },
}

/// O(1) sampler over `D = 2^n_bits` outcomes.
#[derive(Debug, Clone)]
pub struct Sampler {
    n_bits: u32,
    table: Table,
}

impl Sampler {
    /// Table-free uniform sampler, usable up to 64 bits.
    pub fn uniform(n_bits: u32) -> Result<Self> {
        check_bits(n_bits)?;
        Ok(Self {
            n_bits,
            table: Table::Uniform,
        })
    }

    pub fn n_bits(&self) -> u32 {
        self.n_bits
    }

    /// Outcome count `D`, saturating at `u64::MAX` for 64 bits.
    pub fn dim(&self) -> u64 {
        if self.n_bits >= 64 {
            u64::MAX
        } else {
            1 << self.n_bits
        }
    }

    /// Per-cell acceptance probabilities, `None` for the table-free uniform sampler.
    pub fn probability_row(&self) -> Option<&[f64]> {
        match &self.table {
            Table::Uniform => None,
            Table::Alias { threshold, .. } => Some(threshold),
        }
    }

    pub fn alias_row(&self) -> Option<&[u32]> {
        match &self.table {
            Table::Uniform => None,
            Table::Alias { alias, .. } => Some(alias),
        }
    }

    /// Outcome probabilities implied by the table.
    pub fn implied_probabilities(&self) -> Option<Vec<f64>> {
        let Table::Alias { threshold, alias } = &self.table else {
            return None;
        };
        let d = threshold.len() as f64;
        let mut p: Vec<f64> = threshold.iter().map(|t| t / d).collect();
        for (t, &a) in threshold.iter().zip(alias) {
            p[a as usize] += (1.0 - t) / d;
        }
        Some(p)
    }

    #[inline]
    fn mask(&self) -> u64 {
        if self.n_bits >= 64 {
            u64::MAX
        } else {
            (1 << self.n_bits) - 1
        }
    }

    /// One draw. The low `n_bits` of a 64-bit word pick the cell and the
    /// remaining high bits (at most 53) form the acceptance coin.
    #[inline]
    pub fn sample_one<R: RngCore + ?Sized>(&self, rng: &mut R) -> u64 {
        let x = rng.next_u64();
        let cell = x & self.mask();
        match &self.table {
            Table::Uniform => cell,
            Table::Alias { threshold, alias } => {
                let shift = self.n_bits.max(11);
                let coin = (x >> shift) as f64 * f64::powi(2.0, -(64 - shift as i32));
                let i = cell as usize;
                if coin < threshold[i] {
                    cell
                } else {
                    u64::from(alias[i])
                }
            }
        }
    }
}

/// Vose alias construction.
pub fn build_sampler(dist: &ProbabilityDistribution) -> Sampler {
    let d = dist.dim();
    let scaled: Vec<f64> = dist.probs().iter().map(|p| p * d as f64).collect();
    let mut threshold = vec![1.0; d];
    let mut alias: Vec<u32> = (0..d as u32).collect();
    let mut small: Vec<usize> = Vec::new();
    let mut large: Vec<usize> = Vec::new();
    let mut work = scaled;
    for (i, &w) in work.iter().enumerate() {
        if w < 1.0 {
            small.push(i);
        } else {
            large.push(i);
        }
    }
    while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
        small.pop();
        threshold[s] = work[s];
        alias[s] = l as u32;
        work[l] = (work[l] + work[s]) - 1.0;
        if work[l] < 1.0 {
            large.pop();
            small.push(l);
        }
    }
    // leftovers are 1 up to rounding
    for i in small.into_iter().chain(large) {
        threshold[i] = 1.0;
        alias[i] = i as u32;
    }
    Sampler {
        n_bits: dist.n_qubits(),
        table: Table::Alias { threshold, alias },
    }
}

fn shard_plan(shots: u64) -> Vec<(u64, u64)> {
    let shards = shots.div_ceil(SHARD_SHOTS);
    (0..shards)
        .map(|i| (i, SHARD_SHOTS.min(shots - i * SHARD_SHOTS)))
        .collect()
}

fn sharded<F>(n_bits: u32, shots: u64, seed: u64, draw_one: F) -> SampleSet
where
    F: Fn(&mut StreamRng) -> u64 + Sync,
{
    let shards: Vec<SampleSet> = shard_plan(shots)
        .into_par_iter()
        .map(|(index, count)| {
            let mut rng = stream_rng(seed, index);
            let mut draws: Vec<u64> = (0..count).map(|_| draw_one(&mut rng)).collect();
            draws.sort_unstable();
            SampleSet::from_sorted_draws(n_bits, &draws)
        })
        .collect();
    shards
        .into_iter()
        .reduce(|a, b| a.merge(&b).expect("shards share n_bits"))
        .unwrap_or(SampleSet {
            n_bits,
            entries: Vec::new(),
            total: 0,
        })
}

/// `shots` i.i.d. draws.
pub fn draw(sampler: &Sampler, shots: u64, seed: u64) -> SampleSet {
    sharded(sampler.n_bits, shots, seed, |rng| sampler.sample_one(rng))
}

/// Draws from `alpha * ideal + (1 - alpha) * uniform`: each shot comes from
/// the ideal sampler with probability `alpha` and is uniform otherwise.
pub fn draw_noisy(sampler: &Sampler, noise: NoiseModel, shots: u64, seed: u64) -> SampleSet {
    let alpha = noise.alpha();
    let mask = sampler.mask();
    sharded(sampler.n_bits, shots, seed, |rng| {
        if rng.random::<f64>() < alpha {
            sampler.sample_one(rng)
        } else {
            rng.next_u64() & mask
        }
    })
}
