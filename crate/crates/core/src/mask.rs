//! Ideal binary masks and the Hamming-distance mask codebook.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::features::floored_ln;

/// Packed binary mask vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IbmVector {
    len: usize,
    words: Vec<u64>,
}

impl IbmVector {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut v = Self::zeros(len);
        for i in 0..len {
            v.set(i, true);
        }
        v
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut v = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            v.set(i, b);
        }
        v
    }

    /// Builds from 0/1 values; anything else is rejected.
    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        let mut v = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            match b {
                0 => {}
                1 => v.set(i, true),
                other => return Err(Error::invalid(format!("mask bit {i} is {other}"))),
            }
        }
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit {i} out of range for length {}", self.len);
        let bit = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= bit;
        } else {
            self.words[i / 64] &= !bit;
        }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.iter().map(|b| if b { 1.0 } else { 0.0 }).collect()
    }

    /// Tiles this mask `times` times.
    pub fn repeated(&self, times: usize) -> Self {
        let bits: Vec<bool> = (0..times).flat_map(|_| self.iter()).collect();
        Self::from_bools(&bits)
    }
}

/// Unit step of `ln(clean) - ln(noise)` per element, with step(0) = 1.
pub fn compute_ibm(clean: &[f64], noise: &[f64]) -> Result<IbmVector> {
    check_dim("compute_ibm", clean.len(), noise.len())?;
    let bits: Vec<bool> = clean
        .iter()
        .zip(noise)
        .map(|(&s, &n)| floored_ln(s) - floored_ln(n) >= 0.0)
        .collect();
    Ok(IbmVector::from_bools(&bits))
}

pub fn apply_mask(noisy: &[f64], mask: &IbmVector) -> Result<Vec<f64>> {
    check_dim("apply_mask", noisy.len(), mask.len())?;
    Ok(noisy
        .iter()
        .zip(mask.iter())
        .map(|(&x, keep)| if keep { x } else { 0.0 })
        .collect())
}

pub fn hamming_distance(a: &IbmVector, b: &IbmVector) -> Result<usize> {
    check_dim("hamming_distance", a.len(), b.len())?;
    Ok(hamming_unchecked(a, b))
}

fn hamming_unchecked(a: &IbmVector, b: &IbmVector) -> usize {
    a.words
        .iter()
        .zip(&b.words)
        .map(|(x, y)| (x ^ y).count_ones() as usize)
        .sum()
}

/// Per-bit majority vote; ties resolve to 1.
pub fn majority_vote<'a>(members: impl IntoIterator<Item = &'a IbmVector>, len: usize) -> IbmVector {
    let mut ones = vec![0usize; len];
    let mut count = 0usize;
    for m in members {
        count += 1;
        for (i, c) in ones.iter_mut().enumerate() {
            *c += m.get(i) as usize;
        }
    }
    let bits: Vec<bool> = ones.iter().map(|&c| 2 * c >= count).collect();
    IbmVector::from_bools(&bits)
}

/// The `A` binary centroids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codebook {
    dim: usize,
    centroids: Vec<IbmVector>,
    seed: u64,
    iterations: u32,
}

const CODEBOOK_MAGIC: &[u8; 8] = b"RLSECB\0\0";
const CODEBOOK_VERSION: u32 = 1;

impl Codebook {
    pub fn new(centroids: Vec<IbmVector>, seed: u64, iterations: u32) -> Result<Self> {
        if centroids.len() < 2 {
            return Err(Error::invalid("a codebook needs at least 2 centroids"));
        }
        let dim = centroids[0].len();
        if dim == 0 {
            return Err(Error::invalid("codebook dimension must be positive"));
        }
        for c in &centroids {
            check_dim("codebook centroid", dim, c.len())?;
        }
        Ok(Self {
            dim,
            centroids,
            seed,
            iterations,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn iterations(&self) -> u32 {
        self.iterations
    }

    pub fn centroids(&self) -> &[IbmVector] {
        &self.centroids
    }

    pub fn select(&self, a: usize) -> Result<&IbmVector> {
        self.centroids.get(a).ok_or(Error::IndexOutOfRange {
            index: a,
            len: self.centroids.len(),
        })
    }

    /// Closest centroid; lowest index wins ties.
    pub fn nearest(&self, v: &IbmVector) -> Result<usize> {
        check_dim("nearest_cluster", self.dim, v.len())?;
        Ok(nearest_unchecked(&self.centroids, v).0)
    }

    /// Index of the all-ones centroid, if present.
    pub fn identity_index(&self) -> Option<usize> {
        self.centroids.iter().position(|c| c.count_ones() == self.dim)
    }

    /// Layout: magic, then little-endian u32 version, u32 dim, u32 A,
    /// u64 seed, u32 iterations, then each centroid as `ceil(dim/8)` bytes,
    /// bit `i` stored at byte `i/8`, position `i%8` (LSB first).
    pub fn to_bytes(&self) -> Vec<u8> {
        let row = self.dim.div_ceil(8);
        let mut out = Vec::with_capacity(32 + row * self.len());
        out.extend_from_slice(CODEBOOK_MAGIC);
        out.extend_from_slice(&CODEBOOK_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.iterations.to_le_bytes());
        for c in &self.centroids {
            let mut bytes = vec![0u8; row];
            for i in 0..self.dim {
                if c.get(i) {
                    bytes[i / 8] |= 1 << (i % 8);
                }
            }
            out.extend_from_slice(&bytes);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let header = 8 + 4 * 3 + 8 + 4;
        if bytes.len() < header || &bytes[..8] != CODEBOOK_MAGIC {
            return Err("not a codebook file".into());
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let version = u32_at(8);
        if version != CODEBOOK_VERSION {
            return Err(format!("unsupported codebook version {version}"));
        }
        let dim = u32_at(12) as usize;
        let count = u32_at(16) as usize;
        let seed = u64::from_le_bytes(bytes[20..28].try_into().unwrap());
        let iterations = u32_at(28);
        let row = dim.div_ceil(8);
        if bytes.len() != header + row * count {
            return Err(format!(
                "expected {} bytes for {count}x{dim} codebook, found {}",
                header + row * count,
                bytes.len()
            ));
        }
        let centroids = bytes[header..]
            .chunks_exact(row.max(1))
            .take(count)
            .map(|r| {
                let bits: Vec<bool> = (0..dim).map(|i| r[i / 8] >> (i % 8) & 1 == 1).collect();
                IbmVector::from_bools(&bits)
            })
            .collect();
        Codebook::new(centroids, seed, iterations).map_err(|e| e.to_string())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes).map_err(|reason| Error::format(path, reason))
    }
}

fn nearest_unchecked(centroids: &[IbmVector], v: &IbmVector) -> (usize, usize) {
    let mut best = (0, usize::MAX);
    for (i, c) in centroids.iter().enumerate() {
        let d = hamming_unchecked(c, v);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

pub fn nearest_cluster(v: &IbmVector, cb: &Codebook) -> Result<usize> {
    cb.nearest(v)
}

pub fn select_mask(cb: &Codebook, a: usize) -> Result<&IbmVector> {
    cb.select(a)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMeansConfig {
    pub clusters: usize,
    pub seed: u64,
    pub max_iter: usize,
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub codebook: Codebook,
    pub assignments: Vec<usize>,
    /// Total within-cluster Hamming distance after each assignment step.
    pub objective_history: Vec<usize>,
    pub converged: bool,
}

impl KMeansResult {
    pub fn objective(&self) -> usize {
        *self.objective_history.last().unwrap_or(&0)
    }
}

/// Initial centroids: a seeded shuffle of the sample indices, keeping the
/// first `clusters` distinct vectors (duplicates only when there are fewer
/// distinct vectors than clusters).
pub fn kmeans_init(samples: &[IbmVector], clusters: usize, seed: u64) -> Vec<IbmVector> {
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut chosen: Vec<IbmVector> = Vec::with_capacity(clusters);
    let mut leftovers = Vec::new();
    for &i in &order {
        if chosen.len() == clusters {
            break;
        }
        if chosen.contains(&samples[i]) {
            leftovers.push(i);
        } else {
            chosen.push(samples[i].clone());
        }
    }
    for i in leftovers {
        if chosen.len() == clusters {
            break;
        }
        chosen.push(samples[i].clone());
    }
    chosen
}

/// Lloyd iteration under Hamming distance with majority-vote centroids.
pub fn kmeans_binary(samples: &[IbmVector], cfg: &KMeansConfig) -> Result<KMeansResult> {
    let KMeansConfig {
        clusters,
        seed,
        max_iter,
    } = *cfg;
    if clusters < 2 {
        return Err(Error::invalid("need at least 2 clusters"));
    }
    if samples.len() < clusters {
        return Err(Error::InsufficientData(format!(
            "{} samples for {} clusters",
            samples.len(),
            clusters
        )));
    }
    let dim = samples[0].len();
    for s in samples {
        check_dim("kmeans sample", dim, s.len())?;
    }

    let mut centroids = kmeans_init(samples, clusters, seed);
    let mut assignments: Vec<usize> = Vec::new();
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0u32;

    for _ in 0..max_iter.max(1) {
        let nearest: Vec<(usize, usize)> = samples
            .par_iter()
            .map(|s| nearest_unchecked(&centroids, s))
            .collect();
        let new_assign: Vec<usize> = nearest.iter().map(|&(a, _)| a).collect();
        let objective = nearest.iter().map(|&(_, d)| d).sum();
        if let Some(&prev) = history.last() {
            debug_assert!(objective <= prev, "k-means objective rose {prev} -> {objective}");
        }
        history.push(objective);
        if new_assign == assignments {
            converged = true;
            break;
        }
        assignments = new_assign;
        iterations += 1;

        let mut members: Vec<Vec<&IbmVector>> = vec![Vec::new(); clusters];
        for (s, &a) in samples.iter().zip(&assignments) {
            members[a].push(s);
        }
        // Empty clusters take the samples farthest from their centroids.
        let mut by_distance: Vec<usize> = (0..samples.len()).collect();
        by_distance.sort_by(|&i, &j| nearest[j].1.cmp(&nearest[i].1).then(i.cmp(&j)));
        let mut donors = by_distance.into_iter();
        for (k, m) in members.iter().enumerate() {
            if m.is_empty() {
                if let Some(i) = donors.next() {
                    centroids[k] = samples[i].clone();
                }
            } else {
                centroids[k] = majority_vote(m.iter().copied(), dim);
            }
        }
    }

    if !converged {
        // Report the objective of the final centroids.
        let nearest: Vec<(usize, usize)> = samples
            .par_iter()
            .map(|s| nearest_unchecked(&centroids, s))
            .collect();
        assignments = nearest.iter().map(|&(a, _)| a).collect();
        history.push(nearest.iter().map(|&(_, d)| d).sum());
    }

    Ok(KMeansResult {
        codebook: Codebook::new(centroids, seed, iterations)?,
        assignments,
        objective_history: history,
        converged,
    })
}
