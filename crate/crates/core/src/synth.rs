//! Seeded instance generators.
//!
//! Every generator is a pure function of its inputs and an [`InstanceSeed`].
//! The seed is hashed into a ChaCha8 key and two independent streams are
//! drawn from it: stream 0 for the measurement matrix, stream 1 for the signal.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{domain, Error, Result};
use crate::models::{apply_difference, pinv, realized_accuracies, BlockStructure, Dictionary, PartitionSpec};

pub const MATRIX_STREAM: u64 = 0;
pub const SIGNAL_STREAM: u64 = 1;

/// Threshold below which an analysis coefficient counts as zero.
pub const SUPPORT_THRESHOLD: f64 = 1e-8;

/// One step of the splitmix64 generator, used as a 64-bit mixing function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds words into one 64-bit key: `h = splitmix64(h ^ w)` for each word,
/// starting from `h = 0`.
pub fn hash_words(words: &[u64]) -> u64 {
    words.iter().fold(0u64, |h, &w| splitmix64(h ^ w))
}

/// Seed of trial `trial` in grid cell `(s, m)`: `hash_words([base, s, m, trial])`.
pub fn cell_seed(base_seed: u64, s: u64, m: u64, trial: u64) -> u64 {
    hash_words(&[base_seed, s, m, trial])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct InstanceSeed {
    pub base_seed: u64,
    pub trial_index: u64,
}

impl InstanceSeed {
    pub fn new(base_seed: u64, trial_index: u64) -> Self {
        Self { base_seed, trial_index }
    }

    /// RNG for one stream. Same seed and stream give the same sequence.
    pub fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(hash_words(&[self.base_seed, self.trial_index]));
        rng.set_stream(stream);
        rng
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

/// `m×n` matrix with i.i.d. standard normal entries, filled row by row.
pub fn gaussian_matrix(m: usize, n: usize, seed: &InstanceSeed) -> DMatrix<f64> {
    let mut rng = seed.rng(MATRIX_STREAM);
    let data = normal_vec(&mut rng, m * n);
    DMatrix::from_row_slice(m, n, &data)
}

/// Draws `counts[i]` distinct members of every set, sorted.
fn pick_support(part: &PartitionSpec, counts: &[usize], rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    if counts.len() != part.num_parts() {
        return domain(format!("expected {} counts, got {}", part.num_parts(), counts.len()));
    }
    let mut support = Vec::new();
    for (i, &c) in counts.iter().enumerate() {
        let members = part.members(i);
        if c > members.len() {
            return domain(format!("count {c} exceeds size {} of set {i}", members.len()));
        }
        support.extend(sample(rng, members.len(), c).into_iter().map(|j| members[j]));
    }
    support.sort_unstable();
    Ok(support)
}

fn rounded_counts(part: &PartitionSpec) -> Result<Vec<usize>> {
    let counts = part.counts();
    if counts.iter().sum::<usize>() == 0 && part.alpha.iter().any(|&a| a > 0.0) {
        return domain("accuracies round to an empty support");
    }
    Ok(counts)
}

#[derive(Debug, Clone)]
pub struct EntrywiseInstance {
    pub x: Vec<f64>,
    /// analysis coefficients `Ωx`
    pub coeffs: Vec<f64>,
    /// requested support of `Ωx`
    pub requested: Vec<usize>,
    /// support of `Ωx` after thresholding
    pub support: Vec<usize>,
    pub realized_alpha: Vec<f64>,
    /// whether `Ωx` vanishes off `requested`; some requested entries may still
    /// be forced to zero by the range constraint
    pub exact: bool,
}

/// A signal whose analysis coefficients follow the partition's accuracies.
///
/// For square `Ω`, `x = Ω⁻¹c` with `c` Gaussian on the chosen support. For
/// redundant `Ω` a coefficient vector supported on `S` lies in the range of
/// `Ω` only if it solves `(I - ΩΩ†)_{:,S} c_S = 0`; when that system has a
/// nontrivial solution a random one is used, otherwise `x = Ω†c` and the
/// realized support is whatever survives thresholding.
pub fn entrywise_instance(dict: &Dictionary, part: &PartitionSpec, seed: &InstanceSeed) -> Result<EntrywiseInstance> {
    let (p, n) = (dict.p(), dict.n());
    if part.ground_size != p {
        return domain(format!("partition covers {} indices, dictionary has p = {p}", part.ground_size));
    }
    let counts = rounded_counts(part)?;
    let mut rng = seed.rng(SIGNAL_STREAM);
    let requested = pick_support(part, &counts, &mut rng)?;
    let s = requested.len();
    let omega = &dict.matrix;

    let (x, exact) = if s == 0 {
        (DVector::zeros(n), true)
    } else if p == n {
        let mut c = DVector::zeros(p);
        for (&j, v) in requested.iter().zip(normal_vec(&mut rng, s)) {
            c[j] = v;
        }
        let x = omega.clone().lu().solve(&c).ok_or_else(|| Error::Singular("square dictionary is not invertible".into()))?;
        (x, true)
    } else {
        let pi = pinv(omega)?;
        let proj = DMatrix::<f64>::identity(p, p) - omega * &pi;
        let cols = proj.select_columns(requested.iter());
        let svd = cols.svd(false, true);
        let vt = svd.v_t.expect("requested V^T");
        let smax = svd.singular_values.max().max(1.0);
        // right singular vectors for (numerically) zero singular values; rank ≤ s
        let mut null = Vec::new();
        for r in 0..s {
            let sv = if r < svd.singular_values.len() { svd.singular_values[r] } else { 0.0 };
            if sv <= 1e-10 * smax {
                null.push(vt.row(r).transpose());
            }
        }
        let mut c_s = DVector::zeros(s);
        let exact = !null.is_empty();
        if exact {
            for v in &null {
                let z: f64 = rng.sample(StandardNormal);
                c_s += v * z;
            }
            c_s *= (s as f64).sqrt() / c_s.norm();
        } else {
            c_s = DVector::from_vec(normal_vec(&mut rng, s));
        }
        let mut c = DVector::zeros(p);
        for (k, &j) in requested.iter().enumerate() {
            c[j] = c_s[k];
        }
        (pi * c, exact)
    };
    let coeffs = omega * &x;
    let support: Vec<usize> = (0..p).filter(|&j| coeffs[j].abs() > SUPPORT_THRESHOLD).collect();
    let realized_alpha = realized_accuracies(&support, part)?;
    Ok(EntrywiseInstance {
        x: x.as_slice().to_vec(),
        coeffs: coeffs.as_slice().to_vec(),
        exact: exact && support.iter().all(|j| requested.binary_search(j).is_ok()),
        requested,
        support,
        realized_alpha,
    })
}

#[derive(Debug, Clone)]
pub struct BlockInstance {
    pub x: Vec<f64>,
    /// active block indices
    pub support: Vec<usize>,
}

/// A block-sparse signal; `part` is over the `q` blocks.
pub fn block_instance(blocks: &BlockStructure, part: &PartitionSpec, seed: &InstanceSeed) -> Result<BlockInstance> {
    if part.ground_size != blocks.q {
        return domain(format!("partition covers {} blocks, structure has q = {}", part.ground_size, blocks.q));
    }
    let counts = rounded_counts(part)?;
    let mut rng = seed.rng(SIGNAL_STREAM);
    let support = pick_support(part, &counts, &mut rng)?;
    let mut x = vec![0.0; blocks.n];
    for &b in &support {
        for j in blocks.block(b) {
            x[j] = rng.sample(StandardNormal);
        }
    }
    Ok(BlockInstance { x, support })
}

#[derive(Debug, Clone)]
pub struct GradientInstance {
    pub x: Vec<f64>,
    /// jump locations, as indices of `d = Ω_d x`
    pub support: Vec<usize>,
}

/// A piecewise-constant signal with `counts[i]` jumps in set `i` of a
/// partition of `[n-1]`. Jump heights are standard normal.
pub fn gradient_instance(n: usize, part: &PartitionSpec, counts: &[usize], seed: &InstanceSeed) -> Result<GradientInstance> {
    if n < 2 {
        return domain(format!("gradient instance needs n >= 2, got {n}"));
    }
    if part.ground_size != n - 1 {
        return domain(format!("partition covers {} indices, expected n-1 = {}", part.ground_size, n - 1));
    }
    let mut rng = seed.rng(SIGNAL_STREAM);
    let support = pick_support(part, counts, &mut rng)?;
    let mut d = vec![0.0; n - 1];
    for &j in &support {
        d[j] = rng.sample(StandardNormal);
    }
    let mut x = vec![0.0; n];
    x[0] = rng.sample(StandardNormal);
    for j in 0..n - 1 {
        x[j + 1] = x[j] - d[j];
    }
    debug_assert!(apply_difference(&x).iter().zip(&d).all(|(a, b)| (*a != 0.0) == (*b != 0.0)));
    Ok(GradientInstance { x, support })
}

/// A partition with the given set sizes and a random assignment of indices.
pub fn shuffled_partition(sizes: &[usize], alpha: Vec<f64>, seed: u64) -> Result<PartitionSpec> {
    let mut membership: Vec<usize> = sizes.iter().enumerate().flat_map(|(i, &s)| std::iter::repeat_n(i, s)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for j in (1..membership.len()).rev() {
        membership.swap(j, rng.random_range(0..=j));
    }
    PartitionSpec::new(membership, alpha)
}

/// Writes a signal as `index,value` rows.
pub fn write_signal_csv<W: Write>(out: W, x: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["index", "value"])?;
    for (i, v) in x.iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
