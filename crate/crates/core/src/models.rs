//! Partitions, dictionaries, block structures and gradient-support profiles.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// A partition of `ground_size` indices into `L` sets with an accuracy per set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub ground_size: usize,
    pub membership: Vec<usize>,
    pub rho: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl PartitionSpec {
    /// Builds a partition from an arbitrary membership map. Partition ids must
    /// be `0..L` and every id must be used.
    pub fn new(membership: Vec<usize>, alpha: Vec<f64>) -> Result<Self> {
        let ground_size = membership.len();
        if ground_size == 0 {
            return domain("partition over an empty ground set");
        }
        let l = alpha.len();
        if l == 0 {
            return domain("partition needs at least one set");
        }
        let mut sizes = vec![0usize; l];
        for &m in &membership {
            if m >= l {
                return domain(format!("membership id {m} out of range for {l} sets"));
            }
            sizes[m] += 1;
        }
        if let Some(i) = sizes.iter().position(|&s| s == 0) {
            return domain(format!("partition set {i} is empty"));
        }
        for (i, &a) in alpha.iter().enumerate() {
            if !(0.0..=1.0).contains(&a) {
                return domain(format!("accuracy alpha[{i}] = {a} not in [0, 1]"));
            }
        }
        let rho = sizes.iter().map(|&s| s as f64 / ground_size as f64).collect();
        Ok(Self {
            ground_size,
            membership,
            rho,
            alpha,
        })
    }

    /// Consecutive runs of the given sizes.
    pub fn contiguous(sizes: &[usize], alpha: Vec<f64>) -> Result<Self> {
        if sizes.len() != alpha.len() {
            return domain("sizes and alpha differ in length");
        }
        let membership = sizes.iter().enumerate().flat_map(|(i, &s)| std::iter::repeat_n(i, s)).collect();
        Self::new(membership, alpha)
    }

    /// Accuracies given as support counts per set.
    pub fn with_counts(membership: Vec<usize>, counts: &[usize]) -> Result<Self> {
        let l = counts.len();
        let mut sizes = vec![0usize; l];
        for &m in &membership {
            if m < l {
                sizes[m] += 1;
            }
        }
        let mut alpha = Vec::with_capacity(l);
        for i in 0..l {
            if counts[i] > sizes[i] {
                return domain(format!("count {} exceeds size {} of set {i}", counts[i], sizes[i]));
            }
            alpha.push(if sizes[i] == 0 { 0.0 } else { counts[i] as f64 / sizes[i] as f64 });
        }
        Self::new(membership, alpha)
    }

    pub fn single(ground_size: usize, alpha: f64) -> Result<Self> {
        Self::new(vec![0; ground_size], vec![alpha])
    }

    pub fn num_parts(&self) -> usize {
        self.alpha.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_parts()];
        for &m in &self.membership {
            sizes[m] += 1;
        }
        sizes
    }

    /// Support count per set implied by the accuracies, rounded to the nearest integer.
    pub fn counts(&self) -> Vec<usize> {
        self.sizes().iter().zip(&self.alpha).map(|(&s, &a)| (a * s as f64).round() as usize).collect()
    }

    /// Relative sparsity `σ = Σ ρ_i α_i`.
    pub fn sigma(&self) -> f64 {
        self.rho.iter().zip(&self.alpha).map(|(r, a)| r * a).sum()
    }

    /// Indices of set `i`.
    pub fn members(&self, i: usize) -> Vec<usize> {
        self.membership.iter().enumerate().filter(|(_, &m)| m == i).map(|(j, _)| j).collect()
    }

    /// Expands per-set weights to one weight per ground index.
    pub fn expand(&self, omega: &[f64]) -> Result<Vec<f64>> {
        if omega.len() != self.num_parts() {
            return domain(format!("expected {} weights, got {}", self.num_parts(), omega.len()));
        }
        Ok(self.membership.iter().map(|&m| omega[m]).collect())
    }

    /// Same sets, different accuracies.
    pub fn with_alpha(&self, alpha: Vec<f64>) -> Result<Self> {
        Self::new(self.membership.clone(), alpha)
    }
}

/// Ratio of the largest to smallest of the `min(p, n)` singular values.
pub fn condition_number(matrix: &DMatrix<f64>) -> Result<f64> {
    if matrix.nrows() == 0 || matrix.ncols() == 0 {
        return domain("empty matrix");
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return domain("matrix has non-finite entries");
    }
    let sv = matrix.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if max == 0.0 || min <= max * 1e-12 {
        return Err(Error::Singular(format!("rank deficient, singular values in [{min:e}, {max:e}]")));
    }
    Ok(max / min)
}

/// An analysis operator `Ω ∈ R^{p×n}` with its condition number.
#[derive(Debug, Clone)]
pub struct Dictionary {
    pub matrix: DMatrix<f64>,
    pub kappa: f64,
}

impl Dictionary {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() < matrix.ncols() {
            return domain(format!("dictionary must have p >= n, got {}x{}", matrix.nrows(), matrix.ncols()));
        }
        let kappa = condition_number(&matrix)?;
        Ok(Self { matrix, kappa })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            matrix: DMatrix::identity(n, n),
            kappa: 1.0,
        }
    }

    pub fn p(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n(&self) -> usize {
        self.matrix.ncols()
    }
}

/// The `(n-1)×n` forward difference matrix with `(Ω_d x)_i = x_i - x_{i+1}`.
pub fn difference_operator(n: usize) -> Result<DMatrix<f64>> {
    if n < 2 {
        return domain(format!("difference operator needs n >= 2, got {n}"));
    }
    let mut d = DMatrix::zeros(n - 1, n);
    for i in 0..n - 1 {
        d[(i, i)] = 1.0;
        d[(i, i + 1)] = -1.0;
    }
    Ok(d)
}

pub(crate) fn apply_difference(x: &[f64]) -> Vec<f64> {
    x.windows(2).map(|w| w[0] - w[1]).collect()
}

/// Orthonormal DCT-II matrix of size `p`; row `j` is the `j`-th cosine atom.
pub(crate) fn dct_matrix(p: usize) -> DMatrix<f64> {
    let pf = p as f64;
    DMatrix::from_fn(p, p, |j, i| {
        let c = if j == 0 { (1.0 / pf).sqrt() } else { (2.0 / pf).sqrt() };
        c * (std::f64::consts::PI * (2 * i + 1) as f64 * j as f64 / (2.0 * pf)).cos()
    })
}

/// Redundant DCT analysis operator: `p` cosine atoms sampled at the first `n`
/// points. The columns are orthonormal, so `κ = 1`.
pub fn dct_dictionary(p: usize, n: usize) -> Result<Dictionary> {
    if n == 0 || p < n {
        return domain(format!("dct dictionary needs p >= n >= 1, got p={p}, n={n}"));
    }
    let c = dct_matrix(p);
    Dictionary::new(c.columns(0, n).into_owned())
}

/// `q` contiguous blocks of length `k` covering `[n]`, `n = q·k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockStructure {
    pub n: usize,
    pub q: usize,
    pub k: usize,
}

impl BlockStructure {
    pub fn new(q: usize, k: usize) -> Result<Self> {
        if q == 0 || k == 0 {
            return domain(format!("block structure needs q, k >= 1, got q={q}, k={k}"));
        }
        Ok(Self { n: q * k, q, k })
    }

    pub fn block(&self, b: usize) -> std::ops::Range<usize> {
        b * self.k..(b + 1) * self.k
    }

    pub fn blocks(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        (0..self.q).map(|b| self.block(b))
    }
}

/// Class of one term in the `n`-term expansion of the TV distance.
///
/// Interior terms are labelled by the pair of difference indices `(i, i-1)`
/// with `i ∈ {2..n-1}` (1-based); `S6*` belong to row 1 and `S7*` to row `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TermClass {
    /// both in support, same sign
    S1,
    /// both in support, opposite sign
    S2,
    /// `i` in support, `i-1` not
    S3,
    /// `i-1` in support, `i` not
    S4,
    /// neither in support
    S5,
    /// first difference in support
    S6,
    /// first difference not in support
    S6Bar,
    /// last difference in support
    S7,
    /// last difference not in support
    S7Bar,
}

impl TermClass {
    pub const ALL: [TermClass; 9] = [
        TermClass::S1,
        TermClass::S2,
        TermClass::S3,
        TermClass::S4,
        TermClass::S5,
        TermClass::S6,
        TermClass::S6Bar,
        TermClass::S7,
        TermClass::S7Bar,
    ];

    fn slot(self) -> usize {
        self as usize
    }
}

/// Number of expansion terms of one class whose own index lies in set `part`
/// and whose predecessor index lies in set `neighbor` (equal to `part` for
/// the two boundary classes).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermCount {
    pub class: TermClass,
    pub part: usize,
    pub neighbor: usize,
    pub count: usize,
}

/// Classification of a gradient support into the sets `S_1..S_7`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientProfile {
    /// signal length
    pub n: usize,
    pub num_parts: usize,
    /// `|S_g|`
    pub support_size: usize,
    /// 1-based labels of each class, indexed by `TermClass as usize`
    pub sets: [Vec<usize>; 9],
    /// aggregated counts keyed by (class, own set, predecessor set)
    pub terms: Vec<TermCount>,

    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub varsigma: Vec<f64>,
    /// fraction of `S_5` (unnamed in the usual notation)
    pub zeta: Vec<f64>,
    pub alpha_p: Vec<f64>,
    pub beta_p: Vec<f64>,
    pub gamma_p: Vec<f64>,
    pub varsigma_p: Vec<f64>,
    pub zeta_p: Vec<f64>,
    pub xi: Vec<f64>,
    pub xi_breve: Vec<f64>,
    pub xi_bar: Vec<f64>,
    pub xi_bar_breve: Vec<f64>,

    pub sigma1: f64,
    pub sigma2: f64,
    /// `|S_3 ∪ S_4| / (n-1)`
    pub sigma3: f64,
    /// boundary terms in support, divided by `n-1`
    pub sigma4: f64,
    pub sigma4_bar: f64,
}

impl GradientProfile {
    pub fn set(&self, class: TermClass) -> &[usize] {
        &self.sets[class.slot()]
    }

    /// Total number of expansion terms, always `n`.
    pub fn num_terms(&self) -> usize {
        self.terms.iter().map(|t| t.count).sum()
    }

    /// Builds the profile from the sign pattern of `d = Ω_d x` (values in {-1, 0, 1}).
    pub fn from_signs(signs: &[i8], part: &PartitionSpec) -> Result<Self> {
        let nd = signs.len();
        if nd == 0 {
            return domain("gradient profile needs n >= 2");
        }
        if part.ground_size != nd {
            return domain(format!("partition covers {} indices, expected n-1 = {nd}", part.ground_size));
        }
        let n = nd + 1;
        let l = part.num_parts();
        let mut sets: [Vec<usize>; 9] = Default::default();
        let mut table: BTreeMap<(TermClass, usize, usize), usize> = BTreeMap::new();
        let on = |j: usize| signs[j] != 0;
        let mem = &part.membership;

        // interior rows: 0-based pair (j, j-1) for j in 1..nd
        for j in 1..nd {
            let class = match (on(j), on(j - 1)) {
                (true, true) if signs[j] == signs[j - 1] => TermClass::S1,
                (true, true) => TermClass::S2,
                (true, false) => TermClass::S3,
                (false, true) => TermClass::S4,
                (false, false) => TermClass::S5,
            };
            sets[class.slot()].push(j + 1);
            *table.entry((class, mem[j], mem[j - 1])).or_default() += 1;
        }
        let first = if on(0) { TermClass::S6 } else { TermClass::S6Bar };
        sets[first.slot()].push(1);
        *table.entry((first, mem[0], mem[0])).or_default() += 1;
        let last = if on(nd - 1) { TermClass::S7 } else { TermClass::S7Bar };
        sets[last.slot()].push(nd);
        *table.entry((last, mem[nd - 1], mem[nd - 1])).or_default() += 1;

        let terms = table
            .into_iter()
            .map(|((class, part, neighbor), count)| TermCount {
                class,
                part,
                neighbor,
                count,
            })
            .collect::<Vec<_>>();

        let sizes = part.sizes();
        let frac = |class: TermClass, cross: Option<bool>| -> Vec<f64> {
            let mut c = vec![0usize; l];
            for t in terms.iter().filter(|t| t.class == class) {
                if cross.is_none_or(|x| x == (t.part != t.neighbor)) {
                    c[t.part] += t.count;
                }
            }
            c.iter().zip(&sizes).map(|(&c, &s)| c as f64 / s as f64).collect()
        };
        let all = |class| frac(class, None);
        let primed = |class| frac(class, Some(true));
        let count = |class: TermClass| sets[class.slot()].len() as f64;
        let nm1 = nd as f64;

        Ok(Self {
            n,
            num_parts: l,
            support_size: signs.iter().filter(|&&s| s != 0).count(),
            alpha: all(TermClass::S1),
            beta: all(TermClass::S2),
            gamma: all(TermClass::S3),
            varsigma: all(TermClass::S4),
            zeta: all(TermClass::S5),
            alpha_p: primed(TermClass::S1),
            beta_p: primed(TermClass::S2),
            gamma_p: primed(TermClass::S3),
            varsigma_p: primed(TermClass::S4),
            zeta_p: primed(TermClass::S5),
            xi: all(TermClass::S6),
            xi_breve: all(TermClass::S7),
            xi_bar: all(TermClass::S6Bar),
            xi_bar_breve: all(TermClass::S7Bar),
            sigma1: count(TermClass::S1) / nm1,
            sigma2: count(TermClass::S2) / nm1,
            sigma3: (count(TermClass::S3) + count(TermClass::S4)) / nm1,
            // counted per boundary term, so n = 2 contributes twice
            sigma4: (count(TermClass::S6) + count(TermClass::S7)) / nm1,
            sigma4_bar: (count(TermClass::S6Bar) + count(TermClass::S7Bar)) / nm1,
            sets,
            terms,
        })
    }

    /// Support sizes per set of the underlying difference vector.
    pub fn support_counts(&self) -> Vec<usize> {
        let mut c = vec![0usize; self.num_parts];
        for t in &self.terms {
            // every support index appears exactly once as the own index of an
            // S1/S2/S3 pair or as the first-row boundary
            if matches!(t.class, TermClass::S1 | TermClass::S2 | TermClass::S3 | TermClass::S6) {
                c[t.part] += t.count;
            }
        }
        c
    }
}

pub(crate) fn sign_pattern(d: &[f64]) -> Vec<i8> {
    d.iter()
        .map(|&v| {
            if v > 0.0 {
                1
            } else if v < 0.0 {
                -1
            } else {
                0
            }
        })
        .collect()
}

/// Classifies the gradient support of `x` against a partition of `[n-1]`.
pub fn gradient_support_profile(x: &[f64], part: &PartitionSpec) -> Result<GradientProfile> {
    if x.len() < 2 {
        return domain(format!("gradient profile needs n >= 2, got {}", x.len()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return domain("signal has non-finite entries");
    }
    GradientProfile::from_signs(&sign_pattern(&apply_difference(x)), part)
}

/// `|P_i ∩ S| / |P_i|` for every set.
pub fn realized_accuracies(support: &[usize], part: &PartitionSpec) -> Result<Vec<f64>> {
    let counts = realized_counts(support, part)?;
    Ok(counts.iter().zip(part.sizes()).map(|(&c, s)| c as f64 / s as f64).collect())
}

pub fn realized_counts(support: &[usize], part: &PartitionSpec) -> Result<Vec<usize>> {
    let mut seen = vec![false; part.ground_size];
    let mut counts = vec![0; part.num_parts()];
    for &j in support {
        if j >= part.ground_size {
            return domain(format!("support index {j} outside ground set of size {}", part.ground_size));
        }
        if !seen[j] {
            seen[j] = true;
            counts[part.membership[j]] += 1;
        }
    }
    Ok(counts)
}

pub(crate) fn pinv(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone().pseudo_inverse(1e-12).map_err(|e| Error::Singular(e.to_string()))
}


#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn partition_basics() {
        let p = PartitionSpec::contiguous(&[10, 90], vec![0.7, 1.0 / 30.0]).unwrap();
        assert_eq!(p.ground_size, 100);
        assert_eq!(p.rho, vec![0.1, 0.9]);
        assert!((p.sigma() - 0.1).abs() < 1e-15);
        assert_eq!(p.counts(), vec![7, 3]);
        assert_eq!(p.expand(&[2.0, 3.0]).unwrap()[9..11], [2.0, 3.0]);
        assert!(PartitionSpec::new(vec![0, 2], vec![0.0, 0.0, 0.0]).is_err());
        assert!(PartitionSpec::new(vec![0, 0], vec![1.5]).is_err());
        assert!(PartitionSpec::with_counts(vec![0, 0, 1], &[3, 0]).is_err());
    }

    #[test]
    fn condition_numbers() {
        assert!((condition_number(&DMatrix::identity(5, 5)).unwrap() - 1.0).abs() < 1e-12);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0]));
        assert!((condition_number(&d).unwrap() - 3.0).abs() < 1e-12);
        assert!((condition_number(&(d * 7.5)).unwrap() - 3.0).abs() < 1e-12);
        let mut r = DMatrix::zeros(3, 2);
        r[(0, 0)] = 1.0;
        assert!(matches!(condition_number(&r), Err(Error::Singular(_))));
    }

    #[test]
    fn difference_operator_kappa_matches_closed_form() {
        // singular values of the path incidence matrix are 2 sin(πj/(2n)), j = 1..n-1
        let n = 10;
        let od = difference_operator(n).unwrap();
        let sv: Vec<f64> = (1..n).map(|j| 2.0 * (std::f64::consts::PI * j as f64 / (2.0 * n as f64)).sin()).collect();
        let oracle = sv.last().unwrap() / sv[0];
        assert!((condition_number(&od).unwrap() - oracle).abs() < 1e-8);
    }

    #[test]
    fn difference_operator_examples() {
        assert_eq!(difference_operator(2).unwrap(), DMatrix::from_row_slice(1, 2, &[1.0, -1.0]));
        let d4 = difference_operator(4).unwrap();
        assert_eq!(d4 * DVector::from_element(4, 5.0), DVector::zeros(3));
        let d5 = difference_operator(5).unwrap();
        let x = DVector::from_vec(vec![1.0, 1.0, 3.0, 3.0, 0.0]);
        // row-by-row product as the oracle
        let mut oracle = [0.0; 4];
        for i in 0..4 {
            for j in 0..5 {
                oracle[i] += d5[(i, j)] * x[j];
            }
        }
        assert_eq!((d5 * &x).as_slice(), &oracle);
        assert_eq!(oracle, [0.0, -2.0, 0.0, 3.0]);
        assert!(difference_operator(1).is_err());
    }

    #[test]
    fn dct_dictionary_properties() {
        let sq = dct_dictionary(16, 16).unwrap();
        assert!((sq.kappa - 1.0).abs() < 1e-8);
        let d = dct_dictionary(100, 90).unwrap();
        assert!((d.kappa - condition_number(&d.matrix).unwrap()).abs() < 1e-8);
        let pi = pinv(&d.matrix).unwrap();
        let id = &pi * &d.matrix;
        assert!((id - DMatrix::<f64>::identity(90, 90)).abs().max() < 1e-8);
        assert!(dct_dictionary(5, 6).is_err());
    }

    fn single(nd: usize) -> PartitionSpec {
        PartitionSpec::single(nd, 0.0).unwrap()
    }

    #[test]
    fn profile_of_constant_signal() {
        let p = gradient_support_profile(&[2.0; 7], &single(6)).unwrap();
        assert_eq!(p.set(TermClass::S6Bar), &[1]);
        assert_eq!(p.set(TermClass::S7Bar), &[6]);
        assert_eq!(p.set(TermClass::S5).len(), 5);
        assert_eq!((p.sigma1, p.sigma2, p.sigma3, p.sigma4), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(p.support_size, 0);
    }

    // classify each pair from scratch with 1-based indices
    fn brute_force(d: &[f64]) -> [Vec<usize>; 9] {
        let mut out: [Vec<usize>; 9] = Default::default();
        let nd = d.len();
        for i in 2..=nd {
            let (a, b) = (d[i - 1], d[i - 2]);
            let k = if a != 0.0 && b != 0.0 {
                if a * b > 0.0 {
                    0
                } else {
                    1
                }
            } else if a != 0.0 {
                2
            } else if b != 0.0 {
                3
            } else {
                4
            };
            out[k].push(i);
        }
        out[if d[0] != 0.0 { 5 } else { 6 }].push(1);
        out[if d[nd - 1] != 0.0 { 7 } else { 8 }].push(nd);
        out
    }

    #[test]
    fn profile_of_small_example() {
        let x = [1.0, 1.0, 3.0, 3.0, 0.0];
        let p = gradient_support_profile(&x, &single(4)).unwrap();
        assert_eq!(p.set(TermClass::S3), &[2, 4]);
        assert_eq!(p.set(TermClass::S4), &[3]);
        assert_eq!(p.set(TermClass::S7), &[4]);
        assert_eq!(p.set(TermClass::S6Bar), &[1]);
        assert!(p.set(TermClass::S1).is_empty() && p.set(TermClass::S2).is_empty() && p.set(TermClass::S5).is_empty());
        assert_eq!(p.sets, brute_force(&[0.0, -2.0, 0.0, 3.0]));
    }

    #[test]
    fn profile_of_monotone_signal() {
        let x: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let p = gradient_support_profile(&x, &single(7)).unwrap();
        assert_eq!(p.set(TermClass::S1), &[2, 3, 4, 5, 6, 7]);
        assert_eq!(p.set(TermClass::S6), &[1]);
        assert_eq!(p.set(TermClass::S7), &[7]);
        for c in [TermClass::S2, TermClass::S3, TermClass::S4, TermClass::S5] {
            assert!(p.set(c).is_empty());
        }
    }

    #[test]
    fn profile_random_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.random_range(2..30);
            let x: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.4) { rng.random_range(-2..3) as f64 } else { 0.0 }).collect();
            let l = rng.random_range(1..4).min(n - 1);
            let mut membership: Vec<usize> = (0..n - 1).map(|j| j % l).collect();
            for j in (1..membership.len()).rev() {
                membership.swap(j, rng.random_range(0..=j));
            }
            let part = PartitionSpec::new(membership, vec![0.5; l]).unwrap();
            let p = gradient_support_profile(&x, &part).unwrap();
            let d = apply_difference(&x);
            assert_eq!(p.sets, brute_force(&d));
            assert_eq!(p.num_terms(), n);
            let s = |c: TermClass| p.set(c).len();
            // s = |S1 ∪ S2 ∪ S3 ∪ S6|
            assert_eq!(p.support_size, s(TermClass::S1) + s(TermClass::S2) + s(TermClass::S3) + s(TermClass::S6));
            let support: Vec<usize> = (0..n - 1).filter(|&j| d[j] != 0.0).collect();
            assert_eq!(p.support_counts(), realized_counts(&support, &part).unwrap());
            for i in 0..l {
                let pair = p.alpha[i] + p.beta[i] + p.gamma[i] + p.varsigma[i] + p.zeta[i];
                assert!(pair <= 1.0 + 1e-12);
                assert!(p.alpha_p[i] <= p.alpha[i] && p.zeta_p[i] <= p.zeta[i]);
                assert!(p.xi[i] + p.xi_bar[i] <= 1.0 && p.xi_breve[i] + p.xi_bar_breve[i] <= 1.0);
            }
            assert_eq!(p, gradient_support_profile(&x, &part).unwrap());
        }
    }

    #[test]
    fn accuracies() {
        let part = PartitionSpec::contiguous(&[3, 4, 5], vec![0.0; 3]).unwrap();
        assert_eq!(realized_accuracies(&[], &part).unwrap(), vec![0.0; 3]);
        assert_eq!(realized_accuracies(&[0, 1, 2], &part).unwrap(), vec![1.0, 0.0, 0.0]);
        assert!(realized_accuracies(&[12], &part).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let support: Vec<usize> = (0..12).filter(|_| rng.random_bool(0.5)).collect();
        let a = realized_accuracies(&support, &part).unwrap();
        for i in 0..3 {
            let inter = part.members(i).iter().filter(|j| support.contains(j)).count();
            assert_eq!(a[i], inter as f64 / part.sizes()[i] as f64);
        }
        let total: f64 = part.rho.iter().zip(&a).map(|(r, a)| r * a).sum::<f64>() * 12.0;
        assert!((total - support.len() as f64).abs() < 1e-12);
    }
}
