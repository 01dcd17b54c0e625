//! Experiment configuration and the phase-transition / weight-comparison runners.
//!
//! Every trial draws its instance from `cell_seed(seed, s, m, trial)`, so a
//! cell can be re-run on its own and results do not depend on scheduling.
//! Trials are evaluated on the current rayon pool and merged in grid order.

use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{block_unweighted, entrywise_unweighted, m_hat, BoundReport, ModelInstance};
use crate::error::{domain, Error, Result};
use crate::mc::{estimate_at, BlockPattern, McModel};
use crate::models::{dct_dictionary, gradient_support_profile, BlockStructure, Dictionary, PartitionSpec};
use crate::recovery::{
    is_success_with, solve_weighted_analysis_with, solve_weighted_block_with, solve_weighted_tv_with, RecoveryResult, SolverOptions,
    SUCCESS_TOL,
};
use crate::synth::{block_instance, cell_seed, entrywise_instance, gaussian_matrix, gradient_instance, shuffled_partition, InstanceSeed};
use crate::weights::{block_weights, entrywise_weights, tv_weights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DictionaryKind {
    Dct,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ModelConfig {
    Entrywise { n: usize, p: usize, dictionary: DictionaryKind },
    Block { q: usize, k: u32 },
    Tv { n: usize },
}

impl ModelConfig {
    pub fn family(&self) -> &'static str {
        match self {
            Self::Entrywise { .. } => "entrywise",
            Self::Block { .. } => "block",
            Self::Tv { .. } => "tv",
        }
    }

    /// Signal length.
    pub fn ambient(&self) -> usize {
        match *self {
            Self::Entrywise { n, .. } | Self::Tv { n } => n,
            Self::Block { q, k } => q * k as usize,
        }
    }

    /// Size of the set the partition lives on (p, q or n-1).
    pub fn ground(&self) -> usize {
        match *self {
            Self::Entrywise { p, .. } => p,
            Self::Block { q, .. } => q,
            Self::Tv { n } => n.saturating_sub(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    pub sizes: Vec<usize>,
    /// support count per set; takes precedence over `alpha`
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    /// randomly assign indices to sets instead of consecutive runs
    #[serde(default)]
    pub shuffle: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    Unit,
    /// one set of weights from the nominal accuracies
    #[default]
    Optimal,
    /// weights from each trial's realized support
    PerTrial,
}

fn default_success_tol() -> f64 {
    SUCCESS_TOL
}

fn default_max_iter() -> usize {
    SolverOptions::default().max_iter
}

fn default_eta() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub trials: usize,
    pub seed: u64,
    pub m_grid: Vec<usize>,
    /// sparsity levels of a phase grid
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub s_grid: Vec<usize>,
    #[serde(default = "default_success_tol")]
    pub success_tol: f64,
    #[serde(default)]
    pub weights: WeightMode,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// tolerance of the `raw_m` column in bound tables
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    pub model: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<PartitionConfig>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.m_grid.is_empty() {
            return bad("m_grid must not be empty".into());
        }
        if !(self.success_tol > 0.0 && self.success_tol.is_finite()) {
            return bad(format!("success_tol must be positive, got {}", self.success_tol));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return bad(format!("eta must lie in (0, 1), got {}", self.eta));
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1".into());
        }
        match self.model {
            ModelConfig::Entrywise { n, p, dictionary } => {
                if n == 0 || p < n {
                    return bad(format!("entrywise model needs 1 <= n <= p, got n = {n}, p = {p}"));
                }
                if dictionary == DictionaryKind::Identity && p != n {
                    return bad("identity dictionary needs p = n".into());
                }
            }
            ModelConfig::Block { q, k } if q == 0 || k == 0 => return bad("block model needs q, k >= 1".into()),
            ModelConfig::Tv { n } if n < 2 => return bad("tv model needs n >= 2".into()),
            _ => {}
        }
        let ground = self.model.ground();
        if let Some(&s) = self.s_grid.iter().find(|&&s| s > ground) {
            return bad(format!("sparsity {s} in s_grid exceeds {ground}"));
        }
        if let Some(part) = &self.partition {
            if part.sizes.iter().sum::<usize>() != ground {
                return bad(format!("partition sizes sum to {}, expected {ground}", part.sizes.iter().sum::<usize>()));
            }
            self.nominal_counts()?;
        }
        Ok(())
    }

    /// Support count per partition set.
    pub fn nominal_counts(&self) -> Result<Vec<usize>> {
        let part = self.partition.as_ref().ok_or_else(|| Error::Config("missing [partition] section".into()))?;
        let counts = match (&part.counts, &part.alpha) {
            (Some(c), _) => c.clone(),
            (None, Some(a)) => {
                if a.len() != part.sizes.len() {
                    return Err(Error::Config("partition.alpha and partition.sizes differ in length".into()));
                }
                part.sizes.iter().zip(a).map(|(&s, &a)| (a * s as f64).round() as usize).collect()
            }
            (None, None) => return Err(Error::Config("partition needs `counts` or `alpha`".into())),
        };
        if counts.len() != part.sizes.len() {
            return Err(Error::Config("partition.counts and partition.sizes differ in length".into()));
        }
        if let Some(i) = (0..counts.len()).find(|&i| counts[i] > part.sizes[i]) {
            return Err(Error::Config(format!("partition.counts[{i}] = {} exceeds set size {}", counts[i], part.sizes[i])));
        }
        if counts.iter().sum::<usize>() == 0 {
            return Err(Error::Config("partition has an empty support".into()));
        }
        Ok(counts)
    }

    /// The partition with accuracies `counts / sizes`.
    pub fn nominal_partition(&self) -> Result<PartitionSpec> {
        let part = self.partition.as_ref().ok_or_else(|| Error::Config("missing [partition] section".into()))?;
        let counts = self.nominal_counts()?;
        let alpha = counts.iter().zip(&part.sizes).map(|(&c, &s)| c as f64 / s as f64).collect();
        if part.shuffle {
            shuffled_partition(&part.sizes, alpha, self.seed)
        } else {
            PartitionSpec::contiguous(&part.sizes, alpha)
        }
    }

    fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            max_iter: self.max_iter,
            ..Default::default()
        }
    }
}

/// One row of the output grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub family: String,
    pub n: usize,
    pub p_or_q: usize,
    pub s: usize,
    pub m: usize,
    pub trials: usize,
    pub successes: usize,
    pub prob: f64,
    /// theory bound in measurements
    pub m_hat: f64,
    /// sandwich width in measurements
    pub width: f64,
    pub seed: u64,
    /// solves that hit the iteration cap (counted as failures)
    #[serde(skip)]
    pub nonconverged: usize,
    /// trials whose weights fell back to unit weights
    #[serde(skip)]
    pub weight_fallbacks: usize,
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GridResult {
    pub cells: Vec<CellResult>,
}

pub const CSV_HEADER: &str = "family,n,p_or_q,s,m,trials,successes,prob,m_hat,width,seed";

impl GridResult {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for c in &self.cells {
            w.serialize(c)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    /// Cells of one family, in grid order.
    pub fn family<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a CellResult> + 'a {
        self.cells.iter().filter(move |c| c.family == name)
    }

    /// Smallest `m` of a family/sparsity curve whose success rate reaches `level`.
    pub fn first_m_reaching(&self, family: &str, s: usize, level: f64) -> Option<usize> {
        self.family(family).filter(|c| c.s == s && c.prob >= level).map(|c| c.m).min()
    }

    /// `m` at which a family/sparsity curve crosses `level`, by linear
    /// interpolation between the last grid point below and the first at or
    /// above it.
    pub fn crossing(&self, family: &str, s: usize, level: f64) -> Option<f64> {
        let mut pts: Vec<(usize, f64)> = self.family(family).filter(|c| c.s == s).map(|c| (c.m, c.prob)).collect();
        pts.sort_by_key(|p| p.0);
        let hi = pts.iter().position(|p| p.1 >= level)?;
        if hi == 0 {
            return Some(pts[0].0 as f64);
        }
        let ((m0, p0), (m1, p1)) = (pts[hi - 1], pts[hi]);
        Some(m0 as f64 + (level - p0) / (p1 - p0) * (m1 - m0) as f64)
    }
}

fn dictionary(model: &ModelConfig) -> Result<Option<Dictionary>> {
    match *model {
        ModelConfig::Entrywise { n, p, dictionary } => Ok(Some(match dictionary {
            DictionaryKind::Dct => dct_dictionary(p, n)?,
            DictionaryKind::Identity => Dictionary::identity(n),
        })),
        _ => Ok(None),
    }
}

fn measure(a: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (a * DVector::from_column_slice(x)).as_slice().to_vec()
}

struct Instance {
    x: Vec<f64>,
    /// partition with the realized accuracies, for per-trial weights
    realized: Option<PartitionSpec>,
}

struct TrialOutcome {
    success: [bool; 2],
    nonconverged: usize,
    fallback: bool,
    /// per-trial theory values (unit, weighted) for TV
    tv_bounds: Option<(BoundReport, BoundReport)>,
}

fn solve(ctx: &Context, a: &DMatrix<f64>, b: &[f64], w: &[f64]) -> Result<RecoveryResult> {
    let opts = &ctx.solver;
    match &ctx.cfg.model {
        ModelConfig::Entrywise { .. } => {
            let dict = ctx.dict.as_ref().expect("entrywise dictionary");
            solve_weighted_analysis_with(a, b, &dict.matrix, w, opts)
        }
        ModelConfig::Block { q, k } => solve_weighted_block_with(a, b, &BlockStructure::new(*q, *k as usize)?, w, opts),
        ModelConfig::Tv { n } => solve_weighted_tv_with(a, b, *n, w, opts),
    }
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    dict: Option<Dictionary>,
    solver: SolverOptions,
}

impl Context<'_> {
    fn instance(&self, part: &PartitionSpec, seed: &InstanceSeed) -> Result<Instance> {
        Ok(match &self.cfg.model {
            ModelConfig::Entrywise { .. } => {
                let inst = entrywise_instance(self.dict.as_ref().expect("entrywise dictionary"), part, seed)?;
                let realized = part.with_alpha(inst.realized_alpha)?;
                Instance { x: inst.x, realized: Some(realized) }
            }
            ModelConfig::Block { q, k } => {
                let inst = block_instance(&BlockStructure::new(*q, *k as usize)?, part, seed)?;
                Instance { x: inst.x, realized: None }
            }
            ModelConfig::Tv { n } => {
                let inst = gradient_instance(*n, part, &part.counts(), seed)?;
                Instance { x: inst.x, realized: Some(part.clone()) }
            }
        })
    }
}

/// Unit-weight phase grid over `s_grid × m_grid`, with the single-set theory
/// curve attached.
pub fn run_phase_grid(cfg: &ExperimentConfig) -> Result<GridResult> {
    cfg.validate()?;
    if cfg.s_grid.is_empty() {
        return Err(Error::Config("phase grid needs a nonempty s_grid".into()));
    }
    let ctx = Context {
        cfg,
        dict: dictionary(&cfg.model)?,
        solver: cfg.solver_options(),
    };
    let ground = cfg.model.ground();
    let kappa = ctx.dict.as_ref().map_or(1.0, |d| d.kappa);
    let mut cells = Vec::new();
    for &s in &cfg.s_grid {
        let theory = match cfg.model {
            ModelConfig::Entrywise { .. } => entrywise_unweighted(s, ground, kappa)?,
            ModelConfig::Block { q, k } => block_unweighted(s, q, k)?,
            ModelConfig::Tv { .. } => return domain("phase grids are defined for the entrywise and block models"),
        };
        let part = PartitionSpec::single(ground, s as f64 / ground as f64)?;
        for &m in &cfg.m_grid {
            let start = Instant::now();
            let outcomes: Vec<Result<(bool, bool)>> = (0..cfg.trials as u64)
                .into_par_iter()
                .map(|trial| {
                    let seed = InstanceSeed::new(cell_seed(cfg.seed, s as u64, m as u64, trial), trial);
                    let inst = ctx.instance(&part, &seed)?;
                    if m == 0 {
                        return Ok((inst.x.iter().all(|v| *v == 0.0), false));
                    }
                    let a = gaussian_matrix(m, cfg.model.ambient(), &seed);
                    let r = solve(&ctx, &a, &measure(&a, &inst.x), &vec![1.0; ground])?;
                    Ok((r.converged && is_success_with(&r.x_hat, &inst.x, cfg.success_tol)?, !r.converged))
                })
                .collect();
            let mut successes = 0;
            let mut nonconverged = 0;
            for o in outcomes {
                let (ok, stalled) = o?;
                successes += usize::from(ok);
                nonconverged += usize::from(stalled);
            }
            cells.push(CellResult {
                family: cfg.model.family().to_string(),
                n: cfg.model.ambient(),
                p_or_q: ground,
                s,
                m,
                trials: cfg.trials,
                successes,
                prob: successes as f64 / cfg.trials as f64,
                m_hat: theory.measurements(),
                width: theory.scale * theory.sandwich_width,
                seed: cfg.seed,
                nonconverged,
                weight_fallbacks: 0,
                seconds: start.elapsed().as_secs_f64(),
            });
        }
    }
    Ok(GridResult { cells })
}

/// Optimal per-set weights for the nominal model of `cfg`, normalized to a
/// largest weight of 1. The TV weights are computed from the instance of
/// trial 0 since they depend on the jump pattern.
pub fn nominal_weights(cfg: &ExperimentConfig) -> Result<Vec<f64>> {
    let part = cfg.nominal_partition()?;
    Ok(match cfg.model {
        ModelConfig::Entrywise { .. } => entrywise_weights(&part.alpha)?.omega,
        ModelConfig::Block { k, .. } => block_weights(&part.alpha, k)?.omega,
        ModelConfig::Tv { n } => {
            let seed = InstanceSeed::new(cfg.seed, 0);
            let inst = gradient_instance(n, &part, &part.counts(), &seed)?;
            tv_weights(&gradient_support_profile(&inst.x, &part)?)?.omega
        }
    })
}

/// The nominal bound model of `cfg` (entrywise and block only).
pub fn nominal_model(cfg: &ExperimentConfig) -> Result<ModelInstance> {
    let part = cfg.nominal_partition()?;
    match cfg.model {
        ModelConfig::Entrywise { .. } => {
            let kappa = dictionary(&cfg.model)?.map_or(1.0, |d| d.kappa);
            Ok(ModelInstance::Entrywise { kappa, part })
        }
        ModelConfig::Block { k, .. } => Ok(ModelInstance::Block { k, part }),
        ModelConfig::Tv { n } => {
            let seed = InstanceSeed::new(cfg.seed, 0);
            let inst = gradient_instance(n, &part, &part.counts(), &seed)?;
            ModelInstance::tv(gradient_support_profile(&inst.x, &part)?)
        }
    }
}

fn tv_trial_weights(x: &[f64], part: &PartitionSpec) -> (Vec<f64>, bool, Option<(BoundReport, BoundReport)>) {
    let l = part.num_parts();
    let computed = gradient_support_profile(x, part).and_then(|profile| {
        let omega = tv_weights(&profile)?.omega;
        let model = ModelInstance::tv(profile)?;
        let unit = m_hat(&model, None)?;
        let weighted = m_hat(&model, Some(&omega))?;
        Ok((omega, unit, weighted))
    });
    match computed {
        Ok((omega, unit, weighted)) => (omega, false, Some((unit, weighted))),
        Err(_) => (vec![1.0; l], true, None),
    }
}

/// Unit versus optimally weighted recovery over `m_grid`. Both programs see
/// the same instance in every trial. Rows of the weighted program carry the
/// family name with a `_w` suffix.
pub fn run_weight_comparison(cfg: &ExperimentConfig) -> Result<GridResult> {
    cfg.validate()?;
    let part = cfg.nominal_partition()?;
    let ctx = Context {
        cfg,
        dict: dictionary(&cfg.model)?,
        solver: cfg.solver_options(),
    };
    let l = part.num_parts();
    let ground = cfg.model.ground();
    let s_total: usize = part.counts().iter().sum();
    let is_tv = matches!(cfg.model, ModelConfig::Tv { .. });
    let fixed_weights: Option<Vec<f64>> = match (cfg.weights, is_tv) {
        (WeightMode::Unit, _) => Some(vec![1.0; l]),
        (WeightMode::Optimal, false) => Some(nominal_weights(cfg)?),
        // TV weights depend on the jump pattern, so they are always per trial
        _ => None,
    };
    let (unit_theory, weighted_theory) = if is_tv {
        (None, None)
    } else {
        let model = nominal_model(cfg)?;
        let w = match &fixed_weights {
            Some(w) => w.clone(),
            None => nominal_weights(cfg)?,
        };
        (Some(m_hat(&model, None)?), Some(m_hat(&model, Some(&w))?))
    };
    let unit = vec![1.0; ground];
    let mut unit_cells = Vec::new();
    let mut weighted_cells = Vec::new();
    for &m in &cfg.m_grid {
        let start = Instant::now();
        let outcomes: Vec<Result<TrialOutcome>> = (0..cfg.trials as u64)
            .into_par_iter()
            .map(|trial| {
                let seed = InstanceSeed::new(cell_seed(cfg.seed, s_total as u64, m as u64, trial), trial);
                let inst = ctx.instance(&part, &seed)?;
                let (omega, fallback, tv_bounds) = match &fixed_weights {
                    Some(w) => (w.clone(), false, None),
                    None if is_tv => tv_trial_weights(&inst.x, &part),
                    None => {
                        let realized = inst.realized.as_ref().unwrap_or(&part);
                        let w = match cfg.model {
                            ModelConfig::Block { k, .. } => block_weights(&realized.alpha, k),
                            _ => entrywise_weights(&realized.alpha),
                        };
                        match w {
                            Ok(w) => (w.omega, false, None),
                            Err(_) => (vec![1.0; l], true, None),
                        }
                    }
                };
                if m == 0 {
                    let zero = inst.x.iter().all(|v| *v == 0.0);
                    return Ok(TrialOutcome { success: [zero, zero], nonconverged: 0, fallback, tv_bounds });
                }
                let a = gaussian_matrix(m, cfg.model.ambient(), &seed);
                let b = measure(&a, &inst.x);
                let mut success = [false; 2];
                let mut nonconverged = 0;
                for (slot, w) in [unit.clone(), part.expand(&omega)?].iter().enumerate() {
                    let r = solve(&ctx, &a, &b, w)?;
                    nonconverged += usize::from(!r.converged);
                    success[slot] = r.converged && is_success_with(&r.x_hat, &inst.x, cfg.success_tol)?;
                }
                Ok(TrialOutcome { success, nonconverged, fallback, tv_bounds })
            })
            .collect();
        let mut wins = [0usize; 2];
        let mut nonconverged = 0;
        let mut fallbacks = 0;
        let mut tv_sum = [(0.0, 0.0); 2];
        let mut tv_count = 0usize;
        for o in outcomes {
            let o = o?;
            wins[0] += usize::from(o.success[0]);
            wins[1] += usize::from(o.success[1]);
            nonconverged += o.nonconverged;
            fallbacks += usize::from(o.fallback);
            if let Some((u, w)) = o.tv_bounds {
                tv_sum[0].0 += u.measurements();
                tv_sum[0].1 += u.scale * u.sandwich_width;
                tv_sum[1].0 += w.measurements();
                tv_sum[1].1 += w.scale * w.sandwich_width;
                tv_count += 1;
            }
        }
        let theory = |slot: usize, report: &Option<BoundReport>| -> (f64, f64) {
            match report {
                Some(r) => (r.measurements(), r.scale * r.sandwich_width),
                None if tv_count > 0 => (tv_sum[slot].0 / tv_count as f64, tv_sum[slot].1 / tv_count as f64),
                None => (f64::NAN, f64::NAN),
            }
        };
        let seconds = start.elapsed().as_secs_f64();
        for (slot, (cells, theory_report, suffix)) in
            [(&mut unit_cells, &unit_theory, ""), (&mut weighted_cells, &weighted_theory, "_w")].into_iter().enumerate()
        {
            let (mh, width) = theory(slot, theory_report);
            cells.push(CellResult {
                family: format!("{}{suffix}", cfg.model.family()),
                n: cfg.model.ambient(),
                p_or_q: ground,
                s: s_total,
                m,
                trials: cfg.trials,
                successes: wins[slot],
                prob: wins[slot] as f64 / cfg.trials as f64,
                m_hat: mh,
                width,
                seed: cfg.seed,
                nonconverged,
                weight_fallbacks: if slot == 1 { fallbacks } else { 0 },
                seconds,
            });
        }
    }
    unit_cells.extend(weighted_cells);
    Ok(GridResult { cells: unit_cells })
}

/// Ψ versus its Monte Carlo estimate at one `(t, ω)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McCheckRow {
    pub family: String,
    pub setting: usize,
    pub t: f64,
    pub weights: String,
    pub psi: f64,
    pub mc_mean: f64,
    pub std_error: f64,
    pub z_score: f64,
    pub pass: bool,
}

/// Compares `Ψ` with a Monte Carlo mean at `settings` random `(t, ω)` pairs
/// for the nominal model of `cfg`. A row passes when the two agree within
/// three standard errors.
pub fn mc_check(cfg: &ExperimentConfig, settings: usize, samples: usize) -> Result<Vec<McCheckRow>> {
    cfg.validate()?;
    let part = cfg.nominal_partition()?;
    let seed = InstanceSeed::new(cfg.seed, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(crate::synth::hash_words(&[cfg.seed, 0x6d63]));
    // Ψ depends only on the support pattern, so a signal realizing the nominal
    // counts with identity analysis is enough
    let (model, mc_of): (ModelInstance, Box<dyn Fn(Vec<f64>) -> Result<McModel>>) = match cfg.model {
        ModelConfig::Entrywise { p, .. } => {
            let inst = entrywise_instance(&Dictionary::identity(p), &part, &seed)?;
            let signs: Vec<i8> = inst.coeffs.iter().map(|c| if *c > 0.0 { 1 } else if *c < 0.0 { -1 } else { 0 }).collect();
            (ModelInstance::Entrywise { kappa: 1.0, part: part.clone() }, Box::new(move |w| Ok(McModel::Entrywise { signs: signs.clone(), w })))
        }
        ModelConfig::Block { q, k } => {
            let blocks = BlockStructure::new(q, k as usize)?;
            let inst = block_instance(&blocks, &part, &seed)?;
            let pattern = BlockPattern::from_signal(blocks, &inst.x)?;
            (ModelInstance::Block { k, part: part.clone() }, Box::new(move |w| Ok(McModel::Block { pattern: pattern.clone(), w })))
        }
        ModelConfig::Tv { n } => {
            let inst = gradient_instance(n, &part, &part.counts(), &seed)?;
            let model = ModelInstance::tv(gradient_support_profile(&inst.x, &part)?)?;
            (model, Box::new(move |w| Ok(McModel::tv_from_signal(&inst.x, w))))
        }
    };
    let mut rows = Vec::with_capacity(settings);
    for setting in 0..settings {
        let t = rng.random_range(0.2..3.0);
        let omega: Vec<f64> = (0..part.num_parts()).map(|_| rng.random_range(0.2..2.0)).collect();
        let psi = model.psi(t, &omega)?;
        let est = estimate_at(&mc_of(part.expand(&omega)?)?, t, samples, crate::synth::hash_words(&[cfg.seed, setting as u64]))?;
        let z = (est.mean - psi) / est.std_error;
        rows.push(McCheckRow {
            family: cfg.model.family().to_string(),
            setting,
            t,
            weights: omega.iter().map(|w| format!("{w:.4}")).collect::<Vec<_>>().join(";"),
            psi,
            mc_mean: est.mean,
            std_error: est.std_error,
            z_score: z,
            pass: z.abs() <= 3.0,
        });
    }
    Ok(rows)
}
