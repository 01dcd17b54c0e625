//! Normalized measurement bounds `m̂` and their error-sandwich widths.

use std::io::Write;

use serde::Serialize;

use crate::error::{check_finite_nonneg, domain, Result};
use crate::kernels::{phi1_unchecked, phi_block_unchecked, phi_unchecked};
use crate::models::{condition_number, difference_operator, GradientProfile, PartitionSpec, TermClass};

fn check_weights(omega: &[f64], expected: usize) -> Result<()> {
    if omega.len() != expected {
        return domain(format!("expected {expected} weights, got {}", omega.len()));
    }
    for (i, &w) in omega.iter().enumerate() {
        check_finite_nonneg(&format!("omega[{i}]"), w)?;
    }
    Ok(())
}

/// `Σ ρ_i (α_i (t²ω_i² + 1) + (1 - α_i) φ(tω_i))`.
pub fn psi_entrywise(t: f64, part: &PartitionSpec, omega: &[f64]) -> Result<f64> {
    check_finite_nonneg("t", t)?;
    check_weights(omega, part.num_parts())?;
    Ok(psi_entrywise_unchecked(t, part, omega))
}

pub(crate) fn psi_entrywise_unchecked(t: f64, part: &PartitionSpec, omega: &[f64]) -> f64 {
    part.rho
        .iter()
        .zip(&part.alpha)
        .zip(omega)
        .map(|((&r, &a), &w)| {
            let v = t * w;
            let tail = if a < 1.0 { (1.0 - a) * phi_unchecked(v) } else { 0.0 };
            r * (a * (v * v + 1.0) + tail)
        })
        .sum()
}

/// `Σ ρ_i (α_i (k + t²ω_i²) + (1 - α_i) E(χ_k - tω_i)_+²)`.
pub fn psi_block(t: f64, part: &PartitionSpec, k: u32, omega: &[f64]) -> Result<f64> {
    check_finite_nonneg("t", t)?;
    if k == 0 {
        return domain("block length k must be at least 1");
    }
    check_weights(omega, part.num_parts())?;
    Ok(psi_block_unchecked(t, part, k, omega))
}

pub(crate) fn psi_block_unchecked(t: f64, part: &PartitionSpec, k: u32, omega: &[f64]) -> f64 {
    let kf = k as f64;
    part.rho
        .iter()
        .zip(&part.alpha)
        .zip(omega)
        .map(|((&r, &a), &w)| {
            let v = t * w;
            let tail = if a < 1.0 { (1.0 - a) * phi_block_unchecked(v, k) } else { 0.0 };
            r * (a * (kf + v * v) + tail)
        })
        .sum()
}

/// Expected value of one expansion term given the scaled weights of its own
/// index (`a`) and predecessor (`b`).
pub(crate) fn tv_term(class: TermClass, a: f64, b: f64) -> f64 {
    match class {
        TermClass::S1 => 1.0 + (a - b) * (a - b),
        TermClass::S2 => 1.0 + (a + b) * (a + b),
        TermClass::S3 => phi1_unchecked(a, b),
        TermClass::S4 => phi1_unchecked(b, a),
        TermClass::S5 => phi_unchecked(a + b),
        TermClass::S6 | TermClass::S7 => 1.0 + a * a,
        TermClass::S6Bar | TermClass::S7Bar => phi_unchecked(a),
    }
}

/// Weighted TV bound: the expectation of the `n`-term relaxed distance
/// divided by `n - 1`. Cross-set terms use the weight of each index's own set.
pub fn psi_tv(t: f64, profile: &GradientProfile, omega: &[f64]) -> Result<f64> {
    check_finite_nonneg("t", t)?;
    check_weights(omega, profile.num_parts)?;
    Ok(psi_tv_unchecked(t, profile, omega))
}

pub(crate) fn psi_tv_unchecked(t: f64, profile: &GradientProfile, omega: &[f64]) -> f64 {
    let sum: f64 = profile
        .terms
        .iter()
        .map(|term| term.count as f64 * tv_term(term.class, t * omega[term.part], t * omega[term.neighbor]))
        .sum();
    sum / (profile.n - 1) as f64
}

const INV_GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Minimizes a convex function of `t` on `[0, t_max]` by golden-section
/// search. Returns `(t_star, value)`.
pub fn minimize_over_t<F: Fn(f64) -> f64>(psi: F, t_max: f64) -> (f64, f64) {
    let (mut a, mut b) = (0.0, t_max);
    let mut c = b - INV_GOLDEN * (b - a);
    let mut d = a + INV_GOLDEN * (b - a);
    let mut fc = psi(c);
    let mut fd = psi(d);
    while b - a > 1e-11 * (1.0 + c.abs()) {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_GOLDEN * (b - a);
            fc = psi(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_GOLDEN * (b - a);
            fd = psi(d);
        }
    }
    let mut best = if fc <= fd { (c, fc) } else { (d, fd) };
    for t in [0.0, t_max] {
        let v = psi(t);
        if v < best.1 {
            best = (t, v);
        }
    }
    best
}

/// Upper end of the `t` search interval.
pub fn t_max(ground_size: usize, omega: &[f64]) -> f64 {
    let wmax = omega.iter().copied().fold(0.0, f64::max);
    // the optimum of Ψ sits near ν/ω, so rescale when the weights are not normalized
    10.0 * (ground_size as f64).sqrt() / if wmax > 0.0 { wmax.min(1.0) } else { 1.0 }
}

/// A model family together with the data its bound needs.
#[derive(Debug, Clone)]
pub enum ModelInstance {
    /// ℓ1-analysis with a dictionary of condition number `kappa`; `part` is over `[p]`.
    Entrywise { kappa: f64, part: PartitionSpec },
    /// block ℓ1,2 with block length `k`; `part` is over the `q` blocks.
    Block { k: u32, part: PartitionSpec },
    /// weighted TV; `kappa` is the condition number of the difference operator.
    Tv { kappa: f64, profile: GradientProfile },
}

impl ModelInstance {
    pub fn tv(profile: GradientProfile) -> Result<Self> {
        let kappa = condition_number(&difference_operator(profile.n)?)?;
        Ok(Self::Tv { kappa, profile })
    }

    pub fn num_parts(&self) -> usize {
        match self {
            Self::Entrywise { part, .. } | Self::Block { part, .. } => part.num_parts(),
            Self::Tv { profile, .. } => profile.num_parts,
        }
    }

    /// Size of the ground set the bound is normalized by (p, q, or n-1).
    pub fn ground_size(&self) -> usize {
        match self {
            Self::Entrywise { part, .. } | Self::Block { part, .. } => part.ground_size,
            Self::Tv { profile, .. } => profile.n - 1,
        }
    }

    /// Support size measured in the model's own units.
    pub fn support_size(&self) -> usize {
        match self {
            Self::Entrywise { part, .. } | Self::Block { part, .. } => part.counts().iter().sum(),
            Self::Tv { profile, .. } => profile.support_size,
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            Self::Entrywise { .. } => "entrywise",
            Self::Block { .. } => "block",
            Self::Tv { .. } => "tv",
        }
    }

    /// Ψ at `t` for the given per-set weights.
    pub fn psi(&self, t: f64, omega: &[f64]) -> Result<f64> {
        match self {
            Self::Entrywise { part, .. } => psi_entrywise(t, part, omega),
            Self::Block { k, part } => psi_block(t, part, *k, omega),
            Self::Tv { profile, .. } => psi_tv(t, profile, omega),
        }
    }

    pub(crate) fn psi_unchecked(&self, t: f64, omega: &[f64]) -> f64 {
        match self {
            Self::Entrywise { part, .. } => psi_entrywise_unchecked(t, part, omega),
            Self::Block { k, part } => psi_block_unchecked(t, part, *k, omega),
            Self::Tv { profile, .. } => psi_tv_unchecked(t, profile, omega),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Self::Entrywise { kappa, .. } | Self::Tv { kappa, .. } if !(kappa.is_finite() && *kappa >= 1.0 - 1e-12) => {
                domain(format!("condition number must be >= 1, got {kappa}"))
            }
            Self::Block { k: 0, .. } => domain("block length k must be at least 1"),
            Self::Tv { profile, .. } if profile.n < 2 => domain("TV model needs n >= 2"),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    /// normalized bound
    pub m_hat: f64,
    pub t_star: f64,
    /// `inf_t Ψ`
    pub psi_min: f64,
    pub sandwich_width: f64,
    /// factor turning `m_hat` into a measurement count (p, q or n-1)
    pub scale: f64,
}

impl BoundReport {
    /// The bound expressed as a number of measurements.
    pub fn measurements(&self) -> f64 {
        self.scale * self.m_hat
    }

    /// Measurements needed for success probability at least `1 - eta` with
    /// ambient dimension `n_amb`.
    pub fn raw_m(&self, eta: f64, n_amb: usize) -> Result<usize> {
        if !(eta > 0.0 && eta < 1.0) {
            return domain(format!("tolerance eta must lie in (0, 1), got {eta}"));
        }
        let extra = (8.0 * (4.0 / eta).ln() * n_amb as f64).sqrt();
        Ok((self.measurements() + extra).ceil() as usize)
    }
}

/// Normalized bound for `model` with optional per-set weights (unit weights
/// when `None`).
pub fn m_hat(model: &ModelInstance, weights: Option<&[f64]>) -> Result<BoundReport> {
    model.validate()?;
    let l = model.num_parts();
    let unit = vec![1.0; l];
    let omega = weights.unwrap_or(&unit);
    check_weights(omega, l)?;
    let g = model.ground_size();
    let (t_star, psi_min) = minimize_over_t(|t| model.psi_unchecked(t, omega), t_max(g, omega));
    let gf = g as f64;
    let s = model.support_size() as f64;
    let width_den = if weights.is_some() { gf * l as f64 } else { gf * s };
    let width_of = |num: f64| if width_den > 0.0 { num / width_den.sqrt() } else { f64::INFINITY };
    let (m_hat, sandwich_width) = match model {
        ModelInstance::Entrywise { kappa, .. } => {
            let k2 = kappa * kappa;
            (k2 * psi_min + 1.0 / gf, width_of(2.0 * k2))
        }
        ModelInstance::Block { .. } => (psi_min, width_of(2.0)),
        ModelInstance::Tv { kappa, .. } => (psi_min, width_of(2.0 * kappa)),
    };
    Ok(BoundReport {
        m_hat,
        t_star,
        psi_min,
        sandwich_width,
        scale: gf,
    })
}

/// `m̂(ω)` minus the sum of the bounds each set would give on its own. Zero
/// for the optimal weights of the entrywise and block models.
///
/// The per-set bound of `P_i` is `ρ_i inf_ν J_i(ν)` (times `κ²`, plus `1/p`
/// for the entrywise model), so the sum carries `L/p`, corrected by `(1-L)/p`.
pub fn additivity_gap(model: &ModelInstance, omega: &[f64]) -> Result<f64> {
    let report = m_hat(model, Some(omega))?;
    let per_set = |part: &PartitionSpec, term: &dyn Fn(f64, f64) -> f64| -> f64 {
        let cap = t_max(part.ground_size, &[1.0]);
        part.rho
            .iter()
            .zip(&part.alpha)
            .map(|(&r, &a)| r * minimize_over_t(|v| term(a, v), cap).1)
            .sum()
    };
    match model {
        ModelInstance::Entrywise { kappa, part } => {
            let p = part.ground_size as f64;
            let l = part.num_parts() as f64;
            let sum = kappa * kappa * per_set(part, &|a, v| a * (v * v + 1.0) + (1.0 - a) * phi_unchecked(v)) + l / p;
            Ok(report.m_hat - (sum + (1.0 - l) / p))
        }
        ModelInstance::Block { k, part } => {
            let kf = *k as f64;
            let sum = per_set(part, &|a, v| a * (kf + v * v) + (1.0 - a) * phi_block_unchecked(v, *k));
            Ok(report.m_hat - sum)
        }
        ModelInstance::Tv { .. } => domain("additivity is only exact for the entrywise and block models"),
    }
}

/// Unweighted single-set entrywise bound for an `s`-sparse vector in `R^p`.
pub fn entrywise_unweighted(s: usize, p: usize, kappa: f64) -> Result<BoundReport> {
    if s > p {
        return domain(format!("sparsity {s} exceeds p = {p}"));
    }
    let part = PartitionSpec::single(p, s as f64 / p as f64)?;
    m_hat(&ModelInstance::Entrywise { kappa, part }, None)
}

/// Unweighted single-set block bound for `s` active blocks out of `q`.
pub fn block_unweighted(s: usize, q: usize, k: u32) -> Result<BoundReport> {
    if s > q {
        return domain(format!("block sparsity {s} exceeds q = {q}"));
    }
    let part = PartitionSpec::single(q, s as f64 / q as f64)?;
    m_hat(&ModelInstance::Block { k, part }, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCurveRow {
    pub s: usize,
    pub m_hat: f64,
    pub width: f64,
    pub raw_m: usize,
}

pub fn write_bound_curve<W: Write>(out: W, rows: &[BoundCurveRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
