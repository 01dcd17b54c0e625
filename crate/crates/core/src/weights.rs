//! Optimal per-set weights.
//!
//! The weights minimize `J(ν) = Ψ_{1,ν}`. In the entrywise and block models
//! `J` separates over sets and each coordinate solves a scalar equation; the
//! TV model couples neighbouring sets and is solved by damped Newton.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::bounds::psi_tv_unchecked;
use crate::error::{domain, Error, Result};
use crate::kernels::{phi1_grad_unchecked, phi_block_prime_unchecked, phi_prime_unchecked};
use crate::models::{GradientProfile, TermClass};

/// How the quadratic term of `J` is differentiated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum GradientConvention {
    /// `2αν + (1-α)φ'(ν) = 0`, the true stationarity condition of `J`.
    #[default]
    Exact,
    /// `αν + (1-α)φ'(ν) = 0`, with the factor 2 dropped.
    Halved,
}

impl GradientConvention {
    fn factor(self) -> f64 {
        match self {
            Self::Exact => 2.0,
            Self::Halved => 1.0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct WeightOptions {
    pub convention: GradientConvention,
    /// Initial point. The scalar solvers grow their bracket from it; the TV
    /// solver runs a single Newton start from it instead of the default three.
    pub start: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightSolution {
    /// scaled weights
    pub omega: Vec<f64>,
    /// unscaled minimizer `ν*` of `J`
    pub raw: Vec<f64>,
    /// max absolute stationarity residual at `raw`
    pub residual: f64,
    /// whether a rescaling was applied (last component 1 for the entrywise
    /// and block models, largest component 1 for TV)
    pub normalized: bool,
}

const ROOT_TOL: f64 = 1e-12;

fn check_alpha(alpha: &[f64]) -> Result<()> {
    if alpha.is_empty() {
        return domain("need at least one accuracy");
    }
    for (i, &a) in alpha.iter().enumerate() {
        if !(0.0..=1.0).contains(&a) || a.is_nan() {
            return domain(format!("accuracy alpha[{i}] = {a} not in (0, 1]"));
        }
        if a == 0.0 {
            return Err(Error::UnboundedWeight { partition: i });
        }
    }
    Ok(())
}

/// Root of an increasing function with `h(0) < 0`, bracketed outward from
/// `start` and refined by Illinois-style false position with bisection
/// safeguards. Returns `(root, |h(root)|)`.
fn increasing_root<H: Fn(f64) -> f64>(h: H, start: f64) -> (f64, f64) {
    let mut hi = if start > 0.0 { start } else { 8.0 };
    let mut h_hi = h(hi);
    let mut lo = hi;
    let mut h_lo = h_hi;
    while h_hi < 0.0 {
        lo = hi;
        h_lo = h_hi;
        hi *= 2.0;
        h_hi = h(hi);
    }
    if h_lo >= 0.0 {
        lo = hi;
        while lo > 1e-300 {
            lo *= 0.5;
            h_lo = h(lo);
            if h_lo < 0.0 {
                break;
            }
            hi = lo;
            h_hi = h_lo;
        }
        if h_lo >= 0.0 {
            return (0.0, h(0.0).abs());
        }
    }
    let mut best = if h_lo.abs() < h_hi.abs() { (lo, h_lo) } else { (hi, h_hi) };
    let mut side = 0i8;
    for _ in 0..200 {
        if best.1.abs() <= ROOT_TOL || hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        let mut x = (lo * h_hi - hi * h_lo) / (h_hi - h_lo);
        if !(x > lo && x < hi) || (hi - lo) < 1e-3 * (x - lo).min(hi - x).abs() {
            x = 0.5 * (lo + hi);
        }
        let hx = h(x);
        if hx.abs() < best.1.abs() {
            best = (x, hx);
        }
        if hx < 0.0 {
            lo = x;
            h_lo = hx;
            if side == -1 {
                h_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = x;
            h_hi = hx;
            if side == 1 {
                h_lo *= 0.5;
            }
            side = 1;
        }
    }
    (best.0, best.1.abs())
}

fn scalar_weights<D: Fn(f64) -> f64>(alpha: &[f64], opts: &WeightOptions, deriv: D) -> Result<WeightSolution> {
    check_alpha(alpha)?;
    if let Some(s) = &opts.start {
        if s.len() != alpha.len() || s.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return domain("start must be a positive vector of the same length as alpha");
        }
    }
    let c = opts.convention.factor();
    let mut raw = Vec::with_capacity(alpha.len());
    let mut residual: f64 = 0.0;
    for (i, &a) in alpha.iter().enumerate() {
        if a == 1.0 {
            raw.push(0.0);
            continue;
        }
        let start = opts.start.as_ref().map_or(8.0, |s| s[i]);
        let (root, res) = increasing_root(|v| c * a * v + (1.0 - a) * deriv(v), start);
        raw.push(root);
        residual = residual.max(res);
    }
    let last = *raw.last().expect("nonempty");
    let max = raw.iter().copied().fold(0.0, f64::max);
    // if the last set is fully accurate its weight is 0; fall back to the largest
    let scale = if last > 0.0 { last } else { max };
    let (omega, normalized) = if scale > 0.0 {
        (raw.iter().map(|v| v / scale).collect(), true)
    } else {
        (raw.clone(), false)
    };
    Ok(WeightSolution {
        omega,
        raw,
        residual,
        normalized,
    })
}

/// Optimal weights for weighted ℓ1-analysis, one per accuracy.
pub fn entrywise_weights(alpha: &[f64]) -> Result<WeightSolution> {
    entrywise_weights_with(alpha, &WeightOptions::default())
}

pub fn entrywise_weights_with(alpha: &[f64], opts: &WeightOptions) -> Result<WeightSolution> {
    scalar_weights(alpha, opts, phi_prime_unchecked)
}

/// Optimal weights for weighted block ℓ1,2 with block length `k`.
pub fn block_weights(alpha: &[f64], k: u32) -> Result<WeightSolution> {
    block_weights_with(alpha, k, &WeightOptions::default())
}

pub fn block_weights_with(alpha: &[f64], k: u32, opts: &WeightOptions) -> Result<WeightSolution> {
    if k == 0 {
        return domain("block length k must be at least 1");
    }
    scalar_weights(alpha, opts, |v| phi_block_prime_unchecked(v, k))
}

/// `J_TV(ν) = Ψ_TV` at `t = 1` with weights `ν`.
pub fn tv_objective(profile: &GradientProfile, nu: &[f64]) -> Result<f64> {
    crate::bounds::psi_tv(1.0, profile, nu)
}

/// Exact gradient of [`tv_objective`].
pub fn tv_gradient(profile: &GradientProfile, nu: &[f64]) -> Result<Vec<f64>> {
    if nu.len() != profile.num_parts {
        return domain(format!("expected {} weights, got {}", profile.num_parts, nu.len()));
    }
    if nu.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return domain("weights must be finite and nonnegative");
    }
    Ok(tv_gradient_unchecked(profile, nu, GradientConvention::Exact))
}

fn tv_gradient_unchecked(profile: &GradientProfile, nu: &[f64], conv: GradientConvention) -> Vec<f64> {
    let c = conv.factor();
    let mut g = vec![0.0; nu.len()];
    for term in &profile.terms {
        let a = nu[term.part];
        let b = nu[term.neighbor];
        let (da, db) = match term.class {
            TermClass::S1 => (c * (a - b), -c * (a - b)),
            TermClass::S2 => (c * (a + b), c * (a + b)),
            TermClass::S3 => phi1_grad_unchecked(a, b),
            TermClass::S4 => {
                let (d1, d2) = phi1_grad_unchecked(b, a);
                (d2, d1)
            }
            TermClass::S5 => {
                let d = phi_prime_unchecked(a + b);
                (d, d)
            }
            TermClass::S6 | TermClass::S7 => (c * a, 0.0),
            TermClass::S6Bar | TermClass::S7Bar => (phi_prime_unchecked(a), 0.0),
        };
        let w = term.count as f64;
        g[term.part] += w * da;
        g[term.neighbor] += w * db;
    }
    let nm1 = (profile.n - 1) as f64;
    g.iter_mut().for_each(|v| *v /= nm1);
    g
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

const NEWTON_MAX_ITER: usize = 200;
const NEWTON_TOL: f64 = 1e-11;

/// Damped Newton on the coordinates marked `free`; the others stay at 0.
fn tv_newton(profile: &GradientProfile, start: &[f64], free: &[bool], conv: GradientConvention) -> (Vec<f64>, f64) {
    let idx: Vec<usize> = (0..start.len()).filter(|&i| free[i]).collect();
    let grad = |x: &[f64]| {
        let g = tv_gradient_unchecked(profile, x, conv);
        idx.iter().map(|&i| g[i]).collect::<Vec<f64>>()
    };
    let mut x: Vec<f64> = start.iter().zip(free).map(|(v, &f)| if f { *v } else { 0.0 }).collect();
    let mut g = grad(&x);
    let mut r = inf_norm(&g);
    let l = idx.len();
    for _ in 0..NEWTON_MAX_ITER {
        if r <= NEWTON_TOL {
            break;
        }
        let mut hess = DMatrix::zeros(l, l);
        for (jj, &j) in idx.iter().enumerate() {
            let h = 1e-6 * x[j].max(1e-2);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] = (xm[j] - h).max(0.0);
            let step = xp[j] - xm[j];
            let gp = grad(&xp);
            let gm = grad(&xm);
            for ii in 0..l {
                hess[(ii, jj)] = (gp[ii] - gm[ii]) / step;
            }
        }
        let hess = 0.5 * (&hess + hess.transpose());
        let rhs = -DVector::from_column_slice(&g);
        let dir = hess.clone().lu().solve(&rhs).filter(|d| d.dot(&rhs) > 0.0).unwrap_or(rhs);
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let mut trial = x.clone();
            for (k, &i) in idx.iter().enumerate() {
                trial[i] += lambda * dir[k];
            }
            if idx.iter().all(|&i| trial[i] > 0.0) {
                let gt = grad(&trial);
                let rt = inf_norm(&gt);
                if rt < r {
                    x = trial;
                    g = gt;
                    r = rt;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (x, r)
}

const ACCEPT_TOL: f64 = 1e-10;

/// Minimizer of `J` over `ν ≥ 0` from one start. Interior Newton first; if
/// that stalls, every face `{ν_Z = 0}` is tried and a point satisfying the
/// bound-constrained optimality conditions (zero gradient on the free
/// coordinates, nonnegative gradient on `Z`) is returned.
fn tv_minimize(profile: &GradientProfile, start: &[f64], conv: GradientConvention) -> Result<(Vec<f64>, f64)> {
    let l = start.len();
    let (x, r) = tv_newton(profile, start, &vec![true; l], conv);
    if r <= ACCEPT_TOL {
        return Ok((x, r));
    }
    if let Some(i) = unbounded_direction(profile, &x) {
        return Err(Error::UnboundedWeight { partition: i });
    }
    let mut faces: Vec<u32> = (1..(1u32 << l) - 1).collect();
    faces.sort_by_key(|z| z.count_ones());
    for z in faces {
        let free: Vec<bool> = (0..l).map(|i| z & (1 << i) == 0).collect();
        let (y, ry) = tv_newton(profile, start, &free, conv);
        if ry > ACCEPT_TOL {
            continue;
        }
        let g = tv_gradient_unchecked(profile, &y, conv);
        if (0..l).all(|i| free[i] || g[i] >= -ACCEPT_TOL) {
            return Ok((y, ry));
        }
    }
    Err(Error::NoConvergence {
        iterations: NEWTON_MAX_ITER,
        residual: r,
        best: x,
    })
}

/// Sets whose weight can grow without bound while `J` keeps decreasing. This
/// happens when every support term of a set is an isolated jump next to
/// indices of the same set: those terms stay bounded as the weight grows.
fn unbounded_direction(profile: &GradientProfile, x: &[f64]) -> Option<usize> {
    let j = |v: &[f64]| psi_tv_unchecked(1.0, profile, v);
    let top = x.iter().copied().fold(0.0f64, f64::max).max(1e-3);
    (0..x.len()).find(|&i| {
        let mut y = x.to_vec();
        y[i] = y[i].max(top);
        let mut prev = j(&y);
        for _ in 0..12 {
            y[i] *= 2.0;
            let cur = j(&y);
            if cur > prev + 1e-12 * (1.0 + prev.abs()) {
                return false;
            }
            prev = cur;
        }
        true
    })
}

fn normalize_max(raw: &[f64]) -> Vec<f64> {
    let max = raw.iter().copied().fold(0.0, f64::max);
    raw.iter().map(|v| v / max).collect()
}

/// Optimal TV weights from multistart damped Newton. A set may get weight 0
/// when the minimizer lies on the boundary of the nonnegative orthant.
pub fn tv_weights(profile: &GradientProfile) -> Result<WeightSolution> {
    tv_weights_with(profile, &WeightOptions::default())
}

pub fn tv_weights_with(profile: &GradientProfile, opts: &WeightOptions) -> Result<WeightSolution> {
    let l = profile.num_parts;
    if let Some(i) = profile.support_counts().iter().position(|&c| c == 0) {
        return Err(Error::UnboundedWeight { partition: i });
    }
    let starts: Vec<Vec<f64>> = match &opts.start {
        Some(s) => {
            if s.len() != l || s.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return domain("start must be a positive vector with one entry per set");
            }
            vec![s.clone()]
        }
        None => [0.1, 1.0, 5.0].iter().map(|&c| vec![c; l]).collect(),
    };
    let mut sols = Vec::with_capacity(starts.len());
    for s in &starts {
        let (x, r) = tv_minimize(profile, s, opts.convention)?;
        // the gradient decays exponentially along a flat direction, so a
        // small residual alone does not certify a minimizer
        // with one set the bound is scale invariant, so any weight is optimal
        if l > 1 {
            if let Some(i) = unbounded_direction(profile, &x) {
                return Err(Error::UnboundedWeight { partition: i });
            }
        }
        sols.push((x, r));
    }
    let objective = |x: &[f64]| psi_tv_unchecked(1.0, profile, x);
    let (raw, residual) = sols
        .iter()
        .min_by(|a, b| objective(&a.0).total_cmp(&objective(&b.0)))
        .cloned()
        .expect("at least one start");
    let omega = normalize_max(&raw);
    let best = objective(&raw);
    for (other, _) in &sols {
        let o = normalize_max(other);
        let spread = o.iter().zip(&omega).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        // a nearly flat valley lets starts stop at different points of equal value
        let flat = objective(other) - best <= 1e-10 * (1.0 + best);
        if spread > 1e-6 && !flat {
            return Err(Error::NoConvergence {
                iterations: NEWTON_MAX_ITER,
                residual: spread,
                best: raw,
            });
        }
    }
    debug_assert!(psi_tv_unchecked(1.0, profile, &raw).is_finite());
    Ok(WeightSolution {
        omega,
        raw,
        residual,
        normalized: true,
    })
}
