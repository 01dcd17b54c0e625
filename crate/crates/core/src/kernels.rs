//! Gaussian tail integrals.
//!
//! * `phi(z)        = E(|g| - z)_+^2`
//! * `phi_block(z,k) = E(chi_k - z)_+^2`
//! * `phi1(a, b)    = E(|g - a| - b)_+^2`
//!
//! with `g ~ N(0,1)` and `chi_k` the norm of a standard Gaussian in `R^k`.
//! `phi2` is the same function as `phi`.

use std::f64::consts::{FRAC_2_PI, PI, SQRT_2};

use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{check_finite_nonneg, domain, Result};
use crate::quadrature::{integrate, integrate_with_breaks};

/// Integration length beyond the lower limit; the Gaussian tail past it is below e^-800.
const TAIL: f64 = 40.0;

/// Beyond this point the erfc closed forms lose relative accuracy to cancellation.
const CLOSED_FORM_LIMIT: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelEval {
    pub value: f64,
    pub abs_err_bound: f64,
}

fn closed(value: f64) -> KernelEval {
    KernelEval {
        value,
        abs_err_bound: 8.0 * f64::EPSILON * (1.0 + value.abs()),
    }
}

fn quad((value, err): (f64, f64)) -> KernelEval {
    KernelEval {
        value,
        abs_err_bound: err,
    }
}

pub(crate) fn phi_eval_unchecked(z: f64) -> KernelEval {
    if z < CLOSED_FORM_LIMIT {
        let v = (1.0 + z * z) * erfc(z / SQRT_2) - z * FRAC_2_PI.sqrt() * (-0.5 * z * z).exp();
        closed(v.max(0.0))
    } else {
        // u = z + v keeps the integrand free of cancellation
        let scale = FRAC_2_PI.sqrt() * (-0.5 * z * z).exp();
        if scale == 0.0 {
            return closed(0.0);
        }
        let (v, e) = integrate(|v| v * v * (-z * v - 0.5 * v * v).exp(), 0.0, TAIL);
        quad((scale * v, scale * e))
    }
}

pub(crate) fn phi_prime_eval_unchecked(z: f64) -> KernelEval {
    if z < CLOSED_FORM_LIMIT {
        let v = -2.0 * (FRAC_2_PI.sqrt() * (-0.5 * z * z).exp() - z * erfc(z / SQRT_2));
        closed(v.min(0.0))
    } else {
        let scale = 2.0 * FRAC_2_PI.sqrt() * (-0.5 * z * z).exp();
        if scale == 0.0 {
            return closed(0.0);
        }
        let (v, e) = integrate(|v| v * (-z * v - 0.5 * v * v).exp(), 0.0, TAIL);
        quad((-scale * v, scale * e))
    }
}

#[inline]
pub(crate) fn phi_unchecked(z: f64) -> f64 {
    phi_eval_unchecked(z).value
}

#[inline]
pub(crate) fn phi_prime_unchecked(z: f64) -> f64 {
    phi_prime_eval_unchecked(z).value
}

/// `ln(2^{k/2-1} Γ(k/2))`, the log normaliser of the chi density.
fn chi_log_norm(k: u32) -> f64 {
    let h = 0.5 * k as f64;
    (h - 1.0) * std::f64::consts::LN_2 + ln_gamma(h)
}

fn chi_limits(z: f64, k: u32) -> (f64, f64, f64) {
    let mode = ((k as f64) - 1.0).max(0.0).sqrt();
    (z, z.max(mode) + TAIL, mode)
}

/// `c_k ∫_z^∞ (u - z)^power u^{k-1} e^{-u²/2} du` evaluated in log space.
fn chi_moment(z: f64, k: u32, power: i32) -> KernelEval {
    let ln_norm = chi_log_norm(k);
    let km1 = (k - 1) as f64;
    let integrand = |u: f64| {
        let d = u - z;
        if d <= 0.0 {
            return 0.0;
        }
        let mut l = power as f64 * d.ln() - 0.5 * u * u - ln_norm;
        if k > 1 {
            l += km1 * u.ln();
        }
        l.exp()
    };
    let (lo, hi, mode) = chi_limits(z, k);
    quad(integrate_with_breaks(integrand, lo, hi, &[mode, mode + 4.0]))
}

pub(crate) fn phi_block_eval_unchecked(z: f64, k: u32) -> KernelEval {
    if k == 1 {
        return phi_eval_unchecked(z);
    }
    chi_moment(z, k, 2)
}

pub(crate) fn phi_block_prime_eval_unchecked(z: f64, k: u32) -> KernelEval {
    if k == 1 {
        return phi_prime_eval_unchecked(z);
    }
    let m = chi_moment(z, k, 1);
    KernelEval {
        value: -2.0 * m.value,
        abs_err_bound: 2.0 * m.abs_err_bound,
    }
}

#[inline]
pub(crate) fn phi_block_unchecked(z: f64, k: u32) -> f64 {
    phi_block_eval_unchecked(z, k).value
}

#[inline]
pub(crate) fn phi_block_prime_unchecked(z: f64, k: u32) -> f64 {
    phi_block_prime_eval_unchecked(z, k).value
}

fn folded_kernel(u: f64, a: f64) -> (f64, f64) {
    let e1 = (-0.5 * (u - a) * (u - a)).exp();
    let e2 = (-0.5 * (u + a) * (u + a)).exp();
    (e1 + e2, (u - a) * e1 - (u + a) * e2)
}

pub(crate) fn phi1_eval_unchecked(a: f64, b: f64) -> KernelEval {
    let c = 1.0 / (2.0 * PI).sqrt();
    let hi = a.max(b) + TAIL;
    let (v, e) = integrate_with_breaks(
        |u| {
            let d = u - b;
            c * d * d * folded_kernel(u, a).0
        },
        b,
        hi,
        &[a],
    );
    quad((v, e))
}

pub(crate) fn phi1_grad_unchecked(a: f64, b: f64) -> (f64, f64) {
    let c = 1.0 / (2.0 * PI).sqrt();
    let hi = a.max(b) + TAIL;
    let (da, _) = integrate_with_breaks(
        |u| {
            let d = u - b;
            c * d * d * folded_kernel(u, a).1
        },
        b,
        hi,
        &[a],
    );
    let (db, _) = integrate_with_breaks(|u| -2.0 * c * (u - b) * folded_kernel(u, a).0, b, hi, &[a]);
    (da, db)
}

#[inline]
pub(crate) fn phi1_unchecked(a: f64, b: f64) -> f64 {
    phi1_eval_unchecked(a, b).value
}

fn check_k(k: u32) -> Result<()> {
    if k == 0 {
        return domain("block length k must be at least 1");
    }
    Ok(())
}

/// `E(|g| - z)_+^2` together with its error estimate.
pub fn phi_eval(z: f64) -> Result<KernelEval> {
    check_finite_nonneg("z", z)?;
    Ok(phi_eval_unchecked(z))
}

pub fn phi(z: f64) -> Result<f64> {
    phi_eval(z).map(|e| e.value)
}

/// Same function as [`phi`].
pub fn phi2(z: f64) -> Result<f64> {
    phi(z)
}

pub fn phi_prime_eval(z: f64) -> Result<KernelEval> {
    check_finite_nonneg("z", z)?;
    Ok(phi_prime_eval_unchecked(z))
}

/// `dφ/dz = -2 E(|g| - z)_+`.
pub fn phi_prime(z: f64) -> Result<f64> {
    phi_prime_eval(z).map(|e| e.value)
}

pub fn phi_block_eval(z: f64, k: u32) -> Result<KernelEval> {
    check_finite_nonneg("z", z)?;
    check_k(k)?;
    Ok(phi_block_eval_unchecked(z, k))
}

/// `E(chi_k - z)_+^2`. This already includes the `1/(2^{k/2-1} Γ(k/2))` factor.
pub fn phi_block(z: f64, k: u32) -> Result<f64> {
    phi_block_eval(z, k).map(|e| e.value)
}

pub fn phi_block_prime_eval(z: f64, k: u32) -> Result<KernelEval> {
    check_finite_nonneg("z", z)?;
    check_k(k)?;
    Ok(phi_block_prime_eval_unchecked(z, k))
}

pub fn phi_block_prime(z: f64, k: u32) -> Result<f64> {
    phi_block_prime_eval(z, k).map(|e| e.value)
}

pub fn phi1_eval(a: f64, b: f64) -> Result<KernelEval> {
    check_finite_nonneg("a", a)?;
    check_finite_nonneg("b", b)?;
    Ok(phi1_eval_unchecked(a, b))
}

/// `E(|g - a| - b)_+^2`.
pub fn phi1(a: f64, b: f64) -> Result<f64> {
    phi1_eval(a, b).map(|e| e.value)
}

/// Partial derivatives `(∂φ1/∂a, ∂φ1/∂b)`.
pub fn phi1_grad(a: f64, b: f64) -> Result<(f64, f64)> {
    check_finite_nonneg("a", a)?;
    check_finite_nonneg("b", b)?;
    Ok(phi1_grad_unchecked(a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn normal_cdf(x: f64) -> f64 {
        0.5 * erfc(-x / SQRT_2)
    }

    fn normal_pdf(x: f64) -> f64 {
        (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
    }

    // E((N(mu,1))_+^2)
    fn pos_sq_moment(mu: f64) -> f64 {
        (mu * mu + 1.0) * normal_cdf(mu) + mu * normal_pdf(mu)
    }

    fn pos_sq_moment_prime(mu: f64) -> f64 {
        2.0 * mu * normal_cdf(mu) + 2.0 * normal_pdf(mu)
    }

    fn mc_mean<F: Fn(&mut ChaCha8Rng) -> f64>(n: usize, seed: u64, f: F) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = 0.0;
        let mut s2 = 0.0;
        for _ in 0..n {
            let v = f(&mut rng);
            s += v;
            s2 += v * v;
        }
        let mean = s / n as f64;
        let var = (s2 / n as f64 - mean * mean) * n as f64 / (n as f64 - 1.0);
        (mean, (var / n as f64).sqrt())
    }

    #[test]
    fn phi_trivial_values() {
        assert!((phi(0.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(phi(12.0).unwrap() < 1e-30);
        assert!(phi(12.0).unwrap() >= 0.0);
        assert!((phi_prime(0.0).unwrap() + 2.0 * FRAC_2_PI.sqrt()).abs() < 1e-12);
        assert!(phi_prime(10.0).unwrap().abs() < 1e-20);
    }

    #[test]
    fn phi_matches_defining_integral() {
        for &z in &[0.3, 1.0, 2.5, 4.9, 5.1, 7.0] {
            let (oracle, _) = integrate(|u| FRAC_2_PI.sqrt() * (u - z).powi(2) * (-0.5 * u * u).exp(), z, z + 40.0);
            let v = phi(z).unwrap();
            assert!((v - oracle).abs() < 1e-10 * (1.0 + oracle), "z={z}: {v} vs {oracle}");
        }
    }

    #[test]
    fn phi_is_continuous_across_branch() {
        let below = phi(CLOSED_FORM_LIMIT - 1e-9).unwrap();
        let above = phi(CLOSED_FORM_LIMIT).unwrap();
        assert!((below - above).abs() < 1e-12);
        let below = phi_prime(CLOSED_FORM_LIMIT - 1e-9).unwrap();
        let above = phi_prime(CLOSED_FORM_LIMIT).unwrap();
        assert!((below - above).abs() < 1e-12);
    }

    #[test]
    fn phi_prime_finite_difference() {
        let (z, h) = (0.7, 1e-5);
        let fd = (phi(z + h).unwrap() - phi(z - h).unwrap()) / (2.0 * h);
        assert!((fd - phi_prime(z).unwrap()).abs() < 1e-7);
    }

    #[test]
    fn phi2_is_phi() {
        for &z in &[0.0, 0.4, 3.0] {
            assert_eq!(phi2(z).unwrap(), phi(z).unwrap());
        }
    }

    #[test]
    fn phi_block_at_zero_is_k() {
        for &k in &[1, 2, 5, 10, 100, 10_000] {
            let v = phi_block(0.0, k).unwrap();
            assert!((v - k as f64).abs() < 1e-10 * k as f64, "k={k}: {v}");
        }
    }

    #[test]
    fn phi_block_k1_is_phi() {
        for &z in &[0.0, 0.5, 2.0] {
            assert!((phi_block(z, 1).unwrap() - phi(z).unwrap()).abs() < 1e-10);
        }
        assert!((phi_block_prime(0.3, 1).unwrap() - phi_prime(0.3).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn phi_block_matches_incomplete_gamma_form() {
        use statrs::function::gamma::{gamma_ur, ln_gamma};
        for &k in &[2u32, 3, 5, 10, 33] {
            for &z in &[0.2, 1.0, 2.5, 4.0] {
                let kf = k as f64;
                let x = 0.5 * z * z;
                let m2 = kf * gamma_ur(0.5 * kf + 1.0, x);
                let m1 = SQRT_2 * (ln_gamma(0.5 * (kf + 1.0)) - ln_gamma(0.5 * kf)).exp() * gamma_ur(0.5 * (kf + 1.0), x);
                let m0 = gamma_ur(0.5 * kf, x);
                let oracle = m2 - 2.0 * z * m1 + z * z * m0;
                let v = phi_block(z, k).unwrap();
                assert!((v - oracle).abs() < 1e-9, "k={k} z={z}: {v} vs {oracle}");
            }
        }
    }

    #[test]
    fn phi_block_monte_carlo() {
        let (mean, se) = mc_mean(1_000_000, 11, |rng| {
            let n2: f64 = (0..10).map(|_| rng.sample::<f64, _>(StandardNormal).powi(2)).sum();
            (n2.sqrt() - 1.0).max(0.0).powi(2)
        });
        let v = phi_block(1.0, 10).unwrap();
        assert!((mean - v).abs() < 3.0 * se, "{mean} ± {se} vs {v}");
    }

    #[test]
    fn phi_block_prime_tail_and_fd() {
        assert!(phi_block_prime(20.0, 5).unwrap().abs() < 1e-12);
        let (z, h) = (1.2, 1e-5);
        let fd = (phi_block(z + h, 10).unwrap() - phi_block(z - h, 10).unwrap()) / (2.0 * h);
        assert!((fd - phi_block_prime(z, 10).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn phi_block_bounded_and_monotone() {
        for &k in &[1u32, 3, 10] {
            let mut prev = f64::INFINITY;
            for i in 0..60 {
                let v = phi_block(0.1 * i as f64, k).unwrap();
                assert!(v >= 0.0 && v <= k as f64 + 1e-10);
                assert!(v <= prev + 1e-12);
                prev = v;
            }
        }
    }

    #[test]
    fn phi1_reductions() {
        for &z in &[0.0, 1.0, 2.2] {
            assert!((phi1(0.0, z).unwrap() - phi(z).unwrap()).abs() < 1e-10);
        }
        assert!((phi1(0.0, 0.0).unwrap() - 1.0).abs() < 1e-10);
        let (_, db) = phi1_grad(0.0, 0.5).unwrap();
        assert!((db - phi_prime(0.5).unwrap()).abs() < 1e-8);
        let (_, db) = phi1_grad(0.0, 0.0).unwrap();
        assert!((db + 2.0 * FRAC_2_PI.sqrt()).abs() < 1e-8);
    }

    #[test]
    fn phi1_matches_folded_normal_closed_form() {
        for &(a, b) in &[(0.3, 0.1), (0.8, 0.8), (2.0, 0.5), (0.5, 3.0), (4.0, 4.5)] {
            let oracle = pos_sq_moment(a - b) + pos_sq_moment(-a - b);
            assert!((phi1(a, b).unwrap() - oracle).abs() < 1e-10);
            let (da, db) = phi1_grad(a, b).unwrap();
            let oda = pos_sq_moment_prime(a - b) - pos_sq_moment_prime(-a - b);
            let odb = -pos_sq_moment_prime(a - b) - pos_sq_moment_prime(-a - b);
            assert!((da - oda).abs() < 1e-9, "({a},{b}) da {da} vs {oda}");
            assert!((db - odb).abs() < 1e-9, "({a},{b}) db {db} vs {odb}");
        }
    }

    #[test]
    fn phi1_monte_carlo() {
        let (mean, se) = mc_mean(1_000_000, 5, |rng| {
            let g: f64 = rng.sample(StandardNormal);
            ((g - 0.8).abs() - 0.8).max(0.0).powi(2)
        });
        let v = phi1(0.8, 0.8).unwrap();
        assert!((mean - v).abs() < 3.0 * se);
    }

    #[test]
    fn phi1_grad_finite_difference() {
        let (a, b, h) = (0.6, 0.9, 1e-5);
        let (da, db) = phi1_grad(a, b).unwrap();
        let fda = (phi1(a + h, b).unwrap() - phi1(a - h, b).unwrap()) / (2.0 * h);
        let fdb = (phi1(a, b + h).unwrap() - phi1(a, b - h).unwrap()) / (2.0 * h);
        assert!((da - fda).abs() < 1e-6);
        assert!((db - fdb).abs() < 1e-6);
        // along the diagonal the total derivative is the sum of partials
        let (a, h) = (0.7, 1e-5);
        let fd = (phi1(a + h, a + h).unwrap() - phi1(a - h, a - h).unwrap()) / (2.0 * h);
        let (da, db) = phi1_grad(a, a).unwrap();
        assert!((fd - (da + db)).abs() < 1e-6);
    }

    #[test]
    fn derivatives_on_random_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let h = 1e-5;
        for _ in 0..100 {
            let z: f64 = rng.random_range(h..5.0);
            let k: u32 = rng.random_range(1..12);
            let fd = (phi(z + h).unwrap() - phi(z - h).unwrap()) / (2.0 * h);
            assert!((fd - phi_prime(z).unwrap()).abs() < 1e-6);
            let fd = (phi_block(z + h, k).unwrap() - phi_block(z - h, k).unwrap()) / (2.0 * h);
            assert!((fd - phi_block_prime(z, k).unwrap()).abs() < 1e-6);
            let a: f64 = rng.random_range(h..5.0);
            let (da, db) = phi1_grad(a, z).unwrap();
            let fda = (phi1(a + h, z).unwrap() - phi1(a - h, z).unwrap()) / (2.0 * h);
            let fdb = (phi1(a, z + h).unwrap() - phi1(a, z - h).unwrap()) / (2.0 * h);
            assert!((da - fda).abs() < 1e-6 && (db - fdb).abs() < 1e-6);
        }
    }

    #[test]
    fn quadrature_error_bound_against_second_rule() {
        // composite Simpson with a very fine step as the independent rule
        fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
            let h = (b - a) / n as f64;
            let mut s = f(a) + f(b);
            for i in 1..n {
                s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            s * h / 3.0
        }
        for &(z, k) in &[(0.5, 4u32), (1.5, 10)] {
            let e = phi_block_eval(z, k).unwrap();
            let ln_norm = chi_log_norm(k);
            let oracle = simpson(
                |u| {
                    if u <= z {
                        0.0
                    } else {
                        (2.0 * (u - z).ln() + (k - 1) as f64 * u.ln() - 0.5 * u * u - ln_norm).exp()
                    }
                },
                z,
                z + 40.0,
                200_000,
            );
            assert!((e.value - oracle).abs() <= e.abs_err_bound + 1e-11);
            assert!(e.abs_err_bound <= 1e-10);
        }
        let e = phi1_eval(0.7, 0.4).unwrap();
        let oracle = simpson(
            |u| (u - 0.4).powi(2) * folded_kernel(u, 0.7).0 / (2.0 * PI).sqrt(),
            0.4,
            40.7,
            200_000,
        );
        assert!((e.value - oracle).abs() <= e.abs_err_bound + 1e-11);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(phi(f64::NAN).is_err());
        assert!(phi(-1.0).is_err());
        assert!(phi_prime(f64::INFINITY).is_err());
        assert!(phi_block(1.0, 0).is_err());
        assert!(phi1(f64::NAN, 0.0).is_err());
        assert!(phi1_grad(0.0, f64::INFINITY).is_err());
    }
}
