//! Weighted ℓ1-analysis, block-ℓ1,2 and TV recovery from `Az = b`.
//!
//! All three programs are solved by the same ADMM splitting `u = Ωz`. The
//! `z`-update is an equality-constrained least-squares problem whose
//! factorization does not depend on the penalty, so it is computed once per
//! call.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::models::{difference_operator, BlockStructure};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
    /// initial penalty
    pub rho: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-6,
            rel_tol: 1e-6,
            max_iter: 10_000,
            rho: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryResult {
    pub x_hat: Vec<f64>,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
}

/// Default success threshold on the relative error.
pub const SUCCESS_TOL: f64 = 1e-3;
const ZERO_SIGNAL_TOL: f64 = 1e-6;

/// `‖x̂ - x‖ ≤ tol·‖x‖`, or `‖x̂‖ ≤ 1e-6` when `x = 0`.
pub fn is_success(x_hat: &[f64], x_true: &[f64]) -> Result<bool> {
    is_success_with(x_hat, x_true, SUCCESS_TOL)
}

pub fn is_success_with(x_hat: &[f64], x_true: &[f64], tol: f64) -> Result<bool> {
    if x_hat.len() != x_true.len() {
        return domain(format!("length mismatch: {} vs {}", x_hat.len(), x_true.len()));
    }
    let err = x_hat.iter().zip(x_true).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm = x_true.iter().map(|a| a * a).sum::<f64>().sqrt();
    Ok(if norm == 0.0 { err <= ZERO_SIGNAL_TOL } else { err <= tol * norm })
}

enum Constraint {
    /// `Ω` has full column rank: `z = M⁻¹(r - Aᵀλ)` with `M = ΩᵀΩ`
    Schur {
        m_chol: Option<Cholesky<f64, Dyn>>,
        s_chol: Cholesky<f64, Dyn>,
        /// `M⁻¹Aᵀ`
        p: DMatrix<f64>,
    },
    Kkt(LU<f64, Dyn, Dyn>),
}

struct Problem<'a> {
    a: &'a DMatrix<f64>,
    b: DVector<f64>,
    /// `None` is the identity
    omega: Option<&'a DMatrix<f64>>,
    constraint: Constraint,
}

fn singular(what: &str) -> Error {
    Error::Singular(format!("{what}: measurement matrix is rank deficient on the problem"))
}

const RANK_TOL: f64 = 1e-11;
const POLISH_TOL: f64 = 1e-10;
const RELAXATION: f64 = 1.6;
const ADAPT_PERIOD: usize = 20;
const ADAPT_UNTIL: usize = 2000;

impl<'a> Problem<'a> {
    fn new(a: &'a DMatrix<f64>, b: &[f64], omega: Option<&'a DMatrix<f64>>) -> Result<Self> {
        let n = a.ncols();
        let m = a.nrows();
        let m_mat = omega.map(|o| o.transpose() * o);
        let m_chol = match &m_mat {
            None => None,
            Some(mm) => {
                let scale = mm.diagonal().max().max(f64::MIN_POSITIVE);
                // treat near-singular ΩᵀΩ like the singular case
                Cholesky::new(mm.clone()).filter(|c| c.l_dirty().diagonal().min().powi(2) > RANK_TOL * scale)
            }
        };
        let constraint = if omega.is_none() || m_chol.is_some() {
            let p = match &m_chol {
                Some(c) => c.solve(&a.transpose()),
                None => a.transpose(),
            };
            let s = a * &p;
            let scale = s.diagonal().max().max(f64::MIN_POSITIVE);
            let s_chol = Cholesky::new(s)
                .filter(|c| m == 0 || c.l_dirty().diagonal().min().powi(2) > RANK_TOL * scale)
                .ok_or_else(|| singular("A"))?;
            Constraint::Schur { m_chol, s_chol, p }
        } else {
            let mm = m_mat.expect("omega present");
            let mut k = DMatrix::zeros(n + m, n + m);
            k.view_mut((0, 0), (n, n)).copy_from(&mm);
            k.view_mut((0, n), (n, m)).copy_from(&a.transpose());
            k.view_mut((n, 0), (m, n)).copy_from(a);
            let lu = k.lu();
            let u = lu.u();
            let umax = u.diagonal().amax().max(f64::MIN_POSITIVE);
            if u.diagonal().iter().any(|d| d.abs() <= 1e-12 * umax) {
                return Err(singular("KKT system"));
            }
            Constraint::Kkt(lu)
        };
        Ok(Self { a, b: DVector::from_column_slice(b), omega, constraint })
    }

    fn analysis(&self, z: &DVector<f64>) -> DVector<f64> {
        match self.omega {
            Some(o) => o * z,
            None => z.clone(),
        }
    }

    fn synthesis(&self, v: &DVector<f64>) -> DVector<f64> {
        match self.omega {
            Some(o) => o.tr_mul(v),
            None => v.clone(),
        }
    }

    /// Projection of `z` onto `{Az = b, (Ωz)_j = 0 for j in zero_rows}`, the
    /// face of the feasible set picked out by the ADMM iterate. `None` if that
    /// face is empty or the projection is not cheap to compute.
    fn polish(&self, z: &DVector<f64>, zero_rows: &[usize]) -> Option<DVector<f64>> {
        let (m, n) = self.a.shape();
        let candidate = match self.omega {
            None => {
                let mut zero = vec![false; n];
                zero_rows.iter().for_each(|&j| zero[j] = true);
                let active: Vec<usize> = (0..n).filter(|&j| !zero[j]).collect();
                if active.len() > m {
                    return None;
                }
                if active.is_empty() {
                    return (self.b.norm() == 0.0).then(|| DVector::zeros(n));
                }
                let sub = self.a.select_columns(active.iter());
                let v = sub.svd(true, true).solve(&self.b, 1e-12).ok()?;
                let mut out = DVector::zeros(n);
                for (k, &j) in active.iter().enumerate() {
                    out[j] = v[k];
                }
                out
            }
            Some(o) => {
                let mut stacked = DMatrix::zeros(m + zero_rows.len(), n);
                stacked.rows_mut(0, m).copy_from(self.a);
                for (k, &j) in zero_rows.iter().enumerate() {
                    stacked.row_mut(m + k).copy_from(&o.row(j));
                }
                let mut rhs = DVector::zeros(m + zero_rows.len());
                rhs.rows_mut(0, m).copy_from(&self.b);
                let gap = &stacked * z - rhs;
                z - stacked.svd(true, true).solve(&gap, 1e-12).ok()?
            }
        };
        let feasible = (self.a * &candidate - &self.b).norm() <= POLISH_TOL * (1.0 + self.b.norm());
        let on_face = match self.omega {
            None => true,
            Some(o) => zero_rows.iter().all(|&j| o.row(j).dot(&candidate.transpose()).abs() <= POLISH_TOL * (1.0 + candidate.norm())),
        };
        (feasible && on_face && candidate.iter().all(|v| v.is_finite())).then_some(candidate)
    }

    /// `argmin ‖Ωz - v‖² s.t. Az = b`
    fn z_update(&self, v: &DVector<f64>) -> DVector<f64> {
        let r = self.synthesis(v);
        match &self.constraint {
            Constraint::Schur { m_chol, s_chol, p } => {
                let z0 = match m_chol {
                    Some(c) => c.solve(&r),
                    None => r,
                };
                let lambda = s_chol.solve(&(self.a * &z0 - &self.b));
                z0 - p * lambda
            }
            Constraint::Kkt(lu) => {
                let n = self.a.ncols();
                let mut rhs = DVector::zeros(n + self.a.nrows());
                rhs.rows_mut(0, n).copy_from(&r);
                rhs.rows_mut(n, self.a.nrows()).copy_from(&self.b);
                lu.solve(&rhs).expect("checked nonsingular").rows(0, n).into_owned()
            }
        }
    }
}

#[derive(Clone, Copy)]
enum Prox<'a> {
    Entrywise(&'a [f64]),
    Group(&'a BlockStructure, &'a [f64]),
}

impl Prox<'_> {
    fn apply(&self, v: &mut DVector<f64>, scale: f64) {
        match *self {
            Prox::Entrywise(w) => {
                for (x, wi) in v.iter_mut().zip(w) {
                    let th = wi * scale;
                    *x = x.signum() * (x.abs() - th).max(0.0);
                }
            }
            Prox::Group(blocks, w) => {
                for (b, r) in blocks.blocks().enumerate() {
                    let mut seg = v.rows_mut(r.start, r.len());
                    let norm = seg.norm();
                    let factor = if norm > 0.0 { (1.0 - w[b] * scale / norm).max(0.0) } else { 0.0 };
                    seg *= factor;
                }
            }
        }
    }

    fn value(&self, u: &DVector<f64>) -> f64 {
        match *self {
            Prox::Entrywise(w) => u.iter().zip(w).map(|(x, wi)| wi * x.abs()).sum(),
            Prox::Group(blocks, w) => blocks.blocks().enumerate().map(|(b, r)| w[b] * u.rows(r.start, r.len()).norm()).sum(),
        }
    }
}

fn check_weights(w: &[f64], expected: usize) -> Result<()> {
    if w.len() != expected {
        return domain(format!("w has length {}, expected {expected}", w.len()));
    }
    if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return domain("weights must be finite and nonnegative");
    }
    Ok(())
}

fn check_system(a: &DMatrix<f64>, b: &[f64]) -> Result<()> {
    if a.nrows() != b.len() {
        return domain(format!("A has {} rows but b has length {}", a.nrows(), b.len()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return domain("A and b must be finite");
    }
    Ok(())
}

fn admm(problem: &Problem, prox: Prox, opts: &SolverOptions) -> RecoveryResult {
    let n = problem.a.ncols();
    let dim = problem.omega.map_or(n, |o| o.nrows());
    if problem.a.nrows() == 0 {
        // no constraints: the minimizer of a norm is zero
        return RecoveryResult {
            x_hat: vec![0.0; n],
            primal_residual: 0.0,
            dual_residual: 0.0,
            iterations: 0,
            converged: true,
            objective: 0.0,
        };
    }
    let mut rho = opts.rho;
    let mut u = DVector::zeros(dim);
    let mut y = DVector::zeros(dim);
    let mut z = problem.z_update(&u);
    let (mut r_norm, mut s_norm) = (f64::INFINITY, f64::INFINITY);
    let mut iterations = 0;
    let mut converged = false;
    let sqrt_dim = (dim as f64).sqrt();
    let sqrt_n = (n as f64).sqrt();
    while iterations < opts.max_iter {
        iterations += 1;
        z = problem.z_update(&(&u - &y));
        let c = problem.analysis(&z);
        let u_old = u.clone();
        let relaxed = &c * RELAXATION + &u_old * (1.0 - RELAXATION);
        u = &relaxed + &y;
        prox.apply(&mut u, 1.0 / rho);
        y += &relaxed - &u;
        r_norm = (&c - &u).norm();
        s_norm = rho * problem.synthesis(&(&u - &u_old)).norm();
        let eps_pri = opts.abs_tol * sqrt_dim + opts.rel_tol * c.norm().max(u.norm());
        let eps_dual = opts.abs_tol * sqrt_n + opts.rel_tol * rho * problem.synthesis(&y).norm();
        if r_norm <= eps_pri && s_norm <= eps_dual {
            converged = true;
            break;
        }
        // adapting the penalty every iteration can cycle, so adapt sparsely and stop eventually
        if iterations % ADAPT_PERIOD != 0 || iterations > ADAPT_UNTIL {
            continue;
        }
        if r_norm > 10.0 * s_norm {
            rho *= 2.0;
            y /= 2.0;
        } else if s_norm > 10.0 * r_norm {
            rho /= 2.0;
            y *= 2.0;
        }
    }
    let mut objective = prox.value(&problem.analysis(&z));
    let zero_rows: Vec<usize> = (0..dim).filter(|&j| u[j] == 0.0).collect();
    if let Some(zp) = problem.polish(&z, &zero_rows) {
        let value = prox.value(&problem.analysis(&zp));
        if value <= objective {
            z = zp;
            objective = value;
        }
    }
    RecoveryResult {
        x_hat: z.as_slice().to_vec(),
        primal_residual: r_norm,
        dual_residual: s_norm,
        iterations,
        converged,
        objective,
    }
}

/// `min Σ w_j |(Ωz)_j|` subject to `Az = b`.
pub fn solve_weighted_analysis(a: &DMatrix<f64>, b: &[f64], omega: &DMatrix<f64>, w: &[f64]) -> Result<RecoveryResult> {
    solve_weighted_analysis_with(a, b, omega, w, &SolverOptions::default())
}

pub fn solve_weighted_analysis_with(
    a: &DMatrix<f64>,
    b: &[f64],
    omega: &DMatrix<f64>,
    w: &[f64],
    opts: &SolverOptions,
) -> Result<RecoveryResult> {
    check_system(a, b)?;
    if omega.ncols() != a.ncols() {
        return domain(format!("Omega has {} columns, A has {}", omega.ncols(), a.ncols()));
    }
    check_weights(w, omega.nrows())?;
    let problem = Problem::new(a, b, Some(omega))?;
    Ok(admm(&problem, Prox::Entrywise(w), opts))
}

/// `min Σ_b w_b ‖z_{V_b}‖₂` subject to `Az = b`.
pub fn solve_weighted_block(a: &DMatrix<f64>, b: &[f64], blocks: &BlockStructure, w: &[f64]) -> Result<RecoveryResult> {
    solve_weighted_block_with(a, b, blocks, w, &SolverOptions::default())
}

pub fn solve_weighted_block_with(
    a: &DMatrix<f64>,
    b: &[f64],
    blocks: &BlockStructure,
    w: &[f64],
    opts: &SolverOptions,
) -> Result<RecoveryResult> {
    check_system(a, b)?;
    if a.ncols() != blocks.n {
        return domain(format!("A has {} columns, blocks cover {}", a.ncols(), blocks.n));
    }
    check_weights(w, blocks.q)?;
    let problem = Problem::new(a, b, None)?;
    Ok(admm(&problem, Prox::Group(blocks, w), opts))
}

/// `min Σ w_i |z_i - z_{i+1}|` subject to `Az = b`.
pub fn solve_weighted_tv(a: &DMatrix<f64>, b: &[f64], n: usize, w: &[f64]) -> Result<RecoveryResult> {
    solve_weighted_tv_with(a, b, n, w, &SolverOptions::default())
}

pub fn solve_weighted_tv_with(a: &DMatrix<f64>, b: &[f64], n: usize, w: &[f64], opts: &SolverOptions) -> Result<RecoveryResult> {
    let od = difference_operator(n)?;
    solve_weighted_analysis_with(a, b, &od, w, opts)
}
