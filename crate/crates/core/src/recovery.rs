//! Coefficient update: per-sample sparse recovery followed by hard thresholding.
//!
//! Two per-sample solvers are provided:
//!
//! * [`grades_recover`]: gradient descent with hard thresholding to the `s`
//!   largest entries (IHT / GraDeS), started from zero.
//! * [`l1_recover`]: `min ‖x‖₁ s.t. ‖y − Ax‖₂ ≤ ε`, solved through the
//!   penalized form `½‖y − Ax‖² + λ‖x‖₁` with bisection on `λ`.
//!
//! Both work from the Gram matrix `AᵀA` and the correlations `Aᵀy`, which
//! [`recover_all`] computes once per dictionary and shares across samples.

use nalgebra::{DMatrix, DVector, DVectorView};
use rayon::prelude::*;

use crate::diagnostics::spectral_norm;
use crate::error::{invalid, Error, Result};
use crate::model::{CoefficientMatrix, Dictionary, SampleSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Grades,
    L1Constrained,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub kind: SolverKind,
    /// Sparsity level kept by the GraDeS hard threshold.
    pub s: usize,
    pub max_iters: usize,
    /// GraDeS step is `1/step_gamma`.
    pub step_gamma: f64,
    /// Residual bound `ε` for the ℓ1 solver.
    pub residual_eps: f64,
    pub inner_tol: f64,
}

impl SolverConfig {
    pub fn grades(s: usize) -> Self {
        Self {
            kind: SolverKind::Grades,
            s,
            max_iters: 1000,
            step_gamma: 4.0 / 3.0,
            residual_eps: 0.0,
            inner_tol: 1e-12,
        }
    }

    pub fn l1(s: usize, residual_eps: f64) -> Self {
        Self {
            kind: SolverKind::L1Constrained,
            s,
            max_iters: FISTA_MAX_ITERS,
            step_gamma: 4.0 / 3.0,
            residual_eps,
            inner_tol: FISTA_REL_TOL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_gamma > 1.0) {
            return Err(invalid("step_gamma", "must exceed 1"));
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters", "must be at least 1"));
        }
        if !(self.residual_eps >= 0.0) {
            return Err(invalid("residual_eps", "must be non-negative"));
        }
        if !(self.inner_tol >= 0.0) {
            return Err(invalid("inner_tol", "must be non-negative"));
        }
        if self.kind == SolverKind::Grades && self.s == 0 {
            return Err(invalid("s", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    /// Iteration budget exhausted; the best iterate seen is returned.
    NoConvergence,
    /// No penalty weight met the residual band; the most feasible endpoint is returned.
    BisectionFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recovery {
    pub x: DVector<f64>,
    pub status: SolveStatus,
    pub iterations: usize,
    /// `‖y − Ax‖₂` at the returned `x`.
    pub residual: f64,
}

pub const FISTA_MAX_ITERS: usize = 2000;
pub const FISTA_REL_TOL: f64 = 1e-10;
const BISECTION_STEPS: usize = 60;
/// Decades below `‖Aᵀy‖∞` scanned before bisection; the λ bracket floor is `10^-18 ‖Aᵀy‖∞`.
const CONTINUATION_DECADES: usize = 18;
/// Residuals are compared against `max(ε, RESIDUAL_FLOOR·‖y‖)` to absorb rounding.
const RESIDUAL_FLOOR: f64 = 1e-13;

/// `H_ρ` applied entrywise: keep `a` where `|a| > ρ`, zero elsewhere.
pub fn threshold_op(x: &CoefficientMatrix, rho: f64) -> CoefficientMatrix {
    let columns = (0..x.cols())
        .map(|j| {
            x.support(j)
                .iter()
                .map(|&p| (p, x.entries()[(p, j)]))
                .filter(|(_, v)| v.abs() > rho)
                .collect()
        })
        .collect();
    CoefficientMatrix::from_columns(x.rows(), columns)
}

/// Indices of the `s` largest magnitudes of `z` (ties keep the lower index), sorted
/// ascending. Exact zeros are never selected.
pub fn top_s_support(z: &[f64], s: usize) -> Vec<usize> {
    let mut best: Vec<(usize, f64)> = Vec::with_capacity(s + 1);
    for (i, &v) in z.iter().enumerate() {
        let m = v.abs();
        if m == 0.0 || (best.len() == s && m <= best[s - 1].1) {
            continue;
        }
        let pos = best.iter().position(|&(_, b)| b < m).unwrap_or(best.len());
        best.insert(pos, (i, m));
        best.truncate(s);
    }
    let mut idx: Vec<usize> = best.into_iter().map(|(i, _)| i).collect();
    idx.sort_unstable();
    idx
}

/// Dictionary with its Gram matrix, shared by every per-sample solve.
pub struct Prepared<'a> {
    a: &'a Dictionary,
    gram: DMatrix<f64>,
}

impl<'a> Prepared<'a> {
    pub fn new(a: &'a Dictionary) -> Self {
        let gram = a.matrix().tr_mul(a.matrix());
        Self { a, gram }
    }

    fn residual_of(&self, y: DVectorView<'_, f64>, x: &DVector<f64>) -> f64 {
        let mut r = y.clone_owned();
        for (p, &v) in x.iter().enumerate() {
            if v != 0.0 {
                r.axpy(-v, &self.a.atom(p), 1.0);
            }
        }
        r.norm()
    }

    /// IHT from `x = 0`; `aty` must equal `Aᵀy`.
    pub fn grades(
        &self,
        y: DVectorView<'_, f64>,
        aty: DVectorView<'_, f64>,
        s: usize,
        cfg: &SolverConfig,
    ) -> Recovery {
        let r = self.a.atoms();
        let step = 1.0 / cfg.step_gamma;
        let mut supp: Vec<usize> = Vec::new();
        let mut vals: Vec<f64> = Vec::new();
        let mut z = vec![0.0; r];
        let mut residual_vec = y.clone_owned();
        let mut best = (f64::INFINITY, Vec::new(), Vec::new());
        let mut status = SolveStatus::NoConvergence;
        let mut iterations = 0;

        for it in 0..=cfg.max_iters {
            residual_vec.copy_from(&y);
            for (&p, &v) in supp.iter().zip(&vals) {
                residual_vec.axpy(-v, &self.a.atom(p), 1.0);
            }
            let res = residual_vec.norm();
            if res < best.0 {
                best = (res, supp.clone(), vals.clone());
            }
            if res <= cfg.inner_tol {
                status = SolveStatus::Converged;
                break;
            }
            if it == cfg.max_iters {
                break;
            }
            iterations = it + 1;

            // z = x + step * (Aᵀy − Gx)
            for (zi, &c) in z.iter_mut().zip(aty.iter()) {
                *zi = step * c;
            }
            for (&p, &v) in supp.iter().zip(&vals) {
                let g = self.gram.column(p);
                for (zi, gi) in z.iter_mut().zip(g.iter()) {
                    *zi -= step * v * gi;
                }
            }
            for (&p, &v) in supp.iter().zip(&vals) {
                z[p] += v;
            }

            let new_supp = top_s_support(&z, s);
            let new_vals: Vec<f64> = new_supp.iter().map(|&p| z[p]).collect();
            let same = new_supp == supp;
            let (change, size) = if same {
                let change = vals
                    .iter()
                    .zip(&new_vals)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let size = new_vals.iter().map(|v| v * v).sum::<f64>().sqrt();
                (change, size)
            } else {
                (f64::INFINITY, 0.0)
            };
            supp = new_supp;
            vals = new_vals;
            if same && change <= cfg.inner_tol * size {
                residual_vec.copy_from(&y);
                for (&p, &v) in supp.iter().zip(&vals) {
                    residual_vec.axpy(-v, &self.a.atom(p), 1.0);
                }
                let res = residual_vec.norm();
                if res <= best.0 {
                    best = (res, supp.clone(), vals.clone());
                }
                status = SolveStatus::Converged;
                break;
            }
        }

        let (residual, bsupp, bvals) = best;
        let mut x = DVector::zeros(r);
        for (p, v) in bsupp.into_iter().zip(bvals) {
            x[p] = v;
        }
        Recovery {
            x,
            status,
            iterations,
            residual,
        }
    }

    /// Constrained ℓ1 recovery; `lipschitz` must bound the largest eigenvalue of `AᵀA`.
    pub fn l1(
        &self,
        y: DVectorView<'_, f64>,
        aty: DVectorView<'_, f64>,
        eps: f64,
        lipschitz: f64,
        cfg: &SolverConfig,
    ) -> Recovery {
        let r = self.a.atoms();
        let ynorm = y.norm();
        let target = eps.max(RESIDUAL_FLOOR * ynorm);
        if ynorm <= target {
            return Recovery {
                x: DVector::zeros(r),
                status: SolveStatus::Converged,
                iterations: 0,
                residual: ynorm,
            };
        }
        let lam_max = aty.amax();
        let mut iterations = 0;
        let mut warm = DVector::zeros(r);
        let solve = |lam: f64, warm: &mut DVector<f64>, iterations: &mut usize| {
            let (x, it) = self.lasso(aty, lam, lipschitz, warm, cfg);
            *iterations += it;
            warm.copy_from(&x);
            let res = self.residual_of(y, &x);
            (x, res)
        };
        let done = |x, res, iterations| Recovery {
            x,
            status: SolveStatus::Converged,
            iterations,
            residual: res,
        };

        // Continuation down a decade grid locates a bracket; each solve warm-starts
        // from the previous, larger-λ solution.
        let mut hi = lam_max;
        let mut lo = None;
        let mut last = (DVector::zeros(r), ynorm);
        for k in 1..=CONTINUATION_DECADES {
            let lam = lam_max * 10f64.powi(-(k as i32));
            let (x, res) = solve(lam, &mut warm, &mut iterations);
            if res <= target {
                if res >= 0.9 * eps {
                    return done(x, res, iterations);
                }
                lo = Some(lam);
                last = (x, res);
                break;
            }
            hi = lam;
            last = (x, res);
        }
        let Some(mut lo) = lo else {
            return Recovery {
                x: last.0,
                status: SolveStatus::BisectionFailed,
                iterations,
                residual: last.1,
            };
        };
        let mut feasible = last;
        let mut hi_x = None;
        for _ in 0..BISECTION_STEPS {
            let mid = (lo * hi).sqrt();
            if let Some(x) = &hi_x {
                warm.copy_from(x);
            }
            let (x, res) = solve(mid, &mut warm, &mut iterations);
            if res <= target && res >= 0.9 * eps {
                return done(x, res, iterations);
            }
            if res > target {
                hi = mid;
                hi_x = Some(x);
            } else {
                lo = mid;
                feasible = (x, res);
            }
        }
        Recovery {
            x: feasible.0,
            status: SolveStatus::BisectionFailed,
            iterations,
            residual: feasible.1,
        }
    }

    /// Minimizer of `½‖y − Ax‖² + λ‖x‖₁`.
    ///
    /// An active-set solve seeded with the warm start's support is tried first; if it
    /// does not reach a point satisfying the optimality conditions, FISTA runs from the
    /// warm start and its support seeds a second active-set attempt. The FISTA iterate
    /// is returned when neither attempt verifies.
    fn lasso(
        &self,
        aty: DVectorView<'_, f64>,
        lam: f64,
        lipschitz: f64,
        start: &DVector<f64>,
        cfg: &SolverConfig,
    ) -> (DVector<f64>, usize) {
        if let Some(p) = self.polish(aty, lam, start) {
            return (p, 0);
        }
        let step = 1.0 / lipschitz;
        let mut x = start.clone();
        let mut v = x.clone();
        let mut t = 1.0f64;
        let mut iters = 0;
        for _ in 0..cfg.max_iters {
            iters += 1;
            let grad = &self.gram * &v - aty;
            let mut next = &v - step * grad;
            next.apply(|e| *e = soft(*e, step * lam));
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            let diff = &next - &x;
            v = &next + ((t - 1.0) / t_next) * &diff;
            let change = diff.norm();
            let size = next.norm();
            x = next;
            t = t_next;
            if change <= cfg.inner_tol * size.max(f64::MIN_POSITIVE) {
                break;
            }
        }
        match self.polish(aty, lam, &x) {
            Some(p) => (p, iters),
            None => (x, iters),
        }
    }

    fn polish(&self, aty: DVectorView<'_, f64>, lam: f64, x0: &DVector<f64>) -> Option<DVector<f64>> {
        let r = x0.len();
        let keep = top_s_support(x0.as_slice(), self.a.dim());
        let mut active: Vec<(usize, f64)> = keep.into_iter().map(|i| (i, x0[i].signum())).collect();
        for _ in 0..(4 * r + 4) {
            let k = active.len();
            let mut x = DVector::zeros(r);
            if k > 0 {
                let g = DMatrix::from_fn(k, k, |i, j| self.gram[(active[i].0, active[j].0)]);
                let rhs = DVector::from_fn(k, |i, _| aty[active[i].0] - lam * active[i].1);
                let sol = g.cholesky()?.solve(&rhs);
                let flipped: Vec<usize> = (0..k)
                    .filter(|&i| sol[i] * active[i].1 <= 0.0)
                    .collect();
                if !flipped.is_empty() {
                    let mut i = 0;
                    active.retain(|_| {
                        let keep = !flipped.contains(&i);
                        i += 1;
                        keep
                    });
                    continue;
                }
                for i in 0..k {
                    x[active[i].0] = sol[i];
                }
            }
            let corr = aty - &self.gram * &x;
            let worst = (0..r)
                .filter(|j| !active.iter().any(|(a, _)| a == j))
                .map(|j| (j, corr[j]))
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()));
            match worst {
                Some((j, c)) if c.abs() > lam * (1.0 + 1e-9) => {
                    active.push((j, c.signum()));
                    active.sort_by_key(|a| a.0);
                }
                _ => return Some(x),
            }
        }
        None
    }
}

fn soft(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn check_sample(a: &Dictionary, y: DVectorView<'_, f64>) -> Result<()> {
    if y.len() != a.dim() {
        return Err(Error::ShapeMismatch {
            expected: (a.dim(), 1),
            found: (y.len(), 1),
        });
    }
    Ok(())
}

/// GraDeS / IHT: `x ← H_s(x + (1/γ) Aᵀ(y − Ax))` from `x = 0`.
pub fn grades_recover(
    a: &Dictionary,
    y: DVectorView<'_, f64>,
    s: usize,
    cfg: &SolverConfig,
) -> Result<Recovery> {
    cfg.validate()?;
    check_sample(a, y)?;
    if s == 0 || s > a.dim() {
        return Err(invalid("s", format!("need 1 <= s <= d, got s={} d={}", s, a.dim())));
    }
    let prep = Prepared::new(a);
    let aty = a.matrix().tr_mul(&y);
    Ok(prep.grades(y, aty.as_view(), s, cfg))
}

/// `argmin ‖x‖₁ s.t. ‖y − Ax‖₂ ≤ eps` (approximately, via penalty bisection).
pub fn l1_recover(a: &Dictionary, y: DVectorView<'_, f64>, eps: f64, cfg: &SolverConfig) -> Result<Recovery> {
    cfg.validate()?;
    check_sample(a, y)?;
    if !(eps >= 0.0) {
        return Err(invalid("eps", "must be non-negative"));
    }
    let prep = Prepared::new(a);
    let aty = a.matrix().tr_mul(&y);
    let l = lipschitz_bound(a)?;
    Ok(prep.l1(y, aty.as_view(), eps, l, cfg))
}

fn lipschitz_bound(a: &Dictionary) -> Result<f64> {
    let sigma = spectral_norm(a.matrix(), 1e-10)?;
    Ok(sigma * sigma * (1.0 + 1e-6))
}

#[derive(Debug, Clone)]
pub struct RecoveryBatch {
    pub coefficients: CoefficientMatrix,
    pub status: Vec<SolveStatus>,
    pub residuals: Vec<f64>,
}

impl RecoveryBatch {
    pub fn unconverged(&self) -> usize {
        self.status.iter().filter(|s| **s != SolveStatus::Converged).count()
    }

    pub fn median_residual(&self) -> f64 {
        let mut r = self.residuals.clone();
        if r.is_empty() {
            return 0.0;
        }
        r.sort_by(f64::total_cmp);
        let m = r.len() / 2;
        if r.len() % 2 == 1 {
            r[m]
        } else {
            0.5 * (r[m - 1] + r[m])
        }
    }
}

/// Solves every column of `Y` independently, then applies `H_rho`.
pub fn recover_all(a: &Dictionary, y: &SampleSet, cfg: &SolverConfig, rho: f64) -> Result<RecoveryBatch> {
    cfg.validate()?;
    if y.dim() != a.dim() {
        return Err(Error::ShapeMismatch {
            expected: (a.dim(), y.len()),
            found: (y.dim(), y.len()),
        });
    }
    if !(rho >= 0.0) {
        return Err(invalid("rho", "must be non-negative"));
    }
    if cfg.kind == SolverKind::Grades && cfg.s > a.dim() {
        return Err(invalid("s", format!("need s <= d, got s={} d={}", cfg.s, a.dim())));
    }
    let prep = Prepared::new(a);
    let aty = a.matrix().tr_mul(y.matrix());
    let lipschitz = match cfg.kind {
        SolverKind::L1Constrained => lipschitz_bound(a)?,
        SolverKind::Grades => 0.0,
    };
    let solved: Vec<Recovery> = (0..y.len())
        .into_par_iter()
        .map(|j| {
            let yj = y.matrix().column(j);
            let cj = aty.column(j);
            match cfg.kind {
                SolverKind::Grades => prep.grades(yj, cj, cfg.s, cfg),
                SolverKind::L1Constrained => prep.l1(yj, cj, cfg.residual_eps, lipschitz, cfg),
            }
        })
        .collect();

    let mut status = Vec::with_capacity(solved.len());
    let mut residuals = Vec::with_capacity(solved.len());
    let columns = solved
        .into_iter()
        .map(|rec| {
            status.push(rec.status);
            residuals.push(rec.residual);
            rec.x
                .iter()
                .enumerate()
                .filter(|(_, v)| v.abs() > rho)
                .map(|(p, v)| (p, *v))
                .collect()
        })
        .collect();
    Ok(RecoveryBatch {
        coefficients: CoefficientMatrix::from_columns(a.atoms(), columns),
        status,
        residuals,
    })
}
