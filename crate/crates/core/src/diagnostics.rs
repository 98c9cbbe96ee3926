//! Empirical checks of the structural assumptions on `A*` and `X*`.
//!
//! Statistical checks return reports (counts, pass flags) rather than
//! errors; a single tail event is information, not a failure.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{invalid, Error, Result};
use crate::model::{CoefficientMatrix, Dictionary};
use crate::rng::Stream;

/// Supports enumerated exhaustively when `C(r, k)` is at most this.
pub const RIP_ENUMERATION_CAP: u64 = 100_000;
/// Supports drawn when enumeration is over the cap.
pub const RIP_SAMPLES: usize = 10_000;
const RIP_SAMPLE_SEED: u64 = 0x5249_5053;
const POWER_SEED: u64 = 0x504f_5745;
const POWER_MAX_ITERS: usize = 100_000;
/// Supports up to this size use a dense symmetric eigensolver.
const DIRECT_EIGEN_MAX: usize = 16;

/// `max_{i≠j} |⟨A_i, A_j⟩|`.
pub fn coherence(a: &Dictionary) -> f64 {
    let g = a.matrix().tr_mul(a.matrix());
    let r = g.nrows();
    let mut m = 0.0f64;
    for j in 0..r {
        for i in 0..j {
            m = m.max(g[(i, j)].abs());
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RipMode {
    Exhaustive,
    /// Random supports; the estimate is a lower bound on the true constant.
    Sampled(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RipEstimate {
    pub delta: f64,
    pub mode: RipMode,
    pub supports_checked: usize,
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
        if c > u64::MAX as u128 {
            return c;
        }
    }
    c
}

fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    for i in (0..k).rev() {
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Worst deviation of the spectrum of `A_Sᵀ A_S` from 1.
fn support_deviation(gram: &DMatrix<f64>, supp: &[usize]) -> f64 {
    let k = supp.len();
    let sub = DMatrix::from_fn(k, k, |i, j| gram[(supp[i], supp[j])]);
    let (lmin, lmax) = if k <= DIRECT_EIGEN_MAX {
        let ev = SymmetricEigen::new(sub).eigenvalues;
        (ev.min(), ev.max())
    } else {
        let lmax = power_top_eigenvalue(&sub);
        let shifted = DMatrix::identity(k, k) * lmax - &sub;
        (lmax - power_top_eigenvalue(&shifted), lmax)
    };
    (lmax - 1.0).max(1.0 - lmin)
}

fn power_top_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let mut rng = Stream::new(POWER_SEED);
    let mut v = DVector::from_fn(m.nrows(), |_, _| rng.gaussian());
    v.normalize_mut();
    let mut lam = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        let w = m * &v;
        let next = v.dot(&w);
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        v = w / nw;
        if (next - lam).abs() <= 1e-14 * next.abs().max(1.0) {
            return next;
        }
        lam = next;
    }
    lam
}

/// RIP constant of order `k`, exhaustive when `C(r, k) <= cap`, else sampled.
pub fn rip_constant(a: &Dictionary, k: usize, cap: u64) -> Result<RipEstimate> {
    rip_constant_with(a, k, cap, RIP_SAMPLES, RIP_SAMPLE_SEED)
}

pub fn rip_constant_with(a: &Dictionary, k: usize, cap: u64, samples: usize, seed: u64) -> Result<RipEstimate> {
    let r = a.atoms();
    if k == 0 || k > a.dim() || k > r {
        return Err(invalid("k", format!("need 1 <= k <= min(d, r), got k={k}")));
    }
    let gram = a.matrix().tr_mul(a.matrix());
    let total = binomial(r, k);
    if total <= cap as u128 {
        let mut idx: Vec<usize> = (0..k).collect();
        let mut delta = 0.0f64;
        let mut checked = 0;
        loop {
            delta = delta.max(support_deviation(&gram, &idx));
            checked += 1;
            if !next_combination(&mut idx, r) {
                break;
            }
        }
        Ok(RipEstimate {
            delta,
            mode: RipMode::Exhaustive,
            supports_checked: checked,
        })
    } else {
        let mut rng = Stream::new(seed);
        let delta = (0..samples)
            .map(|_| support_deviation(&gram, &rng.subset(r, k)))
            .fold(0.0, f64::max);
        Ok(RipEstimate {
            delta,
            mode: RipMode::Sampled(samples),
            supports_checked: samples,
        })
    }
}

/// Largest singular value by power iteration on `WᵀW` from a fixed seeded start.
pub fn spectral_norm(w: &DMatrix<f64>, tol: f64) -> Result<f64> {
    for j in 0..w.ncols() {
        for i in 0..w.nrows() {
            if !w[(i, j)].is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    if w.is_empty() || w.amax() == 0.0 {
        return Ok(0.0);
    }
    let mut rng = Stream::new(POWER_SEED);
    let mut v = DVector::from_fn(w.ncols(), |_, _| rng.gaussian());
    v.normalize_mut();
    let mut sigma = 0.0f64;
    let mut calm = 0;
    for _ in 0..POWER_MAX_ITERS {
        let wv = w * &v;
        let next = wv.norm();
        let u = w.tr_mul(&wv);
        let nu = u.norm();
        if nu == 0.0 {
            // start vector in the null space; no component to amplify
            return Ok(next);
        }
        v = u / nu;
        if (next - sigma).abs() <= tol * next {
            calm += 1;
            if calm >= 3 {
                return Ok((w * &v).norm().max(next));
            }
        } else {
            calm = 0;
        }
        sigma = next;
    }
    Err(Error::NoConvergence {
        iterations: POWER_MAX_ITERS,
    })
}

/// `E[x xᵀ]` for a column with a uniform `s`-subset support and i.i.d. unit-variance
/// nonzeros of mean `mu`.
pub fn covariance_oracle(r: usize, s: usize, mu: f64) -> Result<DMatrix<f64>> {
    if s == 0 || s > r {
        return Err(invalid("s", format!("need 1 <= s <= r, got s={s} r={r}")));
    }
    if !(mu * mu <= 1.0) {
        return Err(invalid("mu", "need mu^2 <= 1"));
    }
    let (rf, sf) = (r as f64, s as f64);
    let off = if r > 1 {
        sf * (sf - 1.0) * mu * mu / (rf * (rf - 1.0))
    } else {
        0.0
    };
    let diag = sf / rf - off;
    Ok(DMatrix::from_element(r, r, off) + DMatrix::identity(r, r) * diag)
}

/// `(1/n) X Xᵀ` accumulated over supports.
pub fn empirical_covariance(x: &CoefficientMatrix) -> DMatrix<f64> {
    let r = x.rows();
    let mut c = DMatrix::zeros(r, r);
    for j in 0..x.cols() {
        let supp = x.support(j);
        for &p in supp {
            let vp = x.entries()[(p, j)];
            for &q in supp {
                c[(p, q)] += vp * x.entries()[(q, j)];
            }
        }
    }
    c / x.cols().max(1) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationReport {
    /// `s n / r`.
    pub expected: f64,
    pub lower: f64,
    pub upper: f64,
    /// Rows whose support count falls outside `[lower, upper]`.
    pub count_violations: Vec<usize>,
    /// Rows whose energy `Σ_i (X_pi)²`, divided by `second_moment`, falls outside the band.
    pub energy_violations: Vec<usize>,
}

impl ConcentrationReport {
    pub fn violations(&self) -> usize {
        let mut rows: Vec<usize> = self
            .count_violations
            .iter()
            .chain(&self.energy_violations)
            .copied()
            .collect();
        rows.sort_unstable();
        rows.dedup();
        rows.len()
    }
}

/// Checks per-row support counts and energies against `(1 ± δ) s n / r`.
///
/// `second_moment` is `E[x²]` of the nonzero law; energies are divided by it so
/// that laws without unit variance are judged on the same band.
pub fn support_concentration_check(
    x: &CoefficientMatrix,
    s: usize,
    delta: f64,
    second_moment: f64,
) -> Result<ConcentrationReport> {
    if !(delta >= 0.0) {
        return Err(invalid("delta", "must be non-negative"));
    }
    if !(second_moment > 0.0) {
        return Err(invalid("second_moment", "must be positive"));
    }
    let expected = s as f64 * x.cols() as f64 / x.rows() as f64;
    let (lower, upper) = ((1.0 - delta) * expected, (1.0 + delta) * expected);
    let outside = |v: f64| v < lower || v > upper;
    let counts = x.row_counts();
    let count_violations = (0..x.rows()).filter(|&p| outside(counts[p] as f64)).collect();
    let energy_violations = (0..x.rows())
        .filter(|&p| outside(x.entries().row(p).norm_squared() / second_moment))
        .collect();
    Ok(ConcentrationReport {
        expected,
        lower,
        upper,
        count_violations,
        energy_violations,
    })
}

/// `‖W‖₂ ≤ 2 ‖W‖_max s √(n/r)` for `W` supported inside `reference`.
pub fn support_spectral_check(w: &DMatrix<f64>, reference: &CoefficientMatrix, s: usize) -> Result<bool> {
    if w.shape() != reference.entries().shape() {
        return Err(Error::ShapeMismatch {
            expected: reference.entries().shape(),
            found: w.shape(),
        });
    }
    for j in 0..w.ncols() {
        let supp = reference.support(j);
        for i in 0..w.nrows() {
            if w[(i, j)] != 0.0 && supp.binary_search(&i).is_err() {
                return Err(Error::SupportViolation { row: i, col: j });
            }
        }
    }
    let (r, n) = w.shape();
    let bound = 2.0 * w.amax() * s as f64 * (n as f64 / r as f64).sqrt();
    Ok(spectral_norm(w, 1e-10)? <= bound)
}

/// Inverse of `[[A, B], [C, D]]` through the Schur complement of `A`.
pub fn schur_block_inverse(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let (p, q) = (a.nrows(), d.nrows());
    let shape_ok = a.ncols() == p && d.ncols() == q && b.shape() == (p, q) && c.shape() == (q, p);
    if !shape_ok {
        return Err(invalid("blocks", "need A p×p, B p×q, C q×p, D q×q"));
    }
    let a_inv = a.clone().try_inverse().ok_or(Error::SingularBlock("A"))?;
    let schur = d - c * &a_inv * b;
    let m = schur.try_inverse().ok_or(Error::SingularBlock("Schur complement D - C A^-1 B"))?;
    let a_inv_b = &a_inv * b;
    let c_a_inv = c * &a_inv;
    let mut out = DMatrix::zeros(p + q, p + q);
    out.view_mut((0, 0), (p, p))
        .copy_from(&(&a_inv + &a_inv_b * &m * &c_a_inv));
    out.view_mut((0, p), (p, q)).copy_from(&(-(&a_inv_b * &m)));
    out.view_mut((p, 0), (q, p)).copy_from(&(-(&m * &c_a_inv)));
    out.view_mut((p, p), (q, q)).copy_from(&m);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::synth::gen_dictionary;

    #[test]
    fn coherence_cases() {
        let i = Dictionary::normalized(DMatrix::identity(4, 4)).unwrap();
        assert_eq!(coherence(&i), 0.0);
        let dup = Dictionary::normalized(DMatrix::from_column_slice(2, 2, &[1.0, 1.0, 1.0, 1.0])).unwrap();
        assert!((coherence(&dup) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn coherence_matches_double_loop() {
        let a = gen_dictionary(&ModelConfig::new(100, 200, 1, 3, 3)).unwrap();
        let mut brute = 0.0f64;
        for i in 0..200 {
            for j in 0..200 {
                if i != j {
                    let mut dot = 0.0;
                    for k in 0..100 {
                        dot += a.matrix()[(k, i)] * a.matrix()[(k, j)];
                    }
                    brute = brute.max(dot.abs());
                }
            }
        }
        let c = coherence(&a);
        assert!(c > 0.0 && c < 0.6, "{c}");
        assert!((c - brute).abs() < 1e-14);
    }

    #[test]
    fn rip_orthonormal_is_zero() {
        let i = Dictionary::normalized(DMatrix::identity(6, 6)).unwrap();
        for k in 1..=4 {
            assert!(rip_constant(&i, k, RIP_ENUMERATION_CAP).unwrap().delta < 1e-14);
        }
    }

    #[test]
    fn rip_counts_and_modes() {
        let a = gen_dictionary(&ModelConfig::new(24, 12, 1, 2, 9)).unwrap();
        let ex = rip_constant(&a, 4, RIP_ENUMERATION_CAP).unwrap();
        assert_eq!(ex.mode, RipMode::Exhaustive);
        assert_eq!(ex.supports_checked, 495);
        let sm = rip_constant_with(&a, 4, 0, 200, 1).unwrap();
        assert_eq!(sm.mode, RipMode::Sampled(200));
        assert!(sm.delta <= ex.delta);
        assert!(rip_constant(&a, 25, 10).is_err());
    }

    #[test]
    fn rip_power_path_agrees_with_direct() {
        let a = gen_dictionary(&ModelConfig::new(40, 20, 1, 2, 2)).unwrap();
        let gram = a.matrix().tr_mul(a.matrix());
        let supp: Vec<usize> = (0..18).collect();
        let sub = DMatrix::from_fn(18, 18, |i, j| gram[(i, j)]);
        let ev = SymmetricEigen::new(sub).eigenvalues;
        let direct = (ev.max() - 1.0).max(1.0 - ev.min());
        assert!((support_deviation(&gram, &supp) - direct).abs() < 1e-8);
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(12, 4), 495);
        assert_eq!(binomial(5, 0), 1);
        assert_eq!(binomial(3, 4), 0);
        assert!(binomial(200, 6) > RIP_ENUMERATION_CAP as u128);
    }

    #[test]
    fn spectral_norm_closed_forms() {
        assert!((spectral_norm(&DMatrix::identity(5, 5), 1e-12).unwrap() - 1.0).abs() < 1e-12);
        let u = DVector::from_vec(vec![2.0, 0.0, 0.0]);
        let v = DVector::from_vec(vec![0.0, 0.6 * 3.0, 0.8 * 3.0]);
        let w = &u * v.transpose();
        assert!((spectral_norm(&w, 1e-12).unwrap() - 6.0).abs() < 1e-9);
        assert_eq!(spectral_norm(&DMatrix::zeros(3, 4), 1e-12).unwrap(), 0.0);
        let mut bad = DMatrix::zeros(2, 2);
        bad[(1, 0)] = f64::NAN;
        assert!(matches!(spectral_norm(&bad, 1e-10), Err(Error::NonFinite { row: 1, col: 0 })));
    }

    #[test]
    fn covariance_oracle_cases() {
        let c = covariance_oracle(5, 1, 0.7).unwrap();
        assert_eq!(c, DMatrix::identity(5, 5) * 0.2);
        let mu = 0.6;
        let c = covariance_oracle(2, 2, mu).unwrap();
        let expected = DMatrix::identity(2, 2) * (1.0 - mu * mu) + DMatrix::from_element(2, 2, mu * mu);
        assert!((c - expected).amax() < 1e-15);
        assert!(covariance_oracle(3, 4, 0.0).is_err());
        assert!(covariance_oracle(3, 1, 1.5).is_err());
    }

    #[test]
    fn covariance_oracle_trace_and_spectrum() {
        for (r, s, mu) in [(10, 3, 0.0), (10, 5, 1.0), (40, 7, 0.5), (8, 4, -0.9)] {
            let c = covariance_oracle(r, s, mu).unwrap();
            assert!((c.trace() - s as f64).abs() < 1e-12);
            let ev = SymmetricEigen::new(c).eigenvalues;
            let (rf, sf) = (r as f64, s as f64);
            assert!(ev.min() >= sf / (2.0 * rf) - 1e-12);
            assert!(ev.max() <= 2.0 * sf * sf / rf + 1e-12);
        }
    }

    #[test]
    fn concentration_flags_adversarial_supports() {
        let cols = (0..50).map(|_| vec![(0, 1.0), (1, 1.0)]).collect();
        let x = CoefficientMatrix::from_columns(10, cols);
        let rep = support_concentration_check(&x, 2, 0.2, 1.0).unwrap();
        assert_eq!(rep.count_violations.len(), 10);
        assert_eq!(rep.violations(), 10);
    }

    #[test]
    fn spectral_check_support_violation() {
        let x = CoefficientMatrix::from_columns(3, vec![vec![(0, 1.0)], vec![(2, -1.0)]]);
        let mut w = DMatrix::zeros(3, 2);
        assert!(support_spectral_check(&w, &x, 1).unwrap());
        w[(1, 0)] = 0.5;
        assert!(matches!(
            support_spectral_check(&w, &x, 1),
            Err(Error::SupportViolation { row: 1, col: 0 })
        ));
    }

    #[test]
    fn schur_small_cases() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let zero = DMatrix::zeros(1, 1);
        let inv = schur_block_inverse(&one, &zero, &zero, &one).unwrap();
        assert_eq!(inv, DMatrix::identity(2, 2));

        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let d = DMatrix::from_row_slice(1, 1, &[4.0]);
        let inv = schur_block_inverse(&a, &DMatrix::zeros(2, 1), &DMatrix::zeros(1, 2), &d).unwrap();
        let a_inv = a.try_inverse().unwrap();
        assert!((inv.view((0, 0), (2, 2)) - a_inv).amax() < 1e-15);
        assert!((inv[(2, 2)] - 0.25).abs() < 1e-15);
        assert_eq!(inv[(0, 2)], 0.0);

        let singular = DMatrix::zeros(1, 1);
        assert!(matches!(
            schur_block_inverse(&singular, &zero, &zero, &one),
            Err(Error::SingularBlock(_))
        ));
    }
}
