//! Dictionary update and the alternating-minimization driver.
//!
//! One round: recover coefficients against the current dictionary, threshold
//! them at `9 s ε_t` (when a schedule is active), refit the dictionary by
//! least squares `Y X†`, and renormalize its columns.

use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{invalid, Error, Result};
use crate::model::{error_metric, normalize_columns, AccuracySchedule, CoefficientMatrix, Dictionary, SampleSet, ScheduleMode};
use crate::recovery::{recover_all, SolverConfig, SolverKind};

/// Relative eigenvalue floor of `XXᵀ` below which the update is refused.
pub const RANK_TOL: f64 = 1e-10;
/// Relative cutoff of the eigen-based pseudo-inverse fallback.
const PINV_CUTOFF: f64 = 1e-12;

/// `X Xᵀ` and `Y Xᵀ`, accumulated over the supports of `X`.
fn normal_equations(y: &DMatrix<f64>, x: &CoefficientMatrix) -> (DMatrix<f64>, DMatrix<f64>) {
    let r = x.rows();
    let mut gram = DMatrix::zeros(r, r);
    let mut cross = DMatrix::zeros(y.nrows(), r);
    for j in 0..x.cols() {
        let supp = x.support(j);
        let yj = y.column(j);
        for &p in supp {
            let vp = x.entries()[(p, j)];
            for &q in supp {
                gram[(p, q)] += vp * x.entries()[(q, j)];
            }
            cross.column_mut(p).axpy(vp, &yj, 1.0);
        }
    }
    (gram, cross)
}

/// `Y Xᵀ (X Xᵀ)⁻¹`, the least-squares dictionary for fixed coefficients.
pub fn least_squares_update(y: &SampleSet, x: &CoefficientMatrix) -> Result<DMatrix<f64>> {
    if x.cols() != y.len() {
        return Err(Error::ShapeMismatch {
            expected: (x.rows(), y.len()),
            found: (x.rows(), x.cols()),
        });
    }
    let (gram, cross) = normal_equations(y.matrix(), x);
    let eig = SymmetricEigen::new(gram.clone());
    let sigma_max = eig.eigenvalues.max();
    let sigma_min = eig.eigenvalues.min();
    if !(sigma_max > 0.0) || sigma_min <= RANK_TOL * sigma_max {
        return Err(Error::RankDeficient { sigma_min, sigma_max });
    }
    let at = match gram.cholesky() {
        Some(ch) => ch.solve(&cross.transpose()),
        None => {
            let inv = eig
                .eigenvalues
                .map(|l| if l > PINV_CUTOFF * sigma_max { 1.0 / l } else { 0.0 });
            let v = &eig.eigenvectors;
            v * DMatrix::from_diagonal(&inv) * v.transpose() * cross.transpose()
        }
    };
    Ok(at.transpose())
}

/// `ε_t` for the schedule. Adaptive schedules report `eps0` here; the driver
/// substitutes the measured residual from round 1 on.
pub fn accuracy_at(schedule: &AccuracySchedule, t: usize) -> f64 {
    match schedule.mode {
        ScheduleMode::Theory | ScheduleMode::Geometric => schedule.eps0 * schedule.ratio.powi(t as i32),
        ScheduleMode::Fixed | ScheduleMode::Adaptive => schedule.eps0,
        ScheduleMode::Off => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AltMinConfig {
    pub iters: usize,
    pub solver: SolverConfig,
    pub schedule: AccuracySchedule,
    /// Stop once the oracle error falls below this (only with an oracle).
    pub stop_tol: f64,
    /// Keep one record per round; when false only the final round is kept.
    pub record_trace: bool,
}

impl AltMinConfig {
    /// GraDeS with sparsity `s`, no thresholding, 25 rounds.
    pub fn new(s: usize) -> Self {
        Self {
            iters: 25,
            solver: SolverConfig::grades(s),
            schedule: AccuracySchedule::off(),
            stop_tol: 0.0,
            record_trace: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iters == 0 {
            return Err(invalid("iters", "must be at least 1"));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(invalid("stop_tol", "must be non-negative"));
        }
        self.solver.validate()?;
        self.schedule.validate()
    }
}

/// Ground truth for experiments; never consulted by the algorithm itself.
#[derive(Debug, Clone, Copy)]
pub struct Oracle<'a> {
    pub dictionary: &'a Dictionary,
    pub coefficients: &'a CoefficientMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// Zero-based round; the dictionary measured here is `A(t+1)`.
    pub t: usize,
    pub eps: f64,
    pub dict_error: Option<f64>,
    /// `max |X̂ − X*|` after aligning row signs with the current dictionary.
    pub max_dx_inf: Option<f64>,
    pub supp_ok: Option<bool>,
    pub seconds: f64,
    /// Columns whose per-sample solve did not report convergence.
    pub unconverged: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Completed,
    /// Oracle error dropped below `stop_tol`.
    Stopped,
    /// Round failed (rank-deficient coefficients or a vanished atom).
    Aborted(Error),
}

#[derive(Debug, Clone)]
pub struct TrialReport {
    pub initial_error: Option<f64>,
    pub records: Vec<IterationRecord>,
    pub dictionary: Dictionary,
    pub coefficients: Option<CoefficientMatrix>,
    pub outcome: Outcome,
}

impl TrialReport {
    /// Oracle error of the returned dictionary.
    pub fn final_error(&self) -> Option<f64> {
        self.records
            .last()
            .and_then(|r| r.dict_error)
            .or(if self.records.is_empty() { self.initial_error } else { None })
    }

    /// `[initial, after round 0, after round 1, ...]` when an oracle was supplied.
    pub fn error_sequence(&self) -> Vec<f64> {
        self.initial_error
            .into_iter()
            .chain(self.records.iter().filter_map(|r| r.dict_error))
            .collect()
    }

    pub fn aborted(&self) -> bool {
        matches!(self.outcome, Outcome::Aborted(_))
    }

    /// CSV with header `t,eps,dict_error,max_dx_inf,supp_ok,seconds`.
    ///
    /// With `timing` off the seconds column is written as 0 so the file is a pure
    /// function of the inputs.
    pub fn write_csv<W: Write>(&self, mut out: W, timing: bool) -> Result<()> {
        writeln!(out, "t,eps,dict_error,max_dx_inf,supp_ok,seconds")?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        for r in &self.records {
            writeln!(
                out,
                "{},{:e},{},{},{},{}",
                r.t,
                r.eps,
                opt(r.dict_error),
                opt(r.max_dx_inf),
                r.supp_ok.map(|b| b.to_string()).unwrap_or_default(),
                if timing { format!("{:.6}", r.seconds) } else { "0".into() },
            )?;
        }
        Ok(())
    }
}

fn max_dx_inf(a: &Dictionary, xhat: &CoefficientMatrix, oracle: &Oracle<'_>) -> f64 {
    let signs: Vec<f64> = (0..a.atoms())
        .map(|p| {
            if a.atom(p).dot(&oracle.dictionary.atom(p)) < 0.0 {
                -1.0
            } else {
                1.0
            }
        })
        .collect();
    let xs = oracle.coefficients;
    let mut worst = 0.0f64;
    for j in 0..xhat.cols() {
        for &p in xhat.support(j).iter().chain(xs.support(j)) {
            let d = signs[p] * xhat.entries()[(p, j)] - xs.entries()[(p, j)];
            worst = worst.max(d.abs());
        }
    }
    worst
}

/// Runs `cfg.iters` rounds of alternating minimization from `a0`.
pub fn altmin_dict(y: &SampleSet, a0: &Dictionary, cfg: &AltMinConfig, oracle: Option<Oracle<'_>>) -> Result<TrialReport> {
    cfg.validate()?;
    if a0.dim() != y.dim() {
        return Err(Error::ShapeMismatch {
            expected: (y.dim(), a0.atoms()),
            found: (a0.dim(), a0.atoms()),
        });
    }
    if let Some(o) = &oracle {
        if o.dictionary.matrix().shape() != a0.matrix().shape() || o.coefficients.cols() != y.len() {
            return Err(invalid("oracle", "shapes do not match the samples and dictionary"));
        }
    }
    let s = cfg.solver.s;
    let initial_error = match &oracle {
        Some(o) => Some(error_metric(a0.matrix(), o.dictionary.matrix())?),
        None => None,
    };
    let mut a = a0.clone();
    let mut records = Vec::new();
    let mut last_x = None;
    let mut outcome = Outcome::Completed;
    let mut adaptive_eps = cfg.schedule.eps0;

    for t in 0..cfg.iters {
        let started = Instant::now();
        let eps = match cfg.schedule.mode {
            ScheduleMode::Adaptive => adaptive_eps,
            _ => accuracy_at(&cfg.schedule, t),
        };
        let rho = if cfg.schedule.thresholds() { 9.0 * s as f64 * eps } else { 0.0 };
        let mut solver = cfg.solver;
        if solver.kind == SolverKind::L1Constrained && cfg.schedule.thresholds() {
            solver.residual_eps = eps;
        }
        let batch = recover_all(&a, y, &solver, rho)?;
        if cfg.schedule.mode == ScheduleMode::Adaptive {
            adaptive_eps = batch.median_residual().max(f64::MIN_POSITIVE);
        }
        let (supp_ok, dx) = match &oracle {
            Some(o) => (
                Some(batch.coefficients.support_within(o.coefficients)),
                Some(max_dx_inf(&a, &batch.coefficients, o)),
            ),
            None => (None, None),
        };
        let refit = least_squares_update(y, &batch.coefficients).and_then(normalize_columns);
        match refit {
            Ok(next) => a = next,
            Err(e) => {
                outcome = Outcome::Aborted(e);
                last_x = Some(batch.coefficients);
                break;
            }
        }
        let dict_error = match &oracle {
            Some(o) => Some(error_metric(a.matrix(), o.dictionary.matrix())?),
            None => None,
        };
        let record = IterationRecord {
            t,
            eps,
            dict_error,
            max_dx_inf: dx,
            supp_ok,
            seconds: started.elapsed().as_secs_f64(),
            unconverged: batch.unconverged(),
        };
        if !cfg.record_trace {
            records.clear();
        }
        records.push(record);
        last_x = Some(batch.coefficients);
        if matches!(dict_error, Some(e) if e < cfg.stop_tol) {
            outcome = Outcome::Stopped;
            break;
        }
    }

    Ok(TrialReport {
        initial_error,
        records,
        dictionary: a,
        coefficients: last_x,
        outcome,
    })
}
