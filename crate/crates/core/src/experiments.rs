//! Experiment harness: single oracle-aware trials, one-shot vs. iterative
//! comparison, sample-complexity sweeps and the diagnostics report.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;

use crate::diagnostics::{
    coherence, covariance_oracle, empirical_covariance, rip_constant, spectral_norm, support_concentration_check,
    RipMode, RIP_ENUMERATION_CAP,
};
use crate::error::{invalid, Result};
use crate::model::{AccuracySchedule, CoefficientMatrix, Dictionary, ModelConfig, NonzeroLaw};
use crate::recovery::SolverConfig;
use crate::rng::derive_seed;
use crate::synth::{gen_samples, perturb_dictionary, Instance, PerturbConfig};
use crate::update::{altmin_dict, AltMinConfig, Oracle, TrialReport};

/// A trial succeeds when the final error is below this.
pub const SUCCESS_TOL: f64 = 1e-6;
/// Rounds per trial.
pub const SUCCESS_ITERS: usize = 25;
pub const PERTURB_SIGMA: f64 = 0.5;

/// Generates an instance, perturbs its dictionary and runs alternating minimization
/// with the truth as oracle.
pub fn run_trial(model: &ModelConfig, sigma: f64, altmin: &AltMinConfig) -> Result<(Instance, TrialReport)> {
    let inst = gen_samples(model)?;
    let a0 = perturb_dictionary(&inst.dictionary, PerturbConfig::for_model(sigma, model))?;
    let oracle = Oracle {
        dictionary: &inst.dictionary,
        coefficients: &inst.coefficients,
    };
    let report = altmin_dict(&inst.samples, &a0, altmin, Some(oracle))?;
    Ok((inst, report))
}

pub fn is_success(report: &TrialReport, tol: f64) -> bool {
    !report.aborted() && matches!(report.final_error(), Some(e) if e < tol)
}

/// `⌈2.5 s r ln r⌉`, the operating point of the one-shot comparison.
pub fn default_sample_size(s: usize, r: usize) -> usize {
    (2.5 * s as f64 * r as f64 * (r as f64).ln()).ceil() as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub n: usize,
    pub initial_error: f64,
    /// `None` when the run aborted before completing a round.
    pub final_error: Option<f64>,
}

/// Initial (perturbation) error against the error after `altmin.iters` rounds, per `n`.
pub fn compare(base: &ModelConfig, ns: &[usize], sigma: f64, altmin: &AltMinConfig) -> Result<Vec<CompareRow>> {
    ns.iter()
        .map(|&n| {
            let model = ModelConfig { n, ..base.clone() };
            let (_, rep) = run_trial(&model, sigma, altmin)?;
            Ok(CompareRow {
                n,
                initial_error: rep.initial_error.unwrap_or(f64::NAN),
                final_error: rep.final_error().filter(|_| !rep.records.is_empty()),
            })
        })
        .collect()
}

/// Header `n,initial_error,final_error`.
pub fn write_compare_csv<W: Write>(mut out: W, rows: &[CompareRow]) -> Result<()> {
    writeln!(out, "n,initial_error,final_error")?;
    for r in rows {
        let fin = r.final_error.map(|e| format!("{e:e}")).unwrap_or_default();
        writeln!(out, "{},{:e},{}", r.n, r.initial_error, fin)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub r_values: Vec<usize>,
    pub n_over_r: Vec<f64>,
    pub trials: usize,
    pub success_tol: f64,
    pub iters: usize,
    /// `d = round(d_over_r · r)`.
    pub d_over_r: f64,
    pub s: usize,
    pub law: NonzeroLaw,
    pub sigma: f64,
    pub root_seed: u64,
    pub solver: SolverConfig,
    pub schedule: AccuracySchedule,
}

impl SweepConfig {
    /// `r ∈ {64, 128}`, `d = r/2`, `s = 3`, `n/r ∈ {1, …, 10}`, 10 trials per cell.
    pub fn desk_scale(root_seed: u64) -> Self {
        Self {
            r_values: vec![64, 128],
            n_over_r: (1..=10).map(f64::from).collect(),
            trials: 10,
            success_tol: SUCCESS_TOL,
            iters: SUCCESS_ITERS,
            d_over_r: 0.5,
            s: 3,
            law: NonzeroLaw::UniformPm12,
            sigma: PERTURB_SIGMA,
            root_seed,
            solver: SolverConfig::grades(3),
            schedule: AccuracySchedule::off(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r_values.is_empty() {
            return Err(invalid("r_values", "grid is empty"));
        }
        if self.n_over_r.is_empty() {
            return Err(invalid("n_over_r", "grid is empty"));
        }
        if self.n_over_r.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(invalid("n_over_r", "entries must be positive"));
        }
        if self.trials == 0 {
            return Err(invalid("trials", "must be at least 1"));
        }
        if self.iters == 0 {
            return Err(invalid("iters", "must be at least 1"));
        }
        if !(self.d_over_r > 0.0) {
            return Err(invalid("d_over_r", "must be positive"));
        }
        Ok(())
    }

    pub fn dim_for(&self, r: usize) -> usize {
        ((self.d_over_r * r as f64).round() as usize).max(1)
    }

    /// Seed of one trial: `derive_seed(root, [r, bits(n/r), trial])`.
    pub fn trial_seed(&self, r: usize, n_over_r: f64, trial: usize) -> u64 {
        derive_seed(self.root_seed, &[r as u64, n_over_r.to_bits(), trial as u64])
    }

    fn altmin(&self) -> AltMinConfig {
        AltMinConfig {
            iters: self.iters,
            solver: SolverConfig { s: self.s, ..self.solver },
            schedule: self.schedule,
            stop_tol: 0.0,
            record_trace: false,
        }
    }

    fn trial(&self, r: usize, n_over_r: f64, trial: usize) -> bool {
        let n = (n_over_r * r as f64).round() as usize;
        let model = ModelConfig::new(self.dim_for(r), r, n, self.s, self.trial_seed(r, n_over_r, trial)).with_law(self.law);
        match run_trial(&model, self.sigma, &self.altmin()) {
            Ok((_, rep)) => is_success(&rep, self.success_tol),
            Err(_) => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub r: usize,
    pub n_over_r: f64,
    pub trials: usize,
    pub successes: usize,
}

impl SweepCell {
    pub fn prob(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }
}

/// Runs every `(r, n/r, trial)` independently; cells come back in grid order.
pub fn sweep(cfg: &SweepConfig) -> Result<Vec<SweepCell>> {
    cfg.validate()?;
    let jobs: Vec<(usize, f64, usize)> = cfg
        .r_values
        .iter()
        .flat_map(|&r| {
            cfg.n_over_r
                .iter()
                .flat_map(move |&k| (0..cfg.trials).map(move |t| (r, k, t)))
        })
        .collect();
    let outcomes: Vec<bool> = jobs.par_iter().map(|&(r, k, t)| cfg.trial(r, k, t)).collect();
    Ok(jobs
        .chunks(cfg.trials)
        .zip(outcomes.chunks(cfg.trials))
        .map(|(job, ok)| SweepCell {
            r: job[0].0,
            n_over_r: job[0].1,
            trials: cfg.trials,
            successes: ok.iter().filter(|b| **b).count(),
        })
        .collect())
}

/// Header `r,n_over_r,trials,successes,prob`.
pub fn write_sweep_csv<W: Write>(mut out: W, cells: &[SweepCell]) -> Result<()> {
    writeln!(out, "r,n_over_r,trials,successes,prob")?;
    for c in cells {
        writeln!(out, "{},{},{},{},{}", c.r, c.n_over_r, c.trials, c.successes, c.prob())?;
    }
    Ok(())
}

/// Cells of one `r`, in grid order.
pub fn curve(cells: &[SweepCell], r: usize) -> Vec<&SweepCell> {
    cells.iter().filter(|c| c.r == r).collect()
}

/// Grid index of the first cell of `r` with success probability at least one half.
pub fn transition_index(cells: &[SweepCell], r: usize) -> Option<usize> {
    curve(cells, r).iter().position(|c| c.prob() >= 0.5)
}

/// Diagnostics of a dictionary (and optionally its coefficients), printed as `key=value`.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub coherence: f64,
    pub mu0: f64,
    pub delta_2s: f64,
    pub mode: RipMode,
    pub spectral_norm: f64,
    pub mu1_effective: f64,
    pub covariance_max_err: Option<f64>,
    pub concentration_violations: Option<usize>,
    /// `25050 μ1 s³ / √d` with the measured `μ1`; above 1 the theoretical schedule grows.
    pub theory_ratio: f64,
}

/// Report keys, in output order.
pub const CHECK_KEYS: [&str; 11] = [
    "coherence",
    "mu0",
    "delta_2s",
    "mode",
    "delta_2s_lt_0.1",
    "delta_2s_le_0.2",
    "spectral_norm",
    "mu1_effective",
    "covariance_max_err",
    "concentration_violations",
    "theory_ratio",
];

/// Band half-width used for the concentration count.
pub const CONCENTRATION_DELTA: f64 = 0.2;

pub fn check(a: &Dictionary, x: Option<&CoefficientMatrix>, s: usize, law: NonzeroLaw) -> Result<CheckReport> {
    let (d, r) = (a.dim() as f64, a.atoms() as f64);
    let coh = coherence(a);
    let k = (2 * s).min(a.dim()).min(a.atoms());
    let rip = rip_constant(a, k, RIP_ENUMERATION_CAP)?;
    let sn = spectral_norm(a.matrix(), 1e-10)?;
    let mu1 = sn * (d / r).sqrt();
    let m2 = law.second_moment();
    let (cov, conc) = match x {
        Some(x) => {
            let emp = empirical_covariance(x);
            let oracle = covariance_oracle(x.rows(), s.min(x.rows()), 0.0)? * m2;
            let err = (emp - oracle).amax();
            let rep = support_concentration_check(x, s, CONCENTRATION_DELTA, m2)?;
            (Some(err), Some(rep.violations()))
        }
        None => (None, None),
    };
    Ok(CheckReport {
        coherence: coh,
        mu0: coh * d.sqrt(),
        delta_2s: rip.delta,
        mode: rip.mode,
        spectral_norm: sn,
        mu1_effective: mu1,
        covariance_max_err: cov,
        concentration_violations: conc,
        theory_ratio: 25050.0 * mu1 * (s as f64).powi(3) / d.sqrt(),
    })
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mode = match self.mode {
            RipMode::Exhaustive => "exhaustive".to_string(),
            RipMode::Sampled(k) => format!("sampled({k})"),
        };
        let na = |v: Option<String>| v.unwrap_or_else(|| "na".into());
        let values = [
            format!("{:e}", self.coherence),
            format!("{:e}", self.mu0),
            format!("{:e}", self.delta_2s),
            mode,
            (self.delta_2s < 0.1).to_string(),
            (self.delta_2s <= 0.2).to_string(),
            format!("{:e}", self.spectral_norm),
            format!("{:e}", self.mu1_effective),
            na(self.covariance_max_err.map(|v| format!("{v:e}"))),
            na(self.concentration_violations.map(|v| v.to_string())),
            format!("{:e}", self.theory_ratio),
        ];
        for (k, v) in CHECK_KEYS.iter().zip(values) {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}
