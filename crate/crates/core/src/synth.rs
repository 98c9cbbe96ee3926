//! Seeded synthetic instances of `Y = A* X*`.
//!
//! The dictionary, the coefficients and the perturbation each use their own
//! stream derived from the configuration seed, so changing `n` leaves the
//! dictionary unchanged.

use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::model::{normalize_columns, CoefficientMatrix, Dictionary, ModelConfig, NonzeroLaw, SampleSet};
use crate::rng::{derive_seed, Stream};

const DICTIONARY_STREAM: u64 = 1;
const COEFFICIENT_STREAM: u64 = 2;
const PERTURB_STREAM: u64 = 3;

/// Additive Gaussian perturbation with entry standard deviation `sigma_scale / √d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbConfig {
    pub sigma_scale: f64,
    pub seed: u64,
}

impl PerturbConfig {
    pub fn new(sigma_scale: f64, seed: u64) -> Self {
        Self { sigma_scale, seed }
    }

    /// The perturbation stream tied to a model seed (what the CLI uses).
    pub fn for_model(sigma_scale: f64, cfg: &ModelConfig) -> Self {
        Self::new(sigma_scale, derive_seed(cfg.seed, &[PERTURB_STREAM]))
    }
}

/// `d × r` matrix of i.i.d. `N(0, 1/d)` entries (standard deviation `1/√d`), not normalized.
pub fn gen_raw_dictionary(cfg: &ModelConfig) -> Result<DMatrix<f64>> {
    cfg.validate()?;
    let mut rng = Stream::new(derive_seed(cfg.seed, &[DICTIONARY_STREAM]));
    let sd = 1.0 / (cfg.d as f64).sqrt();
    Ok(DMatrix::from_fn(cfg.d, cfg.r, |_, _| sd * rng.gaussian()))
}

/// Gaussian dictionary with unit-norm columns.
pub fn gen_dictionary(cfg: &ModelConfig) -> Result<Dictionary> {
    normalize_columns(gen_raw_dictionary(cfg)?)
}

fn draw_value(rng: &mut Stream, law: NonzeroLaw) -> f64 {
    match law {
        NonzeroLaw::Rademacher => rng.sign(),
        NonzeroLaw::UniformPm12 => rng.sign() * (1.0 + rng.uniform()),
        NonzeroLaw::Custom { low, high } => rng.sign() * (low + (high - low) * rng.uniform()),
    }
}

/// `r × n` coefficients: each column has exactly `s` nonzeros on a uniform s-subset.
pub fn gen_coefficients(cfg: &ModelConfig) -> Result<CoefficientMatrix> {
    cfg.validate()?;
    let mut rng = Stream::new(derive_seed(cfg.seed, &[COEFFICIENT_STREAM]));
    let columns = (0..cfg.n)
        .map(|_| {
            let supp = rng.subset(cfg.r, cfg.s);
            supp.into_iter()
                .map(|p| (p, draw_value(&mut rng, cfg.law)))
                .collect()
        })
        .collect();
    Ok(CoefficientMatrix::from_columns(cfg.r, columns))
}

/// `Y = A X` computed column by column over the support of `X`.
pub fn observe(a: &Dictionary, x: &CoefficientMatrix, meta: Option<ModelConfig>) -> Result<SampleSet> {
    if a.atoms() != x.rows() {
        return Err(invalid(
            "coefficients",
            format!("{} rows for a dictionary with {} atoms", x.rows(), a.atoms()),
        ));
    }
    let mut y = DMatrix::zeros(a.dim(), x.cols());
    for j in 0..x.cols() {
        let mut col = y.column_mut(j);
        for &p in x.support(j) {
            col.axpy(x.entries()[(p, j)], &a.atom(p), 1.0);
        }
    }
    SampleSet::new(y, meta)
}

/// A fully generated instance.
#[derive(Debug, Clone)]
pub struct Instance {
    pub dictionary: Dictionary,
    pub coefficients: CoefficientMatrix,
    pub samples: SampleSet,
}

pub fn gen_samples(cfg: &ModelConfig) -> Result<Instance> {
    let dictionary = gen_dictionary(cfg)?;
    let coefficients = gen_coefficients(cfg)?;
    let samples = observe(&dictionary, &coefficients, Some(cfg.clone()))?;
    Ok(Instance {
        dictionary,
        coefficients,
        samples,
    })
}

/// `normalize(A* + Z)` with `Z_ij ~ N(0, (sigma_scale/√d)²)`.
pub fn perturb_dictionary(astar: &Dictionary, p: PerturbConfig) -> Result<Dictionary> {
    if !(p.sigma_scale >= 0.0 && p.sigma_scale.is_finite()) {
        return Err(invalid("sigma_scale", "must be finite and non-negative"));
    }
    if p.sigma_scale == 0.0 {
        return Ok(astar.clone());
    }
    let sd = p.sigma_scale / (astar.dim() as f64).sqrt();
    let mut rng = Stream::new(p.seed);
    let z = DMatrix::from_fn(astar.dim(), astar.atoms(), |_, _| sd * rng.gaussian());
    normalize_columns(astar.matrix() + z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::error_metric;

    #[test]
    fn dictionary_columns_are_unit_and_deterministic() {
        let cfg = ModelConfig::new(100, 200, 10, 3, 7);
        let a = gen_dictionary(&cfg).unwrap();
        for c in a.matrix().column_iter() {
            assert!((c.norm() - 1.0).abs() < 1e-12);
        }
        let b = gen_dictionary(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn raw_dictionary_scale() {
        let cfg = ModelConfig::new(100, 200, 1, 1, 5);
        let raw = gen_raw_dictionary(&cfg).unwrap();
        let var = raw.iter().map(|v| v * v).sum::<f64>() / raw.len() as f64;
        assert!((var - 0.01).abs() < 0.001, "{var}");
    }

    #[test]
    fn coefficients_have_exact_sparsity() {
        let cfg = ModelConfig::new(20, 30, 200, 3, 11);
        let x = gen_coefficients(&cfg).unwrap();
        for j in 0..x.cols() {
            assert_eq!(x.support(j).len(), 3);
            for &p in x.support(j) {
                let v = x.entries()[(p, j)].abs();
                assert!((1.0..=2.0).contains(&v));
            }
        }
        let nnz = x.entries().iter().filter(|v| **v != 0.0).count();
        assert_eq!(nnz, 600);
    }

    #[test]
    fn rademacher_values() {
        let cfg = ModelConfig::new(20, 30, 200, 3, 11).with_law(NonzeroLaw::Rademacher);
        let x = gen_coefficients(&cfg).unwrap();
        assert!(x.entries().iter().all(|v| *v == 0.0 || v.abs() == 1.0));
    }

    #[test]
    fn support_inclusion_probability() {
        let cfg = ModelConfig::new(10, 10, 100_000, 3, 2024);
        let x = gen_coefficients(&cfg).unwrap();
        for c in x.row_counts() {
            let p = c as f64 / cfg.n as f64;
            assert!((p - 0.3).abs() < 0.01, "{p}");
        }
    }

    #[test]
    fn observation_is_product() {
        let cfg = ModelConfig::new(12, 16, 50, 2, 3);
        let inst = gen_samples(&cfg).unwrap();
        let direct = inst.dictionary.matrix() * inst.coefficients.entries();
        let diff = (inst.samples.matrix() - direct).amax();
        assert!(diff < 1e-15);

        let zero = CoefficientMatrix::zeros(16, 5);
        let y = observe(&inst.dictionary, &zero, None).unwrap();
        assert!(y.matrix().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_perturbation_is_identity() {
        let cfg = ModelConfig::new(20, 40, 1, 2, 1);
        let a = gen_dictionary(&cfg).unwrap();
        assert_eq!(perturb_dictionary(&a, PerturbConfig::new(0.0, 9)).unwrap(), a);
        let p1 = perturb_dictionary(&a, PerturbConfig::new(0.5, 9)).unwrap();
        let p2 = perturb_dictionary(&a, PerturbConfig::new(0.5, 9)).unwrap();
        assert_eq!(p1, p2);
        assert!(perturb_dictionary(&a, PerturbConfig::new(-1.0, 9)).is_err());
    }

    #[test]
    fn perturbation_error_range() {
        let cfg = ModelConfig::new(100, 200, 1, 3, 4);
        let a = gen_dictionary(&cfg).unwrap();
        for seed in 0..10 {
            let a0 = perturb_dictionary(&a, PerturbConfig::new(0.5, seed)).unwrap();
            let e = error_metric(a0.matrix(), a.matrix()).unwrap();
            assert!((0.3..=0.8).contains(&e), "seed {seed}: {e}");
        }
    }
}
