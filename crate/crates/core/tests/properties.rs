//! Invariants over random inputs.

use altmin_core::recovery::top_s_support;
use altmin_core::{
    dist_dict, gen_samples, grades_recover, l1_recover, least_squares_update, normalize_columns, threshold_op,
    CoefficientMatrix, ModelConfig, SolverConfig,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-2.0f64..2.0, rows * cols).prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn grades_output_is_s_sparse(seed in 0u64..1000, s in 1usize..4, j in 0usize..20) {
        let inst = gen_samples(&ModelConfig::new(12, 16, 20, 2, seed)).unwrap();
        let y = inst.samples.matrix().column(j).into_owned();
        let x = grades_recover(&inst.dictionary, y.as_view(), s, &SolverConfig::grades(s)).unwrap().x;
        prop_assert!(x.iter().filter(|v| **v != 0.0).count() <= s);
    }

    #[test]
    fn l1_output_is_feasible(seed in 0u64..1000, eps in 1e-6f64..1e-1) {
        let inst = gen_samples(&ModelConfig::new(10, 12, 1, 2, seed)).unwrap();
        let y = inst.samples.matrix().column(0).into_owned();
        let rec = l1_recover(&inst.dictionary, y.as_view(), eps, &SolverConfig::l1(2, eps)).unwrap();
        let res = (&y - inst.dictionary.matrix() * &rec.x).norm();
        prop_assert!(res <= eps * (1.0 + 1e-9), "{res} > {eps}");
    }

    #[test]
    fn threshold_is_idempotent_and_bounded(m in matrix(5, 7), rho in 0.0f64..1.5) {
        let x = CoefficientMatrix::from_dense(m);
        let once = threshold_op(&x, rho);
        let twice = threshold_op(&once, rho);
        prop_assert_eq!(twice.entries(), once.entries());
        for (a, b) in once.entries().iter().zip(x.entries().iter()) {
            prop_assert!(*a == 0.0 || (*a == *b && a.abs() > rho));
        }
    }

    #[test]
    fn top_s_keeps_largest_magnitudes(v in prop::collection::vec(-5.0f64..5.0, 1..30), s in 1usize..10) {
        let x = DVector::from_vec(v);
        let keep = top_s_support(x.as_slice(), s);
        prop_assert_eq!(keep.len(), s.min(x.len()));
        let floor = keep.iter().map(|&i| x[i].abs()).fold(f64::INFINITY, f64::min);
        for i in (0..x.len()).filter(|i| !keep.contains(i)) {
            prop_assert!(x[i].abs() <= floor);
        }
    }

    #[test]
    fn dist_dict_is_sign_and_scale_invariant(m in matrix(6, 4), flips in prop::collection::vec(prop::bool::ANY, 4)) {
        prop_assume!(m.column_iter().all(|c| c.norm() > 1e-3));
        let a = normalize_columns(m.clone()).unwrap();
        let mut flipped = m.clone();
        for (j, f) in flips.iter().enumerate() {
            let scale = if *f { -3.0 } else { 0.5 };
            flipped.column_mut(j).scale_mut(scale);
        }
        let b = normalize_columns(flipped).unwrap();
        prop_assert!(dist_dict(&a, &b).unwrap() < 1e-7);
    }

    #[test]
    fn least_squares_residual_is_orthogonal(seed in 0u64..500) {
        let inst = gen_samples(&ModelConfig::new(8, 5, 50, 2, seed)).unwrap();
        let a = least_squares_update(&inst.samples, &inst.coefficients).unwrap();
        let residual = inst.samples.matrix() - &a * inst.coefficients.entries();
        let normal = residual * inst.coefficients.entries().transpose();
        prop_assert!(normal.amax() < 1e-9, "{}", normal.amax());
    }
}
