//! Property tests over random instances: nonnegativity of the
//! multiplicative updates, Laplacian positive semidefiniteness, and
//! metric invariances.

use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unmix::{
    build_knn_graph, sad, update_abundances, update_endmembers, ObservationMatrix, SigmaPolicy,
    Variant,
};

fn positive_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.gen::<f64>() + 1e-3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Every iterate of every variant stays entrywise nonnegative.
    #[test]
    fn iterates_stay_nonnegative(seed in 0u64..10_000, variant_idx in 0usize..4) {
        let variant = [Variant::Nmf, Variant::SparseNmf, Variant::Gnmf, Variant::SparseGnmf][variant_idx];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = rng.gen_range(2..8);
        let p = rng.gen_range(1..4);
        let n = rng.gen_range(4..10);
        let x = positive_matrix(&mut rng, l, n);
        let mut a = positive_matrix(&mut rng, l, p);
        let mut s = positive_matrix(&mut rng, p, n);

        let graph = if variant.has_graph() {
            let obs = ObservationMatrix::from_data(x.clone()).unwrap();
            Some(build_knn_graph(&obs, 2.min(n - 1), SigmaPolicy::MedianHeuristic).unwrap())
        } else {
            None
        };
        let lambda = if variant.has_sparsity() { 0.05 } else { 0.0 };
        let mu = if variant.has_graph() { 0.1 } else { 0.0 };

        for _ in 0..6 {
            a = update_endmembers(&a, &x, &s, 1e-12).unwrap();
            s = update_abundances(&s, &a, &x, lambda, mu, graph.as_ref(), 1e-12).unwrap();
            prop_assert!(a.iter().all(|&v| v >= 0.0 && v.is_finite()));
            prop_assert!(s.iter().all(|&v| v >= 0.0 && v.is_finite()));
        }
    }

    /// The graph quadratic form is nonnegative for arbitrary S.
    #[test]
    fn laplacian_quadratic_nonnegative(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(4..30);
        let bands = rng.gen_range(2..6);
        let p = rng.gen_range(1..5);
        let x = positive_matrix(&mut rng, bands, n);
        let obs = ObservationMatrix::from_data(x).unwrap();
        let graph = build_knn_graph(&obs, rng.gen_range(1..4).min(n - 1), SigmaPolicy::MedianHeuristic).unwrap();
        // S with signed entries: positivity of the form must not depend
        // on abundance nonnegativity.
        let s = Array2::from_shape_fn((p, n), |_| rng.gen::<f64>() - 0.5);
        let q = unmix::AbundanceMatrix::from_raw(s).unwrap();
        prop_assert!(unmix::graph_quadratic(&q, &graph).unwrap() >= -1e-12);
    }

    /// Spectral angles are symmetric and invariant to positive scaling.
    #[test]
    fn sad_symmetry_and_scale_invariance(seed in 0u64..10_000, scale in 1e-3f64..1e3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = rng.gen_range(2..12);
        let a = Array2::from_shape_fn((len, 1), |_| rng.gen::<f64>() + 1e-6);
        let b = Array2::from_shape_fn((len, 1), |_| rng.gen::<f64>() + 1e-6);
        let ab = sad(a.column(0), b.column(0)).unwrap();
        let ba = sad(b.column(0), a.column(0)).unwrap();
        prop_assert_eq!(ab, ba);
        let scaled = b.mapv(|v| v * scale);
        let ab_scaled = sad(a.column(0), scaled.column(0)).unwrap();
        prop_assert!((ab - ab_scaled).abs() < 1e-7);
    }
}
