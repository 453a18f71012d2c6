mod common;

use common::{gradient_relative_error, random_embeddings, random_graph};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn analytic_gradient_matches_central_differences(seed in any::<u64>(), dim in 1usize..=4, layers in 0usize..=3) {
        let g = random_graph(seed);
        prop_assert!(g.node_count() <= 10);
        let e0 = random_embeddings(g.node_count(), dim, seed);
        let err = gradient_relative_error(&g, &e0, layers, 1e-3, 1e-5);
        prop_assert!(err < 1e-4, "relative error {err}");
    }
}

#[test]
fn gradient_without_regularization_vanishes_only_at_stationary_points() {
    let g = random_graph(7);
    let e0 = random_embeddings(g.node_count(), 3, 7);
    assert!(gradient_relative_error(&g, &e0, 2, 0.0, 1e-5) < 1e-4);
    let zeros = permassist_core::cf::Embeddings::zeros(g.node_count(), 3);
    let (_, grad) = permassist_core::cf::loss_and_gradient(&g, &zeros, 2, 0.0);
    assert!(grad.data.iter().all(|x| *x == 0.0), "zero embeddings are a saddle of the dot-product loss");
}
