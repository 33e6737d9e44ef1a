//! Property tests for the spec-level invariants.

use art_core::kmeans::{self, Codebook, PointSet};
use art_core::mcm::{self, McmConfig};
use art_core::persistence;
use art_core::rvq::{CodebookStack, FeatureSequence, TokenSequence};
use proptest::prelude::*;

fn finite_f32() -> impl Strategy<Value = f32> {
    (-100.0f32..100.0).prop_map(|v| v)
}

prop_compose! {
    fn point_set(max_points: usize, max_dim: usize)
        (dim in 1..=max_dim, count in 1..=max_points)
        (data in prop::collection::vec(finite_f32(), count * dim), dim in Just(dim))
        -> PointSet
    {
        PointSet::new(data, dim).unwrap()
    }
}

proptest! {
    #[test]
    fn assignment_is_optimal(
        points in point_set(30, 5),
        k in 1usize..=8,
        raw in prop::collection::vec(finite_f32(), 8 * 5),
    ) {
        let dim = points.dim();
        let cb_data: Vec<f32> = raw.iter().copied().cycle().take(k * dim).collect();
        let codebook = Codebook::new(cb_data, k, dim).unwrap();
        let assignments = kmeans::assign(&points, &codebook).unwrap();
        for (i, v) in points.rows().enumerate() {
            let d_assigned: f64 = v.iter().zip(codebook.centroid(assignments[i]).iter())
                .map(|(&a, &b)| ((a - b) as f64).powi(2)).sum();
            for j in 0..k {
                let d: f64 = v.iter().zip(codebook.centroid(j).iter())
                    .map(|(&a, &b)| ((a - b) as f64).powi(2)).sum();
                // Optimal, and ties broken toward the lower index.
                prop_assert!(d_assigned < d || (d_assigned == d && assignments[i] <= j));
            }
        }
    }

    #[test]
    fn features_round_trip(points in point_set(20, 6)) {
        let seq = FeatureSequence::from_points(points);
        let mut buf = Vec::new();
        persistence::write_features(&seq, &mut buf).unwrap();
        prop_assert_eq!(persistence::read_features(buf.as_slice()).unwrap(), seq);
    }

    #[test]
    fn tokens_round_trip(
        n in 1usize..=4,
        l in 1usize..=24,
        k in 1u32..=32,
        raw in prop::collection::vec(any::<u32>(), 4 * 24),
    ) {
        let codes: Vec<u32> = raw.iter().take(n * l).map(|&c| c % k).collect();
        let tokens = TokenSequence::new(codes, n, l, k).unwrap();
        let mut buf = Vec::new();
        persistence::write_tokens(&tokens, &mut buf).unwrap();
        prop_assert_eq!(persistence::read_tokens(buf.as_slice()).unwrap(), tokens);
    }

    #[test]
    fn stack_round_trip(
        n in 1usize..=3,
        k in 1usize..=8,
        dim in 1usize..=5,
        raw in prop::collection::vec(finite_f32(), 3 * 8 * 5),
    ) {
        let layers: Vec<Codebook> = (0..n).map(|layer| {
            let start = layer * k * dim;
            Codebook::new(raw[start..start + k * dim].to_vec(), k, dim).unwrap()
        }).collect();
        let stack = CodebookStack::new(layers).unwrap();
        let mut buf = Vec::new();
        persistence::write_codebook_stack(&stack, &mut buf).unwrap();
        prop_assert_eq!(persistence::read_codebook_stack(buf.as_slice()).unwrap(), stack);
    }

    #[test]
    fn mask_fraction_lower_bound(
        length in 1usize..=2000,
        ratio in 0.0f64..=1.0,
        span in 1usize..=20,
        seed in any::<u64>(),
    ) {
        let cfg = McmConfig { mask_ratio: ratio, span_length: span, seed };
        let mask = mcm::generate_mask(length, &cfg).unwrap();
        prop_assert!(mask.masked_fraction() >= ratio.min(1.0) - 1e-12);
        // Overshoot bounded by one span.
        let upper = ratio + span as f64 / length as f64;
        prop_assert!(mask.masked_fraction() <= upper + 1e-12);
    }
}
