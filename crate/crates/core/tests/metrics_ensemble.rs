use emoclass::ensemble::Member;
use emoclass::{f1_scores, weighted_vote, EnsembleSpec};
use ndarray::Array2;
use proptest::prelude::*;

fn matrix(n: usize, k: usize) -> impl Strategy<Value = Array2<u8>> {
    proptest::collection::vec(0u8..2, n * k)
        .prop_map(move |v| Array2::from_shape_vec((n, k), v).unwrap())
}

fn pred_gold() -> impl Strategy<Value = (Array2<u8>, Array2<u8>)> {
    (1usize..20, 1usize..6).prop_flat_map(|(n, k)| (matrix(n, k), matrix(n, k)))
}

fn permute_rows(m: &Array2<u8>, order: &[usize]) -> Array2<u8> {
    Array2::from_shape_fn(m.dim(), |(i, j)| m[[order[i], j]])
}

fn permute_cols(m: &Array2<u8>, order: &[usize]) -> Array2<u8> {
    Array2::from_shape_fn(m.dim(), |(i, j)| m[[i, order[j]]])
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut v: Vec<usize> = (0..n).collect();
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
    rand::seq::SliceRandom::shuffle(v.as_mut_slice(), &mut rng);
    v
}

proptest! {
    #[test]
    fn macro_f1_permutation_invariant((pred, gold) in pred_gold(), s1 in any::<u64>(), s2 in any::<u64>()) {
        let base = f1_scores(&pred, &gold).unwrap().macro_f1;
        let rows = shuffled(pred.nrows(), s1);
        let r = f1_scores(&permute_rows(&pred, &rows), &permute_rows(&gold, &rows)).unwrap().macro_f1;
        prop_assert_eq!(r, base);
        let cols = shuffled(pred.ncols(), s2);
        let c = f1_scores(&permute_cols(&pred, &cols), &permute_cols(&gold, &cols)).unwrap().macro_f1;
        prop_assert!((c - base).abs() < 1e-12);
    }

    #[test]
    fn f1_bounds((pred, gold) in pred_gold()) {
        let r = f1_scores(&pred, &gold).unwrap();
        for s in &r.per_emotion {
            prop_assert!((0.0..=1.0).contains(&s.f1));
            prop_assert_eq!(s.f1 == 1.0, s.tp > 0 && s.fp == 0 && s.fn_ == 0);
        }
        prop_assert!((0.0..=1.0).contains(&r.macro_f1));
    }

    #[test]
    fn vote_is_scale_invariant(
        preds in proptest::collection::vec(matrix(4, 3), 1..6),
        weights in proptest::collection::vec(0.0f64..10.0, 6),
        c in 0.001f64..1000.0,
    ) {
        let build = |scale: f64| {
            let members = preds.iter().zip(&weights).enumerate()
                .map(|(i, (p, w))| Member { name: format!("m{i}"), predictions: p.clone(), weight: w * scale })
                .collect();
            weighted_vote(&EnsembleSpec::new(members, "x").unwrap())
        };
        prop_assert_eq!(build(1.0), build(c));
    }

    #[test]
    fn single_member_identity(p in matrix(5, 4), w in 0.0f64..5.0) {
        let spec = EnsembleSpec::new(vec![Member { name: "a".into(), predictions: p.clone(), weight: w }], "x").unwrap();
        prop_assert_eq!(weighted_vote(&spec), p);
    }
}
