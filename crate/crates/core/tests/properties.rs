use proptest::collection::vec;
use proptest::prelude::*;

use prunerank_core::attention::{
    attention_output, check_pruning_error_bound, pruned_attention_output, softmax,
    tail_gap_bound_check,
};
use prunerank_core::cost_model::{
    decode_flops, f_base, f_zip, prefill_flops, total_flops, ArchParams, WorkloadSpec,
};
use prunerank_core::linalg::{cosine_similarity, similarity_matrix};
use prunerank_core::listwise::{apply_permutation, rank_from_logits, Permutation};
use prunerank_core::losses::{
    geometric_target, soft_rank_loss, weighted_ranknet_loss, TargetRanking,
};
use prunerank_core::metrics::{ndcg_at_k, recall_at_k, spearman, QueryJudgment};
use prunerank_core::pruning::{
    keep_count, lse_scores, maxsim_scores, prune_by_scores, select_topk_preserve_order,
    top_k_ranked,
};
use prunerank_core::{EmbeddingMatrix, SimilarityMatrix};

fn matrix(max_rows: usize, max_dim: usize) -> impl Strategy<Value = EmbeddingMatrix> {
    (1..=max_rows, 1..=max_dim).prop_flat_map(|(r, d)| {
        vec(-1.0f64..1.0, r * d).prop_filter_map("zero row", move |data| {
            let m = EmbeddingMatrix::new(r, d, data).ok()?;
            let nonzero = m
                .iter_rows()
                .all(|row| row.iter().map(|x| x * x).sum::<f64>() > 1e-6);
            nonzero.then_some(m)
        })
    })
}

fn sim_matrix() -> impl Strategy<Value = SimilarityMatrix> {
    (1usize..=12, 1usize..=40).prop_flat_map(|(nq, n)| {
        vec(-1.0f64..=1.0, nq * n).prop_map(move |s| SimilarityMatrix::new(nq, n, s).unwrap())
    })
}

fn permutation(max: usize) -> impl Strategy<Value = Permutation> {
    (1..=max)
        .prop_flat_map(|m| Just((0..m).collect::<Vec<_>>()).prop_shuffle())
        .prop_map(|v| Permutation::new(v).unwrap())
}

fn judgment() -> impl Strategy<Value = QueryJudgment> {
    (1usize..=20)
        .prop_flat_map(|m| {
            (
                Just((0..m).collect::<Vec<_>>()).prop_shuffle(),
                vec(any::<bool>(), m),
                0..m,
            )
        })
        .prop_map(|(ranked, flags, forced)| {
            let mut rel: Vec<usize> = (0..ranked.len()).filter(|&i| flags[i]).collect();
            rel.push(forced);
            QueryJudgment::new(rel, ranked).unwrap()
        })
}

proptest! {
    #[test]
    fn cosine_symmetric_and_scale_invariant(
        pair in (1usize..16).prop_flat_map(|d| (vec(-1.0f64..1.0, d), vec(-1.0f64..1.0, d))),
        a in 0.01f64..100.0,
    ) {
        let (h, v) = pair;
        prop_assume!(h.iter().any(|x| x.abs() > 1e-3) && v.iter().any(|x| x.abs() > 1e-3));
        let c = cosine_similarity(&h, &v).unwrap();
        prop_assert!((c - cosine_similarity(&v, &h).unwrap()).abs() < 1e-12);
        let hs: Vec<f64> = h.iter().map(|x| a * x).collect();
        prop_assert!((c - cosine_similarity(&hs, &v).unwrap()).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&c));
    }

    #[test]
    fn similarity_matrix_matches_pairwise(
        pair in (1usize..8).prop_flat_map(|d| (
            vec(vec(-1.0f64..1.0, d), 1..6),
            vec(vec(-1.0f64..1.0, d), 1..20),
        ))
    ) {
        let (q, v) = pair;
        prop_assume!(q.iter().chain(&v).all(|r| r.iter().any(|x| x.abs() > 1e-3)));
        let qm = EmbeddingMatrix::from_rows(&q).unwrap();
        let vm = EmbeddingMatrix::from_rows(&v).unwrap();
        let s = similarity_matrix(&qm, &vm).unwrap();
        for (t, qr) in q.iter().enumerate() {
            for (j, vr) in v.iter().enumerate() {
                prop_assert!((s.get(t, j) - cosine_similarity(qr, vr).unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scaling_embeddings_leaves_similarity_unchanged(m in matrix(8, 6), a in 0.1f64..50.0) {
        let s = similarity_matrix(&m, &m).unwrap();
        let t = similarity_matrix(&m.scaled(a).unwrap(), &m).unwrap();
        for (x, y) in s.as_slice().iter().zip(t.as_slice()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn max_lse_sandwich(s in sim_matrix()) {
        let a = maxsim_scores(&s).unwrap();
        let g = lse_scores(&s).unwrap();
        let ln_nq = (s.n_query() as f64).ln();
        for (a, g) in a.iter().zip(&g) {
            prop_assert!(*a <= g + 1e-9 && *g <= a + ln_nq + 1e-9);
        }
    }

    #[test]
    fn topk_separates_kept_from_dropped(scores in vec(-5.0f64..5.0, 1..80), rho in 0.001f64..=1.0) {
        let r = prune_by_scores(&scores, rho).unwrap();
        let n = scores.len();
        prop_assert_eq!(r.keep_count, keep_count(rho, n).unwrap());
        prop_assert_eq!(r.kept_indices.len(), r.keep_count);
        prop_assert!(r.kept_indices.windows(2).all(|w| w[0] < w[1]));
        let kept_min = r.kept_indices.iter().map(|&j| scores[j]).fold(f64::INFINITY, f64::min);
        let dropped_max = (0..n)
            .filter(|j| r.kept_indices.binary_search(j).is_err())
            .map(|j| scores[j])
            .fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(kept_min >= dropped_max);
    }

    #[test]
    fn keep_count_monotone_and_bounded(n in 1usize..5000, r1 in 0.001f64..=1.0, r2 in 0.001f64..=1.0) {
        let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        let (a, b) = (keep_count(lo, n).unwrap(), keep_count(hi, n).unwrap());
        prop_assert!(1 <= a && a <= b && b <= n);
    }

    #[test]
    fn top_k_ranked_is_prefix_of_full_order(scores in vec(-3i32..3, 1..40), k in 1usize..40) {
        let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
        let k = k.min(scores.len());
        let full = top_k_ranked(&scores, scores.len()).unwrap();
        prop_assert_eq!(&top_k_ranked(&scores, k).unwrap()[..], &full[..k]);
        let mut set = full[..k].to_vec();
        set.sort_unstable();
        prop_assert_eq!(select_topk_preserve_order(&scores, k).unwrap(), set);
    }

    #[test]
    fn softmax_shift_invariant(s in vec(-20.0f64..20.0, 1..30), c in -100.0f64..100.0) {
        let a = softmax(&s).unwrap();
        let shifted: Vec<f64> = s.iter().map(|x| x + c).collect();
        let b = softmax(&shifted).unwrap();
        prop_assert!((a.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn pruning_error_never_exceeds_bound(
        n in 1usize..20, d in 1usize..6, seed in vec(-3.0f64..3.0, 20), vals in vec(-2.0f64..2.0, 120),
        mask in vec(any::<bool>(), 20),
    ) {
        let alpha = softmax(&seed[..n]).unwrap();
        let v = EmbeddingMatrix::new(n, d, vals[..n * d].to_vec()).unwrap();
        let mut kept: Vec<usize> = (0..n).filter(|&j| mask[j]).collect();
        if kept.is_empty() { kept.push(0); }
        let rep = check_pruning_error_bound(&alpha, &v, &kept).unwrap();
        prop_assert!(rep.holds, "{rep:?}");
        let full = attention_output(&alpha, &v).unwrap();
        if kept.len() == n {
            let p = pruned_attention_output(&alpha, &v, &kept).unwrap();
            for (x, y) in full.iter().zip(p.c_prime.iter()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tail_gap_bound_holds(g in vec(-10.0f64..10.0, 2..60), k in 1usize..60) {
        let k = 1 + (k - 1) % (g.len() - 1);
        prop_assert!(tail_gap_bound_check(&g, k).unwrap().holds);
    }

    #[test]
    fn ranking_invariant_to_monotone_transform(s in vec(-5.0f64..5.0, 1..26), a in 0.1f64..10.0, b in -5.0f64..5.0) {
        let t: Vec<f64> = s.iter().map(|x| a * x + b).collect();
        let pi = rank_from_logits(&s).unwrap();
        let sorted = apply_permutation(&s, &pi).unwrap();
        prop_assert!(sorted.windows(2).all(|w| w[0] >= w[1]));
        // affine maps can merge near-equal floats; compare only when ties are unchanged
        let distinct = |v: &[f64]| { let mut w = v.to_vec(); w.sort_by(f64::total_cmp); w.dedup(); w.len() };
        if distinct(&s) == distinct(&t) {
            prop_assert_eq!(rank_from_logits(&t).unwrap(), pi);
        }
    }

    #[test]
    fn permutation_inverse_round_trips(pi in permutation(26)) {
        let items: Vec<usize> = (100..100 + pi.len()).collect();
        let moved = apply_permutation(&items, &pi).unwrap();
        prop_assert_eq!(apply_permutation(&moved, &pi.inverse()).unwrap(), items);
    }

    #[test]
    fn ranknet_gradient_sums_to_zero_and_ignores_shift(
        pi in permutation(20).prop_filter("m >= 2", |p| p.len() >= 2),
        s in vec(-5.0f64..5.0, 20), c in -50.0f64..50.0,
    ) {
        let m = pi.len();
        let target = TargetRanking::from_order(&pi);
        let l = weighted_ranknet_loss(&s[..m], &target).unwrap();
        prop_assert!(l.gradient.iter().sum::<f64>().abs() < 1e-9);
        prop_assert!(l.value >= 0.0);
        let shifted: Vec<f64> = s[..m].iter().map(|x| x + c).collect();
        let l2 = weighted_ranknet_loss(&shifted, &target).unwrap();
        prop_assert!((l.value - l2.value).abs() < 1e-9 * l.value.max(1.0));
    }

    #[test]
    fn soft_rank_gibbs_and_gradient(pi in permutation(20), gamma in 0.01f64..0.99, s in vec(-5.0f64..5.0, 20)) {
        let m = pi.len();
        let t = geometric_target(&pi, gamma).unwrap();
        prop_assert!((t.q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let l = soft_rank_loss(&s[..m], &t).unwrap();
        let entropy: f64 = -t.q.iter().filter(|&&q| q > 0.0).map(|q| q * q.ln()).sum::<f64>();
        prop_assert!(l.value >= entropy - 1e-9);
        prop_assert!(l.gradient.iter().sum::<f64>().abs() < 1e-9);
        // the loss at logits ln q equals the entropy
        let at_target: Vec<f64> = t.q.iter().map(|q| q.ln()).collect();
        prop_assert!((soft_rank_loss(&at_target, &t).unwrap().value - entropy).abs() < 1e-9);
    }

    #[test]
    fn geometric_target_follows_teacher_order(pi in permutation(20), gamma in 0.01f64..0.99) {
        let t = geometric_target(&pi, gamma).unwrap();
        let ordered = apply_permutation(&t.q, &pi).unwrap();
        prop_assert!(ordered.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn recall_monotone_and_ndcg_bounded(j in judgment()) {
        let mut prev = 0.0;
        for k in 1..=j.ranked().len() + 2 {
            let r = recall_at_k(&j, k).unwrap();
            prop_assert!(r >= prev && r <= 1.0);
            prev = r;
            let n = ndcg_at_k(&j, k).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&n));
        }
        prop_assert_eq!(prev, 1.0);
    }

    #[test]
    fn spearman_invariant_to_increasing_transform(
        xy in (2usize..30).prop_flat_map(|n| (vec(-5.0f64..5.0, n), vec(-5.0f64..5.0, n)))
    ) {
        let (x, y) = xy;
        if let Ok(r) = spearman(&x, &y) {
            let tx: Vec<f64> = x.iter().map(|v| v.exp()).collect();
            let ty: Vec<f64> = y.iter().map(|v| v * v * v + 2.0 * v).collect();
            prop_assert!((r - spearman(&tx, &ty).unwrap()).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&r));
        }
    }

    #[test]
    fn flops_additive_and_pruning_cheaper_without_scoring(
        nt in 1usize..2000, nv in 0usize..20000, rho in 0.01f64..=1.0, k in 1usize..20, u in 0usize..64,
    ) {
        let p = ArchParams { c_score: 0.0, ..ArchParams::unit() };
        let n = (nt + nv) as f64;
        prop_assert_eq!(total_flops(n, u as f64, &p), prefill_flops(n, &p) + decode_flops(n, u as f64, &p));
        let w = WorkloadSpec { n_text: nt, n_vis: nv, n_query: 1, k, beta: 1.0, u_reason: u, rho, image_token_counts: None };
        prop_assert!(f_zip(&w, &p).unwrap() <= f_base(&w, &p).unwrap() * (1.0 + 1e-12));
    }
}
