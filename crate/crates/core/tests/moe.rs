use overlay_core::datamodel::Dimension;
use overlay_core::moe::{
    backbone_forward, build_three_token, conflict_direction, condition_patch, consistency, forward,
    moe_layer, relevance_scores, route_token, route_top1, synth_features, synth_input, Affine,
    ConflictSpec, ModelConfig, MoeParams, TokenSlot, N_EXPERTS,
};
use overlay_core::numerics::{cosine, cross_attention, Matrix};
use overlay_core::rng::{stream, Stream};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn row(a: &Affine<Matrix>, x: &[f64]) -> Vec<f64> {
    Matrix::row_vector(x).unwrap().matmul(&a.weight).unwrap().add_row(&a.bias).unwrap().into_data()
}

/// The whole pipeline composed from the plain single-step operations.
fn composed(config: &ModelConfig, p: &MoeParams, f_vis: &Matrix, f_ocr: &Matrix, q: &Matrix) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    let s = relevance_scores(p.q_vis.row(0), f_vis).unwrap();
    let scores = s.as_slice();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let mut sel = order[..config.k_select].to_vec();
    sel.sort();

    let n = config.n_patches as f64;
    let mut rows = Vec::new();
    for &i in &sel {
        let w = n * scores[i];
        let v: Vec<f64> = f_vis.row(i).iter().map(|x| x * w).collect();
        let o: Vec<f64> = f_ocr.row(i).iter().map(|x| x * w).collect();
        let t = build_three_token(
            &condition_patch(&v, q, &p.conditioner_vis).unwrap(),
            &condition_patch(&o, q, &p.conditioner_ocr).unwrap(),
        )
        .unwrap();
        rows.extend([t.f_vis_hat, t.f_ocr_hat, t.diff]);
    }
    rows.extend((0..q.rows()).map(|r| q.row(r).to_vec()));
    let tokens = Matrix::from_rows(&rows).unwrap();
    let h = backbone_forward(&tokens, &p.backbone[..config.insert_layer]).unwrap();

    let mut c = vec![1.0; h.rows()];
    for j in 0..config.k_select {
        let cj = consistency(h.row(3 * j), h.row(3 * j + 1)).unwrap();
        c[3 * j] = cj;
        c[3 * j + 1] = cj;
    }
    let (h_moe, _) = moe_layer(&h, &c, &p.gate, &p.cls, &p.experts).unwrap();
    let video = h.gather_rows(&(0..3 * config.k_select).collect::<Vec<_>>()).unwrap();
    let pooled = cross_attention(p.pool_query.row(0), &video, &video).unwrap().1;
    let pooled_logits = row(&p.cls, &pooled);

    let out = backbone_forward(&h_moe, &p.backbone[config.insert_layer..]).unwrap();
    let mean = out.mean_rows().unwrap();
    (row(&p.answer, mean.row(0)), pooled_logits, sel)
}

#[test]
fn forward_matches_composed_operations() {
    for (config, seed) in [(ModelConfig::tiny(), 1), (ModelConfig::default(), 2), (ModelConfig::tiny(), 3)] {
        let params = MoeParams::init(&ModelConfig { seed, ..config }).unwrap();
        let input = synth_input(&config, seed, &ConflictSpec::new(Dimension::Action, 1.0)).unwrap();
        let out = forward(&config, &params, &input).unwrap();
        let (answer, pooled, sel) = composed(&config, &params, &input.f_vis, &input.f_ocr, &input.query_tokens);
        assert_eq!(out.selected, sel);
        for (a, b) in out.option_logits.iter().zip(&answer).chain(out.pooled_video_logits.iter().zip(&pooled)) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
        // every token is routed exactly once
        assert_eq!(out.trace.len(), config.n_tokens());
        assert_eq!(out.trace.counts.iter().sum::<usize>(), config.n_tokens());
        let shares: f64 = out.trace.shares().iter().sum();
        assert!((shares - 1.0).abs() < 1e-12);
    }
}

#[test]
fn identical_streams_route_gate_only() {
    for seed in 0..20 {
        let config = ModelConfig { seed, ..ModelConfig::tiny() };
        let mut params = MoeParams::init(&config).unwrap();
        params.conditioner_ocr = params.conditioner_vis.clone();
        let mut input = synth_input(&config, seed, &ConflictSpec::none()).unwrap();
        input.f_ocr = input.f_vis.clone();
        let out = forward(&config, &params, &input).unwrap();
        for (slot, t) in out.trace.layout.iter().zip(&out.trace.tokens) {
            assert_eq!(t.c, 1.0, "{slot:?}");
            assert_eq!(t.cw, 0.0);
            assert_eq!(t.logits, t.gate_logits);
        }
        assert!(out.trace.all_gate_only());

        // the diff tokens themselves are exactly zero
        let (sel, q) = (&out.selected, &input.query_tokens);
        for &i in sel {
            let s = relevance_scores(params.q_vis.row(0), &input.f_vis).unwrap();
            let w = config.n_patches as f64 * s.as_slice()[i];
            let v: Vec<f64> = input.f_vis.row(i).iter().map(|x| x * w).collect();
            let a = condition_patch(&v, q, &params.conditioner_vis).unwrap();
            let b = condition_patch(&v, q, &params.conditioner_ocr).unwrap();
            assert!(build_three_token(&a, &b).unwrap().diff.iter().all(|x| *x == 0.0));
        }
        assert_eq!(out.trace.layout.iter().filter(|s| matches!(s, TokenSlot::Diff { .. })).count(), config.k_select);
    }
}

#[test]
fn routing_algebra_on_random_draws() {
    let config = ModelConfig::default();
    let params = MoeParams::init(&config).unwrap();
    let mut rng = stream(7, Stream::Probe);
    for _ in 0..10_000 {
        let h: Vec<f64> = (0..config.d).map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let c: f64 = rng.gen_range(-1.0..=1.0);
        let r = route_token(&h, c, &params.gate, &params.cls).unwrap();
        assert!((0.0..=1.0).contains(&r.cw));
        let shift: f64 = rng.gen_range(-50.0..50.0);
        let shifted: Vec<f64> = r.logits.iter().map(|g| g + shift).collect();
        assert_eq!(route_top1(&shifted), r.expert);
        let at_one = route_token(&h, 1.0, &params.gate, &params.cls).unwrap();
        assert_eq!(at_one.logits, at_one.gate_logits);
    }
}

#[test]
fn conflict_residuals_of_different_dimensions_are_orthogonal() {
    let config = ModelConfig::default();
    let runs = 1000;
    let mut total = 0.0;
    for seed in 0..runs {
        let residual = |d| {
            let (v, o) = synth_features(&config, seed, &ConflictSpec::new(d, 1.0)).unwrap();
            o.sub(&v).unwrap().into_data()
        };
        total += cosine(&residual(Dimension::Temporal), &residual(Dimension::Spatial)).unwrap().abs();
    }
    let mean = total / runs as f64;
    assert!(mean < 0.05, "mean |cos| {mean}");
    for a in 0..N_EXPERTS {
        for b in 0..N_EXPERTS {
            let c = cosine(&conflict_direction(config.d, a), &conflict_direction(config.d, b)).unwrap();
            assert!((c - if a == b { 1.0 } else { 0.0 }).abs() < 1e-12);
        }
    }
}

#[test]
fn conflict_moves_ocr_along_its_direction() {
    let config = ModelConfig::default();
    for d in Dimension::ALL {
        let (v, o) = synth_features(&config, 11, &ConflictSpec::new(d, 1.0)).unwrap();
        let diff = o.sub(&v).unwrap();
        for r in 0..diff.rows() {
            let cos = cosine(diff.row(r), &conflict_direction(config.d, d.index())).unwrap();
            assert!(cos > 0.9, "{d} row {r}: {cos}");
        }
    }
    let (v, o) = synth_features(&config, 11, &ConflictSpec::none()).unwrap();
    assert_eq!(v, o);
}

#[test]
fn forward_is_deterministic() {
    let config = ModelConfig::default();
    let params = MoeParams::init(&config).unwrap();
    let input = synth_input(&config, 5, &ConflictSpec::new(Dimension::Object, 1.0)).unwrap();
    assert_eq!(forward(&config, &params, &input).unwrap(), forward(&config, &params, &input).unwrap());
}

proptest! {
    #[test]
    fn topk_matches_full_sort(scores in prop::collection::vec(-5i32..5, 1..40), k_frac in 0.0f64..=1.0) {
        let s: Vec<f64> = scores.iter().map(|&x| x as f64 * 0.5).collect();
        let k = ((s.len() as f64) * k_frac).floor() as usize;
        let got = overlay_core::moe::topk_select(&s, k).unwrap();
        let mut idx: Vec<usize> = (0..s.len()).collect();
        idx.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap().then(a.cmp(&b)));
        let mut want = idx[..k].to_vec();
        want.sort();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn moe_layer_conserves_tokens(seed in 0u64..500) {
        let config = ModelConfig { seed, ..ModelConfig::tiny() };
        let params = MoeParams::init(&config).unwrap();
        let mut rng = stream(seed, Stream::Probe);
        let t = 1 + (seed as usize % 9);
        let h = Matrix::new(t, config.d, (0..t * config.d).map(|_| rng.sample(StandardNormal)).collect()).unwrap();
        let c: Vec<f64> = (0..t).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let (out, trace) = moe_layer(&h, &c, &params.gate, &params.cls, &params.experts).unwrap();
        prop_assert_eq!(out.shape(), h.shape());
        prop_assert_eq!(trace.counts.iter().sum::<usize>(), t);
        for route in &trace.tokens {
            prop_assert_eq!(route.expert, route_top1(&route.logits));
        }
    }
}
