//! The full forward pass recorded on a tape.

use super::config::{ModelConfig, N_EXPERTS};
use super::features::ModelInput;
use super::ops::{route_top1, topk_select};
use super::params::{Affine, Conditioner, MoeParams, Weights};
use super::trace::{RoutingTrace, TokenRoute, TokenSlot};
use super::{MoeError, Result};
use crate::numerics::{Matrix, Tape, Var};

/// Handles to the nodes the losses need, plus the routing record.
#[derive(Debug, Clone)]
pub struct Graph {
    /// `1 × 4` answer logits.
    pub option_logits: Var,
    /// `1 × 4` classifier logits on the attention-pooled video tokens.
    pub pooled_logits: Var,
    /// `T × 4` per-token `softmax(g)`.
    pub route_probs: Var,
    pub trace: RoutingTrace,
    /// Selected patch indices, ascending.
    pub selected: Vec<usize>,
}

fn affine(tape: &mut Tape, x: Var, a: &Affine<Var>) -> Result<Var> {
    let z = tape.matmul(x, a.weight)?;
    Ok(tape.add_row(z, a.bias)?)
}

/// `softmax(Q·Kᵀ/√d)·V` row-wise.
fn attend(tape: &mut Tape, q: Var, k: Var, v: Var) -> Result<Var> {
    let d = tape.value(k).cols() as f64;
    let kt = tape.transpose(k)?;
    let scores = tape.matmul(q, kt)?;
    let scaled = tape.scale(scores, 1.0 / d.sqrt())?;
    let weights = tape.softmax_rows(scaled)?;
    Ok(tape.matmul(weights, v)?)
}

fn condition(tape: &mut Tape, x: Var, query_tokens: Var, c: &Conditioner<Var>) -> Result<Var> {
    let q = tape.matmul(x, c.w_q)?;
    let k = tape.matmul(query_tokens, c.w_k)?;
    let v = tape.matmul(query_tokens, c.w_v)?;
    let ctx = attend(tape, q, k, v)?;
    Ok(tape.add(x, ctx)?)
}

fn backbone(tape: &mut Tape, mut h: Var, layers: &[Affine<Var>]) -> Result<Var> {
    for layer in layers {
        let z = affine(tape, h, layer)?;
        let z = tape.silu(z)?;
        h = tape.add(h, z)?;
    }
    Ok(h)
}

fn swiglu(tape: &mut Tape, x: Var, e: &super::params::Expert<Var>) -> Result<Var> {
    let g = tape.matmul(x, e.w_gate)?;
    let g = tape.silu(g)?;
    let u = tape.matmul(x, e.w_up)?;
    let gu = tape.mul(g, u)?;
    Ok(tape.matmul(gu, e.w_down)?)
}

fn row4(m: &Matrix, r: usize) -> [f64; N_EXPERTS] {
    m.row(r).try_into().expect("four columns")
}

fn check_input(config: &ModelConfig, input: &ModelInput) -> Result<()> {
    let want = [
        ("F_vis", &input.f_vis, config.n_patches),
        ("F_ocr", &input.f_ocr, config.n_patches),
        ("query tokens", &input.query_tokens, config.n_query),
    ];
    for (name, m, rows) in want {
        if m.shape() != (rows, config.d) {
            return Err(MoeError::Shape(format!(
                "{name} is {:?}, expected {:?}",
                m.shape(),
                (rows, config.d)
            )));
        }
    }
    Ok(())
}

/// Records relevance scoring, top-k selection, conditioning, the
/// three-token layout, backbone, consistency-weighted top-1 MoE, answer
/// head and the pooled classifier. Discrete choices (selected patches,
/// experts) are taken from the recorded values and frozen into the graph.
pub fn build_graph(tape: &mut Tape, config: &ModelConfig, w: &Weights<Var>, input: &ModelInput) -> Result<Graph> {
    config.validate()?;
    check_input(config, input)?;
    let (n, k, nq) = (config.n_patches, config.k_select, config.n_query);
    let n_tok = config.n_tokens();
    let sqrt_d = (config.d as f64).sqrt();

    let f_vis = tape.constant(input.f_vis.clone());
    let f_ocr = tape.constant(input.f_ocr.clone());
    let f_vis_t = tape.constant(input.f_vis.transpose());
    let query = tape.constant(input.query_tokens.clone());

    // relevance scores and selection; kept patches are scaled by N·s so the
    // scorer receives gradient through the hard selection
    let raw = tape.matmul(w.q_vis, f_vis_t)?;
    let raw = tape.scale(raw, 1.0 / sqrt_d)?;
    let scores = tape.softmax_rows(raw)?;
    let selected = topk_select(tape.value(scores).row(0), k)?;
    let scores_col = tape.transpose(scores)?;
    let kept = tape.gather_rows(scores_col, selected.clone())?;
    let kept = tape.scale(kept, n as f64)?;
    let x_vis = tape.gather_rows(f_vis, selected.clone())?;
    let x_vis = tape.mul_col(x_vis, kept)?;
    let x_ocr = tape.gather_rows(f_ocr, selected.clone())?;
    let x_ocr = tape.mul_col(x_ocr, kept)?;

    let v_hat = condition(tape, x_vis, query, &w.conditioner_vis)?;
    let o_hat = condition(tape, x_ocr, query, &w.conditioner_ocr)?;
    let diff = tape.sub(o_hat, v_hat)?;

    // [vis_k, ocr_k, diff_k] for each k, then the query tokens
    let stacked = tape.concat_rows(vec![v_hat, o_hat, diff, query])?;
    let order: Vec<usize> = (0..k)
        .flat_map(|j| [j, k + j, 2 * k + j])
        .chain(3 * k..3 * k + nq)
        .collect();
    let tokens = tape.gather_rows(stacked, order)?;
    let mut layout: Vec<TokenSlot> = selected
        .iter()
        .flat_map(|&p| [TokenSlot::Visual { patch: p }, TokenSlot::Ocr { patch: p }, TokenSlot::Diff { patch: p }])
        .collect();
    layout.extend((0..nq).map(|index| TokenSlot::Query { index }));

    let h = backbone(tape, tokens, &w.backbone[..config.insert_layer])?;

    // consistency of each patch's visual and OCR states; other tokens get 1
    let vis_rows: Vec<usize> = (0..k).map(|j| 3 * j).collect();
    let ocr_rows: Vec<usize> = (0..k).map(|j| 3 * j + 1).collect();
    let h_vis = tape.gather_rows(h, vis_rows.clone())?;
    let h_ocr = tape.gather_rows(h, ocr_rows.clone())?;
    let c_patch = tape.cosine_rows(h_vis, h_ocr)?;
    let c_at_vis = tape.scatter_rows(c_patch, vis_rows, n_tok)?;
    let c_at_ocr = tape.scatter_rows(c_patch, ocr_rows, n_tok)?;
    let ones_elsewhere = Matrix::new(
        n_tok,
        1,
        (0..n_tok).map(|t| if t < 3 * k && t % 3 != 2 { 0.0 } else { 1.0 }).collect(),
    )?;
    let ones_elsewhere = tape.constant(ones_elsewhere);
    let c = tape.add(c_at_vis, c_at_ocr)?;
    let c = tape.add(c, ones_elsewhere)?;
    let cw = tape.affine(c, -0.5, 0.5)?;

    let gate_logits = affine(tape, h, &w.gate)?;
    let cls_logits = affine(tape, h, &w.cls)?;
    let cls_probs = tape.softmax_rows(cls_logits)?;
    let weighted = tape.mul_col(cls_probs, cw)?;
    let g = tape.add(gate_logits, weighted)?;
    let route_probs = tape.softmax_rows(g)?;

    let routes: Vec<TokenRoute> = {
        let (cv, cwv, glv, cpv, gv, pv) = (
            tape.value(c),
            tape.value(cw),
            tape.value(gate_logits),
            tape.value(cls_probs),
            tape.value(g),
            tape.value(route_probs),
        );
        (0..n_tok)
            .map(|t| TokenRoute {
                c: cv.get(t, 0),
                cw: cwv.get(t, 0),
                gate_logits: row4(glv, t),
                cls_probs: row4(cpv, t),
                logits: row4(gv, t),
                probs: row4(pv, t),
                expert: route_top1(gv.row(t)),
            })
            .collect()
    };
    let trace = RoutingTrace::new(routes, layout);

    // top-1 expert update, residual
    let mut h_moe = h;
    for e in 0..N_EXPERTS {
        let rows: Vec<usize> = (0..n_tok).filter(|&t| trace.tokens[t].expert == e).collect();
        if rows.is_empty() {
            continue;
        }
        let sub = tape.gather_rows(h, rows.clone())?;
        let out = swiglu(tape, sub, &w.experts[e])?;
        let placed = tape.scatter_rows(out, rows, n_tok)?;
        h_moe = tape.add(h_moe, placed)?;
    }

    // pooled classifier over the video tokens at the insertion layer
    let video = tape.gather_rows(h, (0..3 * k).collect())?;
    let pooled = attend(tape, w.pool_query, video, video)?;
    let pooled_logits = affine(tape, pooled, &w.cls)?;

    let h_out = backbone(tape, h_moe, &w.backbone[config.insert_layer..])?;
    let mean = tape.mean_rows(h_out)?;
    let option_logits = affine(tape, mean, &w.answer)?;

    Ok(Graph { option_logits, pooled_logits, route_probs, trace, selected })
}

/// Result of an inference pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub option_logits: Vec<f64>,
    pub pooled_video_logits: Vec<f64>,
    pub trace: RoutingTrace,
    pub selected: Vec<usize>,
}

/// Inference pass with every weight held constant.
pub fn forward(config: &ModelConfig, params: &MoeParams, input: &ModelInput) -> Result<ForwardOutput> {
    params.check_shapes(config)?;
    let mut tape = Tape::new();
    let w = params.to_tape(&mut tape, |_| false);
    let g = build_graph(&mut tape, config, &w, input)?;
    Ok(ForwardOutput {
        option_logits: tape.value(g.option_logits).data().to_vec(),
        pooled_video_logits: tape.value(g.pooled_logits).data().to_vec(),
        trace: g.trace,
        selected: g.selected,
    })
}
