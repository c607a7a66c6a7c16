//! Multi-dimensional spatio-temporal interaction: cross-attention between
//! context slices and observations along the node and time axes, full-width
//! self-attention along both axes, and the fusion/regression head.

use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::embedding::{Segment, SliceLayout};
use crate::error::{Error, Result};
use crate::numerics::{Binding, Graph, Tensor, Var};

/// Which axis of the representation is the attention sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    /// Sequence over nodes, one context per time step.
    Spatial,
    /// Sequence over time steps, one context per node.
    Temporal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    ScciSo,
    ScciOs,
    TcciTo,
    TcciOt,
    Tsi,
    Ssi,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::ScciSo,
        Stage::ScciOs,
        Stage::TcciTo,
        Stage::TcciOt,
        Stage::Tsi,
        Stage::Ssi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::ScciSo => "scci_so",
            Stage::ScciOs => "scci_os",
            Stage::TcciTo => "tcci_to",
            Stage::TcciOt => "tcci_ot",
            Stage::Tsi => "tsi",
            Stage::Ssi => "ssi",
        }
    }

    pub fn axis(self) -> Axis {
        match self {
            Stage::ScciSo | Stage::ScciOs | Stage::Ssi => Axis::Spatial,
            Stage::TcciTo | Stage::TcciOt | Stage::Tsi => Axis::Temporal,
        }
    }

    /// `(query, key/value)` segments of a cross stage; `None` for self stages.
    pub fn cross_segments(self) -> Option<(Segment, Segment)> {
        match self {
            Stage::ScciSo => Some((Segment::Spatial, Segment::Observation)),
            Stage::ScciOs => Some((Segment::Observation, Segment::Spatial)),
            Stage::TcciTo => Some((Segment::Temporal, Segment::Observation)),
            Stage::TcciOt => Some((Segment::Observation, Segment::Temporal)),
            Stage::Tsi | Stage::Ssi => None,
        }
    }

    /// Stages the configured network actually runs, in execution order.
    pub fn active(config: &ModelConfig) -> Vec<Stage> {
        let mut out = Vec::with_capacity(6);
        if config.cross_interaction {
            out.extend([Stage::ScciSo, Stage::ScciOs, Stage::TcciTo]);
            if config.tcci_reverse {
                out.push(Stage::TcciOt);
            }
        }
        out.extend([Stage::Tsi, Stage::Ssi]);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionConfig {
    pub d_cross: usize,
    pub d_self: usize,
    pub heads: usize,
    pub ffn_hidden: usize,
    pub ln_eps: f64,
}

impl AttentionConfig {
    pub fn from_model(c: &ModelConfig) -> Self {
        Self {
            d_cross: c.d_cross,
            d_self: c.d_self,
            heads: c.heads,
            ffn_hidden: c.ffn_hidden,
            ln_eps: c.ln_eps,
        }
    }
}

/// Softmax score tensors captured during a forward pass.
#[derive(Debug, Clone)]
pub struct AttentionMap {
    pub block: usize,
    pub stage: Stage,
    pub head: usize,
    /// `[batch, contexts, L, L]`, rows sum to one.
    pub scores: Tensor,
}

impl AttentionMap {
    pub fn axis(&self) -> Axis {
        self.stage.axis()
    }
}

/// Collects softmax score nodes while a graph is being built.
#[derive(Debug, Default)]
pub struct MapSink {
    pub entries: Vec<(usize, Stage, usize, Var)>,
}

impl MapSink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn collect(&self, g: &Graph) -> Vec<AttentionMap> {
        self.entries
            .iter()
            .map(|&(block, stage, head, v)| AttentionMap {
                block,
                stage,
                head,
                scores: g.value(v).clone(),
            })
            .collect()
    }
}

/// Where a block should file the score maps it produces.
pub struct Recorder<'a> {
    pub sink: &'a mut MapSink,
    pub block: usize,
    pub stage: Stage,
}

/// Sinusoidal table `[steps, width]`: even columns `sin(t / 10000^(2d/D))`,
/// odd columns the matching cosine. An odd width ends on a sine column.
pub fn positional_encoding(steps: usize, width: usize) -> Result<Tensor> {
    if steps == 0 || width == 0 {
        return Err(Error::invalid("positional encoding needs positive sizes"));
    }
    let d = width as f64;
    Ok(Tensor::from_fn(&[steps, width], |i| {
        let (t, j) = (i / width, i % width);
        let pair = (j / 2) as f64;
        let angle = t as f64 / 10000f64.powf(2.0 * pair / d);
        if j % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    }))
}

/// Multi-head scaled dot-product attention. Inputs are `[.., L, width]`; the
/// output is projected by `wo`.
#[allow(clippy::too_many_arguments)]
fn multi_head(
    g: &mut Graph,
    q_in: Var,
    kv_in: Var,
    wq: Var,
    wk: Var,
    wv: Var,
    wo: Var,
    heads: usize,
    mut rec: Option<Recorder<'_>>,
) -> Result<Var> {
    let q = g.linear(q_in, wq)?;
    let k = g.linear(kv_in, wk)?;
    let v = g.linear(kv_in, wv)?;
    let width = g.value(q).last_dim();
    if heads == 0 || width % heads != 0 {
        return Err(Error::shape(format!(
            "attention width {width} not divisible by {heads} heads"
        )));
    }
    let dh = width / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = g.slice(q, h * dh, dh)?;
        let kh = g.slice(k, h * dh, dh)?;
        let vh = g.slice(v, h * dh, dh)?;
        let scores = g.batch_matmul(qh, kh, true)?;
        let scores = g.scale(scores, scale)?;
        let attn = g.softmax(scores)?;
        if let Some(r) = rec.as_mut() {
            r.sink.entries.push((r.block, r.stage, h, attn));
        }
        outs.push(g.batch_matmul(attn, vh, false)?);
    }
    let joined = if outs.len() == 1 { outs[0] } else { g.concat(&outs)? };
    g.linear(joined, wo)
}

/// `LN(FFN(LN(attn + base)) + LN(attn + base))`.
fn residual_ffn(g: &mut Graph, params: &Binding, prefix: &str, attn: Var, base: Var, eps: f64) -> Result<Var> {
    let p = |n: &str| params.var(&format!("{prefix}/{n}"));
    let a = g.add(attn, base)?;
    let b = g.layer_norm(a, p("ln1_g")?, p("ln1_b")?, eps)?;
    let f = g.affine(b, p("ffn_w1")?, p("ffn_b1")?)?;
    let f = g.relu(f)?;
    let f = g.affine(f, p("ffn_w2")?, p("ffn_b2")?)?;
    let c = g.add(f, b)?;
    g.layer_norm(c, p("ln2_g")?, p("ln2_b")?, eps)
}

fn check_layout(g: &Graph, h: Var, layout: &SliceLayout) -> Result<()> {
    let s = g.shape(h);
    if s.len() != 4 || s[3] != layout.d_h() {
        return Err(Error::shape(format!(
            "representation must be [B, S, L, {}], got {s:?}",
            layout.d_h()
        )));
    }
    Ok(())
}

/// One cross-interaction direction: `query` attends over `kv` along the
/// second-to-last axis and the result replaces only the `kv` slice of `h`.
#[allow(clippy::too_many_arguments)]
pub fn cross_attention_block(
    g: &mut Graph,
    params: &Binding,
    prefix: &str,
    h: Var,
    layout: &SliceLayout,
    query: Segment,
    kv: Segment,
    cfg: &AttentionConfig,
    rec: Option<Recorder<'_>>,
) -> Result<Var> {
    check_layout(g, h, layout)?;
    if query == kv {
        return Err(Error::invalid("cross-attention needs two distinct slices"));
    }
    let hq = g.slice(h, layout.offset(query), layout.width(query))?;
    let hkv = g.slice(h, layout.offset(kv), layout.width(kv))?;
    let p = |n: &str| params.var(&format!("{prefix}/{n}"));
    let attn = multi_head(g, hq, hkv, p("wq")?, p("wk")?, p("wv")?, p("wo")?, cfg.heads, rec)?;
    let updated = residual_ffn(g, params, prefix, attn, hkv, cfg.ln_eps)?;

    let mut parts = Vec::with_capacity(4);
    for seg in Segment::ALL {
        if seg == kv {
            parts.push(updated);
        } else {
            parts.push(g.slice(h, layout.offset(seg), layout.width(seg))?);
        }
    }
    g.concat(&parts)
}

/// Self-attention over the full width of `h` along the second-to-last axis.
pub fn self_attention_block(
    g: &mut Graph,
    params: &Binding,
    prefix: &str,
    h: Var,
    cfg: &AttentionConfig,
    rec: Option<Recorder<'_>>,
) -> Result<Var> {
    let p = |n: &str| params.var(&format!("{prefix}/{n}"));
    let wq = p("wq")?;
    if g.shape(wq)[0] != g.value(h).last_dim() {
        return Err(Error::shape(format!(
            "self-attention expects width {}, got {}",
            g.shape(wq)[0],
            g.value(h).last_dim()
        )));
    }
    let attn = multi_head(g, h, h, wq, p("wk")?, p("wv")?, p("wo")?, cfg.heads, rec)?;
    residual_ffn(g, params, prefix, attn, h, cfg.ln_eps)
}

fn stage_prefix(block: usize, stage: Stage) -> String {
    format!("msti/block{block}/{}", stage.name())
}

fn recorder<'a>(sink: &'a mut Option<&mut MapSink>, block: usize, stage: Stage) -> Option<Recorder<'a>> {
    sink.as_deref_mut().map(|s| Recorder {
        sink: s,
        block,
        stage,
    })
}

/// Spatial-context cross-interaction on `[B, T, N, d_h]`.
pub fn scci(
    g: &mut Graph,
    params: &Binding,
    block: usize,
    h: Var,
    layout: &SliceLayout,
    cfg: &AttentionConfig,
    sink: &mut Option<&mut MapSink>,
) -> Result<Var> {
    let mut h = h;
    for stage in [Stage::ScciSo, Stage::ScciOs] {
        let (q, kv) = stage.cross_segments().expect("cross stage");
        let rec = recorder(sink, block, stage);
        h = cross_attention_block(g, params, &stage_prefix(block, stage), h, layout, q, kv, cfg, rec)?;
    }
    Ok(h)
}

/// Temporal-context cross-interaction on the transposed `[B, N, T, d_h]`.
#[allow(clippy::too_many_arguments)]
pub fn tcci(
    g: &mut Graph,
    params: &Binding,
    block: usize,
    h: Var,
    layout: &SliceLayout,
    cfg: &AttentionConfig,
    model: &ModelConfig,
    sink: &mut Option<&mut MapSink>,
) -> Result<Var> {
    check_layout(g, h, layout)?;
    let mut h = h;
    if model.positional_encoding {
        let shape = g.shape(h).to_vec();
        let (outer, steps) = (shape[0] * shape[1], shape[2]);
        let pe = positional_encoding(steps, layout.d_t)?;
        let mut full = Vec::with_capacity(outer * pe.len());
        for _ in 0..outer {
            full.extend_from_slice(pe.data());
        }
        let pe = g.constant(Tensor::new(vec![shape[0], shape[1], steps, layout.d_t], full)?);
        let mut parts = Vec::with_capacity(4);
        for seg in Segment::ALL {
            let s = g.slice(h, layout.offset(seg), layout.width(seg))?;
            parts.push(if seg == Segment::Temporal { g.add(s, pe)? } else { s });
        }
        h = g.concat(&parts)?;
    }
    let mut stages = vec![Stage::TcciTo];
    if model.tcci_reverse {
        stages.push(Stage::TcciOt);
    }
    for stage in stages {
        let (q, kv) = stage.cross_segments().expect("cross stage");
        let rec = recorder(sink, block, stage);
        h = cross_attention_block(g, params, &stage_prefix(block, stage), h, layout, q, kv, cfg, rec)?;
    }
    Ok(h)
}

/// Runs every interaction stage `blocks` times on `H: [B, T, N, d_h]`.
pub fn interact(
    g: &mut Graph,
    params: &Binding,
    h: Var,
    model: &ModelConfig,
    mut sink: Option<&mut MapSink>,
) -> Result<Var> {
    let layout = model.layout();
    let cfg = AttentionConfig::from_model(model);
    check_layout(g, h, &layout)?;
    let mut h = h;
    for block in 0..model.blocks {
        if model.cross_interaction {
            h = scci(g, params, block, h, &layout, &cfg, &mut sink)?;
        }
        h = g.swap_axes(h, 1, 2)?;
        if model.cross_interaction {
            h = tcci(g, params, block, h, &layout, &cfg, model, &mut sink)?;
        }
        let rec = recorder(&mut sink, block, Stage::Tsi);
        h = self_attention_block(g, params, &stage_prefix(block, Stage::Tsi), h, &cfg, rec)?;
        h = g.swap_axes(h, 1, 2)?;
        let rec = recorder(&mut sink, block, Stage::Ssi);
        h = self_attention_block(g, params, &stage_prefix(block, Stage::Ssi), h, &cfg, rec)?;
    }
    Ok(h)
}

/// Pointwise fusion of the observation, spatial and temporal slices, prompt
/// injection, then a per-node linear map from `T·d_y` to `T'·C_out`.
/// Returns `[B, T', N, C_out]`.
pub fn fuse_and_predict(g: &mut Graph, params: &Binding, h: Var, model: &ModelConfig) -> Result<Var> {
    let layout = model.layout();
    check_layout(g, h, &layout)?;
    let shape = g.shape(h).to_vec();
    let (b, t, n) = (shape[0], shape[1], shape[2]);
    if t != model.input_len {
        return Err(Error::shape(format!(
            "head expects {} input steps, got {t}",
            model.input_len
        )));
    }
    let seg = |g: &mut Graph, s: Segment| g.slice(h, layout.offset(s), layout.width(s));
    let ho = seg(g, Segment::Observation)?;
    let hs = seg(g, Segment::Spatial)?;
    let ht = seg(g, Segment::Temporal)?;
    let hp = seg(g, Segment::Prompt)?;
    let zo = g.linear(ho, params.var("head/w_o")?)?;
    let zs = g.linear(hs, params.var("head/w_s")?)?;
    let zt = g.linear(ht, params.var("head/w_t")?)?;
    let z = g.add(zo, zs)?;
    let z = g.add(z, zt)?;
    let uz = g.linear(z, params.var("head/w_z")?)?;
    let up = g.linear(hp, params.var("head/w_p")?)?;
    let u = g.add(uz, up)?;
    let u = g.swap_axes(u, 1, 2)?;
    let u = g.reshape(u, &[b, n, t * model.d_y])?;
    let y = g.affine(u, params.var("head/fc_w")?, params.var("head/fc_b")?)?;
    let y = g.reshape(y, &[b, n, model.horizon, model.out_channels])?;
    g.swap_axes(y, 1, 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{ParamStore, Parameter};

    #[test]
    fn positional_encoding_values() {
        let pe = positional_encoding(12, 60).unwrap();
        assert_eq!(pe.shape(), &[12, 60]);
        for j in 0..60 {
            assert_eq!(pe.get(&[0, j]), if j % 2 == 0 { 0.0 } else { 1.0 });
        }
        assert!((pe.get(&[1, 0]) - 0.841471).abs() < 1e-6);
        assert_eq!(pe.get(&[1, 0]), 1f64.sin());
        let odd = positional_encoding(3, 5).unwrap();
        assert_eq!(odd.get(&[2, 4]), (2.0 / 10000f64.powf(4.0 / 5.0)).sin());
        assert!(positional_encoding(0, 4).is_err());
    }

    fn put(s: &mut ParamStore, name: &str, t: Tensor) {
        s.insert(Parameter::new(name, t)).unwrap();
    }

    fn residual_params(s: &mut ParamStore, prefix: &str, w: usize, hid: usize) {
        put(s, &format!("{prefix}/ln1_g"), Tensor::full(&[w], 1.0));
        put(s, &format!("{prefix}/ln1_b"), Tensor::zeros(&[w]));
        put(s, &format!("{prefix}/ffn_w1"), Tensor::from_fn(&[w, hid], |i| 0.1 * (i % 5) as f64 - 0.2));
        put(s, &format!("{prefix}/ffn_b1"), Tensor::full(&[hid], 0.05));
        put(s, &format!("{prefix}/ffn_w2"), Tensor::from_fn(&[hid, w], |i| 0.07 * (i % 3) as f64 - 0.05));
        put(s, &format!("{prefix}/ffn_b2"), Tensor::zeros(&[w]));
        put(s, &format!("{prefix}/ln2_g"), Tensor::full(&[w], 1.0));
        put(s, &format!("{prefix}/ln2_b"), Tensor::zeros(&[w]));
    }

    /// Hand-worked single-head cross-attention with two tokens.
    #[test]
    fn single_head_cross_attention_matches_manual() {
        // layout: obs 2, spatial 2, temporal 1, prompt 1
        let layout = SliceLayout::new(2, 2, 1, 1);
        let mut s = ParamStore::new();
        let identity = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        put(&mut s, "x/wq", identity.clone());
        put(&mut s, "x/wk", identity.clone());
        put(&mut s, "x/wv", Tensor::new(vec![2, 2], vec![2.0, 0.0, 0.0, 1.0]).unwrap());
        put(&mut s, "x/wo", identity);
        residual_params(&mut s, "x", 2, 3);
        let cfg = AttentionConfig { d_cross: 2, d_self: 6, heads: 1, ffn_hidden: 3, ln_eps: 1e-5 };

        // tokens (obs | spatial | t | p)
        let tokens = [[1.0, 0.0, 0.5, 0.0, 9.0, 8.0], [0.0, 1.0, 0.0, 1.0, 7.0, 6.0]];
        let h0 = Tensor::new(vec![1, 1, 2, 6], tokens.concat()).unwrap();
        let mut g = Graph::new();
        let b = s.bind(&mut g);
        let h = g.constant(h0.clone());
        let mut sink = MapSink::default();
        let rec = Recorder { sink: &mut sink, block: 0, stage: Stage::ScciSo };
        let out = cross_attention_block(
            &mut g, &b, "x", h, &layout, Segment::Spatial, Segment::Observation, &cfg, Some(rec),
        )
        .unwrap();

        // manual: Q = spatial rows, K = obs rows, V = obs·diag(2,1)
        let q = [[0.5, 0.0], [0.0, 1.0]];
        let k = [[1.0, 0.0], [0.0, 1.0]];
        let v = [[2.0, 0.0], [0.0, 1.0]];
        let scale = 1.0 / 2f64.sqrt();
        let mut attn = [[0.0; 2]; 2];
        let mut mix = [[0.0; 2]; 2];
        for i in 0..2 {
            let logits: Vec<f64> = (0..2).map(|j| scale * (q[i][0] * k[j][0] + q[i][1] * k[j][1])).collect();
            let p = crate::numerics::softmax(&logits).unwrap();
            for j in 0..2 {
                attn[i][j] = p[j];
                for c in 0..2 {
                    mix[i][c] += p[j] * v[j][c];
                }
            }
        }
        let maps = sink.collect(&g);
        assert_eq!(maps.len(), 1);
        for i in 0..2 {
            for j in 0..2 {
                assert!((maps[0].scores.get(&[0, 0, i, j]) - attn[i][j]).abs() < 1e-14);
            }
        }
        // residual + LN + FFN + LN on the observation slice
        let p = |n: &str| s.get(&format!("x/{n}")).unwrap().value.clone();
        let ln = |x: &[f64]| crate::numerics::layer_norm(x, &[1.0, 1.0], &[0.0, 0.0], 1e-5).unwrap();
        for i in 0..2 {
            let a: Vec<f64> = (0..2).map(|c| mix[i][c] + tokens[i][c]).collect();
            let bn = ln(&a);
            let (w1, b1, w2) = (p("ffn_w1"), p("ffn_b1"), p("ffn_w2"));
            let hid: Vec<f64> = (0..3)
                .map(|u| (0..2).map(|c| bn[c] * w1.get(&[c, u])).sum::<f64>() + b1.data()[u])
                .map(|v: f64| v.max(0.0))
                .collect();
            let f: Vec<f64> = (0..2).map(|c| (0..3).map(|u| hid[u] * w2.get(&[u, c])).sum::<f64>()).collect();
            let out_i = ln(&[f[0] + bn[0], f[1] + bn[1]]);
            for c in 0..2 {
                assert!((g.value(out).get(&[0, 0, i, c]) - out_i[c]).abs() < 1e-12);
            }
            for c in 2..6 {
                assert_eq!(g.value(out).get(&[0, 0, i, c]).to_bits(), h0.get(&[0, 0, i, c]).to_bits());
            }
        }
    }

    #[test]
    fn identical_keys_give_uniform_rows_and_mean_values() {
        let layout = SliceLayout::new(2, 2, 1, 1);
        let mut s = ParamStore::new();
        put(&mut s, "x/wq", Tensor::from_fn(&[2, 4], |i| 0.3 * i as f64 - 1.0));
        put(&mut s, "x/wk", Tensor::from_fn(&[2, 4], |i| 0.2 * i as f64));
        put(&mut s, "x/wv", Tensor::from_fn(&[2, 4], |i| 0.5 - 0.1 * i as f64));
        put(&mut s, "x/wo", Tensor::from_fn(&[4, 2], |i| 0.25 * i as f64));
        residual_params(&mut s, "x", 2, 3);
        let cfg = AttentionConfig { d_cross: 4, d_self: 6, heads: 2, ffn_hidden: 3, ln_eps: 1e-5 };
        // keys come from the observation slice; make it identical for every node
        let h0 = Tensor::from_fn(&[1, 1, 3, 6], |i| {
            let c = i % 6;
            if c < 2 { 0.7 + c as f64 } else { i as f64 * 0.1 }
        });
        let mut g = Graph::new();
        let b = s.bind(&mut g);
        let h = g.constant(h0);
        let mut sink = MapSink::default();
        let rec = Recorder { sink: &mut sink, block: 0, stage: Stage::ScciSo };
        cross_attention_block(&mut g, &b, "x", h, &layout, Segment::Spatial, Segment::Observation, &cfg, Some(rec))
            .unwrap();
        for m in sink.collect(&g) {
            assert!(m.scores.data().iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));
        }
    }

    #[test]
    fn self_attention_single_token_has_unit_weight() {
        let mut s = ParamStore::new();
        for n in ["wq", "wk", "wv"] {
            put(&mut s, &format!("x/{n}"), Tensor::from_fn(&[3, 4], |i| 0.1 * i as f64 - 0.3));
        }
        put(&mut s, "x/wo", Tensor::from_fn(&[4, 3], |i| 0.05 * i as f64));
        residual_params(&mut s, "x", 3, 5);
        let cfg = AttentionConfig { d_cross: 2, d_self: 4, heads: 2, ffn_hidden: 5, ln_eps: 1e-5 };
        let mut g = Graph::new();
        let b = s.bind(&mut g);
        let h = g.constant(Tensor::from_fn(&[2, 3, 1, 3], |i| (i as f64).cos()));
        let mut sink = MapSink::default();
        let rec = Recorder { sink: &mut sink, block: 0, stage: Stage::Tsi };
        let out = self_attention_block(&mut g, &b, "x", h, &cfg, Some(rec)).unwrap();
        assert_eq!(g.shape(out), &[2, 3, 1, 3]);
        for m in sink.collect(&g) {
            assert!(m.scores.data().iter().all(|&p| p == 1.0));
        }
    }

    #[test]
    fn self_attention_two_tokens_matches_manual() {
        let mut s = ParamStore::new();
        let id = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        put(&mut s, "x/wq", id.clone());
        put(&mut s, "x/wk", Tensor::new(vec![2, 2], vec![0.0, 1.0, 1.0, 0.0]).unwrap());
        put(&mut s, "x/wv", id.clone());
        put(&mut s, "x/wo", id);
        residual_params(&mut s, "x", 2, 2);
        let cfg = AttentionConfig { d_cross: 2, d_self: 2, heads: 1, ffn_hidden: 2, ln_eps: 1e-5 };
        let tokens = [[1.0, 2.0], [3.0, -1.0]];
        let mut g = Graph::new();
        let b = s.bind(&mut g);
        let h = g.constant(Tensor::new(vec![1, 1, 2, 2], tokens.concat()).unwrap());
        let mut sink = MapSink::default();
        let rec = Recorder { sink: &mut sink, block: 0, stage: Stage::Tsi };
        self_attention_block(&mut g, &b, "x", h, &cfg, Some(rec)).unwrap();
        // K = tokens with swapped columns
        let k = [[2.0, 1.0], [-1.0, 3.0]];
        for i in 0..2 {
            let logits: Vec<f64> = (0..2)
                .map(|j| (tokens[i][0] * k[j][0] + tokens[i][1] * k[j][1]) / 2f64.sqrt())
                .collect();
            let p = crate::numerics::softmax(&logits).unwrap();
            let m = &sink.collect(&g)[0].scores;
            for j in 0..2 {
                assert!((m.get(&[0, 0, i, j]) - p[j]).abs() < 1e-14);
            }
        }
    }
}
