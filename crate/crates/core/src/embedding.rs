//! Builds `H = E_obs ∥ E_s ∥ E_t ∥ P` from observation windows, node
//! coordinates, temporal indicators and the task prompt.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Binding, Graph, Tensor, Var};

/// One of the four feature families packed into `H`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segment {
    Observation,
    Spatial,
    Temporal,
    Prompt,
}

impl Segment {
    pub const ALL: [Segment; 4] = [
        Segment::Observation,
        Segment::Spatial,
        Segment::Temporal,
        Segment::Prompt,
    ];

    pub fn short(self) -> &'static str {
        match self {
            Segment::Observation => "o",
            Segment::Spatial => "s",
            Segment::Temporal => "t",
            Segment::Prompt => "p",
        }
    }
}

/// Contiguous slices of `H` in the fixed order observation | spatial | temporal | prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceLayout {
    pub d_obs: usize,
    pub d_s: usize,
    pub d_t: usize,
    pub d_p: usize,
}

impl SliceLayout {
    pub fn new(d_obs: usize, d_s: usize, d_t: usize, d_p: usize) -> Self {
        Self { d_obs, d_s, d_t, d_p }
    }

    pub fn d_h(&self) -> usize {
        self.d_obs + self.d_s + self.d_t + self.d_p
    }

    pub fn width(&self, seg: Segment) -> usize {
        match seg {
            Segment::Observation => self.d_obs,
            Segment::Spatial => self.d_s,
            Segment::Temporal => self.d_t,
            Segment::Prompt => self.d_p,
        }
    }

    pub fn offset(&self, seg: Segment) -> usize {
        match seg {
            Segment::Observation => 0,
            Segment::Spatial => self.d_obs,
            Segment::Temporal => self.d_obs + self.d_s,
            Segment::Prompt => self.d_obs + self.d_s + self.d_t,
        }
    }

    pub fn range(&self, seg: Segment) -> Range<usize> {
        let o = self.offset(seg);
        o..o + self.width(seg)
    }
}

/// `H` as a plain tensor together with its layout.
#[derive(Debug, Clone)]
pub struct IntegratedRepresentation {
    pub h: Tensor,
    pub layout: SliceLayout,
}

impl IntegratedRepresentation {
    pub fn new(h: Tensor, layout: SliceLayout) -> Result<Self> {
        if h.last_dim() != layout.d_h() {
            return Err(Error::shape(format!(
                "representation width {} does not match layout width {}",
                h.last_dim(),
                layout.d_h()
            )));
        }
        h.ensure_finite("integrated representation")?;
        Ok(Self { h, layout })
    }

    pub fn segment(&self, seg: Segment) -> Result<Tensor> {
        self.h
            .slice_last(self.layout.offset(seg), self.layout.width(seg))
    }
}

/// ObsMLP: `linear(C→h_obs) → ReLU → linear(h_obs→d_obs)` per `(b, t, n)`.
pub fn embed_observations(g: &mut Graph, params: &Binding, x: Var) -> Result<Var> {
    let w1 = params.var("embed/obs/w1")?;
    let channels = g.shape(w1)[0];
    if g.value(x).last_dim() != channels {
        return Err(Error::shape(format!(
            "observation input has {} channels, embedding expects {channels}",
            g.value(x).last_dim()
        )));
    }
    let h = g.affine(x, w1, params.var("embed/obs/b1")?)?;
    let h = g.relu(h)?;
    g.affine(h, params.var("embed/obs/w2")?, params.var("embed/obs/b2")?)
}

/// SpatialMLP: one linear map from normalized `(lon, lat)` to `d_s`. Returns `[N, d_s]`.
pub fn embed_spatial(g: &mut Graph, params: &Binding, coords: Var) -> Result<Var> {
    if g.value(coords).last_dim() != 2 || g.value(coords).rank() != 2 {
        return Err(Error::shape(format!(
            "coordinates must be [N, 2], got {:?}",
            g.shape(coords)
        )));
    }
    g.value(coords).ensure_finite("node coordinates")?;
    g.affine(
        coords,
        params.var("embed/spatial/w")?,
        params.var("embed/spatial/b")?,
    )
}

/// TemporalMLP over `E_ts ∥ E_dow ∥ E_tod`. `tod`/`dow` hold `B·T` indices,
/// `ts` is `[B, T, 6]`. Returns `[B, T, d_t]`.
pub fn embed_temporal(
    g: &mut Graph,
    params: &Binding,
    tod: &[usize],
    dow: &[usize],
    ts: Var,
) -> Result<Var> {
    let ts_shape = g.shape(ts).to_vec();
    if ts_shape.len() != 3 || ts_shape[2] != 6 {
        return Err(Error::shape(format!("timestamp features must be [B, T, 6], got {ts_shape:?}")));
    }
    let (b, t) = (ts_shape[0], ts_shape[1]);
    if tod.len() != b * t || dow.len() != b * t {
        return Err(Error::shape(format!(
            "expected {} tod/dow indices, got {}/{}",
            b * t,
            tod.len(),
            dow.len()
        )));
    }
    let e_ts = g.affine(
        ts,
        params.var("embed/temporal/ts_w")?,
        params.var("embed/temporal/ts_b")?,
    )?;
    let sub = g.value(e_ts).last_dim();
    let e_dow = g.gather(params.var("embed/temporal/dow")?, dow)?;
    let e_dow = g.reshape(e_dow, &[b, t, sub])?;
    let e_tod = g.gather(params.var("embed/temporal/tod")?, tod)?;
    let e_tod = g.reshape(e_tod, &[b, t, sub])?;
    let joined = g.concat(&[e_ts, e_dow, e_tod])?;
    g.affine(
        joined,
        params.var("embed/temporal/w")?,
        params.var("embed/temporal/b")?,
    )
}

/// Concatenates the four families into `H: [B, T, N, d_h]`, broadcasting the
/// spatial embedding over `(B, T)`, the temporal embedding over `N`, and the
/// prompt (`[N, d_p]` or `[1, d_p]`) over `(B, T)` and, for a shared prompt, `N`.
pub fn assemble_representation(
    g: &mut Graph,
    layout: &SliceLayout,
    e_obs: Var,
    e_s: Var,
    e_t: Var,
    prompt: Var,
) -> Result<Var> {
    let obs_shape = g.shape(e_obs).to_vec();
    if obs_shape.len() != 4 {
        return Err(Error::shape(format!("E_obs must be rank 4, got {obs_shape:?}")));
    }
    let (b, t, n) = (obs_shape[0], obs_shape[1], obs_shape[2]);
    let expect = |g: &Graph, v: Var, shape: &[usize], what: &str| -> Result<()> {
        if g.shape(v) != shape {
            return Err(Error::shape(format!(
                "{what}: expected {shape:?}, got {:?}",
                g.shape(v)
            )));
        }
        Ok(())
    };
    expect(g, e_obs, &[b, t, n, layout.d_obs], "observation embedding")?;
    expect(g, e_s, &[n, layout.d_s], "spatial embedding")?;
    expect(g, e_t, &[b, t, layout.d_t], "temporal embedding")?;

    let prompt = match g.shape(prompt) {
        [rows, w] if *w == layout.d_p && *rows == n => prompt,
        [1, w] if *w == layout.d_p => {
            let p = g.reshape(prompt, &[layout.d_p])?;
            g.repeat_axis(p, 0, n)?
        }
        other => {
            return Err(Error::shape(format!(
                "prompt must be [{n}, {}] or [1, {}], got {other:?}",
                layout.d_p, layout.d_p
            )))
        }
    };
    let e_s = g.repeat_axis(e_s, 0, t)?;
    let e_s = g.repeat_axis(e_s, 0, b)?;
    let e_t = g.repeat_axis(e_t, 2, n)?;
    let p = g.repeat_axis(prompt, 0, t)?;
    let p = g.repeat_axis(p, 0, b)?;
    g.concat(&[e_obs, e_s, e_t, p])
}
