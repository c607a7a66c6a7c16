use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedding::SliceLayout;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Full,
    Tiny,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Profile::Full),
            "tiny" => Ok(Profile::Tiny),
            other => Err(Error::Config(format!("unknown profile `{other}`"))),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Full => "full",
            Profile::Tiny => "tiny",
        })
    }
}

/// How the task prompt is laid out before broadcasting into `H`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    /// One `d_p` vector per node.
    PerNode,
    /// A single `d_p` vector shared by every node.
    Global,
}

/// Architecture and shape settings of the interaction network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub d_obs: usize,
    pub d_s: usize,
    pub d_t: usize,
    pub d_p: usize,
    /// Hidden width of the two-layer observation MLP.
    pub h_obs: usize,
    /// Width of each of the three temporal lookups before the temporal MLP.
    pub temporal_sub: usize,
    pub d_cross: usize,
    pub d_self: usize,
    pub heads: usize,
    pub ffn_hidden: usize,
    pub d_f: usize,
    pub d_y: usize,
    pub blocks: usize,
    pub input_len: usize,
    pub horizon: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub slots_per_day: usize,
    pub cross_interaction: bool,
    pub tcci_reverse: bool,
    pub positional_encoding: bool,
    pub prompt_mode: PromptMode,
    pub ln_eps: f64,
}

impl ModelConfig {
    pub fn for_profile(profile: Profile, in_channels: usize, slots_per_day: usize) -> Self {
        let base = Self {
            d_obs: 24,
            d_s: 12,
            d_t: 60,
            d_p: 72,
            h_obs: 64,
            temporal_sub: 16,
            d_cross: 24,
            d_self: 168,
            heads: 4,
            ffn_hidden: 256,
            d_f: 24,
            d_y: 32,
            blocks: 1,
            input_len: 12,
            horizon: 12,
            in_channels,
            out_channels: 1,
            slots_per_day,
            cross_interaction: true,
            tcci_reverse: true,
            positional_encoding: true,
            prompt_mode: PromptMode::PerNode,
            ln_eps: 1e-5,
        };
        match profile {
            Profile::Full => base,
            Profile::Tiny => Self {
                d_obs: 8,
                d_s: 4,
                d_t: 12,
                d_p: 8,
                h_obs: 16,
                temporal_sub: 8,
                d_cross: 8,
                d_self: 32,
                heads: 2,
                ffn_hidden: 32,
                d_f: 8,
                d_y: 8,
                ..base
            },
        }
    }

    pub fn d_h(&self) -> usize {
        self.d_obs + self.d_s + self.d_t + self.d_p
    }

    pub fn layout(&self) -> SliceLayout {
        SliceLayout::new(self.d_obs, self.d_s, self.d_t, self.d_p)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d_obs", self.d_obs),
            ("d_s", self.d_s),
            ("d_t", self.d_t),
            ("d_p", self.d_p),
            ("h_obs", self.h_obs),
            ("temporal_sub", self.temporal_sub),
            ("d_cross", self.d_cross),
            ("d_self", self.d_self),
            ("heads", self.heads),
            ("ffn_hidden", self.ffn_hidden),
            ("d_f", self.d_f),
            ("d_y", self.d_y),
            ("blocks", self.blocks),
            ("input_len", self.input_len),
            ("horizon", self.horizon),
            ("in_channels", self.in_channels),
            ("out_channels", self.out_channels),
            ("slots_per_day", self.slots_per_day),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.d_cross % self.heads != 0 || self.d_self % self.heads != 0 {
            return Err(Error::Config(format!(
                "attention widths {} and {} must be divisible by {} heads",
                self.d_cross, self.d_self, self.heads
            )));
        }
        if !(self.ln_eps > 0.0) {
            return Err(Error::Config("ln_eps must be positive".into()));
        }
        Ok(())
    }
}

/// Deterministic child seed for a named stream.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
