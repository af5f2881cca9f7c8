//! Single-layer geometry and the pointer model.
//!
//! A layer reads its input feature map from a contiguous region laid out
//! depth-first (all channels of a pixel, then pixels along x, then rows) and
//! writes its output in the same order, one output word per *block* of
//! `(c_in / groups) * k_x * k_y` MAC cycles. If the output region starts `d`
//! words below the input region, the two may overlap as long as the write
//! pointer never reaches input data that a later block still reads.
//!
//! Two read pointers are provided:
//!
//! * [`LayerModel::read_pointer_at`] is the averaged-velocity closed form
//!   with its x/y position, top padding and side padding terms, kept verbatim
//!   for reference and comparison.
//! * [`LayerModel::live_floor`] is the exact lowest input address read by any
//!   later block, derived in O(1) per block from the window geometry. Offsets
//!   and arena sizes are computed from this one.
//!
//! All arithmetic is integer or exact rational; nothing here touches floats.

use num_integer::Integer;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry of one convolution layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerSpec {
    pub x_in: u64,
    pub y_in: u64,
    pub c_in: u64,
    pub k_x: u64,
    pub k_y: u64,
    pub s_x: u64,
    pub s_y: u64,
    pub p_x: u64,
    pub p_y: u64,
    pub c_out: u64,
    /// 1 for a dense convolution, `c_in` for depthwise.
    pub groups: u64,
    /// Skip-connection activations that stay live across this layer. They sit
    /// directly above the convolution input and count towards `m_in`.
    pub residual_carry_words: u64,
}

impl LayerSpec {
    /// Square image, square kernel, equal stride and padding on both axes.
    pub fn square(size: u64, c_in: u64, kernel: u64, stride: u64, pad: u64, c_out: u64) -> Self {
        LayerSpec {
            x_in: size,
            y_in: size,
            c_in,
            k_x: kernel,
            k_y: kernel,
            s_x: stride,
            s_y: stride,
            p_x: pad,
            p_y: pad,
            c_out,
            groups: 1,
            residual_carry_words: 0,
        }
    }

    pub fn with_groups(mut self, groups: u64) -> Self {
        self.groups = groups;
        self
    }

    pub fn with_residual(mut self, words: u64) -> Self {
        self.residual_carry_words = words;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("x_in", self.x_in),
            ("y_in", self.y_in),
            ("c_in", self.c_in),
            ("k_x", self.k_x),
            ("k_y", self.k_y),
            ("s_x", self.s_x),
            ("s_y", self.s_y),
            ("c_out", self.c_out),
            ("groups", self.groups),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidLayer(format!("{name} must be at least 1")));
            }
        }
        if self.k_x > self.x_in + 2 * self.p_x {
            return Err(Error::InvalidLayer(format!(
                "k_x = {} exceeds padded width {}",
                self.k_x,
                self.x_in + 2 * self.p_x
            )));
        }
        if self.k_y > self.y_in + 2 * self.p_y {
            return Err(Error::InvalidLayer(format!(
                "k_y = {} exceeds padded height {}",
                self.k_y,
                self.y_in + 2 * self.p_y
            )));
        }
        if !self.c_in.is_multiple_of(self.groups) || !self.c_out.is_multiple_of(self.groups) {
            return Err(Error::InvalidLayer(format!(
                "groups = {} must divide c_in = {} and c_out = {}",
                self.groups, self.c_in, self.c_out
            )));
        }
        Ok(())
    }

    pub fn x_out(&self) -> u64 {
        (2 * self.p_x + self.x_in - self.k_x) / self.s_x + 1
    }

    pub fn y_out(&self) -> u64 {
        (2 * self.p_y + self.y_in - self.k_y) / self.s_y + 1
    }

    pub fn model(&self) -> Result<LayerModel> {
        LayerModel::new(*self)
    }
}

/// Sizes that follow from a [`LayerSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DerivedDims {
    pub x_out: u64,
    pub y_out: u64,
    /// Convolution input plus residual carry.
    pub m_in: u64,
    /// Convolution input only; the carry region starts here.
    pub m_conv_in: u64,
    pub m_out: u64,
    /// MAC cycles per output word.
    pub block_cycles: u64,
    /// Number of output words, i.e. blocks.
    pub t_len: u64,
}

pub fn derive_dims(layer: &LayerSpec) -> Result<DerivedDims> {
    layer.validate()?;
    let x_out = layer.x_out();
    let y_out = layer.y_out();
    let m_conv_in = layer.x_in * layer.y_in * layer.c_in;
    let t_len = x_out * y_out * layer.c_out;
    Ok(DerivedDims {
        x_out,
        y_out,
        m_in: m_conv_in + layer.residual_carry_words,
        m_conv_in,
        m_out: t_len,
        block_cycles: (layer.c_in / layer.groups) * layer.k_x * layer.k_y,
        t_len,
    })
}

/// Average pointer velocities in words per cycle and the start addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PointerParams {
    pub v_pw: Ratio<i64>,
    pub v_pr: Ratio<i64>,
    pub p_w0: i64,
    pub p_r0: i64,
}

/// What determined a layer's offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binding {
    /// Some later block still reads the word the write would land on.
    Liveness,
    /// The output region would run past the end of the convolution input.
    Fit,
    /// Nothing forces a gap; the offset sits on the `d >= 1` floor.
    Floor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OffsetAnalysis {
    /// Minimal offset, never below 1.
    pub offset: u64,
    /// `1 + max_k (k - floor(k))` before clamping to 1. May be zero or
    /// negative when the write pointer trails the reads by itself.
    pub requirement: i64,
    pub binding: Binding,
}

/// A validated layer with its derived dimensions and window bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerModel {
    spec: LayerSpec,
    dims: DerivedDims,
    /// Inclusive ranges of output columns/rows whose window touches at least
    /// one real (non-padding) input pixel. `None` when no window does.
    cols: Option<(u64, u64)>,
    rows: Option<(u64, u64)>,
    in_per_group: u64,
    out_per_group: u64,
}

fn valid_range(
    out_len: u64,
    stride: u64,
    pad: u64,
    kernel: u64,
    in_len: u64,
) -> Option<(u64, u64)> {
    let touches = |o: u64| {
        let start = (o * stride) as i64 - pad as i64;
        start + kernel as i64 > 0 && start < in_len as i64
    };
    let lo = (0..out_len).find(|&o| touches(o))?;
    let hi = (0..out_len).rev().find(|&o| touches(o))?;
    Some((lo, hi))
}

impl LayerModel {
    pub fn new(spec: LayerSpec) -> Result<Self> {
        let dims = derive_dims(&spec)?;
        Ok(LayerModel {
            spec,
            dims,
            cols: valid_range(dims.x_out, spec.s_x, spec.p_x, spec.k_x, spec.x_in),
            rows: valid_range(dims.y_out, spec.s_y, spec.p_y, spec.k_y, spec.y_in),
            in_per_group: spec.c_in / spec.groups,
            out_per_group: spec.c_out / spec.groups,
        })
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn dims(&self) -> &DerivedDims {
        &self.dims
    }

    pub fn pointer_params(&self, p_w0: i64, p_r0: i64) -> PointerParams {
        let s = &self.spec;
        let b = self.dims.block_cycles as i64;
        let c_out = s.c_out as i64;
        let c_in = s.c_in as i64;
        let x_out = self.dims.x_out as i64;
        let along_row = Ratio::new(s.s_x as i64 * c_in, c_out * b);
        let row_skip = Ratio::new((s.s_y as i64 - 1) * c_in * s.x_in as i64, x_out * c_out * b);
        PointerParams {
            v_pw: Ratio::new(1, b),
            v_pr: along_row + row_skip,
            p_w0,
            p_r0,
        }
    }

    /// Address of the output word being produced at cycle `t`.
    pub fn write_pointer_at(&self, t: u64, p_w0: i64) -> i64 {
        let v = Ratio::new(1, self.dims.block_cycles as i64);
        (v * Ratio::from_integer(t as i64)).floor().to_integer() + p_w0
    }

    /// Averaged-velocity read pointer, term for term: x position + y position
    /// - top padding - side padding offset, clamped at zero.
    ///
    /// Not monotone when `x_out * s_x > x_in`: the ceil in the side padding
    /// term steps one cycle after a row boundary, so the pointer dips by
    /// `(x_out*s_x - x_in)*s_x*c_in` for the rest of that first block.
    pub fn read_pointer_at(&self, t: u64, p_r0: i64) -> i64 {
        let s = &self.spec;
        let d = &self.dims;
        let t = t as i64;
        let c_in = s.c_in as i64;
        let x_in = s.x_in as i64;
        let per_pixel = (s.c_out * d.block_cycles) as i64;
        let per_row = d.x_out as i64 * per_pixel;

        let x_pos = Integer::div_floor(&t, &per_pixel) * (s.s_x as i64 * c_in);
        let y_pos = Integer::div_floor(&t, &per_row) * ((s.s_y as i64 - 1) * c_in * x_in);
        let top_padding = c_in * x_in * s.p_y as i64;
        let overshoot = (d.x_out * s.s_x) as i64 - x_in;
        let side_padding =
            Integer::div_ceil(&t, &per_row) * (overshoot * s.s_x as i64 * c_in).max(0);

        (x_pos + y_pos - top_padding - side_padding).max(0) + p_r0
    }

    /// Lowest input word read by block `(y_out, x_out, c_out)`, or `None`
    /// when that window lies entirely in padding.
    fn window_low(&self, yo: u64, xo: u64, co: u64) -> Option<u64> {
        let s = &self.spec;
        let in_range = |r: Option<(u64, u64)>, v: u64| r.is_some_and(|(lo, hi)| lo <= v && v <= hi);
        if !in_range(self.rows, yo) || !in_range(self.cols, xo) {
            return None;
        }
        let row = (yo * s.s_y).saturating_sub(s.p_y);
        let col = (xo * s.s_x).saturating_sub(s.p_x);
        let group = co / self.out_per_group;
        Some((row * s.x_in + col) * s.c_in + group * self.in_per_group)
    }

    /// Lowest input word of any block after pixel `(yo, xo)`.
    fn later_pixel_floor(&self, yo: u64, xo: u64) -> Option<u64> {
        let next_in_row = self
            .cols
            .map(|(lo, _)| (xo + 1).max(lo))
            .and_then(|x| self.window_low(yo, x, 0));
        let next_row = match (self.rows, self.cols) {
            (Some((ylo, _)), Some((xlo, _))) => self.window_low((yo + 1).max(ylo), xlo, 0),
            _ => None,
        };
        match (next_in_row, next_row) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    /// Lowest input address read by any block after `block`, or the end of
    /// the convolution input when no later block reads anything. Writes of
    /// block `block` land safely iff they are strictly below this.
    pub fn live_floor(&self, block: u64) -> u64 {
        self.live_floor_with_source(block).0
    }

    /// The floor and whether it comes from an actual later read.
    fn live_floor_with_source(&self, block: u64) -> (u64, bool) {
        let c_out = self.spec.c_out;
        let co = block % c_out;
        let pixel = block / c_out;
        let xo = pixel % self.dims.x_out;
        let yo = pixel / self.dims.x_out;
        self.floor_at(yo, xo, co, self.later_pixel_floor(yo, xo))
    }

    fn floor_at(&self, yo: u64, xo: u64, co: u64, later: Option<u64>) -> (u64, bool) {
        let same_pixel = if co + 1 < self.spec.c_out {
            self.window_low(yo, xo, co + 1)
        } else {
            None
        };
        let read = match (same_pixel, later) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        match read {
            Some(r) if r < self.dims.m_conv_in => (r, true),
            _ => (self.dims.m_conv_in, false),
        }
    }

    /// Exact read pointer at cycle `t`: the live floor of the block that
    /// cycle belongs to. Constant within a block and non-decreasing.
    pub fn needed_floor_at(&self, t: u64, p_r0: i64) -> i64 {
        self.live_floor(t / self.dims.block_cycles) as i64 + p_r0
    }

    /// Minimal offset from the exact read pointer.
    pub fn offset_analysis(&self) -> OffsetAnalysis {
        let c_out = self.spec.c_out;
        let mut best: Option<(i64, bool)> = None;
        let mut k: i64 = 0;
        for yo in 0..self.dims.y_out {
            for xo in 0..self.dims.x_out {
                let later = self.later_pixel_floor(yo, xo);
                for co in 0..c_out {
                    let (floor, from_read) = self.floor_at(yo, xo, co, later);
                    let gap = k - floor as i64;
                    best = match best {
                        None => Some((gap, from_read)),
                        Some((g, _)) if gap > g => Some((gap, from_read)),
                        Some((g, r)) if gap == g => Some((g, r || from_read)),
                        keep => keep,
                    };
                    k += 1;
                }
            }
        }
        let (gap, from_read) = best.expect("layers have at least one block");
        let requirement = gap + 1;
        let binding = if requirement < 1 {
            Binding::Floor
        } else if from_read {
            Binding::Liveness
        } else {
            Binding::Fit
        };
        OffsetAnalysis {
            offset: requirement.max(1) as u64,
            requirement,
            binding,
        }
    }

    pub fn min_offset(&self) -> u64 {
        self.offset_analysis().offset
    }

    /// Offset from the averaged-velocity pointer, sampled at block starts.
    /// Can be below the true requirement; see [`LayerModel::read_pointer_at`].
    pub fn literal_min_offset(&self) -> u64 {
        let b = self.dims.block_cycles;
        let worst = (0..self.dims.t_len)
            .map(|k| k as i64 - self.read_pointer_at(k * b, 0))
            .max()
            .expect("layers have at least one block");
        (worst + 1).max(1) as u64
    }
}

pub fn min_offset(layer: &LayerSpec) -> Result<u64> {
    Ok(layer.model()?.min_offset())
}

/// `m_in + d`: input plus offset.
///
/// This also covers the whole output region. The last output word is written
/// at `t_len - 1 - d`, which is strictly below the live floor of the last
/// block, and that floor never exceeds the end of the convolution input. So
/// the output ends at or before the input region's end and the pair spans
/// exactly `[-d, m_in)`.
pub fn min_layer_memory(layer: &LayerSpec) -> Result<u64> {
    let model = layer.model()?;
    Ok(model.dims().m_in + model.min_offset())
}

/// Disjoint input and output regions.
pub fn ping_pong_pair_memory(layer: &LayerSpec) -> Result<u64> {
    let d = derive_dims(layer)?;
    Ok(d.m_in + d.m_out)
}

/// Re-expresses a layer in memory words holding `q` entries each.
///
/// Input pixels hold `c_in / q` words, output pixels `ceil(c_out / q)` words
/// (padded to a pixel boundary). Groups coarsen to the largest count that
/// still divides both packed channel counts, so each packed output word reads
/// a superset of the words its entries need.
pub fn apply_packing(layer: &LayerSpec, q: u64) -> Result<LayerSpec> {
    layer.validate()?;
    if q == 0 {
        return Err(Error::InvalidLayer(
            "packing factor must be at least 1".into(),
        ));
    }
    if !layer.c_in.is_multiple_of(q) {
        return Err(Error::PackingMismatch {
            q,
            c_in: layer.c_in,
        });
    }
    if q == 1 {
        return Ok(*layer);
    }
    let c_in = layer.c_in / q;
    let c_out = layer.c_out.div_ceil(q);
    Ok(LayerSpec {
        c_in,
        c_out,
        groups: layer.groups.gcd(&c_in).gcd(&c_out),
        residual_carry_words: layer.residual_carry_words.div_ceil(q),
        ..*layer
    })
}
