//! Integer executors: a plain double-buffer reference and a single-arena
//! executor that follows a [`MemoryPlan`].
//!
//! Both use wrapping `i64` arithmetic, identity activation and optional bias,
//! so their outputs must agree bit for bit whenever the plan never
//! overwrites a live word.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::LayerSpec;
use crate::planner::{MemoryPlan, NetworkSpec};

/// Depth-first feature map: `data[(y * width + x) * channels + c]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tensor {
    pub width: u64,
    pub height: u64,
    pub channels: u64,
    pub data: Vec<i64>,
}

impl Tensor {
    pub fn zeros(width: u64, height: u64, channels: u64) -> Self {
        Tensor {
            width,
            height,
            channels,
            data: vec![0; (width * height * channels) as usize],
        }
    }

    fn index(&self, y: u64, x: u64, c: u64) -> usize {
        ((y * self.width + x) * self.channels + c) as usize
    }
}

/// Kernel weights laid out `[c_out][k_y][k_x][c_in / groups]`, plus one
/// bias per output channel (empty for no bias).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerWeights {
    pub weights: Vec<i64>,
    pub bias: Vec<i64>,
}

impl LayerWeights {
    fn weight(&self, l: &LayerSpec, c_out: u64, k_y: u64, k_x: u64, c: u64) -> i64 {
        let per_group = l.c_in / l.groups;
        self.weights[(((c_out * l.k_y + k_y) * l.k_x + k_x) * per_group + c) as usize]
    }

    fn bias(&self, c_out: u64) -> i64 {
        self.bias.get(c_out as usize).copied().unwrap_or(0)
    }

    fn check(&self, index: usize, l: &LayerSpec) -> Result<()> {
        let expected = l.c_out * l.k_y * l.k_x * (l.c_in / l.groups);
        if self.weights.len() as u64 != expected {
            return Err(Error::DimensionMismatch(format!(
                "layer {index}: expected {expected} weights, got {}",
                self.weights.len()
            )));
        }
        if !self.bias.is_empty() && self.bias.len() as u64 != l.c_out {
            return Err(Error::DimensionMismatch(format!(
                "layer {index}: expected {} biases, got {}",
                l.c_out,
                self.bias.len()
            )));
        }
        Ok(())
    }
}

pub fn random_input<R: Rng>(net: &NetworkSpec, rng: &mut R, range: i64) -> Tensor {
    let l = &net.layers[0];
    let mut t = Tensor::zeros(l.x_in, l.y_in, l.c_in);
    t.data
        .iter_mut()
        .for_each(|v| *v = rng.gen_range(-range..=range));
    t
}

pub fn random_weights<R: Rng>(net: &NetworkSpec, rng: &mut R, range: i64) -> Vec<LayerWeights> {
    net.layers
        .iter()
        .map(|l| {
            let n = l.c_out * l.k_y * l.k_x * (l.c_in / l.groups);
            LayerWeights {
                weights: (0..n).map(|_| rng.gen_range(-range..=range)).collect(),
                bias: (0..l.c_out)
                    .map(|_| rng.gen_range(-range..=range))
                    .collect(),
            }
        })
        .collect()
}

/// One output value; `read(y, x, c)` supplies input entries.
fn convolve_at(
    l: &LayerSpec,
    w: &LayerWeights,
    y_out: u64,
    x_out: u64,
    c_out: u64,
    mut read: impl FnMut(u64, u64, u64) -> i64,
) -> i64 {
    let per_group = l.c_in / l.groups;
    let group = c_out / (l.c_out / l.groups);
    let mut acc = w.bias(c_out);
    for k_y in 0..l.k_y {
        let y = (y_out * l.s_y + k_y) as i64 - l.p_y as i64;
        if y < 0 || y >= l.y_in as i64 {
            continue;
        }
        for k_x in 0..l.k_x {
            let x = (x_out * l.s_x + k_x) as i64 - l.p_x as i64;
            if x < 0 || x >= l.x_in as i64 {
                continue;
            }
            for c in 0..per_group {
                let v = read(y as u64, x as u64, group * per_group + c);
                acc = acc.wrapping_add(v.wrapping_mul(w.weight(l, c_out, k_y, k_x, c)));
            }
        }
    }
    acc
}

fn check_inputs(net: &NetworkSpec, input: &Tensor, weights: &[LayerWeights]) -> Result<()> {
    net.validate()?;
    let first = &net.layers[0];
    if (input.width, input.height, input.channels) != (first.x_in, first.y_in, first.c_in)
        || input.data.len() as u64 != first.x_in * first.y_in * first.c_in
    {
        return Err(Error::DimensionMismatch(format!(
            "input is {}x{}x{}, first layer expects {}x{}x{}",
            input.width, input.height, input.channels, first.x_in, first.y_in, first.c_in
        )));
    }
    if weights.len() != net.layers.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} weight sets for {} layers",
            weights.len(),
            net.layers.len()
        )));
    }
    for (i, (l, w)) in net.layers.iter().zip(weights).enumerate() {
        w.check(i, l)?;
    }
    Ok(())
}

/// Layer-by-layer execution alternating between two separate buffers.
pub fn execute_network_reference(
    net: &NetworkSpec,
    input: &Tensor,
    weights: &[LayerWeights],
) -> Result<Tensor> {
    check_inputs(net, input, weights)?;
    let mut current = input.clone();
    for (l, w) in net.layers.iter().zip(weights) {
        let mut next = Tensor::zeros(l.x_out(), l.y_out(), l.c_out);
        for y in 0..next.height {
            for x in 0..next.width {
                for c in 0..l.c_out {
                    let v = convolve_at(l, w, y, x, c, |yi, xi, ci| {
                        current.data[current.index(yi, xi, ci)]
                    });
                    let i = next.index(y, x, c);
                    next.data[i] = v;
                }
            }
        }
        current = next;
    }
    Ok(current)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    #[default]
    Unchecked,
    /// Track per-word liveness and fail on the first write to a live word.
    Checked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shadow {
    Dead,
    /// Input word, last read by this block.
    Input(u64),
    Carry,
    /// Already written by the running layer.
    Output,
}

struct Arena {
    words: u64,
    lanes: u64,
    data: Vec<i64>,
    shadow: Option<Vec<Shadow>>,
}

impl Arena {
    fn slot(&self, base: u64, offset: u64) -> u64 {
        (base + offset) % self.words
    }

    fn read(&self, word: u64, lane: u64) -> i64 {
        self.data[(word * self.lanes + lane) as usize]
    }

    fn write_word(&mut self, word: u64, lanes: &[i64]) {
        let start = (word * self.lanes) as usize;
        self.data[start..start + self.lanes as usize].copy_from_slice(lanes);
    }
}

fn carry_pattern(layer: usize, i: u64) -> i64 {
    0x5eed_0000_0000 ^ ((layer as i64) << 20) ^ i as i64
}

/// Runs `net` inside one arena of `plan.arena_size` words (each holding
/// `net.packing` entries) at the planned bases, with modular addressing.
pub fn execute_network_in_arena(
    net: &NetworkSpec,
    plan: &MemoryPlan,
    input: &Tensor,
    weights: &[LayerWeights],
    mode: ExecMode,
) -> Result<Tensor> {
    check_inputs(net, input, weights)?;
    if plan.layer_plans.len() != net.layers.len() || plan.arena_size == 0 {
        return Err(Error::DimensionMismatch(format!(
            "plan covers {} layers, network has {}",
            plan.layer_plans.len(),
            net.layers.len()
        )));
    }
    let q = net.packing;
    let mut arena = Arena {
        words: plan.arena_size,
        lanes: q,
        data: vec![0; (plan.arena_size * q) as usize],
        shadow: (mode == ExecMode::Checked).then(|| vec![Shadow::Dead; plan.arena_size as usize]),
    };

    // Entry c of pixel p lives in word p * ceil(C / q) + c / q, lane c % q.
    let words_per_pixel = |c: u64| c.div_ceil(q);

    let first = &net.layers[0];
    let base0 = plan.layer_plans[0].input_base;
    for y in 0..first.y_in {
        for x in 0..first.x_in {
            for c in 0..first.c_in {
                let word = (y * first.x_in + x) * words_per_pixel(first.c_in) + c / q;
                let slot = arena.slot(base0, word);
                let i = (slot * q + c % q) as usize;
                arena.data[i] = input.data[input.index(y, x, c)];
            }
        }
    }

    for (index, ((l, w), lp)) in net
        .layers
        .iter()
        .zip(weights)
        .zip(&plan.layer_plans)
        .enumerate()
    {
        let in_wpp = words_per_pixel(l.c_in);
        let out_wpp = words_per_pixel(l.c_out);
        let in_words = l.x_in * l.y_in * in_wpp;
        let carry_words = l.residual_carry_words.div_ceil(q);
        let (x_out, y_out) = (l.x_out(), l.y_out());
        let in_word = |y: u64, x: u64, c: u64| (y * l.x_in + x) * in_wpp + c / q;

        for i in 0..carry_words {
            let slot = arena.slot(lp.input_base, in_words + i);
            let lanes = vec![carry_pattern(index, i); q as usize];
            arena.write_word(slot, &lanes);
        }

        if let Some(shadow) = arena.shadow.as_mut() {
            shadow.fill(Shadow::Dead);
            let words = plan.arena_size;
            let mut block = 0;
            for y in 0..y_out {
                for x in 0..x_out {
                    for j in 0..out_wpp {
                        for c_out in j * q..((j + 1) * q).min(l.c_out) {
                            convolve_at(l, w, y, x, c_out, |yi, xi, ci| {
                                let slot = (lp.input_base + in_word(yi, xi, ci)) % words;
                                shadow[slot as usize] = Shadow::Input(block);
                                0
                            });
                        }
                        block += 1;
                    }
                }
            }
            for i in 0..carry_words {
                shadow[((lp.input_base + in_words + i) % words) as usize] = Shadow::Carry;
            }
        }

        let mut lanes = vec![0i64; q as usize];
        let mut block = 0;
        for y in 0..y_out {
            for x in 0..x_out {
                for j in 0..out_wpp {
                    lanes.fill(0);
                    for c_out in j * q..((j + 1) * q).min(l.c_out) {
                        lanes[(c_out % q) as usize] =
                            convolve_at(l, w, y, x, c_out, |yi, xi, ci| {
                                arena.read(arena.slot(lp.input_base, in_word(yi, xi, ci)), ci % q)
                            });
                    }
                    let slot = arena.slot(lp.output_base, block);
                    if let Some(shadow) = arena.shadow.as_mut() {
                        let what = match shadow[slot as usize] {
                            Shadow::Input(last) if last > block => {
                                Some(format!("input word still read by block {last}"))
                            }
                            Shadow::Carry => Some("residual carry word".to_string()),
                            Shadow::Output => Some("output word of the same layer".to_string()),
                            _ => None,
                        };
                        if let Some(what) = what {
                            return Err(Error::Clobber {
                                layer: index,
                                block,
                                address: slot,
                                what,
                            });
                        }
                        shadow[slot as usize] = Shadow::Output;
                    }
                    arena.write_word(slot, &lanes);
                    block += 1;
                }
            }
        }

        if mode == ExecMode::Checked {
            for i in 0..carry_words {
                let slot = arena.slot(lp.input_base, in_words + i);
                if (0..q).any(|lane| arena.read(slot, lane) != carry_pattern(index, i)) {
                    return Err(Error::Clobber {
                        layer: index,
                        block,
                        address: slot,
                        what: "residual carry word changed during the layer".to_string(),
                    });
                }
            }
        }
    }

    let last = net.layers.last().expect("validated network has layers");
    let lp = plan.layer_plans.last().expect("plan has layers");
    let mut out = Tensor::zeros(last.x_out(), last.y_out(), last.c_out);
    let out_wpp = words_per_pixel(last.c_out);
    for y in 0..out.height {
        for x in 0..out.width {
            for c in 0..out.channels {
                let word = (y * out.width + x) * out_wpp + c / q;
                let i = out.index(y, x, c);
                out.data[i] = arena.read(arena.slot(lp.output_base, word), c % q);
            }
        }
    }
    Ok(out)
}
