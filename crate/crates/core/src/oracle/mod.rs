//! Ground truth for the pointer model.
//!
//! Everything here walks the literal six-deep convolution loop nest
//! (`y_out, x_out, c_out, k_y, k_x, c_in`) instead of reasoning about window
//! geometry, so it shares nothing with [`crate::model`] beyond the output
//! size formula.

mod exec;

pub use exec::{
    execute_network_in_arena, execute_network_reference, random_input, random_weights, ExecMode,
    LayerWeights, Tensor,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{derive_dims, LayerSpec};

/// Default limit on `t_len * block_cycles` for oracle runs.
pub const DEFAULT_ORACLE_CAP: u64 = 1 << 28;

/// Reads and writes of one layer, tagged with the block that performs them.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AccessTrace {
    /// `(block, input address)` in loop order.
    pub reads: Vec<(u64, u64)>,
    /// `(block, output index)`; one per block, committed at block end.
    pub writes: Vec<(u64, u64)>,
}

pub fn oracle_work(layer: &LayerSpec) -> Result<u64> {
    let d = derive_dims(layer)?;
    Ok(d.t_len * d.block_cycles)
}

fn check_cap(layer: &LayerSpec, cap: u64) -> Result<()> {
    let work = oracle_work(layer)?;
    if work > cap {
        return Err(Error::SizeLimit { work, cap });
    }
    Ok(())
}

/// Calls `visit(block, address)` for every non-padding input read, in loop
/// order.
pub(crate) fn for_each_read(layer: &LayerSpec, mut visit: impl FnMut(u64, u64)) -> Result<()> {
    let d = derive_dims(layer)?;
    let in_per_group = layer.c_in / layer.groups;
    let out_per_group = layer.c_out / layer.groups;
    let mut block = 0;
    for y_out in 0..d.y_out {
        for x_out in 0..d.x_out {
            for c_out in 0..layer.c_out {
                let group = c_out / out_per_group;
                let y0 = (y_out * layer.s_y) as i64 - layer.p_y as i64;
                let x0 = (x_out * layer.s_x) as i64 - layer.p_x as i64;
                for k_y in 0..layer.k_y as i64 {
                    let y = y0 + k_y;
                    if y < 0 || y >= layer.y_in as i64 {
                        continue;
                    }
                    for k_x in 0..layer.k_x as i64 {
                        let x = x0 + k_x;
                        if x < 0 || x >= layer.x_in as i64 {
                            continue;
                        }
                        let pixel = (y as u64 * layer.x_in + x as u64) * layer.c_in;
                        for c in 0..in_per_group {
                            visit(block, pixel + group * in_per_group + c);
                        }
                    }
                }
                block += 1;
            }
        }
    }
    Ok(())
}

pub fn trace_layer(layer: &LayerSpec, cap: u64) -> Result<AccessTrace> {
    check_cap(layer, cap)?;
    let mut trace = AccessTrace::default();
    for_each_read(layer, |block, addr| trace.reads.push((block, addr)))?;
    let t_len = derive_dims(layer)?.t_len;
    trace.writes = (0..t_len).map(|k| (k, k)).collect();
    Ok(trace)
}

/// Last block reading each convolution input word, `None` if never read.
pub fn last_reads(layer: &LayerSpec, cap: u64) -> Result<Vec<Option<u64>>> {
    check_cap(layer, cap)?;
    let d = derive_dims(layer)?;
    let mut last = vec![None; d.m_conv_in as usize];
    for_each_read(layer, |block, addr| last[addr as usize] = Some(block))?;
    Ok(last)
}

/// Least `d >= 1` such that no block's write, at relative address
/// `block - d`, lands on an input word read by a later block or past the end
/// of the convolution input (the residual carry, or the arena wrap).
/// Same-block reads are allowed since writes commit at block end.
pub fn min_safe_offset_bruteforce(layer: &LayerSpec, cap: u64) -> Result<u64> {
    let last = last_reads(layer, cap)?;
    let t_len = derive_dims(layer)?.t_len;
    let m = last.len() as u64;
    let safe = |d: u64| {
        // Block k writes address k - d; only k >= d touches the input.
        if t_len > d && t_len - d > m {
            return false;
        }
        (d..t_len).all(|k| match last[(k - d) as usize] {
            Some(reader) => reader <= k,
            None => true,
        })
    };
    let d = (1..=t_len.max(1))
        .find(|&d| safe(d))
        .expect("d = t_len keeps every write below the input");
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Match,
    ClosedFormConservative,
    Unsafe,
}

impl Verdict {
    pub fn compare(closed_form: u64, oracle: u64) -> Self {
        match closed_form.cmp(&oracle) {
            std::cmp::Ordering::Equal => Verdict::Match,
            std::cmp::Ordering::Greater => Verdict::ClosedFormConservative,
            std::cmp::Ordering::Less => Verdict::Unsafe,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Verdict::Match => "match",
            Verdict::ClosedFormConservative => "conservative",
            Verdict::Unsafe => "UNSAFE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleReport {
    pub d_oracle: u64,
    pub d_closed_form: u64,
    pub verdict: Verdict,
    /// Offset from the averaged-velocity read pointer, for comparison.
    pub d_literal: u64,
    pub literal_verdict: Verdict,
}

pub fn verify_layer(layer: &LayerSpec, cap: u64) -> Result<OracleReport> {
    verify_layer_against(layer, None, cap)
}

/// Like [`verify_layer`], but with the closed-form offset replaced by
/// `forced` when given (used to exhibit unsafe plans).
pub fn verify_layer_against(
    layer: &LayerSpec,
    forced: Option<u64>,
    cap: u64,
) -> Result<OracleReport> {
    let d_oracle = min_safe_offset_bruteforce(layer, cap)?;
    let model = layer.model()?;
    let d_closed_form = forced.unwrap_or_else(|| model.min_offset());
    let d_literal = model.literal_min_offset();
    Ok(OracleReport {
        d_oracle,
        d_closed_form,
        verdict: Verdict::compare(d_closed_form, d_oracle),
        d_literal,
        literal_verdict: Verdict::compare(d_literal, d_oracle),
    })
}
