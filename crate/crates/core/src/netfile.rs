//! Network description files.
//!
//! TOML by default, JSON when the file starts with `{`:
//!
//! ```toml
//! name = "tiny"
//! packing = 1            # optional, entries per memory word
//!
//! [[layers]]
//! x_in = 8
//! y_in = 8
//! c_in = 3
//! k_x = 3
//! k_y = 3
//! s_x = 1
//! s_y = 1
//! p_x = 1
//! p_y = 1
//! c_out = 16
//!
//! [[layers]]              # x_in/y_in/c_in inherited from the layer above
//! k_x = 3
//! k_y = 3
//! s_x = 2
//! s_y = 2
//! p_x = 1
//! p_y = 1
//! c_out = 16
//! groups = 16             # optional, default 1
//! residual_carry_words = 0  # optional
//! repeat = 2              # optional, adds identical copies
//! ```
//!
//! `offset_override` forces a layer's offset; it exists to build fixtures
//! that exhibit unsafe plans.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::LayerSpec;
use crate::planner::NetworkSpec;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    name: String,
    packing: Option<u64>,
    layers: Vec<RawLayer>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLayer {
    x_in: Option<u64>,
    y_in: Option<u64>,
    c_in: Option<u64>,
    k_x: u64,
    k_y: u64,
    s_x: u64,
    s_y: u64,
    p_x: u64,
    p_y: u64,
    c_out: u64,
    groups: Option<u64>,
    residual_carry_words: Option<u64>,
    repeat: Option<u64>,
    offset_override: Option<u64>,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before
        .rfind('\n')
        .map_or(before.len(), |nl| before.len() - nl - 1)
        + 1;
    (line, column)
}

/// Line of the `n`-th (0-based) `[[layers]]` header, for TOML diagnostics.
fn layer_line(text: &str, n: usize) -> usize {
    text.lines()
        .enumerate()
        .filter(|(_, l)| l.trim_start().starts_with("[[layers]]"))
        .nth(n)
        .map_or(1, |(i, _)| i + 1)
}

pub fn parse_network_file(path: impl AsRef<Path>) -> Result<NetworkSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_network_str(&text, path)
}

/// Parses file contents; `path` only labels diagnostics.
pub fn parse_network_str(text: &str, path: &Path) -> Result<NetworkSpec> {
    let is_json = text.trim_start().starts_with('{');
    let raw: RawNetwork = if is_json {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?
    } else {
        toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((1, 1), |s| line_col(text, s.start));
            Error::Parse {
                path: path.to_path_buf(),
                line,
                column,
                message: e.message().trim().to_string(),
            }
        })?
    };

    let located = |n: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line: if is_json { 1 } else { layer_line(text, n) },
        column: 1,
        message: format!("layer entry {}: {message}", n + 1),
    };

    let mut layers: Vec<LayerSpec> = Vec::new();
    let mut overrides = BTreeMap::new();
    for (n, raw_layer) in raw.layers.iter().enumerate() {
        let prev = layers.last();
        let inherit = |field: &str, stated: Option<u64>, from_chain: Option<u64>| -> Result<u64> {
            match (stated, from_chain) {
                (Some(v), Some(chain)) if v != chain => Err(Error::ChainMismatch {
                    from: layers.len(),
                    to: layers.len() + 1,
                    detail: format!(
                        "{}:{}: {field} = {v} but the previous layer produces {chain}",
                        path.display(),
                        if is_json { 1 } else { layer_line(text, n) }
                    ),
                }),
                (Some(v), _) => Ok(v),
                (None, Some(chain)) => Ok(chain),
                (None, None) => Err(located(n, format!("first layer must state {field}"))),
            }
        };
        let x_in = inherit("x_in", raw_layer.x_in, prev.map(|p| p.x_out()))?;
        let y_in = inherit("y_in", raw_layer.y_in, prev.map(|p| p.y_out()))?;
        let c_in = inherit("c_in", raw_layer.c_in, prev.map(|p| p.c_out))?;
        let spec = LayerSpec {
            x_in,
            y_in,
            c_in,
            k_x: raw_layer.k_x,
            k_y: raw_layer.k_y,
            s_x: raw_layer.s_x,
            s_y: raw_layer.s_y,
            p_x: raw_layer.p_x,
            p_y: raw_layer.p_y,
            c_out: raw_layer.c_out,
            groups: raw_layer.groups.unwrap_or(1),
            residual_carry_words: raw_layer.residual_carry_words.unwrap_or(0),
        };
        spec.validate().map_err(|e| located(n, e.to_string()))?;
        let copies = raw_layer.repeat.unwrap_or(1);
        if copies == 0 {
            return Err(located(n, "repeat must be at least 1".into()));
        }
        for copy_index in 0..copies {
            let mut copy = spec;
            if copy_index > 0 {
                let p = layers.last().expect("first copy already pushed");
                copy.x_in = p.x_out();
                copy.y_in = p.y_out();
                copy.c_in = p.c_out;
                copy.validate()
                    .map_err(|e| located(n, format!("repeat copy {}: {e}", copy_index + 1)))?;
            }
            if let Some(d) = raw_layer.offset_override {
                overrides.insert(layers.len(), d);
            }
            layers.push(copy);
        }
    }

    let mut net = NetworkSpec::new(raw.name, layers);
    net.packing = raw.packing.unwrap_or(1);
    net.offset_overrides = overrides;
    net.validate()?;
    Ok(net)
}
