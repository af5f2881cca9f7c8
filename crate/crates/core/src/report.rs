//! Plan reports: JSON for machines, text and an ASCII memory map for people.
//!
//! JSON field names are stable: `name`, `packing`, `arena_size`,
//! `pingpong_size`, `parameter_words`, `savings_activations_pct`,
//! `savings_total_pct` and `layers`, where each layer row carries `index`,
//! `m_in`, `m_out`, `d`, `m_min_layer`, `input_base` and `output_base`.
//! Word counts are in packed memory words.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::planner::{MemoryPlan, NetworkSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub name: String,
    pub packing: u64,
    #[serde(flatten)]
    pub plan: MemoryPlan,
}

impl PlanReport {
    pub fn new(net: &NetworkSpec, plan: MemoryPlan) -> Self {
        PlanReport {
            name: net.name.clone(),
            packing: net.packing,
            plan,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan reports always serialize")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn into_plan(self) -> MemoryPlan {
        self.plan
    }

    pub fn render_text(&self) -> String {
        let p = &self.plan;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "network: {} ({} layers, packing {})",
            self.name,
            p.layer_plans.len(),
            self.packing
        );
        let _ = writeln!(
            out,
            "parameters:          {:>12} words ({})",
            p.parameter_words,
            human_words(p.parameter_words)
        );
        let _ = writeln!(
            out,
            "ping-pong arena:     {:>12} words ({})",
            p.pingpong_size,
            human_words(p.pingpong_size)
        );
        let _ = writeln!(
            out,
            "overlapped arena:    {:>12} words ({})",
            p.arena_size,
            human_words(p.arena_size)
        );
        let _ = writeln!(
            out,
            "savings:             {:.1}% activations ({:.1}% total)",
            p.savings_activations_pct, p.savings_total_pct
        );
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:>5} {:>12} {:>12} {:>10} {:>12} {:>12} {:>12}",
            "layer", "m_in", "m_out", "d", "m_min_layer", "input_base", "output_base"
        );
        for l in &p.layer_plans {
            let _ = writeln!(
                out,
                "{:>5} {:>12} {:>12} {:>10} {:>12} {:>12} {:>12}",
                l.index + 1,
                l.m_in,
                l.m_out,
                l.d,
                l.m_min_layer,
                l.input_base,
                l.output_base
            );
        }
        out
    }

    /// One bar per layer across the arena: `I` input, `O` output, `X` words
    /// both regions claim over the layer's run, `.` free.
    pub fn render_ascii_map(&self, width: usize) -> String {
        let p = &self.plan;
        let width = width.max(8);
        let mut out = String::new();
        if p.arena_size == 0 {
            return out;
        }
        let _ = writeln!(
            out,
            "arena: {} words, {} per column",
            p.arena_size,
            p.arena_size.div_ceil(width as u64)
        );
        for l in &p.layer_plans {
            let mut bar = vec![b'.'; width];
            let column =
                |word: u64| ((word as u128 * width as u128) / p.arena_size as u128) as usize;
            let mut mark = |base: u64, len: u64, c: u8| {
                for (a, b) in circular_intervals(base, len, p.arena_size) {
                    for cell in &mut bar[column(a)..=column(b - 1)] {
                        *cell = match *cell {
                            b'.' => c,
                            prev if prev == c => c,
                            _ => b'X',
                        };
                    }
                }
            };
            mark(l.input_base, l.m_in, b'I');
            mark(l.output_base, l.m_out, b'O');
            let _ = writeln!(
                out,
                "{:>4} |{}| d={}",
                l.index + 1,
                String::from_utf8(bar).expect("ascii"),
                l.d
            );
        }
        out
    }
}

/// `[base, base + len)` on a circle of `size` words as linear intervals.
fn circular_intervals(base: u64, len: u64, size: u64) -> Vec<(u64, u64)> {
    if len == 0 {
        return vec![];
    }
    if len >= size {
        return vec![(0, size)];
    }
    let end = base + len;
    if end <= size {
        vec![(base, end)]
    } else {
        vec![(base, size), (0, end - size)]
    }
}

/// Word count with one decimal and a k/M/G suffix, e.g. `614.4k`.
pub fn human_words(n: u64) -> String {
    let n = n as f64;
    if n >= 1e9 {
        format!("{:.1}G", n / 1e9)
    } else if n >= 1e6 {
        format!("{:.1}M", n / 1e6)
    } else if n >= 1e3 {
        format!("{:.1}k", n / 1e3)
    } else {
        format!("{n}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LayerSpec;
    use crate::planner::plan_network;

    fn report() -> PlanReport {
        let l = LayerSpec::square(4, 1, 3, 1, 1, 1);
        let net = NetworkSpec::new("two", vec![l, l]);
        PlanReport::new(&net, plan_network(&net).unwrap())
    }

    #[test]
    fn human_rounding() {
        assert_eq!(human_words(614_400), "614.4k");
        assert_eq!(human_words(53_700_000), "53.7M");
        assert_eq!(human_words(229_800), "229.8k");
        assert_eq!(human_words(512), "512");
    }

    #[test]
    fn json_field_names() {
        let v: serde_json::Value = serde_json::from_str(&report().to_json()).unwrap();
        for key in [
            "name",
            "packing",
            "arena_size",
            "pingpong_size",
            "parameter_words",
            "savings_activations_pct",
            "savings_total_pct",
            "layers",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let row = &v["layers"][1];
        for key in [
            "index",
            "m_in",
            "m_out",
            "d",
            "m_min_layer",
            "input_base",
            "output_base",
        ] {
            assert!(row.get(key).is_some(), "{key}");
        }
        assert_eq!(row["input_base"], 16);
    }

    #[test]
    fn json_round_trip() {
        let r = report();
        assert_eq!(PlanReport::from_json(&r.to_json()).unwrap(), r);
    }

    #[test]
    fn text_and_map() {
        let r = report();
        let text = r.render_text();
        assert!(text.contains("34.4% activations"), "{text}");
        let map = r.render_ascii_map(21);
        let lines: Vec<&str> = map.lines().collect();
        assert_eq!(lines.len(), 3);
        // layer 1: input at 0..16, output at 16..21 wrapping to 0..11
        assert!(lines[1].contains("|XXXXXXXXXXXIIIIIOOOOO|"), "{map}");
    }
}
