//! Whole-network planning.
//!
//! Only two layers' activations are live at a time, so the arena just has to
//! fit the largest per-layer pair `m_in + d`. Placement is circular: the
//! first input starts at word 0 and every layer writes its output `d` words
//! below its input, modulo the arena size. Because `arena_size >= m_in + d`
//! for every layer, the linear safety argument of each layer carries over to
//! the circle unchanged.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{apply_packing, derive_dims, Binding, LayerSpec, OffsetAnalysis};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub name: String,
    pub layers: Vec<LayerSpec>,
    /// Activation entries per memory word.
    pub packing: u64,
    /// Forced offsets by 0-based layer index. Only for exhibiting unsafe
    /// plans; a normal network leaves this empty.
    pub offset_overrides: BTreeMap<usize, u64>,
}

impl NetworkSpec {
    pub fn new(name: impl Into<String>, layers: Vec<LayerSpec>) -> Self {
        NetworkSpec {
            name: name.into(),
            layers,
            packing: 1,
            offset_overrides: BTreeMap::new(),
        }
    }

    pub fn with_packing(mut self, q: u64) -> Self {
        self.packing = q;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::EmptyNetwork);
        }
        for l in &self.layers {
            l.validate()?;
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            let (a, b) = (&pair[0], &pair[1]);
            let checks = [
                ("x_out", a.x_out(), "x_in", b.x_in),
                ("y_out", a.y_out(), "y_in", b.y_in),
                ("c_out", a.c_out, "c_in", b.c_in),
            ];
            for (out_name, out, in_name, inp) in checks {
                if out != inp {
                    return Err(Error::ChainMismatch {
                        from: i + 1,
                        to: i + 2,
                        detail: format!("{out_name} = {out} but {in_name} = {inp}"),
                    });
                }
            }
        }
        self.packed_layers().map(|_| ())
    }

    /// Layers expressed in packed memory words.
    pub fn packed_layers(&self) -> Result<Vec<LayerSpec>> {
        self.layers
            .iter()
            .map(|l| apply_packing(l, self.packing))
            .collect()
    }

    /// Minimal offsets of the packed layers. Identical layers are analysed
    /// once; distinct ones in parallel.
    pub fn offset_analyses(&self) -> Result<Vec<OffsetAnalysis>> {
        self.validate()?;
        let packed = self.packed_layers()?;
        let mut unique: Vec<LayerSpec> = packed.clone();
        unique.sort_by_key(|l| {
            (
                l.x_in,
                l.y_in,
                l.c_in,
                l.k_x,
                l.k_y,
                l.s_x,
                l.s_y,
                l.p_x,
                l.p_y,
                l.c_out,
                l.groups,
                l.residual_carry_words,
            )
        });
        unique.dedup();
        let analysed: HashMap<LayerSpec, OffsetAnalysis> = unique
            .par_iter()
            .map(|l| l.model().map(|m| (*l, m.offset_analysis())))
            .collect::<Result<_>>()?;
        Ok(packed.iter().map(|l| analysed[l]).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerPlan {
    pub index: usize,
    pub m_in: u64,
    pub m_out: u64,
    pub d: u64,
    pub m_min_layer: u64,
    pub input_base: u64,
    pub output_base: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryPlan {
    pub arena_size: u64,
    #[serde(rename = "layers")]
    pub layer_plans: Vec<LayerPlan>,
    pub pingpong_size: u64,
    pub parameter_words: u64,
    pub savings_activations_pct: f64,
    pub savings_total_pct: f64,
}

impl MemoryPlan {
    /// Same plan with layer `index` using offset `d`; bases downstream are
    /// recomputed, the arena size is kept.
    pub fn with_offset(&self, index: usize, d: u64) -> MemoryPlan {
        let mut plan = self.clone();
        plan.layer_plans[index].d = d;
        plan.layer_plans[index].m_min_layer = plan.layer_plans[index].m_in + d;
        place(&mut plan.layer_plans, plan.arena_size);
        plan
    }

    /// Like [`MemoryPlan::with_offset`], but the arena shrinks to the largest
    /// per-layer requirement afterwards and the savings are recomputed.
    pub fn with_offset_tight(&self, index: usize, d: u64) -> MemoryPlan {
        let mut plan = self.with_offset(index, d);
        plan.arena_size = plan
            .layer_plans
            .iter()
            .map(|lp| lp.m_min_layer)
            .max()
            .unwrap_or(0)
            .max(1);
        place(&mut plan.layer_plans, plan.arena_size);
        plan.savings_activations_pct = activation_savings_pct(plan.pingpong_size, plan.arena_size);
        plan.savings_total_pct =
            total_savings_pct(plan.parameter_words, plan.pingpong_size, plan.arena_size);
        plan
    }
}

fn place(layers: &mut [LayerPlan], arena: u64) {
    let mut base = 0;
    for lp in layers {
        lp.input_base = base;
        lp.output_base = (base + arena - lp.d % arena) % arena;
        base = lp.output_base;
    }
}

pub fn activation_savings_pct(pingpong: u64, arena: u64) -> f64 {
    if pingpong == 0 {
        return 0.0;
    }
    (pingpong as f64 - arena as f64) / pingpong as f64 * 100.0
}

pub fn total_savings_pct(parameters: u64, pingpong: u64, arena: u64) -> f64 {
    let baseline = parameters + pingpong;
    if baseline == 0 {
        return 0.0;
    }
    (pingpong as f64 - arena as f64) / baseline as f64 * 100.0
}

pub fn plan_network(net: &NetworkSpec) -> Result<MemoryPlan> {
    let analyses = net.offset_analyses()?;
    let packed = net.packed_layers()?;
    let mut layer_plans = Vec::with_capacity(packed.len());
    for (index, (l, a)) in packed.iter().zip(&analyses).enumerate() {
        let dims = derive_dims(l)?;
        let d = net
            .offset_overrides
            .get(&index)
            .copied()
            .unwrap_or(a.offset);
        layer_plans.push(LayerPlan {
            index,
            m_in: dims.m_in,
            m_out: dims.m_out,
            d,
            m_min_layer: dims.m_in + d,
            input_base: 0,
            output_base: 0,
        });
    }
    let arena_size = layer_plans
        .iter()
        .map(|lp| lp.m_min_layer)
        .max()
        .unwrap_or(0);
    place(&mut layer_plans, arena_size);

    let pingpong_size = pingpong_network(net)?;
    let parameter_words = count_parameters(net);
    Ok(MemoryPlan {
        arena_size,
        layer_plans,
        pingpong_size,
        parameter_words,
        savings_activations_pct: activation_savings_pct(pingpong_size, arena_size),
        savings_total_pct: total_savings_pct(parameter_words, pingpong_size, arena_size),
    })
}

/// Largest input + output pair under disjoint buffering, residual carries
/// included.
pub fn pingpong_network(net: &NetworkSpec) -> Result<u64> {
    net.validate()?;
    let mut worst = 0;
    for l in net.packed_layers()? {
        let d = derive_dims(&l)?;
        worst = worst.max(d.m_in + d.m_out);
    }
    Ok(worst)
}

/// Weights plus biases, one word each, before packing.
pub fn count_parameters(net: &NetworkSpec) -> u64 {
    net.layers
        .iter()
        .map(|l| l.k_x * l.k_y * (l.c_in / l.groups.max(1)) * l.c_out + l.c_out)
        .sum()
}

/// Fully populated plan: arena, placements, baseline and both savings
/// figures (activations only, and including parameters).
pub fn savings_report(net: &NetworkSpec) -> Result<MemoryPlan> {
    plan_network(net)
}

/// Layer whose offset, lowered by one via [`MemoryPlan::with_offset_tight`],
/// must produce a clobber: the largest `m_min_layer` among layers bound by
/// liveness, or by fit when a carry sits above the input or the layer alone
/// sets the arena size (so the arena shrinks with it).
/// `None` when no layer qualifies, e.g. every offset is on the `d >= 1` floor.
pub fn minimality_witness(net: &NetworkSpec, plan: &MemoryPlan) -> Result<Option<usize>> {
    let analyses = net.offset_analyses()?;
    let packed = net.packed_layers()?;
    let at_arena = plan
        .layer_plans
        .iter()
        .filter(|lp| lp.m_min_layer == plan.arena_size)
        .count();
    let candidates = plan
        .layer_plans
        .iter()
        .zip(&analyses)
        .zip(&packed)
        .filter(|((lp, a), l)| {
            a.requirement == lp.d as i64
                && match a.binding {
                    Binding::Liveness => true,
                    Binding::Fit => {
                        l.residual_carry_words > 0
                            || (lp.m_min_layer == plan.arena_size && at_arena == 1)
                    }
                    Binding::Floor => false,
                }
        });
    Ok(candidates
        .map(|((lp, _), _)| lp)
        .max_by(|a, b| {
            a.m_min_layer
                .cmp(&b.m_min_layer)
                .then(b.index.cmp(&a.index))
        })
        .map(|lp| lp.index))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn same3x3() -> LayerSpec {
        LayerSpec::square(4, 1, 3, 1, 1, 1)
    }

    #[test]
    fn single_lockstep_layer() {
        for n in [2u64, 5, 16] {
            let net = NetworkSpec::new("id", vec![LayerSpec::square(n, 1, 1, 1, 0, 1)]);
            let plan = plan_network(&net).unwrap();
            assert_eq!(plan.arena_size, n * n + 1);
            assert_eq!(plan.pingpong_size, 2 * n * n);
        }
    }

    #[test]
    fn two_equal_layers() {
        let net = NetworkSpec::new("two", vec![same3x3(), same3x3()]);
        let plan = plan_network(&net).unwrap();
        assert_eq!(plan.arena_size, 21);
        assert_eq!(plan.pingpong_size, 32);
        let bases: Vec<_> = plan
            .layer_plans
            .iter()
            .map(|l| (l.input_base, l.output_base))
            .collect();
        assert_eq!(bases, vec![(0, 16), (16, 11)]);
    }

    #[test]
    fn pingpong_takes_worst_pair() {
        // Activation sizes 4 -> 8 -> 2 words.
        let a = LayerSpec::square(2, 1, 1, 1, 0, 2);
        let b = LayerSpec {
            s_x: 2,
            c_out: 1,
            ..LayerSpec::square(2, 2, 1, 1, 0, 1)
        };
        let net = NetworkSpec::new("chain", vec![a, b]);
        assert_eq!(pingpong_network(&net).unwrap(), 12);
    }

    #[test]
    fn chain_mismatch_names_layers() {
        let net = NetworkSpec::new(
            "bad",
            vec![
                LayerSpec::square(4, 1, 1, 1, 0, 8),
                LayerSpec::square(4, 4, 1, 1, 0, 1),
            ],
        );
        match plan_network(&net) {
            Err(Error::ChainMismatch { from: 1, to: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(
            plan_network(&NetworkSpec::new("e", vec![])),
            Err(Error::EmptyNetwork)
        );
    }

    #[test]
    fn parameter_counts() {
        let one = NetworkSpec::new("a", vec![LayerSpec::square(3, 1, 1, 1, 0, 1)]);
        assert_eq!(count_parameters(&one), 2);
        let wide = NetworkSpec::new("b", vec![LayerSpec::square(8, 64, 3, 1, 1, 64)]);
        assert_eq!(count_parameters(&wide), 36928);
        let dw = NetworkSpec::new(
            "c",
            vec![LayerSpec::square(8, 32, 3, 1, 1, 32).with_groups(32)],
        );
        assert_eq!(count_parameters(&dw), 9 * 32 + 32);
    }

    #[test]
    fn savings_formula_against_published_counts() {
        let cases = [
            (229_800, 614_400, 412_200, 32.9, 23.9),
            (668_200, 53_700_000, 27_500_000, 48.8, 48.2),
        ];
        for (params, pp, arena, act, total) in cases {
            assert!(
                (activation_savings_pct(pp, arena) - act).abs() <= 0.3,
                "{act}"
            );
            assert!(
                (total_savings_pct(params, pp, arena) - total).abs() <= 0.3,
                "{total}"
            );
        }
    }

    #[test]
    fn overrides_and_rebasing() {
        let mut net = NetworkSpec::new("two", vec![same3x3(), same3x3()]);
        net.offset_overrides.insert(0, 3);
        let plan = plan_network(&net).unwrap();
        assert_eq!(plan.layer_plans[0].d, 3);
        let fixed = plan.with_offset(0, 5);
        assert_eq!(fixed.layer_plans[0].output_base, 21 - 5);
        assert_eq!(fixed.layer_plans[1].input_base, 21 - 5);
    }

    #[test]
    fn witness_skips_floored_layers() {
        let net = NetworkSpec::new("id", vec![LayerSpec::square(4, 1, 1, 1, 0, 1)]);
        let plan = plan_network(&net).unwrap();
        assert_eq!(minimality_witness(&net, &plan).unwrap(), None);
        let net = NetworkSpec::new("two", vec![same3x3(), same3x3()]);
        let plan = plan_network(&net).unwrap();
        assert_eq!(minimality_witness(&net, &plan).unwrap(), Some(0));
    }
}
