//! Exhaustive oracle sweep and seeded executor checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{apply_packing, LayerSpec};
use crate::oracle::{
    execute_network_in_arena, execute_network_reference, random_input, random_weights,
    verify_layer, ExecMode, OracleReport, Verdict, DEFAULT_ORACLE_CAP,
};
use crate::planner::{minimality_witness, plan_network, NetworkSpec};

/// Value range for random inputs and weights.
pub const DATA_RANGE: i64 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepBounds {
    /// Largest input width/height.
    pub max_dim: u64,
    pub max_kernel: u64,
    pub max_stride: u64,
    pub max_pad: u64,
    pub max_channels: u64,
}

impl Default for SweepBounds {
    fn default() -> Self {
        SweepBounds {
            max_dim: 6,
            max_kernel: 3,
            max_stride: 2,
            max_pad: 1,
            max_channels: 3,
        }
    }
}

/// A sweep point: the raw layer and the packing factor applied to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepConfig {
    pub layer: LayerSpec,
    pub packing: u64,
}

impl SweepConfig {
    pub fn packed(&self) -> Result<LayerSpec> {
        apply_packing(&self.layer, self.packing)
    }
}

/// Every valid layer within `bounds`, with `groups` in `{1, c_in}` and
/// packing in `{1, c_in}`, in a fixed order.
pub fn sweep_configs(bounds: &SweepBounds) -> Vec<SweepConfig> {
    let mut out = Vec::new();
    let b = bounds;
    for x_in in 1..=b.max_dim {
        for y_in in 1..=b.max_dim {
            for k_x in 1..=b.max_kernel {
                for k_y in 1..=b.max_kernel {
                    for s_x in 1..=b.max_stride {
                        for s_y in 1..=b.max_stride {
                            for p_x in 0..=b.max_pad {
                                for p_y in 0..=b.max_pad {
                                    for c_in in 1..=b.max_channels {
                                        for c_out in 1..=b.max_channels {
                                            let mut groups = vec![1];
                                            if c_in > 1 {
                                                groups.push(c_in);
                                            }
                                            for g in groups {
                                                let layer = LayerSpec {
                                                    x_in,
                                                    y_in,
                                                    c_in,
                                                    k_x,
                                                    k_y,
                                                    s_x,
                                                    s_y,
                                                    p_x,
                                                    p_y,
                                                    c_out,
                                                    groups: g,
                                                    residual_carry_words: 0,
                                                };
                                                if layer.validate().is_err() {
                                                    continue;
                                                }
                                                out.push(SweepConfig { layer, packing: 1 });
                                                if c_in > 1 {
                                                    out.push(SweepConfig {
                                                        layer,
                                                        packing: c_in,
                                                    });
                                                }
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct VerdictCounts {
    pub matches: usize,
    pub conservative: usize,
    pub unsafe_count: usize,
}

impl VerdictCounts {
    fn add(&mut self, v: Verdict) {
        match v {
            Verdict::Match => self.matches += 1,
            Verdict::ClosedFormConservative => self.conservative += 1,
            Verdict::Unsafe => self.unsafe_count += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.matches + self.conservative + self.unsafe_count
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OracleSweep {
    pub counts: VerdictCounts,
    /// Counts for the averaged-velocity read pointer on the same configs.
    pub literal_counts: VerdictCounts,
    pub first_unsafe: Option<(SweepConfig, OracleReport)>,
    pub first_conservative: Option<(SweepConfig, OracleReport)>,
    pub first_literal_unsafe: Option<(SweepConfig, OracleReport)>,
}

pub fn run_oracle_sweep(bounds: &SweepBounds) -> Result<OracleSweep> {
    let configs = sweep_configs(bounds);
    let reports: Vec<OracleReport> = configs
        .par_iter()
        .map(|c| verify_layer(&c.packed()?, DEFAULT_ORACLE_CAP))
        .collect::<Result<_>>()?;
    let mut sweep = OracleSweep::default();
    for (c, r) in configs.iter().zip(reports) {
        sweep.counts.add(r.verdict);
        sweep.literal_counts.add(r.literal_verdict);
        if r.verdict == Verdict::Unsafe && sweep.first_unsafe.is_none() {
            sweep.first_unsafe = Some((*c, r));
        }
        if r.verdict == Verdict::ClosedFormConservative && sweep.first_conservative.is_none() {
            sweep.first_conservative = Some((*c, r));
        }
        if r.literal_verdict == Verdict::Unsafe && sweep.first_literal_unsafe.is_none() {
            sweep.first_literal_unsafe = Some((*c, r));
        }
    }
    Ok(sweep)
}

/// Random chain of 3 to 6 layers inside `bounds`. One network in five is
/// packed: every inner channel count then equals the packing factor.
pub fn random_network<R: Rng>(rng: &mut R, bounds: &SweepBounds, name: &str) -> NetworkSpec {
    let max_c = bounds.max_channels.max(1);
    let packing = if max_c > 1 && rng.gen_ratio(1, 5) {
        rng.gen_range(2..=max_c)
    } else {
        1
    };
    let depth = rng.gen_range(3..=6);
    let dim = bounds.max_dim.max(1);
    let (mut x, mut y) = (rng.gen_range(1..=dim), rng.gen_range(1..=dim));
    let mut c = if packing > 1 {
        packing
    } else {
        rng.gen_range(1..=max_c)
    };
    let mut layers = Vec::with_capacity(depth);
    for i in 0..depth {
        let last = i + 1 == depth;
        let c_out = if packing > 1 && !last {
            packing
        } else {
            rng.gen_range(1..=max_c)
        };
        let p_x = rng.gen_range(0..=bounds.max_pad);
        let p_y = rng.gen_range(0..=bounds.max_pad);
        let k_x = rng.gen_range(1..=bounds.max_kernel.min(x + 2 * p_x).max(1));
        let k_y = rng.gen_range(1..=bounds.max_kernel.min(y + 2 * p_y).max(1));
        let groups = if c > 1 && c_out % c == 0 && rng.gen_ratio(1, 3) {
            c
        } else {
            1
        };
        let layer = LayerSpec {
            x_in: x,
            y_in: y,
            c_in: c,
            k_x,
            k_y,
            s_x: rng.gen_range(1..=bounds.max_stride),
            s_y: rng.gen_range(1..=bounds.max_stride),
            p_x,
            p_y,
            c_out,
            groups,
            residual_carry_words: 0,
        };
        x = layer.x_out();
        y = layer.y_out();
        c = c_out;
        layers.push(layer);
    }
    NetworkSpec::new(name, layers).with_packing(packing)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkCheck {
    pub bit_exact: bool,
    /// Layer whose offset was lowered by one, and the clobber it produced.
    /// `None` when [`minimality_witness`] finds no layer.
    pub witness: Option<(usize, Option<Error>)>,
}

/// Runs `net` in its planned arena (checked) against the reference with
/// data drawn from `seed`, then repeats with the witness layer's offset
/// lowered by one and the arena shrunk to match.
pub fn check_network(net: &NetworkSpec, seed: u64) -> Result<NetworkCheck> {
    let plan = plan_network(net)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = random_input(net, &mut rng, DATA_RANGE);
    let weights = random_weights(net, &mut rng, DATA_RANGE);
    let reference = execute_network_reference(net, &input, &weights)?;
    let arena = execute_network_in_arena(net, &plan, &input, &weights, ExecMode::Checked)?;
    let witness = match minimality_witness(net, &plan)? {
        Some(layer) => {
            let tight = plan.with_offset_tight(layer, plan.layer_plans[layer].d - 1);
            let outcome =
                execute_network_in_arena(net, &tight, &input, &weights, ExecMode::Checked);
            match outcome {
                Err(e @ Error::Clobber { .. }) => Some((layer, Some(e))),
                Err(e) => return Err(e),
                Ok(_) => Some((layer, None)),
            }
        }
        None => None,
    };
    Ok(NetworkCheck {
        bit_exact: arena == reference,
        witness,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExecSweep {
    pub networks: usize,
    pub bit_exact: usize,
    pub witnesses: usize,
    pub witnesses_clobbered: usize,
    /// Networks without a witness layer.
    pub no_witness: usize,
    pub first_failure: Option<String>,
}

/// Seeded random networks through [`check_network`]; network `i` uses
/// seed `seed + i` for both its shape and its data.
pub fn run_exec_sweep(bounds: &SweepBounds, seed: u64, networks: usize) -> Result<ExecSweep> {
    let checks: Vec<(NetworkSpec, NetworkCheck)> = (0..networks)
        .into_par_iter()
        .map(|i| {
            let s = seed.wrapping_add(i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let net = random_network(&mut rng, bounds, &format!("random-{s}"));
            check_network(&net, s).map(|c| (net, c))
        })
        .collect::<Result<_>>()?;
    let mut out = ExecSweep {
        networks,
        ..Default::default()
    };
    for (net, c) in checks {
        if c.bit_exact {
            out.bit_exact += 1;
        } else if out.first_failure.is_none() {
            out.first_failure = Some(format!(
                "{}: in-arena output differs from reference",
                net.name
            ));
        }
        match c.witness {
            Some((_, Some(_))) => {
                out.witnesses += 1;
                out.witnesses_clobbered += 1;
            }
            Some((layer, None)) => {
                out.witnesses += 1;
                if out.first_failure.is_none() {
                    out.first_failure = Some(format!(
                        "{}: lowering layer {} offset by one went undetected",
                        net.name,
                        layer + 1
                    ));
                }
            }
            None => out.no_witness += 1,
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_bounds_give_nothing() {
        let b = SweepBounds {
            max_dim: 0,
            ..Default::default()
        };
        assert!(sweep_configs(&b).is_empty());
        assert_eq!(run_oracle_sweep(&b).unwrap().counts.total(), 0);
    }

    #[test]
    fn small_sweep_is_clean() {
        let b = SweepBounds {
            max_dim: 3,
            max_channels: 2,
            ..Default::default()
        };
        let s = run_oracle_sweep(&b).unwrap();
        assert!(s.counts.total() > 100);
        assert_eq!(s.counts.unsafe_count, 0);
        assert_eq!(s.counts.conservative, 0);
    }

    #[test]
    fn random_networks_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for i in 0..200 {
            let net = random_network(&mut rng, &SweepBounds::default(), &format!("n{i}"));
            net.validate().unwrap();
            assert!((3..=6).contains(&net.layers.len()));
        }
    }

    #[test]
    fn exec_sweep_is_deterministic() {
        let b = SweepBounds::default();
        let a = run_exec_sweep(&b, 11, 8).unwrap();
        assert_eq!(a, run_exec_sweep(&b, 11, 8).unwrap());
        assert_eq!(a.bit_exact, 8);
    }
}
