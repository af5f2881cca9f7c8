use std::path::PathBuf;

use actmap::netfile::parse_network_file;
use actmap::oracle::{last_reads, DEFAULT_ORACLE_CAP};
use actmap::sweep::{check_network, DATA_RANGE};
use actmap::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn network(name: &str) -> NetworkSpec {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../networks")
        .join(name);
    parse_network_file(path).unwrap()
}

fn seeded(net: &NetworkSpec, seed: u64) -> (Tensor, Vec<LayerWeights>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = random_input(net, &mut rng, DATA_RANGE);
    let weights = random_weights(net, &mut rng, DATA_RANGE);
    (input, weights)
}

#[test]
fn identity_network_returns_its_input() {
    let net = network("single_identity.net");
    let plan = plan_network(&net).unwrap();
    assert_eq!(plan.arena_size, 16 * 16 + 1);
    let (input, _) = seeded(&net, 3);
    let weights = vec![LayerWeights {
        weights: vec![1],
        bias: vec![],
    }];
    let out = execute_network_in_arena(&net, &plan, &input, &weights, ExecMode::Checked).unwrap();
    assert_eq!(out, input);
}

#[test]
fn zero_weights_give_the_bias() {
    let net = network("small_mixed.net");
    let plan = plan_network(&net).unwrap();
    let (input, weights) = seeded(&net, 1);
    let zeroed: Vec<LayerWeights> = weights
        .iter()
        .map(|w| LayerWeights {
            weights: vec![0; w.weights.len()],
            bias: vec![7; w.bias.len()],
        })
        .collect();
    let out = execute_network_in_arena(&net, &plan, &input, &zeroed, ExecMode::Checked).unwrap();
    assert!(out.data.iter().all(|&v| v == 7));
}

#[test]
fn bundled_small_networks_are_bit_exact() {
    for name in ["small_mixed.net", "packed_pairs.net", "residual_block.net"] {
        let net = network(name);
        let plan = plan_network(&net).unwrap();
        let (input, weights) = seeded(&net, 42);
        let reference = execute_network_reference(&net, &input, &weights).unwrap();
        let arena =
            execute_network_in_arena(&net, &plan, &input, &weights, ExecMode::Checked).unwrap();
        assert_eq!(arena, reference, "{name}");
    }
}

#[test]
fn five_layer_network_checks_out() {
    let net = network("small_mixed.net");
    assert_eq!(net.layers.len(), 5);
    for seed in 0..20 {
        let c = check_network(&net, seed).unwrap();
        assert!(c.bit_exact);
        let (_, clobber) = c.witness.expect("small_mixed has a liveness-bound layer");
        assert!(matches!(clobber, Some(Error::Clobber { .. })));
    }
}

/// First block whose write under offset `d` lands on a word read later,
/// found from the oracle's last-read table.
fn first_violation(layer: &LayerSpec, d: u64) -> Option<(u64, u64)> {
    let last = last_reads(layer, DEFAULT_ORACLE_CAP).unwrap();
    let t_len = derive_dims(layer).unwrap().t_len;
    (d..t_len).find_map(|k| {
        let addr = k - d;
        match last.get(addr as usize) {
            Some(Some(r)) if *r > k => Some((k, addr)),
            _ => None,
        }
    })
}

#[test]
fn corrupted_offset_clobbers_where_the_oracle_says() {
    let net = network("corrupted_offset.net");
    let plan = plan_network(&net).unwrap();
    let lp = &plan.layer_plans[1];
    assert_eq!(lp.d, 4);
    let (block, addr) = first_violation(&net.layers[1], lp.d).unwrap();
    let (input, weights) = seeded(&net, 9);
    match execute_network_in_arena(&net, &plan, &input, &weights, ExecMode::Checked) {
        Err(Error::Clobber {
            layer,
            block: b,
            address,
            ..
        }) => {
            assert_eq!(layer, 1);
            assert_eq!(b, block);
            assert_eq!(address, (lp.input_base + addr) % plan.arena_size);
        }
        other => panic!("expected a clobber, got {other:?}"),
    }
    // Unchecked, the same plan silently corrupts the result.
    let reference = execute_network_reference(&net, &input, &weights).unwrap();
    let out = execute_network_in_arena(&net, &plan, &input, &weights, ExecMode::Unchecked).unwrap();
    assert_ne!(out, reference);
}

#[test]
fn residual_carry_survives_and_is_guarded() {
    let net = network("residual_block.net");
    let plan = plan_network(&net).unwrap();
    let (input, weights) = seeded(&net, 5);
    execute_network_in_arena(&net, &plan, &input, &weights, ExecMode::Checked).unwrap();

    // Start the second layer's output right where its carry begins.
    let dims = derive_dims(&net.layers[1]).unwrap();
    assert_eq!(dims.m_in - dims.m_conv_in, 256);
    let bad = plan.with_offset(1, plan.arena_size - dims.m_conv_in);
    match execute_network_in_arena(&net, &bad, &input, &weights, ExecMode::Checked) {
        Err(Error::Clobber {
            layer, block, what, ..
        }) => {
            assert_eq!((layer, block), (1, 0));
            assert!(what.contains("carry"), "{what}");
        }
        other => panic!("expected a carry clobber, got {other:?}"),
    }
}

#[test]
fn dimension_mismatches_are_rejected() {
    let net = network("small_mixed.net");
    let plan = plan_network(&net).unwrap();
    let (input, weights) = seeded(&net, 1);
    let wrong = Tensor::zeros(input.width + 1, input.height, input.channels);
    assert!(matches!(
        execute_network_reference(&net, &wrong, &weights),
        Err(Error::DimensionMismatch(_))
    ));
    assert!(matches!(
        execute_network_in_arena(&net, &plan, &input, &weights[1..], ExecMode::Unchecked),
        Err(Error::DimensionMismatch(_))
    ));
}
