use std::path::PathBuf;
use std::process::{Command, Output};

use actmap::report::PlanReport;

fn net(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../networks")
        .join(name)
}

fn actmap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_actmap"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn path(name: &str) -> String {
    net(name).to_str().unwrap().to_string()
}

#[test]
fn plan_dmcnn_reports_near_half() {
    let o = actmap(&["plan", &path("dmcnn_vd.net"), "--format", "json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = PlanReport::from_json(&stdout(&o)).unwrap();
    assert_eq!(report.plan.layer_plans.len(), 20);
    assert_eq!(report.plan.parameter_words, 668_227);
    assert!((report.plan.savings_activations_pct - 48.8).abs() <= 2.0);
}

#[test]
fn plan_identity_text_and_map() {
    let o = actmap(&["plan", &path("single_identity.net"), "--ascii-map"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let words: Vec<&str> = text.split_whitespace().collect();
    assert!(
        words.join(" ").contains("overlapped arena: 257 words"),
        "{text}"
    );
    assert!(text.contains("49.8% activations"), "{text}");
    assert!(text.contains("   1 |"), "{text}");
}

#[test]
fn plan_output_is_byte_identical_across_runs() {
    for format in ["json", "text"] {
        let a = actmap(&[
            "plan",
            &path("mobilenetv2.net"),
            "--format",
            format,
            "--ascii-map",
        ]);
        let b = actmap(&[
            "plan",
            &path("mobilenetv2.net"),
            "--format",
            format,
            "--ascii-map",
        ]);
        assert_eq!(a.stdout, b.stdout);
    }
}

#[test]
fn bad_chain_is_a_located_input_error() {
    let o = actmap(&["plan", &path("bad_chain.net")]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("layers 1->2"), "{err}");
    assert!(err.contains("bad_chain.net:16:"), "{err}");
    assert!(stdout(&o).is_empty());
}

#[test]
fn missing_file_and_bad_flags_are_input_errors() {
    assert_eq!(actmap(&["plan", "/nonexistent.net"]).status.code(), Some(2));
    assert_eq!(
        actmap(&["plan", &path("dlib.net"), "--format", "xml"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(actmap(&[]).status.code(), Some(2));
}

#[test]
fn verify_flags_the_corrupted_offset() {
    let o = actmap(&["verify", &path("corrupted_offset.net")]);
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert!(text.contains("layer   1: d=5 oracle=5 match"), "{text}");
    assert!(
        text.contains("layer   2: d=4 oracle=5 UNSAFE short by 1"),
        "{text}"
    );
}

#[test]
fn verify_passes_small_networks() {
    for name in [
        "small_mixed.net",
        "packed_pairs.net",
        "residual_block.net",
        "single_identity.net",
    ] {
        let o = actmap(&["verify", &path(name)]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", stdout(&o));
        assert!(stdout(&o).contains("unsafe layers: 0"));
    }
}

#[test]
fn verify_refuses_oversized_layers_with_guidance() {
    let o = actmap(&["verify", &path("dmcnn_vd.net")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).contains("use the closed-form `plan` path"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn empty_sweep_is_empty() {
    let o = actmap(&["sweep", "--max-dim", "0"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("configurations: 0"));
    assert!(text.contains("UNSAFE: 0"));
}

#[test]
fn sweep_is_reproducible() {
    let args = [
        "sweep",
        "--max-dim",
        "3",
        "--seed",
        "17",
        "--networks",
        "25",
    ];
    let a = actmap(&args);
    assert_eq!(a.status.code(), Some(0), "{}", stdout(&a));
    assert_eq!(a.stdout, actmap(&args).stdout);
    assert!(stdout(&a).contains("bit-exact: 25"));
}

#[test]
fn exec_identity_and_small_networks() {
    for name in ["single_identity.net", "small_mixed.net"] {
        let o = actmap(&["exec", &path(name), "--seed", "3", "--checked"]);
        assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
        assert!(stdout(&o).contains("bit-exact: yes"));
    }
}

#[test]
fn exec_reports_the_clobber_location() {
    let o = actmap(&["exec", &path("corrupted_offset.net"), "--checked"]);
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert!(
        text.contains("clobber: layer 2 block 4 address 16"),
        "{text}"
    );
    let o = actmap(&["exec", &path("corrupted_offset.net")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("bit-exact: NO"));
}
