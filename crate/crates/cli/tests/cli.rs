use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn irlplan(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_irlplan"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = irlplan(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn synth(dir: &Path, name: &str, template: &str, count: &str, seed: &str) {
    ok(dir, &["synthesize", "--template", template, "--count", count, "--seed", seed, "--out", name]);
}

#[test]
fn synthesize_is_deterministic() {
    let d = TempDir::new().unwrap();
    synth(d.path(), "a.jsonl", "mixed", "12", "7");
    synth(d.path(), "b.jsonl", "mixed", "12", "7");
    synth(d.path(), "c.jsonl", "mixed", "12", "8");
    let a = std::fs::read(d.path().join("a.jsonl")).unwrap();
    assert_eq!(a, std::fs::read(d.path().join("b.jsonl")).unwrap());
    assert_ne!(a, std::fs::read(d.path().join("c.jsonl")).unwrap());
    assert_eq!(a.iter().filter(|&&c| c == b'\n').count(), 12);
}

#[test]
fn usage_and_data_errors_have_distinct_codes() {
    let d = TempDir::new().unwrap();
    let zero = irlplan(d.path(), &["synthesize", "--count", "0", "--out", "x.jsonl"]);
    assert_eq!(zero.status.code(), Some(1));
    assert!(!d.path().join("x.jsonl").exists());

    let bad_template = irlplan(d.path(), &["synthesize", "--template", "roundabout", "--count", "1", "--out", "x.jsonl"]);
    assert_eq!(bad_template.status.code(), Some(1));

    let missing = irlplan(d.path(), &["train-cmp", "--data", "absent.jsonl", "--out", "p.bin"]);
    assert_eq!(missing.status.code(), Some(2));

    let no_out = irlplan(d.path(), &["evaluate", "--data", "absent.jsonl"]);
    assert_eq!(no_out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&no_out.stderr).contains("--out"));

    std::fs::write(d.path().join("junk.jsonl"), "{not json}\n").unwrap();
    let junk = irlplan(d.path(), &["train-cmp", "--data", "junk.jsonl", "--out", "p.bin"]);
    assert_eq!(junk.status.code(), Some(2));

    let learned = irlplan(d.path(), &["evaluate", "--data", "junk.jsonl", "--out", "e.csv", "--weights", "w", "--predictor", "learned"]);
    assert_eq!(learned.status.code(), Some(2));

    assert_eq!(irlplan(d.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(irlplan(d.path(), &["frobnicate"]).status.code(), Some(1));
}

#[test]
fn train_cmp_is_reproducible_from_seed() {
    let d = TempDir::new().unwrap();
    synth(d.path(), "s.jsonl", "car_follow", "6", "1");
    for name in ["p1.bin", "p2.bin"] {
        ok(d.path(), &["train-cmp", "--data", "s.jsonl", "--out", name, "--seed", "4", "--fusion", "late"]);
    }
    let p1 = std::fs::read(d.path().join("p1.bin")).unwrap();
    assert_eq!(p1, std::fs::read(d.path().join("p2.bin")).unwrap());

    let loss = std::fs::read_to_string(d.path().join("p1.loss.csv")).unwrap();
    let mut lines = loss.lines();
    assert_eq!(lines.next(), Some("step,loss,lr"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r.len() == 3 && r[1].is_finite() && r[2] > 0.0));
}

#[test]
fn train_irl_then_evaluate() {
    let d = TempDir::new().unwrap();
    synth(d.path(), "s.jsonl", "mixed", "20", "11");
    ok(d.path(), &["train-irl", "--data", "s.jsonl", "--out", "w.txt", "--seed", "2", "--predictor", "ctrv"]);
    let weights = std::fs::read_to_string(d.path().join("w.txt")).unwrap();
    let rows: Vec<&str> = weights.lines().collect();
    assert_eq!(rows.len(), 7);
    for r in rows {
        let (_, v) = r.split_once(' ').unwrap();
        assert!(v.parse::<f64>().unwrap().is_finite());
    }

    let mut csvs = Vec::new();
    for name in ["e1.csv", "e2.csv"] {
        ok(d.path(), &["evaluate", "--data", "s.jsonl", "--out", name, "--weights", "w.txt", "--predictor", "ctrv", "--single"]);
        csvs.push(std::fs::read_to_string(d.path().join(name)).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    let summary = csvs[0].lines().last().unwrap();
    let fields: Vec<&str> = summary.split(',').collect();
    assert_eq!(fields[0], "summary");
    let values: Vec<f64> = fields[1..].iter().map(|v| v.parse().unwrap()).collect();
    assert!(values[0] >= 0.0);
    for frac in &values[1..4] {
        assert!((0.0..=1.0).contains(frac), "{summary}");
    }
    assert!(csvs[0].lines().next().unwrap().starts_with("scenario_id,plan_min_fde,top3_hit_r3"));
}

#[test]
fn config_file_fills_missing_flags_and_flags_win() {
    let d = TempDir::new().unwrap();
    std::fs::write(
        d.path().join("run.toml"),
        "template = \"car_follow\"\ncount = 3\nseed = 5\nout = \"from_file.jsonl\"\n",
    )
    .unwrap();
    ok(d.path(), &["--config", "run.toml", "synthesize"]);
    ok(d.path(), &["--config", "run.toml", "synthesize", "--out", "flag.jsonl"]);
    let a = std::fs::read(d.path().join("from_file.jsonl")).unwrap();
    assert_eq!(a, std::fs::read(d.path().join("flag.jsonl")).unwrap());
    assert_eq!(a.iter().filter(|&&c| c == b'\n').count(), 3);

    std::fs::write(d.path().join("bad.toml"), "colour = 1\n").unwrap();
    assert_eq!(irlplan(d.path(), &["--config", "bad.toml", "synthesize"]).status.code(), Some(1));
}

#[test]
fn plot_writes_well_formed_svg() {
    let d = TempDir::new().unwrap();
    synth(d.path(), "s.jsonl", "intersection_yield", "2", "3");
    ok(d.path(), &["plot", "--data", "s.jsonl", "--out", "full.svg", "--index", "1", "--predictor", "ctrv"]);
    let text = std::fs::read_to_string(d.path().join("full.svg")).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap();
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    let ranks: Vec<usize> = doc
        .descendants()
        .filter_map(|n| n.attribute("data-rank"))
        .map(|r| r.parse().unwrap())
        .collect();
    assert!(!ranks.is_empty());
    // Worst first so the best proposal is drawn on top.
    assert!(ranks.windows(2).all(|w| w[0] > w[1]));
    assert_eq!(*ranks.last().unwrap(), 0);

    ok(d.path(), &["plot", "--data", "s.jsonl", "--out", "bare.svg", "--no-proposals", "--no-futures"]);
    let bare = std::fs::read_to_string(d.path().join("bare.svg")).unwrap();
    let doc = roxmltree::Document::parse(&bare).unwrap();
    assert!(doc.descendants().all(|n| n.attribute("data-rank").is_none()));
    assert!(doc.descendants().any(|n| n.tag_name().name() == "rect"));

    assert_eq!(irlplan(d.path(), &["plot", "--data", "s.jsonl", "--out", "x.svg", "--index", "9"]).status.code(), Some(2));
}
