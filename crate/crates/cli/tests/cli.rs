use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use stego_cli::pipeline::{cmd_bench, cmd_preprocess, cmd_train, Model};
use stego_cli::RunConfig;

fn toy() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/toy_reviews.txt")
}

fn stego(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stego"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn ok(out: Output) -> Output {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out
}

#[test]
fn preprocess_train_embed_extract() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(stego(&["preprocess", "--input", toy().to_str().unwrap(), "--out-dir", "data"], d));
    ok(stego(&["train", "--data", "data", "--out", "model.json"], d));
    let payload = b"the quick brown fox\x00\xff";
    fs::write(d.join("secret.bin"), payload).unwrap();
    for method in ["adg", "bins", "huffman", "patient_huffman", "arithmetic"] {
        let set = format!("method.name=\"{method}\"");
        ok(stego(
            &["--set", &set, "embed", "--model", "model.json", "--in", "secret.bin", "--out", "s.txt", "--trace", "t.jsonl"],
            d,
        ));
        let text = fs::read_to_string(d.join("s.txt")).unwrap();
        assert!(text.starts_with(&format!("# method: {method}")), "{text}");
        ok(stego(&["--set", &set, "extract", "--model", "model.json", "--stego", "s.txt", "--out", "back.bin"], d));
        assert_eq!(fs::read(d.join("back.bin")).unwrap(), payload, "{method}");
        ok(stego(&["metrics", "--trace", "t.jsonl", "--out", "m.csv"], d));
        let csv = fs::read_to_string(d.join("m.csv")).unwrap();
        assert!(csv.lines().nth(2).unwrap().starts_with(method), "{csv}");
    }
}

#[test]
fn missing_model_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = stego(&["embed", "--model", "no/such/model.json", "--hex", "abcd", "--out", "s.txt"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no/such/model.json"));
    assert!(!dir.path().join("s.txt").exists());
}

#[test]
fn bad_config_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "[lm]\norder = 3\nsmoothing = 1\n").unwrap();
    let out = stego(&["--config", "c.toml", "embed", "--model", "m.json", "--hex", "00", "--out", "s.txt"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("smoothing"));
    let out = stego(&["--set", "method.b=many", "embed", "--model", "m.json", "--hex", "00", "--out", "s.txt"], dir.path());
    assert!(String::from_utf8_lossy(&out.stderr).contains("method.b"));
}

#[test]
fn bins_bench_rates_are_exact() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let config = d.join("bins.toml");
    fs::write(
        &config,
        "[bench]\nstegotexts = 40\npayload_bytes = 8\nmethods = [\n  \
         { name = \"bins\", b = 1 },\n  { name = \"bins\", b = 2 },\n  { name = \"bins\", b = 3 },\n  \
         { name = \"bins\", b = 4 },\n  { name = \"bins\", b = 5 },\n]\n",
    )
    .unwrap();
    let cfg = RunConfig::load(Some(&config), &[]).unwrap();
    cmd_preprocess(&cfg, &toy(), &d.join("data")).unwrap();
    cmd_train(&cfg, &d.join("data"), &d.join("model.json")).unwrap();
    let model = Model::open(&cfg, Some(&d.join("model.json"))).unwrap();
    let out = cmd_bench(&cfg, &model, &d.join("data"), &d.join("bench")).unwrap();
    let ers: Vec<f64> = out.reports.iter().map(|r| r.er).collect();
    assert_eq!(ers, [1.0, 2.0, 3.0, 4.0, 5.0]);
    let csv = fs::read_to_string(&out.csv).unwrap();
    assert!(csv.starts_with("# seeds: split=1"));
    assert!(csv.contains("\nbins,b=3,corpus,3.000000,"));
    assert_eq!(fs::read_dir(d.join("bench/stego")).unwrap().count(), 5);
}
