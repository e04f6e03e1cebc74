use std::path::Path;
use std::process::{Command, Output};

fn ontosum(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ontosum"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("spawn ontosum")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

const CONFIG: &str = "\
corpus = data/corpus.jsonl
lexicon = data/lexicon.txt
output_dir = out
embedding_dim = 8
selector_hidden = 8
encoder_hidden = 16
ontology_hidden = 8
decoder_hidden = 8
selector_lr = 0.01
summarizer_lr = 0.003
selector_epochs = 2
summarizer_epochs = 2
dropout = 0
beam_size = 2
max_decode = 8
epsilon_grid = 0.2, 0.8
";

#[test]
fn full_pipeline_and_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("run.cfg"), CONFIG).unwrap();
    let cfg = ["--config", "run.cfg"];

    ok(&ontosum(
        d,
        &["synth", "--out-dir", "data", "--reports", "40", "--seed", "5"],
    ));
    assert!(d.join("data/corpus.jsonl").exists() && d.join("data/lexicon.txt").exists());

    let out = ontosum(d, &["label", cfg[0], cfg[1]]);
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("positive rate"));

    ok(&ontosum(d, &["train-selector", cfg[0], cfg[1]]));
    for f in ["selector.ckpt", "selector_metrics.csv", "selector_dev.tsv"] {
        assert!(d.join("out").join(f).exists(), "{f}");
    }
    let metrics = std::fs::read_to_string(d.join("out/selector_metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3);

    // Filtered mode needs a selector.
    assert_eq!(ontosum(d, &["train-summarizer", cfg[0], cfg[1]]).status.code(), Some(1));
    ok(&ontosum(
        d,
        &["train-summarizer", cfg[0], cfg[1], "--selector", "out/selector.ckpt"],
    ));
    ok(&ontosum(d, &["train-summarizer", cfg[0], cfg[1], "--mode", "plain"]));

    ok(&ontosum(
        d,
        &[
            "summarize",
            cfg[0],
            cfg[1],
            "--checkpoint",
            "out/summarizer-filtered.ckpt",
            "--selector",
            "out/selector.ckpt",
        ],
    ));
    ok(&ontosum(
        d,
        &[
            "summarize",
            cfg[0],
            cfg[1],
            "--mode",
            "plain",
            "--checkpoint",
            "out/summarizer-plain.ckpt",
        ],
    ));
    let gens = std::fs::read_to_string(d.join("out/generations-filtered.jsonl")).unwrap();
    assert_eq!(gens.lines().count(), 4);

    ok(&ontosum(
        d,
        &[
            "evaluate",
            "--generations",
            "out/generations-filtered.jsonl",
            "--compare",
            "out/generations-plain.jsonl",
            "--output",
            "out/report.csv",
        ],
    ));
    let report = std::fs::read_to_string(d.join("out/report.csv")).unwrap();
    assert!(report.starts_with("id,rg1,rg2,rgl"));
    assert!(report.contains("summary:p"));

    ok(&ontosum(
        d,
        &[
            "sweep-epsilon",
            cfg[0],
            cfg[1],
            "--checkpoint",
            "out/summarizer-filtered.ckpt",
            "--selector",
            "out/selector.ckpt",
        ],
    ));
    let sweep = std::fs::read_to_string(d.join("out/epsilon_sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 3);

    // Architecture drift is caught before decoding.
    let drift = ontosum(
        d,
        &[
            "summarize",
            cfg[0],
            cfg[1],
            "--set",
            "decoder_hidden=12",
            "--checkpoint",
            "out/summarizer-plain.ckpt",
            "--mode",
            "plain",
        ],
    );
    assert_eq!(drift.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&drift.stderr).contains("hash mismatch"));

    let ckpt = std::fs::read(d.join("out/summarizer-plain.ckpt")).unwrap();
    std::fs::write(d.join("cut.ckpt"), &ckpt[..ckpt.len() / 2]).unwrap();
    let cut = ontosum(
        d,
        &[
            "summarize",
            cfg[0],
            cfg[1],
            "--mode",
            "plain",
            "--checkpoint",
            "cut.ckpt",
        ],
    );
    assert_eq!(cut.status.code(), Some(2));
}

#[test]
fn usage_and_config_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(ontosum(d, &["no-such-command"]).status.code(), Some(1));
    assert_eq!(ontosum(d, &["--help"]).status.code(), Some(0));
    assert_eq!(ontosum(d, &["label", "--set", "bogus=1"]).status.code(), Some(1));
    assert_eq!(ontosum(d, &["label", "--epsilon", "1.5"]).status.code(), Some(1));
    // No corpus configured.
    assert_eq!(ontosum(d, &["label"]).status.code(), Some(1));
    assert_eq!(
        ontosum(d, &["evaluate", "--generations", "missing.jsonl"])
            .status
            .code(),
        Some(2)
    );
}
