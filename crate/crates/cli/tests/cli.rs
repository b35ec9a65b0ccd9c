use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
seed = 3

[world]
n_pairs = 200

[synth]
n_triples = 8
n_dev = 2
probe_frames = 30
n_sts = 40

[bpe]
merges = 40

[model]
emb_dim = 12
hidden = 12
max_len = 40

[latent]
d_sem = 6
d_syn = 6

[train]
epochs = 1
batch_size = 25

[generate]
beam = 2
max_len = 16

[eval]
per_length = 10
"#;

fn mvg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvg"))
        .args(args)
        .env("MVG_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = mvg(args);
    assert!(
        out.status.success(),
        "mvg {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Run {
    dir: tempfile::TempDir,
}

impl Run {
    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    /// Synthetic data, subwords and a short training run.
    fn new() -> Self {
        let run = Run {
            dir: tempfile::tempdir().unwrap(),
        };
        let cfg = run.path("small.toml");
        fs::write(&cfg, SMALL).unwrap();
        let c = s(&cfg);
        let data = run.path("data");
        ok(&["gen-synth", "--config", c, "--out", s(&data)]);
        ok(&[
            "bpe",
            "--config",
            c,
            "--corpus",
            s(&data.join("bitext.tsv")),
            "--out",
            s(&run.path("bpe.txt")),
        ]);
        ok(&[
            "train",
            "--config",
            c,
            "--corpus",
            s(&data.join("bitext.tsv")),
            "--bpe",
            s(&run.path("bpe.txt")),
            "--dev",
            s(&data.join("dev.jsonl")),
            "--bank",
            &format!("l1={}", s(&data.join("bank.l1.txt"))),
            "--bank",
            &format!("l2={}", s(&data.join("bank.l2.txt"))),
            "--out",
            s(&run.path("model")),
        ]);
        run
    }
}

fn report(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn full_pipeline_produces_reports() {
    let run = Run::new();
    let c = s(&run.path("small.toml")).to_string();
    let data = run.path("data");
    for f in ["bitext.tsv", "bank.l1.txt", "bank.l2.txt", "gold.jsonl", "dev.jsonl", "probe.l1.jsonl", "sts.l2.jsonl"] {
        assert!(data.join(f).exists(), "{f}");
    }
    let model = run.path("model");
    for f in ["best.ckpt", "last.ckpt", "metrics.csv", "report.json", "report.csv"] {
        assert!(model.join(f).exists(), "{f}");
    }
    let r = report(&model.join("report.json"));
    assert_eq!(r["schema"], "mvg-report/1");
    assert_eq!(r["command"], "train");
    assert_eq!(r["seed"], 3);
    assert_eq!(r["metrics"]["steps"], 8.0);
    assert_eq!(r["config_hash"].as_str().unwrap().len(), 64);

    let ck = model.join("best.ckpt");
    let banks = [
        format!("l1={}", s(&data.join("bank.l1.txt"))),
        format!("l2={}", s(&data.join("bank.l2.txt"))),
    ];
    for (dir, cmd) in [("l1-l1", "eval-para"), ("l1-l2", "eval-mt")] {
        let hyps = run.path(&format!("hyps.{dir}.jsonl"));
        let triples = data.join(format!("test.{dir}.jsonl"));
        ok(&["generate", "--config", &c, "--checkpoint", s(&ck), "--triples", s(&triples), "--out", s(&hyps)]);
        let lines = fs::read_to_string(&hyps).unwrap();
        assert_eq!(lines.lines().count(), 8);
        for l in lines.lines() {
            let h: serde_json::Value = serde_json::from_str(l).unwrap();
            assert!(h["hypothesis"].is_string() && h["score"].is_number() && h["truncated"].is_boolean());
        }
        let out = run.path(&format!("{cmd}.json"));
        ok(&[
            cmd, "--config", &c, "--hyps", s(&hyps), "--triples", s(&triples), "--bank", &banks[0], "--bank", &banks[1],
            "--out", s(&out),
        ]);
        let r = report(&out);
        for m in ["bleu", "rouge1", "rouge2", "rougeL", "st_r", "st_s", "target_lexicon_rate"] {
            assert!(r["metrics"][m].is_number(), "{cmd} {m}");
        }
        let csv = fs::read_to_string(out.with_extension("csv")).unwrap();
        assert!(csv.starts_with("command,config_hash,seed,metric,value\n"));
        assert!(csv.contains(&format!("{cmd},")));
    }

    // The mismatched task kind is rejected.
    let out = mvg(&[
        "eval-mt",
        "--hyps",
        s(&run.path("hyps.l1-l1.jsonl")),
        "--triples",
        s(&data.join("test.l1-l1.jsonl")),
        "--bank",
        &banks[0],
        "--out",
        s(&run.path("x.json")),
    ]);
    assert_eq!(out.status.code(), Some(1));

    let sts = run.path("sts.json");
    ok(&["eval-sts", "--config", &c, "--checkpoint", s(&ck), "--pairs", s(&data.join("sts.l1.jsonl")), "--lang", "l1", "--out", s(&sts)]);
    assert!(report(&sts)["metrics"]["sts.sem"].is_number());

    let syn = run.path("syn.json");
    ok(&[
        "eval-syn", "--config", &c, "--checkpoint", s(&ck), "--bank", s(&data.join("bank.l1.txt")), "--lang", "l1",
        "--probe", s(&data.join("probe.l1.jsonl")), "--out", s(&syn),
    ]);
    let r = report(&syn);
    for m in ["pos-accuracy.syn", "labeled-f1.oracle", "frame.sem", "template.random", "template-pos.syn"] {
        assert!(r["metrics"][m].is_number(), "{m}");
    }

    let sents: Vec<String> = fs::read_to_string(data.join("bitext.tsv"))
        .unwrap()
        .lines()
        .take(12)
        .map(|l| l.split('\t').next().unwrap().to_string())
        .collect();
    fs::write(run.path("pool.txt"), sents.join("\n")).unwrap();
    fs::write(run.path("queries.txt"), sents[..2].join("\n")).unwrap();
    let nn = run.path("nn.json");
    ok(&[
        "nn", "--checkpoint", s(&ck), "--queries", s(&run.path("queries.txt")), "--pool", s(&run.path("pool.txt")),
        "--lang", "l1", "--variable", "syntactic", "--k", "3", "--out", s(&nn),
    ]);
    let r = report(&nn);
    let results = r["details"]["results"].as_array().unwrap();
    assert_eq!(results.len(), 2);
    assert_eq!(results[0]["neighbors"].as_array().unwrap().len(), 3);
    assert_eq!(results[0]["neighbors"][0]["index"], 0);
}

#[test]
fn resume_continues_to_the_same_state() {
    let run = Run::new();
    let c = s(&run.path("small.toml")).to_string();
    let data = run.path("data");
    let common = |out: &Path, epochs: &str| {
        vec![
            "train".to_string(),
            "--config".into(),
            c.clone(),
            "--corpus".into(),
            s(&data.join("bitext.tsv")).into(),
            "--bpe".into(),
            s(&run.path("bpe.txt")).into(),
            "--dev".into(),
            s(&data.join("dev.jsonl")).into(),
            "--bank".into(),
            format!("l1={}", s(&data.join("bank.l1.txt"))),
            "--bank".into(),
            format!("l2={}", s(&data.join("bank.l2.txt"))),
            "--out".into(),
            s(out).into(),
            "--epochs".into(),
            epochs.into(),
        ]
    };
    let straight = run.path("straight");
    let args = common(&straight, "2");
    ok(&args.iter().map(String::as_str).collect::<Vec<_>>());

    // `model` already holds one epoch; resume it for a second.
    let mut args = common(&run.path("model"), "2");
    args.push("--resume".into());
    ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    for f in ["last.ckpt", "metrics.csv"] {
        assert_eq!(
            fs::read(straight.join(f)).unwrap(),
            fs::read(run.path("model").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn bad_config_lists_every_problem_as_one_json_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "sed = 1\n[train]\nepoch = 3\n").unwrap();
    let out = mvg(&["gen-synth", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    let lines: Vec<&str> = err.lines().collect();
    assert_eq!(lines.len(), 1, "{err}");
    let v: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(v["error"], "config");
    let msg = v["message"].as_str().unwrap();
    assert!(msg.contains("sed") && msg.contains("train.epoch"), "{msg}");

    fs::write(&cfg, "[train]\nepochs = 0\nbatch_size = 0\n").unwrap();
    let out = mvg(&["gen-synth", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    let v: serde_json::Value = serde_json::from_str(String::from_utf8(out.stderr).unwrap().trim()).unwrap();
    let msg = v["message"].as_str().unwrap();
    assert!(msg.contains("train.epochs") && msg.contains("train.batch_size"), "{msg}");
}

#[test]
fn usage_errors_and_missing_inputs() {
    let out = mvg(&["train", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));

    let dir = tempfile::tempdir().unwrap();
    let out = mvg(&["generate", "--triples", "missing.jsonl", "--out", s(&dir.path().join("h.jsonl"))]);
    assert_eq!(out.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_str(String::from_utf8(out.stderr).unwrap().trim()).unwrap();
    assert_eq!(v["error"], "config");

    let out = Command::new(env!("CARGO_BIN_EXE_mvg"))
        .args(["gen-synth", "--out", s(&dir.path().join("o"))])
        .env("MVG_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
