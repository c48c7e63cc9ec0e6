use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
seed = 3
[synth]
examples_per_stratum = 30
feature_dim = 24
[data]
subsets = 2
[model]
d_model = 16
d_embed = 16
d_ff = 32
n_heads = 2
max_len = 24
[train]
epochs = 2
batch_size = 16
[generate]
batch_size = 8
"#;

fn radgen(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_radgen"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = radgen(dir, args);
    assert!(
        out.status.success(),
        "radgen {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    radgen(dir, args).status.code().expect("exit code")
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), SMALL).unwrap();
    dir
}

fn prepared(dir: &Path) {
    ok(dir, &["--config", "run.toml", "synth-data", "--out", "raw"]);
    ok(
        dir,
        &[
            "--config",
            "run.toml",
            "prepare-data",
            "--input",
            "raw",
            "--out",
            "prep",
        ],
    );
}

fn trained(dir: &Path, demographics: &str, out: &str) {
    ok(
        dir,
        &[
            "--config",
            "run.toml",
            "train",
            "--data",
            "prep",
            "--demographics",
            demographics,
            "--out",
            out,
        ],
    );
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap()
}

#[test]
fn synth_data_is_deterministic_per_seed() {
    let dir = workspace();
    let d = dir.path();
    for out in ["a", "b"] {
        ok(d, &["--config", "run.toml", "--seed", "7", "synth-data", "--out", out]);
    }
    ok(d, &["--config", "run.toml", "--seed", "8", "synth-data", "--out", "c"]);
    for f in ["records.jsonl", "features.bin", "features.json"] {
        assert_eq!(read(d, &format!("a/{f}")), read(d, &format!("b/{f}")), "{f}");
    }
    assert_ne!(read(d, "a/features.bin"), read(d, "c/features.bin"));
}

#[test]
fn pipeline_end_to_end() {
    let dir = workspace();
    let d = dir.path();
    prepared(d);
    for f in [
        "vocab.txt",
        "encoder.json",
        "rejects.jsonl",
        "splits/subset-0.json",
        "splits/subset-1.json",
        "provenance.json",
    ] {
        assert!(d.join("prep").join(f).is_file(), "{f}");
    }
    trained(d, "gender,age,ethnicity", "fused");
    trained(d, "", "base");
    let info: serde_json::Value = serde_json::from_slice(&read(d, "fused/model_info.json")).unwrap();
    assert_eq!(info["demographics"], "gender,age,ethnicity");
    let log = String::from_utf8(read(d, "fused/train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);

    let mut reports = Vec::new();
    for model in ["fused", "base"] {
        for subset in ["0", "1"] {
            let gen = format!("{model}-{subset}.txt");
            let reference = format!("ref-{subset}.txt");
            let eval = format!("{model}-{subset}.json");
            ok(
                d,
                &[
                    "--config",
                    "run.toml",
                    "generate",
                    "--model",
                    model,
                    "--data",
                    "prep",
                    "--subset",
                    subset,
                    "--out",
                    &gen,
                    "--references",
                    &reference,
                ],
            );
            let n_gen = String::from_utf8(read(d, &gen)).unwrap().lines().count();
            let n_ref = String::from_utf8(read(d, &reference)).unwrap().lines().count();
            assert_eq!(n_gen, n_ref);
            assert!(d.join(format!("{gen}.provenance.json")).is_file());
            ok(
                d,
                &[
                    "--config",
                    "run.toml",
                    "evaluate",
                    "--hypotheses",
                    &gen,
                    "--references",
                    &reference,
                    "--out",
                    &eval,
                ],
            );
            reports.push(eval);
        }
    }
    let out = ok(
        d,
        &[
            "compare",
            "--a",
            &reports[0],
            &reports[1],
            "--b",
            &reports[2],
            &reports[3],
            "--out",
            "cmp.json",
        ],
    );
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("bleu_1") && table.contains("f1_embed"), "{table}");
    let rows: serde_json::Value = serde_json::from_slice(&read(d, "cmp.json")).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 7);
}

#[test]
fn greedy_generation_repeats_and_sampling_follows_seed() {
    let dir = workspace();
    let d = dir.path();
    prepared(d);
    trained(d, "age", "m");
    let gen = |seed: &str, temperature: &str, out: &str| {
        ok(
            d,
            &[
                "--config",
                "run.toml",
                "--seed",
                seed,
                "generate",
                "--model",
                "m",
                "--data",
                "prep",
                "--temperature",
                temperature,
                "--out",
                out,
            ],
        );
        read(d, out)
    };
    assert_eq!(gen("1", "0", "g1.txt"), gen("2", "0", "g2.txt"));
    assert_eq!(gen("5", "1.0", "s1.txt"), gen("5", "1.0", "s2.txt"));
}

#[test]
fn identical_files_score_one() {
    let dir = workspace();
    let d = dir.path();
    fs::write(d.join("h.txt"), "heart size normal\nlungs clear no effusion\n").unwrap();
    let out = ok(
        d,
        &[
            "evaluate",
            "--hypotheses",
            "h.txt",
            "--references",
            "h.txt",
            "--out",
            "e.json",
        ],
    );
    let report: serde_json::Value = serde_json::from_slice(&read(d, "e.json")).unwrap();
    for k in ["bleu_1", "bleu_4", "f1_embed"] {
        assert_eq!(report[k], 1.0, "{k}: {}", String::from_utf8_lossy(&out.stdout));
    }
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = workspace();
    let d = dir.path();
    // usage
    assert_eq!(code(d, &["--config", "missing.toml", "synth-data", "--out", "x"]), 2);
    assert_eq!(code(d, &["--set", "model.nope=1", "synth-data", "--out", "x"]), 2);
    assert_eq!(code(d, &["train"]), 2);
    assert_eq!(
        code(
            d,
            &[
                "--config",
                "run.toml",
                "train",
                "--data",
                "prep",
                "--demographics",
                "height",
                "--out",
                "x"
            ]
        ),
        2
    );
    // data
    assert_eq!(
        code(
            d,
            &[
                "--config",
                "run.toml",
                "prepare-data",
                "--input",
                "nowhere",
                "--out",
                "p"
            ]
        ),
        3
    );
    fs::write(d.join("h.txt"), "a b\n").unwrap();
    fs::write(d.join("r.txt"), "a b\nc d\n").unwrap();
    assert_eq!(
        code(d, &["evaluate", "--hypotheses", "h.txt", "--references", "r.txt"]),
        3
    );

    prepared(d);
    trained(d, "gender", "m");
    let weights: PathBuf = fs::read_dir(d.join("m/checkpoint"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.file_name().unwrap() != "manifest.json")
        .expect("checkpoint has a tensor file");
    let mut bytes = fs::read(&weights).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    fs::write(&weights, bytes).unwrap();
    assert_eq!(
        code(
            d,
            &["--config", "run.toml", "generate", "--model", "m", "--data", "prep", "--out", "g.txt"]
        ),
        3
    );

    // numeric
    let args = [
        "--config",
        "run.toml",
        "--set",
        "train.learning_rate=1e30",
        "train",
        "--data",
        "prep",
        "--out",
        "nan",
    ];
    assert_eq!(code(d, &args), 4);
}
