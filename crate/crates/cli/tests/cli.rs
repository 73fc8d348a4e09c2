use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_multicrf"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn multicrf")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small first-order synthetic corpus in `dir/data`.
fn synth(dir: &Path, extra: &[&str]) -> PathBuf {
    let data = dir.join("data");
    let mut args = vec![
        "synth",
        "--out-dir",
        s(&data),
        "--train",
        "60",
        "--dev",
        "20",
        "--test",
        "20",
    ];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    data
}

fn write_config(dir: &Path, data: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.txt");
    let text = format!(
        "# test run\ntrain_path = {}\ndev_path = {}\ntest_path = {}\nembeddings_path = {}\nmodel_path = {}\noutput_path = {}\n{body}",
        s(&data.join("train.conll")),
        s(&data.join("dev.conll")),
        s(&data.join("test.conll")),
        s(&data.join("embeddings.txt")),
        s(&dir.join("model.json")),
        s(&dir.join("report.csv")),
    );
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn missing_embeddings_path_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("c.txt");
    fs::write(
        &cfg,
        "family = d-quadrilinear\ntrain_path = x.conll\nmodel_path = m.json\n",
    )
    .unwrap();
    let o = run(&["train", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).contains("missing key: embeddings_path"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("c.txt");
    fs::write(&cfg, "learning_rte = 0.1\n").unwrap();
    let o = run(&["train", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown key"));
    let o = run(&["train", "--config", s(&cfg), "--family", "hexalinear"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn show_config_round_trips() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("c.txt");
    fs::write(&cfg, "family = trilinear\nl2 = 3e-7\nmax_grad_norm = 4\n").unwrap();
    let first = run(&[
        "show-config",
        "--config",
        s(&cfg),
        "--seed",
        "9",
        "--set",
        "metric=f1",
    ]);
    assert!(first.status.success());
    let dumped = dir.path().join("dumped.txt");
    fs::write(&dumped, stdout(&first)).unwrap();
    let second = run(&["show-config", "--config", s(&dumped)]);
    assert_eq!(stdout(&first), stdout(&second));
    assert!(stdout(&first).contains("seed = 9"));
    assert!(stdout(&first).contains("family = trilinear"));
}

#[test]
fn train_tag_eval_end_to_end() {
    let dir = TempDir::new().unwrap();
    let data = synth(dir.path(), &[]);
    let cfg = write_config(
        dir.path(),
        &data,
        "family = vanilla-crf\nbatch_size = 4\nmax_epochs = 40\npatience = 40\n",
    );
    let o = run(&["train", "--config", s(&cfg)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let epoch_lines = out.lines().filter(|l| l.starts_with("{\"epoch\"")).count();
    assert!((1..=40).contains(&epoch_lines));
    assert!(out.contains("best_epoch="));
    assert!(out.contains("test precision="));

    let report = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(report.starts_with("epoch,train_loss,dev_score,seconds"));
    assert_eq!(report.lines().count(), epoch_lines + 1);

    // A model trained to saturation reproduces the gold labels of its training data.
    let pred = dir.path().join("pred.conll");
    let train_file = data.join("train.conll");
    let o = run(&[
        "tag",
        "--model",
        s(&dir.path().join("model.json")),
        "--embeddings",
        s(&data.join("embeddings.txt")),
        "--input",
        s(&train_file),
        "--output",
        s(&pred),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(&["eval", "--gold", s(&train_file), "--pred", s(&pred)]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("acc=1.0000"), "{}", stdout(&o));
}

#[test]
fn training_is_deterministic_given_seed() {
    let dir = TempDir::new().unwrap();
    let data = synth(dir.path(), &[]);
    let cfg = write_config(dir.path(), &data, "family = d-trilinear\nmax_epochs = 3\n");
    let model = dir.path().join("model.json");
    let mut saved = Vec::new();
    for threads in ["1", "1", "3"] {
        let o = run(&[
            "train",
            "--config",
            s(&cfg),
            "--seed",
            "5",
            "--threads",
            threads,
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        saved.push(fs::read(&model).unwrap());
    }
    assert_eq!(saved[0], saved[1]);
    let o = run(&["train", "--config", s(&cfg), "--seed", "6"]);
    assert!(o.status.success());
    assert_ne!(fs::read(&model).unwrap(), saved[0]);
}

#[test]
fn tag_edge_cases() {
    let dir = TempDir::new().unwrap();
    let data = synth(dir.path(), &[]);
    let cfg = write_config(dir.path(), &data, "family = softmax\nmax_epochs = 2\n");
    assert!(run(&["train", "--config", s(&cfg)]).status.success());
    let model = dir.path().join("model.json");
    let emb = data.join("embeddings.txt");

    let empty = dir.path().join("empty.conll");
    fs::write(&empty, "").unwrap();
    let out = dir.path().join("out.conll");
    let o = run(&[
        "tag",
        "--model",
        s(&model),
        "--embeddings",
        s(&emb),
        "--input",
        s(&empty),
        "--output",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(&out).unwrap(), "");

    let unknown = dir.path().join("unk.conll");
    fs::write(&unknown, "zzz\nw3\nqqq\n\n").unwrap();
    let o = run(&[
        "tag",
        "--model",
        s(&model),
        "--embeddings",
        s(&emb),
        "--input",
        s(&unknown),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let lines: Vec<String> = stdout(&o).lines().map(String::from).collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("zzz L"));

    let small = dir.path().join("small.txt");
    fs::write(&small, "w1 0.1 0.2\nw2 0.3 0.4\n").unwrap();
    let o = run(&[
        "tag",
        "--model",
        s(&model),
        "--embeddings",
        s(&small),
        "--input",
        s(&unknown),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!stderr(&o).is_empty());
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn eval_scores_and_alignment() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let gold = write(d, "gold", "a B-PER\nb E-PER\nc O\nd S-LOC\n\n");
    let o = run(&["eval", "--gold", s(&gold), "--pred", s(&gold)]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("f1=1.0000"));

    let disjoint = write(d, "disjoint", "a O\nb O\nc S-ORG\nd O\n\n");
    let o = run(&["eval", "--gold", s(&gold), "--pred", s(&disjoint)]);
    assert!(stdout(&o).contains("f1=0.0000"), "{}", stdout(&o));

    let half = write(d, "half", "a B-PER\nb E-PER\nc O\nd S-ORG\n\n");
    let o = run(&["eval", "--gold", s(&gold), "--pred", s(&half), "--json"]);
    assert!(stdout(&o).contains("\"f1\":0.5"), "{}", stdout(&o));

    let bio_gold = write(d, "bio_gold", "a B-PER\nb I-PER\nc O\nd B-LOC\n\n");
    let bio_pred = write(d, "bio_pred", "a B-PER\nb I-PER\nc O\nd O\n\n");
    let o = run(&["eval", "--gold", s(&bio_gold), "--pred", s(&bio_pred)]);
    assert!(
        stdout(&o).contains("precision=1.0000 recall=0.5000"),
        "{}",
        stdout(&o)
    );

    let short = write(d, "short", "a O\nb O\nc O\n\n");
    assert_eq!(
        run(&["eval", "--gold", s(&gold), "--pred", s(&short)])
            .status
            .code(),
        Some(3)
    );
    let moved = write(d, "moved", "a O\nx O\nc O\nd O\n\n");
    assert_eq!(
        run(&["eval", "--gold", s(&gold), "--pred", s(&moved)])
            .status
            .code(),
        Some(3)
    );
    let two = write(d, "two", "a O\nb O\n\nc O\nd O\n\n");
    assert_eq!(
        run(&["eval", "--gold", s(&gold), "--pred", s(&two)])
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn gradcheck_passes_and_catches_corruption() {
    let o = run(&["gradcheck", "--family", "all"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 10);

    let o = run(&["gradcheck", "--family", "softmax", "--seeds", "3"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 3);

    let o = run(&[
        "gradcheck",
        "--family",
        "d-quadrilinear",
        "--corrupt-field",
        "u_h2",
    ]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("field=u_h2"), "{}", stderr(&o));

    let o = run(&[
        "gradcheck",
        "--family",
        "vanilla-crf",
        "--corrupt-field",
        "transition_table",
    ]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("field=transition_table"));

    assert_eq!(
        run(&["gradcheck", "--corrupt-field", "nope"]).status.code(),
        Some(2)
    );
}

#[test]
fn bench_writes_csv() {
    let o = run(&[
        "bench",
        "--family",
        "vanilla-crf,d-trilinear",
        "--labels",
        "4",
        "--d-h",
        "6",
        "--d-t",
        "5",
        "--d-r",
        "3",
        "--len",
        "1",
        "--batch",
        "2",
        "--reps",
        "2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(
        lines[0],
        "family,labels,d_h,d_t,d_r,len,batch,reps,train_step_ms,decode_ms"
    );
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("vanilla-crf,4,6,5,3,1,2,2,"));
    let ms: f64 = lines[2].rsplit(',').next().unwrap().parse().unwrap();
    assert!(ms > 0.0);
    assert_eq!(run(&["bench", "--reps", "0"]).status.code(), Some(2));
}

#[test]
fn small_data_writes_one_row_per_fraction() {
    let dir = TempDir::new().unwrap();
    let data = synth(dir.path(), &["--style", "bioes"]);
    let cfg = write_config(dir.path(), &data, "family = d-trilinear\nmax_epochs = 3\n");
    let out = dir.path().join("small.csv");
    let o = run(&[
        "small-data",
        "--config",
        s(&cfg),
        "--fractions",
        "0.1,0.3",
        "--seeds",
        "1,2",
        "--output",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(
        rows[0],
        "fraction,seed,train_sentences,best_epoch,dev_score,test_f1,test_accuracy"
    );
    assert_eq!(rows.len(), 5);
    assert!(rows[1].starts_with("0.1,1,6,"));
    assert!(rows[3].starts_with("0.3,1,18,"));

    let o = run(&["small-data", "--config", s(&cfg), "--fractions", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
}
