use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn halp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_halp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Raw f32 embedding file: 24-byte header then row-major payload.
fn write_rows(path: &Path, dim: u32, rows: &[Vec<f32>]) {
    let mut b = b"HALPEMB1".to_vec();
    b.extend(1u32.to_le_bytes());
    b.extend(dim.to_le_bytes());
    b.extend((rows.len() as u64).to_le_bytes());
    for x in rows.iter().flatten() {
        b.extend(x.to_le_bytes());
    }
    fs::write(path, b).unwrap();
}

fn read_rows(path: &Path) -> Vec<Vec<f32>> {
    let b = fs::read(path).unwrap();
    let dim = u32::from_le_bytes(b[12..16].try_into().unwrap()) as usize;
    b[24..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect::<Vec<_>>()
        .chunks(dim.max(1))
        .map(<[f32]>::to_vec)
        .collect()
}

fn deg(d: f32) -> Vec<f32> {
    vec![d.to_radians().cos(), d.to_radians().sin()]
}

#[test]
fn cluster_recovers_two_groups() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("points.emb");
    let out = dir.path().join("protos.emb");
    write_rows(&input, 2, &[deg(0.0), deg(10.0), deg(90.0), deg(100.0)]);
    let o = halp(&["cluster", "--input", s(&input), "--k", "2", "--output", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut angles: Vec<f32> = read_rows(&out).iter().map(|r| r[1].atan2(r[0]).to_degrees()).collect();
    angles.sort_by(f32::total_cmp);
    assert!((angles[0] - 5.0).abs() < 0.05 && (angles[1] - 95.0).abs() < 0.05, "{angles:?}");
    let stats = fs::read_to_string(dir.path().join("protos.emb.stats")).unwrap();
    assert!(stats.contains("converged=true"));
    assert!(stats.contains("k=2"));
}

#[test]
fn strict_cluster_reports_non_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("points.emb");
    let out = dir.path().join("protos.emb");
    write_rows(&input, 2, &[deg(0.0), deg(10.0), deg(90.0), deg(100.0)]);
    let args = ["cluster", "--input", s(&input), "--k", "2", "--max-iters", "1", "--output", s(&out)];
    assert_eq!(halp(&args).status.code(), Some(0));
    let mut strict = args.to_vec();
    strict.push("--strict");
    assert_eq!(halp(&strict).status.code(), Some(3));
}

#[test]
fn input_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.emb");
    fs::write(&bad, b"NOTANEMBEDDINGFILE______").unwrap();
    let o = halp(&["cluster", "--input", s(&bad), "--k", "2", "--output", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("magic"));

    let missing = halp(&["cluster", "--input", "/nonexistent/x.emb", "--output", "o"]);
    assert_eq!(missing.status.code(), Some(2));
    assert_eq!(halp(&["cluster"]).status.code(), Some(2));
}

#[test]
fn hallucinate_writes_positives_index_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let anchors = dir.path().join("a.emb");
    let protos = dir.path().join("p.emb");
    let out = dir.path().join("pos.emb");
    write_rows(&anchors, 2, &[deg(10.0), deg(100.0), deg(-20.0)]);
    write_rows(&protos, 2, &[deg(0.0), deg(90.0), deg(200.0)]);
    let o = halp(&[
        "hallucinate", "--anchors", s(&anchors), "--protos", s(&protos),
        "--num-positives", "10", "--seed", "3", "--output", s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_rows(&out);
    let index = fs::read_to_string(dir.path().join("pos.emb.index")).unwrap();
    let counts: Vec<usize> = index
        .lines()
        .map(|l| l.split(' ').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(counts.len(), 3);
    assert_eq!(counts.iter().sum::<usize>(), rows.len());
    let report = fs::read_to_string(dir.path().join("pos.emb.report")).unwrap();
    assert!(report.contains("generated=30\n"));
    assert!(report.contains(&format!("retained={}\n", rows.len())));

    let again = dir.path().join("again.emb");
    halp(&[
        "hallucinate", "--anchors", s(&anchors), "--protos", s(&protos),
        "--num-positives", "10", "--seed", "3", "--output", s(&again), "--sequential",
    ]);
    assert_eq!(fs::read(&out).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn hallucinate_rejects_dim_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let anchors = dir.path().join("a.emb");
    let protos = dir.path().join("p.emb");
    write_rows(&anchors, 3, &[vec![1.0, 0.0, 0.0]]);
    write_rows(&protos, 2, &[deg(0.0), deg(90.0)]);
    let o = halp(&[
        "hallucinate", "--anchors", s(&anchors), "--protos", s(&protos),
        "--output", s(&dir.path().join("o.emb")),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

const SMALL_CONFIG: &str = r#"{
  "data": { "num_classes": 3, "input_dim": 8, "samples_per_class": 20 },
  "train": {
    "steps": 30, "batch_size": 16, "queue_capacity": 64, "top_k": 32,
    "num_prototypes": 4, "kmeans": { "k": 4 }, "hallucination": { "num_positives": 8 },
    "hidden_dims": [12], "embedding_dim": 4, "record_timing": false
  }
}"#;

#[test]
fn train_toy_is_deterministic_and_exports_embeddings() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    fs::write(&config, SMALL_CONFIG).unwrap();
    let (m1, m2) = (dir.path().join("m1.csv"), dir.path().join("m2.csv"));
    let export = dir.path().join("export");
    let o = halp(&["train-toy", "--config", s(&config), "--metrics-out", s(&m1), "--export-dir", s(&export)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("knn_accuracy="));
    halp(&["train-toy", "--config", s(&config), "--metrics-out", s(&m2), "--sequential"]);
    let csv = fs::read_to_string(&m1).unwrap();
    assert_eq!(csv, fs::read_to_string(&m2).unwrap());
    assert!(csv.starts_with("step,l_cl,l_halp,total,mu,generated,retained,t_star_mean,wall_ms\n"));
    assert_eq!(csv.lines().count(), 31);

    let train = export.join("train.emb");
    let labels = export.join("train.labels");
    let o = halp(&[
        "eval-knn", "--train", s(&train), "--train-labels", s(&labels),
        "--test", s(&train), "--test-labels", s(&labels),
    ]);
    assert_eq!(String::from_utf8_lossy(&o.stdout), "1.0000\n");
    let o = halp(&[
        "eval-knn", "--train", s(&train), "--train-labels", s(&labels),
        "--test", s(&export.join("test.emb")), "--test-labels", s(&export.join("test.labels")),
    ]);
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success());
    assert!(out.trim().len() == 6 && out.trim().parse::<f64>().is_ok(), "{out}");
}

#[test]
fn train_toy_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    fs::write(&config, r#"{"train": {"stepz": 3}}"#).unwrap();
    let o = halp(&["train-toy", "--config", s(&config), "--metrics-out", s(&dir.path().join("m.csv"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn eval_knn_rejects_label_count_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let emb = dir.path().join("e.emb");
    let labels = dir.path().join("l.txt");
    write_rows(&emb, 2, &[deg(0.0), deg(90.0)]);
    fs::write(&labels, "0\n").unwrap();
    let o = halp(&[
        "eval-knn", "--train", s(&emb), "--train-labels", s(&labels),
        "--test", s(&emb), "--test-labels", s(&labels),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bench_runs_with_single_repeat_and_zero_positives() {
    for g in ["5", "0"] {
        let o = halp(&[
            "bench", "--dim", "8", "--batch", "8", "--num-positives", g,
            "--prototypes", "3", "--repeats", "1", "--queue", "64",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let out = String::from_utf8_lossy(&o.stdout);
        assert!(out.contains("hallucinate_batch median_ms="));
        assert!(out.contains("ratio="));
    }
}

#[test]
fn help_lists_defaults() {
    let o = halp(&["cluster", "--help"]);
    let text = String::from_utf8_lossy(&o.stdout);
    for d in ["[default: 20]", "[default: 0.001]", "[default: 1]", "[default: 100]"] {
        assert!(text.contains(d), "missing {d}");
    }
    let o = halp(&["train-toy", "--help"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("\"queue_capacity\": 16384"));
    assert!(text.contains("\"momentum_m\": 0.999"));
}
