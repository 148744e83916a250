use std::path::{Path, PathBuf};
use std::process::Command;

use sparsegp::kernels::{y_kernel_eval, Inputs, KernelHyperparameters};
use sparsegp::linalg::read_matrix_market;

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

fn sparsegp(args: &[&str], env: &[(&str, &str)]) -> Out {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sparsegp"));
    cmd.args(args).env_remove("SPARSEGP_WORKERS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    let o = cmd.output().expect("spawn sparsegp");
    Out {
        code: o.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&o.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&o.stderr).into_owned(),
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn read_csv(p: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(p).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|f| f.parse().unwrap_or(f64::NAN)).collect())
        .collect();
    (header, rows)
}

fn last_json(stderr: &str) -> serde_json::Value {
    serde_json::from_str(stderr.lines().last().expect("diagnostic line")).expect("json diagnostic")
}

fn listing(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = match std::fs::read_dir(dir) {
        Ok(rd) => rd.map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect(),
        Err(_) => Vec::new(),
    };
    v.sort();
    v
}

const SHORT_RUN: &str = "[mcmc]\niterations = 200\nburn_in_fraction = 0.25\n";

fn simulate_d1(dir: &Path) -> (PathBuf, PathBuf) {
    let out = dir.join("sim");
    let r = sparsegp(&["--seed", "3", "simulate", "--scenario", "D1", "--out", s(&out)], &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    (out.join("D1_rep0_train.csv"), out.join("D1_rep0_test.csv"))
}

#[test]
fn train_writes_samples_trace_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (train, _) = simulate_d1(dir.path());
    let cfg = write(dir.path(), "c.toml", SHORT_RUN);
    let out = dir.path().join("run");
    let r = sparsegp(&["--config", s(&cfg), "train", "--data", s(&train), "--out", s(&out)], &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(listing(&out), ["manifest.json", "samples.jsonl", "trace.csv"]);
    let lines = std::fs::read_to_string(out.join("samples.jsonl")).unwrap().lines().count();
    assert_eq!(lines, 150);
    let (header, rows) = read_csv(&out.join("trace.csv"));
    assert_eq!(rows.len(), 200);
    assert!(header.iter().any(|h| h == "theta.sparse.scale"));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["retained"], 150);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn train_is_byte_identical_across_reruns_and_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (train, _) = simulate_d1(dir.path());
    let cfg = write(dir.path(), "c.toml", "[mcmc]\niterations = 60\nburn_in_fraction = 0.5\n");
    let mut outputs = Vec::new();
    for (k, workers) in ["1", "1", "2"].iter().enumerate() {
        let out = dir.path().join(format!("run{k}"));
        let r = sparsegp(
            &["--config", s(&cfg), "--seed", "11", "train", "--data", s(&train), "--out", s(&out)],
            &[("SPARSEGP_WORKERS", workers)],
        );
        assert_eq!(r.code, 0, "{}", r.stderr);
        outputs.push(
            ["samples.jsonl", "trace.csv", "manifest.json"].map(|f| std::fs::read(out.join(f)).unwrap()),
        );
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let (train, _) = simulate_d1(dir.path());
    let cfg = write(dir.path(), "c.toml", "[mcmc]\niteratons = 10\n");
    let out = dir.path().join("run");
    let r = sparsegp(&["--config", s(&cfg), "train", "--data", s(&train), "--out", s(&out)], &[]);
    assert_eq!(r.code, 2);
    assert_eq!(last_json(&r.stderr)["error"], "config");
    assert!(listing(&out).is_empty());
}

#[test]
fn non_numeric_z_exits_3_naming_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "d.csv", "x1,z\n0.1,1.0\n0.2,oops\n0.3,2.0\n");
    let out = dir.path().join("run");
    let r = sparsegp(&["train", "--data", s(&data), "--out", s(&out)], &[]);
    assert_eq!(r.code, 3);
    let d = last_json(&r.stderr);
    assert_eq!(d["error"], "data");
    assert!(d["message"].as_str().unwrap().contains("row 2"), "{}", r.stderr);
    assert!(listing(&out).is_empty());
}

#[test]
fn missing_z_rows_are_dropped() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "d.csv", "x1,z\n0.1,1.0\n0.2,NA\n0.3,\n0.4,2.0\n0.6,1.5\n");
    let cfg = write(dir.path(), "c.toml", "[mcmc]\niterations = 20\nburn_in_fraction = 0.5\n");
    let out = dir.path().join("run");
    let r = sparsegp(&["--config", s(&cfg), "train", "--data", s(&data), "--out", s(&out)], &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stderr.contains("dropped 2 rows"), "{}", r.stderr);
    let manifest = std::fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"observations\": 3"));
}

#[test]
fn noiseless_model_interpolates_training_data() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("x1,z\n");
    for i in 0..20 {
        let x = i as f64 / 19.0;
        text += &format!("{x},{}\n", (6.0 * x).sin() + x);
    }
    let data = write(dir.path(), "d.csv", &text);
    let cfg = write(
        dir.path(),
        "c.toml",
        "[model]\ncore = { kind = \"matern\", nu = 2.5 }\nnoise = { kind = \"fixed\", tau2 = 0.0 }\n\
         [mcmc]\niterations = 40\nburn_in_fraction = 0.5\n",
    );
    let out = dir.path().join("run");
    let r = sparsegp(&["--config", s(&cfg), "train", "--data", s(&data), "--out", s(&out)], &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let pred = dir.path().join("p.csv");
    let r = sparsegp(
        &[
            "--config",
            s(&cfg),
            "predict",
            "--samples",
            s(&out.join("samples.jsonl")),
            "--data",
            s(&data),
            "--query",
            s(&data),
            "--out",
            s(&pred),
        ],
        &[],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    let (header, rows) = read_csv(&pred);
    assert_eq!(header, ["x1", "post_mean", "post_sd"]);
    let (_, truth) = read_csv(&data);
    for (p, t) in rows.iter().zip(&truth) {
        assert!((p[1] - t[1]).abs() < 1e-6, "{} vs {}", p[1], t[1]);
    }
}

fn trained(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let (train, test) = simulate_d1(dir);
    let cfg = write(dir, "c.toml", SHORT_RUN);
    let out = dir.join("run");
    let r = sparsegp(&["--config", s(&cfg), "train", "--data", s(&train), "--out", s(&out)], &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    (out.join("samples.jsonl"), train, test)
}

#[test]
fn empty_query_gives_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let (samples, train, _) = trained(dir.path());
    let q = write(dir.path(), "q.csv", "");
    let pred = dir.path().join("p.csv");
    let r = sparsegp(
        &["predict", "--samples", s(&samples), "--data", s(&train), "--query", s(&q), "--out", s(&pred), "--draws", "2"],
        &[],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(std::fs::read_to_string(&pred).unwrap(), "x1,post_mean,post_sd,draw_1,draw_2\n");
}

#[test]
fn unconditional_draws_agree_with_post_mean() {
    let dir = tempfile::tempdir().unwrap();
    let (samples, train, _) = trained(dir.path());
    let q = write(dir.path(), "q.csv", "x1\n0.1\n0.3\n0.5\n0.7\n0.9\n");
    let pred = dir.path().join("p.csv");
    let r = sparsegp(
        &[
            "--seed",
            "5",
            "predict",
            "--samples",
            s(&samples),
            "--data",
            s(&train),
            "--query",
            s(&q),
            "--out",
            s(&pred),
            "--unconditional",
            "--draws",
            "100",
        ],
        &[],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    let (header, rows) = read_csv(&pred);
    assert_eq!(header.len(), 3 + 100);
    assert_eq!(header[102], "draw_100");
    for row in &rows {
        let draws = &row[3..];
        let m = draws.iter().sum::<f64>() / 100.0;
        let se = row[2] / 10.0;
        assert!((m - row[1]).abs() < 3.0 * se, "empirical {m} vs {} (se {se})", row[1]);
    }
}

#[test]
fn conditional_predictions_and_draw_columns() {
    let dir = tempfile::tempdir().unwrap();
    let (samples, train, test) = trained(dir.path());
    let pred = dir.path().join("p.csv");
    let args = [
        "predict",
        "--samples",
        s(&samples),
        "--data",
        s(&train),
        "--query",
        s(&test),
        "--out",
        s(&pred),
        "--draws",
        "4",
    ];
    let r = sparsegp(&args, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let first = std::fs::read(&pred).unwrap();
    let (header, rows) = read_csv(&pred);
    assert_eq!(header.len(), 7);
    assert_eq!(rows.len(), 300);
    assert!(rows.iter().all(|r| r[2] > 0.0 && r.iter().all(|v| v.is_finite())));
    assert_eq!(sparsegp(&args, &[]).code, 0);
    assert_eq!(std::fs::read(&pred).unwrap(), first);
}

#[test]
fn predict_without_draws_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let (_, train, test) = trained(dir.path());
    let empty = write(dir.path(), "none.jsonl", "");
    let pred = dir.path().join("p.csv");
    let r = sparsegp(
        &["predict", "--samples", s(&empty), "--data", s(&train), "--query", s(&test), "--out", s(&pred)],
        &[],
    );
    assert_eq!(r.code, 3);
    assert!(!pred.exists());
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let r = sparsegp(&["--seed", "7", "simulate", "--scenario", "S1", "--replicates", "2", "--out", s(out)], &[]);
        assert_eq!(r.code, 0, "{}", r.stderr);
    }
    let files = listing(&a);
    assert_eq!(files, ["S1_rep0_test.csv", "S1_rep0_train.csv", "S1_rep1_test.csv", "S1_rep1_train.csv"]);
    for f in &files {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
    }
    assert_ne!(std::fs::read(a.join(&files[1])).unwrap(), std::fs::read(a.join(&files[3])).unwrap());
}

#[test]
fn simulate_d1_shape() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = simulate_d1(dir.path());
    let (header, rows) = read_csv(&train);
    assert_eq!(header, ["x1", "z"]);
    assert_eq!(rows.len(), 50);
    for r in &rows {
        assert!(r[0] > 0.0 && r[0] < 1.0);
        // Truth within [-1, 1]; noise sd is sqrt(0.1).
        assert!(r[1].abs() < 1.0 + 5.0 * 0.1f64.sqrt());
    }
    let (header, rows) = read_csv(&test);
    assert_eq!(header, ["x1", "y"]);
    assert!(rows.iter().all(|r| r[1].abs() <= 1.0));
}

#[test]
fn simulate_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("none");
    let r = sparsegp(&["simulate", "--scenario", "S2", "--replicates", "0", "--out", s(&out)], &[]);
    assert_eq!(r.code, 0);
    assert!(listing(&out).is_empty());
    let r = sparsegp(&["simulate", "--scenario", "S7", "--out", s(&out)], &[]);
    assert_eq!(r.code, 2);
    assert_eq!(last_json(&r.stderr)["error"], "config");
}

fn benchmark(dir: &Path, name: &str, toml: &str) -> PathBuf {
    let cfg = write(dir, &format!("{name}.toml"), toml);
    let out = dir.join(name);
    let r = sparsegp(&["--config", s(&cfg), "benchmark", "--out", s(&out)], &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    out
}

#[test]
fn benchmark_reference_only_is_all_ones() {
    let dir = tempfile::tempdir().unwrap();
    let out = benchmark(
        dir.path(),
        "m1",
        "[benchmark]\nscenarios = [\"S1\"]\nmodels = [\"M1\"]\nreplicates = 2\n\
         [benchmark.mcmc]\niterations = 30\nburn_in_fraction = 0.5\n",
    );
    let (header, rows) = read_csv(&out.join("summary.csv"));
    assert_eq!(rows.len(), 1);
    for (h, v) in header.iter().zip(&rows[0]) {
        if h.contains("rel") {
            assert_eq!(*v, 1.0, "{h}");
        }
    }
}

#[test]
fn benchmark_full_grid_shape_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let toml = "[benchmark]\nreplicates = 1\nseed = 4\nmax_prediction_draws = 5\n\
                [benchmark.mcmc]\niterations = 12\nburn_in_fraction = 0.5\nwarmup = 4\n";
    let a = benchmark(dir.path(), "a", toml);
    let b = benchmark(dir.path(), "b", toml);
    let (_, rows) = read_csv(&a.join("summary.csv"));
    assert_eq!(rows.len(), 12);
    for f in ["scores.csv", "summary.csv", "manifest.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

const KERNEL: &str = r#"
[kernel]
core = { kind = "stationary_matern", variance = 1.3, length_scale = 0.2, nu = 1.5 }
sparse = { scale = 0.7, wendland_radius = 0.08, n1 = 1, n2 = 2, inclusion_probs = [0.5, 0.5], bumps = [
  { centroid = [0.3], amplitude = 1.0, shape = 1.0, radius = 0.15 },
  { centroid = [0.8], amplitude = 1.0, shape = 0.5, radius = 0.1 },
] }
"#;

fn export(dir: &Path, toml: &str, inputs: &Path, normalized: bool) -> (Out, PathBuf) {
    let cfg = write(dir, "k.toml", toml);
    let out = dir.join(if normalized { "kn.mtx" } else { "k.mtx" });
    let mut args = vec!["--config", s(&cfg), "kernel-export", "--inputs", s(inputs), "--out", s(&out)];
    if normalized {
        args.push("--normalized");
    }
    let r = sparsegp(&args, &[]);
    (r, out)
}

fn grid_inputs(dir: &Path, n: usize) -> (PathBuf, Vec<f64>) {
    let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    let mut text = String::from("x1\n");
    for x in &xs {
        text += &format!("{x}\n");
    }
    (write(dir, "x.csv", &text), xs)
}

#[test]
fn kernel_export_matches_dense_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let (inputs, xs) = grid_inputs(dir.path(), 40);
    let (r, out) = export(dir.path(), KERNEL, &inputs, false);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let m = read_matrix_market(std::io::BufReader::new(std::fs::File::open(&out).unwrap())).unwrap();

    let cfg: toml::Table = toml::from_str(KERNEL).unwrap();
    let theta: KernelHyperparameters = cfg["kernel"].clone().try_into().unwrap();
    let pts = Inputs::from_1d(&xs);
    let mut nonzero = 0;
    for i in 0..40 {
        for j in 0..40 {
            let want = y_kernel_eval(&theta, pts.point(i), pts.point(j));
            let got = m.get(i, j);
            assert!((got - want).abs() <= 1e-14 * want.abs().max(1.0), "({i},{j}) {got} vs {want}");
            nonzero += usize::from(want != 0.0);
        }
    }
    assert_eq!(m.nnz(), nonzero);
    let fraction = nonzero as f64 / 1600.0;
    assert_eq!(r.stdout.trim(), format!("sparsity_fraction {fraction}"));
    assert!(std::fs::read_to_string(&out).unwrap().contains(&format!("% sparsity_fraction {fraction}")));
}

#[test]
fn kernel_export_tiny_support_is_diagonal() {
    let dir = tempfile::tempdir().unwrap();
    let (inputs, _) = grid_inputs(dir.path(), 30);
    let toml = r#"
[kernel]
core = { kind = "stationary_matern", variance = 1.0, length_scale = 0.2, nu = 0.5 }
sparse = { scale = 1.0, wendland_radius = 0.001, n1 = 1, n2 = 1, inclusion_probs = [0.5], bumps = [
  { centroid = [0.5], amplitude = 0.0, shape = 1.0, radius = 0.3 },
] }
"#;
    let (r, out) = export(dir.path(), toml, &inputs, false);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let m = read_matrix_market(std::io::BufReader::new(std::fs::File::open(&out).unwrap())).unwrap();
    assert_eq!(m.nnz(), 30);
    assert!((0..30).all(|i| m.get(i, i) > 0.0));
}

#[test]
fn kernel_export_normalized_has_unit_diagonal() {
    let dir = tempfile::tempdir().unwrap();
    let (inputs, _) = grid_inputs(dir.path(), 40);
    let (r, out) = export(dir.path(), KERNEL, &inputs, true);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let m = read_matrix_market(std::io::BufReader::new(std::fs::File::open(&out).unwrap())).unwrap();
    assert!(m.diagonal().iter().all(|d| *d == 1.0));
    for i in 0..40 {
        for (&j, &v) in m.row_cols(i).iter().zip(m.row_values(i)) {
            assert!(v.abs() <= 1.0 + 1e-12, "({i},{j}) {v}");
            assert_eq!(v, m.get(j, i));
        }
    }
}

#[test]
fn kernel_export_requires_hyperparameters() {
    let dir = tempfile::tempdir().unwrap();
    let (inputs, _) = grid_inputs(dir.path(), 5);
    let (r, out) = export(dir.path(), "", &inputs, false);
    assert_eq!(r.code, 2);
    assert!(!out.exists());
}

#[test]
fn bad_arguments_exit_2() {
    let r = sparsegp(&["train", "--bogus"], &[]);
    assert_eq!(r.code, 2);
    assert_eq!(last_json(&r.stderr)["error"], "config");
    let r = sparsegp(&["simulate", "--scenario", "S1", "--out", "x"], &[("SPARSEGP_WORKERS", "many")]);
    assert_eq!(r.code, 2);
    assert_eq!(sparsegp(&["--help"], &[]).code, 0);
}
