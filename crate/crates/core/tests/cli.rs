use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sgw_gan::gw_exact::{entropic_bias_bound, gw_bruteforce};
use sgw_gan::io::{load_embeddings, EmbeddingFormat};
use sgw_gan::metrics::{write_pnm, ImageBuffer};
use sgw_gan::SeededRng;
use tempfile::TempDir;

fn sgwgan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sgwgan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Scalar `key = value` from the text output.
fn field(text: &str, key: &str) -> String {
    let prefix = format!("{key} = ");
    text.lines()
        .find_map(|l| l.strip_prefix(&prefix))
        .unwrap_or_else(|| panic!("no {key} in:\n{text}"))
        .to_string()
}

fn num(text: &str, key: &str) -> f64 {
    field(text, key).parse().unwrap()
}

/// Random points, optionally labeled, written as CSV with a header row.
fn write_csv(dir: &Path, name: &str, n: usize, d: usize, seed: u64, labels: Option<&[&str]>) -> PathBuf {
    let mut rng = SeededRng::new(seed);
    let mut s = String::new();
    let cols: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    if labels.is_some() {
        s.push_str("label,");
    }
    s.push_str(&cols.join(","));
    s.push('\n');
    for i in 0..n {
        if let Some(ls) = labels {
            let _ = write!(s, "{},", ls[i % ls.len()]);
        }
        let row: Vec<String> = (0..d).map(|_| format!("{}", rng.normal())).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    let path = dir.join(name);
    std::fs::write(&path, s).unwrap();
    path
}

fn write_gray(dir: &Path, name: &str, w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> PathBuf {
    let values = (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
    let img = ImageBuffer::gray(w, h, values, 255.0).unwrap();
    let path = dir.join(name);
    let mut file = std::fs::File::create(&path).unwrap();
    write_pnm(&img, &mut file).unwrap();
    path
}

#[test]
fn sgw_of_a_file_with_itself_is_zero() {
    let dir = TempDir::new().unwrap();
    let a = write_csv(dir.path(), "a.csv", 30, 3, 1, None);
    let o = sgwgan(&["sgw", p(&a), p(&a), "--projections", "16"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("[config]"));
    assert_eq!(num(&text, "value"), 0.0);
    assert_eq!(field(&text, "points"), "30");
}

#[test]
fn sgw_is_deterministic_per_seed() {
    let dir = TempDir::new().unwrap();
    let a = write_csv(dir.path(), "a.csv", 25, 4, 1, None);
    let b = write_csv(dir.path(), "b.csv", 25, 4, 2, None);
    let run = |seed: &str| stdout(&sgwgan(&["sgw", p(&a), p(&b), "--seed", seed]));
    assert_eq!(run("9"), run("9"));
    assert_ne!(num(&run("9"), "value"), num(&run("10"), "value"));
}

#[test]
fn sgw_rejects_zero_projections() {
    let dir = TempDir::new().unwrap();
    let a = write_csv(dir.path(), "a.csv", 10, 2, 1, None);
    let o = sgwgan(&["sgw", p(&a), p(&a), "--projections", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sgw_rejects_unequal_dimensions() {
    let dir = TempDir::new().unwrap();
    let a = write_csv(dir.path(), "a.csv", 10, 3, 1, None);
    let b = write_csv(dir.path(), "b.csv", 10, 2, 2, None);
    let o = sgwgan(&["sgw", p(&a), p(&b)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dimension mismatch"), "{}", stderr(&o));
}

#[test]
fn sgw_reports_size_mismatch_and_subsamples() {
    let dir = TempDir::new().unwrap();
    let a = write_csv(dir.path(), "a.csv", 20, 2, 1, None);
    let b = write_csv(dir.path(), "b.csv", 12, 2, 2, None);
    let o = sgwgan(&["sgw", p(&a), p(&b)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--subsample"), "{}", stderr(&o));
    let o = sgwgan(&["sgw", p(&a), p(&b), "--subsample", "10"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(field(&stdout(&o), "points"), "10");
}

#[test]
fn sgw_json_is_parseable() {
    let dir = TempDir::new().unwrap();
    let a = write_csv(dir.path(), "a.csv", 15, 2, 1, None);
    let b = write_csv(dir.path(), "b.csv", 15, 2, 2, None);
    let o = sgwgan(&["sgw", p(&a), p(&b), "--json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["config"]["command"], "sgw");
    assert!(v["result"]["value"].as_f64().unwrap() > 0.0);
}

#[test]
fn malformed_csv_names_file_and_line() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "x0,x1\n1,2\n3,oops\n").unwrap();
    let o = sgwgan(&["sgw", p(&path), p(&path)]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.starts_with("error: "), "{err}");
    assert!(err.contains("bad.csv:3"), "{err}");
}

#[test]
fn missing_input_exits_with_input_error() {
    let o = sgwgan(&["sgw", "/nonexistent/a.csv", "/nonexistent/a.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/nonexistent/a.csv"));
}

#[test]
fn gw_brute_force_matches_library() {
    let dir = TempDir::new().unwrap();
    let a = write_csv(dir.path(), "a.csv", 6, 2, 3, None);
    let b = write_csv(dir.path(), "b.csv", 6, 3, 4, None);
    let o = sgwgan(&["gw", p(&a), p(&b), "--brute-force"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let x = load_embeddings(&a, EmbeddingFormat::Csv).unwrap();
    let y = load_embeddings(&b, EmbeddingFormat::Csv).unwrap();
    let expected = gw_bruteforce(&x, &y).unwrap().value;
    let got = num(&stdout(&o), "value");
    assert!((got - expected).abs() <= 1e-12 * expected.max(1.0), "{got} vs {expected}");
}

#[test]
fn gw_brute_force_refuses_large_inputs() {
    let dir = TempDir::new().unwrap();
    let a = write_csv(dir.path(), "a.csv", 12, 2, 3, None);
    let o = sgwgan(&["gw", p(&a), p(&a), "--brute-force"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("too large"), "{}", stderr(&o));
}

#[test]
fn entropic_gw_of_a_file_with_itself_is_within_bias() {
    let dir = TempDir::new().unwrap();
    let a = write_csv(dir.path(), "a.csv", 20, 3, 5, None);
    let o = sgwgan(&["gw", p(&a), p(&a)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let value = num(&text, "value");
    let bound = num(&text, "bias_bound");
    assert!(value >= -1e-12 && value <= bound, "{value} vs bound {bound}");
    assert_eq!(field(&text, "method"), "entropic");
}

#[test]
fn eval_relational_on_identical_files() {
    let dir = TempDir::new().unwrap();
    let a = write_csv(dir.path(), "a.csv", 30, 2, 6, Some(&["cat", "dog"]));
    let o = sgwgan(&["eval-relational", p(&a), p(&a)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let header = text.lines().skip_while(|l| *l != "[classes]").nth(1).unwrap();
    assert_eq!(header, "label\tvalue\tepsilon\tbias_bound\tpoints\tconverged\tnote");
    let rows: Vec<Vec<&str>> = text
        .lines()
        .skip_while(|l| *l != "[classes]")
        .skip(2)
        .take_while(|l| !l.is_empty() && !l.starts_with('['))
        .map(|l| l.split('\t').collect())
        .collect();
    assert_eq!(rows.len(), 2);
    for row in rows {
        assert_eq!(row.len(), 7);
        let value: f64 = row[1].parse().unwrap();
        let eps: f64 = row[2].parse().unwrap();
        let points: usize = row[4].parse().unwrap();
        assert!(value <= entropic_bias_bound(eps, points, points), "{row:?}");
    }
}

#[test]
fn eval_relational_warns_about_missing_labels() {
    let dir = TempDir::new().unwrap();
    let a = write_csv(dir.path(), "a.csv", 30, 2, 6, Some(&["cat", "dog", "eel"]));
    let b = write_csv(dir.path(), "b.csv", 20, 2, 7, Some(&["cat", "dog"]));
    let o = sgwgan(&["eval-relational", p(&a), p(&b)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let eel = text.lines().find(|l| l.starts_with("eel\t")).unwrap();
    let cells: Vec<&str> = eel.split('\t').collect();
    assert_eq!(cells.len(), 7);
    assert!(cells[1..6].iter().all(|c| c.is_empty()));
    assert_eq!(cells[6], "warning: label missing from b");
    assert_eq!(field(&text, "unmatched"), "1");
}

#[test]
fn eval_relational_needs_labels() {
    let dir = TempDir::new().unwrap();
    let a = write_csv(dir.path(), "a.csv", 10, 2, 6, None);
    let o = sgwgan(&["eval-relational", p(&a), p(&a)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("has no labels"), "{}", stderr(&o));
}

#[test]
fn train_with_missing_config_names_the_path() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.cfg");
    let out = dir.path().join("run");
    let o = sgwgan(&["train", "--config", p(&missing), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope.cfg"), "{}", stderr(&o));
}

#[test]
fn train_rejects_unknown_keys() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    let o = sgwgan(&["train", "--set", "warp_factor=9", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("warp_factor"), "{}", stderr(&o));
}

const QUICK: [&str; 10] = [
    "--set",
    "epochs=1",
    "--set",
    "steps_per_epoch=3",
    "--set",
    "dataset.per_class=30",
    "--set",
    "eval_cap=16",
    "--set",
    "eval_projections=16",
];

#[test]
fn quick_train_writes_artifacts_and_exports_losses() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    let mut args = vec!["train", "--seed", "4", "--out", p(&out)];
    args.extend(QUICK);
    let o = sgwgan(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(field(&text, "steps"), "3");
    for f in ["report.txt", "generator.ckpt", "critic.ckpt"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("generator.ckpt"));

    let csv_path = dir.path().join("loss.csv");
    let o = sgwgan(&["export-plotdata", "--report", p(&out.join("report.txt")), "--loss-out", p(&csv_path)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(field(&stdout(&o), "loss_rows"), "3");
    let body = std::fs::read_to_string(&csv_path).unwrap();
    let lines: Vec<&str> = body.lines().collect();
    assert_eq!(lines[0], "step,rmse,sgw,adv,total");
    assert_eq!(lines.len(), 4);
    assert!(lines.iter().all(|l| l.split(',').count() == 5));
}

#[test]
fn ablated_train_reports_zero_sgw_weight() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    let mut args = vec!["train", "--ablate-sgw", "--out", p(&out)];
    args.extend(QUICK);
    let o = sgwgan(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(num(&stdout(&o), "lambda_sgw"), 0.0);
}

#[test]
fn export_of_an_untrained_report_is_header_only() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    let mut args = vec!["train", "--out", p(&out), "--set", "epochs=0"];
    args.extend(&QUICK[2..]);
    let o = sgwgan(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv_path = dir.path().join("loss.csv");
    let o = sgwgan(&["export-plotdata", "--report", p(&out.join("report.txt")), "--loss-out", p(&csv_path)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(&csv_path).unwrap(), "step,rmse,sgw,adv,total\n");
}

#[test]
fn export_convergence_series() {
    let dir = TempDir::new().unwrap();
    let a = write_csv(dir.path(), "a.csv", 20, 3, 1, None);
    let b = write_csv(dir.path(), "b.csv", 20, 3, 2, None);
    let csv_path = dir.path().join("conv.csv");
    let o = sgwgan(&[
        "export-plotdata",
        "--sets",
        p(&a),
        p(&b),
        "--convergence-out",
        p(&csv_path),
        "--levels",
        "4,16,64",
        "--repeats",
        "5",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let body = std::fs::read_to_string(&csv_path).unwrap();
    let lines: Vec<&str> = body.lines().collect();
    assert_eq!(lines[0], "projections,mean,sd,repeats");
    assert_eq!(lines.len(), 4);
    for (line, level) in lines[1..].iter().zip(["4", "16", "64"]) {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells.len(), 4);
        assert_eq!(cells[0], level);
        assert_eq!(cells[3], "5");
    }
}

#[test]
fn export_needs_something_to_do() {
    let o = sgwgan(&["export-plotdata"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn metrics_of_identical_images() {
    let dir = TempDir::new().unwrap();
    let a = write_gray(dir.path(), "a.pgm", 16, 14, |x, y| ((x * 13 + y * 7) % 256) as f64);
    let o = sgwgan(&["metrics", p(&a), p(&a)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(field(&text, "psnr"), "inf");
    assert_eq!(num(&text, "ssim"), 1.0);
}

#[test]
fn metrics_of_a_constant_offset() {
    let dir = TempDir::new().unwrap();
    let a = write_gray(dir.path(), "a.pgm", 24, 20, |x, y| ((x * 5 + y * 3) % 200) as f64);
    let b = write_gray(dir.path(), "b.pgm", 24, 20, |x, y| ((x * 5 + y * 3) % 200) as f64 + 16.0);
    let o = sgwgan(&["metrics", p(&a), p(&b)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let expected = 10.0 * (255.0f64 * 255.0 / 256.0).log10();
    assert!((num(&stdout(&o), "psnr") - expected).abs() < 1e-9);
}

#[test]
fn metrics_reject_shape_mismatch() {
    let dir = TempDir::new().unwrap();
    let a = write_gray(dir.path(), "a.pgm", 16, 16, |_, _| 10.0);
    let b = write_gray(dir.path(), "b.pgm", 16, 15, |_, _| 10.0);
    let o = sgwgan(&["metrics", p(&a), p(&b)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("shape mismatch"), "{}", stderr(&o));
}

#[test]
fn help_exits_cleanly_and_unknown_command_does_not() {
    assert_eq!(sgwgan(&["--help"]).status.code(), Some(0));
    assert_eq!(sgwgan(&["frobnicate"]).status.code(), Some(2));
}
