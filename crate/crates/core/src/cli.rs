//! Command-line interface of the `sgwgan` binary.
//!
//! Every command prints a `[config]` section with all resolved options
//! (flags and defaults) followed by its results, as `key = value` lines or
//! tab-separated tables. `--json` prints the same sections as one JSON
//! object. Non-finite numbers print as `inf`, `-inf` or `nan` in both forms.
//!
//! Exit codes: 0 on success, 1 when a computation fails (non-finite training
//! loss, Sinkhorn overflow), 2 for usage and input errors.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::geometry::{pairwise_distances, split_by_label, EmbeddingSet};
use crate::gw_exact::{default_epsilon, entropic_bias_bound, gw_bruteforce_with_cap, gw_entropic, EntropicOptions};
use crate::gw_sliced::{sgw, ProjectionBasis};
use crate::io::{load_embeddings, EmbeddingFormat};
use crate::metrics::{load_image, psnr, ssim, DEFAULT_RANGE};
use crate::rng::SeededRng;
use crate::trainer::{
    eval_options, make_synthetic, parse_report, relational_gw, train, write_report, EpsilonRule, Preset, TrainConfig,
    DEFAULT_EVAL_CAP,
};

/// Header of the per-label table printed by `eval-relational`.
pub const RELATIONAL_COLUMNS: [&str; 7] = ["label", "value", "epsilon", "bias_bound", "points", "converged", "note"];
/// Header of the loss-curve CSV written by `export-plotdata`.
pub const LOSS_CSV_COLUMNS: [&str; 5] = ["step", "rmse", "sgw", "adv", "total"];
/// Header of the SGW-versus-L CSV written by `export-plotdata`.
pub const CONVERGENCE_CSV_COLUMNS: [&str; 4] = ["projections", "mean", "sd", "repeats"];

#[derive(Debug, Parser)]
#[command(name = "sgwgan", version, about = "Gromov-Wasserstein discrepancies and SGW-regularized WGAN training")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sliced GW between two embedding files of equal size.
    Sgw(SgwArgs),
    /// Full GW discrepancy (entropic, or exact over permutations).
    Gw(GwArgs),
    /// Per-label entropic GW between two labeled embedding files.
    EvalRelational(EvalArgs),
    /// Train on the synthetic low/high-quality domains.
    Train(TrainArgs),
    /// PSNR and SSIM between two images.
    Metrics(MetricsArgs),
    /// Write CSV series for plotting.
    ExportPlotdata(ExportArgs),
}

#[derive(Debug, Args)]
pub struct SgwArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    /// Number of random projections.
    #[arg(long, default_value_t = 256, value_parser = clap::value_parser!(u64).range(1..))]
    pub projections: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Compare a seeded random subset of this many points from each file.
    #[arg(long)]
    pub subsample: Option<usize>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct GwArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    /// Entropic regularization; defaults to 0.01 * median squared distance of A.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Maximum outer iterations of the entropic solver.
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    /// Exact minimum over permutation couplings (at most 9 points).
    #[arg(long)]
    pub brute_force: bool,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    /// Fixed epsilon for every label.
    #[arg(long, conflicts_with = "epsilon_scale")]
    pub epsilon: Option<f64>,
    /// Per-label epsilon as this multiple of B's median squared distance.
    #[arg(long, default_value_t = 0.01)]
    pub epsilon_scale: f64,
    /// Points kept per label and side.
    #[arg(long, default_value_t = DEFAULT_EVAL_CAP)]
    pub cap: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// `key = value` file applied on top of the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "desk")]
    pub preset: String,
    /// Train without the sliced GW term.
    #[arg(long)]
    pub ablate_sgw: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Directory for `report.txt`, `generator.ckpt` and `critic.ckpt`.
    #[arg(long, default_value = "sgwgan-run")]
    pub out: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    /// Channels of raw-f64 images (PGM/PPM carry their own).
    #[arg(long, default_value_t = 1)]
    pub channels: usize,
    /// Dynamic range of raw-f64 images.
    #[arg(long, default_value_t = DEFAULT_RANGE)]
    pub range: f64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Training report to convert into a loss-curve CSV.
    #[arg(long, requires = "loss_out")]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub loss_out: Option<PathBuf>,
    /// Two embedding files for an SGW-versus-projections series.
    #[arg(long, num_args = 2, value_names = ["A", "B"], requires = "convergence_out")]
    pub sets: Option<Vec<PathBuf>>,
    #[arg(long)]
    pub convergence_out: Option<PathBuf>,
    /// Comma-separated projection counts.
    #[arg(long, value_delimiter = ',', default_value = "8,16,32,64,128,256")]
    pub levels: Vec<usize>,
    /// Independent bases per level.
    #[arg(long, default_value_t = 30)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub json: bool,
}

/// One printable value.
#[derive(Debug, Clone)]
enum Field {
    Str(String),
    Int(u64),
    Num(f64),
    Bool(bool),
    Empty,
}

impl Field {
    fn text(&self) -> String {
        match self {
            Field::Str(s) => s.clone(),
            Field::Int(v) => v.to_string(),
            Field::Num(v) => fmt_num(*v),
            Field::Bool(b) => b.to_string(),
            Field::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Field::Str(s) => Value::String(s.clone()),
            Field::Int(v) => Value::from(*v),
            Field::Num(v) if v.is_finite() => Value::from(*v),
            Field::Num(v) => Value::String(fmt_num(*v)),
            Field::Bool(b) => Value::Bool(*b),
            Field::Empty => Value::Null,
        }
    }
}

fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        v.to_string()
    }
}

impl From<&str> for Field {
    fn from(s: &str) -> Self {
        Field::Str(s.to_string())
    }
}
impl From<String> for Field {
    fn from(s: String) -> Self {
        Field::Str(s)
    }
}
impl From<&Path> for Field {
    fn from(p: &Path) -> Self {
        Field::Str(p.display().to_string())
    }
}
impl From<f64> for Field {
    fn from(v: f64) -> Self {
        Field::Num(v)
    }
}
impl From<usize> for Field {
    fn from(v: usize) -> Self {
        Field::Int(v as u64)
    }
}
impl From<u64> for Field {
    fn from(v: u64) -> Self {
        Field::Int(v)
    }
}
impl From<bool> for Field {
    fn from(v: bool) -> Self {
        Field::Bool(v)
    }
}
impl<T: Into<Field>> From<Option<T>> for Field {
    fn from(v: Option<T>) -> Self {
        v.map_or(Field::Empty, Into::into)
    }
}

#[derive(Debug)]
enum Body {
    Pairs(Vec<(String, Field)>),
    Table { header: Vec<String>, rows: Vec<Vec<Field>> },
}

/// Ordered sections of a command's output.
#[derive(Debug, Default)]
struct Doc {
    sections: Vec<(String, Body)>,
}

impl Doc {
    fn pairs(&mut self, name: &str) -> &mut Vec<(String, Field)> {
        self.sections.push((name.to_string(), Body::Pairs(Vec::new())));
        match &mut self.sections.last_mut().expect("just pushed").1 {
            Body::Pairs(p) => p,
            Body::Table { .. } => unreachable!(),
        }
    }

    fn table(&mut self, name: &str, header: &[&str], rows: Vec<Vec<Field>>) {
        let header = header.iter().map(|s| s.to_string()).collect();
        self.sections.push((name.to_string(), Body::Table { header, rows }));
    }

    fn render_text(&self) -> String {
        let mut s = String::new();
        for (name, body) in &self.sections {
            let _ = writeln!(s, "[{name}]");
            match body {
                Body::Pairs(p) => {
                    for (k, v) in p {
                        let _ = writeln!(s, "{k} = {}", v.text());
                    }
                }
                Body::Table { header, rows } => {
                    let _ = writeln!(s, "{}", header.join("\t"));
                    for row in rows {
                        let cells: Vec<String> = row.iter().map(Field::text).collect();
                        let _ = writeln!(s, "{}", cells.join("\t"));
                    }
                }
            }
        }
        s
    }

    fn render_json(&self) -> String {
        let mut root = Map::new();
        for (name, body) in &self.sections {
            let v = match body {
                Body::Pairs(p) => Value::Object(p.iter().map(|(k, v)| (k.clone(), v.json())).collect()),
                Body::Table { header, rows } => Value::Array(
                    rows.iter()
                        .map(|r| Value::Object(header.iter().cloned().zip(r.iter().map(Field::json)).collect()))
                        .collect(),
                ),
            };
            root.insert(name.clone(), v);
        }
        let mut s = serde_json::to_string_pretty(&Value::Object(root)).expect("serializable");
        s.push('\n');
        s
    }
}

fn put(p: &mut Vec<(String, Field)>, key: &str, v: impl Into<Field>) {
    p.push((key.to_string(), v.into()));
}

fn load(path: &Path) -> Result<EmbeddingSet> {
    load_embeddings(path, EmbeddingFormat::from_path(path))
}

/// Parses arguments, runs the command, writes its output to stdout and
/// errors to stderr, and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match execute(&cli, &mut out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = out.flush();
            eprintln!("error: {e}");
            if e.is_input_error() {
                2
            } else {
                1
            }
        }
    }
}

/// Runs a parsed command and writes its output to `out`.
pub fn execute<W: Write>(cli: &Cli, out: &mut W) -> Result<()> {
    let (doc, json) = match &cli.command {
        Command::Sgw(a) => (cmd_sgw(a)?, a.json),
        Command::Gw(a) => (cmd_gw(a)?, a.json),
        Command::EvalRelational(a) => (cmd_eval_relational(a)?, a.json),
        Command::Train(a) => (cmd_train(a)?, a.json),
        Command::Metrics(a) => (cmd_metrics(a)?, a.json),
        Command::ExportPlotdata(a) => (cmd_export_plotdata(a)?, a.json),
    };
    let text = if json { doc.render_json() } else { doc.render_text() };
    out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))?;
    out.flush().map_err(|e| Error::io("<stdout>", e))
}

fn subsample(set: &EmbeddingSet, k: usize, rng: &mut SeededRng) -> Result<EmbeddingSet> {
    if k > set.len() {
        return Err(Error::InvalidParameter(format!(
            "--subsample {k} exceeds set size {}",
            set.len()
        )));
    }
    let mut idx = rng.sample_indices(set.len(), k);
    idx.sort_unstable();
    set.select(&idx)
}

fn cmd_sgw(args: &SgwArgs) -> Result<Doc> {
    let mut doc = Doc::default();
    let cfg = doc.pairs("config");
    put(cfg, "command", "sgw");
    put(cfg, "a", args.a.as_path());
    put(cfg, "b", args.b.as_path());
    put(cfg, "projections", args.projections);
    put(cfg, "seed", args.seed);
    put(cfg, "subsample", args.subsample);

    let mut x = load(&args.a)?;
    let mut y = load(&args.b)?;
    let root = SeededRng::new(args.seed);
    if let Some(k) = args.subsample {
        x = subsample(&x, k, &mut root.child(1))?;
        y = subsample(&y, k, &mut root.child(2))?;
    }
    if x.len() != y.len() {
        return Err(Error::SizeMismatch(format!(
            "{} has {} points but {} has {}; use --subsample",
            args.a.display(),
            x.len(),
            args.b.display(),
            y.len()
        )));
    }
    let basis = ProjectionBasis::from_seed(root.child_seed(0), args.projections as usize, x.dim())?;
    let r = sgw(&x, &y, &basis)?;
    let res = doc.pairs("result");
    put(res, "value", r.value);
    put(res, "slice_mean", r.value);
    put(res, "slice_sd", r.slice_sd());
    put(res, "points", x.len());
    put(res, "basis_seed", basis.seed());
    Ok(doc)
}

fn cmd_gw(args: &GwArgs) -> Result<Doc> {
    let x = load(&args.a)?;
    let y = load(&args.b)?;
    let mut doc = Doc::default();
    let method = if args.brute_force { "brute-force" } else { "entropic" };
    let eps = match args.epsilon {
        Some(e) => e,
        None => default_epsilon(&pairwise_distances(&x)),
    };
    let cfg = doc.pairs("config");
    put(cfg, "command", "gw");
    put(cfg, "a", args.a.as_path());
    put(cfg, "b", args.b.as_path());
    put(cfg, "method", method);
    put(cfg, "epsilon", (!args.brute_force).then_some(eps));
    put(cfg, "max_iter", args.max_iter);

    let r = if args.brute_force {
        gw_bruteforce_with_cap(&x, &y, crate::gw_exact::DEFAULT_BRUTE_FORCE_CAP)?
    } else {
        let opts = EntropicOptions {
            max_outer: args.max_iter,
            ..EntropicOptions::new(eps)
        };
        gw_entropic(&x, &y, &opts)?
    };
    let res = doc.pairs("result");
    put(res, "value", r.value);
    put(res, "iterations", r.iterations);
    put(res, "converged", r.converged);
    put(
        res,
        "bias_bound",
        (!args.brute_force).then(|| entropic_bias_bound(eps, x.len(), y.len())),
    );
    Ok(doc)
}

fn cmd_eval_relational(args: &EvalArgs) -> Result<Doc> {
    let mut doc = Doc::default();
    let rule = match args.epsilon {
        Some(e) => EpsilonRule::Fixed(e),
        None => EpsilonRule::ReferenceMedian(args.epsilon_scale),
    };
    let cfg = doc.pairs("config");
    put(cfg, "command", "eval-relational");
    put(cfg, "a", args.a.as_path());
    put(cfg, "b", args.b.as_path());
    match rule {
        EpsilonRule::Fixed(e) => put(cfg, "epsilon", e),
        EpsilonRule::ReferenceMedian(s) => put(cfg, "epsilon_scale", s),
    }
    put(cfg, "cap", args.cap);
    put(cfg, "seed", args.seed);
    if args.cap < 2 {
        return Err(Error::InvalidParameter("--cap must be at least 2".into()));
    }

    let x = load(&args.a)?;
    let y = load(&args.b)?;
    let in_a = split_by_label(&x).map_err(|e| label_error(&args.a, e))?;
    split_by_label(&y).map_err(|e| label_error(&args.b, e))?;
    let opts = EntropicOptions {
        epsilon: 1.0,
        ..eval_options()
    };
    let rel = relational_gw(&x, &y, rule, args.cap, args.seed, &opts)?;

    let mut rows: Vec<(String, Vec<Field>)> = rel
        .per_class
        .iter()
        .map(|c| {
            let row = vec![
                c.label.clone().into(),
                c.value.into(),
                c.epsilon.into(),
                entropic_bias_bound(c.epsilon, c.points, c.points).into(),
                c.points.into(),
                c.converged.into(),
                Field::Empty,
            ];
            (c.label.clone(), row)
        })
        .collect();
    for label in &rel.unmatched {
        let side = if in_a.contains_key(label) { "b" } else { "a" };
        let mut row = vec![Field::from(label.as_str())];
        row.extend(std::iter::repeat_n(Field::Empty, 5));
        row.push(format!("warning: label missing from {side}").into());
        rows.push((label.clone(), row));
    }
    rows.sort_by(|p, q| p.0.cmp(&q.0));
    doc.table("classes", &RELATIONAL_COLUMNS, rows.into_iter().map(|r| r.1).collect());
    let s = doc.pairs("summary");
    put(s, "overall", rel.overall);
    put(s, "labels", rel.per_class.len());
    put(s, "unmatched", rel.unmatched.len());
    Ok(doc)
}

fn label_error(path: &Path, e: Error) -> Error {
    match e {
        Error::MissingLabels => Error::InvalidParameter(format!("{} has no labels", path.display())),
        other => other,
    }
}

fn resolve_train_config(args: &TrainArgs) -> Result<TrainConfig> {
    let preset: Preset = args.preset.parse()?;
    let mut cfg = TrainConfig::preset(preset);
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        cfg.apply_kv(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
    }
    for kv in &args.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.ablate_sgw {
        cfg.weights.lambda_sgw = 0.0;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(args: &TrainArgs) -> Result<Doc> {
    let cfg = resolve_train_config(args)?;
    let mut doc = Doc::default();
    let c = doc.pairs("config");
    put(c, "command", "train");
    put(c, "preset", args.preset.as_str());
    put(c, "config_file", args.config.as_deref());
    put(c, "out", args.out.as_path());
    for (k, v) in cfg.entries() {
        put(c, k, v);
    }

    let ds = make_synthetic(&cfg.dataset)?;
    let outcome = train(&cfg, &ds, Some(&args.out))?;
    let mut report = outcome.report;
    // Relative to the report so the file does not depend on where it lives.
    report.checkpoint = Some(PathBuf::from("generator.ckpt"));
    let report_path = args.out.join("report.txt");
    std::fs::write(&report_path, write_report(&report)).map_err(|e| Error::io(&report_path, e))?;

    let s = doc.pairs("summary");
    put(s, "steps", report.history.len());
    put(s, "initial_sgw", report.initial_sgw);
    put(s, "initial_generator_sgw", report.initial_generator_sgw);
    put(s, "final_sgw", report.final_sgw);
    put(s, "sgw_ratio", report.final_sgw / report.initial_sgw);
    if let Some(rel) = &report.final_relational {
        put(s, "relational_overall", rel.overall);
        for cls in &rel.per_class {
            put(s, &format!("relational.{}", cls.label), cls.value);
        }
    }
    put(s, "report", report_path.as_path());
    put(s, "generator", args.out.join("generator.ckpt").as_path());
    put(s, "critic", args.out.join("critic.ckpt").as_path());
    Ok(doc)
}

fn cmd_metrics(args: &MetricsArgs) -> Result<Doc> {
    let mut doc = Doc::default();
    let cfg = doc.pairs("config");
    put(cfg, "command", "metrics");
    put(cfg, "a", args.a.as_path());
    put(cfg, "b", args.b.as_path());
    put(cfg, "channels", args.channels);
    put(cfg, "range", args.range);
    let a = load_image(&args.a, args.channels, args.range)?;
    let b = load_image(&args.b, args.channels, args.range)?;
    let p = psnr(&a, &b)?;
    let s = ssim(&a, &b)?;
    let res = doc.pairs("result");
    put(res, "width", a.width());
    put(res, "height", a.height());
    put(res, "channels", a.channels());
    put(res, "psnr", p);
    put(res, "ssim", s);
    Ok(doc)
}

fn cmd_export_plotdata(args: &ExportArgs) -> Result<Doc> {
    if args.report.is_none() && args.sets.is_none() {
        return Err(Error::InvalidParameter("nothing to export: give --report and/or --sets".into()));
    }
    let mut doc = Doc::default();
    let cfg = doc.pairs("config");
    put(cfg, "command", "export-plotdata");
    put(cfg, "report", args.report.as_deref());
    put(cfg, "loss_out", args.loss_out.as_deref());
    let sets = args.sets.as_deref().unwrap_or_default();
    put(cfg, "sets", (!sets.is_empty()).then(|| {
        sets.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(" ")
    }));
    put(cfg, "convergence_out", args.convergence_out.as_deref());
    let levels: Vec<String> = args.levels.iter().map(|l| l.to_string()).collect();
    put(cfg, "levels", levels.join(","));
    put(cfg, "repeats", args.repeats);
    put(cfg, "seed", args.seed);

    let mut written = Vec::new();
    if let (Some(report), Some(out)) = (&args.report, &args.loss_out) {
        let rows = export_losses(report, out)?;
        written.push(("loss_rows", rows));
    }
    if let (Some(out), [a, b]) = (&args.convergence_out, sets) {
        let rows = export_convergence(a, b, out, &args.levels, args.repeats, args.seed)?;
        written.push(("convergence_rows", rows));
    }
    let res = doc.pairs("result");
    for (k, v) in written {
        put(res, k, v);
    }
    Ok(doc)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}

/// Loss curves from a report; returns the number of data rows.
pub fn export_losses(report: &Path, out: &Path) -> Result<usize> {
    let text = std::fs::read_to_string(report).map_err(|e| Error::io(report, e))?;
    let parsed = parse_report(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", report.display())))?;
    let mut w = csv::Writer::from_path(out).map_err(|e| csv_error(out, e))?;
    w.write_record(LOSS_CSV_COLUMNS).map_err(|e| csv_error(out, e))?;
    for rec in &parsed.history {
        let l = &rec.losses;
        let row = [
            rec.step.to_string(),
            fmt_num(l.rmse_term),
            fmt_num(l.sgw_term),
            fmt_num(l.adv_term),
            fmt_num(l.total_generator),
        ];
        w.write_record(&row).map_err(|e| csv_error(out, e))?;
    }
    w.flush().map_err(|e| Error::io(out, e))?;
    Ok(parsed.history.len())
}

/// Mean and sample sd of SGW over `repeats` independent bases at each
/// projection count; returns the number of data rows.
pub fn export_convergence(a: &Path, b: &Path, out: &Path, levels: &[usize], repeats: usize, seed: u64) -> Result<usize> {
    if repeats < 2 {
        return Err(Error::InvalidParameter("--repeats must be at least 2".into()));
    }
    if levels.is_empty() || levels.contains(&0) {
        return Err(Error::InvalidParameter("--levels must be positive projection counts".into()));
    }
    let x = load(a)?;
    let y = load(b)?;
    let root = SeededRng::new(seed);
    let mut w = csv::Writer::from_path(out).map_err(|e| csv_error(out, e))?;
    w.write_record(CONVERGENCE_CSV_COLUMNS).map_err(|e| csv_error(out, e))?;
    for (i, &l) in levels.iter().enumerate() {
        let stream = root.child(i as u64);
        let values = (0..repeats)
            .map(|r| {
                let basis = ProjectionBasis::from_seed(stream.child_seed(r as u64), l, x.dim())?;
                Ok(sgw(&x, &y, &basis)?.value)
            })
            .collect::<Result<Vec<f64>>>()?;
        let mean = values.iter().sum::<f64>() / repeats as f64;
        let sd = crate::gw_sliced::sample_sd(&values);
        w.write_record([l.to_string(), fmt_num(mean), fmt_num(sd), repeats.to_string()])
            .map_err(|e| csv_error(out, e))?;
    }
    w.flush().map_err(|e| Error::io(out, e))?;
    Ok(levels.len())
}
