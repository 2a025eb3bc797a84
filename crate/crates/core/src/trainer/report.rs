//! Text serialization of [`TrainReport`].
//!
//! ```text
//! # sgw-gan training report v1
//! [config]
//! <key> = <value>          one line per TrainConfig key
//! [history]
//! step critic_loss gp_term rmse_term sgw_term adv_term total_generator
//! <one tab-separated row per generator step>
//! [snapshots]
//! step sgw_to_target relational_gw class_separation
//! <one tab-separated row per snapshot>
//! [summary]
//! <key> = <value>
//! ```
//!
//! Column headers are tab-separated as well. `critic_loss` is the
//! Wasserstein term of the last critic update before the generator step and
//! `gp_term` its unweighted gradient penalty.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::config::{Preset, TrainConfig};
use super::{Snapshot, StepRecord, TrainReport};
use crate::error::{Error, Result};
use crate::losses::LossBreakdown;

pub const REPORT_HEADER: &str = "# sgw-gan training report v1";
pub const HISTORY_COLUMNS: [&str; 7] = [
    "step",
    "critic_loss",
    "gp_term",
    "rmse_term",
    "sgw_term",
    "adv_term",
    "total_generator",
];
pub const SNAPSHOT_COLUMNS: [&str; 4] = ["step", "sgw_to_target", "relational_gw", "class_separation"];

pub fn write_report(r: &TrainReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{REPORT_HEADER}");
    let _ = writeln!(s, "[config]");
    s.push_str(&r.config.to_kv());
    let _ = writeln!(s, "[history]");
    let _ = writeln!(s, "{}", HISTORY_COLUMNS.join("\t"));
    for rec in &r.history {
        let l = &rec.losses;
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            rec.step, l.critic_loss, l.gp_term, l.rmse_term, l.sgw_term, l.adv_term, l.total_generator
        );
    }
    let _ = writeln!(s, "[snapshots]");
    let _ = writeln!(s, "{}", SNAPSHOT_COLUMNS.join("\t"));
    for snap in &r.snapshots {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}",
            snap.step, snap.sgw_to_target, snap.relational_gw, snap.class_separation
        );
    }
    let _ = writeln!(s, "[summary]");
    let _ = writeln!(s, "steps = {}", r.history.len());
    let _ = writeln!(s, "initial_sgw = {}", r.initial_sgw);
    let _ = writeln!(s, "initial_generator_sgw = {}", r.initial_generator_sgw);
    let _ = writeln!(s, "final_sgw = {}", r.final_sgw);
    let _ = writeln!(s, "eval_basis_seed = {}", r.eval_basis_seed);
    let _ = writeln!(s, "eval_subsample_seed = {}", r.eval_subsample_seed);
    if let Some(rel) = &r.final_relational {
        let _ = writeln!(s, "relational_overall = {}", rel.overall);
        for c in &rel.per_class {
            let _ = writeln!(s, "relational.{} = {}", c.label, c.value);
        }
    }
    if let Some(p) = &r.checkpoint {
        let _ = writeln!(s, "checkpoint = {}", p.display());
    }
    s
}

/// The machine-readable parts of a report file.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedReport {
    pub config: TrainConfig,
    pub history: Vec<StepRecord>,
    pub snapshots: Vec<Snapshot>,
    pub summary: BTreeMap<String, String>,
}

fn bad(line: usize, msg: impl Into<String>) -> Error {
    Error::InvalidConfig(format!("report line {line}: {}", msg.into()))
}

fn parse_row(line: usize, text: &str, width: usize) -> Result<Vec<f64>> {
    let cells: Vec<&str> = text.split('\t').collect();
    if cells.len() != width {
        return Err(bad(line, format!("expected {width} columns, found {}", cells.len())));
    }
    cells
        .iter()
        .map(|c| c.trim().parse::<f64>().map_err(|_| bad(line, format!("bad number {c:?}"))))
        .collect()
}

pub fn parse_report(text: &str) -> Result<ParsedReport> {
    let mut section = "";
    let mut config_text = String::new();
    let mut history = Vec::new();
    let mut snapshots = Vec::new();
    let mut summary = BTreeMap::new();
    let mut seen_header = false;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim_end_matches('\r');
        if i == 0 {
            if line != REPORT_HEADER {
                return Err(bad(lineno, "missing report header"));
            }
            seen_header = true;
            continue;
        }
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') && line.ends_with(']') {
            section = match line {
                "[config]" => "config",
                "[history]" => "history",
                "[snapshots]" => "snapshots",
                "[summary]" => "summary",
                other => return Err(bad(lineno, format!("unknown section {other}"))),
            };
            continue;
        }
        match section {
            "config" => {
                config_text.push_str(line);
                config_text.push('\n');
            }
            "history" => {
                if line.starts_with("step\t") {
                    continue;
                }
                let v = parse_row(lineno, line, HISTORY_COLUMNS.len())?;
                history.push(StepRecord {
                    step: v[0] as usize,
                    losses: LossBreakdown {
                        critic_loss: v[1],
                        gp_term: v[2],
                        rmse_term: v[3],
                        sgw_term: v[4],
                        adv_term: v[5],
                        total_generator: v[6],
                    },
                });
            }
            "snapshots" => {
                if line.starts_with("step\t") {
                    continue;
                }
                let v = parse_row(lineno, line, SNAPSHOT_COLUMNS.len())?;
                snapshots.push(Snapshot {
                    step: v[0] as usize,
                    sgw_to_target: v[1],
                    relational_gw: v[2],
                    class_separation: v[3],
                });
            }
            "summary" => {
                let (k, v) = line.split_once('=').ok_or_else(|| bad(lineno, "expected key = value"))?;
                summary.insert(k.trim().to_string(), v.trim().to_string());
            }
            _ => return Err(bad(lineno, "content outside a section")),
        }
    }
    if !seen_header {
        return Err(bad(1, "empty report"));
    }
    Ok(ParsedReport {
        config: TrainConfig::from_kv(&config_text, Preset::Desk)?,
        history,
        snapshots,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TrainReport {
        let losses = LossBreakdown {
            critic_loss: -0.125,
            gp_term: 0.3,
            rmse_term: 1.0 / 3.0,
            sgw_term: 2.5e-7,
            adv_term: -4.0,
            total_generator: 29.333333333333332,
        };
        TrainReport {
            config: TrainConfig::default(),
            history: (0..3).map(|step| StepRecord { step, losses: losses.clone() }).collect(),
            snapshots: vec![Snapshot {
                step: 3,
                sgw_to_target: 0.1,
                relational_gw: 0.7,
                class_separation: 0.41,
            }],
            initial_sgw: 3.25,
            initial_generator_sgw: 2.5,
            final_sgw: 0.1,
            final_relational: None,
            eval_basis_seed: 11,
            eval_subsample_seed: 12,
            checkpoint: None,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let r = sample();
        let parsed = parse_report(&write_report(&r)).unwrap();
        assert_eq!(parsed.config, r.config);
        assert_eq!(parsed.history, r.history);
        assert_eq!(parsed.snapshots, r.snapshots);
        assert_eq!(parsed.summary["final_sgw"], "0.1");
        assert_eq!(parsed.summary["steps"], "3");
    }

    #[test]
    fn empty_history_round_trips() {
        let r = TrainReport { history: vec![], ..sample() };
        let text = write_report(&r);
        assert!(text.contains(&format!("[history]\n{}\n[snapshots]", HISTORY_COLUMNS.join("\t"))));
        assert!(parse_report(&text).unwrap().history.is_empty());
    }

    #[test]
    fn rejects_damaged_reports() {
        let text = write_report(&sample());
        assert!(parse_report("").is_err());
        assert!(parse_report(&text.replacen(REPORT_HEADER, "# other", 1)).is_err());
        let short = text.replacen("\t-0.125", "", 1);
        let err = parse_report(&short).unwrap_err().to_string();
        assert!(err.contains("columns"), "{err}");
        assert!(parse_report(&text.replace("[summary]", "[extra]")).is_err());
    }
}
