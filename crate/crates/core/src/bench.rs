//! Paired evaluation of booking policies on shared demand realizations.
//!
//! Every method replays the same event lists; final states are always scored
//! with the routing heuristic, whatever cost the method planned against.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::InstanceSpec;
use crate::io;
use crate::policies::{CachedCost, ExactCost, TerminalCost};
use crate::simulator::{run_episode, stream_rng, total_profit, Policy, Realizations};

pub const REPORT_FORMAT: &str = "bookctl-report/1";

/// A policy under evaluation.
pub struct Method {
    pub name: String,
    pub policy: Box<dyn Policy>,
    /// Seconds spent before any request arrived (data, training, tables).
    pub offline_secs: f64,
    pub config: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub name: String,
    pub config: serde_json::Value,
    pub profits: Vec<f64>,
    pub gaps: Vec<f64>,
    pub mean_profit: f64,
    pub mean_gap: f64,
    pub median_gap: f64,
    /// Wall-clock seconds per realization (decisions plus final routing).
    #[serde(skip)]
    pub online_secs: Vec<f64>,
    #[serde(skip)]
    pub offline_secs: f64,
}

impl MethodResult {
    pub fn mean_online_secs(&self) -> f64 {
        mean(&self.online_secs)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalProvenance {
    pub instance_hash: String,
    pub realization_seed: u64,
    pub seed: u64,
    pub event_hashes: Vec<String>,
}

/// Timings are kept in memory only so that the exported results stay
/// reproducible; see [`export_timings`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format: String,
    pub provenance: EvalProvenance,
    /// Highest profit over all methods, per realization.
    pub best: Vec<f64>,
    pub methods: Vec<MethodResult>,
}

impl EvalReport {
    pub fn method(&self, name: &str) -> Option<&MethodResult> {
        self.methods.iter().find(|m| m.name == name)
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let k = s.len() / 2;
    if s.len() % 2 == 1 {
        s[k]
    } else {
        (s[k - 1] + s[k]) / 2.0
    }
}

/// Percentage shortfall from the best profit; zero when the best is zero.
pub fn gap(best: f64, profit: f64) -> f64 {
    if best == 0.0 {
        0.0
    } else {
        100.0 * (best - profit) / best.abs()
    }
}

/// Scores per-realization profits of several methods against each other.
pub fn gap_table(profits: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let count = profits.first().map_or(0, Vec::len);
    let best: Vec<f64> = (0..count)
        .map(|r| profits.iter().map(|p| p[r]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let gaps = profits
        .iter()
        .map(|p| p.iter().zip(&best).map(|(&x, &b)| gap(b, x)).collect())
        .collect();
    (best, gaps)
}

/// Replays every method on every realization. Method `m` on realization `r`
/// draws its randomness from stream `(m << 32) | r` of `seed`.
pub fn evaluate(spec: &InstanceSpec, methods: &[Method], realizations: &Realizations, seed: u64) -> Result<EvalReport> {
    if methods.is_empty() {
        return Err(Error::InvalidArgument("no methods to evaluate".into()));
    }
    if realizations.is_empty() {
        return Err(Error::EmptyData("no realizations".into()));
    }
    realizations.check_instance(spec)?;
    let cost = CachedCost::new(ExactCost::new(spec));

    let mut runs: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(methods.len());
    for (m, method) in methods.iter().enumerate() {
        let per: Vec<(f64, f64)> = (0..realizations.len())
            .into_par_iter()
            .map(|r| {
                let mut rng = stream_rng(seed, ((m as u64) << 32) | r as u64);
                let events = realizations.events(r);
                let start = Instant::now();
                let traj = run_episode(spec, &method.policy, &events, &mut rng)?;
                let gamma = cost.cost(&traj.final_state.w)?;
                Ok((total_profit(&traj, gamma), start.elapsed().as_secs_f64()))
            })
            .collect::<Result<_>>()?;
        runs.push(per.into_iter().unzip());
    }

    let profits: Vec<Vec<f64>> = runs.iter().map(|r| r.0.clone()).collect();
    let (best, gaps) = gap_table(&profits);
    let methods = methods
        .iter()
        .zip(runs)
        .zip(gaps)
        .map(|((method, (profits, online)), gaps)| MethodResult {
            name: method.name.clone(),
            config: method.config.clone(),
            mean_profit: mean(&profits),
            mean_gap: mean(&gaps),
            median_gap: median(&gaps),
            profits,
            gaps,
            online_secs: online,
            offline_secs: method.offline_secs,
        })
        .collect();
    Ok(EvalReport {
        format: REPORT_FORMAT.to_string(),
        provenance: EvalProvenance {
            instance_hash: spec.hash(),
            realization_seed: realizations.seed,
            seed,
            event_hashes: (0..realizations.len()).map(|r| realizations.event_hash(r)).collect(),
        },
        best,
        methods,
    })
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

/// Writes `<prefix>.json` (full report) and `<prefix>.csv` (one row per
/// method and realization). Both are pure functions of the report.
pub fn export(report: &EvalReport, prefix: &Path) -> Result<Vec<PathBuf>> {
    if report.methods.is_empty() {
        return Err(Error::InvalidArgument("report has no methods".into()));
    }
    let json = with_suffix(prefix, ".json");
    let csv = with_suffix(prefix, ".csv");
    io::write_json(&json, report)?;

    let mut out = String::new();
    let _ = writeln!(out, "# format: {REPORT_FORMAT}");
    let _ = writeln!(out, "# instance_hash: {}", report.provenance.instance_hash);
    let _ = writeln!(out, "# realization_seed: {}", report.provenance.realization_seed);
    let _ = writeln!(out, "# seed: {}", report.provenance.seed);
    out.push_str("method,realization,profit,gap\n");
    for m in &report.methods {
        for (r, (p, g)) in m.profits.iter().zip(&m.gaps).enumerate() {
            let _ = writeln!(out, "{},{r},{p},{g}", m.name);
        }
    }
    io::write_text(&csv, &out)?;
    Ok(vec![json, csv])
}

/// Per-method timing table. Wall-clock values differ between runs, so they
/// live in their own file.
pub fn export_timings(report: &EvalReport, path: &Path) -> Result<()> {
    let mut out = String::from("method,mean_profit,online_secs_mean,offline_secs\n");
    for m in &report.methods {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            m.name,
            m.mean_profit,
            m.mean_online_secs(),
            m.offline_secs
        );
    }
    io::write_text(path, &out)
}

/// Plain-text table of mean profit, gaps and times.
pub fn summary_table(report: &EvalReport) -> String {
    let mut out = format!(
        "{:<18} {:>12} {:>10} {:>10} {:>12} {:>12}\n",
        "method", "mean profit", "mean gap", "med gap", "online s", "offline s"
    );
    for m in &report.methods {
        let _ = writeln!(
            out,
            "{:<18} {:>12.2} {:>9.2}% {:>9.2}% {:>12.3} {:>12.2}",
            m.name,
            m.mean_profit,
            m.mean_gap,
            m.median_gap,
            m.mean_online_secs(),
            m.offline_secs
        );
    }
    out
}
