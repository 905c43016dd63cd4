use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use hotstore_core::economics::{check_all, EconomicParams, IncentiveReport};
use hotstore_core::reliability::{
    availability, durability, nines, AvailabilityModel, FailureModel,
};
use serde::Serialize;

use crate::output::{ensure_dir, envelope, write_csv, write_json};
use crate::Verdict;

#[derive(Args, Debug)]
pub struct EconCheckArgs {
    /// Economic parameters, TOML or JSON (by extension).
    pub params: PathBuf,
    /// Fraction of committed storage a cheater fakes.
    #[arg(long, default_value_t = 0.1)]
    pub prct_fake: f64,
    /// Chunks committed by the SP under test.
    #[arg(long, default_value_t = 1.0)]
    pub committed: f64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub deterministic: bool,
    /// Exit 0 even if an inequality fails.
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct ReliabilityArgs {
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub deterministic: bool,
}

fn load_params(path: &Path) -> Result<EconomicParams> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let params = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    } else {
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    };
    Ok(params)
}

pub fn incentive_table(report: &IncentiveReport) -> String {
    let mut s = format!(
        "{:<18} {:>14} {:>3} {:>14} {:>10} {}\n",
        "check", "lhs", "", "rhs", "ratio", "ok"
    );
    for e in &report.entries {
        let rel = serde_json::to_value(e.relation)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default();
        s.push_str(&format!(
            "{:<18} {:>14.6e} {:>3} {:>14.6e} {:>10.3} {}\n",
            e.name,
            e.lhs,
            rel,
            e.rhs,
            e.ratio,
            if e.satisfied { "PASS" } else { "FAIL" }
        ));
    }
    if let Some(p) = report.min_audit_probability {
        s.push_str(&format!("minimum audit probability p_a = {p:.7}\n"));
    }
    s.push_str(&format!(
        "detection probability P_Sa = {:.4}\n",
        report.detection_probability
    ));
    s
}

pub fn econ_check(a: EconCheckArgs) -> Result<Verdict> {
    let params = load_params(&a.params)?;
    let report = check_all(&params, a.prct_fake, a.committed)?;
    ensure_dir(&a.out)?;
    write_json(
        &a.out.join("incentive_report.json"),
        &envelope("incentive_report", &report, a.deterministic)?,
    )?;
    print!("{}", incentive_table(&report));
    Ok(if report.all_satisfied() || a.force {
        Verdict::Pass
    } else {
        Verdict::Fail
    })
}

#[derive(Serialize)]
pub struct ReliabilityRow {
    pub n_nodes: u32,
    pub k: u32,
    pub m: u32,
    pub p_chunk_loss_on_trigger: f64,
    pub t_critical_hours: f64,
    pub p_data_loss: f64,
    pub durability_nines: u32,
    pub p_unavailable: f64,
    pub availability_nines: u32,
}

/// The reference model with varying parity, loss probability and repair window.
pub fn reliability_grid() -> Result<Vec<ReliabilityRow>> {
    let base = FailureModel::reference();
    let mut rows = Vec::new();
    for m in 3..=8 {
        for p in [0.25, 0.5] {
            for (mttd, mttr) in [(12.0, 12.0), (24.0, 12.0), (48.0, 24.0)] {
                let model = FailureModel {
                    m,
                    k: base.n_nodes - m,
                    p_chunk_loss_on_trigger: p,
                    mttd_hours: mttd,
                    mttr_rebuild_hours: mttr,
                    ..base
                };
                let loss = durability(&model)?;
                let unavail = availability(&AvailabilityModel::reference(loss))?;
                rows.push(ReliabilityRow {
                    n_nodes: model.n_nodes,
                    k: model.k,
                    m,
                    p_chunk_loss_on_trigger: p,
                    t_critical_hours: model.t_critical_hours(),
                    p_data_loss: loss,
                    durability_nines: nines(loss),
                    p_unavailable: unavail,
                    availability_nines: nines(unavail),
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_reliability(out: &Path, deterministic: bool) -> Result<Vec<ReliabilityRow>> {
    let rows = reliability_grid()?;
    let csv_rows = rows
        .iter()
        .map(|r| Ok((Vec::new(), serde_json::to_value(r)?)))
        .collect::<Result<Vec<_>>>()?;
    write_csv(&out.join("reliability.csv"), &[], &csv_rows)?;
    write_json(
        &out.join("reliability.json"),
        &envelope("reliability", &rows, deterministic)?,
    )?;
    Ok(rows)
}

pub fn reliability(a: ReliabilityArgs) -> Result<Verdict> {
    ensure_dir(&a.out)?;
    let rows = write_reliability(&a.out, a.deterministic)?;
    println!(
        "{:>3} {:>3} {:>3} {:>6} {:>8} {:>12} {:>6} {:>12} {:>6}",
        "n", "k", "m", "p", "T(h)", "P(loss)", "nines", "P(unavail)", "nines"
    );
    for r in &rows {
        println!(
            "{:>3} {:>3} {:>3} {:>6.2} {:>8.1} {:>12.4e} {:>6} {:>12.4e} {:>6}",
            r.n_nodes,
            r.k,
            r.m,
            r.p_chunk_loss_on_trigger,
            r.t_critical_hours,
            r.p_data_loss,
            r.durability_nines,
            r.p_unavailable,
            r.availability_nines
        );
    }
    Ok(Verdict::Pass)
}
