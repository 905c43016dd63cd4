use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use hotstore_core::coordination::SpId;
use hotstore_core::scenario::{
    ExperimentKind, ExperimentOutput, PointOutcome, Scenario, ScenarioPoint,
};
use hotstore_core::sim::{run_trial, strategy_profile, Corpus, Strategy};
use serde::Serialize;
use serde_json::Value;

use crate::output::{ensure_dir, envelope, write_csv, write_json};
use crate::reports::{incentive_table, write_reliability};
use crate::{Common, Verdict};

#[derive(Args, Debug)]
pub struct ScenarioArgs {
    /// Scenario file (TOML).
    pub scenario: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct NashArgs {
    #[command(flatten)]
    pub base: ScenarioArgs,
    /// Deviation preset; repeatable. Defaults to the scenario's list.
    #[arg(long = "deviation")]
    pub deviations: Vec<String>,
}

#[derive(Args, Debug)]
pub struct CoalitionArgs {
    #[command(flatten)]
    pub base: ScenarioArgs,
    /// Joint deviation preset; repeatable. Defaults to the scenario's list.
    #[arg(long = "deviation")]
    pub deviations: Vec<String>,
    /// Coalition size; repeatable. Defaults to the scenario's list.
    #[arg(long = "size")]
    pub sizes: Vec<usize>,
}

fn presets(names: &[String]) -> Result<Vec<Strategy>> {
    names
        .iter()
        .map(|n| Strategy::preset(n).with_context(|| format!("unknown strategy {n:?}")))
        .collect()
}

pub fn simulate(a: ScenarioArgs) -> Result<Verdict> {
    execute(a, Some(ExperimentKind::Simulate), |_| Ok(()))
}

pub fn nash(a: NashArgs) -> Result<Verdict> {
    let devs = presets(&a.deviations)?;
    execute(a.base, Some(ExperimentKind::Nash), |pt| {
        if !devs.is_empty() {
            pt.strategies.deviations = devs.clone();
        }
        if pt.strategies.deviations.is_empty() {
            bail!("no deviations given; pass --deviation or list them in the scenario");
        }
        Ok(())
    })
}

pub fn coalition(a: CoalitionArgs) -> Result<Verdict> {
    let devs = presets(&a.deviations)?;
    execute(a.base, Some(ExperimentKind::Coalition), |pt| {
        if !devs.is_empty() {
            pt.strategies.deviations = devs.clone();
        }
        if !a.sizes.is_empty() {
            pt.strategies.coalition_sizes = a.sizes.clone();
        }
        if pt.strategies.deviations.is_empty() || pt.strategies.coalition_sizes.is_empty() {
            bail!("coalition test needs deviations and sizes");
        }
        Ok(())
    })
}

pub fn run(a: ScenarioArgs) -> Result<Verdict> {
    execute(a, None, |_| Ok(()))
}

/// Profile replayed for the ledger log: the population each experiment is
/// measured against.
fn replay_profile(kind: ExperimentKind, pt: &ScenarioPoint) -> BTreeMap<SpId, Strategy> {
    let n = pt.config.sp_count;
    match kind {
        ExperimentKind::Simulate => pt.profile(),
        ExperimentKind::Nash | ExperimentKind::Coalition => {
            strategy_profile(n, &Strategy::honest(), &BTreeMap::new())
        }
        ExperimentKind::MutualDishonesty => strategy_profile(
            n,
            &Strategy::preset("mutual_dishonest").expect("preset"),
            &BTreeMap::new(),
        ),
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    scenario: &'a str,
    experiment: ExperimentKind,
    seed: u64,
    trials: usize,
    forced: bool,
    passed: bool,
    points: &'a [PointOutcome],
}

fn execute(
    a: ScenarioArgs,
    kind: Option<ExperimentKind>,
    mut adjust: impl FnMut(&mut ScenarioPoint) -> Result<()>,
) -> Result<Verdict> {
    let c = a.common;
    let mut scenario = Scenario::load(&a.scenario)?;
    if let Some(k) = kind {
        scenario.experiment = k;
    }
    for pt in &mut scenario.points {
        adjust(pt)?;
    }
    let seed = c.seed.unwrap_or(scenario.seed);
    let trials = c.trials.unwrap_or(scenario.trials);
    if trials == 0 {
        bail!("trials must be at least 1");
    }
    ensure_dir(&c.out)?;

    let reports = scenario
        .points
        .iter()
        .map(|pt| Ok((pt.label.clone(), pt.incentive_report()?)))
        .collect::<Result<Vec<_>>>()?;
    write_json(
        &c.out.join("incentive_report.json"),
        &envelope("incentive_report", &reports, c.deterministic)?,
    )?;
    let econ_ok = reports.iter().all(|(_, r)| r.all_satisfied());
    for (label, r) in &reports {
        println!("[{label}] incentive checks");
        print!("{}", incentive_table(r));
    }
    if !econ_ok && !c.force {
        eprintln!(
            "economic parameters fail the incentive checks; rerun with --force to simulate anyway"
        );
        return Ok(Verdict::Fail);
    }

    for (i, pt) in scenario.points.iter().enumerate() {
        let corpus = Corpus::build(&pt.config)?;
        let world = run_trial(
            &pt.config,
            &corpus,
            replay_profile(scenario.experiment, pt),
            seed,
            0,
        )?;
        let path = c.out.join(format!("ledger_{i}.ndjson"));
        let file = File::create(&path).with_context(|| format!("writing {}", path.display()))?;
        world.ledger.write_ndjson(BufWriter::new(file))?;
    }

    let outcomes = scenario.run(trials, seed)?;
    let passed = outcomes.iter().all(|o| o.passed);
    write_results_csv(&c.out, &outcomes)?;
    let summary = Summary {
        scenario: &scenario.name,
        experiment: scenario.experiment,
        seed,
        trials,
        forced: !econ_ok,
        passed,
        points: &outcomes,
    };
    write_json(
        &c.out.join("summary.json"),
        &envelope("experiment", &summary, c.deterministic)?,
    )?;
    write_reliability(&c.out, c.deterministic)?;

    for o in &outcomes {
        print_outcome(o);
    }
    println!(
        "{}: {}",
        scenario.name,
        if passed { "PASS" } else { "FAIL" }
    );
    Ok(if passed { Verdict::Pass } else { Verdict::Fail })
}

fn write_results_csv(out: &std::path::Path, outcomes: &[PointOutcome]) -> Result<()> {
    let mut rows: Vec<(Vec<String>, Value)> = Vec::new();
    for o in outcomes {
        let lead = vec![o.label.clone()];
        match &o.result {
            ExperimentOutput::Simulate(r) => {
                for row in &r.rows {
                    rows.push((lead.clone(), serde_json::to_value(row)?));
                }
            }
            ExperimentOutput::Nash(t) => {
                for row in &t.rows {
                    rows.push((lead.clone(), serde_json::to_value(row)?));
                }
            }
            ExperimentOutput::Coalition(t) => {
                for row in &t.rows {
                    rows.push((lead.clone(), serde_json::to_value(row)?));
                }
            }
            ExperimentOutput::MutualDishonesty(r) => {
                let mut v = serde_json::to_value(r)?;
                if let Value::Object(m) = &mut v {
                    for k in ["schema_version", "scenario", "seed"] {
                        m.remove(k);
                    }
                }
                rows.push((lead.clone(), v));
            }
        }
    }
    write_csv(&out.join("results.csv"), &["point"], &rows)
}

fn print_outcome(o: &PointOutcome) {
    let verdict = |p: bool| if p { "PASS" } else { "FAIL" };
    println!("[{}] {}", o.label, verdict(o.passed));
    match &o.result {
        ExperimentOutput::Simulate(r) => {
            for row in &r.rows {
                println!(
                    "  {:<22} utility {:>12.4} ± {:.4}",
                    row.strategy, row.mean_utility, row.std_error
                );
            }
            println!(
                "  slash events {}, scores in [{:.4}, {:.4}], conserved {}",
                r.slash_events, r.min_score, r.max_score, r.conserved
            );
        }
        ExperimentOutput::Nash(t) => {
            for r in &t.rows {
                println!(
                    "  {:<22} U(honest)-U(dev) {:>12.4} ± {:.4}  {}",
                    r.deviation,
                    r.diff_mean,
                    r.diff_se,
                    verdict(r.passes)
                );
            }
        }
        ExperimentOutput::MutualDishonesty(r) => {
            println!(
                "  per-'1' utility {:.6} ± {:.6} (closed form {:.6}); defector gain {:.4} ± {:.4}",
                r.per_one_utility,
                r.per_one_se,
                r.closed_form,
                r.defector_gain_mean,
                r.defector_gain_se
            );
        }
        ExperimentOutput::Coalition(t) => {
            for r in &t.rows {
                println!(
                    "  size {} {:<22} gain/epoch {:>10.4} (upper {:.4}, budget {:.4}) outsider shift {:.2e}  {}",
                    r.coalition_size,
                    r.deviation,
                    r.gain_mean,
                    r.gain_upper_95,
                    r.epsilon_budget,
                    r.max_outsider_score_shift,
                    verdict(r.passes)
                );
            }
        }
    }
}
