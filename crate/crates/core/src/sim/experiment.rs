use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{strategy_profile, Corpus, SimConfig, SimError, Strategy, World};
use crate::audit::bft_f;
use crate::commitment::Hash;
use crate::coordination::SpId;

pub const RESULT_SCHEMA_VERSION: u32 = 1;
/// One-sided 95% normal quantile used for the pass/fail bounds.
const Z95: f64 = 1.96;

/// Genesis seed for trial `trial` of an experiment seeded with `seed`.
pub fn trial_genesis(seed: u64, trial: u64) -> Hash {
    let mut h = Sha256::new();
    h.update(b"trial");
    h.update(seed.to_be_bytes());
    h.update(trial.to_be_bytes());
    h.finalize().into()
}

pub fn run_trial(
    config: &SimConfig,
    corpus: &Arc<Corpus>,
    strategies: BTreeMap<SpId, Strategy>,
    seed: u64,
    trial: u64,
) -> Result<World, SimError> {
    let mut world = World::new(
        config,
        Arc::clone(corpus),
        strategies,
        trial_genesis(seed, trial),
    )?;
    world.run(config.epochs);
    Ok(world)
}

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn focal_profile(
    config: &SimConfig,
    focal: &Strategy,
    background: &Strategy,
) -> BTreeMap<SpId, Strategy> {
    strategy_profile(
        config.sp_count,
        background,
        &BTreeMap::from([(SpId(0), focal.clone())]),
    )
}

fn check_trials(trials: usize) -> Result<(), SimError> {
    if trials == 0 {
        return Err(SimError::Config("trials must be at least 1".into()));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyUtility {
    pub strategy: String,
    pub mean_utility: f64,
    pub std_error: f64,
    pub trials: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub schema_version: u32,
    pub scenario: String,
    pub seed: u64,
    pub trials: usize,
    pub rows: Vec<StrategyUtility>,
}

/// Monte Carlo net utility of SP 0 playing `focal` against `background`.
pub fn estimate_utility(
    scenario: &str,
    config: &SimConfig,
    focal: &Strategy,
    background: &Strategy,
    trials: usize,
    seed: u64,
) -> Result<ExperimentResult, SimError> {
    check_trials(trials)?;
    let corpus = Corpus::build(config)?;
    let profile = focal_profile(config, focal, background);
    let nets = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            run_trial(config, &corpus, profile.clone(), seed, t).map(|w| w.utility[&SpId(0)].net())
        })
        .collect::<Result<Vec<f64>, SimError>>()?;
    let (mean, se) = mean_se(&nets);
    Ok(ExperimentResult {
        schema_version: RESULT_SCHEMA_VERSION,
        scenario: scenario.to_string(),
        seed,
        trials,
        rows: vec![StrategyUtility {
            strategy: focal.name.clone(),
            mean_utility: mean,
            std_error: se,
            trials,
        }],
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub schema_version: u32,
    pub scenario: String,
    pub seed: u64,
    pub trials: usize,
    pub epochs: u64,
    /// Mean per-SP net utility grouped by strategy name.
    pub rows: Vec<StrategyUtility>,
    pub slash_events: usize,
    pub min_score: f64,
    pub max_score: f64,
    pub conserved: bool,
}

/// Run a fixed strategy profile for `trials` trials.
pub fn simulate(
    scenario: &str,
    config: &SimConfig,
    profile: &BTreeMap<SpId, Strategy>,
    trials: usize,
    seed: u64,
) -> Result<SimulationReport, SimError> {
    check_trials(trials)?;
    let corpus = Corpus::build(config)?;
    struct Trial {
        nets: BTreeMap<String, Vec<f64>>,
        slashes: usize,
        min: f64,
        max: f64,
        conserved: bool,
    }
    let per_trial = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let w = run_trial(config, &corpus, profile.clone(), seed, t)?;
            let mut nets: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for (sp, u) in &w.utility {
                nets.entry(profile[sp].name.clone())
                    .or_default()
                    .push(u.net());
            }
            let scores = w.reports.iter().flat_map(|r| r.scores.values().copied());
            let (min, max) = scores.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
                (lo.min(s), hi.max(s))
            });
            Ok(Trial {
                nets,
                slashes: w.slash_count(),
                min,
                max,
                conserved: w.ledger.is_conserved(),
            })
        })
        .collect::<Result<Vec<Trial>, SimError>>()?;

    let mut grouped: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for t in &per_trial {
        for (name, v) in &t.nets {
            grouped.entry(name.clone()).or_default().extend(v);
        }
    }
    Ok(SimulationReport {
        schema_version: RESULT_SCHEMA_VERSION,
        scenario: scenario.to_string(),
        seed,
        trials,
        epochs: config.epochs,
        rows: grouped
            .into_iter()
            .map(|(strategy, v)| {
                let (mean, se) = mean_se(&v);
                StrategyUtility {
                    strategy,
                    mean_utility: mean,
                    std_error: se,
                    trials,
                }
            })
            .collect(),
        slash_events: per_trial.iter().map(|t| t.slashes).sum(),
        min_score: per_trial
            .iter()
            .map(|t| t.min)
            .fold(f64::INFINITY, f64::min),
        max_score: per_trial
            .iter()
            .map(|t| t.max)
            .fold(f64::NEG_INFINITY, f64::max),
        conserved: per_trial.iter().all(|t| t.conserved),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NashRow {
    pub deviation: String,
    pub honest_mean: f64,
    pub deviation_mean: f64,
    /// Mean of paired `U(honest) - U(deviation)` over trials.
    pub diff_mean: f64,
    pub diff_se: f64,
    pub diff_lower_95: f64,
    /// Behaves exactly like the honest strategy; excluded from the verdict.
    pub identical_to_honest: bool,
    pub passes: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NashTable {
    pub schema_version: u32,
    pub scenario: String,
    pub seed: u64,
    pub trials: usize,
    pub rows: Vec<NashRow>,
    pub passed: bool,
}

/// Compare SP 0 playing honestly with SP 0 playing each deviation while
/// everyone else is honest. Trial `t` of every profile shares the same
/// genesis seed, so differences are paired.
pub fn nash_test(
    scenario: &str,
    config: &SimConfig,
    deviations: &[Strategy],
    trials: usize,
    seed: u64,
) -> Result<NashTable, SimError> {
    check_trials(trials)?;
    let corpus = Corpus::build(config)?;
    let honest = Strategy::honest();
    let honest_profile = focal_profile(config, &honest, &honest);
    let per_trial = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let h = run_trial(config, &corpus, honest_profile.clone(), seed, t)?.utility[&SpId(0)]
                .net();
            let d = deviations
                .iter()
                .map(|dev| {
                    run_trial(
                        config,
                        &corpus,
                        focal_profile(config, dev, &honest),
                        seed,
                        t,
                    )
                    .map(|w| w.utility[&SpId(0)].net())
                })
                .collect::<Result<Vec<f64>, SimError>>()?;
            Ok((h, d))
        })
        .collect::<Result<Vec<(f64, Vec<f64>)>, SimError>>()?;

    let honest_nets: Vec<f64> = per_trial.iter().map(|(h, _)| *h).collect();
    let (honest_mean, _) = mean_se(&honest_nets);
    let rows: Vec<NashRow> = deviations
        .iter()
        .enumerate()
        .map(|(i, dev)| {
            let dev_nets: Vec<f64> = per_trial.iter().map(|(_, d)| d[i]).collect();
            let diffs: Vec<f64> = per_trial.iter().map(|(h, d)| h - d[i]).collect();
            let (diff_mean, diff_se) = mean_se(&diffs);
            let identical = dev.same_behavior(&honest);
            let lower = diff_mean - Z95 * diff_se;
            NashRow {
                deviation: dev.name.clone(),
                honest_mean,
                deviation_mean: mean_se(&dev_nets).0,
                diff_mean,
                diff_se,
                diff_lower_95: lower,
                identical_to_honest: identical,
                passes: if identical {
                    diff_mean == 0.0
                } else {
                    lower > 0.0
                },
            }
        })
        .collect();
    Ok(NashTable {
        schema_version: RESULT_SCHEMA_VERSION,
        scenario: scenario.to_string(),
        seed,
        trials,
        passed: rows.iter().all(|r| r.passes),
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DishonestyReport {
    pub schema_version: u32,
    pub scenario: String,
    pub seed: u64,
    pub trials: usize,
    /// Mean over trials of `(auditor rewards - audit-the-auditor slashes) / reported 1s`.
    pub per_one_utility: f64,
    pub per_one_se: f64,
    /// `rwd_au - p_ata * S_ata`.
    pub closed_form: f64,
    pub within_3_sigma: bool,
    pub negative: bool,
    pub colluder_net_mean: f64,
    pub defector_net_mean: f64,
    /// Paired gain of SP 0 switching to truthful zero-reporting.
    pub defector_gain_mean: f64,
    pub defector_gain_se: f64,
    pub defector_improves: bool,
    pub passed: bool,
}

/// Every SP stores nothing, rubber-stamps and publishes all-ones boards.
pub fn mutual_dishonesty_test(
    scenario: &str,
    config: &SimConfig,
    trials: usize,
    seed: u64,
) -> Result<DishonestyReport, SimError> {
    check_trials(trials)?;
    let corpus = Corpus::build(config)?;
    let colluder = Strategy::preset("mutual_dishonest").expect("preset");
    let defector = Strategy::preset("truthful_defector").expect("preset");
    let all = focal_profile(config, &colluder, &colluder);
    let with_defector = focal_profile(config, &defector, &colluder);

    let per_trial = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let w = run_trial(config, &corpus, all.clone(), seed, t)?;
            let (mut gain, mut ones) = (0.0, 0u64);
            for u in w.utility.values() {
                gain += u.auditor_rewards - u.ata_slash_losses;
                ones += u.reported_ones;
            }
            let colluder_net = w.utility[&SpId(0)].net();
            let d = run_trial(config, &corpus, with_defector.clone(), seed, t)?;
            let defector_net = d.utility[&SpId(0)].net();
            Ok((
                (ones > 0).then(|| gain / ones as f64),
                colluder_net,
                defector_net,
            ))
        })
        .collect::<Result<Vec<_>, SimError>>()?;

    let per_one: Vec<f64> = per_trial.iter().filter_map(|(p, _, _)| *p).collect();
    if per_one.is_empty() {
        return Err(SimError::Config(
            "no scoreboard entries were reported in any trial".into(),
        ));
    }
    let (per_one_utility, per_one_se) = mean_se(&per_one);
    let econ = &config.econ;
    let closed_form = econ.rwd_au - econ.p_ata * econ.s_ata;
    // Rewards settle in 1e-9 token units, which bounds rounding per entry.
    let within = (per_one_utility - closed_form).abs() <= 3.0 * per_one_se + 1e-9;
    let gains: Vec<f64> = per_trial.iter().map(|(_, c, d)| d - c).collect();
    let (gain_mean, gain_se) = mean_se(&gains);
    let improves = gain_mean - Z95 * gain_se > 0.0;
    let negative = per_one_utility < 0.0;
    Ok(DishonestyReport {
        schema_version: RESULT_SCHEMA_VERSION,
        scenario: scenario.to_string(),
        seed,
        trials,
        per_one_utility,
        per_one_se,
        closed_form,
        within_3_sigma: within,
        negative,
        colluder_net_mean: mean_se(&per_trial.iter().map(|t| t.1).collect::<Vec<_>>()).0,
        defector_net_mean: mean_se(&per_trial.iter().map(|t| t.2).collect::<Vec<_>>()).0,
        defector_gain_mean: gain_mean,
        defector_gain_se: gain_se,
        defector_improves: improves,
        passed: negative && within && improves,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoalitionRow {
    pub coalition_size: usize,
    pub deviation: String,
    /// Per-epoch change in the coalition's aggregate net utility.
    pub gain_mean: f64,
    pub gain_se: f64,
    pub gain_upper_95: f64,
    pub epsilon_budget: f64,
    /// Largest change in any non-member's score in any epoch.
    pub max_outsider_score_shift: f64,
    pub passes: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoalitionTable {
    pub schema_version: u32,
    pub scenario: String,
    pub seed: u64,
    pub trials: usize,
    pub f: usize,
    pub rows: Vec<CoalitionRow>,
    pub passed: bool,
}

/// SPs `0..size` jointly play each deviation as one coalition. The budget
/// defaults to the coalition's per-epoch proof verification and retention
/// spend in the all-honest run.
pub fn coalition_test(
    scenario: &str,
    config: &SimConfig,
    sizes: &[usize],
    deviations: &[Strategy],
    trials: usize,
    seed: u64,
    epsilon_budget: Option<f64>,
) -> Result<CoalitionTable, SimError> {
    check_trials(trials)?;
    let f = bft_f(config.sp_count as usize);
    if let Some(&bad) = sizes.iter().find(|&&s| s > f) {
        return Err(SimError::Config(format!(
            "coalition size {bad} exceeds f = {f}"
        )));
    }
    let corpus = Corpus::build(config)?;
    let honest = Strategy::honest();
    let honest_profile = strategy_profile(config.sp_count, &honest, &BTreeMap::new());
    let epochs = config.epochs as f64;
    let cases: Vec<(usize, &Strategy)> = sizes
        .iter()
        .flat_map(|&s| deviations.iter().map(move |d| (s, d)))
        .collect();

    struct Outcome {
        gain: f64,
        budget: f64,
        shift: f64,
    }
    let per_trial = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let base = run_trial(config, &corpus, honest_profile.clone(), seed, t)?;
            cases
                .iter()
                .map(|&(size, dev)| {
                    let members: Vec<SpId> = (0..size as u32).map(SpId).collect();
                    let overrides = members
                        .iter()
                        .map(|&m| (m, dev.clone().in_coalition(1)))
                        .collect();
                    let w = run_trial(
                        config,
                        &corpus,
                        strategy_profile(config.sp_count, &honest, &overrides),
                        seed,
                        t,
                    )?;
                    // Float sums start at -0.0; adding 0.0 keeps empty coalitions at +0.
                    let total = |world: &World| {
                        members.iter().map(|m| world.utility[m].net()).sum::<f64>() + 0.0
                    };
                    let budget = (members
                        .iter()
                        .map(|m| base.utility[m].proof_overhead_costs)
                        .sum::<f64>()
                        + 0.0)
                        / epochs;
                    let mut shift: f64 = 0.0;
                    for (rb, rw) in base.reports.iter().zip(&w.reports) {
                        for (sp, s) in &rb.scores {
                            if !members.contains(sp) {
                                let other = rw.scores.get(sp).copied().unwrap_or(f64::NAN);
                                shift = shift.max((s - other).abs());
                            }
                        }
                    }
                    Ok(Outcome {
                        gain: (total(&w) - total(&base)) / epochs,
                        budget,
                        shift,
                    })
                })
                .collect::<Result<Vec<Outcome>, SimError>>()
        })
        .collect::<Result<Vec<_>, SimError>>()?;

    let rows: Vec<CoalitionRow> = cases
        .iter()
        .enumerate()
        .map(|(i, &(size, dev))| {
            let gains: Vec<f64> = per_trial.iter().map(|o| o[i].gain).collect();
            let (gain_mean, gain_se) = mean_se(&gains);
            let budget = epsilon_budget.unwrap_or_else(|| {
                mean_se(&per_trial.iter().map(|o| o[i].budget).collect::<Vec<_>>()).0
            });
            let shift = per_trial.iter().map(|o| o[i].shift).fold(0.0, f64::max);
            let upper = gain_mean + Z95 * gain_se;
            CoalitionRow {
                coalition_size: size,
                deviation: dev.name.clone(),
                gain_mean,
                gain_se,
                gain_upper_95: upper,
                epsilon_budget: budget,
                max_outsider_score_shift: shift,
                passes: upper <= budget && shift <= 1e-12,
            }
        })
        .collect();
    Ok(CoalitionTable {
        schema_version: RESULT_SCHEMA_VERSION,
        scenario: scenario.to_string(),
        seed,
        trials,
        f,
        passed: rows.iter().all(|r| r.passes),
        rows,
    })
}
