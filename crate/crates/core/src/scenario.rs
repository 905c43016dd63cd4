//! TOML scenario files: one base configuration, optional `[[grid]]` overrides,
//! and the experiment to run at every grid point.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::CodingParams;
use crate::coordination::SpId;
use crate::economics::{check_all, EconomicParams, IncentiveReport};
use crate::sim::{
    coalition_test, mutual_dishonesty_test, nash_test, simulate, CoalitionTable, DishonestyReport,
    NashTable, SimConfig, SimError, SimulationReport, Strategy, Workload,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scenario: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Simulate,
    Nash,
    MutualDishonesty,
    Coalition,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CodingSpec {
    scheme: String,
    k: usize,
    m: usize,
    #[serde(default)]
    d: Option<usize>,
}

impl CodingSpec {
    fn build(&self) -> Result<CodingParams, ScenarioError> {
        let r = match self.scheme.as_str() {
            "reed_solomon" => CodingParams::reed_solomon(self.k, self.m),
            "clay" => CodingParams::clay(self.k, self.m, self.d.unwrap_or(self.k + self.m - 1)),
            other => {
                return Err(ScenarioError::Invalid(format!(
                    "unknown coding scheme {other:?}"
                )))
            }
        };
        r.map_err(|e| ScenarioError::Invalid(e.to_string()))
    }
}

/// A preset name or a fully spelled-out strategy.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
enum StrategySpec {
    Preset(String),
    Inline(Strategy),
}

impl StrategySpec {
    fn resolve(&self) -> Result<Strategy, ScenarioError> {
        let s = match self {
            StrategySpec::Preset(name) => Strategy::preset(name)
                .ok_or_else(|| ScenarioError::Invalid(format!("unknown strategy {name:?}")))?,
            StrategySpec::Inline(s) => {
                let mut s = s.clone();
                if s.name.is_empty() {
                    s.name = "custom".into();
                }
                s
            }
        };
        s.validate()?;
        Ok(s)
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StrategiesSpec {
    #[serde(default = "honest_spec")]
    background: StrategySpec,
    /// SP index (as a string key) to strategy.
    #[serde(default)]
    assignments: BTreeMap<String, StrategySpec>,
    #[serde(default)]
    deviations: Vec<StrategySpec>,
    #[serde(default)]
    coalition_sizes: Vec<usize>,
    #[serde(default)]
    epsilon_budget: Option<f64>,
}

fn honest_spec() -> StrategySpec {
    StrategySpec::Preset("honest".into())
}

impl Default for StrategiesSpec {
    fn default() -> Self {
        StrategiesSpec {
            background: honest_spec(),
            assignments: BTreeMap::new(),
            deviations: Vec::new(),
            coalition_sizes: Vec::new(),
            epsilon_budget: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PointDoc {
    name: String,
    experiment: ExperimentKind,
    seed: u64,
    trials: usize,
    sp_count: u32,
    epochs: u64,
    stake: f64,
    capacity_bytes: u64,
    #[serde(default = "default_prct_fake")]
    prct_fake: f64,
    coding: CodingSpec,
    workload: Workload,
    econ: EconomicParams,
    #[serde(default)]
    strategies: StrategiesSpec,
    #[serde(default)]
    label: Option<String>,
}

fn default_prct_fake() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq)]
pub struct StrategySet {
    pub background: Strategy,
    pub assignments: BTreeMap<SpId, Strategy>,
    pub deviations: Vec<Strategy>,
    pub coalition_sizes: Vec<usize>,
    pub epsilon_budget: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioPoint {
    pub label: String,
    pub config: SimConfig,
    pub strategies: StrategySet,
    pub prct_fake: f64,
}

impl ScenarioPoint {
    pub fn profile(&self) -> BTreeMap<SpId, Strategy> {
        crate::sim::strategy_profile(
            self.config.sp_count,
            &self.strategies.background,
            &self.strategies.assignments,
        )
    }

    /// Incentive inequalities for this point; committed storage is the
    /// expected chunk count per SP.
    pub fn incentive_report(&self) -> Result<IncentiveReport, ScenarioError> {
        check_all(
            &self.config.econ,
            self.prct_fake,
            self.config.chunks_per_sp(),
        )
        .map_err(|e| ScenarioError::Invalid(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub trials: usize,
    pub points: Vec<ScenarioPoint>,
}

fn merge(base: &mut toml::Value, over: &toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Scenario::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Scenario, ScenarioError> {
        let mut doc: toml::Value = text
            .parse()
            .map_err(|e: toml::de::Error| ScenarioError::Parse(e.to_string()))?;
        let table = doc
            .as_table_mut()
            .ok_or_else(|| ScenarioError::Parse("top level must be a table".into()))?;
        let grid = match table.remove("grid") {
            None => vec![toml::Value::Table(Default::default())],
            Some(toml::Value::Array(a)) if !a.is_empty() => a,
            Some(_) => {
                return Err(ScenarioError::Parse(
                    "grid must be a non-empty array of tables".into(),
                ))
            }
        };
        let mut points = Vec::with_capacity(grid.len());
        let mut head: Option<(String, ExperimentKind, u64, usize)> = None;
        for (i, over) in grid.iter().enumerate() {
            if !over.is_table() {
                return Err(ScenarioError::Parse(format!(
                    "grid entry {i} is not a table"
                )));
            }
            let mut merged = doc.clone();
            merge(&mut merged, over);
            let p: PointDoc = merged
                .try_into()
                .map_err(|e: toml::de::Error| ScenarioError::Parse(e.to_string()))?;
            let key = (p.name.clone(), p.experiment, p.seed, p.trials);
            match &head {
                None => head = Some(key),
                Some(h) if *h != key => {
                    return Err(ScenarioError::Invalid(
                        "grid entries may not change name, experiment, seed or trials".into(),
                    ))
                }
                Some(_) => {}
            }
            points.push(Self::build_point(p, i)?);
        }
        let (name, experiment, seed, trials) = head.expect("at least one grid point");
        if trials == 0 {
            return Err(ScenarioError::Invalid("trials must be at least 1".into()));
        }
        Ok(Scenario {
            name,
            experiment,
            seed,
            trials,
            points,
        })
    }

    fn build_point(p: PointDoc, index: usize) -> Result<ScenarioPoint, ScenarioError> {
        let config = SimConfig {
            sp_count: p.sp_count,
            econ: p.econ,
            coding: p.coding.build()?,
            epochs: p.epochs,
            workload: p.workload,
            stake: p.stake,
            capacity_bytes: p.capacity_bytes,
            seed: p.seed,
        };
        config.validate()?;
        let s = &p.strategies;
        let mut assignments = BTreeMap::new();
        for (key, spec) in &s.assignments {
            let idx: u32 = key.parse().map_err(|_| {
                ScenarioError::Invalid(format!("assignment key {key:?} is not an SP index"))
            })?;
            if idx >= config.sp_count {
                return Err(ScenarioError::Invalid(format!(
                    "assignment to sp{idx} but only {} SPs",
                    config.sp_count
                )));
            }
            assignments.insert(SpId(idx), spec.resolve()?);
        }
        let strategies = StrategySet {
            background: s.background.resolve()?,
            assignments,
            deviations: s
                .deviations
                .iter()
                .map(StrategySpec::resolve)
                .collect::<Result<_, _>>()?,
            coalition_sizes: s.coalition_sizes.clone(),
            epsilon_budget: s.epsilon_budget,
        };
        match p.experiment {
            ExperimentKind::Nash if strategies.deviations.is_empty() => {
                return Err(ScenarioError::Invalid("nash experiment needs strategies.deviations".into()))
            }
            ExperimentKind::Coalition if strategies.deviations.is_empty() || strategies.coalition_sizes.is_empty() => {
                return Err(ScenarioError::Invalid(
                    "coalition experiment needs strategies.deviations and strategies.coalition_sizes".into(),
                ))
            }
            _ => {}
        }
        Ok(ScenarioPoint {
            label: p.label.unwrap_or_else(|| format!("point{index}")),
            config,
            strategies,
            prct_fake: p.prct_fake,
        })
    }

    /// Run the experiment at every grid point.
    pub fn run(&self, trials: usize, seed: u64) -> Result<Vec<PointOutcome>, ScenarioError> {
        self.points
            .iter()
            .map(|pt| {
                let s = &pt.strategies;
                let c = &pt.config;
                let result = match self.experiment {
                    ExperimentKind::Simulate => ExperimentOutput::Simulate(simulate(
                        &self.name,
                        c,
                        &pt.profile(),
                        trials,
                        seed,
                    )?),
                    ExperimentKind::Nash => ExperimentOutput::Nash(nash_test(
                        &self.name,
                        c,
                        &s.deviations,
                        trials,
                        seed,
                    )?),
                    ExperimentKind::MutualDishonesty => ExperimentOutput::MutualDishonesty(
                        mutual_dishonesty_test(&self.name, c, trials, seed)?,
                    ),
                    ExperimentKind::Coalition => ExperimentOutput::Coalition(coalition_test(
                        &self.name,
                        c,
                        &s.coalition_sizes,
                        &s.deviations,
                        trials,
                        seed,
                        s.epsilon_budget,
                    )?),
                };
                let all_honest = pt
                    .profile()
                    .values()
                    .all(|st| st.same_behavior(&Strategy::honest()));
                Ok(PointOutcome {
                    label: pt.label.clone(),
                    incentives: pt.incentive_report()?,
                    passed: result.passed(all_honest),
                    result,
                })
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", content = "result", rename_all = "snake_case")]
pub enum ExperimentOutput {
    Simulate(SimulationReport),
    Nash(NashTable),
    MutualDishonesty(DishonestyReport),
    Coalition(CoalitionTable),
}

impl ExperimentOutput {
    /// Simulations pass when tokens are conserved and, for an all-honest
    /// profile, nobody is slashed and every score is 1.
    pub fn passed(&self, all_honest: bool) -> bool {
        match self {
            ExperimentOutput::Simulate(r) => {
                r.conserved && (!all_honest || (r.slash_events == 0 && r.min_score == 1.0))
            }
            ExperimentOutput::Nash(t) => t.passed,
            ExperimentOutput::MutualDishonesty(r) => r.passed,
            ExperimentOutput::Coalition(t) => t.passed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointOutcome {
    pub label: String,
    pub incentives: IncentiveReport,
    pub passed: bool,
    pub result: ExperimentOutput,
}
