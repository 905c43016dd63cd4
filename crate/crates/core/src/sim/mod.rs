//! Multi-actor epoch simulator with pluggable provider strategies and
//! Monte Carlo utility estimation.

mod experiment;
mod world;

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use experiment::{
    coalition_test, estimate_utility, mean_se, mutual_dishonesty_test, nash_test, run_trial,
    simulate, trial_genesis, CoalitionRow, CoalitionTable, DishonestyReport, ExperimentResult,
    NashRow, NashTable, SimulationReport, StrategyUtility, RESULT_SCHEMA_VERSION,
};
pub use world::{EpochReport, World};

use crate::codec::CodingParams;
use crate::commitment::MerkleTree;
use crate::coordination::SpId;
use crate::economics::EconomicParams;
use crate::prep::{self, Blob, BlobId, PreparedBlob};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Prep(#[from] prep::PrepError),
    #[error(transparent)]
    Ledger(#[from] crate::coordination::LedgerError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChallengeResponse {
    /// Prove when holding the chunk; otherwise stay silent.
    Honest,
    /// Never respond.
    Ignore,
    /// Prove when holding the chunk; otherwise fetch it from the network.
    RetrieveExternally,
    /// Prove when holding the chunk; otherwise send random bytes.
    Forge,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditorPolicy {
    VerifyAndRetain,
    /// Record 1 without looking at the proof.
    RubberStamp,
    ReportAllZero,
    /// Verify honestly but keep no proofs.
    DropProofs,
    /// Rubber-stamp coalition members, verify everyone else.
    RubberStampAllies,
    /// Verify coalition members, record 0 for everyone else.
    SabotageOutsiders,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidencePolicy {
    Submit,
    Withhold,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreboardPolicy {
    Truthful,
    AllOnes,
    Withhold,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Strategy {
    #[serde(default)]
    pub name: String,
    /// Fraction of assigned chunks actually kept.
    pub storage_policy: f64,
    pub challenge_response: ChallengeResponse,
    pub auditor_policy: AuditorPolicy,
    pub evidence_policy: EvidencePolicy,
    pub scoreboard_policy: ScoreboardPolicy,
    #[serde(default)]
    pub coalition: Option<u32>,
}

impl Strategy {
    pub fn honest() -> Self {
        Strategy {
            name: "honest".into(),
            storage_policy: 1.0,
            challenge_response: ChallengeResponse::Honest,
            auditor_policy: AuditorPolicy::VerifyAndRetain,
            evidence_policy: EvidencePolicy::Submit,
            scoreboard_policy: ScoreboardPolicy::Truthful,
            coalition: None,
        }
    }

    fn named(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    /// Named strategies. `store_<f>` keeps fraction `f` and answers honestly.
    pub fn preset(name: &str) -> Option<Strategy> {
        let h = Strategy::honest();
        let s = match name {
            "honest" => h,
            "ignore" => Strategy {
                storage_policy: 0.0,
                challenge_response: ChallengeResponse::Ignore,
                ..h
            },
            "retrieve_externally" => Strategy {
                storage_policy: 0.0,
                challenge_response: ChallengeResponse::RetrieveExternally,
                ..h
            },
            "forge" => Strategy {
                storage_policy: 0.0,
                challenge_response: ChallengeResponse::Forge,
                ..h
            },
            "rubber_stamp" => Strategy {
                auditor_policy: AuditorPolicy::RubberStamp,
                ..h
            },
            "drop_proofs" => Strategy {
                auditor_policy: AuditorPolicy::DropProofs,
                ..h
            },
            "report_all_zero" => Strategy {
                auditor_policy: AuditorPolicy::ReportAllZero,
                ..h
            },
            "withhold_scoreboard" => Strategy {
                scoreboard_policy: ScoreboardPolicy::Withhold,
                ..h
            },
            "withhold_evidence" => Strategy {
                evidence_policy: EvidencePolicy::Withhold,
                ..h
            },
            "mutual_dishonest" => Strategy {
                storage_policy: 0.0,
                challenge_response: ChallengeResponse::Ignore,
                auditor_policy: AuditorPolicy::RubberStamp,
                evidence_policy: EvidencePolicy::Withhold,
                scoreboard_policy: ScoreboardPolicy::AllOnes,
                ..h
            },
            "truthful_defector" => Strategy {
                storage_policy: 0.0,
                challenge_response: ChallengeResponse::Ignore,
                ..h
            },
            "mutual_rubber_stamp" => Strategy {
                auditor_policy: AuditorPolicy::RubberStampAllies,
                ..h
            },
            "sabotage_outsiders" => Strategy {
                auditor_policy: AuditorPolicy::SabotageOutsiders,
                ..h
            },
            _ => {
                let frac: f64 = name.strip_prefix("store_")?.parse().ok()?;
                if !(0.0..=1.0).contains(&frac) {
                    return None;
                }
                Strategy {
                    storage_policy: frac,
                    ..h
                }
            }
        };
        Some(s.named(name))
    }

    pub fn in_coalition(mut self, id: u32) -> Self {
        self.coalition = Some(id);
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(0.0..=1.0).contains(&self.storage_policy) {
            return Err(SimError::Config(format!(
                "strategy {}: storage_policy {} outside [0, 1]",
                self.name, self.storage_policy
            )));
        }
        Ok(())
    }

    /// Same behavior, ignoring the label.
    pub fn same_behavior(&self, other: &Strategy) -> bool {
        Strategy {
            name: String::new(),
            ..self.clone()
        } == Strategy {
            name: String::new(),
            ..other.clone()
        }
    }
}

/// Per-SP accounting over a run. All amounts in tokens.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UtilityLedger {
    pub storage_rewards: f64,
    pub auditor_rewards: f64,
    pub evidence_rewards: f64,
    pub slash_losses: f64,
    pub storage_costs: f64,
    pub retrieval_costs: f64,
    pub proof_overhead_costs: f64,
    pub fees: f64,
    /// Portion of `slash_losses` from failed audit-the-auditor checks.
    pub ata_slash_losses: f64,
    pub reported_ones: u64,
    pub slash_events: u64,
}

impl UtilityLedger {
    pub fn net(&self) -> f64 {
        self.storage_rewards + self.auditor_rewards + self.evidence_rewards
            - self.slash_losses
            - self.storage_costs
            - self.retrieval_costs
            - self.proof_overhead_costs
            - self.fees
    }

    pub fn absorb(&mut self, o: &UtilityLedger) {
        self.storage_rewards += o.storage_rewards;
        self.auditor_rewards += o.auditor_rewards;
        self.evidence_rewards += o.evidence_rewards;
        self.slash_losses += o.slash_losses;
        self.storage_costs += o.storage_costs;
        self.retrieval_costs += o.retrieval_costs;
        self.proof_overhead_costs += o.proof_overhead_costs;
        self.fees += o.fees;
        self.ata_slash_losses += o.ata_slash_losses;
        self.reported_ones += o.reported_ones;
        self.slash_events += o.slash_events;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workload {
    pub blobs: u32,
    pub chunksets_per_blob: u32,
    pub chunk_size: usize,
    pub sample_size: usize,
}

/// Everything a trial needs besides strategies and the trial seed.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub sp_count: u32,
    pub econ: EconomicParams,
    pub coding: CodingParams,
    pub epochs: u64,
    pub workload: Workload,
    /// Initial stake per SP, tokens.
    pub stake: f64,
    pub capacity_bytes: u64,
    /// Seeds the blob contents.
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        self.econ
            .validate()
            .map_err(|e| SimError::Config(e.to_string()))?;
        if (self.sp_count as usize) < self.coding.n() {
            return Err(SimError::Config(format!(
                "{} SPs cannot hold {} distinct chunks per chunkset",
                self.sp_count,
                self.coding.n()
            )));
        }
        if self.epochs == 0 {
            return Err(SimError::Config("epochs must be positive".into()));
        }
        let w = &self.workload;
        if w.blobs == 0 || w.chunksets_per_blob == 0 || w.sample_size == 0 {
            return Err(SimError::Config("workload sizes must be positive".into()));
        }
        self.coding
            .check_chunk_size(w.chunk_size)
            .map_err(|e| SimError::Config(e.to_string()))?;
        if !(self.stake >= 0.0) {
            return Err(SimError::Config("stake must be non-negative".into()));
        }
        Ok(())
    }

    pub fn total_chunks(&self) -> u64 {
        self.workload.blobs as u64
            * self.workload.chunksets_per_blob as u64
            * self.coding.n() as u64
    }

    /// Expected chunks held per SP.
    pub fn chunks_per_sp(&self) -> f64 {
        self.total_chunks() as f64 / self.sp_count as f64
    }
}

/// Prepared blobs and per-chunk sample trees, shared read-only across trials.
#[derive(Debug)]
pub struct Corpus {
    pub blobs: Vec<PreparedBlob>,
    pub trees: BTreeMap<BlobId, Vec<Vec<MerkleTree>>>,
}

impl Corpus {
    pub fn build(config: &SimConfig) -> Result<Arc<Corpus>, SimError> {
        config.validate()?;
        let w = &config.workload;
        let chunkset_size = w.chunk_size * config.coding.k();
        let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
        let mut blobs = Vec::new();
        let mut trees = BTreeMap::new();
        for b in 0..w.blobs {
            let mut bytes = vec![0u8; chunkset_size * w.chunksets_per_blob as usize];
            rng.fill_bytes(&mut bytes);
            let blob = Blob {
                id: BlobId(format!("blob{b}")),
                bytes,
                paid_duration: config.epochs,
            };
            let prepared = prep::prepare(&blob, &config.coding, chunkset_size, w.sample_size)?;
            let t = prepared
                .chunksets
                .iter()
                .map(|cs| {
                    cs.chunks
                        .iter()
                        .map(|c| {
                            prep::chunk_tree(&c.payload, w.sample_size).expect("non-empty chunk")
                        })
                        .collect()
                })
                .collect();
            trees.insert(blob.id.clone(), t);
            blobs.push(prepared);
        }
        Ok(Arc::new(Corpus { blobs, trees }))
    }

    pub fn tree(&self, blob: &BlobId, chunkset: u32, chunk: u32) -> &MerkleTree {
        &self.trees[blob][chunkset as usize][chunk as usize]
    }
}

/// Strategy for every SP: `background` except where `overrides` says otherwise.
pub fn strategy_profile(
    sp_count: u32,
    background: &Strategy,
    overrides: &BTreeMap<SpId, Strategy>,
) -> BTreeMap<SpId, Strategy> {
    (0..sp_count)
        .map(|i| {
            let id = SpId(i);
            (
                id,
                overrides
                    .get(&id)
                    .cloned()
                    .unwrap_or_else(|| background.clone()),
            )
        })
        .collect()
}
