//! Economic parameters, reward normalization, and the incentive inequalities
//! that keep honest storage and honest auditing the rational choice.
//!
//! All monetary values are in abstract tokens; `usd_per_token` converts for
//! reporting. Epochs default to one day, so `p_a` is a per-day probability.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EconError {
    #[error("invalid economic parameter: {0}")]
    InvalidParams(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EconomicParams {
    /// User storage fee, tokens per GB per month.
    #[serde(rename = "W")]
    pub w: f64,
    /// Storage reward per chunk per epoch (at score 1).
    pub rwd_st: f64,
    /// Reward per successful audit reported.
    pub rwd_au: f64,
    /// Per-epoch probability that a stored chunk is audited.
    pub p_a: f64,
    /// On-chain challenge budget; a score-`s` SP receives `round((1 - s^2) * C)`.
    #[serde(rename = "C")]
    pub onchain_challenges: u32,
    /// Probability a scoreboard 1-entry is re-checked on chain.
    pub p_ata: f64,
    /// Penalty for failing an on-chain storage challenge (also the evidence penalty).
    #[serde(rename = "S_a")]
    pub s_a: f64,
    /// Penalty per 1-entry that cannot be backed by a proof.
    #[serde(rename = "S_ata")]
    pub s_ata: f64,
    /// Fraction of a slashed amount paid to the reporter; the rest is burned.
    pub r_slash: f64,
    /// Cost to store one chunk for one epoch.
    pub c_s: f64,
    /// Cost to retrieve one chunk from the network.
    pub c_r: f64,
    /// Cost for an auditor to verify one proof.
    #[serde(default)]
    pub c_verify: f64,
    /// Cost for an auditor to retain one proof across the retention window.
    #[serde(default)]
    pub c_retain: f64,
    /// Auditor certainty threshold.
    pub epsilon: f64,
    /// Audits per GB per month, as produced by [`normalize_rewards`].
    #[serde(default)]
    pub n_a: f64,
    pub epochs_per_month: u32,
    pub auditors_per_audit: u32,
    /// Flat fee charged for each on-chain action.
    #[serde(default)]
    pub action_fee: f64,
    #[serde(default = "one")]
    pub usd_per_token: f64,
}

fn one() -> f64 {
    1.0
}

/// Reference cloud prices used to seed storage and retrieval costs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CloudPricing {
    /// $ per GB per month stored.
    pub storage_per_gb_month: f64,
    /// $ per GB transferred out.
    pub transfer_per_gb: f64,
    pub days_per_month: f64,
    /// Chunks that must be read to rebuild one chunk (`k`).
    pub retrieval_factor: f64,
    pub chunk_bytes: f64,
}

impl CloudPricing {
    /// S3 Standard, us-east-1: $0.023/GB/month storage, $0.02/GB transfer,
    /// with 1 MiB chunks rebuilt from 5 others.
    pub fn s3_standard() -> Self {
        CloudPricing {
            storage_per_gb_month: 0.023,
            transfer_per_gb: 0.02,
            days_per_month: 30.0,
            retrieval_factor: 5.0,
            chunk_bytes: 1024.0 * 1024.0,
        }
    }

    fn chunk_gb(&self) -> f64 {
        self.chunk_bytes / (1024.0 * 1024.0 * 1024.0)
    }

    /// $ to store one chunk for one day.
    pub fn storage_cost_per_chunk_day(&self) -> f64 {
        self.storage_per_gb_month / self.days_per_month * self.chunk_gb()
    }

    /// $ to rebuild one chunk by reading `retrieval_factor` chunks.
    pub fn retrieval_cost_per_chunk(&self) -> f64 {
        self.retrieval_factor * self.transfer_per_gb * self.chunk_gb()
    }
}

impl EconomicParams {
    /// Costs from [`CloudPricing::s3_standard`], one-day epochs, and rewards
    /// normalized from a fee of twice the cloud storage price.
    pub fn reference() -> Self {
        let pricing = CloudPricing::s3_standard();
        let chunks_per_gb = 1024.0;
        let p_a = 0.05;
        let auditors_per_audit = 7;
        let epochs_per_month = 30;
        let w = 2.0 * pricing.storage_per_gb_month;
        let sched = normalize_rewards(
            w,
            p_a,
            chunks_per_gb,
            auditors_per_audit,
            epochs_per_month,
            0.9,
        )
        .expect("reference parameters are valid");
        let c_r = pricing.retrieval_cost_per_chunk();
        let p_ata = 0.01;
        let epsilon = 0.01;
        EconomicParams {
            w,
            rwd_st: sched.rwd_st_per_chunk_epoch,
            rwd_au: sched.rwd_au,
            p_a,
            onchain_challenges: 50,
            p_ata,
            s_a: 10.0,
            s_ata: 10.0 * sched.rwd_au / (p_ata * epsilon),
            r_slash: 0.5,
            c_s: pricing.storage_cost_per_chunk_day(),
            c_r,
            c_verify: sched.rwd_au / 100.0,
            c_retain: sched.rwd_au / 100.0,
            epsilon,
            n_a: sched.n_a,
            epochs_per_month,
            auditors_per_audit,
            action_fee: 0.0,
            usd_per_token: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), EconError> {
        let money = [
            ("W", self.w),
            ("rwd_st", self.rwd_st),
            ("rwd_au", self.rwd_au),
            ("S_a", self.s_a),
            ("S_ata", self.s_ata),
            ("c_s", self.c_s),
            ("c_r", self.c_r),
            ("c_verify", self.c_verify),
            ("c_retain", self.c_retain),
            ("action_fee", self.action_fee),
            ("n_a", self.n_a),
        ];
        for (name, v) in money {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(EconError::InvalidParams(format!(
                    "{name} must be a finite value >= 0, got {v}"
                )));
            }
        }
        for (name, v) in [
            ("p_a", self.p_a),
            ("p_ata", self.p_ata),
            ("r_slash", self.r_slash),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(EconError::InvalidParams(format!(
                    "{name} must lie in [0, 1], got {v}"
                )));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(EconError::InvalidParams(format!(
                "epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        if self.epochs_per_month == 0 {
            return Err(EconError::InvalidParams(
                "epochs_per_month must be positive".into(),
            ));
        }
        if !(self.usd_per_token > 0.0) {
            return Err(EconError::InvalidParams(
                "usd_per_token must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardSchedule {
    pub rwd_st_per_chunk_epoch: f64,
    pub rwd_st_per_gb_month: f64,
    pub rwd_au: f64,
    pub n_a: f64,
}

impl RewardSchedule {
    /// `rwd_st_per_gb_month + n_a * rwd_au`, which should equal `W`.
    pub fn payout_per_gb_month(&self) -> f64 {
        self.rwd_st_per_gb_month + self.n_a * self.rwd_au
    }
}

/// Split the fee `w` between storage rewards (`split`) and auditor rewards.
///
/// `n_a = (p_a * chunks_per_gb) * auditors_per_audit * epochs_per_month`.
pub fn normalize_rewards(
    w: f64,
    p_a: f64,
    chunks_per_gb: f64,
    auditors_per_audit: u32,
    epochs_per_month: u32,
    split: f64,
) -> Result<RewardSchedule, EconError> {
    if !(split > 0.0 && split <= 1.0) {
        return Err(EconError::InvalidParams(format!(
            "split must lie in (0, 1], got {split}"
        )));
    }
    if !(w >= 0.0) || !(chunks_per_gb > 0.0) || epochs_per_month == 0 {
        return Err(EconError::InvalidParams(
            "W must be >= 0 and chunks_per_gb, epochs_per_month positive".into(),
        ));
    }
    let n_a = p_a * chunks_per_gb * auditors_per_audit as f64 * epochs_per_month as f64;
    let auditor_pool = w - split * w;
    let rwd_au = if auditor_pool == 0.0 {
        0.0
    } else if n_a > 0.0 {
        auditor_pool / n_a
    } else {
        return Err(EconError::InvalidParams(
            "no audits per GB-month (n_a = 0) but a nonzero auditor share".into(),
        ));
    };
    // Storage gets exactly what auditors do not.
    let rwd_st_per_gb_month = w - n_a * rwd_au;
    Ok(RewardSchedule {
        rwd_st_per_chunk_epoch: rwd_st_per_gb_month / (chunks_per_gb * epochs_per_month as f64),
        rwd_st_per_gb_month,
        rwd_au,
        n_a,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = ">=")]
    AtLeast,
    #[serde(rename = ">")]
    Exceeds,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncentiveEntry {
    pub name: String,
    pub lhs: f64,
    pub relation: Relation,
    pub rhs: f64,
    pub satisfied: bool,
    /// `lhs - rhs`.
    pub margin: f64,
    /// `lhs / rhs`; infinite when `rhs` is zero.
    pub ratio: f64,
}

impl IncentiveEntry {
    fn new(name: &str, lhs: f64, relation: Relation, rhs: f64) -> Self {
        let satisfied = match relation {
            Relation::AtLeast => lhs >= rhs,
            Relation::Exceeds => lhs > rhs,
        };
        let ratio = if rhs == 0.0 {
            if lhs > 0.0 {
                f64::INFINITY
            } else {
                1.0
            }
        } else {
            lhs / rhs
        };
        IncentiveEntry {
            name: name.to_string(),
            lhs,
            relation,
            rhs,
            satisfied,
            margin: lhs - rhs,
            ratio,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncentiveReport {
    pub entries: Vec<IncentiveEntry>,
    pub min_audit_probability: Option<f64>,
    pub detection_probability: f64,
}

impl IncentiveReport {
    pub fn all_satisfied(&self) -> bool {
        self.entries.iter().all(|e| e.satisfied)
    }

    /// Smallest `lhs / rhs` across entries.
    pub fn min_ratio(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.ratio)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Storage reward covers storage cost: `rwd_st >= c_s`.
pub fn check_participation(p: &EconomicParams) -> IncentiveEntry {
    IncentiveEntry::new("participation", p.rwd_st, Relation::AtLeast, p.c_s)
}

/// Storing beats deleting and retrieving on audit: `p_a * c_r >= c_s`.
/// Also returns the smallest audit probability that satisfies it, `c_s / c_r`.
pub fn check_store_vs_retrieve(p: &EconomicParams) -> Result<(IncentiveEntry, f64), EconError> {
    if !(p.c_r > 0.0) {
        return Err(EconError::InvalidParams("c_r must be positive".into()));
    }
    Ok((
        IncentiveEntry::new("store_vs_retrieve", p.p_a * p.c_r, Relation::AtLeast, p.c_s),
        p.c_s / p.c_r,
    ))
}

/// Expected on-chain sample count for an SP with expected score `1 - prct_fake`.
pub fn expected_onchain_samples(prct_fake: f64, onchain_challenges: u32) -> f64 {
    let score = 1.0 - prct_fake;
    (1.0 - score * score) * onchain_challenges as f64
}

/// Lower bound on the probability that on-chain sampling catches an SP
/// faking `prct_fake` of its storage.
pub fn detection_lower_bound(prct_fake: f64, onchain_challenges: u32) -> f64 {
    let samples = expected_onchain_samples(prct_fake, onchain_challenges);
    1.0 - (1.0 - prct_fake).powf(samples)
}

/// Expected slashing outweighs the reward for faking:
/// `P_Sa * S_a > (1 - p_a) * rwd_st * prct_fake * total_committed`.
pub fn check_fake_storage(
    p: &EconomicParams,
    prct_fake: f64,
    total_committed: f64,
) -> Result<(IncentiveEntry, f64), EconError> {
    if !(prct_fake > 0.0 && prct_fake <= 1.0) {
        return Err(EconError::InvalidParams(format!(
            "prct_fake must lie in (0, 1], got {prct_fake}"
        )));
    }
    let p_sa = detection_lower_bound(prct_fake, p.onchain_challenges);
    let rhs = (1.0 - p.p_a) * p.rwd_st * prct_fake * total_committed;
    Ok((
        IncentiveEntry::new("fake_storage", p_sa * p.s_a, Relation::Exceeds, rhs),
        p_sa,
    ))
}

/// Audit-the-auditor penalty: `S_ata >= rwd_au / (p_ata * epsilon)`.
pub fn check_ata_calibration(p: &EconomicParams) -> Result<IncentiveEntry, EconError> {
    if !(p.p_ata > 0.0) || !(p.epsilon > 0.0) {
        return Err(EconError::InvalidParams(
            "p_ata and epsilon must be positive".into(),
        ));
    }
    Ok(IncentiveEntry::new(
        "ata_calibration",
        p.s_ata,
        Relation::AtLeast,
        p.rwd_au / (p.p_ata * p.epsilon),
    ))
}

/// Retaining proofs beats re-fetching a whole chunk when re-checked:
/// `p_ata * c_r >= c_verify + c_retain`.
pub fn check_proof_retention(p: &EconomicParams) -> IncentiveEntry {
    IncentiveEntry::new(
        "proof_retention",
        p.p_ata * p.c_r,
        Relation::AtLeast,
        p.c_verify + p.c_retain,
    )
}

/// Auditing pays for itself: `rwd_au >= c_verify + c_retain`.
pub fn check_auditor_reward(p: &EconomicParams) -> IncentiveEntry {
    IncentiveEntry::new(
        "auditor_reward",
        p.rwd_au,
        Relation::AtLeast,
        p.c_verify + p.c_retain,
    )
}

pub fn check_all(
    p: &EconomicParams,
    prct_fake: f64,
    total_committed: f64,
) -> Result<IncentiveReport, EconError> {
    p.validate()?;
    let (retrieve, min_pa) = check_store_vs_retrieve(p)?;
    let (fake, p_sa) = check_fake_storage(p, prct_fake, total_committed)?;
    Ok(IncentiveReport {
        entries: vec![
            check_participation(p),
            retrieve,
            fake,
            check_ata_calibration(p)?,
            check_proof_retention(p),
            check_auditor_reward(p),
        ],
        min_audit_probability: Some(min_pa),
        detection_probability: p_sa,
    })
}
