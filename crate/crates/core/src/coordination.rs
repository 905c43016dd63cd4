//! In-process coordination ledger: blob registry, randomized chunk placement,
//! randomness beacon, reward disbursement, slashing and channel escrow.
//!
//! The ledger is single-writer. Every mutation appends a [`LedgerRecord`] to
//! the event log, which serializes as newline-delimited JSON.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codec::CodingParams;
use crate::commitment::{hex_hash, Hash, MerkleCommitment};
use crate::economics::EconomicParams;
use crate::prep::{blob_root_of, BlobId, BlobManifest};
use crate::tokens::Tokens;

const BYTES_PER_GB: f64 = 1024.0 * 1024.0 * 1024.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LedgerError {
    #[error("payment of {paid} is below the required {required}")]
    InsufficientPayment { paid: Tokens, required: Tokens },
    #[error("account {0} cannot cover {1}")]
    InsufficientBalance(AccountId, Tokens),
    #[error("blob {0} is already registered")]
    DuplicateBlob(BlobId),
    #[error("blob {0} not found")]
    UnknownBlob(BlobId),
    #[error("storage provider {0} not found")]
    UnknownSp(SpId),
    #[error("storage provider {0} already registered")]
    DuplicateSp(SpId),
    #[error("only {eligible} eligible storage providers for {needed} chunks per chunkset")]
    NotEnoughProviders { eligible: usize, needed: usize },
    #[error("chunk commitments do not match the blob root")]
    CommitmentMismatch,
    #[error("registration is malformed: {0}")]
    Malformed(String),
    #[error("blob {blob} is missing acknowledgements from {missing:?}")]
    IncompleteWrite { blob: BlobId, missing: Vec<SpId> },
    #[error("slash amount must be positive")]
    ZeroSlash,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpId(pub u32);

impl fmt::Display for SpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "sp{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccountId {
    Sp(SpId),
    External(u32),
}

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AccountId::Sp(id) => id.fmt(f),
            AccountId::External(id) => write!(f, "ext{id}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpAccount {
    pub sp_id: SpId,
    pub stake: Tokens,
    pub balance: Tokens,
    pub declared_capacity: u64,
    pub used_capacity: u64,
    pub active: bool,
}

impl SpAccount {
    fn spare(&self) -> u64 {
        self.declared_capacity.saturating_sub(self.used_capacity)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlobState {
    Registered,
    Ready,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ChunkRef {
    pub blob_id: BlobId,
    pub chunkset_index: u32,
    pub chunk_index: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlobMetadata {
    pub blob_id: BlobId,
    #[serde(with = "hex_hash")]
    pub blob_root: Hash,
    pub params: CodingParams,
    pub chunk_size: u64,
    pub sample_size: u64,
    pub size_bytes: u64,
    /// `chunk_roots[chunkset][chunk]`.
    pub chunk_roots: Vec<Vec<MerkleCommitment>>,
    /// `chunk_assignment[chunkset][chunk]` is the holder.
    pub chunk_assignment: Vec<Vec<SpId>>,
    pub state: BlobState,
    pub registered_epoch: u64,
    pub paid_until: u64,
    pub payment_escrow: Tokens,
}

impl BlobMetadata {
    pub fn holder(&self, chunkset: u32, chunk: u32) -> Option<SpId> {
        self.chunk_assignment
            .get(chunkset as usize)
            .and_then(|cs| cs.get(chunk as usize))
            .copied()
    }

    pub fn chunk_root(&self, chunkset: u32, chunk: u32) -> Option<&MerkleCommitment> {
        self.chunk_roots
            .get(chunkset as usize)
            .and_then(|cs| cs.get(chunk as usize))
    }

    pub fn samples_per_chunk(&self) -> u32 {
        self.chunk_size.div_ceil(self.sample_size) as u32
    }

    pub fn chunk_refs(&self) -> impl Iterator<Item = (ChunkRef, SpId)> + '_ {
        self.chunk_assignment
            .iter()
            .enumerate()
            .flat_map(move |(cs, holders)| {
                holders.iter().enumerate().map(move |(ci, &sp)| {
                    (
                        ChunkRef {
                            blob_id: self.blob_id.clone(),
                            chunkset_index: cs as u32,
                            chunk_index: ci as u32,
                        },
                        sp,
                    )
                })
            })
    }

    /// Stored and paid for during `epoch`.
    pub fn is_live(&self, epoch: u64) -> bool {
        self.state == BlobState::Ready && epoch < self.paid_until
    }
}

/// Client request to register a blob.
#[derive(Clone, Debug)]
pub struct BlobRegistration {
    pub blob_id: BlobId,
    pub blob_root: MerkleCommitment,
    pub params: CodingParams,
    pub chunk_size: u64,
    pub sample_size: u64,
    pub size_bytes: u64,
    pub chunk_roots: Vec<Vec<MerkleCommitment>>,
    pub duration_epochs: u64,
    pub payer: AccountId,
    pub payment: Tokens,
}

impl BlobRegistration {
    pub fn from_manifest(
        manifest: &BlobManifest,
        duration_epochs: u64,
        payer: AccountId,
        payment: Tokens,
    ) -> Self {
        BlobRegistration {
            blob_id: manifest.blob_id.clone(),
            blob_root: manifest.blob_root,
            params: manifest.params,
            chunk_size: manifest.chunk_size() as u64,
            sample_size: manifest.sample_size as u64,
            size_bytes: manifest.original_length,
            chunk_roots: manifest.chunk_roots.clone(),
            duration_epochs,
            payer,
            payment,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlashReason {
    OnchainChallenge,
    AuditTheAuditor,
    InvalidProofEvidence,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Penalty {
    pub sp: SpId,
    pub amount: Tokens,
    pub reporter: Option<SpId>,
    pub reason: SlashReason,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlashOutcome {
    pub taken: Tokens,
    pub reporter_share: Tokens,
    pub burned: Tokens,
    pub deactivated: bool,
}

/// Inputs to close out an epoch's payments.
#[derive(Clone, Debug, Default)]
pub struct EpochSettlement {
    /// Audit score per SP; SPs missing here earn no storage reward.
    pub scores: BTreeMap<SpId, f64>,
    /// Successful audits reported per auditor, keyed by the blob audited.
    pub auditor_successes: BTreeMap<SpId, BTreeMap<BlobId, u64>>,
    pub penalties: Vec<Penalty>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochPayout {
    pub storage: Tokens,
    pub auditing: Tokens,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Disbursement {
    pub payouts: BTreeMap<SpId, EpochPayout>,
    pub slashes: Vec<(Penalty, SlashOutcome)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", content = "payload", rename_all = "snake_case")]
pub enum LedgerEvent {
    Genesis {
        #[serde(with = "hex_hash")]
        beacon_seed: Hash,
    },
    SpRegistered {
        sp: SpId,
        stake: Tokens,
        declared_capacity: u64,
    },
    AccountFunded {
        account: AccountId,
        amount: Tokens,
    },
    BlobRegistered {
        blob_id: BlobId,
        chunksets: usize,
        escrow: Tokens,
        paid_until: u64,
    },
    BlobReady {
        blob_id: BlobId,
    },
    ChallengesPosted {
        count: usize,
    },
    ScoreboardPublished {
        auditor: SpId,
        entries: usize,
        encoded_bytes: usize,
    },
    ScoresComputed {
        scores: BTreeMap<SpId, f64>,
    },
    RewardPaid {
        sp: SpId,
        storage: Tokens,
        auditing: Tokens,
    },
    Slashed {
        sp: SpId,
        reason: SlashReason,
        requested: Tokens,
        taken: Tokens,
        reporter: Option<SpId>,
        reporter_share: Tokens,
        burned: Tokens,
        deactivated: bool,
    },
    EvidenceRejected {
        reporter: SpId,
        fee: Tokens,
    },
    FeeCharged {
        account: AccountId,
        amount: Tokens,
    },
    ChannelOpened {
        channel_id: u64,
        payer: AccountId,
        payee: AccountId,
        deposit: Tokens,
    },
    ChannelSettled {
        channel_id: u64,
        seq: u64,
        payee_amount: Tokens,
        payer_amount: Tokens,
    },
    EpochClosed {
        epoch: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerRecord {
    pub epoch: u64,
    #[serde(flatten)]
    pub event: LedgerEvent,
}

#[derive(Clone, Debug)]
pub struct LedgerState {
    pub epoch: u64,
    pub time: u64,
    pub beacon_seed: Hash,
    pub econ: EconomicParams,
    pub blobs: BTreeMap<BlobId, BlobMetadata>,
    pub sps: BTreeMap<SpId, SpAccount>,
    pub wallets: BTreeMap<u32, Tokens>,
    pub channel_escrow: Tokens,
    pub burned: Tokens,
    minted: Tokens,
    next_channel: u64,
    events: Vec<LedgerRecord>,
}

pub fn derive_genesis_seed(seed: u64) -> Hash {
    let mut h = Sha256::new();
    h.update(b"genesis");
    h.update(seed.to_be_bytes());
    h.finalize().into()
}

impl LedgerState {
    pub fn new(beacon_seed: Hash, econ: EconomicParams) -> Self {
        let mut ledger = LedgerState {
            epoch: 0,
            time: 0,
            beacon_seed,
            econ,
            blobs: BTreeMap::new(),
            sps: BTreeMap::new(),
            wallets: BTreeMap::new(),
            channel_escrow: Tokens::ZERO,
            burned: Tokens::ZERO,
            minted: Tokens::ZERO,
            next_channel: 0,
            events: Vec::new(),
        };
        ledger.emit(LedgerEvent::Genesis { beacon_seed });
        ledger
    }

    pub(crate) fn emit(&mut self, event: LedgerEvent) {
        self.events.push(LedgerRecord {
            epoch: self.epoch,
            event,
        });
    }

    pub fn events(&self) -> &[LedgerRecord] {
        &self.events
    }

    pub fn write_ndjson<W: Write>(&self, mut out: W) -> io::Result<()> {
        for record in &self.events {
            serde_json::to_writer(&mut out, record)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// `SHA-256("beacon" || genesis seed || epoch || tag)`.
    pub fn beacon(&self, epoch: u64, purpose_tag: &str) -> Hash {
        beacon(&self.beacon_seed, epoch, purpose_tag)
    }

    pub fn register_sp(
        &mut self,
        sp: SpId,
        stake: Tokens,
        declared_capacity: u64,
    ) -> Result<(), LedgerError> {
        if self.sps.contains_key(&sp) {
            return Err(LedgerError::DuplicateSp(sp));
        }
        self.minted += stake;
        self.sps.insert(
            sp,
            SpAccount {
                sp_id: sp,
                stake,
                balance: Tokens::ZERO,
                declared_capacity,
                used_capacity: 0,
                active: true,
            },
        );
        self.emit(LedgerEvent::SpRegistered {
            sp,
            stake,
            declared_capacity,
        });
        Ok(())
    }

    /// Mint tokens into an external wallet at setup time.
    pub fn fund_external(&mut self, wallet: u32, amount: Tokens) {
        self.minted += amount;
        *self.wallets.entry(wallet).or_default() += amount;
        self.emit(LedgerEvent::AccountFunded {
            account: AccountId::External(wallet),
            amount,
        });
    }

    pub fn balance(&self, account: AccountId) -> Tokens {
        match account {
            AccountId::Sp(id) => self.sps.get(&id).map(|a| a.balance).unwrap_or_default(),
            AccountId::External(id) => self.wallets.get(&id).copied().unwrap_or_default(),
        }
    }

    pub(crate) fn debit(&mut self, account: AccountId, amount: Tokens) -> Result<(), LedgerError> {
        let slot = match account {
            AccountId::Sp(id) => {
                &mut self
                    .sps
                    .get_mut(&id)
                    .ok_or(LedgerError::UnknownSp(id))?
                    .balance
            }
            AccountId::External(id) => self.wallets.entry(id).or_default(),
        };
        *slot = slot
            .checked_sub(amount)
            .ok_or(LedgerError::InsufficientBalance(account, amount))?;
        Ok(())
    }

    pub(crate) fn credit(&mut self, account: AccountId, amount: Tokens) {
        match account {
            AccountId::Sp(id) => {
                if let Some(acct) = self.sps.get_mut(&id) {
                    acct.balance += amount;
                } else {
                    // Unknown SPs cannot hold funds; keep supply conserved.
                    self.burned += amount;
                }
            }
            AccountId::External(id) => *self.wallets.entry(id).or_default() += amount,
        }
    }

    pub(crate) fn next_channel_id(&mut self) -> u64 {
        let id = self.next_channel;
        self.next_channel += 1;
        id
    }

    /// Sum of every token the ledger tracks.
    pub fn circulating(&self) -> Tokens {
        let sps: Tokens = self.sps.values().map(|a| a.stake + a.balance).sum();
        let wallets: Tokens = self.wallets.values().copied().sum();
        let escrow: Tokens = self.blobs.values().map(|b| b.payment_escrow).sum();
        sps + wallets + escrow + self.channel_escrow + self.burned
    }

    pub fn minted(&self) -> Tokens {
        self.minted
    }

    pub fn is_conserved(&self) -> bool {
        self.circulating() == self.minted
    }

    /// Fee for storing `size_bytes` for `duration_epochs`, rounded up.
    pub fn required_payment(&self, size_bytes: u64, duration_epochs: u64) -> Tokens {
        let gb = size_bytes as f64 / BYTES_PER_GB;
        let months = duration_epochs as f64 / self.econ.epochs_per_month as f64;
        Tokens::from_f64_ceil(self.econ.w * gb * months)
    }

    pub fn register_blob(&mut self, reg: BlobRegistration) -> Result<&BlobMetadata, LedgerError> {
        if self.blobs.contains_key(&reg.blob_id) {
            return Err(LedgerError::DuplicateBlob(reg.blob_id));
        }
        let required = self.required_payment(reg.size_bytes, reg.duration_epochs);
        if reg.payment < required {
            return Err(LedgerError::InsufficientPayment {
                paid: reg.payment,
                required,
            });
        }
        let n = reg.params.n();
        if reg.chunk_roots.is_empty() || reg.chunk_roots.iter().any(|cs| cs.len() != n) {
            return Err(LedgerError::Malformed(format!(
                "every chunkset needs {n} chunk roots"
            )));
        }
        if reg.sample_size == 0 || reg.chunk_size == 0 {
            return Err(LedgerError::Malformed(
                "chunk and sample sizes must be positive".into(),
            ));
        }
        let root =
            blob_root_of(&reg.chunk_roots).map_err(|e| LedgerError::Malformed(e.to_string()))?;
        if root != reg.blob_root {
            return Err(LedgerError::CommitmentMismatch);
        }
        if self.balance(reg.payer) < reg.payment {
            return Err(LedgerError::InsufficientBalance(reg.payer, reg.payment));
        }

        let assignment =
            self.draw_assignment(&reg.blob_id, reg.chunk_roots.len(), n, reg.chunk_size)?;
        self.debit(reg.payer, reg.payment)?;
        for holders in &assignment {
            for sp in holders {
                self.sps
                    .get_mut(sp)
                    .expect("assigned SP exists")
                    .used_capacity += reg.chunk_size;
            }
        }
        let meta = BlobMetadata {
            blob_id: reg.blob_id.clone(),
            blob_root: reg.blob_root.root,
            params: reg.params,
            chunk_size: reg.chunk_size,
            sample_size: reg.sample_size,
            size_bytes: reg.size_bytes,
            chunk_roots: reg.chunk_roots,
            chunk_assignment: assignment,
            state: BlobState::Registered,
            registered_epoch: self.epoch,
            paid_until: self.epoch + reg.duration_epochs,
            payment_escrow: reg.payment,
        };
        self.emit(LedgerEvent::BlobRegistered {
            blob_id: meta.blob_id.clone(),
            chunksets: meta.chunk_assignment.len(),
            escrow: meta.payment_escrow,
            paid_until: meta.paid_until,
        });
        Ok(self.blobs.entry(reg.blob_id).or_insert(meta))
    }

    /// Seeded partial Fisher-Yates choice of `n` distinct eligible SPs per
    /// chunkset. Capacity is reserved as chunksets are placed.
    fn draw_assignment(
        &self,
        blob_id: &BlobId,
        chunksets: usize,
        n: usize,
        chunk_size: u64,
    ) -> Result<Vec<Vec<SpId>>, LedgerError> {
        let mut rng = ChaCha20Rng::from_seed(self.beacon(self.epoch, &format!("assign:{blob_id}")));
        let mut spare: BTreeMap<SpId, u64> = self
            .sps
            .values()
            .filter(|a| a.active)
            .map(|a| (a.sp_id, a.spare()))
            .collect();
        let mut out = Vec::with_capacity(chunksets);
        for _ in 0..chunksets {
            let mut eligible: Vec<SpId> = spare
                .iter()
                .filter(|(_, &s)| s >= chunk_size)
                .map(|(&id, _)| id)
                .collect();
            if eligible.len() < n {
                return Err(LedgerError::NotEnoughProviders {
                    eligible: eligible.len(),
                    needed: n,
                });
            }
            for i in 0..n {
                let j = rng.gen_range(i..eligible.len());
                eligible.swap(i, j);
            }
            eligible.truncate(n);
            for sp in &eligible {
                *spare.get_mut(sp).expect("eligible SP") -= chunk_size;
            }
            out.push(eligible);
        }
        Ok(out)
    }

    pub fn mark_ready(
        &mut self,
        blob_id: &BlobId,
        acks: &BTreeSet<SpId>,
    ) -> Result<&BlobMetadata, LedgerError> {
        let meta = self
            .blobs
            .get(blob_id)
            .ok_or_else(|| LedgerError::UnknownBlob(blob_id.clone()))?;
        let missing: BTreeSet<SpId> = meta
            .chunk_assignment
            .iter()
            .flatten()
            .filter(|sp| !acks.contains(sp))
            .copied()
            .collect();
        if !missing.is_empty() {
            return Err(LedgerError::IncompleteWrite {
                blob: blob_id.clone(),
                missing: missing.into_iter().collect(),
            });
        }
        self.blobs.get_mut(blob_id).expect("checked above").state = BlobState::Ready;
        self.emit(LedgerEvent::BlobReady {
            blob_id: blob_id.clone(),
        });
        Ok(&self.blobs[blob_id])
    }

    /// Move up to `amount` of stake out of `sp`. The reporter, if any, gets
    /// the `r_slash` fraction and the remainder is burned. A stake driven to
    /// zero deactivates the SP.
    pub fn slash(
        &mut self,
        sp: SpId,
        amount: Tokens,
        reporter: Option<SpId>,
        reason: SlashReason,
    ) -> Result<SlashOutcome, LedgerError> {
        if amount.is_zero() {
            return Err(LedgerError::ZeroSlash);
        }
        if let Some(r) = reporter {
            if !self.sps.contains_key(&r) {
                return Err(LedgerError::UnknownSp(r));
            }
        }
        let acct = self.sps.get_mut(&sp).ok_or(LedgerError::UnknownSp(sp))?;
        let taken = amount.min(acct.stake);
        acct.stake = acct.stake.saturating_sub(taken);
        let deactivated = acct.active && acct.stake.is_zero();
        if acct.stake.is_zero() {
            acct.active = false;
        }
        let reporter_share = match reporter {
            Some(_) => taken.fraction(self.econ.r_slash),
            None => Tokens::ZERO,
        };
        let burned = taken.saturating_sub(reporter_share);
        if let Some(r) = reporter {
            self.credit(AccountId::Sp(r), reporter_share);
        }
        self.burned += burned;
        self.emit(LedgerEvent::Slashed {
            sp,
            reason,
            requested: amount,
            taken,
            reporter,
            reporter_share,
            burned,
            deactivated,
        });
        Ok(SlashOutcome {
            taken,
            reporter_share,
            burned,
            deactivated,
        })
    }

    /// Burn the flat on-chain action fee from an SP's balance, then its stake.
    pub fn charge_action_fee(&mut self, sp: SpId) -> Tokens {
        let fee = Tokens::from_f64(self.econ.action_fee);
        if fee.is_zero() {
            return fee;
        }
        let Some(acct) = self.sps.get_mut(&sp) else {
            return Tokens::ZERO;
        };
        let from_balance = fee.min(acct.balance);
        acct.balance = acct.balance.saturating_sub(from_balance);
        let from_stake = fee.saturating_sub(from_balance).min(acct.stake);
        acct.stake = acct.stake.saturating_sub(from_stake);
        let paid = from_balance + from_stake;
        self.burned += paid;
        self.emit(LedgerEvent::FeeCharged {
            account: AccountId::Sp(sp),
            amount: paid,
        });
        paid
    }

    /// Pay storage rewards (`rwd_st * score` per held chunk of each live blob)
    /// and auditor rewards (`rwd_au` per reported success), each drawn from
    /// the escrow of the blob it concerns, then apply penalties.
    pub fn disburse_epoch(&mut self, settlement: &EpochSettlement) -> Disbursement {
        let epoch = self.epoch;
        let mut payouts: BTreeMap<SpId, EpochPayout> = BTreeMap::new();
        let rwd_st = self.econ.rwd_st;
        let rwd_au = self.econ.rwd_au;

        let blob_ids: Vec<BlobId> = self.blobs.keys().cloned().collect();
        for blob_id in &blob_ids {
            let meta = self.blobs.get_mut(blob_id).expect("listed blob");
            if !meta.is_live(epoch) {
                continue;
            }
            let mut held: BTreeMap<SpId, u64> = BTreeMap::new();
            for sp in meta.chunk_assignment.iter().flatten() {
                *held.entry(*sp).or_default() += 1;
            }
            for (sp, chunks) in held {
                let score = settlement
                    .scores
                    .get(&sp)
                    .copied()
                    .unwrap_or(0.0)
                    .clamp(0.0, 1.0);
                let due = Tokens::from_f64(chunks as f64 * rwd_st * score).min(meta.payment_escrow);
                meta.payment_escrow = meta.payment_escrow.saturating_sub(due);
                payouts.entry(sp).or_default().storage += due;
            }
        }
        for (auditor, per_blob) in &settlement.auditor_successes {
            for (blob_id, successes) in per_blob {
                let Some(meta) = self.blobs.get_mut(blob_id) else {
                    continue;
                };
                let due = Tokens::from_f64(*successes as f64 * rwd_au).min(meta.payment_escrow);
                meta.payment_escrow = meta.payment_escrow.saturating_sub(due);
                payouts.entry(*auditor).or_default().auditing += due;
            }
        }
        for (sp, payout) in &payouts {
            self.credit(AccountId::Sp(*sp), payout.storage + payout.auditing);
            self.emit(LedgerEvent::RewardPaid {
                sp: *sp,
                storage: payout.storage,
                auditing: payout.auditing,
            });
        }
        let mut slashes = Vec::new();
        for p in &settlement.penalties {
            if p.amount.is_zero() {
                continue;
            }
            // Penalties against unknown SPs are dropped.
            if let Ok(outcome) = self.slash(p.sp, p.amount, p.reporter, p.reason) {
                slashes.push((p.clone(), outcome));
            }
        }
        Disbursement { payouts, slashes }
    }

    pub fn close_epoch(&mut self) {
        self.emit(LedgerEvent::EpochClosed { epoch: self.epoch });
        self.epoch += 1;
    }

    pub fn advance_time(&mut self, seconds: u64) {
        self.time += seconds;
    }

    pub fn active_sps(&self) -> Vec<SpId> {
        self.sps
            .values()
            .filter(|a| a.active)
            .map(|a| a.sp_id)
            .collect()
    }

    /// Every chunk assigned to `sp` across live blobs, in registry order.
    pub fn holdings(&self, sp: SpId) -> Vec<ChunkRef> {
        self.blobs
            .values()
            .filter(|b| b.is_live(self.epoch))
            .flat_map(|b| b.chunk_refs())
            .filter(|(_, holder)| *holder == sp)
            .map(|(r, _)| r)
            .collect()
    }

    pub fn chunk_root(&self, chunk: &ChunkRef) -> Option<&MerkleCommitment> {
        self.blobs
            .get(&chunk.blob_id)
            .and_then(|b| b.chunk_root(chunk.chunkset_index, chunk.chunk_index))
    }
}

pub fn beacon(genesis: &Hash, epoch: u64, purpose_tag: &str) -> Hash {
    let mut h = Sha256::new();
    h.update(b"beacon");
    h.update(genesis);
    h.update(epoch.to_be_bytes());
    h.update(purpose_tag.as_bytes());
    h.finalize().into()
}
