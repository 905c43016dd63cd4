//! Hybrid audit protocol.
//!
//! Each epoch, beacon randomness selects chunks for peer audit. Auditees
//! broadcast Merkle proofs for one sample, auditors record the outcome in a
//! scoreboard, and scoreboards are aggregated into trimmed audit scores.
//! On chain, low scores draw extra storage challenges, scoreboard 1-entries
//! are spot-checked against retained proofs, and invalid proofs posted as
//! evidence are slashed.

mod compress;

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use compress::{compress_scoreboard, decompress_scoreboard, BoardEntries, MAX_ENTRY_BITS};

use crate::commitment::{self, depth, Hash, InclusionProof, MerkleCommitment, MerkleTree, Side};
use crate::coordination::{ChunkRef, LedgerEvent, LedgerState, Penalty, SlashReason, SpId};
use crate::tokens::Tokens;

pub const INTERNAL_AUDIT_TAG: &str = "internal-audit";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AuditError {
    #[error("malformed scoreboard encoding: {0}")]
    Format(&'static str),
    #[error("{have} evaluators cannot support trimming f = {f} (need more than {need})", need = 2 * f)]
    InsufficientEvaluations { have: usize, f: usize },
    #[error("scoreboard does not match the epoch's challenge assignment: {0}")]
    BoardMismatch(String),
    #[error("challenge {0} was not issued this epoch")]
    UnknownChallenge(u32),
    #[error("evidence does not concern the challenge it names")]
    EvidenceMismatch,
    #[error("submitted evidence verifies; fee of {fee} charged")]
    EvidenceVerifies { fee: Tokens },
    #[error("challenge {0} has already been slashed")]
    DuplicateEvidence(u32),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditChallenge {
    pub epoch: u64,
    /// Position in the epoch's challenge list.
    pub id: u32,
    pub chunk: ChunkRef,
    pub sample_index: u32,
    pub auditee: SpId,
    pub auditors: Vec<SpId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditProof {
    pub epoch: u64,
    pub challenge_id: u32,
    pub chunk: ChunkRef,
    pub auditee: SpId,
    pub inclusion: InclusionProof,
}

impl AuditProof {
    pub fn sample_index(&self) -> u32 {
        self.inclusion.leaf_index as u32
    }

    pub fn sample_bytes(&self) -> &[u8] {
        &self.inclusion.leaf_bytes
    }
}

/// Largest tolerated evaluator count `f` for `n_sp` providers.
pub fn bft_f(n_sp: usize) -> usize {
    n_sp.saturating_sub(1) / 3
}

/// Select each live chunk with probability `p_a`, then a uniform sample and
/// `auditors_per_audit` distinct auditors other than the holder. All draws
/// come from `beacon(epoch, "internal-audit")` in registry order.
pub fn derive_challenges(
    ledger: &LedgerState,
    epoch: u64,
    p_a: f64,
    auditors_per_audit: usize,
) -> Vec<AuditChallenge> {
    let mut rng = ChaCha20Rng::from_seed(ledger.beacon(epoch, INTERNAL_AUDIT_TAG));
    let active = ledger.active_sps();
    let mut out = Vec::new();
    for blob in ledger.blobs.values().filter(|b| b.is_live(epoch)) {
        let samples = blob.samples_per_chunk();
        for (chunk, auditee) in blob.chunk_refs() {
            // One draw per chunk keeps streams aligned across strategies.
            let u: f64 = rng.gen();
            if u >= p_a {
                continue;
            }
            let sample_index = rng.gen_range(0..samples);
            let mut pool: Vec<SpId> = active.iter().copied().filter(|&s| s != auditee).collect();
            let take = auditors_per_audit.min(pool.len());
            for i in 0..take {
                let j = rng.gen_range(i..pool.len());
                pool.swap(i, j);
            }
            pool.truncate(take);
            pool.sort();
            out.push(AuditChallenge {
                epoch,
                id: out.len() as u32,
                chunk,
                sample_index,
                auditee,
                auditors: pool,
            });
        }
    }
    out
}

/// Proof an SP holding the chunk produces for a challenge.
pub fn prove(challenge: &AuditChallenge, chunk_tree: &MerkleTree) -> AuditProof {
    AuditProof {
        epoch: challenge.epoch,
        challenge_id: challenge.id,
        chunk: challenge.chunk.clone(),
        auditee: challenge.auditee,
        inclusion: chunk_tree
            .open(challenge.sample_index as usize)
            .expect("sample index drawn within the chunk"),
    }
}

/// Random sample bytes with a structurally well-formed path of the right
/// length; verifies only with negligible probability.
pub fn forge<R: RngCore>(
    challenge: &AuditChallenge,
    root: &MerkleCommitment,
    rng: &mut R,
) -> AuditProof {
    let mut leaf = vec![0u8; root.leaf_width];
    rng.fill_bytes(&mut leaf);
    let index = challenge.sample_index as usize;
    let path = (0..depth(root.leaf_count))
        .map(|level| {
            let mut h = [0u8; 32];
            rng.fill_bytes(&mut h);
            let side = if (index >> level) & 1 == 0 {
                Side::Right
            } else {
                Side::Left
            };
            (h, side)
        })
        .collect();
    AuditProof {
        epoch: challenge.epoch,
        challenge_id: challenge.id,
        chunk: challenge.chunk.clone(),
        auditee: challenge.auditee,
        inclusion: InclusionProof {
            leaf_index: index,
            leaf_bytes: leaf,
            path,
        },
    }
}

/// The proof answers exactly this challenge and opens the committed root.
pub fn proof_valid_for(
    challenge: &AuditChallenge,
    root: &MerkleCommitment,
    proof: &AuditProof,
) -> bool {
    proof.epoch == challenge.epoch
        && proof.challenge_id == challenge.id
        && proof.chunk == challenge.chunk
        && proof.auditee == challenge.auditee
        && proof.sample_index() == challenge.sample_index
        && commitment::verify(root, &proof.inclusion)
}

/// Per-SP auditor bookkeeping: recorded outcomes, retained proofs, and
/// invalid proofs queued as evidence.
#[derive(Clone, Debug, Default)]
pub struct AuditorState {
    pub outcomes: BTreeMap<(u64, u32), bool>,
    retained: BTreeMap<(u64, u32), AuditProof>,
    pub evidence: Vec<AuditProof>,
}

impl AuditorState {
    /// Verify and record one challenge. Full verification drives the
    /// probability of accepting an invalid proof to zero, so any `epsilon`
    /// threshold is met exactly when the proof verifies.
    pub fn record(
        &mut self,
        challenge: &AuditChallenge,
        root: &MerkleCommitment,
        proof: Option<&AuditProof>,
        epsilon: f64,
    ) -> bool {
        let p_invalid = match proof {
            Some(p) if proof_valid_for(challenge, root, p) => 0.0,
            _ => 1.0,
        };
        let ok = p_invalid <= epsilon;
        self.outcomes.insert((challenge.epoch, challenge.id), ok);
        match proof {
            Some(p) if ok => {
                self.retained
                    .insert((challenge.epoch, challenge.id), p.clone());
            }
            Some(p) => self.evidence.push(p.clone()),
            None => {}
        }
        ok
    }

    pub fn record_unverified(&mut self, challenge: &AuditChallenge, bit: bool) {
        self.outcomes.insert((challenge.epoch, challenge.id), bit);
    }

    pub fn retain(&mut self, proof: AuditProof) {
        self.retained
            .insert((proof.epoch, proof.challenge_id), proof);
    }

    pub fn discard(&mut self, epoch: u64, challenge_id: u32) {
        self.retained.remove(&(epoch, challenge_id));
    }

    pub fn retained(&self, epoch: u64, challenge_id: u32) -> Option<&AuditProof> {
        self.retained.get(&(epoch, challenge_id))
    }

    pub fn retained_count(&self) -> usize {
        self.retained.len()
    }

    /// Drop state older than the two-epoch retention window.
    pub fn prune(&mut self, current_epoch: u64) {
        let keep = |k: &(u64, u32)| k.0 + 2 > current_epoch;
        self.retained.retain(|k, _| keep(k));
        self.outcomes.retain(|k, _| keep(k));
    }

    pub fn take_evidence(&mut self) -> Vec<AuditProof> {
        std::mem::take(&mut self.evidence)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scoreboard {
    pub auditor: SpId,
    pub epoch: u64,
    pub entries: BoardEntries,
}

impl Scoreboard {
    pub fn ones(&self) -> usize {
        self.entries.values().flatten().filter(|&&b| b).count()
    }

    pub fn compressed(&self) -> Vec<u8> {
        compress_scoreboard(&self.entries)
    }
}

/// Challenge ids per auditee for one auditor, in challenge order. Bit `j`
/// of an auditee's vector refers to the `j`-th id here.
pub fn board_shape(challenges: &[AuditChallenge], auditor: SpId) -> BTreeMap<SpId, Vec<u32>> {
    let mut shape: BTreeMap<SpId, Vec<u32>> = BTreeMap::new();
    for c in challenges.iter().filter(|c| c.auditors.contains(&auditor)) {
        shape.entry(c.auditee).or_default().push(c.id);
    }
    shape
}

pub fn build_scoreboard(
    auditor: SpId,
    epoch: u64,
    challenges: &[AuditChallenge],
    mut bit: impl FnMut(&AuditChallenge) -> bool,
) -> Scoreboard {
    let entries = board_shape(challenges, auditor)
        .into_iter()
        .map(|(auditee, ids)| {
            (
                auditee,
                ids.iter()
                    .map(|&id| bit(&challenges[id as usize]))
                    .collect(),
            )
        })
        .collect();
    Scoreboard {
        auditor,
        epoch,
        entries,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditScore {
    pub sp_id: SpId,
    pub epoch: u64,
    pub score: f64,
}

/// Trimmed mean of per-peer success fractions: peers with no audits of the
/// auditee are ignored, then the `f` highest and `f` lowest are dropped.
pub fn compute_score(
    auditee: SpId,
    epoch: u64,
    peer_evaluations: &BTreeMap<SpId, (u64, u64)>,
    f: usize,
) -> Result<AuditScore, AuditError> {
    let mut evals: Vec<f64> = peer_evaluations
        .values()
        .filter(|(_, total)| *total > 0)
        .map(|&(ok, total)| ok.min(total) as f64 / total as f64)
        .collect();
    if evals.len() <= 2 * f {
        return Err(AuditError::InsufficientEvaluations {
            have: evals.len(),
            f,
        });
    }
    evals.sort_by(f64::total_cmp);
    let kept = &evals[f..evals.len() - f];
    Ok(AuditScore {
        sp_id: auditee,
        epoch,
        score: kept.iter().sum::<f64>() / kept.len() as f64,
    })
}

/// `round((1 - score^2) * C)`, rounding halves up.
pub fn onchain_auditee_count(score: f64, onchain_challenges: u32) -> u32 {
    let s = score.clamp(0.0, 1.0);
    let x = (1.0 - s * s) * onchain_challenges as f64;
    // Absorb representation error such as 0.19 * 50 = 9.499999...
    (x + 0.5 + 1e-9).floor().min(onchain_challenges as f64) as u32
}

/// On-chain state for one epoch's audit cycle.
#[derive(Clone, Debug)]
pub struct EpochAudit {
    pub epoch: u64,
    pub challenges: Vec<AuditChallenge>,
    pub boards: BTreeMap<SpId, Scoreboard>,
    slashed: BTreeSet<u32>,
}

impl EpochAudit {
    pub fn post(ledger: &mut LedgerState, challenges: Vec<AuditChallenge>) -> Self {
        ledger.emit(LedgerEvent::ChallengesPosted {
            count: challenges.len(),
        });
        EpochAudit {
            epoch: ledger.epoch,
            challenges,
            boards: BTreeMap::new(),
            slashed: BTreeSet::new(),
        }
    }

    pub fn challenge(&self, id: u32) -> Option<&AuditChallenge> {
        self.challenges.get(id as usize)
    }

    /// Accept a scoreboard whose vectors match the auditor's assignment.
    pub fn publish(
        &mut self,
        ledger: &mut LedgerState,
        board: Scoreboard,
    ) -> Result<usize, AuditError> {
        if board.epoch != self.epoch {
            return Err(AuditError::BoardMismatch(format!(
                "board for epoch {} posted in epoch {}",
                board.epoch, self.epoch
            )));
        }
        let shape = board_shape(&self.challenges, board.auditor);
        let lens: BTreeMap<SpId, usize> =
            board.entries.iter().map(|(k, v)| (*k, v.len())).collect();
        let want: BTreeMap<SpId, usize> = shape.iter().map(|(k, v)| (*k, v.len())).collect();
        if lens != want {
            return Err(AuditError::BoardMismatch(format!(
                "{} published {lens:?}, expected {want:?}",
                board.auditor
            )));
        }
        let encoded = board.compressed().len();
        ledger.charge_action_fee(board.auditor);
        ledger.emit(LedgerEvent::ScoreboardPublished {
            auditor: board.auditor,
            entries: board.entries.len(),
            encoded_bytes: encoded,
        });
        self.boards.insert(board.auditor, board);
        Ok(encoded)
    }

    /// `(successes, total)` from every auditor assigned to `auditee`.
    /// Auditors that did not publish count as all zeros.
    pub fn peer_evaluations(&self, auditee: SpId) -> BTreeMap<SpId, (u64, u64)> {
        let mut evals: BTreeMap<SpId, (u64, u64)> = BTreeMap::new();
        for c in self.challenges.iter().filter(|c| c.auditee == auditee) {
            for a in &c.auditors {
                evals.entry(*a).or_default().1 += 1;
            }
        }
        for (auditor, e) in evals.iter_mut() {
            if let Some(bits) = self
                .boards
                .get(auditor)
                .and_then(|b| b.entries.get(&auditee))
            {
                e.0 = bits.iter().filter(|&&b| b).count() as u64;
            }
        }
        evals
    }

    /// Score every SP in `sps` with `f = bft_f(n_sp)`. An SP with no audits
    /// this epoch scores 1. When fewer than `2f + 1` peers evaluated an SP,
    /// the trim shrinks to the largest `f'` the evaluator count supports.
    pub fn scores(&self, sps: &[SpId], n_sp: usize) -> BTreeMap<SpId, f64> {
        let f = bft_f(n_sp);
        sps.iter()
            .map(|&sp| {
                let evals = self.peer_evaluations(sp);
                let e = evals.values().filter(|(_, t)| *t > 0).count();
                let score = if e == 0 {
                    1.0
                } else {
                    let trim = f.min((e - 1) / 2);
                    compute_score(sp, self.epoch, &evals, trim)
                        .expect("trim fits evaluator count")
                        .score
                };
                (sp, score)
            })
            .collect()
    }

    /// Post invalid-proof evidence. The named challenge must exist, the
    /// proof must claim to answer it, and the reporter must be one of its
    /// auditors. Evidence that verifies is rejected and costs the fee.
    pub fn submit_evidence(
        &mut self,
        ledger: &mut LedgerState,
        proof: &AuditProof,
        reporter: SpId,
    ) -> Result<Penalty, AuditError> {
        let challenge = self
            .challenge(proof.challenge_id)
            .ok_or(AuditError::UnknownChallenge(proof.challenge_id))?;
        if proof.epoch != challenge.epoch
            || proof.auditee != challenge.auditee
            || proof.chunk != challenge.chunk
            || !challenge.auditors.contains(&reporter)
        {
            return Err(AuditError::EvidenceMismatch);
        }
        let root = ledger
            .chunk_root(&challenge.chunk)
            .copied()
            .ok_or(AuditError::EvidenceMismatch)?;
        if proof_valid_for(challenge, &root, proof) {
            let fee = ledger.charge_action_fee(reporter);
            ledger.emit(LedgerEvent::EvidenceRejected { reporter, fee });
            return Err(AuditError::EvidenceVerifies { fee });
        }
        let (id, auditee) = (challenge.id, challenge.auditee);
        if !self.slashed.insert(id) {
            return Err(AuditError::DuplicateEvidence(id));
        }
        Ok(Penalty {
            sp: auditee,
            amount: Tokens::from_f64(ledger.econ.s_a),
            reporter: Some(reporter),
            reason: SlashReason::InvalidProofEvidence,
        })
    }
}

/// One 1-entry selected for audit-the-auditor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtaSelection {
    pub auditee: SpId,
    pub position: u32,
    pub challenge_id: u32,
}

/// Select each 1-entry of `board` with probability `p_ata`. One draw is
/// consumed per entry, whatever its value.
pub fn audit_the_auditor(
    board: &Scoreboard,
    challenges: &[AuditChallenge],
    p_ata: f64,
    beacon_seed: Hash,
) -> Vec<AtaSelection> {
    let mut rng = ChaCha20Rng::from_seed(beacon_seed);
    let shape = board_shape(challenges, board.auditor);
    let mut out = Vec::new();
    for (auditee, bits) in &board.entries {
        let ids = shape.get(auditee);
        for (pos, &bit) in bits.iter().enumerate() {
            let u: f64 = rng.gen();
            if bit && u < p_ata {
                if let Some(&challenge_id) = ids.and_then(|v| v.get(pos)) {
                    out.push(AtaSelection {
                        auditee: *auditee,
                        position: pos as u32,
                        challenge_id,
                    });
                }
            }
        }
    }
    out
}

pub fn ata_tag(auditor: SpId) -> String {
    format!("audit-the-auditor:{auditor}")
}

/// A storage challenge issued on chain against an SP's declared holdings.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OnchainChallenge {
    pub epoch: u64,
    pub index: u32,
    pub sp: SpId,
    pub chunk: ChunkRef,
    pub sample_index: u32,
}

impl OnchainChallenge {
    /// View as an audit challenge so the same proof format answers both.
    pub fn as_audit(&self) -> AuditChallenge {
        AuditChallenge {
            epoch: self.epoch,
            id: self.index,
            chunk: self.chunk.clone(),
            sample_index: self.sample_index,
            auditee: self.sp,
            auditors: Vec::new(),
        }
    }
}

/// Indices into `holdings`, drawn uniformly with replacement.
pub fn sample_holdings(seed: Hash, holdings: usize, count: u32) -> Vec<usize> {
    if holdings == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha20Rng::from_seed(seed);
    (0..count).map(|_| rng.gen_range(0..holdings)).collect()
}

/// `count` samples from `sp`'s declared holdings, seeded per SP.
pub fn derive_onchain_challenges(
    ledger: &LedgerState,
    epoch: u64,
    sp: SpId,
    count: u32,
) -> Vec<OnchainChallenge> {
    let holdings = ledger.holdings(sp);
    let picks = sample_holdings(
        ledger.beacon(epoch, &format!("onchain-auditee:{sp}")),
        holdings.len(),
        count,
    );
    let mut rng = ChaCha20Rng::from_seed(ledger.beacon(epoch, &format!("onchain-sample:{sp}")));
    picks
        .into_iter()
        .enumerate()
        .map(|(i, h)| {
            let chunk = holdings[h].clone();
            let samples = ledger.blobs[&chunk.blob_id].samples_per_chunk();
            OnchainChallenge {
                epoch,
                index: i as u32,
                sp,
                sample_index: rng.gen_range(0..samples),
                chunk,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn evals(v: &[f64]) -> BTreeMap<SpId, (u64, u64)> {
        v.iter()
            .enumerate()
            .map(|(i, &x)| (SpId(i as u32), ((x * 1000.0).round() as u64, 1000)))
            .collect()
    }

    #[test]
    fn unanimous_scores_one() {
        assert_eq!(
            compute_score(SpId(0), 0, &evals(&[1.0; 4]), 1)
                .unwrap()
                .score,
            1.0
        );
    }

    #[test]
    fn trims_one_from_each_end() {
        let s = compute_score(SpId(0), 0, &evals(&[0.0, 1.0, 1.0, 1.0, 0.5]), 1)
            .unwrap()
            .score;
        assert!((s - 2.5 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn byzantine_zeros_are_trimmed() {
        let mut v = vec![0.0; 3];
        v.extend([0.75; 7]);
        assert_eq!(
            compute_score(SpId(0), 0, &evals(&v), 3).unwrap().score,
            0.75
        );
    }

    #[test]
    fn too_few_evaluators() {
        let e = compute_score(SpId(0), 0, &evals(&[1.0, 1.0]), 1).unwrap_err();
        assert_eq!(e, AuditError::InsufficientEvaluations { have: 2, f: 1 });
        let mut with_idle = evals(&[1.0, 1.0, 1.0]);
        with_idle.insert(SpId(99), (0, 0));
        assert!(compute_score(SpId(0), 0, &with_idle, 1).is_ok());
    }

    #[test]
    fn onchain_counts() {
        assert_eq!(onchain_auditee_count(1.0, 50), 0);
        assert_eq!(onchain_auditee_count(0.0, 50), 50);
        assert_eq!(onchain_auditee_count(0.9, 50), 10);
        assert_eq!(onchain_auditee_count(0.5, 2), 2);
        assert_eq!(onchain_auditee_count(0.5, 0), 0);
    }

    #[test]
    fn retention_window_spans_two_closes() {
        let tree = MerkleTree::from_bytes(&[7u8; 64], 16).unwrap();
        let c = AuditChallenge {
            epoch: 5,
            id: 0,
            chunk: ChunkRef {
                blob_id: "b".into(),
                chunkset_index: 0,
                chunk_index: 0,
            },
            sample_index: 2,
            auditee: SpId(1),
            auditors: vec![SpId(2)],
        };
        let mut st = AuditorState::default();
        assert!(st.record(&c, &tree.commitment(), Some(&prove(&c, &tree)), 0.01));
        st.prune(6);
        assert!(st.retained(5, 0).is_some());
        st.prune(7);
        assert!(st.retained(5, 0).is_none());
    }

    #[test]
    fn forged_proofs_are_recorded_as_failures_and_queued() {
        let tree = MerkleTree::from_bytes(&[3u8; 128], 16).unwrap();
        let c = AuditChallenge {
            epoch: 0,
            id: 0,
            chunk: ChunkRef {
                blob_id: "b".into(),
                chunkset_index: 0,
                chunk_index: 1,
            },
            sample_index: 5,
            auditee: SpId(1),
            auditors: vec![SpId(2)],
        };
        let forged = forge(&c, &tree.commitment(), &mut ChaCha20Rng::seed_from_u64(1));
        assert_eq!(forged.inclusion.path.len(), 3);
        let mut st = AuditorState::default();
        assert!(!st.record(&c, &tree.commitment(), Some(&forged), 0.01));
        assert!(!st.record(&c, &tree.commitment(), None, 0.01));
        assert_eq!(st.take_evidence().len(), 1);
    }

    #[test]
    fn ata_selection_extremes() {
        let challenges: Vec<AuditChallenge> = (0..6)
            .map(|i| AuditChallenge {
                epoch: 0,
                id: i,
                chunk: ChunkRef {
                    blob_id: "b".into(),
                    chunkset_index: 0,
                    chunk_index: i,
                },
                sample_index: 0,
                auditee: SpId(i % 2),
                auditors: vec![SpId(9)],
            })
            .collect();
        let board = build_scoreboard(SpId(9), 0, &challenges, |c| c.id != 3);
        assert!(audit_the_auditor(&board, &challenges, 0.0, [1; 32]).is_empty());
        let all = audit_the_auditor(&board, &challenges, 1.0, [1; 32]);
        assert_eq!(all.len(), board.ones());
        assert!(all.iter().all(|s| s.challenge_id != 3));
        assert_eq!(
            all[0],
            AtaSelection {
                auditee: SpId(0),
                position: 0,
                challenge_id: 0
            }
        );
    }
}
