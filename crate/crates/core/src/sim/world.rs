use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{
    AuditorPolicy, ChallengeResponse, Corpus, EvidencePolicy, ScoreboardPolicy, SimConfig,
    SimError, Strategy, UtilityLedger,
};
use crate::audit::{
    self, ata_tag, audit_the_auditor, build_scoreboard, derive_challenges,
    derive_onchain_challenges, onchain_auditee_count, proof_valid_for, AuditChallenge, AuditProof,
    AuditorState, EpochAudit,
};
use crate::commitment::Hash;
use crate::coordination::{
    AccountId, BlobRegistration, ChunkRef, EpochSettlement, LedgerEvent, LedgerState, Penalty,
    SlashReason, SpId,
};
use crate::prep::BlobId;
use crate::tokens::Tokens;

const CLIENT_WALLET: u32 = 0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: u64,
    pub challenges: usize,
    pub scores: BTreeMap<SpId, f64>,
    pub onchain_challenges: BTreeMap<SpId, u32>,
    pub penalties: Vec<Penalty>,
    pub boards_published: usize,
}

/// One trial's state: the ledger plus each SP's private state.
#[derive(Debug)]
pub struct World {
    corpus: Arc<Corpus>,
    pub ledger: LedgerState,
    pub strategies: BTreeMap<SpId, Strategy>,
    /// Whether the assigned holder actually keeps each chunk.
    stored: BTreeMap<ChunkRef, bool>,
    stored_per_chunkset: BTreeMap<(BlobId, u32), usize>,
    auditors: BTreeMap<SpId, AuditorState>,
    pub utility: BTreeMap<SpId, UtilityLedger>,
    forge_rng: ChaCha20Rng,
    k: usize,
    pub reports: Vec<EpochReport>,
}

impl World {
    /// Register SPs, pay for and place every corpus blob, then let each
    /// holder decide which chunks it keeps. Storage draws use one uniform
    /// per chunk whatever the strategies, so profiles share randomness.
    pub fn new(
        config: &SimConfig,
        corpus: Arc<Corpus>,
        strategies: BTreeMap<SpId, Strategy>,
        genesis: Hash,
    ) -> Result<World, SimError> {
        for s in strategies.values() {
            s.validate()?;
        }
        let mut ledger = LedgerState::new(genesis, config.econ.clone());
        for i in 0..config.sp_count {
            ledger.register_sp(
                SpId(i),
                Tokens::from_f64(config.stake),
                config.capacity_bytes,
            )?;
        }
        let econ = &config.econ;
        let per_chunk_epoch = econ.rwd_st + config.sp_count as f64 * econ.rwd_au;
        let mut registrations = Vec::new();
        for blob in &corpus.blobs {
            let manifest = blob.manifest();
            let chunks = (manifest.num_chunksets() * config.coding.n()) as f64;
            let escrow =
                Tokens::from_f64_ceil(2.0 * chunks * config.epochs as f64 * per_chunk_epoch);
            let payment = escrow + ledger.required_payment(manifest.original_length, config.epochs);
            registrations.push(BlobRegistration::from_manifest(
                &manifest,
                config.epochs,
                AccountId::External(CLIENT_WALLET),
                payment,
            ));
        }
        ledger.fund_external(CLIENT_WALLET, registrations.iter().map(|r| r.payment).sum());
        for reg in registrations {
            let id = reg.blob_id.clone();
            let acks: BTreeSet<SpId> = ledger
                .register_blob(reg)?
                .chunk_assignment
                .iter()
                .flatten()
                .copied()
                .collect();
            ledger.mark_ready(&id, &acks)?;
        }

        let mut rng = ChaCha20Rng::from_seed(ledger.beacon(0, "sim:storage"));
        let mut stored = BTreeMap::new();
        let mut stored_per_chunkset: BTreeMap<(BlobId, u32), usize> = BTreeMap::new();
        for meta in ledger.blobs.values() {
            for (chunk, holder) in meta.chunk_refs() {
                let u: f64 = rng.gen();
                let keep = u < strategies.get(&holder).map_or(1.0, |s| s.storage_policy);
                if keep {
                    *stored_per_chunkset
                        .entry((chunk.blob_id.clone(), chunk.chunkset_index))
                        .or_default() += 1;
                }
                stored.insert(chunk, keep);
            }
        }
        let forge_rng = ChaCha20Rng::from_seed(ledger.beacon(0, "sim:forge"));
        Ok(World {
            corpus,
            utility: strategies
                .keys()
                .map(|&s| (s, UtilityLedger::default()))
                .collect(),
            auditors: strategies
                .keys()
                .map(|&s| (s, AuditorState::default()))
                .collect(),
            strategies,
            ledger,
            stored,
            stored_per_chunkset,
            forge_rng,
            k: config.coding.k(),
            reports: Vec::new(),
        })
    }

    fn strategy(&self, sp: SpId) -> &Strategy {
        &self.strategies[&sp]
    }

    pub fn holds(&self, chunk: &ChunkRef) -> bool {
        self.stored.get(chunk).copied().unwrap_or(false)
    }

    /// The network can serve the chunk: its holder keeps it, or `k` chunks
    /// of its chunkset survive and it can be rebuilt.
    pub fn recoverable(&self, chunk: &ChunkRef) -> bool {
        self.holds(chunk)
            || self
                .stored_per_chunkset
                .get(&(chunk.blob_id.clone(), chunk.chunkset_index))
                .is_some_and(|&n| n >= self.k)
    }

    /// Fetch a chunk from the network, paying `c_r` once per chunk per epoch.
    fn retrieve(
        &mut self,
        sp: SpId,
        chunk: &ChunkRef,
        cache: &mut BTreeSet<(SpId, ChunkRef)>,
    ) -> bool {
        if !self.recoverable(chunk) {
            return false;
        }
        if cache.insert((sp, chunk.clone())) {
            self.utility.get_mut(&sp).expect("known SP").retrieval_costs += self.ledger.econ.c_r;
        }
        true
    }

    fn prove(&self, challenge: &AuditChallenge) -> AuditProof {
        let c = &challenge.chunk;
        audit::prove(
            challenge,
            self.corpus
                .tree(&c.blob_id, c.chunkset_index, c.chunk_index),
        )
    }

    fn respond(
        &mut self,
        challenge: &AuditChallenge,
        cache: &mut BTreeSet<(SpId, ChunkRef)>,
    ) -> Option<AuditProof> {
        let sp = challenge.auditee;
        let policy = self.strategy(sp).challenge_response;
        if policy == ChallengeResponse::Ignore {
            return None;
        }
        if self.holds(&challenge.chunk) {
            return Some(self.prove(challenge));
        }
        match policy {
            ChallengeResponse::RetrieveExternally if self.retrieve(sp, &challenge.chunk, cache) => {
                Some(self.prove(challenge))
            }
            ChallengeResponse::Forge => {
                let root = *self
                    .ledger
                    .chunk_root(&challenge.chunk)
                    .expect("registered chunk");
                Some(audit::forge(challenge, &root, &mut self.forge_rng))
            }
            _ => None,
        }
    }

    fn allies(&self, a: SpId, b: SpId) -> bool {
        let ca = self.strategy(a).coalition;
        ca.is_some() && ca == self.strategy(b).coalition
    }

    /// Run the full epoch pipeline and close the epoch.
    pub fn run_epoch(&mut self) -> EpochReport {
        let epoch = self.ledger.epoch;
        let econ = self.ledger.econ.clone();
        let first_event = self.ledger.events().len();
        let mut cache = BTreeSet::new();

        // Internal audits.
        let challenges = derive_challenges(
            &self.ledger,
            epoch,
            econ.p_a,
            econ.auditors_per_audit as usize,
        );
        let mut audit = EpochAudit::post(&mut self.ledger, challenges);
        for i in 0..audit.challenges.len() {
            let challenge = audit.challenges[i].clone();
            let proof = self.respond(&challenge, &mut cache);
            let root = *self
                .ledger
                .chunk_root(&challenge.chunk)
                .expect("registered chunk");
            for &a in &challenge.auditors {
                let mut policy = self.strategy(a).auditor_policy;
                let ally = self.allies(a, challenge.auditee);
                policy = match policy {
                    AuditorPolicy::RubberStampAllies if ally => AuditorPolicy::RubberStamp,
                    AuditorPolicy::RubberStampAllies => AuditorPolicy::VerifyAndRetain,
                    AuditorPolicy::SabotageOutsiders if ally => AuditorPolicy::VerifyAndRetain,
                    AuditorPolicy::SabotageOutsiders => AuditorPolicy::ReportAllZero,
                    p => p,
                };
                let state = self.auditors.get_mut(&a).expect("known SP");
                let util = self.utility.get_mut(&a).expect("known SP");
                match policy {
                    AuditorPolicy::RubberStamp => state.record_unverified(&challenge, true),
                    AuditorPolicy::ReportAllZero => state.record_unverified(&challenge, false),
                    _ => {
                        if proof.is_some() {
                            util.proof_overhead_costs += econ.c_verify;
                        }
                        let ok = state.record(&challenge, &root, proof.as_ref(), econ.epsilon);
                        if ok {
                            if policy == AuditorPolicy::DropProofs {
                                state.discard(epoch, challenge.id);
                            } else {
                                util.proof_overhead_costs += econ.c_retain;
                            }
                        }
                    }
                }
            }
        }

        // Scoreboards.
        let sps: Vec<SpId> = self.strategies.keys().copied().collect();
        for &a in &sps {
            let policy = self.strategy(a).scoreboard_policy;
            if policy == ScoreboardPolicy::Withhold {
                continue;
            }
            let outcomes = &self.auditors[&a].outcomes;
            let board = build_scoreboard(a, epoch, &audit.challenges, |c| match policy {
                ScoreboardPolicy::AllOnes => true,
                _ => outcomes.get(&(epoch, c.id)).copied().unwrap_or(false),
            });
            if board.entries.is_empty() {
                continue;
            }
            audit
                .publish(&mut self.ledger, board)
                .expect("board built from the posted challenges");
        }

        let active = self.ledger.active_sps();
        let scores = audit.scores(&active, active.len());
        self.ledger.emit(LedgerEvent::ScoresComputed {
            scores: scores.clone(),
        });

        let mut settlement = EpochSettlement {
            scores: scores.clone(),
            ..Default::default()
        };
        for board in audit.boards.values() {
            let shape = audit::board_shape(&audit.challenges, board.auditor);
            let per_blob = settlement
                .auditor_successes
                .entry(board.auditor)
                .or_default();
            for (auditee, bits) in &board.entries {
                for (pos, _) in bits.iter().enumerate().filter(|(_, &b)| b) {
                    let id = shape[auditee][pos];
                    *per_blob
                        .entry(audit.challenges[id as usize].chunk.blob_id.clone())
                        .or_default() += 1;
                }
            }
            self.utility
                .get_mut(&board.auditor)
                .expect("known SP")
                .reported_ones += board.ones() as u64;
        }

        // On-chain storage challenges scaled by score.
        let mut onchain_counts = BTreeMap::new();
        for &sp in &active {
            let count = onchain_auditee_count(scores[&sp], econ.onchain_challenges);
            if count == 0 {
                continue;
            }
            onchain_counts.insert(sp, count);
            let mut failed = false;
            for oc in derive_onchain_challenges(&self.ledger, epoch, sp, count) {
                let as_audit = oc.as_audit();
                let root = *self.ledger.chunk_root(&oc.chunk).expect("registered chunk");
                let ok = self
                    .respond(&as_audit, &mut cache)
                    .is_some_and(|p| proof_valid_for(&as_audit, &root, &p));
                failed |= !ok;
            }
            if failed {
                settlement.penalties.push(Penalty {
                    sp,
                    amount: Tokens::from_f64(econ.s_a),
                    reporter: None,
                    reason: SlashReason::OnchainChallenge,
                });
            }
        }

        // Audit the auditor.
        let boards: Vec<_> = audit.boards.values().cloned().collect();
        for board in &boards {
            let seed = self.ledger.beacon(epoch, &ata_tag(board.auditor));
            for sel in audit_the_auditor(board, &audit.challenges, econ.p_ata, seed) {
                let challenge = &audit.challenges[sel.challenge_id as usize];
                let root = *self
                    .ledger
                    .chunk_root(&challenge.chunk)
                    .expect("registered chunk");
                let mut proof = self.auditors[&board.auditor]
                    .retained(epoch, challenge.id)
                    .cloned();
                if proof.is_none()
                    && econ.c_r < econ.s_ata
                    && self.retrieve(board.auditor, &challenge.chunk, &mut cache)
                {
                    proof = Some(self.prove(challenge));
                }
                if !proof.is_some_and(|p| proof_valid_for(challenge, &root, &p)) {
                    settlement.penalties.push(Penalty {
                        sp: board.auditor,
                        amount: Tokens::from_f64(econ.s_ata),
                        reporter: None,
                        reason: SlashReason::AuditTheAuditor,
                    });
                }
            }
        }

        // Invalid-proof evidence.
        for &a in &sps {
            let evidence = self.auditors.get_mut(&a).expect("known SP").take_evidence();
            if self.strategy(a).evidence_policy == EvidencePolicy::Withhold {
                continue;
            }
            for proof in evidence {
                if let Ok(p) = audit.submit_evidence(&mut self.ledger, &proof, a) {
                    settlement.penalties.push(p);
                }
            }
        }

        self.ledger.disburse_epoch(&settlement);

        for (chunk, &kept) in &self.stored {
            if kept {
                let holder = self.ledger.blobs[&chunk.blob_id]
                    .holder(chunk.chunkset_index, chunk.chunk_index)
                    .expect("assigned chunk");
                self.utility
                    .get_mut(&holder)
                    .expect("known SP")
                    .storage_costs += econ.c_s;
            }
        }
        self.account_ledger_events(first_event);

        for state in self.auditors.values_mut() {
            state.prune(epoch + 1);
        }
        self.ledger.close_epoch();
        let report = EpochReport {
            epoch,
            challenges: audit.challenges.len(),
            scores,
            onchain_challenges: onchain_counts,
            penalties: settlement.penalties,
            boards_published: audit.boards.len(),
        };
        self.reports.push(report.clone());
        report
    }

    /// Credit rewards, slashes and fees recorded on the ledger since `from`.
    fn account_ledger_events(&mut self, from: usize) {
        let events: Vec<LedgerEvent> = self.ledger.events()[from..]
            .iter()
            .map(|r| r.event.clone())
            .collect();
        for event in events {
            match event {
                LedgerEvent::RewardPaid {
                    sp,
                    storage,
                    auditing,
                } => {
                    if let Some(u) = self.utility.get_mut(&sp) {
                        u.storage_rewards += storage.as_f64();
                        u.auditor_rewards += auditing.as_f64();
                    }
                }
                LedgerEvent::Slashed {
                    sp,
                    reason,
                    taken,
                    reporter,
                    reporter_share,
                    ..
                } => {
                    if let Some(u) = self.utility.get_mut(&sp) {
                        u.slash_losses += taken.as_f64();
                        u.slash_events += 1;
                        if reason == SlashReason::AuditTheAuditor {
                            u.ata_slash_losses += taken.as_f64();
                        }
                    }
                    if let Some(u) = reporter.and_then(|r| self.utility.get_mut(&r)) {
                        u.evidence_rewards += reporter_share.as_f64();
                    }
                }
                LedgerEvent::FeeCharged {
                    account: AccountId::Sp(sp),
                    amount,
                } => {
                    if let Some(u) = self.utility.get_mut(&sp) {
                        u.fees += amount.as_f64();
                    }
                }
                _ => {}
            }
        }
    }

    pub fn run(&mut self, epochs: u64) {
        for _ in 0..epochs {
            self.run_epoch();
        }
    }

    pub fn slash_count(&self) -> usize {
        self.reports.iter().map(|r| r.penalties.len()).sum()
    }
}
