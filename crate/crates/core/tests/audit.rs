use std::collections::{BTreeMap, BTreeSet};

use hotstore_core::audit::{
    audit_the_auditor, bft_f, build_scoreboard, compress_scoreboard, compute_score,
    decompress_scoreboard, derive_challenges, derive_onchain_challenges, forge,
    onchain_auditee_count, prove, AuditError, AuditorState, BoardEntries, EpochAudit,
};
use hotstore_core::codec::CodingParams;
use hotstore_core::commitment::MerkleTree;
use hotstore_core::coordination::{
    derive_genesis_seed, AccountId, BlobRegistration, LedgerState, SlashReason, SpId,
};
use hotstore_core::economics::EconomicParams;
use hotstore_core::prep::{chunk_tree, prepare, Blob, BlobId, PreparedBlob};
use hotstore_core::tokens::Tokens;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

struct Fixture {
    ledger: LedgerState,
    prepared: PreparedBlob,
}

impl Fixture {
    fn new(params: CodingParams, chunksets: usize, sps: u32, chunk: usize, sample: usize) -> Self {
        let mut ledger = LedgerState::new(derive_genesis_seed(42), EconomicParams::reference());
        for i in 0..sps {
            ledger
                .register_sp(SpId(i), Tokens::whole(1000), 1 << 40)
                .unwrap();
        }
        ledger.fund_external(0, Tokens::whole(1000));
        let cs = chunk * params.k();
        let blob = Blob {
            id: BlobId("blob".into()),
            bytes: (0..cs * chunksets).map(|i| (i * 7 % 256) as u8).collect(),
            paid_duration: 1 << 20,
        };
        let prepared = prepare(&blob, &params, cs, sample).unwrap();
        let reg = BlobRegistration::from_manifest(
            &prepared.manifest(),
            1 << 20,
            AccountId::External(0),
            Tokens::whole(10),
        );
        ledger.register_blob(reg).unwrap();
        let all: BTreeSet<SpId> = (0..sps).map(SpId).collect();
        ledger.mark_ready(&BlobId("blob".into()), &all).unwrap();
        Fixture { ledger, prepared }
    }

    fn tree(&self, cs: u32, ci: u32) -> MerkleTree {
        let c = &self.prepared.chunksets[cs as usize].chunks[ci as usize];
        chunk_tree(&c.payload, self.prepared.sample_size).unwrap()
    }
}

#[test]
fn challenge_count_is_binomial() {
    // 1000 chunksets of 10 chunks: 10^4 chunks.
    let fx = Fixture::new(CodingParams::reed_solomon(8, 2).unwrap(), 1000, 12, 8, 8);
    let p_a = 0.0076;
    let trials = 1000;
    let mut total = 0usize;
    for epoch in 0..trials {
        let ch = derive_challenges(&fx.ledger, epoch, p_a, 7);
        for c in &ch {
            assert_eq!(c.auditors.len(), 7);
            assert!(!c.auditors.contains(&c.auditee));
            assert_eq!(c.auditors.iter().collect::<BTreeSet<_>>().len(), 7);
        }
        total += ch.len();
    }
    let mean = total as f64 / trials as f64;
    let expected = 1e4 * p_a;
    let se = (1e4 * p_a * (1.0 - p_a) / trials as f64).sqrt();
    assert!(
        (mean - expected).abs() <= 3.0 * se,
        "mean {mean} vs {expected} ± {se}"
    );
}

#[test]
fn challenges_are_deterministic_and_epoch_specific() {
    let fx = Fixture::new(CodingParams::reed_solomon(4, 2).unwrap(), 20, 9, 16, 4);
    assert_eq!(
        derive_challenges(&fx.ledger, 3, 0.3, 4),
        derive_challenges(&fx.ledger, 3, 0.3, 4)
    );
    assert_ne!(
        derive_challenges(&fx.ledger, 3, 0.3, 4),
        derive_challenges(&fx.ledger, 4, 0.3, 4)
    );
    assert!(derive_challenges(&fx.ledger, 3, 0.0, 4).is_empty());
    assert_eq!(derive_challenges(&fx.ledger, 3, 1.0, 4).len(), 20 * 6);
}

#[test]
fn honest_and_forged_proofs() {
    let fx = Fixture::new(CodingParams::reed_solomon(4, 2).unwrap(), 4, 8, 64, 8);
    let ch = derive_challenges(&fx.ledger, 0, 1.0, 3);
    let mut st = AuditorState::default();
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    for c in &ch {
        let root = *fx.ledger.chunk_root(&c.chunk).unwrap();
        let tree = fx.tree(c.chunk.chunkset_index, c.chunk.chunk_index);
        assert!(st.record(c, &root, Some(&prove(c, &tree)), 0.01));
        assert!(!st.record(c, &root, Some(&forge(c, &root, &mut rng)), 0.01));
        assert!(!st.record(c, &root, None, 0.01));
    }
    assert_eq!(st.evidence.len(), ch.len());
    assert_eq!(st.retained_count(), ch.len());
    // A proof for one challenge cannot answer another.
    let (a, b) = (&ch[0], &ch[1]);
    let proof_a = prove(a, &fx.tree(a.chunk.chunkset_index, a.chunk.chunk_index));
    assert!(!st.record(
        b,
        fx.ledger.chunk_root(&b.chunk).unwrap(),
        Some(&proof_a),
        0.01
    ));
    st.prune(1);
    assert_eq!(st.retained_count(), ch.len());
    st.prune(2);
    assert_eq!(st.retained_count(), 0);
}

#[test]
fn epoch_cycle_scores_and_evidence() {
    let mut fx = Fixture::new(CodingParams::reed_solomon(4, 2).unwrap(), 6, 10, 32, 8);
    let challenges = derive_challenges(&fx.ledger, 0, 1.0, 9);
    let mut ea = EpochAudit::post(&mut fx.ledger, challenges.clone());
    let bad = SpId(0);
    for a in 0..10 {
        let board = build_scoreboard(SpId(a), 0, &challenges, |c| c.auditee != bad);
        ea.publish(&mut fx.ledger, board).unwrap();
    }
    let sps: Vec<SpId> = (0..10).map(SpId).collect();
    let scores = ea.scores(&sps, 10);
    assert_eq!(scores[&bad], 0.0);
    assert!(sps[1..].iter().all(|s| scores[s] == 1.0));

    let wrong = build_scoreboard(SpId(1), 0, &challenges[..1], |_| true);
    assert!(matches!(
        ea.publish(&mut fx.ledger, wrong),
        Err(AuditError::BoardMismatch(_))
    ));

    let target = challenges
        .iter()
        .find(|c| c.auditee == bad)
        .unwrap()
        .clone();
    let root = *fx.ledger.chunk_root(&target.chunk).unwrap();
    let forged = forge(&target, &root, &mut ChaCha20Rng::seed_from_u64(3));
    let reporter = target.auditors[0];
    let outsider = (0..10)
        .map(SpId)
        .find(|s| !target.auditors.contains(s) && *s != bad)
        .unwrap_or(bad);
    assert!(matches!(
        ea.submit_evidence(&mut fx.ledger, &forged, outsider),
        Err(AuditError::EvidenceMismatch)
    ));
    let penalty = ea
        .submit_evidence(&mut fx.ledger, &forged, reporter)
        .unwrap();
    assert_eq!(penalty.sp, bad);
    assert_eq!(penalty.reason, SlashReason::InvalidProofEvidence);
    assert_eq!(penalty.amount, Tokens::from_f64(fx.ledger.econ.s_a));
    assert!(matches!(
        ea.submit_evidence(&mut fx.ledger, &forged, reporter),
        Err(AuditError::DuplicateEvidence(_))
    ));

    let honest = challenges.iter().find(|c| c.auditee != bad).unwrap();
    let good = prove(
        honest,
        &fx.tree(honest.chunk.chunkset_index, honest.chunk.chunk_index),
    );
    assert!(matches!(
        ea.submit_evidence(&mut fx.ledger, &good, honest.auditors[0]),
        Err(AuditError::EvidenceVerifies { .. })
    ));
}

#[test]
fn missing_scoreboards_count_as_zeros() {
    let mut fx = Fixture::new(CodingParams::reed_solomon(4, 2).unwrap(), 6, 10, 32, 8);
    let challenges = derive_challenges(&fx.ledger, 0, 1.0, 9);
    let mut ea = EpochAudit::post(&mut fx.ledger, challenges.clone());
    // Four of ten withhold: more than f = 3, so the trimmed mean drops below 1.
    for a in 4..10 {
        ea.publish(
            &mut fx.ledger,
            build_scoreboard(SpId(a), 0, &challenges, |_| true),
        )
        .unwrap();
    }
    let evals = ea.peer_evaluations(SpId(9));
    assert_eq!(evals.values().filter(|(ok, _)| *ok == 0).count(), 4);
    let s = ea.scores(&[SpId(9)], 10)[&SpId(9)];
    assert!(s < 1.0 && s > 0.0, "{s}");
}

#[test]
fn onchain_count_rounding() {
    assert_eq!(onchain_auditee_count(1.0, 50), 0);
    assert_eq!(onchain_auditee_count(0.0, 50), 50);
    assert_eq!(onchain_auditee_count(0.9, 50), 10);
    assert_eq!(onchain_auditee_count(0.5, 50), 38);
    assert_eq!(onchain_auditee_count(0.95, 50), 5);
    assert_eq!(onchain_auditee_count(2.0, 50), 0);
}

#[test]
fn onchain_challenges_hit_only_the_targets_holdings() {
    let fx = Fixture::new(CodingParams::reed_solomon(4, 2).unwrap(), 30, 8, 16, 4);
    let sp = SpId(3);
    let held: BTreeSet<_> = fx.ledger.holdings(sp).into_iter().collect();
    let ch = derive_onchain_challenges(&fx.ledger, 2, sp, 50);
    assert_eq!(ch.len(), 50);
    for c in &ch {
        assert_eq!(c.sp, sp);
        assert!(held.contains(&c.chunk));
        assert!(c.sample_index < 4);
    }
    assert_eq!(ch, derive_onchain_challenges(&fx.ledger, 2, sp, 50));
    assert!(derive_onchain_challenges(&fx.ledger, 2, SpId(99), 5).is_empty());
}

#[test]
fn ata_selection_rate() {
    let fx = Fixture::new(CodingParams::reed_solomon(4, 2).unwrap(), 200, 10, 16, 4);
    let challenges = derive_challenges(&fx.ledger, 0, 1.0, 9);
    let board = build_scoreboard(SpId(0), 0, &challenges, |c| c.id % 2 == 0);
    let ones = board.ones();
    let mut picked = 0usize;
    let trials = 200;
    for t in 0..trials {
        let sel = audit_the_auditor(&board, &challenges, 0.1, fx.ledger.beacon(t, "ata"));
        for s in &sel {
            assert_eq!(challenges[s.challenge_id as usize].auditee, s.auditee);
            assert_eq!(s.challenge_id % 2, 0, "only 1-entries are re-checked");
        }
        picked += sel.len();
    }
    let n = (ones * trials as usize) as f64;
    let mean = picked as f64 / n;
    let se = (0.1 * 0.9 / n).sqrt();
    assert!((mean - 0.1).abs() < 4.0 * se, "{mean}");
    assert!(audit_the_auditor(&board, &challenges, 0.0, [0; 32]).is_empty());
}

fn naive_trimmed(values: &[f64], f: usize) -> f64 {
    let mut v = values.to_vec();
    for _ in 0..f {
        let (imax, _) = v
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        v.remove(imax);
        let (imin, _) = v
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        v.remove(imin);
    }
    v.iter().sum::<f64>() / v.len() as f64
}

fn board_strategy() -> impl Strategy<Value = BoardEntries> {
    prop::collection::btree_map(
        (0u32..500).prop_map(SpId),
        prop::collection::vec(prop::bool::weighted(0.8), 0..300),
        0..20,
    )
}

proptest! {
    #[test]
    fn score_matches_naive_trimmed_mean(fracs in prop::collection::vec((0u64..=20, 1u64..=20), 1..40)) {
        let evals: BTreeMap<SpId, (u64, u64)> =
            fracs.iter().enumerate().map(|(i, &(ok, t))| (SpId(i as u32), (ok.min(t), t))).collect();
        let values: Vec<f64> = evals.values().map(|&(ok, t)| ok as f64 / t as f64).collect();
        let f = (values.len() - 1) / 2;
        let got = compute_score(SpId(0), 0, &evals, f).unwrap().score;
        prop_assert!((got - naive_trimmed(&values, f)).abs() < 1e-12);
        prop_assert!(compute_score(SpId(0), 0, &evals, f + 1).is_err());
    }

    #[test]
    fn adversaries_cannot_push_scores_outside_honest_range(
        n in 7usize..=31,
        honest in prop::collection::vec(0.0f64..=1.0, 31),
        adversarial in prop::collection::vec(prop::sample::select(vec![0.0f64, 1.0, 0.5]), 10),
    ) {
        let f = bft_f(n);
        let mut evals = BTreeMap::new();
        let h = &honest[..n - f];
        for (i, &x) in h.iter().enumerate() {
            evals.insert(SpId(i as u32), ((x * 1e6).round() as u64, 1_000_000));
        }
        for (j, &x) in adversarial[..f].iter().enumerate() {
            evals.insert(SpId((n - f + j) as u32), ((x * 1e6).round() as u64, 1_000_000));
        }
        let s = compute_score(SpId(99), 0, &evals, f).unwrap().score;
        let lo = h.iter().map(|x| (x * 1e6).round() / 1e6).fold(f64::INFINITY, f64::min);
        let hi = h.iter().map(|x| (x * 1e6).round() / 1e6).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(s >= lo - 1e-12 && s <= hi + 1e-12);
    }

    #[test]
    fn scoreboard_compression_round_trips(board in board_strategy()) {
        let bytes = compress_scoreboard(&board);
        prop_assert_eq!(decompress_scoreboard(&bytes).unwrap(), board);
    }

    #[test]
    fn arbitrary_bytes_decode_canonically_or_fail(bytes in prop::collection::vec(any::<u8>(), 0..64)) {
        if let Ok(board) = decompress_scoreboard(&bytes) {
            prop_assert_eq!(compress_scoreboard(&board), bytes);
        }
    }

    #[test]
    fn mutated_encodings_never_panic(board in board_strategy(), pos in any::<prop::sample::Index>(), val in any::<u8>()) {
        let mut bytes = compress_scoreboard(&board);
        let i = pos.index(bytes.len());
        bytes[i] = val;
        if let Ok(b) = decompress_scoreboard(&bytes) {
            prop_assert_eq!(compress_scoreboard(&b), bytes);
        }
    }
}
