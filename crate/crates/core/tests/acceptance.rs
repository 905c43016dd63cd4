//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

#[path = "support/channel_fuzz.rs"]
mod channel_fuzz;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use hotstore_core::audit::{bft_f, compute_score, onchain_auditee_count, sample_holdings};
use hotstore_core::codec::{decode, encode, repair, CodedChunk, CodingParams};
use hotstore_core::commitment::{verify, MerkleTree, Side};
use hotstore_core::coordination::SpId;
use hotstore_core::economics::{
    check_fake_storage, check_store_vs_retrieve, CloudPricing, EconomicParams,
};
use hotstore_core::reliability::{availability, durability, AvailabilityModel, FailureModel};
use hotstore_core::scenario::{ExperimentOutput, Scenario};
use hotstore_core::sim::{run_trial, Corpus};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: String) -> Outcome {
    if cond {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn durability_reproduction() -> Outcome {
    let model = FailureModel::reference();
    let start = Instant::now();
    let p = durability(&model).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(
        rel(p, 3.01e-12) < 0.01 && elapsed.as_secs_f64() < 1e-3,
        format!(
            "P(loss) = {p:.4e} (target 3.01e-12, rel err {:.2e}) in {elapsed:?}",
            rel(p, 3.01e-12)
        ),
    )
}

fn availability_reproduction() -> Outcome {
    let p_loss = durability(&FailureModel::reference()).map_err(|e| e.to_string())?;
    let p = availability(&AvailabilityModel::reference(p_loss)).map_err(|e| e.to_string())?;
    ensure(
        rel(p, 1.35e-4) < 0.01,
        format!(
            "P(unavailable) = {p:.4e} (target 1.35e-4, rel err {:.2e})",
            rel(p, 1.35e-4)
        ),
    )
}

fn incentive_threshold() -> Outcome {
    let cloud = CloudPricing::s3_standard();
    let params = EconomicParams {
        c_s: cloud.storage_cost_per_chunk_day(),
        c_r: cloud.retrieval_cost_per_chunk(),
        ..EconomicParams::reference()
    };
    let (_, min_pa) = check_store_vs_retrieve(&params).map_err(|e| e.to_string())?;
    ensure(
        (0.0076..=0.0077).contains(&min_pa),
        format!("minimum p_a = {min_pa:.6}"),
    )
}

fn fake_storage_detection() -> Outcome {
    let params = EconomicParams {
        onchain_challenges: 50,
        ..EconomicParams::reference()
    };
    let prct_fake = 0.1;
    let (_, bound) = check_fake_storage(&params, prct_fake, 1.0).map_err(|e| e.to_string())?;

    // An SP holding 1000 chunks with 100 missing scores 0.9 and faces the
    // on-chain sample count for that score.
    let holdings = 1000;
    let fake = (holdings as f64 * prct_fake) as usize;
    let count = onchain_auditee_count(1.0 - prct_fake, 50);
    let trials = 100_000u64;
    let mut caught = 0u64;
    for t in 0..trials {
        let seed: [u8; 32] = Sha256::digest(t.to_be_bytes()).into();
        if sample_holdings(seed, holdings, count)
            .iter()
            .any(|&i| i < fake)
        {
            caught += 1;
        }
    }
    let rate = caught as f64 / trials as f64;
    let sigma = (bound * (1.0 - bound) / trials as f64).sqrt();
    ensure(
        bound >= 0.632 && rate >= bound - 3.0 * sigma,
        format!("P_Sa = {bound:.4}; Monte Carlo catch rate {rate:.4} over {trials} trials ({count} samples)"),
    )
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n)
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| (0..n).filter(|i| m & (1 << i) != 0).collect())
        .collect()
}

fn random_bytes(len: usize, seed: u64) -> Vec<u8> {
    let mut v = vec![0u8; len];
    ChaCha20Rng::seed_from_u64(seed).fill_bytes(&mut v);
    v
}

fn mds_property() -> Outcome {
    let chunk = 64 * 1024;
    let start = Instant::now();
    let mut counts = Vec::new();
    for (params, seed) in [
        (CodingParams::clay_small(), 1),
        (CodingParams::clay_large(), 2),
    ] {
        let data = random_bytes(params.k() * chunk, seed);
        let chunks = encode(&data, &params).map_err(|e| e.to_string())?;
        let all = subsets(params.n(), params.k());
        for s in &all {
            let picked: Vec<CodedChunk> = s.iter().map(|&i| chunks[i].clone()).collect();
            if decode(&picked, &params).map_err(|e| e.to_string())? != data {
                return Err(format!(
                    "({},{}) subset {s:?} decoded wrong bytes",
                    params.k(),
                    params.n() - params.k()
                ));
            }
        }
        counts.push(all.len());
    }
    let elapsed = start.elapsed();
    ensure(
        counts == [15, 495] && elapsed.as_secs() < 60,
        format!(
            "{} + {} subsets decoded at 64 KiB chunks in {elapsed:.2?}",
            counts[0], counts[1]
        ),
    )
}

fn repair_bandwidth() -> Outcome {
    let params = CodingParams::clay_large();
    let (k, d) = (8usize, 11usize);
    let chunk = 64 * 1024;
    let data = random_bytes(k * chunk, 3);
    let b = data.len();
    let expected = d * b / (k * (d - k + 1));
    if expected * k * (d - k + 1) != d * b {
        return Err("blob size does not divide evenly".into());
    }
    let chunks = encode(&data, &params).map_err(|e| e.to_string())?;
    for lost in 0..params.n() {
        let helpers: Vec<_> = chunks.iter().filter(|c| c.index != lost).cloned().collect();
        let (rebuilt, report) = repair(lost, &helpers, &params).map_err(|e| e.to_string())?;
        if rebuilt != chunks[lost] {
            return Err(format!("chunk {lost} rebuilt with different bytes"));
        }
        if report.bytes_downloaded != expected {
            return Err(format!(
                "chunk {lost}: {} bytes downloaded, expected {expected}",
                report.bytes_downloaded
            ));
        }
    }
    let saving = 1.0 - expected as f64 / b as f64;
    ensure(
        saving >= 0.60,
        format!(
            "{expected} helper bytes vs {b} for RS ({:.1}% less), all 12 indices byte-identical",
            saving * 100.0
        ),
    )
}

fn tamper_detection() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let mut false_accepts = 0;
    let cases = 10_000;
    for i in 0..cases {
        let width = rng.gen_range(1..64);
        let leaves: Vec<Vec<u8>> = (0..rng.gen_range(2..100))
            .map(|_| (0..width).map(|_| rng.gen()).collect())
            .collect();
        let tree = MerkleTree::build(&leaves).map_err(|e| e.to_string())?;
        let mut c = tree.commitment();
        let mut p = tree
            .open(rng.gen_range(0..leaves.len()))
            .map_err(|e| e.to_string())?;
        if !verify(&c, &p) {
            return Err("untampered proof rejected".into());
        }
        match i % 4 {
            0 => {
                let bit = rng.gen_range(0..width * 8);
                p.leaf_bytes[bit / 8] ^= 1 << (bit % 8);
            }
            1 => {
                let level = rng.gen_range(0..p.path.len());
                let bit = rng.gen_range(0..256);
                p.path[level].0[bit / 8] ^= 1 << (bit % 8);
            }
            2 => {
                let level = rng.gen_range(0..p.path.len());
                p.path[level].1 = match p.path[level].1 {
                    Side::Left => Side::Right,
                    Side::Right => Side::Left,
                };
            }
            _ => {
                let bit = rng.gen_range(0..256);
                c.root[bit / 8] ^= 1 << (bit % 8);
            }
        }
        if verify(&c, &p) {
            false_accepts += 1;
        }
    }
    ensure(
        false_accepts == 0,
        format!(
            "{cases} mutations over leaf/path hash/path side/root, {false_accepts} false accepts"
        ),
    )
}

fn bft_score_bound() -> Outcome {
    let strategy = (7usize..=31).prop_flat_map(|n| {
        let f = bft_f(n);
        let eval = (1u64..=1000).prop_flat_map(|t| (0..=t, Just(t)));
        (
            Just(n),
            prop::collection::vec(eval.clone(), n - f),
            prop::collection::vec(eval, f),
        )
    });
    let mut runner = TestRunner::new(Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    });
    let result = runner.run(&strategy, |(n, honest, adversarial)| {
        let f = bft_f(n);
        let mut evals = BTreeMap::new();
        for (i, &e) in honest.iter().chain(&adversarial).enumerate() {
            evals.insert(SpId(i as u32), e);
        }
        let frac = |&(ok, t): &(u64, u64)| ok as f64 / t as f64;
        let lo = honest.iter().map(frac).fold(f64::INFINITY, f64::min);
        let hi = honest.iter().map(frac).fold(f64::NEG_INFINITY, f64::max);
        let s = compute_score(SpId(1000), 0, &evals, f).unwrap().score;
        prop_assert!(
            s >= lo - 1e-12 && s <= hi + 1e-12,
            "n={n} score {s} outside [{lo}, {hi}]"
        );
        Ok(())
    });
    match result {
        Ok(()) => Ok(
            "1000 cases, n in [7, 31], f adversarial evaluators: score within honest range".into(),
        ),
        Err(e) => Err(e.to_string()),
    }
}

fn scenario(name: &str) -> Result<Scenario, String> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.scenario"));
    Scenario::load(&path).map_err(|e| e.to_string())
}

fn equilibrium_suite() -> Outcome {
    let trials = 1000;
    let start = Instant::now();
    let mut notes = Vec::new();
    let mut ok = true;

    let nash = scenario("nash_grid")?;
    for pt in &nash.points {
        let r = pt.incentive_report().map_err(|e| e.to_string())?;
        if r.min_ratio() < 2.0 {
            return Err(format!(
                "grid point {} has incentive margin {:.2} < 2",
                pt.label,
                r.min_ratio()
            ));
        }
    }
    for o in nash.run(trials, nash.seed).map_err(|e| e.to_string())? {
        let ExperimentOutput::Nash(t) = &o.result else {
            return Err("nash scenario ran another experiment".into());
        };
        let worst = t
            .rows
            .iter()
            .filter(|r| !r.identical_to_honest)
            .map(|r| r.diff_lower_95)
            .fold(f64::INFINITY, f64::min);
        ok &= t.passed;
        notes.push(format!(
            "nash[{}] {} deviations, min lower95 {worst:.3}",
            o.label,
            t.rows.len()
        ));
    }

    let md = scenario("mutual_dishonesty")?;
    for o in md.run(trials, md.seed).map_err(|e| e.to_string())? {
        let ExperimentOutput::MutualDishonesty(r) = &o.result else {
            return Err("wrong experiment".into());
        };
        ok &= r.negative && r.within_3_sigma && r.defector_improves;
        notes.push(format!(
            "per-'1' {:.4} ± {:.4} vs {:.4}, defector gain {:.2}",
            r.per_one_utility, r.per_one_se, r.closed_form, r.defector_gain_mean
        ));
    }

    let mut co = scenario("coalition")?;
    for pt in &mut co.points {
        let f = bft_f(pt.config.sp_count as usize);
        pt.strategies.coalition_sizes = vec![2, f];
    }
    for o in co.run(trials, co.seed).map_err(|e| e.to_string())? {
        let ExperimentOutput::Coalition(t) = &o.result else {
            return Err("wrong experiment".into());
        };
        ok &= t.passed;
        let worst = t
            .rows
            .iter()
            .map(|r| r.gain_upper_95 - r.epsilon_budget)
            .fold(f64::NEG_INFINITY, f64::max);
        notes.push(format!(
            "coalition sizes {{2, {}}}: max(upper95 - budget) {worst:.3}",
            t.f
        ));
    }

    let elapsed = start.elapsed();
    ok &= elapsed.as_secs() < 600;
    let msg = format!("{} at {trials} trials in {elapsed:.1?}", notes.join("; "));
    ensure(ok, msg)
}

fn channel_conservation() -> Outcome {
    let cases = 10_000;
    for seed in 0..cases {
        channel_fuzz::run_case(seed).map_err(|e| format!("case {seed}: {e}"))?;
    }
    Ok(format!(
        "{cases} random payment sequences settled with payee + payer = deposit"
    ))
}

fn replay_bytes(sc: &Scenario) -> Result<Vec<u8>, String> {
    let mut out = Vec::new();
    for pt in &sc.points {
        let corpus = Corpus::build(&pt.config).map_err(|e| e.to_string())?;
        let world =
            run_trial(&pt.config, &corpus, pt.profile(), sc.seed, 0).map_err(|e| e.to_string())?;
        world
            .ledger
            .write_ndjson(&mut out)
            .map_err(|e| e.to_string())?;
    }
    let outcomes = sc.run(sc.trials, sc.seed).map_err(|e| e.to_string())?;
    out.extend(serde_json::to_vec(&outcomes).map_err(|e| e.to_string())?);
    Ok(out)
}

fn determinism() -> Outcome {
    let sc = scenario("all_honest")?;
    let a = replay_bytes(&sc)?;
    let b = replay_bytes(&scenario("all_honest")?)?;
    ensure(
        a == b,
        format!(
            "two replays of {} ({} trials) produced {} identical bytes",
            sc.name,
            sc.trials,
            a.len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("durability reproduction", durability_reproduction),
        ("availability reproduction", availability_reproduction),
        ("incentive threshold", incentive_threshold),
        ("fake-storage detection", fake_storage_detection),
        ("MDS property", mds_property),
        ("repair bandwidth", repair_bandwidth),
        ("commitment tamper detection", tamper_detection),
        ("BFT score bound", bft_score_bound),
        ("equilibrium suite", equilibrium_suite),
        ("channel conservation", channel_conservation),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = format!("{}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| *f == id || name.contains(f.as_str())) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(msg) => println!("PASS {id:>2} {name}: {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL {id:>2} {name}: {msg}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
