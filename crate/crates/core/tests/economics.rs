use hotstore_core::economics::{
    check_all, check_fake_storage, check_store_vs_retrieve, detection_lower_bound,
    expected_onchain_samples, normalize_rewards, CloudPricing, EconomicParams, Relation,
};
use proptest::prelude::*;

const TOML: &str = r#"
W = 0.01
rwd_st = 3.0
rwd_au = 0.05
p_a = 0.2
C = 50
p_ata = 0.05
S_a = 200.0
S_ata = 1000.0
r_slash = 0.5
c_s = 1.0
c_r = 20.0
c_verify = 0.005
c_retain = 0.005
epsilon = 0.01
epochs_per_month = 30
auditors_per_audit = 9
"#;

#[test]
fn toml_uses_symbolic_names() {
    let p: EconomicParams = toml::from_str(TOML).unwrap();
    assert_eq!(p.onchain_challenges, 50);
    assert_eq!(p.s_ata, 1000.0);
    assert_eq!(p.usd_per_token, 1.0);
    let back: EconomicParams = toml::from_str(&toml::to_string(&p).unwrap()).unwrap();
    assert_eq!(back, p);
    assert!(toml::from_str::<EconomicParams>(&format!("{TOML}\nbogus = 1\n")).is_err());
}

#[test]
fn candidate_params_pass_with_margin() {
    let p: EconomicParams = toml::from_str(TOML).unwrap();
    let r = check_all(&p, 0.1, 6.0).unwrap();
    assert!(r.all_satisfied(), "{r:?}");
    let by = |n: &str| r.entries.iter().find(|e| e.name == n).unwrap();
    assert!(by("store_vs_retrieve").ratio >= 2.0);
    assert!(by("ata_calibration").ratio >= 2.0);
    assert!(by("participation").ratio >= 2.0);
    assert_eq!(r.min_audit_probability, Some(0.05));
}

#[test]
fn s3_threshold() {
    let c = CloudPricing::s3_standard();
    let mut p = EconomicParams::reference();
    p.c_s = c.storage_cost_per_chunk_day();
    p.c_r = c.retrieval_cost_per_chunk();
    let (_, min_pa) = check_store_vs_retrieve(&p).unwrap();
    // 0.023 / 30 per GB-day against 5 * 0.02 per GB; chunk size cancels.
    assert!((min_pa - 0.023 / 30.0 / 0.1).abs() < 1e-15);
    assert!((0.0076..=0.0077).contains(&min_pa));
}

#[test]
fn validation_rejects_out_of_range() {
    let base: EconomicParams = toml::from_str(TOML).unwrap();
    let cases: [fn(&mut EconomicParams); 8] = [
        |p| p.p_a = 1.5,
        |p| p.p_ata = -0.1,
        |p| p.epsilon = 0.0,
        |p| p.epsilon = 1.0,
        |p| p.c_s = f64::NAN,
        |p| p.s_a = -1.0,
        |p| p.epochs_per_month = 0,
        |p| p.usd_per_token = 0.0,
    ];
    for mutate in cases {
        let mut p = base.clone();
        mutate(&mut p);
        assert!(check_all(&p, 0.1, 1.0).is_err(), "{p:?}");
    }
    assert!(check_fake_storage(&base, 0.0, 1.0).is_err());
}

#[test]
fn fake_storage_entry_is_strict() {
    let mut p: EconomicParams = toml::from_str(TOML).unwrap();
    let (e, p_sa) = check_fake_storage(&p, 0.1, 1.0).unwrap();
    assert_eq!(e.relation, Relation::Exceeds);
    assert!(p_sa >= 0.632);
    p.s_a = e.rhs / p_sa;
    let (e, _) = check_fake_storage(&p, 0.1, 1.0).unwrap();
    assert!((e.lhs - e.rhs).abs() < 1e-12);
}

proptest! {
    #[test]
    fn detection_bound_monotone(f in 0.001f64..0.999, df in 0.0f64..0.5, c in 1u32..200, dc in 0u32..100) {
        let b = detection_lower_bound(f, c);
        prop_assert!((0.0..=1.0).contains(&b));
        prop_assert!(detection_lower_bound((f + df).min(1.0), c) >= b - 1e-15);
        prop_assert!(detection_lower_bound(f, c + dc) >= b - 1e-15);
    }

    #[test]
    fn detection_bound_matches_direct_form(f in 0.001f64..1.0, c in 1u32..200) {
        let s = 1.0 - f;
        let samples = (1.0 - s * s) * c as f64;
        prop_assert!((expected_onchain_samples(f, c) - samples).abs() < 1e-12);
        prop_assert!((detection_lower_bound(f, c) - (1.0 - (samples * (1.0 - f).ln()).exp())).abs() < 1e-12);
    }

    #[test]
    fn normalization_pays_out_the_fee(
        w in 1e-6f64..1e6,
        p_a in 1e-4f64..1.0,
        chunks in 1.0f64..1e5,
        apa in 1u32..20,
        epm in 1u32..60,
        split in 0.01f64..=1.0,
    ) {
        let s = normalize_rewards(w, p_a, chunks, apa, epm, split).unwrap();
        prop_assert!(((s.payout_per_gb_month() - w) / w).abs() <= 1e-12);
        prop_assert!((s.rwd_st_per_gb_month - split * w).abs() <= 1e-9 * w);
        prop_assert!(s.rwd_au >= 0.0);
    }

    #[test]
    fn store_vs_retrieve_threshold_is_exact(c_s in 1e-9f64..10.0, c_r in 1e-6f64..100.0) {
        let mut p: EconomicParams = toml::from_str(TOML).unwrap();
        p.c_s = c_s;
        p.c_r = c_r;
        let (_, min_pa) = check_store_vs_retrieve(&p).unwrap();
        p.p_a = (min_pa * 1.000001).min(1.0);
        if min_pa * 1.000001 <= 1.0 {
            prop_assert!(check_store_vs_retrieve(&p).unwrap().0.satisfied);
        }
        p.p_a = min_pa * 0.999999;
        prop_assert!(!check_store_vs_retrieve(&p).unwrap().0.satisfied);
    }
}
