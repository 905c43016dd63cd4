use hotstore_core::reliability::{
    availability, binomial, dc_shortfall, durability, nines, AvailabilityModel, FailureModel,
    HOURS_PER_YEAR,
};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use proptest::prelude::*;

fn q(x: f64) -> BigRational {
    BigRational::from_float(x).unwrap()
}

fn exact_binomial(n: u32, r: u32) -> BigRational {
    let mut acc = BigRational::one();
    for i in 0..r {
        acc *= BigRational::new(BigInt::from(n - i), BigInt::from(i + 1));
    }
    acc
}

fn exact_durability(m: &FailureModel) -> f64 {
    let p = q(m.p_chunk_loss_on_trigger);
    let t = q(m.mttd_hours) + q(m.mttr_rebuild_hours);
    let window = p.clone() * t / q(HOURS_PER_YEAR);
    let mut pow = BigRational::one();
    for _ in 0..m.m {
        pow *= window.clone();
    }
    let v = BigRational::from_integer(BigInt::from(m.n_nodes))
        * p
        * exact_binomial(m.n_nodes - 1, m.m)
        * pow;
    v.to_f64().unwrap()
}

fn model(n: u32, m: u32, p: f64, mttd: f64, mttr: f64) -> FailureModel {
    FailureModel {
        n_nodes: n,
        m,
        k: n - m,
        trigger_rate: 1.0,
        p_chunk_loss_on_trigger: p,
        mttd_hours: mttd,
        mttr_rebuild_hours: mttr,
    }
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        ((a - b) / b).abs()
    }
}

#[test]
fn float_path_matches_exact_oracle_on_grid() {
    let mut points = 0;
    for (n, m) in [(6, 2), (12, 4), (16, 5), (16, 6), (20, 8)] {
        for p in [0.01, 0.1, 0.25, 0.5, 1.0] {
            for (mttd, mttr) in [(1.0, 1.0), (12.0, 12.0), (24.0, 12.0), (72.5, 48.25)] {
                let fm = model(n, m, p, mttd, mttr);
                let got = durability(&fm).unwrap();
                let want = exact_durability(&fm);
                assert!(rel(got, want) <= 1e-9, "{fm:?}: {got} vs {want}");
                points += 1;
            }
        }
    }
    assert_eq!(points, 100);
}

#[test]
fn reference_and_one_fewer_parity() {
    let r = FailureModel::reference();
    let p6 = durability(&r).unwrap();
    assert!(rel(p6, 3.01e-12) < 0.01);
    assert_eq!(nines(p6), 11);
    let m5 = FailureModel { m: 5, k: 11, ..r };
    let p5 = durability(&m5).unwrap();
    assert!(rel(p5, exact_durability(&m5)) <= 1e-9);
    assert!(p5 > p6);
}

#[test]
fn binomial_matches_exact() {
    for n in 0..40 {
        for r in 0..=n {
            let want = exact_binomial(n, r).to_f64().unwrap();
            assert!(rel(binomial(n, r), want) <= 1e-12, "C({n},{r})");
        }
        assert_eq!(binomial(n, n + 1), 0.0);
    }
}

#[test]
fn reference_availability() {
    let p_loss = durability(&FailureModel::reference()).unwrap();
    let a = availability(&AvailabilityModel::reference(p_loss)).unwrap();
    assert!(rel(a, 1.35e-4) < 0.01, "{a}");
    // Direct sum of the three terms.
    let u: f64 = 0.98;
    let up = u.powi(5) + 5.0 * u.powi(4) * 0.02 + 10.0 * u.powi(3) * 0.02f64.powi(2);
    assert!((a - (p_loss + 30.0 / 525_600.0 + 1.0 - up)).abs() < 1e-15);
}

#[test]
fn shortfall_edges() {
    assert_eq!(dc_shortfall(5, 1.0, 3), 0.0);
    assert!((dc_shortfall(5, 0.0, 1) - 1.0).abs() < 1e-15);
    assert!(dc_shortfall(5, 0.3, 0) < 1e-15);
}

#[test]
fn invalid_inputs() {
    let r = FailureModel::reference();
    assert!(durability(&FailureModel { m: 16, ..r }).is_err());
    assert!(durability(&FailureModel {
        p_chunk_loss_on_trigger: 1.5,
        ..r
    })
    .is_err());
    assert!(durability(&FailureModel {
        mttd_hours: -1.0,
        ..r
    })
    .is_err());
    assert!(availability(&AvailabilityModel {
        dc_uptime: 1.1,
        ..AvailabilityModel::reference(0.0)
    })
    .is_err());
}

proptest! {
    #[test]
    fn loss_grows_with_window_and_trigger_probability(
        n in 6u32..24,
        m_frac in 0.1f64..0.6,
        p in 0.0f64..1.0,
        dp in 0.0f64..0.5,
        t in 0.0f64..200.0,
        dt in 0.0f64..200.0,
    ) {
        let m = ((n as f64 * m_frac) as u32).max(1);
        let base = durability(&model(n, m, p, t, 0.0)).unwrap();
        let longer = durability(&model(n, m, p, t + dt, 0.0)).unwrap();
        let likelier = durability(&model(n, m, (p + dp).min(1.0), t, 0.0)).unwrap();
        prop_assert!(longer >= base);
        prop_assert!(likelier >= base);
    }

    #[test]
    fn loss_shrinks_with_more_parity(n in 8u32..24, p in 0.01f64..1.0, t in 1.0f64..200.0) {
        // Holds whenever the per-window loss odds are small, which covers any
        // realistic repair window.
        let mut prev = f64::INFINITY;
        for m in 1..n - 1 {
            let v = durability(&model(n, m, p, t, 0.0)).unwrap();
            prop_assert!(v <= prev, "m={m}: {v} > {prev}");
            prev = v;
        }
    }
}
