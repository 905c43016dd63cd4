//! Closed-form durability and availability estimates.
//!
//! Durability: with `T = mttd + mttr` hours, a loss event needs `m` further
//! chunk losses inside one critical window after a first trigger:
//!
//! ```text
//! P(loss) = (n * p) * C(n - 1, m) * (p * T / 8760)^m
//! ```
//!
//! `p` is the probability that a trigger destroys a chunk. The leading
//! `n * p` is the expected number of first losses per year when every node
//! sees one trigger a year.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const HOURS_PER_YEAR: f64 = 8760.0;
pub const MINUTES_PER_YEAR: f64 = 525_600.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReliabilityError {
    #[error("invalid reliability parameter: {0}")]
    InvalidParams(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureModel {
    pub n_nodes: u32,
    /// Tolerable losses.
    pub m: u32,
    /// Chunks required to decode.
    pub k: u32,
    /// Annual trigger events per node. Kept for reporting; the loss formula
    /// folds it into `p_chunk_loss_on_trigger`.
    pub trigger_rate: f64,
    pub p_chunk_loss_on_trigger: f64,
    pub mttd_hours: f64,
    pub mttr_rebuild_hours: f64,
}

impl FailureModel {
    /// 16 nodes, 6 tolerable losses, 50% loss per trigger, 24h detection
    /// and 12h rebuild.
    pub fn reference() -> Self {
        FailureModel {
            n_nodes: 16,
            m: 6,
            k: 10,
            trigger_rate: 1.0,
            p_chunk_loss_on_trigger: 0.5,
            mttd_hours: 24.0,
            mttr_rebuild_hours: 12.0,
        }
    }

    pub fn t_critical_hours(&self) -> f64 {
        self.mttd_hours + self.mttr_rebuild_hours
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AvailabilityModel {
    pub dc_count: u32,
    pub dc_uptime: f64,
    pub min_dcs_required: u32,
    pub systemic_outage_minutes_per_year: f64,
    pub p_data_loss: f64,
}

impl AvailabilityModel {
    pub fn reference(p_data_loss: f64) -> Self {
        AvailabilityModel {
            dc_count: 5,
            dc_uptime: 0.98,
            min_dcs_required: 3,
            systemic_outage_minutes_per_year: 30.0,
            p_data_loss,
        }
    }
}

/// `C(n, r)` as a float, exact for the sizes used here.
pub fn binomial(n: u32, r: u32) -> f64 {
    if r > n {
        return 0.0;
    }
    let r = r.min(n - r);
    (0..r).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

pub fn durability(model: &FailureModel) -> Result<f64, ReliabilityError> {
    if model.m >= model.n_nodes {
        return Err(ReliabilityError::InvalidParams(format!(
            "m = {} must be below n_nodes = {}",
            model.m, model.n_nodes
        )));
    }
    let p = model.p_chunk_loss_on_trigger;
    if !(0.0..=1.0).contains(&p) {
        return Err(ReliabilityError::InvalidParams(format!(
            "p_chunk_loss_on_trigger = {p}"
        )));
    }
    if !(model.mttd_hours >= 0.0 && model.mttr_rebuild_hours >= 0.0) {
        return Err(ReliabilityError::InvalidParams(
            "times must be non-negative".into(),
        ));
    }
    let window = p * model.t_critical_hours() / HOURS_PER_YEAR;
    Ok(model.n_nodes as f64
        * p
        * binomial(model.n_nodes - 1, model.m)
        * window.powi(model.m as i32))
}

/// Probability that fewer than `min_dcs_required` of `dc_count` independent
/// data centers are up.
pub fn dc_shortfall(dc_count: u32, uptime: f64, min_required: u32) -> f64 {
    let up: f64 = (min_required..=dc_count)
        .map(|j| {
            binomial(dc_count, j)
                * uptime.powi(j as i32)
                * (1.0 - uptime).powi((dc_count - j) as i32)
        })
        .sum();
    (1.0 - up).max(0.0)
}

pub fn availability(model: &AvailabilityModel) -> Result<f64, ReliabilityError> {
    if model.min_dcs_required > model.dc_count {
        return Err(ReliabilityError::InvalidParams(format!(
            "min_dcs_required = {} exceeds dc_count = {}",
            model.min_dcs_required, model.dc_count
        )));
    }
    for (name, v) in [
        ("dc_uptime", model.dc_uptime),
        ("p_data_loss", model.p_data_loss),
    ] {
        if !(0.0..=1.0).contains(&v) {
            return Err(ReliabilityError::InvalidParams(format!("{name} = {v}")));
        }
    }
    if !(model.systemic_outage_minutes_per_year >= 0.0) {
        return Err(ReliabilityError::InvalidParams(
            "systemic outage must be non-negative".into(),
        ));
    }
    Ok(model.p_data_loss
        + model.systemic_outage_minutes_per_year / MINUTES_PER_YEAR
        + dc_shortfall(model.dc_count, model.dc_uptime, model.min_dcs_required))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureRate {
    pub component: &'static str,
    pub rate: f64,
    pub unit: &'static str,
}

/// Published hardware failure rates used to pick model inputs.
pub fn failure_rate_table() -> Vec<FailureRate> {
    vec![
        FailureRate {
            component: "drive",
            rate: 0.02,
            unit: "per year",
        },
        FailureRate {
            component: "latent sector error",
            rate: 0.0345,
            unit: "per drive lifetime",
        },
        FailureRate {
            component: "host (low)",
            rate: 0.01,
            unit: "per year",
        },
        FailureRate {
            component: "host (high)",
            rate: 0.05,
            unit: "per year",
        },
        FailureRate {
            component: "rack",
            rate: 0.05,
            unit: "per year",
        },
        FailureRate {
            component: "data center",
            rate: 0.02,
            unit: "per year",
        },
        FailureRate {
            component: "systemic",
            rate: 0.000057,
            unit: "per year",
        },
    ]
}

/// Number of leading nines in `1 - p`.
pub fn nines(p: f64) -> u32 {
    if p <= 0.0 {
        return u32::MAX;
    }
    (-p.log10()).floor().max(0.0) as u32
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_durability() {
        let p = durability(&FailureModel::reference()).unwrap();
        assert!(((p - 3.01e-12) / 3.01e-12).abs() < 0.01, "{p}");
        assert_eq!(nines(p), 11);
    }

    #[test]
    fn zero_trigger_probability_never_loses() {
        let mut m = FailureModel::reference();
        m.p_chunk_loss_on_trigger = 0.0;
        assert_eq!(durability(&m).unwrap(), 0.0);
        m.m = 16;
        assert!(durability(&m).is_err());
    }

    #[test]
    fn reference_availability() {
        let p_loss = durability(&FailureModel::reference()).unwrap();
        let p = availability(&AvailabilityModel::reference(p_loss)).unwrap();
        assert!(((p - 1.35e-4) / 1.35e-4).abs() < 0.01, "{p}");
        assert_eq!(nines(p), 3);
    }

    #[test]
    fn perfect_infrastructure() {
        let m = AvailabilityModel {
            dc_count: 5,
            dc_uptime: 1.0,
            min_dcs_required: 3,
            systemic_outage_minutes_per_year: 0.0,
            p_data_loss: 0.0,
        };
        assert_eq!(availability(&m).unwrap(), 0.0);
    }

    #[test]
    fn all_dcs_required() {
        let u: f64 = 0.98;
        assert!((dc_shortfall(5, u, 5) - (1.0 - u.powi(5))).abs() < 1e-15);
        let m = AvailabilityModel {
            min_dcs_required: 6,
            ..AvailabilityModel::reference(0.0)
        };
        assert!(availability(&m).is_err());
    }

    #[test]
    fn rate_table_values() {
        let t = failure_rate_table();
        let get = |c: &str| t.iter().find(|r| r.component == c).unwrap().rate;
        assert_eq!(get("drive"), 0.02);
        assert_eq!(get("latent sector error"), 0.0345);
        assert_eq!(get("systemic"), 0.000057);
    }
}
