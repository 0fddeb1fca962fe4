use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::RunLog;
use crate::error::{Error, Result};

/// A cost ratio that may never have been reached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Attainment {
    Value(f64),
    NotAttained,
}

impl Attainment {
    pub fn value(self) -> Option<f64> {
        match self {
            Attainment::Value(v) => Some(v),
            Attainment::NotAttained => None,
        }
    }
}

impl std::fmt::Display for Attainment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Attainment::Value(v) => write!(f, "{v:.4}"),
            Attainment::NotAttained => f.write_str("not attained"),
        }
    }
}

impl Serialize for Attainment {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Attainment::Value(v) => s.serialize_f64(*v),
            Attainment::NotAttained => s.serialize_str("not attained"),
        }
    }
}

impl<'de> Deserialize<'de> for Attainment {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Attainment::Value(v)),
            Raw::Text(t) if t == "not attained" => Ok(Attainment::NotAttained),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("unexpected {t:?}"))),
        }
    }
}

/// Communication metrics of a run relative to a baseline run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedMetrics {
    #[serde(rename = "P@CG")]
    pub p_cg: f64,
    #[serde(rename = "P@99")]
    pub p_99: Attainment,
    #[serde(rename = "P@98")]
    pub p_98: Attainment,
    #[serde(rename = "R@CG")]
    pub r_cg: usize,
    #[serde(rename = "MRR@CG")]
    pub mrr_cg: f64,
    #[serde(rename = "Hits@10@CG")]
    pub hits10_cg: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    match (num, den) {
        (0, 0) => 1.0,
        (_, 0) => f64::INFINITY,
        _ => num as f64 / den as f64,
    }
}

fn attainment(run: &RunLog, baseline: &RunLog, threshold: f64) -> Attainment {
    match (run.first_reaching(threshold), baseline.first_reaching(threshold)) {
        (Some(r), Some(b)) => Attainment::Value(ratio(r.cumulative_params, b.cumulative_params)),
        _ => Attainment::NotAttained,
    }
}

/// Convergence is the best-validation row. MRR@CG is the test MRR there;
/// P@CG compares cumulative traffic at both runs' convergence; P@99/P@98
/// compare traffic at the first row whose test MRR reaches 99%/98% of the
/// baseline's MRR@CG, in each run.
pub fn derive_metrics(run: &RunLog, baseline: &RunLog) -> Result<DerivedMetrics> {
    let empty = || Error::InvalidArgument("cannot derive metrics from an empty run log".into());
    let run_cg = run.best().ok_or_else(empty)?;
    let base_cg = baseline.best().ok_or_else(empty)?;
    Ok(DerivedMetrics {
        p_cg: ratio(run_cg.cumulative_params, base_cg.cumulative_params),
        p_99: attainment(run, baseline, 0.99 * base_cg.test_mrr),
        p_98: attainment(run, baseline, 0.98 * base_cg.test_mrr),
        r_cg: run_cg.round,
        mrr_cg: run_cg.test_mrr,
        hits10_cg: run_cg.test_hits10,
    })
}
