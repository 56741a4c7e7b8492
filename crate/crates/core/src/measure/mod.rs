//! Turning coordinates and schedules into timed samples, and comparing them.

mod landscape;
mod native;
mod synthetic;
mod wilcoxon;

pub use landscape::{Landscape, LandscapeFamily, AMPLITUDE, PLATEAU_LEVELS, RUGGED_AMPLITUDE};
pub use native::NativeBackend;
pub use synthetic::{SyntheticBackend, SyntheticSpec, RULE_GAIN, SKETCH_SPREAD};
pub use wilcoxon::{rank_sum_p, EXACT_LIMIT};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::ir::Sketch;
use crate::space::Coordinate;

/// Repetition and significance settings shared by every measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasureConfig {
    pub repeats: usize,
    pub warmups: usize,
    /// A single run slower than this is reported as a timeout.
    pub timeout_ms: u64,
    /// Significance level for Droplet moves and convergence.
    pub alpha_converge: f64,
    /// Significance level for final comparisons between strategies.
    pub alpha_report: f64,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        Self {
            repeats: 10,
            warmups: 2,
            timeout_ms: 10_000,
            alpha_converge: 0.05,
            alpha_report: 0.01,
        }
    }
}

impl MeasureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repeats < 3 {
            return Err(Error::InvalidConfig(format!(
                "repeats must be at least 3, got {}",
                self.repeats
            )));
        }
        if self.timeout_ms == 0 {
            return Err(Error::InvalidConfig("timeout_ms must be positive".into()));
        }
        let ok = 0.0 < self.alpha_report
            && self.alpha_report <= self.alpha_converge
            && self.alpha_converge < 1.0;
        if !ok {
            return Err(Error::InvalidConfig(format!(
                "need 0 < alpha_report <= alpha_converge < 1, got alpha_report={} alpha_converge={}",
                self.alpha_report, self.alpha_converge
            )));
        }
        Ok(())
    }

    pub(crate) fn timeout_ns(&self) -> f64 {
        self.timeout_ms as f64 * 1e6
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Invalid,
    Timeout,
}

/// Outcome of measuring one coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub coordinate: Coordinate,
    /// Per-repeat durations in nanoseconds; empty unless `status` is ok.
    pub timings: Vec<f64>,
    pub status: Status,
    /// Median of `timings`, or `+inf`.
    pub cost: f64,
}

impl Sample {
    /// An ok sample. `timings` must be non-empty.
    pub fn ok(coordinate: Coordinate, timings: Vec<f64>) -> Self {
        assert!(!timings.is_empty(), "an ok sample needs timings");
        let cost = median(&timings);
        Self {
            coordinate,
            timings,
            status: Status::Ok,
            cost,
        }
    }

    pub fn failed(coordinate: Coordinate, status: Status) -> Self {
        debug_assert_ne!(status, Status::Ok);
        Self {
            coordinate,
            timings: Vec::new(),
            status,
            cost: f64::INFINITY,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }
}

#[derive(Serialize, Deserialize)]
struct SampleRecord {
    coord: Coordinate,
    timings_ns: Vec<f64>,
    status: Status,
    cost_ns: Option<f64>,
}

impl Serialize for Sample {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SampleRecord {
            coord: self.coordinate.clone(),
            timings_ns: self.timings.clone(),
            status: self.status,
            cost_ns: self.cost.is_finite().then_some(self.cost),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Sample {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = SampleRecord::deserialize(d)?;
        let ok = r.status == Status::Ok;
        if ok == r.timings_ns.is_empty() {
            return Err(serde::de::Error::custom(
                "status ok must come with timings, and only then",
            ));
        }
        Ok(Self {
            coordinate: r.coord,
            timings: r.timings_ns,
            status: r.status,
            cost: r.cost_ns.unwrap_or(f64::INFINITY),
        })
    }
}

/// Median; mean of the two middle values for even lengths.
pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let h = v.len() / 2;
    if v.len() % 2 == 1 {
        v[h]
    } else {
        (v[h - 1] + v[h]) / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    FirstBetter,
    SecondBetter,
    Tie,
}

/// Decides whether one sample is significantly faster than the other.
///
/// Failed samples lose against ok ones and tie among themselves. Two ok
/// samples tie unless the rank-sum p-value is below `alpha`; then the lower
/// median wins.
pub fn compare(s1: &Sample, s2: &Sample, alpha: f64) -> Comparison {
    match (s1.is_ok(), s2.is_ok()) {
        (false, false) => return Comparison::Tie,
        (true, false) => return Comparison::FirstBetter,
        (false, true) => return Comparison::SecondBetter,
        (true, true) => {}
    }
    let p = match rank_sum_p(&s1.timings, &s2.timings) {
        Ok(p) => p,
        Err(_) => return Comparison::Tie,
    };
    if p >= alpha || s1.cost == s2.cost {
        Comparison::Tie
    } else if s1.cost < s2.cost {
        Comparison::FirstBetter
    } else {
        Comparison::SecondBetter
    }
}

/// Something that can time a sketch bound to a coordinate.
pub trait Backend: Send + Sync {
    fn name(&self) -> &str;

    /// Measures `sketch` at `c`. `call_index` selects the noise stream of
    /// simulated backends and is ignored by real ones.
    ///
    /// Invalid schedules and timeouts are reported through the sample's
    /// status; `Err` means the backend itself failed.
    fn evaluate(
        &self,
        sketch: &Sketch,
        c: &Coordinate,
        cfg: &MeasureConfig,
        call_index: u64,
    ) -> Result<Sample>;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ok(t: &[f64]) -> Sample {
        Sample::ok(Coordinate::new(vec![0]), t.to_vec())
    }

    #[test]
    fn config_invariants() {
        assert!(MeasureConfig::default().validate().is_ok());
        let bad = [
            MeasureConfig {
                repeats: 2,
                ..Default::default()
            },
            MeasureConfig {
                alpha_report: 0.1,
                ..Default::default()
            },
            MeasureConfig {
                alpha_converge: 1.0,
                ..Default::default()
            },
            MeasureConfig {
                alpha_report: 0.0,
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn compare_examples() {
        let a = ok(&[1.0, 2.0, 3.0]);
        let b = ok(&[4.0, 5.0, 6.0]);
        assert_eq!(compare(&a, &a, 0.05), Comparison::Tie);
        assert_eq!(compare(&a, &b, 0.05), Comparison::Tie);
        assert_eq!(compare(&a, &b, 0.15), Comparison::FirstBetter);
        assert_eq!(compare(&b, &a, 0.15), Comparison::SecondBetter);
        let bad = Sample::failed(Coordinate::new(vec![1]), Status::Invalid);
        let slow = Sample::failed(Coordinate::new(vec![1]), Status::Timeout);
        assert_eq!(compare(&a, &bad, 0.05), Comparison::FirstBetter);
        assert_eq!(compare(&bad, &a, 0.05), Comparison::SecondBetter);
        assert_eq!(compare(&bad, &slow, 0.05), Comparison::Tie);
    }

    #[test]
    fn sample_json_shape() {
        let s = Sample::ok(Coordinate::new(vec![1, 2]), vec![3.0, 1.0, 2.0]);
        assert_eq!(s.cost, 2.0);
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(
            j,
            r#"{"coord":[1,2],"timings_ns":[3.0,1.0,2.0],"status":"ok","cost_ns":2.0}"#
        );
        assert_eq!(serde_json::from_str::<Sample>(&j).unwrap(), s);

        let f = Sample::failed(Coordinate::new(vec![0]), Status::Invalid);
        let j = serde_json::to_string(&f).unwrap();
        assert_eq!(
            j,
            r#"{"coord":[0],"timings_ns":[],"status":"invalid","cost_ns":null}"#
        );
        let back: Sample = serde_json::from_str(&j).unwrap();
        assert!(back.cost.is_infinite());
        assert!(serde_json::from_str::<Sample>(
            r#"{"coord":[0],"timings_ns":[],"status":"ok","cost_ns":null}"#
        )
        .is_err());
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
    }
}
