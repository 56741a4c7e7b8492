//! The JSON Lines trial log, one record per measured trial.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{Sample, Status};

/// Which half of a tuning run produced a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Explore,
    Exploit,
}

/// One line of `trials.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    #[serde(flatten)]
    pub sample: Sample,
    pub layer: String,
    /// Index of the sketch within its workload's sketch list.
    pub sketch_id: usize,
    pub sketch: String,
    pub phase: Phase,
    /// Position in the layer's history, from 0.
    pub trial: usize,
}

/// Receives trials as they are measured.
pub trait TrialSink {
    fn record(&mut self, r: &TrialRecord) -> Result<()>;
}

/// Discards everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullSink;

impl TrialSink for NullSink {
    fn record(&mut self, _: &TrialRecord) -> Result<()> {
        Ok(())
    }
}

impl TrialSink for Vec<TrialRecord> {
    fn record(&mut self, r: &TrialRecord) -> Result<()> {
        self.push(r.clone());
        Ok(())
    }
}

/// Appends one JSON object per line and flushes after each.
#[derive(Debug)]
pub struct JsonlWriter<W: Write> {
    out: W,
}

impl<W: Write> JsonlWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> TrialSink for JsonlWriter<W> {
    fn record(&mut self, r: &TrialRecord) -> Result<()> {
        serde_json::to_writer(&mut self.out, r)?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }
}

/// Parses a whole log. Blank lines are not allowed; the first bad line is
/// reported by its 1-based number.
pub fn read_log(input: impl BufRead) -> Result<Vec<TrialRecord>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let rec = serde_json::from_str::<TrialRecord>(&line).map_err(|e| Error::BadLog {
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(rec);
    }
    if out.is_empty() {
        return Err(Error::EmptyLog);
    }
    Ok(out)
}

/// Per-layer digest of a log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub layer: String,
    pub trials: usize,
    pub explore_trials: usize,
    pub exploit_trials: usize,
    pub ok: usize,
    pub invalid: usize,
    pub timeout: usize,
    /// Empty when the layer has no ok trial.
    pub best_cost_ns: Option<f64>,
    pub best_sketch: String,
    pub best_coord: String,
    /// Layer-local trial index of the best sample.
    pub best_trial: Option<usize>,
}

/// One row per layer, in order of first appearance.
pub fn summarize(records: &[TrialRecord]) -> Vec<SummaryRow> {
    let mut order: Vec<&str> = Vec::new();
    let mut rows: BTreeMap<&str, SummaryRow> = BTreeMap::new();
    for r in records {
        let row = rows.entry(&r.layer).or_insert_with(|| {
            order.push(&r.layer);
            SummaryRow {
                layer: r.layer.clone(),
                trials: 0,
                explore_trials: 0,
                exploit_trials: 0,
                ok: 0,
                invalid: 0,
                timeout: 0,
                best_cost_ns: None,
                best_sketch: String::new(),
                best_coord: String::new(),
                best_trial: None,
            }
        });
        row.trials += 1;
        match r.phase {
            Phase::Explore => row.explore_trials += 1,
            Phase::Exploit => row.exploit_trials += 1,
        }
        match r.sample.status {
            Status::Ok => row.ok += 1,
            Status::Invalid => row.invalid += 1,
            Status::Timeout => row.timeout += 1,
        }
        if r.sample.is_ok() && row.best_cost_ns.is_none_or(|b| r.sample.cost < b) {
            row.best_cost_ns = Some(r.sample.cost);
            row.best_sketch = r.sketch.clone();
            row.best_coord = r.sample.coordinate.to_string();
            row.best_trial = Some(r.trial);
        }
    }
    order
        .iter()
        .map(|l| rows.remove(l).expect("row exists"))
        .collect()
}

/// Best-so-far cost after each record, per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    /// Line index in the log, from 0.
    pub index: usize,
    pub layer: String,
    pub trial: usize,
    pub cost_ns: Option<f64>,
    pub best_so_far_ns: Option<f64>,
}

pub fn convergence(records: &[TrialRecord]) -> Vec<ConvergencePoint> {
    let mut best: BTreeMap<&str, f64> = BTreeMap::new();
    records
        .iter()
        .enumerate()
        .map(|(index, r)| {
            let cost = r.sample.cost.is_finite().then_some(r.sample.cost);
            if let Some(c) = cost {
                let b = best.entry(&r.layer).or_insert(c);
                *b = b.min(c);
            }
            ConvergencePoint {
                index,
                layer: r.layer.clone(),
                trial: r.trial,
                cost_ns: cost,
                best_so_far_ns: best.get(r.layer.as_str()).copied(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Coordinate;

    fn rec(layer: &str, trial: usize, cost: Option<f64>) -> TrialRecord {
        let c = Coordinate::new(vec![trial]);
        let sample = match cost {
            Some(v) => Sample::ok(c, vec![v; 3]),
            None => Sample::failed(c, Status::Invalid),
        };
        TrialRecord {
            sample,
            layer: layer.into(),
            sketch_id: 1,
            sketch: "tile".into(),
            phase: Phase::Exploit,
            trial,
        }
    }

    #[test]
    fn roundtrip_and_shape() {
        let mut w = JsonlWriter::new(Vec::new());
        let rs = vec![rec("a", 0, Some(5.0)), rec("a", 1, None)];
        for r in &rs {
            w.record(r).unwrap();
        }
        let text = String::from_utf8(w.into_inner()).unwrap();
        assert!(text.starts_with(
            r#"{"coord":[0],"timings_ns":[5.0,5.0,5.0],"status":"ok","cost_ns":5.0,"layer":"a""#
        ));
        assert_eq!(read_log(text.as_bytes()).unwrap(), rs);
    }

    #[test]
    fn bad_logs() {
        assert!(matches!(read_log(&b""[..]), Err(Error::EmptyLog)));
        let good = serde_json::to_string(&rec("a", 0, Some(1.0))).unwrap();
        let text = format!("{good}\n{}", &good[..good.len() / 2]);
        assert!(matches!(
            read_log(text.as_bytes()),
            Err(Error::BadLog { line: 2, .. })
        ));
    }

    #[test]
    fn summary_and_curve() {
        let rs = vec![
            rec("a", 0, Some(5.0)),
            rec("b", 0, None),
            rec("a", 1, Some(3.0)),
            rec("a", 2, Some(4.0)),
        ];
        let s = summarize(&rs);
        assert_eq!(s.len(), 2);
        assert_eq!(
            (
                s[0].layer.as_str(),
                s[0].trials,
                s[0].best_cost_ns,
                s[0].best_trial
            ),
            ("a", 3, Some(3.0), Some(1))
        );
        assert_eq!((s[1].invalid, s[1].best_cost_ns), (1, None));
        let c = convergence(&rs);
        let bests: Vec<_> = c.iter().map(|p| p.best_so_far_ns).collect();
        assert_eq!(bests, vec![Some(5.0), None, Some(3.0), Some(3.0)]);
    }
}
