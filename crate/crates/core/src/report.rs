//! Diagnostic reports: long-format numeric rows plus threshold verdicts.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub n: Option<usize>,
    pub label: String,
    pub key: String,
    pub value: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
    #[serde(rename = ">")]
    Above,
    #[serde(rename = "<")]
    Below,
}

impl Comparison {
    pub fn holds(self, statistic: f64, threshold: f64) -> bool {
        match self {
            Comparison::AtMost => statistic <= threshold,
            Comparison::AtLeast => statistic >= threshold,
            Comparison::Above => statistic > threshold,
            Comparison::Below => statistic < threshold,
        }
    }
}

/// A pass/fail decision with the number and threshold it was derived from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub statistic: f64,
    pub comparison: Comparison,
    pub threshold: f64,
    pub passed: bool,
}

impl Verdict {
    pub fn new(
        name: impl Into<String>,
        statistic: f64,
        comparison: Comparison,
        threshold: f64,
    ) -> Self {
        Verdict {
            name: name.into(),
            statistic,
            comparison,
            threshold,
            passed: comparison.holds(statistic, threshold),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub experiment: String,
    pub family: String,
    pub metadata: BTreeMap<String, serde_json::Value>,
    pub rows: Vec<ReportRow>,
    pub verdicts: Vec<Verdict>,
}

impl ConvergenceReport {
    pub fn new(experiment: impl Into<String>, family: impl Into<String>) -> Self {
        ConvergenceReport {
            experiment: experiment.into(),
            family: family.into(),
            ..Default::default()
        }
    }

    pub fn push(
        &mut self,
        n: Option<usize>,
        label: impl Into<String>,
        key: impl Into<String>,
        value: f64,
    ) {
        self.rows.push(ReportRow {
            n,
            label: label.into(),
            key: key.into(),
            value,
        });
    }

    pub fn meta(&mut self, key: impl Into<String>, value: impl Serialize) {
        self.metadata.insert(
            key.into(),
            serde_json::to_value(value).unwrap_or(serde_json::Value::Null),
        );
    }

    pub fn verdict(&mut self, v: Verdict) {
        self.verdicts.push(v);
    }

    pub fn all_passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    /// Rows matching `key` (and `n`, when given), in insertion order.
    pub fn values(&self, n: Option<usize>, key: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.key == key && (n.is_none() || r.n == n))
            .map(|r| r.value)
            .collect()
    }

    pub fn value(&self, n: Option<usize>, label: &str, key: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.key == key && r.label == label && r.n == n)
            .map(|r| r.value)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "label", "key", "value"])?;
        for r in &self.rows {
            let n = r.n.map(|v| v.to_string()).unwrap_or_default();
            w.write_record([n, r.label.clone(), r.key.clone(), format!("{:e}", r.value)])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `<stem>.json` and `<stem>.csv` into `dir`.
    pub fn write_to(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{stem}.json")), self.to_json()?)?;
        self.write_csv(std::fs::File::create(dir.join(format!("{stem}.csv")))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdicts_follow_thresholds() {
        assert!(Verdict::new("a", 0.5, Comparison::AtMost, 0.5).passed);
        assert!(!Verdict::new("a", 0.5, Comparison::Below, 0.5).passed);
        assert!(Verdict::new("a", 2.1, Comparison::Above, 2.0).passed);
    }

    #[test]
    fn json_round_trip_and_csv() {
        let mut r = ConvergenceReport::new("fdd", "donsker:rademacher");
        r.push(Some(4), "direction 0", "p_value", 0.25);
        r.push(None, "pooled", "slope", -1.5);
        r.meta("seed", 7);
        r.verdict(Verdict::new("accept", 0.9, Comparison::AtLeast, 0.8));
        let back = ConvergenceReport::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.value(Some(4), "direction 0", "p_value"), Some(0.25));
        let mut buf = vec![];
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n,label,key,value\n4,direction 0,p_value,2.5e-1\n,pooled"));
    }
}
