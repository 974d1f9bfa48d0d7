//! Prediction records and error metrics.

use std::io::BufRead;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub image_id: String,
    pub subject_id: String,
    pub split: String,
    pub predicted_bmi: f64,
    pub true_bmi: f64,
    /// Metres.
    pub height: f64,
}

impl PredictionRecord {
    pub fn validate(&self) -> Result<()> {
        if !(self.true_bmi > 0.0 && self.true_bmi.is_finite()) {
            return Err(Error::InvalidMeasurement(format!(
                "{}: true_bmi must be positive, got {}",
                self.image_id, self.true_bmi
            )));
        }
        if !self.predicted_bmi.is_finite() {
            return Err(Error::InvalidMeasurement(format!(
                "{}: predicted_bmi is not finite",
                self.image_id
            )));
        }
        if !(self.height > 0.0 && self.height.is_finite()) {
            return Err(Error::InvalidMeasurement(format!(
                "{}: height must be positive, got {}",
                self.image_id, self.height
            )));
        }
        Ok(())
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        let rec: Self = serde_json::from_str(line).map_err(|e| Error::malformed("prediction", e))?;
        rec.validate()?;
        Ok(rec)
    }
}

pub fn write_predictions(path: &Path, preds: &[PredictionRecord]) -> Result<()> {
    let lines = preds
        .iter()
        .map(|p| serde_json::to_string(p).expect("prediction serializes"));
    crate::ingest::write_lines(path, lines)
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(PredictionRecord::from_json_line(&line)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mape_percent: f64,
    pub mae_bmi: f64,
    pub mae_kg: f64,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perspective: Option<String>,
}

/// Neumaier-compensated running sum. Merging two partial sums keeps the
/// compensation terms, so parallel and serial reductions agree closely.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(mut self, other: Self) -> Self {
        self.add(other.sum);
        self.add(other.comp);
        self
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Acc {
    ape: CompensatedSum,
    ae: CompensatedSum,
    ae_kg: CompensatedSum,
}

impl Acc {
    fn push(mut self, p: &PredictionRecord) -> Self {
        let err = (p.predicted_bmi - p.true_bmi).abs();
        let h2 = p.height * p.height;
        self.ape.add(err / p.true_bmi);
        self.ae.add(err);
        self.ae_kg.add((p.predicted_bmi * h2 - p.true_bmi * h2).abs());
        self
    }

    fn merge(self, o: Self) -> Self {
        Acc {
            ape: self.ape.merge(o.ape),
            ae: self.ae.merge(o.ae),
            ae_kg: self.ae_kg.merge(o.ae_kg),
        }
    }

    fn report(self, n: usize) -> MetricsReport {
        let n_f = n as f64;
        MetricsReport {
            mape_percent: 100.0 * self.ape.value() / n_f,
            mae_bmi: self.ae.value() / n_f,
            mae_kg: self.ae_kg.value() / n_f,
            n,
            split: None,
            perspective: None,
        }
    }
}

fn check(preds: &[PredictionRecord]) -> Result<()> {
    if preds.is_empty() {
        return Err(Error::EmptyInput);
    }
    preds.iter().try_for_each(PredictionRecord::validate)
}

pub fn compute_metrics(preds: &[PredictionRecord]) -> Result<MetricsReport> {
    check(preds)?;
    Ok(preds.iter().fold(Acc::default(), Acc::push).report(preds.len()))
}

/// Same as [`compute_metrics`] with a parallel reduction.
pub fn compute_metrics_parallel(preds: &[PredictionRecord]) -> Result<MetricsReport> {
    check(preds)?;
    let acc = preds
        .par_iter()
        .fold(Acc::default, Acc::push)
        .reduce(Acc::default, Acc::merge);
    Ok(acc.report(preds.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(p: f64, t: f64, h: f64) -> PredictionRecord {
        PredictionRecord {
            image_id: "i".into(),
            subject_id: "s".into(),
            split: "test".into(),
            predicted_bmi: p,
            true_bmi: t,
            height: h,
        }
    }

    #[test]
    fn single_record() {
        let m = compute_metrics(&[rec(22.0, 20.0, 1.0)]).unwrap();
        assert!((m.mape_percent - 10.0).abs() < 1e-12);
        assert_eq!(m.mae_bmi, 2.0);
        assert_eq!(m.mae_kg, 2.0);
        assert_eq!(m.n, 1);
    }

    #[test]
    fn perfect_predictions() {
        let m = compute_metrics(&[rec(20.0, 20.0, 1.7), rec(31.5, 31.5, 1.6)]).unwrap();
        assert_eq!((m.mape_percent, m.mae_bmi, m.mae_kg), (0.0, 0.0, 0.0));
    }

    #[test]
    fn errors() {
        assert_eq!(compute_metrics(&[]).unwrap_err().code(), "empty_input");
        assert_eq!(
            compute_metrics(&[rec(1.0, 0.0, 1.0)]).unwrap_err().code(),
            "invalid_measurement"
        );
        assert!(compute_metrics(&[rec(f64::NAN, 20.0, 1.0)]).is_err());
    }

    #[test]
    fn compensation_recovers_small_terms() {
        let mut s = CompensatedSum::default();
        s.add(1e16);
        for _ in 0..10 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 10.0);
    }

    #[test]
    fn prediction_line_round_trip() {
        let r = rec(22.5, 20.0, 1.8);
        let line = serde_json::to_string(&r).unwrap();
        assert_eq!(PredictionRecord::from_json_line(&line).unwrap(), r);
        assert!(PredictionRecord::from_json_line("{}").is_err());
    }
}
