//! JSON and CSV report serialization.

use std::path::Path;

use captiongan::checks::GradSuiteReport;
use captiongan::harness::{DiversityReport, RetrievalResult, SimilarityReport};
use captiongan::metrics::{MetricReport, METRIC_CSV_HEADER};
use captiongan::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

/// Flat view of a report for CSV output.
pub trait Tabular {
    const HEADER: &'static str;
    fn rows(&self) -> Vec<Vec<String>>;
}

/// JSON wrapper naming the run that produced the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub manifest: String,
    pub kind: String,
    pub report: T,
}

pub fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn to_json<T: Serialize>(report: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    Ok(text)
}

pub fn to_csv<T: Tabular>(report: &T) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(T::HEADER.split(','))
        .map_err(|e| Error::Config(e.to_string()))?;
    for row in report.rows() {
        w.write_record(&row).map_err(|e| Error::Config(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Config(e.to_string()))
}

pub fn emit_report<T: Serialize + Tabular>(report: &Envelope<T>, format: Format, path: &Path) -> Result<()> {
    let text = match format {
        Format::Json => to_json(report)?,
        Format::Csv => to_csv(&report.report)?,
    };
    std::fs::write(path, text)?;
    Ok(())
}

/// Writes `<stem>.json` and `<stem>.csv`, returning both paths.
pub fn emit_both<T: Serialize + Tabular>(
    report: &Envelope<T>,
    dir: &Path,
    stem: &str,
) -> Result<[std::path::PathBuf; 2]> {
    let json = dir.join(format!("{stem}.json"));
    let csv = dir.join(format!("{stem}.csv"));
    emit_report(report, Format::Json, &json)?;
    emit_report(report, Format::Csv, &csv)?;
    Ok([json, csv])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricTable(pub Vec<MetricReport>);

impl Tabular for MetricTable {
    const HEADER: &'static str = METRIC_CSV_HEADER;
    fn rows(&self) -> Vec<Vec<String>> {
        self.0
            .iter()
            .map(|r| {
                vec![
                    r.system.clone(),
                    r.images.to_string(),
                    num(r.bleu3),
                    num(r.bleu4),
                    num(r.rouge_l),
                    num(r.cider),
                    num(r.distinct1),
                    num(r.distinct2),
                    opt(r.e_gan),
                    opt(r.e_ngan),
                ]
            })
            .collect()
    }
}

impl Tabular for RetrievalResult {
    const HEADER: &'static str = "criterion,images,k,recall";
    fn rows(&self) -> Vec<Vec<String>> {
        let criterion = serde_json::to_value(self.criterion)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        self.ks
            .iter()
            .zip(&self.recall)
            .map(|(k, r)| vec![criterion.clone(), self.images.to_string(), k.to_string(), num(*r)])
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiversitySummary {
    pub sigma: f64,
    pub scenes: usize,
    pub fraction_at_least_2: f64,
    pub fraction_at_least_3: f64,
    pub max_distinct: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiversityTable {
    pub summary: Vec<DiversitySummary>,
    pub probe: DiversityReport,
}

impl DiversityTable {
    pub fn new(probe: DiversityReport, sigmas: &[f64]) -> Self {
        let summary = sigmas
            .iter()
            .map(|&sigma| DiversitySummary {
                sigma,
                scenes: probe.rows.iter().filter(|r| r.sigma == sigma).count(),
                fraction_at_least_2: probe.fraction_at_least(sigma, 2),
                fraction_at_least_3: probe.fraction_at_least(sigma, 3),
                max_distinct: probe.max_distinct(sigma),
            })
            .collect();
        Self { summary, probe }
    }
}

impl Tabular for DiversityTable {
    const HEADER: &'static str = "sigma,image,distinct_sentences,distinct1,distinct2";
    fn rows(&self) -> Vec<Vec<String>> {
        self.probe
            .rows
            .iter()
            .map(|r| {
                vec![
                    num(r.sigma),
                    r.image.clone(),
                    r.distinct_sentences.to_string(),
                    num(r.distinct1),
                    num(r.distinct2),
                ]
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTable(pub Vec<SimilarityReport>);

impl Tabular for SimilarityTable {
    const HEADER: &'static str = "system,pairs,identical,fraction";
    fn rows(&self) -> Vec<Vec<String>> {
        self.0
            .iter()
            .map(|r| vec![r.system.clone(), r.pairs.to_string(), r.identical.to_string(), num(r.fraction)])
            .collect()
    }
}

impl Tabular for GradSuiteReport {
    const HEADER: &'static str = "objective,instance,checked,max_relative_error,worst,analytic,numeric";
    fn rows(&self) -> Vec<Vec<String>> {
        self.entries
            .iter()
            .map(|e| {
                vec![
                    e.objective.clone(),
                    e.instance.to_string(),
                    e.checked.to_string(),
                    num(e.max_relative_error),
                    e.worst.clone().unwrap_or_default(),
                    opt(e.analytic),
                    opt(e.numeric),
                ]
            })
            .collect()
    }
}

/// Named scalar results of a pipeline run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary(pub Vec<(String, f64)>);

impl Summary {
    pub fn push(&mut self, name: impl Into<String>, value: f64) {
        self.0.push((name.into(), value));
    }
}

impl Tabular for Summary {
    const HEADER: &'static str = "quantity,value";
    fn rows(&self) -> Vec<Vec<String>> {
        self.0.iter().map(|(n, v)| vec![n.clone(), num(*v)]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use captiongan::harness::DiversityRow;

    fn table() -> Envelope<MetricTable> {
        let r = MetricReport {
            system: "g, \"quoted\"".into(),
            images: 3,
            bleu3: 0.1,
            bleu4: 1.0 / 3.0,
            rouge_l: 0.0,
            cider: 2.5,
            distinct1: 1.0,
            distinct2: 0.75,
            e_gan: Some(0.6),
            e_ngan: None,
        };
        Envelope {
            manifest: "abc".into(),
            kind: "metrics".into(),
            report: MetricTable(vec![r]),
        }
    }

    #[test]
    fn serialization_is_stable() {
        let t = table();
        assert_eq!(to_json(&t).unwrap(), to_json(&t.clone()).unwrap());
        assert_eq!(to_csv(&t.report).unwrap(), to_csv(&t.report).unwrap());
        assert!(to_json(&t).unwrap().ends_with('\n'));
        assert!(to_csv(&t.report).unwrap().ends_with('\n'));
    }

    #[test]
    fn csv_header_matches_schema() {
        let csv = to_csv(&table().report).unwrap();
        assert_eq!(csv.lines().next().unwrap(), METRIC_CSV_HEADER);
        let mut reader = csv::Reader::from_reader(csv.as_bytes());
        let row = reader.records().next().unwrap().unwrap();
        assert_eq!(&row[0], "g, \"quoted\"");
        assert_eq!(row[3].parse::<f64>().unwrap(), 1.0 / 3.0);
        assert_eq!(&row[9], "");
    }

    #[test]
    fn json_round_trips() {
        let t = table();
        let back: Envelope<MetricTable> = serde_json::from_str(&to_json(&t).unwrap()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn diversity_summary_counts_per_sigma() {
        let row = |sigma, distinct| DiversityRow {
            sigma,
            image: "x".into(),
            distinct_sentences: distinct,
            distinct1: 0.0,
            distinct2: 0.0,
        };
        let probe = DiversityReport {
            z_draws: 10,
            rows: vec![row(0.0, 1), row(1.0, 3), row(1.0, 2)],
        };
        let t = DiversityTable::new(probe, &[0.0, 1.0]);
        assert_eq!(t.summary[1].scenes, 2);
        assert_eq!(t.summary[1].fraction_at_least_3, 0.5);
        assert_eq!(t.summary[0].max_distinct, 1);
    }
}
