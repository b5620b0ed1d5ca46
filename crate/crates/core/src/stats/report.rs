use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use super::{kde, pearson, CorrelationResult, DEFAULT_GRID_SIZE};
use crate::error::{Error, Result};
use crate::features::FeatureRow;

/// |r| below this is reported as a weak relation.
pub const WEAK_THRESHOLD: f64 = 0.2;

pub const TARGETS: [&str; 2] = ["valence", "arousal"];
pub const FEATURES: [&str; 8] = [
    "key",
    "mode",
    "direction",
    "avg_pitch",
    "pitch_range",
    "pitch_sd",
    "tempo",
    "rms",
];
/// Features with more than two levels, plotted as density curves.
pub const MULTISCALE: [&str; 6] = ["key", "avg_pitch", "pitch_range", "pitch_sd", "tempo", "rms"];
/// Binary features, plotted as bar counts.
pub const BINARY: [&str; 2] = ["mode", "direction"];

pub fn feature_column(rows: &[FeatureRow], name: &str) -> Option<Vec<f64>> {
    let get = |r: &FeatureRow| -> Option<f64> {
        let f = &r.features;
        Some(match name {
            "valence" => r.valence,
            "arousal" => r.arousal,
            "key" => f.key as f64,
            "mode" => f.mode as f64,
            "direction" => f.direction as u8 as f64,
            "avg_pitch" => f.avg_pitch,
            "pitch_range" => f.pitch_range as f64,
            "pitch_sd" => f.pitch_sd,
            "tempo" => f.tempo,
            "rms" => f.rms,
            _ => return None,
        })
    };
    rows.iter().map(get).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub target: &'static str,
    pub feature: &'static str,
    /// `None` when one of the columns is constant.
    pub result: Option<CorrelationResult>,
}

impl ReportRow {
    pub fn relevance(&self) -> &'static str {
        match self.result {
            None => "Undefined",
            Some(c) if c.r.abs() < WEAK_THRESHOLD && c.r < 0.0 => "Weak negative",
            Some(c) if c.r.abs() < WEAK_THRESHOLD => "Weak positive",
            Some(c) if c.r < 0.0 => "Negative",
            Some(_) => "Positive",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    pub n: usize,
    pub rows: Vec<ReportRow>,
}

impl CorrelationReport {
    pub fn row(&self, target: &str, feature: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.target == target && r.feature == feature)
    }

    pub fn significant_count(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| r.result.is_some_and(|c| c.significant))
            .count()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["target", "feature", "r", "relevance", "p_value", "significant", "n"])?;
        for row in &self.rows {
            let (r, p, sig) = match row.result {
                Some(c) => (format!("{:.4}", c.r), format!("{:.4e}", c.p_value), c.significant.to_string()),
                None => ("NA".into(), "NA".into(), "false".into()),
            };
            w.write_record([row.target, row.feature, &r, row.relevance(), &p, &sig, &self.n.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Aligned plain-text table.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<8} {:<12} {:>8}  {:<14} {:>11}  Sig.", "Target", "Feature", "r", "Relevance", "p-value");
        for row in &self.rows {
            let (r, p, sig) = match row.result {
                Some(c) => (format!("{:+.4}", c.r), format!("{:.4e}", c.p_value), if c.significant { "*" } else { "" }),
                None => ("NA".into(), "NA".into(), ""),
            };
            let _ = writeln!(s, "{:<8} {:<12} {:>8}  {:<14} {:>11}  {}", row.target, row.feature, r, row.relevance(), p, sig);
        }
        let _ = writeln!(s, "n = {}", self.n);
        s
    }
}

/// Pearson correlation of valence and arousal against each of the eight features.
pub fn correlation_report(rows: &[FeatureRow]) -> Result<CorrelationReport> {
    if rows.len() < 3 {
        return Err(Error::DegenerateSeries(format!("need at least 3 rows, got {}", rows.len())));
    }
    let mut out = Vec::with_capacity(16);
    for target in TARGETS {
        let y = feature_column(rows, target).unwrap();
        for feature in FEATURES {
            let x = feature_column(rows, feature).unwrap();
            let result = match pearson(&y, &x) {
                Ok(c) => Some(c),
                Err(Error::DegenerateSeries(_)) => None,
                Err(e) => return Err(e),
            };
            out.push(ReportRow { target, feature, result });
        }
    }
    Ok(CorrelationReport { n: rows.len(), rows: out })
}

fn by_label(rows: &[FeatureRow]) -> BTreeMap<&str, Vec<&FeatureRow>> {
    let mut groups: BTreeMap<&str, Vec<&FeatureRow>> = BTreeMap::new();
    for r in rows {
        groups.entry(r.label.as_str()).or_default().push(r);
    }
    groups
}

/// Density curves of one multiscale feature, one series per label. Labels whose
/// values are constant or too few are listed in the second element.
pub fn kde_table<W: Write>(rows: &[FeatureRow], feature: &str, out: W) -> Result<Vec<String>> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["series", "grid", "density"])?;
    let mut skipped = Vec::new();
    for (label, group) in by_label(rows) {
        let owned: Vec<FeatureRow> = group.into_iter().cloned().collect();
        let values = feature_column(&owned, feature)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown feature {feature}")))?;
        match kde(&values, DEFAULT_GRID_SIZE) {
            Ok(curve) => {
                for (g, d) in curve.grid.iter().zip(&curve.density) {
                    w.write_record([label, &g.to_string(), &d.to_string()])?;
                }
            }
            Err(Error::DegenerateSeries(_)) => skipped.push(label.to_string()),
            Err(e) => return Err(e),
        }
    }
    w.flush()?;
    Ok(skipped)
}

/// Counts of each level of a binary feature, per label.
pub fn bar_counts<W: Write>(rows: &[FeatureRow], feature: &str, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["series", "value", "count"])?;
    for (label, group) in by_label(rows) {
        let owned: Vec<FeatureRow> = group.into_iter().cloned().collect();
        let values = feature_column(&owned, feature)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown feature {feature}")))?;
        for level in [0.0, 1.0] {
            let count = values.iter().filter(|&&v| v == level).count();
            w.write_record([label, &(level as u8).to_string(), &count.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
