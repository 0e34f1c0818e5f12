//! Tabular experiment reports and their CSV/JSON/SVG serializations.
//!
//! Rows carry a fixed schema and a total order; serialization of a sorted
//! report is byte-stable, which is what the determinism guarantees rest on.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fs;
use std::path::Path;

pub const CSV_HEADER: &str = "experiment,loss,lambda,alpha,partition,metric,epoch,value,seed";

/// One observation: a metric value for a grid cell at an epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub experiment: String,
    pub loss: String,
    pub lambda: f64,
    pub alpha: f64,
    pub partition: String,
    pub metric: String,
    pub epoch: u64,
    pub value: f64,
    pub seed: u64,
}

impl Row {
    fn sort_key(&self) -> (&str, &str, f64, f64, &str, &str, u64, u64) {
        (
            &self.experiment,
            &self.loss,
            self.lambda,
            self.alpha,
            &self.partition,
            &self.metric,
            self.epoch,
            self.seed,
        )
    }

    fn cmp_rows(&self, other: &Self) -> Ordering {
        let a = self.sort_key();
        let b = other.sort_key();
        a.0.cmp(b.0)
            .then(a.1.cmp(b.1))
            .then(a.2.total_cmp(&b.2))
            .then(a.3.total_cmp(&b.3))
            .then(a.4.cmp(b.4))
            .then(a.5.cmp(b.5))
            .then(a.6.cmp(&b.6))
            .then(a.7.cmp(&b.7))
    }

    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.experiment,
            self.loss,
            self.lambda,
            self.alpha,
            self.partition,
            self.metric,
            self.epoch,
            self.value,
            self.seed
        )
    }
}

/// Sorted collection of rows for one or more experiments.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<Row>,
}

impl ExperimentReport {
    pub fn new(mut rows: Vec<Row>) -> Self {
        rows.sort_by(Row::cmp_rows);
        Self { rows }
    }

    pub fn extend(&mut self, other: ExperimentReport) {
        self.rows.extend(other.rows);
        self.rows.sort_by(Row::cmp_rows);
    }

    /// Every value and grid coordinate must be finite.
    pub fn validate(&self) -> Result<()> {
        for r in &self.rows {
            if !r.value.is_finite() || !r.lambda.is_finite() || !r.alpha.is_finite() {
                return Err(Error::NonFinite(format!(
                    "report row {}/{}/{}/{} at epoch {}",
                    r.experiment, r.loss, r.partition, r.metric, r.epoch
                )));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.csv_line());
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.rows)?)
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if i == 0 {
                if line != CSV_HEADER {
                    return Err(Error::Config(format!("unexpected CSV header: {line}")));
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 9 {
                return Err(Error::Config(format!(
                    "CSV line {}: expected 9 fields, got {}",
                    i + 1,
                    fields.len()
                )));
            }
            let parse_f = |s: &str, what: &str| -> Result<f64> {
                s.parse()
                    .map_err(|_| Error::Config(format!("CSV line {}: bad {what} `{s}`", i + 1)))
            };
            let parse_u = |s: &str, what: &str| -> Result<u64> {
                s.parse()
                    .map_err(|_| Error::Config(format!("CSV line {}: bad {what} `{s}`", i + 1)))
            };
            rows.push(Row {
                experiment: fields[0].to_string(),
                loss: fields[1].to_string(),
                lambda: parse_f(fields[2], "lambda")?,
                alpha: parse_f(fields[3], "alpha")?,
                partition: fields[4].to_string(),
                metric: fields[5].to_string(),
                epoch: parse_u(fields[6], "epoch")?,
                value: parse_f(fields[7], "value")?,
                seed: parse_u(fields[8], "seed")?,
            });
        }
        Ok(Self::new(rows))
    }

    /// Value of the final-epoch row matching the given coordinates.
    pub fn final_value(
        &self,
        loss: &str,
        lambda: f64,
        alpha: f64,
        partition: &str,
        metric: &str,
    ) -> Option<f64> {
        self.rows
            .iter()
            .filter(|r| {
                r.loss == loss
                    && r.lambda == lambda
                    && r.alpha == alpha
                    && r.partition == partition
                    && r.metric == metric
            })
            .max_by_key(|r| r.epoch)
            .map(|r| r.value)
    }

    pub fn select<'a>(
        &'a self,
        loss: &'a str,
        partition: &'a str,
        metric: &'a str,
    ) -> impl Iterator<Item = &'a Row> {
        self.rows
            .iter()
            .filter(move |r| r.loss == loss && r.partition == partition && r.metric == metric)
    }
}

/// Writes bytes atomically: a temporary sibling file is renamed over the
/// target so readers never observe a partial report.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp_path = std::path::PathBuf::from(tmp);
    fs::write(&tmp_path, bytes)?;
    fs::rename(&tmp_path, path)?;
    Ok(())
}

/// One named series of (x, y) points for a line chart.
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const SERIES_COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// Renders a self-contained SVG line chart (inline styles, no external
/// assets). Intended for quick looks at sweep results, not publication.
pub fn svg_line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (width, height) = (720.0, 480.0);
    let (ml, mr, mt, mb) = (70.0, 160.0, 50.0, 60.0);
    let (pw, ph) = (width - ml - mr, height - mt - mb);

    let finite_points: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().cloned())
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    let (mut x_min, mut x_max) = (f64::MAX, f64::MIN);
    let (mut y_min, mut y_max) = (0.0f64, f64::MIN);
    for (x, y) in &finite_points {
        x_min = x_min.min(*x);
        x_max = x_max.max(*x);
        y_min = y_min.min(*y);
        y_max = y_max.max(*y);
    }
    if finite_points.is_empty() {
        x_min = 0.0;
        x_max = 1.0;
        y_max = 1.0;
    }
    if (x_max - x_min).abs() < 1e-300 {
        x_max = x_min + 1.0;
    }
    if (y_max - y_min).abs() < 1e-300 {
        y_max = y_min + 1.0;
    }
    let sx = |x: f64| ml + (x - x_min) / (x_max - x_min) * pw;
    let sy = |y: f64| mt + ph - (y - y_min) / (y_max - y_min) * ph;

    let mut svg = String::new();
    svg.push_str(&format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    ));
    svg.push_str(r#"<rect width="100%" height="100%" fill="white"/>"#);
    svg.push_str(&format!(
        r#"<text x="{}" y="28" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        ml + pw / 2.0,
        title
    ));
    // axes
    svg.push_str(&format!(
        r#"<line x1="{ml}" y1="{}" x2="{}" y2="{}" stroke="black" stroke-width="1"/>"#,
        mt + ph,
        ml + pw,
        mt + ph
    ));
    svg.push_str(&format!(
        r#"<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{}" stroke="black" stroke-width="1"/>"#,
        mt + ph
    ));
    for i in 0..=4 {
        let fx = x_min + (x_max - x_min) * i as f64 / 4.0;
        let fy = y_min + (y_max - y_min) * i as f64 / 4.0;
        svg.push_str(&format!(
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{:.3}</text>"#,
            sx(fx),
            mt + ph + 18.0,
            fx
        ));
        svg.push_str(&format!(
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{:.3}</text>"#,
            ml - 6.0,
            sy(fy) + 4.0,
            fy
        ));
        svg.push_str(&format!(
            r##"<line x1="{ml}" y1="{0}" x2="{1}" y2="{0}" stroke="#dddddd" stroke-width="0.5"/>"##,
            sy(fy),
            ml + pw
        ));
    }
    svg.push_str(&format!(
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#,
        ml + pw / 2.0,
        height - 14.0,
        x_label
    ));
    svg.push_str(&format!(
        r#"<text x="18" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        mt + ph / 2.0,
        mt + ph / 2.0,
        y_label
    ));
    for (i, s) in series.iter().enumerate() {
        let color = SERIES_COLORS[i % SERIES_COLORS.len()];
        let path: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y)))
            .collect();
        if !path.is_empty() {
            svg.push_str(&format!(
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#,
                path.join(" ")
            ));
        }
        let ly = mt + 16.0 * i as f64;
        svg.push_str(&format!(
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/>"#,
            ml + pw + 10.0,
            ml + pw + 34.0
        ));
        svg.push_str(&format!(
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
            ml + pw + 40.0,
            ly + 4.0,
            s.name
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(loss: &str, lambda: f64, epoch: u64, value: f64) -> Row {
        Row {
            experiment: "interpolation".into(),
            loss: loss.into(),
            lambda,
            alpha: 0.0,
            partition: "all".into(),
            metric: "tv_to_star".into(),
            epoch,
            value,
            seed: 0,
        }
    }

    #[test]
    fn rows_sort_by_full_key() {
        let r = ExperimentReport::new(vec![
            row("typo", 1.0, 100, 0.3),
            row("dpo", 0.1, 0, 0.1),
            row("dpo", 0.1, 100, 0.2),
            row("dpo", 1.0, 0, 0.4),
        ]);
        let keys: Vec<(String, f64, u64)> = r
            .rows
            .iter()
            .map(|r| (r.loss.clone(), r.lambda, r.epoch))
            .collect();
        assert_eq!(
            keys,
            vec![
                ("dpo".into(), 0.1, 0),
                ("dpo".into(), 0.1, 100),
                ("dpo".into(), 1.0, 0),
                ("typo".into(), 1.0, 100),
            ]
        );
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let r = ExperimentReport::new(vec![
            row("dpo", 4.641588833612782e-5, 8000, 0.123456789012345),
            row("typo", 1e3, 0, 1.0 / 3.0),
        ]);
        let csv = r.to_csv();
        let parsed = ExperimentReport::parse_csv(&csv).unwrap();
        assert_eq!(r, parsed);
        assert_eq!(csv, parsed.to_csv());
    }

    #[test]
    fn final_value_picks_last_epoch() {
        let r = ExperimentReport::new(vec![
            row("dpo", 0.1, 0, 0.9),
            row("dpo", 0.1, 100, 0.5),
            row("dpo", 0.1, 50, 0.7),
        ]);
        assert_eq!(r.final_value("dpo", 0.1, 0.0, "all", "tv_to_star"), Some(0.5));
        assert_eq!(r.final_value("ipo", 0.1, 0.0, "all", "tv_to_star"), None);
    }

    #[test]
    fn validate_rejects_non_finite() {
        let r = ExperimentReport::new(vec![row("dpo", 0.1, 0, f64::NAN)]);
        assert!(r.validate().is_err());
    }

    #[test]
    fn svg_is_self_contained() {
        let s = svg_line_chart(
            "test",
            "x",
            "y",
            &[Series { name: "a".into(), points: vec![(0.0, 0.0), (1.0, 1.0)] }],
        );
        assert!(s.starts_with("<svg"));
        assert!(s.ends_with("</svg>\n"));
        assert!(!s.contains("http://") || s.contains("xmlns"));
        assert!(!s.contains("href"));
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_atomic(&path, b"first").unwrap();
        write_atomic(&path, b"second").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"second");
        assert!(!path.with_extension("csv.tmp").exists());
    }
}
