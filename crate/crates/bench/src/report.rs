//! Result rows and the CSV files derived from them.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use anyhow::{Context, Result};
use icu_morl::ope::Metric;
use log::warn;
use serde::{Deserialize, Serialize};

use crate::config::Algorithm;

/// One scored (seed, preference, algorithm, metric) cell. Failed cells keep
/// their coordinates and carry no numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub w_mortality: f64,
    pub w_los: f64,
    pub algorithm: Algorithm,
    pub metric: Metric,
    #[serde(with = "na")]
    pub value: Option<f64>,
    #[serde(with = "na")]
    pub ci_lower: Option<f64>,
    #[serde(with = "na")]
    pub ci_upper: Option<f64>,
    #[serde(with = "na")]
    pub ci_width: Option<f64>,
    pub seed: u64,
}

/// Missing numbers are written as `NA`.
mod na {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => s.serialize_f64(*x),
            None => s.serialize_str("NA"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        let text = String::deserialize(d)?;
        match text.as_str() {
            "NA" | "" => Ok(None),
            t => t.parse().map(Some).map_err(serde::de::Error::custom),
        }
    }
}

impl ResultRow {
    pub fn failed(&self) -> bool {
        self.value.is_none()
    }
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}

/// Seed-averaged value and bounds of one (preference, algorithm) cell.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Cell {
    value: f64,
    lower: f64,
    upper: f64,
}

/// Preference key that orders by mortality weight.
type PrefKey = (u64, u64);

fn pref_key(w_mortality: f64, w_los: f64) -> PrefKey {
    (w_mortality.to_bits(), w_los.to_bits())
}

fn fmt_pref(k: PrefKey) -> (f64, f64) {
    (f64::from_bits(k.0), f64::from_bits(k.1))
}

/// Averages rows over seeds; cells with any failed seed stay missing.
fn aggregate(rows: &[ResultRow], metric: Metric) -> (BTreeMap<(PrefKey, Algorithm), Cell>, Vec<PrefKey>, Vec<Algorithm>) {
    let mut groups: BTreeMap<(PrefKey, Algorithm), Vec<&ResultRow>> = BTreeMap::new();
    let mut prefs = BTreeSet::new();
    let mut algos = BTreeSet::new();
    for row in rows.iter().filter(|r| r.metric == metric) {
        let key = pref_key(row.w_mortality, row.w_los);
        prefs.insert((row.w_mortality.to_bits(), key));
        algos.insert(row.algorithm);
        groups.entry((key, row.algorithm)).or_default().push(row);
    }
    let mut cells = BTreeMap::new();
    for (key, group) in groups {
        if group.iter().any(|r| r.failed()) {
            continue;
        }
        let n = group.len() as f64;
        let mean = |f: fn(&ResultRow) -> Option<f64>| group.iter().map(|r| f(r).unwrap_or(f64::NAN)).sum::<f64>() / n;
        cells.insert(
            key,
            Cell {
                value: mean(|r| r.value),
                lower: mean(|r| r.ci_lower),
                upper: mean(|r| r.ci_upper),
            },
        );
    }
    let mut prefs: Vec<(u64, PrefKey)> = prefs.into_iter().collect();
    prefs.sort_by(|a, b| f64::from_bits(a.0).total_cmp(&f64::from_bits(b.0)));
    (cells, prefs.into_iter().map(|p| p.1).collect(), algos.into_iter().collect())
}

fn num(v: f64) -> String {
    format!("{v}")
}

/// Table text: one row per preference; per algorithm the value, the CI
/// half-width and the full CI width; `best` lists every algorithm that
/// attains the row maximum.
pub fn emit_table(rows: &[ResultRow], metric: Metric) -> Result<String> {
    let (cells, prefs, algos) = aggregate(rows, metric);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["w_mortality".to_string(), "w_los".to_string()];
    for a in &algos {
        header.push(a.tag().to_string());
        header.push(format!("{}_pm", a.tag()));
        header.push(format!("{}_ci_width", a.tag()));
    }
    header.push("best".into());
    w.write_record(&header)?;
    for &p in &prefs {
        let (wm, wl) = fmt_pref(p);
        let mut rec = vec![num(wm), num(wl)];
        let mut best: Option<f64> = None;
        for &a in &algos {
            match cells.get(&(p, a)) {
                Some(c) => {
                    rec.push(num(c.value));
                    rec.push(num((c.upper - c.lower) / 2.0));
                    rec.push(num(c.upper - c.lower));
                    best = Some(best.map_or(c.value, |b| b.max(c.value)));
                }
                None => {
                    warn!("{} table: no value for {a} at [{wm}, {wl}]", metric.tag());
                    rec.extend(["NA".to_string(), "NA".to_string(), "NA".to_string()]);
                }
            }
        }
        let marked: Vec<&str> = algos
            .iter()
            .filter(|&&a| matches!((cells.get(&(p, a)), best), (Some(c), Some(b)) if c.value == b))
            .map(|a| a.tag())
            .collect();
        rec.push(marked.join(";"));
        w.write_record(&rec)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// Plot series: `algorithm, x = w_mortality, y, y_lo, y_hi`.
pub fn emit_plot(rows: &[ResultRow], metric: Metric) -> Result<String> {
    let (cells, prefs, algos) = aggregate(rows, metric);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["algorithm", "x", "y", "y_lo", "y_hi"])?;
    for &a in &algos {
        for &p in &prefs {
            if let Some(c) = cells.get(&(p, a)) {
                w.write_record([a.tag().to_string(), num(fmt_pref(p).0), num(c.value), num(c.lower), num(c.upper)])?;
            }
        }
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub seed: u64,
    pub algorithm: String,
    pub w_mortality: Option<f64>,
    pub w_los: Option<f64>,
    pub metric: Metric,
    #[serde(with = "na")]
    pub ope_value: Option<f64>,
    #[serde(with = "na")]
    pub oracle_value: Option<f64>,
    #[serde(with = "na")]
    pub absolute_error: Option<f64>,
}

/// Appends one `summary` row per metric holding the mean absolute error
/// of the non-missing rows.
pub fn with_summary(mut rows: Vec<CalibrationRow>, metrics: &[Metric]) -> Vec<CalibrationRow> {
    for &metric in metrics {
        let errs: Vec<f64> = rows
            .iter()
            .filter(|r| r.metric == metric)
            .filter_map(|r| r.absolute_error)
            .collect();
        let mae = (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / errs.len() as f64);
        rows.push(CalibrationRow {
            seed: rows.first().map_or(0, |r| r.seed),
            algorithm: "summary".into(),
            w_mortality: None,
            w_los: None,
            metric,
            ope_value: None,
            oracle_value: None,
            absolute_error: mae,
        });
    }
    rows
}

pub fn write_calibration(path: &Path, rows: &[CalibrationRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_calibration(path: &Path) -> Result<Vec<CalibrationRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(wm: f64, algorithm: Algorithm, metric: Metric, value: f64) -> ResultRow {
        ResultRow {
            w_mortality: wm,
            w_los: 1.0 - wm,
            algorithm,
            metric,
            value: Some(value),
            ci_lower: Some(value - 0.1),
            ci_upper: Some(value + 0.3),
            ci_width: Some(0.4),
            seed: 0,
        }
    }

    #[test]
    fn single_cell_table() {
        let text = emit_table(&[row(0.5, Algorithm::Bc, Metric::Wis, 0.25)], Metric::Wis).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "w_mortality,w_los,bc,bc_pm,bc_ci_width,best");
        assert_eq!(lines[1], "0.5,0.5,0.25,0.2,0.4,bc");
        assert_eq!(lines.len(), 2);
    }

    #[test]
    fn dominant_algorithm_marked_every_row_and_ties_mark_all() {
        let mut rows = Vec::new();
        for i in 0..=10 {
            let wm = i as f64 / 10.0;
            rows.push(row(wm, Algorithm::Cql, Metric::Fqe, 1.0 + wm));
            rows.push(row(wm, Algorithm::Ddqn, Metric::Fqe, wm));
            rows.push(row(wm, Algorithm::Bc, Metric::Fqe, if i == 3 { 1.3 } else { 0.0 }));
        }
        let text = emit_table(&rows, Metric::Fqe).unwrap();
        let lines: Vec<&str> = text.lines().skip(1).collect();
        assert_eq!(lines.len(), 11);
        for (i, line) in lines.iter().enumerate() {
            let best = line.rsplit(',').next().unwrap();
            assert_eq!(best, if i == 3 { "bc;cql" } else { "cql" }, "{line}");
        }
        // Rows come out in mortality-weight order.
        assert!(lines[0].starts_with("0,1,"));
        assert!(lines[10].starts_with("1,0,"));
    }

    #[test]
    fn full_grid_shape() {
        let mut rows = Vec::new();
        for i in 0..=10 {
            for a in Algorithm::ALL {
                rows.push(row(i as f64 / 10.0, a, Metric::Wis, i as f64));
            }
        }
        let text = emit_table(&rows, Metric::Wis).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 12);
        let header: Vec<&str> = lines[0].split(',').collect();
        let value_cols = header.iter().filter(|h| Algorithm::ALL.iter().any(|a| a.tag() == **h)).count();
        assert_eq!(value_cols, 6);
    }

    #[test]
    fn missing_and_failed_cells_are_na() {
        let mut failed = row(1.0, Algorithm::Bc, Metric::Wis, 0.0);
        failed.value = None;
        let rows = vec![
            row(0.0, Algorithm::Bc, Metric::Wis, 0.1),
            row(0.0, Algorithm::Cql, Metric::Wis, 0.2),
            row(1.0, Algorithm::Cql, Metric::Wis, 0.3),
            failed,
        ];
        let text = emit_table(&rows, Metric::Wis).unwrap();
        let last = text.lines().nth(2).unwrap();
        assert!(last.starts_with("1,0,NA,NA,NA,0.3,"), "{last}");
        assert!(last.ends_with(",cql"));
    }

    #[test]
    fn results_round_trip_through_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.csv");
        let mut failed = row(0.3, Algorithm::PedaDt, Metric::Fqe, 0.0);
        failed.value = None;
        failed.ci_lower = None;
        let rows = vec![row(0.1, Algorithm::ApCpql, Metric::Wis, 0.123456789), failed];
        write_results(&path, &rows).unwrap();
        assert_eq!(read_results(&path).unwrap(), rows);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("w_mortality,w_los,algorithm,metric,value,ci_lower,ci_upper,ci_width,seed\n"));
    }

    #[test]
    fn plot_rows_follow_x() {
        let rows = vec![
            row(1.0, Algorithm::Bc, Metric::Wis, 0.5),
            row(0.0, Algorithm::Bc, Metric::Wis, 0.4),
            row(0.0, Algorithm::Bc, Metric::Fqe, 9.0),
        ];
        let text = emit_plot(&rows, Metric::Wis).unwrap();
        assert_eq!(text, "algorithm,x,y,y_lo,y_hi\nbc,0,0.4,0.30000000000000004,0.7\nbc,1,0.5,0.4,0.8\n");
    }

    #[test]
    fn summary_rows_average_errors() {
        let mk = |metric, e| CalibrationRow {
            seed: 0,
            algorithm: "bc".into(),
            w_mortality: Some(0.5),
            w_los: Some(0.5),
            metric,
            ope_value: Some(0.0),
            oracle_value: Some(e),
            absolute_error: Some(e),
        };
        let rows = with_summary(vec![mk(Metric::Wis, 0.1), mk(Metric::Wis, 0.3), mk(Metric::Fqe, 0.2)], &[Metric::Wis, Metric::Fqe]);
        assert_eq!(rows.len(), 5);
        assert!((rows[3].absolute_error.unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(rows[4].absolute_error, Some(0.2));
        assert_eq!(rows[3].algorithm, "summary");
    }
}
