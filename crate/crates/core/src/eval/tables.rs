use std::fmt;

use serde::Serialize;

use super::{DepthNoiseStats, DistanceReport, FpFnReport, REPORT_PERCENTILES};

/// An aligned, pipe-separated text table with optional footnotes.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TextTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub notes: Vec<String>,
}

impl fmt::Display for TextTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cols = self.rows.iter().map(Vec::len).chain([self.header.len()]).max().unwrap_or(0);
        let mut width = vec![0; cols];
        for row in self.rows.iter().chain([&self.header]) {
            for (i, cell) in row.iter().enumerate() {
                width[i] = width[i].max(cell.chars().count());
            }
        }
        let line = |f: &mut fmt::Formatter<'_>, row: &[String]| -> fmt::Result {
            let cells: Vec<String> = (0..cols)
                .map(|i| {
                    let cell = row.get(i).map(String::as_str).unwrap_or("");
                    if i == 0 {
                        format!("{cell:<w$}", w = width[i])
                    } else {
                        format!("{cell:>w$}", w = width[i])
                    }
                })
                .collect();
            writeln!(f, "| {} |", cells.join(" | "))
        };
        line(f, &self.header)?;
        let rule: Vec<String> = width.iter().map(|&w| "-".repeat(w)).collect();
        writeln!(f, "|-{}-|", rule.join("-|-"))?;
        for row in &self.rows {
            line(f, row)?;
        }
        for note in &self.notes {
            writeln!(f, "{note}")?;
        }
        Ok(())
    }
}

fn header(first: &str, rest: impl IntoIterator<Item = impl ToString>) -> Vec<String> {
    std::iter::once(first.to_string()).chain(rest.into_iter().map(|s| s.to_string())).collect()
}

/// Averages further than this from the nominal distance are flagged.
pub const NOMINAL_FLAG: f64 = 0.05;

/// Min/max/average/std rows per nominal distance, one column per pixel
/// region. Averages more than 5 cm off nominal are marked `*`.
pub fn noise_table(columns: &[&str], rows: &[(f64, Vec<DepthNoiseStats>)]) -> TextTable {
    let mut table = TextTable {
        header: header("", columns),
        ..Default::default()
    };
    let mut flagged = false;
    for (nominal, stats) in rows {
        flagged |= stats.iter().any(|s| (s.mean - nominal).abs() > NOMINAL_FLAG);
        let row = |label: &str, cell: &dyn Fn(&DepthNoiseStats) -> String| {
            header(&format!("{label} {nominal}m [m]"), stats.iter().map(cell))
        };
        table.rows.push(row("Minimum distance", &|s| format!("{:.3}", s.min)));
        table.rows.push(row("Maximum distance", &|s| format!("{:.3}", s.max)));
        table.rows.push(row("Average distance", &|s| {
            if (s.mean - nominal).abs() > NOMINAL_FLAG {
                format!("*{:.5}", s.mean)
            } else {
                format!("{:.5}", s.mean)
            }
        }));
        table.rows.push(row("Standard deviation", &|s| format!("{:.5}", s.std)));
    }
    if flagged {
        table
            .notes
            .push(format!("* average differs from the nominal distance by more than {NOMINAL_FLAG} m"));
    }
    table
}

/// Averaged depth per repetition, one row per nominal distance.
pub fn repetition_table(rows: &[(f64, Vec<f64>)]) -> TextTable {
    let reps = rows.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
    TextTable {
        header: header("", (1..=reps).map(|i| format!("Repetition {i}"))),
        rows: rows
            .iter()
            .map(|(nominal, v)| header(&format!("{nominal} m"), v.iter().map(|d| format!("{d:.6}"))))
            .collect(),
        notes: vec![],
    }
}

/// Mean ("Euclidean") and Hausdorff distance per map variant.
pub fn distance_table(columns: &[&str], reports: &[DistanceReport]) -> TextTable {
    TextTable {
        header: header("", columns),
        rows: vec![
            header("Euclidean distance [m]", reports.iter().map(|r| format!("{:.6}", r.mean))),
            header("Hausdorff distance [m]", reports.iter().map(|r| format!("{:.6}", r.hausdorff))),
        ],
        notes: vec![],
    }
}

/// Percentile rows per map variant.
pub fn percentile_table(columns: &[&str], reports: &[DistanceReport]) -> TextTable {
    TextTable {
        header: header("Percentile", columns),
        rows: REPORT_PERCENTILES
            .iter()
            .map(|p| {
                header(
                    &format!("{p}th [m]"),
                    reports.iter().map(|r| format!("{:.5}", r.percentiles.get(p).copied().unwrap_or(f64::NAN))),
                )
            })
            .collect(),
        notes: vec![],
    }
}

fn mean_and_sample_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// False positives and negatives per run with the mean and sample standard
/// deviation across runs.
pub fn fp_fn_table(runs: &[FpFnReport]) -> TextTable {
    let row = |label: &str, pick: fn(&FpFnReport) -> usize| {
        let values: Vec<f64> = runs.iter().map(|r| pick(r) as f64).collect();
        let (mean, sd) = mean_and_sample_std(&values);
        let mut cells = header(label, runs.iter().map(pick));
        if !runs.is_empty() {
            cells.push(format!("{mean:.2}"));
            cells.push(format!("{sd:.2}"));
        }
        cells
    };
    TextTable {
        header: header("", (1..=runs.len()).map(|i| i.to_string()).chain(["mean".into(), "sd".into()])),
        rows: vec![row("false positive", |r| r.false_positive), row("false negative", |r| r.false_negative)],
        notes: vec![],
    }
}
