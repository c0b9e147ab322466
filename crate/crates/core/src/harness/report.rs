use std::fmt::Write;

/// Success percentages of several runs and their summary statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Raw per-run scores in percent.
    pub scores: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation (divides by N).
    pub sd: f64,
    pub max: f64,
    pub min: f64,
}

impl EvalReport {
    /// `None` for an empty list or a score outside [0, 100].
    pub fn from_scores(scores: &[f64]) -> Option<Self> {
        if scores.is_empty() || scores.iter().any(|s| !(0.0..=100.0).contains(s)) {
            return None;
        }
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
        Some(Self {
            scores: scores.to_vec(),
            mean,
            sd: var.sqrt(),
            max: scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            min: scores.iter().copied().fold(f64::INFINITY, f64::min),
        })
    }

    /// Percentage of successes among `episodes`.
    pub fn percent(successes: usize, episodes: usize) -> f64 {
        if episodes == 0 {
            0.0
        } else {
            100.0 * successes as f64 / episodes as f64
        }
    }

    pub fn raw_line(&self) -> String {
        let parts: Vec<String> = self.scores.iter().map(|s| format!("{s}")).collect();
        parts.join(", ")
    }
}

/// Score table with one row per labelled report, followed by the raw
/// scores of every row.
pub fn format_table(rows: &[(&str, &EvalReport)]) -> String {
    let width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max("Method".len());
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$} | {:>10} | {:>8} | {:>8} | {:>8}",
        "Method", "Score Mean", "SD", "Max", "Min"
    );
    let _ = writeln!(out, "{}", "-".repeat(width + 47));
    for (label, r) in rows {
        let _ = writeln!(
            out,
            "{label:<width$} | {:>9.2}% | {:>7.2}% | {:>7.2}% | {:>7.2}%",
            r.mean, r.sd, r.max, r.min
        );
    }
    out.push('\n');
    for (label, r) in rows {
        let _ = writeln!(out, "{label} raw scores: {}", r.raw_line());
    }
    out
}
