use std::collections::VecDeque;
use std::io::{BufRead, Write};

use crate::agents::EpisodeRecord;

use super::HarnessError;

/// Episodes in the rolling success window.
pub const ROLLING_WINDOW: usize = 25;

pub const CSV_HEADER: &str = "seed,episode,global_step,steps,success,return,rolling_success";

/// One training episode as written to the metrics CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub seed: u64,
    pub episode: u64,
    pub global_step: u64,
    pub steps: u32,
    pub success: bool,
    pub ret: f64,
    /// Percentage of successes among the last `ROLLING_WINDOW` episodes
    /// (fewer at the start of training).
    pub rolling_success: f64,
}

/// Converts episode records of one run into rows, in completion order.
pub fn rows_from_records(seed: u64, records: &[EpisodeRecord]) -> Vec<MetricsRow> {
    let mut window: VecDeque<bool> = VecDeque::with_capacity(ROLLING_WINDOW);
    let mut wins = 0usize;
    records
        .iter()
        .map(|r| {
            if window.len() == ROLLING_WINDOW && window.pop_front() == Some(true) {
                wins -= 1;
            }
            window.push_back(r.success);
            wins += r.success as usize;
            MetricsRow {
                seed,
                episode: r.episode,
                global_step: r.global_step,
                steps: r.steps,
                success: r.success,
                ret: r.ret,
                rolling_success: 100.0 * wins as f64 / window.len() as f64,
            }
        })
        .collect()
}

pub fn write_csv<W: Write>(mut w: W, rows: &[MetricsRow]) -> Result<(), HarnessError> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.seed, r.episode, r.global_step, r.steps, r.success as u8, r.ret, r.rolling_success
        )?;
    }
    w.flush()?;
    Ok(())
}

fn field<T: std::str::FromStr>(line: usize, name: &str, s: Option<&str>) -> Result<T, HarnessError> {
    s.and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| HarnessError::Csv(format!("line {line}: bad or missing {name}")))
}

pub fn read_csv<R: BufRead>(r: R) -> Result<Vec<MetricsRow>, HarnessError> {
    let mut rows = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line.trim() != CSV_HEADER {
                return Err(HarnessError::Csv(format!("unexpected header {line:?}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut f = line.split(',');
        let n = i + 1;
        rows.push(MetricsRow {
            seed: field(n, "seed", f.next())?,
            episode: field(n, "episode", f.next())?,
            global_step: field(n, "global_step", f.next())?,
            steps: field(n, "steps", f.next())?,
            success: field::<u8>(n, "success", f.next())? != 0,
            ret: field(n, "return", f.next())?,
            rolling_success: field(n, "rolling_success", f.next())?,
        });
    }
    Ok(rows)
}

/// Mean rolling success over the episodes that ended in the last
/// `fraction` of `total_steps`. `None` when no episode ended there.
pub fn final_rolling_success(rows: &[MetricsRow], total_steps: u64, fraction: f64) -> Option<f64> {
    let from = (total_steps as f64 * (1.0 - fraction)).floor() as u64;
    let tail: Vec<f64> = rows
        .iter()
        .filter(|r| r.global_step >= from)
        .map(|r| r.rolling_success)
        .collect();
    (!tail.is_empty()).then(|| tail.iter().sum::<f64>() / tail.len() as f64)
}
