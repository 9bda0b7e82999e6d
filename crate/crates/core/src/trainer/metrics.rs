use std::fmt::Write;

use serde::{Deserialize, Serialize};

pub const METRICS_HEADER: &str = "epoch,L_y,L_adv,L_bias,L_pce,L_nce,L_total,target_accuracy,source_accuracy,mean_u,mean_mu,proxy_A_distance,wall_ms";

/// End-of-epoch diagnostics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub l_y: f64,
    pub l_adv: f64,
    pub l_bias: f64,
    pub l_pce: f64,
    pub l_nce: f64,
    pub l_total: f64,
    pub target_accuracy: f64,
    pub source_accuracy: f64,
    pub mean_u: f64,
    pub mean_mu: f64,
    pub proxy_a_distance: f64,
    /// Zero unless wall-clock recording is enabled, which keeps the log
    /// reproducible byte-for-byte by default.
    pub wall_ms: u64,
}

impl MetricsRow {
    fn reals(&self) -> [f64; 11] {
        [
            self.l_y,
            self.l_adv,
            self.l_bias,
            self.l_pce,
            self.l_nce,
            self.l_total,
            self.target_accuracy,
            self.source_accuracy,
            self.mean_u,
            self.mean_mu,
            self.proxy_a_distance,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.reals().iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub rows: Vec<MetricsRow>,
}

impl MetricsLog {
    pub fn push(&mut self, row: MetricsRow) {
        debug_assert!(self.rows.last().is_none_or(|r| r.epoch < row.epoch));
        self.rows.push(row);
    }

    pub fn last(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Header plus one line per row; reals in shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(METRICS_HEADER);
        out.push('\n');
        for row in &self.rows {
            write!(out, "{}", row.epoch).unwrap();
            for v in row.reals() {
                write!(out, ",{v}").unwrap();
            }
            writeln!(out, ",{}", row.wall_ms).unwrap();
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == METRICS_HEADER => {}
            other => return Err(format!("unexpected header {other:?}")),
        }
        let mut log = MetricsLog::default();
        for (i, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 13 {
                return Err(format!("row {}: {} fields", i + 1, fields.len()));
            }
            let real = |j: usize| fields[j].parse::<f64>().map_err(|e| format!("row {}: {e}", i + 1));
            log.rows.push(MetricsRow {
                epoch: fields[0].parse().map_err(|e| format!("row {}: {e}", i + 1))?,
                l_y: real(1)?,
                l_adv: real(2)?,
                l_bias: real(3)?,
                l_pce: real(4)?,
                l_nce: real(5)?,
                l_total: real(6)?,
                target_accuracy: real(7)?,
                source_accuracy: real(8)?,
                mean_u: real(9)?,
                mean_mu: real(10)?,
                proxy_a_distance: real(11)?,
                wall_ms: fields[12].parse().map_err(|e| format!("row {}: {e}", i + 1))?,
            });
        }
        Ok(log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let mut log = MetricsLog::default();
        log.push(MetricsRow {
            epoch: 1,
            l_y: 0.1 + 0.2,
            mean_u: 1e-7,
            target_accuracy: 0.875,
            ..Default::default()
        });
        log.push(MetricsRow {
            epoch: 2,
            wall_ms: 12,
            ..Default::default()
        });
        let text = log.to_csv();
        assert!(text.starts_with(METRICS_HEADER));
        assert_eq!(text.lines().count(), 3);
        assert_eq!(MetricsLog::from_csv(&text).unwrap(), log);
    }

    #[test]
    fn finiteness() {
        let mut row = MetricsRow::default();
        assert!(row.is_finite());
        row.l_total = f64::NAN;
        assert!(!row.is_finite());
    }
}
