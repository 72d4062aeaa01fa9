use std::io::Write;
use std::path::Path;

use serde::Serialize;

#[derive(Serialize)]
struct Record<'a> {
    /// Logical clock: the record's position in the log.
    timestamp: u64,
    phase: &'a str,
    metric: &'a str,
    value: Option<f64>,
}

/// Line-delimited JSON metrics, kept in memory until the command ends.
#[derive(Default)]
pub struct MetricsLog {
    clock: u64,
    buf: String,
}

impl MetricsLog {
    pub fn record(&mut self, phase: &str, metric: &str, value: impl Into<Option<f64>>) {
        let r = Record {
            timestamp: self.clock,
            phase,
            metric,
            value: value.into().filter(|v| v.is_finite()),
        };
        self.clock += 1;
        self.buf.push_str(&serde_json::to_string(&r).expect("record serializes"));
        self.buf.push('\n');
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.buf.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_are_numbered_in_order() {
        let mut l = MetricsLog::default();
        l.record("stance", "dev_macro_f1", 0.5);
        l.record("kgae", "auc", None);
        l.record("kgae", "loss", f64::NAN);
        let lines: Vec<serde_json::Value> = l.buf.lines().map(|s| serde_json::from_str(s).unwrap()).collect();
        assert_eq!(lines[0]["timestamp"], 0);
        assert_eq!(lines[0]["phase"], "stance");
        assert_eq!(lines[0]["value"], 0.5);
        assert_eq!(lines[1]["timestamp"], 1);
        assert!(lines[1]["value"].is_null());
        assert!(lines[2]["value"].is_null());
    }
}
