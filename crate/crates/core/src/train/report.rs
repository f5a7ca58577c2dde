use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub epoch: usize,
    pub split: Split,
    pub metric: f64,
    pub loss: f64,
    /// Seconds since the start of training, or 0 when wall time is not
    /// recorded.
    pub seconds: f64,
}

/// Per-epoch training and evaluation metrics of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub seed: u64,
    /// `accuracy` for class heads, `mae` for regression.
    pub metric: String,
    pub rows: Vec<MetricRow>,
}

impl MetricReport {
    /// Last recorded metric on `split`.
    pub fn last(&self, split: Split) -> Option<&MetricRow> {
        self.rows.iter().rev().find(|r| r.split == split)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,split,metric,loss,seconds\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.epoch,
                r.split.as_str(),
                r.metric,
                r.loss,
                r.seconds
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}
