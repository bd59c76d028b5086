use std::fs;
use std::path::Path;
use std::time::Duration;

use anyhow::{Context, Result};
use prunerank_core::harness::Table;
use serde::Serialize;
use serde_json::Value;

/// Everything written to `report.json`. Contains no timing or host data, so
/// identical config and seed give identical bytes.
#[derive(Debug, Serialize)]
pub struct ExperimentReport {
    pub command: String,
    pub seed: u64,
    pub config: Value,
    pub results: Value,
    pub passed: bool,
}

#[derive(Debug, Serialize)]
struct Timing {
    command: String,
    wall_seconds: f64,
}

pub fn write_outputs(
    out: &Path,
    report: &ExperimentReport,
    tables: &[Table],
    elapsed: Duration,
) -> Result<()> {
    let table_dir = out.join("tables");
    fs::create_dir_all(&table_dir).with_context(|| format!("creating {}", table_dir.display()))?;

    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    fs::write(out.join("report.json"), json).context("writing report.json")?;

    for t in tables {
        let path = table_dir.join(format!("{}.csv", t.name));
        let mut w = csv::Writer::from_path(&path)
            .with_context(|| format!("creating {}", path.display()))?;
        w.write_record(&t.headers)?;
        for row in &t.rows {
            w.write_record(row)?;
        }
        w.flush()?;
    }

    let timing = Timing {
        command: report.command.clone(),
        wall_seconds: elapsed.as_secs_f64(),
    };
    fs::write(
        out.join("timing.json"),
        serde_json::to_string_pretty(&timing)? + "\n",
    )
    .context("writing timing.json")?;
    Ok(())
}
