//! Report emission: `report.json`, `timings.json` and `tables/*.csv`.
//!
//! Every file is written to a temporary sibling and renamed into place, so a
//! reader never sees a half-written artifact. The report holds no wall-clock
//! data; timings go to their own file so equal inputs give equal reports.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::pipeline::{RunOutput, RunReport, Table};

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension(format!(
        "{}.partial",
        path.extension().and_then(|e| e.to_str()).unwrap_or("out")
    ));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

fn table_bytes(table: &Table) -> std::io::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))
}

pub fn report_json(report: &RunReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn parse_report(text: &str) -> serde_json::Result<RunReport> {
    serde_json::from_str(text)
}

/// Writes all artifacts under `dir`; returns the paths written, report last.
pub fn emit(out: &RunOutput, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let tables_dir = dir.join("tables");
    std::fs::create_dir_all(&tables_dir)?;
    let mut written = Vec::new();
    for table in &out.tables {
        let path = tables_dir.join(format!("{}.csv", table.name));
        write_atomic(&path, &table_bytes(table)?)?;
        written.push(path);
    }
    let timings = dir.join("timings.json");
    write_atomic(&timings, serde_json::to_string_pretty(&out.timings)?.as_bytes())?;
    written.push(timings);
    let report = dir.join("report.json");
    write_atomic(&report, report_json(&out.report).as_bytes())?;
    written.push(report);
    Ok(written)
}
