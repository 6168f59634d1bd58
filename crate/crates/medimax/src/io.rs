//! Artifact writing: `report.json` with a provenance header, plus one CSV
//! per report under `tables/`. Identical (config, seed) pairs must produce
//! byte-identical files, so nothing here reads clocks or iterates maps with
//! unstable order.

use std::fs;
use std::path::{Path, PathBuf};

use medimax_core::experiments::Report;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

impl Provenance {
    pub fn new(canonical_config: &str, seed: u64) -> Provenance {
        let mut hasher = Sha256::new();
        hasher.update(canonical_config.as_bytes());
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(64);
        for byte in digest {
            hex.push_str(&format!("{byte:02x}"));
        }
        Provenance {
            config_hash: hex,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Serialize)]
struct ReportDocument<'a> {
    provenance: &'a Provenance,
    config: serde_json::Value,
    reports: &'a [(String, Report)],
}

/// Write `report.json` and `tables/<slug>.csv` for every report. Returns the
/// paths written, report.json first.
pub fn write_artifacts(
    out_dir: &Path,
    canonical_config: &str,
    provenance: &Provenance,
    reports: &[(String, Report)],
) -> Result<Vec<PathBuf>, CliError> {
    let tables = out_dir.join("tables");
    fs::create_dir_all(&tables)?;

    let config: serde_json::Value = serde_json::from_str(canonical_config)
        .map_err(|e| CliError::Io(format!("config reserialization failed: {e}")))?;
    let doc = ReportDocument {
        provenance,
        config,
        reports,
    };
    let report_path = out_dir.join("report.json");
    let json = serde_json::to_string_pretty(&doc)
        .map_err(|e| CliError::Io(format!("report serialization failed: {e}")))?;
    fs::write(&report_path, json + "\n")?;

    let mut written = vec![report_path];
    for (slug, report) in reports {
        let path = tables.join(format!("{slug}.csv"));
        write_table(&path, report)?;
        written.push(path);
    }
    Ok(written)
}

/// Rows may have ragged keys; the header is the union in first-seen order
/// and missing cells stay empty.
fn write_table(path: &Path, report: &Report) -> Result<(), CliError> {
    let mut header: Vec<&str> = Vec::new();
    for row in &report.rows {
        for (key, _) in &row.fields {
            if !header.iter().any(|h| h == key) {
                header.push(key);
            }
        }
    }

    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(&header)
        .map_err(|e| CliError::Io(format!("csv write failed: {e}")))?;
    for row in &report.rows {
        let record: Vec<String> = header
            .iter()
            .map(|key| match row.get(key) {
                Some(v) => format_value(v),
                None => String::new(),
            })
            .collect();
        writer
            .write_record(&record)
            .map_err(|e| CliError::Io(format!("csv write failed: {e}")))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| CliError::Io(format!("csv flush failed: {e}")))?;
    fs::write(path, bytes)?;
    Ok(())
}

/// Shortest round-trip float text; integers print without a fraction.
fn format_value(v: f64) -> String {
    if v.is_finite() && v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// One console line per report: kind, verdict states, headline summaries.
pub fn console_summary(reports: &[(String, Report)]) -> String {
    let mut lines = Vec::new();
    for (slug, report) in reports {
        let mut parts = vec![format!("{slug}:")];
        for (key, value) in &report.summary {
            parts.push(format!("{key}={}", format_value(*value)));
        }
        for (key, ok) in &report.verdicts {
            parts.push(format!("{key}={}", if *ok { "pass" } else { "FAIL" }));
        }
        lines.push(parts.join(" "));
        for caveat in &report.caveats {
            lines.push(format!("  note: {caveat}"));
        }
    }
    lines.join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use medimax_core::experiments::weak_type_constant;
    use medimax_core::maximal::EngineOpts;
    use medimax_core::{basis, median::Gamma, space::Field, Space};

    fn tiny_report() -> Report {
        let space = Space::grid(&[32], 0.25).unwrap();
        let family =
            basis::BasisFamily::new(basis::BasisKind::Balls, -2, 2, 7).unwrap();
        let block = Field::from_fn(&space, |x| if x[0] > 2.0 && x[0] < 4.0 { 1.0 } else { 0.0 })
            .unwrap();
        weak_type_constant(
            &space,
            &family,
            Gamma::new(0.25).unwrap(),
            &[("block".to_string(), block)],
            None,
            &EngineOpts::default(),
        )
        .unwrap()
    }

    #[test]
    fn artifacts_are_byte_deterministic() {
        let dir_a = std::env::temp_dir().join("medimax-io-test-a");
        let dir_b = std::env::temp_dir().join("medimax-io-test-b");
        let _ = fs::remove_dir_all(&dir_a);
        let _ = fs::remove_dir_all(&dir_b);
        let report = tiny_report();
        let config = "{\"experiment\":\"weaktype\",\"seed\":7}";
        let prov = Provenance::new(config, 7);
        let reports = vec![("weaktype".to_string(), report)];
        let paths_a = write_artifacts(&dir_a, config, &prov, &reports).unwrap();
        let paths_b = write_artifacts(&dir_b, config, &prov, &reports).unwrap();
        for (a, b) in paths_a.iter().zip(&paths_b) {
            assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
        }
        let csv = fs::read_to_string(&paths_a[1]).unwrap();
        assert!(csv.lines().count() >= 2, "header plus at least one row");
    }

    #[test]
    fn provenance_hash_tracks_config_changes() {
        let a = Provenance::new("{\"gamma\":0.25}", 1);
        let b = Provenance::new("{\"gamma\":0.5}", 1);
        assert_ne!(a.config_hash, b.config_hash);
        assert_eq!(a.config_hash.len(), 64);
    }

    #[test]
    fn integers_print_clean_in_tables() {
        assert_eq!(format_value(2.0), "2");
        assert_eq!(format_value(0.5), "0.5");
        assert_eq!(format_value(-3.0), "-3");
    }
}
