//! Serialization of bound reports (JSON or flattened CSV) and trajectory
//! tables (CSV). Floats print in shortest round-trip form, so files parse
//! back losslessly and identical runs are byte-identical.

use anyhow::Result;
use std::io::Write;

use qdecay_core::bounds::BoundReport;

use crate::circuit::TrajectoryRow;

pub fn reports_to_json(reports: &[BoundReport]) -> Result<String> {
    if reports.len() == 1 {
        Ok(serde_json::to_string_pretty(&reports[0])?)
    } else {
        Ok(serde_json::to_string_pretty(reports)?)
    }
}

/// Quote a CSV field when it contains a delimiter, quote, or newline.
fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Flatten reports into CSV: one row per report, columns from the first
/// report's input/value/validity names.
pub fn reports_to_csv(reports: &[BoundReport]) -> String {
    let mut out = String::new();
    if reports.is_empty() {
        return out;
    }
    let head = &reports[0];
    let mut cols: Vec<String> = vec!["formula_id".into(), "variant".into()];
    cols.extend(head.inputs.iter().map(|(n, _)| csv_field(&format!("in_{n}"))));
    cols.extend(head.values.iter().map(|(n, _)| csv_field(&format!("val_{n}"))));
    cols.extend(head.validity.iter().map(|v| csv_field(&format!("ok_{}", v.name))));
    out.push_str(&cols.join(","));
    out.push('\n');
    for r in reports {
        let mut row: Vec<String> = vec![
            csv_field(&r.formula_id),
            r.variant.map_or(String::new(), |v| format!("{v:?}").to_lowercase()),
        ];
        row.extend(r.inputs.iter().map(|(_, v)| format!("{v}")));
        row.extend(r.values.iter().map(|(_, v)| format!("{v}")));
        row.extend(r.validity.iter().map(|v| v.ok.to_string()));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn trajectories_to_csv(rows: &[TrajectoryRow]) -> String {
    let mut out = String::from("trial,layer,entropy,ratio\n");
    for r in rows {
        let ratio = r.ratio.map_or(String::new(), |v| format!("{v}"));
        out.push_str(&format!("{},{},{},{}\n", r.trial, r.layer, r.entropy, ratio));
    }
    out
}

/// Parse a trajectory CSV back (used by the round-trip tests).
pub fn trajectories_from_csv(text: &str) -> Result<Vec<TrajectoryRow>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        anyhow::ensure!(parts.len() == 4, "line {i}: expected 4 fields");
        rows.push(TrajectoryRow {
            trial: parts[0].parse()?,
            layer: parts[1].parse()?,
            entropy: parts[2].parse()?,
            ratio: if parts[3].is_empty() { None } else { Some(parts[3].parse()?) },
        });
    }
    Ok(rows)
}

/// Write to the given path, or stdout when absent.
pub fn emit(text: &str, out: Option<&std::path::Path>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(text.as_bytes())?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use qdecay_core::bounds::{glue_error, parallel_r, Variant};

    #[test]
    fn csv_round_trip_of_trajectories() {
        let rows = vec![
            TrajectoryRow { trial: 0, layer: 1, entropy: 0.125, ratio: None },
            TrajectoryRow { trial: 0, layer: 2, entropy: 1.0 / 3.0, ratio: Some(0.7) },
        ];
        let text = trajectories_to_csv(&rows);
        let back = trajectories_from_csv(&text).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].entropy, rows[1].entropy);
        assert_eq!(back[1].ratio, rows[1].ratio);
        assert_eq!(back[0].ratio, None);
    }

    #[test]
    fn report_json_parses_back() {
        let r = glue_error(0.0, 0.0, 2, 1024.0);
        let json = reports_to_json(&[r]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["formula_id"], "glue");
        assert_eq!(v["values"][0][1], 0.01953125);
    }

    #[test]
    fn csv_flattening_has_stable_quoted_header() {
        let rs: Vec<_> = [8usize, 16, 32]
            .iter()
            .map(|&n| parallel_r(2, 1, n, 0.5, Variant::AsStated))
            .collect();
        let csv = reports_to_csv(&rs);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "formula_id,variant,in_q,in_k,in_n,in_eps,val_r,\"ok_eps in (0, 1/2]\",ok_r < n/4"
        );
        assert_eq!(csv.lines().count(), 4);
    }
}
