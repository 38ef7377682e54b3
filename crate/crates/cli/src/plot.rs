//! Plot-ready data: whitespace-separated columns with a `#` header line,
//! read straight from the JSON artifacts of a run.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Oscillation,
    Holder,
    J2,
}

impl FromStr for PlotKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "oscillation" => PlotKind::Oscillation,
            "holder" => PlotKind::Holder,
            "j2" | "J2" => PlotKind::J2,
            other => bail!("unknown plot kind {other:?} (expected oscillation, holder or j2)"),
        })
    }
}

// JSON writes non-finite floats as null
fn num(v: &Value, key: &str) -> f64 {
    v.get(key).and_then(Value::as_f64).unwrap_or(f64::NAN)
}

fn table(header: &str, rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut s = format!("# {header}\n");
    for row in rows {
        let cols: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        let _ = writeln!(s, "{}", cols.join(" "));
    }
    s
}

fn save(out: &Path, name: &str, text: String) -> Result<PathBuf> {
    let p = out.join(name);
    std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
    Ok(p)
}

/// Writes the data files for `kind` from `input` (a JSON artifact or the
/// run directory holding it) into `out`, returning the written paths.
pub fn emit_plot_data(input: &Path, kind: PlotKind, out: &Path) -> Result<Vec<PathBuf>> {
    let file = if input.is_dir() {
        input.join(match kind {
            PlotKind::Oscillation => "oscillation.json",
            PlotKind::Holder => "holder.json",
            PlotKind::J2 => "conditions.json",
        })
    } else {
        input.to_path_buf()
    };
    let text = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
    let v: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", file.display()))?;
    std::fs::create_dir_all(out)?;
    match kind {
        PlotKind::Oscillation => {
            let levels = v["levels"].as_array().context("no oscillation levels in input")?;
            let rows = levels.iter().map(|l| vec![num(l, "n"), num(l, "osc"), num(l, "bound"), num(l, "noise")]);
            Ok(vec![save(out, "oscillation.dat", table("n osc_n s_n noise", rows))?])
        }
        PlotKind::Holder => {
            let pts = v["points"].as_array().context("no holder points in input")?;
            let scatter = pts.iter().map(|p| vec![num(p, "distance"), num(p, "delta"), num(p, "std_error")]);
            let bound = pts.iter().map(|p| vec![num(p, "distance"), num(p, "bound")]);
            let mut files = vec![
                save(out, "holder_points.dat", table("distance delta std_error", scatter))?,
                save(out, "holder_bound.dat", table("distance bound", bound))?,
            ];
            let fit = &v["fit"];
            if fit["available"].as_bool() == Some(true) {
                let (beta, c) = (num(fit, "beta"), num(fit, "intercept"));
                let line = pts.iter().map(|p| {
                    let d = num(p, "distance");
                    vec![d, (c + beta * d.ln()).exp()]
                });
                files.push(save(out, "holder_fit.dat", table("distance fitted", line))?);
            }
            Ok(files)
        }
        PlotKind::J2 => {
            let reports = v.as_array().map(|a| a.as_slice()).unwrap_or(std::slice::from_ref(&v));
            let j2 = reports
                .iter()
                .find(|r| r["condition"] == "J2")
                .context("no J2 report in input")?;
            let d = &j2["details"];
            let levels = d["levels"].as_array().context("J2 report without levels")?;
            let decay =
                levels.iter().map(|l| vec![num(l, "n"), num(l, "m_n"), num(l, "std_error"), num(l, "bound")]);
            let (c0, a0) = (num(d, "fitted_c0"), num(d, "fitted_a0"));
            let fit = levels.iter().map(|l| {
                let n = num(l, "n");
                vec![n, c0 * a0.powf(n)]
            });
            Ok(vec![
                save(out, "j2_decay.dat", table("n m_n std_error ledger_bound", decay))?,
                save(out, "j2_fit.dat", table("n fitted", fit))?,
            ])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_kind_is_rejected() {
        assert!("scatter".parse::<PlotKind>().is_err());
        assert_eq!("j2".parse::<PlotKind>().unwrap(), PlotKind::J2);
    }

    #[test]
    fn oscillation_levels_become_rows() {
        let dir = tempfile::tempdir().unwrap();
        let json = r#"{"levels": [{"n": 0, "osc": 1.0, "bound": 2.0, "noise": 0.0},
                                  {"n": 1, "osc": null, "bound": 1.5, "noise": 0.1}]}"#;
        std::fs::write(dir.path().join("oscillation.json"), json).unwrap();
        let files = emit_plot_data(dir.path(), PlotKind::Oscillation, dir.path()).unwrap();
        let text = std::fs::read_to_string(&files[0]).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "0e0 1e0 2e0 0e0");
        assert!(lines[2].contains("NaN"));
    }
}
