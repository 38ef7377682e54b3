use std::path::Path;

use anyhow::{bail, Context, Result};

/// Reads a two-column `(u, l(u))` CSV with a header row.
pub fn read_profile_table(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("opening profile table {}", path.display()))?;
    let mut knots = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: row {}", path.display(), i + 2))?;
        if rec.len() != 2 {
            bail!("{}: row {} has {} columns, expected 2", path.display(), i + 2, rec.len());
        }
        let u: f64 = rec[0].parse().with_context(|| format!("row {}: bad u", i + 2))?;
        let l: f64 = rec[1].parse().with_context(|| format!("row {}: bad l(u)", i + 2))?;
        knots.push((u, l));
    }
    if knots.len() < 2 {
        bail!("{}: a profile table needs at least two rows", path.display());
    }
    Ok(knots)
}
