//! Parsing of sweep grids: `start:step:stop` (inclusive) or `v1,v2,...`.

use anyhow::{bail, Context, Result};

pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let text = text.trim();
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            bail!("grid `{text}` must look like start:step:stop");
        }
        let num = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .with_context(|| format!("bad grid value `{s}`"))
        };
        let (start, step, stop) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if ![start, step, stop].iter().all(|v| v.is_finite()) || step <= 0.0 || stop < start {
            bail!("grid `{text}` needs a positive step and stop >= start");
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        if count > 100_000 {
            bail!("grid `{text}` has {count} points");
        }
        // snap away the binary residue of start + i*step
        Ok((0..count)
            .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
            .collect())
    } else {
        text.split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .with_context(|| format!("bad grid value `{s}`"))
            })
            .collect()
    }
}
