use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::runner::{RunResult, DESIGNS};
use crate::error::{Error, Result};

/// Column names of a result table.
pub fn header(sensors: usize) -> Vec<String> {
    let mut cols = vec!["k".to_string()];
    cols.extend(DESIGNS.iter().map(|d| format!("mse_{}", d.name())));
    cols.extend(DESIGNS.iter().map(|d| format!("sample_mse_{}", d.name())));
    cols.extend((1..=sensors).map(|i| format!("energy_sensor_{i}")));
    cols.push("lemma1_bound".into());
    cols.push("lemma1_decrease".into());
    cols
}

/// Numeric rows (`k` first); missing quantities are NaN.
pub fn table_rows(result: &RunResult) -> Vec<Vec<f64>> {
    let k_max = result.horizon();
    let n = result.config.dims.sensors;
    let mse: Vec<Option<Vec<f64>>> = DESIGNS.iter().map(|&d| result.mean_mse(d)).collect();
    let sample: Vec<Option<Vec<f64>>> = DESIGNS.iter().map(|&d| result.mean_sample_mse(d)).collect();
    let energy = result.mean_energy();
    let lemma = result.mean_lemma();
    (0..k_max)
        .map(|k| {
            let mut row = vec![(k + 1) as f64];
            row.extend(mse.iter().map(|s| s.as_ref().map_or(f64::NAN, |v| v[k])));
            row.extend(sample.iter().map(|s| s.as_ref().map_or(f64::NAN, |v| v[k])));
            match &energy {
                Some(e) => row.extend(e[k].iter().copied()),
                None => row.extend(std::iter::repeat_n(f64::NAN, n)),
            }
            let (b, d) = lemma.as_ref().map_or((f64::NAN, f64::NAN), |l| l[k]);
            row.push(b);
            row.push(d);
            row
        })
        .collect()
}

pub fn render_table(result: &RunResult) -> String {
    let mut out = header(result.config.dims.sensors).join(",");
    out.push('\n');
    for row in table_rows(result) {
        let mut first = true;
        for (j, v) in row.iter().enumerate() {
            if !first {
                out.push(',');
            }
            first = false;
            if j == 0 {
                let _ = write!(out, "{}", *v as usize);
            } else {
                let _ = write!(out, "{v:.16e}");
            }
        }
        out.push('\n');
    }
    out
}

/// Path of the configuration echo written next to a table.
pub fn config_echo_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".config.toml");
    PathBuf::from(s)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

/// Fails with the missing directory when the parent of `path` does not exist.
pub fn check_parent(path: &Path) -> Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => return Ok(()),
    };
    if !parent.is_dir() {
        return Err(Error::Io {
            path: parent.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "directory does not exist"),
        });
    }
    Ok(())
}

/// Writes the table to `path` and the configuration to
/// `<path>.config.toml`.
pub fn emit_results(result: &RunResult, path: &Path) -> Result<()> {
    check_parent(path)?;
    std::fs::write(path, render_table(result)).map_err(io_err(path))?;
    let echo = config_echo_path(path);
    std::fs::write(&echo, result.config.to_toml_string()?).map_err(io_err(&echo))?;
    Ok(())
}

/// Final-step summary of a sweep: one row per value.
pub fn render_sweep_summary(parameter: &str, runs: &[(f64, RunResult)]) -> String {
    let mut out = parameter.to_string();
    for d in DESIGNS {
        let _ = write!(out, ",final_mse_{0},final_mse_se_{0}", d.name());
    }
    out.push('\n');
    for (v, r) in runs {
        let _ = write!(out, "{v:.16e}");
        for d in DESIGNS {
            let m = r.final_mse(d).unwrap_or(f64::NAN);
            let se = r.mse_std_err(d).and_then(|s| s.last().copied()).unwrap_or(f64::NAN);
            let _ = write!(out, ",{m:.16e},{se:.16e}");
        }
        out.push('\n');
    }
    out
}

/// Parses a table written by [`render_table`]: header and numeric rows.
pub fn parse_table(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Config("empty table".into()))?
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split(',')
                .map(|v| v.parse::<f64>().map_err(|e| Error::Config(format!("bad number '{v}': {e}"))))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((header, rows))
}

/// Mean squared error of one design at the last step, formatted for logs.
pub fn describe(result: &RunResult) -> String {
    let mut s = String::new();
    for d in DESIGNS {
        if let Some(m) = result.final_mse(d) {
            let _ = write!(s, "{}={m:.6e} ", d.name());
        }
    }
    let _ = write!(s, "({} trials, {:.1?})", result.traces.len(), result.wall_clock);
    s
}
