//! Plain-text series files and output helpers.
//!
//! A series file has the header `index,X,epsilon` followed by one row per
//! time point. Rows with index `<= 0` are pre-sample values; the `epsilon`
//! column may be empty or absent.

use std::fs;
use std::path::Path;

use crate::ar::TimeSeries;
use crate::error::{Error, Result};

const HEADER: &str = "index,X,epsilon";

pub fn series_to_csv(series: &TimeSeries) -> String {
    let p = series.warm_start.len() as i64;
    let mut out = format!("{HEADER}\n");
    for (k, x) in series.warm_start.iter().enumerate() {
        out.push_str(&format!("{},{x},\n", k as i64 + 1 - p));
    }
    for (k, x) in series.values.iter().enumerate() {
        match &series.innovations {
            Some(eps) => out.push_str(&format!("{},{x},{}\n", k + 1, eps[k])),
            None => out.push_str(&format!("{},{x},\n", k + 1)),
        }
    }
    out
}

pub fn series_from_csv(text: &str) -> Result<TimeSeries> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == HEADER || h.trim() == "index,X" => {}
        Some((i, h)) => return Err(Error::Parse { line: i + 1, msg: format!("unexpected header {h:?}") }),
        None => return Err(Error::Parse { line: 1, msg: "empty input".into() }),
    }
    let mut warm = Vec::new();
    let mut values = Vec::new();
    let mut eps: Vec<Option<f64>> = Vec::new();
    let mut first: Option<i64> = None;
    let mut last: Option<i64> = None;
    for (i, line) in lines {
        let bad = |msg: String| Error::Parse { line: i + 1, msg };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 2 || fields.len() > 3 {
            return Err(bad(format!("expected 2 or 3 fields, found {}", fields.len())));
        }
        let index: i64 = fields[0].parse().map_err(|_| bad(format!("bad index {:?}", fields[0])))?;
        if let Some(prev) = last {
            if index != prev + 1 {
                return Err(bad(format!("index {index} does not follow {prev}")));
            }
        }
        first.get_or_insert(index);
        last = Some(index);
        let x: f64 = fields[1].parse().map_err(|_| bad(format!("bad value {:?}", fields[1])))?;
        if !x.is_finite() {
            return Err(bad("non-finite value".into()));
        }
        let e = match fields.get(2) {
            Some(s) if !s.is_empty() => Some(s.parse::<f64>().map_err(|_| bad(format!("bad innovation {s:?}")))?),
            _ => None,
        };
        if index <= 0 {
            if !values.is_empty() {
                return Err(bad("pre-sample row after observed rows".into()));
            }
            warm.push(x);
        } else {
            values.push(x);
            eps.push(e);
        }
    }
    if values.is_empty() {
        return Err(Error::Parse { line: 1, msg: "no observed rows".into() });
    }
    if first != Some(1 - warm.len() as i64) {
        return Err(Error::Parse { line: 2, msg: "observed rows must start at index 1".into() });
    }
    let innovations = if eps.iter().all(Option::is_some) { Some(eps.into_iter().flatten().collect()) } else { None };
    Ok(TimeSeries { values, innovations, warm_start: warm, model: None })
}

pub fn read_series(path: &Path) -> Result<TimeSeries> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    series_from_csv(&text)
}

/// Writes `contents`, creating parent directories as needed.
pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })?;
    }
    fs::write(path, contents).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}
