//! File formats: the dataset CSV schema, nuisance imports, curve and report
//! exports, and canonical JSON for estimates.
//!
//! Dataset CSV (header required, comma separator, `.` decimal point, UTF-8):
//! `w` (0/1), `y`, optional `propensity`, optional `event_time` +
//! `event_observed`, optional features `x1..xd`, optional priority columns
//! `priority.<name>`, optional precomputed `gamma`.
//!
//! JSON output is canonicalized — keys sorted, floats rendered with 17
//! significant digits — so repeated runs can be compared byte for byte.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::estimator::TocCurve;
use crate::model::{validate_dataset, EvalDataset, RateEstimate};
use crate::scores::SurvivalTables;
use crate::simulate::PowerReport;

/// Parse a dataset from CSV.
pub fn read_dataset<R: Read>(reader: R) -> Result<EvalDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.is_empty() {
        return Err(Error::schema("empty CSV header"));
    }
    let mut columns: Vec<(String, Vec<f64>)> =
        headers.iter().map(|h| (h.clone(), Vec::new())).collect();
    for (row_idx, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::schema(format!(
                "row {} has {} fields, header has {}",
                row_idx + 1,
                record.len(),
                headers.len()
            )));
        }
        for (col, field) in record.iter().enumerate() {
            let value: f64 = field.trim().parse().map_err(|_| {
                Error::schema_at(&headers[col], row_idx + 1, format!("not a number: `{field}`"))
            })?;
            columns[col].1.push(value);
        }
    }
    validate_dataset(&columns)
}

pub fn read_dataset_path(path: &Path) -> Result<EvalDataset> {
    read_dataset(BufReader::new(File::open(path)?))
}

/// Shortest round-trip decimal rendering, so written datasets parse back to
/// bit-identical values.
fn fmt_csv(v: f64) -> String {
    format!("{v}")
}

/// Write a dataset in the canonical column order, optionally appending a
/// `gamma` column (replacing any existing one).
pub fn write_dataset<W: Write>(
    d: &EvalDataset,
    gamma_override: Option<&[f64]>,
    writer: W,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = vec!["w".into(), "y".into()];
    if d.propensity.is_some() {
        header.push("propensity".into());
    }
    if d.event_time.is_some() {
        header.push("event_time".into());
        header.push("event_observed".into());
    }
    if let Some(x) = &d.features {
        for j in 1..=x.cols() {
            header.push(format!("x{j}"));
        }
    }
    for name in d.priorities.keys() {
        header.push(format!("priority.{name}"));
    }
    let gamma = gamma_override.or(d.gamma.as_deref());
    if gamma.is_some() {
        header.push("gamma".into());
    }
    wtr.write_record(&header)?;

    for i in 0..d.n() {
        let mut row: Vec<String> = vec![d.treatment[i].to_string(), fmt_csv(d.outcome[i])];
        if let Some(p) = &d.propensity {
            row.push(fmt_csv(p[i]));
        }
        if let (Some(t), Some(obs)) = (&d.event_time, &d.event_observed) {
            row.push(fmt_csv(t[i]));
            row.push(obs[i].to_string());
        }
        if let Some(x) = &d.features {
            for v in x.row(i) {
                row.push(fmt_csv(*v));
            }
        }
        for col in d.priorities.values() {
            row.push(fmt_csv(col[i]));
        }
        if let Some(g) = gamma {
            row.push(fmt_csv(g[i]));
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Read a custom alpha grid: a single-column CSV, with or without an
/// `alpha` header line.
pub fn read_alpha<R: Read>(reader: R) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .from_reader(reader);
    let mut out = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != 1 {
            return Err(Error::schema(format!(
                "alpha grid row {} has {} fields, expected 1",
                idx + 1,
                record.len()
            )));
        }
        let field = record[0].trim();
        if idx == 0 && field.eq_ignore_ascii_case("alpha") {
            continue;
        }
        let v: f64 = field
            .parse()
            .map_err(|_| Error::schema_at("alpha", idx + 1, format!("not a number: `{field}`")))?;
        out.push(v);
    }
    if out.is_empty() {
        return Err(Error::schema("alpha grid file is empty"));
    }
    Ok(out)
}

pub fn read_alpha_path(path: &Path) -> Result<Vec<f64>> {
    read_alpha(BufReader::new(File::open(path)?))
}

/// Read precomputed nuisance evaluations: columns `m0,m1,ehat`.
pub fn read_nuisance<R: Read>(reader: R) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::schema(format!("nuisance CSV is missing column `{name}`")))
    };
    let (c0, c1, ce) = (col("m0")?, col("m1")?, col("ehat")?);
    let mut m0 = Vec::new();
    let mut m1 = Vec::new();
    let mut e = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let record = record?;
        let get = |c: usize, name: &str| -> Result<f64> {
            record[c]
                .trim()
                .parse()
                .map_err(|_| Error::schema_at(name, idx + 1, "not a number"))
        };
        m0.push(get(c0, "m0")?);
        m1.push(get(c1, "m1")?);
        e.push(get(ce, "ehat")?);
    }
    Ok((m0, m1, e))
}

pub fn read_nuisance_path(path: &Path) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    read_nuisance(BufReader::new(File::open(path)?))
}

/// Read survival censoring-model tables from long format
/// `unit,s,q,sc,dlambda` (units are 1-based; every unit must carry a row for
/// every grid time).
pub fn read_survival_tables<R: Read>(reader: R, n: usize) -> Result<SurvivalTables> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::schema(format!("survival-nuisance CSV is missing column `{name}`")))
    };
    let (cu, cs, cq, csc, cdl) = (col("unit")?, col("s")?, col("q")?, col("sc")?, col("dlambda")?);
    let mut rows: Vec<(usize, f64, f64, f64, f64)> = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let record = record?;
        let get = |c: usize, name: &str| -> Result<f64> {
            record[c]
                .trim()
                .parse()
                .map_err(|_| Error::schema_at(name, idx + 1, "not a number"))
        };
        let unit = get(cu, "unit")? as usize;
        if unit == 0 || unit > n {
            return Err(Error::schema_at(
                "unit",
                idx + 1,
                format!("unit id must be 1..={n}"),
            ));
        }
        rows.push((unit - 1, get(cs, "s")?, get(cq, "q")?, get(csc, "sc")?, get(cdl, "dlambda")?));
    }
    let mut grid: Vec<f64> = rows.iter().map(|r| r.1).collect();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();
    let g = grid.len();
    if rows.len() != n * g {
        return Err(Error::schema(format!(
            "survival-nuisance CSV has {} rows; expected {} units x {} grid times = {}",
            rows.len(),
            n,
            g,
            n * g
        )));
    }
    let mut q = vec![f64::NAN; n * g];
    let mut sc = vec![f64::NAN; n * g];
    let mut dl = vec![f64::NAN; n * g];
    for (unit, s, qv, scv, dlv) in rows {
        let k = grid.partition_point(|&t| t < s);
        q[unit * g + k] = qv;
        sc[unit * g + k] = scv;
        dl[unit * g + k] = dlv;
    }
    if q.iter().chain(&sc).chain(&dl).any(|v| v.is_nan()) {
        return Err(Error::schema(
            "survival-nuisance CSV does not cover every (unit, grid time) cell",
        ));
    }
    SurvivalTables::new(grid, q, sc, dl, n)
}

pub fn read_survival_tables_path(path: &Path, n: usize) -> Result<SurvivalTables> {
    read_survival_tables(BufReader::new(File::open(path)?), n)
}

/// Export a TOC curve as `u,toc[,ci_low,ci_high]`.
pub fn write_toc_csv<W: Write>(curve: &TocCurve, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    match &curve.bands {
        Some(bands) => {
            wtr.write_record(["u", "toc", "ci_low", "ci_high"])?;
            for ((u, v), (lo, hi)) in curve.grid.iter().zip(&curve.values).zip(bands) {
                wtr.write_record([fmt_csv(*u), fmt_csv(*v), fmt_csv(*lo), fmt_csv(*hi)])?;
            }
        }
        None => {
            wtr.write_record(["u", "toc"])?;
            for (u, v) in curve.grid.iter().zip(&curve.values) {
                wtr.write_record([fmt_csv(*u), fmt_csv(*v)])?;
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Export a power report as `scenario,param,weight,reps,power,mean_estimate,mean_se`.
pub fn write_power_csv<W: Write>(report: &PowerReport, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["scenario", "param", "weight", "reps", "power", "mean_estimate", "mean_se"])?;
    for row in &report.rows {
        wtr.write_record([
            row.scenario.clone(),
            row.param.clone(),
            row.weight.clone(),
            row.reps.to_string(),
            fmt_csv(row.power),
            fmt_csv(row.mean_estimate),
            fmt_csv(row.mean_se),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// 17-significant-digit float rendering for canonical JSON.
fn fmt_json_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn json_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Canonical JSON for a rate estimate: sorted keys, fixed float rendering.
pub fn rate_estimate_json(e: &RateEstimate) -> String {
    format!(
        "{{\"ci_high\":{},\"ci_low\":{},\"degenerate\":{},\"n\":{},\"p_value\":{},\"point\":{},\"replicates\":{},\"seed\":{},\"std_error\":{},\"weight\":{}}}",
        fmt_json_f64(e.ci_high),
        fmt_json_f64(e.ci_low),
        e.degenerate,
        e.n,
        fmt_json_f64(e.p_value),
        fmt_json_f64(e.point),
        e.replicates,
        e.seed,
        fmt_json_f64(e.std_error),
        json_string(&e.weight),
    )
}

/// Canonical JSON sidecar describing how a score column was produced.
pub fn score_sidecar_json(
    family: &str,
    folds: Option<usize>,
    seed: u64,
    clip_events: usize,
) -> String {
    let folds = folds.map_or("null".to_string(), |k| k.to_string());
    format!(
        "{{\"clip_events\":{clip_events},\"family\":{},\"folds\":{folds},\"seed\":{seed}}}",
        json_string(family),
    )
}

/// Write bytes to a file or stdout when no path is given.
pub fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => {
            let mut f = BufWriter::new(File::create(p)?);
            f.write_all(bytes)?;
            f.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(bytes)?;
            lock.flush()?;
        }
    }
    Ok(())
}
