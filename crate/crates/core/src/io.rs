//! CSV and JSON files read and written by the command-line tools.
//!
//! Floats are written in shortest round-trip form, so every file here reads
//! back bit-exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::PosteriorSample;
use crate::optimizer::SubjectParams;
use crate::studies::{TargetBox, TileMap, Trial};
use crate::stats::BoxStats;
use crate::surrogate::{EpochRecord, EvalReport, TrainingSet};

fn data_err(path: &Path, line: Option<u64>, msg: impl std::fmt::Display) -> Error {
    match line {
        Some(l) => Error::Data(format!("{}: line {l}: {msg}", path.display())),
        None => Error::Data(format!("{}: {msg}", path.display())),
    }
}

fn parse_f64(path: &Path, line: u64, column: &str, raw: &str) -> Result<f64> {
    raw.trim()
        .parse::<f64>()
        .map_err(|_| data_err(path, Some(line), format!("{column} is not a number: {raw:?}")))
}

fn header_index(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name))
}

/// Reads `target,response[,subject_id]` rows (header required, any column order).
pub fn read_trials(path: &Path) -> Result<Vec<Trial>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = rdr.headers()?.clone();
    let missing = |c| data_err(path, Some(1), format!("missing required column {c:?} in header"));
    let ti = header_index(&headers, "target").ok_or_else(|| missing("target"))?;
    let ri = header_index(&headers, "response").ok_or_else(|| missing("response"))?;
    let si = header_index(&headers, "subject_id");

    let mut trials = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| data_err(path, e.position().map(|p| p.line()), e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize, name: &str| {
            rec.get(i).ok_or_else(|| data_err(path, Some(line), format!("missing {name}")))
        };
        let target = parse_f64(path, line, "target", field(ti, "target")?)?;
        let response = parse_f64(path, line, "response", field(ri, "response")?)?;
        let mut t = Trial { target, response, subject_id: None };
        t.validate().map_err(|e| data_err(path, Some(line), e))?;
        if let Some(si) = si {
            let id = rec.get(si).unwrap_or("").trim();
            if !id.is_empty() {
                t.subject_id = Some(id.to_string());
            }
        }
        trials.push(t);
    }
    if trials.is_empty() {
        return Err(data_err(path, None, "no trial rows"));
    }
    Ok(trials)
}

pub fn write_trials(path: &Path, trials: &[Trial]) -> Result<()> {
    let with_ids = trials.iter().any(|t| t.subject_id.is_some());
    let mut w = csv::Writer::from_path(path)?;
    if with_ids {
        w.write_record(["subject_id", "target", "response"])?;
    } else {
        w.write_record(["target", "response"])?;
    }
    for t in trials {
        let (x, y) = (t.target.to_string(), t.response.to_string());
        if with_ids {
            w.write_record([t.subject_id.as_deref().unwrap_or(""), &x, &y])?;
        } else {
            w.write_record([&x, &y])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Groups trials by subject, keeping first-appearance order. Trials without
/// an id share the subject `"subject"`.
pub fn split_subjects(trials: Vec<Trial>) -> Vec<(String, Vec<Trial>)> {
    let mut groups: Vec<(String, Vec<Trial>)> = Vec::new();
    for t in trials {
        let id = t.subject_id.clone().unwrap_or_else(|| "subject".into());
        match groups.iter_mut().find(|(g, _)| *g == id) {
            Some((_, v)) => v.push(t),
            None => groups.push((id, vec![t])),
        }
    }
    groups
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorRow {
    pub iteration: usize,
    pub alpha: f64,
    pub beta: f64,
    pub sigma_p: f64,
    pub sigma_a: f64,
    pub log_posterior: f64,
    pub accepted: bool,
}

pub fn write_posterior(path: &Path, samples: &[PosteriorSample]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (i, s) in samples.iter().enumerate() {
        let t = &s.theta;
        w.serialize(PosteriorRow {
            iteration: i,
            alpha: t.alpha,
            beta: t.beta,
            sigma_p: t.sigma_p,
            sigma_a: t.sigma_a,
            log_posterior: s.log_posterior,
            accepted: s.accepted,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_posterior(path: &Path, sigma_p_fixed: bool) -> Result<Vec<PosteriorSample>> {
    read_records::<PosteriorRow>(path)?
        .into_iter()
        .map(|r| {
            Ok(PosteriorSample {
                theta: SubjectParams {
                    alpha: r.alpha,
                    beta: r.beta,
                    sigma_p: r.sigma_p,
                    sigma_a: r.sigma_a,
                    sigma_p_fixed,
                },
                log_posterior: r.log_posterior,
                accepted: r.accepted,
            })
        })
        .collect()
}

fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize()
        .map(|r| r.map_err(|e| data_err(path, e.position().map(|p| p.line()), e)))
        .collect()
}

fn write_records<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct BoxRow {
    target: f64,
    aim: f64,
    lower_whisker: f64,
    q1: f64,
    median: f64,
    q3: f64,
    upper_whisker: f64,
}

pub fn write_boxstats(path: &Path, boxes: &[TargetBox]) -> Result<()> {
    write_records(
        path,
        boxes.iter().map(|b| BoxRow {
            target: b.target,
            aim: b.aim,
            lower_whisker: b.stats.lower_whisker,
            q1: b.stats.q1,
            median: b.stats.median,
            q3: b.stats.q3,
            upper_whisker: b.stats.upper_whisker,
        }),
    )
}

pub fn read_boxstats(path: &Path) -> Result<Vec<TargetBox>> {
    Ok(read_records::<BoxRow>(path)?
        .into_iter()
        .map(|r| TargetBox {
            target: r.target,
            aim: r.aim,
            stats: BoxStats {
                lower_whisker: r.lower_whisker,
                q1: r.q1,
                median: r.median,
                q3: r.q3,
                upper_whisker: r.upper_whisker,
            },
        })
        .collect())
}

/// Writes a labelled matrix: the header holds `corner` and the column grid,
/// each row starts with its row-grid value. `None` cells are left empty.
fn write_matrix(path: &Path, corner: &str, rows: &[f64], cols: &[f64], cells: &[Vec<Option<f64>>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![corner.to_string()];
    header.extend(cols.iter().map(f64::to_string));
    w.write_record(&header)?;
    for (r, row) in rows.iter().zip(cells) {
        let mut rec = vec![r.to_string()];
        rec.extend(row.iter().map(|c| c.map_or_else(String::new, |v| v.to_string())));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

type Matrix = (Vec<f64>, Vec<f64>, Vec<Vec<Option<f64>>>);

fn read_matrix(path: &Path) -> Result<Matrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut records = rdr.records();
    let header = records.next().ok_or_else(|| data_err(path, None, "empty file"))??;
    let cols = header.iter().skip(1).map(|h| parse_f64(path, 1, "column grid", h)).collect::<Result<Vec<_>>>()?;
    let (mut rows, mut cells) = (Vec::new(), Vec::new());
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != cols.len() + 1 {
            return Err(data_err(path, Some(line), format!("expected {} fields, got {}", cols.len() + 1, rec.len())));
        }
        rows.push(parse_f64(path, line, "row grid", &rec[0])?);
        cells.push(
            rec.iter()
                .skip(1)
                .map(|c| if c.trim().is_empty() { Ok(None) } else { parse_f64(path, line, "cell", c).map(Some) })
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok((rows, cols, cells))
}

/// Settings stored next to a tile map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileMapMeta {
    pub alpha: f64,
    pub beta: f64,
    pub target: f64,
    pub solver: String,
    pub missing_cells: usize,
    pub layout: String,
}

pub fn tilemap_meta_path(path: &Path) -> std::path::PathBuf {
    path.with_extension("meta.json")
}

/// Tile map CSV (rows sigma_a, columns sigma_p) plus a JSON metadata sidecar.
pub fn write_tilemap(path: &Path, map: &TileMap, solver: &str) -> Result<()> {
    write_matrix(path, "sigma_a\\sigma_p", &map.sigma_a_grid, &map.sigma_p_grid, &map.deviation)?;
    let meta = TileMapMeta {
        alpha: map.cost.alpha,
        beta: map.cost.beta,
        target: map.target,
        solver: solver.into(),
        missing_cells: map.missing(),
        layout: "rows: sigma_a, columns: sigma_p, cells: signed aim deviation in percent of the target; empty = boundary optimum".into(),
    };
    write_json(&tilemap_meta_path(path), &meta)
}

pub fn read_tilemap(path: &Path) -> Result<TileMap> {
    let (sigma_a_grid, sigma_p_grid, deviation) = read_matrix(path)?;
    let meta: TileMapMeta = read_json(&tilemap_meta_path(path))?;
    Ok(TileMap {
        sigma_a_grid,
        sigma_p_grid,
        deviation,
        cost: crate::cost::CostParams { alpha: meta.alpha, beta: meta.beta },
        target: meta.target,
    })
}

/// Cost surface CSV: rows are targets, columns actions.
pub fn write_surface(path: &Path, targets: &[f64], actions: &[f64], values: &[Vec<f64>]) -> Result<()> {
    let cells: Vec<Vec<Option<f64>>> = values.iter().map(|r| r.iter().copied().map(Some).collect()).collect();
    write_matrix(path, "target\\action", targets, actions, &cells)
}

/// Targets, actions and cost values.
pub type Surface = (Vec<f64>, Vec<f64>, Vec<Vec<f64>>);

pub fn read_surface(path: &Path) -> Result<Surface> {
    let (rows, cols, cells) = read_matrix(path)?;
    let values = cells
        .into_iter()
        .map(|r| r.into_iter().map(|c| c.ok_or_else(|| data_err(path, None, "empty cell"))).collect())
        .collect::<Result<_>>()?;
    Ok((rows, cols, values))
}

pub fn write_training_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    write_records(path, history)
}

pub fn read_training_history(path: &Path) -> Result<Vec<EpochRecord>> {
    read_records(path)
}

/// One row per evaluated point: features, label, prediction, absolute error.
pub fn write_eval_errors(path: &Path, data: &TrainingSet, report: &EvalReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = data.space.ranges.iter().map(|r| r.name.clone()).collect();
    header.extend(["label", "prediction", "abs_error"].map(String::from));
    w.write_record(&header)?;
    for (i, f) in data.features.iter().enumerate() {
        let mut rec: Vec<String> = f.iter().map(f64::to_string).collect();
        rec.extend([data.labels[i], report.predictions[i], report.abs_errors[i]].map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?)
}
