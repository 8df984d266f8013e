//! On-disk layout of an experiment: `results.csv`, one `grid_<i>.csv` per
//! noise level, and `meta.json`.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{ExperimentConfig, ExperimentResult};
use crate::selectors::Selector;

pub const RESULTS_FILE: &str = "results.csv";
pub const META_FILE: &str = "meta.json";

pub fn grid_file(sigma_index: usize) -> String {
    format!("grid_{sigma_index}.csv")
}

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub sigma: f64,
    pub selector: Selector,
    pub mse: f64,
    pub stderr: f64,
    pub m_star: usize,
    #[serde(rename = "R_mstar")]
    pub r_mstar: f64,
    #[serde(rename = "C1")]
    pub c1: f64,
    #[serde(rename = "C2")]
    pub c2: f64,
    pub poa: f64,
}

pub const RESULTS_HEADER: [&str; 9] = [
    "sigma", "selector", "mse", "stderr", "m_star", "R_mstar", "C1", "C2", "poa",
];

pub fn result_rows(result: &ExperimentResult) -> Vec<ResultRow> {
    result
        .cells
        .iter()
        .flat_map(|cell| {
            cell.selectors.iter().map(move |s| ResultRow {
                sigma: cell.sigma,
                selector: s.selector,
                mse: s.mse,
                stderr: s.stderr,
                m_star: cell.m_star,
                r_mstar: cell.r_mstar,
                c1: cell.c1,
                c2: cell.c2,
                poa: cell.poa,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMeta {
    pub sigma: f64,
    pub m_max: usize,
    pub m_star: usize,
    pub m_double_star: usize,
    pub r_mstar_stderr: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub theta2_enlarged: bool,
    pub tail_fraction: f64,
    pub histograms: BTreeMap<Selector, Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub cells: Vec<CellMeta>,
}

fn meta_of(result: &ExperimentResult) -> Meta {
    Meta {
        config: result.config.clone(),
        seed: result.config.seed,
        cells: result
            .cells
            .iter()
            .map(|c| CellMeta {
                sigma: c.sigma,
                m_max: c.grid.m_max(),
                m_star: c.m_star,
                m_double_star: c.m_double_star,
                r_mstar_stderr: c.r_mstar_stderr,
                theta1: c.grid.theta1,
                theta2: c.grid.theta2,
                theta2_enlarged: c.grid.theta2_enlarged,
                tail_fraction: c.grid.tail_fraction,
                histograms: c.selectors.iter().map(|s| (s.selector, s.histogram.clone())).collect(),
            })
            .collect(),
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse(format!("{}: {other:?}", path.display())),
    }
}

/// Writes the experiment into directory `dir`, creating it if needed.
pub fn write_results(result: &ExperimentResult, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let path = dir.join(RESULTS_FILE);
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(BufWriter::new(file));
    out.write_record(RESULTS_HEADER).map_err(|e| csv_error(&path, e))?;
    for row in result_rows(result) {
        out.serialize(row).map_err(|e| csv_error(&path, e))?;
    }
    out.flush().map_err(|e| Error::io(&path, e))?;

    for (i, cell) in result.cells.iter().enumerate() {
        let path = dir.join(grid_file(i));
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        cell.grid
            .write_csv(BufWriter::new(file))
            .map_err(|e| Error::io(&path, e))?;
    }

    let path = dir.join(META_FILE);
    let json = serde_json::to_string_pretty(&meta_of(result)).expect("meta serializes");
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(())
}

/// Rows of `results.csv` in directory `dir`.
pub fn read_results(dir: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let path = dir.as_ref().join(RESULTS_FILE);
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let header = reader.headers().map_err(|e| csv_error(&path, e))?.clone();
    if header.iter().ne(RESULTS_HEADER) {
        return Err(Error::Parse(format!(
            "{}: unexpected header {:?}",
            path.display(),
            header
        )));
    }
    reader
        .deserialize()
        .map(|row| row.map_err(|e| csv_error(&path, e)))
        .collect()
}

pub fn read_meta(dir: impl AsRef<Path>) -> Result<Meta> {
    let path = dir.as_ref().join(META_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Groups rows by selector into `(σ list, MSE list)` in file order.
pub fn series_by_selector(rows: &[ResultRow]) -> BTreeMap<Selector, (Vec<f64>, Vec<f64>)> {
    let mut out: BTreeMap<Selector, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        let entry = out.entry(r.selector).or_default();
        entry.0.push(r.sigma);
        entry.1.push(r.mse);
    }
    out
}
