//! CSV export of series, reports and figure tables, plus readout-bank
//! persistence.
//!
//! Floats are written with Rust's shortest round-trip formatting, so equal
//! values always produce equal bytes. Undefined values are written as `NaN`.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynsys::{TimeSeries, Trajectory};
use crate::error::{Error, Result};
use crate::metrics::{ErrorReport, PsdOverlay};
use crate::pipeline::alpha::CalibrationPoint;
use crate::pipeline::interp::{InterpTable, ReadoutBank};
use crate::pipeline::{RunRecord, ScenarioKind, SweepTable};
use crate::readout::{ReadoutWeights, RidgeSolver};
use crate::reservoir::ReservoirWeights;
use crate::wiener::{SpectrumEstimate, WienerFilter};

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NaN".to_string(), num)
}

/// Writes `header` and `rows` as comma separated lines.
pub fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: AsRef<[String]>,
{
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        writeln!(w, "{}", row.as_ref().join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// `t,value`
pub fn write_series(path: &Path, s: &TimeSeries) -> Result<()> {
    write_csv(
        path,
        &["t", "value"],
        s.samples
            .iter()
            .enumerate()
            .map(|(i, &v)| [num(s.time(i)), num(v)]),
    )
}

/// `t,x,y,z`
pub fn write_trajectory(path: &Path, tr: &Trajectory) -> Result<()> {
    write_csv(
        path,
        &["t", "x", "y", "z"],
        (0..tr.x.len()).map(|i| {
            [
                num(tr.x.time(i)),
                num(tr.x.samples[i]),
                num(tr.y.samples[i]),
                num(tr.z.samples[i]),
            ]
        }),
    )
}

pub const REPORT_HEADER: [&str; 8] = [
    "scenario", "alpha", "seed", "estimator", "e_norm", "e_num", "zeta_star", "n",
];

fn report_row(scenario: ScenarioKind, alpha: f64, seed: u64, r: &ErrorReport) -> [String; 8] {
    [
        scenario.as_str().to_string(),
        num(alpha),
        seed.to_string(),
        r.tag.as_str().to_string(),
        opt(r.e_normalized),
        num(r.e_numerator),
        num(r.zeta_star),
        r.n_samples.to_string(),
    ]
}

/// `scenario,alpha,seed,estimator,e_norm,e_num,zeta_star,n`
pub fn write_reports(path: &Path, runs: &[RunRecord]) -> Result<()> {
    write_csv(
        path,
        &REPORT_HEADER,
        runs.iter()
            .map(|r| report_row(r.scenario, r.alpha, r.seed, &r.report)),
    )
}

/// `t,actual,rc,wiener`, with t counted from the start of the window.
pub fn write_predictions(
    path: &Path,
    actual: &TimeSeries,
    rc: &TimeSeries,
    wiener: &TimeSeries,
) -> Result<()> {
    actual.check_aligned(rc, "prediction columns")?;
    actual.check_aligned(wiener, "prediction columns")?;
    write_csv(
        path,
        &["t", "actual", "rc", "wiener"],
        (0..actual.len()).map(|i| {
            [
                num(actual.time(i)),
                num(actual.samples[i]),
                num(rc.samples[i]),
                num(wiener.samples[i]),
            ]
        }),
    )
}

/// `lag,h`
pub fn write_filter(path: &Path, f: &WienerFilter) -> Result<()> {
    write_csv(
        path,
        &["lag", "h"],
        f.h.iter()
            .enumerate()
            .map(|(i, &h)| [f.lag(i).to_string(), num(h)]),
    )
}

/// `frequency,value` over the nonnegative frequencies.
pub fn write_spectrum(path: &Path, s: &SpectrumEstimate) -> Result<()> {
    write_csv(
        path,
        &["frequency", "value"],
        s.one_sided().map(|(f, v)| [num(f), num(v.re)]),
    )
}

/// `frequency,first,second`
pub fn write_overlay(path: &Path, o: &PsdOverlay) -> Result<()> {
    write_csv(
        path,
        &["frequency", "first", "second"],
        o.first
            .one_sided()
            .zip(o.second.one_sided())
            .map(|((f, a), (_, b))| [num(f), num(a.re), num(b.re)]),
    )
}

/// `w_in.csv` (one dense row per node) and `w_res.csv` (`row,col,value`).
pub fn write_weights(dir: &Path, w: &ReservoirWeights) -> Result<()> {
    let cols: Vec<String> = (0..w.input_dim()).map(|j| format!("in{j}")).collect();
    let header: Vec<&str> = cols.iter().map(String::as_str).collect();
    write_csv(
        &dir.join("w_in.csv"),
        &header,
        (0..w.n_nodes()).map(|i| w.w_in.row(i).iter().map(|&v| num(v)).collect::<Vec<_>>()),
    )?;
    write_csv(
        &dir.join("w_res.csv"),
        &["row", "col", "value"],
        w.w_res
            .triplets()
            .map(|(r, c, v)| [r.to_string(), c.to_string(), num(v)]),
    )
}

/// `scenario,alpha,estimator,mean_e_norm,se_e_norm,mean_e_num,se_e_num,repeats`
pub fn write_sweep(path: &Path, scenario: ScenarioKind, t: &SweepTable) -> Result<()> {
    write_csv(
        path,
        &[
            "scenario", "alpha", "estimator", "mean_e_norm", "se_e_norm", "mean_e_num",
            "se_e_num", "repeats",
        ],
        t.rows.iter().map(|r| {
            [
                scenario.as_str().to_string(),
                num(r.alpha),
                r.estimator.as_str().to_string(),
                num(r.mean_e_norm),
                num(r.se_e_norm),
                num(r.mean_e_num),
                num(r.se_e_num),
                r.repeats.to_string(),
            ]
        }),
    )
}

/// `alpha,raw_train,raw_test,corrected_train,corrected_test`
pub fn write_calibration(path: &Path, points: &[CalibrationPoint]) -> Result<()> {
    write_csv(
        path,
        &["alpha", "raw_train", "raw_test", "corrected_train", "corrected_test"],
        points.iter().map(|p| {
            [
                num(p.alpha),
                num(p.raw_train),
                num(p.raw_test),
                num(p.corrected_train),
                num(p.corrected_test),
            ]
        }),
    )
}

/// `panel,spacing,q,seed,direct,interpolated,ratio`
pub fn write_interp(path: &Path, panels: &[(&str, &InterpTable)]) -> Result<()> {
    write_csv(
        path,
        &["panel", "spacing", "q", "seed", "direct", "interpolated", "ratio"],
        panels.iter().flat_map(|(name, t)| {
            t.rows.iter().map(move |r| {
                [
                    name.to_string(),
                    num(r.spacing),
                    num(r.q),
                    r.seed.to_string(),
                    num(r.direct),
                    num(r.interpolated),
                    num(r.ratio),
                ]
            })
        }),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BankEntry {
    alpha: f64,
    ridge_reg: f64,
    solver: RidgeSolver,
    file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BankManifest {
    n_nodes: usize,
    outputs: usize,
    reservoir_fingerprint: u64,
    reservoir_seed: u64,
    entries: Vec<BankEntry>,
}

const MANIFEST: &str = "manifest.json";

/// Saves a bank as `manifest.json` plus one CSV of output weights per entry.
pub fn save_bank(dir: &Path, bank: &ReadoutBank, reservoir_seed: u64) -> Result<()> {
    fs::create_dir_all(dir)?;
    let first = &bank.readouts[0].w_out;
    let mut entries = Vec::with_capacity(bank.readouts.len());
    for (i, r) in bank.readouts.iter().enumerate() {
        let file = format!("w_out_{i:03}.csv");
        let mut w = BufWriter::new(File::create(dir.join(&file))?);
        for row in r.w_out.row_iter() {
            let line: Vec<String> = row.iter().map(|&v| num(v)).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        w.flush()?;
        entries.push(BankEntry {
            alpha: bank.alphas[i],
            ridge_reg: r.ridge_reg,
            solver: r.solver,
            file,
        });
    }
    let manifest = BankManifest {
        n_nodes: first.ncols(),
        outputs: first.nrows(),
        reservoir_fingerprint: bank.reservoir,
        reservoir_seed,
        entries,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format {
        path: dir.join(MANIFEST).display().to_string(),
        reason: e.to_string(),
    })?;
    fs::write(dir.join(MANIFEST), text + "\n")?;
    Ok(())
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

/// Loads a bank written by [`save_bank`]; returns it with the reservoir seed.
pub fn load_bank(dir: &Path) -> Result<(ReadoutBank, u64)> {
    let mpath = dir.join(MANIFEST);
    let manifest: BankManifest = serde_json::from_str(&fs::read_to_string(&mpath)?)
        .map_err(|e| format_err(&mpath, e.to_string()))?;
    let mut readouts = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        let path: PathBuf = dir.join(&e.file);
        let mut values = Vec::with_capacity(manifest.n_nodes * manifest.outputs);
        let mut rows = 0;
        for line in BufReader::new(File::open(&path)?).lines() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let before = values.len();
            for field in line.split(',') {
                values.push(
                    field
                        .trim()
                        .parse::<f64>()
                        .map_err(|err| format_err(&path, format!("row {rows}: {err}")))?,
                );
            }
            if values.len() - before != manifest.n_nodes {
                return Err(format_err(
                    &path,
                    format!("row {rows} has {} values, expected {}", values.len() - before, manifest.n_nodes),
                ));
            }
            rows += 1;
        }
        if rows != manifest.outputs {
            return Err(format_err(&path, format!("{rows} rows, expected {}", manifest.outputs)));
        }
        readouts.push(ReadoutWeights {
            w_out: DMatrix::from_row_slice(rows, manifest.n_nodes, &values),
            trained_alpha: Some(e.alpha),
            ridge_reg: e.ridge_reg,
            reservoir: Some(manifest.reservoir_fingerprint),
            solver: e.solver,
        });
    }
    Ok((
        ReadoutBank::new(readouts, manifest.reservoir_fingerprint)?,
        manifest.reservoir_seed,
    ))
}
