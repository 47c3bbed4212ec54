//! Mixing-fraction estimation.
//!
//! One readout is trained to emit the constant α of whichever mixture drives
//! the reservoir. Its time-averaged output is biased toward the middle of the
//! training grid, so a cubic fitted from raw averages to true α corrects it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynsys::{mix, LorenzParams, MixSpec, Normalization, TimeSeries, DEFAULT_TRANSIENT_STEPS};
use crate::dynsys::{generate, Component, DEFAULT_INIT};
use crate::error::{invalid, Error, Result};
use crate::readout::{ReadoutWeights, RidgeAccumulator, DEFAULT_RIDGE_REG};
use crate::reservoir::{Reservoir, ReservoirConfig};

use super::{derive_seed, HARVEST_BLOCK};

/// Which raw averages the correction cubic is fitted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionFit {
    /// Averages over the training segments themselves.
    #[default]
    Training,
    /// Averages over separate held-out segments at each grid α.
    HeldOut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaEstimatorConfig {
    pub p1: LorenzParams,
    pub p2: LorenzParams,
    pub component: Component,
    pub reservoir: ReservoirConfig,
    pub grid: Vec<f64>,
    /// Training samples per grid α.
    pub segment_len: usize,
    /// Held-out samples per grid α.
    pub test_len: usize,
    pub ridge_reg: f64,
    pub transient_steps: usize,
    pub fit: CorrectionFit,
    pub seed: u64,
}

/// `0, step, 2·step, …, 1`.
pub fn uniform_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(invalid("grid_step", "must lie in (0, 1]"));
    }
    let n = (1.0 / step).round() as usize;
    if ((n as f64) * step - 1.0).abs() > 1e-9 {
        return Err(invalid("grid_step", "must divide 1"));
    }
    Ok((0..=n).map(|i| i as f64 / n as f64).collect())
}

impl Default for AlphaEstimatorConfig {
    fn default() -> Self {
        let p1 = LorenzParams::classic();
        Self {
            p1,
            p2: p1.scaled(1.2),
            component: Component::X,
            reservoir: ReservoirConfig {
                n_nodes: 1000,
                sparsity: 0.99,
                ..ReservoirConfig::default()
            },
            grid: uniform_grid(0.05).expect("valid step"),
            segment_len: 50_000,
            test_len: 50_000,
            ridge_reg: DEFAULT_RIDGE_REG,
            transient_steps: DEFAULT_TRANSIENT_STEPS,
            fit: CorrectionFit::Training,
            seed: 0,
        }
    }
}

impl AlphaEstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        self.p1.validate()?;
        self.p2.validate()?;
        self.reservoir.validate()?;
        for &a in &self.grid {
            MixSpec::new(a)?;
        }
        if self.segment_len == 0 || self.test_len == 0 {
            return Err(invalid("segment_len", "segments must be non-empty"));
        }
        if !(self.ridge_reg >= 0.0) {
            return Err(invalid("ridge_reg", "must be >= 0"));
        }
        Ok(())
    }
}

/// Cubic c0 + c1·x + c2·x² + c3·x³.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cubic {
    pub coeffs: [f64; 4],
}

impl Cubic {
    pub fn identity() -> Self {
        Self {
            coeffs: [0.0, 1.0, 0.0, 0.0],
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let [c0, c1, c2, c3] = self.coeffs;
        c0 + x * (c1 + x * (c2 + x * c3))
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let [_, c1, c2, c3] = self.coeffs;
        c1 + x * (2.0 * c2 + x * 3.0 * c3)
    }

    /// Least-squares fit of y against x.
    pub fn fit(x: &[f64], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::LengthMismatch {
                what: "cubic fit points",
                left: x.len(),
                right: y.len(),
            });
        }
        let mut distinct = x.to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * a.abs().max(1.0));
        if distinct.len() < 4 {
            return Err(Error::Singular(format!(
                "cubic fit needs 4 distinct points, got {}",
                distinct.len()
            )));
        }
        let v = DMatrix::from_fn(x.len(), 4, |i, j| x[i].powi(j as i32));
        let svd = v.svd(true, true);
        let c = svd
            .solve(&DVector::from_column_slice(y), 1e-12)
            .map_err(|e| Error::Singular(e.to_string()))?;
        Ok(Self {
            coeffs: [c[0], c[1], c[2], c[3]],
        })
    }

    /// True when the derivative keeps one sign on [lo, hi].
    pub fn is_monotone_on(&self, lo: f64, hi: f64) -> bool {
        let d: Vec<f64> = (0..=1000)
            .map(|i| self.derivative(lo + (hi - lo) * i as f64 / 1000.0))
            .collect();
        d.iter().all(|&v| v >= 0.0) || d.iter().all(|&v| v <= 0.0)
    }
}

/// Raw and corrected averages at one grid α.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub alpha: f64,
    pub raw_train: f64,
    pub raw_test: f64,
    pub corrected_train: f64,
    pub corrected_test: f64,
}

#[derive(Debug, Clone)]
pub struct AlphaEstimator {
    pub reservoir: Reservoir,
    pub readout: ReadoutWeights,
    pub correction: Cubic,
    /// Whether the correction is monotone on [0, 1]; a non-monotone cubic can
    /// map distinct raw outputs to the same α.
    pub monotone: bool,
    pub training_grid: Vec<f64>,
    pub calibration: Vec<CalibrationPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaEstimate {
    pub raw: f64,
    /// Corrected and clamped to [0, 1].
    pub corrected: f64,
}

impl AlphaEstimator {
    pub fn correct(&self, raw: f64) -> f64 {
        self.correction.eval(raw).clamp(0.0, 1.0)
    }
}

/// Per-grid-α mixtures, each `washout + train + washout + test` samples long.
struct GridData {
    mixtures: Vec<TimeSeries>,
}

fn grid_data(cfg: &AlphaEstimatorConfig) -> Result<GridData> {
    let w = cfg.reservoir.washout;
    let fit_len = w + cfg.segment_len;
    let total = fit_len + w + cfg.test_len;
    let mut mixtures = Vec::with_capacity(cfg.grid.len());
    for (i, &alpha) in cfg.grid.iter().enumerate() {
        let i = i as u64;
        let a = generate(&cfg.p1, DEFAULT_INIT, total, cfg.transient_steps, Some(derive_seed(cfg.seed, 1000 + 2 * i)))?
            .into_component(cfg.component);
        let b = generate(&cfg.p2, DEFAULT_INIT, total, cfg.transient_steps, Some(derive_seed(cfg.seed, 1001 + 2 * i)))?
            .into_component(cfg.component);
        let s1 = a.normalized_with(Normalization::fit(&a.samples[..fit_len])?);
        let s2 = b.normalized_with(Normalization::fit(&b.samples[..fit_len])?);
        mixtures.push(mix(&s1, &s2, MixSpec::new(alpha)?)?);
    }
    Ok(GridData { mixtures })
}

/// Column sums of harvested states, one vector per stream.
fn state_sums(
    reservoir: &Reservoir,
    inputs: &[&[f64]],
    washout: usize,
    mut also: impl FnMut(usize, &DMatrix<f64>) -> Result<()>,
) -> Result<Vec<DVector<f64>>> {
    let n = reservoir.config.n_nodes;
    let mut driver = reservoir.batch_driver(inputs.len());
    let warm: Vec<&[f64]> = inputs.iter().map(|x| &x[..washout]).collect();
    let rest: Vec<&[f64]> = inputs.iter().map(|x| &x[washout..]).collect();
    driver.skip_many(&warm);
    let mut sums = vec![DVector::zeros(n); inputs.len()];
    driver.harvest_many(&rest, HARVEST_BLOCK, |k, _, blk| {
        sums[k] += blk.column_sum();
        also(k, blk)
    })?;
    Ok(sums)
}

fn averaged_output(readout: &ReadoutWeights, sum: &DVector<f64>, count: usize) -> f64 {
    (readout.w_out.row(0) * sum)[0] / count as f64
}

/// Trains the α readout on every grid mixture and fits the correction cubic.
///
/// Each grid segment starts from a reset reservoir with its own washout.
pub fn train_alpha_estimator(cfg: &AlphaEstimatorConfig) -> Result<AlphaEstimator> {
    cfg.validate()?;
    let reservoir = Reservoir::new(ReservoirConfig {
        seed: derive_seed(cfg.seed, 0),
        ..cfg.reservoir
    })?;
    let data = grid_data(cfg)?;
    let w = cfg.reservoir.washout;
    let train_end = w + cfg.segment_len;

    let train_inputs: Vec<&[f64]> = data.mixtures.iter().map(|u| &u.samples[..train_end]).collect();
    let mut acc = RidgeAccumulator::new(cfg.reservoir.n_nodes, 1);
    let grid = &cfg.grid;
    let train_sums = state_sums(&reservoir, &train_inputs, w, |k, blk| {
        acc.push(blk, &DMatrix::from_element(1, blk.ncols(), grid[k]))
    })?;
    let readout = acc.solve(cfg.ridge_reg)?.with_reservoir(reservoir.fingerprint());

    let test_inputs: Vec<&[f64]> = data.mixtures.iter().map(|u| &u.samples[train_end..]).collect();
    let test_sums = state_sums(&reservoir, &test_inputs, w, |_, _| Ok(()))?;

    let raw_train: Vec<f64> = train_sums
        .iter()
        .map(|s| averaged_output(&readout, s, cfg.segment_len))
        .collect();
    let raw_test: Vec<f64> = test_sums
        .iter()
        .map(|s| averaged_output(&readout, s, cfg.test_len))
        .collect();
    let fit_x = match cfg.fit {
        CorrectionFit::Training => &raw_train,
        CorrectionFit::HeldOut => &raw_test,
    };
    let correction = Cubic::fit(fit_x, grid)?;
    let monotone = correction.is_monotone_on(0.0, 1.0);
    let calibration = grid
        .iter()
        .zip(raw_train.iter().zip(&raw_test))
        .map(|(&alpha, (&rt, &rh))| CalibrationPoint {
            alpha,
            raw_train: rt,
            raw_test: rh,
            corrected_train: correction.eval(rt).clamp(0.0, 1.0),
            corrected_test: correction.eval(rh).clamp(0.0, 1.0),
        })
        .collect();
    Ok(AlphaEstimator {
        reservoir,
        readout,
        correction,
        monotone,
        training_grid: grid.clone(),
        calibration,
    })
}

/// Drives the estimator's reservoir over `u` from rest, averages the readout
/// over everything after the washout and applies the correction.
pub fn estimate_alpha(est: &AlphaEstimator, u: &TimeSeries) -> Result<AlphaEstimate> {
    let w = est.reservoir.config.washout;
    if u.len() <= w {
        return Err(Error::TooShort {
            what: "α-estimation input",
            needed: w + 1,
            got: u.len(),
        });
    }
    let sums = state_sums(&est.reservoir, &[&u.samples], w, |_, _| Ok(()))?;
    let raw = averaged_output(&est.readout, &sums[0], u.len() - w);
    Ok(AlphaEstimate {
        raw,
        corrected: est.correct(raw),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> AlphaEstimatorConfig {
        let mut cfg = AlphaEstimatorConfig::default();
        cfg.reservoir.n_nodes = 80;
        cfg.reservoir.sparsity = 0.9;
        cfg.reservoir.washout = 200;
        cfg.grid = uniform_grid(0.25).unwrap();
        cfg.segment_len = 3000;
        cfg.test_len = 2000;
        cfg
    }

    #[test]
    fn grid_construction() {
        let g = uniform_grid(0.05).unwrap();
        assert_eq!(g.len(), 21);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[20], 1.0);
        assert!((g[7] - 0.35).abs() < 1e-15);
        assert!(uniform_grid(0.3).is_err());
        assert!(uniform_grid(0.0).is_err());
    }

    #[test]
    fn cubic_fit_recovers_identity() {
        let x: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let c = Cubic::fit(&x, &x).unwrap();
        for &v in &x {
            assert!((c.eval(v) - v).abs() < 1e-6);
        }
        assert!(c.is_monotone_on(0.0, 1.0));
    }

    #[test]
    fn cubic_fit_recovers_cubic() {
        let truth = Cubic {
            coeffs: [0.1, -0.4, 0.7, 2.0],
        };
        let x: Vec<f64> = (0..20).map(|i| -1.0 + i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|&v| truth.eval(v)).collect();
        let c = Cubic::fit(&x, &y).unwrap();
        for (a, b) in c.coeffs.iter().zip(truth.coeffs) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn cubic_fit_needs_four_distinct_points() {
        let err = Cubic::fit(&[0.1, 0.1, 0.2, 0.3], &[0.0, 0.1, 0.2, 0.3]);
        assert!(matches!(err, Err(Error::Singular(_))));
    }

    #[test]
    fn non_monotone_cubic_is_flagged() {
        let c = Cubic {
            coeffs: [0.0, 1.0, -3.0, 0.0],
        };
        assert!(!c.is_monotone_on(0.0, 1.0));
    }

    #[test]
    fn estimator_trains_and_is_deterministic() {
        let cfg = tiny_cfg();
        let a = train_alpha_estimator(&cfg).unwrap();
        let b = train_alpha_estimator(&cfg).unwrap();
        assert_eq!(a.correction, b.correction);
        assert_eq!(a.calibration.len(), 5);
        for p in &a.calibration {
            assert!((0.0..=1.0).contains(&p.corrected_test));
        }
    }

    #[test]
    fn estimate_is_clamped_and_needs_length() {
        let est = train_alpha_estimator(&tiny_cfg()).unwrap();
        let short = TimeSeries::new(vec![0.0; 100], 0.05).unwrap();
        assert!(matches!(estimate_alpha(&est, &short), Err(Error::TooShort { .. })));
        let u = TimeSeries::new((0..1000).map(|i| (i as f64 * 0.1).sin()).collect(), 0.05).unwrap();
        let e = estimate_alpha(&est, &u).unwrap();
        assert!((0.0..=1.0).contains(&e.corrected));
    }
}
