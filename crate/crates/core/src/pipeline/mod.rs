//! Experiment orchestration.
//!
//! * [`run_separation`] / [`sweep_alpha`]: known-α separation of one Lorenz
//!   component from a two-component mixture, reservoir versus Wiener filter.
//! * [`alpha`]: the two-stage route for unknown α (estimate α, then separate).
//! * [`interp`]: readout banks and interpolation between them.
//!
//! # Seeds
//!
//! A run seed `s` fans out into independent streams with [`derive_seed`]:
//! stream 0 draws the reservoir, streams 1 and 2 perturb the initial
//! conditions of the first and second Lorenz system. Repeated runs use
//! seeds `s, s + 1, …, s + repeats − 1`.
//!
//! # Windows
//!
//! Generated series hold `washout + train_len + test_len` samples. Samples
//! `[washout, washout + train_len)` are the training targets and the
//! remaining `test_len` samples are the held-out test window. Normalization
//! statistics come from the first `washout + train_len` samples only. The
//! test window is harvested from a reset reservoir that is washed out on the
//! `washout` inputs immediately before it.

pub mod alpha;
pub mod interp;

use std::ops::Range;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynsys::{
    generate, mix, Component, LorenzParams, MixSpec, Normalization, TimeSeries, Trajectory,
    DEFAULT_INIT, DEFAULT_TRANSIENT_STEPS,
};
use crate::error::{invalid, Error, Result};
use crate::metrics::{normalized_error, normalized_error_trimmed, Estimator, ErrorReport};
use crate::readout::{ReadoutWeights, RidgeAccumulator, DEFAULT_RIDGE_REG};
use crate::reservoir::{Reservoir, ReservoirConfig};
use crate::wiener::{apply, build_wiener_with, WienerFilter, DEFAULT_SEG_LEN};

const HARVEST_BLOCK: usize = 512;

/// SplitMix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for `stream` of run seed `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    DiffParams,
    DiffSpeed,
    MatchedSpectra,
    Custom,
}

impl ScenarioKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioKind::DiffParams => "diff_params",
            ScenarioKind::DiffSpeed => "diff_speed",
            ScenarioKind::MatchedSpectra => "matched_spectra",
            ScenarioKind::Custom => "custom",
        }
    }

    /// Figure file the sweep for this scenario is written to.
    pub fn figure(&self) -> &'static str {
        match self {
            ScenarioKind::DiffParams => "fig2",
            ScenarioKind::DiffSpeed => "fig3",
            ScenarioKind::MatchedSpectra => "fig4",
            ScenarioKind::Custom => "sweep",
        }
    }

    /// Default pair of systems for the scenario.
    pub fn default_systems(&self) -> (LorenzParams, LorenzParams) {
        let p1 = LorenzParams::classic();
        match self {
            ScenarioKind::DiffParams | ScenarioKind::Custom => (p1, p1.scaled(1.2)),
            ScenarioKind::DiffSpeed => (p1.with_speed(1.2), p1),
            ScenarioKind::MatchedSpectra => (p1, p1.scaled(1.1).with_speed(0.9)),
        }
    }
}

/// Everything needed to reproduce one separation experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub p1: LorenzParams,
    pub p2: LorenzParams,
    pub component: Component,
    pub alpha: Option<f64>,
    pub train_len: usize,
    pub test_len: usize,
    /// `seed` inside is ignored; reservoirs are drawn from the run seed.
    pub reservoir: ReservoirConfig,
    pub ridge_reg: f64,
    pub seg_len: usize,
    pub transient_steps: usize,
    /// Drop `seg_len / 2` samples at both ends of the test window when scoring.
    pub exclude_edges: bool,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind) -> Self {
        let (p1, p2) = kind.default_systems();
        Self {
            kind,
            p1,
            p2,
            component: Component::X,
            alpha: Some(0.5),
            train_len: 50_000,
            test_len: 5_000,
            reservoir: ReservoirConfig::default(),
            ridge_reg: DEFAULT_RIDGE_REG,
            seg_len: DEFAULT_SEG_LEN,
            transient_steps: DEFAULT_TRANSIENT_STEPS,
            exclude_edges: false,
            seed: 0,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.p1.validate()?;
        self.p2.validate()?;
        self.reservoir.validate()?;
        if let Some(a) = self.alpha {
            MixSpec::new(a)?;
        }
        if self.train_len <= self.reservoir.washout || self.train_len < self.seg_len {
            return Err(invalid(
                "train_len",
                format!(
                    "must exceed washout ({}) and seg_len ({})",
                    self.reservoir.washout, self.seg_len
                ),
            ));
        }
        if self.test_len == 0 {
            return Err(invalid("test_len", "must be > 0"));
        }
        if self.seg_len < 2 {
            return Err(invalid("seg_len", "must be >= 2"));
        }
        if !(self.ridge_reg >= 0.0) {
            return Err(invalid("ridge_reg", "must be >= 0"));
        }
        Ok(())
    }

    pub fn require_alpha(&self) -> Result<f64> {
        self.alpha
            .ok_or_else(|| invalid("alpha", "required for a known-α separation"))
    }

    /// Reservoir configuration with the seed for run seed `seed`.
    pub fn reservoir_for(&self, seed: u64) -> ReservoirConfig {
        ReservoirConfig {
            seed: derive_seed(seed, 0),
            ..self.reservoir
        }
    }

    fn layout(&self) -> Layout {
        Layout {
            washout: self.reservoir.washout,
            train_len: self.train_len,
            test_len: self.test_len,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    washout: usize,
    train_len: usize,
    test_len: usize,
}

impl Layout {
    fn total(&self) -> usize {
        self.washout + self.train_len + self.test_len
    }

    fn fit_range(&self) -> Range<usize> {
        0..self.washout + self.train_len
    }

    fn train_range(&self) -> Range<usize> {
        self.washout..self.washout + self.train_len
    }

    fn test_range(&self) -> Range<usize> {
        let s = self.washout + self.train_len;
        s..s + self.test_len
    }
}

/// Raw trajectories for one run seed.
pub fn generate_pair(spec: &ScenarioSpec, seed: u64, n_samples: usize) -> Result<(Trajectory, Trajectory)> {
    let a = generate(
        &spec.p1,
        DEFAULT_INIT,
        n_samples,
        spec.transient_steps,
        Some(derive_seed(seed, 1)),
    )?;
    let b = generate(
        &spec.p2,
        DEFAULT_INIT,
        n_samples,
        spec.transient_steps,
        Some(derive_seed(seed, 2)),
    )?;
    Ok((a, b))
}

/// The two normalized components of one run, before mixing.
#[derive(Debug, Clone)]
pub struct ComponentPair {
    pub s1: TimeSeries,
    pub s2: TimeSeries,
    layout: Layout,
}

impl ComponentPair {
    pub fn generate(spec: &ScenarioSpec, seed: u64) -> Result<Self> {
        let layout = spec.layout();
        let (a, b) = generate_pair(spec, seed, layout.total())?;
        let raw1 = a.into_component(spec.component);
        let raw2 = b.into_component(spec.component);
        let n1 = Normalization::fit(&raw1.samples[layout.fit_range()])?;
        let n2 = Normalization::fit(&raw2.samples[layout.fit_range()])?;
        Ok(Self {
            s1: raw1.normalized_with(n1),
            s2: raw2.normalized_with(n2),
            layout,
        })
    }

    pub fn mixture(&self, alpha: f64) -> Result<TimeSeries> {
        mix(&self.s1, &self.s2, MixSpec::new(alpha)?)
    }

    pub fn train_range(&self) -> Range<usize> {
        self.layout.train_range()
    }

    pub fn test_range(&self) -> Range<usize> {
        self.layout.test_range()
    }

    pub fn washout(&self) -> usize {
        self.layout.washout
    }
}

/// Trains a scalar readout mapping the reservoir response to `u` onto
/// `target` over the training window.
pub fn train_readout(
    reservoir: &Reservoir,
    u: &TimeSeries,
    target: &TimeSeries,
    train: Range<usize>,
    washout: usize,
    ridge_reg: f64,
) -> Result<ReadoutWeights> {
    Ok(train_readouts(reservoir, &[(u, target)], train, washout, ridge_reg)?
        .pop()
        .expect("one readout per input"))
}

/// [`train_readout`] for several (input, target) pairs that share one
/// reservoir. The reservoir is driven by all inputs in lockstep.
pub fn train_readouts(
    reservoir: &Reservoir,
    pairs: &[(&TimeSeries, &TimeSeries)],
    train: Range<usize>,
    washout: usize,
    ridge_reg: f64,
) -> Result<Vec<ReadoutWeights>> {
    let start = train.start.checked_sub(washout).ok_or(Error::TooShort {
        what: "washout before training window",
        needed: washout,
        got: train.start,
    })?;
    for (u, target) in pairs {
        u.check_aligned(target, "readout input and target")?;
        if train.end > u.len() {
            return Err(Error::TooShort {
                what: "training window",
                needed: train.end,
                got: u.len(),
            });
        }
    }
    let warm: Vec<&[f64]> = pairs.iter().map(|(u, _)| &u.samples[start..train.start]).collect();
    let inputs: Vec<&[f64]> = pairs.iter().map(|(u, _)| &u.samples[train.clone()]).collect();
    let mut driver = reservoir.batch_driver(pairs.len());
    driver.skip_many(&warm);
    let mut accs: Vec<RidgeAccumulator> = pairs
        .iter()
        .map(|_| RidgeAccumulator::new(reservoir.config.n_nodes, 1))
        .collect();
    driver.harvest_many(&inputs, HARVEST_BLOCK, |k, off, blk| {
        let targets = &pairs[k].1.samples[train.start + off..train.start + off + blk.ncols()];
        accs[k].push(blk, &DMatrix::from_row_slice(1, blk.ncols(), targets))
    })?;
    accs.iter()
        .map(|acc| Ok(acc.solve(ridge_reg)?.with_reservoir(reservoir.fingerprint())))
        .collect()
}

/// Readout output over `window`, with the reservoir washed out on the
/// `washout` inputs that precede it.
pub fn predict_window(
    reservoir: &Reservoir,
    readout: &ReadoutWeights,
    u: &TimeSeries,
    window: Range<usize>,
    washout: usize,
) -> Result<TimeSeries> {
    Ok(predict_windows(reservoir, &[(readout, u)], window, washout)?
        .pop()
        .expect("one prediction per input"))
}

/// [`predict_window`] for several (readout, input) pairs on one reservoir.
pub fn predict_windows(
    reservoir: &Reservoir,
    pairs: &[(&ReadoutWeights, &TimeSeries)],
    window: Range<usize>,
    washout: usize,
) -> Result<Vec<TimeSeries>> {
    for (readout, u) in pairs {
        if let Some(fp) = readout.reservoir {
            if fp != reservoir.fingerprint() {
                return Err(Error::ReservoirMismatch {
                    left: fp,
                    right: reservoir.fingerprint(),
                });
            }
        }
        if window.end > u.len() {
            return Err(Error::TooShort {
                what: "prediction window",
                needed: window.end,
                got: u.len(),
            });
        }
    }
    let start = window.start.checked_sub(washout).ok_or(Error::TooShort {
        what: "washout before prediction window",
        needed: washout,
        got: window.start,
    })?;
    let warm: Vec<&[f64]> = pairs.iter().map(|(_, u)| &u.samples[start..window.start]).collect();
    let inputs: Vec<&[f64]> = pairs.iter().map(|(_, u)| &u.samples[window.clone()]).collect();
    let mut driver = reservoir.batch_driver(pairs.len());
    driver.skip_many(&warm);
    let mut outs: Vec<Vec<f64>> = vec![Vec::with_capacity(window.len()); pairs.len()];
    driver.harvest_many(&inputs, HARVEST_BLOCK, |k, _, blk| {
        outs[k].extend(pairs[k].0.predict_block(blk));
        Ok(())
    })?;
    outs.into_iter()
        .zip(pairs)
        .map(|(o, (_, u))| TimeSeries::new(o, u.dt))
        .collect()
}

/// Scores an estimate over the test window, honoring `exclude_edges`.
fn score(
    spec: &ScenarioSpec,
    actual: &TimeSeries,
    estimate: &TimeSeries,
    u: &TimeSeries,
    tag: Estimator,
) -> Result<ErrorReport> {
    if spec.exclude_edges {
        normalized_error_trimmed(actual, estimate, u, tag, spec.seg_len / 2)
    } else {
        normalized_error(actual, estimate, u, tag)
    }
}

/// Outcome of one known-α separation.
#[derive(Debug, Clone)]
pub struct SeparationResult {
    pub seed: u64,
    pub alpha: f64,
    pub rc: ErrorReport,
    pub wiener: ErrorReport,
    /// E of ζ*·u on the same window; 1 up to rounding.
    pub self_check: f64,
    pub actual: TimeSeries,
    pub rc_prediction: TimeSeries,
    pub wiener_prediction: TimeSeries,
    pub filter: WienerFilter,
}

const SELF_CHECK_TOL: f64 = 1e-9;

/// Known-α separation with an already built reservoir and generated components.
pub fn separate_known(
    spec: &ScenarioSpec,
    reservoir: &Reservoir,
    data: &ComponentPair,
    alpha: f64,
    seed: u64,
) -> Result<SeparationResult> {
    Ok(separate_many(spec, reservoir, data, &[alpha], seed)?
        .pop()
        .expect("one result per α"))
}

/// [`separate_known`] at several α on the same data and reservoir.
pub fn separate_many(
    spec: &ScenarioSpec,
    reservoir: &Reservoir,
    data: &ComponentPair,
    alphas: &[f64],
    seed: u64,
) -> Result<Vec<SeparationResult>> {
    let mixtures: Vec<TimeSeries> = alphas
        .iter()
        .map(|&a| data.mixture(a))
        .collect::<Result<_>>()?;
    let train = data.train_range();
    let test = data.test_range();
    let washout = data.washout();

    let pairs: Vec<(&TimeSeries, &TimeSeries)> = mixtures.iter().map(|u| (u, &data.s1)).collect();
    let readouts: Vec<ReadoutWeights> =
        train_readouts(reservoir, &pairs, train.clone(), washout, spec.ridge_reg)?
            .into_iter()
            .zip(alphas)
            .map(|(r, &a)| r.with_alpha(a))
            .collect();
    let pairs: Vec<(&ReadoutWeights, &TimeSeries)> = readouts.iter().zip(&mixtures).collect();
    let rc_predictions = predict_windows(reservoir, &pairs, test.clone(), washout)?;

    let actual = data.s1.slice(test.clone())?;
    let s1_train = data.s1.slice(train.clone())?;
    let mut results = Vec::with_capacity(alphas.len());
    for ((&alpha, u), rc_prediction) in alphas.iter().zip(&mixtures).zip(rc_predictions) {
        let filter = build_wiener_with(&u.slice(train.clone())?, &s1_train, spec.seg_len, spec.seg_len / 2)?;
        let u_test = u.slice(test.clone())?;
        let wiener_prediction = apply(&filter, &u_test);

        let rc = score(spec, &actual, &rc_prediction, &u_test, Estimator::Reservoir)?;
        let wiener = score(spec, &actual, &wiener_prediction, &u_test, Estimator::Wiener)?;

        let scaled = TimeSeries {
            samples: u_test.samples.iter().map(|v| rc.zeta_star * v).collect(),
            dt: u_test.dt,
            norm: None,
        };
        let check = score(spec, &actual, &scaled, &u_test, Estimator::Scaling)?;
        let self_check = check.e_normalized.unwrap_or(1.0);
        if (self_check - 1.0).abs() > SELF_CHECK_TOL {
            return Err(Error::Singular(format!(
                "scaling self-check gave E = {self_check}, expected 1"
            )));
        }
        results.push(SeparationResult {
            seed,
            alpha,
            rc,
            wiener,
            self_check,
            actual: actual.clone(),
            rc_prediction,
            wiener_prediction,
            filter,
        });
    }
    Ok(results)
}

/// Generates data for `spec.seed`, builds its reservoir and separates at `spec.alpha`.
pub fn run_separation(spec: &ScenarioSpec) -> Result<SeparationResult> {
    spec.validate()?;
    let alpha = spec.require_alpha()?;
    let reservoir = Reservoir::new(spec.reservoir_for(spec.seed))?;
    let data = ComponentPair::generate(spec, spec.seed)?;
    separate_known(spec, &reservoir, &data, alpha, spec.seed)
}

/// Mean and standard error over seeds for one α and estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub estimator: Estimator,
    pub mean_e_norm: f64,
    pub se_e_norm: f64,
    pub mean_e_num: f64,
    pub se_e_num: f64,
    pub repeats: usize,
}

/// One error report tagged with where it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario: ScenarioKind,
    pub alpha: f64,
    pub seed: u64,
    pub report: ErrorReport,
}

#[derive(Debug, Clone, Default)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub runs: Vec<RunRecord>,
}

impl SweepTable {
    pub fn row(&self, alpha: f64, estimator: Estimator) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.estimator == estimator && (r.alpha - alpha).abs() < 1e-12)
    }
}

/// Mean and standard error (sample std / √n).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Seeds used for `repeats` repetitions starting at `base`.
pub fn repeat_seeds(base: u64, repeats: usize) -> Vec<u64> {
    (0..repeats as u64).map(|i| base.wrapping_add(i)).collect()
}

/// Separation at every α for `repeats` seeds, aggregated per (α, estimator).
///
/// Seeds run in parallel on the current rayon pool, and all α for one seed
/// share a lockstep reservoir drive. Results are ordered by (α, seed)
/// regardless of scheduling.
pub fn sweep_alpha(spec: &ScenarioSpec, alphas: &[f64], repeats: usize) -> Result<SweepTable> {
    spec.validate()?;
    if alphas.is_empty() {
        return Err(invalid("alphas", "sweep needs at least one α"));
    }
    if repeats == 0 {
        return Err(invalid("repeats", "must be >= 1"));
    }
    for &a in alphas {
        MixSpec::new(a)?;
    }
    let seeds = repeat_seeds(spec.seed, repeats);
    let per_seed: Vec<Vec<SeparationResult>> = seeds
        .par_iter()
        .map(|&s| {
            let reservoir = Reservoir::new(spec.reservoir_for(s))?;
            let data = ComponentPair::generate(spec, s)?;
            separate_many(spec, &reservoir, &data, alphas, s)
        })
        .collect::<Result<_>>()?;
    let results: Vec<SeparationResult> = per_seed.into_iter().flatten().collect();
    Ok(aggregate(spec.kind, alphas, &results))
}

fn aggregate(kind: ScenarioKind, alphas: &[f64], results: &[SeparationResult]) -> SweepTable {
    let mut table = SweepTable::default();
    for &alpha in alphas {
        let at: Vec<&SeparationResult> = results.iter().filter(|r| r.alpha == alpha).collect();
        for est in [Estimator::Reservoir, Estimator::Wiener] {
            let reports: Vec<&ErrorReport> = at
                .iter()
                .map(|r| if est == Estimator::Reservoir { &r.rc } else { &r.wiener })
                .collect();
            let norm: Vec<f64> = reports
                .iter()
                .map(|r| r.e_normalized.unwrap_or(f64::NAN))
                .collect();
            let num: Vec<f64> = reports.iter().map(|r| r.e_numerator).collect();
            let (mean_e_norm, se_e_norm) = mean_and_se(&norm);
            let (mean_e_num, se_e_num) = mean_and_se(&num);
            table.rows.push(SweepRow {
                alpha,
                estimator: est,
                mean_e_norm,
                se_e_norm,
                mean_e_num,
                se_e_num,
                repeats: reports.len(),
            });
        }
        for r in at {
            for report in [r.rc, r.wiener] {
                table.runs.push(RunRecord {
                    scenario: kind,
                    alpha,
                    seed: r.seed,
                    report,
                });
            }
        }
    }
    table
}
