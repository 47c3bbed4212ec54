//! Run configuration: a TOML document whose keys mirror the library's
//! hyperparameter names. Every key is optional except where a subcommand
//! needs it (`alpha` for `generate` and `separate`).

use std::path::PathBuf;

use serde::Deserialize;

use chaosep::dynsys::{Component, LorenzParams};
use chaosep::pipeline::alpha::{uniform_grid, AlphaEstimatorConfig, CorrectionFit};
use chaosep::pipeline::{ScenarioKind, ScenarioSpec};
use chaosep::reservoir::ReservoirConfig;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub sigma: Option<f64>,
    pub rho: Option<f64>,
    pub beta: Option<f64>,
    pub speed: Option<f64>,
}

impl SystemConfig {
    fn apply(&self, base: LorenzParams) -> LorenzParams {
        LorenzParams {
            sigma: self.sigma.unwrap_or(base.sigma),
            rho: self.rho.unwrap_or(base.rho),
            beta: self.beta.unwrap_or(base.beta),
            speed: self.speed.unwrap_or(base.speed),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub alphas: Option<Vec<f64>>,
    pub repeats: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub n_nodes: Option<usize>,
    pub sparsity: Option<f64>,
    pub grid_step: Option<f64>,
    pub segment_len: Option<usize>,
    pub test_len: Option<usize>,
    pub fit: Option<CorrectionFit>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterpConfig {
    pub n_nodes: Option<usize>,
    pub center: Option<f64>,
    pub spacings: Option<Vec<f64>>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub queries: Option<Vec<f64>>,
    pub repeats: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub kind: Option<ScenarioKind>,
    pub component: Option<Component>,
    pub alpha: Option<f64>,
    pub n_nodes: Option<usize>,
    pub spectral_radius: Option<f64>,
    pub leakage: Option<f64>,
    pub input_scale: Option<f64>,
    pub bias: Option<f64>,
    pub sparsity: Option<f64>,
    pub washout: Option<usize>,
    pub ridge_reg: Option<f64>,
    pub train_len: Option<usize>,
    pub test_len: Option<usize>,
    pub seg_len: Option<usize>,
    pub transient_steps: Option<usize>,
    pub exclude_edges: Option<bool>,
    /// Samples written by `generate`; defaults to washout + train + test.
    pub n_samples: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub p1: Option<SystemConfig>,
    pub p2: Option<SystemConfig>,
    pub sweep: Option<SweepConfig>,
    pub estimator: Option<EstimatorConfig>,
    pub interp: Option<InterpConfig>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.message().to_string())
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn scenario(&self) -> ScenarioSpec {
        let kind = self.kind.unwrap_or(ScenarioKind::DiffParams);
        let mut spec = ScenarioSpec::new(kind);
        spec.alpha = self.alpha;
        if let Some(p) = &self.p1 {
            spec.p1 = p.apply(spec.p1);
        }
        if let Some(p) = &self.p2 {
            spec.p2 = p.apply(spec.p2);
        }
        spec.component = self.component.unwrap_or(spec.component);
        spec.reservoir = self.reservoir(spec.reservoir);
        spec.ridge_reg = self.ridge_reg.unwrap_or(spec.ridge_reg);
        spec.train_len = self.train_len.unwrap_or(spec.train_len);
        spec.test_len = self.test_len.unwrap_or(spec.test_len);
        spec.seg_len = self.seg_len.unwrap_or(spec.seg_len);
        spec.transient_steps = self.transient_steps.unwrap_or(spec.transient_steps);
        spec.exclude_edges = self.exclude_edges.unwrap_or(spec.exclude_edges);
        spec.seed = self.seed();
        spec
    }

    fn reservoir(&self, base: ReservoirConfig) -> ReservoirConfig {
        ReservoirConfig {
            n_nodes: self.n_nodes.unwrap_or(base.n_nodes),
            spectral_radius: self.spectral_radius.unwrap_or(base.spectral_radius),
            leakage: self.leakage.unwrap_or(base.leakage),
            input_scale: self.input_scale.unwrap_or(base.input_scale),
            bias: self.bias.unwrap_or(base.bias),
            sparsity: self.sparsity.unwrap_or(base.sparsity),
            washout: self.washout.unwrap_or(base.washout),
            seed: base.seed,
        }
    }

    pub fn sweep_alphas(&self) -> Vec<f64> {
        self.sweep
            .as_ref()
            .and_then(|s| s.alphas.clone())
            .unwrap_or_else(|| (1..=9).map(|i| i as f64 / 10.0).collect())
    }

    pub fn sweep_repeats(&self) -> usize {
        self.sweep.as_ref().and_then(|s| s.repeats).unwrap_or(5)
    }

    /// Estimator settings: top-level reservoir keys apply, then the
    /// `[estimator]` overrides (defaults N = 1000, sparsity 0.99).
    pub fn estimator(&self) -> Result<AlphaEstimatorConfig, chaosep::Error> {
        let spec = self.scenario();
        let e = self.estimator.clone().unwrap_or_default();
        let base = AlphaEstimatorConfig::default();
        let mut reservoir = self.reservoir(base.reservoir);
        reservoir.n_nodes = e.n_nodes.unwrap_or(base.reservoir.n_nodes);
        reservoir.sparsity = e.sparsity.unwrap_or(base.reservoir.sparsity);
        let grid = match e.grid_step {
            Some(step) => uniform_grid(step)?,
            None => base.grid,
        };
        Ok(AlphaEstimatorConfig {
            p1: spec.p1,
            p2: spec.p2,
            component: spec.component,
            reservoir,
            grid,
            segment_len: e.segment_len.unwrap_or(base.segment_len),
            test_len: e.test_len.unwrap_or(base.test_len),
            ridge_reg: spec.ridge_reg,
            transient_steps: spec.transient_steps,
            fit: e.fit.unwrap_or(base.fit),
            seed: self.seed(),
        })
    }

    pub fn interp(&self) -> InterpSettings {
        let i = self.interp.clone().unwrap_or_default();
        let mut spec = self.scenario();
        spec.reservoir.n_nodes = i.n_nodes.unwrap_or(1000);
        let lo = i.lo.unwrap_or(0.4);
        let hi = i.hi.unwrap_or(0.5);
        InterpSettings {
            spec,
            center: i.center.unwrap_or(0.5),
            spacings: i
                .spacings
                .unwrap_or_else(|| vec![0.0, 0.05, 0.1, 0.2, 0.4]),
            lo,
            hi,
            queries: i
                .queries
                .unwrap_or_else(|| (0..=10).map(|k| lo + (hi - lo) * k as f64 / 10.0).collect()),
            repeats: i.repeats.unwrap_or(3),
        }
    }
}

pub struct InterpSettings {
    pub spec: ScenarioSpec,
    pub center: f64,
    pub spacings: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
    pub queries: Vec<f64>,
    pub repeats: usize,
}
