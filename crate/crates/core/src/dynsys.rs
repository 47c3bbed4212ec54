//! Lorenz-family signal sources, normalization and the two-component mixture.
//!
//! Trajectories are integrated with classical RK4 at a fixed step of 0.01
//! model time units and sampled every fifth step, so every generated series
//! has a sample interval of 0.05.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// RK4 integration step in model time units.
pub const STEP: f64 = 0.01;
/// Number of integration steps between recorded samples.
pub const SAMPLE_EVERY: usize = 5;
/// Sample interval of generated series.
pub const SAMPLE_DT: f64 = STEP * SAMPLE_EVERY as f64;
/// Integration steps discarded before the first recorded sample.
pub const DEFAULT_TRANSIENT_STEPS: usize = 1000;
/// Any coordinate larger than this in magnitude aborts integration.
pub const DIVERGENCE_BOUND: f64 = 1e6;

/// Parameters of one Lorenz system plus a speed factor that multiplies the
/// whole vector field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorenzParams {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
    pub speed: f64,
}

impl LorenzParams {
    /// σ = 10, ρ = 28, β = 8/3 at unit speed.
    pub const fn classic() -> Self {
        Self {
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
            speed: 1.0,
        }
    }

    /// Multiplies (σ, ρ, β) by `factor`; the speed is left alone.
    pub fn scaled(self, factor: f64) -> Self {
        Self {
            sigma: self.sigma * factor,
            rho: self.rho * factor,
            beta: self.beta * factor,
            speed: self.speed,
        }
    }

    pub fn with_speed(self, speed: f64) -> Self {
        Self { speed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.speed > 0.0) || !self.speed.is_finite() {
            return Err(invalid("speed", format!("must be > 0, got {}", self.speed)));
        }
        for (name, v) in [("sigma", self.sigma), ("rho", self.rho), ("beta", self.beta)] {
            if !v.is_finite() {
                return Err(invalid(name, "must be finite"));
            }
        }
        Ok(())
    }
}

impl Default for LorenzParams {
    fn default() -> Self {
        Self::classic()
    }
}

/// Mean and standard deviation removed by [`normalize`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: f64,
    pub std: f64,
}

impl Normalization {
    /// Population mean and standard deviation of `samples`.
    pub fn fit(samples: &[f64]) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::TooShort {
                what: "normalization",
                needed: 2,
                got: samples.len(),
            });
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        if !(std > 0.0) || std <= mean.abs() * 1e-14 {
            return Err(Error::ZeroVariance);
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }
}

/// A uniformly sampled scalar signal.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub samples: Vec<f64>,
    pub dt: f64,
    pub norm: Option<Normalization>,
}

impl TimeSeries {
    pub fn new(samples: Vec<f64>, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(invalid("dt", format!("must be > 0, got {dt}")));
        }
        Ok(Self {
            samples,
            dt,
            norm: None,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Time stamp of sample `i`.
    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Population variance.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.samples.iter().map(|v| (v - m).powi(2)).sum::<f64>() / self.samples.len() as f64
    }

    /// Copy of a sub-range, keeping dt and the normalization record.
    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        if range.end > self.len() || range.start > range.end {
            return Err(Error::TooShort {
                what: "slice",
                needed: range.end,
                got: self.len(),
            });
        }
        Ok(Self {
            samples: self.samples[range].to_vec(),
            dt: self.dt,
            norm: self.norm,
        })
    }

    /// Applies a fixed normalization, e.g. statistics fitted on a training window.
    pub fn normalized_with(&self, norm: Normalization) -> Self {
        Self {
            samples: self.samples.iter().map(|&v| norm.apply(v)).collect(),
            dt: self.dt,
            norm: Some(norm),
        }
    }

    pub(crate) fn check_aligned(&self, other: &TimeSeries, what: &'static str) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch {
                what,
                left: self.len(),
                right: other.len(),
            });
        }
        check_dt(self.dt, other.dt)
    }
}

pub(crate) fn check_dt(a: f64, b: f64) -> Result<()> {
    if (a - b).abs() > 1e-12 * a.abs().max(b.abs()) {
        return Err(Error::DtMismatch { left: a, right: b });
    }
    Ok(())
}

/// Mixing fraction α: the variance share of the first component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixSpec {
    pub alpha: f64,
}

impl MixSpec {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(invalid("alpha", format!("must lie in [0, 1], got {alpha}")));
        }
        Ok(Self { alpha })
    }

    /// (√α, √(1−α)).
    pub fn weights(&self) -> (f64, f64) {
        (self.alpha.sqrt(), (1.0 - self.alpha).sqrt())
    }
}

/// Which Lorenz coordinate is mixed and recovered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    #[default]
    X,
    Y,
    Z,
}

impl Component {
    pub fn as_str(&self) -> &'static str {
        match self {
            Component::X => "x",
            Component::Y => "y",
            Component::Z => "z",
        }
    }
}

/// The three coordinate series of one sampled trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub x: TimeSeries,
    pub y: TimeSeries,
    pub z: TimeSeries,
}

impl Trajectory {
    pub fn component(&self, c: Component) -> &TimeSeries {
        match c {
            Component::X => &self.x,
            Component::Y => &self.y,
            Component::Z => &self.z,
        }
    }

    pub fn into_component(self, c: Component) -> TimeSeries {
        match c {
            Component::X => self.x,
            Component::Y => self.y,
            Component::Z => self.z,
        }
    }
}

/// Lorenz vector field scaled by the speed factor.
pub fn lorenz_deriv(state: [f64; 3], p: &LorenzParams) -> [f64; 3] {
    let [x, y, z] = state;
    [
        p.speed * (p.sigma * (y - x)),
        p.speed * (-x * z + p.rho * x - y),
        p.speed * (x * y - p.beta * z),
    ]
}

/// One classical fourth-order Runge–Kutta step of size `h`.
pub fn rk4_step(state: [f64; 3], p: &LorenzParams, h: f64) -> [f64; 3] {
    let add = |a: [f64; 3], b: [f64; 3], s: f64| [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]];
    let k1 = lorenz_deriv(state, p);
    let k2 = lorenz_deriv(add(state, k1, h / 2.0), p);
    let k3 = lorenz_deriv(add(state, k2, h / 2.0), p);
    let k4 = lorenz_deriv(add(state, k3, h), p);
    let mut out = state;
    for i in 0..3 {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Default starting point before perturbation.
pub const DEFAULT_INIT: [f64; 3] = [1.0, 1.0, 1.0];

/// Adds a seeded uniform offset in [−0.5, 0.5]³ to `init`.
pub fn perturbed_init(init: [f64; 3], seed: u64) -> [f64; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = init;
    for v in out.iter_mut() {
        *v += rng.gen_range(-0.5..=0.5);
    }
    out
}

/// Integrates a Lorenz trajectory and samples it every [`SAMPLE_EVERY`] steps.
///
/// `transient_steps` integration steps are taken and thrown away before the
/// first sample is recorded. When `perturb_seed` is given, `init` is offset by
/// [`perturbed_init`] first.
pub fn generate(
    p: &LorenzParams,
    init: [f64; 3],
    n_samples: usize,
    transient_steps: usize,
    perturb_seed: Option<u64>,
) -> Result<Trajectory> {
    p.validate()?;
    if n_samples == 0 {
        return Err(invalid("n_samples", "must be > 0"));
    }
    let mut state = match perturb_seed {
        Some(seed) => perturbed_init(init, seed),
        None => init,
    };
    let mut step = 0usize;
    let mut advance = |state: &mut [f64; 3]| -> Result<()> {
        *state = rk4_step(*state, p, STEP);
        step += 1;
        for v in state.iter() {
            if !v.is_finite() || v.abs() > DIVERGENCE_BOUND {
                return Err(Error::Divergence {
                    step,
                    value: v.abs(),
                    bound: DIVERGENCE_BOUND,
                });
            }
        }
        Ok(())
    };
    for _ in 0..transient_steps {
        advance(&mut state)?;
    }
    let mut xs = Vec::with_capacity(n_samples);
    let mut ys = Vec::with_capacity(n_samples);
    let mut zs = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        if i > 0 {
            for _ in 0..SAMPLE_EVERY {
                advance(&mut state)?;
            }
        }
        xs.push(state[0]);
        ys.push(state[1]);
        zs.push(state[2]);
    }
    let wrap = |samples| TimeSeries {
        samples,
        dt: SAMPLE_DT,
        norm: None,
    };
    Ok(Trajectory {
        x: wrap(xs),
        y: wrap(ys),
        z: wrap(zs),
    })
}

/// Subtracts the mean and divides by the standard deviation of `s` itself.
pub fn normalize(s: &TimeSeries) -> Result<TimeSeries> {
    let norm = Normalization::fit(&s.samples)?;
    Ok(s.normalized_with(norm))
}

/// u(t) = √α·s1(t) + √(1−α)·s2(t). The result is not re-normalized.
pub fn mix(s1: &TimeSeries, s2: &TimeSeries, m: MixSpec) -> Result<TimeSeries> {
    s1.check_aligned(s2, "mix components")?;
    let (w1, w2) = MixSpec::new(m.alpha)?.weights();
    Ok(TimeSeries {
        samples: s1
            .samples
            .iter()
            .zip(&s2.samples)
            .map(|(a, b)| w1 * a + w2 * b)
            .collect(),
        dt: s1.dt,
        norm: None,
    })
}
