//! Leaky-tanh echo-state reservoir.
//!
//! The state evolves as
//!
//! ```text
//! r(t+1) = (1 − a)·r(t) + a·tanh(W_in·u(t) + W_res·r(t) + b)
//! ```
//!
//! `W_in` is dense with entries uniform on [−k, k]. `W_res` starts with
//! entries uniform on [−1, 1], each entry is dropped independently with
//! probability `sparsity`, and the survivors are rescaled by one constant so
//! that the spectral radius equals the configured value.
//!
//! Harvesting starts from r = 0. The state stored for sample t is the state
//! *after* consuming u(t), and the first `washout` states are discarded.

use nalgebra::linalg::Schur;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynsys::TimeSeries;
use crate::error::{invalid, Error, Result};
use crate::sparse::CsrMatrix;

/// Default number of driven steps discarded before harvesting.
pub const DEFAULT_WASHOUT: usize = 1000;
/// Default bias on every node's pre-activation. A nonzero value breaks the
/// odd symmetry of the map, which constant-target readouts depend on.
pub const DEFAULT_BIAS: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReservoirConfig {
    pub n_nodes: usize,
    pub spectral_radius: f64,
    pub leakage: f64,
    pub input_scale: f64,
    pub bias: f64,
    pub sparsity: f64,
    pub washout: usize,
    pub seed: u64,
}

impl Default for ReservoirConfig {
    fn default() -> Self {
        Self {
            n_nodes: 2000,
            spectral_radius: 0.9,
            leakage: 0.3,
            input_scale: 0.13,
            bias: DEFAULT_BIAS,
            sparsity: 0.95,
            washout: DEFAULT_WASHOUT,
            seed: 0,
        }
    }
}

impl ReservoirConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_nodes == 0 {
            return Err(invalid("n_nodes", "must be >= 1"));
        }
        if !(self.spectral_radius > 0.0) || !self.spectral_radius.is_finite() {
            return Err(invalid("spectral_radius", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.leakage) {
            return Err(invalid("leakage", "must lie in [0, 1]"));
        }
        if !(self.input_scale >= 0.0) || !self.input_scale.is_finite() {
            return Err(invalid("input_scale", "must be >= 0"));
        }
        if !self.bias.is_finite() {
            return Err(invalid("bias", "must be finite"));
        }
        if !(0.0..=1.0).contains(&self.sparsity) {
            return Err(invalid("sparsity", "must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Identity of the realized weights: every field that influences them.
    pub fn fingerprint(&self, input_dim: usize) -> u64 {
        // FNV-1a over the little-endian bytes of each field.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for b in bytes {
                h ^= u64::from(*b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        eat(&(self.n_nodes as u64).to_le_bytes());
        eat(&(input_dim as u64).to_le_bytes());
        eat(&self.spectral_radius.to_bits().to_le_bytes());
        eat(&self.input_scale.to_bits().to_le_bytes());
        eat(&self.sparsity.to_bits().to_le_bytes());
        eat(&self.seed.to_le_bytes());
        h
    }
}

/// Realized input and recurrent matrices.
#[derive(Debug, Clone)]
pub struct ReservoirWeights {
    /// N × M_i.
    pub w_in: DMatrix<f64>,
    /// N × N, sparse.
    pub w_res: CsrMatrix,
    pub realized_radius: f64,
    pub fingerprint: u64,
}

impl ReservoirWeights {
    pub fn n_nodes(&self) -> usize {
        self.w_in.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.w_in.ncols()
    }
}

/// Post-washout states, one column per harvested sample.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    pub states: DMatrix<f64>,
    pub dt: f64,
}

impl StateTrajectory {
    pub fn n_nodes(&self) -> usize {
        self.states.nrows()
    }

    pub fn len(&self) -> usize {
        self.states.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.states.ncols() == 0
    }
}

/// Draws the weights for `cfg`; the seed fully determines the result.
pub fn build_weights(cfg: &ReservoirConfig, input_dim: usize) -> Result<ReservoirWeights> {
    cfg.validate()?;
    if input_dim == 0 {
        return Err(invalid("input_dim", "must be >= 1"));
    }
    let n = cfg.n_nodes;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let k = cfg.input_scale;
    let w_in = DMatrix::from_row_iterator(
        n,
        input_dim,
        (0..n * input_dim).map(|_| if k > 0.0 { rng.gen_range(-k..=k) } else { 0.0 }),
    );

    let mut triplets = Vec::with_capacity(((1.0 - cfg.sparsity) * (n * n) as f64) as usize + n);
    for r in 0..n {
        for c in 0..n {
            let v: f64 = rng.gen_range(-1.0..=1.0);
            let drop: f64 = rng.gen();
            if drop >= cfg.sparsity && v != 0.0 {
                triplets.push((r, c, v));
            }
        }
    }
    let mut w_res = CsrMatrix::from_sorted_triplets(n, n, triplets);
    if w_res.nnz() == 0 {
        return Err(Error::ZeroReservoir {
            sparsity: cfg.sparsity,
        });
    }
    let raw = spectral_radius(&w_res)?;
    if !(raw > 0.0) {
        return Err(Error::ZeroReservoir {
            sparsity: cfg.sparsity,
        });
    }
    let factor = cfg.spectral_radius / raw;
    w_res.scale(factor);
    Ok(ReservoirWeights {
        w_in,
        w_res,
        realized_radius: raw * factor,
        fingerprint: cfg.fingerprint(input_dim),
    })
}

const RADIUS_MAX_ITER: usize = 5000;
const RADIUS_TOL: f64 = 1e-6;
const RADIUS_BLOCK: usize = 16;
const RADIUS_CHECK_EVERY: usize = 5;
const SCHUR_MAX_ITER: usize = 10_000;

/// Magnitude of the dominant eigenvalue of a square sparse matrix.
///
/// Block power iteration with a Rayleigh–Ritz projection: a block of
/// [`RADIUS_BLOCK`] orthonormal vectors is repeatedly multiplied by the matrix
/// and re-orthonormalized, and the largest Ritz value magnitude of the
/// projected matrix is tracked. The projection captures complex-conjugate
/// dominant pairs, where single-vector iteration oscillates instead of
/// converging. Iteration stops once successive estimates agree to
/// 1e-6 relative on two consecutive checks.
pub fn spectral_radius(m: &CsrMatrix) -> Result<f64> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(invalid("matrix", format!("not square: {}x{}", n, m.ncols())));
    }
    if n == 0 || m.nnz() == 0 {
        return Ok(0.0);
    }
    let block = RADIUS_BLOCK.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0f_7ad1u64);
    let start = DMatrix::from_fn(n, block, |_, _| rng.gen_range(-1.0..1.0));
    let mut q = start.qr().q();
    let ritz = |q: &DMatrix<f64>| {
        max_ritz_modulus(m, q).ok_or(Error::NoConvergence {
            iterations: SCHUR_MAX_ITER,
            estimate: f64::NAN,
            change: f64::NAN,
        })
    };
    if block == n {
        return ritz(&q);
    }
    let mut prev = f64::NAN;
    let mut settled = 0;
    let mut change = f64::INFINITY;
    for it in 1..=RADIUS_MAX_ITER {
        let z = m.mul_dense(&q);
        if z.norm() == 0.0 {
            return Ok(0.0);
        }
        q = z.qr().q();
        if it % RADIUS_CHECK_EVERY == 0 {
            let est = ritz(&q)?;
            change = ((est - prev) / est).abs();
            if change < RADIUS_TOL {
                settled += 1;
                if settled >= 2 {
                    return Ok(est);
                }
            } else {
                settled = 0;
            }
            prev = est;
        }
    }
    Err(Error::NoConvergence {
        iterations: RADIUS_MAX_ITER,
        estimate: prev,
        change,
    })
}

fn max_ritz_modulus(m: &CsrMatrix, q: &DMatrix<f64>) -> Option<f64> {
    let h = q.transpose() * m.mul_dense(q);
    let k = h.nrows();
    // The QR iteration can stall on nearly scalar matrices; retrying on the
    // trace-shifted matrix resolves that case.
    let attempt = |a: DMatrix<f64>, shift: f64| {
        Schur::try_new(a, f64::EPSILON, SCHUR_MAX_ITER).map(|s| {
            s.complex_eigenvalues()
                .iter()
                .map(|z| (z.re + shift).hypot(z.im))
                .fold(0.0, f64::max)
        })
    };
    attempt(h.clone(), 0.0).or_else(|| {
        let c = h.trace() / k as f64;
        attempt(h - DMatrix::identity(k, k) * c, c)
    })
}

/// One reservoir step, returning the new state.
pub fn update(
    r: &[f64],
    u: &[f64],
    w: &ReservoirWeights,
    cfg: &ReservoirConfig,
) -> Result<Vec<f64>> {
    if r.len() != w.n_nodes() {
        return Err(Error::LengthMismatch {
            what: "reservoir state",
            left: r.len(),
            right: w.n_nodes(),
        });
    }
    if u.len() != w.input_dim() {
        return Err(Error::LengthMismatch {
            what: "reservoir input",
            left: u.len(),
            right: w.input_dim(),
        });
    }
    let mut next = vec![0.0; r.len()];
    step_into(r, u, w, cfg.leakage, cfg.bias, 1, &mut next);
    Ok(next)
}

/// Streams processed together in the batched kernel.
const LANES: usize = 8;

/// Slots per node in the node-major state: 1 for a single stream, otherwise
/// the stream count rounded up to a multiple of [`LANES`].
fn stride_for(streams: usize) -> usize {
    if streams == 1 {
        1
    } else {
        streams.div_ceil(LANES) * LANES
    }
}

/// Advances all streams by one step. `state[i * stride + s]` is node i of
/// stream s and `u` holds the inputs stream by stream. Per stream the
/// arithmetic is identical to the single-stream path, so batching never
/// changes results.
fn step_into(
    state: &[f64],
    u: &[f64],
    w: &ReservoirWeights,
    leak: f64,
    bias: f64,
    streams: usize,
    out: &mut [f64],
) {
    let keep = 1.0 - leak;
    let m = w.input_dim();
    let n = w.n_nodes();
    let input = |i: usize, s: usize, mut pre: f64| {
        for j in 0..m {
            pre += w.w_in[(i, j)] * u[s * m + j];
        }
        pre
    };
    if streams == 1 {
        for i in 0..n {
            let pre = input(i, 0, bias + w.w_res.row_dot(i, state));
            out[i] = keep * state[i] + leak * pre.tanh();
        }
        return;
    }
    let stride = stride_for(streams);
    let (row_ptr, cols, vals) = w.w_res.raw_parts();
    for i in 0..n {
        let (rc, rv) = (&cols[row_ptr[i]..row_ptr[i + 1]], &vals[row_ptr[i]..row_ptr[i + 1]]);
        for g in (0..stride).step_by(LANES) {
            let mut acc = [[0.0f64; LANES]; 4];
            let mut cc = rc.chunks_exact(4);
            let mut vc = rv.chunks_exact(4);
            for (c, v) in (&mut cc).zip(&mut vc) {
                for q in 0..4 {
                    let b = c[q] as usize * stride + g;
                    let r: &[f64; LANES] = state[b..b + LANES].try_into().unwrap();
                    let a = &mut acc[q];
                    for l in 0..LANES {
                        a[l] += v[q] * r[l];
                    }
                }
            }
            let mut tail = [0.0f64; LANES];
            for (&c, &v) in cc.remainder().iter().zip(vc.remainder()) {
                let b = c as usize * stride + g;
                let r: &[f64; LANES] = state[b..b + LANES].try_into().unwrap();
                for l in 0..LANES {
                    tail[l] += v * r[l];
                }
            }
            for l in 0..LANES.min(streams.saturating_sub(g)) {
                let dot = (acc[0][l] + acc[1][l]) + (acc[2][l] + acc[3][l]) + tail[l];
                let pre = input(i, g + l, bias + dot);
                let k = i * stride + g + l;
                out[k] = keep * state[k] + leak * pre.tanh();
            }
        }
    }
}

/// Stateful driver used for long inputs.
///
/// Keeps the current reservoir state and streams harvested states to a
/// caller in column blocks, so a 2000 × 50 000 trajectory never has to be
/// materialized. A driver can advance several independent input streams in
/// lockstep ([`Driver::batch`]); each recurrent weight is then loaded once per
/// step for all streams. Every stream evolves exactly as it would alone.
pub struct Driver<'a> {
    weights: &'a ReservoirWeights,
    leak: f64,
    bias: f64,
    streams: usize,
    stride: usize,
    state: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a> Driver<'a> {
    pub fn new(weights: &'a ReservoirWeights, cfg: &ReservoirConfig) -> Self {
        Self::batch(weights, cfg, 1)
    }

    /// Driver for `streams` independent inputs, all starting from r = 0.
    pub fn batch(weights: &'a ReservoirWeights, cfg: &ReservoirConfig, streams: usize) -> Self {
        assert!(streams >= 1, "a driver needs at least one stream");
        let stride = stride_for(streams);
        let len = weights.n_nodes() * stride;
        Self {
            weights,
            leak: cfg.leakage,
            bias: cfg.bias,
            streams,
            stride,
            state: vec![0.0; len],
            scratch: vec![0.0; len],
        }
    }

    pub fn with_state(mut self, state: Vec<f64>) -> Self {
        assert_eq!(self.streams, 1, "with_state needs a single-stream driver");
        assert_eq!(state.len(), self.weights.n_nodes());
        self.state = state;
        self
    }

    pub fn streams(&self) -> usize {
        self.streams
    }

    pub fn reset(&mut self) {
        self.state.iter_mut().for_each(|v| *v = 0.0);
    }

    /// State of a single-stream driver.
    pub fn state(&self) -> &[f64] {
        assert_eq!(self.streams, 1, "use stream_state on a batch driver");
        &self.state
    }

    pub fn stream_state(&self, s: usize) -> Vec<f64> {
        assert!(s < self.streams);
        self.state.iter().skip(s).step_by(self.stride).copied().collect()
    }

    /// Advances by one sample; `u` holds `input_dim` values per stream.
    pub fn step(&mut self, u: &[f64]) {
        assert_eq!(u.len(), self.weights.input_dim() * self.streams);
        step_into(
            &self.state,
            u,
            self.weights,
            self.leak,
            self.bias,
            self.streams,
            &mut self.scratch,
        );
        std::mem::swap(&mut self.state, &mut self.scratch);
    }

    /// Consumes `inputs` without recording anything (single stream).
    pub fn skip(&mut self, inputs: &[f64]) {
        self.skip_many(&[inputs]);
    }

    /// Consumes one equally long input slice per stream.
    pub fn skip_many(&mut self, inputs: &[&[f64]]) {
        let total = self.check_inputs(inputs);
        let mut u = vec![0.0; self.weights.input_dim() * self.streams];
        for t in 0..total {
            self.gather(inputs, t, &mut u);
            self.step(&u);
        }
    }

    /// Consumes `inputs` and hands states to `sink` in blocks of at most
    /// `block` columns. `sink` receives the index of the first column in the
    /// block (relative to the start of `inputs`) and the N × b block.
    pub fn harvest<F>(&mut self, inputs: &[f64], block: usize, mut sink: F) -> Result<()>
    where
        F: FnMut(usize, &DMatrix<f64>) -> Result<()>,
    {
        self.harvest_many(&[inputs], block, |_, start, blk| sink(start, blk))
    }

    /// Multi-stream [`Driver::harvest`]; `sink` also receives the stream index.
    pub fn harvest_many<F>(&mut self, inputs: &[&[f64]], block: usize, mut sink: F) -> Result<()>
    where
        F: FnMut(usize, usize, &DMatrix<f64>) -> Result<()>,
    {
        let total = self.check_inputs(inputs);
        let n = self.weights.n_nodes();
        let k = self.streams;
        let stride = self.stride;
        let block = block.max(1);
        let mut bufs = vec![DMatrix::zeros(n, block.min(total.max(1))); k];
        let mut u = vec![0.0; self.weights.input_dim() * k];
        let mut start = 0;
        while start < total {
            let b = block.min(total - start);
            if bufs[0].ncols() != b {
                bufs = vec![DMatrix::zeros(n, b); k];
            }
            for j in 0..b {
                self.gather(inputs, start + j, &mut u);
                self.step(&u);
                for (s, buf) in bufs.iter_mut().enumerate() {
                    let col = buf.column_mut(j);
                    for (dst, src) in col.into_iter().zip(self.state.iter().skip(s).step_by(stride)) {
                        *dst = *src;
                    }
                }
            }
            for (s, buf) in bufs.iter().enumerate() {
                sink(s, start, buf)?;
            }
            start += b;
        }
        Ok(())
    }

    fn check_inputs(&self, inputs: &[&[f64]]) -> usize {
        assert_eq!(inputs.len(), self.streams, "one input slice per stream");
        let m = self.weights.input_dim();
        let len = inputs[0].len();
        assert!(inputs.iter().all(|x| x.len() == len), "stream inputs differ in length");
        len / m
    }

    fn gather(&self, inputs: &[&[f64]], t: usize, u: &mut [f64]) {
        let m = self.weights.input_dim();
        for (s, x) in inputs.iter().enumerate() {
            u[s * m..(s + 1) * m].copy_from_slice(&x[t * m..(t + 1) * m]);
        }
    }
}

/// Runs the reservoir from r = 0 over `input`, dropping the first
/// `cfg.washout` states.
pub fn drive(
    w: &ReservoirWeights,
    cfg: &ReservoirConfig,
    input: &TimeSeries,
) -> Result<StateTrajectory> {
    if w.input_dim() != 1 {
        return Err(Error::LengthMismatch {
            what: "reservoir input dimension",
            left: 1,
            right: w.input_dim(),
        });
    }
    if input.len() < cfg.washout {
        return Err(Error::TooShort {
            what: "reservoir input",
            needed: cfg.washout,
            got: input.len(),
        });
    }
    let mut driver = Driver::new(w, cfg);
    driver.skip(&input.samples[..cfg.washout]);
    let rest = &input.samples[cfg.washout..];
    let mut states = DMatrix::zeros(w.n_nodes(), rest.len());
    driver.harvest(rest, 1024, |start, blk| {
        states
            .columns_mut(start, blk.ncols())
            .copy_from(blk);
        Ok(())
    })?;
    Ok(StateTrajectory {
        states,
        dt: input.dt,
    })
}

/// A configuration together with its realized weights.
#[derive(Debug, Clone)]
pub struct Reservoir {
    pub config: ReservoirConfig,
    pub weights: ReservoirWeights,
}

impl Reservoir {
    /// Scalar-input reservoir.
    pub fn new(config: ReservoirConfig) -> Result<Self> {
        let weights = build_weights(&config, 1)?;
        Ok(Self { config, weights })
    }

    pub fn drive(&self, input: &TimeSeries) -> Result<StateTrajectory> {
        drive(&self.weights, &self.config, input)
    }

    pub fn driver(&self) -> Driver<'_> {
        Driver::new(&self.weights, &self.config)
    }

    pub fn batch_driver(&self, streams: usize) -> Driver<'_> {
        Driver::batch(&self.weights, &self.config, streams)
    }

    pub fn fingerprint(&self) -> u64 {
        self.weights.fingerprint
    }
}

/// Column-stacked state vector helper for small tests and snippets.
pub fn state_vector(traj: &StateTrajectory, t: usize) -> DVector<f64> {
    traj.states.column(t).into_owned()
}
