//! Independent reference computations shared by the oracle and acceptance
//! targets. Each returns the measured discrepancy; callers pick tolerances.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use chaosep::dynsys::{generate, mix, normalize, LorenzParams, MixSpec, TimeSeries, DEFAULT_INIT};
use chaosep::metrics::{optimal_zeta, scaling_floor};
use chaosep::readout::train_ridge;
use chaosep::reservoir::{build_weights, spectral_radius, Driver, ReservoirConfig, StateTrajectory};
use chaosep::sparse::CsrMatrix;
use chaosep::wiener::{apply, build_wiener, WienerFilter};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn series(v: Vec<f64>) -> TimeSeries {
    TimeSeries::new(v, 0.05).unwrap()
}

pub fn uniform_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| r.gen_range(-1.0..1.0))
}

/// Largest relative entry difference between the ridge solver and the dense
/// normal-equations solution `S Rᵀ (R Rᵀ + reg I)⁻¹`.
pub fn ridge_vs_normal_equations(seed: u64, n: usize, t: usize, outputs: usize, reg: f64) -> f64 {
    let mut r = rng(seed);
    let states = uniform_matrix(&mut r, n, t);
    let targets = uniform_matrix(&mut r, outputs, t);
    let traj = StateTrajectory { states: states.clone(), dt: 0.05 };
    let w = train_ridge(&traj, &targets, reg).unwrap().w_out;

    let gram = &states * states.transpose() + DMatrix::identity(n, n) * reg;
    let rhs = &states * targets.transpose();
    let oracle = gram.lu().solve(&rhs).unwrap().transpose();
    let scale = oracle.amax().max(f64::MIN_POSITIVE);
    (w - oracle).amax() / scale
}

/// |ζ* − argmin over a 1e-5 grid| for a random correlated pair.
pub fn zeta_vs_grid(seed: u64, n: usize) -> f64 {
    let mut r = rng(seed);
    let c = r.gen_range(-1.5..1.5);
    let u: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
    let s: Vec<f64> = u.iter().map(|v| c * v + r.gen_range(-0.5..0.5)).collect();
    let (s, u) = (series(s), series(u));
    let zeta = optimal_zeta(&s, &u).unwrap();

    let cost = |z: f64| -> f64 {
        s.samples.iter().zip(&u.samples).map(|(a, b)| (a - z * b).powi(2)).sum::<f64>()
    };
    let step = 1e-5;
    let (mut best, mut best_cost) = (0.0, f64::INFINITY);
    let mut k = -200_000i64;
    while k <= 200_000 {
        let z = k as f64 * step;
        let v = cost(z);
        if v < best_cost {
            best = z;
            best_cost = v;
        }
        k += 1;
    }
    (zeta - best).abs()
}

/// Normalized Lorenz x components of two independent runs, p2 = 1.2·p1.
pub fn lorenz_pair(n: usize, seed: u64) -> (TimeSeries, TimeSeries) {
    let a = generate(&LorenzParams::classic(), DEFAULT_INIT, n, 1000, Some(2 * seed + 1)).unwrap();
    let b = generate(&LorenzParams::classic().scaled(1.2), DEFAULT_INIT, n, 1000, Some(2 * seed + 2))
        .unwrap();
    (normalize(&a.x).unwrap(), normalize(&b.x).unwrap())
}

/// |min_ζ⟨(s1 − ζu)²⟩ − (1 − α)| for each α.
pub fn denominator_gap(s1: &TimeSeries, s2: &TimeSeries, alphas: &[f64]) -> Vec<f64> {
    alphas
        .iter()
        .map(|&alpha| {
            let u = mix(s1, s2, MixSpec::new(alpha).unwrap()).unwrap();
            let (den, _) = scaling_floor(s1, &u).unwrap();
            (den - (1.0 - alpha)).abs()
        })
        .collect()
}

/// Max modulus of the eigenvalues, from nalgebra's dense Schur form.
pub fn dense_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// |power-iteration radius − dense radius| / dense radius on a random dense
/// matrix.
pub fn radius_gap_dense(seed: u64, n: usize) -> f64 {
    let mut r = rng(seed);
    let m = uniform_matrix(&mut r, n, n);
    let dense = dense_radius(&m);
    let est = spectral_radius(&CsrMatrix::from_dense(&m)).unwrap();
    (est - dense).abs() / dense
}

/// Realized radius of a built reservoir, checked against the dense solver.
/// Returns (|dense − target|, |dense − realized|).
pub fn radius_gap_reservoir(cfg: &ReservoirConfig) -> (f64, f64) {
    let w = build_weights(cfg, 1).unwrap();
    let dense = dense_radius(&w.w_res.to_dense());
    ((dense - cfg.spectral_radius).abs(), (dense - w.realized_radius).abs())
}

/// Max |r_a − r_b| after driving two different initial states through the
/// same `washout` inputs.
pub fn washout_gap(cfg: &ReservoirConfig, input: &[f64]) -> f64 {
    let w = build_weights(cfg, 1).unwrap();
    let mut r = rng(cfg.seed ^ 0x5eed);
    let n = cfg.n_nodes;
    let init_a: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
    let init_b: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
    let mut a = Driver::new(&w, cfg).with_state(init_a);
    let mut b = Driver::new(&w, cfg).with_state(init_b);
    a.skip(input);
    b.skip(input);
    a.state().iter().zip(b.state()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// AR(2) with poles at radius `rho`, angle `theta`, scaled to unit variance.
pub fn ar2(n: usize, rho: f64, theta: f64, r: &mut ChaCha8Rng) -> TimeSeries {
    let (a1, a2) = (2.0 * rho * theta.cos(), -rho * rho);
    let mut x = vec![0.0; n + 1000];
    for t in 2..x.len() {
        x[t] = a1 * x[t - 1] + a2 * x[t - 2] + r.gen_range(-1.0..1.0);
    }
    normalize(&series(x.split_off(1000))).unwrap()
}

fn filtered_mse(h: &WienerFilter, u: &TimeSeries, s: &TimeSeries) -> f64 {
    let y = apply(h, u);
    let m = h.edge_margin();
    let n = u.len();
    (m..n - m).map(|t| (y.samples[t] - s.samples[t]).powi(2)).sum::<f64>() / (n - 2 * m) as f64
}

/// Builds the Wiener filter on a stationary two-band surrogate and counts
/// how many of `trials` random tap perturbations of relative size `eps`
/// increase the held-out MSE.
pub fn wiener_perturbation_wins(seed: u64, trials: usize, eps: f64) -> usize {
    let mut r = rng(seed);
    let n = 100_000;
    let alpha = 0.5;
    let mk = |r: &mut ChaCha8Rng| {
        let s1 = ar2(2 * n, 0.97, 0.2, r);
        let s2 = ar2(2 * n, 0.9, 1.2, r);
        let u = mix(&s1, &s2, MixSpec::new(alpha).unwrap()).unwrap();
        (s1, u)
    };
    let (s1, u) = mk(&mut r);
    let (s1_train, s1_test) = (s1.slice(0..n).unwrap(), s1.slice(n..2 * n).unwrap());
    let (u_train, u_test) = (u.slice(0..n).unwrap(), u.slice(n..2 * n).unwrap());
    let h = build_wiener(&u_train, &s1_train).unwrap();
    let base = filtered_mse(&h, &u_test, &s1_test);
    let norm = h.h.iter().map(|v| v * v).sum::<f64>().sqrt();
    (0..trials)
        .filter(|_| {
            let d: Vec<f64> = (0..h.h.len()).map(|_| r.gen_range(-1.0..1.0)).collect();
            let dn = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            let taps = h.h.iter().zip(&d).map(|(a, b)| a + eps * norm * b / dn).collect();
            let p = WienerFilter { h: taps, seg_len: h.seg_len };
            filtered_mse(&p, &u_test, &s1_test) > base
        })
        .count()
}
