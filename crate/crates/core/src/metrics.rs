//! Normalized separation errors and spectral comparison.
//!
//! Every error is reported relative to the best that plain rescaling of the
//! mixture can do:
//!
//! ```text
//! E = ⟨(s1 − ŝ)²⟩ / min_ζ ⟨(s1 − ζ·u)²⟩
//! ```
//!
//! so `E = 1` means the estimator is no better than scaling its input.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dynsys::TimeSeries;
use crate::error::{Error, Result};
use crate::wiener::{welch_psd, SpectrumEstimate};

/// Which estimator produced ŝ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Reservoir,
    Wiener,
    /// ζ*·u, the reference in the denominator.
    Scaling,
}

impl Estimator {
    pub fn as_str(&self) -> &'static str {
        match self {
            Estimator::Reservoir => "rc",
            Estimator::Wiener => "wiener",
            Estimator::Scaling => "scaling",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// `None` when the denominator vanishes (α = 1).
    pub e_normalized: Option<f64>,
    pub e_numerator: f64,
    pub denominator: f64,
    pub zeta_star: f64,
    pub n_samples: usize,
    pub tag: Estimator,
}

fn mean_product(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64
}

/// ζ* = ⟨s1·u⟩ / ⟨u²⟩, the minimizer of ⟨(s1 − ζu)²⟩.
pub fn optimal_zeta(s1: &TimeSeries, u: &TimeSeries) -> Result<f64> {
    s1.check_aligned(u, "optimal_zeta inputs")?;
    let uu = mean_product(&u.samples, &u.samples);
    if !(uu > 0.0) {
        return Err(Error::ZeroDenominator);
    }
    Ok(mean_product(&s1.samples, &u.samples) / uu)
}

/// min_ζ ⟨(s1 − ζu)²⟩ and the minimizing ζ.
pub fn scaling_floor(s1: &TimeSeries, u: &TimeSeries) -> Result<(f64, f64)> {
    let zeta = optimal_zeta(s1, u)?;
    let d = s1
        .samples
        .iter()
        .zip(&u.samples)
        .map(|(s, v)| (s - zeta * v).powi(2))
        .sum::<f64>()
        / s1.len() as f64;
    Ok((d, zeta))
}

/// Mean-square error of `s_hat` normalized by the rescaled-input floor.
pub fn normalized_error(
    s1: &TimeSeries,
    s_hat: &TimeSeries,
    u: &TimeSeries,
    tag: Estimator,
) -> Result<ErrorReport> {
    s1.check_aligned(s_hat, "normalized_error estimate")?;
    if s1.is_empty() {
        return Err(Error::TooShort {
            what: "normalized_error",
            needed: 1,
            got: 0,
        });
    }
    let (denominator, zeta_star) = scaling_floor(s1, u)?;
    let numerator = s1
        .samples
        .iter()
        .zip(&s_hat.samples)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / s1.len() as f64;
    let power = mean_product(&s1.samples, &s1.samples);
    let defined = denominator > 1e-12 * power.max(f64::MIN_POSITIVE);
    Ok(ErrorReport {
        e_normalized: defined.then(|| numerator / denominator),
        e_numerator: numerator,
        denominator,
        zeta_star,
        n_samples: s1.len(),
        tag,
    })
}

/// Like [`normalized_error`] but ignores `margin` samples at each end, e.g.
/// the zero-padded edges of a filtered series.
pub fn normalized_error_trimmed(
    s1: &TimeSeries,
    s_hat: &TimeSeries,
    u: &TimeSeries,
    tag: Estimator,
    margin: usize,
) -> Result<ErrorReport> {
    let n = s1.len();
    if 2 * margin >= n {
        return Err(Error::TooShort {
            what: "trimmed error window",
            needed: 2 * margin + 1,
            got: n,
        });
    }
    let r = margin..n - margin;
    normalized_error(&s1.slice(r.clone())?, &s_hat.slice(r.clone())?, &u.slice(r)?, tag)
}

/// Two PSDs on a common grid plus their normalized inner product.
#[derive(Debug, Clone)]
pub struct PsdOverlay {
    pub first: SpectrumEstimate,
    pub second: SpectrumEstimate,
    /// `⟨P1, P2⟩ / (‖P1‖·‖P2‖)` over the nonnegative frequencies.
    pub overlap: f64,
}

pub fn psd_overlay(z1: &TimeSeries, z2: &TimeSeries, seg_len: usize) -> Result<PsdOverlay> {
    let first = welch_psd(z1, seg_len, seg_len / 2)?;
    let second = welch_psd(z2, seg_len, seg_len / 2)?;
    let a: Vec<f64> = first.one_sided().map(|(_, v)| v.re).collect();
    let b: Vec<f64> = second.one_sided().map(|(_, v)| v.re).collect();
    let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let overlap = if na > 0.0 && nb > 0.0 { dot / (na * nb) } else { 0.0 };
    Ok(PsdOverlay {
        first,
        second,
        overlap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::{generate, mix, normalize, LorenzParams, MixSpec, DEFAULT_INIT};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn series(v: Vec<f64>) -> TimeSeries {
        TimeSeries::new(v, 0.05).unwrap()
    }

    fn noise(n: usize, seed: u64) -> TimeSeries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        series((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    /// Brute-force minimizer of ⟨(s − ζu)²⟩ over a uniform ζ grid.
    fn grid_zeta(s: &TimeSeries, u: &TimeSeries) -> (f64, f64) {
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=60_000 {
            let z = -3.0 + i as f64 * 1e-4;
            let e = s
                .samples
                .iter()
                .zip(&u.samples)
                .map(|(a, b)| (a - z * b).powi(2))
                .sum::<f64>()
                / s.len() as f64;
            if e < best.0 {
                best = (e, z);
            }
        }
        best
    }

    #[test]
    fn zeta_trivial_cases() {
        let s = noise(100, 1);
        assert_abs_diff_eq!(optimal_zeta(&s, &s).unwrap(), 1.0, epsilon = 1e-15);
        let a = series(vec![1.0, 0.0, -1.0, 0.0]);
        let b = series(vec![0.0, 1.0, 0.0, -1.0]);
        assert_eq!(optimal_zeta(&a, &b).unwrap(), 0.0);
        let z = series(vec![0.0; 4]);
        assert!(matches!(optimal_zeta(&a, &z), Err(Error::ZeroDenominator)));
    }

    #[test]
    fn zeta_matches_grid_search() {
        let s = noise(500, 2);
        let n = noise(500, 3);
        let u = series(
            s.samples
                .iter()
                .zip(&n.samples)
                .map(|(a, b)| 0.8 * a + 0.5 * b)
                .collect(),
        );
        let (grid_err, grid_z) = grid_zeta(&s, &u);
        let (den, z) = scaling_floor(&s, &u).unwrap();
        assert!((z - grid_z).abs() < 1e-3);
        assert!((den - grid_err).abs() < 1e-3);
    }

    #[test]
    fn error_identities() {
        let s = noise(400, 4);
        let u = series(
            s.samples
                .iter()
                .zip(&noise(400, 5).samples)
                .map(|(a, b)| a + b)
                .collect(),
        );
        let perfect = normalized_error(&s, &s, &u, Estimator::Reservoir).unwrap();
        assert_eq!(perfect.e_normalized, Some(0.0));
        let zeta = optimal_zeta(&s, &u).unwrap();
        let scaled = series(u.samples.iter().map(|v| zeta * v).collect());
        let r = normalized_error(&s, &scaled, &u, Estimator::Scaling).unwrap();
        assert_abs_diff_eq!(r.e_normalized.unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn undefined_when_input_is_target() {
        let s = noise(100, 6);
        let r = normalized_error(&s, &noise(100, 7), &s, Estimator::Wiener).unwrap();
        assert!(r.e_normalized.is_none());
        assert!(r.e_numerator > 0.0);
    }

    #[test]
    fn invariant_under_joint_rescaling() {
        let s = noise(300, 8);
        let h = noise(300, 9);
        let u = series(s.samples.iter().zip(&h.samples).map(|(a, b)| a - 0.4 * b).collect());
        let shat = series(s.samples.iter().zip(&h.samples).map(|(a, b)| a + 0.1 * b).collect());
        let base = normalized_error(&s, &shat, &u, Estimator::Reservoir)
            .unwrap()
            .e_normalized
            .unwrap();
        for c in [-3.0, 0.01, 7.5] {
            let sc = |t: &TimeSeries| series(t.samples.iter().map(|v| c * v).collect());
            let e = normalized_error(&sc(&s), &sc(&shat), &sc(&u), Estimator::Reservoir)
                .unwrap()
                .e_normalized
                .unwrap();
            assert_abs_diff_eq!(e, base, epsilon = 1e-10);
        }
    }

    #[test]
    fn denominator_tends_to_one_minus_alpha() {
        let n = 50_000;
        let a = generate(&LorenzParams::classic(), DEFAULT_INIT, n, 1000, Some(10)).unwrap();
        let b = generate(&LorenzParams::classic().scaled(1.2), DEFAULT_INIT, n, 1000, Some(20))
            .unwrap();
        let s1 = normalize(&a.x).unwrap();
        let s2 = normalize(&b.x).unwrap();
        for alpha in [0.2, 0.5, 0.8] {
            let u = mix(&s1, &s2, MixSpec { alpha }).unwrap();
            let (den, _) = scaling_floor(&s1, &u).unwrap();
            assert!((den - (1.0 - alpha)).abs() < 0.05, "α={alpha}: {den}");
        }
    }

    #[test]
    fn overlay_scores() {
        let z = noise(5000, 11);
        let same = psd_overlay(&z, &z, 500).unwrap();
        assert_abs_diff_eq!(same.overlap, 1.0, epsilon = 1e-12);

        let l = 500.0;
        let tone = |bin: f64| {
            series(
                (0..10_000)
                    .map(|t| (2.0 * std::f64::consts::PI * bin * t as f64 / l).sin())
                    .collect(),
            )
        };
        let apart = psd_overlay(&tone(20.0), &tone(200.0), 500).unwrap();
        assert!(apart.overlap < 0.05, "overlap {}", apart.overlap);
    }
}
