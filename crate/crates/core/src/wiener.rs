//! Noncausal FIR Wiener filter estimated from data.
//!
//! Spectra are Welch estimates: the series are cut into Hann-windowed
//! segments of `seg_len` samples overlapping by `overlap`, and the
//! periodograms `conj(X)·Y` are averaged. The transfer function is
//! `H = P_us / P_uu`; its inverse DFT, rotated so that lag zero sits at index
//! `seg_len / 2`, is the impulse response used for filtering.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::dynsys::{check_dt, TimeSeries};
use crate::error::{invalid, Error, Result};

pub const DEFAULT_SEG_LEN: usize = 500;
pub const DEFAULT_OVERLAP: usize = DEFAULT_SEG_LEN / 2;
/// P_uu is floored at this fraction of its maximum before division.
pub const DENOMINATOR_FLOOR: f64 = 1e-8;

const HERMITIAN_TOL: f64 = 1e-9;
const IMAG_TOL: f64 = 1e-10;

/// Two-sided spectrum on the `seg_len`-point DFT grid.
///
/// Bin `k` sits at frequency `k / (seg_len · dt)`; bins above `seg_len / 2`
/// are the negative frequencies. Values are densities per unit frequency,
/// so `Σ_k P[k] · df` is the total power.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumEstimate {
    pub values: Vec<Complex64>,
    pub seg_len: usize,
    pub dt: f64,
    /// Number of averaged segments (0 for derived spectra such as H).
    pub segments: usize,
}

impl SpectrumEstimate {
    pub fn df(&self) -> f64 {
        1.0 / (self.seg_len as f64 * self.dt)
    }

    /// Signed frequency of bin `k`.
    pub fn frequency(&self, k: usize) -> f64 {
        let l = self.seg_len as isize;
        let k = k as isize;
        let signed = if k > l / 2 { k - l } else { k };
        signed as f64 * self.df()
    }

    /// Nonnegative-frequency half: `(frequency, value)` for bins `0..=L/2`.
    pub fn one_sided(&self) -> impl Iterator<Item = (f64, Complex64)> + '_ {
        (0..=self.seg_len / 2).map(move |k| (k as f64 * self.df(), self.values[k]))
    }

    /// Real parts, i.e. the PSD when this is an auto-spectrum.
    pub fn real(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    /// `Σ_k P[k] · df`; equals the mean power for an auto-spectrum.
    pub fn total_power(&self) -> f64 {
        self.values.iter().map(|v| v.re).sum::<f64>() * self.df()
    }

    fn same_grid(&self, other: &SpectrumEstimate) -> Result<()> {
        if self.seg_len != other.seg_len || self.values.len() != other.values.len() {
            return Err(Error::LengthMismatch {
                what: "spectrum grids",
                left: self.seg_len,
                right: other.seg_len,
            });
        }
        check_dt(self.dt, other.dt)
    }
}

/// Symmetric Hann window, `0.5·(1 − cos(2πn/(L−1)))`.
pub fn hann_window(len: usize) -> Result<Vec<f64>> {
    if len < 2 {
        return Err(invalid("seg_len", "Hann window needs at least 2 points"));
    }
    let denom = (len - 1) as f64;
    Ok((0..len)
        .map(|n| 0.5 * (1.0 - (2.0 * PI * n as f64 / denom).cos()))
        .collect())
}

/// Welch cross-spectral density: segment average of `conj(X)·Y`.
pub fn welch_csd(
    x: &TimeSeries,
    y: &TimeSeries,
    seg_len: usize,
    overlap: usize,
) -> Result<SpectrumEstimate> {
    x.check_aligned(y, "welch inputs")?;
    if overlap >= seg_len {
        return Err(invalid("overlap", format!("must be < seg_len ({seg_len})")));
    }
    if x.len() < seg_len {
        return Err(Error::TooShort {
            what: "welch segment",
            needed: seg_len,
            got: x.len(),
        });
    }
    let window = hann_window(seg_len)?;
    let win_power: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(seg_len);
    let same = std::ptr::eq(x, y) || x.samples == y.samples;

    let step = seg_len - overlap;
    let mut acc = vec![Complex64::new(0.0, 0.0); seg_len];
    let mut bx = vec![Complex64::new(0.0, 0.0); seg_len];
    let mut by = vec![Complex64::new(0.0, 0.0); seg_len];
    let mut segments = 0usize;
    let mut start = 0usize;
    while start + seg_len <= x.len() {
        for i in 0..seg_len {
            bx[i] = Complex64::new(window[i] * x.samples[start + i], 0.0);
        }
        fft.process(&mut bx);
        if same {
            for (a, v) in acc.iter_mut().zip(&bx) {
                *a += Complex64::new(v.norm_sqr(), 0.0);
            }
        } else {
            for i in 0..seg_len {
                by[i] = Complex64::new(window[i] * y.samples[start + i], 0.0);
            }
            fft.process(&mut by);
            for ((a, vx), vy) in acc.iter_mut().zip(&bx).zip(&by) {
                *a += vx.conj() * vy;
            }
        }
        segments += 1;
        start += step;
    }
    let fs = 1.0 / x.dt;
    let scale = 1.0 / (segments as f64 * fs * win_power);
    Ok(SpectrumEstimate {
        values: acc.into_iter().map(|v| v * scale).collect(),
        seg_len,
        dt: x.dt,
        segments,
    })
}

/// Welch power spectral density; real and nonnegative.
pub fn welch_psd(x: &TimeSeries, seg_len: usize, overlap: usize) -> Result<SpectrumEstimate> {
    welch_csd(x, x, seg_len, overlap)
}

/// `H = P_us / P_uu` with P_uu floored at [`DENOMINATOR_FLOOR`] × max(P_uu).
pub fn wiener_transfer(p_us: &SpectrumEstimate, p_uu: &SpectrumEstimate) -> Result<SpectrumEstimate> {
    p_us.same_grid(p_uu)?;
    let max = p_uu.values.iter().map(|v| v.re).fold(0.0, f64::max);
    let floor = (DENOMINATOR_FLOOR * max).max(f64::MIN_POSITIVE);
    Ok(SpectrumEstimate {
        values: p_us
            .values
            .iter()
            .zip(&p_uu.values)
            .map(|(n, d)| n / d.re.max(floor))
            .collect(),
        seg_len: p_us.seg_len,
        dt: p_us.dt,
        segments: 0,
    })
}

/// Real FIR filter with lag zero at index `seg_len / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerFilter {
    pub h: Vec<f64>,
    pub seg_len: usize,
}

impl WienerFilter {
    /// Samples at each end of a filtered series that see zero padding.
    pub fn edge_margin(&self) -> usize {
        self.seg_len / 2
    }

    /// Lag (in samples) of tap `i`.
    pub fn lag(&self, i: usize) -> isize {
        i as isize - (self.seg_len / 2) as isize
    }

    /// A pass-through filter.
    pub fn identity(seg_len: usize) -> Self {
        let mut h = vec![0.0; seg_len];
        h[seg_len / 2] = 1.0;
        Self { h, seg_len }
    }

    /// DFT of the taps back onto the grid, i.e. the realized transfer function.
    pub fn frequency_response(&self) -> Vec<Complex64> {
        let l = self.seg_len;
        let mut buf: Vec<Complex64> = (0..l)
            .map(|k| Complex64::new(self.h[(k + l / 2) % l], 0.0))
            .collect();
        FftPlanner::<f64>::new().plan_fft_forward(l).process(&mut buf);
        buf
    }
}

/// Inverse DFT of a Hermitian transfer function, centered.
pub fn impulse_response(h: &SpectrumEstimate) -> Result<WienerFilter> {
    let l = h.seg_len;
    let scale = h.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut asym = 0.0f64;
    for k in 0..l {
        let mirror = h.values[(l - k) % l].conj();
        asym = asym.max((h.values[k] - mirror).norm());
    }
    if scale > 0.0 && asym > HERMITIAN_TOL * scale {
        return Err(Error::NotHermitian(asym / scale));
    }
    let mut buf = h.values.clone();
    FftPlanner::<f64>::new().plan_fft_inverse(l).process(&mut buf);
    let inv = 1.0 / l as f64;
    let max_im = buf.iter().map(|v| (v.im * inv).abs()).fold(0.0, f64::max);
    if max_im > IMAG_TOL * scale.max(1.0) {
        return Err(Error::NotHermitian(max_im));
    }
    let mut taps = vec![0.0; l];
    for (n, v) in buf.iter().enumerate() {
        taps[(n + l / 2) % l] = v.re * inv;
    }
    Ok(WienerFilter { h: taps, seg_len: l })
}

/// Same-length noncausal convolution `y(t) = Σ_τ h(τ)·u(t − τ)`, zero-padded
/// outside the series.
pub fn apply(f: &WienerFilter, u: &TimeSeries) -> TimeSeries {
    let n = u.len() as isize;
    let center = (f.seg_len / 2) as isize;
    let samples = (0..n)
        .map(|t| {
            let mut acc = 0.0;
            for (i, &hi) in f.h.iter().enumerate() {
                let src = t - (i as isize - center);
                if (0..n).contains(&src) {
                    acc += hi * u.samples[src as usize];
                }
            }
            acc
        })
        .collect();
    TimeSeries {
        samples,
        dt: u.dt,
        norm: None,
    }
}

/// Wiener filter from aligned training series with the default Welch settings.
pub fn build_wiener(u_train: &TimeSeries, s_train: &TimeSeries) -> Result<WienerFilter> {
    build_wiener_with(u_train, s_train, DEFAULT_SEG_LEN, DEFAULT_SEG_LEN / 2)
}

pub fn build_wiener_with(
    u_train: &TimeSeries,
    s_train: &TimeSeries,
    seg_len: usize,
    overlap: usize,
) -> Result<WienerFilter> {
    let p_us = welch_csd(u_train, s_train, seg_len, overlap)?;
    let p_uu = welch_psd(u_train, seg_len, overlap)?;
    impulse_response(&wiener_transfer(&p_us, &p_uu)?)
}
