//! Readout banks trained on a grid of mixing fractions, and separation by
//! interpolating between the two bank entries that bracket an estimated α.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynsys::{MixSpec, TimeSeries};
use crate::error::{invalid, Error, Result};
use crate::metrics::{normalized_error, Estimator};
use crate::readout::{interpolate, ReadoutWeights};
use crate::reservoir::Reservoir;

use super::alpha::{estimate_alpha, AlphaEstimate, AlphaEstimator};
use super::{train_readouts, ComponentPair, ScenarioSpec, HARVEST_BLOCK};

/// Readouts on one reservoir, sorted by their training α.
#[derive(Debug, Clone)]
pub struct ReadoutBank {
    pub alphas: Vec<f64>,
    pub readouts: Vec<ReadoutWeights>,
    pub reservoir: u64,
}

impl ReadoutBank {
    pub fn new(mut entries: Vec<ReadoutWeights>, reservoir: u64) -> Result<Self> {
        if entries.is_empty() {
            return Err(invalid("bank", "needs at least one readout"));
        }
        for r in &entries {
            if r.trained_alpha.is_none() {
                return Err(invalid("bank", "every readout needs its training α"));
            }
            if r.reservoir.is_some_and(|fp| fp != reservoir) {
                return Err(Error::ReservoirMismatch {
                    left: r.reservoir.unwrap_or_default(),
                    right: reservoir,
                });
            }
        }
        entries.sort_by(|a, b| a.trained_alpha.unwrap().total_cmp(&b.trained_alpha.unwrap()));
        Ok(Self {
            alphas: entries.iter().map(|r| r.trained_alpha.unwrap()).collect(),
            readouts: entries,
            reservoir,
        })
    }

    /// Largest gap between neighbouring bank entries.
    pub fn max_spacing(&self) -> f64 {
        self.alphas.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Readout for α = q: the bank entry itself on a grid point, the
    /// interpolation of the bracketing pair inside the hull, and the nearest
    /// endpoint outside it.
    pub fn readout_for(&self, q: f64) -> Result<ReadoutWeights> {
        let (first, last) = (self.alphas[0], *self.alphas.last().unwrap());
        if q <= first {
            return Ok(self.readouts[0].clone());
        }
        if q >= last {
            return Ok(self.readouts.last().unwrap().clone());
        }
        if let Some(i) = self.alphas.iter().position(|&a| a == q) {
            return Ok(self.readouts[i].clone());
        }
        let hi = self.alphas.partition_point(|&a| a < q);
        interpolate(&self.readouts[hi - 1], &self.readouts[hi], q)
    }
}

/// Trains one readout per α in `alphas` on the data of `pair`.
pub fn train_readout_bank(
    spec: &ScenarioSpec,
    reservoir: &Reservoir,
    pair: &ComponentPair,
    alphas: &[f64],
) -> Result<ReadoutBank> {
    let mixtures: Vec<TimeSeries> = alphas.iter().map(|&a| pair.mixture(a)).collect::<Result<_>>()?;
    let pairs: Vec<(&TimeSeries, &TimeSeries)> = mixtures.iter().map(|u| (u, &pair.s1)).collect();
    let readouts = train_readouts(reservoir, &pairs, pair.train_range(), pair.washout(), spec.ridge_reg)?
        .into_iter()
        .zip(alphas)
        .map(|(r, &a)| r.with_alpha(a))
        .collect();
    ReadoutBank::new(readouts, reservoir.fingerprint())
}

/// Outputs of several readouts on one input: the reservoir is driven once.
pub fn predict_readouts(
    reservoir: &Reservoir,
    readouts: &[&ReadoutWeights],
    u: &TimeSeries,
    window: Range<usize>,
    washout: usize,
) -> Result<Vec<TimeSeries>> {
    for r in readouts {
        if let Some(fp) = r.reservoir.filter(|&fp| fp != reservoir.fingerprint()) {
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
    let start = window.start.checked_sub(washout).ok_or(Error::TooShort {
        what: "washout before prediction window",
        needed: washout,
        got: window.start,
    })?;
    let mut driver = reservoir.driver();
    driver.skip(&u.samples[start..window.start]);
    let mut outs = vec![Vec::with_capacity(window.len()); readouts.len()];
    driver.harvest(&u.samples[window], HARVEST_BLOCK, |_, blk| {
        for (o, r) in outs.iter_mut().zip(readouts) {
            o.extend(r.predict_block(blk));
        }
        Ok(())
    })?;
    outs.into_iter().map(|o| TimeSeries::new(o, u.dt)).collect()
}

#[derive(Debug, Clone)]
pub struct UnknownSeparation {
    pub estimate: AlphaEstimate,
    pub prediction: TimeSeries,
}

/// Two-stage separation: estimate α from `u`, then apply the bank readout
/// for that estimate to the reservoir response over `window`.
pub fn separate_unknown(
    est: &AlphaEstimator,
    bank: &ReadoutBank,
    reservoir: &Reservoir,
    u: &TimeSeries,
    window: Range<usize>,
    washout: usize,
) -> Result<UnknownSeparation> {
    if bank.reservoir != reservoir.fingerprint() {
        return Err(Error::ReservoirMismatch {
            left: bank.reservoir,
            right: reservoir.fingerprint(),
        });
    }
    let estimate = estimate_alpha(est, &u.slice(window.clone())?)?;
    let readout = bank.readout_for(estimate.corrected)?;
    let prediction = predict_readouts(reservoir, &[&readout], u, window, washout)?
        .pop()
        .expect("one readout");
    Ok(UnknownSeparation { estimate, prediction })
}

/// Direct versus interpolated error at one query α.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterpRow {
    /// Bank spacing around `q` (fixed-bank rows carry `hi − lo`).
    pub spacing: f64,
    pub q: f64,
    pub seed: u64,
    pub direct: f64,
    pub interpolated: f64,
    /// interpolated / direct.
    pub ratio: f64,
}

/// Rows are ordered by (spacing, q, seed).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InterpTable {
    pub rows: Vec<InterpRow>,
}

impl InterpTable {
    /// Seed-averaged (spacing, q, direct, interpolated, ratio of means).
    pub fn summary(&self) -> Vec<InterpRow> {
        let mut out: Vec<InterpRow> = Vec::new();
        let mut i = 0;
        while i < self.rows.len() {
            let key = (self.rows[i].spacing, self.rows[i].q);
            let group: Vec<&InterpRow> = self.rows[i..]
                .iter()
                .take_while(|r| (r.spacing, r.q) == key)
                .collect();
            let n = group.len() as f64;
            let direct = group.iter().map(|r| r.direct).sum::<f64>() / n;
            let interpolated = group.iter().map(|r| r.interpolated).sum::<f64>() / n;
            out.push(InterpRow {
                spacing: key.0,
                q: key.1,
                seed: group[0].seed,
                direct,
                interpolated,
                ratio: interpolated / direct,
            });
            i += group.len();
        }
        out
    }
}

/// One query: direct readout trained at `q` against the interpolation of
/// readouts trained at `lo` and `hi`.
#[derive(Debug, Clone, Copy)]
struct Query {
    spacing: f64,
    q: f64,
    lo: f64,
    hi: f64,
}

fn run_queries(spec: &ScenarioSpec, queries: &[Query], seeds: &[u64]) -> Result<InterpTable> {
    spec.validate()?;
    for qu in queries {
        for a in [qu.q, qu.lo, qu.hi] {
            MixSpec::new(a)?;
        }
        if !(qu.lo <= qu.q && qu.q <= qu.hi) {
            return Err(invalid("q", format!("{} outside [{}, {}]", qu.q, qu.lo, qu.hi)));
        }
    }
    let mut alphas: Vec<f64> = queries.iter().flat_map(|qu| [qu.q, qu.lo, qu.hi]).collect();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();

    let per_seed: Vec<Vec<InterpRow>> = seeds
        .par_iter()
        .map(|&seed| {
            let reservoir = Reservoir::new(spec.reservoir_for(seed))?;
            let pair = ComponentPair::generate(spec, seed)?;
            let bank = train_readout_bank(spec, &reservoir, &pair, &alphas)?;
            let at = |a: f64| &bank.readouts[bank.alphas.iter().position(|&x| x == a).unwrap()];
            let test = pair.test_range();
            let actual = pair.s1.slice(test.clone())?;
            let mut rows = Vec::with_capacity(queries.len());
            for qu in queries {
                let u = pair.mixture(qu.q)?;
                let mixed = interpolate(at(qu.lo), at(qu.hi), qu.q)?;
                let preds =
                    predict_readouts(&reservoir, &[at(qu.q), &mixed], &u, test.clone(), pair.washout())?;
                let u_test = u.slice(test.clone())?;
                let e = |p: &TimeSeries| -> Result<f64> {
                    normalized_error(&actual, p, &u_test, Estimator::Reservoir)?
                        .e_normalized
                        .ok_or(Error::ZeroDenominator)
                };
                let (direct, interpolated) = (e(&preds[0])?, e(&preds[1])?);
                rows.push(InterpRow {
                    spacing: qu.spacing,
                    q: qu.q,
                    seed,
                    direct,
                    interpolated,
                    ratio: interpolated / direct,
                });
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<InterpRow> = per_seed.into_iter().flatten().collect();
    rows.sort_by(|a, b| {
        a.spacing
            .total_cmp(&b.spacing)
            .then(a.q.total_cmp(&b.q))
            .then(a.seed.cmp(&b.seed))
    });
    Ok(InterpTable { rows })
}

/// For each spacing Δ, the readout trained at `center` against the average of
/// readouts trained at `center ± Δ/2`.
pub fn interpolation_study(
    spec: &ScenarioSpec,
    center: f64,
    spacings: &[f64],
    seeds: &[u64],
) -> Result<InterpTable> {
    let queries: Vec<Query> = spacings
        .iter()
        .map(|&d| {
            if !(d >= 0.0) {
                return Err(invalid("spacing", "must be >= 0"));
            }
            Ok(Query {
                spacing: d,
                q: center,
                lo: center - d / 2.0,
                hi: center + d / 2.0,
            })
        })
        .collect::<Result<_>>()?;
    run_queries(spec, &queries, seeds)
}

/// Readouts trained directly at each q against interpolation between a
/// fixed pair trained at `lo` and `hi`.
pub fn range_study(
    spec: &ScenarioSpec,
    lo: f64,
    hi: f64,
    qs: &[f64],
    seeds: &[u64],
) -> Result<InterpTable> {
    if !(lo < hi) {
        return Err(invalid("bank", "needs lo < hi"));
    }
    let queries: Vec<Query> = qs
        .iter()
        .map(|&q| Query {
            spacing: hi - lo,
            q,
            lo,
            hi,
        })
        .collect();
    run_queries(spec, &queries, seeds)
}

/// Interpolation at the midpoint of each consecutive pair of `grid`, with
/// one bank per seed covering the whole grid.
pub fn midpoint_study(spec: &ScenarioSpec, grid: &[f64], seeds: &[u64]) -> Result<InterpTable> {
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid("grid", "needs at least two increasing points"));
    }
    let queries: Vec<Query> = grid
        .windows(2)
        .map(|w| Query {
            spacing: w[1] - w[0],
            q: 0.5 * (w[0] + w[1]),
            lo: w[0],
            hi: w[1],
        })
        .collect();
    run_queries(spec, &queries, seeds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::tests::tiny_spec;
    use crate::pipeline::ScenarioKind;

    #[test]
    fn zero_spacing_gives_ratio_one() {
        let spec = tiny_spec(ScenarioKind::DiffParams);
        let t = interpolation_study(&spec, 0.5, &[0.0], &[1]).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0].ratio, 1.0);
    }

    #[test]
    fn bank_lookup_rules() {
        let spec = tiny_spec(ScenarioKind::DiffParams);
        let reservoir = Reservoir::new(spec.reservoir_for(2)).unwrap();
        let pair = ComponentPair::generate(&spec, 2).unwrap();
        let bank = train_readout_bank(&spec, &reservoir, &pair, &[0.6, 0.2, 0.4]).unwrap();
        assert_eq!(bank.alphas, vec![0.2, 0.4, 0.6]);
        assert!((bank.max_spacing() - 0.2).abs() < 1e-12);
        assert_eq!(bank.readout_for(0.4).unwrap(), bank.readouts[1]);
        assert_eq!(bank.readout_for(-0.3).unwrap(), bank.readouts[0]);
        assert_eq!(bank.readout_for(0.9).unwrap(), bank.readouts[2]);
        let mid = bank.readout_for(0.3).unwrap();
        let expect = (&bank.readouts[0].w_out + &bank.readouts[1].w_out) * 0.5;
        assert!((mid.w_out - &expect).amax() <= 1e-12 * expect.amax());
    }

    #[test]
    fn bank_rejects_foreign_readouts() {
        let spec = tiny_spec(ScenarioKind::DiffParams);
        let reservoir = Reservoir::new(spec.reservoir_for(2)).unwrap();
        let pair = ComponentPair::generate(&spec, 2).unwrap();
        let bank = train_readout_bank(&spec, &reservoir, &pair, &[0.5]).unwrap();
        let other = Reservoir::new(spec.reservoir_for(3)).unwrap();
        assert!(matches!(
            ReadoutBank::new(bank.readouts.clone(), other.fingerprint()),
            Err(Error::ReservoirMismatch { .. })
        ));
    }

    #[test]
    fn predict_readouts_matches_predict_window() {
        let spec = tiny_spec(ScenarioKind::DiffSpeed);
        let reservoir = Reservoir::new(spec.reservoir_for(5)).unwrap();
        let pair = ComponentPair::generate(&spec, 5).unwrap();
        let bank = train_readout_bank(&spec, &reservoir, &pair, &[0.3, 0.7]).unwrap();
        let u = pair.mixture(0.3).unwrap();
        let many = predict_readouts(
            &reservoir,
            &[&bank.readouts[0], &bank.readouts[1]],
            &u,
            pair.test_range(),
            pair.washout(),
        )
        .unwrap();
        let one = super::super::predict_window(&reservoir, &bank.readouts[1], &u, pair.test_range(), pair.washout())
            .unwrap();
        assert_eq!(many[1], one);
    }

    #[test]
    fn midpoints_of_grid() {
        let spec = tiny_spec(ScenarioKind::DiffParams);
        let t = midpoint_study(&spec, &[0.2, 0.4, 0.8], &[1]).unwrap();
        let qs: Vec<f64> = t.rows.iter().map(|r| r.q).collect();
        assert_eq!(qs, vec![0.30000000000000004, 0.6000000000000001]);
        assert!((t.rows[1].spacing - 0.4).abs() < 1e-12);
        assert!(midpoint_study(&spec, &[0.5], &[1]).is_err());
        assert!(midpoint_study(&spec, &[0.5, 0.4], &[1]).is_err());
    }

    #[test]
    fn summary_averages_seeds() {
        let t = InterpTable {
            rows: vec![
                InterpRow { spacing: 0.1, q: 0.5, seed: 0, direct: 1.0, interpolated: 1.2, ratio: 1.2 },
                InterpRow { spacing: 0.1, q: 0.5, seed: 1, direct: 3.0, interpolated: 3.0, ratio: 1.0 },
                InterpRow { spacing: 0.2, q: 0.5, seed: 0, direct: 1.0, interpolated: 2.0, ratio: 2.0 },
            ],
        };
        let s = t.summary();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].direct, 2.0);
        assert!((s[0].ratio - 1.05).abs() < 1e-12);
    }
}
