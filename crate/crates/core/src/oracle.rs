//! Brute-force check of the analytic channel model.
//!
//! The two arriving pulses are expanded in a truncated Fock basis, pushed
//! through a 50:50 beamsplitter photon by photon, and the resulting joint
//! photon-number distribution is fed to the same classical misalignment and
//! dark-count layer the analytic model uses. A second route inside this
//! module computes the same distribution from the closed-form coherent
//! output amplitudes `(a ± b)/√2`.

use num_complex::Complex64;

use crate::channel;
use crate::error::{check_non_negative, Error, Result};

/// Largest tail mass a truncated input may discard.
pub const TRUNCATION_LIMIT: f64 = 1e-12;

/// Default cutoff: `max(40, ceil(10 w + 10))`.
pub fn default_cutoff(intensity: f64) -> usize {
    40usize.max((10.0 * intensity + 10.0).ceil() as usize)
}

/// Single-mode state truncated at `n_max` photons.
#[derive(Debug, Clone, PartialEq)]
pub struct FockState {
    pub amplitudes: Vec<Complex64>,
    pub n_max: usize,
    /// Probability mass above `n_max` dropped by the truncation.
    pub tail_mass: f64,
}

impl FockState {
    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn mean_photon_number(&self) -> f64 {
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(n, a)| n as f64 * a.norm_sqr())
            .sum()
    }
}

/// Poisson weights `e^{-w} w^n / n!` for `n` in `0..=n_max`.
fn poisson_weights(intensity: f64, n_max: usize) -> Vec<f64> {
    let mut weights = Vec::with_capacity(n_max + 1);
    let mut term = (-intensity).exp();
    weights.push(term);
    for n in 1..=n_max {
        term *= intensity / n as f64;
        weights.push(term);
    }
    weights
}

/// Poisson mass above `n_max`, summed term by term rather than as `1 - cdf`.
fn poisson_tail(intensity: f64, n_max: usize) -> f64 {
    if intensity == 0.0 {
        return 0.0;
    }
    let mut term = *poisson_weights(intensity, n_max).last().unwrap();
    let mut tail = 0.0;
    let mut n = n_max;
    loop {
        n += 1;
        term *= intensity / n as f64;
        tail += term;
        if term <= tail * 1e-17 || term == 0.0 {
            return tail;
        }
    }
}

/// Coherent state of mean photon number `intensity` with real amplitude.
pub fn coherent_fock(intensity: f64, n_max: usize) -> Result<FockState> {
    check_non_negative("intensity", intensity)?;
    let amplitudes = poisson_weights(intensity, n_max)
        .into_iter()
        .map(|p| Complex64::new(p.sqrt(), 0.0))
        .collect();
    Ok(FockState {
        amplitudes,
        n_max,
        tail_mass: poisson_tail(intensity, n_max),
    })
}

/// Joint photon-number distribution over the two output ports, `prob[k][l]`
/// with `k` photons at L and `l` at R.
#[derive(Debug, Clone)]
pub struct PortDistribution {
    pub prob: Vec<Vec<f64>>,
}

impl PortDistribution {
    pub fn total(&self) -> f64 {
        self.prob.iter().flatten().sum()
    }

    /// Classical detection layer: each photon switches port with probability
    /// `e_d`, then threshold detection with dark counts. Returns `(S_L, S_R)`.
    pub fn exclusive_clicks(&self, p_d: f64, e_d: f64) -> (f64, f64) {
        let mut left_dark = 0.0;
        let mut right_dark = 0.0;
        for (k, row) in self.prob.iter().enumerate() {
            for (l, &p) in row.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                // L empty: all k photons left L, all l photons stayed in R.
                left_dark += p * e_d.powi(k as i32) * (1.0 - e_d).powi(l as i32);
                right_dark += p * (1.0 - e_d).powi(k as i32) * e_d.powi(l as i32);
            }
        }
        let both_dark = self.prob[0][0];
        let keep = 1.0 - p_d;
        let no_click_r = keep * right_dark;
        let no_click_l = keep * left_dark;
        let no_click = keep * keep * both_dark;
        (no_click_r - no_click, no_click_l - no_click)
    }
}

fn check_truncation(state: &FockState, intensity_hint: f64) -> Result<()> {
    if state.tail_mass > TRUNCATION_LIMIT {
        return Err(Error::Truncation {
            intensity: intensity_hint,
            n_max: state.n_max,
            tail: state.tail_mass,
            limit: TRUNCATION_LIMIT,
        });
    }
    Ok(())
}

/// Output distribution of a 50:50 beamsplitter with `a† -> (L† + R†)/√2`,
/// `b† -> (L† - R†)/√2`, computed over the joint Fock basis.
pub fn beamsplitter_output(state_a: &FockState, state_b: &FockState) -> Result<PortDistribution> {
    check_truncation(state_a, state_a.mean_photon_number())?;
    check_truncation(state_b, state_b.mean_photon_number())?;
    let (ma, mb) = (state_a.n_max, state_b.n_max);
    let top = ma + mb;
    let sqrt_fact = sqrt_factorials(top);
    let binom = binomials(ma.max(mb));

    let mut out = vec![vec![Complex64::new(0.0, 0.0); top + 1]; top + 1];
    for (m, &ca) in state_a.amplitudes.iter().enumerate() {
        for (n, &cb) in state_b.amplitudes.iter().enumerate() {
            let amp = ca * cb;
            if amp.norm_sqr() == 0.0 {
                continue;
            }
            let total = m + n;
            let scale = 0.5f64.powf(total as f64 / 2.0) / (sqrt_fact[m] * sqrt_fact[n]);
            // coefficient of L†^k R†^(total-k) in (L† + R†)^m (L† - R†)^n
            let mut poly = vec![0.0f64; total + 1];
            for i in 0..=m {
                for j in 0..=n {
                    let sign = if (n - j) % 2 == 0 { 1.0 } else { -1.0 };
                    poly[i + j] += sign * binom[m][i] * binom[n][j];
                }
            }
            for (k, &c) in poly.iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                let l = total - k;
                out[k][l] += amp * (scale * c * sqrt_fact[k] * sqrt_fact[l]);
            }
        }
    }
    Ok(PortDistribution {
        prob: out
            .into_iter()
            .map(|row| row.into_iter().map(|a| a.norm_sqr()).collect())
            .collect(),
    })
}

/// Exactly-one-click probabilities from the Fock-space propagation.
///
/// Intensities are those arriving at the beamsplitter: the caller folds in
/// the arm transmittance. Only `p_d` and `e_d` of `channel` are used.
pub fn beamsplitter_click_probs(
    state_a: &FockState,
    state_b: &FockState,
    channel: &crate::params::ChannelConfig,
) -> Result<(f64, f64)> {
    Ok(beamsplitter_output(state_a, state_b)?.exclusive_clicks(channel.p_d, channel.e_d))
}

/// Output distribution from the closed-form coherent output amplitudes:
/// the ports carry independent coherent states `(a + b)/√2` and `(a - b)/√2`.
pub fn coherent_output(alpha_a: Complex64, alpha_b: Complex64, n_max: usize) -> PortDistribution {
    let left = (alpha_a + alpha_b) / std::f64::consts::SQRT_2;
    let right = (alpha_a - alpha_b) / std::f64::consts::SQRT_2;
    let pl = poisson_weights(left.norm_sqr(), n_max);
    let pr = poisson_weights(right.norm_sqr(), n_max);
    PortDistribution {
        prob: pl
            .iter()
            .map(|&a| pr.iter().map(|&b| a * b).collect())
            .collect(),
    }
}

fn sqrt_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 1.0f64;
    out.push(1.0);
    for k in 1..=n {
        acc *= (k as f64).sqrt();
        out.push(acc);
    }
    out
}

fn binomials(n: usize) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    for m in 0..=n {
        let mut row = vec![1.0; m + 1];
        for i in 1..m {
            row[i] = rows[m - 1][i - 1] + rows[m - 1][i];
        }
        rows.push(row);
    }
    rows
}

/// One grid point of an oracle comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleRow {
    pub w_a: f64,
    pub w_b: f64,
    pub e_d: f64,
    pub analytic: (f64, f64),
    pub oracle: (f64, f64),
}

impl OracleRow {
    pub fn deviation(&self) -> f64 {
        (self.analytic.0 - self.oracle.0)
            .abs()
            .max((self.analytic.1 - self.oracle.1).abs())
    }
}

/// Settings of an oracle-versus-channel sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleGrid {
    /// Arriving intensities tried on each arm.
    pub intensities: Vec<f64>,
    pub misalignments: Vec<f64>,
    pub p_d: f64,
    /// Forces the Fock cutoff; `None` uses [`default_cutoff`].
    pub n_max: Option<usize>,
    /// Added to the analytic probabilities; exercises the failure path.
    pub perturbation: f64,
}

impl Default for OracleGrid {
    /// Ten intensities evenly spaced over [0, 1], misalignment 0, 4% and 10%, `p_d = 1e-9`.
    fn default() -> Self {
        Self {
            intensities: (0..10).map(|i| i as f64 / 9.0).collect(),
            misalignments: vec![0.0, 0.04, 0.10],
            p_d: 1e-9,
            n_max: None,
            perturbation: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleReport {
    pub rows: Vec<OracleRow>,
}

impl OracleReport {
    pub fn max_deviation(&self) -> f64 {
        self.rows
            .iter()
            .map(OracleRow::deviation)
            .fold(0.0, f64::max)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_deviation() <= tolerance
    }
}

/// Compares the analytic channel against the Fock-space oracle on every grid point.
pub fn compare_with_channel(grid: &OracleGrid) -> Result<OracleReport> {
    use rayon::prelude::*;

    let points: Vec<(f64, f64, f64)> = grid
        .misalignments
        .iter()
        .flat_map(|&e_d| {
            grid.intensities
                .iter()
                .flat_map(move |&w_a| grid.intensities.iter().map(move |&w_b| (w_a, w_b, e_d)))
        })
        .collect();
    let rows = points
        .par_iter()
        .map(|&(w_a, w_b, e_d)| {
            let cutoff = |w: f64| grid.n_max.unwrap_or_else(|| default_cutoff(w));
            let a = coherent_fock(w_a, cutoff(w_a))?;
            let b = coherent_fock(w_b, cutoff(w_b))?;
            let oracle = beamsplitter_output(&a, &b)?.exclusive_clicks(grid.p_d, e_d);
            let (l, r) = channel::click_probs_at(1.0, w_a, w_b, grid.p_d, e_d);
            Ok(OracleRow {
                w_a,
                w_b,
                e_d,
                analytic: (l + grid.perturbation, r + grid.perturbation),
                oracle,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OracleReport { rows })
}
