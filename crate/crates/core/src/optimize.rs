//! Derivative-free maximization of the asymptotic key rate over the weak
//! source probability `p0` and the strong intensity `mu`, at fixed `nu`.
//!
//! A coarse grid over `logit(p0)` and `ln(mu)` is evaluated in parallel, then
//! a compass search refines the best grid point. The rate is clamped at zero
//! outside the secure region, so the grid is what finds the positive basin.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{ChannelConfig, KeyRateReport, Mode, ProtocolConfig};
use crate::pipeline::asymptotic_report;

/// Lower end of the `mu` search range when `nu` is zero.
pub const MU_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizationProblem {
    pub nu: f64,
    pub mode: Mode,
    pub p0_bounds: (f64, f64),
    /// Upper end of the `mu` range; the lower end is `max(nu, MU_FLOOR)`.
    pub mu_max: f64,
    /// Grid points per axis.
    pub grid: usize,
    /// Compass steps stop once they are this small in transformed coordinates.
    pub step_tolerance: f64,
}

impl OptimizationProblem {
    pub fn new(nu: f64, mode: Mode) -> Self {
        Self {
            nu,
            mode,
            p0_bounds: (1e-6, 1.0 - 1e-6),
            mu_max: 1.0,
            grid: 40,
            step_tolerance: 1e-6,
        }
    }

    pub fn with_grid(mut self, grid: usize) -> Self {
        self.grid = grid;
        self
    }

    fn mu_bounds(&self) -> (f64, f64) {
        (self.nu.max(MU_FLOOR), self.mu_max)
    }

    fn check(&self) -> Result<()> {
        let (lo, hi) = self.p0_bounds;
        if !(lo > 0.0 && hi < 1.0 && lo <= hi) {
            return Err(Error::EmptyFeasibleRegion(format!(
                "p0 bounds [{lo}, {hi}] must lie inside (0, 1)"
            )));
        }
        let (mu_lo, mu_hi) = self.mu_bounds();
        if !(self.nu >= 0.0 && mu_lo <= mu_hi) {
            return Err(Error::EmptyFeasibleRegion(format!(
                "need nu <= mu <= {mu_hi}, got nu = {}",
                self.nu
            )));
        }
        if self.grid < 2 {
            return Err(Error::EmptyFeasibleRegion(
                "grid needs at least 2 points per axis".into(),
            ));
        }
        Ok(())
    }

    /// The symmetric protocol at `(p0, mu)`, asymptotic (`r = 0`).
    pub fn protocol(&self, p0: f64, mu: f64) -> ProtocolConfig {
        ProtocolConfig::symmetric(self.nu, mu, p0, 0.0, 1)
    }
}

/// Best point found and how it was reached.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub p0: f64,
    pub mu: f64,
    pub key_rate: f64,
    /// Best value seen on the coarse grid.
    pub grid_best: f64,
    /// The whole grid evaluated to zero.
    pub no_key: bool,
    /// `mu` ended on its upper bound.
    pub mu_at_bound: bool,
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn lerp(lo: f64, hi: f64, i: usize, n: usize) -> f64 {
    if n <= 1 {
        lo
    } else {
        lo + (hi - lo) * i as f64 / (n - 1) as f64
    }
}

/// Maximizes `objective(p0, mu)` over the problem's box.
pub fn maximize<F>(problem: &OptimizationProblem, objective: F) -> Result<Optimum>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    problem.check()?;
    let (u_lo, u_hi) = (logit(problem.p0_bounds.0), logit(problem.p0_bounds.1));
    let (mu_lo, mu_hi) = problem.mu_bounds();
    let (v_lo, v_hi) = (mu_lo.ln(), mu_hi.ln());
    let to_point = |u: f64, v: f64| {
        (
            logistic(u.clamp(u_lo, u_hi)).clamp(problem.p0_bounds.0, problem.p0_bounds.1),
            v.clamp(v_lo, v_hi).exp().clamp(mu_lo, mu_hi),
        )
    };
    let eval = |u: f64, v: f64| {
        let (p0, mu) = to_point(u, v);
        let value = objective(p0, mu);
        if value.is_finite() {
            value
        } else {
            0.0
        }
    };

    let n = problem.grid;
    let grid: Vec<(f64, f64, f64)> = (0..n * n)
        .into_par_iter()
        .map(|k| {
            let u = lerp(u_lo, u_hi, k / n, n);
            let v = lerp(v_lo, v_hi, k % n, n);
            (u, v, eval(u, v))
        })
        .collect();
    // first maximum in grid order, so ties resolve deterministically
    let (mut u, mut v, mut best) =
        grid.iter()
            .copied()
            .fold((u_lo, v_lo, f64::NEG_INFINITY), |acc, x| {
                if x.2 > acc.2 {
                    x
                } else {
                    acc
                }
            });
    let grid_best = best;

    if best > 0.0 {
        let mut step_u = (u_hi - u_lo) / (n - 1) as f64;
        let mut step_v = (v_hi - v_lo) / (n - 1) as f64;
        let mut iterations = 0;
        while (step_u > problem.step_tolerance || step_v > problem.step_tolerance)
            && iterations < 10_000
        {
            iterations += 1;
            let candidates = [
                (u + step_u, v),
                (u - step_u, v),
                (u, v + step_v),
                (u, v - step_v),
            ];
            let mut moved = false;
            for (cu, cv) in candidates {
                let (cu, cv) = (cu.clamp(u_lo, u_hi), cv.clamp(v_lo, v_hi));
                let value = eval(cu, cv);
                if value > best {
                    best = value;
                    u = cu;
                    v = cv;
                    moved = true;
                    break;
                }
            }
            if !moved {
                step_u *= 0.5;
                step_v *= 0.5;
            }
        }
    }

    let (p0, mu) = to_point(u, v);
    // NaN never occurs here: non-finite objective values are mapped to 0
    let no_key = grid_best <= 0.0;
    Ok(Optimum {
        p0,
        mu,
        key_rate: if no_key { 0.0 } else { best },
        grid_best: grid_best.max(0.0),
        no_key,
        mu_at_bound: mu >= mu_hi * (1.0 - 1e-9),
    })
}

/// Maximizes the asymptotic key rate of `problem.mode` on `channel`.
pub fn optimize_key_rate(
    problem: &OptimizationProblem,
    channel: &ChannelConfig,
) -> Result<Optimum> {
    channel.validate()?;
    maximize(problem, |p0, mu| {
        asymptotic_report(&problem.protocol(p0, mu), channel, problem.mode)
            .map(|report| report.key_rate)
            .unwrap_or(0.0)
    })
}

/// Optimum together with the full report at that point.
pub fn optimize_with_report(
    problem: &OptimizationProblem,
    channel: &ChannelConfig,
) -> Result<(Optimum, KeyRateReport)> {
    let optimum = optimize_key_rate(problem, channel)?;
    let report = asymptotic_report(
        &problem.protocol(optimum.p0, optimum.mu),
        channel,
        problem.mode,
    )?;
    Ok((optimum, report))
}

/// Largest distance in `[0, max_km]` with a positive optimized key rate,
/// located by bisection to within `tolerance_km`. Returns 0 when even the
/// zero-length channel gives no key.
pub fn secure_distance(
    problem: &OptimizationProblem,
    channel: &ChannelConfig,
    max_km: f64,
    tolerance_km: f64,
) -> Result<f64> {
    let positive = |d: f64| -> Result<bool> {
        Ok(!optimize_key_rate(problem, &channel.with_distance(d))?.no_key)
    };
    if !positive(0.0)? {
        return Ok(0.0);
    }
    if positive(max_km)? {
        return Ok(max_km);
    }
    let (mut lo, mut hi) = (0.0, max_km);
    while hi - lo > tolerance_km {
        let mid = 0.5 * (lo + hi);
        if positive(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dead_channel_has_no_key() {
        let mut ch = ChannelConfig::standard_fiber(50.0);
        ch.eta_d = 0.0;
        ch.p_d = 0.0;
        let opt = optimize_key_rate(&OptimizationProblem::new(0.0, Mode::Original), &ch).unwrap();
        assert!(opt.no_key);
        assert_eq!(opt.key_rate, 0.0);
    }

    #[test]
    fn recovers_planted_maximum() {
        let problem = OptimizationProblem::new(0.0, Mode::Original);
        let opt = maximize(&problem, |p0, mu| {
            1.0 - (p0 - 0.8).powi(2) - 4.0 * (mu - 0.3).powi(2)
        })
        .unwrap();
        assert!((opt.p0 - 0.8).abs() < 1e-4, "{opt:?}");
        assert!((opt.mu - 0.3).abs() < 1e-4, "{opt:?}");
        assert!((opt.key_rate - 1.0).abs() < 1e-8);
        assert!(opt.key_rate >= opt.grid_best);
    }

    #[test]
    fn planted_maximum_on_the_mu_bound_is_flagged() {
        let problem = OptimizationProblem::new(0.0, Mode::Original);
        let opt = maximize(&problem, |p0, mu| mu - (p0 - 0.5).powi(2)).unwrap();
        assert!(opt.mu_at_bound);
        assert_eq!(opt.mu, 1.0);
    }

    #[test]
    fn empty_region_is_an_error() {
        let problem = OptimizationProblem::new(2.0, Mode::Original);
        assert!(matches!(
            optimize_key_rate(&problem, &ChannelConfig::standard_fiber(10.0)),
            Err(Error::EmptyFeasibleRegion(_))
        ));
    }

    #[test]
    fn deterministic_and_feasible() {
        let ch = ChannelConfig::standard_fiber(120.0);
        let problem = OptimizationProblem::new(1e-8, Mode::Aopp).with_grid(20);
        let a = optimize_key_rate(&problem, &ch).unwrap();
        let b = optimize_key_rate(&problem, &ch).unwrap();
        assert_eq!(a, b);
        assert!(a.key_rate > 0.0);
        assert!(a.mu >= 1e-8 && a.mu <= 1.0);
        assert!(a.p0 >= 1e-6 && a.p0 <= 1.0 - 1e-6);
        assert!(a.key_rate >= a.grid_best);
    }

    #[test]
    fn secure_distance_brackets_the_last_positive_rate() {
        let problem = OptimizationProblem::new(0.0, Mode::Original).with_grid(20);
        let ch = ChannelConfig::standard_fiber(0.0);
        let d = secure_distance(&problem, &ch, 400.0, 1.0).unwrap();
        assert!(d > 0.0 && d < 400.0);
        assert!(
            !optimize_key_rate(&problem, &ch.with_distance(d))
                .unwrap()
                .no_key
        );
        assert!(
            optimize_key_rate(&problem, &ch.with_distance(d + 1.0))
                .unwrap()
                .no_key
        );
    }

    #[test]
    fn rate_nonincreasing_with_distance() {
        let problem = OptimizationProblem::new(0.0, Mode::Original);
        let rates: Vec<f64> = (0..=200)
            .step_by(25)
            .map(|d| {
                optimize_key_rate(&problem, &ChannelConfig::standard_fiber(d as f64))
                    .unwrap()
                    .key_rate
            })
            .collect();
        assert!(rates.windows(2).all(|w| w[1] <= w[0]), "{rates:?}");
        assert!(rates[0] > 0.0);
    }
}
