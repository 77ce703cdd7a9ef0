//! Phase-error bounds and key-rate formulas.
//!
//! The phase-flip error count of untagged bits is bounded from observed
//! O-window and B-window click frequencies by decomposing the state of a
//! Z̃ window into a both-weak part, a both-strong part and a residual whose
//! weight is `c2_bar`. Only the vacuum-probability lower bounds
//! `exp(-intensity_upper)` of the four sources enter that residual, so the
//! bound holds for any source whose vacuum component is bounded from below.

use serde::{Deserialize, Serialize};

use crate::error::{check_non_negative, check_unit, Result};
use crate::params::{
    binary_entropy, AoppStats, KeyRateReport, Mode, ProtocolConfig, RateDetail, SecuritySummary,
    TwccStats, WindowStats,
};

/// Decomposition coefficients: `c0` weights the both-weak state, `c1` the
/// both-strong state, `c2_bar` bounds the residual over all windows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCoefficients {
    pub c0: f64,
    pub c1: f64,
    pub c2_bar: f64,
}

impl BoundCoefficients {
    /// Default `c0 = exp((nu - mu) / 2)`, `c1 = 1 / c0` with the matching `c2_bar`.
    pub fn for_protocol(protocol: &ProtocolConfig) -> Self {
        let (c0, c1) = default_coefficients(protocol);
        Self::with_c0(protocol, c0).unwrap_or(Self {
            c0,
            c1,
            c2_bar: 0.0,
        })
    }

    /// Caller-chosen `c0 > 0`; `c1` is fixed by `c0 * c1 = 1`.
    pub fn with_c0(protocol: &ProtocolConfig, c0: f64) -> Result<Self> {
        if !(c0 > 0.0 && c0.is_finite()) {
            return Err(crate::Error::Domain {
                name: "c0",
                value: c0,
                domain: "(0, inf)",
            });
        }
        let c1 = 1.0 / c0;
        Ok(Self {
            c0,
            c1,
            c2_bar: c2_upper_bound(protocol, c0, c1),
        })
    }
}

/// `(c0, c1) = (exp((nu - mu)/2), exp((mu - nu)/2))` from the symmetric source bounds.
pub fn default_coefficients(protocol: &ProtocolConfig) -> (f64, f64) {
    let half_gap = 0.5 * (protocol.nu() - protocol.mu());
    (half_gap.exp(), (-half_gap).exp())
}

/// One side's factor of the residual bound, worst case over the side-channel
/// overlap of the non-vacuum parts.
///
/// Evaluated as `(c0 - 1)^2 / c0 + 2(1 - e^{-(nu+mu)/2}) + 2 sqrt(1-e^{-nu}) sqrt(1-e^{-mu})`,
/// which equals `c0 + c1 - 2e^{-(nu+mu)/2} + ...` when `c0 c1 = 1` but stays
/// accurate for small intensities.
fn residual_factor(c0: f64, nu: f64, mu: f64) -> f64 {
    let mismatch = (c0 - 1.0).powi(2) / c0;
    let vacuum_gap = -2.0 * (-(nu + mu) / 2.0).exp_m1();
    let overlap = 2.0 * (-(-nu).exp_m1()).sqrt() * (-(-mu).exp_m1()).sqrt();
    mismatch + vacuum_gap + overlap
}

/// Upper bound `c2_bar` on the residual coefficient of every window.
///
/// Panics if `c0 * c1` differs from 1 by more than 1e-12 relative, or if a
/// factor comes out negative (impossible for admissible inputs).
pub fn c2_upper_bound(protocol: &ProtocolConfig, c0: f64, c1: f64) -> f64 {
    assert!(
        (c0 * c1 - 1.0).abs() <= 1e-12,
        "c0 * c1 must equal 1, got {}",
        c0 * c1
    );
    let side_a = residual_factor(c0, protocol.nu_upper_a, protocol.mu_upper_a);
    let side_b = residual_factor(c0, protocol.nu_upper_b, protocol.mu_upper_b);
    assert!(
        side_a >= 0.0 && side_b >= 0.0,
        "negative residual factor ({side_a}, {side_b})"
    );
    (side_a * side_b).sqrt()
}

fn check_xi(xi0: f64, xi1: f64, xi2: f64, s0: f64, s1: f64) -> Result<()> {
    check_non_negative("xi0", xi0)?;
    check_non_negative("xi1", xi1)?;
    check_non_negative("xi2", xi2)?;
    check_unit("S0", s0)?;
    check_unit("S1", s1)
}

/// Upper bound on the click probability of `xi0|phi0> + xi1|phi1> + xi2|phi2>`
/// given the click probabilities `s0`, `s1` of `|phi0>`, `|phi1>`.
pub fn input_output_upper(xi0: f64, xi1: f64, xi2: f64, s0: f64, s1: f64) -> Result<f64> {
    check_xi(xi0, xi1, xi2, s0, s1)?;
    let bound = xi0 * xi0 * s0
        + xi1 * xi1 * s1
        + xi2 * xi2
        + 2.0 * xi0 * xi1 * (s0 * s1).sqrt()
        + 2.0 * xi0 * xi2 * s0.sqrt()
        + 2.0 * xi1 * xi2 * s1.sqrt();
    Ok(bound.min(1.0))
}

/// Lower bound counterpart of [`input_output_upper`].
pub fn input_output_lower(xi0: f64, xi1: f64, xi2: f64, s0: f64, s1: f64) -> Result<f64> {
    check_xi(xi0, xi1, xi2, s0, s1)?;
    let bound = xi0 * xi0 * s0 + xi1 * xi1 * s1
        - 2.0 * xi0 * xi1 * (s0 * s1).sqrt()
        - 2.0 * xi0 * xi2 * s0.sqrt()
        - 2.0 * xi1 * xi2 * s1.sqrt();
    Ok(bound.max(0.0))
}

/// The bracketed per-window term of the phase-error bound, before clamping.
pub fn phase_error_bracket(stats: &WindowStats, coeffs: &BoundCoefficients) -> f64 {
    let BoundCoefficients { c0, c1, c2_bar } = *coeffs;
    let s = stats;
    c0 * c0 * (s.s_o_r - s.s_o_l)
        + c1 * c1 * (s.s_b_r - s.s_b_l)
        + c2_bar * c2_bar
        + 2.0 * c0 * c1 * ((s.s_o_r * s.s_b_r).sqrt() + (s.s_o_l * s.s_b_l).sqrt())
        + 2.0 * c0 * c2_bar * (s.s_o_r.sqrt() + s.s_o_l.sqrt())
        + 2.0 * c1 * c2_bar * (s.s_b_r.sqrt() + s.s_b_l.sqrt())
        + 4.0 * s.s_z_l
}

/// Upper bound on the number of phase errors among untagged bits.
///
/// Returns the bound and whether the bracket was negative and clamped to 0.
pub fn phase_error_count_upper(
    stats: &WindowStats,
    protocol: &ProtocolConfig,
    coeffs: &BoundCoefficients,
) -> (f64, bool) {
    let prefactor = 0.5 * protocol.p0 * protocol.px() * (1.0 - protocol.r) * protocol.n();
    let bracket = phase_error_bracket(stats, coeffs);
    if bracket < 0.0 {
        (0.0, true)
    } else {
        (prefactor * bracket, false)
    }
}

/// Number of untagged bits: effective Z̃ key-generation windows.
pub fn untagged_count(stats: &WindowStats, protocol: &ProtocolConfig) -> f64 {
    2.0 * protocol.p0 * protocol.px() * (1.0 - protocol.r) * protocol.n() * stats.s_z()
}

/// `n_ph_upper / n_u` clamped to [0, 1]; no untagged bits means rate 1.
pub fn phase_error_rate(n_ph_upper: f64, n_u: f64) -> f64 {
    if n_u <= 0.0 {
        return 1.0;
    }
    (n_ph_upper / n_u).clamp(0.0, 1.0)
}

pub fn security_summary(
    stats: &WindowStats,
    protocol: &ProtocolConfig,
    coeffs: &BoundCoefficients,
) -> SecuritySummary {
    let (n_ph_upper, bracket_clamped) = phase_error_count_upper(stats, protocol, coeffs);
    let n_u = untagged_count(stats, protocol);
    SecuritySummary {
        c0: coeffs.c0,
        c1: coeffs.c1,
        c2_bar: coeffs.c2_bar,
        n_ph_upper,
        n_u,
        e_ph_upper: phase_error_rate(n_ph_upper, n_u),
        bracket_clamped,
    }
}

/// Secrecy term `n (1 - H(e))`, or `None` when `e >= 1/2` leaves nothing to distil.
fn secrecy(n: f64, e_ph: f64) -> Result<Option<f64>> {
    if e_ph >= 0.5 {
        return Ok(None);
    }
    Ok(Some(n * (1.0 - binary_entropy(e_ph)?)))
}

fn finish(
    mode: Mode,
    summary: SecuritySummary,
    detail: RateDetail,
    secret: Option<f64>,
    leak: f64,
    n: f64,
) -> KeyRateReport {
    let raw = match secret {
        Some(s) if n > 0.0 => (s - leak) / n,
        None if n > 0.0 => -leak / n,
        _ => 0.0,
    };
    let no_key = secret.is_none() || raw <= 0.0;
    KeyRateReport {
        mode,
        key_rate: if no_key { 0.0 } else { raw },
        raw_key_rate: raw,
        no_key,
        summary,
        detail,
    }
}

/// Key rate per window without two-way post-processing.
pub fn key_rate_original(
    summary: &SecuritySummary,
    n_t: f64,
    e_k: f64,
    f: f64,
    n: f64,
) -> Result<KeyRateReport> {
    check_non_negative("n_t", n_t)?;
    let secret = secrecy(summary.n_u, summary.e_ph_upper)?;
    let leak = f * n_t * binary_entropy(e_k)?;
    Ok(finish(
        Mode::Original,
        *summary,
        RateDetail::Original { n_t, e_k },
        secret,
        leak,
        n,
    ))
}

/// Untagged bits surviving standard pairing: `n_u^2 / (2 n_t)`.
pub fn twcc_untagged(n_u: f64, n_t: f64) -> f64 {
    if n_t > 0.0 {
        n_u * n_u / (2.0 * n_t)
    } else {
        0.0
    }
}

/// Phase-error rate after one round of parity pairing: `2e(1 - e)`.
///
/// The map is not monotone past 1/2, so a bound `e_ph >= 1/2` stays at 1/2.
pub fn iterated_phase_error(e_ph: f64) -> f64 {
    let e = e_ph.min(0.5);
    2.0 * e * (1.0 - e)
}

/// Key rate after standard two-way classical communication.
pub fn key_rate_twcc(
    summary: &SecuritySummary,
    n_t: f64,
    twcc: &TwccStats,
    f: f64,
    n: f64,
) -> Result<KeyRateReport> {
    let n_u_twcc = twcc_untagged(summary.n_u, n_t);
    let e_ph_twcc = iterated_phase_error(summary.e_ph_upper);
    let secret = secrecy(n_u_twcc, e_ph_twcc)?;
    let leak = f
        * (twcc.n_t1 * binary_entropy(twcc.e_1)?
            + twcc.n_t2 * binary_entropy(twcc.e_2)?
            + twcc.n_t3 * binary_entropy(twcc.e_3)?);
    Ok(finish(
        Mode::Twcc,
        *summary,
        RateDetail::Twcc {
            n_u_twcc,
            e_ph_twcc,
            stats: *twcc,
        },
        secret,
        leak,
        n,
    ))
}

/// Untagged bits surviving odd-parity pairing: `(n_u0/n_b0)(n_u1/n_b1) n_g`.
pub fn aopp_untagged(stats: &AoppStats) -> f64 {
    if stats.n_b0 <= 0.0 || stats.n_b1 <= 0.0 {
        return 0.0;
    }
    (stats.n_u0 / stats.n_b0) * (stats.n_u1 / stats.n_b1) * stats.n_g
}

/// Key rate after actively odd-parity pairing.
pub fn key_rate_aopp(
    summary: &SecuritySummary,
    aopp: &AoppStats,
    f: f64,
    n: f64,
) -> Result<KeyRateReport> {
    let n_u_aopp = aopp_untagged(aopp);
    let e_ph_aopp = iterated_phase_error(summary.e_ph_upper);
    let secret = if aopp.n_g > 0.0 {
        secrecy(n_u_aopp, e_ph_aopp)?
    } else {
        None
    };
    let leak = f * aopp.n_t_aopp * binary_entropy(aopp.e_aopp)?;
    Ok(finish(
        Mode::Aopp,
        *summary,
        RateDetail::Aopp {
            n_u_aopp,
            e_ph_aopp,
            stats: *aopp,
        },
        secret,
        leak,
        n,
    ))
}
