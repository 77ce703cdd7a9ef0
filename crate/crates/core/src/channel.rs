//! Analytic model of the symmetric interference channel.
//!
//! Both arms have the same length, so Charlie sits at the midpoint. The
//! phase-compensated coherent pulses interfere on a 50:50 beamsplitter whose
//! sum port feeds detector L and difference port feeds detector R. Residual
//! misalignment routes a fraction `E_d` of each port's light to the other
//! port. Threshold detectors with dark-count probability `p_d` follow.
//! A window is effective when exactly one detector clicks.

use crate::error::{check_non_negative, Result};
use crate::params::{ChannelConfig, ProtocolConfig, SourcePair, WindowStats};

/// One arm's total transmittance, detector efficiency included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmModel {
    pub eta: f64,
}

impl ArmModel {
    pub fn new(channel: &ChannelConfig) -> Self {
        Self {
            eta: side_transmittance(channel),
        }
    }
}

/// `eta_d * 10^(-alpha_f * (distance/2) / 10)`.
pub fn side_transmittance(channel: &ChannelConfig) -> f64 {
    channel.eta_d * 10f64.powf(-channel.alpha_f * (channel.distance_km / 2.0) / 10.0)
}

/// Port intensities after interference and misalignment mixing, `(L, R)`.
pub fn port_intensities(eta: f64, w_a: f64, w_b: f64, e_d: f64) -> (f64, f64) {
    let a = (eta * w_a).sqrt();
    let b = (eta * w_b).sqrt();
    let sum = 0.5 * (a + b) * (a + b);
    let diff = 0.5 * (a - b) * (a - b);
    (
        (1.0 - e_d) * sum + e_d * diff,
        (1.0 - e_d) * diff + e_d * sum,
    )
}

/// Probability that a threshold detector fired by Poisson light of mean
/// `intensity` (or a dark count) does NOT click.
pub fn no_click_probability(intensity: f64, p_d: f64) -> f64 {
    (-p_d).ln_1p().exp() * (-intensity).exp()
}

/// `1 - (1 - p_d) e^{-intensity}`, evaluated without cancellation.
pub fn click_probability(intensity: f64, p_d: f64) -> f64 {
    -((-p_d).ln_1p() - intensity).exp_m1()
}

/// Exactly-one-click probabilities `(S_L, S_R)` given the port intensities.
pub fn exclusive_clicks(i_l: f64, i_r: f64, p_d: f64) -> (f64, f64) {
    let p_l = click_probability(i_l, p_d);
    let p_r = click_probability(i_r, p_d);
    (p_l * (1.0 - p_r), p_r * (1.0 - p_l))
}

/// `(S_L, S_R)` at a given one-arm transmittance.
pub fn click_probs_at(eta: f64, w_a: f64, w_b: f64, p_d: f64, e_d: f64) -> (f64, f64) {
    let (i_l, i_r) = port_intensities(eta, w_a, w_b, e_d);
    exclusive_clicks(i_l, i_r, p_d)
}

/// Exactly-one-click probabilities for emitted intensities `w_a`, `w_b`.
pub fn window_click_probs(w_a: f64, w_b: f64, channel: &ChannelConfig) -> Result<(f64, f64)> {
    check_non_negative("w_A", w_a)?;
    check_non_negative("w_B", w_b)?;
    Ok(click_probs_at(
        side_transmittance(channel),
        w_a,
        w_b,
        channel.p_d,
        channel.e_d,
    ))
}

/// Emitted intensities `(w_A, w_B)` for a source pairing, using the upper bounds.
pub fn pair_intensities(protocol: &ProtocolConfig, pair: SourcePair) -> (f64, f64) {
    let p = protocol;
    match pair {
        SourcePair::StrongWeak => (p.mu_upper_a, p.nu_upper_b),
        SourcePair::WeakStrong => (p.nu_upper_a, p.mu_upper_b),
        SourcePair::WeakWeak => (p.nu_upper_a, p.nu_upper_b),
        SourcePair::StrongStrong => (p.mu_upper_a, p.mu_upper_b),
    }
}

/// `(S_L, S_R)` for each source pairing, indexed by [`SourcePair::index`].
pub fn pair_click_table(protocol: &ProtocolConfig, channel: &ChannelConfig) -> [(f64, f64); 4] {
    let eta = side_transmittance(channel);
    SourcePair::ALL.map(|pair| {
        let (w_a, w_b) = pair_intensities(protocol, pair);
        click_probs_at(eta, w_a, w_b, channel.p_d, channel.e_d)
    })
}

/// Expected window statistics in the limit of infinitely many windows.
///
/// The two Z̃ orientations are averaged. O and B windows are exactly the
/// effective key windows whose bits disagree, so they make up `E_K`. A zero
/// throughput (`d_eff == 0`) reports `E_K = 0`.
pub fn asymptotic_stats(protocol: &ProtocolConfig, channel: &ChannelConfig) -> WindowStats {
    let table = pair_click_table(protocol, channel);
    let sw = table[SourcePair::StrongWeak.index()];
    let ws = table[SourcePair::WeakStrong.index()];
    let (s_o_l, s_o_r) = table[SourcePair::WeakWeak.index()];
    let (s_b_l, s_b_r) = table[SourcePair::StrongStrong.index()];
    let mut stats = WindowStats {
        s_o_l,
        s_o_r,
        s_b_l,
        s_b_r,
        s_z_l: 0.5 * (sw.0 + ws.0),
        s_z_r: 0.5 * (sw.1 + ws.1),
        e_k: 0.0,
        d_eff: 0.0,
    };
    let (p0, px) = (protocol.p0, protocol.px());
    let errors = p0 * p0 * stats.s_o() + px * px * stats.s_b();
    stats.d_eff = stats.implied_d_eff(protocol);
    if stats.d_eff > 0.0 {
        stats.e_k = (errors / stats.d_eff).min(1.0);
    }
    stats
}

/// Expected number of effective key-generation bits, `N (1 - r) D_eff`.
pub fn expected_key_bits(stats: &WindowStats, protocol: &ProtocolConfig) -> f64 {
    protocol.n() * (1.0 - protocol.r) * stats.d_eff
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transmittance_examples() {
        let mut ch = ChannelConfig::standard_fiber(0.0);
        assert_eq!(side_transmittance(&ch), 0.6);
        ch.distance_km = 100.0;
        assert!((side_transmittance(&ch) - 0.06).abs() < 1e-16);
        ch.distance_km = 200.0;
        assert!((side_transmittance(&ch) - 0.006).abs() < 1e-17);
    }

    #[test]
    fn dark_channel_is_silent() {
        let mut ch = ChannelConfig::standard_fiber(10.0);
        ch.p_d = 0.0;
        assert_eq!(window_click_probs(0.0, 0.0, &ch).unwrap(), (0.0, 0.0));
        assert!(window_click_probs(-0.1, 0.0, &ch).is_err());
    }

    #[test]
    fn balanced_inputs_leave_destructive_port_dark() {
        let ch = ChannelConfig::standard_fiber(30.0).with_misalignment(0.0);
        let (s_l, s_r) = window_click_probs(0.3, 0.3, &ch).unwrap();
        let eta = side_transmittance(&ch);
        let p_l = click_probability(2.0 * eta * 0.3, ch.p_d);
        assert!((s_r - ch.p_d * (1.0 - p_l)).abs() < 1e-20);
        assert!(s_l > s_r);
    }

    #[test]
    fn swapping_arms_is_symmetric() {
        let ch = ChannelConfig::standard_fiber(80.0);
        for &(a, b) in &[(0.1, 1e-8), (0.5, 0.2), (0.0, 0.9)] {
            let ab = window_click_probs(a, b, &ch).unwrap();
            let ba = window_click_probs(b, a, &ch).unwrap();
            assert!((ab.0 - ba.0).abs() < 1e-16 && (ab.1 - ba.1).abs() < 1e-16);
        }
    }

    #[test]
    fn constructive_port_is_left() {
        for e_d in [0.0, 0.04, 0.1, 0.3, 0.49] {
            let ch = ChannelConfig::standard_fiber(50.0).with_misalignment(e_d);
            for w in [1e-6, 1e-3, 0.1, 1.0] {
                let (s_l, s_r) = window_click_probs(w, w, &ch).unwrap();
                assert!(s_l > s_r, "E_d={e_d} w={w}");
            }
        }
    }

    #[test]
    fn clicks_monotone_in_transmittance() {
        let etas: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        for &(a, b) in &[(0.1, 0.1), (0.1, 1e-8), (1e-8, 1e-8)] {
            let totals: Vec<f64> = etas
                .iter()
                .map(|&eta| {
                    let (l, r) = click_probs_at(eta, a, b, 1e-9, 0.04);
                    l + r
                })
                .collect();
            assert!(totals.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn asymptotic_stats_edges() {
        let mut ch = ChannelConfig::standard_fiber(10.0);
        ch.p_d = 0.0;
        let p = ProtocolConfig::symmetric(0.0, 0.0, 0.5, 0.0, 1);
        let stats = asymptotic_stats(&p, &ch);
        assert_eq!(stats, WindowStats::default());

        // p0 -> 1: only both-weak windows, all of which are errors.
        let ch = ChannelConfig::standard_fiber(10.0);
        let p = ProtocolConfig::symmetric(1e-3, 0.1, 1.0 - 1e-12, 0.0, 1);
        let stats = asymptotic_stats(&p, &ch);
        assert!((stats.d_eff - stats.s_o()).abs() < 1e-9 * stats.s_o());
        assert!((stats.e_k - 1.0).abs() < 1e-9);
    }

    #[test]
    fn d_eff_decomposes_over_classes() {
        let p = ProtocolConfig::symmetric(1e-8, 0.05, 0.9, 0.0, 1);
        let stats = asymptotic_stats(&p, &ChannelConfig::standard_fiber(120.0));
        let expected = 0.81 * stats.s_o() + 0.01 * stats.s_b() + 0.18 * stats.s_z();
        assert!((stats.d_eff - expected).abs() < 1e-15 * expected.max(1e-300) + 1e-25);
        stats.validate().unwrap();
    }
}
