//! End-to-end key-rate evaluation: channel statistics, phase-error bound,
//! post-processing and the rate formula of the requested mode.

use crate::channel::{asymptotic_stats, expected_key_bits};
use crate::error::Result;
use crate::params::{
    validate_config, ChannelConfig, KeyRateReport, Mode, ProtocolConfig, WindowStats,
};
use crate::postprocess::{expected_aopp, expected_twcc, KeyComposition};
use crate::rates::{
    key_rate_aopp, key_rate_original, key_rate_twcc, security_summary, BoundCoefficients,
};

/// Everything needed to turn window statistics into a key rate.
#[derive(Debug, Clone, Copy)]
pub struct RateInputs {
    pub stats: WindowStats,
    pub composition: KeyComposition,
    pub coefficients: BoundCoefficients,
}

impl RateInputs {
    /// Expected inputs in the infinite-key limit.
    pub fn asymptotic(protocol: &ProtocolConfig, channel: &ChannelConfig) -> Self {
        let stats = asymptotic_stats(protocol, channel);
        Self {
            stats,
            composition: KeyComposition::expected(&stats, protocol),
            coefficients: BoundCoefficients::for_protocol(protocol),
        }
    }

    pub fn with_coefficients(mut self, coefficients: BoundCoefficients) -> Self {
        self.coefficients = coefficients;
        self
    }

    /// Key rate for `mode`, with pairing statistics predicted from the key composition.
    pub fn report(&self, protocol: &ProtocolConfig, f: f64, mode: Mode) -> Result<KeyRateReport> {
        let summary = security_summary(&self.stats, protocol, &self.coefficients);
        let n = protocol.n();
        let n_t = expected_key_bits(&self.stats, protocol);
        match mode {
            Mode::Original => key_rate_original(&summary, n_t, self.stats.e_k, f, n),
            Mode::Twcc => key_rate_twcc(&summary, n_t, &expected_twcc(&self.composition), f, n),
            Mode::Aopp => key_rate_aopp(&summary, &expected_aopp(&self.composition), f, n),
        }
    }
}

/// Asymptotic key rate per window at the configured operating point.
///
/// The rate is normalized per window, so a window count of zero is treated as one.
pub fn asymptotic_report(
    protocol: &ProtocolConfig,
    channel: &ChannelConfig,
    mode: Mode,
) -> Result<KeyRateReport> {
    asymptotic_report_with_c0(protocol, channel, mode, None)
}

/// [`asymptotic_report`] with an optional manual choice of `c0` in place of
/// the default `exp((nu - mu) / 2)`.
pub fn asymptotic_report_with_c0(
    protocol: &ProtocolConfig,
    channel: &ChannelConfig,
    mode: Mode,
    c0: Option<f64>,
) -> Result<KeyRateReport> {
    let (mut protocol, channel) = validate_config(*protocol, *channel)?;
    protocol.n_windows = protocol.n_windows.max(1);
    let mut inputs = RateInputs::asymptotic(&protocol, &channel);
    if let Some(c0) = c0 {
        inputs = inputs.with_coefficients(BoundCoefficients::with_c0(&protocol, c0)?);
    }
    inputs.report(&protocol, channel.f, mode)
}

/// Asymptotic key rate, or 0 if the configuration is invalid.
pub fn asymptotic_rate(protocol: &ProtocolConfig, channel: &ChannelConfig, mode: Mode) -> f64 {
    asymptotic_report(protocol, channel, mode)
        .map(|report| report.key_rate)
        .unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::RateDetail;

    #[test]
    fn positive_rate_at_hundred_km() {
        let p = ProtocolConfig::symmetric(1e-8, 0.0012, 0.97, 0.0, 1);
        let ch = ChannelConfig::standard_fiber(100.0);
        let report = asymptotic_report(&p, &ch, Mode::Original).unwrap();
        assert!(report.key_rate > 0.0, "{report:?}");
        assert!(report.summary.e_ph_upper < 0.5);
        match report.detail {
            RateDetail::Original { e_k, .. } => assert!(e_k < 0.5),
            _ => unreachable!(),
        }
    }

    #[test]
    fn invalid_config_is_an_error() {
        let p = ProtocolConfig::symmetric(0.2, 0.1, 0.5, 0.0, 1);
        assert!(asymptotic_report(&p, &ChannelConfig::standard_fiber(0.0), Mode::Aopp).is_err());
        assert_eq!(
            asymptotic_rate(&p, &ChannelConfig::standard_fiber(0.0), Mode::Aopp),
            0.0
        );
    }

    #[test]
    fn default_c0_override_is_a_no_op() {
        let p = ProtocolConfig::symmetric(1e-8, 0.002, 0.97, 0.0, 1);
        let ch = ChannelConfig::standard_fiber(80.0);
        let c0 = ((p.nu() - p.mu()) / 2.0).exp();
        let a = asymptotic_report(&p, &ch, Mode::Original).unwrap();
        let b = asymptotic_report_with_c0(&p, &ch, Mode::Original, Some(c0)).unwrap();
        assert!((a.key_rate - b.key_rate).abs() <= 1e-12 * a.key_rate);
        let worse = asymptotic_report_with_c0(&p, &ch, Mode::Original, Some(0.5)).unwrap();
        assert!(worse.key_rate < a.key_rate);
    }

    #[test]
    fn rate_is_independent_of_window_count() {
        let ch = ChannelConfig::standard_fiber(60.0);
        for mode in Mode::ALL {
            let a = asymptotic_rate(
                &ProtocolConfig::symmetric(0.0, 0.005, 0.95, 0.0, 1),
                &ch,
                mode,
            );
            let b = asymptotic_rate(
                &ProtocolConfig::symmetric(0.0, 0.005, 0.95, 0.0, 1_000_000_000),
                &ch,
                mode,
            );
            assert!((a - b).abs() <= 1e-12 * a.abs(), "{mode}: {a} vs {b}");
        }
    }
}
