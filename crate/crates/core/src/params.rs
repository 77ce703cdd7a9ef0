//! Shared domain types: source and channel configuration, per-window-class
//! statistics, and the records produced by the security analysis.

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Error, Result};

/// Source-side parameters of one protocol run.
///
/// Intensities are upper bounds: the security analysis only ever consumes the
/// bounds, and the simulators treat them as the emitted intensities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    /// Upper bound on Alice's weak (imperfect vacuum) source intensity.
    #[serde(rename = "nu_upper_A")]
    pub nu_upper_a: f64,
    #[serde(rename = "nu_upper_B")]
    pub nu_upper_b: f64,
    /// Upper bound on Alice's strong source intensity.
    #[serde(rename = "mu_upper_A")]
    pub mu_upper_a: f64,
    #[serde(rename = "mu_upper_B")]
    pub mu_upper_b: f64,
    /// Probability of choosing the weak source.
    pub p0: f64,
    /// Probability that a window is used for testing.
    pub r: f64,
    /// Total number of windows.
    #[serde(rename = "N")]
    pub n_windows: u64,
}

impl ProtocolConfig {
    /// Alice and Bob share the same source bounds.
    pub fn symmetric(nu: f64, mu: f64, p0: f64, r: f64, n_windows: u64) -> Self {
        Self {
            nu_upper_a: nu,
            nu_upper_b: nu,
            mu_upper_a: mu,
            mu_upper_b: mu,
            p0,
            r,
            n_windows,
        }
    }

    /// Probability of choosing the strong source.
    pub fn px(&self) -> f64 {
        1.0 - self.p0
    }

    pub fn n(&self) -> f64 {
        self.n_windows as f64
    }

    /// Weak-source intensity used for the symmetric channel model (mean of both sides).
    pub fn nu(&self) -> f64 {
        0.5 * (self.nu_upper_a + self.nu_upper_b)
    }

    pub fn mu(&self) -> f64 {
        0.5 * (self.mu_upper_a + self.mu_upper_b)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fields = [
            ("nu_upper_A", self.nu_upper_a),
            ("nu_upper_B", self.nu_upper_b),
            ("mu_upper_A", self.mu_upper_a),
            ("mu_upper_B", self.mu_upper_b),
            ("p0", self.p0),
            ("r", self.r),
        ];
        for (field, value) in fields {
            if !value.is_finite() {
                return Err(ConfigError::NotFinite { field, value });
            }
        }
        for (field, value) in &fields[..4] {
            if *value < 0.0 {
                return Err(ConfigError::Negative {
                    field,
                    value: *value,
                });
            }
        }
        let order = [
            ("nu_upper_A", self.nu_upper_a, "mu_upper_A", self.mu_upper_a),
            ("nu_upper_B", self.nu_upper_b, "mu_upper_B", self.mu_upper_b),
        ];
        for (weak, weak_value, strong, strong_value) in order {
            if weak_value > strong_value {
                return Err(ConfigError::IntensityOrder {
                    weak,
                    weak_value,
                    strong,
                    strong_value,
                });
            }
        }
        if !(self.p0 > 0.0 && self.p0 < 1.0) {
            return Err(ConfigError::OutOfRange {
                field: "p0",
                range: "(0, 1)",
                value: self.p0,
            });
        }
        if !(0.0..1.0).contains(&self.r) {
            return Err(ConfigError::OutOfRange {
                field: "r",
                range: "[0, 1)",
                value: self.r,
            });
        }
        Ok(())
    }
}

/// Fiber and detector parameters plus the total Alice-Bob distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub distance_km: f64,
    /// Fiber loss, dB/km.
    pub alpha_f: f64,
    /// Detector efficiency.
    pub eta_d: f64,
    /// Dark-count probability per pulse per detector.
    pub p_d: f64,
    /// Misalignment error: fraction of interfering light routed to the wrong port.
    #[serde(rename = "E_d")]
    pub e_d: f64,
    /// Error-correction inefficiency.
    pub f: f64,
}

impl ChannelConfig {
    /// Standard fiber link: 0.2 dB/km, eta_d = 60%, p_d = 1e-9, E_d = 4%, f = 1.1.
    pub fn standard_fiber(distance_km: f64) -> Self {
        Self {
            distance_km,
            alpha_f: 0.2,
            eta_d: 0.6,
            p_d: 1.0e-9,
            e_d: 0.04,
            f: 1.1,
        }
    }

    pub fn with_distance(mut self, distance_km: f64) -> Self {
        self.distance_km = distance_km;
        self
    }

    pub fn with_misalignment(mut self, e_d: f64) -> Self {
        self.e_d = e_d;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fields = [
            ("distance_km", self.distance_km),
            ("alpha_f", self.alpha_f),
            ("eta_d", self.eta_d),
            ("p_d", self.p_d),
            ("E_d", self.e_d),
            ("f", self.f),
        ];
        for (field, value) in fields {
            if !value.is_finite() {
                return Err(ConfigError::NotFinite { field, value });
            }
            if value < 0.0 {
                return Err(ConfigError::Negative { field, value });
            }
        }
        for (field, value) in [("eta_d", self.eta_d), ("p_d", self.p_d), ("E_d", self.e_d)] {
            if value > 1.0 {
                return Err(ConfigError::OutOfRange {
                    field,
                    range: "[0, 1]",
                    value,
                });
            }
        }
        if self.f < 1.0 {
            return Err(ConfigError::OutOfRange {
                field: "f",
                range: "[1, inf)",
                value: self.f,
            });
        }
        Ok(())
    }
}

/// Checks both configurations, reporting the first violated field.
pub fn validate_config(
    protocol: ProtocolConfig,
    channel: ChannelConfig,
) -> Result<(ProtocolConfig, ChannelConfig), ConfigError> {
    protocol.validate()?;
    channel.validate()?;
    Ok((protocol, channel))
}

/// Window classes by the pair of sources chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WindowClass {
    /// Both weak.
    O,
    /// Both strong.
    B,
    /// Exactly one strong.
    Z,
}

/// The four source pairings of a window, Alice's choice first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SourcePair {
    StrongWeak,
    WeakStrong,
    WeakWeak,
    StrongStrong,
}

impl SourcePair {
    pub const ALL: [SourcePair; 4] = [
        SourcePair::StrongWeak,
        SourcePair::WeakStrong,
        SourcePair::WeakWeak,
        SourcePair::StrongStrong,
    ];

    pub fn from_choices(alice_strong: bool, bob_strong: bool) -> Self {
        match (alice_strong, bob_strong) {
            (true, false) => SourcePair::StrongWeak,
            (false, true) => SourcePair::WeakStrong,
            (false, false) => SourcePair::WeakWeak,
            (true, true) => SourcePair::StrongStrong,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn class(self) -> WindowClass {
        match self {
            SourcePair::StrongWeak | SourcePair::WeakStrong => WindowClass::Z,
            SourcePair::WeakWeak => WindowClass::O,
            SourcePair::StrongStrong => WindowClass::B,
        }
    }

    /// Alice: weak means bit 0, strong means bit 1.
    pub fn alice_bit(self) -> u8 {
        match self {
            SourcePair::StrongWeak | SourcePair::StrongStrong => 1,
            SourcePair::WeakStrong | SourcePair::WeakWeak => 0,
        }
    }

    /// Bob: weak means bit 1, strong means bit 0.
    pub fn bob_bit(self) -> u8 {
        match self {
            SourcePair::StrongWeak | SourcePair::WeakWeak => 1,
            SourcePair::WeakStrong | SourcePair::StrongStrong => 0,
        }
    }

    pub fn is_untagged(self) -> bool {
        self.class() == WindowClass::Z
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Detector {
    /// Constructive port.
    L,
    /// Destructive port.
    R,
}

/// Effective-event probabilities per window class and detector, plus the
/// key-window bit-error ingredients.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WindowStats {
    pub s_o_l: f64,
    pub s_o_r: f64,
    pub s_b_l: f64,
    pub s_b_r: f64,
    pub s_z_l: f64,
    pub s_z_r: f64,
    /// Bit-flip error rate of effective key-window bits.
    pub e_k: f64,
    /// Probability that a key window is effective.
    pub d_eff: f64,
}

impl WindowStats {
    pub fn s_o(&self) -> f64 {
        self.s_o_l + self.s_o_r
    }

    pub fn s_b(&self) -> f64 {
        self.s_b_l + self.s_b_r
    }

    pub fn s_z(&self) -> f64 {
        self.s_z_l + self.s_z_r
    }

    /// Effective key-window probability implied by the class frequencies.
    pub fn implied_d_eff(&self, protocol: &ProtocolConfig) -> f64 {
        let (p0, px) = (protocol.p0, protocol.px());
        p0 * p0 * self.s_o() + px * px * self.s_b() + 2.0 * p0 * px * self.s_z()
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("S_O_L", self.s_o_l),
            ("S_O_R", self.s_o_r),
            ("S_B_L", self.s_b_l),
            ("S_B_R", self.s_b_r),
            ("S_Z_L", self.s_z_l),
            ("S_Z_R", self.s_z_r),
            ("E_K", self.e_k),
            ("D_eff", self.d_eff),
        ];
        for (name, value) in fields {
            crate::error::check_unit(name, value)?;
        }
        Ok(())
    }
}

/// Effective-event counts from a finite run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ObservedCounts {
    pub n_o_l: u64,
    pub n_o_r: u64,
    pub n_b_l: u64,
    pub n_b_r: u64,
    pub n_z_l: u64,
    pub n_z_r: u64,
    /// Effective key-window counts indexed by `[SourcePair::index()][detector]`, L = 0, R = 1.
    pub key: [[u64; 2]; 4],
}

impl ObservedCounts {
    pub fn key_total(&self) -> u64 {
        self.key.iter().flatten().sum()
    }

    pub fn key_for(&self, pair: SourcePair) -> u64 {
        self.key[pair.index()].iter().sum()
    }

    pub fn merge(&mut self, other: &ObservedCounts) {
        self.n_o_l += other.n_o_l;
        self.n_o_r += other.n_o_r;
        self.n_b_l += other.n_b_l;
        self.n_b_r += other.n_b_r;
        self.n_z_l += other.n_z_l;
        self.n_z_r += other.n_z_r;
        for (row, other_row) in self.key.iter_mut().zip(other.key.iter()) {
            for (count, other_count) in row.iter_mut().zip(other_row.iter()) {
                *count += other_count;
            }
        }
    }
}

/// Output of the phase-error analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecuritySummary {
    pub c0: f64,
    pub c1: f64,
    pub c2_bar: f64,
    pub n_ph_upper: f64,
    pub n_u: f64,
    pub e_ph_upper: f64,
    /// The phase-error bracket came out negative and was clamped to zero.
    pub bracket_clamped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Original,
    Twcc,
    Aopp,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Original, Mode::Twcc, Mode::Aopp];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Original => "original",
            Mode::Twcc => "twcc",
            Mode::Aopp => "aopp",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "original" => Ok(Mode::Original),
            "twcc" => Ok(Mode::Twcc),
            "aopp" => Ok(Mode::Aopp),
            other => Err(format!(
                "unknown mode `{other}` (expected original, twcc or aopp)"
            )),
        }
    }
}

/// Bit statistics after standard two-way pairing: survivors from 00 pairs,
/// 11 pairs and odd-parity pairs, with their bit-flip error rates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TwccStats {
    pub n_t1: f64,
    pub n_t2: f64,
    pub n_t3: f64,
    pub e_1: f64,
    pub e_2: f64,
    pub e_3: f64,
}

impl TwccStats {
    pub fn survivors(&self) -> f64 {
        self.n_t1 + self.n_t2 + self.n_t3
    }

    pub fn mean_error(&self) -> f64 {
        let total = self.survivors();
        if total > 0.0 {
            (self.n_t1 * self.e_1 + self.n_t2 * self.e_2 + self.n_t3 * self.e_3) / total
        } else {
            0.0
        }
    }
}

/// Bit statistics after actively odd-parity pairing.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AoppStats {
    /// Bob's 0 bits before pairing.
    pub n_b0: f64,
    pub n_b1: f64,
    /// Pairs formed, `min(n_b0, n_b1)`.
    pub n_g: f64,
    /// Untagged members of Bob's 0 population.
    pub n_u0: f64,
    pub n_u1: f64,
    /// Surviving bits.
    pub n_t_aopp: f64,
    pub e_aopp: f64,
    /// No pairs could be formed.
    pub empty: bool,
}

/// Mode-specific intermediates of a key-rate evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RateDetail {
    Original {
        n_t: f64,
        e_k: f64,
    },
    Twcc {
        n_u_twcc: f64,
        e_ph_twcc: f64,
        stats: TwccStats,
    },
    Aopp {
        n_u_aopp: f64,
        e_ph_aopp: f64,
        stats: AoppStats,
    },
}

/// Key rate per window and everything it was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyRateReport {
    pub mode: Mode,
    /// Clamped key rate, never negative.
    pub key_rate: f64,
    /// Value of the rate formula before clamping.
    pub raw_key_rate: f64,
    /// Raw rate was negative, or the phase-error rate reached 1/2.
    pub no_key: bool,
    pub summary: SecuritySummary,
    pub detail: RateDetail,
}

impl KeyRateReport {
    /// Phase-error rate entering privacy amplification for this mode.
    pub fn e_ph(&self) -> f64 {
        match self.detail {
            RateDetail::Original { .. } => self.summary.e_ph_upper,
            RateDetail::Twcc { e_ph_twcc, .. } => e_ph_twcc,
            RateDetail::Aopp { e_ph_aopp, .. } => e_ph_aopp,
        }
    }

    /// Bit-flip error rate of the bits entering error correction.
    pub fn bit_error(&self) -> f64 {
        match self.detail {
            RateDetail::Original { e_k, .. } => e_k,
            RateDetail::Twcc { stats, .. } => stats.mean_error(),
            RateDetail::Aopp { stats, .. } => stats.e_aopp,
        }
    }
}

/// Binary Shannon entropy in bits, with H(0) = H(1) = 0.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain {
            name: "x",
            value: x,
            domain: "[0, 1]",
        });
    }
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-x * x.log2() - (1.0 - x) * (1.0 - x).log2())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn entropy_reference_points() {
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        // 40-digit evaluation of the defining formula: 0.49991595816452799564...
        assert!((binary_entropy(0.11).unwrap() - 0.499_915_958_164_528).abs() < 1e-14);
    }

    #[test]
    fn entropy_rejects_out_of_domain() {
        assert!(binary_entropy(-1e-9).is_err());
        assert!(binary_entropy(1.0 + 1e-12).is_err());
        assert!(binary_entropy(f64::NAN).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn entropy_is_symmetric(x in 0.0f64..=1.0) {
            let d = binary_entropy(x).unwrap() - binary_entropy(1.0 - x).unwrap();
            prop_assert!(d.abs() <= 1e-14);
        }

        #[test]
        fn entropy_is_concave(a in 0.0f64..=1.0, b in 0.0f64..=1.0, lambda in 0.0f64..=1.0) {
            let mid = binary_entropy(lambda * a + (1.0 - lambda) * b).unwrap();
            let chord = lambda * binary_entropy(a).unwrap() + (1.0 - lambda) * binary_entropy(b).unwrap();
            prop_assert!(mid >= chord - 1e-12);
        }

        #[test]
        fn validation_is_total(
            nu in prop::num::f64::ANY, mu in prop::num::f64::ANY,
            p0 in prop::num::f64::ANY, r in prop::num::f64::ANY,
            d in prop::num::f64::ANY, e in prop::num::f64::ANY,
        ) {
            let protocol = ProtocolConfig::symmetric(nu, mu, p0, r, 10);
            let channel = ChannelConfig::standard_fiber(d).with_misalignment(e);
            match validate_config(protocol, channel) {
                Ok(_) => {}
                Err(err) => prop_assert!(!err.field().is_empty()),
            }
        }
    }

    #[test]
    fn standard_fiber_is_accepted() {
        let protocol = ProtocolConfig::symmetric(1e-8, 0.1, 0.5, 0.0, 1_000_000);
        assert!(validate_config(protocol, ChannelConfig::standard_fiber(100.0)).is_ok());
    }

    #[test]
    fn rejects_named_fields() {
        let channel = ChannelConfig::standard_fiber(100.0);
        let err = validate_config(ProtocolConfig::symmetric(1e-8, 0.1, 1.2, 0.0, 1), channel)
            .unwrap_err();
        assert_eq!(err.field(), "p0");

        let err =
            validate_config(ProtocolConfig::symmetric(0.2, 0.1, 0.5, 0.0, 1), channel).unwrap_err();
        assert!(matches!(err, ConfigError::IntensityOrder { .. }));
        assert_eq!(err.field(), "nu_upper_A");

        let err = validate_config(
            ProtocolConfig::symmetric(0.0, 0.1, 0.5, 0.0, 1),
            channel.with_misalignment(1.5),
        )
        .unwrap_err();
        assert_eq!(err.field(), "E_d");

        let mut bad_f = channel;
        bad_f.f = 0.9;
        assert_eq!(
            validate_config(ProtocolConfig::symmetric(0.0, 0.1, 0.5, 0.0, 1), bad_f)
                .unwrap_err()
                .field(),
            "f"
        );
    }

    #[test]
    fn bit_assignment_follows_source_choice() {
        assert_eq!(
            SourcePair::StrongWeak.alice_bit(),
            SourcePair::StrongWeak.bob_bit()
        );
        assert_eq!(
            SourcePair::WeakStrong.alice_bit(),
            SourcePair::WeakStrong.bob_bit()
        );
        assert_ne!(
            SourcePair::WeakWeak.alice_bit(),
            SourcePair::WeakWeak.bob_bit()
        );
        assert_ne!(
            SourcePair::StrongStrong.alice_bit(),
            SourcePair::StrongStrong.bob_bit()
        );
        assert_eq!(SourcePair::WeakStrong.bob_bit(), 0);
        assert_eq!(SourcePair::StrongWeak.bob_bit(), 1);
    }
}
