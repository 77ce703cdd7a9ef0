//! Expected outcome of two-way parity pairing on a raw key of known class
//! composition.
//!
//! Each effective key bit comes from one of four source pairings. Z̃ bits
//! (one strong, one weak) agree between Alice and Bob; O and B bits always
//! disagree. Bob's 0 population holds the weak/strong Z̃ bits and the B
//! bits; his 1 population holds the strong/weak Z̃ bits and the O bits.

use crate::params::{AoppStats, ProtocolConfig, SourcePair, TwccStats, WindowStats};

/// Number of effective key bits from each source pairing.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KeyComposition {
    /// Indexed by [`SourcePair::index`].
    pub counts: [f64; 4],
}

impl KeyComposition {
    /// Expected composition of the key-generation windows of a run.
    pub fn expected(stats: &WindowStats, protocol: &ProtocolConfig) -> Self {
        let key_windows = protocol.n() * (1.0 - protocol.r);
        let (p0, px) = (protocol.p0, protocol.px());
        let mut counts = [0.0; 4];
        counts[SourcePair::StrongWeak.index()] = key_windows * px * p0 * stats.s_z();
        counts[SourcePair::WeakStrong.index()] = key_windows * p0 * px * stats.s_z();
        counts[SourcePair::WeakWeak.index()] = key_windows * p0 * p0 * stats.s_o();
        counts[SourcePair::StrongStrong.index()] = key_windows * px * px * stats.s_b();
        Self { counts }
    }

    pub fn get(&self, pair: SourcePair) -> f64 {
        self.counts[pair.index()]
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// Bits Bob holds as 0.
    pub fn bob_zeros(&self) -> f64 {
        self.get(SourcePair::WeakStrong) + self.get(SourcePair::StrongStrong)
    }

    pub fn bob_ones(&self) -> f64 {
        self.get(SourcePair::StrongWeak) + self.get(SourcePair::WeakWeak)
    }

    pub fn untagged(&self) -> f64 {
        self.get(SourcePair::StrongWeak) + self.get(SourcePair::WeakStrong)
    }

    pub fn errors(&self) -> f64 {
        self.get(SourcePair::WeakWeak) + self.get(SourcePair::StrongStrong)
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Expected standard-pairing statistics when Bob pairs his bits uniformly at random.
///
/// A pair survives when Alice's and Bob's parities agree, i.e. both bits are
/// correct or both are wrong; the kept bit is then wrong exactly in the
/// second case.
pub fn expected_twcc(composition: &KeyComposition) -> TwccStats {
    let total = composition.total();
    if total <= 0.0 {
        return TwccStats::default();
    }
    let q = |pair| composition.get(pair) / total;
    let zero_ok = q(SourcePair::WeakStrong);
    let zero_bad = q(SourcePair::StrongStrong);
    let one_ok = q(SourcePair::StrongWeak);
    let one_bad = q(SourcePair::WeakWeak);
    let pairs = 0.5 * total;

    let keep_00 = zero_ok * zero_ok + zero_bad * zero_bad;
    let keep_11 = one_ok * one_ok + one_bad * one_bad;
    let keep_odd = 2.0 * (zero_ok * one_ok + zero_bad * one_bad);
    TwccStats {
        n_t1: pairs * keep_00,
        n_t2: pairs * keep_11,
        n_t3: pairs * keep_odd,
        e_1: ratio(zero_bad * zero_bad, keep_00),
        e_2: ratio(one_bad * one_bad, keep_11),
        e_3: ratio(2.0 * zero_bad * one_bad, keep_odd),
    }
}

/// Expected odd-parity-pairing statistics when Bob pairs each 0 with a random 1.
pub fn expected_aopp(composition: &KeyComposition) -> AoppStats {
    let n_b0 = composition.bob_zeros();
    let n_b1 = composition.bob_ones();
    let n_g = n_b0.min(n_b1);
    let n_u0 = composition.get(SourcePair::WeakStrong);
    let n_u1 = composition.get(SourcePair::StrongWeak);
    let ok0 = ratio(n_u0, n_b0);
    let ok1 = ratio(n_u1, n_b1);
    let both_ok = ok0 * ok1;
    let both_bad = (1.0 - ok0) * (1.0 - ok1);
    let keep = both_ok + both_bad;
    let empty = n_g <= 0.0;
    AoppStats {
        n_b0,
        n_b1,
        n_g,
        n_u0,
        n_u1,
        n_t_aopp: if empty { 0.0 } else { n_g * keep },
        e_aopp: if empty { 0.0 } else { ratio(both_bad, keep) },
        empty,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn comp(sw: f64, ws: f64, ww: f64, ss: f64) -> KeyComposition {
        KeyComposition {
            counts: [sw, ws, ww, ss],
        }
    }

    #[test]
    fn error_free_key_keeps_every_pair() {
        let c = comp(50.0, 50.0, 0.0, 0.0);
        let t = expected_twcc(&c);
        assert_eq!(t.survivors(), 50.0);
        assert_eq!((t.e_1, t.e_2, t.e_3), (0.0, 0.0, 0.0));
        let a = expected_aopp(&c);
        assert_eq!(a.n_g, 50.0);
        assert_eq!(a.n_t_aopp, 50.0);
        assert_eq!(a.e_aopp, 0.0);
    }

    #[test]
    fn all_wrong_key_keeps_pairs_with_full_error() {
        let t = expected_twcc(&comp(0.0, 0.0, 40.0, 60.0));
        assert_eq!(t.survivors(), 50.0);
        assert_eq!(t.mean_error(), 1.0);
    }

    #[test]
    fn aopp_without_zeros_forms_no_pairs() {
        let a = expected_aopp(&comp(10.0, 0.0, 5.0, 0.0));
        assert_eq!(a.n_g, 0.0);
        assert!(a.empty);
        assert_eq!(a.n_t_aopp, 0.0);
    }

    #[test]
    fn pairing_suppresses_errors() {
        // 10% errors spread evenly: pairing leaves roughly 1% after one round.
        let c = comp(45.0, 45.0, 5.0, 5.0);
        let t = expected_twcc(&c);
        assert!(t.mean_error() < 0.02);
        let a = expected_aopp(&c);
        assert!((a.e_aopp - 0.01 / (0.81 + 0.01)).abs() < 1e-15);
    }
}
