//! Seeded finite-N simulation of the three-party protocol and of the
//! bit-level two-way post-processing.
//!
//! Windows are processed in fixed-size chunks. Chunk `k` draws from a
//! ChaCha8 generator seeded with the run seed on stream `k`, so results do
//! not depend on how many workers process the chunks. Post-processing
//! shuffles use reserved streams above every chunk index.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::pair_click_table;
use crate::error::{Error, Result};
use crate::params::{
    validate_config, AoppStats, ChannelConfig, Detector, KeyRateReport, ObservedCounts,
    ProtocolConfig, SourcePair, TwccStats, WindowClass, WindowStats,
};
use crate::postprocess::KeyComposition;
use crate::rates::{
    key_rate_aopp, key_rate_original, key_rate_twcc, phase_error_bracket, security_summary,
    BoundCoefficients,
};

/// Windows per RNG stream.
pub const CHUNK_WINDOWS: u64 = 1 << 20;

const TWCC_STREAM: u64 = 1 << 62;
const AOPP_STREAM: u64 = (1 << 62) + 1;

/// Seed of a simulation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SimSeed(pub u64);

impl SimSeed {
    /// Generator for stream `stream` of this seed.
    pub fn stream(self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream(stream);
        rng
    }
}

/// One effective key-generation window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyRecord {
    pub pair: SourcePair,
    pub detector: Detector,
}

impl KeyRecord {
    pub fn alice_bit(&self) -> u8 {
        self.pair.alice_bit()
    }

    pub fn bob_bit(&self) -> u8 {
        self.pair.bob_bit()
    }
}

/// Effective key-generation windows in window order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawKeySample {
    pub records: Vec<KeyRecord>,
}

impl RawKeySample {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn errors(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.alice_bit() != r.bob_bit())
            .count()
    }

    pub fn composition(&self) -> KeyComposition {
        let mut counts = [0.0; 4];
        for record in &self.records {
            counts[record.pair.index()] += 1.0;
        }
        KeyComposition { counts }
    }
}

struct ChunkResult {
    counts: ObservedCounts,
    records: Vec<KeyRecord>,
}

fn simulate_chunk(
    protocol: &ProtocolConfig,
    table: &[(f64, f64); 4],
    seed: SimSeed,
    chunk: u64,
    windows: u64,
) -> ChunkResult {
    let mut rng = seed.stream(chunk);
    let px = protocol.px();
    let mut counts = ObservedCounts::default();
    let mut records = Vec::new();
    for _ in 0..windows {
        let alice_strong = rng.random::<f64>() < px;
        let bob_strong = rng.random::<f64>() < px;
        let test = rng.random::<f64>() < protocol.r;
        let u = rng.random::<f64>();
        let pair = SourcePair::from_choices(alice_strong, bob_strong);
        let (s_l, s_r) = table[pair.index()];
        let detector = if u < s_l {
            Detector::L
        } else if u < s_l + s_r {
            Detector::R
        } else {
            continue;
        };
        if test {
            let slot = match (pair.class(), detector) {
                (WindowClass::O, Detector::L) => &mut counts.n_o_l,
                (WindowClass::O, Detector::R) => &mut counts.n_o_r,
                (WindowClass::B, Detector::L) => &mut counts.n_b_l,
                (WindowClass::B, Detector::R) => &mut counts.n_b_r,
                (WindowClass::Z, Detector::L) => &mut counts.n_z_l,
                (WindowClass::Z, Detector::R) => &mut counts.n_z_r,
            };
            *slot += 1;
        } else {
            let d = match detector {
                Detector::L => 0,
                Detector::R => 1,
            };
            counts.key[pair.index()][d] += 1;
            records.push(KeyRecord { pair, detector });
        }
    }
    ChunkResult { counts, records }
}

/// Runs `N` windows: source choices, test/key assignment and Charlie's announcement.
///
/// Test windows feed the observed counts; effective key windows are kept
/// as a raw key sample.
pub fn simulate_counts(
    protocol: &ProtocolConfig,
    channel: &ChannelConfig,
    seed: SimSeed,
) -> Result<(ObservedCounts, RawKeySample)> {
    let (protocol, channel) = validate_config(*protocol, *channel)?;
    let table = pair_click_table(&protocol, &channel);
    let n = protocol.n_windows;
    let chunks = n.div_ceil(CHUNK_WINDOWS);
    let results: Vec<ChunkResult> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let start = chunk * CHUNK_WINDOWS;
            let windows = CHUNK_WINDOWS.min(n - start);
            simulate_chunk(&protocol, &table, seed, chunk, windows)
        })
        .collect();

    let mut counts = ObservedCounts::default();
    let mut sample = RawKeySample {
        records: Vec::with_capacity(results.iter().map(|c| c.records.len()).sum()),
    };
    for chunk in results {
        counts.merge(&chunk.counts);
        sample.records.extend(chunk.records);
    }
    Ok((counts, sample))
}

/// Effective-event frequencies from observed test counts; `E_K` and
/// `D_eff` from the key-window counts.
pub fn estimate_stats(counts: &ObservedCounts, protocol: &ProtocolConfig) -> Result<WindowStats> {
    if protocol.r <= 0.0 {
        return Err(Error::ZeroTestFraction);
    }
    let n = protocol.n();
    if n == 0.0 {
        return Ok(WindowStats::default());
    }
    let (p0, px, r) = (protocol.p0, protocol.px(), protocol.r);
    let freq = |count: u64, weight: f64| (count as f64 / (n * weight * r)).min(1.0);
    let key_total = counts.key_total() as f64;
    let key_errors =
        (counts.key_for(SourcePair::WeakWeak) + counts.key_for(SourcePair::StrongStrong)) as f64;
    Ok(WindowStats {
        s_o_l: freq(counts.n_o_l, p0 * p0),
        s_o_r: freq(counts.n_o_r, p0 * p0),
        s_b_l: freq(counts.n_b_l, px * px),
        s_b_r: freq(counts.n_b_r, px * px),
        s_z_l: freq(counts.n_z_l, 2.0 * p0 * px),
        s_z_r: freq(counts.n_z_r, 2.0 * p0 * px),
        e_k: if key_total > 0.0 {
            key_errors / key_total
        } else {
            0.0
        },
        d_eff: (key_total / (n * (1.0 - r))).min(1.0),
    })
}

fn rate(errors: u64, total: u64) -> f64 {
    if total == 0 {
        0.0
    } else {
        errors as f64 / total as f64
    }
}

/// Standard two-way pairing on the raw key.
///
/// Bob pairs his bits uniformly at random (an odd leftover bit is dropped);
/// pairs whose parities agree keep their first bit.
pub fn simulate_twcc(sample: &RawKeySample, seed: SimSeed) -> TwccStats {
    let mut order: Vec<usize> = (0..sample.len()).collect();
    order.shuffle(&mut seed.stream(TWCC_STREAM));

    let mut kept = [0u64; 3];
    let mut wrong = [0u64; 3];
    for pair in order.chunks_exact(2) {
        let (x, y) = (sample.records[pair[0]], sample.records[pair[1]]);
        if x.alice_bit() ^ y.alice_bit() != x.bob_bit() ^ y.bob_bit() {
            continue;
        }
        let class = match (x.bob_bit(), y.bob_bit()) {
            (0, 0) => 0,
            (1, 1) => 1,
            _ => 2,
        };
        kept[class] += 1;
        if x.alice_bit() != x.bob_bit() {
            wrong[class] += 1;
        }
    }
    TwccStats {
        n_t1: kept[0] as f64,
        n_t2: kept[1] as f64,
        n_t3: kept[2] as f64,
        e_1: rate(wrong[0], kept[0]),
        e_2: rate(wrong[1], kept[1]),
        e_3: rate(wrong[2], kept[2]),
    }
}

/// Actively odd-parity pairing on the raw key.
///
/// Each of Bob's 0 bits is matched with a random 1 bit until one population
/// runs out; pairs where Alice's parity is odd survive and keep Bob's 0 bit.
pub fn simulate_aopp(sample: &RawKeySample, seed: SimSeed) -> AoppStats {
    let (mut zeros, mut ones): (Vec<KeyRecord>, Vec<KeyRecord>) =
        sample.records.iter().partition(|r| r.bob_bit() == 0);
    let n_u0 = zeros.iter().filter(|r| r.pair.is_untagged()).count();
    let n_u1 = ones.iter().filter(|r| r.pair.is_untagged()).count();
    let mut rng = seed.stream(AOPP_STREAM);
    zeros.shuffle(&mut rng);
    ones.shuffle(&mut rng);

    let n_g = zeros.len().min(ones.len());
    let mut kept = 0u64;
    let mut wrong = 0u64;
    for (x, y) in zeros.iter().zip(ones.iter()) {
        if x.alice_bit() ^ y.alice_bit() == 1 {
            kept += 1;
            if x.alice_bit() != x.bob_bit() {
                wrong += 1;
            }
        }
    }
    AoppStats {
        n_b0: zeros.len() as f64,
        n_b1: ones.len() as f64,
        n_g: n_g as f64,
        n_u0: n_u0 as f64,
        n_u1: n_u1 as f64,
        n_t_aopp: kept as f64,
        e_aopp: rate(wrong, kept),
        empty: n_g == 0,
    }
}

/// A full finite-N run: counts, estimated statistics, bounds and key rates.
#[derive(Debug, Clone)]
pub struct MonteCarloRun {
    pub counts: ObservedCounts,
    pub sample: RawKeySample,
    pub stats: WindowStats,
    pub twcc: TwccStats,
    pub aopp: AoppStats,
    pub original_report: KeyRateReport,
    pub twcc_report: KeyRateReport,
    pub aopp_report: KeyRateReport,
}

/// Simulates a run and pushes the observed data through the bounds.
pub fn run(
    protocol: &ProtocolConfig,
    channel: &ChannelConfig,
    seed: SimSeed,
) -> Result<MonteCarloRun> {
    if protocol.r <= 0.0 {
        return Err(Error::ZeroTestFraction);
    }
    let (counts, sample) = simulate_counts(protocol, channel, seed)?;
    let stats = estimate_stats(&counts, protocol)?;
    let coeffs = BoundCoefficients::for_protocol(protocol);
    let summary = security_summary(&stats, protocol, &coeffs);
    let twcc = simulate_twcc(&sample, seed);
    let aopp = simulate_aopp(&sample, seed);
    let n = protocol.n();
    let n_t = sample.len() as f64;
    let e_k = rate(sample.errors() as u64, sample.len() as u64);
    Ok(MonteCarloRun {
        original_report: key_rate_original(&summary, n_t, e_k, channel.f, n)?,
        twcc_report: key_rate_twcc(&summary, n_t, &twcc, channel.f, n)?,
        aopp_report: key_rate_aopp(&summary, &aopp, channel.f, n)?,
        counts,
        sample,
        stats,
        twcc,
        aopp,
    })
}

/// An observed count next to its analytic expectation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountCheck {
    pub name: &'static str,
    pub observed: f64,
    pub expected: f64,
    pub sigma: f64,
}

impl CountCheck {
    /// Standardized deviation; 0 when both spread and deviation vanish.
    pub fn z(&self) -> f64 {
        let d = self.observed - self.expected;
        if self.sigma > 0.0 {
            d / self.sigma
        } else if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

fn binomial(name: &'static str, observed: u64, n: f64, p: f64) -> CountCheck {
    CountCheck {
        name,
        observed: observed as f64,
        expected: n * p,
        sigma: (n * p * (1.0 - p)).sqrt(),
    }
}

/// Six test-window counts and the two untagged key populations against
/// their binomial expectations under the analytic channel.
pub fn count_checks(
    protocol: &ProtocolConfig,
    channel: &ChannelConfig,
    counts: &ObservedCounts,
) -> Vec<CountCheck> {
    let table = pair_click_table(protocol, channel);
    let n = protocol.n();
    let (p0, px, r) = (protocol.p0, protocol.px(), protocol.r);
    let s = |pair: SourcePair| table[pair.index()];
    let (o, b) = (s(SourcePair::WeakWeak), s(SourcePair::StrongStrong));
    let (sw, ws) = (s(SourcePair::StrongWeak), s(SourcePair::WeakStrong));
    vec![
        binomial("n_O_L", counts.n_o_l, n, r * p0 * p0 * o.0),
        binomial("n_O_R", counts.n_o_r, n, r * p0 * p0 * o.1),
        binomial("n_B_L", counts.n_b_l, n, r * px * px * b.0),
        binomial("n_B_R", counts.n_b_r, n, r * px * px * b.1),
        binomial("n_Z_L", counts.n_z_l, n, r * p0 * px * (sw.0 + ws.0)),
        binomial("n_Z_R", counts.n_z_r, n, r * p0 * px * (sw.1 + ws.1)),
        binomial(
            "n_u0",
            counts.key_for(SourcePair::WeakStrong),
            n,
            (1.0 - r) * p0 * px * (ws.0 + ws.1),
        ),
        binomial(
            "n_u1",
            counts.key_for(SourcePair::StrongWeak),
            n,
            (1.0 - r) * px * p0 * (sw.0 + sw.1),
        ),
    ]
}

/// Phase-error rate as a function of the six frequencies, unclamped.
fn phase_error_of(stats: &WindowStats, coeffs: &BoundCoefficients) -> f64 {
    phase_error_bracket(stats, coeffs).max(0.0) / (4.0 * stats.s_z())
}

/// Standard deviation of the Monte-Carlo phase-error estimate, by the delta
/// method around the expected frequencies with multinomial count noise.
pub fn phase_error_sigma(
    stats: &WindowStats,
    protocol: &ProtocolConfig,
    coeffs: &BoundCoefficients,
) -> f64 {
    let n = protocol.n();
    let (p0, px, r) = (protocol.p0, protocol.px(), protocol.r);
    if n == 0.0 || r <= 0.0 || stats.s_z() <= 0.0 {
        return f64::INFINITY;
    }
    // (class weight, left frequency accessor, right frequency accessor)
    type Field = fn(&mut WindowStats) -> &mut f64;
    let classes: [(f64, Field, Field); 3] = [
        (p0 * p0, |s| &mut s.s_o_l, |s| &mut s.s_o_r),
        (px * px, |s| &mut s.s_b_l, |s| &mut s.s_b_r),
        (2.0 * p0 * px, |s| &mut s.s_z_l, |s| &mut s.s_z_r),
    ];
    let gradient = |field: Field| {
        let mut probe = *stats;
        let x = *field(&mut probe);
        let h = if x > 0.0 { 1e-4 * x } else { 1e-18 };
        *field(&mut probe) = x + h;
        let up = phase_error_of(&probe, coeffs);
        *field(&mut probe) = (x - h).max(0.0);
        let down = phase_error_of(&probe, coeffs);
        (up - down) / (x + h - (x - h).max(0.0))
    };
    let mut variance = 0.0;
    for (weight, left, right) in classes {
        let scale = n * weight * r;
        let mut current = *stats;
        let pl = *left(&mut current) * weight * r;
        let pr = *right(&mut current) * weight * r;
        let (gl, gr) = (gradient(left), gradient(right));
        let var_l = n * pl * (1.0 - pl) / (scale * scale);
        let var_r = n * pr * (1.0 - pr) / (scale * scale);
        let cov = -n * pl * pr / (scale * scale);
        variance += gl * gl * var_l + gr * gr * var_r + 2.0 * gl * gr * cov;
    }
    variance.max(0.0).sqrt()
}
