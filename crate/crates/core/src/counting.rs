//! Photon-counting observables: analytic rate predictions, Monte Carlo
//! time-tag simulation, delay histograms, and g²/CAR extraction.

use std::io::{BufRead, Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pulses simulated per RNG substream; batches are reproducible and
/// thread-count independent because each owns stream `1 + batch_index`.
const PULSE_BATCH: u64 = 1 << 16;
/// RNG stream offset for the four background/dark processes.
const NOISE_STREAM_BASE: u64 = 1 << 40;

/// One detection arm: a cascade of lossy stages followed by a detector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionChain {
    pub label: String,
    /// Named transmittances in (0, 1], applied multiplicatively.
    pub stages: Vec<(String, f64)>,
    /// Detector quantum efficiency in (0, 1].
    pub detector_efficiency: f64,
    /// Dark counts, Hz.
    pub dark_count_rate_hz: f64,
    /// Uncorrelated photons reaching the detector, Hz.
    pub background_rate_hz: f64,
    /// Detection-time jitter (one sigma), ps.
    pub jitter_sigma_ps: f64,
}

impl DetectionChain {
    pub fn new(label: impl Into<String>, detector_efficiency: f64) -> Self {
        DetectionChain {
            label: label.into(),
            stages: Vec::new(),
            detector_efficiency,
            dark_count_rate_hz: 0.0,
            background_rate_hz: 0.0,
            jitter_sigma_ps: 0.0,
        }
    }

    pub fn with_stage(mut self, name: impl Into<String>, transmittance: f64) -> Self {
        self.stages.push((name.into(), transmittance));
        self
    }

    pub fn with_background(mut self, rate_hz: f64) -> Self {
        self.background_rate_hz = rate_hz;
        self
    }

    pub fn with_dark_counts(mut self, rate_hz: f64) -> Self {
        self.dark_count_rate_hz = rate_hz;
        self
    }

    pub fn with_jitter(mut self, sigma_ps: f64) -> Self {
        self.jitter_sigma_ps = sigma_ps;
        self
    }

    /// Product of all stage transmittances and the detector efficiency.
    pub fn total_efficiency(&self) -> f64 {
        self.stages.iter().map(|(_, t)| t).product::<f64>() * self.detector_efficiency
    }

    /// Background plus dark rate: every count on this arm not caused by a pair.
    pub fn noise_rate_hz(&self) -> f64 {
        self.background_rate_hz + self.dark_count_rate_hz
    }

    pub fn validate(&self) -> Result<()> {
        for (name, t) in &self.stages {
            if !(*t > 0.0 && *t <= 1.0) {
                return Err(Error::Config(format!(
                    "chain '{}': stage '{name}' transmittance {t} outside (0, 1]",
                    self.label
                )));
            }
        }
        if !(self.detector_efficiency > 0.0 && self.detector_efficiency <= 1.0) {
            return Err(Error::Config(format!(
                "chain '{}': detector_efficiency {} outside (0, 1]",
                self.label, self.detector_efficiency
            )));
        }
        if self.dark_count_rate_hz < 0.0
            || self.background_rate_hz < 0.0
            || self.jitter_sigma_ps < 0.0
        {
            return Err(Error::Config(format!(
                "chain '{}': rates and jitter must be non-negative",
                self.label
            )));
        }
        Ok(())
    }
}

/// Per-pulse pair-number law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairStatistics {
    /// Many independent spectral modes: Poisson(μ).
    Poisson,
    /// Single-mode limit: Bose-Einstein with mean μ.
    Thermal,
}

/// Pair-generation model: mean pairs per pulse μ = κ·P² at average power P.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceModel {
    /// κ, pairs/pulse/mW².
    pub pair_rate_coefficient: f64,
    pub statistics: PairStatistics,
    pub rep_rate_hz: f64,
}

impl SourceModel {
    pub fn new(pair_rate_coefficient: f64, rep_rate_hz: f64) -> Self {
        SourceModel {
            pair_rate_coefficient,
            statistics: PairStatistics::Poisson,
            rep_rate_hz,
        }
    }

    pub fn with_statistics(mut self, statistics: PairStatistics) -> Self {
        self.statistics = statistics;
        self
    }

    pub fn mean_pairs_per_pulse(&self, power_mw: f64) -> f64 {
        self.pair_rate_coefficient * power_mw * power_mw
    }

    pub fn validate(&self) -> Result<()> {
        if self.pair_rate_coefficient < 0.0 {
            return Err(Error::Config(
                "pair_rate_coefficient must be non-negative".into(),
            ));
        }
        if self.rep_rate_hz <= 0.0 {
            return Err(Error::Config("rep_rate_hz must be positive".into()));
        }
        Ok(())
    }
}

/// Analytic counting observables at one pump power.
#[derive(Debug, Clone, Serialize)]
pub struct CountingResult {
    pub power_mw: f64,
    pub mean_pairs_per_pulse: f64,
    pub singles_s_hz: f64,
    pub singles_i_hz: f64,
    /// True-pair coincidence rate at the detectors (first order in μ).
    pub coincidences_hz: f64,
    /// Pulsed-source accidentals: independent singles products pile at the
    /// periodic histogram peaks, one pulse period wide.
    pub accidentals_hz: f64,
    /// coincidences/accidentals; `None` when either rate vanishes.
    pub g2: Option<f64>,
    /// Equals g² for a pulsed source: (peak − accidental)/accidental.
    pub car: Option<f64>,
    pub heralding_s_given_i: f64,
    pub heralding_i_given_s: f64,
}

/// Accidental-coincidence rate for a pulsed source: all products of
/// independent singles within one period land on a periodic peak.
pub fn pulsed_accidental_rate(singles_s_hz: f64, singles_i_hz: f64, rep_rate_hz: f64) -> f64 {
    singles_s_hz * singles_i_hz / rep_rate_hz
}

/// Singles, coincidences, accidentals, g², CAR and heralding efficiencies
/// from the low-gain analytic model.
pub fn analytic_rates(
    src: &SourceModel,
    chain_s: &DetectionChain,
    chain_i: &DetectionChain,
    power_mw: f64,
    window_ns: f64,
) -> Result<CountingResult> {
    src.validate()?;
    chain_s.validate()?;
    chain_i.validate()?;
    if power_mw < 0.0 {
        return Err(Error::Config(format!("power {power_mw} mW is negative")));
    }
    if !(window_ns > 0.0) || window_ns * 1e-9 >= 1.0 / src.rep_rate_hz {
        return Err(Error::Config(format!(
            "coincidence window {window_ns} ns must lie in (0, pulse period)"
        )));
    }
    let mu = src.mean_pairs_per_pulse(power_mw);
    let r = src.rep_rate_hz;
    let eta_s = chain_s.total_efficiency();
    let eta_i = chain_i.total_efficiency();
    let singles_s = r * mu * eta_s + chain_s.noise_rate_hz();
    let singles_i = r * mu * eta_i + chain_i.noise_rate_hz();
    let coincidences = r * mu * eta_s * eta_i;
    let accidentals = pulsed_accidental_rate(singles_s, singles_i, r);
    let defined = coincidences > 0.0 && accidentals > 0.0;
    let ratio = defined.then(|| coincidences / accidentals);
    Ok(CountingResult {
        power_mw,
        mean_pairs_per_pulse: mu,
        singles_s_hz: singles_s,
        singles_i_hz: singles_i,
        coincidences_hz: coincidences,
        accidentals_hz: accidentals,
        g2: ratio,
        car: ratio,
        heralding_s_given_i: if singles_i > 0.0 { coincidences / singles_i } else { 0.0 },
        heralding_i_given_s: if singles_s > 0.0 { coincidences / singles_s } else { 0.0 },
    })
}

/// Pair rate at the source, before all losses: coincidences/(η_s·η_i).
pub fn backout_source_rate(
    coincidences_hz: f64,
    chain_s: &DetectionChain,
    chain_i: &DetectionChain,
) -> Result<f64> {
    let eta = chain_s.total_efficiency() * chain_i.total_efficiency();
    if eta <= 0.0 {
        return Err(Error::ZeroEfficiency);
    }
    Ok(coincidences_hz / eta)
}

/// κ fitted from one measured coincidence rate at one power.
pub fn fit_pair_coefficient(
    coincidences_hz: f64,
    power_mw: f64,
    rep_rate_hz: f64,
    chain_s: &DetectionChain,
    chain_i: &DetectionChain,
) -> Result<f64> {
    let eta = chain_s.total_efficiency() * chain_i.total_efficiency();
    if eta <= 0.0 {
        return Err(Error::ZeroEfficiency);
    }
    if power_mw <= 0.0 || rep_rate_hz <= 0.0 {
        return Err(Error::Config(
            "fit requires positive power and repetition rate".into(),
        ));
    }
    Ok(coincidences_hz / (rep_rate_hz * eta * power_mw * power_mw))
}

/// Background rate reconciling a measured singles rate with the
/// pair-correlated prediction on one arm.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BackgroundFit {
    pub background_hz: f64,
    /// Pair-correlated singles the model predicts on this arm.
    pub pair_singles_hz: f64,
    /// True when the residual was negative (model exceeds measurement) and
    /// the background was clamped to zero.
    pub clamped: bool,
}

/// Fit the uncorrelated background on one arm from a measured singles rate.
pub fn fit_background_rate(
    measured_singles_hz: f64,
    src: &SourceModel,
    chain: &DetectionChain,
    power_mw: f64,
) -> BackgroundFit {
    let pair_singles =
        src.rep_rate_hz * src.mean_pairs_per_pulse(power_mw) * chain.total_efficiency();
    let residual = measured_singles_hz - pair_singles - chain.dark_count_rate_hz;
    BackgroundFit {
        background_hz: residual.max(0.0),
        pair_singles_hz: pair_singles,
        clamped: residual < 0.0,
    }
}

/// 1σ Poisson error on a raw count.
pub fn count_sigma(n: f64) -> f64 {
    n.max(0.0).sqrt()
}

/// First-order error propagation for a ratio of independent Poisson counts.
pub fn ratio_sigma(num: f64, den: f64) -> f64 {
    if num <= 0.0 || den <= 0.0 {
        return f64::NAN;
    }
    (num / den) * (1.0 / num + 1.0 / den).sqrt()
}

/// How a detection event came to be; kept on every tag for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventOrigin {
    Pair,
    Background,
    Dark,
}

impl EventOrigin {
    pub fn code(self) -> u8 {
        match self {
            EventOrigin::Pair => 0,
            EventOrigin::Background => 1,
            EventOrigin::Dark => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(EventOrigin::Pair),
            1 => Ok(EventOrigin::Background),
            2 => Ok(EventOrigin::Dark),
            other => Err(Error::Format(format!("unknown origin code {other}"))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            EventOrigin::Pair => "pair",
            EventOrigin::Background => "background",
            EventOrigin::Dark => "dark",
        }
    }

    pub fn parse_label(s: &str) -> Result<Self> {
        match s {
            "pair" => Ok(EventOrigin::Pair),
            "background" => Ok(EventOrigin::Background),
            "dark" => Ok(EventOrigin::Dark),
            other => Err(Error::Format(format!("unknown origin label '{other}'"))),
        }
    }
}

/// One detection event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeTag {
    pub channel: u8,
    pub timestamp_ps: u64,
    pub origin: EventOrigin,
}

/// Time-ordered detection record for one channel.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TimeTagStream {
    pub tags: Vec<TimeTag>,
}

impl TimeTagStream {
    /// Wrap a tag list, restoring the time ordering invariant.
    pub fn new(mut tags: Vec<TimeTag>) -> Self {
        tags.sort_unstable_by_key(|t| (t.timestamp_ps, t.origin.code()));
        TimeTagStream { tags }
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn is_time_ordered(&self) -> bool {
        self.tags.windows(2).all(|w| w[0].timestamp_ps <= w[1].timestamp_ps)
    }

    pub fn count_by_origin(&self, origin: EventOrigin) -> usize {
        self.tags.iter().filter(|t| t.origin == origin).count()
    }
}

/// Simulate time-tag streams for both arms over `duration_s` seconds.
///
/// Per pulse the pair number follows the source statistics; each photon
/// survives its chain independently and is stamped with Gaussian jitter.
/// Backgrounds and darks are homogeneous Poisson processes. Output is
/// reproducible for a given seed regardless of thread count.
pub fn simulate_stream(
    src: &SourceModel,
    chain_s: &DetectionChain,
    chain_i: &DetectionChain,
    power_mw: f64,
    duration_s: f64,
    seed: u64,
) -> Result<(TimeTagStream, TimeTagStream)> {
    src.validate()?;
    chain_s.validate()?;
    chain_i.validate()?;
    if !(duration_s > 0.0) {
        return Err(Error::Config(format!(
            "duration {duration_s} s must be positive"
        )));
    }
    if power_mw < 0.0 {
        return Err(Error::Config(format!("power {power_mw} mW is negative")));
    }

    let n_pulses = (duration_s * src.rep_rate_hz).floor() as u64;
    let period_ps = 1e12 / src.rep_rate_hz;
    let mu = src.mean_pairs_per_pulse(power_mw);

    let (mut signal, mut idler) = if mu > 0.0 && n_pulses > 0 {
        let n_batches = n_pulses.div_ceil(PULSE_BATCH) as usize;
        let batches: Vec<(Vec<TimeTag>, Vec<TimeTag>)> = (0..n_batches)
            .into_par_iter()
            .map(|b| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(1 + b as u64);
                let lo = b as u64 * PULSE_BATCH;
                let hi = (lo + PULSE_BATCH).min(n_pulses);
                pair_batch(&mut rng, lo, hi, period_ps, mu, src.statistics, chain_s, chain_i)
            })
            .collect();
        let mut signal = Vec::with_capacity(batches.iter().map(|(s, _)| s.len()).sum());
        let mut idler = Vec::with_capacity(batches.iter().map(|(_, i)| i.len()).sum());
        for (s, i) in batches {
            signal.extend(s);
            idler.extend(i);
        }
        (signal, idler)
    } else {
        (Vec::new(), Vec::new())
    };

    let noise = [
        (0u8, chain_s.background_rate_hz, EventOrigin::Background),
        (0u8, chain_s.dark_count_rate_hz, EventOrigin::Dark),
        (1u8, chain_i.background_rate_hz, EventOrigin::Background),
        (1u8, chain_i.dark_count_rate_hz, EventOrigin::Dark),
    ];
    for (k, &(channel, rate, origin)) in noise.iter().enumerate() {
        let tags = noise_tags(seed, NOISE_STREAM_BASE + k as u64, channel, origin, rate, duration_s);
        if channel == 0 {
            signal.extend(tags);
        } else {
            idler.extend(tags);
        }
    }

    signal.par_sort_unstable_by_key(|t| (t.timestamp_ps, t.origin.code()));
    idler.par_sort_unstable_by_key(|t| (t.timestamp_ps, t.origin.code()));
    Ok((TimeTagStream { tags: signal }, TimeTagStream { tags: idler }))
}

/// Generate pair events for pulses `lo..hi`, skipping empty pulses with a
/// geometric jump (occupied pulses are rare at the μ values of interest).
#[allow(clippy::too_many_arguments)]
fn pair_batch(
    rng: &mut ChaCha8Rng,
    lo: u64,
    hi: u64,
    period_ps: f64,
    mu: f64,
    statistics: PairStatistics,
    chain_s: &DetectionChain,
    chain_i: &DetectionChain,
) -> (Vec<TimeTag>, Vec<TimeTag>) {
    let eta_s = chain_s.total_efficiency();
    let eta_i = chain_i.total_efficiency();
    let jitter_s = (chain_s.jitter_sigma_ps > 0.0)
        .then(|| Normal::new(0.0, chain_s.jitter_sigma_ps).expect("valid jitter sigma"));
    let jitter_i = (chain_i.jitter_sigma_ps > 0.0)
        .then(|| Normal::new(0.0, chain_i.jitter_sigma_ps).expect("valid jitter sigma"));
    // ln P(pulse empty): exactly -mu for Poisson, -ln(1+mu) for thermal.
    let ln_empty = match statistics {
        PairStatistics::Poisson => -mu,
        PairStatistics::Thermal => -mu.ln_1p(),
    };
    let mut signal = Vec::new();
    let mut idler = Vec::new();
    let mut pulse = lo;
    loop {
        let u: f64 = rng.random();
        let skip = ((1.0 - u).ln() / ln_empty).floor();
        if !skip.is_finite() || pulse.checked_add(skip as u64).is_none_or(|p| p >= hi) {
            break;
        }
        pulse += skip as u64;
        let n = match statistics {
            PairStatistics::Poisson => truncated_poisson(rng, mu),
            PairStatistics::Thermal => truncated_thermal(rng, mu),
        };
        let t0 = pulse as f64 * period_ps;
        for _ in 0..n {
            if rng.random::<f64>() < eta_s {
                signal.push(stamp(0, t0, jitter_s.as_ref(), rng));
            }
            if rng.random::<f64>() < eta_i {
                idler.push(stamp(1, t0, jitter_i.as_ref(), rng));
            }
        }
        pulse += 1;
        if pulse >= hi {
            break;
        }
    }
    (signal, idler)
}

fn stamp(channel: u8, t0_ps: f64, jitter: Option<&Normal<f64>>, rng: &mut ChaCha8Rng) -> TimeTag {
    let t = match jitter {
        Some(j) => t0_ps + j.sample(rng),
        None => t0_ps,
    };
    TimeTag {
        channel,
        timestamp_ps: t.round().max(0.0) as u64,
        origin: EventOrigin::Pair,
    }
}

/// Poisson(μ) conditioned on at least one pair; inversion walk from n = 1.
fn truncated_poisson(rng: &mut ChaCha8Rng, mu: f64) -> u64 {
    let p_occupied = -(-mu).exp_m1();
    let target: f64 = rng.random::<f64>() * p_occupied;
    let mut n = 1u64;
    let mut term = (-mu).exp() * mu;
    let mut cdf = term;
    while cdf < target && n < 64 {
        n += 1;
        term *= mu / n as f64;
        cdf += term;
    }
    n
}

/// Bose-Einstein(μ) conditioned on at least one pair: 1 + geometric.
fn truncated_thermal(rng: &mut ChaCha8Rng, mu: f64) -> u64 {
    let q = mu / (1.0 + mu);
    let u: f64 = rng.random();
    1 + ((1.0 - u).ln() / q.ln()).floor().min(63.0) as u64
}

/// Homogeneous Poisson process on one channel over the run duration.
fn noise_tags(
    seed: u64,
    stream: u64,
    channel: u8,
    origin: EventOrigin,
    rate_hz: f64,
    duration_s: f64,
) -> Vec<TimeTag> {
    if rate_hz <= 0.0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let n = Poisson::new(rate_hz * duration_s)
        .expect("positive noise intensity")
        .sample(&mut rng) as u64;
    let duration_ps = duration_s * 1e12;
    (0..n)
        .map(|_| TimeTag {
            channel,
            timestamp_ps: (rng.random::<f64>() * duration_ps) as u64,
            origin,
        })
        .collect()
}

/// Coincidence-count histogram over signed delays idler − signal.
#[derive(Debug, Clone, Serialize)]
pub struct DelayHistogram {
    pub bin_width_ps: f64,
    /// Odd length; bin `k` is centered at `(k − len/2)·bin_width_ps`.
    pub counts: Vec<u64>,
}

impl DelayHistogram {
    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    fn half_index(&self) -> i64 {
        (self.counts.len() / 2) as i64
    }

    /// Delay at the center of bin `idx`, ps.
    pub fn delay_ps(&self, idx: usize) -> f64 {
        (idx as i64 - self.half_index()) as f64 * self.bin_width_ps
    }

    /// Largest delay magnitude covered by a bin center, ps.
    pub fn span_ps(&self) -> f64 {
        self.half_index() as f64 * self.bin_width_ps
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Sum of counts in bins whose centers lie within ±window/2 of `center_ps`.
    pub fn counts_within(&self, center_ps: f64, window_ps: f64) -> u64 {
        let half = window_ps / 2.0 + 1e-6;
        self.counts
            .iter()
            .enumerate()
            .filter(|(k, _)| (self.delay_ps(*k) - center_ps).abs() <= half)
            .map(|(_, &c)| c)
            .sum()
    }
}

/// Histogram all idler−signal delays within ±span using a two-pointer sweep
/// (linear in events plus in-span pairs). Streams must be time-ordered.
pub fn correlate(
    signal: &TimeTagStream,
    idler: &TimeTagStream,
    bin_width_ps: f64,
    span_ns: f64,
) -> Result<DelayHistogram> {
    if !(bin_width_ps > 0.0) || !(span_ns > 0.0) {
        return Err(Error::Config(
            "histogram bin width and span must be positive".into(),
        ));
    }
    if !signal.is_time_ordered() || !idler.is_time_ordered() {
        return Err(Error::Config(
            "correlation requires time-ordered streams".into(),
        ));
    }
    let span_ps = span_ns * 1e3;
    let n_half = (span_ps / bin_width_ps).floor() as i64;
    let mut counts = vec![0u64; (2 * n_half + 1) as usize];
    // A delay lands in a bin iff |round(d/bin)| <= n_half, i.e. |d| <= reach.
    let reach = ((n_half as f64 + 0.5) * bin_width_ps).ceil() as i64;
    let i_tags = &idler.tags;
    let mut j0 = 0usize;
    for tag in &signal.tags {
        let ts = tag.timestamp_ps as i64;
        while j0 < i_tags.len() && (i_tags[j0].timestamp_ps as i64) < ts - reach {
            j0 += 1;
        }
        for it in &i_tags[j0..] {
            let d = it.timestamp_ps as i64 - ts;
            if d > reach {
                break;
            }
            let idx = (d as f64 / bin_width_ps).round() as i64;
            if idx.abs() <= n_half {
                counts[(idx + n_half) as usize] += 1;
            }
        }
    }
    Ok(DelayHistogram {
        bin_width_ps,
        counts,
    })
}

/// g² and CAR extracted from a delay histogram.
#[derive(Debug, Clone, Serialize)]
pub struct G2Result {
    /// Counts within ±window/2 of zero delay.
    pub nc: u64,
    /// Mean counts over the side peaks at multiples of the pulse period.
    pub na: f64,
    pub n_side_peaks: usize,
    /// Nc/Na; `None` when no accidentals were collected.
    pub g2: Option<f64>,
    /// 1σ Poisson propagation through the ratio.
    pub g2_sigma: Option<f64>,
    /// (Nc − Na)/Na.
    pub car: Option<f64>,
    /// Set when the zero peak has counts but every side peak is empty.
    pub infinite: bool,
}

/// Zero-peak over mean-side-peak counts from a correlation histogram.
pub fn g2_from_histogram(
    hist: &DelayHistogram,
    window_ns: f64,
    rep_period_ns: f64,
) -> Result<G2Result> {
    let window_ps = window_ns * 1e3;
    let period_ps = rep_period_ns * 1e3;
    if !(window_ps > 0.0) || window_ps >= period_ps {
        return Err(Error::Config(format!(
            "window {window_ns} ns must lie in (0, rep period)"
        )));
    }
    let k_max = ((hist.span_ps() - window_ps / 2.0) / period_ps).floor() as i64;
    let n_side = (2 * k_max).max(0) as usize;
    if n_side < 5 {
        return Err(Error::Config(format!(
            "histogram spans only {n_side} side peaks; need at least 5"
        )));
    }
    let nc = hist.counts_within(0.0, window_ps);
    let side_total: u64 = (1..=k_max)
        .flat_map(|k| [k, -k])
        .map(|k| hist.counts_within(k as f64 * period_ps, window_ps))
        .sum();
    let na = side_total as f64 / n_side as f64;
    let defined = na > 0.0;
    Ok(G2Result {
        nc,
        na,
        n_side_peaks: n_side,
        g2: defined.then(|| nc as f64 / na),
        g2_sigma: (defined && nc > 0).then(|| {
            (nc as f64 / na) * (1.0 / nc as f64 + 1.0 / side_total as f64).sqrt()
        }),
        car: defined.then(|| (nc as f64 - na) / na),
        infinite: !defined && nc > 0,
    })
}

/// Expected histogram-peak rates for a simulated run, window-resolved.
///
/// Unlike the pulsed accidental formula (which piles every in-period product
/// onto the peak), side-peak counts here split into a pulse-locked comb term
/// and a flat floor from uniform backgrounds, of which only `window` worth
/// is collected.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct HistogramPrediction {
    /// Counts/s landing in the zero-delay window.
    pub nc_rate_hz: f64,
    /// Counts/s landing in each side-peak window.
    pub na_rate_hz: f64,
    /// Predicted histogram g² = nc/na.
    pub g2: Option<f64>,
}

/// Predict the zero-peak and side-peak rates that `g2_from_histogram` will
/// see on data from `simulate_stream` at the same parameters.
pub fn predicted_histogram_g2(
    src: &SourceModel,
    chain_s: &DetectionChain,
    chain_i: &DetectionChain,
    power_mw: f64,
    window_ns: f64,
) -> Result<HistogramPrediction> {
    src.validate()?;
    chain_s.validate()?;
    chain_i.validate()?;
    let window_s = window_ns * 1e-9;
    if !(window_s > 0.0) || window_s >= 1.0 / src.rep_rate_hz {
        return Err(Error::Config(format!(
            "window {window_ns} ns must lie in (0, pulse period)"
        )));
    }
    let r = src.rep_rate_hz;
    let mu = src.mean_pairs_per_pulse(power_mw);
    let pulsed_s = r * mu * chain_s.total_efficiency();
    let pulsed_i = r * mu * chain_i.total_efficiency();
    let singles_s = pulsed_s + chain_s.noise_rate_hz();
    let singles_i = pulsed_i + chain_i.noise_rate_hz();
    // E[n(n−1)]/μ² for the per-pulse law: 1 (Poisson) or 2 (thermal).
    let intra_pulse_factor = match src.statistics {
        PairStatistics::Poisson => 1.0,
        PairStatistics::Thermal => 2.0,
    };
    let comb = pulsed_s * pulsed_i / r;
    let flat = (singles_s * singles_i - pulsed_s * pulsed_i) * window_s;
    let coincidences = r * mu * chain_s.total_efficiency() * chain_i.total_efficiency();
    let na = comb + flat;
    let nc = coincidences + intra_pulse_factor * comb + flat;
    Ok(HistogramPrediction {
        nc_rate_hz: nc,
        na_rate_hz: na,
        g2: (na > 0.0).then_some(nc / na),
    })
}

/// Analytic results across a pump-power scan with monotonicity diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct PowerSweep {
    pub results: Vec<CountingResult>,
    /// Coincidences strictly increase along the scan.
    pub coincidences_increasing: bool,
    /// g² strictly decreases once pair coincidences exceed the
    /// background-only accidental floor.
    pub g2_decreasing: bool,
}

/// Run `analytic_rates` over an ascending power list.
pub fn power_sweep(
    src: &SourceModel,
    chain_s: &DetectionChain,
    chain_i: &DetectionChain,
    powers_mw: &[f64],
    window_ns: f64,
    max_power_mw: Option<f64>,
) -> Result<PowerSweep> {
    if powers_mw.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(
            "powers must be sorted strictly ascending".into(),
        ));
    }
    if let Some(cap) = max_power_mw {
        if let Some(p) = powers_mw.iter().find(|&&p| p > cap) {
            return Err(Error::Config(format!(
                "power {p} mW exceeds the configured maximum {cap} mW"
            )));
        }
    }
    let results = powers_mw
        .iter()
        .map(|&p| analytic_rates(src, chain_s, chain_i, p, window_ns))
        .collect::<Result<Vec<_>>>()?;
    let coincidences_increasing = results
        .windows(2)
        .all(|w| w[1].coincidences_hz > w[0].coincidences_hz);
    let noise_floor =
        pulsed_accidental_rate(chain_s.noise_rate_hz(), chain_i.noise_rate_hz(), src.rep_rate_hz);
    let g2_decreasing = results.windows(2).all(|w| {
        match (w[0].g2, w[1].g2) {
            (Some(a), Some(b)) if w[0].coincidences_hz > noise_floor => b < a,
            _ => true,
        }
    });
    Ok(PowerSweep {
        results,
        coincidences_increasing,
        g2_decreasing,
    })
}

/// Interleave two streams into one time-ordered record.
pub fn merge_streams(a: &TimeTagStream, b: &TimeTagStream) -> Vec<TimeTag> {
    let mut merged = Vec::with_capacity(a.len() + b.len());
    merged.extend_from_slice(&a.tags);
    merged.extend_from_slice(&b.tags);
    merged.sort_unstable_by_key(|t| (t.timestamp_ps, t.channel, t.origin.code()));
    merged
}

/// Write tags as CSV: `channel,timestamp_ps,origin`.
pub fn write_tags_csv(tags: &[TimeTag], out: &mut dyn Write, header: &[String]) -> Result<()> {
    for line in header {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "channel,timestamp_ps,origin")?;
    for t in tags {
        writeln!(out, "{},{},{}", t.channel, t.timestamp_ps, t.origin.label())?;
    }
    Ok(())
}

/// Read tags from CSV produced by [`write_tags_csv`].
pub fn read_tags_csv(input: &mut dyn BufRead) -> Result<Vec<TimeTag>> {
    let mut tags = Vec::new();
    for line in input.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("channel,") {
            continue;
        }
        let mut fields = line.split(',');
        let (Some(ch), Some(ts), Some(origin)) = (fields.next(), fields.next(), fields.next())
        else {
            return Err(Error::Format(format!("short tag row '{line}'")));
        };
        tags.push(TimeTag {
            channel: ch
                .parse()
                .map_err(|_| Error::Format(format!("bad channel '{ch}'")))?,
            timestamp_ps: ts
                .parse()
                .map_err(|_| Error::Format(format!("bad timestamp '{ts}'")))?,
            origin: EventOrigin::parse_label(origin)?,
        });
    }
    Ok(tags)
}

/// Write tags as fixed 10-byte little-endian records:
/// u8 channel, u64 timestamp_ps, u8 origin.
pub fn write_tags_binary(tags: &[TimeTag], out: &mut dyn Write) -> Result<()> {
    for t in tags {
        out.write_all(&[t.channel])?;
        out.write_all(&t.timestamp_ps.to_le_bytes())?;
        out.write_all(&[t.origin.code()])?;
    }
    Ok(())
}

/// Read tags from the binary record format of [`write_tags_binary`].
pub fn read_tags_binary(input: &mut dyn Read) -> Result<Vec<TimeTag>> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() % 10 != 0 {
        return Err(Error::Format(format!(
            "tag record stream length {} is not a multiple of 10",
            bytes.len()
        )));
    }
    bytes
        .chunks_exact(10)
        .map(|rec| {
            Ok(TimeTag {
                channel: rec[0],
                timestamp_ps: u64::from_le_bytes(rec[1..9].try_into().unwrap()),
                origin: EventOrigin::from_code(rec[9])?,
            })
        })
        .collect()
}

/// Write a histogram as two-column CSV: `delay_ps,counts`.
pub fn write_histogram_csv(
    hist: &DelayHistogram,
    out: &mut dyn Write,
    header: &[String],
) -> Result<()> {
    for line in header {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "delay_ps,counts")?;
    for (k, &c) in hist.counts.iter().enumerate() {
        writeln!(out, "{:.3},{c}", hist.delay_ps(k))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const REP_RATE: f64 = 80e6;

    fn nir_chain() -> DetectionChain {
        DetectionChain::new("nir", 0.45)
            .with_stage("wdm", 0.7)
            .with_stage("coupling", 0.75)
    }

    fn telecom_chain() -> DetectionChain {
        DetectionChain::new("telecom", 0.9)
            .with_stage("filter", 0.9)
            .with_stage("coupling", 0.75)
    }

    fn bare_chain(label: &str, eta: f64) -> DetectionChain {
        DetectionChain::new(label, eta)
    }

    #[test]
    fn chain_efficiency_is_product_of_stages() {
        assert_relative_eq!(nir_chain().total_efficiency(), 0.23625, epsilon = 1e-12);
        assert_relative_eq!(telecom_chain().total_efficiency(), 0.6075, epsilon = 1e-12);
        assert!(DetectionChain::new("bad", 1.5).validate().is_err());
        assert!(nir_chain().with_stage("open", 0.0).validate().is_err());
    }

    #[test]
    fn fitted_coefficient_reproduces_reference_point() {
        let kappa =
            fit_pair_coefficient(32_500.0, 25.0, REP_RATE, &nir_chain(), &telecom_chain())
                .unwrap();
        assert_relative_eq!(kappa, 4.5289e-6, max_relative = 1e-4);
        let src = SourceModel::new(kappa, REP_RATE);
        assert_relative_eq!(src.mean_pairs_per_pulse(25.0), 2.8306e-3, max_relative = 1e-4);
    }

    #[test]
    fn analytic_rates_reproduce_fitted_operating_point() {
        let kappa =
            fit_pair_coefficient(32_500.0, 25.0, REP_RATE, &nir_chain(), &telecom_chain())
                .unwrap();
        let src = SourceModel::new(kappa, REP_RATE);
        let fit_s = fit_background_rate(175e3, &src, &nir_chain(), 25.0);
        let fit_i = fit_background_rate(112e3, &src, &telecom_chain(), 25.0);
        assert_relative_eq!(fit_s.background_hz, 121_502.0, max_relative = 1e-4);
        assert_relative_eq!(fit_s.pair_singles_hz, 53.5e3, max_relative = 1e-2);
        // The telecom arm over-predicts the measured singles; the residual
        // clamps to zero and the gap is surfaced, not hidden.
        assert!(fit_i.clamped);
        assert_eq!(fit_i.background_hz, 0.0);
        assert_relative_eq!(fit_i.pair_singles_hz, 137.6e3, max_relative = 1e-2);

        let chain_s = nir_chain().with_background(fit_s.background_hz);
        let chain_i = telecom_chain().with_background(fit_i.background_hz);
        let result = analytic_rates(&src, &chain_s, &chain_i, 25.0, 2.0).unwrap();
        assert_relative_eq!(result.singles_s_hz, 175e3, max_relative = 1e-9);
        assert_relative_eq!(result.coincidences_hz, 32_500.0, max_relative = 1e-9);
        assert_relative_eq!(
            result.heralding_i_given_s,
            32.5 / 175.0,
            max_relative = 1e-9
        );
        assert!(result.heralding_s_given_i <= chain_s.total_efficiency());
        assert!(result.heralding_i_given_s <= chain_i.total_efficiency());
    }

    #[test]
    fn accidental_formula_matches_quoted_singles_arithmetic() {
        let a = pulsed_accidental_rate(175e3, 112e3, REP_RATE);
        assert_relative_eq!(a, 245.0, epsilon = 1e-9);
        assert_relative_eq!(32_500.0 / a, 132.65, max_relative = 1e-3);
        // Second process: quoted singles and zero-delay counts.
        let a2 = pulsed_accidental_rate(40.2e3, 79e3, REP_RATE);
        assert_relative_eq!(a2, 39.6975, max_relative = 1e-6);
        assert_relative_eq!(910.0 / a2, 22.92, max_relative = 1e-3);
    }

    #[test]
    fn zero_power_flags_undefined_g2() {
        let src = SourceModel::new(4.5e-6, REP_RATE);
        let chain_s = nir_chain().with_background(50e3).with_dark_counts(100.0);
        let chain_i = telecom_chain().with_dark_counts(200.0);
        let result = analytic_rates(&src, &chain_s, &chain_i, 0.0, 2.0).unwrap();
        assert_eq!(result.coincidences_hz, 0.0);
        assert_relative_eq!(result.singles_s_hz, 50_100.0, epsilon = 1e-9);
        assert_relative_eq!(result.singles_i_hz, 200.0, epsilon = 1e-9);
        assert!(result.g2.is_none());
        assert!(result.car.is_none());
    }

    #[test]
    fn coincidences_scale_quadratically_with_power() {
        let src = SourceModel::new(4.5e-6, REP_RATE);
        let chain_s = nir_chain().with_background(120e3);
        let chain_i = telecom_chain();
        let low = analytic_rates(&src, &chain_s, &chain_i, 10.0, 2.0).unwrap();
        let high = analytic_rates(&src, &chain_s, &chain_i, 20.0, 2.0).unwrap();
        assert_relative_eq!(high.coincidences_hz, 4.0 * low.coincidences_hz, epsilon = 1e-9);
    }

    #[test]
    fn backout_matches_expected_pair_rate() {
        let rate = backout_source_rate(32_500.0, &nir_chain(), &telecom_chain()).unwrap();
        assert_relative_eq!(rate, 226_446.0, max_relative = 1e-4);
        assert!((rate - 226e3).abs() < 2e3);
        // Unit-efficiency chains pass the rate through unchanged.
        let unit = bare_chain("a", 1.0);
        assert_relative_eq!(
            backout_source_rate(1234.5, &unit, &unit).unwrap(),
            1234.5,
            epsilon = 1e-12
        );
        // Halving one transmittance doubles the back-out.
        let halved = nir_chain().with_stage("extra", 0.5);
        assert_relative_eq!(
            backout_source_rate(32_500.0, &halved, &telecom_chain()).unwrap(),
            2.0 * rate,
            epsilon = 1e-9
        );
    }

    #[test]
    fn stream_statistics_follow_binomial_oracle() {
        let src = SourceModel::new(1e-3, REP_RATE); // mu = 1e-3 at 1 mW
        let chain = bare_chain("unit", 1.0);
        let n_pulses = 1e7;
        let duration = n_pulses / REP_RATE;
        let (s, i) = simulate_stream(&src, &chain, &chain, 1.0, duration, 7).unwrap();
        let expected = n_pulses * 1e-3;
        let sigma = expected.sqrt();
        assert!((s.len() as f64 - expected).abs() < 3.0 * sigma);
        // Unit efficiency and no jitter: every signal event has an idler
        // partner in the same pulse slot.
        let ts: Vec<u64> = s.tags.iter().map(|t| t.timestamp_ps).collect();
        let ti: Vec<u64> = i.tags.iter().map(|t| t.timestamp_ps).collect();
        assert_eq!(ts, ti);
        assert!(ts.iter().all(|t| t % 12_500 == 0));
    }

    #[test]
    fn partial_efficiency_thins_channels_independently() {
        let src = SourceModel::new(2e-3, REP_RATE);
        let chain_s = bare_chain("s", 0.25);
        let chain_i = bare_chain("i", 0.8);
        let n_pulses = 4e6;
        let (s, i) = simulate_stream(&src, &chain_s, &chain_i, 1.0, n_pulses / REP_RATE, 11)
            .unwrap();
        let mean_pairs = n_pulses * 2e-3;
        for (stream, eta) in [(&s, 0.25), (&i, 0.8)] {
            let expected = mean_pairs * eta;
            // Var = N·μ·η for thinned Poisson totals.
            let sigma = expected.sqrt();
            assert!(
                (stream.len() as f64 - expected).abs() < 3.0 * sigma,
                "channel count {} vs expected {expected}",
                stream.len()
            );
        }
    }

    #[test]
    fn zero_mean_gives_flat_cross_correlation() {
        let src = SourceModel::new(0.0, REP_RATE);
        let chain = bare_chain("noise", 0.5).with_background(400e3);
        let (s, i) = simulate_stream(&src, &chain, &chain, 10.0, 5.0, 3).unwrap();
        assert_eq!(s.count_by_origin(EventOrigin::Pair), 0);
        let hist = correlate(&s, &i, 100.0, 110.0).unwrap();
        // Zero-peak window expects ≈1600 counts, the pooled side peaks 16×
        // that; the ratio sits within 3 combined sigma (2.6%) of unity.
        let res = g2_from_histogram(&hist, 2.0, 12.5).unwrap();
        let g2 = res.g2.unwrap();
        assert!((g2 - 1.0).abs() < 0.08, "flat-histogram g2 {g2}");
    }

    #[test]
    fn same_seed_reproduces_streams() {
        let src = SourceModel::new(3e-6, REP_RATE);
        let chain_s = nir_chain().with_background(20e3).with_jitter(60.0);
        let chain_i = telecom_chain().with_dark_counts(1e3).with_jitter(40.0);
        let run = |seed| simulate_stream(&src, &chain_s, &chain_i, 20.0, 0.05, seed).unwrap();
        let (s1, i1) = run(42);
        let (s2, i2) = run(42);
        assert_eq!(s1, s2);
        assert_eq!(i1, i2);
        let (s3, _) = run(43);
        assert_ne!(s1, s3);
    }

    #[test]
    fn correlate_conserves_in_span_pairs() {
        let src = SourceModel::new(5e-6, REP_RATE);
        let chain = bare_chain("c", 0.6).with_background(30e3).with_jitter(80.0);
        let (s, i) = simulate_stream(&src, &chain, &chain, 15.0, 0.02, 9).unwrap();
        let bin = 100.0;
        let span = 40.0;
        let hist = correlate(&s, &i, bin, span).unwrap();
        let n_half = (span * 1e3 / bin).floor() as i64;
        let mut brute = 0u64;
        for a in &s.tags {
            for b in &i.tags {
                let d = b.timestamp_ps as i64 - a.timestamp_ps as i64;
                if ((d as f64 / bin).round() as i64).abs() <= n_half {
                    brute += 1;
                }
            }
        }
        assert_eq!(hist.total(), brute);
    }

    #[test]
    fn histogram_shows_periodic_side_peaks() {
        let kappa =
            fit_pair_coefficient(32_500.0, 25.0, REP_RATE, &nir_chain(), &telecom_chain())
                .unwrap();
        let src = SourceModel::new(kappa, REP_RATE);
        let chain_s = nir_chain().with_background(121_502.0).with_jitter(60.0);
        let chain_i = telecom_chain().with_jitter(30.0);
        let (s, i) = simulate_stream(&src, &chain_s, &chain_i, 25.0, 4.0, 5).unwrap();
        let hist = correlate(&s, &i, 100.0, 110.0).unwrap();
        let zero = hist.counts_within(0.0, 2_000.0);
        let side = hist.counts_within(12_500.0, 2_000.0);
        let valley = hist.counts_within(6_250.0, 2_000.0);
        assert!(zero > 50 * side, "zero {zero} side {side}");
        // Side peaks carry the pulse-locked comb on top of the flat
        // background floor seen between peaks (ratio ≈ 3.7 here).
        assert!(side > 2 * valley, "side {side} valley {valley}");
        let side_far = hist.counts_within(-3.0 * 12_500.0, 2_000.0);
        assert!(side_far > 2 * valley);
    }

    #[test]
    fn g2_matches_windowed_prediction_on_simulated_run() {
        let kappa =
            fit_pair_coefficient(32_500.0, 25.0, REP_RATE, &nir_chain(), &telecom_chain())
                .unwrap();
        let src = SourceModel::new(kappa, REP_RATE);
        let chain_s = nir_chain().with_background(121_502.0).with_jitter(60.0);
        let chain_i = telecom_chain().with_jitter(30.0);
        let (s, i) = simulate_stream(&src, &chain_s, &chain_i, 25.0, 5.0, 17).unwrap();
        let hist = correlate(&s, &i, 100.0, 110.0).unwrap();
        let measured = g2_from_histogram(&hist, 2.0, 12.5).unwrap();
        let predicted =
            predicted_histogram_g2(&src, &chain_s, &chain_i, 25.0, 2.0).unwrap();
        let g2 = measured.g2.unwrap();
        let g2_pred = predicted.g2.unwrap();
        assert!(
            (g2 / g2_pred - 1.0).abs() < 0.10,
            "measured {g2:.1} predicted {g2_pred:.1}"
        );
        assert_relative_eq!(
            measured.na / 5.0,
            predicted.na_rate_hz,
            max_relative = 0.10
        );
        assert!(measured.g2_sigma.unwrap() < 0.05 * g2);
    }

    #[test]
    fn thermal_statistics_inflate_only_the_zero_peak() {
        let chain = bare_chain("t", 0.6);
        let poisson = SourceModel::new(0.05, REP_RATE);
        let thermal = SourceModel::new(0.05, REP_RATE).with_statistics(PairStatistics::Thermal);
        let duration = 2e6 / REP_RATE;
        let mut nc = [0.0f64; 2];
        let mut na = [0.0f64; 2];
        for (k, src) in [poisson, thermal].iter().enumerate() {
            let (s, i) = simulate_stream(src, &chain, &chain, 1.0, duration, 23).unwrap();
            let hist = correlate(&s, &i, 100.0, 110.0).unwrap();
            let res = g2_from_histogram(&hist, 2.0, 12.5).unwrap();
            let pred = predicted_histogram_g2(src, &chain, &chain, 1.0, 2.0).unwrap();
            nc[k] = res.nc as f64 / (pred.nc_rate_hz * duration);
            na[k] = res.na / (pred.na_rate_hz * duration);
            assert!((nc[k] - 1.0).abs() < 0.05, "nc ratio {}", nc[k]);
            assert!((na[k] - 1.0).abs() < 0.10, "na ratio {}", na[k]);
        }
    }

    #[test]
    fn flat_synthetic_histogram_gives_unit_g2() {
        let hist = DelayHistogram {
            bin_width_ps: 100.0,
            counts: vec![40; 2001], // ±100 ns
        };
        let res = g2_from_histogram(&hist, 2.0, 12.5).unwrap();
        assert_relative_eq!(res.g2.unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(res.car.unwrap(), 0.0, epsilon = 1e-12);
        assert!(!res.infinite);
    }

    #[test]
    fn empty_side_peaks_raise_infinite_flag() {
        let mut counts = vec![0u64; 2001];
        counts[1000] = 57;
        let hist = DelayHistogram {
            bin_width_ps: 100.0,
            counts,
        };
        let res = g2_from_histogram(&hist, 2.0, 12.5).unwrap();
        assert!(res.infinite);
        assert!(res.g2.is_none());
        assert_eq!(res.nc, 57);
    }

    #[test]
    fn power_sweep_is_monotone_for_fitted_source() {
        let kappa =
            fit_pair_coefficient(32_500.0, 25.0, REP_RATE, &nir_chain(), &telecom_chain())
                .unwrap();
        let src = SourceModel::new(kappa, REP_RATE);
        let chain_s = nir_chain().with_background(121_502.0);
        let chain_i = telecom_chain();
        let powers: Vec<f64> = (1..=9).map(|k| 2.5 * k as f64).collect();
        let sweep = power_sweep(&src, &chain_s, &chain_i, &powers, 2.0, None).unwrap();
        assert!(sweep.coincidences_increasing);
        assert!(sweep.g2_decreasing);
        let g2s: Vec<f64> = sweep.results.iter().map(|r| r.g2.unwrap()).collect();
        assert!(g2s.windows(2).all(|w| w[1] < w[0]));
        // Quadratic fit sanity: zero-background coincidences follow c·P².
        let c0 = sweep.results[0].coincidences_hz / powers[0].powi(2);
        for r in &sweep.results {
            assert_relative_eq!(r.coincidences_hz, c0 * r.power_mw.powi(2), epsilon = 1e-6);
        }
    }

    #[test]
    fn power_sweep_enforces_order_and_cap() {
        let src = SourceModel::new(4.5e-6, REP_RATE);
        let (s, i) = (nir_chain(), telecom_chain());
        assert!(power_sweep(&src, &s, &i, &[10.0, 5.0], 2.0, None).is_err());
        let err = power_sweep(&src, &s, &i, &[5.0, 20.0], 2.0, Some(15.0)).unwrap_err();
        assert!(err.to_string().contains("maximum"));
        assert!(power_sweep(&src, &s, &i, &[5.0, 15.0], 2.0, Some(15.0)).is_ok());
    }

    #[test]
    fn tag_files_round_trip() {
        let src = SourceModel::new(1e-4, REP_RATE);
        let chain = bare_chain("io", 0.7).with_background(10e3).with_jitter(25.0);
        let (s, i) = simulate_stream(&src, &chain, &chain, 10.0, 0.01, 31).unwrap();
        let merged = merge_streams(&s, &i);
        assert!(merged.windows(2).all(|w| w[0].timestamp_ps <= w[1].timestamp_ps));

        let mut csv = Vec::new();
        write_tags_csv(&merged, &mut csv, &["demo".into()]).unwrap();
        let parsed = read_tags_csv(&mut csv.as_slice()).unwrap();
        assert_eq!(parsed, merged);

        let mut bin = Vec::new();
        write_tags_binary(&merged, &mut bin).unwrap();
        assert_eq!(bin.len(), merged.len() * 10);
        let parsed = read_tags_binary(&mut bin.as_slice()).unwrap();
        assert_eq!(parsed, merged);
    }

    #[test]
    fn histogram_csv_has_one_row_per_bin() {
        let hist = DelayHistogram {
            bin_width_ps: 50.0,
            counts: vec![1, 2, 3, 4, 5],
        };
        let mut out = Vec::new();
        write_histogram_csv(&hist, &mut out, &["h".into()]).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 7); // header comment + legend + 5 bins
        assert!(text.lines().last().unwrap().starts_with("100.000,"));
    }
}
