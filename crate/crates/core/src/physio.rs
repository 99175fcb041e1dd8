//! Eye-tracking anomaly extraction and overlap matching against anomalies in
//! the inferred cognitive parameters.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};
use crate::io::{csv_bytes, fmt_f64, parse_bool, parse_field, read_csv_records, write_atomic};

pub const GAZE_HEADER: [&str; 5] = ["t", "x", "y", "pupil", "valid"];
pub const REPORT_HEADER: [&str; 5] = ["dimension", "parameter", "F", "p", "maxdiff"];
pub const AOI_COUNT: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GazeSample {
    pub t: usize,
    pub x: f64,
    pub y: f64,
    pub pupil: f64,
    pub valid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Screen {
    pub width: f64,
    pub height: f64,
}

impl Default for Screen {
    fn default() -> Self {
        Screen {
            width: 1920.0,
            height: 1080.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub source: String,
}

impl Segment {
    pub fn new(start: usize, end: usize, source: impl Into<String>) -> Self {
        assert!(start <= end, "segment start {start} after end {end}");
        Segment {
            start,
            end,
            source: source.into(),
        }
    }

    pub fn overlaps(&self, other: &Segment) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

pub type SegmentList = Vec<Segment>;

/// 3x3 cell of a screen position; right-open bins, clamped to the edges.
pub fn aoi_index(x: f64, y: f64, screen: &Screen) -> usize {
    let bin = |v: f64, extent: f64| ((v * 3.0 / extent).floor().max(0.0) as usize).min(2);
    bin(y, screen.height) * 3 + bin(x, screen.width)
}

/// AOI per valid sample; invalid samples are dropped.
pub fn aoi_sequence(samples: &[GazeSample], screen: &Screen) -> Vec<usize> {
    samples
        .iter()
        .filter(|s| s.valid)
        .map(|s| aoi_index(s.x, s.y, screen))
        .collect()
}

fn entropy_bits(p: impl IntoIterator<Item = f64>) -> f64 {
    -p.into_iter().filter(|&p| p > 0.0).map(|p| p * p.log2()).sum::<f64>()
}

fn h_max() -> f64 {
    (AOI_COUNT as f64).log2()
}

/// Normalised Shannon entropy of AOI occupancy.
pub fn spatial_entropy(aoi: &[usize]) -> Result<f64> {
    if aoi.is_empty() {
        return Err(Error::Contract("spatial entropy of an empty sequence".into()));
    }
    let mut counts = [0usize; AOI_COUNT];
    for &a in aoi {
        counts[a] += 1;
    }
    let n = aoi.len() as f64;
    Ok(entropy_bits(counts.iter().map(|&c| c as f64 / n)) / h_max())
}

/// Normalised conditional entropy of first-order AOI transitions.
pub fn transition_entropy(aoi: &[usize]) -> Result<f64> {
    if aoi.len() < 2 {
        return Err(Error::Contract("transition entropy needs at least two samples".into()));
    }
    let mut counts = [[0.0; AOI_COUNT]; AOI_COUNT];
    for w in aoi.windows(2) {
        counts[w[0]][w[1]] += 1.0;
    }
    let total = (aoi.len() - 1) as f64;
    let occupancy: Vec<f64> = counts.iter().map(|row| row.iter().sum::<f64>() / total).collect();
    let mut p = [[0.0; AOI_COUNT]; AOI_COUNT];
    for (i, row) in counts.iter().enumerate() {
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            for j in 0..AOI_COUNT {
                p[i][j] = row[j] / s;
            }
        }
    }
    transition_entropy_of(&occupancy, &p)
}

/// Normalised conditional entropy for a given source distribution and
/// transition matrix (rows are `p(j | i)`).
pub fn transition_entropy_of(occupancy: &[f64], matrix: &[[f64; AOI_COUNT]]) -> Result<f64> {
    if occupancy.len() != matrix.len() {
        return Err(Error::Contract(format!(
            "{} source probabilities for {} matrix rows",
            occupancy.len(),
            matrix.len()
        )));
    }
    let h: f64 = occupancy
        .iter()
        .zip(matrix)
        .map(|(pi, row)| pi * entropy_bits(row.iter().copied()))
        .sum();
    Ok(h / h_max())
}

/// Percentile with linear interpolation between order statistics
/// (`h = (n - 1) p`).
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Contract("percentile of an empty series".into()));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::Contract(format!("percentile {p} outside [0, 100]")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * p / 100.0;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Ok(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    (m, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysioConfig {
    pub screen: Screen,
    /// Sampling rate (Hz).
    pub fs: f64,
    /// Fixation displacement threshold (px).
    pub d_thr: f64,
    /// Minimum fixation duration (s).
    pub thr_fix: f64,
    pub w_fix: usize,
    pub w_entropy: usize,
    pub z_thr: f64,
    pub hanning_len: usize,
    pub amplitude: f64,
    pub unit_sum_kernel: bool,
    pub cognitive_percentile: f64,
    pub delta: f64,
}

impl Default for PhysioConfig {
    fn default() -> Self {
        PhysioConfig {
            screen: Screen::default(),
            fs: 60.0,
            d_thr: 10.0,
            thr_fix: 0.1,
            w_fix: 20,
            w_entropy: 120,
            z_thr: 1.5,
            hanning_len: 20,
            amplitude: 0.5,
            unit_sum_kernel: true,
            cognitive_percentile: 90.0,
            delta: 0.10,
        }
    }
}

/// Sliding-window entropies ending at each frame; `None` until the window
/// is full or when it holds too few valid samples.
pub fn windowed_entropies(
    samples: &[GazeSample],
    screen: &Screen,
    window: usize,
) -> Result<Vec<(Option<f64>, Option<f64>)>> {
    if window == 0 {
        return Err(Error::Config("entropy window must be >= 1".into()));
    }
    let aoi: Vec<Option<usize>> = samples
        .iter()
        .map(|s| s.valid.then(|| aoi_index(s.x, s.y, screen)))
        .collect();
    let mut out = Vec::with_capacity(samples.len());
    for t in 0..aoi.len() {
        if t + 1 < window {
            out.push((None, None));
            continue;
        }
        let win = &aoi[t + 1 - window..=t];
        let valid: Vec<usize> = win.iter().flatten().copied().collect();
        let hs = if valid.is_empty() { None } else { Some(spatial_entropy(&valid)?) };
        // Transitions only between consecutive valid frames.
        let mut counts = [[0.0; AOI_COUNT]; AOI_COUNT];
        let mut n = 0.0;
        for w in win.windows(2) {
            if let (Some(a), Some(b)) = (w[0], w[1]) {
                counts[a][b] += 1.0;
                n += 1.0;
            }
        }
        let ht = if n > 0.0 {
            let occ: Vec<f64> = counts.iter().map(|r| r.iter().sum::<f64>() / n).collect();
            let mut p = [[0.0; AOI_COUNT]; AOI_COUNT];
            for (i, r) in counts.iter().enumerate() {
                let s: f64 = r.iter().sum();
                if s > 0.0 {
                    for j in 0..AOI_COUNT {
                        p[i][j] = r[j] / s;
                    }
                }
            }
            Some(transition_entropy_of(&occ, &p)?)
        } else {
            None
        };
        out.push((hs, ht));
    }
    Ok(out)
}

/// Flags where a series is strictly below the `lo` or strictly above the
/// `hi` within-series percentile. Missing values are never flagged.
pub fn percentile_band_flags(series: &[Option<f64>], lo: f64, hi: f64) -> Result<Vec<bool>> {
    let present: Vec<f64> = series.iter().flatten().copied().collect();
    if present.is_empty() {
        return Ok(vec![false; series.len()]);
    }
    let (p_lo, p_hi) = (percentile(&present, lo)?, percentile(&present, hi)?);
    Ok(series.iter().map(|v| v.is_some_and(|v| v < p_lo || v > p_hi)).collect())
}

/// Dispersion anomalies from windowed spatial and transition entropy.
pub fn dispersion_anomalies(entropies: &[(Option<f64>, Option<f64>)]) -> Result<Vec<bool>> {
    let hs: Vec<_> = entropies.iter().map(|e| e.0).collect();
    let ht: Vec<_> = entropies.iter().map(|e| e.1).collect();
    let a = percentile_band_flags(&hs, 10.0, 75.0)?;
    let b = percentile_band_flags(&ht, 10.0, 75.0)?;
    Ok(a.iter().zip(&b).map(|(a, b)| *a || *b).collect())
}

/// Inter-frame gaze displacement. Frame 0 repeats frame 1; frames next to an
/// invalid sample have no displacement.
pub fn displacements(samples: &[GazeSample]) -> Vec<Option<f64>> {
    let mut d: Vec<Option<f64>> = (0..samples.len())
        .map(|t| {
            if t == 0 {
                return None;
            }
            let (a, b) = (&samples[t - 1], &samples[t]);
            (a.valid && b.valid).then(|| (b.x - a.x).hypot(b.y - a.y))
        })
        .collect();
    if d.len() > 1 {
        d[0] = d[1];
    } else if d.len() == 1 && samples[0].valid {
        d[0] = Some(0.0);
    }
    d
}

/// Short-fixation and low-fixation-ratio frames.
pub fn fixation_anomalies(samples: &[GazeSample], cfg: &PhysioConfig) -> Vec<bool> {
    let fix: Vec<bool> = displacements(samples)
        .iter()
        .map(|d| d.is_some_and(|d| d < cfg.d_thr))
        .collect();
    let mut flags = vec![false; fix.len()];
    let min_run = cfg.thr_fix * cfg.fs;
    let mut t = 0;
    while t < fix.len() {
        if !fix[t] {
            t += 1;
            continue;
        }
        let start = t;
        while t < fix.len() && fix[t] {
            t += 1;
        }
        if ((t - start) as f64) < min_run - 1e-9 {
            flags[start..t].iter_mut().for_each(|f| *f = true);
        }
    }
    let w = cfg.w_fix;
    if w == 0 || fix.len() < w {
        log::warn!("fewer than {w} frames; fixation-ratio rule skipped");
        return flags;
    }
    let ratio: Vec<f64> = (w - 1..fix.len())
        .map(|t| fix[t + 1 - w..=t].iter().filter(|f| **f).count() as f64 / w as f64)
        .collect();
    let (mu, sd) = mean_std(&ratio);
    for (i, r) in ratio.iter().enumerate() {
        if *r < mu - sd {
            flags[i + w - 1] = true;
        }
    }
    flags
}

/// Frames whose gaze speed exceeds the within-session 90th percentile.
pub fn saccade_anomalies(samples: &[GazeSample], fs: f64) -> Result<Vec<bool>> {
    let v: Vec<Option<f64>> = displacements(samples).iter().map(|d| d.map(|d| d * fs)).collect();
    let present: Vec<f64> = v.iter().flatten().copied().collect();
    if present.is_empty() {
        return Ok(vec![false; samples.len()]);
    }
    let p90 = percentile(&present, 90.0)?;
    Ok(v.iter().map(|v| v.is_some_and(|v| v > p90)).collect())
}

/// Frames whose z-scored pupil change rate exceeds `z_thr` in magnitude.
pub fn pupil_anomalies(pupil: &[f64], z_thr: f64) -> Vec<bool> {
    let mut flags = vec![false; pupil.len()];
    if pupil.len() < 2 {
        return flags;
    }
    let rate: Vec<f64> = pupil.windows(2).map(|w| w[1] - w[0]).collect();
    let (mu, sd) = mean_std(&rate);
    if sd <= 1e-12 * (1.0 + mu.abs()) {
        log::warn!("pupil change rate has zero spread; no pupil anomalies");
        return flags;
    }
    for (i, r) in rate.iter().enumerate() {
        if ((r - mu) / sd).abs() > z_thr {
            flags[i + 1] = true;
        }
    }
    flags
}

/// Frames where a parameter exceeds its within-session percentile.
pub fn cognitive_anomalies(series: &[f64], pct: f64) -> Result<Vec<bool>> {
    if series.is_empty() {
        return Ok(Vec::new());
    }
    let thr = percentile(series, pct)?;
    Ok(series.iter().map(|v| *v > thr).collect())
}

pub fn union(a: &[bool], b: &[bool]) -> Result<Vec<bool>> {
    if a.len() != b.len() {
        return Err(Error::Contract(format!("flag lengths differ: {} vs {}", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).map(|(a, b)| *a || *b).collect())
}

/// `w(n) = 0.5 (1 - cos(2 pi n / (N - 1)))`, optionally scaled to unit sum.
pub fn hanning(n: usize, unit_sum: bool) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let w: Vec<f64> = (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos()))
        .collect();
    if unit_sum {
        let s: f64 = w.iter().sum();
        w.iter().map(|v| v / s).collect()
    } else {
        w
    }
}

/// Convolution cropped to the signal length, centred like numpy's "same".
pub fn convolve_same(signal: &[f64], kernel: &[f64]) -> Vec<f64> {
    let m = kernel.len();
    if m == 0 || signal.is_empty() {
        return vec![0.0; signal.len()];
    }
    let off = (m - 1) / 2;
    (0..signal.len())
        .map(|i| {
            let full = i + off;
            kernel
                .iter()
                .enumerate()
                .filter(|(j, _)| *j <= full && full - j < signal.len())
                .map(|(j, k)| k * signal[full - j])
                .sum()
        })
        .collect()
}

/// Runs of `values > threshold` as closed segments.
pub fn runs_above(values: &[f64], threshold: f64, source: &str) -> SegmentList {
    let mut out = Vec::new();
    let mut start = None;
    for (i, v) in values.iter().enumerate() {
        match (start, *v > threshold) {
            (None, true) => start = Some(i),
            (Some(s), false) => {
                out.push(Segment::new(s, i - 1, source));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(Segment::new(s, values.len() - 1, source));
    }
    out
}

pub fn smooth_and_segment(flags: &[bool], cfg: &PhysioConfig, source: &str) -> SegmentList {
    let signal: Vec<f64> = flags.iter().map(|f| f64::from(u8::from(*f))).collect();
    let smoothed = convolve_same(&signal, &hanning(cfg.hanning_len, cfg.unit_sum_kernel));
    runs_above(&smoothed, cfg.amplitude, source)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchReport {
    /// 0 when there are no cognitive segments; see `match_defined`.
    pub match_rate: f64,
    pub match_defined: bool,
    pub miss_rate: f64,
    pub matched: SegmentList,
    pub unmatched_cog: SegmentList,
    pub unmatched_phys: SegmentList,
}

pub fn match_segments(cog: &[Segment], phys: &[Segment]) -> MatchReport {
    let (matched, unmatched_cog): (Vec<Segment>, Vec<Segment>) =
        cog.iter().cloned().partition(|c| phys.iter().any(|p| p.overlaps(c)));
    let unmatched_phys: Vec<Segment> = phys
        .iter()
        .filter(|p| !cog.iter().any(|c| c.overlaps(p)))
        .cloned()
        .collect();
    MatchReport {
        match_rate: if cog.is_empty() {
            0.0
        } else {
            matched.len() as f64 / cog.len() as f64
        },
        match_defined: !cog.is_empty(),
        miss_rate: if phys.is_empty() {
            0.0
        } else {
            unmatched_phys.len() as f64 / phys.len() as f64
        },
        matched,
        unmatched_cog,
        unmatched_phys,
    }
}

/// One-way ANOVA: `(F, p)`.
pub fn anova_oneway(groups: &[Vec<f64>]) -> Result<(f64, f64)> {
    if groups.len() < 2 {
        return Err(Error::Contract(format!("ANOVA needs >= 2 groups, got {}", groups.len())));
    }
    if let Some(i) = groups.iter().position(|g| g.len() < 2) {
        return Err(Error::Contract(format!("group {i} has fewer than 2 values")));
    }
    let n: usize = groups.iter().map(Vec::len).sum();
    let k = groups.len();
    let grand = groups.iter().flatten().sum::<f64>() / n as f64;
    let means: Vec<f64> = groups.iter().map(|g| g.iter().sum::<f64>() / g.len() as f64).collect();
    let ssb: f64 = groups.iter().zip(&means).map(|(g, m)| g.len() as f64 * (m - grand).powi(2)).sum();
    let ssw: f64 = groups
        .iter()
        .zip(&means)
        .map(|(g, m)| g.iter().map(|v| (v - m).powi(2)).sum::<f64>())
        .sum();
    let (df1, df2) = ((k - 1) as f64, (n - k) as f64);
    let scale = 1e-12 * (1.0 + grand.abs()).powi(2) * n as f64;
    if ssb <= scale {
        return Ok((0.0, 1.0));
    }
    if ssw <= scale {
        return Ok((f64::INFINITY, 0.0));
    }
    let f = (ssb / df1) / (ssw / df2);
    let dist = FisherSnedecor::new(df1, df2).map_err(|e| Error::Domain(e.to_string()))?;
    Ok((f, dist.sf(f)))
}

/// Largest difference between condition means and whether it stays strictly
/// below `delta`.
pub fn maxdiff_equivalence(means: &[f64], delta: f64) -> (f64, bool) {
    if means.is_empty() {
        return (0.0, true);
    }
    let max = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = means.iter().copied().fold(f64::INFINITY, f64::min);
    let d = max - min;
    (d, d < delta)
}

/// Cognitive parameters paired with the physiological anomaly channel they
/// are compared against.
pub const PARAMETERS: [(&str, Channel); 3] = [
    ("sigma0", Channel::Perception),
    ("sigma_max", Channel::Perception),
    ("c", Channel::Looming),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    /// Dispersion or fixation anomalies.
    Perception,
    /// Saccade or pupil anomalies.
    Looming,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionAnalysis {
    pub perception: SegmentList,
    pub looming: SegmentList,
    /// Per parameter: its segments and the match against its channel.
    pub parameters: Vec<(String, SegmentList, MatchReport)>,
}

/// Repeat each decision-step value `factor` times to reach the gaze rate,
/// then crop or pad (with the last value) to `len` frames.
pub fn hold_to_rate(values: &[f64], factor: usize, len: usize) -> Vec<f64> {
    let mut out: Vec<f64> = values.iter().flat_map(|v| std::iter::repeat_n(*v, factor)).collect();
    if let Some(last) = out.last().copied() {
        out.resize(len, last);
    }
    out.truncate(len);
    out
}

/// Full pipeline for one session. `params` holds one series per entry of
/// [`PARAMETERS`], already at the gaze frame rate.
pub fn analyze_session(samples: &[GazeSample], params: &[Vec<f64>], cfg: &PhysioConfig) -> Result<SessionAnalysis> {
    if params.len() != PARAMETERS.len() {
        return Err(Error::Contract(format!(
            "expected {} parameter series, got {}",
            PARAMETERS.len(),
            params.len()
        )));
    }
    let ent = windowed_entropies(samples, &cfg.screen, cfg.w_entropy)?;
    let a_physio = union(&dispersion_anomalies(&ent)?, &fixation_anomalies(samples, cfg))?;
    let pupil: Vec<f64> = samples.iter().map(|s| s.pupil).collect();
    let a_looming = union(&saccade_anomalies(samples, cfg.fs)?, &pupil_anomalies(&pupil, cfg.z_thr))?;
    let perception = smooth_and_segment(&a_physio, cfg, "perception");
    let looming = smooth_and_segment(&a_looming, cfg, "looming");
    let mut parameters = Vec::new();
    for ((name, channel), series) in PARAMETERS.iter().zip(params) {
        let flags = cognitive_anomalies(series, cfg.cognitive_percentile)?;
        let segs = smooth_and_segment(&flags, cfg, name);
        let phys = match channel {
            Channel::Perception => &perception,
            Channel::Looming => &looming,
        };
        let report = match_segments(&segs, phys);
        parameters.push((name.to_string(), segs, report));
    }
    Ok(SessionAnalysis {
        perception,
        looming,
        parameters,
    })
}

/// Match rates grouped by one scenario factor.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedObservation {
    pub dimension: String,
    pub level: String,
    pub parameter: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub dimension: String,
    pub parameter: String,
    pub f: f64,
    pub p: f64,
    pub maxdiff: f64,
}

/// ANOVA and MaxDiff per (dimension, parameter) across its levels.
pub fn grouped_report(obs: &[GroupedObservation]) -> Result<Vec<ReportRow>> {
    let mut cells: BTreeMap<(&str, &str), BTreeMap<&str, Vec<f64>>> = BTreeMap::new();
    for o in obs {
        cells
            .entry((&o.dimension, &o.parameter))
            .or_default()
            .entry(&o.level)
            .or_default()
            .push(o.value);
    }
    let mut rows = Vec::new();
    for ((dim, param), levels) in cells {
        let groups: Vec<Vec<f64>> = levels.into_values().collect();
        let means: Vec<f64> = groups.iter().map(|g| g.iter().sum::<f64>() / g.len() as f64).collect();
        let (f, p) = if groups.len() >= 2 && groups.iter().all(|g| g.len() >= 2) {
            anova_oneway(&groups)?
        } else {
            log::warn!("{dim}/{param}: too few groups or values for ANOVA");
            (f64::NAN, f64::NAN)
        };
        rows.push(ReportRow {
            dimension: dim.to_string(),
            parameter: param.to_string(),
            f,
            p,
            maxdiff: maxdiff_equivalence(&means, f64::INFINITY).0,
        });
    }
    Ok(rows)
}

pub fn report_csv(rows: &[ReportRow]) -> Result<Vec<u8>> {
    csv_bytes(
        &REPORT_HEADER,
        rows.iter()
            .map(|r| vec![r.dimension.clone(), r.parameter.clone(), fmt_f64(r.f), fmt_f64(r.p), fmt_f64(r.maxdiff)]),
    )
}

pub fn gaze_csv(samples: &[GazeSample]) -> Result<Vec<u8>> {
    csv_bytes(
        &GAZE_HEADER,
        samples.iter().map(|s| {
            vec![
                s.t.to_string(),
                fmt_f64(s.x),
                fmt_f64(s.y),
                fmt_f64(s.pupil),
                u8::from(s.valid).to_string(),
            ]
        }),
    )
}

pub fn write_gaze(path: &Path, samples: &[GazeSample]) -> Result<()> {
    write_atomic(path, &gaze_csv(samples)?)
}

pub fn read_gaze(path: &Path) -> Result<Vec<GazeSample>> {
    let rows = read_csv_records(path, &GAZE_HEADER)?;
    let mut out: Vec<GazeSample> = Vec::with_capacity(rows.len());
    for (line, rec) in rows {
        let s = GazeSample {
            t: parse_field(&rec, 0, line, "t")?,
            x: parse_field(&rec, 1, line, "x")?,
            y: parse_field(&rec, 2, line, "y")?,
            pupil: parse_field(&rec, 3, line, "pupil")?,
            valid: parse_bool(&rec, 4, line, "valid")?,
        };
        if let Some(prev) = out.last() {
            if s.t <= prev.t {
                return Err(Error::Validation(format!("line {line}: t = {} not increasing", s.t)));
            }
        }
        out.push(s);
    }
    Ok(out)
}

pub fn segments_csv(segments: &[Segment]) -> Result<Vec<u8>> {
    csv_bytes(
        &["source", "start", "end"],
        segments
            .iter()
            .map(|s| vec![s.source.clone(), s.start.to_string(), s.end.to_string()]),
    )
}
