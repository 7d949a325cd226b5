//! Real sine-cosine Fourier representation of hourly series.
//!
//! A series `y[0..N]` is written as
//!
//! ```text
//! y(t) = a0/2 + Σ_{n=1}^{⌊N/2⌋} ( a_n cos(2π n t / N) + b_n sin(2π n t / N) )
//! ```
//!
//! which reproduces the samples exactly. From the complex DFT `c_n`:
//! `a_n = 2 Re(c_n)/N`, `b_n = -2 Im(c_n)/N`, except the Nyquist pair of an
//! even-length series, which is `a_{N/2} = Re(c_{N/2})/N`, `b_{N/2} = 0`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::format::num;
use crate::{Error, Result};

/// Number of daily-frequency multiples kept by the default mask.
pub const DEFAULT_DAILY_HARMONICS: usize = 6;
pub const HOURS_PER_DAY: usize = 24;

/// Sine-cosine coefficients of a real series.
///
/// `a[i]`, `b[i]` hold harmonic `n = i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicSpectrum {
    pub n_samples: usize,
    /// Fundamental period in samples (hours).
    pub period: f64,
    pub a0: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl HarmonicSpectrum {
    pub fn max_harmonic(&self) -> usize {
        self.a.len()
    }

    /// `(a_n, b_n)` for `1 ≤ n ≤ N/2`.
    pub fn pair(&self, n: usize) -> (f64, f64) {
        (self.a[n - 1], self.b[n - 1])
    }

    /// `|a_n| + |b_n|`, the ranking key for magnitude-based masks.
    pub fn combined_magnitude(&self, n: usize) -> f64 {
        let (a, b) = self.pair(n);
        a.abs() + b.abs()
    }
}

/// Transforms a series to its sine-cosine coefficients.
pub fn dft_real(values: &[f64]) -> Result<HarmonicSpectrum> {
    let n = values.len();
    if n < 2 {
        return Err(Error::Size(format!(
            "need at least 2 samples for a spectrum, got {n}"
        )));
    }
    let mut buf: Vec<Complex<f64>> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let scale = 2.0 / n as f64;
    let half = n / 2;
    let mut a = Vec::with_capacity(half);
    let mut b = Vec::with_capacity(half);
    for (k, c) in buf.iter().enumerate().take(half + 1).skip(1) {
        if n.is_multiple_of(2) && k == half {
            a.push(c.re / n as f64);
            b.push(0.0);
        } else {
            a.push(scale * c.re);
            b.push(-scale * c.im);
        }
    }
    Ok(HarmonicSpectrum {
        n_samples: n,
        period: n as f64,
        a0: scale * buf[0].re,
        a,
        b,
    })
}

/// Rule selecting which `(a_n, b_n)` pairs survive compression. The constant
/// term is never retained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CompressionMask {
    /// Keep exactly these harmonic indices.
    FixedHarmonics { harmonics: BTreeSet<usize> },
    /// Keep the `k` pairs with the largest `|a_n| + |b_n|`, ties to smaller `n`.
    TopK { k: usize },
    /// Keep pairs with `|a_n| + |b_n| > tau`.
    Threshold { tau: f64 },
}

impl CompressionMask {
    pub fn fixed(harmonics: impl IntoIterator<Item = usize>) -> Self {
        CompressionMask::FixedHarmonics {
            harmonics: harmonics.into_iter().collect(),
        }
    }

    /// The first six multiples of the daily frequency, `n = N/24 · {1..6}`.
    /// For a 720-hour month this is `{30, 60, …, 180}`.
    pub fn daily_harmonics(n_samples: usize) -> Result<Self> {
        if n_samples == 0 || !n_samples.is_multiple_of(HOURS_PER_DAY) {
            return Err(Error::Mask(format!(
                "daily-harmonic mask needs a whole number of days, got {n_samples} samples"
            )));
        }
        let days = n_samples / HOURS_PER_DAY;
        Ok(Self::fixed((1..=DEFAULT_DAILY_HARMONICS).map(|h| h * days)))
    }

    /// Every harmonic except the constant term.
    pub fn full(n_samples: usize) -> Self {
        CompressionMask::TopK { k: n_samples / 2 }
    }
}

impl fmt::Display for CompressionMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CompressionMask::FixedHarmonics { harmonics } => {
                let list: Vec<String> = harmonics.iter().map(usize::to_string).collect();
                write!(f, "fixed:{}", list.join(","))
            }
            CompressionMask::TopK { k } => write!(f, "topk:{k}"),
            CompressionMask::Threshold { tau } => write!(f, "threshold:{}", num(*tau)),
        }
    }
}

impl FromStr for CompressionMask {
    type Err = Error;

    /// Parses `fixed:n1,n2,…`, `topk:K` or `threshold:T`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::Mask(format!("{s:?}: {why}"));
        let (kind, arg) = s
            .split_once(':')
            .ok_or_else(|| bad("expected fixed:…, topk:K or threshold:T"))?;
        match kind.trim() {
            "fixed" => {
                let harmonics = arg
                    .split(',')
                    .map(|t| t.trim().parse::<usize>())
                    .collect::<Result<BTreeSet<_>, _>>()
                    .map_err(|_| bad("harmonic indices must be non-negative integers"))?;
                Ok(CompressionMask::FixedHarmonics { harmonics })
            }
            "topk" => Ok(CompressionMask::TopK {
                k: arg
                    .trim()
                    .parse()
                    .map_err(|_| bad("K must be an integer"))?,
            }),
            "threshold" => {
                let tau: f64 = arg.trim().parse().map_err(|_| bad("T must be a number"))?;
                if !tau.is_finite() {
                    return Err(bad("T must be finite"));
                }
                Ok(CompressionMask::Threshold { tau })
            }
            _ => Err(bad("unknown mask kind")),
        }
    }
}

/// Harmonic pairs retained by a mask.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedSpectrum {
    pub n_samples: usize,
    pub period: f64,
    pub entries: BTreeMap<usize, (f64, f64)>,
    pub mask: CompressionMask,
}

impl CompressedSpectrum {
    pub fn harmonics(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.keys().copied()
    }
}

/// Drops `a0` and every pair the mask rejects.
pub fn compress(spectrum: &HarmonicSpectrum, mask: &CompressionMask) -> Result<CompressedSpectrum> {
    let max_n = spectrum.max_harmonic();
    let keep: Vec<usize> = match mask {
        CompressionMask::FixedHarmonics { harmonics } => {
            if let Some(bad) = harmonics.iter().find(|&&n| n == 0 || n > max_n) {
                return Err(Error::Mask(format!(
                    "harmonic {bad} outside 1..={max_n} for a {}-sample series",
                    spectrum.n_samples
                )));
            }
            harmonics.iter().copied().collect()
        }
        CompressionMask::TopK { k } => {
            if *k > max_n {
                return Err(Error::Mask(format!(
                    "top-{k} exceeds the {max_n} available harmonic pairs"
                )));
            }
            let mut ranked: Vec<usize> = (1..=max_n).collect();
            ranked.sort_by(|&i, &j| {
                spectrum
                    .combined_magnitude(j)
                    .total_cmp(&spectrum.combined_magnitude(i))
                    .then(i.cmp(&j))
            });
            ranked.truncate(*k);
            ranked
        }
        CompressionMask::Threshold { tau } => {
            if !tau.is_finite() {
                return Err(Error::Mask(format!("threshold {tau} is not finite")));
            }
            (1..=max_n)
                .filter(|&n| spectrum.combined_magnitude(n) > *tau)
                .collect()
        }
    };
    Ok(CompressedSpectrum {
        n_samples: spectrum.n_samples,
        period: spectrum.period,
        entries: keep.into_iter().map(|n| (n, spectrum.pair(n))).collect(),
        mask: mask.clone(),
    })
}

/// Evaluates the truncated series at `t = 0, …, N-1`. With `include_mean`,
/// adds the constant `a0/2 = 1` of a normalized series.
pub fn reconstruct(compressed: &CompressedSpectrum, include_mean: bool) -> Vec<f64> {
    let n = compressed.n_samples;
    let step = std::f64::consts::TAU / n as f64;
    let (cos, sin): (Vec<f64>, Vec<f64>) = (0..n)
        .map(|i| {
            let theta = step * i as f64;
            (theta.cos(), theta.sin())
        })
        .unzip();

    let base = if include_mean { 1.0 } else { 0.0 };
    (0..n)
        .map(|t| {
            base + compressed
                .entries
                .iter()
                .map(|(&h, &(a, b))| {
                    let idx = (h * t) % n;
                    a * cos[idx] + b * sin[idx]
                })
                .sum::<f64>()
        })
        .collect()
}

/// `‖y − ŷ‖₂ / mean(y)`.
///
/// The norm is not divided by `√N`, so for a fixed per-sample deviation the
/// value grows with series length.
pub fn compression_error(original: &[f64], approx: &[f64]) -> Result<f64> {
    if original.len() != approx.len() {
        return Err(Error::Size(format!(
            "series lengths differ: {} vs {}",
            original.len(),
            approx.len()
        )));
    }
    if original.is_empty() {
        return Err(Error::Size("empty series".into()));
    }
    let mean = original.iter().sum::<f64>() / original.len() as f64;
    if mean == 0.0 || !mean.is_finite() {
        return Err(Error::Numeric(format!("original series has mean {mean}")));
    }
    let norm = original
        .iter()
        .zip(approx)
        .map(|(y, yh)| (y - yh).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(norm / mean)
}

/// `[a_{n1}, b_{n1}, a_{n2}, b_{n2}, …]` in ascending `n`.
pub fn feature_vector(compressed: &CompressedSpectrum) -> Result<Vec<f64>> {
    if compressed.entries.is_empty() {
        return Err(Error::EmptyFeatures);
    }
    Ok(compressed
        .entries
        .values()
        .flat_map(|&(a, b)| [a, b])
        .collect())
}

/// Feature rows over a shared harmonic set.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub meter_ids: Vec<String>,
    pub harmonics: Vec<usize>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    /// Aligns per-meter spectra on the union of their retained harmonics.
    ///
    /// Magnitude-based masks can keep different harmonics for different
    /// meters; a pair a meter dropped contributes zeros, exactly as in its
    /// masked full-length coefficient vector.
    pub fn build(meter_ids: Vec<String>, spectra: &[CompressedSpectrum]) -> Result<Self> {
        if meter_ids.len() != spectra.len() {
            return Err(Error::Size(format!(
                "{} meter ids for {} spectra",
                meter_ids.len(),
                spectra.len()
            )));
        }
        let harmonics: Vec<usize> = spectra
            .iter()
            .flat_map(CompressedSpectrum::harmonics)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if harmonics.is_empty() {
            return Err(Error::EmptyFeatures);
        }
        let rows = spectra
            .iter()
            .map(|s| {
                harmonics
                    .iter()
                    .flat_map(|h| {
                        let (a, b) = s.entries.get(h).copied().unwrap_or((0.0, 0.0));
                        [a, b]
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            meter_ids,
            harmonics,
            rows,
        })
    }

    pub fn dim(&self) -> usize {
        2 * self.harmonics.len()
    }

    /// CSV with header `meter_id,a30,b30,…`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("meter_id");
        for h in &self.harmonics {
            out.push_str(&format!(",a{h},b{h}"));
        }
        out.push('\n');
        for (id, row) in self.meter_ids.iter().zip(&self.rows) {
            out.push_str(id);
            for v in row {
                out.push(',');
                out.push_str(&num(*v));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let parse_err = |line: u64, message: String| Error::Parse {
            path: "<features>".into(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "empty feature file".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.first() != Some(&"meter_id") || cols.len() < 3 || cols.len().is_multiple_of(2) {
            return Err(parse_err(1, "expected header meter_id,a<n>,b<n>,…".into()));
        }
        let mut harmonics = Vec::new();
        for pair in cols[1..].chunks(2) {
            let (a, b) = (pair[0], pair[1]);
            let n = a
                .strip_prefix('a')
                .filter(|n| b.strip_prefix('b') == Some(*n))
                .and_then(|n| n.parse().ok())
                .ok_or_else(|| parse_err(1, format!("bad column pair {a},{b}")))?;
            harmonics.push(n);
        }
        let mut meter_ids = Vec::new();
        let mut rows = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let lineno = i as u64 + 1;
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != cols.len() {
                return Err(parse_err(
                    lineno,
                    format!("expected {} fields, found {}", cols.len(), fields.len()),
                ));
            }
            meter_ids.push(fields[0].to_string());
            rows.push(
                fields[1..]
                    .iter()
                    .map(|f| {
                        f.parse::<f64>()
                            .map_err(|_| parse_err(lineno, format!("invalid number {f:?}")))
                    })
                    .collect::<Result<Vec<f64>>>()?,
            );
        }
        Ok(Self {
            meter_ids,
            harmonics,
            rows,
        })
    }
}

/// Debug export: `n,a,b` for `n = 0 … N/2` (row 0 carries `a0`).
pub fn spectrum_csv(spectrum: &HarmonicSpectrum) -> String {
    let mut out = String::from("n,a,b\n");
    out.push_str(&format!("0,{},0\n", num(spectrum.a0)));
    for (i, (a, b)) in spectrum.a.iter().zip(&spectrum.b).enumerate() {
        out.push_str(&format!("{},{},{}\n", i + 1, num(*a), num(*b)));
    }
    out
}
