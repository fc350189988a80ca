//! The common output type of all four estimators: a threshold grid with
//! complementary-CDF values, plus empirical construction, interpolation and
//! CSV round-tripping.

use crate::{Error, Result};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// A complementary CDF sampled on an ordered threshold grid: `ccdf[k]` is
/// P(metric > `thresholds[k]`). Thresholds are dB for SINR curves and bps
/// for throughput curves.
#[derive(Debug, Clone, PartialEq)]
pub struct CcdfCurve {
    pub thresholds: Vec<f64>,
    pub ccdf: Vec<f64>,
}

impl CcdfCurve {
    /// Validating constructor: thresholds strictly increasing, values within
    /// [0,1] and non-increasing.
    pub fn new(thresholds: Vec<f64>, ccdf: Vec<f64>) -> Result<Self> {
        let curve = Self { thresholds, ccdf };
        curve.validate()?;
        Ok(curve)
    }

    pub fn validate(&self) -> Result<()> {
        if self.thresholds.len() != self.ccdf.len() || self.thresholds.is_empty() {
            return Err(Error::InvalidConfig(
                "curve needs matching, nonempty threshold/ccdf lists".into(),
            ));
        }
        for w in self.thresholds.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidConfig(
                    "curve thresholds must be strictly increasing".into(),
                ));
            }
        }
        for w in self.ccdf.windows(2) {
            if w[1] > w[0] + 1e-12 {
                return Err(Error::InvalidConfig("ccdf must be non-increasing".into()));
            }
        }
        if self.ccdf.iter().any(|&v| !(0.0..=1.0 + 1e-12).contains(&v)) {
            return Err(Error::InvalidConfig("ccdf values must lie in [0,1]".into()));
        }
        Ok(())
    }

    /// Empirical CCDF of `samples` on `thresholds`: the fraction of samples
    /// strictly above each threshold. Samples at `-inf` (no-link mass) count
    /// in the denominator but exceed nothing.
    pub fn empirical(samples: &[f64], thresholds: &[f64]) -> Self {
        let mut sorted: Vec<f64> = samples.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN samples"));
        let n = sorted.len();
        let ccdf = thresholds
            .iter()
            .map(|&t| {
                if n == 0 {
                    return 0.0;
                }
                // first index with value > t
                let above = sorted.partition_point(|&v| v <= t);
                (n - above) as f64 / n as f64
            })
            .collect();
        Self {
            thresholds: thresholds.to_vec(),
            ccdf,
        }
    }

    /// Linear interpolation of the curve at `t`; `None` outside the grid.
    pub fn value_at(&self, t: f64) -> Option<f64> {
        let first = *self.thresholds.first()?;
        let last = *self.thresholds.last()?;
        if t < first || t > last {
            return None;
        }
        let idx = self.thresholds.partition_point(|&x| x < t);
        if idx < self.thresholds.len() && self.thresholds[idx] == t {
            return Some(self.ccdf[idx]);
        }
        let (t0, t1) = (self.thresholds[idx - 1], self.thresholds[idx]);
        let (v0, v1) = (self.ccdf[idx - 1], self.ccdf[idx]);
        Some(v0 + (v1 - v0) * (t - t0) / (t1 - t0))
    }

    /// Threshold where the curve crosses `level` (linear interpolation),
    /// or the closest grid endpoint when it never does.
    pub fn crossing(&self, level: f64) -> (f64, bool) {
        for k in 1..self.thresholds.len() {
            let (v0, v1) = (self.ccdf[k - 1], self.ccdf[k]);
            if (v0 - level) * (v1 - level) <= 0.0 && v0 != v1 {
                let t0 = self.thresholds[k - 1];
                let t1 = self.thresholds[k];
                return (t0 + (t1 - t0) * (v0 - level) / (v0 - v1), true);
            }
        }
        // never crosses: pick the endpoint whose value is closest
        let first = (self.thresholds[0], self.ccdf[0]);
        let last = (
            *self.thresholds.last().unwrap(),
            *self.ccdf.last().unwrap(),
        );
        if (first.1 - level).abs() <= (last.1 - level).abs() {
            (first.0, false)
        } else {
            (last.0, false)
        }
    }

    /// Maximum vertical distance to `other` in percentage points, taken over
    /// this curve's grid points that fall inside `other`'s range (`other` is
    /// linearly interpolated). Errors when the ranges do not overlap.
    pub fn max_vertical_distance_pp(&self, other: &CcdfCurve) -> Result<f64> {
        let mut max_gap: Option<f64> = None;
        for (&t, &v) in self.thresholds.iter().zip(self.ccdf.iter()) {
            if let Some(w) = other.value_at(t) {
                let gap = (v - w).abs() * 100.0;
                max_gap = Some(max_gap.map_or(gap, |m: f64| m.max(gap)));
            }
        }
        max_gap.ok_or_else(|| {
            Error::InvalidConfig("curves cover disjoint threshold ranges".into())
        })
    }

    /// Write the curve as CSV with a config-fingerprint comment line and a
    /// `threshold,ccdf` header; an optional third `seconds` column carries
    /// per-threshold computation times for timing studies.
    pub fn to_csv(&self, path: &Path, fingerprint: &str, seconds: Option<&[f64]>) -> Result<()> {
        if let Some(s) = seconds {
            if s.len() != self.thresholds.len() {
                return Err(Error::InvalidConfig(
                    "per-threshold seconds must match the grid".into(),
                ));
            }
        }
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "# {fingerprint}")?;
        match seconds {
            Some(s) => {
                writeln!(out, "threshold,ccdf,seconds")?;
                for ((t, v), sec) in self.thresholds.iter().zip(&self.ccdf).zip(s) {
                    writeln!(out, "{t:.9e},{v:.9e},{sec:.6e}")?;
                }
            }
            None => {
                writeln!(out, "threshold,ccdf")?;
                for (t, v) in self.thresholds.iter().zip(&self.ccdf) {
                    writeln!(out, "{t:.9e},{v:.9e}")?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Read a curve written by [`CcdfCurve::to_csv`] (any trailing seconds column
    /// is ignored).
    pub fn from_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut thresholds = Vec::new();
        let mut ccdf = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("threshold") {
                continue;
            }
            let mut parts = line.split(',');
            let t: f64 = parts
                .next()
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Parse(format!("bad curve row `{line}`")))?;
            let v: f64 = parts
                .next()
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Parse(format!("bad curve row `{line}`")))?;
            thresholds.push(t);
            ccdf.push(v);
        }
        Self::new(thresholds, ccdf)
    }
}

/// Default SINR threshold grid: `points` linearly spaced values over
/// [-10, 40] dB, covering the usable 802.11ac range with margin.
pub fn sinr_grid_db(points: usize) -> Vec<f64> {
    linspace(-10.0, 40.0, points)
}

/// Default throughput threshold grid: `points` log-spaced values from
/// 0.1 to 80 Mbps (the top PHY rate is 78 Mbps).
pub fn throughput_grid_bps(points: usize) -> Vec<f64> {
    let (lo, hi) = (0.1e6f64, 80e6f64);
    let (la, lb) = (lo.ln(), hi.ln());
    (0..points)
        .map(|k| (la + (lb - la) * k as f64 / (points - 1) as f64).exp())
        .collect()
}

pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    assert!(points >= 2);
    (0..points)
        .map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64)
        .collect()
}
