//! IEEE 802.11ac PHY abstraction: the SINR-to-rate step function, its
//! inverse, and the MAC/PHY frame timing constants.
//!
//! The default table is 802.11ac, 20 MHz, one spatial stream, 800 ns GI.
//! A 4 dB SINR is the minimum to establish a link (MCS 0) and 27 dB carries
//! the highest rate (MCS 8, 78 Mbps). Interior thresholds are evenly spaced;
//! the table can be overridden from a CSV to match a specific simulator
//! build.

use crate::{Error, Result};
use std::io::{BufRead, BufReader};
use std::path::Path;

/// SINR→PHY-rate step function: ordered `(threshold_db, rate_bps)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    steps: Vec<(f64, f64)>,
}

impl RateTable {
    /// Build a table from `(sinr_threshold_db, phy_rate_bps)` steps.
    ///
    /// Thresholds and rates must both be strictly increasing.
    pub fn new(steps: Vec<(f64, f64)>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::InvalidConfig("rate table is empty".into()));
        }
        for w in steps.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::InvalidConfig(format!(
                    "rate table thresholds not strictly increasing at {} dB",
                    w[1].0
                )));
            }
            if w[1].1 <= w[0].1 {
                return Err(Error::InvalidConfig(format!(
                    "rate table rates not strictly increasing at {} bps",
                    w[1].1
                )));
            }
        }
        Ok(Self { steps })
    }

    /// Load a table from a CSV of `threshold_db,rate_bps` rows. Lines
    /// starting with `#` and a leading header row are skipped.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut steps = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split(',');
            let a = parts.next().unwrap_or("").trim();
            let b = parts.next().unwrap_or("").trim();
            match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(t), Ok(r)) => steps.push((t, r)),
                _ if lineno == 0 => continue, // header row
                _ => {
                    return Err(Error::Parse(format!(
                        "rate table line {}: expected threshold_db,rate_bps",
                        lineno + 1
                    )))
                }
            }
        }
        Self::new(steps)
    }

    pub fn steps(&self) -> &[(f64, f64)] {
        &self.steps
    }

    /// Lowest usable SINR (dB): below this no link can be established.
    pub fn min_threshold_db(&self) -> f64 {
        self.steps[0].0
    }

    /// Highest PHY rate (bps) the table can assign.
    pub fn max_rate_bps(&self) -> f64 {
        self.steps[self.steps.len() - 1].1
    }
}

impl Default for RateTable {
    fn default() -> Self {
        let mbps = 1.0e6;
        Self::new(vec![
            (4.0, 6.5 * mbps),
            (7.0, 13.0 * mbps),
            (10.0, 19.5 * mbps),
            (13.0, 26.0 * mbps),
            (16.0, 39.0 * mbps),
            (19.0, 52.0 * mbps),
            (22.0, 58.5 * mbps),
            (25.0, 65.0 * mbps),
            (27.0, 78.0 * mbps),
        ])
        .expect("default rate table is valid")
    }
}

/// Map an SINR to the PHY rate it supports: 0 bps below the first threshold,
/// otherwise the rate of the largest threshold not exceeding `sinr_db`
/// (right-continuous step function).
pub fn rate_of_sinr(sinr_db: f64, table: &RateTable) -> f64 {
    let mut rate = 0.0;
    for &(t, r) in table.steps() {
        if sinr_db >= t {
            rate = r;
        } else {
            break;
        }
    }
    rate
}

/// Inverse of the auto-rate function: the smallest SINR threshold (dB) whose
/// rate meets `target_rate_bps`.
///
/// Returns `-inf` for targets ≤ 0 (any link qualifies) and `+inf` for
/// targets above the top rate (no SINR qualifies).
pub fn inv_rate(target_rate_bps: f64, table: &RateTable) -> f64 {
    if target_rate_bps <= 0.0 {
        return f64::NEG_INFINITY;
    }
    for &(t, r) in table.steps() {
        if r >= target_rate_bps {
            return t;
        }
    }
    f64::INFINITY
}

/// MAC/PHY timing constants of the 802.11 DCF abstraction.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTimings {
    /// Empty backoff slot duration σ (s).
    pub sigma_s: f64,
    pub sifs_s: f64,
    /// DIFS = SIFS + 2σ.
    pub difs_s: f64,
    /// PHY preamble + header duration (s), rate-independent.
    pub phy_header_s: f64,
    /// MAC header incl. FCS (bits).
    pub mac_header_bits: u32,
    /// MSDU payload (bits).
    pub msdu_bits: u32,
    pub ack_bits: u32,
    /// Basic rate used for ACK frames (bps).
    pub ack_rate_bps: f64,
    pub cw_min: u32,
    pub cw_max: u32,
}

impl Default for FrameTimings {
    fn default() -> Self {
        Self {
            sigma_s: 9e-6,
            sifs_s: 16e-6,
            difs_s: 34e-6,
            phy_header_s: 40e-6,
            mac_header_bits: 320,
            msdu_bits: 12_000,
            ack_bits: 112,
            ack_rate_bps: 24e6,
            cw_min: 15,
            cw_max: 1023,
        }
    }
}

impl FrameTimings {
    /// Check the structural invariants: DIFS = SIFS + 2σ and
    /// CW_max+1 a power-of-two multiple of CW_min+1.
    pub fn validate(&self) -> Result<()> {
        if (self.difs_s - (self.sifs_s + 2.0 * self.sigma_s)).abs() > 1e-12 {
            return Err(Error::InvalidConfig(
                "DIFS must equal SIFS + 2*sigma".into(),
            ));
        }
        let w0 = self.cw_min + 1;
        let wm = self.cw_max + 1;
        if w0 == 0 || wm % w0 != 0 || !(wm / w0).is_power_of_two() {
            return Err(Error::InvalidConfig(
                "CW_max+1 must be a power-of-two multiple of CW_min+1".into(),
            ));
        }
        if self.sigma_s <= 0.0 || self.sifs_s <= 0.0 || self.phy_header_s <= 0.0 {
            return Err(Error::InvalidConfig("timings must be positive".into()));
        }
        Ok(())
    }

    /// Number of backoff stages m, so that (CW_min+1)·2^m = CW_max+1.
    pub fn backoff_stages(&self) -> u32 {
        let ratio = (self.cw_max + 1) / (self.cw_min + 1);
        ratio.trailing_zeros()
    }

    /// Duration of an ACK frame on the air (PHY header + ACK bits at the
    /// basic rate).
    pub fn ack_duration_s(&self) -> f64 {
        self.phy_header_s + f64::from(self.ack_bits) / self.ack_rate_bps
    }
}

/// Time a data frame occupies the channel:
/// PHY header + (MAC header + MSDU)/rate.
pub fn frame_duration(phy_rate_bps: f64, t: &FrameTimings) -> Result<f64> {
    if phy_rate_bps <= 0.0 {
        return Err(Error::NoLink("frame duration undefined at rate 0".into()));
    }
    Ok(t.phy_header_s + f64::from(t.mac_header_bits + t.msdu_bits) / phy_rate_bps)
}
