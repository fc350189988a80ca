//! The hybrid per-link model: time-average SINR from pairwise path losses,
//! CSMA air-time sharing weighted by frame durations, and Bianchi MAC
//! efficiency, composed into per-link throughput.
//!
//! Rate resolution is deliberately two-pass and non-iterative: SINR depends
//! only on the sensing graph (not on rates), so pass 1 maps SINR to rates
//! and pass 2 derives air times and Bianchi timings from those rates. No
//! fixed point exists to chase.

use crate::bianchi::{mac_efficiency, neighborhood_timings};
use crate::geometry::{noise_power, Deployment, RadioConfig};
use crate::phy::{frame_duration, rate_of_sinr, FrameTimings, RateTable};
use crate::units::{dbm_to_mw, lin_to_db};
use crate::{Error, Result};
use std::io::Write;
use std::path::Path;

/// Per-link outputs of the hybrid model. The identity
/// `throughput = mac_eff · airtime · phy_rate` holds exactly for every
/// emitted value.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkMetrics {
    pub ap_id: usize,
    pub user_id: usize,
    pub sinr_db: f64,
    pub phy_rate_bps: f64,
    /// Fraction of transmission time the AP obtains in its neighborhood.
    pub airtime: f64,
    pub mac_eff: f64,
    pub throughput_bps: f64,
    pub inner_flag: bool,
}

/// Time-average downlink SINR of user `u` (dB): the serving AP at full
/// power against noise plus every AP outside the serving AP's sensing range,
/// each weighted by its transmission-time fraction `1/(1+|A_z|)`. No fading.
pub fn link_sinr(u: usize, dep: &Deployment, cfg: &RadioConfig) -> f64 {
    link_sinr_with_counts(u, dep, cfg, &dep.neighbor_counts())
}

fn link_sinr_with_counts(
    u: usize,
    dep: &Deployment,
    cfg: &RadioConfig,
    counts: &[usize],
) -> f64 {
    let x = dep.association[u];
    let p_mw = cfg.tx_power_mw();
    let signal = p_mw / dbm_to_mw(dep.loss_user_ap(u, x));
    let noise = dbm_to_mw(noise_power(cfg));
    let interference = interference_with_counts(u, dep, cfg, counts);
    lin_to_db(signal / (interference + noise))
}

/// Time-average interference power (mW) at user `u` from all APs outside
/// its serving AP's sensing range.
pub fn interference_at(u: usize, dep: &Deployment, cfg: &RadioConfig) -> f64 {
    interference_with_counts(u, dep, cfg, &dep.neighbor_counts())
}

fn interference_with_counts(
    u: usize,
    dep: &Deployment,
    cfg: &RadioConfig,
    counts: &[usize],
) -> f64 {
    let x = dep.association[u];
    let p_mw = cfg.tx_power_mw();
    let mut interference = 0.0;
    for z in 0..dep.n_aps() {
        if z == x || dep.adjacent(x, z) {
            continue;
        }
        let share = 1.0 / (1.0 + counts[z] as f64);
        interference += share * p_mw / dbm_to_mw(dep.loss_user_ap(u, z));
    }
    interference
}

/// Air time of AP `x`: its frame duration weighted by its transmission
/// probability `p = 1/(1+|A_x|)`, normalized over the sensing neighborhood.
/// Neighbors without a usable rate keep contending (they count in every
/// `p`) but contribute no channel time to the denominator. An AP without a
/// usable rate gets air time 0.
pub fn airtime(x: usize, dep: &Deployment, rates_bps: &[f64], t: &FrameTimings) -> Result<f64> {
    airtime_with_counts(x, dep, rates_bps, t, &dep.neighbor_counts())
}

fn airtime_with_counts(
    x: usize,
    dep: &Deployment,
    rates_bps: &[f64],
    t: &FrameTimings,
    counts: &[usize],
) -> Result<f64> {
    if rates_bps[x] <= 0.0 {
        return Ok(0.0);
    }
    let p = |z: usize| 1.0 / (1.0 + counts[z] as f64);
    let own = frame_duration(rates_bps[x], t)? * p(x);
    let mut total = own;
    for z in dep.neighbors(x) {
        if rates_bps[z] > 0.0 {
            total += frame_duration(rates_bps[z], t)? * p(z);
        }
    }
    Ok(own / total)
}

/// Evaluate the hybrid model over a deployment: one [`LinkMetrics`] per AP
/// that serves a user. APs whose link cannot sustain any rate still appear
/// (throughput 0), and APs without users contend and interfere but emit no
/// metrics. Never aborts a realization; per-link no-link conditions become
/// zero-throughput entries.
pub fn evaluate_hybrid(
    dep: &Deployment,
    cfg: &RadioConfig,
    table: &RateTable,
    t: &FrameTimings,
) -> Result<Vec<LinkMetrics>> {
    if dep.sensing_adj.is_empty() && dep.n_aps() > 1 {
        return Err(Error::InvalidConfig(
            "deployment needs a sensing graph before evaluation".into(),
        ));
    }
    let links = dep.link_users();
    let counts = dep.neighbor_counts();

    // pass 1: SINR per served user, rate per AP
    let mut sinr_db = vec![f64::NAN; dep.n_aps()];
    let mut rates = vec![0.0f64; dep.n_aps()];
    for (x, link) in links.iter().enumerate() {
        if let Some(u) = link {
            let s = link_sinr_with_counts(*u, dep, cfg, &counts);
            sinr_db[x] = s;
            rates[x] = rate_of_sinr(s, table);
        }
    }

    // pass 2: air time and Bianchi efficiency from the pass-1 rates
    let mut metrics = Vec::new();
    for (x, link) in links.iter().enumerate() {
        let Some(u) = link else { continue };
        let inner_flag = dep.inner_mask[x];
        if rates[x] <= 0.0 {
            metrics.push(LinkMetrics {
                ap_id: x,
                user_id: *u,
                sinr_db: sinr_db[x],
                phy_rate_bps: 0.0,
                airtime: 0.0,
                mac_eff: 1.0,
                throughput_bps: 0.0,
                inner_flag,
            });
            continue;
        }
        let air = airtime_with_counts(x, dep, &rates, t, &counts)?;
        let inputs = neighborhood_timings(x, dep, &rates, t)?;
        let eff = mac_efficiency(&inputs)?;
        metrics.push(LinkMetrics {
            ap_id: x,
            user_id: *u,
            sinr_db: sinr_db[x],
            phy_rate_bps: rates[x],
            airtime: air,
            mac_eff: eff,
            throughput_bps: eff * air * rates[x],
            inner_flag,
        });
    }
    Ok(metrics)
}

/// Write per-link metrics as CSV.
pub fn export_links(metrics: &[LinkMetrics], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        out,
        "ap_id,user_id,sinr_db,rate_bps,airtime,mac_eff,throughput_bps,inner_flag"
    )?;
    for m in metrics {
        writeln!(
            out,
            "{},{},{:.6},{:.1},{:.9},{:.9},{:.3},{}",
            m.ap_id,
            m.user_id,
            m.sinr_db,
            m.phy_rate_bps,
            m.airtime,
            m.mac_eff,
            m.throughput_bps,
            u8::from(m.inner_flag)
        )?;
    }
    out.flush()?;
    Ok(())
}
