use csmabench::des::{run_des, DesConfig};
use csmabench::geometry::{generate, RadioConfig};
use csmabench::hybrid::evaluate_hybrid;
use csmabench::{FrameTimings, RateTable};

fn main() {
    let mut radio = RadioConfig::default();
    radio.cst_dbm = -62.0;
    let dep = generate(5e-3, 223.606, 3, &radio).unwrap();
    let table = RateTable::default();
    let t = FrameTimings::default();
    let hyb = evaluate_hybrid(&dep, &radio, &table, &t).unwrap();
    let des_cfg = DesConfig { rng_seed: 3, ..DesConfig::default() };
    let stats = run_des(&dep, &radio, &des_cfg).unwrap();
    println!("links: {}", stats.len());
    let mut diffs = Vec::new();
    for (h, s) in hyb.iter().zip(stats.iter()) {
        assert_eq!(h.ap_id, s.ap_id);
        let fail_rate = 1.0 - (s.delivered_bits as f64 / (s.tx_attempts.max(1) as f64 * 14660.0)).min(1.0);
        if s.mean_rx_sinr_db.is_finite() && h.sinr_db.is_finite() {
            diffs.push(s.mean_rx_sinr_db - h.sinr_db);
        }
        if h.ap_id % 17 == 0 {
            println!(
                "ap {:3} hyb_sinr {:6.2} des_sinr {:6.2} attempts {:6} coll {:5} failrate~{:.2}",
                h.ap_id, h.sinr_db, s.mean_rx_sinr_db, s.tx_attempts, s.collisions, fail_rate
            );
        }
    }
    diffs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = diffs.len();
    println!(
        "des_sinr - hyb_sinr quartiles: p25 {:.2} p50 {:.2} p75 {:.2} dB (n={})",
        diffs[n / 4], diffs[n / 2], diffs[3 * n / 4], n
    );
    let blind = stats.iter().filter(|s| s.delivered_bits == 0).count();
    println!("blind links: {}/{}", blind, stats.len());
}
