//! Bianchi's saturation model of the DCF: the per-slot transmission
//! probability τ and the per-AP MAC efficiency S_x, shared by the hybrid
//! model and the enhanced stochastic-geometry variant.
//!
//! Convention: W = CW_min+1 = 16 (window sizes {0..15}) and m backoff stages
//! with W·2^m = CW_max+1.

use crate::phy::{frame_duration, FrameTimings};
use crate::{Deployment, Error, Result};

/// Absolute tolerance on the τ fixed point.
const TAU_TOL: f64 = 1e-10;
const MAX_BISECTIONS: u32 = 200;

/// Solve the binary-exponential-backoff fixed point for `n` saturated
/// contenders:
///
/// ```text
/// τ = 2(1-2p) / ((1-2p)(W+1) + p·W·(1-(2p)^m)),   p = 1 - (1-τ)^(n-1)
/// ```
///
/// The implementation uses the geometric-sum form
/// `τ = 2 / (W+1 + p·W·Σ_{i<m} (2p)^i)`, which is the same function without
/// the removable 0/0 at p = 1/2. The map is monotone, so the root in (0,1)
/// is unique; it is found by bisection to [`TAU_TOL`].
pub fn solve_tau(n: usize, t: &FrameTimings) -> Result<f64> {
    if n < 1 {
        return Err(Error::InvalidConfig("contender count must be >= 1".into()));
    }
    let w = f64::from(t.cw_min + 1);
    let m = t.backoff_stages();

    let tau_of_p = |p: f64| {
        let mut geom = 0.0;
        let mut term = 1.0;
        for _ in 0..m {
            geom += term;
            term *= 2.0 * p;
        }
        2.0 / (w + 1.0 + p * w * geom)
    };
    let residual = |tau: f64| {
        let p = 1.0 - (1.0 - tau).powi(n as i32 - 1);
        tau - tau_of_p(p)
    };

    if n == 1 {
        // p = 0 exactly: closed form
        return Ok(2.0 / (w + 1.0));
    }

    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    // residual(0) < 0, residual(1) > 0, strictly increasing in between
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if residual(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < TAU_TOL {
            let tau = 0.5 * (lo + hi);
            return Ok(tau);
        }
    }
    Err(Error::Numerical(format!(
        "tau bisection did not reach {TAU_TOL:e} for n={n}"
    )))
}

/// Inputs to the MAC-efficiency formula for one AP's sensing neighborhood.
#[derive(Debug, Clone)]
pub struct BianchiInputs {
    /// Total contenders n = 1 + |A_x| (all sensing neighbors count, whether
    /// or not they carry a usable rate).
    pub n: usize,
    /// Mean data-frame duration in the neighborhood (s).
    pub avg_frame_s: f64,
    /// Mean channel time of a successful transmission (s).
    pub avg_success_s: f64,
    /// Mean channel time of a collision (s).
    pub avg_collision_s: f64,
    pub timings: FrameTimings,
}

impl BianchiInputs {
    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::InvalidConfig("n must be >= 1".into()));
        }
        if self.avg_frame_s <= 0.0 || self.avg_success_s <= 0.0 || self.avg_collision_s <= 0.0 {
            return Err(Error::InvalidTimings("durations must be positive".into()));
        }
        if self.avg_success_s < self.avg_frame_s {
            return Err(Error::InvalidTimings(
                "success time cannot be shorter than the frame".into(),
            ));
        }
        Ok(())
    }
}

/// MAC efficiency of an AP: the fraction of channel time its neighborhood
/// spends inside successful data frames,
///
/// ```text
/// S = T̄_f / ( T̄_s - T̄_c + σ·(T̄*_c - (1-τ)^n (T̄*_c - 1)) / (n·τ·(1-τ)^(n-1)) )
/// ```
///
/// with T̄*_c = T̄_c/σ in slot units. Raw values above 1 (pathological
/// timing configurations) are clamped to 1 with a warning rather than
/// rejected, so parameter sweeps survive.
pub fn mac_efficiency(inputs: &BianchiInputs) -> Result<f64> {
    inputs.validate()?;
    let t = &inputs.timings;
    let n = inputs.n;
    let tau = solve_tau(n, t)?;
    let sigma = t.sigma_s;
    let tc_slots = inputs.avg_collision_s / sigma;
    let no_tx = (1.0 - tau).powi(n as i32);
    let succ = n as f64 * tau * (1.0 - tau).powi(n as i32 - 1);
    let idle_term = sigma * (tc_slots - no_tx * (tc_slots - 1.0)) / succ;
    let denom = inputs.avg_success_s - inputs.avg_collision_s + idle_term;
    if denom <= 0.0 {
        return Err(Error::InvalidTimings(format!(
            "efficiency denominator {denom:e} is not positive"
        )));
    }
    let s = inputs.avg_frame_s / denom;
    if s > 1.0 {
        log::warn!("MAC efficiency {s:.4} exceeds 1; clamping");
        return Ok(1.0);
    }
    Ok(s)
}

/// Build the neighborhood-average timings for AP `x`.
///
/// Frame durations are averaged over `{x} ∪ A_x` excluding members without a
/// usable rate; the success time adds SIFS + ACK + DIFS to the mean frame;
/// a collision occupies the channel for the longest frame in the
/// neighborhood plus DIFS. The contender count still includes every sensing
/// neighbor.
pub fn neighborhood_timings(
    x: usize,
    dep: &Deployment,
    rates_bps: &[f64],
    t: &FrameTimings,
) -> Result<BianchiInputs> {
    let mut durations = Vec::new();
    let mut push = |ap: usize| -> Result<()> {
        if rates_bps[ap] > 0.0 {
            durations.push(frame_duration(rates_bps[ap], t)?);
        }
        Ok(())
    };
    push(x)?;
    let mut neighbor_count = 0usize;
    for z in dep.neighbors(x) {
        neighbor_count += 1;
        push(z)?;
    }
    if durations.is_empty() {
        return Err(Error::NoLink(format!(
            "no usable rate in the sensing neighborhood of AP {x}"
        )));
    }
    let avg_frame_s = durations.iter().sum::<f64>() / durations.len() as f64;
    let max_frame_s = durations.iter().cloned().fold(f64::MIN, f64::max);
    Ok(BianchiInputs {
        n: 1 + neighbor_count,
        avg_frame_s,
        avg_success_s: avg_frame_s + t.sifs_s + t.ack_duration_s() + t.difs_s,
        avg_collision_s: max_frame_s + t.difs_s,
        timings: t.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate, RadioConfig};
    use proptest::prelude::*;

    #[test]
    fn tau_single_station_closed_form() {
        let t = FrameTimings::default();
        let tau = solve_tau(1, &t).unwrap();
        assert!((tau - 2.0 / 17.0).abs() < 1e-15);
    }

    #[test]
    fn tau_residual_below_1e9() {
        let t = FrameTimings::default();
        let w = f64::from(t.cw_min + 1);
        let m = t.backoff_stages();
        for n in [2usize, 3, 5, 10, 25, 50, 100] {
            let tau = solve_tau(n, &t).unwrap();
            assert!(tau > 0.0 && tau < 1.0);
            let p = 1.0 - (1.0 - tau).powi(n as i32 - 1);
            let mut geom = 0.0;
            let mut term = 1.0;
            for _ in 0..m {
                geom += term;
                term *= 2.0 * p;
            }
            let residual = tau - 2.0 / (w + 1.0 + p * w * geom);
            assert!(residual.abs() < 1e-9, "n={n}: residual {residual:e}");
        }
    }

    #[test]
    fn tau_two_stations_matches_fixed_point_iteration() {
        // independent route: damped fixed-point iteration on the same system
        let t = FrameTimings::default();
        let w = f64::from(t.cw_min + 1);
        let m = t.backoff_stages();
        let mut tau = 0.05f64;
        for _ in 0..20_000 {
            let p = 1.0 - (1.0 - tau);
            let mut geom = 0.0;
            let mut term = 1.0;
            for _ in 0..m {
                geom += term;
                term *= 2.0 * p;
            }
            let next = 2.0 / (w + 1.0 + p * w * geom);
            tau = 0.5 * tau + 0.5 * next;
        }
        let bisected = solve_tau(2, &t).unwrap();
        assert!(
            (bisected - tau).abs() < 1e-8,
            "bisection {bisected} vs iteration {tau}"
        );
    }

    #[test]
    fn tau_decreases_with_contention() {
        let t = FrameTimings::default();
        let mut prev = 1.0;
        for n in 1..=100 {
            let tau = solve_tau(n, &t).unwrap();
            assert!(tau < prev, "tau must decrease at n={n}");
            assert!(tau > 0.0);
            prev = tau;
        }
    }

    /// Eq.-level oracle at n=1: with no collisions the formula reduces to
    /// S = T_f / (T_s + σ·(1/τ - 1)), i.e. success time plus the mean idle
    /// backoff of 7.5 slots.
    #[test]
    fn efficiency_single_station_oracle() {
        let t = FrameTimings::default();
        let frame = frame_duration(78e6, &t).unwrap();
        let success = frame + t.sifs_s + t.ack_duration_s() + t.difs_s;
        let inputs = BianchiInputs {
            n: 1,
            avg_frame_s: frame,
            avg_success_s: success,
            avg_collision_s: frame + t.difs_s,
            timings: t.clone(),
        };
        let s = mac_efficiency(&inputs).unwrap();
        let tau = 2.0 / 17.0;
        let oracle = frame / (success + t.sigma_s * (1.0 / tau - 1.0));
        assert!((s - oracle).abs() < 1e-12, "{s} vs oracle {oracle}");
        assert!(s > 0.3 && s < 0.8, "single-station efficiency {s}");
    }

    /// With frames long against the contention window (6.5 Mbps) the
    /// efficiency falls monotonically with n. Short frames behave
    /// differently: at 78 Mbps a second station amortizes idle slots better
    /// than it costs in collisions, so S rises from n=1 to n=2 before
    /// falling — both behaviors follow from the per-slot accounting.
    #[test]
    fn efficiency_decreases_with_contention() {
        let t = FrameTimings::default();
        let eff = |rate: f64, n: usize| {
            let frame = frame_duration(rate, &t).unwrap();
            mac_efficiency(&BianchiInputs {
                n,
                avg_frame_s: frame,
                avg_success_s: frame + t.sifs_s + t.ack_duration_s() + t.difs_s,
                avg_collision_s: frame + t.difs_s,
                timings: t.clone(),
            })
            .unwrap()
        };
        let mut prev = 1.0;
        for n in [1usize, 2, 4, 8, 16] {
            let s = eff(6.5e6, n);
            assert!(s < prev, "S must decrease at n={n} for long frames");
            prev = s;
        }
        // short frames: single local maximum at small n, decreasing beyond
        assert!(eff(78e6, 2) > eff(78e6, 1));
        let mut prev = eff(78e6, 2);
        for n in [4usize, 8, 16] {
            let s = eff(78e6, n);
            assert!(s < prev, "S must decrease at n={n} for short frames");
            prev = s;
        }
    }

    /// As σ→0 the idle term tends to T̄_c·(1-(1-τ)^n)/(n·τ·(1-τ)^(n-1)),
    /// so S → T̄_f / (T̄_s - T̄_c + that limit); the guard is that the
    /// denominator stays positive.
    #[test]
    fn efficiency_vanishing_slot_limit() {
        let t0 = FrameTimings::default();
        let frame = frame_duration(39e6, &t0).unwrap();
        let success = frame + t0.sifs_s + t0.ack_duration_s() + t0.difs_s;
        let collision = frame + t0.difs_s;
        for n in [1usize, 3, 8] {
            let tau = solve_tau(n, &t0).unwrap();
            let ptr = 1.0 - (1.0 - tau).powi(n as i32);
            let succ = n as f64 * tau * (1.0 - tau).powi(n as i32 - 1);
            let limit = frame / (success - collision + collision * ptr / succ);
            let mut prev_err = f64::INFINITY;
            for sigma in [1e-7, 1e-9, 1e-11] {
                let mut t = t0.clone();
                t.sigma_s = sigma;
                let s = mac_efficiency(&BianchiInputs {
                    n,
                    avg_frame_s: frame,
                    avg_success_s: success,
                    avg_collision_s: collision,
                    timings: t,
                })
                .unwrap();
                let err = (s - limit).abs();
                assert!(err < prev_err, "convergence to the σ→0 limit at n={n}");
                prev_err = err;
            }
            assert!(prev_err < 1e-6);
        }
    }

    #[test]
    fn efficiency_in_unit_interval_random_sweep() {
        let t = FrameTimings::default();
        let table = crate::RateTable::default();
        let mut state = 0x9E37u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 33) as usize
        };
        for _ in 0..200 {
            let n = 1 + next() % 50;
            let k = 1 + next() % n.min(8);
            let durations: Vec<f64> = (0..k)
                .map(|_| {
                    let (_, rate) = table.steps()[next() % table.steps().len()];
                    frame_duration(rate, &t).unwrap()
                })
                .collect();
            let avg = durations.iter().sum::<f64>() / durations.len() as f64;
            let max = durations.iter().cloned().fold(f64::MIN, f64::max);
            let inputs = BianchiInputs {
                n,
                avg_frame_s: avg,
                avg_success_s: avg + t.sifs_s + t.ack_duration_s() + t.difs_s,
                avg_collision_s: max + t.difs_s,
                timings: t.clone(),
            };
            let s = mac_efficiency(&inputs).unwrap();
            assert!(s > 0.0 && s <= 1.0, "S={s} out of (0,1] for n={n}");
        }
    }

    proptest! {
        /// Multiplying every duration and σ by a common factor leaves S
        /// unchanged.
        #[test]
        fn efficiency_scale_invariant(
            scale in 0.01f64..100.0,
            n in 1usize..30,
            rate_idx in 0usize..9,
        ) {
            let t = FrameTimings::default();
            let rate = RateTable::default().steps()[rate_idx].1;
            let frame = frame_duration(rate, &t).unwrap();
            let base = BianchiInputs {
                n,
                avg_frame_s: frame,
                avg_success_s: frame + t.sifs_s + t.ack_duration_s() + t.difs_s,
                avg_collision_s: frame + t.difs_s,
                timings: t.clone(),
            };
            let mut scaled_t = t.clone();
            scaled_t.sigma_s *= scale;
            scaled_t.sifs_s *= scale;
            scaled_t.difs_s *= scale;
            scaled_t.phy_header_s *= scale;
            let scaled = BianchiInputs {
                n,
                avg_frame_s: base.avg_frame_s * scale,
                avg_success_s: base.avg_success_s * scale,
                avg_collision_s: base.avg_collision_s * scale,
                timings: scaled_t,
            };
            let a = mac_efficiency(&base).unwrap();
            let b = mac_efficiency(&scaled).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    use crate::RateTable;

    #[test]
    fn neighborhood_timings_single_station() {
        let cfg = RadioConfig::default();
        let dep = isolated_ap(&cfg);
        let t = FrameTimings::default();
        let inputs = neighborhood_timings(0, &dep, &[78e6], &t).unwrap();
        assert_eq!(inputs.n, 1);
        assert!((inputs.avg_frame_s - 1.980e-4).abs() < 1e-7);
        assert!((inputs.avg_success_s - 2.927e-4).abs() < 1e-7);
        assert!((inputs.avg_collision_s - (inputs.avg_frame_s + t.difs_s)).abs() < 1e-12);
    }

    fn isolated_ap(cfg: &RadioConfig) -> Deployment {
        let mut dep = Deployment {
            ap_positions: vec![[0.0, 0.0]],
            user_positions: vec![[10.0, 0.0]],
            association: vec![0],
            pathloss_db: Default::default(),
            sensing_adj: Vec::new(),
            inner_mask: vec![true],
            area_side_m: 100.0,
        };
        dep.compute_pathlosses(cfg);
        dep.build_sensing_graph(cfg).unwrap();
        dep
    }

    fn two_clique(cfg: &RadioConfig) -> Deployment {
        let mut dep = Deployment {
            ap_positions: vec![[0.0, 0.0], [10.0, 0.0]],
            user_positions: vec![[0.0, 5.0], [10.0, 5.0]],
            association: vec![0, 1],
            pathloss_db: Default::default(),
            sensing_adj: Vec::new(),
            inner_mask: vec![true, true],
            area_side_m: 100.0,
        };
        dep.compute_pathlosses(cfg);
        dep.build_sensing_graph(cfg).unwrap();
        dep
    }

    #[test]
    fn neighborhood_timings_collision_takes_longest_frame() {
        let cfg = RadioConfig::default();
        let dep = two_clique(&cfg);
        assert!(dep.adjacent(0, 1));
        let t = FrameTimings::default();

        // equal rates: collision time is frame + DIFS
        let inputs = neighborhood_timings(0, &dep, &[78e6, 78e6], &t).unwrap();
        assert_eq!(inputs.n, 2);
        assert!((inputs.avg_collision_s - (inputs.avg_frame_s + t.difs_s)).abs() < 1e-12);

        // mixed rates: mean of the two durations, max for collisions
        let inputs = neighborhood_timings(0, &dep, &[6.5e6, 78e6], &t).unwrap();
        let d_slow = frame_duration(6.5e6, &t).unwrap();
        let d_fast = frame_duration(78e6, &t).unwrap();
        assert!((inputs.avg_frame_s - 0.5 * (d_slow + d_fast)).abs() < 1e-12);
        assert!((inputs.avg_frame_s - 1.066e-3).abs() < 1e-6);
        assert!((inputs.avg_collision_s - (d_slow + t.difs_s)).abs() < 1e-12);
    }

    #[test]
    fn neighborhood_timings_skips_rate_zero_members() {
        let cfg = RadioConfig::default();
        let dep = two_clique(&cfg);
        let t = FrameTimings::default();
        let inputs = neighborhood_timings(0, &dep, &[78e6, 0.0], &t).unwrap();
        // neighbor still counts as a contender but adds no duration
        assert_eq!(inputs.n, 2);
        assert!((inputs.avg_frame_s - frame_duration(78e6, &t).unwrap()).abs() < 1e-15);

        let err = neighborhood_timings(0, &dep, &[0.0, 0.0], &t);
        assert!(matches!(err, Err(Error::NoLink(_))));
    }

    #[test]
    fn neighborhood_counts_match_generated_graph() {
        let cfg = RadioConfig::default();
        let dep = generate(5e-3, 223.6, 21, &cfg).unwrap();
        let t = FrameTimings::default();
        let rates = vec![39e6; dep.n_aps()];
        for x in 0..dep.n_aps() {
            let inputs = neighborhood_timings(x, &dep, &rates, &t).unwrap();
            assert_eq!(inputs.n, 1 + dep.neighbor_count(x));
        }
    }
}
