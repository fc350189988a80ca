//! The stochastic-geometry model (SGM): Matérn-style medium access
//! probabilities, the SINR coverage integral, rate coverage, and the
//! sensing-overhead ("enhanced") variant.
//!
//! The model assumes APs on a Poisson process of density λ over the plane,
//! log-distance path loss, Rayleigh fading with parameter μ, saturated
//! downlink and one user per AP associated with its nearest AP. Coverage at
//! threshold T is the double integral
//!
//! ```text
//! p(T) ≈ ∫ exp(-μ·T·l(r0)·N0/P) ·
//!        exp(-∫_{R²∖B(0,r0)} T·l(r0)·λ·h1(r0,x) / (l(‖x‖)+T·l(r0)) dx) ·
//!        f_W(r0) dr0
//! ```
//!
//! where `f_W(r0) = 2πλ r0 exp(-λπr0²)` is the nearest-AP distance density
//! and `h1(r0,x) = p_typ · (1 - P_sense(d(x, tagged AP)))` is the
//! independent-thinning Matérn approximation: an AP transmits with the
//! typical medium access probability provided it falls outside the
//! (fading-randomized) sensing range of the tagged AP. The sensing
//! probability under Rayleigh fading is `P_sense(d) = exp(-μ·CST·l(d)/P)`,
//! decreasing in distance.
//!
//! Both integrals use trapezoidal quadrature: the outer integral on a
//! uniform grid truncated where the residual f_W mass drops below 1e-8, the inner
//! one on a log-radial × uniform-angular polar grid that starts just above
//! ‖x‖ = r0 (open at the ball boundary) and exploits the sensing kernel's
//! finite support to skip angular work far from the tagged AP.
//!
//! Evaluations at distinct thresholds are independent and run in parallel.

use crate::bianchi::{mac_efficiency, BianchiInputs};
use crate::ccdf::CcdfCurve;
use crate::geometry::{noise_power, RadioConfig, MIN_SEPARATION_M};
use crate::phy::{frame_duration, rate_of_sinr, FrameTimings, RateTable};
use crate::units::{db_to_lin, dbm_to_mw, lin_to_db};
use crate::{Error, Result};
use rayon::prelude::*;
use std::time::Instant;

/// Grid for the outer nearest-AP-distance integral.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    /// Truncation radius (m); 0 selects the radius where the residual f_W mass
    /// falls below 1e-8.
    pub max_radius_m: f64,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            max_radius_m: 0.0,
            points: 160,
        }
    }
}

/// Polar grid for the interference-field integral.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGridSpec {
    pub max_radius_m: f64,
    pub radial_points: usize,
    /// Angular points over the half circle (the integrand is symmetric).
    pub angular_points: usize,
}

impl Default for FieldGridSpec {
    fn default() -> Self {
        Self {
            max_radius_m: 3000.0,
            radial_points: 512,
            angular_points: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgmConfig {
    /// AP density λ (APs per m²).
    pub density_per_m2: f64,
    pub radio: RadioConfig,
    /// Rayleigh fading parameter μ (the paper fixes 1).
    pub mu: f64,
    pub r0_grid: GridSpec,
    pub field_grid: FieldGridSpec,
}

impl SgmConfig {
    pub fn new(density_per_m2: f64, radio: RadioConfig) -> Self {
        Self {
            density_per_m2,
            radio,
            mu: 1.0,
            r0_grid: GridSpec::default(),
            field_grid: FieldGridSpec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.radio.validate()?;
        if self.density_per_m2 <= 0.0 {
            return Err(Error::InvalidConfig("density must be positive".into()));
        }
        if self.mu <= 0.0 {
            return Err(Error::InvalidConfig("mu must be positive".into()));
        }
        if self.r0_grid.points < 8 || self.field_grid.radial_points < 8 {
            return Err(Error::InvalidConfig("grids too small".into()));
        }
        if self.field_grid.angular_points < 4 {
            return Err(Error::InvalidConfig("angular grid too small".into()));
        }
        let mean_nn = 0.5 / self.density_per_m2.sqrt();
        if self.field_grid.max_radius_m < 20.0 * mean_nn {
            return Err(Error::InvalidConfig(format!(
                "field radius {} m is below 20x the mean nearest-neighbor distance ({:.1} m)",
                self.field_grid.max_radius_m,
                20.0 * mean_nn
            )));
        }
        Ok(())
    }

    /// Outer truncation radius: configured value, or where the residual f_W mass
    /// drops below 1e-8.
    pub fn r0_max(&self) -> f64 {
        if self.r0_grid.max_radius_m > 0.0 {
            self.r0_grid.max_radius_m
        } else {
            (1e8f64.ln() / (std::f64::consts::PI * self.density_per_m2)).sqrt()
        }
    }
}

/// Matérn retention probability for a Poisson neighborhood of mean size
/// `nbar`: the chance a uniformly marked point has the lowest mark among its
/// sensed neighbors.
fn retention(nbar: f64) -> f64 {
    if nbar < 1e-12 {
        1.0
    } else {
        -(-nbar).exp_m1() / nbar
    }
}

/// `x^(α/2)` with the even-exponent fast path (α = 4 ⇒ square).
#[inline]
fn pow_half_alpha(x: f64, half_alpha: f64) -> f64 {
    if half_alpha == 2.0 {
        x * x
    } else {
        x.powf(half_alpha)
    }
}

/// Precomputed SGM evaluation context for one (density, radio) pair.
///
/// Construction computes the medium access probabilities; coverage
/// evaluations borrow the context immutably and may run concurrently.
#[derive(Debug, Clone)]
pub struct SgmModel {
    cfg: SgmConfig,
    noise_mw: f64,
    power_mw: f64,
    /// μ·CST·c/P: the sensing probability is exp(-k_sense · d^α).
    k_sense: f64,
    /// Linear loss intercept 10^(ref/10).
    intercept: f64,
    /// Radius beyond which the sensing kernel is numerically zero.
    kernel_radius: f64,
    nbar: f64,
    p_typ: f64,
    p_hat: f64,
}

impl SgmModel {
    pub fn new(cfg: SgmConfig) -> Result<Self> {
        cfg.validate()?;
        let noise_mw = dbm_to_mw(noise_power(&cfg.radio));
        let power_mw = cfg.radio.tx_power_mw();
        let intercept = dbm_to_mw(cfg.radio.pathloss_ref_db);
        let k_sense = cfg.mu * cfg.radio.cst_mw() * intercept / power_mw;
        let alpha = cfg.radio.pathloss_exponent;
        // exp(-45) ~ 3e-20: anything farther senses nothing
        let kernel_radius = (45.0 / k_sense).powf(1.0 / alpha).max(1.0);

        let mut model = Self {
            cfg,
            noise_mw,
            power_mw,
            k_sense,
            intercept,
            kernel_radius,
            nbar: 0.0,
            p_typ: 1.0,
            p_hat: 1.0,
        };
        model.nbar = model.mean_sensed_neighbors();
        model.p_typ = retention(model.nbar);
        model.p_hat = model.tagged_map();
        Ok(model)
    }

    pub fn config(&self) -> &SgmConfig {
        &self.cfg
    }

    /// Mean number of fading-sensed neighbors of a typical AP,
    /// `λ ∫ P_sense(‖x‖) dx`.
    pub fn mean_sensed_neighbors(&self) -> f64 {
        let n = 4096;
        let h = self.kernel_radius / n as f64;
        let mut acc = 0.0;
        for k in 0..=n {
            let r = k as f64 * h;
            let v = self.p_sense(r * r) * r;
            acc += if k == 0 || k == n { 0.5 * v } else { v };
        }
        self.cfg.density_per_m2 * 2.0 * std::f64::consts::PI * acc * h
    }

    /// Rayleigh-fading sensing probability at squared distance `d2`.
    #[inline]
    fn p_sense(&self, d2: f64) -> f64 {
        let half_alpha = 0.5 * self.cfg.radio.pathloss_exponent;
        let d2 = d2.max(MIN_SEPARATION_M * MIN_SEPARATION_M);
        (-self.k_sense * pow_half_alpha(d2, half_alpha)).exp()
    }

    /// Medium access probability of a typical AP (Matérn type-II value
    /// `(1 - e^{-N̄})/N̄`).
    pub fn map_typical(&self) -> f64 {
        self.p_typ
    }

    /// Medium access probability of the tagged AP (the user's nearest AP):
    /// the retention probability conditioned on an empty ball of radius r0
    /// around the user, averaged over the nearest-AP distance density f_W.
    /// Never below [`Self::map_typical`].
    pub fn map_tagged(&self) -> f64 {
        self.p_hat
    }

    fn tagged_map(&self) -> f64 {
        let lambda = self.cfg.density_per_m2;
        // cumulative kernel mass G(ρ) = ∫_ρ^∞ P_sense(r²) r dr on a grid
        let ng = 2048;
        let h = self.kernel_radius / ng as f64;
        let mut suffix = vec![0.0f64; ng + 1];
        for k in (0..ng).rev() {
            let r0 = k as f64 * h;
            let r1 = (k + 1) as f64 * h;
            let seg = 0.5 * (self.p_sense(r0 * r0) * r0 + self.p_sense(r1 * r1) * r1) * h;
            suffix[k] = suffix[k + 1] + seg;
        }
        let g = |rho: f64| -> f64 {
            if rho >= self.kernel_radius {
                return 0.0;
            }
            let x = rho / h;
            let idx = (x as usize).min(ng - 1);
            let frac = x - idx as f64;
            suffix[idx] * (1.0 - frac) + suffix[idx + 1] * frac
        };

        // mean sensed neighbors of the tagged AP at nearest-distance r0:
        // the ball B(user, r0) holds no APs, carving ρ < -2 r0 cos φ out of
        // the kernel around the tagged AP
        let n_phi = 256;
        let dphi = std::f64::consts::PI / n_phi as f64;
        let nbar_tagged = |r0: f64| -> f64 {
            let mut acc = 0.0;
            for k in 0..=n_phi {
                let phi = k as f64 * dphi;
                let rho_min = (-2.0 * r0 * phi.cos()).max(0.0);
                let v = g(rho_min);
                acc += if k == 0 || k == n_phi { 0.5 * v } else { v };
            }
            lambda * 2.0 * acc * dphi
        };

        // average the retention over f_W
        let r0_max = self.cfg.r0_max();
        let n = 256;
        let h0 = r0_max / n as f64;
        let mut acc = 0.0;
        for k in 0..=n {
            let r0 = k as f64 * h0;
            let fw = f_nearest(lambda, r0);
            let v = fw * retention(nbar_tagged(r0));
            acc += if k == 0 || k == n { 0.5 * v } else { v };
        }
        (acc * h0).clamp(self.p_typ, 1.0)
    }

    /// SINR coverage probability at threshold `t_db`.
    pub fn sinr_coverage(&self, t_db: f64) -> f64 {
        let t = db_to_lin(t_db);
        if t <= 0.0 {
            // any finite SINR exceeds the threshold
            return 1.0;
        }
        let lambda = self.cfg.density_per_m2;
        let mu = self.cfg.mu;
        let half_alpha = 0.5 * self.cfg.radio.pathloss_exponent;
        let r0_max = self.cfg.r0_max();
        let n0 = self.cfg.r0_grid.points;
        let h0 = r0_max / n0 as f64;

        let mut acc = 0.0;
        for k in 1..=n0 {
            let r0 = k as f64 * h0;
            let fw = f_nearest(lambda, r0);
            let l_r0 = self.intercept
                * pow_half_alpha((r0 * r0).max(MIN_SEPARATION_M * MIN_SEPARATION_M), half_alpha);
            let noise_term = (-mu * t * l_r0 * self.noise_mw / self.power_mw).exp();
            let interference = self.interference_exponent(r0, t);
            let v = fw * noise_term * (-interference).exp();
            acc += if k == n0 { 0.5 * v } else { v };
        }
        (acc * h0).clamp(0.0, 1.0)
    }

    /// The inner integral of the coverage expression:
    /// `λ·p_typ · ∫_{‖x‖>r0} ratio(s)·(1 - P_sense(d(x, tagged))) dx` with
    /// `ratio(s) = T·r0^α / (s^α + T·r0^α)` (the loss intercept cancels).
    fn interference_exponent(&self, r0: f64, t: f64) -> f64 {
        let half_alpha = 0.5 * self.cfg.radio.pathloss_exponent;
        let grid = &self.cfg.field_grid;
        let s_min = r0.max(1e-3) * (1.0 + 1e-9);
        let s_max = grid.max_radius_m;
        if s_min >= s_max {
            return 0.0;
        }
        let nr = grid.radial_points;
        let ntheta = grid.angular_points;
        let log_step = (s_max / s_min).ln() / nr as f64;
        let dtheta = std::f64::consts::PI / ntheta as f64;
        let t_r0a = t * pow_half_alpha(r0 * r0, half_alpha);
        let kill2 = self.kernel_radius * self.kernel_radius;

        // cos θ precomputed once per call
        let cos_theta: Vec<f64> = (0..=ntheta).map(|k| (k as f64 * dtheta).cos()).collect();

        let mut full = 0.0; // ∫ w(s) ds, w = s·ratio(s)
        let mut hole = 0.0; // ∫ w(s)·∮ P_sense dθ ds
        for j in 0..=nr {
            let s = s_min * (log_step * j as f64).exp();
            let ratio = t_r0a / (pow_half_alpha(s * s, half_alpha) + t_r0a);
            let w = s * ratio;
            // trapezoid in ln s: ds = s d(ln s)
            let radial_weight = if j == 0 || j == nr { 0.5 } else { 1.0 } * log_step * s;
            full += w * radial_weight;

            // the sensing hole only matters within kernel reach of the
            // tagged AP at (r0, 0)
            let gap = s - r0;
            if gap * gap <= kill2 {
                let mut theta_acc = 0.0;
                for (k, c) in cos_theta.iter().enumerate() {
                    let d2 = s * s + r0 * r0 - 2.0 * s * r0 * c;
                    if d2 > kill2 {
                        // d grows with θ: nothing further contributes
                        break;
                    }
                    let v = self.p_sense(d2);
                    theta_acc += if k == 0 || k == ntheta { 0.5 * v } else { v };
                }
                hole += w * (2.0 * theta_acc * dtheta) * radial_weight;
            }
        }
        let two_pi = 2.0 * std::f64::consts::PI;
        self.cfg.density_per_m2 * self.p_typ * (two_pi * full - hole)
    }

    /// Coverage with a refinement check: the value at the configured grids
    /// plus one at doubled grid densities. Logs a warning when they differ
    /// by more than 1e-3.
    pub fn sinr_coverage_checked(&self, t_db: f64) -> (f64, f64) {
        let coarse = self.sinr_coverage(t_db);
        let mut refined_cfg = self.cfg.clone();
        refined_cfg.r0_grid.points *= 2;
        refined_cfg.field_grid.radial_points *= 2;
        refined_cfg.field_grid.angular_points *= 2;
        let refined_model = Self {
            cfg: refined_cfg,
            ..self.clone()
        };
        let fine = refined_model.sinr_coverage(t_db);
        if (coarse - fine).abs() > 1e-3 {
            log::warn!(
                "coverage at {t_db} dB not grid-converged: {coarse:.6} vs refined {fine:.6}"
            );
        }
        (coarse, fine)
    }

    /// Sweep the coverage integral over a threshold grid (dB), in parallel.
    /// Returns the CCDF and per-threshold wall-clock seconds.
    pub fn sinr_ccdf(&self, thresholds_db: &[f64]) -> (CcdfCurve, Vec<f64>) {
        let results: Vec<(f64, f64)> = thresholds_db
            .par_iter()
            .map(|&t| {
                let start = Instant::now();
                let v = self.sinr_coverage(t);
                (v, start.elapsed().as_secs_f64())
            })
            .collect();
        let (ccdf, seconds): (Vec<f64>, Vec<f64>) = results.into_iter().unzip();
        (
            CcdfCurve {
                thresholds: thresholds_db.to_vec(),
                ccdf,
            },
            seconds,
        )
    }

    /// Rate (throughput) coverage at MAC throughput `rho_bps`: the SINR
    /// coverage at the threshold needed to carry `ρ / (p̂ · S̄)` on the PHY.
    /// `s_bar = None` is the original model without sensing overhead;
    /// `Some(S̄)` folds the average MAC efficiency into the demand.
    pub fn rate_coverage(
        &self,
        rho_bps: f64,
        table: &RateTable,
        s_bar: Option<f64>,
        mapping: RateMapping,
    ) -> Result<f64> {
        if rho_bps <= 0.0 {
            return Ok(1.0);
        }
        let s_bar_val = s_bar.unwrap_or(1.0);
        if !(s_bar_val > 0.0 && s_bar_val <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "S̄ must lie in (0,1], got {s_bar_val}"
            )));
        }
        let demand = rho_bps / (self.p_hat * s_bar_val);
        let t_db = match mapping {
            RateMapping::AutoRate => {
                if demand > table.max_rate_bps() {
                    return Ok(0.0);
                }
                crate::phy::inv_rate(demand, table)
            }
            RateMapping::Shannon => {
                let t_lin = 2f64.powf(demand / self.cfg.radio.bandwidth_hz) - 1.0;
                lin_to_db(t_lin)
            }
        };
        if t_db == f64::NEG_INFINITY {
            return Ok(1.0);
        }
        Ok(self.sinr_coverage(t_db))
    }

    /// Throughput CCDF over a grid of rate thresholds (bps), in parallel.
    pub fn throughput_ccdf(
        &self,
        rho_grid_bps: &[f64],
        table: &RateTable,
        s_bar: Option<f64>,
        mapping: RateMapping,
    ) -> Result<(CcdfCurve, Vec<f64>)> {
        let results: Vec<(f64, f64)> = rho_grid_bps
            .par_iter()
            .map(|&rho| {
                let start = Instant::now();
                let v = self.rate_coverage(rho, table, s_bar, mapping);
                v.map(|v| (v, start.elapsed().as_secs_f64()))
            })
            .collect::<Result<_>>()?;
        let (ccdf, seconds): (Vec<f64>, Vec<f64>) = results.into_iter().unzip();
        Ok((
            CcdfCurve {
                thresholds: rho_grid_bps.to_vec(),
                ccdf,
            },
            seconds,
        ))
    }

    /// Average sensing-overhead term S̄ for the enhanced model: frame
    /// durations at the PHY rate of the network-median SINR, and
    /// `n = round(1/p_typ)` contenders.
    ///
    /// Fails with [`Error::NoLink`] when the median SINR cannot carry any
    /// rate (the enhanced curve then falls back to the raw model).
    pub fn enhanced_overhead(
        &self,
        table: &RateTable,
        sinr_curve: &CcdfCurve,
        t: &FrameTimings,
    ) -> Result<f64> {
        let (median_db, crossed) = sinr_curve.crossing(0.5);
        if !crossed {
            log::warn!(
                "SINR CCDF never crosses 0.5 on the grid; using the closest endpoint {median_db} dB"
            );
        }
        let rate = rate_of_sinr(median_db, table);
        if rate <= 0.0 {
            return Err(Error::NoLink(format!(
                "median SINR {median_db:.2} dB is below the minimum link threshold"
            )));
        }
        let n = (1.0 / self.p_typ).round().max(1.0) as usize;
        let frame = frame_duration(rate, t)?;
        let inputs = BianchiInputs {
            n,
            avg_frame_s: frame,
            avg_success_s: frame + t.sifs_s + t.ack_duration_s() + t.difs_s,
            avg_collision_s: frame + t.difs_s,
            timings: t.clone(),
        };
        mac_efficiency(&inputs)
    }
}

/// Nearest-point distance density of a PPP: `f_W(r) = 2πλ r e^{-λπr²}`.
pub fn f_nearest(lambda: f64, r: f64) -> f64 {
    2.0 * std::f64::consts::PI * lambda * r * (-lambda * std::f64::consts::PI * r * r).exp()
}

/// How rate demands map to SINR thresholds in [`SgmModel::rate_coverage`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateMapping {
    /// The 802.11ac auto-rate step function (the realistic default).
    AutoRate,
    /// The Shannon bound `T = 2^(ρ/B) - 1`, kept for numerical cross-checks.
    Shannon,
}

pub mod oracle {
    //! Independent Monte Carlo oracles for the analytic SGM paths. These
    //! deliberately avoid the quadrature code: the thinning oracle samples
    //! Matérn type-II retention directly, and the coverage oracle integrates
    //! the Laplace functional by sampling interferer fields.

    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[derive(Debug, Clone, Copy)]
    pub struct ThinningEstimate {
        /// Fraction of APs retained (typical medium access probability).
        pub typical: f64,
        /// Retained fraction among nearest-APs-of-a-random-user.
        pub tagged: f64,
        pub points: usize,
    }

    /// Matérn type-II thinning on a torus: sample a PPP with uniform marks
    /// and symmetric pairwise Rayleigh fading; a point survives iff its mark
    /// is minimal among the neighbors it senses. Runs realizations until at
    /// least `min_points` APs have been judged.
    pub fn matern_map_thinning(model: &SgmModel, seed: u64, min_points: usize) -> ThinningEstimate {
        let cfg = model.config();
        let lambda = cfg.density_per_m2;
        // torus wide enough that the sensing kernel never wraps onto itself
        let side = (4.0 * model.kernel_radius).max(200.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut total = 0usize;
        let mut retained_total = 0usize;
        let mut tagged_total = 0usize;
        let mut tagged_retained = 0usize;

        while total < min_points {
            let n = crate::geometry::poisson_count(lambda * side * side, &mut rng);
            if n == 0 {
                continue;
            }
            let pts: Vec<[f64; 2]> =
                (0..n).map(|_| [rng.gen::<f64>() * side, rng.gen::<f64>() * side]).collect();
            let marks: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();

            // symmetric fading per unordered pair decides mutual sensing
            let mut sensed = vec![false; n * n];
            for i in 0..n {
                for j in (i + 1)..n {
                    let d2 = torus_dist2(pts[i], pts[j], side);
                    if d2 > model.kernel_radius * model.kernel_radius {
                        continue;
                    }
                    let p = model.p_sense(d2);
                    if rng.gen::<f64>() < p {
                        sensed[i * n + j] = true;
                        sensed[j * n + i] = true;
                    }
                }
            }
            let retained: Vec<bool> = (0..n)
                .map(|i| {
                    (0..n).all(|j| !sensed[i * n + j] || marks[j] >= marks[i])
                })
                .collect();
            retained_total += retained.iter().filter(|&&r| r).count();
            total += n;

            // tagged APs: nearest AP of each of n independent user points
            for _ in 0..n {
                let u = [rng.gen::<f64>() * side, rng.gen::<f64>() * side];
                let nearest = (0..n)
                    .min_by(|&a, &b| {
                        torus_dist2(u, pts[a], side)
                            .partial_cmp(&torus_dist2(u, pts[b], side))
                            .unwrap()
                    })
                    .unwrap();
                tagged_total += 1;
                if retained[nearest] {
                    tagged_retained += 1;
                }
            }
        }
        ThinningEstimate {
            typical: retained_total as f64 / total as f64,
            tagged: tagged_retained as f64 / tagged_total as f64,
            points: total,
        }
    }

    fn torus_dist2(a: [f64; 2], b: [f64; 2], side: f64) -> f64 {
        let mut dx = (a[0] - b[0]).abs();
        let mut dy = (a[1] - b[1]).abs();
        if dx > side / 2.0 {
            dx = side - dx;
        }
        if dy > side / 2.0 {
            dy = side - dy;
        }
        dx * dx + dy * dy
    }

    /// Monte Carlo version of the coverage integral: sample r0 from f_W and
    /// an interferer field from the h1-thinned PPP, then average the exact
    /// Rayleigh Laplace factors. Agrees with the quadrature in expectation.
    pub fn coverage_mc(model: &SgmModel, t_db: f64, samples: usize, seed: u64) -> f64 {
        let cfg = model.config();
        let lambda = cfg.density_per_m2;
        let mu = cfg.mu;
        let half_alpha = 0.5 * cfg.radio.pathloss_exponent;
        let t = db_to_lin(t_db);
        let r_field = cfg.field_grid.max_radius_m;
        let p_typ = model.map_typical();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut acc = 0.0;

        for _ in 0..samples {
            let r0 = (-(rng.gen::<f64>().max(f64::MIN_POSITIVE)).ln()
                / (std::f64::consts::PI * lambda))
                .sqrt();
            let r0a = pow_half_alpha(r0 * r0, half_alpha);
            let l_r0 = model.intercept * r0a;
            let noise_factor = (-mu * t * l_r0 * model.noise_mw / model.power_mw).exp();
            if r0 >= r_field {
                acc += noise_factor;
                continue;
            }

            // PPP(λ·p_typ) on the annulus, thinned by the out-of-range
            // probability around the tagged AP at (r0, 0)
            let area = std::f64::consts::PI * (r_field * r_field - r0 * r0);
            let n = crate::geometry::poisson_count(lambda * p_typ * area, &mut rng);
            let mut laplace = 1.0f64;
            for _ in 0..n {
                // uniform on the annulus via inverse-square sampling
                let s2 = r0 * r0 + rng.gen::<f64>() * (r_field * r_field - r0 * r0);
                let s = s2.sqrt();
                let theta = rng.gen::<f64>() * 2.0 * std::f64::consts::PI;
                let d2 = s2 + r0 * r0 - 2.0 * s * r0 * theta.cos();
                let keep = 1.0 - model.p_sense(d2);
                if rng.gen::<f64>() >= keep {
                    continue;
                }
                let sa = pow_half_alpha(s2, half_alpha);
                laplace *= 1.0 / (1.0 + t * r0a / sa);
            }
            acc += noise_factor * laplace;
        }
        acc / samples as f64
    }
}
