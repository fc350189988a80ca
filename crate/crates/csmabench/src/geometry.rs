//! Poisson deployments, pairwise path loss, user association, carrier-sense
//! graphs, and the edge-effect-free inner analysis region.
//!
//! A [`Deployment`] is immutable once built and safe to share read-only
//! across parallel workers; everything here is a deterministic function of
//! (inputs, seed).

use crate::units::dbm_to_mw;
use crate::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Nodes closer than this are treated as 0.1 m apart so the log-distance
/// loss never becomes singular at coincident points.
pub const MIN_SEPARATION_M: f64 = 0.1;

/// Every physical-layer constant in one place.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioConfig {
    /// AP transmit power (dBm).
    pub tx_power_dbm: f64,
    /// Carrier sense threshold (dBm); practical values lie in [-82, -62].
    pub cst_dbm: f64,
    /// Thermal noise power spectral density (dBm/Hz).
    pub noise_psd_dbmhz: f64,
    pub noise_figure_db: f64,
    pub bandwidth_hz: f64,
    /// Log-distance path loss exponent α; must exceed 2 for the
    /// interference integrals to converge.
    pub pathloss_exponent: f64,
    /// Loss at the 1 m reference distance (dB). The default is free-space
    /// loss at 1 m for 5.2 GHz operation.
    pub pathloss_ref_db: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            tx_power_dbm: 23.0,
            cst_dbm: -82.0,
            noise_psd_dbmhz: -174.0,
            noise_figure_db: 15.0,
            bandwidth_hz: 2.0e7,
            pathloss_exponent: 4.0,
            pathloss_ref_db: 46.7,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tx_power_dbm <= self.cst_dbm {
            return Err(Error::InvalidConfig(
                "tx power must exceed the carrier sense threshold".into(),
            ));
        }
        if self.bandwidth_hz <= 0.0 {
            return Err(Error::InvalidConfig("bandwidth must be positive".into()));
        }
        if self.pathloss_exponent <= 2.0 {
            return Err(Error::InvalidConfig(
                "path loss exponent must exceed 2 (interference integrals diverge otherwise)"
                    .into(),
            ));
        }
        Ok(())
    }

    /// Transmit power in linear milliwatts.
    pub fn tx_power_mw(&self) -> f64 {
        dbm_to_mw(self.tx_power_dbm)
    }

    /// Carrier sense threshold in linear milliwatts.
    pub fn cst_mw(&self) -> f64 {
        dbm_to_mw(self.cst_dbm)
    }

    /// Linear path-loss factor at distance `d` meters (received power =
    /// tx power / factor), with the minimum-separation clamp applied.
    pub fn pathloss_lin(&self, distance_m: f64) -> f64 {
        dbm_to_mw(pathloss(distance_m, self))
    }
}

/// Log-distance path loss in dB: `ref + 10·α·log10(d)`, with distances
/// clamped to [`MIN_SEPARATION_M`].
pub fn pathloss(distance_m: f64, cfg: &RadioConfig) -> f64 {
    let d = distance_m.max(MIN_SEPARATION_M);
    cfg.pathloss_ref_db + 10.0 * cfg.pathloss_exponent * d.log10()
}

/// Total noise power over the receiver bandwidth (dBm):
/// PSD + 10·log10(B) + noise figure.
pub fn noise_power(cfg: &RadioConfig) -> f64 {
    cfg.noise_psd_dbmhz + 10.0 * cfg.bandwidth_hz.log10() + cfg.noise_figure_db
}

/// Dense symmetric matrix of pairwise losses (dB) over all nodes.
#[derive(Debug, Clone, Default)]
pub struct LossMatrix {
    n: usize,
    data: Vec<f64>,
}

impl LossMatrix {
    fn build(positions: &[[f64; 2]], cfg: &RadioConfig) -> Self {
        let n = positions.len();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = positions[i][0] - positions[j][0];
                let dy = positions[i][1] - positions[j][1];
                let loss = pathloss((dx * dx + dy * dy).sqrt(), cfg);
                data[i * n + j] = loss;
                data[j * n + i] = loss;
            }
        }
        Self { n, data }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

/// A sampled network realization: AP and user positions, nearest-AP
/// association, pairwise losses, the carrier-sense adjacency over APs, and
/// the inner-region mask.
///
/// Node indexing for the loss matrix: APs are nodes `0..n_aps()`, users are
/// nodes `n_aps()..n_aps()+n_users()`.
#[derive(Debug, Clone)]
pub struct Deployment {
    pub ap_positions: Vec<[f64; 2]>,
    pub user_positions: Vec<[f64; 2]>,
    /// For each user, the index of its nearest AP (ties to the lowest index).
    pub association: Vec<usize>,
    pub pathloss_db: LossMatrix,
    /// Symmetric carrier-sense adjacency over APs, false diagonal.
    pub sensing_adj: Vec<bool>,
    /// True iff the AP lies in the central ninth of the square.
    pub inner_mask: Vec<bool>,
    pub area_side_m: f64,
}

impl Deployment {
    pub fn n_aps(&self) -> usize {
        self.ap_positions.len()
    }

    pub fn n_users(&self) -> usize {
        self.user_positions.len()
    }

    /// Loss matrix node index of user `u`.
    pub fn user_node(&self, u: usize) -> usize {
        self.n_aps() + u
    }

    /// Loss (dB) between two APs.
    pub fn loss_ap_ap(&self, x: usize, z: usize) -> f64 {
        self.pathloss_db.get(x, z)
    }

    /// Loss (dB) between user `u` and AP `x`.
    pub fn loss_user_ap(&self, u: usize, x: usize) -> f64 {
        self.pathloss_db.get(self.user_node(u), x)
    }

    pub fn adjacent(&self, x: usize, z: usize) -> bool {
        self.sensing_adj[x * self.n_aps() + z]
    }

    /// Indices of APs within carrier-sense range of `x` (excluding `x`).
    pub fn neighbors(&self, x: usize) -> impl Iterator<Item = usize> + '_ {
        let n = self.n_aps();
        (0..n).filter(move |&z| self.sensing_adj[x * n + z])
    }

    pub fn neighbor_count(&self, x: usize) -> usize {
        self.neighbors(x).count()
    }

    /// Sensing-neighbor count of every AP in one pass.
    pub fn neighbor_counts(&self) -> Vec<usize> {
        (0..self.n_aps()).map(|x| self.neighbor_count(x)).collect()
    }

    /// Sensing-neighbor adjacency lists for all APs.
    pub fn neighbor_lists(&self) -> Vec<Vec<usize>> {
        (0..self.n_aps()).map(|x| self.neighbors(x).collect()).collect()
    }

    /// For each AP, the user it serves: the lowest-loss user among those
    /// associated with it, or `None` if no user associated. The deployment
    /// keeps every sampled user, but each AP carries at most one link so
    /// per-link metrics stay one-per-AP.
    pub fn link_users(&self) -> Vec<Option<usize>> {
        let mut links: Vec<Option<usize>> = vec![None; self.n_aps()];
        for (u, &x) in self.association.iter().enumerate() {
            let loss = self.loss_user_ap(u, x);
            match links[x] {
                Some(prev) if self.loss_user_ap(prev, x) <= loss => {}
                _ => links[x] = Some(u),
            }
        }
        links
    }

    /// APs flagged by the inner mask.
    pub fn inner_aps(&self) -> impl Iterator<Item = usize> + '_ {
        self.inner_mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| i)
    }

    /// Fill the pairwise loss matrix from positions.
    pub fn compute_pathlosses(&mut self, cfg: &RadioConfig) {
        let mut positions = self.ap_positions.clone();
        positions.extend_from_slice(&self.user_positions);
        self.pathloss_db = LossMatrix::build(&positions, cfg);
    }

    /// Fill the carrier-sense adjacency: APs x and z are adjacent iff the
    /// received power `tx_power - loss` meets the CST. No fading is applied,
    /// so the graph is deterministic and symmetric.
    pub fn build_sensing_graph(&mut self, cfg: &RadioConfig) -> Result<()> {
        if self.pathloss_db.is_empty() {
            return Err(Error::InvalidConfig(
                "pathloss matrix must be computed before the sensing graph".into(),
            ));
        }
        let n = self.n_aps();
        let mut adj = vec![false; n * n];
        for x in 0..n {
            for z in (x + 1)..n {
                let rx_dbm = cfg.tx_power_dbm - self.loss_ap_ap(x, z);
                if rx_dbm >= cfg.cst_dbm {
                    adj[x * n + z] = true;
                    adj[z * n + x] = true;
                }
            }
        }
        self.sensing_adj = adj;
        Ok(())
    }
}

/// Sample a Poisson deployment on a square of side `area_side_m`: the AP
/// count is Poisson(density·area), AP positions i.i.d. uniform, and exactly
/// one user per AP, placed uniformly over the region whose nearest AP it is
/// (so nearest-AP association holds by construction and every AP serves a
/// single user).
///
/// Only positions, association and the inner mask are filled; call
/// [`Deployment::compute_pathlosses`] and [`Deployment::build_sensing_graph`]
/// (or use [`generate`]) to finish the build. Returns
/// [`Error::EmptyRealization`] when the Poisson draw is zero so the harness
/// can resample.
pub fn sample_ppp(density_per_m2: f64, area_side_m: f64, rng_seed: u64) -> Result<Deployment> {
    if density_per_m2 <= 0.0 || area_side_m <= 0.0 {
        return Err(Error::InvalidConfig(
            "density and area side must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mean = density_per_m2 * area_side_m * area_side_m;
    let n_aps = poisson_count(mean, &mut rng);
    if n_aps == 0 {
        return Err(Error::EmptyRealization);
    }

    let uniform_point =
        |rng: &mut ChaCha8Rng| [rng.gen::<f64>() * area_side_m, rng.gen::<f64>() * area_side_m];
    let ap_positions: Vec<[f64; 2]> = (0..n_aps).map(|_| uniform_point(&mut rng)).collect();

    // one user per AP: keep the first uniform candidate falling in each
    // AP's nearest-AP cell (uniform within the cell)
    let mut user_positions: Vec<Option<[f64; 2]>> = vec![None; n_aps];
    let mut remaining = n_aps;
    let mut draws: u64 = 0;
    let draw_budget = 200_000u64.max(20_000 * n_aps as u64);
    while remaining > 0 {
        let p = uniform_point(&mut rng);
        let x = nearest_ap(&p, &ap_positions);
        if user_positions[x].is_none() {
            user_positions[x] = Some(p);
            remaining -= 1;
        }
        draws += 1;
        if draws > draw_budget {
            // vanishing-probability fallback for degenerate cells: nudge the
            // user next to its AP, which lies in the cell for any positive
            // nearest-neighbor separation
            for (x, slot) in user_positions.iter_mut().enumerate() {
                if slot.is_none() {
                    let ap = ap_positions[x];
                    *slot = Some([
                        (ap[0] + MIN_SEPARATION_M).min(area_side_m),
                        ap[1],
                    ]);
                }
            }
            break;
        }
    }
    let user_positions: Vec<[f64; 2]> = user_positions.into_iter().map(|p| p.unwrap()).collect();
    let association = (0..n_aps).collect();

    let lo = area_side_m / 3.0;
    let hi = 2.0 * area_side_m / 3.0;
    let inner_mask = ap_positions
        .iter()
        .map(|p| p[0] >= lo && p[0] <= hi && p[1] >= lo && p[1] <= hi)
        .collect();

    Ok(Deployment {
        ap_positions,
        user_positions,
        association,
        pathloss_db: LossMatrix::default(),
        sensing_adj: Vec::new(),
        inner_mask,
        area_side_m,
    })
}

/// Sample, compute losses and build the sensing graph in one call.
pub fn generate(
    density_per_m2: f64,
    area_side_m: f64,
    rng_seed: u64,
    cfg: &RadioConfig,
) -> Result<Deployment> {
    cfg.validate()?;
    let mut dep = sample_ppp(density_per_m2, area_side_m, rng_seed)?;
    dep.compute_pathlosses(cfg);
    dep.build_sensing_graph(cfg)?;
    Ok(dep)
}

fn nearest_ap(user: &[f64; 2], aps: &[[f64; 2]]) -> usize {
    let mut best = 0usize;
    let mut best_d2 = f64::INFINITY;
    for (i, p) in aps.iter().enumerate() {
        let dx = p[0] - user[0];
        let dy = p[1] - user[1];
        let d2 = dx * dx + dy * dy;
        if d2 < best_d2 {
            best_d2 = d2;
            best = i;
        }
    }
    best
}

/// Draw a Poisson count with the given mean.
pub fn poisson_count<R: Rng>(mean: f64, rng: &mut R) -> usize {
    Poisson::new(mean).expect("positive mean").sample(rng) as usize
}

// ---------------------------------------------------------------------------
// CSV export / import
// ---------------------------------------------------------------------------

/// Write `nodes.csv` and `pathloss.csv` into `dir`, so identical topologies
/// can be fed to an external simulator.
///
/// `nodes.csv` columns: `id,kind,x_m,y_m,assoc_id,inner_flag` where APs come
/// first (empty `assoc_id`) and users carry their AP's id and inner flag.
/// `pathloss.csv` columns: `i,j,loss_db` over the upper triangle of the node
/// matrix.
pub fn export_deployment(dep: &Deployment, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut nodes = std::io::BufWriter::new(std::fs::File::create(dir.join("nodes.csv"))?);
    writeln!(nodes, "# area_side_m={:.6}", dep.area_side_m)?;
    writeln!(nodes, "id,kind,x_m,y_m,assoc_id,inner_flag")?;
    for (i, p) in dep.ap_positions.iter().enumerate() {
        writeln!(
            nodes,
            "{},ap,{:.6},{:.6},,{}",
            i,
            p[0],
            p[1],
            u8::from(dep.inner_mask[i])
        )?;
    }
    for (u, p) in dep.user_positions.iter().enumerate() {
        let x = dep.association[u];
        writeln!(
            nodes,
            "{},user,{:.6},{:.6},{},{}",
            dep.user_node(u),
            p[0],
            p[1],
            x,
            u8::from(dep.inner_mask[x])
        )?;
    }
    nodes.flush()?;

    let mut losses = std::io::BufWriter::new(std::fs::File::create(dir.join("pathloss.csv"))?);
    writeln!(losses, "i,j,loss_db")?;
    let n = dep.pathloss_db.len();
    for i in 0..n {
        for j in (i + 1)..n {
            writeln!(losses, "{},{},{:.9}", i, j, dep.pathloss_db.get(i, j))?;
        }
    }
    losses.flush()?;
    Ok(())
}

/// Read a deployment previously written by [`export_deployment`]. The
/// sensing graph is not stored; rebuild it with
/// [`Deployment::build_sensing_graph`] for the CST of interest.
pub fn import_deployment(dir: &Path) -> Result<Deployment> {
    let nodes_file = std::fs::File::open(dir.join("nodes.csv"))?;
    let mut area_side_m = 0.0;
    let mut ap_positions = Vec::new();
    let mut user_positions = Vec::new();
    let mut association = Vec::new();
    let mut inner_mask = Vec::new();
    for line in BufReader::new(nodes_file).lines() {
        let line = line?;
        let line = line.trim();
        if let Some(rest) = line.strip_prefix("# area_side_m=") {
            area_side_m = rest
                .parse()
                .map_err(|_| Error::Parse("bad area_side_m header".into()))?;
            continue;
        }
        if line.is_empty() || line.starts_with('#') || line.starts_with("id,") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::Parse(format!("nodes.csv: bad row `{line}`")));
        }
        let x: f64 = fields[2]
            .parse()
            .map_err(|_| Error::Parse("nodes.csv: bad x_m".into()))?;
        let y: f64 = fields[3]
            .parse()
            .map_err(|_| Error::Parse("nodes.csv: bad y_m".into()))?;
        match fields[1] {
            "ap" => {
                ap_positions.push([x, y]);
                let flag: u8 = fields[5]
                    .parse()
                    .map_err(|_| Error::Parse("nodes.csv: bad inner_flag".into()))?;
                inner_mask.push(flag != 0);
            }
            "user" => {
                user_positions.push([x, y]);
                let assoc: usize = fields[4]
                    .parse()
                    .map_err(|_| Error::Parse("nodes.csv: bad assoc_id".into()))?;
                association.push(assoc);
            }
            other => return Err(Error::Parse(format!("nodes.csv: unknown kind `{other}`"))),
        }
    }
    if area_side_m <= 0.0 {
        return Err(Error::Parse("nodes.csv: missing area_side_m header".into()));
    }
    let n = ap_positions.len() + user_positions.len();
    let mut data = vec![0.0; n * n];
    let losses_file = std::fs::File::open(dir.join("pathloss.csv"))?;
    for line in BufReader::new(losses_file).lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("i,") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Parse(format!("pathloss.csv: bad row `{line}`")));
        }
        let i: usize = fields[0]
            .parse()
            .map_err(|_| Error::Parse("pathloss.csv: bad i".into()))?;
        let j: usize = fields[1]
            .parse()
            .map_err(|_| Error::Parse("pathloss.csv: bad j".into()))?;
        let loss: f64 = fields[2]
            .parse()
            .map_err(|_| Error::Parse("pathloss.csv: bad loss_db".into()))?;
        if i >= n || j >= n {
            return Err(Error::Parse("pathloss.csv: node index out of range".into()));
        }
        data[i * n + j] = loss;
        data[j * n + i] = loss;
    }

    Ok(Deployment {
        ap_positions,
        user_positions,
        association,
        pathloss_db: LossMatrix { n, data },
        sensing_adj: Vec::new(),
        inner_mask,
        area_side_m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const AREA_SIDE: f64 = 223.606_797_749_979; // 0.05 km^2

    #[test]
    fn pathloss_reference_identity() {
        let cfg = RadioConfig::default();
        assert!((pathloss(1.0, &cfg) - 46.7).abs() < 1e-12);
        assert!((pathloss(10.0, &cfg) - 86.7).abs() < 1e-12);
        assert!((pathloss(100.0, &cfg) - 126.7).abs() < 1e-12);
    }

    #[test]
    fn pathloss_clamps_at_min_separation() {
        let cfg = RadioConfig::default();
        assert_eq!(pathloss(0.0, &cfg), pathloss(0.1, &cfg));
        assert_eq!(pathloss(0.05, &cfg), pathloss(0.1, &cfg));
    }

    #[test]
    fn pathloss_monotone() {
        let cfg = RadioConfig::default();
        let mut prev = f64::NEG_INFINITY;
        for k in 1..200 {
            let d = k as f64 * 0.5;
            let l = pathloss(d, &cfg);
            assert!(l > prev);
            prev = l;
        }
    }

    #[test]
    fn noise_power_values() {
        let mut cfg = RadioConfig::default();
        assert!((noise_power(&cfg) - (-85.9897)).abs() < 1e-3);
        cfg.noise_figure_db = 0.0;
        assert!((noise_power(&cfg) - (-100.9897)).abs() < 1e-3);
        cfg.noise_figure_db = 15.0;
        cfg.bandwidth_hz = 4.0e7;
        assert!((noise_power(&cfg) - (-82.9794)).abs() < 1e-3);
    }

    #[test]
    fn sensing_threshold_arithmetic() {
        // two APs 100 dB apart: rx = 23 - 100 = -77 dBm
        let mut dep = two_ap_deployment(100.0);
        let mut cfg = RadioConfig::default();
        cfg.cst_dbm = -82.0;
        dep.build_sensing_graph(&cfg).unwrap();
        assert!(dep.adjacent(0, 1) && dep.adjacent(1, 0));

        cfg.cst_dbm = -62.0;
        dep.build_sensing_graph(&cfg).unwrap();
        assert!(!dep.adjacent(0, 1));
        assert_eq!(dep.neighbor_count(0), 0);
    }

    /// Two APs placed so their mutual loss is exactly `loss_db`.
    fn two_ap_deployment(loss_db: f64) -> Deployment {
        let cfg = RadioConfig::default();
        // invert the log-distance law for the wanted loss
        let d = 10f64.powf((loss_db - cfg.pathloss_ref_db) / (10.0 * cfg.pathloss_exponent));
        let mut dep = Deployment {
            ap_positions: vec![[0.0, 0.0], [d, 0.0]],
            user_positions: vec![[0.0, 1.0], [d, 1.0]],
            association: vec![0, 1],
            pathloss_db: LossMatrix::default(),
            sensing_adj: Vec::new(),
            inner_mask: vec![false, false],
            area_side_m: 2.0 * d,
        };
        dep.compute_pathlosses(&cfg);
        dep
    }

    #[test]
    fn deterministic_given_seed() {
        let a = sample_ppp(5e-4, AREA_SIDE, 42).unwrap();
        let b = sample_ppp(5e-4, AREA_SIDE, 42).unwrap();
        assert_eq!(a.ap_positions, b.ap_positions);
        assert_eq!(a.user_positions, b.user_positions);
        assert_eq!(a.association, b.association);
        let c = sample_ppp(5e-4, AREA_SIDE, 43).unwrap();
        assert_ne!(a.ap_positions, c.ap_positions);
    }

    #[test]
    fn poisson_sample_mean_matches() {
        // 10^4 realizations at mean 25: the sample mean is within
        // 3*sigma/sqrt(n) = 3*5/100 = 0.15 of 25 (Poisson statistics).
        let n = 10_000;
        let mut total = 0usize;
        for seed in 0..n {
            total += match sample_ppp(5e-4, AREA_SIDE, seed) {
                Ok(dep) => dep.n_aps(),
                Err(Error::EmptyRealization) => 0,
                Err(e) => panic!("unexpected error: {e}"),
            };
        }
        let mean = total as f64 / n as f64;
        assert!(
            (mean - 25.0).abs() < 0.15,
            "sample mean {mean} too far from 25"
        );
    }

    #[test]
    fn one_user_point_per_ap_draw() {
        let dep = sample_ppp(5e-4, AREA_SIDE, 7).unwrap();
        assert_eq!(dep.n_users(), dep.n_aps());
    }

    #[test]
    fn association_is_nearest() {
        let dep = generate(1e-3, AREA_SIDE, 11, &RadioConfig::default()).unwrap();
        for (u, &x) in dep.association.iter().enumerate() {
            let d_assoc = dist(&dep.user_positions[u], &dep.ap_positions[x]);
            for (i, p) in dep.ap_positions.iter().enumerate() {
                let d = dist(&dep.user_positions[u], p);
                assert!(
                    d_assoc <= d + 1e-12,
                    "user {u} associated to AP {x} but AP {i} is closer"
                );
                // equivalently, loss to the associated AP is minimal
                assert!(dep.loss_user_ap(u, x) <= dep.loss_user_ap(u, i) + 1e-12);
            }
        }
    }

    fn dist(a: &[f64; 2], b: &[f64; 2]) -> f64 {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
    }

    #[test]
    fn sensing_graph_symmetric_no_diagonal() {
        for seed in [1, 2, 3] {
            let dep = generate(2e-3, AREA_SIDE, seed, &RadioConfig::default()).unwrap();
            let n = dep.n_aps();
            for x in 0..n {
                assert!(!dep.adjacent(x, x));
                for z in 0..n {
                    assert_eq!(dep.adjacent(x, z), dep.adjacent(z, x));
                }
            }
        }
    }

    #[test]
    fn raising_cst_never_adds_edges() {
        let mut cfg = RadioConfig::default();
        for seed in [5, 6] {
            cfg.cst_dbm = -82.0;
            let dep_lo = generate(2e-3, AREA_SIDE, seed, &cfg).unwrap();
            cfg.cst_dbm = -62.0;
            let mut dep_hi = dep_lo.clone();
            dep_hi.build_sensing_graph(&cfg).unwrap();
            for (a, b) in dep_hi.sensing_adj.iter().zip(dep_lo.sensing_adj.iter()) {
                assert!(!a | b, "-62 dBm adjacency must be a subset of -82 dBm");
            }
        }
    }

    #[test]
    fn inner_mask_keeps_boundary_distance() {
        let dep = sample_ppp(5e-3, AREA_SIDE, 3).unwrap();
        let margin = dep.area_side_m / 3.0;
        for x in dep.inner_aps() {
            let p = dep.ap_positions[x];
            let d_border = p[0]
                .min(p[1])
                .min(dep.area_side_m - p[0])
                .min(dep.area_side_m - p[1]);
            assert!(d_border >= margin - 1e-9);
        }
    }

    #[test]
    fn link_users_at_most_one_per_ap() {
        let dep = generate(5e-3, AREA_SIDE, 17, &RadioConfig::default()).unwrap();
        let links = dep.link_users();
        for (x, link) in links.iter().enumerate() {
            if let Some(u) = link {
                assert_eq!(dep.association[*u], x);
                // chosen user has the lowest loss among the AP's users
                for (v, &ap) in dep.association.iter().enumerate() {
                    if ap == x {
                        assert!(dep.loss_user_ap(*u, x) <= dep.loss_user_ap(v, x) + 1e-12);
                    }
                }
            }
        }
        // sampled deployments place one user in every AP's cell
        assert!(links.iter().all(|l| l.is_some()));
    }

    #[test]
    fn export_import_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RadioConfig::default();
        let dep = generate(1e-3, AREA_SIDE, 9, &cfg).unwrap();
        export_deployment(&dep, dir.path()).unwrap();
        let mut back = import_deployment(dir.path()).unwrap();
        back.build_sensing_graph(&cfg).unwrap();
        assert_eq!(back.n_aps(), dep.n_aps());
        assert_eq!(back.n_users(), dep.n_users());
        assert_eq!(back.association, dep.association);
        assert_eq!(back.inner_mask, dep.inner_mask);
        assert_eq!(back.sensing_adj, dep.sensing_adj);
        for i in 0..dep.pathloss_db.len() {
            for j in 0..dep.pathloss_db.len() {
                assert!((back.pathloss_db.get(i, j) - dep.pathloss_db.get(i, j)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(sample_ppp(0.0, AREA_SIDE, 1).is_err());
        assert!(sample_ppp(5e-4, -1.0, 1).is_err());
        let mut cfg = RadioConfig::default();
        cfg.pathloss_exponent = 2.0;
        assert!(cfg.validate().is_err());
        cfg = RadioConfig::default();
        cfg.cst_dbm = 30.0;
        assert!(cfg.validate().is_err());
    }
}
