//! Monte Carlo orchestration over the csmabench estimators: per-model
//! experiment runs, CCDF aggregation across realizations, timing
//! instrumentation, curve comparison, and the flat key/value configuration
//! format behind the CLI.
//!
//! All outputs are deterministic for a given configuration: realization
//! seeds are `seed + realization index`, parallel results reduce in index
//! order, and curve files never contain wall-clock data (timing lives in
//! separate files).

use csmabench::ccdf::{sinr_grid_db, throughput_grid_bps};
use csmabench::des::{run_des, DesConfig};
use csmabench::geometry::{self, Deployment, RadioConfig};
use csmabench::hybrid::evaluate_hybrid;
use csmabench::sgm::{FieldGridSpec, RateMapping, SgmConfig, SgmModel};
use csmabench::{CcdfCurve, Error, FrameTimings, RateTable, Result};
use rayon::prelude::*;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

/// Which estimator an experiment runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    Sgm,
    SgmEnhanced,
    Hybrid,
    Des,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Sgm => "sgm",
            Model::SgmEnhanced => "sgm_enhanced",
            Model::Hybrid => "hybrid",
            Model::Des => "des",
        }
    }
}

impl FromStr for Model {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgm" => Ok(Model::Sgm),
            "sgm_enhanced" => Ok(Model::SgmEnhanced),
            "hybrid" => Ok(Model::Hybrid),
            "des" => Ok(Model::Des),
            other => Err(Error::InvalidConfig(format!(
                "unknown model `{other}` (expected sgm, sgm_enhanced, hybrid or des)"
            ))),
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Grid sizes shared by every model in an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Grids {
    /// Points of the SINR CCDF grid (linear over [-10, 40] dB).
    pub sinr_points: usize,
    /// Points of the throughput CCDF grid (log over [0.1, 80] Mbps).
    pub tput_points: usize,
    pub r0_points: usize,
    pub field_radius_m: f64,
    pub field_radial: usize,
    pub field_angular: usize,
}

impl Default for Grids {
    fn default() -> Self {
        let field = FieldGridSpec::default();
        Self {
            sinr_points: 60,
            tput_points: 60,
            r0_points: 160,
            field_radius_m: field.max_radius_m,
            field_radial: field.radial_points,
            field_angular: field.angular_points,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub model: Model,
    pub densities_per_km2: Vec<f64>,
    pub csts_dbm: Vec<f64>,
    pub realizations: usize,
    pub area_km2: f64,
    pub seed: u64,
    pub sim_duration_s: f64,
    pub grids: Grids,
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses every core. Parallelism never changes output
    /// bytes.
    pub workers: usize,
}

impl ExperimentConfig {
    pub fn new(model: Model, output_dir: PathBuf) -> Self {
        Self {
            model,
            densities_per_km2: vec![500.0, 1000.0, 5000.0, 10_000.0],
            csts_dbm: vec![-82.0, -72.0, -62.0],
            realizations: 50,
            area_km2: 0.05,
            seed: 0,
            sim_duration_s: 10.0,
            grids: Grids::default(),
            output_dir,
            workers: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.realizations < 1 {
            return Err(Error::InvalidConfig("realizations must be >= 1".into()));
        }
        if self.densities_per_km2.is_empty() || self.densities_per_km2.iter().any(|&d| d <= 0.0) {
            return Err(Error::InvalidConfig("densities must be positive".into()));
        }
        if self.csts_dbm.is_empty() {
            return Err(Error::InvalidConfig("need at least one CST".into()));
        }
        if self.area_km2 <= 0.0 {
            return Err(Error::InvalidConfig("area must be positive".into()));
        }
        Ok(())
    }

    pub fn area_side_m(&self) -> f64 {
        (self.area_km2 * 1e6).sqrt()
    }

    fn radio_for(&self, cst_dbm: f64) -> RadioConfig {
        RadioConfig {
            cst_dbm,
            ..RadioConfig::default()
        }
    }

    fn sgm_config(&self, density_per_km2: f64, cst_dbm: f64) -> SgmConfig {
        let mut cfg = SgmConfig::new(density_per_km2 * 1e-6, self.radio_for(cst_dbm));
        cfg.r0_grid.points = self.grids.r0_points;
        cfg.field_grid = FieldGridSpec {
            max_radius_m: self.grids.field_radius_m,
            radial_points: self.grids.field_radial,
            angular_points: self.grids.field_angular,
        };
        cfg
    }
}

/// Wall-clock record of one (model, density, cst) evaluation. Per-unit
/// entries are per SINR threshold for the SGM variants and per realization
/// for hybrid/des; totals are the serial-equivalent sums.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingReport {
    pub model: String,
    pub density_per_km2: f64,
    pub cst_dbm: f64,
    pub total_seconds: f64,
    pub per_unit_seconds: Vec<f64>,
    pub core_count_note: String,
}

impl TimingReport {
    fn new(model: Model, density: f64, cst: f64, per_unit: Vec<f64>, workers: usize) -> Self {
        Self {
            model: model.name().to_string(),
            density_per_km2: density,
            cst_dbm: cst,
            total_seconds: per_unit.iter().sum(),
            per_unit_seconds: per_unit,
            core_count_note: format!("workers={workers}"),
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            out,
            "# total_seconds={:.6e} {}",
            self.total_seconds, self.core_count_note
        )?;
        writeln!(out, "model,density,cst,unit_index,seconds")?;
        for (k, s) in self.per_unit_seconds.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{:.6e}",
                self.model, self.density_per_km2, self.cst_dbm, k, s
            )?;
        }
        out.flush()?;
        Ok(())
    }
}

/// In-memory result of one (model, density, cst) combination.
#[derive(Debug, Clone)]
pub struct ComboResult {
    pub model: Model,
    pub density_per_km2: f64,
    pub cst_dbm: f64,
    pub sinr: CcdfCurve,
    pub throughput: CcdfCurve,
    pub timing: TimingReport,
    /// Inner links pooled across realizations (empty for the SGM variants).
    pub pooled_links: usize,
}

/// Deterministic per-realization deployment: seed + index, with a fixed
/// stride for the rare resample after an empty Poisson draw.
pub fn realization_deployment(
    base_seed: u64,
    index: usize,
    density_per_m2: f64,
    area_side_m: f64,
    radio: &RadioConfig,
) -> Result<Deployment> {
    let mut attempt = 0u64;
    loop {
        let seed = base_seed
            .wrapping_add(index as u64)
            .wrapping_add(attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        match geometry::generate(density_per_m2, area_side_m, seed, radio) {
            Ok(dep) => return Ok(dep),
            Err(Error::EmptyRealization) if attempt < 1000 => {
                log::warn!("realization {index}: empty Poisson draw, resampling");
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Evaluate one (model, density, cst) combination. Pure computation; writes
/// nothing.
pub fn evaluate_combo(cfg: &ExperimentConfig, density_per_km2: f64, cst_dbm: f64) -> Result<ComboResult> {
    cfg.validate()?;
    let sinr_grid = sinr_grid_db(cfg.grids.sinr_points);
    let tput_grid = throughput_grid_bps(cfg.grids.tput_points);
    let table = RateTable::default();
    let timings = FrameTimings::default();

    match cfg.model {
        Model::Sgm | Model::SgmEnhanced => {
            let model = SgmModel::new(cfg.sgm_config(density_per_km2, cst_dbm))?;
            let (sinr, seconds) = model.sinr_ccdf(&sinr_grid);
            let s_bar = if cfg.model == Model::SgmEnhanced {
                match model.enhanced_overhead(&table, &sinr, &timings) {
                    Ok(s) => Some(s),
                    Err(Error::NoLink(why)) => {
                        log::warn!(
                            "enhanced overhead unavailable at {density_per_km2}/km2, cst {cst_dbm}: {why}; falling back to the raw model"
                        );
                        None
                    }
                    Err(e) => return Err(e),
                }
            } else {
                None
            };
            let (throughput, _) =
                model.throughput_ccdf(&tput_grid, &table, s_bar, RateMapping::AutoRate)?;
            Ok(ComboResult {
                model: cfg.model,
                density_per_km2,
                cst_dbm,
                sinr,
                throughput,
                timing: TimingReport::new(cfg.model, density_per_km2, cst_dbm, seconds, cfg.workers),
                pooled_links: 0,
            })
        }
        Model::Hybrid => {
            let radio = cfg.radio_for(cst_dbm);
            let results: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..cfg.realizations)
                .into_par_iter()
                .map(|i| -> Result<_> {
                    let dep = realization_deployment(
                        cfg.seed,
                        i,
                        density_per_km2 * 1e-6,
                        cfg.area_side_m(),
                        &radio,
                    )?;
                    let start = Instant::now();
                    let metrics = evaluate_hybrid(&dep, &radio, &table, &timings)?;
                    let seconds = start.elapsed().as_secs_f64();
                    let mut sinr = Vec::new();
                    let mut tput = Vec::new();
                    for m in metrics.iter().filter(|m| m.inner_flag) {
                        sinr.push(m.sinr_db);
                        tput.push(m.throughput_bps);
                    }
                    if sinr.is_empty() {
                        log::warn!("realization {i}: no APs in the inner region");
                    }
                    Ok((sinr, tput, seconds))
                })
                .collect::<Result<_>>()?;
            Ok(pool_results(cfg, density_per_km2, cst_dbm, results, &sinr_grid, &tput_grid))
        }
        Model::Des => {
            let radio = cfg.radio_for(cst_dbm);
            let results: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..cfg.realizations)
                .into_par_iter()
                .map(|i| -> Result<_> {
                    let dep = realization_deployment(
                        cfg.seed,
                        i,
                        density_per_km2 * 1e-6,
                        cfg.area_side_m(),
                        &radio,
                    )?;
                    let des_cfg = DesConfig {
                        sim_duration_s: cfg.sim_duration_s,
                        rng_seed: cfg.seed.wrapping_add(i as u64),
                        ..DesConfig::default()
                    };
                    let start = Instant::now();
                    let stats = run_des(&dep, &radio, &des_cfg)?;
                    let seconds = start.elapsed().as_secs_f64();
                    let mut sinr = Vec::new();
                    let mut tput = Vec::new();
                    for s in stats.iter().filter(|s| dep.inner_mask[s.ap_id]) {
                        sinr.push(s.mean_rx_sinr_db);
                        tput.push(s.throughput_bps);
                    }
                    if sinr.is_empty() {
                        log::warn!("realization {i}: no APs in the inner region");
                    }
                    Ok((sinr, tput, seconds))
                })
                .collect::<Result<_>>()?;
            Ok(pool_results(cfg, density_per_km2, cst_dbm, results, &sinr_grid, &tput_grid))
        }
    }
}

fn pool_results(
    cfg: &ExperimentConfig,
    density_per_km2: f64,
    cst_dbm: f64,
    results: Vec<(Vec<f64>, Vec<f64>, f64)>,
    sinr_grid: &[f64],
    tput_grid: &[f64],
) -> ComboResult {
    let mut sinr_samples = Vec::new();
    let mut tput_samples = Vec::new();
    let mut seconds = Vec::with_capacity(results.len());
    for (s, t, sec) in results {
        sinr_samples.extend(s);
        tput_samples.extend(t);
        seconds.push(sec);
    }
    ComboResult {
        model: cfg.model,
        density_per_km2,
        cst_dbm,
        sinr: CcdfCurve::empirical(&sinr_samples, sinr_grid),
        throughput: CcdfCurve::empirical(&tput_samples, tput_grid),
        timing: TimingReport::new(cfg.model, density_per_km2, cst_dbm, seconds, cfg.workers),
        pooled_links: sinr_samples.len(),
    }
}

fn combo_fingerprint(cfg: &ExperimentConfig, density: f64, cst: f64, metric: &str) -> String {
    format!(
        "model={} metric={metric} density_per_km2={density} cst_dbm={cst} realizations={} area_km2={} seed={} sim_duration_s={} sinr_points={} tput_points={} r0_points={} field_radius_m={} field_radial={} field_angular={}",
        cfg.model,
        cfg.realizations,
        cfg.area_km2,
        cfg.seed,
        cfg.sim_duration_s,
        cfg.grids.sinr_points,
        cfg.grids.tput_points,
        cfg.grids.r0_points,
        cfg.grids.field_radius_m,
        cfg.grids.field_radial,
        cfg.grids.field_angular,
    )
}

fn combo_filename(model: Model, metric: &str, density: f64, cst: f64) -> String {
    format!("{}_{metric}_d{density:.0}_cst{cst:.0}.csv", model.name())
}

/// Run the configured experiment: for every (density, cst) pair write the
/// SINR CCDF, the throughput CCDF, and a timing report. Fails before any
/// computation when the output directory cannot be created or written.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    // prove writability before burning compute time
    let probe = cfg.output_dir.join(".write_probe");
    std::fs::write(&probe, b"ok")?;
    std::fs::remove_file(&probe)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;

    let mut written = Vec::new();
    for &density in &cfg.densities_per_km2 {
        for &cst in &cfg.csts_dbm {
            let combo = pool.install(|| evaluate_combo(cfg, density, cst))?;
            let sinr_path = cfg
                .output_dir
                .join(combo_filename(cfg.model, "sinr", density, cst));
            combo.sinr.to_csv(
                &sinr_path,
                &combo_fingerprint(cfg, density, cst, "sinr"),
                None,
            )?;
            let tput_path = cfg
                .output_dir
                .join(combo_filename(cfg.model, "throughput", density, cst));
            combo.throughput.to_csv(
                &tput_path,
                &combo_fingerprint(cfg, density, cst, "throughput"),
                None,
            )?;
            let timing_path = cfg
                .output_dir
                .join(combo_filename(cfg.model, "timing", density, cst));
            combo.timing.write_csv(&timing_path)?;
            written.push(sinr_path);
            written.push(tput_path);
            written.push(timing_path);
        }
    }
    Ok(written)
}

/// Maximum vertical distance between two CCDFs in percentage points, with
/// `b` linearly interpolated onto `a`'s grid.
pub fn compare_curves(a: &CcdfCurve, b: &CcdfCurve) -> Result<f64> {
    a.max_vertical_distance_pp(b)
}

// ---------------------------------------------------------------------------
// Flat key/value config files
// ---------------------------------------------------------------------------

/// Raw key/value options from a config file or CLI flags; every key carries
/// the same name as its CLI flag.
#[derive(Debug, Clone, Default)]
pub struct RawOptions {
    pub model: Option<String>,
    pub density: Option<String>,
    pub cst: Option<String>,
    pub realizations: Option<usize>,
    pub seed: Option<u64>,
    pub area_km2: Option<f64>,
    pub sim_duration: Option<f64>,
    pub out: Option<PathBuf>,
    pub sinr_points: Option<usize>,
    pub tput_points: Option<usize>,
    pub r0_points: Option<usize>,
    pub field_radius: Option<f64>,
    pub field_radial: Option<usize>,
    pub field_angular: Option<usize>,
    pub workers: Option<usize>,
}

impl RawOptions {
    /// Parse a flat `key = value` file (`#` comments, blank lines allowed).
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut opts = RawOptions::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse(format!(
                    "config line {}: expected key = value",
                    lineno + 1
                )));
            };
            let key = key.trim();
            let value = value.trim().to_string();
            let bad = |what: &str| Error::Parse(format!("config line {}: bad {what}", lineno + 1));
            match key {
                "model" => opts.model = Some(value),
                "density" => opts.density = Some(value),
                "cst" => opts.cst = Some(value),
                "realizations" => {
                    opts.realizations = Some(value.parse().map_err(|_| bad("realizations"))?)
                }
                "seed" => opts.seed = Some(value.parse().map_err(|_| bad("seed"))?),
                "area-km2" => opts.area_km2 = Some(value.parse().map_err(|_| bad("area-km2"))?),
                "sim-duration" => {
                    opts.sim_duration = Some(value.parse().map_err(|_| bad("sim-duration"))?)
                }
                "out" => opts.out = Some(PathBuf::from(value)),
                "sinr-points" => {
                    opts.sinr_points = Some(value.parse().map_err(|_| bad("sinr-points"))?)
                }
                "tput-points" => {
                    opts.tput_points = Some(value.parse().map_err(|_| bad("tput-points"))?)
                }
                "r0-points" => opts.r0_points = Some(value.parse().map_err(|_| bad("r0-points"))?),
                "field-radius" => {
                    opts.field_radius = Some(value.parse().map_err(|_| bad("field-radius"))?)
                }
                "field-radial" => {
                    opts.field_radial = Some(value.parse().map_err(|_| bad("field-radial"))?)
                }
                "field-angular" => {
                    opts.field_angular = Some(value.parse().map_err(|_| bad("field-angular"))?)
                }
                "workers" => opts.workers = Some(value.parse().map_err(|_| bad("workers"))?),
                other => {
                    return Err(Error::Parse(format!(
                        "config line {}: unknown key `{other}`",
                        lineno + 1
                    )))
                }
            }
        }
        Ok(opts)
    }

    /// Overlay `other` on top of `self` (set fields in `other` win).
    pub fn overlaid(mut self, other: RawOptions) -> Self {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if other.$field.is_some() { self.$field = other.$field; })*
            };
        }
        take!(
            model,
            density,
            cst,
            realizations,
            seed,
            area_km2,
            sim_duration,
            out,
            sinr_points,
            tput_points,
            r0_points,
            field_radius,
            field_radial,
            field_angular,
            workers
        );
        self
    }

    /// Resolve into a full experiment configuration, applying defaults:
    /// the four paper densities and the single -82 dBm CST recipe.
    pub fn into_config(self) -> Result<ExperimentConfig> {
        let model: Model = self
            .model
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig("missing model".into()))?
            .parse()?;
        let out = self
            .out
            .ok_or_else(|| Error::InvalidConfig("missing output directory".into()))?;
        let mut cfg = ExperimentConfig::new(model, out);
        if let Some(d) = self.density {
            cfg.densities_per_km2 = parse_list(&d)?;
        }
        cfg.csts_dbm = match self.cst {
            Some(c) => parse_list(&c)?,
            None => vec![-82.0],
        };
        if let Some(r) = self.realizations {
            cfg.realizations = r;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(a) = self.area_km2 {
            cfg.area_km2 = a;
        }
        if let Some(d) = self.sim_duration {
            cfg.sim_duration_s = d;
        }
        if let Some(v) = self.sinr_points {
            cfg.grids.sinr_points = v;
        }
        if let Some(v) = self.tput_points {
            cfg.grids.tput_points = v;
        }
        if let Some(v) = self.r0_points {
            cfg.grids.r0_points = v;
        }
        if let Some(v) = self.field_radius {
            cfg.grids.field_radius_m = v;
        }
        if let Some(v) = self.field_radial {
            cfg.grids.field_radial = v;
        }
        if let Some(v) = self.field_angular {
            cfg.grids.field_angular = v;
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parse a comma-separated list of reals.
pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number `{part}` in list")))
        })
        .collect()
}
