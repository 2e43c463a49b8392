//! Reward environments: mean-reward grids over a rectangular arena, SNR
//! ingestion through a rate table, synthetic Lipschitz fields, mobility
//! traces, and seeded Bernoulli reward sampling.
//!
//! A grid stores one mean reward per (cell, arm); contexts are positions in
//! meters and lookups snap to the containing cell. The similarity distance
//! is Euclidean distance normalized by the arena diagonal, so any field
//! whose spatial gradient stays below 1/diagonal keeps mean-reward
//! differences within the similarity distance, which is exactly what the
//! index policy's guarantees assume. The synthetic generator enforces that
//! gradient bound analytically; `lipschitz_audit` measures it on any grid.

use crate::metric::{normalized_distance, Context, MetricError, SimilaritySpace};
use crate::policy::RewardSampler;
use crate::zooming::ArmId;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io;
use thiserror::Error;

/// Errors raised while building or loading environments.
#[derive(Debug, Error)]
pub enum EnvError {
    #[error("grid must have at least one cell and one arm")]
    EmptyGrid,
    #[error("cell size {0} must be positive and finite")]
    InvalidCellSize(f64),
    #[error("grid table has {actual} entries, expected {expected}")]
    TableLengthMismatch { expected: usize, actual: usize },
    #[error("mean {value} for cell ({ix}, {iy}) arm {arm} is outside [0, 1]")]
    MeanOutOfRange {
        ix: usize,
        iy: usize,
        arm: usize,
        value: f64,
    },
    #[error("arm list {0:?} must be nonempty, distinct, and within the grid")]
    InvalidArmSubset(Vec<usize>),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("expected header '{expected}', found '{found}'")]
    BadHeader { expected: String, found: String },
    #[error("line {line}: duplicate entry for cell ({ix}, {iy}) arm {arm}")]
    DuplicateEntry {
        line: u64,
        ix: usize,
        iy: usize,
        arm: usize,
    },
    #[error("no entry for cell ({ix}, {iy}) arm {arm}")]
    MissingEntry { ix: usize, iy: usize, arm: usize },
    #[error("rate table must have at least one entry")]
    EmptyRateTable,
    #[error("rate table entry {index} is not finite")]
    NonFiniteRateEntry { index: usize },
    #[error("rate table thresholds must increase strictly (entry {index})")]
    ThresholdsNotIncreasing { index: usize },
    #[error("rate table rates must be nonnegative and nondecreasing (entry {index})")]
    RatesNotNondecreasing { index: usize },
    #[error("rate table needs a positive maximum rate")]
    AllRatesZero,
    #[error("synthetic field needs at least two arms, got {0}")]
    TooFewArms(usize),
    #[error("roughness {0} must be finite and nonnegative")]
    InvalidRoughness(f64),
    #[error("base range ({0}, {1}) must satisfy 0 <= lo <= hi <= 1")]
    InvalidBaseRange(f64, f64),
    #[error("expected {expected} base levels, got {got}")]
    BaseLevelCount { expected: usize, got: usize },
    #[error("base level {0} must lie in [0, 1]")]
    InvalidBaseLevel(f64),
    #[error("speed {0} must be positive and finite")]
    InvalidSpeed(f64),
    #[error("mobility needs at least one waypoint")]
    NoWaypoints,
    #[error("mobility needs at least one step and one round per step")]
    EmptyTrace,
    #[error("waypoint {index} at ({x}, {y}) lies outside the arena")]
    WaypointOutsideArena { index: usize, x: f64, y: f64 },
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// A rectangular arena of `nx` by `ny` square cells with one mean reward
/// per (cell, arm). Cell `(0, 0)` sits at the arena's lower-left corner.
#[derive(Debug, Clone, PartialEq)]
pub struct MuGrid {
    nx: usize,
    ny: usize,
    cell_size: f64,
    arms: usize,
    /// Flattened as `(iy * nx + ix) * arms + arm`.
    mu: Vec<f64>,
}

/// Worst adjacent-cell slope found by the audit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzWorst {
    pub arm: ArmId,
    pub from: (usize, usize),
    pub to: (usize, usize),
}

/// Result of measuring |Δμ| against the similarity distance over adjacent
/// cells (including diagonals). A `max_ratio` at or below 1 means the grid
/// respects the metric's premise on every audited pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzReport {
    pub max_ratio: f64,
    pub worst: Option<LipschitzWorst>,
}

impl MuGrid {
    /// Builds a grid from a flat table laid out cell-major (all arms of
    /// cell `(0, 0)` first, then `(1, 0)`, row by row).
    pub fn new(
        nx: usize,
        ny: usize,
        cell_size: f64,
        arms: usize,
        mu: Vec<f64>,
    ) -> Result<Self, EnvError> {
        if nx == 0 || ny == 0 || arms == 0 {
            return Err(EnvError::EmptyGrid);
        }
        if !cell_size.is_finite() || cell_size <= 0.0 {
            return Err(EnvError::InvalidCellSize(cell_size));
        }
        let expected = nx * ny * arms;
        if mu.len() != expected {
            return Err(EnvError::TableLengthMismatch {
                expected,
                actual: mu.len(),
            });
        }
        for (i, &value) in mu.iter().enumerate() {
            if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                let cell = i / arms;
                return Err(EnvError::MeanOutOfRange {
                    ix: cell % nx,
                    iy: cell / nx,
                    arm: i % arms,
                    value,
                });
            }
        }
        Ok(Self {
            nx,
            ny,
            cell_size,
            arms,
            mu,
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    /// Arena width in meters.
    pub fn width(&self) -> f64 {
        self.nx as f64 * self.cell_size
    }

    /// Arena height in meters.
    pub fn height(&self) -> f64 {
        self.ny as f64 * self.cell_size
    }

    /// The similarity space induced by this arena: two dimensions, diameter
    /// equal to the arena diagonal.
    pub fn similarity_space(&self) -> SimilaritySpace {
        SimilaritySpace::new(2, self.width().hypot(self.height()))
            .expect("positive extents yield a valid space")
    }

    /// Cell containing `x`. Coordinates are clamped into the arena, so
    /// points on the far edges fall into the last cell.
    ///
    /// # Panics
    ///
    /// Panics if `x` is not two-dimensional.
    pub fn cell_of(&self, x: &Context) -> (usize, usize) {
        assert_eq!(x.dimension(), 2, "grid contexts are two-dimensional");
        let ix = (x.coords()[0] / self.cell_size).floor() as isize;
        let iy = (x.coords()[1] / self.cell_size).floor() as isize;
        (
            ix.clamp(0, self.nx as isize - 1) as usize,
            iy.clamp(0, self.ny as isize - 1) as usize,
        )
    }

    /// Center of cell `(ix, iy)` in meters.
    ///
    /// # Panics
    ///
    /// Panics if the cell is out of range.
    pub fn cell_center(&self, ix: usize, iy: usize) -> Context {
        assert!(ix < self.nx && iy < self.ny, "cell out of range");
        Context::xy(
            (ix as f64 + 0.5) * self.cell_size,
            (iy as f64 + 0.5) * self.cell_size,
        )
        .expect("cell centers are finite")
    }

    /// Snaps `x` to the center of its containing cell.
    pub fn snap(&self, x: &Context) -> Context {
        let (ix, iy) = self.cell_of(x);
        self.cell_center(ix, iy)
    }

    /// Mean rewards of every arm at cell `(ix, iy)`.
    pub fn mu_vector(&self, ix: usize, iy: usize) -> &[f64] {
        assert!(ix < self.nx && iy < self.ny, "cell out of range");
        let cell = iy * self.nx + ix;
        &self.mu[cell * self.arms..(cell + 1) * self.arms]
    }

    /// Mean reward of `arm` at the cell containing `x`.
    pub fn mu(&self, arm: ArmId, x: &Context) -> f64 {
        assert!(arm < self.arms, "arm out of range");
        let (ix, iy) = self.cell_of(x);
        self.mu_vector(ix, iy)[arm]
    }

    /// Projects the grid onto a subset of its arms, renumbering them in the
    /// order given.
    pub fn restrict(&self, arms: &[ArmId]) -> Result<MuGrid, EnvError> {
        let distinct = {
            let mut seen = arms.to_vec();
            seen.sort_unstable();
            seen.dedup();
            seen.len() == arms.len()
        };
        if arms.is_empty() || !distinct || arms.iter().any(|&a| a >= self.arms) {
            return Err(EnvError::InvalidArmSubset(arms.to_vec()));
        }
        let mut mu = Vec::with_capacity(self.nx * self.ny * arms.len());
        for cell in 0..self.nx * self.ny {
            for &arm in arms {
                mu.push(self.mu[cell * self.arms + arm]);
            }
        }
        MuGrid::new(self.nx, self.ny, self.cell_size, arms.len(), mu)
    }

    /// Measures the worst |Δμ| / distance ratio over all pairs of adjacent
    /// cells (sharing an edge or a corner), using the similarity distance
    /// between cell centers.
    pub fn lipschitz_audit(&self) -> LipschitzReport {
        let diameter = self.width().hypot(self.height());
        let mut report = LipschitzReport {
            max_ratio: 0.0,
            worst: None,
        };
        let offsets: [(isize, isize); 4] = [(1, 0), (0, 1), (1, 1), (1, -1)];
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                for (dx, dy) in offsets {
                    let jx = ix as isize + dx;
                    let jy = iy as isize + dy;
                    if jx < 0 || jy < 0 || jx >= self.nx as isize || jy >= self.ny as isize {
                        continue;
                    }
                    let (jx, jy) = (jx as usize, jy as usize);
                    let here = self.cell_center(ix, iy);
                    let there = self.cell_center(jx, jy);
                    let dist = normalized_distance(here.coords(), there.coords(), diameter);
                    let a = self.mu_vector(ix, iy);
                    let b = self.mu_vector(jx, jy);
                    for arm in 0..self.arms {
                        let ratio = (a[arm] - b[arm]).abs() / dist;
                        if ratio > report.max_ratio {
                            report.max_ratio = ratio;
                            report.worst = Some(LipschitzWorst {
                                arm,
                                from: (ix, iy),
                                to: (jx, jy),
                            });
                        }
                    }
                }
            }
        }
        report
    }

    /// Writes the grid as CSV with header `cell_x,cell_y,arm_id,mu`, one
    /// row per (cell, arm), cells in row-major order.
    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<(), EnvError> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["cell_x", "cell_y", "arm_id", "mu"])?;
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                for arm in 0..self.arms {
                    writer.write_record([
                        ix.to_string(),
                        iy.to_string(),
                        arm.to_string(),
                        format!("{:?}", self.mu_vector(ix, iy)[arm]),
                    ])?;
                }
            }
        }
        writer.flush()?;
        Ok(())
    }

    /// Reads a grid written by [`MuGrid::write_csv`]. Extents and arm count
    /// are inferred from the data; every (cell, arm) pair must appear
    /// exactly once. `cell_size` comes from the caller because the file
    /// stores cell indices, not meters.
    pub fn read_csv<R: io::Read>(input: R, cell_size: f64) -> Result<Self, EnvError> {
        let entries = read_grid_entries(input, "mu", |field, line| {
            let value: f64 = field.parse().map_err(|_| EnvError::Parse {
                line,
                message: format!("invalid mu value '{field}'"),
            })?;
            if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                return Err(EnvError::Parse {
                    line,
                    message: format!("mu value {value} outside [0, 1]"),
                });
            }
            Ok(value)
        })?;
        grid_from_entries(entries, cell_size)
    }
}

/// A mapping from SNR to data rate: the highest rate whose threshold is at
/// or below the observed SNR applies, and means are rates normalized by the
/// table's maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct McsTable {
    /// `(snr_db_threshold, rate)` pairs with strictly increasing thresholds
    /// and nondecreasing rates.
    entries: Vec<(f64, f64)>,
}

impl McsTable {
    pub fn new(entries: Vec<(f64, f64)>) -> Result<Self, EnvError> {
        if entries.is_empty() {
            return Err(EnvError::EmptyRateTable);
        }
        for (i, &(snr, rate)) in entries.iter().enumerate() {
            if !snr.is_finite() || !rate.is_finite() {
                return Err(EnvError::NonFiniteRateEntry { index: i });
            }
            if i > 0 && snr <= entries[i - 1].0 {
                return Err(EnvError::ThresholdsNotIncreasing { index: i });
            }
            if rate < 0.0 || (i > 0 && rate < entries[i - 1].1) {
                return Err(EnvError::RatesNotNondecreasing { index: i });
            }
        }
        if entries.last().unwrap().1 <= 0.0 {
            return Err(EnvError::AllRatesZero);
        }
        Ok(Self { entries })
    }

    /// Data rate achieved at the given SNR: the highest entry whose
    /// threshold is at or below `snr_db`, or 0 below the lowest threshold.
    pub fn rate_for(&self, snr_db: f64) -> f64 {
        self.entries
            .iter()
            .rev()
            .find(|&&(threshold, _)| snr_db >= threshold)
            .map_or(0.0, |&(_, rate)| rate)
    }

    /// The table's maximum rate; nondecreasing rates put it last.
    pub fn max_rate(&self) -> f64 {
        self.entries.last().unwrap().1
    }

    /// Mean reward for an observed SNR: rate normalized by the maximum
    /// rate. `None` marks a blocked cell with no usable link.
    pub fn mu_for(&self, snr_db: Option<f64>) -> f64 {
        match snr_db {
            Some(snr) => self.rate_for(snr) / self.max_rate(),
            None => 0.0,
        }
    }

    /// Reads a table from CSV with header `snr_db_threshold,rate_mbps`.
    pub fn read_csv<R: io::Read>(input: R) -> Result<Self, EnvError> {
        let mut reader = csv::ReaderBuilder::new().from_reader(input);
        check_header(&mut reader, &["snr_db_threshold", "rate_mbps"])?;
        let mut entries = Vec::new();
        for record in reader.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            if record.len() != 2 {
                return Err(EnvError::Parse {
                    line,
                    message: format!("expected 2 fields, found {}", record.len()),
                });
            }
            let parse = |field: &str, what: &str| -> Result<f64, EnvError> {
                field.parse().map_err(|_| EnvError::Parse {
                    line,
                    message: format!("invalid {what} '{field}'"),
                })
            };
            entries.push((
                parse(&record[0], "snr threshold")?,
                parse(&record[1], "rate")?,
            ));
        }
        McsTable::new(entries)
    }

    /// Writes the table as CSV with header `snr_db_threshold,rate_mbps`.
    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<(), EnvError> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["snr_db_threshold", "rate_mbps"])?;
        for &(snr, rate) in &self.entries {
            writer.write_record([format!("{snr:?}"), format!("{rate:?}")])?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Reads an SNR grid (header `cell_x,cell_y,arm_id,snr_db`, with the
/// literal value `blocked` marking cells without a link) and converts it to
/// mean rewards through the rate table.
pub fn snr_grid_to_mu<R: io::Read>(
    input: R,
    mcs: &McsTable,
    cell_size: f64,
) -> Result<MuGrid, EnvError> {
    let entries = read_grid_entries(input, "snr_db", |field, line| {
        if field.trim() == "blocked" {
            return Ok(None);
        }
        let snr: f64 = field.parse().map_err(|_| EnvError::Parse {
            line,
            message: format!("invalid snr value '{field}'"),
        })?;
        if !snr.is_finite() {
            return Err(EnvError::Parse {
                line,
                message: format!("snr value {snr} is not finite"),
            });
        }
        Ok(Some(snr))
    })?;
    let mu_entries = entries
        .into_iter()
        .map(|(key, (line, snr))| (key, (line, mcs.mu_for(snr))))
        .collect();
    grid_from_entries(mu_entries, cell_size)
}

type GridEntries<T> = HashMap<(usize, usize, usize), (u64, T)>;

fn check_header<R: io::Read>(
    reader: &mut csv::Reader<R>,
    expected: &[&str],
) -> Result<(), EnvError> {
    let headers = reader.headers()?;
    let found: Vec<&str> = headers.iter().collect();
    if found != expected {
        return Err(EnvError::BadHeader {
            expected: expected.join(","),
            found: found.join(","),
        });
    }
    Ok(())
}

fn read_grid_entries<R: io::Read, T>(
    input: R,
    value_column: &str,
    parse_value: impl Fn(&str, u64) -> Result<T, EnvError>,
) -> Result<GridEntries<T>, EnvError> {
    let mut reader = csv::ReaderBuilder::new().from_reader(input);
    check_header(&mut reader, &["cell_x", "cell_y", "arm_id", value_column])?;
    let mut entries = GridEntries::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 4 {
            return Err(EnvError::Parse {
                line,
                message: format!("expected 4 fields, found {}", record.len()),
            });
        }
        let index = |field: &str, what: &str| -> Result<usize, EnvError> {
            field.parse().map_err(|_| EnvError::Parse {
                line,
                message: format!("invalid {what} '{field}'"),
            })
        };
        let ix = index(&record[0], "cell_x")?;
        let iy = index(&record[1], "cell_y")?;
        let arm = index(&record[2], "arm_id")?;
        let value = parse_value(&record[3], line)?;
        if entries.insert((ix, iy, arm), (line, value)).is_some() {
            return Err(EnvError::DuplicateEntry { line, ix, iy, arm });
        }
    }
    Ok(entries)
}

fn grid_from_entries(entries: GridEntries<f64>, cell_size: f64) -> Result<MuGrid, EnvError> {
    if entries.is_empty() {
        return Err(EnvError::EmptyGrid);
    }
    let nx = entries.keys().map(|k| k.0).max().unwrap() + 1;
    let ny = entries.keys().map(|k| k.1).max().unwrap() + 1;
    let arms = entries.keys().map(|k| k.2).max().unwrap() + 1;
    let mut mu = Vec::with_capacity(nx * ny * arms);
    for iy in 0..ny {
        for ix in 0..nx {
            for arm in 0..arms {
                match entries.get(&(ix, iy, arm)) {
                    Some(&(_, value)) => mu.push(value),
                    None => return Err(EnvError::MissingEntry { ix, iy, arm }),
                }
            }
        }
    }
    MuGrid::new(nx, ny, cell_size, arms, mu)
}

/// Parameters of the synthetic field generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticParams {
    pub nx: usize,
    pub ny: usize,
    pub cell_size: f64,
    pub arms: usize,
    /// Spatial variation knob: 0 yields flat per-arm fields; larger values
    /// add taller bumps until the arena's Lipschitz cap binds.
    #[serde(default = "default_roughness")]
    pub roughness: f64,
    /// Range the per-arm constant baselines are drawn from.
    #[serde(default = "default_base_range")]
    pub base_range: (f64, f64),
    /// Explicit per-arm baselines, one per arm; takes precedence over
    /// `base_range`. Useful for scenarios with designed quality tiers,
    /// such as a few strong transmitters over a weak remainder.
    #[serde(default)]
    pub base_levels: Option<Vec<f64>>,
}

fn default_roughness() -> f64 {
    0.6
}

fn default_base_range() -> (f64, f64) {
    (0.15, 0.85)
}

const BUMPS_PER_ARM: usize = 4;

/// Generates per-arm mean fields as a constant baseline plus a few radial
/// bumps, evaluated at cell centers and clamped to [0, 1].
///
/// The bump amplitudes are rescaled so the field's spatial gradient never
/// exceeds 1/diagonal, which keeps every pair of cells (not just adjacent
/// ones) within the similarity distance. Draw order per arm: baseline,
/// then per bump its center x, center y, width, and amplitude.
pub fn synthetic_mu(params: &SyntheticParams, rng: &mut impl Rng) -> Result<MuGrid, EnvError> {
    if params.arms < 2 {
        return Err(EnvError::TooFewArms(params.arms));
    }
    if params.nx == 0 || params.ny == 0 {
        return Err(EnvError::EmptyGrid);
    }
    if !params.cell_size.is_finite() || params.cell_size <= 0.0 {
        return Err(EnvError::InvalidCellSize(params.cell_size));
    }
    if !params.roughness.is_finite() || params.roughness < 0.0 {
        return Err(EnvError::InvalidRoughness(params.roughness));
    }
    let (lo, hi) = params.base_range;
    if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi && hi <= 1.0) {
        return Err(EnvError::InvalidBaseRange(lo, hi));
    }
    if let Some(levels) = &params.base_levels {
        if levels.len() != params.arms {
            return Err(EnvError::BaseLevelCount {
                expected: params.arms,
                got: levels.len(),
            });
        }
        if let Some(&bad) = levels
            .iter()
            .find(|v| !v.is_finite() || !(0.0..=1.0).contains(*v))
        {
            return Err(EnvError::InvalidBaseLevel(bad));
        }
    }

    let width = params.nx as f64 * params.cell_size;
    let height = params.ny as f64 * params.cell_size;
    let diameter = width.hypot(height);
    let min_extent = width.min(height);

    struct Bump {
        cx: f64,
        cy: f64,
        width: f64,
        amplitude: f64,
    }

    let mut mu = vec![0.0; params.nx * params.ny * params.arms];
    for arm in 0..params.arms {
        let base = match &params.base_levels {
            Some(levels) => levels[arm],
            None if lo == hi => lo,
            None => rng.random_range(lo..hi),
        };
        let mut bumps = Vec::with_capacity(BUMPS_PER_ARM);
        for _ in 0..BUMPS_PER_ARM {
            bumps.push(Bump {
                cx: rng.random_range(0.0..width),
                cy: rng.random_range(0.0..height),
                width: rng.random_range(0.15..0.45) * min_extent,
                amplitude: rng.random_range(-0.4..0.4) * params.roughness,
            });
        }
        // A radial bump's steepest slope is |A| e^{-1/2} / w, so the summed
        // slope bound rescales all amplitudes when it would exceed the cap.
        let slope: f64 = bumps
            .iter()
            .map(|b| b.amplitude.abs() * (-0.5f64).exp() / b.width)
            .sum();
        let scale = if slope * diameter > 1.0 {
            1.0 / (slope * diameter)
        } else {
            1.0
        };
        for iy in 0..params.ny {
            for ix in 0..params.nx {
                let x = (ix as f64 + 0.5) * params.cell_size;
                let y = (iy as f64 + 0.5) * params.cell_size;
                let bump_sum: f64 = bumps
                    .iter()
                    .map(|b| {
                        let d2 = (x - b.cx).powi(2) + (y - b.cy).powi(2);
                        b.amplitude * (-d2 / (2.0 * b.width * b.width)).exp()
                    })
                    .sum();
                let cell = iy * params.nx + ix;
                mu[cell * params.arms + arm] = (base + scale * bump_sum).clamp(0.0, 1.0);
            }
        }
    }
    MuGrid::new(params.nx, params.ny, params.cell_size, params.arms, mu)
}

/// A piecewise-linear walk through the arena.
#[derive(Debug, Clone, PartialEq)]
pub struct MobilityConfig {
    pub waypoints: Vec<Context>,
    /// Meters advanced along the waypoint path per step.
    pub speed: f64,
    /// How many rounds the walker lingers at each step position.
    pub rounds_per_step: u32,
    pub steps: u32,
}

impl MobilityConfig {
    fn validate(&self, grid: &MuGrid) -> Result<(), EnvError> {
        if !self.speed.is_finite() || self.speed <= 0.0 {
            return Err(EnvError::InvalidSpeed(self.speed));
        }
        if self.waypoints.is_empty() {
            return Err(EnvError::NoWaypoints);
        }
        if self.steps == 0 || self.rounds_per_step == 0 {
            return Err(EnvError::EmptyTrace);
        }
        for (index, w) in self.waypoints.iter().enumerate() {
            let (x, y) = (w.coords()[0], w.coords()[1]);
            if w.dimension() != 2
                || !(0.0..=grid.width()).contains(&x)
                || !(0.0..=grid.height()).contains(&y)
            {
                return Err(EnvError::WaypointOutsideArena { index, x, y });
            }
        }
        Ok(())
    }
}

/// Step positions before snapping: one per step, advancing `speed` meters
/// along the waypoint polyline each step and stopping at the final
/// waypoint once the path is exhausted.
pub fn path_positions(cfg: &MobilityConfig) -> Vec<(f64, f64)> {
    let points: Vec<(f64, f64)> = cfg
        .waypoints
        .iter()
        .map(|w| (w.coords()[0], w.coords()[1]))
        .collect();
    let mut positions = Vec::with_capacity(cfg.steps as usize);
    for step in 0..cfg.steps {
        let mut remaining = step as f64 * cfg.speed;
        let mut position = points[0];
        for pair in points.windows(2) {
            let (ax, ay) = pair[0];
            let (bx, by) = pair[1];
            let length = (bx - ax).hypot(by - ay);
            if remaining <= length {
                let t = if length == 0.0 { 0.0 } else { remaining / length };
                position = (ax + t * (bx - ax), ay + t * (by - ay));
                remaining = 0.0;
                break;
            }
            remaining -= length;
            position = (bx, by);
        }
        // Any distance left over means the path ended early; stay put.
        let _ = remaining;
        positions.push(position);
    }
    positions
}

/// Builds the context sequence of one walk: each step position snapped to
/// its cell center and repeated `rounds_per_step` times, for a total of
/// `steps * rounds_per_step` contexts.
pub fn mobility_trace(cfg: &MobilityConfig, grid: &MuGrid) -> Result<Vec<Context>, EnvError> {
    cfg.validate(grid)?;
    let mut trace = Vec::with_capacity(cfg.steps as usize * cfg.rounds_per_step as usize);
    for (x, y) in path_positions(cfg) {
        let snapped = grid.snap(&Context::xy(x, y)?);
        for _ in 0..cfg.rounds_per_step {
            trace.push(snapped.clone());
        }
    }
    Ok(trace)
}

/// Draws waypoints uniformly over the arena, x before y for each point.
pub fn random_waypoints(grid: &MuGrid, count: usize, rng: &mut impl Rng) -> Vec<Context> {
    (0..count)
        .map(|_| {
            let x = rng.random_range(0.0..grid.width());
            let y = rng.random_range(0.0..grid.height());
            Context::xy(x, y).expect("arena coordinates are finite")
        })
        .collect()
}

/// The random streams one experiment cell can draw from. Environment,
/// trace, and reward streams are shared by every policy under the same
/// master seed, so identical decision sequences see identical rewards;
/// each policy's own decisions come from a stream of its own.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamId {
    Environment,
    Trace,
    Reward,
    /// Subset selection for sweeps over the number of arms.
    Sweep,
    /// Per-policy decision randomness, keyed by the policy's position.
    Decision(u32),
}

/// A 64-bit seed from which all of an experiment cell's random streams are
/// derived. Streams with different ids never overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MasterSeed(pub u64);

impl MasterSeed {
    pub fn stream(self, id: StreamId) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream(match id {
            StreamId::Environment => 0,
            StreamId::Trace => 1,
            StreamId::Reward => 2,
            StreamId::Sweep => 3,
            StreamId::Decision(policy) => 16 + policy as u64,
        });
        rng
    }
}

/// Draws a Bernoulli reward for `arm` at `x`: 1 with probability
/// μ(arm | cell of x), else 0, consuming exactly one draw from `rng`.
pub fn sample_reward(grid: &MuGrid, arm: ArmId, x: &Context, rng: &mut impl Rng) -> f64 {
    let mu = grid.mu(arm, x);
    if rng.random::<f64>() < mu {
        1.0
    } else {
        0.0
    }
}

/// Adapts a grid plus a reward stream to the execution-side sampler
/// interface.
pub struct GridSampler<'a> {
    grid: &'a MuGrid,
    rng: ChaCha8Rng,
}

impl<'a> GridSampler<'a> {
    pub fn new(grid: &'a MuGrid, rng: ChaCha8Rng) -> Self {
        Self { grid, rng }
    }
}

impl RewardSampler for GridSampler<'_> {
    fn sample(&mut self, arm: ArmId, x: &Context) -> f64 {
        sample_reward(self.grid, arm, x, &mut self.rng)
    }
}
