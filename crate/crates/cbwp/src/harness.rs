//! Experiment orchestration: configuration, multi-policy multi-seed runs,
//! regret accounting, run auditing, and CSV emission.
//!
//! One experiment cell is a (policy, seed) pair. Every cell under the same
//! seed shares the environment, the context trace, and the reward stream,
//! so policies are compared on identical randomness; only the decision
//! stream is per-policy. Per round the harness computes the offline
//! optimal value at the current cell and the committed plan's expected
//! reward, and their difference is the round's regret. Cells are
//! independent and can run in parallel; results collect into ordered maps
//! so emitted artifacts are byte-identical regardless of scheduling.

use crate::env::{
    mobility_trace, random_waypoints, snr_grid_to_mu, synthetic_mu, EnvError, GridSampler,
    MasterSeed, McsTable, MobilityConfig, MuGrid, StreamId, SyntheticParams,
};
use crate::metric::{Context, MetricError};
use crate::oracle::{bernoulli_optimal, plan_expected_reward, OracleError};
use crate::policy::{
    baseline_plan, cbwp_plan, execute_round, PolicyError, PolicyKind, RoundValues,
};
use crate::zooming::{ArmBallSet, ArmId, BallId, HorizonParams, ZoomingError};
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Errors raised during configuration, runs, audits, or emission.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("rounds must be at least 1")]
    NoRounds,
    #[error("at least one policy is required")]
    NoPolicies,
    #[error("policy {0} appears more than once")]
    DuplicatePolicy(PolicyKind),
    #[error("at least one seed is required")]
    NoSeeds,
    #[error("seed {0} appears more than once")]
    DuplicateSeed(u64),
    #[error("probe budget {k} must satisfy 1 <= k < {arms} arms")]
    ProbeBudgetVsArms { k: usize, arms: usize },
    #[error("sweep over {axis} needs at least one value")]
    EmptySweep { axis: &'static str },
    #[error("sweep needs at least one arm subset per size")]
    NoSubsets,
    #[error("mobility: {0}")]
    InvalidMobility(&'static str),
    #[error("{path}: {source}")]
    FileEnv {
        path: String,
        #[source]
        source: EnvError,
    },
    #[error("{path}: {source}")]
    FileIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("round {round}, arm {arm}: recorded history diverges from replay")]
    ReplayDivergence { round: u64, arm: ArmId },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Zooming(#[from] ZoomingError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Where the mean-reward grid comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvironmentSpec {
    /// Generated per master seed from the environment stream.
    Synthetic(SyntheticParams),
    /// Loaded from a mean-reward CSV; identical across seeds.
    Grid { mu_csv: String, cell_size: f64 },
    /// Loaded from an SNR CSV plus a rate table; identical across seeds.
    Snr {
        snr_csv: String,
        mcs_csv: String,
        cell_size: f64,
    },
}

/// Walk shape for the context traces. Without explicit waypoints each
/// client draws fresh random waypoints from the trace stream; clients are
/// concatenated until the round horizon is covered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MobilitySpec {
    #[serde(default = "default_speed")]
    pub speed: f64,
    #[serde(default = "default_rounds_per_step")]
    pub rounds_per_step: u32,
    #[serde(default = "default_steps")]
    pub steps: u32,
    #[serde(default)]
    pub waypoints: Option<Vec<(f64, f64)>>,
    #[serde(default = "default_waypoints_per_client")]
    pub waypoints_per_client: usize,
}

fn default_speed() -> f64 {
    1.0
}

fn default_rounds_per_step() -> u32 {
    20
}

fn default_steps() -> u32 {
    80
}

fn default_waypoints_per_client() -> usize {
    5
}

impl Default for MobilitySpec {
    fn default() -> Self {
        Self {
            speed: default_speed(),
            rounds_per_step: default_rounds_per_step(),
            steps: default_steps(),
            waypoints: None,
            waypoints_per_client: default_waypoints_per_client(),
        }
    }
}

/// Which run audits to perform. They are opt-in because the checks replay
/// the whole run and sweep every ball each round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditFlags {
    /// Per-round concentration check on every ball, plus the gap bounds on
    /// probed, played, and activating arms for the index policy.
    #[serde(default)]
    pub clean_run: bool,
    /// Cover, packing, and parent-activation structure of the ball sets.
    #[serde(default)]
    pub invariants: bool,
    /// Per-ball bound on how often a ball may be selected while childless.
    #[serde(default)]
    pub selection_bound: bool,
}

impl AuditFlags {
    pub fn any(&self) -> bool {
        self.clean_run || self.invariants || self.selection_bound
    }
}

/// Sweep values for the `sweep` entry point.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub k_values: Vec<usize>,
    #[serde(default)]
    pub n_values: Vec<usize>,
    /// Random arm subsets drawn per value when sweeping the arm count.
    #[serde(default = "default_subsets_per_n")]
    pub subsets_per_n: usize,
}

fn default_subsets_per_n() -> usize {
    5
}

/// A full experiment description. Unknown keys are rejected so typos in
/// config files fail loudly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvironmentSpec,
    /// Probe budget per round; must stay below the arm count.
    pub k: usize,
    /// Rounds per cell (the horizon).
    pub rounds: u64,
    pub policies: Vec<PolicyKind>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub mobility: MobilitySpec,
    #[serde(default)]
    pub audit: AuditFlags,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    /// Default output directory; the command line can override it.
    #[serde(default)]
    pub out_dir: Option<String>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.rounds == 0 {
            return Err(HarnessError::NoRounds);
        }
        if self.policies.is_empty() {
            return Err(HarnessError::NoPolicies);
        }
        for (i, &policy) in self.policies.iter().enumerate() {
            if self.policies[..i].contains(&policy) {
                return Err(HarnessError::DuplicatePolicy(policy));
            }
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::NoSeeds);
        }
        for (i, &seed) in self.seeds.iter().enumerate() {
            if self.seeds[..i].contains(&seed) {
                return Err(HarnessError::DuplicateSeed(seed));
            }
        }
        if self.k == 0 {
            return Err(HarnessError::ProbeBudgetVsArms {
                k: self.k,
                arms: usize::MAX,
            });
        }
        if let EnvironmentSpec::Synthetic(params) = &self.environment {
            if self.k >= params.arms {
                return Err(HarnessError::ProbeBudgetVsArms {
                    k: self.k,
                    arms: params.arms,
                });
            }
        }
        let mobility = &self.mobility;
        if !mobility.speed.is_finite() || mobility.speed <= 0.0 {
            return Err(HarnessError::InvalidMobility("speed must be positive"));
        }
        if mobility.steps == 0 || mobility.rounds_per_step == 0 {
            return Err(HarnessError::InvalidMobility(
                "steps and rounds_per_step must be at least 1",
            ));
        }
        match &mobility.waypoints {
            Some(points) if points.is_empty() => {
                return Err(HarnessError::InvalidMobility(
                    "explicit waypoint list must be nonempty",
                ));
            }
            None if mobility.waypoints_per_client == 0 => {
                return Err(HarnessError::InvalidMobility(
                    "waypoints_per_client must be at least 1",
                ));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Per-round metrics of one cell, in round order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundMetrics {
    pub round: u64,
    pub cell: (usize, usize),
    pub instant_regret: f64,
    pub cum_regret: f64,
    pub realized_reward: f64,
}

/// One executed round as needed to replay the run: which balls were
/// selected, what was probed and observed, and what was played.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: u64,
    pub cell: (usize, usize),
    pub probe_order: Vec<ArmId>,
    pub selected_balls: Vec<BallId>,
    pub indices_snapshot: Vec<f64>,
    /// Truncated at the first full reward, like the execution itself.
    pub observations: Vec<f64>,
    pub played: ArmId,
    pub realized_reward: f64,
}

/// Everything needed to reconstruct a cell's ball sets round by round.
#[derive(Debug, Clone, PartialEq)]
pub struct RunHistory {
    pub policy: PolicyKind,
    pub seed: u64,
    pub k: usize,
    pub arms: usize,
    pub rounds: u64,
    pub root_center: Context,
    pub records: Vec<RoundRecord>,
}

/// A concentration-check failure: the ball's estimate strayed further from
/// the true mean at its center than its radius plus confidence allows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcentrationViolation {
    pub round: u64,
    pub arm: ArmId,
    pub ball: BallId,
    pub lhs: f64,
    pub rhs: f64,
}

/// A gap-bound failure on a probed, played, or activating arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapViolation {
    pub round: u64,
    pub position: usize,
    pub arm: ArmId,
    pub gap: f64,
    pub bound: f64,
}

/// Outcome of replaying one cell against the true means.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub policy: PolicyKind,
    pub seed: u64,
    pub k: usize,
    pub arms: usize,
    pub rounds: u64,
    pub root_center: Context,
    /// True when no ball ever violated the concentration bound.
    pub clean_run: bool,
    pub violations: Vec<ConcentrationViolation>,
    pub concentration_checks: u64,
    /// Probed/played arms whose mean gap exceeded 14x the selected ball's
    /// radius; meaningful for the index policy on clean runs.
    pub gap_violations: Vec<GapViolation>,
    /// Activations whose mean gap exceeded 28x the child's radius (or 12x
    /// when the activating ball already had children).
    pub activation_violations: Vec<GapViolation>,
    pub ball_count: usize,
    /// Worst per-ball ratio of leaf selections to the allowed bound.
    pub max_selection_ratio: f64,
    pub selection_bound_ok: bool,
    pub cover_ok: bool,
    pub packing_ok: bool,
    pub parent_rule_ok: bool,
}

impl AuditReport {
    /// Renders the report as stable, line-oriented text.
    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let (x, y) = (self.root_center.coords()[0], self.root_center.coords()[1]);
        writeln!(
            out,
            "policy={} seed={} k={} arms={} rounds={}",
            self.policy, self.seed, self.k, self.arms, self.rounds
        )?;
        writeln!(out, "root_center=({x:?}, {y:?})")?;
        writeln!(out, "clean_run={}", self.clean_run)?;
        writeln!(
            out,
            "concentration_checks={} violations={}",
            self.concentration_checks,
            self.violations.len()
        )?;
        for v in &self.violations {
            writeln!(
                out,
                "concentration_violation round={} arm={} ball={} lhs={:?} rhs={:?}",
                v.round, v.arm, v.ball, v.lhs, v.rhs
            )?;
        }
        writeln!(
            out,
            "gap_violations={} activation_violations={}",
            self.gap_violations.len(),
            self.activation_violations.len()
        )?;
        for v in self.gap_violations.iter().chain(&self.activation_violations) {
            writeln!(
                out,
                "gap_violation round={} position={} arm={} gap={:?} bound={:?}",
                v.round, v.position, v.arm, v.gap, v.bound
            )?;
        }
        writeln!(
            out,
            "ball_count={} max_selection_ratio={:?} selection_bound_ok={}",
            self.ball_count, self.max_selection_ratio, self.selection_bound_ok
        )?;
        writeln!(
            out,
            "cover_ok={} packing_ok={} parent_rule_ok={}",
            self.cover_ok, self.packing_ok, self.parent_rule_ok
        )?;
        Ok(())
    }
}

/// Results of one (policy, seed) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub policy: PolicyKind,
    pub seed: u64,
    pub rounds: Vec<RoundMetrics>,
    pub final_cum_regret: f64,
    pub audit: Option<AuditReport>,
}

/// All cells of one experiment, keyed by (policy, seed).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsTable {
    cells: BTreeMap<(PolicyKind, u64), CellResult>,
}

impl MetricsTable {
    pub fn cells(&self) -> impl Iterator<Item = &CellResult> {
        self.cells.values()
    }

    pub fn cell(&self, policy: PolicyKind, seed: u64) -> Option<&CellResult> {
        self.cells.get(&(policy, seed))
    }

    pub fn policies(&self) -> Vec<PolicyKind> {
        let mut seen = Vec::new();
        for &(policy, _) in self.cells.keys() {
            if !seen.contains(&policy) {
                seen.push(policy);
            }
        }
        seen
    }

    /// Seed-averaged final cumulative regret of one policy.
    pub fn averaged_final_regret(&self, policy: PolicyKind) -> Option<f64> {
        self.averaged_cum_regret_at(policy, u64::MAX)
    }

    /// Seed-averaged cumulative regret after the given round (saturating
    /// at each cell's final round).
    pub fn averaged_cum_regret_at(&self, policy: PolicyKind, round: u64) -> Option<f64> {
        let mut total = 0.0;
        let mut count = 0usize;
        for cell in self.cells.values().filter(|c| c.policy == policy) {
            let value = match cell.rounds.iter().rfind(|m| m.round <= round) {
                Some(metrics) => metrics.cum_regret,
                None => 0.0,
            };
            total += value;
            count += 1;
        }
        (count > 0).then(|| total / count as f64)
    }
}

fn decision_stream(seed: MasterSeed, policy: PolicyKind) -> impl Rng {
    let position = PolicyKind::ALL
        .iter()
        .position(|&p| p == policy)
        .expect("every policy kind is listed") as u32;
    seed.stream(StreamId::Decision(position))
}

/// Loads or generates the grid for one master seed. Synthetic grids come
/// from the seed's environment stream; file grids ignore the seed.
pub fn load_environment(
    spec: &EnvironmentSpec,
    seed: MasterSeed,
) -> Result<MuGrid, HarnessError> {
    match spec {
        EnvironmentSpec::Synthetic(params) => {
            let mut rng = seed.stream(StreamId::Environment);
            Ok(synthetic_mu(params, &mut rng)?)
        }
        EnvironmentSpec::Grid { mu_csv, cell_size } => {
            let file = open_file(mu_csv)?;
            MuGrid::read_csv(file, *cell_size).map_err(|source| HarnessError::FileEnv {
                path: mu_csv.clone(),
                source,
            })
        }
        EnvironmentSpec::Snr {
            snr_csv,
            mcs_csv,
            cell_size,
        } => {
            let mcs_file = open_file(mcs_csv)?;
            let mcs = McsTable::read_csv(mcs_file).map_err(|source| HarnessError::FileEnv {
                path: mcs_csv.clone(),
                source,
            })?;
            let snr_file = open_file(snr_csv)?;
            snr_grid_to_mu(snr_file, &mcs, *cell_size).map_err(|source| HarnessError::FileEnv {
                path: snr_csv.clone(),
                source,
            })
        }
    }
}

fn open_file(path: &str) -> Result<fs::File, HarnessError> {
    fs::File::open(path).map_err(|source| HarnessError::FileIo {
        path: path.to_string(),
        source,
    })
}

/// Builds the context sequence for one seed: client walks are concatenated
/// until the horizon is covered, then truncated to exactly `rounds`.
pub fn build_trace(
    cfg: &ExperimentConfig,
    grid: &MuGrid,
    seed: MasterSeed,
) -> Result<Vec<Context>, HarnessError> {
    let mut rng = seed.stream(StreamId::Trace);
    let mobility = &cfg.mobility;
    let mut trace = Vec::with_capacity(cfg.rounds as usize);
    while (trace.len() as u64) < cfg.rounds {
        let waypoints = match &mobility.waypoints {
            Some(points) => points
                .iter()
                .map(|&(x, y)| Context::xy(x, y))
                .collect::<Result<Vec<_>, _>>()?,
            None => random_waypoints(grid, mobility.waypoints_per_client, &mut rng),
        };
        let client = MobilityConfig {
            waypoints,
            speed: mobility.speed,
            rounds_per_step: mobility.rounds_per_step,
            steps: mobility.steps,
        };
        trace.extend(mobility_trace(&client, grid)?);
    }
    trace.truncate(cfg.rounds as usize);
    Ok(trace)
}

/// Runs one (policy, seed) cell over a prepared grid and trace.
pub fn run_cell(
    grid: &MuGrid,
    trace: &[Context],
    policy: PolicyKind,
    seed: MasterSeed,
    k: usize,
    audit: AuditFlags,
) -> Result<CellResult, HarnessError> {
    let arms = grid.arms();
    if k == 0 || k >= arms {
        return Err(HarnessError::ProbeBudgetVsArms { k, arms });
    }
    let rounds = trace.len() as u64;
    let horizon = HorizonParams::new(rounds)?;
    let space = grid.similarity_space();
    let root_center = trace[0].clone();
    let mut sets = (0..arms)
        .map(|arm| ArmBallSet::new(arm, space, root_center.clone()))
        .collect::<Result<Vec<_>, _>>()?;

    let mut decisions = decision_stream(seed, policy);
    let mut sampler = GridSampler::new(grid, seed.stream(StreamId::Reward));
    let mut oracle_cache: HashMap<(usize, usize), f64> = HashMap::new();

    let mut metrics = Vec::with_capacity(trace.len());
    let mut records = audit.any().then(|| Vec::with_capacity(trace.len()));
    let mut cum_regret = 0.0;

    for (i, x) in trace.iter().enumerate() {
        let round = i as u64 + 1;
        let cell = grid.cell_of(x);
        let mu = grid.mu_vector(cell.0, cell.1);
        let oracle_value = match oracle_cache.get(&cell) {
            Some(&value) => value,
            None => {
                let value = bernoulli_optimal(mu, k)?.value;
                oracle_cache.insert(cell, value);
                value
            }
        };

        let plan = if policy == PolicyKind::Cbwp {
            cbwp_plan(&sets, x, k, horizon)?
        } else {
            baseline_plan(policy, &sets, x, k, horizon, &mut decisions)?
        };
        let expected_reward = plan_expected_reward(&plan, mu)?;
        let values = RoundValues {
            expected_reward,
            oracle_value,
        };
        let log = execute_round(&plan, &mut sampler, &mut sets, horizon, round, values)?;

        cum_regret += log.instant_regret;
        metrics.push(RoundMetrics {
            round,
            cell,
            instant_regret: log.instant_regret,
            cum_regret,
            realized_reward: log.realized_reward,
        });
        if let Some(records) = records.as_mut() {
            records.push(RoundRecord {
                round,
                cell,
                probe_order: log.plan.probe_order.clone(),
                selected_balls: log.plan.selected_balls.clone(),
                indices_snapshot: log.plan.indices_snapshot.clone(),
                observations: log.observations.clone(),
                played: log.played,
                realized_reward: log.realized_reward,
            });
        }
    }

    let audit_report = match records {
        Some(records) => {
            let history = RunHistory {
                policy,
                seed: seed.0,
                k,
                arms,
                rounds,
                root_center,
                records,
            };
            Some(audit_clean_run(&history, grid)?)
        }
        None => None,
    };

    Ok(CellResult {
        policy,
        seed: seed.0,
        rounds: metrics,
        final_cum_regret: cum_regret,
        audit: audit_report,
    })
}

/// Runs every (policy, seed) cell of the config and collects the results.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricsTable, HarnessError> {
    run_restricted(cfg, None)
}

/// Like [`run_experiment`] but optionally projecting the environment onto
/// an arm subset first (used by sweeps over the arm count).
fn run_restricted(
    cfg: &ExperimentConfig,
    arm_subset: Option<&[ArmId]>,
) -> Result<MetricsTable, HarnessError> {
    cfg.validate()?;
    let mut cells: Vec<(PolicyKind, u64)> = Vec::new();
    for &seed in &cfg.seeds {
        for &policy in &cfg.policies {
            cells.push((policy, seed));
        }
    }
    let results: Result<Vec<_>, HarnessError> = cells
        .par_iter()
        .map(|&(policy, seed)| {
            let master = MasterSeed(seed);
            let mut grid = load_environment(&cfg.environment, master)?;
            if let Some(subset) = arm_subset {
                grid = grid.restrict(subset)?;
            }
            let trace = build_trace(cfg, &grid, master)?;
            let result = run_cell(&grid, &trace, policy, master, cfg.k, cfg.audit)?;
            Ok(((policy, seed), result))
        })
        .collect();
    Ok(MetricsTable {
        cells: results?.into_iter().collect(),
    })
}

/// Replays a recorded run against the true means and checks every bound
/// the run is supposed to satisfy: the per-ball concentration inequality,
/// the gap bounds on probed/played/activating arms (index policy only),
/// the ball-set geometry, and the leaf-selection count bound.
pub fn audit_clean_run(history: &RunHistory, grid: &MuGrid) -> Result<AuditReport, HarnessError> {
    let horizon = HorizonParams::new(history.rounds)?;
    let space = grid.similarity_space();
    let arms = history.arms;
    let mut sets = (0..arms)
        .map(|arm| ArmBallSet::new(arm, space, history.root_center.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    // True mean at each ball's center, cached as balls appear.
    let mut ball_mu: Vec<HashMap<BallId, f64>> = (0..arms)
        .map(|arm| {
            let mut map = HashMap::new();
            map.insert(BallId(0), grid.mu(arm, &history.root_center));
            map
        })
        .collect();

    let mut violations = Vec::new();
    let mut concentration_checks = 0u64;
    let mut gap_violations = Vec::new();
    let mut activation_violations = Vec::new();
    const GAP_TOLERANCE: f64 = 1e-9;

    for record in &history.records {
        let round = record.round;
        let x = grid.cell_center(record.cell.0, record.cell.1);
        let mu = grid.mu_vector(record.cell.0, record.cell.1);

        for set in &sets {
            for ball in set.balls() {
                let lhs = (ball.average_reward() - ball_mu[set.arm()][&ball.id()]).abs();
                let rhs = ball.radius() + ball.conf_radius(horizon);
                concentration_checks += 1;
                if lhs > rhs + 1e-12 {
                    violations.push(ConcentrationViolation {
                        round,
                        arm: set.arm(),
                        ball: ball.id(),
                        lhs,
                        rhs,
                    });
                }
            }
        }

        // The recorded selections and index snapshot must be exactly what
        // the selection rule yields on the reconstructed state; anything
        // else means the history does not describe this run.
        let (balls_now, values_now) =
            crate::policy::snapshot_selections(&sets, &x, horizon, history.policy)?;
        for arm in 0..arms {
            if balls_now[arm] != record.selected_balls[arm]
                || values_now[arm] != record.indices_snapshot[arm]
            {
                return Err(HarnessError::ReplayDivergence { round, arm });
            }
        }

        // Arms actually charged this round: the probed prefix, plus the
        // played arm when it was sampled separately.
        let probed = &record.probe_order[..record.observations.len()];
        let mut executed: Vec<ArmId> = probed.to_vec();
        let played_updated = record.observations.len() == record.probe_order.len()
            && !record.probe_order.contains(&record.played);
        if played_updated {
            executed.push(record.played);
        }

        // Positional pairing for the gap bounds: the i-th best arm (by
        // true mean, sorted by the pre-update index of its selected ball)
        // against the i-th arm the policy charged.
        let stars = if history.policy == PolicyKind::Cbwp {
            let mut stars: Vec<ArmId> = (0..arms).collect();
            stars.sort_by(|&a, &b| mu[b].partial_cmp(&mu[a]).unwrap().then(a.cmp(&b)));
            stars.truncate(history.k + 1);
            stars.sort_by(|&a, &b| {
                values_now[b]
                    .partial_cmp(&values_now[a])
                    .unwrap()
                    .then(a.cmp(&b))
            });
            stars
        } else {
            Vec::new()
        };

        for (position, &arm) in executed.iter().enumerate() {
            let ball = record.selected_balls[arm];
            let gap = if stars.is_empty() {
                0.0
            } else {
                mu[stars[position]] - mu[arm]
            };
            if !stars.is_empty() {
                let radius = sets[arm].ball(ball)?.radius();
                if gap > 14.0 * radius + GAP_TOLERANCE {
                    gap_violations.push(GapViolation {
                        round,
                        position,
                        arm,
                        gap,
                        bound: 14.0 * radius,
                    });
                }
            }

            let reward = if position < record.observations.len() {
                record.observations[position]
            } else {
                record.realized_reward
            };
            let spawned =
                sets[arm].record_and_maybe_activate(ball, &x, reward, horizon, round)?;
            if let Some(child) = spawned {
                ball_mu[arm].insert(child, mu[arm]);
                if !stars.is_empty() {
                    let child_radius = sets[arm].ball(child)?.radius();
                    let parent_was_parent = sets[arm].ball(ball)?.child_count() > 1;
                    let bound = if parent_was_parent {
                        12.0 * child_radius
                    } else {
                        28.0 * child_radius
                    };
                    if gap > bound + GAP_TOLERANCE {
                        activation_violations.push(GapViolation {
                            round,
                            position,
                            arm,
                            gap,
                            bound,
                        });
                    }
                }
            }
        }
    }

    let ball_count = sets.iter().map(|set| set.balls().count()).sum();

    // Selection-count bound: while a ball stays childless it may only be
    // selected a bounded number of times before its confidence forces a
    // child. Meaningless at a log horizon of zero, where every update
    // activates immediately.
    let mut max_selection_ratio = 0.0f64;
    if horizon.log_rounds() > 0.0 {
        for set in &sets {
            for ball in set.balls() {
                let bound = 16.0 * horizon.log_rounds() / (ball.radius() * ball.radius());
                let ratio = ball.selection_count_while_leaf() as f64 / bound;
                max_selection_ratio = max_selection_ratio.max(ratio);
            }
        }
    }
    let selection_bound_ok = max_selection_ratio <= 1.0 + 1e-12;

    // Parent rule: a ball has children exactly when it has data and its
    // confidence has shrunk to its radius.
    let parent_rule_ok = sets.iter().all(|set| {
        set.balls().all(|ball| {
            let should = ball.times_selected() >= 1 && ball.conf_radius(horizon) <= ball.radius();
            (ball.child_count() > 0) == should
        })
    });

    // Packing: same-radius balls of one arm keep their centers at least a
    // radius apart.
    let mut packing_ok = true;
    for set in &sets {
        let balls: Vec<_> = set.balls().collect();
        for (i, a) in balls.iter().enumerate() {
            for b in &balls[i + 1..] {
                if a.radius() == b.radius() {
                    let distance = space.distance(a.center(), b.center())?;
                    if distance < a.radius() - 1e-12 {
                        packing_ok = false;
                    }
                }
            }
        }
    }

    // Cover: every cell center, and a deterministic sample of arbitrary
    // arena points, lies in some active ball of every arm.
    let mut cover_ok = true;
    {
        let mut points = Vec::new();
        for iy in 0..grid.ny() {
            for ix in 0..grid.nx() {
                points.push(grid.cell_center(ix, iy));
            }
        }
        let mut rng = MasterSeed(history.seed).stream(StreamId::Sweep);
        points.extend(random_waypoints(grid, 10_000, &mut rng));
        for point in &points {
            for set in &sets {
                let contained = set
                    .balls()
                    .any(|ball| space.distance(ball.center(), point).unwrap_or(2.0) <= ball.radius());
                if !contained {
                    cover_ok = false;
                }
            }
        }
    }

    Ok(AuditReport {
        policy: history.policy,
        seed: history.seed,
        k: history.k,
        arms,
        rounds: history.rounds,
        root_center: history.root_center.clone(),
        clean_run: violations.is_empty(),
        violations,
        concentration_checks,
        gap_violations,
        activation_violations,
        ball_count,
        max_selection_ratio,
        selection_bound_ok,
        cover_ok,
        packing_ok,
        parent_rule_ok,
    })
}

/// One sweep point: a parameter value, the arm subset it ran on (for arm
/// sweeps), and the resulting table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: usize,
    pub subset: Option<Vec<ArmId>>,
    pub table: MetricsTable,
}

/// Which parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    ProbeBudget,
    ArmCount,
}

impl SweepAxis {
    pub fn label(&self) -> &'static str {
        match self {
            SweepAxis::ProbeBudget => "k",
            SweepAxis::ArmCount => "n",
        }
    }
}

/// Result of a sweep: one or more points per swept value (arm sweeps run
/// several random subsets per value).
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    /// Final cumulative regret averaged over seeds and subsets for one
    /// (policy, value) pair.
    pub fn averaged_final_regret(&self, policy: PolicyKind, value: usize) -> Option<f64> {
        let mut total = 0.0;
        let mut count = 0usize;
        for point in self.points.iter().filter(|p| p.value == value) {
            if let Some(avg) = point.table.averaged_final_regret(policy) {
                total += avg;
                count += 1;
            }
        }
        (count > 0).then(|| total / count as f64)
    }

    pub fn values(&self) -> Vec<usize> {
        let mut values: Vec<usize> = self.points.iter().map(|p| p.value).collect();
        values.sort_unstable();
        values.dedup();
        values
    }
}

/// Runs the configured sweep along one axis. Probe-budget sweeps rerun the
/// whole experiment per value; arm-count sweeps draw `subsets_per_n`
/// random arm subsets per value (from the first seed's sweep stream) and
/// rerun the experiment on each projected environment.
pub fn run_sweep(cfg: &ExperimentConfig, axis: SweepAxis) -> Result<SweepResult, HarnessError> {
    cfg.validate()?;
    let sweep = cfg.sweep.clone().unwrap_or_default();
    let mut points = Vec::new();
    match axis {
        SweepAxis::ProbeBudget => {
            if sweep.k_values.is_empty() {
                return Err(HarnessError::EmptySweep { axis: "k" });
            }
            for &k in &sweep.k_values {
                let point_cfg = ExperimentConfig {
                    k,
                    ..cfg.clone()
                };
                points.push(SweepPoint {
                    value: k,
                    subset: None,
                    table: run_experiment(&point_cfg)?,
                });
            }
        }
        SweepAxis::ArmCount => {
            if sweep.n_values.is_empty() {
                return Err(HarnessError::EmptySweep { axis: "n" });
            }
            if sweep.subsets_per_n == 0 {
                return Err(HarnessError::NoSubsets);
            }
            let total_arms = match &cfg.environment {
                EnvironmentSpec::Synthetic(params) => params.arms,
                // File environments share one grid; load it once to size it.
                spec => load_environment(spec, MasterSeed(cfg.seeds[0]))?.arms(),
            };
            let mut rng = MasterSeed(cfg.seeds[0]).stream(StreamId::Sweep);
            for &n in &sweep.n_values {
                if n > total_arms || cfg.k >= n {
                    return Err(HarnessError::ProbeBudgetVsArms { k: cfg.k, arms: n });
                }
                for _ in 0..sweep.subsets_per_n {
                    let mut subset: Vec<ArmId> =
                        sample_indices(&mut rng, total_arms, n).into_vec();
                    subset.sort_unstable();
                    points.push(SweepPoint {
                        value: n,
                        subset: Some(subset.clone()),
                        table: run_restricted(cfg, Some(&subset))?,
                    });
                }
            }
        }
    }
    Ok(SweepResult { axis, points })
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), HarnessError> {
    fs::write(path, contents).map_err(|source| HarnessError::FileIo {
        path: path.display().to_string(),
        source,
    })
}

fn csv_into_string(build: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>) -> Result<String, HarnessError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    build(&mut writer).map_err(EnvError::from)?;
    let bytes = writer.into_inner().expect("vec writers do not fail");
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'static str,
    config: &'a ExperimentConfig,
    sweep_axis: Option<&'static str>,
}

fn write_manifest(
    cfg: &ExperimentConfig,
    axis: Option<SweepAxis>,
    dir: &Path,
) -> Result<(), HarnessError> {
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        sweep_axis: axis.map(|a| a.label()),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    write_file(&dir.join("manifest.json"), text.as_bytes())
}

fn ensure_dir(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|source| HarnessError::FileIo {
        path: dir.display().to_string(),
        source,
    })
}

/// Writes one experiment's artifacts: a per-round regret CSV and optional
/// audit text per cell, a seed-averaged summary, and a manifest echoing
/// the configuration. All files are UTF-8 with LF line endings and are
/// byte-identical across reruns of the same config.
pub fn emit_outputs(
    table: &MetricsTable,
    cfg: &ExperimentConfig,
    dir: &Path,
) -> Result<(), HarnessError> {
    ensure_dir(dir)?;
    for cell in table.cells() {
        let regret = csv_into_string(|w| {
            w.write_record(["round", "context_cell", "instant_regret", "cum_regret", "realized_reward"])?;
            for m in &cell.rounds {
                w.write_record([
                    m.round.to_string(),
                    format!("{}:{}", m.cell.0, m.cell.1),
                    format!("{:?}", m.instant_regret),
                    format!("{:?}", m.cum_regret),
                    format!("{:?}", m.realized_reward),
                ])?;
            }
            Ok(())
        })?;
        let name = format!("regret_{}_{}.csv", cell.policy, cell.seed);
        write_file(&dir.join(name), regret.as_bytes())?;

        if let Some(report) = &cell.audit {
            let mut text = Vec::new();
            report
                .write_text(&mut text)
                .expect("writing to a vec cannot fail");
            let name = format!("audit_{}_{}.txt", cell.policy, cell.seed);
            write_file(&dir.join(name), &text)?;
        }
    }

    let summary = csv_into_string(|w| {
        w.write_record(["policy", "avg_final_cum_regret"])?;
        for policy in table.policies() {
            let avg = table
                .averaged_final_regret(policy)
                .expect("listed policies have cells");
            w.write_record([policy.to_string(), format!("{avg:?}")])?;
        }
        Ok(())
    })?;
    write_file(&dir.join("summary.csv"), summary.as_bytes())?;
    write_manifest(cfg, None, dir)
}

/// Writes a sweep's artifacts: a summary with one seed-and-subset-averaged
/// row per (policy, value) and a manifest naming the swept axis.
pub fn emit_sweep_outputs(
    sweep: &SweepResult,
    cfg: &ExperimentConfig,
    dir: &Path,
) -> Result<(), HarnessError> {
    ensure_dir(dir)?;
    let mut policies = Vec::new();
    for point in &sweep.points {
        for policy in point.table.policies() {
            if !policies.contains(&policy) {
                policies.push(policy);
            }
        }
    }
    policies.sort_unstable();
    let summary = csv_into_string(|w| {
        w.write_record(["policy", sweep.axis.label(), "avg_final_cum_regret"])?;
        for &policy in &policies {
            for value in sweep.values() {
                if let Some(avg) = sweep.averaged_final_regret(policy, value) {
                    w.write_record([policy.to_string(), value.to_string(), format!("{avg:?}")])?;
                }
            }
        }
        Ok(())
    })?;
    write_file(&dir.join("summary.csv"), summary.as_bytes())?;
    write_manifest(cfg, Some(sweep.axis), dir)
}

/// Validates the artifacts in a run directory: the manifest must parse
/// into a valid config, every regret CSV must have contiguous rounds with
/// nonnegative instant regret and exact prefix sums, and the summary must
/// match the per-cell finals. Returns a list of human-readable problems;
/// an empty list means the directory is consistent.
pub fn audit_artifacts(dir: &Path) -> Result<Vec<String>, HarnessError> {
    let mut problems = Vec::new();

    let manifest_path = dir.join("manifest.json");
    match fs::read_to_string(&manifest_path) {
        Ok(text) => match serde_json::from_str::<serde_json::Value>(&text) {
            Ok(value) => {
                match value.get("config") {
                    Some(config) => {
                        if let Err(err) =
                            serde_json::from_value::<ExperimentConfig>(config.clone())
                                .map_err(HarnessError::from)
                                .and_then(|cfg| cfg.validate())
                        {
                            problems.push(format!("manifest.json: invalid config: {err}"));
                        }
                    }
                    None => problems.push("manifest.json: missing 'config' entry".to_string()),
                }
            }
            Err(err) => problems.push(format!("manifest.json: {err}")),
        },
        Err(err) => problems.push(format!("{}: {err}", manifest_path.display())),
    }

    let mut finals: BTreeMap<(String, u64), f64> = BTreeMap::new();
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|source| HarnessError::FileIo {
            path: dir.display().to_string(),
            source,
        })?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .collect();
    entries.sort();

    for path in &entries {
        let name = match path.file_name().and_then(|n| n.to_str()) {
            Some(name) => name,
            None => continue,
        };
        let Some(stem) = name.strip_prefix("regret_").and_then(|s| s.strip_suffix(".csv"))
        else {
            continue;
        };
        let Some((policy, seed_text)) = stem.rsplit_once('_') else {
            problems.push(format!("{name}: unrecognized regret file name"));
            continue;
        };
        let Ok(seed) = seed_text.parse::<u64>() else {
            problems.push(format!("{name}: unrecognized seed '{seed_text}'"));
            continue;
        };
        match check_regret_csv(path) {
            Ok(final_cum) => {
                finals.insert((policy.to_string(), seed), final_cum);
            }
            Err(problem) => problems.push(format!("{name}: {problem}")),
        }
    }

    let summary_path = dir.join("summary.csv");
    if summary_path.exists() && !finals.is_empty() {
        match check_summary(&summary_path, &finals) {
            Ok(mut summary_problems) => problems.append(&mut summary_problems),
            Err(problem) => problems.push(format!("summary.csv: {problem}")),
        }
    } else if !summary_path.exists() {
        problems.push("summary.csv: missing".to_string());
    }

    Ok(problems)
}

fn check_regret_csv(path: &Path) -> Result<f64, String> {
    let file = fs::File::open(path).map_err(|e| e.to_string())?;
    let mut reader = csv::ReaderBuilder::new().from_reader(file);
    let headers = reader.headers().map_err(|e| e.to_string())?;
    let expected = [
        "round",
        "context_cell",
        "instant_regret",
        "cum_regret",
        "realized_reward",
    ];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(format!("unexpected header '{}'", headers.iter().collect::<Vec<_>>().join(",")));
    }
    let mut expected_round = 1u64;
    let mut prefix = 0.0f64;
    let mut final_cum = 0.0f64;
    for record in reader.records() {
        let record = record.map_err(|e| e.to_string())?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| -> Result<f64, String> {
            record[i]
                .parse::<f64>()
                .map_err(|_| format!("line {line}: invalid number '{}'", &record[i]))
        };
        let round: u64 = record[0]
            .parse()
            .map_err(|_| format!("line {line}: invalid round '{}'", &record[0]))?;
        if round != expected_round {
            return Err(format!(
                "line {line}: round {round}, expected {expected_round}"
            ));
        }
        expected_round += 1;
        let instant = field(2)?;
        let cum = field(3)?;
        let realized = field(4)?;
        if instant < -1e-12 {
            return Err(format!("line {line}: negative instant regret {instant}"));
        }
        if !(0.0..=1.0).contains(&realized) {
            return Err(format!("line {line}: realized reward {realized} outside [0, 1]"));
        }
        prefix += instant;
        if (prefix - cum).abs() > 1e-9 {
            return Err(format!(
                "line {line}: cum_regret {cum} is not the prefix sum {prefix}"
            ));
        }
        final_cum = cum;
    }
    if expected_round == 1 {
        return Err("no data rows".to_string());
    }
    Ok(final_cum)
}

fn check_summary(
    path: &Path,
    finals: &BTreeMap<(String, u64), f64>,
) -> Result<Vec<String>, String> {
    let file = fs::File::open(path).map_err(|e| e.to_string())?;
    let mut reader = csv::ReaderBuilder::new().from_reader(file);
    let headers = reader.headers().map_err(|e| e.to_string())?;
    if headers.iter().collect::<Vec<_>>() != ["policy", "avg_final_cum_regret"] {
        // Sweep summaries carry an extra axis column and have no per-round
        // files to cross-check against.
        return Ok(Vec::new());
    }
    let mut problems = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| e.to_string())?;
        let policy = record[0].to_string();
        let listed: f64 = record[1]
            .parse()
            .map_err(|_| format!("invalid average '{}'", &record[1]))?;
        let cells: Vec<f64> = finals
            .iter()
            .filter(|((p, _), _)| *p == policy)
            .map(|(_, &v)| v)
            .collect();
        if cells.is_empty() {
            problems.push(format!(
                "summary.csv: policy {policy} has no regret files"
            ));
            continue;
        }
        let average = cells.iter().sum::<f64>() / cells.len() as f64;
        if (average - listed).abs() > 1e-9 {
            problems.push(format!(
                "summary.csv: policy {policy} average {listed} does not match regret files ({average})"
            ));
        }
    }
    Ok(problems)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::RoundPlan;
    use tempfile::tempdir;

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            environment: EnvironmentSpec::Synthetic(SyntheticParams {
                nx: 6,
                ny: 3,
                cell_size: 0.8,
                arms: 3,
                roughness: 0.6,
                base_range: (0.15, 0.85),
                base_levels: None,
            }),
            k: 1,
            rounds: 60,
            policies: vec![
                PolicyKind::Cbwp,
                PolicyKind::Rr,
                PolicyKind::Rg,
                PolicyKind::Rg2,
                PolicyKind::Gne,
            ],
            seeds: vec![1, 2],
            mobility: MobilitySpec {
                steps: 10,
                rounds_per_step: 4,
                ..MobilitySpec::default()
            },
            audit: AuditFlags::default(),
            sweep: None,
            out_dir: None,
        }
    }

    #[test]
    fn config_json_round_trips_with_defaults() {
        let text = r#"{
            "environment": { "synthetic": { "nx": 4, "ny": 2, "cell_size": 0.8, "arms": 3 } },
            "k": 1,
            "rounds": 10,
            "policies": ["cbwp", "rr"],
            "seeds": [7]
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(cfg.mobility.rounds_per_step, 20);
        assert_eq!(cfg.mobility.steps, 80);
        assert_eq!(cfg.mobility.speed, 1.0);
        assert!(!cfg.audit.any());
        match &cfg.environment {
            EnvironmentSpec::Synthetic(params) => {
                assert_eq!(params.roughness, 0.6);
                assert_eq!(params.base_range, (0.15, 0.85));
            }
            other => panic!("unexpected environment {other:?}"),
        }
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let text = r#"{
            "environment": { "synthetic": { "nx": 4, "ny": 2, "cell_size": 0.8, "arms": 3 } },
            "k": 1,
            "rounds": 10,
            "policies": ["cbwp"],
            "seeds": [7],
            "tyop": true
        }"#;
        assert!(matches!(
            ExperimentConfig::from_json(text),
            Err(HarnessError::Json(_))
        ));
    }

    #[test]
    fn config_validation_catches_contract_violations() {
        let base = tiny_config();
        let cfg = ExperimentConfig { rounds: 0, ..base.clone() };
        assert!(matches!(cfg.validate(), Err(HarnessError::NoRounds)));
        let cfg = ExperimentConfig { policies: vec![], ..base.clone() };
        assert!(matches!(cfg.validate(), Err(HarnessError::NoPolicies)));
        let cfg = ExperimentConfig {
            policies: vec![PolicyKind::Rr, PolicyKind::Rr],
            ..base.clone()
        };
        assert!(matches!(
            cfg.validate(),
            Err(HarnessError::DuplicatePolicy(PolicyKind::Rr))
        ));
        let cfg = ExperimentConfig { seeds: vec![], ..base.clone() };
        assert!(matches!(cfg.validate(), Err(HarnessError::NoSeeds)));
        let cfg = ExperimentConfig { seeds: vec![3, 3], ..base.clone() };
        assert!(matches!(cfg.validate(), Err(HarnessError::DuplicateSeed(3))));
        let cfg = ExperimentConfig { k: 3, ..base };
        assert!(matches!(
            cfg.validate(),
            Err(HarnessError::ProbeBudgetVsArms { k: 3, arms: 3 })
        ));
    }

    #[test]
    fn experiments_are_deterministic_and_account_regret() {
        let cfg = tiny_config();
        let first = run_experiment(&cfg).unwrap();
        let second = run_experiment(&cfg).unwrap();
        assert_eq!(first, second);

        assert_eq!(first.cells().count(), 10);
        for cell in first.cells() {
            assert_eq!(cell.rounds.len(), 60);
            let mut prefix = 0.0;
            for m in &cell.rounds {
                assert!(m.instant_regret >= -1e-12);
                prefix += m.instant_regret;
                assert!((prefix - m.cum_regret).abs() < 1e-12);
                assert!((0.0..=1.0).contains(&m.realized_reward));
            }
            assert_eq!(cell.final_cum_regret, prefix);
            assert!(cell.audit.is_none());
        }
    }

    #[test]
    fn single_cell_learning_drives_regret_down() {
        // One cell means one context, so this is a plain bandit: with means
        // this far apart the index policy must stop paying regret.
        let grid = MuGrid::new(1, 1, 1.0, 3, vec![0.9, 0.5, 0.2]).unwrap();
        let trace = vec![grid.cell_center(0, 0); 3000];
        let result = run_cell(
            &grid,
            &trace,
            PolicyKind::Cbwp,
            MasterSeed(5),
            1,
            AuditFlags::default(),
        )
        .unwrap();
        let tail: f64 = result.rounds[2500..]
            .iter()
            .map(|m| m.instant_regret)
            .sum::<f64>()
            / 500.0;
        assert!(tail < 0.02, "tail regret {tail}");
        let oracle = bernoulli_optimal(&[0.9, 0.5, 0.2], 1).unwrap().value;
        assert!((oracle - 0.95).abs() < 1e-12);
    }

    #[test]
    fn audited_runs_attach_reports() {
        let mut cfg = tiny_config();
        cfg.policies = vec![PolicyKind::Cbwp];
        cfg.seeds = vec![4];
        cfg.rounds = 400;
        cfg.audit = AuditFlags {
            clean_run: true,
            invariants: true,
            selection_bound: true,
        };
        let table = run_experiment(&cfg).unwrap();
        let cell = table.cell(PolicyKind::Cbwp, 4).unwrap();
        let report = cell.audit.as_ref().unwrap();
        assert!(report.clean_run);
        assert!(report.gap_violations.is_empty());
        assert!(report.activation_violations.is_empty());
        assert!(report.selection_bound_ok);
        assert!(report.cover_ok);
        assert!(report.packing_ok);
        assert!(report.parent_rule_ok);
        assert!(report.ball_count >= 3);
        assert!(report.concentration_checks > 0);

        let mut text = Vec::new();
        report.write_text(&mut text).unwrap();
        let text = String::from_utf8(text).unwrap();
        assert!(text.contains("clean_run=true"));
        assert!(text.contains("policy=cbwp seed=4"));
    }

    #[test]
    fn corrupt_histories_are_rejected_by_replay() {
        let grid = MuGrid::new(1, 1, 1.0, 2, vec![0.6, 0.4]).unwrap();
        let trace = vec![grid.cell_center(0, 0); 30];
        let horizon = HorizonParams::new(30).unwrap();
        let space = grid.similarity_space();
        let mut sets: Vec<ArmBallSet> = (0..2)
            .map(|arm| ArmBallSet::new(arm, space, trace[0].clone()).unwrap())
            .collect();
        let mut sampler = GridSampler::new(&grid, MasterSeed(1).stream(StreamId::Reward));
        let mut records = Vec::new();
        for round in 1..=30u64 {
            let plan: RoundPlan = cbwp_plan(&sets, &trace[0], 1, horizon).unwrap();
            let values = RoundValues {
                expected_reward: 0.0,
                oracle_value: 0.0,
            };
            let log =
                execute_round(&plan, &mut sampler, &mut sets, horizon, round, values).unwrap();
            records.push(RoundRecord {
                round,
                cell: (0, 0),
                probe_order: log.plan.probe_order.clone(),
                selected_balls: log.plan.selected_balls.clone(),
                indices_snapshot: log.plan.indices_snapshot.clone(),
                observations: log.observations.clone(),
                played: log.played,
                realized_reward: log.realized_reward,
            });
        }
        let mut history = RunHistory {
            policy: PolicyKind::Cbwp,
            seed: 1,
            k: 1,
            arms: 2,
            rounds: 30,
            root_center: trace[0].clone(),
            records,
        };
        assert!(audit_clean_run(&history, &grid).is_ok());

        // Rewriting an observation shifts a ball's average, so the next
        // round's recorded index snapshot no longer matches the replay.
        for record in history.records.iter_mut() {
            for obs in record.observations.iter_mut() {
                *obs = 1.0 - *obs;
            }
        }
        let outcome = audit_clean_run(&history, &grid);
        assert!(matches!(
            outcome,
            Err(HarnessError::ReplayDivergence { .. })
        ));
    }

    #[test]
    fn emitted_artifacts_pass_their_own_audit() {
        let mut cfg = tiny_config();
        cfg.rounds = 40;
        cfg.audit = AuditFlags {
            clean_run: true,
            invariants: true,
            selection_bound: true,
        };
        let table = run_experiment(&cfg).unwrap();
        let dir = tempdir().unwrap();
        emit_outputs(&table, &cfg, dir.path()).unwrap();

        let mut names: Vec<String> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        assert!(names.contains(&"summary.csv".to_string()));
        assert!(names.contains(&"manifest.json".to_string()));
        assert!(names.contains(&"regret_cbwp_1.csv".to_string()));
        assert!(names.contains(&"audit_rr_2.txt".to_string()));
        assert_eq!(names.len(), 2 + 10 + 10);

        let problems = audit_artifacts(dir.path()).unwrap();
        assert!(problems.is_empty(), "problems: {problems:?}");

        // Re-emitting produces byte-identical files.
        let again = tempdir().unwrap();
        emit_outputs(&run_experiment(&cfg).unwrap(), &cfg, again.path()).unwrap();
        for name in &names {
            let a = fs::read(dir.path().join(name)).unwrap();
            let b = fs::read(again.path().join(name)).unwrap();
            assert_eq!(a, b, "file {name} differs");
        }
    }

    #[test]
    fn artifact_audit_flags_tampering() {
        let mut cfg = tiny_config();
        cfg.rounds = 40;
        let table = run_experiment(&cfg).unwrap();
        let dir = tempdir().unwrap();
        emit_outputs(&table, &cfg, dir.path()).unwrap();

        let path = dir.path().join("regret_cbwp_1.csv");
        let text = fs::read_to_string(&path).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        let replaced = lines[1].to_string();
        let mut fields: Vec<&str> = replaced.split(',').collect();
        fields[3] = "999.0";
        let replaced = fields.join(",");
        lines[1] = &replaced;
        fs::write(&path, lines.join("\n") + "\n").unwrap();

        let problems = audit_artifacts(dir.path()).unwrap();
        assert!(
            problems.iter().any(|p| p.contains("regret_cbwp_1.csv")),
            "problems: {problems:?}"
        );
    }

    #[test]
    fn sweeps_cover_requested_values() {
        let mut cfg = tiny_config();
        cfg.rounds = 40;
        cfg.policies = vec![PolicyKind::Cbwp, PolicyKind::Rr];
        cfg.seeds = vec![1];
        cfg.environment = EnvironmentSpec::Synthetic(SyntheticParams {
            nx: 4,
            ny: 2,
            cell_size: 0.8,
            arms: 5,
            roughness: 0.6,
            base_range: (0.15, 0.85),
            base_levels: None,
        });
        cfg.sweep = Some(SweepSpec {
            k_values: vec![1, 2],
            n_values: vec![3, 4],
            subsets_per_n: 2,
        });

        let by_k = run_sweep(&cfg, SweepAxis::ProbeBudget).unwrap();
        assert_eq!(by_k.values(), vec![1, 2]);
        assert_eq!(by_k.points.len(), 2);
        assert!(by_k.averaged_final_regret(PolicyKind::Cbwp, 1).is_some());

        let by_n = run_sweep(&cfg, SweepAxis::ArmCount).unwrap();
        assert_eq!(by_n.values(), vec![3, 4]);
        assert_eq!(by_n.points.len(), 4);
        for point in &by_n.points {
            let subset = point.subset.as_ref().unwrap();
            assert_eq!(subset.len(), point.value);
            assert!(subset.iter().all(|&a| a < 5));
        }

        let dir = tempdir().unwrap();
        emit_sweep_outputs(&by_n, &cfg, dir.path()).unwrap();
        let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert!(summary.starts_with("policy,n,avg_final_cum_regret\n"));
        assert_eq!(summary.lines().count(), 1 + 2 * 2);
        let problems = audit_artifacts(dir.path()).unwrap();
        assert!(problems.is_empty(), "problems: {problems:?}");
    }

    #[test]
    fn sweep_contract_errors_are_reported() {
        let mut cfg = tiny_config();
        cfg.sweep = None;
        assert!(matches!(
            run_sweep(&cfg, SweepAxis::ProbeBudget),
            Err(HarnessError::EmptySweep { axis: "k" })
        ));
        cfg.sweep = Some(SweepSpec {
            k_values: vec![],
            n_values: vec![2],
            subsets_per_n: 1,
        });
        cfg.k = 2;
        assert!(matches!(
            run_sweep(&cfg, SweepAxis::ArmCount),
            Err(HarnessError::ProbeBudgetVsArms { k: 2, arms: 2 })
        ));
    }

    #[test]
    fn averaged_curves_read_prefixes() {
        let mut cfg = tiny_config();
        cfg.policies = vec![PolicyKind::Rr];
        cfg.rounds = 20;
        let table = run_experiment(&cfg).unwrap();
        let early = table
            .averaged_cum_regret_at(PolicyKind::Rr, 5)
            .unwrap();
        let late = table.averaged_final_regret(PolicyKind::Rr).unwrap();
        assert!(early <= late + 1e-12);
        assert!(table.averaged_final_regret(PolicyKind::Gne).is_none());
    }
}
