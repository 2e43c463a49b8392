//! Round plans and execution for the probing policies.
//!
//! Each round a policy commits a plan against the current ball sets: which
//! ball represents each arm, which `K` arms to probe in what order, and
//! which arm to fall back to if every probe comes up empty. Execution then
//! samples observations, stops early on a full reward, records every
//! observation on the selected balls, and plays an arm.
//!
//! Policies differ only in how the plan is built:
//!
//! - `cbwp`: probe the top-`K` arms by ball index, play by index.
//! - `rr`: probe a uniform random subset, play a uniform random arm.
//! - `rg`: probe a uniform random subset, play by index.
//! - `rg2`: probe a uniform random subset, play by ball average reward.
//! - `gne`: probe and play by ball average reward (no exploration terms).

use crate::metric::Context;
use crate::zooming::{ArmBallSet, ArmId, BallId, HorizonParams, SelectionRule, ZoomingError};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while planning or executing a round.
#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("at least one arm is required")]
    NoArms,
    #[error("probe budget {k} must satisfy 1 <= k < {arms}")]
    InvalidProbeBudget { k: usize, arms: usize },
    #[error("plan covers {plan} arms but the state has {arms}")]
    ArmCountMismatch { plan: usize, arms: usize },
    #[error("arm {arm} out of range for {arms} arms")]
    UnknownArm { arm: ArmId, arms: usize },
    #[error("arm {0} appears more than once in the probe order")]
    DuplicateProbe(ArmId),
    #[error("sampler produced reward {0} outside [0, 1]")]
    SamplerOutOfRange(f64),
    #[error("{0} is not a baseline policy")]
    NotABaseline(PolicyKind),
    #[error(transparent)]
    Zooming(#[from] ZoomingError),
}

/// The policy variants the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Cbwp,
    Rr,
    Rg,
    Rg2,
    Gne,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::Cbwp,
        PolicyKind::Rr,
        PolicyKind::Rg,
        PolicyKind::Rg2,
        PolicyKind::Gne,
    ];

    /// Lowercase tag used in file names and configs.
    pub fn tag(&self) -> &'static str {
        match self {
            PolicyKind::Cbwp => "cbwp",
            PolicyKind::Rr => "rr",
            PolicyKind::Rg => "rg",
            PolicyKind::Rg2 => "rg2",
            PolicyKind::Gne => "gne",
        }
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cbwp" => Ok(PolicyKind::Cbwp),
            "rr" => Ok(PolicyKind::Rr),
            "rg" => Ok(PolicyKind::Rg),
            "rg2" => Ok(PolicyKind::Rg2),
            "gne" => Ok(PolicyKind::Gne),
            other => Err(format!("unknown policy '{other}'")),
        }
    }
}

/// A committed decision for one round, fixed before any reward is drawn.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundPlan {
    pub context: Context,
    /// Arms to probe, in probing order; exactly `K` distinct arms.
    pub probe_order: Vec<ArmId>,
    /// Arm played if every probe observes 0.
    pub allzero_play: ArmId,
    /// Per-arm play-stage value captured at planning time: the ball index
    /// for index-driven policies, the ball average for greedy ones, zeros
    /// for the fully random baseline.
    pub indices_snapshot: Vec<f64>,
    /// Ball selected for each arm at planning time; observations recorded
    /// this round land on these balls.
    pub selected_balls: Vec<BallId>,
}

/// Everything that happened in one executed round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundLog {
    pub round: u64,
    pub plan: RoundPlan,
    /// Observed rewards for the probed prefix (truncated at the first 1).
    pub observations: Vec<f64>,
    pub played: ArmId,
    pub realized_reward: f64,
    /// Expected reward of the committed plan.
    pub expected_reward: f64,
    /// Optimal expected reward at this context.
    pub oracle_value: f64,
    /// `oracle_value - expected_reward`; never meaningfully negative.
    pub instant_regret: f64,
    /// True when the played arm reused a probe observation below 1 (the
    /// played arm had already been probed, so no second update happened).
    pub replayed_probe: bool,
}

/// Per-round scores the harness computes from the reward model before
/// execution; carried into the log for regret accounting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundValues {
    pub expected_reward: f64,
    pub oracle_value: f64,
}

/// Source of realized rewards during execution. One call consumes one draw.
pub trait RewardSampler {
    fn sample(&mut self, arm: ArmId, x: &Context) -> f64;
}

fn check_budget(arms: usize, k: usize) -> Result<(), PolicyError> {
    if arms == 0 {
        return Err(PolicyError::NoArms);
    }
    if k == 0 || k >= arms {
        return Err(PolicyError::InvalidProbeBudget { k, arms });
    }
    Ok(())
}

/// Arms ranked by descending value, ties to the smaller arm id; the probe
/// order is the first `k`.
fn top_k_by_value(values: &[f64], k: usize) -> Vec<ArmId> {
    let mut order: Vec<ArmId> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap().then(a.cmp(&b)));
    order.truncate(k);
    order
}

/// Play fallback for the all-zero branch: probed arms are worth their
/// observed 0, unprobed arms their snapshot value; ties to the smaller id.
fn fallback_play(probe_order: &[ArmId], values: &[f64]) -> ArmId {
    let mut best_arm = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (arm, &value) in values.iter().enumerate() {
        let effective = if probe_order.contains(&arm) { 0.0 } else { value };
        if effective > best_value {
            best_value = effective;
            best_arm = arm;
        }
    }
    best_arm
}

/// Captures one selection per arm and the play-stage value the policy kind
/// assigns to it.
pub(crate) fn snapshot_selections(
    sets: &[ArmBallSet],
    x: &Context,
    horizon: HorizonParams,
    kind: PolicyKind,
) -> Result<(Vec<BallId>, Vec<f64>), PolicyError> {
    let mut balls = Vec::with_capacity(sets.len());
    let mut values = Vec::with_capacity(sets.len());
    for set in sets {
        let rule = match kind {
            PolicyKind::Gne => SelectionRule::AverageReward,
            _ => SelectionRule::Index,
        };
        let selection = set.select(x, horizon, rule)?;
        let value = match kind {
            PolicyKind::Cbwp | PolicyKind::Rg => selection.score,
            PolicyKind::Gne => selection.score,
            PolicyKind::Rg2 => set.ball(selection.ball)?.average_reward(),
            PolicyKind::Rr => 0.0,
        };
        balls.push(selection.ball);
        values.push(value);
    }
    Ok((balls, values))
}

/// Plans one round of the index policy: select a ball per arm, probe the
/// top-`k` arms by index, and commit the all-zero fallback.
///
/// # Example
///
/// ```
/// use cbwp::metric::{Context, SimilaritySpace};
/// use cbwp::policy::cbwp_plan;
/// use cbwp::zooming::{ArmBallSet, HorizonParams};
///
/// let space = SimilaritySpace::new(2, 10.0).unwrap();
/// let horizon = HorizonParams::new(100).unwrap();
/// let origin = Context::xy(0.0, 0.0).unwrap();
/// let sets: Vec<ArmBallSet> = (0..3)
///     .map(|arm| ArmBallSet::new(arm, space, origin.clone()).unwrap())
///     .collect();
///
/// // Fresh sets tie on every index, so ties resolve to the smallest ids.
/// let plan = cbwp_plan(&sets, &origin, 2, horizon).unwrap();
/// assert_eq!(plan.probe_order, vec![0, 1]);
/// assert_eq!(plan.allzero_play, 2);
/// ```
pub fn cbwp_plan(
    sets: &[ArmBallSet],
    x: &Context,
    k: usize,
    horizon: HorizonParams,
) -> Result<RoundPlan, PolicyError> {
    check_budget(sets.len(), k)?;
    let (selected_balls, values) = snapshot_selections(sets, x, horizon, PolicyKind::Cbwp)?;
    let probe_order = top_k_by_value(&values, k);
    let allzero_play = fallback_play(&probe_order, &values);
    Ok(RoundPlan {
        context: x.clone(),
        probe_order,
        allzero_play,
        indices_snapshot: values,
        selected_balls,
    })
}

/// Plans one round of a baseline. Random baselines draw from `rng` in a
/// fixed order: first the probe subset (a partial shuffle), then, for the
/// fully random baseline only, the fallback play arm.
pub fn baseline_plan<R: Rng>(
    kind: PolicyKind,
    sets: &[ArmBallSet],
    x: &Context,
    k: usize,
    horizon: HorizonParams,
    rng: &mut R,
) -> Result<RoundPlan, PolicyError> {
    if kind == PolicyKind::Cbwp {
        return Err(PolicyError::NotABaseline(kind));
    }
    check_budget(sets.len(), k)?;
    let arms = sets.len();
    let (selected_balls, values) = snapshot_selections(sets, x, horizon, kind)?;

    let probe_order = match kind {
        PolicyKind::Gne => top_k_by_value(&values, k),
        _ => {
            let mut pool: Vec<ArmId> = (0..arms).collect();
            for i in 0..k {
                let j = rng.random_range(i..arms);
                pool.swap(i, j);
            }
            pool.truncate(k);
            pool
        }
    };
    let allzero_play = match kind {
        PolicyKind::Rr => rng.random_range(0..arms),
        _ => fallback_play(&probe_order, &values),
    };
    Ok(RoundPlan {
        context: x.clone(),
        probe_order,
        allzero_play,
        indices_snapshot: values,
        selected_balls,
    })
}

fn check_plan(plan: &RoundPlan, sets: &[ArmBallSet]) -> Result<(), PolicyError> {
    let arms = sets.len();
    if arms == 0 {
        return Err(PolicyError::NoArms);
    }
    if plan.indices_snapshot.len() != arms || plan.selected_balls.len() != arms {
        return Err(PolicyError::ArmCountMismatch {
            plan: plan.indices_snapshot.len().max(plan.selected_balls.len()),
            arms,
        });
    }
    for (i, &arm) in plan.probe_order.iter().enumerate() {
        if arm >= arms {
            return Err(PolicyError::UnknownArm { arm, arms });
        }
        if plan.probe_order[..i].contains(&arm) {
            return Err(PolicyError::DuplicateProbe(arm));
        }
    }
    if plan.allzero_play >= arms {
        return Err(PolicyError::UnknownArm {
            arm: plan.allzero_play,
            arms,
        });
    }
    Ok(())
}

fn checked_sample(
    sampler: &mut dyn RewardSampler,
    arm: ArmId,
    x: &Context,
) -> Result<f64, PolicyError> {
    let obs = sampler.sample(arm, x);
    if !obs.is_finite() || !(0.0..=1.0).contains(&obs) {
        return Err(PolicyError::SamplerOutOfRange(obs));
    }
    Ok(obs)
}

/// Executes a committed plan against the ball sets it was built from.
///
/// Probes run in order; each observation is recorded on that arm's selected
/// ball as it arrives, and probing stops early when an observation is
/// exactly 1 (that arm is then played for the same reward, with no second
/// update). If all probes observe 0 the committed fallback arm is played:
/// sampled and recorded if it was not probed, else it replays its observed
/// 0 and the round is flagged. Observations strictly between 0 and 1 never
/// stop probing; the play then maximizes observed values against snapshot
/// values.
pub fn execute_round(
    plan: &RoundPlan,
    sampler: &mut dyn RewardSampler,
    sets: &mut [ArmBallSet],
    horizon: HorizonParams,
    round: u64,
    values: RoundValues,
) -> Result<RoundLog, PolicyError> {
    check_plan(plan, sets)?;
    let x = &plan.context;

    let mut observations = Vec::with_capacity(plan.probe_order.len());
    let mut winner = None;
    for &arm in &plan.probe_order {
        let obs = checked_sample(sampler, arm, x)?;
        observations.push(obs);
        sets[arm].record_and_maybe_activate(plan.selected_balls[arm], x, obs, horizon, round)?;
        if obs == 1.0 {
            winner = Some(arm);
            break;
        }
    }

    let (played, realized_reward, replayed_probe) = if let Some(arm) = winner {
        (arm, 1.0, false)
    } else {
        let played = if observations.iter().all(|&o| o == 0.0) {
            plan.allzero_play
        } else {
            // Some observation landed strictly inside (0, 1): rank probed
            // arms by what they showed and unprobed arms by their snapshot.
            let mut best_arm = 0;
            let mut best_value = f64::NEG_INFINITY;
            for arm in 0..sets.len() {
                let value = match plan.probe_order.iter().position(|&a| a == arm) {
                    Some(i) => observations[i],
                    None => plan.indices_snapshot[arm],
                };
                if value > best_value {
                    best_value = value;
                    best_arm = arm;
                }
            }
            best_arm
        };
        match plan.probe_order.iter().position(|&a| a == played) {
            Some(i) => (played, observations[i], true),
            None => {
                let obs = checked_sample(sampler, played, x)?;
                sets[played].record_and_maybe_activate(
                    plan.selected_balls[played],
                    x,
                    obs,
                    horizon,
                    round,
                )?;
                (played, obs, false)
            }
        }
    };

    Ok(RoundLog {
        round,
        plan: plan.clone(),
        observations,
        played,
        realized_reward,
        expected_reward: values.expected_reward,
        oracle_value: values.oracle_value,
        instant_regret: values.oracle_value - values.expected_reward,
        replayed_probe,
    })
}
