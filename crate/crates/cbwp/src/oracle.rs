//! Offline solvers for the optimal probe-then-play value.
//!
//! Given the per-arm reward distributions at a fixed context, the offline
//! problem is: adaptively probe `K` distinct arms, observing each realized
//! reward immediately, then play one arm; a probed arm played afterwards
//! yields exactly its observed reward. Three solvers are provided:
//!
//! - [`solve_full_mdp`] walks every probe history (ordered arms plus their
//!   full observation vectors).
//! - [`solve_compressed_mdp`] collapses histories to (probed set, best
//!   observation so far), which preserves the optimal value because the
//!   final play only ever uses the best observation.
//! - [`bernoulli_optimal`] is the closed form for 0/1 rewards: probe any
//!   `K` of the top `K+1` means and play the last, which succeeds unless
//!   all `K+1` fail.
//!
//! [`plan_expected_reward`] scores a committed probe/play plan under
//! Bernoulli rewards; the harness uses it for regret accounting.

use crate::policy::RoundPlan;
use crate::zooming::ArmId;
use std::collections::HashMap;
use thiserror::Error;

/// Guard against runaway probe-history enumeration; the solvers are meant
/// for desk-scale instances (a handful of arms, small probe budgets).
pub const DEFAULT_STATE_CAP: u64 = 2_000_000;

/// Most arms the compressed solver can index in its set bitmask.
pub const MAX_ARMS: usize = 64;

/// Errors raised by distribution construction and the solvers.
#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("support and probabilities must be nonempty and equally long (got {support} and {probs})")]
    MismatchedLengths { support: usize, probs: usize },
    #[error("support value {0} outside [0, 1]")]
    SupportOutOfRange(f64),
    #[error("support values must be strictly increasing")]
    SupportNotIncreasing,
    #[error("probability {0} is negative or not finite")]
    InvalidProbability(f64),
    #[error("probabilities sum to {0}, expected 1 within 1e-12")]
    ProbabilitySum(f64),
    #[error("mean reward {0} outside [0, 1]")]
    MeanOutOfRange(f64),
    #[error("at least one arm is required")]
    NoArms,
    #[error("probe budget {k} must be smaller than the number of arms {arms}")]
    ProbeBudgetTooLarge { k: usize, arms: usize },
    #[error("solver supports at most {max} arms, got {arms}")]
    TooManyArms { arms: usize, max: usize },
    #[error("projected state count {states} exceeds the cap {cap}")]
    StateCapExceeded { states: u128, cap: u64 },
    #[error("arm {arm} out of range for {arms} arms")]
    UnknownArm { arm: ArmId, arms: usize },
    #[error("arm {0} appears more than once in a probe set")]
    DuplicateProbe(ArmId),
    #[error("observation {0} outside [0, 1]")]
    ObservationOutOfRange(f64),
}

/// Finite reward distribution of one arm at one context.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    support: Vec<f64>,
    probs: Vec<f64>,
    mean: f64,
}

impl DiscreteDistribution {
    /// Builds a distribution over `support` (strictly increasing values in
    /// `[0, 1]`) with the given probabilities (nonnegative, summing to 1
    /// within `1e-12`).
    pub fn new(support: Vec<f64>, probs: Vec<f64>) -> Result<Self, OracleError> {
        if support.is_empty() || support.len() != probs.len() {
            return Err(OracleError::MismatchedLengths {
                support: support.len(),
                probs: probs.len(),
            });
        }
        for &v in &support {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(OracleError::SupportOutOfRange(v));
            }
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(OracleError::SupportNotIncreasing);
        }
        let mut sum = 0.0;
        for &p in &probs {
            if !p.is_finite() || p < 0.0 {
                return Err(OracleError::InvalidProbability(p));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > 1e-12 {
            return Err(OracleError::ProbabilitySum(sum));
        }
        let mean = support.iter().zip(&probs).map(|(v, p)| v * p).sum();
        Ok(Self { support, probs, mean })
    }

    /// Two-point 0/1 distribution with the given success probability; the
    /// degenerate means collapse to a point mass.
    pub fn bernoulli(mean: f64) -> Result<Self, OracleError> {
        if !mean.is_finite() || !(0.0..=1.0).contains(&mean) {
            return Err(OracleError::MeanOutOfRange(mean));
        }
        if mean == 0.0 {
            Self::new(vec![0.0], vec![1.0])
        } else if mean == 1.0 {
            Self::new(vec![1.0], vec![1.0])
        } else {
            Self::new(vec![0.0, 1.0], vec![1.0 - mean, mean])
        }
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// `(value, probability)` pairs, in support order.
    pub fn outcomes(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.support.iter().copied().zip(self.probs.iter().copied())
    }
}

/// A probe history: which arms were probed, in order, and what each showed.
#[derive(Debug, Clone, PartialEq)]
pub struct FullState {
    probed: Vec<ArmId>,
    observations: Vec<f64>,
}

impl FullState {
    pub fn empty() -> Self {
        Self {
            probed: Vec::new(),
            observations: Vec::new(),
        }
    }

    pub fn new(probed: Vec<ArmId>, observations: Vec<f64>) -> Result<Self, OracleError> {
        if probed.len() != observations.len() {
            return Err(OracleError::MismatchedLengths {
                support: probed.len(),
                probs: observations.len(),
            });
        }
        for (i, &arm) in probed.iter().enumerate() {
            if probed[..i].contains(&arm) {
                return Err(OracleError::DuplicateProbe(arm));
            }
        }
        for &obs in &observations {
            if !obs.is_finite() || !(0.0..=1.0).contains(&obs) {
                return Err(OracleError::ObservationOutOfRange(obs));
            }
        }
        Ok(Self { probed, observations })
    }

    pub fn probed(&self) -> &[ArmId] {
        &self.probed
    }

    pub fn observations(&self) -> &[f64] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.probed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probed.is_empty()
    }

    fn push(&mut self, arm: ArmId, obs: f64) {
        self.probed.push(arm);
        self.observations.push(obs);
    }

    fn pop(&mut self) {
        self.probed.pop();
        self.observations.pop();
    }
}

/// A compressed probe state: the probed set and the best observation so
/// far. The empty state carries `max_observation = 0`, which is harmless
/// because rewards are nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedState {
    probed: Vec<ArmId>,
    max_observation: f64,
}

impl CompressedState {
    pub fn empty() -> Self {
        Self {
            probed: Vec::new(),
            max_observation: 0.0,
        }
    }

    pub fn new(mut probed: Vec<ArmId>, max_observation: f64) -> Result<Self, OracleError> {
        if !max_observation.is_finite() || !(0.0..=1.0).contains(&max_observation) {
            return Err(OracleError::ObservationOutOfRange(max_observation));
        }
        probed.sort_unstable();
        if let Some(w) = probed.windows(2).find(|w| w[0] == w[1]) {
            return Err(OracleError::DuplicateProbe(w[0]));
        }
        Ok(Self { probed, max_observation })
    }

    pub fn probed(&self) -> &[ArmId] {
        &self.probed
    }

    pub fn max_observation(&self) -> f64 {
        self.max_observation
    }
}

/// Anything that can stand in for a probe state when valuing the final
/// play: the probed set plus the best observation it holds.
pub trait ProbeState {
    fn is_probed(&self, arm: ArmId) -> bool;
    /// Best observed reward, `None` before any probe.
    fn best_observation(&self) -> Option<f64>;
}

impl ProbeState for FullState {
    fn is_probed(&self, arm: ArmId) -> bool {
        self.probed.contains(&arm)
    }

    fn best_observation(&self) -> Option<f64> {
        self.observations.iter().copied().reduce(f64::max)
    }
}

impl ProbeState for CompressedState {
    fn is_probed(&self, arm: ArmId) -> bool {
        self.probed.binary_search(&arm).is_ok()
    }

    fn best_observation(&self) -> Option<f64> {
        if self.probed.is_empty() {
            None
        } else {
            Some(self.max_observation)
        }
    }
}

/// Value of an optimal play from a probe state: the better of the best
/// observation and the best unprobed mean. Playing a probed arm can never
/// beat replaying its own best observation, so nothing else matters.
pub fn optimal_play_value<S: ProbeState>(
    state: &S,
    dists: &[DiscreteDistribution],
) -> Result<f64, OracleError> {
    if dists.is_empty() {
        return Err(OracleError::NoArms);
    }
    let mut best = f64::NEG_INFINITY;
    if let Some(obs) = state.best_observation() {
        best = obs;
    }
    for (arm, dist) in dists.iter().enumerate() {
        if !state.is_probed(arm) && dist.mean() > best {
            best = dist.mean();
        }
    }
    Ok(best)
}

/// Result of an offline solve.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Expected reward of the optimal probe-then-play strategy.
    pub value: f64,
    /// First probe of an optimal strategy (ties to the smallest arm id);
    /// `None` when the budget is zero.
    pub best_first_probe: Option<ArmId>,
    /// The probe set, when the optimal strategy is a fixed set (Bernoulli
    /// closed form); adaptive solvers leave this empty.
    pub chosen_set: Option<Vec<ArmId>>,
}

fn check_instance(dists: &[DiscreteDistribution], k: usize) -> Result<(), OracleError> {
    if dists.is_empty() {
        return Err(OracleError::NoArms);
    }
    if k >= dists.len() {
        return Err(OracleError::ProbeBudgetTooLarge { k, arms: dists.len() });
    }
    Ok(())
}

fn check_state_cap(dists: &[DiscreteDistribution], k: usize) -> Result<(), OracleError> {
    let max_support = dists.iter().map(|d| d.support.len()).max().unwrap_or(0) as u128;
    let mut states: u128 = 1;
    for i in 0..k {
        states = states.saturating_mul((dists.len() - i) as u128 * max_support);
        if states > DEFAULT_STATE_CAP as u128 {
            return Err(OracleError::StateCapExceeded {
                states,
                cap: DEFAULT_STATE_CAP,
            });
        }
    }
    Ok(())
}

/// Exact optimal value by backward induction over full probe histories.
/// Probes exactly `k` arms; stopping early is never strictly better because
/// an extra observation can only refine the final play.
pub fn solve_full_mdp(
    dists: &[DiscreteDistribution],
    k: usize,
) -> Result<OracleResult, OracleError> {
    check_instance(dists, k)?;
    check_state_cap(dists, k)?;
    let mut state = FullState::empty();
    let (value, best_first_probe) = full_value(&mut state, dists, k)?;
    Ok(OracleResult {
        value,
        best_first_probe,
        chosen_set: None,
    })
}

fn full_value(
    state: &mut FullState,
    dists: &[DiscreteDistribution],
    k: usize,
) -> Result<(f64, Option<ArmId>), OracleError> {
    if state.len() == k {
        return Ok((optimal_play_value(state, dists)?, None));
    }
    let mut best = f64::NEG_INFINITY;
    let mut best_arm = None;
    for arm in 0..dists.len() {
        if state.is_probed(arm) {
            continue;
        }
        let mut expectation = 0.0;
        for (value, prob) in dists[arm].outcomes() {
            if prob == 0.0 {
                continue;
            }
            state.push(arm, value);
            expectation += prob * full_value(state, dists, k)?.0;
            state.pop();
        }
        if expectation > best {
            best = expectation;
            best_arm = Some(arm);
        }
    }
    Ok((best, best_arm))
}

/// Same optimal value as [`solve_full_mdp`], computed on compressed states
/// (probed set, best observation) with memoization.
pub fn solve_compressed_mdp(
    dists: &[DiscreteDistribution],
    k: usize,
) -> Result<OracleResult, OracleError> {
    check_instance(dists, k)?;
    if dists.len() > MAX_ARMS {
        return Err(OracleError::TooManyArms {
            arms: dists.len(),
            max: MAX_ARMS,
        });
    }

    let mut memo: HashMap<(u64, u64), f64> = HashMap::new();
    let mut best = f64::NEG_INFINITY;
    let mut best_arm = None;
    if k == 0 {
        best = play_value_masked(0, 0.0, dists);
    }
    for arm in 0..dists.len() {
        if k == 0 {
            break;
        }
        let mut expectation = 0.0;
        for (value, prob) in dists[arm].outcomes() {
            if prob == 0.0 {
                continue;
            }
            expectation += prob * compressed_value(1 << arm, value, dists, k, &mut memo);
        }
        if expectation > best {
            best = expectation;
            best_arm = Some(arm);
        }
    }
    Ok(OracleResult {
        value: best,
        best_first_probe: best_arm,
        chosen_set: None,
    })
}

fn play_value_masked(mask: u64, max_obs: f64, dists: &[DiscreteDistribution]) -> f64 {
    let mut best = if mask == 0 { f64::NEG_INFINITY } else { max_obs };
    for (arm, dist) in dists.iter().enumerate() {
        if mask & (1 << arm) == 0 && dist.mean() > best {
            best = dist.mean();
        }
    }
    best
}

fn compressed_value(
    mask: u64,
    max_obs: f64,
    dists: &[DiscreteDistribution],
    k: usize,
    memo: &mut HashMap<(u64, u64), f64>,
) -> f64 {
    if mask.count_ones() as usize == k {
        return play_value_masked(mask, max_obs, dists);
    }
    let key = (mask, max_obs.to_bits());
    if let Some(&v) = memo.get(&key) {
        return v;
    }
    let mut best = f64::NEG_INFINITY;
    for arm in 0..dists.len() {
        if mask & (1 << arm) != 0 {
            continue;
        }
        let mut expectation = 0.0;
        for (value, prob) in dists[arm].outcomes() {
            if prob == 0.0 {
                continue;
            }
            expectation += prob * compressed_value(mask | (1 << arm), max_obs.max(value), dists, k, memo);
        }
        if expectation > best {
            best = expectation;
        }
    }
    memo.insert(key, best);
    best
}

/// Closed form for Bernoulli arms: take the `k + 1` largest means (ties to
/// the smallest arm id); the optimal strategy probes any `k` of them and
/// plays the remaining one if every probe fails, so
/// `value = 1 - prod (1 - mu_i)` over the chosen set, in any order.
pub fn bernoulli_optimal(mu: &[f64], k: usize) -> Result<OracleResult, OracleError> {
    if mu.is_empty() {
        return Err(OracleError::NoArms);
    }
    if k >= mu.len() {
        return Err(OracleError::ProbeBudgetTooLarge { k, arms: mu.len() });
    }
    for &m in mu {
        if !m.is_finite() || !(0.0..=1.0).contains(&m) {
            return Err(OracleError::MeanOutOfRange(m));
        }
    }
    let mut order: Vec<ArmId> = (0..mu.len()).collect();
    order.sort_by(|&a, &b| mu[b].partial_cmp(&mu[a]).unwrap().then(a.cmp(&b)));
    let chosen = &order[..k + 1];
    let miss: f64 = chosen.iter().map(|&a| 1.0 - mu[a]).product();
    let mut set: Vec<ArmId> = chosen.to_vec();
    set.sort_unstable();
    Ok(OracleResult {
        value: 1.0 - miss,
        best_first_probe: Some(chosen[0]),
        chosen_set: Some(set),
    })
}

/// Expected reward of a committed plan under Bernoulli arms with means
/// `mu`: probes run in order and stop at the first success, which is then
/// played for reward 1; if every probe fails the fallback arm is played
/// (worth its mean if unprobed, or exactly its observed 0 if probed).
pub fn plan_expected_reward(plan: &RoundPlan, mu: &[f64]) -> Result<f64, OracleError> {
    probe_play_expected_reward(&plan.probe_order, plan.allzero_play, mu)
}

/// [`plan_expected_reward`] on bare parts, for callers without a full plan.
pub fn probe_play_expected_reward(
    probes: &[ArmId],
    play: ArmId,
    mu: &[f64],
) -> Result<f64, OracleError> {
    for &m in mu {
        if !m.is_finite() || !(0.0..=1.0).contains(&m) {
            return Err(OracleError::MeanOutOfRange(m));
        }
    }
    let arms = mu.len();
    if play >= arms {
        return Err(OracleError::UnknownArm { arm: play, arms });
    }
    let mut value = 0.0;
    let mut reach = 1.0;
    for (i, &arm) in probes.iter().enumerate() {
        if arm >= arms {
            return Err(OracleError::UnknownArm { arm, arms });
        }
        if probes[..i].contains(&arm) {
            return Err(OracleError::DuplicateProbe(arm));
        }
        value += reach * mu[arm];
        reach *= 1.0 - mu[arm];
    }
    if !probes.contains(&play) {
        value += reach * mu[play];
    }
    Ok(value)
}
