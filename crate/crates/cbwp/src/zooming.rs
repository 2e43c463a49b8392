//! Adaptive ball partitions over the context space, one per arm.
//!
//! Each arm keeps a growing set of balls. A ball accumulates the rewards
//! observed while it was selected and exposes an optimistic index built from
//! three ingredients:
//!
//! ```text
//! conf(B) = 4 * sqrt(ln T / (1 + n(B)))
//! pre(B)  = v(B) + r(B) + conf(B)          v(B) = re(B) / max(1, n(B))
//! I(B)    = r(B) + min over B' of [ pre(B') + dist(B, B') ]
//! ```
//!
//! where the min runs over every ball of the same arm and `dist` is the
//! normalized center distance. Selection picks, among the balls containing
//! the query context with minimal radius, one with maximal index. Once a
//! ball's confidence radius drops to its geometric radius it starts spawning
//! children of half its radius, centered at the contexts that select it.

use crate::metric::{normalized_distance, BallGeometry, Context, MetricError, SimilaritySpace};
use std::io;
use thiserror::Error;

/// Arm identifier; arms are indexed `0..N` within a run.
pub type ArmId = usize;

/// Identifier of a ball within one arm's ball set, assigned in activation
/// order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BallId(pub u32);

impl std::fmt::Display for BallId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Errors raised by ball-set operations.
#[derive(Debug, Error, PartialEq)]
pub enum ZoomingError {
    #[error("time horizon must be at least 1")]
    InvalidHorizon,
    #[error("reward {0} outside [0, 1]")]
    RewardOutOfRange(f64),
    #[error("arm {arm} has no ball {ball}")]
    UnknownBall { arm: ArmId, ball: BallId },
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Horizon-dependent constants; the confidence radius uses the natural log
/// of the total number of rounds, fixed up front.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonParams {
    rounds: u64,
    log_rounds: f64,
}

impl HorizonParams {
    pub fn new(rounds: u64) -> Result<Self, ZoomingError> {
        if rounds == 0 {
            return Err(ZoomingError::InvalidHorizon);
        }
        Ok(Self {
            rounds,
            log_rounds: (rounds as f64).ln(),
        })
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    pub fn log_rounds(&self) -> f64 {
        self.log_rounds
    }

    /// Test hook for analytic cases that need an exact `ln T` (no integer
    /// horizon has `ln T = 1`).
    #[cfg(test)]
    pub(crate) fn with_log(rounds: u64, log_rounds: f64) -> Self {
        Self { rounds, log_rounds }
    }
}

/// One ball of an arm's partition, with its running reward statistics.
#[derive(Debug, Clone)]
pub struct Ball {
    id: BallId,
    arm: ArmId,
    geometry: BallGeometry,
    n: u64,
    re: f64,
    parent: Option<BallId>,
    activated_round: u64,
    children: u32,
    selected_while_not_parent: u64,
}

impl Ball {
    pub fn id(&self) -> BallId {
        self.id
    }

    pub fn arm(&self) -> ArmId {
        self.arm
    }

    pub fn center(&self) -> &Context {
        self.geometry.center()
    }

    pub fn radius(&self) -> f64 {
        self.geometry.radius()
    }

    pub fn geometry(&self) -> &BallGeometry {
        &self.geometry
    }

    /// Number of times this ball has been selected and updated.
    pub fn times_selected(&self) -> u64 {
        self.n
    }

    /// Total reward collected while selected.
    pub fn total_reward(&self) -> f64 {
        self.re
    }

    pub fn parent(&self) -> Option<BallId> {
        self.parent
    }

    /// Round in which the ball was activated (0 for the root).
    pub fn activated_round(&self) -> u64 {
        self.activated_round
    }

    pub fn child_count(&self) -> u32 {
        self.children
    }

    pub fn is_parent(&self) -> bool {
        self.children > 0
    }

    /// Selections recorded while the ball had no children, plus one for the
    /// activation round; audited against `16 * r^-2 * ln T`.
    pub fn selection_count_while_leaf(&self) -> u64 {
        self.selected_while_not_parent + 1
    }

    /// Empirical mean reward `v(B)`; zero before the first update.
    pub fn average_reward(&self) -> f64 {
        self.re / (self.n.max(1) as f64)
    }

    /// Confidence radius `4 * sqrt(ln T / (1 + n))`.
    pub fn conf_radius(&self, horizon: HorizonParams) -> f64 {
        4.0 * (horizon.log_rounds / (1.0 + self.n as f64)).sqrt()
    }

    /// Uncorrected index `v(B) + r(B) + conf(B)`.
    pub fn pre_index(&self, horizon: HorizonParams) -> f64 {
        self.average_reward() + self.radius() + self.conf_radius(horizon)
    }
}

/// How a selection scores the candidate balls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionRule {
    /// Optimistic index (the default policy behavior).
    Index,
    /// Plain empirical mean, no radius or confidence terms.
    AverageReward,
}

/// Outcome of a ball selection at a fixed context.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub ball: BallId,
    /// Score under the rule used: index or average reward.
    pub score: f64,
    pub radius: f64,
}

/// All active balls of a single arm, in activation order.
///
/// # Example
///
/// ```
/// use cbwp::metric::{Context, SimilaritySpace};
/// use cbwp::zooming::{ArmBallSet, HorizonParams};
///
/// let space = SimilaritySpace::new(2, 10.0).unwrap();
/// let horizon = HorizonParams::new(100).unwrap();
/// let origin = Context::xy(0.0, 0.0).unwrap();
/// let mut set = ArmBallSet::new(0, space, origin.clone()).unwrap();
///
/// // A fresh set holds only the radius-1 root, so it gets selected.
/// let sel = set.select(&origin, horizon, cbwp::zooming::SelectionRule::Index).unwrap();
/// assert_eq!(sel.radius, 1.0);
/// set.record_and_maybe_activate(sel.ball, &origin, 1.0, horizon, 1).unwrap();
/// assert_eq!(set.ball(sel.ball).unwrap().average_reward(), 1.0);
/// ```
#[derive(Debug, Clone)]
pub struct ArmBallSet {
    arm: ArmId,
    space: SimilaritySpace,
    balls: Vec<Ball>,
}

impl ArmBallSet {
    /// Creates the set with a radius-1 root ball centered at `root_center`
    /// (the first context the run observes).
    pub fn new(
        arm: ArmId,
        space: SimilaritySpace,
        root_center: Context,
    ) -> Result<Self, ZoomingError> {
        space.check_dimension(&root_center)?;
        let root = Ball {
            id: BallId(0),
            arm,
            geometry: BallGeometry::new(root_center, 1.0)?,
            n: 0,
            re: 0.0,
            parent: None,
            activated_round: 0,
            children: 0,
            selected_while_not_parent: 0,
        };
        Ok(Self {
            arm,
            space,
            balls: vec![root],
        })
    }

    pub fn arm(&self) -> ArmId {
        self.arm
    }

    pub fn space(&self) -> &SimilaritySpace {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.balls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.balls.is_empty()
    }

    pub fn ball(&self, id: BallId) -> Result<&Ball, ZoomingError> {
        self.balls.get(id.0 as usize).ok_or(ZoomingError::UnknownBall {
            arm: self.arm,
            ball: id,
        })
    }

    /// Balls in activation order.
    pub fn balls(&self) -> impl Iterator<Item = &Ball> {
        self.balls.iter()
    }

    /// Index of one ball: its radius plus the tightest pre-index-plus-
    /// distance correction over the whole set.
    pub fn index(&self, id: BallId, horizon: HorizonParams) -> Result<f64, ZoomingError> {
        let ball = self.ball(id)?;
        let pre: Vec<f64> = self.balls.iter().map(|b| b.pre_index(horizon)).collect();
        Ok(self.index_from_pre(ball, &pre))
    }

    fn index_from_pre(&self, ball: &Ball, pre: &[f64]) -> f64 {
        let center = ball.center().coords();
        let mut best = f64::INFINITY;
        for (other, &p) in self.balls.iter().zip(pre) {
            let d = normalized_distance(center, other.center().coords(), self.space.diameter());
            let corrected = p + d;
            if corrected < best {
                best = corrected;
            }
        }
        ball.radius() + best
    }

    /// Selects, among the balls containing `x` with minimal radius, one with
    /// maximal score; score ties go to the earliest-activated ball. The root
    /// contains every context, so selection always succeeds.
    pub fn select(
        &self,
        x: &Context,
        horizon: HorizonParams,
        rule: SelectionRule,
    ) -> Result<Selection, ZoomingError> {
        self.space.check_dimension(x)?;
        let coords = x.coords();
        let dia = self.space.diameter();

        let mut min_radius = f64::INFINITY;
        let mut containing = Vec::new();
        for ball in &self.balls {
            if normalized_distance(ball.center().coords(), coords, dia) <= ball.radius() {
                containing.push(ball);
                if ball.radius() < min_radius {
                    min_radius = ball.radius();
                }
            }
        }
        debug_assert!(!containing.is_empty(), "root ball covers the space");

        let pre: Vec<f64>;
        let mut best: Option<Selection> = None;
        match rule {
            SelectionRule::Index => {
                pre = self.balls.iter().map(|b| b.pre_index(horizon)).collect();
            }
            SelectionRule::AverageReward => pre = Vec::new(),
        }
        for ball in containing {
            if ball.radius() > min_radius {
                continue;
            }
            let score = match rule {
                SelectionRule::Index => self.index_from_pre(ball, &pre),
                SelectionRule::AverageReward => ball.average_reward(),
            };
            if best.map_or(true, |b| score > b.score) {
                best = Some(Selection {
                    ball: ball.id,
                    score,
                    radius: ball.radius(),
                });
            }
        }
        Ok(best.expect("at least one candidate ball"))
    }

    /// Selection under the index rule, returning just the ball.
    pub fn select_ball(&self, x: &Context, horizon: HorizonParams) -> Result<BallId, ZoomingError> {
        Ok(self.select(x, horizon, SelectionRule::Index)?.ball)
    }

    /// Records one observed reward on a selected ball and, if the updated
    /// confidence radius no longer exceeds the ball's radius, activates one
    /// child of half the radius centered at `x`. At most one child is
    /// spawned per call; the child starts with zero statistics and competes
    /// in selections from the next query on.
    pub fn record_and_maybe_activate(
        &mut self,
        id: BallId,
        x: &Context,
        reward: f64,
        horizon: HorizonParams,
        round: u64,
    ) -> Result<Option<BallId>, ZoomingError> {
        if !reward.is_finite() || !(0.0..=1.0).contains(&reward) {
            return Err(ZoomingError::RewardOutOfRange(reward));
        }
        self.space.check_dimension(x)?;
        self.ball(id)?;

        let pos = id.0 as usize;
        let ball = &mut self.balls[pos];
        ball.n += 1;
        ball.re += reward;

        let mut activated = None;
        if ball.conf_radius(horizon) <= ball.radius() {
            let child_id = BallId(self.balls.len() as u32);
            let child_radius = self.balls[pos].radius() / 2.0;
            let child = Ball {
                id: child_id,
                arm: self.arm,
                geometry: BallGeometry::new(x.clone(), child_radius)?,
                n: 0,
                re: 0.0,
                parent: Some(id),
                activated_round: round,
                children: 0,
                selected_while_not_parent: 0,
            };
            self.balls[pos].children += 1;
            self.balls.push(child);
            activated = Some(child_id);
        }

        let ball = &mut self.balls[pos];
        if ball.children == 0 {
            ball.selected_while_not_parent += 1;
        }
        Ok(activated)
    }

    #[cfg(test)]
    pub(crate) fn push_raw(
        &mut self,
        geometry: BallGeometry,
        n: u64,
        re: f64,
        parent: Option<BallId>,
        activated_round: u64,
    ) -> BallId {
        let id = BallId(self.balls.len() as u32);
        self.balls.push(Ball {
            id,
            arm: self.arm,
            geometry,
            n,
            re,
            parent,
            activated_round,
            children: 0,
            selected_while_not_parent: 0,
        });
        id
    }
}

/// Dumps every ball of every arm as one line of key=value pairs, in arm and
/// activation order. Intended for debugging and run artifacts.
pub fn write_snapshot<W: io::Write>(sets: &[ArmBallSet], out: &mut W) -> io::Result<()> {
    for set in sets {
        for ball in set.balls() {
            let center = ball
                .center()
                .coords()
                .iter()
                .map(|c| format!("{c:?}"))
                .collect::<Vec<_>>()
                .join(", ");
            let parent = match ball.parent() {
                Some(p) => p.to_string(),
                None => "-".to_string(),
            };
            writeln!(
                out,
                "arm={} ball={} parent={} radius={:?} n={} re={:?} activated={} center=({})",
                set.arm(),
                ball.id(),
                parent,
                ball.radius(),
                ball.times_selected(),
                ball.total_reward(),
                ball.activated_round(),
                center,
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn space() -> SimilaritySpace {
        SimilaritySpace::new(2, 10.0).unwrap()
    }

    fn ctx(x: f64, y: f64) -> Context {
        Context::xy(x, y).unwrap()
    }

    /// Root at the origin plus a half-radius child 0.3 away, with the child
    /// holding 4 samples totalling 2.0 and the root 15 samples totalling
    /// 7.5. Built through the public record path at `ln T = 1`.
    fn two_ball_fixture() -> (ArmBallSet, HorizonParams, BallId, BallId) {
        let horizon = HorizonParams::with_log(100, 1.0);
        let mut set = ArmBallSet::new(0, space(), ctx(0.0, 0.0)).unwrap();
        let root = BallId(0);
        let child_center = ctx(3.0, 0.0);
        let mut child = None;
        for round in 1..=15 {
            child = set
                .record_and_maybe_activate(root, &child_center, 0.5, horizon, round)
                .unwrap()
                .or(child);
        }
        let child = child.unwrap();
        for round in 16..=19 {
            set.record_and_maybe_activate(child, &child_center, 0.5, horizon, round)
                .unwrap();
        }
        (set, horizon, root, child)
    }

    #[test]
    fn conf_radius_matches_hand_values() {
        let horizon = HorizonParams::with_log(100, 1.0);
        let mut set = ArmBallSet::new(0, space(), ctx(0.0, 0.0)).unwrap();
        assert_eq!(set.ball(BallId(0)).unwrap().conf_radius(horizon), 4.0);

        let id = set.push_raw(
            BallGeometry::new(ctx(0.0, 0.0), 0.5).unwrap(),
            63,
            0.0,
            None,
            0,
        );
        assert_eq!(set.ball(id).unwrap().conf_radius(horizon), 0.5);

        let degenerate = HorizonParams::new(1).unwrap();
        assert_eq!(set.ball(BallId(0)).unwrap().conf_radius(degenerate), 0.0);
    }

    #[test]
    fn pre_index_sums_mean_radius_and_confidence() {
        let horizon = HorizonParams::with_log(100, 1.0);
        let mut set = ArmBallSet::new(0, space(), ctx(0.0, 0.0)).unwrap();
        let id = set.push_raw(
            BallGeometry::new(ctx(0.0, 0.0), 0.5).unwrap(),
            4,
            2.0,
            None,
            0,
        );
        let got = set.ball(id).unwrap().pre_index(horizon);
        assert!((got - 2.788_854_381_999_831_7).abs() < 1e-15, "{got}");
    }

    #[test]
    fn index_of_a_singleton_is_self_corrected() {
        let horizon = HorizonParams::with_log(100, 1.0);
        let set = ArmBallSet::new(0, space(), ctx(0.0, 0.0)).unwrap();
        // Root: v = 0, r = 1, conf = 4, so pre = 5 and index = 1 + 5 = 6.
        assert_eq!(set.index(BallId(0), horizon).unwrap(), 6.0);
    }

    #[test]
    fn index_takes_the_min_over_other_balls() {
        let (set, horizon, root, child) = two_ball_fixture();
        // Root: v = 0.5, conf = 4/sqrt(16) = 1, pre = 2.5.
        // Child: v = 0.5, conf = 4/sqrt(5), pre = 2.7888543819998317.
        // Centers are 0.3 apart in the normalized metric.
        let child_index = set.index(child, horizon).unwrap();
        assert!(
            (child_index - 3.288_854_381_999_831_7).abs() < 1e-15,
            "{child_index}"
        );
        // For the root the child's corrected pre-index (2.78885... + 0.3)
        // loses to the root's own 2.5.
        assert_eq!(set.index(root, horizon).unwrap(), 3.5);
    }

    #[test]
    fn activation_fires_exactly_at_the_threshold() {
        let horizon = HorizonParams::with_log(100, 1.0);
        let mut set = ArmBallSet::new(0, space(), ctx(0.0, 0.0)).unwrap();
        let root = BallId(0);
        let x = ctx(1.0, 1.0);
        // conf after n updates is 4/sqrt(1+n); it reaches the root radius 1
        // at n = 15.
        for round in 1..=14 {
            let spawned = set
                .record_and_maybe_activate(root, &x, 0.0, horizon, round)
                .unwrap();
            assert_eq!(spawned, None, "round {round}");
        }
        let spawned = set
            .record_and_maybe_activate(root, &x, 0.0, horizon, 15)
            .unwrap()
            .expect("15th update crosses the threshold");
        let child = set.ball(spawned).unwrap();
        assert_eq!(child.radius(), 0.5);
        assert_eq!(child.center(), &x);
        assert_eq!(child.parent(), Some(root));
        assert_eq!(child.activated_round(), 15);
        assert_eq!(child.times_selected(), 0);

        // Once a parent, every further update spawns another child.
        let again = set
            .record_and_maybe_activate(root, &ctx(2.0, 2.0), 0.0, horizon, 16)
            .unwrap();
        assert!(again.is_some());
        assert_eq!(set.ball(root).unwrap().child_count(), 2);
    }

    #[test]
    fn leaf_selection_counter_stops_at_parenthood() {
        let horizon = HorizonParams::with_log(100, 1.0);
        let mut set = ArmBallSet::new(0, space(), ctx(0.0, 0.0)).unwrap();
        let root = BallId(0);
        let x = ctx(1.0, 1.0);
        for round in 1..=16 {
            set.record_and_maybe_activate(root, &x, 0.0, horizon, round)
                .unwrap();
        }
        // Updates 1..=14 count; the 15th makes the root a parent and the
        // 16th is a parent selection. Plus one for the activation round.
        assert_eq!(set.ball(root).unwrap().selection_count_while_leaf(), 15);
        // 16 * r^-2 * ln T = 16 here.
        assert!(set.ball(root).unwrap().selection_count_while_leaf() as f64 <= 16.0);
    }

    #[test]
    fn horizon_one_activates_on_every_update() {
        let horizon = HorizonParams::new(1).unwrap();
        let mut set = ArmBallSet::new(0, space(), ctx(0.0, 0.0)).unwrap();
        let spawned = set
            .record_and_maybe_activate(BallId(0), &ctx(1.0, 0.0), 0.0, horizon, 1)
            .unwrap();
        assert!(spawned.is_some());
    }

    #[test]
    fn rewards_outside_unit_interval_are_rejected() {
        let horizon = HorizonParams::new(10).unwrap();
        let mut set = ArmBallSet::new(0, space(), ctx(0.0, 0.0)).unwrap();
        for bad in [1.5, -0.1, f64::NAN] {
            let err = set
                .record_and_maybe_activate(BallId(0), &ctx(0.0, 0.0), bad, horizon, 1)
                .unwrap_err();
            assert!(matches!(err, ZoomingError::RewardOutOfRange(_)), "{bad}");
        }
    }

    #[test]
    fn selection_prefers_smaller_radius_then_index_then_activation_order() {
        let horizon = HorizonParams::with_log(100, 1.0);
        let (set, _, root, child) = two_ball_fixture();
        // The child contains its own center and has smaller radius, so it
        // wins there even though the root also contains the point.
        let sel = set.select(&ctx(3.0, 0.0), horizon, SelectionRule::Index).unwrap();
        assert_eq!(sel.ball, child);
        assert_eq!(sel.radius, 0.5);
        // A context only the root covers falls back to the root.
        let sel = set.select(&ctx(-9.0, 0.0), horizon, SelectionRule::Index).unwrap();
        assert_eq!(sel.ball, root);

        // Exact index tie between two twin balls goes to the earlier one.
        let mut twins = ArmBallSet::new(0, space(), ctx(0.0, 0.0)).unwrap();
        let a = twins.push_raw(
            BallGeometry::new(ctx(-1.0, 0.0), 0.5).unwrap(),
            4,
            2.0,
            Some(BallId(0)),
            1,
        );
        let _b = twins.push_raw(
            BallGeometry::new(ctx(1.0, 0.0), 0.5).unwrap(),
            4,
            2.0,
            Some(BallId(0)),
            2,
        );
        let sel = twins.select(&ctx(0.0, 0.0), horizon, SelectionRule::Index).unwrap();
        assert_eq!(sel.ball, a);
    }

    #[test]
    fn greedy_selection_scores_by_average_reward() {
        let horizon = HorizonParams::with_log(100, 1.0);
        let mut set = ArmBallSet::new(0, space(), ctx(0.0, 0.0)).unwrap();
        let _low = set.push_raw(
            BallGeometry::new(ctx(-1.0, 0.0), 0.5).unwrap(),
            10,
            2.0,
            Some(BallId(0)),
            1,
        );
        let high = set.push_raw(
            BallGeometry::new(ctx(1.0, 0.0), 0.5).unwrap(),
            10,
            9.0,
            Some(BallId(0)),
            2,
        );
        let sel = set
            .select(&ctx(0.0, 0.0), horizon, SelectionRule::AverageReward)
            .unwrap();
        assert_eq!(sel.ball, high);
        assert_eq!(sel.score, 0.9);
    }

    #[test]
    fn snapshot_lists_every_ball_in_order() {
        let (set, _, _, _) = two_ball_fixture();
        let mut buf = Vec::new();
        write_snapshot(&[set], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(
            lines[0],
            "arm=0 ball=0 parent=- radius=1.0 n=15 re=7.5 activated=0 center=(0.0, 0.0)"
        );
        assert_eq!(
            lines[1],
            "arm=0 ball=1 parent=0 radius=0.5 n=4 re=2.0 activated=15 center=(3.0, 0.0)"
        );
    }

    proptest! {
        #[test]
        fn conf_radius_decreases_in_n(n in 0u64..10_000, extra in 1u64..100) {
            let horizon = HorizonParams::new(20_000).unwrap();
            let mut set = ArmBallSet::new(0, space(), ctx(0.0, 0.0)).unwrap();
            let a = set.push_raw(BallGeometry::new(ctx(0.0, 0.0), 0.5).unwrap(), n, 0.0, None, 0);
            let b = set.push_raw(BallGeometry::new(ctx(0.0, 0.0), 0.5).unwrap(), n + extra, 0.0, None, 0);
            let ca = set.ball(a).unwrap().conf_radius(horizon);
            let cb = set.ball(b).unwrap().conf_radius(horizon);
            prop_assert!(cb < ca);
        }

        #[test]
        fn index_is_invariant_under_insertion_order(
            stats in proptest::collection::vec((0u64..200, 0.0f64..1.0, -40.0f64..40.0, -40.0f64..40.0, 0u32..5), 1..8),
            query in (-40.0f64..40.0, -40.0f64..40.0),
        ) {
            let horizon = HorizonParams::new(500).unwrap();
            let space = SimilaritySpace::new(2, 100.0).unwrap();
            let build = |order: Vec<usize>| {
                let mut set = ArmBallSet::new(0, space, ctx(0.0, 0.0)).unwrap();
                for &i in &order {
                    let (n, v, x, y, j) = stats[i];
                    let radius = 2f64.powi(-(j as i32));
                    let re = v * n as f64;
                    set.push_raw(BallGeometry::new(ctx(x, y), radius).unwrap(), n, re, None, 0);
                }
                set
            };
            let forward = build((0..stats.len()).collect());
            let backward = build((0..stats.len()).rev().collect());
            // Compare indices ball-by-ball across the two insertion orders.
            for i in 0..stats.len() {
                let f = forward.index(BallId(1 + i as u32), horizon).unwrap();
                let b = backward.index(BallId((stats.len() - i) as u32), horizon).unwrap();
                prop_assert!((f - b).abs() < 1e-12);
            }
            // Selection still lands on a minimal-radius containing ball.
            let q = ctx(query.0, query.1);
            let sel = forward.select(&q, horizon, SelectionRule::Index).unwrap();
            let selected = forward.ball(sel.ball).unwrap();
            prop_assert!(selected.geometry().contains(&space, &q).unwrap());
            for ball in forward.balls() {
                if ball.geometry().contains(&space, &q).unwrap() {
                    prop_assert!(selected.radius() <= ball.radius());
                }
            }
        }
    }
}
