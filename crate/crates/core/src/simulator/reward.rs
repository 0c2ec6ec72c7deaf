use serde::{Deserialize, Serialize};

use super::collision::CollisionClass;
use crate::kinematics::{normalize_angle, EgoState, Pose};

/// Per-term weights of the shaped reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardWeights {
    pub dist: f64,
    pub yaw: f64,
    pub collision_front: f64,
    pub collision_side: f64,
    pub collision_rear: f64,
    /// Clip on the displacement penalty, meters.
    pub dist_clip: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            dist: 1.0,
            yaw: 1.0,
            collision_front: 20.0,
            collision_side: 20.0,
            collision_rear: 20.0,
            dist_clip: 20.0,
        }
    }
}

/// Raw (unweighted) reward terms.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardTerms {
    pub dist: f64,
    pub yaw: f64,
    pub front: f64,
    pub side: f64,
    pub rear: f64,
}

impl RewardTerms {
    pub fn weighted(&self, w: &RewardWeights) -> f64 {
        w.dist * self.dist
            + w.yaw * self.yaw
            + w.collision_front * self.front
            + w.collision_side * self.side
            + w.collision_rear * self.rear
    }
}

pub fn compute_reward(
    ego: &EgoState,
    gt: &Pose,
    collision: Option<CollisionClass>,
    weights: &RewardWeights,
) -> (f64, RewardTerms) {
    let mut terms = RewardTerms {
        dist: -ego.pose.distance(gt).min(weights.dist_clip),
        yaw: -normalize_angle(ego.pose.theta - gt.theta).abs(),
        ..Default::default()
    };
    match collision {
        Some(CollisionClass::Front) => terms.front = -1.0,
        Some(CollisionClass::Side) => terms.side = -1.0,
        Some(CollisionClass::Rear) => terms.rear = -1.0,
        None => {}
    }
    (terms.weighted(weights), terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn at(x: f64, y: f64, theta: f64) -> EgoState {
        EgoState::new(Pose::new(x, y, theta), 0.0)
    }

    #[test]
    fn on_log_is_zero() {
        let (r, t) = compute_reward(
            &at(1.0, 2.0, 0.3),
            &Pose::new(1.0, 2.0, 0.3),
            None,
            &RewardWeights::default(),
        );
        assert_eq!(r, 0.0);
        assert_eq!(t, RewardTerms::default());
    }

    #[test]
    fn three_meters_off() {
        let (r, t) = compute_reward(
            &at(3.0, 0.0, 0.0),
            &Pose::default(),
            None,
            &RewardWeights::default(),
        );
        assert_eq!(r, -3.0);
        assert_eq!(t.dist, -3.0);
    }

    #[test]
    fn front_contact_three_meters_off() {
        let (r, t) = compute_reward(
            &at(0.0, 3.0, 0.0),
            &Pose::default(),
            Some(CollisionClass::Front),
            &RewardWeights::default(),
        );
        assert_eq!(r, -23.0);
        assert_eq!((t.front, t.side, t.rear), (-1.0, 0.0, 0.0));
    }

    #[test]
    fn yaw_only() {
        let (r, _) = compute_reward(
            &at(0.0, 0.0, 0.5),
            &Pose::default(),
            None,
            &RewardWeights::default(),
        );
        assert_eq!(r, -0.5);
    }

    #[test]
    fn distance_clip_boundary() {
        let w = RewardWeights::default();
        assert_eq!(
            compute_reward(&at(50.0, 0.0, 0.0), &Pose::default(), None, &w).0,
            -20.0
        );
        assert_eq!(
            compute_reward(&at(20.0, 0.0, 0.0), &Pose::default(), None, &w).0,
            -20.0
        );
        assert_eq!(
            compute_reward(&at(19.5, 0.0, 0.0), &Pose::default(), None, &w).0,
            -19.5
        );
    }

    #[test]
    fn yaw_is_wrapped() {
        let (_, t) = compute_reward(
            &at(0.0, 0.0, PI - 0.1),
            &Pose::new(0.0, 0.0, -PI + 0.1),
            None,
            &RewardWeights::default(),
        );
        assert!((t.yaw + 0.2).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn terms_bounded_and_decomposed(x in -80.0..80.0f64, y in -80.0..80.0f64, th in -PI..PI,
                                         gth in -PI..PI, c in 0usize..4) {
            let class = [None, Some(CollisionClass::Front), Some(CollisionClass::Side), Some(CollisionClass::Rear)][c];
            let w = RewardWeights::default();
            let (r, t) = compute_reward(&at(x, y, th), &Pose::new(0.0, 0.0, gth), class, &w);
            prop_assert!((-20.0..=0.0).contains(&t.dist));
            prop_assert!((-PI..=0.0).contains(&t.yaw));
            for v in [t.front, t.side, t.rear] {
                prop_assert!(v == 0.0 || v == -1.0);
            }
            prop_assert_eq!(r, t.weighted(&w));
        }
    }
}
