//! Manipulator backend: 6-DOF pose motion, geometric object detection, point
//! cloud capture around a target, and picking.
//!
//! Detection is a deterministic frustum test standing in for a learned
//! detector: an object is visible when it lies within range of the camera and
//! within the cone around the gripper's forward axis.

use std::collections::BTreeMap;

use serde_json::{json, Value};

use crate::executor::{RobotBackend, TaskOutcome};
use crate::schema::{ActionPool, OUTCOME_FAILURE, OUTCOME_SUCCESS};

use super::geom::{Pose6d, Quat, Vec3};
use super::SimWorld;

pub const CAMERA_RANGE_M: f64 = 1.5;
pub const CAMERA_HALF_ANGLE_DEG: f64 = 35.0;
pub const ARM_SPEED_MPS: f64 = 0.25;
pub const PICK_TOLERANCE_M: f64 = 0.1;
pub const DEFAULT_REACH_M: f64 = 0.9;
pub const NBV_DEFAULT_VIEWS: usize = 6;
pub const NBV_DEFAULT_RADIUS_M: f64 = 0.3;
pub const CLOUD_POINTS_PER_VIEW: usize = 500;
pub const CLOUD_SIGMA_M: f64 = 0.02;
/// Random exploration moves sample a target in this reach shell.
pub const RANDOM_MOVE_MIN_M: f64 = 0.2;
pub const RANDOM_MOVE_MAX_REACH_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, PartialEq)]
pub struct ArmState {
    pub ee_pose: Pose6d,
    pub home_pose: Pose6d,
    pub reach_m: f64,
    pub gripper_holding: Option<String>,
}

impl Default for ArmState {
    fn default() -> Self {
        let home = Pose6d::new(Vec3::new(0.3, 0.0, 0.4), Quat::IDENTITY);
        ArmState { ee_pose: home, home_pose: home, reach_m: DEFAULT_REACH_M, gripper_holding: None }
    }
}

/// Viewpoints equally spaced in azimuth on the horizontal circle of `radius`
/// around `center`, each oriented to look at the center. The first viewpoint
/// sits on the +x side (azimuth 0).
pub fn nbv_viewpoints(center: Vec3, k: usize, radius: f64) -> Vec<Pose6d> {
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let azimuth = 2.0 * std::f64::consts::PI * (i as f64) / (k as f64);
        let offset = Vec3::new(radius * azimuth.cos(), radius * azimuth.sin(), 0.0);
        let position = center.add(offset);
        let orientation = Quat::look_along(center.sub(position));
        out.push(Pose6d::new(position, orientation));
    }
    out
}

pub struct KortexBackend {
    pool: ActionPool,
    pub state: ArmState,
    /// Object positions learned from successful detections, by object id.
    detections: BTreeMap<String, Vec3>,
    /// Latest detected object id per class name, for plans that reference
    /// targets by class rather than scene id.
    by_class: BTreeMap<String, String>,
    /// Merged cloud from the most recent capture sweep.
    last_cloud: Vec<Vec3>,
}

impl KortexBackend {
    pub fn new(pool: ActionPool) -> Self {
        KortexBackend {
            pool,
            state: ArmState::default(),
            detections: BTreeMap::new(),
            by_class: BTreeMap::new(),
            last_cloud: Vec::new(),
        }
    }

    pub fn last_cloud(&self) -> &[Vec3] {
        &self.last_cloud
    }

    /// Resolve a plan-level target (scene object id or class name) to a
    /// previously detected position.
    fn resolve_target(&self, target: &str) -> Option<(String, Vec3)> {
        if let Some(p) = self.detections.get(target) {
            return Some((target.to_string(), *p));
        }
        self.by_class
            .get(target)
            .and_then(|id| self.detections.get(id).map(|p| (id.clone(), *p)))
    }

    fn try_move_to(&mut self, position: Vec3, orientation: Quat) -> Result<f64, String> {
        if position.norm() > self.state.reach_m {
            return Err(format!(
                "target {:.3} m from base exceeds reach {:.3} m",
                position.norm(),
                self.state.reach_m
            ));
        }
        let distance = self.state.ee_pose.position.sub(position).norm();
        self.state.ee_pose = Pose6d::new(position, orientation.normalized());
        Ok(distance / ARM_SPEED_MPS)
    }

    fn move_pose(&mut self, task_id: &str, params: &BTreeMap<String, String>, world: &mut SimWorld) -> TaskOutcome {
        let pose = match params.get("pose").map(|v| Pose6d::parse(v)) {
            Some(Ok(p)) => p,
            _ => {
                return TaskOutcome::new(task_id, OUTCOME_FAILURE, 0.0)
                    .with_value(json!({"reason": "missing or malformed pose"}))
            }
        };
        let mode = params.get("mode").map(String::as_str).unwrap_or("absolute");
        let (position, orientation) = match mode {
            "absolute" => (pose.position, pose.orientation),
            "relative" => {
                let cur = self.state.ee_pose;
                let position = cur.position.add(cur.orientation.rotate(pose.position));
                let orientation = cur.orientation.mul(pose.orientation);
                (position, orientation)
            }
            other => {
                return TaskOutcome::new(task_id, OUTCOME_FAILURE, 0.0)
                    .with_value(json!({"reason": format!("unknown mode {:?}", other)}))
            }
        };
        match self.try_move_to(position, orientation) {
            Ok(duration) => {
                world.advance_clock(duration);
                TaskOutcome::new(task_id, OUTCOME_SUCCESS, duration).with_value(json!({
                    "mode": mode,
                    "position": [position.x, position.y, position.z],
                }))
            }
            Err(reason) => {
                TaskOutcome::new(task_id, OUTCOME_FAILURE, 0.0).with_value(json!({"reason": reason}))
            }
        }
    }

    fn detect_object(&mut self, task_id: &str, params: &BTreeMap<String, String>, world: &mut SimWorld) -> TaskOutcome {
        let class_name = params.get("class_name").cloned().unwrap_or_default();
        let color = params.get("color");
        let eye = self.state.ee_pose.position;
        let forward = self.state.ee_pose.orientation.forward();
        let max_angle = CAMERA_HALF_ANGLE_DEG.to_radians();

        let mut candidates: Vec<(super::scene::SceneObject, f64)> = world
            .scene
            .iter()
            .filter(|o| o.class_name == class_name)
            .filter(|o| color.is_none_or(|c| o.color.as_deref() == Some(c.as_str())))
            .filter_map(|o| {
                let v = o.position.sub(eye);
                let d = v.norm();
                if d <= CAMERA_RANGE_M && v.angle_to(forward) <= max_angle {
                    Some((o.clone(), d))
                } else {
                    None
                }
            })
            .collect();
        candidates.sort_by(|(a, da), (b, db)| {
            da.partial_cmp(db).unwrap_or(std::cmp::Ordering::Equal).then(a.id.cmp(&b.id))
        });

        world.advance_clock(0.8);
        match candidates.first() {
            Some((obj, distance)) => {
                self.detections.insert(obj.id.clone(), obj.position);
                self.by_class.insert(obj.class_name.clone(), obj.id.clone());
                TaskOutcome::new(task_id, OUTCOME_SUCCESS, 0.8).with_value(json!({
                    "object_id": obj.id,
                    "class_name": obj.class_name,
                    "position": [obj.position.x, obj.position.y, obj.position.z],
                    "distance_m": distance,
                }))
            }
            None => TaskOutcome::new(task_id, OUTCOME_FAILURE, 0.8).with_value(json!({
                "reason": format!("no {:?} in view", class_name),
            })),
        }
    }

    fn nbv(&mut self, task_id: &str, params: &BTreeMap<String, String>, world: &mut SimWorld) -> TaskOutcome {
        let target = params.get("target_object").cloned().unwrap_or_default();
        let k = params
            .get("k")
            .and_then(|v| v.trim().parse::<usize>().ok())
            .unwrap_or(NBV_DEFAULT_VIEWS)
            .max(1);
        let radius = params
            .get("radius")
            .and_then(|v| v.trim().parse::<f64>().ok())
            .unwrap_or(NBV_DEFAULT_RADIUS_M);
        self.last_cloud.clear();
        let (object_id, center) = match self.resolve_target(&target) {
            Some(hit) => hit,
            None => {
                return TaskOutcome::new(task_id, OUTCOME_FAILURE, 0.0).with_value(json!({
                    "reason": format!("object {:?} has not been detected", target),
                }))
            }
        };

        let viewpoints = nbv_viewpoints(center, k, radius);
        let mut total_duration = 0.0;
        let mut captured = 0usize;
        for vp in &viewpoints {
            match self.try_move_to(vp.position, vp.orientation) {
                Ok(move_dur) => {
                    // One cloud slice per reachable viewpoint: a seeded
                    // object-centered gaussian blob observed from this pose.
                    for _ in 0..CLOUD_POINTS_PER_VIEW {
                        let p = Vec3::new(
                            center.x + CLOUD_SIGMA_M * world.gaussian(),
                            center.y + CLOUD_SIGMA_M * world.gaussian(),
                            center.z + CLOUD_SIGMA_M * world.gaussian(),
                        );
                        self.last_cloud.push(p);
                    }
                    captured += 1;
                    let dur = move_dur + 0.5;
                    world.advance_clock(dur);
                    total_duration += dur;
                }
                Err(_) => continue,
            }
        }

        let needed = k.div_ceil(2);
        let label = if captured >= needed { OUTCOME_SUCCESS } else { OUTCOME_FAILURE };
        TaskOutcome::new(task_id, label, total_duration).with_value(json!({
            "object_id": object_id,
            "viewpoints": k,
            "captured": captured,
            "points": self.last_cloud.len(),
            "radius_m": radius,
        }))
    }

    fn pick(&mut self, task_id: &str, params: &BTreeMap<String, String>, world: &mut SimWorld) -> TaskOutcome {
        let target = params.get("target_object").cloned().unwrap_or_default();
        if let Some(held) = &self.state.gripper_holding {
            return TaskOutcome::new(task_id, OUTCOME_FAILURE, 0.0).with_value(json!({
                "reason": format!("gripper already holding {:?}", held),
            }));
        }
        let (object_id, position) = match self.resolve_target(&target) {
            Some(hit) => hit,
            None => {
                return TaskOutcome::new(task_id, OUTCOME_FAILURE, 0.0).with_value(json!({
                    "reason": format!("object {:?} has not been detected", target),
                }))
            }
        };
        // Approach, then close the gripper if we ended up close enough.
        let approach = self.try_move_to(position, self.state.ee_pose.orientation);
        match approach {
            Ok(duration) => {
                world.advance_clock(duration + 1.0);
                let gap = self.state.ee_pose.position.sub(position).norm();
                if gap <= PICK_TOLERANCE_M {
                    self.state.gripper_holding = Some(object_id.clone());
                    TaskOutcome::new(task_id, OUTCOME_SUCCESS, duration + 1.0)
                        .with_value(json!({"object_id": object_id}))
                } else {
                    TaskOutcome::new(task_id, OUTCOME_FAILURE, duration + 1.0)
                        .with_value(json!({"reason": "approach ended too far from object"}))
                }
            }
            Err(reason) => TaskOutcome::new(task_id, OUTCOME_FAILURE, 0.0)
                .with_value(json!({"reason": reason})),
        }
    }

    fn capture_image(&mut self, task_id: &str, world: &mut SimWorld) -> TaskOutcome {
        let artifact = world.next_artifact("image");
        world.advance_clock(0.5);
        TaskOutcome::new(task_id, OUTCOME_SUCCESS, 0.5).with_value(json!({"artifact": artifact}))
    }

    fn random_move(&mut self, task_id: &str, world: &mut SimWorld) -> TaskOutcome {
        let dir = world.unit_direction();
        let radius = world.uniform(RANDOM_MOVE_MIN_M, RANDOM_MOVE_MAX_REACH_FRACTION * self.state.reach_m);
        let position = dir.scale(radius);
        match self.try_move_to(position, self.state.ee_pose.orientation) {
            Ok(duration) => {
                world.advance_clock(duration);
                TaskOutcome::new(task_id, OUTCOME_SUCCESS, duration).with_value(json!({
                    "position": [position.x, position.y, position.z],
                }))
            }
            Err(reason) => {
                TaskOutcome::new(task_id, OUTCOME_FAILURE, 0.0).with_value(json!({"reason": reason}))
            }
        }
    }
}

impl RobotBackend for KortexBackend {
    fn robot_id(&self) -> &str {
        &self.pool.robot_id
    }

    fn pool(&self) -> &ActionPool {
        &self.pool
    }

    fn execute(
        &mut self,
        task_id: &str,
        action: &str,
        params: &BTreeMap<String, String>,
        world: &mut SimWorld,
    ) -> TaskOutcome {
        match action {
            "move_pose" => self.move_pose(task_id, params, world),
            "detect_object" => self.detect_object(task_id, params, world),
            "nbv" => self.nbv(task_id, params, world),
            "pick" => self.pick(task_id, params, world),
            "capture_image" => self.capture_image(task_id, world),
            "random_move" => self.random_move(task_id, world),
            other => TaskOutcome::new(task_id, OUTCOME_FAILURE, 0.0)
                .with_value(json!({"reason": format!("no handler for action {:?}", other)})),
        }
    }

    fn snapshot(&self, _world: &SimWorld) -> Value {
        let p = self.state.ee_pose.position;
        let q = self.state.ee_pose.orientation;
        json!({
            "ee_position": [p.x, p.y, p.z],
            "ee_orientation": [q.w, q.x, q.y, q.z],
            "holding": self.state.gripper_holding,
        })
    }
}
