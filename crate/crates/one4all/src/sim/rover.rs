//! Wheeled-rover backend: GPS locomotion and proximal sensing over the farm.

use std::collections::BTreeMap;

use serde_json::{json, Value};

use crate::executor::{RobotBackend, TaskOutcome};
use crate::schema::{ActionPool, OUTCOME_FAILURE, OUTCOME_SUCCESS};

use super::geo::{haversine_m, GpsPoint};
use super::SimWorld;

/// Readings come from the nearest feature within this radius.
pub const SENSOR_RADIUS_M: f64 = 5.0;
/// A drive counts as arrived within this distance of the target.
pub const GOTO_TOLERANCE_M: f64 = 0.5;
pub const AMBIENT_TEMPERATURE_C: f64 = 20.0;
pub const AMBIENT_CO2_FLUX: f64 = 0.0;
/// Below these the sensor reports the `low` outcome instead of `success`.
pub const LOW_TEMPERATURE_C: f64 = 15.0;
pub const LOW_CO2_FLUX: f64 = 1.0;
pub const DEFAULT_SPEED_MPS: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RoverState {
    pub position: GpsPoint,
    pub speed_mps: f64,
}

pub struct HuskyBackend {
    pool: ActionPool,
    pub state: RoverState,
}

impl HuskyBackend {
    /// Rover starts at the centroid of the farm boundary.
    pub fn new(pool: ActionPool, world: &SimWorld) -> Self {
        let position = world.farm.bounds.centroid();
        HuskyBackend { pool, state: RoverState { position, speed_mps: DEFAULT_SPEED_MPS } }
    }

    fn goto_gps(&mut self, task_id: &str, params: &BTreeMap<String, String>, world: &mut SimWorld) -> TaskOutcome {
        let lat = params.get("lat").and_then(|v| v.trim().parse::<f64>().ok());
        let lon = params.get("lon").and_then(|v| v.trim().parse::<f64>().ok());
        let (lat, lon) = match (lat, lon) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return TaskOutcome::new(task_id, OUTCOME_FAILURE, 0.0)
                    .with_value(json!({"reason": "missing or malformed lat/lon"}))
            }
        };
        let target = GpsPoint::new(lat, lon);
        if !target.in_wgs84_range() || !world.farm.bounds.contains(target) {
            return TaskOutcome::new(task_id, OUTCOME_FAILURE, 0.0)
                .with_value(json!({"reason": "target outside farm bounds", "lat": lat, "lon": lon}));
        }
        let distance = haversine_m(self.state.position, target);
        let duration = distance / self.state.speed_mps;
        // Straight geodesic segment at constant speed; with virtual time the
        // rover simply arrives.
        self.state.position = target;
        world.advance_clock(duration);
        debug_assert!(haversine_m(self.state.position, target) <= GOTO_TOLERANCE_M);
        TaskOutcome::new(task_id, OUTCOME_SUCCESS, duration)
            .with_value(json!({"distance_m": distance, "lat": lat, "lon": lon}))
    }

    fn read_temperature(&mut self, task_id: &str, world: &mut SimWorld) -> TaskOutcome {
        let (value, source) = match world
            .farm
            .nearest_feature(self.state.position, SENSOR_RADIUS_M)
            .and_then(|f| f.temperature_c().map(|v| (v, f.id.clone())))
        {
            Some((v, id)) => (v, id),
            None => (AMBIENT_TEMPERATURE_C, "ambient".to_string()),
        };
        let label = if value < LOW_TEMPERATURE_C { "low" } else { OUTCOME_SUCCESS };
        world.advance_clock(1.0);
        TaskOutcome::new(task_id, label, 1.0)
            .with_value(json!({"temperature_c": value, "source": source}))
    }

    fn measure_co2(&mut self, task_id: &str, world: &mut SimWorld) -> TaskOutcome {
        let (value, source) = match world
            .farm
            .nearest_feature(self.state.position, SENSOR_RADIUS_M)
            .and_then(|f| f.co2_flux().map(|v| (v, f.id.clone())))
        {
            Some((v, id)) => (v, id),
            None => (AMBIENT_CO2_FLUX, "ambient".to_string()),
        };
        let label = if value < LOW_CO2_FLUX { "low" } else { OUTCOME_SUCCESS };
        world.advance_clock(1.5);
        TaskOutcome::new(task_id, label, 1.5)
            .with_value(json!({"co2_flux": value, "source": source}))
    }

    fn take_thermal_image(&mut self, task_id: &str, world: &mut SimWorld) -> TaskOutcome {
        let artifact = world.next_artifact("thermal");
        world.advance_clock(2.0);
        TaskOutcome::new(task_id, OUTCOME_SUCCESS, 2.0).with_value(json!({
            "artifact": artifact,
            "lat": self.state.position.lat,
            "lon": self.state.position.lon,
        }))
    }
}

impl RobotBackend for HuskyBackend {
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
            "goto_gps" => self.goto_gps(task_id, params, world),
            "read_temperature" => self.read_temperature(task_id, world),
            "measure_co2" => self.measure_co2(task_id, world),
            "take_thermal_image" => self.take_thermal_image(task_id, world),
            other => TaskOutcome::new(task_id, OUTCOME_FAILURE, 0.0)
                .with_value(json!({"reason": format!("no handler for action {:?}", other)})),
        }
    }

    fn snapshot(&self, _world: &SimWorld) -> Value {
        json!({
            "position": {"lat": self.state.position.lat, "lon": self.state.position.lon},
            "speed_mps": self.state.speed_mps,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::farm::load_farm;

    fn world() -> SimWorld {
        let farm = load_farm(
            r#"{"type":"FeatureCollection","features":[
              {"type":"Feature","id":"farm_boundary","geometry":{"type":"Polygon","coordinates":[[
                [-120.490,37.300],[-120.470,37.300],[-120.470,37.310],[-120.490,37.310],[-120.490,37.300]
              ]]},"properties":{"boundary":true}},
              {"type":"Feature","id":"tree_warm","geometry":{"type":"Point","coordinates":[-120.4800,37.3051]},
               "properties":{"species":"pistachio","temperature":31.5,"co2_flux":4.2}},
              {"type":"Feature","id":"tree_cold","geometry":{"type":"Point","coordinates":[-120.4755,37.3072]},
               "properties":{"species":"pistachio","temperature":12.0,"co2_flux":0.4}}
            ]}"#,
        )
        .unwrap();
        SimWorld::new(farm, Vec::new(), 11)
    }

    fn pool() -> ActionPool {
        crate::schema::load_pool(
            r#"<actionpool robot="husky" version="1">
              <action name="goto_gps">
                <param name="lat" kind="float" required="true" min="-90" max="90"/>
                <param name="lon" kind="float" required="true" min="-180" max="180"/>
                <outcome>success</outcome><outcome>failure</outcome>
              </action>
              <action name="read_temperature"><outcome>success</outcome><outcome>failure</outcome><outcome>low</outcome></action>
              <action name="measure_co2"><outcome>success</outcome><outcome>failure</outcome><outcome>low</outcome></action>
              <action name="take_thermal_image"><outcome>success</outcome><outcome>failure</outcome></action>
            </actionpool>"#,
        )
        .unwrap()
    }

    fn goto(b: &mut HuskyBackend, w: &mut SimWorld, lat: f64, lon: f64) -> TaskOutcome {
        let mut params = BTreeMap::new();
        params.insert("lat".to_string(), lat.to_string());
        params.insert("lon".to_string(), lon.to_string());
        b.execute("t", "goto_gps", &params, w)
    }

    #[test]
    fn goto_current_position_is_instant() {
        let mut w = world();
        let mut b = HuskyBackend::new(pool(), &w);
        let here = b.state.position;
        let out = goto(&mut b, &mut w, here.lat, here.lon);
        assert_eq!(out.label, "success");
        assert_eq!(out.duration_s, 0.0);
    }

    #[test]
    fn goto_duration_matches_haversine_over_speed() {
        let mut w = world();
        let mut b = HuskyBackend::new(pool(), &w);
        let from = b.state.position;
        let target = GpsPoint::new(37.3051, -120.4800);
        let expected = haversine_m(from, target) / b.state.speed_mps;
        let out = goto(&mut b, &mut w, target.lat, target.lon);
        assert_eq!(out.label, "success");
        assert!((out.duration_s - expected).abs() <= 0.01 * expected.max(1.0));
        assert_eq!(w.now(), out.duration_s);
    }

    #[test]
    fn goto_outside_bounds_fails_without_moving() {
        let mut w = world();
        let mut b = HuskyBackend::new(pool(), &w);
        let before = b.state.position;
        let out = goto(&mut b, &mut w, 37.5, -120.48);
        assert_eq!(out.label, "failure");
        assert_eq!(b.state.position, before);
        assert_eq!(w.now(), 0.0);
    }

    #[test]
    fn temperature_reads_nearest_tree_value() {
        let mut w = world();
        let mut b = HuskyBackend::new(pool(), &w);
        goto(&mut b, &mut w, 37.3051, -120.4800);
        let out = b.execute("t2", "read_temperature", &BTreeMap::new(), &mut w);
        assert_eq!(out.label, "success");
        assert_eq!(out.value.unwrap()["temperature_c"], 31.5);
    }

    #[test]
    fn temperature_far_from_trees_is_ambient() {
        let mut w = world();
        let mut b = HuskyBackend::new(pool(), &w);
        // Farm centroid is > 5 m from both trees.
        let out = b.execute("t", "read_temperature", &BTreeMap::new(), &mut w);
        assert_eq!(out.label, "success");
        let v = out.value.unwrap();
        assert_eq!(v["temperature_c"], AMBIENT_TEMPERATURE_C);
        assert_eq!(v["source"], "ambient");
    }

    #[test]
    fn co2_reads_fixture_flux_and_flags_low() {
        let mut w = world();
        let mut b = HuskyBackend::new(pool(), &w);
        goto(&mut b, &mut w, 37.3051, -120.4800);
        let out = b.execute("t", "measure_co2", &BTreeMap::new(), &mut w);
        assert_eq!(out.label, "success");
        assert_eq!(out.value.unwrap()["co2_flux"], 4.2);

        goto(&mut b, &mut w, 37.3072, -120.4755);
        let out = b.execute("t2", "measure_co2", &BTreeMap::new(), &mut w);
        assert_eq!(out.label, "low");
        assert_eq!(out.value.unwrap()["co2_flux"], 0.4);
    }

    #[test]
    fn cold_tree_reports_low_temperature() {
        let mut w = world();
        let mut b = HuskyBackend::new(pool(), &w);
        goto(&mut b, &mut w, 37.3072, -120.4755);
        let out = b.execute("t", "read_temperature", &BTreeMap::new(), &mut w);
        assert_eq!(out.label, "low");
    }

    #[test]
    fn thermal_image_records_artifact() {
        let mut w = world();
        let mut b = HuskyBackend::new(pool(), &w);
        let out = b.execute("t", "take_thermal_image", &BTreeMap::new(), &mut w);
        assert_eq!(out.label, "success");
        assert_eq!(out.value.unwrap()["artifact"], "thermal_0001");
    }
}
