//! Contract tests for the shipped capability schemas.

use one4all::schema::{load_pool, render_context, serialize_pool, ActionPool};
use one4all::testkit::corpus_root;

fn husky() -> ActionPool {
    load_pool(&std::fs::read_to_string(corpus_root().join("schemas/husky.xml")).unwrap()).unwrap()
}

fn kortex() -> ActionPool {
    load_pool(&std::fs::read_to_string(corpus_root().join("schemas/kortex.xml")).unwrap()).unwrap()
}

#[test]
fn husky_pool_has_exactly_the_four_rover_actions() {
    let pool = husky();
    assert_eq!(pool.robot_id, "husky");
    assert_eq!(pool.actions.len(), 4);
    for action in ["goto_gps", "read_temperature", "take_thermal_image", "measure_co2"] {
        assert!(pool.lookup(action).is_some(), "husky missing {}", action);
    }
}

#[test]
fn kortex_pool_covers_the_manipulator_actions() {
    let pool = kortex();
    assert_eq!(pool.robot_id, "kortex");
    for action in ["move_pose", "detect_object", "capture_image", "nbv", "pick"] {
        assert!(pool.lookup(action).is_some(), "kortex missing {}", action);
    }
}

#[test]
fn goto_gps_takes_lat_lon() {
    let pool = husky();
    let spec = pool.lookup("goto_gps").unwrap();
    let names: Vec<&str> = spec.params.iter().map(|p| p.name.as_str()).collect();
    assert_eq!(names, vec!["lat", "lon"]);
    assert!(spec.params.iter().all(|p| p.required));
}

#[test]
fn cross_robot_lookup_is_absent() {
    assert!(husky().lookup("pick").is_none());
    assert!(kortex().lookup("goto_gps").is_none());
}

#[test]
fn nbv_requires_a_target_object() {
    let pool = kortex();
    let spec = pool.lookup("nbv").unwrap();
    let target = spec.param("target_object").expect("nbv declares target_object");
    assert!(target.required);
    assert!(!spec.param("k").unwrap().required);
    assert!(!spec.param("radius").unwrap().required);
}

#[test]
fn rendered_context_mentions_each_husky_action_exactly_once() {
    let text = render_context(&[husky()]);
    for action in ["goto_gps", "read_temperature", "take_thermal_image", "measure_co2"] {
        let hits = text.matches(&format!("- {}(", action)).count();
        assert_eq!(hits, 1, "{} appears {} times", action, hits);
    }
}

#[test]
fn corpus_schemas_round_trip_through_the_serializer() {
    for pool in [husky(), kortex()] {
        assert_eq!(load_pool(&serialize_pool(&pool)).unwrap(), pool);
    }
}
