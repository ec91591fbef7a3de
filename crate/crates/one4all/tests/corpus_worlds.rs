//! Contract tests for the shipped world fixtures.

use std::collections::BTreeMap;

use one4all::executor::RobotBackend;
use one4all::schema::load_pool;
use one4all::sim::farm::{load_farm, FarmModel};
use one4all::sim::geo::GpsPoint;
use one4all::sim::rover::HuskyBackend;
use one4all::sim::scene::load_scene;
use one4all::sim::SimWorld;
use one4all::testkit::corpus_root;

fn farm() -> FarmModel {
    load_farm(
        &std::fs::read_to_string(corpus_root().join("worlds/pistachio_farm.geojson")).unwrap(),
    )
    .unwrap()
}

#[test]
fn farm_fixture_has_25_pistachio_trees() {
    let farm = farm();
    assert_eq!(farm.features.len(), 25);
    assert!(farm.features.iter().all(|f| f.species() == Some("pistachio")));
    assert!(!farm.bounds.is_empty());
    for f in &farm.features {
        assert!(farm.bounds.contains(f.point().unwrap()), "{} outside boundary", f.id);
    }
}

#[test]
fn farm_summary_is_deterministic_and_descriptive() {
    let a = farm().summary();
    let b = farm().summary();
    assert_eq!(a, b);
    assert!(a.contains("25 features"));
    assert!(a.contains("pistachio x25"));
}

#[test]
fn rover_reads_the_fixture_values_at_their_trees() {
    let pool = load_pool(&std::fs::read_to_string(corpus_root().join("schemas/husky.xml")).unwrap())
        .unwrap();
    let mut world = SimWorld::new(farm(), Vec::new(), 1);
    let mut rover = HuskyBackend::new(pool, &world);

    let drive = |lat: f64, lon: f64, rover: &mut HuskyBackend, world: &mut SimWorld| {
        let mut params = BTreeMap::new();
        params.insert("lat".to_string(), lat.to_string());
        params.insert("lon".to_string(), lon.to_string());
        let out = rover.execute("drive", "goto_gps", &params, world);
        assert_eq!(out.label, "success");
    };

    // tree_07 carries the 31.5 C reading, tree_12 the 4.2 flux.
    drive(37.30494604, -120.48006784, &mut rover, &mut world);
    let t = rover.execute("t", "read_temperature", &BTreeMap::new(), &mut world);
    assert_eq!(t.value.unwrap()["temperature_c"], 31.5);

    drive(37.305, -120.48006784, &mut rover, &mut world);
    let c = rover.execute("c", "measure_co2", &BTreeMap::new(), &mut world);
    assert_eq!(c.label, "success");
    assert_eq!(c.value.unwrap()["co2_flux"], 4.2);
}

#[test]
fn rover_far_from_any_tree_reads_ambient() {
    let pool = load_pool(&std::fs::read_to_string(corpus_root().join("schemas/husky.xml")).unwrap())
        .unwrap();
    let mut world = SimWorld::new(farm(), Vec::new(), 1);
    let mut rover = HuskyBackend::new(pool, &world);
    // The boundary centroid sits between grid rows, more than 5 m from any
    // tree.
    let start = rover.state.position;
    assert!(world.farm.nearest_feature(start, 5.0).is_none());
    let out = rover.execute("t", "read_temperature", &BTreeMap::new(), &mut world);
    assert_eq!(out.value.unwrap()["temperature_c"], 20.0);
}

#[test]
fn scene_fixture_loads_with_a_visible_pistachio() {
    let scene = load_scene(
        &std::fs::read_to_string(corpus_root().join("worlds/orchard_scene.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(scene.len(), 4);
    let classes: Vec<&str> = scene.iter().map(|o| o.class_name.as_str()).collect();
    for class in ["pistachio", "leaf", "cup"] {
        assert!(classes.contains(&class), "scene lacks a {}", class);
    }
}

#[test]
fn wgs84_bounds_are_enforced_on_load() {
    let bad = r#"{"type":"FeatureCollection","features":[
      {"type":"Feature","id":"t","geometry":{"type":"Point","coordinates":[-120.0,91.0]},"properties":{}}
    ]}"#;
    assert!(load_farm(bad).is_err());
    assert!(!GpsPoint::new(91.0, 0.0).in_wgs84_range());
}
