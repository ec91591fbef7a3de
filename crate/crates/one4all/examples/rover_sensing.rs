//! Drive the wheeled rover between orchard trees and take readings: GPS
//! motion with haversine durations, proximal sensing with a low-reading
//! outcome label.
//!
//! Run with: `cargo run -p one4all --example rover_sensing`

use std::collections::BTreeMap;

use one4all::executor::RobotBackend;
use one4all::schema::load_pool;
use one4all::sim::farm::load_farm;
use one4all::sim::rover::HuskyBackend;
use one4all::sim::SimWorld;
use one4all::testkit::corpus_root;

fn params(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = corpus_root();
    let pool = load_pool(&std::fs::read_to_string(root.join("schemas/husky.xml"))?)?;
    let farm = load_farm(&std::fs::read_to_string(root.join("worlds/pistachio_farm.geojson"))?)?;
    let mut world = SimWorld::new(farm, Vec::new(), 42);
    let mut rover = HuskyBackend::new(pool, &world);

    println!(
        "rover starts at {:.6},{:.6} ({} m/s)",
        rover.state.position.lat, rover.state.position.lon, rover.state.speed_mps
    );

    // tree_07 is a warm tree, tree_20 a cold one, tree_05 has low CO2 flux.
    let stops = [
        ("tree_07", "37.30494604", "-120.48006784"),
        ("tree_20", "37.30505396", "-120.47986432"),
        ("tree_05", "37.30489208", "-120.47986432"),
    ];
    for (name, lat, lon) in stops {
        let drive = rover.execute(
            &format!("goto_{}", name),
            "goto_gps",
            &params(&[("lat", lat), ("lon", lon)]),
            &mut world,
        );
        println!("\ndrive to {}: {} in {:.1} s", name, drive.label, drive.duration_s);

        for sensor in ["read_temperature", "measure_co2", "take_thermal_image"] {
            let out = rover.execute(
                &format!("{}_{}", sensor, name),
                sensor,
                &BTreeMap::new(),
                &mut world,
            );
            println!(
                "  {:<18} -> {:<8} {}",
                sensor,
                out.label,
                out.value.map(|v| v.to_string()).unwrap_or_default()
            );
        }
    }

    // Out-of-bounds targets are refused without moving.
    let nope = rover.execute(
        "escape",
        "goto_gps",
        &params(&[("lat", "37.4"), ("lon", "-120.48")]),
        &mut world,
    );
    println!("\nleaving the farm: {} ({})", nope.label, nope.value.unwrap()["reason"]);
    println!("virtual clock after the tour: {:.1} s", world.now());
    Ok(())
}
