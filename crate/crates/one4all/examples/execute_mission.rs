//! Interpret the richest canonical mission against the simulated tabletop
//! scene and walk through the recorded trace.
//!
//! Run with: `cargo run -p one4all --example execute_mission`

use one4all::executor::{run, RunnerConfig};
use one4all::plan::parse_plan;
use one4all::schema::load_pool;
use one4all::sim::arm::KortexBackend;
use one4all::sim::farm::load_farm;
use one4all::sim::scene::load_scene;
use one4all::sim::SimWorld;
use one4all::testkit::corpus_root;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = corpus_root();
    let pool = load_pool(&std::fs::read_to_string(root.join("schemas/kortex.xml"))?)?;
    let plan = parse_plan(&std::fs::read_to_string(
        root.join("plans/row03_pistachio_nbv_conditionals.xml"),
    )?)?;

    let farm = load_farm(&std::fs::read_to_string(root.join("worlds/pistachio_farm.geojson"))?)?;
    let scene = load_scene(&std::fs::read_to_string(root.join("worlds/orchard_scene.json"))?)?;
    let mut world = SimWorld::new(farm, scene, 7);
    let mut backend = KortexBackend::new(pool);

    let trace = run(&plan, &mut backend, &mut world, &RunnerConfig::default());

    println!("mission {} -> {:?}", trace.mission_id, trace.final_status);
    for entry in &trace.entries {
        println!(
            "  [{:>6.1}s] {:<16} {:<14} -> {:<8} at {}",
            entry.t, entry.outcome.task_id, entry.action, entry.outcome.label, entry.path
        );
        if let Some(value) = &entry.outcome.value {
            println!("            value: {}", value);
        }
    }
    println!(
        "\n{} point-cloud points captured during the sweep; gripper holding {:?}",
        backend.last_cloud().len(),
        backend.state.gripper_holding
    );
    Ok(())
}
