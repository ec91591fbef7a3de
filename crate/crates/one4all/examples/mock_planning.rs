//! The approval loop end to end with a deterministic mock gateway: the first
//! response is broken XML, so the planner sends a rewrite request carrying
//! the validation error log, and the second response is the real plan.
//!
//! Run with: `cargo run -p one4all --example mock_planning`

use one4all::gateway::{FaultTag, MockGateway, ScriptStep};
use one4all::plan::count_nodes;
use one4all::planner::{plan, ContextBundle, GatewayConfig, PlanningOutcome};
use one4all::schema::load_pool;
use one4all::sim::farm::load_farm;
use one4all::testkit::corpus_root;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = corpus_root();
    let pools = vec![
        load_pool(&std::fs::read_to_string(root.join("schemas/husky.xml"))?)?,
        load_pool(&std::fs::read_to_string(root.join("schemas/kortex.xml"))?)?,
    ];
    let farm = load_farm(&std::fs::read_to_string(root.join("worlds/pistachio_farm.geojson"))?)?;
    let bundle = ContextBundle::new(pools).with_farm(farm);

    let tour = std::fs::read_to_string(root.join("plans/row03_pistachio_nbv_conditionals.xml"))?;
    let mut gateway = MockGateway::with_script(vec![
        ScriptStep { match_contains: None, response: FaultTag::MalformedXml.response() },
        ScriptStep { match_contains: Some("REWRITE REQUEST".into()), response: tour },
    ]);

    let query = "Look for a pistachio. If you find one, take NBV and pick it.";
    let result = plan(&bundle, query, &mut gateway, &GatewayConfig::default())?;

    for (i, entry) in result.transcript.iter().enumerate() {
        println!(
            "attempt {}: prompt {} bytes, response {} bytes{}",
            i + 1,
            entry.prompt.len(),
            entry.response.len(),
            if entry.prompt.contains("REWRITE REQUEST") { " (rewrite request)" } else { "" }
        );
    }
    match result.outcome {
        PlanningOutcome::Approved { plan, attempts_used } => {
            let count = count_nodes(&plan);
            println!(
                "\napproved after {} attempts: {} for {} ({} tasks, {} conditionals)",
                attempts_used, plan.mission_id, plan.robot_id, count.tasks, count.conditionals
            );
        }
        other => println!("\nunexpected outcome: {:?}", other),
    }
    println!("gateway served {} completions", gateway.calls());
    Ok(())
}
