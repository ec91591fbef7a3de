//! Load the robot capability schemas and render them the way the planner
//! shows them to the model.
//!
//! Run with: `cargo run -p one4all --example load_schemas`

use one4all::schema::{load_pool, render_context};
use one4all::testkit::corpus_root;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let schemas = corpus_root().join("schemas");
    let mut pools = Vec::new();
    for name in ["husky.xml", "kortex.xml"] {
        let text = std::fs::read_to_string(schemas.join(name))?;
        let pool = load_pool(&text)?;
        println!(
            "loaded {:<8} v{} with {} actions",
            pool.robot_id,
            pool.schema_version,
            pool.actions.len()
        );
        pools.push(pool);
    }

    println!("\n--- rendered planner context ---");
    print!("{}", render_context(&pools));

    let kortex = &pools[1];
    let nbv = kortex.lookup("nbv").expect("kortex declares nbv");
    println!("--- one spec in detail ---");
    println!("action {:?}: {}", nbv.name, nbv.doc);
    for p in &nbv.params {
        println!(
            "  param {:<14} kind {:<7} required {}",
            p.name,
            p.kind.as_str(),
            p.required
        );
    }
    Ok(())
}
