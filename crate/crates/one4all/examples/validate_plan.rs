//! Validate one good plan and one broken plan, and print the error log the
//! rewrite request would carry.
//!
//! Run with: `cargo run -p one4all --example validate_plan`

use one4all::schema::load_pool;
use one4all::testkit::corpus_root;
use one4all::validator::{render_error_log, validate};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = corpus_root();
    let pools = vec![
        load_pool(&std::fs::read_to_string(root.join("schemas/husky.xml"))?)?,
        load_pool(&std::fs::read_to_string(root.join("schemas/kortex.xml"))?)?,
    ];

    let good = std::fs::read_to_string(root.join("plans/row03_pistachio_nbv_conditionals.xml"))?;
    let (plan, report) = validate(&good, &pools);
    println!("canonical plan approved: {}", report.approved());
    println!("  robot: {}", plan.as_ref().unwrap().robot_id);

    // Break it three ways at once: misspell an action, drop a required
    // parameter, and reference a task before it exists.
    let broken = good
        .replace("action=\"nbv\"", "action=\"nbv_scan\"")
        .replace("<param name=\"class_name\">leaf</param>", "")
        .replace("on=\"find_pistachio\"", "on=\"find_pistachio_later\"");
    let (plan, report) = validate(&broken, &pools);
    assert!(plan.is_none());
    println!("\nbroken plan produced {} errors:", report.errors.len());
    print!("{}", render_error_log(&report));
    Ok(())
}
