//! Hand a validated plan to an executor service over TCP and pull the report
//! afterwards: length-prefixed JSON frames, checksum on the plan body,
//! pull-based reports.
//!
//! Run with: `cargo run -p one4all --example tcp_handoff`

use std::time::Duration;

use one4all::executor::trace_from_ndjson;
use one4all::plan::parse_plan;
use one4all::schema::load_pool;
use one4all::service::{serve, RobotHost, ServiceConfig};
use one4all::sim::arm::KortexBackend;
use one4all::sim::farm::load_farm;
use one4all::sim::scene::load_scene;
use one4all::sim::SimWorld;
use one4all::testkit::corpus_root;
use one4all::wire::{Message, ReportStatus, WireClient};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = corpus_root();
    let pool = load_pool(&std::fs::read_to_string(root.join("schemas/kortex.xml"))?)?;
    let farm = load_farm(&std::fs::read_to_string(root.join("worlds/pistachio_farm.geojson"))?)?;
    let scene = load_scene(&std::fs::read_to_string(root.join("worlds/orchard_scene.json"))?)?;

    let hosts = vec![RobotHost {
        pool,
        world: SimWorld::new(farm, scene, 7),
        make_backend: Box::new(|pool, _| Box::new(KortexBackend::new(pool.clone()))),
    }];
    let handle = serve("127.0.0.1:0", hosts, ServiceConfig { seed: 7, ..Default::default() })?;
    println!("executor service on {}", handle.local_addr());

    let plan = parse_plan(&std::fs::read_to_string(root.join("plans/row08_move_in_square.xml"))?)?;
    let mut client = WireClient::connect(handle.local_addr(), Duration::from_secs(5))?;

    match client.submit(&plan)? {
        Message::Ack { accepted, reason, .. } => {
            println!("submit {} -> accepted: {} {:?}", plan.mission_id, accepted, reason)
        }
        other => println!("unexpected reply: {:?}", other),
    }

    // Reports are pull-based; unknown means "not finished yet" too.
    loop {
        match client.fetch_report(&plan.mission_id)? {
            Message::Report { status: ReportStatus::Unknown, .. } => {
                std::thread::sleep(Duration::from_millis(10));
            }
            Message::Report { status, trace, .. } => {
                println!("report: {:?}", status);
                let trace = trace_from_ndjson(&trace)?;
                for e in &trace.entries {
                    println!("  [{:>5.1}s] {} -> {}", e.t, e.outcome.task_id, e.outcome.label);
                }
                break;
            }
            other => println!("unexpected reply: {:?}", other),
        }
    }

    // A second submission with the same mission id is refused.
    if let Message::Ack { accepted, reason, .. } = client.submit(&plan)? {
        println!("resubmit -> accepted: {} ({})", accepted, reason.unwrap_or_default());
    }

    handle.stop();
    Ok(())
}
