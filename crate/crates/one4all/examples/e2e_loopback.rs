//! The whole pipeline in one process: mock-gateway planning, approval, TCP
//! hand-off to a local executor service, execution on the simulated world,
//! and report retrieval — exactly what `one4all e2e` does.
//!
//! Run with: `cargo run -p one4all --example e2e_loopback`

use one4all::cli::{cmd_e2e, GatewayMode, RunConfig};
use one4all::testkit::corpus_root;

fn main() {
    let output = std::env::temp_dir().join("one4all_e2e_example");
    let config = RunConfig {
        context_dir: corpus_root(),
        gateway_mode: GatewayMode::Mock,
        addr: "127.0.0.1:0".to_string(),
        seed: 7,
        output_dir: output.clone(),
        ..RunConfig::default()
    };

    let query = "Look for a pistachio. If you find one, take NBV and pick it. If not, make a \
                 random move to find another one. If you find this one, NBV and pick. Next, move \
                 to another random spot and look for a leaf. If found, grab the leaf and move home.";

    let mut stdout = std::io::stdout();
    let mut stderr = std::io::stderr();
    let code = cmd_e2e(query, &config, &mut stdout, &mut stderr);
    println!("\nexit code: {}", code);
    println!("trace written under {}", output.join("traces").display());
    std::process::exit(code);
}
