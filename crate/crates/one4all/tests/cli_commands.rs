//! Exit-code and behavior tests for the command layer, driven in-process.

use std::path::{Path, PathBuf};

use one4all::cli::{
    cmd_e2e, cmd_execute, cmd_plan, cmd_validate, GatewayMode, RunConfig, EXIT_CONFIG,
    EXIT_INVALID, EXIT_MISSION_FAILED, EXIT_OK, EXIT_REFUSED,
};
use one4all::executor::trace_from_ndjson;
use one4all::plan::{count_nodes, parse_plan};
use one4all::testkit::corpus_root;

fn config_with(output: &Path) -> RunConfig {
    RunConfig {
        context_dir: corpus_root(),
        gateway_mode: GatewayMode::Mock,
        addr: "127.0.0.1:0".to_string(),
        seed: 11,
        output_dir: output.to_path_buf(),
        ..RunConfig::default()
    }
}

fn run_plan(query: &str, config: &RunConfig) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = cmd_plan(query, config, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn plan_known_query_prints_two_node_plan() {
    let tmp = tempfile::tempdir().unwrap();
    let config = config_with(tmp.path());
    let (code, stdout, _) = run_plan("Find pistachio and take NBV", &config);
    assert_eq!(code, EXIT_OK);
    let plan = parse_plan(&stdout).expect("stdout is the plan document");
    assert_eq!(count_nodes(&plan).total(), 2);
    assert_eq!(plan.robot_id, "kortex");
    assert!(tmp.path().join("transcript.json").exists());
}

#[test]
fn plan_gibberish_is_refused_with_explanation() {
    let tmp = tempfile::tempdir().unwrap();
    let config = config_with(tmp.path());
    let (code, stdout, stderr) = run_plan("blorp fizzle quux", &config);
    assert_eq!(code, EXIT_REFUSED);
    assert!(stdout.is_empty());
    assert!(stderr.contains("refused"));
}

#[test]
fn plan_with_missing_context_is_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let config = RunConfig {
        context_dir: PathBuf::from("/nonexistent_context"),
        output_dir: tmp.path().to_path_buf(),
        ..RunConfig::default()
    };
    let (code, _, stderr) = run_plan("Find pistachio and take NBV", &config);
    assert_eq!(code, EXIT_CONFIG);
    assert!(stderr.contains("error"));
}

#[test]
fn plan_is_idempotent_for_fixed_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let config = config_with(tmp.path());
    let first = run_plan("Move in a square", &config);
    let second = run_plan("Move in a square", &config);
    assert_eq!(first, second);
    assert_eq!(first.0, EXIT_OK);
}

#[test]
fn validate_corpus_plan_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let config = config_with(tmp.path());
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = cmd_validate(
        &corpus_root().join("plans/row03_pistachio_nbv_conditionals.xml"),
        &config,
        &mut out,
        &mut err,
    );
    assert_eq!(code, EXIT_OK, "{}", String::from_utf8_lossy(&err));
    assert!(String::from_utf8(out).unwrap().contains("approved"));
}

#[test]
fn validate_renamed_action_fails_with_unknown_action() {
    let tmp = tempfile::tempdir().unwrap();
    let config = config_with(tmp.path());
    let xml = std::fs::read_to_string(corpus_root().join("plans/row01_find_pistachio_nbv.xml"))
        .unwrap()
        .replace("detect_object", "sense_object");
    let mutated = tmp.path().join("mutated.xml");
    std::fs::write(&mutated, xml).unwrap();

    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = cmd_validate(&mutated, &config, &mut out, &mut err);
    assert_eq!(code, EXIT_INVALID);
    assert!(String::from_utf8(out).unwrap().contains("UNKNOWN_ACTION"));
}

#[test]
fn validate_non_xml_fails_with_xml_syntax() {
    let tmp = tempfile::tempdir().unwrap();
    let config = config_with(tmp.path());
    let junk = tmp.path().join("junk.txt");
    std::fs::write(&junk, "this is not a mission plan").unwrap();

    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = cmd_validate(&junk, &config, &mut out, &mut err);
    assert_eq!(code, EXIT_INVALID);
    assert!(String::from_utf8(out).unwrap().contains("XML_SYNTAX"));
}

/// A context whose scene has no detectable objects: every detect fails, every
/// failure is consumed by a conditional, and the mission still completes.
#[test]
fn execute_with_empty_scene_completes_via_else_paths() {
    let tmp = tempfile::tempdir().unwrap();
    let context = tmp.path().join("context");
    std::fs::create_dir_all(context.join("schemas")).unwrap();
    std::fs::create_dir_all(context.join("worlds")).unwrap();
    for schema in ["husky.xml", "kortex.xml"] {
        std::fs::copy(
            corpus_root().join("schemas").join(schema),
            context.join("schemas").join(schema),
        )
        .unwrap();
    }
    std::fs::copy(
        corpus_root().join("worlds/pistachio_farm.geojson"),
        context.join("worlds/pistachio_farm.geojson"),
    )
    .unwrap();
    std::fs::write(context.join("worlds/empty_scene.json"), "[]").unwrap();

    let config = RunConfig {
        context_dir: context,
        seed: 11,
        output_dir: tmp.path().join("out"),
        ..RunConfig::default()
    };
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = cmd_execute(
        &corpus_root().join("plans/row03_pistachio_nbv_conditionals.xml"),
        &config,
        &mut out,
        &mut err,
    );
    assert_eq!(code, EXIT_OK, "{}", String::from_utf8_lossy(&err));

    let trace_text = std::fs::read_to_string(
        tmp.path().join("out/traces/row03_pistachio_nbv_conditionals.ndjson"),
    )
    .unwrap();
    let trace = trace_from_ndjson(&trace_text).unwrap();
    assert_eq!(
        trace.dispatched_ids(),
        vec!["find_pistachio", "search_move", "find_again", "move_to_new_spot", "find_leaf"],
        "recovery branch then the tail, by hand trace"
    );
    assert!(trace.entries.iter().all(|e| {
        e.action != "detect_object" || e.outcome.label == "failure"
    }));
}

#[test]
fn execute_invalid_plan_is_validation_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let config = config_with(tmp.path());
    let bad = tmp.path().join("bad.xml");
    std::fs::write(&bad, "<mission id=\"m\" robot=\"husky\"><task id=\"t\" action=\"fly\"/></mission>").unwrap();
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = cmd_execute(&bad, &config, &mut out, &mut err);
    assert_eq!(code, EXIT_INVALID);
}

#[test]
fn serve_on_occupied_port_is_config_error() {
    let blocker = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = blocker.local_addr().unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let config = RunConfig {
        context_dir: corpus_root(),
        addr: addr.to_string(),
        output_dir: tmp.path().to_path_buf(),
        ..RunConfig::default()
    };
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = one4all::cli::cmd_serve(&config, &mut out, &mut err);
    assert_eq!(code, EXIT_CONFIG);
    assert!(String::from_utf8(err).unwrap().contains("cannot bind"));
}

#[test]
fn e2e_find_pistachio_completes() {
    let tmp = tempfile::tempdir().unwrap();
    let config = config_with(tmp.path());
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = cmd_e2e("Find pistachio and take NBV", &config, &mut out, &mut err);
    assert_eq!(code, EXIT_OK, "{}", String::from_utf8_lossy(&err));
    let stdout = String::from_utf8(out).unwrap();
    assert!(stdout.contains("completed"));
    assert!(tmp
        .path()
        .join("traces/row01_find_pistachio_nbv.ndjson")
        .exists());
}

#[test]
fn mission_that_fails_exits_5() {
    // A plan whose only task fails unconsumed: detect a class that is not in
    // the scene, with no conditional to absorb it.
    let tmp = tempfile::tempdir().unwrap();
    let config = config_with(tmp.path());
    let plan = tmp.path().join("doomed.xml");
    std::fs::write(
        &plan,
        r#"<mission id="doomed" robot="kortex">
          <sequence>
            <task id="find" action="detect_object"><param name="class_name">durian</param></task>
          </sequence>
        </mission>"#,
    )
    .unwrap();
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = cmd_execute(&plan, &config, &mut out, &mut err);
    assert_eq!(code, EXIT_MISSION_FAILED);
}

#[test]
fn config_file_values_apply() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("one4all.toml");
    std::fs::write(
        &file,
        r#"
context = "/some/context"
gateway = "mock"
seed = 99
temperature = 0.7
addr = "127.0.0.1:9000"
"#,
    )
    .unwrap();
    let config = RunConfig::default().with_file(&file).unwrap();
    assert_eq!(config.context_dir, PathBuf::from("/some/context"));
    assert_eq!(config.seed, 99);
    assert_eq!(config.temperature, 0.7);
    assert_eq!(config.addr, "127.0.0.1:9000");
    // Unset keys keep their defaults.
    assert_eq!(config.max_tokens, 4096);
}

#[test]
fn bad_config_file_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("broken.toml");
    std::fs::write(&file, "gateway = \"carrier-pigeon\"").unwrap();
    assert!(RunConfig::default().with_file(&file).is_err());
}
