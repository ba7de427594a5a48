use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_splitroute"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write(dir: &TempDir, name: &str, content: &str) -> String {
    let path = dir.path().join(name);
    std::fs::write(&path, content).unwrap();
    path.to_str().unwrap().to_string()
}

const MEAL_AGENTS: &str = r#"
{"id": "flight-agent", "intent": "flight", "fixed_scores": {"List available flights": 0.97}}
{"id": "meal-agent", "intent": "meal", "fixed_scores": {"show me meal options for my next flight": 0.92}}
"#;
const MEAL_TEXT: &str = "List available flights and show me meal options for my next flight";

#[test]
fn coordinated_hotel_and_flight_get_two_agents() {
    let dir = TempDir::new().unwrap();
    let agents = write(
        &dir,
        "agents.jsonl",
        r#"{"id": "hotel-agent", "intent": "hotel", "fixed_scores": {"Book a hotel to NYC": 0.95}, "default": 0.3}
{"id": "flight-agent", "intent": "flight", "fixed_scores": {"Book a flight to NYC": 0.95}, "default": 0.3}
"#,
    );
    let out = run(&[
        "parse",
        "--agents",
        &agents,
        "--format",
        "structured",
        "Book a hotel and flight to NYC.",
    ]);
    assert!(out.status.success());
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    let frags: Vec<(&str, &str)> = report["fragments"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| {
            (
                f["fragment"].as_str().unwrap(),
                f["agent"].as_str().unwrap(),
            )
        })
        .collect();
    assert_eq!(
        frags,
        [
            ("Book a hotel to NYC", "hotel-agent"),
            ("Book a flight to NYC", "flight-agent")
        ]
    );
    assert_eq!(report["plan"].as_array().unwrap().len(), 2);
}

#[test]
fn joint_and_average_scores_print() {
    let dir = TempDir::new().unwrap();
    let agents = write(&dir, "agents.jsonl", MEAL_AGENTS);
    let avg = stdout(&run(&[
        "parse", "--agents", &agents, "--mode", "average", MEAL_TEXT,
    ]));
    let joint = stdout(&run(&[
        "parse", "--agents", &agents, "--mode", "joint", MEAL_TEXT,
    ]));
    assert!(avg.contains("score 0.945 (average)"), "{avg}");
    assert!(joint.contains("score 0.8924 (joint)"), "{joint}");
    assert!(avg.contains("plan: flight-agent -> meal-agent"), "{avg}");
}

#[test]
fn flags_override_the_config_file() {
    let dir = TempDir::new().unwrap();
    let agents = write(&dir, "agents.jsonl", MEAL_AGENTS);
    let config = write(&dir, "c.toml", "mode = \"joint\"\ndelta = 0.4\n");
    let from_file = stdout(&run(&[
        "parse", "--agents", &agents, "--config", &config, MEAL_TEXT,
    ]));
    assert!(from_file.contains("(joint)"), "{from_file}");
    let overridden = stdout(&run(&[
        "parse", "--agents", &agents, "--config", &config, "--mode", "average", MEAL_TEXT,
    ]));
    assert!(overridden.contains("score 0.945 (average)"), "{overridden}");

    // a delta above every confidence leaves nothing to execute
    let strict = stdout(&run(&[
        "parse", "--agents", &agents, "--delta", "0.99", MEAL_TEXT,
    ]));
    assert!(
        strict.contains("plan: no agent reached delta 0.99"),
        "{strict}"
    );
}

#[test]
fn explain_dumps_the_tree() {
    let dir = TempDir::new().unwrap();
    let agents = write(&dir, "agents.jsonl", MEAL_AGENTS);
    let out = stdout(&run(&[
        "parse",
        "--agents",
        &agents,
        "--explain",
        MEAL_TEXT,
    ]));
    assert!(out.contains("node 0 depth=0"), "{out}");
    assert!(out.contains("<= optimal"), "{out}");
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let agents = write(&dir, "agents.jsonl", MEAL_AGENTS);
    assert_eq!(
        run(&["parse", "--agents", &agents, ""]).status.code(),
        Some(1)
    );
    assert_eq!(
        run(&["parse", "--agents", &agents, "   "]).status.code(),
        Some(1)
    );
    assert_eq!(run(&["parse", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(run(&["parse", "hello there"]).status.code(), Some(1));
    assert_eq!(
        run(&["parse", "--agents", "/nonexistent/agents.jsonl", "hi there"])
            .status
            .code(),
        Some(2)
    );

    let bad_config = write(&dir, "bad.toml", "delta = 7.0\n");
    let out = run(&[
        "parse",
        "--agents",
        &agents,
        "--config",
        &bad_config,
        MEAL_TEXT,
    ]);
    assert_eq!(out.status.code(), Some(2));
    let unknown = write(&dir, "unknown.toml", "detla = 0.2\n");
    assert_eq!(
        run(&["parse", "--agents", &agents, "--config", &unknown, MEAL_TEXT])
            .status
            .code(),
        Some(2)
    );

    let empty_agents = write(&dir, "empty.jsonl", "");
    assert_eq!(
        run(&["parse", "--agents", &empty_agents, MEAL_TEXT])
            .status
            .code(),
        Some(2)
    );
    assert!(run(&["--help"]).status.success());
}

#[test]
fn bench_on_empty_or_missing_dataset_fails() {
    let dir = TempDir::new().unwrap();
    let agents = data("four_outcomes_agents.jsonl");
    let agents = agents.to_str().unwrap();
    let empty = write(&dir, "empty.jsonl", "");
    let out = run(&["bench", "--agents", agents, &empty]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
    assert_eq!(
        run(&["bench", "--agents", agents, "/nonexistent.jsonl"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn bench_reports_one_instance_per_category() {
    let agents = data("four_outcomes_agents.jsonl");
    let dataset = data("four_outcomes.jsonl");
    let out = run(&[
        "bench",
        "--agents",
        agents.to_str().unwrap(),
        dataset.to_str().unwrap(),
        "--format",
        "structured",
    ]);
    assert!(out.status.success());
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    for cat in ["CPCA", "CPWA", "WPCA", "WPWA"] {
        assert_eq!(report["counts"][cat], 1, "{cat}");
    }
    assert!(report.get("timing").is_none());
}

#[test]
fn structured_bench_reports_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let first = dir.path().join("a.json");
    let second = dir.path().join("b.json");
    let mut stdouts = Vec::new();
    for path in [&first, &second] {
        let out = run(&[
            "bench",
            "--synthetic",
            "60",
            "--seed",
            "9",
            "--format",
            "structured",
            "--report",
            path.to_str().unwrap(),
        ]);
        assert!(out.status.success());
        stdouts.push(out.stdout);
    }
    assert_eq!(stdouts[0], stdouts[1]);
    let a = std::fs::read(&first).unwrap();
    assert_eq!(a, std::fs::read(&second).unwrap());
    assert_eq!(a, stdouts[0]);
}

#[test]
fn batch_records_one_line_per_request() {
    let dir = TempDir::new().unwrap();
    let agents = write(&dir, "agents.jsonl", MEAL_AGENTS);
    let requests = write(
        &dir,
        "requests.jsonl",
        &format!("{{\"text\": \"{MEAL_TEXT}\"}}\n\n{{\"text\": \"nothing here\"}}\n"),
    );
    let out = run(&[
        "parse",
        "--agents",
        &agents,
        "--batch",
        &requests,
        "--format",
        "structured",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let records: Vec<Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(records.len(), 2);
    assert_eq!(records[0]["plan"].as_array().unwrap().len(), 2);
    assert_eq!(
        records[0]["responses"][1]["response"],
        "meal-agent handled: show me meal options for my next flight"
    );
    assert_eq!(records[1]["status"], "no_capable_agent");
    assert!(records[0].get("elapsed_ms").is_none());

    let timed = run(&[
        "parse",
        "--agents",
        &agents,
        "--batch",
        &requests,
        "--format",
        "structured",
        "--timing",
    ]);
    let first: Value = serde_json::from_str(stdout(&timed).lines().next().unwrap()).unwrap();
    assert!(first["elapsed_ms"].as_f64().unwrap() >= 0.0);
}

#[test]
fn trained_model_backs_agent_definitions() {
    let dir = TempDir::new().unwrap();
    let model = dir.path().join("model.json");
    let defs = data("travel_agents.jsonl");
    let before = std::fs::read(&defs).unwrap();
    let out = run(&[
        "train",
        "--agents",
        defs.to_str().unwrap(),
        "--output",
        model.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout(&out).starts_with("trained 4 intents"));
    assert_eq!(before, std::fs::read(&defs).unwrap());

    let agents = write(
        &dir,
        "model_agents.jsonl",
        r#"{"id": "flight-agent", "intent": "flight", "model": "model.json"}
{"id": "hotel-agent", "intent": "hotel", "model": "model.json"}
"#,
    );
    let out = run(&[
        "parse",
        "--agents",
        &agents,
        "--format",
        "structured",
        "book me a hotel in boston",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["fragments"][0]["agent"], "hotel-agent");

    let same = run(&[
        "train",
        "--agents",
        defs.to_str().unwrap(),
        "--output",
        defs.to_str().unwrap(),
    ]);
    assert_eq!(same.status.code(), Some(1));
}

fn chat(agents: &Path, input: &str) -> (Output, String) {
    let mut child = bin()
        .args(["chat", "--agents", agents.to_str().unwrap()])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(input.as_bytes())
        .unwrap();
    let out = child.wait_with_output().unwrap();
    let text = stdout(&out);
    (out, text)
}

#[test]
fn chat_routes_fragments_in_text_order() {
    let (out, text) = chat(
        &data("borrowers.jsonl"),
        "List all borrower data and plot it.\nexit\n",
    );
    assert!(out.status.success());
    let nlq = text
        .find("nlq-agent handled: List all borrower data")
        .expect(&text);
    let viz = text.find("viz-agent handled: plot it").expect(&text);
    assert!(nlq < viz);
}

#[test]
fn chat_skips_blank_lines_and_stops_at_exit() {
    let (out, text) = chat(
        &data("borrowers.jsonl"),
        "   \n\t\nlist all borrowers by zip code and yearly income\nexit\nplot it\n",
    );
    assert!(out.status.success());
    assert_eq!(text.matches("handled:").count(), 1, "{text}");
    assert!(text.contains("nlq-agent handled: list all borrowers by zip code and yearly income"));
    // one prompt per line read: two blanks, one utterance, exit
    assert_eq!(
        text.matches("> ").count() - text.matches("-> ").count(),
        4,
        "{text}"
    );
}

#[test]
fn chat_ends_at_end_of_input() {
    let (out, text) = chat(&data("borrowers.jsonl"), "plot it\n");
    assert!(out.status.success());
    assert!(text.contains("viz-agent handled: plot it"));
}
