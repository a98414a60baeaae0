use std::fs;
use std::path::Path;
use std::process::Command;

use cascade_cli::exit;
use cascade_cli::run::parse_seeds;

fn cascade() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cascade"))
}

fn minimal() -> String {
    format!("{}/../../scenarios/minimal.json", env!("CARGO_MANIFEST_DIR"))
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn run_writes_identical_outputs_twice() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let run = cascade()
            .args(["run", "--scenario", &minimal(), "--seeds", "1..3", "--out"])
            .arg(out)
            .output()
            .unwrap();
        assert_eq!(run.status.code(), Some(exit::SUCCESS));
    }
    let (ta, tb) = (read_tree(&a), read_tree(&b));
    let names: Vec<_> = ta.iter().map(|(n, _)| n.as_str()).collect();
    for want in [
        "aggregate.json",
        "aggregate.csv",
        "seed-1/traces.ndjson",
        "seed-2/report.json",
        "seed-3/report.csv",
    ] {
        assert!(names.contains(&want), "missing {want} in {names:?}");
    }
    assert_eq!(ta, tb);
}

#[test]
fn invalid_scenario_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"schema_version": 1, "name": "x"}"#).unwrap();
    let out = cascade()
        .args(["run", "--scenario"])
        .arg(&bad)
        .args(["--seeds", "1", "--out"])
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(exit::USAGE));
    assert!(!out.stderr.is_empty());
}

#[test]
fn verify_filter_runs_only_named_checks() {
    let out = cascade().args(["verify", "--filter", "dual,metrics"]).output().unwrap();
    assert_eq!(out.status.code(), Some(exit::SUCCESS));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<_> = stdout
        .lines()
        .filter(|l| l.starts_with("PASS") || l.starts_with("FAIL"))
        .collect();
    assert_eq!(lines.len(), 2, "{stdout}");
    assert!(lines[0].contains("dual") && lines[1].contains("metrics"));
}

#[test]
fn verify_unknown_check_is_a_usage_error() {
    let out = cascade().args(["verify", "--filter", "nope"]).output().unwrap();
    assert_eq!(out.status.code(), Some(exit::USAGE));
}

#[test]
fn loosened_power_tolerance_fails_the_spectral_check() {
    let out = cascade()
        .args(["verify", "--filter", "spectral", "--power-tol", "0.5"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(exit::CHECK_FAILED));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL spectral"));
}

#[test]
fn seed_lists_and_ranges() {
    assert_eq!(parse_seeds("1,2,3").unwrap(), vec![1, 2, 3]);
    assert_eq!(parse_seeds("4..6").unwrap(), vec![4, 5, 6]);
    assert!(parse_seeds("").is_err());
    assert!(parse_seeds("3..1").is_err());
}

fn free_port() -> u16 {
    std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port()
}

fn wait_for_health(base: &str) -> bool {
    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    for _ in 0..100 {
        if let Ok(resp) = agent.get(&format!("{base}/v1/health")).call() {
            return resp.status().as_u16() == 200;
        }
        std::thread::sleep(std::time::Duration::from_millis(50));
    }
    false
}

#[cfg(unix)]
#[test]
fn serve_answers_health_persists_and_stops_on_sigterm() {
    let tmp = tempfile::tempdir().unwrap();
    let port = free_port();
    let mut child = cascade()
        .args(["serve", "--bind", &format!("127.0.0.1:{port}"), "--persist"])
        .arg(tmp.path())
        .stderr(std::process::Stdio::null())
        .spawn()
        .unwrap();
    let base = format!("http://127.0.0.1:{port}");
    let healthy = wait_for_health(&base);
    if healthy {
        let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
        let resp = agent
            .post(&format!("{base}/v1/simulations"))
            .send_json(serde_json::json!({ "case": "minimal", "seed": 1 }))
            .unwrap();
        assert_eq!(resp.status().as_u16(), 201);
    }
    Command::new("kill")
        .args(["-TERM", &child.id().to_string()])
        .status()
        .unwrap();
    let status = child.wait().unwrap();
    assert!(healthy, "service never answered /v1/health");
    assert_eq!(status.code(), Some(exit::SUCCESS));
    let persisted: Vec<_> = fs::read_dir(tmp.path()).unwrap().collect();
    assert_eq!(persisted.len(), 1);
}

#[test]
fn serve_reports_a_port_conflict() {
    let held = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = held.local_addr().unwrap();
    let out = cascade().args(["serve", "--bind", &addr.to_string()]).output().unwrap();
    assert_eq!(out.status.code(), Some(exit::CHECK_FAILED));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot bind"));
}
