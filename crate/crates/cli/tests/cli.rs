use std::path::Path;
use std::process::{Command, Output};

use ncstab::io::NetworkFile;

fn ncstab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ncstab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn generate(dir: &Path, name: &str, args: &[&str]) -> String {
    let path = dir.join(name).to_str().unwrap().to_string();
    let mut all = vec!["generate"];
    all.extend_from_slice(args);
    all.extend_from_slice(&["--output", &path]);
    let out = ncstab(&all);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    path
}

fn value_after(text: &str, prefix: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(prefix))
        .unwrap_or_else(|| panic!("no '{prefix}' in {text}"))
        .trim()
        .parse()
        .unwrap()
}

#[test]
fn generated_uni_ring_rates() {
    let dir = tempfile::tempdir().unwrap();
    let path = generate(
        dir.path(),
        "ring.json",
        &["uni-ring", "--n", "10", "--u", "0.5"],
    );
    let file = NetworkFile::parse(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(file.servers.len(), 10);
    assert!(file.servers.iter().all(|s| (s.rate - 20.0).abs() < 1e-12));
    assert_eq!(file.flows[1].path, vec![2, 3, 4, 5, 6, 7, 8, 9, 10, 1]);
    assert_eq!(file.removed_arcs, Some(vec![[10, 1]]));
    assert!(file.network().unwrap().local_stability().stable);
}

#[test]
fn generated_bi_ring_paths() {
    let dir = tempfile::tempdir().unwrap();
    let path = generate(dir.path(), "bi.json", &["bi_ring", "--n", "3"]);
    let file = NetworkFile::parse(&std::fs::read_to_string(path).unwrap()).unwrap();
    let paths: Vec<Vec<usize>> = file.flows.iter().map(|f| f.path.clone()).collect();
    assert_eq!(
        paths,
        vec![
            vec![1, 2, 3],
            vec![2, 3, 1],
            vec![3, 1, 2],
            vec![3, 2, 1],
            vec![2, 1, 3],
            vec![3, 2, 1]
        ]
    );
}

#[test]
fn fig2_delay_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let path = generate(dir.path(), "fig2.json", &["fig2", "--u", "0.5"]);
    let out = ncstab(&[
        "analyze",
        "--network",
        &path,
        "--method",
        "td",
        "--flow",
        "1",
    ]);
    assert!(out.status.success());
    let (b, r, rate, t) = (1.0, 1.0, 2.0, 0.01);
    let expected = 2.0 * t + b / rate + (b + r * t) / (2.0 * rate - r);
    let got = value_after(&stdout(&out), "delay of flow 1:");
    assert!((got - expected).abs() < 1e-8, "{got} vs {expected}");
}

#[test]
fn feed_forward_bounds_agree_across_methods() {
    let dir = tempfile::tempdir().unwrap();
    let path = generate(dir.path(), "fig2.json", &["fig2", "--u", "0.4"]);
    let values: Vec<f64> = ["sd", "td", "ag", "2s"]
        .iter()
        .map(|m| {
            let out = ncstab(&[
                "analyze",
                "--network",
                &path,
                "--method",
                m,
                "--server",
                "2",
                "--flows",
                "1,2",
            ]);
            assert!(out.status.success());
            value_after(&stdout(&out), "backlog of flows 1,2 at server 2:")
        })
        .collect();
    assert!(
        values.iter().all(|v| (v - values[0]).abs() < 1e-8),
        "{values:?}"
    );
}

#[test]
fn unstable_bound_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = generate(
        dir.path(),
        "ring.json",
        &["uni-ring", "--n", "10", "--u", "0.5"],
    );
    let out = ncstab(&[
        "analyze",
        "--network",
        &path,
        "--method",
        "sd",
        "--server",
        "10",
        "--flows",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stdout(&out).contains("verdict: unstable"));
    let out = ncstab(&["analyze", "--network", &path, "--method", "sd"]);
    assert_eq!(out.status.code(), Some(0));
    let out = ncstab(&[
        "analyze",
        "--network",
        &path,
        "--method",
        "ag",
        "--server",
        "10",
        "--flows",
        "1",
        "--json",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["stable"], true);
    assert!(report["bound"].as_f64().unwrap() > 0.0);
}

#[test]
fn validation_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\n  \"servers\": [\n    {\"rate\": 1.0,}\n  ]\n}").unwrap();
    let out = ncstab(&["analyze", "--network", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    let ring = generate(dir.path(), "ring.json", &["uni-ring", "--n", "4"]);
    assert_eq!(
        ncstab(&["analyze", "--network", &ring, "--server", "9"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        ncstab(&["analyze", "--network", &ring, "--method", "xy"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        ncstab(&["generate", "uni-ring", "--u", "1.5"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        ncstab(&["sweep", "toy", "--u-min", "0.6", "--u-max", "0.2"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn sweep_rows_match_fresh_analyses() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let out = ncstab(&[
        "sweep",
        "toy",
        "--method",
        "td,sd,2s",
        "--u-min",
        "0.1",
        "--u-max",
        "0.5",
        "--step",
        "0.2",
        "--output",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("U,SD,TD,TWO_STAGE"));
    let rows: Vec<Vec<String>> = lines
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    for row in &rows {
        let path = generate(dir.path(), "toy.json", &["toy", "--u", &row[0]]);
        for (m, cell) in ["sd", "td", "2s"].iter().zip(&row[1..]) {
            let out = ncstab(&[
                "analyze",
                "--network",
                &path,
                "--method",
                m,
                "--server",
                "2",
                "--flows",
                "1",
            ]);
            let text = stdout(&out);
            if cell == "inf" {
                assert_eq!(out.status.code(), Some(3));
            } else {
                let fresh = value_after(&text, "backlog of flows 1 at server 2:");
                let v: f64 = cell.parse().unwrap();
                assert!(
                    (v - fresh).abs() <= 1e-8 * fresh.max(1.0),
                    "{m} at U={}: {v} vs {fresh}",
                    row[0]
                );
            }
        }
    }
}

#[test]
fn bi_ring_grouping_column_is_inf() {
    let out = ncstab(&[
        "sweep", "bi-ring", "--method", "ag", "--u-min", "0.1", "--u-max", "0.3", "--step", "0.1",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let cells: Vec<&str> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    assert_eq!(cells, vec!["inf"; 3]);
}

#[test]
fn critical_utilization_of_rings() {
    let out = ncstab(&["critical", "uni-ring", "--method", "sd"]);
    let u: f64 = stdout(&out).trim().parse().unwrap();
    assert!((u - 0.18).abs() <= 0.02, "{u}");
    let out = ncstab(&["critical", "uni-ring", "--n", "5", "--method", "ag"]);
    let u: f64 = stdout(&out).trim().parse().unwrap();
    assert!(u >= 0.99, "{u}");
}

#[test]
fn worst_case_simulation_reaches_the_bound() {
    let dir = tempfile::tempdir().unwrap();
    let path = generate(dir.path(), "fig2.json", &["fig2", "--u", "0.5"]);
    let dump = dir.path().join("trace.csv");
    let out = ncstab(&[
        "simulate",
        "--network",
        &path,
        "--flows",
        "1,2",
        "--output",
        dump.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let summary = text.lines().last().unwrap();
    assert!(summary.contains("simulated 2.03, bound 2.03"), "{summary}");
    let trace = std::fs::read_to_string(dump).unwrap();
    assert!(trace.starts_with("t,flow,server,A,B\n"));
}
