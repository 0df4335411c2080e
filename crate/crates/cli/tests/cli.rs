use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BASE: &str = r#"
t_end = 2.0
grid_points = 9

[network]
generator = "ring"
n = 30
k = 2
convention = "one"

[model]
name = "sis"
beta = [2.0]
gamma = 1.0

[initial]
uniform = [0.8, 0.2]
"#;

fn nimfa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nimfa")).args(args).output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("experiment.toml");
    fs::write(&path, body).unwrap();
    path
}

fn run(dir: &TempDir, body: &str, command: &str, extra: &[&str]) -> (Output, PathBuf) {
    let cfg = write_config(dir.path(), body);
    let out = dir.path().join(format!("out-{command}-{}", extra.join("")));
    let mut args = vec![command, "--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    (nimfa(&args), out)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_name() != "manifest.json")
        .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn nimfa_only_needs_no_seed_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let body = format!("{BASE}\n[outputs]\nnimfa = true\n");
    let (a, out_a) = run(&dir, &body, "run", &[]);
    assert!(a.status.success(), "{}", stderr(&a));
    let (b, out_b) = run(&dir, &body, "run", &["--threads", "1"]);
    assert!(b.status.success());
    assert_eq!(files(&out_a), files(&out_b));
    let csv = fs::read_to_string(out_a.join("nimfa.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# config-hash: "));
    assert_eq!(lines.next().unwrap(), "time,vertex,state,probability");
    // 9 times, 30 vertices, 2 states
    assert_eq!(lines.count(), 9 * 30 * 2);
}

#[test]
fn stochastic_outputs_are_reproducible_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let body = format!(
        "seed = 5\nreplicas = 40\n{BASE}\n[outputs]\ntrajectories = true\nerror_report = true\nbound_report = true\nnetwork = true\n"
    );
    let (a, out_a) = run(&dir, &body, "run", &["--threads", "1"]);
    assert!(a.status.success(), "{}", stderr(&a));
    let (b, out_b) = run(&dir, &body, "run", &["--threads", "3"]);
    assert!(b.status.success());
    let fa = files(&out_a);
    assert_eq!(fa, files(&out_b));

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_a.join("manifest.json")).unwrap()).unwrap();
    let hash = manifest["config_hash"].as_str().unwrap().to_string();
    assert_eq!(manifest["instance"]["n_vertices"], 30);
    for (name, bytes) in &fa {
        let text = String::from_utf8_lossy(bytes);
        assert!(manifest["outputs"].get(name).is_some(), "{name} missing from manifest");
        if name.ends_with(".json") {
            let v: serde_json::Value = serde_json::from_str(&text).unwrap();
            assert_eq!(v["config_hash"], hash.as_str(), "{name}");
        } else {
            assert!(text.lines().next().unwrap().contains(&hash), "{name}");
        }
    }
    let events = fs::read_to_string(out_a.join("events.csv")).unwrap();
    assert_eq!(events.lines().nth(1).unwrap(), "time,vertex,from,to");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_a.join("error_report.json")).unwrap()).unwrap();
    assert_eq!(report["replicas"], 40);
    assert!(report["p_max"].as_f64().unwrap() >= report["p_mean"].as_f64().unwrap());
}

#[test]
fn seed_override_changes_hash_and_output() {
    let dir = TempDir::new().unwrap();
    let body = format!("seed = 1\nreplicas = 5\n{BASE}\n[outputs]\ntrajectories = true\n");
    let (a, out_a) = run(&dir, &body, "simulate", &[]);
    let (b, out_b) = run(&dir, &body, "simulate", &["--seed", "2"]);
    assert!(a.status.success() && b.status.success());
    let pa = fs::read_to_string(out_a.join("prevalence.csv")).unwrap();
    let pb = fs::read_to_string(out_b.join("prevalence.csv")).unwrap();
    assert_ne!(pa.lines().next(), pb.lines().next());
    assert_ne!(pa, pb);
}

#[test]
fn simplex_violation_is_a_validation_failure() {
    let dir = TempDir::new().unwrap();
    let body = BASE.replace("[0.8, 0.2]", "[0.5, 0.6]");
    let cfg = write_config(dir.path(), &body);
    let o = nimfa(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("initial.uniform"), "{}", stderr(&o));
}

#[test]
fn negative_rate_parameter_is_reported() {
    let dir = TempDir::new().unwrap();
    let body = BASE.replace("beta = [2.0]", "beta = [-1.0]");
    let (o, _) = run(&dir, &body, "nimfa", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("model"), "{}", stderr(&o));
}

#[test]
fn oversized_master_request_is_a_capacity_failure() {
    let dir = TempDir::new().unwrap();
    let body = format!("{BASE}\n[outputs]\nmaster = true\n");
    let cfg = write_config(dir.path(), &body);
    let o = nimfa(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("MAX_PRODUCT_STATES"), "{}", stderr(&o));
    let (r, _) = run(&dir, &body, "run", &[]);
    assert_eq!(r.status.code(), Some(3));
}

#[test]
fn missing_seed_for_stochastic_output() {
    let dir = TempDir::new().unwrap();
    let body = format!("replicas = 3\n{BASE}");
    let (o, _) = run(&dir, &body, "simulate", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("seed"));
    let (ok, _) = run(&dir, &body, "simulate", &["--seed", "3"]);
    assert!(ok.status.success(), "{}", stderr(&ok));
}

#[test]
fn integration_failure_is_a_numerical_error() {
    let dir = TempDir::new().unwrap();
    // rates this large force the step size below its floor
    let body = BASE.replace("beta = [2.0]\ngamma = 1.0", "beta = [1e300]\ngamma = 1e300");
    let (o, _) = run(&dir, &body, "nimfa", &[]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn small_master_run_matches_library() {
    let dir = TempDir::new().unwrap();
    let body = BASE.replace("n = 30\nk = 2", "n = 5\nk = 1") + "\n[outputs]\nmaster = true\n";
    let (o, out) = run(&dir, &body, "run", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("master.csv")).unwrap();
    // marginals at each time sum to one per vertex
    let mut sums = std::collections::BTreeMap::<(String, String), f64>::new();
    for line in csv.lines().skip(2) {
        let f: Vec<&str> = line.split(',').collect();
        *sums.entry((f[0].into(), f[1].into())).or_default() += f[3].parse::<f64>().unwrap();
    }
    assert_eq!(sums.len(), 9 * 5);
    assert!(sums.values().all(|s| (s - 1.0).abs() < 1e-9));
}

#[test]
fn reductions_write_solutions_and_weights() {
    let dir = TempDir::new().unwrap();
    let partition: Vec<String> = (0..30).map(|i| (i % 3).to_string()).collect();
    let meta = format!("{BASE}\n[outputs.reduction]\nname = \"metapop\"\npartition = [{}]\n", partition.join(", "));
    let (o, out) = run(&dir, &meta, "reduce", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let weights = fs::read_to_string(out.join("reduced.hg")).unwrap();
    assert!(weights.starts_with("# config-hash: "));
    let reduced = nimfa::hypergraph::format::read_hypergraph(&weights).unwrap();
    assert_eq!(reduced.n_vertices(), 3);

    let blocks: Vec<String> = (0..30).map(|i| (1 + i / 10).to_string()).collect();
    let part = format!("{BASE}\n[outputs.reduction]\nname = \"partition\"\npartition = [{}]\n", blocks.join(", "));
    let (o, out) = run(&dir, &part, "reduce", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("reduction.csv").exists());

    let hmfa = format!("{BASE}\n[outputs.reduction]\nname = \"hmfa\"\n");
    let (o, out) = run(&dir, &hmfa, "reduce", &[]);
    assert!(o.status.success());
    let csv = fs::read_to_string(out.join("reduction.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 + 9 * 2);

    let (o, _) = run(&dir, BASE, "reduce", &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn network_file_round_trip() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run(&dir, BASE, "generate", &[]);
    assert!(o.status.success());
    let net = out.join("network.hg");
    let body = BASE.replace(
        "generator = \"ring\"\nn = 30\nk = 2\nconvention = \"one\"",
        &format!("generator = \"file\"\npath = \"{}\"", net.display()),
    ) + "\n[outputs]\nnimfa = true\n";
    let (a, out_a) = run(&dir, &body, "run", &[]);
    assert!(a.status.success(), "{}", stderr(&a));
    let (b, out_b) = run(&dir, &format!("{BASE}\n[outputs]\nnimfa = true\n"), "run", &["--threads", "1"]);
    assert!(b.status.success());
    let strip = |p: &Path| fs::read_to_string(p).unwrap().lines().skip(1).collect::<Vec<_>>().join("\n");
    assert_eq!(strip(&out_a.join("nimfa.csv")), strip(&out_b.join("nimfa.csv")));
}
