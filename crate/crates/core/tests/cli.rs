use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_guided-bo"))
}

fn run(args: &[&str], out_dir: Option<&Path>) -> Output {
    let mut c = bin();
    c.args(args);
    if let Some(d) = out_dir {
        c.env("GUIDED_BO_OUTPUT_DIR", d);
    }
    c.output().unwrap()
}

const SMALL: &str = r#"
[simulator]
dim = 4
pairs = [{ delay = 0, reference = 1 }, { delay = 2, reference = 3 }]
bounds = { lower = [-100.0, -100.0, -100.0, -100.0], upper = [100.0, 100.0, 100.0, 100.0] }
theta_star = [14.0, -22.0, -36.0, 8.0]
gated_axes = [0, 1]
darwin_widths = [2.5, 2.5]
diff_weights = [0.5, 0.5]
common_weights = [0.0, 0.0]

[[algorithms]]
kind = "domain_guided"

[[algorithms]]
kind = "standard_bo"
fit = { n_starts = 2, max_iters = 20 }
maximizer = { candidates = 200 }

[campaign]
n_trials = 2
budget = 8
n_init = 4
master_seed = 3
"#;

#[test]
fn validate_reports_missing_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.toml");
    fs::write(&p, "[simulator]\ndim = 12\n").unwrap();
    let out = run(&["validate", p.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("bounds"), "{msg}");
}

#[test]
fn validate_rejects_unknown_keys_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.toml");
    fs::write(&p, format!("{SMALL}\n[extra]\nx = 1\n")).unwrap();
    let out = run(&["validate", p.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validate_accepts_shipped_config() {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
    let out = run(&["validate", p.to_str().unwrap()], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_config_file_is_a_config_error() {
    let out = run(&["validate", "/nonexistent/guided-bo.toml"], None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_twice_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.toml");
    fs::write(&p, SMALL).unwrap();
    let mut snapshots = Vec::new();
    for name in ["a", "b"] {
        let out_dir = dir.path().join(name);
        let out = run(&["run", p.to_str().unwrap()], Some(&out_dir));
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let mut files: Vec<(String, Vec<u8>)> = Vec::new();
        for sub in ["", "traces"] {
            for e in fs::read_dir(out_dir.join(sub)).unwrap() {
                let e = e.unwrap();
                if e.path().is_file() {
                    files.push((format!("{sub}/{}", e.file_name().to_string_lossy()), fs::read(e.path()).unwrap()));
                }
            }
        }
        files.sort();
        snapshots.push(files);
    }
    assert_eq!(snapshots[0], snapshots[1]);
    let names: Vec<&str> = snapshots[0].iter().map(|(n, _)| n.as_str()).collect();
    assert!(names.contains(&"/manifest.json"));
    assert!(names.contains(&"/aggregate_domain_guided.csv"));
    assert!(names.contains(&"traces/standard_bo_trial001.csv"));
    assert_eq!(names.len(), 2 + 1 + 4);
}

#[test]
fn seed_flag_changes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.toml");
    fs::write(&p, SMALL).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(run(&["run", p.to_str().unwrap()], Some(&a)).status.success());
    assert!(run(&["--seed", "99", "run", p.to_str().unwrap()], Some(&b)).status.success());
    let fa = fs::read(a.join("traces/standard_bo_trial000.csv")).unwrap();
    let fb = fs::read(b.join("traces/standard_bo_trial000.csv")).unwrap();
    assert_ne!(fa, fb);
    let manifest = fs::read_to_string(b.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"master_seed\": 99"));
}

#[test]
fn ablate_runs_the_three_variants() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.toml");
    let text = SMALL.replace("budget = 8", "budget = 5").replace("n_trials = 2", "n_trials = 1");
    fs::write(&p, text).unwrap();
    let out_dir = dir.path().join("o");
    let out = run(&["--jobs", "1", "ablate", p.to_str().unwrap()], Some(&out_dir));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for k in ["domain_guided", "transform_only", "annealing_only"] {
        assert!(out_dir.join(format!("aggregate_{k}.csv")).exists(), "{k}");
    }
    assert!(!out_dir.join("aggregate_standard_bo.csv").exists());
}

#[test]
fn landscape_writes_grid() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.toml");
    fs::write(&p, SMALL).unwrap();
    let out = dir.path().join("s.csv");
    let o = run(
        &["landscape", p.to_str().unwrap(), "--axes", "2,3", "--grid", "101", "--out", out.to_str().unwrap()],
        None,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("a,b,E_um,I_au"));
    assert_eq!(lines.count(), 101 * 101);
}

#[test]
fn landscape_rejects_bad_axes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.toml");
    fs::write(&p, SMALL).unwrap();
    let o = run(&["landscape", p.to_str().unwrap(), "--axes", "1,9", "--out", "-"], None);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["landscape", p.to_str().unwrap(), "--axes", "1,1"], None);
    assert!(!o.status.success());
}
