use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SCENARIO: &str = r#"
c = [0.4]
rho = [0.2]
nu2 = [0.3]
delta = 25.0
region = [[0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [0.0, 10.0]]
grid_resolution = 0.5
seed = 11
truncate = true

[season]
periods = 90
block = 18
per_day = 6

[[components]]
mu = [3.0, 3.0]
sigma = [0.8, 0.1, 0.6]

[[components]]
mu = [7.0, 6.5]
sigma = [0.7, -0.2, 0.9]
"#;

const CONFIG: &str = r#"
[season]
periods = 72
block = 18
per_day = 6

[binning]
width_minutes = 240

[mcmc]
components = 2
n_iter = 400
burn_in = 200
seed = 5
init = "k-means"

[region]
path = "region.csv"

[baseline]
bandwidths = [[0.5, 0.5], [1.0, 1.0]]

[evaluation]
validation_draws = 20
qq_points = 20
"#;

fn stmix(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stmix")).current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = stmix(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Simulated events split into `train.csv` (periods ≤ 72) and `test.csv`.
fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("scenario.toml"), SCENARIO).unwrap();
    fs::write(p.join("config.toml"), CONFIG).unwrap();
    fs::write(p.join("region.csv"), "x_km,y_km\n0,0\n10,0\n10,10\n0,10\n").unwrap();
    fs::write(p.join("bases.csv"), "x_km,y_km\n3,3\n7,7\n").unwrap();
    ok(p, &["simulate", "--scenario", "scenario.toml", "--out", "all.csv"]);
    assert!(p.join("all.csv.scenario.json").exists());
    let all = fs::read_to_string(p.join("all.csv")).unwrap();
    let (mut train, mut test) = (String::from("period,x_km,y_km\n"), String::from("period,x_km,y_km\n"));
    for line in all.lines().skip(1) {
        let t: usize = line.split(',').next().unwrap().parse().unwrap();
        if t <= 72 { &mut train } else { &mut test }.push_str(&format!("{line}\n"));
    }
    fs::write(p.join("train.csv"), train).unwrap();
    fs::write(p.join("test.csv"), test).unwrap();
    dir
}

fn data_rows(path: PathBuf) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn simulate_fit_score_pipeline() {
    let dir = workspace();
    let p = dir.path();
    ok(p, &["fit", "--config", "config.toml", "--events", "train.csv", "--out", "draws.bin", "--params-out", "params.csv"]);
    assert_eq!(data_rows(p.join("params.csv")).len(), 200 * 2);
    ok(p, &["score", "--archive", "draws.bin", "--test", "test.csv", "--train", "train.csv", "--out", "scores.csv"]);
    let rows = data_rows(p.join("scores.csv"));
    let methods: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(methods, ["mixture", "medic-kde", "medic"]);
    for r in &rows {
        assert_eq!(r[1], "test");
        let pa: f64 = r[2].parse().unwrap();
        assert!(pa.is_finite() && pa < 0.0, "{r:?}");
        assert!(r[2].contains('e') && r[2].split('e').next().unwrap().len() >= 13, "digits: {}", r[2]);
    }
    let hash = fs::read_to_string(p.join("scores.csv")).unwrap().lines().next().unwrap().to_string();
    assert!(hash.starts_with("# config_hash=") && hash.len() == "# config_hash=".len() + 64);

    ok(p, &["predict", "--archive", "draws.bin", "--period", "75", "--grid-out", "grid.csv", "--cell", "0.5"]);
    let grid = data_rows(p.join("grid.csv"));
    assert_eq!(grid.len(), 400);
    let mass: f64 = grid.iter().map(|r| r[3].parse::<f64>().unwrap() * 0.25).sum();
    assert!((mass - 1.0).abs() < 0.02, "grid mass {mass}");

    ok(p, &["coverage", "--archive", "draws.bin", "--test", "test.csv", "--bases", "bases.csv", "--train", "train.csv", "--out", "cov.csv"]);
    let cov = data_rows(p.join("cov.csv"));
    assert_eq!(cov.len(), 3 * 25);
    assert!(cov.iter().all(|r| (0.0..=1.0).contains(&r[2].parse::<f64>().unwrap())));

    let msg = ok(p, &["validate", "--archive", "draws.bin", "--test", "test.csv", "--qq-out", "qq.csv"]);
    assert!(msg.contains("20 draws"), "{msg}");
    let qq = data_rows(p.join("qq.csv"));
    assert_eq!(qq.len(), 20);
    for r in &qq {
        let v: Vec<f64> = r.iter().map(|x| x.parse().unwrap()).collect();
        assert!(v[2] <= v[1] && v[1] <= v[3]);
    }

    ok(p, &["baseline", "--method", "medic", "--config", "config.toml", "--train", "train.csv", "--test", "test.csv", "--out", "medic.csv"]);
    let medic = data_rows(p.join("medic.csv"));
    assert_eq!(medic.len(), 1);
    assert_eq!(medic[0], rows[2]);
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = workspace();
    let p = dir.path();
    for tag in ["a", "b"] {
        let archive = format!("draws_{tag}.bin");
        ok(p, &["fit", "--config", "config.toml", "--events", "train.csv", "--out", &archive]);
        ok(p, &["score", "--archive", &archive, "--test", "test.csv", "--train", "train.csv", "--out", &format!("scores_{tag}.csv")]);
    }
    assert_eq!(fs::read(p.join("draws_a.bin")).unwrap(), fs::read(p.join("draws_b.bin")).unwrap());
    assert_eq!(fs::read(p.join("scores_a.csv")).unwrap(), fs::read(p.join("scores_b.csv")).unwrap());
    let out = Command::new(env!("CARGO_BIN_EXE_stmix"))
        .current_dir(p)
        .env("STMIX_THREADS", "1")
        .args(["score", "--archive", "draws_a.bin", "--test", "test.csv", "--train", "train.csv", "--out", "scores_c.csv"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(fs::read(p.join("scores_a.csv")).unwrap(), fs::read(p.join("scores_c.csv")).unwrap());
}

#[test]
fn inconsistent_config_fails_before_sampling() {
    let dir = workspace();
    let p = dir.path();
    fs::write(p.join("bad.toml"), CONFIG.replace("per_day = 6", "per_day = 5")).unwrap();
    let out = stmix(p, &["fit", "--config", "bad.toml", "--events", "train.csv", "--out", "draws.bin"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not divide"));
    assert!(!p.join("draws.bin").exists());
}

#[test]
fn bad_inputs_exit_nonzero() {
    let dir = workspace();
    let p = dir.path();
    fs::write(p.join("junk.csv"), "period,x_km,y_km\n1,a,b\n2,1,1\n").unwrap();
    let out = stmix(p, &["fit", "--config", "config.toml", "--events", "junk.csv", "--out", "d.bin"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    fs::write(p.join("broken.bin"), b"STMXDRAW\x01\x00").unwrap();
    let out = stmix(p, &["score", "--archive", "broken.bin", "--test", "test.csv", "--out", "s.csv"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("byte offset"));
    let out = Command::new(env!("CARGO_BIN_EXE_stmix"))
        .current_dir(p)
        .env("STMIX_THREADS", "many")
        .args(["simulate", "--scenario", "scenario.toml", "--out", "x.csv"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(!stmix(p, &["frobnicate"]).status.success());
}
