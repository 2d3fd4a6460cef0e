use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const PARITY: &str = r#"
fock_dim = 72

[oscillator]
omega_per_A = 0.0
nu = 2.0

[kick]
kind = "parity"

[detection]
eta_down = 0.1
eta_up = 0.0
rate_per_A = 10.0

[time]
start_At = 0.01
end_At = 500.0
points = 20
spacing = "log"
"#;

fn run(dir: &Path, sub: &str, config: &str, extra: &[&str]) -> Output {
    let cfg = dir.join("scenario.toml");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_oscdamp"))
        .arg(sub)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .unwrap()
}

/// Data rows of a CSV file as numbers, skipping comments and the column line.
fn rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let columns = lines.next().unwrap().split(',').map(String::from).collect();
    let data = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (columns, data)
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

#[test]
fn fano_curve_reaches_its_plateau() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "fano", PARITY, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (columns, data) = rows(&dir.path().join("out/fano.csv"));
    assert_eq!(columns, ["At", "Q_down"]);
    let last = data.last().unwrap();
    assert!((num(&last[0]) - 500.0).abs() < 1e-9);
    let plateau = 5f64.ln() / 15.0 * 0.1 * 10.0;
    assert!((num(&last[1]) / plateau - 1.0).abs() < 1e-3);
}

#[test]
fn correlation_columns_match_parity_curves() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PARITY
        .replace("eta_up = 0.0", "eta_up = 0.15")
        .replace("start_At = 0.01", "start_At = 0.0")
        .replace("end_At = 500.0", "end_At = 5.0")
        .replace("spacing = \"log\"", "spacing = \"linear\"");
    let out = run(dir.path(), "correlations", &cfg, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (columns, data) = rows(&dir.path().join("out/correlations.csv"));
    let col = |name: &str| -> Vec<f64> {
        let i = columns.iter().position(|c| c == name).unwrap();
        data.iter().map(|r| num(&r[i])).collect()
    };
    let (dd, uu, du) = (col("G_down_down"), col("G_up_up"), col("G_down_up"));
    assert!((dd[0] - 5.0 / 3.0).abs() < 1e-9 && (uu[0] - 2.5).abs() < 1e-9 && du[0].abs() < 1e-9);
    assert!(dd.windows(2).all(|w| w[1] < w[0]));
    assert!(uu.windows(2).all(|w| w[1] < w[0]));
    assert!(du.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn spectrum_lists_eigenvalues() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PARITY.replace("omega_per_A = 0.0", "omega_per_A = 2.0");
    let out = run(dir.path(), "spectrum", &cfg, &[]);
    assert!(out.status.success());
    let (_, data) = rows(&dir.path().join("out/spectrum.csv"));
    assert_eq!(data.len(), 42);
    for r in &data {
        let (n, k) = (num(&r[0]), num(&r[1]));
        assert!(n <= 5.0 && k.abs() <= 3.0);
        assert_eq!(num(&r[2]), -(n + k.abs() / 2.0));
        assert_eq!(num(&r[3]), -2.0 * k);
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PARITY.replace("eta_up = 0.0", "eta_up = 0.15")
        + "[trajectory]\nend_At = 3.0\nsample_At = 0.5\nseeds = 3\n[output]\njson = true\n";
    let first = run(dir.path(), "trajectory", &cfg, &["--seed", "17", "--threads", "1"]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let names = ["trajectory_series.csv", "trajectory_series.json", "trajectory_clicks.csv", "trajectory_clicks.json"];
    let before: Vec<Vec<u8>> = names.iter().map(|n| fs::read(dir.path().join("out").join(n)).unwrap()).collect();
    let second = run(dir.path(), "trajectory", &cfg, &["--seed", "17"]);
    assert!(second.status.success());
    for (n, b) in names.iter().zip(&before) {
        assert_eq!(&fs::read(dir.path().join("out").join(n)).unwrap(), b, "{n}");
    }
    let text = String::from_utf8(before[0].clone()).unwrap();
    assert!(text.contains("# seed: 17\n"));
    assert!(text.contains("# rng: ChaCha8Rng"));
    assert!(text.lines().any(|l| l.starts_with("# config_sha256: ") && l.len() == 17 + 64));
    assert!(text.contains(&format!("# version: {}\n", env!("CARGO_PKG_VERSION"))));
}

#[test]
fn config_errors_exit_with_code_2_and_list_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PARITY.replace("eta_down = 0.1", "eta_down = -0.1").replace("points = 20", "points = 1");
    let out = run(dir.path(), "waiting", &cfg, &[]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "config");
    assert_eq!(err["messages"].as_array().unwrap().len(), 3, "{err}");
    let out = run(dir.path(), "fano", "fock_dim = [", &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PARITY.to_string() + "[counting]\nbranch = \"down\"\nn_max = 1\n";
    let out = run(dir.path(), "counting", &cfg, &[]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "numerical");
}

#[test]
fn io_failures_exit_with_code_4() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_oscdamp"))
        .args(["spectrum", "--config"])
        .arg(dir.path().join("missing.toml"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    fs::write(dir.path().join("s.toml"), PARITY).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_oscdamp"))
        .args(["spectrum", "--config"])
        .arg(dir.path().join("s.toml"))
        .arg("--out")
        .arg(blocker.join("sub"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
}
