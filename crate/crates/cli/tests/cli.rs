use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn vlcsim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vlcsim"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

const SMALL: &str = "[sweep]\nsnr_start_db = 60.0\nsnr_stop_db = 70.0\nsnr_step_db = 5.0\n[simulation]\nsymbols = 5000\n";

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", "[layout]\nspacings = []\n");
    assert_eq!(vlcsim(&["validate", "--config", &bad], dir.path()).status.code(), Some(2));
    let unknown = write(dir.path(), "unknown.toml", "colour = 1\n");
    assert_eq!(vlcsim(&["ber-sweep", "--config", &unknown], dir.path()).status.code(), Some(2));
    assert_eq!(vlcsim(&["validate", "--preset", "fig9"], dir.path()).status.code(), Some(2));
    assert_eq!(vlcsim(&["validate", "--config", "missing.toml"], dir.path()).status.code(), Some(4));
    // two stacked luminaires at one position: rank-deficient channel
    let singular = write(dir.path(), "singular.toml", "[layout]\nspacings = [1e-9]\nmimo_orders = [2]\n");
    assert_eq!(vlcsim(&["ber-sweep", "--config", &singular], dir.path()).status.code(), Some(3));
    let ok = write(dir.path(), "ok.toml", SMALL);
    assert_eq!(vlcsim(&["validate", "--config", &ok], dir.path()).status.code(), Some(0));
}

#[test]
fn ber_sweep_output_layout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"seed": 3, "layout": {"mimo_orders": [2, 4]}, "sweep": {"snr_start_db": 60.0, "snr_stop_db": 70.0, "snr_step_db": 5.0}, "simulation": {"symbols": 5000}}"#);
    let out = vlcsim(&["ber-sweep", "--config", &cfg, "--out", "res"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("res/ber-sweep.csv")).unwrap();
    let mut lines = csv.lines();
    let first = lines.next().unwrap();
    assert!(first.starts_with("# config_sha256=") && first.ends_with(" seed=3"));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header[..6], ["spacing_m", "semi_angle_deg", "mimo_order", "scheme", "csi_mode", "snr_db"]);
    assert!(header.contains(&"ber_pd4") && header.contains(&"mc_halfwidth_95"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    // 2 orders x 2 schemes x 3 SNR points
    assert_eq!(rows.len(), 12);
    assert!(rows.iter().all(|r| r.len() == header.len()));
    // 2x2 rows leave the third and fourth detector columns empty
    assert!(rows.iter().filter(|r| r[2] == "2").all(|r| r[8].is_empty() && r[9].is_empty()));

    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("res/ber-sweep.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 3);
    assert_eq!(meta["config"]["simulation"]["symbols"], 5000);
    assert_eq!(meta["config"]["noise"]["temperature"], 295.0);
    assert_eq!(format!("# config_sha256={} seed=3", meta["config_sha256"].as_str().unwrap()), first);
}

#[test]
fn seed_flag_changes_monte_carlo_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL);
    for (seed, out) in [("1", "a"), ("2", "b")] {
        assert!(vlcsim(&["ber-sweep", "--config", &cfg, "--seed", seed, "--out", out], dir.path()).status.success());
    }
    let read = |d: &str| fs::read_to_string(dir.path().join(d).join("ber-sweep.csv")).unwrap();
    let (a, b) = (read("a"), read("b"));
    assert_ne!(a.lines().next(), b.lines().next());
    let col = |s: &str, k: usize| s.lines().skip(2).map(|l| l.split(',').nth(k).unwrap().to_string()).collect::<Vec<_>>();
    assert_eq!(col(&a, 10), col(&b, 10), "analytic average is seed independent");
    assert_ne!(col(&a, 13), col(&b, 13), "error counts differ");
}

#[test]
fn mobility_and_throughput_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL);
    assert!(vlcsim(&["mobility", "--config", &cfg, "--out", "m"], dir.path()).status.success());
    let csv = fs::read_to_string(dir.path().join("m/mobility.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(2).collect();
    // fresh CSI plus three elapsed times, two schemes, three SNR points
    assert_eq!(rows.len(), 4 * 2 * 3);
    assert!(rows.iter().any(|r| r.contains(",none,") && r.contains(",perfect,")));
    assert!(rows.iter().any(|r| r.contains(",uniform,") && r.contains(",outdated,")));

    assert!(vlcsim(&["throughput-sweep", "--preset", "fig8", "--out", "t"], dir.path()).status.success());
    let csv = fs::read_to_string(dir.path().join("t/fig8.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().ends_with("throughput_bps_hz"));

    assert!(vlcsim(&["channel-map", "--preset", "fig3a", "--out", "c"], dir.path()).status.success());
    assert!(dir.path().join("c/fig3a.json").exists());
}
