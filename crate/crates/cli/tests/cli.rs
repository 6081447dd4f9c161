use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cryonoise"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok_json(args: &[&str]) -> Value {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn input_noise_at_zero_bath() {
    let v = ok_json(&["noise", "input", "--f", "6e9", "--t-bath", "0"]);
    assert_eq!(v["schema"], "cryonoise.input-noise.v1");
    let t = v["data"]["t_in_k"].as_f64().unwrap();
    assert!((t - 0.14398).abs() / 0.14398 < 1e-4, "{t}");
}

#[test]
fn input_noise_with_idler() {
    let v = ok_json(&[
        "noise",
        "input",
        "--f",
        "5.735e9",
        "--t-bath",
        "0.01",
        "--f-pump",
        "5.968e9",
        "--g-twpa-db",
        "10",
        "--g-conv-db",
        "9.03",
    ]);
    let d = &v["data"];
    assert!((d["idler"]["f_idler_hz"].as_f64().unwrap() - 6.201e9).abs() < 1.0);
    assert!(d["idler"]["t_in_eff_k"].as_f64().unwrap() > d["t_in_k"].as_f64().unwrap());
}

#[test]
fn generate_is_byte_identical_and_fits_back() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = data("config.json");
    let mut outputs = Vec::new();
    for tag in ["a", "b"] {
        let samples = dir.path().join(format!("{tag}.csv"));
        let truth = dir.path().join(format!("{tag}.json"));
        ok_json(&[
            "--config",
            p(&cfg),
            "vlab",
            "generate",
            "--seed",
            "7",
            "--out",
            p(&samples),
            "--sidecar",
            p(&truth),
        ]);
        outputs.push((samples, truth));
    }
    let read = |x: &Path| std::fs::read(x).unwrap();
    assert_eq!(read(&outputs[0].0), read(&outputs[1].0));
    // sidecars name their own output files, so compare the truth payload
    let truth = |x: &Path| serde_json::from_slice::<Value>(&read(x)).unwrap()["data"].clone();
    assert_eq!(truth(&outputs[0].1), truth(&outputs[1].1));

    let report = dir.path().join("fit.json");
    let out = run(&[
        "noise",
        "fit",
        "--samples",
        p(&outputs[0].0),
        "--truth",
        p(&outputs[0].1),
        "--check-truth",
        "--out",
        p(&report),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: Value = serde_json::from_slice(&read(&report)).unwrap();
    assert_eq!(v["schema"], "cryonoise.fit.v1");
    let check = &v["data"]["truth_check"];
    assert_eq!(check["pass"], true);
    assert_eq!(check["total"], 2);
    let analyses = v["data"]["analyses"].as_array().unwrap();
    assert_eq!(analyses.len(), 2);
    assert_eq!(analyses[0]["budget"]["terms"][0]["name"], "fit_offset");
}

#[test]
fn bundled_campaign_gives_intrinsic_photons() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("fit.json");
    let out = run(&[
        "noise",
        "fit",
        "--samples",
        p(&data("samples_thru.csv")),
        "--samples",
        p(&data("samples_twpa.csv")),
        "--truth",
        p(&data("truth_thru.json")),
        "--truth",
        p(&data("truth_twpa.json")),
        "--check-truth",
        "--out",
        p(&report),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = ok_json(&["noise", "photons", "--report", p(&report)]);
    let avg = v["data"]["average"]["value"].as_f64().unwrap();
    assert!(avg.is_finite());
    assert_eq!(v["data"]["points"].as_array().unwrap().len(), 1);
}

#[test]
fn photons_from_reported_values() {
    let v = ok_json(&[
        "noise",
        "photons",
        "--f",
        "5.735e9",
        "--t-sys-twpa",
        "0.68",
        "--t-sys-hemt",
        "3.3",
        "--g-twpa-db",
        "10",
    ]);
    let n = v["data"]["average"]["value"].as_f64().unwrap();
    assert!((1.1..=1.5).contains(&n), "{n}");
}

#[test]
fn thermal_commands() {
    let v = ok_json(&["thermal", "power", "--t-hot", "1", "--t-cold", "0.1"]);
    let pw = v["data"]["power_w"].as_f64().unwrap();
    assert!((pw - 100e-6).abs() < 1e-15);

    let v = ok_json(&["thermal", "tau", "--t", "0.1", "--t", "5"]);
    let rows = v["data"].as_array().unwrap();
    assert!(rows[0]["tau_s"].as_f64().unwrap() > 500.0);

    let dir = tempfile::tempdir().unwrap();
    let curve = dir.path().join("decay.csv");
    let v = ok_json(&["thermal", "decay", "--curve-out", p(&curve)]);
    assert!(v["data"]["relative_error"].as_f64().unwrap().abs() < 0.1);
    let refit = ok_json(&["thermal", "decay", "--input", p(&curve)]);
    assert_eq!(refit["data"]["fit"], v["data"]["fit"]);
}

#[test]
fn twpa_sweep_to_stdout_and_file() {
    let out = run(&[
        "twpa",
        "gain",
        "--f-start",
        "5.5e9",
        "--f-stop",
        "6.5e9",
        "--points",
        "11",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# schema: twpa-sweep/1"));
    assert_eq!(lines.next(), Some("f_hz,gain_db,loss_db,conv_gain_db"));
    assert_eq!(lines.count(), 11);

    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let v = ok_json(&[
        "twpa",
        "gain",
        "--f-start",
        "5e9",
        "--f-stop",
        "7e9",
        "--points",
        "401",
        "--out",
        p(&csv),
    ]);
    let bands = v["data"]["bands"].as_array().unwrap();
    let widest = bands
        .iter()
        .map(|b| b[1].as_f64().unwrap() - b[0].as_f64().unwrap())
        .fold(0.0, f64::max);
    assert!(widest >= 500e6, "{widest}");
    assert!(std::fs::read_to_string(&csv)
        .unwrap()
        .starts_with("# schema: twpa-sweep/1"));
}

#[test]
fn sparam_report_on_bundled_attenuator() {
    let v = ok_json(&[
        "sparam",
        "report",
        "--input",
        p(&data("attenuator_10db.s2p")),
    ]);
    let mean = v["data"]["attenuation_mean_db"].as_f64().unwrap();
    assert!((mean - 9.977).abs() < 1e-9, "{mean}");
    assert_eq!(v["data"]["matched"], true);
}

fn error_json(out: &Output) -> Value {
    assert!(!out.status.success());
    let line = String::from_utf8_lossy(&out.stderr)
        .lines()
        .find(|l| l.starts_with("{\"error\""))
        .map(str::to_owned)
        .expect("structured error on stderr");
    serde_json::from_str(&line).unwrap()
}

#[test]
fn errors_are_structured() {
    let out = run(&["sparam", "report", "--input", "/nonexistent/file.s2p"]);
    assert_eq!(error_json(&out)["error"]["kind"], "io");

    let out = run(&["noise", "input", "--f", "-1", "--t-bath", "1"]);
    assert_eq!(error_json(&out)["error"]["kind"], "invalid_value");

    let out = run(&["noise", "bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"]["kind"], "usage");

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let text = std::fs::read_to_string(data("config.json"))
        .unwrap()
        .replace("cryonoise.config.v1", "cryonoise.config.v2");
    std::fs::write(&cfg, text).unwrap();
    let out = run(&["--config", p(&cfg), "thermal", "power"]);
    let e = error_json(&out);
    assert_eq!(e["error"]["kind"], "schema_version");

    let csv = dir.path().join("bad.csv");
    std::fs::write(
        &csv,
        "path,f_signal_hz,f_idler_hz,t_bath_k,t_bath_err_k,p_out_w,p_out_err_db,g_twpa_db,g_conv_db\n\
         twpa,5.735e9,6.201e9,0.2,0.006,1e-11,0.25,10,\n",
    )
    .unwrap();
    let out = run(&[
        "noise",
        "fit",
        "--samples",
        p(&csv),
        "--config",
        p(&data("config.json")),
    ]);
    let e = error_json(&out);
    assert_eq!(e["error"]["kind"], "parse");
    assert!(e["error"]["message"]
        .as_str()
        .unwrap()
        .contains("g_conv_db"));
}
