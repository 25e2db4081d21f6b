//! CLI surface tests: subcommands, config files, output files, exit codes.

use std::process::Command;

fn hurwitz() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hurwitz"))
}

fn tempdir(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("hurwitz-cli-test-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn enumerate_writes_classes() {
    let dir = tempdir("enumerate");
    let out = hurwitz()
        .args(["--out", dir.to_str().unwrap(), "enumerate", "--n", "3", "--b", "4"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("classes_n3_b4.json")).unwrap())
            .unwrap();
    assert_eq!(json["result"]["count"], 4);
    assert_eq!(json["result"]["classes"][0]["n"], 3);
    assert!(json["provenance"]["config_sha256"].as_str().unwrap().len() == 64);
}

#[test]
fn orbits_reports_connectivity() {
    let dir = tempdir("orbits");
    let out = hurwitz()
        .args(["--out", dir.to_str().unwrap(), "orbits", "--n", "3", "--b", "4"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("orbits_n3_b4.json")).unwrap())
            .unwrap();
    assert_eq!(json["result"]["orbit_count"], 1);
}

#[test]
fn dims_profile_schema() {
    let dir = tempdir("dims");
    let out = hurwitz()
        .args([
            "--out",
            dir.to_str().unwrap(),
            "dims",
            "--n",
            "2",
            "--h",
            "0",
            "--b",
            "6",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("dims_n2_h0_b6.json")).unwrap())
            .unwrap();
    let profile = &json["result"]["profile"];
    assert_eq!(profile["h0_pullback"]["value"], 3);
    assert_eq!(profile["t1"]["value"], 6);
    assert_eq!(profile["h1_tx"]["value"], 3);
    assert_eq!(profile["h1_pullback"]["value"], 0);
    // undetermined entries carry the mask instead of a number
    let out = hurwitz()
        .args([
            "--out",
            dir.to_str().unwrap(),
            "dims",
            "--n",
            "2",
            "--h",
            "0",
            "--b",
            "8",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("dims_n2_h0_b8.json")).unwrap())
            .unwrap();
    assert_eq!(json["result"]["profile"]["h1_pullback"]["status"], "undetermined");
}

#[test]
fn budget_exceeded_exit_code() {
    let out = hurwitz()
        .args(["enumerate", "--n", "7", "--b", "4"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn invalid_config_exit_code() {
    let out = hurwitz()
        .args(["dims", "--n", "3", "--h", "0", "--b", "4"]) // genus 0 < 2
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = hurwitz().args(["enumerate", "--n", "3"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempdir("config");
    let config_path = dir.join("run.conf");
    std::fs::write(&config_path, "n = 3\nb = 4\n# comment\n").unwrap();
    let out = hurwitz()
        .args([
            "--config",
            config_path.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
            "enumerate",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("classes_n3_b4.json").exists());
    // flag overrides the file
    let out = hurwitz()
        .args([
            "--config",
            config_path.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
            "enumerate",
            "--b",
            "6",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.join("classes_n3_b6.json").exists());
}

#[test]
fn solve_metric_with_dumps() {
    let dir = tempdir("solve");
    let out = hurwitz()
        .args([
            "--out",
            dir.to_str().unwrap(),
            "solve-metric",
            "--preset",
            "hexagon",
            "--refinement",
            "0",
            "--dump-fields",
            "--mesh-out",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("metric_r0.json")).unwrap())
            .unwrap();
    assert_eq!(json["result"]["genus"], 2);
    assert_eq!(json["result"]["euler_characteristic"], -2);
    let fields = std::fs::read_to_string(dir.join("metric_fields_r0.csv")).unwrap();
    assert!(fields.starts_with("vertex,re_w,im_w,u,area,defect"));
    assert!(fields.lines().count() > 1000);
    let mesh: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("mesh_r0.json")).unwrap()).unwrap();
    assert_eq!(mesh["result"]["n_sheets"], 2);
    assert_eq!(mesh["result"]["cone_vertices"].as_array().unwrap().len(), 6);
}

#[test]
fn wp_norm_runs_at_coarse_refinement() {
    let dir = tempdir("wp");
    let out = hurwitz()
        .args([
            "--out",
            dir.to_str().unwrap(),
            "--workers",
            "2",
            "wp-norm",
            "--preset",
            "hexagon",
            "--moving",
            "0",
            "--refinement",
            "0",
            "--epsilon",
            "0.01",
            "--dump-fields",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("wp_norm_r0.json")).unwrap())
            .unwrap();
    let wp = json["result"]["result"]["wp_total"].as_f64().unwrap();
    assert!(wp > 0.0);
    let fiber = json["result"]["result"]["fiber_integral"].as_f64().unwrap();
    assert!(((fiber - wp) / wp).abs() < 1e-10);
    assert!(dir.join("wp_fields_r0.csv").exists());
}

#[test]
fn convergence_study_table() {
    let dir = tempdir("conv");
    let out = hurwitz()
        .args([
            "--out",
            dir.to_str().unwrap(),
            "convergence",
            "--preset",
            "hexagon",
            "--refinements",
            "0,1,2",
            "--moving",
            "0",
            "--epsilon",
            "0.012",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("convergence.json")).unwrap())
            .unwrap();
    let rows = json["result"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(json["result"]["area_error_decreasing"], true);
    let csv = std::fs::read_to_string(dir.join("convergence.csv")).unwrap();
    assert!(csv.starts_with("refinement,area_error,eqell_residual,route_gap,wp_total"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn identity_check_deterministic() {
    let dir = tempdir("idcheck");
    for _ in 0..2 {
        let out = hurwitz()
            .args([
                "--out",
                dir.to_str().unwrap(),
                "identity-check",
                "--samples",
                "1000",
                "--seed",
                "7",
            ])
            .output()
            .unwrap();
        assert!(out.status.success());
    }
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("identity_check.json")).unwrap())
            .unwrap();
    assert!(json["result"]["max_relative_residual"].as_f64().unwrap() < 1e-12);
}
