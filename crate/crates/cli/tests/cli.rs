use std::process::{Command, Output};

use serde_json::Value;

fn hermann(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hermann"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn error_kind(out: &Output) -> String {
    let v: Value = serde_json::from_slice(&out.stderr).expect("stderr is JSON");
    v["error"]["kind"].as_str().unwrap().to_string()
}

fn tmp(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("hermann-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn roots_of_the_smallest_unitary_example() {
    let out = hermann(&[
        "roots",
        "--triad",
        "u-on-grassmannian",
        "--p",
        "1",
        "--q",
        "2",
    ]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["schema"], "hermann-report/1");
    assert_eq!(v["config"]["seed"], 0x5eed);
    let roots = v["result"]["adapted_roots"].as_array().unwrap();
    let mut got: Vec<(String, u64, u64)> = roots
        .iter()
        .map(|r| {
            (
                r["label"].as_str().unwrap().to_string(),
                r["p_mult"].as_u64().unwrap(),
                r["h_mult"].as_u64().unwrap(),
            )
        })
        .collect();
    got.sort();
    assert_eq!(got, [("2w1".into(), 1, 0), ("w1".into(), 2, 2)]);
    assert_eq!(v["result"]["dimension_sum"]["ok"], true);
    assert_eq!(v["result"]["regression"]["passed"], true);
}

#[test]
fn verify_smoke_path() {
    let out = hermann(&[
        "verify",
        "--triad",
        "sphere-isotropy",
        "--n",
        "3",
        "--seed",
        "7",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let v = json(&out);
    assert_eq!(v["result"]["passed"], true);
    let checks = v["result"]["checks"].as_array().unwrap();
    assert!(checks.len() > 10);
    assert!(checks.iter().all(|c| c["value"].is_number()));
}

#[test]
fn integrate_cos2_on_the_two_sphere() {
    let out = hermann(&[
        "integrate",
        "--triad",
        "sphere-isotropy",
        "--n",
        "3",
        "--f",
        "cos2",
        "--mc-n",
        "1000000",
        "--seed",
        "7",
    ]);
    assert!(out.status.success());
    let v = json(&out);
    let r = &v["result"]["integrals"][0];
    let quad = r["quadrature"]["mean"].as_f64().unwrap();
    let mc = r["monte_carlo"]["mean"].as_f64().unwrap();
    let se = r["monte_carlo"]["std_error"].as_f64().unwrap();
    assert!((quad - 1.0 / 3.0).abs() < 1e-9, "{quad}");
    assert!((mc - 1.0 / 3.0).abs() < 1e-3, "{mc}");
    // std of cos^2 for a uniform direction in R^3 is sqrt(1/5 - 1/9)
    assert!(
        (se - (1.0f64 / 5.0 - 1.0 / 9.0).sqrt() / 1000.0).abs() < 2e-5,
        "{se}"
    );
}

#[test]
fn input_errors_exit_with_two() {
    let out = hermann(&["roots", "--triad", "no-such-triad"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "unknown_triad");

    let path = tmp("bad.json");
    std::fs::write(&path, "{\"n\": 3, \"sigma1_conjugator\": [[1, 0]]").unwrap();
    let out = hermann(&["roots", "--triad-file", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "malformed_triad_json");

    let out = hermann(&[
        "shape",
        "--triad",
        "u-on-grassmannian",
        "--p",
        "1",
        "--q",
        "2",
        "--w",
        "0",
        "--u",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "singular_point");

    let out = hermann(&[
        "volume",
        "--triad",
        "sphere-isotropy",
        "--n",
        "3",
        "--w",
        "0.3,0.1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "invalid_input");

    let out = hermann(&["roots", "--triad", "u-on-grassmannian", "--p", "1"]);
    assert_eq!(out.status.code(), Some(2));

    let out = hermann(&["roots", "--bogus-flag"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn exported_triads_load_back() {
    let out = hermann(&[
        "catalog",
        "--triad",
        "u-on-grassmannian",
        "--p",
        "2",
        "--q",
        "2",
    ]);
    assert!(out.status.success());
    let path = tmp("u22.json");
    std::fs::write(&path, &out.stdout).unwrap();
    let from_file = json(&hermann(&["roots", "--triad-file", path.to_str().unwrap()]));
    let from_name = json(&hermann(&[
        "roots",
        "--triad",
        "u-on-grassmannian",
        "--p",
        "2",
        "--q",
        "2",
    ]));
    let mults = |v: &Value| -> Vec<(u64, u64)> {
        let mut m: Vec<(u64, u64)> = v["result"]["adapted_roots"]
            .as_array()
            .unwrap()
            .iter()
            .map(|r| (r["p_mult"].as_u64().unwrap(), r["h_mult"].as_u64().unwrap()))
            .collect();
        m.sort();
        m
    };
    assert_eq!(mults(&from_file), mults(&from_name));
    assert_eq!(from_file["triad"]["commuting"], true);
}

#[test]
fn catalog_lists_every_name() {
    let v = json(&hermann(&["catalog"]));
    let names: Vec<&str> = v["result"]["triads"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, hermann_core::catalog::NAMES);
}

#[test]
fn volume_reports_ratio_and_oracles() {
    let out = hermann(&[
        "volume",
        "--triad",
        "u-on-grassmannian",
        "--p",
        "1",
        "--q",
        "2",
        "--w",
        "0.5235987755982988",
        "--v",
        "0.7853981633974483",
    ]);
    assert!(out.status.success());
    let v = json(&out);
    let pair = &v["result"]["pair"];
    let hand = 8.0 / (3.0 * 3f64.sqrt());
    assert!((pair["theta_ratio"].as_f64().unwrap() - hand).abs() < 1e-9);
    assert!((pair["relative_density"].as_f64().unwrap() - hand).abs() < 1e-9);
    assert!((pair["gram_ratio"].as_f64().unwrap() - hand).abs() < 1e-6 * hand);
    let frac = &v["result"]["fraction"];
    assert!(frac["weyl_free"].as_f64().unwrap() > 0.0);
}

#[test]
fn csv_and_out_file() {
    let path = tmp("density.csv");
    let out = hermann(&[
        "density",
        "--triad",
        "sphere-isotropy",
        "--n",
        "3",
        "--grid",
        "5",
        "--format",
        "csv",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "w1,theta,regular,chamber");
    assert_eq!(lines.len(), 6);
    // the sphere density |sin w| vanishes at both ends of the cell
    assert!(lines[1].contains(",false,"));
    let mid: Vec<&str> = lines[3].split(',').collect();
    let w: f64 = mid[0].parse().unwrap();
    let theta: f64 = mid[1].parse().unwrap();
    assert!((w - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    assert!((theta - 1.0).abs() < 1e-12);
    assert_eq!(mid[2], "true");
}

#[test]
fn shape_matches_across_oracles() {
    let out = hermann(&[
        "shape",
        "--triad",
        "u-on-grassmannian",
        "--p",
        "2",
        "--q",
        "3",
        "--w",
        "0.3,-0.7",
        "--u",
        "1,0.5",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = json(&out);
    let e = &v["result"]["errors"];
    assert!(e["finite_difference"].as_f64().unwrap() < 1e-5);
    assert!(e["algebraic"].as_f64().unwrap() < 1e-9);
    assert!(e["general"].as_f64().unwrap() < 1e-8);
    let order = v["result"]["finite_difference"]["convergence_order"]
        .as_f64()
        .unwrap();
    assert!((order - 2.0).abs() < 0.2, "{order}");
}

#[test]
fn non_commuting_triad_from_file() {
    let (c, s) = (0.4f64.cos(), 0.4f64.sin());
    // sigma2 = R diag(1,-1,-1) R^T for a rotation R in the (e0, e1) plane
    let s2 = [
        [c * c - s * s, 2.0 * c * s, 0.0],
        [2.0 * c * s, s * s - c * c, 0.0],
        [0.0, 0.0, -1.0],
    ];
    let triad = serde_json::json!({
        "name": "tilted-lines",
        "n": 3,
        "sigma1_conjugator": [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]],
        "sigma2_conjugator": s2,
    });
    let path = tmp("tilted.json");
    std::fs::write(&path, triad.to_string()).unwrap();
    let out = hermann(&[
        "verify",
        "--triad-file",
        path.to_str().unwrap(),
        "--mc-n",
        "5000",
    ]);
    let v = json(&out);
    assert_eq!(v["triad"]["commuting"], false);
    assert_eq!(out.status.code(), Some(0), "{:#}", v["result"]);
}
