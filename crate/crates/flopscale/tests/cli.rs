use std::path::Path;
use std::process::Command;

use flopscale::cli::{run, EXIT_DATA, EXIT_OK, EXIT_USAGE};
use flopscale::{ArtifactFile, ArtifactKind};
use flopscale_core::fit::{IsoflopLaws, PowerLawFit};
use flopscale_core::runtime::{ttft_cost, RuntimeFit};
use flopscale_core::{ArchConfig, CostFactors, LossSurfaceFit};
use serde_json::Value;

fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(std::iter::once("flopscale").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn json(args: &[&str]) -> Value {
    let mut full = vec!["--json"];
    full.extend_from_slice(args);
    let (code, out, err) = cli(&full);
    assert_eq!(code, EXIT_OK, "{err}");
    serde_json::from_str(&out).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn count_params_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "xlstm_406m.json",
        r#"{"kind":"xlstm","d_model":1024,"d_ff":2752,"d_qk":128,"d_hv":256,"n_head_q":4,"n_layer":24}"#,
    );
    let v = json(&["count", "params", "--config", &cfg]);
    assert_eq!(v["kind"], "counts");
    assert_eq!(v["payload"]["params"]["total"], 406_760_640u64);
    assert_eq!(v["provenance"]["inputs"][0]["path"], cfg.as_str());
    assert_eq!(v["provenance"]["inputs"][0]["sha256"].as_str().unwrap().len(), 64);

    let unknown = write(dir.path(), "bad.json", r#"{"kind":"xlstm","d_model":1,"d_ff":1,"d_qk":1,"d_hv":1,"n_head_q":1,"n_layer":1,"rope":1}"#);
    assert_eq!(cli(&["count", "params", "--config", &unknown]).0, EXIT_DATA);
    let gqa = write(dir.path(), "gqa.json", r#"{"kind":"transformer","d_model":768,"d_ff":2048,"d_qk":64,"d_hv":64,"n_head_q":12,"n_head_kv":5,"n_layer":12}"#);
    let (code, _, err) = cli(&["count", "params", "--config", &gqa]);
    assert_eq!(code, EXIT_DATA);
    assert!(err.contains("divis"), "{err}");
}

#[test]
fn count_flops_and_memops_breakdowns() {
    let v = json(&["count", "flops", "--preset", "transformer-162m", "--T", "1"]);
    assert_eq!(v["payload"]["breakdown"]["total"], 247_208_040.0);
    let t = json(&["count", "flops", "--preset", "transformer-162m", "--mode", "train", "--T", "1"]);
    assert_eq!(t["payload"]["training_flops"], 3.0 * 247_208_040.0);
    assert_eq!(t["payload"]["backward_multiplier"], 3.0);
    let m = json(&["count", "memops", "--preset", "transformer-162m", "--mode", "gen-step", "--Tp", "1024", "--Tg", "1"]);
    assert_eq!(m["payload"]["total_bytes"], 285_380_258.0);
    assert_eq!(m["payload"]["embedding_as_gather"], true);
    let (code, out, _) = cli(&["count", "flops", "--preset", "transformer-162m", "--T", "1"]);
    assert_eq!(code, 0);
    assert!(out.contains("247208040 (2.4721e8)"), "{out}");
}

#[test]
fn cache_size() {
    let v = json(&["cache-size", "--preset", "xlstm-6865m", "--kind", "mlstm", "--T", "100000"]);
    assert_eq!(v["payload"]["elements_per_layer"], 1_050_632.0);
    let zero = json(&["cache-size", "--preset", "transformer-162m", "--kind", "mha", "--T", "0"]);
    assert_eq!(zero["payload"]["bytes"], 0.0);
}

#[test]
fn roofline_h100() {
    let v = json(&["roofline", "--accel", "H100", "--flops", "1e15", "--bytes", "1e12"]);
    assert_eq!(v["roofline"]["intensity"], 1000.0);
    assert_eq!(v["roofline"]["regime"], "compute_bound");
    assert_eq!(cli(&["roofline", "--accel", "H100", "--flops", "1", "--bytes", "0"]).0, EXIT_DATA);
    assert_eq!(cli(&["roofline", "--accel", "TPU", "--flops", "1", "--bytes", "1"]).0, EXIT_DATA);
}

#[test]
fn fit_powerlaw_exact_points() {
    let dir = tempfile::tempdir().unwrap();
    let pts = write(dir.path(), "pts.csv", "H,N\n1e18,1e8\n1e20,1e9\n1e22,1e10\n");
    let out = dir.path().join("law.json");
    let v = json(&["fit", "powerlaw", "--in", &pts, "--out", out.to_str().unwrap()]);
    let fit: PowerLawFit = serde_json::from_value(v["payload"].clone()).unwrap();
    assert!((fit.exponent - 0.5).abs() < 1e-9);
    assert!((fit.coefficient - 0.1).abs() < 1e-9);
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(ArtifactFile::from_json(&text).unwrap().to_json(), text);
    assert_eq!(cli(&["fit", "powerlaw", "--in", &write(dir.path(), "neg.csv", "x,y\n1,-1\n2,3\n")]).0, EXIT_DATA);
}

#[test]
fn fit_parabola_reports_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("N,loss\n");
    for u in [8.0, 8.5, 9.0, 9.5, 10.0f64] {
        text.push_str(&format!("{},{}\n", 10f64.powf(u), (u - 9.0).powi(2) + 2.0));
    }
    let v = json(&["fit", "parabola", "--in", &write(dir.path(), "p.csv", &text)]);
    assert_eq!(v["kind"], "parabola");
    assert!((v["payload"]["optimum_x"].as_f64().unwrap() / 1e9 - 1.0).abs() < 1e-9);
    assert_eq!(v["payload"]["interior"], true);
}

fn isoflop_runs() -> String {
    let mut text = String::from("kind,N,D,T_ctx,C,loss\n");
    for h in [1e18, 1e19, 1e20, 1e21f64] {
        let center = (0.1 * h.sqrt()).log10();
        for i in 0..7 {
            let u = center - 0.6 + 0.2 * i as f64;
            let n = 10f64.powf(u);
            text.push_str(&format!("transformer,{n:e},{:e},2048,{h:e},{}\n", h / (6.0 * n), 2.0 + 0.3 * (u - center).powi(2)));
        }
    }
    text
}

#[test]
fn isoflop_then_plan() {
    let dir = tempfile::tempdir().unwrap();
    let runs = write(dir.path(), "iso.csv", &isoflop_runs());
    let fits = dir.path().join("fits.json");
    let v = json(&["fit", "isoflop", "--in", &runs, "--kind", "transformer", "--out", fits.to_str().unwrap()]);
    let laws: IsoflopLaws = serde_json::from_value(v["payload"].clone()).unwrap();
    assert_eq!(laws.profiles.len(), 4);
    assert!((laws.n_opt.exponent - 0.5).abs() < 1e-9);

    let p = json(&["plan", "--budget", "1e20", "--fits", fits.to_str().unwrap()]);
    assert_eq!(p["kind"], "plan");
    let n_star = p["payload"]["plan"]["N_star"].as_f64().unwrap();
    assert!((n_star / 1e9 - 1.0).abs() < 1e-9);
    let m_star = p["payload"]["plan"]["M_star"].as_f64().unwrap();
    let d_star = p["payload"]["plan"]["D_star"].as_f64().unwrap();
    assert!((m_star - d_star / n_star).abs() < 1e-9 * m_star);

    let r = json(&["plan", "--budget", "2.0164e20", "--fits", fits.to_str().unwrap(), "--realize", "--context", "2048"]);
    assert_eq!(r["payload"]["realized_on"], "transformer-1420m");
    assert!(r["payload"]["plan"]["budget_deviation"].is_number());

    let mut law_only = dir.path().join("law.csv");
    std::fs::write(&law_only, "x,y\n1,1\n2,2\n").unwrap();
    let law_art = dir.path().join("law.json");
    assert_eq!(cli(&["fit", "powerlaw", "--in", law_only.to_str().unwrap(), "--out", law_art.to_str().unwrap()]).0, 0);
    law_only = law_art;
    assert_eq!(cli(&["plan", "--budget", "1e20", "--fits", law_only.to_str().unwrap()]).0, EXIT_DATA);
}

#[test]
fn plan_grid_uses_builtin_tables() {
    let v = json(&["plan", "grid", "--N", "4.0676e8,3e8", "--M", "22,44"]);
    let grid = v["payload"]["grid"].as_array().unwrap();
    assert_eq!(grid.len(), 4);
    assert_eq!(grid[0]["config"].as_str().unwrap(), "xlstm-406m");
    let c0 = grid[0]["C"].as_f64().unwrap();
    assert!((grid[1]["C"].as_f64().unwrap() / c0 - 2.0).abs() < 1e-12);
    assert!(grid[2]["C"].is_null() || grid[2]["config"].is_string());
    let t = json(&["plan", "grid", "--N", "4.0676e8", "--M", "22", "--kind", "transformer"]);
    assert_eq!(t["payload"]["grid"][0]["config"], "transformer-406m");
    let default_ratios = json(&["plan", "grid", "--N", "1.62e8"]);
    assert_eq!(default_ratios["payload"]["grid"].as_array().unwrap().len(), 7);
}

#[test]
fn runtime_fit_and_predict() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ArchConfig::transformer(768, 2048, 64, 12, 12);
    let (rate, eps) = (4e14, 0.012);
    let mut text = String::from("config_id,metric,B,T_p,seconds\n");
    for b in [1u64, 2, 4] {
        for tp in [512u64, 1024, 2048, 4096] {
            let f = ttft_cost(&cfg, b, tp, &CostFactors::default()).unwrap();
            text.push_str(&format!("transformer-162m,ttft,{b},{tp},{:?}\n", f / rate + eps));
        }
    }
    text.push_str("transformer-162m,step-time,1,1024,0.004\n");
    let lat = write(dir.path(), "lat.csv", &text);
    let fit_path = dir.path().join("rt.json");
    let v = json(&["fit", "runtime", "--in", &lat, "--metric", "ttft", "--accel", "H100", "--out", fit_path.to_str().unwrap()]);
    let fit: RuntimeFit = serde_json::from_value(v["payload"]["fit"].clone()).unwrap();
    assert!((fit.rate_eff / rate - 1.0).abs() < 1e-6);
    assert!((fit.epsilon / eps - 1.0).abs() < 1e-6);
    assert!((v["payload"]["utilization"]["fraction"].as_f64().unwrap() - rate / 989e12).abs() < 1e-6);

    let p = json(&["predict", "ttft", "--fit", fit_path.to_str().unwrap(), "--preset", "transformer-162m", "--B", "8", "--Tp", "1024"]);
    let want = ttft_cost(&cfg, 8, 1024, &CostFactors::default()).unwrap() / rate + eps;
    assert!((p["seconds"].as_f64().unwrap() / want - 1.0).abs() < 1e-6);
    let (code, _, err) = cli(&["predict", "step-time", "--fit", fit_path.to_str().unwrap(), "--preset", "transformer-162m", "--Tp", "1"]);
    assert_eq!(code, EXIT_DATA, "{err}");

    let unknown = write(dir.path(), "u.csv", "config_id,metric,B,T_p,seconds\nmystery,ttft,1,1,1\nmystery,ttft,1,2,1\nmystery,ttft,1,3,1\n");
    assert_eq!(cli(&["fit", "runtime", "--in", &unknown, "--metric", "ttft"]).0, EXIT_DATA);
}

#[test]
fn predict_loss_in_bits() {
    let dir = tempfile::tempdir().unwrap();
    let s = LossSurfaceFit::from_coefficients(11.99, 13.35, 0.01, 0.53, 0.51, 0.29);
    let art = ArtifactFile::new(ArtifactKind::LossSurface, &s, Default::default()).unwrap();
    let path = dir.path().join("s.json");
    art.write(&path).unwrap();
    let v = json(&["predict", "loss", "--fit", path.to_str().unwrap(), "--N", "1.42e9", "--D", "3.124e10"]);
    let nats = v["loss_nats"].as_f64().unwrap();
    assert!((nats - 2.610_530_813).abs() < 1e-8);
    let (_, human, _) = cli(&["--bits", "predict", "loss", "--fit", path.to_str().unwrap(), "--N", "1.42e9", "--D", "3.124e10"]);
    assert_eq!(human.trim(), format!("{:.6} bits", nats / std::f64::consts::LN_2));
}

#[test]
fn pareto_and_load_errors() {
    let dir = tempfile::tempdir().unwrap();
    let runs = write(
        dir.path(),
        "runs.csv",
        "kind,N,D,T_ctx,C,loss\nxlstm,1e8,1e9,2048,1,3\nxlstm,1e8,1e9,2048,2,2\nxlstm,1e8,1e9,2048,3,2.5\nxlstm,1e8,1e9,2048,4,-1\n",
    );
    let out = dir.path().join("front.csv");
    let (code, stdout, err) = cli(&["--json", "pareto", "--in", &runs, "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    assert!(err.contains("line 5"), "{err}");
    let front: Value = serde_json::from_str(&stdout).unwrap();
    let cs: Vec<f64> = front.as_array().unwrap().iter().map(|r| r["C"].as_f64().unwrap()).collect();
    assert_eq!(cs, vec![1.0, 2.0]);
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 3);
    let (code, _, err) = cli(&["pareto", "--in", &runs, "--strict"]);
    assert_eq!(code, EXIT_DATA);
    assert!(err.contains("line 5"), "{err}");
}

#[test]
fn overtrain_groups() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("kind,N,D,T_ctx,C,loss\n");
    for (m, lambda) in [(22.0, 30.0), (220.0, 28.0)] {
        for n in [1.6e8, 4e8, 8.4e8f64] {
            let c = 6.0 * n * n * m;
            text.push_str(&format!("xlstm,{n:e},{:e},8192,{c:e},{:?}\n", n * m, lambda * c.powf(-0.047)));
        }
    }
    let v = json(&["fit", "overtrain", "--in", &write(dir.path(), "o.csv", &text)]);
    let groups = v["payload"]["groups"].as_array().unwrap();
    assert_eq!(groups.len(), 2);
    for g in groups {
        assert!((g["eta"].as_f64().unwrap() - 0.047).abs() < 1e-9);
    }
}

#[test]
fn surface_needs_enough_runs() {
    let dir = tempfile::tempdir().unwrap();
    let runs = write(dir.path(), "few.csv", "kind,N,D,T_ctx,C,loss\nxlstm,1e8,1e9,2048,1e18,3\n");
    let (code, _, err) = cli(&["fit", "surface", "--in", &runs]);
    assert_eq!(code, EXIT_DATA);
    assert!(err.contains("insufficient"), "{err}");
}

#[test]
fn deterministic_output() {
    let dir = tempfile::tempdir().unwrap();
    let runs = write(dir.path(), "iso.csv", &isoflop_runs());
    let a = cli(&["--json", "fit", "isoflop", "--in", &runs, "--kind", "transformer"]);
    let b = cli(&["--json", "fit", "isoflop", "--in", &runs, "--kind", "transformer"]);
    assert_eq!(a, b);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_flopscale");
    let status = |args: &[&str]| Command::new(bin).args(args).output().unwrap();
    let ok = status(&["count", "params", "--preset", "xlstm-406m"]);
    assert_eq!(ok.status.code(), Some(EXIT_OK));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("406760640"));
    assert_eq!(status(&["count", "params", "--frobnicate"]).status.code(), Some(EXIT_USAGE));
    assert_eq!(status(&["nonsense"]).status.code(), Some(EXIT_USAGE));
    assert_eq!(status(&["fit", "powerlaw", "--in", "/nonexistent.csv"]).status.code(), Some(EXIT_DATA));
}
