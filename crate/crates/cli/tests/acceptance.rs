//! Runs `strip-vortex checks` twice on the disk configuration and judges the
//! nine acceptance criteria from the raw measurements in `checks.json`.

use std::path::Path;
use std::process::{Command, ExitCode};

use serde_json::Value;

const CONFIG: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/disk.toml");

fn run_checks(out: &Path) -> (bool, Vec<u8>) {
    let status = Command::new(env!("CARGO_BIN_EXE_strip-vortex"))
        .args(["checks", "--config", CONFIG, "--out"])
        .arg(out)
        .env_remove("STRIP_VORTEX_OUT")
        .output()
        .expect("spawn strip-vortex");
    let json = std::fs::read(out.join("checks.json")).unwrap_or_default();
    (status.status.success(), json)
}

fn f(v: &Value, path: &str) -> f64 {
    path.split('.')
        .fold(v, |v, k| match k.parse::<usize>() {
            Ok(i) => &v[i],
            Err(_) => &v[k],
        })
        .as_f64()
        .unwrap_or(f64::NAN)
}

struct Outcome {
    passed: bool,
    detail: String,
}

fn flag(name: &str, ok: bool) -> (&str, bool, f64) {
    (name, ok, f64::from(u8::from(ok)))
}

fn judge(parts: &[(&str, bool, f64)]) -> Outcome {
    Outcome {
        passed: parts.iter().all(|p| p.1),
        detail: parts
            .iter()
            .map(|(n, ok, v)| format!("{n}={v:.3e}{}", if *ok { "" } else { "(!)" }))
            .collect::<Vec<_>>()
            .join(" "),
    }
}

fn kernel(r: &Value) -> Outcome {
    let k = &r["kernel"];
    let slope = f(k, "far_field_slope");
    judge(&[
        ("pairs", f(k, "pairs") == 10_000.0, f(k, "pairs")),
        ("symmetry", f(k, "symmetry") <= 1e-13, f(k, "symmetry")),
        ("wall", f(k, "wall_trace") <= 1e-10, f(k, "wall_trace")),
        ("slope", (slope + 1.0).abs() <= 0.01, slope),
        ("robin", f(k, "robin_deviation") <= 1e-14, f(k, "robin_deviation")),
    ])
}

fn bem(r: &Value) -> Outcome {
    let b = &r["bem"];
    let panels: Vec<f64> = b["residuals"].as_array().map(|a| a.iter().map(|p| f(p, "0")).collect()).unwrap_or_default();
    judge(&[
        ("panels", panels == [32.0, 64.0, 128.0, 256.0], panels.len() as f64),
        ("order", f(b, "order") >= 1.5, f(b, "order")),
        ("probes", f(b, "probes") == 1000.0, f(b, "probes")),
        ("rho_min", f(b, "rho_min") > 0.0, f(b, "rho_min")),
        ("rho_max", f(b, "rho_max") < 1.0, f(b, "rho_max")),
        ("decay", (f(b, "decay_slope") + 1.0).abs() <= 0.02, f(b, "decay_slope")),
        ("C.1", f(b, "representation_error") <= 1e-4, f(b, "representation_error")),
        ("C.2", f(b, "green_identity_error") <= 1e-3, f(b, "green_identity_error")),
    ])
}

fn green(r: &Value) -> Outcome {
    let g = &r["green"];
    let walls: Vec<f64> = g["wall_offsets"].as_array().map(|a| a.iter().map(|p| f(p, "1")).collect()).unwrap_or_default();
    let wall = walls.iter().map(|w| w.abs()).fold(if walls.len() == 3 { 0.0 } else { f64::NAN }, f64::max);
    judge(&[
        ("lambda0", f(g, "lambda0") > 0.0, f(g, "lambda0")),
        ("doubling", f(g, "lambda0_change") <= 1e-4, f(g, "lambda0_change")),
        ("symmetry", f(g, "symmetry") <= 1e-4, f(g, "symmetry")),
        ("trace", f(g, "obstacle_trace") <= 1e-4, f(g, "obstacle_trace")),
        ("robin_far", f(g, "robin_far_error") < 1e-3, f(g, "robin_far_error")),
        ("robin_wall", wall < 0.5, wall),
    ])
}

fn background(r: &Value) -> Outcome {
    let b = &r["background"];
    let rows = b["beta"].as_array().cloned().unwrap_or_default();
    let ratios: Vec<f64> = rows.iter().map(|r| f(r, "gamma_over_b")).collect();
    let span = ratios.last().copied().unwrap_or(f64::NAN) / ratios.first().copied().unwrap_or(f64::NAN);
    let beta_min = rows
        .iter()
        .map(|r| f(r, "beta_plus").min(f(r, "beta_minus")))
        .fold(if rows.is_empty() { f64::NAN } else { f64::INFINITY }, f64::min);
    judge(&[
        ("lambda", f(b, "lambda_relative_error") <= 1e-3, f(b, "lambda_relative_error")),
        ("circulation", f(b, "circulation_relative_error") <= 1e-3, f(b, "circulation_relative_error")),
        ("range", (span - 4.0).abs() < 1e-12, span),
        ("beta_min", beta_min > 0.0, beta_min),
        ("C'", f(b, "lower_constant_spread") <= 1.5, f(b, "lower_constant_spread")),
        ("C''", f(b, "upper_constant_spread") <= 1.5, f(b, "upper_constant_spread")),
    ])
}

fn regimes(r: &Value) -> Outcome {
    let w = &r["window"];
    let gap = f(w, "frame_minimum") - f(w, "minimizer.value");
    let layer = r["layer"].as_array().cloned().unwrap_or_default();
    let bs: Vec<f64> = layer.iter().map(|l| f(l, "b")).collect();
    let d: Vec<f64> = layer.iter().map(|l| f(l, "scaled_distance")).collect();
    let ratio = d.iter().copied().fold(f64::NEG_INFINITY, f64::max) / d.iter().copied().fold(f64::INFINITY, f64::min);
    let c = &r["coexistence"];
    let distinct = c["layer"]["region"] != c["exterior"]["region"] && c["regime"] == "window-iii";
    judge(&[
        ("L", f(w, "half_width") == 8.0, f(w, "half_width")),
        ("margin_cells", f(w, "margin_cells") >= 1.0, f(w, "margin_cells")),
        ("exhaustion_gap", gap > 0.0, gap),
        ("b", bs == [20.0, 40.0, 80.0], bs.len() as f64),
        ("d*(b+lambda)_ratio", ratio <= 4.0, ratio),
        ("iii_b", f(c, "b") == 40.0, f(c, "b")),
        ("iii_distinct", distinct, f(c, "separation")),
    ])
}

fn sweep(r: &Value) -> Outcome {
    let s = &r["sweep"];
    let rows = s["sweep"]["rows"].as_array().cloned().unwrap_or_default();
    let eps: Vec<f64> = rows.iter().map(|r| f(r, "eps")).collect();
    let converged = !rows.is_empty() && rows.iter().all(|r| r["converged"] == true);
    let traces = s["traces"].as_array().cloned().unwrap_or_default();
    let worst = |k: &str| traces.iter().map(|t| f(t, k)).fold(if traces.is_empty() { f64::NAN } else { 0.0 }, f64::max);
    let cells = f(s, "smallest_eps_distance") / f(s, "h");
    judge(&[
        ("eps", eps == [0.1, 0.05, 0.025], eps.len() as f64),
        ("converged", converged, rows.len() as f64),
        ("mass", worst("max_mass_error") <= 1e-10, worst("max_mass_error")),
        ("energy_drop", worst("max_energy_drop") <= 1e-12, worst("max_energy_drop")),
        ("diam_ratio", f(s, "sweep.diameter_ratio") <= 2.0, f(s, "sweep.diameter_ratio")),
        ("centroid_cells", cells <= 2.0, cells),
        ("mu_drift", f(s, "sweep.mu_drift") <= 0.1, f(s, "sweep.mu_drift")),
        ("2E-mu", f(s, "sweep.two_energy_minus_mu_spread") <= 0.2, f(s, "sweep.two_energy_minus_mu_spread")),
        flag("exterior", s["exterior_negative"] == true),
    ])
}

fn layer_patch(r: &Value) -> Outcome {
    let p = &r["layer_patch"];
    let d = f(p, "scaled_distance");
    let eps_scaled = f(p, "eps") * f(p, "layer_scale");
    judge(&[
        ("b", f(p, "b") == 40.0, f(p, "b")),
        ("eps(b+lambda)", (eps_scaled - 0.5).abs() < 1e-12, eps_scaled),
        flag("converged", p["outcome"]["Ok"]["converged"] == true),
        flag("no_contact", p["boundary_contact"] == false),
        ("theta1<d", d > f(p, "theta1"), d),
        ("d<theta2", d < f(p, "theta2"), f(p, "theta2")),
    ])
}

fn brute_force(r: &Value) -> Outcome {
    let b = &r["brute_force"];
    let gap = (f(b, "exhaustive") - f(b, "iteration")).abs();
    judge(&[("cells", f(b, "cells") == 144.0, f(b, "cells")), ("gap", gap <= 1e-9, gap)])
}

fn main() -> ExitCode {
    let first = tempfile::tempdir().expect("tempdir");
    let second = tempfile::tempdir().expect("tempdir");
    let (ok_a, a) = run_checks(first.path());
    let (ok_b, b) = run_checks(second.path());
    let report: Value = serde_json::from_slice(&a).unwrap_or(Value::Null);
    let r = &report["reports"];

    let mut outcomes = vec![
        ("kernel exactness", kernel(r)),
        ("BEM convergence", bem(r)),
        ("Green decomposition", green(r)),
        ("background flow", background(r)),
        ("Kirchhoff-Routh regimes", regimes(r)),
        ("patch solver sweep", sweep(r)),
        ("regime (ii) patch", layer_patch(r)),
        ("brute-force oracle", brute_force(r)),
    ];
    outcomes.push((
        "determinism",
        Outcome {
            passed: ok_a && ok_b && !a.is_empty() && a == b,
            detail: format!("exit_ok={} bytes={} identical={}", ok_a && ok_b, a.len(), a == b),
        },
    ));

    let mut all = true;
    for (i, (name, o)) in outcomes.iter().enumerate() {
        all &= o.passed;
        println!("{} criterion {} ({name}): {}", if o.passed { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
