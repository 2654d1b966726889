use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use levyrate::{Backend, Constants, Curve, Workload};
use serde_json::{json, Value};

const BIN: &str = env!("CARGO_BIN_EXE_levyrate");

fn mm1(k: f64) -> Value {
    json!({
        "input": { "poisson_rate": 1.0, "jump": { "type": "exponential", "params": { "rate": 1.0 } } },
        "workload_V": "from_input_first_jump",
        "off": { "rule": "first_jump" },
        "costs": { "h": 1.0, "K": k, "d": 1.0, "r": 2.0 },
        "solver": { "rate_grid": { "v_max": 8.0, "points": 81 } },
        "sim": { "n_cycles": 20000, "seed": 11, "batch_count": 20, "lst_alphas": [1.0] }
    })
}

fn uniform_fixed(k: f64) -> Value {
    let (h, d) = (1.0, 1.0);
    json!({
        "input": { "poisson_rate": 0.5, "jump": { "type": "uniform", "params": { "lo": 0.0, "hi": 1.0 } } },
        "workload_V": "from_input_first_jump",
        "off": { "rule": "first_jump", "mean_tau": 2.0 },
        "costs": { "h": h, "K": k, "d": d, "r": 2.0 },
        "solver": {
            "backend": "uniform",
            "overrides": {
                "rho": 1.0, "mu": 7.0 / 12.0,
                "K1": k + d + 5.0 * h / 8.0, "K2": d + 7.0 * h / 6.0, "K3": 2.5
            }
        }
    })
}

struct Run {
    code: i32,
    stderr: String,
}

fn run(dir: &Path, model: &Value, args: &[&str], env: &[(&str, &str)]) -> Run {
    let path = dir.join("model.json");
    std::fs::write(&path, serde_json::to_string_pretty(model).unwrap()).unwrap();
    let mut cmd = Command::new(BIN);
    cmd.arg(args[0]).arg(&path).args(&args[1..]).env_remove("LEVYRATE_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    let out = cmd.output().unwrap();
    Run { code: out.status.code().unwrap(), stderr: String::from_utf8_lossy(&out.stderr).into_owned() }
}

fn table(path: &Path) -> (Vec<String>, Vec<HashMap<String, String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| header.iter().cloned().zip(rec.unwrap().iter().map(String::from)).collect())
        .collect();
    (header, rows)
}

fn f(row: &HashMap<String, String>, key: &str) -> f64 {
    row[key].parse().unwrap_or_else(|_| panic!("{key} = {:?}", row[key]))
}

fn out_in(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

#[test]
fn solve_exponential_self_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_in(dir.path(), "s.csv");
    let r = run(dir.path(), &mm1(75.0), &["solve", "--out", out.to_str().unwrap()], &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let (header, rows) = table(&out);
    assert_eq!(
        header,
        ["lambda_min", "G_min", "error_bound", "K1", "K2", "K3", "rho", "mu", "lambda_star", "budget", "backend"]
    );
    let row = &rows[0];
    // theta = nu = 1, r = rho + 1: q = mu = rho = 1, E V = 1, E V^2 = 2, so
    // K1 = K + (d + d + h) + h, K2 = d + 2h, K3 = 1 + 1
    let (k1, k2, k3) = (75.0 + 4.0, 1.0 + 2.0, 2.0);
    assert!((f(row, "K1") - k1).abs() < 1e-12);
    assert!((f(row, "K2") - k2).abs() < 1e-12);
    assert!((f(row, "K3") - k3).abs() < 1e-12);
    let c = Constants::direct(k1, k2, k3, 1.0, 1.0, 1.0, Some(2.0)).unwrap();
    let curve = Curve::new(c, Workload::Exponential { rate: 1.0 }, Backend::Quadrature).unwrap();
    let lam = f(row, "lambda_min");
    assert!(lam > 0.0 && lam <= f(row, "lambda_star"));
    assert!((f(row, "G_min") - curve.value(lam)).abs() < 1e-7);

    let (header, rates) = table(&dir.path().join("s.rates.csv"));
    assert_eq!(header, ["v", "rate"]);
    assert_eq!(rates.len(), 81);
    let rs: Vec<f64> = rates.iter().map(|x| f(x, "rate")).collect();
    assert!(rs.windows(2).all(|w| w[0] <= w[1]));
    assert!(rs.iter().all(|&x| x > 1.0 && x <= 2.0));
}

#[test]
fn solve_uniform_matches_grid_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_in(dir.path(), "u.csv");
    let k = 200.0;
    let r = run(dir.path(), &uniform_fixed(k), &["solve", "--out", out.to_str().unwrap()], &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stderr.contains("override"));
    let row = &table(&out).1[0];

    // piecewise closed form of G for V ~ U[0,1]
    let (k1, k2, k3, h, mr) = (k + 1.0 + 0.625, 1.0 + 7.0 / 6.0, 2.5, 1.0, 7.0 / 12.0);
    let g = |l: f64| {
        if l <= 0.5 {
            (k1 + k2 / (3.0 * mr) * l.powi(3) + h / (4.0 * mr) * l.powi(4)) / (k3 + l.powi(3) / (3.0 * mr))
        } else {
            (k1 + k2 / (2.0 * mr) * (l / 2.0 - 1.0 / 6.0) + h / (4.0 * mr) * (l * l / 2.0 - 1.0 / 16.0))
                / (k3 + (l / 2.0 - 1.0 / 6.0) / (2.0 * mr))
        }
    };
    let star = (k1 - k2 * k3) / (k3 * h);
    let n = 200_000;
    let (mut best, mut arg) = (g(0.0), 0.0);
    for i in 1..=n {
        let l = star * i as f64 / n as f64;
        if g(l) < best {
            best = g(l);
            arg = l;
        }
    }
    let step = star / n as f64;
    assert!((f(row, "lambda_min") - arg).abs() <= 2.0 * step);
    assert!(f(row, "G_min") <= best + 1e-12);
    assert!(best - f(row, "G_min") < 1e-6);
}

#[test]
fn solve_small_setup_cost_runs_at_full_rate() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_in(dir.path(), "u.csv");
    // K1 = 2.625 <= K2 K3 = 5.4
    let r = run(dir.path(), &uniform_fixed(1.0), &["solve", "--out", out.to_str().unwrap()], &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(f(&table(&out).1[0], "lambda_min"), 0.0);
    let rates = table(&dir.path().join("u.rates.csv")).1;
    assert!(rates.iter().all(|x| f(x, "rate") == 2.0));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_in(dir.path(), "x.csv");
    let o = out.to_str().unwrap();

    let mut bad = mm1(1.0);
    bad["costs"]["extra"] = json!(1.0);
    let r = run(dir.path(), &bad, &["solve", "--out", o], &[]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("extra") && r.stderr.contains("line"), "{}", r.stderr);

    let mut bad = mm1(1.0);
    bad["input"]["jump"]["params"] = json!({ "rate": 1.0, "shape": 2.0 });
    assert_eq!(run(dir.path(), &bad, &["solve", "--out", o], &[]).code, 2);

    let mut bad = mm1(1.0);
    bad["costs"]["h"] = json!(-1.0);
    assert_eq!(run(dir.path(), &bad, &["solve", "--out", o], &[]).code, 2);

    let mut infeasible = mm1(1.0);
    infeasible["costs"]["r"] = json!(0.9);
    assert_eq!(run(dir.path(), &infeasible, &["solve", "--out", o], &[]).code, 3);
    assert_eq!(run(dir.path(), &infeasible, &["simulate", "--out", o], &[]).code, 3);

    let r = run(dir.path(), &mm1(1.0), &["simulate", "--policy", "constant:0.8", "--out", o], &[]);
    assert_eq!(r.code, 4, "{}", r.stderr);

    let mut no_sim = mm1(1.0);
    no_sim.as_object_mut().unwrap().remove("sim");
    assert_eq!(run(dir.path(), &no_sim, &["simulate", "--out", o], &[]).code, 2);
    assert_eq!(run(dir.path(), &mm1(1.0), &["partial", "--out", o], &[]).code, 2);

    let r = run(dir.path(), &mm1(1.0), &["simulate", "--out", o], &[("LEVYRATE_THREADS", "zero")]);
    assert_eq!(r.code, 2);
    let r = run(dir.path(), &mm1(1.0), &["simulate", "--policy", "square:2", "--out", o], &[]);
    assert_eq!(r.code, 2);
}

#[test]
fn simulate_is_byte_identical_across_threads() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "2", "8", "8"] {
        let out = dir.path().join(format!("sim{threads}.csv"));
        let r = run(
            dir.path(),
            &mm1(75.0),
            &["simulate", "--policy", "optimal", "--out", out.to_str().unwrap()],
            &[("LEVYRATE_THREADS", threads)],
        );
        assert_eq!(r.code, 0, "{}", r.stderr);
        outputs.push(std::fs::read(&out).unwrap());
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn simulate_reports_comparisons() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_in(dir.path(), "m.csv");
    let r = run(dir.path(), &mm1(1.0), &["simulate", "--policy", "constant:2", "--out", out.to_str().unwrap()], &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let (header, rows) = table(&out);
    assert_eq!(header, ["metric", "estimate", "half_width", "analytic", "z"]);
    let cost = rows.iter().find(|x| x["metric"] == "avg_cost").unwrap();
    assert_eq!(f(cost, "analytic"), 2.5);
    assert!(f(cost, "z").abs() < 4.0);
    assert!(rows.iter().any(|x| x["metric"] == "lst:1" && !x["analytic"].is_empty()));
}

#[test]
fn optimal_policy_beats_full_rate_in_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let mut est = Vec::new();
    for policy in ["optimal", "constant:2"] {
        let out = dir.path().join("c.csv");
        let r = run(dir.path(), &mm1(200.0), &["simulate", "--policy", policy, "--out", out.to_str().unwrap()], &[]);
        assert_eq!(r.code, 0, "{}", r.stderr);
        let rows = table(&out).1;
        let c = rows.iter().find(|x| x["metric"] == "avg_cost").unwrap().clone();
        est.push((f(&c, "estimate"), f(&c, "half_width")));
    }
    assert!(est[0].0 + est[0].1 < est[1].0 - est[1].1, "{est:?}");
}

#[test]
fn sweep_curves_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_in(dir.path(), "w.csv");
    let r = run(
        dir.path(),
        &mm1(1.0),
        &["sweep", "--param", "K", "--values", "1,75,200", "--lambda-grid", "0:40:81", "--out", out.to_str().unwrap()],
        &[],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    let (header, curves) = table(&out);
    assert_eq!(header, ["param", "param_value", "lambda", "G"]);
    assert_eq!(curves.len(), 3 * 81);
    let (header, summary) = table(&dir.path().join("w.summary.csv"));
    assert_eq!(header, ["param", "param_value", "lambda_min", "G_min", "error_bound"]);
    let lams: Vec<f64> = summary.iter().map(|x| f(x, "lambda_min")).collect();
    assert!(lams.windows(2).all(|w| w[0] <= w[1]), "{lams:?}");

    // one-value sweep agrees with solve
    let single = out_in(dir.path(), "one.csv");
    let r = run(
        dir.path(),
        &mm1(75.0),
        &["sweep", "--param", "K", "--values", "75", "--lambda-grid", "0:1:2", "--out", single.to_str().unwrap()],
        &[],
    );
    assert_eq!(r.code, 0);
    let solved = out_in(dir.path(), "s.csv");
    assert_eq!(run(dir.path(), &mm1(75.0), &["solve", "--out", solved.to_str().unwrap()], &[]).code, 0);
    let a = &table(&dir.path().join("one.summary.csv")).1[0];
    let b = &table(&solved).1[0];
    assert_eq!(a["lambda_min"], b["lambda_min"]);
    assert_eq!(a["G_min"], b["G_min"]);
}

#[test]
fn sweep_uniform_is_smooth_across_seam() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_in(dir.path(), "w.csv");
    let mut model = uniform_fixed(200.0);
    model["solver"]["overrides"] = json!({});
    let r = run(
        dir.path(),
        &model,
        &["sweep", "--param", "h", "--values", "1,5,10", "--lambda-grid", "0.45:0.55:1001", "--out", out.to_str().unwrap()],
        &[],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    let rows = table(&out).1;
    for chunk in rows.chunks(1001) {
        let g: Vec<f64> = chunk.iter().map(|x| f(x, "G")).collect();
        let d: Vec<f64> = g.windows(2).map(|w| w[1] - w[0]).collect();
        let dd: Vec<f64> = d.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        // a kink at 0.5 (index 500) would show as an outlying second difference
        let seam = dd[495..505].iter().copied().fold(0.0, f64::max);
        let away = dd[..480].iter().chain(&dd[520..]).copied().fold(0.0, f64::max);
        assert!(seam <= 1.1 * away, "{seam} vs {away}");
        assert!(d.iter().all(|x| x.abs() < 1e-2));
    }
}

#[test]
fn partial_single_count_matches_solve() {
    let dir = tempfile::tempdir().unwrap();
    let mut model = mm1(30.0);
    model["workload_V"] = json!({ "type": "discrete", "params": { "atoms": [[0.8, 1.0]] } });
    model["solver"] = json!({ "backend": "discrete" });
    model["partial_info"] = json!({ "p": [1.0], "delta": 0.8, "sigma2": 0.0 });
    let p = out_in(dir.path(), "p.csv");
    let s = out_in(dir.path(), "s.csv");
    assert_eq!(run(dir.path(), &model, &["partial", "--out", p.to_str().unwrap()], &[]).code, 0);
    assert_eq!(run(dir.path(), &model, &["solve", "--out", s.to_str().unwrap()], &[]).code, 0);
    let a = &table(&p).1[0];
    let b = &table(&s).1[0];
    assert!((f(a, "lambda_min") - f(b, "lambda_min")).abs() < 1e-12);
    assert!((f(a, "cost") - f(b, "G_min")).abs() < 1e-12);
}

#[test]
fn partial_two_count_segment_table() {
    let dir = tempfile::tempdir().unwrap();
    let mut model = mm1(40.0);
    model["costs"] = json!({ "h": 2.0, "K": 40.0, "d": 0.5, "r": 3.0 });
    model["partial_info"] = json!({ "p": [0.0, 0.6, 0.0, 0.4], "delta": 0.5, "sigma2": 0.3 });
    let out = out_in(dir.path(), "p.csv");
    let r = run(dir.path(), &model, &["partial", "--out", out.to_str().unwrap()], &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);

    // hand evaluation: rho = mu = 1, q = 1/(r - rho), V' = 0.5 N on {1, 2}
    let (h, k, d, q, tau) = (2.0, 40.0, 0.5, 0.5, 1.0);
    let (atoms, sigma2, delta) = ([(1.0, 0.6), (2.0, 0.4)], 0.3, 0.5);
    let ev: f64 = atoms.iter().map(|a| a.0 * a.1).sum();
    let ev2: f64 = atoms.iter().map(|a| a.0 * a.0 * a.1).sum();
    let extra = h * sigma2 / (2.0 * delta);
    let k1 = k + (d + d * q + h * q * q) * ev + h * q * ev2 / 2.0 + extra * q * ev;
    let k2 = d + 2.0 * h * q + extra;
    let k3 = tau + q * ev;
    let row = &table(&out).1[0];
    assert!((f(row, "K1") - k1).abs() < 1e-12);
    assert!((f(row, "K2") - k2).abs() < 1e-12);
    assert!((f(row, "K3") - k3).abs() < 1e-12);

    let (header, segs) = table(&dir.path().join("p.segments.csv"));
    assert_eq!(header, ["i", "lo", "hi", "S", "T", "U", "Q", "W"]);
    let mr = 1.0;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    let mut s3 = 0.0;
    for (i, seg) in segs.iter().enumerate() {
        if i > 0 {
            let (v, p) = atoms[i - 1];
            s1 += p * v;
            s2 += p * v * v;
            s3 += p * v * v * v;
        }
        let expect = [
            h * s1 / (4.0 * mr),
            k2 * s1 / (2.0 * mr),
            k1 - k2 * s2 / (4.0 * mr) - h * s3 / (16.0 * mr),
            k3 - s2 / (4.0 * mr),
            s1 / (2.0 * mr),
        ];
        for (key, e) in ["S", "T", "U", "Q", "W"].iter().zip(expect) {
            assert!((f(seg, key) - e).abs() < 1e-12, "segment {i} {key}");
        }
    }

    let (header, rates) = table(&dir.path().join("p.rates.csv"));
    assert_eq!(header, ["n", "rate"]);
    let ns: Vec<f64> = rates.iter().map(|x| f(x, "n")).collect();
    assert_eq!(ns, [2.0, 4.0]);
    assert!(f(&rates[0], "rate") <= f(&rates[1], "rate"));
}
