use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ds2aw_cli::commands::Manifest;
use ds2aw_core::field::Field;
use serde_json::Value;
use tempfile::TempDir;

const SINGLE: &str = r#"
schema_version = 1
L_x = 5.235987755982989
L_y = 2.991993003418850
eps = 0.01
dt = 0.001
times = [0.0]

[perturbation]
harmonics = [
    { n_x = 1, n_y = 0, c = [0.5, 0.0] },
    { n_x = -1, n_y = 0, c = [0.5, 0.0] },
]

[grid]
nx = 32
ny = 32
"#;

const FOUR_CLASSES: &str = r#"
schema_version = 1
L_x = 5.235987755982989
L_y = 4.487989505128276
eps = 0.001
dt = 0.001
times = [0.0]

[perturbation]
harmonics = [
    { n_x = 1, n_y = 0, c = [0.5, 0.1] },
    { n_x = -1, n_y = 0, c = [0.3, -0.2] },
    { n_x = 0, n_y = 1, c = [-0.4, 0.25] },
    { n_x = 0, n_y = -1, c = [0.2, 0.3] },
    { n_x = 1, n_y = 1, c = [0.15, -0.35] },
    { n_x = -1, n_y = -1, c = [0.45, 0.05] },
    { n_x = 1, n_y = -1, c = [-0.3, -0.3] },
    { n_x = -1, n_y = 1, c = [0.1, 0.4] },
]

[grid]
nx = 32
ny = 32
"#;

struct Sandbox {
    dir: TempDir,
}

impl Sandbox {
    fn new() -> Self {
        Sandbox { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn config(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_ds2aw")).args(args).current_dir(self.dir.path()).output().unwrap()
    }
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("process exited normally")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn stderr_json(o: &Output) -> Value {
    let text = String::from_utf8_lossy(&o.stderr);
    serde_json::from_str(text.lines().last().unwrap_or_default()).unwrap_or_else(|e| panic!("{e}: {text}"))
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn analyze_lists_four_unstable_classes() {
    let sb = Sandbox::new();
    let cfg = sb.config("four.toml", FOUR_CLASSES);
    let o = sb.run(&["analyze", "--config", arg(&cfg)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["unstable_classes"].as_array().unwrap().len(), 4);
    assert_eq!(v["genus"], 8);
    assert_eq!(v["genericity"]["ok"], true);
    let row = &v["modes"][0];
    for key in ["n_x", "n_y", "k_x", "k_y", "sigma", "unstable"] {
        assert!(!row[key].is_null(), "missing {key}");
    }
}

#[test]
fn non_generic_periods_exit_three() {
    let sb = Sandbox::new();
    let text = SINGLE.replace("L_x = 5.235987755982989", "L_x = 3.141592653589793").replace("L_y = 2.991993003418850", "L_y = 6.283185307179586");
    let cfg = sb.config("circle.toml", &text);
    let o = sb.run(&["analyze", "--config", arg(&cfg), "--out", "reports"]);
    assert_eq!(code(&o), 3);
    assert_eq!(stdout_json(&o)["genericity"]["ok"], false);
    assert!(sb.path("reports/analyze.json").exists());
    let e = stderr_json(&o);
    assert_eq!(e["error"]["class"], "genericity");
    assert_eq!(e["error"]["code"], 3);
    assert!(!e["error"]["report"]["on_circle_violations"].as_array().unwrap().is_empty());
}

#[test]
fn config_errors_exit_two() {
    let sb = Sandbox::new();
    let empty = SINGLE
        .replace("    { n_x = 1, n_y = 0, c = [0.5, 0.0] },\n    { n_x = -1, n_y = 0, c = [0.5, 0.0] },\n", "")
        .replace("harmonics = [\n]", "");
    let cfg = sb.config("empty.toml", &empty);
    let o = sb.run(&["analyze", "--config", arg(&cfg)]);
    assert_eq!(code(&o), 2);
    assert_eq!(stderr_json(&o)["error"]["class"], "config");

    let bad = sb.config("bad.toml", &SINGLE.replace("eps = 0.01", "eps = [1]"));
    let o = sb.run(&["spectrum", "--config", arg(&bad)]);
    assert_eq!(code(&o), 2);
    let msg = stderr_json(&o)["error"]["message"].as_str().unwrap().to_owned();
    assert!(msg.contains("line") && msg.contains("eps"), "{msg}");

    assert_eq!(code(&sb.run(&["spectrum"])), 2);
    assert_eq!(code(&sb.run(&["spectrum", "--config", "missing.toml"])), 2);
    assert_eq!(code(&sb.run(&["frobnicate"])), 2);
}

#[test]
fn spectrum_document_for_single_mode() {
    let sb = Sandbox::new();
    let cfg = sb.config("single.toml", SINGLE);
    let o = sb.run(&["spectrum", "--config", arg(&cfg), "--out", "doc"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["g"], 2);
    assert_eq!(v["pairs"].as_array().unwrap().len(), 2);
    // complex numbers as [re, im]
    assert_eq!(v["B"][0][0].as_array().unwrap().len(), 2);
    assert_eq!(v["u00"], serde_json::json!([1.01, 0.0]));
    let d = &v["diagnostics"];
    for delta in d["b_diagonal_delta_half_eps"].as_array().unwrap() {
        assert!((delta[0].as_f64().unwrap() + 2.0 * 2f64.ln()).abs() < 1e-10);
        assert!(delta[1].as_f64().unwrap().abs() < 1e-10);
    }
    for r in d["growth_rate_deltas"].as_array().unwrap() {
        assert!(r.as_f64().unwrap().abs() < 1e-12);
    }
    assert_eq!(fs::read(sb.path("doc/spectrum.json")).unwrap(), o.stdout);
}

#[test]
fn vanishing_coefficient_is_degenerate() {
    let sb = Sandbox::new();
    let text = SINGLE.replace("c = [0.5, 0.0] },\n    { n_x = -1, n_y = 0, c = [0.5, 0.0] }", "c = [0.0, 0.0] },\n    { n_x = 0, n_y = 1, c = [0.5, 0.0] }");
    let cfg = sb.config("degenerate.toml", &text);
    let o = sb.run(&["spectrum", "--config", arg(&cfg)]);
    assert_eq!(code(&o), 4);
    let e = stderr_json(&o);
    assert_eq!(e["error"]["class"], "degenerate");
    assert_eq!(e["error"]["pair"], 1);
    let mode = e["error"]["mode"].clone();
    assert!(mode == serde_json::json!([1, 0]) || mode == serde_json::json!([-1, 0]), "{mode}");
}

fn read_manifest(dir: &Path) -> Manifest {
    Manifest::load(dir).unwrap()
}

fn read_bin(path: &Path) -> Field {
    Field::read_binary(fs::File::open(path).unwrap()).unwrap()
}

#[test]
fn finite_gap_snapshot_matches_cauchy_data() {
    let sb = Sandbox::new();
    let cfg = sb.config("single.toml", SINGLE);
    let o = sb.run(&["evolve-fg", "--config", arg(&cfg), "--out", "fg", "--format", "both"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = read_manifest(&sb.path("fg"));
    assert_eq!(m.snapshots.len(), 1);
    let s = &m.snapshots[0];
    let f = read_bin(&sb.path("fg").join(s.bin.as_ref().unwrap()));
    let csv = fs::read_to_string(sb.path("fg").join(s.csv.as_ref().unwrap())).unwrap();
    assert_eq!(csv.lines().next(), Some("x,y,re_u,im_u,abs_u"));
    assert_eq!(csv.lines().count(), 1 + 32 * 32);
    let eps = 0.01;
    let err = (0..32 * 32)
        .map(|i| {
            let (x, _) = f.coords(i % 32, i / 32);
            (f.u[i] - (1.0 + eps * (1.2 * x).cos())).norm()
        })
        .fold(0.0, f64::max);
    assert!(err < 10.0 * eps * eps, "{err}");
    assert!(m.theta_radius.is_some());
}

#[test]
fn reference_run_keeps_constant_data() {
    let sb = Sandbox::new();
    let text = SINGLE
        .replace("c = [0.5, 0.0] },\n    { n_x = -1, n_y = 0, c = [0.5, 0.0] }", "c = [0.0, 0.0] }")
        .replace("times = [0.0]", "times = [0.0, 0.25, 0.5]\na = 1.5");
    let cfg = sb.config("flat.toml", &text);
    let o = sb.run(&["evolve-ref", "--config", arg(&cfg)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = sb.path("out");
    let m = read_manifest(&out);
    assert_eq!(m.snapshots.iter().map(|s| s.t).collect::<Vec<_>>(), vec![0.0, 0.25, 0.5]);
    for s in &m.snapshots {
        assert!(s.csv.is_none());
        let f = read_bin(&out.join(s.bin.as_ref().unwrap()));
        assert!(f.u.iter().all(|u| (u - 1.5).norm() <= 1e-13));
    }
}

#[test]
fn repeated_runs_are_bit_identical() {
    let sb = Sandbox::new();
    let cfg = sb.config("single.toml", &SINGLE.replace("times = [0.0]", "times = [0.0, 1.0]"));
    for cmd in ["evolve-fg", "evolve-ref"] {
        let (a, b) = (format!("{cmd}-a"), format!("{cmd}-b"));
        assert_eq!(code(&sb.run(&[cmd, "--config", arg(&cfg), "--out", &a])), 0);
        assert_eq!(code(&sb.run(&[cmd, "--config", arg(&cfg), "--out", &b, "--threads", "1"])), 0);
        let (ma, mb) = (read_manifest(&sb.path(&a)), read_manifest(&sb.path(&b)));
        assert_eq!(ma, mb);
        for s in &ma.snapshots {
            let name = s.bin.as_ref().unwrap();
            assert_eq!(fs::read(sb.path(&a).join(name)).unwrap(), fs::read(sb.path(&b).join(name)).unwrap());
        }
    }
}

#[test]
fn manifest_hash_follows_config() {
    let sb = Sandbox::new();
    let one = sb.config("one.toml", SINGLE);
    let two = sb.config("two.toml", &SINGLE.replace("eps = 0.01", "eps = 0.02"));
    let three = sb.config("three.toml", SINGLE);
    for (cfg, out) in [(&one, "r1"), (&two, "r2"), (&three, "r3")] {
        assert_eq!(code(&sb.run(&["evolve-ref", "--config", arg(cfg), "--out", out])), 0);
    }
    let h = |d: &str| read_manifest(&sb.path(d)).config_hash;
    assert_ne!(h("r1"), h("r2"));
    assert_eq!(h("r1"), h("r3"));
}

#[test]
fn compare_runs() {
    let sb = Sandbox::new();
    let cfg = sb.config("single.toml", &SINGLE.replace("times = [0.0]", "times = [0.0, 0.5]"));
    assert_eq!(code(&sb.run(&["evolve-fg", "--config", arg(&cfg), "--out", "fg"])), 0);
    assert_eq!(code(&sb.run(&["evolve-ref", "--config", arg(&cfg), "--out", "ref"])), 0);

    let o = sb.run(&["compare", "fg", "fg"]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    assert_eq!(v["worst_rel_l2"], 0.0);
    assert_eq!(v["worst_rel_linf"], 0.0);

    let o = sb.run(&["compare", "fg", "ref", "--out", "cmp"]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    assert_eq!(v["times"], serde_json::json!([0.0, 0.5]));
    let e0 = v["rel_linf"][0].as_f64().unwrap();
    assert!(e0 > 0.0 && e0 < 1e-3, "{e0}");
    assert!(sb.path("cmp/compare.json").exists());

    let coarse = sb.config("coarse.toml", &SINGLE.replace("times = [0.0]", "times = [0.0, 0.5]").replace("nx = 32", "nx = 16"));
    assert_eq!(code(&sb.run(&["evolve-ref", "--config", arg(&coarse), "--out", "coarse"])), 0);
    let o = sb.run(&["compare", "fg", "coarse"]);
    assert_eq!(code(&o), 2);
    assert_eq!(stderr_json(&o)["error"]["class"], "grid-mismatch");

    let late = sb.config("late.toml", &SINGLE.replace("times = [0.0]", "times = [0.0, 0.75]"));
    assert_eq!(code(&sb.run(&["evolve-ref", "--config", arg(&late), "--out", "late"])), 0);
    let o = sb.run(&["compare", "fg", "late"]);
    assert_eq!(code(&o), 2);
    assert_eq!(stderr_json(&o)["error"]["class"], "time-mismatch");
}

#[test]
fn grid_file_perturbation_matches_harmonics() {
    let sb = Sandbox::new();
    let cfg = sb.config("single.toml", SINGLE);
    let v0 = Field::from_fn(5.235987755982989, 2.99199300341885, 32, 32, 0.0, |x, _| (1.2 * x).cos().into());
    v0.write_binary(fs::File::create(sb.path("v0.bin")).unwrap()).unwrap();
    let text = SINGLE.replace(
        "harmonics = [\n    { n_x = 1, n_y = 0, c = [0.5, 0.0] },\n    { n_x = -1, n_y = 0, c = [0.5, 0.0] },\n]",
        "grid_file = \"v0.bin\"",
    );
    let from_file = sb.config("file.toml", &text);
    let a = stdout_json(&sb.run(&["spectrum", "--config", arg(&cfg)]));
    let b = stdout_json(&sb.run(&["spectrum", "--config", arg(&from_file)]));
    assert_eq!(a["g"], b["g"]);
    let (ba, bb) = (a["B"][0][0][0].as_f64().unwrap(), b["B"][0][0][0].as_f64().unwrap());
    assert!((ba - bb).abs() < 1e-12);

    let wrong = sb.config("wrong.toml", &text.replace("nx = 32", "nx = 64"));
    let o = sb.run(&["spectrum", "--config", arg(&wrong)]);
    assert_eq!(code(&o), 2);
    assert_eq!(stderr_json(&o)["error"]["class"], "grid-mismatch");

    let missing = sb.config("missing.toml", &text.replace("v0.bin", "nope.bin"));
    assert_eq!(code(&sb.run(&["spectrum", "--config", arg(&missing)])), 6);
}

#[test]
fn thread_count_from_environment() {
    let sb = Sandbox::new();
    let cfg = sb.config("single.toml", SINGLE);
    let o = Command::new(env!("CARGO_BIN_EXE_ds2aw"))
        .args(["evolve-fg", "--config", arg(&cfg), "--out", "env"])
        .env("DS2AW_THREADS", "2")
        .current_dir(sb.dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let o = Command::new(env!("CARGO_BIN_EXE_ds2aw"))
        .args(["analyze", "--config", arg(&cfg)])
        .env("DS2AW_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn shipped_configs_are_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let o = Command::new(env!("CARGO_BIN_EXE_ds2aw")).args(["analyze", "--config", arg(&path)]).output().unwrap();
            assert_eq!(code(&o), 0, "{}: {}", path.display(), String::from_utf8_lossy(&o.stderr));
            seen += 1;
        }
    }
    assert!(seen >= 2);
}
