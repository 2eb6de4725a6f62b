use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use patchtrack::mot_io;
use patchtrack::synth;
use serde_json::Value;
use tempfile::TempDir;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_patchtrack"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = bin(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fixture(root: &Path) -> (PathBuf, PathBuf) {
    let dir = root.join("fixture");
    ok(&["synth", "--crossing-fixture", "--out-dir", s(&dir)]);
    (dir.join("gt.txt"), dir.join("det.txt"))
}

fn eval_json(gt: &Path, res: &Path, out: &Path) -> Value {
    let o = ok(&["eval", "--gt", s(gt), "--res", s(res), "--out", s(out)]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v, serde_json::from_str::<Value>(&fs::read_to_string(out).unwrap()).unwrap());
    v
}

fn ids(path: &Path) -> std::collections::BTreeSet<u64> {
    let seq = mot_io::parse_tracks::<f64>(&fs::read_to_string(path).unwrap(), "x").unwrap();
    seq.frames.values().flatten().map(|r| r.id).collect()
}

// 1 target for 10 frames; the prediction changes id at frame 6.
fn switch_files(dir: &Path) -> (PathBuf, PathBuf) {
    let mut gt = String::new();
    let mut res = String::new();
    for f in 1..=10 {
        let x = 10 * f;
        gt.push_str(&format!("{f},1,{x},20,30,60,1,-1,-1,-1\n"));
        let id = if f < 6 { 7 } else { 8 };
        res.push_str(&format!("{f},{id},{x},20,30,60,0.9,-1,-1,-1\n"));
    }
    let (g, r) = (dir.join("gt.txt"), dir.join("switch.txt"));
    fs::write(&g, gt).unwrap();
    fs::write(&r, res).unwrap();
    (g, r)
}

#[test]
fn track_fixture_defaults_keeps_both_identities() {
    let d = TempDir::new().unwrap();
    let (gt, det) = fixture(d.path());
    let res = d.path().join("res.txt");
    ok(&["track", "--det", s(&det), "--out", s(&res)]);
    assert_eq!(ids(&res).len(), 2);
    let v = eval_json(&gt, &res, &d.path().join("eval.json"));
    assert_eq!(v["fixture"]["counts"]["idsw"], 0);
    assert!(d.path().join("res.txt.manifest.json").exists());
}

#[test]
fn track_fixture_without_patching_switches() {
    let d = TempDir::new().unwrap();
    let (gt, det) = fixture(d.path());
    let res = d.path().join("res.txt");
    ok(&["track", "--det", s(&det), "--out", s(&res), "--cost", "area", "--patch-min", "2.0"]);
    let v = eval_json(&gt, &res, &d.path().join("eval.json"));
    assert!(v["fixture"]["counts"]["idsw"].as_u64().unwrap() > 0);
}

#[test]
fn track_empty_detections() {
    let d = TempDir::new().unwrap();
    let det = d.path().join("empty.txt");
    fs::write(&det, "").unwrap();
    let res = d.path().join("res.txt");
    ok(&["track", "--det", s(&det), "--out", s(&res)]);
    assert_eq!(fs::read_to_string(&res).unwrap(), "");
}

#[test]
fn track_parse_error_reports_line() {
    let d = TempDir::new().unwrap();
    let det = d.path().join("det.txt");
    fs::write(&det, "1,-1,0,0,10,10,0.9\n2,-1,0,0,ten,10,0.9\n").unwrap();
    let out = bin(&["track", "--det", s(&det), "--out", s(&d.path().join("r.txt"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn track_config_errors_exit_3() {
    let d = TempDir::new().unwrap();
    let (_, det) = fixture(d.path());
    let r = d.path().join("r.txt");
    let out = bin(&["track", "--det", s(&det), "--out", s(&r), "--tau-low", "0.7"]);
    assert_eq!(out.status.code(), Some(3));

    let cfg = d.path().join("cfg.json");
    fs::write(&cfg, r#"{"tau_hihg": 0.5}"#).unwrap();
    let out = bin(&["track", "--det", s(&det), "--out", s(&r), "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn flags_override_config_file() {
    let d = TempDir::new().unwrap();
    let (_, det) = fixture(d.path());
    let cfg = d.path().join("cfg.json");
    fs::write(&cfg, r#"{"cost_kind": "height", "patch_min": 2.0, "max_age": 5}"#).unwrap();
    let r = d.path().join("r.txt");
    ok(&["track", "--det", s(&det), "--out", s(&r), "--config", s(&cfg), "--cost", "area"]);
    let m: Value = serde_json::from_str(&fs::read_to_string(d.path().join("r.txt.manifest.json")).unwrap()).unwrap();
    let t = &m["config"]["tracker"];
    assert_eq!(t["cost_kind"], "area");
    assert_eq!(t["patch_min"], 2.0);
    assert_eq!(t["max_age"], 5);
}

#[test]
fn eval_self_is_perfect() {
    let d = TempDir::new().unwrap();
    let (gt, _) = fixture(d.path());
    let v = eval_json(&gt, &gt, &d.path().join("e.json"));
    for seq in ["fixture", "COMBINED"] {
        for k in ["hota", "deta", "assa", "mota", "idf1"] {
            assert_eq!(v[seq][k], 100.0, "{seq} {k}");
        }
    }
}

#[test]
fn eval_empty_results_score_zero() {
    let d = TempDir::new().unwrap();
    let (gt, _) = fixture(d.path());
    let res = d.path().join("none.txt");
    fs::write(&res, "").unwrap();
    let v = eval_json(&gt, &res, &d.path().join("e.json"));
    assert_eq!(v["fixture"]["mota"], 0.0);
    assert_eq!(v["fixture"]["hota"], 0.0);
}

#[test]
fn eval_switch_fixture_idf1_half() {
    let d = TempDir::new().unwrap();
    let (gt, res) = switch_files(d.path());
    let o = ok(&["eval", "--gt", s(&gt), "--res", s(&res), "--name", "one"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["one"]["idf1"], 50.0);
    assert_eq!(v["one"]["mota"], 90.0);
    assert!(d.path().join("switch.txt.eval.json").exists());
}

#[test]
fn eval_errors() {
    let d = TempDir::new().unwrap();
    let (gt, res) = switch_files(d.path());
    let late = d.path().join("late.txt");
    fs::write(&late, "11,1,0,0,10,10,1,-1,-1,-1\n").unwrap();
    assert_eq!(bin(&["eval", "--gt", s(&gt), "--res", s(&late)]).status.code(), Some(4));

    let bad = d.path().join("bad.txt");
    fs::write(&bad, "1,1,0,0,10\n").unwrap();
    assert_eq!(bin(&["eval", "--gt", s(&gt), "--res", s(&bad)]).status.code(), Some(2));

    let dup = bin(&["eval", "--gt", s(&gt), "--res", s(&res), "--gt", s(&gt), "--res", s(&res)]);
    assert_eq!(dup.status.code(), Some(3));
}

#[test]
fn synth_fixed_seed_is_reproducible() {
    let d = TempDir::new().unwrap();
    let cfg = d.path().join("scenario.json");
    fs::write(&cfg, r#"{"n_frames": 100, "n_targets": 5, "seed": 11}"#).unwrap();
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    ok(&["synth", "--scenario", s(&cfg), "--out-dir", s(&a)]);
    ok(&["synth", "--scenario", s(&cfg), "--out-dir", s(&b)]);
    for f in ["gt.txt", "det.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(ids(&a.join("gt.txt")).len(), 5);

    let c = d.path().join("c");
    ok(&["synth", "--scenario", s(&cfg), "--seed", "12", "--out-dir", s(&c)]);
    assert_ne!(fs::read(a.join("det.txt")).unwrap(), fs::read(c.join("det.txt")).unwrap());
}

#[test]
fn synth_fixture_flag_matches_library() {
    let d = TempDir::new().unwrap();
    let (gt, det) = fixture(d.path());
    let lib = synth::crossing_fixture::<f64>();
    assert_eq!(fs::read_to_string(gt).unwrap(), mot_io::write_tracks(&lib.gt));
    assert_eq!(fs::read_to_string(det).unwrap(), mot_io::write_detections(&lib.dets));
}

#[test]
fn synth_invalid_config_exit_3() {
    let d = TempDir::new().unwrap();
    let cfg = d.path().join("scenario.json");
    for body in [r#"{"n_targets": 0}"#, r#"{"noise_std": -1.0}"#, r#"{"n_target": 3}"#, "not json"] {
        fs::write(&cfg, body).unwrap();
        let out = bin(&["synth", "--scenario", s(&cfg), "--out-dir", s(d.path())]);
        assert_eq!(out.status.code(), Some(3), "{body}");
    }
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(patchtrack_cli::SWEEP_HEADER));
    lines
        .map(|l| {
            let cells: Vec<String> = l.split(',').map(str::to_string).collect();
            assert_eq!(cells.len(), 8);
            for c in &cells[3..] {
                c.parse::<f64>().unwrap();
            }
            cells
        })
        .collect()
}

#[test]
fn sweep_cost_grid_on_fixture() {
    let d = TempDir::new().unwrap();
    let (gt, det) = fixture(d.path());
    let out = d.path().join("sweep.csv");
    let o = ok(&[
        "sweep", "--gt", s(&gt), "--det", s(&det), "--costs", "height,area", "--patching", "on", "--out", s(&out),
    ]);
    assert_eq!(String::from_utf8(o.stdout).unwrap(), fs::read_to_string(&out).unwrap());
    let rows = csv_rows(&fs::read_to_string(&out).unwrap());
    assert_eq!(rows.len(), 2);
    assert_eq!((rows[0][0].as_str(), rows[1][0].as_str()), ("area", "height"));
    let idf1 = |r: &Vec<String>| r[7].parse::<f64>().unwrap();
    assert!(idf1(&rows[1]) >= idf1(&rows[0]));
}

#[test]
fn sweep_patch_variants() {
    let d = TempDir::new().unwrap();
    let (gt, det) = fixture(d.path());
    let out = d.path().join("sweep.csv");
    ok(&[
        "sweep", "--gt", s(&gt), "--det", s(&det), "--costs", "height", "--patch-ious", "giou,ciou,diou",
        "--patching", "on", "--out", s(&out),
    ]);
    let rows = csv_rows(&fs::read_to_string(&out).unwrap());
    let kinds: Vec<&str> = rows.iter().map(|r| r[1].as_str()).collect();
    assert_eq!(kinds, ["ciou", "diou", "giou"]);
}

#[test]
fn sweep_singleton_equals_track_then_eval() {
    let d = TempDir::new().unwrap();
    let scenario = d.path().join("scenario.json");
    fs::write(&scenario, r#"{"n_frames": 80, "n_targets": 6, "seed": 5, "arena": [640.0, 480.0]}"#).unwrap();
    let dir = d.path().join("seq");
    ok(&["synth", "--scenario", s(&scenario), "--out-dir", s(&dir)]);
    let (gt, det) = (dir.join("gt.txt"), dir.join("det.txt"));

    for (cost, patching, extra) in [("area", "off", ["--patch-min", "2.0"]), ("height", "on", ["--max-age", "30"])] {
        let out = d.path().join("one.csv");
        let mut args = vec![
            "sweep", "--gt", s(&gt), "--det", s(&det), "--costs", cost, "--patch-ious", "diou", "--patching",
            patching, "--out", s(&out),
        ];
        if patching == "on" {
            args.extend(extra);
        }
        ok(&args);
        let rows = csv_rows(&fs::read_to_string(&out).unwrap());
        assert_eq!(rows.len(), 1);

        let res = d.path().join("res.txt");
        let mut args = vec!["track", "--det", s(&det), "--out", s(&res), "--cost", cost, "--patch-iou", "diou"];
        args.extend(extra);
        ok(&args);
        let v = eval_json(&gt, &res, &d.path().join("e.json"));
        for (i, k) in ["hota", "deta", "assa", "mota", "idf1"].iter().enumerate() {
            let cell: f64 = rows[0][3 + i].parse().unwrap();
            assert_eq!(cell, v["seq"][k].as_f64().unwrap(), "{cost} {k}");
        }
    }
}

#[test]
fn replay_reproduces_every_command() {
    let d = TempDir::new().unwrap();
    let scenario = d.path().join("scenario.json");
    fs::write(&scenario, r#"{"n_frames": 60, "n_targets": 4, "seed": 2}"#).unwrap();
    let dir = d.path().join("seq");
    ok(&["synth", "--scenario", s(&scenario), "--out-dir", s(&dir), "--seed", "9"]);
    let (gt, det) = (dir.join("gt.txt"), dir.join("det.txt"));
    let res = d.path().join("res.txt");
    ok(&["track", "--det", s(&det), "--out", s(&res), "--cost", "area", "--seed", "3"]);
    let ev = d.path().join("eval.json");
    ok(&["eval", "--gt", s(&gt), "--res", s(&res), "--out", s(&ev)]);
    let sw = d.path().join("sweep.csv");
    ok(&["sweep", "--gt", s(&gt), "--det", s(&det), "--out", s(&sw)]);

    let cases = [
        (dir.join("manifest.json"), vec![gt.clone(), det.clone()]),
        (d.path().join("res.txt.manifest.json"), vec![res.clone()]),
        (d.path().join("eval.json.manifest.json"), vec![ev.clone()]),
        (d.path().join("sweep.csv.manifest.json"), vec![sw.clone()]),
    ];
    for (manifest, outputs) in cases {
        let before: Vec<Vec<u8>> = outputs.iter().map(|p| fs::read(p).unwrap()).collect();
        let manifest_before = fs::read(&manifest).unwrap();
        for p in &outputs {
            fs::remove_file(p).unwrap();
        }
        ok(&["replay", "--manifest", s(&manifest)]);
        let after: Vec<Vec<u8>> = outputs.iter().map(|p| fs::read(p).unwrap()).collect();
        assert_eq!(before, after, "{}", manifest.display());
        assert_eq!(manifest_before, fs::read(&manifest).unwrap());
    }
}

#[test]
fn replay_rejects_malformed_manifest() {
    let d = TempDir::new().unwrap();
    let m = d.path().join("m.json");
    fs::write(&m, r#"{"command": "track"}"#).unwrap();
    assert_eq!(bin(&["replay", "--manifest", s(&m)]).status.code(), Some(3));
}
