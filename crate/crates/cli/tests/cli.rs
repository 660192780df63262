use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lidarnas::arch::{deserialize, serialize, validate, ArchGenome, Branch, Kernel, LayerSpec, Profile, PRESET_NAMES};
use lidarnas::pcrep::Kind;
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lidarnas"));
    c.env_remove("LIDARNAS_CALIBRATION");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn lidarnas")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn ok(o: Output) -> Output {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn search_valid(path: &Path) -> ArchGenome {
    let (g, report) = deserialize(&fs::read_to_string(path).unwrap()).unwrap();
    assert!(report.ok(), "{}: {:?}", path.display(), report.violations);
    assert!(validate(&g, Profile::SearchSpace).ok(), "{}", path.display());
    g
}

fn json_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

/// History lines with the wall-time field removed.
fn history_without_wall(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| {
            let mut v: Value = serde_json::from_str(l).unwrap();
            v.as_object_mut().unwrap().remove("wall_ms").expect("wall_ms present");
            v
        })
        .collect()
}

#[test]
fn presets_validate_and_broken_documents_are_rejected() {
    let dir = TempDir::new().unwrap();
    for name in PRESET_NAMES {
        let f = dir.path().join(format!("{name}.json"));
        ok(run(&["preset", name, "--out", p(&f)]));
        let o = ok(run(&["validate", p(&f)]));
        assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "ok");
        ok(run(&["validate", p(&f), "--profile", "search"]));
    }

    let pillar = Branch::new("s1.pillar", Kind::PillarDense, LayerSpec::unet2d_dense(16.0, 2)).with_resolution(0.32);
    let voxel = Branch::new("s2.voxel", Kind::Voxel, LayerSpec::unet3d_sparse(32.0, 1, 1, Kernel::K333))
        .with_inputs(&["s1.pillar"])
        .with_resolution(0.2);
    let broken = ArchGenome { stages: vec![vec![pillar], vec![voxel]], foreground_seg: false, head_attach: "s2.voxel".into() };
    let f = dir.path().join("broken.json");
    fs::write(&f, serialize(&broken)).unwrap();
    let o = run(&["validate", p(&f)]);
    assert_eq!(code(&o), 1);
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.lines().any(|l| l == "NoPillarToVoxel branch=s2.voxel"), "{out}");

    let empty = dir.path().join("empty.json");
    fs::write(&empty, "").unwrap();
    assert_eq!(code(&run(&["validate", p(&empty)])), 2);
    let garbage = dir.path().join("garbage.json");
    fs::write(&garbage, "{\"stages\": 3").unwrap();
    assert_eq!(code(&run(&["validate", p(&garbage)])), 2);
    assert_eq!(code(&run(&["validate", p(&dir.path().join("missing.json"))])), 2);
}

#[test]
fn synth_scene_is_deterministic_and_writes_sidecar() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.lnpc");
    let b = dir.path().join("b.lnpc");
    for f in [&a, &b] {
        ok(run(&["synth-scene", "--boxes", "6", "--height", "16", "--width", "256", "--seed", "11", "--out", p(f)]));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(&fs::read(&a).unwrap()[..4], b"LNPC");
    let side = fs::read_to_string(dir.path().join("a.boxes.csv")).unwrap();
    assert_eq!(side.lines().count(), 7);

    let z = dir.path().join("z.lnpc");
    ok(run(&["synth-scene", "--boxes", "0", "--out", p(&z)]));
    let side = fs::read_to_string(dir.path().join("z.boxes.csv")).unwrap();
    assert_eq!(side.lines().count(), 1, "header only: {side}");

    let bad = run(&["synth-scene", "--height", "0", "--out", p(&dir.path().join("bad.lnpc"))]);
    assert_eq!(code(&bad), 2);
    let bad = run(&["synth-scene", "--range-min", "10", "--range-max", "5", "--out", p(&dir.path().join("bad.lnpc"))]);
    assert_eq!(code(&bad), 2);
}

#[test]
fn random_documents_all_validate() {
    let dir = TempDir::new().unwrap();
    ok(run(&["random", "--seed", "7", "--n", "100", "--out-dir", p(dir.path())]));
    let files = json_files(dir.path());
    assert_eq!(files.len(), 100);
    for f in &files {
        search_valid(f);
    }
    let again = TempDir::new().unwrap();
    ok(run(&["random", "--seed", "7", "--n", "100", "--out-dir", p(again.path())]));
    for (a, b) in files.iter().zip(json_files(again.path())) {
        assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
    }
}

#[test]
fn mutations_of_rsn_car_all_validate() {
    let dir = TempDir::new().unwrap();
    let parent = dir.path().join("rsn_car.json");
    ok(run(&["preset", "rsn_car", "--out", p(&parent)]));
    let out = dir.path().join("children");
    ok(run(&["mutate", p(&parent), "--seed", "3", "--n", "1000", "--out-dir", p(&out)]));
    let files = json_files(&out);
    assert_eq!(files.len(), 1000);
    let parent_g = search_valid(&parent);
    for f in &files {
        assert_ne!(search_valid(f), parent_g);
    }
}

#[test]
fn mutate_rejects_invalid_genome() {
    let dir = TempDir::new().unwrap();
    let f = dir.path().join("g.json");
    let a = Branch::new("a", Kind::Point, LayerSpec::default_for(Kind::Point, 16.0));
    let b = Branch::new("b", Kind::Point, LayerSpec::default_for(Kind::Point, 16.0)).with_inputs(&["a"]);
    let two_stage = ArchGenome { stages: vec![vec![a], vec![b]], foreground_seg: false, head_attach: "b".into() };
    fs::write(&f, serialize(&two_stage)).unwrap();
    let o = run(&["mutate", p(&f), "--n", "1", "--out-dir", p(&dir.path().join("c"))]);
    assert_eq!(code(&o), 1);
}

fn csv_column_sum(csv: &str, column: &str) -> u64 {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == column).unwrap();
    lines
        .map(|l| {
            // Shapes are quoted and contain commas; numeric columns follow the last quote.
            let tail = l.rsplit('"').next().unwrap();
            let fields: Vec<&str> = tail.trim_start_matches(',').split(',').collect();
            fields[idx - (header.len() - fields.len())].parse::<u64>().unwrap()
        })
        .sum()
}

fn summary_value(stdout: &str, key: &str) -> u64 {
    let words: Vec<&str> = stdout.split_whitespace().collect();
    let at = words.windows(3).position(|w| w[0..2].join(" ") == key || w[0] == key).unwrap();
    let off = if key.contains(' ') { key.split(' ').count() } else { 1 };
    words[at + off].parse().unwrap()
}

#[test]
fn cost_totals_are_additive_per_branch() {
    let dir = TempDir::new().unwrap();
    let scene = dir.path().join("s.lnpc");
    ok(run(&["synth-scene", "--height", "16", "--width", "256", "--seed", "2", "--out", p(&scene)]));
    for name in ["mvf_like", "rsn_car"] {
        let g = dir.path().join(format!("{name}.json"));
        ok(run(&["preset", name, "--out", p(&g)]));
        let csv_path = dir.path().join(format!("{name}.csv"));
        let o = ok(run(&["cost", p(&g), "--scene", p(&scene), "--out", p(&csv_path)]));
        let stdout = String::from_utf8_lossy(&o.stdout).to_string();
        let csv = fs::read_to_string(&csv_path).unwrap();
        let branches = csv.lines().count() - 1;
        let expected = search_valid(&g).branches().count();
        assert_eq!(branches, expected, "{name}");
        assert_eq!(csv_column_sum(&csv, "flops"), summary_value(&stdout, "flops"), "{name}");
        assert_eq!(csv_column_sum(&csv, "params"), summary_value(&stdout, "params"), "{name}");
    }
}

#[test]
fn calibration_env_overrides_flag() {
    let dir = TempDir::new().unwrap();
    let scene = dir.path().join("s.lnpc");
    ok(run(&["synth-scene", "--height", "8", "--width", "128", "--out", p(&scene)]));
    let g = dir.path().join("g.json");
    ok(run(&["preset", "pointpillars_like", "--out", p(&g)]));
    let zero = dir.path().join("zero.cal");
    fs::write(&zero, "flop_ms = 0\nbyte_ms = 0\n").unwrap();
    let big = dir.path().join("big.cal");
    fs::write(&big, "flop_ms = 1e-6\n").unwrap();
    let latency = |o: Output| -> f64 {
        let s = String::from_utf8_lossy(&ok(o).stdout).to_string();
        let w: Vec<&str> = s.split_whitespace().collect();
        w[w.iter().position(|x| *x == "latency").unwrap() + 1].parse().unwrap()
    };
    let csv = dir.path().join("c.csv");
    let args = ["cost", p(&g), "--scene", p(&scene), "--out", p(&csv), "--calibration", p(&big)];
    assert!(latency(run(&args)) > 0.0);
    let o = bin().args(args).env("LIDARNAS_CALIBRATION", &zero).output().unwrap();
    assert_eq!(latency(o), 0.0);
    let bad = dir.path().join("bad.cal");
    fs::write(&bad, "flop_ms = fast\n").unwrap();
    assert_eq!(code(&bin().args(args).env("LIDARNAS_CALIBRATION", &bad).output().unwrap()), 2);
}

fn write_subspace_config(dir: &Path, budget: usize) -> PathBuf {
    let cfg = dir.join("search.toml");
    fs::write(
        &cfg,
        format!(
            "subspace = true\nbudget = {budget}\nseed = 5\npopulation = 10\ntournament = 3\n\
             [scene]\nregion_half = 20.48\n[scene.synth]\nboxes = 8\nheight = 16\nwidth = 256\nplacement_radius = 17\n"
        ),
    )
    .unwrap();
    cfg
}

#[test]
fn subspace_search_is_reproducible_and_emits_reports() {
    let dir = TempDir::new().unwrap();
    let cfg = write_subspace_config(dir.path(), 30);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        ok(run(&["search", p(&cfg), "--out-dir", p(out), "--parallel", "1"]));
    }
    let ha = history_without_wall(&a.join("history.jsonl"));
    assert_eq!(ha.len(), 30);
    assert_eq!(ha, history_without_wall(&b.join("history.jsonl")));
    search_valid(&a.join("best.json"));
    assert_eq!(fs::read(a.join("fitness.csv")).unwrap(), fs::read(b.join("fitness.csv")).unwrap());
    let svg = fs::read_to_string(a.join("best_so_far.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<polyline"));

    // Best-so-far column is the running maximum of the fitness column.
    let csv = fs::read_to_string(a.join("fitness.csv")).unwrap();
    let mut best = f64::NEG_INFINITY;
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        best = best.max(f[1].parse::<f64>().unwrap());
        assert_eq!(f[2].parse::<f64>().unwrap(), best);
    }

    let o = ok(run(&["analyze", p(&a.join("history.jsonl"))]));
    let report = String::from_utf8_lossy(&o.stdout);
    assert!(report.contains("presence regression") && report.contains("mutation quality std"), "{report}");
}

#[test]
fn resumed_search_matches_uninterrupted_run() {
    let dir = TempDir::new().unwrap();
    let cfg = write_subspace_config(dir.path(), 24);
    let full = dir.path().join("full");
    ok(run(&["search", p(&cfg), "--out-dir", p(&full)]));
    let part = dir.path().join("part");
    ok(run(&["search", p(&cfg), "--out-dir", p(&part), "--budget", "10"]));
    // A torn final line from an interrupted write is discarded on resume.
    let log = part.join("history.jsonl");
    let mut text = fs::read_to_string(&log).unwrap();
    text.push_str("{\"index\":10,\"ha");
    fs::write(&log, text).unwrap();
    ok(run(&["search", p(&cfg), "--out-dir", p(&part), "--resume"]));
    assert_eq!(history_without_wall(&full.join("history.jsonl")), history_without_wall(&log));
}

const FAKE_EVALUATOR: &str = r#"
import json, sys, time
mode = sys.argv[1]
marker = sys.argv[2]
for line in sys.stdin:
    req = json.loads(line)
    i = req["id"]
    assert "genome" in req and "stages" in req["genome"]
    if mode == "crash" and i == 3:
        sys.exit(7)
    if mode == "mismatch" and i == 2:
        print(json.dumps({"id": i + 1000, "quality": 0.5, "latency_ms": 1.0}), flush=True)
        continue
    if mode == "timeout" and i == 2:
        time.sleep(30)
    if mode == "error" and i == 1:
        print(json.dumps({"id": i, "error": "diverged"}), flush=True)
        continue
    if mode == "malformed" and i == 1:
        print("not json", flush=True)
        continue
    with open(marker, "a") as m:
        m.write("%d\n" % i)
    print(json.dumps({"id": i, "quality": 0.5, "latency_ms": 1.0}), flush=True)
"#;

fn external_run(mode: &str, timeout_s: f64) -> (Vec<Value>, TempDir) {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("fake.py"), FAKE_EVALUATOR).unwrap();
    let cfg = dir.path().join("ext.toml");
    fs::write(
        &cfg,
        format!(
            "budget = 8\nseed = 2\npopulation = 4\ntournament = 2\nwarm_start = \"rsn_car\"\n\
             [evaluator]\nkind = \"external\"\ncommand = [\"python3\", \"fake.py\", \"{mode}\", \"seen.txt\"]\ntimeout_s = {timeout_s}\n"
        ),
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = bin().current_dir(dir.path()).args(["search", p(&cfg), "--out-dir", p(&out)]).output().unwrap();
    assert!(o.status.success(), "{mode}: {}", String::from_utf8_lossy(&o.stderr));
    let h: Vec<Value> = fs::read_to_string(out.join("history.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(h.len(), 8);
    (h, dir)
}

fn failed(h: &[Value]) -> Vec<usize> {
    h.iter().filter(|r| r["fitness"].is_null()).map(|r| r["index"].as_u64().unwrap() as usize).collect()
}

#[test]
fn external_evaluator_constant_quality_gives_equal_fitness() {
    let (h, _d) = external_run("echo", 60.0);
    let f: Vec<f64> = h.iter().map(|r| r["fitness"].as_f64().unwrap()).collect();
    assert!(f.iter().all(|x| *x == 100.0 * 0.5 - 0.5 * 1.0), "{f:?}");
}

#[test]
fn external_evaluator_crash_isolated_to_one_record() {
    let (h, _d) = external_run("crash", 60.0);
    assert_eq!(failed(&h), vec![3]);
    assert!(h[3]["error"].as_str().unwrap().contains("exited"));
    assert!(h[4..].iter().all(|r| r["quality"].as_f64() == Some(0.5)));
}

#[test]
fn external_evaluator_protocol_faults_become_failure_records() {
    let (h, _d) = external_run("mismatch", 60.0);
    assert_eq!(failed(&h), vec![2]);
    let (h, _d) = external_run("error", 60.0);
    assert_eq!(failed(&h), vec![1]);
    assert!(h[1]["error"].as_str().unwrap().contains("diverged"));
    let (h, _d) = external_run("malformed", 60.0);
    assert_eq!(failed(&h), vec![1]);
}

#[test]
fn external_evaluator_timeout_is_a_failure_and_run_continues() {
    let (h, _d) = external_run("timeout", 1.0);
    assert_eq!(failed(&h), vec![2]);
    assert!(h[3..].iter().all(|r| r["quality"].as_f64() == Some(0.5)));
}

#[test]
fn external_evaluator_launch_failure_exits_3() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("ext.toml");
    fs::write(&cfg, "budget = 4\npopulation = 2\ntournament = 1\n[evaluator]\nkind = \"external\"\ncommand = [\"/nonexistent/evaluator\"]\n").unwrap();
    let o = run(&["search", p(&cfg), "--out-dir", p(&dir.path().join("out"))]);
    assert_eq!(code(&o), 3);
}

#[test]
fn search_rejects_bad_config() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "budget = \"many\"\n").unwrap();
    assert_eq!(code(&run(&["search", p(&cfg), "--out-dir", p(&dir.path().join("o"))])), 2);
    fs::write(&cfg, "subspace = true\nwarm_start = \"rsn_car\"\n").unwrap();
    assert_eq!(code(&run(&["search", p(&cfg), "--out-dir", p(&dir.path().join("o"))])), 2);
    fs::write(&cfg, "population = 3\ntournament = 5\n").unwrap();
    assert_eq!(code(&run(&["search", p(&cfg), "--out-dir", p(&dir.path().join("o"))])), 2);
}

const REORDERING_EVALUATOR: &str = r#"
import json, os, select, sys
reverse = sys.argv[1] == "reverse"
buf = b""
held = []
def reply(req):
    text = json.dumps(req["genome"], sort_keys=True)
    q = (sum(text.encode()) % 97) / 97.0
    print(json.dumps({"id": req["id"], "quality": q, "latency_ms": 2.0}), flush=True)
def flush():
    global held
    for r in (reversed(held) if reverse else held):
        reply(r)
    held = []
while True:
    ready, _, _ = select.select([0], [], [], 0.2)
    if not ready:
        flush()
        continue
    chunk = os.read(0, 65536)
    if not chunk:
        break
    buf += chunk
    while b"\n" in buf:
        line, buf = buf.split(b"\n", 1)
        held.append(json.loads(line))
    if len(held) >= 2:
        flush()
"#;

#[test]
fn external_replies_may_arrive_out_of_order() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("reorder.py"), REORDERING_EVALUATOR).unwrap();
    let logs: Vec<Vec<Value>> = ["forward", "reverse"]
        .iter()
        .map(|mode| {
            let cfg = dir.path().join(format!("{mode}.toml"));
            fs::write(
                &cfg,
                format!(
                    "budget = 12\nseed = 4\npopulation = 4\ntournament = 2\nparallel = 2\n\
                     [evaluator]\nkind = \"external\"\ncommand = [\"python3\", \"reorder.py\", \"{mode}\"]\n"
                ),
            )
            .unwrap();
            let out = dir.path().join(mode);
            ok(run(&["search", p(&cfg), "--out-dir", p(&out)]));
            history_without_wall(&out.join("history.jsonl"))
        })
        .collect();
    assert_eq!(logs[0].len(), 12);
    assert!(logs[0].iter().all(|r| r["quality"].is_number()));
    assert_eq!(logs[0], logs[1]);
}
