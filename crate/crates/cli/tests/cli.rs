use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn placefm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_placefm"))
        .args(args)
        .output()
        .expect("run placefm")
}

fn ok(args: &[&str]) -> Output {
    let out = placefm(args);
    assert!(
        out.status.success(),
        "placefm {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &TempDir, name: &str, n: usize, states: usize, cities: usize) -> PathBuf {
    let p = dir.path().join(name);
    ok(&[
        "synth",
        "--n",
        &n.to_string(),
        "--states",
        &states.to_string(),
        "--cities-per-state",
        &cities.to_string(),
        "--out",
        path_str(&p),
    ]);
    p
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn jsonl(p: &Path) -> Vec<Value> {
    fs::read_to_string(p)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

const VENUES_CSV: &str = "\
id,name,lon,lat,category,state,city,zip
f1,Starbucks Coffee,0,0,Dining and Drinking > Coffee Shop,CA,A,1
f2,Joe's Pizza,1,0,Dining and Drinking > Pizzeria,CA,A,1
f3,Hair Studio,2,0,Professional Services > Hair Salon,CA,A,1
";

const OSM_CSV: &str = "\
id,name,lon,lat,category
o1,Starbucks Coffee,0.0005,0,Coffee
o2,Pizzeria Uno,1.0001,0,Pizza
o3,Hair Studio,2.0015,0,Salon
";

#[test]
fn fuse_fixture_matches_one_of_three() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("p.csv");
    let s = dir.path().join("s.csv");
    fs::write(&p, VENUES_CSV).unwrap();
    fs::write(&s, OSM_CSV).unwrap();
    let out = dir.path().join("fused.csv");
    ok(&[
        "fuse",
        "--primary",
        path_str(&p),
        "--secondary",
        path_str(&s),
        "--out",
        path_str(&out),
    ]);

    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2, "{text}");
    assert!(
        lines[0].ends_with("osm_id,osm_name,match_distance_m,name_similarity"),
        "{}",
        lines[0]
    );
    assert!(lines[1].starts_with("f1,") && lines[1].contains(",o1,"));
    let report = json(&dir.path().join("fused.report.json"));
    assert_eq!(report["matched"], 1);
    assert!((report["match_rate"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn fuse_with_empty_secondary_writes_no_rows() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("p.csv");
    let s = dir.path().join("s.jsonl");
    fs::write(&p, VENUES_CSV).unwrap();
    fs::write(&s, "").unwrap();
    let out = dir.path().join("fused.jsonl");
    ok(&[
        "fuse",
        "--primary",
        path_str(&p),
        "--secondary",
        path_str(&s),
        "--out",
        path_str(&out),
    ]);
    assert_eq!(fs::read_to_string(&out).unwrap(), "");
}

#[test]
fn bad_csv_fails_naming_the_line() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("p.csv");
    fs::write(&p, VENUES_CSV.replace("1,0,Dining", "1,north,Dining")).unwrap();
    let out = placefm(&["embed", "--input", path_str(&p), "--out-dir", path_str(dir.path())]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("lat"), "{err}");
}

#[test]
fn embed_three_hundred_nodes_at_ten_percent() {
    let dir = TempDir::new().unwrap();
    let input = synth(&dir, "s.csv", 300, 3, 2);
    let out_dir = dir.path().join("out");
    ok(&[
        "embed",
        "--input",
        path_str(&input),
        "--r",
        "0.1",
        "--out-dir",
        path_str(&out_dir),
    ]);
    let places = jsonl(&out_dir.join("places_state.jsonl"));
    assert!((28..=32).contains(&places.len()), "{}", places.len());
    let classes: BTreeSet<&str> = places.iter().map(|p| p["class"].as_str().unwrap()).collect();
    assert_eq!(classes.len(), 3);
    let members: u64 = places.iter().map(|p| p["member_count"].as_u64().unwrap()).sum();
    assert_eq!(members, 300);
    let csv = fs::read_to_string(out_dir.join("places_state.csv")).unwrap();
    assert_eq!(csv.lines().count(), places.len() + 1);
    assert!(csv.starts_with("place_id,granularity,class,member_count,f0,"));
}

#[test]
fn embed_identity_ratio_keeps_every_node() {
    let dir = TempDir::new().unwrap();
    let input = synth(&dir, "s.jsonl", 120, 2, 2);
    let out_dir = dir.path().join("out");
    ok(&[
        "embed",
        "--input",
        path_str(&input),
        "--r",
        "1",
        "--granularity",
        "city",
        "--out-dir",
        path_str(&out_dir),
    ]);
    let m = json(&out_dir.join("manifest_city.json"));
    assert_eq!(m["places_emitted"], 120);
    assert_eq!(m["total_wcss"].as_f64().unwrap(), 0.0);
}

#[test]
fn embed_missing_granularity_fails() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("p.csv");
    fs::write(&p, "id,name,lon,lat,category,state\na,A,0,0,X,CA\nb,B,0.01,0,X,CA\n").unwrap();
    let out = placefm(&["embed", "--input", path_str(&p), "--granularity", "city"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("city"), "{err}");
}

#[test]
fn resolved_config_reproduces_outputs() {
    let dir = TempDir::new().unwrap();
    let input = synth(&dir, "s.csv", 400, 2, 2);
    let first = dir.path().join("first");
    ok(&[
        "embed",
        "--input",
        path_str(&input),
        "--algorithm",
        "kmedoids",
        "--seed",
        "9",
        "--alphas",
        "0.5,0.3,0.2",
        "--r",
        "0.05",
        "--out-dir",
        path_str(&first),
    ]);
    let second = dir.path().join("second");
    ok(&[
        "embed",
        "--config",
        path_str(&first.join("resolved_config_state.json")),
        "--out-dir",
        path_str(&second),
    ]);
    for f in ["places_state.jsonl", "places_state.csv", "manifest_state.json"] {
        assert_eq!(
            fs::read(first.join(f)).unwrap(),
            fs::read(second.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = TempDir::new().unwrap();
    let input = synth(&dir, "s.csv", 200, 2, 2);
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        format!(r#"{{"input": {:?}, "granularity": "zip", "r": 1.0}}"#, path_str(&input)),
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    ok(&[
        "embed",
        "--config",
        path_str(&cfg),
        "--r",
        "0.5",
        "--out-dir",
        path_str(&out_dir),
    ]);
    let resolved = json(&out_dir.join("resolved_config_zip.json"));
    assert_eq!(resolved["r"], 0.5);
    assert_eq!(resolved["granularity"], "zip");

    fs::write(&cfg, r#"{"knn": 3}"#).unwrap();
    assert!(!placefm(&["embed", "--config", path_str(&cfg)]).status.success());
}

#[test]
fn sweep_grid_writes_csv_and_table() {
    let dir = TempDir::new().unwrap();
    let input = synth(&dir, "s.csv", 500, 3, 2);
    let out_dir = dir.path().join("sweep");
    let out = ok(&[
        "sweep",
        "--input",
        path_str(&input),
        "--knn-ks",
        "2,5,10",
        "--granularities",
        "state",
        "--algorithms",
        "kmeans,kmedoids",
        "--num-seeds",
        "3",
        "--out-dir",
        path_str(&out_dir),
    ]);
    let csv = fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",3")), "{csv}");
    let table = fs::read_to_string(out_dir.join("sweep_table.txt")).unwrap();
    assert!(table.lines().any(|l| l.starts_with("Average")));
    assert!(String::from_utf8_lossy(&out.stdout).contains("Average"));
}

#[test]
fn sweep_single_cell() {
    let dir = TempDir::new().unwrap();
    let input = synth(&dir, "s.csv", 200, 2, 2);
    let out_dir = dir.path().join("sweep");
    ok(&[
        "sweep",
        "--input",
        path_str(&input),
        "--knn-ks",
        "5",
        "--granularities",
        "city",
        "--algorithms",
        "kmeans",
        "--seeds",
        "4",
        "--out-dir",
        path_str(&out_dir),
    ]);
    let csv = fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[1].starts_with("5,city,kmeans,"));
}

#[test]
fn sweep_cell_with_bad_ratio_is_marked_failed() {
    let dir = TempDir::new().unwrap();
    let input = synth(&dir, "s.csv", 300, 3, 2);
    let out_dir = dir.path().join("sweep");
    let cfg = dir.path().join("sweep.json");
    fs::write(
        &cfg,
        format!(
            r#"{{"input": {:?}, "knn_ks": [2, 5], "granularities": ["state"], "algorithms": ["kmeans"],
                "seeds": [0, 1], "overrides": [{{"knn_k": 5, "r": 1.5}}], "output_dir": {:?}}}"#,
            path_str(&input),
            path_str(&out_dir)
        ),
    )
    .unwrap();
    ok(&["sweep", "--config", path_str(&cfg)]);
    let csv = fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("2,state,kmeans,") && rows[1].ends_with(",2"));
    assert_eq!(rows[2], "5,state,kmeans,,,0");
    let table = fs::read_to_string(out_dir.join("sweep_table.txt")).unwrap();
    assert!(table.to_lowercase().contains("fail"), "{table}");
}

#[test]
fn synth_bookkeeping_and_determinism() {
    let dir = TempDir::new().unwrap();
    let a = synth(&dir, "a.csv", 300, 3, 2);
    let b = synth(&dir, "b.csv", 300, 3, 2);
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 300);
    let states: BTreeSet<&str> = rows.iter().map(|r| r[5]).collect();
    let cities: BTreeSet<&str> = rows.iter().map(|r| r[6]).collect();
    assert_eq!((states.len(), cities.len()), (3, 6));

    let one = synth(&dir, "one.jsonl", 1, 3, 2);
    let recs = jsonl(&one);
    assert_eq!(recs.len(), 1);
    assert!(recs[0]["lon"].is_number() && recs[0]["id"].is_string());
}

#[test]
fn graph_dump_is_sorted_and_undirected() {
    let dir = TempDir::new().unwrap();
    let input = synth(&dir, "s.csv", 150, 2, 2);
    let out = dir.path().join("edges.tsv");
    ok(&[
        "graph-dump",
        "--input",
        path_str(&input),
        "--k",
        "3",
        "--out",
        path_str(&out),
    ]);
    let text = fs::read_to_string(&out).unwrap();
    let edges: Vec<(&str, &str)> = text.lines().map(|l| l.split_once('\t').unwrap()).collect();
    assert!(edges.len() >= 150 * 3 / 2);
    assert!(edges.iter().all(|(a, b)| a < b));
    assert!(edges.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn thread_count_from_environment() {
    let dir = TempDir::new().unwrap();
    let input = synth(&dir, "s.csv", 200, 2, 2);
    let run = |threads: &str, out: &str| {
        let status = Command::new(env!("CARGO_BIN_EXE_placefm"))
            .env("PLACEFM_THREADS", threads)
            .args(["embed", "--input", path_str(&input), "--r", "0.05"])
            .args(["--out-dir", path_str(&dir.path().join(out))])
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        fs::read(dir.path().join(out).join("places_state.jsonl")).unwrap()
    };
    assert_eq!(run("1", "a"), run("3", "b"));
    assert!(!placefm(&["--threads", "0", "synth", "--n", "1", "--out", "/dev/null"])
        .status
        .success());
}
