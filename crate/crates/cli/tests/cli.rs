use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_blockhunter"))
}

fn run(out: &Path, args: &[&str]) -> Output {
    bin().env("BLOCKHUNTER_OUT", out).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, json).unwrap();
    p
}

fn only_run_dir(root: &Path) -> PathBuf {
    let dirs: Vec<PathBuf> = std::fs::read_dir(root).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs.into_iter().next().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL_SIM: &str = r#"{"topology": {"factories": 40, "devices": 200, "clusters": 5},
 "federation": {"clusters": 5, "participation": 1.0, "rounds": 3},
 "sim": {"duration_s": 60.0, "tx_rate": 2.0, "miner_count": 8, "injection": {"malicious": 2}}}"#;

#[test]
fn defaults_validate() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), &["validate"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "ok");
}

#[test]
fn bundled_configs_validate() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let tmp = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(root).unwrap() {
        let p = entry.unwrap().path();
        let o = run(tmp.path(), &["validate", "--config", p.to_str().unwrap()]);
        assert!(o.status.success(), "{}: {}", p.display(), stderr(&o));
    }
}

#[test]
fn cluster_mismatch_exits_2_naming_both_sections() {
    let tmp = tempfile::tempdir().unwrap();
    let c = write_config(tmp.path(), "c.json", r#"{"topology": {"clusters": 30}}"#);
    let o = run(tmp.path(), &["validate", "--config", c.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("federation.clusters") && e.contains("topology.clusters"), "{e}");
}

#[test]
fn more_clusters_than_factories_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let c = write_config(
        tmp.path(),
        "c.json",
        r#"{"topology": {"factories": 20, "clusters": 30}, "federation": {"clusters": 30}, "sim": {"miner_count": 4}}"#,
    );
    let o = run(tmp.path(), &["topology", "--config", c.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("TooFewFactories"), "{}", stderr(&o));
}

#[test]
fn missing_csv_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let c = write_config(
        tmp.path(),
        "c.json",
        r#"{"data": {"source": "csv", "path": "absent.csv", "schema": "absent.json"}}"#,
    );
    let o = run(tmp.path(), &["hunt", "--config", c.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("FileNotFound"), "{}", stderr(&o));
}

#[test]
fn unknown_key_and_bad_sweep_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let c = write_config(tmp.path(), "c.json", r#"{"topologee": {}}"#);
    assert_eq!(run(tmp.path(), &["validate", "--config", c.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(tmp.path(), &["simulate", "--sweep", "colour=1,2"]).status.code(), Some(2));
    assert_eq!(run(tmp.path(), &["hunt", "--detector", "svm"]).status.code(), Some(2));
}

#[test]
fn malformed_rows_are_a_runtime_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let mut text = String::from("a,b,label\n");
    for i in 0..50 {
        text.push_str(&format!("{i},x{i},0\n"));
    }
    std::fs::write(tmp.path().join("d.csv"), text).unwrap();
    std::fs::write(
        tmp.path().join("s.json"),
        r#"{"feature_columns": ["a", "b"], "label_column": "label", "anomalous_value": "1", "normal_value": "0"}"#,
    )
    .unwrap();
    let c = write_config(
        tmp.path(),
        "c.json",
        r#"{"topology": {"clusters": 2}, "federation": {"clusters": 2},
            "data": {"source": "csv", "path": "d.csv", "schema": "s.json"}}"#,
    );
    let o = run(&tmp.path().join("runs"), &["hunt", "--config", c.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("TooManyMalformedRows") || stderr(&o).contains("malformed"), "{}", stderr(&o));
}

#[test]
fn topology_writes_clusters() {
    let tmp = tempfile::tempdir().unwrap();
    let c = write_config(tmp.path(), "c.json", SMALL_SIM);
    let out = tmp.path().join("runs");
    let o = run(&out, &["topology", "--config", c.to_str().unwrap(), "--deterministic"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let dir = only_run_dir(&out);
    assert!(dir.file_name().unwrap().to_str().unwrap().starts_with("topology-"));
    let clusters = std::fs::read_to_string(dir.join("clusters.csv")).unwrap();
    assert_eq!(clusters.lines().next(), Some("cluster,head,factories,devices"));
    assert_eq!(clusters.lines().count(), 6);
    assert!(dir.join("topology.json").is_file());
    assert!(dir.join("config.json").is_file());
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push((p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn deterministic_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let c = write_config(tmp.path(), "c.json", SMALL_SIM);
    let c = c.to_str().unwrap();
    let mut snaps = Vec::new();
    for pass in 0..2 {
        let out = tmp.path().join(format!("pass{pass}"));
        for args in [
            vec!["simulate", "--config", c, "--deterministic"],
            vec!["hunt", "--config", c, "--deterministic", "--detector", "pca,kmeans"],
        ] {
            let o = run(&out, &args);
            assert!(o.status.success(), "{}", stderr(&o));
        }
        snaps.push(snapshot(&out));
    }
    assert!(!snaps[0].is_empty());
    assert_eq!(snaps[0], snaps[1]);
}

#[test]
fn hunt_outputs_use_documented_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let c = write_config(tmp.path(), "c.json", SMALL_SIM);
    let out = tmp.path().join("runs");
    let o = run(&out, &["hunt", "--config", c.to_str().unwrap(), "--detector", "ned", "--seed", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let dir = only_run_dir(&out);
    let first = |f: &str| std::fs::read_to_string(dir.join(f)).unwrap().lines().next().unwrap_or("").to_string();
    assert_eq!(
        first("comparison.csv"),
        "model,tp,tn,fp,fn,accuracy,precision,recall,f1,auc,alerts,true_alerts,false_alerts,anomalies"
    );
    assert_eq!(first("alerts_ned.csv"), "id,score,anomalous");
    assert_eq!(first("roc_ned.csv"), "fpr,tpr,threshold");
    assert_eq!(first("injected.csv"), "id,cluster,flavor");
    assert!(dir.join("metrics_ned.json").is_file());
    assert!(first("rounds_ned.csv").starts_with("round"));
}

#[test]
fn simulate_sweep_writes_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let c = write_config(
        tmp.path(),
        "c.json",
        r#"{"topology": {"factories": 40, "devices": 200, "clusters": 5},
            "federation": {"clusters": 5}, "sim": {"duration_s": 60.0, "miner_count": 8}, "sweep_seeds": 2}"#,
    );
    let out = tmp.path().join("runs");
    let o = run(
        &out,
        &["simulate", "--config", c.to_str().unwrap(), "--sweep", "block_size=0.5,1", "--sweep", "mode=cluster,non_cluster"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let dir = only_run_dir(&out);
    let rows = std::fs::read_to_string(dir.join("sweep.csv")).unwrap();
    assert!(rows.starts_with("cell,block_size_mb,mode,seed,"), "{rows}");
    assert_eq!(rows.lines().count(), 1 + 4 * 2);
    let summary = std::fs::read_to_string(dir.join("sweep_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 4);
}
