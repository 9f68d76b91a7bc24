use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use fragsim::harness::{
    aggregate, aggregate_files, parse_run_file, run_experiment, write_run_file, HarnessError, Scenario,
};
use fragsim::node_stack::Strategy;
use fragsim::sim_core::LinkModel;
use fragsim::topology::{save_topology, Topology};

/// Sink 0, relay 1, sources 2 and 3 behind it.
fn small_topology() -> Topology {
    let pos = [[0.0, 0.0, 0.0], [3.0, 0.0, 0.0], [6.0, 0.0, 0.0], [6.0, 2.5, 0.0]];
    let positions = (0..4u16).map(|i| (i, pos[i as usize])).collect();
    let pairs = [(0, 1, 0.99), (1, 2, 0.985), (1, 3, 0.98), (2, 3, 1.0)];
    let mut links = Vec::new();
    for (a, b, pdr) in pairs {
        links.push(LinkModel { src: a, dst: b, pdr, in_range: true });
        links.push(LinkModel { src: b, dst: a, pdr, in_range: true });
    }
    Topology {
        sink: 0,
        positions,
        links,
        routes: BTreeMap::from([(1, 0), (2, 1), (3, 1)]),
        hop_distance: BTreeMap::from([(0, 0), (1, 1), (2, 2), (3, 2)]),
    }
}

fn scenario(dir: &Path) -> Scenario {
    save_topology(&small_topology(), &dir.join("topo.txt")).unwrap();
    let text = r#"
        version = 1
        name = "small"
        topology = "topo.txt"
        strategies = ["hwr", "ff"]
        payloads = [80, 368]
        interval_s = [0.2, 0.6]
        packets_per_source = 30
        runs = 3
        seeds = [4, 5, 6]
    "#;
    std::fs::write(dir.join("s.toml"), text).unwrap();
    Scenario::from_file(&dir.join("s.toml")).unwrap()
}

/// Mean PDR straight from the CSV text, without the csv crate or the
/// harness parser.
fn oracle_mean_pdr(files: &[PathBuf], strategy: &str, payload: usize) -> f64 {
    let mut pdrs = Vec::new();
    for f in files {
        let text = std::fs::read_to_string(f).unwrap();
        let meta = |k: &str| {
            text.lines().find_map(|l| l.strip_prefix(&format!("# {k} "))).unwrap().to_string()
        };
        if meta("strategy") != strategy || meta("payload") != payload.to_string() {
            continue;
        }
        let mut lines = text.lines().filter(|l| !l.starts_with('#'));
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
        let (rec, delivered) = (col("record"), col("delivered_us"));
        let (mut sent, mut ok) = (0, 0);
        for l in lines {
            let cells: Vec<&str> = l.split(',').collect();
            if cells[rec] == "datagram" {
                sent += 1;
                ok += usize::from(!cells[delivered].is_empty());
            }
        }
        pdrs.push(ok as f64 / sent as f64);
    }
    assert_eq!(pdrs.len(), 3);
    pdrs.iter().sum::<f64>() / 3.0
}

#[test]
fn experiment_writes_runs_and_a_matching_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(dir.path());
    let out = run_experiment(&s, &dir.path().join("out")).unwrap();
    assert_eq!(out.run_files.len(), 2 * 2 * 3);
    assert!(out.run_files.iter().all(|p| p.exists()));
    let agg = out.aggregate;
    let on_disk = std::fs::read_to_string(&out.aggregate_file).unwrap();
    assert_eq!(fragsim::harness::Aggregate::from_json(&on_disk).unwrap(), agg);
    for st in ["hwr", "ff"] {
        for payload in [80, 368] {
            let series = agg.series(st.parse().unwrap(), payload).unwrap();
            let oracle = oracle_mean_pdr(&out.run_files, st, payload);
            assert!((series.pdr.mean - oracle).abs() < 1e-12, "{st} {payload}: {} vs {oracle}", series.pdr.mean);
            assert_eq!(series.violations, 0);
            assert_eq!(series.seeds, vec![4, 5, 6]);
        }
    }
    assert_eq!(aggregate_files(&out.run_files).unwrap(), agg);
}

#[test]
fn rerunning_a_scenario_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = scenario(dir.path());
    s.strategies = vec![Strategy::FfQueued];
    s.payloads = vec![272];
    let a = run_experiment(&s, &dir.path().join("a")).unwrap();
    let b = run_experiment(&s, &dir.path().join("b")).unwrap();
    for (x, y) in a.run_files.iter().zip(&b.run_files).chain([(&a.aggregate_file, &b.aggregate_file)]) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{}", x.display());
    }
}

#[test]
fn single_run_summary_is_that_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = scenario(dir.path());
    s.strategies = vec![Strategy::Hwr];
    s.payloads = vec![80];
    s.runs = 1;
    s.seeds = vec![8];
    let out = run_experiment(&s, &dir.path().join("out")).unwrap();
    let text = std::fs::read_to_string(&out.run_files[0]).unwrap();
    let run = parse_run_file(&text, &out.run_files[0]).unwrap();
    let sent = run.datagrams().count() as f64;
    let delivered = run.datagrams().filter(|r| r.delivered_us.is_some()).count() as f64;
    let p = &out.aggregate.series[0].pdr;
    assert_eq!((p.n, p.mean, p.median, p.min, p.max, p.std), (1, delivered / sent, delivered / sent, delivered / sent, delivered / sent, 0.0));
}

#[test]
fn identical_runs_have_zero_spread_and_mixed_inputs_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = scenario(dir.path());
    s.strategies = vec![Strategy::Ff];
    s.payloads = vec![176];
    s.runs = 1;
    s.seeds = vec![2];
    let out = run_experiment(&s, &dir.path().join("out")).unwrap();
    let run = parse_run_file(&std::fs::read_to_string(&out.run_files[0]).unwrap(), Path::new("x")).unwrap();
    let copies: Vec<_> = (0..3)
        .map(|i| {
            let mut c = run.clone();
            c.meta.seed = 100 + i;
            c
        })
        .collect();
    let agg = aggregate(&copies).unwrap();
    let series = &agg.series[0];
    assert_eq!(series.pdr.std, 0.0);
    assert_eq!(series.l2_retransmissions.std, 0.0);
    assert_eq!(series.rbuf_full.std, 0.0);

    let mut foreign = run.clone();
    foreign.meta.scenario_id = "other".into();
    foreign.meta.seed = 200;
    let mixed = aggregate(&[copies[0].clone(), foreign]);
    assert!(matches!(mixed, Err(HarnessError::MixedScenarios { .. })), "{mixed:?}");
    let repeated = aggregate(&[copies[0].clone(), copies[0].clone()]);
    assert!(matches!(repeated, Err(HarnessError::Config(_))));

    // The written file parses back to the same run.
    assert_eq!(parse_run_file(&write_run_file(&run), Path::new("x")).unwrap(), run);
}

#[test]
fn invalid_scenario_fails_before_any_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = scenario(dir.path());
    s.payloads = vec![80, 100];
    let out = dir.path().join("out");
    let err = run_experiment(&s, &out).unwrap_err();
    assert!(matches!(&err, HarnessError::Config(m) if m.contains("100")), "{err}");
    assert!(!out.exists());
}

#[test]
fn scenario_id_ignores_the_topology_path_but_not_its_content() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(dir.path());
    let topo = s.validate().unwrap();
    let mut moved = s.clone();
    std::fs::copy(dir.path().join("topo.txt"), dir.path().join("copy.txt")).unwrap();
    moved.topology = dir.path().join("copy.txt");
    assert_eq!(moved.id(&moved.validate().unwrap()), s.id(&topo));
    let mut t2 = topo.clone();
    t2.links[0].pdr = 0.5;
    assert_ne!(s.id(&t2), s.id(&topo));
    let mut other = s.clone();
    other.packets_per_source = 31;
    assert_ne!(other.id(&topo), s.id(&topo));
}
