use blockhunter_core::chainsim::{extract_features, run_sim, SimConfig, FEATURE_NAMES};
use blockhunter_core::detectors::{pca_fit, DetectorConfig, Model, PcaParams};
use blockhunter_core::federation::{federated_scaler, FederatedConfig, Federation};
use blockhunter_core::ingest::{export_csv, load_csv, shard, synth_benchmark, ShardPlan, ShardStrategy};
use blockhunter_core::topology::{build_topology, TopologyConfig};
use blockhunter_core::{DetectorKind, SeededRng, Stream};

fn small_topology() -> TopologyConfig {
    TopologyConfig {
        factories: 30,
        devices: 150,
        clusters: 4,
        ..TopologyConfig::default()
    }
}

fn small_sim() -> SimConfig {
    let mut c = SimConfig {
        miner_count: 6,
        duration_s: 80.0,
        tx_rate: 2.0,
        ..SimConfig::default()
    };
    c.injection.malicious = 3;
    c
}

#[test]
fn trimmed_pca_single_client_matches_central_fit() {
    let data = synth_benchmark(600, 5, 0.05, 8.0, 2).unwrap();
    let mut detector = DetectorConfig::for_kind(DetectorKind::Pca);
    detector.pca = PcaParams::default();
    let cfg = FederatedConfig {
        clusters: 1,
        participation: 1.0,
        rounds: 2,
        detector,
        ..FederatedConfig::default()
    };
    let mut fed = Federation::new(cfg, vec![data.clone()]).unwrap();
    fed.run().unwrap();
    let Model::Pca(global) = fed.global_model().unwrap() else {
        panic!("not a PCA model")
    };
    let central = pca_fit(&data, &PcaParams::default()).unwrap();
    assert!(central.trim_iterations > 0);
    assert_eq!(global.sample_count(), central.sample_count());
    assert_eq!(global.mean, central.mean);
    assert_eq!(global.covariance, central.covariance);
}

#[test]
fn untrimmed_federated_pca_matches_pooled_fit() {
    let data = synth_benchmark(1200, 6, 0.05, 8.0, 4).unwrap();
    let params = PcaParams {
        trim_quantile: None,
        ..PcaParams::default()
    };
    let shards = shard(
        &data,
        &ShardPlan {
            strategy: ShardStrategy::SizeWeighted,
            k: 6,
            seed: 1,
        },
    )
    .unwrap();
    let mut detector = DetectorConfig::for_kind(DetectorKind::Pca);
    detector.pca = params.clone();
    let cfg = FederatedConfig {
        clusters: 6,
        participation: 1.0,
        rounds: 1,
        detector,
        ..FederatedConfig::default()
    };
    let mut fed = Federation::new(cfg, shards).unwrap();
    fed.run().unwrap();
    let Model::Pca(global) = fed.global_model().unwrap() else {
        panic!("not a PCA model")
    };
    let central = pca_fit(&data, &params).unwrap();
    for (a, b) in global.covariance.iter().zip(central.covariance.iter()) {
        assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
    }
}

#[test]
fn simulation_to_features_is_reproducible() {
    let topo = build_topology(&small_topology(), &mut SeededRng::new(9, Stream::Topology)).unwrap();
    let a = run_sim(&small_sim(), &topo, 9).unwrap();
    let b = run_sim(&small_sim(), &topo, 9).unwrap();
    assert_eq!(a, b);
    let fa = extract_features(&a).unwrap();
    assert_eq!(fa, extract_features(&b).unwrap());
    assert_eq!(fa.dimension(), FEATURE_NAMES.len());
    assert_eq!(fa.anomaly_flags().unwrap().iter().filter(|&&f| f).count(), 3);
    let c = run_sim(&small_sim(), &topo, 10).unwrap();
    assert_ne!(a.transactions, c.transactions);
}

#[test]
fn simulated_features_survive_csv_round_trip_and_federate() {
    let topo = build_topology(&small_topology(), &mut SeededRng::new(3, Stream::Topology)).unwrap();
    let trace = run_sim(&small_sim(), &topo, 3).unwrap();
    let data = extract_features(&trace).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("features.csv");
    let schema = export_csv(&data, &path).unwrap();
    let back = load_csv(&path, &schema).unwrap();
    assert_eq!(back.samples, data.samples);

    let shards = shard(
        &back,
        &ShardPlan {
            strategy: ShardStrategy::ByClusterColumn,
            k: 4,
            seed: 0,
        },
    )
    .unwrap();
    let scaler = federated_scaler(&shards).unwrap();
    let shards: Vec<_> = shards.iter().map(|s| scaler.transform(s).unwrap()).collect();
    let cfg = FederatedConfig {
        clusters: 4,
        participation: 0.5,
        rounds: 4,
        detector: DetectorConfig::for_kind(DetectorKind::Ned),
        ..FederatedConfig::default()
    };
    let mut fed = Federation::new(cfg, shards).unwrap();
    let log = fed.run().unwrap();
    assert_eq!(log.records.len(), 4);
    assert!(log.records.iter().all(|r| r.participants.len() == 2 && r.loss.is_finite()));
    let report = fed.evaluate_global(&scaler.transform(&back).unwrap(), 0.05).unwrap();
    assert!(report.auc > 0.5);
}
