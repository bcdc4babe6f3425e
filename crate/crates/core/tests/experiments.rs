use trustlab::experiments::*;
use trustlab::threats::ThreatModel;
use trustlab::Execution;

#[test]
fn csv_outputs_carry_metadata_and_headers() {
    let dir = tempfile::tempdir().unwrap();
    let text = "transactions = 60\nmodel = \"D\"\nmetric = \"AdaptiveTrust\"\n";
    let runs = run_config_file(text, Some(5), 2, dir.path(), Execution::Sequential).unwrap();
    assert_eq!(runs.len(), 2);
    for f in ["summary.csv", "trajectories.csv", "services.csv"] {
        let path = dir.path().join(f);
        let raw = std::fs::read_to_string(&path).unwrap();
        assert!(raw.starts_with(&format!("# seed=5\n# config_digest={}\n", config_digest(text))));
        assert!(raw.contains(&format!("# artifact_version={ARTIFACT_VERSION}")));
        let (header, rows) = read_csv_records(&path).unwrap();
        assert!(!header.is_empty() && !rows.is_empty());
    }
    let (_, rows) = read_csv_records(&dir.path().join("summary.csv")).unwrap();
    let seeds: Vec<_> = rows.iter().map(|r| r[3].to_string()).collect();
    assert_eq!(seeds, ["5", "6"]);
}

#[test]
fn overrides_feed_presets() {
    let dir = tempfile::tempdir().unwrap();
    let overrides = vec![
        parse_override("transactions=60").unwrap(),
        parse_override("reeval_every=20").unwrap(),
    ];
    let paths = run_preset(PresetId::Trajectories, &overrides, 0, 1, dir.path(), Execution::Parallel).unwrap();
    let (_, rows) = read_csv_records(&paths[0]).unwrap();
    assert!(rows.iter().all(|r| &r[5] == "camouflage"));
    assert_eq!(rows.iter().map(|r| r[6].parse::<usize>().unwrap()).max(), Some(3));
    let bad = vec![parse_override("colour=1").unwrap()];
    assert!(run_preset(PresetId::Trajectories, &bad, 0, 1, dir.path(), Execution::Parallel).is_err());
}

#[test]
fn preset_outputs_are_pure() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let overrides = vec![parse_override("n_regular=20").unwrap(), parse_override("n_malicious=6").unwrap()];
    let pa = run_preset(PresetId::SimilarityHeatmap, &overrides, 2, 2, a.path(), Execution::Parallel).unwrap();
    let pb = run_preset(PresetId::SimilarityHeatmap, &overrides, 2, 2, b.path(), Execution::Sequential).unwrap();
    for (x, y) in pa.iter().zip(&pb) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
}

#[test]
fn no_attackers_means_no_failures() {
    let base = trustlab::SimulationConfig {
        transactions: 120,
        ..Default::default()
    };
    for metric in ["NoneTrust", "EigenTrust", "ServiceTrust++"] {
        let (_, mut cfg) = failed_fraction_sweep(&base, metric)
            .into_iter()
            .find(|(label, _)| label == "A:malicious=0%")
            .unwrap();
        cfg.noise = 0.0;
        let r = trustlab::run_experiment(&cfg).unwrap();
        assert_eq!(r.failed_fraction, 0.0, "{metric}");
    }
}

#[test]
fn cost_curves_cover_every_model() {
    let dir = tempfile::tempdir().unwrap();
    let meta = Metadata::new(0, "grid");
    let paths = write_cost_curves(dir.path(), &meta, &ThreatModel::ALL).unwrap();
    assert_eq!(paths.len(), 6);
    let (header, rows) = read_csv_records(&paths[0]).unwrap();
    assert_eq!(&header[7], "n_malicious");
    assert_eq!(rows.len(), 57);
}

#[test]
fn synthetic_graph_respects_rating_bands() {
    let spec = SyntheticGraphSpec {
        n_regular: 15,
        n_malicious: 5,
        eta: 0.97,
        ..Default::default()
    };
    let l = spec.build_ledger(1).unwrap();
    for e in l.events() {
        let (i, j) = (e.rater.index(), e.ratee.index());
        match (i < 15, j < 15) {
            (true, _) => assert!((0.85..=1.0).contains(&e.value)),
            (false, true) => assert!((0.92..=1.0).contains(&e.value)),
            (false, false) => assert_eq!(e.value, 1.0),
        }
    }
    assert!(SyntheticGraphSpec { eta: 1.5, ..spec }.build_ledger(0).is_err());
}

#[test]
fn shipped_config_parses() {
    let cfgs = parse_config(include_str!("../../../configs/camouflage.toml")).unwrap();
    let names: Vec<_> = cfgs.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["eigentrust", "servicetrust_pp", "spies"]);
    assert_eq!(cfgs[2].1.threat.model, ThreatModel::F);
}
