use xeblab::circuits::{load_architecture, sample_circuit, Architecture, Boundary, GateEnsemble};
use xeblab::experiments::{run_and_write, ExperimentConfig};
use xeblab::simulator::{run_pure, BitstringDistribution};

#[test]
fn architecture_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grid.json");
    let a = Architecture::grid_2d(12, 8).unwrap();
    a.save(&path).unwrap();
    let back = load_architecture(&path).unwrap();
    assert_eq!((back.n_qubits, &back.layers), (a.n_qubits, &a.layers));
    std::fs::write(&path, r#"{"n_qubits": 3, "layers": [[[0, 1], [1, 2]]]}"#).unwrap();
    assert!(load_architecture(&path).is_err());
}

#[test]
fn distribution_exports() {
    let dir = tempfile::tempdir().unwrap();
    let a = Architecture::brickwork_1d(6, 5, Boundary::Open).unwrap();
    let p = run_pure(&sample_circuit(&a, &GateEnsemble::Haar2, 3)).unwrap().probabilities();
    let bin = dir.path().join("p.bin");
    p.write_binary(&bin).unwrap();
    assert_eq!(std::fs::metadata(&bin).unwrap().len(), 8 * 64);
    assert_eq!(BitstringDistribution::read_binary(&bin).unwrap().probs, p.probs);

    let csv = dir.path().join("p.csv");
    p.write_csv(&csv).unwrap();
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("index,probability"));
    for (i, line) in lines.enumerate() {
        let (idx, val) = line.split_once(',').unwrap();
        assert_eq!(idx.parse::<usize>().unwrap(), i);
        assert_eq!(val.parse::<f64>().unwrap(), p.probs[i]);
    }
}

#[test]
fn experiment_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_json(&format!(
        r#"{{"experiment": "xeb-vs-fidelity", "seed": 4, "sweep": {{"n": [8], "d": [6], "eps": [0.01]}}, "output_dir": {:?}}}"#,
        dir.path()
    ))
    .unwrap();
    let (csv, json) = run_and_write(&cfg).unwrap();
    let mut reader = csv::Reader::from_path(&csv).unwrap();
    let header = reader.headers().unwrap().clone();
    assert_eq!(header.iter().last(), Some("runtime_s"));
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| r.len() == header.len()));
    assert!(rows.iter().any(|r| &r[0] == "fsim(90,60)"));

    let side: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(side["experiment"], "xeb-vs-fidelity");
    assert_eq!(side["seed"], 4);
    assert_eq!(side["config_sha256"], cfg.hash());
    assert_eq!(side["columns"].as_array().unwrap().len(), header.len());
    assert!(side["summary"]["min_noisy_ratio"].as_f64().unwrap() > 1.0);
}
