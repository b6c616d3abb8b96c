use matchkit::datagen::{generate_dataset, read_dataset, write_dataset, DataConfig};
use matchkit::mechanisms::Mechanism;
use matchkit::metrics::Metric;
use matchkit::par::Exec;
use matchkit::train::{evaluate, optimal_sets, recovery, train, Checkpoint, Model, TrainConfig};

fn config(n: usize, count: usize, mechanism: Mechanism, seed: u64) -> DataConfig {
    DataConfig { n, m: n, count, mechanism, seed, ..DataConfig::default() }
}

#[test]
fn dataset_files_are_a_function_of_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(5, 20, Mechanism::Mh, 4);
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    write_dataset(&a, &generate_dataset(&cfg, Exec::Parallel).unwrap()).unwrap();
    write_dataset(&b, &generate_dataset(&cfg, Exec::Sequential).unwrap()).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let gz = dir.path().join("c.jsonl.gz");
    write_dataset(&gz, &read_dataset(&a).unwrap()).unwrap();
    assert_eq!(read_dataset(&gz).unwrap(), read_dataset(&a).unwrap());
}

#[test]
fn train_then_evaluate_at_other_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate_dataset(&config(4, 40, Mechanism::Da, 1), Exec::available()).unwrap();
    let before = ds.clone();
    let cfg = TrainConfig { epochs: 2, ..TrainConfig::default() };
    let ck = train(&ds, &cfg, Exec::Parallel).unwrap();
    assert_eq!(ds, before);
    assert_eq!(ck, train(&ds, &cfg, Exec::Sequential).unwrap());
    assert_eq!(ck.loss_curve.len(), 2);

    let path = dir.path().join("ck.json");
    ck.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded, ck);

    for n in [1, 3, 7] {
        let test = generate_dataset(&config(n, 12, Mechanism::Da, 9), Exec::available()).unwrap();
        let ev = evaluate(&loaded.params, &test, 5, Exec::available()).unwrap();
        for model in [Model::NeuralSd, Model::Rsd] {
            assert_eq!(ev.values(model, Metric::Hd).len(), 12);
            assert!(ev.values(model, Metric::Irv).iter().all(|&x| x == 0.0));
        }
        let csv_a = dir.path().join(format!("a{n}.csv"));
        let csv_b = dir.path().join(format!("b{n}.csv"));
        ev.write_rows_csv(&csv_a).unwrap();
        evaluate(&loaded.params, &test, 5, Exec::Sequential).unwrap().write_rows_csv(&csv_b).unwrap();
        assert_eq!(std::fs::read(&csv_a).unwrap(), std::fs::read(&csv_b).unwrap());
    }
}

#[test]
fn reward_datasets_report_reward_ratios() {
    let train_ds = generate_dataset(&config(4, 24, Mechanism::Eh, 2), Exec::available()).unwrap();
    let ck = train(&train_ds, &TrainConfig { epochs: 1, ..TrainConfig::default() }, Exec::available()).unwrap();
    let test = generate_dataset(&config(4, 16, Mechanism::Mh, 3), Exec::available()).unwrap();
    let ev = evaluate(&ck.params, &test, 0, Exec::available()).unwrap();
    let rw = ev.values(Model::NeuralSd, Metric::Rw);
    assert_eq!(rw.len(), 16);
    assert!(rw.iter().all(|&x| (0.0..=1.0 + 1e-12).contains(&x)));
    assert!(ev.values(Model::NeuralSd, Metric::Bp).is_empty());
}

#[test]
fn recovery_on_small_markets() {
    let tr = generate_dataset(&config(3, 40, Mechanism::Da, 5), Exec::available()).unwrap();
    let te = generate_dataset(&config(3, 30, Mechanism::Da, 6), Exec::available()).unwrap();
    let ck = train(&tr, &TrainConfig { epochs: 1, ..TrainConfig::default() }, Exec::available()).unwrap();
    let sets = optimal_sets(&te, Exec::available()).unwrap();
    let rep = recovery(&ck.params, &te, &sets, 1).unwrap();
    assert_eq!(rep.rows.len(), 30);
    assert!(rep.rows.iter().all(|r| r.optimal_set_size >= 1 && r.rankings_searched == 720));
    assert_eq!(rep, recovery(&ck.params, &te, &sets, 1).unwrap());
    let too_big = generate_dataset(&config(5, 1, Mechanism::Da, 6), Exec::available()).unwrap();
    assert!(optimal_sets(&too_big, Exec::available()).is_err());
}
