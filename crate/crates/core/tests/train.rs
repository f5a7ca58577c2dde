use gmamba::graph::{make_longrange_dataset, Graph, SynthSpec};
use gmamba::model::{prepare_all, GraphMamba, Mode, ModelConfig, PreparedGraph, StreamKey};
use gmamba::nn::ParamStore;
use gmamba::train::{
    evaluate, median, run_ablation, split_indices, train, Arm, Split, TrainConfig,
};
use gmamba::Error;

fn data(n: usize, distance: usize, seed: u64) -> (SynthSpec, Vec<Graph>) {
    let spec = SynthSpec {
        num_graphs: n,
        min_nodes: 12,
        max_nodes: 14,
        distance,
        ..SynthSpec::default()
    };
    let graphs = make_longrange_dataset(&spec, seed).unwrap();
    (spec, graphs)
}

fn small_model(spec: &SynthSpec) -> ModelConfig {
    ModelConfig {
        num_layers: 2,
        hidden_dim: 8,
        node_feat_dim: spec.node_feat_dim(),
        state_dim: 4,
        m_eval: 1,
        ..ModelConfig::default()
    }
}

fn quick(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        seed,
        batch_size: 8,
        lr: 5e-3,
        eval_every: 1,
        ..TrainConfig::default()
    }
}

#[test]
fn same_seed_gives_bitwise_identical_runs() {
    let (spec, graphs) = data(40, 3, 0);
    let cfg = ModelConfig {
        dropout: 0.1,
        n_bins: 2,
        ..small_model(&spec)
    };
    let a_dir = tempfile::tempdir().unwrap();
    let b_dir = tempfile::tempdir().unwrap();
    let tc = TrainConfig {
        checkpoint_every: 1,
        ..quick(2, 7)
    };
    let a = train(&cfg, &tc, &graphs, Some(a_dir.path())).unwrap();
    let b = train(&cfg, &tc, &graphs, Some(b_dir.path())).unwrap();
    assert_eq!(a.store.snapshot(), b.store.snapshot());
    assert_eq!(a.report, b.report);
    for file in [
        "model.ckpt",
        "metrics.csv",
        "report.json",
        "checkpoint_epoch1.bin",
        "checkpoint_epoch2.bin",
    ] {
        let x = std::fs::read(a_dir.path().join(file)).unwrap();
        let y = std::fs::read(b_dir.path().join(file)).unwrap();
        assert_eq!(x, y, "{file} differs");
    }
    let c = train(&cfg, &quick(2, 8), &graphs, None).unwrap();
    assert_ne!(a.store.snapshot(), c.store.snapshot());
}

#[test]
fn checkpoint_restores_trained_parameters() {
    let (spec, graphs) = data(20, 3, 1);
    let cfg = small_model(&spec);
    let dir = tempfile::tempdir().unwrap();
    let out = train(&cfg, &quick(1, 0), &graphs, Some(dir.path())).unwrap();
    let mut fresh = ParamStore::new();
    GraphMamba::new(cfg, &mut fresh, 99).unwrap();
    assert_ne!(fresh.snapshot(), out.store.snapshot());
    fresh
        .load_checkpoint(dir.path().join("model.ckpt"))
        .unwrap();
    assert_eq!(fresh.snapshot(), out.store.snapshot());
}

#[test]
fn metrics_cover_every_epoch_and_split() {
    let (spec, graphs) = data(30, 3, 2);
    let out = train(
        &small_model(&spec),
        &TrainConfig {
            eval_every: 2,
            ..quick(3, 0)
        },
        &graphs,
        None,
    )
    .unwrap();
    let rows = &out.report.rows;
    let train_epochs: Vec<usize> = rows
        .iter()
        .filter(|r| r.split == Split::Train)
        .map(|r| r.epoch)
        .collect();
    assert_eq!(train_epochs, [1, 2, 3]);
    let test_epochs: Vec<usize> = rows
        .iter()
        .filter(|r| r.split == Split::Test)
        .map(|r| r.epoch)
        .collect();
    assert_eq!(test_epochs, [0, 2, 3]);
    assert!(rows
        .iter()
        .all(|r| (0.0..=1.0).contains(&r.metric) && r.seconds == 0.0));
    let csv = out.report.to_csv();
    assert!(csv.starts_with("epoch,split,metric,loss,seconds\n"));
    assert_eq!(csv.lines().count(), rows.len() + 1);
}

fn train_loss(model: &GraphMamba, store: &ParamStore, graphs: &[&PreparedGraph]) -> f64 {
    evaluate(model, store, graphs, 1, 0).unwrap().0
}

#[test]
fn one_epoch_lowers_training_loss_for_every_arm() {
    let (spec, graphs) = data(120, 3, 3);
    let base = small_model(&spec);
    for arm in Arm::ALL {
        for seed in 0..3 {
            let cfg = arm.apply(&base);
            let prepared = prepare_all(&graphs, &cfg).unwrap();
            let [tr, _, _] = split_indices(graphs.len(), seed);
            let tr: Vec<&PreparedGraph> = tr.iter().map(|&i| &prepared[i]).collect();
            let mut store = ParamStore::new();
            let init = GraphMamba::new(cfg.clone(), &mut store, seed).unwrap();
            let before = train_loss(&init, &store, &tr);
            let tc = TrainConfig {
                arm: Some(arm),
                eval_every: 0,
                batch_size: 4,
                lr: 2e-3,
                ..quick(1, seed)
            };
            let out = train(&base, &tc, &graphs, None).unwrap();
            let after = train_loss(&out.model, &out.store, &tr);
            assert!(after < before, "{arm:?} seed {seed}: {before} -> {after}");
        }
    }
}

#[test]
fn small_training_set_is_memorized() {
    let (spec, graphs) = data(20, 3, 4);
    let cfg = ModelConfig {
        hidden_dim: 16,
        ..small_model(&spec)
    };
    let tc = TrainConfig {
        eval_every: 0,
        batch_size: 4,
        ..quick(60, 0)
    };
    let out = train(&cfg, &tc, &graphs, None).unwrap();
    let first = out
        .report
        .rows
        .iter()
        .find(|r| r.split == Split::Train)
        .unwrap();
    let last = out.report.last(Split::Train).unwrap();
    assert!(
        last.loss < 0.5 * first.loss,
        "loss {} -> {}",
        first.loss,
        last.loss
    );
    assert_eq!(last.metric, 1.0);
}

#[test]
fn baseline_arm_is_insensitive_to_the_stream_key() {
    let (spec, graphs) = data(3, 3, 5);
    let base = small_model(&spec);
    for (arm, same) in [
        (Arm::Baseline, true),
        (Arm::PermuteOnly, false),
        (Arm::PermutePlusDegree, false),
    ] {
        let cfg = arm.apply(&base);
        let mut store = ParamStore::new();
        let model = GraphMamba::new(cfg.clone(), &mut store, 0).unwrap();
        let pg = PreparedGraph::new(&graphs[0], &cfg).unwrap();
        let run = |graph| {
            let key = StreamKey {
                seed: 0,
                epoch: 1,
                graph,
            };
            model.forward(&store, &pg, Mode::Train, key).unwrap().0
        };
        assert_eq!(run(0) == run(1), same, "{arm:?}");
    }
}

#[test]
fn evaluation_is_deterministic_and_averaging_reduces_spread() {
    let (spec, graphs) = data(10, 3, 6);
    let cfg = small_model(&spec);
    let prepared = prepare_all(&graphs, &cfg).unwrap();
    let refs: Vec<&PreparedGraph> = prepared.iter().collect();
    let mut store = ParamStore::new();
    let model = GraphMamba::new(cfg, &mut store, 0).unwrap();
    let a = evaluate(&model, &store, &refs, 1, 3).unwrap();
    assert_eq!(a, evaluate(&model, &store, &refs, 1, 3).unwrap());
    assert!((0.0..=1.0).contains(&a.1));

    let spread = |m: usize| {
        let outs: Vec<f64> = (0..40)
            .map(|s| {
                let key = StreamKey {
                    seed: s,
                    epoch: 0,
                    graph: 0,
                };
                model
                    .forward(&store, &prepared[0], Mode::Eval { m }, key)
                    .unwrap()
                    .0
                    .data()[0]
            })
            .collect();
        let mean = outs.iter().sum::<f64>() / outs.len() as f64;
        outs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / outs.len() as f64
    };
    let (one, five) = (spread(1), spread(5));
    assert!(five < one, "m=5 variance {five} vs m=1 {one}");
}

#[test]
fn ablation_reports_every_arm_and_seed() {
    let (spec, graphs) = data(30, 3, 7);
    let tc = TrainConfig {
        eval_every: 0,
        ..quick(1, 0)
    };
    let res = run_ablation(&small_model(&spec), &tc, &graphs, &Arm::ALL, &[0, 1, 2]).unwrap();
    assert_eq!(res.arms.len(), 3);
    for a in &res.arms {
        assert_eq!(a.test_metric.len(), 3);
        assert_eq!(a.median, median(&a.test_metric));
    }
}

#[test]
fn median_and_split_helpers() {
    assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    assert!(median(&[]).is_nan());
    let [a, b, c] = split_indices(50, 1);
    assert_eq!((a.len(), b.len(), c.len()), (40, 5, 5));
    let mut all: Vec<usize> = a.into_iter().chain(b).chain(c).collect();
    all.sort_unstable();
    assert_eq!(all, (0..50).collect::<Vec<_>>());
    assert_eq!(split_indices(50, 1), split_indices(50, 1));
    assert_ne!(split_indices(50, 1), split_indices(50, 2));
}

#[test]
fn bad_configs_are_rejected() {
    let (spec, graphs) = data(10, 3, 8);
    let cfg = small_model(&spec);
    for tc in [
        TrainConfig {
            lr: 0.0,
            ..quick(1, 0)
        },
        TrainConfig {
            batch_size: 0,
            ..quick(1, 0)
        },
        TrainConfig {
            weight_decay: -1.0,
            ..quick(1, 0)
        },
    ] {
        assert!(matches!(
            train(&cfg, &tc, &graphs, None),
            Err(Error::Config(_))
        ));
    }
    assert!(matches!(
        train(&cfg, &quick(1, 0), &graphs[..1], None),
        Err(Error::Config(_))
    ));
    let wrong = ModelConfig {
        node_feat_dim: 2,
        ..cfg
    };
    assert!(train(&wrong, &quick(1, 0), &graphs, None).is_err());
}
