//! End-to-end behavior of the training pipeline on the synthetic
//! benchmark: the designed-hard construction is picked up by precision
//! ranking, blockwise training improves the hard classes, and the cloud
//! model outranks the edge main block.

use meanet::arch::{BlockSpec, MeaConfig, Merge};
use meanet::complexity::filter_hard_subset;
use meanet::data::{gen_synthetic, SyntheticSpec};
use meanet::nn::SgdConfig;
use meanet::trainer::{
    evaluate_extension, evaluate_main, hard_class_accuracy, run_algorithm1, CurvePoint,
    PipelineParams, Split, TrainParams,
};

fn train_spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        num_classes: 8,
        dim: 16,
        samples_per_class: 150,
        separation: 3.0,
        overlap: 1.5,
        hard_count: 4,
        seed: 100 + seed,
    }
}

fn train_params(epochs: usize, seed: u64) -> TrainParams {
    TrainParams {
        sgd: SgdConfig {
            initial_lr: 0.03,
            milestones: vec![epochs * 2 / 3],
            decay_factor: 0.1,
            momentum: 0.9,
            seed,
        },
        epochs,
        batch_size: 16,
    }
}

fn pipeline_params(seed: u64) -> PipelineParams {
    PipelineParams {
        mea: MeaConfig::variant_b(
            16,
            BlockSpec::relu(vec![8, 5]),
            BlockSpec::relu(vec![5]),
            BlockSpec::relu(vec![32, 32]),
            8,
            4,
            Merge::Sum,
        )
        .unwrap(),
        cloud_spec: BlockSpec::relu(vec![48, 32]),
        main_params: train_params(15, 11 + seed),
        cloud_params: train_params(40, 12 + seed),
        extension_params: train_params(80, 13 + seed),
        val_fraction: 0.10,
        split_seed: 21 + seed,
        build_seed: 31 + seed,
        partition_path: None,
    }
}

fn last_val_accuracy(curve: &[CurvePoint]) -> f64 {
    curve
        .iter()
        .rev()
        .find(|p| p.split == Split::Val)
        .map(|p| p.accuracy)
        .expect("curve has validation rows")
}

#[test]
fn precision_ranking_recovers_the_designed_hard_group() {
    let mut hits = 0;
    for seed in 0..5 {
        let spec = train_spec(seed);
        let data = gen_synthetic(&spec).unwrap();
        let out = run_algorithm1(&data, &pipeline_params(seed)).unwrap();
        let designed = spec.designed_hard_classes();
        let recovered = out
            .partition
            .hard_classes
            .iter()
            .filter(|c| designed.contains(c))
            .count();
        if recovered >= 3 {
            hits += 1;
        }
    }
    assert!(
        hits >= 3,
        "designed-hard classes landed in the bottom precision ranks in only {hits}/5 runs"
    );
}

#[test]
fn blockwise_stage_improves_hard_class_train_accuracy() {
    let mut margins = Vec::new();
    for seed in 0..5 {
        let data = gen_synthetic(&train_spec(seed)).unwrap();
        let out = run_algorithm1(&data, &pipeline_params(seed)).unwrap();

        // Main block's hard-class accuracy on the training split,
        // argmax over all classes.
        let main_eval = evaluate_main(&out.net, &out.train).unwrap();
        let main_hard =
            hard_class_accuracy(&main_eval.predictions, out.train.labels(), &out.partition)
                .expect("train split contains hard classes");

        // Extension exit on the remapped hard subset of the same split.
        let (idx, remapped) = filter_hard_subset(out.train.labels(), &out.partition).unwrap();
        let hard_train = out
            .train
            .select(&idx, Some((&remapped, out.partition.num_hard())))
            .unwrap();
        let ext_eval = evaluate_extension(&out.net, &hard_train).unwrap();
        margins.push(ext_eval.accuracy - main_hard);
    }
    let positive = margins.iter().filter(|&&m| m > 0.0).count();
    let mean = margins.iter().sum::<f64>() / margins.len() as f64;
    assert!(
        positive >= 4 && mean > 0.0,
        "extension beat the main block on hard-class training accuracy in only \
         {positive}/5 seeds (margins {margins:?})"
    );
}

#[test]
fn cloud_model_outranks_the_edge_main_block_on_validation() {
    let mut main_sum = 0.0;
    let mut cloud_sum = 0.0;
    for seed in 0..5 {
        let data = gen_synthetic(&train_spec(seed)).unwrap();
        let out = run_algorithm1(&data, &pipeline_params(seed)).unwrap();
        main_sum += last_val_accuracy(&out.main_curve);
        cloud_sum += last_val_accuracy(&out.cloud_curve);
    }
    assert!(
        cloud_sum >= main_sum,
        "cloud mean validation accuracy {:.4} fell below the edge main block's {:.4}",
        cloud_sum / 5.0,
        main_sum / 5.0
    );
}

#[test]
fn pipeline_writes_a_reloadable_partition_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("partition.json");
    let data = gen_synthetic(&train_spec(0)).unwrap();
    let mut params = pipeline_params(0);
    params.partition_path = Some(path.clone());
    let out = run_algorithm1(&data, &params).unwrap();
    let reloaded = meanet::checkpoint::load_partition(&path).unwrap();
    assert_eq!(reloaded, out.partition);

    // Same seeds, same file bytes.
    let path2 = dir.path().join("partition2.json");
    params.partition_path = Some(path2.clone());
    run_algorithm1(&data, &params).unwrap();
    assert_eq!(
        std::fs::read(&path).unwrap(),
        std::fs::read(&path2).unwrap()
    );
}
