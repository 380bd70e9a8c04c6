use super::*;
use crate::numcore::Matrix;
use crate::worlds::{materialize, modadd_world, token_world, WorldParams};

fn modadd_inputs(n: usize, rows: usize, seed: u64) -> Matrix {
    let w = modadd_world(n).unwrap();
    materialize(&w, &mut RngStream::new(seed, 1), rows).unwrap().inputs
}

#[test]
fn mlp_cutoff_shapes() {
    let net = build_mlp(&[14, 32, 32, 7], false, 0).unwrap();
    assert_eq!(net.cutoff(), 2);
    let cut = net.split(2).unwrap();
    assert_eq!(cut.z_dim(), 32);
    let x = modadd_inputs(7, 10, 1);
    let z = cut.forward_f1(&x).unwrap();
    assert_eq!(z.shape(), (10, 32));
    assert_eq!(cut.forward_f2(&z).unwrap().shape(), (10, 7));
    assert!(net.split(0).is_err());
    assert!(net.split(3).is_err());
    assert!(build_mlp(&[14, 7], false, 0).is_err());
}

#[test]
fn composition_is_bitwise_identical() {
    let x = modadd_inputs(7, 600, 2);
    for net in [
        build_mlp(&[14, 32, 32, 7], false, 3).unwrap(),
        build_mlp(&[14, 32, 32, 32, 7], true, 3).unwrap(),
    ] {
        let y = net.forward(&x).unwrap();
        for l in net.interior_layers() {
            let cut = net.split(l).unwrap();
            let y2 = cut.forward_f2(&cut.forward_f1(&x).unwrap()).unwrap();
            assert_eq!(y.as_slice(), y2.as_slice(), "layer {l}");
        }
    }
}

#[test]
fn residual_cut_is_post_addition() {
    let net = build_mlp(&[14, 16, 16, 7], true, 5).unwrap();
    assert!(net.has_residual(2));
    assert!(!net.has_residual(1));
    let x = modadd_inputs(7, 4, 3);
    let acts = net.activations(&x).unwrap();
    let p = net.params();
    let pre = acts[1].matmul(&p[2]).unwrap().add_row_broadcast(&p[3]).unwrap().map(f64::tanh);
    let post = pre.add(&acts[1]).unwrap();
    assert!(acts[2].max_abs_diff(&post) < 1e-12);
    assert!(net.split_with(2, CutSite::PreResidual, ZMode::AllTokens).is_err());
    assert!(net.split_with(1, CutSite::PreResidual, ZMode::AllTokens).is_ok());
}

#[test]
fn same_seed_same_network() {
    let a = build_mlp(&[14, 32, 32, 7], false, 11).unwrap();
    let b = build_mlp(&[14, 32, 32, 7], false, 11).unwrap();
    let c = build_mlp(&[14, 32, 32, 7], false, 12).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

fn token_ids(rows: usize, seed: u64) -> Matrix {
    let w = token_world(5, 6).unwrap();
    materialize(&w, &mut RngStream::new(seed, 1), rows).unwrap().inputs
}

#[test]
fn seqnet_z_dims() {
    let net = build_seqnet(4, 16, 2, 6, 5, 0).unwrap();
    assert_eq!(net.n_layers(), 3);
    assert_eq!(net.split(1).unwrap().z_dim(), 6 * 16);
    let last = net.split_with(2, CutSite::PostResidual, ZMode::LastToken).unwrap();
    assert_eq!(last.z_dim(), 16);
    assert!(net.split_with(1, CutSite::PostResidual, ZMode::LastToken).is_err());
    assert!(net.split_with(2, CutSite::PreResidual, ZMode::AllTokens).is_err());

    let x = token_ids(20, 4);
    let y = net.forward(&x).unwrap();
    let y_last = last.forward_f2(&last.forward_f1(&x).unwrap()).unwrap();
    assert!(y.max_abs_diff(&y_last) < 1e-12);
    for l in net.interior_layers() {
        let cut = net.split(l).unwrap();
        let y2 = cut.forward_f2(&cut.forward_f1(&x).unwrap()).unwrap();
        assert_eq!(y.as_slice(), y2.as_slice());
    }
}

#[test]
fn seqnet_is_causal() {
    let net = build_seqnet(4, 16, 2, 6, 5, 1).unwrap();
    let x = token_ids(8, 5);
    let mut x2 = x.clone();
    for r in 0..x2.rows() {
        x2[(r, 5)] = ((x2[(r, 5)] as usize + 1) % 4) as f64;
    }
    let a = net.split(1).unwrap().forward_f1(&x).unwrap();
    let b = net.split(1).unwrap().forward_f1(&x2).unwrap();
    let early = 5 * 16;
    assert_eq!(a.select_cols(0, early), b.select_cols(0, early));
    assert_ne!(a.select_cols(early, 16), b.select_cols(early, 16));
}

#[test]
fn identity_hook_changes_nothing() {
    let net = build_mlp(&[14, 32, 32, 32, 7], false, 7).unwrap();
    let x = modadd_inputs(7, 30, 6);
    let y = net.forward(&x).unwrap();
    let hooked = net
        .forward_with_intervention(&x, &InterventionHook::identity([1, 2, 3]))
        .unwrap();
    assert_eq!(y, hooked);
    assert!(net
        .forward_with_intervention(&x, &InterventionHook::identity([4]))
        .is_err());
    let bad = InterventionHook::new([2], |_, z, _| Ok(Matrix::zeros(z.rows(), 1)));
    assert!(matches!(
        net.forward_with_intervention(&x, &bad),
        Err(Error::InterventionShapeMismatch { .. })
    ));
}

#[test]
fn hook_edits_only_downstream() {
    let net = build_mlp(&[14, 16, 16, 16, 7], false, 8).unwrap();
    let x = modadd_inputs(7, 5, 7);
    let zero = InterventionHook::new([2], |_, z, _| Ok(Matrix::zeros(z.rows(), z.cols())));
    let y = net.forward_with_intervention(&x, &zero).unwrap();
    let expected = net.forward_range(&Matrix::zeros(5, 16), 2, 4, None).unwrap();
    assert_eq!(y, expected);
}

#[test]
fn planted_modadd_shapes_and_editor() {
    let world = WorldParams::Modadd { n: 7 };
    let net = plant_network(&world, 9, 0).unwrap();
    let cut = net.default_split();
    assert_eq!(cut.z_dim(), 16);
    let spec = world.build().unwrap();
    let ds = materialize(&spec, &mut RngStream::new(3, 1), 40).unwrap();
    let y = net.forward(&ds.inputs).unwrap();
    assert_eq!(y, ds.targets);

    let z = cut.forward_f1(&ds.inputs).unwrap();
    let labels = ds.model("sum").unwrap().labels.clone().unwrap();
    for r in 0..z.rows() {
        assert_eq!(crate::numcore::argmax(&z.row(r)[..7]), labels[r]);
    }
    let target = 3;
    let editor = InterventionHook::new([1], move |_, z, _| {
        let mut z = z.clone();
        for r in 0..z.rows() {
            z.row_mut(r)[..7].fill(0.0);
            z[(r, target)] = 1.0;
        }
        Ok(z)
    });
    let y = net.forward_with_intervention(&ds.inputs, &editor).unwrap();
    for r in 0..y.rows() {
        assert_eq!(y.argmax_row(r), target);
    }
}

#[test]
fn spurious_plant_ignores_model() {
    let world = WorldParams::Modadd { n: 7 };
    let net = PlantPlan::new(world.clone(), "sum")
        .unwrap()
        .with_noise_dims(9)
        .spurious(true)
        .build(0)
        .unwrap();
    let x = modadd_inputs(7, 30, 9);
    let cut = net.default_split();
    let z = cut.forward_f1(&x).unwrap();
    let mut z2 = z.clone();
    for r in 0..z2.rows() {
        z2.row_mut(r)[..7].fill(0.0);
        z2[(r, 0)] = 1.0;
    }
    assert_eq!(cut.forward_f2(&z).unwrap(), cut.forward_f2(&z2).unwrap());
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.bin");
    let mut net = build_seqnet(4, 8, 2, 6, 5, 2).unwrap();
    net.set_cutoff(2).unwrap();
    net.save(&path, Some("abc")).unwrap();
    assert_eq!(FactoredNetwork::load(&path).unwrap(), net);
    assert_eq!(
        FactoredNetwork::stored_config_hash(&path).unwrap().as_deref(),
        Some("abc")
    );
    let planted = plant_network(&WorldParams::Token { track_length: 5, program_length: 6 }, 3, 1).unwrap();
    planted.save(&path, None).unwrap();
    let back = FactoredNetwork::load(&path).unwrap();
    let x = token_ids(10, 2);
    assert_eq!(back.forward(&x).unwrap(), planted.forward(&x).unwrap());
}

#[test]
fn zero_epochs_leaves_params() {
    let w = modadd_world(5).unwrap();
    let ds = materialize(&w, &mut RngStream::new(0, 1), 30).unwrap();
    let mut net = build_mlp(&[10, 8, 8, 5], false, 0).unwrap();
    let before = net.clone();
    let trace = train(&mut net, &ds, &TrainConfig { epochs: 0, ..Default::default() }).unwrap();
    assert!(trace.epochs.is_empty());
    assert_eq!(net, before);
}

#[test]
fn divergence_is_reported() {
    let w = modadd_world(5).unwrap();
    let ds = materialize(&w, &mut RngStream::new(0, 1), 30).unwrap();
    let mut net = build_mlp_with(&[10, 8, 8, 5], false, Activation::Relu, TargetKind::Classes(5), 0).unwrap();
    let cfg = TrainConfig {
        learning_rate: 1e200,
        epochs: 5,
        ..Default::default()
    };
    assert!(matches!(train(&mut net, &ds, &cfg), Err(Error::TrainingDiverged { .. })));
}

#[test]
fn training_reduces_loss() {
    let w = modadd_world(5).unwrap();
    let ds = crate::worlds::materialize_exhaustive(&w).unwrap();
    let mut net = build_mlp(&[10, 32, 32, 5], false, 0).unwrap();
    let trace = train(
        &mut net,
        &ds,
        &TrainConfig {
            learning_rate: 0.3,
            epochs: 300,
            batch_size: 5,
            seed: 0,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(trace.final_loss().unwrap() < trace.epochs[0].loss);
    assert!(trace.final_accuracy().unwrap() > 0.9);
}
