mod common;

use common::*;
use stan_core::model::{load_weights, save_weights, Arch, Model, ModelConfig, SkipLink};
use stan_core::Tensor;

#[test]
fn parameter_counts_match_hand_formula() {
    for f in [4, 8, 16] {
        let stan = Model::build(ModelConfig::new(Arch::Stan, 64, f, 0)).unwrap();
        let unet = Model::build(ModelConfig::new(Arch::Unet, 64, f, 0)).unwrap();
        assert_eq!(stan.param_count(), stan_count(f), "stan f={f}");
        assert_eq!(unet.param_count(), unet_count(f), "unet f={f}");
        assert!(unet.param_count() < stan.param_count());
    }
    // The count does not depend on the input size.
    let big = Model::build(ModelConfig::new(Arch::Stan, 256, 4, 0)).unwrap();
    assert_eq!(big.param_count(), stan_count(4));
}

#[test]
fn smallest_stan_by_hand() {
    // f = 4, written out layer by layer.
    let enc1 = (4 * 9 + 4) + (4 * 4 * 9 + 4) + (2 + 2) + (2 * 2 * 9 + 2) + (2 * 25 + 2) + (2 * 2 * 9 + 2);
    let enc2 = (8 * 4 * 9 + 8) + (8 * 8 * 9 + 8) + (4 * 4 + 4) + (4 * 4 * 9 + 4) + (4 * 4 * 25 + 4) + (4 * 4 * 9 + 4);
    let enc3 = (16 * 8 * 9 + 16) + (16 * 16 * 9 + 16) + (8 * 8 + 8) + (8 * 8 * 9 + 8) + (8 * 8 * 25 + 8) + (8 * 8 * 9 + 8);
    let enc4 =
        (32 * 16 * 9 + 32) + (32 * 32 * 9 + 32) + (16 * 16 + 16) + (16 * 16 * 9 + 16) + (16 * 16 * 25 + 16) + (16 * 16 * 9 + 16);
    let central = (32 * 32 * 25 + 32) + (32 * 32 * 25 + 32) + (16 * 32 + 16) + (16 * 16 + 16) + (16 * 32 * 9 + 16) + (16 * 16 * 9 + 16);
    let dec4 = (64 * 32 * 4 + 32) + (32 * 64 * 9 + 32) + (16 * 32 * 25 + 16) + (32 * 48 * 9 + 32);
    let dec3 = (64 * 16 * 4 + 16) + (16 * 32 * 9 + 16) + (8 * 16 * 25 + 8) + (16 * 24 * 9 + 16);
    let dec2 = (32 * 8 * 4 + 8) + (8 * 16 * 9 + 8) + (4 * 8 * 25 + 4) + (8 * 12 * 9 + 8);
    let dec1 = (16 * 4 * 4 + 4) + (4 * 8 * 9 + 4) + (2 * 4 * 25 + 2) + (4 * 6 * 9 + 4);
    let head = 8 + 1;
    let total = enc1 + enc2 + enc3 + enc4 + central + dec4 + dec3 + dec2 + dec1 + head;
    let m = Model::build(ModelConfig::new(Arch::Stan, 16, 4, 0)).unwrap();
    assert_eq!(m.param_count(), total);
}

#[test]
fn three_skip_links_per_stan_decoder_block() {
    let m = Model::build(ModelConfig::new(Arch::Stan, 64, 8, 0)).unwrap();
    for level in 1..=4 {
        let links = m.skips_into(level);
        assert_eq!(links.len(), 3, "level {level}");
        let kinds: Vec<_> = links.iter().map(|s| s.link).collect();
        assert_eq!(kinds, vec![SkipLink::BeforeFirstConv, SkipLink::AfterFirstConv, SkipLink::AfterSecondConv]);
        assert!(links.iter().all(|s| s.from_encoder == level));
    }
    let u = Model::build(ModelConfig::new(Arch::Unet, 64, 8, 0)).unwrap();
    assert!((1..=4).all(|l| u.skips_into(l).len() == 1));
}

#[test]
fn batch_order_does_not_change_per_image_output() {
    let m = Model::build(ModelConfig::new(Arch::Stan, 32, 4, 2)).unwrap();
    let mut r = rng(2);
    let imgs: Vec<Tensor> = (0..3).map(|_| uniform(&[1, 1, 32, 32], 0.0, 1.0, &mut r)).collect();
    let single: Vec<Tensor> = imgs.iter().map(|x| m.forward(x).unwrap()).collect();
    let batch = m.forward(&Tensor::stack_batch(&imgs).unwrap()).unwrap();
    let rev: Vec<Tensor> = imgs.iter().rev().cloned().collect();
    let batch_rev = m.forward(&Tensor::stack_batch(&rev).unwrap()).unwrap();
    for (i, one) in single.iter().enumerate() {
        assert_eq!(&batch.batch_slice(i, 1).unwrap(), one);
        assert_eq!(&batch_rev.batch_slice(2 - i, 1).unwrap(), one);
    }
}

#[test]
fn forward_is_a_probability_map_of_input_size() {
    for arch in [Arch::Stan, Arch::Unet] {
        let m = Model::build(ModelConfig::new(arch, 64, 8, 1)).unwrap();
        let x = uniform(&[2, 1, 64, 64], 0.0, 1.0, &mut rng(1));
        let y = m.forward(&x).unwrap();
        assert_eq!(y.shape(), &[2, 1, 64, 64]);
        assert!(y.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }
}

#[test]
fn weight_files_round_trip_for_both_architectures() {
    let dir = tempfile::tempdir().unwrap();
    for arch in [Arch::Stan, Arch::Unet] {
        let m = Model::build(ModelConfig::new(arch, 32, 8, 9)).unwrap();
        let path = dir.path().join(format!("{arch}.stw"));
        save_weights(&m, &path).unwrap();
        let back = load_weights(&path).unwrap();
        assert_eq!(back.config(), m.config());
        assert_eq!(back.params(), m.params());
        let x = uniform(&[1, 1, 32, 32], 0.0, 1.0, &mut rng(3));
        assert_eq!(back.forward(&x).unwrap(), m.forward(&x).unwrap());
    }
}

#[test]
fn different_seeds_give_different_weights() {
    let a = Model::build(ModelConfig::new(Arch::Stan, 32, 4, 1)).unwrap();
    let b = Model::build(ModelConfig::new(Arch::Stan, 32, 4, 2)).unwrap();
    assert_ne!(a.params(), b.params());
    for p in a.params() {
        assert!(p.bias.data().iter().all(|&v| v == 0.0));
        let s = p.weight.shape();
        // Transposed weights are [cin, cout, 2, 2]; each output sees one tap per input channel.
        let fan_in = if p.name.ends_with("deconv") { s[0] } else { s[1] * s[2] * s[3] };
        let bound = (6.0 / fan_in as f64).sqrt();
        assert!(p.weight.data().iter().all(|v| v.abs() <= bound), "{}", p.name);
    }
}
