use palsyfuse_nn::layers::mixer::{extract_patches, reconstruct_patches};
use palsyfuse_nn::{weights, Ctx, Init, LayerSpec, NamedLayer, NetworkSpec, Rng, Tensor};
use proptest::prelude::*;

fn mlp(inputs: usize, hidden: usize) -> NetworkSpec {
    NetworkSpec {
        input: vec![inputs],
        layers: vec![
            NamedLayer::new("fc1", LayerSpec::Linear { inputs, outputs: hidden, init: Init::Kaiming }),
            NamedLayer::new("bn1", LayerSpec::BatchNorm1d { features: hidden, eps: 1e-5, momentum: 0.1 }),
            NamedLayer::new("relu1", LayerSpec::Relu),
            NamedLayer::new("fc2", LayerSpec::Linear { inputs: hidden, outputs: 1, init: Init::Xavier }),
            NamedLayer::new("sig", LayerSpec::Sigmoid),
        ],
        tap: "relu1".into(),
    }
}

proptest! {
    #[test]
    fn patch_extraction_inverts(seed in 0u64..1000, c in 1usize..4, grid in 1usize..6, p in 1usize..6, n in 1usize..3) {
        let size = grid * p;
        let mut rng = Rng::new(seed);
        let img = Tensor::from_fn(&[n, c, size, size], |_| rng.normal());
        let patches = extract_patches(&img, p).unwrap();
        prop_assert_eq!(patches.shape(), &[n, grid * grid, c * p * p]);
        prop_assert_eq!(reconstruct_patches(&patches, c, size, size, p).unwrap(), img);
    }

    #[test]
    fn weights_round_trip_after_training_steps(seed in 0u64..1000, inputs in 1usize..8, hidden in 1usize..8) {
        let spec = mlp(inputs, hidden);
        let mut a = spec.build(seed).unwrap();
        // Move the BatchNorm running statistics off their initial values.
        let mut rng = Rng::new(seed ^ 1);
        let x = Tensor::from_fn(&[6, inputs], |_| rng.normal());
        a.forward(&x, &mut Ctx::train(&mut rng)).unwrap();
        let bytes = weights::encode(&a);
        let mut b = spec.build(seed + 1).unwrap();
        weights::decode_into(&mut b, &bytes).unwrap();
        prop_assert_eq!(weights::encode(&b), bytes);
        prop_assert_eq!(a.infer(&x).unwrap(), b.infer(&x).unwrap());
    }

    #[test]
    fn decoding_arbitrary_bytes_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
        let mut net = mlp(3, 2).build(0).unwrap();
        let _ = weights::decode_into(&mut net, &bytes);
    }
}
