//! Finite-difference oracle for the backward pass: every analytic parameter
//! gradient must match central differences (h = 1e-5) within relative error
//! 1e-4 on a zoo of small networks with fixed dropout masks.

mod common;

#[test]
fn analytic_gradients_match_central_differences() {
    let h = 1e-5;
    let mut total = 0;
    for variant in 0..10 {
        let (mut net, x, labels) = common::prepared_net(variant);
        let mask_seed = droplab_core::seed::derive(variant as u64, "mask");
        let (checked, worst) = common::gradient_check(&mut net, &x, &labels, mask_seed, h);
        assert!(checked > 0, "net {} had no parameters", variant);
        assert!(
            worst < 1e-4,
            "net {}: worst relative gradient error {} exceeds 1e-4",
            variant,
            worst
        );
        total += checked;
    }
    assert!(total > 300, "expected a few hundred parameters checked, got {}", total);
}

#[test]
fn gradcheck_covers_every_layer_kind() {
    use droplab_core::nn::Layer;
    let mut seen_conv = false;
    let mut seen_pool = false;
    let mut seen_dropout = false;
    for variant in 0..10 {
        let (net, _) = common::small_net(variant);
        for layer in net.layers() {
            match layer {
                Layer::Conv2d(_) => seen_conv = true,
                Layer::MaxPool2d { .. } => seen_pool = true,
                Layer::Dropout { .. } => seen_dropout = true,
                _ => {}
            }
        }
    }
    assert!(seen_conv && seen_pool && seen_dropout);
}
