mod common;

use common::kernels;

#[test]
fn forward_passes_match_loop_oracles() {
    kernels::forward_oracles().unwrap();
}

#[test]
fn conv_gradients() {
    kernels::conv_gradients().unwrap();
}

#[test]
fn lrn_gradients() {
    kernels::lrn_gradients().unwrap();
}

#[test]
fn pool_gradients() {
    kernels::pool_gradients().unwrap();
}

#[test]
fn relu_and_fc_gradients() {
    kernels::relu_and_fc_gradients().unwrap();
}

#[test]
fn softmax_cross_entropy_gradient() {
    kernels::softmax_cross_entropy_gradient().unwrap();
}

#[test]
fn whole_group_gradients() {
    kernels::whole_group_gradients().unwrap();
}
