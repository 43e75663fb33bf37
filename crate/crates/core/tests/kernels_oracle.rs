mod common;

#[test]
fn conv_pool_linear_match_nested_loops_bit_for_bit() {
    let failures = common::oracle_equivalence(120, 2024);
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn padded_strided_conv_corner_case() {
    use remarnet::Tensor;
    // Single 3x3 input, all ones, 3x3 kernel of ones, padding 1, stride 2:
    // corners see 4 inputs.
    let x = Tensor::full(&[1, 1, 3, 3], 1.0f32);
    let w = Tensor::full(&[1, 1, 3, 3], 1.0f32);
    let b = Tensor::full(&[1], 0.5f32);
    let y = remarnet::kernels::conv2d(&x, &w, &b, 2, 1).unwrap();
    assert_eq!(y.shape(), &[1, 1, 2, 2]);
    assert_eq!(y.data(), &[4.5, 4.5, 4.5, 4.5]);
    assert_eq!(y, common::conv2d_oracle(&x, &w, &b, 2, 1));
}
