use splash::harness::pipeline::*;

#[test]
fn mean_std_values() {
    assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
    let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
    assert_eq!(m, 2.0);
    assert!((s - 1.0).abs() < 1e-15);
}
