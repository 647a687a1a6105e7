use splash::par::*;

#[test]
fn modes_agree_and_keep_order() {
    let xs: Vec<u64> = (0..1000).collect();
    let a = map(Parallelism::Sequential, &xs, |x| x * x);
    let b = map(Parallelism::Rayon, &xs, |x| x * x);
    assert_eq!(a, b);
    assert_eq!(map_range(Parallelism::Rayon, 5, |i| i), vec![0, 1, 2, 3, 4]);
}
