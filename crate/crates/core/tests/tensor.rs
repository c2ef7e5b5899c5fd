use dlra_core::linalg::{svd, Matrix};
use dlra_core::random::{random_matrix, random_tensor, random_vec, seeded};
use dlra_core::DenseTensor;
use proptest::prelude::*;

fn loop_mode_product(x: &DenseTensor<f64>, m: &Matrix<f64>, mu: usize) -> DenseTensor<f64> {
    let mut dims = x.dims().to_vec();
    dims[mu] = m.rows();
    DenseTensor::from_fn(&dims, |idx| {
        let mut s = 0.0;
        let mut src = idx.to_vec();
        for i in 0..x.dims()[mu] {
            src[mu] = i;
            s += m[(idx[mu], i)] * x.get(&src);
        }
        s
    })
    .unwrap()
}

#[test]
fn rank_one_single_mode_matricization() {
    let (a, b, c) = ([1.0, 2.0], [3.0, -1.0, 0.5], [2.0, 4.0]);
    let x = DenseTensor::outer(&[&a, &b, &c]).unwrap();
    let m = x.matricize(&[0]).unwrap();
    for i in 0..2 {
        for j in 0..3 {
            for k in 0..2 {
                assert_eq!(m[(i, j + 3 * k)], a[i] * b[j] * c[k]);
            }
        }
    }
}

#[test]
fn prefix_matricization_enumeration() {
    let x = DenseTensor::new(vec![2, 2, 2], (0..8).map(f64::from).collect()).unwrap();
    let m = x.matricize(&[0, 1]).unwrap();
    assert_eq!(m.shape(), (4, 2));
    // Row index i₁ + 2 i₂, column i₃, entry value i₁ + 2 i₂ + 4 i₃.
    for r in 0..4 {
        for c in 0..2 {
            assert_eq!(m[(r, c)], (r + 4 * c) as f64);
        }
    }
    let m2 = x.matricize(&[1]).unwrap();
    // Row i₂, column i₁ + 2 i₃.
    assert_eq!(m2[(1, 0)], 2.0);
    assert_eq!(m2[(0, 1)], 1.0);
    assert_eq!(m2[(1, 3)], 7.0);
}

#[test]
fn matricize_rejects_trivial_splits() {
    let x = DenseTensor::<f64>::zeros(&[2, 3]).unwrap();
    assert!(x.matricize(&[]).is_err());
    assert!(x.matricize(&[0, 1]).is_err());
    assert!(x.matricize(&[2]).is_err());
}

#[test]
fn mode_multiply_cases() {
    let mut rng = seeded(10);
    let x = random_tensor::<f64, _>(&[3, 4, 2], &mut rng).unwrap();
    let m = random_matrix::<f64, _>(5, 4, &mut rng);
    let y = x.mode_multiply(&m, 1).unwrap();
    assert_eq!(y.dims(), &[3, 5, 2]);
    assert!(y.max_abs_diff(&loop_mode_product(&x, &m, 1)).unwrap() < 1e-14);
    let id = x.mode_multiply(&Matrix::identity(3), 0).unwrap();
    assert_eq!(id, x);
    assert!(x.mode_multiply(&m, 0).is_err());

    let a = [1.0, -2.0, 0.5];
    let b = [2.0, 1.0];
    let r1 = DenseTensor::outer(&[&a, &b]).unwrap();
    let mm = random_matrix::<f64, _>(4, 3, &mut rng);
    let ma = mm.mul_vec(&a);
    let expect = DenseTensor::outer(&[&ma, &b]).unwrap();
    assert!(r1.mode_multiply(&mm, 0).unwrap().max_abs_diff(&expect).unwrap() < 1e-14);
}

#[test]
fn mode_product_equals_unfold_multiply_fold() {
    let mut rng = seeded(11);
    let x = random_tensor::<f64, _>(&[3, 2, 4, 2], &mut rng).unwrap();
    let m = random_matrix::<f64, _>(3, 4, &mut rng);
    let y = x.mode_multiply(&m, 2).unwrap();
    let via = m.matmul(&x.unfold(2).unwrap());
    let folded = DenseTensor::fold(&via, y.dims(), 2).unwrap();
    assert!(y.max_abs_diff(&folded).unwrap() < 1e-14);
    assert_eq!(x.unfold(2).unwrap(), x.matricize(&[2]).unwrap());
}

#[test]
fn inner_products() {
    let mut rng = seeded(12);
    let x = random_tensor::<f64, _>(&[3, 3, 2], &mut rng).unwrap();
    let z = DenseTensor::zeros(&[3, 3, 2]).unwrap();
    assert_eq!(x.inner(&z).unwrap(), 0.0);
    let y = random_tensor::<f64, _>(&[3, 3, 2], &mut rng).unwrap();
    let flat: f64 = x.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
    let v = x.inner(&y).unwrap();
    assert!((v - flat).abs() <= 1e-14 * flat.abs().max(1.0));
    assert!((x.inner(&x).unwrap() - x.norm().powi(2)).abs() < 1e-12);
    assert!(x.inner(&DenseTensor::zeros(&[3, 3]).unwrap()).is_err());

    let (a, b, c, d) = (
        random_vec::<f64, _>(3, &mut rng),
        random_vec::<f64, _>(4, &mut rng),
        random_vec::<f64, _>(3, &mut rng),
        random_vec::<f64, _>(4, &mut rng),
    );
    let ab = DenseTensor::outer(&[&a, &b]).unwrap();
    let cd = DenseTensor::outer(&[&c, &d]).unwrap();
    let sep = a.iter().zip(&c).map(|(p, q)| p * q).sum::<f64>()
        * b.iter().zip(&d).map(|(p, q)| p * q).sum::<f64>();
    assert!((ab.inner(&cd).unwrap() - sep).abs() < 1e-13);
}

#[test]
fn json_round_trip() {
    let x = DenseTensor::new(vec![2, 1, 2], vec![0.1, -2.5, 3.0, 1e-300]).unwrap();
    let s = serde_json::to_string(&x).unwrap();
    assert_eq!(s, r#"{"dims":[2,1,2],"data":[0.1,-2.5,3.0,1e-300]}"#);
    let back: DenseTensor<f64> = serde_json::from_str(&s).unwrap();
    assert_eq!(back, x);
    assert!(serde_json::from_str::<DenseTensor<f64>>(r#"{"dims":[2],"data":[1.0]}"#).is_err());
}

fn dims_strategy() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..=6, 2..=5).prop_filter("size", |d| d.iter().product::<usize>() <= 2000)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matricize_round_trip(dims in dims_strategy(), seed in any::<u64>(), mask in any::<u32>()) {
        let d = dims.len();
        let mut split: Vec<usize> = (0..d).filter(|m| mask >> m & 1 == 1).collect();
        if split.is_empty() { split.push(0); }
        if split.len() == d { split.pop(); }
        let x = random_tensor::<f64, _>(&dims, &mut seeded(seed)).unwrap();
        let m = x.matricize(&split).unwrap();
        let back = DenseTensor::tensorize(&m, &dims, &split).unwrap();
        prop_assert_eq!(back, x);
    }

    #[test]
    fn mode_products_commute(dims in dims_strategy(), seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let x = random_tensor::<f64, _>(&dims, &mut rng).unwrap();
        let a = random_matrix::<f64, _>(3, dims[0], &mut rng);
        let b = random_matrix::<f64, _>(2, dims[1], &mut rng);
        let ab = x.mode_multiply(&a, 0).unwrap().mode_multiply(&b, 1).unwrap();
        let ba = x.mode_multiply(&b, 1).unwrap().mode_multiply(&a, 0).unwrap();
        prop_assert!(ab.sub(&ba).unwrap().norm() <= 1e-12 * ab.norm().max(1e-300));
    }

    #[test]
    fn parseval_over_unfoldings(dims in dims_strategy(), seed in any::<u64>(), mu in 0usize..5) {
        let x = random_tensor::<f64, _>(&dims, &mut seeded(seed)).unwrap();
        let mu = mu % (dims.len() - 1);
        let split: Vec<usize> = (0..=mu).collect();
        for m in [x.matricize(&split).unwrap(), x.unfold(mu).unwrap()] {
            let s = svd(&m).unwrap();
            let sum: f64 = s.singular_values.iter().map(|v| v * v).sum();
            let n2 = x.norm().powi(2);
            prop_assert!((sum - n2).abs() <= 1e-10 * n2);
        }
    }
}
