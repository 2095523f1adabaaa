use biofusion_core::error::Result;
use biofusion_core::tensor::{check_gradients, check_gradients_many, Graph, Tensor, Var};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn naive_matmul(a: &Tensor, b: &Tensor) -> Vec<f64> {
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            for l in 0..k {
                out[i * n + j] += a.get(i, l) * b.get(l, j);
            }
        }
    }
    out
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-3.0f64..3.0, rows * cols).prop_map(move |d| Tensor::matrix(rows, cols, d).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matmul_matches_triple_loop((a, b) in (1usize..=16, 1usize..=16, 1usize..=16)
        .prop_flat_map(|(m, k, n)| (matrix(m, k), matrix(k, n))))
    {
        let c = a.matmul(&b).unwrap();
        for (x, y) in c.data().iter().zip(naive_matmul(&a, &b)) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
        let mut g = Graph::new();
        let (va, vb) = (g.constant(a.clone()), g.constant(b.clone()));
        let vc = g.matmul(va, vb).unwrap();
        prop_assert_eq!(g.value(vc), &c);
    }

    #[test]
    fn softmax_rows_are_distributions(m in (1usize..=6, 1usize..=9).prop_flat_map(|(r, c)| matrix(r, c))) {
        let mut g = Graph::new();
        let x = g.constant(m.map(|v| 10.0 * v));
        let s = g.softmax_rows(x).unwrap();
        let s = g.value(s);
        for r in 0..s.rows() {
            let row = s.row(r);
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            prop_assert!(row.iter().all(|&p| p > 0.0 && p <= 1.0));
        }
    }
}

type Op = fn(&mut Graph, Var) -> Result<Var>;

/// Every differentiable op reduced to a scalar through a fixed random projection so
/// that all output coordinates contribute to the gradient.
fn op_cases() -> Vec<(&'static str, usize, usize, Op)> {
    fn project(g: &mut Graph, y: Var) -> Result<Var> {
        let shape = g.value(y).shape().to_vec();
        let n: usize = shape.iter().product();
        let w: Vec<f64> = (0..n).map(|i| ((i * 7 + 3) % 11) as f64 / 11.0 - 0.4).collect();
        let w = g.constant(Tensor::new(shape, w)?);
        let p = g.mul(y, w)?;
        g.sum(p)
    }
    vec![
        ("matmul", 3, 4, |g, x| {
            let b = g.constant(Tensor::matrix(4, 2, vec![0.3, -0.1, 0.7, 0.2, -0.5, 0.4, 0.1, 0.9])?);
            let y = g.matmul(x, b)?;
            project(g, y)
        }),
        ("matmul_nt", 3, 4, |g, x| {
            let y = g.matmul_nt(x, x)?;
            project(g, y)
        }),
        ("transpose", 2, 5, |g, x| {
            let y = g.transpose(x)?;
            project(g, y)
        }),
        ("add_sub_mul", 3, 3, |g, x| {
            let s = g.add(x, x)?;
            let d = g.sub(s, x)?;
            let y = g.mul(d, x)?;
            project(g, y)
        }),
        ("add_row", 4, 3, |g, x| {
            let row = g.constant(Tensor::row_vector(vec![0.1, -0.2, 0.3])?);
            let y = g.add_row(x, row)?;
            let y = g.mul(y, y)?;
            project(g, y)
        }),
        ("scale_add_scalar", 2, 3, |g, x| {
            let y = g.scale(x, -1.7)?;
            let y = g.add_scalar(y, 0.4)?;
            let y = g.mul(y, x)?;
            project(g, y)
        }),
        ("relu", 4, 4, |g, x| {
            let y = g.relu(x)?;
            project(g, y)
        }),
        ("exp", 3, 3, |g, x| {
            let y = g.exp(x)?;
            project(g, y)
        }),
        ("softmax_rows", 3, 5, |g, x| {
            let y = g.softmax_rows(x)?;
            project(g, y)
        }),
        ("layer_norm", 3, 6, |g, x| {
            let gain = g.constant(Tensor::row_vector(vec![1.0, 0.5, -0.7, 1.3, 0.2, 0.9])?);
            let bias = g.constant(Tensor::row_vector(vec![0.1, 0.0, -0.2, 0.3, 0.0, 0.05])?);
            let y = g.layer_norm(x, gain, bias)?;
            project(g, y)
        }),
        ("concat_rows_cols", 2, 3, |g, x| {
            let r = g.concat_rows(&[x, x])?;
            let c = g.concat_cols(&[r, r])?;
            let c = g.mul(c, c)?;
            project(g, c)
        }),
        ("slice_cols", 3, 6, |g, x| {
            let a = g.slice_cols(x, 1, 4)?;
            let b = g.slice_cols(x, 3, 6)?;
            let y = g.mul(a, b)?;
            project(g, y)
        }),
        ("reshape", 2, 6, |g, x| {
            let y = g.reshape(x, 3, 4)?;
            let y = g.exp(y)?;
            project(g, y)
        }),
        ("sum_rows_mean_rows", 4, 3, |g, x| {
            let s = g.sum_rows(x)?;
            let m = g.mean_rows(x)?;
            let y = g.mul(s, m)?;
            project(g, y)
        }),
        ("mean", 3, 4, |g, x| {
            let y = g.mul(x, x)?;
            g.mean(y)
        }),
    ]
}

#[test]
fn every_op_matches_finite_differences_on_twenty_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for (name, rows, cols, op) in op_cases() {
        for trial in 0..20 {
            let x = Tensor::randn(rows, cols, 1.0, &mut rng);
            let err = check_gradients(op, &x, 1e-6).unwrap();
            assert!(err < 1e-4, "{name} trial {trial}: relative error {err}");
        }
    }
}

#[test]
fn two_input_composition_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let inputs = [Tensor::randn(4, 3, 1.0, &mut rng), Tensor::randn(3, 4, 1.0, &mut rng)];
    let report = check_gradients_many(
        |g, v| {
            let p = g.matmul(v[0], v[1])?;
            let s = g.softmax_rows(p)?;
            let t = g.matmul(s, v[0])?;
            g.mean(t)
        },
        &inputs,
        1e-6,
    )
    .unwrap();
    assert_eq!(report.n_coords, 24);
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

#[test]
fn every_parameter_receives_a_gradient_of_its_shape() {
    let mut g = Graph::new();
    let a = g.param(Tensor::filled(2, 3, 0.5));
    let b = g.param(Tensor::filled(3, 1, -0.2));
    let unused = g.param(Tensor::filled(4, 4, 1.0));
    let c = g.constant(Tensor::filled(2, 1, 2.0));
    let y = g.matmul(a, b).unwrap();
    let y = g.mul(y, c).unwrap();
    let root = g.sum(y).unwrap();
    g.backward(root).unwrap();
    assert_eq!(g.grad(a).unwrap().shape(), &[2, 3]);
    assert_eq!(g.grad(b).unwrap().shape(), &[3, 1]);
    assert!(g.grad(unused).is_none_or(|t| t.shape() == [4, 4]));
    assert!(g.grad(c).is_none());
}

#[test]
fn forward_and_backward_are_bit_identical_across_runs() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let x = Tensor::randn(5, 6, 1.0, &mut rng);
        let w = Tensor::randn(6, 6, 0.5, &mut rng);
        let mut g = Graph::new();
        let (vx, vw) = (g.param(x), g.param(w));
        let h = g.matmul(vx, vw).unwrap();
        let h = g.softmax_rows(h).unwrap();
        let gain = g.constant(Tensor::filled(1, 6, 1.0));
        let bias = g.constant(Tensor::zeros(1, 6));
        let h = g.layer_norm(h, gain, bias).unwrap();
        let root = g.mean(h).unwrap();
        g.backward(root).unwrap();
        (g.value(root).clone(), g.grad(vx).unwrap().clone(), g.grad(vw).unwrap().clone())
    };
    let (a, b) = (run(), run());
    assert_eq!(a.0.data(), b.0.data());
    assert_eq!(a.1.data(), b.1.data());
    assert_eq!(a.2.data(), b.2.data());
}

#[test]
fn shape_mismatch_is_an_error() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::zeros(2, 3));
    let b = g.constant(Tensor::zeros(2, 3));
    assert!(g.matmul(a, b).is_err());
    assert!(Tensor::zeros(2, 3).matmul(&Tensor::zeros(2, 3)).is_err());
}
