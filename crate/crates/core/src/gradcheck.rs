//! Central finite-difference checks of analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Coordinate where the worst error occurred.
    pub worst_index: Option<usize>,
    pub checked: usize,
    /// Coordinates left out because every step tried straddled a kink.
    pub skipped: usize,
    pub tolerance: f64,
    pub pass: bool,
}

/// `|a − n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares `analytic` against `(f(x+h) − f(x−h)) / 2h` for every coordinate
/// of `point`.
pub fn compare_with_finite_differences(
    mut f: impl FnMut(&[f64]) -> f64,
    point: &[f64],
    analytic: &[f64],
    h: f64,
    tol: f64,
) -> GradCheckReport {
    assert!(h > 0.0, "finite-difference step must be positive");
    assert_eq!(point.len(), analytic.len(), "gradient length");
    let mut x = point.to_vec();
    let mut worst = 0.0;
    let mut worst_index = None;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let fp = f(&x);
        x[i] = orig - h;
        let fm = f(&x);
        x[i] = orig;
        let numeric = (fp - fm) / (2.0 * h);
        let err = relative_error(analytic[i], numeric);
        // NaN compares false, so track it explicitly.
        if err > worst || err.is_nan() {
            worst = if err.is_nan() { f64::INFINITY } else { err };
            worst_index = Some(i);
        }
    }
    GradCheckReport {
        max_relative_error: worst,
        worst_index,
        checked: x.len(),
        skipped: 0,
        tolerance: tol,
        pass: worst <= tol,
    }
}

/// Central differences for a piecewise-smooth `f` that also returns the
/// piece it evaluated on.
///
/// Each coordinate is differenced with the steps `h·10^k` for `k` in
/// `-spread..=spread`. Steps whose `x ± h` land on a different piece than `x`
/// are discarded. Among the rest, the estimate with the smallest error bound
/// is used: disagreement with the next larger step plus the roundoff of the
/// difference quotient. Coordinates with no usable step are skipped.
pub fn compare_piecewise<K: PartialEq>(
    mut f: impl FnMut(&[f64]) -> (f64, K),
    point: &[f64],
    analytic: &[f64],
    h: f64,
    spread: i32,
    tol: f64,
) -> GradCheckReport {
    assert!(h > 0.0, "finite-difference step must be positive");
    assert_eq!(point.len(), analytic.len(), "gradient length");
    let (_, piece) = f(point);
    let mut x = point.to_vec();
    let mut worst = 0.0;
    let mut worst_index = None;
    let mut skipped = 0;
    for i in 0..x.len() {
        let orig = x[i];
        // (estimate, roundoff bound), largest step first.
        let mut estimates = Vec::new();
        for k in (-spread..=spread).rev() {
            let step = h * 10f64.powi(k);
            x[i] = orig + step;
            let (fp, kp) = f(&x);
            x[i] = orig - step;
            let (fm, km) = f(&x);
            x[i] = orig;
            if kp == piece && km == piece {
                let roundoff = 4.0 * f64::EPSILON * fp.abs().max(fm.abs()) / (2.0 * step);
                estimates.push(((fp - fm) / (2.0 * step), roundoff));
            }
        }
        // Truncation is estimated from the next larger step.
        let numeric = match estimates.len() {
            0 => {
                skipped += 1;
                continue;
            }
            1 => estimates[0].0,
            _ => {
                let error = |j: usize| (estimates[j].0 - estimates[j - 1].0).abs() + estimates[j].1;
                let best = (1..estimates.len())
                    .min_by(|&a, &b| error(a).total_cmp(&error(b)))
                    .unwrap();
                estimates[best].0
            }
        };
        let err = relative_error(analytic[i], numeric);
        if err > worst || err.is_nan() {
            worst = if err.is_nan() { f64::INFINITY } else { err };
            worst_index = Some(i);
        }
    }
    GradCheckReport {
        max_relative_error: worst,
        worst_index,
        checked: x.len() - skipped,
        skipped,
        tolerance: tol,
        pass: worst <= tol,
    }
}

/// Checks a scalar function built on a [`Graph`] from one leaf.
pub fn grad_check(
    build: impl Fn(&mut Graph, Var) -> Var,
    point: &Tensor,
    h: f64,
    tol: f64,
) -> GradCheckReport {
    let mut g = Graph::new();
    let x = g.leaf(point.clone());
    let root = build(&mut g, x);
    let analytic = g.backward(root).expect("scalar root").get(x);

    let shape = point.shape().to_vec();
    let eval = |data: &[f64]| {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::new(shape.clone(), data.to_vec()).expect("same shape"));
        let root = build(&mut g, x);
        g.value(root).item()
    };
    compare_with_finite_differences(eval, point.data(), analytic.data(), h, tol)
}

/// Uniform in `±[0.1, 1.1]`, away from the kink of ReLU.
fn away_from_zero<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor {
    let mut t = Tensor::uniform(shape, 1.0, rng);
    t.data_mut()
        .iter_mut()
        .for_each(|x| *x += 0.1f64.copysign(*x));
    t
}

/// `Σ w ⊙ out` with fixed random `w`, so every output coordinate matters.
fn weighted_sum(g: &mut Graph, out: Var, w: &Tensor) -> Var {
    let w = g.constant(w.clone());
    let prod = g.mul(out, w).expect("weights match output");
    g.sum(prod)
}

type Op = fn(&mut Graph, Var, &[Tensor]) -> Var;
type Case = (&'static str, Vec<usize>, Vec<Tensor>, Op, Vec<usize>);

/// Every primitive, checked through each differentiable argument in turn.
/// Returns one report per op and argument.
pub fn check_primitives(seed: u64, h: f64, tol: f64) -> Vec<(&'static str, GradCheckReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = |shape: &[usize]| away_from_zero(shape, &mut rng);
    // (name, argument shape, other operands, op, output shape)
    let cases: Vec<Case> = vec![
        (
            "matmul.left",
            vec![3, 4],
            vec![t(&[4, 2])],
            |g, x, o| {
                let b = g.constant(o[0].clone());
                g.matmul(x, b).unwrap()
            },
            vec![3, 2],
        ),
        (
            "matmul.right",
            vec![4, 2],
            vec![t(&[3, 4])],
            |g, x, o| {
                let a = g.constant(o[0].clone());
                g.matmul(a, x).unwrap()
            },
            vec![3, 2],
        ),
        (
            "matmul_t.left",
            vec![3, 4],
            vec![t(&[2, 4])],
            |g, x, o| {
                let b = g.constant(o[0].clone());
                g.matmul_t(x, b).unwrap()
            },
            vec![3, 2],
        ),
        (
            "matmul_t.right",
            vec![2, 4],
            vec![t(&[3, 4])],
            |g, x, o| {
                let a = g.constant(o[0].clone());
                g.matmul_t(a, x).unwrap()
            },
            vec![3, 2],
        ),
        (
            "matvec.matrix",
            vec![3, 4],
            vec![t(&[4])],
            |g, x, o| {
                let v = g.constant(o[0].clone());
                g.matvec(x, v).unwrap()
            },
            vec![3],
        ),
        (
            "matvec.vector",
            vec![4],
            vec![t(&[3, 4])],
            |g, x, o| {
                let m = g.constant(o[0].clone());
                g.matvec(m, x).unwrap()
            },
            vec![3],
        ),
        (
            "vecmat.vector",
            vec![3],
            vec![t(&[3, 4])],
            |g, x, o| {
                let m = g.constant(o[0].clone());
                g.vecmat(x, m).unwrap()
            },
            vec![4],
        ),
        (
            "vecmat.matrix",
            vec![3, 4],
            vec![t(&[3])],
            |g, x, o| {
                let v = g.constant(o[0].clone());
                g.vecmat(v, x).unwrap()
            },
            vec![4],
        ),
        (
            "add",
            vec![5],
            vec![t(&[5])],
            |g, x, o| {
                let b = g.constant(o[0].clone());
                g.add(x, b).unwrap()
            },
            vec![5],
        ),
        (
            "sub.left",
            vec![5],
            vec![t(&[5])],
            |g, x, o| {
                let b = g.constant(o[0].clone());
                g.sub(x, b).unwrap()
            },
            vec![5],
        ),
        (
            "sub.right",
            vec![5],
            vec![t(&[5])],
            |g, x, o| {
                let a = g.constant(o[0].clone());
                g.sub(a, x).unwrap()
            },
            vec![5],
        ),
        (
            "mul",
            vec![2, 3],
            vec![t(&[2, 3])],
            |g, x, o| {
                let b = g.constant(o[0].clone());
                g.mul(x, b).unwrap()
            },
            vec![2, 3],
        ),
        (
            "mul.self",
            vec![4],
            vec![],
            |g, x, _| g.mul(x, x).unwrap(),
            vec![4],
        ),
        (
            "scale",
            vec![4],
            vec![],
            |g, x, _| g.scale(x, -2.5),
            vec![4],
        ),
        (
            "add_row.matrix",
            vec![3, 4],
            vec![t(&[4])],
            |g, x, o| {
                let v = g.constant(o[0].clone());
                g.add_row(x, v).unwrap()
            },
            vec![3, 4],
        ),
        (
            "add_row.vector",
            vec![4],
            vec![t(&[3, 4])],
            |g, x, o| {
                let m = g.constant(o[0].clone());
                g.add_row(m, x).unwrap()
            },
            vec![3, 4],
        ),
        ("tanh", vec![6], vec![], |g, x, _| g.tanh(x), vec![6]),
        ("relu", vec![6], vec![], |g, x, _| g.relu(x), vec![6]),
        ("sigmoid", vec![6], vec![], |g, x, _| g.sigmoid(x), vec![6]),
        (
            "concat",
            vec![3],
            vec![t(&[2])],
            |g, x, o| {
                let b = g.constant(o[0].clone());
                g.concat(&[b, x, x]).unwrap()
            },
            vec![8],
        ),
        (
            "slice",
            vec![6],
            vec![],
            |g, x, _| g.slice(x, 1, 3).unwrap(),
            vec![3],
        ),
        (
            "row",
            vec![3, 4],
            vec![],
            |g, x, _| g.row(x, 2).unwrap(),
            vec![4],
        ),
        (
            "stack_rows",
            vec![4],
            vec![t(&[4])],
            |g, x, o| {
                let b = g.constant(o[0].clone());
                g.stack_rows(&[x, b, x]).unwrap()
            },
            vec![3, 4],
        ),
        (
            "softmax",
            vec![5],
            vec![],
            |g, x, _| g.softmax(x).unwrap(),
            vec![5],
        ),
        (
            "log_softmax",
            vec![5],
            vec![],
            |g, x, _| g.log_softmax(x).unwrap(),
            vec![5],
        ),
        (
            "pick",
            vec![5],
            vec![],
            |g, x, _| g.pick(x, 3).unwrap(),
            vec![1],
        ),
        ("sum", vec![2, 3], vec![], |g, x, _| g.sum(x), vec![1]),
    ];
    cases
        .into_iter()
        .map(|(name, shape, others, op, out_shape)| {
            let point = t(&shape);
            let w = t(&out_shape);
            let report = grad_check(
                |g, x| {
                    let out = op(g, x, &others);
                    weighted_sum(g, out, &w)
                },
                &point,
                h,
                tol,
            );
            (name, report)
        })
        .collect()
}
