//! The two benchmark problems used by the experiment suite.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::Matrix;
use crate::operator::{LagrangianProblem, Objective, Operator};
use crate::Error;

/// Strongly convex quadratic with two linear constraints:
/// `min (x1-1)^2 + (x2-1)^2 + x3^2 + x4^2` subject to
/// `x1 - x2 - x3 = 0`, `x2 - x4 = 0`.
///
/// Known primal-dual solution: `x* = (0.8, 0.6, 0.2, 0.6)`,
/// `l* = (0.4, 1.2)`.
pub fn example1() -> LagrangianProblem {
    let hessian = Matrix::from_fn(4, 4, |i, j| if i == j { 2.0 } else { 0.0 });
    // (x1-1)^2 + (x2-1)^2 + x3^2 + x4^2 = x^T x - 2 x1 - 2 x2 + 2
    let objective = Objective::Quadratic {
        hessian,
        linear: vec![-2.0, -2.0, 0.0, 0.0],
        constant: 2.0,
    };
    let a = Matrix::from_rows(&[vec![1.0, -1.0, -1.0, 0.0], vec![0.0, 1.0, 0.0, -1.0]])
        .expect("fixed shape");
    LagrangianProblem::new(objective, a, vec![0.0, 0.0])
        .expect("consistent shapes")
        .with_known_solution(vec![0.8, 0.6, 0.2, 0.6], vec![0.4, 1.2])
        .expect("optimality residuals vanish")
}

/// The `n x n` anti-diagonal difference stencil of the saddle problem,
/// scaled by `1/4`: rows `i = 1..n-1` carry `-1` at column `n-i` and
/// `+1` at column `n-i+1` (1-indexed); row `n` carries `+1` at column 1.
pub fn example2_stencil(n: usize) -> Result<Matrix, Error> {
    if n < 2 {
        return Err(Error::InvalidInput("saddle example needs n >= 2".into()));
    }
    let mut a = Matrix::zeros(n, n);
    for i in 0..n - 1 {
        a[(i, n - 2 - i)] = -0.25;
        a[(i, n - 1 - i)] = 0.25;
    }
    a[(n - 1, 0)] = 0.25;
    Ok(a)
}

/// Bilinear-quadratic saddle problem on `R^n x R^n`:
/// `min_x max_y <x, Hx>/2 - <x, h> - <y, Ax - b>` with `H = 2 A^T A`,
/// `b = ones/4`, `h = e_n/4`. The induced monotone operator is
/// `V(x, y) = (Hx - h - A^T y, Ax - b)`, affine on `R^{2n}`.
pub fn example2(n: usize) -> Result<Operator, Error> {
    let a = example2_stencil(n)?;
    let at = a.transpose();
    let mut h_mat = at.matmul(&a);
    for i in 0..n {
        for j in 0..n {
            h_mat[(i, j)] *= 2.0;
        }
    }
    let neg_at = Matrix::from_fn(n, n, |i, j| -at[(i, j)]);
    let big = Matrix::saddle_blocks(&h_mat, &neg_at, &a);

    let mut q: Vec<f64> = vec![0.0; 2 * n];
    q[n - 1] = -0.25; // -h
    for i in n..2 * n {
        q[i] = -0.25; // -b
    }
    Operator::affine(big, q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use crate::operator::{monotonicity_probe, zero_of_affine};

    #[test]
    fn stencil_matches_displayed_5x5() {
        let a = example2_stencil(5).unwrap();
        let expected = [
            [0.0, 0.0, 0.0, -1.0, 1.0],
            [0.0, 0.0, -1.0, 1.0, 0.0],
            [0.0, -1.0, 1.0, 0.0, 0.0],
            [-1.0, 1.0, 0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0, 0.0, 0.0],
        ];
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(a[(i, j)], expected[i][j] / 4.0, "({i},{j})");
            }
        }
    }

    #[test]
    fn rejects_small_n() {
        assert!(example2(1).is_err());
        assert!(example2(0).is_err());
    }

    #[test]
    fn operator_at_origin() {
        // V(0, 0) = (-h, -b)
        let op = example2(4).unwrap();
        let v = op.evaluate(&[0.0; 8]).unwrap();
        assert_eq!(&v[..4], &[0.0, 0.0, 0.0, -0.25]);
        assert_eq!(&v[4..], &[-0.25; 4]);
    }

    #[test]
    fn skew_block_cancels_in_monotonicity() {
        let op = example2(10).unwrap();
        let rep = monotonicity_probe(&op, 200, 123).unwrap();
        assert!(rep.min_inner_product >= -1e-12, "min = {}", rep.min_inner_product);
    }

    #[test]
    fn direct_solve_finds_zero() {
        let op = example2(4).unwrap();
        let z = zero_of_affine(&op).unwrap();
        let v = op.evaluate(&z).unwrap();
        assert!(linalg::norm(&v) <= 1e-10, "residual = {}", linalg::norm(&v));
    }
}
