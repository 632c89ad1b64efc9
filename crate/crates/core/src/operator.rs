//! Monotone operators `V` and the structured families used by the
//! solvers: affine maps `V(z) = M z + q` (where the implicit stepper can
//! take a direct factorization path) and general evaluatable maps with
//! an optional Jacobian.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // f64 math methods in no_std builds
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{self, Matrix};
use crate::Error;

type EvalFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;
type JacFn = dyn Fn(&[f64]) -> Matrix + Send + Sync;
type GradientFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

enum Kind {
    /// `V(z) = M z + q`; the symmetric part of `M` is expected PSD.
    Affine { matrix: Matrix, offset: Vec<f64> },
    General { eval: Arc<EvalFn>, jacobian: Option<Arc<JacFn>> },
}

/// An evaluatable map `V : R^n -> R^n`, expected monotone
/// (`<V(u) - V(v), u - v> >= 0`). Monotonicity is not enforced at
/// construction — see [`monotonicity_probe`] for a randomized audit.
///
/// Operators are immutable after construction and safe to share across
/// threads.
pub struct Operator {
    dim: usize,
    kind: Kind,
}

impl core::fmt::Debug for Operator {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match &self.kind {
            Kind::Affine { .. } => write!(f, "Operator::Affine(dim={})", self.dim),
            Kind::General { jacobian, .. } => write!(
                f,
                "Operator::General(dim={}, jacobian={})",
                self.dim,
                jacobian.is_some()
            ),
        }
    }
}

impl Operator {
    /// Affine operator `V(z) = M z + q`.
    pub fn affine(matrix: Matrix, offset: Vec<f64>) -> Result<Self, Error> {
        if matrix.rows() != matrix.cols() {
            return Err(Error::InvalidInput(format!(
                "affine operator needs a square matrix, got {}x{}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        if offset.len() != matrix.rows() {
            return Err(Error::DimensionMismatch { expected: matrix.rows(), got: offset.len() });
        }
        let dim = matrix.rows();
        if dim == 0 {
            return Err(Error::InvalidInput("operator dimension must be >= 1".into()));
        }
        Ok(Operator { dim, kind: Kind::Affine { matrix, offset } })
    }

    /// General operator from an evaluation closure writing `V(z)` into
    /// its output slice.
    pub fn general<F>(dim: usize, eval: F) -> Result<Self, Error>
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        if dim == 0 {
            return Err(Error::InvalidInput("operator dimension must be >= 1".into()));
        }
        Ok(Operator { dim, kind: Kind::General { eval: Arc::new(eval), jacobian: None } })
    }

    /// Attaches an analytic Jacobian to a general operator. No-op for
    /// affine operators (their Jacobian is already exact).
    pub fn with_jacobian<F>(mut self, jac: F) -> Self
    where
        F: Fn(&[f64]) -> Matrix + Send + Sync + 'static,
    {
        if let Kind::General { jacobian, .. } = &mut self.kind {
            *jacobian = Some(Arc::new(jac));
        }
        self
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn is_affine(&self) -> bool {
        matches!(self.kind, Kind::Affine { .. })
    }

    /// The `(M, q)` pair of an affine operator.
    pub fn affine_parts(&self) -> Option<(&Matrix, &[f64])> {
        match &self.kind {
            Kind::Affine { matrix, offset } => Some((matrix, offset)),
            Kind::General { .. } => None,
        }
    }

    /// Evaluates `V(z)` into `out` without checks; `z` and `out` must
    /// already have the operator dimension. Used by the solver loops.
    pub(crate) fn eval_into(&self, z: &[f64], out: &mut [f64]) {
        match &self.kind {
            Kind::Affine { matrix, offset } => {
                matrix.matvec(z, out);
                for (o, q) in out.iter_mut().zip(offset) {
                    *o += q;
                }
            }
            Kind::General { eval, .. } => eval(z, out),
        }
    }

    /// Evaluates `V(z)`, checking the input dimension and that the
    /// output is finite.
    pub fn evaluate(&self, z: &[f64]) -> Result<Vec<f64>, Error> {
        if z.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: z.len() });
        }
        let mut out = vec![0.0; self.dim];
        self.eval_into(z, &mut out);
        if !linalg::all_finite(&out) {
            return Err(Error::NonFinite { context: "operator evaluation" });
        }
        Ok(out)
    }

    pub fn has_exact_jacobian(&self) -> bool {
        match &self.kind {
            Kind::Affine { .. } => true,
            Kind::General { jacobian, .. } => jacobian.is_some(),
        }
    }

    /// Jacobian of `V` at `z`: the matrix itself for affine operators,
    /// the attached closure when present, and forward finite differences
    /// with step `1e-7 * (1 + |z|)` otherwise.
    pub fn jacobian(&self, z: &[f64]) -> Result<Matrix, Error> {
        if z.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: z.len() });
        }
        match &self.kind {
            Kind::Affine { matrix, .. } => Ok(matrix.clone()),
            Kind::General { jacobian: Some(jac), .. } => Ok(jac(z)),
            Kind::General { eval, jacobian: None } => {
                let h = 1e-7 * (1.0 + linalg::norm(z));
                let mut base = vec![0.0; self.dim];
                eval(z, &mut base);
                let mut shifted = z.to_vec();
                let mut col = vec![0.0; self.dim];
                let mut jac = Matrix::zeros(self.dim, self.dim);
                for j in 0..self.dim {
                    shifted[j] = z[j] + h;
                    eval(&shifted, &mut col);
                    shifted[j] = z[j];
                    for i in 0..self.dim {
                        jac[(i, j)] = (col[i] - base[i]) / h;
                    }
                }
                if !(0..self.dim).all(|i| (0..self.dim).all(|j| jac[(i, j)].is_finite())) {
                    return Err(Error::NonFinite { context: "finite-difference Jacobian" });
                }
                Ok(jac)
            }
        }
    }
}

/// Solves `V(z) = 0` for an affine operator by a dense factorization.
pub fn zero_of_affine(op: &Operator) -> Result<Vec<f64>, Error> {
    let (m, q) = op
        .affine_parts()
        .ok_or_else(|| Error::InvalidInput("zero_of_affine requires an affine operator".into()))?;
    let rhs: Vec<f64> = q.iter().map(|v| -v).collect();
    linalg::solve_dense(m, &rhs)
}

/// Result of a randomized monotonicity audit.
#[derive(Debug, Clone)]
pub struct ProbeReport {
    /// Minimum of `<V(u) - V(v), u - v>` over the sampled pairs.
    pub min_inner_product: f64,
    pub trials: usize,
}

impl ProbeReport {
    /// Whether no probed pair undercut `-tol`.
    pub fn passes(&self, tol: f64) -> bool {
        self.min_inner_product >= -tol
    }
}

/// Samples `trials` random pairs `(u, v)` from the ball of radius 10 and
/// reports the minimum of `<V(u) - V(v), u - v>`. Deterministic for a
/// given seed.
pub fn monotonicity_probe(op: &Operator, trials: usize, seed: u64) -> Result<ProbeReport, Error> {
    if trials < 1 {
        return Err(Error::InvalidInput("monotonicity probe needs trials >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_inner = f64::INFINITY;
    for _ in 0..trials {
        let u = sample_ball(&mut rng, op.dimension(), 10.0);
        let v = sample_ball(&mut rng, op.dimension(), 10.0);
        let vu = op.evaluate(&u)?;
        let vv = op.evaluate(&v)?;
        let mut inner = 0.0;
        for i in 0..op.dimension() {
            inner += (vu[i] - vv[i]) * (u[i] - v[i]);
        }
        min_inner = min_inner.min(inner);
    }
    Ok(ProbeReport { min_inner_product: min_inner, trials })
}

/// Uniform sample from the ball of the given radius: Gaussian direction
/// (Box-Muller) scaled by `radius * u^{1/dim}`.
fn sample_ball(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> Vec<f64> {
    let mut dir = Vec::with_capacity(dim);
    while dir.len() < dim {
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        let mag = (-2.0 * u1.ln()).sqrt();
        dir.push(mag * (2.0 * core::f64::consts::PI * u2).cos());
        if dir.len() < dim {
            dir.push(mag * (2.0 * core::f64::consts::PI * u2).sin());
        }
    }
    let n = linalg::norm(&dir).max(f64::MIN_POSITIVE);
    let scale = radius * rng.gen_range(0.0f64..1.0).powf(1.0 / dim as f64) / n;
    dir.iter().map(|x| x * scale).collect()
}

/// Objective of a linearly constrained minimization problem.
///
/// The quadratic form stores `f(x) = x^T H x / 2 + c^T x + d` explicitly
/// so the induced operator can be assembled as affine; anything else
/// goes through gradient/value closures.
#[derive(Clone)]
pub enum Objective {
    Quadratic { hessian: Matrix, linear: Vec<f64>, constant: f64 },
    General { gradient: Arc<GradientFn>, value: Arc<ValueFn> },
}

impl core::fmt::Debug for Objective {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Objective::Quadratic { hessian, .. } => write!(f, "Objective::Quadratic(n={})", hessian.rows()),
            Objective::General { .. } => write!(f, "Objective::General"),
        }
    }
}

/// `min f(x) s.t. A x = b`, carried as the data of its primal-dual
/// operator `V(x, l) = (grad f(x) + A^T l, b - A x)`.
#[derive(Debug, Clone)]
pub struct LagrangianProblem {
    objective: Objective,
    constraint_matrix: Matrix,
    rhs: Vec<f64>,
    known_solution: Option<(Vec<f64>, Vec<f64>)>,
}

impl LagrangianProblem {
    pub fn new(objective: Objective, constraint_matrix: Matrix, rhs: Vec<f64>) -> Result<Self, Error> {
        let n = constraint_matrix.cols();
        let m = constraint_matrix.rows();
        if rhs.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: rhs.len() });
        }
        if let Objective::Quadratic { hessian, linear, .. } = &objective {
            if hessian.rows() != n || hessian.cols() != n {
                return Err(Error::InvalidInput(format!(
                    "hessian must be {n}x{n}, got {}x{}",
                    hessian.rows(),
                    hessian.cols()
                )));
            }
            if linear.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: linear.len() });
            }
        }
        Ok(LagrangianProblem { objective, constraint_matrix, rhs, known_solution: None })
    }

    /// Attaches a primal-dual solution, verifying both optimality
    /// residuals to `1e-12 * scale` at construction.
    pub fn with_known_solution(mut self, primal: Vec<f64>, dual: Vec<f64>) -> Result<Self, Error> {
        let n = self.primal_dim();
        let m = self.dual_dim();
        if primal.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: primal.len() });
        }
        if dual.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: dual.len() });
        }
        let tol = 1e-12 * self.scale();
        let mut stat = self.gradient(&primal);
        let mut at_dual = vec![0.0; n];
        self.constraint_matrix.matvec_transpose(&dual, &mut at_dual);
        for i in 0..n {
            stat[i] += at_dual[i];
        }
        let mut ax = vec![0.0; m];
        self.constraint_matrix.matvec(&primal, &mut ax);
        let feas: Vec<f64> = ax.iter().zip(&self.rhs).map(|(a, b)| a - b).collect();
        if linalg::norm(&stat) > tol {
            return Err(Error::InvalidInput(format!(
                "known solution violates stationarity: |grad f + A^T l| = {} > {tol}",
                linalg::norm(&stat)
            )));
        }
        if linalg::norm(&feas) > tol {
            return Err(Error::InvalidInput(format!(
                "known solution violates feasibility: |Ax - b| = {} > {tol}",
                linalg::norm(&feas)
            )));
        }
        self.known_solution = Some((primal, dual));
        Ok(self)
    }

    fn scale(&self) -> f64 {
        let mut s = self.constraint_matrix.max_abs().max(linalg::norm_inf(&self.rhs));
        if let Objective::Quadratic { hessian, linear, .. } = &self.objective {
            s = s.max(hessian.max_abs()).max(linalg::norm_inf(linear));
        }
        1.0 + s
    }

    pub fn primal_dim(&self) -> usize {
        self.constraint_matrix.cols()
    }

    pub fn dual_dim(&self) -> usize {
        self.constraint_matrix.rows()
    }

    pub fn constraint_matrix(&self) -> &Matrix {
        &self.constraint_matrix
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn known_solution(&self) -> Option<(&[f64], &[f64])> {
        self.known_solution.as_ref().map(|(x, l)| (x.as_slice(), l.as_slice()))
    }

    /// Known solution as one stacked vector `(x*, l*)`.
    pub fn known_solution_stacked(&self) -> Option<Vec<f64>> {
        self.known_solution.as_ref().map(|(x, l)| {
            let mut z = x.clone();
            z.extend_from_slice(l);
            z
        })
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        match &self.objective {
            Objective::Quadratic { hessian, linear, constant } => {
                let mut hx = vec![0.0; x.len()];
                hessian.matvec(x, &mut hx);
                0.5 * linalg::dot(x, &hx) + linalg::dot(linear, x) + constant
            }
            Objective::General { value, .. } => value(x),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match &self.objective {
            Objective::Quadratic { hessian, linear, .. } => {
                let mut g = vec![0.0; x.len()];
                hessian.matvec(x, &mut g);
                for (gi, ci) in g.iter_mut().zip(linear) {
                    *gi += ci;
                }
                g
            }
            Objective::General { gradient, .. } => gradient(x),
        }
    }

    /// The primal-dual operator `V(x, l) = (grad f(x) + A^T l, b - A x)`
    /// on the stacked space of dimension `n + m`. Quadratic objectives
    /// produce the affine form `M = [[H, A^T], [-A, 0]]`, `q = (c, b)`.
    pub fn operator(&self) -> Operator {
        let n = self.primal_dim();
        let m = self.dual_dim();
        match &self.objective {
            Objective::Quadratic { hessian, linear, .. } => {
                let at = self.constraint_matrix.transpose();
                let neg_a = Matrix::from_fn(m, n, |i, j| -self.constraint_matrix[(i, j)]);
                let big = Matrix::saddle_blocks(hessian, &at, &neg_a);
                let mut q = linear.clone();
                q.extend_from_slice(&self.rhs);
                Operator::affine(big, q).expect("validated shapes")
            }
            Objective::General { gradient, .. } => {
                let gradient = gradient.clone();
                let a = self.constraint_matrix.clone();
                let b = self.rhs.clone();
                Operator::general(n + m, move |z, out| {
                    let (x, l) = z.split_at(n);
                    let g = gradient(x);
                    a.matvec_transpose(l, &mut out[..n]);
                    for i in 0..n {
                        out[i] += g[i];
                    }
                    let mut ax = vec![0.0; m];
                    a.matvec(x, &mut ax);
                    for i in 0..m {
                        out[n + i] = b[i] - ax[i];
                    }
                })
                .expect("n + m >= 1")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn identity_operator_evaluates() {
        let op = Operator::affine(Matrix::identity(2), vec![0.0, 0.0]).unwrap();
        assert_eq!(op.evaluate(&[3.0, -1.0]).unwrap(), vec![3.0, -1.0]);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let op = Operator::affine(Matrix::identity(2), vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            op.evaluate(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn non_finite_output_is_rejected() {
        let op = Operator::general(1, |_, out| out[0] = f64::NAN).unwrap();
        assert!(matches!(op.evaluate(&[0.0]), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn lagrangian_operator_matches_definition() {
        let p = presets::example1();
        let op = p.operator();
        assert!(op.is_affine());
        assert_eq!(op.dimension(), 6);

        // independent assembly at a generic point
        let x = [0.3, -1.2, 0.7, 2.0];
        let l = [0.9, -0.4];
        let z: Vec<f64> = x.iter().chain(l.iter()).copied().collect();
        let v = op.evaluate(&z).unwrap();

        let g = p.gradient(&x);
        let a = p.constraint_matrix();
        for i in 0..4 {
            let mut expected = g[i];
            for j in 0..2 {
                expected += a[(j, i)] * l[j];
            }
            assert!((v[i] - expected).abs() < 1e-14, "row {i}: {} vs {expected}", v[i]);
        }
        for j in 0..2 {
            let mut ax = 0.0;
            for i in 0..4 {
                ax += a[(j, i)] * x[i];
            }
            let expected = p.rhs()[j] - ax;
            assert!((v[4 + j] - expected).abs() < 1e-14, "row {}: {} vs {expected}", 4 + j, v[4 + j]);
        }
    }

    #[test]
    fn example1_known_solution_is_a_zero() {
        let p = presets::example1();
        let z = p.known_solution_stacked().unwrap();
        let v = p.operator().evaluate(&z).unwrap();
        assert!(linalg::norm(&v) <= 1e-12);
    }

    #[test]
    fn degenerate_problem_has_zero_operator() {
        let p = LagrangianProblem::new(
            Objective::Quadratic {
                hessian: Matrix::zeros(2, 2),
                linear: vec![0.0, 0.0],
                constant: 0.0,
            },
            Matrix::zeros(1, 2),
            vec![0.0],
        )
        .unwrap();
        let op = p.operator();
        assert_eq!(op.evaluate(&[5.0, -3.0, 2.0]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn bad_known_solution_is_rejected() {
        let p = presets::example1();
        assert!(p.with_known_solution(vec![1.0, 1.0, 0.0, 0.0], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn probe_flags_anti_monotone() {
        let m = Matrix::from_fn(3, 3, |i, j| if i == j { -1.0 } else { 0.0 });
        let op = Operator::affine(m, vec![0.0; 3]).unwrap();
        let rep = monotonicity_probe(&op, 50, 7).unwrap();
        assert!(rep.min_inner_product < 0.0);
        assert!(!rep.passes(1e-10));
    }

    #[test]
    fn probe_accepts_identity() {
        let op = Operator::affine(Matrix::identity(4), vec![0.0; 4]).unwrap();
        let rep = monotonicity_probe(&op, 100, 42).unwrap();
        assert!(rep.min_inner_product >= 0.0);
    }

    #[test]
    fn probe_accepts_lagrangian_example() {
        let op = presets::example1().operator();
        let rep = monotonicity_probe(&op, 100, 3).unwrap();
        assert!(rep.min_inner_product >= 0.0, "min = {}", rep.min_inner_product);
    }

    #[test]
    fn probe_is_deterministic() {
        let op = presets::example1().operator();
        let a = monotonicity_probe(&op, 25, 11).unwrap();
        let b = monotonicity_probe(&op, 25, 11).unwrap();
        assert_eq!(a.min_inner_product, b.min_inner_product);
    }

    #[test]
    fn finite_difference_jacobian_close_to_exact() {
        let op = Operator::general(2, |z, out| {
            out[0] = z[0].powi(3) + z[1];
            out[1] = -z[0] + 2.0 * z[1];
        })
        .unwrap();
        let jac = op.jacobian(&[0.5, -1.0]).unwrap();
        assert!((jac[(0, 0)] - 0.75).abs() < 1e-5);
        assert!((jac[(0, 1)] - 1.0).abs() < 1e-6);
        assert!((jac[(1, 0)] + 1.0).abs() < 1e-6);
        assert!((jac[(1, 1)] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn zero_of_affine_solves() {
        let op = presets::example1().operator();
        let z = zero_of_affine(&op).unwrap();
        let expected = presets::example1().known_solution_stacked().unwrap();
        for (a, b) in z.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
