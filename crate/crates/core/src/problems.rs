//! Objective oracles: per-node full and noisy gradients.
//!
//! Noise follows the additive model `∇f_i(x) + δ` with `δ ~ N(0, σ² I)`,
//! one draw of `p` normals per gradient evaluation.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::rng::{problem_stream, NodeStreams};

/// Curvature and noise constants reported by an oracle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleConstants {
    /// Strong-convexity modulus (0 when the problem is nonconvex).
    pub mu: f64,
    /// Analytic smoothness upper bound over all nodes.
    pub l: f64,
    /// Per-coordinate gradient-noise variance.
    pub sigma2: f64,
}

pub trait GradOracle: Sync {
    fn num_nodes(&self) -> usize;

    fn dim(&self) -> usize;

    fn constants(&self) -> OracleConstants;

    /// `f_i(x)` without bounds checks.
    fn local_value(&self, i: usize, x: &[f64]) -> f64;

    /// Writes `∇f_i(x)` into `out` without bounds checks.
    fn local_gradient(&self, i: usize, x: &[f64], out: &mut [f64]);

    /// Global minimiser when it is known in closed form.
    fn optimum(&self) -> Option<&DVector<f64>> {
        None
    }

    fn check_node(&self, i: usize) -> Result<()> {
        let n = self.num_nodes();
        if i >= n {
            return Err(Error::NodeOutOfRange { node: i, n });
        }
        Ok(())
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                expected: format!("{}-vector", self.dim()),
                got: format!("{}-vector", x.len()),
            });
        }
        Ok(())
    }

    fn full_gradient(&self, i: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check_node(i)?;
        self.check_point(x)?;
        let mut out = vec![0.0; self.dim()];
        self.local_gradient(i, x, &mut out);
        Ok(out)
    }

    /// Full gradient plus one draw of `N(0, σ² I)` from `rng`.
    fn noisy_gradient<R: Rng + ?Sized>(&self, i: usize, x: &[f64], rng: &mut R) -> Result<Vec<f64>>
    where
        Self: Sized,
    {
        self.check_node(i)?;
        self.check_point(x)?;
        let mut out = vec![0.0; self.dim()];
        noisy_gradient_into(self, i, x, rng, &mut out);
        Ok(out)
    }

    /// `f(x) = (1/n) Σ_i f_i(x)`.
    fn value(&self, x: &[f64]) -> f64 {
        let n = self.num_nodes();
        (0..n).map(|i| self.local_value(i, x)).sum::<f64>() / n as f64
    }

    /// `∇f(x) = (1/n) Σ_i ∇f_i(x)`.
    fn global_gradient(&self, x: &[f64]) -> Vec<f64> {
        let n = self.num_nodes();
        let mut acc = vec![0.0; self.dim()];
        let mut buf = vec![0.0; self.dim()];
        for i in 0..n {
            self.local_gradient(i, x, &mut buf);
            acc.iter_mut().zip(&buf).for_each(|(a, b)| *a += b);
        }
        acc.iter_mut().for_each(|a| *a /= n as f64);
        acc
    }
}

pub(crate) fn noisy_gradient_into<O, R>(
    oracle: &O,
    i: usize,
    x: &[f64],
    rng: &mut R,
    out: &mut [f64],
) where
    O: GradOracle + ?Sized,
    R: Rng + ?Sized,
{
    oracle.local_gradient(i, x, out);
    let sigma = oracle.constants().sigma2.sqrt();
    for v in out.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *v += sigma * z;
    }
}

/// Stack of full gradients `∇F(X)`, row `i` evaluated at row `i` of `x`.
pub fn stacked_gradients<O: GradOracle + ?Sized>(oracle: &O, x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, p) = x.shape();
    let mut out = DMatrix::zeros(n, p);
    let mut xi = vec![0.0; p];
    let mut gi = vec![0.0; p];
    for i in 0..n {
        xi.iter_mut()
            .zip(x.row(i).iter())
            .for_each(|(a, b)| *a = *b);
        oracle.local_gradient(i, &xi, &mut gi);
        out.row_mut(i)
            .iter_mut()
            .zip(&gi)
            .for_each(|(a, b)| *a = *b);
    }
    out
}

/// Stack of stochastic gradients `G`, one draw from each node's stream.
pub fn stacked_noisy_gradients<O: GradOracle + ?Sized>(
    oracle: &O,
    x: &DMatrix<f64>,
    streams: &mut NodeStreams,
) -> DMatrix<f64> {
    let (n, p) = x.shape();
    let mut out = DMatrix::zeros(n, p);
    let mut xi = vec![0.0; p];
    let mut gi = vec![0.0; p];
    for i in 0..n {
        xi.iter_mut()
            .zip(x.row(i).iter())
            .for_each(|(a, b)| *a = *b);
        noisy_gradient_into(oracle, i, &xi, streams.node(i), &mut gi);
        out.row_mut(i)
            .iter_mut()
            .zip(&gi)
            .for_each(|(a, b)| *a = *b);
    }
    out
}

/// Distributed ridge regression with heterogeneous nodes:
/// `f_i(x) = (θ_iᵀx − d̄_i)² + (μ/2)‖x‖²`.
#[derive(Clone, Debug)]
pub struct RidgeProblem {
    theta: DMatrix<f64>,
    dbar: DVector<f64>,
    mu: f64,
    sigma2: f64,
    l: f64,
    optimum: DVector<f64>,
}

/// How ridge feature vectors are drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum FeatureScaling {
    /// Entries i.i.d. uniform on `[0, 1]`.
    #[default]
    Raw,
    /// Uniform draws rescaled so that `‖θ_i‖ = norm`. Entries stay in
    /// `[0, 1]` for `norm ≤ 1`.
    Normalized { norm: f64 },
}

/// Draws a ridge instance with `θ_i ~ U[0,1]^p` and `d̄_i ~ U[0,1]`.
pub fn make_ridge(n: usize, p: usize, mu: f64, sigma2: f64, seed: u64) -> Result<RidgeProblem> {
    make_ridge_with(n, p, mu, sigma2, FeatureScaling::Raw, seed)
}

pub fn make_ridge_with(
    n: usize,
    p: usize,
    mu: f64,
    sigma2: f64,
    scaling: FeatureScaling,
    seed: u64,
) -> Result<RidgeProblem> {
    if n == 0 || p == 0 {
        return Err(Error::Problem(format!("need n, p >= 1, got n={n}, p={p}")));
    }
    if let FeatureScaling::Normalized { norm } = scaling {
        if !(norm > 0.0 && norm <= 1.0) {
            return Err(Error::Problem(format!(
                "feature norm {norm} outside (0, 1]"
            )));
        }
    }
    let mut rng = problem_stream(seed);
    let unit = Uniform::new_inclusive(0.0, 1.0).expect("valid range");
    let mut theta = DMatrix::from_fn(n, p, |_, _| unit.sample(&mut rng));
    let dbar = DVector::from_fn(n, |_, _| unit.sample(&mut rng));
    if let FeatureScaling::Normalized { norm } = scaling {
        for mut row in theta.row_iter_mut() {
            let len = row.norm();
            if len > 0.0 {
                row.scale_mut(norm / len);
            }
        }
    }
    RidgeProblem::new(theta, dbar, mu, sigma2)
}

impl RidgeProblem {
    pub fn new(theta: DMatrix<f64>, dbar: DVector<f64>, mu: f64, sigma2: f64) -> Result<Self> {
        if theta.nrows() == 0 || theta.ncols() == 0 || theta.nrows() != dbar.len() {
            return Err(Error::Dimension {
                expected: "n×p features with n targets".into(),
                got: format!("{}x{} and {}", theta.nrows(), theta.ncols(), dbar.len()),
            });
        }
        if !(mu > 0.0) {
            return Err(Error::Problem(format!("mu must be positive, got {mu}")));
        }
        if !(sigma2 >= 0.0) {
            return Err(Error::Problem(format!("sigma2 must be >= 0, got {sigma2}")));
        }
        let l = theta
            .row_iter()
            .map(|r| 2.0 * r.norm_squared() + mu)
            .fold(0.0, f64::max);
        let optimum = solve_ridge(&theta, &dbar, mu)?;
        Ok(Self {
            theta,
            dbar,
            mu,
            sigma2,
            l,
            optimum,
        })
    }

    pub fn theta(&self) -> &DMatrix<f64> {
        &self.theta
    }

    pub fn dbar(&self) -> &DVector<f64> {
        &self.dbar
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Same data with a different noise level.
    pub fn with_sigma2(&self, sigma2: f64) -> Self {
        Self {
            sigma2,
            ..self.clone()
        }
    }
}

/// Solves `((2/n) Σ θ_i θ_iᵀ + μI) x = (2/n) Σ θ_i d̄_i`.
fn solve_ridge(theta: &DMatrix<f64>, dbar: &DVector<f64>, mu: f64) -> Result<DVector<f64>> {
    let n = theta.nrows() as f64;
    let p = theta.ncols();
    let a = theta.transpose() * theta * (2.0 / n) + DMatrix::identity(p, p) * mu;
    let b = theta.transpose() * dbar * (2.0 / n);
    let x = a.clone().lu().solve(&b).ok_or(Error::Singular)?;
    let residual = (&a * &x - &b).norm();
    if !residual.is_finite() || residual > 1e-10 {
        return Err(Error::Singular);
    }
    Ok(x)
}

pub fn optimum(problem: &RidgeProblem) -> &DVector<f64> {
    &problem.optimum
}

impl GradOracle for RidgeProblem {
    fn num_nodes(&self) -> usize {
        self.theta.nrows()
    }

    fn dim(&self) -> usize {
        self.theta.ncols()
    }

    fn constants(&self) -> OracleConstants {
        OracleConstants {
            mu: self.mu,
            l: self.l,
            sigma2: self.sigma2,
        }
    }

    fn local_value(&self, i: usize, x: &[f64]) -> f64 {
        let th = self.theta.row(i);
        let r = th.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - self.dbar[i];
        r * r + 0.5 * self.mu * x.iter().map(|v| v * v).sum::<f64>()
    }

    fn local_gradient(&self, i: usize, x: &[f64], out: &mut [f64]) {
        let th = self.theta.row(i);
        let r = th.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - self.dbar[i];
        for ((o, t), xk) in out.iter_mut().zip(th.iter()).zip(x) {
            *o = 2.0 * t * r + self.mu * xk;
        }
    }

    fn optimum(&self) -> Option<&DVector<f64>> {
        Some(&self.optimum)
    }
}

/// Logistic regression with the bounded nonconvex penalty
/// `λ Σ_k x_k² / (1 + x_k²)` and label/feature skew across nodes.
#[derive(Clone, Debug)]
pub struct NonconvexProblem {
    /// Per-node `m × p` feature matrices.
    features: Vec<DMatrix<f64>>,
    /// Per-node `±1` labels.
    labels: Vec<DVector<f64>>,
    lambda: f64,
    sigma2: f64,
    l: f64,
}

pub fn make_nonconvex(
    n: usize,
    p: usize,
    samples: usize,
    lambda: f64,
    sigma2: f64,
    seed: u64,
) -> Result<NonconvexProblem> {
    if n == 0 || p == 0 || samples == 0 {
        return Err(Error::Problem(format!(
            "need n, p, samples >= 1, got n={n}, p={p}, samples={samples}"
        )));
    }
    let mut rng = problem_stream(seed);
    let gauss = Normal::new(0.0, 1.0).expect("valid normal");
    let class_mean = DVector::from_fn(p, |_, _| gauss.sample(&mut rng) / (p as f64).sqrt());
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        // Per-node share of positive labels and feature shift.
        let pos_share = rng.random_range(0.1..0.9);
        let shift = DVector::from_fn(p, |_, _| 0.5 * gauss.sample(&mut rng));
        let mut a = DMatrix::zeros(samples, p);
        let mut b = DVector::zeros(samples);
        for j in 0..samples {
            let label = if rng.random::<f64>() < pos_share {
                1.0
            } else {
                -1.0
            };
            b[j] = label;
            for k in 0..p {
                a[(j, k)] = label * class_mean[k] + shift[k] + gauss.sample(&mut rng);
            }
        }
        features.push(a);
        labels.push(b);
    }
    NonconvexProblem::new(features, labels, lambda, sigma2)
}

impl NonconvexProblem {
    pub fn new(
        features: Vec<DMatrix<f64>>,
        labels: Vec<DVector<f64>>,
        lambda: f64,
        sigma2: f64,
    ) -> Result<Self> {
        if features.is_empty() || features.len() != labels.len() {
            return Err(Error::Problem(
                "one feature matrix and label vector per node".into(),
            ));
        }
        let p = features[0].ncols();
        for (a, b) in features.iter().zip(&labels) {
            if a.ncols() != p || a.nrows() != b.len() || a.nrows() == 0 {
                return Err(Error::Dimension {
                    expected: format!("m×{p} features with m labels"),
                    got: format!("{}x{} and {}", a.nrows(), a.ncols(), b.len()),
                });
            }
        }
        if !(lambda >= 0.0) {
            return Err(Error::Problem(format!("lambda must be >= 0, got {lambda}")));
        }
        if !(sigma2 >= 0.0) {
            return Err(Error::Problem(format!("sigma2 must be >= 0, got {sigma2}")));
        }
        // Logistic Hessian is bounded by (1/4m) AᵀA; the penalty's second
        // derivative is bounded by 2λ.
        let l = features
            .iter()
            .map(|a| a.norm_squared() / (4.0 * a.nrows() as f64) + 2.0 * lambda)
            .fold(0.0, f64::max);
        Ok(Self {
            features,
            labels,
            lambda,
            sigma2,
            l,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn with_sigma2(&self, sigma2: f64) -> Self {
        Self {
            sigma2,
            ..self.clone()
        }
    }
}

/// `log(1 + exp(t))` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl GradOracle for NonconvexProblem {
    fn num_nodes(&self) -> usize {
        self.features.len()
    }

    fn dim(&self) -> usize {
        self.features[0].ncols()
    }

    fn constants(&self) -> OracleConstants {
        OracleConstants {
            mu: 0.0,
            l: self.l,
            sigma2: self.sigma2,
        }
    }

    fn local_value(&self, i: usize, x: &[f64]) -> f64 {
        let a = &self.features[i];
        let b = &self.labels[i];
        let m = a.nrows();
        let loss: f64 = (0..m)
            .map(|j| {
                let margin: f64 = a.row(j).iter().zip(x).map(|(u, v)| u * v).sum();
                softplus(-b[j] * margin)
            })
            .sum::<f64>()
            / m as f64;
        let penalty: f64 = x.iter().map(|v| v * v / (1.0 + v * v)).sum();
        loss + self.lambda * penalty
    }

    fn local_gradient(&self, i: usize, x: &[f64], out: &mut [f64]) {
        let a = &self.features[i];
        let b = &self.labels[i];
        let m = a.nrows();
        for (o, v) in out.iter_mut().zip(x) {
            let d = 1.0 + v * v;
            *o = self.lambda * 2.0 * v / (d * d);
        }
        for j in 0..m {
            let row = a.row(j);
            let margin: f64 = row.iter().zip(x).map(|(u, v)| u * v).sum();
            let coef = -b[j] * sigmoid(-b[j] * margin) / m as f64;
            out.iter_mut()
                .zip(row.iter())
                .for_each(|(o, u)| *o += coef * u);
        }
    }
}
