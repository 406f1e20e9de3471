//! Mixing matrices for inter-node communication.
//!
//! Static gossip graphs are circulant and therefore doubly stochastic. The
//! server-worker architecture is modelled as a random row-stochastic matrix
//! that relays information from the workers sampled at the previous round to
//! the workers sampled at the current round.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};

/// Tolerance used for every stochasticity check.
pub const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixKind {
    Static,
    RandomDraw,
}

/// A square mixing matrix `W` acting on stacked node variables as `W * X`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMatrix {
    entries: DMatrix<f64>,
    kind: MatrixKind,
}

impl WeightMatrix {
    /// Wraps a square matrix with entries in `[0, 1]` (up to
    /// [`STOCHASTIC_TOL`]). Stochasticity is not
    /// enforced here; use [`validate_stochasticity`].
    pub fn from_entries(entries: DMatrix<f64>, kind: MatrixKind) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.nrows() == 0 {
            return Err(Error::Dimension {
                expected: "non-empty square matrix".into(),
                got: format!("{}x{}", entries.nrows(), entries.ncols()),
            });
        }
        let range = -STOCHASTIC_TOL..=1.0 + STOCHASTIC_TOL;
        if let Some(bad) = entries.iter().find(|v| !range.contains(*v)) {
            return Err(Error::Topology(format!("entry {bad} outside [0, 1]")));
        }
        Ok(Self { entries, kind })
    }

    /// The averaging matrix `J = 11ᵀ/n`.
    pub fn averaging(n: usize) -> Self {
        Self {
            entries: DMatrix::from_element(n, n, 1.0 / n as f64),
            kind: MatrixKind::Static,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            entries: DMatrix::identity(n, n),
            kind: MatrixKind::Static,
        }
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    /// Returns `W * x` for stacked node variables `x` (one row per node).
    pub fn mix(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        &self.entries * x
    }

    /// Indices `j` with `w_ij != 0`, i.e. the in-neighbours of node `i`
    /// together with `i` itself when it keeps a self weight.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries
            .row(i)
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, w)| *w != 0.0)
            .collect::<Vec<_>>()
            .into_iter()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Complete,
    CirculantExponential,
    Ring,
    ServerWorker,
}

impl Family {
    pub fn is_static(self) -> bool {
        !matches!(self, Family::ServerWorker)
    }

    fn name(self) -> &'static str {
        match self {
            Family::Complete => "complete",
            Family::CirculantExponential => "exponential",
            Family::Ring => "ring",
            Family::ServerWorker => "server-worker",
        }
    }
}

/// Graph family plus its size parameters.
///
/// `degree` is the out-neighbour count of static families and `s` the number
/// of workers sampled per round for the server-worker family.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TopologySpec {
    pub family: Family,
    pub n: usize,
    pub degree: usize,
    pub s: usize,
}

impl TopologySpec {
    pub fn complete(n: usize) -> Self {
        Self {
            family: Family::Complete,
            n,
            degree: n.saturating_sub(1),
            s: n,
        }
    }

    pub fn exponential(n: usize, degree: usize) -> Self {
        Self {
            family: Family::CirculantExponential,
            n,
            degree,
            s: n,
        }
    }

    pub fn ring(n: usize) -> Self {
        Self {
            family: Family::Ring,
            n,
            degree: 2.min(n.saturating_sub(1)),
            s: n,
        }
    }

    pub fn server_worker(n: usize, s: usize) -> Self {
        Self {
            family: Family::ServerWorker,
            n,
            degree: 0,
            s,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 && self.family != Family::ServerWorker {
            return Err(Error::Topology(format!("need n >= 2, got {}", self.n)));
        }
        match self.family {
            Family::Complete => Ok(()),
            Family::CirculantExponential if self.degree < 1 || self.degree >= self.n => {
                Err(Error::Topology(format!(
                    "degree {} outside [1, {}]",
                    self.degree,
                    self.n - 1
                )))
            }
            Family::Ring if !(1..=2).contains(&self.degree) || self.degree >= self.n => {
                Err(Error::Topology(format!(
                    "ring degree must be 1 or 2 and below n, got {}",
                    self.degree
                )))
            }
            Family::ServerWorker if self.n < 1 || self.s < 1 || self.s > self.n => Err(
                Error::Topology(format!("sample size {} outside [1, {}]", self.s, self.n)),
            ),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for TopologySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            Family::Complete => write!(f, "complete:n={}", self.n),
            Family::CirculantExponential | Family::Ring => write!(
                f,
                "{}:n={},degree={}",
                self.family.name(),
                self.n,
                self.degree
            ),
            Family::ServerWorker => write!(f, "server-worker:n={},s={}", self.n, self.s),
        }
    }
}

/// Parses `family:key=value,...`, e.g. `exponential:n=32,degree=3` or
/// `server-worker:n=32,s=4`.
impl FromStr for TopologySpec {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let (family, params) = text.split_once(':').unwrap_or((text, ""));
        let family = match family.trim() {
            "complete" => Family::Complete,
            "exponential" | "exp" | "circulant-exponential" => Family::CirculantExponential,
            "ring" => Family::Ring,
            "server-worker" | "sw" => Family::ServerWorker,
            other => return Err(Error::Topology(format!("unknown family `{other}`"))),
        };
        let (mut n, mut degree, mut s) = (None, None, None);
        for kv in params.split(',').filter(|kv| !kv.trim().is_empty()) {
            let (key, value) = kv
                .split_once('=')
                .ok_or_else(|| Error::Topology(format!("expected key=value, got `{kv}`")))?;
            let value: usize = value
                .trim()
                .parse()
                .map_err(|_| Error::Topology(format!("`{key}` is not a count: `{value}`")))?;
            match key.trim() {
                "n" => n = Some(value),
                "degree" => degree = Some(value),
                "s" => s = Some(value),
                other => return Err(Error::Topology(format!("unknown parameter `{other}`"))),
            }
        }
        let n = n.ok_or_else(|| Error::Topology("missing `n`".into()))?;
        let spec = match family {
            Family::Complete => TopologySpec::complete(n),
            Family::Ring => TopologySpec {
                degree: degree.unwrap_or(2.min(n.saturating_sub(1))),
                ..TopologySpec::ring(n)
            },
            Family::CirculantExponential => TopologySpec::exponential(
                n,
                degree.ok_or_else(|| Error::Topology("missing `degree`".into()))?,
            ),
            Family::ServerWorker => TopologySpec::server_worker(
                n,
                s.ok_or_else(|| Error::Topology("missing `s`".into()))?,
            ),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Out-neighbour offsets of the circulant exponential graph: `2^j mod n`,
/// falling back to the smallest unused positive offset on collisions.
pub fn exponential_offsets(n: usize, degree: usize) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(degree);
    let mut j = 0u32;
    while offsets.len() < degree {
        let candidate = if j < usize::BITS - 1 {
            (1usize << j) % n
        } else {
            0
        };
        j += 1;
        let offset = if candidate != 0 && !offsets.contains(&candidate) {
            candidate
        } else {
            (1..n)
                .find(|o| !offsets.contains(o))
                .expect("degree < n leaves a free offset")
        };
        offsets.push(offset);
    }
    offsets
}

fn circulant(n: usize, offsets: &[usize]) -> DMatrix<f64> {
    let w = 1.0 / (offsets.len() + 1) as f64;
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = w;
        for &o in offsets {
            m[(i, (i + o) % n)] = w;
        }
    }
    m
}

/// Builds the doubly stochastic matrix of a static family.
pub fn build_static_matrix(spec: &TopologySpec) -> Result<WeightMatrix> {
    spec.validate()?;
    let n = spec.n;
    let entries = match spec.family {
        Family::Complete => return Ok(WeightMatrix::averaging(n)),
        Family::CirculantExponential => circulant(n, &exponential_offsets(n, spec.degree)),
        Family::Ring if spec.degree == 1 => circulant(n, &[1]),
        Family::Ring => circulant(n, &[1, n - 1]),
        Family::ServerWorker => {
            return Err(Error::Topology(
                "server-worker topology is random; use build_server_worker_matrix".into(),
            ))
        }
    };
    Ok(WeightMatrix {
        entries,
        kind: MatrixKind::Static,
    })
}

fn check_subset(n: usize, set: &[usize], what: &str) -> Result<()> {
    if set.is_empty() {
        return Err(Error::Topology(format!("{what} worker set is empty")));
    }
    if let Some(&bad) = set.iter().find(|&&i| i >= n) {
        return Err(Error::NodeOutOfRange { node: bad, n });
    }
    Ok(())
}

/// Equivalent mixing matrix of one server-worker round:
/// `W = (1/s) e_cur e_prevᵀ + I − diag(e_cur)` with `s = |prev|`.
///
/// Rows of nodes outside `cur` are identity rows.
pub fn build_server_worker_matrix(n: usize, prev: &[usize], cur: &[usize]) -> Result<WeightMatrix> {
    check_subset(n, prev, "previous")?;
    check_subset(n, cur, "current")?;
    let mut in_prev = vec![false; n];
    prev.iter().for_each(|&j| in_prev[j] = true);
    let mut in_cur = vec![false; n];
    cur.iter().for_each(|&i| in_cur[i] = true);
    let s = in_prev.iter().filter(|b| **b).count() as f64;

    let mut m = DMatrix::identity(n, n);
    for i in (0..n).filter(|&i| in_cur[i]) {
        for j in 0..n {
            m[(i, j)] = if in_prev[j] { 1.0 / s } else { 0.0 };
        }
    }
    Ok(WeightMatrix {
        entries: m,
        kind: MatrixKind::RandomDraw,
    })
}

/// `E[W_r] = (s/n) J + ((n − s)/n) I` under uniform sampling without replacement.
pub fn expected_server_worker_matrix(n: usize, s: usize) -> Result<WeightMatrix> {
    if n == 0 || s == 0 || s > n {
        return Err(Error::Topology(format!("sample size {s} outside [1, {n}]")));
    }
    let (nf, sf) = (n as f64, s as f64);
    let mut m = DMatrix::from_element(n, n, sf / nf / nf);
    for i in 0..n {
        m[(i, i)] += (nf - sf) / nf;
    }
    Ok(WeightMatrix {
        entries: m,
        kind: MatrixKind::Static,
    })
}

/// Draws `s` distinct workers uniformly at random, sorted ascending.
pub fn sample_workers<R: Rng + ?Sized>(n: usize, s: usize, rng: &mut R) -> Vec<usize> {
    let mut picked = index::sample(rng, n, s).into_vec();
    picked.sort_unstable();
    picked
}

/// A source of (possibly random) mixing matrices, one per round.
pub trait MatrixSampler {
    fn n(&self) -> usize;
    fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> WeightMatrix;
}

impl MatrixSampler for WeightMatrix {
    fn n(&self) -> usize {
        WeightMatrix::n(self)
    }

    fn sample<R: Rng + ?Sized>(&mut self, _rng: &mut R) -> WeightMatrix {
        self.clone()
    }
}

/// Produces consecutive server-worker matrices, carrying the previous
/// round's sampled set forward.
#[derive(Clone, Debug)]
pub struct ServerWorkerSampler {
    n: usize,
    s: usize,
    prev: Option<Vec<usize>>,
}

impl ServerWorkerSampler {
    pub fn new(n: usize, s: usize) -> Result<Self> {
        TopologySpec::server_worker(n, s).validate()?;
        Ok(Self { n, s, prev: None })
    }
}

impl MatrixSampler for ServerWorkerSampler {
    fn n(&self) -> usize {
        self.n
    }

    fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> WeightMatrix {
        let prev = match self.prev.take() {
            Some(p) => p,
            None => sample_workers(self.n, self.s, rng),
        };
        let cur = sample_workers(self.n, self.s, rng);
        let w = build_server_worker_matrix(self.n, &prev, &cur)
            .expect("sampled sets are valid by construction");
        self.prev = Some(cur);
        w
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StochasticityReport {
    pub row_ok: bool,
    pub col_ok: bool,
    pub max_row_err: f64,
    pub max_col_err: f64,
}

pub fn validate_stochasticity(w: &WeightMatrix) -> StochasticityReport {
    let m = &w.entries;
    let max_row_err = m
        .row_iter()
        .map(|r| (r.sum() - 1.0).abs())
        .fold(0.0, f64::max);
    let max_col_err = m
        .column_iter()
        .map(|c| (c.sum() - 1.0).abs())
        .fold(0.0, f64::max);
    StochasticityReport {
        row_ok: max_row_err <= STOCHASTIC_TOL,
        col_ok: max_col_err <= STOCHASTIC_TOL,
        max_row_err,
        max_col_err,
    }
}

/// `‖W − J‖₂²`, the largest squared singular value of `W − J`.
pub fn contraction_factor(w: &WeightMatrix) -> Result<f64> {
    let report = validate_stochasticity(w);
    if !report.row_ok {
        return Err(Error::NotStochastic {
            max_row_err: report.max_row_err,
        });
    }
    Ok(spectral_norm_sq_minus_avg(&w.entries))
}

fn spectral_norm_sq_minus_avg(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let centered = m - DMatrix::from_element(n, n, 1.0 / n as f64);
    let sigma = centered
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max);
    sigma * sigma
}

/// Monte-Carlo estimate of `E[‖W_r − J‖₂²]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RhoEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub trials: usize,
}

pub fn estimate_contraction_factor<S, R>(
    sampler: &mut S,
    trials: usize,
    rng: &mut R,
) -> Result<RhoEstimate>
where
    S: MatrixSampler,
    R: Rng + ?Sized,
{
    if trials == 0 {
        return Err(Error::Topology("need at least one trial".into()));
    }
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..trials {
        let w = sampler.sample(rng);
        let v = contraction_factor(&w)?;
        sum += v;
        sum_sq += v * v;
    }
    let t = trials as f64;
    let mean = sum / t;
    let var = if trials > 1 {
        ((sum_sq - t * mean * mean) / (t - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(RhoEstimate {
        mean,
        std_err: (var / t).sqrt(),
        trials,
    })
}

/// Random doubly stochastic matrix: a random convex combination of the
/// identity and `k` uniformly drawn permutation matrices.
pub fn random_doubly_stochastic<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> WeightMatrix {
    let mut weights: Vec<f64> = (0..=k).map(|_| rng.random::<f64>() + 0.05).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let mut m = DMatrix::identity(n, n) * weights[0];
    for &w in &weights[1..] {
        let perm = index::sample(rng, n, n).into_vec();
        for (i, &j) in perm.iter().enumerate() {
            m[(i, j)] += w;
        }
    }
    WeightMatrix {
        entries: m,
        kind: MatrixKind::Static,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::keyed_stream;

    #[test]
    fn complete_is_averaging() {
        let w = build_static_matrix(&TopologySpec::complete(4)).unwrap();
        assert!(w.entries().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn exponential_degree_three_offsets() {
        assert_eq!(exponential_offsets(32, 3), vec![1, 2, 4]);
        let w = build_static_matrix(&TopologySpec::exponential(32, 3)).unwrap();
        for i in 0..32 {
            let nz: Vec<(usize, f64)> = w.neighbors(i).collect();
            assert_eq!(nz.len(), 4);
            for (j, v) in nz {
                assert_eq!(v, 0.25);
                assert!([0, 1, 2, 4].contains(&((j + 32 - i) % 32)));
            }
        }
        let rep = validate_stochasticity(&w);
        assert!(rep.row_ok && rep.col_ok);
    }

    #[test]
    fn exponential_collision_falls_back_to_smallest_free_offset() {
        let offsets = exponential_offsets(32, 15);
        assert_eq!(
            offsets,
            vec![1, 2, 4, 8, 16, 3, 5, 6, 7, 9, 10, 11, 12, 13, 14]
        );
        let w = build_static_matrix(&TopologySpec::exponential(32, 15)).unwrap();
        for i in 0..32 {
            let row: Vec<f64> = w.neighbors(i).map(|(_, v)| v).collect();
            assert_eq!(row.len(), 16);
            assert!(row.iter().all(|&v| v == 1.0 / 16.0));
        }
    }

    #[test]
    fn ring_is_doubly_stochastic() {
        for spec in [TopologySpec::ring(5), TopologySpec::ring(2)] {
            let w = build_static_matrix(&spec).unwrap();
            let rep = validate_stochasticity(&w);
            assert!(rep.row_ok && rep.col_ok, "{spec}");
        }
    }

    #[test]
    fn static_builder_rejects_bad_specs() {
        assert!(build_static_matrix(&TopologySpec::exponential(8, 0)).is_err());
        assert!(build_static_matrix(&TopologySpec::exponential(8, 8)).is_err());
        assert!(build_static_matrix(&TopologySpec::complete(1)).is_err());
        assert!(build_static_matrix(&TopologySpec::server_worker(8, 2)).is_err());
    }

    #[test]
    fn server_worker_full_participation_is_averaging() {
        let w = build_server_worker_matrix(2, &[0, 1], &[0, 1]).unwrap();
        assert!(w.entries().iter().all(|&v| v == 0.5));
        assert_eq!(w.kind(), MatrixKind::RandomDraw);
    }

    #[test]
    fn server_worker_relay_row() {
        let w = build_server_worker_matrix(3, &[0], &[1]).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[1., 0., 0., 1., 0., 0., 0., 0., 1.]);
        assert_eq!(w.entries(), &expected);
        let rep = validate_stochasticity(&w);
        assert!(rep.row_ok);
        assert!(!rep.col_ok);
    }

    #[test]
    fn server_worker_rejects_bad_sets() {
        assert!(build_server_worker_matrix(3, &[], &[1]).is_err());
        assert!(build_server_worker_matrix(3, &[0], &[]).is_err());
        assert!(matches!(
            build_server_worker_matrix(3, &[0], &[3]),
            Err(Error::NodeOutOfRange { node: 3, n: 3 })
        ));
    }

    #[test]
    fn server_worker_rows_sum_to_one() {
        let mut rng = keyed_stream(11, 0);
        let mut sampler = ServerWorkerSampler::new(32, 4).unwrap();
        let mut saw_col_violation = false;
        for _ in 0..50 {
            let w = sampler.sample(&mut rng);
            let rep = validate_stochasticity(&w);
            assert!(rep.row_ok);
            saw_col_violation |= !rep.col_ok;
        }
        assert!(saw_col_violation);
    }

    #[test]
    fn expected_matrix_values() {
        let w = expected_server_worker_matrix(32, 32).unwrap();
        assert!(w.entries().iter().all(|&v| (v - 1.0 / 32.0).abs() < 1e-15));
        let w = expected_server_worker_matrix(32, 4).unwrap();
        let off = 4.0 / 32.0 / 32.0;
        assert!((w.weight(0, 0) - (off + 28.0 / 32.0)).abs() < 1e-15);
        assert!((w.weight(0, 1) - off).abs() < 1e-15);
        let w = expected_server_worker_matrix(2, 1).unwrap();
        assert_eq!(
            w.entries(),
            &DMatrix::from_row_slice(2, 2, &[0.75, 0.25, 0.25, 0.75])
        );
        assert!(expected_server_worker_matrix(4, 0).is_err());
        assert!(expected_server_worker_matrix(4, 5).is_err());
    }

    #[test]
    fn contraction_of_trivial_matrices() {
        assert!(
            contraction_factor(&WeightMatrix::averaging(8))
                .unwrap()
                .abs()
                < 1e-24
        );
        let rho = contraction_factor(&WeightMatrix::identity(4)).unwrap();
        assert!((rho - 1.0).abs() < 1e-12);
    }

    #[test]
    fn contraction_rejects_non_stochastic() {
        let mut m = DMatrix::from_element(3, 3, 1.0 / 3.0);
        m.row_mut(1).scale_mut(2.0);
        let w = WeightMatrix::from_entries(m, MatrixKind::Static).unwrap();
        assert!(!validate_stochasticity(&w).row_ok);
        assert!(matches!(
            contraction_factor(&w),
            Err(Error::NotStochastic { .. })
        ));
    }

    #[test]
    fn rho_estimate_of_static_matrix_has_zero_spread() {
        let mut w = build_static_matrix(&TopologySpec::exponential(16, 2)).unwrap();
        let exact = contraction_factor(&w).unwrap();
        let est = estimate_contraction_factor(&mut w, 5, &mut keyed_stream(0, 0)).unwrap();
        assert!((est.mean - exact).abs() < 1e-12);
        assert!(est.std_err < 1e-12);
    }

    #[test]
    fn random_doubly_stochastic_is_doubly_stochastic() {
        let mut rng = keyed_stream(5, 5);
        for n in 1..12 {
            let w = random_doubly_stochastic(n, 3, &mut rng);
            let rep = validate_stochasticity(&w);
            assert!(rep.row_ok && rep.col_ok);
        }
    }

    #[test]
    fn parse_topology_specs() {
        let s: TopologySpec = "complete:n=32".parse().unwrap();
        assert_eq!(s, TopologySpec::complete(32));
        let s: TopologySpec = "exponential:n=32,degree=3".parse().unwrap();
        assert_eq!(s, TopologySpec::exponential(32, 3));
        let s: TopologySpec = "server-worker:n=32,s=4".parse().unwrap();
        assert_eq!(s, TopologySpec::server_worker(32, 4));
        assert_eq!(s.to_string().parse::<TopologySpec>().unwrap(), s);
        assert!("exponential:n=32".parse::<TopologySpec>().is_err());
        assert!("torus:n=4".parse::<TopologySpec>().is_err());
        assert!("server-worker:n=4,s=5".parse::<TopologySpec>().is_err());
    }
}
