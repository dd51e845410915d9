//! Constrained minimum-sum-of-squares clustering.
//!
//! Objective `f(X) = (1/q) Σᵢ minⱼ ‖xʲ − aⁱ‖²` over centroids
//! `X = (x¹, …, x^ℓ)`, each centroid constrained to the same planar
//! [`Region`]. `f` is 1-upper-C², and the constraint enters as
//! `g = ι_{C^ℓ}` whose prox is the per-centroid projection, so the
//! feasibility test of the boosted step is the `Φ = +∞` rejection of the
//! generic linesearch.
//!
//! Ties in the nearest-centroid assignment go to the smallest index.

use std::sync::Arc;
use std::time::Duration;

use nalgebra::DVector;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec;
use crate::problem::{CompositeProblem, PrimalDualPoint, ProxFn, UpperC2};
use crate::prox::Region;
use crate::sampling::{run_rng, uniform_vector};
use crate::solver::{self, LinesearchParams, RunResult, SolverConfig, StepSizeRule, StopKind, StopRule};

/// Region asset used by the shipped clustering benchmark: a planar cover
/// with an excluded central rectangle plus two offshore islands.
pub const DEFAULT_REGION_JSON: &str = include_str!("../assets/region.json");

pub fn default_region() -> Region {
    Region::from_json(DEFAULT_REGION_JSON).expect("bundled region asset is valid")
}

/// Data points plus the centroid constraint.
#[derive(Debug, Clone)]
pub struct ClusterInstance {
    dim: usize,
    clusters: usize,
    /// Row-major `q × s`.
    points: Vec<f64>,
    region: Region,
}

impl ClusterInstance {
    pub fn new(points: Vec<DVector<f64>>, clusters: usize, region: Region) -> Result<Self> {
        let dim = region.dim();
        if clusters == 0 || points.len() < clusters {
            return Err(Error::InvalidParameter {
                name: "l",
                reason: format!("need 1 <= l <= q, got l={clusters}, q={}", points.len()),
            });
        }
        if let Some(p) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: p.len(),
            });
        }
        Ok(Self {
            dim,
            clusters,
            points: points.iter().flat_map(|p| p.iter().copied()).collect(),
            region,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn clusters(&self) -> usize {
        self.clusters
    }

    pub fn num_points(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    /// Dimension of the flattened centroid matrix.
    pub fn n(&self) -> usize {
        self.dim * self.clusters
    }

    pub fn centroid<'a>(&self, x: &'a DVector<f64>, j: usize) -> &'a [f64] {
        &x.as_slice()[j * self.dim..(j + 1) * self.dim]
    }

    pub fn is_feasible(&self, x: &DVector<f64>) -> bool {
        (0..self.clusters).all(|j| self.region.contains(&DVector::from_column_slice(self.centroid(x, j))))
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

/// Index of the nearest centroid (smallest index on ties) and its squared
/// distance.
fn nearest(a: &[f64], x: &DVector<f64>, dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in x.as_slice().chunks_exact(dim).enumerate() {
        let d = sq_dist(c, a);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// `ω(X) = minⱼ ‖xʲ − a‖²`.
pub fn omega(a: &[f64], x: &DVector<f64>) -> f64 {
    nearest(a, x, a.len()).1
}

/// `2(xʲ − a)` in the block of the nearest centroid, zero elsewhere.
pub fn omega_subgradient(a: &[f64], x: &DVector<f64>) -> DVector<f64> {
    let dim = a.len();
    let (j, _) = nearest(a, x, dim);
    let mut v = DVector::zeros(x.len());
    for t in 0..dim {
        v[j * dim + t] = 2.0 * (x[j * dim + t] - a[t]);
    }
    v
}

pub fn cluster_objective(inst: &ClusterInstance, x: &DVector<f64>) -> f64 {
    let total: f64 = (0..inst.num_points()).map(|i| nearest(inst.point(i), x, inst.dim).1).sum();
    total / inst.num_points() as f64
}

/// Mean of the per-point subgradients. Assignments are computed in
/// parallel; the accumulation runs in point order so the result is
/// bitwise reproducible.
pub fn cluster_subgradient(inst: &ClusterInstance, x: &DVector<f64>) -> DVector<f64> {
    let assignment = exec::map_indexed(inst.num_points(), |i| nearest(inst.point(i), x, inst.dim).0);
    let mut v = DVector::zeros(x.len());
    for (i, j) in assignment.into_iter().enumerate() {
        let a = inst.point(i);
        for t in 0..inst.dim {
            v[j * inst.dim + t] += 2.0 * (x[j * inst.dim + t] - a[t]);
        }
    }
    v / inst.num_points() as f64
}

/// Sequential reference for [`cluster_subgradient`].
pub fn cluster_subgradient_sequential(inst: &ClusterInstance, x: &DVector<f64>) -> DVector<f64> {
    let mut v = DVector::zeros(x.len());
    for i in 0..inst.num_points() {
        v += omega_subgradient(inst.point(i), x);
    }
    v / inst.num_points() as f64
}

#[derive(Debug, Clone)]
struct ClusterObjective {
    inst: Arc<ClusterInstance>,
}

impl UpperC2 for ClusterObjective {
    fn value(&self, x: &DVector<f64>) -> f64 {
        cluster_objective(&self.inst, x)
    }

    fn subgradient(&self, x: &DVector<f64>) -> DVector<f64> {
        cluster_subgradient(&self.inst, x)
    }

    fn kappa(&self) -> f64 {
        1.0
    }
}

/// `ι_{C^ℓ}` with per-centroid projection as prox.
#[derive(Debug, Clone)]
struct CentroidConstraint {
    inst: Arc<ClusterInstance>,
}

impl ProxFn for CentroidConstraint {
    fn value(&self, x: &DVector<f64>) -> f64 {
        if self.inst.is_feasible(x) {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn prox(&self, z: &DVector<f64>, _gamma: f64) -> DVector<f64> {
        let dim = self.inst.dim;
        let mut out = DVector::zeros(z.len());
        for j in 0..self.inst.clusters {
            let block = DVector::from_column_slice(&z.as_slice()[j * dim..(j + 1) * dim]);
            out.rows_mut(j * dim, dim).copy_from(&self.inst.region.project(&block));
        }
        out
    }
}

pub fn make_clustering_problem(inst: Arc<ClusterInstance>) -> CompositeProblem {
    let n = inst.n();
    let bb = inst.region.bounding_box();
    let lo = DVector::from_iterator(n, (0..n).map(|i| bb.lo()[i % inst.dim]));
    let hi = DVector::from_iterator(n, (0..n).map(|i| bb.hi()[i % inst.dim]));
    CompositeProblem::new(
        n,
        Arc::new(ClusterObjective { inst: inst.clone() }),
        Arc::new(CentroidConstraint { inst }),
        vec![],
    )
    .with_working_box(crate::prox::AxisBox::new(lo, hi).expect("ordered bounds"))
    .expect("matching dimension")
}

/// `γ = 0.9 · ½`, relative objective gap `10⁻³`.
pub fn clustering_config(boosted: bool, max_iters: usize) -> SolverConfig {
    let linesearch = if boosted {
        LinesearchParams::default()
    } else {
        LinesearchParams::disabled()
    };
    SolverConfig::new(
        linesearch,
        StepSizeRule {
            eta: 0.9,
            ..StepSizeRule::default()
        },
        StopRule::new(StopKind::RelVarphiGap, 1e-3, max_iters),
    )
}

pub fn run_clustering(inst: Arc<ClusterInstance>, x0: DVector<f64>, cfg: &SolverConfig) -> Result<RunResult> {
    let prob = make_clustering_problem(inst);
    solver::run(&prob, PrimalDualPoint::primal(x0), cfg)
}

/// `q` points from a mixture of `components` isotropic Gaussians whose means
/// are uniform in the region's bounding box.
pub fn synthetic_instance(seed: u64, q: usize, clusters: usize, components: usize, region: Region) -> Result<ClusterInstance> {
    let mut rng = run_rng(seed, 0);
    let bb = region.bounding_box();
    let dim = region.dim();
    let extent = (bb.hi() - bb.lo()).max();
    let spread = Normal::new(0.0, 0.06 * extent).expect("positive sd");
    let means: Vec<DVector<f64>> = (0..components.max(1))
        .map(|_| {
            DVector::from_iterator(
                dim,
                (0..dim).map(|t| uniform_vector(&mut rng, 1, bb.lo()[t], bb.hi()[t])[0]),
            )
        })
        .collect();
    let points = (0..q)
        .map(|i| {
            let m = &means[i % means.len()];
            m.map(|c| c + spread.sample(&mut rng))
        })
        .collect();
    ClusterInstance::new(points, clusters, region)
}

/// Feasible starting centroids: uniform draws in the region's bounding box,
/// projected onto the region.
pub fn random_centroids(inst: &ClusterInstance, seed: u64) -> DVector<f64> {
    let mut rng = run_rng(seed, 1);
    let bb = inst.region.bounding_box();
    let mut x = DVector::zeros(inst.n());
    for j in 0..inst.clusters {
        let raw = DVector::from_iterator(
            inst.dim,
            (0..inst.dim).map(|t| uniform_vector(&mut rng, 1, bb.lo()[t], bb.hi()[t])[0]),
        );
        x.rows_mut(j * inst.dim, inst.dim).copy_from(&inst.region.project(&raw));
    }
    x
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterRunSummary {
    pub algorithm: &'static str,
    pub iterations: usize,
    pub final_f: f64,
    #[serde(skip)]
    pub elapsed: Duration,
    #[serde(skip)]
    pub result: RunResult,
}

#[derive(Debug, Clone)]
pub struct PairedClusterRun {
    pub seed: u64,
    pub bdsa: ClusterRunSummary,
    pub gppa: ClusterRunSummary,
}

/// BDSA until the relative gap drops below `10⁻³`; then GPPA from the same
/// start until it reaches BDSA's final value or its own gap drops below
/// `10⁻³`.
pub fn paired_run(inst: Arc<ClusterInstance>, x0: DVector<f64>, seed: u64, max_iters: usize) -> Result<PairedClusterRun> {
    paired_run_with(inst, x0, seed, clustering_config(true, max_iters), clustering_config(false, max_iters))
}

pub fn paired_run_with(
    inst: Arc<ClusterInstance>,
    x0: DVector<f64>,
    seed: u64,
    bdsa_cfg: SolverConfig,
    mut gppa_cfg: SolverConfig,
) -> Result<PairedClusterRun> {
    let bdsa = run_clustering(inst.clone(), x0.clone(), &bdsa_cfg)?;
    gppa_cfg.stop.target_varphi = Some(bdsa.varphi);
    let gppa = run_clustering(inst, x0, &gppa_cfg)?;
    let summary = |algorithm, r: RunResult| ClusterRunSummary {
        algorithm,
        iterations: r.iterations,
        final_f: r.varphi,
        elapsed: r.elapsed,
        result: r,
    };
    Ok(PairedClusterRun {
        seed,
        bdsa: summary("bdsa", bdsa),
        gppa: summary("gppa", gppa),
    })
}

/// Parses `x,y` rows (header optional) into points.
pub fn parse_points_csv(text: &str) -> Result<Vec<DVector<f64>>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(v) if v.len() == 2 => out.push(DVector::from_vec(v)),
            Err(_) if lineno == 0 => continue,
            _ => return Err(Error::Parse(format!("points csv line {}: `{line}`", lineno + 1))),
        }
    }
    if out.is_empty() {
        return Err(Error::Parse("points csv has no rows".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prox::{AxisBox, Shape};
    use nalgebra::dvector;

    fn square_region() -> Region {
        Region::single(Shape::Box(AxisBox::cube(2, -10.0, 10.0).unwrap()))
    }

    #[test]
    fn objective_examples() {
        let inst = ClusterInstance::new(vec![dvector![0.0, 0.0], dvector![2.0, 0.0]], 1, square_region()).unwrap();
        assert_eq!(cluster_objective(&inst, &dvector![1.0, 0.0]), 1.0);
        assert_eq!(cluster_subgradient(&inst, &dvector![1.0, 0.0]), dvector![0.0, 0.0]);
        let inst2 = ClusterInstance::new(vec![dvector![0.0, 0.0], dvector![2.0, 0.0]], 2, square_region()).unwrap();
        assert_eq!(cluster_objective(&inst2, &dvector![0.0, 0.0, 2.0, 0.0]), 0.0);
        assert_eq!(cluster_subgradient(&inst2, &dvector![0.0, 0.0, 2.0, 0.0]), DVector::zeros(4));
        let single = ClusterInstance::new(vec![dvector![1.0, -1.0]], 1, square_region()).unwrap();
        assert_eq!(cluster_subgradient(&single, &dvector![3.0, 2.0]), dvector![4.0, 6.0]);
    }

    #[test]
    fn omega_subgradient_examples() {
        let x = dvector![1.0, 0.0, 3.0, 4.0];
        assert_eq!(omega_subgradient(&[0.0, 0.0], &x), dvector![2.0, 0.0, 0.0, 0.0]);
        assert_eq!(omega_subgradient(&[1.0, 0.0], &x), DVector::zeros(4));
        // equidistant from both centroids
        let tie = dvector![-1.0, 0.0, 1.0, 0.0];
        assert_eq!(omega_subgradient(&[0.0, 0.0], &tie), dvector![-2.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn instance_validation() {
        assert!(ClusterInstance::new(vec![dvector![0.0, 0.0]], 2, square_region()).is_err());
        assert!(ClusterInstance::new(vec![dvector![0.0, 0.0]], 0, square_region()).is_err());
        assert!(ClusterInstance::new(vec![dvector![0.0, 0.0, 1.0]], 1, square_region()).is_err());
    }

    #[test]
    fn synthetic_instance_is_deterministic() {
        let a = synthetic_instance(5, 300, 4, 4, default_region()).unwrap();
        let b = synthetic_instance(5, 300, 4, 4, default_region()).unwrap();
        assert_eq!(a.points, b.points);
        assert_eq!(a.num_points(), 300);
        let c = synthetic_instance(6, 300, 4, 4, default_region()).unwrap();
        assert_ne!(a.points, c.points);
    }

    #[test]
    fn default_region_has_hole() {
        let r = default_region();
        assert!(!r.contains(&dvector![5.0, 4.0]));
        assert!(r.contains(&dvector![5.0, 2.0]));
        assert!(r.contains(&dvector![13.5, 6.5]));
        assert!(!r.contains(&dvector![12.5, 7.5]));
    }

    #[test]
    fn points_csv_parsing() {
        let pts = parse_points_csv("x,y\n1,2\n3.5, -4\n\n").unwrap();
        assert_eq!(pts, vec![dvector![1.0, 2.0], dvector![3.5, -4.0]]);
        assert_eq!(parse_points_csv("0,0\n1,1").unwrap().len(), 2);
        assert!(parse_points_csv("x,y\n1,2,3").is_err());
        assert!(parse_points_csv("x,y\n").is_err());
        assert!(parse_points_csv("1,2\nfoo,3").is_err());
    }

    #[test]
    fn gamma_is_forty_five_hundredths() {
        let inst = Arc::new(synthetic_instance(1, 50, 3, 3, default_region()).unwrap());
        let prob = make_clustering_problem(inst);
        let g = solver::gamma_rule(&prob, &[], &clustering_config(true, 10).step).unwrap();
        assert!((g - 0.45).abs() < 1e-15);
    }
}
