//! Generalized Heron problems: minimize `Σᵢ (wᵢ/2) d²(Ψᵢ(x), Cᵢ)` over a
//! ball `C₀`.
//!
//! Convex targets use the Asplund split `½d²(w, C) = ½‖w‖² − Asp_C(w)` with
//! the quadratic map `Ψ(x) = (xᵀQ₁x, …, xᵀQ_mx)`. The nonconvex variant
//! keeps `½d²(Qx, C)` whole as the upper-C² part and has no dual blocks.

use std::sync::Arc;
use std::time::Duration;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::problem::{CompositeProblem, ConjugateProx, DualBlock, PrimalDualPoint, ProxFn, SmoothMap, UpperC2};
use crate::prox::{asplund_value, prox_scaled_asplund_conjugate, AxisBox, Ball, Region, Shape};
use crate::sampling::{run_rng, uniform_in_ball, uniform_vector, unit_vector, RunRng};
use crate::solver::{self, LinesearchParams, RunResult, SolverConfig, StepSizeRule, StopKind, StopRule};

pub const BALL_RADIUS: f64 = 5.0;
pub const BOX_EDGE: f64 = 2.0;
pub const CENTER_NORM_RANGE: (f64, f64) = (7.0, 10.0);
pub const NONCONVEX_TARGET_BOXES: usize = 5;

const POWER_ITER_TOL: f64 = 1e-10;
const POWER_ITER_MAX: usize = 100_000;

/// Largest singular value of `q` by power iteration on `qᵀq`.
pub fn spectral_norm(q: &DMatrix<f64>) -> f64 {
    let n = q.ncols();
    if n == 0 || q.nrows() == 0 || q.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    // Deterministic start with no special alignment to coordinate axes.
    let mut v = DVector::from_iterator(n, (0..n).map(|i| 1.0 + 0.1 * ((i as f64) * 0.7548776662).fract()));
    v /= v.norm();
    let mut sigma_sq = 0.0;
    for _ in 0..POWER_ITER_MAX {
        let w = q.tr_mul(&(q * &v));
        let next = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        if (next - sigma_sq).abs() <= POWER_ITER_TOL * next.abs() {
            sigma_sq = next;
            break;
        }
        sigma_sq = next;
    }
    sigma_sq.sqrt()
}

/// Largest singular value of the vertical stack `[diag(d₁); …; diag(d_m)]`.
/// Its Gram matrix is `diag(Σⱼ dⱼ²)`, so the norm is the largest column norm.
pub fn stacked_diagonal_norm(diagonals: &[DVector<f64>]) -> f64 {
    let Some(n) = diagonals.first().map(|d| d.len()) else {
        return 0.0;
    };
    (0..n)
        .map(|k| diagonals.iter().map(|d| d[k] * d[k]).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// Quadratic-map instance with box targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeronQuadratic {
    pub n: usize,
    pub m: usize,
    /// Diagonals of `Q₁, …, Q_m`.
    pub q_diagonals: Vec<Vec<f64>>,
    pub radius: f64,
    /// Centres of the boxes `C₁, …, C_p` in `ℝᵐ`.
    pub centers: Vec<Vec<f64>>,
    pub edge: f64,
    pub weights: Vec<f64>,
}

impl HeronQuadratic {
    pub fn p(&self) -> usize {
        self.centers.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 || self.p() == 0 {
            return Err(Error::InvalidShape(format!("n={}, m={}, p={} must be positive", self.n, self.m, self.p())));
        }
        if self.q_diagonals.len() != self.m || self.q_diagonals.iter().any(|d| d.len() != self.n) {
            return Err(Error::InvalidShape("expected m diagonals of length n".into()));
        }
        if self.centers.iter().any(|c| c.len() != self.m) {
            return Err(Error::InvalidShape("box centres must lie in R^m".into()));
        }
        if self.weights.len() != self.p() || self.weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::InvalidShape("need one positive weight per target".into()));
        }
        if !(self.radius > 0.0 && self.edge >= 0.0) {
            return Err(Error::InvalidShape("radius must be positive, edge nonnegative".into()));
        }
        Ok(())
    }

    pub fn diagonals(&self) -> Vec<DVector<f64>> {
        self.q_diagonals.iter().map(|d| DVector::from_column_slice(d)).collect()
    }

    pub fn boxes(&self) -> Vec<AxisBox> {
        self.centers
            .iter()
            .map(|c| AxisBox::centered(&DVector::from_column_slice(c), self.edge / 2.0).expect("nonnegative edge"))
            .collect()
    }

    pub fn ball(&self) -> Ball {
        Ball::origin(self.n, self.radius).expect("positive radius")
    }

    /// Random instance: `Qⱼ` diagonals uniform in `(−1, 1)`, box centres
    /// along uniform directions with norm uniform in `[7, 10]`.
    pub fn random(rng: &mut RunRng, n: usize, m: usize, p: usize) -> Self {
        let q_diagonals = (0..m).map(|_| open_unit_entries(rng, n)).collect();
        let centers = random_centers(rng, m, p);
        Self {
            n,
            m,
            q_diagonals,
            radius: BALL_RADIUS,
            centers,
            edge: BOX_EDGE,
            weights: vec![1.0; p],
        }
    }
}

fn open_unit_entries(rng: &mut RunRng, len: usize) -> Vec<f64> {
    // Uniform on [−1, 1] hits the endpoints with probability zero in
    // practice; clamp away from them anyway.
    uniform_vector(rng, len, -1.0, 1.0)
        .iter()
        .map(|v| v.clamp(-1.0 + f64::EPSILON, 1.0 - f64::EPSILON))
        .collect()
}

fn random_centers(rng: &mut RunRng, m: usize, count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            let dir = unit_vector(rng, m);
            let r = uniform_vector(rng, 1, CENTER_NORM_RANGE.0, CENTER_NORM_RANGE.1)[0];
            (dir * r).iter().copied().collect()
        })
        .collect()
}

/// `(L_Ψ, L_f, κ)` for the quadratic instance.
pub fn heron_lipschitz(inst: &HeronQuadratic) -> (f64, f64, f64) {
    let diags = inst.diagonals();
    let rho = stacked_diagonal_norm(&diags);
    let block_sq: f64 = diags.iter().map(|d| d.amax().powi(2)).sum();
    let l_psi = 2.0 * rho;
    let l_f = 6.0 * inst.p() as f64 * inst.radius * inst.radius * rho * block_sq.sqrt();
    (l_psi, l_f, l_f / 2.0)
}

/// `Ψ(x) = (xᵀQ₁x, …, xᵀQ_mx)` with diagonal `Qⱼ`.
#[derive(Debug, Clone)]
pub struct DiagonalQuadraticMap {
    diagonals: Vec<DVector<f64>>,
    lipschitz: f64,
}

impl DiagonalQuadraticMap {
    pub fn new(diagonals: Vec<DVector<f64>>) -> Self {
        let lipschitz = 2.0 * stacked_diagonal_norm(&diagonals);
        Self { diagonals, lipschitz }
    }
}

impl SmoothMap for DiagonalQuadraticMap {
    fn out_dim(&self) -> usize {
        self.diagonals.len()
    }

    fn value(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.diagonals.len(),
            self.diagonals.iter().map(|d| d.iter().zip(x.iter()).map(|(a, v)| a * v * v).sum::<f64>()),
        )
    }

    fn grad_apply(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(x.len());
        for (d, yj) in self.diagonals.iter().zip(y.iter()) {
            out += d.component_mul(x) * (2.0 * yj);
        }
        out
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
}

/// `f(x) = (Σwᵢ/2)‖Ψ(x)‖²` with gradient `(Σwᵢ)∇Ψ(x)Ψ(x)`.
#[derive(Debug, Clone)]
struct QuadraticPenalty {
    psi: Arc<DiagonalQuadraticMap>,
    weight_sum: f64,
    kappa: f64,
}

impl UpperC2 for QuadraticPenalty {
    fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * self.weight_sum * self.psi.value(x).norm_squared()
    }

    fn subgradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.psi.grad_apply(x, &self.psi.value(x)) * self.weight_sum
    }

    fn kappa(&self) -> f64 {
        self.kappa
    }
}

/// Relative slack on the ball boundary so that projected points test as
/// members despite rounding.
const BALL_MEMBERSHIP_SLACK: f64 = 1e-12;

/// `ι_B` for a ball `B`.
#[derive(Debug, Clone)]
pub struct BallIndicator {
    ball: Ball,
}

impl BallIndicator {
    pub fn new(ball: Ball) -> Self {
        Self { ball }
    }
}

impl ProxFn for BallIndicator {
    fn value(&self, x: &DVector<f64>) -> f64 {
        if (x - self.ball.center()).norm() <= self.ball.radius() * (1.0 + BALL_MEMBERSHIP_SLACK) {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn prox(&self, z: &DVector<f64>, _gamma: f64) -> DVector<f64> {
        self.ball.project(z)
    }
}

/// `h = w·Asp_C` for a box `C`; `h* = ι_{wC} + ‖·‖²/(2w)`.
#[derive(Debug, Clone)]
pub struct ScaledAsplund {
    target: AxisBox,
    region: Region,
    weight: f64,
}

impl ScaledAsplund {
    pub fn new(target: AxisBox, weight: f64) -> Self {
        Self {
            region: Region::single(Shape::Box(target.clone())),
            target,
            weight,
        }
    }
}

impl ConjugateProx for ScaledAsplund {
    fn dim(&self) -> usize {
        self.target.dim()
    }

    fn value(&self, w: &DVector<f64>) -> f64 {
        self.weight * asplund_value(w, &self.region)
    }

    fn conjugate_value(&self, y: &DVector<f64>) -> f64 {
        let u = y / self.weight;
        let inside = u
            .iter()
            .zip(self.target.lo().iter().zip(self.target.hi().iter()))
            .all(|(v, (l, h))| *v >= l - 1e-12 * l.abs().max(1.0) && *v <= h + 1e-12 * h.abs().max(1.0));
        if inside {
            y.norm_squared() / (2.0 * self.weight)
        } else {
            f64::INFINITY
        }
    }

    fn conj_prox(&self, z: &DVector<f64>, mu: f64) -> DVector<f64> {
        prox_scaled_asplund_conjugate(z, mu, self.weight, &self.target)
    }
}

pub fn make_heron_convex(inst: &HeronQuadratic) -> Result<CompositeProblem> {
    inst.validate()?;
    let (_, _, kappa) = heron_lipschitz(inst);
    let psi = Arc::new(DiagonalQuadraticMap::new(inst.diagonals()));
    let f = QuadraticPenalty {
        psi: psi.clone(),
        weight_sum: inst.weights.iter().sum(),
        kappa,
    };
    let blocks = inst
        .boxes()
        .into_iter()
        .zip(&inst.weights)
        .map(|(b, w)| DualBlock::new(Arc::new(ScaledAsplund::new(b, *w)), psi.clone()))
        .collect::<Result<Vec<_>>>()?;
    CompositeProblem::new(inst.n, Arc::new(f), Arc::new(BallIndicator::new(inst.ball())), blocks)
        .with_working_box(AxisBox::cube(inst.n, -inst.radius, inst.radius)?)
}

/// `yᵢ⁰ = wᵢ P_{Cᵢ}(Ψ(x⁰))`, the Asplund gradient at `Ψ(x⁰)`.
pub fn heron_dual_init(inst: &HeronQuadratic, x0: &DVector<f64>) -> Vec<DVector<f64>> {
    let psi = DiagonalQuadraticMap::new(inst.diagonals()).value(x0);
    inst.boxes()
        .iter()
        .zip(&inst.weights)
        .map(|(b, w)| b.project(&psi) * *w)
        .collect()
}

/// `Σᵢ (wᵢ/2) d²(Ψ(x), Cᵢ) + ι_{C₀}(x)`, evaluated directly.
pub fn heron_convex_objective(inst: &HeronQuadratic, x: &DVector<f64>) -> f64 {
    if BallIndicator::new(inst.ball()).value(x).is_infinite() {
        return f64::INFINITY;
    }
    let psi = DiagonalQuadraticMap::new(inst.diagonals()).value(x);
    inst.boxes()
        .iter()
        .zip(&inst.weights)
        .map(|(b, w)| 0.5 * w * (b.project(&psi) - &psi).norm_squared())
        .sum()
}

/// Linear-map instance with a union-of-boxes target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeronNonconvex {
    pub n: usize,
    pub m: usize,
    /// Row-major `m × n`.
    pub q: Vec<f64>,
    pub radius: f64,
    pub centers: Vec<Vec<f64>>,
    pub edge: f64,
}

impl HeronNonconvex {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 || self.q.len() != self.n * self.m {
            return Err(Error::InvalidShape("Q must be m x n with n, m > 0".into()));
        }
        if self.centers.is_empty() || self.centers.iter().any(|c| c.len() != self.m) {
            return Err(Error::InvalidShape("target boxes must lie in R^m".into()));
        }
        if !(self.radius > 0.0 && self.edge >= 0.0) {
            return Err(Error::InvalidShape("radius must be positive, edge nonnegative".into()));
        }
        Ok(())
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.m, self.n, &self.q)
    }

    pub fn region(&self) -> Region {
        Region::new(
            self.centers
                .iter()
                .map(|c| Shape::Box(AxisBox::centered(&DVector::from_column_slice(c), self.edge / 2.0).expect("edge")))
                .collect(),
        )
        .expect("nonempty, same dimension")
    }

    pub fn ball(&self) -> Ball {
        Ball::origin(self.n, self.radius).expect("positive radius")
    }

    pub fn random(rng: &mut RunRng, n: usize, m: usize) -> Self {
        let q = open_unit_entries(rng, m * n);
        let centers = random_centers(rng, m, NONCONVEX_TARGET_BOXES);
        Self {
            n,
            m,
            q,
            radius: BALL_RADIUS,
            centers,
            edge: BOX_EDGE,
        }
    }
}

/// `½d²(Qx, C)` for a union `C`, `κ = ρ(Q)²/2`.
#[derive(Debug, Clone)]
pub struct SquaredDistanceToRegion {
    q: DMatrix<f64>,
    region: Region,
    kappa: f64,
}

impl SquaredDistanceToRegion {
    pub fn new(q: DMatrix<f64>, region: Region) -> Self {
        let kappa = spectral_norm(&q).powi(2) / 2.0;
        Self { q, region, kappa }
    }
}

impl UpperC2 for SquaredDistanceToRegion {
    fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * self.region.dist_sq(&(&self.q * x))
    }

    fn subgradient(&self, x: &DVector<f64>) -> DVector<f64> {
        crate::prox::sq_dist_subgradient(x, &self.q, &self.region)
    }

    fn kappa(&self) -> f64 {
        self.kappa
    }
}

pub fn make_heron_nonconvex(inst: &HeronNonconvex) -> Result<CompositeProblem> {
    inst.validate()?;
    let f = SquaredDistanceToRegion::new(inst.matrix(), inst.region());
    CompositeProblem::new(inst.n, Arc::new(f), Arc::new(BallIndicator::new(inst.ball())), vec![])
        .with_working_box(AxisBox::cube(inst.n, -inst.radius, inst.radius)?)
}

/// `m = ⌈1.2 n⌉`.
pub fn default_m(n: usize) -> usize {
    (6 * n).div_ceil(5)
}

/// Stop once `|ΔΦ| < 10⁻⁶`; `η = 0.99`, `μ = 0.5`.
pub fn heron_config(boosted: bool, eta: f64, mu: f64, max_iters: usize) -> SolverConfig {
    let linesearch = if boosted {
        LinesearchParams::default()
    } else {
        LinesearchParams::disabled()
    };
    SolverConfig::new(
        linesearch,
        StepSizeRule {
            eta,
            mu,
            ..StepSizeRule::default()
        },
        StopRule::new(StopKind::AbsPhiGap, 1e-6, max_iters),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeronKind {
    Convex,
    Nonconvex,
}

/// Everything needed to replay one benchmark instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum HeronReplay {
    Convex { seed: u64, instance: HeronQuadratic, start: Vec<f64> },
    Nonconvex { seed: u64, instance: HeronNonconvex, start: Vec<f64> },
}

impl HeronReplay {
    pub fn generate(kind: HeronKind, n: usize, m: usize, p: usize, seed: u64) -> Self {
        let mut rng = run_rng(seed, 0);
        match kind {
            HeronKind::Convex => {
                let instance = HeronQuadratic::random(&mut rng, n, m, p);
                let start = uniform_in_ball(&mut rng, &DVector::zeros(n), instance.radius);
                Self::Convex {
                    seed,
                    instance,
                    start: start.iter().copied().collect(),
                }
            }
            HeronKind::Nonconvex => {
                let instance = HeronNonconvex::random(&mut rng, n, m);
                let start = uniform_in_ball(&mut rng, &DVector::zeros(n), instance.radius);
                Self::Nonconvex {
                    seed,
                    instance,
                    start: start.iter().copied().collect(),
                }
            }
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Self::Convex { seed, .. } | Self::Nonconvex { seed, .. } => *seed,
        }
    }

    /// `(n, m, p)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        match self {
            Self::Convex { instance, .. } => (instance.n, instance.m, instance.p()),
            Self::Nonconvex { instance, .. } => (instance.n, instance.m, 1),
        }
    }

    pub fn problem(&self) -> Result<CompositeProblem> {
        match self {
            Self::Convex { instance, .. } => make_heron_convex(instance),
            Self::Nonconvex { instance, .. } => make_heron_nonconvex(instance),
        }
    }

    pub fn start(&self) -> PrimalDualPoint {
        match self {
            Self::Convex { instance, start, .. } => {
                let x0 = DVector::from_column_slice(start);
                let y0 = heron_dual_init(instance, &x0);
                PrimalDualPoint::new(x0, y0)
            }
            Self::Nonconvex { start, .. } => PrimalDualPoint::primal(DVector::from_column_slice(start)),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("replay serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct HeronRunSummary {
    pub iterations: usize,
    pub final_varphi: f64,
    pub elapsed: Duration,
    pub result: RunResult,
}

impl From<RunResult> for HeronRunSummary {
    fn from(r: RunResult) -> Self {
        Self {
            iterations: r.iterations,
            final_varphi: r.varphi,
            elapsed: r.elapsed,
            result: r,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PairedHeronRun {
    pub replay: HeronReplay,
    pub dsa: HeronRunSummary,
    pub bdsa: HeronRunSummary,
}

impl PairedHeronRun {
    pub fn iteration_ratio(&self) -> f64 {
        self.dsa.iterations as f64 / self.bdsa.iterations.max(1) as f64
    }

    pub fn time_ratio(&self) -> f64 {
        self.dsa.elapsed.as_secs_f64() / self.bdsa.elapsed.as_secs_f64().max(1e-12)
    }
}

/// DSA then BDSA from the same start on the same instance.
pub fn run_pair(replay: HeronReplay, cfg_dsa: &SolverConfig, cfg_bdsa: &SolverConfig) -> Result<PairedHeronRun> {
    let prob = replay.problem()?;
    let start = replay.start();
    let dsa = solver::run(&prob, start.clone(), cfg_dsa)?.into();
    let bdsa = solver::run(&prob, start, cfg_bdsa)?.into();
    Ok(PairedHeronRun { replay, dsa, bdsa })
}

/// Paired runs on `count` seeded instances per dimension. Instance `i` of
/// dimension index `d` uses seed `base_seed + d·count + i`. Instances run
/// concurrently; each pair runs on one worker.
pub fn heron_benchmark(
    kind: HeronKind,
    dims: &[(usize, usize, usize)],
    count: usize,
    base_seed: u64,
    cfg_dsa: &SolverConfig,
    cfg_bdsa: &SolverConfig,
) -> Result<Vec<PairedHeronRun>> {
    let jobs: Vec<(usize, usize, usize, u64)> = dims
        .iter()
        .enumerate()
        .flat_map(|(d, &(n, m, p))| (0..count).map(move |i| (n, m, p, base_seed + (d * count + i) as u64)))
        .collect();
    exec::map_slice(&jobs, |&(n, m, p, seed)| {
        run_pair(HeronReplay::generate(kind, n, m, p, seed), cfg_dsa, cfg_bdsa)
    })
    .into_iter()
    .collect()
}

pub fn mean_iteration_ratio(runs: &[PairedHeronRun]) -> f64 {
    runs.iter().map(PairedHeronRun::iteration_ratio).sum::<f64>() / runs.len().max(1) as f64
}
