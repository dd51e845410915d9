//! Test family `φ_q(x) = ‖x‖² − Σ_{s∈I} ‖x − s·e‖₁` with
//! `I = {0, 1, −1, …, q, −q, q+1}`.
//!
//! Its critical points form the integer grid `{−(q+1), …, q+1}ⁿ` and the
//! unique global minimizer is `x* = −(q+1)·e` with value `−n(q²+3q+2)`.
//! Two splittings are provided:
//!
//! * PDCA form: `f = −Σ ‖·−s·e‖₁` (κ = 0), `g = ‖·‖²`, no dual blocks;
//! * DGA form: `f = 0`, `g = ‖·‖²`, one dual block `h(y) = ‖y − s·e‖₁`,
//!   `Ψ = id` per shift.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::problem::{
    CompositeProblem, ConjugateProx, DualBlock, IdentityMap, PrimalDualPoint, SquaredNorm, UpperC2, ZeroFn,
};
use crate::prox::{prox_l1_shifted_conjugate, AxisBox};
use crate::sampling::{run_rng, uniform_vector};
use crate::solver::{self, LinesearchParams, RunResult, SolverConfig, StepSizeRule, StopKind, StopRule};

/// Largest grid `enumerate_critical_points` will materialize.
pub const MAX_GRID_POINTS: u128 = 1_000_000;

/// A point counts as the global minimizer when within this ∞-norm distance.
pub const SUCCESS_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhiQInstance {
    pub n: usize,
    pub q: u32,
}

impl PhiQInstance {
    pub fn new(n: usize, q: u32) -> Self {
        Self { n, q }
    }

    /// Shift set in the order `0, 1, −1, …, q, −q, q+1`.
    pub fn shifts(&self) -> Vec<f64> {
        let mut s = vec![0.0];
        for j in 1..=self.q {
            s.push(j as f64);
            s.push(-(j as f64));
        }
        s.push(self.q as f64 + 1.0);
        s
    }

    pub fn minimizer(&self) -> DVector<f64> {
        DVector::from_element(self.n, -(self.q as f64 + 1.0))
    }

    pub fn optimal_value(&self) -> f64 {
        let q = self.q as f64;
        -(self.n as f64) * (q * q + 3.0 * q + 2.0)
    }

    /// `[−q−2, q+2]ⁿ`, the sampling box for starting points.
    pub fn start_box(&self) -> AxisBox {
        let r = self.q as f64 + 2.0;
        AxisBox::cube(self.n, -r, r).expect("valid cube")
    }

    pub fn is_success(&self, x: &DVector<f64>) -> bool {
        (x - self.minimizer()).amax() <= SUCCESS_TOL
    }
}

pub fn phi_q_value(inst: &PhiQInstance, x: &DVector<f64>) -> f64 {
    let l1: f64 = inst
        .shifts()
        .iter()
        .map(|s| x.iter().map(|xi| (xi - s).abs()).sum::<f64>())
        .sum();
    x.norm_squared() - l1
}

/// Sum over shifts of the componentwise choice `+1` if `xᵢ ≤ s`, else `−1`.
pub fn phi_q_dc_subgradient(inst: &PhiQInstance, x: &DVector<f64>) -> DVector<f64> {
    let shifts = inst.shifts();
    x.map(|xi| shifts.iter().map(|s| if xi <= *s { 1.0 } else { -1.0 }).sum())
}

/// `f = −Σ_s ‖· − s·e‖₁`.
#[derive(Debug, Clone)]
pub struct NegativeShiftedL1Sum {
    inst: PhiQInstance,
}

impl UpperC2 for NegativeShiftedL1Sum {
    fn value(&self, x: &DVector<f64>) -> f64 {
        phi_q_value(&self.inst, x) - x.norm_squared()
    }

    fn subgradient(&self, x: &DVector<f64>) -> DVector<f64> {
        phi_q_dc_subgradient(&self.inst, x)
    }

    fn kappa(&self) -> f64 {
        0.0
    }
}

/// `h(y) = ‖y − s·e‖₁`, `h*(z) = ι_{[−1,1]^d}(z) + s·Σzᵢ`.
#[derive(Debug, Clone)]
pub struct ShiftedL1 {
    shift: DVector<f64>,
}

impl ShiftedL1 {
    pub fn new(shift: DVector<f64>) -> Self {
        Self { shift }
    }
}

impl ConjugateProx for ShiftedL1 {
    fn dim(&self) -> usize {
        self.shift.len()
    }

    fn value(&self, w: &DVector<f64>) -> f64 {
        (w - &self.shift).abs().sum()
    }

    fn conjugate_value(&self, y: &DVector<f64>) -> f64 {
        if y.iter().all(|v| (-1.0..=1.0).contains(v)) {
            self.shift.dot(y)
        } else {
            f64::INFINITY
        }
    }

    fn conj_prox(&self, z: &DVector<f64>, mu: f64) -> DVector<f64> {
        prox_l1_shifted_conjugate(z, mu, &self.shift)
    }
}

pub fn make_pdca_form(inst: &PhiQInstance) -> CompositeProblem {
    CompositeProblem::new(
        inst.n,
        Arc::new(NegativeShiftedL1Sum { inst: *inst }),
        Arc::new(SquaredNorm),
        vec![],
    )
    .with_working_box(inst.start_box())
    .expect("matching dimension")
}

pub fn make_dga_form(inst: &PhiQInstance) -> CompositeProblem {
    let psi = Arc::new(IdentityMap { n: inst.n });
    let blocks = inst
        .shifts()
        .into_iter()
        .map(|s| {
            DualBlock::new(Arc::new(ShiftedL1::new(DVector::from_element(inst.n, s))), psi.clone())
                .expect("matching dimension")
        })
        .collect();
    CompositeProblem::new(inst.n, Arc::new(ZeroFn { n: inst.n }), Arc::new(SquaredNorm), blocks)
        .with_working_box(inst.start_box())
        .expect("matching dimension")
}

/// Dual blocks `ȳ_s ∈ ∂h_s(x)` chosen by the sign rule (0 on ties).
pub fn fenchel_young_duals(inst: &PhiQInstance, x: &DVector<f64>) -> Vec<DVector<f64>> {
    inst.shifts()
        .iter()
        .map(|s| x.map(|xi| (xi - s).signum() * if xi == *s { 0.0 } else { 1.0 }))
        .collect()
}

/// The full integer grid `{−(q+1), …, q+1}ⁿ` in lexicographic order.
pub fn enumerate_critical_points(inst: &PhiQInstance) -> Result<Vec<DVector<f64>>> {
    let side = 2 * inst.q as u128 + 3;
    let total = side.checked_pow(inst.n as u32).unwrap_or(u128::MAX);
    if total > MAX_GRID_POINTS {
        return Err(Error::GridTooLarge(total));
    }
    let lo = -(inst.q as i64 + 1);
    let side = side as usize;
    let mut points = Vec::with_capacity(total as usize);
    let mut digits = vec![0usize; inst.n];
    for _ in 0..total {
        points.push(DVector::from_iterator(inst.n, digits.iter().map(|d| (lo + *d as i64) as f64)));
        for d in digits.iter_mut().rev() {
            *d += 1;
            if *d < side {
                break;
            }
            *d = 0;
        }
    }
    Ok(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhiQAlgorithm {
    Dga,
    Bdga,
    Pdca,
    Bpdca,
}

impl PhiQAlgorithm {
    pub const ALL: [PhiQAlgorithm; 4] = [Self::Dga, Self::Bdga, Self::Pdca, Self::Bpdca];

    pub fn name(self) -> &'static str {
        match self {
            Self::Dga => "dga",
            Self::Bdga => "bdga",
            Self::Pdca => "pdca",
            Self::Bpdca => "bpdca",
        }
    }

    pub fn uses_dual_form(self) -> bool {
        matches!(self, Self::Dga | Self::Bdga)
    }

    pub fn is_boosted(self) -> bool {
        matches!(self, Self::Bdga | Self::Bpdca)
    }

    pub fn problem(self, inst: &PhiQInstance) -> CompositeProblem {
        if self.uses_dual_form() {
            make_dga_form(inst)
        } else {
            make_pdca_form(inst)
        }
    }

    /// `γ = μ = 1`, stop once consecutive iterates differ by less than
    /// `n·10⁻⁶`.
    pub fn config(self, inst: &PhiQInstance, max_iters: usize) -> SolverConfig {
        let linesearch = if self.is_boosted() {
            LinesearchParams::default()
        } else {
            LinesearchParams::disabled()
        };
        SolverConfig::new(
            linesearch,
            StepSizeRule::fixed(1.0, 1.0),
            StopRule::new(StopKind::StepNorm, inst.n as f64 * 1e-6, max_iters),
        )
    }
}

impl fmt::Display for PhiQAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PhiQAlgorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dga" => Ok(Self::Dga),
            "bdga" => Ok(Self::Bdga),
            "pdca" => Ok(Self::Pdca),
            "bpdca" => Ok(Self::Bpdca),
            other => Err(Error::InvalidParameter {
                name: "alg",
                reason: format!("unknown phiq algorithm `{other}`"),
            }),
        }
    }
}

/// Primal start uniform in `[−q−2, q+2]ⁿ` and dual starts uniform in
/// `[−1,1]ⁿ`, drawn from the stream of run `index`. The same start is shared
/// by all four algorithms; primal-only forms ignore the duals.
pub fn sample_start(inst: &PhiQInstance, base_seed: u64, index: usize) -> PrimalDualPoint {
    let mut rng = run_rng(base_seed, index);
    let r = inst.q as f64 + 2.0;
    let x = uniform_vector(&mut rng, inst.n, -r, r);
    let y = (0..inst.shifts().len())
        .map(|_| uniform_vector(&mut rng, inst.n, -1.0, 1.0))
        .collect();
    PrimalDualPoint::new(x, y)
}

pub fn run_from(
    inst: &PhiQInstance,
    alg: PhiQAlgorithm,
    start: &PrimalDualPoint,
    cfg: &SolverConfig,
) -> Result<RunResult> {
    let prob = alg.problem(inst);
    let pt = if alg.uses_dual_form() {
        start.clone()
    } else {
        PrimalDualPoint::primal(start.x.clone())
    };
    solver::run(&prob, pt, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhiQRun {
    pub index: usize,
    pub iterations: usize,
    pub final_varphi: f64,
    pub success: bool,
    #[serde(skip)]
    pub final_x: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhiQCounts {
    pub algorithm: PhiQAlgorithm,
    pub n: usize,
    pub q: u32,
    pub runs: usize,
    pub successes: usize,
    pub mean_iters: f64,
    pub mean_final_varphi: f64,
    pub seed: u64,
    #[serde(skip)]
    pub per_run: Vec<PhiQRun>,
}

impl PhiQCounts {
    pub fn success_rate(&self) -> f64 {
        self.successes as f64 / self.runs as f64
    }
}

/// Runs `runs` seeded starts of one algorithm and counts how many end at the
/// global minimizer.
pub fn success_rate_experiment(
    inst: &PhiQInstance,
    alg: PhiQAlgorithm,
    runs: usize,
    seed: u64,
    max_iters: usize,
) -> Result<PhiQCounts> {
    let cfg = alg.config(inst, max_iters);
    let outcomes = exec::map_indexed(runs, |i| {
        let start = sample_start(inst, seed, i);
        run_from(inst, alg, &start, &cfg).map(|res| PhiQRun {
            index: i,
            iterations: res.iterations,
            final_varphi: phi_q_value(inst, &res.point.x),
            success: inst.is_success(&res.point.x),
            final_x: res.point.x,
        })
    });
    let per_run = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    let denom = runs.max(1) as f64;
    Ok(PhiQCounts {
        algorithm: alg,
        n: inst.n,
        q: inst.q,
        runs,
        successes: per_run.iter().filter(|r| r.success).count(),
        mean_iters: per_run.iter().map(|r| r.iterations as f64).sum::<f64>() / denom,
        mean_final_varphi: per_run.iter().map(|r| r.final_varphi).sum::<f64>() / denom,
        seed,
        per_run,
    })
}
