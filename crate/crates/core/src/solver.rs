//! The boosted double-proximal subgradient engine.
//!
//! One iteration computes a forward-backward candidate
//!
//! ```text
//! x̂ = prox_{γg}(x + γ Σ ∇Ψᵢ(x) yᵢ − γ v),   v ∈ ∂f(x)
//! ŷᵢ = prox_{μ hᵢ*}(yᵢ + μ Ψᵢ(x̂))
//! ```
//!
//! and then tries to extrapolate along `(d, e) = (x̂, ŷ) − (x, y)` with a
//! backtracking linesearch on `Φ`. With `R = 0` the linesearch is skipped and
//! the engine reduces to the plain (non-boosted) scheme.

use std::io::Write;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{CompositeProblem, PrimalDualPoint};

/// Backtracking and trial-stepsize parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinesearchParams {
    /// Maximum number of trial steps `R`; zero disables the linesearch.
    pub max_backtracks: usize,
    pub rho: f64,
    pub alpha: f64,
    pub lambda0: f64,
    pub delta: f64,
}

impl Default for LinesearchParams {
    fn default() -> Self {
        Self {
            max_backtracks: 2,
            rho: 0.5,
            alpha: 0.1,
            lambda0: 2.0,
            delta: 2.0,
        }
    }
}

impl LinesearchParams {
    /// Same parameters with the linesearch switched off.
    pub fn disabled() -> Self {
        Self {
            max_backtracks: 0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::InvalidParameter {
                name: "rho",
                reason: format!("{} not in ]0,1[", self.rho),
            });
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::InvalidParameter {
                name: "alpha",
                reason: format!("{} must be >= 0", self.alpha),
            });
        }
        if !self.lambda0.is_finite() || self.lambda0 <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "lambda0",
                reason: format!("{} must be > 0", self.lambda0),
            });
        }
        if !self.delta.is_finite() || self.delta <= 1.0 {
            return Err(Error::InvalidParameter {
                name: "delta",
                reason: format!("{} must be > 1", self.delta),
            });
        }
        Ok(())
    }
}

/// How the primal stepsize `γ_k` and the dual stepsizes `μ` are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSizeRule {
    pub eta: f64,
    pub mu: f64,
    /// Upper cap applied before the `η` factor; required when the
    /// curvature bound is infinite.
    pub gamma_cap: Option<f64>,
    /// Use this `γ` verbatim. It must still be strictly below the
    /// admissible bound.
    pub fixed_gamma: Option<f64>,
}

impl Default for StepSizeRule {
    fn default() -> Self {
        Self {
            eta: 0.99,
            mu: 0.5,
            gamma_cap: None,
            fixed_gamma: None,
        }
    }
}

impl StepSizeRule {
    pub fn fixed(gamma: f64, mu: f64) -> Self {
        Self {
            fixed_gamma: Some(gamma),
            mu,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::InvalidParameter {
                name: "eta",
                reason: format!("{} not in ]0,1[", self.eta),
            });
        }
        if !self.mu.is_finite() || self.mu <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "mu",
                reason: format!("{} must be > 0", self.mu),
            });
        }
        for (name, v) in [("gamma_cap", self.gamma_cap), ("fixed_gamma", self.fixed_gamma)] {
            if let Some(v) = v {
                if !v.is_finite() || v <= 0.0 {
                    return Err(Error::InvalidParameter {
                        name,
                        reason: format!("{v} must be a positive finite number"),
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopKind {
    /// `‖(x,y)^{k+1} − (x,y)^k‖ < tol`.
    StepNorm,
    /// `|Φ^{k+1} − Φ^k| < tol`.
    AbsPhiGap,
    /// `|φ^{k+1} − φ^k| / |φ^{k+1}| < tol`.
    RelVarphiGap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub kind: StopKind,
    pub tol: f64,
    pub max_iters: usize,
    /// Also stop once `φ^{k+1} ≤ target`.
    pub target_varphi: Option<f64>,
}

impl StopRule {
    pub fn new(kind: StopKind, tol: f64, max_iters: usize) -> Self {
        Self {
            kind,
            tol,
            max_iters,
            target_varphi: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "tol",
                reason: format!("{} must be > 0", self.tol),
            });
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter {
                name: "max_iters",
                reason: "must be positive".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub linesearch: LinesearchParams,
    pub step: StepSizeRule,
    pub stop: StopRule,
    /// Abort with [`Error::DescentViolation`] when the decrease inequality
    /// fails beyond `descent_rel_tol`.
    pub strict_descent: bool,
    pub descent_rel_tol: f64,
}

impl SolverConfig {
    pub fn new(linesearch: LinesearchParams, step: StepSizeRule, stop: StopRule) -> Self {
        Self {
            linesearch,
            step,
            stop,
            strict_descent: cfg!(debug_assertions),
            descent_rel_tol: 1e-9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.linesearch.validate()?;
        self.step.validate()?;
        self.stop.validate()
    }

    pub fn is_boosted(&self) -> bool {
        self.linesearch.max_backtracks > 0
    }
}

/// Coefficients of the per-iteration decrease inequality
/// `Φ^{k+1} ≤ Φ^k − a‖Δx‖² − Σ bᵢ‖Δyᵢ‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecreaseCertificate {
    pub a: f64,
    pub b: Vec<f64>,
}

impl DecreaseCertificate {
    pub fn is_positive(&self) -> bool {
        self.a > 0.0 && self.b.iter().all(|b| *b > 0.0)
    }
}

/// `a_k = (2αλ² + 1/γ − 2κ − Σ Lᵢ‖yᵢ‖) / (2(1+λ)²)`,
/// `bᵢ = (1 + αλ²μ) / (μ(1+λ)²)`.
pub fn decrease_certificate(
    gamma: f64,
    lambda: f64,
    kappa: f64,
    lipschitz: &[f64],
    y_norms: &[f64],
    mu: f64,
    alpha: f64,
) -> DecreaseCertificate {
    let lip_term: f64 = lipschitz.iter().zip(y_norms).map(|(l, n)| l * n).sum();
    let denom = (1.0 + lambda).powi(2);
    let a = (2.0 * alpha * lambda * lambda + 1.0 / gamma - 2.0 * kappa - lip_term) / (2.0 * denom);
    let b_i = (1.0 + alpha * lambda * lambda * mu) / (mu * denom);
    DecreaseCertificate {
        a,
        b: vec![b_i; lipschitz.len()],
    }
}

/// Admissible primal stepsize `η · min{γ^g, (2κ + Σ Lᵢ‖yᵢ‖)⁻¹, cap}`.
pub fn gamma_rule(prob: &CompositeProblem, y: &[DVector<f64>], rule: &StepSizeRule) -> Result<f64> {
    let curvature = 2.0 * prob.f().kappa()
        + prob
            .blocks()
            .iter()
            .zip(y)
            .map(|(b, yi)| b.psi.lipschitz() * yi.norm())
            .sum::<f64>();
    let curvature_bound = if curvature > 0.0 { 1.0 / curvature } else { f64::INFINITY };
    let bound = prob.g().prox_threshold().min(curvature_bound);
    if let Some(gamma) = rule.fixed_gamma {
        return if gamma < bound {
            Ok(gamma)
        } else {
            Err(Error::StepsizeOutOfRange { gamma, bound })
        };
    }
    let capped = bound.min(rule.gamma_cap.unwrap_or(f64::INFINITY));
    let gamma = rule.eta * capped;
    if gamma.is_finite() && gamma > 0.0 {
        Ok(gamma)
    } else {
        Err(Error::UnboundedStepsize)
    }
}

/// Backtracking on `λ ∈ {λ̄, ρλ̄, …, ρ^{R−1}λ̄}`: returns the first `λ` with
/// `Φ(base + λ·dir) ≤ Φ(base) − αλ²‖dir‖²`, or `(0, R)` when none passes.
/// Non-finite trial values count as rejections.
pub fn linesearch(
    mut phi_at: impl FnMut(f64) -> f64,
    phi_base: f64,
    dir_norm_sq: f64,
    lambda_bar: f64,
    params: &LinesearchParams,
) -> (f64, usize) {
    let mut r = 0;
    let mut lambda = lambda_bar;
    while r < params.max_backtracks {
        let trial = phi_at(lambda);
        if trial <= phi_base - params.alpha * lambda * lambda * dir_norm_sq {
            break;
        }
        r += 1;
        lambda = params.rho.powi(r as i32) * lambda_bar;
    }
    if r == params.max_backtracks {
        lambda = 0.0;
    }
    (lambda, r)
}

/// Next trial stepsize: grow by `δ` after an immediate acceptance, otherwise
/// fall back to `max{λ₀, ρ^r λ̄}`.
pub fn adaptive_trial_stepsize(lambda_bar: f64, backtracks: usize, params: &LinesearchParams) -> f64 {
    if backtracks == 0 {
        params.delta * lambda_bar
    } else {
        params.lambda0.max(params.rho.powi(backtracks as i32) * lambda_bar)
    }
}

/// Result of one full iteration.
#[derive(Debug, Clone)]
pub struct IterationOutcome {
    /// `(x̂, ŷ)`.
    pub candidate: PrimalDualPoint,
    /// `(d, e)`.
    pub direction: PrimalDualPoint,
    pub gamma: f64,
    pub lambda: f64,
    pub backtracks: usize,
    /// `(x̂, ŷ) + λ(d, e)`.
    pub next: PrimalDualPoint,
    pub phi_candidate: f64,
    pub phi_next: f64,
}

impl IterationOutcome {
    /// `‖(d, e)‖`; zero certifies criticality of the current point.
    pub fn residual(&self) -> f64 {
        criticality_residual(&self.direction)
    }
}

pub fn criticality_residual(direction: &PrimalDualPoint) -> f64 {
    direction.norm_squared().sqrt()
}

/// Forward-backward candidate `(x̂, ŷ)` and the stepsize used.
pub fn candidate_step(
    prob: &CompositeProblem,
    pt: &PrimalDualPoint,
    rule: &StepSizeRule,
) -> Result<(PrimalDualPoint, f64)> {
    let gamma = gamma_rule(prob, &pt.y, rule)?;
    let threshold = prob.g().prox_threshold();
    if gamma >= threshold {
        return Err(Error::ProxBound { gamma, threshold });
    }
    let mut z = &pt.x - prob.f().subgradient(&pt.x) * gamma;
    for (b, yi) in prob.blocks().iter().zip(&pt.y) {
        z += b.psi.grad_apply(&pt.x, yi) * gamma;
    }
    let x_hat = prob.g().prox(&z, gamma);
    let y_hat = prob
        .blocks()
        .iter()
        .zip(&pt.y)
        .map(|(b, yi)| b.h.conj_prox(&(yi + b.psi.value(&x_hat) * rule.mu), rule.mu))
        .collect();
    Ok((PrimalDualPoint::new(x_hat, y_hat), gamma))
}

/// Steps 1–8 of one iteration with trial stepsize `lambda_bar`.
pub fn bdsa_iteration(
    prob: &CompositeProblem,
    pt: &PrimalDualPoint,
    cfg: &SolverConfig,
    lambda_bar: f64,
) -> Result<IterationOutcome> {
    let (candidate, gamma) = candidate_step(prob, pt, &cfg.step)?;
    let direction = candidate.sub(pt);
    let phi_candidate = prob.phi(&candidate);
    let dir_norm_sq = direction.norm_squared();
    if dir_norm_sq == 0.0 {
        return Ok(IterationOutcome {
            next: candidate.clone(),
            candidate,
            direction,
            gamma,
            lambda: 0.0,
            backtracks: 0,
            phi_candidate,
            phi_next: phi_candidate,
        });
    }
    let mut accepted_phi = None;
    let (lambda, backtracks) = linesearch(
        |lambda| {
            let v = prob.phi(&candidate.axpy(lambda, &direction));
            accepted_phi = Some((lambda, v));
            v
        },
        phi_candidate,
        dir_norm_sq,
        lambda_bar,
        &cfg.linesearch,
    );
    let next = candidate.axpy(lambda, &direction);
    let phi_next = match accepted_phi {
        Some((l, v)) if l == lambda && lambda > 0.0 => v,
        _ => phi_candidate,
    };
    Ok(IterationOutcome {
        candidate,
        direction,
        gamma,
        lambda,
        backtracks,
        next,
        phi_candidate,
        phi_next,
    })
}

/// Per-iteration record.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    pub k: usize,
    /// `φ(x^{k+1})`.
    pub varphi: f64,
    /// `Φ(x^{k+1}, y^{k+1})`.
    pub phi: f64,
    /// `Φ(x^k, y^k)`.
    pub phi_prev: f64,
    pub lambda: f64,
    pub backtracks: usize,
    /// `‖(d^k, e^k)‖`.
    pub step_norm: f64,
    pub gamma: f64,
    pub elapsed: Duration,
    pub certificate: DecreaseCertificate,
    /// `‖x^{k+1} − x^k‖²`.
    pub dx_sq: f64,
    /// `‖y_i^{k+1} − y_i^k‖²` per block.
    pub dy_sq: Vec<f64>,
}

impl IterationTrace {
    /// Amount by which the decrease inequality is violated (non-positive
    /// when it holds).
    pub fn descent_excess(&self) -> f64 {
        let bound = self.phi_prev
            - self.certificate.a * self.dx_sq
            - self
                .certificate
                .b
                .iter()
                .zip(&self.dy_sq)
                .map(|(b, d)| b * d)
                .sum::<f64>();
        self.phi - bound
    }

    /// Whether the decrease inequality holds to `rel_tol · max(1, |Φ^k|)`.
    /// The first iteration is exempt since `x⁰` need not lie in `dom g`.
    pub fn descent_holds(&self, rel_tol: f64) -> bool {
        if self.k == 0 {
            return true;
        }
        self.descent_excess() <= rel_tol * self.phi_prev.abs().max(1.0)
    }

    /// Whether the accepted `λ` satisfies the sufficient-decrease test
    /// against `phi_candidate` (always true for `λ = 0`).
    pub fn linesearch_condition(&self, phi_candidate: f64, alpha: f64) -> bool {
        self.lambda == 0.0
            || self.phi <= phi_candidate - alpha * self.lambda.powi(2) * self.step_norm.powi(2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    MaxIters,
    Stalled,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub point: PrimalDualPoint,
    pub varphi: f64,
    pub phi: f64,
    pub iterations: usize,
    pub status: RunStatus,
    pub trace: Vec<IterationTrace>,
    pub elapsed: Duration,
}

impl RunResult {
    pub fn descent_violations(&self, rel_tol: f64) -> Vec<usize> {
        self.trace
            .iter()
            .filter(|t| !t.descent_holds(rel_tol))
            .map(|t| t.k)
            .collect()
    }
}

/// Iterates until the stop rule fires, a critical point is detected, or
/// `max_iters` iterations have run.
pub fn run(prob: &CompositeProblem, start: PrimalDualPoint, cfg: &SolverConfig) -> Result<RunResult> {
    cfg.validate()?;
    prob.check_point(&start)?;
    let clock = Instant::now();
    let kappa = prob.f().kappa();
    let lipschitz: Vec<f64> = prob.blocks().iter().map(|b| b.psi.lipschitz()).collect();

    let mut pt = start;
    let mut phi = prob.phi(&pt);
    let mut varphi = prob.varphi(&pt.x);
    let mut lambda_bar = cfg.linesearch.lambda0;
    let mut trace = Vec::new();
    let mut status = RunStatus::MaxIters;

    for k in 0..cfg.stop.max_iters {
        let out = bdsa_iteration(prob, &pt, cfg, lambda_bar)?;
        if out.direction.norm_squared() == 0.0 {
            status = RunStatus::Converged;
            break;
        }
        if !out.next.is_finite() || out.phi_next.is_nan() {
            status = RunStatus::Stalled;
            break;
        }
        let y_norms: Vec<f64> = pt.y.iter().map(|v| v.norm()).collect();
        let certificate = decrease_certificate(
            out.gamma,
            out.lambda,
            kappa,
            &lipschitz,
            &y_norms,
            cfg.step.mu,
            cfg.linesearch.alpha,
        );
        let delta = out.next.sub(&pt);
        let next_varphi = prob.varphi(&out.next.x);
        let entry = IterationTrace {
            k,
            varphi: next_varphi,
            phi: out.phi_next,
            phi_prev: phi,
            lambda: out.lambda,
            backtracks: out.backtracks,
            step_norm: out.residual(),
            gamma: out.gamma,
            elapsed: clock.elapsed(),
            certificate,
            dx_sq: delta.x.norm_squared(),
            dy_sq: delta.y.iter().map(|v| v.norm_squared()).collect(),
        };
        if cfg.strict_descent && !entry.descent_holds(cfg.descent_rel_tol) {
            return Err(Error::DescentViolation {
                k,
                excess: entry.descent_excess(),
            });
        }
        trace.push(entry);
        lambda_bar = adaptive_trial_stepsize(lambda_bar, out.backtracks, &cfg.linesearch);

        let stop = match cfg.stop.kind {
            StopKind::StepNorm => delta.norm_squared().sqrt() < cfg.stop.tol,
            StopKind::AbsPhiGap => (out.phi_next - phi).abs() < cfg.stop.tol,
            StopKind::RelVarphiGap => ((next_varphi - varphi) / next_varphi).abs() < cfg.stop.tol,
        } || cfg.stop.target_varphi.is_some_and(|t| next_varphi <= t);

        pt = out.next;
        phi = out.phi_next;
        varphi = next_varphi;
        if stop {
            status = RunStatus::Converged;
            break;
        }
    }

    Ok(RunResult {
        varphi,
        phi,
        iterations: trace.len(),
        point: pt,
        status,
        trace,
        elapsed: clock.elapsed(),
    })
}

pub const TRACE_CSV_HEADER: &str = "k,varphi,phi,lambda,backtracks,step_norm,gamma,elapsed_ms";

/// Writes the trace as CSV. With `timing = false` the elapsed column is
/// zeroed so that output is byte-reproducible.
pub fn write_trace_csv<W: Write>(trace: &[IterationTrace], mut out: W, timing: bool) -> std::io::Result<()> {
    writeln!(out, "{TRACE_CSV_HEADER}")?;
    for t in trace {
        let ms = if timing { t.elapsed.as_secs_f64() * 1e3 } else { 0.0 };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            t.k, t.varphi, t.phi, t.lambda, t.backtracks, t.step_norm, t.gamma, ms
        )?;
    }
    Ok(())
}
