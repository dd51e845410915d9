//! Oracle contracts and point types for programs of the form
//! `min f(x) + g(x) − Σᵢ hᵢ(Ψᵢ(x))` and their primal-dual lift
//! `Φ(x, y) = f(x) + g(x) + Σᵢ (hᵢ*(yᵢ) − <Ψᵢ(x), yᵢ>)`.
//!
//! All oracles are immutable and `Send + Sync`, so a single problem can be
//! shared by many concurrent runs.

use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::prox::AxisBox;

/// Locally Lipschitz `f` satisfying
/// `f(y) ≤ f(x) + <ξ, y − x> + κ‖y − x‖²` for the returned `ξ`.
pub trait UpperC2: Send + Sync {
    fn value(&self, x: &DVector<f64>) -> f64;
    /// One element of `conv ∂f(x)`, chosen deterministically.
    fn subgradient(&self, x: &DVector<f64>) -> DVector<f64>;
    fn kappa(&self) -> f64;
}

/// Proper l.s.c. prox-bounded `g`.
pub trait ProxFn: Send + Sync {
    /// `+∞` outside the domain.
    fn value(&self, x: &DVector<f64>) -> f64;
    /// An element of `prox_{γg}(z)`; only called with `γ < prox_threshold()`.
    fn prox(&self, z: &DVector<f64>, gamma: f64) -> DVector<f64>;
    fn prox_threshold(&self) -> f64 {
        f64::INFINITY
    }
}

/// Convex continuous `h` together with its conjugate and the prox of the
/// conjugate.
pub trait ConjugateProx: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, w: &DVector<f64>) -> f64;
    /// `h*(y)`, `+∞` outside `dom h*`.
    fn conjugate_value(&self, y: &DVector<f64>) -> f64;
    /// `prox_{μ h*}(z)`.
    fn conj_prox(&self, z: &DVector<f64>, mu: f64) -> DVector<f64>;
}

/// Differentiable `Ψ: ℝⁿ → ℝᵐ` with `L`-Lipschitz gradient.
pub trait SmoothMap: Send + Sync {
    fn out_dim(&self) -> usize;
    fn value(&self, x: &DVector<f64>) -> DVector<f64>;
    /// `∇Ψ(x) y`, an element of `ℝⁿ`.
    fn grad_apply(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64>;
    fn lipschitz(&self) -> f64;
}

/// One `(hᵢ, Ψᵢ)` pair.
#[derive(Clone)]
pub struct DualBlock {
    pub h: Arc<dyn ConjugateProx>,
    pub psi: Arc<dyn SmoothMap>,
}

impl DualBlock {
    pub fn new(h: Arc<dyn ConjugateProx>, psi: Arc<dyn SmoothMap>) -> Result<Self> {
        if h.dim() != psi.out_dim() {
            return Err(Error::DimensionMismatch {
                expected: psi.out_dim(),
                got: h.dim(),
            });
        }
        Ok(Self { h, psi })
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }
}

/// One instance of the composite program.
#[derive(Clone)]
pub struct CompositeProblem {
    n: usize,
    f: Arc<dyn UpperC2>,
    g: Arc<dyn ProxFn>,
    blocks: Vec<DualBlock>,
    working_box: Option<AxisBox>,
}

impl CompositeProblem {
    pub fn new(n: usize, f: Arc<dyn UpperC2>, g: Arc<dyn ProxFn>, blocks: Vec<DualBlock>) -> Self {
        Self {
            n,
            f,
            g,
            blocks,
            working_box: None,
        }
    }

    /// Declares the box on which `κ` and the `Lᵢ` are claimed to hold.
    pub fn with_working_box(mut self, b: AxisBox) -> Result<Self> {
        if b.dim() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: b.dim(),
            });
        }
        self.working_box = Some(b);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn f(&self) -> &dyn UpperC2 {
        self.f.as_ref()
    }

    pub fn g(&self) -> &dyn ProxFn {
        self.g.as_ref()
    }

    pub fn blocks(&self) -> &[DualBlock] {
        &self.blocks
    }

    pub fn p(&self) -> usize {
        self.blocks.len()
    }

    pub fn working_box(&self) -> Option<&AxisBox> {
        self.working_box.as_ref()
    }

    /// All-zero dual blocks of the right shapes.
    pub fn zero_duals(&self) -> Vec<DVector<f64>> {
        self.blocks.iter().map(|b| DVector::zeros(b.dim())).collect()
    }

    pub fn check_point(&self, pt: &PrimalDualPoint) -> Result<()> {
        if pt.x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: pt.x.len(),
            });
        }
        if pt.y.len() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                got: pt.y.len(),
            });
        }
        for (yi, b) in pt.y.iter().zip(&self.blocks) {
            if yi.len() != b.dim() {
                return Err(Error::DimensionMismatch {
                    expected: b.dim(),
                    got: yi.len(),
                });
            }
        }
        Ok(())
    }

    /// `φ(x) = f(x) + g(x) − Σ hᵢ(Ψᵢ(x))`; `+∞` iff `g(x) = +∞`.
    pub fn varphi(&self, x: &DVector<f64>) -> f64 {
        let gx = self.g.value(x);
        if gx == f64::INFINITY {
            return f64::INFINITY;
        }
        let h_sum: f64 = self.blocks.iter().map(|b| b.h.value(&b.psi.value(x))).sum();
        self.f.value(x) + gx - h_sum
    }

    /// `Φ(x, y)`.
    pub fn phi(&self, pt: &PrimalDualPoint) -> f64 {
        self.phi_parts(&pt.x, &pt.y)
    }

    pub fn phi_parts(&self, x: &DVector<f64>, y: &[DVector<f64>]) -> f64 {
        let gx = self.g.value(x);
        if gx == f64::INFINITY {
            return f64::INFINITY;
        }
        let mut total = self.f.value(x) + gx;
        for (b, yi) in self.blocks.iter().zip(y) {
            let hc = b.h.conjugate_value(yi);
            if hc == f64::INFINITY {
                return f64::INFINITY;
            }
            total += hc - b.psi.value(x).dot(yi);
        }
        total
    }
}

/// Primal point plus one dual block per `(hᵢ, Ψᵢ)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalDualPoint {
    pub x: DVector<f64>,
    pub y: Vec<DVector<f64>>,
}

impl PrimalDualPoint {
    pub fn new(x: DVector<f64>, y: Vec<DVector<f64>>) -> Self {
        Self { x, y }
    }

    pub fn primal(x: DVector<f64>) -> Self {
        Self { x, y: Vec::new() }
    }

    /// `‖(x, y)‖²` over all blocks.
    pub fn norm_squared(&self) -> f64 {
        self.x.norm_squared() + self.y.iter().map(|v| v.norm_squared()).sum::<f64>()
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            x: &self.x - &other.x,
            y: self.y.iter().zip(&other.y).map(|(a, b)| a - b).collect(),
        }
    }

    /// `self + t·dir`.
    pub fn axpy(&self, t: f64, dir: &Self) -> Self {
        Self {
            x: &self.x + &dir.x * t,
            y: self.y.iter().zip(&dir.y).map(|(a, d)| a + d * t).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.y.iter().flatten()).all(|v| v.is_finite())
    }
}

/// `g ≡ 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroProx;

impl ProxFn for ZeroProx {
    fn value(&self, _x: &DVector<f64>) -> f64 {
        0.0
    }

    fn prox(&self, z: &DVector<f64>, _gamma: f64) -> DVector<f64> {
        z.clone()
    }
}

/// `g = ‖·‖²`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SquaredNorm;

impl ProxFn for SquaredNorm {
    fn value(&self, x: &DVector<f64>) -> f64 {
        x.norm_squared()
    }

    fn prox(&self, z: &DVector<f64>, gamma: f64) -> DVector<f64> {
        crate::prox::prox_sq_norm(z, gamma)
    }
}

/// `f ≡ 0`, with `κ = 0`.
#[derive(Debug, Clone, Copy)]
pub struct ZeroFn {
    pub n: usize,
}

impl UpperC2 for ZeroFn {
    fn value(&self, _x: &DVector<f64>) -> f64 {
        0.0
    }

    fn subgradient(&self, _x: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(self.n)
    }

    fn kappa(&self) -> f64 {
        0.0
    }
}

/// `Ψ(x) = x`.
#[derive(Debug, Clone, Copy)]
pub struct IdentityMap {
    pub n: usize,
}

impl SmoothMap for IdentityMap {
    fn out_dim(&self) -> usize {
        self.n
    }

    fn value(&self, x: &DVector<f64>) -> DVector<f64> {
        x.clone()
    }

    fn grad_apply(&self, _x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        y.clone()
    }

    fn lipschitz(&self) -> f64 {
        0.0
    }
}
