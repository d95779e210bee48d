//! Irrotational background flow `η = b(x₂ + β)` with `β = −ξ − (λ/b) ρ`,
//! its flux constant `λ_{b,Γ}`, and far-field coefficients.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::bem::HarmonicSolution;
use crate::error::{Error, Result};
use crate::geometry::TruncatedGrid;
use crate::green::GreenAssembly;
use crate::strip_kernel::{top_wall_normal_derivative, StripPoint};

/// Quadrature spacing in `x₁` for wall fluxes.
const WALL_STEP: f64 = 0.02;
/// Integration half-range beyond the obstacle for wall fluxes.
const WALL_MARGIN: f64 = 14.0;

/// Position of `Γ/b` relative to the critical circulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Subcritical,
    CriticalOrAbove,
    WindowIii,
}

/// Physical parameters plus the derived obstacle quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowConfig {
    pub b: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub i_top: f64,
    pub i_obs: f64,
    pub regime: Regime,
}

impl FlowConfig {
    pub fn new(green: &GreenAssembly, b: f64, gamma: f64, sigma: f64) -> Result<Self> {
        if !(b.is_finite() && b > 0.0) {
            return Err(Error::Config(format!("far-field speed b = {b} must be positive")));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::Config(format!("circulation Γ = {gamma} must be positive")));
        }
        let i_top = compute_top_flux(green);
        let i_obs = green.obstacle_flux();
        let lambda = flux_constant(b, gamma, i_top, i_obs);
        Ok(Self {
            b,
            gamma,
            sigma,
            lambda,
            i_top,
            i_obs,
            regime: classify(b, gamma, sigma, i_top, i_obs),
        })
    }

    /// Smallest circulation with `λ_{b,Γ} ≥ 0`, namely `bπ I_top`.
    pub fn critical_gamma(b: f64, i_top: f64) -> f64 {
        b * PI * i_top
    }
}

/// `λ_{b,Γ} = (Γ − bπ I_top) / I_obs`.
pub fn flux_constant(b: f64, gamma: f64, i_top: f64, i_obs: f64) -> f64 {
    (gamma - b * PI * i_top) / i_obs
}

pub fn classify(b: f64, gamma: f64, sigma: f64, i_top: f64, i_obs: f64) -> Regime {
    let ratio = gamma / b;
    let crit = PI * i_top;
    if ratio < crit {
        Regime::Subcritical
    } else if ratio <= crit + sigma * i_obs {
        Regime::WindowIii
    } else {
        Regime::CriticalOrAbove
    }
}

/// `∂u/∂n` on the top wall at `x₁` for a single-layer solution (outward normal).
pub fn top_wall_flux_density(sol: &HarmonicSolution, x1: f64) -> f64 {
    let op = sol.operator();
    (0..op.num_panels())
        .map(|j| sol.charges[j] * top_wall_normal_derivative(op.node(j), x1))
        .sum()
}

/// `I_top = ∫_{x₂=π} |∂ρ/∂n| dS` by quadrature on `[−X, X]` plus the
/// exponential tails of the far-field law.
pub fn compute_top_flux(green: &GreenAssembly) -> f64 {
    compute_top_flux_with(green, green.obstacle().extent() + WALL_MARGIN)
}

pub fn compute_top_flux_with(green: &GreenAssembly, half_range: f64) -> f64 {
    let n = (2.0 * half_range / WALL_STEP).ceil() as usize;
    let step = 2.0 * half_range / n as f64;
    let inner: f64 = (0..=n)
        .map(|k| {
            let x1 = -half_range + k as f64 * step;
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            w * top_wall_flux_density(&green.rho, x1).abs()
        })
        .sum::<f64>()
        * step;
    let (rp, rm) = green.far_coefficients();
    inner + (rp + rm) * (-half_range).exp()
}

/// Background flow for one `(b, Γ)`.
#[derive(Debug)]
pub struct Background<'a> {
    pub green: &'a GreenAssembly,
    pub xi: HarmonicSolution,
    pub flow: FlowConfig,
}

impl<'a> Background<'a> {
    pub fn new(green: &'a GreenAssembly, flow: FlowConfig) -> Result<Self> {
        let xi = green.op.solve_xi()?;
        Ok(Self { green, xi, flow })
    }

    pub fn lambda(&self) -> f64 {
        self.flow.lambda
    }

    /// `β(x) = −ξ(x) − (λ/b) ρ(x)`.
    pub fn beta(&self, x: StripPoint) -> Result<f64> {
        Ok(-self.xi.eval(x)? - self.flow.lambda / self.flow.b * self.green.rho(x)?)
    }

    /// `η(x) = b(x₂ + β(x))`.
    pub fn eta(&self, x: StripPoint) -> Result<f64> {
        let prox = self.green.op.proximity(x)?;
        let xi = self.xi.eval_with(x, prox);
        let rho = self.green.rho.eval_with(x, prox);
        Ok(self.flow.b * (x.x2 - xi) - self.flow.lambda * rho)
    }

    /// `∇η(x)` from the layer-potential gradients.
    pub fn grad_eta(&self, x: StripPoint) -> Result<[f64; 2]> {
        let gx = self.xi.grad(x)?;
        let gr = self.green.rho.grad(x)?;
        let (b, l) = (self.flow.b, self.flow.lambda);
        Ok([-b * gx[0] - l * gr[0], b * (1.0 - gx[1]) - l * gr[1]])
    }

    /// `∂(β + x₂)/∂n` at every node.
    pub fn beta_plus_height_normal_derivatives(&self) -> Vec<f64> {
        let ratio = self.flow.lambda / self.flow.b;
        self.green
            .obstacle()
            .panels
            .iter()
            .zip(self.xi.normal_derivatives())
            .zip(self.green.rho.normal_derivatives())
            .map(|((p, dxi), drho)| -dxi - ratio * drho + p.normal[1])
            .collect()
    }

    /// `A(x̂) = b ∂(ξ − x₂)/∂n + λ ∂ρ/∂n`, the normal slope of `η` into the fluid.
    pub fn boundary_slope(&self) -> Vec<f64> {
        self.beta_plus_height_normal_derivatives()
            .iter()
            .map(|d| -self.flow.b * d)
            .collect()
    }

    /// `A` at an arbitrary boundary parameter, by trigonometric interpolation.
    pub fn boundary_slope_at(&self, t: f64) -> f64 {
        let p = self.green.obstacle().shape.sample(t);
        let n2 = p.normal()[1];
        let (b, l) = (self.flow.b, self.flow.lambda);
        b * self.xi.boundary_normal_derivative(t) + l * self.green.rho.boundary_normal_derivative(t) - b * n2
    }

    /// `∮ |∂(β + x₂)/∂n| dS`.
    pub fn circulation_integral(&self) -> f64 {
        self.beta_plus_height_normal_derivatives()
            .iter()
            .zip(&self.green.obstacle().panels)
            .map(|(d, p)| d.abs() * p.weight)
            .sum()
    }

    /// `(β₊, β₋) = −(1/π) ∮ e^{±y₁} sin y₂ ∂(β + y₂)/∂n dS`; requires `λ ≥ 0`.
    pub fn beta_far_coefficients(&self) -> Result<(f64, f64)> {
        if self.flow.regime == Regime::Subcritical {
            return Err(Error::Regime(format!(
                "β± positivity needs Γ/b ≥ π I_top (λ = {:.6e})",
                self.flow.lambda
            )));
        }
        let neg: Vec<f64> = self.beta_plus_height_normal_derivatives().iter().map(|d| -d).collect();
        Ok(self.green.op.far_moments(&neg))
    }

    /// `λ_{b,Γ}` from `(Γ − b ∮ ∂ξ/∂n) / I_obs`, without the top-wall integral.
    pub fn flux_constant_from_xi(&self) -> f64 {
        (self.flow.gamma - self.flow.b * self.xi.flux()) / self.flow.i_obs
    }

    /// `λ_{b,Γ}` from a single flux-constrained solve for `β`.
    pub fn flux_constant_from_constrained_solve(&self) -> Result<f64> {
        let data: Vec<f64> = self.green.obstacle().panels.iter().map(|p| -p.midpoint.x2).collect();
        let sol = self.green.op.solve_constrained(&data, -self.flow.gamma / self.flow.b)?;
        Ok(-self.flow.b * sol.lambda)
    }
}

/// Grid caches of `β` and `η` on the fluid cells of a grid.
#[derive(Debug, Clone)]
pub struct BackgroundField {
    pub beta: Vec<f64>,
    pub eta: Vec<f64>,
}

pub fn build_background(background: &Background<'_>, grid: &TruncatedGrid) -> Result<BackgroundField> {
    let pairs: Vec<Result<(f64, f64)>> = grid
        .fluid
        .par_iter()
        .map(|&idx| {
            let x = grid.center(idx);
            let prox = background.green.op.proximity(x)?;
            let xi = background.xi.eval_with(x, prox);
            let rho = background.green.rho.eval_with(x, prox);
            let beta = -xi - background.flow.lambda / background.flow.b * rho;
            Ok((beta, background.flow.b * (x.x2 + beta)))
        })
        .collect();
    let mut beta = Vec::with_capacity(pairs.len());
    let mut eta = Vec::with_capacity(pairs.len());
    for p in pairs {
        let (b, e) = p?;
        beta.push(b);
        eta.push(e);
    }
    Ok(BackgroundField { beta, eta })
}
