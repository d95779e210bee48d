//! Green function of the fluid domain with a constant-value, zero-circulation
//! condition on the obstacle: `G = G_S + R + λ₀ ρ(x) ρ(y)`.
//!
//! The obstacle correction `R(·, x)` is harmonic in Ω, cancels `G_S(·, x)` on
//! the obstacle and vanishes on the walls. For sources close to the obstacle a
//! Kelvin image `x*` inside the obstacle absorbs the near-singular part of the
//! data, so that `R(·, x) = −G_S(·, x*) + R̃` with smooth data for `R̃`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, RwLock};

use crate::bem::{BoundaryOperator, HarmonicSolution};
use crate::error::{Error, Result};
use crate::geometry::ObstacleCurve;
use crate::strip_kernel::{grad_gs_unchecked, gs_unchecked, hs_robin_unchecked, KernelPoint, StripPoint};

const INV_2PI: f64 = 0.5 / PI;

/// Sources closer than this many panel lengths get a Kelvin image.
pub const IMAGE_REACH: f64 = 10.0;
/// Default exclusion width around the obstacle for diagonal quantities, in panel lengths.
pub const DEFAULT_COLLAR: f64 = 2.0;

/// Obstacle correction `R(·, x)` for one source point.
#[derive(Debug)]
pub struct Correction {
    pub source: StripPoint,
    pub image: Option<StripPoint>,
    pub smooth: HarmonicSolution,
}

impl Correction {
    /// `R(y, x)` at a fluid point `y`.
    pub fn eval(&self, y: StripPoint) -> Result<f64> {
        let img = self.image.map_or(0.0, |z| -gs_unchecked(y, z));
        Ok(img + self.smooth.eval(y)?)
    }

    /// `∂R(y, x)/∂n_y` at every node.
    pub fn normal_derivatives(&self) -> Vec<f64> {
        let op = self.smooth.operator();
        let dn = self.smooth.normal_derivatives();
        op.obstacle
            .panels
            .iter()
            .zip(dn)
            .map(|(p, d)| match self.image {
                Some(z) => {
                    let g = grad_gs_unchecked(p.midpoint, z);
                    d - (g[0] * p.normal[0] + g[1] * p.normal[1])
                }
                None => *d,
            })
            .collect()
    }
}

/// Kelvin image of `x` in the osculating circle at its boundary foot point.
fn kelvin_image(obstacle: &ObstacleCurve, x: StripPoint, t: f64, d: f64) -> Option<StripPoint> {
    let s = obstacle.shape.sample(t);
    let n = s.normal();
    let kappa = s.curvature();
    let foot = [s.pos[0], s.pos[1]];
    let candidate = if kappa * d > 1e-6 {
        let r = 1.0 / kappa;
        let c = [foot[0] + r * n[0], foot[1] + r * n[1]];
        let v = [x.x1 - c[0], x.x2 - c[1]];
        let f = r * r / (v[0] * v[0] + v[1] * v[1]);
        StripPoint::new(c[0] + f * v[0], c[1] + f * v[1])
    } else {
        StripPoint::new(x.x1 + 2.0 * d * n[0], x.x2 + 2.0 * d * n[1])
    };
    (candidate.is_interior() && obstacle.contains(candidate) && candidate != x).then_some(candidate)
}

/// Assembled Green function with cached `ρ` and per-source corrections.
#[derive(Debug)]
pub struct GreenAssembly {
    pub op: Arc<BoundaryOperator>,
    pub rho: HarmonicSolution,
    pub lambda0: f64,
    /// Exclusion width for diagonal evaluation, in panel lengths.
    pub collar_panels: f64,
    cache: RwLock<HashMap<(u64, u64), Arc<Correction>>>,
}

/// Solve for `ρ` and `λ₀` on the given panelisation.
pub fn assemble(obstacle: ObstacleCurve) -> Result<GreenAssembly> {
    let op = BoundaryOperator::new(obstacle)?;
    GreenAssembly::new(op)
}

impl GreenAssembly {
    pub fn new(op: Arc<BoundaryOperator>) -> Result<Self> {
        let rho = op.solve_rho()?;
        let flux = rho.flux();
        if !(flux > 0.0) {
            return Err(Error::Singular(format!("obstacle flux of ρ is {flux}, expected positive")));
        }
        Ok(Self {
            op,
            rho,
            lambda0: 1.0 / flux,
            collar_panels: DEFAULT_COLLAR,
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn obstacle(&self) -> &ObstacleCurve {
        &self.op.obstacle
    }

    /// `I_obs = ∮ ∂ρ/∂n dS`.
    pub fn obstacle_flux(&self) -> f64 {
        1.0 / self.lambda0
    }

    pub fn collar(&self) -> f64 {
        self.collar_panels * self.op.obstacle.max_weight
    }

    /// Correction for source `x`, solved afresh.
    pub fn solve_correction(&self, x: StripPoint) -> Result<Correction> {
        let obstacle = &self.op.obstacle;
        if !x.is_interior() || obstacle.contains(x) {
            return Err(Error::Domain(format!("source ({}, {}) is not a fluid point", x.x1, x.x2)));
        }
        let image = self.image_of(x);
        let kx = KernelPoint::new(x);
        let data: Vec<f64> = obstacle
            .panels
            .iter()
            .map(|p| {
                let y = KernelPoint::new(p.midpoint);
                let base = -y.gs(&kx);
                match image {
                    Some(z) => base + gs_unchecked(p.midpoint, z),
                    None => base,
                }
            })
            .collect();
        let smooth = self.op.solve_dirichlet(&data)?;
        Ok(Correction { source: x, image, smooth })
    }

    /// Kelvin image of a source within `IMAGE_REACH` panel lengths of the obstacle.
    pub fn image_of(&self, x: StripPoint) -> Option<StripPoint> {
        let obstacle = &self.op.obstacle;
        let reach = IMAGE_REACH * obstacle.max_weight;
        obstacle.nearest(x, reach).and_then(|(t, d)| kelvin_image(obstacle, x, t, d))
    }

    /// Cached correction for source `x`, keyed by its exact coordinates.
    pub fn correction(&self, x: StripPoint) -> Result<Arc<Correction>> {
        let key = (x.x1.to_bits(), x.x2.to_bits());
        if let Some(c) = self.cache.read().expect("cache lock").get(&key) {
            return Ok(c.clone());
        }
        let fresh = Arc::new(self.solve_correction(x)?);
        let mut w = self.cache.write().expect("cache lock");
        Ok(w.entry(key).or_insert(fresh).clone())
    }

    pub fn cached_corrections(&self) -> usize {
        self.cache.read().expect("cache lock").len()
    }

    pub fn clear_cache(&self) {
        self.cache.write().expect("cache lock").clear();
    }

    pub fn rho(&self, x: StripPoint) -> Result<f64> {
        self.rho.eval(x)
    }

    /// `R(y, x)`.
    pub fn r(&self, y: StripPoint, x: StripPoint) -> Result<f64> {
        self.correction(x)?.eval(y)
    }

    /// `G₀(y, x) = G_S(y, x) + R(y, x)`, zero on the obstacle and the walls.
    pub fn g0(&self, y: StripPoint, x: StripPoint) -> Result<f64> {
        check_distinct(y, x)?;
        Ok(gs_unchecked(y, x) + self.r(y, x)?)
    }

    /// `G(y, x) = G₀(y, x) + λ₀ ρ(x) ρ(y)`.
    pub fn g(&self, y: StripPoint, x: StripPoint) -> Result<f64> {
        Ok(self.g0(y, x)? + self.lambda0 * self.rho(x)? * self.rho(y)?)
    }

    /// `H(y, x) = (1/2π) ln(1/|y − x|) − G(y, x)`.
    pub fn h_regular(&self, y: StripPoint, x: StripPoint) -> Result<f64> {
        Ok(-INV_2PI * y.distance(&x).ln() - self.g(y, x)?)
    }

    fn check_collar(&self, x: StripPoint) -> Result<()> {
        let collar = self.collar();
        if let Some((_, d)) = self.op.obstacle.nearest(x, collar) {
            if !self.op.obstacle.contains(x) {
                return Err(Error::Domain(format!(
                    "({}, {}) lies within the obstacle collar (distance {d:.3e} < {collar:.3e})",
                    x.x1, x.x2
                )));
            }
        }
        Ok(())
    }

    /// `H₀(x, x) = H_S(x, x) − R(x, x)`.
    pub fn h0_diag(&self, x: StripPoint) -> Result<f64> {
        self.check_collar(x)?;
        self.h0_diag_unguarded(x)
    }

    /// [`Self::h0_diag`] without the collar check.
    pub fn h0_diag_unguarded(&self, x: StripPoint) -> Result<f64> {
        let c = self.solve_correction(x)?;
        Ok(hs_robin_unchecked(x) - c.eval(x)?)
    }

    /// Robin function `H(x, x) = H_S(x, x) − R(x, x) − λ₀ ρ(x)²`.
    pub fn robin(&self, x: StripPoint) -> Result<f64> {
        self.check_collar(x)?;
        self.robin_unguarded(x)
    }

    /// [`Self::robin`] without the collar check, for callers that enforce
    /// their own exclusion zone.
    pub fn robin_unguarded(&self, x: StripPoint) -> Result<f64> {
        let rho = self.rho(x)?;
        Ok(self.h0_diag_unguarded(x)? - self.lambda0 * rho * rho)
    }

    /// `(ρ₊, ρ₋) = (1/π) ∮ e^{±y₁} sin y₂ ∂ρ/∂n dS`.
    pub fn far_coefficients(&self) -> (f64, f64) {
        self.op.far_moments(self.rho.normal_derivatives())
    }

    /// `∂G₀(y, x)/∂n_y` at every node.
    pub fn g0_normal_derivatives(&self, x: StripPoint) -> Result<Vec<f64>> {
        let c = self.correction(x)?;
        let dr = c.normal_derivatives();
        Ok(self
            .op
            .obstacle
            .panels
            .iter()
            .zip(dr)
            .map(|(p, r)| {
                let g = grad_gs_unchecked(p.midpoint, x);
                g[0] * p.normal[0] + g[1] * p.normal[1] + r
            })
            .collect())
    }

    /// `ρ(x)` through `−∮ ∂G₀(y, x)/∂n_y dS_y`.
    pub fn rho_from_green(&self, x: StripPoint) -> Result<f64> {
        let dn = self.g0_normal_derivatives(x)?;
        Ok(-dn.iter().zip(&self.op.obstacle.panels).map(|(d, p)| d * p.weight).sum::<f64>())
    }

    /// `c±(x) = (1/π) ∮ e^{±y₁} sin y₂ ∂G(y, x)/∂n_y dS_y`.
    pub fn flux_moments(&self, x: StripPoint) -> Result<(f64, f64)> {
        let mut dn = self.g0_normal_derivatives(x)?;
        let scale = self.lambda0 * self.rho(x)?;
        for (d, r) in dn.iter_mut().zip(self.rho.normal_derivatives()) {
            *d += scale * r;
        }
        Ok(self.op.far_moments(&dn))
    }
}

fn check_distinct(y: StripPoint, x: StripPoint) -> Result<()> {
    if y == x {
        return Err(Error::Singular(format!("coincident points ({}, {})", x.x1, x.x2)));
    }
    if !y.is_interior() || !x.is_interior() {
        return Err(Error::Domain("points must lie strictly inside the strip".into()));
    }
    Ok(())
}
