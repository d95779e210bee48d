//! Obstacle curves, their panel discretisation, and Cartesian grids on
//! truncated windows of the fluid domain.

use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::strip_kernel::StripPoint;

/// Smooth star-shaped obstacle descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase", deny_unknown_fields)]
pub enum ObstacleShape {
    Disk {
        center: [f64; 2],
        radius: f64,
    },
    Ellipse {
        center: [f64; 2],
        semi_axes: [f64; 2],
        #[serde(default)]
        tilt: f64,
    },
    /// `r(φ) = a0 + Σ_k (cos[k−1] cos kφ + sin[k−1] sin kφ)` about `center`.
    Fourier {
        center: [f64; 2],
        a0: f64,
        #[serde(default)]
        cos: Vec<f64>,
        #[serde(default)]
        sin: Vec<f64>,
    },
}

/// Position and first two parameter derivatives of the boundary curve.
#[derive(Debug, Clone, Copy)]
pub struct CurveSample {
    pub pos: [f64; 2],
    pub d1: [f64; 2],
    pub d2: [f64; 2],
}

impl CurveSample {
    pub fn speed(&self) -> f64 {
        self.d1[0].hypot(self.d1[1])
    }

    /// Unit normal pointing out of the fluid domain, i.e. into the obstacle.
    pub fn normal(&self) -> [f64; 2] {
        let s = self.speed();
        [-self.d1[1] / s, self.d1[0] / s]
    }

    /// Signed curvature, positive where the obstacle is locally convex.
    pub fn curvature(&self) -> f64 {
        let s = self.speed();
        (self.d1[0] * self.d2[1] - self.d1[1] * self.d2[0]) / (s * s * s)
    }
}

impl ObstacleShape {
    pub fn disk(center: [f64; 2], radius: f64) -> Self {
        ObstacleShape::Disk { center, radius }
    }

    pub fn center(&self) -> [f64; 2] {
        match self {
            ObstacleShape::Disk { center, .. }
            | ObstacleShape::Ellipse { center, .. }
            | ObstacleShape::Fourier { center, .. } => *center,
        }
    }

    fn validate(&self) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        let c = self.center();
        if !finite(&c) {
            return Err(Error::Geometry("non-finite obstacle centre".into()));
        }
        match self {
            ObstacleShape::Disk { radius, .. } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::Geometry(format!("disk radius {radius} must be positive")));
                }
            }
            ObstacleShape::Ellipse { semi_axes, tilt, .. } => {
                if !(finite(semi_axes) && tilt.is_finite() && semi_axes[0] > 0.0 && semi_axes[1] > 0.0) {
                    return Err(Error::Geometry(format!(
                        "ellipse semi-axes {semi_axes:?} must be positive"
                    )));
                }
            }
            ObstacleShape::Fourier { a0, cos, sin, .. } => {
                if !(a0.is_finite() && finite(cos) && finite(sin)) {
                    return Err(Error::Geometry("non-finite Fourier coefficient".into()));
                }
                let n = 4096;
                for k in 0..n {
                    let phi = TAU * k as f64 / n as f64;
                    if self.fourier_radius(phi)[0] <= 0.0 {
                        return Err(Error::Geometry(format!(
                            "Fourier radius changes sign near φ = {phi:.4} (self-intersection)"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// `[r, r', r'']` of a Fourier descriptor.
    fn fourier_radius(&self, phi: f64) -> [f64; 3] {
        let ObstacleShape::Fourier { a0, cos, sin, .. } = self else {
            unreachable!("fourier_radius on non-Fourier shape")
        };
        let mut r = [*a0, 0.0, 0.0];
        let terms = cos.len().max(sin.len());
        for i in 0..terms {
            let k = (i + 1) as f64;
            let a = cos.get(i).copied().unwrap_or(0.0);
            let b = sin.get(i).copied().unwrap_or(0.0);
            let (s, c) = (k * phi).sin_cos();
            r[0] += a * c + b * s;
            r[1] += k * (b * c - a * s);
            r[2] -= k * k * (a * c + b * s);
        }
        r
    }

    /// Counterclockwise `2π`-periodic parametrisation.
    pub fn sample(&self, t: f64) -> CurveSample {
        let (s, c) = t.sin_cos();
        match self {
            ObstacleShape::Disk { center, radius } => CurveSample {
                pos: [center[0] + radius * c, center[1] + radius * s],
                d1: [-radius * s, radius * c],
                d2: [-radius * c, -radius * s],
            },
            ObstacleShape::Ellipse { center, semi_axes, tilt } => {
                let (st, ct) = tilt.sin_cos();
                let rot = |u: f64, v: f64| [ct * u - st * v, st * u + ct * v];
                let [a, b] = *semi_axes;
                let p = rot(a * c, b * s);
                CurveSample {
                    pos: [center[0] + p[0], center[1] + p[1]],
                    d1: rot(-a * s, b * c),
                    d2: rot(-a * c, -b * s),
                }
            }
            ObstacleShape::Fourier { center, .. } => {
                let [r, r1, r2] = self.fourier_radius(t);
                CurveSample {
                    pos: [center[0] + r * c, center[1] + r * s],
                    d1: [r1 * c - r * s, r1 * s + r * c],
                    d2: [r2 * c - 2.0 * r1 * s - r * c, r2 * s + 2.0 * r1 * c - r * s],
                }
            }
        }
    }

    /// Whether `p` lies in the closed obstacle.
    pub fn contains(&self, p: StripPoint) -> bool {
        let c = self.center();
        let (dx, dy) = (p.x1 - c[0], p.x2 - c[1]);
        match self {
            ObstacleShape::Disk { radius, .. } => dx * dx + dy * dy <= radius * radius,
            ObstacleShape::Ellipse { semi_axes, tilt, .. } => {
                let (st, ct) = tilt.sin_cos();
                let u = ct * dx + st * dy;
                let v = -st * dx + ct * dy;
                (u / semi_axes[0]).powi(2) + (v / semi_axes[1]).powi(2) <= 1.0
            }
            ObstacleShape::Fourier { .. } => {
                let rr = dx.hypot(dy);
                rr <= self.fourier_radius(dy.atan2(dx))[0]
            }
        }
    }
}

/// One collocation panel of the obstacle boundary.
#[derive(Debug, Clone, Copy)]
pub struct Panel {
    /// Parameter value of the midpoint node.
    pub t: f64,
    pub midpoint: StripPoint,
    /// Unit normal pointing into the obstacle (outward of the fluid domain).
    pub normal: [f64; 2],
    /// Arc-length quadrature weight.
    pub weight: f64,
    pub curvature: f64,
    /// Parametric speed `|γ'(t)|`.
    pub speed: f64,
}

/// Panel discretisation of the obstacle boundary.
#[derive(Debug, Clone)]
pub struct ObstacleCurve {
    pub shape: ObstacleShape,
    pub panels: Vec<Panel>,
    /// Parameter step `2π/P`.
    pub dt: f64,
    /// Largest distance from the centre to a boundary sample.
    pub max_radius: f64,
    pub max_weight: f64,
    bounds: [f64; 4],
}

/// Parameter offset of node `j`: nodes sit at `(j + ½)·2π/P`.
pub const NODE_OFFSET: f64 = 0.5;

impl ObstacleCurve {
    pub fn num_panels(&self) -> usize {
        self.panels.len()
    }

    pub fn node_parameter(&self, j: usize) -> f64 {
        (j as f64 + NODE_OFFSET) * self.dt
    }

    /// Parameter interval `[t_j − Δt/2, t_j + Δt/2]` of panel `j`.
    pub fn panel_endpoints(&self, j: usize) -> (f64, f64) {
        let t = self.node_parameter(j);
        (t - 0.5 * self.dt, t + 0.5 * self.dt)
    }

    pub fn perimeter(&self) -> f64 {
        self.panels.iter().map(|p| p.weight).sum()
    }

    /// `∮ x·n dS`, which equals `−2|O₀|` for the inward-pointing normal.
    pub fn flux_of_position(&self) -> f64 {
        self.panels
            .iter()
            .map(|p| (p.midpoint.x1 * p.normal[0] + p.midpoint.x2 * p.normal[1]) * p.weight)
            .sum()
    }

    pub fn enclosed_area(&self) -> f64 {
        -0.5 * self.flux_of_position()
    }

    /// `[min x₁, max x₁, min x₂, max x₂]` over a dense boundary sample.
    pub fn bounds(&self) -> [f64; 4] {
        self.bounds
    }

    /// Largest `|x₁|` reached by the obstacle.
    pub fn extent(&self) -> f64 {
        self.bounds[0].abs().max(self.bounds[1].abs())
    }

    pub fn diameter(&self) -> f64 {
        (self.bounds[1] - self.bounds[0]).max(self.bounds[3] - self.bounds[2])
    }

    pub fn contains(&self, p: StripPoint) -> bool {
        self.shape.contains(p)
    }

    /// Same curve on a different number of panels.
    pub fn with_panels(&self, p: usize) -> Result<ObstacleCurve> {
        build_obstacle(&self.shape, p)
    }

    /// Closest boundary point to `x`, as `(t̂, distance)`.
    ///
    /// Returns `None` when `x` is certainly farther than `reach` from the
    /// curve, which skips the search for the bulk of evaluation points.
    pub fn nearest(&self, x: StripPoint, reach: f64) -> Option<(f64, f64)> {
        let c = self.shape.center();
        let rc = (x.x1 - c[0]).hypot(x.x2 - c[1]);
        if rc > self.max_radius + reach {
            return None;
        }
        let mut best = (0usize, f64::INFINITY);
        for (j, p) in self.panels.iter().enumerate() {
            let d = p.midpoint.distance(&x);
            if d < best.1 {
                best = (j, d);
            }
        }
        let mut t = self.panels[best.0].t;
        for _ in 0..30 {
            let s = self.shape.sample(t);
            let r = [s.pos[0] - x.x1, s.pos[1] - x.x2];
            let g = r[0] * s.d1[0] + r[1] * s.d1[1];
            let gp = s.d1[0] * s.d1[0] + s.d1[1] * s.d1[1] + r[0] * s.d2[0] + r[1] * s.d2[1];
            let step = if gp > 0.0 {
                (g / gp).clamp(-self.dt, self.dt)
            } else {
                -g.signum() * 0.25 * self.dt
            };
            t -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let s = self.shape.sample(t);
        let mut d = (s.pos[0] - x.x1).hypot(s.pos[1] - x.x2);
        if !(d <= best.1) {
            t = self.panels[best.0].t;
            d = best.1;
        }
        if d > reach {
            None
        } else {
            Some((t.rem_euclid(TAU), d))
        }
    }
}

/// Discretise `shape` into `p` panels with midpoint nodes.
pub fn build_obstacle(shape: &ObstacleShape, p: usize) -> Result<ObstacleCurve> {
    if p < 16 {
        return Err(Error::Geometry(format!("panel count {p} below the minimum of 16")));
    }
    shape.validate()?;
    let dt = TAU / p as f64;
    let c = shape.center();
    let dense = 4096.max(4 * p);
    let mut bounds = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
    let mut max_radius: f64 = 0.0;
    for k in 0..dense {
        let s = shape.sample(TAU * k as f64 / dense as f64);
        bounds[0] = bounds[0].min(s.pos[0]);
        bounds[1] = bounds[1].max(s.pos[0]);
        bounds[2] = bounds[2].min(s.pos[1]);
        bounds[3] = bounds[3].max(s.pos[1]);
        max_radius = max_radius.max((s.pos[0] - c[0]).hypot(s.pos[1] - c[1]));
    }
    if !(bounds[2] > 0.0 && bounds[3] < PI) {
        return Err(Error::Geometry(format!(
            "obstacle spans x₂ ∈ [{:.6}, {:.6}], not strictly inside (0, π)",
            bounds[2], bounds[3]
        )));
    }
    let panels: Vec<Panel> = (0..p)
        .map(|j| {
            let t = (j as f64 + NODE_OFFSET) * dt;
            let s = shape.sample(t);
            Panel {
                t,
                midpoint: StripPoint::new(s.pos[0], s.pos[1]),
                normal: s.normal(),
                weight: s.speed() * dt,
                curvature: s.curvature(),
                speed: s.speed(),
            }
        })
        .collect();
    let max_weight = panels.iter().map(|q| q.weight).fold(0.0, f64::max);
    Ok(ObstacleCurve {
        shape: shape.clone(),
        panels,
        dt,
        max_radius,
        max_weight,
        bounds,
    })
}

/// Cell-centred grid on `Ω_L = {x ∈ Ω : −L < x₁ < L}`.
#[derive(Debug, Clone)]
pub struct TruncatedGrid {
    pub half_width: f64,
    pub h: f64,
    pub n1: usize,
    pub n2: usize,
    /// `mask[i * n2 + k]` is true for cells whose centre lies in the closed obstacle.
    pub mask: Vec<bool>,
    /// Flat indices of unmasked cells, in row-major `(i, k)` order.
    pub fluid: Vec<usize>,
}

impl TruncatedGrid {
    pub fn cell_area(&self) -> f64 {
        self.h * self.h
    }

    pub fn index(&self, i: usize, k: usize) -> usize {
        i * self.n2 + k
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx / self.n2, idx % self.n2)
    }

    pub fn center(&self, idx: usize) -> StripPoint {
        let (i, k) = self.coords(idx);
        self.center_of(i, k)
    }

    pub fn center_of(&self, i: usize, k: usize) -> StripPoint {
        StripPoint::new(
            (i as f64 - 0.5 * (self.n1 as f64 - 1.0)) * self.h,
            (k as f64 + 0.5) * self.h,
        )
    }

    pub fn is_fluid(&self, idx: usize) -> bool {
        !self.mask[idx]
    }

    pub fn fluid_area(&self) -> f64 {
        self.fluid.len() as f64 * self.cell_area()
    }

    /// Neighbour indices (4-connected) that exist in the grid.
    pub fn neighbours(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let (i, k) = self.coords(idx);
        let (i, k) = (i as isize, k as isize);
        [(-1, 0), (1, 0), (0, -1), (0, 1)].into_iter().filter_map(move |(di, dk)| {
            let (a, b) = (i + di, k + dk);
            (a >= 0 && b >= 0 && (a as usize) < self.n1 && (b as usize) < self.n2)
                .then(|| a as usize * self.n2 + b as usize)
        })
    }

    /// Stable hash of the grid layout, used to tag field files.
    pub fn layout_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(self.half_width.to_bits().to_le_bytes());
        hasher.update(self.h.to_bits().to_le_bytes());
        hasher.update((self.n1 as u64).to_le_bytes());
        hasher.update((self.n2 as u64).to_le_bytes());
        for &m in &self.mask {
            hasher.update([m as u8]);
        }
        hasher.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Grid of spacing `h` on `Ω_L`, masking cells whose centre lies in the obstacle.
pub fn build_grid(obstacle: &ObstacleCurve, half_width: f64, h: f64) -> Result<TruncatedGrid> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Config(format!("cell size h = {h} must be positive")));
    }
    let n2f = PI / h;
    let n2 = n2f.round();
    if (n2f - n2).abs() > 1e-9 * n2f.max(1.0) {
        return Err(Error::Config(format!("π/h = {n2f} is not an integer")));
    }
    if h > PI / 32.0 + 1e-15 {
        return Err(Error::Config(format!("cell size h = {h} exceeds π/32")));
    }
    let b = obstacle.bounds();
    let half_extent = 0.5 * (b[1] - b[0]);
    if !(half_width > half_extent + 1.0 && half_width > obstacle.extent()) {
        return Err(Error::Config(format!(
            "half-width L = {half_width} must exceed the obstacle half-width {half_extent} + 1 and contain x₁ ∈ [{}, {}]",
            b[0], b[1]
        )));
    }
    let n2 = n2 as usize;
    let n1 = (2.0 * half_width / h + 1e-9).floor() as usize;
    let mut grid = TruncatedGrid {
        half_width,
        h,
        n1,
        n2,
        mask: vec![false; n1 * n2],
        fluid: Vec::new(),
    };
    for idx in 0..n1 * n2 {
        let c = grid.center(idx);
        let candidate = c.x1 >= b[0] && c.x1 <= b[1] && c.x2 >= b[2] && c.x2 <= b[3];
        grid.mask[idx] = candidate && obstacle.contains(c);
    }
    grid.fluid = (0..n1 * n2).filter(|&i| !grid.mask[i]).collect();
    Ok(grid)
}
