//! Single-layer Nyström solver for Dirichlet problems in the strip with an
//! obstacle, built on the exact strip kernel so that only the obstacle
//! boundary needs discretising.
//!
//! Charges `q_j = σ_j w_j` live at the panel nodes. The log-singular
//! diagonal uses the corrected trapezoid rule
//! `S_ii = −(1/2π) ln(w_i/2π) − H_S(y_i, y_i)`, which is third-order
//! accurate on smooth closed curves.

use nalgebra::{DMatrix, DVector, LU};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::{PI, TAU};
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::geometry::ObstacleCurve;
use crate::strip_kernel::{grad_gs_unchecked, hs_robin_unchecked, KernelPoint, StripPoint};

const INV_2PI: f64 = 0.5 / PI;
const INV_4PI: f64 = 0.25 / PI;

/// Largest trigonometric upsampling factor used for near-boundary evaluation.
pub const MAX_UPSAMPLE: usize = 64;
const UPSAMPLE_LEVELS: usize = 7; // 1, 2, 4, ..., 64
/// Points closer than `NEAR_FACTOR · w_max / m` use upsampling factor `2m`.
const NEAR_FACTOR: f64 = 4.0;
/// Condition estimate beyond which a panelisation is rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// Trigonometric interpolant of values sampled at `t0 + j·2π/n`.
#[derive(Debug, Clone)]
pub struct TrigInterp {
    t0: f64,
    /// `(k, c_k)` with `v(t) = Σ c_k e^{ik(t − t0)}`, Nyquist split symmetrically.
    coeffs: Vec<(f64, Complex64)>,
}

impl TrigInterp {
    pub fn new(values: &[f64], t0: f64) -> Self {
        let n = values.len();
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let scale = 1.0 / n as f64;
        let mut coeffs = Vec::with_capacity(n + 1);
        for (k, c) in buf.iter().enumerate() {
            let c = c * scale;
            if 2 * k < n {
                coeffs.push((k as f64, c));
            } else if 2 * k == n {
                coeffs.push((k as f64, 0.5 * c));
                coeffs.push((-(k as f64), 0.5 * c));
            } else {
                coeffs.push((k as f64 - n as f64, c));
            }
        }
        Self { t0, coeffs }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let s = t - self.t0;
        self.coeffs
            .iter()
            .map(|(k, c)| {
                let (sn, cs) = (k * s).sin_cos();
                c.re * cs - c.im * sn
            })
            .sum()
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let s = t - self.t0;
        self.coeffs
            .iter()
            .map(|(k, c)| {
                let (sn, cs) = (k * s).sin_cos();
                -k * (c.re * sn + c.im * cs)
            })
            .sum()
    }
}

/// Values of the trigonometric interpolant of `values` on an `m`-times finer grid
/// sharing the first sample point.
pub fn upsample(values: &[f64], m: usize) -> Vec<f64> {
    let n = values.len();
    if m == 1 {
        return values.to_vec();
    }
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    let big = n * m;
    let mut pad = vec![Complex64::new(0.0, 0.0); big];
    for (k, c) in buf.iter().enumerate() {
        if 2 * k < n {
            pad[k] = *c;
        } else if 2 * k == n {
            pad[k] = 0.5 * c;
            pad[big - k] = 0.5 * c;
        } else {
            pad[big - (n - k)] = *c;
        }
    }
    planner.plan_fft_inverse(big).process(&mut pad);
    let scale = 1.0 / n as f64;
    pad.iter().map(|c| c.re * scale).collect()
}

#[derive(Debug)]
struct FineGeometry {
    t: Vec<f64>,
    points: Vec<KernelPoint>,
    speed: Vec<f64>,
    normal: Vec<[f64; 2]>,
    dt: f64,
}

/// How a field point is evaluated relative to the obstacle boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Proximity {
    /// Plain trapezoid sum over the panel nodes.
    Far,
    /// Trapezoid sum over an `m`-fold upsampled density.
    Upsampled(usize),
    /// First-order expansion about the boundary foot point `t̂` at distance `d`.
    Taylor { t: f64, d: f64 },
}

/// Discretised single-layer operator on one obstacle panelisation.
#[derive(Debug)]
pub struct BoundaryOperator {
    pub obstacle: ObstacleCurve,
    nodes: Vec<KernelPoint>,
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    condition: f64,
    fine: [OnceLock<FineGeometry>; UPSAMPLE_LEVELS],
}

impl BoundaryOperator {
    pub fn new(obstacle: ObstacleCurve) -> Result<Arc<Self>> {
        let p = obstacle.num_panels();
        let nodes: Vec<KernelPoint> = obstacle.panels.iter().map(|q| KernelPoint::new(q.midpoint)).collect();
        let mut s = DMatrix::<f64>::zeros(p, p);
        for i in 0..p {
            for j in 0..p {
                s[(i, j)] = if i == j {
                    let q = &obstacle.panels[i];
                    -INV_2PI * (q.weight / TAU).ln() - hs_robin_unchecked(q.midpoint)
                } else {
                    nodes[j].gs(&nodes[i])
                };
            }
        }
        let norm1 = column_norm1(&s);
        let lu = s.lu();
        let inverse = lu
            .try_inverse()
            .ok_or(Error::IllConditioned { estimate: f64::INFINITY })?;
        let condition = norm1 * column_norm1(&inverse);
        if !(condition < MAX_CONDITION) {
            return Err(Error::IllConditioned { estimate: condition });
        }
        Ok(Arc::new(Self {
            obstacle,
            nodes,
            lu,
            condition,
            fine: Default::default(),
        }))
    }

    pub fn num_panels(&self) -> usize {
        self.nodes.len()
    }

    /// 1-norm condition number of the single-layer matrix.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn node(&self, j: usize) -> StripPoint {
        self.nodes[j].p
    }

    /// Charges whose potential equals `data` at the panel nodes.
    pub fn solve_charges(&self, data: &[f64]) -> Vec<f64> {
        let rhs = DVector::from_column_slice(data);
        self.lu.solve(&rhs).expect("factorisation checked at construction").as_slice().to_vec()
    }

    fn fine(&self, level: usize) -> &FineGeometry {
        self.fine[level].get_or_init(|| {
            let m = 1usize << level;
            let dt = self.obstacle.dt / m as f64;
            let n = self.num_panels() * m;
            let t: Vec<f64> = (0..n).map(|l| self.obstacle.node_parameter(0) + l as f64 * dt).collect();
            let samples: Vec<_> = t.iter().map(|&t| self.obstacle.shape.sample(t)).collect();
            FineGeometry {
                points: samples
                    .iter()
                    .map(|s| KernelPoint::new(StripPoint::new(s.pos[0], s.pos[1])))
                    .collect(),
                speed: samples.iter().map(|s| s.speed()).collect(),
                normal: samples.iter().map(|s| s.normal()).collect(),
                t,
                dt,
            }
        })
    }

    /// Classify `x` for evaluation; errors if `x` lies in the closed obstacle.
    pub fn proximity(&self, x: StripPoint) -> Result<Proximity> {
        if !x.is_interior() {
            return Err(Error::Domain(format!("({}, {}) is not an interior strip point", x.x1, x.x2)));
        }
        let w = self.obstacle.max_weight;
        let reach = NEAR_FACTOR * w;
        if self.obstacle.contains(x) {
            return Err(Error::Domain(format!("({}, {}) lies inside the obstacle", x.x1, x.x2)));
        }
        let Some((t, d)) = self.obstacle.nearest(x, reach) else {
            return Ok(Proximity::Far);
        };
        if d >= reach {
            return Ok(Proximity::Far);
        }
        let m = (reach / d).ceil().max(2.0);
        if m > MAX_UPSAMPLE as f64 {
            return Ok(Proximity::Taylor { t, d });
        }
        Ok(Proximity::Upsampled((m as usize).next_power_of_two()))
    }

    /// Distance from `x` to the boundary if it is below `reach`.
    pub fn boundary_distance(&self, x: StripPoint, reach: f64) -> Option<(f64, f64)> {
        self.obstacle.nearest(x, reach)
    }

    /// Weighted moments `(1/π) Σ e^{±y₁} sin y₂ v_i w_i`.
    pub fn far_moments(&self, values: &[f64]) -> (f64, f64) {
        let (mut plus, mut minus) = (0.0, 0.0);
        for (panel, v) in self.obstacle.panels.iter().zip(values) {
            let base = panel.midpoint.x2.sin() * v * panel.weight / PI;
            plus += panel.midpoint.x1.exp() * base;
            minus += (-panel.midpoint.x1).exp() * base;
        }
        (plus, minus)
    }
}

fn column_norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Harmonic function represented as a single layer on the obstacle.
#[derive(Debug)]
pub struct HarmonicSolution {
    op: Arc<BoundaryOperator>,
    /// Charges `q_j = σ_j w_j`.
    pub charges: Vec<f64>,
    /// Flux constant: the boundary value is `f + λ`.
    pub lambda: f64,
    /// Boundary values `f(y_j) + λ` at the nodes.
    pub trace: Vec<f64>,
    normal: OnceLock<Vec<f64>>,
    fine: [OnceLock<Vec<f64>>; UPSAMPLE_LEVELS],
    trace_interp: OnceLock<TrigInterp>,
    normal_interp: OnceLock<TrigInterp>,
}

impl Clone for HarmonicSolution {
    fn clone(&self) -> Self {
        Self::from_charges(self.op.clone(), self.charges.clone(), self.lambda, self.trace.clone())
    }
}

impl HarmonicSolution {
    fn from_charges(op: Arc<BoundaryOperator>, charges: Vec<f64>, lambda: f64, trace: Vec<f64>) -> Self {
        Self {
            op,
            charges,
            lambda,
            trace,
            normal: OnceLock::new(),
            fine: Default::default(),
            trace_interp: OnceLock::new(),
            normal_interp: OnceLock::new(),
        }
    }

    pub fn operator(&self) -> &Arc<BoundaryOperator> {
        &self.op
    }

    pub fn obstacle(&self) -> &ObstacleCurve {
        &self.op.obstacle
    }

    /// Layer density `σ_j` at node `j`.
    pub fn density(&self, j: usize) -> f64 {
        self.charges[j] / self.op.obstacle.panels[j].weight
    }

    pub fn total_charge(&self) -> f64 {
        self.charges.iter().sum()
    }

    /// `∂u/∂n` at node `i`, with `n` pointing into the obstacle.
    pub fn normal_derivative(&self, i: usize) -> f64 {
        self.normal_derivatives()[i]
    }

    pub fn normal_derivatives(&self) -> &[f64] {
        self.normal.get_or_init(|| node_normal_derivatives(&self.op, &self.charges))
    }

    /// Quadrature of `∂u/∂n` over the obstacle boundary.
    pub fn flux(&self) -> f64 {
        self.normal_derivatives().iter().zip(&self.op.obstacle.panels).map(|(d, p)| d * p.weight).sum()
    }

    fn level_charges(&self, level: usize) -> &[f64] {
        self.fine[level].get_or_init(|| {
            let m = 1usize << level;
            let sigma: Vec<f64> = (0..self.charges.len()).map(|j| self.density(j)).collect();
            let fine_sigma = upsample(&sigma, m);
            let g = self.op.fine(level);
            fine_sigma.iter().zip(&g.speed).map(|(s, v)| s * v * g.dt).collect()
        })
    }

    fn trace_interp(&self) -> &TrigInterp {
        self.trace_interp
            .get_or_init(|| TrigInterp::new(&self.trace, self.op.obstacle.node_parameter(0)))
    }

    fn normal_interp(&self) -> &TrigInterp {
        self.normal_interp
            .get_or_init(|| TrigInterp::new(self.normal_derivatives(), self.op.obstacle.node_parameter(0)))
    }

    /// Boundary value at parameter `t`, by trigonometric interpolation.
    pub fn boundary_value(&self, t: f64) -> f64 {
        self.trace_interp().eval(t)
    }

    /// `∂u/∂n` at parameter `t`, by trigonometric interpolation.
    pub fn boundary_normal_derivative(&self, t: f64) -> f64 {
        self.normal_interp().eval(t)
    }

    /// Plain trapezoid sum; accurate only at points well away from the boundary.
    pub fn eval_far(&self, x: StripPoint) -> f64 {
        let kx = KernelPoint::new(x);
        self.op.nodes.iter().zip(&self.charges).map(|(y, q)| q * y.gs(&kx)).sum()
    }

    /// `u(x)` at any fluid point, switching to upsampled quadrature near the boundary.
    pub fn eval(&self, x: StripPoint) -> Result<f64> {
        Ok(self.eval_with(x, self.op.proximity(x)?))
    }

    /// `u(x)` for a precomputed [`Proximity`] classification of `x`.
    pub fn eval_with(&self, x: StripPoint, prox: Proximity) -> f64 {
        match prox {
            Proximity::Far => self.eval_far(x),
            Proximity::Upsampled(m) => {
                let level = m.trailing_zeros() as usize;
                let g = self.op.fine(level);
                let kx = KernelPoint::new(x);
                g.points.iter().zip(self.level_charges(level)).map(|(y, q)| q * y.gs(&kx)).sum()
            }
            Proximity::Taylor { t, d } => self.boundary_value(t) - d * self.boundary_normal_derivative(t),
        }
    }

    /// `∇u(x)` at any fluid point.
    pub fn grad(&self, x: StripPoint) -> Result<[f64; 2]> {
        let prox = self.op.proximity(x)?;
        let sum = |pts: &[KernelPoint], q: &[f64]| {
            let mut g = [0.0, 0.0];
            for (y, q) in pts.iter().zip(q) {
                let d = grad_gs_unchecked(x, y.p);
                g[0] += q * d[0];
                g[1] += q * d[1];
            }
            g
        };
        Ok(match prox {
            Proximity::Far => sum(&self.op.nodes, &self.charges),
            Proximity::Upsampled(m) => {
                let level = m.trailing_zeros() as usize;
                sum(&self.op.fine(level).points, self.level_charges(level))
            }
            Proximity::Taylor { t, .. } => {
                let s = self.op.obstacle.shape.sample(t);
                let n = s.normal();
                let dn = self.boundary_normal_derivative(t);
                let ds = self.trace_interp().derivative(t) / s.speed();
                // tangent (counterclockwise) is (n₂, −n₁)
                [dn * n[0] + ds * n[1], dn * n[1] - ds * n[0]]
            }
        })
    }

    /// Boundary integral `∮ [G_S(y,x) ∂u/∂n − u ∂G_S(y,x)/∂n] dS_y`.
    pub fn representation_check(&self, x: StripPoint) -> Result<f64> {
        let w = self.op.obstacle.max_weight;
        if let Some((_, d)) = self.op.obstacle.nearest(x, 2.0 * w) {
            return Err(Error::NearSingularQuadrature { distance: d, minimum: 2.0 * w });
        }
        if !x.is_interior() || self.op.obstacle.contains(x) {
            return Err(Error::Domain(format!("({}, {}) is not a fluid point", x.x1, x.x2)));
        }
        let kx = KernelPoint::new(x);
        let normal = self.normal_derivatives();
        let mut acc = 0.0;
        for (j, panel) in self.op.obstacle.panels.iter().enumerate() {
            let y = &self.op.nodes[j];
            let g = grad_gs_unchecked(y.p, x);
            let dg = g[0] * panel.normal[0] + g[1] * panel.normal[1];
            acc += (y.gs(&kx) * normal[j] - self.trace[j] * dg) * panel.weight;
        }
        Ok(acc)
    }

    /// Largest deviation of the boundary trace from `data + λ` at the panel
    /// endpoints, where the collocation conditions are not imposed.
    pub fn boundary_residual(&self, data: impl Fn(StripPoint) -> f64) -> f64 {
        let g = self.op.fine(1);
        let q = self.level_charges(1);
        let n = g.points.len();
        (0..n)
            .filter(|k| k % 2 == 1)
            .map(|k| {
                let x = &g.points[k];
                let mut u = 0.0;
                for (l, (y, ql)) in g.points.iter().zip(q).enumerate() {
                    if l != k {
                        u += ql * y.gs(x);
                    }
                }
                let w = g.speed[k] * g.dt;
                u += q[k] * (-INV_2PI * (w / TAU).ln() - hs_robin_unchecked(x.p));
                (u - data(x.p) - self.lambda).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Parameter values and normals of the `m`-fold fine grid.
    pub fn fine_nodes(&self, m: usize) -> Vec<(f64, StripPoint, [f64; 2])> {
        let g = self.op.fine(m.trailing_zeros() as usize);
        g.t.iter().zip(&g.points).zip(&g.normal).map(|((t, p), n)| (*t, p.p, *n)).collect()
    }
}

fn node_normal_derivatives(op: &BoundaryOperator, charges: &[f64]) -> Vec<f64> {
    let panels = &op.obstacle.panels;
    (0..panels.len())
        .map(|i| {
            let pi = &panels[i];
            let x = pi.midpoint;
            let mut acc = 0.0;
            for (j, y) in op.nodes.iter().enumerate() {
                if j != i {
                    let g = grad_gs_unchecked(x, y.p);
                    acc += charges[j] * (g[0] * pi.normal[0] + g[1] * pi.normal[1]);
                }
            }
            let diag = INV_4PI * (pi.curvature + pi.normal[1] / x.x2.tan());
            acc + charges[i] * diag + 0.5 * charges[i] / pi.weight
        })
        .collect()
}

impl BoundaryOperator {
    /// Solution with boundary value `data` and no flux constraint.
    pub fn solve_dirichlet(self: &Arc<Self>, data: &[f64]) -> Result<HarmonicSolution> {
        self.check_data(data)?;
        let q = self.solve_charges(data);
        Ok(HarmonicSolution::from_charges(self.clone(), q, 0.0, data.to_vec()))
    }

    /// Solution with boundary value `data + λ` whose flux `∮ ∂u/∂n` equals `flux`.
    ///
    /// The single-layer charge equals the flux through the boundary, so the
    /// constraint is the linear row `Σ q_j = flux`; it is eliminated with the
    /// Schur complement `λ = (flux − 1ᵀS⁻¹f) / 1ᵀS⁻¹1`.
    pub fn solve_constrained(self: &Arc<Self>, data: &[f64], flux: f64) -> Result<HarmonicSolution> {
        self.check_data(data)?;
        let qf = self.solve_charges(data);
        let ones = self.solve_charges(&vec![1.0; data.len()]);
        let i1: f64 = ones.iter().sum();
        let lambda = (flux - qf.iter().sum::<f64>()) / i1;
        let q: Vec<f64> = qf.iter().zip(&ones).map(|(a, b)| a + lambda * b).collect();
        let trace = data.iter().map(|f| f + lambda).collect();
        Ok(HarmonicSolution::from_charges(self.clone(), q, lambda, trace))
    }

    /// `ρ`: equal to 1 on the obstacle, 0 on the walls, decaying at infinity.
    pub fn solve_rho(self: &Arc<Self>) -> Result<HarmonicSolution> {
        self.solve_dirichlet(&vec![1.0; self.num_panels()])
    }

    /// `ξ`: equal to `x₂` on the obstacle, 0 on the walls, decaying at infinity.
    pub fn solve_xi(self: &Arc<Self>) -> Result<HarmonicSolution> {
        let data: Vec<f64> = self.obstacle.panels.iter().map(|p| p.midpoint.x2).collect();
        self.solve_dirichlet(&data)
    }

    /// Solution for data given as a function of the boundary point.
    pub fn solve_function(self: &Arc<Self>, f: impl Fn(StripPoint) -> f64) -> Result<HarmonicSolution> {
        let data: Vec<f64> = self.obstacle.panels.iter().map(|p| f(p.midpoint)).collect();
        self.solve_dirichlet(&data)
    }

    fn check_data(&self, data: &[f64]) -> Result<()> {
        if data.len() != self.num_panels() {
            return Err(Error::Precondition(format!(
                "boundary data has {} samples for {} panels",
                data.len(),
                self.num_panels()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Precondition("non-finite boundary data".into()));
        }
        Ok(())
    }
}
