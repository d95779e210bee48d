//! Measurements behind the invariant checks. Each function returns raw
//! numbers; pass/fail limits are applied by the caller.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use strip_vortex_core::patch::IterationRecord;
use strip_vortex_core::strip_kernel::gs_unchecked;
use strip_vortex_core::*;

pub fn assemble_shape(shape: &ObstacleShape, panels: usize) -> Result<GreenAssembly> {
    assemble(build_obstacle(shape, panels)?)
}

/// Least-squares slope of `y` against `x`.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn fluid_probe(rng: &mut ChaCha8Rng, green: &GreenAssembly, x1: f64, margin: f64) -> StripPoint {
    loop {
        let x = StripPoint::new(rng.random_range(-x1..x1), rng.random_range(margin..PI - margin));
        if !green.obstacle().contains(x) && green.obstacle().nearest(x, green.collar()).is_none() {
            return x;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelReport {
    pub pairs: usize,
    pub symmetry: f64,
    pub wall_trace: f64,
    pub far_field_slope: f64,
    pub robin_deviation: f64,
}

pub fn kernel_report(seed: u64, pairs: usize) -> Result<KernelReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let point = |rng: &mut ChaCha8Rng| StripPoint::new(rng.random_range(-5.0..5.0), rng.random_range(0.01..PI - 0.01));
    let mut symmetry: f64 = 0.0;
    let mut wall_trace: f64 = 0.0;
    for _ in 0..pairs {
        let (y, x) = (point(&mut rng), point(&mut rng));
        symmetry = symmetry.max((gs(y, x)? - gs(x, y)?).abs());
        let x1 = x.x1;
        for w in [StripPoint::new(x1, 0.0), StripPoint::new(x1, PI)] {
            wall_trace = wall_trace.max(gs_unchecked(y, w).abs());
        }
    }
    let y = StripPoint::new(0.0, 1.0);
    let (s, v): (Vec<f64>, Vec<f64>) = (0..=16)
        .map(|k| {
            let s = 4.0 + 0.5 * k as f64;
            (s, gs(y, StripPoint::new(s, 2.0)).map(f64::ln))
        })
        .map(|(s, v)| (s, v.expect("interior points")))
        .unzip();
    let mut robin_deviation: f64 = 0.0;
    for k in 1..1000 {
        let x = StripPoint::new(0.3, k as f64 * PI / 1000.0);
        let closed = -(2.0 * x.x2.sin()).ln() / (2.0 * PI);
        robin_deviation = robin_deviation.max((hs_robin(x)? - closed).abs() / closed.abs().max(1.0));
    }
    Ok(KernelReport {
        pairs,
        symmetry,
        wall_trace,
        far_field_slope: slope(&s, &v),
        robin_deviation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BemReport {
    /// `(P, boundary residual of ρ)`.
    pub residuals: Vec<(usize, f64)>,
    pub order: f64,
    pub probes: usize,
    pub rho_min: f64,
    pub rho_max: f64,
    pub decay_slope: f64,
    pub representation_error: f64,
    pub green_identity_error: f64,
}

pub fn bem_report(shape: &ObstacleShape, panels: &[usize], green: &GreenAssembly, seed: u64, probes: usize) -> Result<BemReport> {
    let mut residuals = Vec::new();
    for &p in panels {
        let g = assemble_shape(shape, p)?;
        residuals.push((p, g.rho.boundary_residual(|_| 1.0)));
    }
    let lp: Vec<f64> = residuals.iter().map(|&(p, _)| (p as f64).ln()).collect();
    let lr: Vec<f64> = residuals.iter().map(|&(_, r)| r.ln()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut rho_min, mut rho_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..probes {
        let v = green.rho(fluid_probe(&mut rng, green, 6.0, 1e-3))?;
        rho_min = rho_min.min(v);
        rho_max = rho_max.max(v);
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = (0..=12)
        .map(|k| {
            let x1 = 6.0 + 0.5 * k as f64;
            (x1, green.rho(StripPoint::new(x1, PI / 2.0)).map(f64::ln))
        })
        .map(|(a, b)| b.map(|b| (a, b)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    let x = StripPoint::new(2.0, 1.5);
    let representation_error = (green.rho.representation_check(x)? - green.rho(x)?).abs();
    let mut green_identity_error: f64 = 0.0;
    for x in [StripPoint::new(2.0, 1.5), StripPoint::new(1.0, 0.5), StripPoint::new(-1.5, 2.5), StripPoint::new(0.3, 2.6)] {
        green_identity_error = green_identity_error.max((green.rho_from_green(x)? - green.rho(x)?).abs());
    }
    Ok(BemReport {
        order: -slope(&lp, &lr),
        residuals,
        probes,
        rho_min,
        rho_max,
        decay_slope: slope(&xs, &ys),
        representation_error,
        green_identity_error,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GreenReport {
    pub lambda0: f64,
    pub lambda0_refined: f64,
    pub lambda0_change: f64,
    pub pairs: usize,
    pub symmetry: f64,
    pub min_green: f64,
    pub obstacle_trace: f64,
    pub robin_far_error: f64,
    /// `(d, robin((2, d)) − (1/2π) ln(1/(2d)))` for a disk of radius 0.3.
    pub wall_offsets: Vec<(f64, f64)>,
}

pub fn green_report(shape: &ObstacleShape, green: &GreenAssembly, refined: &GreenAssembly, seed: u64, pairs: usize) -> Result<GreenReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut symmetry: f64 = 0.0;
    let mut min_green = f64::INFINITY;
    for _ in 0..pairs {
        let y = fluid_probe(&mut rng, green, 3.0, 0.05);
        let x = fluid_probe(&mut rng, green, 3.0, 0.05);
        let (a, b) = (green.g(y, x)?, green.g(x, y)?);
        symmetry = symmetry.max((a - b).abs());
        min_green = min_green.min(a.min(b));
    }
    let x = StripPoint::new(1.2, 0.9);
    let target = green.lambda0 * green.rho(x)?;
    let mut obstacle_trace: f64 = 0.0;
    for k in 0..16 {
        let s = green.obstacle().shape.sample(k as f64 * PI / 8.0 + 0.1);
        let n = s.normal();
        let y = StripPoint::new(s.pos[0] - 1e-7 * n[0], s.pos[1] - 1e-7 * n[1]);
        obstacle_trace = obstacle_trace.max((green.g(y, x)? - target).abs());
    }
    let far = StripPoint::new(10.0, 1.0);
    let robin_far_error = (green.robin(far)? + (2.0 * far.x2.sin()).ln() / (2.0 * PI)).abs();
    let small = match shape {
        ObstacleShape::Disk { center, .. } => ObstacleShape::disk(*center, 0.3),
        other => other.clone(),
    };
    let small = assemble_shape(&small, green.op.num_panels())?;
    let mut wall_offsets = Vec::new();
    for d in [0.05, 0.02, 0.01] {
        let r = small.robin(StripPoint::new(2.0, d))?;
        wall_offsets.push((d, r - (1.0 / (2.0 * d)).ln() / (2.0 * PI)));
    }
    Ok(GreenReport {
        lambda0: green.lambda0,
        lambda0_refined: refined.lambda0,
        lambda0_change: (refined.lambda0 - green.lambda0).abs() / refined.lambda0,
        pairs,
        symmetry,
        min_green,
        obstacle_trace,
        robin_far_error,
        wall_offsets,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaRow {
    pub gamma_over_b: f64,
    pub beta_plus: f64,
    pub beta_minus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BackgroundReport {
    pub i_top: f64,
    pub i_obs: f64,
    pub lambda: f64,
    pub lambda_identity: f64,
    pub lambda_relative_error: f64,
    pub circulation: f64,
    pub circulation_target: f64,
    pub circulation_relative_error: f64,
    pub beta: Vec<BetaRow>,
    /// `max/min` over the rows of `min(β±)/(Γ/b)`.
    pub lower_constant_spread: f64,
    /// `max/min` over the rows of `max(β±)/(Γ/b)`.
    pub upper_constant_spread: f64,
}

pub fn background_report(green: &GreenAssembly, i_top: f64, b: f64) -> Result<BackgroundReport> {
    let critical = FlowConfig::critical_gamma(b, i_top);
    let bg = Background::new(green, FlowConfig::new(green, b, 3.0 * critical, 0.05)?)?;
    let lambda = bg.lambda();
    let lambda_identity = bg.flux_constant_from_xi();
    let mut beta = Vec::new();
    for m in [1.0, 2.0, 4.0] {
        let gamma = m * critical;
        let bg = Background::new(green, FlowConfig::new(green, b, gamma, 0.05)?)?;
        let (p, q) = bg.beta_far_coefficients()?;
        beta.push(BetaRow { gamma_over_b: gamma / b, beta_plus: p, beta_minus: q });
    }
    let spread = |f: &dyn Fn(&BetaRow) -> f64| {
        let v: Vec<f64> = beta.iter().map(|r| f(r) / r.gamma_over_b).collect();
        v.iter().copied().fold(f64::NEG_INFINITY, f64::max) / v.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let target = 3.0 * critical / b;
    Ok(BackgroundReport {
        i_top,
        i_obs: bg.flow.i_obs,
        lambda,
        lambda_identity,
        lambda_relative_error: (lambda - lambda_identity).abs() / lambda.abs(),
        circulation: bg.circulation_integral(),
        circulation_target: target,
        circulation_relative_error: (bg.circulation_integral() - target).abs() / target,
        lower_constant_spread: spread(&|r| r.beta_plus.min(r.beta_minus)),
        upper_constant_spread: spread(&|r| r.beta_plus.max(r.beta_minus)),
        beta,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowReport {
    pub minimizer: Minimizer,
    pub minimizers: usize,
    pub half_width: f64,
    pub h: f64,
    /// Distance to the window ends and the walls, in units of `h`.
    pub margin_cells: f64,
    pub frame_minimum: f64,
}

/// Regime (i): global minimizer in the window and the exhaustion inequality
/// against the frame `L ≤ |x₁| ≤ L + 2`.
pub fn window_report(bg: &Background<'_>, half_width: f64, h: f64) -> Result<WindowReport> {
    let kr = KirchhoffRouth::new(bg);
    let (_, mins) = kr.find_minimizers(Region::Window { half_width }, h)?;
    let m = *mins.first().ok_or_else(|| Error::Region("no window minimizer".into()))?;
    let x = m.location;
    let margin = (half_width - x.x1.abs()).min(x.x2).min(PI - x.x2);
    Ok(WindowReport {
        minimizer: m,
        minimizers: mins.len(),
        half_width,
        h,
        margin_cells: margin / h,
        frame_minimum: kr.frame_minimum(half_width, 2.0, h)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerRow {
    pub b: f64,
    pub lambda: f64,
    pub minimizer: Minimizer,
    pub scaled_distance: f64,
    pub inner_shell: f64,
    pub outer_shell: f64,
}

/// Regime (ii): layer minimizer at critical circulation.
pub fn layer_row(green: &GreenAssembly, i_top: f64, b: f64, theta1: f64, theta2: f64) -> Result<LayerRow> {
    let bg = Background::new(green, FlowConfig::new(green, b, FlowConfig::critical_gamma(b, i_top), 0.05)?)?;
    let region = Region::Layer { theta1, theta2 };
    let kr = KirchhoffRouth::for_region(&bg, &region);
    let scale = kr.layer_scale();
    let (_, mins) = kr.find_minimizers(region, 0.5 / scale)?;
    let m = *mins.first().ok_or_else(|| Error::Region("no layer minimizer".into()))?;
    Ok(LayerRow {
        b,
        lambda: bg.lambda(),
        minimizer: m,
        scaled_distance: m.distance_to_obstacle * scale,
        inner_shell: kr.shell_minimum(theta1 / scale, 720)?,
        outer_shell: kr.shell_minimum(theta2 / scale, 720)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoexistenceReport {
    pub b: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub regime: Regime,
    pub layer: Minimizer,
    pub exterior: Minimizer,
    pub separation: f64,
}

/// Regime (iii): `Γ/b = π I_top + ½ σ I_obs`, mid-window.
pub fn coexistence_report(green: &GreenAssembly, i_top: f64, b: f64, sigma: f64, delta: f64, half_width: f64, h: f64) -> Result<CoexistenceReport> {
    let gamma = b * (PI * i_top + 0.5 * sigma * green.obstacle_flux());
    let bg = Background::new(green, FlowConfig::new(green, b, gamma, sigma)?)?;
    let layer = Region::Layer { theta1: 0.05, theta2: 20.0 };
    let kr = KirchhoffRouth::for_region(&bg, &layer);
    let (_, inner) = kr.find_minimizers(layer, 0.5 / kr.layer_scale())?;
    let (_, outer) = KirchhoffRouth::new(&bg).find_minimizers(Region::Exterior { delta, half_width }, h)?;
    let layer = *inner.first().ok_or_else(|| Error::Region("no layer minimizer".into()))?;
    let exterior = *outer.first().ok_or_else(|| Error::Region("no exterior minimizer".into()))?;
    Ok(CoexistenceReport {
        b,
        gamma,
        lambda: bg.lambda(),
        regime: bg.flow.regime,
        separation: layer.location.distance(&exterior.location),
        layer,
        exterior,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceSummary {
    pub max_mass_error: f64,
    pub max_energy_drop: f64,
    pub min_mu: f64,
    pub max_fill: f64,
    pub fractional_cells: usize,
}

pub fn trace_summary(sol: &Solution) -> TraceSummary {
    let t: &[IterationRecord] = &sol.state.trace;
    TraceSummary {
        max_mass_error: t.iter().map(|r| r.mass_error.abs()).fold(0.0, f64::max),
        max_energy_drop: t.windows(2).map(|w| w[0].energy - w[1].energy).fold(0.0, f64::max),
        min_mu: t.iter().map(|r| r.mu).filter(|m| !m.is_nan()).fold(f64::INFINITY, f64::min),
        max_fill: t.iter().map(|r| r.max_fill).fold(0.0, f64::max),
        fractional_cells: sol.state.fractional_cells(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub h: f64,
    pub half_width: f64,
    pub sweep: Sweep,
    pub traces: Vec<TraceSummary>,
    pub exterior_negative: bool,
    pub smallest_eps_distance: f64,
}

/// Regime (i) patch sweep in the window `|x₁| < L`.
pub fn sweep_report(bg: &Background<'_>, half_width: f64, h: f64, eps: &[f64], options: &SolveOptions) -> Result<SweepReport> {
    let kr = KirchhoffRouth::new(bg);
    let region = Region::Window { half_width };
    let (_, mins) = kr.find_minimizers(region, PI / 64.0)?;
    let center = mins.first().ok_or_else(|| Error::Region("no window minimizer".into()))?.location;
    let grid = build_grid(bg.green.obstacle(), half_width, h)?;
    let action = PhysicalAction::new(&kr, &grid, region)?;
    let (sweep, sols) = asymptotic_sweep(&action, eps, center, &mins, options)?;
    let last = sols.last().expect("non-empty sweep");
    Ok(SweepReport {
        h,
        half_width,
        traces: sols.iter().map(trace_summary).collect(),
        exterior_negative: verify_exterior_negativity(&action, &last.state, half_width)?,
        smallest_eps_distance: sweep.rows.last().and_then(|r| r.distance_to_minimizer).unwrap_or(f64::INFINITY),
        sweep,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerPatchReport {
    pub b: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub eps: f64,
    pub h: f64,
    pub layer_scale: f64,
    /// `Ok(report)` or the solver error.
    pub outcome: std::result::Result<SolveReport, String>,
    pub boundary_contact: bool,
    pub scaled_distance: Option<f64>,
}

/// Regime (ii) patch at `ε = ε_scaled/(b+λ)` in the layer.
pub fn layer_patch_report(green: &GreenAssembly, i_top: f64, b: f64, theta1: f64, theta2: f64, eps_scaled: f64, h: f64, options: &SolveOptions) -> Result<LayerPatchReport> {
    let bg = Background::new(green, FlowConfig::new(green, b, FlowConfig::critical_gamma(b, i_top), 0.05)?)?;
    let region = Region::Layer { theta1, theta2 };
    let kr = KirchhoffRouth::for_region(&bg, &region);
    let scale = kr.layer_scale();
    let (_, mins) = kr.find_minimizers(region, 0.5 / scale)?;
    let center = mins.first().ok_or_else(|| Error::Region("no layer minimizer".into()))?.location;
    let obstacle = green.obstacle();
    let half_width = obstacle.extent() + 1.0 + 0.1;
    let grid = build_grid(obstacle, half_width, h)?;
    let action = PhysicalAction::new(&kr, &grid, region)?;
    let eps = eps_scaled / scale;
    let outcome = match solve(&action, eps, center, options) {
        Ok(sol) => Ok(SolveReport::new(&action, &sol, &mins)),
        Err(Error::BoundaryContact { iteration }) => Err(format!("boundary contact at iteration {iteration}")),
        Err(e) => return Err(e),
    };
    let scaled_distance = outcome
        .as_ref()
        .ok()
        .and_then(|r| obstacle.nearest(r.centroid, 1.0))
        .map(|(_, d)| d * scale);
    Ok(LayerPatchReport {
        b,
        theta1,
        theta2,
        eps,
        h,
        layer_scale: scale,
        boundary_contact: outcome.is_err(),
        outcome,
        scaled_distance,
    })
}

/// Gaussian kernel on a 12×12 grid with a tilted bowl for `η`.
pub fn brute_force_instance() -> DenseAction {
    let n = 12;
    let h = 1.0 / n as f64;
    let positions: Vec<StripPoint> = (0..n * n).map(|i| StripPoint::new((i % n) as f64 * h, 1.0 + (i / n) as f64 * h)).collect();
    let eta: Vec<f64> = positions
        .iter()
        .map(|p| 0.8 * ((p.x1 - 0.37).powi(2) + (p.x2 - 1.58).powi(2)) + 0.05 * p.x1)
        .collect();
    let s2 = 2.0 * 0.15f64.powi(2);
    let kernel: Vec<f64> = positions
        .iter()
        .flat_map(|p| positions.iter().map(move |q| (-(p.distance(q).powi(2)) / s2).exp()))
        .collect();
    DenseAction::new(positions, eta, kernel, h).expect("consistent dimensions")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BruteForceReport {
    pub cells: usize,
    pub supports: u64,
    pub exhaustive: f64,
    pub iteration: f64,
    pub converged: bool,
}

/// Compare the iteration with exhaustive search over every vertex of the
/// admissible set for `ε²/h² = 3.5`: three full cells and one half cell.
pub fn brute_force_report() -> Result<BruteForceReport> {
    let action = brute_force_instance();
    let n = action.positions.len();
    let h = action.h;
    let eps = 3.5f64.sqrt() * h;
    let m = h * h / (eps * eps);
    let k = |i: usize, j: usize| action.kernel[i * n + j];
    let exhaustive = (0..n)
        .into_par_iter()
        .map(|a| {
            let mut best = f64::NEG_INFINITY;
            for b in a + 1..n {
                for c in b + 1..n {
                    let full = [a, b, c];
                    let mut base = 0.0;
                    for &i in &full {
                        base -= m * action.eta[i];
                        for &j in &full {
                            base += 0.5 * m * m * k(i, j);
                        }
                    }
                    let md = 0.5 * m;
                    for d in (0..n).filter(|d| !full.contains(d)) {
                        let e = base + md * m * (k(d, a) + k(d, b) + k(d, c)) + 0.5 * md * md * k(d, d) - md * action.eta[d];
                        best = best.max(e);
                    }
                }
            }
            best
        })
        .reduce(|| f64::NEG_INFINITY, f64::max);
    let sol = solve(&action, eps, StripPoint::new(0.37, 1.58), &SolveOptions::default())?;
    let nn = n as u64;
    Ok(BruteForceReport {
        cells: n,
        supports: nn * (nn - 1) * (nn - 2) / 6 * (nn - 3),
        exhaustive,
        iteration: sol.state.energy,
        converged: sol.converged,
    })
}
