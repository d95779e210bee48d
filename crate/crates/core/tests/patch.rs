use std::f64::consts::PI;
use std::sync::OnceLock;

use proptest::prelude::*;
use rayon::prelude::*;
use strip_vortex_core::patch::{cell_log_kernel, square_log_mean, IterationRecord};
use strip_vortex_core::*;

struct Fixture {
    green: GreenAssembly,
    i_top: f64,
}

fn fixture() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let green = assemble(build_obstacle(&ObstacleShape::disk([0.0, PI / 2.0], 0.5), 128).unwrap()).unwrap();
        let i_top = compute_top_flux(&green);
        Fixture { green, i_top }
    })
}

fn background() -> &'static Background<'static> {
    static CELL: OnceLock<Background<'static>> = OnceLock::new();
    CELL.get_or_init(|| {
        let f = fixture();
        Background::new(&f.green, FlowConfig::new(&f.green, 1.0, FlowConfig::critical_gamma(1.0, f.i_top), 0.05).unwrap())
            .unwrap()
    })
}

fn kr() -> KirchhoffRouth<'static> {
    KirchhoffRouth::new(background())
}

fn grid(l: f64, h: f64) -> &'static TruncatedGrid {
    Box::leak(Box::new(build_grid(fixture().green.obstacle(), l, h).unwrap()))
}

fn fine_action() -> &'static PhysicalAction<'static> {
    static CELL: OnceLock<PhysicalAction<'static>> = OnceLock::new();
    CELL.get_or_init(|| PhysicalAction::new(&kr(), grid(3.0, PI / 512.0), Region::Window { half_width: 3.0 }).unwrap())
}

fn coarse_action() -> &'static PhysicalAction<'static> {
    static CELL: OnceLock<PhysicalAction<'static>> = OnceLock::new();
    CELL.get_or_init(|| PhysicalAction::new(&kr(), grid(6.0, PI / 64.0), Region::Window { half_width: 6.0 }).unwrap())
}

fn minimizers() -> &'static Vec<Minimizer> {
    static CELL: OnceLock<Vec<Minimizer>> = OnceLock::new();
    CELL.get_or_init(|| kr().find_minimizers(Region::Window { half_width: 3.0 }, PI / 64.0).unwrap().1)
}

fn nearest_cell(action: &dyn GreenAction, x: StripPoint) -> usize {
    (0..action.len())
        .min_by(|&a, &b| action.position(a).distance(&x).total_cmp(&action.position(b).distance(&x)))
        .unwrap()
}

fn psi_of(values: &[f64]) -> Vec<(usize, f64)> {
    values.iter().copied().enumerate().collect()
}

#[test]
fn bathtub_single_peak() {
    let h = 0.1;
    let psi: Vec<f64> = (0..100).map(|i| -((i as f64) - 40.3).abs()).collect();
    let eps = (3.4f64).sqrt() * h;
    let bt = bathtub_threshold(&psi_of(&psi), eps, h * h).unwrap();
    assert_eq!(bt.cells.len(), 4);
    let fractional: Vec<_> = bt.cells.iter().filter(|&&(_, f)| f < 1.0).collect();
    assert_eq!(fractional.len(), 1);
    let mass: f64 = bt.cells.iter().map(|&(_, f)| f * h * h / (eps * eps)).sum();
    assert!((mass - 1.0).abs() < 1e-14);
    let mut support = bt.support();
    support.sort();
    assert_eq!(support, vec![39, 40, 41, 42]);
    assert_eq!(bt.mu, psi[fractional[0].0]);
}

#[test]
fn bathtub_plateau_fills_uniformly() {
    let h = 0.2;
    let n = 50;
    let eps = 0.5;
    let bt = bathtub_threshold(&psi_of(&vec![1.25; n]), eps, h * h).unwrap();
    assert_eq!(bt.cells.len(), n);
    let area = n as f64 * h * h;
    assert!((bt.c_eps - eps * eps / area).abs() < 1e-15);
    assert_eq!(bt.mu, 1.25);
}

#[test]
fn bathtub_symmetric_peaks_split_mass() {
    let h = 0.1;
    let x: Vec<f64> = (0..40).map(|i| -1.95 + 0.1 * i as f64).collect();
    let psi: Vec<f64> = x.iter().map(|&s| -(s.abs() - 1.0).powi(2)).collect();
    let eps = (3.0f64).sqrt() * h;
    let bt = bathtub_threshold(&psi_of(&psi), eps, h * h).unwrap();
    let (mut left, mut right) = (0.0, 0.0);
    for &(c, f) in &bt.cells {
        if x[c] < 0.0 {
            left += f;
        } else {
            right += f;
        }
    }
    assert!((left - right).abs() < 1e-12, "{left} vs {right}");
}

#[test]
fn bathtub_rejects_small_region() {
    let r = bathtub_threshold(&psi_of(&[0.0; 3]), 1.0, 0.25);
    assert!(matches!(r, Err(Error::Infeasible(_))));
}

proptest! {
    #[test]
    fn bathtub_mass_and_threshold(values in prop::collection::vec(-5.0f64..5.0, 20..200), ratio in 1.0f64..15.0) {
        let h = 0.05;
        let eps = ratio.sqrt() * h;
        prop_assume!((values.len() as f64) > ratio);
        let psi = psi_of(&values);
        let bt = bathtub_threshold(&psi, eps, h * h).unwrap();
        let mass: f64 = bt.cells.iter().map(|&(_, f)| f * h * h / (eps * eps)).sum();
        prop_assert!((mass - 1.0).abs() < 1e-12);
        prop_assert!(bt.cells.iter().all(|&(_, f)| f > 0.0 && f <= 1.0));
        let chosen: std::collections::HashSet<usize> = bt.cells.iter().map(|&(c, _)| c).collect();
        for &(c, v) in &psi {
            if v > bt.mu + 1e-14 {
                prop_assert!(chosen.contains(&c));
            }
            if chosen.contains(&c) {
                prop_assert!(v >= bt.mu);
            } else {
                prop_assert!(v <= bt.mu + 1e-14);
            }
        }
    }
}

/// `⟨ln r⟩` over `[−1, 1]²` by symmetry from the sector `|θ| ≤ π/4`, `r ≤ sec θ`:
/// `∫₀^{R(θ)} r ln r dr = R²(ln R − ½)/2` integrated over `θ` by Gauss–Legendre.
fn square_log_mean_quadrature() -> f64 {
    let (nodes, weights) = gauss_legendre(40);
    let mut total = 0.0;
    for (t, w) in nodes.iter().zip(&weights) {
        let theta = 0.25 * PI * t;
        let r = 1.0 / theta.cos();
        total += w * 0.25 * PI * 0.5 * r * r * (r.ln() - 0.5);
    }
    total
}

fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        loop {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                x[i] = z;
                w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
                break;
            }
        }
    }
    (x, w)
}

#[test]
fn self_cell_log_average() {
    let q = square_log_mean_quadrature();
    assert!((square_log_mean() - q).abs() < 1e-12, "{} vs {q}", square_log_mean());
    // scaling: ⟨ln r⟩ over a side-h square is ln(h/2) + ⟨ln r⟩ over [−1,1]²
    let h = 0.01;
    assert!((cell_log_kernel(h) + ((0.5 * h).ln() + q) / (2.0 * PI)).abs() < 1e-12);
}

#[test]
fn energy_of_empty_state_is_zero() {
    let action = coarse_action();
    assert_eq!(energy(action, &[], &[]), 0.0);
}

#[test]
fn single_cell_energy_matches_quadrature() {
    let action = coarse_action();
    let green = &fixture().green;
    let c = nearest_cell(action, StripPoint::new(-2.0, 1.0));
    let x = action.position(c);
    let h = PI / 64.0;
    let m = 0.7;
    let pot = action.potential(&[(c, m)]).unwrap();
    let g_self = -(0.5 * h).ln() / (2.0 * PI) - square_log_mean_quadrature() / (2.0 * PI) - green.robin(x).unwrap();
    let got = pot.exact(c).unwrap();
    assert!((got - m * g_self).abs() < 1e-8, "{got} vs {}", m * g_self);
    let eta = background().eta(x).unwrap();
    let psi = vec![(c, pot.exact(c).unwrap() - action.eta(c))];
    let e = energy(action, &[(c, m)], &psi);
    let oracle = 0.5 * m * m * g_self - m * eta;
    assert!((e - oracle).abs() < 1e-8, "{e} vs {oracle}");
}

#[test]
fn two_cell_cross_term_is_the_green_function() {
    let action = coarse_action();
    let green = &fixture().green;
    let a = nearest_cell(action, StripPoint::new(-1.2, 0.6));
    let b = nearest_cell(action, StripPoint::new(0.9, 2.6));
    let (ma, mb) = (0.3, 0.8);
    let both = action.potential(&[(a, ma), (b, mb)]).unwrap();
    let only_a = action.potential(&[(a, ma)]).unwrap();
    let cross = both.exact(a).unwrap() - only_a.exact(a).unwrap();
    let oracle = mb * green.g(action.position(b), action.position(a)).unwrap();
    assert!((cross - oracle).abs() < 1e-8, "{cross} vs {oracle}");
}

#[test]
fn stream_is_harmonic_off_support() {
    let action = coarse_action();
    let c = nearest_cell(action, StripPoint::new(-2.0, 1.2));
    let pot = action.physical_potential(&[(c, 1.0)]).unwrap();
    let laplacian = |x: StripPoint, s: f64| {
        let u = |dx: f64, dy: f64| pot.at(StripPoint::new(x.x1 + dx, x.x2 + dy)).unwrap();
        (u(s, 0.0) + u(-s, 0.0) + u(0.0, s) + u(0.0, -s) - 4.0 * u(0.0, 0.0)) / (s * s)
    };
    for x in [StripPoint::new(-1.0, 2.2), StripPoint::new(1.5, 1.0), StripPoint::new(-3.5, 0.7)] {
        let (coarse, fine) = (laplacian(x, 0.08), laplacian(x, 0.04));
        assert!(fine.abs() < 1e-2, "{x:?}: {fine}");
        assert!(fine.abs() < 0.35 * coarse.abs() || fine.abs() < 1e-7, "{x:?}: {coarse} → {fine}");
    }
}

#[test]
fn single_cell_far_probe_matches_strip_kernel() {
    let action = coarse_action();
    let c = nearest_cell(action, StripPoint::new(-5.0, 1.0));
    let y = action.position(c);
    let m = 0.6;
    let pot = action.physical_potential(&[(c, m)]).unwrap();
    for x in [StripPoint::new(-5.5, 2.0), StripPoint::new(-4.2, 0.4), StripPoint::new(-5.9, 1.3)] {
        let got = pot.at(x).unwrap();
        let oracle = m * gs(y, x).unwrap();
        assert!((got - oracle).abs() < 1e-3, "{x:?}: {got} vs {oracle}");
    }
}

#[test]
fn green_action_is_positive() {
    let action = coarse_action();
    let c = nearest_cell(action, StripPoint::new(0.3, 0.5));
    let pot = action.physical_potential(&[(c, 1.0)]).unwrap();
    for i in 0..24 {
        for k in 1..12 {
            let x = StripPoint::new(-5.75 + 0.5 * i as f64, k as f64 * PI / 12.0);
            if fixture().green.obstacle().nearest(x, 0.05).is_some() || fixture().green.obstacle().contains(x) {
                continue;
            }
            assert!(pot.at(x).unwrap() > 0.0, "{x:?}");
        }
    }
}

#[test]
fn bounds_dominate_exact_values() {
    let action = coarse_action();
    let masses: Vec<(usize, f64)> =
        [(-0.2, 0.8), (0.0, 0.85), (0.2, 0.8)].iter().map(|&(a, b)| (nearest_cell(action, StripPoint::new(a, b)), 1.0 / 3.0)).collect();
    let pot = action.potential(&masses).unwrap();
    let worst = (0..action.len())
        .into_par_iter()
        .step_by(7)
        .map(|c| pot.exact(c).unwrap() - pot.bound(c))
        .reduce(|| f64::NEG_INFINITY, f64::max);
    assert!(worst <= 1e-12, "exact exceeds bound by {worst}");
}

fn check_trace(trace: &[IterationRecord], b: f64) {
    for r in trace {
        assert!(r.mass_error.abs() < 1e-10, "{r:?}");
        assert!(r.max_fill <= 1.0);
        assert!(r.mu.is_nan() || r.mu >= -b * PI);
    }
    for w in trace.windows(2) {
        assert!(w[1].energy >= w[0].energy - 1e-12, "{:?} → {:?}", w[0], w[1]);
    }
}

fn regime_one(eps: f64) -> &'static Solution {
    static CELL: OnceLock<Solution> = OnceLock::new();
    assert_eq!(eps, 0.05);
    CELL.get_or_init(|| solve(fine_action(), eps, minimizers()[0].location, &SolveOptions::default()).unwrap())
}

#[test]
fn regime_one_patch_invariants() {
    let action = fine_action();
    let sol = regime_one(0.05);
    assert!(sol.converged && sol.self_consistent);
    check_trace(&sol.state.trace, 1.0);
    assert!(sol.state.fractional_cells() <= 1);
    assert!(sol.state.cells.iter().all(|&(c, _)| !action.touches_boundary(c)));
    let report = SolveReport::new(action, sol, minimizers());
    assert!(report.distance_to_minimizer.unwrap() < 2.0 * PI / 512.0);
    assert!(report.mu_scaled.is_finite() && report.energy_scaled.is_finite());
}

#[test]
fn regime_one_patch_is_a_disk() {
    let action = fine_action();
    let sol = regime_one(0.05);
    let centroid = sol.state.centroid(action);
    let radius = 0.05 / PI.sqrt();
    let ring = PI / 512.0 * 2f64.sqrt();
    let support: std::collections::HashSet<usize> = sol.state.cells.iter().map(|&(c, _)| c).collect();
    for c in 0..action.len() {
        let d = action.position(c).distance(&centroid);
        if support.contains(&c) {
            assert!(d < radius + ring, "support cell at {d}");
        } else {
            assert!(d > radius - ring, "hole at {d}");
        }
    }
}

#[test]
fn regime_one_exterior_is_negative() {
    let action = fine_action();
    let sol = regime_one(0.05);
    assert!(verify_exterior_negativity(action, &sol.state, 3.0).unwrap());
    let mut forged = sol.state.clone();
    forged.mu = -2.0 * PI;
    assert!(!verify_exterior_negativity(action, &forged, 3.0).unwrap());
}

#[test]
fn energy_lower_bound_is_stable() {
    let action = fine_action();
    let a = SolveReport::new(action, regime_one(0.05), minimizers());
    let b = SolveReport::new(action, &solve(action, 0.025, minimizers()[0].location, &SolveOptions::default()).unwrap(), minimizers());
    // 𝓔 − (1/4π) ln(1/ε) ≥ −C with one C for both ε
    let c = -a.energy_scaled.min(b.energy_scaled);
    assert!((a.energy_scaled - b.energy_scaled).abs() < 0.1 * (1.0 + c.abs()), "{a:?} {b:?}");
}

#[test]
fn tiny_budget_is_a_support_explosion() {
    let options = SolveOptions { support_budget: 0.5, ..SolveOptions::default() };
    let r = solve(coarse_action(), 0.3, StripPoint::new(-3.0, 1.5), &options);
    assert!(matches!(r, Err(Error::SupportExplosion { .. })), "{r:?}");
}

#[test]
fn relaxation_outside_unit_interval_is_rejected() {
    let options = SolveOptions { relaxation: 1.5, ..SolveOptions::default() };
    let r = solve(coarse_action(), 0.3, StripPoint::new(-3.0, 1.5), &options);
    assert!(matches!(r, Err(Error::Config(_))));
}

#[test]
fn self_repelling_kernel_cycles() {
    let positions = vec![StripPoint::new(0.0, 1.0), StripPoint::new(1.0, 1.0)];
    let action = DenseAction::new(positions, vec![0.0, 0.0], vec![-1.0, 0.0, 0.0, -1.0], 1.0).unwrap();
    let r = solve(&action, 1.0, StripPoint::new(0.1, 1.0), &SolveOptions::default());
    assert!(matches!(r, Err(Error::NonConvergence { .. })), "{r:?}");
}

/// Gaussian kernel on a 12×12 grid with a tilted bowl for `η`.
fn brute_force_instance() -> DenseAction {
    let n = 12;
    let h = 1.0 / n as f64;
    let positions: Vec<StripPoint> =
        (0..n * n).map(|i| StripPoint::new((i % n) as f64 * h, 1.0 + (i / n) as f64 * h)).collect();
    let eta: Vec<f64> = positions.iter().map(|p| 0.8 * ((p.x1 - 0.37).powi(2) + (p.x2 - 1.58).powi(2)) + 0.05 * p.x1).collect();
    let s2 = 2.0 * 0.15f64.powi(2);
    let kernel: Vec<f64> = positions
        .iter()
        .flat_map(|p| positions.iter().map(move |q| (-(p.distance(q).powi(2)) / s2).exp()))
        .collect();
    DenseAction::new(positions, eta, kernel, h).unwrap()
}

#[test]
fn iteration_attains_exhaustive_optimum() {
    let action = brute_force_instance();
    let n = action.len();
    let h = action.h;
    let eps = (3.5f64).sqrt() * h;
    let m = h * h / (eps * eps);
    let k = |i: usize, j: usize| action.kernel[i * n + j];
    // vertices of {0 ≤ f ≤ 1, Σ f = 3.5}: three full cells and one half cell
    let best = (0..n)
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
                    for d in 0..n {
                        if d == a || d == b || d == c {
                            continue;
                        }
                        let md = 0.5 * m;
                        let e = base + md * m * (k(d, a) + k(d, b) + k(d, c)) + 0.5 * md * md * k(d, d) - md * action.eta[d];
                        best = best.max(e);
                    }
                }
            }
            best
        })
        .reduce(|| f64::NEG_INFINITY, f64::max);
    let sol = solve(&action, eps, StripPoint::new(0.37, 1.58), &SolveOptions::default()).unwrap();
    assert!(sol.converged);
    assert!((sol.state.energy - best).abs() <= 1e-9, "{} vs {best}", sol.state.energy);
}
