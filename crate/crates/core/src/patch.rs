//! Vortex patches maximising `𝓔(ω) = ½∫ω𝒢ω − ∫ωη` over
//! `{0 ≤ ω ≤ 1/ε², ∫ω = 1, supp ω ⊂ region}` by bathtub rearrangement.
//!
//! The stream function `ψ = 𝒢ω − η` is evaluated lazily: a [`Potential`]
//! supplies a cheap upper bound of `𝒢ω`, and exact values are computed only
//! for cells whose bound can reach the bathtub threshold.

use std::collections::{HashSet, VecDeque};
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::background::Background;
use crate::bem::HarmonicSolution;
use crate::error::{Error, Result};
use crate::geometry::TruncatedGrid;
use crate::green::GreenAssembly;
use crate::kirchhoff_routh::{KirchhoffRouth, Minimizer, Region};
use crate::strip_kernel::{hs_robin_unchecked, KernelPoint, StripPoint};

const INV_2PI: f64 = 0.5 / PI;
/// Stream values closer than this are one level of the bathtub.
pub const TIE_TOLERANCE: f64 = 1e-14;
/// A support revisited within this many iterations is a cycle.
pub const CYCLE_WINDOW: usize = 8;
/// Slack on upper bounds against rounding in the exact values.
const BOUND_SLACK: f64 = 1e-9;
/// Probes outside the region may exceed zero by this much.
pub const EXTERIOR_TOLERANCE: f64 = 1e-8;

/// `⟨ln r⟩` over the square `[−1, 1]²`.
pub fn square_log_mean() -> f64 {
    0.5 * 2f64.ln() - 1.5 + 0.25 * PI
}

/// `⟨(1/2π) ln(1/|y − x|)⟩` over a square cell of side `h` centred at `x`.
pub fn cell_log_kernel(h: f64) -> f64 {
    -INV_2PI * ((0.5 * h).ln() + square_log_mean())
}

/// `𝒢ω` for a compactly supported `ω`.
pub trait Potential: Sync {
    /// `𝒢ω` at region cell `c`.
    fn exact(&self, c: usize) -> Result<f64>;
    /// A value no smaller than `𝒢ω` at region cell `c`.
    fn bound(&self, c: usize) -> f64;
}

/// Cells of a target region and the Green operator acting on them.
pub trait GreenAction: Sync {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn cell_area(&self) -> f64;
    fn position(&self, c: usize) -> StripPoint;
    fn eta(&self, c: usize) -> f64;
    /// Whether cell `c` has a neighbour outside the region.
    fn touches_boundary(&self, c: usize) -> bool;
    /// `𝒢ω` for masses `(cell, ω h²)`.
    fn potential<'s>(&'s self, masses: &[(usize, f64)]) -> Result<Box<dyn Potential + 's>>;
}

/// Result of the bathtub rearrangement.
#[derive(Debug, Clone, PartialEq)]
pub struct Bathtub {
    /// `(cell, fill)` with `ω = fill / ε²`, ordered by decreasing `ψ`.
    pub cells: Vec<(usize, f64)>,
    pub mu: f64,
    /// Fill of the marginal level set.
    pub c_eps: f64,
}

impl Bathtub {
    pub fn support(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.cells.iter().map(|&(c, _)| c).collect();
        s.sort_unstable();
        s
    }
}

/// Mass-one rearrangement of `ψ` with capacity `1/ε²` per cell.
///
/// Cells are ranked by decreasing `ψ` (ties broken by index); values within
/// [`TIE_TOLERANCE`] of a level's leading value form one level. Levels are
/// filled whole until the next would overflow the mass; that level is the
/// marginal set, filled uniformly to mass exactly one, and `μ` is its value.
pub fn bathtub_threshold(psi: &[(usize, f64)], eps: f64, cell_area: f64) -> Result<Bathtub> {
    if !(eps > 0.0 && cell_area > 0.0) {
        return Err(Error::Precondition(format!("ε = {eps} and cell area {cell_area} must be positive")));
    }
    let cell_mass = cell_area / (eps * eps);
    if (psi.len() as f64) * cell_mass < 1.0 {
        return Err(Error::Infeasible(format!(
            "region holds {} cells of area {cell_area:.3e}, below ε² = {:.3e}",
            psi.len(),
            eps * eps
        )));
    }
    let mut order: Vec<(usize, f64)> = psi.to_vec();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut cells = Vec::new();
    let mut filled = 0usize;
    let mut start = 0;
    while start < order.len() {
        let lead = order[start].1;
        let mut end = start + 1;
        while end < order.len() && lead - order[end].1 <= TIE_TOLERANCE {
            end += 1;
        }
        let size = end - start;
        let remaining = 1.0 - filled as f64 * cell_mass;
        if (size as f64) * cell_mass < remaining * (1.0 - 1e-13) {
            cells.extend(order[start..end].iter().map(|&(c, _)| (c, 1.0)));
            filled += size;
            start = end;
            continue;
        }
        let fill = (remaining / (size as f64 * cell_mass)).min(1.0);
        cells.extend(order[start..end].iter().map(|&(c, _)| (c, fill)));
        return Ok(Bathtub { cells, mu: lead, c_eps: fill });
    }
    unreachable!("feasibility checked above")
}

/// `ψ = 𝒢ω − η` on every cell whose bound can reach the bathtub threshold,
/// plus the cells of `always`.
fn lazy_stream(
    action: &dyn GreenAction,
    pot: &dyn Potential,
    eps: f64,
    always: &[usize],
) -> Result<Vec<(usize, f64)>> {
    let n = action.len();
    let mut bounds: Vec<(usize, f64)> = (0..n)
        .into_par_iter()
        .map(|c| (c, pot.bound(c) - action.eta(c)))
        .collect();
    bounds.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let needed = (eps * eps / action.cell_area()).ceil() as usize;
    let mut seen: HashSet<usize> = HashSet::new();
    let mut exact: Vec<(usize, f64)> = Vec::new();
    let eval = |cells: &[usize]| -> Result<Vec<(usize, f64)>> {
        cells
            .par_iter()
            .map(|&c| Ok((c, pot.exact(c)? - action.eta(c))))
            .collect()
    };
    let first: Vec<usize> = always.iter().copied().filter(|c| seen.insert(*c)).collect();
    exact.extend(eval(&first)?);
    let mut next = 0;
    let mut chunk = (4 * needed).max(64);
    loop {
        if exact.len() >= needed {
            let mu = bathtub_threshold(&exact, eps, action.cell_area())?.mu;
            while next < n && seen.contains(&bounds[next].0) {
                next += 1;
            }
            if next == n || bounds[next].1 < mu - BOUND_SLACK {
                return Ok(exact);
            }
        }
        if next == n {
            return Ok(exact);
        }
        let mut batch = Vec::with_capacity(chunk);
        while next < n && batch.len() < chunk {
            let c = bounds[next].0;
            if seen.insert(c) {
                batch.push(c);
            }
            next += 1;
        }
        exact.extend(eval(&batch)?);
        chunk *= 2;
    }
}

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveOptions {
    pub max_iterations: usize,
    /// Convergence tolerance on `|Δμ|` once the support is unchanged.
    pub mu_tolerance: f64,
    /// Blend factor of the rearranged state into the current one; `1` is a plain update.
    pub relaxation: f64,
    /// Support size limit as a multiple of `ε²/h²` cells.
    pub support_budget: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            mu_tolerance: 1e-9,
            relaxation: 1.0,
            support_budget: 2.0,
        }
    }
}

/// One accepted iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Threshold from the rearrangement that produced this iterate (NaN for the initial state).
    pub mu: f64,
    pub energy: f64,
    pub support: usize,
    pub mass_error: f64,
    pub max_fill: f64,
}

/// Vorticity on the region cells with its stream function.
#[derive(Debug, Clone)]
pub struct PatchState {
    pub eps: f64,
    /// `(cell, fill)` with `ω = fill / ε²`.
    pub cells: Vec<(usize, f64)>,
    /// Exact `ψ = 𝒢ω − η` where evaluated.
    pub psi: Vec<(usize, f64)>,
    pub mu: f64,
    pub c_eps: f64,
    pub energy: f64,
    pub iteration: usize,
    pub trace: Vec<IterationRecord>,
}

impl PatchState {
    /// `(cell, ω h²)`.
    pub fn masses(&self, cell_area: f64) -> Vec<(usize, f64)> {
        let m = cell_area / (self.eps * self.eps);
        self.cells.iter().map(|&(c, f)| (c, f * m)).collect()
    }

    pub fn mass(&self, cell_area: f64) -> f64 {
        self.masses(cell_area).iter().map(|&(_, m)| m).sum()
    }

    pub fn support(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.cells.iter().map(|&(c, _)| c).collect();
        s.sort_unstable();
        s
    }

    /// Cells strictly between empty and full.
    pub fn fractional_cells(&self) -> usize {
        self.cells.iter().filter(|&&(_, f)| f > 0.0 && f < 1.0).count()
    }

    pub fn centroid(&self, action: &dyn GreenAction) -> StripPoint {
        let masses = self.masses(action.cell_area());
        let total: f64 = masses.iter().map(|&(_, m)| m).sum();
        let (mut a, mut b) = (0.0, 0.0);
        for &(c, m) in &masses {
            let p = action.position(c);
            a += m * p.x1;
            b += m * p.x2;
        }
        StripPoint::new(a / total, b / total)
    }

    /// Largest distance between support cell centres.
    pub fn diameter(&self, action: &dyn GreenAction) -> f64 {
        let pts: Vec<StripPoint> = self.cells.iter().map(|&(c, _)| action.position(c)).collect();
        let mut d: f64 = 0.0;
        for (i, p) in pts.iter().enumerate() {
            for q in &pts[i + 1..] {
                d = d.max(p.distance(q));
            }
        }
        d
    }

    /// `∫ ω ψ dx` over the support.
    pub fn omega_psi(&self, cell_area: f64) -> f64 {
        let psi: std::collections::HashMap<usize, f64> = self.psi.iter().copied().collect();
        self.masses(cell_area).iter().map(|&(c, m)| m * psi[&c]).sum()
    }
}

/// `𝓔 = ½ Σ m (ψ + η) − Σ m η` over the support.
pub fn energy(action: &dyn GreenAction, masses: &[(usize, f64)], psi: &[(usize, f64)]) -> f64 {
    let lookup: std::collections::HashMap<usize, f64> = psi.iter().copied().collect();
    masses
        .iter()
        .map(|&(c, m)| {
            let eta = action.eta(c);
            let g = lookup.get(&c).copied().expect("ψ evaluated on the support") + eta;
            m * (0.5 * g - eta)
        })
        .sum()
}

fn evaluate_state(action: &dyn GreenAction, eps: f64, cells: Vec<(usize, f64)>) -> Result<PatchState> {
    let state = PatchState {
        eps,
        cells,
        psi: Vec::new(),
        mu: f64::NAN,
        c_eps: f64::NAN,
        energy: 0.0,
        iteration: 0,
        trace: Vec::new(),
    };
    let masses = state.masses(action.cell_area());
    let pot = action.potential(&masses)?;
    let psi = lazy_stream(action, pot.as_ref(), eps, &state.support())?;
    let e = energy(action, &masses, &psi);
    Ok(PatchState { psi, energy: e, ..state })
}

fn record(action: &dyn GreenAction, state: &PatchState, mu: f64) -> IterationRecord {
    IterationRecord {
        iteration: state.iteration,
        mu,
        energy: state.energy,
        support: state.cells.len(),
        mass_error: state.mass(action.cell_area()) - 1.0,
        max_fill: state.cells.iter().map(|&(_, f)| f).fold(0.0, f64::max),
    }
}

/// Outcome of [`solve`] before physical diagnostics are attached.
#[derive(Debug, Clone)]
pub struct Solution {
    pub state: PatchState,
    pub converged: bool,
    /// Whether the rearrangement of the final `ψ` reproduces the final support
    /// up to one cell.
    pub self_consistent: bool,
    /// Largest energy decrease between accepted iterates.
    pub max_energy_drop: f64,
}

/// Bathtub fixed-point iteration from a disk of area `ε²` around `center`.
pub fn solve(action: &dyn GreenAction, eps: f64, center: StripPoint, options: &SolveOptions) -> Result<Solution> {
    if action.is_empty() {
        return Err(Error::Region("target region has no cells".into()));
    }
    if !(options.relaxation > 0.0 && options.relaxation <= 1.0) {
        return Err(Error::Config(format!("relaxation {} outside (0, 1]", options.relaxation)));
    }
    let area = action.cell_area();
    let budget = (options.support_budget * eps * eps / area).ceil() as usize + 1;
    let init: Vec<(usize, f64)> = (0..action.len()).map(|c| (c, -action.position(c).distance(&center))).collect();
    let start = bathtub_threshold(&init, eps, area)?;
    let mut state = evaluate_state(action, eps, start.cells)?;
    state.trace.push(record(action, &state, f64::NAN));
    let mut history: VecDeque<Vec<usize>> = VecDeque::new();
    history.push_back(state.support());
    let mut max_drop: f64 = 0.0;
    let mut prev_mu = f64::NAN;
    let mut converged = false;
    for it in 1..=options.max_iterations {
        let bath = bathtub_threshold(&state.psi, eps, area)?;
        let cells = if options.relaxation < 1.0 {
            blend(&state.cells, &bath.cells, options.relaxation)
        } else {
            bath.cells.clone()
        };
        if cells.len() > budget {
            return Err(Error::SupportExplosion { cells: cells.len(), budget });
        }
        let mut next = evaluate_state(action, eps, cells)?;
        next.iteration = it;
        next.mu = bath.mu;
        next.c_eps = bath.c_eps;
        next.trace = std::mem::take(&mut state.trace);
        next.trace.push(record(action, &next, bath.mu));
        max_drop = max_drop.max(state.energy - next.energy);
        let support = next.support();
        let same = history.back() == Some(&support);
        if same && (bath.mu - prev_mu).abs() < options.mu_tolerance {
            state = next;
            converged = true;
            break;
        }
        if !same {
            if let Some(back) = history.iter().rev().skip(1).position(|s| *s == support) {
                return Err(Error::NonConvergence {
                    iterations: it,
                    reason: format!(
                        "support of {} cells recurs after {} iterations (μ {prev_mu:.12} → {:.12})",
                        support.len(),
                        back + 2,
                        bath.mu
                    ),
                });
            }
        }
        history.push_back(support);
        if history.len() > CYCLE_WINDOW {
            history.pop_front();
        }
        prev_mu = bath.mu;
        state = next;
    }
    if let Some(&(c, _)) = state.cells.iter().find(|&&(c, _)| action.touches_boundary(c)) {
        log::debug!("support cell {c} at {:?} touches the region boundary", action.position(c));
        return Err(Error::BoundaryContact { iteration: state.iteration });
    }
    let self_consistent = {
        let again = bathtub_threshold(&state.psi, eps, area)?;
        let full = |cells: &[(usize, f64)]| -> HashSet<usize> {
            cells.iter().filter(|&&(_, f)| f >= 1.0).map(|&(c, _)| c).collect()
        };
        full(&again.cells).symmetric_difference(&full(&state.cells)).count() <= 1
    };
    Ok(Solution {
        state,
        converged,
        self_consistent,
        max_energy_drop: max_drop,
    })
}

fn blend(old: &[(usize, f64)], new: &[(usize, f64)], alpha: f64) -> Vec<(usize, f64)> {
    let mut map: std::collections::BTreeMap<usize, f64> = std::collections::BTreeMap::new();
    for &(c, f) in old {
        *map.entry(c).or_default() += (1.0 - alpha) * f;
    }
    for &(c, f) in new {
        *map.entry(c).or_default() += alpha * f;
    }
    map.into_iter().filter(|&(_, f)| f > 0.0).collect()
}

/// Dense kernel on a handful of cells, for exhaustive checks.
#[derive(Debug, Clone)]
pub struct DenseAction {
    pub positions: Vec<StripPoint>,
    pub eta: Vec<f64>,
    /// Row-major `K[c][m]`.
    pub kernel: Vec<f64>,
    pub h: f64,
}

impl DenseAction {
    pub fn new(positions: Vec<StripPoint>, eta: Vec<f64>, kernel: Vec<f64>, h: f64) -> Result<Self> {
        let n = positions.len();
        if eta.len() != n || kernel.len() != n * n {
            return Err(Error::Precondition("dense action dimensions disagree".into()));
        }
        Ok(Self { positions, eta, kernel, h })
    }
}

struct DensePotential<'a> {
    action: &'a DenseAction,
    masses: Vec<(usize, f64)>,
}

impl Potential for DensePotential<'_> {
    fn exact(&self, c: usize) -> Result<f64> {
        let n = self.action.positions.len();
        Ok(self.masses.iter().map(|&(m, w)| w * self.action.kernel[c * n + m]).sum())
    }

    fn bound(&self, c: usize) -> f64 {
        self.exact(c).expect("dense evaluation is infallible")
    }
}

impl GreenAction for DenseAction {
    fn len(&self) -> usize {
        self.positions.len()
    }

    fn cell_area(&self) -> f64 {
        self.h * self.h
    }

    fn position(&self, c: usize) -> StripPoint {
        self.positions[c]
    }

    fn eta(&self, c: usize) -> f64 {
        self.eta[c]
    }

    fn touches_boundary(&self, _c: usize) -> bool {
        false
    }

    fn potential<'s>(&'s self, masses: &[(usize, f64)]) -> Result<Box<dyn Potential + 's>> {
        Ok(Box::new(DensePotential { action: self, masses: masses.to_vec() }))
    }
}

/// Green operator of the fluid domain restricted to the cells of a region.
pub struct PhysicalAction<'a> {
    pub background: &'a Background<'a>,
    pub region: Region,
    pub grid: &'a TruncatedGrid,
    /// Grid index of every region cell.
    pub cells: Vec<usize>,
    points: Vec<StripPoint>,
    eta: Vec<f64>,
    rho: Vec<f64>,
    boundary: Vec<bool>,
}

impl<'a> PhysicalAction<'a> {
    /// Region cells of `grid` admitted by `kr`, with `ρ` and `η` cached.
    pub fn new(kr: &KirchhoffRouth<'a>, grid: &'a TruncatedGrid, region: Region) -> Result<Self> {
        let background = kr.background;
        let green = background.green;
        let admitted: Vec<bool> = (0..grid.n1 * grid.n2)
            .into_par_iter()
            .map(|idx| grid.is_fluid(idx) && kr.admits(&region, grid.center(idx)))
            .collect();
        let cells: Vec<usize> = (0..admitted.len()).filter(|&i| admitted[i]).collect();
        if cells.is_empty() {
            return Err(Error::Region(format!("region {region:?} holds no grid cells")));
        }
        let points: Vec<StripPoint> = cells.iter().map(|&i| grid.center(i)).collect();
        let fields: Vec<Result<(f64, f64)>> = points
            .par_iter()
            .map(|&x| {
                let prox = green.op.proximity(x)?;
                let rho = green.rho.eval_with(x, prox);
                let xi = background.xi.eval_with(x, prox);
                Ok((rho, background.flow.b * (x.x2 - xi) - background.flow.lambda * rho))
            })
            .collect();
        let mut rho = Vec::with_capacity(cells.len());
        let mut eta = Vec::with_capacity(cells.len());
        for f in fields {
            let (r, e) = f?;
            rho.push(r);
            eta.push(e);
        }
        let boundary = cells
            .iter()
            .map(|&idx| {
                let (i, k) = grid.coords(idx);
                (-1i64..=1).any(|di| {
                    (-1i64..=1).any(|dk| {
                        let (a, b) = (i as i64 + di, k as i64 + dk);
                        a < 0
                            || b < 0
                            || a >= grid.n1 as i64
                            || b >= grid.n2 as i64
                            || !admitted[grid.index(a as usize, b as usize)]
                    })
                })
            })
            .collect();
        Ok(Self {
            background,
            region,
            grid,
            cells,
            points,
            eta,
            rho,
            boundary,
        })
    }

    pub fn green(&self) -> &'a GreenAssembly {
        self.background.green
    }

    /// Potential of `state` with access to off-grid evaluation.
    pub fn physical_potential(&self, masses: &[(usize, f64)]) -> Result<PhysicalPotential<'_, 'a>> {
        PhysicalPotential::new(self, masses)
    }

    /// `ψ − μ = 𝒢ω − η − μ` at an arbitrary fluid point.
    pub fn stream_at(&self, pot: &PhysicalPotential<'_, 'a>, x: StripPoint, mu: f64) -> Result<f64> {
        Ok(pot.at(x)? - self.background.eta(x)? - mu)
    }
}

/// `𝒢ω` for the physical Green function.
pub struct PhysicalPotential<'p, 'a> {
    action: &'p PhysicalAction<'a>,
    masses: Vec<(usize, f64)>,
    sources: Vec<KernelPoint>,
    /// Kelvin images with their masses.
    images: Vec<(KernelPoint, f64)>,
    layer: HarmonicSolution,
    rho_moment: f64,
    self_log: f64,
    bbox: [f64; 4],
}

impl<'p, 'a> PhysicalPotential<'p, 'a> {
    fn new(action: &'p PhysicalAction<'a>, masses: &[(usize, f64)]) -> Result<Self> {
        let green = action.green();
        let op = &green.op;
        let sources: Vec<KernelPoint> = masses.iter().map(|&(c, _)| KernelPoint::new(action.points[c])).collect();
        let mut images = Vec::new();
        let mut data = vec![0.0; op.num_panels()];
        let nodes: Vec<KernelPoint> = (0..op.num_panels()).map(|j| KernelPoint::new(op.node(j))).collect();
        for (&(c, m), src) in masses.iter().zip(&sources) {
            let image = green.image_of(action.points[c]).map(KernelPoint::new);
            for (d, y) in data.iter_mut().zip(&nodes) {
                *d -= m * y.gs(src);
                if let Some(z) = &image {
                    *d += m * y.gs(z);
                }
            }
            if let Some(z) = image {
                images.push((z, m));
            }
        }
        let layer = op.solve_dirichlet(&data)?;
        let rho_moment = masses.iter().map(|&(c, m)| m * action.rho[c]).sum();
        let mut bbox = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
        for &(c, _) in masses {
            let p = action.points[c];
            bbox = [bbox[0].min(p.x1), bbox[1].max(p.x1), bbox[2].min(p.x2), bbox[3].max(p.x2)];
        }
        Ok(Self {
            action,
            masses: masses.to_vec(),
            sources,
            images,
            layer,
            rho_moment,
            self_log: cell_log_kernel(action.grid.h),
            bbox,
        })
    }

    fn correction(&self, x: StripPoint, kx: &KernelPoint) -> Result<f64> {
        let img: f64 = self.images.iter().map(|(z, m)| m * z.gs(kx)).sum();
        Ok(self.layer.eval(x)? - img)
    }

    /// `𝒢ω` at a fluid point that is not a support cell centre.
    pub fn at(&self, x: StripPoint) -> Result<f64> {
        let kx = KernelPoint::new(x);
        let direct: f64 = self.masses.iter().zip(&self.sources).map(|(&(_, m), s)| m * s.gs(&kx)).sum();
        let rho = self.action.green().rho(x)?;
        Ok(direct + self.correction(x, &kx)? + self.action.green().lambda0 * rho * self.rho_moment)
    }
}

impl Potential for PhysicalPotential<'_, '_> {
    fn exact(&self, c: usize) -> Result<f64> {
        let x = self.action.points[c];
        let kx = KernelPoint::new(x);
        let mut direct = 0.0;
        for (&(m_cell, m), s) in self.masses.iter().zip(&self.sources) {
            direct += if m_cell == c {
                m * (self.self_log - hs_robin_unchecked(x))
            } else {
                m * s.gs(&kx)
            };
        }
        let smooth = self.action.green().lambda0 * self.action.rho[c] * self.rho_moment;
        Ok(direct + self.correction(x, &kx)? + smooth)
    }

    /// Drops the obstacle correction (`R ≤ 0`) and bounds the strip kernel by
    /// the half-plane kernels and its decay along the strip.
    fn bound(&self, c: usize) -> f64 {
        let x = self.action.points[c];
        let [x_lo, x_hi, y_lo, y_hi] = self.bbox;
        let gap1 = (x_lo - x.x1).max(x.x1 - x_hi).max(0.0);
        let gap2 = (y_lo - x.x2).max(x.x2 - y_hi).max(0.0);
        let r2 = gap1 * gap1 + gap2 * gap2;
        let mut b = f64::INFINITY;
        if r2 > 0.0 {
            b = b.min(x.x2 * y_hi / (PI * r2)).min((PI - x.x2) * (PI - y_lo) / (PI * r2));
        }
        if gap1 > 0.0 {
            b = b.min(INV_2PI * (1.0 / (0.5 * gap1).tanh()).ln());
        }
        let total: f64 = self.masses.iter().map(|&(_, m)| m).sum();
        b * total + self.action.green().lambda0 * self.action.rho[c] * self.rho_moment
    }
}

impl GreenAction for PhysicalAction<'_> {
    fn len(&self) -> usize {
        self.cells.len()
    }

    fn cell_area(&self) -> f64 {
        self.grid.cell_area()
    }

    fn position(&self, c: usize) -> StripPoint {
        self.points[c]
    }

    fn eta(&self, c: usize) -> f64 {
        self.eta[c]
    }

    fn touches_boundary(&self, c: usize) -> bool {
        self.boundary[c]
    }

    fn potential<'s>(&'s self, masses: &[(usize, f64)]) -> Result<Box<dyn Potential + 's>> {
        Ok(Box::new(PhysicalPotential::new(self, masses)?))
    }
}

/// Diagnostics of one converged patch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub eps: f64,
    pub converged: bool,
    pub self_consistent: bool,
    pub iterations: usize,
    pub mu: f64,
    pub c_eps: f64,
    pub energy: f64,
    pub support_cells: usize,
    pub diameter: f64,
    pub centroid: StripPoint,
    pub distance_to_minimizer: Option<f64>,
    /// `μ_ε − (1/2π) ln(1/ε)`.
    pub mu_scaled: f64,
    /// `𝓔 − (1/4π) ln(1/ε)`.
    pub energy_scaled: f64,
    /// `∫ ω ψ dx`.
    pub omega_psi: f64,
    pub mass_error: f64,
    pub max_energy_drop: f64,
    pub min_mu: f64,
}

impl SolveReport {
    pub fn new(action: &dyn GreenAction, sol: &Solution, minimizers: &[Minimizer]) -> Self {
        let s = &sol.state;
        let centroid = s.centroid(action);
        let log_inv = (1.0 / s.eps).ln();
        Self {
            eps: s.eps,
            converged: sol.converged,
            self_consistent: sol.self_consistent,
            iterations: s.iteration,
            mu: s.mu,
            c_eps: s.c_eps,
            energy: s.energy,
            support_cells: s.cells.len(),
            diameter: s.diameter(action),
            centroid,
            distance_to_minimizer: minimizers
                .iter()
                .map(|m| m.location.distance(&centroid))
                .min_by(f64::total_cmp),
            mu_scaled: s.mu - INV_2PI * log_inv,
            energy_scaled: s.energy - 0.5 * INV_2PI * log_inv,
            omega_psi: s.omega_psi(action.cell_area()),
            mass_error: s.trace.iter().map(|r| r.mass_error.abs()).fold(0.0, f64::max),
            max_energy_drop: sol.max_energy_drop,
            min_mu: s.trace.iter().map(|r| r.mu).filter(|m| !m.is_nan()).fold(f64::INFINITY, f64::min),
        }
    }
}

/// Solve at each `ε` of a decreasing list and collect drift statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sweep {
    pub rows: Vec<SolveReport>,
    /// Largest change of `μ_ε − (1/2π) ln(1/ε)` between consecutive rows.
    pub mu_drift: f64,
    /// `max − min` of `2𝓔 − μ_ε`.
    pub two_energy_minus_mu_spread: f64,
    /// `max − min` of `∫ωψ`.
    pub omega_psi_spread: f64,
    /// Empirical `R = max diam/ε`.
    pub diameter_constant: f64,
    /// `max / min` of `diam/ε`.
    pub diameter_ratio: f64,
}

pub fn asymptotic_sweep(
    action: &dyn GreenAction,
    eps_list: &[f64],
    center: StripPoint,
    minimizers: &[Minimizer],
    options: &SolveOptions,
) -> Result<(Sweep, Vec<Solution>)> {
    if eps_list.is_empty() || eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Config("ε list must be non-empty and strictly decreasing".into()));
    }
    let mut rows = Vec::new();
    let mut sols = Vec::new();
    for &eps in eps_list {
        let sol = solve(action, eps, center, options)?;
        rows.push(SolveReport::new(action, &sol, minimizers));
        sols.push(sol);
    }
    let spread = |v: Vec<f64>| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    };
    let mu_drift = rows
        .windows(2)
        .map(|w| (w[1].mu_scaled - w[0].mu_scaled).abs())
        .fold(0.0, f64::max);
    let ratios: Vec<f64> = rows.iter().map(|r| r.diameter / r.eps).collect();
    let diameter_constant = ratios.iter().copied().fold(0.0, f64::max);
    let diameter_ratio = diameter_constant / ratios.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((
        Sweep {
            two_energy_minus_mu_spread: spread(rows.iter().map(|r| 2.0 * r.energy - r.mu).collect()),
            omega_psi_spread: spread(rows.iter().map(|r| r.omega_psi).collect()),
            mu_drift,
            diameter_constant,
            diameter_ratio,
            rows,
        },
        sols,
    ))
}

/// `ψ − μ ≤ EXTERIOR_TOLERANCE` on probes with `L ≤ |x₁| ≤ L + 3` and along
/// both walls.
pub fn verify_exterior_negativity(action: &PhysicalAction<'_>, state: &PatchState, half_width: f64) -> Result<bool> {
    let masses = state.masses(action.cell_area());
    let pot = action.physical_potential(&masses)?;
    let h = action.grid.h;
    let mut probes = Vec::new();
    for i in 0..=12 {
        let x1 = half_width + 0.25 * i as f64;
        for k in 0..32 {
            let x2 = (k as f64 + 0.5) * PI / 32.0;
            probes.push(StripPoint::new(x1, x2));
            probes.push(StripPoint::new(-x1, x2));
        }
    }
    let n = (2.0 * (half_width + 3.0) / (4.0 * h)).ceil() as usize;
    for i in 0..=n {
        let x1 = -(half_width + 3.0) + i as f64 * 4.0 * h;
        probes.push(StripPoint::new(x1, 0.5 * h));
        probes.push(StripPoint::new(x1, PI - 0.5 * h));
    }
    let obstacle = action.green().obstacle();
    let values: Vec<Result<f64>> = probes
        .par_iter()
        .filter(|x| !obstacle.contains(**x))
        .map(|&x| action.stream_at(&pot, x, state.mu))
        .collect();
    for v in values {
        if v? > EXTERIOR_TOLERANCE {
            return Ok(false);
        }
    }
    Ok(true)
}
