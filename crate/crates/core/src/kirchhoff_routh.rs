//! Kirchhoff–Routh function `𝓗(x) = H(x, x) + 2η(x)`, grid scans over
//! target regions and location of its local minimizers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::background::{Background, Regime};
use crate::error::{Error, Result};
use crate::strip_kernel::StripPoint;

/// Minimizers within this fraction of the value range above the global minimum are reported.
pub const REPORT_FRACTION: f64 = 1e-3;
/// Half-width of a zoom patch, in cells.
const ZOOM_HALF: i64 = 4;
/// Re-centring moves allowed per zoom.
const ZOOM_WALKS: usize = 12;
/// Zoom spacing as a fraction of the distance to the nearest boundary.
const ZOOM_RESOLUTION: f64 = 0.1;
const ZOOM_FLOOR: f64 = 1e-6;
const DESCENT_ITERATIONS: usize = 2000;
const DESCENT_TOLERANCE: f64 = 0.5;
const DESCENT_MAX_STEP: f64 = 16.0;
/// Within this distance of the obstacle the descent also steps along the boundary frame.
const DESCENT_FRAME_REACH: f64 = 1.0;

/// Target region of a landscape scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Region {
    /// `|x₁| < L`.
    Window { half_width: f64 },
    /// `θ₁/(b+λ) < dist(x, ∂O₀) < θ₂/(b+λ)`.
    Layer { theta1: f64, theta2: f64 },
    /// `dist(x, ∂O₀) > δ` and `|x₁| < L`.
    Exterior { delta: f64, half_width: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionKind {
    GlobalWindow,
    Layer,
    Exterior,
}

impl Region {
    pub fn kind(&self) -> RegionKind {
        match self {
            Region::Window { .. } => RegionKind::GlobalWindow,
            Region::Layer { .. } => RegionKind::Layer,
            Region::Exterior { .. } => RegionKind::Exterior,
        }
    }
}

/// One reported local minimizer of `𝓗`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Minimizer {
    pub location: StripPoint,
    pub value: f64,
    pub region: RegionKind,
    pub regime: Regime,
    /// Grid spacing at which the minimizer was resolved.
    pub h: f64,
    pub distance_to_obstacle: f64,
    pub degenerate_fit: bool,
}

/// Evaluator of `𝓗` with an exclusion zone around the obstacle.
pub struct KirchhoffRouth<'a> {
    pub background: &'a Background<'a>,
    pub collar: f64,
}

impl<'a> KirchhoffRouth<'a> {
    pub fn new(background: &'a Background<'a>) -> Self {
        Self {
            background,
            collar: background.green.collar(),
        }
    }

    /// Evaluator for scans of `region`. For a layer whose inner edge
    /// `θ₁/(b+λ)` lies inside the default collar, the collar shrinks to half
    /// that distance so the whole layer stays admissible.
    pub fn for_region(background: &'a Background<'a>, region: &Region) -> Self {
        let kr = Self::new(background);
        match *region {
            Region::Layer { theta1, .. } => {
                let inner = 0.5 * theta1 / kr.layer_scale();
                let collar = kr.collar.min(inner);
                kr.with_collar(collar)
            }
            _ => kr,
        }
    }

    pub fn with_collar(mut self, collar: f64) -> Self {
        self.collar = collar;
        self
    }

    /// Distance from `x` to the obstacle, or `∞` beyond `reach`.
    pub fn obstacle_distance(&self, x: StripPoint, reach: f64) -> f64 {
        self.background.green.obstacle().nearest(x, reach).map_or(f64::INFINITY, |(_, d)| d)
    }

    /// `𝓗(x) = H(x, x) + 2η(x)`.
    pub fn evaluate(&self, x: StripPoint) -> Result<f64> {
        let green = self.background.green;
        if green.obstacle().contains(x) {
            return Err(Error::Domain(format!("({}, {}) lies inside the obstacle", x.x1, x.x2)));
        }
        let d = self.obstacle_distance(x, self.collar);
        if d < self.collar {
            return Err(Error::Domain(format!(
                "({}, {}) lies within the obstacle collar (distance {d:.3e} < {:.3e})",
                x.x1, x.x2, self.collar
            )));
        }
        Ok(green.robin_unguarded(x)? + 2.0 * self.background.eta(x)?)
    }

    /// `b + λ_{b,Γ}`, the inverse length scale of the near-obstacle layer.
    pub fn layer_scale(&self) -> f64 {
        self.background.flow.b + self.background.lambda()
    }

    /// Whether `x` belongs to `region` (excluding the collar).
    pub fn admits(&self, region: &Region, x: StripPoint) -> bool {
        if !x.is_interior() || self.background.green.obstacle().contains(x) {
            return false;
        }
        match *region {
            Region::Window { half_width } => {
                x.x1.abs() < half_width && self.obstacle_distance(x, self.collar) >= self.collar
            }
            Region::Layer { theta1, theta2 } => {
                let (lo, hi) = (theta1 / self.layer_scale(), theta2 / self.layer_scale());
                let d = self.obstacle_distance(x, hi);
                d > lo && d < hi && d >= self.collar
            }
            Region::Exterior { delta, half_width } => {
                x.x1.abs() < half_width && self.obstacle_distance(x, delta) > delta.max(self.collar)
            }
        }
    }

    fn bounding_box(&self, region: &Region) -> [f64; 4] {
        match *region {
            Region::Window { half_width } | Region::Exterior { half_width, .. } => {
                [-half_width, half_width, 0.0, PI]
            }
            Region::Layer { theta2, .. } => {
                let b = self.background.green.obstacle().bounds();
                let r = theta2 / self.layer_scale();
                [b[0] - r, b[1] + r, (b[2] - r).max(0.0), (b[3] + r).min(PI)]
            }
        }
    }

    /// Evaluate `𝓗` on the lattice `x = ((i+½)h, (k+½)h)` within `region`.
    pub fn scan(&self, region: Region, h: f64) -> Result<Landscape> {
        if !(h > 0.0) {
            return Err(Error::Config(format!("scan spacing h = {h} must be positive")));
        }
        let bb = self.bounding_box(&region);
        let i0 = (bb[0] / h - 0.5).floor() as i64;
        let i1 = (bb[1] / h - 0.5).ceil() as i64;
        let k0 = ((bb[2] / h - 0.5).floor() as i64).max(0);
        let k1 = ((bb[3] / h - 0.5).ceil() as i64).min((PI / h).ceil() as i64);
        let lattice = Lattice {
            origin: [(i0 as f64 + 0.5) * h, (k0 as f64 + 0.5) * h],
            h,
            n1: (i1 - i0 + 1) as usize,
            n2: (k1 - k0 + 1) as usize,
        };
        let values = self.fill(&region, &lattice)?;
        if values.iter().all(Option::is_none) {
            return Err(Error::Region(format!("region {region:?} contains no admissible cells at h = {h}")));
        }
        Ok(Landscape { region, lattice, values })
    }

    fn fill(&self, region: &Region, lattice: &Lattice) -> Result<Vec<Option<f64>>> {
        let cells: Vec<usize> = (0..lattice.n1 * lattice.n2).collect();
        let out: Vec<Result<Option<f64>>> = cells
            .par_iter()
            .map(|&c| {
                let x = lattice.point(c);
                if self.admits(region, x) {
                    self.evaluate(x).map(Some)
                } else {
                    Ok(None)
                }
            })
            .collect();
        out.into_iter().collect()
    }

    /// Scan at spacing `h` and resolve every reportable candidate.
    ///
    /// Candidates are the coarse discrete local minima within
    /// `REPORT_FRACTION · range` of the coarse minimum. A candidate whose cell
    /// is already resolved (full ring, spacing below the zoom resolution) is
    /// refined in place. Otherwise a pattern search descends from it, and one
    /// zoom patch is laid around each distinct basin reached.
    pub fn find_minimizers(&self, region: Region, h: f64) -> Result<(Landscape, Vec<Minimizer>)> {
        let coarse = self.scan(region, h)?;
        let range = coarse.value_range().max(1e-300);
        let cmin = coarse.argmin().and_then(|c| coarse.values[c]).expect("non-empty scan");
        let mut cands: Vec<usize> = coarse
            .candidate_cells()
            .into_iter()
            .filter(|&c| coarse.values[c].is_some_and(|v| v <= cmin + REPORT_FRACTION * range))
            .collect();
        cands.sort_by(|&a, &b| coarse.values[a].unwrap().total_cmp(&coarse.values[b].unwrap()));
        log::debug!("{} cells scanned, {} candidates", coarse.len(), cands.len());

        let mut found: Vec<Minimizer> = Vec::new();
        let mut basins: Vec<StripPoint> = Vec::new();
        for cell in cands {
            let start = coarse.lattice.point(cell);
            let m = if coarse.has_full_ring(cell) && h <= self.resolution_target(start) * (1.0 + 1e-12) {
                self.finalize(region, &coarse, cell)?
            } else {
                let basin = self.descend(&region, start, coarse.values[cell].unwrap(), h, &basins)?;
                if self.in_basin(&basins, basin) {
                    continue;
                }
                basins.push(basin);
                log::debug!("basin at ({:.6}, {:.6})", basin.x1, basin.x2);
                match self.zoom(region, basin)? {
                    Some(m) => m,
                    None => continue,
                }
            };
            if !found.iter().any(|f| f.location.distance(&m.location) < 2.0 * f.h.max(m.h)) {
                found.push(m);
            }
        }
        found.sort_by(|a, b| a.value.total_cmp(&b.value));
        let gmin = found.first().map_or(f64::INFINITY, |m| m.value);
        found.retain(|m| m.value <= gmin + REPORT_FRACTION * range);
        Ok((coarse, found))
    }

    /// Pattern search from `x` with initial step `h`. Steps follow the
    /// coordinate axes, the diagonals and the local boundary frame; the search
    /// stops once no step of `DESCENT_TOLERANCE` times the local zoom
    /// resolution decreases `𝓗`, or on entering one of the `known` basins.
    fn descend(&self, region: &Region, mut x: StripPoint, mut v: f64, h: f64, known: &[StripPoint]) -> Result<StripPoint> {
        const FIXED: [[f64; 2]; 8] = [
            [1.0, 0.0],
            [-1.0, 0.0],
            [0.0, 1.0],
            [0.0, -1.0],
            [FRAC_1_SQRT_2, FRAC_1_SQRT_2],
            [FRAC_1_SQRT_2, -FRAC_1_SQRT_2],
            [-FRAC_1_SQRT_2, FRAC_1_SQRT_2],
            [-FRAC_1_SQRT_2, -FRAC_1_SQRT_2],
        ];
        let obstacle = self.background.green.obstacle();
        let mut step = h;
        let mut last: Option<[f64; 2]> = None;
        let mut evals = 0usize;
        let mut iters = 0usize;
        for _ in 0..DESCENT_ITERATIONS {
            iters += 1;
            if step < DESCENT_TOLERANCE * self.resolution_target(x).min(h) || self.in_basin(known, x) {
                break;
            }
            let mut dirs: Vec<[f64; 2]> = last.into_iter().collect();
            if let Some((t, _)) = obstacle.nearest(x, DESCENT_FRAME_REACH) {
                let n = obstacle.shape.sample(t).normal();
                dirs.extend([[n[1], -n[0]], [-n[1], n[0]], n, [-n[0], -n[1]]]);
            }
            dirs.extend(FIXED);
            last = None;
            for d in dirs {
                let y = x.offset(d, step);
                if !self.admits(region, y) {
                    continue;
                }
                let w = self.evaluate(y)?;
                evals += 1;
                if w < v {
                    (x, v, last) = (y, w, Some(d));
                    break;
                }
            }
            step = if last.is_some() { (2.0 * step).min(DESCENT_MAX_STEP * h) } else { 0.5 * step };
        }
        log::debug!("descent: {iters} iterations, {evals} evaluations, end ({:.6}, {:.6}) step {step:.2e}", x.x1, x.x2);
        Ok(x)
    }

    fn in_basin(&self, basins: &[StripPoint], x: StripPoint) -> bool {
        basins.iter().any(|b| b.distance(&x) < ZOOM_HALF as f64 * self.resolution_target(*b))
    }

    fn resolution_target(&self, x: StripPoint) -> f64 {
        let wall = x.x2.min(PI - x.x2);
        let obst = self.obstacle_distance(x, 1.0);
        (ZOOM_RESOLUTION * wall.min(obst)).max(ZOOM_FLOOR)
    }

    fn finalize(&self, region: Region, land: &Landscape, c: usize) -> Result<Minimizer> {
        let fit = land.refine_minimizer(c)?;
        let cell_value = land.values[c].expect("evaluated cell");
        let (location, value) = if fit.degenerate {
            (land.lattice.point(c), cell_value)
        } else {
            match self.evaluate(fit.location) {
                Ok(v) if v <= cell_value => (fit.location, v),
                _ => (land.lattice.point(c), cell_value),
            }
        };
        Ok(Minimizer {
            location,
            value,
            region: region.kind(),
            regime: self.background.flow.regime,
            h: land.lattice.h,
            distance_to_obstacle: self.obstacle_distance(location, f64::INFINITY),
            degenerate_fit: fit.degenerate,
        })
    }

    /// Lattice patch at the local zoom resolution around `center`, walked
    /// until its minimum has a full ring. Minima pinned against the region
    /// boundary yield `None`.
    fn zoom(&self, region: Region, mut center: StripPoint) -> Result<Option<Minimizer>> {
        for _ in 0..=ZOOM_WALKS {
            let patch = self.patch(region, center, self.resolution_target(center))?;
            let Some(best) = patch.argmin() else { return Ok(None) };
            if patch.has_full_ring(best) {
                return self.finalize(region, &patch, best).map(Some);
            }
            if !patch.on_patch_edge(best) {
                return Ok(None);
            }
            center = patch.lattice.point(best);
        }
        Ok(None)
    }

    fn patch(&self, region: Region, center: StripPoint, h: f64) -> Result<Landscape> {
        let n = (2 * ZOOM_HALF + 1) as usize;
        let lattice = Lattice {
            origin: [center.x1 - ZOOM_HALF as f64 * h, center.x2 - ZOOM_HALF as f64 * h],
            h,
            n1: n,
            n2: n,
        };
        let values = self.fill(&region, &lattice)?;
        Ok(Landscape { region, lattice, values })
    }

    /// Minimum of `𝓗` over points at distance `d` from the obstacle.
    pub fn shell_minimum(&self, d: f64, samples: usize) -> Result<f64> {
        let shape = &self.background.green.obstacle().shape;
        let mut best = f64::INFINITY;
        for k in 0..samples {
            let t = 2.0 * PI * k as f64 / samples as f64;
            let s = shape.sample(t);
            let n = s.normal();
            let x = StripPoint::new(s.pos[0] - d * n[0], s.pos[1] - d * n[1]);
            if x.is_interior() {
                best = best.min(self.evaluate(x)?);
            }
        }
        Ok(best)
    }

    /// Minimum of `𝓗` on the lattice cells with `L ≤ |x₁| ≤ L + width`.
    pub fn frame_minimum(&self, half_width: f64, width: f64, h: f64) -> Result<f64> {
        let n2 = (PI / h).round() as usize;
        let n1 = (width / h).round() as usize;
        let pts: Vec<StripPoint> = (0..n1)
            .flat_map(|i| {
                let x1 = half_width + (i as f64 + 0.5) * h;
                (0..n2).flat_map(move |k| {
                    let x2 = (k as f64 + 0.5) * h;
                    [StripPoint::new(x1, x2), StripPoint::new(-x1, x2)]
                })
            })
            .collect();
        let vals: Vec<Result<f64>> = pts.par_iter().map(|&x| self.evaluate(x)).collect();
        let mut best = f64::INFINITY;
        for v in vals {
            best = best.min(v?);
        }
        Ok(best)
    }
}

/// Regular lattice of cell centres.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    pub origin: [f64; 2],
    pub h: f64,
    pub n1: usize,
    pub n2: usize,
}

impl Lattice {
    pub fn point(&self, c: usize) -> StripPoint {
        let (i, k) = (c / self.n2, c % self.n2);
        StripPoint::new(self.origin[0] + i as f64 * self.h, self.origin[1] + k as f64 * self.h)
    }

    fn ring(&self, c: usize) -> impl Iterator<Item = Option<usize>> + '_ {
        let (i, k) = ((c / self.n2) as i64, (c % self.n2) as i64);
        (-1..=1).flat_map(move |di| {
            (-1..=1).filter_map(move |dk| {
                if di == 0 && dk == 0 {
                    return None;
                }
                let (a, b) = (i + di, k + dk);
                Some(
                    (a >= 0 && b >= 0 && (a as usize) < self.n1 && (b as usize) < self.n2)
                        .then(|| a as usize * self.n2 + b as usize),
                )
            })
        })
    }
}

/// Values of `𝓗` on a lattice; `None` marks cells outside the region.
#[derive(Debug, Clone)]
pub struct Landscape {
    pub region: Region,
    pub lattice: Lattice,
    pub values: Vec<Option<f64>>,
}

/// Result of a quadratic fit over a 3×3 stencil.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinedMinimizer {
    pub location: StripPoint,
    pub degenerate: bool,
}

impl Landscape {
    pub fn evaluated(&self) -> impl Iterator<Item = (StripPoint, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(c, v)| v.map(|v| (self.lattice.point(c), v)))
    }

    pub fn len(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn argmin(&self) -> Option<usize> {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(c, v)| v.map(|v| (c, v)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(c, _)| c)
    }

    pub fn value_range(&self) -> f64 {
        let (lo, hi) = self
            .values
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        hi - lo
    }

    /// All eight neighbours are evaluated.
    pub fn has_full_ring(&self, c: usize) -> bool {
        self.values[c].is_some() && self.lattice.ring(c).all(|n| n.is_some_and(|n| self.values[n].is_some()))
    }

    fn on_patch_edge(&self, c: usize) -> bool {
        self.lattice.ring(c).any(|n| n.is_none())
    }

    /// Cells not exceeded by any evaluated neighbour.
    pub fn is_local_min(&self, c: usize) -> bool {
        let Some(v) = self.values[c] else { return false };
        self.lattice
            .ring(c)
            .flatten()
            .all(|n| self.values[n].is_none_or(|w| w >= v))
    }

    /// Local minima with a full evaluated ring.
    pub fn interior_minima(&self) -> Vec<usize> {
        (0..self.values.len()).filter(|&c| self.is_local_min(c) && self.has_full_ring(c)).collect()
    }

    /// Local minima with respect to evaluated neighbours, including cells at
    /// the region edge, which may hide minimizers below the grid scale.
    pub fn candidate_cells(&self) -> Vec<usize> {
        (0..self.values.len()).filter(|&c| self.is_local_min(c)).collect()
    }

    /// Quadratic least-squares fit over the 3×3 stencil around `c`.
    pub fn refine_minimizer(&self, c: usize) -> Result<RefinedMinimizer> {
        if !self.has_full_ring(c) {
            return Err(Error::Precondition("refinement needs a full ring of evaluated neighbours".into()));
        }
        let (i, k) = (c / self.lattice.n2, c % self.lattice.n2);
        let mut f = [[0.0; 3]; 3];
        for (a, row) in f.iter_mut().enumerate() {
            for (b, v) in row.iter_mut().enumerate() {
                *v = self.values[(i + a - 1) * self.lattice.n2 + (k + b - 1)].unwrap();
            }
        }
        let center = self.lattice.point(c);
        let fit = quadratic_vertex(&f);
        Ok(match fit {
            Some((u, v)) => {
                let h = self.lattice.h;
                RefinedMinimizer {
                    location: StripPoint::new(center.x1 + (u * h).clamp(-0.5 * h, 0.5 * h), center.x2 + (v * h).clamp(-0.5 * h, 0.5 * h)),
                    degenerate: false,
                }
            }
            None => RefinedMinimizer { location: center, degenerate: true },
        })
    }

    /// `(x₁, x₂, 𝓗)` rows for every evaluated cell.
    pub fn rows(&self) -> Vec<(f64, f64, f64)> {
        self.evaluated().map(|(x, v)| (x.x1, x.x2, v)).collect()
    }
}

/// Vertex of the least-squares quadratic through a 3×3 stencil with unit
/// spacing, in stencil coordinates; `None` when the fit is not strictly convex.
pub fn quadratic_vertex(f: &[[f64; 3]; 3]) -> Option<(f64, f64)> {
    // Orthogonal design on {−1,0,1}²: each coefficient has a closed form.
    let (mut su, mut sv, mut suu, mut svv, mut suv, mut s) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for (a, row) in f.iter().enumerate() {
        for (b, &v) in row.iter().enumerate() {
            let (u, w) = (a as f64 - 1.0, b as f64 - 1.0);
            su += u * v;
            sv += w * v;
            suu += u * u * v;
            svv += w * w * v;
            suv += u * w * v;
            s += v;
        }
    }
    let gu = su / 6.0;
    let gv = sv / 6.0;
    // normal equations: Σf = 9a + 6(c_uu + c_vv), Σu²f = 6a + 6c_uu + 4c_vv, Σv²f = 6a + 4c_uu + 6c_vv
    let sum_c = (suu + svv - 4.0 * s / 3.0) / 2.0;
    let diff_c = (suu - svv) / 2.0;
    let cuu = 0.5 * (sum_c + diff_c);
    let cvv = 0.5 * (sum_c - diff_c);
    let cuv = suv / 4.0;
    let hxx = 2.0 * cuu;
    let hyy = 2.0 * cvv;
    let det = hxx * hyy - cuv * cuv;
    let scale = f.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    if !(hxx > 1e-12 * scale && det > 1e-24 * scale * scale) {
        return None;
    }
    let u = -(hyy * gu - cuv * gv) / det;
    let v = -(hxx * gv - cuv * gu) / det;
    Some((u, v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_vertex_exact() {
        let q = |u: f64, v: f64| 2.0 * (u - 0.3).powi(2) + 0.5 * (u - 0.3) * (v + 0.2) + (v + 0.2).powi(2) + 1.0;
        let mut f = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                f[a][b] = q(a as f64 - 1.0, b as f64 - 1.0);
            }
        }
        let (u, v) = quadratic_vertex(&f).unwrap();
        assert!((u - 0.3).abs() < 1e-10 && (v + 0.2).abs() < 1e-10, "{u} {v}");
    }

    #[test]
    fn plateau_is_degenerate() {
        assert!(quadratic_vertex(&[[1.0; 3]; 3]).is_none());
    }
}
