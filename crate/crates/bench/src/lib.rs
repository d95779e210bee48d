//! Fixtures shared by the benchmarks.

use std::f64::consts::PI;

use strip_vortex_core::*;

pub fn disk_green(panels: usize) -> GreenAssembly {
    let obstacle = build_obstacle(&ObstacleShape::disk([0.0, PI / 2.0], 0.5), panels).expect("valid disk");
    assemble(obstacle).expect("solvable panelization")
}

/// Deterministic pseudo-random stream values on `n` cells.
pub fn stream_values(n: usize) -> Vec<(usize, f64)> {
    (0..n).map(|i| (i, ((i as f64 * 0.618_033_988_75).fract() - 0.5) * (1.0 + (i % 7) as f64))).collect()
}

/// Gaussian-kernel action on an `n × n` lattice with a bowl-shaped `η`.
pub fn dense_action(n: usize) -> DenseAction {
    let h = 1.0 / n as f64;
    let positions: Vec<StripPoint> = (0..n * n).map(|i| StripPoint::new((i % n) as f64 * h, 1.0 + (i / n) as f64 * h)).collect();
    let eta = positions.iter().map(|p| (p.x1 - 0.5).powi(2) + (p.x2 - 1.5).powi(2)).collect();
    let kernel = positions
        .iter()
        .flat_map(|p| positions.iter().map(move |q| (-p.distance(q).powi(2) / 0.045).exp()))
        .collect();
    DenseAction::new(positions, eta, kernel, h).expect("consistent dimensions")
}
