pub mod background;
pub mod bem;
pub mod error;
pub mod geometry;
pub mod green;
pub mod io;
pub mod kirchhoff_routh;
pub mod patch;
pub mod strip_kernel;

pub use error::{Error, Result};
pub use geometry::{build_grid, build_obstacle, ObstacleCurve, ObstacleShape, Panel, TruncatedGrid};
pub use strip_kernel::{gs, grad_gs, gs_far_field, hs_robin, StripPoint};
pub use bem::{BoundaryOperator, HarmonicSolution, Proximity};
pub use green::{assemble, Correction, GreenAssembly};
pub use background::{build_background, compute_top_flux, flux_constant, Background, BackgroundField, FlowConfig, Regime};
pub use kirchhoff_routh::{KirchhoffRouth, Landscape, Minimizer, Region, RegionKind};
pub use patch::{asymptotic_sweep, bathtub_threshold, energy, solve, verify_exterior_negativity, Bathtub, DenseAction, GreenAction, PatchState, PhysicalAction, Potential, SolveOptions, SolveReport, Solution, Sweep};
pub use io::{canonical_json, load_config, parse_config, write_report, FieldFile, GammaSpec, RegionChoice, RunConfig};
