use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::Serialize;
use strip_vortex_core::*;

use crate::checks::{run_checks, ChecksReport};
use crate::diagnostics::{assemble_shape, trace_summary, TraceSummary};

/// Environment variable that overrides the configured output directory.
pub const OUT_ENV: &str = "STRIP_VORTEX_OUT";

/// `--out`, then the environment, then the config, then `./out`.
pub fn output_dir(flag: Option<&Path>, env: Option<PathBuf>, config: &RunConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or(env)
        .or_else(|| config.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn create(dir: &Path) -> Result<()> {
    Ok(fs::create_dir_all(dir)?)
}

fn region_name(choice: RegionChoice) -> &'static str {
    match choice {
        RegionChoice::Window => "window",
        RegionChoice::Layer => "layer",
        RegionChoice::Exterior => "exterior",
    }
}

struct Setup {
    green: GreenAssembly,
    i_top: f64,
    gamma: f64,
}

impl Setup {
    fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let green = assemble_shape(&config.obstacle, config.grid.panels)?;
        let i_top = compute_top_flux(&green);
        let gamma = config.physics.gamma.resolve(config.physics.b, i_top);
        Ok(Self { green, i_top, gamma })
    }

    fn background(&self, config: &RunConfig) -> Result<Background<'_>> {
        Background::new(&self.green, FlowConfig::new(&self.green, config.physics.b, self.gamma, config.regime.sigma)?)
    }
}

/// Lattice spacing for scanning `region`: layers are resolved on `1/(b+λ)`.
fn scan_spacing(config: &RunConfig, kr: &KirchhoffRouth<'_>, region: &Region) -> f64 {
    match region {
        Region::Layer { .. } => 0.5 / kr.layer_scale(),
        _ => config.grid.landscape_h.unwrap_or(config.grid.h),
    }
}

#[derive(Debug, Serialize)]
pub struct GreenSummary {
    pub panels: usize,
    pub lambda0: f64,
    pub i_obs: f64,
    pub i_top: f64,
    pub rho_plus: f64,
    pub rho_minus: f64,
    pub boundary_residual: f64,
    pub gamma: f64,
    pub flow: FlowConfig,
    pub grid_hash: String,
    pub fluid_cells: usize,
    pub collar: f64,
}

pub fn green(config: &RunConfig, out: &Path) -> Result<GreenSummary> {
    let setup = Setup::new(config)?;
    let g = &setup.green;
    let grid = build_grid(g.obstacle(), config.grid.half_width, config.grid.h)?;
    let hash = grid.layout_hash();
    info!("evaluating robin and rho on {} fluid cells", grid.fluid.len());
    let rows: Vec<([f64; 3], [f64; 3])> = grid
        .fluid
        .par_iter()
        .map(|&idx| {
            let x = grid.center(idx);
            let robin = g.robin(x).unwrap_or(f64::NAN);
            let rho = g.rho(x).unwrap_or(f64::NAN);
            ([x.x1, x.x2, robin], [x.x1, x.x2, rho])
        })
        .collect();
    let (robin, rho): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    create(out)?;
    FieldFile::new("robin", "1", &hash, robin).write(&out.join("robin.csv"))?;
    FieldFile::new("rho", "1", &hash, rho).write(&out.join("rho.csv"))?;
    let (rho_plus, rho_minus) = g.far_coefficients();
    let summary = GreenSummary {
        panels: config.grid.panels,
        lambda0: g.lambda0,
        i_obs: g.obstacle_flux(),
        i_top: setup.i_top,
        rho_plus,
        rho_minus,
        boundary_residual: g.rho.boundary_residual(|_| 1.0),
        gamma: setup.gamma,
        flow: FlowConfig::new(g, config.physics.b, setup.gamma, config.regime.sigma)?,
        grid_hash: hash,
        fluid_cells: grid.fluid.len(),
        collar: g.collar(),
    };
    write_report(&summary, &out.join("green.json"))?;
    Ok(summary)
}

#[derive(Debug, Serialize)]
pub struct LandscapeEntry {
    pub region: Region,
    pub spacing: f64,
    pub cells: usize,
    pub minimizers: Vec<Minimizer>,
}

#[derive(Debug, Serialize)]
pub struct LandscapeSummary {
    pub flow: FlowConfig,
    pub layer_scale: f64,
    pub regions: Vec<LandscapeEntry>,
}

pub fn landscape(config: &RunConfig, out: &Path) -> Result<LandscapeSummary> {
    let setup = Setup::new(config)?;
    let bg = setup.background(config)?;
    create(out)?;
    let mut regions = Vec::new();
    for &choice in &config.regime.landscape_regions {
        let region = config.region(choice);
        let kr = KirchhoffRouth::for_region(&bg, &region);
        let spacing = scan_spacing(config, &kr, &region);
        info!("scanning {} at spacing {spacing:.4e}", region_name(choice));
        let (land, minimizers) = kr.find_minimizers(region, spacing)?;
        let rows: Vec<[f64; 3]> = land.rows().into_iter().map(|(a, b, v)| [a, b, v]).collect();
        let tag = format!("{}-{:016x}-{}", region_name(choice), spacing.to_bits(), land.len());
        FieldFile::new("kirchhoff-routh", "1", &tag, rows).write(&out.join(format!("kr_{}.csv", region_name(choice))))?;
        regions.push(LandscapeEntry { region, spacing, cells: land.len(), minimizers });
    }
    let summary = LandscapeSummary {
        flow: bg.flow,
        layer_scale: config.physics.b + bg.lambda(),
        regions,
    };
    write_report(&summary, &out.join("landscape.json"))?;
    Ok(summary)
}

#[derive(Debug, Serialize)]
pub struct SolveSummary {
    pub region: Region,
    pub flow: FlowConfig,
    pub grid_hash: String,
    pub region_cells: usize,
    pub report: SolveReport,
    pub trace: TraceSummary,
}

fn patch_setup<'a>(config: &RunConfig, bg: &'a Background<'a>) -> Result<(Region, KirchhoffRouth<'a>, Vec<Minimizer>, TruncatedGrid)> {
    let region = config.region(config.regime.region);
    let kr = KirchhoffRouth::for_region(bg, &region);
    let (_, minimizers) = kr.find_minimizers(region, scan_spacing(config, &kr, &region))?;
    if minimizers.is_empty() {
        return Err(Error::Region(format!("no minimizer of the landscape in {region:?}")));
    }
    let grid = build_grid(bg.green.obstacle(), config.grid.half_width, config.grid.h)?;
    Ok((region, kr, minimizers, grid))
}

pub fn solve_patch(config: &RunConfig, out: &Path) -> Result<SolveSummary> {
    let eps = config
        .physics
        .eps
        .ok_or_else(|| Error::Validation { field: "physics.eps".into(), reason: "required by solve".into() })?;
    let setup = Setup::new(config)?;
    let bg = setup.background(config)?;
    let (region, kr, minimizers, grid) = patch_setup(config, &bg)?;
    let action = PhysicalAction::new(&kr, &grid, region)?;
    info!("solving on {} region cells, eps = {eps}", action.cells.len());
    let sol = solve(&action, eps, minimizers[0].location, &config.solver.options())?;
    let hash = grid.layout_hash();
    create(out)?;
    let mut trace = String::from("iteration,mu,energy,support,mass_error,max_fill\n");
    for r in &sol.state.trace {
        trace.push_str(&format!(
            "{},{:.16e},{:.16e},{},{:.16e},{:.16e}\n",
            r.iteration, r.mu, r.energy, r.support, r.mass_error, r.max_fill
        ));
    }
    fs::write(out.join("trace.csv"), trace)?;
    let omega: Vec<[f64; 3]> = sol
        .state
        .cells
        .iter()
        .map(|&(c, fill)| {
            let x = action.position(c);
            [x.x1, x.x2, fill / (eps * eps)]
        })
        .collect();
    if !omega.is_empty() {
        FieldFile::new("omega", "1/length^2", &hash, omega).write(&out.join("omega.csv"))?;
    }
    let summary = SolveSummary {
        region,
        flow: bg.flow,
        grid_hash: hash,
        region_cells: action.cells.len(),
        report: SolveReport::new(&action, &sol, &minimizers),
        trace: trace_summary(&sol),
    };
    write_report(&summary, &out.join("solve.json"))?;
    Ok(summary)
}

#[derive(Debug, Serialize)]
pub struct SweepSummary {
    pub region: Region,
    pub flow: FlowConfig,
    pub sweep: Sweep,
    pub traces: Vec<TraceSummary>,
    pub exterior_negative: Option<bool>,
}

pub fn sweep(config: &RunConfig, out: &Path) -> Result<SweepSummary> {
    let eps = config
        .physics
        .eps_list
        .clone()
        .ok_or_else(|| Error::Validation { field: "physics.eps_list".into(), reason: "required by sweep".into() })?;
    let setup = Setup::new(config)?;
    let bg = setup.background(config)?;
    let (region, kr, minimizers, grid) = patch_setup(config, &bg)?;
    let action = PhysicalAction::new(&kr, &grid, region)?;
    let (sweep, sols) = asymptotic_sweep(&action, &eps, minimizers[0].location, &minimizers, &config.solver.options())?;
    let exterior_negative = match (region, sols.last()) {
        (Region::Window { half_width }, Some(last)) => Some(verify_exterior_negativity(&action, &last.state, half_width)?),
        _ => None,
    };
    let summary = SweepSummary {
        region,
        flow: bg.flow,
        traces: sols.iter().map(trace_summary).collect(),
        sweep,
        exterior_negative,
    };
    create(out)?;
    write_report(&summary, &out.join("sweep.json"))?;
    Ok(summary)
}

pub fn checks(config: &RunConfig, out: &Path) -> Result<ChecksReport> {
    let report = run_checks(config)?;
    create(out)?;
    write_report(&report, &out.join("checks.json"))?;
    Ok(report)
}
