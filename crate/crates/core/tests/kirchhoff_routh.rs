use std::f64::consts::PI;
use std::sync::OnceLock;

use strip_vortex_core::*;

fn disk_assembly() -> &'static (GreenAssembly, f64) {
    static CELL: OnceLock<(GreenAssembly, f64)> = OnceLock::new();
    CELL.get_or_init(|| {
        let g = assemble(build_obstacle(&ObstacleShape::disk([0.0, PI / 2.0], 0.5), 128).unwrap()).unwrap();
        let i_top = compute_top_flux(&g);
        (g, i_top)
    })
}

fn critical(b: f64) -> Background<'static> {
    let (g, i_top) = disk_assembly();
    Background::new(g, FlowConfig::new(g, b, FlowConfig::critical_gamma(b, *i_top), 0.05).unwrap()).unwrap()
}

#[test]
fn far_field_cross_section() {
    let bg = critical(1.0);
    let kr = KirchhoffRouth::new(&bg);
    let mut worst = 0.0f64;
    for k in 1..60 {
        let x2 = k as f64 * PI / 60.0;
        let h = kr.evaluate(StripPoint::new(10.0, x2)).unwrap();
        let model = -(2.0 * x2.sin()).ln() / (2.0 * PI) + 2.0 * x2;
        worst = worst.max((h - model).abs());
    }
    assert!(worst < 1e-2, "deviation {worst}");
}

#[test]
fn far_field_minimizer_height() {
    let bg = critical(1.0);
    let kr = KirchhoffRouth::new(&bg);
    let h = PI / 128.0;
    let (mut best, mut at) = (f64::INFINITY, 0.0);
    for k in 0..128 {
        let x2 = (k as f64 + 0.5) * h;
        let v = kr.evaluate(StripPoint::new(10.0, x2)).unwrap();
        if v < best {
            (best, at) = (v, x2);
        }
    }
    // cot t₀ = 4π  ⇔  t₀ = atan(1/(4π))
    let t0 = (1.0 / (4.0 * PI)).atan();
    assert!((t0 - 0.0793).abs() < 2e-4);
    assert!((at - t0).abs() <= 2.0 * h, "grid minimizer {at}, t0 {t0}");
}

#[test]
fn wall_blow_up() {
    let bg = critical(1.0);
    let kr = KirchhoffRouth::new(&bg);
    let v: Vec<f64> = [0.1, 0.05, 0.02].iter().map(|&d| kr.evaluate(StripPoint::new(2.0, d)).unwrap()).collect();
    assert!(v[0] < v[1] && v[1] < v[2], "{v:?}");
}

#[test]
fn circulation_shift_moves_landscape_by_rho() {
    let (g, i_top) = disk_assembly();
    let b = 3.0;
    let gamma = FlowConfig::critical_gamma(b, *i_top);
    let a = Background::new(g, FlowConfig::new(g, b, gamma, 0.05).unwrap()).unwrap();
    let c = Background::new(g, FlowConfig::new(g, b, gamma + 0.7, 0.05).unwrap()).unwrap();
    let (ka, kc) = (KirchhoffRouth::new(&a), KirchhoffRouth::new(&c));
    let dl = c.lambda() - a.lambda();
    assert!(dl > 0.0);
    for x in [StripPoint::new(1.2, 0.4), StripPoint::new(-0.3, 2.5), StripPoint::new(0.0, 0.6), StripPoint::new(4.0, 1.5)] {
        let lhs = kc.evaluate(x).unwrap() - ka.evaluate(x).unwrap();
        let rhs = -2.0 * dl * g.rho(x).unwrap();
        assert!((lhs - rhs).abs() < 1e-6, "{x:?}: {lhs} vs {rhs}");
    }
}

#[test]
fn collar_violation_is_a_domain_error() {
    let bg = critical(1.0);
    let kr = KirchhoffRouth::new(&bg);
    let x = StripPoint::new(0.0, PI / 2.0 - 0.5 - 0.5 * kr.collar);
    assert!(matches!(kr.evaluate(x), Err(Error::Domain(_))));
    assert!(matches!(kr.evaluate(StripPoint::new(0.0, PI / 2.0)), Err(Error::Domain(_))));
}

#[test]
fn empty_region_is_rejected() {
    let bg = critical(1.0);
    let kr = KirchhoffRouth::new(&bg);
    let r = kr.scan(Region::Exterior { delta: 5.0, half_width: 1.0 }, PI / 32.0);
    assert!(matches!(r, Err(Error::Region(_))));
}

#[test]
fn regime_one_window_minimizer() {
    let bg = critical(1.0);
    let kr = KirchhoffRouth::new(&bg);
    let (l, h) = (8.0, PI / 128.0);
    let (land, mins) = kr.find_minimizers(Region::Window { half_width: l }, h).unwrap();
    assert!(land.evaluated().all(|(_, v)| v.is_finite()));
    let m = mins.first().expect("a minimizer");
    assert_eq!(m.region, RegionKind::GlobalWindow);
    let x = m.location;
    assert!(x.x1.abs() < h, "symmetric disk, x1 = {}", x.x1);
    let margin = (l - x.x1.abs()).min(x.x2).min(PI - x.x2);
    assert!(margin > 5.0 * h);
    let frame = kr.frame_minimum(l, 2.0, h).unwrap();
    assert!(m.value < frame, "{} vs frame {frame}", m.value);
}

#[test]
fn layer_sandwich() {
    let bg = critical(20.0);
    let region = Region::Layer { theta1: 0.05, theta2: 20.0 };
    let kr = KirchhoffRouth::for_region(&bg, &region);
    let scale = kr.layer_scale();
    let (_, mins) = kr.find_minimizers(region, 0.5 / scale).unwrap();
    let m = mins.first().expect("a layer minimizer");
    let d = m.distance_to_obstacle * scale;
    assert!(d > 0.05 && d < 20.0, "{d}");
    let inner = kr.shell_minimum(0.05 / scale, 720).unwrap();
    let outer = kr.shell_minimum(20.0 / scale, 720).unwrap();
    assert!(m.value < inner && m.value < outer, "{} vs {inner}, {outer}", m.value);
}
