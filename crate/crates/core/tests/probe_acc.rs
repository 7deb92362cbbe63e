use ncchern::geometry::FiniteGeometry;
use ncchern::harness::{
    clean_bulk_gap, evaluate_one, evaluate_point, resolve_eval, run_sweep, seed_schedule,
    EvalSection, SweepConfig,
};
use ncchern::invariants::InvariantKind;
use ncchern::localization::{fit_decay, resolvent_moments};
use ncchern::models::by_name;
use ncchern::oracle::lyapunov_1d;
use num_complex::Complex;
use std::time::Instant;

#[test]
fn p1_zoo() {
    let zoo: &[(&str, &[f64], usize)] = &[
        ("ssh", &[0.2, 1.0, 0.0], 64),
        ("ssh", &[1.0, 0.3, 0.0], 64),
        ("ssh_reversed", &[0.2, 1.0, 0.0], 64),
        ("ssh", &[0.5, 0.9, 0.0], 64),
        ("qwz", &[1.0, 0.0], 24),
        ("qwz", &[-1.0, 0.0], 24),
        ("qwz", &[3.0, 0.0], 24),
        ("hofstadter", &[1.0, 3.0, 0.0], 24),
        ("hofstadter", &[2.0, 3.0, 0.0], 24),
        ("chiral3d", &[2.0, 0.0], 8),
        ("chiral3d", &[4.0, 0.0], 8),
    ];
    for (name, params, size) in zoo {
        let model = by_name::<f64>(name, params).unwrap();
        let d = model.spec.dim();
        let bulk_kind = if d % 2 == 0 {
            InvariantKind::EvenChern
        } else {
            InvariantKind::OddChern
        };
        let mut eval = EvalSection::default();
        if d == 1 {
            eval.index_radius = Some(10.0);
        }
        let r = resolve_eval(&model, &eval, *size, false).unwrap();
        let t0 = Instant::now();
        let bulk = evaluate_one(&model, bulk_kind, *size, 0, &r).unwrap();
        let t1 = t0.elapsed().as_secs_f64();
        let t0 = Instant::now();
        let index = evaluate_one(&model, InvariantKind::FredholmIndex, *size, 0, &r).unwrap();
        let t2 = t0.elapsed().as_secs_f64();
        println!(
            "ZOO {} d{} L{}: bulk {:+.6} -> {} ({:.1}s) | index {:+.6} -> {} ({:.1}s) r={} agree={}",
            model.name, d, size, bulk.raw, bulk.nearest, t1,
            index.raw, index.nearest, t2, r.radius,
            bulk.nearest == index.nearest
        );
    }
}

#[test]
fn p2_c1_qwz() {
    let t0 = Instant::now();
    let clean = by_name::<f64>("qwz", &[1.0, 0.0]).unwrap();
    let r = resolve_eval(&clean, &EvalSection::default(), 24, false).unwrap();
    let c = evaluate_one(&clean, InvariantKind::EvenChern, 24, 0, &r).unwrap();
    println!(
        "C1 clean: raw {:+.8} nearest {} dev {:.2e} ({:.1}s)",
        c.raw, c.nearest, c.deviation, t0.elapsed().as_secs_f64()
    );
    let dis = by_name::<f64>("qwz", &[1.0, 2.0]).unwrap();
    let t0 = Instant::now();
    let seeds = seed_schedule(0, 0, 20);
    let agg = evaluate_point(&dis, InvariantKind::EvenChern, 24, &seeds, &r).unwrap();
    println!(
        "C1 W=2 20 seeds: mean {:+.6} std {:.4} dev {:.4} ({:.1}s)",
        agg.mean, agg.std, agg.deviation, t0.elapsed().as_secs_f64()
    );
}

#[test]
fn p3_c2_ssh() {
    for (t1, t2, expect) in [(0.2f64, 1.0f64, -1.0f64), (1.0, 0.3, 0.0)] {
        let m = by_name::<f64>("ssh", &[t1, t2, 0.0]).unwrap();
        let r = resolve_eval(&m, &EvalSection::default(), 64, false).unwrap();
        let c = evaluate_one(&m, InvariantKind::OddChern, 64, 0, &r).unwrap();
        println!(
            "C2 clean ssh({t1},{t2}): raw {:+.3e} err {:.3e}",
            c.raw,
            (c.raw - expect).abs()
        );
        let md = by_name::<f64>("ssh", &[t1, t2, 1.0]).unwrap();
        let seeds = seed_schedule(0, 0, 20);
        let agg = evaluate_point(&md, InvariantKind::OddChern, 64, &seeds, &r).unwrap();
        println!(
            "C2 W=1 ssh({t1},{t2}): mean {:+.6} std {:.4} err {:.4}",
            agg.mean,
            agg.std,
            (agg.mean - expect).abs()
        );
    }
}

#[test]
fn p4_c7_anderson() {
    let m = by_name::<f64>("anderson", &[4.0]).unwrap();
    let g = FiniteGeometry::open(&[256]).unwrap();
    let seeds: Vec<u64> = (1..=50).collect();
    let t0 = Instant::now();
    let prof =
        resolvent_moments(&m.spec, &m.flux, &g, Complex::new(0.0, 1e-3), 0.5, &seeds).unwrap();
    let fit = fit_decay(&prof, (5, 110)).unwrap();
    let gamma = lyapunov_1d(0.0, 4.0, 7, 400_000);
    println!(
        "C7: rate {:.6} se {:.6} quality {:.4} | gamma/2 {:.6} ratio {:.3} ({:.0}s)",
        fit.rate,
        fit.rate_stderr,
        fit.quality,
        gamma / 2.0,
        fit.rate / (0.5 * gamma),
        t0.elapsed().as_secs_f64()
    );
}

#[test]
fn p5_c8_sweep() {
    let grid: Vec<f64> = (0..10).map(|i| 1.1 + 0.2 * i as f64).collect();
    let text = format!(
        r#"
base_seed = 0
[model]
builtin = "qwz"
params = [1.0, 0.3]
[sweep]
parameter = "param:0"
grid = {grid:?}
sizes = [16]
seeds = 6
invariants = ["even_chern"]
"#
    );
    let cfg = SweepConfig::<f64>::from_toml_str(&text).unwrap();
    let t0 = Instant::now();
    let rows = run_sweep(&cfg).unwrap();
    for r in &rows {
        println!(
            "C8 m={:.2}: raw {:+.4} -> {} (dev {:.3}) unconv {}",
            r.param.unwrap(),
            r.raw,
            r.nearest,
            r.deviation,
            r.unconverged
        );
    }
    for w in grid.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        let m = by_name::<f64>("qwz", &[mid, 0.0]).unwrap();
        let gap = clean_bulk_gap(&m, 0.0).unwrap();
        let width = gap.map(|(lo, hi)| hi - lo).unwrap_or(0.0);
        println!("C8 gap mid {:.2}: {:.4}", mid, width);
    }
    println!("C8 time {:.0}s", t0.elapsed().as_secs_f64());
}

#[test]
fn p6_c5_slab() {
    for m in [1.0f64, -1.0] {
        let model = by_name::<f64>("qwz", &[m, 0.0]).unwrap();
        let mut eval = EvalSection::default();
        eval.depth = Some(32);
        let r = resolve_eval(&model, &eval, 64, true).unwrap();
        let t0 = Instant::now();
        let b = evaluate_one(&model, InvariantKind::BoundaryOddChern, 64, 0, &r).unwrap();
        println!(
            "C5 slab m={m}: boundary raw {:+.6} tail {:?} unconv {} ({:.0}s)",
            b.raw,
            b.tail,
            b.unconverged,
            t0.elapsed().as_secs_f64()
        );
        let rb = resolve_eval(&model, &EvalSection::default(), 24, false).unwrap();
        let bulk = evaluate_one(&model, InvariantKind::EvenChern, 24, 0, &rb).unwrap();
        println!(
            "C5 bulk m={m}: raw {:+.6} | diff {:.4}",
            bulk.raw,
            (bulk.raw - b.raw).abs()
        );
    }
}
