use mvflow_core::diagnostics::*;
use mvflow_core::fields::*;
use mvflow_core::solver;
use std::time::Instant;

fn main() {
    let g = GridSpec::cube(32).unwrap();
    let ic = IcSpec::named("random-smooth").unwrap().with_seed(21);
    let t0 = Instant::now();
    let mut logs = Vec::new();
    for halve in 0..2 {
        let dt = 2e-3 / (1 << halve) as f64;
        let p = SimParams::new(1.0, 1.0, 1.0, dt, 0.06).unwrap();
        let s = make_state(&g, &ic).unwrap();
        let mut mon = ProdiSerrinMonitor::new(&g, 4.0).unwrap();
        let mut on_sample = |st: &FieldState, _: &EnergyLedger, _: &solver::StepReport| {
            mon.observe(st).unwrap();
        };
        let hooks = solver::RunHooks { cadence: 3, on_sample: &mut on_sample };
        let out = solver::run(s, &p, Some(hooks));
        assert!(out.error.is_none(), "{:?}", out.error);
        println!("dt={dt:.1e}: steps={} max_div={:.2e} elapsed={:.1?}",
            out.summary.steps_taken, out.summary.max_divergence, t0.elapsed());
        let log = mon.into_log();
        println!("  final bochner: v={:.6e} F={:.6e} gradM={:.6e}",
            log.v_bochner.last().unwrap(), log.f_bochner.last().unwrap(), log.grad_m_bochner.last().unwrap());
        logs.push(log);
    }
    for (name, a, b) in [
        ("v", logs[0].v_bochner.last().unwrap(), logs[1].v_bochner.last().unwrap()),
        ("F", logs[0].f_bochner.last().unwrap(), logs[1].f_bochner.last().unwrap()),
        ("gradM", logs[0].grad_m_bochner.last().unwrap(), logs[1].grad_m_bochner.last().unwrap()),
    ] {
        println!("{name}: rel change under dt-halving = {:.4}", (a - b).abs() / b.max(1e-30));
    }

    // 3D twin
    let p = SimParams::new(1.0, 1.0, 1.0, 2e-3, 0.06).unwrap();
    let s = make_state(&g, &ic).unwrap();
    let spec = TwinSpec {
        deltas: vec![1e-4, 1e-5, 1e-6],
        mode: MajorantMode::ThreeD { s: 4.0 },
        ..TwinSpec::velocity_default(MajorantMode::ThreeD { s: 4.0 })
    };
    let t1 = Instant::now();
    let exp = run_twin_experiment(&s, &p, &spec).unwrap();
    println!("3D twin: bitwise={} spread={:.3} verdict={} ({:.1?})",
        exp.bitwise_identical, exp.ratio_spread, exp.verdict, t1.elapsed());
    for r in &exp.runs {
        println!("  delta {:.0e}: ratio {:.4e}", r.delta, r.ratio);
    }
}
