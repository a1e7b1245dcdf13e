// scratch probe for acceptance tolerances (deleted before finalizing)
use mvflow_core::diagnostics::*;
use mvflow_core::fields::*;
use mvflow_core::galerkin;
use mvflow_core::mms::ManufacturedSolution;
use mvflow_core::solver;

fn main() {
    let which = std::env::args().nth(1).unwrap_or_default();
    match which.as_str() {
        "ledger" => ledger_probe(),
        "mms" => mms_probe(),
        "twin" => twin_probe(),
        "galerkin" => galerkin_probe(),
        _ => println!("usage: probe [ledger|mms|twin|galerkin]"),
    }
}

fn ledger_probe() {
    for preset in ["rest", "vortex", "random-smooth", "constant-M"] {
        for halve in 0..2 {
            let g = GridSpec::square(64).unwrap();
            let ic = IcSpec::named(preset).unwrap();
            let s = make_state(&g, &ic).unwrap();
            let mut p = SimParams::new(1.0, 1.0, 1.0, 1e-3 / (1 << halve) as f64, 0.2).unwrap();
            p.cfl_limit = 0.6;
            let out = solver::run(s, &p, Some(solver::RunHooks { cadence: 5, on_sample: &mut |_, _, _| {} }));
            assert!(out.error.is_none(), "{:?}", out.error);
            let mut min_slack_rel = f64::INFINITY;
            let mut max_psi_up: f64 = 0.0;
            let mut prev_psi = f64::INFINITY;
            for l in &out.summary.ledger_series {
                let rel = l.slack / l.rhs.max(1e-30);
                min_slack_rel = min_slack_rel.min(rel);
                if prev_psi.is_finite() {
                    max_psi_up = max_psi_up.max(l.helmholtz - prev_psi);
                }
                prev_psi = l.helmholtz;
            }
            println!(
                "{preset} dt=1e-3/{}: min slack/rhs = {min_slack_rel:.3e}, max psi increment = {max_psi_up:.3e}, rhs={:.4}",
                1 << halve,
                out.summary.ledger_series[0].rhs
            );
        }
    }
}

fn mms_probe() {
    let ms = ManufacturedSolution::default();
    // spatial: dt = 0.4 h^2, T = 0.05
    let t_end = 0.05;
    let mut errs = Vec::new();
    for n in [32usize, 64, 128] {
        let g = GridSpec::square(n).unwrap();
        let h = g.spacing()[0];
        let dt_raw = 0.4 * h * h;
        let steps = (t_end / dt_raw).ceil();
        let dt = t_end / steps;
        let p = ms.params(dt, t_end);
        let f = ms.forcing();
        let out = solver::run_forced(ms.initial_state(&g), &p, Some(&f), None);
        assert!(out.error.is_none());
        let e = ms.error(&out.summary.final_state);
        errs.push((n, e));
        println!("spatial n={n} dt={dt:.2e} err={e:.4e}");
    }
    for w in errs.windows(2) {
        println!("  order {}->{}: {:.3}", w[0].0, w[1].0, (w[0].1 / w[1].1).log2());
    }
    // temporal: fixed grid 96, dts T/{20,40,80}
    let g = GridSpec::square(96).unwrap();
    let t_end = 0.1;
    let mut es = Vec::new();
    for div in [20.0, 40.0, 80.0] {
        let dt = t_end / div;
        let p = ms.params(dt, t_end);
        let f = ms.forcing();
        let out = solver::run_forced(ms.initial_state(&g), &p, Some(&f), None);
        assert!(out.error.is_none());
        let e = ms.error(&out.summary.final_state);
        es.push(e);
        println!("temporal dt=T/{div} err={e:.6e}");
    }
    let order = ((es[0] - es[1]) / (es[1] - es[2])).log2();
    println!("  temporal Richardson order: {order:.3}");
}

fn twin_probe() {
    let g = GridSpec::square(64).unwrap();
    let s = make_state(&g, &IcSpec::named("vortex").unwrap()).unwrap();
    let p = SimParams::new(1.0, 1.0, 1.0, 1e-3, 0.2).unwrap();
    let spec = TwinSpec::velocity_default(MajorantMode::TwoD);
    let exp = run_twin_experiment(&s, &p, &spec).unwrap();
    println!("bitwise: {}", exp.bitwise_identical);
    for r in &exp.runs {
        println!(
            "delta {:.0e}: f0={:.3e} fT={:.3e} ratio={:.4} c_fit={:.3e} resid={:.3e}",
            r.delta, r.f0, r.f_end, r.ratio, r.c_fit,
            identity_residual(&r.records)
        );
    }
    println!("spread {:.3}, verdict {}", exp.ratio_spread, exp.verdict);
}

fn galerkin_probe() {
    let g = GridSpec::square(32).unwrap();
    // wall-flat initial data for F and M
    let mut s0 = FieldState::zeros(&g);
    let window = |x: [f64; 3]| {
        let w = |t: f64| 16.0 * t * t * (1.0 - t) * (1.0 - t);
        w(x[0]) * w(x[1])
    };
    for a in 0..3 {
        s0.m.comps[a].fill_interior(|i, j, k| {
            [0.0, 0.0, 1.0][a] + [0.3, -0.2, 0.25][a] * window(g.center(i, j, k))
        });
    }
    for i in 0..2 {
        for j in 0..2 {
            s0.f.comp_mut(i, j).fill_interior(|ii, jj, kk| {
                [[0.2, -0.1], [0.15, 0.1]][i][j] * window(g.center(ii, jj, kk))
            });
        }
    }
    for halve in 0..2 {
        let dt = 1e-3 / (1 << halve) as f64;
        let p = SimParams::new(1.0, 1.0, 1.0, dt, 0.2).unwrap();
        let cfg = galerkin::GalerkinConfig::preset(8);
        let traj = galerkin::run_coupled(&cfg, &g, &p, &s0).unwrap();
        println!(
            "m=8 dt={dt:.1e}: violation={:.4e} rhs={:.4} lhs_end={:.4}",
            traj.max_violation, traj.rhs,
            traj.samples.last().unwrap().lhs
        );
    }
    // m-convergence
    let p = SimParams::new(1.0, 1.0, 1.0, 1e-3, 0.2).unwrap();
    let t4 = galerkin::run_coupled(&galerkin::GalerkinConfig::preset(4), &g, &p, &s0).unwrap();
    let t8 = galerkin::run_coupled(&galerkin::GalerkinConfig::preset(8), &g, &p, &s0).unwrap();
    let t16 = galerkin::run_coupled(&galerkin::GalerkinConfig::preset(16), &g, &p, &s0).unwrap();
    let d48 = galerkin::velocity_l2_distance(&t4, &t8).unwrap();
    let d816 = galerkin::velocity_l2_distance(&t8, &t16).unwrap();
    println!("|v4-v8| = {d48:.4e}, |v8-v16| = {d816:.4e}");
}
