//! The coupled time integrator: one step advances magnetization, deformation
//! gradient, then momentum, with stresses evaluated from the updated fields.
//!
//! Scheme: first-order IMEX splitting. Diffusion is backward Euler (one CG
//! solve per component), advection and the nonlinear coupling terms are
//! explicit, and incompressibility is restored by an exact discrete
//! projection (pressure Poisson solve with mirror walls, zero-mean pressure).
//! Everything is deterministic: identical inputs produce bit-identical
//! outputs, which the twin experiments rely on.

use crate::diagnostics::{ledger_init, update_ledger, EnergyLedger};
use crate::error::{Error, Result};
use crate::fields::{
    AdvectionScheme, Field, FieldState, GhostRule, GridSpec, Magnetization, SimParams,
    TensorField, Velocity,
};
use crate::linsolve;
use crate::ops;

/// Per-step outcome offered to hooks and summaries.
#[derive(Clone, Debug)]
pub struct StepReport {
    pub time: f64,
    /// advective CFL number dt * max_a |v_a| / h_a actually used
    pub cfl: f64,
    pub poisson_iters: usize,
    /// residual norms of the linear solves, pressure last
    pub residuals: Vec<f64>,
    pub max_divergence: f64,
}

type VecFn = dyn Fn([f64; 3], f64) -> [f64; 3] + Sync;
type TensFn = dyn Fn([f64; 3], f64) -> [[f64; 3]; 3] + Sync;

/// Optional source terms, used by the manufactured-solution studies.
pub struct Forcing {
    pub momentum: Box<VecFn>,
    pub deformation: Box<TensFn>,
    pub magnetization: Box<VecFn>,
}

/// Advance the magnetization one step: advection and the Ginzburg-Landau
/// term explicit, the Laplacian implicit with mirror walls.
pub fn step_magnetization(
    state: &FieldState,
    params: &SimParams,
    forcing: Option<&Forcing>,
) -> Result<(Magnetization, Vec<linsolve::SolveStats>)> {
    let grid = &state.grid;
    let dt = params.dt;
    let t_new = state.time + dt;
    let adv = if params.coupling.advection {
        Some(ops::advect_magnetization(grid, &state.v, &state.m, params.scheme))
    } else {
        None
    };
    let gl = if params.coupling.ginzburg_landau {
        Some(ops::ginzburg_landau(grid, &state.m, params.mu))
    } else {
        None
    };
    let mut out = Magnetization::zeros(grid);
    let mut stats = Vec::with_capacity(3);
    for a in 0..3 {
        let mut rhs = Field::zeros(grid.cells());
        let n = grid.cells();
        for k in 0..n[2] as isize {
            for j in 0..n[1] as isize {
                for i in 0..n[0] as isize {
                    let mut r = state.m.comps[a].at(i, j, k) + dt * params.h_ext[a];
                    if let Some(adv) = &adv {
                        r -= dt * adv.comps[a].at(i, j, k);
                    }
                    if let Some(gl) = &gl {
                        r -= dt * gl.comps[a].at(i, j, k);
                    }
                    if let Some(f) = forcing {
                        let x = grid.center(i as usize, j as usize, k as usize);
                        r += dt * (f.magnetization)(x, t_new)[a];
                    }
                    rhs.set(i, j, k, r);
                }
            }
        }
        let (m_new, st) = linsolve::helmholtz_cell_solve(
            grid,
            dt,
            GhostRule::Neumann,
            &rhs,
            &state.m.comps[a],
            params.cg_rel_tol,
            params.max_linear_iters,
            "magnetization diffusion",
        )?;
        out.comps[a] = m_new;
        stats.push(st);
    }
    Ok((out, stats))
}

/// Advance the deformation gradient: advection and the stretching term
/// explicit, the kappa-diffusion implicit with the configured wall data.
pub fn step_deformation(
    state: &FieldState,
    params: &SimParams,
    forcing: Option<&Forcing>,
) -> Result<(TensorField, Vec<linsolve::SolveStats>)> {
    let grid = &state.grid;
    let dim = grid.dim();
    let dt = params.dt;
    let t_new = state.time + dt;
    let adv = if params.coupling.advection {
        Some(ops::advect_tensor(grid, &state.v, &state.f, params.scheme))
    } else {
        None
    };
    let stretch = ops::velocity_gradient_times_f(grid, &state.v, &state.f);
    let mut out = TensorField::zeros(grid);
    let mut stats = Vec::with_capacity(dim * dim);
    for ic in 0..dim {
        for jc in 0..dim {
            let mut rhs = Field::zeros(grid.cells());
            let n = grid.cells();
            for k in 0..n[2] as isize {
                for j in 0..n[1] as isize {
                    for i in 0..n[0] as isize {
                        let mut r = state.f.comp(ic, jc).at(i, j, k)
                            + dt * stretch.comp(ic, jc).at(i, j, k);
                        if let Some(adv) = &adv {
                            r -= dt * adv.comp(ic, jc).at(i, j, k);
                        }
                        if let Some(f) = forcing {
                            let x = grid.center(i as usize, j as usize, k as usize);
                            r += dt * (f.deformation)(x, t_new)[ic][jc];
                        }
                        rhs.set(i, j, k, r);
                    }
                }
            }
            let wall = params.f_bc.wall_value(ic, jc);
            let rule = if wall == 0.0 {
                GhostRule::DirichletZero
            } else {
                GhostRule::DirichletConst(wall)
            };
            let (f_new, st) = linsolve::helmholtz_cell_solve(
                grid,
                dt * params.kappa,
                rule,
                &rhs,
                state.f.comp(ic, jc),
                params.cg_rel_tol,
                params.max_linear_iters,
                "deformation diffusion",
            )?;
            *out.comp_mut(ic, jc) = f_new;
            stats.push(st);
        }
    }
    Ok((out, stats))
}

/// Explicit transport-only update of F: F += dt(-(v.grad)F + grad(v) F),
/// no diffusion. Audit entry point for comparison against matrix-exponential
/// references; the caller manages ghost layers and stability.
pub fn step_deformation_transport(
    grid: &GridSpec,
    v: &Velocity,
    f: &TensorField,
    dt: f64,
    scheme: AdvectionScheme,
) -> TensorField {
    let dim = grid.dim();
    let adv = ops::advect_tensor(grid, v, f, scheme);
    let stretch = ops::velocity_gradient_times_f(grid, v, f);
    let mut out = f.clone();
    let n = grid.cells();
    for ic in 0..dim {
        for jc in 0..dim {
            for k in 0..n[2] as isize {
                for j in 0..n[1] as isize {
                    for i in 0..n[0] as isize {
                        let val = f.comp(ic, jc).at(i, j, k)
                            + dt * (stretch.comp(ic, jc).at(i, j, k)
                                - adv.comp(ic, jc).at(i, j, k));
                        out.comp_mut(ic, jc).set(i, j, k, val);
                    }
                }
            }
        }
    }
    out
}

pub struct MomentumOutcome {
    pub v: Velocity,
    pub p: Field,
    pub stats: Vec<linsolve::SolveStats>,
    pub poisson_stats: linsolve::SolveStats,
    pub max_divergence: f64,
}

/// Advance the momentum balance: explicit advection and stresses, implicit
/// viscosity, then the exact discrete projection.
pub fn step_momentum(
    state: &FieldState,
    params: &SimParams,
    f_new: &TensorField,
    m_new: &Magnetization,
    forcing: Option<&Forcing>,
) -> Result<MomentumOutcome> {
    let grid = &state.grid;
    let dim = grid.dim();
    let dt = params.dt;
    let t_new = state.time + dt;
    let h = grid.spacing();

    let cfl = (0..dim)
        .map(|a| dt * state.v.comps[a].max_abs_interior() / h[a])
        .fold(0.0, f64::max);
    if cfl > params.cfl_limit {
        return Err(Error::CflViolation { cfl, limit: params.cfl_limit });
    }

    let adv = if params.coupling.advection {
        Some(ops::advect_velocity(grid, &state.v, params.scheme))
    } else {
        None
    };
    // stress divergences from the updated fields; switched-off terms are
    // zeroed rather than skipped so both paths do identical arithmetic
    let mut magnetic = ops::magnetic_stress_div(grid, m_new);
    if !params.coupling.magnetic_stress {
        for c in magnetic.comps.iter_mut() {
            c.fill_interior(|_, _, _| 0.0);
        }
    }
    let mut elastic = ops::elastic_stress_div(grid, f_new);
    if !params.coupling.elastic_stress {
        for c in elastic.comps.iter_mut() {
            c.fill_interior(|_, _, _| 0.0);
        }
    }
    // h_ext is spatially constant, so its momentum contribution
    // grad^T(H_ext) M vanishes identically

    let mut v_star = Velocity::zeros(grid);
    let mut stats = Vec::with_capacity(dim);
    for a in 0..dim {
        let d = grid.face_dims(a);
        let mut rhs = Field::zeros(d);
        for k in 0..d[2] as isize {
            for j in 0..d[1] as isize {
                for i in 0..d[0] as isize {
                    let own = [i, j, k][a];
                    if own == 0 || own == d[a] as isize - 1 {
                        continue;
                    }
                    let mut r = state.v.comps[a].at(i, j, k) - dt * magnetic.comps[a].at(i, j, k)
                        + dt * elastic.comps[a].at(i, j, k);
                    if let Some(adv) = &adv {
                        r -= dt * adv.comps[a].at(i, j, k);
                    }
                    if let Some(f) = forcing {
                        let x = grid.face_pos(a, i as usize, j as usize, k as usize);
                        r += dt * (f.momentum)(x, t_new)[a];
                    }
                    rhs.set(i, j, k, r);
                }
            }
        }
        let (vs, st) = linsolve::helmholtz_face_solve(
            grid,
            a,
            dt * params.nu,
            &rhs,
            &state.v.comps[a],
            params.cg_rel_tol,
            params.max_linear_iters,
            "momentum diffusion",
        )?;
        v_star.comps[a] = vs;
        stats.push(st);
    }

    // projection: div grad(phi) = div(v*) / dt, then v <- v* - dt grad(phi)
    let mut b = ops::divergence(grid, &v_star);
    b.scale_interior(1.0 / dt);
    let inf_target = params.poisson_tol / dt;
    let (phi, poisson_stats) =
        linsolve::pressure_poisson_solve(grid, &b, &state.p, inf_target, params.max_linear_iters)?;
    let grad_phi = ops::gradient(grid, &phi);
    let mut v_new = v_star;
    for a in 0..dim {
        let d = grid.face_dims(a);
        for k in 0..d[2] as isize {
            for j in 0..d[1] as isize {
                for i in 0..d[0] as isize {
                    let own = [i, j, k][a];
                    if own == 0 || own == d[a] as isize - 1 {
                        continue;
                    }
                    let val = v_new.comps[a].at(i, j, k) - dt * grad_phi.comps[a].at(i, j, k);
                    v_new.comps[a].set(i, j, k, val);
                }
            }
        }
    }
    let div = ops::divergence(grid, &v_new);
    let max_divergence = div.max_abs_interior();

    Ok(MomentumOutcome { v: v_new, p: phi, stats, poisson_stats, max_divergence })
}

/// One full coupled step in the order M -> F -> momentum.
pub fn advance(state: &FieldState, params: &SimParams) -> Result<(FieldState, StepReport)> {
    advance_forced(state, params, None)
}

pub fn advance_forced(
    state: &FieldState,
    params: &SimParams,
    forcing: Option<&Forcing>,
) -> Result<(FieldState, StepReport)> {
    let mut work = state.clone();
    work.apply_boundary_conditions(params.f_bc);

    let (m_new, m_stats) = step_magnetization(&work, params, forcing)?;
    work.m = m_new;
    let dim = work.grid.dim();
    for a in 0..3 {
        work.m.comps[a].fill_ghosts(dim, GhostRule::Neumann);
    }

    let (f_new, f_stats) = step_deformation(&work, params, forcing)?;
    work.f = f_new;
    for ic in 0..dim {
        for jc in 0..dim {
            let wall = params.f_bc.wall_value(ic, jc);
            let rule = if wall == 0.0 {
                GhostRule::DirichletZero
            } else {
                GhostRule::DirichletConst(wall)
            };
            work.f.comp_mut(ic, jc).fill_ghosts(dim, rule);
        }
    }

    let f_snapshot = work.f.clone();
    let m_snapshot = work.m.clone();
    let mo = step_momentum(&work, params, &f_snapshot, &m_snapshot, forcing)?;

    let h = work.grid.spacing();
    let cfl = (0..dim)
        .map(|a| params.dt * state.v.comps[a].max_abs_interior() / h[a])
        .fold(0.0, f64::max);

    work.v = mo.v;
    work.p = mo.p;
    work.time = state.time + params.dt;
    work.apply_boundary_conditions(params.f_bc);
    work.assert_finite()?;

    let mut residuals: Vec<f64> = m_stats
        .iter()
        .chain(f_stats.iter())
        .chain(mo.stats.iter())
        .map(|s| s.residual_l2)
        .collect();
    residuals.push(mo.poisson_stats.residual_inf);

    let report = StepReport {
        time: work.time,
        cfl,
        poisson_iters: mo.poisson_stats.iterations,
        residuals,
        max_divergence: mo.max_divergence,
    };
    Ok((work, report))
}

/// Sampled observer invoked at the configured cadence (step 0 included).
pub struct RunHooks<'a> {
    pub cadence: usize,
    pub on_sample: &'a mut dyn FnMut(&FieldState, &EnergyLedger, &StepReport),
}

#[derive(Debug)]
pub struct RunSummary {
    pub final_state: FieldState,
    pub steps_taken: usize,
    pub reports: Vec<StepReport>,
    /// ledger at step 0 and at each sampled step
    pub ledger_series: Vec<EnergyLedger>,
    pub max_divergence: f64,
}

/// Result of a trajectory; on failure the partial trajectory is retained.
pub struct RunOutcome {
    pub summary: RunSummary,
    pub error: Option<Error>,
}

/// Iterate `advance` until t_end (t_end/dt steps, rounded), maintaining the
/// energy ledger and invoking the hook at the sampling cadence.
pub fn run(state0: FieldState, params: &SimParams, mut hooks: Option<RunHooks>) -> RunOutcome {
    run_forced(state0, params, None, hooks.take())
}

pub fn run_forced(
    mut state: FieldState,
    params: &SimParams,
    forcing: Option<&Forcing>,
    mut hooks: Option<RunHooks>,
) -> RunOutcome {
    state.apply_boundary_conditions(params.f_bc);
    let n_steps = if params.dt > 0.0 { (params.t_end / params.dt).round() as usize } else { 0 };
    let cadence = hooks.as_ref().map(|h| h.cadence.max(1)).unwrap_or(usize::MAX);

    let mut ledger = ledger_init(&state, params);
    let mut ledger_series = vec![ledger.clone()];
    let initial_report = StepReport {
        time: state.time,
        cfl: 0.0,
        poisson_iters: 0,
        residuals: Vec::new(),
        max_divergence: ops::divergence(&state.grid, &state.v).max_abs_interior(),
    };
    if let Some(h) = hooks.as_mut() {
        (h.on_sample)(&state, &ledger, &initial_report);
    }

    let mut reports = Vec::with_capacity(n_steps);
    let mut max_div: f64 = initial_report.max_divergence;
    let mut error = None;
    for step in 1..=n_steps {
        match advance_forced(&state, params, forcing) {
            Ok((next, report)) => {
                state = next;
                ledger = update_ledger(&ledger, &state, params, params.dt);
                max_div = max_div.max(report.max_divergence);
                if step % cadence == 0 {
                    ledger_series.push(ledger.clone());
                    if let Some(h) = hooks.as_mut() {
                        (h.on_sample)(&state, &ledger, &report);
                    }
                }
                reports.push(report);
            }
            Err(e) => {
                error = Some(e);
                break;
            }
        }
    }
    RunOutcome {
        summary: RunSummary {
            steps_taken: reports.len(),
            final_state: state,
            reports,
            ledger_series,
            max_divergence: max_div,
        },
        error,
    }
}
