//! Energy bookkeeping and the uniqueness-style experiments.
//!
//! The ledger tracks every term of the admissibility energy inequality
//!
//! ```text
//! |v(t)|^2 + |F(t)|^2 + |M(t)|^2 + |grad M(t)|^2
//!   + 2 int_0^t ( nu |grad v|^2 + kappa |grad F|^2 + |grad M|^2 + |lap M|^2
//!                 + (1/mu^2)(|M|^2-1) M . (M - lap M) )
//!   <= initial quadratic terms
//! ```
//!
//! Dissipation integrals are accumulated with the right-endpoint rule, which
//! is the quadrature the backward-Euler diffusion steps satisfy exactly; the
//! trapezoidal rule would overcount by O(dt) on decaying signals and report a
//! spurious inequality violation.
//!
//! Twin experiments advance two trajectories in lockstep, record the
//! difference functional f, its dissipation g, the Gronwall majorant h built
//! from the listed solution norms, and the cross-term integrals I_1..I_9 of
//! the corresponding difference identity.

use crate::error::{Error, Result};
use crate::fields::{
    self, Field, FieldState, GhostRule, GridSpec, Magnetization, SimParams, TensorField, Velocity,
};
use crate::norms::{self, GradBc};
use crate::ops;
use crate::solver;

/// All terms of the energy inequality at one time, plus the free energy.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyLedger {
    pub t: f64,
    pub v_l2sq: f64,
    pub f_l2sq: f64,
    pub m_l2sq: f64,
    pub grad_m_l2sq: f64,
    /// running 2 int nu |grad v|^2
    pub diss_viscous: f64,
    /// running 2 int kappa |grad F|^2
    pub diss_elastic: f64,
    /// running 2 int |grad M|^2
    pub diss_grad_m: f64,
    /// running 2 int |lap M|^2
    pub diss_lap_m: f64,
    /// running 2 int (1/mu^2)(|M|^2-1) M . (M - lap M)
    pub diss_penalty: f64,
    /// the right-hand side: initial quadratic terms, constant along a run
    pub rhs: f64,
    /// rhs minus the left-hand side; negative values flag a violation
    pub slack: f64,
    /// Helmholtz free energy: exchange + external field + penalty + elastic
    pub helmholtz: f64,
}

impl EnergyLedger {
    pub fn quadratic_sum(&self) -> f64 {
        self.v_l2sq + self.f_l2sq + self.m_l2sq + self.grad_m_l2sq
    }

    pub fn dissipation_sum(&self) -> f64 {
        self.diss_viscous + self.diss_elastic + self.diss_grad_m + self.diss_lap_m + self.diss_penalty
    }
}

fn quad_terms(state: &FieldState) -> (f64, f64, f64, f64) {
    let g = &state.grid;
    (
        norms::l2_sq_velocity(g, &state.v),
        norms::l2_sq_tensor(g, &state.f),
        norms::l2_sq_magnetization(g, &state.m),
        norms::grad_energy_magnetization(g, &state.m),
    )
}

/// The mixed penalty dissipation density integrated over the box:
/// (1/mu^2) (|M|^2-1) M . (M - lap M).
fn penalty_dissipation(grid: &GridSpec, m: &Magnetization, mu: f64) -> f64 {
    let gl = ops::ginzburg_landau(grid, m, mu);
    let mut acc = 0.0;
    let vol = grid.cell_volume();
    for a in 0..3 {
        let lap = ops::laplacian_cell(grid, &m.comps[a]);
        let (ga, ma) = (&gl.comps[a], &m.comps[a]);
        ga.for_interior(|i, j, k, gv| {
            let (ii, jj, kk) = (i as isize, j as isize, k as isize);
            acc += gv * (ma.at(ii, jj, kk) - lap.at(ii, jj, kk)) * vol;
        });
    }
    acc
}

/// Helmholtz free energy: (1/2)|grad M|^2 - M.H_ext + (1/(4 mu^2))(|M|^2-1)^2
/// + (1/2)|F|^2, integrated.
pub fn helmholtz_energy(state: &FieldState, params: &SimParams) -> f64 {
    let g = &state.grid;
    let vol = g.cell_volume();
    let mut penalty = 0.0;
    let mut zeeman = 0.0;
    let n = g.cells();
    for k in 0..n[2] as isize {
        for j in 0..n[1] as isize {
            for i in 0..n[0] as isize {
                let m = [
                    state.m.comps[0].at(i, j, k),
                    state.m.comps[1].at(i, j, k),
                    state.m.comps[2].at(i, j, k),
                ];
                let n2 = m[0] * m[0] + m[1] * m[1] + m[2] * m[2];
                penalty += (n2 - 1.0) * (n2 - 1.0) * vol;
                zeeman += (m[0] * params.h_ext[0] + m[1] * params.h_ext[1] + m[2] * params.h_ext[2])
                    * vol;
            }
        }
    }
    0.5 * norms::grad_energy_magnetization(g, &state.m) - zeeman
        + penalty / (4.0 * params.mu * params.mu)
        + 0.5 * norms::l2_sq_tensor(g, &state.f)
}

/// Ledger at the initial state.
pub fn ledger_init(state: &FieldState, params: &SimParams) -> EnergyLedger {
    let (v2, f2, m2, gm2) = quad_terms(state);
    let rhs = v2 + f2 + m2 + gm2;
    EnergyLedger {
        t: state.time,
        v_l2sq: v2,
        f_l2sq: f2,
        m_l2sq: m2,
        grad_m_l2sq: gm2,
        diss_viscous: 0.0,
        diss_elastic: 0.0,
        diss_grad_m: 0.0,
        diss_lap_m: 0.0,
        diss_penalty: 0.0,
        rhs,
        slack: 0.0,
        helmholtz: helmholtz_energy(state, params),
    }
}

/// Advance the ledger by one step ending at `state` (ghosts filled).
pub fn update_ledger(
    prev: &EnergyLedger,
    state: &FieldState,
    params: &SimParams,
    dt: f64,
) -> EnergyLedger {
    let g = &state.grid;
    let (v2, f2, m2, gm2) = quad_terms(state);
    let f_bc = match params.f_bc {
        fields::DeformationBc::Zero => GradBc::DirichletZero,
        // identity wall data: the quadratic form uses the same link rule
        fields::DeformationBc::Identity => GradBc::DirichletZero,
    };
    let diss_viscous = prev.diss_viscous + 2.0 * dt * params.nu * norms::grad_energy_velocity(g, &state.v);
    let diss_elastic =
        prev.diss_elastic + 2.0 * dt * params.kappa * norms::grad_energy_tensor(g, &state.f, f_bc);
    let diss_grad_m = prev.diss_grad_m + 2.0 * dt * norms::grad_energy_magnetization(g, &state.m);
    let diss_lap_m =
        prev.diss_lap_m + 2.0 * dt * norms::laplacian_l2_sq_magnetization(g, &state.m);
    let diss_penalty =
        prev.diss_penalty + 2.0 * dt * penalty_dissipation(g, &state.m, params.mu);
    let lhs = v2 + f2 + m2 + gm2 + diss_viscous + diss_elastic + diss_grad_m + diss_lap_m + diss_penalty;
    EnergyLedger {
        t: state.time,
        v_l2sq: v2,
        f_l2sq: f2,
        m_l2sq: m2,
        grad_m_l2sq: gm2,
        diss_viscous,
        diss_elastic,
        diss_grad_m,
        diss_lap_m,
        diss_penalty,
        rhs: prev.rhs,
        slack: prev.rhs - lhs,
        helmholtz: helmholtz_energy(state, params),
    }
}

// ---------------------------------------------------------------------------
// quadrature helpers for the cross terms

fn dot_velocity(grid: &GridSpec, a: &Velocity, b: &Velocity) -> f64 {
    let vol = grid.cell_volume();
    let mut s = 0.0;
    for c in 0..a.comps.len() {
        a.comps[c].for_interior(|i, j, k, av| {
            s += av * b.comps[c].at(i as isize, j as isize, k as isize) * vol;
        });
    }
    s
}

fn dot_tensor(grid: &GridSpec, a: &TensorField, b: &TensorField) -> f64 {
    let vol = grid.cell_volume();
    let mut s = 0.0;
    for c in 0..a.comps.len() {
        a.comps[c].for_interior(|i, j, k, av| {
            s += av * b.comps[c].at(i as isize, j as isize, k as isize) * vol;
        });
    }
    s
}

fn dot_magnetization(grid: &GridSpec, a: &Magnetization, b: &Magnetization) -> f64 {
    let vol = grid.cell_volume();
    let mut s = 0.0;
    for c in 0..3 {
        a.comps[c].for_interior(|i, j, k, av| {
            s += av * b.comps[c].at(i as isize, j as isize, k as isize) * vol;
        });
    }
    s
}

fn diff_velocity(a: &Velocity, b: &Velocity) -> Velocity {
    let mut out = a.clone();
    for c in 0..a.comps.len() {
        let d = a.comps[c].dims();
        for k in 0..d[2] as isize {
            for j in 0..d[1] as isize {
                for i in 0..d[0] as isize {
                    out.comps[c].set(i, j, k, a.comps[c].at(i, j, k) - b.comps[c].at(i, j, k));
                }
            }
        }
    }
    out
}

fn diff_tensor(a: &TensorField, b: &TensorField) -> TensorField {
    let mut out = a.clone();
    for c in 0..a.comps.len() {
        let d = a.comps[c].dims();
        for k in 0..d[2] as isize {
            for j in 0..d[1] as isize {
                for i in 0..d[0] as isize {
                    out.comps[c].set(i, j, k, a.comps[c].at(i, j, k) - b.comps[c].at(i, j, k));
                }
            }
        }
    }
    out
}

fn diff_magnetization(a: &Magnetization, b: &Magnetization) -> Magnetization {
    let mut out = a.clone();
    for c in 0..3 {
        let d = a.comps[c].dims();
        for k in 0..d[2] as isize {
            for j in 0..d[1] as isize {
                for i in 0..d[0] as isize {
                    out.comps[c].set(i, j, k, a.comps[c].at(i, j, k) - b.comps[c].at(i, j, k));
                }
            }
        }
    }
    out
}

fn laplacian_magnetization(grid: &GridSpec, m: &Magnetization) -> Magnetization {
    let mut out = Magnetization::zeros(grid);
    for a in 0..3 {
        out.comps[a] = ops::laplacian_cell(grid, &m.comps[a]);
    }
    out
}

/// |grad M| magnitude field at cell centers (central differences).
fn grad_m_magnitude(grid: &GridSpec, m: &Magnetization) -> Field {
    let dim = grid.dim();
    let h = grid.spacing();
    let n = grid.cells();
    let mut out = Field::zeros(grid.cells());
    for k in 0..n[2] as isize {
        for j in 0..n[1] as isize {
            for i in 0..n[0] as isize {
                let mut acc = 0.0;
                for a in 0..3 {
                    for ax in 0..dim {
                        let mut up = [i, j, k];
                        let mut dn = [i, j, k];
                        up[ax] += 1;
                        dn[ax] -= 1;
                        let d = (m.comps[a].at(up[0], up[1], up[2])
                            - m.comps[a].at(dn[0], dn[1], dn[2]))
                            / (2.0 * h[ax]);
                        acc += d * d;
                    }
                }
                out.set(i, j, k, acc.sqrt());
            }
        }
    }
    out
}

/// Frobenius magnitude of F at centers.
fn tensor_magnitude(grid: &GridSpec, f: &TensorField) -> Field {
    let n = grid.cells();
    let mut out = Field::zeros(grid.cells());
    for k in 0..n[2] as isize {
        for j in 0..n[1] as isize {
            for i in 0..n[0] as isize {
                let acc: f64 = f.comps.iter().map(|c| c.at(i, j, k) * c.at(i, j, k)).sum();
                out.set(i, j, k, acc.sqrt());
            }
        }
    }
    out
}

/// Majorant flavor: the 2D estimates use gradient norms of one solution, the
/// 3D ones the Prodi-Serrin norms of the designated strong solution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MajorantMode {
    TwoD,
    ThreeD { s: f64 },
}

/// The Gronwall majorant density h(t) for a pair of states: the sum of the
/// norm products appearing in the difference estimates, times a calibration
/// constant (default 1, reported separately by the twin harness).
pub fn gronwall_majorant(
    a: &FieldState,
    b: &FieldState,
    mode: MajorantMode,
    calibration: f64,
) -> Result<f64> {
    if a.grid != b.grid {
        return Err(Error::Shape("twin states live on different grids".into()));
    }
    let g = &a.grid;
    let m8_4 = |st: &FieldState| -> Result<f64> {
        let m = norms::lp_norm_magnitude(
            g,
            &[&st.m.comps[0], &st.m.comps[1], &st.m.comps[2]],
            8.0,
        )?;
        Ok(m.powi(4))
    };
    let base = 1.0 + m8_4(a)? + m8_4(b)?;
    let h = match mode {
        MajorantMode::TwoD => {
            let grad_v1 = norms::grad_energy_velocity(g, &a.v);
            let grad_f1 = norms::grad_energy_tensor(g, &a.f, GradBc::DirichletZero);
            let grad_m1 = norms::grad_energy_magnetization(g, &a.m);
            let lap_m2 = norms::laplacian_l2_sq_magnetization(g, &b.m);
            let v2 = norms::l2_sq_velocity(g, &b.v).sqrt();
            let grad_v2 = norms::grad_energy_velocity(g, &b.v).sqrt();
            base + grad_v1 + grad_f1 + grad_m1 + lap_m2 + v2 * grad_v2
        }
        MajorantMode::ThreeD { s } => {
            let r = norms::prodi_serrin_pair(s)?;
            let v2 = norms::lp_norm_velocity_centered(g, &b.v, s)?;
            let f2 = norms::lp_norm_cell(g, &tensor_magnitude(g, &b.f), s)?;
            let m2 = norms::lp_norm_magnitude(
                g,
                &[&b.m.comps[0], &b.m.comps[1], &b.m.comps[2]],
                s,
            )?;
            let gm2 = norms::lp_norm_cell(g, &grad_m_magnitude(g, &b.m), s)?;
            base + v2.powf(r) + f2.powf(r) + m2.powf(r) + gm2.powf(r)
        }
    };
    Ok(calibration * h)
}

/// One sampled row of the twin-run difference bookkeeping.
#[derive(Clone, Debug)]
pub struct GronwallRecord {
    pub t: f64,
    /// half the sum of the four squared difference norms
    pub f: f64,
    /// running dissipation integral of the difference
    pub g: f64,
    /// majorant density at this time
    pub h: f64,
    /// running integral of the majorant
    pub h_integral: f64,
    /// running cross-term integrals of the difference identity
    pub i_terms: [f64; 9],
}

/// Difference functional f(t) of a pair of states.
pub fn difference_functional(a: &FieldState, b: &FieldState) -> f64 {
    let g = &a.grid;
    let dv = diff_velocity(&a.v, &b.v);
    let df = diff_tensor(&a.f, &b.f);
    let mut dm = diff_magnetization(&a.m, &b.m);
    for c in 0..3 {
        dm.comps[c].fill_ghosts(g.dim(), GhostRule::Neumann);
    }
    0.5 * (norms::l2_sq_velocity(g, &dv)
        + norms::l2_sq_tensor(g, &df)
        + norms::l2_sq_magnetization(g, &dm)
        + norms::grad_energy_magnetization(g, &dm))
}

/// Instantaneous integrands of the difference identity: the dissipation
/// density of the difference and the nine cross terms.
fn difference_integrands(
    a: &FieldState,
    b: &FieldState,
    params: &SimParams,
    mode: MajorantMode,
) -> (f64, [f64; 9]) {
    let g = &a.grid;
    let dim = g.dim();
    let scheme = params.scheme;

    let dv = {
        let mut d = diff_velocity(&a.v, &b.v);
        d.apply_no_slip(g);
        d
    };
    let df = {
        let mut d = diff_tensor(&a.f, &b.f);
        for c in d.comps.iter_mut() {
            c.fill_ghosts(dim, GhostRule::DirichletZero);
        }
        d
    };
    let dm = {
        let mut d = diff_magnetization(&a.m, &b.m);
        for c in d.comps.iter_mut() {
            c.fill_ghosts(dim, GhostRule::Neumann);
        }
        d
    };

    let g_density = params.nu * norms::grad_energy_velocity(g, &dv)
        + params.kappa * norms::grad_energy_tensor(g, &df, GradBc::DirichletZero)
        + norms::grad_energy_magnetization(g, &dm)
        + norms::laplacian_l2_sq_magnetization(g, &dm);

    let lap_dm = laplacian_magnetization(g, &dm);
    let gl_a = ops::ginzburg_landau(g, &a.m, params.mu);
    let gl_b = ops::ginzburg_landau(g, &b.m, params.mu);
    let gl_diff = diff_magnetization(&gl_a, &gl_b);

    let mut i = [0.0; 9];
    match mode {
        MajorantMode::TwoD => {
            // difference-tested identity, nine cross terms
            let adv_v = diff_velocity(
                &ops::advect_velocity(g, &a.v, scheme),
                &ops::advect_velocity(g, &b.v, scheme),
            );
            i[0] = dot_velocity(g, &adv_v, &dv);
            let mag = diff_velocity(
                &ops::magnetic_stress_div(g, &a.m),
                &ops::magnetic_stress_div(g, &b.m),
            );
            i[1] = dot_velocity(g, &mag, &dv);
            let ela = diff_velocity(
                &ops::elastic_stress_div(g, &a.f),
                &ops::elastic_stress_div(g, &b.f),
            );
            i[2] = -dot_velocity(g, &ela, &dv);
            let adv_f = diff_tensor(
                &ops::advect_tensor(g, &a.v, &a.f, scheme),
                &ops::advect_tensor(g, &b.v, &b.f, scheme),
            );
            i[3] = dot_tensor(g, &adv_f, &df);
            let stretch = diff_tensor(
                &ops::velocity_gradient_times_f(g, &a.v, &a.f),
                &ops::velocity_gradient_times_f(g, &b.v, &b.f),
            );
            i[4] = -dot_tensor(g, &stretch, &df);
            let adv_m = diff_magnetization(
                &ops::advect_magnetization(g, &a.v, &a.m, scheme),
                &ops::advect_magnetization(g, &b.v, &b.m, scheme),
            );
            i[5] = dot_magnetization(g, &adv_m, &dm);
            i[6] = dot_magnetization(g, &gl_diff, &dm);
            i[7] = -dot_magnetization(g, &adv_m, &lap_dm);
            i[8] = -dot_magnetization(g, &gl_diff, &lap_dm);
        }
        MajorantMode::ThreeD { .. } => {
            // cross-paired terms of the weak-strong identity
            let adv_v1 = ops::advect_velocity(g, &a.v, scheme);
            let adv_v2 = ops::advect_velocity(g, &b.v, scheme);
            i[0] = dot_velocity(g, &adv_v1, &b.v) + dot_velocity(g, &adv_v2, &a.v);
            let mag1 = ops::magnetic_stress_div(g, &a.m);
            let mag2 = ops::magnetic_stress_div(g, &b.m);
            i[1] = dot_velocity(g, &mag1, &b.v) + dot_velocity(g, &mag2, &a.v);
            let ela1 = ops::elastic_stress_div(g, &a.f);
            let ela2 = ops::elastic_stress_div(g, &b.f);
            i[2] = -dot_velocity(g, &ela1, &b.v) - dot_velocity(g, &ela2, &a.v);
            let adv_f1 = ops::advect_tensor(g, &a.v, &a.f, scheme);
            let adv_f2 = ops::advect_tensor(g, &b.v, &b.f, scheme);
            i[3] = dot_tensor(g, &adv_f1, &b.f) + dot_tensor(g, &adv_f2, &a.f);
            let st1 = ops::velocity_gradient_times_f(g, &a.v, &a.f);
            let st2 = ops::velocity_gradient_times_f(g, &b.v, &b.f);
            i[4] = -dot_tensor(g, &st1, &b.f) - dot_tensor(g, &st2, &a.f);
            let adv_m1 = ops::advect_magnetization(g, &a.v, &a.m, scheme);
            let adv_m2 = ops::advect_magnetization(g, &b.v, &b.m, scheme);
            i[5] = dot_magnetization(g, &adv_m1, &b.m) + dot_magnetization(g, &adv_m2, &a.m);
            i[6] = -dot_magnetization(g, &gl_diff, &dm);
            let lap_m1 = laplacian_magnetization(g, &a.m);
            let lap_m2 = laplacian_magnetization(g, &b.m);
            i[7] = -dot_magnetization(g, &adv_m1, &lap_m2) - dot_magnetization(g, &adv_m2, &lap_m1);
            i[8] = dot_magnetization(g, &gl_diff, &lap_dm);
        }
    }
    (g_density, i)
}

/// The residual of the difference identity f(T) - f(0) + g(T) + sum I_i(T);
/// O(dt) + O(h^2) along twin runs of the 2D scheme.
pub fn identity_residual(records: &[GronwallRecord]) -> f64 {
    match (records.first(), records.last()) {
        (Some(first), Some(last)) => {
            last.f - first.f + last.g + last.i_terms.iter().sum::<f64>()
        }
        _ => 0.0,
    }
}

/// Which field receives the twin perturbation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PerturbField {
    Velocity,
    Magnetization,
    Deformation,
}

#[derive(Clone, Debug)]
pub struct TwinSpec {
    pub field: PerturbField,
    /// perturbation amplitudes; zero entries request the bitwise check
    pub deltas: Vec<f64>,
    pub seed: u64,
    pub cadence: usize,
    pub mode: MajorantMode,
    pub calibration: f64,
}

impl TwinSpec {
    pub fn velocity_default(mode: MajorantMode) -> Self {
        Self {
            field: PerturbField::Velocity,
            deltas: vec![1e-4, 1e-5, 1e-6],
            seed: 0xD1FF,
            cadence: 5,
            mode,
            calibration: 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TwinRun {
    pub delta: f64,
    pub records: Vec<GronwallRecord>,
    pub f0: f64,
    pub f_end: f64,
    /// amplification f(T)/f(0)
    pub ratio: f64,
    /// least-squares fit of log f(t) - log f(0) against int h
    pub c_fit: f64,
}

#[derive(Clone, Debug)]
pub struct TwinExperiment {
    /// delta = 0 reproduces the trajectory bit for bit
    pub bitwise_identical: bool,
    pub runs: Vec<TwinRun>,
    /// max/min of the amplification ratios over the nonzero deltas
    pub ratio_spread: f64,
    pub verdict: bool,
}

fn apply_perturbation(state: &mut FieldState, spec: &TwinSpec, delta: f64) {
    let grid = state.grid;
    match spec.field {
        PerturbField::Velocity => {
            let pat = fields::perturbation_velocity(&grid, delta, spec.seed);
            for c in 0..state.v.comps.len() {
                let d = state.v.comps[c].dims();
                for k in 0..d[2] as isize {
                    for j in 0..d[1] as isize {
                        for i in 0..d[0] as isize {
                            let v = state.v.comps[c].at(i, j, k) + pat.comps[c].at(i, j, k);
                            state.v.comps[c].set(i, j, k, v);
                        }
                    }
                }
            }
        }
        PerturbField::Magnetization => {
            for a in 0..3 {
                let pat = fields::perturbation_scalar_neumann(&grid, delta, spec.seed + a as u64);
                let n = grid.cells();
                for k in 0..n[2] as isize {
                    for j in 0..n[1] as isize {
                        for i in 0..n[0] as isize {
                            let v = state.m.comps[a].at(i, j, k) + pat.at(i, j, k);
                            state.m.comps[a].set(i, j, k, v);
                        }
                    }
                }
            }
        }
        PerturbField::Deformation => {
            let dim = grid.dim();
            for ic in 0..dim {
                for jc in 0..dim {
                    let pat = fields::perturbation_scalar_dirichlet(
                        &grid,
                        delta,
                        spec.seed + (ic * dim + jc) as u64,
                    );
                    let n = grid.cells();
                    for k in 0..n[2] as isize {
                        for j in 0..n[1] as isize {
                            for i in 0..n[0] as isize {
                                let v = state.f.comp(ic, jc).at(i, j, k) + pat.at(i, j, k);
                                state.f.comp_mut(ic, jc).set(i, j, k, v);
                            }
                        }
                    }
                }
            }
        }
    }
}

fn states_identical(a: &FieldState, b: &FieldState) -> bool {
    a.v == b.v && a.p == b.p && a.f == b.f && a.m == b.m
}

/// Advance a pair of trajectories in lockstep and record the difference
/// functional, dissipation, majorant and cross terms per sample.
fn twin_pair(
    base: &FieldState,
    params: &SimParams,
    spec: &TwinSpec,
    delta: f64,
) -> Result<(Vec<GronwallRecord>, FieldState, FieldState)> {
    let mut s1 = base.clone();
    let mut s2 = base.clone();
    apply_perturbation(&mut s2, spec, delta);
    s1.apply_boundary_conditions(params.f_bc);
    s2.apply_boundary_conditions(params.f_bc);

    let n_steps = (params.t_end / params.dt).round() as usize;
    let cadence = spec.cadence.max(1);

    let mut g_acc = 0.0;
    let mut i_acc = [0.0; 9];
    let mut h_acc = 0.0;
    let (mut g_prev, mut i_prev) = difference_integrands(&s1, &s2, params, spec.mode);
    let mut h_prev = gronwall_majorant(&s1, &s2, spec.mode, spec.calibration)?;

    let mut records = vec![GronwallRecord {
        t: s1.time,
        f: difference_functional(&s1, &s2),
        g: 0.0,
        h: h_prev,
        h_integral: 0.0,
        i_terms: i_acc,
    }];

    for step in 1..=n_steps {
        let (n1, _) = solver::advance(&s1, params)?;
        let (n2, _) = solver::advance(&s2, params)?;
        s1 = n1;
        s2 = n2;
        let (g_now, i_now) = difference_integrands(&s1, &s2, params, spec.mode);
        let h_now = gronwall_majorant(&s1, &s2, spec.mode, spec.calibration)?;
        let dt = params.dt;
        g_acc += 0.5 * (g_prev + g_now) * dt;
        h_acc += 0.5 * (h_prev + h_now) * dt;
        for c in 0..9 {
            i_acc[c] += 0.5 * (i_prev[c] + i_now[c]) * dt;
        }
        g_prev = g_now;
        i_prev = i_now;
        h_prev = h_now;
        if step % cadence == 0 || step == n_steps {
            records.push(GronwallRecord {
                t: s1.time,
                f: difference_functional(&s1, &s2),
                g: g_acc,
                h: h_now,
                h_integral: h_acc,
                i_terms: i_acc,
            });
        }
    }
    Ok((records, s1, s2))
}

/// Full twin protocol: the bitwise zero-perturbation check plus one pair per
/// nonzero delta. PASS means the zero run is bit-identical and the
/// amplification ratios are delta-independent within a factor of two.
pub fn run_twin_experiment(
    base: &FieldState,
    params: &SimParams,
    spec: &TwinSpec,
) -> Result<TwinExperiment> {
    // delta = 0: determinism check
    let (zero_records, z1, z2) = twin_pair(base, params, spec, 0.0)?;
    let bitwise_identical =
        states_identical(&z1, &z2) && zero_records.iter().all(|r| r.f == 0.0);

    let mut runs = Vec::new();
    for &delta in spec.deltas.iter().filter(|d| **d != 0.0) {
        let (records, _, _) = twin_pair(base, params, spec, delta)?;
        let f0 = records.first().map(|r| r.f).unwrap_or(0.0);
        let f_end = records.last().map(|r| r.f).unwrap_or(0.0);
        let ratio = if f0 > 0.0 { f_end / f0 } else { 0.0 };
        // least squares of log f - log f0 = c * int h
        let mut num = 0.0;
        let mut den = 0.0;
        for r in records.iter().skip(1) {
            if r.f > 0.0 && f0 > 0.0 {
                let y = (r.f / f0).ln();
                num += y * r.h_integral;
                den += r.h_integral * r.h_integral;
            }
        }
        let c_fit = if den > 0.0 { num / den } else { 0.0 };
        runs.push(TwinRun { delta, records, f0, f_end, ratio, c_fit });
    }
    let ratios: Vec<f64> = runs.iter().map(|r| r.ratio).collect();
    let ratio_spread = match (
        ratios.iter().cloned().fold(f64::INFINITY, f64::min),
        ratios.iter().cloned().fold(0.0f64, f64::max),
    ) {
        (min, max) if min > 0.0 => max / min,
        _ => f64::INFINITY,
    };
    let verdict = bitwise_identical && (runs.is_empty() || ratio_spread <= 2.0);
    Ok(TwinExperiment { bitwise_identical, runs, ratio_spread, verdict })
}

// ---------------------------------------------------------------------------
// Prodi-Serrin monitor

/// Space-norm series and running Bochner norms of one 3D trajectory.
#[derive(Clone, Debug)]
pub struct ProdiSerrinLog {
    pub s: f64,
    pub r: f64,
    pub times: Vec<f64>,
    pub v_ls: Vec<f64>,
    pub f_ls: Vec<f64>,
    pub grad_m_ls: Vec<f64>,
    /// running L^r(0,t) norms of the three series
    pub v_bochner: Vec<f64>,
    pub f_bochner: Vec<f64>,
    pub grad_m_bochner: Vec<f64>,
}

pub struct ProdiSerrinMonitor {
    log: ProdiSerrinLog,
    acc: [f64; 3],
    prev: Option<(f64, [f64; 3])>,
}

impl ProdiSerrinMonitor {
    pub fn new(grid: &GridSpec, s: f64) -> Result<Self> {
        if grid.dim() != 3 {
            return Err(Error::InvalidArgument(
                "the Prodi-Serrin monitor applies to 3D trajectories".into(),
            ));
        }
        let r = norms::prodi_serrin_pair(s)?;
        Ok(Self {
            log: ProdiSerrinLog {
                s,
                r,
                times: Vec::new(),
                v_ls: Vec::new(),
                f_ls: Vec::new(),
                grad_m_ls: Vec::new(),
                v_bochner: Vec::new(),
                f_bochner: Vec::new(),
                grad_m_bochner: Vec::new(),
            },
            acc: [0.0; 3],
            prev: None,
        })
    }

    pub fn observe(&mut self, state: &FieldState) -> Result<()> {
        let g = &state.grid;
        let s = self.log.s;
        let r = self.log.r;
        let v = norms::lp_norm_velocity_centered(g, &state.v, s)?;
        let f = norms::lp_norm_cell(g, &tensor_magnitude(g, &state.f), s)?;
        let gm = norms::lp_norm_cell(g, &grad_m_magnitude(g, &state.m), s)?;
        let now = [v, f, gm];
        if let Some((t_prev, prev)) = self.prev {
            let dt = state.time - t_prev;
            for c in 0..3 {
                self.acc[c] += 0.5 * (prev[c].powf(r) + now[c].powf(r)) * dt;
            }
        }
        self.prev = Some((state.time, now));
        self.log.times.push(state.time);
        self.log.v_ls.push(v);
        self.log.f_ls.push(f);
        self.log.grad_m_ls.push(gm);
        self.log.v_bochner.push(self.acc[0].powf(1.0 / r));
        self.log.f_bochner.push(self.acc[1].powf(1.0 / r));
        self.log.grad_m_bochner.push(self.acc[2].powf(1.0 / r));
        Ok(())
    }

    pub fn log(&self) -> &ProdiSerrinLog {
        &self.log
    }

    pub fn into_log(self) -> ProdiSerrinLog {
        self.log
    }
}

// ---------------------------------------------------------------------------
// cubic monotonicity

#[derive(Clone, Copy, Debug, Default)]
pub struct CubicReport {
    pub checked: usize,
    pub monotonicity_violations: usize,
    pub bound_violations: usize,
    /// most negative monotonicity margin observed (>= 0 means clean)
    pub worst_margin: f64,
}

/// Check, pointwise on sample pairs, that the cubic penalty difference is
/// monotone, (|a|^2 a - |b|^2 b).(a-b) >= 0, and obeys the bound
/// | |a|^2 a - |b|^2 b | <= (3/2) |a-b| (|a|^2 + |b|^2).
/// Tiny negative rounding margins (relative 1e-12) are not violations.
pub fn cubic_monotonicity_check<I>(pairs: I) -> CubicReport
where
    I: IntoIterator<Item = ([f64; 3], [f64; 3])>,
{
    let mut rep = CubicReport { worst_margin: f64::INFINITY, ..Default::default() };
    for (a, b) in pairs {
        rep.checked += 1;
        let na2 = a[0] * a[0] + a[1] * a[1] + a[2] * a[2];
        let nb2 = b[0] * b[0] + b[1] * b[1] + b[2] * b[2];
        let cube_diff = [
            na2 * a[0] - nb2 * b[0],
            na2 * a[1] - nb2 * b[1],
            na2 * a[2] - nb2 * b[2],
        ];
        let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
        let dot = cube_diff[0] * d[0] + cube_diff[1] * d[1] + cube_diff[2] * d[2];
        let scale = (1.0 + na2 + nb2).powf(1.5);
        rep.worst_margin = rep.worst_margin.min(dot / scale);
        if dot < -1e-12 * scale {
            rep.monotonicity_violations += 1;
        }
        let lhs = (cube_diff[0] * cube_diff[0]
            + cube_diff[1] * cube_diff[1]
            + cube_diff[2] * cube_diff[2])
            .sqrt();
        let dn = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        let rhs = 1.5 * dn * (na2 + nb2);
        if lhs > rhs + 1e-12 * scale {
            rep.bound_violations += 1;
        }
    }
    if rep.checked == 0 {
        rep.worst_margin = 0.0;
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{make_state, CouplingFlags, IcSpec};
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(dt: f64, t_end: f64) -> SimParams {
        SimParams::new(1.0, 1.0, 1.0, dt, t_end).unwrap()
    }

    #[test]
    fn ledger_rest_state_slack_is_zero() {
        let g = GridSpec::square(16).unwrap();
        let s = make_state(&g, &IcSpec::named("rest").unwrap()).unwrap();
        let p = params(1e-3, 10e-3);
        let out = solver::run(s, &p, None);
        assert!(out.error.is_none());
        for l in &out.summary.ledger_series {
            assert_eq!(l.slack, 0.0);
        }
    }

    #[test]
    fn helmholtz_energy_of_zero_m_is_quarter() {
        // M = 0 on the unit square with mu = 1: only the penalty integral
        // (1/4) int (0 - 1)^2 = 1/4 remains
        let g = GridSpec::square(32).unwrap();
        let mut s = FieldState::zeros(&g);
        s.apply_boundary_conditions(fields::DeformationBc::Zero);
        let p = params(1e-3, 0.0);
        let psi = helmholtz_energy(&s, &p);
        assert!((psi - 0.25).abs() < 1e-12, "psi = {psi}");
    }

    #[test]
    fn gronwall_majorant_baseline_and_zero_difference() {
        let g = GridSpec::square(16).unwrap();
        let mut s = FieldState::zeros(&g);
        s.apply_boundary_conditions(fields::DeformationBc::Zero);
        // both states fully at rest with M = 0: only the "+1" term remains
        let h = gronwall_majorant(&s, &s, MajorantMode::TwoD, 1.0).unwrap();
        assert!((h - 1.0).abs() < 1e-12, "h = {h}");
        assert_eq!(difference_functional(&s, &s), 0.0);
    }

    #[test]
    fn twin_zero_delta_is_bitwise() {
        let g = GridSpec::square(16).unwrap();
        let s = make_state(&g, &IcSpec::named("vortex").unwrap()).unwrap();
        let p = params(1e-3, 10e-3);
        let spec = TwinSpec {
            deltas: vec![],
            ..TwinSpec::velocity_default(MajorantMode::TwoD)
        };
        let exp = run_twin_experiment(&s, &p, &spec).unwrap();
        assert!(exp.bitwise_identical);
        assert!(exp.verdict);
    }

    #[test]
    fn twin_perturbation_sets_f0() {
        let g = GridSpec::square(16).unwrap();
        let s = make_state(&g, &IcSpec::named("rest").unwrap()).unwrap();
        let mut p = params(1e-3, 5e-3);
        p.coupling = CouplingFlags {
            magnetic_stress: false,
            elastic_stress: false,
            advection: false,
            ginzburg_landau: false,
        };
        let spec = TwinSpec {
            field: PerturbField::Magnetization,
            deltas: vec![1e-4],
            seed: 3,
            cadence: 1,
            mode: MajorantMode::TwoD,
            calibration: 1.0,
        };
        let exp = run_twin_experiment(&s, &p, &spec).unwrap();
        let run = &exp.runs[0];
        assert!(run.f0 > 0.0);
        // pure heat flow contracts the difference
        assert!(run.f_end <= run.f0, "f {} -> {}", run.f0, run.f_end);
    }

    /// Perturbing M around the unit state with couplings off decays: the
    /// linearized penalty is positive semidefinite there.
    #[test]
    fn twin_m_perturbation_contracts() {
        let g = GridSpec::square(16).unwrap();
        let s = make_state(&g, &IcSpec::named("rest").unwrap()).unwrap();
        let mut p = params(1e-3, 20e-3);
        p.coupling.magnetic_stress = false;
        p.coupling.elastic_stress = false;
        let spec = TwinSpec {
            field: PerturbField::Magnetization,
            deltas: vec![1e-5],
            seed: 11,
            cadence: 5,
            mode: MajorantMode::TwoD,
            calibration: 1.0,
        };
        let exp = run_twin_experiment(&s, &p, &spec).unwrap();
        assert!(exp.runs[0].f_end <= exp.runs[0].f0);
    }

    #[test]
    fn internal_consistency_of_f() {
        let g = GridSpec::square(16).unwrap();
        let a = make_state(&g, &IcSpec::named("random-smooth").unwrap().with_seed(1)).unwrap();
        let b = make_state(&g, &IcSpec::named("random-smooth").unwrap().with_seed(2)).unwrap();
        let f = difference_functional(&a, &b);
        // recompute from scratch with independent norm calls
        let dv = diff_velocity(&a.v, &b.v);
        let df = diff_tensor(&a.f, &b.f);
        let mut dm = diff_magnetization(&a.m, &b.m);
        for c in 0..3 {
            dm.comps[c].fill_ghosts(2, GhostRule::Neumann);
        }
        let f2 = 0.5
            * (norms::l2_sq_velocity(&g, &dv)
                + norms::l2_sq_tensor(&g, &df)
                + norms::l2_sq_magnetization(&g, &dm)
                + norms::grad_energy_magnetization(&g, &dm));
        assert!((f - f2).abs() <= 1e-14 * f.max(1.0));
    }

    #[test]
    fn prodi_serrin_monitor_basics() {
        let g2 = GridSpec::square(8).unwrap();
        assert!(ProdiSerrinMonitor::new(&g2, 4.0).is_err());
        let g = GridSpec::cube(8).unwrap();
        assert!(ProdiSerrinMonitor::new(&g, 3.0).is_err());
        let mut mon = ProdiSerrinMonitor::new(&g, 4.0).unwrap();
        assert!((mon.log().r - 8.0).abs() < 1e-14);
        let mut s = make_state(&g, &IcSpec::named("rest").unwrap()).unwrap();
        mon.observe(&s).unwrap();
        s.time = 0.1;
        mon.observe(&s).unwrap();
        let log = mon.log();
        assert_eq!(log.v_ls, vec![0.0, 0.0]);
        assert_eq!(log.v_bochner[1], 0.0);
    }

    #[test]
    fn cubic_monotonicity_examples_and_random_sweep() {
        // (a, a): both sides zero
        let rep = cubic_monotonicity_check(vec![([1.0, 2.0, -0.5], [1.0, 2.0, -0.5])]);
        assert_eq!(rep.monotonicity_violations, 0);
        assert_eq!(rep.bound_violations, 0);

        // a = 2 e3, b = e3: dot = 7, bound 7 <= 7.5
        let rep = cubic_monotonicity_check(vec![([0.0, 0.0, 2.0], [0.0, 0.0, 1.0])]);
        assert_eq!(rep.monotonicity_violations, 0);
        assert_eq!(rep.bound_violations, 0);

        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let pairs = (0..100_000).map(move |_| {
            let mut a = [0.0; 3];
            let mut b = [0.0; 3];
            for c in 0..3 {
                a[c] = rng.gen_range(-2.0..2.0);
                b[c] = rng.gen_range(-2.0..2.0);
            }
            (a, b)
        });
        let rep = cubic_monotonicity_check(pairs);
        assert_eq!(rep.checked, 100_000);
        assert_eq!(rep.monotonicity_violations, 0);
        assert_eq!(rep.bound_violations, 0);
    }
}
