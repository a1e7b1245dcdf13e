//! Reduced divergence-free spectral scheme for the velocity, coupled to the
//! grid-based deformation gradient and magnetization.
//!
//! The velocity is expanded in periodic, exactly solenoidal Fourier modes
//! (an explicitly computable stand-in for the Stokes eigenfunctions used by
//! the abstract construction; they keep every algebraic property the scheme
//! needs: L2-orthonormality, pointwise zero divergence, skew-symmetric
//! convection tensor). The modal coefficients obey
//!
//! ```text
//! d/dt g_i = -nu lambda_i g_i + sum_jk g_j g_k A^i_jk + D_i,
//! A^i_jk = -int (xi_j . grad) xi_k . xi_i,
//! D_i    =  int (grad^T M grad M - F F^T) : grad xi_i
//! ```
//!
//! integrated by RK4, with the viscous dissipation integral carried inside
//! the same RK4 state so the modal energy identity holds to O(dt^4) per step.

use crate::error::{Error, Result};
use crate::fields::{FieldState, GhostRule, GridSpec, SimParams, Velocity};
use crate::norms;
use crate::ops;
use crate::solver;
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Cos,
    Sin,
}

/// One basis field xi(x) = sqrt(2) {cos,sin}(2 pi k.x) sigma with sigma _|_ k.
#[derive(Clone, Debug)]
pub struct Mode {
    pub k: [i32; 3],
    pub pol: [f64; 3],
    pub phase: Phase,
    /// eigenvalue of -lap on this mode: 4 pi^2 |k|^2
    pub lambda: f64,
}

impl Mode {
    fn k_dot(&self, x: [f64; 3]) -> f64 {
        2.0 * PI * (self.k[0] as f64 * x[0] + self.k[1] as f64 * x[1] + self.k[2] as f64 * x[2])
    }

    fn scalar(&self, x: [f64; 3]) -> f64 {
        let arg = self.k_dot(x);
        let v = match self.phase {
            Phase::Cos => arg.cos(),
            Phase::Sin => arg.sin(),
        };
        std::f64::consts::SQRT_2 * v
    }

    fn scalar_prime(&self, x: [f64; 3]) -> f64 {
        let arg = self.k_dot(x);
        let v = match self.phase {
            Phase::Cos => -arg.sin(),
            Phase::Sin => arg.cos(),
        };
        std::f64::consts::SQRT_2 * v
    }

    /// xi(x), always a 3-slot vector (z unused in 2D).
    pub fn eval(&self, x: [f64; 3]) -> [f64; 3] {
        let s = self.scalar(x);
        [s * self.pol[0], s * self.pol[1], s * self.pol[2]]
    }

    /// d(xi_a)/d(x_b) = sqrt(2) phase'(2 pi k.x) 2 pi k_b sigma_a.
    pub fn grad(&self, x: [f64; 3]) -> [[f64; 3]; 3] {
        let sp = self.scalar_prime(x);
        let mut g = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                g[a][b] = sp * 2.0 * PI * self.k[b] as f64 * self.pol[a];
            }
        }
        g
    }

    /// Vector potential whose curl reproduces the mode (z-slot only in 2D).
    fn potential(&self, c: usize, x: [f64; 3], dim: usize) -> f64 {
        let k2: f64 = self.k.iter().map(|&k| (k * k) as f64).sum();
        let knorm = k2.sqrt();
        if dim == 2 {
            if c != 2 {
                return 0.0;
            }
            // psi with (d_y psi, -d_x psi) = xi
            let arg = self.k_dot(x);
            return match self.phase {
                Phase::Cos => -std::f64::consts::SQRT_2 * arg.sin() / (2.0 * PI * knorm),
                Phase::Sin => std::f64::consts::SQRT_2 * arg.cos() / (2.0 * PI * knorm),
            };
        }
        // 3D: A = amp(2 pi k.x) (sigma x k) sqrt(2) / (2 pi |k|^2),
        // with amp = sin for cos-modes and -cos for sin-modes
        let sxk = [
            self.pol[1] * self.k[2] as f64 - self.pol[2] * self.k[1] as f64,
            self.pol[2] * self.k[0] as f64 - self.pol[0] * self.k[2] as f64,
            self.pol[0] * self.k[1] as f64 - self.pol[1] * self.k[0] as f64,
        ];
        let arg = self.k_dot(x);
        let amp = match self.phase {
            Phase::Cos => arg.sin(),
            Phase::Sin => -arg.cos(),
        };
        std::f64::consts::SQRT_2 * amp * sxk[c] / (2.0 * PI * k2)
    }
}

/// Basis request: periodic Fourier modes, lowest eigenvalues first.
#[derive(Clone, Copy, Debug)]
pub struct BasisSpec {
    pub dim: usize,
    pub modes: usize,
}

#[derive(Clone, Debug)]
pub struct Basis {
    pub dim: usize,
    pub modes: Vec<Mode>,
}

/// Deterministic enumeration: canonical wavevectors ordered by (|k|^2, lex),
/// then phase, then polarization, truncated to the requested count. Bases of
/// different sizes nest.
pub fn assemble_basis(spec: &BasisSpec) -> Result<Basis> {
    if spec.dim != 2 && spec.dim != 3 {
        return Err(Error::InvalidArgument("basis dim must be 2 or 3".into()));
    }
    if spec.modes == 0 {
        return Err(Error::InvalidArgument("mode count must be >= 1".into()));
    }
    let mut modes = Vec::new();
    let mut kmax = 2i32;
    while modes.len() < spec.modes {
        modes.clear();
        let mut wavevectors = Vec::new();
        let zrange = if spec.dim == 3 { -kmax..=kmax } else { 0..=0 };
        for kz in zrange {
            for ky in -kmax..=kmax {
                for kx in -kmax..=kmax {
                    let k = [kx, ky, kz];
                    if k == [0, 0, 0] {
                        continue;
                    }
                    // canonical half: first nonzero component positive
                    let first = *k.iter().find(|&&c| c != 0).unwrap();
                    if first < 0 {
                        continue;
                    }
                    wavevectors.push(k);
                }
            }
        }
        wavevectors.sort_by_key(|k| {
            (k.iter().map(|&c| c * c).sum::<i32>(), k[2], k[1], k[0])
        });
        for k in wavevectors {
            let lambda = 4.0 * PI * PI * k.iter().map(|&c| (c * c) as f64).sum::<f64>();
            let pols = polarizations(k, spec.dim);
            for phase in [Phase::Cos, Phase::Sin] {
                for pol in &pols {
                    modes.push(Mode { k, pol: *pol, phase, lambda });
                }
            }
        }
        kmax += 1;
    }
    modes.truncate(spec.modes);
    Ok(Basis { dim: spec.dim, modes })
}

fn polarizations(k: [i32; 3], dim: usize) -> Vec<[f64; 3]> {
    let kf = [k[0] as f64, k[1] as f64, k[2] as f64];
    let norm = (kf[0] * kf[0] + kf[1] * kf[1] + kf[2] * kf[2]).sqrt();
    let khat = [kf[0] / norm, kf[1] / norm, kf[2] / norm];
    if dim == 2 {
        return vec![[-khat[1], khat[0], 0.0]];
    }
    // pick the axis least aligned with k, build an orthonormal pair
    let mut axis = 0;
    for a in 1..3 {
        if khat[a].abs() < khat[axis].abs() {
            axis = a;
        }
    }
    let mut e = [0.0; 3];
    e[axis] = 1.0;
    let cross = |a: [f64; 3], b: [f64; 3]| {
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    };
    let mut p1 = cross(khat, e);
    let n1 = (p1[0] * p1[0] + p1[1] * p1[1] + p1[2] * p1[2]).sqrt();
    for c in p1.iter_mut() {
        *c /= n1;
    }
    let p2 = cross(khat, p1);
    vec![p1, p2]
}

/// Modal coefficients plus the viscous dissipation integral carried along.
#[derive(Clone, Debug, PartialEq)]
pub struct GalerkinState {
    pub g: Vec<f64>,
    /// running int nu sum_i lambda_i g_i^2 dt, integrated inside RK4
    pub dissipation: f64,
    pub time: f64,
}

impl GalerkinState {
    pub fn new(g: Vec<f64>) -> Self {
        Self { g, dissipation: 0.0, time: 0.0 }
    }

    pub fn energy(&self) -> f64 {
        self.g.iter().map(|v| v * v).sum()
    }
}

/// The convection tensor A^i_jk, dense storage [i][j][k] flattened.
#[derive(Clone, Debug)]
pub struct ConvectionTensor {
    pub m: usize,
    pub a: Vec<f64>,
}

impl ConvectionTensor {
    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.a[(i * self.m + j) * self.m + k]
    }
}

/// Exact quadrature of A^i_jk = -int (xi_j . grad) xi_k . xi_i over the unit
/// torus: a uniform grid with more than three times the highest wavenumber
/// integrates the trigonometric products without aliasing.
pub fn assemble_convection_tensor(basis: &Basis) -> ConvectionTensor {
    let m = basis.modes.len();
    let kmax = basis
        .modes
        .iter()
        .flat_map(|md| md.k.iter().map(|&c| c.abs()))
        .max()
        .unwrap_or(1);
    let n = (3 * kmax as usize + 2).max(8);
    let dim = basis.dim;
    let npts = if dim == 2 { n * n } else { n * n * n };
    let w = 1.0 / npts as f64;

    // cache mode values and gradients on the quadrature grid
    let mut points = Vec::with_capacity(npts);
    let h = 1.0 / n as f64;
    if dim == 2 {
        for j in 0..n {
            for i in 0..n {
                points.push([i as f64 * h, j as f64 * h, 0.0]);
            }
        }
    } else {
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    points.push([i as f64 * h, j as f64 * h, k as f64 * h]);
                }
            }
        }
    }
    let vals: Vec<Vec<[f64; 3]>> =
        basis.modes.iter().map(|md| points.iter().map(|&x| md.eval(x)).collect()).collect();
    let grads: Vec<Vec<[[f64; 3]; 3]>> =
        basis.modes.iter().map(|md| points.iter().map(|&x| md.grad(x)).collect()).collect();

    let mut a = vec![0.0; m * m * m];
    for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                let mut acc = 0.0;
                for p in 0..npts {
                    let xj = &vals[j][p];
                    let gk = &grads[k][p];
                    let xi = &vals[i][p];
                    for comp in 0..3 {
                        let conv =
                            xj[0] * gk[comp][0] + xj[1] * gk[comp][1] + xj[2] * gk[comp][2];
                        acc += conv * xi[comp];
                    }
                }
                a[(i * m + j) * m + k] = -acc * w;
            }
        }
    }
    ConvectionTensor { m, a }
}

/// Worst violation of the skew-symmetry A^i_jk = -A^k_ji.
pub fn skew_symmetry_defect(conv: &ConvectionTensor) -> f64 {
    let m = conv.m;
    let mut worst = 0.0f64;
    for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                worst = worst.max((conv.at(i, j, k) + conv.at(k, j, i)).abs());
            }
        }
    }
    worst
}

/// Grid quadrature of D_i = int (grad^T M grad M - F F^T) : grad xi_i.
pub fn galerkin_forcing(basis: &Basis, state: &FieldState) -> Result<Vec<f64>> {
    let grid = &state.grid;
    if grid.dim() != basis.dim {
        return Err(Error::Shape("basis and grid dimensions differ".into()));
    }
    let dim = grid.dim();
    let vol = grid.cell_volume();
    let t = ops::magnetic_stress_tensor(grid, &state.m);
    let n = grid.cells();
    let mut d = vec![0.0; basis.modes.len()];
    for (mi, mode) in basis.modes.iter().enumerate() {
        let mut acc = 0.0;
        for kk in 0..n[2] {
            for jj in 0..n[1] {
                for ii in 0..n[0] {
                    let x = grid.center(ii, jj, kk);
                    let gx = mode.grad(x);
                    let (i, j, k) = (ii as isize, jj as isize, kk as isize);
                    for a in 0..dim {
                        for b in 0..dim {
                            let mut s = t.comp(a, b).at(i, j, k);
                            for c in 0..dim {
                                s -= state.f.comp(a, c).at(i, j, k) * state.f.comp(b, c).at(i, j, k);
                            }
                            acc += s * gx[a][b];
                        }
                    }
                }
            }
        }
        d[mi] = acc * vol;
    }
    Ok(d)
}

/// One RK4 step of the modal system with frozen forcing D; the viscous
/// dissipation integral is part of the integrated state.
pub fn integrate_modal(
    state: &GalerkinState,
    basis: &Basis,
    conv: &ConvectionTensor,
    nu: f64,
    d: &[f64],
    dt: f64,
) -> GalerkinState {
    let m = state.g.len();
    let rhs = |g: &[f64], out: &mut Vec<f64>| {
        out.clear();
        for i in 0..m {
            let mut acc = -nu * basis.modes[i].lambda * g[i] + d[i];
            for j in 0..m {
                let gj = g[j];
                if gj == 0.0 {
                    continue;
                }
                for k in 0..m {
                    acc += gj * g[k] * conv.at(i, j, k);
                }
            }
            out.push(acc);
        }
        // dissipation rate
        let w: f64 = (0..m).map(|i| nu * basis.modes[i].lambda * g[i] * g[i]).sum();
        out.push(w);
    };

    let mut y0: Vec<f64> = state.g.clone();
    y0.push(state.dissipation);
    let stage = |y: &[f64], k: &[f64], c: f64| -> Vec<f64> {
        y.iter().zip(k).map(|(a, b)| a + c * b).collect()
    };
    let mut k1 = Vec::new();
    let mut k2 = Vec::new();
    let mut k3 = Vec::new();
    let mut k4 = Vec::new();
    rhs(&y0[..m], &mut k1);
    let y1 = stage(&y0, &k1, 0.5 * dt);
    rhs(&y1[..m], &mut k2);
    let y2 = stage(&y0, &k2, 0.5 * dt);
    rhs(&y2[..m], &mut k3);
    let y3 = stage(&y0, &k3, dt);
    rhs(&y3[..m], &mut k4);

    let mut y = Vec::with_capacity(m + 1);
    for i in 0..=m {
        y.push(y0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    }
    GalerkinState { g: y[..m].to_vec(), dissipation: y[m], time: state.time + dt }
}

/// Sample the modal velocity onto the staggered grid through the discrete
/// curl of the modal vector potential: the result is solenoidal to machine
/// precision under the grid divergence. All stored slots (ghosts included)
/// are filled with the same analytic reconstruction.
pub fn sample_velocity(basis: &Basis, g: &[f64], grid: &GridSpec) -> Velocity {
    let dim = grid.dim();
    let pot = |c: usize, x: [f64; 3]| -> f64 {
        let mut s = 0.0;
        for (gi, mode) in g.iter().zip(&basis.modes) {
            if *gi != 0.0 {
                s += gi * mode.potential(c, x, dim);
            }
        }
        s
    };
    let mut v = crate::fields::velocity_from_potential(grid, pot);
    // extend into ghosts and wall slots by the same curl formula
    let h = grid.spacing();
    if dim == 2 {
        for comp in 0..2 {
            let d = grid.face_dims(comp);
            for j in -1..=d[1] as isize {
                for i in -1..=d[0] as isize {
                    let interior = i >= 0 && j >= 0 && (i as usize) < d[0] && (j as usize) < d[1];
                    if interior {
                        continue;
                    }
                    let node = |ii: isize, jj: isize| {
                        pot(2, [ii as f64 * h[0], jj as f64 * h[1], 0.0])
                    };
                    let val = if comp == 0 {
                        (node(i, j + 1) - node(i, j)) / h[1]
                    } else {
                        -(node(i + 1, j) - node(i, j)) / h[0]
                    };
                    v.comps[comp].set(i, j, 0, val);
                }
            }
        }
    } else {
        for a in 0..3 {
            let b = (a + 1) % 3;
            let c = (a + 2) % 3;
            let d = grid.face_dims(a);
            for k in -1..=d[2] as isize {
                for j in -1..=d[1] as isize {
                    for i in -1..=d[0] as isize {
                        let interior = i >= 0
                            && j >= 0
                            && k >= 0
                            && (i as usize) < d[0]
                            && (j as usize) < d[1]
                            && (k as usize) < d[2];
                        if interior {
                            continue;
                        }
                        let edge = |cc: usize, idx: [isize; 3]| {
                            let mut p = [
                                idx[0] as f64 * h[0],
                                idx[1] as f64 * h[1],
                                idx[2] as f64 * h[2],
                            ];
                            p[cc] += 0.5 * h[cc];
                            pot(cc, p)
                        };
                        let idx = [i, j, k];
                        let mut up_b = idx;
                        up_b[b] += 1;
                        let mut up_c = idx;
                        up_c[c] += 1;
                        let val = (edge(c, up_b) - edge(c, idx)) / h[b]
                            - (edge(b, up_c) - edge(b, idx)) / h[c];
                        v.comps[a].set(i, j, k, val);
                    }
                }
            }
        }
    }
    v
}

/// Analytic divergence of the reconstruction at a point: proportional to
/// k . sigma per mode, zero up to floating-point error.
pub fn analytic_divergence_at(basis: &Basis, g: &[f64], x: [f64; 3]) -> f64 {
    let mut s = 0.0;
    for (gi, mode) in g.iter().zip(&basis.modes) {
        let grad = mode.grad(x);
        s += gi * (grad[0][0] + grad[1][1] + grad[2][2]);
    }
    s
}

/// One sampled row of the coupled spectral run.
#[derive(Clone, Debug)]
pub struct GalerkinSample {
    pub t: f64,
    pub modal_energy: f64,
    /// accumulated 2 int (nu sum lambda g^2 + kappa |grad F|^2 + |lap M - gl|^2)
    pub dissipation: f64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug)]
pub struct GalerkinTrajectory {
    pub samples: Vec<GalerkinSample>,
    /// modal coefficients at the sample times (for mode-refinement studies)
    pub coefficients: Vec<(f64, Vec<f64>)>,
    pub final_modal: GalerkinState,
    pub rhs: f64,
    pub max_violation: f64,
}

#[derive(Clone, Debug)]
pub struct GalerkinConfig {
    pub modes: usize,
    pub cadence: usize,
    /// initial coefficients; padded with zeros or truncated to `modes`
    pub g0: Vec<f64>,
}

impl GalerkinConfig {
    pub fn preset(modes: usize) -> Self {
        // two lowest modes active
        let mut g0 = vec![0.0; modes];
        if !g0.is_empty() {
            g0[0] = 1.0;
        }
        if g0.len() > 1 {
            g0[1] = 0.5;
        }
        Self { modes, cadence: 5, g0 }
    }

    /// Initial coefficients as the projection of one fixed smooth velocity:
    /// a steeply decaying spectrum with deterministic alternating signs.
    /// Because the bases nest, the projection is plain truncation, and runs
    /// with different mode counts share their data in the Galerkin sense.
    pub fn projection_preset(modes: usize, amplitude: f64) -> Result<Self> {
        let basis = assemble_basis(&BasisSpec { dim: 2, modes })?;
        let g0 = basis
            .modes
            .iter()
            .enumerate()
            .map(|(i, md)| {
                let k2: f64 = md.k.iter().map(|&c| (c * c) as f64).sum();
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                amplitude * sign * (-0.5 * k2).exp()
            })
            .collect();
        Ok(Self { modes, cadence: 5, g0 })
    }
}

/// Energy quantities of the spectral inequality at one state: quadratic part
/// sum g^2 + |F|^2 + |grad M|^2 + (1/(2 mu^2)) int (|M|^2-1)^2.
fn spectral_quadratic(state: &FieldState, modal: &GalerkinState, mu: f64) -> f64 {
    let g = &state.grid;
    let vol = g.cell_volume();
    let mut penalty = 0.0;
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
            }
        }
    }
    modal.energy()
        + norms::l2_sq_tensor(g, &state.f)
        + norms::grad_energy_magnetization(g, &state.m)
        + penalty / (2.0 * mu * mu)
}

/// Combined grid dissipation density: kappa |grad F|^2 + |lap M - gl(M)|^2.
fn grid_dissipation(state: &FieldState, params: &SimParams) -> f64 {
    let g = &state.grid;
    let vol = g.cell_volume();
    let gl = ops::ginzburg_landau(g, &state.m, params.mu);
    let mut gl_term = 0.0;
    for a in 0..3 {
        let lap = ops::laplacian_cell(g, &state.m.comps[a]);
        lap.for_interior(|i, j, k, lv| {
            let d = lv - gl.comps[a].at(i as isize, j as isize, k as isize);
            gl_term += d * d * vol;
        });
    }
    params.kappa * norms::grad_energy_tensor(g, &state.f, norms::GradBc::DirichletZero) + gl_term
}

/// Run the coupled spectral scheme: per step M -> F on the grid under the
/// reconstructed velocity, then the modal RK4 update with fresh forcing.
pub fn run_coupled(
    cfg: &GalerkinConfig,
    grid: &GridSpec,
    params: &SimParams,
    initial_grid_state: &FieldState,
) -> Result<GalerkinTrajectory> {
    let basis = assemble_basis(&BasisSpec { dim: grid.dim(), modes: cfg.modes })?;
    let conv = assemble_convection_tensor(&basis);
    let mut g0 = cfg.g0.clone();
    g0.resize(cfg.modes, 0.0);
    let mut modal = GalerkinState::new(g0);

    let mut grid_state = initial_grid_state.clone();
    grid_state.apply_boundary_conditions(params.f_bc);
    grid_state.v = sample_velocity(&basis, &modal.g, grid);

    let mut grid_diss = 0.0;
    let rhs = spectral_quadratic(&grid_state, &modal, params.mu);
    let mut samples = vec![GalerkinSample {
        t: 0.0,
        modal_energy: modal.energy(),
        dissipation: 0.0,
        lhs: rhs,
        rhs,
    }];
    let mut coefficients = vec![(0.0, modal.g.clone())];
    let mut max_violation = 0.0f64;

    let n_steps = (params.t_end / params.dt).round() as usize;
    let cadence = cfg.cadence.max(1);
    for step in 1..=n_steps {
        // grid fields first, advected by the current reconstruction
        let (m_new, _) = solver::step_magnetization(&grid_state, params, None)?;
        grid_state.m = m_new;
        for a in 0..3 {
            grid_state.m.comps[a].fill_ghosts(grid.dim(), GhostRule::Neumann);
        }
        let (f_new, _) = solver::step_deformation(&grid_state, params, None)?;
        grid_state.f = f_new;
        for ic in 0..grid.dim() {
            for jc in 0..grid.dim() {
                let wall = params.f_bc.wall_value(ic, jc);
                let rule = if wall == 0.0 {
                    GhostRule::DirichletZero
                } else {
                    GhostRule::DirichletConst(wall)
                };
                grid_state.f.comp_mut(ic, jc).fill_ghosts(grid.dim(), rule);
            }
        }
        // modal update with forcing from the fresh fields
        let d = galerkin_forcing(&basis, &grid_state)?;
        modal = integrate_modal(&modal, &basis, &conv, params.nu, &d, params.dt);
        grid_state.v = sample_velocity(&basis, &modal.g, grid);
        grid_state.time = modal.time;

        grid_diss += 2.0 * params.dt * grid_dissipation(&grid_state, params);
        let dissipation = 2.0 * modal.dissipation + grid_diss;
        let quad = spectral_quadratic(&grid_state, &modal, params.mu);
        let lhs = quad + dissipation;
        max_violation = max_violation.max(lhs - rhs);
        if step % cadence == 0 || step == n_steps {
            samples.push(GalerkinSample {
                t: modal.time,
                modal_energy: modal.energy(),
                dissipation,
                lhs,
                rhs,
            });
            coefficients.push((modal.time, modal.g.clone()));
        }
    }
    Ok(GalerkinTrajectory { samples, coefficients, final_modal: modal, rhs, max_violation })
}

/// Max over samples of the spectral energy-inequality violation.
pub fn galerkin_energy_check(traj: &GalerkinTrajectory) -> f64 {
    traj.max_violation.max(0.0)
}

/// L2(0,T; L2) distance between the velocities of two nested-mode runs,
/// computed modally from the coefficient series (trapezoid in time).
pub fn velocity_l2_distance(small: &GalerkinTrajectory, large: &GalerkinTrajectory) -> Result<f64> {
    if small.coefficients.len() != large.coefficients.len() {
        return Err(Error::Shape("trajectories sampled at different cadences".into()));
    }
    let dist2 = |a: &[f64], b: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..b.len() {
            let ai = if i < a.len() { a[i] } else { 0.0 };
            let d = ai - b[i];
            s += d * d;
        }
        s
    };
    let mut acc = 0.0;
    for w in 0..small.coefficients.len() - 1 {
        let (t0, ref a0) = small.coefficients[w];
        let (t1, ref a1) = small.coefficients[w + 1];
        let b0 = &large.coefficients[w].1;
        let b1 = &large.coefficients[w + 1].1;
        acc += 0.5 * (dist2(a0, b0) + dist2(a1, b1)) * (t1 - t0);
    }
    Ok(acc.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{FieldState, Magnetization};
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn basis_modes_are_orthonormal_and_solenoidal() {
        for dim in [2usize, 3] {
            let basis = assemble_basis(&BasisSpec { dim, modes: 10 }).unwrap();
            assert_eq!(basis.modes.len(), 10);
            // lambda nondecreasing
            for w in basis.modes.windows(2) {
                assert!(w[0].lambda <= w[1].lambda + 1e-12);
            }
            // k . sigma = 0
            for m in &basis.modes {
                let dot = m.k[0] as f64 * m.pol[0] + m.k[1] as f64 * m.pol[1]
                    + m.k[2] as f64 * m.pol[2];
                assert!(dot.abs() < 1e-13);
            }
            // quadrature orthonormality on a fine periodic lattice
            let n = 24;
            let pts: Vec<[f64; 3]> = if dim == 2 {
                (0..n * n)
                    .map(|p| [(p % n) as f64 / n as f64, (p / n) as f64 / n as f64, 0.0])
                    .collect()
            } else {
                (0..n * n * n)
                    .map(|p| {
                        [
                            (p % n) as f64 / n as f64,
                            ((p / n) % n) as f64 / n as f64,
                            (p / (n * n)) as f64 / n as f64,
                        ]
                    })
                    .collect()
            };
            let w = 1.0 / pts.len() as f64;
            for (i, mi) in basis.modes.iter().enumerate() {
                for (j, mj) in basis.modes.iter().enumerate() {
                    let mut dot = 0.0;
                    for &x in &pts {
                        let a = mi.eval(x);
                        let b = mj.eval(x);
                        dot += (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]) * w;
                    }
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!(
                        (dot - expect).abs() < 1e-12,
                        "dim {dim} <xi_{i}, xi_{j}> = {dot}"
                    );
                }
            }
        }
    }

    #[test]
    fn mode_potential_curl_matches_mode() {
        // finite-difference curl of the potential reproduces the mode field
        for dim in [2usize, 3] {
            let basis = assemble_basis(&BasisSpec { dim, modes: 8 }).unwrap();
            let h = 1e-6;
            let x = [0.37, 0.81, if dim == 3 { 0.24 } else { 0.0 }];
            for md in &basis.modes {
                let curl = |c: usize, x: [f64; 3]| md.potential(c, x, dim);
                let mut v = [0.0; 3];
                for a in 0..3 {
                    let b = (a + 1) % 3;
                    let c = (a + 2) % 3;
                    let mut xb1 = x;
                    xb1[b] += h;
                    let mut xb0 = x;
                    xb0[b] -= h;
                    let mut xc1 = x;
                    xc1[c] += h;
                    let mut xc0 = x;
                    xc0[c] -= h;
                    v[a] = (curl(c, xb1) - curl(c, xb0)) / (2.0 * h)
                        - (curl(b, xc1) - curl(b, xc0)) / (2.0 * h);
                }
                let expect = md.eval(x);
                for a in 0..3 {
                    assert!(
                        (v[a] - expect[a]).abs() < 1e-6,
                        "dim {dim} k {:?} comp {a}: {} vs {}",
                        md.k,
                        v[a],
                        expect[a]
                    );
                }
            }
        }
    }

    #[test]
    fn single_mode_has_zero_self_advection() {
        let basis = assemble_basis(&BasisSpec { dim: 2, modes: 1 }).unwrap();
        let conv = assemble_convection_tensor(&basis);
        assert!(conv.at(0, 0, 0).abs() < 1e-14);
    }

    #[test]
    fn convection_tensor_is_skew_and_energy_neutral() {
        let basis = assemble_basis(&BasisSpec { dim: 2, modes: 12 }).unwrap();
        let conv = assemble_convection_tensor(&basis);
        assert!(skew_symmetry_defect(&conv) < 1e-13);
        // random coefficients: the trilinear contraction vanishes
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let g: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut s = 0.0;
            for i in 0..12 {
                for j in 0..12 {
                    for k in 0..12 {
                        s += g[i] * g[j] * g[k] * conv.at(i, j, k);
                    }
                }
            }
            assert!(s.abs() < 1e-12, "trilinear contraction {s}");
        }
    }

    #[test]
    fn orthogonal_wavevector_modes_do_not_interact() {
        // restrict to the modes with wavevectors (1,0) and (0,1): every
        // combination k_i +- k_j +- k_k misses the lattice, so A vanishes
        let basis = assemble_basis(&BasisSpec { dim: 2, modes: 8 }).unwrap();
        let pick: Vec<usize> = basis
            .modes
            .iter()
            .enumerate()
            .filter(|(_, m)| (m.k == [1, 0, 0]) || (m.k == [0, 1, 0]))
            .map(|(i, _)| i)
            .collect();
        assert!(pick.len() >= 4);
        let conv = assemble_convection_tensor(&basis);
        for &i in &pick {
            for &j in &pick {
                for &k in &pick {
                    assert!(conv.at(i, j, k).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn modal_decay_matches_exponential() {
        let basis = assemble_basis(&BasisSpec { dim: 2, modes: 4 }).unwrap();
        let conv = ConvectionTensor { m: 4, a: vec![0.0; 64] };
        let nu = 0.05;
        let d = vec![0.0; 4];
        let mut st = GalerkinState::new(vec![1.0, 0.5, -0.25, 0.1]);
        let dt = 1e-3;
        for _ in 0..200 {
            st = integrate_modal(&st, &basis, &conv, nu, &d, dt);
        }
        let t = 0.2;
        for i in 0..4 {
            let expect = [1.0, 0.5, -0.25, 0.1][i] * (-nu * basis.modes[i].lambda * t).exp();
            assert!(
                (st.g[i] - expect).abs() < 1e-10 * expect.abs().max(1e-3),
                "mode {i}: {} vs {expect}",
                st.g[i]
            );
        }
    }

    #[test]
    fn modal_energy_identity_with_convection() {
        // with D = 0 the skew convection conserves energy: E(t) + diss is
        // constant to O(dt^4) per step
        let basis = assemble_basis(&BasisSpec { dim: 2, modes: 8 }).unwrap();
        let conv = assemble_convection_tensor(&basis);
        let nu = 0.2;
        let d = vec![0.0; 8];
        let mut st = GalerkinState::new(vec![1.0, -0.7, 0.5, 0.3, -0.2, 0.15, 0.1, -0.05]);
        let e0 = st.energy();
        let dt = 1e-3;
        let steps = 500;
        for _ in 0..steps {
            st = integrate_modal(&st, &basis, &conv, nu, &d, dt);
        }
        let drift = (st.energy() + 2.0 * st.dissipation - e0).abs();
        // O(dt^4) per step budget with a generous constant
        let budget = 1e3 * dt.powi(4) * steps as f64;
        assert!(drift < budget, "energy drift {drift:.3e} over budget {budget:.3e}");
        // zero data stays zero
        let z = GalerkinState::new(vec![0.0; 8]);
        let z1 = integrate_modal(&z, &basis, &conv, nu, &d, dt);
        assert_eq!(z1.g, vec![0.0; 8]);
    }

    #[test]
    fn forcing_vanishes_for_trivial_fields() {
        let grid = GridSpec::square(16).unwrap();
        let basis = assemble_basis(&BasisSpec { dim: 2, modes: 6 }).unwrap();
        // F = 0, M constant
        let mut s = FieldState::zeros(&grid);
        s.m = Magnetization::constant(&grid, [0.0, 0.0, 1.0]);
        s.apply_boundary_conditions(crate::fields::DeformationBc::Zero);
        let d = galerkin_forcing(&basis, &s).unwrap();
        assert!(d.iter().all(|&v| v.abs() < 1e-14), "{d:?}");
        // F = I: constant tensor against mean-zero grad(xi)
        for i in 0..2 {
            s.f.comp_mut(i, i).fill_interior(|_, _, _| 1.0);
        }
        s.apply_boundary_conditions(crate::fields::DeformationBc::Identity);
        let d = galerkin_forcing(&basis, &s).unwrap();
        assert!(d.iter().all(|&v| v.abs() < 1e-12), "{d:?}");
    }

    #[test]
    fn sampled_velocity_is_discretely_solenoidal() {
        let grid = GridSpec::square(24).unwrap();
        let basis = assemble_basis(&BasisSpec { dim: 2, modes: 8 }).unwrap();
        let g = vec![0.9, -0.4, 0.3, 0.2, -0.1, 0.05, 0.02, -0.01];
        let v = sample_velocity(&basis, &g, &grid);
        let div = ops::divergence(&grid, &v);
        assert!(div.max_abs_interior() < 1e-12, "{}", div.max_abs_interior());
        // analytic divergence of the expansion vanishes pointwise
        for &x in &[[0.2, 0.3, 0.0], [0.7, 0.9, 0.0]] {
            assert!(analytic_divergence_at(&basis, &g, x).abs() < 1e-13);
        }
        // 3D
        let grid3 = GridSpec::cube(8).unwrap();
        let basis3 = assemble_basis(&BasisSpec { dim: 3, modes: 6 }).unwrap();
        let g3 = vec![0.5, -0.3, 0.2, 0.1, -0.05, 0.02];
        let v3 = sample_velocity(&basis3, &g3, &grid3);
        let div3 = ops::divergence(&grid3, &v3);
        assert!(div3.max_abs_interior() < 1e-12, "{}", div3.max_abs_interior());
    }
}
