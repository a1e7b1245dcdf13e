//! Staggered-grid geometry, discrete field containers, and boundary conditions.
//!
//! The arrangement is the classic MAC layout: velocity components live on the
//! cell faces normal to their axis, everything else (pressure, deformation
//! gradient, magnetization) at cell centers. Every container carries one ghost
//! layer per side. Ghost fills encode the wall conditions: v = 0 and F = F_wall
//! on the boundary (reflection rules), vanishing normal derivative for the
//! pressure and for every magnetization component (mirror rule).
//!
//! 2D runs use the same storage with a single cell in z; operators only ever
//! loop over the first `dim` axes.

use crate::error::{Error, Result};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const MAX_DIM: usize = 3;

/// Axis-aligned box domain split into uniform cells.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    dim: usize,
    extent: [f64; 3],
    cells: [usize; 3],
    spacing: [f64; 3],
}

impl GridSpec {
    pub fn new(dim: usize, cells_in: &[usize], extent_in: &[f64]) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::Config(format!("dim must be 2 or 3, got {dim}")));
        }
        if cells_in.len() < dim || extent_in.len() < dim {
            return Err(Error::Config("cells/extent need one entry per axis".into()));
        }
        let mut cells = [1usize; 3];
        let mut extent = [1.0f64; 3];
        for a in 0..dim {
            cells[a] = cells_in[a];
            extent[a] = extent_in[a];
            if cells[a] < 4 {
                return Err(Error::Config(format!(
                    "cells must be >= 4 per axis, got {} on axis {a}",
                    cells[a]
                )));
            }
            if !(extent[a] > 0.0) || !extent[a].is_finite() {
                return Err(Error::Config(format!("extent must be positive on axis {a}")));
            }
        }
        let mut spacing = [1.0f64; 3];
        for a in 0..dim {
            spacing[a] = extent[a] / cells[a] as f64;
        }
        Ok(Self { dim, extent, cells, spacing })
    }

    pub fn square(n: usize) -> Result<Self> {
        Self::new(2, &[n, n], &[1.0, 1.0])
    }

    pub fn cube(n: usize) -> Result<Self> {
        Self::new(3, &[n, n, n], &[1.0, 1.0, 1.0])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn cells(&self) -> [usize; 3] {
        self.cells
    }

    #[inline]
    pub fn extent(&self) -> [f64; 3] {
        self.extent
    }

    #[inline]
    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    /// Volume of one cell (product of spacings over the active axes).
    #[inline]
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing[a]).product()
    }

    #[inline]
    pub fn min_spacing(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing[a]).fold(f64::INFINITY, f64::min)
    }

    /// Center of cell (i, j, k).
    #[inline]
    pub fn center(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            (i as f64 + 0.5) * self.spacing[0],
            (j as f64 + 0.5) * self.spacing[1],
            (k as f64 + 0.5) * self.spacing[2],
        ]
    }

    /// Position of the face normal to `axis` with face index (i, j, k);
    /// the index along `axis` counts faces (0..=cells), the others cells.
    #[inline]
    pub fn face_pos(&self, axis: usize, i: usize, j: usize, k: usize) -> [f64; 3] {
        let mut p = self.center(i, j, k);
        p[axis] -= 0.5 * self.spacing[axis];
        p
    }

    /// Node (cell corner) position, indices 0..=cells per axis.
    #[inline]
    pub fn node(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            i as f64 * self.spacing[0],
            j as f64 * self.spacing[1],
            k as f64 * self.spacing[2],
        ]
    }

    /// Dimensions of the face grid for velocity component `axis`.
    #[inline]
    pub fn face_dims(&self, axis: usize) -> [usize; 3] {
        let mut d = self.cells;
        d[axis] += 1;
        d
    }
}

/// Ghost fill rule for one field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GhostRule {
    /// ghost = -interior; zero value at the wall midpoint.
    DirichletZero,
    /// ghost = 2c - interior; constant value c at the wall midpoint.
    DirichletConst(f64),
    /// ghost = interior; vanishing normal derivative.
    Neumann,
    /// ghost = 3 u0 - 3 u1 + u2; quadratic extrapolation, for derived
    /// quantities with no natural wall condition.
    Extrapolate,
    /// ghost wraps around; test patches and the spectral module only.
    Periodic,
}

/// Scalar lattice with one ghost layer per side. Used both for cell-centered
/// quantities (dims = cells) and for single velocity components
/// (dims = cells + e_axis).
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    dims: [usize; 3],
    sx: usize,
    sxy: usize,
    data: Vec<f64>,
}

impl Field {
    pub fn zeros(dims: [usize; 3]) -> Self {
        let sx = dims[0] + 2;
        let sxy = sx * (dims[1] + 2);
        Self { dims, sx, sxy, data: vec![0.0; sxy * (dims[2] + 2)] }
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    #[inline]
    fn offset(&self, i: isize, j: isize, k: isize) -> usize {
        debug_assert!(i >= -1 && i <= self.dims[0] as isize);
        debug_assert!(j >= -1 && j <= self.dims[1] as isize);
        debug_assert!(k >= -1 && k <= self.dims[2] as isize);
        ((k + 1) as usize) * self.sxy + ((j + 1) as usize) * self.sx + (i + 1) as usize
    }

    #[inline]
    pub fn at(&self, i: isize, j: isize, k: isize) -> f64 {
        self.data[self.offset(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: isize, j: isize, k: isize, v: f64) {
        let o = self.offset(i, j, k);
        self.data[o] = v;
    }

    #[inline]
    pub fn add(&mut self, i: isize, j: isize, k: isize, v: f64) {
        let o = self.offset(i, j, k);
        self.data[o] += v;
    }

    pub fn fill_interior(&mut self, mut f: impl FnMut(usize, usize, usize) -> f64) {
        for k in 0..self.dims[2] {
            for j in 0..self.dims[1] {
                for i in 0..self.dims[0] {
                    self.set(i as isize, j as isize, k as isize, f(i, j, k));
                }
            }
        }
    }

    pub fn for_interior(&self, mut f: impl FnMut(usize, usize, usize, f64)) {
        for k in 0..self.dims[2] {
            for j in 0..self.dims[1] {
                for i in 0..self.dims[0] {
                    f(i, j, k, self.at(i as isize, j as isize, k as isize));
                }
            }
        }
    }

    pub fn max_abs_interior(&self) -> f64 {
        let mut m: f64 = 0.0;
        self.for_interior(|_, _, _, v| m = m.max(v.abs()));
        m
    }

    pub fn interior_finite(&self) -> bool {
        let mut ok = true;
        self.for_interior(|_, _, _, v| ok &= v.is_finite());
        ok
    }

    pub fn scale_interior(&mut self, s: f64) {
        for k in 0..self.dims[2] as isize {
            for j in 0..self.dims[1] as isize {
                for i in 0..self.dims[0] as isize {
                    let v = self.at(i, j, k) * s;
                    self.set(i, j, k, v);
                }
            }
        }
    }

    /// Fill the ghost layer. Axes >= `dim` always get the mirror rule so that
    /// dormant z-stencils in 2D see no variation.
    pub fn fill_ghosts(&mut self, dim: usize, rule: GhostRule) {
        let [nx, ny, nz] = [self.dims[0] as isize, self.dims[1] as isize, self.dims[2] as isize];
        // Axis 0 over interior j,k; axis 1 over extended i; axis 2 over extended i,j.
        for k in 0..nz {
            for j in 0..ny {
                let (lo, hi) = self.ghost_pair(0, rule, dim, |m| self.at(m, j, k), nx);
                self.set(-1, j, k, lo);
                self.set(nx, j, k, hi);
            }
        }
        for k in 0..nz {
            for i in -1..=nx {
                let (lo, hi) = self.ghost_pair(1, rule, dim, |m| self.at(i, m, k), ny);
                self.set(i, -1, k, lo);
                self.set(i, ny, k, hi);
            }
        }
        for j in -1..=ny {
            for i in -1..=nx {
                let (lo, hi) = self.ghost_pair(2, rule, dim, |m| self.at(i, j, m), nz);
                self.set(i, j, -1, lo);
                self.set(i, j, nz, hi);
            }
        }
    }

    fn ghost_pair(
        &self,
        axis: usize,
        rule: GhostRule,
        dim: usize,
        line: impl Fn(isize) -> f64,
        n: isize,
    ) -> (f64, f64) {
        let rule = if axis >= dim { GhostRule::Neumann } else { rule };
        match rule {
            GhostRule::DirichletZero => (-line(0), -line(n - 1)),
            GhostRule::DirichletConst(c) => (2.0 * c - line(0), 2.0 * c - line(n - 1)),
            GhostRule::Neumann => (line(0), line(n - 1)),
            GhostRule::Extrapolate => {
                if n >= 3 {
                    (
                        3.0 * line(0) - 3.0 * line(1) + line(2),
                        3.0 * line(n - 1) - 3.0 * line(n - 2) + line(n - 3),
                    )
                } else {
                    (line(0), line(n - 1))
                }
            }
            GhostRule::Periodic => (line(n - 1), line(0)),
        }
    }
}

/// Face-centered velocity; `comps[a]` has dims `cells + e_a`.
#[derive(Clone, Debug, PartialEq)]
pub struct Velocity {
    pub comps: Vec<Field>,
}

impl Velocity {
    pub fn zeros(grid: &GridSpec) -> Self {
        let comps = (0..grid.dim()).map(|a| Field::zeros(grid.face_dims(a))).collect();
        Self { comps }
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().map(|c| c.max_abs_interior()).fold(0.0, f64::max)
    }

    /// Zero the wall-normal faces and fill ghosts for the no-slip condition.
    pub fn apply_no_slip(&mut self, grid: &GridSpec) {
        let dim = grid.dim();
        for a in 0..dim {
            let d = self.comps[a].dims();
            let n = d[a] as isize - 1;
            // wall faces carry the boundary value v.n = 0
            for k in 0..d[2] as isize {
                for j in 0..d[1] as isize {
                    for i in 0..d[0] as isize {
                        let own = [i, j, k][a];
                        if own == 0 || own == n {
                            self.comps[a].set(i, j, k, 0.0);
                        }
                    }
                }
            }
            // tangential ghosts reflect (no-slip); own-axis ghosts extrapolate
            self.fill_component_ghosts(grid, a);
        }
    }

    fn fill_component_ghosts(&mut self, grid: &GridSpec, a: usize) {
        let dim = grid.dim();
        let comp = &mut self.comps[a];
        let [nx, ny, nz] = [
            comp.dims()[0] as isize,
            comp.dims()[1] as isize,
            comp.dims()[2] as isize,
        ];
        let lens = [nx, ny, nz];
        for axis in 0..3 {
            let n = lens[axis];
            let each = |comp: &mut Field, idx: &dyn Fn(isize) -> (isize, isize, isize)| {
                let (g_lo, g_hi);
                let v = |m: isize, c: &Field| {
                    let (i, j, k) = idx(m);
                    c.at(i, j, k)
                };
                if axis >= dim {
                    g_lo = v(0, comp);
                    g_hi = v(n - 1, comp);
                } else if axis == a {
                    // linear extrapolation past the wall face
                    g_lo = 2.0 * v(0, comp) - v(1, comp);
                    g_hi = 2.0 * v(n - 1, comp) - v(n - 2, comp);
                } else {
                    // mirror with sign flip: wall average of tangential velocity is 0
                    g_lo = -v(0, comp);
                    g_hi = -v(n - 1, comp);
                }
                let (i, j, k) = idx(-1);
                comp.set(i, j, k, g_lo);
                let (i, j, k) = idx(n);
                comp.set(i, j, k, g_hi);
            };
            match axis {
                0 => {
                    for k in 0..nz {
                        for j in 0..ny {
                            each(comp, &|m| (m, j, k));
                        }
                    }
                }
                1 => {
                    for k in 0..nz {
                        for i in -1..=nx {
                            each(comp, &|m| (i, m, k));
                        }
                    }
                }
                _ => {
                    for j in -1..=ny {
                        for i in -1..=nx {
                            each(comp, &|m| (i, j, m));
                        }
                    }
                }
            }
        }
    }
}

/// Cell-centered rank-2 tensor, row-major components `comps[i*dim + j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorField {
    pub dim: usize,
    pub comps: Vec<Field>,
}

impl TensorField {
    pub fn zeros(grid: &GridSpec) -> Self {
        let dim = grid.dim();
        let comps = (0..dim * dim).map(|_| Field::zeros(grid.cells())).collect();
        Self { dim, comps }
    }

    #[inline]
    pub fn comp(&self, i: usize, j: usize) -> &Field {
        &self.comps[i * self.dim + j]
    }

    #[inline]
    pub fn comp_mut(&mut self, i: usize, j: usize) -> &mut Field {
        &mut self.comps[i * self.dim + j]
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().map(|c| c.max_abs_interior()).fold(0.0, f64::max)
    }
}

/// Cell-centered magnetization; always three components regardless of dim.
#[derive(Clone, Debug, PartialEq)]
pub struct Magnetization {
    pub comps: [Field; 3],
}

impl Magnetization {
    pub fn zeros(grid: &GridSpec) -> Self {
        let c = grid.cells();
        Self { comps: [Field::zeros(c), Field::zeros(c), Field::zeros(c)] }
    }

    pub fn constant(grid: &GridSpec, m0: [f64; 3]) -> Self {
        let mut m = Self::zeros(grid);
        for a in 0..3 {
            m.comps[a].fill_interior(|_, _, _| m0[a]);
        }
        m
    }
}

/// Wall data for the deformation gradient. The transport equation takes
/// homogeneous data by default; the identity variant is available for
/// physically motivated experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeformationBc {
    Zero,
    Identity,
}

impl DeformationBc {
    #[inline]
    pub fn wall_value(&self, i: usize, j: usize) -> f64 {
        match self {
            DeformationBc::Zero => 0.0,
            DeformationBc::Identity => {
                if i == j {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Advection discretization. Centered keeps the discrete trilinear form
/// skew-symmetric, which the energy bookkeeping relies on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum AdvectionScheme {
    #[default]
    Centered,
    Upwind,
}

/// Term switches for isolation experiments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CouplingFlags {
    pub magnetic_stress: bool,
    pub elastic_stress: bool,
    pub advection: bool,
    pub ginzburg_landau: bool,
}

impl Default for CouplingFlags {
    fn default() -> Self {
        Self { magnetic_stress: true, elastic_stress: true, advection: true, ginzburg_landau: true }
    }
}

/// Physical and numerical parameters of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct SimParams {
    /// viscosity
    pub nu: f64,
    /// deformation diffusivity
    pub kappa: f64,
    /// penalty scale of the magnetization length constraint
    pub mu: f64,
    pub dt: f64,
    pub t_end: f64,
    /// constant external field; zero by default
    pub h_ext: [f64; 3],
    pub coupling: CouplingFlags,
    pub scheme: AdvectionScheme,
    pub f_bc: DeformationBc,
    /// advective CFL limit
    pub cfl_limit: f64,
    /// absolute bound on the discrete divergence after projection
    pub poisson_tol: f64,
    /// relative tolerance of the implicit diffusion solves
    pub cg_rel_tol: f64,
    pub max_linear_iters: usize,
}

impl SimParams {
    pub fn new(nu: f64, kappa: f64, mu: f64, dt: f64, t_end: f64) -> Result<Self> {
        let p = Self {
            nu,
            kappa,
            mu,
            dt,
            t_end,
            h_ext: [0.0; 3],
            coupling: CouplingFlags::default(),
            scheme: AdvectionScheme::Centered,
            f_bc: DeformationBc::Zero,
            cfl_limit: 0.5,
            poisson_tol: 1e-10,
            cg_rel_tol: 1e-10,
            max_linear_iters: 200_000,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("nu", self.nu),
            ("kappa", self.kappa),
            ("mu", self.mu),
            ("dt", self.dt),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be strictly positive, got {v}")));
            }
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::Config(format!("t_end must be nonnegative, got {}", self.t_end)));
        }
        if self.h_ext.iter().any(|h| !h.is_finite()) {
            return Err(Error::Config("h_ext must be finite".into()));
        }
        Ok(())
    }

    /// Time-step bound for fully explicit diffusion (audit mode).
    pub fn explicit_diffusion_dt_limit(&self, grid: &GridSpec) -> f64 {
        let h = grid.min_spacing();
        0.25 * h * h / self.nu.max(self.kappa).max(1.0)
    }
}

impl Default for SimParams {
    fn default() -> Self {
        Self::new(1.0, 1.0, 1.0, 1e-3, 0.1).unwrap()
    }
}

/// The discrete unknowns at one time level.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldState {
    pub grid: GridSpec,
    pub time: f64,
    /// velocity on faces (length/time)
    pub v: Velocity,
    /// pressure at centers, zero mean
    pub p: Field,
    /// deformation gradient at centers
    pub f: TensorField,
    /// magnetization at centers, three components
    pub m: Magnetization,
}

impl FieldState {
    pub fn zeros(grid: &GridSpec) -> Self {
        Self {
            grid: *grid,
            time: 0.0,
            v: Velocity::zeros(grid),
            p: Field::zeros(grid.cells()),
            f: TensorField::zeros(grid),
            m: Magnetization::zeros(grid),
        }
    }

    /// Fill all ghost layers (and the wall-normal velocity faces) so the
    /// second-order stencils see the wall conditions. Idempotent.
    pub fn apply_boundary_conditions(&mut self, f_bc: DeformationBc) {
        let dim = self.grid.dim();
        self.v.apply_no_slip(&self.grid);
        self.p.fill_ghosts(dim, GhostRule::Neumann);
        for i in 0..dim {
            for j in 0..dim {
                let c = f_bc.wall_value(i, j);
                let rule = if c == 0.0 { GhostRule::DirichletZero } else { GhostRule::DirichletConst(c) };
                self.f.comp_mut(i, j).fill_ghosts(dim, rule);
            }
        }
        for a in 0..3 {
            self.m.comps[a].fill_ghosts(dim, GhostRule::Neumann);
        }
    }

    pub fn assert_finite(&self) -> Result<()> {
        for (name, ok) in [
            ("velocity", self.v.comps.iter().all(|c| c.interior_finite())),
            ("pressure", self.p.interior_finite()),
            ("deformation gradient", self.f.comps.iter().all(|c| c.interior_finite())),
            ("magnetization", self.m.comps.iter().all(|c| c.interior_finite())),
        ] {
            if !ok {
                return Err(Error::NonFinite(name));
            }
        }
        Ok(())
    }
}

/// Named initial-condition presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IcPreset {
    Rest,
    Vortex,
    RandomSmooth,
    ConstantM,
}

impl IcPreset {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "rest" => Ok(Self::Rest),
            "vortex" => Ok(Self::Vortex),
            "random-smooth" => Ok(Self::RandomSmooth),
            "constant-M" | "constant-m" => Ok(Self::ConstantM),
            other => Err(Error::Config(format!("unknown initial-condition preset '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Rest => "rest",
            Self::Vortex => "vortex",
            Self::RandomSmooth => "random-smooth",
            Self::ConstantM => "constant-M",
        }
    }
}

/// Initial-condition request; part of the run configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct IcSpec {
    pub preset: IcPreset,
    pub amplitude: f64,
    pub seed: u64,
    pub m0: [f64; 3],
    /// constant background velocity; must be zero on the walled box
    pub v_uniform: [f64; 3],
}

impl IcSpec {
    pub fn preset(preset: IcPreset) -> Self {
        Self { preset, amplitude: 1.0, seed: 0x5eed_cafe, m0: [0.0, 0.0, 1.0], v_uniform: [0.0; 3] }
    }

    pub fn named(name: &str) -> Result<Self> {
        Ok(Self::preset(IcPreset::parse(name)?))
    }

    pub fn with_amplitude(mut self, a: f64) -> Self {
        self.amplitude = a;
        self
    }

    pub fn with_seed(mut self, s: u64) -> Self {
        self.seed = s;
        self
    }
}

/// Sample a velocity as the discrete curl of an analytic vector potential.
/// The resulting face field is solenoidal to machine precision under the MAC
/// divergence, so no projection is needed at start-up.
///
/// `pot(c, x)` evaluates component `c` of the potential at position `x`.
/// In 2D only the z-component (the stream function) is used.
pub fn velocity_from_potential(grid: &GridSpec, pot: impl Fn(usize, [f64; 3]) -> f64) -> Velocity {
    let dim = grid.dim();
    let h = grid.spacing();
    let mut v = Velocity::zeros(grid);
    if dim == 2 {
        // u = d(psi)/dy, v = -d(psi)/dx with psi sampled at nodes
        let d0 = grid.face_dims(0);
        for j in 0..d0[1] {
            for i in 0..d0[0] {
                let a = pot(2, grid.node(i, j + 1, 0));
                let b = pot(2, grid.node(i, j, 0));
                v.comps[0].set(i as isize, j as isize, 0, (a - b) / h[1]);
            }
        }
        let d1 = grid.face_dims(1);
        for j in 0..d1[1] {
            for i in 0..d1[0] {
                let a = pot(2, grid.node(i + 1, j, 0));
                let b = pot(2, grid.node(i, j, 0));
                v.comps[1].set(i as isize, j as isize, 0, -(a - b) / h[0]);
            }
        }
        return v;
    }
    // 3D: v_a = sum_{b,c} eps_{abc} d_b A_c, with A_c sampled on edges along c.
    let edge_pos = |c: usize, i: usize, j: usize, k: usize| -> [f64; 3] {
        let mut p = grid.node(i, j, k);
        p[c] += 0.5 * h[c];
        p
    };
    for a in 0..3 {
        let b = (a + 1) % 3;
        let c = (a + 2) % 3;
        let d = grid.face_dims(a);
        for k in 0..d[2] {
            for j in 0..d[1] {
                for i in 0..d[0] {
                    let idx = [i, j, k];
                    let mut up_b = idx;
                    up_b[b] += 1;
                    let mut up_c = idx;
                    up_c[c] += 1;
                    // d_b A_c - d_c A_b around the face
                    let dc1 = pot(c, edge_pos(c, up_b[0], up_b[1], up_b[2]));
                    let dc0 = pot(c, edge_pos(c, idx[0], idx[1], idx[2]));
                    let db1 = pot(b, edge_pos(b, up_c[0], up_c[1], up_c[2]));
                    let db0 = pot(b, edge_pos(b, idx[0], idx[1], idx[2]));
                    let val = (dc1 - dc0) / h[b] - (db1 - db0) / h[c];
                    v.comps[a].set(i as isize, j as isize, k as isize, val);
                }
            }
        }
    }
    v
}

fn vortex_potential(dim: usize, amplitude: f64) -> impl Fn(usize, [f64; 3]) -> f64 {
    use std::f64::consts::PI;
    move |c, x| {
        if c != 2 {
            return 0.0;
        }
        let base = amplitude / PI * (PI * x[0]).sin() * (PI * x[1]).sin();
        if dim == 3 {
            base * (PI * x[2]).cos()
        } else {
            base
        }
    }
}

fn random_potential(
    dim: usize,
    amplitude: f64,
    seed: u64,
) -> impl Fn(usize, [f64; 3]) -> f64 {
    use std::f64::consts::PI;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // low modes only; 1/(m^2+n^2) keeps the spectrum smooth
    let mut coef = Vec::new();
    for c in 0..3 {
        for m in 1..=3usize {
            for n in 1..=3usize {
                let w: f64 = rng.gen_range(-1.0..1.0);
                coef.push((c, m, n, w / (m * m + n * n) as f64));
            }
        }
    }
    move |c, x| {
        if dim == 2 && c != 2 {
            return 0.0;
        }
        let (a, b) = ((c + 1) % 3, (c + 2) % 3);
        let mut s = 0.0;
        for &(cc, m, n, w) in &coef {
            if cc != c {
                continue;
            }
            // vanishes on the walls normal to the other two axes
            let mut term = w * (m as f64 * PI * x[a]).sin() * (n as f64 * PI * x[b]).sin();
            if dim == 3 {
                term *= (PI * x[c]).cos();
            }
            s += term;
        }
        amplitude * s
    }
}

/// Build the discrete state at time zero from a preset.
pub fn make_state(grid: &GridSpec, ic: &IcSpec) -> Result<FieldState> {
    if ic.v_uniform.iter().any(|&c| c != 0.0) {
        return Err(Error::Config(
            "uniform background velocity is not divergence-free on the walled box (v.n = 0 fails)"
                .into(),
        ));
    }
    if !ic.amplitude.is_finite() || ic.m0.iter().any(|c| !c.is_finite()) {
        return Err(Error::Config("initial-condition parameters must be finite".into()));
    }
    let dim = grid.dim();
    let mut state = FieldState::zeros(grid);
    for a in 0..3 {
        state.m.comps[a].fill_interior(|_, _, _| ic.m0[a]);
    }
    match ic.preset {
        IcPreset::Rest | IcPreset::ConstantM => {}
        IcPreset::Vortex => {
            state.v = velocity_from_potential(grid, vortex_potential(dim, ic.amplitude));
        }
        IcPreset::RandomSmooth => {
            use std::f64::consts::PI;
            state.v = velocity_from_potential(grid, random_potential(dim, ic.amplitude, ic.seed));
            // small smooth perturbations of M (mirror-compatible) and F (wall-zero)
            let mut rng = ChaCha8Rng::seed_from_u64(ic.seed ^ 0x9e3779b97f4a7c15);
            let amp_m = 0.2 * ic.amplitude;
            let amp_f = 0.2 * ic.amplitude;
            for a in 0..3 {
                let (c1, c2): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                let m0a = ic.m0[a];
                state.m.comps[a].fill_interior(|i, j, k| {
                    let x = grid.center(i, j, k);
                    let zf = if dim == 3 { (PI * x[2]).cos() } else { 1.0 };
                    m0a + amp_m
                        * zf
                        * ((PI * x[0]).cos() * (PI * x[1]).cos() * c1
                            + (2.0 * PI * x[0]).cos() * (PI * x[1]).cos() * 0.5 * c2)
                });
            }
            for i in 0..dim {
                for j in 0..dim {
                    let c: f64 = rng.gen_range(-1.0..1.0);
                    state.f.comp_mut(i, j).fill_interior(|ii, jj, kk| {
                        let x = grid.center(ii, jj, kk);
                        let zf = if dim == 3 { (PI * x[2]).sin() } else { 1.0 };
                        amp_f * c * (PI * x[0]).sin() * (PI * x[1]).sin() * zf
                    });
                }
            }
        }
    }
    state.apply_boundary_conditions(DeformationBc::Zero);
    state.assert_finite()?;
    Ok(state)
}

/// Deterministic perturbation patterns for twin experiments. The velocity
/// pattern is a discrete curl, so the perturbed state stays solenoidal.
pub fn perturbation_velocity(grid: &GridSpec, delta: f64, seed: u64) -> Velocity {
    velocity_from_potential(grid, random_potential(grid.dim(), delta, seed))
}

pub fn perturbation_scalar_neumann(grid: &GridSpec, delta: f64, seed: u64) -> Field {
    use std::f64::consts::PI;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c1: f64 = rng.gen_range(-1.0..1.0);
    let c2: f64 = rng.gen_range(-1.0..1.0);
    let dim = grid.dim();
    let mut q = Field::zeros(grid.cells());
    q.fill_interior(|i, j, k| {
        let x = grid.center(i, j, k);
        let zf = if dim == 3 { (PI * x[2]).cos() } else { 1.0 };
        delta * zf * ((PI * x[0]).cos() * (PI * x[1]).cos() * c1 + (2.0 * PI * x[1]).cos() * 0.5 * c2)
    });
    q
}

pub fn perturbation_scalar_dirichlet(grid: &GridSpec, delta: f64, seed: u64) -> Field {
    use std::f64::consts::PI;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c1: f64 = rng.gen_range(-1.0..1.0);
    let dim = grid.dim();
    let mut q = Field::zeros(grid.cells());
    q.fill_interior(|i, j, k| {
        let x = grid.center(i, j, k);
        let zf = if dim == 3 { (PI * x[2]).sin() } else { 1.0 };
        delta * c1 * (PI * x[0]).sin() * (PI * x[1]).sin() * zf
    });
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops;

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(4, &[8, 8], &[1.0, 1.0]).is_err());
        assert!(GridSpec::new(2, &[2, 8], &[1.0, 1.0]).is_err());
        assert!(GridSpec::new(2, &[8, 8], &[0.0, 1.0]).is_err());
        let g = GridSpec::square(8).unwrap();
        assert_eq!(g.cells(), [8, 8, 1]);
        assert!((g.cell_volume() - 1.0 / 64.0).abs() < 1e-15);
    }

    #[test]
    fn rest_preset_is_zero_with_unit_m() {
        let g = GridSpec::square(64).unwrap();
        let s = make_state(&g, &IcSpec::named("rest").unwrap()).unwrap();
        assert_eq!(s.v.max_abs(), 0.0);
        assert_eq!(s.f.max_abs(), 0.0);
        assert_eq!(s.p.max_abs_interior(), 0.0);
        s.m.comps[2].for_interior(|_, _, _, v| assert_eq!(v, 1.0));
        s.m.comps[0].for_interior(|_, _, _, v| assert_eq!(v, 0.0));
    }

    #[test]
    fn vortex_preset_is_discretely_divergence_free() {
        let g = GridSpec::square(64).unwrap();
        let s = make_state(&g, &IcSpec::named("vortex").unwrap()).unwrap();
        let div = ops::divergence(&g, &s.v);
        assert!(div.max_abs_interior() <= 1e-12, "div = {}", div.max_abs_interior());
        // and in 3D
        let g3 = GridSpec::cube(8).unwrap();
        let s3 = make_state(&g3, &IcSpec::named("vortex").unwrap()).unwrap();
        let div3 = ops::divergence(&g3, &s3.v);
        assert!(div3.max_abs_interior() <= 1e-12);
    }

    #[test]
    fn random_smooth_preset_is_divergence_free_and_finite() {
        for dim in [2usize, 3] {
            let g = if dim == 2 { GridSpec::square(32).unwrap() } else { GridSpec::cube(16).unwrap() };
            let s = make_state(&g, &IcSpec::named("random-smooth").unwrap().with_seed(7)).unwrap();
            s.assert_finite().unwrap();
            let div = ops::divergence(&g, &s.v);
            assert!(div.max_abs_interior() <= 1e-12, "dim {dim}: {}", div.max_abs_interior());
        }
    }

    #[test]
    fn preset_errors() {
        let g = GridSpec::square(8).unwrap();
        assert!(IcSpec::named("warp-core").is_err());
        let mut ic = IcSpec::named("rest").unwrap();
        ic.v_uniform = [1.0, 0.0, 0.0];
        assert!(matches!(make_state(&g, &ic), Err(Error::Config(_))));
    }

    #[test]
    fn rest_preset_3d_shapes() {
        let g = GridSpec::cube(8).unwrap();
        let s = make_state(&g, &IcSpec::named("rest").unwrap()).unwrap();
        assert_eq!(s.v.comps.len(), 3);
        assert_eq!(s.v.comps[0].dims(), [9, 8, 8]);
        assert_eq!(s.f.comps.len(), 9);
        assert_eq!(s.m.comps[0].dims(), [8, 8, 8]);
    }

    #[test]
    fn vortex_symmetry() {
        // u is antisymmetric about y = 1/2, v about x = 1/2
        let g = GridSpec::square(16).unwrap();
        let s = make_state(&g, &IcSpec::named("vortex").unwrap()).unwrap();
        let n = 16;
        for j in 0..n {
            for i in 0..=n {
                let a = s.v.comps[0].at(i as isize, j as isize, 0);
                let b = s.v.comps[0].at(i as isize, (n - 1 - j) as isize, 0);
                assert!((a + b).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn boundary_conditions_constant_m_and_identity_f() {
        let g = GridSpec::square(8).unwrap();
        let mut s = FieldState::zeros(&g);
        for a in 0..3 {
            s.m.comps[a].fill_interior(|_, _, _| [0.0, 0.0, 1.0][a]);
        }
        for i in 0..2 {
            for j in 0..2 {
                s.f.comp_mut(i, j).fill_interior(|_, _, _| if i == j { 1.0 } else { 0.0 });
            }
        }
        s.apply_boundary_conditions(DeformationBc::Zero);
        // Neumann ghost equals adjacent interior value
        assert_eq!(s.m.comps[2].at(-1, 3, 0), s.m.comps[2].at(0, 3, 0));
        // Dirichlet-zero ghost reflects: ghost = -interior
        assert_eq!(s.f.comp(0, 0).at(-1, 3, 0), -1.0);
        // F = I wall data reflects around one
        s.apply_boundary_conditions(DeformationBc::Identity);
        assert_eq!(s.f.comp(0, 0).at(-1, 3, 0), 1.0);
        assert_eq!(s.f.comp(0, 1).at(-1, 3, 0), 0.0);
    }

    #[test]
    fn boundary_conditions_wall_velocity_average() {
        // linear tangential profile: ghost chosen so the wall average is zero
        let g = GridSpec::square(8).unwrap();
        let mut s = FieldState::zeros(&g);
        s.v.comps[0].fill_interior(|_, j, _| 1.0 + j as f64);
        s.apply_boundary_conditions(DeformationBc::Zero);
        let ghost = s.v.comps[0].at(3, -1, 0);
        let first = s.v.comps[0].at(3, 0, 0);
        assert_eq!(ghost + first, 0.0);
        // wall-normal faces forced to zero
        assert_eq!(s.v.comps[0].at(0, 3, 0), 0.0);
        assert_eq!(s.v.comps[0].at(8, 3, 0), 0.0);
    }

    #[test]
    fn boundary_conditions_idempotent() {
        let g = GridSpec::square(16).unwrap();
        let mut s = make_state(&g, &IcSpec::named("random-smooth").unwrap()).unwrap();
        s.apply_boundary_conditions(DeformationBc::Zero);
        let once = s.clone();
        s.apply_boundary_conditions(DeformationBc::Zero);
        assert_eq!(once, s);
    }

    #[test]
    fn third_m_component_is_live_in_2d() {
        let g = GridSpec::square(8).unwrap();
        let mut ic = IcSpec::named("constant-M").unwrap();
        ic.m0 = [0.25, -0.5, 0.75];
        let s = make_state(&g, &ic).unwrap();
        for a in 0..3 {
            s.m.comps[a].for_interior(|_, _, _, v| assert_eq!(v, ic.m0[a]));
        }
    }
}
