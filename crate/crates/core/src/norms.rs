//! Discrete Lebesgue, Sobolev and Bochner norms, plus numerical auditors for
//! the interpolation and regularity inequalities the estimates lean on.
//!
//! Space quadrature is the midpoint rule per cell. The gradient energies are
//! the exact quadratic forms of the Laplacian stencils (interior links at
//! full weight, wall-crossing links at half weight), so summation by parts
//! holds to machine precision and the energy bookkeeping closes.

use crate::error::{Error, Result};
use crate::fields::{Field, GhostRule, GridSpec, Magnetization, TensorField, Velocity};
use crate::ops;

/// Boundary treatment of a gradient energy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradBc {
    /// wall value zero: boundary links use the reflected ghost at half weight
    DirichletZero,
    /// vanishing normal derivative: boundary links contribute nothing
    Neumann,
}

/// Midpoint-rule L^p norm of a cell scalar, interior only.
pub fn lp_norm_cell(grid: &GridSpec, q: &Field, p: f64) -> Result<f64> {
    if p < 1.0 {
        return Err(Error::InvalidArgument(format!("Lp exponent must be >= 1, got {p}")));
    }
    let vol = grid.cell_volume();
    let mut s = 0.0;
    q.for_interior(|_, _, _, v| s += v.abs().powf(p) * vol);
    Ok(s.powf(1.0 / p))
}

pub fn l2_norm_cell(grid: &GridSpec, q: &Field) -> f64 {
    l2_sq_cell(grid, q).sqrt()
}

pub fn l2_sq_cell(grid: &GridSpec, q: &Field) -> f64 {
    let vol = grid.cell_volume();
    let mut s = 0.0;
    q.for_interior(|_, _, _, v| s += v * v * vol);
    s
}

/// Pointwise-magnitude L^p norm of a list of cell scalars (vector/tensor
/// fields at centers).
pub fn lp_norm_magnitude(grid: &GridSpec, comps: &[&Field], p: f64) -> Result<f64> {
    if p < 1.0 {
        return Err(Error::InvalidArgument(format!("Lp exponent must be >= 1, got {p}")));
    }
    let vol = grid.cell_volume();
    let n = grid.cells();
    let mut s = 0.0;
    for k in 0..n[2] as isize {
        for j in 0..n[1] as isize {
            for i in 0..n[0] as isize {
                let mag2: f64 = comps.iter().map(|c| c.at(i, j, k) * c.at(i, j, k)).sum();
                s += mag2.powf(0.5 * p) * vol;
            }
        }
    }
    Ok(s.powf(1.0 / p))
}

/// Squared L^2 norm of a tensor field (Frobenius pointwise).
pub fn l2_sq_tensor(grid: &GridSpec, f: &TensorField) -> f64 {
    f.comps.iter().map(|c| l2_sq_cell(grid, c)).sum()
}

pub fn l2_sq_magnetization(grid: &GridSpec, m: &Magnetization) -> f64 {
    m.comps.iter().map(|c| l2_sq_cell(grid, c)).sum()
}

/// Squared L^2 norm of a face velocity (per-component face quadrature; wall
/// faces carry value zero so their weighting is immaterial).
pub fn l2_sq_velocity(grid: &GridSpec, v: &Velocity) -> f64 {
    let vol = grid.cell_volume();
    let mut s = 0.0;
    for comp in &v.comps {
        comp.for_interior(|_, _, _, val| s += val * val * vol);
    }
    s
}

/// L^p norm of |v| with components averaged to cell centers.
pub fn lp_norm_velocity_centered(grid: &GridSpec, v: &Velocity, p: f64) -> Result<f64> {
    if p < 1.0 {
        return Err(Error::InvalidArgument(format!("Lp exponent must be >= 1, got {p}")));
    }
    let dim = grid.dim();
    let n = grid.cells();
    let vol = grid.cell_volume();
    let mut s = 0.0;
    for k in 0..n[2] as isize {
        for j in 0..n[1] as isize {
            for i in 0..n[0] as isize {
                let mut mag2 = 0.0;
                for a in 0..dim {
                    let mut hi = [i, j, k];
                    hi[a] += 1;
                    let c = 0.5 * (v.comps[a].at(i, j, k) + v.comps[a].at(hi[0], hi[1], hi[2]));
                    mag2 += c * c;
                }
                s += mag2.powf(0.5 * p) * vol;
            }
        }
    }
    Ok(s.powf(1.0 / p))
}

/// Exact quadratic form of the cell Laplacian: sum over links of the squared
/// difference quotient. Boundary links enter at half weight with the ghost
/// value of the given rule (Dirichlet) or drop out (Neumann).
pub fn grad_energy_cell(grid: &GridSpec, q: &Field, bc: GradBc) -> f64 {
    let dim = grid.dim();
    let h = grid.spacing();
    let n = grid.cells();
    let vol = grid.cell_volume();
    let mut s = 0.0;
    for a in 0..dim {
        for k in 0..n[2] as isize {
            for j in 0..n[1] as isize {
                for i in 0..n[0] as isize {
                    let c = [i, j, k];
                    let mut up = c;
                    up[a] += 1;
                    if up[a] < n[a] as isize {
                        let d = (q.at(up[0], up[1], up[2]) - q.at(i, j, k)) / h[a];
                        s += d * d * vol;
                    }
                    if let GradBc::DirichletZero = bc {
                        // half-weight wall links; ghost = -interior
                        if c[a] == 0 {
                            let d = 2.0 * q.at(i, j, k) / h[a];
                            s += 0.5 * d * d * vol;
                        }
                        if c[a] == n[a] as isize - 1 {
                            let d = 2.0 * q.at(i, j, k) / h[a];
                            s += 0.5 * d * d * vol;
                        }
                    }
                }
            }
        }
    }
    s
}

/// Gradient energy of a face velocity, compatible with the face Laplacian:
/// own-axis links run wall face to wall face at full weight, cross-axis wall
/// links use the no-slip ghost at half weight.
pub fn grad_energy_velocity(grid: &GridSpec, v: &Velocity) -> f64 {
    let dim = grid.dim();
    let h = grid.spacing();
    let vol = grid.cell_volume();
    let mut s = 0.0;
    for a in 0..dim {
        let d = v.comps[a].dims();
        let comp = &v.comps[a];
        for axis in 0..dim {
            for k in 0..d[2] as isize {
                for j in 0..d[1] as isize {
                    for i in 0..d[0] as isize {
                        let c = [i, j, k];
                        let mut up = c;
                        up[axis] += 1;
                        if up[axis] < d[axis] as isize {
                            let dq = (comp.at(up[0], up[1], up[2]) - comp.at(i, j, k)) / h[axis];
                            s += dq * dq * vol;
                        }
                        if axis != a {
                            if c[axis] == 0 {
                                let dq = 2.0 * comp.at(i, j, k) / h[axis];
                                s += 0.5 * dq * dq * vol;
                            }
                            if c[axis] == d[axis] as isize - 1 {
                                let dq = 2.0 * comp.at(i, j, k) / h[axis];
                                s += 0.5 * dq * dq * vol;
                            }
                        }
                    }
                }
            }
        }
    }
    s
}

pub fn grad_energy_tensor(grid: &GridSpec, f: &TensorField, bc: GradBc) -> f64 {
    f.comps.iter().map(|c| grad_energy_cell(grid, c, bc)).sum()
}

pub fn grad_energy_magnetization(grid: &GridSpec, m: &Magnetization) -> f64 {
    m.comps.iter().map(|c| grad_energy_cell(grid, c, GradBc::Neumann)).sum()
}

/// Squared L^2 norm of the discrete Laplacian (ghosts must be filled).
pub fn laplacian_l2_sq(grid: &GridSpec, q: &Field) -> f64 {
    let lap = ops::laplacian_cell(grid, q);
    l2_sq_cell(grid, &lap)
}

pub fn laplacian_l2_sq_magnetization(grid: &GridSpec, m: &Magnetization) -> f64 {
    m.comps.iter().map(|c| laplacian_l2_sq(grid, c)).sum()
}

/// H^1 norm sqrt(L2^2 + |grad .|_2^2).
pub fn h1_norm(grid: &GridSpec, q: &Field, bc: GradBc) -> f64 {
    (l2_sq_cell(grid, q) + grad_energy_cell(grid, q, bc)).sqrt()
}

/// Full Hessian seminorm: all second differences including mixed ones,
/// centered; corner ghosts are used, so fill them first.
pub fn hessian_l2(grid: &GridSpec, q: &Field) -> f64 {
    let dim = grid.dim();
    let h = grid.spacing();
    let n = grid.cells();
    let vol = grid.cell_volume();
    let mut s = 0.0;
    for k in 0..n[2] as isize {
        for j in 0..n[1] as isize {
            for i in 0..n[0] as isize {
                let c = [i, j, k];
                for a in 0..dim {
                    for b in 0..dim {
                        let d2 = if a == b {
                            let mut up = c;
                            let mut dn = c;
                            up[a] += 1;
                            dn[a] -= 1;
                            (q.at(up[0], up[1], up[2]) - 2.0 * q.at(i, j, k)
                                + q.at(dn[0], dn[1], dn[2]))
                                / (h[a] * h[a])
                        } else {
                            let mut pp = c;
                            let mut pm = c;
                            let mut mp = c;
                            let mut mm = c;
                            pp[a] += 1;
                            pp[b] += 1;
                            pm[a] += 1;
                            pm[b] -= 1;
                            mp[a] -= 1;
                            mp[b] += 1;
                            mm[a] -= 1;
                            mm[b] -= 1;
                            (q.at(pp[0], pp[1], pp[2]) - q.at(pm[0], pm[1], pm[2])
                                - q.at(mp[0], mp[1], mp[2])
                                + q.at(mm[0], mm[1], mm[2]))
                                / (4.0 * h[a] * h[b])
                        };
                        s += d2 * d2 * vol;
                    }
                }
            }
        }
    }
    s.sqrt()
}

/// Norm kinds named in the run configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NormKind {
    Lp(f64),
    H1,
    H2Seminorm,
}

/// A space norm with the midpoint cell quadrature.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpaceNorm {
    pub kind: NormKind,
}

impl SpaceNorm {
    pub fn eval(&self, grid: &GridSpec, q: &Field, bc: GradBc) -> Result<f64> {
        match self.kind {
            NormKind::Lp(p) => lp_norm_cell(grid, q, p),
            NormKind::H1 => Ok(h1_norm(grid, q, bc)),
            NormKind::H2Seminorm => Ok(hessian_l2(grid, q)),
        }
    }
}

/// Time integration mode of a Bochner norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TimeExponent {
    Power(f64),
    Sup,
}

/// A sampled t -> |u(t)|_{L^s} series.
#[derive(Clone, Debug, PartialEq)]
pub struct BochnerSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub r: TimeExponent,
    /// space exponent, carried for reporting
    pub s: f64,
}

/// Trapezoidal L^r(0,T) norm of the series; sup mode returns the max.
pub fn bochner_norm(series: &BochnerSeries) -> Result<f64> {
    if series.times.len() < 2 {
        return Err(Error::InvalidArgument("Bochner series needs at least two samples".into()));
    }
    if series.times.len() != series.values.len() {
        return Err(Error::Shape("Bochner series times/values length mismatch".into()));
    }
    for w in series.times.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidArgument("Bochner series times must increase".into()));
        }
    }
    if series.values.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidArgument("Bochner series values must be finite and >= 0".into()));
    }
    match series.r {
        TimeExponent::Sup => Ok(series.values.iter().cloned().fold(0.0, f64::max)),
        TimeExponent::Power(r) => {
            if r < 1.0 {
                return Err(Error::InvalidArgument(format!("time exponent must be >= 1, got {r}")));
            }
            let mut acc = 0.0;
            for i in 1..series.times.len() {
                let dt = series.times[i] - series.times[i - 1];
                acc += 0.5 * (series.values[i - 1].powf(r) + series.values[i].powf(r)) * dt;
            }
            Ok(acc.powf(1.0 / r))
        }
    }
}

/// The time exponent paired with a space exponent s > 3 by 2/r + 3/s = 1,
/// i.e. r = 2s/(s-3).
pub fn prodi_serrin_pair(s: f64) -> Result<f64> {
    if !(s > 3.0) {
        return Err(Error::InvalidArgument(format!(
            "Prodi-Serrin space exponent must satisfy s > 3, got {s}"
        )));
    }
    Ok(2.0 * s / (s - 3.0))
}

/// One audited sample: the same analytic field evaluated at two resolutions.
#[derive(Clone, Debug)]
pub struct AuditField {
    pub id: String,
    pub coarse_grid: GridSpec,
    pub coarse: Field,
    pub fine_grid: GridSpec,
    pub fine: Field,
}

#[derive(Clone, Debug)]
pub struct AuditSample {
    pub id: String,
    pub ratio: f64,
    pub ratio_refined: f64,
    pub stable: bool,
    pub degenerate: bool,
}

#[derive(Clone, Debug)]
pub struct AuditReport {
    pub name: String,
    pub samples: Vec<AuditSample>,
    pub max_ratio: f64,
    pub all_stable: bool,
}

impl AuditReport {
    fn build(name: &str, samples: Vec<AuditSample>) -> Self {
        let max_ratio = samples.iter().map(|s| s.ratio.max(s.ratio_refined)).fold(0.0, f64::max);
        let all_stable = samples.iter().all(|s| s.stable);
        Self { name: name.to_string(), samples, max_ratio, all_stable }
    }
}

fn guarded_ratio(num: f64, den: f64) -> (f64, bool) {
    if den == 0.0 {
        (0.0, true)
    } else {
        (num / den, false)
    }
}

fn stability(coarse: f64, fine: f64) -> bool {
    // failure means divergence under refinement
    fine - coarse <= 0.05 * coarse.abs() + 1e-9
}

fn audit_over(
    name: &str,
    fields: &[AuditField],
    ratio: impl Fn(&GridSpec, &Field) -> (f64, bool),
) -> Result<AuditReport> {
    if fields.is_empty() {
        return Err(Error::InvalidArgument("audit needs a nonempty sample set".into()));
    }
    let samples = fields
        .iter()
        .map(|f| {
            let (rc, dc) = ratio(&f.coarse_grid, &f.coarse);
            let (rf, df) = ratio(&f.fine_grid, &f.fine);
            AuditSample {
                id: f.id.clone(),
                ratio: rc,
                ratio_refined: rf,
                stable: stability(rc, rf),
                degenerate: dc || df,
            }
        })
        .collect();
    Ok(AuditReport::build(name, samples))
}

/// |u|_4^2 <= C |u|_2 |grad u|_2 for zero-boundary fields in 2D; reports the
/// empirical constant over the sample set.
pub fn audit_ladyzhenskaya(fields: &[AuditField]) -> Result<AuditReport> {
    for f in fields {
        if f.coarse_grid.dim() != 2 {
            return Err(Error::InvalidArgument("Ladyzhenskaya audit is the d=2 estimate".into()));
        }
    }
    audit_over("ladyzhenskaya", fields, |grid, u| {
        let l4 = lp_norm_cell(grid, u, 4.0).expect("p=4");
        let l2 = l2_norm_cell(grid, u);
        let g = grad_energy_cell(grid, u, GradBc::DirichletZero).sqrt();
        guarded_ratio(l4 * l4, l2 * g)
    })
}

/// 3D interpolation |u|_{2s/(s-2)} <= C |u|_2^{1-3/s} |grad u|_2^{3/s}.
pub fn audit_interp3d(fields: &[AuditField], s: f64) -> Result<AuditReport> {
    if !(s > 3.0) {
        return Err(Error::InvalidArgument(format!("interpolation audit needs s > 3, got {s}")));
    }
    for f in fields {
        if f.coarse_grid.dim() != 3 {
            return Err(Error::InvalidArgument("3D interpolation audit needs d=3 samples".into()));
        }
    }
    let q = 2.0 * s / (s - 2.0);
    let theta = 3.0 / s;
    audit_over("interp3d", fields, move |grid, u| {
        let lq = lp_norm_cell(grid, u, q).expect("q >= 2");
        let l2 = l2_norm_cell(grid, u);
        let g = grad_energy_cell(grid, u, GradBc::DirichletZero).sqrt();
        guarded_ratio(lq, l2.powf(1.0 - theta) * g.powf(theta))
    })
}

/// Elliptic regularity |grad^2 u|_2 <= C (|u|_2 + |lap u|_2) for fields with
/// the mirror (Neumann) ghost fill.
pub fn audit_elliptic_regularity(fields: &[AuditField]) -> Result<AuditReport> {
    audit_over("elliptic_regularity", fields, |grid, u| {
        let mut q = u.clone();
        q.fill_ghosts(grid.dim(), GhostRule::Neumann);
        let hess = hessian_l2(grid, &q);
        let l2 = l2_norm_cell(grid, &q);
        let lap = laplacian_l2_sq(grid, &q).sqrt();
        guarded_ratio(hess, l2 + lap)
    })
}

/// Seeded generators for audit sample sets. Each sample is an analytic field
/// (random low-mode coefficients), so the same function can be evaluated at
/// any resolution.
pub mod samples {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn eval_on(grid: &GridSpec, f: impl Fn([f64; 3]) -> f64) -> Field {
        let mut q = Field::zeros(grid.cells());
        q.fill_interior(|i, j, k| f(grid.center(i, j, k)));
        q
    }

    fn pair(
        id: String,
        dim: usize,
        n: usize,
        f: impl Fn([f64; 3]) -> f64 + Copy,
    ) -> AuditField {
        let (gc, gf) = if dim == 2 {
            (GridSpec::square(n).unwrap(), GridSpec::square(2 * n).unwrap())
        } else {
            (GridSpec::cube(n).unwrap(), GridSpec::cube(2 * n).unwrap())
        };
        AuditField {
            id,
            coarse: eval_on(&gc, f),
            coarse_grid: gc,
            fine: eval_on(&gf, f),
            fine_grid: gf,
        }
    }

    /// Random smooth fields vanishing on the boundary (sine products).
    pub fn zero_boundary(dim: usize, count: usize, n: usize, seed: u64) -> Vec<AuditField> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|idx| {
                let mut coef = Vec::new();
                for m in 1..=4usize {
                    for l in 1..=4usize {
                        let w: f64 = rng.gen_range(-1.0..1.0);
                        coef.push((m, l, w));
                    }
                }
                let zmode = rng.gen_range(1..=2usize);
                let f = move |x: [f64; 3]| {
                    let mut s = 0.0;
                    for &(m, l, w) in &coef {
                        let mut t = w
                            * (m as f64 * PI * x[0]).sin()
                            * (l as f64 * PI * x[1]).sin();
                        if dim == 3 {
                            t *= (zmode as f64 * PI * x[2]).sin();
                        }
                        s += t;
                    }
                    s
                };
                pair(format!("zero_boundary_{idx}"), dim, n, &f)
            })
            .collect()
    }

    /// Random smooth fields with vanishing normal derivative (cosine products).
    pub fn neumann(dim: usize, count: usize, n: usize, seed: u64) -> Vec<AuditField> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|idx| {
                let mut coef = Vec::new();
                for m in 0..=3usize {
                    for l in 0..=3usize {
                        if m == 0 && l == 0 {
                            continue;
                        }
                        let w: f64 = rng.gen_range(-1.0..1.0);
                        coef.push((m, l, w));
                    }
                }
                let zmode = rng.gen_range(0..=2usize);
                let f = move |x: [f64; 3]| {
                    let mut s = 0.0;
                    for &(m, l, w) in &coef {
                        let mut t = w
                            * (m as f64 * PI * x[0]).cos()
                            * (l as f64 * PI * x[1]).cos();
                        if dim == 3 {
                            t *= (zmode as f64 * PI * x[2]).cos();
                        }
                        s += t;
                    }
                    s
                };
                pair(format!("neumann_{idx}"), dim, n, &f)
            })
            .collect()
    }

    /// The analytic reference sample sin(pi x) sin(pi y).
    pub fn sine_product_2d(n: usize) -> AuditField {
        pair("sine_product".into(), 2, n, &|x: [f64; 3]| {
            (PI * x[0]).sin() * (PI * x[1]).sin()
        })
    }

    /// The analytic reference sample cos(pi x), varying along one axis only.
    pub fn cosine_1d_on_2d(n: usize) -> AuditField {
        pair("cosine_1d".into(), 2, n, &|x: [f64; 3]| (PI * x[0]).cos())
    }

    /// sin(pi x) sin(pi y) sin(pi z) on the unit cube.
    pub fn sine_product_3d(n: usize) -> AuditField {
        pair("sine_product_3d".into(), 3, n, &|x: [f64; 3]| {
            (PI * x[0]).sin() * (PI * x[1]).sin() * (PI * x[2]).sin()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn constants_have_their_absolute_value_as_norm() {
        let g = GridSpec::square(16).unwrap();
        let mut q = Field::zeros(g.cells());
        q.fill_interior(|_, _, _| -2.5);
        for p in [1.0, 2.0, 4.0, 7.3] {
            assert_relative_eq!(lp_norm_cell(&g, &q, p).unwrap(), 2.5, max_relative = 1e-12);
        }
    }

    #[test]
    fn sine_product_l2_and_l4() {
        // integral of u^2 = 1/4, of u^4 = 9/64
        let g = GridSpec::square(128).unwrap();
        let mut q = Field::zeros(g.cells());
        q.fill_interior(|i, j, k| {
            let x = g.center(i, j, k);
            (PI * x[0]).sin() * (PI * x[1]).sin()
        });
        assert!((l2_norm_cell(&g, &q) - 0.5).abs() < 1e-3);
        let l4 = lp_norm_cell(&g, &q, 4.0).unwrap();
        assert!((l4 - (9.0f64 / 64.0).powf(0.25)).abs() < 1e-3);
    }

    #[test]
    fn bochner_examples() {
        let c = BochnerSeries {
            times: (0..=10).map(|i| i as f64 / 10.0).collect(),
            values: vec![3.0; 11],
            r: TimeExponent::Power(2.0),
            s: 2.0,
        };
        assert_relative_eq!(bochner_norm(&c).unwrap(), 3.0, max_relative = 1e-12);

        let n = 1000;
        let lin = BochnerSeries {
            times: (0..=n).map(|i| i as f64 / n as f64).collect(),
            values: (0..=n).map(|i| i as f64 / n as f64).collect(),
            r: TimeExponent::Power(2.0),
            s: 2.0,
        };
        assert!((bochner_norm(&lin).unwrap() - 1.0 / 3.0f64.sqrt()).abs() < 1e-4);

        let single = BochnerSeries { times: vec![0.0], values: vec![1.0], r: TimeExponent::Power(2.0), s: 2.0 };
        assert!(bochner_norm(&single).is_err());

        let sup = BochnerSeries {
            times: vec![0.0, 0.5, 1.0],
            values: vec![1.0, 4.0, 2.0],
            r: TimeExponent::Sup,
            s: 2.0,
        };
        assert_eq!(bochner_norm(&sup).unwrap(), 4.0);
    }

    #[test]
    fn prodi_serrin_pairs() {
        assert_relative_eq!(prodi_serrin_pair(4.0).unwrap(), 8.0, max_relative = 1e-14);
        assert_relative_eq!(prodi_serrin_pair(5.0).unwrap(), 5.0, max_relative = 1e-14);
        assert_relative_eq!(prodi_serrin_pair(6.0).unwrap(), 4.0, max_relative = 1e-14);
        for s in [3.5, 4.0, 7.0, 40.0] {
            let r = prodi_serrin_pair(s).unwrap();
            assert!((2.0 / r + 3.0 / s - 1.0).abs() < 1e-14);
        }
        assert!(prodi_serrin_pair(3.0).is_err());
        assert!(prodi_serrin_pair(2.0).is_err());
    }

    #[test]
    fn ladyzhenskaya_analytic_sample() {
        // ratio = (3/8) / ((1/2)(pi/sqrt(2)))
        let f = samples::sine_product_2d(128);
        let report = audit_ladyzhenskaya(&[f]).unwrap();
        let expected = 3.0 * 2.0f64.sqrt() / (4.0 * PI);
        assert!(
            (report.samples[0].ratio - expected).abs() < 2e-3,
            "got {} want {}",
            report.samples[0].ratio,
            expected
        );
        assert!(report.samples[0].stable);
    }

    #[test]
    fn ladyzhenskaya_zero_field_is_guarded() {
        let g = GridSpec::square(16).unwrap();
        let f = AuditField {
            id: "zero".into(),
            coarse_grid: g,
            coarse: Field::zeros(g.cells()),
            fine_grid: g,
            fine: Field::zeros(g.cells()),
        };
        let report = audit_ladyzhenskaya(&[f]).unwrap();
        assert_eq!(report.samples[0].ratio, 0.0);
        assert!(report.samples[0].degenerate);
        assert!(audit_ladyzhenskaya(&[]).is_err());
    }

    #[test]
    fn elliptic_regularity_analytic_sample() {
        let f = samples::cosine_1d_on_2d(128);
        let report = audit_elliptic_regularity(&[f]).unwrap();
        let expected = PI * PI / (1.0 + PI * PI);
        assert!(
            (report.samples[0].ratio - expected).abs() < 1e-2,
            "got {} want {}",
            report.samples[0].ratio,
            expected
        );
    }

    #[test]
    fn interp3d_scale_invariance_and_finiteness() {
        let f = samples::sine_product_3d(16);
        let mut scaled = f.clone();
        scaled.coarse.scale_interior(2.0);
        scaled.fine.scale_interior(2.0);
        let r1 = audit_interp3d(&[f], 4.0).unwrap();
        let r2 = audit_interp3d(&[scaled], 4.0).unwrap();
        assert_relative_eq!(r1.samples[0].ratio, r2.samples[0].ratio, max_relative = 1e-12);
        assert!(r1.samples[0].ratio.is_finite() && r1.samples[0].ratio > 0.0);
        assert!(audit_interp3d(&[samples::sine_product_3d(8)], 3.0).is_err());
    }

    #[test]
    fn audit_ratios_are_scale_invariant() {
        let mut fields = samples::zero_boundary(2, 3, 32, 99);
        let base = audit_ladyzhenskaya(&fields).unwrap();
        for f in fields.iter_mut() {
            f.coarse.scale_interior(37.5);
            f.fine.scale_interior(37.5);
        }
        let scaled = audit_ladyzhenskaya(&fields).unwrap();
        for (a, b) in base.samples.iter().zip(scaled.samples.iter()) {
            assert_relative_eq!(a.ratio, b.ratio, max_relative = 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn lp_norm_is_absolutely_homogeneous(alpha in -10.0f64..10.0, seed in 0u64..1000) {
            let g = GridSpec::square(8).unwrap();
            let mut q = Field::zeros(g.cells());
            let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            q.fill_interior(|_, _, _| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            });
            let mut qs = q.clone();
            qs.scale_interior(alpha);
            for p in [1.0, 2.0, 4.0] {
                let n1 = lp_norm_cell(&g, &q, p).unwrap();
                let n2 = lp_norm_cell(&g, &qs, p).unwrap();
                prop_assert!((n2 - alpha.abs() * n1).abs() <= 1e-12 * (1.0 + n1.abs()));
            }
        }

        #[test]
        fn lp_norms_are_monotone_on_unit_box(seed in 0u64..1000) {
            // midpoint quadrature is a discrete power mean, so p <= q implies
            // |u|_p <= |u|_q exactly on the unit-measure box
            let g = GridSpec::square(8).unwrap();
            let mut q = Field::zeros(g.cells());
            let mut state = seed.wrapping_add(17);
            q.fill_interior(|_, _, _| {
                state = state.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
                ((state >> 11) as f64 / (1u64 << 53) as f64) * 4.0 - 2.0
            });
            let pairs = [(1.0, 2.0), (2.0, 4.0), (4.0, 8.0), (1.5, 3.5)];
            for (p, pq) in pairs {
                let np = lp_norm_cell(&g, &q, p).unwrap();
                let nq = lp_norm_cell(&g, &q, pq).unwrap();
                prop_assert!(np <= nq * (1.0 + 1e-12));
            }
        }
    }
}
