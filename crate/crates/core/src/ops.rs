//! Spatial differential operators and the coupling stress terms, as pure
//! functions on ghost-filled fields.
//!
//! Conventions (second order throughout):
//! - `gradient` of a cell scalar lands on faces, `divergence` of a face
//!   vector lands on cells; their composition is exactly the stencil the
//!   pressure solver applies, so the projection is exact at the discrete
//!   level.
//! - advection uses the flux form `div(v q)` with two-point averages. For a
//!   discretely solenoidal `v` the trilinear form `sum (v.grad q) q` then
//!   telescopes to the wall fluxes, which vanish under no-slip, so the
//!   centered scheme is energy-neutral to machine precision.
//!
//! Callers fill ghost layers before applying an operator; the operators never
//! look at boundary rules themselves. That keeps them usable on periodic test
//! patches and inside linear-solver kernels.

use crate::fields::{AdvectionScheme, Field, GhostRule, GridSpec, Magnetization, TensorField, Velocity};

/// d(q)/dx_a on the faces of axis `a`, all faces including walls.
pub fn gradient(grid: &GridSpec, q: &Field) -> Velocity {
    let mut out = Velocity::zeros(grid);
    gradient_into(grid, q, &mut out);
    out
}

pub fn gradient_into(grid: &GridSpec, q: &Field, out: &mut Velocity) {
    let dim = grid.dim();
    let h = grid.spacing();
    for a in 0..dim {
        let d = grid.face_dims(a);
        let comp = &mut out.comps[a];
        for k in 0..d[2] as isize {
            for j in 0..d[1] as isize {
                for i in 0..d[0] as isize {
                    let mut lo = [i, j, k];
                    lo[a] -= 1;
                    let hi_v = q.at(i, j, k);
                    let lo_v = q.at(lo[0], lo[1], lo[2]);
                    comp.set(i, j, k, (hi_v - lo_v) / h[a]);
                }
            }
        }
    }
}

/// Divergence of a face vector at cell centers. Interior values only; no
/// ghosts are read.
pub fn divergence(grid: &GridSpec, v: &Velocity) -> Field {
    let mut out = Field::zeros(grid.cells());
    divergence_into(grid, v, &mut out);
    out
}

pub fn divergence_into(grid: &GridSpec, v: &Velocity, out: &mut Field) {
    let dim = grid.dim();
    let h = grid.spacing();
    let n = grid.cells();
    for k in 0..n[2] as isize {
        for j in 0..n[1] as isize {
            for i in 0..n[0] as isize {
                let mut s = 0.0;
                for a in 0..dim {
                    let mut hi = [i, j, k];
                    hi[a] += 1;
                    s += (v.comps[a].at(hi[0], hi[1], hi[2]) - v.comps[a].at(i, j, k)) / h[a];
                }
                out.set(i, j, k, s);
            }
        }
    }
}

/// Standard 5/7-point Laplacian of a cell field; ghosts must be filled.
pub fn laplacian_cell(grid: &GridSpec, q: &Field) -> Field {
    let mut out = Field::zeros(grid.cells());
    laplacian_cell_into(grid, q, &mut out);
    out
}

pub fn laplacian_cell_into(grid: &GridSpec, q: &Field, out: &mut Field) {
    let dim = grid.dim();
    let h = grid.spacing();
    let n = grid.cells();
    for k in 0..n[2] as isize {
        for j in 0..n[1] as isize {
            for i in 0..n[0] as isize {
                let c = q.at(i, j, k);
                let mut s = 0.0;
                for a in 0..dim {
                    let mut hi = [i, j, k];
                    let mut lo = [i, j, k];
                    hi[a] += 1;
                    lo[a] -= 1;
                    s += (q.at(hi[0], hi[1], hi[2]) - 2.0 * c + q.at(lo[0], lo[1], lo[2]))
                        / (h[a] * h[a]);
                }
                out.set(i, j, k, s);
            }
        }
    }
}

/// Laplacian of one velocity component on its face grid. Writes interior
/// faces; wall faces are left at zero (they are fixed no-slip values).
pub fn laplacian_face_into(grid: &GridSpec, axis: usize, q: &Field, out: &mut Field) {
    let dim = grid.dim();
    let h = grid.spacing();
    let d = q.dims();
    for k in 0..d[2] as isize {
        for j in 0..d[1] as isize {
            for i in 0..d[0] as isize {
                let own = [i, j, k][axis];
                if own == 0 || own == d[axis] as isize - 1 {
                    out.set(i, j, k, 0.0);
                    continue;
                }
                let c = q.at(i, j, k);
                let mut s = 0.0;
                for a in 0..dim {
                    let mut hi = [i, j, k];
                    let mut lo = [i, j, k];
                    hi[a] += 1;
                    lo[a] -= 1;
                    s += (q.at(hi[0], hi[1], hi[2]) - 2.0 * c + q.at(lo[0], lo[1], lo[2]))
                        / (h[a] * h[a]);
                }
                out.set(i, j, k, s);
            }
        }
    }
}

/// (v . grad) q for a cell-centered scalar, flux form with centered two-point
/// averages (or donor-cell upwinding).
pub fn advect_scalar(grid: &GridSpec, v: &Velocity, q: &Field, scheme: AdvectionScheme) -> Field {
    let mut out = Field::zeros(grid.cells());
    advect_scalar_into(grid, v, q, scheme, &mut out);
    out
}

pub fn advect_scalar_into(
    grid: &GridSpec,
    v: &Velocity,
    q: &Field,
    scheme: AdvectionScheme,
    out: &mut Field,
) {
    let dim = grid.dim();
    let h = grid.spacing();
    let n = grid.cells();
    let face_val = |vf: f64, lo: f64, hi: f64| -> f64 {
        match scheme {
            AdvectionScheme::Centered => 0.5 * (lo + hi),
            AdvectionScheme::Upwind => {
                if vf >= 0.0 {
                    lo
                } else {
                    hi
                }
            }
        }
    };
    for k in 0..n[2] as isize {
        for j in 0..n[1] as isize {
            for i in 0..n[0] as isize {
                let qc = q.at(i, j, k);
                let mut s = 0.0;
                for a in 0..dim {
                    let mut hi = [i, j, k];
                    let mut lo = [i, j, k];
                    hi[a] += 1;
                    lo[a] -= 1;
                    let vf_hi = v.comps[a].at(hi[0], hi[1], hi[2]);
                    let vf_lo = v.comps[a].at(i, j, k);
                    let q_hi = face_val(vf_hi, qc, q.at(hi[0], hi[1], hi[2]));
                    let q_lo = face_val(vf_lo, q.at(lo[0], lo[1], lo[2]), qc);
                    s += (vf_hi * q_hi - vf_lo * q_lo) / h[a];
                }
                out.set(i, j, k, s);
            }
        }
    }
}

/// (v . grad) v on the staggered grid, flux form over the shifted control
/// volumes of each component (energy-conserving for centered averaging).
/// Interior faces only; wall faces come out zero.
pub fn advect_velocity(grid: &GridSpec, v: &Velocity, scheme: AdvectionScheme) -> Velocity {
    let mut out = Velocity::zeros(grid);
    advect_velocity_into(grid, v, scheme, &mut out);
    out
}

pub fn advect_velocity_into(
    grid: &GridSpec,
    v: &Velocity,
    scheme: AdvectionScheme,
    out: &mut Velocity,
) {
    let dim = grid.dim();
    let h = grid.spacing();
    let face_val = |vf: f64, lo: f64, hi: f64| -> f64 {
        match scheme {
            AdvectionScheme::Centered => 0.5 * (lo + hi),
            AdvectionScheme::Upwind => {
                if vf >= 0.0 {
                    lo
                } else {
                    hi
                }
            }
        }
    };
    for a in 0..dim {
        let d = grid.face_dims(a);
        for k in 0..d[2] as isize {
            for j in 0..d[1] as isize {
                for i in 0..d[0] as isize {
                    let f = [i, j, k];
                    let own = f[a];
                    if own == 0 || own == d[a] as isize - 1 {
                        out.comps[a].set(i, j, k, 0.0);
                        continue;
                    }
                    let va_c = v.comps[a].at(i, j, k);
                    let mut s = 0.0;
                    for b in 0..dim {
                        let mut up = f;
                        up[b] += 1;
                        let mut dn = f;
                        dn[b] -= 1;
                        let va_up = v.comps[a].at(up[0], up[1], up[2]);
                        let va_dn = v.comps[a].at(dn[0], dn[1], dn[2]);
                        let (u_hi, u_lo);
                        if b == a {
                            // CV faces sit at the neighboring cell centers
                            u_hi = 0.5 * (va_c + va_up);
                            u_lo = 0.5 * (va_dn + va_c);
                        } else {
                            // CV faces sit at the edges; average the two b-faces
                            // of the cells left/right of face f along axis a
                            let cell_r = f; // cell with the same index as the face
                            let mut cell_l = f;
                            cell_l[a] -= 1;
                            let mut r_hi = cell_r;
                            r_hi[b] += 1;
                            let mut l_hi = cell_l;
                            l_hi[b] += 1;
                            u_hi = 0.5
                                * (v.comps[b].at(l_hi[0], l_hi[1], l_hi[2])
                                    + v.comps[b].at(r_hi[0], r_hi[1], r_hi[2]));
                            u_lo = 0.5
                                * (v.comps[b].at(cell_l[0], cell_l[1], cell_l[2])
                                    + v.comps[b].at(cell_r[0], cell_r[1], cell_r[2]));
                        }
                        let q_hi = face_val(u_hi, va_c, va_up);
                        let q_lo = face_val(u_lo, va_dn, va_c);
                        s += (u_hi * q_hi - u_lo * q_lo) / h[b];
                    }
                    out.comps[a].set(i, j, k, s);
                }
            }
        }
    }
}

/// (v . grad) applied to every component of a tensor field.
pub fn advect_tensor(grid: &GridSpec, v: &Velocity, f: &TensorField, scheme: AdvectionScheme) -> TensorField {
    let mut out = TensorField::zeros(grid);
    for (o, c) in out.comps.iter_mut().zip(f.comps.iter()) {
        advect_scalar_into(grid, v, c, scheme, o);
    }
    out
}

/// (v . grad) applied to every magnetization component.
pub fn advect_magnetization(
    grid: &GridSpec,
    v: &Velocity,
    m: &Magnetization,
    scheme: AdvectionScheme,
) -> Magnetization {
    let mut out = Magnetization::zeros(grid);
    for a in 0..3 {
        advect_scalar_into(grid, v, &m.comps[a], scheme, &mut out.comps[a]);
    }
    out
}

/// d(v_i)/dx_k at cell centers, component (i, k).
pub fn velocity_gradient(grid: &GridSpec, v: &Velocity) -> TensorField {
    let dim = grid.dim();
    let h = grid.spacing();
    let n = grid.cells();
    let mut out = TensorField::zeros(grid);
    for i_c in 0..dim {
        for k_c in 0..dim {
            let comp = out.comp_mut(i_c, k_c);
            for k in 0..n[2] as isize {
                for j in 0..n[1] as isize {
                    for i in 0..n[0] as isize {
                        let c = [i, j, k];
                        let val = if i_c == k_c {
                            let mut hi = c;
                            hi[i_c] += 1;
                            (v.comps[i_c].at(hi[0], hi[1], hi[2]) - v.comps[i_c].at(c[0], c[1], c[2]))
                                / h[i_c]
                        } else {
                            // average the component to centers, then centered difference
                            let avg = |cell: [isize; 3]| {
                                let mut hi = cell;
                                hi[i_c] += 1;
                                0.5 * (v.comps[i_c].at(cell[0], cell[1], cell[2])
                                    + v.comps[i_c].at(hi[0], hi[1], hi[2]))
                            };
                            let mut up = c;
                            up[k_c] += 1;
                            let mut dn = c;
                            dn[k_c] -= 1;
                            (avg(up) - avg(dn)) / (2.0 * h[k_c])
                        };
                        comp.set(i, j, k, val);
                    }
                }
            }
        }
    }
    out
}

/// (grad v) F entrywise at cell centers: sum_k d_k(v_i) F_kj.
pub fn velocity_gradient_times_f(grid: &GridSpec, v: &Velocity, f: &TensorField) -> TensorField {
    let dim = grid.dim();
    let gv = velocity_gradient(grid, v);
    let n = grid.cells();
    let mut out = TensorField::zeros(grid);
    for i_c in 0..dim {
        for j_c in 0..dim {
            let comp_out = out.comp_mut(i_c, j_c);
            for k in 0..n[2] as isize {
                for j in 0..n[1] as isize {
                    for i in 0..n[0] as isize {
                        let mut s = 0.0;
                        for k_c in 0..dim {
                            s += gv.comp(i_c, k_c).at(i, j, k) * f.comp(k_c, j_c).at(i, j, k);
                        }
                        comp_out.set(i, j, k, s);
                    }
                }
            }
        }
    }
    out
}

/// Row-wise divergence of a cell-centered tensor, landing on interior faces.
/// The tensor must have its ghost layer filled by the caller.
pub fn tensor_divergence_to_faces(grid: &GridSpec, s: &TensorField) -> Velocity {
    let dim = grid.dim();
    let h = grid.spacing();
    let mut out = Velocity::zeros(grid);
    for a in 0..dim {
        let d = grid.face_dims(a);
        for k in 0..d[2] as isize {
            for j in 0..d[1] as isize {
                for i in 0..d[0] as isize {
                    let f = [i, j, k];
                    let own = f[a];
                    if own == 0 || own == d[a] as isize - 1 {
                        continue;
                    }
                    let cell_r = f;
                    let mut cell_l = f;
                    cell_l[a] -= 1;
                    let mut val = (s.comp(a, a).at(cell_r[0], cell_r[1], cell_r[2])
                        - s.comp(a, a).at(cell_l[0], cell_l[1], cell_l[2]))
                        / h[a];
                    for b in 0..dim {
                        if b == a {
                            continue;
                        }
                        let ddb = |cell: [isize; 3]| {
                            let mut up = cell;
                            up[b] += 1;
                            let mut dn = cell;
                            dn[b] -= 1;
                            (s.comp(a, b).at(up[0], up[1], up[2])
                                - s.comp(a, b).at(dn[0], dn[1], dn[2]))
                                / (2.0 * h[b])
                        };
                        val += 0.5 * (ddb(cell_l) + ddb(cell_r));
                    }
                    out.comps[a].set(i, j, k, val);
                }
            }
        }
    }
    out
}

/// F F^T at every stored cell, ghosts included (F ghosts must be filled, so
/// the product inherits a second-order sample of the wall data).
fn elastic_stress_tensor(grid: &GridSpec, f: &TensorField) -> TensorField {
    let dim = grid.dim();
    let n = grid.cells();
    let mut s = TensorField::zeros(grid);
    for i_c in 0..dim {
        for j_c in 0..dim {
            let comp = s.comp_mut(i_c, j_c);
            for k in -1..=n[2] as isize {
                for j in -1..=n[1] as isize {
                    for i in -1..=n[0] as isize {
                        let mut acc = 0.0;
                        for k_c in 0..dim {
                            acc += f.comp(i_c, k_c).at(i, j, k) * f.comp(j_c, k_c).at(i, j, k);
                        }
                        comp.set(i, j, k, acc);
                    }
                }
            }
        }
    }
    s
}

/// div(F F^T) on interior faces.
pub fn elastic_stress_div(grid: &GridSpec, f: &TensorField) -> Velocity {
    let s = elastic_stress_tensor(grid, f);
    tensor_divergence_to_faces(grid, &s)
}

/// grad^T M grad M at cell centers: T_ij = sum_a d_i(M_a) d_j(M_a).
/// Ghost cells are filled by quadratic extrapolation (the tensor has no
/// natural wall condition of its own).
pub fn magnetic_stress_tensor(grid: &GridSpec, m: &Magnetization) -> TensorField {
    let dim = grid.dim();
    let h = grid.spacing();
    let n = grid.cells();
    let mut t = TensorField::zeros(grid);
    for i_c in 0..dim {
        for j_c in 0..dim {
            let comp = t.comp_mut(i_c, j_c);
            for k in 0..n[2] as isize {
                for j in 0..n[1] as isize {
                    for i in 0..n[0] as isize {
                        let c = [i, j, k];
                        let mut acc = 0.0;
                        for a in 0..3 {
                            let d_i = central(&m.comps[a], c, i_c, h[i_c]);
                            let d_j = central(&m.comps[a], c, j_c, h[j_c]);
                            acc += d_i * d_j;
                        }
                        comp.set(i, j, k, acc);
                    }
                }
            }
            comp.fill_ghosts(dim, GhostRule::Extrapolate);
        }
    }
    t
}

#[inline]
fn central(q: &Field, c: [isize; 3], axis: usize, h: f64) -> f64 {
    let mut up = c;
    up[axis] += 1;
    let mut dn = c;
    dn[axis] -= 1;
    (q.at(up[0], up[1], up[2]) - q.at(dn[0], dn[1], dn[2])) / (2.0 * h)
}

/// div(grad^T M grad M) on interior faces, the divergence form that appears
/// in the momentum balance.
pub fn magnetic_stress_div(grid: &GridSpec, m: &Magnetization) -> Velocity {
    let t = magnetic_stress_tensor(grid, m);
    tensor_divergence_to_faces(grid, &t)
}

/// The alternative split form (1/2) grad |grad M|^2 + grad^T M (lap M), on
/// interior faces. Used by the stress-identity audit; the solver itself keeps
/// the divergence form.
pub fn magnetic_stress_div_split(grid: &GridSpec, m: &Magnetization) -> Velocity {
    let dim = grid.dim();
    let h = grid.spacing();
    let n = grid.cells();

    // |grad M|^2 at centers
    let mut w = Field::zeros(grid.cells());
    for k in 0..n[2] as isize {
        for j in 0..n[1] as isize {
            for i in 0..n[0] as isize {
                let c = [i, j, k];
                let mut acc = 0.0;
                for a in 0..3 {
                    for ax in 0..dim {
                        let d = central(&m.comps[a], c, ax, h[ax]);
                        acc += d * d;
                    }
                }
                w.set(i, j, k, acc);
            }
        }
    }
    w.fill_ghosts(dim, GhostRule::Extrapolate);

    // grad^T M lap M at centers
    let lap: Vec<Field> = (0..3).map(|a| laplacian_cell(grid, &m.comps[a])).collect();
    let mut cross = vec![Field::zeros(grid.cells()); dim];
    for (i_c, comp) in cross.iter_mut().enumerate() {
        for k in 0..n[2] as isize {
            for j in 0..n[1] as isize {
                for i in 0..n[0] as isize {
                    let c = [i, j, k];
                    let mut acc = 0.0;
                    for a in 0..3 {
                        acc += central(&m.comps[a], c, i_c, h[i_c]) * lap[a].at(i, j, k);
                    }
                    comp.set(i, j, k, acc);
                }
            }
        }
    }

    let mut out = Velocity::zeros(grid);
    for a in 0..dim {
        let d = grid.face_dims(a);
        for k in 0..d[2] as isize {
            for j in 0..d[1] as isize {
                for i in 0..d[0] as isize {
                    let f = [i, j, k];
                    let own = f[a];
                    if own == 0 || own == d[a] as isize - 1 {
                        continue;
                    }
                    let cell_r = f;
                    let mut cell_l = f;
                    cell_l[a] -= 1;
                    let grad_w = (w.at(cell_r[0], cell_r[1], cell_r[2])
                        - w.at(cell_l[0], cell_l[1], cell_l[2]))
                        / h[a];
                    let interp = 0.5
                        * (cross[a].at(cell_l[0], cell_l[1], cell_l[2])
                            + cross[a].at(cell_r[0], cell_r[1], cell_r[2]));
                    out.comps[a].set(i, j, k, 0.5 * grad_w + interp);
                }
            }
        }
    }
    out
}

/// Pointwise Ginzburg-Landau term (1/mu^2)(|M|^2 - 1) M at cell centers.
pub fn ginzburg_landau(grid: &GridSpec, m: &Magnetization, mu: f64) -> Magnetization {
    let n = grid.cells();
    let inv = 1.0 / (mu * mu);
    let mut out = Magnetization::zeros(grid);
    for k in 0..n[2] as isize {
        for j in 0..n[1] as isize {
            for i in 0..n[0] as isize {
                let mv = [
                    m.comps[0].at(i, j, k),
                    m.comps[1].at(i, j, k),
                    m.comps[2].at(i, j, k),
                ];
                let fac = inv * (mv[0] * mv[0] + mv[1] * mv[1] + mv[2] * mv[2] - 1.0);
                for a in 0..3 {
                    out.comps[a].set(i, j, k, fac * mv[a]);
                }
            }
        }
    }
    out
}
