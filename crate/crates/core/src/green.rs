//! Free Green's function, resonance function and resonance wavefunctions.
//!
//! `D(E)` is evaluated in the Frullani form
//! `D(E) = int_0^inf [k(s) - exp(i E_B s)/s] ds`, with `k` the impurity kernel.
//! The subtraction reproduces `ln(E_B/E)` on the physical sheet, and since
//! the integral is analytic in `E` wherever it converges the same expression
//! continues `D` to the resonance sheet without any logarithm branch to track.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernel::{
    eval_d_integrand, eval_d_kernel, eval_g0_integrand, eval_g0_integrand_with_gradient,
};
use crate::model::{ComplexEnergy, ModelParams, Point2, Window};
use crate::quadrature::{integrate_deformed, integrate_descent, integrate_segment, ContourSpec, QuadResult};
use crate::special::exp_integral_e1;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const PI: f64 = std::f64::consts::PI;

/// `|D|` below which the full Green's function is reported as sitting on a pole.
pub const POLE_THRESHOLD: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WavefunctionKind {
    Retarded,
    Advanced,
}

/// Integral of `f` along the whole path. At zero field the kernels are
/// quasi-periodic, `k(s + pi) = m k(s)`, and the leg is summed in closed form.
fn path_integral<const N: usize, F>(
    f: &F,
    e: ComplexEnergy,
    params: &ModelParams,
    contour: &ContourSpec,
) -> Result<QuadResult<N>>
where
    F: Fn(Complex64) -> Result<[Complex64; N]>,
{
    if params.field > 0.0 {
        return integrate_deformed(f, contour);
    }
    let (_, one_minus_m) = zero_field_multiplier(e)?;
    let mut res = integrate_descent(f, contour)?;
    let a = contour.corner();
    let seg = integrate_segment(f, a, a + PI, contour.abs_tol, contour.rel_tol, contour.max_panels)?;
    for c in 0..N {
        res.value[c] += seg.value[c] / one_minus_m;
    }
    res.error += seg.error / one_minus_m.norm();
    res.panels += seg.panels;
    res.truncation = PI;
    Ok(res)
}

fn zero_field_multiplier(e: ComplexEnergy) -> Result<(Complex64, Complex64)> {
    let m = -(I * e * PI).exp();
    let one_minus_m = 1.0 + (I * e * PI).exp();
    if one_minus_m.norm() < 1e-14 {
        return Err(Error::LandauPole(e));
    }
    Ok((m, one_minus_m))
}

/// Free crossed-field Green's function `G0(r, r'; E)`.
pub fn g0(r: Point2, r_prime: Point2, e: ComplexEnergy, params: &ModelParams, contour: &ContourSpec) -> Result<Complex64> {
    Ok(g0_with_error(r, r_prime, e, params, contour)?.0)
}

/// `G0` and the quadrature error estimate.
pub fn g0_with_error(
    r: Point2,
    r_prime: Point2,
    e: ComplexEnergy,
    params: &ModelParams,
    contour: &ContourSpec,
) -> Result<(Complex64, f64)> {
    check_points(r, r_prime)?;
    let bound = contour.exponent_bound;
    let f = |s: Complex64| Ok([eval_g0_integrand(s, r, r_prime, e, params, bound)?]);
    let q = path_integral(&f, e, params, contour)?;
    Ok((-q.value[0], q.error))
}

/// `G0(r, r')` together with its gradient in `r` as `[G0, dG0/dx, dG0/dy]`.
pub fn g0_gradient(
    r: Point2,
    r_prime: Point2,
    e: ComplexEnergy,
    params: &ModelParams,
    contour: &ContourSpec,
) -> Result<[Complex64; 3]> {
    check_points(r, r_prime)?;
    let bound = contour.exponent_bound;
    let f = |s: Complex64| eval_g0_integrand_with_gradient(s, r, r_prime, e, params, bound);
    let q = path_integral(&f, e, params, contour)?;
    Ok(q.value.map(|v| -v))
}

fn check_points(r: Point2, r_prime: Point2) -> Result<()> {
    if !r.is_finite() || !r_prime.is_finite() {
        return Err(invalid("point", "coordinates must be finite"));
    }
    if r == r_prime {
        return Err(Error::CoincidentPoints(r));
    }
    Ok(())
}

/// `D(E)` and `D'(E)` from one pass over the path, with their error estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonanceFunction {
    pub value: Complex64,
    pub derivative: Complex64,
    pub error: f64,
}

pub fn d_and_derivative(e: ComplexEnergy, params: &ModelParams, contour: &ContourSpec) -> Result<ResonanceFunction> {
    params.validate()?;
    contour.validate()?;
    let bound = contour.exponent_bound;
    let depth_term = exp_integral_e1(-params.binding_energy * contour.depth);

    let near = |s: Complex64| {
        let k = eval_d_kernel(s, e, params, bound);
        let sub = eval_d_integrand(s, e, params, bound)?;
        Ok([sub, I * s * k?])
    };
    let desc = integrate_descent(&near, contour)?;

    let kern = |s: Complex64| {
        let k = eval_d_kernel(s, e, params, bound)?;
        Ok([k, I * s * k])
    };
    let (leg_value, leg_deriv, leg_err) = if params.field > 0.0 {
        let leg = crate::quadrature::integrate_leg(&kern, contour, contour.corner(), desc.panels)?;
        (leg.value[0], leg.value[1], leg.error)
    } else {
        let (m, one_minus_m) = zero_field_multiplier(e)?;
        let a = contour.corner();
        let seg = integrate_segment(&kern, a, a + PI, contour.abs_tol, contour.rel_tol, contour.max_panels)?;
        let v = seg.value[0] / one_minus_m;
        let d = seg.value[1] / one_minus_m + I * PI * m / (one_minus_m * one_minus_m) * seg.value[0];
        (v, d, seg.error * (1.0 + PI / one_minus_m.norm()) / one_minus_m.norm())
    };
    Ok(ResonanceFunction {
        value: desc.value[0] + leg_value - depth_term,
        derivative: desc.value[1] + leg_deriv,
        error: desc.error + leg_err,
    })
}

/// Resonance function `D(E)`; its zeros are the impurity resonances.
pub fn d_value(e: ComplexEnergy, params: &ModelParams, contour: &ContourSpec) -> Result<Complex64> {
    Ok(d_and_derivative(e, params, contour)?.value)
}

/// `dD/dE` by differentiation under the integral sign.
pub fn d_derivative(e: ComplexEnergy, params: &ModelParams, contour: &ContourSpec) -> Result<Complex64> {
    Ok(d_and_derivative(e, params, contour)?.derivative)
}

/// Full Green's function `G0(r, r') + G0(r, 0) G0(0, r') / D(E)`.
pub fn g_full(
    r: Point2,
    r_prime: Point2,
    e: ComplexEnergy,
    params: &ModelParams,
    contour: &ContourSpec,
) -> Result<Complex64> {
    let d = d_value(e, params, contour)?;
    if d.norm() < POLE_THRESHOLD {
        return Err(Error::ResonancePole { energy: e, magnitude: d.norm() });
    }
    if r == Point2::ORIGIN || r_prime == Point2::ORIGIN {
        return Err(Error::OriginSingularity(if r == Point2::ORIGIN { r } else { r_prime }));
    }
    let free = g0(r, r_prime, e, params, contour)?;
    let a = g0(r, Point2::ORIGIN, e, params, contour)?;
    let b = g0(Point2::ORIGIN, r_prime, e, params, contour)?;
    Ok(free + a * b / d)
}

/// Un-normalized resonance wavefunction: `-i G0(r, 0; E_r)` for the retarded
/// kind, and for the advanced kind the conjugate of `i G0(0, r; E_r)`.
pub fn psi(
    r: Point2,
    e_r: ComplexEnergy,
    kind: WavefunctionKind,
    params: &ModelParams,
    contour: &ContourSpec,
) -> Result<Complex64> {
    if r == Point2::ORIGIN {
        return Err(Error::OriginSingularity(r));
    }
    match kind {
        WavefunctionKind::Retarded => Ok(-I * g0(r, Point2::ORIGIN, e_r, params, contour)?),
        WavefunctionKind::Advanced => Ok((I * g0(Point2::ORIGIN, r, e_r, params, contour)?).conj()),
    }
}

/// Retarded wavefunction and its gradient `[psi, dpsi/dx, dpsi/dy]`.
pub fn psi_gradient(r: Point2, e_r: ComplexEnergy, params: &ModelParams, contour: &ContourSpec) -> Result<[Complex64; 3]> {
    if r == Point2::ORIGIN {
        return Err(Error::OriginSingularity(r));
    }
    Ok(g0_gradient(r, Point2::ORIGIN, e_r, params, contour)?.map(|v| -I * v))
}

/// Resolution of the overlap quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OverlapGrid {
    /// Gauss-Legendre order per panel and direction.
    pub order: usize,
    /// Largest side of the Cartesian panels.
    pub panel: f64,
    /// Half side of the central square done in polar coordinates.
    pub core: f64,
}

impl Default for OverlapGrid {
    fn default() -> Self {
        Self { order: 10, panel: 1.0, core: 0.5 }
    }
}

impl OverlapGrid {
    pub fn validate(&self) -> Result<()> {
        if self.order < 2 || self.order > 64 {
            return Err(invalid("order", format!("must be in 2..=64, got {}", self.order)));
        }
        if !(self.panel.is_finite() && self.panel > 0.0) {
            return Err(invalid("panel", "must be finite and > 0"));
        }
        if !(self.core.is_finite() && self.core > 0.0) {
            return Err(invalid("core", "must be finite and > 0"));
        }
        Ok(())
    }
}

/// Overlap `int psi_r [psi^A_r]* d^2 r` over `window`, which must contain the impurity.
///
/// Away from the impurity the window is tiled by Cartesian Gauss-Legendre
/// panels. The central square `[-core, core]^2` is cut into four triangles
/// meeting at the origin and done in polar-like coordinates with radial
/// panels graded towards the `ln^2 r` singularity. Since
/// `G0(0, r) = G0(r mirrored, 0)`, only `G0(., 0)` is evaluated, once per
/// distinct node. Fails with [`Error::WindowTooSmall`] when the integrand on
/// the window boundary is not negligible against `grid_tol`.
pub fn overlap_norm(
    e_r: ComplexEnergy,
    params: &ModelParams,
    window: &Window,
    grid_tol: f64,
    grid: &OverlapGrid,
    contour: &ContourSpec,
) -> Result<Complex64> {
    window.validate()?;
    grid.validate()?;
    let core = grid.core;
    if !(window.x_min < -core && window.x_max > core && window.y_min < -core && window.y_max > core) {
        return Err(invalid("window", format!("must contain the central square of half side {core}")));
    }
    if !(grid_tol.is_finite() && grid_tol > 0.0) {
        return Err(invalid("grid_tol", "must be finite and > 0"));
    }
    let g = |p: Point2| g0(p, Point2::ORIGIN, e_r, params, contour);
    let integrand = |p: Point2| -> Result<Complex64> { Ok(g(p)? * g(p.mirrored())?) };

    let tail = boundary_tail(&integrand, window)?;
    if tail > grid_tol {
        return Err(Error::WindowTooSmall { tail, tol: grid_tol });
    }

    let nodes = overlap_nodes(window, grid);
    // Distinct evaluation points: every node and its mirror image.
    let mut keys: Vec<(u64, u64)> = nodes
        .iter()
        .flat_map(|(p, _)| [(p.x.to_bits(), p.y.to_bits()), (p.x.to_bits(), (-p.y).to_bits())])
        .collect();
    keys.sort_unstable();
    keys.dedup();
    let values: Vec<Result<Complex64>> = keys
        .par_iter()
        .map(|&(x, y)| g(Point2::new(f64::from_bits(x), f64::from_bits(y))))
        .collect();
    let mut table = std::collections::HashMap::with_capacity(keys.len());
    for (k, v) in keys.into_iter().zip(values) {
        table.insert(k, v?);
    }
    let mut total = Complex64::new(0.0, 0.0);
    for (p, w) in &nodes {
        let a = table[&(p.x.to_bits(), p.y.to_bits())];
        let b = table[&(p.x.to_bits(), (-p.y).to_bits())];
        total += a * b * *w;
    }
    Ok(total)
}

fn breakpoints(lo: f64, hi: f64, core: f64, panel: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let push_range = |a: f64, b: f64, out: &mut Vec<f64>| {
        let n = (((b - a) / panel).ceil() as usize).max(1);
        for k in 0..n {
            out.push(if k == 0 { a } else { a + (b - a) * k as f64 / n as f64 });
        }
    };
    push_range(lo, -core, &mut out);
    out.push(-core);
    push_range(core, hi, &mut out);
    out.push(hi);
    out
}

/// Nodes and weights of the composite overlap rule on `window`.
fn overlap_nodes(window: &Window, grid: &OverlapGrid) -> Vec<(Point2, f64)> {
    let (gx, gw) = gauss_legendre(grid.order);
    let core = grid.core;
    let xs = breakpoints(window.x_min, window.x_max, core, grid.panel);
    let ys = breakpoints(window.y_min, window.y_max, core, grid.panel);
    let mut nodes = Vec::new();
    for yw in ys.windows(2) {
        for xw in xs.windows(2) {
            if xw[0] == -core && yw[0] == -core {
                continue;
            }
            for (&u, &wu) in gx.iter().zip(&gw) {
                let x = 0.5 * (xw[0] + xw[1]) + 0.5 * (xw[1] - xw[0]) * u;
                for (&v, &wv) in gx.iter().zip(&gw) {
                    let y = 0.5 * (yw[0] + yw[1]) + 0.5 * (yw[1] - yw[0]) * v;
                    nodes.push((Point2::new(x, y), 0.25 * (xw[1] - xw[0]) * (yw[1] - yw[0]) * wu * wv));
                }
            }
        }
    }
    let corners = [
        Point2::new(core, -core),
        Point2::new(core, core),
        Point2::new(-core, core),
        Point2::new(-core, -core),
    ];
    for k in 0..4 {
        sector_nodes(corners[k], corners[(k + 1) % 4], &gx, &gw, &mut nodes);
    }
    nodes
}

/// Nodes and weights (including the Jacobian) on the triangle spanned by the
/// origin and the segment `c0 -> c1`.
fn sector_nodes(c0: Point2, c1: Point2, gx: &[f64], gw: &[f64], out: &mut Vec<(Point2, f64)>) {
    // point = t p(u) with p(u) = c0 + u (c1 - c0); area element t |c0 x (c1 - c0)| dt du.
    let dx = c1.x - c0.x;
    let dy = c1.y - c0.y;
    let cross = (c0.x * dy - c0.y * dx).abs();
    let far = c0.norm().max(c1.norm());
    let mut t_breaks = vec![0.0];
    for r in [1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 3e-2, 0.1, 0.25] {
        if r < 0.5 * far {
            t_breaks.push(r / far);
        }
    }
    t_breaks.push(0.6);
    t_breaks.push(1.0);
    let n_u = 2;
    for iu in 0..n_u {
        let u0 = iu as f64 / n_u as f64;
        let u1 = (iu + 1) as f64 / n_u as f64;
        for (&xu, &wu) in gx.iter().zip(gw) {
            let u = 0.5 * (u0 + u1) + 0.5 * (u1 - u0) * xu;
            let wu = 0.5 * (u1 - u0) * wu;
            let p = Point2::new(c0.x + u * dx, c0.y + u * dy);
            for tb in t_breaks.windows(2) {
                let (t0, t1) = (tb[0], tb[1]);
                for (&xt, &wt) in gx.iter().zip(gw) {
                    let t = 0.5 * (t0 + t1) + 0.5 * (t1 - t0) * xt;
                    let wt = 0.5 * (t1 - t0) * wt;
                    out.push((Point2::new(t * p.x, t * p.y), wu * wt * t * cross));
                }
            }
        }
    }
}

/// Crude estimate of the integral mass outside the window: the largest
/// boundary value of the integrand times the window perimeter, assuming a
/// unit decay length beyond the edge.
fn boundary_tail<F>(integrand: &F, window: &Window) -> Result<f64>
where
    F: Fn(Point2) -> Result<Complex64> + Sync,
{
    let n = 24;
    let mut pts = Vec::with_capacity(4 * n);
    for i in 0..n {
        let u = (i as f64 + 0.5) / n as f64;
        let x = window.x_min + u * window.width();
        let y = window.y_min + u * window.height();
        pts.push(Point2::new(x, window.y_min));
        pts.push(Point2::new(x, window.y_max));
        pts.push(Point2::new(window.x_min, y));
        pts.push(Point2::new(window.x_max, y));
    }
    let vals: Vec<Result<f64>> = pts.par_iter().map(|&p| integrand(p).map(|v| v.norm())).collect();
    let mut peak = 0.0_f64;
    for v in vals {
        peak = peak.max(v?);
    }
    Ok(peak * 2.0 * (window.width() + window.height()))
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}
