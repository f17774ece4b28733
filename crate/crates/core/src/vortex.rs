//! Phase, probability current, velocity and quantum vortices of resonance
//! wavefunctions.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::green::{psi, psi_gradient, WavefunctionKind};
use crate::model::{ComplexEnergy, ModelParams, Point2, Window};
use crate::quadrature::ContourSpec;
use crate::solver::{refine_root_with, SolverOptions, Trajectory};

/// Radius of the disk around the impurity excluded from zero searches.
pub const ORIGIN_GUARD: f64 = 0.05;

/// Phase increments between adjacent contour vertices must stay below this.
pub const MAX_PHASE_STEP: f64 = PI / 2.0;

/// `|psi|^2` below which the velocity is treated as undefined.
pub const DENSITY_FLOOR: f64 = 1e-18;

/// Principal phase in `(-pi, pi]`.
pub fn phase_at(value: Complex64) -> Result<f64> {
    if value.re == 0.0 && value.im == 0.0 {
        return Err(Error::ZeroPhase);
    }
    let a = value.im.atan2(value.re);
    Ok(if a <= -PI { PI } else { a })
}

fn wrap(d: f64) -> f64 {
    let mut d = d % (2.0 * PI);
    if d > PI {
        d -= 2.0 * PI;
    } else if d <= -PI {
        d += 2.0 * PI;
    }
    d
}

/// Symmetric-gauge coupling `e A(r) = (sigma / 2) (-y, x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GaugePotential {
    pub sigma: i8,
}

impl GaugePotential {
    /// The sign consistent with the phase convention of the free Green's function.
    pub const CONSISTENT: GaugePotential = GaugePotential { sigma: -1 };

    pub fn new(sigma: i8) -> Result<Self> {
        if sigma != 1 && sigma != -1 {
            return Err(invalid("sigma", format!("must be +1 or -1, got {sigma}")));
        }
        Ok(Self { sigma })
    }

    pub fn at(&self, r: Point2) -> [f64; 2] {
        let s = 0.5 * f64::from(self.sigma);
        [-s * r.y, s * r.x]
    }

    pub fn flipped(&self) -> Self {
        Self { sigma: -self.sigma }
    }
}

impl Default for GaugePotential {
    fn default() -> Self {
        Self::CONSISTENT
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradMode {
    Analytic,
    FiniteDifference { step: f64 },
}

/// Everything needed to evaluate the wavefunction of one resonance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State {
    pub energy: ComplexEnergy,
    pub params: ModelParams,
    pub contour: ContourSpec,
}

impl State {
    pub fn new(energy: ComplexEnergy, params: ModelParams, contour: ContourSpec) -> Self {
        Self { energy, params, contour }
    }

    pub fn psi(&self, r: Point2) -> Result<Complex64> {
        psi(r, self.energy, WavefunctionKind::Retarded, &self.params, &self.contour)
    }

    pub fn psi_advanced(&self, r: Point2) -> Result<Complex64> {
        psi(r, self.energy, WavefunctionKind::Advanced, &self.params, &self.contour)
    }

    /// `[psi, dpsi/dx, dpsi/dy]`.
    pub fn psi_gradient(&self, r: Point2, mode: GradMode) -> Result<[Complex64; 3]> {
        match mode {
            GradMode::Analytic => psi_gradient(r, self.energy, &self.params, &self.contour),
            GradMode::FiniteDifference { step } => {
                if !(step.is_finite() && step > 0.0) {
                    return Err(invalid("step", "must be finite and > 0"));
                }
                let v = self.psi(r)?;
                let fx = (self.psi(Point2::new(r.x + step, r.y))? - self.psi(Point2::new(r.x - step, r.y))?) / (2.0 * step);
                let fy = (self.psi(Point2::new(r.x, r.y + step))? - self.psi(Point2::new(r.x, r.y - step))?) / (2.0 * step);
                Ok([v, fx, fy])
            }
        }
    }
}

/// Probability current `j = Im[psi* (grad - i e A) psi]`.
pub fn current_at(state: &State, r: Point2, gauge: GaugePotential, mode: GradMode) -> Result<[f64; 2]> {
    let [v, gx, gy] = state.psi_gradient(r, mode)?;
    Ok(current_from(r, v, gx, gy, gauge))
}

fn current_from(r: Point2, v: Complex64, gx: Complex64, gy: Complex64, gauge: GaugePotential) -> [f64; 2] {
    let a = gauge.at(r);
    let n = v.norm_sqr();
    [(v.conj() * gx).im - a[0] * n, (v.conj() * gy).im - a[1] * n]
}

/// Probability velocity `v = j / |psi|^2 + e A`.
pub fn velocity_at(state: &State, r: Point2, gauge: GaugePotential, mode: GradMode) -> Result<[f64; 2]> {
    let [v, gx, gy] = state.psi_gradient(r, mode)?;
    velocity_from(r, v, gx, gy, gauge)
}

fn velocity_from(r: Point2, v: Complex64, gx: Complex64, gy: Complex64, gauge: GaugePotential) -> Result<[f64; 2]> {
    let n = v.norm_sqr();
    if n < DENSITY_FLOOR {
        return Err(Error::VortexProximity { point: r, density: n });
    }
    let j = current_from(r, v, gx, gy, gauge);
    let a = gauge.at(r);
    Ok([j[0] / n + a[0], j[1] / n + a[1]])
}

/// `|(H - E) psi| / |E psi|` at `r` for the Hamiltonian
/// `(-i grad - e A)^2 + 2 F x` in the given gauge, with a five-point Laplacian.
pub fn schrodinger_residual(state: &State, r: Point2, gauge: GaugePotential, h: f64) -> Result<f64> {
    let i = Complex64::new(0.0, 1.0);
    let p = |x: f64, y: f64| state.psi(Point2::new(x, y));
    let c = p(r.x, r.y)?;
    let lap = (p(r.x + h, r.y)? + p(r.x - h, r.y)? + p(r.x, r.y + h)? + p(r.x, r.y - h)? - 4.0 * c) / (h * h);
    let [_, gx, gy] = state.psi_gradient(r, GradMode::Analytic)?;
    let a = gauge.at(r);
    let a2 = a[0] * a[0] + a[1] * a[1];
    let h_psi = -lap + 2.0 * i * (a[0] * gx + a[1] * gy) + a2 * c + 2.0 * state.params.field * r.x * c;
    Ok((h_psi - state.energy * c).norm() / (state.energy * c).norm())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CirculationMethod {
    PhaseWinding,
    VelocityLineIntegral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circulation {
    pub gamma_over_2pi: f64,
    pub nearest: i64,
    pub deviation: f64,
}

impl Circulation {
    fn from_value(g: f64) -> Self {
        let n = g.round();
        Self { gamma_over_2pi: g, nearest: n as i64, deviation: (g - n).abs() }
    }
}

/// Closed polygon approximating a circle, counter-clockwise.
pub fn circle_contour(center: Point2, radius: f64, vertices: usize) -> Vec<Point2> {
    (0..vertices)
        .map(|k| {
            let t = 2.0 * PI * k as f64 / vertices as f64;
            Point2::new(center.x + radius * t.cos(), center.y + radius * t.sin())
        })
        .collect()
}

/// Circle with the default sampling density of 64 vertices per unit length.
pub fn default_circle(center: Point2, radius: f64) -> Vec<Point2> {
    let n = ((64.0 * 2.0 * PI * radius).ceil() as usize).max(32);
    circle_contour(center, radius, n)
}

/// Rectangle boundary, counter-clockwise, with at least `per_unit` vertices per unit length.
pub fn rectangle_contour(w: &Window, per_unit: f64) -> Vec<Point2> {
    let corners = [
        Point2::new(w.x_min, w.y_min),
        Point2::new(w.x_max, w.y_min),
        Point2::new(w.x_max, w.y_max),
        Point2::new(w.x_min, w.y_max),
    ];
    let mut out = Vec::new();
    for k in 0..4 {
        let a = corners[k];
        let b = corners[(k + 1) % 4];
        let n = ((a.dist(b) * per_unit).ceil() as usize).max(1);
        for j in 0..n {
            let t = j as f64 / n as f64;
            out.push(Point2::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)));
        }
    }
    out
}

/// Each edge split in two.
pub fn refine_polyline(contour: &[Point2]) -> Vec<Point2> {
    let n = contour.len();
    let mut out = Vec::with_capacity(2 * n);
    for k in 0..n {
        let a = contour[k];
        let b = contour[(k + 1) % n];
        out.push(a);
        out.push(Point2::new(0.5 * (a.x + b.x), 0.5 * (a.y + b.y)));
    }
    out
}

fn check_guard(contour: &[Point2]) -> Result<()> {
    if contour.len() < 3 {
        return Err(invalid("contour", "needs at least three vertices"));
    }
    let n = contour.len();
    let mut closest = f64::INFINITY;
    for k in 0..n {
        closest = closest.min(segment_distance(Point2::ORIGIN, contour[k], contour[(k + 1) % n]));
    }
    if closest < ORIGIN_GUARD {
        return Err(Error::GuardViolation { distance: closest });
    }
    Ok(())
}

fn segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0) };
    p.dist(Point2::new(a.x + t * dx, a.y + t * dy))
}

/// Circulation `(1/2pi) oint v . dr` around the closed polyline `contour`.
///
/// Phase winding sums the wrapped increments of `arg psi` between vertices;
/// the line-integral method applies 4-point Gauss-Legendre to `v . dr` on
/// every edge. Both fail on contours that come too close to the impurity or
/// pass through a zero of `psi`.
pub fn circulation(
    state: &State,
    contour: &[Point2],
    gauge: GaugePotential,
    method: CirculationMethod,
) -> Result<Circulation> {
    check_guard(contour)?;
    match method {
        CirculationMethod::PhaseWinding => {
            let vals: Vec<Result<Complex64>> = contour.par_iter().map(|&p| state.psi(p)).collect();
            let mut phases = Vec::with_capacity(vals.len());
            for (k, v) in vals.into_iter().enumerate() {
                let v = v?;
                if v.norm_sqr() < DENSITY_FLOOR {
                    return Err(Error::VortexProximity { point: contour[k], density: v.norm_sqr() });
                }
                phases.push(phase_at(v)?);
            }
            let n = phases.len();
            let mut total = 0.0;
            for k in 0..n {
                let d = wrap(phases[(k + 1) % n] - phases[k]);
                if d.abs() >= MAX_PHASE_STEP {
                    return Err(Error::UndersampledContour { step: d.abs(), index: k, next: (k + 1) % n });
                }
                total += d;
            }
            Ok(Circulation::from_value(total / (2.0 * PI)))
        }
        CirculationMethod::VelocityLineIntegral => {
            const X: [f64; 4] = [-0.861_136_311_594_052_6, -0.339_981_043_584_856_3, 0.339_981_043_584_856_3, 0.861_136_311_594_052_6];
            const W: [f64; 4] = [0.347_854_845_137_453_9, 0.652_145_154_862_546_1, 0.652_145_154_862_546_1, 0.347_854_845_137_453_9];
            let n = contour.len();
            let nodes: Vec<(Point2, [f64; 2])> = (0..n)
                .flat_map(|k| {
                    let a = contour[k];
                    let b = contour[(k + 1) % n];
                    (0..4).map(move |q| {
                        let t = 0.5 * (1.0 + X[q]);
                        let p = Point2::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y));
                        (p, [0.5 * W[q] * (b.x - a.x), 0.5 * W[q] * (b.y - a.y)])
                    })
                })
                .collect();
            let vals: Vec<Result<f64>> = nodes
                .par_iter()
                .map(|&(p, dr)| velocity_at(state, p, gauge, GradMode::Analytic).map(|v| v[0] * dr[0] + v[1] * dr[1]))
                .collect();
            let mut total = 0.0;
            for v in vals {
                total += v?;
            }
            Ok(Circulation::from_value(total / (2.0 * PI)))
        }
    }
}

/// Phase-winding circulation, doubling the vertex count on undersampling.
pub fn circulation_adaptive(state: &State, contour: &[Point2], gauge: GaugePotential, max_doublings: usize) -> Result<Circulation> {
    let mut poly = contour.to_vec();
    let mut tries = 0;
    loop {
        match circulation(state, &poly, gauge, CirculationMethod::PhaseWinding) {
            Err(Error::UndersampledContour { .. }) if tries < max_doublings => {
                poly = refine_polyline(&poly);
                tries += 1;
            }
            other => return other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vortex {
    pub position: Point2,
    /// Circulation in units of `2 pi`; `+1` vortex, `-1` anti-vortex.
    pub charge: i32,
    /// `|psi|` at the refined position.
    pub refine_residual: f64,
    pub field: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VortexOptions {
    /// Refined zeros satisfy `|psi| <= zero_tol * max |psi|` over the scan grid.
    pub zero_tol: f64,
    pub max_newton: usize,
    /// Radius cap of the charge-assignment circle.
    pub charge_radius: f64,
    /// Distance below which two refined zeros are the same vortex.
    pub merge_radius: f64,
}

impl Default for VortexOptions {
    fn default() -> Self {
        Self { zero_tol: 1e-10, max_newton: 40, charge_radius: 0.05, merge_radius: 1e-6 }
    }
}

/// Sampled complex field with optional derived layers, row-major in `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldGrid {
    pub window: Window,
    pub nx: usize,
    pub ny: usize,
    /// `None` inside the impurity guard disk.
    pub values: Vec<Option<Complex64>>,
    pub phase: Option<Vec<Option<f64>>>,
    pub current: Option<Vec<Option<[f64; 2]>>>,
    pub velocity: Option<Vec<Option<[f64; 2]>>>,
}

impl FieldGrid {
    pub fn point(&self, i: usize, j: usize) -> Point2 {
        let x = self.window.x_min + self.window.width() * i as f64 / (self.nx - 1) as f64;
        let y = self.window.y_min + self.window.height() * j as f64 / (self.ny - 1) as f64;
        Point2::new(x, y)
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn dx(&self) -> f64 {
        self.window.width() / (self.nx - 1) as f64
    }

    pub fn dy(&self) -> f64 {
        self.window.height() / (self.ny - 1) as f64
    }

    /// Samples `psi` on the grid, masking the impurity guard disk.
    pub fn sample(state: &State, window: Window, nx: usize, ny: usize) -> Result<Self> {
        window.validate()?;
        if nx < 2 || ny < 2 {
            return Err(invalid("grid", format!("need at least 2x2 samples, got {nx}x{ny}")));
        }
        let mut grid = FieldGrid { window, nx, ny, values: Vec::new(), phase: None, current: None, velocity: None };
        let pts: Vec<Point2> = (0..ny).flat_map(|j| (0..nx).map(move |i| (i, j))).map(|(i, j)| grid.point(i, j)).collect();
        let vals: Vec<Result<Option<Complex64>>> = pts
            .par_iter()
            .map(|&p| if p.norm() <= ORIGIN_GUARD { Ok(None) } else { state.psi(p).map(Some) })
            .collect();
        grid.values = vals.into_iter().collect::<Result<_>>()?;
        Ok(grid)
    }

    pub fn with_phase(mut self) -> Self {
        self.phase = Some(self.values.iter().map(|v| v.and_then(|z| phase_at(z).ok())).collect());
        self
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Winding number of `psi` around plaquette `(i, j)`-`(i+1, j+1)`, if unmasked.
    pub fn plaquette_winding(&self, i: usize, j: usize) -> Option<i32> {
        let corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
        let mut ph = [0.0; 4];
        for (k, &(a, b)) in corners.iter().enumerate() {
            ph[k] = phase_at(self.values[self.index(a, b)]?).ok()?;
        }
        let total: f64 = (0..4).map(|k| wrap(ph[(k + 1) % 4] - ph[k])).sum();
        Some((total / (2.0 * PI)).round() as i32)
    }
}

/// 2D Newton on `(Re psi, Im psi)` with the analytic Jacobian.
fn newton_zero(state: &State, start: Point2, tol_abs: f64, max_iter: usize, max_move: f64) -> Result<(Point2, f64)> {
    let mut p = start;
    let mut last = f64::INFINITY;
    for _ in 0..max_iter {
        let [v, gx, gy] = state.psi_gradient(p, GradMode::Analytic)?;
        let res = v.norm();
        if res <= tol_abs {
            return Ok((p, res));
        }
        let det = gx.re * gy.im - gy.re * gx.im;
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let dx = -(gy.im * v.re - gy.re * v.im) / det;
        let dy = -(-gx.im * v.re + gx.re * v.im) / det;
        let mut lambda = 1.0;
        let mut moved = false;
        for _ in 0..6 {
            let q = Point2::new(p.x + lambda * dx, p.y + lambda * dy);
            if q.dist(start) > max_move || q.norm() <= ORIGIN_GUARD {
                lambda *= 0.5;
                continue;
            }
            if state.psi(q)?.norm() < res {
                p = q;
                moved = true;
                break;
            }
            lambda *= 0.5;
        }
        if !moved {
            break;
        }
        last = res;
    }
    let res = state.psi(p)?.norm();
    if res <= tol_abs {
        return Ok((p, res));
    }
    Err(Error::RootNotConverged {
        guess: Complex64::new(start.x, start.y),
        iterations: max_iter,
        residual: res.min(last),
    })
}

/// Result of a vortex scan: located vortices and the cells whose refinement failed.
#[derive(Debug, Clone, PartialEq)]
pub struct VortexScan {
    pub vortices: Vec<Vortex>,
    pub failures: Vec<(Point2, Error)>,
    /// Plaquettes flagged by nonzero winding.
    pub flagged: usize,
    pub zero_tol_abs: f64,
}

/// Locate all vortices in `window`: plaquette winding scan, Newton refinement
/// of every flagged cell, then charge assignment from a small circle.
pub fn locate_vortices(state: &State, window: Window, nx: usize, ny: usize, opts: &VortexOptions) -> Result<VortexScan> {
    let grid = FieldGrid::sample(state, window, nx, ny)?;
    locate_in_grid(state, &grid, opts)
}

pub fn locate_in_grid(state: &State, grid: &FieldGrid, opts: &VortexOptions) -> Result<VortexScan> {
    let zero_tol_abs = opts.zero_tol * grid.max_abs();
    let mut flagged = Vec::new();
    for j in 0..grid.ny - 1 {
        for i in 0..grid.nx - 1 {
            if let Some(w) = grid.plaquette_winding(i, j) {
                if w != 0 {
                    flagged.push((i, j));
                }
            }
        }
    }
    let max_move = 2.0 * grid.dx().hypot(grid.dy());
    let refined: Vec<(Point2, Result<(Point2, f64)>)> = flagged
        .par_iter()
        .map(|&(i, j)| {
            let a = grid.point(i, j);
            let b = grid.point(i + 1, j + 1);
            let c = Point2::new(0.5 * (a.x + b.x), 0.5 * (a.y + b.y));
            (c, newton_zero(state, c, zero_tol_abs, opts.max_newton, max_move))
        })
        .collect();
    let mut zeros: Vec<(Point2, f64, usize)> = Vec::new();
    let mut failures = Vec::new();
    for (cell, r) in refined {
        match r {
            Ok((p, res)) if grid.window.contains(p) => {
                if let Some(z) = zeros.iter_mut().find(|z| z.0.dist(p) < opts.merge_radius) {
                    z.2 += 1;
                } else {
                    zeros.push((p, res, 1));
                }
            }
            Ok((p, _)) => failures.push((cell, invalid("vortex", format!("refined zero {p:?} left the window")))),
            Err(e) => failures.push((cell, e)),
        }
    }
    zeros.sort_by(|a, b| a.0.x.total_cmp(&b.0.x).then(a.0.y.total_cmp(&b.0.y)));
    let positions: Vec<Point2> = zeros.iter().map(|z| z.0).collect();
    let mut vortices = Vec::with_capacity(zeros.len());
    for &(p, res, _) in &zeros {
        let charge = charge_of(state, p, &positions, opts)?;
        vortices.push(Vortex { position: p, charge, refine_residual: res, field: state.params.field });
    }
    Ok(VortexScan { vortices, failures, flagged: flagged.len(), zero_tol_abs })
}

fn charge_of(state: &State, p: Point2, others: &[Point2], opts: &VortexOptions) -> Result<i32> {
    let mut nearest = p.norm() - ORIGIN_GUARD;
    for &q in others {
        if q != p {
            nearest = nearest.min(p.dist(q));
        }
    }
    let radius = opts.charge_radius.min(0.4 * nearest);
    if radius.is_nan() || radius <= 0.0 {
        return Err(Error::UnresolvedCluster(p));
    }
    let c = circulation_adaptive(state, &default_circle(p, radius), GaugePotential::CONSISTENT, 4)?;
    if c.nearest.abs() >= 2 || c.nearest == 0 {
        return Err(Error::UnresolvedCluster(p));
    }
    Ok(c.nearest as i32)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VortexPathPoint {
    pub field: f64,
    pub energy: ComplexEnergy,
    pub vortex: Vortex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VortexPath {
    pub points: Vec<VortexPathPoint>,
    /// Fields at which the re-verified charge differed from the previous one.
    pub charge_changes: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackOptions {
    /// Largest accepted vortex displacement per field step; larger moves are
    /// retried with the field step bisected.
    pub max_move: f64,
    /// Maximum bisection depth of a field step.
    pub max_depth: usize,
}

impl Default for TrackOptions {
    fn default() -> Self {
        Self { max_move: 0.25, max_depth: 6 }
    }
}

/// Continue `initial` vortices along the resonance `trajectory`.
pub fn track_vortices(
    trajectory: &Trajectory,
    initial: &[Vortex],
    window: Window,
    contour: &ContourSpec,
    vopts: &VortexOptions,
    topts: &TrackOptions,
) -> Result<Vec<VortexPath>> {
    let first = trajectory.points.first().ok_or_else(|| invalid("trajectory", "empty"))?;
    let mut paths: Vec<VortexPath> = initial
        .iter()
        .map(|v| VortexPath {
            points: vec![VortexPathPoint { field: first.field(), energy: first.energy, vortex: *v }],
            charge_changes: Vec::new(),
        })
        .collect();
    let solver = SolverOptions { check_degeneracy: false, ..SolverOptions::default() };
    for w in trajectory.points.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mut stack = vec![(a.field(), a.energy, b.field(), b.energy, 0usize)];
        while let Some((f0, e0, f1, e1, depth)) = stack.pop() {
            let state = State::new(e1, a.params.with_field(f1), *contour);
            let prev: Vec<Vortex> = paths.iter().map(|p| p.points.last().expect("seeded").vortex).collect();
            let moved = step_vortices(&state, &prev, window, vopts, topts);
            match moved {
                Ok(next) => {
                    for (path, v) in paths.iter_mut().zip(next) {
                        let last_charge = path.points.last().expect("seeded").vortex.charge;
                        if v.charge != last_charge {
                            path.charge_changes.push(f1);
                        }
                        path.points.push(VortexPathPoint { field: f1, energy: e1, vortex: v });
                    }
                }
                Err(err) => {
                    if depth >= topts.max_depth {
                        return Err(Error::TrackLost { field: f1, reason: err.to_string() });
                    }
                    let fm = 0.5 * (f0 + f1);
                    let params = a.params.with_field(fm);
                    let em = refine_root_with(0.5 * (e0 + e1), &params, contour, &solver)?.energy;
                    // Process the first half first: push the second half below it.
                    stack.push((fm, em, f1, e1, depth + 1));
                    stack.push((f0, e0, fm, em, depth + 1));
                }
            }
        }
    }
    Ok(paths)
}

fn step_vortices(state: &State, prev: &[Vortex], window: Window, vopts: &VortexOptions, topts: &TrackOptions) -> Result<Vec<Vortex>> {
    let ref_mag = window_reference_magnitude(state, &window)?;
    let tol_abs = vopts.zero_tol * ref_mag;
    let results: Vec<Result<(Point2, f64)>> = prev
        .par_iter()
        .map(|v| newton_zero(state, v.position, tol_abs, vopts.max_newton, topts.max_move))
        .collect();
    let mut out = Vec::with_capacity(prev.len());
    let mut positions = Vec::with_capacity(prev.len());
    for r in results {
        let (p, res) = r?;
        if !window.contains(p) {
            return Err(invalid("vortex", format!("left the window at {p:?}")));
        }
        if positions.iter().any(|q: &Point2| q.dist(p) < vopts.merge_radius.max(1e-6)) {
            return Err(invalid("vortex", format!("two tracks collided at {p:?}")));
        }
        positions.push(p);
        out.push((p, res));
    }
    let mut vortices = Vec::with_capacity(out.len());
    for (p, res) in out {
        let charge = charge_of(state, p, &positions, vopts)?;
        vortices.push(Vortex { position: p, charge, refine_residual: res, field: state.params.field });
    }
    Ok(vortices)
}

/// Coarse estimate of `max |psi|` over the window for relative zero tolerances.
fn window_reference_magnitude(state: &State, w: &Window) -> Result<f64> {
    let n = 17;
    let mut pts = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let p = Point2::new(
                w.x_min + w.width() * (i as f64 + 0.5) / n as f64,
                w.y_min + w.height() * (j as f64 + 0.5) / n as f64,
            );
            if p.norm() > ORIGIN_GUARD {
                pts.push(p);
            }
        }
    }
    let vals: Vec<Result<f64>> = pts.par_iter().map(|&p| state.psi(p).map(|z| z.norm())).collect();
    let mut m = 0.0_f64;
    for v in vals {
        m = m.max(v?);
    }
    Ok(m)
}

/// Grid edge between two neighbouring samples: `(i, j)` and `horizontal`
/// meaning `(i, j)-(i+1, j)`, otherwise `(i, j)-(i, j+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridEdge {
    pub i: usize,
    pub j: usize,
    pub horizontal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LineEnd {
    Vortex,
    AntiVortex,
    Boundary,
    /// Adjacent to the masked impurity disk.
    Impurity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscontinuityLine {
    pub edges: Vec<GridEdge>,
    /// Endpoint kinds with the plaquette centre or boundary-edge midpoint.
    pub ends: Vec<(LineEnd, Point2)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMap {
    pub grid: FieldGrid,
    pub edges: Vec<GridEdge>,
    pub lines: Vec<DiscontinuityLine>,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Principal-phase map with its `2 pi` discontinuity edges grouped into lines.
pub fn phase_map(state: &State, window: Window, nx: usize, ny: usize) -> Result<PhaseMap> {
    let grid = FieldGrid::sample(state, window, nx, ny)?.with_phase();
    Ok(analyze_phase(grid))
}

pub fn analyze_phase(grid: FieldGrid) -> PhaseMap {
    let phase = grid.phase.clone().unwrap_or_else(|| grid.values.iter().map(|v| v.and_then(|z| phase_at(z).ok())).collect());
    let (nx, ny) = (grid.nx, grid.ny);
    let at = |i: usize, j: usize| phase[j * nx + i];
    let jumps = |a: Option<f64>, b: Option<f64>| matches!((a, b), (Some(a), Some(b)) if (a - b).abs() > PI);
    let mut edges = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            if i + 1 < nx && jumps(at(i, j), at(i + 1, j)) {
                edges.push(GridEdge { i, j, horizontal: true });
            }
            if j + 1 < ny && jumps(at(i, j), at(i, j + 1)) {
                edges.push(GridEdge { i, j, horizontal: false });
            }
        }
    }
    let lookup: std::collections::HashMap<GridEdge, usize> = edges.iter().enumerate().map(|(k, e)| (*e, k)).collect();
    let mut uf = UnionFind::new(edges.len());
    let plaquette_edges = |i: usize, j: usize| {
        [
            GridEdge { i, j, horizontal: true },
            GridEdge { i: i + 1, j, horizontal: false },
            GridEdge { i, j: j + 1, horizontal: true },
            GridEdge { i, j, horizontal: false },
        ]
    };
    // Per plaquette: crossed edges, joined into one component.
    let mut odd_cells = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let crossed: Vec<usize> = plaquette_edges(i, j).iter().filter_map(|e| lookup.get(e).copied()).collect();
            for w in crossed.windows(2) {
                uf.union(w[0], w[1]);
            }
            let masked = [(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)].iter().any(|&(a, b)| at(a, b).is_none());
            if !crossed.is_empty() && (crossed.len() % 2 == 1 || masked) {
                odd_cells.push((i, j, crossed[0], masked));
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, DiscontinuityLine> = std::collections::BTreeMap::new();
    for (k, &edge) in edges.iter().enumerate() {
        let r = uf.find(k);
        groups.entry(r).or_insert_with(|| DiscontinuityLine { edges: Vec::new(), ends: Vec::new() }).edges.push(edge);
    }
    for &(i, j, e, masked) in &odd_cells {
        let r = uf.find(e);
        let a = grid.point(i, j);
        let b = grid.point(i + 1, j + 1);
        let centre = Point2::new(0.5 * (a.x + b.x), 0.5 * (a.y + b.y));
        let kind = if masked {
            LineEnd::Impurity
        } else {
            match grid.plaquette_winding(i, j) {
                Some(w) if w > 0 => LineEnd::Vortex,
                Some(w) if w < 0 => LineEnd::AntiVortex,
                _ => continue,
            }
        };
        if let Some(g) = groups.get_mut(&r) {
            g.ends.push((kind, centre));
        }
    }
    for (k, e) in edges.iter().enumerate() {
        let on_boundary = if e.horizontal { e.j == 0 || e.j == ny - 1 } else { e.i == 0 || e.i == nx - 1 };
        if on_boundary {
            let a = grid.point(e.i, e.j);
            let b = if e.horizontal { grid.point(e.i + 1, e.j) } else { grid.point(e.i, e.j + 1) };
            let r = uf.find(k);
            if let Some(g) = groups.get_mut(&r) {
                g.ends.push((LineEnd::Boundary, Point2::new(0.5 * (a.x + b.x), 0.5 * (a.y + b.y))));
            }
        }
    }
    let mut lines: Vec<DiscontinuityLine> = groups.into_values().collect();
    for l in &mut lines {
        l.ends.dedup();
    }
    PhaseMap { grid, edges, lines }
}

/// Velocity samples `(point, v)` on a grid; `None` where the velocity is masked
/// (impurity disk or density below the floor).
pub fn quiver(state: &State, window: Window, nx: usize, ny: usize, gauge: GaugePotential) -> Result<FieldGrid> {
    let mut grid = FieldGrid::sample(state, window, nx, ny)?;
    let pts: Vec<(usize, Point2)> = (0..ny)
        .flat_map(|j| (0..nx).map(move |i| (i, j)))
        .map(|(i, j)| (grid.index(i, j), grid.point(i, j)))
        .collect();
    let vels: Vec<Result<Option<[f64; 2]>>> = pts
        .par_iter()
        .map(|&(k, p)| {
            if grid.values[k].is_none() {
                return Ok(None);
            }
            match velocity_at(state, p, gauge, GradMode::Analytic) {
                Ok(v) if v[0].is_finite() && v[1].is_finite() => Ok(Some(v)),
                Ok(_) | Err(Error::VortexProximity { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    grid.velocity = Some(vels.into_iter().collect::<Result<_>>()?);
    Ok(grid)
}
