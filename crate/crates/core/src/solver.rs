//! Complex zeros of the resonance function and their continuation in field.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::green::d_and_derivative;
use crate::model::{landau_level, ComplexEnergy, ModelParams};
use crate::quadrature::ContourSpec;

/// Widths below this are reported with an infinite lifetime.
pub const WIDTH_FLOOR: f64 = 1e-10;

/// Two roots closer than this are treated as one degenerate resonance.
pub const DEGENERACY_RADIUS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    /// Acceptance threshold on `|D|` and on the last Newton step.
    pub tol: f64,
    pub max_iterations: usize,
    /// Run the deflation probe for a nearby second root after convergence.
    pub check_degeneracy: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iterations: 60, check_degeneracy: true }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(invalid("tol", format!("must be finite and > 0, got {}", self.tol)));
        }
        if self.max_iterations == 0 {
            return Err(invalid("max_iterations", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    pub energy: ComplexEnergy,
    pub params: ModelParams,
    /// `-2 Im E`, clipped at zero.
    pub width: f64,
    /// `1 / width`, or `+inf` when the width is below [`WIDTH_FLOOR`].
    pub lifetime: f64,
    /// `|D(E)|` at the accepted root.
    pub residual: f64,
    pub iterations: usize,
}

impl Resonance {
    pub fn new(energy: ComplexEnergy, params: ModelParams, residual: f64, iterations: usize) -> Self {
        let width = (-2.0 * energy.im).max(0.0);
        let lifetime = if width < WIDTH_FLOOR { f64::INFINITY } else { 1.0 / width };
        Self { energy, params, width, lifetime, residual, iterations }
    }

    pub fn field(&self) -> f64 {
        self.params.field
    }
}

fn muller_step(x: [Complex64; 3], f: [Complex64; 3]) -> Option<Complex64> {
    let h1 = x[1] - x[0];
    let h2 = x[2] - x[1];
    let d1 = (f[1] - f[0]) / h1;
    let d2 = (f[2] - f[1]) / h2;
    let a = (d2 - d1) / (h2 + h1);
    let b = a * h2 + d2;
    let disc = (b * b - 4.0 * a * f[2]).sqrt();
    let den = if (b + disc).norm() > (b - disc).norm() { b + disc } else { b - disc };
    if den.norm() == 0.0 {
        return None;
    }
    let step = -2.0 * f[2] / den;
    step.is_finite_c().then_some(x[2] + step)
}

trait FiniteC {
    fn is_finite_c(&self) -> bool;
}

impl FiniteC for Complex64 {
    fn is_finite_c(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// Damped Newton iteration on `D(E)` with a Muller fallback.
pub fn refine_root(guess: ComplexEnergy, params: &ModelParams, contour: &ContourSpec, tol: f64) -> Result<Resonance> {
    refine_root_with(guess, params, contour, &SolverOptions { tol, ..SolverOptions::default() })
}

pub fn refine_root_with(
    guess: ComplexEnergy,
    params: &ModelParams,
    contour: &ContourSpec,
    opts: &SolverOptions,
) -> Result<Resonance> {
    opts.validate()?;
    params.validate()?;
    if !guess.is_finite_c() {
        return Err(invalid("guess", "must be finite"));
    }
    let eval = |e: Complex64| d_and_derivative(e, params, contour);
    let mut e = guess;
    let mut cur = eval(e)?;
    let mut history: Vec<(Complex64, Complex64)> = vec![(e, cur.value)];
    let mut last_step = f64::INFINITY;
    for it in 1..=opts.max_iterations {
        if cur.value.norm() <= opts.tol && last_step <= opts.tol {
            return finish(e, cur.value.norm(), it - 1, params, contour, opts);
        }
        let newton = -cur.value / cur.derivative;
        let mut accepted = None;
        if newton.is_finite_c() {
            let mut lambda = 1.0;
            for _ in 0..8 {
                let trial = e + newton * lambda;
                if let Ok(t) = eval(trial) {
                    if t.value.norm() < cur.value.norm() || t.value.norm() <= opts.tol {
                        accepted = Some((trial, t));
                        break;
                    }
                }
                lambda *= 0.5;
            }
        }
        if accepted.is_none() && history.len() >= 2 {
            let n = history.len();
            let (x0, f0) = if n >= 3 { history[n - 3] } else { (e + newton * 0.1, eval(e + newton * 0.1)?.value) };
            let (x1, f1) = history[n - 2];
            if let Some(trial) = muller_step([x0, x1, e], [f0, f1, cur.value]) {
                if let Ok(t) = eval(trial) {
                    accepted = Some((trial, t));
                }
            }
        }
        let Some((next, val)) = accepted else {
            break;
        };
        last_step = (next - e).norm();
        e = next;
        cur = val;
        history.push((e, cur.value));
    }
    if cur.value.norm() <= opts.tol && last_step <= opts.tol {
        return finish(e, cur.value.norm(), opts.max_iterations, params, contour, opts);
    }
    Err(Error::RootNotConverged {
        guess,
        iterations: history.len() - 1,
        residual: cur.value.norm(),
    })
}

fn finish(
    e: Complex64,
    residual: f64,
    iterations: usize,
    params: &ModelParams,
    contour: &ContourSpec,
    opts: &SolverOptions,
) -> Result<Resonance> {
    if opts.check_degeneracy {
        if let Some(distance) = second_root_distance(e, params, contour)? {
            if distance < DEGENERACY_RADIUS {
                return Err(Error::DegenerateRoot { energy: e, distance });
            }
        }
    }
    Ok(Resonance::new(e, *params, residual, iterations))
}

/// Newton estimate of the nearest other root, from the deflated function
/// `D(E) / (E - E_r)` probed a short distance away from `E_r`.
fn second_root_distance(e_r: Complex64, params: &ModelParams, contour: &ContourSpec) -> Result<Option<f64>> {
    let h = Complex64::new(1e-4, 1e-4);
    let probe = e_r + h;
    let d = d_and_derivative(probe, params, contour)?;
    let g = d.value / h;
    let dg = (d.derivative - g) / h;
    if dg.norm() == 0.0 {
        return Ok(None);
    }
    let second = probe - g / dg;
    Ok(second.is_finite_c().then(|| (second - e_r).norm()))
}

/// Zeros of the Hermite polynomial `H_n`, ascending.
pub fn hermite_zeros(n: u32) -> Vec<f64> {
    let h = |x: f64| {
        let (mut p0, mut p1) = (1.0, 2.0 * x);
        if n == 0 {
            return p0;
        }
        for k in 1..n {
            let p2 = 2.0 * x * p1 - 2.0 * f64::from(k) * p0;
            p0 = p1;
            p1 = p2;
        }
        p1
    };
    let reach = (2.0 * f64::from(n) + 1.0).sqrt() + 1.0;
    let samples = 400 * (n as usize + 1);
    let mut roots = Vec::new();
    let mut xa = -reach;
    let mut fa = h(xa);
    for i in 1..=samples {
        let xb = -reach + 2.0 * reach * i as f64 / samples as f64;
        let fb = h(xb);
        if fa == 0.0 {
            roots.push(xa);
        } else if fa * fb < 0.0 {
            let (mut lo, mut hi) = (xa, xb);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if h(lo) * h(mid) <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        xa = xb;
        fa = fb;
    }
    roots
}

/// Initial guesses for the `n` field-induced resonances emerging from Landau
/// level `n` at the (small) field in `params`.
///
/// In a weak field the level splits as `2n + 1 + F^2 + 2 F z_k`, with `z_k`
/// the zeros of `H_n`; each seed gets a small negative imaginary part.
pub fn seed_guesses(n: u32, params: &ModelParams) -> Result<Vec<ComplexEnergy>> {
    params.validate()?;
    if n == 0 {
        return Err(invalid("n", "no field-induced states emerge from the lowest Landau level"));
    }
    if params.field <= 0.0 {
        return Err(invalid("field", "seeding needs a small positive field"));
    }
    let f = params.field;
    Ok(hermite_zeros(n)
        .into_iter()
        .map(|z| Complex64::new(landau_level(n) + f * f + 2.0 * f * z, -1e-7))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepControl {
    /// Nominal field step; accepted points land on multiples of it from the start.
    pub step: f64,
    /// Smallest step tried before giving up.
    pub min_step: f64,
    /// Largest allowed distance between corrector result and prediction.
    pub max_jump: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        Self { step: 0.005, min_step: 1e-5, max_jump: 0.05 }
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("step", self.step), ("min_step", self.min_step), ("max_jump", self.max_jump)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        if self.min_step > self.step {
            return Err(invalid("min_step", "must not exceed step"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<Resonance>,
    pub step: f64,
    /// Smallest step actually taken.
    pub min_step_used: f64,
    /// Number of rejected corrector attempts.
    pub rejected: usize,
}

impl Trajectory {
    pub fn fields(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.field()).collect()
    }

    /// Linear interpolation of the tracked energy at `field`.
    pub fn energy_at(&self, field: f64) -> Option<Complex64> {
        let pts = &self.points;
        for w in pts.windows(2) {
            let (a, b) = (w[0].field(), w[1].field());
            if (field - a) * (field - b) <= 0.0 && a != b {
                let t = (field - a) / (b - a);
                return Some(w[0].energy + (w[1].energy - w[0].energy) * t);
            }
        }
        pts.iter().find(|p| p.field() == field).map(|p| p.energy)
    }
}

/// Predictor-corrector continuation of `seed` from its field to `target`.
pub fn sweep_field(
    seed: &Resonance,
    target: f64,
    ctrl: &StepControl,
    contour: &ContourSpec,
    opts: &SolverOptions,
) -> Result<Trajectory> {
    ctrl.validate()?;
    if !(target.is_finite() && target >= 0.0) {
        return Err(invalid("target", format!("field must be finite and >= 0, got {target}")));
    }
    let start = seed.field();
    let dir = if target >= start { 1.0 } else { -1.0 };
    let opts = SolverOptions { check_degeneracy: false, ..*opts };
    let mut points = vec![*seed];
    let mut min_used = ctrl.step;
    let mut rejected = 0;
    let mut h = ctrl.step;
    // Nominal grid index of the next output point.
    let mut next_grid = 1usize;
    while (target - points.last().expect("seeded").field()) * dir > 1e-14 {
        let last = *points.last().expect("seeded");
        let grid_field = start + dir * ctrl.step * next_grid as f64;
        let goal = if (target - grid_field) * dir < 0.0 { target } else { grid_field };
        let field = if (goal - last.field()).abs() <= h * (1.0 + 1e-12) { goal } else { last.field() + dir * h };
        let predicted = predict(&points, field);
        let params = last.params.with_field(field);
        let attempt = refine_root_with(predicted, &params, contour, &opts);
        match attempt {
            Ok(res) if (res.energy - predicted).norm() < ctrl.max_jump => {
                min_used = min_used.min((field - last.field()).abs());
                if field == goal {
                    next_grid += 1;
                    h = (h * 2.0).min(ctrl.step);
                }
                points.push(res);
            }
            _ => {
                rejected += 1;
                h *= 0.5;
                if h < ctrl.min_step {
                    return Err(Error::LostTrack { field: last.field(), min_step: ctrl.min_step });
                }
            }
        }
    }
    Ok(Trajectory { points, step: ctrl.step, min_step_used: min_used, rejected })
}

fn predict(points: &[Resonance], field: f64) -> Complex64 {
    let n = points.len();
    if n < 2 {
        return points[n - 1].energy;
    }
    let (a, b) = (points[n - 2], points[n - 1]);
    let t = (field - b.field()) / (b.field() - a.field());
    b.energy + (b.energy - a.energy) * t
}

/// Pairs of trajectories whose energies come within [`DEGENERACY_RADIUS`]
/// at a shared field: `(i, j, field)`.
pub fn detect_collisions(trajectories: &[Trajectory]) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for i in 0..trajectories.len() {
        for j in i + 1..trajectories.len() {
            for p in &trajectories[i].points {
                if let Some(e) = trajectories[j].energy_at(p.field()) {
                    if (e - p.energy).norm() < DEGENERACY_RADIUS {
                        out.push((i, j, p.field()));
                        break;
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stabilization {
    pub field: f64,
    pub resonance: Resonance,
    /// Coarse pre-scan `(field, Im E)` used to bracket the minimum.
    pub prescan: Vec<(f64, f64)>,
    /// Number of golden-section evaluations.
    pub evaluations: usize,
}

/// Field in `bracket` that minimizes `|Im E_r|` along the branch of `seed`.
///
/// A coarse continuation over the bracket locates the discrete minimum,
/// then golden-section search refines it to `tol_field`.
pub fn find_stabilization(
    seed: &Resonance,
    bracket: (f64, f64),
    tol_field: f64,
    ctrl: &StepControl,
    contour: &ContourSpec,
    opts: &SolverOptions,
) -> Result<Stabilization> {
    let (lo, hi) = bracket;
    if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo < hi) {
        return Err(invalid("bracket", format!("need 0 <= lo < hi, got [{lo}, {hi}]")));
    }
    if !(tol_field.is_finite() && tol_field > 0.0) {
        return Err(invalid("tol_field", "must be finite and > 0"));
    }
    let at_lo = if seed.field() == lo {
        *seed
    } else {
        *sweep_field(seed, lo, ctrl, contour, opts)?.points.last().expect("non-empty")
    };
    let scan_ctrl = StepControl { step: ctrl.step.min((hi - lo) / 8.0), ..*ctrl };
    let scan = sweep_field(&at_lo, hi, &scan_ctrl, contour, opts)?;
    let prescan: Vec<(f64, f64)> = scan.points.iter().map(|p| (p.field(), p.energy.im)).collect();
    let imag: Vec<f64> = scan.points.iter().map(|p| p.energy.im.abs()).collect();
    let k = imag
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("non-empty scan");
    if k == 0 || k == imag.len() - 1 {
        return Err(Error::NoMinimumInBracket { lo, hi });
    }

    let mut known: Vec<Resonance> = scan.points.clone();
    let opts_inner = SolverOptions { check_degeneracy: false, ..*opts };
    let mut evaluations = 0;
    let mut eval = |field: f64, known: &mut Vec<Resonance>| -> Result<Resonance> {
        evaluations += 1;
        // Continue from the two nearest known points.
        let mut near: Vec<&Resonance> = known.iter().collect();
        near.sort_by(|a, b| (a.field() - field).abs().total_cmp(&(b.field() - field).abs()));
        let (a, b) = (*near[0], *near[1]);
        let guess = if a.field() != b.field() {
            a.energy + (b.energy - a.energy) * ((field - a.field()) / (b.field() - a.field()))
        } else {
            a.energy
        };
        let r = refine_root_with(guess, &a.params.with_field(field), contour, &opts_inner)?;
        if (r.energy - guess).norm() > ctrl.max_jump {
            return Err(Error::LostTrack { field, min_step: ctrl.min_step });
        }
        known.push(r);
        Ok(r)
    };

    let gr = (5.0_f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (scan.points[k - 1].field(), scan.points[k + 1].field());
    let mut c = b - gr * (b - a);
    let mut d = a + gr * (b - a);
    let mut rc = eval(c, &mut known)?;
    let mut rd = eval(d, &mut known)?;
    while (b - a) > tol_field {
        if rc.energy.im.abs() < rd.energy.im.abs() {
            b = d;
            d = c;
            rd = rc;
            c = b - gr * (b - a);
            rc = eval(c, &mut known)?;
        } else {
            a = c;
            c = d;
            rc = rd;
            d = a + gr * (b - a);
            rd = eval(d, &mut known)?;
        }
    }
    let best = if rc.energy.im.abs() < rd.energy.im.abs() { rc } else { rd };
    let edge_gap = tol_field.max(1e-12);
    if (best.field() - lo).abs() < edge_gap || (hi - best.field()).abs() < edge_gap {
        return Err(Error::MinimumAtBracketEdge {
            edge: if (best.field() - lo).abs() < (hi - best.field()).abs() { lo } else { hi },
        });
    }
    Ok(Stabilization { field: best.field(), resonance: best, prescan, evaluations })
}

/// Real root of `D` on the zero-field axis between `lo` and `hi`, by bisection
/// on `Re D` (which is real there).
pub fn bisect_zero_field(lo: f64, hi: f64, params: &ModelParams, contour: &ContourSpec, tol: f64) -> Result<f64> {
    let p = params.with_field(0.0);
    let f = |e: f64| d_and_derivative(Complex64::new(e, 0.0), &p, contour).map(|d| d.value.re);
    let (mut a, mut b) = (lo, hi);
    let (mut fa, fb) = (f(a)?, f(b)?);
    if fa * fb > 0.0 {
        return Err(invalid("bracket", format!("no sign change of Re D on [{lo}, {hi}]")));
    }
    while b - a > tol {
        let m = 0.5 * (a + b);
        let fm = f(m)?;
        if fa * fm <= 0.0 {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
    }
    Ok(0.5 * (a + b))
}
