//! Adaptive Gauss-Kronrod quadrature along a deformed proper-time path.
//!
//! The semi-infinite `s` integrals are taken along a path that first drops
//! straight down from the origin to `-i depth` and then runs off towards
//! `+inf` (optionally tilted further down). Passing below the real axis
//! realizes the `+i eps` prescription: the poles at `s = k pi` lie above the
//! path, and the continuation of the integrals to `Im E < 0` is automatic as
//! long as the integrand still decays along the leg.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Kronrod abscissae on [0, 1], descending; odd indices are the Gauss nodes.
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_3,
    0.973_906_528_517_171_720_077_964,
    0.930_157_491_355_708_226_001_207_2,
    0.865_063_366_688_984_510_732_096_7,
    0.780_817_726_586_416_897_063_717_6,
    0.679_409_568_299_024_406_234_327_4,
    0.562_757_134_668_604_683_339_000_1,
    0.433_395_394_129_247_190_799_265_9,
    0.294_392_862_701_460_198_131_126_6,
    0.148_874_338_981_631_210_884_826,
    0.0,
];
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_4,
    0.032_558_162_307_964_727_478_818_97,
    0.054_755_896_574_351_996_031_381_3,
    0.075_039_674_810_919_952_767_043_14,
    0.093_125_454_583_697_605_535_065_47,
    0.109_387_158_802_297_641_899_210_6,
    0.123_491_976_262_065_851_077_958_1,
    0.134_709_217_311_473_325_928_054,
    0.142_775_938_577_060_080_797_094_3,
    0.147_739_104_901_338_491_374_841_5,
    0.149_445_554_002_916_905_664_936_5,
];
/// Gauss weights for XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_81,
    0.149_451_349_150_580_593_145_776_3,
    0.219_086_362_515_982_043_995_534_9,
    0.269_266_719_309_996_355_091_226_9,
    0.295_524_224_714_752_870_173_893,
];

/// Path geometry and tolerances for the proper-time integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContourSpec {
    /// Distance below the real axis of the horizontal leg.
    pub depth: f64,
    /// Downward slope of the leg, `s = -i depth + t (1 - i tilt)`.
    pub tilt: f64,
    /// Smallest geometric breakpoint of the descent, as a fraction of `depth`.
    pub near_origin_split: f64,
    /// Length of the leg panels in `t`.
    pub panel_length: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Limit on the total number of Kronrod subintervals.
    pub max_panels: usize,
    /// Largest leg parameter `t` before the tail is declared non-decaying.
    pub truncation_bound: f64,
    /// Overflow guard on the real part of the integrand exponent.
    pub exponent_bound: f64,
}

impl Default for ContourSpec {
    fn default() -> Self {
        Self {
            depth: 0.5,
            tilt: 0.0,
            near_origin_split: 1e-12,
            panel_length: 1.0,
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_panels: 200_000,
            truncation_bound: 5_000.0,
            exponent_bound: crate::kernel::DEFAULT_EXPONENT_BOUND,
        }
    }
}

impl ContourSpec {
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(name, format!("must be finite and > 0, got {v}")))
            }
        };
        pos("depth", self.depth)?;
        pos("near_origin_split", self.near_origin_split)?;
        pos("panel_length", self.panel_length)?;
        pos("rel_tol", self.rel_tol)?;
        pos("abs_tol", self.abs_tol)?;
        pos("truncation_bound", self.truncation_bound)?;
        pos("exponent_bound", self.exponent_bound)?;
        if !(self.tilt.is_finite() && self.tilt >= 0.0) {
            return Err(invalid("tilt", format!("must be finite and >= 0, got {}", self.tilt)));
        }
        if self.depth >= std::f64::consts::PI {
            return Err(invalid("depth", "must stay below pi"));
        }
        if self.near_origin_split >= 1.0 {
            return Err(invalid("near_origin_split", "must be < 1"));
        }
        if self.max_panels == 0 {
            return Err(invalid("max_panels", "must be positive"));
        }
        Ok(())
    }

    /// Start of the leg, `-i depth`.
    pub fn corner(&self) -> Complex64 {
        Complex64::new(0.0, -self.depth)
    }

    /// Unit-time direction of the leg.
    pub fn leg_direction(&self) -> Complex64 {
        Complex64::new(1.0, -self.tilt)
    }
}

/// Value, error estimate and bookkeeping of a path integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult<const N: usize> {
    pub value: [Complex64; N],
    /// Bound on the combined quadrature and truncation error (largest component).
    pub error: f64,
    /// Number of Kronrod subintervals used.
    pub panels: usize,
    /// Leg parameter at which the tail was cut.
    pub truncation: f64,
    /// Kronrod estimate of `int |f|`, largest over components.
    pub l1: f64,
}

#[derive(Debug, Clone, Copy)]
struct Panel<const N: usize> {
    a: Complex64,
    b: Complex64,
    value: [Complex64; N],
    error: [f64; N],
    l1: f64,
}

fn zeros<const N: usize>() -> [Complex64; N] {
    [Complex64::new(0.0, 0.0); N]
}

fn gk21<const N: usize, F>(f: &F, a: Complex64, b: Complex64) -> Result<Panel<N>>
where
    F: Fn(Complex64) -> Result<[Complex64; N]>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let hlen = half.norm();
    let mut fv = [zeros::<N>(); 21];
    fv[10] = f(center)?;
    for j in 0..10 {
        fv[j] = f(center - half * XGK[j])?;
        fv[20 - j] = f(center + half * XGK[j])?;
    }
    let mut kron = zeros::<N>();
    let mut gauss = zeros::<N>();
    let mut resabs = [0.0; N];
    for c in 0..N {
        kron[c] = fv[10][c] * WGK[10];
        resabs[c] = fv[10][c].norm() * WGK[10];
        for j in 0..10 {
            let pair = fv[j][c] + fv[20 - j][c];
            kron[c] += pair * WGK[j];
            resabs[c] += (fv[j][c].norm() + fv[20 - j][c].norm()) * WGK[j];
            if j % 2 == 1 {
                gauss[c] += pair * WG[j / 2];
            }
        }
    }
    let mut value = zeros::<N>();
    let mut error = [0.0; N];
    let mut l1 = 0.0_f64;
    for c in 0..N {
        let mean = kron[c] * 0.5;
        let mut resasc = (fv[10][c] - mean).norm() * WGK[10];
        for j in 0..10 {
            resasc += ((fv[j][c] - mean).norm() + (fv[20 - j][c] - mean).norm()) * WGK[j];
        }
        let mut err = ((kron[c] - gauss[c]) * hlen).norm();
        let resasc = resasc * hlen;
        let resabs = resabs[c] * hlen;
        if resasc != 0.0 && err != 0.0 {
            err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
        }
        err = err.max(50.0 * f64::EPSILON * resabs);
        if !kron[c].re.is_finite() || !kron[c].im.is_finite() {
            err = f64::INFINITY;
        }
        value[c] = kron[c] * half;
        error[c] = err;
        l1 = l1.max(resabs);
    }
    Ok(Panel { a, b, value, error, l1 })
}

fn sum_panels<const N: usize>(panels: &[Panel<N>]) -> ([Complex64; N], [f64; N], f64) {
    let mut v = zeros::<N>();
    let mut e = [0.0; N];
    let mut l1 = 0.0;
    for p in panels {
        for c in 0..N {
            v[c] += p.value[c];
            e[c] += p.error[c];
        }
        l1 += p.l1;
    }
    (v, e, l1)
}

fn converged<const N: usize>(v: &[Complex64; N], e: &[f64; N], abs_tol: f64, rel_tol: f64) -> bool {
    (0..N).all(|c| e[c] <= abs_tol.max(rel_tol * v[c].norm()))
}

/// Adaptive integral of `f` along the straight segment from `a` to `b`.
///
/// The segment is bisected at the panel with the largest error until every
/// component meets `max(abs_tol, rel_tol |value|)` or `max_panels` is spent.
pub fn integrate_segment<const N: usize, F>(
    f: &F,
    a: Complex64,
    b: Complex64,
    abs_tol: f64,
    rel_tol: f64,
    max_panels: usize,
) -> Result<QuadResult<N>>
where
    F: Fn(Complex64) -> Result<[Complex64; N]>,
{
    let mut panels = vec![gk21(f, a, b)?];
    loop {
        let (v, e, l1) = sum_panels(&panels);
        if converged(&v, &e, abs_tol, rel_tol) {
            return Ok(QuadResult {
                value: v,
                error: e.iter().copied().fold(0.0, f64::max),
                panels: panels.len(),
                truncation: 0.0,
                l1,
            });
        }
        let worst = (0..panels.len())
            .max_by(|&i, &j| {
                let ei = panels[i].error.iter().copied().fold(0.0, f64::max);
                let ej = panels[j].error.iter().copied().fold(0.0, f64::max);
                ei.total_cmp(&ej)
            })
            .expect("non-empty panel list");
        let p = panels[worst];
        let scale = (p.b - p.a).norm() / (b - a).norm().max(f64::MIN_POSITIVE);
        if panels.len() >= max_panels || scale < 1e-13 {
            let err = e.iter().copied().fold(0.0, f64::max);
            let target = (0..N)
                .map(|c| abs_tol.max(rel_tol * v[c].norm()))
                .fold(f64::INFINITY, f64::min);
            return Err(Error::NonConvergence {
                panels: panels.len(),
                error: err,
                target,
            });
        }
        let mid = 0.5 * (p.a + p.b);
        panels[worst] = gk21(f, p.a, mid)?;
        panels.push(gk21(f, mid, p.b)?);
    }
}

/// Integral of `f` from `0` to `infinity` along the deformed path of `contour`.
///
/// The descent `0 -> -i depth` is split geometrically towards the origin; the
/// leg is covered panel by panel until two consecutive panels carry an `L1`
/// mass below the tail tolerance. Fails with [`Error::TailNotDecaying`] when
/// that does not happen before `truncation_bound`.
pub fn integrate_deformed<const N: usize, F>(f: &F, contour: &ContourSpec) -> Result<QuadResult<N>>
where
    F: Fn(Complex64) -> Result<[Complex64; N]>,
{
    contour.validate()?;
    let mut result = integrate_descent(f, contour)?;
    let leg = integrate_leg(f, contour, contour.corner(), result.panels)?;
    for c in 0..N {
        result.value[c] += leg.value[c];
    }
    result.error += leg.error;
    result.panels += leg.panels;
    result.truncation = leg.truncation;
    result.l1 += leg.l1;
    Ok(result)
}

/// Integral over the vertical descent `0 -> -i depth` only.
pub fn integrate_descent<const N: usize, F>(f: &F, contour: &ContourSpec) -> Result<QuadResult<N>>
where
    F: Fn(Complex64) -> Result<[Complex64; N]>,
{
    let mut value = zeros::<N>();
    let mut error = 0.0;
    let mut l1 = 0.0;
    let mut used = 0;
    let mut lo = 0.0;
    let mut hi = contour.near_origin_split;
    loop {
        let hi_c = hi.min(1.0);
        let seg = integrate_segment(
            f,
            -I * (lo * contour.depth),
            -I * (hi_c * contour.depth),
            contour.abs_tol,
            contour.rel_tol,
            contour.max_panels.saturating_sub(used).max(1),
        )?;
        for (v, &sv) in value.iter_mut().zip(&seg.value) {
            *v += sv;
        }
        error += seg.error;
        l1 += seg.l1;
        used += seg.panels;
        if hi_c >= 1.0 {
            break;
        }
        lo = hi_c;
        hi = hi_c * 10.0;
    }
    Ok(QuadResult { value, error, panels: used, truncation: 0.0, l1 })
}

/// Integral along the leg starting at `start` in direction `contour.leg_direction()`.
pub fn integrate_leg<const N: usize, F>(
    f: &F,
    contour: &ContourSpec,
    start: Complex64,
    already_used: usize,
) -> Result<QuadResult<N>>
where
    F: Fn(Complex64) -> Result<[Complex64; N]>,
{
    let dir = contour.leg_direction();
    let mut value = zeros::<N>();
    let mut error = 0.0;
    let mut used = already_used;
    let mut t = 0.0;
    let mut quiet = 0;
    let mut last_l1 = f64::INFINITY;
    let mut total_l1 = 0.0;
    while t < contour.truncation_bound {
        let t1 = (t + contour.panel_length).min(contour.truncation_bound);
        let remaining = contour.max_panels.saturating_sub(used);
        if remaining == 0 {
            return Err(Error::NonConvergence {
                panels: used,
                error: f64::INFINITY,
                target: contour.abs_tol,
            });
        }
        let pan = integrate_segment(
            f,
            start + dir * t,
            start + dir * t1,
            contour.abs_tol,
            contour.rel_tol,
            remaining,
        )?;
        for (v, &pv) in value.iter_mut().zip(&pan.value) {
            *v += pv;
        }
        total_l1 += pan.l1;
        error += pan.error;
        used += pan.panels;
        t = t1;
        let tail_tol = (0..N)
            .map(|c| contour.abs_tol.max(contour.rel_tol * value[c].norm()))
            .fold(f64::INFINITY, f64::min);
        // The absolute mass, so cancellation inside a panel cannot fake decay.
        let bound = pan.l1 + pan.error;
        if bound < 0.1 * tail_tol {
            quiet += 1;
            if quiet >= 2 {
                error += bound;
                return Ok(QuadResult {
                    value,
                    error,
                    panels: used - already_used,
                    truncation: t,
                    l1: total_l1,
                });
            }
        } else {
            quiet = 0;
        }
        last_l1 = bound;
    }
    Err(Error::TailNotDecaying {
        bound: contour.truncation_bound,
        tail: last_l1,
    })
}
