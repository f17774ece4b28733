//! The subcommands. Each task writes its data files into the run's output
//! directory and appends a record for the manifest.

use std::f64::consts::PI;
use std::time::Instant;

use crossfield::vortex::{circulation_adaptive, default_circle, LineEnd, ORIGIN_GUARD};
use crossfield::{
    circulation, d_value, find_stabilization, locate_vortices, phase_map, refine_root_with, seed_guesses,
    sweep_field, track_vortices, CirculationMethod, ContourSpec, Error, GaugePotential, ModelParams, Point2,
    Resonance, State, Trajectory, Vortex, Window,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::RunConfig;
use crate::output::{num, Baseline, OutputDir, Table, TaskRecord};
use crate::svg;

/// Failure classes with their process exit codes.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Numeric(Error),
    Io(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numeric(Error::InvalidParameter { .. }) => 2,
            Failure::Numeric(Error::LostTrack { .. } | Error::TrackLost { .. }) => 5,
            Failure::Numeric(_) => 3,
            Failure::Io(_) => 4,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Numeric(e) => write!(f, "numerical failure: {e}"),
            Failure::Io(m) => write!(f, "I/O error: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Numeric(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

pub type TaskResult<T> = std::result::Result<T, Failure>;

/// Reference values for the default parameter set (n = 3, E_B = -6.4).
pub mod reference {
    pub const STABILIZATION_FIELD: f64 = 0.1555;
    pub const STABILIZATION_TOL: f64 = 0.002;
    pub const TABLE_FIELD: f64 = 0.1555;
    pub const TABLE_X: [f64; 5] = [-3.943428, -1.148087, 0.216306, 1.347754, 3.610649];
    pub const TABLE_CHARGE: [i32; 5] = [-1, 1, 1, 1, -1];
    pub const TABLE_TOL: f64 = 1e-3;
}

pub struct Run<'a> {
    pub cfg: &'a RunConfig,
    pub out: OutputDir,
    pub tasks: Vec<TaskRecord>,
    pub baselines: Vec<Baseline>,
    pub verbose: bool,
    /// Working resonance shared by the wavefunction-based tasks.
    state: Option<Resonance>,
    stabilization: Option<f64>,
}

impl<'a> Run<'a> {
    pub fn new(cfg: &'a RunConfig, out: OutputDir, verbose: bool) -> Self {
        Self { cfg, out, tasks: Vec::new(), baselines: Vec::new(), verbose, state: None, stabilization: None }
    }

    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("[crossfield] {}", msg.as_ref());
        }
    }

    fn params(&self) -> ModelParams {
        self.cfg.model.params()
    }

    fn contour(&self) -> ContourSpec {
        self.cfg.contour
    }

    fn record(&mut self, name: &str, started: Instant, results: serde_json::Value) {
        let wall = started.elapsed().as_secs_f64();
        self.log(format!("{name} finished in {wall:.2} s"));
        self.tasks.push(TaskRecord { name: name.to_string(), wall_clock_s: wall, results });
    }

    fn is_default_model(&self) -> bool {
        let m = &self.cfg.model;
        m.level == 3 && m.binding_energy == -6.4
    }

    /// Resonance used by wavefunction tasks, resolved once per run.
    fn working_state(&mut self) -> TaskResult<Resonance> {
        if let Some(r) = self.state {
            return Ok(r);
        }
        let params = self.params();
        let contour = self.contour();
        let r = match self.cfg.state.energy {
            Some([re, im]) => {
                let e = Complex64::new(re, im);
                Resonance::new(e, params, d_value(e, &params, &contour)?.norm(), 0)
            }
            None => {
                let guess = match self.cfg.state.seed {
                    Some([re, im]) => Complex64::new(re, im),
                    None => central_seed(self.cfg.model.level, &params)?,
                };
                refine_root_with(guess, &params, &contour, &self.cfg.solver)?
            }
        };
        self.log(format!("working resonance E = {} at field {}", r.energy, r.field()));
        self.state = Some(r);
        Ok(r)
    }

    fn working_wavefunction(&mut self) -> TaskResult<State> {
        let r = self.working_state()?;
        Ok(State::new(r.energy, r.params, self.contour()))
    }

    pub fn resonance(&mut self) -> TaskResult<()> {
        let t0 = Instant::now();
        let params = self.params();
        let contour = self.contour();
        let fields = self.cfg.resonance.fields.clone().unwrap_or_else(|| vec![params.field]);
        let mut table = Table::new(
            "resonance roots of D",
            &[
                ("field", "scaled"),
                ("re_energy", "scaled"),
                ("im_energy", "scaled"),
                ("width", "scaled"),
                ("lifetime", "scaled"),
                ("residual", "|D|"),
                ("iterations", ""),
            ],
        );
        let mut rows: Vec<Resonance> = Vec::new();
        let mut duplicates = 0;
        for &field in &fields {
            let p = params.with_field(field);
            let seeds: Vec<Complex64> = match &self.cfg.resonance.seeds {
                Some(s) => s.iter().map(|&[re, im]| Complex64::new(re, im)).collect(),
                None => seed_guesses(self.cfg.model.level, &p)?,
            };
            for seed in seeds {
                let r = refine_root_with(seed, &p, &contour, &self.cfg.solver)?;
                if rows.iter().any(|q| q.field() == field && (q.energy - r.energy).norm() < 1e-8) {
                    duplicates += 1;
                    continue;
                }
                rows.push(r);
            }
        }
        for r in &rows {
            table.row(vec![
                num(r.field()),
                num(r.energy.re),
                num(r.energy.im),
                num(r.width),
                num(r.lifetime),
                num(r.residual),
                r.iterations.to_string(),
            ]);
        }
        self.out.write_table("resonance.csv", &table)?;
        let results = json!({
            "roots": rows.iter().map(|r| json!({
                "field": r.field(), "re": r.energy.re, "im": r.energy.im, "residual": r.residual,
            })).collect::<Vec<_>>(),
            "duplicate_roots_merged": duplicates,
        });
        self.record("resonance", t0, results);
        Ok(())
    }

    pub fn sweep(&mut self) -> TaskResult<Trajectory> {
        let t0 = Instant::now();
        let s = self.cfg.sweep;
        let contour = self.contour();
        let p0 = self.params().with_field(s.start);
        let guess = match s.seed {
            Some([re, im]) => Complex64::new(re, im),
            None => central_seed(self.cfg.model.level, &p0)?,
        };
        let seed = refine_root_with(guess, &p0, &contour, &self.cfg.solver)?;
        self.log(format!("sweep seed E = {} at field {}", seed.energy, s.start));
        let traj = sweep_field(&seed, s.stop, &s.control(), &contour, &self.cfg.solver)?;
        let mut raw = Table::new("resonance pole along the field sweep", &[("field", "scaled"), ("re_energy", "scaled"), ("im_energy", "scaled")]);
        let mut tr = Table::new(
            "display transform sign(Im E) |Im E|^(1/5)",
            &[("field", "scaled"), ("re_energy", "scaled"), ("im_energy_root5", "scaled^(1/5)")],
        );
        for p in &traj.points {
            raw.row(vec![num(p.field()), num(p.energy.re), num(p.energy.im)]);
            tr.row(vec![num(p.field()), num(p.energy.re), num(root5(p.energy.im))]);
        }
        self.out.write_table("sweep.csv", &raw)?;
        self.out.write_table("sweep_transformed.csv", &tr)?;
        let mut results = json!({
            "points": traj.points.len(),
            "rejected_steps": traj.rejected,
            "min_step_used": traj.min_step_used,
            "max_residual": traj.points.iter().map(|p| p.residual).fold(0.0, f64::max),
        });
        if let Some(b) = s.stabilization.filter(|b| b.enabled) {
            let start = traj
                .points
                .iter()
                .rfind(|p| (p.field() - b.lo) * (s.stop - s.start).signum() <= 0.0)
                .copied()
                .unwrap_or(seed);
            let st = find_stabilization(&start, (b.lo, b.hi), b.tol, &s.control(), &contour, &self.cfg.solver)?;
            let r = st.resonance;
            let mut t = Table::new(
                "field of minimal |Im E| and the resonance there",
                &[("field", "scaled"), ("re_energy", "scaled"), ("im_energy", "scaled"), ("width", "scaled"), ("lifetime", "scaled")],
            );
            t.row(vec![num(st.field), num(r.energy.re), num(r.energy.im), num(r.width), num(r.lifetime)]);
            self.out.write_table("stabilization.csv", &t)?;
            results["stabilization"] = json!({
                "field": st.field, "field_tol": b.tol, "re": r.energy.re, "im": r.energy.im,
                "residual": r.residual, "evaluations": st.evaluations,
            });
            if self.is_default_model() {
                self.baselines.push(Baseline::new(
                    "stabilization field",
                    st.field,
                    reference::STABILIZATION_FIELD,
                    reference::STABILIZATION_TOL,
                    "reference",
                ));
            }
            self.stabilization = Some(st.field);
        }
        if s.render {
            let im: Vec<(f64, f64)> = traj.points.iter().map(|p| (p.field(), p.energy.im)).collect();
            self.out.write("sweep_im.svg", &svg::line_plot("Im E along the sweep", "field", "Im E", &[im]))?;
            let path: Vec<(f64, f64)> = traj.points.iter().map(|p| (p.energy.re, root5(p.energy.im))).collect();
            self.out.write("sweep_path.svg", &svg::line_plot("pole path", "Re E", "sign(Im E)|Im E|^(1/5)", &[path]))?;
        }
        self.record("sweep", t0, results);
        Ok(traj)
    }

    pub fn wavefunction(&mut self) -> TaskResult<()> {
        let t0 = Instant::now();
        let state = self.working_wavefunction()?;
        let w = self.cfg.wavefunction;
        let xs: Vec<f64> = (0..w.points).map(|k| w.x_min + (w.x_max - w.x_min) * k as f64 / (w.points - 1) as f64).collect();
        let vals = eval_par(&xs, |&x| {
            let p = Point2::new(x, w.y);
            if p.norm() <= ORIGIN_GUARD { Ok(None) } else { state.psi(p).map(Some) }
        })?;
        let mut table = Table::new(
            &format!("retarded wavefunction along y = {}", num(w.y)),
            &[("x", "scaled"), ("abs_psi", ""), ("re_psi", ""), ("im_psi", "")],
        );
        table.comment(format!("energy = {} {}", num(state.energy.re), num(state.energy.im)));
        for (x, v) in xs.iter().zip(&vals) {
            match v {
                Some(z) => table.row(vec![num(*x), num(z.norm()), num(z.re), num(z.im)]),
                None => table.row(vec![num(*x), "nan".into(), "nan".into(), "nan".into()]),
            }
        }
        self.out.write_table("wavefunction.csv", &table)?;
        let zeros = slice_zeros(&state, &xs, &vals, w.y)?;
        let mut zt = Table::new("near-zeros of |psi| along the slice", &[("x", "scaled"), ("abs_psi", "")]);
        for &(x, m) in &zeros {
            zt.row(vec![num(x), num(m)]);
        }
        self.out.write_table("wavefunction_zeros.csv", &zt)?;
        let results = json!({
            "energy": [state.energy.re, state.energy.im],
            "zeros": zeros.iter().map(|z| z.0).collect::<Vec<_>>(),
        });
        self.record("wavefunction", t0, results);
        Ok(())
    }

    pub fn vortices(&mut self) -> TaskResult<Vec<Vortex>> {
        let t0 = Instant::now();
        let state = self.working_wavefunction()?;
        let v = self.cfg.vortices;
        let scan = locate_vortices(&state, v.window, v.nx, v.ny, &v.options)?;
        if let Some((cell, err)) = scan.failures.into_iter().next() {
            self.log(format!("refinement failed near {cell:?}"));
            return Err(err.into());
        }
        let vortices = scan.vortices;
        let mut table = Table::new(
            "vortices of the retarded wavefunction",
            &[("index", ""), ("x", "scaled"), ("y", "scaled"), ("charge", "2pi"), ("residual", "|psi|")],
        );
        table.comment(format!("field = {}", num(state.params.field)));
        for (k, vx) in vortices.iter().enumerate() {
            table.row(vec![k.to_string(), num(vx.position.x), num(vx.position.y), vx.charge.to_string(), num(vx.refine_residual)]);
        }
        self.out.write_table("vortices.csv", &table)?;
        let mut results = json!({
            "count": vortices.len(),
            "flagged_cells": scan.flagged,
            "zero_tol_abs": scan.zero_tol_abs,
            "vortices": vortices.iter().map(|v| json!({"x": v.position.x, "y": v.position.y, "charge": v.charge})).collect::<Vec<_>>(),
        });
        if self.is_default_model() && state.params.field == reference::TABLE_FIELD {
            for (k, &x) in reference::TABLE_X.iter().enumerate() {
                let near = vortices.iter().min_by(|a, b| (a.position.x - x).abs().total_cmp(&(b.position.x - x).abs()));
                let got = near.map_or(f64::NAN, |v| v.position.x);
                let mut b = Baseline::new(format!("vortex {k} x"), got, x, reference::TABLE_TOL, "reference");
                b.pass &= near.is_some_and(|v| v.charge == reference::TABLE_CHARGE[k]);
                self.baselines.push(b);
            }
        }
        if self.cfg.circulation.contours > 0 {
            results["circulation"] = self.circulation_audit(&state, &vortices)?;
        }
        if let Some(t) = v.track.filter(|t| t.enabled) {
            results["track"] = self.track(&state, t)?;
        }
        self.record("vortices", t0, results);
        Ok(vortices)
    }

    fn circulation_audit(&mut self, state: &State, vortices: &[Vortex]) -> TaskResult<serde_json::Value> {
        let contours = audit_contours(self.cfg.seed, self.cfg.circulation.contours, &self.cfg.vortices.window, vortices);
        let evaluated: Vec<TaskResult<(f64, f64)>> = contours
            .iter()
            .map(|c| {
                let poly = default_circle(c.center, c.radius);
                let line = circulation(state, &poly, GaugePotential::CONSISTENT, CirculationMethod::VelocityLineIntegral)?;
                let wind = circulation_adaptive(state, &poly, GaugePotential::CONSISTENT, 4)?;
                Ok((line.gamma_over_2pi, wind.gamma_over_2pi))
            })
            .collect();
        let mut table = Table::new(
            "circulation around audit circles",
            &[
                ("index", ""),
                ("center_x", "scaled"),
                ("center_y", "scaled"),
                ("radius", "scaled"),
                ("enclosed_charge", "2pi"),
                ("velocity_integral", "2pi"),
                ("phase_winding", "2pi"),
                ("deviation", "2pi"),
            ],
        );
        let mut worst: f64 = 0.0;
        let mut mismatched = 0;
        for (k, (c, r)) in contours.iter().zip(evaluated).enumerate() {
            let (g, w) = r?;
            let dev = (g - g.round()).abs();
            worst = worst.max(dev);
            if g.round() as i64 != c.enclosed {
                mismatched += 1;
            }
            table.row(vec![
                k.to_string(),
                num(c.center.x),
                num(c.center.y),
                num(c.radius),
                c.enclosed.to_string(),
                num(g),
                num(w),
                num(dev),
            ]);
        }
        self.out.write_table("circulation.csv", &table)?;
        Ok(json!({"contours": contours.len(), "max_deviation": worst, "charge_mismatches": mismatched}))
    }

    fn track(&mut self, state: &State, t: crate::config::TrackConfig) -> TaskResult<serde_json::Value> {
        let contour = self.contour();
        let ctrl = crossfield::StepControl { step: t.step, ..self.cfg.sweep.control() };
        let here = self.working_state()?;
        let at_start = if here.field() == t.start {
            here
        } else {
            *sweep_field(&here, t.start, &ctrl, &contour, &self.cfg.solver)?.points.last().expect("non-empty")
        };
        let traj = sweep_field(&at_start, t.stop, &ctrl, &contour, &self.cfg.solver)?;
        let v = self.cfg.vortices;
        let nx = grid_count(t.window.width(), v.window.width(), v.nx);
        let ny = grid_count(t.window.height(), v.window.height(), v.ny);
        let st0 = State::new(at_start.energy, at_start.params, state.contour);
        let scan = locate_vortices(&st0, t.window, nx, ny, &v.options)?;
        if let Some((_, err)) = scan.failures.into_iter().next() {
            return Err(err.into());
        }
        self.log(format!("tracking {} vortices over [{}, {}]", scan.vortices.len(), t.start, t.stop));
        let paths = track_vortices(&traj, &scan.vortices, t.window, &contour, &v.options, &t.options)?;
        let mut crossings = Vec::new();
        for (k, path) in paths.iter().enumerate() {
            let mut table = Table::new(
                &format!("path of vortex {k} over the field sweep"),
                &[("field", "scaled"), ("x", "scaled"), ("y", "scaled"), ("charge", "2pi")],
            );
            for p in &path.points {
                table.row(vec![num(p.field), num(p.vortex.position.x), num(p.vortex.position.y), p.vortex.charge.to_string()]);
            }
            self.out.write_table(&format!("vortex_path_{k}.csv"), &table)?;
            crossings.push(y_crossings(path.points.iter().map(|p| (p.field, p.vortex.position.y))));
        }
        if t.render {
            let series: Vec<Vec<(f64, f64)>> =
                paths.iter().map(|p| p.points.iter().map(|q| (q.field, q.vortex.position.y)).collect()).collect();
            self.out.write("vortex_y.svg", &svg::line_plot("vortex y against field", "field", "y", &series))?;
        }
        if let Some(star) = self.stabilization {
            for (k, c) in crossings.iter().enumerate() {
                let nearest = c.iter().copied().min_by(|a, b| (a - star).abs().total_cmp(&(b - star).abs()));
                self.baselines.push(Baseline::new(
                    format!("vortex {k} y crossing field"),
                    nearest.unwrap_or(f64::NAN),
                    star,
                    reference::STABILIZATION_TOL,
                    "derived",
                ));
            }
        }
        Ok(json!({
            "vortices": paths.len(),
            "steps": traj.points.len(),
            "y_zero_crossings": crossings,
            "charge_changes": paths.iter().map(|p| p.charge_changes.clone()).collect::<Vec<_>>(),
        }))
    }

    pub fn phase_map(&mut self) -> TaskResult<()> {
        let t0 = Instant::now();
        let state = self.working_wavefunction()?;
        let g = self.cfg.phase_map;
        let map = phase_map(&state, g.window, g.nx, g.ny)?;
        let phase = map.grid.phase.clone().expect("phase layer");
        let mut table = Table::new(
            "principal phase S in (-pi, pi], row-major in y",
            &[("i", ""), ("j", ""), ("x", "scaled"), ("y", "scaled"), ("phase", "rad")],
        );
        for j in 0..g.ny {
            for i in 0..g.nx {
                let p = map.grid.point(i, j);
                let s = phase[map.grid.index(i, j)].map_or_else(|| "nan".to_string(), num);
                table.row(vec![i.to_string(), j.to_string(), num(p.x), num(p.y), s]);
            }
        }
        self.out.write_table("phase_map.csv", &table)?;
        let mut edges = Table::new(
            "grid edges crossed by a 2pi phase jump, grouped into lines",
            &[("line", ""), ("i", ""), ("j", ""), ("orientation", ""), ("x_mid", "scaled"), ("y_mid", "scaled")],
        );
        let mut lines = Table::new("discontinuity lines and their end points", &[("line", ""), ("edges", ""), ("end", ""), ("x", "scaled"), ("y", "scaled")]);
        for (k, line) in map.lines.iter().enumerate() {
            for e in &line.edges {
                let a = map.grid.point(e.i, e.j);
                let b = if e.horizontal { map.grid.point(e.i + 1, e.j) } else { map.grid.point(e.i, e.j + 1) };
                edges.row(vec![
                    k.to_string(),
                    e.i.to_string(),
                    e.j.to_string(),
                    if e.horizontal { "h".into() } else { "v".into() },
                    num(0.5 * (a.x + b.x)),
                    num(0.5 * (a.y + b.y)),
                ]);
            }
            for (end, p) in &line.ends {
                let name = match end {
                    LineEnd::Vortex => "vortex",
                    LineEnd::AntiVortex => "anti-vortex",
                    LineEnd::Boundary => "boundary",
                    LineEnd::Impurity => "impurity",
                };
                lines.row(vec![k.to_string(), line.edges.len().to_string(), name.into(), num(p.x), num(p.y)]);
            }
        }
        self.out.write_table("phase_edges.csv", &edges)?;
        self.out.write_table("phase_lines.csv", &lines)?;
        if g.render {
            let w = g.window;
            self.out.write("phase_map.svg", &svg::phase_plot("phase of psi", [w.x_min, w.x_max, w.y_min, w.y_max], g.nx, g.ny, &phase))?;
        }
        let results = json!({
            "edges": map.edges.len(),
            "lines": map.lines.len(),
            "line_lengths": map.lines.iter().map(|l| l.edges.len()).collect::<Vec<_>>(),
        });
        self.record("phase-map", t0, results);
        Ok(())
    }

    pub fn quiver(&mut self) -> TaskResult<()> {
        let t0 = Instant::now();
        let state = self.working_wavefunction()?;
        let g = self.cfg.quiver;
        let grid = crossfield::vortex::quiver(&state, g.window, g.nx, g.ny, GaugePotential::CONSISTENT)?;
        let vel = grid.velocity.clone().expect("velocity layer");
        let mut table = Table::new("probability velocity; masked points are nan", &[("x", "scaled"), ("y", "scaled"), ("vx", "scaled"), ("vy", "scaled")]);
        let mut arrows = Vec::new();
        let mut masked = 0;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let p = grid.point(i, j);
                match vel[grid.index(i, j)] {
                    Some([vx, vy]) => {
                        table.row(vec![num(p.x), num(p.y), num(vx), num(vy)]);
                        arrows.push((p.x, p.y, vx, vy));
                    }
                    None => {
                        masked += 1;
                        table.row(vec![num(p.x), num(p.y), "nan".into(), "nan".into()]);
                    }
                }
            }
        }
        self.out.write_table("quiver.csv", &table)?;
        if g.render {
            let w = g.window;
            self.out.write("quiver.svg", &svg::quiver_plot("probability velocity", [w.x_min, w.x_max, w.y_min, w.y_max], &arrows))?;
        }
        self.record("quiver", t0, json!({"points": g.nx * g.ny, "masked": masked}));
        Ok(())
    }

    /// Every task in sequence with the configured parameters.
    pub fn reproduce(&mut self) -> TaskResult<()> {
        self.sweep()?;
        self.resonance()?;
        self.wavefunction()?;
        self.vortices()?;
        self.phase_map()?;
        self.quiver()?;
        Ok(())
    }
}

fn root5(im: f64) -> f64 {
    im.signum() * im.abs().powf(0.2)
}

/// Perturbative seed of level `n` closest to the Landau level plus the Stark shift.
pub fn central_seed(n: u32, params: &ModelParams) -> crossfield::Result<Complex64> {
    let target = crossfield::landau_level(n) + params.field * params.field;
    let seeds = seed_guesses(n, params)?;
    Ok(seeds
        .into_iter()
        .min_by(|a, b| (a.re - target).abs().total_cmp(&(b.re - target).abs()))
        .expect("level has at least one seed"))
}

fn eval_par<T: Sync, U: Send>(xs: &[T], f: impl Fn(&T) -> crossfield::Result<U> + Sync + Send) -> crossfield::Result<Vec<U>> {
    use rayon::prelude::*;
    xs.par_iter().map(f).collect::<Vec<_>>().into_iter().collect()
}

/// Local minima of `|psi|` along the slice across which the phase turns by
/// more than `pi / 2`, refined by golden section.
fn slice_zeros(state: &State, xs: &[f64], vals: &[Option<Complex64>], y: f64) -> crossfield::Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for k in 1..xs.len().saturating_sub(1) {
        let (Some(a), Some(b), Some(c)) = (vals[k - 1], vals[k], vals[k + 1]) else { continue };
        if !(b.norm() <= a.norm() && b.norm() < c.norm()) {
            continue;
        }
        let turn = (c / a).arg().abs();
        if turn < PI / 2.0 {
            continue;
        }
        let f = |x: f64| state.psi(Point2::new(x, y)).map(|z| z.norm());
        let gr = (5.0_f64.sqrt() - 1.0) / 2.0;
        let (mut lo, mut hi) = (xs[k - 1], xs[k + 1]);
        let mut p = hi - gr * (hi - lo);
        let mut q = lo + gr * (hi - lo);
        let (mut fp, mut fq) = (f(p)?, f(q)?);
        while hi - lo > 1e-10 {
            if fp < fq {
                hi = q;
                q = p;
                fq = fp;
                p = hi - gr * (hi - lo);
                fp = f(p)?;
            } else {
                lo = p;
                p = q;
                fp = fq;
                q = lo + gr * (hi - lo);
                fq = f(q)?;
            }
        }
        let x = 0.5 * (lo + hi);
        out.push((x, f(x)?));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
struct AuditCircle {
    center: Point2,
    radius: f64,
    enclosed: i64,
}

/// Circles for the circulation audit: first one enclosing no vortex, then one
/// enclosing all of them, then random admissible circles.
fn audit_contours(seed: u64, count: usize, window: &Window, vortices: &[Vortex]) -> Vec<AuditCircle> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clearance = 0.05;
    let inner = Window {
        x_min: window.x_min + 0.2,
        x_max: window.x_max - 0.2,
        y_min: window.y_min + 0.2,
        y_max: window.y_max - 0.2,
    };
    let admissible = |c: Point2, r: f64| {
        let inside = c.x - r >= inner.x_min && c.x + r <= inner.x_max && c.y - r >= inner.y_min && c.y + r <= inner.y_max;
        let clear = vortices.iter().all(|v| (v.position.dist(c) - r).abs() > clearance);
        inside && clear && (c.norm() - r).abs() > ORIGIN_GUARD + clearance
    };
    let enclosed = |c: Point2, r: f64| vortices.iter().filter(|v| v.position.dist(c) < r).map(|v| i64::from(v.charge)).sum();
    let mut out = Vec::new();
    let mut tries = 0;
    while out.len() < count && tries < 100_000 {
        tries += 1;
        let want_empty = out.is_empty();
        let want_all = out.len() == 1 && !vortices.is_empty();
        let (c, r) = if want_all {
            let reach = vortices.iter().map(|v| v.position.norm()).fold(0.0, f64::max);
            (Point2::ORIGIN, reach + 0.1 + rng.random::<f64>() * 0.3)
        } else {
            let c = Point2::new(rng.random_range(inner.x_min..inner.x_max), rng.random_range(inner.y_min..inner.y_max));
            (c, rng.random_range(0.1..2.0))
        };
        if !admissible(c, r) {
            continue;
        }
        let n: i64 = enclosed(c, r);
        let inside = vortices.iter().filter(|v| v.position.dist(c) < r).count();
        if want_empty && inside != 0 {
            continue;
        }
        out.push(AuditCircle { center: c, radius: r, enclosed: n });
    }
    out
}

fn grid_count(len: f64, ref_len: f64, ref_n: usize) -> usize {
    let dx = ref_len / (ref_n - 1) as f64;
    ((len / dx).round() as usize + 1).max(2)
}

/// Fields at which `y(field)` changes sign, by linear interpolation.
pub fn y_crossings(points: impl Iterator<Item = (f64, f64)>) -> Vec<f64> {
    let pts: Vec<(f64, f64)> = points.collect();
    let mut out = Vec::new();
    for w in pts.windows(2) {
        let ((f0, y0), (f1, y1)) = (w[0], w[1]);
        if y0 == 0.0 {
            out.push(f0);
        } else if y0 * y1 < 0.0 {
            out.push(f0 + (f1 - f0) * y0 / (y0 - y1));
        }
    }
    if let Some(&(f, y)) = pts.last() {
        if y == 0.0 {
            out.push(f);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_failure_class() {
        assert_eq!(Failure::Config("x".into()).exit_code(), 2);
        assert_eq!(Failure::Numeric(Error::LostTrack { field: 0.1, min_step: 1e-5 }).exit_code(), 5);
        assert_eq!(Failure::Numeric(Error::TrackLost { field: 0.1, reason: "r".into() }).exit_code(), 5);
        assert_eq!(Failure::Numeric(Error::ZeroPhase).exit_code(), 3);
        assert_eq!(Failure::Io("disk".into()).exit_code(), 4);
    }

    #[test]
    fn root5_keeps_sign() {
        assert_eq!(root5(-32.0), -2.0);
        assert_eq!(root5(0.0), 0.0);
        assert!((root5(1e-5) - 10f64.powf(-1.0)).abs() < 1e-15);
    }

    #[test]
    fn crossings_interpolate() {
        let c = y_crossings([(0.0, -1.0), (1.0, 1.0), (2.0, 3.0), (3.0, -1.0)].into_iter());
        assert_eq!(c, vec![0.5, 2.75]);
        assert!(y_crossings([(0.0, 1.0), (1.0, 2.0)].into_iter()).is_empty());
    }

    #[test]
    fn central_seed_sits_near_the_level() {
        let p = ModelParams::new(0.1555, -6.4).unwrap();
        let s = central_seed(3, &p).unwrap();
        assert!((s.re - (7.0 + 0.1555 * 0.1555)).abs() < 1e-12);
    }

    #[test]
    fn audit_contours_start_empty_then_enclose_all() {
        let vs: Vec<Vortex> = [(-2.0, 1), (0.5, -1), (2.0, 1)]
            .iter()
            .map(|&(x, q)| Vortex { position: Point2::new(x, 0.0), charge: q, refine_residual: 0.0, field: 0.1 })
            .collect();
        let cs = audit_contours(7, 20, &Window::square(5.0), &vs);
        assert_eq!(cs.len(), 20);
        assert_eq!(cs[0].enclosed, 0);
        assert!(vs.iter().all(|v| v.position.dist(cs[0].center) > cs[0].radius));
        assert_eq!(cs[1].enclosed, 1);
        let again = audit_contours(7, 20, &Window::square(5.0), &vs);
        assert!(cs.iter().zip(&again).all(|(a, b)| a.center == b.center && a.radius == b.radius));
    }
}
