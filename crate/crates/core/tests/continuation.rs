use crossfield::{
    find_stabilization, landau_level, refine_root, seed_guesses, sweep_field, ContourSpec, ModelParams, Resonance,
    SolverOptions, StepControl,
};

fn central(field: f64) -> Resonance {
    let p = ModelParams::new(field, -6.4).unwrap();
    let target = landau_level(3) + field * field;
    let g = seed_guesses(3, &p)
        .unwrap()
        .into_iter()
        .min_by(|a, b| (a.re - target).abs().total_cmp(&(b.re - target).abs()))
        .unwrap();
    refine_root(g, &p, &ContourSpec::default(), 1e-11).unwrap()
}

#[test]
fn trajectory_fields_are_monotone_and_steps_small() {
    let ctrl = StepControl::default();
    let t = sweep_field(&central(0.02), 0.3, &ctrl, &ContourSpec::default(), &SolverOptions::default()).unwrap();
    let f = t.fields();
    assert!((f[0] - 0.02).abs() < 1e-15);
    assert!((f.last().unwrap() - 0.3).abs() < 1e-12);
    for w in t.points.windows(2) {
        assert!(w[1].field() > w[0].field());
        assert!((w[1].energy - w[0].energy).norm() < ctrl.max_jump);
    }
    for p in &t.points {
        assert!(p.energy.im <= 1e-12);
        assert!(p.residual <= 1e-10);
    }
}

#[test]
fn halving_the_step_reproduces_the_series() {
    let spec = ContourSpec::default();
    let opts = SolverOptions::default();
    let seed = central(0.02);
    let coarse = sweep_field(&seed, 0.2, &StepControl { step: 0.01, ..StepControl::default() }, &spec, &opts).unwrap();
    let fine = sweep_field(&seed, 0.2, &StepControl { step: 0.005, ..StepControl::default() }, &spec, &opts).unwrap();
    for p in &coarse.points {
        let q = fine.points.iter().find(|q| (q.field() - p.field()).abs() < 1e-12).expect("shared grid point");
        assert!((p.energy - q.energy).norm() < 1e-5, "{} vs {}", p.energy, q.energy);
    }
}

#[test]
fn pole_leaves_the_level_from_below() {
    let mut last = f64::INFINITY;
    for f in [0.04, 0.02, 0.01, 0.005] {
        let r = central(f);
        let gap = (r.energy - 7.0).norm();
        assert!(r.energy.im < 0.0);
        assert!(gap < last);
        last = gap;
    }
    assert!(last < 1e-3);
}

#[test]
fn stabilization_is_a_width_minimum() {
    let ctrl = StepControl::default();
    let s = find_stabilization(&central(0.12), (0.12, 0.19), 1e-6, &ctrl, &ContourSpec::default(), &SolverOptions::default())
        .unwrap();
    assert!((s.field - 0.1555).abs() <= 0.002);
    assert!(s.resonance.energy.im.abs() < 1e-3);
    for &(_, im) in &s.prescan {
        assert!(im.abs() >= s.resonance.energy.im.abs());
    }
}
