//! Built-in verification: fast algebraic checks plus a seeded Monte Carlo
//! smoke test. Output is deterministic (no timings), so two runs produce
//! byte-identical reports.

use conicfit::conic::{
    curvature_matrix, design_gradient, design_vector, elliptical_frame, ConicVector, Mat6, Point2,
};
use conicfit::pipeline::{generic_fit, Weighting};
use conicfit::synth::{
    run_ensemble, sample_curve, standard_normal, substream_seed, CurveKind, CurveSpec, NoiseSpec,
    PipelineOptions, Spacing,
};
use conicfit::typed::{project_to_parabola, truncated_mean_factor};

fn check(name: &str, outcome: Result<String, String>, all_ok: &mut bool) {
    match outcome {
        Ok(detail) => println!("PASS {name}: {detail}"),
        Err(detail) => {
            *all_ok = false;
            println!("FAIL {name}: {detail}");
        }
    }
}

fn angle(u: &ConicVector, v: &ConicVector) -> f64 {
    let a = u.as_vec6().normalize();
    let mut b = v.as_vec6().normalize();
    if a.dot(&b) < 0.0 {
        b = -b;
    }
    2.0 * ((a - b).norm() / 2.0).min(1.0).asin()
}

fn design_identities() -> Result<String, String> {
    let h = 1e-5;
    for k in 0..20u64 {
        let p = Point2::new(standard_normal(1, 2 * k), standard_normal(1, 2 * k + 1));
        let (dx, dy) = design_gradient(p);
        let fx = (design_vector(Point2::new(p.x + h, p.y)).as_vector()
            - design_vector(Point2::new(p.x - h, p.y)).as_vector())
            / (2.0 * h);
        let fy = (design_vector(Point2::new(p.x, p.y + h)).as_vector()
            - design_vector(Point2::new(p.x, p.y - h)).as_vector())
            / (2.0 * h);
        if (dx.as_vector() - fx).norm() > 1e-8 || (dy.as_vector() - fy).norm() > 1e-8 {
            return Err(format!("gradient mismatch at ({}, {})", p.x, p.y));
        }
    }
    Ok("design gradients match finite differences".into())
}

fn curvature_structure() -> Result<String, String> {
    let l = curvature_matrix();
    for k in 0..20u64 {
        let p = Point2::new(standard_normal(2, 2 * k), standard_normal(2, 2 * k + 1));
        let d = design_vector(p);
        let ld = l * conicfit::conic::Vec6::from_column_slice(d.as_vector().as_slice());
        let expected = conicfit::conic::Vec6::from_column_slice(&[1.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        if (ld - expected).norm() > 1e-12 {
            return Err("Laplacian identity violated".into());
        }
    }
    let pts: Vec<Point2> = (0..10)
        .map(|i| Point2::new((i as f64 * 0.7).cos(), 0.4 * (i as f64 * 0.7).sin()))
        .collect();
    let c =
        conicfit::conic::build_constraint_cn(&pts, &vec![1.0; 10]).map_err(|e| e.to_string())?;
    let cn = Mat6::from_iterator(c.matrix().iter().copied());
    if (l * cn).norm() > 1e-12 || (cn * l.transpose()).norm() > 1e-12 {
        return Err("curvature matrix does not annihilate the constraint".into());
    }
    Ok("Laplacian identity and constraint annihilation hold".into())
}

fn truncated_mean_values() -> Result<String, String> {
    let f0 = truncated_mean_factor(0.0);
    if (f0 - (2.0 / std::f64::consts::PI).sqrt()).abs() > 1e-14 {
        return Err(format!("factor(0) = {f0}"));
    }
    if truncated_mean_factor(-8.0) > 1e-13 {
        return Err("lower tail not vanishing".into());
    }
    for x in [6.0, 10.0, 25.0] {
        let f = truncated_mean_factor(x);
        if !(f >= x && f <= x + 1.05 / x) {
            return Err(format!("Mills bound violated at {x}"));
        }
    }
    Ok("reference values and Mills bounds hold".into())
}

fn exact_recovery() -> Result<String, String> {
    let mut worst = 0.0f64;
    for k in 0..20u64 {
        let u = |j: u64| standard_normal(3, k * 8 + j);
        let a = 1.0 + (u(0).abs() % 1.0);
        let spec = CurveSpec {
            kind: CurveKind::Ellipse {
                semi_major: a,
                semi_minor: a * (0.3 + 0.6 * (u(1).abs() % 1.0)),
            },
            arc: (0.0, std::f64::consts::TAU),
            rotation: u(2),
            translation: Point2::new(u(3), u(4)),
            spacing: Spacing::Parameter,
        };
        let pts = sample_curve(&spec, 24);
        let fit = generic_fit(&pts, Weighting::Unweighted).map_err(|e| e.to_string())?;
        let gap = fit.lambdas[0].abs() / fit.lambdas[4];
        let ang = angle(&fit.g0, &spec.coefficients());
        if gap > 1e-10 || ang > 1e-8 {
            return Err(format!("conic {k}: gap {gap:.2e}, angle {ang:.2e}"));
        }
        worst = worst.max(ang);
    }
    Ok(format!(
        "20 exact conics recovered (worst angle {worst:.2e})"
    ))
}

fn parabolic_projection() -> Result<String, String> {
    let mut max_iter = 0usize;
    for k in 0..100u64 {
        let base = sample_curve(&CurveSpec::ellipse_quadrant(1.0, 0.2), 20);
        let pts = conicfit::synth::add_noise(
            &base,
            &NoiseSpec {
                sigma: 0.002,
                seed: substream_seed(4, k),
            },
        );
        let fit = generic_fit(&pts, Weighting::Unweighted).map_err(|e| e.to_string())?;
        let pf = project_to_parabola(&fit).map_err(|e| e.to_string())?;
        if pf.residual > 1e-12 {
            return Err(format!("fit {k}: residual {:.2e}", pf.residual));
        }
        max_iter = max_iter.max(pf.iterations);
    }
    Ok(format!(
        "100 projections converged (max {max_iter} iterations)"
    ))
}

fn fig2_smoke(curvature_correction: bool) -> Result<String, String> {
    let curve = CurveSpec::ellipse_quadrant(1.0, 0.1);
    let sigma = 0.001;
    // Reference covariance of the exact weighted configuration.
    let base = sample_curve(&curve, 20);
    let prelim = generic_fit(&base, Weighting::Unweighted).map_err(|e| e.to_string())?;
    let frame = elliptical_frame(&prelim.g0).map_err(|e| e.to_string())?;
    let w =
        conicfit::conic::optimal_weights(&base, &prelim.g0, &frame).map_err(|e| e.to_string())?;
    let reference = generic_fit(&base, Weighting::Optimal(w)).map_err(|e| e.to_string())?;
    let v_ref = Mat6::from_iterator(
        (reference.y0.matrix() * (sigma * sigma / 20.0))
            .iter()
            .copied(),
    );

    let test_points: Vec<Point2> = (0..50)
        .map(|i| curve.point_at(i as f64 / 49.0 * std::f64::consts::FRAC_PI_2))
        .collect();
    let ens = run_ensemble(
        &curve,
        &NoiseSpec {
            sigma,
            seed: 424_242,
        },
        20,
        500,
        &PipelineOptions {
            curvature_correction,
            ..Default::default()
        },
    );
    if ens.summary.n_failed > 0 {
        return Err(format!("{} trials failed", ens.summary.n_failed));
    }
    let mut beyond = 0usize;
    let mut total = 0usize;
    for record in &ens.trials {
        let fit = record.outcome.as_ref().map_err(|e| e.clone())?;
        let g = ConicVector(fit.g0);
        for &p in &test_points {
            let d6 =
                conicfit::conic::Vec6::from_column_slice(design_vector(p).as_vector().as_slice());
            let var = (v_ref * d6).dot(&d6);
            total += 1;
            if (g.as_vec6().dot(&d6) / var.sqrt()).abs() > 2.0 {
                beyond += 1;
            }
        }
    }
    let fraction = beyond as f64 / total as f64;
    if !(0.025..=0.07).contains(&fraction) {
        return Err(format!("coverage fraction beyond 2 sigma: {fraction:.4}"));
    }
    Ok(format!(
        "500 trials, coverage beyond 2 sigma {:.2}%",
        100.0 * fraction
    ))
}

fn bias_check(curvature_correction: bool) -> Result<String, String> {
    let curve = CurveSpec::ellipse_quadrant(1.0, 0.1);
    let g_true = curve.coefficients();
    let tip = Point2::new(1.0, 0.0);
    let noise = NoiseSpec {
        sigma: 0.004,
        seed: 171_717,
    };
    let mean_offset = |correction: bool| -> Result<f64, String> {
        let ens = run_ensemble(
            &curve,
            &noise,
            500,
            300,
            &PipelineOptions {
                curvature_correction: correction,
                ..Default::default()
            },
        );
        let mut mean = 0.0;
        let mut n = 0usize;
        for record in &ens.trials {
            let fit = record.outcome.as_ref().map_err(|e| e.clone())?;
            let g = ConicVector(fit.g0);
            let (gx, gy) = g_true.gradient_at(tip);
            let gn = (gx * gx + gy * gy).sqrt();
            let z = g.algebraic_value(tip);
            let (zx, zy) = g.gradient_at(tip);
            let delta = -z / (zx * gx / gn + zy * gy / gn);
            n += 1;
            mean += (delta - mean) / n as f64;
        }
        Ok(mean)
    };
    let uncorrected = mean_offset(false)?;
    let candidate = mean_offset(curvature_correction)?;
    if uncorrected <= 0.0 {
        return Err(format!(
            "uncorrected tip offset not outside: {uncorrected:+.3e}"
        ));
    }
    if candidate.abs() >= uncorrected.abs() / 3.0 {
        return Err(format!(
            "curvature bias not removed: corrected {candidate:+.3e} vs uncorrected {uncorrected:+.3e}"
        ));
    }
    Ok(format!(
        "tip offset {uncorrected:+.3e} reduced to {candidate:+.3e}"
    ))
}

fn determinism() -> Result<String, String> {
    let curve = CurveSpec::ellipse_quadrant(1.0, 0.1);
    let noise = NoiseSpec {
        sigma: 0.001,
        seed: 606,
    };
    let run = |threads: usize| {
        run_ensemble(
            &curve,
            &noise,
            20,
            50,
            &PipelineOptions {
                threads,
                ..Default::default()
            },
        )
    };
    let a = run(1);
    let b = run(1);
    let c = run(4);
    for other in [&b, &c] {
        for i in 0..6 {
            if a.summary.mean_g0[i].to_bits() != other.summary.mean_g0[i].to_bits() {
                return Err("ensemble summaries differ".into());
            }
        }
        for (ra, rb) in a.trials.iter().zip(&other.trials) {
            let fa = ra.outcome.as_ref().map_err(|e| e.clone())?;
            let fb = rb.outcome.as_ref().map_err(|e| e.clone())?;
            if fa
                .g0
                .iter()
                .zip(&fb.g0)
                .any(|(x, y)| x.to_bits() != y.to_bits())
            {
                return Err("per-trial results differ".into());
            }
        }
    }
    Ok("repeat runs and thread counts agree bitwise".into())
}

/// Runs every check; returns true when all pass.
pub fn run(curvature_correction: bool) -> bool {
    let mut all_ok = true;
    check("design-identities", design_identities(), &mut all_ok);
    check("curvature-structure", curvature_structure(), &mut all_ok);
    check("truncated-mean", truncated_mean_values(), &mut all_ok);
    check("exact-recovery", exact_recovery(), &mut all_ok);
    check("parabolic-projection", parabolic_projection(), &mut all_ok);
    check(
        "band-coverage-smoke",
        fig2_smoke(curvature_correction),
        &mut all_ok,
    );
    check(
        "curvature-bias-removal",
        bias_check(curvature_correction),
        &mut all_ok,
    );
    check("determinism", determinism(), &mut all_ok);
    println!(
        "{}",
        if all_ok {
            "selftest: all checks passed"
        } else {
            "selftest: FAILURES"
        }
    );
    all_ok
}
