//! Experiment runner: executes a configured ensemble and writes CSV
//! summaries, optional per-trial tables and SVG plots.

use std::path::{Path, PathBuf};

use conicfit::conic::{design_gradient, design_vector, elliptical_frame, ConicVector, Mat6};
use conicfit::model::{coefficient_covariance, CovarianceMode};
use conicfit::pipeline::{band_value, generic_fit, BandField, Weighting};
use conicfit::synth::{run_ensemble, sample_curve, PipelineOptions, TrialEnsemble, WeightingMode};
use conicfit::{ConicClass, Point2};

use crate::config::ExperimentConfig;
use crate::report::class_name;
use crate::svg::{contour_segments, Canvas};

pub struct ExperimentError {
    pub message: String,
    /// True for configuration problems, false for numerical ones.
    pub config: bool,
}

impl ExperimentError {
    fn config(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            config: true,
        }
    }
}

/// Tracks written files so a failing run leaves nothing behind.
struct OutputGuard {
    written: Vec<PathBuf>,
    done: bool,
}

impl OutputGuard {
    fn new() -> Self {
        Self {
            written: Vec::new(),
            done: false,
        }
    }

    fn write(&mut self, path: &str, contents: &str) -> Result<(), ExperimentError> {
        std::fs::write(path, contents)
            .map_err(|e| ExperimentError::config(format!("{path}: {e}")))?;
        self.written.push(Path::new(path).to_path_buf());
        Ok(())
    }

    fn commit(mut self) {
        self.done = true;
    }
}

impl Drop for OutputGuard {
    fn drop(&mut self) {
        if !self.done {
            for path in &self.written {
                let _ = std::fs::remove_file(path);
            }
        }
    }
}

pub fn threads_from_env() -> Result<usize, ExperimentError> {
    match std::env::var("CONIC_THREADS") {
        Err(_) => Ok(0),
        Ok(raw) => raw
            .trim()
            .parse::<usize>()
            .map_err(|_| ExperimentError::config(format!("CONIC_THREADS: cannot parse '{raw}'"))),
    }
}

pub fn run(config: &ExperimentConfig) -> Result<TrialEnsemble, ExperimentError> {
    config.validate().map_err(ExperimentError::config)?;
    let threads = threads_from_env()?;
    let options = PipelineOptions {
        weighting: config.weighting_mode(),
        curvature_correction: config.pipeline.curvature_correction,
        type_target: config.typed_target(),
        compute_center: config.pipeline.compute_center,
        test_points: config.coverage_points(),
        store_points: config.outputs.svg.is_some(),
        threads,
    };
    let ensemble = run_ensemble(
        &config.curve_spec(),
        &config.noise_spec(),
        config.n_points,
        config.n_trials,
        &options,
    );

    let mut guard = OutputGuard::new();
    if let Some(path) = &config.outputs.summary_csv {
        guard.write(path, &summary_csv(config, &ensemble))?;
    }
    if let Some(path) = &config.outputs.trials_csv {
        guard.write(path, &trials_csv(&ensemble))?;
    }
    if let Some(path) = &config.outputs.svg {
        let drawing = if config.pipeline.compute_center {
            center_cloud_svg(config, &ensemble)
        } else {
            band_plot_svg(config, &ensemble)
        };
        guard.write(path, &drawing?)?;
    }
    guard.commit();
    Ok(ensemble)
}

fn summary_csv(config: &ExperimentConfig, ensemble: &TrialEnsemble) -> String {
    let mut out = String::from("row_type,index,x,y,n,mean,variance,beyond_1,beyond_2,beyond_3\n");
    for (i, c) in ensemble.summary.coverage.iter().enumerate() {
        out.push_str(&format!(
            "coverage,{i},{},{},{},{},{},{},{},{}\n",
            c.point.x, c.point.y, c.n, c.mean, c.variance, c.beyond_1, c.beyond_2, c.beyond_3
        ));
    }
    let s = &ensemble.summary;
    out.push_str(&format!("trials,,,,{},,,,,\n", s.n_trials));
    out.push_str(&format!("failed,,,,{},,,,,\n", s.n_failed));
    out.push_str(&format!(
        "classes,,,,{},{},{},{},{},\n",
        s.n_trials - s.n_failed,
        s.class_counts[0],
        s.class_counts[1],
        s.class_counts[2],
        s.class_counts[3]
    ));
    out.push_str(&format!(
        "mean_sigma2,,,,{},{},,,,\n",
        s.n_trials - s.n_failed,
        s.mean_sigma2
    ));
    for (i, g) in s.mean_g0.iter().enumerate() {
        out.push_str(&format!(
            "mean_g{},,,,{},{},,,,\n",
            i + 1,
            s.n_trials - s.n_failed,
            g
        ));
    }
    if config.pipeline.compute_center {
        let mut stats = [[0.0f64; 2]; 2]; // [raw, corrected] means
        let mut n = 0usize;
        for t in &ensemble.trials {
            if let Ok(fit) = &t.outcome {
                if let Some(c) = &fit.center {
                    n += 1;
                    stats[0][0] += c.center.x;
                    stats[0][1] += c.center.y;
                    stats[1][0] += c.center.x - c.bias.x;
                    stats[1][1] += c.center.y - c.bias.y;
                }
            }
        }
        if n > 0 {
            out.push_str(&format!(
                "center_raw_mean,,{},{},{},,,,,\n",
                stats[0][0] / n as f64,
                stats[0][1] / n as f64,
                n
            ));
            out.push_str(&format!(
                "center_corrected_mean,,{},{},{},,,,,\n",
                stats[1][0] / n as f64,
                stats[1][1] / n as f64,
                n
            ));
        }
    }
    out
}

fn trials_csv(ensemble: &TrialEnsemble) -> String {
    let mut out = String::from(
        "trial,ok,class,sigma2,g1,g2,g3,g4,g5,g6,x0,mean_shift,center_x,center_y,bias_x,bias_y,error\n",
    );
    for record in &ensemble.trials {
        match &record.outcome {
            Ok(fit) => {
                let typed = fit.typed.as_ref();
                let center = fit.center.as_ref();
                out.push_str(&format!(
                    "{},1,{},{},{},{},{},{},{},{},{},{},{},{},{},{},\n",
                    record.trial,
                    class_name(fit.class),
                    fit.sigma2_hat,
                    fit.g0[0],
                    fit.g0[1],
                    fit.g0[2],
                    fit.g0[3],
                    fit.g0[4],
                    fit.g0[5],
                    typed
                        .and_then(|t| t.x0)
                        .map(|v| v.to_string())
                        .unwrap_or_default(),
                    typed
                        .and_then(|t| t.mean_shift)
                        .map(|v| v.to_string())
                        .unwrap_or_default(),
                    center.map(|c| c.center.x.to_string()).unwrap_or_default(),
                    center.map(|c| c.center.y.to_string()).unwrap_or_default(),
                    center.map(|c| c.bias.x.to_string()).unwrap_or_default(),
                    center.map(|c| c.bias.y.to_string()).unwrap_or_default(),
                ));
            }
            Err(e) => {
                out.push_str(&format!(
                    "{},0,,,,,,,,,,,,,,,\"{}\"\n",
                    record.trial,
                    e.replace('"', "\"\"")
                ));
            }
        }
    }
    out
}

/// Predicted band field of the exact configuration under the configured
/// weighting, used for the shaded confidence contours.
fn reference_band(config: &ExperimentConfig) -> Option<BandField> {
    let sigma = config.noise.sigma;
    if sigma <= 0.0 {
        return None;
    }
    let base = sample_curve(&config.curve_spec(), config.n_points);
    let prelim = generic_fit(&base, Weighting::Unweighted).ok()?;
    let (fit, optimal) = match config.weighting_mode() {
        WeightingMode::Unweighted => (prelim, false),
        WeightingMode::Reweighted => {
            let frame = elliptical_frame(&prelim.g0).ok()?;
            let w = conicfit::conic::optimal_weights(&base, &prelim.g0, &frame).ok()?;
            (generic_fit(&base, Weighting::Optimal(w)).ok()?, true)
        }
        WeightingMode::Sampson => {
            let w = conicfit::conic::sampson_weights(&base, &prelim.g0).ok()?;
            (generic_fit(&base, Weighting::Sampson(w)).ok()?, false)
        }
    };
    let v = if optimal {
        coefficient_covariance(&fit.y0, sigma * sigma, base.len(), CovarianceMode::Optimal).ok()?
    } else {
        let designs: Vec<_> = base.iter().map(|&p| design_vector(p)).collect();
        let gradients: Vec<Vec<_>> = base
            .iter()
            .map(|&p| {
                let (dx, dy) = design_gradient(p);
                vec![dx, dy]
            })
            .collect();
        coefficient_covariance(
            &fit.y0,
            sigma * sigma,
            base.len(),
            CovarianceMode::Explicit {
                designs: &designs,
                gradients: &gradients,
                weights: &fit.weights,
                g0: &fit.g0_raw.to_model(),
            },
        )
        .ok()?
    };
    Some(BandField {
        g: fit.g0,
        v: Mat6::from_iterator(v.iter().copied()),
    })
}

/// Polyline of a fitted conic inside the bounding box: parametric when a
/// confocal frame exists, marching squares otherwise.
fn fitted_curve_polylines(g: &ConicVector, bbox: (f64, f64, f64, f64)) -> Vec<Vec<Point2>> {
    if let Ok(frame) = elliptical_frame(g) {
        match frame.class {
            ConicClass::Ellipse => {
                let pts = (0..=256)
                    .map(|i| frame.curve_point(i as f64 / 256.0 * std::f64::consts::TAU))
                    .collect();
                return vec![pts];
            }
            ConicClass::Hyperbola => {
                let branch = |sign: f64| -> Vec<Point2> {
                    (0..=256)
                        .map(|i| {
                            let eta = -4.0 + 8.0 * i as f64 / 256.0;
                            let p = frame.curve_point(eta);
                            if sign > 0.0 {
                                p
                            } else {
                                // Mirror branch through the center.
                                Point2::new(2.0 * frame.center.x - p.x, 2.0 * frame.center.y - p.y)
                            }
                        })
                        .collect()
                };
                return vec![branch(1.0), branch(-1.0)];
            }
            _ => {}
        }
    }
    let g = *g;
    contour_segments(
        &move |x, y| g.algebraic_value(Point2::new(x, y)),
        bbox,
        200,
        0.0,
    )
    .into_iter()
    .map(|seg| seg.to_vec())
    .collect()
}

fn band_plot_svg(
    config: &ExperimentConfig,
    ensemble: &TrialEnsemble,
) -> Result<String, ExperimentError> {
    let bbox = config.outputs.bbox;
    let mut canvas = Canvas::new(bbox, 900.0);

    // Confidence contours of the reference band at 1, 2, 3 sigma.
    if let Some(band) = reference_band(config) {
        for (level, opacity) in [(1.0, 0.9), (2.0, 0.6), (3.0, 0.35)] {
            for sign in [-1.0, 1.0] {
                let field =
                    |x: f64, y: f64| band_value(&band, Point2::new(x, y)).unwrap_or(f64::NAN);
                let segs = contour_segments(&field, bbox, config.outputs.grid, sign * level);
                canvas.segments(&segs, "#4878cf", 1.0, opacity);
            }
        }
    }

    // Individual fitted curves.
    for record in &ensemble.trials {
        if let Ok(fit) = &record.outcome {
            for line in fitted_curve_polylines(&ConicVector(fit.g0), bbox) {
                canvas.polyline(&line, "#999999", 0.6, 0.5);
            }
        }
    }

    // The true curve.
    let spec = config.curve_spec();
    let full_arc = match spec.kind {
        conicfit::synth::CurveKind::Ellipse { .. } => (0.0, std::f64::consts::TAU),
        conicfit::synth::CurveKind::Parabola { .. } => {
            (spec.arc.0.min(-spec.arc.1.abs()), spec.arc.1.abs() * 1.6)
        }
    };
    let dense: Vec<Point2> = (0..=512)
        .map(|i| spec.point_at(full_arc.0 + (full_arc.1 - full_arc.0) * i as f64 / 512.0))
        .collect();
    canvas.polyline(&dense, "black", 1.4, 1.0);

    // Sample points of the first trial.
    if let Some(Ok(fit)) = ensemble.trials.first().map(|t| &t.outcome) {
        if let Some(points) = &fit.points {
            for &p in points {
                canvas.circle(p, 2.2, "#d62728", true);
            }
        }
    }
    Ok(canvas.finish())
}

fn center_cloud_svg(
    config: &ExperimentConfig,
    ensemble: &TrialEnsemble,
) -> Result<String, ExperimentError> {
    let bbox = config.outputs.bbox;
    let mut canvas = Canvas::new(bbox, 700.0);
    for record in &ensemble.trials {
        if let Ok(fit) = &record.outcome {
            if let Some(c) = &fit.center {
                canvas.circle(c.center, 2.0, "#777777", false);
                canvas.circle(
                    Point2::new(c.center.x - c.bias.x, c.center.y - c.bias.y),
                    1.6,
                    "#2a6fbb",
                    true,
                );
            }
        }
    }
    // True center.
    let spec = config.curve_spec();
    canvas.cross(spec.translation, 6.0, "black");
    Ok(canvas.finish())
}
