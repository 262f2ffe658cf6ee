//! Synthetic curves and the seeded Monte Carlo harness.
//!
//! Points are sampled along a specified curve and perturbed by isotropic
//! Gaussian noise. Randomness is counter-based: every deviate is a pure
//! function of (seed, stream index), drawn by inverting the normal CDF on
//! a splitmix-style mix of the counter. That makes ensembles bit-identical
//! across runs, platforms and thread counts, and lets trials run in
//! parallel without any stream coordination.

use crate::conic::{ConicClass, ConicVector, Mat6, Point2, Vec6, DEFAULT_CLASSIFY_TOL};
use crate::error::Error;
use crate::pipeline::{
    band_value, fit_with_reweight_opts, generic_fit_with, FitOptions, GenericFit, Weighting,
};
use crate::typed::{project_to_parabola, type_constrained_mean, TypeTarget};
use crate::{conic, propagate};

// ── Counter-based randomness ────────────────────────────────────────────────

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent child seed (e.g. one per trial).
pub fn substream_seed(seed: u64, index: u64) -> u64 {
    mix64(seed ^ mix64(index.wrapping_add(1).wrapping_mul(GOLDEN)))
}

/// Uniform deviate in the open interval (0, 1) for stream `index`.
pub fn uniform_open(seed: u64, index: u64) -> f64 {
    let bits = mix64(seed.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN)));
    ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal deviate for stream `index`, by inverse CDF.
pub fn standard_normal(seed: u64, index: u64) -> f64 {
    inverse_normal_cdf(uniform_open(seed, index))
}

/// Inverse standard normal CDF: rational initial guess refined by one
/// Halley step through erfc, accurate to a few ulp.
pub fn inverse_normal_cdf(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    // One Halley step against the exact CDF.
    let e = 0.5 * libm::erfc(-x / std::f64::consts::SQRT_2) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    x - u / (1.0 + x * u / 2.0)
}

// ── Curve specification and sampling ────────────────────────────────────────

/// Curve family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CurveKind {
    /// Axis lengths before the pose is applied; `semi_major ≥ semi_minor > 0`.
    Ellipse { semi_major: f64, semi_minor: f64 },
    /// y² = 4 f x in the canonical pose, parametrized as (f t², 2 f t).
    Parabola { focal_length: f64 },
}

/// Parameter spacing of the samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spacing {
    /// Equal steps in the curve parameter (default).
    Parameter,
    /// Equal steps in arc length.
    ArcLength,
}

/// A posed arc of a synthetic curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSpec {
    pub kind: CurveKind,
    /// Parameter range [start, end] of the sampled arc.
    pub arc: (f64, f64),
    /// Rotation applied to the canonical curve, radians.
    pub rotation: f64,
    /// Translation applied after the rotation.
    pub translation: Point2,
    pub spacing: Spacing,
}

impl CurveSpec {
    /// One quadrant of an axis-aligned ellipse at the origin.
    pub fn ellipse_quadrant(semi_major: f64, semi_minor: f64) -> Self {
        Self {
            kind: CurveKind::Ellipse {
                semi_major,
                semi_minor,
            },
            arc: (0.0, std::f64::consts::FRAC_PI_2),
            rotation: 0.0,
            translation: Point2::new(0.0, 0.0),
            spacing: Spacing::Parameter,
        }
    }

    /// One arm of an axis-aligned parabola; the default arc spans x from 0
    /// to 25 focal lengths.
    pub fn parabola_arm(focal_length: f64) -> Self {
        Self {
            kind: CurveKind::Parabola { focal_length },
            arc: (0.0, 5.0),
            rotation: 0.0,
            translation: Point2::new(0.0, 0.0),
            spacing: Spacing::Parameter,
        }
    }

    /// Point at curve parameter t, posed.
    pub fn point_at(&self, t: f64) -> Point2 {
        let (x, y) = match self.kind {
            CurveKind::Ellipse {
                semi_major,
                semi_minor,
            } => (semi_major * t.cos(), semi_minor * t.sin()),
            CurveKind::Parabola { focal_length } => (focal_length * t * t, 2.0 * focal_length * t),
        };
        let (c, s) = (self.rotation.cos(), self.rotation.sin());
        Point2::new(
            c * x - s * y + self.translation.x,
            s * x + c * y + self.translation.y,
        )
    }

    /// True coefficient vector of the full curve, unit Euclidean norm with
    /// canonical sign.
    pub fn coefficients(&self) -> ConicVector {
        let (g1, g2, g3, g4, g5, g6) = match self.kind {
            CurveKind::Ellipse {
                semi_major,
                semi_minor,
            } => {
                let ia = 1.0 / (semi_major * semi_major);
                let ib = 1.0 / (semi_minor * semi_minor);
                (ia, 0.0, ib, 0.0, 0.0, -1.0)
            }
            // y² − 4 f x = 0.
            CurveKind::Parabola { focal_length } => (0.0, 0.0, 1.0, -4.0 * focal_length, 0.0, 0.0),
        };
        let posed = pose_conic(
            &ConicVector([g1, g2, g3, g4, g5, g6]),
            self.rotation,
            self.translation,
        );
        let norm = posed.as_vec6().norm();
        posed.scale(1.0 / norm).canonical_sign()
    }
}

/// Applies a rotation + translation to a conic's coefficients (the point
/// map x → R x + t, substituting x = Rᵀ(x' − t) into the quadratic form).
fn pose_conic(g: &ConicVector, rotation: f64, translation: Point2) -> ConicVector {
    let (c, s) = (rotation.cos(), rotation.sin());
    let [a, b, cc, d, e, f] = g.0;
    // Quadratic part A' = R A Rᵀ with A = [[a, b/2], [b/2, cc]].
    let a11 = a * c * c - b * c * s + cc * s * s;
    let a12 = (a - cc) * c * s + b * (c * c - s * s) / 2.0;
    let a22 = a * s * s + b * c * s + cc * c * c;
    // Linear part l' = R l with l = (d, e).
    let d1 = c * d - s * e;
    let e1 = s * d + c * e;
    // Then translate: x → x − t on the rotated conic.
    let (tx, ty) = (translation.x, translation.y);
    let a2 = a11;
    let b2 = 2.0 * a12;
    let c2 = a22;
    let d2 = d1 - 2.0 * a11 * tx - 2.0 * a12 * ty;
    let e2 = e1 - 2.0 * a12 * tx - 2.0 * a22 * ty;
    let f2 = f + a11 * tx * tx + 2.0 * a12 * tx * ty + a22 * ty * ty - d1 * tx - e1 * ty;
    ConicVector([a2, b2, c2, d2, e2, f2])
}

/// Samples `n_points` along the arc, endpoints included.
pub fn sample_curve(spec: &CurveSpec, n_points: usize) -> Vec<Point2> {
    assert!(n_points >= 2, "need at least two samples");
    let (t0, t1) = spec.arc;
    match spec.spacing {
        Spacing::Parameter => (0..n_points)
            .map(|i| {
                let t = t0 + (t1 - t0) * i as f64 / (n_points - 1) as f64;
                spec.point_at(t)
            })
            .collect(),
        Spacing::ArcLength => {
            // Dense cumulative arc length, then inverted at equal fractions.
            const DENSE: usize = 4096;
            let mut ts = Vec::with_capacity(DENSE + 1);
            let mut lens = Vec::with_capacity(DENSE + 1);
            let mut acc = 0.0;
            let mut prev = spec.point_at(t0);
            ts.push(t0);
            lens.push(0.0);
            for k in 1..=DENSE {
                let t = t0 + (t1 - t0) * k as f64 / DENSE as f64;
                let p = spec.point_at(t);
                acc += p.distance(prev);
                ts.push(t);
                lens.push(acc);
                prev = p;
            }
            (0..n_points)
                .map(|i| {
                    let target = acc * i as f64 / (n_points - 1) as f64;
                    let j = lens.partition_point(|&l| l < target).min(DENSE);
                    let (l0, l1) = (lens[j.saturating_sub(1)], lens[j]);
                    let (ta, tb) = (ts[j.saturating_sub(1)], ts[j]);
                    let frac = if l1 > l0 {
                        (target - l0) / (l1 - l0)
                    } else {
                        0.0
                    };
                    spec.point_at(ta + (tb - ta) * frac)
                })
                .collect()
        }
    }
}

/// Isotropic Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Standard deviation per coordinate.
    pub sigma: f64,
    pub seed: u64,
}

/// Adds independent N(0, σ²) offsets to each coordinate. Point i draws
/// streams 2i and 2i+1, so any subset of points is reproducible on its own.
pub fn add_noise(points: &[Point2], spec: &NoiseSpec) -> Vec<Point2> {
    assert!(spec.sigma >= 0.0);
    if spec.sigma == 0.0 {
        return points.to_vec();
    }
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            Point2::new(
                p.x + spec.sigma * standard_normal(spec.seed, 2 * i as u64),
                p.y + spec.sigma * standard_normal(spec.seed, 2 * i as u64 + 1),
            )
        })
        .collect()
}

// ── Ensembles ───────────────────────────────────────────────────────────────

/// Weighting flavor for a whole ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightingMode {
    Unweighted,
    /// Preliminary unweighted fit, one on-curve reweighting (default).
    Reweighted,
    /// Sampson weights from the preliminary fit (biased baseline).
    Sampson,
}

/// Type-specific post-processing per trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TypedTarget {
    Parabola,
    Ellipse,
    Hyperbola,
}

/// Per-trial pipeline configuration.
#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub weighting: WeightingMode,
    pub curvature_correction: bool,
    pub type_target: Option<TypedTarget>,
    /// Propagate errors into the center estimate.
    pub compute_center: bool,
    /// Coverage is tallied at these points with each trial's own band field.
    pub test_points: Vec<Point2>,
    /// Keep the noisy points of each trial (for plotting).
    pub store_points: bool,
    /// Worker threads; 0 picks the available parallelism.
    pub threads: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            weighting: WeightingMode::Reweighted,
            curvature_correction: true,
            type_target: None,
            compute_center: false,
            test_points: Vec::new(),
            store_points: false,
            threads: 0,
        }
    }
}

/// Type-specific outputs of one trial.
#[derive(Debug, Clone)]
pub struct TypedRecord {
    pub g_bar: [f64; 6],
    pub iterations: usize,
    pub residual: f64,
    /// Present for ellipse/hyperbola targets.
    pub x0: Option<f64>,
    pub mean: Option<[f64; 6]>,
    pub mean_class: Option<ConicClass>,
    /// Euclidean distance between the truncated mean and the generic
    /// solution.
    pub mean_shift: Option<f64>,
}

/// Center outputs of one trial.
#[derive(Debug, Clone)]
pub struct CenterRecord {
    pub center: Point2,
    pub bias: Point2,
    pub var_x: f64,
    pub var_y: f64,
    pub cov_xy: f64,
}

/// Successful per-trial results.
#[derive(Debug, Clone)]
pub struct TrialFit {
    pub g0: [f64; 6],
    pub g0_raw: [f64; 6],
    pub sigma2_hat: f64,
    pub class: ConicClass,
    pub v0: Mat6,
    pub used_fallback: bool,
    /// Standardized algebraic distance at each test point, using this
    /// trial's own band field.
    pub band_values: Vec<f64>,
    pub typed: Option<TypedRecord>,
    pub center: Option<CenterRecord>,
    pub points: Option<Vec<Point2>>,
}

/// One trial: either a fit or the error that stopped it.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub trial: usize,
    pub outcome: Result<TrialFit, String>,
}

/// Per-test-point coverage tallies.
#[derive(Debug, Clone)]
pub struct CoverageStat {
    pub point: Point2,
    pub n: usize,
    pub beyond_1: usize,
    pub beyond_2: usize,
    pub beyond_3: usize,
    pub mean: f64,
    pub variance: f64,
}

/// Streaming summary over the successful trials.
#[derive(Debug, Clone)]
pub struct EnsembleSummary {
    pub n_trials: usize,
    pub n_failed: usize,
    pub mean_g0: [f64; 6],
    /// Sample covariance of the fitted coefficients.
    pub cov_g0: Mat6,
    pub mean_sigma2: f64,
    /// Counts by class: ellipse, hyperbola, parabola, degenerate.
    pub class_counts: [usize; 4],
    pub coverage: Vec<CoverageStat>,
}

/// A complete seeded ensemble.
#[derive(Debug, Clone)]
pub struct TrialEnsemble {
    pub trials: Vec<TrialRecord>,
    pub summary: EnsembleSummary,
}

fn run_trial(
    base_points: &[Point2],
    noise: &NoiseSpec,
    options: &PipelineOptions,
    trial: usize,
) -> Result<TrialFit, String> {
    let trial_noise = NoiseSpec {
        sigma: noise.sigma,
        seed: substream_seed(noise.seed, trial as u64),
    };
    let pts = add_noise(base_points, &trial_noise);
    let fit_opts = FitOptions {
        curvature_correction: options.curvature_correction,
    };

    let to_err = |e: Error| e.to_string();
    let (fit, used_fallback): (GenericFit, bool) = match options.weighting {
        WeightingMode::Unweighted => (
            generic_fit_with(&pts, Weighting::Unweighted, fit_opts).map_err(to_err)?,
            false,
        ),
        WeightingMode::Reweighted => {
            let r = fit_with_reweight_opts(&pts, fit_opts).map_err(to_err)?;
            (r.final_fit, r.used_fallback)
        }
        WeightingMode::Sampson => {
            let prelim = generic_fit_with(&pts, Weighting::Unweighted, fit_opts).map_err(to_err)?;
            let w = conic::sampson_weights(&pts, &prelim.g0).map_err(to_err)?;
            (
                generic_fit_with(&pts, Weighting::Sampson(w), fit_opts).map_err(to_err)?,
                false,
            )
        }
    };

    let field = fit.band_field();
    let mut band_values = Vec::with_capacity(options.test_points.len());
    for &p in &options.test_points {
        band_values.push(band_value(&field, p).map_err(to_err)?);
    }

    let typed = match options.type_target {
        None => None,
        Some(target) => {
            let pf = project_to_parabola(&fit).map_err(to_err)?;
            let mut record = TypedRecord {
                g_bar: pf.g_bar.0,
                iterations: pf.iterations,
                residual: pf.residual,
                x0: None,
                mean: None,
                mean_class: None,
                mean_shift: None,
            };
            match target {
                TypedTarget::Parabola => {}
                TypedTarget::Ellipse | TypedTarget::Hyperbola => {
                    let t = if target == TypedTarget::Ellipse {
                        TypeTarget::Ellipse
                    } else {
                        TypeTarget::Hyperbola
                    };
                    let post = type_constrained_mean(&fit, &pf, t).map_err(to_err)?;
                    record.x0 = Some(post.x0);
                    record.mean = Some(post.mean.0);
                    record.mean_class = Some(post.mean.classify(DEFAULT_CLASSIFY_TOL));
                    record.mean_shift = Some((post.mean.as_vec6() - fit.g0.as_vec6()).norm());
                }
            }
            Some(record)
        }
    };

    let center = if options.compute_center {
        let est = propagate::center_with_errors(&fit).map_err(to_err)?;
        Some(CenterRecord {
            center: est.center,
            bias: est.bias,
            var_x: est.covariance[(0, 0)],
            var_y: est.covariance[(1, 1)],
            cov_xy: est.covariance[(0, 1)],
        })
    } else {
        None
    };

    Ok(TrialFit {
        g0: fit.g0.0,
        g0_raw: fit.g0_raw.0,
        sigma2_hat: fit.sigma2_hat,
        class: fit.classify(),
        v0: fit.v0,
        used_fallback,
        band_values,
        typed,
        center,
        points: options.store_points.then(|| pts.clone()),
    })
}

/// Runs a seeded ensemble: fresh noise per trial, the configured pipeline,
/// streaming summary statistics. Trials execute in parallel when requested;
/// the reduction runs in trial order regardless, so results do not depend
/// on the thread count.
pub fn run_ensemble(
    curve: &CurveSpec,
    noise: &NoiseSpec,
    n_points: usize,
    n_trials: usize,
    options: &PipelineOptions,
) -> TrialEnsemble {
    assert!(n_trials >= 1);
    let base_points = sample_curve(curve, n_points);

    let threads = if options.threads == 0 {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    } else {
        options.threads
    }
    .min(n_trials)
    .max(1);

    let mut slots: Vec<Option<TrialRecord>> = (0..n_trials).map(|_| None).collect();
    let chunk = n_trials.div_ceil(threads);
    std::thread::scope(|scope| {
        for (ci, slot) in slots.chunks_mut(chunk).enumerate() {
            let base = ci * chunk;
            let base_points = &base_points;
            scope.spawn(move || {
                for (j, out) in slot.iter_mut().enumerate() {
                    let trial = base + j;
                    *out = Some(TrialRecord {
                        trial,
                        outcome: run_trial(base_points, noise, options, trial),
                    });
                }
            });
        }
    });
    let trials: Vec<TrialRecord> = slots.into_iter().map(|s| s.expect("trial ran")).collect();

    // Welford reduction in trial order.
    let mut n_ok = 0usize;
    let mut n_failed = 0usize;
    let mut mean = Vec6::zeros();
    let mut m2 = Mat6::zeros();
    let mut mean_sigma2 = 0.0;
    let mut class_counts = [0usize; 4];
    let n_test = options.test_points.len();
    let mut cov_acc: Vec<(usize, usize, usize, usize, f64, f64)> =
        vec![(0, 0, 0, 0, 0.0, 0.0); n_test];

    for record in &trials {
        match &record.outcome {
            Err(_) => n_failed += 1,
            Ok(fit) => {
                n_ok += 1;
                let x = Vec6::from_column_slice(&fit.g0);
                let d = x - mean;
                mean += d / n_ok as f64;
                let d2 = x - mean;
                m2 += d * d2.transpose();
                mean_sigma2 += (fit.sigma2_hat - mean_sigma2) / n_ok as f64;
                let ci = match fit.class {
                    ConicClass::Ellipse => 0,
                    ConicClass::Hyperbola => 1,
                    ConicClass::Parabola => 2,
                    ConicClass::Degenerate => 3,
                };
                class_counts[ci] += 1;
                for (k, &b) in fit.band_values.iter().enumerate() {
                    let acc = &mut cov_acc[k];
                    acc.0 += 1;
                    if b.abs() > 1.0 {
                        acc.1 += 1;
                    }
                    if b.abs() > 2.0 {
                        acc.2 += 1;
                    }
                    if b.abs() > 3.0 {
                        acc.3 += 1;
                    }
                    let dd = b - acc.4;
                    acc.4 += dd / acc.0 as f64;
                    acc.5 += dd * (b - acc.4);
                }
            }
        }
    }

    let cov_g0 = if n_ok > 1 {
        // Symmetrize: the one-pass update is asymmetric by rounding only.
        let c = m2 / (n_ok - 1) as f64;
        (c + c.transpose()) * 0.5
    } else {
        Mat6::zeros()
    };
    let coverage = options
        .test_points
        .iter()
        .zip(cov_acc)
        .map(|(&point, (n, b1, b2, b3, mean, m2))| CoverageStat {
            point,
            n,
            beyond_1: b1,
            beyond_2: b2,
            beyond_3: b3,
            mean,
            variance: if n > 1 { m2 / (n - 1) as f64 } else { 0.0 },
        })
        .collect();

    TrialEnsemble {
        trials,
        summary: EnsembleSummary {
            n_trials,
            n_failed,
            mean_g0: [mean[0], mean[1], mean[2], mean[3], mean[4], mean[5]],
            cov_g0,
            mean_sigma2,
            class_counts,
            coverage,
        },
    }
}
