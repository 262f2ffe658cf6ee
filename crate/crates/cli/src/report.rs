//! Fit reports: the JSON/CSV surface of a single fit.

use conicfit::pipeline::GenericFit;
use conicfit::typed::{ParabolicFit, TruncatedPosterior};
use conicfit::{CenterEstimate, ConicClass};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TypedBlock {
    /// Nearest parabola on the constraint surface.
    pub parabola: [f64; 6],
    pub iterations: usize,
    pub residual: f64,
    /// Present for ellipse/hyperbola targets.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<[f64; 6]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_classification: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CenterBlock {
    pub center: [f64; 2],
    pub bias: [f64; 2],
    /// Row-major 2x2 covariance.
    pub covariance: [f64; 4],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub schema_version: u32,
    /// Curvature-corrected coefficients (x², xy, y², x, y, 1 ordering).
    pub coefficients: [f64; 6],
    pub coefficients_raw: [f64; 6],
    pub eigenvalues: [f64; 5],
    pub sigma2: f64,
    /// Row-major 6x6 covariance of the corrected coefficients.
    pub covariance: Vec<f64>,
    pub classification: String,
    pub weighting: String,
    pub n_points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub typed: Option<TypedBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center: Option<CenterBlock>,
    pub warnings: Vec<String>,
}

pub fn class_name(class: ConicClass) -> &'static str {
    match class {
        ConicClass::Ellipse => "ellipse",
        ConicClass::Hyperbola => "hyperbola",
        ConicClass::Parabola => "parabola",
        ConicClass::Degenerate => "degenerate",
    }
}

impl FitReport {
    pub fn from_fit(fit: &GenericFit, warnings: Vec<String>) -> Self {
        let mut covariance = Vec::with_capacity(36);
        for r in 0..6 {
            for c in 0..6 {
                covariance.push(fit.v0[(r, c)]);
            }
        }
        Self {
            schema_version: SCHEMA_VERSION,
            coefficients: fit.g0.0,
            coefficients_raw: fit.g0_raw.0,
            eigenvalues: fit.lambdas,
            sigma2: fit.sigma2_hat,
            covariance,
            classification: class_name(fit.classify()).to_string(),
            weighting: format!("{:?}", fit.weighting).to_lowercase(),
            n_points: fit.n_points,
            typed: None,
            center: None,
            warnings,
        }
    }

    pub fn with_parabolic(mut self, pf: &ParabolicFit) -> Self {
        self.typed = Some(TypedBlock {
            parabola: pf.g_bar.0,
            iterations: pf.iterations,
            residual: pf.residual,
            x0: None,
            mean: None,
            mean_classification: None,
        });
        self
    }

    pub fn with_truncated(mut self, pf: &ParabolicFit, post: &TruncatedPosterior) -> Self {
        self.typed = Some(TypedBlock {
            parabola: pf.g_bar.0,
            iterations: pf.iterations,
            residual: pf.residual,
            x0: Some(post.x0),
            mean: Some(post.mean.0),
            mean_classification: Some(
                class_name(post.mean.classify(conicfit::conic::DEFAULT_CLASSIFY_TOL)).to_string(),
            ),
        });
        self
    }

    pub fn with_center(mut self, est: &CenterEstimate) -> Self {
        self.center = Some(CenterBlock {
            center: [est.center.x, est.center.y],
            bias: [est.bias.x, est.bias.y],
            covariance: [
                est.covariance[(0, 0)],
                est.covariance[(0, 1)],
                est.covariance[(1, 0)],
                est.covariance[(1, 1)],
            ],
        });
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Flat key,value CSV rendering.
    pub fn to_csv(&self) -> String {
        let mut rows: Vec<(String, String)> = vec![
            ("schema_version".into(), self.schema_version.to_string()),
            ("classification".into(), self.classification.clone()),
            ("weighting".into(), self.weighting.clone()),
            ("n_points".into(), self.n_points.to_string()),
            ("sigma2".into(), self.sigma2.to_string()),
        ];
        for (i, g) in self.coefficients.iter().enumerate() {
            rows.push((format!("g{}", i + 1), g.to_string()));
        }
        for (i, g) in self.coefficients_raw.iter().enumerate() {
            rows.push((format!("raw_g{}", i + 1), g.to_string()));
        }
        for (i, l) in self.eigenvalues.iter().enumerate() {
            rows.push((format!("lambda{i}"), l.to_string()));
        }
        for r in 0..6 {
            for c in 0..6 {
                rows.push((
                    format!("v{}{}", r + 1, c + 1),
                    self.covariance[r * 6 + c].to_string(),
                ));
            }
        }
        if let Some(t) = &self.typed {
            for (i, g) in t.parabola.iter().enumerate() {
                rows.push((format!("parabola_g{}", i + 1), g.to_string()));
            }
            rows.push(("parabola_iterations".into(), t.iterations.to_string()));
            rows.push(("parabola_residual".into(), t.residual.to_string()));
            if let Some(x0) = t.x0 {
                rows.push(("x0".into(), x0.to_string()));
            }
            if let Some(mean) = t.mean {
                for (i, g) in mean.iter().enumerate() {
                    rows.push((format!("mean_g{}", i + 1), g.to_string()));
                }
            }
            if let Some(mc) = &t.mean_classification {
                rows.push(("mean_classification".into(), mc.clone()));
            }
        }
        if let Some(c) = &self.center {
            rows.push(("center_x".into(), c.center[0].to_string()));
            rows.push(("center_y".into(), c.center[1].to_string()));
            rows.push(("center_bias_x".into(), c.bias[0].to_string()));
            rows.push(("center_bias_y".into(), c.bias[1].to_string()));
            rows.push(("center_var_x".into(), c.covariance[0].to_string()));
            rows.push(("center_cov_xy".into(), c.covariance[1].to_string()));
            rows.push(("center_var_y".into(), c.covariance[3].to_string()));
        }
        for (i, w) in self.warnings.iter().enumerate() {
            rows.push((
                format!("warning{i}"),
                format!("\"{}\"", w.replace('"', "\"\"")),
            ));
        }
        let mut out = String::from("key,value\n");
        for (k, v) in rows {
            out.push_str(&format!("{k},{v}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use conicfit::pipeline::{generic_fit, Weighting};
    use conicfit::Point2;

    fn sample_fit() -> GenericFit {
        let pts: Vec<Point2> = (0..12)
            .map(|i| {
                let t = i as f64 * 0.5;
                Point2::new(t.cos(), 0.4 * t.sin())
            })
            .collect();
        generic_fit(&pts, Weighting::Unweighted).unwrap()
    }

    #[test]
    fn json_round_trip() {
        let report = FitReport::from_fit(&sample_fit(), vec![]);
        let text = report.to_json();
        let back: FitReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back.schema_version, SCHEMA_VERSION);
        assert_eq!(back.coefficients, report.coefficients);
        assert_eq!(back.classification, "ellipse");
    }

    #[test]
    fn all_fields_finite() {
        let report = FitReport::from_fit(&sample_fit(), vec![]);
        assert!(report.coefficients.iter().all(|v| v.is_finite()));
        assert!(report.covariance.iter().all(|v| v.is_finite()));
        assert!(report.sigma2.is_finite());
    }

    #[test]
    fn csv_has_key_value_shape() {
        let report = FitReport::from_fit(&sample_fit(), vec![]);
        let csv = report.to_csv();
        for line in csv.lines().skip(1) {
            assert_eq!(line.split(',').count(), 2, "row: {line}");
        }
    }
}
