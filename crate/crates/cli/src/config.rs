//! Experiment configuration: a plain JSON document describing the curve,
//! the noise, the pipeline options and the outputs.

use conicfit::synth::{CurveKind, CurveSpec, NoiseSpec, Spacing, TypedTarget, WeightingMode};
use conicfit::Point2;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CurveConfig {
    Ellipse { semi_major: f64, semi_minor: f64 },
    Parabola { focal_length: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpacingConfig {
    Parameter,
    ArcLength,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSection {
    #[serde(flatten)]
    pub curve: CurveConfig,
    /// Parameter range of the sampled arc.
    pub arc: (f64, f64),
    #[serde(default)]
    pub rotation: f64,
    #[serde(default)]
    pub translation: (f64, f64),
    #[serde(default = "default_spacing")]
    pub spacing: SpacingConfig,
}

fn default_spacing() -> SpacingConfig {
    SpacingConfig::Parameter
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSection {
    pub sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingConfig {
    Unweighted,
    Reweighted,
    Sampson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetConfig {
    Parabola,
    Ellipse,
    Hyperbola,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSection {
    #[serde(default = "default_weighting")]
    pub weighting: WeightingConfig,
    #[serde(default = "default_true")]
    pub curvature_correction: bool,
    #[serde(default)]
    pub type_target: Option<TargetConfig>,
    /// Propagate errors into per-trial center estimates.
    #[serde(default)]
    pub compute_center: bool,
}

fn default_weighting() -> WeightingConfig {
    WeightingConfig::Reweighted
}

fn default_true() -> bool {
    true
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self {
            weighting: WeightingConfig::Reweighted,
            curvature_correction: true,
            type_target: None,
            compute_center: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSection {
    #[serde(default)]
    pub summary_csv: Option<String>,
    #[serde(default)]
    pub trials_csv: Option<String>,
    #[serde(default)]
    pub svg: Option<String>,
    /// Plot bounding box (xmin, ymin, xmax, ymax).
    #[serde(default = "default_bbox")]
    pub bbox: (f64, f64, f64, f64),
    /// Contouring grid resolution per axis.
    #[serde(default = "default_grid")]
    pub grid: usize,
}

fn default_bbox() -> (f64, f64, f64, f64) {
    (-1.3, -0.4, 1.3, 0.4)
}

fn default_grid() -> usize {
    400
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            summary_csv: None,
            trials_csv: None,
            svg: None,
            bbox: default_bbox(),
            grid: default_grid(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub curve: CurveSection,
    pub noise: NoiseSection,
    pub n_points: usize,
    pub n_trials: usize,
    #[serde(default)]
    pub pipeline: PipelineSection,
    /// On-curve coverage test points; by default 50 points spread over the
    /// sampled arc.
    #[serde(default)]
    pub test_points: Option<Vec<(f64, f64)>>,
    #[serde(default)]
    pub outputs: OutputSection,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    #[cfg(test)]
    pub fn print(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn curve_spec(&self) -> CurveSpec {
        let kind = match self.curve.curve {
            CurveConfig::Ellipse {
                semi_major,
                semi_minor,
            } => CurveKind::Ellipse {
                semi_major,
                semi_minor,
            },
            CurveConfig::Parabola { focal_length } => CurveKind::Parabola { focal_length },
        };
        CurveSpec {
            kind,
            arc: self.curve.arc,
            rotation: self.curve.rotation,
            translation: Point2::new(self.curve.translation.0, self.curve.translation.1),
            spacing: match self.curve.spacing {
                SpacingConfig::Parameter => Spacing::Parameter,
                SpacingConfig::ArcLength => Spacing::ArcLength,
            },
        }
    }

    pub fn noise_spec(&self) -> NoiseSpec {
        NoiseSpec {
            sigma: self.noise.sigma,
            seed: self.noise.seed,
        }
    }

    pub fn weighting_mode(&self) -> WeightingMode {
        match self.pipeline.weighting {
            WeightingConfig::Unweighted => WeightingMode::Unweighted,
            WeightingConfig::Reweighted => WeightingMode::Reweighted,
            WeightingConfig::Sampson => WeightingMode::Sampson,
        }
    }

    pub fn typed_target(&self) -> Option<TypedTarget> {
        self.pipeline.type_target.map(|t| match t {
            TargetConfig::Parabola => TypedTarget::Parabola,
            TargetConfig::Ellipse => TypedTarget::Ellipse,
            TargetConfig::Hyperbola => TypedTarget::Hyperbola,
        })
    }

    /// Coverage points: the configured list, or 50 spread over the arc.
    pub fn coverage_points(&self) -> Vec<Point2> {
        match &self.test_points {
            Some(list) => list.iter().map(|&(x, y)| Point2::new(x, y)).collect(),
            None => {
                let spec = self.curve_spec();
                (0..50)
                    .map(|i| {
                        let (t0, t1) = spec.arc;
                        spec.point_at(t0 + (t1 - t0) * i as f64 / 49.0)
                    })
                    .collect()
            }
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self.curve.curve {
            CurveConfig::Ellipse {
                semi_major,
                semi_minor,
            } => {
                if !(semi_major >= semi_minor && semi_minor > 0.0) {
                    return Err("ellipse requires semi_major >= semi_minor > 0".into());
                }
            }
            CurveConfig::Parabola { focal_length } => {
                if !(focal_length > 0.0) {
                    return Err("parabola requires focal_length > 0".into());
                }
            }
        }
        if self.curve.arc.0 == self.curve.arc.1 {
            return Err("arc must be nonempty".into());
        }
        if self.noise.sigma < 0.0 {
            return Err("sigma must be nonnegative".into());
        }
        if self.n_points < 6 {
            return Err("n_points must be at least 6".into());
        }
        if self.n_trials == 0 {
            return Err("n_trials must be at least 1".into());
        }
        if self.outputs.grid < 8 {
            return Err("grid must be at least 8".into());
        }
        let (x0, y0, x1, y1) = self.outputs.bbox;
        if !(x1 > x0 && y1 > y0) {
            return Err("bbox must have positive extent".into());
        }
        Ok(())
    }
}
