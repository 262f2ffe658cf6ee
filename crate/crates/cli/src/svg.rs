//! Minimal deterministic SVG output: polylines, markers and marching-squares
//! contours of scalar fields. Coordinates are data units mapped into a fixed
//! pixel viewport with equal aspect; all numbers are written with fixed
//! six-decimal formatting so output is byte-stable.

use conicfit::Point2;

pub struct Canvas {
    bbox: (f64, f64, f64, f64),
    width: f64,
    height: f64,
    body: String,
}

impl Canvas {
    pub fn new(bbox: (f64, f64, f64, f64), width_px: f64) -> Self {
        let (x0, y0, x1, y1) = bbox;
        let height_px = width_px * (y1 - y0) / (x1 - x0);
        Self {
            bbox,
            width: width_px,
            height: height_px,
            body: String::new(),
        }
    }

    fn map(&self, p: Point2) -> (f64, f64) {
        let (x0, y0, x1, y1) = self.bbox;
        (
            (p.x - x0) / (x1 - x0) * self.width,
            (y1 - p.y) / (y1 - y0) * self.height,
        )
    }

    pub fn polyline(&mut self, points: &[Point2], stroke: &str, width: f64, opacity: f64) {
        if points.len() < 2 {
            return;
        }
        let mut d = String::new();
        for (i, &p) in points.iter().enumerate() {
            let (x, y) = self.map(p);
            if !x.is_finite() || !y.is_finite() {
                continue;
            }
            d.push_str(if i == 0 { "M" } else { " L" });
            d.push_str(&format!("{x:.3} {y:.3}"));
        }
        self.body.push_str(&format!(
            "<path d=\"{d}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"{width:.2}\" stroke-opacity=\"{opacity:.2}\"/>\n"
        ));
    }

    pub fn segments(&mut self, segments: &[[Point2; 2]], stroke: &str, width: f64, opacity: f64) {
        if segments.is_empty() {
            return;
        }
        let mut d = String::new();
        for seg in segments {
            let (x0, y0) = self.map(seg[0]);
            let (x1, y1) = self.map(seg[1]);
            d.push_str(&format!("M{x0:.3} {y0:.3} L{x1:.3} {y1:.3} "));
        }
        self.body.push_str(&format!(
            "<path d=\"{}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"{width:.2}\" stroke-opacity=\"{opacity:.2}\"/>\n",
            d.trim_end()
        ));
    }

    pub fn circle(&mut self, center: Point2, radius_px: f64, fill: &str, filled: bool) {
        let (x, y) = self.map(center);
        if !x.is_finite() || !y.is_finite() {
            return;
        }
        if filled {
            self.body.push_str(&format!(
                "<circle cx=\"{x:.3}\" cy=\"{y:.3}\" r=\"{radius_px:.2}\" fill=\"{fill}\"/>\n"
            ));
        } else {
            self.body.push_str(&format!(
                "<circle cx=\"{x:.3}\" cy=\"{y:.3}\" r=\"{radius_px:.2}\" fill=\"none\" stroke=\"{fill}\" stroke-width=\"0.8\"/>\n"
            ));
        }
    }

    pub fn cross(&mut self, center: Point2, arm_px: f64, stroke: &str) {
        let (x, y) = self.map(center);
        self.body.push_str(&format!(
            "<path d=\"M{:.3} {:.3} L{:.3} {:.3} M{:.3} {:.3} L{:.3} {:.3}\" stroke=\"{stroke}\" stroke-width=\"1.5\"/>\n",
            x - arm_px, y - arm_px, x + arm_px, y + arm_px, x - arm_px, y + arm_px, x + arm_px, y - arm_px
        ));
    }

    pub fn finish(self) -> String {
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"{:.0}\" viewBox=\"0 0 {:.0} {:.0}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.width, self.height, self.width, self.height, self.body
        )
    }
}

/// Marching-squares level contour of `field` on a uniform grid over `bbox`.
/// Returns line segments in data units with linear edge interpolation.
pub fn contour_segments(
    field: &dyn Fn(f64, f64) -> f64,
    bbox: (f64, f64, f64, f64),
    grid: usize,
    level: f64,
) -> Vec<[Point2; 2]> {
    let (x0, y0, x1, y1) = bbox;
    let nx = grid;
    let ny = ((y1 - y0) / (x1 - x0) * grid as f64).ceil().max(8.0) as usize;
    let dx = (x1 - x0) / nx as f64;
    let dy = (y1 - y0) / ny as f64;

    // Sample the field once per node.
    let mut values = vec![0.0f64; (nx + 1) * (ny + 1)];
    for j in 0..=ny {
        for i in 0..=nx {
            values[j * (nx + 1) + i] = field(x0 + i as f64 * dx, y0 + j as f64 * dy) - level;
        }
    }

    let mut segments = Vec::new();
    let interp = |pa: (f64, f64), pb: (f64, f64), va: f64, vb: f64| -> Point2 {
        let t = if (vb - va).abs() < 1e-300 {
            0.5
        } else {
            (va / (va - vb)).clamp(0.0, 1.0)
        };
        Point2::new(pa.0 + t * (pb.0 - pa.0), pa.1 + t * (pb.1 - pa.1))
    };

    for j in 0..ny {
        for i in 0..nx {
            let xa = x0 + i as f64 * dx;
            let xb = xa + dx;
            let ya = y0 + j as f64 * dy;
            let yb = ya + dy;
            let v00 = values[j * (nx + 1) + i];
            let v10 = values[j * (nx + 1) + i + 1];
            let v01 = values[(j + 1) * (nx + 1) + i];
            let v11 = values[(j + 1) * (nx + 1) + i + 1];
            if !(v00.is_finite() && v10.is_finite() && v01.is_finite() && v11.is_finite()) {
                continue;
            }
            let mut case = 0u8;
            if v00 > 0.0 {
                case |= 1;
            }
            if v10 > 0.0 {
                case |= 2;
            }
            if v11 > 0.0 {
                case |= 4;
            }
            if v01 > 0.0 {
                case |= 8;
            }
            if case == 0 || case == 15 {
                continue;
            }
            // Edge crossing points: bottom, right, top, left.
            let bottom = interp((xa, ya), (xb, ya), v00, v10);
            let right = interp((xb, ya), (xb, yb), v10, v11);
            let top = interp((xa, yb), (xb, yb), v01, v11);
            let left = interp((xa, ya), (xa, yb), v00, v01);
            let mut push = |a: Point2, b: Point2| segments.push([a, b]);
            match case {
                1 | 14 => push(left, bottom),
                2 | 13 => push(bottom, right),
                3 | 12 => push(left, right),
                4 | 11 => push(right, top),
                6 | 9 => push(bottom, top),
                7 | 8 => push(left, top),
                5 => {
                    push(left, bottom);
                    push(right, top);
                }
                10 => {
                    push(bottom, right);
                    push(left, top);
                }
                _ => unreachable!(),
            }
        }
    }
    segments
}
