//! Point-file parsing: two comma-separated decimal fields per row, an
//! optional header line, exponent notation accepted.

use conicfit::Point2;

#[derive(Debug)]
pub struct PointParseError {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for PointParseError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

pub fn parse_points(text: &str) -> Result<Vec<Point2>, PointParseError> {
    let mut points = Vec::new();
    let mut saw_data = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(PointParseError {
                line: line_no,
                message: format!("expected 2 comma-separated fields, found {}", fields.len()),
            });
        }
        let parsed: Vec<Result<f64, _>> = fields.iter().map(|f| f.parse::<f64>()).collect();
        match (&parsed[0], &parsed[1]) {
            (Ok(x), Ok(y)) => {
                if !x.is_finite() || !y.is_finite() {
                    return Err(PointParseError {
                        line: line_no,
                        message: "non-finite coordinate".into(),
                    });
                }
                points.push(Point2::new(*x, *y));
                saw_data = true;
            }
            _ => {
                // A single non-numeric first row is a header.
                if !saw_data && points.is_empty() && idx == first_content_line(text) {
                    continue;
                }
                let bad = if parsed[0].is_err() {
                    fields[0]
                } else {
                    fields[1]
                };
                return Err(PointParseError {
                    line: line_no,
                    message: format!("cannot parse '{bad}' as a number"),
                });
            }
        }
    }
    Ok(points)
}

fn first_content_line(text: &str) -> usize {
    text.lines().position(|l| !l.trim().is_empty()).unwrap_or(0)
}

/// Writes points with shortest-round-trip formatting (exact re-parse).
#[cfg(test)]
pub fn write_points(points: &[Point2]) -> String {
    let mut out = String::from("x,y\n");
    for p in points {
        out.push_str(&format!("{},{}\n", p.x, p.y));
    }
    out
}
