use std::io::{BufRead, Write};

use super::geometry::BoundingBox;
use super::Detection;
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const DETECTION_HEADER: &str =
    "# image_id class subcat left top right bottom raw_score calibrated_score";

/// A detection tagged with the image it was found in.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord<T> {
    pub image_id: String,
    pub detection: Detection<T>,
}

/// Writes the header and one line per record, sorted by image id and then by
/// descending calibrated score (stable for ties).
pub fn write_detections<T: Real, W: Write>(
    mut out: W,
    records: &[DetectionRecord<T>],
) -> Result<()> {
    let mut order: Vec<&DetectionRecord<T>> = records.iter().collect();
    order.sort_by(|a, b| {
        a.image_id.cmp(&b.image_id).then(
            b.detection
                .score
                .partial_cmp(&a.detection.score)
                .unwrap_or(std::cmp::Ordering::Equal),
        )
    });
    let io = |e| Error::io("<detections>", e);
    writeln!(out, "{DETECTION_HEADER}").map_err(io)?;
    for r in order {
        let d = &r.detection;
        writeln!(
            out,
            "{} {} {} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6}",
            r.image_id,
            d.class,
            d.subcategory,
            d.bbox.left,
            d.bbox.top,
            d.bbox.right,
            d.bbox.bottom,
            d.raw.as_f64(),
            d.score.as_f64()
        )
        .map_err(io)?;
    }
    Ok(())
}

/// Parses the line format written by [`write_detections`]; `#` lines are skipped.
pub fn read_detections<R: BufRead>(input: R, source: &str) -> Result<Vec<DetectionRecord<f64>>> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: source.into(),
            line: n + 1,
            message,
        };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 9 {
            return Err(parse_err(format!("expected 9 fields, found {}", f.len())));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| parse_err(format!("'{s}' is not a number")))
        };
        let subcategory = f[2]
            .parse::<usize>()
            .map_err(|_| parse_err(format!("'{}' is not a subcategory index", f[2])))?;
        let bbox = BoundingBox::new(num(f[3])?, num(f[4])?, num(f[5])?, num(f[6])?)
            .map_err(|e| parse_err(e.to_string()))?;
        out.push(DetectionRecord {
            image_id: f[0].to_string(),
            detection: Detection {
                bbox,
                class: f[1].to_string(),
                subcategory,
                raw: num(f[7])?,
                score: num(f[8])?,
            },
        });
    }
    Ok(out)
}
