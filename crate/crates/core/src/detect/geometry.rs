use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in image pixels; `right > left`, `bottom > top`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub left: f64,
    pub top: f64,
    pub right: f64,
    pub bottom: f64,
}

impl BoundingBox {
    pub fn new(left: f64, top: f64, right: f64, bottom: f64) -> Result<Self> {
        let b = BoundingBox {
            left,
            top,
            right,
            bottom,
        };
        if !(left.is_finite() && top.is_finite() && right.is_finite() && bottom.is_finite()) {
            return Err(Error::invalid("box coordinates must be finite"));
        }
        if !(right > left && bottom > top) {
            return Err(Error::invalid(format!(
                "box ({left}, {top}, {right}, {bottom}) has no area"
            )));
        }
        Ok(b)
    }

    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(x, y, x + w, y + h)
    }

    pub fn width(&self) -> f64 {
        self.right - self.left
    }

    pub fn height(&self) -> f64 {
        self.bottom - self.top
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.left + self.right) / 2.0,
            (self.top + self.bottom) / 2.0,
        )
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = self.right.min(other.right) - self.left.max(other.left);
        let h = self.bottom.min(other.bottom) - self.top.max(other.top);
        if w > 0.0 && h > 0.0 {
            w * h
        } else {
            0.0
        }
    }

    /// Clips to `[0, width] x [0, height]`; `None` when nothing is left.
    pub fn clip(&self, width: f64, height: f64) -> Option<BoundingBox> {
        let b = BoundingBox {
            left: self.left.clamp(0.0, width),
            top: self.top.clamp(0.0, height),
            right: self.right.clamp(0.0, width),
            bottom: self.bottom.clamp(0.0, height),
        };
        (b.right > b.left && b.bottom > b.top).then_some(b)
    }
}

/// Intersection over union.
pub fn pascal_overlap(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(l: f64, t: f64, r: f64, b: f64) -> BoundingBox {
        BoundingBox::new(l, t, r, b).unwrap()
    }

    #[test]
    fn overlap_cases() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        assert_eq!(pascal_overlap(&a, &a), 1.0);
        assert_eq!(pascal_overlap(&a, &bx(20.0, 0.0, 30.0, 10.0)), 0.0);
        assert_eq!(pascal_overlap(&a, &bx(5.0, 0.0, 15.0, 10.0)), 50.0 / 150.0);
        assert_eq!(pascal_overlap(&a, &bx(10.0, 0.0, 15.0, 10.0)), 0.0);
    }

    #[test]
    fn degenerate_rejected() {
        assert!(BoundingBox::new(1.0, 0.0, 1.0, 5.0).is_err());
        assert!(BoundingBox::new(0.0, 0.0, f64::NAN, 5.0).is_err());
    }

    #[test]
    fn clipping() {
        let b = bx(-5.0, 2.0, 12.0, 30.0).clip(10.0, 20.0).unwrap();
        assert_eq!(b, bx(0.0, 2.0, 10.0, 20.0));
        assert!(bx(11.0, 0.0, 12.0, 1.0).clip(10.0, 10.0).is_none());
    }
}
