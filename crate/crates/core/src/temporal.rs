//! Temporal spans and 1-D overlap measures.
//!
//! Spans are held in center/width form. JSON uses `[start, end]` pairs.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Span {
    pub center: f64,
    pub width: f64,
}

impl Span {
    pub fn new(center: f64, width: f64) -> Result<Self> {
        if !(width >= 0.0) || !center.is_finite() || !width.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "span needs finite center and non-negative width, got ({center}, {width})"
            )));
        }
        Ok(Self { center, width })
    }

    pub fn from_interval(start: f64, end: f64) -> Result<Self> {
        if start > end || !start.is_finite() || !end.is_finite() {
            return Err(Error::InvalidInterval { start, end });
        }
        Ok(Self {
            center: 0.5 * (start + end),
            width: end - start,
        })
    }

    #[inline]
    pub fn start(&self) -> f64 {
        self.center - 0.5 * self.width
    }

    #[inline]
    pub fn end(&self) -> f64 {
        self.center + 0.5 * self.width
    }

    pub fn to_interval(&self) -> (f64, f64) {
        (self.start(), self.end())
    }

    pub fn shifted(&self, by: f64) -> Span {
        Span {
            center: self.center + by,
            width: self.width,
        }
    }

    pub fn scaled(&self, k: f64) -> Span {
        Span {
            center: self.center * k,
            width: self.width * k,
        }
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.center, self.width]
    }
}

impl Serialize for Span {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [self.start(), self.end()].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Span {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [start, end] = <[f64; 2]>::deserialize(d)?;
        Span::from_interval(start, end).map_err(serde::de::Error::custom)
    }
}

#[inline]
fn intersection(a: &Span, b: &Span) -> f64 {
    (a.end().min(b.end()) - a.start().max(b.start())).max(0.0)
}

/// Intersection over union. Two point spans give 1 when they coincide, else 0.
pub fn iou(a: &Span, b: &Span) -> f64 {
    let inter = intersection(a, b);
    let union = a.width + b.width - inter;
    if union <= 0.0 {
        return if a.center == b.center { 1.0 } else { 0.0 };
    }
    inter / union
}

/// Generalized IoU: `iou − (|hull| − |union|)/|hull|`. A zero-length hull gives 1.
pub fn giou(a: &Span, b: &Span) -> f64 {
    let hull = a.end().max(b.end()) - a.start().min(b.start());
    if hull <= 0.0 {
        return 1.0;
    }
    let inter = intersection(a, b);
    let union = a.width + b.width - inter;
    let iou = if union <= 0.0 { 0.0 } else { inter / union };
    // hull ≥ union; clamp rounding so overlapping spans give giou == iou
    iou - ((hull - union) / hull).max(0.0)
}

/// GIoU of `(target, pred)` and its partial derivatives with respect to
/// `pred.center` and `pred.width`.
///
/// Derivatives are one-sided at kinks (coincident endpoints, touching spans).
pub fn giou_with_grad(target: &Span, pred: &Span) -> (f64, [f64; 2]) {
    let (s1, e1) = target.to_interval();
    let (s2, e2) = pred.to_interval();
    let hull = e1.max(e2) - s1.min(s2);
    if hull <= 0.0 {
        return (1.0, [0.0, 0.0]);
    }
    let inter_raw = e1.min(e2) - s1.max(s2);
    let inter = inter_raw.max(0.0);
    let union = (e1 - s1) + (e2 - s2) - inter;

    // d/ds2 and d/de2 of inter, union, hull
    let overlapping = inter_raw > 0.0;
    let di_de = if overlapping && e2 < e1 { 1.0 } else { 0.0 };
    let di_ds = if overlapping && s2 > s1 { -1.0 } else { 0.0 };
    let du_de = 1.0 - di_de;
    let du_ds = -1.0 - di_ds;
    let dh_de = if e2 > e1 { 1.0 } else { 0.0 };
    let dh_ds = if s2 < s1 { -1.0 } else { 0.0 };

    let (iou, d_iou_de, d_iou_ds) = if union > 0.0 {
        let u2 = union * union;
        (
            inter / union,
            (di_de * union - inter * du_de) / u2,
            (di_ds * union - inter * du_ds) / u2,
        )
    } else {
        (0.0, 0.0, 0.0)
    };
    let h2 = hull * hull;
    // giou = iou − 1 + union/hull
    let value = iou - ((hull - union) / hull).max(0.0);
    let d_de = d_iou_de + (du_de * hull - union * dh_de) / h2;
    let d_ds = d_iou_ds + (du_ds * hull - union * dh_ds) / h2;
    // s = c − w/2, e = c + w/2
    (value, [d_ds + d_de, 0.5 * (d_de - d_ds)])
}

/// Distance from `pred` to the nearest non-differentiable configuration of
/// `giou(target, pred)` along any single coordinate of `pred`.
pub fn giou_kink_distance(target: &Span, pred: &Span) -> f64 {
    let (s1, e1) = target.to_interval();
    let (s2, e2) = pred.to_interval();
    [e1 - e2, s1 - s2, e2 - s1, e1 - s2, pred.width]
        .iter()
        .map(|d| d.abs())
        .fold(f64::INFINITY, f64::min)
}
