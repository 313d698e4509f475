use super::EvalError;
use crate::geometry::Box3D;
use crate::kitti::BBox2D;

/// Below this footprint area (m²) a box is rejected as degenerate.
pub const MIN_FOOTPRINT_AREA: f64 = 1e-12;

pub fn iou_2d(a: &BBox2D, b: &BBox2D) -> f64 {
    let iw = (a.right.min(b.right) - a.left.max(b.left)).max(0.0);
    let ih = (a.bottom.min(b.bottom) - a.top.max(b.top)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union > 0.0 {
        (inter / union).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Intersection area over the area of `det` alone; used for DontCare regions.
pub fn overlap_of_region(det: &BBox2D, region: &BBox2D) -> f64 {
    let iw = (det.right.min(region.right) - det.left.max(region.left)).max(0.0);
    let ih = (det.bottom.min(region.bottom) - det.top.max(region.top)).max(0.0);
    let area = det.area();
    if area > 0.0 {
        iw * ih / area
    } else {
        0.0
    }
}

/// Shoelace area of a simple polygon (absolute value).
pub fn polygon_area(poly: &[(f64, f64)]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let twice: f64 = (0..n)
        .map(|i| {
            let (x0, y0) = poly[i];
            let (x1, y1) = poly[(i + 1) % n];
            x0 * y1 - x1 * y0
        })
        .sum();
    twice.abs() / 2.0
}

fn cross(o: (f64, f64), a: (f64, f64), p: (f64, f64)) -> f64 {
    (a.0 - o.0) * (p.1 - o.1) - (a.1 - o.1) * (p.0 - o.0)
}

/// Sutherland–Hodgman: clips `subject` against the convex, counter-clockwise
/// polygon `clip`. Points on a clip edge count as inside.
pub fn clip_convex(subject: &[(f64, f64)], clip: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut output = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let (c0, c1) = (clip[i], clip[(i + 1) % clip.len()]);
        let input = std::mem::take(&mut output);
        for j in 0..input.len() {
            let s = input[(j + input.len() - 1) % input.len()];
            let e = input[j];
            let ds = cross(c0, c1, s);
            let de = cross(c0, c1, e);
            let crossing = || {
                let t = ds / (ds - de);
                (s.0 + t * (e.0 - s.0), s.1 + t * (e.1 - s.1))
            };
            if de >= 0.0 {
                if ds < 0.0 {
                    output.push(crossing());
                }
                output.push(e);
            } else if ds >= 0.0 {
                output.push(crossing());
            }
        }
    }
    output
}

fn checked_footprint(b: &Box3D) -> Result<[(f64, f64); 4], EvalError> {
    if !(b.w * b.l >= MIN_FOOTPRINT_AREA) {
        return Err(EvalError::DegenerateBox);
    }
    Ok(b.footprint())
}

/// Footprint areas of `a`, `b` and of their intersection.
fn bev_areas(a: &Box3D, b: &Box3D) -> Result<(f64, f64, f64), EvalError> {
    let fa = checked_footprint(a)?;
    let fb = checked_footprint(b)?;
    let inter = polygon_area(&clip_convex(&fa, &fb));
    Ok((polygon_area(&fa), polygon_area(&fb), inter))
}

/// IoU of the yaw-rotated footprints in the x–z plane.
pub fn iou_bev(a: &Box3D, b: &Box3D) -> Result<f64, EvalError> {
    let (area_a, area_b, inter) = bev_areas(a, b)?;
    let union = area_a + area_b - inter;
    Ok(if union > 0.0 {
        (inter / union).clamp(0.0, 1.0)
    } else {
        0.0
    })
}

/// Volumetric IoU; each box spans `[center.y - h, center.y]` vertically.
pub fn iou_3d(a: &Box3D, b: &Box3D) -> Result<f64, EvalError> {
    let (area_a, area_b, inter_area) = bev_areas(a, b)?;
    let top = (a.center.y - a.h).max(b.center.y - b.h);
    let bottom = a.center.y.min(b.center.y);
    let overlap_h = (bottom - top).max(0.0);
    let inter = inter_area * overlap_h;
    let union = area_a * a.h + area_b * b.h - inter;
    Ok(if union > 0.0 {
        (inter / union).clamp(0.0, 1.0)
    } else {
        0.0
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point3Camera;
    use std::f64::consts::{FRAC_PI_4, SQRT_2};

    fn bx(x: f64, y: f64, z: f64, h: f64, w: f64, l: f64, yaw: f64) -> Box3D {
        Box3D::new(Point3Camera::new(x, y, z), h, w, l, yaw).unwrap()
    }

    #[test]
    fn iou_2d_examples() {
        let a = BBox2D {
            left: 0.0,
            top: 0.0,
            right: 2.0,
            bottom: 2.0,
        };
        let b = BBox2D {
            left: 1.0,
            top: 0.0,
            right: 3.0,
            bottom: 2.0,
        };
        let far = BBox2D {
            left: 10.0,
            top: 10.0,
            right: 11.0,
            bottom: 11.0,
        };
        assert_eq!(iou_2d(&a, &a), 1.0);
        assert_eq!(iou_2d(&a, &far), 0.0);
        assert!((iou_2d(&a, &b) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(iou_2d(&a, &b), iou_2d(&b, &a));
    }

    #[test]
    fn bev_identical_and_disjoint() {
        let a = bx(1.0, 1.5, 20.0, 1.5, 1.6, 3.9, 0.7);
        assert_eq!(iou_bev(&a, &a).unwrap(), 1.0);
        assert_eq!(iou_3d(&a, &a).unwrap(), 1.0);
        let b = bx(11.0, 1.5, 20.0, 2.0, 2.0, 2.0, 0.0);
        let c = bx(1.0, 1.5, 20.0, 2.0, 2.0, 2.0, 0.0);
        assert_eq!(iou_bev(&b, &c).unwrap(), 0.0);
    }

    #[test]
    fn rotated_unit_squares() {
        // the intersection is a regular octagon of area 2(√2 − 1)
        let a = bx(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0);
        let b = bx(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, FRAC_PI_4);
        let inter = 2.0 * (SQRT_2 - 1.0);
        let exact = inter / (2.0 - inter);
        let got = iou_bev(&a, &b).unwrap();
        assert!((got - exact).abs() < 1e-12);
        assert!((got - 1.0 / SQRT_2).abs() < 1e-3);
    }

    #[test]
    fn iou_3d_vertical_cases() {
        let a = bx(0.0, 0.0, 10.0, 2.0, 2.0, 2.0, 0.0);
        let raised_full = bx(0.0, -2.0, 10.0, 2.0, 2.0, 2.0, 0.0);
        assert_eq!(iou_3d(&a, &raised_full).unwrap(), 0.0);
        let raised_half = bx(0.0, -1.0, 10.0, 2.0, 2.0, 2.0, 0.0);
        assert!((iou_3d(&a, &raised_half).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_box() {
        let mut a = bx(0.0, 0.0, 10.0, 2.0, 2.0, 2.0, 0.0);
        a.w = 1e-7;
        a.l = 1e-7;
        assert_eq!(iou_bev(&a, &a), Err(EvalError::DegenerateBox));
    }

    #[test]
    fn clip_keeps_contained_polygon() {
        let big = [(-2.0, -2.0), (2.0, -2.0), (2.0, 2.0), (-2.0, 2.0)];
        let small = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];
        assert_eq!(polygon_area(&clip_convex(&small, &big)), 4.0);
        assert_eq!(polygon_area(&clip_convex(&big, &small)), 4.0);
    }
}
