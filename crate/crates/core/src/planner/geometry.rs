//! Plane polygon helpers. Polygons are closed implicitly (last vertex joins
//! the first).

use nalgebra::Vector2;

pub fn signed_area(poly: &[Vector2<f64>]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        * 0.5
}

/// Points closer than this to an edge count as on the boundary, m.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// Even-odd test; points on an edge (within [`BOUNDARY_TOL`]) count as inside.
pub fn point_in_polygon(x: &Vector2<f64>, poly: &[Vector2<f64>]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    if distance_to_boundary(x, poly) <= BOUNDARY_TOL {
        return true;
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > x[1]) != (b[1] > x[1]) {
            let cross = a[0] + (x[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if x[0] < cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn closest_on_segment(x: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> Vector2<f64> {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return *a;
    }
    let t = ((x - a).dot(&ab) / len2).clamp(0.0, 1.0);
    a + ab * t
}

pub fn nearest_boundary_point(x: &Vector2<f64>, poly: &[Vector2<f64>]) -> Vector2<f64> {
    let n = poly.len();
    let mut best = poly[0];
    let mut best_d = f64::INFINITY;
    for i in 0..n {
        let c = closest_on_segment(x, &poly[i], &poly[(i + 1) % n]);
        let d = (c - x).norm_squared();
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

pub fn distance_to_boundary(x: &Vector2<f64>, poly: &[Vector2<f64>]) -> f64 {
    (nearest_boundary_point(x, poly) - x).norm()
}

fn orient(a: &Vector2<f64>, b: &Vector2<f64>, c: &Vector2<f64>) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn segments_intersect(
    p1: &Vector2<f64>,
    p2: &Vector2<f64>,
    q1: &Vector2<f64>,
    q2: &Vector2<f64>,
) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |a: &Vector2<f64>, b: &Vector2<f64>, c: &Vector2<f64>, d: f64| {
        d == 0.0
            && c[0] >= a[0].min(b[0])
            && c[0] <= a[0].max(b[0])
            && c[1] >= a[1].min(b[1])
            && c[1] <= a[1].max(b[1])
    };
    on(q1, q2, p1, d1) || on(q1, q2, p2, d2) || on(p1, p2, q1, d3) || on(p1, p2, q2, d4)
}

/// True when no two non-adjacent edges touch.
pub fn is_simple(poly: &[Vector2<f64>]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        let (a1, a2) = (poly[i], poly[(i + 1) % n]);
        if a1 == a2 {
            return false;
        }
        for j in (i + 1)..n {
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            let (b1, b2) = (poly[j], poly[(j + 1) % n]);
            if segments_intersect(&a1, &a2, &b1, &b2) {
                return false;
            }
        }
    }
    true
}
