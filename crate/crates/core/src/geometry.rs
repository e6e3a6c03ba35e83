//! Planar geometry: vectors, oriented rectangles, and route polylines.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

/// A 2D point on the bird's-eye-view plane, in meters.
pub type Waypoint = Vec2;

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_heading(heading: f64) -> Self {
        Self::new(heading.cos(), heading.sin())
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn scale(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }

    /// Left-hand normal of this vector.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

/// Wraps an angle into (-pi, pi].
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a % (2.0 * PI);
    if r <= -PI {
        r += 2.0 * PI;
    } else if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Expresses a global point in the frame of a pose (x forward, y left).
pub fn to_local(origin: Vec2, heading: f64, p: Vec2) -> Vec2 {
    let d = p - origin;
    let (s, c) = heading.sin_cos();
    Vec2::new(c * d.x + s * d.y, -s * d.x + c * d.y)
}

/// Inverse of [`to_local`].
pub fn to_global(origin: Vec2, heading: f64, p: Vec2) -> Vec2 {
    let (s, c) = heading.sin_cos();
    Vec2::new(origin.x + c * p.x - s * p.y, origin.y + s * p.x + c * p.y)
}

/// Oriented rectangle footprint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obb {
    pub center: Vec2,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

impl Obb {
    fn axes(&self) -> [Vec2; 2] {
        let f = Vec2::from_heading(self.heading);
        [f, f.perp()]
    }

    fn corners(&self) -> [Vec2; 4] {
        let [f, l] = self.axes();
        let hf = f.scale(self.length / 2.0);
        let hl = l.scale(self.width / 2.0);
        [
            self.center + hf + hl,
            self.center + hf - hl,
            self.center - hf - hl,
            self.center - hf + hl,
        ]
    }

    /// Separating-axis overlap test. Touching edges do not count.
    pub fn overlaps(&self, other: &Obb) -> bool {
        let reach = (self.length.hypot(self.width) + other.length.hypot(other.width)) / 2.0;
        if self.center.dist(other.center) >= reach {
            return false;
        }
        let ca = self.corners();
        let cb = other.corners();
        for axis in self.axes().into_iter().chain(other.axes()) {
            let (amin, amax) = project(&ca, axis);
            let (bmin, bmax) = project(&cb, axis);
            if amax <= bmin || bmax <= amin {
                return false;
            }
        }
        true
    }

    /// Whether the segment `a -> b` passes through the rectangle interior.
    pub fn intersects_segment(&self, a: Vec2, b: Vec2) -> bool {
        let la = to_local(self.center, self.heading, a);
        let lb = to_local(self.center, self.heading, b);
        let (hx, hy) = (self.length / 2.0, self.width / 2.0);
        // Liang-Barsky clip against the axis-aligned local box.
        let d = lb - la;
        let mut t0 = 0.0_f64;
        let mut t1 = 1.0_f64;
        for (p, q) in [
            (-d.x, la.x + hx),
            (d.x, hx - la.x),
            (-d.y, la.y + hy),
            (d.y, hy - la.y),
        ] {
            if p == 0.0 {
                if q <= 0.0 {
                    return false;
                }
            } else {
                let r = q / p;
                if p < 0.0 {
                    t0 = t0.max(r);
                } else {
                    t1 = t1.min(r);
                }
                if t0 >= t1 {
                    return false;
                }
            }
        }
        true
    }
}

fn project(corners: &[Vec2; 4], axis: Vec2) -> (f64, f64) {
    corners.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
        let v = c.dot(axis);
        (lo.min(v), hi.max(v))
    })
}

/// Point on a route: arc length plus signed lateral offset (left positive).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteProjection {
    pub s: f64,
    pub lateral: f64,
}

/// Polyline route with cached cumulative arc lengths.
///
/// Arc-length queries beyond either end extrapolate along the first/last
/// segment, so actors may drive past the route end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "RoutePoints", into = "RoutePoints")]
pub struct Route {
    points: Vec<Vec2>,
    cumulative: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RoutePoints {
    points: Vec<Vec2>,
}

impl From<RoutePoints> for Route {
    fn from(r: RoutePoints) -> Self {
        Route::new(r.points)
    }
}

impl From<Route> for RoutePoints {
    fn from(r: Route) -> Self {
        RoutePoints { points: r.points }
    }
}

impl Route {
    /// Builds a route, dropping points that would create zero-length
    /// segments. A route always has at least one segment; degenerate input
    /// yields a 1 m stub along +x.
    pub fn new(points: Vec<Vec2>) -> Self {
        let mut clean: Vec<Vec2> = Vec::with_capacity(points.len());
        for p in points.into_iter().filter(|p| p.is_finite()) {
            if clean.last().is_none_or(|q: &Vec2| q.dist(p) > 1e-9) {
                clean.push(p);
            }
        }
        if clean.len() < 2 {
            let start = clean.first().copied().unwrap_or_default();
            clean = vec![start, start + Vec2::new(1.0, 0.0)];
        }
        let mut cumulative = Vec::with_capacity(clean.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in clean.windows(2) {
            acc += w[0].dist(w[1]);
            cumulative.push(acc);
        }
        Route { points: clean, cumulative }
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().expect("route has points")
    }

    fn segment_at(&self, s: f64) -> usize {
        let n = self.points.len() - 1;
        match self.cumulative.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => i.min(n - 1),
            Err(i) => i.saturating_sub(1).min(n - 1),
        }
    }

    pub fn point_at(&self, s: f64) -> Vec2 {
        let i = self.segment_at(s);
        let a = self.points[i];
        let b = self.points[i + 1];
        let seg = self.cumulative[i + 1] - self.cumulative[i];
        let t = (s - self.cumulative[i]) / seg;
        a + (b - a).scale(t)
    }

    pub fn heading_at(&self, s: f64) -> f64 {
        let i = self.segment_at(s);
        let d = self.points[i + 1] - self.points[i];
        d.y.atan2(d.x)
    }

    /// Global point at arc `s` shifted `lateral` meters to the left.
    pub fn offset_point(&self, s: f64, lateral: f64) -> Vec2 {
        self.point_at(s) + Vec2::from_heading(self.heading_at(s)).perp().scale(lateral)
    }

    /// Nearest point on the (end-extended) polyline. When `hint` is given,
    /// only segments within `window` meters of arc `hint` are searched.
    pub fn project(&self, p: Vec2, hint: Option<(f64, f64)>) -> RouteProjection {
        let n = self.points.len() - 1;
        let (lo, hi) = match hint {
            Some((s, window)) => (self.segment_at(s - window), self.segment_at(s + window)),
            None => (0, n - 1),
        };
        let mut best = RouteProjection { s: 0.0, lateral: f64::INFINITY };
        let mut best_d = f64::INFINITY;
        for i in lo..=hi {
            let a = self.points[i];
            let d = self.points[i + 1] - a;
            let len2 = d.dot(d);
            let mut t = (p - a).dot(d) / len2;
            if i > 0 {
                t = t.max(0.0);
            }
            if i < n - 1 {
                t = t.min(1.0);
            }
            let q = a + d.scale(t);
            let dist = p.dist(q);
            if dist < best_d {
                best_d = dist;
                let seg = self.cumulative[i + 1] - self.cumulative[i];
                best = RouteProjection {
                    s: self.cumulative[i] + t * seg,
                    lateral: d.cross(p - a).signum() * dist,
                };
            }
        }
        if best.lateral.is_nan() {
            best.lateral = 0.0;
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angles_wrap_into_half_open_interval() {
        assert_eq!(normalize_angle(PI), PI);
        assert!((normalize_angle(-PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn frame_round_trip() {
        let o = Vec2::new(3.0, -2.0);
        let p = Vec2::new(10.0, 5.0);
        let back = to_global(o, 0.7, to_local(o, 0.7, p));
        assert!(back.dist(p) < 1e-12);
        assert_eq!(to_local(Vec2::new(4.0, 0.0), 0.0, Vec2::new(10.0, 0.0)), Vec2::new(6.0, 0.0));
    }

    #[test]
    fn obb_overlap() {
        let a = Obb { center: Vec2::new(0.0, 0.0), heading: 0.0, length: 4.5, width: 2.0 };
        let b = Obb { center: Vec2::new(4.0, 0.0), heading: 0.0, length: 4.5, width: 2.0 };
        let c = Obb { center: Vec2::new(4.6, 0.0), heading: 0.0, length: 4.5, width: 2.0 };
        let d = Obb { center: Vec2::new(3.0, 2.5), heading: 0.6, length: 0.6, width: 0.6 };
        assert!(a.overlaps(&b));
        assert!(!a.overlaps(&c));
        assert!(!a.overlaps(&d));
    }

    #[test]
    fn segment_hits_box() {
        let b = Obb { center: Vec2::new(10.0, 3.0), heading: 0.0, length: 4.5, width: 2.0 };
        assert!(b.intersects_segment(Vec2::new(0.0, 0.0), Vec2::new(20.0, 6.0)));
        assert!(!b.intersects_segment(Vec2::new(0.0, 0.0), Vec2::new(20.0, 0.0)));
    }

    #[test]
    fn route_projection_and_extension() {
        let r = Route::new(vec![Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0), Vec2::new(10.0, 10.0)]);
        assert_eq!(r.length(), 20.0);
        let p = r.project(Vec2::new(4.0, 1.5), None);
        assert!((p.s - 4.0).abs() < 1e-12 && (p.lateral - 1.5).abs() < 1e-12);
        let q = r.project(Vec2::new(11.0, 15.0), None);
        assert!((q.s - 25.0).abs() < 1e-12 && (q.lateral + 1.0).abs() < 1e-12);
        assert!(r.point_at(25.0).dist(Vec2::new(10.0, 15.0)) < 1e-12);
        assert!(r.point_at(-2.0).dist(Vec2::new(-2.0, 0.0)) < 1e-12);
    }
}
