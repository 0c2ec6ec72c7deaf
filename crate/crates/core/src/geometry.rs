//! Planar geometry shared by the generator, simulator and metrics.

use crate::kinematics::Pose;

/// Distance from `p` to the closed segment `ab`.
pub fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (px, py) = closest_on_segment(p, a, b);
    (p[0] - px).hypot(p[1] - py)
}

fn closest_on_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> (f64, f64) {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return (a[0], a[1]);
    }
    let t = (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0);
    (a[0] + t * dx, a[1] + t * dy)
}

/// Minimum distance from `p` to any segment of `points`.
///
/// A single-point polyline degenerates to the point distance.
pub fn polyline_distance(p: [f64; 2], points: &[[f64; 2]]) -> f64 {
    match points {
        [] => f64::INFINITY,
        [only] => (p[0] - only[0]).hypot(p[1] - only[1]),
        _ => points
            .windows(2)
            .map(|w| segment_distance(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min),
    }
}

/// Arc-length parameterized polyline.
#[derive(Debug, Clone)]
pub struct Path {
    points: Vec<[f64; 2]>,
    cumulative: Vec<f64>,
}

impl Path {
    /// Builds a path, dropping consecutive duplicate points.
    ///
    /// Panics when fewer than two distinct points remain.
    pub fn new(points: impl IntoIterator<Item = [f64; 2]>) -> Self {
        let mut pts: Vec<[f64; 2]> = Vec::new();
        for p in points {
            if pts.last().map_or(true, |q| q[0] != p[0] || q[1] != p[1]) {
                pts.push(p);
            }
        }
        assert!(pts.len() >= 2, "a path needs two distinct points");
        let mut cumulative = Vec::with_capacity(pts.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in pts.windows(2) {
            acc += (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
            cumulative.push(acc);
        }
        Self {
            points: pts,
            cumulative,
        }
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Position and tangent heading at arc length `s`, extrapolating
    /// linearly past either end.
    pub fn sample(&self, s: f64) -> Pose {
        let i = match self
            .cumulative
            .binary_search_by(|c| c.partial_cmp(&s).unwrap())
        {
            Ok(i) => i.min(self.points.len() - 2),
            Err(i) => i.clamp(1, self.points.len() - 1) - 1,
        };
        let (a, b) = (self.points[i], self.points[i + 1]);
        let seg = self.cumulative[i + 1] - self.cumulative[i];
        let t = (s - self.cumulative[i]) / seg;
        Pose::new(
            a[0] + t * (b[0] - a[0]),
            a[1] + t * (b[1] - a[1]),
            (b[1] - a[1]).atan2(b[0] - a[0]),
        )
    }

    /// Arc length of the point on the path closest to `p`.
    pub fn project(&self, p: [f64; 2]) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        for (i, w) in self.points.windows(2).enumerate() {
            let (cx, cy) = closest_on_segment(p, w[0], w[1]);
            let d = (p[0] - cx).hypot(p[1] - cy);
            if d < best.0 {
                let along = (cx - w[0][0]).hypot(cy - w[0][1]);
                best = (d, self.cumulative[i] + along);
            }
        }
        best.1
    }

    /// Arc from `start` turning by `sweep` radians (positive = left) with
    /// the given radius, as `n + 1` points.
    pub fn arc_points(start: Pose, radius: f64, sweep: f64, n: usize) -> Vec<[f64; 2]> {
        let side = sweep.signum();
        let (s, c) = start.theta.sin_cos();
        let center = [start.x - side * radius * s, start.y + side * radius * c];
        let phi0 = (start.y - center[1]).atan2(start.x - center[0]);
        (0..=n)
            .map(|k| {
                let phi = phi0 + sweep * k as f64 / n as f64;
                [
                    center[0] + radius * phi.cos(),
                    center[1] + radius * phi.sin(),
                ]
            })
            .collect()
    }
}

/// Oriented rectangle: center pose plus full length (along heading) and width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    pub center: Pose,
    pub length: f64,
    pub width: f64,
}

impl OrientedBox {
    pub fn new(center: Pose, length: f64, width: f64) -> Self {
        Self {
            center,
            length,
            width,
        }
    }

    pub fn inflated(&self, margin: f64) -> Self {
        Self {
            length: self.length + 2.0 * margin,
            width: self.width + 2.0 * margin,
            ..*self
        }
    }

    fn axes(&self) -> [[f64; 2]; 2] {
        let (s, c) = self.center.theta.sin_cos();
        [[c, s], [-s, c]]
    }

    pub fn corners(&self) -> [[f64; 2]; 4] {
        let [u, v] = self.axes();
        let (hl, hw) = (self.length / 2.0, self.width / 2.0);
        let (cx, cy) = (self.center.x, self.center.y);
        let at = |a: f64, b: f64| [cx + a * u[0] + b * v[0], cy + a * u[1] + b * v[1]];
        [at(hl, hw), at(-hl, hw), at(-hl, -hw), at(hl, -hw)]
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        let [u, v] = self.axes();
        let (dx, dy) = (p[0] - self.center.x, p[1] - self.center.y);
        (dx * u[0] + dy * u[1]).abs() <= self.length / 2.0
            && (dx * v[0] + dy * v[1]).abs() <= self.width / 2.0
    }

    /// Separating-axis test over the four face normals. Touching boxes
    /// count as overlapping.
    pub fn overlaps(&self, other: &OrientedBox) -> bool {
        let dx = other.center.x - self.center.x;
        let dy = other.center.y - self.center.y;
        if dx.hypot(dy) > 0.5 * (self.length.hypot(self.width) + other.length.hypot(other.width)) {
            return false;
        }
        let a_axes = self.axes();
        let b_axes = other.axes();
        let ah = [self.length / 2.0, self.width / 2.0];
        let bh = [other.length / 2.0, other.width / 2.0];
        for axis in a_axes.iter().chain(b_axes.iter()) {
            let dist = (dx * axis[0] + dy * axis[1]).abs();
            let ra: f64 = (0..2)
                .map(|k| ah[k] * (a_axes[k][0] * axis[0] + a_axes[k][1] * axis[1]).abs())
                .sum();
            let rb: f64 = (0..2)
                .map(|k| bh[k] * (b_axes[k][0] * axis[0] + b_axes[k][1] * axis[1]).abs())
                .sum();
            if dist > ra + rb {
                return false;
            }
        }
        true
    }
}
