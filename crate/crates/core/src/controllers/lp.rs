//! Incremental 2D linear programming over half-planes inside a speed disc,
//! with the 3D relaxation used when the half-planes have no common point.

use crate::geometry::Vec2;

const LP_EPS: f64 = 1e-9;

/// Directed line; the admissible half-plane lies to the left of `direction`
/// through `point`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Line {
    pub point: Vec2,
    /// Unit length.
    pub direction: Vec2,
}

impl Line {
    /// Positive when `p` violates the constraint, by that distance.
    pub fn violation(&self, p: Vec2) -> f64 {
        self.direction.det(self.point - p)
    }
}

/// Optimizes along line `line_no` subject to lines `0..line_no` and the disc.
fn solve_on_line(
    lines: &[Line],
    line_no: usize,
    radius: f64,
    target: Vec2,
    direction_opt: bool,
) -> Option<Vec2> {
    let line = lines[line_no];
    let dot = line.point.dot(line.direction);
    let disc = dot * dot + radius * radius - line.point.norm_sq();
    if disc < 0.0 {
        return None;
    }
    let root = disc.sqrt();
    let mut t_left = -dot - root;
    let mut t_right = -dot + root;

    for other in &lines[..line_no] {
        let denominator = line.direction.det(other.direction);
        let numerator = other.direction.det(line.point - other.point);
        if denominator.abs() <= LP_EPS {
            if numerator < 0.0 {
                return None;
            }
            continue;
        }
        let t = numerator / denominator;
        if denominator >= 0.0 {
            t_right = t_right.min(t);
        } else {
            t_left = t_left.max(t);
        }
        if t_left > t_right {
            return None;
        }
    }

    let t = if direction_opt {
        if target.dot(line.direction) > 0.0 {
            t_right
        } else {
            t_left
        }
    } else {
        line.direction
            .dot(target - line.point)
            .clamp(t_left, t_right)
    };
    Some(line.point + line.direction * t)
}

/// Point closest to `target` (or furthest along it when `direction_opt`)
/// satisfying every line within the disc. Returns the index of the first
/// line that could not be satisfied (`lines.len()` on success) and the best
/// point found so far.
pub fn solve_2d(lines: &[Line], radius: f64, target: Vec2, direction_opt: bool) -> (usize, Vec2) {
    let mut result = if direction_opt {
        target * radius
    } else {
        target.clamp_norm(radius)
    };
    for i in 0..lines.len() {
        if lines[i].violation(result) > 0.0 {
            match solve_on_line(lines, i, radius, target, direction_opt) {
                Some(p) => result = p,
                None => return (i, result),
            }
        }
    }
    (lines.len(), result)
}

/// Minimizes the largest violation over lines `begin..`, starting from the
/// partial solution of [`solve_2d`].
pub fn solve_3d(lines: &[Line], begin: usize, radius: f64, mut result: Vec2) -> Vec2 {
    let mut distance = 0.0;
    for i in begin..lines.len() {
        if lines[i].violation(result) <= distance {
            continue;
        }
        let mut projected = Vec::with_capacity(i);
        for j in 0..i {
            let determinant = lines[i].direction.det(lines[j].direction);
            let point = if determinant.abs() <= LP_EPS {
                if lines[i].direction.dot(lines[j].direction) > 0.0 {
                    continue;
                }
                (lines[i].point + lines[j].point) * 0.5
            } else {
                lines[i].point
                    + lines[i].direction
                        * (lines[j].direction.det(lines[i].point - lines[j].point) / determinant)
            };
            let Some(direction) = (lines[j].direction - lines[i].direction).normalized() else {
                continue;
            };
            projected.push(Line { point, direction });
        }
        let previous = result;
        let (fail, candidate) = solve_2d(&projected, radius, lines[i].direction.perp_ccw(), true);
        result = if fail < projected.len() {
            previous
        } else {
            candidate
        };
        distance = lines[i].violation(result);
    }
    result
}

/// Full solve: exact when feasible, least-violation otherwise.
pub fn solve(lines: &[Line], radius: f64, target: Vec2) -> Vec2 {
    let (fail, partial) = solve_2d(lines, radius, target, false);
    if fail < lines.len() {
        solve_3d(lines, fail, radius, partial)
    } else {
        partial
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(px: f64, py: f64, dx: f64, dy: f64) -> Line {
        Line {
            point: Vec2::new(px, py),
            direction: Vec2::new(dx, dy).normalized().unwrap(),
        }
    }

    #[test]
    fn unconstrained_returns_target_clamped() {
        assert_eq!(solve(&[], 1.0, Vec2::new(0.3, 0.4)), Vec2::new(0.3, 0.4));
        let v = solve(&[], 1.0, Vec2::new(3.0, 4.0));
        assert!((v.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_half_plane_projects_target() {
        // Admissible side: x <= 0.5 (left of a line pointing +y through x=0.5).
        let l = line(0.5, 0.0, 0.0, 1.0);
        assert!(l.violation(Vec2::new(1.0, 0.0)) > 0.0);
        let v = solve(&[l], 2.0, Vec2::new(1.0, 0.3));
        assert!((v.x - 0.5).abs() < 1e-12 && (v.y - 0.3).abs() < 1e-12);
    }

    #[test]
    fn infeasible_pair_balances_violation() {
        // x <= -0.5 and x >= 0.5 cannot both hold; relaxation splits at x = 0.
        let a = line(-0.5, 0.0, 0.0, 1.0);
        let b = line(0.5, 0.0, 0.0, -1.0);
        let v = solve(&[a, b], 2.0, Vec2::new(0.0, 0.0));
        assert!(v.x.abs() < 1e-9, "{v:?}");
        assert!((a.violation(v) - b.violation(v)).abs() < 1e-9);
    }

    #[test]
    fn matches_dense_sampling_on_two_lines() {
        let lines = [line(0.2, 0.0, 0.0, 1.0), line(0.0, 0.1, -1.0, 0.2)];
        let target = Vec2::new(1.0, -0.8);
        let v = solve(&lines, 1.5, target);
        let mut best = (f64::INFINITY, Vec2::ZERO);
        let steps = 600;
        for i in 0..=steps {
            for j in 0..=steps {
                let p = Vec2::new(
                    -1.5 + 3.0 * i as f64 / steps as f64,
                    -1.5 + 3.0 * j as f64 / steps as f64,
                );
                if p.norm() <= 1.5 && lines.iter().all(|l| l.violation(p) <= 0.0) {
                    let d = p.distance(target);
                    if d < best.0 {
                        best = (d, p);
                    }
                }
            }
        }
        assert!(v.distance(best.1) < 0.01, "{v:?} vs {:?}", best.1);
        assert!(v.distance(target) <= best.0 + 1e-9);
    }
}
