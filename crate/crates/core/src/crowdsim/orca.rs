//! Optimal reciprocal collision avoidance for disc agents without static
//! obstacles: one half-plane per neighbour, then the 2-D linear program with
//! the 3-D fallback when the half-planes leave no feasible velocity.

use super::vec2::Vec2;

const RVO_EPSILON: f64 = 1e-5;

/// What ORCA needs to know about an agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrcaAgent {
    pub position: Vec2,
    pub velocity: Vec2,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrcaParams {
    pub time_horizon: f64,
    pub neighbor_dist: f64,
    pub max_neighbors: usize,
    pub time_step: f64,
}

impl Default for OrcaParams {
    fn default() -> Self {
        Self { time_horizon: 5.0, neighbor_dist: 10.0, max_neighbors: 10, time_step: 0.25 }
    }
}

/// Boundary of a half-plane of permitted velocities; the permitted side is
/// to the left of `direction`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub point: Vec2,
    pub direction: Vec2,
}

/// Half-plane induced on `agent` by `other`, with `agent` taking half of the
/// avoidance effort.
pub fn orca_line(agent: &OrcaAgent, other: &OrcaAgent, time_horizon: f64, time_step: f64) -> Line {
    let rel_pos = other.position - agent.position;
    let rel_vel = agent.velocity - other.velocity;
    let dist_sq = rel_pos.length_squared();
    let combined = agent.radius + other.radius;
    let combined_sq = combined * combined;
    let inv_th = 1.0 / time_horizon;

    let direction;
    let u;
    if dist_sq > combined_sq {
        // Vector from the cut-off circle centre to the relative velocity.
        let w = rel_vel - rel_pos * inv_th;
        let w_len_sq = w.length_squared();
        let dot1 = w.dot(rel_pos);
        if dot1 < 0.0 && dot1 * dot1 > combined_sq * w_len_sq {
            // Closest boundary point lies on the cut-off circle.
            let w_len = w_len_sq.sqrt();
            let unit_w = w / w_len;
            direction = Vec2::new(unit_w.y, -unit_w.x);
            u = unit_w * (combined * inv_th - w_len);
        } else {
            // Closest boundary point lies on one of the legs.
            let leg = (dist_sq - combined_sq).sqrt();
            direction = if rel_pos.det(w) > 0.0 {
                Vec2::new(rel_pos.x * leg - rel_pos.y * combined, rel_pos.x * combined + rel_pos.y * leg) / dist_sq
            } else {
                -Vec2::new(rel_pos.x * leg + rel_pos.y * combined, -rel_pos.x * combined + rel_pos.y * leg) / dist_sq
            };
            let dot2 = rel_vel.dot(direction);
            u = direction * dot2 - rel_vel;
        }
    } else {
        // Already overlapping: resolve within one time step.
        let inv_ts = 1.0 / time_step;
        let w = rel_vel - rel_pos * inv_ts;
        let w_len = w.length();
        let unit_w = w.normalize_or_zero();
        direction = Vec2::new(unit_w.y, -unit_w.x);
        u = unit_w * (combined * inv_ts - w_len);
    }
    Line { point: agent.velocity + u * 0.5, direction }
}

fn linear_program1(lines: &[Line], line_no: usize, radius: f64, opt: Vec2, direction_opt: bool) -> Option<Vec2> {
    let line = lines[line_no];
    let dot = line.point.dot(line.direction);
    let disc = dot * dot + radius * radius - line.point.length_squared();
    if disc < 0.0 {
        return None;
    }
    let sqrt_disc = disc.sqrt();
    let mut t_left = -dot - sqrt_disc;
    let mut t_right = -dot + sqrt_disc;

    for prev in &lines[..line_no] {
        let denominator = line.direction.det(prev.direction);
        let numerator = prev.direction.det(line.point - prev.point);
        if denominator.abs() <= RVO_EPSILON {
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
        if opt.dot(line.direction) > 0.0 {
            t_right
        } else {
            t_left
        }
    } else {
        line.direction.dot(opt - line.point).clamp(t_left, t_right)
    };
    Some(line.point + line.direction * t)
}

/// Returns the index of the first line that could not be satisfied (or
/// `lines.len()` on success) together with the best velocity found.
fn linear_program2(lines: &[Line], radius: f64, opt: Vec2, direction_opt: bool) -> (usize, Vec2) {
    let mut result = if direction_opt {
        opt * radius
    } else if opt.length_squared() > radius * radius {
        opt.normalize_or_zero() * radius
    } else {
        opt
    };
    for (i, line) in lines.iter().enumerate() {
        if line.direction.det(line.point - result) > 0.0 {
            match linear_program1(lines, i, radius, opt, direction_opt) {
                Some(r) => result = r,
                None => return (i, result),
            }
        }
    }
    (lines.len(), result)
}

/// Minimises the maximum violation over lines `begin..` when the 2-D
/// program is infeasible.
fn linear_program3(lines: &[Line], begin: usize, radius: f64, mut result: Vec2) -> Vec2 {
    let mut distance = 0.0;
    for i in begin..lines.len() {
        let li = lines[i];
        if li.direction.det(li.point - result) <= distance {
            continue;
        }
        let mut projected = Vec::with_capacity(i);
        for lj in &lines[..i] {
            let determinant = li.direction.det(lj.direction);
            let point = if determinant.abs() <= RVO_EPSILON {
                if li.direction.dot(lj.direction) > 0.0 {
                    continue;
                }
                (li.point + lj.point) * 0.5
            } else {
                li.point + li.direction * (lj.direction.det(li.point - lj.point) / determinant)
            };
            projected.push(Line { point, direction: (lj.direction - li.direction).normalize_or_zero() });
        }
        let temp = result;
        let (fail, r) = linear_program2(&projected, radius, Vec2::new(-li.direction.y, li.direction.x), true);
        result = if fail < projected.len() { temp } else { r };
        distance = li.direction.det(li.point - result);
    }
    result
}

/// Velocity closest to `preferred` (within `max_speed`) satisfying all lines,
/// or the least-violating velocity when that set is empty.
pub fn solve(lines: &[Line], max_speed: f64, preferred: Vec2) -> Vec2 {
    let (fail, result) = linear_program2(lines, max_speed, preferred, false);
    if fail < lines.len() {
        linear_program3(lines, fail, max_speed, result)
    } else {
        result
    }
}

/// New velocity for agent `index` among `agents`.
pub fn compute_velocity(agents: &[OrcaAgent], index: usize, preferred: Vec2, max_speed: f64, params: &OrcaParams) -> Vec2 {
    let me = &agents[index];
    let range_sq = params.neighbor_dist * params.neighbor_dist;
    let mut neighbours: Vec<(f64, usize)> = agents
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != index)
        .map(|(j, a)| ((a.position - me.position).length_squared(), j))
        .filter(|&(d, _)| d < range_sq)
        .collect();
    neighbours.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    neighbours.truncate(params.max_neighbors);
    let lines: Vec<Line> = neighbours
        .iter()
        .map(|&(_, j)| orca_line(me, &agents[j], params.time_horizon, params.time_step))
        .collect();
    solve(&lines, max_speed, preferred)
}

/// Steps every agent's velocity simultaneously.
pub fn orca_policy(agents: &[OrcaAgent], preferred: &[Vec2], max_speeds: &[f64], params: &OrcaParams) -> Vec<Vec2> {
    (0..agents.len())
        .map(|i| compute_velocity(agents, i, preferred[i], max_speeds[i], params))
        .collect()
}
