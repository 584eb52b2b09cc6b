use petgraph::algo::dijkstra;
use petgraph::graph::{NodeIndex, UnGraph};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gridworld::{compute_los_map, EnvironmentScene};
use crate::ratemodel::{LinkBudget, Mission};

/// Start and end waypoint of every UAV.
pub type Endpoints = (Vec<[f64; 2]>, Vec<[f64; 2]>);

/// Sides of the polygon that stands in for each keep-out disk in the visibility graph.
const POLYGON_SIDES: usize = 16;

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Distance from `c` to the segment `a`-`b`.
fn segment_distance(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 { (((c[0] - a[0]) * d[0] + (c[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
    dist([a[0] + t * d[0], a[1] + t * d[1]], c)
}

fn clear_segment(a: [f64; 2], b: [f64; 2], disks: &[([f64; 2], f64)]) -> bool {
    disks.iter().all(|(c, r)| segment_distance(a, b, *c) >= *r)
}

/// Shortest obstacle-free polyline from `start` to `end` through the vertices
/// of polygons circumscribing slightly inflated keep-out disks.
pub fn detour_path(start: [f64; 2], end: [f64; 2], mission: &Mission, budget: &LinkBudget) -> Result<Vec<[f64; 2]>> {
    let disks: Vec<([f64; 2], f64)> =
        (0..mission.obstacles.len()).map(|k| (mission.obstacles[k].center_xy, mission.keep_out(k, budget))).collect();
    for p in [start, end] {
        if disks.iter().any(|(c, r)| dist(p, *c) < *r) {
            return Err(Error::Infeasible(vec![format!("(7f) endpoint {p:?} lies inside a keep-out disk")]));
        }
    }
    if clear_segment(start, end, &disks) {
        return Ok(vec![start, end]);
    }
    let b = &mission.bounds;
    let mut points = vec![start, end];
    let grow = 1.05 / (std::f64::consts::PI / POLYGON_SIDES as f64).cos();
    for (c, r) in &disks {
        for i in 0..POLYGON_SIDES {
            let t = 2.0 * std::f64::consts::PI * i as f64 / POLYGON_SIDES as f64;
            let p = [c[0] + grow * r * t.cos(), c[1] + grow * r * t.sin()];
            if b.contains(p) && disks.iter().all(|(c2, r2)| dist(p, *c2) >= *r2) {
                points.push(p);
            }
        }
    }
    let mut graph = UnGraph::<(), f64>::new_undirected();
    let nodes: Vec<NodeIndex> = points.iter().map(|_| graph.add_node(())).collect();
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            if clear_segment(points[i], points[j], &disks) {
                graph.add_edge(nodes[i], nodes[j], dist(points[i], points[j]));
            }
        }
    }
    let cost = dijkstra(&graph, nodes[1], None, |e| *e.weight());
    if !cost.contains_key(&nodes[0]) {
        return Err(Error::Infeasible(vec![format!("no obstacle-free path from {start:?} to {end:?}")]));
    }
    // Walk back from the start along edges that are tight in the distance field to the end.
    let mut path = vec![start];
    let mut at = nodes[0];
    while at != nodes[1] {
        let here = cost[&at];
        let next = graph
            .neighbors(at)
            .filter_map(|nb| cost.get(&nb).map(|c| (nb, c + dist(points[at.index()], points[nb.index()]))))
            .min_by(|a, b| (a.1 - here).abs().total_cmp(&(b.1 - here).abs()))
            .map(|(nb, _)| nb)
            .ok_or_else(|| Error::Numeric("visibility path reconstruction failed".into()))?;
        path.push(points[next.index()]);
        at = next;
    }
    Ok(path)
}

pub fn path_length(path: &[[f64; 2]]) -> f64 {
    path.windows(2).map(|w| dist(w[0], w[1])).sum()
}

/// `slots` points evenly spaced by arc length along `path`, endpoints included.
pub fn resample_by_arc_length(path: &[[f64; 2]], slots: usize) -> Vec<[f64; 2]> {
    if slots == 1 {
        return vec![path[0]];
    }
    let total = path_length(path);
    let mut out = Vec::with_capacity(slots);
    let mut seg = 0;
    let mut walked = 0.0;
    for i in 0..slots {
        let target = total * i as f64 / (slots - 1) as f64;
        while seg + 1 < path.len() - 1 && walked + dist(path[seg], path[seg + 1]) < target {
            walked += dist(path[seg], path[seg + 1]);
            seg += 1;
        }
        let len = dist(path[seg], path[seg + 1]);
        let t = if len > 0.0 { ((target - walked) / len).clamp(0.0, 1.0) } else { 0.0 };
        out.push([path[seg][0] + t * (path[seg + 1][0] - path[seg][0]), path[seg][1] + t * (path[seg + 1][1] - path[seg][1])]);
    }
    out[0] = path[0];
    out[slots - 1] = *path.last().expect("non-empty path");
    out
}

/// Straight-line waypoints, or an obstacle-avoiding detour when the line
/// crosses a keep-out disk. Errors when a UAV cannot make it in time.
pub fn initial_trajectories(mission: &Mission, budget: &LinkBudget) -> Result<Vec<Vec<[f64; 2]>>> {
    let n = mission.slots;
    if n == 0 || mission.ends.len() != mission.uavs() {
        return Err(Error::InvalidInput("mission needs at least one slot and one end per start".into()));
    }
    let mut bad = Vec::new();
    let mut out = Vec::with_capacity(mission.uavs());
    for (u, (s, e)) in mission.starts.iter().zip(&mission.ends).enumerate() {
        for p in [s, e] {
            if !mission.bounds.contains(*p) {
                return Err(Error::Infeasible(vec![format!("(7e) UAV {u} endpoint {p:?} is off the map")]));
            }
        }
        if n == 1 {
            if dist(*s, *e) > 0.0 {
                bad.push(format!("(7d) UAV {u} has one slot but distinct endpoints"));
            }
            out.push(vec![*s]);
            continue;
        }
        let path = detour_path(*s, *e, mission, budget)?;
        let per_slot = path_length(&path) / (n - 1) as f64;
        if per_slot > budget.step_m() {
            bad.push(format!("(7c) UAV {u} needs {per_slot:.3} m per slot, limit {:.3} m", budget.step_m()));
            continue;
        }
        out.push(resample_by_arc_length(&path, n));
    }
    if bad.is_empty() {
        Ok(out)
    } else {
        Err(Error::Infeasible(bad))
    }
}

/// Line-of-sight cells whose centers clear every keep-out disk by `margin_m`.
fn open_los_cells(scene: &EnvironmentScene, budget: &LinkBudget, margin_m: f64) -> Vec<[f64; 2]> {
    let los = compute_los_map(scene);
    los.cells()
        .filter(|(_, _, v)| **v == 1)
        .map(|(r, c, _)| scene.cell_center(r, c))
        .filter(|q| scene.obstacles.iter().all(|o| dist(*q, o.center_xy) >= o.radius_m + budget.d_min_m + margin_m))
        .collect()
}

/// Deterministic endpoints at opposite corners: UAV `u` flies from near one
/// corner to near the diagonally opposite one, alternating diagonals and
/// stepping inward for extra UAVs. Each endpoint is the nearest open LoS cell.
pub fn corner_endpoints(scene: &EnvironmentScene, uavs: usize, budget: &LinkBudget) -> Result<Endpoints> {
    let cells = open_los_cells(scene, budget, 0.0);
    if cells.is_empty() {
        return Err(Error::InvalidInput("scene has no open line-of-sight cell".into()));
    }
    let b = scene.bounds();
    let span = b.span();
    let nearest = |p: [f64; 2]| *cells.iter().min_by(|a, c| dist(**a, p).total_cmp(&dist(**c, p))).expect("non-empty");
    let (mut starts, mut ends) = (Vec::new(), Vec::new());
    for u in 0..uavs {
        let inset = 0.05 + 0.1 * (u / 2) as f64;
        let lo = [b.x_min + inset * span[0], b.y_min + inset * span[1]];
        let hi = [b.x_max - inset * span[0], b.y_max - inset * span[1]];
        let (s, e) = if u % 2 == 0 { (lo, hi) } else { ([lo[0], hi[1]], [hi[0], lo[1]]) };
        starts.push(nearest(s));
        ends.push(nearest(e));
    }
    Ok((starts, ends))
}

/// Random open LoS endpoints, redrawn until each UAV can cover its detour in time.
pub fn random_endpoints(scene: &EnvironmentScene, uavs: usize, slots: usize, budget: &LinkBudget, seed: u64) -> Result<Endpoints> {
    let cells = open_los_cells(scene, budget, 0.0);
    if cells.is_empty() {
        return Err(Error::InvalidInput("scene has no open line-of-sight cell".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reach = budget.step_m() * slots.saturating_sub(1) as f64;
    let (mut starts, mut ends) = (Vec::new(), Vec::new());
    for u in 0..uavs {
        let mut found = None;
        for _ in 0..1000 {
            let s = *cells.choose(&mut rng).expect("non-empty");
            let e = *cells.choose(&mut rng).expect("non-empty");
            let mission = Mission::for_scene(scene, vec![s], vec![e], slots);
            if let Ok(path) = detour_path(s, e, &mission, budget) {
                if path_length(&path) <= reach {
                    found = Some((s, e));
                    break;
                }
            }
        }
        let (s, e) = found.ok_or_else(|| Error::Infeasible(vec![format!("no reachable endpoint pair for UAV {u}")]))?;
        starts.push(s);
        ends.push(e);
    }
    Ok((starts, ends))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{Bounds, Obstacle};

    fn mission(obstacles: Vec<Obstacle>, s: [f64; 2], e: [f64; 2], slots: usize) -> Mission {
        Mission { starts: vec![s], ends: vec![e], slots, obstacles, bounds: Bounds { x_min: 0.0, x_max: 500.0, y_min: 0.0, y_max: 500.0 } }
    }

    #[test]
    fn straight_line_when_clear() {
        let b = LinkBudget::default();
        let m = mission(vec![], [10.0, 10.0], [100.0, 10.0], 4);
        let q = initial_trajectories(&m, &b).unwrap();
        assert_eq!(q[0], vec![[10.0, 10.0], [40.0, 10.0], [70.0, 10.0], [100.0, 10.0]]);
    }

    #[test]
    fn detour_clears_the_disk() {
        let b = LinkBudget { tau_s: 10.0, ..LinkBudget::default() };
        let o = Obstacle { center_xy: [250.0, 250.0], radius_m: 60.0 };
        let m = mission(vec![o], [50.0, 250.0], [450.0, 252.0], 25);
        let q = initial_trajectories(&m, &b).unwrap();
        let need = m.keep_out(0, &b);
        for w in q[0].windows(2) {
            assert!(segment_distance(w[0], w[1], o.center_xy) >= need);
            assert!(dist(w[0], w[1]) <= b.step_m());
        }
        assert_eq!(q[0][0], [50.0, 250.0]);
        assert_eq!(q[0][24], [450.0, 252.0]);
        let straight = 400.0;
        let detour = path_length(&q[0]);
        assert!(detour > straight && detour < 1.5 * straight, "{detour}");
    }

    #[test]
    fn unreachable_and_blocked_endpoints_fail() {
        let b = LinkBudget::default();
        let far = mission(vec![], [0.0, 0.0], [500.0, 500.0], 3);
        assert!(matches!(initial_trajectories(&far, &b), Err(Error::Infeasible(_))));
        let o = Obstacle { center_xy: [100.0, 100.0], radius_m: 30.0 };
        let inside = mission(vec![o], [100.0, 110.0], [200.0, 200.0], 10);
        assert!(matches!(initial_trajectories(&inside, &b), Err(Error::Infeasible(_))));
    }

    #[test]
    fn resampling_is_uniform_in_arc_length() {
        let path = vec![[0.0, 0.0], [30.0, 0.0], [30.0, 40.0]];
        let q = resample_by_arc_length(&path, 8);
        for w in q.windows(2) {
            let d = dist(w[0], w[1]);
            assert!(d <= 10.0 + 1e-12);
        }
        assert_eq!(q[3], [30.0, 0.0]);
        assert_eq!(q[7], [30.0, 40.0]);
    }
}
