use crate::grid::Grid;

use super::scene::EnvironmentScene;

/// One cell visited by a segment, with the parametric interval spent inside it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellVisit {
    pub row: usize,
    pub col: usize,
    pub t_in: f64,
    pub t_out: f64,
}

/// Supercover walk of the horizontal segment `a -> b` (meters) over the grid.
///
/// Every cell whose interior the segment passes through is reported. When the
/// segment goes exactly through a grid corner, all four cells around that
/// corner are reported with a degenerate interval.
pub fn traverse_segment(a: [f64; 2], b: [f64; 2], resolution_m: f64, rows: usize, cols: usize) -> Vec<CellVisit> {
    let ua = [a[0] / resolution_m, a[1] / resolution_m];
    let ub = [b[0] / resolution_m, b[1] / resolution_m];
    let du = [ub[0] - ua[0], ub[1] - ua[1]];

    let mut crossings: Vec<(f64, u8)> = vec![(0.0, 0), (1.0, 0)];
    for axis in 0..2 {
        if du[axis] == 0.0 {
            continue;
        }
        let (lo, hi) = if du[axis] > 0.0 { (ua[axis], ub[axis]) } else { (ub[axis], ua[axis]) };
        let mut k = lo.floor() + 1.0;
        while k < hi {
            let t = (k - ua[axis]) / du[axis];
            if t > 0.0 && t < 1.0 {
                crossings.push((t, 1 << axis));
            }
            k += 1.0;
        }
    }
    crossings.sort_by(|x, y| x.0.total_cmp(&y.0));

    // Nearly coincident crossings are merged so corner passes are detected.
    let mut events: Vec<(f64, u8)> = Vec::with_capacity(crossings.len());
    for (t, mask) in crossings {
        match events.last_mut() {
            Some(last) if (t - last.0).abs() <= 1e-12 => last.1 |= mask,
            _ => events.push((t, mask)),
        }
    }

    let clamp_cell = |u: f64, n: usize| -> usize { (u.floor().max(0.0) as usize).min(n - 1) };
    let point = |t: f64| [ua[0] + t * du[0], ua[1] + t * du[1]];

    let mut visits = Vec::with_capacity(events.len() * 2);
    for w in events.windows(2) {
        let (t0, t1) = (w[0].0, w[1].0);
        if w[0].1 == 3 {
            let p = point(t0);
            let (r0, c0) = (p[0].round(), p[1].round());
            for (dr, dc) in [(-1.0, -1.0), (-1.0, 0.0), (0.0, -1.0), (0.0, 0.0)] {
                let (r, c) = (r0 + dr, c0 + dc);
                if r >= 0.0 && c >= 0.0 && (r as usize) < rows && (c as usize) < cols {
                    visits.push(CellVisit { row: r as usize, col: c as usize, t_in: t0, t_out: t0 });
                }
            }
        }
        if t1 > t0 {
            let mid = point(0.5 * (t0 + t1));
            visits.push(CellVisit { row: clamp_cell(mid[0], rows), col: clamp_cell(mid[1], cols), t_in: t0, t_out: t1 });
        }
    }
    visits
}

fn blocking_cells(scene: &EnvironmentScene, target_xy: [f64; 2]) -> impl Iterator<Item = CellVisit> + '_ {
    let z0 = scene.bs_height_m;
    let z1 = scene.uav_height_m;
    traverse_segment(scene.bs_xy, target_xy, scene.resolution_m, scene.rows(), scene.cols()).into_iter().filter(move |v| {
        let z_in = z0 + v.t_in * (z1 - z0);
        let z_out = z0 + v.t_out * (z1 - z0);
        *scene.heights.get(v.row, v.col) > z_in.min(z_out)
    })
}

/// True when the segment from the BS to the UAV above `target_xy` clears every building.
pub fn is_visible(scene: &EnvironmentScene, target_xy: [f64; 2]) -> bool {
    blocking_cells(scene, target_xy).next().is_none()
}

/// Line-of-sight map: 1 where the BS-to-UAV segment clears every building.
pub fn compute_los_map(scene: &EnvironmentScene) -> Grid<u8> {
    let mut los = Grid::filled(scene.rows(), scene.cols(), 0u8);
    for r in 0..scene.rows() {
        for c in 0..scene.cols() {
            *los.get_mut(r, c) = is_visible(scene, scene.cell_center(r, c)) as u8;
        }
    }
    los
}

/// Distinct buildings obstructing the BS-to-UAV segment ending above `target_xy`.
pub fn count_blockers(scene: &EnvironmentScene, labels: &Grid<u32>, target_xy: [f64; 2]) -> usize {
    let mut seen: Vec<u32> = blocking_cells(scene, target_xy).map(|v| *labels.get(v.row, v.col)).collect();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}
