//! Independent brute-force references for the fast paths elsewhere in the
//! crate. Nothing here is used by training; tests, the acceptance suite and
//! `msrs check` compare against these.

use std::collections::{BTreeSet, HashMap, VecDeque};

use rand::Rng;

use crate::env::GoalSpec;
use crate::error::{Error, Result};
use crate::geometry::{self, Action, Angle, Cell, Configuration, EdgeSpec, MoveRules};

/// Largest module count accepted by [`brute_force_distance`].
pub const BRUTE_FORCE_MAX: usize = 8;

/// Exact minimum over all n! pairings.
pub fn brute_force_distance(state: &[Cell], goal: &[Cell]) -> Result<f64> {
    let n = state.len();
    if goal.len() != n {
        return Err(Error::SizeMismatch { expected: n, got: goal.len() });
    }
    if n > BRUTE_FORCE_MAX {
        return Err(Error::TooLarge { max: BRUTE_FORCE_MAX, got: n });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &mut |p| {
        let total: f64 = p.iter().enumerate().map(|(i, &j)| state[i].euclidean(goal[j])).sum();
        best = best.min(total);
    });
    Ok(if n == 0 { 0.0 } else { best })
}

/// Minimum cost over all permutations of a square cost table.
pub fn brute_force_assignment(cost: &[Vec<f64>]) -> (f64, Vec<usize>) {
    let n = cost.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = (f64::INFINITY, perm.clone());
    permute(&mut perm, 0, &mut |p| {
        let total: f64 = p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        if total < best.0 {
            best = (total, p.to_vec());
        }
    });
    best
}

fn permute(perm: &mut [usize], k: usize, visit: &mut dyn FnMut(&[usize])) {
    if k == perm.len() {
        visit(perm);
        return;
    }
    for i in k..perm.len() {
        perm.swap(k, i);
        permute(perm, k + 1, visit);
        perm.swap(k, i);
    }
}

pub fn bfs_connected(cells: &[Cell]) -> Result<bool> {
    if cells.is_empty() {
        return Err(Error::EmptyCellSet);
    }
    let set: BTreeSet<Cell> = cells.iter().copied().collect();
    let mut seen = BTreeSet::from([cells[0]]);
    let mut queue = VecDeque::from([cells[0]]);
    while let Some(c) = queue.pop_front() {
        for nb in c.face_neighbors() {
            if set.contains(&nb) && seen.insert(nb) {
                queue.push_back(nb);
            }
        }
    }
    Ok(seen.len() == set.len())
}

type Point = (f64, f64);

/// Corners of the unit square centered at `(cu, cv)` after rotating it by
/// `theta` radians about `pivot`.
fn rotated_square(cu: f64, cv: f64, pivot: Point, theta: f64) -> [Point; 4] {
    let (s, c) = theta.sin_cos();
    let corners = [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)];
    corners.map(|(du, dv)| {
        let x = cu + du - pivot.0;
        let y = cv + dv - pivot.1;
        (pivot.0 + c * x - s * y, pivot.1 + s * x + c * y)
    })
}

/// Whether two convex polygons share interior points. Separating axis test
/// over both polygons' edge normals; touching boundaries do not count.
fn interiors_overlap(a: &[Point], b: &[Point]) -> bool {
    const EPS: f64 = 1e-9;
    for poly in [a, b] {
        for i in 0..poly.len() {
            let p = poly[i];
            let q = poly[(i + 1) % poly.len()];
            let axis = (q.1 - p.1, p.0 - q.0);
            let project = |pts: &[Point]| {
                pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(x, y)| {
                    let d = x * axis.0 + y * axis.1;
                    (lo.min(d), hi.max(d))
                })
            };
            let (alo, ahi) = project(a);
            let (blo, bhi) = project(b);
            if ahi.min(bhi) - alo.max(blo) <= EPS {
                return false;
            }
        }
    }
    true
}

/// Cells crossed by a rotating cube, found by stepping the rotation and
/// intersecting the rotated cross-section with every nearby lattice square.
pub fn sampled_sweep(c: Cell, edge: EdgeSpec, angle: Angle, step_degrees: f64) -> BTreeSet<Cell> {
    assert!(step_degrees > 0.0 && step_degrees <= 1.0, "step must be in (0, 1] degrees");
    let (u, v) = edge.axis.plane();
    let cu = f64::from(c.get(u));
    let cv = f64::from(c.get(v));
    let pivot = (cu + 0.5 * f64::from(edge.s_u), cv + 0.5 * f64::from(edge.s_v));
    let total = f64::from(angle.degrees());
    let steps = (total.abs() / step_degrees).ceil() as usize;

    let mut hits = BTreeSet::new();
    for k in 1..=steps {
        let deg = (k as f64 * step_degrees).min(total.abs()) * total.signum();
        let poly = rotated_square(cu, cv, pivot, deg.to_radians());
        for du in -3..=3 {
            for dv in -3..=3 {
                let (gu, gv) = (c.get(u) + du, c.get(v) + dv);
                let (fu, fv) = (f64::from(gu), f64::from(gv));
                let square = [(fu - 0.5, fv - 0.5), (fu + 0.5, fv - 0.5), (fu + 0.5, fv + 0.5), (fu - 0.5, fv + 0.5)];
                if interiors_overlap(&poly, &square) {
                    let mut cell = c;
                    set_axis(&mut cell, u, gu);
                    set_axis(&mut cell, v, gv);
                    hits.insert(cell);
                }
            }
        }
    }
    hits.remove(&c);
    hits
}

/// Where the rotated cross-section comes to rest, from the final sampled pose.
pub fn sampled_endpoint(c: Cell, edge: EdgeSpec, angle: Angle) -> Cell {
    let (u, v) = edge.axis.plane();
    let cu = f64::from(c.get(u));
    let cv = f64::from(c.get(v));
    let pivot = (cu + 0.5 * f64::from(edge.s_u), cv + 0.5 * f64::from(edge.s_v));
    let poly = rotated_square(cu, cv, pivot, f64::from(angle.degrees()).to_radians());
    let mu = poly.iter().map(|p| p.0).sum::<f64>() / 4.0;
    let mv = poly.iter().map(|p| p.1).sum::<f64>() / 4.0;
    let mut cell = c;
    set_axis(&mut cell, u, mu.round() as i32);
    set_axis(&mut cell, v, mv.round() as i32);
    cell
}

fn set_axis(cell: &mut Cell, axis: geometry::Axis, value: i32) {
    match axis {
        geometry::Axis::X => cell.x = value,
        geometry::Axis::Y => cell.y = value,
        geometry::Axis::Z => cell.z = value,
    }
}

/// Shortest action sequence from `start` to a configuration occupying
/// exactly the goal cells, searching over module-identity-free states.
pub fn bfs_plan(start: &Configuration, goal: &GoalSpec, max_depth: usize, rules: MoveRules) -> Option<Vec<usize>> {
    let n = start.len();
    let target = goal.cells().to_vec();
    let key = |cfg: &Configuration| cfg.sorted_cells();
    if key(start) == target {
        return Some(Vec::new());
    }
    // canonical state -> (parent canonical state, action id, representative)
    let mut parents: HashMap<Vec<Cell>, (Option<Vec<Cell>>, usize)> = HashMap::new();
    parents.insert(key(start), (None, 0));
    let mut queue = VecDeque::from([(start.clone(), 0usize)]);
    while let Some((cfg, depth)) = queue.pop_front() {
        if depth == max_depth {
            continue;
        }
        let here = key(&cfg);
        let mask = geometry::action_mask_with(&cfg, rules);
        for id in mask.valid_ids().skip(1) {
            let action = geometry::decode_action(id, n).expect("mask ids are in range");
            let next = geometry::apply_with(&cfg, action, rules).expect("mask-valid move applies");
            let k = key(&next);
            if parents.contains_key(&k) {
                continue;
            }
            parents.insert(k.clone(), (Some(here.clone()), id));
            if k == target {
                let mut plan = vec![id];
                let mut cur = here.clone();
                while let Some((Some(parent), aid)) = parents.get(&cur).cloned() {
                    plan.push(aid);
                    cur = parent;
                }
                plan.reverse();
                return Some(plan);
            }
            queue.push_back((next, depth + 1));
        }
    }
    None
}

/// Every configuration (by cell set) reachable from `start`, with its BFS
/// depth.
pub fn reachable_sets(start: &Configuration, rules: MoveRules) -> HashMap<Vec<Cell>, usize> {
    let n = start.len();
    let mut depth = HashMap::from([(start.sorted_cells(), 0usize)]);
    let mut queue = VecDeque::from([(start.clone(), 0usize)]);
    while let Some((cfg, d)) = queue.pop_front() {
        for id in geometry::action_mask_with(&cfg, rules).valid_ids().skip(1) {
            let next = geometry::apply_with(&cfg, geometry::decode_action(id, n).unwrap(), rules).unwrap();
            let k = next.sorted_cells();
            if let std::collections::hash_map::Entry::Vacant(e) = depth.entry(k) {
                e.insert(d + 1);
                queue.push_back((next, d + 1));
            }
        }
    }
    depth
}

/// Random cell set in a small box, possibly disconnected, possibly with
/// fewer than `size` cells if duplicates were drawn. Used for fuzzing.
pub fn random_cells<R: Rng>(rng: &mut R, size: usize, radius: i32) -> Vec<Cell> {
    let mut cells = Vec::with_capacity(size);
    while cells.len() < size {
        let c = Cell::new(
            rng.gen_range(-radius..=radius),
            rng.gen_range(-radius..=radius),
            rng.gen_range(-radius..=radius),
        );
        if !cells.contains(&c) {
            cells.push(c);
        }
    }
    cells
}

/// Follows uniformly random valid moves (no-ops excluded) for `steps` steps.
pub fn random_walk<R: Rng>(rng: &mut R, start: &Configuration, steps: usize, rules: MoveRules) -> Configuration {
    let mut cfg = start.clone();
    for _ in 0..steps {
        let mask = geometry::action_mask_with(&cfg, rules);
        let ids: Vec<usize> = mask.valid_ids().skip(1).collect();
        if ids.is_empty() {
            break;
        }
        let id = ids[rng.gen_range(0..ids.len())];
        cfg = geometry::apply_with(&cfg, geometry::decode_action(id, cfg.len()).unwrap(), rules).unwrap();
    }
    cfg
}

/// Replays a plan and reports whether the final configuration matches.
pub fn plan_reaches(start: &Configuration, goal: &GoalSpec, plan: &[usize], rules: MoveRules) -> bool {
    let mut cfg = start.clone();
    for &id in plan {
        let Ok(action) = geometry::decode_action(id, cfg.len()) else { return false };
        if matches!(action, Action::NoOp) {
            continue;
        }
        match geometry::apply_with(&cfg, action, rules) {
            Ok(next) => cfg = next,
            Err(_) => return false,
        }
    }
    cfg.sorted_cells() == goal.cells()
}
