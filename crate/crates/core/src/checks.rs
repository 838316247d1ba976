//! The oracle cross-check suite behind `msrs check`: every fast path is
//! compared against its brute-force reference on seeded random inputs, and
//! the first disagreement is kept for reproduction.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{self, Action, Angle, Cell, Configuration, EdgeSpec, MoveRules, Rotation, SweepFn, Validity};
use crate::matching;
use crate::oracle;

/// Which swept-cell rule the geometry checks exercise. `Corrupted` drops one
/// cell from every sweep so the harness can prove it catches faults.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SweepTable {
    #[default]
    Exact,
    Corrupted,
}

impl SweepTable {
    fn function(self) -> SweepFn {
        match self {
            SweepTable::Exact => geometry::swept_cells,
            SweepTable::Corrupted => corrupted_sweep,
        }
    }
}

fn corrupted_sweep(c: Cell, edge: EdgeSpec, angle: Angle) -> Vec<Cell> {
    let mut cells = geometry::swept_cells(c, edge, angle);
    cells.pop();
    cells
}

#[derive(Clone, Debug)]
pub struct CheckOptions {
    pub seed: u64,
    /// Random base cells each (edge, angle) sweep is translated to.
    pub sweep_bases: usize,
    /// Random pairs per module count 2..=7.
    pub matching_pairs: usize,
    pub connectivity_sets: usize,
    /// States visited by random walks, spread over n = 3..=6.
    pub mask_states: usize,
    pub sweep_table: SweepTable,
}

impl CheckOptions {
    pub fn new(seed: u64) -> Self {
        CheckOptions {
            seed,
            sweep_bases: 50,
            matching_pairs: 1000,
            connectivity_sets: 1000,
            mask_states: 10_000,
            sweep_table: SweepTable::Exact,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub checks: usize,
    pub counterexample: Option<String>,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.counterexample.is_none()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckReport {
    pub seed: u64,
    pub outcomes: Vec<CheckOutcome>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(CheckOutcome::passed)
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "seed {}", self.seed)?;
        for o in &self.outcomes {
            match &o.counterexample {
                None => writeln!(f, "ok   {:<14} {} checks", o.name, o.checks)?,
                Some(cx) => writeln!(f, "FAIL {:<14} after {} checks: {cx}", o.name, o.checks)?,
            }
        }
        Ok(())
    }
}

pub fn run_cross_checks(opts: &CheckOptions) -> CheckReport {
    let stream = |k: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(k);
        rng
    };
    CheckReport {
        seed: opts.seed,
        outcomes: vec![
            check_sweeps(&mut stream(1), opts.sweep_bases, opts.sweep_table),
            check_matching(&mut stream(2), opts.matching_pairs),
            check_connectivity(&mut stream(3), opts.connectivity_sets),
            check_masks(&mut stream(4), opts.mask_states, opts.sweep_table),
        ],
    }
}

/// Sampled sweeps at 1° for every (edge, angle) about the origin, keyed as
/// offsets from the rotating cell.
fn sampled_sweep_offsets() -> HashMap<(EdgeSpec, Angle), (BTreeSet<Cell>, Cell)> {
    let mut table = HashMap::new();
    for edge in EdgeSpec::all() {
        for angle in Angle::ALL {
            let cells = oracle::sampled_sweep(Cell::ORIGIN, edge, angle, 1.0);
            table.insert((edge, angle), (cells, oracle::sampled_endpoint(Cell::ORIGIN, edge, angle)));
        }
    }
    table
}

pub fn check_sweeps<R: Rng>(rng: &mut R, bases: usize, table: SweepTable) -> CheckOutcome {
    let sweep = table.function();
    let mut checks = 0;
    for b in 0..=bases {
        // the untranslated pivot first, then random bases
        let base = if b == 0 {
            Cell::ORIGIN
        } else {
            Cell::new(rng.gen_range(-50..=50), rng.gen_range(-50..=50), rng.gen_range(-50..=50))
        };
        for edge in EdgeSpec::all() {
            for angle in Angle::ALL {
                checks += 1;
                let expected = oracle::sampled_sweep(base, edge, angle, 1.0);
                let got: BTreeSet<Cell> = sweep(base, edge, angle).into_iter().collect();
                let end = geometry::rotation_endpoint(base, edge, angle);
                let expected_end = oracle::sampled_endpoint(base, edge, angle);
                if got != expected || end != expected_end {
                    return CheckOutcome {
                        name: "sweep",
                        checks,
                        counterexample: Some(format!(
                            "cell {base:?} edge {edge:?} angle {}: swept {got:?} endpoint {end:?}, oracle swept {expected:?} endpoint {expected_end:?}",
                            angle.degrees()
                        )),
                    };
                }
            }
        }
    }
    CheckOutcome { name: "sweep", checks, counterexample: None }
}

pub fn check_matching<R: Rng>(rng: &mut R, pairs: usize) -> CheckOutcome {
    let mut checks = 0;
    for n in 2..=7 {
        for _ in 0..pairs {
            checks += 1;
            let s = oracle::random_cells(rng, n, 3);
            let g = oracle::random_cells(rng, n, 3);
            let fast = matching::config_distance(&s, &g).expect("equal sizes");
            let slow = oracle::brute_force_distance(&s, &g).expect("small n");
            if (fast - slow).abs() > 1e-9 {
                return CheckOutcome {
                    name: "matching",
                    checks,
                    counterexample: Some(format!("state {s:?} goal {g:?}: hungarian {fast} brute force {slow}")),
                };
            }
        }
    }
    CheckOutcome { name: "matching", checks, counterexample: None }
}

pub fn check_connectivity<R: Rng>(rng: &mut R, sets: usize) -> CheckOutcome {
    for k in 0..sets {
        let size = rng.gen_range(1..=10);
        // a tight box so both outcomes are common
        let cells = oracle::random_cells(rng, size, 1 + (size as i32) / 4);
        let fast = geometry::is_connected(&cells).expect("nonempty");
        let slow = oracle::bfs_connected(&cells).expect("nonempty");
        if fast != slow {
            return CheckOutcome {
                name: "connectivity",
                checks: k + 1,
                counterexample: Some(format!("cells {cells:?}: warshall {fast} bfs {slow}")),
            };
        }
    }
    CheckOutcome { name: "connectivity", checks: sets, counterexample: None }
}

/// First failing check under the oracle's own reading of the move rules.
fn oracle_verdict(
    cells: &[Cell],
    r: &Rotation,
    rules: MoveRules,
    sweeps: &HashMap<(EdgeSpec, Angle), (BTreeSet<Cell>, Cell)>,
) -> Validity {
    let mover = cells[r.module];
    let others: BTreeSet<Cell> =
        cells.iter().enumerate().filter(|&(i, _)| i != r.module).map(|(_, &c)| c).collect();
    let (u, v) = r.edge.axis.plane();
    let shift = |axis: geometry::Axis, d: i32| {
        let mut c = mover;
        match axis {
            geometry::Axis::X => c.x += d,
            geometry::Axis::Y => c.y += d,
            geometry::Axis::Z => c.z += d,
        }
        c
    };
    if !others.contains(&shift(u, r.edge.s_u)) && !others.contains(&shift(v, r.edge.s_v)) {
        return Validity::InvalidA;
    }
    let (swept, end) = &sweeps[&(r.edge, r.angle)];
    if swept.iter().any(|&d| others.contains(&(mover + d))) {
        return Validity::InvalidB;
    }
    let mut after: Vec<Cell> = others.iter().copied().collect();
    after.push(mover + *end);
    if !oracle::bfs_connected(&after).expect("nonempty") {
        return Validity::InvalidC;
    }
    if rules.strict_connectivity && !oracle::bfs_connected(&others.into_iter().collect::<Vec<_>>()).expect("nonempty") {
        return Validity::InvalidC;
    }
    Validity::Valid
}

/// Mask entries against the oracle verdict on states visited by random
/// walks; mask-true moves must also produce a well-formed configuration.
pub fn check_masks<R: Rng>(rng: &mut R, states: usize, table: SweepTable) -> CheckOutcome {
    let sweep = table.function();
    let sweeps = sampled_sweep_offsets();
    let mut checks = 0;
    let mut visited = 0;
    let fail = |checks, msg: String| CheckOutcome { name: "mask", checks, counterexample: Some(msg) };
    while visited < states {
        let n = rng.gen_range(3..=6);
        let rules = MoveRules { strict_connectivity: rng.gen_bool(0.25) };
        let mut cfg = Configuration::line(n);
        for _ in 0..40 {
            if visited == states {
                break;
            }
            visited += 1;
            let mask = geometry::mask_using(&cfg, rules, sweep);
            for id in 1..mask.len() {
                checks += 1;
                let Action::Rotate(r) = geometry::decode_action(id, n).expect("in range") else { unreachable!() };
                let verdict = oracle_verdict(cfg.cells(), &r, rules, &sweeps);
                let label = geometry::classify(&cfg, &r, rules, sweep);
                if mask.is_valid(id) != (verdict == Validity::Valid) || label != verdict {
                    return fail(
                        checks,
                        format!(
                            "state {:?} action {id} ({r:?}, strict {}): mask {} label {label:?}, oracle {verdict:?}",
                            cfg.cells(),
                            rules.strict_connectivity,
                            mask.is_valid(id)
                        ),
                    );
                }
                if mask.is_valid(id) {
                    let mut after = cfg.cells().to_vec();
                    after[r.module] = geometry::rotation_endpoint(after[r.module], r.edge, r.angle);
                    let distinct = after.iter().collect::<BTreeSet<_>>().len() == n;
                    if !distinct || after[0] != Cell::ORIGIN || !oracle::bfs_connected(&after).expect("nonempty") {
                        return fail(checks, format!("state {:?} action {id} gives ill-formed {after:?}", cfg.cells()));
                    }
                }
            }
            let ids: Vec<usize> = mask.valid_ids().skip(1).collect();
            if ids.is_empty() {
                break;
            }
            let id = ids[rng.gen_range(0..ids.len())];
            let next = geometry::apply_with(&cfg, geometry::decode_action(id, n).expect("in range"), rules);
            match next {
                Ok(next) => cfg = next,
                // a corrupted sweep can admit moves the real rules reject
                Err(e) => return fail(checks, format!("state {:?} action {id} masked valid but apply says {e}", cfg.cells())),
            }
        }
    }
    CheckOutcome { name: "mask", checks, counterexample: None }
}
