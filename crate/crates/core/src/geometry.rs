//! Pivoting-cube kinematics on the integer lattice.
//!
//! A module is a unit cube whose center sits on an integer [`Cell`]. A move
//! pivots one module by ±90° or ±180° about one of its twelve edges. The
//! action encoding is frozen:
//!
//! ```text
//! id 0                      no-op
//! id = 1 + 48·(m − 1) + 4·e + a     module m ∈ [1, n−1]
//!   e = 4·axis + signs      axis X,Y,Z = 0,1,2; signs (−,−),(−,+),(+,−),(+,+) = 0..3
//!   a                       +90, −90, +180, −180 = 0..3
//! ```
//!
//! For an edge along `axis`, the signs `(s_u, s_v)` give the edge offset
//! (±½) along the two remaining axes taken in cyclic order: X → (Y, Z),
//! Y → (Z, X), Z → (X, Y). Positive angles are counterclockwise when viewed
//! from the positive end of the axis.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rotations available to one module: 12 edges × 4 angles.
pub const ACTIONS_PER_MODULE: usize = 48;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[i32; 3]", into = "[i32; 3]")]
pub struct Cell {
    pub x: i32,
    pub y: i32,
    pub z: i32,
}

impl Cell {
    pub const ORIGIN: Cell = Cell { x: 0, y: 0, z: 0 };

    pub const fn new(x: i32, y: i32, z: i32) -> Self {
        Cell { x, y, z }
    }

    pub fn get(self, axis: Axis) -> i32 {
        match axis {
            Axis::X => self.x,
            Axis::Y => self.y,
            Axis::Z => self.z,
        }
    }

    fn with(mut self, axis: Axis, value: i32) -> Self {
        match axis {
            Axis::X => self.x = value,
            Axis::Y => self.y = value,
            Axis::Z => self.z = value,
        }
        self
    }

    /// Offsets the cell by `du` along `u` and `dv` along `v`.
    fn shifted(self, u: Axis, du: i32, v: Axis, dv: i32) -> Self {
        self.with(u, self.get(u) + du).with(v, self.get(v) + dv)
    }

    pub fn manhattan(self, other: Cell) -> i32 {
        (self.x - other.x).abs() + (self.y - other.y).abs() + (self.z - other.z).abs()
    }

    pub fn chebyshev_norm(self) -> i32 {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }

    pub fn is_face_adjacent(self, other: Cell) -> bool {
        self.manhattan(other) == 1
    }

    pub fn face_neighbors(self) -> [Cell; 6] {
        let Cell { x, y, z } = self;
        [
            Cell::new(x - 1, y, z),
            Cell::new(x + 1, y, z),
            Cell::new(x, y - 1, z),
            Cell::new(x, y + 1, z),
            Cell::new(x, y, z - 1),
            Cell::new(x, y, z + 1),
        ]
    }

    pub fn euclidean(self, other: Cell) -> f64 {
        let dx = f64::from(self.x - other.x);
        let dy = f64::from(self.y - other.y);
        let dz = f64::from(self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

impl std::ops::Add for Cell {
    type Output = Cell;
    fn add(self, rhs: Cell) -> Cell {
        Cell::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl std::ops::Sub for Cell {
    type Output = Cell;
    fn sub(self, rhs: Cell) -> Cell {
        Cell::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl From<[i32; 3]> for Cell {
    fn from([x, y, z]: [i32; 3]) -> Self {
        Cell { x, y, z }
    }
}

impl From<Cell> for [i32; 3] {
    fn from(c: Cell) -> Self {
        [c.x, c.y, c.z]
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.x, self.y, self.z)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    /// The two in-plane axes `(u, v)` in cyclic order, so that `u × v = axis`.
    pub fn plane(self) -> (Axis, Axis) {
        match self {
            Axis::X => (Axis::Y, Axis::Z),
            Axis::Y => (Axis::Z, Axis::X),
            Axis::Z => (Axis::X, Axis::Y),
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// One of the twelve edges of a cube.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub axis: Axis,
    pub s_u: i32,
    pub s_v: i32,
}

impl EdgeSpec {
    pub fn new(axis: Axis, s_u: i32, s_v: i32) -> Result<Self> {
        for s in [s_u, s_v] {
            if s != 1 && s != -1 {
                return Err(Error::InvalidSign(s));
            }
        }
        Ok(EdgeSpec { axis, s_u, s_v })
    }

    /// All 12 edges in encoding order.
    pub fn all() -> [EdgeSpec; 12] {
        std::array::from_fn(EdgeSpec::from_index)
    }

    /// Inverse of [`EdgeSpec::index`]; `index` must be below 12.
    pub fn from_index(index: usize) -> EdgeSpec {
        let axis = Axis::ALL[index / 4];
        let pair = index % 4;
        let s_u = if pair < 2 { -1 } else { 1 };
        let s_v = if pair % 2 == 0 { -1 } else { 1 };
        EdgeSpec { axis, s_u, s_v }
    }

    pub fn index(self) -> usize {
        let pair = usize::from(self.s_u > 0) * 2 + usize::from(self.s_v > 0);
        self.axis.index() * 4 + pair
    }
}

impl fmt::Display for EdgeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = |s: i32| if s > 0 { '+' } else { '-' };
        write!(f, "({:?},{},{})", self.axis, sign(self.s_u), sign(self.s_v))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Angle {
    Pos90,
    Neg90,
    Pos180,
    Neg180,
}

impl Angle {
    pub const ALL: [Angle; 4] = [Angle::Pos90, Angle::Neg90, Angle::Pos180, Angle::Neg180];

    pub fn from_degrees(deg: i32) -> Result<Self> {
        match deg {
            90 => Ok(Angle::Pos90),
            -90 => Ok(Angle::Neg90),
            180 => Ok(Angle::Pos180),
            -180 => Ok(Angle::Neg180),
            other => Err(Error::InvalidAngle(other)),
        }
    }

    pub fn degrees(self) -> i32 {
        match self {
            Angle::Pos90 => 90,
            Angle::Neg90 => -90,
            Angle::Pos180 => 180,
            Angle::Neg180 => -180,
        }
    }

    fn index(self) -> usize {
        self as usize
    }

    /// +1 for counterclockwise, −1 for clockwise.
    fn direction(self) -> i32 {
        match self {
            Angle::Pos90 | Angle::Pos180 => 1,
            Angle::Neg90 | Angle::Neg180 => -1,
        }
    }

    fn quarter_turns(self) -> usize {
        match self {
            Angle::Pos90 | Angle::Neg90 => 1,
            Angle::Pos180 | Angle::Neg180 => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rotation {
    pub module: usize,
    pub edge: EdgeSpec,
    pub angle: Angle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    NoOp,
    Rotate(Rotation),
}

/// Size of the action space for `n` modules: 48 rotations per movable module
/// plus the no-op.
pub fn action_count(n: usize) -> usize {
    ACTIONS_PER_MODULE * n.saturating_sub(1) + 1
}

pub fn decode_action(id: usize, n: usize) -> Result<Action> {
    let max = action_count(n) - 1;
    if id > max {
        return Err(Error::ActionOutOfRange { id, modules: n, max });
    }
    if id == 0 {
        return Ok(Action::NoOp);
    }
    let module = 1 + (id - 1) / ACTIONS_PER_MODULE;
    let local = (id - 1) % ACTIONS_PER_MODULE;
    Ok(Action::Rotate(Rotation {
        module,
        edge: EdgeSpec::from_index(local / 4),
        angle: Angle::ALL[local % 4],
    }))
}

pub fn encode_action(action: Action, n: usize) -> Result<usize> {
    match action {
        Action::NoOp => Ok(0),
        Action::Rotate(r) => {
            if r.module == 0 || r.module >= n {
                return Err(Error::ModuleOutOfRange { module: r.module, modules: n });
            }
            Ok(1 + ACTIONS_PER_MODULE * (r.module - 1) + 4 * r.edge.index() + r.angle.index())
        }
    }
}

// Planar geometry is done in doubled coordinates so that pivots (which sit on
// half-integers) stay integral.

/// One quarter turn of the cell centered at `center2` about `pivot2`
/// (both doubled, in-plane). Returns the doubled destination center and the
/// three cells (undoubled) swept by the turn, destination first.
fn quarter_turn(center2: (i32, i32), pivot2: (i32, i32), dir: i32) -> ((i32, i32), [(i32, i32); 3]) {
    let d = (center2.0 - pivot2.0, center2.1 - pivot2.1);
    let rotated = if dir > 0 { (-d.1, d.0) } else { (d.1, -d.0) };
    let dest2 = (pivot2.0 + rotated.0, pivot2.1 + rotated.1);
    let motion = ((dest2.0 - center2.0) / 2, (dest2.1 - center2.1) / 2);
    // unit vector perpendicular to the motion, on the side away from the pivot
    let mut away = (-motion.1, motion.0);
    if away.0 * d.0 + away.1 * d.1 < 0 {
        away = (-away.0, -away.1);
    }
    let start = (center2.0 / 2, center2.1 / 2);
    let dest = (dest2.0 / 2, dest2.1 / 2);
    let swept = [dest, (start.0 + away.0, start.1 + away.1), (dest.0 + away.0, dest.1 + away.1)];
    (dest2, swept)
}

fn pivot2(c: Cell, edge: EdgeSpec) -> (i32, i32) {
    let (u, v) = edge.axis.plane();
    (2 * c.get(u) + edge.s_u, 2 * c.get(v) + edge.s_v)
}

fn from_plane(base: Cell, edge: EdgeSpec, (pu, pv): (i32, i32)) -> Cell {
    let (u, v) = edge.axis.plane();
    base.with(u, pu).with(v, pv)
}

pub fn rotation_endpoint(c: Cell, edge: EdgeSpec, angle: Angle) -> Cell {
    let (u, v) = edge.axis.plane();
    let (du, dv) = match angle {
        Angle::Pos90 => ((edge.s_v + edge.s_u) / 2, (edge.s_v - edge.s_u) / 2),
        Angle::Neg90 => ((edge.s_u - edge.s_v) / 2, (edge.s_u + edge.s_v) / 2),
        Angle::Pos180 | Angle::Neg180 => (edge.s_u, edge.s_v),
    };
    c.shifted(u, du, v, dv)
}

/// Cells, other than `c` itself, whose open volume the cube passes through
/// while rotating. Includes the destination. 3 cells for a quarter turn,
/// 6 for a half turn.
pub fn swept_cells(c: Cell, edge: EdgeSpec, angle: Angle) -> Vec<Cell> {
    let (u, v) = edge.axis.plane();
    let pivot = pivot2(c, edge);
    let mut center = (2 * c.get(u), 2 * c.get(v));
    let mut out = Vec::with_capacity(6);
    for _ in 0..angle.quarter_turns() {
        let (next, swept) = quarter_turn(center, pivot, angle.direction());
        out.extend(swept.iter().map(|&p| from_plane(c, edge, p)));
        center = next;
    }
    out
}

/// The two face neighbors of `c` that share the pivot edge.
pub fn anchor_cells(c: Cell, edge: EdgeSpec) -> [Cell; 2] {
    let (u, v) = edge.axis.plane();
    [c.shifted(u, edge.s_u, v, 0), c.shifted(u, 0, v, edge.s_v)]
}

/// Face connectivity via Warshall transitive closure of the adjacency matrix.
pub fn is_connected(cells: &[Cell]) -> Result<bool> {
    if cells.is_empty() {
        return Err(Error::EmptyCellSet);
    }
    Ok(warshall_connected(cells))
}

fn warshall_connected(cells: &[Cell]) -> bool {
    let n = cells.len();
    let mut reach = vec![false; n * n];
    for i in 0..n {
        reach[i * n + i] = true;
        for j in 0..n {
            if cells[i].is_face_adjacent(cells[j]) {
                reach[i * n + j] = true;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            if reach[i * n + k] {
                for j in 0..n {
                    if reach[k * n + j] {
                        reach[i * n + j] = true;
                    }
                }
            }
        }
    }
    reach[..n].iter().all(|&r| r)
}

/// An ordered, validated module placement. Module 0 is at the origin.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Cell>", into = "Vec<Cell>")]
pub struct Configuration {
    cells: Vec<Cell>,
}

impl Configuration {
    pub fn new(cells: Vec<Cell>) -> Result<Self> {
        validate_cells(&cells, "configuration").map_err(Error::InvalidConfiguration)?;
        if cells[0] != Cell::ORIGIN {
            return Err(Error::InvalidConfiguration(format!(
                "module 0 must be at the origin, found {}",
                cells[0]
            )));
        }
        Ok(Configuration { cells })
    }

    /// Modules at (0,0,0), (1,0,0), … (n−1,0,0).
    pub fn line(n: usize) -> Self {
        let cells = (0..n as i32).map(|x| Cell::new(x, 0, 0)).collect();
        Configuration { cells }
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn is_occupied(&self, c: Cell) -> bool {
        self.cells.contains(&c)
    }

    /// Cells in canonical lexicographic order.
    pub fn sorted_cells(&self) -> Vec<Cell> {
        let mut cells = self.cells.clone();
        cells.sort_unstable();
        cells
    }
}

impl TryFrom<Vec<Cell>> for Configuration {
    type Error = Error;
    fn try_from(cells: Vec<Cell>) -> Result<Self> {
        Configuration::new(cells)
    }
}

impl From<Configuration> for Vec<Cell> {
    fn from(c: Configuration) -> Self {
        c.cells
    }
}

/// Checks nonempty, pairwise distinct and face-connected.
pub(crate) fn validate_cells(cells: &[Cell], what: &str) -> std::result::Result<(), String> {
    if cells.is_empty() {
        return Err(format!("{what} has no cells"));
    }
    for (i, a) in cells.iter().enumerate() {
        if cells[i + 1..].contains(a) {
            return Err(format!("{what} contains cell {a} more than once"));
        }
    }
    if !warshall_connected(cells) {
        return Err(format!("{what} is not face-connected"));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Validity {
    Valid,
    /// No occupied face neighbor shares the pivot edge.
    InvalidA,
    /// The sweep passes through another module.
    InvalidB,
    /// The result (or, in strict mode, the stationary remainder) is disconnected.
    InvalidC,
}

/// Options controlling which moves count as valid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveRules {
    /// Also require the n−1 stationary modules to stay connected while the
    /// mover is in flight.
    pub strict_connectivity: bool,
}

pub fn check_rotation(config: &Configuration, r: &Rotation) -> Result<Validity> {
    check_rotation_with(config, r, MoveRules::default())
}

pub fn check_rotation_with(config: &Configuration, r: &Rotation, rules: MoveRules) -> Result<Validity> {
    let n = config.len();
    if r.module == 0 || r.module >= n {
        return Err(Error::ModuleOutOfRange { module: r.module, modules: n });
    }
    Ok(classify(config, r, rules, swept_cells))
}

pub(crate) type SweepFn = fn(Cell, EdgeSpec, Angle) -> Vec<Cell>;

pub(crate) fn classify(config: &Configuration, r: &Rotation, rules: MoveRules, sweep: SweepFn) -> Validity {
    let cells = config.cells();
    let mover = cells[r.module];
    let occupied_by_other =
        |c: Cell| cells.iter().enumerate().any(|(i, &o)| i != r.module && o == c);

    if !anchor_cells(mover, r.edge).into_iter().any(occupied_by_other) {
        return Validity::InvalidA;
    }
    if sweep(mover, r.edge, r.angle).into_iter().any(occupied_by_other) {
        return Validity::InvalidB;
    }
    let dest = rotation_endpoint(mover, r.edge, r.angle);
    let mut after = cells.to_vec();
    after[r.module] = dest;
    if !warshall_connected(&after) {
        return Validity::InvalidC;
    }
    if rules.strict_connectivity {
        let rest: Vec<Cell> =
            cells.iter().enumerate().filter(|&(i, _)| i != r.module).map(|(_, &c)| c).collect();
        if !warshall_connected(&rest) {
            return Validity::InvalidC;
        }
    }
    Validity::Valid
}

/// Validity of every action id in a state. Bit 0 (no-op) is always set.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionMask {
    bits: Vec<bool>,
}

impl ActionMask {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        assert!(bits.first().copied().unwrap_or(false), "no-op must be valid");
        ActionMask { bits }
    }

    pub fn all_valid(len: usize) -> Self {
        ActionMask { bits: vec![true; len] }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn is_valid(&self, id: usize) -> bool {
        self.bits.get(id).copied().unwrap_or(false)
    }

    pub fn count_valid(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn valid_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }
}

pub fn action_mask(config: &Configuration) -> ActionMask {
    action_mask_with(config, MoveRules::default())
}

pub fn action_mask_with(config: &Configuration, rules: MoveRules) -> ActionMask {
    mask_using(config, rules, swept_cells)
}

pub(crate) fn mask_using(config: &Configuration, rules: MoveRules, sweep: SweepFn) -> ActionMask {
    let n = config.len();
    let mut bits = vec![false; action_count(n)];
    bits[0] = true;
    for module in 1..n {
        for edge in EdgeSpec::all() {
            for angle in Angle::ALL {
                let r = Rotation { module, edge, angle };
                if classify(config, &r, rules, sweep) == Validity::Valid {
                    let id = 1 + ACTIONS_PER_MODULE * (module - 1) + 4 * edge.index() + angle.index();
                    bits[id] = true;
                }
            }
        }
    }
    ActionMask { bits }
}

pub fn apply(config: &Configuration, action: Action) -> Result<Configuration> {
    apply_with(config, action, MoveRules::default())
}

pub fn apply_with(config: &Configuration, action: Action, rules: MoveRules) -> Result<Configuration> {
    match action {
        Action::NoOp => Ok(config.clone()),
        Action::Rotate(r) => match check_rotation_with(config, &r, rules)? {
            Validity::Valid => {
                let mut cells = config.cells.clone();
                cells[r.module] = rotation_endpoint(cells[r.module], r.edge, r.angle);
                Ok(Configuration { cells })
            }
            bad => Err(Error::InvalidMove(bad)),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: i32, y: i32, z: i32) -> Cell {
        Cell::new(x, y, z)
    }

    fn edge(axis: Axis, s_u: i32, s_v: i32) -> EdgeSpec {
        EdgeSpec::new(axis, s_u, s_v).unwrap()
    }

    fn rot(module: usize, e: EdgeSpec, deg: i32) -> Rotation {
        Rotation { module, edge: e, angle: Angle::from_degrees(deg).unwrap() }
    }

    fn pair() -> Configuration {
        Configuration::new(vec![c(0, 0, 0), c(1, 0, 0)]).unwrap()
    }

    fn sorted(mut v: Vec<Cell>) -> Vec<Cell> {
        v.sort();
        v
    }

    #[test]
    fn decode_examples() {
        assert_eq!(decode_action(0, 4).unwrap(), Action::NoOp);
        assert_eq!(decode_action(1, 4).unwrap(), Action::Rotate(rot(1, edge(Axis::X, -1, -1), 90)));
        assert_eq!(decode_action(144, 4).unwrap(), Action::Rotate(rot(3, edge(Axis::Z, 1, 1), -180)));
        assert!(matches!(decode_action(145, 4), Err(Error::ActionOutOfRange { .. })));
    }

    #[test]
    fn encode_decode_bijective() {
        for n in 1..=6 {
            for id in 0..action_count(n) {
                let a = decode_action(id, n).unwrap();
                assert_eq!(encode_action(a, n).unwrap(), id);
            }
        }
        assert!(encode_action(Action::Rotate(rot(0, edge(Axis::X, 1, 1), 90)), 3).is_err());
    }

    #[test]
    fn edges_are_distinct() {
        let all = EdgeSpec::all();
        for (i, e) in all.iter().enumerate() {
            assert_eq!(e.index(), i);
            assert!(!all[..i].contains(e));
        }
        assert!(EdgeSpec::new(Axis::X, 0, 1).is_err());
    }

    #[test]
    fn angle_domain() {
        assert!(matches!(Angle::from_degrees(45), Err(Error::InvalidAngle(45))));
        for a in Angle::ALL {
            assert_eq!(Angle::from_degrees(a.degrees()).unwrap(), a);
        }
    }

    #[test]
    fn endpoint_examples() {
        let e = edge(Axis::Z, 1, -1);
        assert_eq!(rotation_endpoint(c(0, 0, 0), e, Angle::Neg90), c(1, 0, 0));
        assert_eq!(rotation_endpoint(c(0, 0, 0), e, Angle::Pos90), c(0, -1, 0));
        assert_eq!(rotation_endpoint(c(0, 0, 0), e, Angle::Pos180), c(1, -1, 0));
        assert_eq!(rotation_endpoint(c(0, 0, 0), e, Angle::Neg180), c(1, -1, 0));
    }

    #[test]
    fn sweep_examples() {
        let e = edge(Axis::Z, 1, -1);
        assert_eq!(
            sorted(swept_cells(c(0, 0, 0), e, Angle::Neg90)),
            sorted(vec![c(1, 0, 0), c(0, 1, 0), c(1, 1, 0)])
        );
        assert_eq!(
            sorted(swept_cells(c(0, 0, 0), e, Angle::Pos90)),
            sorted(vec![c(0, -1, 0), c(-1, 0, 0), c(-1, -1, 0)])
        );
        assert_eq!(
            sorted(swept_cells(c(0, 0, 0), e, Angle::Neg180)),
            sorted(vec![c(1, 0, 0), c(0, 1, 0), c(1, 1, 0), c(1, -1, 0), c(2, 0, 0), c(2, -1, 0)])
        );
    }

    #[test]
    fn sweep_contains_endpoint_and_has_expected_size() {
        for e in EdgeSpec::all() {
            for a in Angle::ALL {
                let s = swept_cells(c(3, -2, 1), e, a);
                assert!(s.contains(&rotation_endpoint(c(3, -2, 1), e, a)));
                let mut d = s.clone();
                d.sort();
                d.dedup();
                assert_eq!(d.len(), s.len());
                assert_eq!(s.len(), 3 * a.quarter_turns());
                assert!(!s.contains(&c(3, -2, 1)));
            }
        }
    }

    #[test]
    fn anchor_examples() {
        assert_eq!(anchor_cells(c(0, 0, 0), edge(Axis::Z, 1, -1)), [c(1, 0, 0), c(0, -1, 0)]);
        assert_eq!(anchor_cells(c(2, 3, 5), edge(Axis::X, -1, 1)), [c(2, 2, 5), c(2, 3, 6)]);
    }

    #[test]
    fn connectivity_examples() {
        assert!(is_connected(&[c(0, 0, 0), c(1, 0, 0), c(2, 0, 0)]).unwrap());
        assert!(!is_connected(&[c(0, 0, 0), c(1, 1, 0)]).unwrap());
        assert!(is_connected(&[c(0, 0, 0)]).unwrap());
        assert_eq!(is_connected(&[]), Err(Error::EmptyCellSet));
    }

    #[test]
    fn check_rotation_examples() {
        let cfg = pair();
        assert_eq!(check_rotation(&cfg, &rot(1, edge(Axis::Z, -1, 1), 90)).unwrap(), Validity::InvalidC);
        assert_eq!(check_rotation(&cfg, &rot(1, edge(Axis::Z, -1, -1), -180)).unwrap(), Validity::Valid);
        assert_eq!(check_rotation(&cfg, &rot(1, edge(Axis::Z, 1, 1), -90)).unwrap(), Validity::InvalidA);
        // swings straight into module 0
        assert_eq!(check_rotation(&cfg, &rot(1, edge(Axis::Z, -1, 1), -90)).unwrap(), Validity::InvalidB);
        assert!(matches!(
            check_rotation(&cfg, &rot(0, edge(Axis::Z, 1, 1), 90)),
            Err(Error::ModuleOutOfRange { .. })
        ));
        assert!(check_rotation(&cfg, &rot(2, edge(Axis::Z, 1, 1), 90)).is_err());
    }

    #[test]
    fn mask_examples() {
        let single = Configuration::new(vec![c(0, 0, 0)]).unwrap();
        assert_eq!(action_mask(&single).bits(), &[true]);

        let mask = action_mask(&pair());
        assert_eq!(mask.len(), 49);
        assert!(mask.is_valid(0));
        let landings: Vec<Cell> = mask
            .valid_ids()
            .skip(1)
            .map(|id| match decode_action(id, 2).unwrap() {
                Action::Rotate(r) => {
                    assert!(matches!(r.angle, Angle::Pos180 | Angle::Neg180));
                    rotation_endpoint(c(1, 0, 0), r.edge, r.angle)
                }
                Action::NoOp => unreachable!(),
            })
            .collect();
        assert_eq!(sorted(landings), sorted(vec![c(0, -1, 0), c(0, 1, 0), c(0, 0, -1), c(0, 0, 1)]));
    }

    #[test]
    fn apply_examples() {
        let cfg = pair();
        assert_eq!(apply(&cfg, Action::NoOp).unwrap(), cfg);
        let moved = apply(&cfg, Action::Rotate(rot(1, edge(Axis::Z, -1, -1), -180))).unwrap();
        assert_eq!(moved.cells(), &[c(0, 0, 0), c(0, -1, 0)]);
        assert_eq!(
            apply(&cfg, Action::Rotate(rot(1, edge(Axis::Z, 1, 1), -90))),
            Err(Error::InvalidMove(Validity::InvalidA))
        );
    }

    #[test]
    fn strict_mode_rejects_disconnecting_remainder() {
        // 0 - 1 - 2 in a line: lifting module 1 leaves 0 and 2 apart mid-flight,
        // so check with an L where the middle module moves.
        let cfg = Configuration::new(vec![c(0, 0, 0), c(1, 0, 0), c(1, 1, 0), c(0, 1, 0)]).unwrap();
        let strict = MoveRules { strict_connectivity: true };
        let loose = action_mask(&cfg);
        let tight = action_mask_with(&cfg, strict);
        for id in tight.valid_ids() {
            assert!(loose.is_valid(id));
        }
        // a ring of 4: any single mover leaves a connected remainder of 3
        assert_eq!(loose, tight);

        // module 1 is a cut vertex; its half turn to (0,1,0) reconnects the pieces
        let cfg = Configuration::new(vec![c(0, 0, 0), c(1, 0, 0), c(1, 0, 1), c(1, 1, 1), c(0, 1, 1)]).unwrap();
        let r = rot(1, edge(Axis::Z, -1, 1), 180);
        assert_eq!(rotation_endpoint(c(1, 0, 0), r.edge, r.angle), c(0, 1, 0));
        assert_eq!(check_rotation(&cfg, &r).unwrap(), Validity::Valid);
        assert_eq!(check_rotation_with(&cfg, &r, strict).unwrap(), Validity::InvalidC);
        let loose = action_mask(&cfg);
        let tight = action_mask_with(&cfg, strict);
        assert!(tight.valid_ids().all(|id| loose.is_valid(id)));
        assert!(!tight.is_valid(encode_action(Action::Rotate(r), 5).unwrap()));
    }

    #[test]
    fn configuration_validation() {
        assert!(Configuration::new(vec![c(1, 0, 0), c(0, 0, 0)]).is_err());
        assert!(Configuration::new(vec![c(0, 0, 0), c(0, 0, 0)]).is_err());
        assert!(Configuration::new(vec![c(0, 0, 0), c(2, 0, 0)]).is_err());
        assert!(Configuration::new(vec![]).is_err());
        assert_eq!(Configuration::line(3).cells(), &[c(0, 0, 0), c(1, 0, 0), c(2, 0, 0)]);
    }

    #[test]
    fn cell_serializes_as_triple() {
        let s = serde_json::to_string(&c(1, -2, 3)).unwrap();
        assert_eq!(s, "[1,-2,3]");
        let cfg: Configuration = serde_json::from_str("[[0,0,0],[0,0,1]]").unwrap();
        assert_eq!(cfg.cells()[1], c(0, 0, 1));
        assert!(serde_json::from_str::<Configuration>("[[0,0,0],[0,0,2]]").is_err());
    }
}
