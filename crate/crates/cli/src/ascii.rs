//! Per-layer text slices of a configuration.

use msrs_core::geometry::Cell;

const LABELS: &[u8] = b"0123456789abcdefghijklmnopqrstuvwxyz";

/// One grid per z layer, +y up and +x right. Modules show their index
/// (base 36), unoccupied goal cells `+`, everything else `.`.
pub fn slices(cells: &[Cell], goal: &[Cell]) -> String {
    let all = cells.iter().chain(goal);
    let (mut lo, mut hi) = (Cell::new(i32::MAX, i32::MAX, i32::MAX), Cell::new(i32::MIN, i32::MIN, i32::MIN));
    for c in all {
        lo = Cell::new(lo.x.min(c.x), lo.y.min(c.y), lo.z.min(c.z));
        hi = Cell::new(hi.x.max(c.x), hi.y.max(c.y), hi.z.max(c.z));
    }
    let mut out = String::new();
    if cells.is_empty() && goal.is_empty() {
        return out;
    }
    for z in lo.z..=hi.z {
        out.push_str(&format!("z = {z}\n"));
        for y in (lo.y..=hi.y).rev() {
            for x in lo.x..=hi.x {
                let c = Cell::new(x, y, z);
                let ch = match cells.iter().position(|&m| m == c) {
                    Some(i) => LABELS.get(i).map_or('#', |&b| b as char),
                    None if goal.contains(&c) => '+',
                    None => '.',
                };
                out.push(ch);
            }
            out.push('\n');
        }
    }
    out
}
