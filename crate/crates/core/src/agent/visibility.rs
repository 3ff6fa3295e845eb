//! Grid visibility between cell centres.

use std::collections::VecDeque;

use crate::pddl::GridDims;

/// `a/b` with `b > 0`, compared exactly.
#[derive(Debug, Clone, Copy)]
struct Frac(i64, i64);

impl Frac {
    fn lt(self, o: Frac) -> bool {
        (self.0 as i128) * (o.1 as i128) < (o.0 as i128) * (self.1 as i128)
    }
}

fn frac(num: i64, den: i64) -> Frac {
    if den < 0 {
        Frac(-num, -den)
    } else {
        Frac(num, den)
    }
}

/// True when the open segment between the centres of `from` and `to`
/// passes through the open interior of cell `cell`. Coordinates are 1-based
/// (x, y); cell (x, y) spans (x − ½, x + ½) × (y − ½, y + ½).
pub fn segment_crosses_cell(from: (i64, i64), to: (i64, i64), cell: (i64, i64)) -> bool {
    // doubled coordinates keep every bound integral
    let p0 = (2 * from.0, 2 * from.1);
    let d = (2 * (to.0 - from.0), 2 * (to.1 - from.1));
    let lo = (2 * cell.0 - 1, 2 * cell.1 - 1);
    let hi = (2 * cell.0 + 1, 2 * cell.1 + 1);
    let mut enter = Frac(0, 1);
    let mut exit = Frac(1, 1);
    for (p, dd, l, h) in [(p0.0, d.0, lo.0, hi.0), (p0.1, d.1, lo.1, hi.1)] {
        if dd == 0 {
            if !(l < p && p < h) {
                return false;
            }
            continue;
        }
        let a = frac(l - p, dd);
        let b = frac(h - p, dd);
        let (t_in, t_out) = if a.lt(b) { (a, b) } else { (b, a) };
        if enter.lt(t_in) {
            enter = t_in;
        }
        if t_out.lt(exit) {
            exit = t_out;
        }
    }
    enter.lt(exit)
}

/// Straight-line visibility: no blocked cell strictly between the endpoints
/// has its interior crossed. Grazing corners and edges does not block.
pub fn line_of_sight(from: (i64, i64), to: (i64, i64), blocked: &dyn Fn(i64, i64) -> bool) -> bool {
    if from == to {
        return true;
    }
    let (x0, x1) = (from.0.min(to.0), from.0.max(to.0));
    let (y0, y1) = (from.1.min(to.1), from.1.max(to.1));
    for y in y0..=y1 {
        for x in x0..=x1 {
            if (x, y) == from || (x, y) == to || !blocked(x, y) {
                continue;
            }
            if segment_crosses_cell(from, to, (x, y)) {
                return false;
            }
        }
    }
    true
}

/// Cells 4-connected to `from` through unblocked cells, as a row-major mask.
pub fn region(grid: GridDims, from: (i64, i64), blocked: &dyn Fn(i64, i64) -> bool) -> Vec<bool> {
    let idx = |x: i64, y: i64| ((y - 1) * grid.cols as i64 + (x - 1)) as usize;
    let mut seen = vec![false; grid.cells()];
    if !grid.contains(from.0, from.1) {
        return seen;
    }
    let mut queue = VecDeque::from([from]);
    seen[idx(from.0, from.1)] = true;
    while let Some((x, y)) = queue.pop_front() {
        for (nx, ny) in [(x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)] {
            if grid.contains(nx, ny) && !seen[idx(nx, ny)] {
                seen[idx(nx, ny)] = true;
                if !blocked(nx, ny) {
                    queue.push_back((nx, ny));
                }
            }
        }
    }
    seen
}
