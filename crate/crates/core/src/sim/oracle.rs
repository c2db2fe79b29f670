//! Grid reachability reference: breadth-first search over an 8-connected
//! occupancy grid whose free cells keep a required clearance from every
//! obstacle and solid wall.

use std::collections::VecDeque;

use crate::geometry::Vec2;
use crate::world::{clearance_at, WorldModel};

pub const DEFAULT_RESOLUTION: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct Grid {
    origin: Vec2,
    resolution: f64,
    cols: usize,
    rows: usize,
    free: Vec<bool>,
}

impl Grid {
    /// Marks a cell free when a disc of `required` radius at its center
    /// touches nothing.
    pub fn build(world: &WorldModel, required: f64, resolution: f64) -> Self {
        let b = world.bounds;
        let cols = ((b.max.x - b.min.x) / resolution).floor() as usize + 1;
        let rows = ((b.max.y - b.min.y) / resolution).floor() as usize + 1;
        let mut free = vec![false; cols * rows];
        for r in 0..rows {
            for c in 0..cols {
                let p = Vec2::new(
                    b.min.x + c as f64 * resolution,
                    b.min.y + r as f64 * resolution,
                );
                free[r * cols + c] = clearance_at(world, p, required) >= 0.0;
            }
        }
        Self {
            origin: b.min,
            resolution,
            cols,
            rows,
            free,
        }
    }

    fn cell(&self, p: Vec2) -> Option<(usize, usize)> {
        let c = ((p.x - self.origin.x) / self.resolution).round();
        let r = ((p.y - self.origin.y) / self.resolution).round();
        (c >= 0.0 && r >= 0.0 && (c as usize) < self.cols && (r as usize) < self.rows)
            .then_some((c as usize, r as usize))
    }

    fn is_free(&self, c: usize, r: usize) -> bool {
        self.free[r * self.cols + c]
    }

    /// Whether a path of free cells joins the cells nearest `start` and
    /// `goal`. Diagonal moves need both adjacent orthogonal cells free.
    pub fn connected(&self, start: Vec2, goal: Vec2) -> bool {
        let (Some(s), Some(g)) = (self.cell(start), self.cell(goal)) else {
            return false;
        };
        if !self.is_free(s.0, s.1) || !self.is_free(g.0, g.1) {
            return false;
        }
        let mut seen = vec![false; self.free.len()];
        let mut queue = VecDeque::from([s]);
        seen[s.1 * self.cols + s.0] = true;
        while let Some((c, r)) = queue.pop_front() {
            if (c, r) == g {
                return true;
            }
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let (nc, nr) = (c as i64 + dc, r as i64 + dr);
                    if nc < 0 || nr < 0 || nc >= self.cols as i64 || nr >= self.rows as i64 {
                        continue;
                    }
                    let (nc, nr) = (nc as usize, nr as usize);
                    if !self.is_free(nc, nr) || seen[nr * self.cols + nc] {
                        continue;
                    }
                    if dr != 0 && dc != 0 && !(self.is_free(nc, r) && self.is_free(c, nr)) {
                        continue;
                    }
                    seen[nr * self.cols + nc] = true;
                    queue.push_back((nc, nr));
                }
            }
        }
        false
    }
}

/// Whether the robot can get from its start pose to `goal` while keeping
/// `margin` beyond its radius from everything.
pub fn reachable(world: &WorldModel, goal: Vec2, margin: f64) -> bool {
    Grid::build(world, world.mrp_radius + margin, DEFAULT_RESOLUTION)
        .connected(world.mrp.position, goal)
}
