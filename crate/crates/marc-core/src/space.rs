//! Spatial structure of inputs.
//!
//! A feature space is either a 1-D chain (token positions, distance
//! `|i - j|`) or a 2-D grid (pixels, Euclidean distance between cell
//! coordinates, 8-connected neighborhood).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceKind {
    Chain { len: usize },
    Grid { height: usize, width: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureSpace {
    kind: SpaceKind,
}

impl FeatureSpace {
    pub fn chain(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::invalid_argument("chain length must be positive"));
        }
        Ok(Self {
            kind: SpaceKind::Chain { len },
        })
    }

    pub fn grid(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid_argument(
                "grid dimensions must be positive",
            ));
        }
        Ok(Self {
            kind: SpaceKind::Grid { height, width },
        })
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn is_grid(&self) -> bool {
        matches!(self.kind, SpaceKind::Grid { .. })
    }

    /// Total feature count.
    pub fn len(&self) -> usize {
        match self.kind {
            SpaceKind::Chain { len } => len,
            SpaceKind::Grid { height, width } => height * width,
        }
    }

    pub fn is_empty(&self) -> bool {
        false // construction requires positive dimensions
    }

    /// Grid cell coordinates of feature `i` in row-major order.
    fn coords(&self, i: usize) -> (usize, usize) {
        match self.kind {
            SpaceKind::Chain { .. } => (0, i),
            SpaceKind::Grid { width, .. } => (i / width, i % width),
        }
    }

    /// Squared distance between features `i` and `j`.
    ///
    /// Integer-exact: chain `(i - j)^2`, grid `dr^2 + dc^2`.
    pub fn distance_sq(&self, i: usize, j: usize) -> f64 {
        let (ri, ci) = self.coords(i);
        let (rj, cj) = self.coords(j);
        let dr = ri.abs_diff(rj) as f64;
        let dc = ci.abs_diff(cj) as f64;
        dr * dr + dc * dc
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.distance_sq(i, j).sqrt()
    }

    /// Neighbors of feature `i`: adjacent positions on a chain, the
    /// 8-connected cells on a grid.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        match self.kind {
            SpaceKind::Chain { len } => {
                let mut out = Vec::with_capacity(2);
                if i > 0 {
                    out.push(i - 1);
                }
                if i + 1 < len {
                    out.push(i + 1);
                }
                out
            }
            SpaceKind::Grid { height, width } => {
                let (r, c) = self.coords(i);
                let mut out = Vec::with_capacity(8);
                for dr in -1_isize..=1 {
                    for dc in -1_isize..=1 {
                        if dr == 0 && dc == 0 {
                            continue;
                        }
                        let nr = r as isize + dr;
                        let nc = c as isize + dc;
                        if nr >= 0 && nr < height as isize && nc >= 0 && nc < width as isize {
                            out.push(nr as usize * width + nc as usize);
                        }
                    }
                }
                out
            }
        }
    }

    /// All unordered neighbor pairs `(p, q)` with `p < q`.
    pub fn neighbor_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.len();
        let mut pairs = Vec::new();
        for p in 0..n {
            for q in self.neighbors(p) {
                if p < q {
                    pairs.push((p, q));
                }
            }
        }
        pairs
    }

    /// Visit every feature `j` with `distance_sq(i, j) <= radius_sq`,
    /// yielding `(j, distance_sq)`. An infinite radius visits everything.
    pub(crate) fn visit_within(
        &self,
        i: usize,
        radius_sq: f64,
        visit: &mut impl FnMut(usize, f64),
    ) {
        if radius_sq < 0.0 {
            return;
        }
        match self.kind {
            SpaceKind::Chain { len } => {
                let r = if radius_sq.is_infinite() {
                    len
                } else {
                    radius_sq.sqrt().floor() as usize
                };
                let lo = i.saturating_sub(r);
                let hi = (i + r).min(len - 1);
                for j in lo..=hi {
                    let d = i.abs_diff(j) as f64;
                    visit(j, d * d);
                }
            }
            SpaceKind::Grid { height, width } => {
                let (ri, ci) = self.coords(i);
                let r = if radius_sq.is_infinite() {
                    height.max(width)
                } else {
                    radius_sq.sqrt().floor() as usize
                };
                let r0 = ri.saturating_sub(r);
                let r1 = (ri + r).min(height - 1);
                let c0 = ci.saturating_sub(r);
                let c1 = (ci + r).min(width - 1);
                for nr in r0..=r1 {
                    for nc in c0..=c1 {
                        let dr = ri.abs_diff(nr) as f64;
                        let dc = ci.abs_diff(nc) as f64;
                        let d2 = dr * dr + dc * dc;
                        if d2 <= radius_sq {
                            visit(nr * width + nc, d2);
                        }
                    }
                }
            }
        }
    }
}
