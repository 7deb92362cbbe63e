//! Finite lattice boxes: coordinates, ranking, wrapping.
//!
//! A [`FiniteGeometry`] is a d-dimensional box of sides `L_1 x ... x L_d`
//! with an independent boundary condition per axis. Sites are vectors
//! `x = (x_1, ..., x_d)` with `0 <= x_k < L_k`, stored in lexicographic
//! order with the LAST coordinate varying fastest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-axis boundary condition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryCondition {
    /// Dirichlet: hops leaving the box are dropped.
    Open,
    /// Wrapped: coordinates are taken modulo the side length.
    Periodic,
}

/// A finite box on the integer lattice.
///
/// The `half_space` flag marks slabs that stand in for a half-infinite
/// system: the last axis is the inward normal, the distinguished boundary
/// sits at `x_d = 0`, and the side length of that axis is the slab depth.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteGeometry {
    sides: Vec<usize>,
    boundary: Vec<BoundaryCondition>,
    half_space: bool,
}

impl FiniteGeometry {
    pub fn new(sides: Vec<usize>, boundary: Vec<BoundaryCondition>) -> Result<Self> {
        Self::with_flag(sides, boundary, false)
    }

    fn with_flag(
        sides: Vec<usize>,
        boundary: Vec<BoundaryCondition>,
        half_space: bool,
    ) -> Result<Self> {
        if sides.is_empty() {
            return Err(Error::Geometry("geometry needs at least one axis".into()));
        }
        if sides.len() != boundary.len() {
            return Err(Error::Geometry(format!(
                "{} sides but {} boundary conditions",
                sides.len(),
                boundary.len()
            )));
        }
        if sides.iter().any(|&l| l == 0) {
            return Err(Error::Geometry("zero-length side".into()));
        }
        let count: usize = sides.iter().product();
        if count == 0 || count > 1 << 26 {
            return Err(Error::Geometry(format!("site count {count} out of range")));
        }
        if half_space && *boundary.last().unwrap() != BoundaryCondition::Open {
            return Err(Error::Geometry(
                "half-space geometry needs an open last axis".into(),
            ));
        }
        Ok(Self {
            sides,
            boundary,
            half_space,
        })
    }

    /// Box with every axis open.
    pub fn open(sides: &[usize]) -> Result<Self> {
        let bc = vec![BoundaryCondition::Open; sides.len()];
        Self::new(sides.to_vec(), bc)
    }

    /// Box with every axis periodic (a torus).
    pub fn torus(sides: &[usize]) -> Result<Self> {
        let bc = vec![BoundaryCondition::Periodic; sides.len()];
        Self::new(sides.to_vec(), bc)
    }

    /// Slab standing in for a half space: in-plane sides/conditions for the
    /// first d-1 axes, plus `depth` layers along the open normal.
    pub fn halfspace(
        edge_sides: &[usize],
        edge_boundary: &[BoundaryCondition],
        depth: usize,
    ) -> Result<Self> {
        let mut sides = edge_sides.to_vec();
        sides.push(depth);
        let mut bc = edge_boundary.to_vec();
        bc.push(BoundaryCondition::Open);
        Self::with_flag(sides, bc, true)
    }

    pub fn is_half_space(&self) -> bool {
        self.half_space
    }

    /// Slab depth (length of the normal axis).
    pub fn depth(&self) -> usize {
        *self.sides.last().unwrap()
    }

    pub fn dim(&self) -> usize {
        self.sides.len()
    }

    pub fn sides(&self) -> &[usize] {
        &self.sides
    }

    pub fn boundary(&self) -> &[BoundaryCondition] {
        &self.boundary
    }

    pub fn is_periodic(&self, axis: usize) -> bool {
        self.boundary[axis] == BoundaryCondition::Periodic
    }

    pub fn site_count(&self) -> usize {
        self.sides.iter().product()
    }

    /// Lexicographic rank of an in-box site (last coordinate fastest).
    pub fn rank(&self, coords: &[i64]) -> usize {
        debug_assert_eq!(coords.len(), self.dim());
        let mut r = 0usize;
        for (k, &c) in coords.iter().enumerate() {
            debug_assert!(c >= 0 && (c as usize) < self.sides[k], "site out of box");
            r = r * self.sides[k] + c as usize;
        }
        r
    }

    /// Coordinates of the site with the given rank.
    pub fn coords(&self, rank: usize) -> Vec<i64> {
        debug_assert!(rank < self.site_count());
        let mut out = vec![0i64; self.dim()];
        let mut r = rank;
        for k in (0..self.dim()).rev() {
            out[k] = (r % self.sides[k]) as i64;
            r /= self.sides[k];
        }
        out
    }

    /// Iterate all sites in rank order.
    pub fn sites(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        (0..self.site_count()).map(|r| self.coords(r))
    }

    /// In-box representative of `x + y`: wraps periodic axes, returns `None`
    /// if any open axis leaves the box.
    pub fn translate(&self, x: &[i64], y: &[i64]) -> Option<Vec<i64>> {
        let mut out = vec![0i64; self.dim()];
        for k in 0..self.dim() {
            let l = self.sides[k] as i64;
            let c = x[k] + y[k];
            out[k] = match self.boundary[k] {
                BoundaryCondition::Periodic => c.rem_euclid(l),
                BoundaryCondition::Open => {
                    if c < 0 || c >= l {
                        return None;
                    }
                    c
                }
            };
        }
        Some(out)
    }

    /// Signed coordinate difference `a_k - b_k` per axis, wrapped into
    /// `(-L_k/2, L_k/2]` on periodic axes, plain on open axes.
    pub fn wrapped_delta(&self, a: &[i64], b: &[i64]) -> Vec<i64> {
        let mut out = vec![0i64; self.dim()];
        for k in 0..self.dim() {
            let l = self.sides[k] as i64;
            let mut d = a[k] - b[k];
            if self.boundary[k] == BoundaryCondition::Periodic {
                d = d.rem_euclid(l);
                if 2 * d > l {
                    d -= l;
                }
            }
            out[k] = d;
        }
        out
    }
}
