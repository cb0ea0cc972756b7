//! Tensor-product grids on rectangles.
//!
//! Every grid walk is split into fixed-size chunks that are evaluated in
//! parallel and reduced in chunk order, so results do not depend on the
//! number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convex::{Rect, MAX_DIM};
use crate::error::{param_err, Result};
use crate::logspace::CompensatedSum;

/// Upper limit on the number of grid points in one tensor grid.
pub const MAX_GRID_POINTS: usize = 10_000_000;

const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    Midpoint,
    Trapezoid,
}

/// Points per axis and the quadrature rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub rule: Rule,
}

impl GridSpec {
    pub fn midpoint(n: usize) -> Self {
        GridSpec { n, rule: Rule::Midpoint }
    }

    pub fn trapezoid(n: usize) -> Self {
        GridSpec { n, rule: Rule::Trapezoid }
    }

    /// The `2n - 1` refinement used for error estimates.
    pub fn refined(&self) -> Self {
        GridSpec { n: 2 * self.n - 1, rule: self.rule }
    }

    pub fn point_count(&self, d: usize) -> Option<usize> {
        self.n.checked_pow(d as u32)
    }

    pub fn check(&self, d: usize) -> Result<()> {
        if self.n < 2 {
            return Err(param_err!("grid needs at least 2 points per axis, got {}", self.n));
        }
        match self.point_count(d) {
            Some(total) if total <= MAX_GRID_POINTS => Ok(()),
            _ => Err(param_err!(
                "grid {}^{} exceeds the {} point limit",
                self.n,
                d,
                MAX_GRID_POINTS
            )),
        }
    }
}

/// Nodes and weights along each axis of a rectangle.
#[derive(Debug, Clone)]
pub struct TensorGrid {
    nodes: Vec<Vec<f64>>,
    weights: Vec<Vec<f64>>,
    len: usize,
}

impl TensorGrid {
    pub fn new(rect: &Rect, spec: GridSpec) -> Result<Self> {
        spec.check(rect.dim())?;
        let axes: Vec<(Vec<f64>, Vec<f64>)> = (0..rect.dim())
            .map(|i| match spec.rule {
                Rule::Midpoint => midpoint_axis(rect.lo()[i], rect.hi()[i], spec.n),
                Rule::Trapezoid => trapezoid_axis(rect.lo()[i], rect.hi()[i], spec.n),
            })
            .collect();
        Ok(Self::from_axes(axes))
    }

    /// Vertex grid `lo + (hi - lo) i / (n - 1)` including all corners, with
    /// trapezoid weights.
    pub fn vertices(rect: &Rect, n: usize) -> Result<Self> {
        Self::new(rect, GridSpec::trapezoid(n))
    }

    fn from_axes(axes: Vec<(Vec<f64>, Vec<f64>)>) -> Self {
        let len = axes.iter().map(|(n, _)| n.len()).product();
        let (nodes, weights) = axes.into_iter().unzip();
        TensorGrid { nodes, weights, len }
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn axis_nodes(&self, axis: usize) -> &[f64] {
        &self.nodes[axis]
    }

    fn chunk_count(&self) -> usize {
        self.len.div_ceil(CHUNK)
    }

    /// Calls `visit(point, weight)` for every flat index in `start..end`.
    pub fn walk<F: FnMut(&[f64], f64)>(&self, start: usize, end: usize, mut visit: F) {
        let d = self.dim();
        let mut digits = [0usize; MAX_DIM];
        let mut rem = start;
        for axis in (0..d).rev() {
            let n = self.nodes[axis].len();
            digits[axis] = rem % n;
            rem /= n;
        }
        let mut point = [0.0; MAX_DIM];
        for flat in start..end {
            let mut w = 1.0;
            for axis in 0..d {
                point[axis] = self.nodes[axis][digits[axis]];
                w *= self.weights[axis][digits[axis]];
            }
            visit(&point[..d], w);
            if flat + 1 < end {
                let mut axis = d;
                while axis > 0 {
                    axis -= 1;
                    digits[axis] += 1;
                    if digits[axis] < self.nodes[axis].len() {
                        break;
                    }
                    digits[axis] = 0;
                }
            }
        }
    }

    /// Maps every chunk in parallel; the output is in chunk order.
    pub fn map_chunks<T, F>(&self, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize, usize) -> T + Sync,
    {
        (0..self.chunk_count())
            .into_par_iter()
            .map(|c| {
                let start = c * CHUNK;
                f(start, (start + CHUNK).min(self.len))
            })
            .collect()
    }

    /// Weighted sum `Σ w_i f(x_i)`.
    pub fn integrate<F>(&self, f: F) -> f64
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let partials = self.map_chunks(|start, end| {
            let mut acc = CompensatedSum::new();
            self.walk(start, end, |x, w| acc.add(w * f(x)));
            acc
        });
        let mut total = CompensatedSum::new();
        for p in &partials {
            total.merge(p);
        }
        total.value()
    }

    /// `max_i f(x_i)` over the nodes (weights ignored).
    pub fn max_of<F>(&self, f: F) -> f64
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        self.map_chunks(|start, end| {
            let mut m = f64::NEG_INFINITY;
            self.walk(start, end, |x, _| m = m.max(f(x)));
            m
        })
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `min_i f(x_i)` over the nodes.
    pub fn min_of<F>(&self, f: F) -> f64
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        -self.max_of(|x| -f(x))
    }

    /// Evaluates `f` at every node, in flat order.
    pub fn sample<F>(&self, f: F) -> Vec<f64>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        self.map_chunks(|start, end| {
            let mut out = Vec::with_capacity(end - start);
            self.walk(start, end, |x, _| out.push(f(x)));
            out
        })
        .concat()
    }

    /// All node coordinates, flattened `len × dim`.
    pub fn points(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(self.len * d);
        self.walk(0, self.len, |x, _| out.extend_from_slice(&x[..d]));
        out
    }
}

fn midpoint_axis(lo: f64, hi: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let h = (hi - lo) / n as f64;
    let nodes = (0..n)
        .map(|i| (lo + (hi - lo) * (i as f64 + 0.5) / n as f64).clamp(lo, hi))
        .collect();
    (nodes, vec![h; n])
}

fn trapezoid_axis(lo: f64, hi: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let m = (n - 1) as f64;
    let h = (hi - lo) / m;
    let nodes = (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                (lo + (hi - lo) * i as f64 / m).clamp(lo, hi)
            }
        })
        .collect();
    let mut weights = vec![h; n];
    weights[0] = h / 2.0;
    weights[n - 1] = h / 2.0;
    (nodes, weights)
}
