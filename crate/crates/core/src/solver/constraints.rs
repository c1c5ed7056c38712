//! Node-wise equality and lower-bound constraints.

use crate::error::{Error, Result};
use crate::mesh::Grid;
use crate::scalar::Real;

/// Equality data (Dirichlet values) and optional lower bounds, per node.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSpec<T> {
    fixed: Vec<Option<T>>,
    lower: Vec<T>,
}

impl<T: Real> ConstraintSpec<T> {
    /// No constraints at all.
    pub fn free(nodes: usize) -> Self {
        Self { fixed: vec![None; nodes], lower: vec![T::neg_infinity(); nodes] }
    }

    /// Zero trace on the boundary of the box.
    pub fn zero_trace(grid: &Grid) -> Self {
        let mut c = Self::free(grid.node_count());
        for v in grid.boundary_nodes() {
            c.fixed[v] = Some(T::zero());
        }
        c
    }

    pub fn fix(mut self, node: usize, value: T) -> Self {
        self.fixed[node] = Some(value);
        self
    }

    pub fn set_fixed(&mut self, node: usize, value: T) {
        self.fixed[node] = Some(value);
    }

    /// Raises the lower bound at `node` to at least `value`.
    pub fn set_lower(&mut self, node: usize, value: T) {
        self.lower[node] = self.lower[node].max(value);
    }

    pub fn with_lower(mut self, node: usize, value: T) -> Self {
        self.set_lower(node, value);
        self
    }

    /// Lower bound `value` at every node.
    pub fn with_global_lower(mut self, value: T) -> Self {
        for l in &mut self.lower {
            *l = l.max(value);
        }
        self
    }

    pub fn len(&self) -> usize {
        self.fixed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixed.is_empty()
    }

    #[inline]
    pub fn fixed(&self, node: usize) -> Option<T> {
        self.fixed[node]
    }

    #[inline]
    pub fn lower(&self, node: usize) -> T {
        self.lower[node]
    }

    pub fn has_bounds(&self) -> bool {
        self.lower.iter().zip(&self.fixed).any(|(l, f)| f.is_none() && *l > T::neg_infinity())
    }

    /// Fails when equality data violates a lower bound.
    pub fn validate(&self) -> Result<()> {
        for (i, (f, l)) in self.fixed.iter().zip(&self.lower).enumerate() {
            if let Some(v) = f {
                if *v < *l || !v.is_finite() {
                    return Err(Error::domain(format!("equality value {v} at node {i} violates its lower bound {l}")));
                }
            }
            if l.is_nan() || *l == T::infinity() {
                return Err(Error::domain(format!("invalid lower bound at node {i}")));
            }
        }
        Ok(())
    }

    /// Projection onto the feasible set.
    #[inline]
    pub fn project_node(&self, node: usize, x: T) -> T {
        match self.fixed[node] {
            Some(v) => v,
            None => x.max(self.lower[node]),
        }
    }

    pub fn project(&self, x: &mut [T]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = self.project_node(i, *v);
        }
    }

    pub fn is_feasible(&self, x: &[T]) -> bool {
        x.iter().enumerate().all(|(i, &v)| match self.fixed[i] {
            Some(f) => v == f,
            None => v >= self.lower[i],
        })
    }
}
