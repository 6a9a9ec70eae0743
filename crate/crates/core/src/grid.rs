//! Tensor grids on N-rectangles and the difference operators that act on
//! grid functions.
//!
//! Nodes are stored in a flat array in row-major lexicographic order of their
//! zero-based multi-index: the last axis varies fastest, so
//! `flat = sum_i alpha[i] * stride[i]` with `stride[N-1] = 1`. The inverse map
//! is [`Grid::multi_index`].

use thiserror::Error;

/// Smallest admissible node count per axis.
pub const MIN_NODES_PER_AXIS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("domain must have at least one axis")]
    NoAxes,
    #[error("axis {axis}: interval [{lo}, {hi}] is empty or degenerate")]
    DegenerateInterval { axis: usize, lo: f64, hi: f64 },
    #[error("axis {axis}: {count} nodes requested, resolution below the minimum of {MIN_NODES_PER_AXIS}")]
    TooFewNodes { axis: usize, count: usize },
    #[error("expected {expected} node counts, got {got}")]
    CountMismatch { expected: usize, got: usize },
    #[error("axis {axis} out of range for a {dim}-dimensional grid")]
    BadAxis { axis: usize, dim: usize },
    #[error("node {node:?} is not in the grid")]
    BadNode { node: Vec<usize> },
    #[error("node {node:?} has no neighbour in direction {offset:+} along axis {axis}")]
    MissingNeighbour {
        node: Vec<usize>,
        axis: usize,
        offset: i8,
    },
    #[error("node {node:?} is not an interior node")]
    NotInterior { node: Vec<usize> },
    #[error("outward normal undefined at nonsmooth boundary point {node:?}")]
    CornerNode { node: Vec<usize> },
    #[error("node {node:?} is not on the boundary")]
    NotBoundary { node: Vec<usize> },
    #[error("grid function has {got} values, grid has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },
}

/// Closed N-rectangle `[a_1, b_1] x ... x [a_N, b_N]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    bounds: Vec<(f64, f64)>,
}

impl Domain {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self, GridError> {
        if bounds.is_empty() {
            return Err(GridError::NoAxes);
        }
        for (axis, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(GridError::DegenerateInterval { axis, lo, hi });
            }
        }
        Ok(Self { bounds })
    }

    /// The unit interval `(0, 1)`.
    pub fn unit_interval() -> Self {
        Self {
            bounds: vec![(0.0, 1.0)],
        }
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }
}

/// Classification of a node relative to the boundary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeClass {
    Interior,
    /// Boundary node where the boundary is smooth. Exactly one entry of the
    /// outward normal is nonzero.
    SmoothBoundary {
        outward_normal: Vec<i8>,
    },
    /// Node on two or more boundary faces (only for N >= 2).
    Corner,
}

impl NodeClass {
    pub fn is_interior(&self) -> bool {
        matches!(self, NodeClass::Interior)
    }

    pub fn is_smooth_boundary(&self) -> bool {
        matches!(self, NodeClass::SmoothBoundary { .. })
    }

    pub fn is_corner(&self) -> bool {
        matches!(self, NodeClass::Corner)
    }

    /// Axis and sign of the outward normal for smooth boundary nodes.
    pub fn normal_axis(&self) -> Option<(usize, i8)> {
        match self {
            NodeClass::SmoothBoundary { outward_normal } => outward_normal
                .iter()
                .enumerate()
                .find(|(_, &s)| s != 0)
                .map(|(axis, &s)| (axis, s)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    domain: Domain,
    counts: Vec<usize>,
    spacings: Vec<f64>,
    strides: Vec<usize>,
    h_star_max: f64,
    h_star_min: f64,
}

impl Grid {
    pub fn new(domain: Domain, counts: &[usize]) -> Result<Self, GridError> {
        if counts.len() != domain.dim() {
            return Err(GridError::CountMismatch {
                expected: domain.dim(),
                got: counts.len(),
            });
        }
        for (axis, &count) in counts.iter().enumerate() {
            if count < MIN_NODES_PER_AXIS {
                return Err(GridError::TooFewNodes { axis, count });
            }
        }
        let spacings: Vec<f64> = domain
            .bounds()
            .iter()
            .zip(counts)
            .map(|(&(lo, hi), &m)| (hi - lo) / (m - 1) as f64)
            .collect();
        let mut strides = vec![1usize; counts.len()];
        for axis in (0..counts.len().saturating_sub(1)).rev() {
            strides[axis] = strides[axis + 1] * counts[axis + 1];
        }
        let h_star_max = spacings.iter().cloned().fold(f64::MIN, f64::max);
        let h_star_min = spacings.iter().cloned().fold(f64::MAX, f64::min);
        Ok(Self {
            domain,
            counts: counts.to_vec(),
            spacings,
            strides,
            h_star_max,
            h_star_min,
        })
    }

    /// Uniform grid with `m` nodes on `[a, b]`.
    pub fn interval(a: f64, b: f64, m: usize) -> Result<Self, GridError> {
        Self::new(Domain::new(vec![(a, b)])?, &[m])
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn spacings(&self) -> &[f64] {
        &self.spacings
    }

    /// Largest spacing h*.
    pub fn h_star_max(&self) -> f64 {
        self.h_star_max
    }

    /// Smallest spacing h_*.
    pub fn h_star_min(&self) -> f64 {
        self.h_star_min
    }

    pub fn num_nodes(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn flat_index(&self, node: &[usize]) -> Result<usize, GridError> {
        if node.len() != self.dim() || node.iter().zip(&self.counts).any(|(&a, &m)| a >= m) {
            return Err(GridError::BadNode {
                node: node.to_vec(),
            });
        }
        Ok(node.iter().zip(&self.strides).map(|(a, s)| a * s).sum())
    }

    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        let mut rest = flat;
        self.strides
            .iter()
            .map(|&s| {
                let a = rest / s;
                rest %= s;
                a
            })
            .collect()
    }

    pub fn coordinate(&self, node: &[usize]) -> Vec<f64> {
        node.iter()
            .zip(self.domain.bounds())
            .zip(&self.spacings)
            .map(|((&a, &(lo, _)), &h)| lo + a as f64 * h)
            .collect()
    }

    /// Node coordinates along one axis.
    pub fn axis_coordinates(&self, axis: usize) -> Vec<f64> {
        let (lo, _) = self.domain.bounds()[axis];
        (0..self.counts[axis])
            .map(|a| lo + a as f64 * self.spacings[axis])
            .collect()
    }

    pub fn classify(&self, node: &[usize]) -> NodeClass {
        let mut normal = vec![0i8; self.dim()];
        let mut on_faces = 0;
        for (axis, (&a, &m)) in node.iter().zip(&self.counts).enumerate() {
            if a == 0 {
                normal[axis] = -1;
                on_faces += 1;
            } else if a == m - 1 {
                normal[axis] = 1;
                on_faces += 1;
            }
        }
        match on_faces {
            0 => NodeClass::Interior,
            1 => NodeClass::SmoothBoundary {
                outward_normal: normal,
            },
            _ => NodeClass::Corner,
        }
    }

    pub fn classify_flat(&self, flat: usize) -> NodeClass {
        self.classify(&self.multi_index(flat))
    }

    /// Flat index of `node + offset * e_axis`, if it lies in the grid.
    pub fn neighbour(&self, flat: usize, axis: usize, offset: i8) -> Option<usize> {
        let a = (flat / self.strides[axis]) % self.counts[axis];
        match offset {
            1 if a + 1 < self.counts[axis] => Some(flat + self.strides[axis]),
            -1 if a > 0 => Some(flat - self.strides[axis]),
            _ => None,
        }
    }

    fn check_axis(&self, axis: usize) -> Result<(), GridError> {
        if axis >= self.dim() {
            return Err(GridError::BadAxis {
                axis,
                dim: self.dim(),
            });
        }
        Ok(())
    }

    fn step(&self, node: &[usize], axis: usize, offset: i8) -> Result<usize, GridError> {
        self.check_axis(axis)?;
        let flat = self.flat_index(node)?;
        self.neighbour(flat, axis, offset)
            .ok_or_else(|| GridError::MissingNeighbour {
                node: node.to_vec(),
                axis,
                offset,
            })
    }
}

/// Real values attached to every node of a grid.
#[derive(Debug, Clone)]
pub struct GridFunction<'g> {
    grid: &'g Grid,
    values: Vec<f64>,
}

impl<'g> GridFunction<'g> {
    pub fn new(grid: &'g Grid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.num_nodes() {
            return Err(GridError::LengthMismatch {
                expected: grid.num_nodes(),
                got: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` at every node coordinate.
    pub fn from_fn(grid: &'g Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.num_nodes())
            .map(|k| f(&grid.coordinate(&grid.multi_index(k))))
            .collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &'g Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, node: &[usize]) -> Result<f64, GridError> {
        Ok(self.values[self.grid.flat_index(node)?])
    }

    pub fn max_norm(&self) -> f64 {
        max_norm(&self.values)
    }

    /// `(u(a + e_i) - u(a)) / h_i`
    pub fn diff_forward(&self, axis: usize, node: &[usize]) -> Result<f64, GridError> {
        let here = self.grid.flat_index(node)?;
        let next = self.grid.step(node, axis, 1)?;
        Ok((self.values[next] - self.values[here]) / self.grid.spacings[axis])
    }

    /// `(u(a) - u(a - e_i)) / h_i`
    pub fn diff_backward(&self, axis: usize, node: &[usize]) -> Result<f64, GridError> {
        let here = self.grid.flat_index(node)?;
        let prev = self.grid.step(node, axis, -1)?;
        Ok((self.values[here] - self.values[prev]) / self.grid.spacings[axis])
    }

    /// `(u(a + e_i) - u(a - e_i)) / (2 h_i)`
    pub fn diff_central(&self, axis: usize, node: &[usize]) -> Result<f64, GridError> {
        let next = self.grid.step(node, axis, 1)?;
        let prev = self.grid.step(node, axis, -1)?;
        Ok((self.values[next] - self.values[prev]) / (2.0 * self.grid.spacings[axis]))
    }

    /// `(u(a + e_i) - 2 u(a) + u(a - e_i)) / h_i^2`
    pub fn second_diff(&self, axis: usize, node: &[usize]) -> Result<f64, GridError> {
        let here = self.grid.flat_index(node)?;
        let next = self.grid.step(node, axis, 1)?;
        let prev = self.grid.step(node, axis, -1)?;
        let h = self.grid.spacings[axis];
        Ok((self.values[next] - 2.0 * self.values[here] + self.values[prev]) / (h * h))
    }

    /// Sum of [`second_diff`](Self::second_diff) over all axes at an interior node.
    pub fn discrete_laplacian(&self, node: &[usize]) -> Result<f64, GridError> {
        if !self
            .grid
            .flat_index(node)
            .map(|_| self.grid.classify(node))?
            .is_interior()
        {
            return Err(GridError::NotInterior {
                node: node.to_vec(),
            });
        }
        (0..self.grid.dim())
            .map(|axis| self.second_diff(axis, node))
            .sum()
    }

    /// Discrete outward normal derivative at a smooth boundary node.
    ///
    /// Along the normal axis the one-sided difference pointing into the
    /// domain is used (`delta^-` where the normal is `+1`, `delta^+` where it
    /// is `-1`); tangential axes use the central difference, which the zero
    /// normal component then annihilates. No exterior node is read.
    pub fn normal_derivative(&self, node: &[usize]) -> Result<f64, GridError> {
        let class = self
            .grid
            .flat_index(node)
            .map(|_| self.grid.classify(node))?;
        let normal = match class {
            NodeClass::SmoothBoundary { outward_normal } => outward_normal,
            NodeClass::Corner => {
                return Err(GridError::CornerNode {
                    node: node.to_vec(),
                })
            }
            NodeClass::Interior => {
                return Err(GridError::NotBoundary {
                    node: node.to_vec(),
                })
            }
        };
        let mut total = 0.0;
        for (axis, &n) in normal.iter().enumerate() {
            let component = match n {
                1 => self.diff_backward(axis, node)?,
                -1 => self.diff_forward(axis, node)?,
                _ => self.diff_central(axis, node)?,
            };
            total += component * f64::from(n);
        }
        Ok(total)
    }
}

pub fn max_norm(values: &[f64]) -> f64 {
    values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(m: usize) -> Grid {
        Grid::interval(0.0, 1.0, m).unwrap()
    }

    #[test]
    fn uniform_unit_interval() {
        let g = unit(11);
        assert_close!(g.spacings()[0], 0.1, 1e-15);
        assert_eq!(g.h_star_max(), g.h_star_min());
        let xs = g.axis_coordinates(0);
        assert_eq!(xs.len(), 11);
        assert_close!(xs[10], 1.0, 1e-15);
        assert_close!(xs[3], 0.3, 1e-15);
    }

    #[test]
    fn rectangle_counts_and_corners() {
        let g = Grid::new(Domain::new(vec![(0.0, 1.0), (0.0, 2.0)]).unwrap(), &[5, 9]).unwrap();
        assert_eq!(g.spacings(), &[0.25, 0.25]);
        assert_eq!(g.num_nodes(), 45);
        let corners = (0..45).filter(|&k| g.classify_flat(k).is_corner()).count();
        assert_eq!(corners, 4);
        let smooth = (0..45)
            .filter(|&k| g.classify_flat(k).is_smooth_boundary())
            .count();
        assert_eq!(smooth, 2 * 3 + 2 * 7);
    }

    #[test]
    fn rejects_low_resolution_and_bad_domains() {
        assert!(matches!(
            unit_err(3),
            GridError::TooFewNodes { count: 3, .. }
        ));
        assert!(Domain::new(vec![(1.0, 1.0)]).is_err());
        assert!(Domain::new(vec![(2.0, 1.0)]).is_err());
        assert!(Domain::new(vec![]).is_err());
    }

    fn unit_err(m: usize) -> GridError {
        Grid::interval(0.0, 1.0, m).unwrap_err()
    }

    #[test]
    fn one_dimensional_endpoints_are_smooth() {
        let g = unit(6);
        assert_eq!(g.classify(&[0]).normal_axis(), Some((0, -1)));
        assert_eq!(g.classify(&[5]).normal_axis(), Some((0, 1)));
        assert!(g.classify(&[2]).is_interior());
    }

    #[test]
    fn flat_index_round_trip() {
        let g = Grid::new(
            Domain::new(vec![(0.0, 1.0), (0.0, 1.0), (0.0, 3.0)]).unwrap(),
            &[4, 5, 6],
        )
        .unwrap();
        for k in 0..g.num_nodes() {
            assert_eq!(g.flat_index(&g.multi_index(k)).unwrap(), k);
        }
        assert_eq!(g.flat_index(&[0, 0, 1]).unwrap(), 1);
        assert!(g.flat_index(&[4, 0, 0]).is_err());
    }

    #[test]
    fn first_differences() {
        let g = unit(11);
        let lin = GridFunction::from_fn(&g, |x| x[0]);
        let sq = GridFunction::from_fn(&g, |x| x[0] * x[0]);
        let cube = GridFunction::from_fn(&g, |x| x[0].powi(3));
        let c = GridFunction::new(&g, vec![2.5; 11]).unwrap();
        assert_close!(lin.diff_forward(0, &[3]).unwrap(), 1.0, 1e-12);
        assert_close!(lin.diff_backward(0, &[3]).unwrap(), 1.0, 1e-12);
        assert_eq!(c.diff_forward(0, &[3]).unwrap(), 0.0);
        assert_close!(sq.diff_forward(0, &[5]).unwrap(), 1.1, 1e-12);
        assert_close!(sq.diff_central(0, &[5]).unwrap(), 1.0, 1e-12);
        assert_close!(cube.diff_central(0, &[5]).unwrap(), 0.76, 1e-12);
        assert!(lin.diff_forward(0, &[10]).is_err());
        assert!(lin.diff_backward(0, &[0]).is_err());
        assert!(lin.diff_forward(1, &[2]).is_err());
    }

    #[test]
    fn second_differences() {
        let g = unit(11);
        let sq = GridFunction::from_fn(&g, |x| x[0] * x[0]);
        let lin = GridFunction::from_fn(&g, |x| 3.0 * x[0] - 1.0);
        let ch = GridFunction::from_fn(&g, |x| x[0].cosh());
        for a in 1..10 {
            assert_close!(sq.second_diff(0, &[a]).unwrap(), 2.0, 1e-10);
            assert_close!(lin.second_diff(0, &[a]).unwrap(), 0.0, 1e-10);
        }
        let expected = 0.5f64.cosh() * (2.0 * 0.1f64.cosh() - 2.0) / 0.01;
        assert_close!(ch.second_diff(0, &[5]).unwrap(), expected, 1e-10);
        assert_close!(expected, 1.128564, 5e-6);
        assert_close!(
            sq.discrete_laplacian(&[4]).unwrap(),
            sq.second_diff(0, &[4]).unwrap(),
            0.0
        );
    }

    #[test]
    fn laplacian_in_two_dimensions() {
        let g = Grid::new(Domain::new(vec![(0.0, 1.0), (0.0, 2.0)]).unwrap(), &[5, 9]).unwrap();
        let bowl = GridFunction::from_fn(&g, |x| x[0] * x[0] + x[1] * x[1]);
        let saddle = GridFunction::from_fn(&g, |x| x[0] * x[1]);
        assert_close!(bowl.discrete_laplacian(&[2, 3]).unwrap(), 4.0, 1e-10);
        assert_close!(saddle.discrete_laplacian(&[2, 3]).unwrap(), 0.0, 1e-10);
        assert!(matches!(
            bowl.discrete_laplacian(&[0, 3]),
            Err(GridError::NotInterior { .. })
        ));
    }

    #[test]
    fn normal_derivative_one_dimension() {
        let g = unit(11);
        let lin = GridFunction::from_fn(&g, |x| x[0]);
        assert_close!(lin.normal_derivative(&[0]).unwrap(), -1.0, 1e-12);
        assert_close!(lin.normal_derivative(&[10]).unwrap(), 1.0, 1e-12);
        let c = GridFunction::new(&g, vec![0.7; 11]).unwrap();
        assert_eq!(c.normal_derivative(&[0]).unwrap(), 0.0);
        assert!(matches!(
            c.normal_derivative(&[4]),
            Err(GridError::NotBoundary { .. })
        ));

        let g = unit(101);
        let ch = GridFunction::from_fn(&g, |x| x[0].cosh());
        let got = ch.normal_derivative(&[100]).unwrap();
        let expected = (1f64.cosh() - 0.99f64.cosh()) / 0.01;
        assert_close!(got, expected, 1e-9);
        assert_close!(got, 1.16749, 2e-5);
    }

    #[test]
    fn normal_derivative_rejects_corners() {
        let g = Grid::new(Domain::new(vec![(0.0, 1.0), (0.0, 1.0)]).unwrap(), &[5, 5]).unwrap();
        let u = GridFunction::from_fn(&g, |x| x[0] + 2.0 * x[1]);
        assert!(matches!(
            u.normal_derivative(&[0, 0]),
            Err(GridError::CornerNode { .. })
        ));
        // Exact for affine functions on every face.
        assert_close!(u.normal_derivative(&[0, 2]).unwrap(), -1.0, 1e-12);
        assert_close!(u.normal_derivative(&[4, 2]).unwrap(), 1.0, 1e-12);
        assert_close!(u.normal_derivative(&[2, 0]).unwrap(), -2.0, 1e-12);
        assert_close!(u.normal_derivative(&[2, 4]).unwrap(), 2.0, 1e-12);
    }
}
