//! Dense row-major 2D grids in the world frame.
//!
//! Cell `(i, j)` covers `[i*res, (i+1)*res) x [j*res, (j+1)*res)`; values are
//! attached to cell centres.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub i: usize,
    pub j: usize,
}

impl Cell {
    pub fn new(i: usize, j: usize) -> Self {
        Self { i, j }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    resolution: f64,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, resolution: f64, value: T) -> Self {
        assert!(width > 0 && height > 0, "grid must be nonempty");
        assert!(resolution > 0.0, "resolution must be positive");
        Self { width, height, resolution, data: vec![value; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, resolution: f64, mut f: impl FnMut(Cell) -> T) -> Self {
        assert!(width > 0 && height > 0, "grid must be nonempty");
        let mut data = Vec::with_capacity(width * height);
        for j in 0..height {
            for i in 0..width {
                data.push(f(Cell::new(i, j)));
            }
        }
        Self { width, height, resolution, data }
    }

    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            resolution: self.resolution,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl<T> Grid<T> {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn index(&self, c: Cell) -> usize {
        c.j * self.width + c.i
    }

    pub fn cell_of_index(&self, idx: usize) -> Cell {
        Cell::new(idx % self.width, idx / self.width)
    }

    pub fn contains(&self, c: Cell) -> bool {
        c.i < self.width && c.j < self.height
    }

    pub fn get(&self, c: Cell) -> Option<&T> {
        self.contains(c).then(|| &self.data[self.index(c)])
    }

    pub fn get_mut(&mut self, c: Cell) -> Option<&mut T> {
        if self.contains(c) {
            let idx = self.index(c);
            Some(&mut self.data[idx])
        } else {
            None
        }
    }

    pub fn set(&mut self, c: Cell, v: T) {
        let idx = self.index(c);
        self.data[idx] = v;
    }

    /// Cell containing a world point, if inside the grid.
    pub fn cell_at(&self, x: f64, y: f64) -> Option<Cell> {
        if !(x.is_finite() && y.is_finite()) || x < 0.0 || y < 0.0 {
            return None;
        }
        let c = Cell::new((x / self.resolution) as usize, (y / self.resolution) as usize);
        self.contains(c).then_some(c)
    }

    pub fn center(&self, c: Cell) -> (f64, f64) {
        ((c.i as f64 + 0.5) * self.resolution, (c.j as f64 + 0.5) * self.resolution)
    }

    pub fn size_m(&self) -> (f64, f64) {
        (self.width as f64 * self.resolution, self.height as f64 * self.resolution)
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.data.len()).map(|k| self.cell_of_index(k))
    }

    pub fn same_shape<U>(&self, other: &Grid<U>) -> bool {
        self.width == other.width && self.height == other.height && self.resolution == other.resolution
    }

    /// 8-connected neighbours inside the grid.
    pub fn neighbors8(&self, c: Cell) -> impl Iterator<Item = Cell> + '_ {
        const OFFS: [(isize, isize); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, 1), (1, -1), (-1, -1)];
        OFFS.iter().filter_map(move |&(di, dj)| {
            let i = c.i.checked_add_signed(di)?;
            let j = c.j.checked_add_signed(dj)?;
            let n = Cell::new(i, j);
            self.contains(n).then_some(n)
        })
    }
}

impl Grid<f64> {
    /// Bilinear interpolation between cell centres, clamped at the border.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let fx = (x / self.resolution - 0.5).clamp(0.0, (self.width - 1) as f64);
        let fy = (y / self.resolution - 0.5).clamp(0.0, (self.height - 1) as f64);
        let i0 = fx.floor() as usize;
        let j0 = fy.floor() as usize;
        let i1 = (i0 + 1).min(self.width - 1);
        let j1 = (j0 + 1).min(self.height - 1);
        let tx = fx - i0 as f64;
        let ty = fy - j0 as f64;
        let at = |i: usize, j: usize| self.data[j * self.width + i];
        let top = at(i0, j0) * (1.0 - tx) + at(i1, j0) * tx;
        let bot = at(i0, j1) * (1.0 - tx) + at(i1, j1) * tx;
        top * (1.0 - ty) + bot * ty
    }
}

impl Grid<bool> {
    pub fn count_true(&self) -> usize {
        self.data.iter().filter(|b| **b).count()
    }

    pub fn union_with(&mut self, other: &Grid<bool>) {
        assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a |= *b;
        }
    }

    /// Run-length encoding as `(value, run)` pairs in row-major order.
    pub fn run_lengths(&self) -> Vec<(bool, usize)> {
        let mut runs: Vec<(bool, usize)> = Vec::new();
        for &b in &self.data {
            match runs.last_mut() {
                Some((v, n)) if *v == b => *n += 1,
                _ => runs.push((b, 1)),
            }
        }
        runs
    }

    pub fn from_run_lengths(width: usize, height: usize, resolution: f64, runs: &[(bool, usize)]) -> Option<Self> {
        let data: Vec<bool> = runs.iter().flat_map(|&(v, n)| std::iter::repeat_n(v, n)).collect();
        (data.len() == width * height).then_some(Self { width, height, resolution, data })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cell_lookup_and_centres() {
        let g = Grid::filled(10, 5, 0.1, 0u8);
        assert_eq!(g.cell_at(0.05, 0.05), Some(Cell::new(0, 0)));
        assert_eq!(g.cell_at(0.99, 0.49), Some(Cell::new(9, 4)));
        assert_eq!(g.cell_at(1.0, 0.2), None);
        assert_eq!(g.cell_at(-0.01, 0.2), None);
        let (x, y) = g.center(Cell::new(3, 2));
        assert!((x - 0.35).abs() < 1e-12 && (y - 0.25).abs() < 1e-12);
    }

    #[test]
    fn bilinear_hits_centres_and_midpoints() {
        let g = Grid::from_fn(3, 1, 1.0, |c| c.i as f64 * 2.0);
        assert_eq!(g.sample_bilinear(0.5, 0.5), 0.0);
        assert_eq!(g.sample_bilinear(1.0, 0.5), 1.0);
        assert_eq!(g.sample_bilinear(2.5, 0.5), 4.0);
        assert_eq!(g.sample_bilinear(10.0, 0.5), 4.0);
    }

    proptest! {
        #[test]
        fn run_length_round_trip(bits in prop::collection::vec(any::<bool>(), 24)) {
            let g = Grid::from_fn(6, 4, 0.1, |c| bits[c.j * 6 + c.i]);
            let back = Grid::from_run_lengths(6, 4, 0.1, &g.run_lengths()).unwrap();
            prop_assert_eq!(back, g);
        }
    }
}
