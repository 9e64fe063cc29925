//! Exact signed Euclidean distance transform over occupancy grids.
//!
//! Outside occupied cells the value is the centre-to-centre distance to the
//! nearest occupied cell. Inside, the value is `res - d_free`, where `d_free`
//! is the distance to the nearest free cell, so boundary cells read zero and
//! deeper cells are negative.
//!
//! Squared distances are computed with the separable lower-envelope
//! algorithm (one column pass, one row pass), which is exact on the lattice.

use serde::{Deserialize, Serialize};

use crate::grid::Grid;

/// Value reported everywhere when nothing is occupied.
pub const R_LARGE: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdfGrid {
    pub values: Grid<f64>,
    pub stamp: u64,
}

impl SdfGrid {
    pub fn resolution(&self) -> f64 {
        self.values.resolution()
    }

    /// Bilinear lookup at a continuous world position.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        self.values.sample_bilinear(x, y)
    }
}

/// 1D squared distance transform of a sampled function `f` (lower envelope
/// of parabolas). `f[q] = INF` marks cells without a seed.
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    // first finite seed
    let Some(first) = (0..n).find(|&q| f[q].is_finite()) else {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    };
    let mut k = 0usize;
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in first + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] {
                if k == 0 {
                    v[0] = q;
                    z[1] = f64::INFINITY;
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let d = q as f64 - p as f64;
        *o = d * d + f[p];
    }
}

/// Squared distance, in cells², from every cell to the nearest `target` cell.
pub fn squared_distance_cells(grid: &Grid<bool>, target: bool) -> Grid<f64> {
    let (w, h) = (grid.width(), grid.height());
    let n = w.max(h);
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut col_in = vec![0.0; h];
    let mut col_out = vec![0.0; h];
    let mut tmp = vec![f64::INFINITY; w * h];
    let data = grid.data();
    for i in 0..w {
        for j in 0..h {
            col_in[j] = if data[j * w + i] == target { 0.0 } else { f64::INFINITY };
        }
        edt_1d(&col_in, &mut col_out, &mut v, &mut z);
        for j in 0..h {
            tmp[j * w + i] = col_out[j];
        }
    }
    let mut row_out = vec![0.0; w];
    let mut out = vec![0.0; w * h];
    for j in 0..h {
        edt_1d(&tmp[j * w..(j + 1) * w], &mut row_out, &mut v, &mut z);
        out[j * w..(j + 1) * w].copy_from_slice(&row_out);
    }
    Grid::from_fn(w, h, grid.resolution(), |c| out[c.j * w + c.i])
}

/// Signed distance field of an occupancy grid, in meters.
pub fn rebuild_sdf(occupied: &Grid<bool>, stamp: u64) -> SdfGrid {
    let res = occupied.resolution();
    let n_occ = occupied.count_true();
    if n_occ == 0 {
        return SdfGrid { values: occupied.map(|_| R_LARGE), stamp };
    }
    let to_occ = squared_distance_cells(occupied, true);
    let to_free = (n_occ < occupied.len()).then(|| squared_distance_cells(occupied, false));
    let values = Grid::from_fn(occupied.width(), occupied.height(), res, |c| {
        if *occupied.get(c).unwrap() {
            match &to_free {
                Some(f) => res - f.get(c).unwrap().sqrt() * res,
                None => -R_LARGE,
            }
        } else {
            to_occ.get(c).unwrap().sqrt() * res
        }
    });
    SdfGrid { values, stamp }
}

/// Cells whose centre lies within `radius` meters of an occupied centre.
pub fn dilate(occupied: &Grid<bool>, radius: f64) -> Grid<bool> {
    if occupied.count_true() == 0 || radius <= 0.0 {
        return occupied.clone();
    }
    let d2 = squared_distance_cells(occupied, true);
    let r_cells = radius / occupied.resolution();
    let lim = r_cells * r_cells + 1e-9;
    d2.map(|v| *v <= lim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Cell;
    use proptest::prelude::*;

    /// Brute-force signed distance for one cell.
    fn brute(occ: &Grid<bool>, c: Cell) -> f64 {
        let res = occ.resolution();
        let me = *occ.get(c).unwrap();
        let mut best = f64::INFINITY;
        for o in occ.cells() {
            if *occ.get(o).unwrap() != me {
                let di = o.i as f64 - c.i as f64;
                let dj = o.j as f64 - c.j as f64;
                best = best.min((di * di + dj * dj).sqrt() * res);
            }
        }
        if me {
            res - best
        } else {
            best
        }
    }

    #[test]
    fn single_cell_distance() {
        let mut g = Grid::filled(10, 10, 0.1, false);
        g.set(Cell::new(2, 5), true);
        let sdf = rebuild_sdf(&g, 1);
        assert!((sdf.values.get(Cell::new(5, 5)).unwrap() - 0.3).abs() < 1e-12);
        assert!(*sdf.values.get(Cell::new(2, 5)).unwrap() <= 0.0);
        let (x, y) = g.center(Cell::new(2, 8));
        assert!((sdf.sample(x, y) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn empty_grid_is_sentinel() {
        let g = Grid::filled(7, 3, 0.1, false);
        let sdf = rebuild_sdf(&g, 0);
        assert!(sdf.values.data().iter().all(|&v| v == R_LARGE));
    }

    #[test]
    fn full_grid_is_negative_sentinel() {
        let g = Grid::filled(4, 4, 0.1, true);
        assert!(rebuild_sdf(&g, 0).values.data().iter().all(|&v| v == -R_LARGE));
    }

    #[test]
    fn interior_goes_negative() {
        let g = Grid::from_fn(9, 9, 0.5, |c| (2..7).contains(&c.i) && (2..7).contains(&c.j));
        let sdf = rebuild_sdf(&g, 0);
        assert_eq!(*sdf.values.get(Cell::new(2, 4)).unwrap(), 0.0);
        assert_eq!(*sdf.values.get(Cell::new(4, 4)).unwrap(), 0.5 - 1.5);
    }

    #[test]
    fn dilation_radius() {
        let mut g = Grid::filled(11, 11, 0.1, false);
        g.set(Cell::new(5, 5), true);
        let d = dilate(&g, 0.2);
        assert!(*d.get(Cell::new(7, 5)).unwrap());
        assert!(!*d.get(Cell::new(7, 6)).unwrap());
        assert!(!*d.get(Cell::new(8, 5)).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn matches_brute_force(
            w in 1usize..24, h in 1usize..24, density in 0.0f64..0.6, seed in any::<u64>()
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = Grid::from_fn(w, h, 0.1, |_| rng.random::<f64>() < density);
            let sdf = rebuild_sdf(&g, 0);
            if g.count_true() > 0 && g.count_true() < g.len() {
                for c in g.cells() {
                    let got = *sdf.values.get(c).unwrap();
                    prop_assert!((got - brute(&g, c)).abs() < 1e-9, "{:?}: {} vs {}", c, got, brute(&g, c));
                }
                // 1-Lipschitz between free cells
                for a in g.cells().filter(|c| !g.get(*c).unwrap()) {
                    for b in g.cells().filter(|c| !g.get(*c).unwrap()) {
                        let (ax, ay) = g.center(a);
                        let (bx, by) = g.center(b);
                        let d = ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt();
                        let dv = (sdf.values.get(a).unwrap() - sdf.values.get(b).unwrap()).abs();
                        prop_assert!(dv <= d + 1e-9);
                    }
                }
            }
        }
    }
}
