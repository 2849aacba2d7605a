//! Lagrangian grids over two binary agents.

use pc_core::distribution::row_entropy;
use pc_core::{Factor, FactoredObjective, ProductDistribution, Result};

/// Temperature of the two-agent demo landscape.
pub const DEMO_TEMPERATURE: f64 = 7.0;

/// Two binary agents with `G(0,0)=0, G(0,1)=18, G(1,0)=25, G(1,1)=2`. At
/// `T = 7` the product Lagrangian has a global and a suboptimal local minimum.
pub fn paper_2x2() -> FactoredObjective {
    FactoredObjective::new(vec![2, 2])
        .and_then(|o| {
            o.with_factor(Factor::new(
                vec![0, 1],
                vec![2, 2],
                vec![0.0, 18.0, 25.0, 2.0],
            )?)
        })
        .expect("static demo objective is valid")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    /// `q_1(0)`.
    pub q1: f64,
    /// `q_2(0)`.
    pub q2: f64,
    pub value: f64,
}

/// `L(q_1(0), q_2(0))` sampled on a `size x size` grid spanning `[0, 1]^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeGrid {
    pub size: usize,
    pub temperature: f64,
    /// Row-major, `q_1(0)` indexes rows.
    pub values: Vec<f64>,
}

fn coord(k: usize, size: usize) -> f64 {
    k as f64 / (size - 1) as f64
}

/// `E_q[G] - T S(q)` for two binary agents; `0 ln 0 = 0` on the boundary.
pub fn lagrangian_2x2(obj: &FactoredObjective, q1: f64, q2: f64, t: f64) -> Result<f64> {
    let rows = vec![vec![q1, 1.0 - q1], vec![q2, 1.0 - q2]];
    let q = ProductDistribution::from_rows(rows.clone())?;
    let s: f64 = rows.iter().map(|r| row_entropy(r)).sum();
    Ok(obj.expected_value(&q, true) - t * s)
}

impl LandscapeGrid {
    pub fn compute(obj: &FactoredObjective, t: f64, size: usize) -> Result<Self> {
        if size < 2 {
            return Err(pc_core::PcError::InvalidConfig(
                "grid needs at least 2 points per side".into(),
            ));
        }
        let mut values = Vec::with_capacity(size * size);
        for a in 0..size {
            for b in 0..size {
                values.push(lagrangian_2x2(obj, coord(a, size), coord(b, size), t)?);
            }
        }
        Ok(Self {
            size,
            temperature: t,
            values,
        })
    }

    pub fn point(&self, a: usize, b: usize) -> GridPoint {
        GridPoint {
            q1: coord(a, self.size),
            q2: coord(b, self.size),
            value: self.values[a * self.size + b],
        }
    }

    pub fn step(&self) -> f64 {
        1.0 / (self.size - 1) as f64
    }

    /// Grid points strictly below every one of their (up to 8) neighbors,
    /// lowest first.
    pub fn local_minima(&self) -> Vec<GridPoint> {
        let n = self.size as isize;
        let mut out = Vec::new();
        for a in 0..n {
            for b in 0..n {
                let v = self.values[(a * n + b) as usize];
                let mut is_min = true;
                'scan: for da in -1..=1 {
                    for db in -1..=1 {
                        let (x, y) = (a + da, b + db);
                        if (da, db) == (0, 0) || x < 0 || y < 0 || x >= n || y >= n {
                            continue;
                        }
                        if self.values[(x * n + y) as usize] <= v {
                            is_min = false;
                            break 'scan;
                        }
                    }
                }
                if is_min {
                    out.push(self.point(a as usize, b as usize));
                }
            }
        }
        out.sort_by(|x, y| x.value.total_cmp(&y.value));
        out
    }

    /// Plot-ready text: `#` header and minima lines, then `q1 q2 L` rows.
    pub fn to_text(&self) -> String {
        let mut s = format!("# landscape size={} T={}\n", self.size, self.temperature);
        for m in self.local_minima() {
            s.push_str(&format!(
                "# minimum q1={} q2={} L={}\n",
                m.q1, m.q2, m.value
            ));
        }
        for a in 0..self.size {
            for b in 0..self.size {
                let p = self.point(a, b);
                s.push_str(&format!("{} {} {}\n", p.q1, p.q2, p.value));
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corners_are_pure_strategy_values() {
        let grid = LandscapeGrid::compute(&paper_2x2(), DEMO_TEMPERATURE, 11).unwrap();
        let n = grid.size - 1;
        assert_eq!(grid.point(n, n).value, 0.0);
        assert_eq!(grid.point(n, 0).value, 18.0);
        assert_eq!(grid.point(0, n).value, 25.0);
        assert_eq!(grid.point(0, 0).value, 2.0);
    }

    #[test]
    fn two_minima() {
        let grid = LandscapeGrid::compute(&paper_2x2(), DEMO_TEMPERATURE, 201).unwrap();
        let minima = grid.local_minima();
        assert_eq!(minima.len(), 2);
        assert!((minima[0].q1 - 0.95).abs() <= 0.02 && (minima[0].q2 - 0.91).abs() <= 0.02);
        assert!((minima[1].q1 - 0.14).abs() <= 0.02 && (minima[1].q2 - 0.08).abs() <= 0.02);
    }

    #[test]
    fn rejects_degenerate_grid() {
        assert!(LandscapeGrid::compute(&paper_2x2(), 7.0, 1).is_err());
    }
}
