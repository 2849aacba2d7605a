//! NK landscapes: `G(z) = (1/N) sum_i E_i(z_i, z_{n_i^1}, ..., z_{n_i^K})`
//! with every table entry drawn uniformly from `[0, 1)`.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{PcError, Result};
use crate::objective::{Factor, FactoredObjective};

/// Largest `N` accepted by [`nk_exhaustive_minimum`].
pub const MAX_EXHAUSTIVE_SITES: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct NkInstance {
    n: usize,
    k: usize,
    seed: u64,
    neighbors: Vec<Vec<usize>>,
    /// `tables[i]` is indexed with `z_i` as the most significant bit, then
    /// the neighbors in listed order.
    tables: Vec<Vec<f64>>,
}

impl NkInstance {
    pub fn new(
        n: usize,
        k: usize,
        seed: u64,
        neighbors: Vec<Vec<usize>>,
        tables: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if n == 0 || k >= n {
            return Err(PcError::InvalidInstance(format!(
                "need 0 <= K < N, got N={n} K={k}"
            )));
        }
        if neighbors.len() != n || tables.len() != n {
            return Err(PcError::InvalidInstance(
                "need one neighbor list and one table per site".into(),
            ));
        }
        for (i, (nb, table)) in neighbors.iter().zip(&tables).enumerate() {
            if nb.len() != k {
                return Err(PcError::InvalidInstance(format!(
                    "site {i} has {} neighbors, expected {k}",
                    nb.len()
                )));
            }
            for (j, &x) in nb.iter().enumerate() {
                if x >= n || x == i || nb[..j].contains(&x) {
                    return Err(PcError::InvalidInstance(format!(
                        "site {i} has invalid neighbor {x}"
                    )));
                }
            }
            if table.len() != 1 << (k + 1) {
                return Err(PcError::InvalidInstance(format!(
                    "site {i} table has {} entries",
                    table.len()
                )));
            }
            if table.iter().any(|v| !(0.0..1.0).contains(v)) {
                return Err(PcError::InvalidInstance(format!(
                    "site {i} table leaves [0, 1)"
                )));
            }
        }
        Ok(Self {
            n,
            k,
            seed,
            neighbors,
            tables,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn neighbors(&self) -> &[Vec<usize>] {
        &self.neighbors
    }

    pub fn tables(&self) -> &[Vec<f64>] {
        &self.tables
    }

    fn site_value(&self, i: usize, z: &[usize]) -> f64 {
        let idx = self.neighbors[i]
            .iter()
            .fold(z[i], |acc, &j| acc * 2 + z[j]);
        self.tables[i][idx]
    }

    /// `G(z)`, in `[0, 1)`.
    pub fn evaluate(&self, z: &[usize]) -> f64 {
        (0..self.n).map(|i| self.site_value(i, z)).sum::<f64>() / self.n as f64
    }

    /// Text form: header `nk N K seed`, then one line per site holding its
    /// neighbors, a `|` separator and its `2^(K+1)` table values.
    pub fn to_text(&self) -> String {
        let mut out = format!("nk {} {} {}\n", self.n, self.k, self.seed);
        for (nb, table) in self.neighbors.iter().zip(&self.tables) {
            let mut fields: Vec<String> = nb.iter().map(|x| x.to_string()).collect();
            fields.push("|".into());
            fields.extend(table.iter().map(|v| format!("{v:?}")));
            out.push_str(&fields.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Neighbors uniform without replacement among the other sites.
pub fn generate_nk(n: usize, k: usize, seed: u64) -> Result<NkInstance> {
    if n == 0 || k >= n {
        return Err(PcError::InvalidInstance(format!(
            "need 0 <= K < N, got N={n} K={k}"
        )));
    }
    if k + 1 > 20 {
        return Err(PcError::ScopeTooLarge {
            entries: usize::MAX,
            cap: 1 << 20,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut neighbors = Vec::with_capacity(n);
    let mut tables = Vec::with_capacity(n);
    for i in 0..n {
        let nb: Vec<usize> = sample(&mut rng, n - 1, k)
            .into_iter()
            .map(|j| if j >= i { j + 1 } else { j })
            .collect();
        neighbors.push(nb);
        tables.push(
            (0..1usize << (k + 1))
                .map(|_| rng.random::<f64>())
                .collect(),
        );
    }
    NkInstance::new(n, k, seed, neighbors, tables)
}

/// One factor `E_i / N` per site over `{i} ∪ neighbors`.
pub fn nk_objective(inst: &NkInstance) -> Result<FactoredObjective> {
    let mut obj = FactoredObjective::new(vec![2; inst.n])?;
    let scale = 1.0 / inst.n as f64;
    for (i, (nb, table)) in inst.neighbors.iter().zip(&inst.tables).enumerate() {
        let mut scope = vec![i];
        scope.extend(nb);
        obj.add_factor(Factor::new(
            scope,
            vec![2; inst.k + 1],
            table.iter().map(|v| v * scale).collect(),
        )?)?;
    }
    Ok(obj)
}

pub fn parse_nk(text: &str) -> Result<NkInstance> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (hline, header) = lines.next().ok_or(PcError::Parse {
        line: 1,
        msg: "empty input".into(),
    })?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    let bad_header = || PcError::Parse {
        line: hline + 1,
        msg: format!("malformed header `{header}`"),
    };
    if parts.len() != 4 || parts[0] != "nk" {
        return Err(bad_header());
    }
    let n: usize = parts[1].parse().map_err(|_| bad_header())?;
    let k: usize = parts[2].parse().map_err(|_| bad_header())?;
    let seed: u64 = parts[3].parse().map_err(|_| bad_header())?;
    let mut neighbors = Vec::new();
    let mut tables = Vec::new();
    for (idx, line) in lines {
        let err = |msg: String| PcError::Parse { line: idx + 1, msg };
        let (nb, vals) = line
            .split_once('|')
            .ok_or_else(|| err("missing `|` separator".into()))?;
        neighbors.push(
            nb.split_whitespace()
                .map(|t| {
                    t.parse::<usize>()
                        .map_err(|_| err(format!("bad neighbor `{t}`")))
                })
                .collect::<Result<Vec<_>>>()?,
        );
        tables.push(
            vals.split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| err(format!("bad table value `{t}`")))
                })
                .collect::<Result<Vec<_>>>()?,
        );
    }
    NkInstance::new(n, k, seed, neighbors, tables).map_err(|e| PcError::Parse {
        line: text.lines().count(),
        msg: e.to_string(),
    })
}

/// Global minimum of `G` by enumeration, with the lexicographically first
/// (agent 0 least significant) minimizer.
pub fn nk_exhaustive_minimum(inst: &NkInstance) -> Result<(Vec<usize>, f64)> {
    if inst.n > MAX_EXHAUSTIVE_SITES {
        return Err(PcError::SpaceTooLarge {
            size: 1u128 << inst.n,
            cap: 1 << MAX_EXHAUSTIVE_SITES,
        });
    }
    let mut best = (Vec::new(), f64::INFINITY);
    let mut z = vec![0usize; inst.n];
    for bits in 0u64..1 << inst.n {
        for (i, zi) in z.iter_mut().enumerate() {
            *zi = ((bits >> i) & 1) as usize;
        }
        let g = inst.evaluate(&z);
        if g < best.1 {
            best = (z.clone(), g);
        }
    }
    Ok(best)
}
