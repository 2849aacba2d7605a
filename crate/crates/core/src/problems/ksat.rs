//! k-sat as a pure constraint problem: `G = 0` and one violation residual per
//! clause, `c_a(z) = 1` iff every literal of clause `a` is falsified.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::distribution::ProductDistribution;
use crate::error::{PcError, Result};
use crate::objective::{Factor, FactoredObjective};

/// Largest variable count accepted by the exhaustive solution enumerator.
pub const MAX_ENUMERATED_VARIABLES: usize = 30;

/// Variable index (1-based, as in DIMACS) and the value that satisfies it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Literal {
    pub var: usize,
    pub positive: bool,
}

impl Literal {
    pub fn agent(&self) -> usize {
        self.var - 1
    }

    /// Move of the agent that satisfies this literal.
    pub fn satisfying_move(&self) -> usize {
        usize::from(self.positive)
    }

    pub fn to_dimacs(&self) -> i64 {
        if self.positive {
            self.var as i64
        } else {
            -(self.var as i64)
        }
    }
}

pub type Clause = Vec<Literal>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CnfInstance {
    n: usize,
    clauses: Vec<Clause>,
}

impl CnfInstance {
    pub fn new(n: usize, clauses: Vec<Clause>) -> Result<Self> {
        if n == 0 {
            return Err(PcError::InvalidInstance(
                "an instance needs at least one variable".into(),
            ));
        }
        for (a, clause) in clauses.iter().enumerate() {
            if clause.is_empty() {
                return Err(PcError::InvalidInstance(format!("clause {a} is empty")));
            }
            for (j, lit) in clause.iter().enumerate() {
                if lit.var == 0 || lit.var > n {
                    return Err(PcError::InvalidInstance(format!(
                        "clause {a} uses variable {} outside 1..={n}",
                        lit.var
                    )));
                }
                if clause[..j].iter().any(|l| l.var == lit.var) {
                    return Err(PcError::InvalidInstance(format!(
                        "clause {a} repeats variable {}",
                        lit.var
                    )));
                }
            }
        }
        Ok(Self { n, clauses })
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn num_clauses(&self) -> usize {
        self.clauses.len()
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn clause_satisfied(clause: &[Literal], z: &[usize]) -> bool {
        clause.iter().any(|l| z[l.agent()] == l.satisfying_move())
    }

    /// Number of clauses falsified by a full assignment of moves.
    pub fn violated(&self, z: &[usize]) -> usize {
        self.clauses
            .iter()
            .filter(|c| !Self::clause_satisfied(c, z))
            .count()
    }

    pub fn is_satisfied(&self, z: &[usize]) -> bool {
        self.violated(z) == 0
    }
}

/// Reads DIMACS CNF. Comment lines start with `c`; a `%` line ends the clause
/// section, as in SATLIB files. Clauses may span lines.
pub fn parse_dimacs(text: &str) -> Result<CnfInstance> {
    let mut header: Option<(usize, usize)> = None;
    let mut clauses = Vec::new();
    let mut current: Clause = Vec::new();
    let mut last_line = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('c') {
            continue;
        }
        if line.starts_with('%') {
            break;
        }
        if line.starts_with('p') {
            if header.is_some() {
                return Err(PcError::Parse {
                    line: line_no,
                    msg: "duplicate header".into(),
                });
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 4 || parts[0] != "p" || parts[1] != "cnf" {
                return Err(PcError::Parse {
                    line: line_no,
                    msg: format!("malformed header `{line}`"),
                });
            }
            let parse = |s: &str| {
                s.parse::<usize>().map_err(|_| PcError::Parse {
                    line: line_no,
                    msg: format!("bad count `{s}` in header"),
                })
            };
            header = Some((parse(parts[2])?, parse(parts[3])?));
            continue;
        }
        let Some((n, _)) = header else {
            return Err(PcError::Parse {
                line: line_no,
                msg: "clause before header".into(),
            });
        };
        for tok in line.split_whitespace() {
            let lit: i64 = tok.parse().map_err(|_| PcError::Parse {
                line: line_no,
                msg: format!("bad literal `{tok}`"),
            })?;
            if lit == 0 {
                if current.is_empty() {
                    return Err(PcError::Parse {
                        line: line_no,
                        msg: "empty clause".into(),
                    });
                }
                clauses.push(std::mem::take(&mut current));
                continue;
            }
            let var = lit.unsigned_abs() as usize;
            if var > n {
                return Err(PcError::Parse {
                    line: line_no,
                    msg: format!("literal {lit} out of range 1..={n}"),
                });
            }
            if current.iter().any(|l| l.var == var) {
                return Err(PcError::Parse {
                    line: line_no,
                    msg: format!("variable {var} repeated in a clause"),
                });
            }
            current.push(Literal {
                var,
                positive: lit > 0,
            });
        }
    }
    let Some((n, c)) = header else {
        return Err(PcError::Parse {
            line: last_line,
            msg: "missing `p cnf` header".into(),
        });
    };
    if !current.is_empty() {
        return Err(PcError::Parse {
            line: last_line,
            msg: "unterminated clause".into(),
        });
    }
    if clauses.len() != c {
        return Err(PcError::Parse {
            line: last_line,
            msg: format!("header declares {c} clauses, found {}", clauses.len()),
        });
    }
    CnfInstance::new(n, clauses).map_err(|e| PcError::Parse {
        line: last_line,
        msg: e.to_string(),
    })
}

/// Canonical DIMACS: header line, then one zero-terminated clause per line.
pub fn emit_dimacs(inst: &CnfInstance) -> String {
    let mut out = format!("p cnf {} {}\n", inst.n, inst.clauses.len());
    for clause in &inst.clauses {
        for lit in clause {
            out.push_str(&lit.to_dimacs().to_string());
            out.push(' ');
        }
        out.push_str("0\n");
    }
    out
}

/// Pure-penalty objective: no base factors, one constraint per clause with
/// multiplier 1.
pub fn ksat_objective(inst: &CnfInstance) -> FactoredObjective {
    let mut obj =
        FactoredObjective::new(vec![2; inst.n]).expect("instances have at least one variable");
    for clause in &inst.clauses {
        let scope: Vec<usize> = clause.iter().map(Literal::agent).collect();
        let factor = Factor::from_fn(scope, vec![2; clause.len()], |local| {
            let falsified = clause
                .iter()
                .zip(local)
                .all(|(l, &z)| z != l.satisfying_move());
            if falsified {
                1.0
            } else {
                0.0
            }
        })
        .expect("clause scopes are distinct and in range");
        obj.add_constraint(factor, 1.0)
            .expect("clause agents are binary");
    }
    obj
}

/// `c_a(q) = prod_j q_{v_j}(not sigma_j)`.
pub fn expected_violation(clause: &[Literal], q: &ProductDistribution) -> f64 {
    clause
        .iter()
        .map(|l| q.row(l.agent())[1 - l.satisfying_move()])
        .product()
}

/// Random k-sat instance satisfied by a hidden assignment, which is returned
/// alongside. Clauses that the hidden assignment falsifies are redrawn.
pub fn planted_ksat(n: usize, c: usize, k: usize, seed: u64) -> Result<(CnfInstance, Vec<usize>)> {
    if k == 0 || k > n {
        return Err(PcError::InvalidInstance(format!(
            "clause width {k} must lie in 1..={n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hidden: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
    let mut clauses = Vec::with_capacity(c);
    while clauses.len() < c {
        let clause: Clause = sample(&mut rng, n, k)
            .into_iter()
            .map(|a| Literal {
                var: a + 1,
                positive: rng.random(),
            })
            .collect();
        if CnfInstance::clause_satisfied(&clause, &hidden) {
            clauses.push(clause);
        }
    }
    Ok((CnfInstance::new(n, clauses)?, hidden))
}

pub fn generate_planted_ksat(n: usize, c: usize, k: usize, seed: u64) -> Result<CnfInstance> {
    Ok(planted_ksat(n, c, k, seed)?.0)
}

fn clause_masks(inst: &CnfInstance) -> Result<Vec<(u64, u64)>> {
    if inst.n > MAX_ENUMERATED_VARIABLES {
        return Err(PcError::SpaceTooLarge {
            size: 1u128 << inst.n,
            cap: 1 << MAX_ENUMERATED_VARIABLES,
        });
    }
    Ok(inst
        .clauses
        .iter()
        .map(|clause| {
            clause.iter().fold((0u64, 0u64), |(mask, pos), l| {
                let bit = 1u64 << l.agent();
                (mask | bit, if l.positive { pos | bit } else { pos })
            })
        })
        .collect())
}

fn satisfies(masks: &[(u64, u64)], z: u64) -> bool {
    masks.iter().all(|&(mask, pos)| !(z ^ pos) & mask != 0)
}

/// Every satisfying assignment, in increasing bit order (agent 0 least
/// significant), stopping after `limit`.
pub fn enumerate_solutions(inst: &CnfInstance, limit: usize) -> Result<Vec<Vec<usize>>> {
    let masks = clause_masks(inst)?;
    let mut out = Vec::new();
    for z in 0..(1u64 << inst.n) {
        if out.len() >= limit {
            break;
        }
        if satisfies(&masks, z) {
            out.push((0..inst.n).map(|i| ((z >> i) & 1) as usize).collect());
        }
    }
    Ok(out)
}

pub fn count_solutions(inst: &CnfInstance) -> Result<u64> {
    let masks = clause_masks(inst)?;
    Ok((0..(1u64 << inst.n))
        .filter(|&z| satisfies(&masks, z))
        .count() as u64)
}
