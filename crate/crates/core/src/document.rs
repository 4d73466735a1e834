//! JSON game documents.
//!
//! Matrices are arrays of rows (row-major). Infinite box bounds are written as
//! `null`. Floats round-trip exactly.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::game::{AgentSpec, BoxSet, GameInstance, Pseudogradient, SelectionSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentDocument {
    pub dim: usize,
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
    #[serde(rename = "A_rows")]
    pub a_rows: Vec<Vec<f64>>,
    pub neighbors: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameDocument {
    pub agents: Vec<AgentDocument>,
    pub b: Vec<f64>,
    #[serde(rename = "Q_F")]
    pub q_f: Vec<Vec<f64>>,
    #[serde(rename = "c_F")]
    pub c_f: Vec<f64>,
    #[serde(rename = "Q_phi")]
    pub q_phi: Vec<Vec<f64>>,
    #[serde(rename = "c_phi")]
    pub c_phi: Vec<f64>,
    pub theta: f64,
}

fn rows_to_matrix(rows: &[Vec<f64>], nrows: usize, ncols: usize, what: &'static str) -> Result<DMatrix<f64>> {
    check_len(what, nrows, rows.len())?;
    for r in rows {
        check_len(what, ncols, r.len())?;
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl GameDocument {
    pub fn from_parts(game: &GameInstance, selection: &SelectionSpec) -> Result<Self> {
        let (q_f, c_f) = match game.pseudogradient_spec() {
            Pseudogradient::Linear { q, c } => (matrix_to_rows(q), c.clone()),
            Pseudogradient::Oracle(_) => {
                return Err(Error::InvalidParameter("opaque pseudogradients cannot be serialized".into()))
            }
        };
        let sel = match selection {
            SelectionSpec::Quadratic(s) => s,
            SelectionSpec::Oracle(_) => {
                return Err(Error::InvalidParameter("opaque selection functions cannot be serialized".into()))
            }
        };
        let bound = |v: f64| v.is_finite().then_some(v);
        Ok(Self {
            agents: game
                .agents()
                .iter()
                .map(|a| AgentDocument {
                    dim: a.dim(),
                    lower: a.local_set.lower.iter().map(|v| bound(*v)).collect(),
                    upper: a.local_set.upper.iter().map(|v| bound(*v)).collect(),
                    a_rows: matrix_to_rows(&a.coupling),
                    neighbors: a.neighbors.clone(),
                })
                .collect(),
            b: game.b().to_vec(),
            q_f,
            c_f,
            q_phi: matrix_to_rows(sel.q()),
            c_phi: sel.c().to_vec(),
            theta: sel.theta(),
        })
    }

    pub fn into_parts(&self) -> Result<(GameInstance, SelectionSpec)> {
        let m = self.b.len();
        let agents = self
            .agents
            .iter()
            .map(|a| {
                check_len("agent lower bound", a.dim, a.lower.len())?;
                let lower = a.lower.iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)).collect();
                let upper = a.upper.iter().map(|v| v.unwrap_or(f64::INFINITY)).collect();
                AgentSpec::new(
                    BoxSet::new(lower, upper)?,
                    rows_to_matrix(&a.a_rows, m, a.dim, "A_rows")?,
                    a.neighbors.clone(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let n: usize = self.agents.iter().map(|a| a.dim).sum();
        let game = GameInstance::new(
            agents,
            self.b.clone(),
            Pseudogradient::Linear {
                q: rows_to_matrix(&self.q_f, n, n, "Q_F")?,
                c: self.c_f.clone(),
            },
        )?;
        let selection = SelectionSpec::quadratic(
            rows_to_matrix(&self.q_phi, n, n, "Q_phi")?,
            self.c_phi.clone(),
            self.theta,
        )?;
        Ok((game, selection))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}
