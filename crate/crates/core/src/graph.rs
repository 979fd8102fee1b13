//! Immutable CSR graphs loaded from SNAP-style edge lists.
//!
//! Vertex ids are used verbatim as dense indices, so `n = max id + 1`.
//! Parallel edges and self-loops are kept, and the out-neighbors of a vertex
//! keep the order in which their edges appeared in the input.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type VertexId = u32;

/// Compressed sparse row adjacency.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    offsets: Vec<usize>,
    targets: Vec<VertexId>,
    directed: bool,
}

impl Graph {
    /// Builds a graph from `(u, v)` pairs. With `directed == false` every pair
    /// is stored in both directions.
    pub fn from_edges(edges: &[(VertexId, VertexId)], directed: bool) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::EmptyInput);
        }
        let n = edges
            .iter()
            .map(|&(u, v)| u.max(v) as usize)
            .max()
            .unwrap_or(0)
            + 1;

        let mut degree = vec![0usize; n];
        for &(u, v) in edges {
            degree[u as usize] += 1;
            if !directed {
                degree[v as usize] += 1;
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        let mut acc = 0;
        for d in &degree {
            acc += d;
            offsets.push(acc);
        }

        let mut cursor: Vec<usize> = offsets[..n].to_vec();
        let mut targets = vec![0 as VertexId; acc];
        for &(u, v) in edges {
            targets[cursor[u as usize]] = v;
            cursor[u as usize] += 1;
            if !directed {
                targets[cursor[v as usize]] = u;
                cursor[v as usize] += 1;
            }
        }

        Ok(Graph {
            offsets,
            targets,
            directed,
        })
    }

    /// Vertex count (order).
    pub fn n(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Stored arc count (size). Undirected edges count once per direction.
    pub fn m(&self) -> usize {
        self.targets.len()
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn targets(&self) -> &[VertexId] {
        &self.targets
    }

    fn check(&self, v: VertexId) -> Result<usize> {
        let idx = v as usize;
        if idx >= self.n() {
            return Err(Error::VertexOutOfRange {
                vertex: v as u64,
                n: self.n(),
            });
        }
        Ok(idx)
    }

    pub fn out_degree(&self, v: VertexId) -> Result<usize> {
        let i = self.check(v)?;
        Ok(self.offsets[i + 1] - self.offsets[i])
    }

    pub fn out_neighbors(&self, v: VertexId) -> Result<&[VertexId]> {
        let i = self.check(v)?;
        Ok(&self.targets[self.offsets[i]..self.offsets[i + 1]])
    }

    /// Unchecked variants for hot loops; `v` must be `< n`.
    #[inline]
    pub(crate) fn degree_of(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    #[inline]
    pub(crate) fn neighbors_of(&self, v: usize) -> &[VertexId] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }

    /// Writes every stored arc as one `u v` line (LF, no comments).
    ///
    /// Reloading the output with `directed = true` reproduces the same CSR
    /// arrays, including for graphs that were loaded as undirected.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        for u in 0..self.n() {
            for &v in self.neighbors_of(u) {
                writeln!(out, "{u} {v}")?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Parses a SNAP edge list: `#` comment lines, then one `u v` pair per line.
/// LF and CRLF line endings are accepted; blank lines are skipped.
pub fn load_edge_list<R: BufRead>(source: R, directed: bool) -> Result<Graph> {
    let mut edges = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut tokens = trimmed.split_whitespace();
        let (Some(a), Some(b), None) = (tokens.next(), tokens.next(), tokens.next()) else {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected two vertex ids, got {trimmed:?}"),
            });
        };
        edges.push((parse_id(a, line_no)?, parse_id(b, line_no)?));
    }
    Graph::from_edges(&edges, directed)
}

fn parse_id(token: &str, line: usize) -> Result<VertexId> {
    token.parse::<VertexId>().map_err(|e| Error::Parse {
        line,
        message: format!("bad vertex id {token:?}: {e}"),
    })
}

/// Convenience wrapper that opens `path` and loads it.
pub fn load_edge_list_file(path: &std::path::Path, directed: bool) -> Result<Graph> {
    let file = std::fs::File::open(path)?;
    load_edge_list(std::io::BufReader::new(file), directed)
}
