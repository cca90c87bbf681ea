//! Proximity graph over lattice points: coordinate tokens per node and a
//! weighted, symmetric adjacency matrix.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Point, SketchLattice};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Proximity {
    /// Each node links to its single nearest neighbour; the result is symmetrized.
    Nearest,
    /// Nodes link when their normalized distance is below the threshold.
    Nearby,
}

/// How a point is turned into embedding-table indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedMode {
    /// One index `y * side + x` into a `side²`-row table.
    Joint,
    /// Separate `x` and `y` indices into two `side`-row tables.
    Factorized,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    pub proximity: Proximity,
    pub distance_threshold: f64,
    pub embed_mode: EmbedMode,
    pub self_loops: bool,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            proximity: Proximity::Nearby,
            distance_threshold: 0.2,
            embed_mode: EmbedMode::Factorized,
            self_loops: true,
        }
    }
}

impl GraphConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.distance_threshold > 0.0 && self.distance_threshold < 1.0) {
            return Err(Error::Config(format!(
                "distance threshold {} must lie in (0, 1)",
                self.distance_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Token {
    Joint(usize),
    Factorized { x: usize, y: usize },
}

pub fn tokenize(p: Point, side: usize, mode: EmbedMode) -> Result<Token> {
    let (x, y) = (p.x as usize, p.y as usize);
    if x >= side || y >= side {
        return Err(Error::OutOfRange { x: p.x as i64, y: p.y as i64, side });
    }
    Ok(match mode {
        EmbedMode::Joint => Token::Joint(y * side + x),
        EmbedMode::Factorized => Token::Factorized { x, y },
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SketchGraph {
    pub tokens: Vec<Token>,
    pub adjacency: Array2<f64>,
}

impl SketchGraph {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// `{"m": m, "tokens": [...], "adjacency": [row-major m*m values]}`;
    /// joint tokens are integers, factorized tokens `[x, y]` pairs.
    pub fn to_json(&self) -> serde_json::Value {
        let tokens: Vec<serde_json::Value> = self
            .tokens
            .iter()
            .map(|t| match *t {
                Token::Joint(i) => serde_json::json!(i),
                Token::Factorized { x, y } => serde_json::json!([x, y]),
            })
            .collect();
        let adjacency: Vec<f64> = self.adjacency.iter().copied().collect();
        serde_json::json!({ "m": self.len(), "tokens": tokens, "adjacency": adjacency })
    }

    /// Reorders nodes: new node `i` is old node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> SketchGraph {
        let m = self.len();
        assert_eq!(perm.len(), m);
        let tokens = perm.iter().map(|&i| self.tokens[i]).collect();
        let adjacency = Array2::from_shape_fn((m, m), |(i, j)| self.adjacency[[perm[i], perm[j]]]);
        SketchGraph { tokens, adjacency }
    }
}

pub fn normalized_distance(d: f64, side: usize) -> f64 {
    d / (side as f64 * std::f64::consts::SQRT_2)
}

pub fn pairwise_distances(lattice: &SketchLattice) -> Array2<f64> {
    let pts = &lattice.points;
    let m = pts.len();
    let mut d = Array2::zeros((m, m));
    for i in 0..m {
        for j in (i + 1)..m {
            let dx = pts[i].x as f64 - pts[j].x as f64;
            let dy = pts[i].y as f64 - pts[j].y as f64;
            let v = dx.hypot(dy);
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    d
}

/// Tokens plus adjacency with link strength `1 - d / (side * sqrt 2)` on linked
/// pairs, zero elsewhere, and ones on the diagonal when self-loops are on.
pub fn build_adjacency(lattice: &SketchLattice, cfg: &GraphConfig) -> Result<SketchGraph> {
    cfg.validate()?;
    let m = lattice.len();
    if m == 0 {
        return Err(Error::EmptyLattice);
    }
    let tokens = lattice
        .points
        .iter()
        .map(|&p| tokenize(p, lattice.side, cfg.embed_mode))
        .collect::<Result<Vec<_>>>()?;

    let dist = pairwise_distances(lattice);
    let norm = dist.mapv(|d| normalized_distance(d, lattice.side));
    let mut linked = Array2::from_elem((m, m), false);
    match cfg.proximity {
        Proximity::Nearby => {
            for i in 0..m {
                for j in 0..m {
                    linked[[i, j]] = i != j && norm[[i, j]] < cfg.distance_threshold;
                }
            }
        }
        Proximity::Nearest => {
            for i in 0..m {
                let mut best: Option<usize> = None;
                for j in (0..m).filter(|&j| j != i) {
                    // strict comparison keeps the lowest index on ties
                    if best.is_none_or(|b| dist[[i, j]] < dist[[i, b]]) {
                        best = Some(j);
                    }
                }
                if let Some(j) = best {
                    linked[[i, j]] = true;
                    linked[[j, i]] = true;
                }
            }
        }
    }

    let adjacency = Array2::from_shape_fn((m, m), |(i, j)| {
        if i == j {
            if cfg.self_loops {
                1.0
            } else {
                0.0
            }
        } else if linked[[i, j]] {
            1.0 - norm[[i, j]]
        } else {
            0.0
        }
    });
    Ok(SketchGraph { tokens, adjacency })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lattice(points: &[(u32, u32)]) -> SketchLattice {
        SketchLattice { side: 256, n: 32, points: points.iter().map(|&(x, y)| Point::new(x, y)).collect() }
    }

    #[test]
    fn tokens() {
        let t = |x, y, mode| tokenize(Point::new(x, y), 256, mode).unwrap();
        assert_eq!(t(0, 0, EmbedMode::Joint), Token::Joint(0));
        assert_eq!(t(255, 255, EmbedMode::Joint), Token::Joint(65535));
        assert_eq!(t(3, 7, EmbedMode::Joint), Token::Joint(1795));
        assert_eq!(t(3, 7, EmbedMode::Factorized), Token::Factorized { x: 3, y: 7 });
        assert!(matches!(
            tokenize(Point::new(256, 0), 256, EmbedMode::Joint),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn distances() {
        assert_eq!(pairwise_distances(&lattice(&[(4, 4)])), Array2::<f64>::zeros((1, 1)));
        let d = pairwise_distances(&lattice(&[(0, 0), (3, 4)]));
        assert_eq!(d[[0, 1]], 5.0);
        assert_eq!(d[[1, 0]], 5.0);
        assert_eq!(d[[0, 0]], 0.0);
    }

    #[test]
    fn single_node_graph() {
        let g = build_adjacency(&lattice(&[(9, 9)]), &GraphConfig::default()).unwrap();
        assert_eq!(g.adjacency, ndarray::arr2(&[[1.0]]));
        let nearest = GraphConfig { proximity: Proximity::Nearest, ..GraphConfig::default() };
        assert_eq!(build_adjacency(&lattice(&[(9, 9)]), &nearest).unwrap().adjacency, ndarray::arr2(&[[1.0]]));
    }

    #[test]
    fn empty_lattice_rejected() {
        assert!(matches!(build_adjacency(&lattice(&[]), &GraphConfig::default()), Err(Error::EmptyLattice)));
    }

    #[test]
    fn close_pair_linked() {
        // 36.2 px apart: normalized ~0.09999
        let l = SketchLattice { side: 256, n: 32, points: vec![Point::new(0, 0), Point::new(36, 0)] };
        let g = build_adjacency(&l, &GraphConfig::default()).unwrap();
        let expected = 1.0 - 36.0 / (256.0 * 2f64.sqrt());
        assert!((g.adjacency[[0, 1]] - expected).abs() < 1e-15);
        assert!((g.adjacency[[0, 1]] - 0.9).abs() < 1e-3);
    }

    #[test]
    fn far_pair_only_in_nearest_mode() {
        // 100 px apart: normalized ~0.276 >= 0.2
        let l = lattice(&[(0, 0), (100, 0)]);
        let nearby = build_adjacency(&l, &GraphConfig::default()).unwrap();
        assert_eq!(nearby.adjacency[[0, 1]], 0.0);
        let cfg = GraphConfig { proximity: Proximity::Nearest, ..GraphConfig::default() };
        let nearest = build_adjacency(&l, &cfg).unwrap();
        assert!((nearest.adjacency[[0, 1]] - (1.0 - normalized_distance(100.0, 256))).abs() < 1e-15);
    }

    #[test]
    fn nearest_ties_prefer_lower_index_then_symmetrize() {
        // node 1 is equidistant from nodes 0 and 2
        let l = lattice(&[(0, 0), (10, 0), (20, 0), (200, 200)]);
        let cfg = GraphConfig { proximity: Proximity::Nearest, self_loops: false, ..GraphConfig::default() };
        let a = build_adjacency(&l, &cfg).unwrap().adjacency;
        assert!(a[[1, 0]] > 0.0 && a[[0, 1]] > 0.0);
        // node 2 picked node 1, so 1-2 exists via 2's choice
        assert!(a[[1, 2]] > 0.0);
        // node 3's nearest is node 2
        assert!(a[[3, 2]] > 0.0 && a[[2, 3]] > 0.0);
        assert_eq!(a[[3, 0]], 0.0);
        assert_eq!(a, a.t());
        assert!(a.diag().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bad_threshold() {
        let cfg = GraphConfig { distance_threshold: 1.0, ..GraphConfig::default() };
        assert!(build_adjacency(&lattice(&[(0, 0)]), &cfg).is_err());
    }

    #[test]
    fn permutation_conjugates_adjacency() {
        let l = lattice(&[(0, 0), (10, 5), (30, 40), (2, 80)]);
        let g = build_adjacency(&l, &GraphConfig::default()).unwrap();
        let perm = [2, 0, 3, 1];
        let p = g.permuted(&perm);
        for i in 0..4 {
            assert_eq!(p.tokens[i], g.tokens[perm[i]]);
            for j in 0..4 {
                assert_eq!(p.adjacency[[i, j]], g.adjacency[[perm[i], perm[j]]]);
            }
        }
    }
}
