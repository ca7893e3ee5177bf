//! AP placement, contention graphs and their Laplacian spectra.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::eigen::symmetric_eigen;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    pub n_aps: usize,
    /// Side of the square placement region, in meters.
    pub region_side: f64,
    /// Carrier sensing range, in meters.
    pub cs_range: f64,
    pub n_channels: usize,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            n_aps: 10,
            region_side: 1000.0,
            cs_range: 550.0,
            n_channels: 3,
        }
    }
}

impl TopologyConfig {
    pub fn new(n_aps: usize, region_side: f64, cs_range: f64, n_channels: usize) -> Result<Self> {
        let config = Self {
            n_aps,
            region_side,
            cs_range,
            n_channels,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_aps == 0 {
            return Err(Error::InvalidConfig("n_aps must be at least 1".into()));
        }
        if self.n_aps > 255 {
            return Err(Error::InvalidConfig("n_aps must be at most 255".into()));
        }
        if !(self.region_side > 0.0 && self.region_side.is_finite()) {
            return Err(Error::InvalidConfig("region_side must be positive".into()));
        }
        if !(self.cs_range > 0.0 && self.cs_range.is_finite()) {
            return Err(Error::InvalidConfig("cs_range must be positive".into()));
        }
        if self.n_channels == 0 || self.n_channels > 256 {
            return Err(Error::InvalidConfig(
                "n_channels must be in [1, 256]".into(),
            ));
        }
        Ok(())
    }
}

/// Square, symmetric, zero-diagonal 0/1 matrix.
///
/// Serializes as nested rows, e.g. `[[0,1],[1,0]]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<u8>>", into = "Vec<Vec<u8>>")]
pub struct Adjacency {
    n: usize,
    bits: Vec<bool>,
}

impl Adjacency {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            bits: vec![false; n * n],
        }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adj = Self::empty(n);
        for &(i, j) in edges {
            if i >= n || j >= n || i == j {
                return Err(Error::InvalidInput(format!("bad edge ({i}, {j}) for n = {n}")));
            }
            adj.set(i, j, true);
        }
        Ok(adj)
    }

    pub fn from_rows(rows: Vec<Vec<u8>>) -> Result<Self> {
        let n = rows.len();
        let mut adj = Self::empty(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidInput(format!(
                    "adjacency row {i} has length {}, expected {n}",
                    row.len()
                )));
            }
            for (j, &x) in row.iter().enumerate() {
                match x {
                    0 => {}
                    1 if i != j => adj.bits[i * n + j] = true,
                    1 => {
                        return Err(Error::InvalidInput(format!(
                            "adjacency diagonal entry ({i}, {i}) is nonzero"
                        )))
                    }
                    _ => {
                        return Err(Error::InvalidInput(format!(
                            "adjacency entry ({i}, {j}) = {x} is not binary"
                        )))
                    }
                }
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if adj.bits[i * n + j] != adj.bits[j * n + i] {
                    return Err(Error::InvalidInput(format!(
                        "adjacency is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(adj)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.n + j]
    }

    /// Sets both (i, j) and (j, i). Diagonal writes are ignored.
    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        if i != j {
            self.bits[i * self.n + j] = value;
            self.bits[j * self.n + i] = value;
        }
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| self.get(i, j))
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors(i).count()
    }

    pub fn edge_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count() / 2
    }

    /// Returns the matrix with node `v` moved to position `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.n, "permutation length mismatch");
        let mut out = Self::empty(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                if self.get(i, j) {
                    out.bits[perm[i] * self.n + perm[j]] = true;
                }
            }
        }
        out
    }

    pub fn to_f64(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.n, self.n), |(i, j)| if self.get(i, j) { 1.0 } else { 0.0 })
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j) as u8).collect())
            .collect()
    }
}

impl TryFrom<Vec<Vec<u8>>> for Adjacency {
    type Error = Error;

    fn try_from(rows: Vec<Vec<u8>>) -> Result<Self> {
        Adjacency::from_rows(rows)
    }
}

impl From<Adjacency> for Vec<Vec<u8>> {
    fn from(adj: Adjacency) -> Self {
        adj.to_rows()
    }
}

/// AP positions together with their contention graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub positions: Vec<[f64; 2]>,
    pub adjacency: Adjacency,
}

impl Topology {
    /// Two APs contend iff their distance is at most `cs_range`.
    pub fn from_positions(positions: Vec<[f64; 2]>, cs_range: f64) -> Self {
        let n = positions.len();
        let mut adjacency = Adjacency::empty(n);
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = positions[i][0] - positions[j][0];
                let dy = positions[i][1] - positions[j][1];
                if (dx * dx + dy * dy).sqrt() <= cs_range {
                    adjacency.set(i, j, true);
                }
            }
        }
        Self {
            positions,
            adjacency,
        }
    }

    pub fn n_aps(&self) -> usize {
        self.positions.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("topology serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let topo: Topology =
            serde_json::from_str(s).map_err(|e| Error::InvalidInput(e.to_string()))?;
        if topo.adjacency.n() != topo.positions.len() {
            return Err(Error::InvalidInput(format!(
                "{} positions but {}x{} adjacency",
                topo.positions.len(),
                topo.adjacency.n(),
                topo.adjacency.n()
            )));
        }
        Ok(topo)
    }
}

/// Places `n_aps` APs uniformly at random in `[0, region_side]²`.
pub fn generate_topology(config: &TopologyConfig, seed: u64) -> Topology {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = config.region_side;
    let positions = (0..config.n_aps)
        .map(|_| [rng.gen_range(0.0..=side), rng.gen_range(0.0..=side)])
        .collect();
    Topology::from_positions(positions, config.cs_range)
}

#[derive(Debug, Clone)]
pub struct LaplacianDecomposition {
    pub degree: Array2<f64>,
    pub laplacian: Array2<f64>,
    /// Ascending.
    pub eigenvalues: Array1<f64>,
    /// Orthonormal eigenvectors as columns, matching `eigenvalues`.
    pub eigenvectors: Array2<f64>,
}

impl LaplacianDecomposition {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }
}

/// Computes `D`, `L = D - A` and the eigendecomposition of `L`.
pub fn laplacian_decompose(adjacency: &Adjacency) -> Result<LaplacianDecomposition> {
    let n = adjacency.n();
    let a = adjacency.to_f64();
    let degree = Array2::from_diag(&a.sum_axis(ndarray::Axis(1)));
    let laplacian = &degree - &a;
    let eig = symmetric_eigen(&laplacian)?;
    debug_assert_eq!(eig.eigenvalues.len(), n);
    Ok(LaplacianDecomposition {
        degree,
        laplacian,
        eigenvalues: eig.eigenvalues,
        eigenvectors: eig.eigenvectors,
    })
}
