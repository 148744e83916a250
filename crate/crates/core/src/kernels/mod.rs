//! Kernel evaluation.
//!
//! The covariance of the latent process is the product of a core kernel and
//! a compactly supported sparse kernel,
//!
//! ```text
//! C_y(x, x') = C_core(x, x') * [ s0 f0(x, x'; r0) + sum_i f_i(x) f_i(x') ]
//! ```
//!
//! where each `f_i` is a sum of bump functions and `f0` is a Wendland
//! polynomial. The observed process adds a nugget on the diagonal. Every
//! function here is pure; the [`PointCache`] precomputes per-point
//! quantities so that matrix assembly performs exactly the same floating
//! point operations as the pointwise evaluators.

mod bump;
mod core_kernel;
mod matern;
mod wendland;

use serde::{Deserialize, Serialize};

pub use bump::{bump_eval, BumpFunction};
pub use core_kernel::{core_eval, CoreKernelParams, LocalScale, NonstationaryParams};
pub use matern::{matern_correlation, Smoothness};
pub use wendland::{wendland_eval, wendland_profile, WendlandSupport};

use crate::{Error, Result};

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// A borrowed input location together with its basis-function values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point<'a> {
    pub coords: &'a [f64],
    pub basis: &'a [f64],
}

impl<'a> Point<'a> {
    pub fn new(coords: &'a [f64]) -> Self {
        Self { coords, basis: &[] }
    }

    pub fn with_basis(coords: &'a [f64], basis: &'a [f64]) -> Self {
        Self { coords, basis }
    }
}

/// A set of `n` input locations in `d` dimensions, row-major, optionally
/// carrying `m` evaluated basis functions per location.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Inputs {
    dim: usize,
    coords: Vec<f64>,
    basis_dim: usize,
    basis: Vec<f64>,
}

impl Inputs {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("input dimension must be >= 1".into()));
        }
        if coords.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim * (coords.len() / dim + 1),
                found: coords.len(),
            });
        }
        if let Some(bad) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::Data(format!("non-finite coordinate in row {}", bad / dim)));
        }
        Ok(Self {
            dim,
            coords,
            basis_dim: 0,
            basis: Vec::new(),
        })
    }

    /// One-dimensional inputs.
    pub fn from_1d(xs: &[f64]) -> Self {
        Self::new(1, xs.to_vec()).expect("finite 1-d inputs")
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(1, |r| r.len());
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: r.len(),
            });
        }
        Self::new(dim, rows.concat())
    }

    pub fn with_basis(mut self, basis_dim: usize, basis: Vec<f64>) -> Result<Self> {
        if basis.len() != basis_dim * self.len() {
            return Err(Error::DimensionMismatch {
                expected: basis_dim * self.len(),
                found: basis.len(),
            });
        }
        self.basis_dim = basis_dim;
        self.basis = basis;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn basis_dim(&self) -> usize {
        self.basis_dim
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn basis(&self) -> &[f64] {
        &self.basis
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn basis_row(&self, i: usize) -> &[f64] {
        &self.basis[i * self.basis_dim..(i + 1) * self.basis_dim]
    }

    pub fn point(&self, i: usize) -> Point<'_> {
        Point {
            coords: self.row(i),
            basis: self.basis_row(i),
        }
    }

    /// Rows selected by index, in the given order.
    pub fn select(&self, idx: &[usize]) -> Inputs {
        let mut coords = Vec::with_capacity(idx.len() * self.dim);
        let mut basis = Vec::with_capacity(idx.len() * self.basis_dim);
        for &i in idx {
            coords.extend_from_slice(self.row(i));
            basis.extend_from_slice(self.basis_row(i));
        }
        Inputs {
            dim: self.dim,
            coords,
            basis_dim: self.basis_dim,
            basis,
        }
    }

    /// Concatenates two input sets with matching dimensions.
    pub fn concat(&self, other: &Inputs) -> Result<Inputs> {
        if self.dim != other.dim || self.basis_dim != other.basis_dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        let mut out = self.clone();
        out.coords.extend_from_slice(&other.coords);
        out.basis.extend_from_slice(&other.basis);
        Ok(out)
    }
}

/// Parameters of the sparsity-discovering kernel
/// `s0 f0(x, x'; r0) + sum_i f_i(x) f_i(x')`, `f_i = sum_j g_ij`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparseKernelParams {
    /// `s0`, weight of the Wendland component.
    pub scale: f64,
    /// `r0`, support of the Wendland component.
    pub wendland_radius: WendlandSupport,
    pub n1: usize,
    pub n2: usize,
    /// Row-major `n1 x n2` grid of bumps; entry `(i, j)` is `bumps[i * n2 + j]`.
    pub bumps: Vec<BumpFunction>,
    /// Row-major `n1 x n2` grid of inclusion probabilities.
    pub inclusion_probs: Vec<f64>,
}

impl SparseKernelParams {
    /// Wendland-only kernel with no bump grid.
    pub fn wendland_only(scale: f64, r0: f64) -> Self {
        Self {
            scale,
            wendland_radius: WendlandSupport::Isotropic(r0),
            n1: 0,
            n2: 0,
            bumps: Vec::new(),
            inclusion_probs: Vec::new(),
        }
    }

    pub fn bump(&self, i: usize, j: usize) -> &BumpFunction {
        &self.bumps[i * self.n2 + j]
    }

    pub fn bump_mut(&mut self, i: usize, j: usize) -> &mut BumpFunction {
        &mut self.bumps[i * self.n2 + j]
    }

    /// Hyperparameter count `2 + n1 n2 (d + 3)` with free shapes.
    pub fn hyperparameter_count(&self, dim: usize) -> usize {
        2 + self.n1 * self.n2 * (dim + 3)
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.scale >= 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "s0 must be >= 0, got {}",
                self.scale
            )));
        }
        self.wendland_radius.validate()?;
        if let WendlandSupport::Anisotropic(r) = &self.wendland_radius {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: r.len(),
                });
            }
        }
        let cells = self.n1 * self.n2;
        if self.bumps.len() != cells {
            return Err(Error::DimensionMismatch {
                expected: cells,
                found: self.bumps.len(),
            });
        }
        if self.inclusion_probs.len() != cells {
            return Err(Error::DimensionMismatch {
                expected: cells,
                found: self.inclusion_probs.len(),
            });
        }
        for b in &self.bumps {
            b.validate()?;
            if b.centroid.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: b.centroid.len(),
                });
            }
        }
        if self.inclusion_probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidParameter("inclusion probabilities must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// `f_i(x)` for zero-based `i`.
    pub fn component(&self, i: usize, x: &[f64]) -> f64 {
        self.bumps[i * self.n2..(i + 1) * self.n2]
            .iter()
            .fold(0.0, |acc, g| acc + g.eval(x))
    }

    /// All `f_i(x)`, `i = 0..n1`.
    pub fn component_sums(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n1).map(|i| self.component(i, x)).collect()
    }

    /// Kernel value from precomputed component sums.
    pub fn combine(&self, x: &[f64], fx: &[f64], x2: &[f64], fx2: &[f64]) -> f64 {
        let base = self.scale * self.wendland_radius.eval(x, x2);
        fx.iter().zip(fx2).fold(base, |acc, (a, b)| acc + a * b)
    }
}

/// `f_i(x)` for a one-based component index `i` in `1..=n1`.
pub fn sparse_component_eval(params: &SparseKernelParams, i: usize, x: &[f64]) -> Result<f64> {
    if i == 0 || i > params.n1 {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: params.n1,
        });
    }
    Ok(params.component(i - 1, x))
}

pub fn sparse_kernel_eval(params: &SparseKernelParams, x: &[f64], x2: &[f64]) -> f64 {
    params.combine(x, &params.component_sums(x), x2, &params.component_sums(x2))
}

/// Observation noise variance `tau^2(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseParams {
    Homoskedastic { tau2: f64 },
    Heteroskedastic { tau2_per_point: Vec<f64> },
}

impl NoiseParams {
    pub fn variance(&self, i: usize) -> f64 {
        match self {
            NoiseParams::Homoskedastic { tau2 } => *tau2,
            NoiseParams::Heteroskedastic { tau2_per_point } => tau2_per_point[i],
        }
    }

    pub fn validate(&self, n: Option<usize>) -> Result<()> {
        match self {
            NoiseParams::Homoskedastic { tau2 } if !(*tau2 >= 0.0 && tau2.is_finite()) => Err(
                Error::InvalidParameter(format!("tau2 must be >= 0, got {tau2}")),
            ),
            NoiseParams::Heteroskedastic { tau2_per_point } => {
                if let Some(n) = n {
                    if tau2_per_point.len() != n {
                        return Err(Error::DimensionMismatch {
                            expected: n,
                            found: tau2_per_point.len(),
                        });
                    }
                }
                if tau2_per_point.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
                    return Err(Error::InvalidParameter("per-point tau2 must be >= 0".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams::Homoskedastic { tau2: 0.0 }
    }
}

/// All kernel hyperparameters: core, sparse factor and noise.
///
/// `sparse = None` drops the sparse factor (it is identically one), which is
/// how a plain dense GP is expressed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelHyperparameters {
    pub core: CoreKernelParams,
    #[serde(default)]
    pub sparse: Option<SparseKernelParams>,
    #[serde(default)]
    pub noise: NoiseParams,
}

/// Per-point quantities shared by every entry involving that point.
#[derive(Debug, Clone)]
pub struct PointCache {
    n1: usize,
    sums: Vec<f64>,
    scales: Vec<LocalScale>,
}

impl PointCache {
    fn sums(&self, i: usize) -> &[f64] {
        &self.sums[i * self.n1..(i + 1) * self.n1]
    }
}

impl KernelHyperparameters {
    pub fn validate(&self, dim: usize) -> Result<()> {
        self.core.validate()?;
        if let Some(s) = &self.sparse {
            s.validate(dim)?;
        }
        self.noise.validate(None)
    }

    pub fn prepare(&self, inputs: &Inputs) -> PointCache {
        let n1 = self.sparse.as_ref().map_or(0, |s| s.n1);
        let mut sums = Vec::with_capacity(inputs.len() * n1);
        let mut scales = Vec::with_capacity(inputs.len());
        for i in 0..inputs.len() {
            let p = inputs.point(i);
            if let Some(s) = &self.sparse {
                sums.extend(s.component_sums(p.coords));
            }
            scales.push(self.core.local(p));
        }
        PointCache { n1, sums, scales }
    }

    fn y_parts(
        &self,
        x: Point<'_>,
        fx: &[f64],
        lx: LocalScale,
        x2: Point<'_>,
        fx2: &[f64],
        lx2: LocalScale,
    ) -> f64 {
        match &self.sparse {
            Some(s) => {
                let sparse = s.combine(x.coords, fx, x2.coords, fx2);
                if sparse == 0.0 {
                    0.0
                } else {
                    self.core.pair(x, lx, x2, lx2) * sparse
                }
            }
            None => self.core.pair(x, lx, x2, lx2),
        }
    }

    /// `C_y` between row `i` of `a` and row `j` of `b`, using caches built
    /// by [`KernelHyperparameters::prepare`] for each set.
    pub fn y_cached(
        &self,
        a: &Inputs,
        ca: &PointCache,
        i: usize,
        b: &Inputs,
        cb: &PointCache,
        j: usize,
    ) -> f64 {
        self.y_parts(
            a.point(i),
            ca.sums(i),
            ca.scales[i],
            b.point(j),
            cb.sums(j),
            cb.scales[j],
        )
    }

    /// Sparse factor alone at a cached pair (1 when there is no sparse factor).
    pub fn sparse_cached(&self, a: &Inputs, ca: &PointCache, i: usize, b: &Inputs, cb: &PointCache, j: usize) -> f64 {
        match &self.sparse {
            Some(s) => s.combine(a.row(i), ca.sums(i), b.row(j), cb.sums(j)),
            None => 1.0,
        }
    }
}

/// `C_y(x, x') = C_core(x, x') * C_sparse(x, x')`.
pub fn y_kernel_eval(theta: &KernelHyperparameters, x: Point<'_>, x2: Point<'_>) -> f64 {
    let (fx, fx2) = match &theta.sparse {
        Some(s) => (s.component_sums(x.coords), s.component_sums(x2.coords)),
        None => (Vec::new(), Vec::new()),
    };
    theta.y_parts(x, &fx, theta.core.local(x), x2, &fx2, theta.core.local(x2))
}

/// `C_z` between observed rows `i` and `j`: `C_y` plus `tau^2(x_i)` when `i == j`.
pub fn z_kernel_eval(theta: &KernelHyperparameters, i: usize, j: usize, inputs: &Inputs) -> Result<f64> {
    let n = inputs.len();
    for idx in [i, j] {
        if idx >= n {
            return Err(Error::IndexOutOfRange { index: idx, len: n });
        }
    }
    let y = y_kernel_eval(theta, inputs.point(i), inputs.point(j));
    Ok(if i == j { y + theta.noise.variance(i) } else { y })
}
