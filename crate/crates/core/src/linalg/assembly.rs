use std::collections::HashMap;
use std::ops::Range;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;

use super::SparseSymmetricMatrix;
use crate::kernels::{Inputs, KernelHyperparameters};
use crate::{Error, Result};

/// How covariance assembly is split into row blocks and spread over workers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssemblyPlan {
    /// Rows per block (`b`).
    pub batch_size: usize,
    /// Worker threads (`n`).
    pub workers: usize,
}

impl Default for AssemblyPlan {
    fn default() -> Self {
        Self {
            batch_size: 256,
            workers: 1,
        }
    }
}

impl AssemblyPlan {
    pub fn new(batch_size: usize, workers: usize) -> Result<Self> {
        if batch_size == 0 || workers == 0 {
            return Err(Error::InvalidParameter(
                "batch_size and worker_count must be positive".into(),
            ));
        }
        Ok(Self {
            batch_size,
            workers,
        })
    }

    /// Disjoint row blocks covering `0..n`.
    pub fn blocks(&self, n: usize) -> Vec<Range<usize>> {
        (0..n)
            .step_by(self.batch_size.max(1))
            .map(|lo| lo..(lo + self.batch_size).min(n))
            .collect()
    }
}

/// Shared pool per worker count so repeated assemblies do not respawn threads.
pub(crate) fn worker_pool(workers: usize) -> Arc<rayon::ThreadPool> {
    static POOLS: OnceLock<Mutex<HashMap<usize, Arc<rayon::ThreadPool>>>> = OnceLock::new();
    let mut pools = POOLS.get_or_init(Default::default).lock().unwrap();
    pools
        .entry(workers)
        .or_insert_with(|| {
            Arc::new(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .thread_name(move |i| format!("sparsegp-{workers}-{i}"))
                    .build()
                    .expect("failed to build worker pool"),
            )
        })
        .clone()
}

type Triple = (usize, usize, f64);

fn assemble_block(
    inputs: &Inputs,
    theta: &KernelHyperparameters,
    cache: &crate::kernels::PointCache,
    rows: Range<usize>,
    include_noise: bool,
) -> Result<Vec<Triple>> {
    let mut out = Vec::new();
    for i in rows {
        for j in 0..=i {
            let mut v = theta.y_cached(inputs, cache, i, inputs, cache, j);
            if include_noise && i == j {
                v += theta.noise.variance(i);
            }
            if !v.is_finite() {
                return Err(Error::NonFiniteKernel {
                    row: i,
                    col: j,
                    value: v,
                });
            }
            if v != 0.0 {
                out.push((i, j, v));
            }
        }
    }
    Ok(out)
}

/// Assembles `C_z` (or `C_y` when `include_noise` is false) at `inputs`.
///
/// Lower-triangle row blocks are evaluated densely, exact zeros are dropped,
/// and the upper triangle is mirrored during the single-threaded merge. The
/// result does not depend on the plan.
pub fn assemble_covariance(
    inputs: &Inputs,
    theta: &KernelHyperparameters,
    plan: &AssemblyPlan,
    include_noise: bool,
) -> Result<SparseSymmetricMatrix> {
    let n = inputs.len();
    if include_noise {
        theta.noise.validate(Some(n))?;
    }
    let cache = theta.prepare(inputs);
    let blocks = plan.blocks(n);
    let pieces: Vec<Vec<Triple>> = if plan.workers <= 1 || blocks.len() <= 1 {
        blocks
            .into_iter()
            .map(|b| assemble_block(inputs, theta, &cache, b, include_noise))
            .collect::<Result<_>>()?
    } else {
        worker_pool(plan.workers).install(|| {
            blocks
                .into_par_iter()
                .map(|b| assemble_block(inputs, theta, &cache, b, include_noise))
                .collect::<Result<_>>()
        })?
    };
    Ok(merge_lower(n, &pieces))
}

/// Merges lower-triangle triples (in row-major order) into full CSR.
fn merge_lower(n: usize, pieces: &[Vec<Triple>]) -> SparseSymmetricMatrix {
    let mut counts = vec![0usize; n + 1];
    for &(i, j, _) in pieces.iter().flatten() {
        counts[i + 1] += 1;
        if i != j {
            counts[j + 1] += 1;
        }
    }
    for i in 0..n {
        counts[i + 1] += counts[i];
    }
    let nnz = counts[n];
    let mut next = counts.clone();
    let mut cols = vec![0usize; nnz];
    let mut vals = vec![0.0f64; nnz];
    // Rows arrive in increasing order, so each row receives its lower part
    // (ascending) before the mirrored upper part (also ascending).
    for &(i, j, v) in pieces.iter().flatten() {
        cols[next[i]] = j;
        vals[next[i]] = v;
        next[i] += 1;
        if i != j {
            cols[next[j]] = i;
            vals[next[j]] = v;
            next[j] += 1;
        }
    }
    SparseSymmetricMatrix::from_parts_unchecked(n, counts, cols, vals)
}

/// Share of stored entries, `nnz / N^2`.
pub fn sparsity_fraction(a: &SparseSymmetricMatrix) -> f64 {
    a.sparsity_fraction()
}

/// Adds a fixed jitter of `1e-8 * max(diag)` to the diagonal when the
/// smallest diagonal entry falls below `1e-12 * max(diag)`. Returns the
/// jitter and the corrected matrix when the guard fires.
pub fn condition_guard(a: &SparseSymmetricMatrix) -> Option<(f64, SparseSymmetricMatrix)> {
    let diag = a.diagonal();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if a.dim() == 0 || max <= 0.0 || min >= 1e-12 * max {
        return None;
    }
    let jitter = 1e-8 * max;
    log::debug!(
        "diagonal range [{min:e}, {max:e}] is ill-conditioned; adding jitter {jitter:e}"
    );
    Some((jitter, a.with_diagonal_added(&vec![jitter; a.dim()])))
}
