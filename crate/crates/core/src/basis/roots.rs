use serde::{Deserialize, Serialize};

use super::bessel::bessel_j;
use crate::error::{Error, Result};

/// Positive roots `lambda_{n,k}` of `J_n`, grouped by order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootTable {
    /// `roots[n][k - 1]` is the `k`-th positive root of `J_n`.
    roots: Vec<Vec<f64>>,
}

impl RootTable {
    pub fn get(&self, n: usize, k: usize) -> Option<f64> {
        if k == 0 {
            return None;
        }
        self.roots.get(n).and_then(|r| r.get(k - 1)).copied()
    }

    /// Roots of `J_n` in increasing order (empty if none were stored).
    pub fn order(&self, n: usize) -> &[f64] {
        self.roots.get(n).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Number of orders with at least one stored root.
    pub fn num_orders(&self) -> usize {
        self.roots.iter().filter(|r| !r.is_empty()).count()
    }

    pub fn len(&self) -> usize {
        self.roots.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(n, k, lambda)` triples, orders ascending then roots ascending.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.roots
            .iter()
            .enumerate()
            .flat_map(|(n, r)| r.iter().enumerate().map(move |(k, &l)| (n, k + 1, l)))
    }
}

const SCAN_STEP: f64 = 0.5;
const MAX_BISECTIONS: usize = 200;

/// Every root `lambda_{n,k} <= lambda_max` for `0 <= n <= n_max`.
///
/// With `n_max = None` the order range is extended until `J_{n+1}` has no
/// root below `lambda_max`. Roots are bracketed by sampling `J_n` every
/// 0.5 and refined by bisection down to adjacent floating point numbers.
pub fn compute_bessel_roots(n_max: Option<usize>, lambda_max: f64) -> Result<RootTable> {
    let first = 2.404_825_557_695_773;
    if !(lambda_max > first) {
        return Err(Error::InvalidParameter(format!(
            "lambda_max must exceed the first root of J_0 ({first}), got {lambda_max}"
        )));
    }
    let mut roots = Vec::new();
    let mut n = 0usize;
    loop {
        if let Some(limit) = n_max {
            if n > limit {
                break;
            }
        }
        let r = roots_of_order(n, lambda_max)?;
        if n_max.is_none() && r.is_empty() {
            break;
        }
        roots.push(r);
        n += 1;
    }
    Ok(RootTable { roots })
}

fn roots_of_order(n: usize, lambda_max: f64) -> Result<Vec<f64>> {
    // J_n is positive on (0, n] for n >= 1, so no root lies below n.
    let mut a = n as f64;
    let mut fa = bessel_j(n, a);
    let mut out = Vec::new();
    while a <= lambda_max {
        let b = a + SCAN_STEP;
        let fb = bessel_j(n, b);
        if fa == 0.0 && a > 0.0 {
            out.push(a);
        } else if fa * fb < 0.0 {
            let root = bisect(n, a, b, fa, out.len() + 1)?;
            if root <= lambda_max {
                out.push(root);
            }
        }
        a = b;
        fa = fb;
    }
    Ok(out)
}

fn bisect(n: usize, mut lo: f64, mut hi: f64, mut flo: f64, k: usize) -> Result<f64> {
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 1e-14 {
            // bracket collapsed to neighbouring doubles; pick the smaller residual
            let fhi = bessel_j(n, hi);
            return Ok(if flo.abs() <= fhi.abs() { lo } else { hi });
        }
        let fm = bessel_j(n, mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if flo * fm < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            flo = fm;
        }
    }
    Err(Error::RootNotConverged { n, k })
}
