use log::warn;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// `1 - mean_{d≠d'} |corr(H[:,d], H[:,d'])|`. A zero-variance column
/// contributes a correlation of 0.
pub fn independence_level(h: &Tensor) -> Result<f64> {
    let (m, d) = h.dims2();
    if m < 2 || d < 2 {
        return Err(Error::data(format!("independence level needs M >= 2 and D >= 2, got {m}x{d}")));
    }
    let mut centered = vec![0.0; m * d];
    let mut norms = vec![0.0; d];
    for c in 0..d {
        let mean = (0..m).map(|r| h.get(r, c)).sum::<f64>() / m as f64;
        let mut ss = 0.0;
        for r in 0..m {
            let v = h.get(r, c) - mean;
            centered[c * m + r] = v;
            ss += v * v;
        }
        norms[c] = ss.sqrt();
    }
    let degenerate = norms.iter().filter(|&&n| n == 0.0).count();
    if degenerate > 0 {
        warn!("{degenerate} item-table column(s) have zero variance; counted as uncorrelated");
    }
    let mut total = 0.0;
    for a in 0..d {
        for b in a + 1..d {
            if norms[a] == 0.0 || norms[b] == 0.0 {
                continue;
            }
            let cov: f64 = (0..m).map(|r| centered[a * m + r] * centered[b * m + r]).sum();
            total += (cov / (norms[a] * norms[b])).abs().min(1.0);
        }
    }
    // each unordered pair stands for both ordered pairs
    Ok(1.0 - 2.0 * total / (d * (d - 1)) as f64)
}
