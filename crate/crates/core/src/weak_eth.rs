//! Diagonal matrix-element deviations `Δ_k = A_kk − ⟨A⟩` and the late-time
//! factorization error `Σ_k ρ_kk Δ_{k,A} Δ_{k,B}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::correlators::{fmt17, infinite_time_average};
use crate::error::{Error, Result};
use crate::linalg::compensated_sum;
use crate::spectral::{EigenbasisOperator, ThermalEnsemble};

const MEAN_TOL: f64 = 1e-10;
const IDENTITY_TOL: f64 = 1e-10;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeviationStats {
    /// `⟨A⟩ = Σ_k ρ_kk A_kk`
    pub expectation: f64,
    pub deviations: Vec<f64>,
    /// `Σ_k ρ_kk Δ_k`, zero up to rounding.
    pub weighted_mean: f64,
    pub weighted_variance: f64,
    pub delta_grid: Vec<f64>,
    /// `Pr_ρ[|Δ| ≥ δ]` for each grid value.
    pub tail_mass: Vec<f64>,
}

pub fn diagonal_deviations(ens: &ThermalEnsemble, a: &EigenbasisOperator, delta_grid: &[f64]) -> Result<DeviationStats> {
    ens.check_dim(a)?;
    if delta_grid.iter().any(|&d| !(d > 0.0) || !d.is_finite()) || delta_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("delta grid must be positive and strictly ascending".into()));
    }
    let diag = a.diagonal();
    let expectation = compensated_sum(ens.weights.iter().zip(&diag).map(|(r, x)| r * x));
    let deviations: Vec<f64> = diag.iter().map(|x| x - expectation).collect();
    let weighted_mean = compensated_sum(ens.weights.iter().zip(&deviations).map(|(r, d)| r * d));
    if weighted_mean.abs() > MEAN_TOL {
        return Err(Error::invariant(
            "weak_eth.weighted_mean",
            format!("Σ ρ Δ = {weighted_mean:e}"),
        ));
    }
    let weighted_variance = compensated_sum(ens.weights.iter().zip(&deviations).map(|(r, d)| r * d * d));
    let tail_mass: Vec<f64> = delta_grid
        .iter()
        .map(|&delta| {
            compensated_sum(
                ens.weights
                    .iter()
                    .zip(&deviations)
                    .filter(|(_, d)| d.abs() >= delta)
                    .map(|(r, _)| *r),
            )
        })
        .collect();
    // Nested sets, but compensated sums of different subsets could still tie-break by an ulp.
    if tail_mass.windows(2).any(|w| w[1] > w[0] + 1e-15) {
        return Err(Error::invariant("weak_eth.tail_monotone", format!("{tail_mass:?}")));
    }
    Ok(DeviationStats {
        expectation,
        deviations,
        weighted_mean,
        weighted_variance,
        delta_grid: delta_grid.to_vec(),
        tail_mass,
    })
}

impl DeviationStats {
    /// Tail mass at the largest grid value `≤ delta`.
    pub fn tail_at(&self, delta: f64) -> Option<f64> {
        let i = self.delta_grid.partition_point(|&d| d <= delta);
        (i > 0).then(|| self.tail_mass[i - 1])
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FactorizationReport {
    /// `Σ_k ρ_kk Δ_{k,A} Δ_{k,B}`
    pub error: f64,
    /// `C_∞ − ⟨A⟩⟨B⟩`
    pub identity_rhs: f64,
    pub identity_defect: f64,
    /// Split of `error` over `𝒮 = {k : |Δ_{k,A}| < Δ and |Δ_{k,B}| < Δ}`.
    pub threshold: Option<f64>,
    pub in_set: f64,
    pub out_of_set: f64,
    /// `ρ`-mass outside `𝒮`.
    pub out_of_set_mass: f64,
    /// `√(Σρ Δ_A²) √(Σρ Δ_B²)`
    pub cauchy_schwarz: f64,
}

/// Factorization error with the identity and Cauchy–Schwarz checks applied;
/// `threshold` selects the in-set / out-of-set split.
pub fn factorization_error(
    ens: &ThermalEnsemble,
    a: &EigenbasisOperator,
    b: &EigenbasisOperator,
    threshold: Option<f64>,
) -> Result<FactorizationReport> {
    ens.check_dim(b)?;
    let da = diagonal_deviations(ens, a, &[])?;
    let db = diagonal_deviations(ens, b, &[])?;
    let terms: Vec<f64> = ens
        .weights
        .iter()
        .zip(da.deviations.iter().zip(&db.deviations))
        .map(|(r, (x, y))| r * x * y)
        .collect();
    let error = compensated_sum(terms.iter().copied());
    let identity_rhs = infinite_time_average(ens, a, b)? - da.expectation * db.expectation;
    let identity_defect = (error - identity_rhs).abs();
    if identity_defect > IDENTITY_TOL {
        return Err(Error::invariant(
            "weak_eth.factorization_identity",
            format!("Σ ρ Δ_A Δ_B = {error:e} vs C_∞ − ⟨A⟩⟨B⟩ = {identity_rhs:e}"),
        ));
    }
    let cauchy_schwarz = (da.weighted_variance * db.weighted_variance).sqrt();
    if error.abs() > cauchy_schwarz * (1.0 + 1e-12) + 1e-15 {
        return Err(Error::invariant(
            "weak_eth.cauchy_schwarz",
            format!("|{error:e}| > {cauchy_schwarz:e}"),
        ));
    }
    let inside = |k: usize| threshold.is_none_or(|t| da.deviations[k].abs() < t && db.deviations[k].abs() < t);
    let n = terms.len();
    let in_set = compensated_sum((0..n).filter(|&k| inside(k)).map(|k| terms[k]));
    let out_of_set = compensated_sum((0..n).filter(|&k| !inside(k)).map(|k| terms[k]));
    let out_of_set_mass = compensated_sum((0..n).filter(|&k| !inside(k)).map(|k| ens.weights[k]));
    Ok(FactorizationReport {
        error,
        identity_rhs,
        identity_defect,
        threshold,
        in_set,
        out_of_set,
        out_of_set_mass,
        cauchy_schwarz,
    })
}

/// Least-squares fit of `ln|y| = c + p ln x`; returns `(p, c)`. Report only.
pub fn power_law_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && y.abs() > 0.0)
        .map(|(x, y)| (x.ln(), y.abs().ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// One row per `(L, β, δ)`: columns `L, beta, tail_delta, tail_mass`.
pub fn write_tail_csv(path: &Path, rows: &[(usize, f64, &DeviationStats)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["L", "beta", "tail_delta", "tail_mass"])?;
    for (l, beta, st) in rows {
        for (d, m) in st.delta_grid.iter().zip(&st.tail_mass) {
            w.write_record([l.to_string(), fmt17(*beta), fmt17(*d), fmt17(*m)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Columns `L, factorization_error`.
pub fn write_factorization_csv(path: &Path, rows: &[(usize, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["L", "factorization_error"])?;
    for (l, e) in rows {
        w.write_record([l.to_string(), fmt17(*e)])?;
    }
    w.flush()?;
    Ok(())
}
