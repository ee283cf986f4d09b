//! Two-point functions from spectral data, their infinite-time averages and
//! fluctuation statistics.
//!
//! Sign convention everywhere: `C(t) = Σ_jk ρ_jj A_jk B_kj e^{−i(E_j−E_k)t}`.
//!
//! Grid evaluation factorizes the phase as `e^{−iE_j t}·e^{+iE_k t}`, so a
//! block of `m` grid times costs one `d×d` by `d×m` real GEMM pair. Blocks
//! have a fixed size and each block's GEMM is sequential, so the output does
//! not depend on how many rayon workers run.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use faer::Mat;
use log::warn;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{compensated_sum, ComplexMatrix, KahanSum};
use crate::spectral::{EigenbasisOperator, ThermalEnsemble, DEGENERACY_TOL};

/// Gaps below this use the analytic limit of the Kubo weight.
pub const KUBO_LIMIT_TOL: f64 = 1e-12;
const BLOCK: usize = 256;
const BLOCKS_PER_BATCH: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationKind {
    Plain,
    Symmetric,
    Kubo,
}

fn check_pair(ens: &ThermalEnsemble, a: &EigenbasisOperator, b: &EigenbasisOperator) -> Result<()> {
    ens.check_dim(a)?;
    ens.check_dim(b)
}

/// Direct `O(d²)` evaluation of `tr(ρ A(t) B)`.
pub fn correlation_trace(
    ens: &ThermalEnsemble,
    a: &EigenbasisOperator,
    b: &EigenbasisOperator,
    t: f64,
) -> Result<Complex64> {
    check_pair(ens, a, b)?;
    let e = &ens.energies;
    let (mut re, mut im) = (KahanSum::default(), KahanSum::default());
    for j in 0..ens.dim() {
        for k in 0..ens.dim() {
            let z = a.get(j, k) * b.get(k, j) * ens.weights[j] * Complex64::cis(-(e[j] - e[k]) * t);
            re.add(z.re);
            im.add(z.im);
        }
    }
    Ok(Complex64::new(re.value(), im.value()))
}

/// `½ tr(ρ{A, A(t)}) = Σ_jk (ρ_j+ρ_k)/2 |A_jk|² cos((E_j−E_k)t)`
pub fn symmetric_correlation(ens: &ThermalEnsemble, a: &EigenbasisOperator, t: f64) -> Result<f64> {
    direct_real(&autocorrelation_weights(ens, a, CorrelationKind::Symmetric)?, &ens.energies, t)
}

/// Kubo correlation normalized to 1 at `t = 0`.
pub fn kubo_correlation(ens: &ThermalEnsemble, a: &EigenbasisOperator, t: f64) -> Result<f64> {
    direct_real(&autocorrelation_weights(ens, a, CorrelationKind::Kubo)?, &ens.energies, t)
}

fn direct_real(w: &Mat<f64>, e: &[f64], t: f64) -> Result<f64> {
    let mut acc = KahanSum::default();
    for k in 0..w.ncols() {
        for j in 0..w.nrows() {
            acc.add(w[(j, k)] * ((e[j] - e[k]) * t).cos());
        }
    }
    Ok(acc.value())
}

/// Gibbs-difference weight `(ρ_k − ρ_j)/(E_j − E_k)`, written with `expm1`
/// on the side whose exponent is non-positive so it neither cancels nor
/// overflows.
#[inline]
pub(crate) fn kubo_pair_weight(beta: f64, rho_j: f64, rho_k: f64, ej: f64, ek: f64) -> f64 {
    let d = ej - ek;
    if d.abs() < KUBO_LIMIT_TOL {
        beta * rho_j
    } else if d > 0.0 {
        -rho_k * (-beta * d).exp_m1() / d
    } else {
        rho_j * (beta * d).exp_m1() / d
    }
}

/// Pair weights `W_jk` with `C(t) = Σ_jk W_jk e^{−i(E_j−E_k)t}` and
/// `Σ W = C(0)`. Kubo weights are normalized to sum to one.
pub fn autocorrelation_weights(
    ens: &ThermalEnsemble,
    a: &EigenbasisOperator,
    kind: CorrelationKind,
) -> Result<Mat<f64>> {
    let (mut w, norm) = autocorrelation_weights_raw(ens, a, kind)?;
    if kind == CorrelationKind::Kubo {
        w.col_iter_mut().for_each(|c| c.iter_mut().for_each(|x| *x /= norm));
    }
    Ok(w)
}

/// Unnormalized pair weights and their sum. For the plain and symmetric
/// kinds the sum is `C(0) = tr(ρA²)`; for Kubo it is
/// `Σ_jk (ρ_k − ρ_j)/(E_j − E_k) |A_jk|²`.
///
/// At `β = 0` the Kubo weights vanish identically; their `β → 0` shape
/// `ρ_j |A_jk|²` is used instead, which is what the normalization sees.
pub fn autocorrelation_weights_raw(
    ens: &ThermalEnsemble,
    a: &EigenbasisOperator,
    kind: CorrelationKind,
) -> Result<(Mat<f64>, f64)> {
    ens.check_dim(a)?;
    let n = ens.dim();
    let rho = &ens.weights;
    let e = &ens.energies;
    let sq = a.abs_sq();
    let w = match kind {
        CorrelationKind::Plain => Mat::from_fn(n, n, |j, k| rho[j] * sq[(j, k)]),
        CorrelationKind::Symmetric => Mat::from_fn(n, n, |j, k| 0.5 * (rho[j] + rho[k]) * sq[(j, k)]),
        CorrelationKind::Kubo => {
            let beta = ens.beta.ok_or(Error::NonThermalEnsemble)?;
            if beta == 0.0 {
                Mat::from_fn(n, n, |j, k| rho[j] * sq[(j, k)])
            } else {
                Mat::from_fn(n, n, |j, k| {
                    kubo_pair_weight(beta, rho[j], rho[k], e[j], e[k]) * sq[(j, k)]
                })
            }
        }
    };
    let norm = matrix_sum(&w);
    if !(norm > 0.0) {
        return Err(Error::ZeroNorm);
    }
    Ok((w, norm))
}

pub(crate) fn matrix_sum(w: &Mat<f64>) -> f64 {
    compensated_sum((0..w.ncols()).flat_map(|k| (0..w.nrows()).map(move |j| w[(j, k)])))
}

/// Complex pair weights `ρ_j A_jk B_kj` for a cross-correlation.
pub fn cross_weights(ens: &ThermalEnsemble, a: &EigenbasisOperator, b: &EigenbasisOperator) -> Result<ComplexMatrix> {
    check_pair(ens, a, b)?;
    let n = ens.dim();
    Ok(ComplexMatrix::from_fn(n, n, |j, k| a.get(j, k) * b.get(k, j) * ens.weights[j]))
}

fn warn_if_degenerate(energies: &[f64]) {
    let collisions = energies.windows(2).filter(|w| w[1] - w[0] < DEGENERACY_TOL).count();
    if collisions > 0 {
        warn!(
            "{collisions} energy spacings below {DEGENERACY_TOL:e}: the diagonal formula for C_inf \
             ignores degenerate off-diagonal terms"
        );
    }
}

/// `C_∞ = Σ_k ρ_kk A_kk B_kk`
pub fn infinite_time_average(ens: &ThermalEnsemble, a: &EigenbasisOperator, b: &EigenbasisOperator) -> Result<f64> {
    check_pair(ens, a, b)?;
    warn_if_degenerate(&ens.energies);
    let (da, db) = (a.diagonal(), b.diagonal());
    Ok(compensated_sum((0..ens.dim()).map(|k| ens.weights[k] * da[k] * db[k])))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// `1/(K+1) Σ_{i=0}^{K}` over the grid points.
    #[default]
    Running,
    /// Trapezoid rule for `(1/T)∫_0^T`.
    Trapezoid,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FluctuationReport {
    pub sigma_c_squared_exact: f64,
    pub theorem2_bound: f64,
    pub norm_a: f64,
    pub norm_b: f64,
    pub max_offdiag_product: f64,
    pub purity: f64,
    /// Time average of `(C(t) − C_∞)²` (real part) over `[0, horizon]`.
    pub time_domain_estimate: Option<f64>,
    /// Time average of `|C(t) − C_∞|²`, a different quantity, reported alongside.
    pub time_domain_abs_estimate: Option<f64>,
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    pub averaging: Option<Averaging>,
    /// `None` when no audit was supplied.
    pub gaps_nondegenerate: Option<bool>,
}

impl FluctuationReport {
    pub fn relative_time_domain_error(&self) -> Option<f64> {
        self.time_domain_estimate
            .map(|t| (t - self.sigma_c_squared_exact).abs() / self.sigma_c_squared_exact.abs())
    }
}

/// Exact `σ_C² = Σ_{j≠k} ρ_jρ_k |A_jk|² |B_jk|²` and the purity bound
/// `‖A‖‖B‖ max_{j≠k}|A_kj B_jk| tr ρ²`.
pub fn fluctuation_variance(
    ens: &ThermalEnsemble,
    a: &EigenbasisOperator,
    b: &EigenbasisOperator,
) -> Result<FluctuationReport> {
    check_pair(ens, a, b)?;
    let n = ens.dim();
    let rho = &ens.weights;
    let mut sum = KahanSum::default();
    let mut max_prod = 0.0f64;
    for k in 0..n {
        for j in 0..n {
            if j == k {
                continue;
            }
            let pa = a.get(j, k).norm_sqr();
            let pb = b.get(j, k).norm_sqr();
            sum.add(rho[j] * rho[k] * pa * pb);
            max_prod = max_prod.max((a.get(k, j) * b.get(j, k)).norm());
        }
    }
    let norm_a = a.operator_norm()?;
    let norm_b = b.operator_norm()?;
    Ok(FluctuationReport {
        sigma_c_squared_exact: sum.value(),
        theorem2_bound: norm_a * norm_b * max_prod * ens.purity,
        norm_a,
        norm_b,
        max_offdiag_product: max_prod,
        purity: ens.purity,
        time_domain_estimate: None,
        time_domain_abs_estimate: None,
        horizon: None,
        dt: None,
        averaging: None,
        gaps_nondegenerate: None,
    })
}

/// Adds time-domain estimates of `σ_C²` over `grid` to a report.
pub fn fluctuation_time_estimate(
    report: &mut FluctuationReport,
    ens: &ThermalEnsemble,
    a: &EigenbasisOperator,
    b: &EigenbasisOperator,
    grid: &TimeGrid,
    averaging: Averaging,
) -> Result<()> {
    let w = cross_weights(ens, a, b)?;
    let c_inf = infinite_time_average(ens, a, b)?;
    let k_last = grid.steps;
    let (mut sq, mut abs) = (KahanSum::default(), KahanSum::default());
    evaluate_grid(&w, &ens.energies, grid, |i, c| {
        let d = c - c_inf;
        let wgt = match averaging {
            Averaging::Running => 1.0,
            Averaging::Trapezoid if i == 0 || i == k_last => 0.5,
            Averaging::Trapezoid => 1.0,
        };
        sq.add(wgt * (d * d).re);
        abs.add(wgt * d.norm_sqr());
    });
    let denom = match averaging {
        Averaging::Running => (k_last + 1) as f64,
        Averaging::Trapezoid => k_last.max(1) as f64,
    };
    report.time_domain_estimate = Some(sq.value() / denom);
    report.time_domain_abs_estimate = Some(abs.value() / denom);
    report.horizon = Some(grid.t_max());
    report.dt = Some(grid.dt);
    report.averaging = Some(averaging);
    Ok(())
}

/// Uniform grid `t_k = k·Δt`, `k = 0..=steps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub dt: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, t_max: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        if !(t_max >= dt && t_max.is_finite()) {
            return Err(Error::InvalidArgument(format!("t_max must be at least dt, got {t_max}")));
        }
        Ok(Self {
            dt,
            steps: (t_max / dt).round() as usize,
        })
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn t_max(&self) -> f64 {
        self.time(self.steps)
    }
}

/// Evaluates `C(t_i) = Σ_jk W_jk e^{−i(E_j−E_k)t_i}` on the grid, feeding
/// `(i, C(t_i))` to `sink` in ascending order.
pub fn evaluate_grid(w: &ComplexMatrix, energies: &[f64], grid: &TimeGrid, mut sink: impl FnMut(usize, Complex64)) {
    let n = energies.len();
    let total = grid.len();
    let blocks: Vec<(usize, usize)> = (0..total)
        .step_by(BLOCK)
        .map(|s| (s, BLOCK.min(total - s)))
        .collect();
    for batch in blocks.chunks(BLOCKS_PER_BATCH) {
        let results: Vec<Vec<Complex64>> = batch
            .par_iter()
            .map(|&(start, len)| {
                let mut cos = Mat::<f64>::zeros(n, len);
                let mut sin = Mat::<f64>::zeros(n, len);
                for c in 0..len {
                    let t = grid.time(start + c);
                    for (k, &e) in energies.iter().enumerate() {
                        let (s, co) = (e * t).sin_cos();
                        cos[(k, c)] = co;
                        sin[(k, c)] = s;
                    }
                }
                let phases = ComplexMatrix::from_parts(cos, Some(sin));
                let y = w.matmul(&phases);
                let (pc, ps) = (phases.re(), phases.im().expect("sin block nonzero"));
                let (yr, yi) = (y.re(), y.im());
                (0..len)
                    .map(|c| {
                        let (mut re, mut im) = (0.0, 0.0);
                        for j in 0..n {
                            let (co, s) = (pc[(j, c)], ps[(j, c)]);
                            let (a, b) = (yr[(j, c)], yi.map_or(0.0, |m| m[(j, c)]));
                            re += co * a + s * b;
                            im += co * b - s * a;
                        }
                        Complex64::new(re, im)
                    })
                    .collect()
            })
            .collect();
        for ((start, _), vals) in batch.iter().zip(results) {
            for (c, v) in vals.into_iter().enumerate() {
                sink(start + c, v);
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorrelationSeries {
    pub kind: CorrelationKind,
    pub grid: TimeGrid,
    pub values: Vec<Complex64>,
    pub c_infinity: f64,
    pub c_zero: f64,
}

/// Autocorrelation series of `A` of the given kind over `grid`.
pub fn correlation_series(
    ens: &ThermalEnsemble,
    a: &EigenbasisOperator,
    kind: CorrelationKind,
    grid: &TimeGrid,
) -> Result<CorrelationSeries> {
    let w = autocorrelation_weights(ens, a, kind)?;
    warn_if_degenerate(&ens.energies);
    let c_zero = matrix_sum(&w);
    let c_infinity = compensated_sum((0..w.nrows()).map(|k| w[(k, k)]));
    series_from_weights(ComplexMatrix::from_real(w), &ens.energies, kind, grid, c_zero, c_infinity)
}

/// Cross-correlation `tr(ρ A(t) B)` over `grid`.
pub fn cross_correlation_series(
    ens: &ThermalEnsemble,
    a: &EigenbasisOperator,
    b: &EigenbasisOperator,
    grid: &TimeGrid,
) -> Result<CorrelationSeries> {
    let w = cross_weights(ens, a, b)?;
    let n = w.nrows();
    let wr = &w;
    let c_zero = compensated_sum((0..n).flat_map(|k| (0..n).map(move |j| wr.get(j, k).re)));
    let c_infinity = infinite_time_average(ens, a, b)?;
    series_from_weights(w, &ens.energies, CorrelationKind::Plain, grid, c_zero, c_infinity)
}

fn series_from_weights(
    w: ComplexMatrix,
    energies: &[f64],
    kind: CorrelationKind,
    grid: &TimeGrid,
    c_zero: f64,
    c_infinity: f64,
) -> Result<CorrelationSeries> {
    let mut values = Vec::with_capacity(grid.len());
    evaluate_grid(&w, energies, grid, |_, v| values.push(v));
    let series = CorrelationSeries {
        kind,
        grid: *grid,
        values,
        c_infinity,
        c_zero,
    };
    Ok(series)
}

impl CorrelationSeries {
    /// Checks the boundedness / reality invariants of an autocorrelation series.
    pub fn check_autocorrelation(&self) -> Result<()> {
        match self.kind {
            CorrelationKind::Plain => {
                if let Some((i, v)) = self
                    .values
                    .iter()
                    .enumerate()
                    .find(|(_, v)| v.norm() > self.c_zero + 1e-9)
                {
                    return Err(Error::invariant(
                        "series.bounded",
                        format!("|C(t_{i})| = {} exceeds C(0) = {}", v.norm(), self.c_zero),
                    ));
                }
            }
            CorrelationKind::Symmetric | CorrelationKind::Kubo => {
                if let Some((i, v)) = self.values.iter().enumerate().find(|(_, v)| v.im.abs() > 1e-10) {
                    return Err(Error::invariant(
                        "series.real",
                        format!("Im C(t_{i}) = {:e}", v.im),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(|k| self.grid.time(k))
    }
}

/// `c̄(k) = 1/(k+1) Σ_{i≤k} |C(t_i) − C_∞|²`
pub fn running_time_average(series: &CorrelationSeries) -> Result<Vec<f64>> {
    running_average_of(&series.values, series.c_infinity)
}

pub fn running_average_of(values: &[Complex64], c_infinity: f64) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::Empty("correlation series"));
    }
    let mut acc = KahanSum::default();
    Ok(values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            acc.add((v - c_infinity).norm_sqr());
            acc.value() / (i + 1) as f64
        })
        .collect())
}

/// Writes `t,re,im,running_avg` with 17 significant digits, plus a JSON
/// sidecar (`<path>.json`) holding `meta`.
pub fn write_series_csv(path: &Path, series: &CorrelationSeries, meta: &impl Serialize) -> Result<()> {
    let avg = running_time_average(series)?;
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(["t", "re", "im", "running_avg"])?;
    for (k, (v, r)) in series.values.iter().zip(&avg).enumerate() {
        w.write_record([
            fmt17(series.grid.time(k)),
            fmt17(v.re),
            fmt17(v.im),
            fmt17(*r),
        ])?;
    }
    w.flush()?;
    let mut side = BufWriter::new(File::create(path.with_extension("json"))?);
    serde_json::to_writer_pretty(&mut side, meta)?;
    side.flush()?;
    Ok(())
}

/// 17-significant-digit decimal, enough to round-trip any `f64`.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}
