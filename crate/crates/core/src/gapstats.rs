//! Gap-weight distributions, window statistics `ξ_p`, `a(ε)`, `δ(ε)`, `σ_G`,
//! the equilibration bound, the uniform-average property check and
//! coarse-grained histograms.
//!
//! A distribution is the flat list of pairs `(G_α, p_α)` with
//! `G_α = E_j − E_k` and `p_α ∝ W_jk`, where `W` is the pair-weight matrix of
//! the matching correlation function, sorted by gap. Window weights are
//! differences of one monotone prefix-sum array, so every window sum (exact
//! or sampled) is computed by the same arithmetic.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlators::{autocorrelation_weights_raw, fmt17, CorrelationKind};
use crate::error::{Error, Result};
use crate::linalg::{compensated_sum, ComplexMatrix, KahanSum};
use crate::spectral::{EigenbasisOperator, Spectrum, ThermalEnsemble};
use crate::spinchain::DenseOperator;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapKind {
    /// `v_α = ρ_jj |A_jk|² / C(0)`
    PlainV,
    /// `v^s_α = (ρ_jj + ρ_kk)/2 · |A_jk|² / C_s(0)`
    SymmetricV,
    /// Kubo weights `w_α`.
    KuboW,
}

impl GapKind {
    pub const ALL: [GapKind; 3] = [GapKind::PlainV, GapKind::SymmetricV, GapKind::KuboW];

    pub fn correlation_kind(self) -> CorrelationKind {
        match self {
            GapKind::PlainV => CorrelationKind::Plain,
            GapKind::SymmetricV => CorrelationKind::Symmetric,
            GapKind::KuboW => CorrelationKind::Kubo,
        }
    }

    fn code(self) -> u32 {
        match self {
            GapKind::PlainV => 0,
            GapKind::SymmetricV => 1,
            GapKind::KuboW => 2,
        }
    }
}

/// What to do with the `j = k` pairs, which all sit at `G = 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroGaps {
    /// Keep every pair; weights normalized by `C(0)`.
    #[default]
    Keep,
    /// Drop the `j = k` pairs and renormalize by `C(0) − Σ_k W_kk`. Those
    /// pairs are exactly the part of `C(t)` that `C_∞` subtracts, so the
    /// bound for `|C − C_∞|²` still holds with this distribution.
    DropDiagonal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapOptions {
    /// Entries with `p_α < cutoff` are dropped into `discarded_weight`.
    pub cutoff: f64,
    pub zero_gaps: ZeroGaps,
}

impl Default for GapOptions {
    fn default() -> Self {
        Self {
            cutoff: 0.0,
            zero_gaps: ZeroGaps::Keep,
        }
    }
}

impl GapOptions {
    /// Default options for a chain of length `l`: a `1e-16` cutoff from
    /// `L = 14` on, none below.
    pub fn for_length(l: usize) -> Self {
        Self {
            cutoff: if l >= 14 { 1e-16 } else { 0.0 },
            ..Self::default()
        }
    }

    pub fn with_zero_gaps(mut self, z: ZeroGaps) -> Self {
        self.zero_gaps = z;
        self
    }
}

#[derive(Clone, Debug)]
pub struct GapDistribution {
    pub kind: GapKind,
    pub zero_gaps: ZeroGaps,
    /// Ascending gap values.
    pub gaps: Vec<f64>,
    pub weights: Vec<f64>,
    /// `prefix[i] = Σ_{α<i} p_α`, plain running sums (monotone).
    prefix: Vec<f64>,
    pub total_weight: f64,
    pub discarded_weight: f64,
    /// Unnormalized mass the weights were divided by.
    pub normalizer: f64,
    /// `Σ_k W_kk / C(0)`: mass of the `j = k` pairs relative to the full sum.
    pub zero_gap_fraction: f64,
}

/// Builds the gap distribution of `A` for `kind`.
pub fn build_gap_distribution(
    ens: &ThermalEnsemble,
    a: &EigenbasisOperator,
    kind: GapKind,
    opts: GapOptions,
) -> Result<GapDistribution> {
    let (w, full) = autocorrelation_weights_raw(ens, a, kind.correlation_kind())?;
    let n = w.nrows();
    let diag = compensated_sum((0..n).map(|k| w[(k, k)]));
    let drop_diag = opts.zero_gaps == ZeroGaps::DropDiagonal;
    let normalizer = if drop_diag { full - diag } else { full };
    if !(normalizer > 0.0) {
        return Err(Error::ZeroNorm);
    }
    let e = &ens.energies;
    let columns: Vec<Vec<(f64, f64)>> = (0..n)
        .into_par_iter()
        .map(|k| {
            (0..n)
                .filter(|&j| !(drop_diag && j == k))
                .map(|j| (e[j] - e[k], w[(j, k)] / normalizer))
                .collect()
        })
        .collect();
    let entries: Vec<(f64, f64)> = columns.into_iter().flatten().collect();
    let mut dist = GapDistribution::from_entries_with(kind, entries, opts.cutoff)?;
    dist.zero_gaps = opts.zero_gaps;
    dist.normalizer = normalizer;
    dist.zero_gap_fraction = diag / full;
    Ok(dist)
}

impl GapDistribution {
    /// Distribution from explicit `(gap, weight)` pairs whose weights already
    /// sum to one.
    pub fn from_entries(kind: GapKind, entries: Vec<(f64, f64)>) -> Result<Self> {
        Self::from_entries_with(kind, entries, 0.0)
    }

    fn from_entries_with(kind: GapKind, mut entries: Vec<(f64, f64)>, cutoff: f64) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Empty("gap distribution"));
        }
        if entries.iter().any(|&(g, p)| !g.is_finite() || !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidArgument("gaps must be finite and weights nonnegative".into()));
        }
        let mut discarded = KahanSum::default();
        if cutoff > 0.0 {
            entries.retain(|&(_, p)| {
                let keep = p >= cutoff;
                if !keep {
                    discarded.add(p);
                }
                keep
            });
            if entries.is_empty() {
                return Err(Error::Empty("gap distribution after cutoff"));
            }
        }
        entries.par_sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let (gaps, weights): (Vec<f64>, Vec<f64>) = entries.into_iter().unzip();
        let mut prefix = Vec::with_capacity(weights.len() + 1);
        let mut run = 0.0;
        prefix.push(0.0);
        for &p in &weights {
            run += p;
            prefix.push(run);
        }
        Ok(Self {
            kind,
            zero_gaps: ZeroGaps::Keep,
            total_weight: compensated_sum(weights.iter().copied()),
            gaps,
            weights,
            prefix,
            discarded_weight: discarded.value(),
            normalizer: 1.0,
            zero_gap_fraction: f64::NAN,
        })
    }

    pub fn len(&self) -> usize {
        self.gaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaps.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.gaps.iter().copied().zip(self.weights.iter().copied())
    }

    /// Weight in `[gaps[lo], gaps[lo] + x]`, and the index one past the window.
    #[inline]
    fn window_from(&self, lo: usize, x: f64, hint: usize) -> (f64, usize) {
        let top = self.gaps[lo] + x;
        let mut hi = hint.max(lo);
        while hi < self.gaps.len() && self.gaps[hi] <= top {
            hi += 1;
        }
        (self.prefix[hi] - self.prefix[lo], hi)
    }

    /// `(mean, standard deviation)` of the gap under the kept weights.
    pub fn moments(&self) -> (f64, f64) {
        let t = self.total_weight;
        let mean = compensated_sum(self.entries().map(|(g, p)| p * g)) / t;
        let var = compensated_sum(self.entries().map(|(g, p)| p * (g - mean) * (g - mean))) / t;
        (mean, var.max(0.0).sqrt())
    }

    pub fn sigma_g(&self) -> f64 {
        self.moments().1
    }

    /// Second raw moment `Σ p G² / Σ p`.
    pub fn second_moment(&self) -> f64 {
        compensated_sum(self.entries().map(|(g, p)| p * g * g)) / self.total_weight
    }

    pub fn max_weight(&self) -> f64 {
        self.weights.iter().copied().fold(0.0, f64::max)
    }
}

/// `ξ_p(x) = max_λ Σ_{G_α ∈ [G_λ, G_λ + x]} p_α` by a two-pointer sweep.
pub fn xi_exact(dist: &GapDistribution, x: f64) -> Result<f64> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::InvalidArgument(format!("window width must be nonnegative, got {x}")));
    }
    let g = &dist.gaps;
    let mut best = 0.0f64;
    let mut hi = 0;
    for lo in 0..g.len() {
        if lo > 0 && g[lo] == g[lo - 1] {
            continue; // anchor each distinct value once, at its first entry
        }
        let (w, h) = dist.window_from(lo, x, hi);
        hi = h;
        best = best.max(w);
    }
    Ok(best)
}

/// Sampled `ξ_p(x)`: window centres `c ~ N(μ_G, σ_G)`, anchor `c − x/2`
/// snapped up to the first existing gap `G_λ ≥ c − x/2`, window
/// `[G_λ, G_λ + x]`. Sample `i` draws from ChaCha8 stream `i` of `seed`,
/// so the result is independent of the worker count.
pub fn xi_monte_carlo(dist: &GapDistribution, x: f64, samples: usize, seed: u64) -> Result<f64> {
    if dist.is_empty() {
        return Err(Error::Empty("gap distribution"));
    }
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be at least 1".into()));
    }
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::InvalidArgument(format!("window width must be nonnegative, got {x}")));
    }
    let (mu, sigma) = dist.moments();
    let best = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            let z: f64 = rng.sample(StandardNormal);
            let anchor = mu + sigma * z - 0.5 * x;
            let lo = dist.gaps.partition_point(|&g| g < anchor);
            if lo == dist.len() {
                0.0
            } else {
                dist.window_from(lo, x, lo).0
            }
        })
        .reduce(|| 0.0, f64::max);
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum WindowMethod {
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub epsilon: f64,
    pub xi_of_epsilon: f64,
    /// `ξ(ε) σ_G / ε`; `None` when `σ_G = 0`.
    pub a: Option<f64>,
    /// `ξ(ε)` plus any weight discarded by the cutoff.
    pub delta: f64,
    pub sigma_g: f64,
    pub method: WindowMethod,
}

pub fn window_stats(dist: &GapDistribution, epsilon: f64, method: WindowMethod) -> Result<WindowStats> {
    window_stats_with_sigma(dist, epsilon, method, dist.sigma_g())
}

fn window_stats_with_sigma(dist: &GapDistribution, epsilon: f64, method: WindowMethod, sigma_g: f64) -> Result<WindowStats> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    let xi = match method {
        WindowMethod::Exact => xi_exact(dist, epsilon)?,
        WindowMethod::MonteCarlo { samples, seed } => xi_monte_carlo(dist, epsilon, samples, seed)?,
    };
    Ok(WindowStats {
        epsilon,
        xi_of_epsilon: xi,
        a: (sigma_g > 0.0).then(|| xi * sigma_g / epsilon),
        delta: xi + dist.discarded_weight,
        sigma_g,
        method,
    })
}

/// `3π (a/(σ_G T) + δ)`
pub fn bound_rhs(stats: &WindowStats, t: f64) -> Result<f64> {
    let a = stats.a.ok_or(Error::DegenerateSpread)?;
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("T must be positive, got {t}")));
    }
    Ok(3.0 * PI * (a / (stats.sigma_g * t) + stats.delta))
}

/// Largest violation of `ξ(x) ≤ (a/σ_G) x + δ` over `xs` (≤ 0 means it holds).
pub fn envelope_violation(dist: &GapDistribution, stats: &WindowStats, xs: &[f64]) -> Result<f64> {
    let a = stats.a.ok_or(Error::DegenerateSpread)?;
    let slope = a / stats.sigma_g;
    xs.par_iter()
        .map(|&x| Ok(xi_exact(dist, x)? - (slope * x + stats.delta)))
        .try_reduce(|| f64::NEG_INFINITY, |p, q| Ok(p.max(q)))
}

/// Log-spaced points `lo·σ ... hi·σ`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpsilonSweep {
    pub sigma_g: f64,
    pub points: Vec<WindowStats>,
}

/// Exact window stats on `n` log-spaced `ε ∈ [lo, hi]·σ_G`.
pub fn epsilon_sweep(dist: &GapDistribution, lo: f64, hi: f64, n: usize) -> Result<EpsilonSweep> {
    let sigma_g = dist.sigma_g();
    if !(sigma_g > 0.0) {
        return Err(Error::DegenerateSpread);
    }
    let points = log_grid(lo * sigma_g, hi * sigma_g, n)
        .into_par_iter()
        .map(|eps| window_stats_with_sigma(dist, eps, WindowMethod::Exact, sigma_g))
        .collect::<Result<Vec<_>>>()?;
    Ok(EpsilonSweep { sigma_g, points })
}

/// Default sweep: 200 points over `[1e-4, 10]·σ_G`.
pub fn default_epsilon_sweep(dist: &GapDistribution) -> Result<EpsilonSweep> {
    epsilon_sweep(dist, 1e-4, 10.0, 200)
}

impl EpsilonSweep {
    /// Point with the smallest `δ`; ties go to the largest `ε`.
    pub fn min_delta(&self) -> &WindowStats {
        self.points
            .iter()
            .rev()
            .min_by(|a, b| a.delta.total_cmp(&b.delta))
            .expect("sweep is nonempty")
    }

    /// Point minimizing the bound at time `t`.
    pub fn best_at(&self, t: f64) -> &WindowStats {
        self.points
            .iter()
            .min_by(|a, b| {
                let ra = bound_rhs(a, t).unwrap_or(f64::INFINITY);
                let rb = bound_rhs(b, t).unwrap_or(f64::INFINITY);
                ra.total_cmp(&rb)
            })
            .expect("sweep is nonempty")
    }

    /// First point with `δ ≤ max_delta` and `a ≤ max_a`.
    pub fn find(&self, max_delta: f64, max_a: f64) -> Option<&WindowStats> {
        self.points
            .iter()
            .find(|p| p.delta <= max_delta && p.a.is_some_and(|a| a <= max_a))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epsilon", "xi", "a", "delta", "sigma_g"])?;
        for p in &self.points {
            w.write_record([
                fmt17(p.epsilon),
                fmt17(p.xi_of_epsilon),
                p.a.map_or_else(|| "nan".into(), fmt17),
                fmt17(p.delta),
                fmt17(p.sigma_g),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundReport {
    pub epsilon: f64,
    pub a: f64,
    pub delta: f64,
    pub sigma_g: f64,
    pub times: Vec<f64>,
    /// Running average of `|C(t) − C_∞|² / C(0)²`.
    pub lhs: Vec<f64>,
    /// `3π(a/(σ_G t) + δ)`; `+∞` at `t = 0`.
    pub rhs: Vec<f64>,
}

impl BoundReport {
    pub fn new(stats: &WindowStats, times: Vec<f64>, lhs: Vec<f64>) -> Result<Self> {
        let a = stats.a.ok_or(Error::DegenerateSpread)?;
        if times.len() != lhs.len() {
            return Err(Error::DimensionMismatch {
                expected: times.len(),
                found: lhs.len(),
            });
        }
        let rhs = times
            .iter()
            .map(|&t| if t > 0.0 { bound_rhs(stats, t) } else { Ok(f64::INFINITY) })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            epsilon: stats.epsilon,
            a,
            delta: stats.delta,
            sigma_g: stats.sigma_g,
            times,
            lhs,
            rhs,
        })
    }

    /// Grid indices where `lhs > rhs`.
    pub fn violations(&self) -> Vec<usize> {
        (0..self.lhs.len()).filter(|&i| !(self.lhs[i] <= self.rhs[i])).collect()
    }

    /// `rhs/lhs` at the grid point nearest `t`.
    pub fn ratio_at(&self, t: f64) -> f64 {
        let i = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map_or(0, |(i, _)| i);
        self.rhs[i] / self.lhs[i]
    }

    pub fn write_csv(&self, path: &Path, stride: usize) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "lhs", "rhs"])?;
        let last = self.times.len().saturating_sub(1);
        for i in (0..self.times.len()).filter(|&i| i % stride.max(1) == 0 || i == last) {
            w.write_record([fmt17(self.times[i]), fmt17(self.lhs[i]), fmt17(self.rhs[i])])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Inputs for the commutator-trace forms of `σ_G`, all in the computational basis.
pub struct CommutatorInputs<'a> {
    pub hamiltonian: &'a DenseOperator,
    pub observable: &'a DenseOperator,
    /// `ρ = V diag(ρ_jj) V†`
    pub density: &'a ComplexMatrix,
}

/// `V diag(w) V†`
pub fn density_matrix(s: &Spectrum, ens: &ThermalEnsemble) -> Result<ComplexMatrix> {
    if s.dim() != ens.dim() {
        return Err(Error::DimensionMismatch {
            expected: s.dim(),
            found: ens.dim(),
        });
    }
    let n = s.dim();
    let v = &s.vectors;
    let re = Mat::from_fn(n, n, |i, j| v.re()[(i, j)] * ens.weights[j]);
    let im = v.im().map(|im| Mat::from_fn(n, n, |i, j| im[(i, j)] * ens.weights[j]));
    Ok(ComplexMatrix::from_parts(re, im).matmul(&v.adjoint()))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SigmaCheck {
    pub kind: GapKind,
    pub sigma_moments: f64,
    pub sigma_commutator: f64,
    /// First moment from the commutator form (the symmetric and Kubo forms
    /// assume it vanishes).
    pub first_moment: f64,
    pub abs_diff: f64,
}

/// Commutator-trace `σ_G` for `dist`'s kind, checked against the moment
/// formula to `tol`.
///
/// * plain: `tr(ρ[A,H][H,A])/N − (tr(ρ[H,A]A)/N)²`
/// * symmetric: `(tr(ρ[A,H][H,A]) + tr([H,A]ρ[A,H]))/2N`, first moment asserted to vanish
/// * Kubo: `tr([A,ρ][A,H])/N`, first moment asserted to vanish
///
/// `N` is the mass the distribution was normalized by; the dropped `G = 0`
/// entries do not contribute to either moment.
pub fn sigma_g_cross_check(dist: &GapDistribution, ops: &CommutatorInputs<'_>, tol: f64) -> Result<SigmaCheck> {
    if dist.discarded_weight > 0.0 {
        return Err(Error::InvalidArgument(
            "commutator cross-check needs a distribution without cutoff".into(),
        ));
    }
    let h = &ops.hamiltonian.matrix;
    let a = &ops.observable.matrix;
    let rho = ops.density;
    let n_norm = dist.normalizer;
    let ah = a.commutator(h);
    let ha = h.commutator(a);
    let (m2, m1) = match dist.kind {
        GapKind::PlainV => {
            let m2 = rho.matmul(&ah).matmul(&ha).trace().re / n_norm;
            let m1 = rho.matmul(&ha).matmul(a).trace().re / n_norm;
            (m2, m1)
        }
        GapKind::SymmetricV => {
            // ρ on either side of the pair, averaged.
            let left = rho.matmul(&ah).matmul(&ha).trace().re;
            let right = ha.matmul(rho).matmul(&ah).trace().re;
            let m1 = rho.matmul(&ha).matmul(a).trace().re + rho.matmul(a).matmul(&ha).trace().re;
            (0.5 * (left + right) / n_norm, 0.5 * m1 / n_norm)
        }
        GapKind::KuboW => {
            let a_rho = a.commutator(rho);
            let m2 = a_rho.matmul(&ah).trace().re / n_norm;
            // First moment of the Kubo weights, Σ_jk (ρ_k − ρ_j)|A_jk|², vanishes by symmetry.
            let m1 = a_rho.matmul(a).trace().re / n_norm;
            (m2, m1)
        }
    };
    let var = match dist.kind {
        GapKind::PlainV => m2 - m1 * m1,
        GapKind::SymmetricV => {
            if m1.abs() > 1e-10 {
                return Err(Error::invariant(
                    "sigma_g.symmetric_first_moment",
                    format!("first moment {m1:e} does not vanish"),
                ));
            }
            m2
        }
        GapKind::KuboW => {
            if m1.abs() > 1e-10 {
                return Err(Error::invariant(
                    "sigma_g.kubo_first_moment",
                    format!("first moment {m1:e} does not vanish"),
                ));
            }
            m2
        }
    };
    let sigma_commutator = var.max(0.0).sqrt();
    let sigma_moments = dist.sigma_g();
    let abs_diff = (sigma_commutator - sigma_moments).abs();
    if abs_diff > tol {
        return Err(Error::invariant(
            "sigma_g.commutator",
            format!("{:?}: moments {sigma_moments} vs commutator {sigma_commutator}", dist.kind),
        ));
    }
    Ok(SigmaCheck {
        kind: dist.kind,
        sigma_moments,
        sigma_commutator,
        first_moment: m1,
        abs_diff,
    })
}

/// `f(t) = |Σ_α p_α e^{iG_α t}|²`
pub fn lemma2_f(dist: &GapDistribution, t: f64) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (g, p) in dist.entries() {
        let (s, c) = (g * t).sin_cos();
        re += p * c;
        im += p * s;
    }
    re * re + im * im
}

/// Exact `⟨f⟩_T = Σ_αβ p_α p_β sinc((G_α − G_β) T)`, `sinc(x) = sin(x)/x`.
pub fn lemma2_exact_average(dist: &GapDistribution, t: f64) -> f64 {
    let mut acc = KahanSum::default();
    for (ga, pa) in dist.entries() {
        for (gb, pb) in dist.entries() {
            let x = (ga - gb) * t;
            let s = if x.abs() < 1e-8 { 1.0 - x * x / 6.0 } else { x.sin() / x };
            acc.add(pa * pb * s);
        }
    }
    acc.value()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Lemma2Point {
    pub t: f64,
    /// Simpson average with step `h`.
    pub average: f64,
    /// Simpson average with step `h/2`.
    pub average_refined: f64,
    pub step: f64,
    pub xi: f64,
    pub bound: f64,
    pub violated: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Lemma2Report {
    pub points: Vec<Lemma2Point>,
    pub violations: usize,
    pub max_refinement_change: f64,
}

/// Simpson averages of `f` on `[0, T]` at steps `h` and `h/2`, with
/// `h ≤ min(0.01, 0.01/max|G|)`.
fn simpson_pair(dist: &GapDistribution, t_max: f64) -> (f64, f64, f64) {
    let gmax = dist.gaps.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let h_cap = if gmax > 0.0 { 0.01f64.min(0.01 / gmax) } else { 0.01 };
    let mut n = (t_max / h_cap).ceil() as usize;
    n = n.max(2);
    n += n % 2;
    let h = t_max / n as f64;
    let fine = 2 * n;
    let hf = t_max / fine as f64;
    // Phases advance by one fine step per point, re-anchored every 512 steps.
    let steps: Vec<(f64, f64)> = dist.gaps.iter().map(|g| (g * hf).sin_cos()).collect();
    let mut ph: Vec<(f64, f64)> = vec![(0.0, 1.0); dist.len()];
    let (mut coarse, mut refined) = (KahanSum::default(), KahanSum::default());
    for i in 0..=fine {
        if i % 512 == 0 {
            let t = i as f64 * hf;
            for (p, g) in ph.iter_mut().zip(&dist.gaps) {
                *p = (g * t).sin_cos();
            }
        }
        let (mut re, mut im) = (0.0, 0.0);
        for (&(s, c), &p) in ph.iter().zip(&dist.weights) {
            re += p * c;
            im += p * s;
        }
        let f = re * re + im * im;
        let wf = if i == 0 || i == fine { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        refined.add(wf * f);
        if i % 2 == 0 {
            let j = i / 2;
            let wc = if j == 0 || j == n { 1.0 } else if j % 2 == 1 { 4.0 } else { 2.0 };
            coarse.add(wc * f);
        }
        for (p, &(ds, dc)) in ph.iter_mut().zip(&steps) {
            let (s, c) = *p;
            *p = (s * dc + c * ds, c * dc - s * ds);
        }
    }
    let avg_coarse = coarse.value() * h / 3.0 / t_max;
    let avg_fine = refined.value() * hf / 3.0 / t_max;
    (avg_coarse, avg_fine, h)
}

/// Checks `⟨f⟩_T ≤ 3π ξ_p(1/T)` for each `T`.
pub fn lemma2_property_check(dist: &GapDistribution, t_grid: &[f64]) -> Result<Lemma2Report> {
    if (dist.total_weight - 1.0).abs() > 1e-10 || dist.discarded_weight > 0.0 {
        return Err(Error::InvalidArgument(
            "the property check needs a normalized distribution without cutoff".into(),
        ));
    }
    let mut points = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        if !(t > 0.0) {
            return Err(Error::InvalidArgument(format!("T must be positive, got {t}")));
        }
        let (average, average_refined, step) = simpson_pair(dist, t);
        let xi = xi_exact(dist, 1.0 / t)?;
        let bound = 3.0 * PI * xi;
        points.push(Lemma2Point {
            t,
            average,
            average_refined,
            step,
            xi,
            bound,
            violated: average_refined > bound,
        });
    }
    Ok(Lemma2Report {
        violations: points.iter().filter(|p| p.violated).count(),
        max_refinement_change: points
            .iter()
            .map(|p| (p.average - p.average_refined).abs())
            .fold(0.0, f64::max),
        points,
    })
}

/// Random distribution: `1..=max_gaps` gaps uniform in `[−g, g]`, flat
/// Dirichlet weights (normalized Exp(1) draws).
pub fn random_distribution(rng: &mut impl Rng, max_gaps: usize, g: f64) -> Result<GapDistribution> {
    let m = rng.random_range(1..=max_gaps);
    let gaps: Vec<f64> = (0..m).map(|_| rng.random_range(-g..=g)).collect();
    let raw: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let z = compensated_sum(raw.iter().copied());
    GapDistribution::from_entries(GapKind::PlainV, gaps.into_iter().zip(raw.into_iter().map(|w| w / z)).collect())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Lemma2SuiteReport {
    pub distributions: usize,
    pub t_grid: Vec<f64>,
    pub seed: u64,
    pub violations: usize,
    pub max_refinement_change: f64,
    /// Largest `⟨f⟩_T / (3π ξ(1/T))` seen.
    pub max_ratio: f64,
}

/// Property checks on `count` random distributions; distribution `i` is
/// drawn from ChaCha8 stream `i` of `seed`.
pub fn lemma2_suite_reports(count: usize, max_gaps: usize, t_grid: &[f64], seed: u64) -> Result<Vec<Lemma2Report>> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            let dist = random_distribution(&mut rng, max_gaps, 5.0)?;
            lemma2_property_check(&dist, t_grid)
        })
        .collect()
}

pub fn lemma2_suite(count: usize, max_gaps: usize, t_grid: &[f64], seed: u64) -> Result<Lemma2SuiteReport> {
    let reports = lemma2_suite_reports(count, max_gaps, t_grid, seed)?;
    Ok(Lemma2SuiteReport::from_reports(&reports, t_grid, seed))
}

impl Lemma2SuiteReport {
    pub fn from_reports(reports: &[Lemma2Report], t_grid: &[f64], seed: u64) -> Self {
        let points = reports.iter().flat_map(|r| &r.points);
        Self {
            distributions: reports.len(),
            t_grid: t_grid.to_vec(),
            seed,
            violations: reports.iter().map(|r| r.violations).sum(),
            max_refinement_change: reports.iter().map(|r| r.max_refinement_change).fold(0.0, f64::max),
            max_ratio: points.map(|p| p.average_refined / p.bound).fold(0.0, f64::max),
        }
    }
}

/// Two readings of the intermediate constant in the uniform-average bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaReading {
    /// `r = e^{α/2}`
    AsWritten,
    /// `r = e^{α²/2}`, the Gaussian characteristic-function reading.
    Gaussian,
}

/// `κ(α) = √(2π) α e^{1/(8α²)} Σ_{n≥0} r^{−n²}`
pub fn lemma2_kappa(alpha: f64, reading: KappaReading) -> f64 {
    let gamma = (2.0 * PI).sqrt() * alpha * (1.0 / (8.0 * alpha * alpha)).exp();
    let ln_r = match reading {
        KappaReading::AsWritten => alpha / 2.0,
        KappaReading::Gaussian => alpha * alpha / 2.0,
    };
    let mut sum = 0.0;
    for n in 0.. {
        let term = (-(n as f64).powi(2) * ln_r).exp();
        sum += term;
        if term < 1e-17 * sum || n > 100_000 {
            break;
        }
    }
    gamma * sum
}

/// Golden-section minimum of `κ` over `α ∈ [lo, hi]`; returns `(α, κ)`.
pub fn minimize_kappa(reading: KappaReading, lo: f64, hi: f64) -> (f64, f64) {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (lemma2_kappa(c, reading), lemma2_kappa(d, reading));
    while b - a > 1e-10 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = lemma2_kappa(c, reading);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = lemma2_kappa(d, reading);
        }
    }
    let x = 0.5 * (a + b);
    (x, lemma2_kappa(x, reading))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Histogram {
    pub g_min: f64,
    pub g_max: f64,
    pub width: f64,
    pub weights: Vec<f64>,
}

/// Equal-width bins over `[G_min, G_max]`, right-open except the last.
pub fn coarse_grain(dist: &GapDistribution, n_bins: usize) -> Result<Histogram> {
    if dist.is_empty() {
        return Err(Error::Empty("gap distribution"));
    }
    if n_bins == 0 {
        return Err(Error::InvalidArgument("n_bins must be at least 1".into()));
    }
    let g_min = dist.gaps[0];
    let g_max = dist.gaps[dist.len() - 1];
    let width = (g_max - g_min) / n_bins as f64;
    let mut sums = vec![KahanSum::default(); n_bins];
    for (g, p) in dist.entries() {
        let b = if width > 0.0 {
            (((g - g_min) / width) as usize).min(n_bins - 1)
        } else {
            0
        };
        sums[b].add(p);
    }
    Ok(Histogram {
        g_min,
        g_max,
        width,
        weights: sums.iter().map(KahanSum::value).collect(),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Unimodality {
    pub peak_bin: usize,
    pub peak_center: f64,
    /// Adjacent smoothed pairs that break monotone rise/fall around the peak.
    pub violations: usize,
    pub peak_interior: bool,
    pub unimodal: bool,
}

impl Histogram {
    pub fn n_bins(&self) -> usize {
        self.weights.len()
    }

    pub fn center(&self, b: usize) -> f64 {
        self.g_min + (b as f64 + 0.5) * self.width
    }

    pub fn total(&self) -> f64 {
        compensated_sum(self.weights.iter().copied())
    }

    /// Centered moving average over `window` bins, truncated at the edges.
    pub fn smoothed(&self, window: usize) -> Vec<f64> {
        let n = self.n_bins();
        let half = window / 2;
        (0..n)
            .map(|i| {
                let lo = i.saturating_sub(half);
                let hi = (i + half).min(n - 1);
                compensated_sum(self.weights[lo..=hi].iter().copied()) / (hi - lo + 1) as f64
            })
            .collect()
    }

    /// Peak of the smoothed profile and monotone decay toward both edges.
    pub fn unimodality(&self, window: usize) -> Unimodality {
        let s = self.smoothed(window);
        let peak = (0..s.len()).fold(0, |m, i| if s[i] > s[m] { i } else { m });
        let rise = (0..peak).filter(|&i| s[i] > s[i + 1]).count();
        let fall = (peak..s.len().saturating_sub(1)).filter(|&i| s[i + 1] > s[i]).count();
        let interior = peak > 0 && peak + 1 < s.len();
        let contains_zero = self.center(peak) - self.width / 2.0 <= 0.0 && 0.0 <= self.center(peak) + self.width / 2.0;
        Unimodality {
            peak_bin: peak,
            peak_center: self.center(peak),
            violations: rise + fall,
            peak_interior: interior,
            unimodal: rise + fall == 0 && (interior || contains_zero),
        }
    }

    pub fn write_csv(&self, path: &Path, window: usize) -> Result<()> {
        let s = self.smoothed(window);
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["bin", "g_lo", "g_hi", "weight", "smoothed"])?;
        for (b, (p, sm)) in self.weights.iter().zip(&s).enumerate() {
            w.write_record([
                b.to_string(),
                fmt17(self.g_min + b as f64 * self.width),
                fmt17(self.g_min + (b + 1) as f64 * self.width),
                fmt17(*p),
                fmt17(*sm),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

const DIST_MAGIC: &[u8; 8] = b"CFGAPDST";

/// Binary dump: magic, version u32, kind u32, count u64, total f64,
/// discarded f64, then `(gap, weight)` pairs, all little-endian.
pub fn write_distribution(path: &Path, dist: &GapDistribution) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(DIST_MAGIC)?;
    w.write_all(&1u32.to_le_bytes())?;
    w.write_all(&dist.kind.code().to_le_bytes())?;
    w.write_all(&(dist.len() as u64).to_le_bytes())?;
    w.write_all(&dist.total_weight.to_le_bytes())?;
    w.write_all(&dist.discarded_weight.to_le_bytes())?;
    for (g, p) in dist.entries() {
        w.write_all(&g.to_le_bytes())?;
        w.write_all(&p.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_distribution(path: &Path) -> Result<GapDistribution> {
    let bytes = std::fs::read(path)?;
    let bad = |r: &str| Error::CacheCorruption {
        path: path.to_path_buf(),
        reason: r.into(),
    };
    if bytes.len() < 40 || &bytes[..8] != DIST_MAGIC {
        return Err(bad("not a gap distribution dump"));
    }
    let kind = match u32::from_le_bytes(bytes[12..16].try_into().unwrap()) {
        0 => GapKind::PlainV,
        1 => GapKind::SymmetricV,
        2 => GapKind::KuboW,
        _ => return Err(bad("unknown kind")),
    };
    let count = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let discarded = f64::from_le_bytes(bytes[32..40].try_into().unwrap());
    if bytes.len() != 40 + 16 * count {
        return Err(bad("length does not match entry count"));
    }
    let f = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let entries = (0..count).map(|i| (f(40 + 16 * i), f(48 + 16 * i))).collect();
    let mut dist = GapDistribution::from_entries(kind, entries)?;
    dist.discarded_weight = discarded;
    Ok(dist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{diagonalize, thermal_ensemble, to_eigenbasis};
    use crate::spinchain::{build_hamiltonian, build_pauli_string, default_observable, SpinChainSpec};

    fn dist(entries: &[(f64, f64)]) -> GapDistribution {
        GapDistribution::from_entries(GapKind::PlainV, entries.to_vec()).unwrap()
    }

    /// Oracle: every anchored closed window, by brute force.
    fn xi_brute(entries: &[(f64, f64)], x: f64) -> f64 {
        entries
            .iter()
            .map(|&(a, _)| {
                entries
                    .iter()
                    .filter(|&&(g, _)| g >= a && g <= a + x)
                    .map(|&(_, p)| p)
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn xi_examples() {
        let d = dist(&[(0.0, 1.0)]);
        assert_eq!(xi_exact(&d, 0.0).unwrap(), 1.0);
        assert_eq!(xi_exact(&d, 3.0).unwrap(), 1.0);
        let e = [(0.0, 0.5), (1.0, 0.3), (2.0, 0.2)];
        let d = dist(&e);
        for (x, want) in [(0.5, 0.5), (1.0, 0.8), (2.0, 1.0)] {
            assert!((xi_exact(&d, x).unwrap() - want).abs() < 1e-15);
            assert!((xi_brute(&e, x) - want).abs() < 1e-15);
        }
        let d = dist(&[(0.5, 0.2), (0.5, 0.25), (1.0, 0.3), (2.0, 0.25)]);
        assert!((xi_exact(&d, 0.0).unwrap() - 0.45).abs() < 1e-15);
        assert!(xi_exact(&d, -1.0).is_err());
    }

    #[test]
    fn spin_flip_distribution() {
        // H = σ^z, β = 0, A = σ^x: two entries at G = ±2, weight ½ each.
        let z = build_pauli_string(&"Z0".parse().unwrap(), 1).unwrap();
        let s = diagonalize(&z).unwrap();
        let ens = thermal_ensemble(&s, 0.0).unwrap();
        let a = to_eigenbasis(&build_pauli_string(&"X0".parse().unwrap(), 1).unwrap(), &s).unwrap();
        let d = build_gap_distribution(&ens, &a, GapKind::PlainV, GapOptions::default()).unwrap();
        let nz: Vec<_> = d.entries().filter(|e| e.1 > 1e-15).collect();
        assert_eq!(nz.len(), 2);
        assert!((nz[0].0 + 2.0).abs() < 1e-14 && (nz[0].1 - 0.5).abs() < 1e-14);
        assert!((nz[1].0 - 2.0).abs() < 1e-14 && (nz[1].1 - 0.5).abs() < 1e-14);
    }

    #[test]
    fn identity_distribution_is_point_mass() {
        let s = diagonalize(&build_hamiltonian(&SpinChainSpec::eth(3)).unwrap()).unwrap();
        let ens = thermal_ensemble(&s, 1.0).unwrap();
        let id = to_eigenbasis(
            &DenseOperator::from_matrix(ComplexMatrix::identity(8)).unwrap(),
            &s,
        )
        .unwrap();
        let d = build_gap_distribution(&ens, &id, GapKind::PlainV, GapOptions::default()).unwrap();
        assert!((xi_exact(&d, 0.0).unwrap() - 1.0).abs() < 1e-12);
        let st = window_stats(&d, 0.1, WindowMethod::Exact).unwrap();
        assert!(st.sigma_g < 1e-7);
    }

    #[test]
    fn two_point_window_stats() {
        let d = dist(&[(-1.0, 0.5), (1.0, 0.5)]);
        let (mu, sigma) = d.moments();
        assert_eq!((mu, sigma), (0.0, 1.0));
        let st = window_stats(&d, 0.5, WindowMethod::Exact).unwrap();
        assert_eq!(st.a, Some(1.0));
        assert_eq!(st.delta, 0.5);
        let pm = dist(&[(0.3, 1.0)]);
        let st = window_stats(&pm, 0.5, WindowMethod::Exact).unwrap();
        assert!(st.a.is_none());
        assert!(matches!(bound_rhs(&st, 1.0), Err(Error::DegenerateSpread)));
    }

    #[test]
    fn bound_rhs_arithmetic() {
        let st = WindowStats {
            epsilon: 1.0,
            xi_of_epsilon: 0.01,
            a: Some(0.4),
            delta: 0.01,
            sigma_g: 2.0,
            method: WindowMethod::Exact,
        };
        assert!((bound_rhs(&st, 1e300).unwrap() - 3.0 * PI * 0.01).abs() < 1e-15);
        let t = 0.4 / (2.0 * 0.01);
        assert!((bound_rhs(&st, t).unwrap() - 6.0 * PI * 0.01).abs() < 1e-14);
    }

    #[test]
    fn mc_single_entry_and_determinism() {
        let d = dist(&[(0.7, 1.0)]);
        let v = xi_monte_carlo(&d, 0.2, 100, 3).unwrap();
        assert!(v == 0.0 || v == 1.0);
        let e: Vec<(f64, f64)> = (0..40).map(|i| ((i as f64 * 0.37).sin() * 3.0, 1.0 / 40.0)).collect();
        let d = dist(&e);
        let a = xi_monte_carlo(&d, 0.3, 500, 9).unwrap();
        let b = xi_monte_carlo(&d, 0.3, 500, 9).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert!(a <= xi_exact(&d, 0.3).unwrap());
    }

    #[test]
    fn eth_l6_moments_match_commutators() {
        let spec = SpinChainSpec::eth(6);
        let h = build_hamiltonian(&spec).unwrap();
        let s = diagonalize(&h).unwrap();
        let ens = thermal_ensemble(&s, 1.0).unwrap();
        let a_op = default_observable(&spec).unwrap();
        let a = to_eigenbasis(&a_op, &s).unwrap();
        let rho = density_matrix(&s, &ens).unwrap();
        let ops = CommutatorInputs {
            hamiltonian: &h,
            observable: &a_op,
            density: &rho,
        };
        for zg in [ZeroGaps::Keep, ZeroGaps::DropDiagonal] {
            for kind in GapKind::ALL {
                let d = build_gap_distribution(&ens, &a, kind, GapOptions::default().with_zero_gaps(zg)).unwrap();
                assert!((d.total_weight - 1.0).abs() < 1e-10);
                sigma_g_cross_check(&d, &ops, 1e-8).unwrap();
            }
        }
        // Second moment against tr(ρ[A,H][H,A]) / C(0).
        let d = build_gap_distribution(&ens, &a, GapKind::PlainV, GapOptions::default()).unwrap();
        let ah = a_op.matrix.commutator(&h.matrix);
        let ha = h.matrix.commutator(&a_op.matrix);
        let tr = rho.matmul(&ah).matmul(&ha).trace().re;
        assert!((d.second_moment() - tr / d.normalizer).abs() < 1e-8);
    }

    #[test]
    fn lemma2_single_gap_and_two_gap_closed_form() {
        let d = dist(&[(1.3, 1.0)]);
        let r = lemma2_property_check(&d, &[0.1, 1.0, 10.0]).unwrap();
        assert_eq!(r.violations, 0);
        for p in &r.points {
            assert!((p.average - 1.0).abs() < 1e-12);
            assert_eq!(p.xi, 1.0);
        }
        let delta = 0.8;
        let d = dist(&[(0.0, 0.5), (delta, 0.5)]);
        for t in [0.1, 1.0, 10.0, 100.0] {
            // ½ + ½ sin(ΔT)/(ΔT)
            let want = 0.5 + 0.5 * (delta * t).sin() / (delta * t);
            let r = lemma2_property_check(&d, &[t]).unwrap();
            assert!((r.points[0].average_refined - want).abs() < 1e-9, "T={t}");
            assert!((lemma2_exact_average(&d, t) - want).abs() < 1e-14);
            assert!(!r.points[0].violated);
        }
    }

    #[test]
    fn kappa_readings() {
        let (a1, k1) = minimize_kappa(KappaReading::AsWritten, 0.05, 5.0);
        let (a2, k2) = minimize_kappa(KappaReading::Gaussian, 0.05, 5.0);
        assert!(k1 > 0.0 && k2 > 0.0 && a1 > 0.0 && a2 > 0.0);
        assert!(lemma2_kappa(a1, KappaReading::AsWritten) <= lemma2_kappa(a1 * 1.1, KappaReading::AsWritten));
    }

    #[test]
    fn histogram_examples() {
        let h = coarse_grain(&dist(&[(0.4, 1.0)]), 1).unwrap();
        assert_eq!(h.weights, vec![1.0]);
        let h = coarse_grain(&dist(&[(0.0, 0.5), (1.0, 0.5)]), 2).unwrap();
        assert_eq!(h.weights, vec![0.5, 0.5]);
        assert!(coarse_grain(&dist(&[(0.0, 1.0)]), 0).is_err());
    }

    #[test]
    fn binary_dump_round_trips() {
        let d = dist(&[(-0.25, 0.125), (0.5, 0.375), (3.0, 0.5)]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.bin");
        write_distribution(&p, &d).unwrap();
        let back = read_distribution(&p).unwrap();
        assert_eq!(back.gaps, d.gaps);
        assert_eq!(back.weights, d.weights);
    }
}
