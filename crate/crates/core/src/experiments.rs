//! Named experiment pipelines: each writes CSVs plus `metadata.json` into the
//! configured output directory.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::Serialize;
use serde_json::Value;

use crate::cache::SpectrumCache;
use crate::config::{Experiment, RunConfig};
use crate::correlators::{
    autocorrelation_weights_raw, correlation_series, fluctuation_time_estimate, fluctuation_variance, fmt17,
    kubo_pair_weight, running_time_average, write_series_csv, CorrelationKind,
};
use crate::error::{Error, Result};
use crate::gapstats::{
    build_gap_distribution, coarse_grain, epsilon_sweep, lemma2_suite_reports, log_grid, minimize_kappa,
    sigma_g_cross_check, window_stats, xi_exact, xi_monte_carlo, BoundReport, CommutatorInputs, GapDistribution,
    GapKind, GapOptions, KappaReading, Lemma2SuiteReport, Unimodality, WindowMethod, WindowStats,
};
use crate::spectral::{
    audit_degeneracies, thermal_ensemble, to_eigenbasis, DegeneracyReport, EigenbasisOperator, Spectrum,
    ThermalEnsemble, DEGENERACY_TOL,
};
use crate::spinchain::{build_hamiltonian, build_pauli_string, PauliString, SpinChainSpec};
use crate::weak_eth::{
    diagonal_deviations, factorization_error, power_law_fit, write_factorization_csv, write_tail_csv,
    DeviationStats, FactorizationReport,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumRecord {
    pub spec: SpinChainSpec,
    pub spec_hash: String,
    pub data_hash: Option<String>,
    pub cache_hit: bool,
    pub degeneracy: DegeneracyReport,
}

/// A diagonalized chain with its thermal state.
pub struct Prepared {
    pub spec: SpinChainSpec,
    pub spectrum: Spectrum,
    pub ensemble: ThermalEnsemble,
    pub record: SpectrumRecord,
}

impl Prepared {
    pub fn operator(&self, ps: &PauliString) -> Result<EigenbasisOperator> {
        to_eigenbasis(&build_pauli_string(ps, self.spec.length)?, &self.spectrum)
    }
}

/// Loads (or computes and caches) the spectrum of `spec` and builds `ρ(β)`.
pub fn prepare(cache: &SpectrumCache, spec: &SpinChainSpec, beta: f64) -> Result<Prepared> {
    let (spectrum, outcome) = cache.load_or_compute(spec)?;
    info!(
        "L={} spectrum {} ({})",
        spec.length,
        if outcome.hit { "loaded" } else { "computed" },
        &outcome.spec_hash[..12]
    );
    let degeneracy = audit_degeneracies(&spectrum.energies, DEGENERACY_TOL)?;
    if !degeneracy.gaps_nondegenerate {
        warn!(
            "L={}: gap degeneracies present (max multiplicity {})",
            spec.length, degeneracy.max_gap_multiplicity
        );
    }
    let ensemble = thermal_ensemble(&spectrum, beta)?;
    Ok(Prepared {
        spec: spec.clone(),
        spectrum,
        ensemble,
        record: SpectrumRecord {
            spec: spec.clone(),
            spec_hash: outcome.spec_hash,
            data_hash: outcome.data_hash,
            cache_hit: outcome.hit,
            degeneracy,
        },
    })
}

#[derive(Debug, Serialize)]
pub struct Metadata<'a> {
    pub config: &'a RunConfig,
    pub version: &'static str,
    pub seed: u64,
    pub status: &'a str,
    pub error: Option<String>,
    pub spectra: &'a [SpectrumRecord],
    pub results: &'a Value,
    pub files: &'a [PathBuf],
}

#[derive(Debug)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub results: Value,
    pub spectra: Vec<SpectrumRecord>,
    pub files: Vec<PathBuf>,
}

impl RunOutcome {
    pub fn metadata_path(&self) -> PathBuf {
        self.output_dir.join("metadata.json")
    }
}

struct Run<'a> {
    cfg: &'a RunConfig,
    cache: &'a SpectrumCache,
    dir: PathBuf,
    spectra: Vec<SpectrumRecord>,
    files: Vec<PathBuf>,
}

impl Run<'_> {
    fn prepare(&mut self, spec: &SpinChainSpec) -> Result<Prepared> {
        let p = prepare(self.cache, spec, self.cfg.beta)?;
        self.spectra.push(p.record.clone());
        Ok(p)
    }

    fn file(&mut self, name: String) -> PathBuf {
        let p = self.dir.join(name);
        self.files.push(p.clone());
        p
    }

    fn options(&self, length: usize) -> GapOptions {
        GapOptions::for_length(length).with_zero_gaps(self.cfg.zero_gaps)
    }
}

fn kind_name(kind: GapKind) -> &'static str {
    match kind {
        GapKind::PlainV => "plain_v",
        GapKind::SymmetricV => "symmetric_v",
        GapKind::KuboW => "kubo_w",
    }
}

/// Runs the configured experiment and writes its artifact bundle. On an
/// invariant violation the metadata is still written, with the failing
/// check, before the error is returned.
pub fn run_experiment(cfg: &RunConfig, cache: &SpectrumCache) -> Result<RunOutcome> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir)?;
    let mut run = Run {
        cfg,
        cache,
        dir: cfg.output_dir.clone(),
        spectra: Vec::new(),
        files: Vec::new(),
    };
    let result = match cfg.experiment {
        Experiment::BoundCheck => bound_check(&mut run).and_then(to_value),
        Experiment::AbFactorization => ab_factorization(&mut run).and_then(to_value),
        Experiment::Fluctuations => fluctuations(&mut run).and_then(to_value),
        Experiment::GapstatsSweep => gapstats_sweep(&mut run).and_then(to_value),
        Experiment::Lemma2Suite => lemma2(&mut run).and_then(to_value),
        Experiment::Histogram => histogram(&mut run).and_then(to_value),
        Experiment::McForwardError => mc_forward_error(&mut run).and_then(to_value),
        Experiment::IntegrableContrast => integrable_contrast(&mut run).and_then(to_value),
    };
    let (status, error, results) = match &result {
        Ok(v) => ("ok", None, v.clone()),
        Err(e) => ("failed", Some(e.to_string()), Value::Null),
    };
    let meta = Metadata {
        config: cfg,
        version: VERSION,
        seed: cfg.mc.seed,
        status,
        error,
        spectra: &run.spectra,
        results: &results,
        files: &run.files,
    };
    write_json(&run.dir.join("metadata.json"), &meta)?;
    result.map(|results| RunOutcome {
        output_dir: run.dir,
        results,
        spectra: run.spectra,
        files: run.files,
    })
}

fn to_value<T: Serialize>(x: T) -> Result<Value> {
    Ok(serde_json::to_value(x)?)
}

fn write_json(path: &Path, x: &impl Serialize) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, x)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundCheckResult {
    pub length: usize,
    pub c_zero: f64,
    pub c_infinity: f64,
    /// Window at the sweep's minimum `δ`; the bound CSV uses it.
    pub min_delta: WindowStats,
    pub violations: usize,
    pub ratio_at_t_max: f64,
    /// Window minimizing the right-hand side at `T_max`.
    pub best_at_t_max: WindowStats,
    pub best_ratio_at_t_max: f64,
    pub lhs_at_t_max: f64,
}

fn bound_check(run: &mut Run<'_>) -> Result<Vec<BoundCheckResult>> {
    let cfg = run.cfg;
    let grid = cfg.time_grid()?;
    let mut out = Vec::new();
    for l in cfg.lengths() {
        let p = run.prepare(&cfg.spec_for(l))?;
        let a = p.operator(&cfg.observable_for(&p.spec))?;
        let series = correlation_series(&p.ensemble, &a, CorrelationKind::Plain, &grid)?;
        series.check_autocorrelation()?;
        let c0sq = series.c_zero * series.c_zero;
        let lhs: Vec<f64> = running_time_average(&series)?.into_iter().map(|x| x / c0sq).collect();
        let dist = build_gap_distribution(&p.ensemble, &a, GapKind::PlainV, run.options(l))?;
        let sweep = epsilon_sweep(&dist, cfg.epsilon.lo, cfg.epsilon.hi, cfg.epsilon.points)?;
        let min_delta = sweep.min_delta().clone();
        let t_max = grid.t_max();
        let best = sweep.best_at(t_max).clone();
        let times: Vec<f64> = series.times().collect();
        let report = BoundReport::new(&min_delta, times.clone(), lhs.clone())?;
        let best_report = BoundReport::new(&best, times, lhs)?;
        let series_meta = serde_json::json!({
            "spec": &p.spec, "beta": cfg.beta, "dt": grid.dt, "steps": grid.steps,
            "kind": CorrelationKind::Plain, "convention": "exp(-i(E_j-E_k)t)",
            "c_zero": series.c_zero, "c_infinity": series.c_infinity,
        });
        write_series_csv(&run.file(format!("series_L{l}.csv")), &series, &series_meta)?;
        run.files.push(run.dir.join(format!("series_L{l}.json")));
        report.write_csv(&run.file(format!("bound_L{l}.csv")), cfg.grid.csv_stride)?;
        best_report.write_csv(&run.file(format!("bound_best_L{l}.csv")), cfg.grid.csv_stride)?;
        sweep.write_csv(&run.file(format!("sweep_L{l}.csv")))?;
        let violations = report.violations();
        let res = BoundCheckResult {
            length: l,
            c_zero: series.c_zero,
            c_infinity: series.c_infinity,
            violations: violations.len(),
            ratio_at_t_max: report.ratio_at(t_max),
            best_ratio_at_t_max: best_report.ratio_at(t_max),
            lhs_at_t_max: *report.lhs.last().unwrap(),
            min_delta,
            best_at_t_max: best,
        };
        info!(
            "L={l}: min δ = {:.4e} at ε = {:.3e}, RHS/LHS(T) = {:.1} (best {:.1})",
            res.min_delta.delta, res.min_delta.epsilon, res.ratio_at_t_max, res.best_ratio_at_t_max
        );
        if let Some(&i) = violations.first() {
            return Err(Error::invariant(
                "bound_check.lhs_le_rhs",
                format!("L={l}: {} violations, first at t = {}", violations.len(), report.times[i]),
            ));
        }
        out.push(res);
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct FactorizationRow {
    pub length: usize,
    pub observable: String,
    pub observable_b: String,
    pub report: FactorizationReport,
    pub tails: DeviationStats,
}

#[derive(Clone, Debug, Serialize)]
pub struct FactorizationResult {
    pub rows: Vec<FactorizationRow>,
    pub abs_error_decreasing: bool,
    /// `(exponent, log prefactor)` of `|error| ~ L^p`; reported, not asserted.
    pub power_law: Option<(f64, f64)>,
}

fn ab_factorization(run: &mut Run<'_>) -> Result<FactorizationResult> {
    let cfg = run.cfg;
    let mut rows = Vec::new();
    for l in cfg.lengths() {
        let p = run.prepare(&cfg.spec_for(l))?;
        let (pa, pb) = (cfg.observable_for(&p.spec), cfg.observable_b_for(&p.spec));
        let a = p.operator(&pa)?;
        let b = p.operator(&pb)?;
        let report = factorization_error(&p.ensemble, &a, &b, Some(cfg.split_threshold))?;
        let mut tails = diagonal_deviations(&p.ensemble, &a, &cfg.delta_grid)?;
        tails.deviations.clear();
        info!("L={l}: factorization error {:.6e}", report.error);
        rows.push(FactorizationRow {
            length: l,
            observable: pa.to_string(),
            observable_b: pb.to_string(),
            report,
            tails,
        });
    }
    let errs: Vec<(usize, f64)> = rows.iter().map(|r| (r.length, r.report.error)).collect();
    write_factorization_csv(&run.file("factorization.csv".into()), &errs)?;
    let tail_rows: Vec<(usize, f64, &DeviationStats)> = rows.iter().map(|r| (r.length, cfg.beta, &r.tails)).collect();
    write_tail_csv(&run.file("tails.csv".into()), &tail_rows)?;
    let ls: Vec<f64> = errs.iter().map(|e| e.0 as f64).collect();
    let es: Vec<f64> = errs.iter().map(|e| e.1).collect();
    Ok(FactorizationResult {
        abs_error_decreasing: es.windows(2).all(|w| w[1].abs() < w[0].abs()),
        power_law: power_law_fit(&ls, &es),
        rows,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct FluctuationRow {
    pub length: usize,
    pub sigma_c_squared_exact: f64,
    pub theorem2_bound: f64,
    pub time_domain_estimate: Option<f64>,
    pub time_domain_abs_estimate: Option<f64>,
    pub relative_error: Option<f64>,
    pub gaps_nondegenerate: bool,
}

fn fluctuations(run: &mut Run<'_>) -> Result<Vec<FluctuationRow>> {
    let cfg = run.cfg;
    let grid = cfg.time_grid()?;
    let mut rows = Vec::new();
    for l in cfg.lengths() {
        let p = run.prepare(&cfg.spec_for(l))?;
        let a = p.operator(&cfg.observable_for(&p.spec))?;
        let b = p.operator(&cfg.observable_b_for(&p.spec))?;
        let mut rep = fluctuation_variance(&p.ensemble, &a, &b)?;
        rep.gaps_nondegenerate = Some(p.record.degeneracy.gaps_nondegenerate);
        fluctuation_time_estimate(&mut rep, &p.ensemble, &a, &b, &grid, cfg.grid.averaging)?;
        let row = FluctuationRow {
            length: l,
            sigma_c_squared_exact: rep.sigma_c_squared_exact,
            theorem2_bound: rep.theorem2_bound,
            time_domain_estimate: rep.time_domain_estimate,
            time_domain_abs_estimate: rep.time_domain_abs_estimate,
            relative_error: rep.relative_time_domain_error(),
            gaps_nondegenerate: p.record.degeneracy.gaps_nondegenerate,
        };
        if row.gaps_nondegenerate && row.sigma_c_squared_exact > row.theorem2_bound {
            return Err(Error::invariant(
                "fluctuations.bound",
                format!("L={l}: σ_C² = {:e} > bound {:e}", row.sigma_c_squared_exact, row.theorem2_bound),
            ));
        }
        rows.push(row);
    }
    let mut w = csv::Writer::from_path(run.file("fluctuations.csv".into()))?;
    w.write_record(["L", "sigma_c2_exact", "bound", "time_domain", "time_domain_abs", "relative_error"])?;
    let opt = |x: Option<f64>| x.map_or_else(|| "nan".into(), fmt17);
    for r in &rows {
        w.write_record([
            r.length.to_string(),
            fmt17(r.sigma_c_squared_exact),
            fmt17(r.theorem2_bound),
            opt(r.time_domain_estimate),
            opt(r.time_domain_abs_estimate),
            opt(r.relative_error),
        ])?;
    }
    w.flush()?;
    Ok(rows)
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub length: usize,
    pub kind: GapKind,
    pub entries: usize,
    pub sigma_g: f64,
    pub discarded_weight: f64,
    pub zero_gap_fraction: f64,
    pub min_delta: WindowStats,
    /// First sweep point meeting the configured `δ` and `a` targets.
    pub found: Option<WindowStats>,
    pub sigma_check: Option<crate::gapstats::SigmaCheck>,
}

fn gapstats_sweep(run: &mut Run<'_>) -> Result<Vec<SweepRow>> {
    let cfg = run.cfg;
    let mut rows = Vec::new();
    for l in cfg.lengths() {
        let p = run.prepare(&cfg.spec_for(l))?;
        let ps = cfg.observable_for(&p.spec);
        let a = p.operator(&ps)?;
        let dense = if l <= cfg.sigma_check_max_length {
            let h = build_hamiltonian(&p.spec)?;
            let a_op = build_pauli_string(&ps, l)?;
            let rho = crate::gapstats::density_matrix(&p.spectrum, &p.ensemble)?;
            Some((h, a_op, rho))
        } else {
            None
        };
        for &kind in &cfg.kinds {
            let dist = build_gap_distribution(&p.ensemble, &a, kind, run.options(l))?;
            let sweep = epsilon_sweep(&dist, cfg.epsilon.lo, cfg.epsilon.hi, cfg.epsilon.points)?;
            sweep.write_csv(&run.file(format!("sweep_{}_L{l}.csv", kind_name(kind))))?;
            let sigma_check = match &dense {
                Some((h, a_op, rho)) if dist.discarded_weight == 0.0 => Some(sigma_g_cross_check(
                    &dist,
                    &CommutatorInputs {
                        hamiltonian: h,
                        observable: a_op,
                        density: rho,
                    },
                    1e-8,
                )?),
                _ => None,
            };
            let found = sweep.find(cfg.target_delta, cfg.target_a).cloned();
            match &found {
                Some(w) => info!(
                    "L={l} {kind:?}: ε = {:.4e}, a = {:.3}, δ = {:.4}",
                    w.epsilon,
                    w.a.unwrap_or(f64::NAN),
                    w.delta
                ),
                None => info!("L={l} {kind:?}: no sweep point meets the targets"),
            }
            rows.push(SweepRow {
                length: l,
                kind,
                entries: dist.len(),
                sigma_g: sweep.sigma_g,
                discarded_weight: dist.discarded_weight,
                zero_gap_fraction: dist.zero_gap_fraction,
                min_delta: sweep.min_delta().clone(),
                found,
                sigma_check,
            });
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, Serialize)]
pub struct Lemma2Result {
    pub suite: Lemma2SuiteReport,
    /// `(α, κ)` minimizing the intermediate constant under each reading.
    pub kappa_as_written: (f64, f64),
    pub kappa_gaussian: (f64, f64),
}

fn lemma2(run: &mut Run<'_>) -> Result<Lemma2Result> {
    let cfg = run.cfg;
    let l2 = &cfg.lemma2;
    let reports = lemma2_suite_reports(l2.distributions, l2.max_gaps, &l2.t_values, cfg.mc.seed)?;
    let mut w = csv::Writer::from_path(run.file("lemma2.csv".into()))?;
    w.write_record(["distribution", "T", "average", "average_refined", "xi", "bound", "violated"])?;
    for (i, r) in reports.iter().enumerate() {
        for pt in &r.points {
            w.write_record([
                i.to_string(),
                fmt17(pt.t),
                fmt17(pt.average),
                fmt17(pt.average_refined),
                fmt17(pt.xi),
                fmt17(pt.bound),
                pt.violated.to_string(),
            ])?;
        }
    }
    w.flush()?;
    let suite = Lemma2SuiteReport::from_reports(&reports, &l2.t_values, cfg.mc.seed);
    info!(
        "{} distributions: {} violations, max refinement change {:.2e}",
        suite.distributions, suite.violations, suite.max_refinement_change
    );
    if suite.violations > 0 {
        return Err(Error::invariant(
            "lemma2_suite.bound",
            format!("{} violations of ⟨f⟩_T ≤ 3π ξ(1/T)", suite.violations),
        ));
    }
    Ok(Lemma2Result {
        suite,
        kappa_as_written: minimize_kappa(KappaReading::AsWritten, 0.05, 5.0),
        kappa_gaussian: minimize_kappa(KappaReading::Gaussian, 0.05, 5.0),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct HistogramRow {
    pub length: usize,
    pub kind: GapKind,
    pub bins: usize,
    pub total_weight: f64,
    pub bin_sum: f64,
    pub unimodality: Unimodality,
}

fn histogram(run: &mut Run<'_>) -> Result<Vec<HistogramRow>> {
    let cfg = run.cfg;
    let mut rows = Vec::new();
    for l in cfg.lengths() {
        let p = run.prepare(&cfg.spec_for(l))?;
        let a = p.operator(&cfg.observable_for(&p.spec))?;
        for &kind in &cfg.kinds {
            let dist = build_gap_distribution(&p.ensemble, &a, kind, run.options(l))?;
            let h = coarse_grain(&dist, cfg.bins)?;
            let bin_sum = h.total();
            if (bin_sum - dist.total_weight).abs() > 1e-12 {
                return Err(Error::invariant(
                    "histogram.mass",
                    format!("bins sum to {bin_sum}, distribution to {}", dist.total_weight),
                ));
            }
            h.write_csv(&run.file(format!("histogram_{}_L{l}.csv", kind_name(kind))), cfg.smoothing)?;
            rows.push(HistogramRow {
                length: l,
                kind,
                bins: cfg.bins,
                total_weight: dist.total_weight,
                bin_sum,
                unimodality: h.unimodality(cfg.smoothing),
            });
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, Serialize)]
pub struct McRow {
    pub length: usize,
    pub kind: GapKind,
    pub sigma_g: f64,
    pub max_abs_error: f64,
    pub samples: usize,
    pub seed: u64,
}

/// `(ε, ξ_exact, ξ_mc)` on `points` log-spaced `ε ∈ [lo, hi]·σ_G`.
pub fn mc_forward_table(
    dist: &GapDistribution,
    lo: f64,
    hi: f64,
    points: usize,
    samples: usize,
    seed: u64,
) -> Result<Vec<(f64, f64, f64)>> {
    let sigma = dist.sigma_g();
    if !(sigma > 0.0) {
        return Err(Error::DegenerateSpread);
    }
    log_grid(lo * sigma, hi * sigma, points)
        .into_iter()
        .map(|eps| {
            let exact = xi_exact(dist, eps)?;
            let mc = xi_monte_carlo(dist, eps, samples, seed)?;
            if mc > exact {
                return Err(Error::invariant(
                    "mc_forward_error.underestimate",
                    format!("ξ_mc = {mc} > ξ_exact = {exact} at ε = {eps}"),
                ));
            }
            Ok((eps, exact, mc))
        })
        .collect()
}

fn mc_forward_error(run: &mut Run<'_>) -> Result<Vec<McRow>> {
    let cfg = run.cfg;
    let mut rows = Vec::new();
    for l in cfg.lengths() {
        let p = run.prepare(&cfg.spec_for(l))?;
        let a = p.operator(&cfg.observable_for(&p.spec))?;
        for &kind in &cfg.kinds {
            let dist = build_gap_distribution(&p.ensemble, &a, kind, run.options(l))?;
            let table = mc_forward_table(
                &dist,
                cfg.epsilon.lo,
                cfg.epsilon.hi,
                cfg.epsilon.points,
                cfg.mc.samples,
                cfg.mc.seed,
            )?;
            let mut w = csv::Writer::from_path(run.file(format!("mc_{}_L{l}.csv", kind_name(kind))))?;
            w.write_record(["epsilon", "xi_exact", "xi_mc", "abs_error"])?;
            for &(e, x, m) in &table {
                w.write_record([fmt17(e), fmt17(x), fmt17(m), fmt17(x - m)])?;
            }
            w.flush()?;
            let max_abs_error = table.iter().map(|t| t.1 - t.2).fold(0.0, f64::max);
            info!("L={l} {kind:?}: max |ξ_mc − ξ| = {max_abs_error:.3e}");
            rows.push(McRow {
                length: l,
                kind,
                sigma_g: dist.sigma_g(),
                max_abs_error,
                samples: cfg.mc.samples,
                seed: cfg.mc.seed,
            });
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, Serialize)]
pub struct ContrastCurve {
    pub spec: SpinChainSpec,
    pub sigma_g: f64,
    pub points: Vec<WindowStats>,
    /// Indices `i` with `δ(ε_i) = δ(ε_{i+1})` while `ε` doubles.
    pub plateaus: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ContrastResult {
    pub epsilon_min: f64,
    pub eth: ContrastCurve,
    pub integrable: ContrastCurve,
    pub integrable_delta_exceeds: bool,
}

fn contrast_curve(run: &mut Run<'_>, spec: &SpinChainSpec, eps: &[f64]) -> Result<ContrastCurve> {
    let p = run.prepare(spec)?;
    let a = p.operator(&run.cfg.observable_for(spec))?;
    let dist = build_gap_distribution(&p.ensemble, &a, GapKind::PlainV, run.options(spec.length))?;
    let points = eps
        .iter()
        .map(|&e| window_stats(&dist, e, WindowMethod::Exact))
        .collect::<Result<Vec<_>>>()?;
    let plateaus = (0..points.len().saturating_sub(1))
        .filter(|&i| points[i].delta == points[i + 1].delta)
        .collect();
    Ok(ContrastCurve {
        spec: spec.clone(),
        sigma_g: dist.sigma_g(),
        points,
        plateaus,
    })
}

fn integrable_contrast(run: &mut Run<'_>) -> Result<ContrastResult> {
    let cfg = run.cfg;
    let c = &cfg.contrast;
    let eps: Vec<f64> = (0..c.doublings).map(|k| c.epsilon_min * 2f64.powi(k as i32)).collect();
    let l = cfg.spec.length;
    let eth = contrast_curve(run, &cfg.spec, &eps)?;
    let int_spec = SpinChainSpec {
        length: l,
        ..c.integrable.clone()
    };
    let integrable = contrast_curve(run, &int_spec, &eps)?;
    let mut w = csv::Writer::from_path(run.file(format!("contrast_L{l}.csv")))?;
    w.write_record(["epsilon", "delta_eth", "a_eth", "delta_integrable", "a_integrable"])?;
    let opt = |x: Option<f64>| x.map_or_else(|| "nan".into(), fmt17);
    for (i, &e) in eps.iter().enumerate() {
        w.write_record([
            fmt17(e),
            fmt17(eth.points[i].delta),
            opt(eth.points[i].a),
            fmt17(integrable.points[i].delta),
            opt(integrable.points[i].a),
        ])?;
    }
    w.flush()?;
    Ok(ContrastResult {
        epsilon_min: c.epsilon_min,
        integrable_delta_exceeds: integrable.points[0].delta > eth.points[0].delta,
        eth,
        integrable,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub length: usize,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
    pub spectra: Vec<SpectrumRecord>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn record(&mut self, name: &str, length: usize, r: Result<String>) -> Result<()> {
        let (passed, detail) = match r {
            Ok(d) => (true, d),
            Err(e @ Error::InvariantViolation { .. }) => (false, e.to_string()),
            Err(e) => return Err(e),
        };
        self.checks.push(CheckResult {
            name: name.into(),
            length,
            passed,
            detail,
        });
        Ok(())
    }

    /// The first failed check as an error.
    pub fn into_result(self) -> Result<Self> {
        match self.checks.iter().find(|c| !c.passed) {
            Some(c) => Err(Error::invariant(c.name.clone(), c.detail.clone())),
            None => Ok(self),
        }
    }
}

/// Invariant suites only: spectrum, weights, `σ_G`, factorization identity,
/// fluctuation bound, for every length in the config.
pub fn verify(cfg: &RunConfig, cache: &SpectrumCache) -> Result<VerifyReport> {
    cfg.validate()?;
    let mut rep = VerifyReport::default();
    for l in cfg.lengths() {
        let spec = cfg.spec_for(l);
        let h = build_hamiltonian(&spec)?;
        let p = prepare(cache, &spec, cfg.beta)?;
        rep.spectra.push(p.record.clone());
        rep.record("spectrum.decomposition", l, p.spectrum.verify(&h).map(|_| {
            format!("residual {:.2e}", p.spectrum.residual(&h))
        }))?;
        let ens = &p.ensemble;
        let e = &ens.energies;
        rep.record("kubo.weights_nonnegative", l, {
            let n = ens.dim();
            let neg = (0..n)
                .flat_map(|j| (0..n).map(move |k| (j, k)))
                .filter(|&(j, k)| kubo_pair_weight(cfg.beta, ens.weights[j], ens.weights[k], e[j], e[k]) < 0.0)
                .count();
            if neg == 0 {
                Ok(format!("{} pairs", n * n))
            } else {
                Err(Error::invariant("kubo.weights_nonnegative", format!("{neg} negative pairs")))
            }
        })?;
        let ps = cfg.observable_for(&spec);
        let a = p.operator(&ps)?;
        let b = p.operator(&cfg.observable_b_for(&spec))?;
        for kind in [CorrelationKind::Plain, CorrelationKind::Symmetric, CorrelationKind::Kubo] {
            rep.record("weights.c_zero", l, {
                autocorrelation_weights_raw(ens, &a, kind).and_then(|(_, c0)| {
                    let direct = crate::correlators::correlation_trace(ens, &a, &a, 0.0)?.re;
                    if kind == CorrelationKind::Kubo || (c0 - direct).abs() <= 1e-10 * direct.abs().max(1.0) {
                        Ok(format!("{kind:?} C(0) = {c0:.6e}"))
                    } else {
                        Err(Error::invariant("weights.c_zero", format!("{kind:?}: {c0} vs tr(ρA²) = {direct}")))
                    }
                })
            })?;
        }
        if l <= cfg.sigma_check_max_length {
            let a_op = build_pauli_string(&ps, l)?;
            let rho = crate::gapstats::density_matrix(&p.spectrum, ens)?;
            let ops = CommutatorInputs {
                hamiltonian: &h,
                observable: &a_op,
                density: &rho,
            };
            for kind in GapKind::ALL {
                let dist = build_gap_distribution(ens, &a, kind, GapOptions::default().with_zero_gaps(cfg.zero_gaps))?;
                rep.record(
                    "sigma_g.commutator",
                    l,
                    sigma_g_cross_check(&dist, &ops, 1e-8).map(|c| format!("{kind:?}: |Δσ| = {:.2e}", c.abs_diff)),
                )?;
            }
        }
        rep.record(
            "weak_eth.factorization_identity",
            l,
            factorization_error(ens, &a, &b, None).map(|r| format!("defect {:.2e}", r.identity_defect)),
        )?;
        rep.record("fluctuations.bound", l, {
            fluctuation_variance(ens, &a, &b).and_then(|f| {
                if !p.record.degeneracy.gaps_nondegenerate || f.sigma_c_squared_exact <= f.theorem2_bound {
                    Ok(format!("{:.3e} ≤ {:.3e}", f.sigma_c_squared_exact, f.theorem2_bound))
                } else {
                    Err(Error::invariant(
                        "fluctuations.bound",
                        format!("{:e} > {:e}", f.sigma_c_squared_exact, f.theorem2_bound),
                    ))
                }
            })
        })?;
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(exp: Experiment, dir: &Path) -> RunConfig {
        let mut c = RunConfig {
            experiment: exp,
            spec: SpinChainSpec::eth(4),
            output_dir: dir.join("out"),
            ..RunConfig::default()
        };
        c.grid.t_max = 2.0;
        c.grid.dt = 0.01;
        c.epsilon.points = 20;
        c.mc.samples = 200;
        c.lemma2.distributions = 10;
        c.contrast.doublings = 6;
        c
    }

    #[test]
    fn every_experiment_writes_metadata() {
        let dir = tempfile::tempdir().unwrap();
        let cache = SpectrumCache::new(dir.path().join("cache"));
        for exp in [
            Experiment::BoundCheck,
            Experiment::AbFactorization,
            Experiment::Fluctuations,
            Experiment::GapstatsSweep,
            Experiment::Lemma2Suite,
            Experiment::Histogram,
            Experiment::McForwardError,
            Experiment::IntegrableContrast,
        ] {
            let mut cfg = small(exp, dir.path());
            if exp == Experiment::AbFactorization {
                cfg.lengths = vec![4, 6];
            }
            let out = run_experiment(&cfg, &cache).unwrap_or_else(|e| panic!("{exp:?}: {e}"));
            let meta: Value = serde_json::from_str(&fs::read_to_string(out.metadata_path()).unwrap()).unwrap();
            assert_eq!(meta["status"], "ok");
            assert_eq!(meta["version"], VERSION);
            assert!(out.files.iter().all(|f| f.exists()), "{exp:?}");
        }
    }

    #[test]
    fn runs_are_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let cache = SpectrumCache::new(dir.path().join("cache"));
        let mut cfg = small(Experiment::McForwardError, dir.path());
        cfg.spec = SpinChainSpec::eth(6);
        let a = run_experiment(&cfg, &cache).unwrap();
        let first = fs::read(&a.files[0]).unwrap();
        let b = run_experiment(&cfg, &cache).unwrap();
        assert_eq!(first, fs::read(&b.files[0]).unwrap());
        assert!(b.spectra[0].cache_hit);
    }

    #[test]
    fn verify_passes_on_eth_chain() {
        let dir = tempfile::tempdir().unwrap();
        let cache = SpectrumCache::new(dir.path().join("cache"));
        let mut cfg = small(Experiment::BoundCheck, dir.path());
        cfg.lengths = vec![4, 6];
        let rep = verify(&cfg, &cache).unwrap();
        assert!(rep.passed(), "{:#?}", rep.checks);
        assert!(rep.checks.len() >= 10);
    }
}
