//! The uniform time average of `|Σ p_α e^{−iG_α t}|²` against `3π ξ(1/T)`,
//! on random distributions, and the constant behind the `3π`.
//!
//! cargo run --release --example uniform_average

use corrflow::gapstats::{lemma2_exact_average, lemma2_suite, minimize_kappa, GapDistribution, GapKind, KappaReading};

fn main() -> corrflow::Result<()> {
    let t_grid = [0.1, 1.0, 10.0, 100.0];
    let suite = lemma2_suite(200, 50, &t_grid, 1)?;
    println!(
        "{} random distributions: {} violations, worst ⟨f⟩/bound = {:.3}, Simpson refinement change {:.1e}",
        suite.distributions, suite.violations, suite.max_ratio, suite.max_refinement_change
    );

    // Two equal gaps a distance 1 apart: ⟨f⟩_T → 1/2 as T grows.
    let d = GapDistribution::from_entries(GapKind::PlainV, vec![(0.0, 0.5), (1.0, 0.5)])?;
    for t in [1.0, 10.0, 1000.0] {
        println!("two-point ⟨f⟩_{t} = {:.5}", lemma2_exact_average(&d, t));
    }

    for reading in [KappaReading::AsWritten, KappaReading::Gaussian] {
        let (alpha, kappa) = minimize_kappa(reading, 0.05, 20.0);
        println!("{reading:?}: min κ = {kappa:.4} at α = {alpha:.4} (3π = {:.4})", 3.0 * std::f64::consts::PI);
    }
    Ok(())
}
