//! Gap distributions of the three correlation kinds, the maximal window
//! mass `ξ(ε)` and the `ε` sweep that trades `a` against `δ`.
//!
//! cargo run --release --example gap_window -- 10

use corrflow::gapstats::{build_gap_distribution, epsilon_sweep, xi_exact, GapKind, GapOptions, ZeroGaps};
use corrflow::spectral::{diagonalize, thermal_ensemble, to_eigenbasis};
use corrflow::spinchain::{build_hamiltonian, default_observable, SpinChainSpec};

fn main() -> corrflow::Result<()> {
    let l: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let spec = SpinChainSpec::eth(l);
    let s = diagonalize(&build_hamiltonian(&spec)?)?;
    let ens = thermal_ensemble(&s, 1.0)?;
    let a = to_eigenbasis(&default_observable(&spec)?, &s)?;
    let opts = GapOptions::for_length(l).with_zero_gaps(ZeroGaps::DropDiagonal);

    for kind in GapKind::ALL {
        let dist = build_gap_distribution(&ens, &a, kind, opts)?;
        let (mean, _) = dist.moments();
        println!(
            "{kind:?}: {} gaps, mean {mean:+.3e}, σ_G = {:.4}, largest single weight {:.3e}",
            dist.len(),
            dist.sigma_g(),
            dist.max_weight()
        );
        for eps in [1e-3, 1e-2, 1e-1, 1.0] {
            println!("    ξ({eps:e}) = {:.4e}", xi_exact(&dist, eps)?);
        }
        let sweep = epsilon_sweep(&dist, 1e-4, 10.0, 200)?;
        let best = sweep.min_delta();
        println!("    min δ = {:.4e} at ε = {:.3e}", best.delta, best.epsilon);
        match sweep.find(0.1, 1.0) {
            Some(w) => println!("    δ ≤ 0.1 with a ≤ 1: ε = {:.4e}, a = {:.4}, δ = {:.4e}", w.epsilon, w.a.unwrap(), w.delta),
            None => println!("    no ε gives δ ≤ 0.1 with a ≤ 1"),
        }
    }
    Ok(())
}
