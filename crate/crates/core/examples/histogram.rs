//! Coarse-grained gap histogram and its smoothed unimodality check.
//!
//! cargo run --release --example histogram -- 10 /tmp/hist.csv

use std::path::PathBuf;

use corrflow::gapstats::{build_gap_distribution, coarse_grain, GapKind, GapOptions};
use corrflow::spectral::{diagonalize, thermal_ensemble, to_eigenbasis};
use corrflow::spinchain::{build_hamiltonian, default_observable, SpinChainSpec};

fn main() -> corrflow::Result<()> {
    let mut args = std::env::args().skip(1);
    let l: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);
    let spec = SpinChainSpec::eth(l);
    let s = diagonalize(&build_hamiltonian(&spec)?)?;
    let ens = thermal_ensemble(&s, 1.0)?;
    let a = to_eigenbasis(&default_observable(&spec)?, &s)?;
    let dist = build_gap_distribution(&ens, &a, GapKind::PlainV, GapOptions::for_length(l))?;

    let h = coarse_grain(&dist, 80)?;
    let u = h.unimodality(5);
    println!(
        "80 bins over [{:.3}, {:.3}], mass {:.15}; peak bin {} at G = {:.3}, violations {}, unimodal {}",
        h.g_min,
        h.g_max,
        h.total(),
        u.peak_bin,
        u.peak_center,
        u.violations,
        u.unimodal
    );
    let smooth = h.smoothed(5);
    let top = smooth.iter().cloned().fold(0.0, f64::max);
    for (b, w) in smooth.iter().enumerate().step_by(4) {
        println!("{:>7.3} {}", h.center(b), "#".repeat((60.0 * w / top) as usize));
    }
    if let Some(path) = args.next().map(PathBuf::from) {
        h.write_csv(&path, 5)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
