//! Plain, symmetrized and Kubo autocorrelations of the middle-site X
//! operator, plus the plateau `C_∞` and the running average used by the
//! dephasing bound.
//!
//! cargo run --release --example correlators

use corrflow::correlators::{correlation_series, running_time_average, CorrelationKind, TimeGrid};
use corrflow::spectral::{diagonalize, thermal_ensemble, to_eigenbasis};
use corrflow::spinchain::{build_hamiltonian, default_observable, SpinChainSpec};

fn main() -> corrflow::Result<()> {
    let spec = SpinChainSpec::eth(8);
    let s = diagonalize(&build_hamiltonian(&spec)?)?;
    let ens = thermal_ensemble(&s, 1.0)?;
    let a = to_eigenbasis(&default_observable(&spec)?, &s)?;
    let grid = TimeGrid::new(0.01, 20.0)?;

    for kind in [CorrelationKind::Plain, CorrelationKind::Symmetric, CorrelationKind::Kubo] {
        let series = correlation_series(&ens, &a, kind, &grid)?;
        series.check_autocorrelation()?;
        let avg = running_time_average(&series)?;
        print!("{kind:?}: C(0) = {:.4}, C_∞ = {:.4}; C(t) at", series.c_zero, series.c_infinity);
        for t in [1.0, 5.0, 20.0] {
            let k = (t / grid.dt).round() as usize;
            print!(" t={t}: {:+.4}", series.values[k].re);
        }
        println!("; ⟨|C−C_∞|²⟩_T = {:.3e}", avg.last().unwrap());
    }
    Ok(())
}
