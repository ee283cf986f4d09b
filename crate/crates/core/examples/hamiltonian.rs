//! Build the spin-chain Hamiltonian and a few Pauli-string observables.
//!
//! cargo run --example hamiltonian -- 6

use corrflow::spinchain::{build_hamiltonian, build_pauli_string, Boundary, PauliString, SpinChainSpec};

fn main() -> corrflow::Result<()> {
    let l: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(6);
    for spec in [SpinChainSpec::eth(l), SpinChainSpec::integrable(l).with_boundary(Boundary::Periodic)] {
        let h = build_hamiltonian(&spec)?;
        println!(
            "{:?}: dim {} | nn bonds {:?} | nnn bonds {:?} | H[0,0] = {:.3}",
            spec.boundary,
            h.dim(),
            spec.bonds(1),
            spec.bonds(2),
            h.get(0, 0).re
        );
    }

    let mid = SpinChainSpec::eth(l).mid_site();
    for text in [format!("X{mid}"), format!("Z{mid} Z{}", mid + 1), "Y0 X1".to_string()] {
        let ps: PauliString = text.parse()?;
        let op = build_pauli_string(&ps, l)?;
        let nnz = op.to_row_major().iter().filter(|z| z.norm() > 0.0).count();
        println!("{text:>8}: {nnz} nonzero entries (one per row)");
    }
    Ok(())
}
