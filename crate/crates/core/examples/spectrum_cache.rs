//! Diagonalize a chain, audit the result and round-trip it through the
//! on-disk spectrum cache.
//!
//! CORRFLOW_CACHE_DIR=/tmp/cf cargo run --release --example spectrum_cache -- 8

use corrflow::cache::SpectrumCache;
use corrflow::spectral::{audit_degeneracies, DEGENERACY_TOL};
use corrflow::spinchain::{build_hamiltonian, SpinChainSpec};

fn main() -> corrflow::Result<()> {
    let l: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(8);
    let spec = SpinChainSpec::eth(l);
    let cache = SpectrumCache::from_env();
    println!("cache dir: {}", cache.dir().display());

    for round in 0..2 {
        let t = std::time::Instant::now();
        let (s, outcome) = cache.load_or_compute(&spec)?;
        println!(
            "round {round}: hit = {}, {} levels in {:.2?}, E0 = {:.6}",
            outcome.hit,
            s.dim(),
            t.elapsed(),
            s.energies[0]
        );
    }

    let (s, _) = cache.load_or_compute(&spec)?;
    let h = build_hamiltonian(&spec)?;
    s.verify(&h)?;
    println!(
        "residual {:.2e}, orthonormality {:.2e}, reconstruction {:.2e}",
        s.residual(&h),
        s.orthonormality_defect(),
        s.reconstruction_error(&h)
    );
    let deg = audit_degeneracies(&s.energies, DEGENERACY_TOL)?;
    println!("nondegenerate energies: {}", deg.energies_nondegenerate());

    for e in cache.list()? {
        println!("{}  L={} {} B", &e.spec_hash[..16], e.length, e.bytes);
    }
    Ok(())
}
