//! Drive a full experiment from a JSON config, the same path `corrflow run`
//! takes, and list the files it wrote.
//!
//! cargo run --release --example config_run

use corrflow::cache::SpectrumCache;
use corrflow::config::RunConfig;
use corrflow::experiments::{run_experiment, verify};

fn main() -> corrflow::Result<()> {
    let dir = tempfile::tempdir()?;
    let cache = SpectrumCache::new(dir.path().join("cache"));
    let out = dir.path().join("out");
    let mut cfg = RunConfig::from_json(&format!(
        r#"{{
            "experiment": "bound_check",
            "lengths": [6, 8],
            "grid": {{ "dt": 0.01, "t_max": 50 }},
            "output_dir": {out:?}
        }}"#
    ))?;
    let report = verify(&cfg, &cache)?.into_result()?;
    println!("verify: {} checks passed", report.checks.len());

    let run = run_experiment(&cfg, &cache)?;
    for f in &run.files {
        println!("wrote {}", f.display());
    }

    // A second run reuses cached spectra; overrides follow the CLI syntax.
    cfg = corrflow::config::apply_overrides(
        serde_json::to_value(&cfg)?,
        &corrflow::config::parse_overrides(&["--experiment".into(), "histogram".into()])?,
    )?;
    let run = run_experiment(&cfg, &cache)?;
    println!("{}", std::fs::read_to_string(run.metadata_path())?);
    Ok(())
}
