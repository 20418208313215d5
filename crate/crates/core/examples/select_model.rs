//! Rank the built-in model catalog against each bundled hardware profile.

use std::error::Error;

use medaide::select::{builtin_catalog, rank_candidates, HardwareProfile, Mode, DEFAULT_OVERHEAD_FACTOR};

fn main() -> Result<(), Box<dyn Error>> {
    let catalog = builtin_catalog();
    for name in ["jetson-8gb", "consumer-gpu-16gb", "cpu-only-4gb"] {
        let path = format!("{}/data/profiles/{name}.json", env!("CARGO_MANIFEST_DIR"));
        let profile = HardwareProfile::load(path.as_ref())?;
        for mode in [Mode::Accuracy, Mode::Realtime] {
            let result = rank_candidates(&profile, &catalog, mode, DEFAULT_OVERHEAD_FACTOR)?;
            let chosen = result.chosen.map(|m| m.label()).unwrap_or_else(|| "none".into());
            println!("{name} / {mode:?}: {chosen}");
        }
        let result = rank_candidates(&profile, &catalog, Mode::Accuracy, DEFAULT_OVERHEAD_FACTOR)?;
        for c in result.ranked.iter().filter(|c| !c.feasible) {
            let codes: Vec<&str> = c.violations.iter().map(|v| v.code()).collect();
            println!("    rejected {:<18} {:>5.1} GB  {}", c.spec.label(), c.est_bytes as f64 / 1e9, codes.join(", "));
        }
    }
    Ok(())
}
