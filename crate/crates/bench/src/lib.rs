//! Fixtures shared by the benchmarks.

use std::path::PathBuf;

use geosweep::Scenario;

/// Load a bundled scenario by name.
pub fn scenario(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.json"));
    Scenario::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}
