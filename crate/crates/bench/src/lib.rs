//! Fixtures shared by the benchmarks.

use fhcure::simulation::generate_scenario_a;
use fhcure::{Dataset, ScenarioAConfig};

/// A Scenario A-1 sample of size `n`.
pub fn scenario_a1(n: usize, seed: u64) -> Dataset {
    generate_scenario_a(&ScenarioAConfig::a1(n, seed)).expect("preset is valid").0
}
