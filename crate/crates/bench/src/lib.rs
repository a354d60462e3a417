//! Fixtures shared by the benchmarks.

use hodgeflow_core::synth::{generate_category, FieldCategory};
use hodgeflow_core::VectorField;

/// Field with all three components present, `n` x `n`.
pub fn mixed_field(n: usize) -> VectorField {
    generate_category(FieldCategory::All, 42, n, n).expect("fixture field")
}
