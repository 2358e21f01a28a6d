//! Iterative Bergman-kernel construction of Kähler–Einstein metrics on
//! smooth projective hypersurfaces with ample canonical bundle.
//!
//! Starting from any Hermitian metric `h_{m0}` on `K_X^{m0}`, each step forms
//! the `L²` inner product `∫_X β^ε h_m ⊗ s ⊗ t̄` on `H⁰(X, K_X^{m+1})`, takes
//! an orthonormal basis `σ_i` and sets
//! `h_{m+1} = (m+n+1)!/(m+1)! · (Σ σ_i ⊗ σ̄_i)^{-1}`. The normalized metrics
//! `h_m^{1/m}` converge to the Kähler–Einstein metric.

pub mod diagnostics;
pub mod error;
pub mod iteration;
pub mod linalg;
pub mod persist;
pub mod poly;
pub mod roots;
pub mod sampling;
pub mod variety;
pub mod weights;

pub use error::{Error, Result};
pub use iteration::{MetricState, StepOptions};
pub use sampling::SampleSet;
pub use variety::{CanonicalBasis, Hypersurface, VarietyPoint};
pub use weights::WeightSpec;

pub use num_complex::Complex64;
