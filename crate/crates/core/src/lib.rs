//! Measurement-device-independent quantification of entanglement and of its
//! irreducible dimension.
//!
//! Modules, bottom-up:
//! - [`qstate`]: Hermitian/density operators, named states and input sets.
//! - [`corrsim`]: correlation tables from states, inputs and joint measurements.
//! - [`conic`]: Hermitian-matrix conic programs and PPT-relaxed generalized robustness.
//! - [`pipeline`]: POVM recovery, entanglement lower bound, regularization,
//!   witness extraction and the irreducible-dimension verdict.
//! - [`adversary`]: sequential low-dimensional strategies and the CGLMP loophole demo.
//! - [`experiment`]: configuration, file formats and report generation.

// Links the system OpenBLAS used by the PSD cone.
use openblas_src as _;

pub mod qstate;
pub mod random;
pub mod corrsim;
pub mod conic;
pub mod pipeline;
pub mod adversary;
pub mod experiment;
