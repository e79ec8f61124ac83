//! Truncated tracial moment problems in symmetric non-commuting variables.
//!
//! The pipeline runs from [`TracialSequence`] data through moment matrices,
//! flat extensions and GNS extraction to explicit matrix representations,
//! with a separate trace-positivity test for polynomials in [`theta2`].

// `!(x >= 0.0)` style checks are there to reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod numeric;
pub mod words;
pub mod poly;
pub mod moment;
pub mod flat;
pub mod gns;
pub mod theta2;

pub use error::{Error, Result};
pub use flat::{extend_to_degree, flat_extend, is_flat, FlatExtension};
pub use gns::{extract_representation, verify_representation, TracialRepresentation};
pub use moment::{build_moment_matrix, moments_from_atoms, Atom, KernelBasis, MomentMatrix, TracialSequence};
pub use numeric::SymMatrix;
pub use poly::{parse_poly, parse_word, render_word, Polynomial};
pub use theta2::{dual_witness_search, theta2_feasibility, Theta2Verdict};
pub use words::{canon_cyclic, canon_tracial, enumerate_words, Word};
