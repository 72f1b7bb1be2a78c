//! Simulator and verification harness for the quasi-classical limit of
//! spin-boson models.
//!
//! The crate evolves the exact microscopic quantum dynamics on a truncated
//! Fock space with ε-scaled commutation relations and, in parallel, the
//! effective quasi-classical dynamics on state-valued measures (finite atomic
//! ensembles), then quantifies their agreement as ε → 0.

pub mod effective;
pub mod fock;
pub mod harness;
pub mod linalg;
pub mod measure;
pub mod micro;
