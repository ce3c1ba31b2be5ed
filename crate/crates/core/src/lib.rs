//! Toric model of the space of Kähler metrics: symplectic potentials on
//! Delzant polytopes, energy functionals, the d₁ metric and its quotient by
//! the complex torus, and a property-test harness for the abstract
//! existence/properness principle.

pub mod duality;
pub mod error;
pub mod families;
pub mod field;
pub mod functionals;
pub mod grid;
pub mod io;
pub mod legendre;
pub mod logspace;
pub mod lse;
pub mod metric;
pub mod model;
pub mod polytope;
pub mod potential;
pub mod principle;
pub mod quad;
pub mod quotient;

pub use error::{Error, Result};
pub use model::ToricModel;
pub use polytope::{build_polytope, Facet, Point, Polytope, PolytopeSpec};
