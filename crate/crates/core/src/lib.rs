//! Constraint satisfaction and Datalog toolkit.
//!
//! Finite structures, homomorphisms, bottom-up Datalog, (l,k)-consistency over
//! finite and orbit-type templates, existential pebble games, bounded
//! treewidth, polymorphisms and MMSNP model checking.

pub mod algebra;
pub mod consistency;
pub mod datalog;
pub mod error;
pub mod generate;
pub mod homomorphism;
pub mod mmsnp;
pub mod pebble;
pub mod programs;
pub mod structure;
pub mod template;
pub mod treewidth;
pub mod xcheck;

pub use error::{Error, MmsnpRule, Result};
pub use structure::{Signature, Structure, Symbol, Tuple};
pub use template::{AssignmentClass, TemplateHandle};
