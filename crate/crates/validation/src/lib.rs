//! Reference solvers and random instance families used to check the
//! library's solver and learners from the outside.

pub mod instances;
pub mod oracle;
