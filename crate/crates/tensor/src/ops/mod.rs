pub(crate) mod basic;
pub mod gdn;
pub mod nn;
