//! Closed-form decomposition engines, one module per model family.

pub mod arg;
pub mod binbar;
pub mod cauchy;
pub mod gauss_var;
pub mod inar;
pub mod markov;
pub mod nbar;
pub mod war;
