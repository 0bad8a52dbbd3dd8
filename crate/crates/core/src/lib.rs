pub mod engine;
pub mod invariants;
pub mod report;
pub mod solver;
pub mod symexpr;
pub mod symmemory;
pub mod wat;
