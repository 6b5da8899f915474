//! Decision programming: influence diagrams and limited-memory influence
//! diagrams compiled to mixed-integer linear programs.

pub mod bnb;
pub mod diagram;
pub mod error;
pub mod formulation;
pub mod models;
pub mod pareto;
pub mod paths;
pub mod strategy;
