//! Shipped optimization tasks.

pub mod bitstring;
pub mod dtree;
pub mod symreg;
