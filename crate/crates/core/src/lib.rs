pub mod abelian;
pub mod cxlinalg;
pub mod wha;
pub mod ty;
pub mod coideal;
pub mod report;
pub mod selftest;
pub mod serialize;
