#![allow(dead_code)]

pub mod data;
pub mod fuzz;
pub mod grad;
pub mod lev;
pub mod quad;
pub mod zipw;
