#![allow(dead_code)]

pub mod cluster_cases;
pub mod full;
pub mod reference;
pub mod scenarios;
