// `!(x >= 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audit;
pub mod codec;
pub mod commitment;
pub mod coordination;
pub mod economics;
pub mod payments;
pub mod prep;
pub mod reliability;
pub mod scenario;
pub mod sim;
pub mod tokens;
