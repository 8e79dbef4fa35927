pub mod corpus;
pub mod eval;
pub mod gradcheck;
pub mod report;
pub mod train;
