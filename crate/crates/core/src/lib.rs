pub mod instance;
pub mod lp;
pub mod relaxation;
pub mod primal;
pub mod branching;
pub mod bnb;
pub mod bench;
