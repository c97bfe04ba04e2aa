pub mod cli;
pub mod clifford;
pub mod experiment;
pub mod fit;
pub mod learnability;
pub mod linalg;
pub mod pec;
pub mod pauli;
pub mod pipeline;
pub mod seed;
pub mod spl;
