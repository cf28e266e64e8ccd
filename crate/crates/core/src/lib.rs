pub mod numerics;
pub mod primes;
pub mod targets;
pub mod balance;
pub mod solver;
pub mod forge;
pub mod continuation;
