pub mod baselines;
pub mod channel;
pub mod coeff_opt;
pub mod error;
pub mod ifmr;
pub mod linalg;
pub mod oracle;
pub mod rates;
pub mod selftest;
pub mod sim;
