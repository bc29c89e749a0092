pub mod elliptic;
pub mod error;
pub mod expr;
pub mod grid;
pub mod nonlocal;
pub mod oracle;
pub mod problems;
