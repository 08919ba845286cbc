pub mod analyze;
pub mod bench;
pub mod compress;
pub mod inspect;
pub mod run;
pub mod train;
