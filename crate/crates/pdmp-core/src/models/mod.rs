pub mod morris_lecar;
pub mod telegraph;
