pub mod alerting;
pub mod eggcount;
pub mod envforecast;
pub mod geometry;
pub mod production;
pub mod recommend;
pub mod optimize;
