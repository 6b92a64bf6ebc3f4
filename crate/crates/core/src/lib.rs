pub mod action;
pub mod dynamics;
pub mod error;
pub mod exact;
pub mod geometry;
pub mod integrate;
pub mod semiclassics;
pub mod symbols;
