pub mod automata;
pub mod cli;
pub mod envs;
pub mod game;
pub mod learn;
pub mod shield;
