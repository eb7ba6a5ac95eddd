//! Negotiation coaching: tactic detection, next-move prediction,
//! outcome-driven tactic selection and suggestion realization.

pub mod config;
pub mod corpus;
pub mod detector;
pub mod engine;
pub mod lexicon;
pub mod logistic;
pub mod outcome;
pub mod predictor;
pub mod realizer;
pub mod synth;
pub mod tactic;
