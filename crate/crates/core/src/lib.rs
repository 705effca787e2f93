//! Troll detection for Weibo-style comment streams.
//!
//! The pipeline runs in stages that each live in their own module:
//!
//! * [`corpus`] parses segmentation corpora, labeled text corpora, comment CSV
//!   files and recorded hotflow JSON packets, and cleans raw comment text.
//! * [`seg_hmm`] is a supervised 4-state (B/M/E/S) HMM word segmenter.
//! * [`embedding`] trains skip-gram negative-sampling word vectors.
//! * [`sentiment`] combines a naive-Bayes polarity posterior with an
//!   embedding similarity factor into a `[0, 1]` score.
//! * [`emotion`] builds MI/CHI/TF-IDF word features and scores comments
//!   against one chain HMM per emotion.
//! * [`features`] assembles the F0..F18 per-comment feature vectors.
//! * [`classify`] trains gradient-boosted trees and an SMO-based SVM, ranks
//!   features, and runs recursive feature elimination.
//! * [`eval`] holds accuracy, k-fold splitting and cross-validation reports.
//! * [`pipeline`] wires the trained models together for end-to-end scoring,
//!   which [`service`] exposes over HTTP and [`cli`] from the command line.

pub mod classify;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod embedding;
pub mod emotion;
pub mod eval;
pub mod features;
pub mod pipeline;
pub mod seg_hmm;
pub mod sentiment;
pub mod service;
pub mod synth;

pub(crate) mod util;
