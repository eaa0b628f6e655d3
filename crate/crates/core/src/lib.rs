//! Online multi-object tracking for ant-colony video.
//!
//! Tracking-by-detection: a constant-velocity Kalman filter gates candidate
//! pairs by motion, per-track galleries of appearance descriptors supply the
//! association cost, and an age-ordered matching cascade with an IoU
//! fallback links detections into identities. The crate also carries the
//! forward math of the detection head, CLEAR-style evaluation metrics and a
//! seeded colony simulator.
//!
//! The crate is `no_std` and needs only `alloc`.

#![no_std]

extern crate alloc;

pub mod association;
pub mod descriptor;
pub mod detmath;
mod error;
pub mod geometry;
pub mod metrics;
pub mod motion;
pub mod sim;
pub mod tracker;

pub use error::{Error, Result};
