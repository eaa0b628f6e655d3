//! `key=value` settings for the tracker and the simulator. Defaults are
//! overridden by a config file, which is overridden by `--set` flags.

use std::path::Path;

use antrack_core::sim::ScenarioConfig;
use antrack_core::tracker::TrackerConfig;

use crate::error::{CliError, Result};
use crate::formats::parse_config;

fn num<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("invalid value '{value}' for {key}"))
}

fn flag(key: &str, value: &str) -> std::result::Result<bool, String> {
    match value {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(format!("invalid value '{value}' for {key}, expected true or false")),
    }
}

pub trait Settings {
    fn apply(&mut self, key: &str, value: &str) -> std::result::Result<(), String>;
}

impl Settings for TrackerConfig {
    fn apply(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "t1" => self.t1 = num(key, value)?,
            "t2" => self.t2 = num(key, value)?,
            "max_age" => self.max_age = num(key, value)?,
            "n_init" => self.n_init = num(key, value)?,
            "gallery_capacity" => self.gallery_capacity = num(key, value)?,
            "iou_max_distance" => self.iou_max_distance = num(key, value)?,
            "min_confidence" => self.min_confidence = num(key, value)?,
            "std_weight_position" => self.motion.std_weight_position = num(key, value)?,
            "std_weight_velocity" => self.motion.std_weight_velocity = num(key, value)?,
            "std_weight_measurement" => self.motion.std_weight_measurement = num(key, value)?,
            _ => return Err(format!("unknown tracker setting '{key}'")),
        }
        Ok(())
    }
}

impl Settings for ScenarioConfig {
    fn apply(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "arena_width" => self.arena_width = num(key, value)?,
            "arena_height" => self.arena_height = num(key, value)?,
            "n_agents" => self.n_agents = num(key, value)?,
            "frames" => self.frames = num(key, value)?,
            "box_size" => self.box_size = num(key, value)?,
            "speed_mean" => self.motion.speed_mean = num(key, value)?,
            "speed_std" => self.motion.speed_std = num(key, value)?,
            "turn_std" => self.motion.turn_std = num(key, value)?,
            "abrupt_turn_prob" => self.motion.abrupt_turn_prob = num(key, value)?,
            "pause_prob" => self.motion.pause_prob = num(key, value)?,
            "pause_frames" => self.motion.pause_frames = num(key, value)?,
            "personal_space" => self.motion.personal_space = num(key, value)?,
            "entry_exit" => self.entry_exit = flag(key, value)?,
            "entry_prob" => self.entry_prob = num(key, value)?,
            "miss_prob" => self.noise.miss_prob = num(key, value)?,
            "false_positive_rate" => self.noise.false_positive_rate = num(key, value)?,
            "jitter_std" => self.noise.jitter_std = num(key, value)?,
            "descriptor_noise_std" => self.noise.descriptor_noise_std = num(key, value)?,
            "min_initial_separation" => self.min_initial_separation = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            _ => return Err(format!("unknown scenario setting '{key}'")),
        }
        Ok(())
    }
}

/// Applies an optional config file, then `key=value` overrides.
pub fn resolve<S: Settings>(mut settings: S, file: Option<&Path>, overrides: &[String]) -> Result<S> {
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        for (key, value, line) in parse_config(&text, path)? {
            settings.apply(&key, &value).map_err(|msg| CliError::Parse {
                path: path.to_path_buf(),
                line,
                msg,
            })?;
        }
    }
    for raw in overrides {
        let (key, value) = raw
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got '{raw}'")))?;
        settings.apply(key.trim(), value.trim()).map_err(CliError::Usage)?;
    }
    Ok(settings)
}
