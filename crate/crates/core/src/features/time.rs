use std::f64::consts::PI;

use chrono::{Datelike, NaiveDateTime, Timelike};

pub const TIME_DIM: usize = 4;
const SECONDS_PER_DAY: f64 = 86_400.0;

/// Time of day and day of week, each as a point on the unit circle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeFeatures {
    pub sin_day: f64,
    pub cos_day: f64,
    pub sin_week: f64,
    pub cos_week: f64,
}

impl TimeFeatures {
    pub fn to_array(self) -> [f64; TIME_DIM] {
        [self.sin_day, self.cos_day, self.sin_week, self.cos_week]
    }
}

/// Week angle uses the weekday (Monday = 0) plus the elapsed fraction of the
/// day, so the encoding is continuous across midnight.
pub fn encode_time(ts: &NaiveDateTime) -> TimeFeatures {
    let secs = f64::from(3600 * ts.hour() + 60 * ts.minute() + ts.second());
    let day_angle = 2.0 * PI * secs / SECONDS_PER_DAY;
    let weekday = f64::from(ts.weekday().num_days_from_monday());
    let week_angle = 2.0 * PI * (weekday + secs / SECONDS_PER_DAY) / 7.0;
    TimeFeatures { sin_day: day_angle.sin(), cos_day: day_angle.cos(), sin_week: week_angle.sin(), cos_week: week_angle.cos() }
}
