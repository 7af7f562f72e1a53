//! Time-of-day encodings, day periods and the rest-day indicator.

use std::f64::consts::PI;

use chrono::{Datelike, NaiveDateTime, Timelike, Weekday};
use serde::{Deserialize, Serialize};

use crate::ingestion::HolidayCalendar;

pub const MINUTES_PER_DAY: u32 = 1440;

/// The study region rests on Friday and Saturday.
pub const DEFAULT_REST_DAYS: [Weekday; 2] = [Weekday::Fri, Weekday::Sat];

/// Five day periods. Boundaries are left-inclusive: 09:00 is midday.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DayPeriod {
    MorningPeak,
    MiddayOffpeak,
    AfternoonPeak,
    EveningNightOffpeak,
    NightEarlyMorning,
}

impl DayPeriod {
    pub const ALL: [DayPeriod; 5] = [
        DayPeriod::MorningPeak,
        DayPeriod::MiddayOffpeak,
        DayPeriod::AfternoonPeak,
        DayPeriod::EveningNightOffpeak,
        DayPeriod::NightEarlyMorning,
    ];

    pub fn of_minutes(minutes: u32) -> DayPeriod {
        match minutes % MINUTES_PER_DAY {
            360..=539 => DayPeriod::MorningPeak,
            540..=899 => DayPeriod::MiddayOffpeak,
            900..=1079 => DayPeriod::AfternoonPeak,
            1080..=1379 => DayPeriod::EveningNightOffpeak,
            _ => DayPeriod::NightEarlyMorning,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DayPeriod::MorningPeak => "morning_peak",
            DayPeriod::MiddayOffpeak => "midday_offpeak",
            DayPeriod::AfternoonPeak => "afternoon_peak",
            DayPeriod::EveningNightOffpeak => "evening_night_offpeak",
            DayPeriod::NightEarlyMorning => "night_early_morning",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeFeatures {
    pub minutes_in_day: u32,
    pub time_sin: f64,
    pub time_cos: f64,
    pub period: DayPeriod,
    pub weekend_holiday: bool,
}

pub fn time_features(
    departure_time: NaiveDateTime,
    weekday: Weekday,
    holidays: &HolidayCalendar,
    rest_days: &[Weekday],
) -> TimeFeatures {
    let minutes = departure_time.hour() * 60 + departure_time.minute();
    let angle = 2.0 * PI * minutes as f64 / MINUTES_PER_DAY as f64;
    TimeFeatures {
        minutes_in_day: minutes,
        time_sin: angle.sin(),
        time_cos: angle.cos(),
        period: DayPeriod::of_minutes(minutes),
        weekend_holiday: rest_days.contains(&weekday) || holidays.contains(departure_time.date()),
    }
}

/// Weekday as 0 = Sunday … 6 = Saturday.
pub fn weekday_code(day: Weekday) -> u32 {
    day.num_days_from_sunday()
}

/// Weekday of the timestamp itself (the event's recorded weekday should agree).
pub fn weekday_of(t: NaiveDateTime) -> Weekday {
    t.weekday()
}
