//! ISO-week calendar shared by the review panel and the price series.
//!
//! A week starts on Monday. Its index is the floor of (days since
//! 1970-01-01 of its Monday) / 7, so consecutive weeks have consecutive
//! indices and week 0 starts on 1970-01-05.

use chrono::{Datelike, Duration, NaiveDate};

pub type WeekIndex = i64;

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid epoch")
}

pub fn week_monday_of(date: NaiveDate) -> NaiveDate {
    date - Duration::days(i64::from(date.weekday().num_days_from_monday()))
}

pub fn week_index(date: NaiveDate) -> WeekIndex {
    let monday = week_monday_of(date);
    (monday - epoch()).num_days().div_euclid(7)
}

/// Monday of the week with the given index.
pub fn week_start(week: WeekIndex) -> NaiveDate {
    epoch() + Duration::days(week * 7 + 4)
}

/// Adds calendar months, clamping the day to the target month's length.
pub fn add_months(date: NaiveDate, months: u32) -> NaiveDate {
    let total = date.year() * 12 + date.month0() as i32 + months as i32;
    let (year, month0) = (total.div_euclid(12), total.rem_euclid(12) as u32);
    let mut day = date.day();
    loop {
        if let Some(d) = NaiveDate::from_ymd_opt(year, month0 + 1, day) {
            return d;
        }
        day -= 1;
    }
}
