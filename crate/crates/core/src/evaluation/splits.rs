//! Rolling-origin train/test plans, two per calendar month.

use chrono::{Datelike, Duration, NaiveDate};
use serde::Serialize;

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Month {
    pub year: i32,
    pub month: u32,
}

impl Month {
    pub fn of(date: NaiveDate) -> Self {
        Month { year: date.year(), month: date.month() }
    }

    pub fn first_day(self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, self.month, 1).expect("valid month")
    }

    pub fn last_day(self) -> NaiveDate {
        let (y, m) = if self.month == 12 { (self.year + 1, 1) } else { (self.year, self.month + 1) };
        NaiveDate::from_ymd_opt(y, m, 1).expect("valid month") - Duration::days(1)
    }

    pub fn label(self) -> String {
        format!("{:04}-{:02}", self.year, self.month)
    }
}

/// One train → evaluate step. Date ranges are inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SplitPlan {
    pub month: Month,
    /// 1 evaluates the first window W1, 2 evaluates W2.
    pub step: u8,
    pub train_start: NaiveDate,
    pub train_end: NaiveDate,
    pub test_start: NaiveDate,
    pub test_end: NaiveDate,
}

impl SplitPlan {
    pub fn id(&self) -> String {
        format!("{}-w{}", self.month.label(), self.step)
    }

    pub fn in_train(&self, d: NaiveDate) -> bool {
        d >= self.train_start && d <= self.train_end
    }

    pub fn in_test(&self, d: NaiveDate) -> bool {
        d >= self.test_start && d <= self.test_end
    }
}

/// With `D` the month's last day: W1 = `[D−(H1+H2)+1, D−H2]` trained on the
/// month up to `D−(H1+H2)`, then W2 = `[D−H2+1, D]` trained on the month up to
/// `D−H2` (so the second training set absorbs W1).
pub fn rolling_splits(months: &[Month], h1: u32, h2: u32) -> Result<Vec<SplitPlan>, EvalError> {
    if h1 == 0 || h2 == 0 {
        return Err(EvalError::BadHorizon { h1, h2 });
    }
    let mut plans = Vec::with_capacity(months.len() * 2);
    for &m in months {
        let first = m.first_day();
        let last = m.last_day();
        let w1_start = last - Duration::days((h1 + h2) as i64 - 1);
        let w2_start = last - Duration::days(h2 as i64 - 1);
        if w1_start <= first {
            return Err(EvalError::MonthTooShort { month: m.label(), days: last.day(), needed: h1 + h2 + 1 });
        }
        plans.push(SplitPlan {
            month: m,
            step: 1,
            train_start: first,
            train_end: w1_start - Duration::days(1),
            test_start: w1_start,
            test_end: w2_start - Duration::days(1),
        });
        plans.push(SplitPlan {
            month: m,
            step: 2,
            train_start: first,
            train_end: w2_start - Duration::days(1),
            test_start: w2_start,
            test_end: last,
        });
    }
    Ok(plans)
}

/// Distinct months touched by `dates`, in order.
pub fn months_of(dates: impl IntoIterator<Item = NaiveDate>) -> Vec<Month> {
    let mut m: Vec<Month> = dates.into_iter().map(Month::of).collect();
    m.sort();
    m.dedup();
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2023, m, day).unwrap()
    }

    #[test]
    fn february_leap_year() {
        let p = rolling_splits(&[Month { year: 2024, month: 2 }], 7, 7).unwrap();
        assert_eq!(p[1].test_end, NaiveDate::from_ymd_opt(2024, 2, 29).unwrap());
        assert_eq!(p[0].train_end, NaiveDate::from_ymd_opt(2024, 2, 15).unwrap());
    }

    #[test]
    fn too_short_month() {
        assert!(matches!(
            rolling_splits(&[Month { year: 2023, month: 2 }], 14, 14),
            Err(EvalError::MonthTooShort { .. })
        ));
        assert!(rolling_splits(&[Month { year: 2023, month: 1 }], 0, 7).is_err());
    }

    #[test]
    fn months_of_dedups() {
        let m = months_of([d(3, 2), d(1, 5), d(3, 9)]);
        assert_eq!(m, vec![Month { year: 2023, month: 1 }, Month { year: 2023, month: 3 }]);
    }
}
