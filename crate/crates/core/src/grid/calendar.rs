//! No-leap (365-day) monthly calendar.

use serde::{Deserialize, Serialize};

const DAYS_IN_MONTH: [u32; 12] = [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];

pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// Days in `month` (1-12) under the no-leap calendar.
pub fn days_in_month(month: u32) -> u32 {
    DAYS_IN_MONTH[(month as usize - 1) % 12]
}

pub fn seconds_in_month(month: u32) -> f64 {
    f64::from(days_in_month(month)) * SECONDS_PER_DAY
}

/// Calendar anchor of a monthly series: month index 0 is `start_year`-`start_month`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonthCalendar {
    pub start_year: i32,
    pub start_month: u32,
}

impl MonthCalendar {
    pub fn new(start_year: i32, start_month: u32) -> Self {
        Self {
            start_year,
            start_month,
        }
    }

    /// (year, month 1-12) of the series index `t`.
    pub fn year_month(&self, t: usize) -> (i32, u32) {
        let zero_based = self.start_month as i64 - 1 + t as i64;
        let year = self.start_year as i64 + zero_based.div_euclid(12);
        let month = zero_based.rem_euclid(12) as u32 + 1;
        (year as i32, month)
    }

    pub fn month_of(&self, t: usize) -> u32 {
        self.year_month(t).1
    }

    /// Series index of (year, month), if it is not before the start.
    pub fn index_of(&self, year: i32, month: u32) -> Option<usize> {
        let offset =
            (year as i64 - self.start_year as i64) * 12 + month as i64 - self.start_month as i64;
        usize::try_from(offset).ok()
    }

    /// Calendar advanced by `t` months.
    pub fn shifted(&self, t: usize) -> Self {
        let (start_year, start_month) = self.year_month(t);
        Self {
            start_year,
            start_month,
        }
    }

    /// `YYYY-MM` label of index `t`.
    pub fn label(&self, t: usize) -> String {
        let (y, m) = self.year_month(t);
        format!("{y:04}-{m:02}")
    }
}

/// Inclusive span of calendar years, January of `first_year` to December of
/// `last_year`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Period {
    pub first_year: i32,
    pub last_year: i32,
}

impl Period {
    pub fn new(first_year: i32, last_year: i32) -> Self {
        Self {
            first_year,
            last_year,
        }
    }

    pub fn n_months(&self) -> usize {
        usize::try_from(self.last_year - self.first_year + 1).map_or(0, |y| 12 * y)
    }

    /// Short label such as `1850–80`, with an en dash and the last two
    /// digits of the final year.
    pub fn label(&self) -> String {
        format!(
            "{}\u{2013}{:02}",
            self.first_year,
            self.last_year.rem_euclid(100)
        )
    }
}

impl std::fmt::Display for Period {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn period_label_and_length() {
        let p = Period::new(1850, 1880);
        assert_eq!(p.label(), "1850\u{2013}80");
        assert_eq!(p.n_months(), 372);
        assert_eq!(Period::new(2050, 2080).to_string(), "2050\u{2013}80");
        assert_eq!(Period::new(1990, 2005).label(), "1990\u{2013}05");
        assert_eq!(Period::new(1900, 1899).n_months(), 0);
    }

    #[test]
    fn no_leap_year_has_365_days() {
        let total: u32 = (1..=12).map(days_in_month).sum();
        assert_eq!(total, 365);
        assert_eq!(days_in_month(2), 28);
    }

    #[test]
    fn index_arithmetic() {
        let cal = MonthCalendar::new(1850, 1);
        assert_eq!(cal.year_month(0), (1850, 1));
        assert_eq!(cal.year_month(11), (1850, 12));
        assert_eq!(cal.year_month(12), (1851, 1));
        assert_eq!(cal.year_month(371), (1880, 12));
        assert_eq!(cal.index_of(1851, 1), Some(12));
        assert_eq!(cal.index_of(1849, 12), None);

        let mid = MonthCalendar::new(2000, 11);
        assert_eq!(mid.year_month(2), (2001, 1));
        assert_eq!(mid.shifted(2), MonthCalendar::new(2001, 1));
        assert_eq!(mid.label(1), "2000-12");
    }
}
