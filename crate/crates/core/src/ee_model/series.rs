use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An ISO 8601 calendar week.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct IsoWeek {
    year: i32,
    week: u32,
}

impl IsoWeek {
    pub fn new(year: i32, week: u32) -> Result<Self> {
        NaiveDate::from_isoywd_opt(year, week, Weekday::Mon)
            .ok_or_else(|| Error::domain(format!("{year}-W{week:02} is not an ISO week")))?;
        Ok(Self { year, week })
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn week(&self) -> u32 {
        self.week
    }

    fn monday(&self) -> NaiveDate {
        NaiveDate::from_isoywd_opt(self.year, self.week, Weekday::Mon).expect("validated week")
    }

    fn from_date(d: NaiveDate) -> Self {
        let iso = d.iso_week();
        Self {
            year: iso.year(),
            week: iso.week(),
        }
    }

    pub fn next(&self) -> Self {
        Self::from_date(self.monday() + chrono::Duration::weeks(1))
    }

    pub fn plus(&self, weeks: i64) -> Self {
        Self::from_date(self.monday() + chrono::Duration::weeks(weeks))
    }

    /// Signed number of weeks from `self` to `other`.
    pub fn weeks_until(&self, other: &IsoWeek) -> i64 {
        (other.monday() - self.monday()).num_weeks()
    }

    /// Label of the season containing this week, for seasons starting at
    /// ISO week `start_week` (e.g. `"2011/12"`). With `start_week == 1`
    /// seasons are calendar years.
    pub fn season_label(&self, start_week: u32) -> String {
        if start_week <= 1 {
            return self.year.to_string();
        }
        let first = if self.week >= start_week {
            self.year
        } else {
            self.year - 1
        };
        format!("{first}/{:02}", (first + 1).rem_euclid(100))
    }
}

impl fmt::Display for IsoWeek {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-W{:02}", self.year, self.week)
    }
}

impl FromStr for IsoWeek {
    type Err = Error;

    /// Parses `YYYY-Www` (also accepts `YYYY-ww`).
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::domain(format!("cannot parse ISO week '{s}'"));
        let (y, w) = s.trim().split_once('-').ok_or_else(bad)?;
        let w = w.trim_start_matches(['W', 'w']);
        let year = y.parse().map_err(|_| bad())?;
        let week = w.parse().map_err(|_| bad())?;
        Self::new(year, week)
    }
}

impl TryFrom<String> for IsoWeek {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<IsoWeek> for String {
    fn from(w: IsoWeek) -> Self {
        w.to_string()
    }
}

/// Weekly counts for `G` groups over `T` consecutive weeks.
#[derive(Debug, Clone, PartialEq)]
pub struct SurveillanceSeries {
    /// `counts[g][t]`
    counts: Vec<Vec<u64>>,
    weeks: Vec<IsoWeek>,
    labels: Vec<String>,
    populations: Option<Vec<f64>>,
}

impl SurveillanceSeries {
    pub fn new(
        counts: Vec<Vec<u64>>,
        weeks: Vec<IsoWeek>,
        labels: Vec<String>,
        populations: Option<Vec<f64>>,
    ) -> Result<Self> {
        let g = counts.len();
        if g == 0 {
            return Err(Error::domain("series needs at least one group"));
        }
        if labels.len() != g {
            return Err(Error::LengthMismatch {
                left: labels.len(),
                right: g,
            });
        }
        let t = weeks.len();
        if t < 2 {
            return Err(Error::domain("series needs at least two weeks"));
        }
        if let Some(row) = counts.iter().find(|r| r.len() != t) {
            return Err(Error::LengthMismatch {
                left: row.len(),
                right: t,
            });
        }
        if let Some(w) = weeks.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::domain(format!(
                "calendar weeks not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        if let Some(p) = &populations {
            if p.len() != g || p.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                return Err(Error::domain("populations must be positive, one per group"));
            }
        }
        Ok(Self {
            counts,
            weeks,
            labels,
            populations,
        })
    }

    pub fn n_groups(&self) -> usize {
        self.counts.len()
    }

    pub fn n_times(&self) -> usize {
        self.weeks.len()
    }

    pub fn count(&self, g: usize, t: usize) -> u64 {
        self.counts[g][t]
    }

    pub fn group_counts(&self, g: usize) -> &[u64] {
        &self.counts[g]
    }

    /// Counts of all groups in week `t`.
    pub fn counts_at(&self, t: usize) -> Vec<u64> {
        self.counts.iter().map(|r| r[t]).collect()
    }

    pub fn weeks(&self) -> &[IsoWeek] {
        &self.weeks
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn populations(&self) -> Option<&[f64]> {
        self.populations.as_deref()
    }

    pub fn with_populations(self, populations: Vec<f64>) -> Result<Self> {
        Self::new(self.counts, self.weeks, self.labels, Some(populations))
    }

    /// Calendar week of time index `t`, extrapolated past the end of the
    /// data.
    pub fn week_at(&self, t: usize) -> IsoWeek {
        match self.weeks.get(t) {
            Some(w) => *w,
            None => {
                let last = self.weeks.len() - 1;
                self.weeks[last].plus((t - last) as i64)
            }
        }
    }

    /// Time index of a calendar week, also past the end of the data.
    pub fn index_of(&self, week: IsoWeek) -> Option<usize> {
        let d = self.weeks[0].weeks_until(&week);
        if d < 0 {
            return None;
        }
        let t = d as usize;
        (t >= self.n_times() || self.weeks[t] == week).then_some(t)
    }

    /// True when consecutive weeks are exactly one week apart.
    pub fn is_contiguous(&self) -> bool {
        self.weeks.windows(2).all(|w| w[0].next() == w[1])
    }

    /// Totals per group over the time range.
    pub fn totals(&self, range: std::ops::Range<usize>) -> Vec<u64> {
        self.counts
            .iter()
            .map(|r| r[range.clone()].iter().sum())
            .collect()
    }
}
