use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SupplyError;

/// One patient's check-in: center index and 1-based day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arrival {
    pub center: usize,
    pub day: usize,
}

/// Sparse form of the binary demand tensor `INC[p, c, t]`: patient `p`
/// checks in at `arrivals[p]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemandProfile {
    pub horizon: usize,
    pub num_centers: usize,
    pub arrivals: Vec<Arrival>,
}

impl DemandProfile {
    pub fn new(
        horizon: usize,
        num_centers: usize,
        arrivals: Vec<Arrival>,
    ) -> Result<Self, SupplyError> {
        for (p, a) in arrivals.iter().enumerate() {
            if a.center >= num_centers {
                return Err(SupplyError::Demand(format!(
                    "patient {} uses center {} of {num_centers}",
                    p + 1,
                    a.center
                )));
            }
            if a.day == 0 || a.day > horizon {
                return Err(SupplyError::Demand(format!(
                    "patient {} arrives on day {} outside 1..={horizon}",
                    p + 1,
                    a.day
                )));
            }
        }
        Ok(Self {
            horizon,
            num_centers,
            arrivals,
        })
    }

    pub fn num_patients(&self) -> usize {
        self.arrivals.len()
    }

    /// `INC[p, c, t]` with 1-based `t`.
    pub fn inc(&self, p: usize, c: usize, t: usize) -> bool {
        let a = self.arrivals[p];
        a.center == c && a.day == t
    }

    pub fn last_day(&self) -> usize {
        self.arrivals.iter().map(|a| a.day).max().unwrap_or(0)
    }

    /// Arrivals per center per day, indexed `[center][day - 1]`.
    pub fn center_day_counts(&self) -> Vec<Vec<usize>> {
        let mut counts = vec![vec![0; self.horizon]; self.num_centers];
        for a in &self.arrivals {
            counts[a.center][a.day - 1] += 1;
        }
        counts
    }

    /// Total arrivals per day over all centers, zero-padded to `width`.
    pub fn daily_totals(&self, width: usize) -> Result<Vec<f64>, SupplyError> {
        if self.horizon > width {
            return Err(SupplyError::Demand(format!(
                "horizon {} exceeds feature width {width}",
                self.horizon
            )));
        }
        let mut out = vec![0.0; width];
        for a in &self.arrivals {
            out[a.day - 1] += 1.0;
        }
        Ok(out)
    }

    /// Writes `p,c,t` rows (all 1-based) after a header comment carrying
    /// the horizon and center count.
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "# horizon={} centers={}", self.horizon, self.num_centers)?;
        writeln!(w, "p,c,t")?;
        for (p, a) in self.arrivals.iter().enumerate() {
            writeln!(w, "{},{},{}", p + 1, a.center + 1, a.day)?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SupplyError> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SupplyError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        Self::read_from(BufReader::new(file), &path.display().to_string())
    }

    pub fn read_from(reader: impl BufRead, name: &str) -> Result<Self, SupplyError> {
        let err = |line: usize, message: String| SupplyError::Parse {
            path: format!("{name}:{line}"),
            message,
        };
        let mut horizon = None;
        let mut centers = None;
        let mut arrivals = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            let lineno = i + 1;
            if let Some(meta) = line.strip_prefix('#') {
                for kv in meta.split_whitespace() {
                    match kv.split_once('=') {
                        Some(("horizon", v)) => horizon = v.parse().ok(),
                        Some(("centers", v)) => centers = v.parse().ok(),
                        _ => {}
                    }
                }
                continue;
            }
            if line.is_empty() || line == "p,c,t" {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(err(
                    lineno,
                    format!("expected 3 fields, found {}", fields.len()),
                ));
            }
            let nums: Result<Vec<usize>, _> = fields.iter().map(|f| f.parse::<usize>()).collect();
            let nums = nums.map_err(|e| err(lineno, e.to_string()))?;
            if nums[0] != arrivals.len() + 1 {
                return Err(err(lineno, format!("patient {} out of sequence", nums[0])));
            }
            if nums[1] == 0 {
                return Err(err(lineno, "center indices are 1-based".into()));
            }
            arrivals.push(Arrival {
                center: nums[1] - 1,
                day: nums[2],
            });
        }
        let horizon = horizon.ok_or_else(|| err(1, "missing horizon in header".into()))?;
        let centers = centers.ok_or_else(|| err(1, "missing centers in header".into()))?;
        Self::new(horizon, centers, arrivals)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_round_trip() {
        let d = DemandProfile::new(
            5,
            2,
            vec![
                Arrival { center: 0, day: 1 },
                Arrival { center: 1, day: 5 },
                Arrival { center: 1, day: 5 },
            ],
        )
        .unwrap();
        let mut buf = Vec::new();
        d.write_to(&mut buf).unwrap();
        let back = DemandProfile::read_from(&buf[..], "mem").unwrap();
        assert_eq!(back, d);
        assert_eq!(
            d.daily_totals(7).unwrap(),
            vec![1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0]
        );
        assert!(d.inc(2, 1, 5) && !d.inc(2, 0, 5));
    }

    #[test]
    fn rejects_out_of_range_days() {
        assert!(DemandProfile::new(3, 1, vec![Arrival { center: 0, day: 4 }]).is_err());
        assert!(DemandProfile::new(3, 1, vec![Arrival { center: 0, day: 0 }]).is_err());
        assert!(DemandProfile::new(3, 1, vec![Arrival { center: 1, day: 1 }]).is_err());
    }
}
