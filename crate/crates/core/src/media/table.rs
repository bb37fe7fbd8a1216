use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::MediaError;

/// Tissue label such as `-1` or `1.1`, stored in tenths so lookups are exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MediaNumber(i32);

impl MediaNumber {
    pub fn from_tenths(t: i32) -> Self {
        Self(t)
    }

    pub fn tenths(self) -> i32 {
        self.0
    }

    pub fn from_f64(v: f64) -> Result<Self, MediaError> {
        let t = v * 10.0;
        let r = t.round();
        if !t.is_finite() || (t - r).abs() > 1e-6 || r.abs() > i32::MAX as f64 {
            return Err(MediaError::BadMediaNumber(v.to_string()));
        }
        Ok(Self(r as i32))
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 10.0
    }
}

impl std::str::FromStr for MediaNumber {
    type Err = MediaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let v: f64 = s
            .trim()
            .parse()
            .map_err(|_| MediaError::BadMediaNumber(s.to_string()))?;
        Self::from_f64(v)
    }
}

impl fmt::Display for MediaNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let a = self.0.unsigned_abs();
        if a.is_multiple_of(10) {
            write!(f, "{sign}{}", a / 10)
        } else {
            write!(f, "{sign}{}.{}", a / 10, a % 10)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MediaRow {
    pub media: MediaNumber,
    pub tissue: String,
    pub eps: f64,
    pub sigma: f64,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    media: String,
    tissue: String,
    eps: f64,
    sigma: f64,
}

/// Media number to `(eps_r, sigma)` table.
#[derive(Debug, Clone, PartialEq)]
pub struct MediaTable {
    rows: BTreeMap<MediaNumber, MediaRow>,
}

impl MediaTable {
    pub fn new(rows: Vec<MediaRow>) -> Result<Self, MediaError> {
        let mut map = BTreeMap::new();
        for row in rows {
            if !(row.eps >= 1.0) {
                return Err(MediaError::InvalidRow {
                    media: row.media,
                    reason: format!("eps {} < 1", row.eps),
                });
            }
            if !(row.sigma >= 0.0) {
                return Err(MediaError::InvalidRow {
                    media: row.media,
                    reason: format!("sigma {} < 0", row.sigma),
                });
            }
            if map.insert(row.media, row.clone()).is_some() {
                return Err(MediaError::DuplicateMedia(row.media));
            }
        }
        Ok(Self { rows: map })
    }

    /// Breast-phantom tissue table at 6 GHz. Skin, muscle, transitional and
    /// fatty tissue carry background values.
    pub fn default_breast() -> Self {
        let rows = [
            ("Immersion medium", -10, 5.0, 0.0),
            ("Skin", -20, 5.0, 0.0),
            ("Muscle", -40, 5.0, 0.0),
            ("Fibroconnective/glandular 1", 11, 45.0, 6.0),
            ("Fibroconnective/glandular 2", 12, 40.0, 5.0),
            ("Fibroconnective/glandular 3", 13, 40.0, 5.0),
            ("Transitional", 20, 5.0, 0.0),
            ("Fatty-1", 31, 5.0, 0.0),
            ("Fatty-2", 32, 5.0, 0.0),
            ("Fatty-3", 33, 5.0, 0.0),
        ];
        Self::new(
            rows.iter()
                .map(|&(tissue, t, eps, sigma)| MediaRow {
                    media: MediaNumber(t),
                    tissue: tissue.to_string(),
                    eps,
                    sigma,
                })
                .collect(),
        )
        .expect("built-in table is valid")
    }

    pub fn lookup(&self, media: MediaNumber) -> Option<&MediaRow> {
        self.rows.get(&media)
    }

    pub fn rows(&self) -> impl Iterator<Item = &MediaRow> {
        self.rows.values()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Reads CSV with header `media,tissue,eps,sigma`.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, MediaError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let rows = rdr
            .deserialize::<CsvRow>()
            .map(|r| {
                let r = r?;
                Ok(MediaRow {
                    media: r.media.parse()?,
                    tissue: r.tissue,
                    eps: r.eps,
                    sigma: r.sigma,
                })
            })
            .collect::<Result<Vec<_>, MediaError>>()?;
        Self::new(rows)
    }

    pub fn to_csv<W: Write>(&self, writer: W) -> Result<(), MediaError> {
        let mut w = csv::Writer::from_writer(writer);
        for row in self.rows.values() {
            w.serialize(CsvRow {
                media: row.media.to_string(),
                tissue: row.tissue.clone(),
                eps: row.eps,
                sigma: row.sigma,
            })?;
        }
        w.flush()?;
        Ok(())
    }
}
