//! Service types and the service catalog.
//!
//! The catalog file is plain text, one service type per line, with the
//! comma-separated fields `id, w, r, phi, lambda, mu`. A header line is
//! optional, blank lines and `#` comments are ignored.

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

/// One row of the service catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceType {
    /// 1-based identifier.
    pub id: usize,
    /// Resource demand in whole units (CPU cores).
    pub demand: u32,
    pub revenue: f64,
    pub federation_cost: f64,
    /// Nominal arrival rate, requests per hour.
    pub arrival_rate: f64,
    /// Nominal departure rate per alive instance, per hour.
    pub departure_rate: f64,
}

impl ServiceType {
    pub fn federated_revenue(&self) -> f64 {
        self.revenue - self.federation_cost
    }
}

/// Immutable, ordered list of service types with contiguous ids `1..=I`.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    types: Vec<ServiceType>,
}

impl Catalog {
    pub fn new(mut types: Vec<ServiceType>) -> Result<Self> {
        if types.is_empty() {
            return Err(Error::parse(0, "catalog has no service types"));
        }
        types.sort_by_key(|t| t.id);
        for (idx, t) in types.iter().enumerate() {
            if t.id != idx + 1 {
                let message = if idx > 0 && types[idx - 1].id == t.id {
                    format!("duplicate id {}", t.id)
                } else {
                    format!("missing id {}", idx + 1)
                };
                return Err(Error::parse(0, message));
            }
            validate(t).map_err(|m| Error::parse(0, m))?;
        }
        Ok(Catalog { types })
    }

    /// The three service types used throughout the evaluation.
    pub fn reference() -> Self {
        let row = |id, demand, revenue, federation_cost, arrival_rate, departure_rate| ServiceType {
            id,
            demand,
            revenue,
            federation_cost,
            arrival_rate,
            departure_rate,
        };
        Catalog {
            types: vec![
                row(1, 2, 100.0, 30.0, 10.0, 0.4),
                row(2, 1, 20.0, 5.0, 5.0, 0.05),
                row(3, 3, 50.0, 45.0, 2.0, 0.2),
            ],
        }
    }

    pub fn parse(source: &str) -> Result<Self> {
        let mut types: Vec<ServiceType> = Vec::new();
        let mut seen_data = false;
        for (n, raw) in source.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if !seen_data && fields.first().is_some_and(|f| f.parse::<f64>().is_err()) {
                // header line
                seen_data = true;
                continue;
            }
            seen_data = true;
            if fields.len() != 6 {
                return Err(Error::parse(
                    line_no,
                    format!("expected 6 fields, found {}", fields.len()),
                ));
            }
            let id: usize = fields[0]
                .parse()
                .map_err(|_| Error::parse(line_no, format!("invalid id `{}`", fields[0])))?;
            let demand: u32 = fields[1]
                .parse()
                .map_err(|_| Error::parse(line_no, format!("invalid demand `{}`", fields[1])))?;
            let mut reals = [0.0; 4];
            for (slot, (name, text)) in reals
                .iter_mut()
                .zip(["revenue", "federation cost", "arrival rate", "departure rate"].iter().zip(&fields[2..]))
            {
                *slot = text
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(line_no, format!("invalid {name} `{text}`")))?;
            }
            let t = ServiceType {
                id,
                demand,
                revenue: reals[0],
                federation_cost: reals[1],
                arrival_rate: reals[2],
                departure_rate: reals[3],
            };
            validate(&t).map_err(|m| Error::parse(line_no, m))?;
            if types.iter().any(|other| other.id == id) {
                return Err(Error::parse(line_no, format!("duplicate id {id}")));
            }
            types.push(t);
        }
        Catalog::new(types)
    }

    pub fn load(path: impl AsRef<Path>) -> anyhow::Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("reading catalog {}: {e}", path.display()))?;
        Ok(Catalog::parse(&text)?)
    }

    /// Number of service types, `I`.
    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    /// Looks up a service type by its 1-based id.
    pub fn lookup(&self, id: usize) -> Result<&ServiceType> {
        id.checked_sub(1)
            .and_then(|idx| self.types.get(idx))
            .ok_or(Error::TypeOutOfRange(id))
    }

    /// Looks up a service type by its 0-based index.
    pub fn get(&self, index: usize) -> Result<&ServiceType> {
        self.types.get(index).ok_or(Error::TypeOutOfRange(index + 1))
    }

    pub fn iter(&self) -> impl Iterator<Item = &ServiceType> {
        self.types.iter()
    }

    pub fn demands(&self) -> impl Iterator<Item = u32> + '_ {
        self.types.iter().map(|t| t.demand)
    }
}

fn validate(t: &ServiceType) -> std::result::Result<(), String> {
    if t.demand == 0 {
        return Err("non-positive demand".into());
    }
    if !(t.revenue >= 0.0) {
        return Err("negative revenue".into());
    }
    if !(t.federation_cost >= 0.0) {
        return Err("negative federation cost".into());
    }
    if !(t.arrival_rate > 0.0) {
        return Err("non-positive arrival rate".into());
    }
    if !(t.departure_rate > 0.0) {
        return Err("non-positive departure rate".into());
    }
    Ok(())
}

impl fmt::Display for Catalog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "id,w,r,phi,lambda,mu")?;
        for t in &self.types {
            writeln!(
                f,
                "{},{},{},{},{},{}",
                t.id, t.demand, t.revenue, t.federation_cost, t.arrival_rate, t.departure_rate
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const REFERENCE: &str = "id,w,r,phi,lambda,mu\n1,2,100,30,10,0.4\n2,1,20,5,5,0.05\n3,3,50,45,2,0.2\n";

    #[test]
    fn parses_reference() {
        let cat = Catalog::parse(REFERENCE).unwrap();
        assert_eq!(cat.len(), 3);
        assert_eq!(cat, Catalog::reference());
        let t1 = cat.lookup(1).unwrap();
        assert_eq!((t1.demand, t1.revenue, t1.federation_cost), (2, 100.0, 30.0));
        assert_eq!((t1.arrival_rate, t1.departure_rate), (10.0, 0.4));
        let t3 = cat.lookup(3).unwrap();
        assert_eq!((t3.demand, t3.revenue, t3.federation_cost), (3, 50.0, 45.0));
        assert_eq!((t3.arrival_rate, t3.departure_rate), (2.0, 0.2));
    }

    #[test]
    fn minimal_single_row() {
        let cat = Catalog::parse("1, 1, 0, 0, 1, 1").unwrap();
        assert_eq!(cat.len(), 1);
    }

    #[test]
    fn out_of_range_lookup() {
        let cat = Catalog::reference();
        assert_eq!(cat.lookup(4), Err(Error::TypeOutOfRange(4)));
        assert_eq!(cat.lookup(0), Err(Error::TypeOutOfRange(0)));
    }

    #[test]
    fn rejects_zero_demand() {
        let err = Catalog::parse("1,0,100,30,10,0.4").unwrap_err();
        assert_eq!(err, Error::parse(1, "non-positive demand"));
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(matches!(
            Catalog::parse("1,2,100,30,10,0.4\n1,1,20,5,5,0.05"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            Catalog::parse("1,2,100,30,10,0.4\n3,1,20,5,5,0.05"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(Catalog::parse("1,2,100,30,10"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(Catalog::parse("1,2,100,30,0,1"), Err(Error::Parse { .. })));
        assert!(matches!(Catalog::parse("1,2,100,30,1,-1"), Err(Error::Parse { .. })));
        assert!(matches!(Catalog::parse("1,2,100,30,1,NaN"), Err(Error::Parse { .. })));
        assert!(Catalog::parse("").is_err());
    }

    #[test]
    fn display_round_trips() {
        let cat = Catalog::reference();
        assert_eq!(Catalog::parse(&cat.to_string()).unwrap(), cat);
    }
}
