//! Typed run settings resolved from a [`Config`].
//!
//! Command-line flags override the file by being written into the config
//! before resolution, so precedence lives in one place.

use crate::error::{Error, Result};
use crate::features::{NormalityRange, RiskWeights, SignalSchema, SignalSpec, DEFAULT_WINDOW};
use crate::grid::{DecayParams, GridGeometry};
use crate::ingest::{Config, SchemaConfig};
use crate::kmeans::KMeansConfig;

pub const DEFAULT_LAMBDA: f64 = 0.998;
pub const DEFAULT_CM: f64 = 3.0;
pub const DEFAULT_CL: f64 = 0.8;
pub const DEFAULT_PARTITIONS: u32 = 20;
pub const DEFAULT_RADIUS: u32 = 2;

#[derive(Debug, Clone)]
pub struct Settings {
    pub config: Config,
    pub schema: SchemaConfig,
}

impl Settings {
    pub fn new(config: Config) -> Result<Self> {
        let schema = SchemaConfig::from_config(&config)?;
        Ok(Self { config, schema })
    }

    pub fn decay(&self) -> Result<DecayParams> {
        let c = &self.config;
        let lambda = c.parsed("lambda")?.unwrap_or(DEFAULT_LAMBDA);
        let c_m = c.parsed("cm")?.unwrap_or(DEFAULT_CM);
        let c_l = c.parsed("cl")?.unwrap_or(DEFAULT_CL);
        match c.parsed::<u64>("gap")? {
            Some(gap) => DecayParams::new(lambda, gap, c_m, c_l),
            None => DecayParams::with_default_gap(lambda, c_m, c_l),
        }
    }

    /// One count repeats across all `dims`; otherwise one per dimension.
    pub fn geometry(&self, dims: usize) -> Result<GridGeometry> {
        let parts = self
            .config
            .list::<u32>("partitions")?
            .unwrap_or_else(|| vec![DEFAULT_PARTITIONS]);
        match parts.len() {
            1 => GridGeometry::uniform(dims, parts[0]),
            n if n == dims => GridGeometry::new(parts),
            n => Err(Error::InvalidGeometry(format!(
                "{n} partition counts for {dims} dimensions"
            ))),
        }
    }

    pub fn radius(&self) -> Result<u32> {
        Ok(self.config.parsed("radius")?.unwrap_or(DEFAULT_RADIUS))
    }

    pub fn kmeans(&self) -> Result<KMeansConfig> {
        let c = &self.config;
        let d = KMeansConfig::default();
        Ok(KMeansConfig {
            k: c.parsed("k")?.unwrap_or(d.k),
            max_iter: c.parsed("max_iter")?.unwrap_or(d.max_iter),
            tol: c.parsed("tol")?.unwrap_or(d.tol),
            seed: c.parsed("seed")?.unwrap_or(d.seed),
        })
    }

    pub fn window(&self) -> Result<usize> {
        Ok(self.config.parsed("window")?.unwrap_or(DEFAULT_WINDOW))
    }

    pub fn risk_weights(&self) -> Result<RiskWeights> {
        let window = self.window()?;
        let mut w = RiskWeights::linear(window);
        if let Some(h) = self.config.list::<f64>("weights")? {
            w.h = h;
        }
        if let Some(a) = self.config.list::<f64>("risk_weights")? {
            w.a = a
                .try_into()
                .map_err(|_| Error::InvalidParameter("risk_weights needs three values".into()))?;
        }
        w.validate()?;
        Ok(w)
    }

    /// Signals with a configured normality range, in `columns` order.
    pub fn signal_schema(&self, columns: &[String]) -> Result<SignalSchema> {
        let mut signals = Vec::new();
        for col in columns {
            let Some((lo, hi)) = self.config.pair(&format!("range.{col}"))? else {
                continue;
            };
            let mut spec = SignalSpec::new(col.clone(), NormalityRange::new(lo, hi)?);
            if let Some(scale) = self.config.parsed::<f64>(&format!("scale.{col}"))? {
                spec = spec.with_scale(scale)?;
            }
            signals.push(spec);
        }
        for (col, _) in self.config.section("range") {
            if !columns.iter().any(|c| c == col) {
                return Err(Error::Data(format!(
                    "range given for unknown column '{col}'"
                )));
            }
        }
        if signals.is_empty() {
            return Err(Error::Data(
                "no signal has a configured range.<column>".into(),
            ));
        }
        Ok(SignalSchema { signals })
    }

    pub fn risk_column(&self) -> Option<&str> {
        self.config.get("risk_column")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(text: &str) -> Settings {
        Settings::new(Config::parse(text).unwrap()).unwrap()
    }

    #[test]
    fn defaults() {
        let s = settings("");
        let d = s.decay().unwrap();
        assert_eq!((d.lambda, d.gap, d.c_m, d.c_l), (0.998, 660, 3.0, 0.8));
        assert_eq!(s.geometry(2).unwrap().partitions(), &[20, 20]);
        assert_eq!(s.kmeans().unwrap(), KMeansConfig::default());
        assert_eq!(s.window().unwrap(), 60);
        assert_eq!(s.radius().unwrap(), 2);
    }

    #[test]
    fn explicit_values_win() {
        let s = settings(
            "lambda=0.5\ngap=7\npartitions=3,4\nk=3\nwindow=3\nweights=1,1,1\nrisk_weights=1,2,3",
        );
        assert_eq!(s.decay().unwrap().gap, 7);
        assert_eq!(s.geometry(2).unwrap().partitions(), &[3, 4]);
        assert!(s.geometry(3).is_err());
        assert_eq!(s.kmeans().unwrap().k, 3);
        assert_eq!(s.risk_weights().unwrap().a, [1.0, 2.0, 3.0]);
    }

    #[test]
    fn signals_follow_column_order() {
        let s = settings("range.HR = 60,100\nrange.SpO2 = 90,100\nscale.HR = 20");
        let cols = vec!["SpO2".to_string(), "HR".to_string(), "age".to_string()];
        let schema = s.signal_schema(&cols).unwrap();
        let names: Vec<_> = schema.signals.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["SpO2", "HR"]);
        assert_eq!(schema.signals[1].scale, 20.0);
        assert!(settings("range.BP=1,2").signal_schema(&cols).is_err());
        assert!(settings("").signal_schema(&cols).is_err());
    }
}
