use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Resources {
    pub dsp: f64,
    pub bram: f64,
    pub lut: f64,
    pub ff: f64,
}

impl Resources {
    pub fn scaled(&self, k: f64) -> Resources {
        Resources {
            dsp: self.dsp * k,
            bram: self.bram * k,
            lut: self.lut * k,
            ff: self.ff * k,
        }
    }

    pub fn plus(&self, o: &Resources) -> Resources {
        Resources {
            dsp: self.dsp + o.dsp,
            bram: self.bram + o.bram,
            lut: self.lut + o.lut,
            ff: self.ff + o.ff,
        }
    }

    pub fn fits_in(&self, budget: &Resources) -> bool {
        self.dsp <= budget.dsp && self.bram <= budget.bram && self.lut <= budget.lut && self.ff <= budget.ff
    }

    fn as_array(&self) -> [f64; 4] {
        [self.dsp, self.bram, self.lut, self.ff]
    }

    /// Component-wise `<=`.
    pub fn le(&self, o: &Resources) -> bool {
        self.as_array().iter().zip(o.as_array()).all(|(a, b)| *a <= b)
    }
}

/// Extra logic per dropout layer: an RNG for MCD, a mask ROM for Masksembles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DropoutUnitCost {
    pub rng_lut: f64,
    pub mask_rom_bram: f64,
}

/// Throughput and area model of an MC-engine accelerator. Reuse factors and
/// implementation strategy are folded into `ops_per_cycle_per_engine`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareModel {
    pub ops_per_cycle_per_engine: f64,
    pub clock_mhz: f64,
    pub engine_cost: Resources,
    pub budget: Resources,
    pub dropout_unit_cost: DropoutUnitCost,
    /// Free-form implementation strategy label carried into plans.
    #[serde(default = "default_strategy")]
    pub strategy: String,
}

fn default_strategy() -> String {
    "latency".into()
}

impl Default for HardwareModel {
    /// Illustrative numbers sized like a large UltraScale-class part; not
    /// vendor data.
    fn default() -> Self {
        HardwareModel {
            ops_per_cycle_per_engine: 128.0,
            clock_mhz: 200.0,
            engine_cost: Resources {
                dsp: 512.0,
                bram: 96.0,
                lut: 45_000.0,
                ff: 60_000.0,
            },
            budget: Resources {
                dsp: 5520.0,
                bram: 2160.0,
                lut: 663_360.0,
                ff: 1_326_720.0,
            },
            dropout_unit_cost: DropoutUnitCost {
                rng_lut: 350.0,
                mask_rom_bram: 1.0,
            },
            strategy: default_strategy(),
        }
    }
}

impl HardwareModel {
    pub fn check(&self) -> Result<()> {
        let positive = [
            self.ops_per_cycle_per_engine,
            self.clock_mhz,
            self.engine_cost.dsp,
            self.engine_cost.bram,
            self.engine_cost.lut,
            self.engine_cost.ff,
            self.dropout_unit_cost.rng_lut,
            self.dropout_unit_cost.mask_rom_bram,
        ];
        if positive.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidSpec("hardware model values must be positive".into()));
        }
        if !self.engine_cost.fits_in(&self.budget) {
            return Err(Error::InvalidSpec("budget cannot hold a single engine".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let hw: HardwareModel = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {}", path.display(), e)))?;
        hw.check()?;
        Ok(hw)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("hardware model serializes") + "\n"
    }

    /// Largest engine count whose engine area fits the budget.
    pub fn max_engines(&self) -> usize {
        let mut n = 1;
        while self.engine_cost.scaled((n + 1) as f64).fits_in(&self.budget) {
            n += 1;
        }
        n
    }
}
