//! Ion identities, physical constants and concentration units.

use std::fmt;
use std::path::Path;


use crate::error::{Error, Result};

/// Standard atomic weights, g/mol.
pub mod atomic_weight {
    pub const H: f64 = 1.00794;
    pub const N: f64 = 14.0067;
    pub const O: f64 = 15.9994;
    pub const P: f64 = 30.973762;
    pub const K: f64 = 39.0983;
    pub const CA: f64 = 40.078;
    pub const MG: f64 = 24.305;
}

/// A measurable ion: symbol, signed valence and molar mass.
#[derive(Debug, Clone, PartialEq)]
pub struct IonSpecies {
    symbol: String,
    valence: i32,
    molar_mass: f64,
}

impl IonSpecies {
    pub fn new(symbol: impl Into<String>, valence: i32, molar_mass: f64) -> Result<Self> {
        let symbol = symbol.into();
        if symbol.trim().is_empty() {
            return Err(Error::InvalidIon {
                symbol,
                reason: "empty symbol".into(),
            });
        }
        if valence == 0 {
            return Err(Error::InvalidIon {
                symbol,
                reason: "valence must be non-zero".into(),
            });
        }
        if !(molar_mass.is_finite() && molar_mass > 0.0) {
            return Err(Error::InvalidIon {
                symbol,
                reason: format!("molar mass must be positive, got {molar_mass}"),
            });
        }
        Ok(Self {
            symbol,
            valence,
            molar_mass,
        })
    }

    pub fn symbol(&self) -> &str {
        &self.symbol
    }

    /// Signed charge number z.
    pub fn valence(&self) -> i32 {
        self.valence
    }

    /// g/mol
    pub fn molar_mass(&self) -> f64 {
        self.molar_mass
    }

    pub fn potassium() -> Self {
        Self::known("K", 1, atomic_weight::K)
    }

    pub fn calcium() -> Self {
        Self::known("Ca", 2, atomic_weight::CA)
    }

    pub fn nitrate() -> Self {
        Self::known("NO3", -1, atomic_weight::N + 3.0 * atomic_weight::O)
    }

    pub fn ammonium() -> Self {
        Self::known("NH4", 1, atomic_weight::N + 4.0 * atomic_weight::H)
    }

    /// H2PO4⁻. Representable, but not part of the default registry since no
    /// electrode measures it.
    pub fn dihydrogen_phosphate() -> Self {
        Self::known(
            "H2PO4",
            -1,
            2.0 * atomic_weight::H + atomic_weight::P + 4.0 * atomic_weight::O,
        )
    }

    pub fn magnesium() -> Self {
        Self::known("Mg", 2, atomic_weight::MG)
    }

    fn known(symbol: &str, valence: i32, molar_mass: f64) -> Self {
        Self {
            symbol: symbol.to_string(),
            valence,
            molar_mass,
        }
    }
}

impl fmt::Display for IonSpecies {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.valence > 0 { '+' } else { '-' };
        match self.valence.unsigned_abs() {
            1 => write!(f, "{}{}", self.symbol, sign),
            n => write!(f, "{}{}{}", self.symbol, n, sign),
        }
    }
}

/// Ordered set of ion species with case-insensitive lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct IonRegistry {
    species: Vec<IonSpecies>,
}

impl Default for IonRegistry {
    /// The four ISE-measurable ions: K⁺, Ca²⁺, NO₃⁻, NH₄⁺.
    fn default() -> Self {
        Self {
            species: default_registry(),
        }
    }
}

/// K⁺, Ca²⁺, NO₃⁻ and NH₄⁺ with standard molar masses.
pub fn default_registry() -> Vec<IonSpecies> {
    vec![
        IonSpecies::potassium(),
        IonSpecies::calcium(),
        IonSpecies::nitrate(),
        IonSpecies::ammonium(),
    ]
}

/// Looks `symbol` up in the default registry.
pub fn ion_from_symbol(symbol: &str) -> Result<IonSpecies> {
    IonRegistry::default().get(symbol).cloned()
}

impl IonRegistry {
    pub fn new(species: Vec<IonSpecies>) -> Result<Self> {
        let mut registry = Self {
            species: Vec::with_capacity(species.len()),
        };
        for s in species {
            registry.insert(s)?;
        }
        Ok(registry)
    }

    /// Adds a species; fails if the symbol is already registered.
    pub fn insert(&mut self, species: IonSpecies) -> Result<()> {
        if self.find(species.symbol()).is_some() {
            return Err(Error::DuplicateIon(species.symbol().to_string()));
        }
        self.species.push(species);
        Ok(())
    }

    /// Adds or replaces a species.
    pub fn upsert(&mut self, species: IonSpecies) {
        match self
            .species
            .iter_mut()
            .find(|s| s.symbol.eq_ignore_ascii_case(species.symbol()))
        {
            Some(slot) => *slot = species,
            None => self.species.push(species),
        }
    }

    pub fn find(&self, symbol: &str) -> Option<&IonSpecies> {
        let symbol = symbol.trim();
        self.species
            .iter()
            .find(|s| s.symbol.eq_ignore_ascii_case(symbol))
    }

    pub fn get(&self, symbol: &str) -> Result<&IonSpecies> {
        self.find(symbol)
            .ok_or_else(|| Error::UnknownIon(symbol.trim().to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &IonSpecies> {
        self.species.iter()
    }

    pub fn len(&self) -> usize {
        self.species.len()
    }

    pub fn is_empty(&self) -> bool {
        self.species.is_empty()
    }

    /// Applies `[ion <symbol>]` sections (keys `valence`, `molar_mass_g_per_mol`)
    /// on top of this registry. Existing symbols are overridden; a section for
    /// an existing ion may omit either key to keep its current value.
    pub fn apply_overrides(&mut self, text: &str) -> Result<()> {
        let ini = crate::load_ini(text).map_err(|e| Error::parse(None, e.to_string()))?;
        for (section, props) in ini.iter() {
            let Some(name) = section else {
                if props.iter().next().is_some() {
                    return Err(Error::parse(None, "keys outside of an [ion ...] section"));
                }
                continue;
            };
            let symbol = match name.split_once(char::is_whitespace) {
                Some(("ion", rest)) if !rest.trim().is_empty() => rest.trim(),
                _ => {
                    return Err(Error::parse(
                        None,
                        format!("unexpected section [{name}], expected [ion <symbol>]"),
                    ))
                }
            };
            let existing = self.find(symbol).cloned();
            let valence = match props.get("valence") {
                Some(v) => v.trim().parse::<i32>().map_err(|_| {
                    Error::parse(None, format!("[ion {symbol}] valence `{v}` is not an integer"))
                })?,
                None => existing.as_ref().map(|s| s.valence).ok_or_else(|| {
                    Error::parse(None, format!("[ion {symbol}] is missing `valence`"))
                })?,
            };
            let molar_mass = match props.get("molar_mass_g_per_mol") {
                Some(v) => v.trim().parse::<f64>().map_err(|_| {
                    Error::parse(None, format!("[ion {symbol}] molar mass `{v}` is not a number"))
                })?,
                None => existing.as_ref().map(|s| s.molar_mass).ok_or_else(|| {
                    Error::parse(None, format!("[ion {symbol}] is missing `molar_mass_g_per_mol`"))
                })?,
            };
            for key in props.iter().map(|(k, _)| k) {
                if key != "valence" && key != "molar_mass_g_per_mol" {
                    return Err(Error::parse(None, format!("[ion {symbol}] unknown key `{key}`")));
                }
            }
            let symbol = existing.map(|s| s.symbol).unwrap_or_else(|| symbol.to_string());
            self.upsert(IonSpecies::new(symbol, valence, molar_mass)?);
        }
        Ok(())
    }

    /// Default registry extended by an override file.
    pub fn from_override_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut registry = Self::default();
        registry.apply_overrides(&text)?;
        Ok(registry)
    }
}

/// Gas constant, Faraday constant and temperature for Nernstian slopes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// J/(mol·K)
    pub gas_constant: f64,
    /// C/mol
    pub faraday: f64,
    /// K
    pub temperature: f64,
}

impl PhysicalConstants {
    pub const GAS_CONSTANT: f64 = 8.314462618;
    pub const FARADAY: f64 = 96485.33212;
    pub const DEFAULT_TEMPERATURE: f64 = 298.15;

    pub fn at_temperature(temperature: f64) -> Result<Self> {
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(Error::InvalidScenario(format!(
                "temperature must be positive, got {temperature} K"
            )));
        }
        Ok(Self {
            temperature,
            ..Self::default()
        })
    }

    /// RT/F in volts.
    pub fn thermal_voltage(&self) -> f64 {
        self.gas_constant * self.temperature / self.faraday
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            gas_constant: Self::GAS_CONSTANT,
            faraday: Self::FARADAY,
            temperature: Self::DEFAULT_TEMPERATURE,
        }
    }
}

/// A concentration, stored in mmol/L.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Concentration(f64);

impl Concentration {
    pub const ZERO: Self = Self(0.0);

    pub fn from_mmol_per_l(value: f64) -> Self {
        Self(value)
    }

    pub fn from_mol_per_l(value: f64) -> Self {
        Self(value * 1000.0)
    }

    pub fn mmol_per_l(self) -> f64 {
        self.0
    }

    pub fn mol_per_l(self) -> f64 {
        self.0 / 1000.0
    }

    /// Clamps negative values to zero.
    pub fn clamped(self) -> Self {
        Self(self.0.max(0.0))
    }
}

impl fmt::Display for Concentration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} mmol/L", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_standard_ions() {
        let k = ion_from_symbol("K").unwrap();
        assert_eq!(k.valence(), 1);
        assert!((k.molar_mass() - 39.0983).abs() < 1e-12);

        let no3 = ion_from_symbol("NO3").unwrap();
        assert_eq!(no3.valence(), -1);
        assert!((no3.molar_mass() - 62.0049).abs() < 1e-9);

        assert_eq!(ion_from_symbol("ca").unwrap().valence(), 2);
        assert_eq!(ion_from_symbol("Xx"), Err(Error::UnknownIon("Xx".into())));
    }

    #[test]
    fn default_registry_has_four_ions() {
        let reg = IonRegistry::default();
        assert_eq!(reg.len(), 4);
        let symbols: Vec<_> = reg.iter().map(|s| s.symbol()).collect();
        assert_eq!(symbols, ["K", "Ca", "NO3", "NH4"]);
        assert!(reg.find("H2PO4").is_none());
    }

    #[test]
    fn registry_extension_and_duplicates() {
        let mut reg = IonRegistry::default();
        reg.insert(IonSpecies::new("Mg", 2, 24.305).unwrap()).unwrap();
        assert_eq!(reg.len(), 5);
        assert_eq!(
            reg.insert(IonSpecies::potassium()),
            Err(Error::DuplicateIon("K".into()))
        );
        assert!(IonRegistry::new(vec![IonSpecies::potassium(), IonSpecies::potassium()]).is_err());
    }

    #[test]
    fn species_invariants() {
        assert!(IonSpecies::new("X", 0, 10.0).is_err());
        assert!(IonSpecies::new("X", 1, 0.0).is_err());
        assert!(IonSpecies::new("X", 1, f64::NAN).is_err());
        assert!(IonSpecies::new(" ", 1, 1.0).is_err());
    }

    #[test]
    fn override_file() {
        let mut reg = IonRegistry::default();
        reg.apply_overrides(
            "[ion Mg]\nvalence = 2\nmolar_mass_g_per_mol = 24.305\n\n[ion K]\nmolar_mass_g_per_mol = 39.1\n",
        )
        .unwrap();
        assert_eq!(reg.len(), 5);
        assert_eq!(reg.get("mg").unwrap().valence(), 2);
        assert_eq!(reg.get("K").unwrap().molar_mass(), 39.1);
        assert_eq!(reg.get("K").unwrap().valence(), 1);

        let mut reg = IonRegistry::default();
        assert!(reg.apply_overrides("[ion Zn]\nvalence = 2\n").is_err());
        assert!(reg.apply_overrides("[ion Zn]\nvalence = two\nmolar_mass_g_per_mol = 65.38\n").is_err());
        assert!(reg.apply_overrides("[mu K]\nA = 1\n").is_err());
        assert!(reg.apply_overrides("[ion Zn]\nvalence = 0\nmolar_mass_g_per_mol = 65.38\n").is_err());
    }

    #[test]
    fn unit_round_trip() {
        for v in [0.0005, 0.0364, 1.0, 3.8835e-3] {
            let c = Concentration::from_mol_per_l(v);
            assert!((c.mol_per_l() - v).abs() <= f64::EPSILON * v.abs() * 2.0);
        }
        assert_eq!(Concentration::from_mmol_per_l(-1.0).clamped(), Concentration::ZERO);
    }

    #[test]
    fn thermal_voltage_at_default_temperature() {
        let c = PhysicalConstants::default();
        assert!((c.thermal_voltage() - 0.025693).abs() < 1e-6);
        assert!(PhysicalConstants::at_temperature(0.0).is_err());
    }

    #[test]
    fn display() {
        assert_eq!(IonSpecies::calcium().to_string(), "Ca2+");
        assert_eq!(IonSpecies::nitrate().to_string(), "NO3-");
    }
}
