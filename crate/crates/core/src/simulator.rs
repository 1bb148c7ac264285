//! Forward model of ion-selective electrodes.
//!
//! Nernst potential `E = RT/(zF) ln(c_out / c_in)` and the Nikolsky-Eisenman
//! extension `E = E0 + RT/(zF) ln[(a + Σ k_i a_i^(z/z_i)) / c_in]` with
//! activity taken equal to concentration in mmol/L. Simulated titrations
//! invert each voltage through the interference-free Nernst relation, so the
//! "measured" concentration carries exactly the interference bias plus noise.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{IonSeries, TitrationDataset};
use crate::error::{Error, Result};
use crate::ions::{IonRegistry, PhysicalConstants};
use crate::par;
use crate::tds::Composition;
use crate::units::parse_f64;

/// Nernst potential in volts.
pub fn nernst_voltage(
    c_outside: f64,
    c_inside: f64,
    valence: i32,
    constants: &PhysicalConstants,
) -> Result<f64> {
    if valence == 0 {
        return Err(Error::ZeroValence);
    }
    for c in [c_outside, c_inside] {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::NonPositiveConcentration(c));
        }
    }
    Ok(constants.thermal_voltage() / valence as f64 * (c_outside / c_inside).ln())
}

/// Inverse of [`nernst_voltage`] for the outside concentration.
pub fn nernst_concentration(
    voltage: f64,
    c_inside: f64,
    valence: i32,
    constants: &PhysicalConstants,
) -> Result<f64> {
    if valence == 0 {
        return Err(Error::ZeroValence);
    }
    Ok(c_inside * (voltage * valence as f64 / constants.thermal_voltage()).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElectrodeSpec {
    pub target_ion: String,
    /// Standard offset, V.
    pub e0: f64,
    /// mmol/L
    pub internal_concentration: f64,
    /// Interfering ion → selectivity coefficient.
    pub selectivities: BTreeMap<String, f64>,
}

impl ElectrodeSpec {
    /// Interference-free electrode.
    pub fn ideal(target_ion: impl Into<String>) -> Self {
        Self {
            target_ion: target_ion.into(),
            e0: 0.0,
            internal_concentration: 1.0,
            selectivities: BTreeMap::new(),
        }
    }

    pub fn with_selectivity(mut self, ion: impl Into<String>, k: f64) -> Self {
        self.selectivities.insert(ion.into(), k);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: String| Error::InvalidElectrode {
            ion: self.target_ion.clone(),
            reason,
        };
        if !(self.internal_concentration.is_finite() && self.internal_concentration > 0.0) {
            return Err(invalid("internal concentration must be positive".into()));
        }
        if !self.e0.is_finite() {
            return Err(invalid("e0 must be finite".into()));
        }
        for (ion, k) in &self.selectivities {
            if ion.eq_ignore_ascii_case(&self.target_ion) {
                return Err(invalid("target ion cannot interfere with itself".into()));
            }
            if !(k.is_finite() && *k >= 0.0) {
                return Err(invalid(format!("selectivity for {ion} must be >= 0")));
            }
        }
        Ok(())
    }
}

/// `a + Σ k_i a_i^(z/z_i)` in mmol/L, before the logarithm.
pub fn nikolsky_bracket(
    spec: &ElectrodeSpec,
    composition: &Composition,
    registry: &IonRegistry,
) -> Result<f64> {
    let z = registry.get(&spec.target_ion)?.valence() as f64;
    let mut bracket = composition.get(&spec.target_ion).unwrap_or(0.0);
    for (ion, &k) in &spec.selectivities {
        let a_i = composition.get(ion).unwrap_or(0.0);
        if k == 0.0 || a_i == 0.0 {
            continue;
        }
        let z_i = registry.get(ion)?.valence() as f64;
        bracket += k * a_i.powf(z / z_i);
    }
    Ok(bracket)
}

/// Electrode potential with interference, in volts.
pub fn nikolsky_voltage(
    spec: &ElectrodeSpec,
    composition: &Composition,
    registry: &IonRegistry,
    constants: &PhysicalConstants,
) -> Result<f64> {
    spec.validate()?;
    let z = registry.get(&spec.target_ion)?.valence();
    let bracket = nikolsky_bracket(spec, composition, registry)?;
    if !(bracket > 0.0) || !bracket.is_finite() {
        return Err(Error::EmptyBracket(bracket));
    }
    Ok(spec.e0 + nernst_voltage(bracket, spec.internal_concentration, z, constants)?)
}

/// Titration recipe, step schedule and noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScenario {
    /// Composition at scale 1, mmol/L.
    pub recipe: Composition,
    /// Recipe multiplier per step; strictly increasing, one per step.
    pub scales: Vec<f64>,
    /// Standard deviation of additive voltage noise, V.
    pub noise_v: f64,
    pub seed: u64,
    pub constants: PhysicalConstants,
}

impl SyntheticScenario {
    /// Step `j` (1-based) uses `j ×` the recipe.
    pub fn proportional(recipe: Composition, step_count: usize, noise_v: f64, seed: u64) -> Self {
        Self {
            recipe,
            scales: (1..=step_count).map(|j| j as f64).collect(),
            noise_v,
            seed,
            constants: PhysicalConstants::default(),
        }
    }

    pub fn step_count(&self) -> usize {
        self.scales.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() {
            return Err(Error::InvalidScenario("step count must be at least 1".into()));
        }
        if self.scales.iter().any(|s| !(s.is_finite() && *s > 0.0))
            || self.scales.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::InvalidScenario("scales must be positive and strictly increasing".into()));
        }
        if !(self.noise_v.is_finite() && self.noise_v >= 0.0) {
            return Err(Error::InvalidScenario("noise must be >= 0".into()));
        }
        if let Some((ion, c)) = self.recipe.iter().find(|(_, c)| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::InvalidScenario(format!("recipe concentration for {ion} is {c}")));
        }
        Ok(())
    }
}

/// Generates a titration dataset: true composition per step as the
/// theoretical column, noisy Nikolsky voltage inverted through Nernst as the
/// measured column.
pub fn simulate_titration(
    scenario: &SyntheticScenario,
    electrodes: &[ElectrodeSpec],
    registry: &IonRegistry,
) -> Result<TitrationDataset> {
    scenario.validate()?;
    if electrodes.is_empty() {
        return Err(Error::InvalidScenario("no electrodes".into()));
    }
    for e in electrodes {
        e.validate()?;
        match scenario.recipe.get(&e.target_ion) {
            Some(c) if c > 0.0 => {}
            _ => {
                return Err(Error::InvalidScenario(format!(
                    "electrode target {} is not in the recipe",
                    e.target_ion
                )))
            }
        }
    }
    let noise = (scenario.noise_v > 0.0)
        .then(|| Normal::new(0.0, scenario.noise_v))
        .transpose()
        .map_err(|e| Error::InvalidScenario(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);

    let mut series: Vec<IonSeries> = electrodes
        .iter()
        .map(|e| IonSeries {
            symbol: e.target_ion.clone(),
            theoretical: Vec::with_capacity(scenario.step_count()),
            measured: Vec::with_capacity(scenario.step_count()),
        })
        .collect();
    for &scale in &scenario.scales {
        let composition = scenario.recipe.scaled(scale);
        for (e, s) in electrodes.iter().zip(series.iter_mut()) {
            let z = registry.get(&e.target_ion)?.valence();
            let mut v = nikolsky_voltage(e, &composition, registry, &scenario.constants)?;
            if let Some(n) = &noise {
                v += n.sample(&mut rng);
            }
            let measured = nernst_concentration(v - e.e0, e.internal_concentration, z, &scenario.constants)?;
            s.theoretical.push(composition.get(&e.target_ion).unwrap_or(0.0));
            s.measured.push(measured);
        }
    }
    TitrationDataset::new((1..=scenario.step_count()).collect(), series)
}

/// A scenario together with its electrodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub scenario: SyntheticScenario,
    pub electrodes: Vec<ElectrodeSpec>,
}

impl Scenario {
    pub fn simulate(&self, registry: &IonRegistry) -> Result<TitrationDataset> {
        simulate_titration(&self.scenario, &self.electrodes, registry)
    }

    /// Parses a scenario file:
    ///
    /// ```ini
    /// [scenario]
    /// steps = 10
    /// noise_v = 0.0
    /// seed = 42
    /// temperature_k = 298.15   ; optional
    /// scales = 1, 2, 3         ; optional, defaults to 1..=steps
    ///
    /// [recipe]
    /// K = 3.8835               ; mmol/L at scale 1
    ///
    /// [electrode K]
    /// e0_v = 0.0
    /// internal_mmol_per_L = 1.0
    /// k_NH4 = 0.1              ; selectivity of NH4 on this electrode
    /// ```
    pub fn from_ini(text: &str) -> Result<Self> {
        let bad = |m: String| Error::InvalidScenario(m);
        let ini = crate::load_ini(text).map_err(|e| bad(e.to_string()))?;
        let mut steps = None;
        let mut noise_v = 0.0;
        let mut seed = 0u64;
        let mut temperature = PhysicalConstants::DEFAULT_TEMPERATURE;
        let mut scales: Option<Vec<f64>> = None;
        let mut recipe = None;
        let mut electrodes = Vec::new();

        for (section, props) in ini.iter() {
            let Some(name) = section else {
                if props.iter().next().is_some() {
                    return Err(bad("keys outside of a section".into()));
                }
                continue;
            };
            let num = |key: &str, v: &str| parse_f64(v, key, None).map_err(|e| bad(e.to_string()));
            match name.trim() {
                "scenario" => {
                    for (key, v) in props.iter() {
                        match key {
                            "steps" => {
                                steps = Some(v.trim().parse::<usize>().map_err(|_| bad(format!("steps `{v}`")))?)
                            }
                            "noise_v" => noise_v = num(key, v)?,
                            "seed" => seed = v.trim().parse().map_err(|_| bad(format!("seed `{v}`")))?,
                            "temperature_k" => temperature = num(key, v)?,
                            "scales" => {
                                scales = Some(v.split(',').map(|s| num(key, s)).collect::<Result<_>>()?)
                            }
                            other => return Err(bad(format!("[scenario] unknown key `{other}`"))),
                        }
                    }
                }
                "recipe" => {
                    let mut comp = Composition::new();
                    for (ion, v) in props.iter() {
                        comp.set(ion, num(ion, v)?);
                    }
                    recipe = Some(comp);
                }
                other => {
                    let ion = crate::section_arg(other, "electrode").map_err(|e| bad(e.to_string()))?;
                    let mut spec = ElectrodeSpec::ideal(ion);
                    for (key, v) in props.iter() {
                        match key {
                            "e0_v" => spec.e0 = num(key, v)?,
                            "internal_mmol_per_L" | "internal_mmol_per_l" => {
                                spec.internal_concentration = num(key, v)?
                            }
                            k if k.starts_with("k_") && k.len() > 2 => {
                                spec.selectivities.insert(k[2..].to_string(), num(key, v)?);
                            }
                            other => return Err(bad(format!("[electrode {ion}] unknown key `{other}`"))),
                        }
                    }
                    electrodes.push(spec);
                }
            }
        }
        let steps = steps.ok_or_else(|| bad("[scenario] steps is required".into()))?;
        let recipe = recipe.ok_or_else(|| bad("[recipe] section is required".into()))?;
        let mut scenario = SyntheticScenario::proportional(recipe, steps, noise_v, seed);
        scenario.constants = PhysicalConstants::at_temperature(temperature)?;
        if let Some(scales) = scales {
            if scales.len() != steps {
                return Err(bad(format!("{} scales given for {steps} steps", scales.len())));
            }
            scenario.scales = scales;
        }
        scenario.validate()?;
        if electrodes.is_empty() {
            return Err(bad("at least one [electrode <ion>] section is required".into()));
        }
        for e in &electrodes {
            e.validate()?;
        }
        Ok(Self { scenario, electrodes })
    }
}

/// Simulates independent scenarios, in parallel when enabled.
pub fn simulate_many(scenarios: &[Scenario], registry: &IonRegistry) -> Vec<Result<TitrationDataset>> {
    par::map(scenarios, |s| s.simulate(registry))
}

/// Sequential counterpart of [`simulate_many`].
pub fn simulate_many_sequential(scenarios: &[Scenario], registry: &IonRegistry) -> Vec<Result<TitrationDataset>> {
    par::map_sequential(scenarios, |s| s.simulate(registry))
}
