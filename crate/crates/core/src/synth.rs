//! Synthetic grouped panels with group-correlated under-reporting.
//!
//! The generator is a pure function of [`SynthConfig`]. All draws come from
//! one [`PortableRng`] seeded with `config.seed`, in this order, unit by unit
//! (`u = 0..n_units`):
//!
//! 1. majority group: `Group::ALL[u % 4]` for `u < 8`; otherwise one uniform
//!    `r` mapped through the cumulative weights [`MAJORITY_WEIGHTS`];
//! 2. majority share `m = uniform_in(0.5, 0.9)`;
//! 3. four uniforms `w` splitting `1 - m` among the three other groups and an
//!    "other" category (in that order), proportionally to `w`;
//! 4. population `round(exp(uniform_in(ln pop_min, ln pop_max)))`;
//! 5. wave phase `uniform_in(0, phase_spread_days)`;
//! 6. mobility phase `uniform_in(0, 2π)`;
//! 7. `n_days + MOBILITY_LAG` normals for the mobility jitter;
//! 8. `n_days` normals for the case noise.
//!
//! For day `t`, with `τ = t + MOBILITY_LAG`:
//!
//! ```text
//! mobility[τ] = 0.3 sin(2π τ / 28 + mobility_phase) + 0.05 ε_τ
//! rate[t]     = base_rate · (1 + A sin(2π (t + phase) / P)) · exp(c · mobility[t]) · (1 + σ η_t)
//! latent[t]   = max(0, population · rate[t])
//! reported[t] = max(0, latent[t] · (1 − Σ_g u_g · frac_g))
//! ```
//!
//! so latent cases respond to mobility with a `MOBILITY_LAG`-day delay, and
//! the emitted mobility series is `mobility[MOBILITY_LAG..]`.

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{Group, GroupedPanel, PanelSeries, PanelUnit, UnitRecord};
use crate::rng::PortableRng;

pub const MOBILITY_LAG: usize = 7;
/// Cumulative draw weights for the majority group of units `u >= 8`,
/// ordered as [`Group::ALL`].
pub const MAJORITY_WEIGHTS: [f64; 4] = [0.1, 0.2, 0.2, 0.5];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpidemicParams {
    /// Expected daily cases per resident at the wave midline.
    pub base_rate: f64,
    pub wave_amplitude: f64,
    pub wave_period_days: f64,
    /// Width of the uniform spread of per-unit wave phase offsets.
    pub phase_spread_days: f64,
    /// Relative daily noise on the case rate.
    pub noise_sd: f64,
}

impl Default for EpidemicParams {
    fn default() -> Self {
        Self {
            base_rate: 3e-4,
            wave_amplitude: 0.6,
            wave_period_days: 60.0,
            phase_spread_days: 60.0,
            noise_sd: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_units: usize,
    pub n_days: usize,
    pub seed: u64,
    pub start_date: NaiveDate,
    pub epidemic: EpidemicParams,
    /// Under-reporting coefficient per group, ordered as [`Group::ALL`].
    pub underreport: [f64; 4],
    pub mobility_coupling: f64,
    pub population_min: u64,
    pub population_max: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_units: 40,
            n_days: 120,
            seed: 1,
            start_date: NaiveDate::from_ymd_opt(2020, 3, 18).expect("valid date"),
            epidemic: EpidemicParams::default(),
            underreport: [0.0; 4],
            mobility_coupling: 0.5,
            population_min: 20_000,
            population_max: 500_000,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(msg));
        if self.n_units < 4 {
            return bad(format!("n_units must be at least 4, got {}", self.n_units));
        }
        if self.n_days == 0 {
            return bad("n_days must be positive".into());
        }
        for (g, u) in Group::ALL.iter().zip(self.underreport) {
            if !(0.0..1.0).contains(&u) {
                return bad(format!("underreport coefficient for {g} must be in [0, 1), got {u}"));
            }
        }
        let e = &self.epidemic;
        if !(e.base_rate > 0.0 && e.base_rate.is_finite()) {
            return bad(format!("base_rate must be positive, got {}", e.base_rate));
        }
        if !(0.0..=1.0).contains(&e.wave_amplitude) {
            return bad(format!("wave_amplitude must be in [0, 1], got {}", e.wave_amplitude));
        }
        if !(e.wave_period_days > 0.0) {
            return bad(format!("wave_period_days must be positive, got {}", e.wave_period_days));
        }
        if !(e.phase_spread_days >= 0.0 && e.phase_spread_days.is_finite()) {
            return bad(format!("phase_spread_days must be non-negative, got {}", e.phase_spread_days));
        }
        if !(e.noise_sd >= 0.0 && e.noise_sd.is_finite()) {
            return bad(format!("noise_sd must be non-negative, got {}", e.noise_sd));
        }
        if !self.mobility_coupling.is_finite() {
            return bad("mobility_coupling must be finite".into());
        }
        if self.population_min < 1 || self.population_min > self.population_max {
            return bad(format!(
                "population range [{}, {}] is invalid",
                self.population_min, self.population_max
            ));
        }
        Ok(())
    }
}

/// Generated panel plus the latent (fully reported) case counts per unit,
/// aligned with `panel.units`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub panel: GroupedPanel,
    pub latent: Vec<Vec<f64>>,
}

pub fn generate(config: &SynthConfig) -> Result<GroupedPanel> {
    Ok(generate_with_latent(config)?.panel)
}

pub fn generate_with_latent(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let mut rng = PortableRng::new(config.seed);
    let width = config.n_units.saturating_sub(1).to_string().len().max(3);
    let e = config.epidemic;
    let n = config.n_days;

    let mut units = Vec::with_capacity(config.n_units);
    let mut latents = Vec::with_capacity(config.n_units);
    for u in 0..config.n_units {
        let majority = if u < 8 {
            Group::ALL[u % 4]
        } else {
            let r = rng.uniform();
            let mut acc = 0.0;
            let mut pick = Group::White;
            for (g, w) in Group::ALL.iter().zip(MAJORITY_WEIGHTS) {
                acc += w;
                if r < acc {
                    pick = *g;
                    break;
                }
            }
            pick
        };
        let share = rng.uniform_in(0.5, 0.9);
        let weights: [f64; 4] = std::array::from_fn(|_| rng.uniform());
        let total: f64 = weights.iter().sum();
        let mut fractions = [0.0; 4];
        fractions[majority.index()] = share;
        let others = Group::ALL.iter().filter(|g| **g != majority);
        for (g, w) in others.zip(weights) {
            fractions[g.index()] = (1.0 - share) * w / total;
        }

        let (lo, hi) = (config.population_min as f64, config.population_max as f64);
        let population = (rng.uniform_in(lo.ln(), hi.ln()).exp().round() as u64).clamp(1, config.population_max);
        let phase = rng.uniform_in(0.0, e.phase_spread_days);
        let mobility_phase = rng.uniform_in(0.0, std::f64::consts::TAU);

        let mobility: Vec<f64> = (0..n + MOBILITY_LAG)
            .map(|tau| {
                0.3 * (std::f64::consts::TAU * tau as f64 / 28.0 + mobility_phase).sin() + 0.05 * rng.normal()
            })
            .collect();
        let reporting = reporting_factor(&config.underreport, &fractions);

        let mut latent = Vec::with_capacity(n);
        let mut reported = Vec::with_capacity(n);
        for (t, mob) in mobility.iter().take(n).enumerate() {
            let wave = 1.0 + e.wave_amplitude * (std::f64::consts::TAU * (t as f64 + phase) / e.wave_period_days).sin();
            let rate = e.base_rate * wave * (config.mobility_coupling * mob).exp() * (1.0 + e.noise_sd * rng.normal());
            let l = (population as f64 * rate).max(0.0);
            latent.push(l);
            reported.push((l * reporting).max(0.0));
        }

        let unit_id = format!("U{u:0width$}");
        let record = UnitRecord::new(unit_id.clone(), population, fractions)?;
        let series = PanelSeries::new(unit_id, config.start_date, reported, Some(mobility[MOBILITY_LAG..].to_vec()))?;
        units.push(PanelUnit { record, series });
        latents.push(latent);
    }
    Ok(SynthOutput {
        panel: GroupedPanel::new(units),
        latent: latents,
    })
}

/// Share of latent cases that get reported: `1 − Σ_g u_g · frac_g`.
pub fn reporting_factor(underreport: &[f64; 4], fractions: &[f64; 4]) -> f64 {
    1.0 - underreport.iter().zip(fractions).map(|(u, f)| u * f).sum::<f64>()
}

/// Date of day `t` of a generated panel.
pub fn day(config: &SynthConfig, t: u64) -> NaiveDate {
    config.start_date + Days::new(t)
}
