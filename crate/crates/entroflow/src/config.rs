//! Run configuration: a flat `key = value` text format with section
//! prefixes, e.g.
//!
//! ```text
//! mesh.n_cells = 64
//! mesh.length = 1.0
//! time.t_final = 0.001
//! time.n_steps = 128
//! phys.graph = logarithmic
//! ...
//! ```
//!
//! Lines starting with `#` are comments. Reals use the dot decimal
//! separator. Unknown keys are rejected so typos fail fast, and all
//! validation (positivity, box bounds, the step guard) happens before any
//! computation starts.

use std::collections::BTreeMap;
use std::path::Path;

use crate::graphs::{GraphKind, GraphSpec, LatentHeat};
use crate::mesh::Mesh;
use crate::stepper::{
    step_guard, BoundaryAndData, PhysParams, Source, TimeFunction, STEP_SAFETY,
};
use crate::Error;

/// Spatial profile for initial data.
#[derive(Debug, Clone)]
pub enum Profile {
    Constant(f64),
    /// `base + amplitude * cos(mode pi x / L)`.
    Cosine { base: f64, amplitude: f64, mode: u32 },
}

impl Profile {
    pub fn eval(&self, x: f64, length: f64) -> f64 {
        match self {
            Profile::Constant(v) => *v,
            Profile::Cosine {
                base,
                amplitude,
                mode,
            } => base + amplitude * (*mode as f64 * std::f64::consts::PI * x / length).cos(),
        }
    }

    pub fn nodal(&self, mesh: &Mesh) -> Vec<f64> {
        mesh.nodes()
            .iter()
            .map(|x| self.eval(*x, mesh.length()))
            .collect()
    }
}

/// Fully parsed run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub n_cells: usize,
    pub length: f64,
    pub t_final: f64,
    pub n_steps: usize,
    pub params: PhysParams,
    pub alpha0: f64,
    pub alpha1: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub theta_gamma: [TimeFunction; 2],
    pub source: Source,
    pub init_theta: Profile,
    pub init_phi: Profile,
    pub mu0: f64,
    pub out_dir: Option<String>,
    pub seed: u64,
}

struct Raw {
    map: BTreeMap<String, String>,
    used: std::cell::RefCell<std::collections::BTreeSet<String>>,
}

impl Raw {
    fn parse(text: &str) -> Result<Self, Error> {
        let mut map = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() || value.is_empty() {
                return Err(Error::Config(format!(
                    "line {}: empty key or value",
                    lineno + 1
                )));
            }
            if map.insert(key.clone(), value).is_some() {
                return Err(Error::Config(format!("duplicate key '{key}'")));
            }
        }
        Ok(Raw {
            map,
            used: Default::default(),
        })
    }

    fn get(&self, key: &str) -> Option<&str> {
        let v = self.map.get(key).map(|s| s.as_str());
        if v.is_some() {
            self.used.borrow_mut().insert(key.to_string());
        }
        v
    }

    fn require(&self, key: &str) -> Result<&str, Error> {
        self.get(key)
            .ok_or_else(|| Error::Config(format!("missing key '{key}'")))
    }

    fn real(&self, key: &str) -> Result<f64, Error> {
        let raw = self.require(key)?;
        raw.parse::<f64>()
            .map_err(|_| Error::Config(format!("key '{key}': '{raw}' is not a real number")))
    }

    fn real_or(&self, key: &str, default: f64) -> Result<f64, Error> {
        match self.get(key) {
            Some(raw) => raw
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("key '{key}': '{raw}' is not a real number"))),
            None => Ok(default),
        }
    }

    fn integer(&self, key: &str) -> Result<usize, Error> {
        let raw = self.require(key)?;
        raw.parse::<usize>()
            .map_err(|_| Error::Config(format!("key '{key}': '{raw}' is not a nonnegative integer")))
    }

    fn real_list(&self, key: &str) -> Result<Vec<f64>, Error> {
        let raw = self.require(key)?;
        raw.split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("key '{key}': '{s}' is not a real number")))
            })
            .collect()
    }

    fn reject_unknown(&self) -> Result<(), Error> {
        let used = self.used.borrow();
        for key in self.map.keys() {
            if !used.contains(key) {
                return Err(Error::Config(format!("unknown key '{key}'")));
            }
        }
        Ok(())
    }
}

fn parse_time_function(raw: &Raw, prefix: &str) -> Result<TimeFunction, Error> {
    let kind = raw.require(&format!("{prefix}.kind"))?.to_string();
    match kind.as_str() {
        "constant" => Ok(TimeFunction::Constant(raw.real(&format!("{prefix}.value"))?)),
        "piecewise" => {
            let times = raw.real_list(&format!("{prefix}.times"))?;
            let values = raw.real_list(&format!("{prefix}.values"))?;
            if times.len() != values.len() || times.is_empty() {
                return Err(Error::Config(format!(
                    "{prefix}: times and values must be nonempty lists of equal length"
                )));
            }
            if times[0] != 0.0 {
                return Err(Error::Config(format!("{prefix}.times must start at 0")));
            }
            if times.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Config(format!(
                    "{prefix}.times must be strictly increasing"
                )));
            }
            Ok(TimeFunction::PiecewiseConstant { times, values })
        }
        "sinusoid" => {
            let period = raw.real(&format!("{prefix}.period"))?;
            if !(period > 0.0) {
                return Err(Error::Config(format!("{prefix}.period must be positive")));
            }
            Ok(TimeFunction::Sinusoid {
                base: raw.real(&format!("{prefix}.base"))?,
                amplitude: raw.real(&format!("{prefix}.amplitude"))?,
                period,
                phase: raw.real_or(&format!("{prefix}.phase"), 0.0)?,
            })
        }
        other => Err(Error::Config(format!(
            "{prefix}.kind must be constant, piecewise or sinusoid, got '{other}'"
        ))),
    }
}

fn parse_profile(raw: &Raw, prefix: &str) -> Result<Profile, Error> {
    let kind = raw.require(&format!("{prefix}.kind"))?.to_string();
    match kind.as_str() {
        "constant" => Ok(Profile::Constant(raw.real(&format!("{prefix}.value"))?)),
        "cosine" => Ok(Profile::Cosine {
            base: raw.real(&format!("{prefix}.base"))?,
            amplitude: raw.real(&format!("{prefix}.amplitude"))?,
            mode: raw.integer(&format!("{prefix}.mode"))? as u32,
        }),
        other => Err(Error::Config(format!(
            "{prefix}.kind must be constant or cosine, got '{other}'"
        ))),
    }
}

impl RunConfig {
    pub fn parse_str(text: &str) -> Result<Self, Error> {
        let raw = Raw::parse(text)?;

        let n_cells = raw.integer("mesh.n_cells")?;
        let length = raw.real("mesh.length")?;
        let t_final = raw.real("time.t_final")?;
        let n_steps = raw.integer("time.n_steps")?;
        if !(t_final > 0.0) || n_steps == 0 {
            return Err(Error::Config(
                "time.t_final must be positive and time.n_steps nonzero".to_string(),
            ));
        }

        let graph_name = raw.require("phys.graph")?.to_string();
        let graph = match graph_name.as_str() {
            "regular" => GraphKind::Regular,
            "logarithmic" => GraphKind::Logarithmic,
            "indicator" => GraphKind::Indicator,
            other => {
                return Err(Error::Config(format!(
                    "phys.graph must be regular, logarithmic or indicator, got '{other}'"
                )))
            }
        };
        let params = PhysParams {
            c_s: raw.real("phys.c_s")?,
            eta: raw.real("phys.eta")?,
            gamma: raw.real("phys.gamma")?,
            tau: raw.real("phys.tau")?,
            eps: raw.real("phys.eps")?,
            graph: GraphSpec::new(graph),
            latent: LatentHeat::new(raw.real("latent.a1")?, raw.real("latent.a2")?),
            theta_a: raw.real("phys.theta_a")?,
            theta_b: raw.real("phys.theta_b")?,
        };

        let config = RunConfig {
            n_cells,
            length,
            t_final,
            n_steps,
            params,
            alpha0: raw.real("robin.alpha0")?,
            alpha1: raw.real("robin.alpha1")?,
            alpha_min: raw.real("bounds.alpha_min")?,
            alpha_max: raw.real("bounds.alpha_max")?,
            theta_min: raw.real("bounds.theta_min")?,
            theta_max: raw.real("bounds.theta_max")?,
            theta_gamma: [
                parse_time_function(&raw, "theta_gamma0")?,
                parse_time_function(&raw, "theta_gamma1")?,
            ],
            source: Source {
                time: parse_time_function(&raw, "source")?,
                spatial_mode: raw.integer("source.mode")? as u32,
            },
            init_theta: parse_profile(&raw, "init.theta")?,
            init_phi: parse_profile(&raw, "init.phi")?,
            mu0: raw.real_or("init.mu", 0.0)?,
            out_dir: raw.get("output.dir").map(|s| s.to_string()),
            seed: raw
                .get("seed")
                .map(|s| {
                    s.parse::<u64>()
                        .map_err(|_| Error::Config(format!("seed: '{s}' is not a u64")))
                })
                .transpose()?
                .unwrap_or(0),
        };
        raw.reject_unknown()?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config '{}': {e}", path.display()))
        })?;
        Self::parse_str(&text)
    }

    /// Step size `h = T / N`.
    pub fn h(&self) -> f64 {
        self.t_final / self.n_steps as f64
    }

    /// Full validation: parameter positivity, box bounds, the step guard.
    pub fn validate(&self) -> Result<(), Error> {
        self.params.validate()?;
        if !(self.params.tau > 0.0) {
            return Err(Error::Config(
                "phys.tau must be positive for a run (the non-viscous case is reached by a tau sweep)"
                    .to_string(),
            ));
        }
        if !(self.alpha_min > 0.0 && self.alpha_min <= self.alpha_max) {
            return Err(Error::Config(format!(
                "alpha bounds must satisfy 0 < alpha_min <= alpha_max, got [{}, {}]",
                self.alpha_min, self.alpha_max
            )));
        }
        for (name, a) in [("alpha0", self.alpha0), ("alpha1", self.alpha1)] {
            if a < self.alpha_min || a > self.alpha_max {
                return Err(Error::Config(format!(
                    "robin.{name} = {a} outside [alpha_min, alpha_max] = [{}, {}]",
                    self.alpha_min, self.alpha_max
                )));
            }
        }
        let guard = step_guard(&self.params)?;
        let h = self.h();
        if h > STEP_SAFETY * guard.h0 * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "step size h = {h:.6e} exceeds {STEP_SAFETY} * h0 = {:.6e}; binding guard entry: {}",
                STEP_SAFETY * guard.h0,
                guard.binding
            )));
        }
        // data-level checks need the mesh; build and validate
        let (mesh, params, data) = self.build()?;
        data.validate(&mesh, &params)?;
        Ok(())
    }

    /// Materialize the mesh, parameters and data.
    pub fn build(&self) -> Result<(Mesh, PhysParams, BoundaryAndData), Error> {
        let mesh = Mesh::new(self.n_cells, self.length, self.alpha0, self.alpha1)?;
        let data = BoundaryAndData {
            theta_gamma: self.theta_gamma.clone(),
            source: self.source.clone(),
            theta0: self.init_theta.nodal(&mesh),
            phi0: self.init_phi.nodal(&mesh),
            mu0: vec![self.mu0; mesh.n_nodes()],
            theta_min: self.theta_min,
            theta_max: self.theta_max,
        };
        Ok((mesh, self.params.clone(), data))
    }

    /// Serialize back to the flat text format (round-trips through
    /// [`RunConfig::parse_str`]).
    pub fn to_config_text(&self) -> String {
        let mut out = String::new();
        let mut push = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        push("mesh.n_cells", self.n_cells.to_string());
        push("mesh.length", fmt(self.length));
        push("time.t_final", fmt(self.t_final));
        push("time.n_steps", self.n_steps.to_string());
        push("phys.c_s", fmt(self.params.c_s));
        push("phys.eta", fmt(self.params.eta));
        push("phys.gamma", fmt(self.params.gamma));
        push("phys.tau", fmt(self.params.tau));
        push("phys.eps", fmt(self.params.eps));
        push("phys.graph", self.params.graph.kind.name().to_string());
        push("phys.theta_a", fmt(self.params.theta_a));
        push("phys.theta_b", fmt(self.params.theta_b));
        push("latent.a1", fmt(self.params.latent.a1));
        push("latent.a2", fmt(self.params.latent.a2));
        push("robin.alpha0", fmt(self.alpha0));
        push("robin.alpha1", fmt(self.alpha1));
        push("bounds.alpha_min", fmt(self.alpha_min));
        push("bounds.alpha_max", fmt(self.alpha_max));
        push("bounds.theta_min", fmt(self.theta_min));
        push("bounds.theta_max", fmt(self.theta_max));
        for (i, tf) in self.theta_gamma.iter().enumerate() {
            write_time_function(&mut push, &format!("theta_gamma{i}"), tf);
        }
        write_time_function(&mut push, "source", &self.source.time);
        push("source.mode", self.source.spatial_mode.to_string());
        write_profile(&mut push, "init.theta", &self.init_theta);
        write_profile(&mut push, "init.phi", &self.init_phi);
        push("init.mu", fmt(self.mu0));
        if let Some(dir) = &self.out_dir {
            push("output.dir", dir.clone());
        }
        push("seed", self.seed.to_string());
        out
    }
}

fn fmt(x: f64) -> String {
    format!("{x:.17e}")
}

fn write_time_function(push: &mut impl FnMut(&str, String), prefix: &str, tf: &TimeFunction) {
    match tf {
        TimeFunction::Constant(v) => {
            push(&format!("{prefix}.kind"), "constant".to_string());
            push(&format!("{prefix}.value"), fmt(*v));
        }
        TimeFunction::PiecewiseConstant { times, values } => {
            push(&format!("{prefix}.kind"), "piecewise".to_string());
            let t: Vec<String> = times.iter().map(|x| fmt(*x)).collect();
            let v: Vec<String> = values.iter().map(|x| fmt(*x)).collect();
            push(&format!("{prefix}.times"), t.join(", "));
            push(&format!("{prefix}.values"), v.join(", "));
        }
        TimeFunction::Sinusoid {
            base,
            amplitude,
            period,
            phase,
        } => {
            push(&format!("{prefix}.kind"), "sinusoid".to_string());
            push(&format!("{prefix}.base"), fmt(*base));
            push(&format!("{prefix}.amplitude"), fmt(*amplitude));
            push(&format!("{prefix}.period"), fmt(*period));
            push(&format!("{prefix}.phase"), fmt(*phase));
        }
    }
}

fn write_profile(push: &mut impl FnMut(&str, String), prefix: &str, p: &Profile) {
    match p {
        Profile::Constant(v) => {
            push(&format!("{prefix}.kind"), "constant".to_string());
            push(&format!("{prefix}.value"), fmt(*v));
        }
        Profile::Cosine {
            base,
            amplitude,
            mode,
        } => {
            push(&format!("{prefix}.kind"), "cosine".to_string());
            push(&format!("{prefix}.base"), fmt(*base));
            push(&format!("{prefix}.amplitude"), fmt(*amplitude));
            push(&format!("{prefix}.mode"), mode.to_string());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn presets_round_trip_through_text() {
        for (name, config) in presets::preset_suite() {
            let text = config.to_config_text();
            let parsed = RunConfig::parse_str(&text)
                .unwrap_or_else(|e| panic!("{name} failed to round trip: {e}"));
            assert_eq!(parsed.n_cells, config.n_cells);
            assert_eq!(parsed.n_steps, config.n_steps);
            assert_eq!(parsed.t_final, config.t_final);
            assert_eq!(parsed.params.eps, config.params.eps);
            assert_eq!(parsed.seed, config.seed);
        }
    }

    #[test]
    fn unknown_key_is_rejected() {
        let mut text = presets::stationary(crate::graphs::GraphKind::Regular).to_config_text();
        text.push_str("mesh.n_cels = 3\n");
        let err = RunConfig::parse_str(&text).unwrap_err();
        assert!(err.to_string().contains("unknown key"), "{err}");
    }

    #[test]
    fn step_guard_violation_names_binding_entry() {
        let mut config = presets::stationary(crate::graphs::GraphKind::Regular);
        config.n_steps = 1; // h = t_final, far above the guard
        let err = config.validate().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("binding guard entry"), "{msg}");
        assert!(msg.contains("lambda_eps"), "{msg}");
    }

    #[test]
    fn out_of_box_initial_temperature_is_rejected() {
        let mut config = presets::stationary(crate::graphs::GraphKind::Regular);
        config.init_theta = Profile::Constant(1000.0);
        let err = config.validate().unwrap_err();
        assert!(err.to_string().contains("theta0"), "{err}");
    }

    #[test]
    fn interior_mean_requirement_is_enforced() {
        let mut config = presets::stationary(crate::graphs::GraphKind::Indicator);
        config.init_phi = Profile::Constant(1.0); // mean on the boundary of [-1,1]
        let err = config.validate().unwrap_err();
        assert!(err.to_string().contains("interior"), "{err}");
    }

    #[test]
    fn malformed_lines_are_rejected() {
        assert!(RunConfig::parse_str("mesh.n_cells 64").is_err());
        assert!(RunConfig::parse_str("mesh.n_cells = abc").is_err());
    }
}
