use std::path::Path;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::SimulationError;

/// Sampled 1-D height profile: `(arc length, height)` pairs with strictly
/// increasing arc length. Heights between samples are linearly interpolated
/// and clamped to the end values outside the sampled range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct Heightfield {
    samples: Vec<(f64, f64)>,
}

impl TryFrom<Vec<(f64, f64)>> for Heightfield {
    type Error = String;

    fn try_from(samples: Vec<(f64, f64)>) -> Result<Self, String> {
        Heightfield::new(samples)
    }
}

impl From<Heightfield> for Vec<(f64, f64)> {
    fn from(h: Heightfield) -> Self {
        h.samples
    }
}

impl Heightfield {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self, String> {
        if samples.len() < 2 {
            return Err(format!("heightfield needs at least 2 samples, got {}", samples.len()));
        }
        if samples.iter().any(|(s, h)| !s.is_finite() || !h.is_finite()) {
            return Err("heightfield contains non-finite values".into());
        }
        if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err("heightfield arc length must be strictly increasing".into());
        }
        Ok(Self { samples })
    }

    /// `amplitude · sin(2π s / wavelength)` on `n` evenly spaced points of
    /// `[0, length]`.
    pub fn sinusoid(amplitude: f64, wavelength: f64, length: f64, n: usize) -> Result<Self, String> {
        let n = n.max(2);
        Self::new(
            (0..n)
                .map(|i| {
                    let s = length * i as f64 / (n - 1) as f64;
                    (s, amplitude * (std::f64::consts::TAU * s / wavelength).sin())
                })
                .collect(),
        )
    }

    /// Two numeric columns (arc length m, height m); a non-numeric first row
    /// is treated as a header.
    pub fn from_csv_str(text: &str, origin: &str) -> Result<Self, SimulationError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut samples = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| SimulationError::Parse {
                location: format!("{origin}:{}", row + 1),
                message: e.to_string(),
            })?;
            if record.len() != 2 {
                return Err(SimulationError::Parse {
                    location: format!("{origin}:{}", row + 1),
                    message: format!("expected 2 columns, found {}", record.len()),
                });
            }
            let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
            match parsed {
                Ok(v) => samples.push((v[0], v[1])),
                Err(_) if row == 0 => continue,
                Err(e) => {
                    return Err(SimulationError::Parse {
                        location: format!("{origin}:{}", row + 1),
                        message: e.to_string(),
                    })
                }
            }
        }
        Self::new(samples).map_err(|message| SimulationError::Parse {
            location: origin.to_string(),
            message,
        })
    }

    pub fn load(path: &Path) -> Result<Self, SimulationError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimulationError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_csv_str(&text, &path.display().to_string())
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn length(&self) -> f64 {
        self.samples[self.samples.len() - 1].0 - self.samples[0].0
    }

    pub fn height_at(&self, s: f64) -> f64 {
        let first = self.samples[0];
        let last = self.samples[self.samples.len() - 1];
        if s <= first.0 {
            return first.1;
        }
        if s >= last.0 {
            return last.1;
        }
        let i = self.samples.partition_point(|(x, _)| *x <= s);
        let (s0, h0) = self.samples[i - 1];
        let (s1, h1) = self.samples[i];
        h0 + (h1 - h0) * (s - s0) / (s1 - s0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Surface {
    Flat {
        height: f64,
    },
    /// A heightfield extruded perpendicular to `direction`; arc length is
    /// measured from `origin` along `direction` in the xy plane.
    Profile {
        base_height: f64,
        origin: [f64; 2],
        direction: [f64; 2],
        field: Heightfield,
    },
}

impl Surface {
    pub fn profile(base_height: f64, origin: [f64; 2], direction: [f64; 2], field: Heightfield) -> Result<Self, String> {
        let d = Vector2::from(direction);
        if !(d.norm() > 0.0 && d.norm().is_finite()) {
            return Err("profile direction must be non-zero".into());
        }
        let d = d.normalize();
        Ok(Surface::Profile {
            base_height,
            origin,
            direction: [d.x, d.y],
            field,
        })
    }

    pub fn arc_length(&self, x: f64, y: f64) -> f64 {
        match self {
            Surface::Flat { .. } => 0.0,
            Surface::Profile {
                origin, direction, field, ..
            } => {
                let rel = Vector2::new(x - origin[0], y - origin[1]);
                field.samples()[0].0 + rel.dot(&Vector2::from(*direction))
            }
        }
    }

    pub fn height(&self, x: f64, y: f64) -> f64 {
        match self {
            Surface::Flat { height } => *height,
            Surface::Profile { base_height, field, .. } => base_height + field.height_at(self.arc_length(x, y)),
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            Surface::Flat { height } => height.is_finite(),
            Surface::Profile {
                base_height,
                origin,
                direction,
                ..
            } => base_height.is_finite() && origin.iter().chain(direction).all(|v| v.is_finite()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub surface: Surface,
    pub contact_stiffness: f64,
    pub contact_damping: f64,
    /// When false the surface exerts no force anywhere.
    pub contact_enabled: bool,
}

pub const DEFAULT_CONTACT_STIFFNESS: f64 = 500.0;
pub const DEFAULT_CONTACT_DAMPING: f64 = 5.0;

impl Environment {
    pub fn new(surface: Surface, contact_stiffness: f64, contact_damping: f64) -> Result<Self, SimulationError> {
        let env = Self {
            surface,
            contact_stiffness,
            contact_damping,
            contact_enabled: true,
        };
        env.validate()?;
        Ok(env)
    }

    pub fn flat(height: f64) -> Self {
        Self {
            surface: Surface::Flat { height },
            contact_stiffness: DEFAULT_CONTACT_STIFFNESS,
            contact_damping: DEFAULT_CONTACT_DAMPING,
            contact_enabled: true,
        }
    }

    pub fn without_contact(mut self) -> Self {
        self.contact_enabled = false;
        self
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        if !(self.contact_stiffness > 0.0 && self.contact_stiffness.is_finite()) {
            return Err(SimulationError::InvalidConfig(format!(
                "contact stiffness must be positive, got {}",
                self.contact_stiffness
            )));
        }
        if !(self.contact_damping >= 0.0 && self.contact_damping.is_finite()) {
            return Err(SimulationError::InvalidConfig(format!(
                "contact damping must be non-negative, got {}",
                self.contact_damping
            )));
        }
        if !self.surface.is_finite() {
            return Err(SimulationError::InvalidConfig("surface must be finite".into()));
        }
        Ok(())
    }

    pub fn surface_height(&self, x: f64, y: f64) -> f64 {
        self.surface.height(x, y)
    }
}

/// Unilateral spring-damper: zero above the surface, otherwise
/// `F_z = max(0, k (z_s − z) − d ż)` with no tangential component.
pub fn contact_force(env: &Environment, position: &Vector3<f64>, velocity: &Vector3<f64>) -> Vector3<f64> {
    if !env.contact_enabled {
        return Vector3::zeros();
    }
    let z_s = env.surface_height(position.x, position.y);
    if position.z > z_s {
        return Vector3::zeros();
    }
    let fz = env.contact_stiffness * (z_s - position.z) - env.contact_damping * velocity.z;
    Vector3::new(0.0, 0.0, fz.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contact_law() {
        let env = Environment::flat(0.0);
        assert_eq!(contact_force(&env, &Vector3::new(0.0, 0.0, 0.01), &Vector3::zeros()), Vector3::zeros());
        let f = contact_force(&env, &Vector3::new(0.3, -0.2, -0.01), &Vector3::zeros());
        assert!((f.z - 5.0).abs() < 1e-12);
        assert_eq!((f.x, f.y), (0.0, 0.0));
        // fast withdrawal
        let f = contact_force(&env, &Vector3::new(0.0, 0.0, -0.001), &Vector3::new(0.0, 0.0, 10.0));
        assert_eq!(f.z, 0.0);
        assert_eq!(
            contact_force(&env.without_contact(), &Vector3::new(0.0, 0.0, -0.05), &Vector3::zeros()),
            Vector3::zeros()
        );
    }

    #[test]
    fn heightfield_interpolation() {
        let h = Heightfield::new(vec![(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)]).unwrap();
        assert_eq!(h.height_at(0.5), 0.5);
        assert_eq!(h.height_at(1.5), 0.5);
        assert_eq!(h.height_at(-1.0), 0.0);
        assert_eq!(h.height_at(3.0), 0.0);
        assert_eq!(h.length(), 2.0);
        assert!(Heightfield::new(vec![(0.0, 0.0), (0.0, 1.0)]).is_err());
        assert!(Heightfield::new(vec![(0.0, f64::NAN), (1.0, 1.0)]).is_err());
    }

    #[test]
    fn heightfield_csv() {
        let h = Heightfield::from_csv_str("s,h\n0,0\n0.1,0.02\n0.2,0\n", "hf").unwrap();
        assert_eq!(h.samples().len(), 3);
        assert!(Heightfield::from_csv_str("0,0\nx,1\n", "hf").is_err());
        assert!(Heightfield::from_csv_str("0,0,0\n", "hf").is_err());
    }

    #[test]
    fn profile_surface() {
        let field = Heightfield::new(vec![(0.0, 0.0), (1.0, 0.1)]).unwrap();
        let s = Surface::profile(0.5, [1.0, 1.0], [0.0, 2.0], field).unwrap();
        assert!((s.height(1.0, 1.5) - 0.55).abs() < 1e-12);
        assert!((s.height(7.0, 1.5) - 0.55).abs() < 1e-12);
        assert!(Environment::new(s, 0.0, 1.0).is_err());
    }
}
