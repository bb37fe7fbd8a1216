use std::fmt;
use std::sync::Arc;

use crate::grid_mesh::Point;

pub type VectorFn = Arc<dyn Fn(&Point) -> [f64; 3] + Send + Sync>;
pub type ForcingFn = Arc<dyn Fn(f64, &Point) -> [f64; 3] + Send + Sync>;

/// Spatial profile of an initial condition.
#[derive(Clone)]
pub enum PulseProfile {
    Zero,
    /// `amplitude (1 - r^2/R^2)^3 polarization` for `r < R`, zero outside.
    Bump {
        center: Point,
        radius: f64,
        amplitude: f64,
        polarization: [f64; 3],
    },
    /// `amplitude (1 - s^2/w^2)^3 polarization` with `s = x_axis - center`
    /// for `|s| < w`: a planar slab launching two plane fronts along `axis`.
    Slab {
        axis: usize,
        center: f64,
        half_width: f64,
        amplitude: f64,
        polarization: [f64; 3],
    },
    Custom(VectorFn),
}

impl fmt::Debug for PulseProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => write!(f, "Zero"),
            Self::Bump { center, radius, amplitude, polarization } => f
                .debug_struct("Bump")
                .field("center", center)
                .field("radius", radius)
                .field("amplitude", amplitude)
                .field("polarization", polarization)
                .finish(),
            Self::Slab { axis, center, half_width, amplitude, polarization } => f
                .debug_struct("Slab")
                .field("axis", axis)
                .field("center", center)
                .field("half_width", half_width)
                .field("amplitude", amplitude)
                .field("polarization", polarization)
                .finish(),
            Self::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl PulseProfile {
    pub fn eval(&self, p: &Point) -> [f64; 3] {
        match self {
            Self::Zero => [0.0; 3],
            Self::Bump { center, radius, amplitude, polarization } => {
                let r2: f64 = (0..3).map(|k| (p[k] - center[k]).powi(2)).sum();
                let s = 1.0 - r2 / (radius * radius);
                if s <= 0.0 {
                    return [0.0; 3];
                }
                let v = amplitude * s * s * s;
                [v * polarization[0], v * polarization[1], v * polarization[2]]
            }
            Self::Slab { axis, center, half_width, amplitude, polarization } => {
                let r = (p[*axis] - center) / half_width;
                let s = 1.0 - r * r;
                if s <= 0.0 {
                    return [0.0; 3];
                }
                let v = amplitude * s * s * s;
                [v * polarization[0], v * polarization[1], v * polarization[2]]
            }
            Self::Custom(f) => f(p),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Self::Zero)
    }
}

/// Initial data `E(0) = f0`, `E_t(0) = f1` and an optional volumetric
/// forcing `F(t, x)` added to the right-hand side.
#[derive(Clone, Debug)]
pub struct SourcePulse {
    pub f0: PulseProfile,
    pub f1: PulseProfile,
    pub forcing: Option<Forcing>,
}

#[derive(Clone)]
pub struct Forcing(pub ForcingFn);

impl fmt::Debug for Forcing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Forcing(..)")
    }
}

impl SourcePulse {
    pub fn zero() -> Self {
        Self { f0: PulseProfile::Zero, f1: PulseProfile::Zero, forcing: None }
    }

    /// `f0 = 0` and a bump-shaped initial velocity.
    pub fn velocity_bump(center: Point, radius: f64, amplitude: f64, polarization: [f64; 3]) -> Self {
        Self {
            f0: PulseProfile::Zero,
            f1: PulseProfile::Bump { center, radius, amplitude, polarization },
            forcing: None,
        }
    }

    pub fn with_forcing(mut self, f: impl Fn(f64, &Point) -> [f64; 3] + Send + Sync + 'static) -> Self {
        self.forcing = Some(Forcing(Arc::new(f)));
        self
    }
}
