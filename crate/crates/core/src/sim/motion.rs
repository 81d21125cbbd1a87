//! Analytic ground-truth motion: windowed sums of sinusoids in yaw, tilt and
//! position, with closed-form derivatives.

use nalgebra::{Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ConfigError, SplineError};
use crate::so3;
use crate::spline::{PoseQuery, PoseSample};

/// Time before any motion starts; the rig rests at the origin.
pub const STATIC_PREFIX: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Static,
    Smooth,
    Violent,
    Hybrid,
}

impl Regime {
    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        match s {
            "static" => Ok(Regime::Static),
            "smooth" => Ok(Regime::Smooth),
            "violent" => Ok(Regime::Violent),
            "hybrid" => Ok(Regime::Hybrid),
            other => Err(ConfigError::Invalid(format!("unknown regime '{other}'"))),
        }
    }
}

/// Quintic smoothstep and its first two derivatives, clamped to `[0, 1]`.
fn smoothstep(x: f64) -> (f64, f64, f64) {
    if x <= 0.0 {
        (0.0, 0.0, 0.0)
    } else if x >= 1.0 {
        (1.0, 0.0, 0.0)
    } else {
        let x2 = x * x;
        let x3 = x2 * x;
        (
            x3 * (10.0 - 15.0 * x + 6.0 * x2),
            30.0 * x2 * (1.0 - x) * (1.0 - x),
            60.0 * x * (1.0 - x) * (1.0 - 2.0 * x),
        )
    }
}

/// `amp * sin(2 pi f t + phase)` faded in at `start` and out at `end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub amp: f64,
    pub freq: f64,
    pub phase: f64,
    pub start: f64,
    pub end: f64,
    pub ramp: f64,
}

impl Term {
    fn window(&self, t: f64) -> (f64, f64, f64) {
        let (a, da, dda) = smoothstep((t - self.start) / self.ramp);
        let (b, db, ddb) = smoothstep((t - self.end) / self.ramp);
        let r = self.ramp;
        let (b, db, ddb) = (1.0 - b, -db / r, -ddb / (r * r));
        let (da, dda) = (da / r, dda / (r * r));
        (a * b, da * b + a * db, dda * b + 2.0 * da * db + a * ddb)
    }

    /// Value, first and second derivative.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        let w = 2.0 * std::f64::consts::PI * self.freq;
        let arg = w * t + self.phase;
        let (s, ds, dds) = (self.amp * arg.sin(), self.amp * w * arg.cos(), -self.amp * w * w * arg.sin());
        let (e, de, dde) = self.window(t);
        (s * e, ds * e + s * de, dds * e + 2.0 * ds * de + s * dde)
    }
}

fn sum(terms: &[Term], t: f64) -> (f64, f64, f64) {
    terms.iter().fold((0.0, 0.0, 0.0), |acc, term| {
        let v = term.eval(t);
        (acc.0 + v.0, acc.1 + v.1, acc.2 + v.2)
    })
}

/// `R = Rz(yaw) * Exp([tilt_x, tilt_y, 0])`, `p = [x, y, z]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub duration: f64,
    pub yaw: Vec<Term>,
    pub tilt: [Vec<Term>; 2],
    pub position: [Vec<Term>; 3],
}

/// Amplitude and frequency of one axis.
type Axis = (f64, f64);

struct RegimeShape {
    yaw: &'static [Axis],
    tilt: [&'static [Axis]; 2],
    position: [&'static [Axis]; 3],
    ramp: f64,
}

const SMOOTH: RegimeShape = RegimeShape {
    yaw: &[(0.6, 0.06)],
    tilt: [&[(0.06, 0.17)], &[(0.05, 0.13)]],
    position: [&[(1.5, 0.05)], &[(1.0, 0.07)], &[(0.2, 0.1)]],
    ramp: 4.0,
};

const VIOLENT: RegimeShape = RegimeShape {
    yaw: &[(1.2, 0.8)],
    tilt: [&[(0.25, 3.0)], &[(0.2, 2.3)]],
    position: [&[(0.3, 0.2), (0.05, 2.5)], &[(0.3, 0.15), (0.04, 2.1)], &[(0.03, 1.7)]],
    ramp: 1.0,
};

fn push_terms(out: &mut Vec<Term>, axes: &[Axis], start: f64, end: f64, ramp: f64, rng: &mut ChaCha8Rng) {
    for &(amp, freq) in axes {
        out.push(Term {
            amp,
            freq,
            phase: rng.random_range(0.0..std::f64::consts::TAU),
            start,
            end,
            ramp,
        });
    }
}

impl GroundTruth {
    pub fn new(regime: Regime, duration: f64, seed: u64) -> Self {
        let mut gt = GroundTruth {
            duration,
            yaw: Vec::new(),
            tilt: [Vec::new(), Vec::new()],
            position: [Vec::new(), Vec::new(), Vec::new()],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut add = |shape: &RegimeShape, start: f64, end: f64, rng: &mut ChaCha8Rng| {
            push_terms(&mut gt.yaw, shape.yaw, start, end, shape.ramp, rng);
            for k in 0..2 {
                push_terms(&mut gt.tilt[k], shape.tilt[k], start, end, shape.ramp, rng);
            }
            for k in 0..3 {
                push_terms(&mut gt.position[k], shape.position[k], start, end, shape.ramp, rng);
            }
        };
        match regime {
            Regime::Static => {}
            Regime::Smooth => add(&SMOOTH, STATIC_PREFIX, f64::INFINITY, &mut rng),
            Regime::Violent => add(&VIOLENT, STATIC_PREFIX, f64::INFINITY, &mut rng),
            Regime::Hybrid => {
                add(&SMOOTH, STATIC_PREFIX, f64::INFINITY, &mut rng);
                add(&VIOLENT, duration / 3.0, 2.0 * duration / 3.0, &mut rng);
            }
        }
        gt
    }

    /// Exact sample at any time, without a domain check.
    pub fn sample_unchecked(&self, t: f64) -> PoseSample {
        let (yaw, dyaw, _) = sum(&self.yaw, t);
        let tx = sum(&self.tilt[0], t);
        let ty = sum(&self.tilt[1], t);
        let theta = Vector3::new(tx.0, ty.0, 0.0);
        let dtheta = Vector3::new(tx.1, ty.1, 0.0);
        let tilt = so3::exp(&theta);
        let rotation = so3::exp(&Vector3::new(0.0, 0.0, yaw)) * tilt;
        let omega = tilt.transpose() * Vector3::new(0.0, 0.0, dyaw) + so3::right_jacobian(&theta) * dtheta;
        let mut p = [Vector3::zeros(); 3];
        for (k, terms) in self.position.iter().enumerate() {
            let (v, dv, ddv) = sum(terms, t);
            p[0][k] = v;
            p[1][k] = dv;
            p[2][k] = ddv;
        }
        PoseSample {
            t,
            rotation: Rotation3::from_matrix_unchecked(rotation),
            position: p[0],
            angular_velocity_body: omega,
            linear_velocity_world: p[1],
            linear_acceleration_world: p[2],
        }
    }
}

impl PoseQuery for GroundTruth {
    fn sample(&self, t: f64) -> Result<PoseSample, SplineError> {
        if !(0.0..=self.duration).contains(&t) {
            return Err(SplineError::OutOfDomain {
                t,
                start: 0.0,
                end: self.duration,
            });
        }
        Ok(self.sample_unchecked(t))
    }
}
