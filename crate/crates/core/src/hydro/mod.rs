//! Steady, incompressible pipe-flow relations for hot-water networks.
//!
//! Everything here is a pure function of its arguments. Units follow the
//! conventions used throughout the crate: mass flow in kg/s, lengths in m,
//! pressures in Pa, temperatures in °C, heat in kW and `cp` in kJ/(kg·K).

mod friction;

pub use friction::{colebrook_residual, friction_factor, FrictionOpts};

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhysicsError {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("no flow: friction factor undefined")]
    NoFlow,
    #[error("friction factor did not converge after {iterations} iterations (last residual {residual:e})")]
    FrictionNotConverged { iterations: usize, residual: f64 },
    #[error("zero flow: temperature drop undefined")]
    ZeroFlowTemperatureDrop,
    #[error("non-positive flow in thermal pipe model (mdot = {0})")]
    NonPositiveThermalFlow(f64),
}

fn check(name: &'static str, value: f64, ok: bool, reason: &'static str) -> Result<(), PhysicsError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(PhysicsError::InvalidParameter { name, value, reason })
    }
}

/// Constant fluid properties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidProps {
    /// kg/m³
    pub density: f64,
    /// Pa·s
    pub viscosity: f64,
    /// kJ/(kg·K)
    pub cp: f64,
    /// m/s²
    pub gravity: f64,
    pub specific_gravity: f64,
}

impl FluidProps {
    pub fn new(
        density: f64,
        viscosity: f64,
        cp: f64,
        gravity: f64,
        specific_gravity: f64,
    ) -> Result<Self, PhysicsError> {
        check("density", density, density > 0.0, "must be positive")?;
        check("viscosity", viscosity, viscosity > 0.0, "must be positive")?;
        check("cp", cp, cp > 0.0, "must be positive")?;
        check("gravity", gravity, gravity > 0.0, "must be positive")?;
        check(
            "specific_gravity",
            specific_gravity,
            (0.9..=1.1).contains(&specific_gravity),
            "must lie in [0.9, 1.1] for water",
        )?;
        Ok(Self {
            density,
            viscosity,
            cp,
            gravity,
            specific_gravity,
        })
    }

    /// Water at roughly 65 °C.
    pub fn water() -> Self {
        Self {
            density: 980.0,
            viscosity: 4.0e-4,
            cp: 4.18,
            gravity: 9.81,
            specific_gravity: 1.0,
        }
    }
}

impl Default for FluidProps {
    fn default() -> Self {
        Self::water()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipeSpec {
    pub id: String,
    /// Inner diameter, m.
    pub diameter: f64,
    /// m
    pub length: f64,
    /// Absolute roughness, m.
    pub roughness: f64,
    /// Area-independent heat transfer coefficient, W/K.
    pub heat_transfer: f64,
    pub upstream: String,
    pub downstream: String,
}

impl PipeSpec {
    pub fn new(
        id: impl Into<String>,
        diameter: f64,
        length: f64,
        roughness: f64,
        heat_transfer: f64,
        upstream: impl Into<String>,
        downstream: impl Into<String>,
    ) -> Result<Self, PhysicsError> {
        check("diameter", diameter, diameter > 0.0, "must be positive")?;
        check("length", length, length > 0.0, "must be positive")?;
        check(
            "roughness",
            roughness,
            roughness >= 0.0 && roughness < diameter,
            "must satisfy 0 <= ks < D",
        )?;
        check("heat_transfer", heat_transfer, heat_transfer >= 0.0, "must be non-negative")?;
        Ok(Self {
            id: id.into(),
            diameter,
            length,
            roughness,
            heat_transfer,
            upstream: upstream.into(),
            downstream: downstream.into(),
        })
    }

    pub fn area(&self) -> f64 {
        PI * self.diameter * self.diameter / 4.0
    }

    pub fn relative_roughness(&self) -> f64 {
        self.roughness / self.diameter
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValveSpec {
    pub id: String,
    /// Flow coefficient ζ as it enters the valve relation.
    pub zeta: f64,
    pub upstream: String,
    pub downstream: String,
}

impl ValveSpec {
    pub fn new(
        id: impl Into<String>,
        zeta: f64,
        upstream: impl Into<String>,
        downstream: impl Into<String>,
    ) -> Result<Self, PhysicsError> {
        check("zeta", zeta, zeta > 0.0, "must be positive")?;
        Ok(Self {
            id: id.into(),
            zeta,
            upstream: upstream.into(),
            downstream: downstream.into(),
        })
    }
}

/// Kinematic state of the flow through one pipe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowState {
    pub mdot: f64,
    pub reynolds: f64,
    pub velocity: f64,
}

impl FlowState {
    pub fn of(mdot: f64, pipe: &PipeSpec, fluid: &FluidProps) -> Self {
        Self {
            mdot,
            reynolds: reynolds(mdot, pipe, fluid),
            velocity: flow_velocity(mdot, pipe, fluid),
        }
    }
}

/// Mean velocity `ṁ / (ρ·A)`, signed like `mdot`.
pub fn flow_velocity(mdot: f64, pipe: &PipeSpec, fluid: &FluidProps) -> f64 {
    mdot / (fluid.density * pipe.area())
}

/// Reynolds number `4·|ṁ| / (π·D·μ)`.
pub fn reynolds(mdot: f64, pipe: &PipeSpec, fluid: &FluidProps) -> f64 {
    4.0 * mdot.abs() / (PI * pipe.diameter * fluid.viscosity)
}

/// How the Darcy friction factor is obtained for a pressure-drop evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FrictionModel {
    /// Laminar `64/Re` or the implicit Colebrook-White relation.
    ColebrookWhite(FrictionOpts),
    /// Pinned friction factor, bypassing the solver.
    Fixed(f64),
}

impl Default for FrictionModel {
    fn default() -> Self {
        FrictionModel::ColebrookWhite(FrictionOpts::default())
    }
}

/// Darcy-Weisbach pressure-drop magnitude `λ·L·8·ṁ² / (ρ·π²·D⁵)` in Pa.
pub fn darcy_pressure_drop(mdot: f64, pipe: &PipeSpec, fluid: &FluidProps) -> Result<f64, PhysicsError> {
    darcy_pressure_drop_with(mdot, pipe, fluid, FrictionModel::default())
}

pub fn darcy_pressure_drop_with(
    mdot: f64,
    pipe: &PipeSpec,
    fluid: &FluidProps,
    model: FrictionModel,
) -> Result<f64, PhysicsError> {
    if mdot == 0.0 {
        return Ok(0.0);
    }
    let lambda = match model {
        FrictionModel::Fixed(lambda) => lambda,
        FrictionModel::ColebrookWhite(opts) => {
            friction_factor(reynolds(mdot, pipe, fluid), pipe.roughness, pipe.diameter, &opts)?
        }
    };
    let d5 = pipe.diameter.powi(5);
    Ok((lambda * pipe.length * 8.0 * mdot * mdot / (fluid.density * PI * PI * d5)).abs())
}

/// Hazen-Williams pressure drop `10.67·L·Q^1.852 / (C^1.852·D^4.87)`.
///
/// `q` is the volumetric flow in m³/s. Not used by the default pipeline.
pub fn hazen_williams_drop(q: f64, length: f64, c: f64, diameter: f64) -> f64 {
    (10.67 * length * q.abs().powf(1.852) / (c.powf(1.852) * diameter.powf(4.87))).abs()
}

/// Valve pressure drop `G·ṁ² / (ρ·ζ)²`, evaluated literally.
pub fn valve_pressure_drop(mdot: f64, valve: &ValveSpec, fluid: &FluidProps) -> f64 {
    let denom = fluid.density * valve.zeta;
    (fluid.specific_gravity * mdot * mdot / (denom * denom)).abs()
}

/// Temperature change `|q̇ / (ṁ·cp)|` in K for a heat rate `qdot` in kW.
pub fn temperature_drop_from_heat(qdot: f64, mdot: f64, fluid: &FluidProps) -> Result<f64, PhysicsError> {
    if mdot == 0.0 {
        return Err(PhysicsError::ZeroFlowTemperatureDrop);
    }
    Ok((qdot / (mdot * fluid.cp)).abs())
}

/// Outlet state of a pipe losing heat to its surroundings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipeHeat {
    /// °C
    pub t_out: f64,
    /// Heat released to ambient, kW.
    pub heat_loss: f64,
}

/// Exponential approach of the water temperature to ambient along a pipe
/// with loss coefficient `ka` (W/K):
/// `T_out = T_amb + (T_in − T_amb)·exp(−ka / (ṁ·cp·1000))`.
pub fn pipe_outlet_temperature(
    t_in: f64,
    t_amb: f64,
    mdot: f64,
    pipe: &PipeSpec,
    fluid: &FluidProps,
) -> Result<PipeHeat, PhysicsError> {
    if !(mdot > 0.0) {
        return Err(PhysicsError::NonPositiveThermalFlow(mdot));
    }
    let ntu = pipe.heat_transfer / (mdot * fluid.cp * 1000.0);
    let t_out = t_amb + (t_in - t_amb) * (-ntu).exp();
    Ok(PipeHeat {
        t_out,
        heat_loss: mdot * fluid.cp * (t_in - t_out),
    })
}
