//! The 7-segment planar body: anthropometric template, subject scaling, and
//! sensor placement.
//!
//! Segment constants ship as a versioned text table of ratios relative to
//! total body height and mass (see `assets/body_template_v1.txt`, provenance
//! documented there). Masses are stored as fractions of total body mass and
//! inertias per unit total body mass, so the dynamics works in body-weight
//! normalized units throughout; `total_mass` exists only to de-normalize
//! reported forces.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    pub fn mirror(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }

    pub fn suffix(self) -> &'static str {
        match self {
            Side::Left => "l",
            Side::Right => "r",
        }
    }
}

/// The seven body segments of the sagittal-plane model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SegmentId {
    /// Head-arms-trunk, hip to shoulder line.
    Trunk,
    Thigh(Side),
    Shank(Side),
    Foot(Side),
}

impl SegmentId {
    pub const ALL: [SegmentId; 7] = [
        SegmentId::Trunk,
        SegmentId::Thigh(Side::Left),
        SegmentId::Thigh(Side::Right),
        SegmentId::Shank(Side::Left),
        SegmentId::Shank(Side::Right),
        SegmentId::Foot(Side::Left),
        SegmentId::Foot(Side::Right),
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|s| *s == self).unwrap()
    }

    pub fn name(self) -> String {
        match self {
            SegmentId::Trunk => "trunk".to_string(),
            SegmentId::Thigh(s) => format!("thigh_{}", s.suffix()),
            SegmentId::Shank(s) => format!("shank_{}", s.suffix()),
            SegmentId::Foot(s) => format!("foot_{}", s.suffix()),
        }
    }

    pub fn parse(name: &str) -> Option<SegmentId> {
        Self::ALL.iter().copied().find(|s| s.name() == name)
    }

    pub fn mirror(self) -> SegmentId {
        match self {
            SegmentId::Trunk => SegmentId::Trunk,
            SegmentId::Thigh(s) => SegmentId::Thigh(s.mirror()),
            SegmentId::Shank(s) => SegmentId::Shank(s.mirror()),
            SegmentId::Foot(s) => SegmentId::Foot(s.mirror()),
        }
    }
}

/// Constants for one segment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentParams {
    /// Fraction of total body mass.
    pub mass_frac: f64,
    /// Segment length in meters.
    pub length: f64,
    /// Center of mass, meters from the proximal joint along the segment axis.
    pub com_offset: f64,
    /// Moment of inertia about the CoM per unit total body mass (m^2).
    pub inertia: f64,
}

/// Per-subject body constants for the 7-segment model.
#[derive(Clone, Debug, PartialEq)]
pub struct BodyConstants {
    pub segments: [SegmentParams; 7],
    /// Subject height in meters.
    pub total_height: f64,
    /// Subject mass in kg; used only to de-normalize reported forces.
    pub total_mass: f64,
}

/// Heel sits behind the ankle at this fraction of foot length.
pub const HEEL_FRACTION: f64 = 0.25;
/// Toe reaches ahead of the ankle at this fraction of foot length.
pub const TOE_FRACTION: f64 = 0.75;

/// Versioned anthropometric ratio table, embedded from the shipped asset.
pub const BODY_TEMPLATE_TABLE: &str = include_str!("../assets/body_template_v1.txt");
pub const BODY_TEMPLATE_VERSION: &str = "v1";

/// Template subject dimensions the ratio table is instantiated with.
pub const TEMPLATE_HEIGHT: f64 = 1.80;
pub const TEMPLATE_MASS: f64 = 75.0;

/// One row of the ratio table.
#[derive(Clone, Copy, Debug)]
pub struct SegmentRatios {
    pub mass_fraction: f64,
    pub length_fraction: f64,
    pub com_fraction: f64,
    /// Radius of gyration about the CoM as a fraction of segment length.
    pub inertia_coefficient: f64,
}

/// Parse the versioned ratio table. Rows cover trunk/thigh/shank/foot; the
/// thigh, shank, and foot rows apply to both sides.
pub fn parse_template_table(text: &str) -> Result<[(String, SegmentRatios); 4]> {
    let mut rows = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(Error::SchemaMismatch(format!(
                "template row needs 5 fields, got {}: {line}",
                fields.len()
            )));
        }
        let f = |i: usize| -> Result<f64> {
            fields[i]
                .parse::<f64>()
                .map_err(|e| Error::SchemaMismatch(format!("bad number in template: {e}")))
        };
        rows.push((
            fields[0].to_string(),
            SegmentRatios {
                mass_fraction: f(1)?,
                length_fraction: f(2)?,
                com_fraction: f(3)?,
                inertia_coefficient: f(4)?,
            },
        ));
    }
    rows.try_into()
        .map_err(|_| Error::SchemaMismatch("template must have exactly 4 segment rows".into()))
}

fn ratios_for(seg: SegmentId, table: &[(String, SegmentRatios); 4]) -> SegmentRatios {
    let key = match seg {
        SegmentId::Trunk => "trunk",
        SegmentId::Thigh(_) => "thigh",
        SegmentId::Shank(_) => "shank",
        SegmentId::Foot(_) => "foot",
    };
    table
        .iter()
        .find(|(name, _)| name == key)
        .map(|(_, r)| *r)
        .expect("template table missing segment")
}

/// Build body constants from a ratio table for a given subject.
pub fn body_from_ratios(
    table: &[(String, SegmentRatios); 4],
    height: f64,
    mass: f64,
) -> BodyConstants {
    let segments = SegmentId::ALL.map(|seg| {
        let r = ratios_for(seg, table);
        let length = r.length_fraction * height;
        SegmentParams {
            mass_frac: r.mass_fraction,
            length,
            com_offset: r.com_fraction * length,
            inertia: r.mass_fraction * (r.inertia_coefficient * length).powi(2),
        }
    });
    BodyConstants {
        segments,
        total_height: height,
        total_mass: mass,
    }
}

impl BodyConstants {
    /// The built-in template instantiated for the template subject.
    pub fn template() -> BodyConstants {
        let table = parse_template_table(BODY_TEMPLATE_TABLE)
            .expect("embedded body template must parse");
        body_from_ratios(&table, TEMPLATE_HEIGHT, TEMPLATE_MASS)
    }

    pub fn segment(&self, id: SegmentId) -> &SegmentParams {
        &self.segments[id.index()]
    }

    pub fn foot_length(&self, side: Side) -> f64 {
        self.segment(SegmentId::Foot(side)).length
    }

    /// Sum of all segment mass fractions.
    pub fn mass_fraction_sum(&self) -> f64 {
        self.segments.iter().map(|s| s.mass_frac).sum()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.segments.iter().enumerate() {
            if !(s.mass_frac > 0.0 && s.length > 0.0 && s.com_offset > 0.0 && s.inertia > 0.0) {
                return Err(Error::invalid_input(format!(
                    "segment {} must have strictly positive constants",
                    SegmentId::ALL[i].name()
                )));
            }
        }
        if !(self.total_height > 0.0 && self.total_mass > 0.0) {
            return Err(Error::invalid_input("height and mass must be positive"));
        }
        let template_sum = BodyConstants::template().mass_fraction_sum();
        if (self.mass_fraction_sum() - template_sum).abs() > 1e-9 {
            return Err(Error::invalid_input(format!(
                "segment mass fractions sum {} differs from template {}",
                self.mass_fraction_sum(),
                template_sum
            )));
        }
        Ok(())
    }
}

/// Scale a template to a subject. Lengths scale with height, mass fractions
/// stay fixed, normalized inertias scale with the squared length ratio.
pub fn scale_body(height: f64, mass: f64, template: &BodyConstants) -> Result<BodyConstants> {
    if !(height > 1.0 && height < 2.5) {
        return Err(Error::invalid_input(format!(
            "height {height} m outside (1.0, 2.5)"
        )));
    }
    if !(mass > 20.0 && mass < 200.0) {
        return Err(Error::invalid_input(format!(
            "mass {mass} kg outside (20, 200)"
        )));
    }
    let s = height / template.total_height;
    let segments = template.segments.map(|seg| SegmentParams {
        mass_frac: seg.mass_frac,
        length: seg.length * s,
        com_offset: seg.com_offset * s,
        inertia: seg.inertia * s * s,
    });
    Ok(BodyConstants {
        segments,
        total_height: height,
        total_mass: mass,
    })
}

/// Sensor identity; one per instrumented segment, up to seven.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SensorId {
    Pelvis,
    Thigh(Side),
    Shank(Side),
    Foot(Side),
}

impl SensorId {
    pub const ALL: [SensorId; 7] = [
        SensorId::Pelvis,
        SensorId::Thigh(Side::Left),
        SensorId::Thigh(Side::Right),
        SensorId::Shank(Side::Left),
        SensorId::Shank(Side::Right),
        SensorId::Foot(Side::Left),
        SensorId::Foot(Side::Right),
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|s| *s == self).unwrap()
    }

    pub fn name(self) -> String {
        match self {
            SensorId::Pelvis => "pelvis".to_string(),
            SensorId::Thigh(s) => format!("thigh_{}", s.suffix()),
            SensorId::Shank(s) => format!("shank_{}", s.suffix()),
            SensorId::Foot(s) => format!("foot_{}", s.suffix()),
        }
    }

    pub fn parse(name: &str) -> Option<SensorId> {
        Self::ALL.iter().copied().find(|s| s.name() == name)
    }

    /// The segment this sensor kind mounts on.
    pub fn segment(self) -> SegmentId {
        match self {
            SensorId::Pelvis => SegmentId::Trunk,
            SensorId::Thigh(s) => SegmentId::Thigh(s),
            SensorId::Shank(s) => SegmentId::Shank(s),
            SensorId::Foot(s) => SegmentId::Foot(s),
        }
    }
}

/// One mounted sensor: parent segment, offset in the segment frame (meters),
/// and mounting angle relative to the segment frame (radians).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SensorMount {
    pub parent: SegmentId,
    pub dx: f64,
    pub dy: f64,
    pub angle: f64,
}

/// Sensor placement set; covers up to seven sensors.
#[derive(Clone, Debug, PartialEq)]
pub struct ImuPlacement {
    pub mounts: Vec<(SensorId, SensorMount)>,
}

impl ImuPlacement {
    /// Default placement for a body: pelvis sensor above the hip on the
    /// trunk, limb sensors mid-segment slightly off the segment axis. The
    /// pelvis mounting point is a calibration input with no authoritative
    /// value; adjust it per setup.
    pub fn default_full(body: &BodyConstants) -> ImuPlacement {
        let mut mounts = Vec::new();
        mounts.push((
            SensorId::Pelvis,
            SensorMount {
                parent: SegmentId::Trunk,
                dx: 0.0,
                dy: 0.10,
                angle: 0.0,
            },
        ));
        for side in Side::BOTH {
            mounts.push((
                SensorId::Thigh(side),
                SensorMount {
                    parent: SegmentId::Thigh(side),
                    dx: 0.04,
                    dy: -0.5 * body.segment(SegmentId::Thigh(side)).length,
                    angle: 0.0,
                },
            ));
            mounts.push((
                SensorId::Shank(side),
                SensorMount {
                    parent: SegmentId::Shank(side),
                    dx: 0.03,
                    dy: -0.4 * body.segment(SegmentId::Shank(side)).length,
                    angle: 0.0,
                },
            ));
            mounts.push((
                SensorId::Foot(side),
                SensorMount {
                    parent: SegmentId::Foot(side),
                    dx: 0.05,
                    dy: 0.03,
                    angle: 0.0,
                },
            ));
        }
        ImuPlacement { mounts }
    }

    pub fn get(&self, id: SensorId) -> Option<&SensorMount> {
        self.mounts.iter().find(|(s, _)| *s == id).map(|(_, m)| m)
    }

    pub fn sensor_ids(&self) -> Vec<SensorId> {
        self.mounts.iter().map(|(s, _)| *s).collect()
    }

    /// Keep only the listed sensors.
    pub fn retain(&self, keep: &[SensorId]) -> ImuPlacement {
        ImuPlacement {
            mounts: self
                .mounts
                .iter()
                .filter(|(s, _)| keep.contains(s))
                .cloned()
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = Vec::new();
        for (id, m) in &self.mounts {
            if m.parent != id.segment() {
                return Err(Error::InvalidPlacement(format!(
                    "sensor {} must mount on {}, not {}",
                    id.name(),
                    id.segment().name(),
                    m.parent.name()
                )));
            }
            if seen.contains(&m.parent) {
                return Err(Error::InvalidPlacement(format!(
                    "segment {} carries more than one sensor",
                    m.parent.name()
                )));
            }
            seen.push(m.parent);
            if !(m.dx.is_finite() && m.dy.is_finite() && m.angle.is_finite()) {
                return Err(Error::InvalidPlacement(format!(
                    "sensor {} has non-finite mount",
                    id.name()
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent lookup straight from the shipped ratio text, bypassing
    /// `body_from_ratios`.
    fn winter_lookup(segment: &str, height: f64, mass: f64) -> (f64, f64, f64, f64) {
        for line in BODY_TEMPLATE_TABLE.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f[0] == segment {
                let mf: f64 = f[1].parse().unwrap();
                let lf: f64 = f[2].parse().unwrap();
                let cf: f64 = f[3].parse().unwrap();
                let rg: f64 = f[4].parse().unwrap();
                let len = lf * height;
                let _ = mass;
                return (mf, len, cf * len, mf * (rg * len) * (rg * len));
            }
        }
        panic!("segment {segment} not in table");
    }

    #[test]
    fn identity_scaling_is_bit_exact() {
        let t = BodyConstants::template();
        let s = scale_body(TEMPLATE_HEIGHT, TEMPLATE_MASS, &t).unwrap();
        assert_eq!(t, s);
    }

    #[test]
    fn double_height_doubles_lengths_and_quadruples_inertia() {
        let mut t = BodyConstants::template();
        t.total_height = 1.2; // shrink template so 2x stays in range
        let t = {
            let table = parse_template_table(BODY_TEMPLATE_TABLE).unwrap();
            let mut b = body_from_ratios(&table, 1.2, TEMPLATE_MASS);
            b.total_mass = TEMPLATE_MASS;
            let _ = t;
            b
        };
        let s = scale_body(2.4, TEMPLATE_MASS, &t).unwrap();
        for (a, b) in t.segments.iter().zip(s.segments.iter()) {
            assert!((b.length - 2.0 * a.length).abs() < 1e-12);
            assert!((b.inertia - 4.0 * a.inertia).abs() < 1e-12);
            assert_eq!(a.mass_frac, b.mass_frac);
        }
    }

    #[test]
    fn scaled_body_matches_independent_table_lookup() {
        let t = BodyConstants::template();
        let s = scale_body(1.75, 70.0, &t).unwrap();
        for seg in SegmentId::ALL {
            let key = match seg {
                SegmentId::Trunk => "trunk",
                SegmentId::Thigh(_) => "thigh",
                SegmentId::Shank(_) => "shank",
                SegmentId::Foot(_) => "foot",
            };
            let (mf, len, com, inertia) = winter_lookup(key, 1.75, 70.0);
            let p = s.segment(seg);
            assert!((p.mass_frac - mf).abs() < 1e-12, "{key} mass");
            assert!((p.length - len).abs() < 1e-12, "{key} length");
            assert!((p.com_offset - com).abs() < 1e-12, "{key} com");
            assert!((p.inertia - inertia).abs() < 1e-12, "{key} inertia");
        }
    }

    #[test]
    fn out_of_range_subjects_are_rejected() {
        let t = BodyConstants::template();
        assert!(scale_body(0.9, 70.0, &t).is_err());
        assert!(scale_body(2.6, 70.0, &t).is_err());
        assert!(scale_body(1.75, 15.0, &t).is_err());
        assert!(scale_body(1.75, 250.0, &t).is_err());
    }

    #[test]
    fn template_mass_fractions_sum_to_one() {
        let t = BodyConstants::template();
        assert!((t.mass_fraction_sum() - 1.0).abs() < 1e-9);
        t.validate().unwrap();
    }

    #[test]
    fn default_placement_is_valid_and_unique_per_segment() {
        let b = BodyConstants::template();
        let p = ImuPlacement::default_full(&b);
        p.validate().unwrap();
        assert_eq!(p.mounts.len(), 7);
    }

    #[test]
    fn duplicate_sensor_rejected() {
        let b = BodyConstants::template();
        let mut p = ImuPlacement::default_full(&b);
        let dup = p.mounts[1].clone();
        p.mounts.push(dup);
        assert!(p.validate().is_err());
    }
}
