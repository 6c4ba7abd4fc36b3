//! Table frame, stand poses and differential-drive kinematics.
//!
//! Poses are stored in fixed point (micrometres, millidegrees) so that a
//! translation followed by its inverse restores the pose bit for bit.
//! Headings are measured counter-clockwise from the +x axis; `RotateCcw`
//! increases the heading and `RotateCw` decreases it. Stands sit on a circle
//! around the table centre, 90° apart, with their drive direction pointing at
//! the centre and the phone screen facing the owner.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::participant::ParticipantId;

const FULL_TURN_MDEG: i64 = 360_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Pose {
    x_um: i64,
    y_um: i64,
    heading_mdeg: i64,
}

fn normalize_mdeg(mdeg: i64) -> i64 {
    mdeg.rem_euclid(FULL_TURN_MDEG)
}

/// Wraps an angle in degrees into (-180, 180].
pub fn wrap_deg(deg: f64) -> f64 {
    let mut d = deg % 360.0;
    if d <= -180.0 {
        d += 360.0;
    } else if d > 180.0 {
        d -= 360.0;
    }
    d
}

impl Pose {
    pub fn from_mm_deg(x_mm: f64, y_mm: f64, heading_deg: f64) -> Self {
        Pose {
            x_um: (x_mm * 1000.0).round() as i64,
            y_um: (y_mm * 1000.0).round() as i64,
            heading_mdeg: normalize_mdeg((heading_deg * 1000.0).round() as i64),
        }
    }

    pub fn x_mm(&self) -> f64 {
        self.x_um as f64 / 1000.0
    }

    pub fn y_mm(&self) -> f64 {
        self.y_um as f64 / 1000.0
    }

    /// Heading in [0, 360).
    pub fn heading_deg(&self) -> f64 {
        self.heading_mdeg as f64 / 1000.0
    }

    /// Moves along the current heading; negative distances drive backwards.
    pub fn translated(&self, mm: f64) -> Pose {
        let rad = self.heading_deg().to_radians();
        let dx = (mm * 1000.0 * rad.cos()).round() as i64;
        let dy = (mm * 1000.0 * rad.sin()).round() as i64;
        Pose { x_um: self.x_um + dx, y_um: self.y_um + dy, ..*self }
    }

    /// Rotates in place; positive is counter-clockwise.
    pub fn rotated(&self, deg: f64) -> Pose {
        let d = (deg * 1000.0).round() as i64;
        Pose { heading_mdeg: normalize_mdeg(self.heading_mdeg + d), ..*self }
    }

    pub fn distance_mm(&self, other: &Pose) -> f64 {
        (self.x_mm() - other.x_mm()).hypot(self.y_mm() - other.y_mm())
    }

    /// Absolute heading difference in degrees, in [0, 180].
    pub fn heading_error_deg(&self, other: &Pose) -> f64 {
        wrap_deg(self.heading_deg() - other.heading_deg()).abs()
    }

    /// Bearing from this pose's position to a point, in degrees.
    pub fn bearing_to(&self, x_mm: f64, y_mm: f64) -> f64 {
        (y_mm - self.y_mm()).atan2(x_mm - self.x_mm()).to_degrees()
    }

    pub fn radius_mm(&self) -> f64 {
        self.x_mm().hypot(self.y_mm())
    }
}

impl Serialize for Pose {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.x_mm(), self.y_mm(), self.heading_deg()].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [x, y, h] = <[f64; 3]>::deserialize(d)?;
        Ok(Pose::from_mm_deg(x, y, h))
    }
}

/// Round-table layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TableGeometry {
    /// Distance from the table centre to each stand's home position.
    pub home_radius_mm: f64,
    /// Stands may not leave this circle.
    pub bounds_radius_mm: f64,
}

impl Default for TableGeometry {
    fn default() -> Self {
        TableGeometry { home_radius_mm: 300.0, bounds_radius_mm: 450.0 }
    }
}

impl TableGeometry {
    /// Home pose of a seat: P1 at 0°, P2 at 90°, ... facing the centre.
    pub fn home_pose(&self, p: ParticipantId) -> Pose {
        let angle = 90.0 * p.slot() as f64;
        let rad = angle.to_radians();
        Pose::from_mm_deg(
            self.home_radius_mm * rad.cos(),
            self.home_radius_mm * rad.sin(),
            angle + 180.0,
        )
    }

    pub fn contains(&self, pose: &Pose) -> bool {
        pose.radius_mm() <= self.bounds_radius_mm + 1e-9
    }
}

/// Drive speeds of a stand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Kinematics {
    pub linear_mm_s: f64,
    pub angular_deg_s: f64,
}

impl Default for Kinematics {
    fn default() -> Self {
        Kinematics { linear_mm_s: 100.0, angular_deg_s: 180.0 }
    }
}

impl Kinematics {
    pub fn translate_ms(&self, mm: f64) -> u64 {
        (mm.abs() / self.linear_mm_s * 1000.0).ceil() as u64
    }

    pub fn rotate_ms(&self, deg: f64) -> u64 {
        (deg.abs() / self.angular_deg_s * 1000.0).ceil() as u64
    }

    /// Distance covered in `dt_ms`.
    pub fn reach_mm(&self, dt_ms: u64) -> f64 {
        self.linear_mm_s * dt_ms as f64 / 1000.0
    }

    pub fn reach_deg(&self, dt_ms: u64) -> f64 {
        self.angular_deg_s * dt_ms as f64 / 1000.0
    }
}

/// Dead-reckoned path back to the home pose: turn, drive, turn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomePath {
    /// Signed, positive counter-clockwise.
    pub first_turn_deg: f64,
    /// Signed, negative drives backwards.
    pub drive_mm: f64,
    pub final_turn_deg: f64,
}

impl HomePath {
    pub fn duration_ms(&self, kin: &Kinematics) -> u64 {
        kin.rotate_ms(self.first_turn_deg) + kin.translate_ms(self.drive_mm) + kin.rotate_ms(self.final_turn_deg)
    }
}

/// Plans the return to `home`, driving backwards when home is behind.
pub fn home_path(from: &Pose, home: &Pose) -> HomePath {
    let dist = from.distance_mm(home);
    if dist < 1e-3 {
        return HomePath {
            first_turn_deg: 0.0,
            drive_mm: 0.0,
            final_turn_deg: wrap_deg(home.heading_deg() - from.heading_deg()),
        };
    }
    let bearing = from.bearing_to(home.x_mm(), home.y_mm());
    let diff = wrap_deg(bearing - from.heading_deg());
    let (turn, drive) = if diff.abs() <= 90.0 {
        (diff, dist)
    } else {
        (wrap_deg(diff - 180.0), -dist)
    };
    let after = from.rotated(turn);
    HomePath {
        first_turn_deg: turn,
        drive_mm: drive,
        final_turn_deg: wrap_deg(home.heading_deg() - after.heading_deg()),
    }
}

/// Follows a home path for at most `dt_ms`.
pub fn follow_home_path(from: &Pose, path: &HomePath, kin: &Kinematics, dt_ms: u64) -> Pose {
    let mut budget = dt_ms;
    let mut pose = *from;
    let turn_ms = kin.rotate_ms(path.first_turn_deg);
    if budget < turn_ms {
        return pose.rotated(path.first_turn_deg.signum() * kin.reach_deg(budget));
    }
    pose = pose.rotated(path.first_turn_deg);
    budget -= turn_ms;
    let drive_ms = kin.translate_ms(path.drive_mm);
    if budget < drive_ms {
        return pose.translated(path.drive_mm.signum() * kin.reach_mm(budget));
    }
    pose = pose.translated(path.drive_mm);
    budget -= drive_ms;
    let final_ms = kin.rotate_ms(path.final_turn_deg);
    if budget < final_ms {
        return pose.rotated(path.final_turn_deg.signum() * kin.reach_deg(budget));
    }
    pose.rotated(path.final_turn_deg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn translation_follows_heading() {
        let p = Pose::from_mm_deg(0.0, 0.0, 0.0).translated(50.0);
        assert_eq!(p, Pose::from_mm_deg(50.0, 0.0, 0.0));
        let q = Pose::from_mm_deg(0.0, 0.0, 90.0).translated(50.0);
        assert_eq!(q, Pose::from_mm_deg(0.0, 50.0, 90.0));
    }

    #[test]
    fn forward_then_backward_is_exact() {
        let start = Pose::from_mm_deg(12.345, -7.5, 33.3);
        assert_eq!(start.translated(87.1).translated(-87.1), start);
        assert_eq!(start.rotated(360.0), start);
        assert_eq!(start.rotated(-45.5).rotated(45.5), start);
    }

    #[test]
    fn homes_face_the_centre() {
        let g = TableGeometry::default();
        for p in ParticipantId::ALL {
            let h = g.home_pose(p);
            assert!((h.radius_mm() - 300.0).abs() < 1e-3);
            let to_centre = h.bearing_to(0.0, 0.0);
            assert!(wrap_deg(to_centre - h.heading_deg()).abs() < 1e-3);
        }
    }

    #[test]
    fn home_path_reaches_home() {
        let kin = Kinematics::default();
        let home = Pose::from_mm_deg(300.0, 0.0, 180.0);
        for start in [
            home.translated(100.0),
            home.translated(60.0).rotated(180.0),
            Pose::from_mm_deg(-120.0, 40.0, 17.0),
            home.rotated(-90.0),
        ] {
            let path = home_path(&start, &home);
            let end = follow_home_path(&start, &path, &kin, u64::MAX);
            assert!(end.distance_mm(&home) < 0.01, "{start:?} -> {end:?}");
            assert!(end.heading_error_deg(&home) < 0.01);
        }
    }

    #[test]
    fn behind_means_reverse() {
        let home = Pose::from_mm_deg(300.0, 0.0, 180.0);
        let path = home_path(&home.translated(100.0), &home);
        assert_eq!(path.first_turn_deg, 0.0);
        assert!((path.drive_mm + 100.0).abs() < 1e-6);
    }
}
