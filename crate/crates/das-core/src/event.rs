//! Activity events and the parameter bands they are drawn from.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActivityKind {
    Walking,
    Cycling,
}

impl ActivityKind {
    /// Class label: 0 = walking, 1 = cycling.
    pub fn label(self) -> u8 {
        match self {
            ActivityKind::Walking => 0,
            ActivityKind::Cycling => 1,
        }
    }

    pub fn from_label(label: u8) -> Result<Self> {
        match label {
            0 => Ok(ActivityKind::Walking),
            1 => Ok(ActivityKind::Cycling),
            other => Err(Error::invalid(format!("label {other} not in {{0,1}}"))),
        }
    }
}

/// One moving source passing the fiber during a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityEvent {
    pub kind: ActivityKind,
    /// Ground speed along the fiber, m/s.
    pub speed: f64,
    /// Fundamental repetition rate of the motion, Hz: step rate for walking,
    /// wheel rate for cycling.
    pub cadence: f64,
    /// Peak phase disturbance before node scaling, radians.
    pub amplitude: f64,
    /// Fractional bin position of the source at the first column.
    pub start_bin: f64,
    /// Offset of the first repetition into the window, seconds.
    pub start_time: f64,
}

impl ActivityEvent {
    pub fn validate(&self) -> Result<()> {
        if !(self.speed > 0.0) {
            return Err(Error::invalid("speed must be > 0"));
        }
        if !(self.cadence > 0.0) {
            return Err(Error::invalid("cadence must be > 0"));
        }
        if !(self.amplitude > 0.0) {
            return Err(Error::invalid("amplitude must be > 0"));
        }
        if !(self.start_time >= 0.0) {
            return Err(Error::invalid("start_time must be >= 0"));
        }
        Ok(())
    }
}

/// Inclusive parameter bands per activity class.
///
/// The default bands keep the two classes apart on two independent axes:
/// speed/cadence (walking is slow and sparse, cycling fast and continuous)
/// and raw amplitude (a bicycle plus rider couples more energy into the
/// ground than a pedestrian). Node gain and attenuation then rescale
/// amplitudes per deployment, which is the heterogeneity under study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventBands {
    pub walking_speed: (f64, f64),
    pub walking_cadence: (f64, f64),
    pub walking_amplitude: (f64, f64),
    pub cycling_speed: (f64, f64),
    pub cycling_cadence: (f64, f64),
    pub cycling_amplitude: (f64, f64),
    /// Start-bin band as a fraction of window height.
    pub start_bin_frac: (f64, f64),
}

impl Default for EventBands {
    fn default() -> Self {
        EventBands {
            walking_speed: (1.0, 1.8),
            walking_cadence: (1.6, 2.6),
            walking_amplitude: (0.35, 0.60),
            cycling_speed: (3.0, 7.0),
            cycling_cadence: (3.6, 4.8),
            cycling_amplitude: (0.70, 1.15),
            start_bin_frac: (0.15, 0.75),
        }
    }
}

fn draw(rng: &mut ChaCha8Rng, band: (f64, f64)) -> f64 {
    if band.0 == band.1 {
        band.0
    } else {
        rng.gen_range(band.0..band.1)
    }
}

impl EventBands {
    pub fn validate(&self) -> Result<()> {
        let bands = [
            self.walking_speed,
            self.walking_cadence,
            self.walking_amplitude,
            self.cycling_speed,
            self.cycling_cadence,
            self.cycling_amplitude,
            self.start_bin_frac,
        ];
        for (lo, hi) in bands {
            if !(lo > 0.0 && hi >= lo) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::invalid(format!("bad band ({lo}, {hi})")));
            }
        }
        Ok(())
    }

    /// Draw one event of the given kind, placed so its trace stays observable
    /// inside an `h`-row window.
    pub fn sample(&self, kind: ActivityKind, h: usize, rng: &mut ChaCha8Rng) -> ActivityEvent {
        let (speed_band, cadence_band, amp_band) = match kind {
            ActivityKind::Walking => (
                self.walking_speed,
                self.walking_cadence,
                self.walking_amplitude,
            ),
            ActivityKind::Cycling => (
                self.cycling_speed,
                self.cycling_cadence,
                self.cycling_amplitude,
            ),
        };
        let speed = draw(rng, speed_band);
        let cadence = draw(rng, cadence_band);
        let amplitude = draw(rng, amp_band);
        let lo = self.start_bin_frac.0 * h as f64;
        let hi = self.start_bin_frac.1 * h as f64;
        let start_bin = draw(rng, (lo, hi));
        let start_time = rng.gen_range(0.0..1.0) / cadence;
        ActivityEvent {
            kind,
            speed,
            cadence,
            amplitude,
            start_bin,
            start_time,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn labels_are_fixed() {
        assert_eq!(ActivityKind::Walking.label(), 0);
        assert_eq!(ActivityKind::Cycling.label(), 1);
        assert!(ActivityKind::from_label(2).is_err());
    }

    #[test]
    fn default_speed_bands_are_disjoint() {
        let b = EventBands::default();
        assert!(b.walking_speed.1 < b.cycling_speed.0);
    }

    #[test]
    fn sampled_events_validate_and_sit_in_band() {
        let bands = EventBands::default();
        let mut rng = stream(7);
        for _ in 0..100 {
            let e = bands.sample(ActivityKind::Cycling, 64, &mut rng);
            e.validate().unwrap();
            assert!(e.speed >= 3.0 && e.speed <= 7.0);
            assert!(e.start_bin >= 0.15 * 64.0 && e.start_bin <= 0.75 * 64.0);
            assert!(e.start_time < 1.0 / e.cadence);
        }
    }

    #[test]
    fn invalid_event_is_rejected() {
        let mut e = EventBands::default().sample(ActivityKind::Walking, 64, &mut stream(1));
        e.speed = 0.0;
        assert!(e.validate().is_err());
    }
}
