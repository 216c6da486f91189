//! Synthetic phase-shift signal generation.
//!
//! Both activities reach the fiber as trains of ground impacts along the
//! moving source's trace: footfalls at the step cadence for walking, wheel
//! impacts on joints and surface texture at the wheel cadence for cycling
//! (with some impact-to-impact amplitude spread). Every impact rings the
//! ground's characteristic response, so within one node the classes share
//! their texture and differ in repetition rate and raw amplitude; across
//! nodes the ground response, coupling gain, and sampling rate all move,
//! which is the heterogeneity under study. Signal content passes through
//! the node's single-pole ground low-pass and is scaled by
//! `gain * attenuation`; background noise and Poisson-count clutter
//! transients are added afterwards.
//!
//! The generator is pure given its seeds: identical (profile, event, seed)
//! inputs produce bit-identical windows.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::dataset::LabeledSample;
use crate::error::{Error, Result};
use crate::event::{ActivityEvent, ActivityKind, EventBands};
use crate::pipeline::{Recording, TrackPoint};
use crate::profile::NodeProfile;
use crate::rng::{mix, stream};
use crate::window::{PhaseWindow, REF_H, REF_W};

/// Impact ring time at the 2 Hz reference step rate, seconds. Ring time
/// scales inversely with cadence (lighter, faster impacts ring shorter), so
/// `RING_DUTY / cadence` gives each event's decay constant and this value
/// at the walking default.
pub const WALK_IMPULSE_TAU: f64 = 0.040;
/// Impact duty factor: decay constant x cadence.
pub const RING_DUTY: f64 = 2.0 * WALK_IMPULSE_TAU;
/// Ceiling on the ground ring frequency, Hz.
pub const GROUND_CARRIER_MAX_HZ: f64 = 30.0;

/// Ring frequency of a ground impact at this node.
///
/// Stiff, shallow-coupled ground both passes high frequencies and rings
/// fast underfoot; soft or deeply buried deployments do neither. Tying the
/// burst carrier to the node's low-pass cutoff (a quarter of it, capped at
/// [`GROUND_CARRIER_MAX_HZ`]) keeps the two observable ground properties
/// consistent, and it is one of the node-to-node differences a single-site
/// model never sees.
pub fn ground_carrier_hz(profile: &NodeProfile) -> f64 {
    (profile.lowpass_cutoff / 4.0).min(GROUND_CARRIER_MAX_HZ)
}
/// Spatial spread of event energy across neighboring bins, in bins.
pub const SPATIAL_SIGMA_BINS: f64 = 2.0;
/// Impact-to-impact amplitude spread for wheel impacts.
const CYCLE_IMPACT_JITTER: f64 = 0.1;
/// Clutter transient shape.
const CLUTTER_TAU: f64 = 0.030;
const CLUTTER_SIGMA_BINS: f64 = 1.5;
const CLUTTER_AMP: (f64, f64) = (0.04, 0.12);
const CLUTTER_CARRIER_HZ: (f64, f64) = (10.0, 60.0);

/// Ground-truth instrumentation emitted alongside a synthesized window.
#[derive(Debug, Clone)]
pub struct EventTrace {
    /// Impact times in window seconds (footfalls or wheel impacts).
    pub impulse_times: Vec<f64>,
    /// Source bin position per column (fractional).
    pub trace_bin: Vec<f64>,
    /// Per-column max |phase| of the clean, scaled signal (pre-noise).
    pub clean_envelope: Vec<f64>,
}

struct Canvas {
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl Canvas {
    fn new(h: usize, w: usize) -> Self {
        Canvas {
            h,
            w,
            data: vec![0.0; h * w],
        }
    }

    #[inline]
    fn add(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.w + col] += v;
    }
}

/// Peak of `exp(-t/tau) * sin(omega t)` over t >= 0, used to normalize a
/// burst so `amplitude` is its true peak value.
fn burst_peak_factor(omega: f64, tau: f64) -> f64 {
    let t_star = (omega * tau).atan() / omega;
    (-t_star / tau).exp() * (omega * t_star).sin()
}

/// Add one damped burst at (time `t0` s, bin `bin0`) to the canvas. The
/// burst peaks at `amplitude` regardless of carrier and decay constant.
fn render_burst(
    canvas: &mut Canvas,
    fs: f64,
    t0: f64,
    bin0: f64,
    amplitude: f64,
    carrier_hz: f64,
    tau: f64,
    sigma_bins: f64,
) {
    let c_start = (t0 * fs).ceil().max(0.0) as usize;
    let c_end = (((t0 + 6.0 * tau) * fs).floor() as usize).min(canvas.w.saturating_sub(1));
    if c_start > c_end {
        return;
    }
    let r_lo = ((bin0 - 3.0 * sigma_bins).floor().max(0.0)) as usize;
    let r_hi = (((bin0 + 3.0 * sigma_bins).ceil()) as usize).min(canvas.h.saturating_sub(1));
    if r_lo > r_hi {
        return;
    }
    let omega = 2.0 * std::f64::consts::PI * carrier_hz;
    let scale = amplitude / burst_peak_factor(omega, tau);
    for c in c_start..=c_end {
        let dt = c as f64 / fs - t0;
        let pulse = scale * (-dt / tau).exp() * (omega * dt).sin();
        for r in r_lo..=r_hi {
            let dr = r as f64 - bin0;
            canvas.add(r, c, pulse * (-dr * dr / (2.0 * sigma_bins * sigma_bins)).exp());
        }
    }
}

/// Render one event's clean, unscaled pattern into `canvas`.
///
/// `origin_bin`/`origin_col` offset the event inside a larger canvas; a
/// stand-alone window uses (0.0, 0). Jitter for cycling is drawn from `rng`
/// in column order. Returns the footfall times (window seconds).
fn render_event(
    canvas: &mut Canvas,
    fs: f64,
    bin_spacing: f64,
    carrier_hz: f64,
    event: &ActivityEvent,
    origin_bin: f64,
    origin_col: usize,
    window_cols: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let duration = window_cols as f64 / fs;
    let bins_per_sec = event.speed / bin_spacing;
    let tau = RING_DUTY / event.cadence;
    let mut times = Vec::new();
    let mut k = 0usize;
    loop {
        let t = event.start_time + k as f64 / event.cadence;
        if t >= duration {
            break;
        }
        // Footfalls land with the event amplitude; wheel impacts vary a
        // little from joint to joint.
        let amplitude = match event.kind {
            ActivityKind::Walking => event.amplitude,
            ActivityKind::Cycling => {
                let z: f64 = rng.sample(StandardNormal);
                event.amplitude * (1.0 + CYCLE_IMPACT_JITTER * z)
            }
        };
        let bin = origin_bin + event.start_bin + bins_per_sec * t;
        // Shift into canvas coordinates; bursts ring forward in time only.
        render_burst(
            canvas,
            fs,
            t + origin_col as f64 / fs,
            bin,
            amplitude,
            carrier_hz,
            tau,
            SPATIAL_SIGMA_BINS,
        );
        times.push(t);
        k += 1;
    }
    times
}

/// Single-pole low-pass along each row, in place. The filter state is
/// flushed to zero once it decays below any physical relevance; this keeps
/// later scaling by node gain exact in f32 instead of drifting through
/// subnormals.
fn lowpass_rows(canvas: &mut Canvas, fs: f64, cutoff_hz: f64) {
    const FLUSH: f64 = 1e-25;
    let alpha = 1.0 - (-2.0 * std::f64::consts::PI * cutoff_hz / fs).exp();
    for r in 0..canvas.h {
        let row = &mut canvas.data[r * canvas.w..(r + 1) * canvas.w];
        let mut y = 0.0;
        for v in row.iter_mut() {
            y += alpha * (*v - y);
            if y.abs() < FLUSH {
                y = 0.0;
            }
            *v = y;
        }
    }
}

fn add_noise(canvas: &mut Canvas, noise_std: f64, rng: &mut ChaCha8Rng) {
    if noise_std <= 0.0 {
        return;
    }
    for v in canvas.data.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v += noise_std * z;
    }
}

fn add_clutter(canvas: &mut Canvas, fs: f64, rate_per_window: f64, rng: &mut ChaCha8Rng) {
    if rate_per_window <= 0.0 {
        return;
    }
    let count = Poisson::new(rate_per_window)
        .expect("validated clutter rate")
        .sample(rng) as usize;
    for _ in 0..count {
        let t0 = rng.gen_range(0.0..canvas.w as f64 / fs);
        let bin0 = rng.gen_range(0.0..canvas.h as f64);
        let amp = rng.gen_range(CLUTTER_AMP.0..CLUTTER_AMP.1);
        let carrier = rng.gen_range(CLUTTER_CARRIER_HZ.0..CLUTTER_CARRIER_HZ.1);
        render_burst(canvas, fs, t0, bin0, amp, carrier, CLUTTER_TAU, CLUTTER_SIGMA_BINS);
    }
}

fn observable(event: &ActivityEvent, h: usize, duration: f64) -> Result<()> {
    let drift = event.speed * duration; // meters; bins when spacing is 1
    let lo = event.start_bin.min(event.start_bin + drift);
    let hi = event.start_bin.max(event.start_bin + drift);
    if hi < 0.0 || lo > (h - 1) as f64 {
        return Err(Error::EventNotObservable {
            h,
            w: 0,
            lo,
            hi,
        });
    }
    Ok(())
}

/// Synthesize one event window of the given shape, returning the ground
/// truth trace alongside.
pub fn synthesize_event_traced_sized(
    profile: &NodeProfile,
    event: &ActivityEvent,
    h: usize,
    w: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(PhaseWindow, EventTrace)> {
    profile.validate()?;
    event.validate()?;
    let fs = profile.sampling_rate as f64;
    let duration = w as f64 / fs;
    observable(event, h, duration).map_err(|e| match e {
        Error::EventNotObservable { lo, hi, .. } => Error::EventNotObservable { h, w, lo, hi },
        other => other,
    })?;

    let mut canvas = Canvas::new(h, w);
    let impulse_times = render_event(
        &mut canvas,
        fs,
        profile.bin_spacing,
        ground_carrier_hz(profile),
        event,
        0.0,
        0,
        w,
        rng,
    );
    lowpass_rows(&mut canvas, fs, profile.lowpass_cutoff);
    let scale = profile.effective_gain();
    for v in canvas.data.iter_mut() {
        *v *= scale;
    }

    let bins_per_sec = event.speed / profile.bin_spacing;
    let trace_bin: Vec<f64> = (0..w)
        .map(|c| event.start_bin + bins_per_sec * (c as f64 / fs))
        .collect();
    let clean_envelope: Vec<f64> = (0..w)
        .map(|c| {
            (0..h)
                .map(|r| canvas.data[r * w + c].abs())
                .fold(0.0f64, f64::max)
        })
        .collect();

    add_noise(&mut canvas, profile.noise_std, rng);
    add_clutter(&mut canvas, fs, profile.clutter_rate, rng);

    let data: Vec<f32> = canvas.data.iter().map(|&v| v as f32).collect();
    let window = PhaseWindow::from_data(h, w, data, 0, 0.0, profile.node_id.clone())?;
    Ok((
        window,
        EventTrace {
            impulse_times,
            trace_bin,
            clean_envelope,
        },
    ))
}

/// Reference-shape (64 x 512) window with ground-truth instrumentation.
pub fn synthesize_event_traced(
    profile: &NodeProfile,
    event: &ActivityEvent,
    rng: &mut ChaCha8Rng,
) -> Result<(PhaseWindow, EventTrace)> {
    synthesize_event_traced_sized(profile, event, REF_H, REF_W, rng)
}

/// Reference-shape (64 x 512) window of one activity event.
pub fn synthesize_event(
    profile: &NodeProfile,
    event: &ActivityEvent,
    rng: &mut ChaCha8Rng,
) -> Result<PhaseWindow> {
    synthesize_event_traced(profile, event, rng).map(|(w, _)| w)
}

/// Number of cycling samples in a dataset of `n` at the given balance.
fn cycling_count(n: usize, class_balance: f64) -> usize {
    let raw = (n as f64 * class_balance).round() as usize;
    if n >= 2 {
        raw.clamp(1, n - 1)
    } else {
        raw.min(n)
    }
}

/// Synthesize a labeled dataset: `n_samples` windows with stratified labels
/// (`class_balance` = cycling fraction), event parameters drawn per sample
/// from `bands`. Deterministic in (profile.seed, seed).
pub fn synthesize_dataset_with_bands(
    profile: &NodeProfile,
    bands: &EventBands,
    n_samples: usize,
    class_balance: f64,
    seed: u64,
) -> Result<Vec<LabeledSample>> {
    profile.validate()?;
    bands.validate()?;
    if n_samples < 1 {
        return Err(Error::invalid("n_samples must be >= 1"));
    }
    if !(class_balance > 0.0 && class_balance < 1.0) {
        return Err(Error::invalid("class_balance must be in (0, 1)"));
    }
    let n_cycling = cycling_count(n_samples, class_balance);
    let n_walking = n_samples - n_cycling;

    let mut master = stream(mix(profile.seed, seed));
    let sample_seeds: Vec<u64> = (0..n_samples).map(|_| master.gen()).collect();

    let windows = crate::parallel::map_indexed(n_samples, |i| {
        let kind = if i < n_walking {
            ActivityKind::Walking
        } else {
            ActivityKind::Cycling
        };
        let mut rng = stream(sample_seeds[i]);
        let event = bands.sample(kind, REF_H, &mut rng);
        synthesize_event(profile, &event, &mut rng).map(|window| LabeledSample {
            window,
            label: kind.label(),
        })
    });
    windows.into_iter().collect()
}

/// [`synthesize_dataset_with_bands`] with the default event bands.
pub fn synthesize_dataset(
    profile: &NodeProfile,
    n_samples: usize,
    class_balance: f64,
    seed: u64,
) -> Result<Vec<LabeledSample>> {
    synthesize_dataset_with_bands(profile, &EventBands::default(), n_samples, class_balance, seed)
}

/// Ground truth for one event placed in a continuous recording.
#[derive(Debug, Clone)]
pub struct RecordingTruth {
    pub event: ActivityEvent,
    pub label: u8,
    /// Top row of the reference window that captures the event.
    pub origin_bin: usize,
    /// First column of that window.
    pub origin_col: usize,
    /// Ground-truth source positions (the synthetic stand-in for GPS).
    pub track: Vec<TrackPoint>,
}

/// Synthesize a continuous multi-event recording plus per-event ground
/// truth. Events are laid out one after another with random gaps; each fits
/// a reference 64 x 512 window at its recorded origin.
pub fn synthesize_recording(
    profile: &NodeProfile,
    bands: &EventBands,
    n_events: usize,
    n_bins: usize,
    seed: u64,
) -> Result<(Recording, Vec<RecordingTruth>)> {
    profile.validate()?;
    bands.validate()?;
    if n_events == 0 {
        return Err(Error::invalid("n_events must be >= 1"));
    }
    if n_bins < REF_H {
        return Err(Error::invalid(format!("n_bins must be >= {REF_H}")));
    }
    let fs = profile.sampling_rate as f64;
    let mut rng = stream(mix(profile.seed, mix(seed, 0x7265636f)));

    // Place events on the time axis first.
    let mut origins: Vec<usize> = Vec::with_capacity(n_events);
    let mut col = 0usize;
    for _ in 0..n_events {
        col += rng.gen_range(REF_W / 4..REF_W / 2); // leading gap
        origins.push(col);
        col += REF_W;
    }
    let n_cols = col + REF_W / 4;

    let mut canvas = Canvas::new(n_bins, n_cols);
    let mut truths = Vec::with_capacity(n_events);
    for origin_col in origins {
        let kind = if rng.gen_bool(0.5) {
            ActivityKind::Walking
        } else {
            ActivityKind::Cycling
        };
        let event = bands.sample(kind, REF_H, &mut rng);
        let origin_bin = rng.gen_range(0..=(n_bins - REF_H));
        render_event(
            &mut canvas,
            fs,
            profile.bin_spacing,
            ground_carrier_hz(profile),
            &event,
            origin_bin as f64,
            origin_col,
            REF_W,
            &mut rng,
        );
        let bins_per_sec = event.speed / profile.bin_spacing;
        let duration = REF_W as f64 / fs;
        let track: Vec<TrackPoint> = (0..)
            .map(|k| k as f64 * 0.1)
            .take_while(|t| *t < duration)
            .map(|t| TrackPoint {
                time: origin_col as f64 / fs + t,
                position_m: (origin_bin as f64 + event.start_bin + bins_per_sec * t)
                    * profile.bin_spacing,
            })
            .collect();
        truths.push(RecordingTruth {
            label: kind.label(),
            event,
            origin_bin,
            origin_col,
            track,
        });
    }

    lowpass_rows(&mut canvas, fs, profile.lowpass_cutoff);
    let scale = profile.effective_gain();
    for v in canvas.data.iter_mut() {
        *v *= scale;
    }
    add_noise(&mut canvas, profile.noise_std, &mut rng);
    // Clutter rate is per reference window; scale to the recording length.
    let windows_worth = n_cols as f64 / REF_W as f64;
    add_clutter(&mut canvas, fs, profile.clutter_rate * windows_worth, &mut rng);

    let data: Vec<f32> = canvas.data.iter().map(|&v| v as f32).collect();
    let recording = Recording::new(
        profile.node_id.clone(),
        profile.sampling_rate,
        profile.bin_spacing,
        n_bins,
        n_cols,
        data,
    )?;
    Ok((recording, truths))
}
