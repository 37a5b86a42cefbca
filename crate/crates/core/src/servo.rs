//! Discrete-event simulation of the classification → PWM servo path.
//!
//! Time is integer microseconds. PWM edges fall at multiples of the period.
//! A classification finished at `t` is latched at the first edge strictly
//! after `t`; when several finish inside one period the last one wins.
//! Events at equal times are ordered pwm_edge, angle_update, frame,
//! inference_done.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::LoweredRunner;
use crate::plane::BitImage;
use crate::program::{estimate, CostModel};

/// 333 Hz, rounded to whole microseconds.
pub const PWM_PERIOD_US: u64 = 3003;
pub const MIN_PULSE_US: f64 = 1000.0;
pub const MAX_PULSE_US: f64 = 2000.0;
pub const MAX_ANGLE_DEG: f64 = 180.0;
pub const DEFAULT_SLEW_DEG_PER_S: f64 = 600.0;
pub const MAX_SERVOS: usize = 5;

/// rock, paper, scissors.
pub const DEFAULT_ANGLE_TABLE: [f64; 3] = [0.0, 90.0, 180.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServoModel {
    pub pwm_period_us: u64,
    pub slew_deg_per_s: f64,
    pub angle_deg: f64,
    /// Target angle for each class index.
    pub angle_table: Vec<f64>,
}

impl Default for ServoModel {
    fn default() -> Self {
        Self {
            pwm_period_us: PWM_PERIOD_US,
            slew_deg_per_s: DEFAULT_SLEW_DEG_PER_S,
            angle_deg: 90.0,
            angle_table: DEFAULT_ANGLE_TABLE.to_vec(),
        }
    }
}

/// Pulse width for `angle_deg`, clamped to the servo's pulse range.
pub fn pulse_width_us(angle_deg: f64) -> f64 {
    (MIN_PULSE_US + angle_deg / MAX_ANGLE_DEG * (MAX_PULSE_US - MIN_PULSE_US))
        .clamp(MIN_PULSE_US, MAX_PULSE_US)
}

pub fn angle_for_pulse(pulse_us: f64) -> f64 {
    (pulse_us.clamp(MIN_PULSE_US, MAX_PULSE_US) - MIN_PULSE_US) / (MAX_PULSE_US - MIN_PULSE_US)
        * MAX_ANGLE_DEG
}

impl ServoModel {
    pub fn with_table(angle_table: Vec<f64>) -> Self {
        Self {
            angle_table,
            ..Self::default()
        }
    }

    /// Largest angle change allowed between consecutive edges.
    pub fn max_step_deg(&self) -> f64 {
        self.slew_deg_per_s * self.pwm_period_us as f64 / 1e6
    }

    /// Commanded angle for `class`, passed through the pulse-width clamp.
    pub fn target_for(&self, class: usize) -> Option<f64> {
        self.angle_table
            .get(class)
            .map(|&a| angle_for_pulse(pulse_width_us(a)))
    }

    fn validate(&self, id: usize) -> Result<()> {
        if self.pwm_period_us == 0 {
            return Err(Error::Servo(format!("servo {id}: PWM period must be positive")));
        }
        if !(self.slew_deg_per_s.is_finite() && self.slew_deg_per_s > 0.0) {
            return Err(Error::Servo(format!("servo {id}: slew limit must be positive")));
        }
        if !self.angle_deg.is_finite() || self.angle_table.iter().any(|a| !a.is_finite()) {
            return Err(Error::Servo(format!("servo {id}: angles must be finite")));
        }
        Ok(())
    }
}

/// One to [`MAX_SERVOS`] servos sharing a PWM clock.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ServoBank {
    servos: Vec<ServoModel>,
}

impl ServoBank {
    pub fn new(servos: Vec<ServoModel>) -> Result<Self> {
        if servos.is_empty() || servos.len() > MAX_SERVOS {
            return Err(Error::Servo(format!(
                "a bank holds 1 to {MAX_SERVOS} servos, got {}",
                servos.len()
            )));
        }
        for (i, s) in servos.iter().enumerate() {
            s.validate(i)?;
        }
        let period = servos[0].pwm_period_us;
        if servos.iter().any(|s| s.pwm_period_us != period) {
            return Err(Error::Servo("servos in a bank share one PWM period".into()));
        }
        Ok(Self { servos })
    }

    pub fn single() -> Self {
        Self {
            servos: vec![ServoModel::default()],
        }
    }

    pub fn servos(&self) -> &[ServoModel] {
        &self.servos
    }

    pub fn pwm_period_us(&self) -> u64 {
        self.servos[0].pwm_period_us
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    PwmEdge,
    AngleUpdate,
    Frame,
    InferenceDone,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::PwmEdge => "pwm_edge",
            EventKind::AngleUpdate => "angle_update",
            EventKind::Frame => "frame",
            EventKind::InferenceDone => "inference_done",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Event {
    pub t_us: u64,
    pub kind: EventKind,
    pub servo_id: Option<usize>,
    /// Index of the frame this event belongs to; for an angle update, the
    /// frame whose command was latched at this edge.
    pub frame: Option<usize>,
    pub class: Option<usize>,
    pub angle_deg: Option<f64>,
}

impl Event {
    fn new(t_us: u64, kind: EventKind) -> Self {
        Self {
            t_us,
            kind,
            servo_id: None,
            frame: None,
            class: None,
            angle_deg: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ServoTimeline {
    pub events: Vec<Event>,
    pub class_names: Vec<String>,
    pub inference_latency_us: u64,
    pub pwm_period_us: u64,
    pub duration_us: u64,
}

impl ServoTimeline {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_us,event,servo_id,class,angle\n");
        for e in &self.events {
            let servo = e.servo_id.map(|s| s.to_string()).unwrap_or_default();
            let class = e
                .class
                .map(|c| {
                    self.class_names
                        .get(c)
                        .cloned()
                        .unwrap_or_else(|| c.to_string())
                })
                .unwrap_or_default();
            let angle = e.angle_deg.map(|a| format!("{a:.4}")).unwrap_or_default();
            out.push_str(&format!("{},{},{servo},{class},{angle}\n", e.t_us, e.kind));
        }
        out
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }
}

/// A classification result arriving at the controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Classified {
    pub frame_us: u64,
    pub class: usize,
}

#[derive(Debug, Clone)]
pub struct TimedFrame {
    pub t_us: u64,
    pub image: BitImage,
}

/// Event simulation from already classified frames.
pub fn simulate(
    frames: &[Classified],
    inference_latency_us: u64,
    bank: &ServoBank,
    class_names: &[String],
    duration_us: u64,
) -> Result<ServoTimeline> {
    if frames.windows(2).any(|w| w[1].frame_us < w[0].frame_us) {
        return Err(Error::Servo("frame timestamps must be nondecreasing".into()));
    }
    if let Some(f) = frames.last() {
        if f.frame_us > duration_us {
            return Err(Error::Servo(format!(
                "frame at {} us lies beyond the {duration_us} us run",
                f.frame_us
            )));
        }
    }
    if let Some(f) = frames.iter().find(|f| f.class >= class_names.len()) {
        return Err(Error::Servo(format!("class index {} has no name", f.class)));
    }
    let period = bank.pwm_period_us();
    let mut events = Vec::with_capacity(frames.len() * 2 + (duration_us / period) as usize + 1);
    for (i, f) in frames.iter().enumerate() {
        events.push(Event {
            frame: Some(i),
            ..Event::new(f.frame_us, EventKind::Frame)
        });
        let done = f.frame_us + inference_latency_us;
        if done <= duration_us {
            events.push(Event {
                frame: Some(i),
                class: Some(f.class),
                ..Event::new(done, EventKind::InferenceDone)
            });
        }
    }

    let mut servos: Vec<ServoModel> = bank.servos().to_vec();
    let mut targets: Vec<f64> = servos.iter().map(|s| s.angle_deg).collect();
    // Frames are sorted by time and share one latency, so completions are
    // too; `next` walks them as edges advance.
    let mut next = 0usize;
    let mut edge = 0u64;
    while edge <= duration_us {
        events.push(Event::new(edge, EventKind::PwmEdge));
        // Last completion strictly before this edge and not yet consumed.
        let mut latched = None;
        while next < frames.len() && frames[next].frame_us + inference_latency_us < edge {
            latched = Some(next);
            next += 1;
        }
        for (id, servo) in servos.iter_mut().enumerate() {
            if let Some(i) = latched {
                if let Some(t) = servo.target_for(frames[i].class) {
                    targets[id] = t;
                }
            }
            let step = servo.max_step_deg();
            let before = servo.angle_deg;
            let delta = (targets[id] - before).clamp(-step, step);
            servo.angle_deg = if (targets[id] - before).abs() <= step {
                targets[id]
            } else {
                before + delta
            };
            if latched.is_some() || servo.angle_deg != before {
                events.push(Event {
                    servo_id: Some(id),
                    frame: latched,
                    class: latched.map(|i| frames[i].class),
                    angle_deg: Some(servo.angle_deg),
                    ..Event::new(edge, EventKind::AngleUpdate)
                });
            }
        }
        edge += period;
    }
    // Stable: ties keep insertion order (frame before its completion, servos
    // in id order).
    events.sort_by_key(|e| (e.t_us, e.kind));
    Ok(ServoTimeline {
        events,
        class_names: class_names.to_vec(),
        inference_latency_us,
        pwm_period_us: period,
        duration_us,
    })
}

/// Runs every frame through the lowered program and simulates the servo
/// path. The inference latency is the cost-model latency rounded up to
/// whole microseconds.
pub fn run_loop(
    frames: &[TimedFrame],
    runner: &LoweredRunner,
    cost: &CostModel,
    bank: &ServoBank,
    duration_us: u64,
) -> Result<ServoTimeline> {
    let report = estimate(runner.program(), cost)?;
    let latency = report.latency_us.ceil() as u64;
    let noiseless = runner.config().noise.is_noiseless();
    let mut state = runner.new_state(runner.config().noise)?;
    let mut cache: HashMap<&BitImage, usize> = HashMap::new();
    let mut classified = Vec::with_capacity(frames.len());
    for f in frames {
        let class = match cache.get(&f.image) {
            Some(&c) if noiseless => c,
            _ => {
                let c = runner.run_on(&mut state, &f.image)?.predicted;
                if noiseless {
                    cache.insert(&f.image, c);
                }
                c
            }
        };
        classified.push(Classified {
            frame_us: f.t_us,
            class,
        });
    }
    let names: Vec<String> = runner.program().labels().into_iter().map(String::from).collect();
    simulate(&classified, latency, bank, &names, duration_us)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FrameFate {
    Latched { edge_us: u64, reaction_us: u64 },
    /// A later result took the same edge.
    Dropped { by_frame: usize },
    /// No edge inside the run followed the result.
    Unlatched,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FrameReaction {
    pub frame: usize,
    pub frame_us: u64,
    pub fate: FrameFate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReactionSummary {
    pub frames: usize,
    pub latched: usize,
    pub dropped: usize,
    pub unlatched: usize,
    pub min_reaction_us: Option<u64>,
    pub max_reaction_us: Option<u64>,
    pub mean_reaction_us: Option<f64>,
}

impl fmt::Display for ReactionSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "frames={} latched={} dropped={} unlatched={}",
            self.frames, self.latched, self.dropped, self.unlatched
        )?;
        if let (Some(lo), Some(hi), Some(mean)) =
            (self.min_reaction_us, self.max_reaction_us, self.mean_reaction_us)
        {
            write!(f, " reaction_us min={lo} mean={mean:.1} max={hi}")?;
        }
        Ok(())
    }
}

/// Fate of every frame in `timeline`, derived from its events alone.
pub fn reaction_latency(timeline: &ServoTimeline) -> Vec<FrameReaction> {
    let mut frame_at: Vec<(usize, u64)> = Vec::new();
    let mut done_at: HashMap<usize, u64> = HashMap::new();
    let mut edges: Vec<u64> = Vec::new();
    let mut latched_at: HashMap<u64, usize> = HashMap::new();
    for e in &timeline.events {
        match (e.kind, e.frame) {
            (EventKind::Frame, Some(i)) => frame_at.push((i, e.t_us)),
            (EventKind::InferenceDone, Some(i)) => {
                done_at.insert(i, e.t_us);
            }
            (EventKind::PwmEdge, _) => edges.push(e.t_us),
            (EventKind::AngleUpdate, Some(i)) => {
                latched_at.insert(e.t_us, i);
            }
            _ => {}
        }
    }
    frame_at
        .into_iter()
        .map(|(frame, frame_us)| {
            let edge = done_at.get(&frame).and_then(|&done| {
                let k = edges.partition_point(|&t| t <= done);
                edges.get(k).copied()
            });
            let fate = match edge {
                None => FrameFate::Unlatched,
                Some(edge_us) => match latched_at.get(&edge_us) {
                    Some(&winner) if winner == frame => FrameFate::Latched {
                        edge_us,
                        reaction_us: edge_us - frame_us,
                    },
                    Some(&winner) => FrameFate::Dropped { by_frame: winner },
                    None => FrameFate::Unlatched,
                },
            };
            FrameReaction {
                frame,
                frame_us,
                fate,
            }
        })
        .collect()
}

pub fn summarize(reactions: &[FrameReaction]) -> ReactionSummary {
    let lat: Vec<u64> = reactions
        .iter()
        .filter_map(|r| match r.fate {
            FrameFate::Latched { reaction_us, .. } => Some(reaction_us),
            _ => None,
        })
        .collect();
    let dropped = reactions
        .iter()
        .filter(|r| matches!(r.fate, FrameFate::Dropped { .. }))
        .count();
    ReactionSummary {
        frames: reactions.len(),
        latched: lat.len(),
        dropped,
        unlatched: reactions.len() - lat.len() - dropped,
        min_reaction_us: lat.iter().min().copied(),
        max_reaction_us: lat.iter().max().copied(),
        mean_reaction_us: (!lat.is_empty())
            .then(|| lat.iter().sum::<u64>() as f64 / lat.len() as f64),
    }
}

/// Frame times for a steady stream at `fps` over `duration_us`, starting at 0.
pub fn steady_frame_times(fps: f64, duration_us: u64) -> Vec<u64> {
    let mut out = Vec::new();
    if !(fps.is_finite() && fps > 0.0) {
        return out;
    }
    let mut i = 0u64;
    loop {
        let t = (i as f64 * 1e6 / fps).round() as u64;
        if t > duration_us {
            break;
        }
        out.push(t);
        i += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::default_class_names;

    fn names() -> Vec<String> {
        default_class_names()
    }

    fn one(frame_us: u64, class: usize) -> Classified {
        Classified { frame_us, class }
    }

    fn fates(frames: &[Classified], duration: u64) -> Vec<FrameFate> {
        let tl = simulate(frames, 121, &ServoBank::single(), &names(), duration).unwrap();
        reaction_latency(&tl).into_iter().map(|r| r.fate).collect()
    }

    #[test]
    fn pulse_map_endpoints_and_clamp() {
        assert_eq!(pulse_width_us(0.0), 1000.0);
        assert_eq!(pulse_width_us(90.0), 1500.0);
        assert_eq!(pulse_width_us(180.0), 2000.0);
        assert_eq!(pulse_width_us(-30.0), 1000.0);
        assert_eq!(pulse_width_us(400.0), 2000.0);
        assert_eq!(angle_for_pulse(1500.0), 90.0);
        let s = ServoModel::with_table(vec![-10.0, 200.0]);
        assert_eq!(s.target_for(0), Some(0.0));
        assert_eq!(s.target_for(1), Some(180.0));
        assert_eq!(s.target_for(2), None);
    }

    #[test]
    fn bank_size_limits() {
        assert!(ServoBank::new(vec![]).is_err());
        assert!(ServoBank::new(vec![ServoModel::default(); 5]).is_ok());
        assert!(matches!(
            ServoBank::new(vec![ServoModel::default(); 6]),
            Err(Error::Servo(_))
        ));
    }

    #[test]
    fn frame_at_zero_latches_at_first_period_edge() {
        assert_eq!(
            fates(&[one(0, 2)], 10_000),
            vec![FrameFate::Latched {
                edge_us: 3003,
                reaction_us: 3003
            }]
        );
    }

    #[test]
    fn late_frame_misses_the_next_edge() {
        assert_eq!(
            fates(&[one(2900, 2)], 10_000),
            vec![FrameFate::Latched {
                edge_us: 6006,
                reaction_us: 3106
            }]
        );
    }

    #[test]
    fn completion_exactly_on_edge_waits_a_period() {
        assert_eq!(
            fates(&[one(2882, 0)], 10_000),
            vec![FrameFate::Latched {
                edge_us: 6006,
                reaction_us: 3124
            }]
        );
    }

    #[test]
    fn phase_sweep_reaction_bounds() {
        for phase in 0..PWM_PERIOD_US {
            match fates(&[one(phase, 1)], 20_000)[0] {
                FrameFate::Latched { reaction_us, .. } => {
                    assert!((121..=121 + 3003).contains(&reaction_us), "{phase}: {reaction_us}")
                }
                other => panic!("phase {phase}: {other:?}"),
            }
        }
    }

    #[test]
    fn last_writer_wins_within_a_period() {
        let f = fates(&[one(100, 0), one(1000, 2)], 10_000);
        assert_eq!(f[0], FrameFate::Dropped { by_frame: 1 });
        assert!(matches!(f[1], FrameFate::Latched { edge_us: 3003, .. }));
        let tl = simulate(&[one(100, 0), one(1000, 2)], 121, &ServoBank::single(), &names(), 4000)
            .unwrap();
        let upd: Vec<_> = tl
            .events
            .iter()
            .filter(|e| e.kind == EventKind::AngleUpdate)
            .collect();
        assert_eq!(upd[0].class, Some(2));
    }

    #[test]
    fn result_after_last_edge_is_unlatched() {
        assert_eq!(fates(&[one(9000, 0)], 9100), vec![FrameFate::Unlatched]);
    }

    #[test]
    fn no_frames_only_edges() {
        let tl = simulate(&[], 121, &ServoBank::single(), &names(), 30_030).unwrap();
        assert_eq!(tl.events.len(), 11);
        assert!(tl.events.iter().all(|e| e.kind == EventKind::PwmEdge));
    }

    #[test]
    fn slew_limited_updates() {
        let bank = ServoBank::new(vec![ServoModel::default(), ServoModel::with_table(vec![180.0; 3])])
            .unwrap();
        let tl = simulate(&[one(0, 0)], 121, &bank, &names(), 200_000).unwrap();
        let step = ServoModel::default().max_step_deg();
        for id in 0..2 {
            let angles: Vec<f64> = tl
                .events
                .iter()
                .filter(|e| e.kind == EventKind::AngleUpdate && e.servo_id == Some(id))
                .map(|e| e.angle_deg.unwrap())
                .collect();
            let mut prev = 90.0;
            for a in &angles {
                assert!((a - prev).abs() <= step + 1e-9);
                prev = *a;
            }
            assert_eq!(*angles.last().unwrap(), if id == 0 { 0.0 } else { 180.0 });
        }
        assert!(tl
            .events
            .iter()
            .filter(|e| e.kind == EventKind::AngleUpdate)
            .all(|e| e.t_us % PWM_PERIOD_US == 0));
    }

    #[test]
    fn events_sorted_and_csv_stable() {
        let frames: Vec<_> = (0..50).map(|i| one(i * 400, (i % 3) as usize)).collect();
        let a = simulate(&frames, 121, &ServoBank::single(), &names(), 30_000).unwrap();
        let b = simulate(&frames, 121, &ServoBank::single(), &names(), 30_000).unwrap();
        assert!(a.events.windows(2).all(|w| (w[0].t_us, w[0].kind) <= (w[1].t_us, w[1].kind)));
        assert_eq!(a.to_csv(), b.to_csv());
        assert!(a.to_csv().starts_with("t_us,event,servo_id,class,angle\n0,pwm_edge,,,\n"));
    }

    #[test]
    fn unsorted_or_late_frames_rejected() {
        let bank = ServoBank::single();
        assert!(simulate(&[one(10, 0), one(5, 0)], 121, &bank, &names(), 100).is_err());
        assert!(simulate(&[one(500, 0)], 121, &bank, &names(), 100).is_err());
        assert!(simulate(&[one(5, 7)], 121, &bank, &names(), 100).is_err());
    }

    #[test]
    fn max_rate_stream_latches_once_per_edge() {
        let times = steady_frame_times(8264.0, 1_000_000);
        let frames: Vec<_> = times.iter().map(|&t| one(t, 1)).collect();
        let tl = simulate(&frames, 121, &ServoBank::single(), &names(), 1_000_000).unwrap();
        let s = summarize(&reaction_latency(&tl));
        assert_eq!(s.frames, 8265);
        assert_eq!(s.latched, 333);
        assert!(s.dropped + s.unlatched == s.frames - s.latched);
    }
}
