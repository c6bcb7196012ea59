//! Signal synthesis: pink background plus band-limited resonators for EEG,
//! respiration-coupled heartbeats, head posture and skin conductance.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, StandardNormal};

use super::{GroundTruth, MentalState, SimError, Strategy};
use crate::signal::{ChannelLayout, DspError, EegChannel, SampleFrame, StreamBuffer, StreamId};
use crate::somatic::{extract_somatic, SlowInput, SomaticFeatures, SLOW_STEP_MS, SLOW_WINDOW_MIN_MS, SLOW_WINDOW_MS};
use crate::somatic::LF_HF_BUFFER_MS;

pub const EEG_RATE_HZ: f64 = 256.0;
pub const RESP_RATE_HZ: f64 = 25.0;
pub const IMU_RATE_HZ: f64 = 50.0;
pub const GSR_RATE_HZ: f64 = 4.0;

/// Background 1/f amplitude, microvolts.
const PINK_UV: f64 = 6.0;
/// EMG burst amplitude: ten times the background, i.e. +20 dB.
const JAW_BURST_UV: f64 = 10.0 * PINK_UV;
const JAW_MEAN_GAP_S: f64 = 1.0;
const MAYER_HZ: f64 = 0.1;
const PACED_RESP_HZ: f64 = 0.1;

/// Per-state signal statistics after strategy modifiers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Emission {
    pub delta_uv: f64,
    pub theta_uv: f64,
    /// Share of midline theta driven by the common Fz/Cz source.
    pub theta_coherence: f64,
    pub alpha_uv: f64,
    pub beta_uv: f64,
    pub jaw_bursts: bool,
    pub ibi_mean_ms: f64,
    /// Respiratory sinus arrhythmia amplitude.
    pub rsa_ms: f64,
    /// 0.1 Hz baroreflex oscillation amplitude.
    pub mayer_ms: f64,
    pub resp_hz: f64,
    pub resp_depth: f64,
    /// Relative sd of breath-to-breath frequency.
    pub resp_jitter: f64,
    pub pitch_deg: f64,
    pub jitter_g: f64,
    pub gsr_us: f64,
}

impl Emission {
    pub fn of(state: MentalState, strategy: Strategy) -> Self {
        let mut e = match state {
            MentalState::Settled => Emission {
                delta_uv: 3.0,
                theta_uv: 12.0,
                theta_coherence: 0.98,
                alpha_uv: 7.0,
                beta_uv: 2.0,
                jaw_bursts: false,
                ibi_mean_ms: 950.0,
                rsa_ms: 30.0,
                mayer_ms: 22.0,
                resp_hz: 0.2,
                resp_depth: 1.0,
                resp_jitter: 0.05,
                pitch_deg: 3.0,
                jitter_g: 0.01,
                gsr_us: 4.0,
            },
            MentalState::Wandering => Emission {
                delta_uv: 3.0,
                theta_uv: 4.0,
                theta_coherence: 0.0,
                alpha_uv: 4.0,
                beta_uv: 6.0,
                jaw_bursts: false,
                ibi_mean_ms: 840.0,
                rsa_ms: 18.0,
                mayer_ms: 28.0,
                resp_hz: 0.27,
                resp_depth: 0.7,
                resp_jitter: 0.15,
                pitch_deg: 3.0,
                jitter_g: 0.03,
                gsr_us: 5.0,
            },
            MentalState::Drowsy => Emission {
                delta_uv: 10.0,
                theta_uv: 14.0,
                theta_coherence: 0.6,
                alpha_uv: 10.0,
                beta_uv: 1.0,
                jaw_bursts: false,
                ibi_mean_ms: 1000.0,
                rsa_ms: 30.0,
                mayer_ms: 18.0,
                resp_hz: 0.17,
                resp_depth: 1.2,
                resp_jitter: 0.1,
                pitch_deg: -12.0,
                jitter_g: 0.008,
                gsr_us: 3.5,
            },
            MentalState::Suppressing => Emission {
                delta_uv: 3.0,
                theta_uv: 5.0,
                theta_coherence: 0.5,
                alpha_uv: 6.0,
                beta_uv: 2.5,
                jaw_bursts: false,
                ibi_mean_ms: 900.0,
                rsa_ms: 25.0,
                mayer_ms: 8.0,
                resp_hz: 0.22,
                resp_depth: 0.6,
                resp_jitter: 0.05,
                pitch_deg: 3.0,
                jitter_g: 0.005,
                gsr_us: 2.0,
            },
        };
        match strategy {
            Strategy::JawArtefact => e.jaw_bursts = true,
            Strategy::PostureTrick => {
                e.pitch_deg = 0.0;
                e.jitter_g = 0.002;
            }
            Strategy::PacedBreathing => {
                e.resp_hz = PACED_RESP_HZ;
                e.resp_jitter = 0.02;
                e.resp_depth = 1.3;
                e.rsa_ms = 60.0;
            }
            Strategy::Suppression => {
                e.mayer_ms *= 0.3;
                e.gsr_us *= 0.6;
            }
            Strategy::GenuineRegulation | Strategy::Drowsiness => {}
        }
        e
    }
}

/// Raw streams of one simulated recording. Channel-major EEG in layout order.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalBundle {
    pub layout: ChannelLayout,
    pub duration_ms: u64,
    pub eeg: Vec<Vec<f64>>,
    /// `(beat time, interval)` in ms.
    pub ibis: Vec<(u64, f64)>,
    pub resp: Vec<f64>,
    /// `[ax_forward, ay_lateral, az_vertical, gx, gy, gz]` per frame.
    pub imu: Vec<Vec<f64>>,
    pub gsr: Vec<f64>,
}

fn index_at(t_ms: u64, fs: f64) -> usize {
    (t_ms as f64 * fs / 1000.0).round() as usize
}

fn stamp(i: usize, fs: f64) -> u64 {
    (i as f64 * 1000.0 / fs).floor() as u64
}

impl SignalBundle {
    pub fn eeg_buffer(&self) -> Result<StreamBuffer, DspError> {
        let n = self.eeg.first().map_or(0, Vec::len).max(1);
        let mut buf = StreamBuffer::eeg(&self.layout, n);
        buf.extend_from_channels(0, &self.eeg)?;
        Ok(buf)
    }

    /// Every sample of every stream as frames, ordered by time then stream.
    pub fn frames(&self) -> Vec<SampleFrame> {
        let mut out = Vec::new();
        let n = self.eeg.first().map_or(0, Vec::len);
        for i in 0..n {
            let values = self.eeg.iter().map(|c| c[i]).collect();
            out.push(SampleFrame::new(stamp(i, EEG_RATE_HZ), StreamId::Eeg, values));
        }
        out.extend(self.ibis.iter().map(|&(t, v)| SampleFrame::new(t, StreamId::Ibi, vec![v])));
        out.extend(
            self.resp
                .iter()
                .enumerate()
                .map(|(i, &v)| SampleFrame::new(stamp(i, RESP_RATE_HZ), StreamId::Resp, vec![v])),
        );
        out.extend(
            self.imu
                .iter()
                .enumerate()
                .map(|(i, v)| SampleFrame::new(stamp(i, IMU_RATE_HZ), StreamId::Imu, v.clone())),
        );
        out.extend(
            self.gsr
                .iter()
                .enumerate()
                .map(|(i, &v)| SampleFrame::new(stamp(i, GSR_RATE_HZ), StreamId::Gsr, vec![v])),
        );
        out.sort_by_key(|f| (f.t_ms, StreamId::ALL.iter().position(|&s| s == f.stream)));
        out
    }

    /// Slow-path features on 30 s windows stepped at 5 s (shorter recordings
    /// use a single window of their full length when it is at least 10 s).
    pub fn somatic_features(&self) -> Result<Vec<SomaticFeatures>, SimError> {
        let win = SLOW_WINDOW_MS.min(self.duration_ms);
        if win < SLOW_WINDOW_MIN_MS {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        let mut t = win;
        while t <= self.duration_ms {
            let lo = t - win;
            let ibis: Vec<(u64, f64)> = self.ibis.iter().copied().filter(|b| (lo..t).contains(&b.0)).collect();
            let hist_lo = t.saturating_sub(LF_HF_BUFFER_MS);
            let first = self.ibis.iter().rposition(|b| b.0 <= hist_lo).map_or(0, |i| i.saturating_sub(1));
            let history: Vec<(u64, f64)> = self.ibis[first..].iter().copied().take_while(|b| b.0 < t).collect();
            let r = index_at(lo, RESP_RATE_HZ)..index_at(t, RESP_RATE_HZ).min(self.resp.len());
            let m = index_at(lo, IMU_RATE_HZ)..index_at(t, IMU_RATE_HZ).min(self.imu.len());
            out.push(extract_somatic(SlowInput {
                t_ms: t,
                ibis: &ibis,
                ibi_history: &history,
                resp: &self.resp[r],
                resp_rate_hz: RESP_RATE_HZ,
                imu: &self.imu[m],
                imu_rate_hz: IMU_RATE_HZ,
            })?);
            t += SLOW_STEP_MS;
        }
        Ok(out)
    }
}

/// Two-pole resonator normalised to unit output variance.
#[derive(Debug, Clone)]
struct Resonator {
    a1: f64,
    a2: f64,
    gain: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn new(center_hz: f64, bandwidth_hz: f64, fs: f64) -> Self {
        let r = (-PI * bandwidth_hz / fs).exp();
        let w = 2.0 * PI * center_hz / fs;
        let a1 = 2.0 * r * w.cos();
        let a2 = -r * r;
        let var = (1.0 - a2) / ((1.0 + a2) * ((1.0 - a2).powi(2) - a1 * a1));
        Self {
            a1,
            a2,
            gain: 1.0 / var.sqrt(),
            y1: 0.0,
            y2: 0.0,
        }
    }

    fn next(&mut self, e: f64) -> f64 {
        let y = self.a1 * self.y1 + self.a2 * self.y2 + e;
        self.y2 = self.y1;
        self.y1 = y;
        y * self.gain
    }
}

/// Kellet's pink-noise filter.
#[derive(Debug, Clone, Default)]
struct Pink {
    b: [f64; 7],
}

impl Pink {
    fn next(&mut self, w: f64) -> f64 {
        let b = &mut self.b;
        b[0] = 0.99886 * b[0] + w * 0.0555179;
        b[1] = 0.99332 * b[1] + w * 0.0750759;
        b[2] = 0.96900 * b[2] + w * 0.1538520;
        b[3] = 0.86650 * b[3] + w * 0.3104856;
        b[4] = 0.55000 * b[4] + w * 0.5329522;
        b[5] = -0.7616 * b[5] - w * 0.0168980;
        let out = b.iter().sum::<f64>() + w * 0.5362;
        b[6] = w * 0.115926;
        out * 0.11
    }
}

struct Channel {
    pink: Pink,
    delta: Resonator,
    theta: Resonator,
    alpha: Resonator,
    beta: Resonator,
}

impl Channel {
    fn new(fs: f64) -> Self {
        Self {
            pink: Pink::default(),
            delta: Resonator::new(2.0, 2.0, fs),
            theta: Resonator::new(6.0, 3.0, fs),
            alpha: Resonator::new(10.0, 2.0, fs),
            beta: Resonator::new(21.0, 8.0, fs),
        }
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gauss<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Per-sample emission lookup along a timeline.
fn emissions(truth: &GroundTruth, strategy: Strategy, fs: f64, n: usize) -> Vec<Emission> {
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    let segs = truth.segments();
    for i in 0..n {
        let t = stamp(i, fs);
        while seg + 1 < segs.len() && t >= segs[seg].end_ms {
            seg += 1;
        }
        out.push(Emission::of(segs[seg].state, strategy));
    }
    out
}

fn synth_eeg(em: &[Emission], layout: &ChannelLayout, seed: u64) -> Vec<Vec<f64>> {
    let fs = layout.eeg_rate_hz();
    let mut rng = rng_for(seed, 1);
    let labels = layout.eeg_channels();
    let mut chans: Vec<Channel> = labels.iter().map(|_| Channel::new(fs)).collect();
    let mut common = Resonator::new(6.0, 3.0, fs);
    let mut lagged = [0.0; 3];
    let mut out = vec![Vec::with_capacity(em.len()); labels.len()];
    let gap = Exp::new(1.0 / JAW_MEAN_GAP_S).expect("positive rate");
    let mut burst_left = 0usize;
    let mut quiet_left = (gap.sample(&mut rng) * fs) as usize;

    for e in em {
        let s = common.next(gauss(&mut rng));
        lagged.rotate_right(1);
        lagged[0] = s;
        let bursting = if e.jaw_bursts {
            if burst_left > 0 {
                burst_left -= 1;
                true
            } else if quiet_left > 0 {
                quiet_left -= 1;
                false
            } else {
                burst_left = (rng.random_range(0.3..1.0) * fs) as usize;
                quiet_left = (gap.sample(&mut rng) * fs) as usize;
                true
            }
        } else {
            false
        };
        let c = e.theta_coherence;
        let own = (1.0 - c * c).sqrt();
        for (k, ch) in chans.iter_mut().enumerate() {
            let label = labels[k];
            let pink = PINK_UV * ch.pink.next(gauss(&mut rng));
            let delta = e.delta_uv * ch.delta.next(gauss(&mut rng));
            let theta_own = ch.theta.next(gauss(&mut rng));
            let alpha = e.alpha_uv * ch.alpha.next(gauss(&mut rng));
            let beta = e.beta_uv * ch.beta.next(gauss(&mut rng));
            let (theta, alpha_gain) = match label {
                EegChannel::Fz => (e.theta_uv * (c * s + own * theta_own), 1.0),
                EegChannel::Cz => (e.theta_uv * (c * lagged[2] + own * theta_own), 0.8),
                EegChannel::Fp1 => (0.5 * e.theta_uv * (c * s + own * theta_own), 1.2),
                EegChannel::Fp2 => (0.5 * e.theta_uv * (c * s + own * theta_own), 1.3),
                _ => (0.3 * e.theta_uv * theta_own, 1.0),
            };
            let emg = if bursting { JAW_BURST_UV * gauss(&mut rng) } else { 0.0 };
            out[k].push(pink + delta + theta + alpha_gain * alpha + beta + emg);
        }
    }
    out
}

/// Respiration trace and its phase at each sample.
fn synth_resp(em: &[Emission], seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = rng_for(seed, 2);
    let mut phase = rng.random_range(0.0..2.0 * PI);
    let mut freq = em.first().map_or(0.2, |e| e.resp_hz);
    let mut trace = Vec::with_capacity(em.len());
    let mut phases = Vec::with_capacity(em.len());
    for e in em {
        phase += 2.0 * PI * freq / RESP_RATE_HZ;
        if phase >= 2.0 * PI {
            phase -= 2.0 * PI;
            freq = e.resp_hz * (1.0 + e.resp_jitter * gauss(&mut rng)).clamp(0.5, 1.5);
        }
        phases.push(phase);
        trace.push(e.resp_depth * phase.sin() + 0.02 * gauss(&mut rng));
    }
    (trace, phases)
}

fn synth_ibis(truth: &GroundTruth, strategy: Strategy, resp_phase: &[f64], duration_ms: u64, seed: u64) -> Vec<(u64, f64)> {
    let mut rng = rng_for(seed, 3);
    let noise = Normal::new(0.0, 6.0).expect("positive sd");
    let mayer_phase = rng.random_range(0.0..2.0 * PI);
    let mut out = Vec::new();
    let mut t: f64 = rng.random_range(0.0..800.0);
    loop {
        let tm = t.round() as u64;
        let state = truth.state_at(tm).unwrap_or(MentalState::Settled);
        let e = Emission::of(state, strategy);
        let rp = resp_phase
            .get(index_at(tm, RESP_RATE_HZ))
            .or(resp_phase.last())
            .copied()
            .unwrap_or(0.0);
        let ibi = (e.ibi_mean_ms - e.rsa_ms * rp.sin()
            + e.mayer_ms * (2.0 * PI * MAYER_HZ * t / 1000.0 + mayer_phase).sin()
            + noise.sample(&mut rng))
        .clamp(400.0, 1600.0);
        t += ibi;
        if t >= duration_ms as f64 {
            break;
        }
        out.push((t.round() as u64, ibi));
    }
    out
}

fn synth_imu(em: &[Emission], seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_for(seed, 4);
    let alpha = (-1.0 / (5.0 * IMU_RATE_HZ)).exp();
    let drive = (1.0 - alpha * alpha).sqrt();
    let mut drift = 0.0;
    em.iter()
        .map(|e| {
            drift = alpha * drift + drive * gauss(&mut rng);
            let p = (e.pitch_deg + drift).to_radians();
            let j = e.jitter_g;
            vec![
                p.sin() + j * gauss(&mut rng),
                j * gauss(&mut rng),
                p.cos() + j * gauss(&mut rng),
                50.0 * j * gauss(&mut rng),
                50.0 * j * gauss(&mut rng),
                50.0 * j * gauss(&mut rng),
            ]
        })
        .collect()
}

fn synth_gsr(em: &[Emission], seed: u64) -> Vec<f64> {
    let mut rng = rng_for(seed, 5);
    let mut level = em.first().map_or(4.0, |e| e.gsr_us);
    em.iter()
        .map(|e| {
            level += 0.1 * (e.gsr_us - level) + 0.02 * gauss(&mut rng);
            level.max(0.0)
        })
        .collect()
}

/// Signals for an arbitrary hidden timeline.
pub fn generate_timeline(truth: &GroundTruth, strategy: Strategy, seed: u64) -> Result<SignalBundle, SimError> {
    let duration_ms = truth.duration_ms();
    if duration_ms < 1000 {
        return Err(SimError::DurationTooShort { duration_ms });
    }
    let layout = ChannelLayout::standard();
    let count = |fs: f64| index_at(duration_ms, fs);
    let eeg_em = emissions(truth, strategy, EEG_RATE_HZ, count(EEG_RATE_HZ));
    let resp_em = emissions(truth, strategy, RESP_RATE_HZ, count(RESP_RATE_HZ));
    let imu_em = emissions(truth, strategy, IMU_RATE_HZ, count(IMU_RATE_HZ));
    let gsr_em = emissions(truth, strategy, GSR_RATE_HZ, count(GSR_RATE_HZ));
    let eeg = synth_eeg(&eeg_em, &layout, seed);
    let (resp, resp_phase) = synth_resp(&resp_em, seed);
    let ibis = synth_ibis(truth, strategy, &resp_phase, duration_ms, seed);
    Ok(SignalBundle {
        layout,
        duration_ms,
        eeg,
        ibis,
        resp,
        imu: synth_imu(&imu_em, seed),
        gsr: synth_gsr(&gsr_em, seed),
    })
}

/// Signals for a single held state.
pub fn generate_signals(
    state: MentalState,
    strategy: Strategy,
    duration_ms: u64,
    seed: u64,
) -> Result<SignalBundle, SimError> {
    generate_timeline(&GroundTruth::constant(state, duration_ms), strategy, seed)
}
