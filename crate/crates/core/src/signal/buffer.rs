use std::collections::VecDeque;

use super::{ChannelLayout, DspError, EegChannel, SampleFrame, StreamId};

/// Fixed-capacity ring buffer of frames from a single stream.
///
/// Pushing past capacity evicts the oldest frame. Frame timestamps must be
/// non-decreasing and every frame must carry the same channel count.
#[derive(Debug, Clone)]
pub struct StreamBuffer {
    stream: StreamId,
    channels: usize,
    labels: Vec<EegChannel>,
    sample_rate_hz: f64,
    capacity: usize,
    frames: VecDeque<SampleFrame>,
}

impl StreamBuffer {
    pub fn new(stream: StreamId, channels: usize, sample_rate_hz: f64, capacity: usize) -> Self {
        assert!(capacity > 0, "ring buffer capacity must be positive");
        Self {
            stream,
            channels,
            labels: Vec::new(),
            sample_rate_hz,
            capacity,
            frames: VecDeque::with_capacity(capacity.min(1 << 16)),
        }
    }

    /// EEG buffer whose channel order follows `layout`.
    pub fn eeg(layout: &ChannelLayout, capacity: usize) -> Self {
        let mut buf = Self::new(
            StreamId::Eeg,
            layout.eeg_channels().len(),
            layout.eeg_rate_hz(),
            capacity,
        );
        buf.labels = layout.eeg_channels().to_vec();
        buf
    }

    pub fn push(&mut self, frame: SampleFrame) -> Result<(), DspError> {
        if frame.stream != self.stream {
            return Err(DspError::WrongStream {
                expected: self.stream,
                got: frame.stream,
            });
        }
        if frame.values.len() != self.channels {
            return Err(DspError::ChannelCountMismatch {
                stream: self.stream,
                expected: self.channels,
                got: frame.values.len(),
            });
        }
        if let Some(last) = self.frames.back() {
            if frame.t_ms < last.t_ms {
                return Err(DspError::NonMonotonicTime {
                    stream: self.stream,
                    t_ms: frame.t_ms,
                    prev_ms: last.t_ms,
                });
            }
        }
        if self.frames.len() == self.capacity {
            self.frames.pop_front();
        }
        self.frames.push_back(frame);
        Ok(())
    }

    /// Appends a contiguous block of per-channel samples starting at `t0_ms`,
    /// stamping each frame from the nominal sample rate.
    pub fn extend_from_channels(&mut self, t0_ms: u64, channels: &[Vec<f64>]) -> Result<(), DspError> {
        let n = channels.first().map_or(0, Vec::len);
        for i in 0..n {
            let t = t0_ms + (i as f64 * 1000.0 / self.sample_rate_hz).floor() as u64;
            let values = channels.iter().map(|c| c[i]).collect();
            self.push(SampleFrame::new(t, self.stream, values))?;
        }
        Ok(())
    }

    pub fn stream(&self) -> StreamId {
        self.stream
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn labels(&self) -> &[EegChannel] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> impl Iterator<Item = &SampleFrame> {
        self.frames.iter()
    }

    pub fn start_ms(&self) -> Option<u64> {
        self.frames.front().map(|f| f.t_ms)
    }

    /// Time covered by the held samples: `floor(n * 1000 / fs)`.
    pub fn span_ms(&self) -> u64 {
        (self.frames.len() as f64 * 1000.0 / self.sample_rate_hz).floor() as u64
    }

    fn channel_slice(&self, ch: usize, start: usize, count: usize) -> Vec<f64> {
        self.frames
            .range(start..start + count)
            .map(|f| f.values[ch])
            .collect()
    }
}

/// A contiguous multichannel slice of a stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub stream: StreamId,
    pub start_ms: u64,
    pub len_ms: u64,
    pub sample_rate_hz: f64,
    /// Electrode labels, one per channel. Empty for non-EEG streams.
    pub labels: Vec<EegChannel>,
    pub channels: Vec<Vec<f64>>,
}

impl Window {
    pub fn end_ms(&self) -> u64 {
        self.start_ms + self.len_ms
    }

    pub fn samples_per_channel(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn channel(&self, name: EegChannel) -> Option<&[f64]> {
        self.labels
            .iter()
            .position(|&l| l == name)
            .map(|i| self.channels[i].as_slice())
    }

    /// `[start, start + len)` intersects `[lo, hi)`.
    pub fn overlaps(&self, lo_ms: u64, hi_ms: u64) -> bool {
        self.start_ms < hi_ms && lo_ms < self.end_ms()
    }
}

/// Expected number of samples in a window of `len_ms`.
pub fn window_sample_count(len_ms: u64, sample_rate_hz: f64) -> usize {
    (len_ms as f64 / 1000.0 * sample_rate_hz).round() as usize
}

/// Cuts `buffer` into windows of `win_ms` starting every `step_ms`.
///
/// Starts are `0, step, 2*step, ...` relative to the first frame, keeping only
/// those with `start + win <= span`.
pub fn segment_windows(buffer: &StreamBuffer, win_ms: u64, step_ms: u64) -> Result<Vec<Window>, DspError> {
    if step_ms == 0 {
        return Err(DspError::InvalidStep);
    }
    let span_ms = buffer.span_ms();
    if span_ms < win_ms || win_ms == 0 {
        return Err(DspError::BufferTooShort { span_ms, win_ms });
    }
    let fs = buffer.sample_rate_hz();
    let first_t = buffer.start_ms().unwrap_or(0);
    let count = window_sample_count(win_ms, fs);
    let n_windows = ((span_ms - win_ms) / step_ms + 1) as usize;

    let mut windows = Vec::with_capacity(n_windows);
    for k in 0..n_windows {
        let offset = k as u64 * step_ms;
        let i0 = (offset as f64 * fs / 1000.0).floor() as usize;
        let channels = (0..buffer.channels)
            .map(|ch| buffer.channel_slice(ch, i0, count))
            .collect();
        windows.push(Window {
            stream: buffer.stream(),
            start_ms: first_t + offset,
            len_ms: win_ms,
            sample_rate_hz: fs,
            labels: buffer.labels.clone(),
            channels,
        });
    }
    Ok(windows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eeg_buffer(n: usize) -> StreamBuffer {
        let layout = ChannelLayout::standard();
        let mut buf = StreamBuffer::eeg(&layout, 1 << 20);
        let chans: Vec<Vec<f64>> = (0..4).map(|c| (0..n).map(|i| (i + c) as f64).collect()).collect();
        buf.extend_from_channels(0, &chans).unwrap();
        buf
    }

    #[test]
    fn two_seconds_gives_seven_windows() {
        let buf = eeg_buffer(512);
        assert_eq!(buf.span_ms(), 2000);
        let w = segment_windows(&buf, 500, 250).unwrap();
        let starts: Vec<u64> = w.iter().map(|w| w.start_ms).collect();
        assert_eq!(starts, vec![0, 250, 500, 750, 1000, 1250, 1500]);
        assert!(w.iter().all(|w| w.samples_per_channel() == 128));
        // window at 250 ms begins with sample 64
        assert_eq!(w[1].channel(EegChannel::Fp1).unwrap()[0], 64.0);
    }

    #[test]
    fn exact_length_buffer_gives_one_window() {
        let buf = eeg_buffer(128);
        assert_eq!(segment_windows(&buf, 500, 250).unwrap().len(), 1);
    }

    #[test]
    fn short_buffer_is_rejected() {
        let buf = eeg_buffer(127);
        assert!(matches!(
            segment_windows(&buf, 500, 250),
            Err(DspError::BufferTooShort { win_ms: 500, .. })
        ));
    }

    #[test]
    fn zero_step_is_rejected() {
        assert_eq!(segment_windows(&eeg_buffer(512), 500, 0), Err(DspError::InvalidStep));
    }

    #[test]
    fn ring_evicts_oldest() {
        let mut buf = StreamBuffer::new(StreamId::Resp, 1, 10.0, 3);
        for t in 0..5u64 {
            buf.push(SampleFrame::new(t * 100, StreamId::Resp, vec![t as f64])).unwrap();
        }
        assert_eq!(buf.len(), 3);
        assert_eq!(buf.start_ms(), Some(200));
    }

    #[test]
    fn push_enforces_invariants() {
        let mut buf = StreamBuffer::new(StreamId::Ibi, 1, 1.0, 8);
        buf.push(SampleFrame::new(10, StreamId::Ibi, vec![800.0])).unwrap();
        assert!(matches!(
            buf.push(SampleFrame::new(5, StreamId::Ibi, vec![800.0])),
            Err(DspError::NonMonotonicTime { .. })
        ));
        assert!(matches!(
            buf.push(SampleFrame::new(20, StreamId::Ibi, vec![800.0, 1.0])),
            Err(DspError::ChannelCountMismatch { .. })
        ));
        assert!(matches!(
            buf.push(SampleFrame::new(20, StreamId::Eeg, vec![1.0])),
            Err(DspError::WrongStream { .. })
        ));
        // equal timestamps are allowed
        buf.push(SampleFrame::new(10, StreamId::Ibi, vec![810.0])).unwrap();
    }
}
