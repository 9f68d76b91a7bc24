//! Unslotted CSMA/CA MAC with acknowledgements, bounded retransmissions and a
//! single-frame transceiver.
//!
//! [`Mac`] is a pure state machine: callers feed it timer and medium events
//! and schedule whatever delay it hands back. A transmission procedure
//! (backoffs, CCA, frame, ack wait, retries) occupies the transceiver from the
//! first backoff until it finishes, as with a radio doing CSMA and retries in
//! hardware. Frames addressed to a busy transceiver are not acknowledged.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::sim_core::{Micros, SimTime};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MacParams {
    pub min_be: u8,
    pub max_be: u8,
    pub max_csma_backoffs: u8,
    pub unit_backoff_us: Micros,
    pub cca_us: Micros,
    pub turnaround_us: Micros,
    pub ack_wait_us: Micros,
    pub max_retransmissions: u8,
    /// Ignore `max_retransmissions` and keep retrying until acknowledged.
    pub retry_until_acked: bool,
    pub queue_capacity: usize,
    pub retry_delay_us: Micros,
    pub bitrate_bps: u64,
    pub phy_overhead: usize,
    pub max_frame_len: usize,
}

impl Default for MacParams {
    fn default() -> Self {
        Self {
            min_be: 3,
            max_be: 5,
            max_csma_backoffs: 4,
            unit_backoff_us: 320,
            cca_us: 128,
            turnaround_us: 192,
            ack_wait_us: 864,
            max_retransmissions: 3,
            retry_until_acked: false,
            queue_capacity: 64,
            retry_delay_us: 5_000,
            bitrate_bps: 250_000,
            phy_overhead: 6,
            max_frame_len: 127,
        }
    }
}

impl MacParams {
    /// Time on air for a MAC frame of `frame_len` bytes, PHY header included.
    pub fn airtime_us(&self, frame_len: usize) -> Micros {
        ((self.phy_overhead + frame_len) as u64 * 8 * 1_000_000).div_ceil(self.bitrate_bps)
    }

    fn backoff<R: Rng>(&self, be: u8, rng: &mut R) -> Micros {
        let slots = rng.gen_range(0..1u64 << be);
        slots * self.unit_backoff_us + self.cca_us
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadioState {
    Idle,
    /// Backing off or assessing the channel.
    Csma,
    Tx { until: SimTime },
    AckWait { until: SimTime },
    Rx { until: SimTime },
}

impl RadioState {
    pub fn is_idle(&self) -> bool {
        matches!(self, RadioState::Idle)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacCounters {
    /// Every CSMA+TX attempt, first ones included.
    pub tx_attempts: u64,
    pub first_attempts: u64,
    pub l2_retransmissions: u64,
    pub csma_failures: u64,
    pub acked: u64,
    pub retrans_exhausted: u64,
    pub queue_drops: u64,
    /// Frames addressed here that arrived while the transceiver was busy.
    pub busy_losses: u64,
    /// Frames addressed here that were destroyed by an overlapping frame.
    pub collisions: u64,
}

#[derive(Debug)]
struct InFlight<F> {
    frame: F,
    len: usize,
    attempt: u8,
    nb: u8,
    be: u8,
}

/// What the caller must do next for this MAC.
#[derive(Debug, PartialEq)]
pub enum MacStep<F> {
    /// Nothing to do.
    Idle,
    /// Call [`Mac::on_cca`] after this delay.
    Cca(Micros),
    /// Put the frame on air after this delay, then call [`Mac::on_tx_start`].
    Transmit(Micros),
    /// Call [`Mac::on_ack_timeout`] after this delay.
    AwaitAck(Micros),
    /// Call [`Mac::kick`] at this time; the transceiver is receiving.
    RetryAt(SimTime),
    /// Transaction over; the transceiver is idle again.
    Done { frame: F, acked: bool },
}

#[derive(Debug)]
pub struct Mac<F> {
    params: MacParams,
    queue: VecDeque<(F, usize)>,
    current: Option<InFlight<F>>,
    state: RadioState,
    retry_armed: bool,
    pub counters: MacCounters,
}

impl<F> Mac<F> {
    pub fn new(params: MacParams) -> Self {
        Self { params, queue: VecDeque::new(), current: None, state: RadioState::Idle, retry_armed: false, counters: MacCounters::default() }
    }

    pub fn params(&self) -> &MacParams {
        &self.params
    }

    pub fn state(&self) -> RadioState {
        self.state
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_busy(&self) -> bool {
        !self.state.is_idle()
    }

    /// Frame currently being transmitted.
    pub fn current(&self) -> Option<(&F, usize)> {
        self.current.as_ref().map(|c| (&c.frame, c.len))
    }

    /// Attempt number of the frame in flight, 0 for the first.
    pub fn current_attempt(&self) -> Option<u8> {
        self.current.as_ref().map(|c| c.attempt)
    }

    pub fn queued(&self) -> impl Iterator<Item = &F> {
        self.queue.iter().map(|(f, _)| f)
    }

    /// Appends a frame; a full queue hands the new frame back.
    pub fn enqueue(&mut self, frame: F, len: usize) -> Result<(), F> {
        assert!(len <= self.params.max_frame_len, "frame of {len} bytes exceeds the MTU");
        if self.queue.len() >= self.params.queue_capacity {
            self.counters.queue_drops += 1;
            return Err(frame);
        }
        self.queue.push_back((frame, len));
        Ok(())
    }

    /// Starts the next queued frame if the transceiver allows it.
    pub fn kick<R: Rng>(&mut self, now: SimTime, rng: &mut R) -> MacStep<F> {
        match self.state {
            RadioState::Idle => {}
            RadioState::Rx { until } => {
                if self.queue.is_empty() || self.retry_armed {
                    return MacStep::Idle;
                }
                self.retry_armed = true;
                return MacStep::RetryAt(until.min(now + self.params.retry_delay_us));
            }
            // the running transaction kicks again when it ends
            _ => return MacStep::Idle,
        }
        debug_assert!(self.current.is_none());
        let Some((frame, len)) = self.queue.pop_front() else {
            return MacStep::Idle;
        };
        self.counters.first_attempts += 1;
        self.counters.tx_attempts += 1;
        self.current = Some(InFlight { frame, len, attempt: 0, nb: 0, be: self.params.min_be });
        self.state = RadioState::Csma;
        MacStep::Cca(self.params.backoff(self.params.min_be, rng))
    }

    /// A pending retry timer fired.
    pub fn on_retry_timer<R: Rng>(&mut self, now: SimTime, rng: &mut R) -> MacStep<F> {
        self.retry_armed = false;
        self.kick(now, rng)
    }

    pub fn on_cca<R: Rng>(&mut self, channel_clear: bool, rng: &mut R) -> MacStep<F> {
        debug_assert_eq!(self.state, RadioState::Csma);
        if channel_clear {
            return MacStep::Transmit(self.params.turnaround_us);
        }
        let p = &self.params;
        let c = self.current.as_mut().expect("CCA without a frame");
        c.nb += 1;
        c.be = (c.be + 1).min(p.max_be);
        if c.nb > p.max_csma_backoffs {
            self.counters.csma_failures += 1;
            return self.attempt_failed(rng);
        }
        MacStep::Cca(p.backoff(c.be, rng))
    }

    /// The frame went on air; returns its length.
    pub fn on_tx_start(&mut self, now: SimTime) -> usize {
        let len = self.current.as_ref().expect("TX without a frame").len;
        self.state = RadioState::Tx { until: now + self.params.airtime_us(len) };
        len
    }

    pub fn on_tx_end(&mut self, now: SimTime, acked: bool) -> MacStep<F> {
        if acked {
            self.counters.acked += 1;
            return self.finish(true);
        }
        let wait = self.params.ack_wait_us;
        self.state = RadioState::AckWait { until: now + wait };
        MacStep::AwaitAck(wait)
    }

    pub fn on_ack_timeout<R: Rng>(&mut self, rng: &mut R) -> MacStep<F> {
        self.attempt_failed(rng)
    }

    fn attempt_failed<R: Rng>(&mut self, rng: &mut R) -> MacStep<F> {
        let max = self.params.max_retransmissions;
        let c = self.current.as_mut().expect("no frame in flight");
        if c.attempt >= max && !self.params.retry_until_acked {
            self.counters.retrans_exhausted += 1;
            return self.finish(false);
        }
        c.attempt = c.attempt.saturating_add(1);
        c.nb = 0;
        c.be = self.params.min_be;
        self.counters.tx_attempts += 1;
        self.counters.l2_retransmissions += 1;
        self.state = RadioState::Csma;
        MacStep::Cca(self.params.backoff(self.params.min_be, rng))
    }

    fn finish(&mut self, acked: bool) -> MacStep<F> {
        let c = self.current.take().expect("no frame in flight");
        self.state = RadioState::Idle;
        MacStep::Done { frame: c.frame, acked }
    }

    /// A frame addressed here started arriving. Returns false (and counts a
    /// busy loss) if the transceiver cannot take it.
    pub fn begin_rx(&mut self, until: SimTime) -> bool {
        if !self.state.is_idle() {
            self.counters.busy_losses += 1;
            return false;
        }
        self.state = RadioState::Rx { until };
        true
    }

    pub fn end_rx(&mut self, collided: bool) {
        debug_assert!(matches!(self.state, RadioState::Rx { .. }));
        if collided {
            self.counters.collisions += 1;
        }
        self.state = RadioState::Idle;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn airtime_of_full_frame() {
        // (6 + 127) bytes * 8 bit / 250 kbit/s
        let oracle = |len: u64| (6 + len) * 8 * 4;
        let p = MacParams::default();
        assert_eq!(p.airtime_us(127), 4256);
        for len in 0..=127 {
            assert_eq!(p.airtime_us(len), oracle(len as u64));
        }
    }

    #[test]
    fn idle_device_starts_csma_then_transmits() {
        let mut r = rng();
        let mut mac: Mac<u32> = Mac::new(MacParams::default());
        mac.enqueue(1, 50).unwrap();
        let MacStep::Cca(d) = mac.kick(SimTime::ZERO, &mut r) else { panic!() };
        assert!(d >= 128 && d <= 7 * 320 + 128);
        assert_eq!(mac.on_cca(true, &mut r), MacStep::Transmit(192));
        mac.on_tx_start(SimTime(1000));
        assert_eq!(mac.on_tx_end(SimTime(2000), true), MacStep::Done { frame: 1, acked: true });
        assert_eq!(mac.counters.l2_retransmissions, 0);
        assert!(mac.state().is_idle());
    }

    #[test]
    fn busy_receiver_retry_within_five_ms() {
        let mut r = rng();
        let mut mac: Mac<u32> = Mac::new(MacParams::default());
        assert!(mac.begin_rx(SimTime(20_000)));
        mac.enqueue(1, 50).unwrap();
        assert_eq!(mac.kick(SimTime(1_000), &mut r), MacStep::RetryAt(SimTime(6_000)));
        // a second kick does not arm a second timer
        assert_eq!(mac.kick(SimTime(1_500), &mut r), MacStep::Idle);
        assert!(!mac.begin_rx(SimTime(30_000)));
        assert_eq!(mac.counters.busy_losses, 1);
        mac.end_rx(false);
        assert!(matches!(mac.on_retry_timer(SimTime(6_000), &mut r), MacStep::Cca(_)));
    }

    #[test]
    fn short_rx_bounds_retry() {
        let mut r = rng();
        let mut mac: Mac<u32> = Mac::new(MacParams::default());
        mac.begin_rx(SimTime(2_000));
        mac.enqueue(1, 50).unwrap();
        assert_eq!(mac.kick(SimTime(1_000), &mut r), MacStep::RetryAt(SimTime(2_000)));
    }

    #[test]
    fn queue_overflow_drops_newest() {
        let mut mac: Mac<u32> = Mac::new(MacParams::default());
        for i in 0..64 {
            mac.enqueue(i, 10).unwrap();
        }
        assert_eq!(mac.enqueue(64, 10), Err(64));
        assert_eq!(mac.counters.queue_drops, 1);
        assert_eq!(mac.queued().last(), Some(&63));
    }

    #[test]
    fn unacked_frame_exhausts_retries() {
        let mut r = rng();
        let mut mac: Mac<u32> = Mac::new(MacParams::default());
        mac.enqueue(7, 127).unwrap();
        let mut step = mac.kick(SimTime::ZERO, &mut r);
        let mut t = SimTime::ZERO;
        loop {
            step = match step {
                MacStep::Cca(_) => mac.on_cca(true, &mut r),
                MacStep::Transmit(_) => {
                    mac.on_tx_start(t);
                    t += 4256;
                    mac.on_tx_end(t, false)
                }
                MacStep::AwaitAck(_) => mac.on_ack_timeout(&mut r),
                MacStep::Done { frame, acked } => {
                    assert_eq!((frame, acked), (7, false));
                    break;
                }
                other => panic!("{other:?}"),
            }
        }
        let c = mac.counters;
        assert_eq!(c.tx_attempts, 4);
        assert_eq!(c.l2_retransmissions, 3);
        assert_eq!(c.l2_retransmissions, c.tx_attempts - c.first_attempts);
        assert_eq!(c.retrans_exhausted, 1);
    }

    #[test]
    fn busy_channel_leads_to_csma_failure_attempt() {
        let mut r = rng();
        let mut mac: Mac<u32> = Mac::new(MacParams::default());
        mac.enqueue(1, 20).unwrap();
        mac.kick(SimTime::ZERO, &mut r);
        for _ in 0..4 {
            assert!(matches!(mac.on_cca(false, &mut r), MacStep::Cca(_)));
        }
        // fifth busy CCA ends the attempt; a retransmission begins
        assert!(matches!(mac.on_cca(false, &mut r), MacStep::Cca(_)));
        assert_eq!(mac.counters.csma_failures, 1);
        assert_eq!(mac.counters.l2_retransmissions, 1);
    }
}
