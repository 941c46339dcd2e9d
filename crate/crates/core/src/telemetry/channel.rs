//! Star-network channel: periodic jittered transmissions, log-distance
//! reception probability, pure-ALOHA collisions, several ground stations.

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::codec::PACKET_LEN;
use crate::rng::{self, Domain};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelModel {
    pub seed: u64,
    pub airtime_ms: f64,
    /// Uniform transmit gap, s.
    pub period_range: [f64; 2],
    /// Reception probability at `d0`.
    pub p0: f64,
    pub d0: f64,
    pub path_exponent: f64,
    pub max_range: f64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self {
            seed: 0,
            airtime_ms: 370.0,
            period_range: [3.0, 4.0],
            p0: 0.95,
            d0: 1000.0,
            path_exponent: 0.25,
            max_range: 20_000.0,
        }
    }
}

impl ChannelModel {
    /// Lossless within range.
    pub fn perfect() -> Self {
        Self { p0: 1.0, path_exponent: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.p0) {
            return Err("channel.p0 must lie in [0, 1]".into());
        }
        if !(self.d0 > 0.0) {
            return Err("channel.d0 must be > 0".into());
        }
        if !(self.path_exponent >= 0.0) {
            return Err("channel.path_exponent must be >= 0".into());
        }
        if !(self.airtime_ms >= 0.0) {
            return Err("channel.airtime_ms must be >= 0".into());
        }
        let [lo, hi] = self.period_range;
        if !(lo > 0.0 && hi >= lo) {
            return Err("channel.period_range must satisfy 0 < lo <= hi".into());
        }
        Ok(())
    }

    pub fn airtime(&self) -> f64 {
        self.airtime_ms / 1e3
    }

    /// `p0 · (d/d0)^(−γ)` clamped to [0, 1]; zero beyond `max_range`.
    pub fn reception_probability(&self, distance: f64) -> f64 {
        if distance > self.max_range {
            return 0.0;
        }
        if distance <= 0.0 {
            return if self.p0 > 0.0 { 1.0 } else { 0.0 };
        }
        (self.p0 * (distance / self.d0).powf(-self.path_exponent)).clamp(0.0, 1.0)
    }
}

/// Transmit instants in `[t0, t0 + horizon]`, gaps i.i.d. uniform on
/// `period_range`. The first packet leaves one gap after `t0`.
pub fn transmit_schedule<R: Rng>(t0: f64, horizon: f64, period_range: [f64; 2], rng: &mut R) -> Vec<f64> {
    let mut out = Vec::new();
    if !(horizon > 0.0) {
        return out;
    }
    let [lo, hi] = period_range;
    let end = t0 + horizon;
    let mut t = t0;
    loop {
        let gap = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        t += gap;
        if t > end + 1e-9 {
            break;
        }
        out.push(t);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Received,
    LostRange,
    LostCollision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub id: u32,
    /// ENU metres relative to the launch anchor.
    pub position: [f64; 3],
}

/// One transmission as seen from space.
#[derive(Debug, Clone, PartialEq)]
pub struct TxEvent {
    pub sonde_id: u8,
    pub seq: u16,
    pub time: f64,
    /// ENU metres.
    pub position: Vector3<f64>,
    pub bytes: [u8; PACKET_LEN],
}

impl TxEvent {
    fn distance_to(&self, station: &Station) -> f64 {
        (self.position - Vector3::from(station.position)).norm()
    }

    fn arrival(&self, station: &Station) -> f64 {
        self.time + self.distance_to(station) / SPEED_OF_LIGHT
    }
}

mod hex64 {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8; 64], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 64], D::Error> {
        let s = String::deserialize(d)?;
        let v = hex::decode(&s).map_err(D::Error::custom)?;
        v.try_into().map_err(|v: Vec<u8>| D::Error::custom(format!("packet has {} bytes, expected 64", v.len())))
    }
}

/// One line of a station's reception log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceptionRecord {
    pub station_id: u32,
    pub sonde_id: u8,
    pub seq: u16,
    pub tx_time: f64,
    /// End of reception at the station.
    pub rx_time: f64,
    #[serde(with = "hex64")]
    pub packet: [u8; PACKET_LEN],
    pub outcome: Outcome,
}

/// Fate of `tx` at `station`. `concurrent` holds the other transmissions
/// whose airtime might overlap; its order is irrelevant. A packet is
/// destroyed by any overlapping in-range transmission (no capture).
pub fn propagate<R: Rng>(
    tx: &TxEvent,
    station: &Station,
    model: &ChannelModel,
    concurrent: &[TxEvent],
    rng: &mut R,
) -> ReceptionRecord {
    let distance = tx.distance_to(station);
    let arrival = tx.arrival(station);
    let airtime = model.airtime();
    let collided = concurrent.iter().any(|other| {
        !(other.sonde_id == tx.sonde_id && other.seq == tx.seq && other.time == tx.time)
            && other.distance_to(station) <= model.max_range
            && (other.arrival(station) - arrival).abs() < airtime
    });
    let outcome = if distance > model.max_range {
        Outcome::LostRange
    } else if collided {
        Outcome::LostCollision
    } else if rng.gen::<f64>() < model.reception_probability(distance) {
        Outcome::Received
    } else {
        Outcome::LostRange
    };
    ReceptionRecord {
        station_id: station.id,
        sonde_id: tx.sonde_id,
        seq: tx.seq,
        tx_time: tx.time,
        rx_time: arrival + airtime,
        packet: tx.bytes,
        outcome,
    }
}

/// Per-packet stream, independent of evaluation order.
pub fn packet_rng(model: &ChannelModel, station: &Station, tx: &TxEvent) -> rand_chacha::ChaCha8Rng {
    rng::keyed(
        model.seed,
        Domain::Channel,
        &[u64::from(station.id), u64::from(tx.sonde_id), u64::from(tx.seq), tx.time.to_bits()],
    )
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StationSummary {
    pub station_id: u32,
    pub sent: usize,
    pub received: usize,
    pub lost_range: usize,
    pub lost_collision: usize,
}

/// Evaluate every transmission at one station. Records come back in the
/// order of `events`.
pub fn receive_at(events: &[TxEvent], station: &Station, model: &ChannelModel) -> Vec<ReceptionRecord> {
    let mut order: Vec<usize> = (0..events.len()).collect();
    let arrivals: Vec<f64> = events.iter().map(|e| e.arrival(station)).collect();
    order.sort_by(|&a, &b| arrivals[a].total_cmp(&arrivals[b]).then(a.cmp(&b)));
    let airtime = model.airtime();

    let mut records: Vec<(usize, ReceptionRecord)> = Vec::with_capacity(events.len());
    for (pos, &i) in order.iter().enumerate() {
        let mut concurrent = Vec::new();
        for &j in order[..pos].iter().rev() {
            if arrivals[i] - arrivals[j] >= airtime {
                break;
            }
            concurrent.push(events[j].clone());
        }
        for &j in &order[pos + 1..] {
            if arrivals[j] - arrivals[i] >= airtime {
                break;
            }
            concurrent.push(events[j].clone());
        }
        let mut rng = packet_rng(model, station, &events[i]);
        records.push((i, propagate(&events[i], station, model, &concurrent, &mut rng)));
    }
    records.sort_by_key(|(i, _)| *i);
    records.into_iter().map(|(_, r)| r).collect()
}

pub fn summarize(station_id: u32, records: &[ReceptionRecord]) -> StationSummary {
    let mut s = StationSummary { station_id, sent: records.len(), ..Default::default() };
    for r in records {
        match r.outcome {
            Outcome::Received => s.received += 1,
            Outcome::LostRange => s.lost_range += 1,
            Outcome::LostCollision => s.lost_collision += 1,
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tx(sonde_id: u8, seq: u16, time: f64, east: f64) -> TxEvent {
        TxEvent { sonde_id, seq, time, position: Vector3::new(east, 0.0, 0.0), bytes: [sonde_id; PACKET_LEN] }
    }

    fn station() -> Station {
        Station { id: 1, position: [0.0; 3] }
    }

    #[test]
    fn schedule_counts_and_determinism() {
        for seed in 0..50 {
            let mut r = rng::stream(seed, Domain::Schedule, 0);
            let n = transmit_schedule(0.0, 60.0, [3.0, 4.0], &mut r).len();
            assert!((15..=20).contains(&n), "{n}");
        }
        let a = transmit_schedule(5.0, 100.0, [3.0, 4.0], &mut rng::stream(1, Domain::Schedule, 2));
        let b = transmit_schedule(5.0, 100.0, [3.0, 4.0], &mut rng::stream(1, Domain::Schedule, 2));
        assert_eq!(a, b);
        for w in a.windows(2) {
            let gap = w[1] - w[0];
            assert!((3.0..=4.0).contains(&gap));
        }
    }

    #[test]
    fn zero_width_jitter_is_periodic() {
        let t = transmit_schedule(0.0, 35.0, [3.5, 3.5], &mut rng::stream(0, Domain::Schedule, 0));
        assert_eq!(t.len(), 10);
        for (k, v) in t.iter().enumerate() {
            assert!((v - 3.5 * (k + 1) as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn beyond_range_is_always_lost() {
        let model = ChannelModel::perfect();
        let far = tx(1, 0, 0.0, 25_000.0);
        for k in 0..100 {
            let mut r = rng::stream(k, Domain::Channel, 0);
            assert_eq!(propagate(&far, &station(), &model, &[], &mut r).outcome, Outcome::LostRange);
        }
    }

    #[test]
    fn overlapping_airtime_collides_both() {
        let model = ChannelModel::perfect();
        let a = tx(1, 0, 10.0, 500.0);
        let b = tx(2, 0, 10.2, 800.0);
        let mut r = rng::stream(0, Domain::Channel, 0);
        assert_eq!(propagate(&a, &station(), &model, std::slice::from_ref(&b), &mut r).outcome, Outcome::LostCollision);
        assert_eq!(propagate(&b, &station(), &model, std::slice::from_ref(&a), &mut r).outcome, Outcome::LostCollision);
        let c = tx(3, 0, 11.0, 800.0);
        assert_eq!(propagate(&c, &station(), &model, &[a, b], &mut r).outcome, Outcome::Received);
    }

    #[test]
    fn out_of_range_packets_do_not_interfere() {
        let model = ChannelModel::perfect();
        let a = tx(1, 0, 10.0, 500.0);
        let far = tx(2, 0, 10.1, 30_000.0);
        let mut r = rng::stream(0, Domain::Channel, 0);
        assert_eq!(propagate(&a, &station(), &model, &[far], &mut r).outcome, Outcome::Received);
    }

    #[test]
    fn collision_ignores_order() {
        let model = ChannelModel::default();
        let events = vec![tx(1, 0, 10.0, 500.0), tx(2, 0, 10.3, 900.0), tx(3, 0, 10.5, 100.0), tx(4, 0, 20.0, 100.0)];
        let target = &events[1];
        let mut rev = events.clone();
        rev.reverse();
        let s = station();
        let a = propagate(target, &s, &model, &events, &mut packet_rng(&model, &s, target));
        let b = propagate(target, &s, &model, &rev, &mut packet_rng(&model, &s, target));
        assert_eq!(a, b);
        let fwd = receive_at(&events, &s, &model);
        let back = receive_at(&rev, &s, &model);
        let mut back: Vec<_> = back.into_iter().rev().collect();
        back.sort_by_key(|r| r.sonde_id);
        assert_eq!(fwd, back);
    }

    #[test]
    fn probability_is_non_increasing() {
        let m = ChannelModel::default();
        let mut prev = 1.0;
        for k in 0..300 {
            let p = m.reception_probability(k as f64 * 100.0);
            assert!((0.0..=1.0).contains(&p));
            assert!(p <= prev);
            prev = p;
        }
        assert_eq!(m.reception_probability(20_001.0), 0.0);
    }

    #[test]
    fn rx_after_tx_and_summary_balances() {
        let model = ChannelModel::default();
        let events: Vec<TxEvent> = (0..200).map(|k| tx((k % 5) as u8, k as u16, k as f64 * 0.3, 3000.0 + 40.0 * k as f64)).collect();
        let recs = receive_at(&events, &station(), &model);
        for r in &recs {
            assert!(r.rx_time >= r.tx_time);
        }
        let s = summarize(1, &recs);
        assert_eq!(s.sent, s.received + s.lost_range + s.lost_collision);
        assert!(s.lost_collision > 0);
    }

    #[test]
    fn record_json_round_trip() {
        let r = receive_at(&[tx(3, 9, 1.0, 10.0)], &station(), &ChannelModel::perfect()).remove(0);
        let line = serde_json::to_string(&r).unwrap();
        assert!(line.contains("\"outcome\":\"received\""));
        let back: ReceptionRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, r);
    }
}
