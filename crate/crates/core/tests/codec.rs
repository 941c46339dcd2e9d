mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sonde_core::flight::SensorSample;
use sonde_core::telemetry::{decode, encode, quantized, CodecError, TelemetryPacket};

const GOLDEN_HEX: &str = include_str!("fixtures/golden_packet.hex");
const GOLDEN_JSON: &str = include_str!("fixtures/golden_packet.json");

fn golden_sample() -> SensorSample {
    SensorSample {
        sonde_id: 4,
        time: 310_512.25,
        pressure: 81_234.0,
        temperature: 279.37,
        humidity: 71.05,
        lon: 7.4787123,
        lat: 45.7839456,
        altitude: 2703.125,
        vel_ned: [2.345, -1.5, 0.125],
        accel_body: [0.011, -0.027, 0.998],
        mag_body: [0.102, 0.215, -0.398],
        orientation: [0.99, 0.05, -0.1, 0.07],
    }
}

#[test]
fn golden_packet_is_frozen() {
    let bytes = hex::decode(GOLDEN_HEX.trim()).unwrap();
    assert_eq!(hex::encode(encode(&golden_sample(), 1234).unwrap()), GOLDEN_HEX.trim());
    let (sample, seq) = decode(&bytes).unwrap();
    assert_eq!(seq, 1234);
    let recorded: SensorSample = serde_json::from_str(GOLDEN_JSON).unwrap();
    assert_eq!(sample, recorded);
}

#[test]
fn golden_packet_struct_view() {
    let bytes = hex::decode(GOLDEN_HEX.trim()).unwrap();
    let p = TelemetryPacket::from_bytes(&bytes).unwrap();
    assert_eq!(p.temperature, 5622);
    assert_eq!(p.humidity, 7105);
    assert_eq!(p.alt_mm, 2_703_125);
    assert_eq!(p.to_bytes().to_vec(), bytes);
}

#[test]
fn ten_thousand_random_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..10_000u16 {
        let s = common::random_sample(&mut rng);
        let (back, seq) = decode(&encode(&s, i).unwrap()).unwrap();
        assert_eq!(seq, i);
        assert_eq!(back, quantized(&s).unwrap());
        // quantization is idempotent
        assert_eq!(quantized(&back).unwrap(), back);
    }
}

#[test]
fn truncated_and_padded_frames() {
    let bytes = encode(&golden_sample(), 1).unwrap();
    assert_eq!(decode(&bytes[..63]).unwrap_err(), CodecError::WrongLength(63));
    let mut long = bytes.to_vec();
    long.push(0);
    assert_eq!(decode(&long).unwrap_err(), CodecError::WrongLength(65));
}

proptest! {
    #[test]
    fn round_trip_is_within_one_quantum(seed in any::<u64>(), seq in any::<u16>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = common::random_sample(&mut rng);
        let (back, got_seq) = decode(&encode(&s, seq).unwrap()).unwrap();
        prop_assert_eq!(got_seq, seq);
        prop_assert!((back.temperature - s.temperature).abs() <= 0.005 + 1e-9);
        prop_assert!((back.humidity - s.humidity).abs() <= 0.005 + 1e-9);
        prop_assert!((back.lat - s.lat).abs() <= 0.5e-7 + 1e-12);
        prop_assert!((back.lon - s.lon).abs() <= 0.5e-7 + 1e-12);
        prop_assert!((back.altitude - s.altitude).abs() <= 0.0005 + 1e-9);
        prop_assert!((back.time - s.time).abs() <= 0.0005 + 1e-9);
        for i in 0..3 {
            prop_assert!((back.vel_ned[i] - s.vel_ned[i]).abs() <= 0.0005 + 1e-9);
            prop_assert!((back.accel_body[i] - s.accel_body[i]).abs() <= 0.0005 + 1e-9);
            prop_assert!((back.mag_body[i] - s.mag_body[i]).abs() <= 0.0005 + 1e-9);
        }
    }

    #[test]
    fn any_single_byte_flip_is_caught(seed in any::<u64>(), pos in 0usize..64, flip in 1u8..=255) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bytes = encode(&common::random_sample(&mut rng), 3).unwrap();
        bytes[pos] ^= flip;
        let crc_error = matches!(decode(&bytes), Err(CodecError::CrcMismatch { .. }));
        prop_assert!(crc_error);
    }
}

#[test]
#[ignore]
fn regenerate_golden_packet() {
    let bytes = encode(&golden_sample(), 1234).unwrap();
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    std::fs::write(dir.join("golden_packet.hex"), hex::encode(bytes) + "\n").unwrap();
    let (s, _) = decode(&bytes).unwrap();
    std::fs::write(dir.join("golden_packet.json"), serde_json::to_string_pretty(&s).unwrap() + "\n").unwrap();
}
