use std::io::{Read, Write};
use std::net::TcpStream;

use collide::collision::{collision_count, expected_collisions_noisy, expected_cross_qq};
use collide::device::protocol::{read_frame, write_frame, Message, ERR_MALFORMED, ERR_REQUEST_REJECTED};
use collide::device::{archive_samples, load_samples, open_device, BitstringSource, DeviceSpec, RemoteDevice, Server};
use collide::distribution::NoiseModel;
use collide::volume::{run_cv_test, run_xcv_test, TestConfig};
use collide::{Error, SampleSet};

fn spawn(spec: &str, seed: u64) -> collide::device::ServerHandle {
    Server::bind(&spec.parse().unwrap(), "127.0.0.1:0", seed)
        .unwrap()
        .spawn()
        .unwrap()
}

fn remote(handle: &collide::device::ServerHandle) -> RemoteDevice {
    RemoteDevice::connect(&handle.local_addr().to_string()).unwrap()
}

#[test]
fn uniform_keys_fit_width() {
    let mut dev = open_device(&DeviceSpec::Uniform, 3).unwrap();
    let set = dev.sample(0, 4, 100).unwrap();
    assert_eq!(set.total(), 100);
    assert!(set.keys().all(|k| k < 16));
}

#[test]
fn constant_device_counts() {
    let mut dev = open_device(&"constant:0xbeef".parse().unwrap(), 0).unwrap();
    let set = dev.sample(9, 16, 777).unwrap();
    assert_eq!(set.iter().collect::<Vec<_>>(), vec![(0xbeef, 777)]);
    assert_eq!(collision_count(&set), 776);
}

#[test]
fn noisy_device_matches_closed_form() {
    let n = 12;
    let dim = 1u64 << n;
    let shots = 2048;
    let mut dev = open_device(&"noisy:0.5@haar".parse().unwrap(), 5).unwrap();
    // 30 calls on different circuits, so the mean is over Haar states too
    let counts: Vec<f64> = (0..30u64)
        .map(|c| collision_count(&dev.sample(1000 + c, n, shots).unwrap()) as f64)
        .collect();
    let mean = counts.iter().sum::<f64>() / 30.0;
    let sd = (counts.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 29.0).sqrt();
    let expected = expected_collisions_noisy(dim, shots, NoiseModel::new(0.5).unwrap());
    assert!((mean - expected).abs() < 3.0 * sd / 30f64.sqrt(), "{mean} vs {expected}");
}

#[test]
fn same_circuit_seed_same_distribution() {
    let mut a = open_device(&"haar".parse().unwrap(), 1).unwrap();
    let mut b = open_device(&"haar".parse().unwrap(), 2).unwrap();
    let x = a.sample(42, 10, 5000).unwrap();
    let y = b.sample(42, 10, 5000).unwrap();
    assert_ne!(x, y, "device randomness must differ");
    let mut c = open_device(&"haar:1".parse().unwrap(), 1).unwrap();
    let z = c.sample(42, 10, 5000).unwrap();
    let shared_same = collide::collision::cross_collision_count(&x, &y).unwrap();
    let shared_other = collide::collision::cross_collision_count(&x, &z).unwrap();
    assert!(shared_same > shared_other, "{shared_same} vs {shared_other}");
}

#[test]
fn archive_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.cbs");
    archive_samples(&SampleSet::empty(8).unwrap(), &path).unwrap();
    assert_eq!(std::fs::metadata(&path).unwrap().len(), 20);

    let set = SampleSet::from_counts(8, [(1, 2), (200, 5)]).unwrap();
    let path = dir.path().join("s.cbs");
    archive_samples(&set, &path).unwrap();
    assert_eq!(load_samples(&path).unwrap(), set);

    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    match load_samples(&path) {
        Err(Error::Format { offset, .. }) => assert_eq!(offset, 44),
        other => panic!("expected a format error, got {other:?}"),
    }
    assert!(matches!(
        open_device(&DeviceSpec::Archive { path }, 0),
        Err(Error::Format { .. })
    ));
}

#[test]
fn unreachable_remote_is_a_connection_error() {
    // bind then drop to find a closed port
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let spec: DeviceSpec = format!("remote:127.0.0.1:{port}").parse().unwrap();
    assert!(matches!(open_device(&spec, 0), Err(Error::Connection(_))));
}

#[test]
fn zero_shots_gives_empty_set() {
    let server = spawn("haar", 0);
    let mut dev = remote(&server);
    let set = dev.sample(1, 10, 0).unwrap();
    assert!(set.is_empty());
    assert_eq!(set.n_bits(), 10);
    server.shutdown();
}

#[test]
fn malformed_frame_gets_error_and_close() {
    let server = spawn("uniform", 0);
    let mut s = TcpStream::connect(server.local_addr()).unwrap();
    // opcode 0x55 is unknown
    s.write_all(&[2, 0, 0, 0, 0x55, 0]).unwrap();
    match read_frame(&mut s).unwrap() {
        Some(Message::Error { code, .. }) => assert_eq!(code, ERR_MALFORMED),
        other => panic!("expected an error frame, got {other:?}"),
    }
    let mut rest = Vec::new();
    assert_eq!(s.read_to_end(&mut rest).unwrap(), 0, "session must close");
    server.shutdown();
}

#[test]
fn rejected_request_keeps_session() {
    let server = spawn("haar", 0);
    let mut s = TcpStream::connect(server.local_addr()).unwrap();
    let too_wide = Message::SampleRequest {
        circuit_seed: 1,
        n_qubits: 40,
        shots: 10,
    };
    write_frame(&mut s, &too_wide).unwrap();
    match read_frame(&mut s).unwrap() {
        Some(Message::Error { code, .. }) => assert_eq!(code, ERR_REQUEST_REJECTED),
        other => panic!("expected an error frame, got {other:?}"),
    }
    let ok = Message::SampleRequest {
        circuit_seed: 1,
        n_qubits: 6,
        shots: 10,
    };
    write_frame(&mut s, &ok).unwrap();
    assert!(matches!(read_frame(&mut s).unwrap(), Some(Message::SampleResponse(set)) if set.total() == 10));
    server.shutdown();
}

#[test]
fn remote_error_surfaces_as_protocol_error() {
    let server = spawn("haar", 0);
    let mut dev = remote(&server);
    assert!(matches!(dev.sample(1, 40, 10), Err(Error::Protocol { code: ERR_REQUEST_REJECTED, .. })));
    assert_eq!(dev.sample(1, 6, 3).unwrap().total(), 3);
}

#[test]
fn concurrent_clients_share_the_state() {
    let n = 14;
    let shots = 4096;
    let server = spawn("haar", 11);
    let addr = server.local_addr().to_string();
    let trials = 10u64;
    let counts: Vec<f64> = (0..trials)
        .map(|t| {
            let handles: Vec<_> = (0..2)
                .map(|_| {
                    let addr = addr.clone();
                    std::thread::spawn(move || RemoteDevice::connect(&addr).unwrap().sample(t, n, shots).unwrap())
                })
                .collect();
            let sets: Vec<SampleSet> = handles.into_iter().map(|h| h.join().unwrap()).collect();
            collide::collision::cross_collision_count(&sets[0], &sets[1]).unwrap() as f64
        })
        .collect();
    let mean = counts.iter().sum::<f64>() / trials as f64;
    let sd = (counts.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (trials - 1) as f64).sqrt();
    let expected = expected_cross_qq(1 << n, shots, shots);
    assert!((mean - expected).abs() < 4.0 * sd / (trials as f64).sqrt() + 1.0, "{mean} vs {expected}");
    server.shutdown();
}

#[test]
fn archive_replay_is_identical_locally_and_remotely() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("alice.cbs");
    let config = TestConfig::with_seed(3);
    let n = 12;
    let mut source = open_device(&"haar".parse().unwrap(), 8).unwrap();
    let set = source.sample(config.circuit_seed(n, 0), n, 1 << 16).unwrap();
    archive_samples(&set, &path).unwrap();

    let spec = DeviceSpec::Archive { path: path.clone() };
    let mut local = open_device(&spec, 0).unwrap();
    let server = Server::bind(&spec, "127.0.0.1:0", 99).unwrap().spawn().unwrap();
    let mut far = remote(&server);
    let a = run_cv_test(&mut local, n, &config).unwrap();
    let b = run_cv_test(&mut far, n, &config).unwrap();
    assert_eq!(a, b);
    assert!(a.passed);

    let mut bob_local = open_device(&"haar".parse().unwrap(), 21).unwrap();
    let mut bob_far = open_device(&"haar".parse().unwrap(), 21).unwrap();
    let x = run_xcv_test(&mut local, &mut bob_local, n, &config).unwrap();
    let y = run_xcv_test(&mut far, &mut bob_far, n, &config).unwrap();
    assert_eq!(x, y);
    server.shutdown();
}

#[test]
fn spec_strings_round_trip() {
    for s in [
        "haar",
        "haar:3",
        "qv",
        "qv:5",
        "noisy:0.25@haar",
        "noisy:0.5@qv:4",
        "uniform",
        "constant:0xdead",
        "archive:/tmp/x.cbs",
        "remote:localhost:7878",
    ] {
        let spec: DeviceSpec = s.parse().unwrap();
        assert_eq!(spec.to_string().parse::<DeviceSpec>().unwrap(), spec, "{s}");
    }
    for bad in ["", "haar:x", "noisy:1.5@haar", "noisy:0.5@uniform", "constant:", "remote:", "qv:0", "foo"] {
        assert!(bad.parse::<DeviceSpec>().is_err(), "{bad}");
    }
}
