use std::io::{Read, Write};
use std::net::TcpStream;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use reacher_rl::env::{EnvError, Environment, LocalReacher, NoiseConfig, FRAME_PIXELS};
use reacher_rl::server::protocol::*;
use reacher_rl::server::{Client, RemoteReacher, Server, ServerConfig, ServerError, ServerHandle};

fn start(cfg: ServerConfig) -> ServerHandle {
    Server::bind("127.0.0.1:0", cfg).unwrap().spawn().unwrap()
}

fn noisy_server() -> ServerHandle {
    start(ServerConfig {
        noise: NoiseConfig {
            enabled: false,
            ..NoiseConfig::enabled(42)
        },
    })
}

#[test]
fn remote_trajectory_is_bit_identical_to_local() {
    let server = noisy_server();
    for (noise, pixels) in [(false, false), (true, true), (false, true)] {
        let seed = 9;
        let mut remote = RemoteReacher::connect(server.addr(), seed, noise, pixels).unwrap();
        let cfg = if noise { NoiseConfig::enabled(42) } else { NoiseConfig::disabled() };
        let mut local = LocalReacher::new(seed, cfg, pixels);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(remote.reset().unwrap(), local.reset().unwrap());
        for _ in 0..1000 {
            let a = [rng.random_range(-1.0f32..1.0), rng.random_range(-1.0f32..1.0)];
            let (r, l) = (remote.step(a).unwrap(), local.step(a).unwrap());
            assert_eq!(r.reward.to_bits(), l.reward.to_bits());
            assert_eq!(r, l);
            if l.done {
                assert_eq!(remote.reset().unwrap(), local.reset().unwrap());
            }
        }
    }
}

#[test]
fn concurrent_clients_get_distinct_sessions() {
    let server = start(ServerConfig::default());
    let mut a = Client::connect(server.addr()).unwrap();
    let mut b = Client::connect(server.addr()).unwrap();
    let sa = a.hello(MODE_STATES, false, 1).unwrap();
    let sb = b.hello(MODE_STATES, false, 1).unwrap();
    let sa2 = a.hello(MODE_STATES, false, 2).unwrap();
    assert!(sa != sb && sa != sa2 && sb != sa2);
    // sessions belong to their connection
    assert!(matches!(b.reset(sa), Err(ServerError::Remote(0x01))));
}

#[test]
fn interleaved_sessions_do_not_interfere() {
    let server = start(ServerConfig::default());
    let mut c = Client::connect(server.addr()).unwrap();
    let s1 = c.hello(MODE_STATES, false, 5).unwrap();
    let s2 = c.hello(MODE_STATES, false, 6).unwrap();
    let mut l1 = LocalReacher::new(5, NoiseConfig::disabled(), false);
    let mut l2 = LocalReacher::new(6, NoiseConfig::disabled(), false);
    assert_eq!(c.reset(s1).unwrap().states, Some(l1.reset().unwrap().features));
    assert_eq!(c.reset(s2).unwrap().states, Some(l2.reset().unwrap().features));
    for i in 0..200 {
        let a = [((i % 7) as f32 - 3.0) / 3.0, 0.5];
        let b = [-0.25, ((i % 5) as f32 - 2.0) / 2.0];
        let (r1, .., o1) = c.step(s1, a).unwrap();
        let (r2, .., o2) = c.step(s2, b).unwrap();
        let (e1, e2) = (l1.step(a).unwrap(), l2.step(b).unwrap());
        assert_eq!((r1, o1.states), (e1.reward, Some(e1.observation.features)));
        assert_eq!((r2, o2.states), (e2.reward, Some(e2.observation.features)));
    }
}

#[test]
fn observation_modes() {
    let server = start(ServerConfig::default());
    let mut c = Client::connect(server.addr()).unwrap();
    let s = c.hello(MODE_STATES, false, 3).unwrap();
    let o = c.reset(s).unwrap();
    assert!(o.states.is_some() && o.pixels.is_none());
    let s = c.hello(MODE_STATES | MODE_PIXELS, false, 3).unwrap();
    let o = c.reset(s).unwrap();
    assert_eq!(o.pixels.as_ref().map(Vec::len), Some(FRAME_PIXELS));
    assert!(o.states.is_some());
    let s = c.hello(MODE_PIXELS, false, 3).unwrap();
    let o = c.reset(s).unwrap();
    assert!(o.states.is_none() && o.pixels.is_some());
    assert!(matches!(c.hello(0, false, 3), Err(ServerError::Remote(0x06))));
}

#[test]
fn error_frames_keep_the_connection_open() {
    let server = start(ServerConfig::default());
    let mut c = Client::connect(server.addr()).unwrap();
    assert!(matches!(c.reset(77), Err(ServerError::Remote(0x01))));
    let s = c.hello(MODE_STATES, false, 4).unwrap();
    c.reset(s).unwrap();
    assert!(matches!(c.step(s, [f32::NAN, 0.0]), Err(ServerError::Remote(0x03))));
    // unknown opcode, answered over a raw socket
    let mut raw = TcpStream::connect(server.addr()).unwrap();
    raw.write_all(&Frame::new(0x42, vec![]).to_bytes()).unwrap();
    let reply = read_frame(&mut raw).unwrap().unwrap();
    assert_eq!(reply.opcode, OP_ERROR);
    assert_eq!(reply.payload, 0x04u16.to_le_bytes());
    raw.write_all(&Request::Hello { mode: 1, noise: false, seed: 0 }.encode().to_bytes()).unwrap();
    assert_eq!(read_frame(&mut raw).unwrap().unwrap().opcode, OP_HELLO);
    // still usable after errors
    c.step(s, [0.1, 0.1]).unwrap();
    c.close(s).unwrap();
    assert!(matches!(c.reset(s), Err(ServerError::Remote(0x01))));
}

#[test]
fn step_after_done_is_rejected() {
    let server = start(ServerConfig::default());
    let mut remote = RemoteReacher::connect(server.addr(), 8, false, false).unwrap();
    remote.reset().unwrap();
    let mut steps = 0;
    loop {
        steps += 1;
        if remote.step([0.0, 0.0]).unwrap().done {
            break;
        }
    }
    assert_eq!(steps, 1000);
    assert!(matches!(remote.step([0.0, 0.0]), Err(EnvError::EpisodeFinished { .. })));
}

#[test]
fn oversized_length_closes_the_connection() {
    let server = start(ServerConfig::default());
    let mut raw = TcpStream::connect(server.addr()).unwrap();
    raw.write_all(&u32::MAX.to_le_bytes()).unwrap();
    raw.write_all(&[OP_HELLO]).unwrap();
    let mut buf = [0u8; 16];
    assert_eq!(raw.read(&mut buf).unwrap_or(0), 0);
}

fn arb_obs() -> impl Strategy<Value = WireObservation> {
    (
        proptest::option::of(proptest::array::uniform6(any::<f32>())),
        proptest::option::of(proptest::collection::vec(any::<u8>(), FRAME_PIXELS)),
    )
        .prop_map(|(states, pixels)| WireObservation { states, pixels })
}

fn arb_request() -> impl Strategy<Value = Request> {
    prop_oneof![
        (any::<u8>(), any::<bool>(), any::<u64>()).prop_map(|(mode, noise, seed)| Request::Hello { mode, noise, seed }),
        any::<u32>().prop_map(|session| Request::Reset { session }),
        (any::<u32>(), any::<f32>(), any::<f32>()).prop_map(|(session, a, b)| Request::Step { session, action: [a, b] }),
        any::<u32>().prop_map(|session| Request::Close { session }),
    ]
}

fn arb_response() -> impl Strategy<Value = Response> {
    prop_oneof![
        any::<u32>().prop_map(|session| Response::Hello { session }),
        arb_obs().prop_map(Response::Reset),
        (any::<f32>(), any::<bool>(), any::<bool>(), arb_obs()).prop_map(|(reward, done, success, observation)| {
            Response::Step { reward, done, success, observation }
        }),
        any::<u32>().prop_map(|session| Response::Closed { session }),
        any::<u16>().prop_map(Response::Error),
    ]
}

// NaN payloads do not compare equal, so round trips compare encoded bytes.
proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn request_round_trip(req in arb_request()) {
        let bytes = req.encode().to_bytes();
        let frame = read_frame(&mut bytes.as_slice()).unwrap().unwrap();
        let back = Request::decode(&frame).unwrap();
        prop_assert_eq!(back.encode().to_bytes(), bytes);
    }

    #[test]
    fn response_round_trip(resp in arb_response()) {
        let bytes = resp.encode().to_bytes();
        let frame = read_frame(&mut bytes.as_slice()).unwrap().unwrap();
        let back = Response::decode(&frame).unwrap();
        prop_assert_eq!(back.encode().to_bytes(), bytes);
    }
}
