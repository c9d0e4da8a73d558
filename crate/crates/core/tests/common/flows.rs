//! Naive reference tally for traffic shares and a random flow generator.

use std::collections::BTreeMap;
use std::net::IpAddr;

use chrono::DateTime;
use quic_recon::net::{IpPrefix, PrefixSet};
use quic_recon::traffic::{Attribution, Endpoint, FlowRecord, OperatorMap, PrefixMap, Protocol, Transport};
use rand::seq::SliceRandom;
use rand::Rng;

pub type Tally = BTreeMap<(i64, String, Protocol), u64>;

fn brute_lpm(entries: &[(IpPrefix, u32)], ip: IpAddr) -> Option<u32> {
    entries.iter().filter(|(p, _)| p.contains(ip)).max_by_key(|(p, _)| p.prefix_len()).map(|(_, a)| *a)
}

/// One flow at a time, no trie, no shared code with the analyzer beyond
/// the record types.
pub fn reference_tally(flows: &[FlowRecord], attr: &Attribution, bin_secs: i64) -> Tally {
    let entries: Vec<_> = attr.prefixes.entries().collect();
    let owner = |asn: u32| attr.operators.operator_of(asn).map(str::to_string);
    let op_of = |e: &Endpoint| match e {
        Endpoint::Addr(a) => brute_lpm(&entries, *a).and_then(owner),
        Endpoint::Asn(n) => owner(*n),
    };
    let local = |e: &Endpoint| match e {
        Endpoint::Addr(a) => attr.local.0.iter().any(|p| p.contains(*a)),
        Endpoint::Asn(n) => attr.local_asns.contains(n),
    };
    let mut t = Tally::new();
    for f in flows {
        let op = match (local(&f.src), local(&f.dst)) {
            (true, true) => None,
            (true, false) => op_of(&f.dst),
            (false, true) => op_of(&f.src),
            (false, false) => op_of(&f.src).or_else(|| op_of(&f.dst)),
        };
        let has = |p| f.src_port == p || f.dst_port == p;
        let proto = match f.transport {
            Transport::Tcp if has(443) => Protocol::Https,
            Transport::Tcp if has(80) => Protocol::Http,
            Transport::Udp if has(443) => Protocol::Quic,
            _ => Protocol::Other,
        };
        let bin = f.start.timestamp_millis().div_euclid(bin_secs * 1000);
        *t.entry((bin, op.unwrap_or_else(|| "other".into()), proto)).or_default() +=
            f.bytes * f.sampling.unwrap_or(1) as u64;
    }
    t
}

/// Non-zero cells of a report in tally form.
pub fn report_cells(r: &quic_recon::traffic::ShareReport) -> Tally {
    let mut t = Tally::new();
    for (bin, ops) in &r.bins {
        for (op, cells) in ops {
            for (i, p) in Protocol::ALL.iter().enumerate() {
                if cells[i] > 0 {
                    t.insert((*bin, op.clone(), *p), cells[i]);
                }
            }
        }
    }
    t
}

/// A small world with nested prefixes, two operators, unowned ASes and a
/// local network.
pub fn world() -> Attribution {
    let prefixes = PrefixMap::from_csv(
        "10.0.0.0/8,1\n10.1.0.0/16,3\n10.1.2.0/24,2\n10.1.2.128/25,4\n172.16.0.0/12,5\n2001:db8::/32,3\n\
         2001:db8:1::/48,1\n192.168.0.0/16,64512\n"
            .as_bytes(),
    )
    .unwrap();
    let mut a = Attribution {
        prefixes,
        operators: OperatorMap::parse("alpha: 1, 2\nbeta: 3\n").unwrap(),
        local: PrefixSet::parse_list("192.168.0.0/16\n").unwrap(),
        ..Attribution::default()
    };
    a.local_asns.insert(64512);
    a
}

pub fn random_endpoint<R: Rng>(rng: &mut R) -> Endpoint {
    match rng.gen_range(0..7) {
        0 => Endpoint::Addr(IpAddr::from([10, rng.gen(), rng.gen(), rng.gen()])),
        1 => Endpoint::Addr(IpAddr::from([10, 1, 2, rng.gen()])),
        2 => Endpoint::Addr(IpAddr::from([192, 168, rng.gen(), rng.gen()])),
        3 => Endpoint::Addr(IpAddr::from([rng.gen_range(1..224), rng.gen(), rng.gen(), rng.gen()])),
        4 => Endpoint::Addr(IpAddr::from([0x2001, 0xdb8, rng.gen_range(0..3), 0, 0, 0, 0, rng.gen()])),
        5 => Endpoint::Asn(*[1, 2, 3, 4, 5, 64512, 99].choose(rng).unwrap()),
        _ => Endpoint::Addr(IpAddr::from([192, 168, 0, 1])),
    }
}

pub fn random_flow<R: Rng>(rng: &mut R) -> FlowRecord {
    let ports = [80, 443, 53, 8080, 51334, 40000];
    let transport = *[Transport::Tcp, Transport::Udp, Transport::Other(1)].choose(rng).unwrap();
    let packets = rng.gen_range(1..50);
    FlowRecord {
        start: DateTime::from_timestamp(rng.gen_range(1_500_000_000..1_500_086_400), 0).unwrap(),
        src: random_endpoint(rng),
        dst: random_endpoint(rng),
        transport,
        src_port: *ports.choose(rng).unwrap(),
        dst_port: *ports.choose(rng).unwrap(),
        bytes: packets * rng.gen_range(40..1500),
        packets,
        sampling: if rng.gen_bool(0.2) { Some(rng.gen_range(1..1000)) } else { None },
    }
}
