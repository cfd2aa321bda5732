use proptest::prelude::*;

use dsa_core::ops::{self, DifBlockSize, DifMode, DifParams, FillParams};
use dsa_core::*;

fn addr() -> impl Strategy<Value = Address> {
    any::<u64>().prop_map(Address::from_raw)
}

fn dif_params() -> impl Strategy<Value = DifParams> {
    (0u8..4, 0u8..4, any::<u16>(), any::<u32>()).prop_map(|(b, m, app, r)| {
        DifParams::new(DifBlockSize::from_code(b).unwrap(), DifMode::from_code(m).unwrap(), app, r)
    })
}

fn params_for(op: Opcode) -> BoxedStrategy<OpParams> {
    match op {
        Opcode::MemFill => prop_oneof![
            any::<[u8; 8]>().prop_map(|p| OpParams::Fill(FillParams::new(&p).unwrap())),
            any::<[u8; 16]>().prop_map(|p| OpParams::Fill(FillParams::new(&p).unwrap())),
        ]
        .boxed(),
        Opcode::ComparePattern => any::<[u8; 8]>().prop_map(OpParams::Pattern).boxed(),
        Opcode::CrcGen => any::<u32>().prop_map(|seed| OpParams::Crc(ops::CrcParams { seed })).boxed(),
        Opcode::Dif => dif_params().prop_map(OpParams::Dif).boxed(),
        Opcode::Dualcast => addr().prop_map(|dst2| OpParams::Dualcast { dst2 }).boxed(),
        Opcode::CreateDelta => {
            (addr(), any::<u32>()).prop_map(|(record, max_size)| OpParams::CreateDelta { record, max_size }).boxed()
        }
        Opcode::ApplyDelta => (addr(), any::<u32>())
            .prop_map(|(record, record_size)| OpParams::ApplyDelta { record, record_size })
            .boxed(),
        _ => Just(OpParams::None).boxed(),
    }
}

fn descriptor() -> impl Strategy<Value = WorkDescriptor> {
    let ops: Vec<Opcode> = Opcode::DATA_OPS.iter().copied().chain([Opcode::Batch]).collect();
    proptest::sample::select(ops).prop_flat_map(|opcode| {
        (params_for(opcode), 0u32..16, 0..=descriptor::MAX_CLIENT_ID, addr(), addr(), any::<u64>(), addr()).prop_map(
            move |(params, flags, client_id, src, dst, transfer_size, completion)| WorkDescriptor {
                opcode,
                flags: Flags::from_bits_truncate(flags),
                client_id,
                src,
                dst,
                transfer_size,
                completion,
                params,
            },
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn descriptor_round_trip(d in descriptor()) {
        let bytes = d.serialize().unwrap();
        prop_assert_eq!(WorkDescriptor::deserialize(&bytes).unwrap(), d);
    }

    #[test]
    fn decode_is_canonical(bytes in proptest::collection::vec(any::<u8>(), 64)) {
        if let Ok(d) = WorkDescriptor::deserialize(&bytes) {
            prop_assert_eq!(d.serialize().unwrap().to_vec(), bytes);
        }
    }
}

proptest! {
    #[test]
    fn validate_is_pure(d in descriptor()) {
        let cfg = DeviceConfig::default();
        prop_assert_eq!(validate(&d, &cfg), validate(&d, &cfg));
    }

    #[test]
    fn crc_chains(data in proptest::collection::vec(any::<u8>(), 0..4096), cut in any::<prop::sample::Index>()) {
        let k = cut.index(data.len() + 1);
        prop_assert_eq!(ops::crc32c(ops::crc32c(0, &data[..k]), &data[k..]), ops::crc32c(0, &data));
    }

    #[test]
    fn dif_round_trip_and_detection(
        p in dif_params(),
        blocks in 1usize..4,
        seed in any::<u64>(),
        flip in any::<prop::sample::Index>(),
    ) {
        let p = DifParams { mode: DifMode::Insert, ..p };
        let data: Vec<u8> = (0..p.block_size.data_block() * blocks).map(|i| (i as u64 ^ seed).wrapping_mul(31) as u8).collect();
        let prot = ops::dif_insert(&p, &data).unwrap();
        prop_assert_eq!(prot.len(), p.output_len(data.len()));
        prop_assert!(ops::dif_check(&p, &prot).unwrap().is_ok());
        prop_assert_eq!(ops::dif_strip(&p, &prot).unwrap(), data);

        let mut bad = prot.clone();
        let i = flip.index(bad.len());
        bad[i] ^= 0x01;
        let pb = p.block_size.protected_block();
        prop_assert_eq!(ops::dif_check(&p, &bad).unwrap().map_err(|(b, _)| b), Err(i / pb));
    }

    #[test]
    fn delta_round_trip(
        a in proptest::collection::vec(any::<u8>(), 0..64).prop_map(|v| v.repeat(8)),
        edits in proptest::collection::vec((any::<prop::sample::Index>(), any::<u8>()), 0..32),
        room in 0usize..512,
    ) {
        let mut b = a.clone();
        if !b.is_empty() {
            for (i, v) in edits {
                let k = i.index(b.len());
                b[k] = v;
            }
        }
        let changed = a.chunks(8).zip(b.chunks(8)).filter(|(x, y)| x != y).count();
        match ops::delta_create(&a, &b, room).unwrap() {
            Ok(rec) => {
                prop_assert!(changed * 12 <= room);
                prop_assert_eq!(rec.entries.len(), changed);
                let mut out = vec![0; a.len()];
                ops::delta_apply(&a, &rec, &mut out).unwrap();
                prop_assert_eq!(out, b);
            }
            Err(over) => {
                prop_assert!(changed * 12 > room);
                prop_assert_eq!(over.partial.entries.len(), room / 12);
            }
        }
    }

    #[test]
    fn tracker_releases_in_submission_order(
        order in Just((0..1000u32).collect::<Vec<_>>()).prop_shuffle(),
        drain_every in 1usize..50,
    ) {
        let mut t = OrderedTracker::new();
        let slots: Vec<_> = (0..1000u32).map(|i| t.submit(i)).collect();
        let mut out = Vec::new();
        let mut done = std::collections::HashSet::new();
        for (k, &i) in order.iter().enumerate() {
            t.complete(slots[i as usize]).unwrap();
            done.insert(i);
            if k % drain_every == 0 {
                let before = out.len();
                out.extend(t.drain());
                prop_assert!(out[before..].iter().all(|x| done.contains(x)));
                // The released prefix is maximal.
                prop_assert!(t.is_empty() || !t.is_completed(t.head()));
            }
        }
        out.extend(t.drain());
        prop_assert_eq!(out, (0..1000).collect::<Vec<_>>());
        prop_assert!(t.is_empty());
    }

    #[test]
    fn device_copy_matches_source(data in proptest::collection::vec(any::<u8>(), 0..8192), cc in any::<bool>()) {
        let dev = Device::configure(DeviceConfig::default()).unwrap();
        let len = data.len() as u64;
        let src = dev.alloc(len.max(1), Tier::LocalDram).unwrap();
        let dst = dev.alloc(len.max(1), Tier::Cxl).unwrap();
        dev.write(src, &data).unwrap();
        let mut p = Portal::open(&dev, 0, 0).unwrap();
        let flags = if cc { Flags::CACHE_CONTROL } else { Flags::empty() };
        let r = p.submit_sync(WorkDescriptor::copy(src, dst, len).with_flags(flags)).unwrap();
        prop_assert_eq!(r.status, Status::Success);
        prop_assert_eq!(r.bytes_completed, len);
        prop_assert_eq!(dev.read(dst, len).unwrap(), data);
    }
}
