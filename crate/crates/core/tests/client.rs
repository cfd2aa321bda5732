use std::collections::HashSet;

use dsa_core::*;

fn device(cfg: DeviceConfig) -> (Device, Address, Address) {
    let dev = Device::configure(cfg).unwrap();
    let src = dev.alloc(1 << 20, Tier::LocalDram).unwrap();
    let dst = dev.alloc(1 << 20, Tier::LocalDram).unwrap();
    (dev, src, dst)
}

/// Idle-device latency of a plain local-DRAM copy, from the submit call.
fn closed_form(t: &TimingModel, bytes: u64) -> f64 {
    let rate = t.b_pe_max.min(t.tiers.local_dram.read_bw).min(t.tiers.local_dram.write_bw).min(t.b_fabric);
    t.t_submit_dwq + t.t_desc_fetch + t.t_translate + t.tiers.local_dram.extra_latency + t.t_pe_fixed.max(bytes as f64 / rate)
}

#[test]
fn sync_copy_latency_matches_closed_form() {
    let (dev, src, dst) = device(DeviceConfig::default());
    let t = TimingModel::default();
    let mut p = Portal::open(&dev, 0, 0).unwrap();
    let r = p.submit_sync(WorkDescriptor::copy(src, dst, 4096)).unwrap();
    assert_eq!(r.status, Status::Success);
    assert!((r.timestamp_done - closed_form(&t, 4096)).abs() < 1e-6, "{}", r.timestamp_done);
}

#[test]
fn zero_length_and_invalid() {
    let (dev, src, dst) = device(DeviceConfig::default());
    let mut p = Portal::open(&dev, 0, 0).unwrap();
    let r = p.submit_sync(WorkDescriptor::copy(src, dst, 0)).unwrap();
    assert_eq!((r.status, r.bytes_completed), (Status::Success, 0));

    dev.write(src, &[7; 64]).unwrap();
    let r = p.submit_sync(WorkDescriptor::copy(src, Address::NULL, 64)).unwrap();
    assert_eq!(r.status, Status::InvalidDescriptor);
    assert_eq!(dev.read(dst, 64).unwrap(), vec![0; 64]);
    assert!(matches!(
        p.submit(WorkDescriptor::copy(src, Address::NULL, 64)),
        Err(ClientError::Invalid { violation: Violation::MissingAddress(_), record: Some(_) })
    ));
}

#[test]
fn block_wait_accrues_device_time() {
    let (dev, src, dst) = device(DeviceConfig::default());
    let t = TimingModel::default();
    let mut p = Portal::open(&dev, 0, 0).unwrap();
    let h = p.submit(WorkDescriptor::copy(src, dst, 1 << 20)).unwrap().accepted().unwrap();
    let r = p.wait(&h, WaitMode::Block).unwrap();
    let tel = &dev.snapshot_telemetry()[0];
    let expect = closed_form(&t, 1 << 20) - t.t_submit_dwq;
    assert!((tel.wait_state_ns - expect).abs() < 1e-6, "{} vs {expect}", tel.wait_state_ns);
    assert_eq!(tel.busy_poll_ns, 0.0);
    assert_eq!(p.clock(), r.timestamp_done);

    let h = p.submit(WorkDescriptor::copy(src, dst, 64)).unwrap().accepted().unwrap();
    p.wait(&h, WaitMode::Poll).unwrap();
    assert!(dev.snapshot_telemetry()[0].busy_poll_ns > 0.0);
}

#[test]
fn completed_handle_returns_immediately() {
    let (dev, src, dst) = device(DeviceConfig::default());
    let mut p = Portal::open(&dev, 0, 0).unwrap();
    let h = p.submit(WorkDescriptor::copy(src, dst, 64)).unwrap().accepted().unwrap();
    dev.run_until_idle();
    p.set_clock(1e9);
    let r = p.wait(&h, WaitMode::Block).unwrap();
    assert_eq!(r.desc_id, h.desc_id());
    assert_eq!(p.clock(), 1e9);
    assert_eq!(p.wait(&h, WaitMode::Block), Err(ClientError::AlreadyWaited));
}

#[test]
fn full_swq_retries_without_side_effects() {
    let (dev, src, dst) = device(DeviceConfig::single_group(1, WqMode::Shared, 2, 1));
    let mut p = Portal::open(&dev, 0, 0).unwrap();
    let mut held = Vec::new();
    let outcome = loop {
        match p.submit(WorkDescriptor::copy(src, dst, 64)).unwrap() {
            Submission::Accepted(h) => held.push(h),
            Submission::Retry => break held.len(),
        }
    };
    let tel = &dev.snapshot_telemetry()[0];
    assert_eq!(tel.retries, 1);
    assert_eq!(tel.wqs[0].accepted as usize, outcome);
    let slots = dev.completion_slots();
    for h in &held {
        p.wait(h, WaitMode::Poll).unwrap();
    }
    assert_eq!(dev.snapshot_telemetry()[0].descriptors_completed as usize, outcome);
    drop(held);
    assert!(dev.completion_slots() < slots);
}

#[test]
fn dedicated_overflow_is_a_usage_error() {
    let (dev, src, dst) = device(DeviceConfig::single_group(1, WqMode::Dedicated, 2, 1));
    let mut p = Portal::open(&dev, 0, 0).unwrap();
    let mut held = Vec::new();
    let err = loop {
        match p.submit(WorkDescriptor::copy(src, dst, 64)) {
            Ok(s) => held.push(s.accepted().unwrap()),
            Err(e) => break e,
        }
    };
    assert_eq!(err, ClientError::Device(DeviceError::DwqFull(0)));
}

#[test]
fn concurrent_swq_submitters_conserve_ids() {
    let (dev, src, dst) = device(DeviceConfig::single_group(1, WqMode::Shared, 32, 1));
    let threads: Vec<_> = (0..16)
        .map(|t| {
            let dev = dev.clone();
            std::thread::spawn(move || {
                let mut p = Portal::open(&dev, 0, 0).unwrap().with_client_id(t + 1);
                let (mut ids, mut retries) = (Vec::new(), 0);
                for _ in 0..1000 {
                    match p.submit(WorkDescriptor::copy(src, dst.add(64).unwrap(), 64)).unwrap() {
                        Submission::Accepted(h) => ids.push(h),
                        Submission::Retry => retries += 1,
                    }
                }
                // Waiting from a thread other than the submitter.
                (ids, retries)
            })
        })
        .collect();
    let mut all = Vec::new();
    let mut retries = 0;
    for t in threads {
        let (ids, r) = t.join().unwrap();
        all.extend(ids);
        retries += r;
    }
    assert_eq!(all.len() + retries, 16_000);
    let mut clock = 0.0;
    let mut seen = HashSet::new();
    for h in &all {
        let r = h.wait(&dev, WaitMode::Block, &mut clock).unwrap();
        assert_eq!(r.desc_id, h.desc_id());
        assert!(seen.insert(r.desc_id));
    }
    assert_eq!(dev.snapshot_telemetry()[0].descriptors_completed as usize, all.len());
    assert_eq!(dev.snapshot_telemetry()[0].retries as usize, retries);
}

#[test]
fn batch_completes_all_entries() {
    let (dev, src, dst) = device(DeviceConfig::default());
    dev.write(src, &(0..=255u8).cycle().take(4096).collect::<Vec<_>>()).unwrap();
    let descs: Vec<_> =
        (0..8u64).map(|i| WorkDescriptor::copy(src.add(i * 512).unwrap(), dst.add(i * 512).unwrap(), 512)).collect();
    let batch = build_batch(&dev, &descs).unwrap();
    let mut p = Portal::open(&dev, 0, 0).unwrap();
    let h = p.submit_batch(&batch).unwrap().accepted().unwrap();
    let r = p.wait(&h, WaitMode::Block).unwrap();
    assert_eq!((r.status, r.bytes_completed), (Status::Success, 8));
    assert_eq!(dev.read(dst, 4096).unwrap(), dev.read(src, 4096).unwrap());
    assert_eq!(dev.snapshot_telemetry()[0].batches_completed, 1);
}

#[test]
fn fenced_batch_abandons_after_failure() {
    let (dev, src, dst) = device(DeviceConfig::default());
    let descs = vec![
        WorkDescriptor::compare(src, dst.add(1).unwrap(), 64).with_flags(Flags::CHECK_RESULT),
        WorkDescriptor::copy(src, dst, 64).with_flags(Flags::FENCE),
    ];
    dev.write(dst.add(1).unwrap(), &[1]).unwrap();
    let batch = build_batch(&dev, &descs).unwrap();
    let mut p = Portal::open(&dev, 0, 0).unwrap();
    let h = p.submit_batch(&batch).unwrap().accepted().unwrap();
    let r = p.wait(&h, WaitMode::Block).unwrap();
    assert_eq!(r.status, Status::CompareMismatch);
    assert_eq!(r.result, 0);
    assert_eq!(r.bytes_completed, 0);
}
