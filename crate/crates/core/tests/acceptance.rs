//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

use std::collections::HashSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dsa_core::engine::Arbiter;
use dsa_core::ops::{self, DifBlockSize, DifMode, DifParams};
use dsa_core::vring::{ForwardConfig, ForwardMode};
use dsa_core::*;

type Outcome = Result<String, String>;

fn check(cond: bool, what: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.into())
    }
}

// ---- independent oracles ------------------------------------------------------

fn crc32c_bitwise(data: &[u8]) -> u32 {
    let mut crc = 0xFFFF_FFFFu32;
    for &b in data {
        crc ^= b as u32;
        for _ in 0..8 {
            let lsb = crc & 1;
            crc >>= 1;
            if lsb == 1 {
                crc ^= 0x82F6_3B78;
            }
        }
    }
    !crc
}

fn crc16_bitwise(data: &[u8]) -> u16 {
    let mut crc = 0u16;
    for &b in data {
        for i in (0..8).rev() {
            let bit = ((b >> i) & 1) as u16;
            let top = crc >> 15;
            crc <<= 1;
            if top ^ bit == 1 {
                crc ^= 0x8BB7;
            }
        }
    }
    crc
}

/// Differing 8-byte chunks as (index, new bytes).
fn diff_chunks(a: &[u8], b: &[u8]) -> Vec<(usize, Vec<u8>)> {
    a.chunks(8).zip(b.chunks(8)).enumerate().filter(|(_, (x, y))| x != y).map(|(i, (_, y))| (i, y.to_vec())).collect()
}

fn random_bytes(rng: &mut ChaCha8Rng, len: usize) -> Vec<u8> {
    (0..len).map(|_| rng.gen()).collect()
}

fn functional_device() -> Device {
    Device::configure(DeviceConfig::default()).unwrap()
}

// ---- criteria -----------------------------------------------------------------

fn crc32c_criterion() -> Outcome {
    check(ops::crc32c(0, b"123456789") == 0xE306_9283, "check vector")?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let len = rng.gen_range(0..2048);
        let data = random_bytes(&mut rng, len);
        let cut = rng.gen_range(0..=len);
        let whole = ops::crc32c(0, &data);
        check(whole == crc32c_bitwise(&data), "table vs bitwise oracle")?;
        check(ops::crc32c(ops::crc32c(0, &data[..cut]), &data[cut..]) == whole, format!("chaining at {cut}/{len}"))?;
    }

    let dev = functional_device();
    let src = dev.alloc(9, Tier::LocalDram).unwrap();
    dev.write(src, b"123456789").unwrap();
    let mut p = Portal::open(&dev, 0, 0).unwrap();
    let r = p.submit_sync(WorkDescriptor::crc(0, src, Address::NULL, 9)).unwrap();
    check(r.result == 0xE306_9283, "device crc descriptor")?;
    Ok("0xE3069283; 1000 random splits chain".into())
}

fn dif_criterion() -> Outcome {
    check(ops::crc16_t10dif(b"123456789") == 0xD0DB, "check vector")?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let sizes = [DifBlockSize::B512, DifBlockSize::B520, DifBlockSize::B4096, DifBlockSize::B4104];
    for i in 0..1000 {
        let bs = sizes[i % 4];
        let blocks = rng.gen_range(1..4);
        let x = random_bytes(&mut rng, bs.data_block() * blocks);
        let p = DifParams::new(bs, DifMode::Insert, rng.gen(), rng.gen());
        let protected = ops::dif_insert(&p, &x).unwrap();
        let guard = u16::from_be_bytes([protected[bs.data_block()], protected[bs.data_block() + 1]]);
        check(guard == crc16_bitwise(&x[..bs.data_block()]), "guard vs bitwise oracle")?;
        check(ops::dif_check(&p, &protected).unwrap().is_ok(), "check after insert")?;
        check(ops::dif_strip(&p, &protected).unwrap() == x, "strip after insert")?;
    }
    Ok("0xD0DB; 1000 insert/check/strip round trips".into())
}

fn delta_criterion() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut overflows = 0;
    for _ in 0..1000 {
        let len = 8 * rng.gen_range(1..256);
        let a = random_bytes(&mut rng, len);
        let mut b = a.clone();
        for _ in 0..rng.gen_range(0..len / 4 + 1) {
            let k = rng.gen_range(0..len);
            b[k] = rng.gen();
        }
        let expect = diff_chunks(&a, &b);
        let max_size = rng.gen_range(0..=expect.len() * 12 + 24);
        match ops::delta_create(&a, &b, max_size).unwrap() {
            Ok(rec) => {
                check(expect.len() * 12 <= max_size, "missed overflow")?;
                let got: Vec<_> = rec.entries.iter().map(|e| (e.chunk as usize, e.data.to_vec())).collect();
                check(got == expect, "entries vs oracle")?;
                let mut dst = vec![0; len];
                ops::delta_apply(&a, &rec, &mut dst).unwrap();
                check(dst == b, "apply(create) != modified")?;
            }
            Err(_) => {
                overflows += 1;
                check(expect.len() * 12 > max_size, "spurious overflow")?;
            }
        }
    }
    check(overflows > 0, "no overflow case exercised")?;

    let dev = functional_device();
    let a = dev.alloc(4096, Tier::LocalDram).unwrap();
    let b = dev.alloc(4096, Tier::LocalDram).unwrap();
    let rec = dev.alloc(4096, Tier::LocalDram).unwrap();
    let out = dev.alloc(4096, Tier::LocalDram).unwrap();
    let av = random_bytes(&mut rng, 4096);
    let mut bv = av.clone();
    bv[100] ^= 1;
    bv[4000] ^= 1;
    dev.write(a, &av).unwrap();
    dev.write(b, &bv).unwrap();
    let mut p = Portal::open(&dev, 0, 0).unwrap();
    let made = p.submit_sync(WorkDescriptor::create_delta(a, b, 4096, rec, 4096)).unwrap();
    check(made.status == Status::Success && made.result == 24, "device create")?;
    let applied = p.submit_sync(WorkDescriptor::apply_delta(a, out, 4096, rec, 24)).unwrap();
    check(applied.status == Status::Success, "device apply")?;
    check(dev.read(out, 4096).unwrap() == bv, "device round trip")?;
    Ok(format!("1000 pairs, {overflows} overflow cases exact"))
}

fn swq_criterion() -> Outcome {
    const THREADS: usize = 16;
    const ATTEMPTS: usize = 10_000;
    let dev = Device::configure(DeviceConfig::single_group(1, WqMode::Shared, 32, 4)).unwrap();
    let buf = dev.alloc(128, Tier::LocalDram).unwrap();
    let accepted = Arc::new(AtomicU64::new(0));
    let retried = Arc::new(AtomicU64::new(0));
    let handles: Vec<_> = (0..THREADS)
        .map(|t| {
            let (dev, accepted, retried) = (dev.clone(), accepted.clone(), retried.clone());
            std::thread::spawn(move || {
                let mut p = Portal::open(&dev, 0, 0).unwrap().with_client_id(t as u32 + 1);
                let mut pending = std::collections::VecDeque::new();
                let mut ids = Vec::new();
                for _ in 0..ATTEMPTS {
                    match p.submit(WorkDescriptor::copy(buf, buf.add(64).unwrap(), 64)).unwrap() {
                        Submission::Accepted(h) => {
                            accepted.fetch_add(1, Ordering::Relaxed);
                            pending.push_back(h);
                        }
                        Submission::Retry => {
                            retried.fetch_add(1, Ordering::Relaxed);
                            if let Some(h) = pending.pop_front() {
                                let r = p.wait(&h, WaitMode::Poll).unwrap();
                                ids.push((h.desc_id(), r.desc_id));
                            }
                        }
                    }
                }
                for h in pending {
                    let r = p.wait(&h, WaitMode::Block).unwrap();
                    ids.push((h.desc_id(), r.desc_id));
                }
                ids
            })
        })
        .collect();
    let mut seen = HashSet::new();
    for h in handles {
        for (sent, done) in h.join().unwrap() {
            check(sent == done, "record id differs from handle id")?;
            check(seen.insert(sent), format!("id {sent} completed twice"))?;
        }
    }
    let (a, r) = (accepted.load(Ordering::Relaxed), retried.load(Ordering::Relaxed));
    check(a + r == (THREADS * ATTEMPTS) as u64, "accepted + retried != attempts")?;
    check(seen.len() as u64 == a, "an accepted id never completed")?;
    let tel = &dev.snapshot_telemetry()[0];
    check(tel.descriptors_completed == a, "device completion count")?;
    check(tel.retries == r, "telemetry retries")?;
    Ok(format!("{a} accepted + {r} retried = {}", THREADS * ATTEMPTS))
}

fn arbiter_criterion() -> Outcome {
    let mut arb = Arbiter::new(vec![3, 1]);
    let mut counts = [0u64; 2];
    for _ in 0..100_000 {
        counts[arb.next(|_| true).unwrap()] += 1;
    }
    let ratio = counts[0] as f64 / counts[1] as f64;
    check((ratio / 3.0 - 1.0).abs() <= 0.05, format!("ratio {ratio:.4}"))?;

    // Starvation bound under random eligibility.
    let weights = vec![3, 1, 2, 1];
    let bound: u32 = weights.iter().sum();
    let mut arb = Arbiter::new(weights);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut waiting = [0u32; 4];
    let mut worst = 0;
    for _ in 0..100_000 {
        let eligible: Vec<bool> = (0..4).map(|_| rng.gen_bool(0.7)).collect();
        let Some(pick) = arb.next(|i| eligible[i]) else { continue };
        for q in 0..4 {
            if q == pick || !eligible[q] {
                waiting[q] = 0;
            } else {
                waiting[q] += 1;
                worst = worst.max(waiting[q]);
            }
        }
    }
    check(worst <= bound, format!("a queue waited {worst} dispatches"))?;

    // Same ratio through the device with both WQs kept full.
    let mut cfg = DeviceConfig::single_group(2, WqMode::Dedicated, 16, 1);
    cfg.wqs[0].priority = 3;
    let dev = Device::with_platform(PlatformConfig { functional: false, ..PlatformConfig::single(cfg) }).unwrap();
    let buf = dev.alloc(128, Tier::LocalDram).unwrap();
    let mut portals = [Portal::open(&dev, 0, 0).unwrap(), Portal::open(&dev, 0, 1).unwrap()];
    let mut held = Vec::new();
    while dev.snapshot_telemetry()[0].descriptors_completed < 20_000 {
        for p in portals.iter_mut() {
            p.set_clock(dev.now());
            while dev.wq_occupancy(0, p.wq()).unwrap() < 16 {
                held.push(p.submit(WorkDescriptor::copy(buf, buf.add(64).unwrap(), 64)).unwrap().accepted().unwrap());
            }
        }
        dev.step();
        held.retain(|h| !h.is_done());
    }
    let wqs = &dev.snapshot_telemetry()[0].wqs;
    let dev_ratio = wqs[0].completed as f64 / wqs[1].completed as f64;
    check((dev_ratio / 3.0 - 1.0).abs() <= 0.05, format!("device ratio {dev_ratio:.4}"))?;
    Ok(format!("ratio {ratio:.4} (device {dev_ratio:.4}); worst wait {worst} <= {bound}"))
}

fn sweep(spec: SweepSpec) -> Vec<SweepRow> {
    run_sweep(&spec).unwrap()
}

/// Transfer size where speedup first reaches 1, log-interpolated.
fn crossing(rows: &[SweepRow]) -> Option<f64> {
    for w in rows.windows(2) {
        if w[0].speedup < 1.0 && w[1].speedup >= 1.0 {
            let (x0, x1) = ((w[0].ts as f64).ln(), (w[1].ts as f64).ln());
            let f = (1.0 - w[0].speedup) / (w[1].speedup - w[0].speedup);
            return Some((x0 + f * (x1 - x0)).exp());
        }
    }
    rows.first().filter(|r| r.speedup >= 1.0).map(|r| r.ts as f64)
}

fn speedup_criterion() -> Outcome {
    let sizes: Vec<u64> = (6..=16).map(|k| 1u64 << k).collect();
    let sync = sweep(SweepSpec { transfer_sizes: sizes.clone(), ..SweepSpec::default() });
    let asyn = sweep(SweepSpec { transfer_sizes: sizes, mode: SyncMode::Async, ..SweepSpec::default() });
    let cs = crossing(&sync).ok_or("sync never crosses")?;
    let ca = crossing(&asyn).ok_or("async never crosses")?;
    check((1024.0..=8192.0).contains(&cs), format!("sync crossing at {cs:.0} B"))?;
    check(ca <= 512.0, format!("async crossing at {ca:.0} B"))?;
    Ok(format!("sync crosses at {cs:.0} B, async at {ca:.0} B"))
}

fn batching_criterion() -> Outcome {
    let rows = sweep(SweepSpec { transfer_sizes: vec![512], batch_sizes: vec![1, 4, 16, 32, 64], ..SweepSpec::default() });
    let thr = |bs: u32| rows.iter().find(|r| r.bs == bs).unwrap().thr_gbps;
    let mono = [1, 4, 16, 64].windows(2).all(|w| thr(w[1]) >= thr(w[0]));
    check(mono, "sync 512 B not monotone in batch size")?;
    let gain = thr(32) / thr(1);
    check(gain >= 4.0, format!("bs=32 only {gain:.2}x bs=1"))?;

    let cap = TimingModel::default().b_fabric;
    let mut sat = vec![sweep(SweepSpec { transfer_sizes: vec![256 << 10], batch_sizes: vec![64], iterations: 8, ..SweepSpec::default() })[0].thr_gbps];
    sat.extend(
        sweep(SweepSpec { transfer_sizes: vec![4096], batch_sizes: vec![4, 16, 64], mode: SyncMode::Async, ..SweepSpec::default() })
            .iter()
            .map(|r| r.thr_gbps),
    );
    for &s in &sat {
        check(s <= cap * (1.0 + 1e-9) && s >= 0.9 * cap, format!("saturation {s:.2} GB/s vs cap {cap}"))?;
    }
    Ok(format!("bs=32/bs=1 = {gain:.2}x; saturation {:?} GB/s", sat.iter().map(|s| format!("{s:.2}")).collect::<Vec<_>>()))
}

fn wq_size_criterion() -> Outcome {
    let mut thr = Vec::new();
    for size in [1u32, 8, 32, 128] {
        let r = sweep(SweepSpec { transfer_sizes: vec![1024], mode: SyncMode::Async, wq_size: size, ..SweepSpec::default() });
        thr.push(r[0].thr_gbps);
    }
    check(thr.windows(2).all(|w| w[1] >= w[0]), format!("{thr:?}"))?;
    Ok(format!("WQ size 1/8/32/128: {thr:.2?} GB/s"))
}

fn engines_criterion() -> Outcome {
    let run = |n, ts, p| {
        sweep(SweepSpec { transfer_sizes: vec![ts], mode: SyncMode::Async, n_engines: n, fault_p: p, ..SweepSpec::default() })[0].thr_gbps
    };
    let (f1, f4) = (run(1, 1024, 0.1), run(4, 1024, 0.1));
    check(f4 >= 2.0 * f1, format!("faulty: 4 PEs {f4:.2} vs 1 PE {f1:.2}"))?;
    let (c1, c4) = (run(1, 64 << 10, 0.0), run(4, 64 << 10, 0.0));
    check((c4 / c1 - 1.0).abs() <= 0.10, format!("clean: 4 PEs {c4:.2} vs 1 PE {c1:.2}"))?;
    Ok(format!("p=0.1 1 KiB: {f1:.2} -> {f4:.2} GB/s; p=0 64 KiB: {c1:.2} vs {c4:.2} GB/s"))
}

fn devices_criterion() -> Outcome {
    let run = |n| {
        sweep(SweepSpec { transfer_sizes: vec![4096], batch_sizes: vec![4], mode: SyncMode::Async, n_devices: n, ..SweepSpec::default() })[0]
            .thr_gbps
    };
    let socket = PlatformConfig::single(DeviceConfig::default()).socket_bw;
    let (one, two, four) = (run(1), run(2), run(4));
    check(2.0 * one < socket, "two devices are not below the socket cap")?;
    check(two >= 1.9 * one, format!("2 devices {two:.2} vs 1 device {one:.2}"))?;
    check(four <= socket * (1.0 + 1e-9), format!("4 devices {four:.2} above socket {socket}"))?;
    Ok(format!("1/2/4 devices: {one:.2} / {two:.2} / {four:.2} GB/s, socket {socket}"))
}

fn vring_order_criterion() -> Outcome {
    let mut cfg = PlatformConfig::single(DeviceConfig::default());
    cfg.device.fault.stall_probability = 0.3;
    cfg.device.fault.t_fault = 3000.0;
    cfg.seed = 11;
    let dev = Device::with_platform(cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let packet = |seq: u32, rng: &mut ChaCha8Rng| {
        let mut p = seq.to_le_bytes().to_vec();
        p.extend((0..rng.gen_range(0..200)).map(|_| rng.gen::<u8>()));
        p
    };

    // Host to guest.
    let mut rx = Virtqueue::new(&dev, Direction::Rx, 256, 256).unwrap();
    let mut portal = Portal::open(&dev, 0, 0).unwrap();
    let (mut sent, mut got) = (Vec::new(), Vec::new());
    let mut seq = 0u32;
    for _ in 0..1000 {
        let burst: Vec<_> = (0..32).map(|i| packet(seq + i, &mut rng)).collect();
        let n = rx.enqueue_burst(&PacketBurst::new(burst.clone()), &mut portal).map_err(|e| e.to_string())?;
        sent.extend_from_slice(&burst[..n]);
        seq += n as u32;
        portal.advance_clock(rng.gen_range(0.0..4000.0));
        got.extend(rx.guest_receive().unwrap());
    }
    rx.flush(&mut portal).map_err(|e| e.to_string())?;
    got.extend(rx.guest_receive().unwrap());
    check(got == sent, "rx used ring out of avail order or payload changed")?;

    // Guest to host.
    let mut tx = Virtqueue::new(&dev, Direction::Tx, 256, 256).unwrap();
    let (mut sent_tx, mut got_tx) = (Vec::new(), Vec::new());
    for b in 0..1000u32 {
        for i in 0..32 {
            let p = packet(b * 32 + i, &mut rng);
            if tx.guest_send(&p).is_ok() {
                sent_tx.push(p);
            }
        }
        got_tx.extend(tx.dequeue_burst(&mut portal, 32).map_err(|e| e.to_string())?.packets);
        portal.advance_clock(rng.gen_range(0.0..4000.0));
    }
    while got_tx.len() < sent_tx.len() {
        dev.run_until_idle();
        portal.set_clock(portal.clock().max(dev.now()));
        got_tx.extend(tx.dequeue_burst(&mut portal, 32).map_err(|e| e.to_string())?.packets);
    }
    check(got_tx == sent_tx, "tx dequeue order or payload changed")?;
    let faults = dev.snapshot_telemetry()[0].faults_injected;
    check(faults > 0, "no latency randomization happened")?;
    Ok(format!("rx {} and tx {} packets in order, {faults} injected stalls", sent.len(), sent_tx.len()))
}

fn vring_rate_criterion() -> Outcome {
    let cfg = ForwardConfig { packet_sizes: vec![256, 512, 1024, 1518], duration_ns: 1_000_000.0, ..ForwardConfig::default() };
    let rows = forward_benchmark(&cfg).map_err(|e| e.to_string())?;
    let rate = |m: ForwardMode, s: u32| rows.iter().find(|r| r.mode == m && r.packet_size == s).unwrap().mpps;
    let dsa: Vec<f64> = cfg.packet_sizes.iter().map(|&s| rate(ForwardMode::DsaOffload, s)).collect();
    let (lo, hi) = dsa.iter().fold((f64::MAX, 0.0f64), |(l, h), &x| (l.min(x), h.max(x)));
    check(hi / lo - 1.0 <= 0.10, format!("offload varies {:.1}%", (hi / lo - 1.0) * 100.0))?;
    let drop = 1.0 - rate(ForwardMode::CpuCopy, 1024) / rate(ForwardMode::CpuCopy, 256);
    check(drop >= 0.30, format!("cpu drop {:.1}%", drop * 100.0))?;
    let gain = rate(ForwardMode::DsaOffload, 512) / rate(ForwardMode::CpuCopy, 512);
    check(gain >= 1.14, format!("offload/cpu at 512 B = {gain:.2}"))?;
    Ok(format!("offload spread {:.1}%, cpu drop {:.1}%, 512 B gain {gain:.2}x", (hi / lo - 1.0) * 100.0, drop * 100.0))
}

fn determinism_criterion() -> Outcome {
    let spec = SweepSpec {
        transfer_sizes: vec![256, 4096],
        batch_sizes: vec![1, 8],
        mode: SyncMode::Async,
        wq_mode: WqMode::Shared,
        threads: Some(6),
        n_devices: 2,
        fault_p: 0.2,
        seed: 42,
        ..SweepSpec::default()
    };
    let a = harness::csv_string(&sweep(spec.clone())).unwrap();
    let b = harness::csv_string(&sweep(spec)).unwrap();
    check(a == b, "CSV differs between reruns")?;
    Ok(format!("{} bytes identical", a.len()))
}

fn wait_criterion() -> Outcome {
    let big = sweep(SweepSpec { transfer_sizes: vec![4096, 16 << 10, 64 << 10], ..SweepSpec::default() });
    for r in &big {
        check(r.wait_frac > 0.5, format!("ts={} wait_frac {:.3}", r.ts, r.wait_frac))?;
    }
    let batched =
        sweep(SweepSpec { transfer_sizes: (6..=16).step_by(2).map(|k| 1u64 << k).collect(), batch_sizes: vec![128], iterations: 16, ..SweepSpec::default() });
    for r in &batched {
        check(r.wait_frac > 0.9, format!("bs=128 ts={} wait_frac {:.3}", r.ts, r.wait_frac))?;
    }
    let min = batched.iter().map(|r| r.wait_frac).fold(1.0, f64::min);
    Ok(format!("sync >=4 KiB min {:.3}; bs=128 min {min:.3}", big.iter().map(|r| r.wait_frac).fold(1.0, f64::min)))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 14] = [
        ("CRC-32C check vector and chaining", crc32c_criterion),
        ("CRC-16/T10-DIF vector and DIF round trips", dif_criterion),
        ("delta create/apply round trip and overflow rule", delta_criterion),
        ("SWQ linearizability under 16 submitters", swq_criterion),
        ("arbiter 3:1 fairness and starvation bound", arbiter_criterion),
        ("speedup crossings, sync and async", speedup_criterion),
        ("batching gain and fabric saturation", batching_criterion),
        ("throughput monotone in WQ size", wq_size_criterion),
        ("engine scaling with and without faults", engines_criterion),
        ("multi-device scaling and socket cap", devices_criterion),
        ("virtqueue in-order write-back", vring_order_criterion),
        ("virtqueue forwarding rates", vring_rate_criterion),
        ("sweep determinism", determinism_criterion),
        ("wait-state fraction", wait_criterion),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let res = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match res {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} ({secs:.1}s)", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why} ({secs:.1}s)", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
