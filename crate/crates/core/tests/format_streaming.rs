//! Full-scale ensemble files stream through a bounded amount of heap.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicUsize, Ordering};

use zeno_drag::format::{EnsembleHeader, EnsembleReader, EnsembleWriter};
use zeno_drag::sme::simulate_trajectory;
use zeno_drag::{ExperimentConfig, QubitState};

struct Counting;

static LIVE: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = unsafe { System.alloc(layout) };
        if !p.is_null() {
            let now = LIVE.fetch_add(layout.size(), Ordering::SeqCst) + layout.size();
            PEAK.fetch_max(now, Ordering::SeqCst);
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) };
        LIVE.fetch_sub(layout.size(), Ordering::SeqCst);
    }
}

#[global_allocator]
static ALLOC: Counting = Counting;

#[test]
fn twenty_thousand_records_stream_in_bounded_memory() {
    let frames = 20_000;
    let config = ExperimentConfig { seed: 8, ..ExperimentConfig::reference_defaults(50e3, 5e-6) };
    let header = EnsembleHeader::new(&config, frames, 10);
    assert_eq!(header.record_len, 500);
    let file = tempfile::NamedTempFile::new().unwrap();

    let base = LIVE.load(Ordering::SeqCst);
    PEAK.store(base, Ordering::SeqCst);
    let mut w = EnsembleWriter::create(file.path(), header.clone()).unwrap();
    let mut record = vec![0.0; header.record_len];
    let mut states = vec![QubitState::MIXED; header.state_rows];
    for i in 0..frames {
        record.iter_mut().enumerate().for_each(|(k, v)| *v = (i * 7 + k) as f64 * 1e-3);
        states
            .iter_mut()
            .enumerate()
            .for_each(|(k, s)| *s = QubitState::new(0.0, (k as f64 / 51.0) - 0.5, 1e-3 * i as f64 / frames as f64));
        w.write_frame(&record, &states).unwrap();
    }
    w.finish().unwrap();
    let write_peak = PEAK.load(Ordering::SeqCst) - base;

    let size = std::fs::metadata(file.path()).unwrap().len() as usize;
    assert!(size > 80_000_000);

    PEAK.store(LIVE.load(Ordering::SeqCst), Ordering::SeqCst);
    let base = LIVE.load(Ordering::SeqCst);
    let mut count = 0;
    let mut checksum = 0.0;
    for frame in EnsembleReader::open(file.path()).unwrap() {
        let frame = frame.unwrap();
        checksum += frame.record[499];
        count += 1;
    }
    let read_peak = PEAK.load(Ordering::SeqCst) - base;
    assert_eq!(count, frames);
    let expect: f64 = (0..frames).map(|i| (i * 7 + 499) as f64 * 1e-3).sum();
    assert!((checksum - expect).abs() < 1e-6 * expect);
    // a handful of frame buffers, not the 80 MB payload
    assert!(write_peak < 2_000_000, "writer peak {write_peak} bytes");
    assert!(read_peak < 2_000_000, "reader peak {read_peak} bytes");
}

#[test]
fn five_microsecond_trajectory_round_trips_through_a_file() {
    let config = ExperimentConfig { seed: 2, ..ExperimentConfig::reference_defaults(40e3, 5e-6) };
    let t = simulate_trajectory(&config).unwrap();
    let file = tempfile::NamedTempFile::new().unwrap();
    zeno_drag::format::write_ensemble(file.path(), EnsembleHeader::new(&config, 1, 1), std::slice::from_ref(&t))
        .unwrap();
    let (header, back) = zeno_drag::format::read_ensemble(file.path()).unwrap();
    assert_eq!(header.config, config);
    assert_eq!(back[0].states, t.states);
    assert_eq!(back[0].times, t.times);
    assert_eq!(back[0].record, t.record);
}
