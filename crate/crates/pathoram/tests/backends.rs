use std::fs;

use pathoram::backend::{AnyStore, BackendKind};
use pathoram::core::{BucketStore, DebugHook, OramClient, SecretKey, StoreParams, TreeGeometry};
use pathoram::harness::{self, ExperimentConfig, WorkloadKind};
use pathoram::{file_store, state_file};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

#[test]
fn session_resumes_from_state_and_tree_files() {
    let dir = tempfile::tempdir().unwrap();
    let geometry = TreeGeometry::new(5, 4, 24, 32).unwrap();
    let params = StoreParams::new(geometry, true);
    let key = SecretKey::from_bytes([9; 32]);
    let tree = dir.path().join("t.tree");
    let state = dir.path().join("client.state");

    let mut oracle = vec![vec![0u8; 24]; 32];
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    {
        let store = file_store::create(&tree, params).unwrap();
        let mut c =
            OramClient::format(geometry, &key, store, true, ChaCha20Rng::seed_from_u64(2)).unwrap();
        for _ in 0..300 {
            let id = rng.next_u64() % 32;
            let data = vec![rng.next_u32() as u8; 24];
            c.write(id, data.clone()).unwrap();
            oracle[id as usize] = data;
        }
        state_file::save(&state, &c.export_state().unwrap()).unwrap();
    }

    let store = file_store::open(&tree).unwrap();
    let restored = state_file::load(&state).unwrap();
    let mut c = OramClient::resume(restored, &key, store, ChaCha20Rng::seed_from_u64(3)).unwrap();
    for (id, expected) in oracle.iter().enumerate() {
        assert_eq!(c.read(id as u64).unwrap().as_bytes(), &expected[..]);
    }
}

#[test]
fn resuming_against_a_stale_tree_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let geometry = TreeGeometry::new(4, 4, 8, 16).unwrap();
    let params = StoreParams::new(geometry, true);
    let key = SecretKey::from_bytes([4; 32]);
    let tree = dir.path().join("t.tree");
    let store = file_store::create(&tree, params).unwrap();
    let mut c =
        OramClient::format(geometry, &key, store, true, ChaCha20Rng::seed_from_u64(2)).unwrap();
    for id in 0..16 {
        c.write(id, vec![1; 8]).unwrap();
    }
    drop(c);
    let old_tree = fs::read(&tree).unwrap();
    let store = file_store::open(&tree).unwrap();
    let mut c =
        OramClient::format(geometry, &key, store, true, ChaCha20Rng::seed_from_u64(2)).unwrap();
    for id in 0..16 {
        c.write(id, vec![2; 8]).unwrap();
    }
    let state = c.export_state().unwrap();
    drop(c);
    fs::write(&tree, old_tree).unwrap();

    let store = file_store::open(&tree).unwrap();
    let mut c = OramClient::resume(state, &key, store, ChaCha20Rng::seed_from_u64(5)).unwrap();
    assert!(c.read(0).is_err());
}

fn sweep(backend: BackendKind, out: &std::path::Path) -> Vec<pathoram::harness::CellResult> {
    let config = ExperimentConfig {
        bucket_sizes: vec![2, 4],
        heights: vec![4],
        accesses: 400,
        block_size: 16,
        workload: WorkloadKind::Uniform,
        seed: 77,
        integrity: true,
        backend,
        output: out.into(),
        ..ExperimentConfig::default()
    };
    harness::run_stash_experiment(&config).unwrap()
}

#[test]
fn backends_are_interchangeable() {
    let dir = tempfile::tempdir().unwrap();
    let kinds = [
        BackendKind::Memory,
        BackendKind::File(dir.path().join("trees")),
        BackendKind::Loopback,
    ];
    let mut runs = Vec::new();
    for (i, kind) in kinds.into_iter().enumerate() {
        let out = dir.path().join(format!("out{i}"));
        let cells = sweep(kind, &out);
        let csvs: Vec<Vec<u8>> = cells
            .iter()
            .map(|c| {
                fs::read(harness::csv_path(&out, c.trace.bucket_size, c.trace.height)).unwrap()
            })
            .collect();
        let states: Vec<Vec<u8>> = cells
            .iter()
            .map(|c| state_file::encode(c.state.as_ref().unwrap()))
            .collect();
        runs.push((csvs, states));
    }
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], runs[2]);
}

#[test]
fn file_tree_matches_memory_tree() {
    let dir = tempfile::tempdir().unwrap();
    let geometry = TreeGeometry::new(5, 3, 16, 32).unwrap();
    let params = StoreParams::new(geometry, true);
    let key = SecretKey::from_bytes([2; 32]);
    let run = |store: AnyStore| {
        let mut c =
            OramClient::format(geometry, &key, store, true, ChaCha20Rng::seed_from_u64(6)).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for _ in 0..300 {
            c.write(rng.next_u64() % 32, vec![rng.next_u32() as u8; 16])
                .unwrap();
        }
        let mut store = c.into_store();
        assert_eq!(store.params(), params);
        store.debug_snapshot().unwrap()
    };
    let memory = run(AnyStore::memory(params));
    let file = run(AnyStore::open(&BackendKind::File(dir.path().into()), params, "x").unwrap());
    assert_eq!(memory, file);
}
