use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent stream for replica `index` under `master`: the ChaCha key is
/// derived from the master seed and the replica index selects the stream, so
/// a replica's draws do not depend on which worker runs it.
pub fn replica_rng(master: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng
}
