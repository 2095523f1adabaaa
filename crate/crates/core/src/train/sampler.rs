//! Mini-batches for the Cox loss, which needs events in every batch.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// One epoch of batches.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EpochBatches {
    pub batches: Vec<Vec<usize>>,
    /// Batches that fell short of the event quota and had events drawn in.
    pub resampled: usize,
}

/// Shuffles patients into batches of at most `batch_size` so that every batch holds
/// at least `min_events` events (or every event, if there are fewer).
///
/// Events are dealt round-robin first, then censored patients fill the remaining
/// slots. A batch still short of the quota swaps censored members for events drawn
/// from the rest of the cohort; each such batch is counted in `resampled`.
pub fn event_stratified_batches<R: Rng + ?Sized>(
    events: &[bool],
    batch_size: usize,
    min_events: usize,
    rng: &mut R,
) -> Result<EpochBatches> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be ≥ 1".into()));
    }
    let (mut ev, mut cens): (Vec<usize>, Vec<usize>) = (0..events.len()).partition(|&i| events[i]);
    if ev.is_empty() {
        return Err(Error::UndefinedLoss("no events among the training patients".into()));
    }
    ev.shuffle(rng);
    cens.shuffle(rng);
    let n = events.len();
    let n_batches = n.div_ceil(batch_size);
    // Balanced sizes: the first `n % n_batches` batches take one extra patient.
    let base = n / n_batches;
    let extra = n % n_batches;
    let capacity: Vec<usize> = (0..n_batches).map(|b| base + usize::from(b < extra)).collect();

    let mut batches: Vec<Vec<usize>> = vec![Vec::with_capacity(batch_size); n_batches];
    let mut b = 0;
    for &i in &ev {
        while batches[b].len() >= capacity[b] {
            b = (b + 1) % n_batches;
        }
        batches[b].push(i);
        b = (b + 1) % n_batches;
    }
    let mut c = cens.into_iter();
    for (batch, &cap) in batches.iter_mut().zip(&capacity) {
        batch.extend(c.by_ref().take(cap - batch.len()));
    }

    let quota = min_events.min(ev.len()).min(batch_size);
    let mut resampled = 0;
    for batch in &mut batches {
        let have = batch.iter().filter(|&&i| events[i]).count();
        if have >= quota {
            continue;
        }
        resampled += 1;
        let mut pool: Vec<usize> = ev.iter().copied().filter(|i| !batch.contains(i)).collect();
        pool.shuffle(rng);
        let mut pool = pool.into_iter();
        for _ in have..quota {
            let Some(e) = pool.next() else { break };
            match batch.iter().position(|&i| !events[i]) {
                Some(slot) => batch[slot] = e,
                None => batch.push(e),
            }
        }
    }
    Ok(EpochBatches { batches, resampled })
}
