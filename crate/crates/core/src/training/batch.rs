use crate::error::{Error, Result};

/// A corpus split into `B` contiguous streams, read in windows of `T`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchPlan {
    streams: Vec<Vec<usize>>,
    bptt: usize,
}

/// One window: `inputs[s]` and `targets[s]` belong to stream `s`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub inputs: Vec<Vec<usize>>,
    pub targets: Vec<Vec<usize>>,
}

impl Batch {
    pub fn seq_len(&self) -> usize {
        self.inputs[0].len()
    }
}

/// Drops the tail that does not fill `B` equal streams and cuts the rest
/// column-major: stream `s` holds ids `[s L, (s + 1) L)`.
pub fn batchify(ids: &[usize], batch_size: usize, bptt: usize) -> Result<BatchPlan> {
    if batch_size == 0 || bptt == 0 {
        return Err(Error::config("batch size and bptt length must be positive"));
    }
    if ids.len() < 2 * batch_size {
        return Err(Error::Ingestion(format!(
            "corpus of {} tokens is too short for {batch_size} streams",
            ids.len()
        )));
    }
    let len = ids.len() / batch_size;
    let streams = ids
        .chunks_exact(len)
        .take(batch_size)
        .map(<[usize]>::to_vec)
        .collect();
    Ok(BatchPlan { streams, bptt })
}

impl BatchPlan {
    pub fn batch_size(&self) -> usize {
        self.streams.len()
    }

    pub fn bptt(&self) -> usize {
        self.bptt
    }

    pub fn stream_len(&self) -> usize {
        self.streams[0].len()
    }

    pub fn streams(&self) -> &[Vec<usize>] {
        &self.streams
    }

    pub fn num_batches(&self) -> usize {
        (self.stream_len() - 1).div_ceil(self.bptt)
    }

    /// Windows in order; the last one may be shorter than `T`.
    pub fn batches(&self) -> impl Iterator<Item = Batch> + '_ {
        let l = self.stream_len();
        (0..l - 1).step_by(self.bptt).map(move |i| {
            let seq = self.bptt.min(l - 1 - i);
            Batch {
                inputs: self
                    .streams
                    .iter()
                    .map(|s| s[i..i + seq].to_vec())
                    .collect(),
                targets: self
                    .streams
                    .iter()
                    .map(|s| s[i + 1..i + 1 + seq].to_vec())
                    .collect(),
            }
        })
    }
}
