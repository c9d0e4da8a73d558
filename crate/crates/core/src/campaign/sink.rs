use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Seek, SeekFrom, Write};
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use super::rows::Row;
use super::state::CampaignState;
use super::{CampaignError, OutputFormat};

/// Called after each checkpoint's rows are on disk and before the state
/// file records them. `Break` stops the campaign there, as a crash would.
pub type CheckpointHook<'a> = &'a mut dyn FnMut(&CampaignState) -> ControlFlow<()>;

/// Writes results in input order and checkpoints the campaign state.
pub struct OrderedSink<'a> {
    out: BufWriter<File>,
    out_path: PathBuf,
    format: OutputFormat,
    state: CampaignState,
    state_dir: PathBuf,
    pending: BTreeMap<u64, Option<Vec<u8>>>,
    next: u64,
    since_checkpoint: u64,
    checkpoint_every: u64,
    hook: Option<CheckpointHook<'a>>,
    pub emitted: u64,
    pub skipped: u64,
    stopped: bool,
}

impl<'a> OrderedSink<'a> {
    /// Opens the output for `state`: created with a header for a fresh
    /// campaign, cut back to the checkpointed length when resuming.
    pub fn open<R: Row>(
        state: CampaignState,
        state_dir: &Path,
        checkpoint_every: u64,
        hook: Option<CheckpointHook<'a>>,
    ) -> Result<OrderedSink<'a>, CampaignError> {
        let path = state.output.clone();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| CampaignError::io(dir, e))?;
        }
        let fresh = state.output_offset == 0 && state.cursor == 0;
        let mut file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(fresh)
            .open(&path)
            .map_err(|e| CampaignError::io(&path, e))?;
        if !fresh {
            let len = file.metadata().map_err(|e| CampaignError::io(&path, e))?.len();
            if len < state.output_offset {
                return Err(CampaignError::io(&path, std::io::Error::other("output shorter than its checkpoint")));
            }
            file.set_len(state.output_offset).map_err(|e| CampaignError::io(&path, e))?;
        }
        file.seek(SeekFrom::End(0)).map_err(|e| CampaignError::io(&path, e))?;
        let mut out = BufWriter::new(file);
        if fresh && state.format == OutputFormat::Csv {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(R::HEADER).map_err(|e| CampaignError::io(&path, e.into()))?;
            out.write_all(&w.into_inner().expect("vec writer")).map_err(|e| CampaignError::io(&path, e))?;
        }
        let next = state.cursor;
        let format = state.format;
        let mut sink = OrderedSink {
            out,
            out_path: path,
            format,
            state,
            state_dir: state_dir.to_path_buf(),
            pending: BTreeMap::new(),
            next,
            since_checkpoint: 0,
            checkpoint_every: checkpoint_every.max(1),
            hook,
            emitted: 0,
            skipped: 0,
            stopped: false,
        };
        // the starting point is recorded without consulting the hook, so a
        // campaign that dies before its first checkpoint can still resume
        sink.sync_and_save(false)?;
        Ok(sink)
    }

    pub fn encode<R: Row>(&self, row: &R) -> Vec<u8> {
        match self.format {
            OutputFormat::Jsonl => {
                let mut v = serde_json::to_vec(row).expect("row serializes");
                v.push(b'\n');
                v
            }
            OutputFormat::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(row.csv_fields()).expect("csv to memory");
                w.into_inner().expect("vec writer")
            }
        }
    }

    pub fn is_stopped(&self) -> bool {
        self.stopped
    }

    pub fn cursor(&self) -> u64 {
        self.next
    }

    /// Records the outcome of input item `index`; `None` means the item
    /// produces no output line (unparsable, blocklisted, duplicate).
    pub fn push(&mut self, index: u64, line: Option<Vec<u8>>) -> Result<(), CampaignError> {
        if self.stopped {
            return Ok(());
        }
        debug_assert!(index >= self.next, "item {index} already emitted");
        self.pending.insert(index, line);
        while let Some(line) = self.pending.remove(&self.next) {
            match line {
                Some(bytes) => {
                    self.out.write_all(&bytes).map_err(|e| CampaignError::io(&self.out_path, e))?;
                    self.emitted += 1;
                }
                None => self.skipped += 1,
            }
            self.next += 1;
            self.since_checkpoint += 1;
            if self.since_checkpoint >= self.checkpoint_every {
                self.checkpoint()?;
                if self.stopped {
                    return Ok(());
                }
            }
        }
        Ok(())
    }

    fn sync_and_save(&mut self, notify: bool) -> Result<(), CampaignError> {
        self.out.flush().map_err(|e| CampaignError::io(&self.out_path, e))?;
        let f = self.out.get_mut();
        f.sync_data().map_err(|e| CampaignError::io(&self.out_path, e))?;
        let offset = f.stream_position().map_err(|e| CampaignError::io(&self.out_path, e))?;
        if let Some(hook) = self.hook.as_mut().filter(|_| notify) {
            if hook(&self.state).is_break() {
                self.stopped = true;
                return Ok(());
            }
        }
        self.state.cursor = self.next;
        self.state.output_offset = offset;
        self.state.save(&self.state_dir)
    }

    pub fn checkpoint(&mut self) -> Result<(), CampaignError> {
        self.since_checkpoint = 0;
        self.sync_and_save(true)
    }

    /// Final checkpoint; marks the campaign done unless it was stopped.
    pub fn finish(mut self) -> Result<CampaignState, CampaignError> {
        if self.stopped {
            return Err(CampaignError::Interrupted(self.state.id.clone()));
        }
        debug_assert!(self.pending.is_empty(), "results missing for items from {}", self.next);
        self.state.done = true;
        self.checkpoint()?;
        if self.stopped {
            return Err(CampaignError::Interrupted(self.state.id.clone()));
        }
        Ok(self.state)
    }
}
