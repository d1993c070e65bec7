use serde::{Deserialize, Serialize};

use super::NetError;
use crate::model::{JobId, Micros, NetworkId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub job: JobId,
    pub offset: Micros,
    pub length: Micros,
    pub period: Micros,
}

/// TDMA major frame with the repeating slots granted so far.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotTable {
    pub network: NetworkId,
    pub major_frame: Micros,
    pub tick: Micros,
    pub slots: Vec<Slot>,
}

impl SlotTable {
    pub fn new(network: &str, major_frame: Micros, tick: Micros) -> Self {
        assert!(tick > 0 && major_frame.is_multiple_of(tick), "tick must divide the major frame");
        SlotTable { network: network.to_string(), major_frame, tick, slots: Vec::new() }
    }

    fn check_request(&self, length: Micros, period: Micros) -> Result<(), NetError> {
        if period == 0 || !self.major_frame.is_multiple_of(period) {
            return Err(NetError::BadPeriod { period, major_frame: self.major_frame });
        }
        if length == 0 || length > period || !length.is_multiple_of(self.tick) || !period.is_multiple_of(self.tick) {
            return Err(NetError::BadSlotRequest { length, period, tick: self.tick });
        }
        Ok(())
    }

    /// Tick cells occupied by the current slots over one major frame.
    fn occupancy(&self) -> Vec<bool> {
        let mut busy = vec![false; (self.major_frame / self.tick) as usize];
        for s in &self.slots {
            let mut start = s.offset;
            while start < self.major_frame {
                let a = (start / self.tick) as usize;
                let b = ((start + s.length) / self.tick) as usize;
                busy[a..b].iter_mut().for_each(|c| *c = true);
                start += s.period;
            }
        }
        busy
    }

    /// Smallest tick-aligned offset whose instances collide with nothing.
    pub fn find_offset(&self, length: Micros, period: Micros) -> Result<Micros, NetError> {
        self.check_request(length, period)?;
        let busy = self.occupancy();
        let tick = self.tick;
        let cells = (length / tick) as usize;
        let mut offset = 0;
        while offset + length <= period {
            let free = (0..self.major_frame / period).all(|k| {
                let a = ((offset + k * period) / tick) as usize;
                busy[a..a + cells].iter().all(|c| !c)
            });
            if free {
                return Ok(offset);
            }
            offset += tick;
        }
        Err(NetError::Infeasible)
    }

    pub fn allocate(&mut self, job: &str, length: Micros, period: Micros) -> Result<Micros, NetError> {
        let offset = self.find_offset(length, period)?;
        self.slots.push(Slot { job: job.to_string(), offset, length, period });
        Ok(offset)
    }

    /// Removes every slot held by `job`.
    pub fn release(&mut self, job: &str) -> Result<Vec<Slot>, NetError> {
        let (gone, kept): (Vec<Slot>, Vec<Slot>) = std::mem::take(&mut self.slots).into_iter().partition(|s| s.job == job);
        self.slots = kept;
        if gone.is_empty() {
            return Err(NetError::UnknownJob(job.to_string()));
        }
        Ok(gone)
    }

    /// All `[start, end)` instances inside the major frame, tagged with the
    /// index of their slot.
    pub fn instances(&self) -> Vec<(Micros, Micros, usize)> {
        let mut out = Vec::new();
        for (i, s) in self.slots.iter().enumerate() {
            let mut start = s.offset;
            while start < self.major_frame {
                out.push((start, start + s.length, i));
                start += s.period;
            }
        }
        out.sort_unstable();
        out
    }
}
