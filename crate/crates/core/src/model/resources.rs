use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Rational;

/// CPU (sum of per-core utilizations), disk and memory in megabytes.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BasicResources {
    #[serde(default)]
    pub cpu_utilization: Rational,
    #[serde(default)]
    pub disk: u64,
    #[serde(default)]
    pub mem: u64,
}

impl BasicResources {
    pub fn new(cpu_utilization: Rational, disk: u64, mem: u64) -> Self {
        BasicResources { cpu_utilization, disk, mem }
    }

    /// `self + extra <= capacity` componentwise.
    pub fn fits_with(&self, extra: &BasicResources, capacity: &BasicResources) -> bool {
        self.cpu_utilization + extra.cpu_utilization <= capacity.cpu_utilization
            && self.disk.saturating_add(extra.disk) <= capacity.disk
            && self.mem.saturating_add(extra.mem) <= capacity.mem
    }

    pub fn le(&self, capacity: &BasicResources) -> bool {
        BasicResources::default().fits_with(self, capacity)
    }

    pub fn add(&mut self, other: &BasicResources) {
        self.cpu_utilization += other.cpu_utilization;
        self.disk += other.disk;
        self.mem += other.mem;
    }

    /// Componentwise subtraction; panics if `other` was never added.
    pub fn sub(&mut self, other: &BasicResources) {
        assert!(other.le(self), "releasing more than allocated");
        self.cpu_utilization -= other.cpu_utilization;
        self.disk -= other.disk;
        self.mem -= other.mem;
    }
}

/// Exclusive, unit-counted heterogeneous devices.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AdditionalResources {
    #[serde(default)]
    pub sensors: BTreeMap<String, u32>,
    #[serde(default)]
    pub actuators: BTreeMap<String, u32>,
    #[serde(default)]
    pub gpu: u32,
    #[serde(default)]
    pub fpga: u32,
}

fn bag_fits(used: &BTreeMap<String, u32>, extra: &BTreeMap<String, u32>, cap: &BTreeMap<String, u32>) -> bool {
    extra.iter().all(|(k, &n)| {
        let u = used.get(k).copied().unwrap_or(0);
        let c = cap.get(k).copied().unwrap_or(0);
        u.saturating_add(n) <= c
    })
}

fn bag_add(into: &mut BTreeMap<String, u32>, extra: &BTreeMap<String, u32>) {
    for (k, &n) in extra {
        if n > 0 {
            *into.entry(k.clone()).or_insert(0) += n;
        }
    }
}

fn bag_sub(from: &mut BTreeMap<String, u32>, extra: &BTreeMap<String, u32>) {
    for (k, &n) in extra {
        if n == 0 {
            continue;
        }
        let slot = from.get_mut(k).expect("releasing unheld device");
        *slot -= n;
        if *slot == 0 {
            from.remove(k);
        }
    }
}

impl AdditionalResources {
    pub fn is_empty(&self) -> bool {
        self.gpu == 0
            && self.fpga == 0
            && self.sensors.values().all(|&n| n == 0)
            && self.actuators.values().all(|&n| n == 0)
    }

    pub fn fits_with(&self, extra: &AdditionalResources, capacity: &AdditionalResources) -> bool {
        bag_fits(&self.sensors, &extra.sensors, &capacity.sensors)
            && bag_fits(&self.actuators, &extra.actuators, &capacity.actuators)
            && self.gpu.saturating_add(extra.gpu) <= capacity.gpu
            && self.fpga.saturating_add(extra.fpga) <= capacity.fpga
    }

    pub fn le(&self, capacity: &AdditionalResources) -> bool {
        AdditionalResources::default().fits_with(self, capacity)
    }

    pub fn add(&mut self, other: &AdditionalResources) {
        bag_add(&mut self.sensors, &other.sensors);
        bag_add(&mut self.actuators, &other.actuators);
        self.gpu += other.gpu;
        self.fpga += other.fpga;
    }

    pub fn sub(&mut self, other: &AdditionalResources) {
        bag_sub(&mut self.sensors, &other.sensors);
        bag_sub(&mut self.actuators, &other.actuators);
        self.gpu -= other.gpu;
        self.fpga -= other.fpga;
    }
}
