//! Multichannel series and epoch sets.

use crate::container::{self, ContainerHeader};
use crate::error::{Result, ScdmError};
use std::path::Path;

/// Left / right motor imagery class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MiLabel {
    Lmi,
    Rmi,
}

impl MiLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            MiLabel::Lmi => "LMI",
            MiLabel::Rmi => "RMI",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "LMI" => Ok(MiLabel::Lmi),
            "RMI" => Ok(MiLabel::Rmi),
            other => Err(ScdmError::invalid(format!("unknown label {other:?}"))),
        }
    }
}

/// Labeled channels x time samples at a single sampling rate.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelSeries {
    pub channel_labels: Vec<String>,
    pub sample_rate: f64,
    data: Vec<f64>, // row-major channels x samples
    n_samples: usize,
}

impl MultichannelSeries {
    pub fn new(
        channel_labels: Vec<String>,
        sample_rate: f64,
        data: Vec<f64>,
        n_samples: usize,
    ) -> Result<Self> {
        if sample_rate <= 0.0 {
            return Err(ScdmError::invalid("sample_rate must be positive"));
        }
        if channel_labels.len() * n_samples != data.len() {
            return Err(ScdmError::shape(format!(
                "{} labels x {} samples != {} data values",
                channel_labels.len(),
                n_samples,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(ScdmError::NonFinite("series data".into()));
        }
        Ok(MultichannelSeries {
            channel_labels,
            sample_rate,
            data,
            n_samples,
        })
    }

    pub fn zeros(channel_labels: Vec<String>, sample_rate: f64, n_samples: usize) -> Self {
        let data = vec![0.0; channel_labels.len() * n_samples];
        MultichannelSeries {
            channel_labels,
            sample_rate,
            data,
            n_samples,
        }
    }

    pub fn n_channels(&self) -> usize {
        self.channel_labels.len()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_samples..(i + 1) * self.n_samples]
    }

    pub fn channel_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n_samples..(i + 1) * self.n_samples]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Replace the payload, keeping labels and rate. Length may change.
    pub fn with_data(&self, data: Vec<f64>, n_samples: usize, sample_rate: f64) -> Result<Self> {
        MultichannelSeries::new(self.channel_labels.clone(), sample_rate, data, n_samples)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let header = ContainerHeader {
            sample_rate: Some(self.sample_rate),
            channel_labels: Some(self.channel_labels.clone()),
            ..ContainerHeader::new(vec![self.n_channels(), self.n_samples])
        };
        container::write_file(path, &header, &self.data)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (header, payload) = container::read_file(path)?;
        if header.dims.len() != 2 {
            return Err(ScdmError::Container(format!(
                "series container must be 2-D, got dims {:?}",
                header.dims
            )));
        }
        let labels = header
            .channel_labels
            .ok_or_else(|| ScdmError::Container("missing channel_labels".into()))?;
        if labels.len() != header.dims[0] {
            return Err(ScdmError::shape(format!(
                "header declares {} labels but payload has {} rows",
                labels.len(),
                header.dims[0]
            )));
        }
        let rate = header
            .sample_rate
            .ok_or_else(|| ScdmError::Container("missing sample_rate".into()))?;
        MultichannelSeries::new(labels, rate, payload, header.dims[1])
    }
}

/// Trials x channels x samples plus per-trial class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSet {
    pub channel_labels: Vec<String>,
    pub sample_rate: f64,
    pub labels: Vec<MiLabel>,
    data: Vec<f64>, // row-major trials x channels x samples
    n_channels: usize,
    n_samples: usize,
}

impl EpochSet {
    pub fn new(
        channel_labels: Vec<String>,
        sample_rate: f64,
        labels: Vec<MiLabel>,
        data: Vec<f64>,
        n_samples: usize,
    ) -> Result<Self> {
        let n_channels = channel_labels.len();
        let per_trial = n_channels * n_samples;
        if per_trial == 0 || data.len() % per_trial != 0 {
            return Err(ScdmError::shape(format!(
                "data length {} is not a multiple of {} channels x {} samples",
                data.len(),
                n_channels,
                n_samples
            )));
        }
        let n_trials = data.len() / per_trial;
        if labels.len() != n_trials {
            return Err(ScdmError::shape(format!(
                "{} labels for {} trials",
                labels.len(),
                n_trials
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(ScdmError::NonFinite("epoch data".into()));
        }
        Ok(EpochSet {
            channel_labels,
            sample_rate,
            labels,
            data,
            n_channels,
            n_samples,
        })
    }

    pub fn n_trials(&self) -> usize {
        self.labels.len()
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn trial(&self, t: usize) -> &[f64] {
        let per = self.n_channels * self.n_samples;
        &self.data[t * per..(t + 1) * per]
    }

    pub fn trial_channel(&self, t: usize, c: usize) -> &[f64] {
        let base = (t * self.n_channels + c) * self.n_samples;
        &self.data[base..base + self.n_samples]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Subset of trials, preserving order.
    pub fn select_trials(&self, idx: &[usize]) -> Result<EpochSet> {
        let per = self.n_channels * self.n_samples;
        let mut data = Vec::with_capacity(idx.len() * per);
        let mut labels = Vec::with_capacity(idx.len());
        for &t in idx {
            if t >= self.n_trials() {
                return Err(ScdmError::invalid(format!("trial index {t} out of range")));
            }
            data.extend_from_slice(self.trial(t));
            labels.push(self.labels[t]);
        }
        EpochSet::new(
            self.channel_labels.clone(),
            self.sample_rate,
            labels,
            data,
            self.n_samples,
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let header = ContainerHeader {
            sample_rate: Some(self.sample_rate),
            channel_labels: Some(self.channel_labels.clone()),
            labels: Some(self.labels.iter().map(|l| l.as_str().to_string()).collect()),
            ..ContainerHeader::new(vec![self.n_trials(), self.n_channels, self.n_samples])
        };
        container::write_file(path, &header, &self.data)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (header, payload) = container::read_file(path)?;
        if header.dims.len() != 3 {
            return Err(ScdmError::Container(format!(
                "epoch container must be 3-D, got dims {:?}",
                header.dims
            )));
        }
        let ch_labels = header
            .channel_labels
            .ok_or_else(|| ScdmError::Container("missing channel_labels".into()))?;
        if ch_labels.len() != header.dims[1] {
            return Err(ScdmError::shape(format!(
                "header declares {} labels but payload has {} channel rows",
                ch_labels.len(),
                header.dims[1]
            )));
        }
        let rate = header
            .sample_rate
            .ok_or_else(|| ScdmError::Container("missing sample_rate".into()))?;
        let labels = header
            .labels
            .ok_or_else(|| ScdmError::Container("missing trial labels".into()))?
            .iter()
            .map(|s| MiLabel::parse(s))
            .collect::<Result<Vec<_>>>()?;
        EpochSet::new(ch_labels, rate, labels, payload, header.dims[2])
    }
}
