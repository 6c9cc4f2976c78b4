use std::io::Write;

/// One parameter update, averaged over its accumulated samples.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// 1-based update index.
    pub step: usize,
    pub lr: f64,
    pub l_dose: f64,
    pub l_mtp: f64,
    pub l_total: f64,
    /// Mean `d- - d+` per decoder scale (deepest first); `None` when the scale has no margin patch.
    pub separations: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub records: Vec<StepRecord>,
    /// Wall-clock seconds per epoch. Kept out of the step CSV so that file is reproducible.
    pub epoch_seconds: Vec<f64>,
    /// Mean validation `L_dose` after each epoch, when a validation set is given.
    pub val_l_dose: Vec<f64>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl TrainLog {
    pub fn num_scales(&self) -> usize {
        self.records.first().map_or(0, |r| r.separations.len())
    }

    /// `step,lr,l_dose,l_mtp,l_total,sep_scale1..sep_scaleR`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        let mut header: Vec<String> = ["step", "lr", "l_dose", "l_mtp", "l_total"].map(String::from).to_vec();
        header.extend((1..=self.num_scales()).map(|r| format!("sep_scale{r}")));
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![
                r.step.to_string(),
                r.lr.to_string(),
                r.l_dose.to_string(),
                r.l_mtp.to_string(),
                r.l_total.to_string(),
            ];
            row.extend(r.separations.iter().map(|&s| fmt_opt(s)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// `epoch,seconds,val_l_dose`.
    pub fn write_epoch_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["epoch", "seconds", "val_l_dose"])?;
        for (i, s) in self.epoch_seconds.iter().enumerate() {
            w.write_record([
                (i + 1).to_string(),
                format!("{s:.3}"),
                fmt_opt(self.val_l_dose.get(i).copied()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Mean of `field` over the first (or last) `n` records.
    pub fn window_mean(&self, n: usize, from_end: bool, field: impl Fn(&StepRecord) -> f64) -> f64 {
        let n = n.min(self.records.len());
        let slice = if from_end {
            &self.records[self.records.len() - n..]
        } else {
            &self.records[..n]
        };
        slice.iter().map(field).sum::<f64>() / n as f64
    }
}
