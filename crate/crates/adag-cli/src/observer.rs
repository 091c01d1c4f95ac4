//! Training observer that writes `training_log.csv` and checkpoints the
//! model after every outer iteration.

use std::io::Write;
use std::path::PathBuf;

use adag_core::trainer::{OuterRecord, StepRecord, TrainObserver, TrainState};

pub struct RunLogger {
    csv: std::io::BufWriter<std::fs::File>,
    log_every: usize,
    out_dir: PathBuf,
    pub io_error: Option<std::io::Error>,
}

impl RunLogger {
    pub fn create(out_dir: PathBuf, log_every: usize) -> std::io::Result<RunLogger> {
        std::fs::create_dir_all(&out_dir)?;
        let mut csv = std::io::BufWriter::new(std::fs::File::create(
            out_dir.join("training_log.csv"),
        )?);
        write!(csv, "outer_iter,epoch,step,lr,objective,mean_h,alpha,rho\n")?;
        Ok(RunLogger {
            csv,
            log_every: log_every.max(1),
            out_dir,
            io_error: None,
        })
    }

    fn try_write(&mut self, line: String) {
        if self.io_error.is_some() {
            return;
        }
        if let Err(e) = self.csv.write_all(line.as_bytes()) {
            self.io_error = Some(e);
        }
    }

    pub fn finish(mut self) -> std::io::Result<()> {
        self.csv.flush()?;
        match self.io_error {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

impl TrainObserver for RunLogger {
    fn on_step(&mut self, r: &StepRecord) {
        if r.step % self.log_every != 0 {
            return;
        }
        self.try_write(format!(
            "{},{},{},{},{},{},{},{}\n",
            r.outer_iter, r.epoch, r.step, r.lr, r.objective, r.mean_h, r.alpha, r.rho
        ));
    }

    fn on_outer(&mut self, rec: &OuterRecord, state: &TrainState) {
        // Full-corpus summary row; epoch/step columns hold the totals.
        self.try_write(format!(
            "{},summary,,{},{},{},{},{}\n",
            rec.outer_iter, rec.lr, rec.mean_recon, rec.mean_h, rec.alpha, rec.rho
        ));
        if let Err(e) = state.save(&self.out_dir) {
            eprintln!("warning: checkpoint save failed: {e}");
        }
        if let Err(e) = self.csv.flush() {
            self.io_error = Some(e);
        }
        println!(
            "outer {:2}: mean_h {:.3e} recon {:.5} alpha {:.4e} rho {:.1e} accepted {}",
            rec.outer_iter, rec.mean_h, rec.mean_recon, rec.alpha, rec.rho, rec.accepted
        );
    }
}
