//! CSV logs of a generation-loop run.

use super::{GenerationReport, InsertEvent, RunConfig};
use crate::container::{heatmap_svg, write_dump, Archive};
use crate::error::Result;
use crate::expcli::config::header_lines;
use crate::trainers::Family;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

pub const GENERATION_COLUMNS: &str = "generation,env_steps_cum,qd_score,coverage,max_fitness,add_ga,add_pg,add_actor,\
critic_loss_mean,actor_loss_mean,alpha,wall_time_s,episodes_cum,buffer_size";

pub const EVENT_COLUMNS: &str = "generation,index,source,outcome,cell,fitness_delta";

pub const TRAINING_COLUMNS: &str = "generation,update_index,family,critic_loss,actor_loss,alpha,mean_q";

pub(crate) fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Creates `path` and writes the `# key=value` provenance header.
pub(crate) fn create_with_header(path: &Path, header: &[String], columns: &str) -> Result<BufWriter<File>> {
    let mut w = BufWriter::new(File::create(path)?);
    for line in header {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "{columns}")?;
    Ok(w)
}

pub fn write_generation_row<W: Write>(w: &mut W, r: &GenerationReport, record_wall_time: bool) -> Result<()> {
    let m = &r.metrics;
    writeln!(
        w,
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        r.generation,
        r.env_steps_cum,
        m.qd_score,
        m.coverage,
        opt(m.max_fitness),
        r.additions.ga,
        r.additions.pg,
        r.additions.actor,
        opt(r.critic_loss_mean),
        opt(r.actor_loss_mean),
        opt(r.alpha),
        if record_wall_time { r.wall_time_s } else { 0.0 },
        r.episodes_cum,
        r.buffer_size
    )?;
    Ok(())
}

/// Writers for `generations.csv`, `events.csv` and `training.csv`, plus the
/// final archive dump and heatmap.
pub struct RunWriter {
    dir: PathBuf,
    header: Vec<String>,
    record_wall_time: bool,
    heatmap: bool,
    generations: BufWriter<File>,
    events: BufWriter<File>,
    training: BufWriter<File>,
}

impl RunWriter {
    pub fn create(dir: &Path, config: &RunConfig) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let header = header_lines(config);
        Ok(RunWriter {
            generations: create_with_header(&dir.join("generations.csv"), &header, GENERATION_COLUMNS)?,
            events: create_with_header(&dir.join("events.csv"), &header, EVENT_COLUMNS)?,
            training: create_with_header(&dir.join("training.csv"), &header, TRAINING_COLUMNS)?,
            dir: dir.to_path_buf(),
            header,
            record_wall_time: config.record_wall_time,
            heatmap: config.heatmap,
        })
    }

    pub fn write_events(&mut self, events: &[InsertEvent]) -> Result<()> {
        for e in events {
            writeln!(
                self.events,
                "{},{},{},{},{},{}",
                e.generation,
                e.index,
                e.source.name(),
                e.kind.name(),
                e.cell,
                e.fitness_delta
            )?;
        }
        self.events.flush()?;
        Ok(())
    }

    pub fn write_generation(&mut self, r: &GenerationReport, family: Family) -> Result<()> {
        write_generation_row(&mut self.generations, r, self.record_wall_time)?;
        self.generations.flush()?;
        self.write_events(&r.events)?;
        for t in &r.training {
            writeln!(
                self.training,
                "{},{},{},{},{},{},{}",
                r.generation,
                t.update_index,
                family.name(),
                opt(t.critic_loss),
                opt(t.actor_loss),
                opt(t.alpha),
                opt(t.mean_q)
            )?;
        }
        self.training.flush()?;
        Ok(())
    }

    pub fn finish(&mut self, archive: &Archive) -> Result<()> {
        write_dump(archive, &self.dir, &self.header)?;
        if self.heatmap && archive.spec().dims().len() == 2 {
            let title = self
                .header
                .iter()
                .filter(|l| l.starts_with("family=") || l.starts_with("seed=") || l.starts_with("env="))
                .cloned()
                .collect::<Vec<_>>()
                .join(" ");
            fs::write(self.dir.join("heatmap.svg"), heatmap_svg(archive, &title)?)?;
        }
        Ok(())
    }
}
