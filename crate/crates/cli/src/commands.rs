use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use orderclust::estimation::{binder_loss, point_estimate, similarity_matrix};
use orderclust::io;
use orderclust::kernel::ou::{standardize, OuKernel, OuSeries};
use orderclust::kernel::sir::SirKernel;
use orderclust::kernel::{Dataset, Evaluator, Kernel, Series};
use orderclust::orders::Partition;
use orderclust::proposal::{estimate_norm_constants, exact_norm_constants, NormConstants, Proposal};
use orderclust::sampler::{ChainRecord, Checkpoint, MoveStats, Sampler};
use orderclust::studies::{simulate_epi_study, simulate_ou_study};

use crate::config::{Config, KernelKind, Study};
use crate::{CliError, Common, ConstantsArgs, DataArgs, FitArgs, SimulateArgs, SummarizeArgs};

type CliResult<T> = Result<T, CliError>;

fn setup(common: &Common) -> CliResult<Config> {
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Config::load(common.config.as_deref())
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn open(path: &Path, what: &str) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Data(format!("missing {what} {}: {e}", path.display())))
}

pub fn simulate(a: SimulateArgs) -> CliResult<()> {
    let mut cfg = setup(&a.common)?;
    let sim = &mut cfg.simulate;
    if let Some(s) = a.study {
        sim.study = s;
    }
    if let Some(t) = a.t {
        sim.t = t;
    }
    if let Some(s) = a.seed {
        sim.seed = s;
    }
    let (ids, truth) = match sim.study {
        Study::Ts => {
            let d = simulate_ou_study(sim.t, sim.gamma, false, sim.seed)?;
            let table = io::WideTable {
                ids: d.ids.clone(),
                columns: d.values,
            };
            io::write_wide(create(&a.out_dir.join("data.csv"))?, &table)?;
            (d.ids, d.truth)
        }
        Study::Epi => {
            let d = simulate_epi_study(&sim.epi, sim.seed)?;
            let table = io::WideTable {
                ids: d.ids.clone(),
                columns: d.series.iter().map(|s| s.counts().to_vec()).collect(),
            };
            io::write_wide(create(&a.out_dir.join("data.csv"))?, &table)?;
            (d.ids, d.truth)
        }
    };
    io::write_labels(create(&a.out_dir.join("truth.csv"))?, &ids, &truth)?;
    Ok(())
}

fn apply_data_args(cfg: &mut Config, d: &DataArgs) {
    if let Some(k) = d.kernel {
        cfg.data.kernel = k;
    }
    if let Some(h) = d.horizon {
        cfg.data.horizon = Some(h);
    }
    if let Some(s) = d.standardize {
        cfg.data.standardize = s;
    }
}

fn ou_data(cfg: &Config, path: &Path) -> CliResult<(Arc<OuKernel>, Arc<Dataset<OuSeries>>)> {
    let table = io::read_wide_series(open(path, "dataset")?)?;
    let kernel = Arc::new(OuKernel::new(cfg.ou)?);
    let series = table
        .ids
        .into_iter()
        .zip(table.columns)
        .map(|(id, v)| Series {
            id,
            payload: OuSeries::new(if cfg.data.standardize { standardize(&v) } else { v }),
        })
        .collect();
    let data = Arc::new(Dataset::for_kernel(&*kernel, series)?);
    Ok((kernel, data))
}

fn sir_data(cfg: &Config, path: &Path) -> CliResult<(Arc<SirKernel>, Arc<Dataset<orderclust::kernel::sir::EpiSeries>>)> {
    let (ids, series) = io::read_epidemics(open(path, "dataset")?, cfg.data.horizon)?;
    let kernel = Arc::new(SirKernel::new(cfg.sir)?);
    let series = ids
        .into_iter()
        .zip(series)
        .map(|(id, payload)| Series { id, payload })
        .collect();
    let data = Arc::new(Dataset::for_kernel(&*kernel, series)?);
    Ok((kernel, data))
}

fn compute_constants<K: Kernel>(eval: &Evaluator<K>, cfg: &Config) -> CliResult<NormConstants> {
    let c = &cfg.constants;
    Ok(if c.exact {
        exact_norm_constants(eval)?
    } else {
        estimate_norm_constants(eval, c.b, c.p, c.seed)?
    })
}

pub fn norm_constants(a: ConstantsArgs) -> CliResult<()> {
    let mut cfg = setup(&a.common)?;
    apply_data_args(&mut cfg, &a.data);
    if let Some(b) = a.b {
        cfg.constants.b = b;
    }
    if let Some(p) = a.p {
        cfg.constants.p = p;
    }
    if let Some(s) = a.seed {
        cfg.constants.seed = s;
    }
    cfg.constants.exact |= a.exact;
    let nc = match cfg.data.kernel {
        KernelKind::Ou => {
            let (k, d) = ou_data(&cfg, &a.data.data)?;
            compute_constants(&Evaluator::new(k, d, cfg.data.eval_seed), &cfg)?
        }
        KernelKind::Sir => {
            let (k, d) = sir_data(&cfg, &a.data.data)?;
            compute_constants(&Evaluator::new(k, d, cfg.data.eval_seed), &cfg)?
        }
    };
    let mut w = create(&a.out)?;
    io::write_constants(&mut w, &nc)?;
    w.flush().map_err(orderclust::Error::from)?;
    Ok(())
}

/// Sidecar describing a fitted chain, read back by `summarize`.
#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    ids: Vec<String>,
    t: usize,
    config: Config,
}

#[derive(Debug, Serialize, Deserialize)]
struct Summary {
    records: usize,
    burn_in: usize,
    clusters: usize,
    estimate: String,
    expected_loss: f64,
    binder_to_truth: Option<f64>,
    stats: Option<MoveStats>,
    evaluations: Option<usize>,
    failures: Option<usize>,
}

pub fn fit(a: FitArgs) -> CliResult<()> {
    let mut cfg = setup(&a.common)?;
    apply_data_args(&mut cfg, &a.data);
    let s = &mut cfg.sampler;
    if let Some(v) = a.iters {
        s.iterations = v;
    }
    if let Some(v) = a.burnin {
        s.burn_in = v;
    }
    if let Some(v) = a.alpha {
        s.alpha = Some(v);
    }
    if let Some(v) = a.seed {
        s.seed = v;
    }
    if let Some(v) = a.l {
        cfg.proposal.depth = v;
    }
    if a.exact {
        cfg.constants.exact = true;
        cfg.proposal.exact = true;
    }
    cfg.sampler.validate()?;
    cfg.proposal.validate()?;
    match cfg.data.kernel {
        KernelKind::Ou => {
            let (k, d) = ou_data(&cfg, &a.data.data)?;
            fit_with(k, d, cfg, &a)
        }
        KernelKind::Sir => {
            let (k, d) = sir_data(&cfg, &a.data.data)?;
            fit_with(k, d, cfg, &a)
        }
    }
}

fn load_constants(path: Option<&PathBuf>, exact: bool) -> CliResult<Option<NormConstants>> {
    match path {
        Some(p) => Ok(Some(io::read_constants(open(p, "constants file")?)?)),
        None if exact => Ok(None),
        None => Err(CliError::Config(
            "missing constants: pass --constants from `norm-constants`, or --exact".into(),
        )),
    }
}

fn read_truth(path: &Path, ids: &[String]) -> CliResult<Partition> {
    let (tids, p) = io::read_labels(open(path, "truth file")?)?;
    if tids != ids {
        return Err(CliError::Data("truth ids do not match the dataset".into()));
    }
    Ok(p)
}

fn fit_with<K: Kernel>(kernel: Arc<K>, data: Arc<Dataset<K::Payload>>, cfg: Config, a: &FitArgs) -> CliResult<()> {
    let ids = data.ids();
    let seed = cfg.data.eval_seed;
    let eval = Evaluator::new(kernel.clone(), data.clone(), seed);
    let nc = match load_constants(a.constants.as_ref(), cfg.constants.exact)? {
        Some(nc) => nc,
        None => exact_norm_constants(&eval)?,
    };
    let proposal = Arc::new(Proposal::new(Evaluator::new(kernel, data, seed), &nc, cfg.proposal)?);
    let truth = a.truth.as_deref().map(|p| read_truth(p, &ids)).transpose()?;

    let out = &a.out_dir;
    let chain_path = out.join("chain.ndjson");
    let mut records: Vec<ChainRecord> = Vec::new();
    let mut sampler = match &a.resume {
        Some(path) => {
            let ck: Checkpoint<K::Local> = serde_json::from_reader(open(path, "checkpoint")?)
                .map_err(|e| CliError::Data(format!("bad checkpoint: {e}")))?;
            let done = ck.iter;
            if chain_path.exists() {
                records = io::read_chain(open(&chain_path, "chain")?)?;
                records.retain(|r| r.iter <= done);
            }
            if records.len() != done {
                return Err(CliError::Data(format!(
                    "chain file holds {} records up to the checkpoint at iteration {done}",
                    records.len()
                )));
            }
            Sampler::resume(eval, proposal, cfg.sampler.clone(), ck)?
        }
        None => Sampler::new(eval, proposal, cfg.sampler.clone())?,
    };

    let mut chain = create(&chain_path)?;
    io::write_ndjson(&mut chain, &records)?;
    let write_checkpoint = |s: &Sampler<K>| -> CliResult<()> {
        let tmp = out.join("checkpoint.json.tmp");
        let mut w = create(&tmp)?;
        serde_json::to_writer(&mut w, &s.checkpoint()).map_err(orderclust::Error::from)?;
        w.flush().map_err(orderclust::Error::from)?;
        drop(w);
        std::fs::rename(&tmp, out.join("checkpoint.json")).map_err(|e| CliError::Data(e.to_string()))
    };
    while sampler.iteration() < cfg.sampler.iterations {
        let rec = sampler.step()?;
        serde_json::to_writer(&mut chain, &rec).map_err(orderclust::Error::from)?;
        chain.write_all(b"\n").map_err(orderclust::Error::from)?;
        records.push(rec);
        if a.checkpoint_every > 0 && sampler.iteration() % a.checkpoint_every == 0 {
            chain.flush().map_err(orderclust::Error::from)?;
            write_checkpoint(&sampler)?;
        }
    }
    chain.flush().map_err(orderclust::Error::from)?;
    write_checkpoint(&sampler)?;

    let meta = Meta {
        ids: ids.clone(),
        t: sampler.evaluator().t(),
        config: cfg.clone(),
    };
    let mut w = create(&out.join("meta.json"))?;
    serde_json::to_writer_pretty(&mut w, &meta).map_err(orderclust::Error::from)?;
    w.flush().map_err(orderclust::Error::from)?;

    let eval = sampler.evaluator();
    let extra = (sampler.stats(), eval.evaluations(), eval.failures());
    write_summaries(&records, cfg.sampler.burn_in, &ids, truth.as_ref(), Some(extra), out)
}

fn write_summaries(
    records: &[ChainRecord],
    burn_in: usize,
    ids: &[String],
    truth: Option<&Partition>,
    extra: Option<(MoveStats, usize, usize)>,
    out: &Path,
) -> CliResult<()> {
    io::write_trace(create(&out.join("trace.csv"))?, records)?;
    let kept: Vec<Partition> = records
        .iter()
        .filter(|r| r.iter > burn_in)
        .map(|r| r.partition.clone())
        .collect();
    if kept.is_empty() {
        return Err(CliError::Config(format!(
            "no records after burn-in {burn_in} ({} records)",
            records.len()
        )));
    }
    if kept[0].n() != ids.len() {
        return Err(CliError::Data("chain and ids disagree on the number of series".into()));
    }
    let sim = similarity_matrix(&kept)?;
    io::write_similarity(create(&out.join("similarity.csv"))?, ids, &sim)?;
    let est = point_estimate(&kept)?;
    io::write_labels(create(&out.join("estimate.csv"))?, ids, &est.partition)?;
    let binder_to_truth = truth.map(|t| binder_loss(&est.partition, t)).transpose()?;
    let summary = Summary {
        records: records.len(),
        burn_in,
        clusters: est.partition.k(),
        estimate: est.partition.to_string(),
        expected_loss: est.expected_loss,
        binder_to_truth,
        stats: extra.map(|e| e.0),
        evaluations: extra.map(|e| e.1),
        failures: extra.map(|e| e.2),
    };
    let mut w = create(&out.join("summary.json"))?;
    serde_json::to_writer_pretty(&mut w, &summary).map_err(orderclust::Error::from)?;
    w.flush().map_err(orderclust::Error::from)?;
    println!("{}", serde_json::to_string(&summary).map_err(orderclust::Error::from)?);
    Ok(())
}

pub fn summarize(a: SummarizeArgs) -> CliResult<()> {
    let records = io::read_chain(open(&a.chain, "chain")?)?;
    let n = records
        .first()
        .map(|r| r.partition.n())
        .ok_or_else(|| CliError::Data("chain file is empty".into()))?;
    let meta_path = a.chain.with_file_name("meta.json");
    let ids = if meta_path.exists() {
        let meta: Meta = serde_json::from_reader(open(&meta_path, "metadata")?)
            .map_err(|e| CliError::Data(format!("bad meta.json: {e}")))?;
        meta.ids
    } else {
        (1..=n).map(|i| i.to_string()).collect()
    };
    let truth = a.truth.as_deref().map(|p| read_truth(p, &ids)).transpose()?;
    write_summaries(&records, a.burnin, &ids, truth.as_ref(), None, &a.out_dir)
}
