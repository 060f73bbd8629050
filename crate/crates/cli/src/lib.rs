//! Command implementations behind the `imprag` binary. Each command writes
//! machine-readable output to `out`, diagnostics to `err`, and returns the
//! process exit code.

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};

use imprag::exec::Execution;
use imprag::kinematics::KinematicChain;
use imprag::knowledgebase::{load_knowledge_base, KnowledgeBase};
use imprag::perception::{load_fixtures, DecisionTree, Fixture, HttpVlmClient, ImageRef, ScriptedVlm, TaskLabel, VlmClient};
use imprag::retrieval::{ControlParameters, Pipeline, PipelineOutput};
use imprag::simulation::{
    compute_metrics, run_batch, ArmChains, Heightfield, ScenarioJob, SimulationError, TaskMetrics, Trace, TABLE_TASKS,
};
use imprag::vecindex::{EmbeddingProvider, HashingEmbedder, HttpEmbedder};
use serde::Serialize;
use thiserror::Error;

pub use config::{EmbeddingConfig, RunConfig, VlmConfig, CONFIG_SCHEMA_VERSION};

pub const EXIT_OK: i32 = 0;
pub const EXIT_BELOW_THRESHOLD: i32 = 1;
pub const EXIT_LOAD: i32 = 2;
pub const EXIT_PIPELINE: i32 = 3;
pub const EXIT_SIMULATION: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Load(String),
    #[error("{0}")]
    Pipeline(String),
    #[error("{0}")]
    Simulation(String),
    #[error("cannot write output: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Load(_) | CliError::Output(_) => EXIT_LOAD,
            CliError::Pipeline(_) => EXIT_PIPELINE,
            CliError::Simulation(_) => EXIT_SIMULATION,
        }
    }
}

fn load_err(e: impl std::fmt::Display) -> CliError {
    CliError::Load(e.to_string())
}

fn out_err(e: impl std::fmt::Display) -> CliError {
    CliError::Output(e.to_string())
}

/// Loaded and cross-validated inputs shared by every command.
pub struct Context {
    pub config: RunConfig,
    pub pipeline: Pipeline,
    pub fixtures: Vec<Fixture>,
    pub chains: ArmChains,
    pub heightfield: Heightfield,
    vlm: Box<dyn VlmClient + Send + Sync>,
}

impl Context {
    pub fn load(config: RunConfig) -> Result<Self, CliError> {
        config.validate()?;
        let kb: KnowledgeBase = load_knowledge_base(&config.impedance_db, &config.gripper_db).map_err(load_err)?;
        let tree = DecisionTree::load(&config.decision_tree, kb.scenarios().iter().map(|s| s.task_id.as_str()))
            .map_err(load_err)?;
        let fixtures = load_fixtures(&config.fixtures).map_err(load_err)?;
        kb.check_object_classes(fixtures.iter().map(|f| f.expected_object_class.as_str()))
            .map_err(load_err)?;
        for f in &fixtures {
            kb.lookup_scenario(&f.expected_task_id).map_err(load_err)?;
        }
        let chains = ArmChains {
            right: KinematicChain::load(&config.chain_right).map_err(load_err)?,
            left: KinematicChain::load(&config.chain_left).map_err(load_err)?,
        };
        let heightfield = Heightfield::load(&config.heightfield).map_err(load_err)?;

        let provider: Box<dyn EmbeddingProvider> = match &config.embedding {
            EmbeddingConfig::Fallback { dimension } => Box::new(HashingEmbedder::new(*dimension)),
            EmbeddingConfig::External { dimension, .. } => Box::new(
                HttpEmbedder::new(config.embedding_endpoint().expect("external endpoint"), *dimension)
                    .map_err(load_err)?,
            ),
        };
        let vlm: Box<dyn VlmClient + Send + Sync> = match config.vlm_endpoint() {
            None => Box::new(ScriptedVlm::from_fixtures(&fixtures)),
            Some(ep) => Box::new(HttpVlmClient::new(ep).map_err(load_err)?),
        };
        let pipeline = Pipeline::build(kb, tree, provider, config.retrieval.clone())
            .map_err(|e| CliError::Pipeline(format!("index build: {e}")))?;
        Ok(Self {
            config,
            pipeline,
            fixtures,
            chains,
            heightfield,
            vlm,
        })
    }

    pub fn vlm(&self) -> &(dyn VlmClient + Send + Sync) {
        self.vlm.as_ref()
    }

    fn output_dir(&self) -> Result<&Path, CliError> {
        let dir = &self.config.output_dir;
        std::fs::create_dir_all(dir).map_err(|e| CliError::Output(format!("{}: {e}", dir.display())))?;
        Ok(dir)
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
}

/// Reports an error on `err` and maps it to its exit code.
fn finish(err: &mut dyn Write, result: Result<i32, CliError>) -> i32 {
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn cmd_build_index(config: RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = (|| {
        let ctx = Context::load(config)?;
        let dir = ctx.output_dir()?;
        let idx = ctx.pipeline.indexes();
        write_file(&dir.join("scenario_index.json"), &idx.scenarios.to_json_string())?;
        write_file(&dir.join("gripper_index.json"), &idx.grippers.to_json_string())?;
        writeln!(out, "scenarios: {}, grippers: {}", idx.scenarios.len(), idx.grippers.len()).map_err(out_err)?;
        Ok(EXIT_OK)
    })();
    finish(err, result)
}

#[derive(Serialize)]
struct RetrieveOutput<'a> {
    image_uri: &'a str,
    task_id: &'a str,
    label: &'a str,
    parameters: &'a [ControlParameters],
}

pub fn cmd_retrieve(config: RunConfig, image_uri: &str, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = (|| {
        let ctx = Context::load(config)?;
        let image = ImageRef::new(image_uri).map_err(|e| CliError::Pipeline(format!("perception: {e}")))?;
        let output: PipelineOutput = ctx
            .pipeline
            .run(ctx.vlm(), &image)
            .map_err(|e| CliError::Pipeline(e.to_string()))?;
        for w in &output.warnings {
            writeln!(err, "warning: {w}").map_err(out_err)?;
        }
        if matches!(ctx.config.vlm, VlmConfig::Fixture) {
            if let Some(f) = ctx.fixtures.iter().find(|f| f.image_uri == image_uri) {
                if f.expected_task_id != output.label.task_id {
                    writeln!(
                        err,
                        "warning: low confidence: inferred task {} but the fixture expects {}",
                        output.label.task_id, f.expected_task_id
                    )
                    .map_err(out_err)?;
                }
            }
        }
        let payload = RetrieveOutput {
            image_uri: &output.image_uri,
            task_id: &output.label.task_id,
            label: &output.label.text,
            parameters: &output.parameters,
        };
        writeln!(out, "{}", serde_json::to_string(&payload).expect("output serializes")).map_err(out_err)?;
        Ok(EXIT_OK)
    })();
    finish(err, result)
}

pub fn cmd_eval_retrieval(config: RunConfig, exec: Execution, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = (|| {
        let ctx = Context::load(config)?;
        let report = ctx
            .pipeline
            .evaluate(ctx.vlm(), &ctx.fixtures, exec)
            .map_err(load_err)?;
        let dir = ctx.output_dir()?;
        write_file(&dir.join("retrieval_report.json"), &report.to_json_string())?;
        write_file(&dir.join("retrieval_summary.csv"), &report.to_csv())?;
        for r in report.records.iter().filter(|r| !r.correct) {
            writeln!(
                err,
                "miss: {} expected {}/{} got {}/{}/{}{}",
                r.image_uri,
                r.expected_task_id,
                r.expected_object_class,
                r.inferred_task.as_deref().unwrap_or("-"),
                r.retrieved_scenario.as_deref().unwrap_or("-"),
                r.retrieved_gripper.as_deref().unwrap_or("-"),
                r.error.as_ref().map(|e| format!(" ({e})")).unwrap_or_default()
            )
            .map_err(out_err)?;
        }
        writeln!(out, "{}", report.summary_line()).map_err(out_err)?;
        Ok(if report.accuracy >= ctx.config.min_accuracy {
            EXIT_OK
        } else {
            EXIT_BELOW_THRESHOLD
        })
    })();
    finish(err, result)
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsRow {
    pub task_id: String,
    pub arm: imprag::ArmId,
    #[serde(rename = "K_z")]
    pub k_z: f64,
    #[serde(rename = "D_z")]
    pub d_z: f64,
    #[serde(flatten)]
    pub metrics: TaskMetrics,
}

impl MetricsRow {
    pub const CSV_HEADER: &'static str = "task_id,arm,K_z,D_z,mean_abs_e_z,max_abs_e_z,max_abs_F_virt_z";

    fn csv(&self) -> String {
        format!(
            "{},{},{},{},{:.6},{:.6},{:.6}",
            self.task_id,
            self.arm.short(),
            self.k_z,
            self.d_z,
            self.metrics.mean_abs_e_z,
            self.metrics.max_abs_e_z,
            self.metrics.max_abs_f_virt_z
        )
    }
}

#[derive(Serialize)]
struct TraceManifest<'a> {
    task_id: &'a str,
    arm: imprag::ArmId,
    config_hash: &'a str,
    trace_file: String,
    dt: f64,
    records: usize,
    parameters: &'a ControlParameters,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<TaskMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    aborted: Option<String>,
}

fn trace_stem(task_id: &str, arm: imprag::ArmId) -> String {
    format!("{task_id}_{arm}")
}

/// Writes trace CSV, metrics JSON and manifest for one arm; metrics are
/// omitted for aborted runs.
fn write_arm_outputs(
    dir: &Path,
    params: &ControlParameters,
    trace: &Trace,
    config_hash: &str,
    aborted: Option<String>,
) -> Result<Option<MetricsRow>, CliError> {
    let stem = trace_stem(&params.scenario.task_id, params.arm);
    let trace_file = format!("{stem}_trace.csv");
    trace.write_csv(&dir.join(&trace_file)).map_err(out_err)?;
    let metrics = if aborted.is_none() {
        Some(compute_metrics(trace).map_err(|e| CliError::Simulation(e.to_string()))?)
    } else {
        None
    };
    if let Some(m) = &metrics {
        write_file(
            &dir.join(format!("{stem}_metrics.json")),
            &serde_json::to_string_pretty(m).expect("metrics serialize"),
        )?;
    }
    let manifest = TraceManifest {
        task_id: &params.scenario.task_id,
        arm: params.arm,
        config_hash,
        trace_file,
        dt: trace.dt,
        records: trace.len(),
        parameters: params,
        metrics,
        aborted,
    };
    write_file(
        &dir.join(format!("{stem}_manifest.json")),
        &serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    Ok(metrics.map(|metrics| MetricsRow {
        task_id: params.scenario.task_id.clone(),
        arm: params.arm,
        k_z: params.impedance.stiffness().z,
        d_z: params.impedance.damping().z,
        metrics,
    }))
}

/// Retrieval from the task's own leaf label, bypassing the VLM.
fn scripted_parameters(ctx: &Context, task_id: &str) -> Result<Vec<ControlParameters>, CliError> {
    let tree = ctx.pipeline.tree();
    let path = tree
        .path_to(task_id)
        .ok_or_else(|| CliError::Load(format!("unknown task {task_id:?}")))?;
    let label = TaskLabel {
        task_id: task_id.to_string(),
        text: tree.label_text(task_id).unwrap_or_else(|| task_id.replace('_', " ")),
        query_trace: path,
    };
    let (params, _) = ctx
        .pipeline
        .parameters_for_label(&label)
        .map_err(|e| CliError::Pipeline(e.to_string()))?;
    Ok(params)
}

pub enum SimulateTarget<'a> {
    Task(&'a str),
    /// Every task with published gains; bimanual partners run once.
    All,
}

pub fn cmd_simulate(
    config: RunConfig,
    target: SimulateTarget<'_>,
    exec: Execution,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let result = (|| {
        let ctx = Context::load(config)?;
        let tasks: Vec<&str> = match target {
            SimulateTarget::Task(t) => vec![t],
            SimulateTarget::All => TABLE_TASKS.to_vec(),
        };
        let mut jobs: Vec<ScenarioJob> = Vec::new();
        for task in tasks {
            if jobs
                .iter()
                .any(|j| j.params.iter().any(|p| p.scenario.task_id == task))
            {
                continue;
            }
            let params = scripted_parameters(&ctx, task)?;
            let env = ctx
                .config
                .simulation
                .environment_for(task, &ctx.heightfield)
                .map_err(load_err)?;
            jobs.push(ScenarioJob { params, env });
        }

        let dir = ctx.output_dir()?.to_path_buf();
        let hash = ctx.config.hash();
        let results = run_batch(&jobs, &ctx.chains, &ctx.config.simulation, exec);
        let mut rows = Vec::new();
        let mut failure = None;
        for (job, result) in jobs.iter().zip(results) {
            match result {
                Ok(traces) => {
                    for (p, trace) in job.params.iter().zip(&traces) {
                        rows.extend(write_arm_outputs(&dir, p, trace, &hash, None)?);
                    }
                }
                Err(e) => {
                    if let SimulationError::Aborted { arm, partial, .. } = &e {
                        if let Some(p) = job.params.iter().find(|p| p.arm == *arm) {
                            write_arm_outputs(&dir, p, partial, &hash, Some(e.to_string()))?;
                        }
                    }
                    writeln!(err, "simulation aborted: {e}").map_err(out_err)?;
                    failure.get_or_insert(e);
                }
            }
        }

        match target {
            SimulateTarget::Task(_) => {
                for r in &rows {
                    writeln!(out, "{}", serde_json::to_string(r).expect("row serializes")).map_err(out_err)?;
                }
            }
            SimulateTarget::All => {
                let mut table = String::from(MetricsRow::CSV_HEADER);
                table.push('\n');
                for r in &rows {
                    table.push_str(&r.csv());
                    table.push('\n');
                }
                write_file(&dir.join("summary.csv"), &table)?;
                write!(out, "{table}").map_err(out_err)?;
            }
        }
        match failure {
            Some(e) => Err(CliError::Simulation(e.to_string())),
            None => Ok(EXIT_OK),
        }
    })();
    finish(err, result)
}

/// Applies command-line overrides on top of a loaded config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub fixtures: Option<PathBuf>,
    pub min_accuracy: Option<f64>,
    pub dt: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(p) = &self.output_dir {
            cfg.output_dir = p.clone();
        }
        if let Some(p) = &self.fixtures {
            cfg.fixtures = p.clone();
        }
        if let Some(a) = self.min_accuracy {
            cfg.min_accuracy = a;
        }
        if let Some(dt) = self.dt {
            cfg.simulation.dt = dt;
        }
    }
}

/// Loads the config file and applies overrides; failures map to exit 2.
pub fn load_config(path: &Path, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(path)?;
    overrides.apply(&mut cfg);
    Ok(cfg)
}
