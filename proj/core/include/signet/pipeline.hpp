#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "signet/config.hpp"
#include "signet/dataset.hpp"
#include "signet/evaluation.hpp"
#include "signet/features.hpp"
#include "signet/network.hpp"
#include "signet/preprocess.hpp"
#include "signet/svm.hpp"
#include "signet/synthetic.hpp"
#include "signet/training.hpp"

namespace signet {

// Every knob of a full experiment, resolved from one flat Config. Missing
// keys take the defaults below, so an empty config is a valid (full-scale)
// run description.
struct RunConfig {
    std::uint64_t master_seed = 7;  // key: seed
    std::size_t replications = 1;   // key: replications

    // Data source. When dataset_dir is set the pipeline indexes an existing
    // tree of u%04d/ directories; otherwise it generates synthetic data.
    std::string dataset_dir;          // key: data.dir
    std::size_t synth_users = 20;     // key: data.users
    std::size_t synth_genuine = 24;   // key: data.genuine
    std::size_t synth_forgeries = 30; // key: data.forgeries
    SyntheticSpec synth;              // keys: synth.*

    PreprocessConfig pre;  // keys: pre.*

    std::vector<std::size_t> conv_channels = {96, 256, 384, 384, 256};  // network.conv_channels
    std::vector<std::size_t> fc_dims = {2048, 2048};                    // network.fc_dims

    TrainConfig train;  // keys: training.*, loss.formulation, loss.lambda
    SplitPlan split;    // keys: split.*
    WDConfig wd;        // keys: wd.*

    static RunConfig from_config(const Config& cfg);
    void validate() const;

    // Canonical rendering: every key written explicitly with fixed number
    // formatting, so two configs that resolve to the same run hash equally
    // regardless of which keys were spelled out.
    Config canonical() const;

    // Stage-scoped hashes. Each artifact embeds the hash of exactly the keys
    // that determine its content, so e.g. changing training.epochs keeps the
    // dataset and preprocessing caches valid, and a lambda sweep shares them
    // across sweep points.
    std::uint64_t data_hash() const;   // seed, data.*, synth.*
    std::uint64_t pre_hash() const;    // + pre.*
    std::uint64_t model_hash() const;  // + network.*, training.*, loss.*
    std::uint64_t eval_hash() const;   // + split.*, wd.*
    std::uint64_t full_hash() const;   // everything

    // Network for `dev_users` development identities at the configured widths.
    NetworkSpec network_spec(std::size_t dev_users) const;
};

struct PipelineOptions {
    std::string work_dir;       // all artifacts live under here
    std::string pre_cache_dir;  // preprocessed-image cache; empty = <work_dir>/pre
    bool force = false;         // rebuild artifacts whose config hash mismatches
    std::size_t jobs = 1;       // worker threads for per-image / per-user stages
    std::ostream* log = nullptr;  // stage progress messages; null = silent

    std::string resolved_pre_dir() const;
};

struct ReplicationResult {
    std::size_t replication = 0;
    std::uint64_t split_seed = 0;
    EvalReport report;
};

struct Aggregate {
    double mean = 0.0;
    double stdev = 0.0;  // sample standard deviation; 0 for a single value
};
Aggregate aggregate_of(const std::vector<double>& values);

struct ExperimentSummary {
    std::uint64_t config_hash = 0;
    std::vector<ReplicationResult> replications;
    Aggregate eer_global, eer_user, mean_auc, aer, aer_genuine_skilled;
    Aggregate frr, far_random, far_skilled;
};

// Recomputes the aggregate fields from the replication reports (the stored
// and recomputed values must agree; tests rely on this).
void recompute_aggregates(ExperimentSummary& summary);

// ---------------------------------------------------------------------------
// Stage entry points. Each checks its artifact's embedded config hash first:
// a match reuses the artifact, a mismatch is an error unless `force`
// requests a rebuild, and a missing or unreadable artifact is rebuilt.
// Artifacts of a failed stage are left in place for inspection.
// ---------------------------------------------------------------------------

// Number of development identities the split leaves for CNN training.
std::size_t development_user_count(const RunConfig& run, const DatasetIndex& index);

// The learning share of the development split as a labeled training set,
// user labels shifted to [0, dev_users). Forgeries are included only for
// formulations that consume them. Images come from the preprocessing cache.
LabeledImageSet development_training_set(const RunConfig& run, const SplitListing& listing,
                                         const std::string& pre_dir);

// Embeds every record of the index in ordinal order (chunked, so memory
// stays bounded by the batch size).
FeatureSet embed_index(Network& net, const DatasetIndex& index, const RunConfig& run,
                       const std::string& pre_dir);

// Synthetic generation (or indexing of an existing dataset_dir).
DatasetIndex pipeline_dataset(const RunConfig& run, const PipelineOptions& opts);

// Preprocessed-image cache covering every record of the index.
void pipeline_preprocess(const RunConfig& run, const PipelineOptions& opts,
                         const DatasetIndex& index);

// CNN training (resumable mid-run from the saved training state). Returns
// the finalized network; writes checkpoint, training state and metrics CSV.
Network pipeline_train(const RunConfig& run, const PipelineOptions& opts,
                       const DatasetIndex& index);

// Feature embedding of every record in index order.
FeatureSet pipeline_features(const RunConfig& run, const PipelineOptions& opts,
                             const DatasetIndex& index, Network& net);

// One replication: split manifest, per-user verifiers, score CSVs for the
// test and validation identities, and the evaluation report.
ReplicationResult pipeline_replication(const RunConfig& run, const PipelineOptions& opts,
                                       const DatasetIndex& index, const FeatureSet& features,
                                       std::size_t replication);

// The whole experiment; writes <work_dir>/experiment.json.
ExperimentSummary run_pipeline(const RunConfig& run, const PipelineOptions& opts);

// ---------------------------------------------------------------------------
// Lambda sweep: one network per lambda value (multitask formulations only),
// each evaluated on the validation identities, with the dataset and
// preprocessing caches shared across sweep points. Rows keep input order.
// Writes <work_dir>/sweep.csv.
// ---------------------------------------------------------------------------

struct SweepRow {
    double lambda = 0.0;
    double eer_global = 0.0;
    double eer_user = 0.0;
    double mean_auc = 0.0;
};

std::vector<SweepRow> run_lambda_sweep(const RunConfig& base, const std::vector<double>& lambdas,
                                       const PipelineOptions& opts);
std::string sweep_to_csv(const std::vector<SweepRow>& rows);

// ---------------------------------------------------------------------------
// Preprocessed-image cache. Layout mirrors the dataset:
// <pre_dir>/u%04d/<stem>.sgt holding the resized float image.
// ---------------------------------------------------------------------------

std::string preprocessed_path(const SampleRecord& rec, const std::string& pre_dir);

// Loads the cached copy, computing and caching it on demand (also when the
// cached shape does not match the configured resize geometry).
FloatImage load_preprocessed(const SampleRecord& rec, const PreprocessConfig& cfg,
                             const std::string& pre_dir);

void preprocess_dataset(const DatasetIndex& index, const PreprocessConfig& cfg,
                        const std::string& pre_dir, std::size_t jobs,
                        std::ostream* log = nullptr);

// ---------------------------------------------------------------------------
// Experiment record serialization and human-readable rendering.
// ---------------------------------------------------------------------------

std::string experiment_to_json(const ExperimentSummary& summary);
ExperimentSummary experiment_from_json(const std::string& json_text);
void write_experiment_json(const std::string& path, const ExperimentSummary& summary);
ExperimentSummary read_experiment_json(const std::string& path);

std::string format_report_table(const EvalReport& report);
std::string format_experiment_table(const ExperimentSummary& summary);

}  // namespace signet
