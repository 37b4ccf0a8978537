// Command-line front end: each subcommand wraps one stage of the toolkit so
// stages can be run, inspected and resumed independently; `pipeline` chains
// them all.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "signet/checkpoint.hpp"
#include "signet/config.hpp"
#include "signet/dataset.hpp"
#include "signet/errors.hpp"
#include "signet/evaluation.hpp"
#include "signet/features.hpp"
#include "signet/pipeline.hpp"
#include "signet/preprocess.hpp"
#include "signet/rng.hpp"
#include "signet/svm.hpp"
#include "signet/synthetic.hpp"
#include "signet/training.hpp"

namespace fs = std::filesystem;
using namespace signet;

namespace {

std::size_t default_jobs() {
    const char* env = std::getenv("SIGNET_JOBS");
    if (!env) return 1;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) return 1;
    return static_cast<std::size_t>(v);
}

// Shared --config/--set/--seed handling: file first, then key=value
// overrides, then the seed flag.
struct ConfigArgs {
    std::string config_path;
    std::vector<std::string> sets;
    std::int64_t seed = -1;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "configuration file (key=value lines)")
            ->check(CLI::ExistingFile);
        cmd->add_option("--set", sets, "override a configuration key (key=value), repeatable");
        cmd->add_option("--seed", seed, "master seed (overrides the config's `seed`)");
    }

    RunConfig resolve() const {
        Config cfg = config_path.empty() ? Config() : Config::load(config_path);
        for (const std::string& kv : sets) {
            const std::size_t eq = kv.find('=');
            if (eq == std::string::npos)
                throw ConfigError("--set expects key=value, got '" + kv + "'");
            cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
        }
        RunConfig run = RunConfig::from_config(cfg);
        if (seed >= 0) run.master_seed = static_cast<std::uint64_t>(seed);
        return run;
    }
};

// Seeded draw of up to `take` elements (order-stable partial Fisher-Yates).
template <typename T>
std::vector<T> draw(std::vector<T> items, std::size_t take, Rng& rng) {
    const std::size_t n = items.size();
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.uniform_below(n - i));
        std::swap(items[i], items[j]);
    }
    if (items.size() > take) items.resize(take);
    return items;
}

int cmd_gen_synthetic(const ConfigArgs& cargs, const std::string& out, std::size_t users,
                      std::size_t genuine, std::size_t forgeries) {
    RunConfig run = cargs.resolve();
    const DatasetIndex index = generate_synthetic_dataset(out, users, genuine, forgeries,
                                                          run.synth, run.master_seed);
    std::cout << "wrote " << index.records.size() << " images for " << index.num_users
              << " users to " << out << "\n";
    return 0;
}

int cmd_preprocess(const ConfigArgs& cargs, const std::string& data, const std::string& out,
                   std::size_t jobs) {
    RunConfig run = cargs.resolve();
    const DatasetIndex index = load_index(data);
    preprocess_dataset(index, run.pre, out, jobs, &std::cout);
    std::cout << "preprocessed " << index.records.size() << " images to " << out << "\n";
    return 0;
}

int cmd_train_cnn(const ConfigArgs& cargs, const std::string& data, const std::string& out,
                  const std::string& resume, std::string metrics, std::string state,
                  std::string pre_dir) {
    RunConfig run = cargs.resolve();
    const DatasetIndex index = load_index(data);
    const std::size_t dev_users = development_user_count(run, index);
    const SplitListing listing =
        build_split(index, run.split, derive_seed(run.master_seed, "split"));

    const std::string out_dir = fs::path(out).has_parent_path()
                                    ? fs::path(out).parent_path().string()
                                    : std::string(".");
    fs::create_directories(out_dir);
    if (pre_dir.empty()) pre_dir = out_dir + "/pre";
    if (metrics.empty()) metrics = out + ".metrics.csv";
    if (state.empty()) state = out + ".state";

    const LabeledImageSet images = development_training_set(run, listing, pre_dir);
    std::cout << "training on " << images.size() << " images of " << dev_users << " users ("
              << to_string(run.train.formulation) << ")\n";

    TrainConfig tc = run.train;
    tc.rng_seed = derive_seed(run.master_seed, "train");
    Network net(run.network_spec(dev_users));

    TrainRunOptions opts;
    opts.metrics_csv = metrics;
    opts.state_path = state;
    opts.resume_from = resume;
    opts.config_hash = run.model_hash();
    const std::vector<EpochMetrics> history = run_training(net, images, tc, opts);
    save_checkpoint(out, net, run.model_hash());

    if (!history.empty()) {
        const EpochMetrics& last = history.back();
        std::cout << "epoch " << last.epoch << ": loss " << last.loss << ", user accuracy "
                  << last.user_accuracy << "\n";
    }
    std::cout << "checkpoint written to " << out << "\n";
    return 0;
}

int cmd_extract(const ConfigArgs& cargs, const std::string& checkpoint, const std::string& data,
                const std::string& out, std::string pre_dir) {
    RunConfig run = cargs.resolve();
    std::uint64_t hash = 0;
    Network net = load_checkpoint(checkpoint, &hash);
    const DatasetIndex index = load_index(data);
    if (pre_dir.empty()) {
        const fs::path p(out);
        pre_dir = (p.has_parent_path() ? p.parent_path().string() : std::string(".")) + "/pre";
    }
    const FeatureSet set = embed_index(net, index, run, pre_dir);
    save_features(out, set, hash);
    std::cout << "embedded " << set.records.size() << " images (dim " << set.dim << ") to "
              << out << "\n";
    return 0;
}

int cmd_train_wd(const ConfigArgs& cargs, const std::string& features_path, std::uint32_t user,
                 std::size_t refs, const std::string& kernel, const std::string& out,
                 std::size_t negatives_per_user) {
    RunConfig run = cargs.resolve();
    if (!kernel.empty()) run.wd.kernel = parse_kernel(kernel);
    if (negatives_per_user == 0) negatives_per_user = refs;

    std::uint64_t hash = 0;
    const FeatureSet set = load_features(features_path, &hash);

    const auto own = set.of_user(user, false);
    if (own.size() < refs) {
        throw ProtocolError("user " + std::to_string(user) + " has " +
                            std::to_string(own.size()) + " genuine samples, need " +
                            std::to_string(refs) + " references");
    }
    Rng ref_rng(derive_seed(run.master_seed, "wd.refs.user" + std::to_string(user)));
    std::vector<std::vector<float>> positives;
    for (const FeatureRecord* r : draw(own, refs, ref_rng)) positives.push_back(r->values);

    // Negatives: genuine samples of every other identity in the feature file
    // (the random-forgery convention), a seeded handful per identity.
    std::set<std::uint32_t> users;
    for (const auto& rec : set.records) users.insert(rec.user);
    std::vector<std::vector<float>> negatives;
    for (std::uint32_t other : users) {
        if (other == user) continue;
        Rng neg_rng(derive_seed(run.master_seed, "wd.neg.user" + std::to_string(user) + ".pool" +
                                                     std::to_string(other)));
        for (const FeatureRecord* r : draw(set.of_user(other, false), negatives_per_user, neg_rng))
            negatives.push_back(r->values);
    }
    if (negatives.empty())
        throw ProtocolError("feature file holds no other identities to use as negatives");

    const WDModel model = train_wd(positives, negatives, run.wd);
    save_wd_model(out, model, hash);
    std::cout << "trained " << to_string(model.kernel) << " verifier for user " << user << " ("
              << positives.size() << " references, " << negatives.size()
              << " negatives, psi = " << model.psi << ") -> " << out << "\n";
    return 0;
}

int cmd_score(const std::string& features_path, const std::string& model_path,
              std::uint32_t user, const std::string& out) {
    const FeatureSet set = load_features(features_path);
    const WDModel model = load_wd_model(model_path);
    std::vector<ScoredSample> samples;
    for (const FeatureRecord& rec : set.records) {
        ScoredSample s;
        s.user = user;
        s.sample = rec.sample;
        if (rec.user == user) {
            s.kind = rec.forgery ? SampleKind::skilled_forgery : SampleKind::genuine;
        } else if (!rec.forgery) {
            s.kind = SampleKind::random_forgery;  // other users' genuine signatures
        } else {
            continue;  // forgeries of other users are not presentations against this user
        }
        s.score = decision_value(model, rec.values);
        samples.push_back(s);
    }
    write_scores_csv(out, samples);
    std::cout << "scored " << samples.size() << " presentations against user " << user << " -> "
              << out << "\n";
    return 0;
}

int cmd_evaluate(const std::string& scores, const std::string& validation,
                 const std::string& report_path) {
    const std::vector<ScoredSample> test = read_scores_csv(scores);
    const std::vector<ScoredSample> val =
        validation.empty() ? std::vector<ScoredSample>() : read_scores_csv(validation);
    const EvalReport report = evaluate(test, val);
    if (!report_path.empty()) write_report_json(report_path, report);
    std::cout << format_report_table(report);
    return 0;
}

int cmd_pipeline(const ConfigArgs& cargs, const std::string& work, bool force, std::size_t jobs) {
    const RunConfig run = cargs.resolve();
    PipelineOptions opts;
    opts.work_dir = work;
    opts.force = force;
    opts.jobs = jobs;
    opts.log = &std::cout;
    const ExperimentSummary summary = run_pipeline(run, opts);
    std::cout << "\n" << format_experiment_table(summary);
    return 0;
}

int cmd_lambda_sweep(const ConfigArgs& cargs, const std::string& work,
                     const std::vector<double>& lambdas, bool force, std::size_t jobs) {
    const RunConfig run = cargs.resolve();
    PipelineOptions opts;
    opts.work_dir = work;
    opts.force = force;
    opts.jobs = jobs;
    opts.log = &std::cout;
    const std::vector<SweepRow> rows = run_lambda_sweep(run, lambdas, opts);
    std::cout << "\n" << sweep_to_csv(rows);
    return 0;
}

int cmd_report(const std::string& experiment_path, const std::string& report_path,
               const std::string& json_out) {
    if (experiment_path.empty() == report_path.empty())
        throw ConfigError("pass exactly one of --experiment or --report");
    if (!experiment_path.empty()) {
        const ExperimentSummary summary = read_experiment_json(experiment_path);
        if (summary.replications.empty())
            throw ProtocolError("experiment record has no replications");
        std::cout << format_experiment_table(summary);
        if (!json_out.empty()) write_experiment_json(json_out, summary);
    } else {
        const EvalReport report = read_report_json(report_path);
        if (report.per_user.empty()) throw ProtocolError("report has no per-user results");
        std::cout << format_report_table(report);
        if (!json_out.empty()) write_report_json(json_out, report);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"offline handwritten signature verification toolkit"};
    app.require_subcommand(1);
    int rc = 0;
    const auto run = [&rc](auto fn) {
        return [&rc, fn]() { rc = fn(); };
    };

    // gen-synthetic
    auto* gen = app.add_subcommand("gen-synthetic", "generate a deterministic synthetic dataset");
    ConfigArgs gen_cfg;
    gen_cfg.attach(gen);
    std::string gen_out;
    std::size_t gen_users = 20, gen_genuine = 24, gen_forgeries = 30;
    gen->add_option("--out", gen_out, "output dataset directory")->required();
    gen->add_option("--users", gen_users, "number of identities");
    gen->add_option("--genuine", gen_genuine, "genuine signatures per identity");
    gen->add_option("--forgeries", gen_forgeries, "skilled forgeries per identity");
    gen->callback(run([&]() {
        return cmd_gen_synthetic(gen_cfg, gen_out, gen_users, gen_genuine, gen_forgeries);
    }));

    // preprocess
    auto* pre = app.add_subcommand("preprocess", "normalize a dataset into image tensors");
    ConfigArgs pre_cfg;
    pre_cfg.attach(pre);
    std::string pre_data, pre_out;
    std::size_t pre_jobs = default_jobs();
    pre->add_option("--data", pre_data, "dataset directory")->required()->check(CLI::ExistingDirectory);
    pre->add_option("--out", pre_out, "output cache directory")->required();
    pre->add_option("--jobs", pre_jobs, "worker threads (default: SIGNET_JOBS or 1)");
    pre->callback(run([&]() { return cmd_preprocess(pre_cfg, pre_data, pre_out, pre_jobs); }));

    // train-cnn
    auto* tc = app.add_subcommand("train-cnn", "train the feature network on development users");
    ConfigArgs tc_cfg;
    tc_cfg.attach(tc);
    std::string tc_data, tc_out, tc_resume, tc_metrics, tc_state, tc_pre;
    tc->add_option("--data", tc_data, "dataset directory")->required()->check(CLI::ExistingDirectory);
    tc->add_option("--out", tc_out, "checkpoint to write")->required();
    tc->add_option("--resume", tc_resume, "training state to continue from")
        ->check(CLI::ExistingFile);
    tc->add_option("--metrics", tc_metrics, "per-epoch metrics CSV (default: <out>.metrics.csv)");
    tc->add_option("--state", tc_state, "training state path (default: <out>.state)");
    tc->add_option("--pre", tc_pre, "preprocessing cache (default: <out dir>/pre)");
    tc->callback(run([&]() {
        return cmd_train_cnn(tc_cfg, tc_data, tc_out, tc_resume, tc_metrics, tc_state, tc_pre);
    }));

    // extract
    auto* ex = app.add_subcommand("extract", "embed every signature with a trained network");
    ConfigArgs ex_cfg;
    ex_cfg.attach(ex);
    std::string ex_ckpt, ex_data, ex_out, ex_pre;
    ex->add_option("--checkpoint", ex_ckpt, "network checkpoint")->required()->check(CLI::ExistingFile);
    ex->add_option("--data", ex_data, "dataset directory")->required()->check(CLI::ExistingDirectory);
    ex->add_option("--out", ex_out, "feature file to write")->required();
    ex->add_option("--pre", ex_pre, "preprocessing cache (default: <out dir>/pre)");
    ex->callback(run([&]() { return cmd_extract(ex_cfg, ex_ckpt, ex_data, ex_out, ex_pre); }));

    // train-wd
    auto* wd = app.add_subcommand("train-wd", "train one user's verifier from a feature file");
    ConfigArgs wd_cfg;
    wd_cfg.attach(wd);
    std::string wd_features, wd_kernel, wd_out;
    std::uint32_t wd_user = 0;
    std::size_t wd_refs = 5, wd_negs = 0;
    wd->add_option("--features", wd_features, "feature file")->required()->check(CLI::ExistingFile);
    wd->add_option("--user", wd_user, "identity to enroll")->required();
    wd->add_option("--refs", wd_refs, "number of genuine references");
    wd->add_option("--kernel", wd_kernel, "linear or rbf (overrides wd.kernel)");
    wd->add_option("--negatives-per-user", wd_negs,
                   "negatives drawn per other identity (default: --refs)");
    wd->add_option("--out", wd_out, "verifier model to write")->required();
    wd->callback(run([&]() {
        return cmd_train_wd(wd_cfg, wd_features, wd_user, wd_refs, wd_kernel, wd_out, wd_negs);
    }));

    // score
    auto* sc = app.add_subcommand("score", "score presentations against one user's verifier");
    std::string sc_features, sc_model, sc_out;
    std::uint32_t sc_user = 0;
    sc->add_option("--features", sc_features, "feature file")->required()->check(CLI::ExistingFile);
    sc->add_option("--model", sc_model, "verifier model")->required()->check(CLI::ExistingFile);
    sc->add_option("--user", sc_user, "claimed identity")->required();
    sc->add_option("--out", sc_out, "scores CSV to write")->required();
    sc->callback(run([&]() { return cmd_score(sc_features, sc_model, sc_user, sc_out); }));

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "compute the error-rate report from score CSVs");
    std::string ev_scores, ev_validation, ev_report;
    ev->add_option("--scores", ev_scores, "test scores CSV")->required()->check(CLI::ExistingFile);
    ev->add_option("--validation-scores", ev_validation,
                   "validation scores CSV for threshold selection")
        ->check(CLI::ExistingFile);
    ev->add_option("--report", ev_report, "report JSON to write");
    ev->callback(run([&]() { return cmd_evaluate(ev_scores, ev_validation, ev_report); }));

    // pipeline
    auto* pl = app.add_subcommand("pipeline", "run every stage end to end");
    ConfigArgs pl_cfg;
    pl_cfg.attach(pl);
    std::string pl_work;
    bool pl_force = false;
    std::size_t pl_jobs = default_jobs();
    pl->add_option("--work", pl_work, "working directory for all artifacts")->required();
    pl->add_flag("--force", pl_force, "rebuild artifacts whose configuration hash mismatches");
    pl->add_option("--jobs", pl_jobs, "worker threads (default: SIGNET_JOBS or 1)");
    pl->callback(run([&]() { return cmd_pipeline(pl_cfg, pl_work, pl_force, pl_jobs); }));

    // lambda-sweep
    auto* sw = app.add_subcommand("lambda-sweep",
                                  "train and evaluate one network per loss-weight value");
    ConfigArgs sw_cfg;
    sw_cfg.attach(sw);
    std::string sw_work;
    std::vector<double> sw_lambdas;
    bool sw_force = false;
    std::size_t sw_jobs = default_jobs();
    sw->add_option("--work", sw_work, "working directory for all artifacts")->required();
    sw->add_option("--lambdas", sw_lambdas, "loss-weight values (comma separated)")
        ->required()
        ->delimiter(',');
    sw->add_flag("--force", sw_force, "rebuild artifacts whose configuration hash mismatches");
    sw->add_option("--jobs", sw_jobs, "worker threads (default: SIGNET_JOBS or 1)");
    sw->callback(
        run([&]() { return cmd_lambda_sweep(sw_cfg, sw_work, sw_lambdas, sw_force, sw_jobs); }));

    // report
    auto* rp = app.add_subcommand("report", "render a stored report or experiment record");
    std::string rp_experiment, rp_report, rp_json;
    rp->add_option("--experiment", rp_experiment, "experiment record (experiment.json)")
        ->check(CLI::ExistingFile);
    rp->add_option("--report", rp_report, "single-replication report JSON")
        ->check(CLI::ExistingFile);
    rp->add_option("--json-out", rp_json, "re-emit the parsed record as JSON");
    rp->callback(run([&]() { return cmd_report(rp_experiment, rp_report, rp_json); }));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return rc;
}
