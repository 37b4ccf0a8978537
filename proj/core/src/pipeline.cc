#include "signet/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <json.hpp>

#include "signet/checkpoint.hpp"
#include "signet/errors.hpp"
#include "signet/io.hpp"
#include "signet/rng.hpp"

namespace fs = std::filesystem;

namespace signet {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt_size_list(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

std::string hash_hex(std::uint64_t h) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// Hash of the canonical config restricted to keys matching any prefix.
std::uint64_t filtered_hash(const Config& canonical, const std::vector<std::string>& prefixes) {
    Config subset;
    for (const auto& [key, value] : canonical.entries()) {
        for (const auto& p : prefixes) {
            if (key.rfind(p, 0) == 0) {
                subset.set(key, value);
                break;
            }
        }
    }
    return subset.hash();
}

// ---------------------------------------------------------------------------
// Stage markers: a hidden file holding the hash the artifact was built under.
// ---------------------------------------------------------------------------

enum class Freshness { missing, match, mismatch };

void write_marker(const std::string& path, std::uint64_t hash) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write stage marker: " + path);
    out << hash_hex(hash) << "\n";
}

Freshness probe_marker(const std::string& path, std::uint64_t expected) {
    std::ifstream in(path);
    if (!in) return Freshness::missing;
    std::string line;
    std::getline(in, line);
    return line == hash_hex(expected) ? Freshness::match : Freshness::mismatch;
}

// Returns true when the stage must rebuild its artifact; throws on a hash
// mismatch unless `force` allows discarding the stale artifact.
bool should_rebuild(const std::string& stage, const std::string& artifact, Freshness f, bool force,
                    std::ostream* log) {
    switch (f) {
        case Freshness::match:
            if (log) *log << "[pipeline] " << stage << ": reusing " << artifact << "\n";
            return false;
        case Freshness::missing:
            if (log) *log << "[pipeline] " << stage << ": building " << artifact << "\n";
            return true;
        case Freshness::mismatch:
            if (!force) {
                throw ProtocolError("stage " + stage + ": " + artifact +
                                    " was produced under a different configuration "
                                    "(hash mismatch); pass --force to rebuild it");
            }
            if (log) *log << "[pipeline] " << stage << ": rebuilding " << artifact
                          << " (config hash changed)\n";
            return true;
    }
    return true;  // unreachable
}

// ---------------------------------------------------------------------------
// Minimal deterministic work-sharing loop. Tasks are independent; results
// must be written to pre-sized per-index slots so the outcome is identical
// for any job count.
// ---------------------------------------------------------------------------

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    if (jobs <= 1 || n == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const std::size_t workers = std::min(jobs, n);
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w]() {
            try {
                for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
                // Drain the counter so the other workers stop picking up work.
                next.store(n);
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

std::string user_dir_name(std::uint32_t user) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "u%04u", user);
    return buf;
}

std::string replication_dir(const std::string& work_dir, std::size_t rep) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "rep%03zu", rep);
    return work_dir + "/" + buf;
}

std::unordered_map<std::string, std::uint32_t> ordinals_by_path(const DatasetIndex& index) {
    std::unordered_map<std::string, std::uint32_t> map;
    map.reserve(index.records.size());
    for (std::size_t i = 0; i < index.records.size(); ++i)
        map.emplace(index.records[i].path, static_cast<std::uint32_t>(i));
    return map;
}

const FeatureRecord& feature_for(const FeatureSet& features,
                                 const std::unordered_map<std::string, std::uint32_t>& ordinal_of,
                                 const std::string& path) {
    auto it = ordinal_of.find(path);
    if (it == ordinal_of.end())
        throw ProtocolError("split references a sample missing from the dataset index: " + path);
    const FeatureRecord* rec = features.by_sample(it->second);
    if (!rec)
        throw ProtocolError("no embedded features for sample " + std::to_string(it->second) +
                            " (" + path + "); re-run the extract stage");
    return *rec;
}

// Trains one verifier per user in [first_user, first_user + count) from the
// given split tags and scores that user's test presentations. Model files go
// to <model_dir>/u%04u.sgwd.
std::vector<ScoredSample> score_group(const SplitListing& listing, const FeatureSet& features,
                                      const std::unordered_map<std::string, std::uint32_t>& ordinal_of,
                                      const WDConfig& wd, const std::string& ref_tag,
                                      const std::string& neg_tag, const std::string& test_tag,
                                      std::uint32_t first_user, std::size_t count,
                                      const std::string& model_dir, std::uint64_t hash,
                                      std::size_t jobs) {
    fs::create_directories(model_dir);
    std::vector<std::vector<ScoredSample>> slots(count);
    parallel_for(count, jobs, [&](std::size_t i) {
        const std::uint32_t user = first_user + static_cast<std::uint32_t>(i);
        const auto refs = listing.of(ref_tag, user);
        const auto negs = listing.of(neg_tag, user);
        const auto tests = listing.of(test_tag, user);
        if (refs.empty() || negs.empty() || tests.empty()) {
            throw ProtocolError("user " + std::to_string(user) + ": split has no '" +
                                (refs.empty() ? ref_tag : negs.empty() ? neg_tag : test_tag) +
                                "' rows");
        }
        std::vector<std::vector<float>> pos, neg;
        pos.reserve(refs.size());
        neg.reserve(negs.size());
        for (const SplitEntry* e : refs)
            pos.push_back(feature_for(features, ordinal_of, e->path).values);
        for (const SplitEntry* e : negs)
            neg.push_back(feature_for(features, ordinal_of, e->path).values);
        WDModel model = train_wd(pos, neg, wd);
        save_wd_model(model_dir + "/" + user_dir_name(user) + ".sgwd", model, hash);
        slots[i].reserve(tests.size());
        for (const SplitEntry* e : tests) {
            const FeatureRecord& f = feature_for(features, ordinal_of, e->path);
            ScoredSample s;
            s.user = user;
            s.sample = f.sample;
            s.kind = e->kind;
            s.score = decision_value(model, f.values);
            slots[i].push_back(s);
        }
    });
    std::vector<ScoredSample> out;
    for (auto& slot : slots) out.insert(out.end(), slot.begin(), slot.end());
    return out;
}

}  // namespace

std::size_t development_user_count(const RunConfig& run, const DatasetIndex& index) {
    const std::size_t e = run.split.exploitation_users;
    if (index.num_users <= e)
        throw ProtocolError("dataset has " + std::to_string(index.num_users) +
                            " users but the split claims " + std::to_string(e) +
                            " exploitation users and needs development users beyond them");
    const std::size_t remaining = index.num_users - e;
    const std::size_t d =
        run.split.development_users == 0 ? remaining : run.split.development_users;
    if (d > remaining)
        throw ProtocolError("split.development_users exceeds the users available");
    return d;
}

// ---------------------------------------------------------------------------
// RunConfig
// ---------------------------------------------------------------------------

RunConfig RunConfig::from_config(const Config& cfg) {
    RunConfig run;
    run.master_seed = cfg.get_uint("seed", run.master_seed);
    run.replications = cfg.get_uint("replications", run.replications);

    run.dataset_dir = cfg.get_string("data.dir", run.dataset_dir);
    run.synth_users = cfg.get_uint("data.users", run.synth_users);
    run.synth_genuine = cfg.get_uint("data.genuine", run.synth_genuine);
    run.synth_forgeries = cfg.get_uint("data.forgeries", run.synth_forgeries);

    run.synth.stroke_min = static_cast<int>(cfg.get_int("synth.stroke_min", run.synth.stroke_min));
    run.synth.stroke_max = static_cast<int>(cfg.get_int("synth.stroke_max", run.synth.stroke_max));
    run.synth.jitter = cfg.get_double("synth.jitter", run.synth.jitter);
    run.synth.forgery_jitter = cfg.get_double("synth.forgery_jitter", run.synth.forgery_jitter);
    run.synth.canvas_height =
        static_cast<int>(cfg.get_int("synth.canvas_height", run.synth.canvas_height));
    run.synth.canvas_width =
        static_cast<int>(cfg.get_int("synth.canvas_width", run.synth.canvas_width));

    run.pre.canvas_height = static_cast<int>(cfg.get_int("pre.canvas_height", run.pre.canvas_height));
    run.pre.canvas_width = static_cast<int>(cfg.get_int("pre.canvas_width", run.pre.canvas_width));
    run.pre.resize_height = static_cast<int>(cfg.get_int("pre.resize_height", run.pre.resize_height));
    run.pre.resize_width = static_cast<int>(cfg.get_int("pre.resize_width", run.pre.resize_width));
    run.pre.input_height = static_cast<int>(cfg.get_int("pre.input_height", run.pre.input_height));
    run.pre.input_width = static_cast<int>(cfg.get_int("pre.input_width", run.pre.input_width));

    run.conv_channels = cfg.get_size_list("network.conv_channels", run.conv_channels);
    run.fc_dims = cfg.get_size_list("network.fc_dims", run.fc_dims);

    run.train.batch_size = cfg.get_uint("training.batch_size", run.train.batch_size);
    run.train.momentum = cfg.get_double("training.momentum", run.train.momentum);
    run.train.weight_decay = cfg.get_double("training.weight_decay", run.train.weight_decay);
    run.train.epochs = cfg.get_uint("training.epochs", run.train.epochs);
    run.train.lr_initial = cfg.get_double("training.lr", run.train.lr_initial);
    run.train.lr_drop_factor = cfg.get_double("training.lr_drop_factor", run.train.lr_drop_factor);
    run.train.lr_drop_every = cfg.get_uint("training.lr_drop_every", run.train.lr_drop_every);
    run.train.input_scale = cfg.get_double("training.input_scale", run.train.input_scale);
    run.train.formulation =
        parse_loss_formulation(cfg.get_string("loss.formulation", to_string(run.train.formulation)));
    run.train.lambda = cfg.get_double("loss.lambda", run.train.lambda);

    run.split.exploitation_users =
        cfg.get_uint("split.exploitation_users", run.split.exploitation_users);
    run.split.development_users =
        cfg.get_uint("split.development_users", run.split.development_users);
    run.split.train_fraction = cfg.get_double("split.train_fraction", run.split.train_fraction);
    run.split.vv_users = cfg.get_uint("split.vv_users", run.split.vv_users);
    run.split.reference_count = cfg.get_uint("split.reference_count", run.split.reference_count);
    run.split.test_random = cfg.get_uint("split.test_random", run.split.test_random);
    run.split.negatives_from_development =
        cfg.get_bool("split.negatives_from_development", run.split.negatives_from_development);
    run.split.negatives_per_pool_user =
        cfg.get_uint("split.negatives_per_pool_user", run.split.negatives_per_pool_user);

    run.wd.kernel = parse_kernel(cfg.get_string("wd.kernel", to_string(run.wd.kernel)));
    run.wd.c_minus = cfg.get_double("wd.c_minus", run.wd.c_minus);
    run.wd.gamma_rbf = cfg.get_double("wd.gamma_rbf", run.wd.gamma_rbf);
    run.wd.tolerance = cfg.get_double("wd.tolerance", run.wd.tolerance);
    run.wd.iteration_cap_per_point =
        cfg.get_uint("wd.iteration_cap", run.wd.iteration_cap_per_point);

    run.validate();
    return run;
}

void RunConfig::validate() const {
    if (replications == 0) throw ConfigError("replications must be positive");
    if (dataset_dir.empty()) {
        if (synth_users == 0 || synth_genuine == 0)
            throw ConfigError("synthetic data needs data.users and data.genuine >= 1");
        synth.validate();
    }
    pre.validate();
    train.validate();
    split.validate();
    wd.validate();
    if (conv_channels.size() != 5)
        throw ConfigError("network.conv_channels must list exactly five widths");
    if (fc_dims.empty()) throw ConfigError("network.fc_dims must list at least one width");
}

Config RunConfig::canonical() const {
    Config c;
    c.set("seed", std::to_string(master_seed));
    c.set("replications", std::to_string(replications));
    c.set("data.dir", dataset_dir);
    c.set("data.users", std::to_string(synth_users));
    c.set("data.genuine", std::to_string(synth_genuine));
    c.set("data.forgeries", std::to_string(synth_forgeries));
    c.set("synth.stroke_min", std::to_string(synth.stroke_min));
    c.set("synth.stroke_max", std::to_string(synth.stroke_max));
    c.set("synth.jitter", fmt_double(synth.jitter));
    c.set("synth.forgery_jitter", fmt_double(synth.forgery_jitter));
    c.set("synth.canvas_height", std::to_string(synth.canvas_height));
    c.set("synth.canvas_width", std::to_string(synth.canvas_width));
    c.set("pre.canvas_height", std::to_string(pre.canvas_height));
    c.set("pre.canvas_width", std::to_string(pre.canvas_width));
    c.set("pre.resize_height", std::to_string(pre.resize_height));
    c.set("pre.resize_width", std::to_string(pre.resize_width));
    c.set("pre.input_height", std::to_string(pre.input_height));
    c.set("pre.input_width", std::to_string(pre.input_width));
    c.set("network.conv_channels", fmt_size_list(conv_channels));
    c.set("network.fc_dims", fmt_size_list(fc_dims));
    c.set("training.batch_size", std::to_string(train.batch_size));
    c.set("training.momentum", fmt_double(train.momentum));
    c.set("training.weight_decay", fmt_double(train.weight_decay));
    c.set("training.epochs", std::to_string(train.epochs));
    c.set("training.lr", fmt_double(train.lr_initial));
    c.set("training.lr_drop_factor", fmt_double(train.lr_drop_factor));
    c.set("training.lr_drop_every", std::to_string(train.lr_drop_every));
    c.set("training.input_scale", fmt_double(train.input_scale));
    c.set("loss.formulation", to_string(train.formulation));
    c.set("loss.lambda", fmt_double(train.lambda));
    c.set("split.exploitation_users", std::to_string(split.exploitation_users));
    c.set("split.development_users", std::to_string(split.development_users));
    c.set("split.train_fraction", fmt_double(split.train_fraction));
    c.set("split.vv_users", std::to_string(split.vv_users));
    c.set("split.reference_count", std::to_string(split.reference_count));
    c.set("split.test_random", std::to_string(split.test_random));
    c.set("split.negatives_from_development",
          split.negatives_from_development ? "true" : "false");
    c.set("split.negatives_per_pool_user", std::to_string(split.negatives_per_pool_user));
    c.set("wd.kernel", to_string(wd.kernel));
    c.set("wd.c_minus", fmt_double(wd.c_minus));
    c.set("wd.gamma_rbf", fmt_double(wd.gamma_rbf));
    c.set("wd.tolerance", fmt_double(wd.tolerance));
    c.set("wd.iteration_cap", std::to_string(wd.iteration_cap_per_point));
    return c;
}

std::uint64_t RunConfig::data_hash() const {
    return filtered_hash(canonical(), {"seed", "data.", "synth."});
}

std::uint64_t RunConfig::pre_hash() const {
    return filtered_hash(canonical(), {"seed", "data.", "synth.", "pre."});
}

std::uint64_t RunConfig::model_hash() const {
    return filtered_hash(canonical(),
                         {"seed", "data.", "synth.", "pre.", "network.", "training.", "loss."});
}

std::uint64_t RunConfig::eval_hash() const {
    return filtered_hash(canonical(), {"seed", "data.", "synth.", "pre.", "network.", "training.",
                                       "loss.", "split.", "wd."});
}

std::uint64_t RunConfig::full_hash() const { return canonical().hash(); }

NetworkSpec RunConfig::network_spec(std::size_t dev_users) const {
    return make_signature_network_spec(dev_users, train.formulation, conv_channels, fc_dims,
                                       static_cast<std::size_t>(pre.input_height),
                                       static_cast<std::size_t>(pre.input_width));
}

std::string PipelineOptions::resolved_pre_dir() const {
    return pre_cache_dir.empty() ? work_dir + "/pre" : pre_cache_dir;
}

// ---------------------------------------------------------------------------
// Aggregates
// ---------------------------------------------------------------------------

Aggregate aggregate_of(const std::vector<double>& values) {
    Aggregate a;
    if (values.empty()) return a;
    double sum = 0.0;
    for (double v : values) sum += v;
    a.mean = sum / static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - a.mean) * (v - a.mean);
        a.stdev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return a;
}

void recompute_aggregates(ExperimentSummary& summary) {
    auto collect = [&](auto getter) {
        std::vector<double> v;
        v.reserve(summary.replications.size());
        for (const auto& r : summary.replications) v.push_back(getter(r.report));
        return aggregate_of(v);
    };
    summary.eer_global = collect([](const EvalReport& r) { return r.eer_global; });
    summary.eer_user = collect([](const EvalReport& r) { return r.eer_user; });
    summary.mean_auc = collect([](const EvalReport& r) { return r.mean_auc; });
    summary.aer = collect([](const EvalReport& r) { return r.aer; });
    summary.aer_genuine_skilled =
        collect([](const EvalReport& r) { return r.aer_genuine_skilled; });
    summary.frr = collect([](const EvalReport& r) { return r.rates.frr; });
    summary.far_random = collect([](const EvalReport& r) { return r.rates.far_random; });
    summary.far_skilled = collect([](const EvalReport& r) { return r.rates.far_skilled; });
}

// ---------------------------------------------------------------------------
// Preprocessed-image cache
// ---------------------------------------------------------------------------

std::string preprocessed_path(const SampleRecord& rec, const std::string& pre_dir) {
    std::string name = sample_filename(rec.user, rec.kind, rec.sample);
    if (name.size() > 4 && name.substr(name.size() - 4) == ".png")
        name = name.substr(0, name.size() - 4);
    return pre_dir + "/" + user_dir_name(rec.user) + "/" + name + ".sgt";
}

namespace {

FloatImage tensor_to_image(const Tensor& t) {
    if (t.shape.size() != 2)
        throw ShapeError("cached image tensor must be rank 2, got " + t.shape_string());
    FloatImage img(static_cast<int>(t.shape[0]), static_cast<int>(t.shape[1]));
    img.pixels = t.data;
    return img;
}

Tensor image_to_tensor(const FloatImage& img) {
    Tensor t({static_cast<std::size_t>(img.height), static_cast<std::size_t>(img.width)});
    t.data = img.pixels;
    return t;
}

FloatImage compute_and_cache(const SampleRecord& rec, const PreprocessConfig& cfg,
                             const std::string& pre_dir) {
    const RawImage raw = read_png_gray8(rec.path);
    FloatImage img = preprocess_image(raw, cfg);
    const std::string out = preprocessed_path(rec, pre_dir);
    fs::create_directories(fs::path(out).parent_path());
    save_tensor(out, image_to_tensor(img));
    return img;
}

}  // namespace

FloatImage load_preprocessed(const SampleRecord& rec, const PreprocessConfig& cfg,
                             const std::string& pre_dir) {
    const std::string path = preprocessed_path(rec, pre_dir);
    if (fs::exists(path)) {
        Tensor t = load_tensor(path);
        if (t.shape.size() == 2 && t.shape[0] == static_cast<std::size_t>(cfg.resize_height) &&
            t.shape[1] == static_cast<std::size_t>(cfg.resize_width)) {
            return tensor_to_image(t);
        }
        // Shape drift means the cache entry belongs to another geometry.
    }
    return compute_and_cache(rec, cfg, pre_dir);
}

void preprocess_dataset(const DatasetIndex& index, const PreprocessConfig& cfg,
                        const std::string& pre_dir, std::size_t jobs, std::ostream* log) {
    cfg.validate();
    // Directories are created up front so the workers only touch files.
    std::set<std::uint32_t> users;
    for (const auto& rec : index.records) users.insert(rec.user);
    for (std::uint32_t u : users) fs::create_directories(pre_dir + "/" + user_dir_name(u));
    if (log)
        *log << "[pipeline] preprocess: " << index.records.size() << " images -> " << pre_dir
             << "\n";
    parallel_for(index.records.size(), jobs, [&](std::size_t i) {
        const SampleRecord& rec = index.records[i];
        const RawImage raw = read_png_gray8(rec.path);
        const FloatImage img = preprocess_image(raw, cfg);
        save_tensor(preprocessed_path(rec, pre_dir), image_to_tensor(img));
    });
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

DatasetIndex pipeline_dataset(const RunConfig& run, const PipelineOptions& opts) {
    if (!run.dataset_dir.empty()) {
        if (opts.log)
            *opts.log << "[pipeline] dataset: indexing existing data at " << run.dataset_dir
                      << "\n";
        return load_index(run.dataset_dir);
    }
    const std::string data_dir = opts.work_dir + "/data";
    const std::string marker = data_dir + "/.signet-data";
    const Freshness f = probe_marker(marker, run.data_hash());
    if (!should_rebuild("dataset", data_dir, f, opts.force, opts.log)) return load_index(data_dir);
    // The directory is pipeline-owned; clear it so a shrunken run cannot pick
    // up leftover users from a previous, larger generation.
    fs::remove_all(data_dir);
    fs::create_directories(data_dir);
    DatasetIndex index = generate_synthetic_dataset(data_dir, run.synth_users, run.synth_genuine,
                                                    run.synth_forgeries, run.synth,
                                                    run.master_seed);
    write_marker(marker, run.data_hash());
    return index;
}

void pipeline_preprocess(const RunConfig& run, const PipelineOptions& opts,
                         const DatasetIndex& index) {
    const std::string pre_dir = opts.resolved_pre_dir();
    const std::string marker = pre_dir + "/.signet-pre";
    const Freshness f = probe_marker(marker, run.pre_hash());
    if (!should_rebuild("preprocess", pre_dir, f, opts.force, opts.log)) return;
    fs::remove_all(pre_dir);
    fs::create_directories(pre_dir);
    preprocess_dataset(index, run.pre, pre_dir, opts.jobs, opts.log);
    write_marker(marker, run.pre_hash());
}

LabeledImageSet development_training_set(const RunConfig& run, const SplitListing& listing,
                                         const std::string& pre_dir) {
    const bool use_forgeries = run.train.formulation != LossFormulation::genuine_only;
    const std::uint32_t base = static_cast<std::uint32_t>(run.split.exploitation_users);
    LabeledImageSet data;
    const auto rows = listing.of("lc");
    for (const SplitEntry* row : rows) {
        if (row->kind != SampleKind::genuine && !use_forgeries) continue;
        SampleRecord rec = parse_sample_filename(fs::path(row->path).filename().string());
        rec.path = row->path;
        LabeledImage item;
        item.image = load_preprocessed(rec, run.pre, pre_dir);
        item.user = row->user - base;
        item.forgery = row->kind != SampleKind::genuine;
        data.push_back(std::move(item));
    }
    if (data.empty()) throw ProtocolError("development split produced an empty training set");
    return data;
}

FeatureSet embed_index(Network& net, const DatasetIndex& index, const RunConfig& run,
                       const std::string& pre_dir) {
    FeatureSet all;
    const std::size_t chunk = std::max<std::size_t>(run.train.batch_size, 16);
    for (std::size_t begin = 0; begin < index.records.size(); begin += chunk) {
        const std::size_t end = std::min(begin + chunk, index.records.size());
        LabeledImageSet images;
        std::vector<std::uint32_t> ids;
        images.reserve(end - begin);
        ids.reserve(end - begin);
        for (std::size_t i = begin; i < end; ++i) {
            const SampleRecord& rec = index.records[i];
            LabeledImage item;
            item.image = load_preprocessed(rec, run.pre, pre_dir);
            item.user = rec.user;
            item.forgery = rec.forgery();
            images.push_back(std::move(item));
            ids.push_back(static_cast<std::uint32_t>(i));
        }
        FeatureSet part =
            extract_features(net, images, ids, run.train.input_scale, run.train.batch_size);
        all.dim = part.dim;
        all.records.insert(all.records.end(), part.records.begin(), part.records.end());
    }
    return all;
}

Network pipeline_train(const RunConfig& run, const PipelineOptions& opts,
                       const DatasetIndex& index) {
    const std::string checkpoint = opts.work_dir + "/checkpoint.sgnt";
    const std::string state = opts.work_dir + "/train_state.sgtr";
    const std::string metrics = opts.work_dir + "/metrics.csv";
    const std::uint64_t expected = run.model_hash();

    // A readable checkpoint with the right hash is a finished stage.
    if (fs::exists(checkpoint)) {
        Freshness f = Freshness::missing;
        try {
            std::uint64_t h = 0;
            Network net = load_checkpoint(checkpoint, &h);
            f = h == expected ? Freshness::match : Freshness::mismatch;
            if (!should_rebuild("train", checkpoint, f, opts.force, opts.log)) return net;
        } catch (const ProtocolError&) {
            throw;
        } catch (const std::exception& e) {
            if (opts.log)
                *opts.log << "[pipeline] train: existing checkpoint unreadable (" << e.what()
                          << "), retraining\n";
        }
    }

    // An unfinished run can continue from its training state.
    std::string resume_from;
    if (fs::exists(state)) {
        try {
            TrainingSnapshot snap;
            std::uint64_t h = 0;
            (void)load_training_state(state, snap, &h);
            if (h == expected) {
                resume_from = state;
                if (opts.log)
                    *opts.log << "[pipeline] train: resuming after "
                              << snap.completed_epochs << " completed epochs\n";
            } else if (!opts.force) {
                throw ProtocolError("stage train: " + state +
                                    " was produced under a different configuration "
                                    "(hash mismatch); pass --force to rebuild it");
            } else if (opts.log) {
                *opts.log << "[pipeline] train: discarding stale training state\n";
            }
        } catch (const ProtocolError&) {
            throw;
        } catch (const std::exception& e) {
            if (opts.log)
                *opts.log << "[pipeline] train: training state unreadable (" << e.what()
                          << "), starting over\n";
        }
    }
    if (resume_from.empty() && opts.log)
        *opts.log << "[pipeline] train: " << run.train.epochs << " epochs -> " << checkpoint
                  << "\n";

    const std::size_t dev_users = development_user_count(run, index);
    const SplitListing listing =
        build_split(index, run.split, derive_seed(run.master_seed, "split"));
    const LabeledImageSet data =
        development_training_set(run, listing, opts.resolved_pre_dir());

    TrainConfig tc = run.train;
    tc.rng_seed = derive_seed(run.master_seed, "train");
    Network net(run.network_spec(dev_users));

    TrainRunOptions topts;
    topts.metrics_csv = metrics;
    topts.state_path = state;
    topts.resume_from = resume_from;
    topts.config_hash = expected;
    run_training(net, data, tc, topts);
    save_checkpoint(checkpoint, net, expected);
    return net;
}

FeatureSet pipeline_features(const RunConfig& run, const PipelineOptions& opts,
                             const DatasetIndex& index, Network& net) {
    const std::string path = opts.work_dir + "/features.sgfv";
    const std::uint64_t expected = run.model_hash();
    if (fs::exists(path)) {
        try {
            std::uint64_t h = 0;
            FeatureSet set = load_features(path, &h);
            Freshness f = (h == expected && set.records.size() == index.records.size())
                              ? Freshness::match
                              : Freshness::mismatch;
            if (!should_rebuild("extract", path, f, opts.force, opts.log)) return set;
        } catch (const ProtocolError&) {
            throw;
        } catch (const std::exception& e) {
            if (opts.log)
                *opts.log << "[pipeline] extract: existing feature file unreadable (" << e.what()
                          << "), re-extracting\n";
        }
    } else if (opts.log) {
        *opts.log << "[pipeline] extract: embedding " << index.records.size() << " images -> "
                  << path << "\n";
    }

    FeatureSet all = embed_index(net, index, run, opts.resolved_pre_dir());
    save_features(path, all, expected);
    return all;
}

ReplicationResult pipeline_replication(const RunConfig& run, const PipelineOptions& opts,
                                       const DatasetIndex& index, const FeatureSet& features,
                                       std::size_t replication) {
    const std::string rep_dir = replication_dir(opts.work_dir, replication);
    const std::string marker = rep_dir + "/.signet-rep";
    const std::uint64_t expected = run.eval_hash();
    const std::uint64_t split_seed =
        derive_seed(run.master_seed, "rep" + std::to_string(replication) + ".split");

    ReplicationResult result;
    result.replication = replication;
    result.split_seed = split_seed;

    const Freshness f = probe_marker(marker, expected);
    if (!should_rebuild("replication " + std::to_string(replication), rep_dir, f, opts.force,
                        opts.log)) {
        result.report = read_report_json(rep_dir + "/report.json");
        return result;
    }
    fs::remove_all(rep_dir);
    fs::create_directories(rep_dir);

    const SplitListing listing = build_split(index, run.split, split_seed);
    write_manifest(rep_dir + "/split.tsv", listing);
    const auto ordinal_of = ordinals_by_path(index);

    const std::uint32_t e = static_cast<std::uint32_t>(run.split.exploitation_users);
    const std::vector<ScoredSample> test_scores =
        score_group(listing, features, ordinal_of, run.wd, "lv", "neg", "tv", 0,
                    run.split.exploitation_users, rep_dir + "/wd", expected, opts.jobs);
    std::vector<ScoredSample> validation_scores;
    if (run.split.vv_users > 0) {
        validation_scores =
            score_group(listing, features, ordinal_of, run.wd, "vv_ref", "vv_neg", "vv_test", e,
                        run.split.vv_users, rep_dir + "/wd_validation", expected, opts.jobs);
    }
    write_scores_csv(rep_dir + "/scores.csv", test_scores);
    write_scores_csv(rep_dir + "/validation_scores.csv", validation_scores);

    result.report = evaluate(test_scores, validation_scores);
    write_report_json(rep_dir + "/report.json", result.report);
    write_marker(marker, expected);
    return result;
}

ExperimentSummary run_pipeline(const RunConfig& run, const PipelineOptions& opts) {
    run.validate();
    if (opts.work_dir.empty()) throw ConfigError("pipeline needs a work directory");
    fs::create_directories(opts.work_dir);

    const DatasetIndex index = pipeline_dataset(run, opts);
    pipeline_preprocess(run, opts, index);
    Network net = pipeline_train(run, opts, index);
    const FeatureSet features = pipeline_features(run, opts, index, net);

    ExperimentSummary summary;
    summary.config_hash = run.full_hash();
    for (std::size_t rep = 0; rep < run.replications; ++rep)
        summary.replications.push_back(pipeline_replication(run, opts, index, features, rep));
    recompute_aggregates(summary);
    write_experiment_json(opts.work_dir + "/experiment.json", summary);
    if (opts.log) *opts.log << "[pipeline] done: " << opts.work_dir << "/experiment.json\n";
    return summary;
}

// ---------------------------------------------------------------------------
// Lambda sweep
// ---------------------------------------------------------------------------

std::vector<SweepRow> run_lambda_sweep(const RunConfig& base, const std::vector<double>& lambdas,
                                       const PipelineOptions& opts) {
    base.validate();
    if (base.train.formulation != LossFormulation::multitask_l1 &&
        base.train.formulation != LossFormulation::multitask_l2) {
        throw ConfigError("lambda sweep requires a multitask loss formulation");
    }
    if (lambdas.empty()) throw ConfigError("lambda sweep needs at least one value");
    if (base.split.vv_users == 0)
        throw ConfigError("lambda sweep evaluates on validation identities; set split.vv_users");
    if (opts.work_dir.empty()) throw ConfigError("lambda sweep needs a work directory");
    fs::create_directories(opts.work_dir);

    // Sweep points share one dataset and preprocessing cache; only stages
    // downstream of the loss depend on lambda.
    std::set<std::string> names;
    for (double l : lambdas) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.6g", l);
        if (!names.insert(buf).second)
            throw ConfigError(std::string("lambda sweep: duplicate value ") + buf);
    }
    const DatasetIndex index = pipeline_dataset(base, opts);
    pipeline_preprocess(base, opts, index);

    std::vector<SweepRow> rows;
    for (double lambda : lambdas) {
        RunConfig run = base;
        run.train.lambda = lambda;

        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.6g", lambda);
        PipelineOptions sub = opts;
        sub.work_dir = opts.work_dir + "/lambda_" + buf;
        sub.pre_cache_dir = opts.resolved_pre_dir();
        fs::create_directories(sub.work_dir);
        if (opts.log) *opts.log << "[sweep] lambda = " << buf << "\n";

        Network net = pipeline_train(run, sub, index);
        FeatureSet features = pipeline_features(run, sub, index, net);

        const SplitListing listing =
            build_split(index, run.split, derive_seed(run.master_seed, "split"));
        const auto ordinal_of = ordinals_by_path(index);
        const std::uint32_t e = static_cast<std::uint32_t>(run.split.exploitation_users);
        const std::vector<ScoredSample> vv_scores =
            score_group(listing, features, ordinal_of, run.wd, "vv_ref", "vv_neg", "vv_test", e,
                        run.split.vv_users, sub.work_dir + "/wd_validation", run.eval_hash(),
                        opts.jobs);
        write_scores_csv(sub.work_dir + "/validation_scores.csv", vv_scores);
        const EvalReport report = evaluate(vv_scores, vv_scores);

        SweepRow row;
        row.lambda = lambda;
        row.eer_global = report.eer_global;
        row.eer_user = report.eer_user;
        row.mean_auc = report.mean_auc;
        rows.push_back(row);
    }

    std::ofstream csv(opts.work_dir + "/sweep.csv", std::ios::trunc);
    if (!csv) throw IoError("cannot write sweep table: " + opts.work_dir + "/sweep.csv");
    csv << sweep_to_csv(rows);
    return rows;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
    std::string out = "lambda,eer_global,eer_user,mean_auc\n";
    for (const auto& r : rows) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%.10g,%.10g\n", r.lambda, r.eer_global,
                      r.eer_user, r.mean_auc);
        out += buf;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Experiment record serialization
// ---------------------------------------------------------------------------

namespace {

nlohmann::ordered_json aggregate_to_json(const Aggregate& a) {
    return {{"mean", a.mean}, {"stdev", a.stdev}};
}

Aggregate aggregate_from_json(const nlohmann::json& j) {
    Aggregate a;
    a.mean = j.at("mean").get<double>();
    a.stdev = j.at("stdev").get<double>();
    return a;
}

}  // namespace

std::string experiment_to_json(const ExperimentSummary& summary) {
    nlohmann::ordered_json j;
    j["config_hash"] = hash_hex(summary.config_hash);
    j["replications"] = nlohmann::ordered_json::array();
    for (const auto& rep : summary.replications) {
        nlohmann::ordered_json r;
        r["replication"] = rep.replication;
        r["split_seed"] = rep.split_seed;
        r["report"] = nlohmann::ordered_json::parse(report_to_json(rep.report));
        j["replications"].push_back(std::move(r));
    }
    nlohmann::ordered_json agg;
    agg["eer_global"] = aggregate_to_json(summary.eer_global);
    agg["eer_user"] = aggregate_to_json(summary.eer_user);
    agg["mean_auc"] = aggregate_to_json(summary.mean_auc);
    agg["aer"] = aggregate_to_json(summary.aer);
    agg["aer_genuine_skilled"] = aggregate_to_json(summary.aer_genuine_skilled);
    agg["frr"] = aggregate_to_json(summary.frr);
    agg["far_random"] = aggregate_to_json(summary.far_random);
    agg["far_skilled"] = aggregate_to_json(summary.far_skilled);
    j["aggregate"] = std::move(agg);
    return j.dump(2) + "\n";
}

ExperimentSummary experiment_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("experiment record: ") + e.what());
    }
    try {
        ExperimentSummary summary;
        summary.config_hash =
            std::stoull(j.at("config_hash").get<std::string>(), nullptr, 16);
        for (const auto& r : j.at("replications")) {
            ReplicationResult rep;
            rep.replication = r.at("replication").get<std::size_t>();
            rep.split_seed = r.at("split_seed").get<std::uint64_t>();
            rep.report = report_from_json(r.at("report").dump());
            summary.replications.push_back(std::move(rep));
        }
        const auto& agg = j.at("aggregate");
        summary.eer_global = aggregate_from_json(agg.at("eer_global"));
        summary.eer_user = aggregate_from_json(agg.at("eer_user"));
        summary.mean_auc = aggregate_from_json(agg.at("mean_auc"));
        summary.aer = aggregate_from_json(agg.at("aer"));
        summary.aer_genuine_skilled = aggregate_from_json(agg.at("aer_genuine_skilled"));
        summary.frr = aggregate_from_json(agg.at("frr"));
        summary.far_random = aggregate_from_json(agg.at("far_random"));
        summary.far_skilled = aggregate_from_json(agg.at("far_skilled"));
        return summary;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("experiment record: ") + e.what());
    } catch (const std::invalid_argument&) {
        throw ParseError("experiment record: malformed config_hash");
    } catch (const std::out_of_range&) {
        throw ParseError("experiment record: malformed config_hash");
    }
}

void write_experiment_json(const std::string& path, const ExperimentSummary& summary) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write experiment record: " + path);
    out << experiment_to_json(summary);
}

ExperimentSummary read_experiment_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read experiment record: " + path);
    std::ostringstream text;
    text << in.rdbuf();
    return experiment_from_json(text.str());
}

// ---------------------------------------------------------------------------
// Human-readable rendering
// ---------------------------------------------------------------------------

namespace {

std::string pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f%%", v * 100.0);
    return buf;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

void table_row(std::ostringstream& out, const std::string& label, const std::string& value) {
    out << "  " << label;
    for (std::size_t i = label.size(); i < 28; ++i) out << ' ';
    out << value << "\n";
}

}  // namespace

std::string format_report_table(const EvalReport& report) {
    std::ostringstream out;
    out << "verification report\n";
    table_row(out, "decision threshold", num(report.threshold));
    table_row(out, "FRR", pct(report.rates.frr));
    table_row(out, "FAR (random)", pct(report.rates.far_random));
    if (report.rates.far_simple) table_row(out, "FAR (simple)", pct(*report.rates.far_simple));
    table_row(out, "FAR (skilled)", pct(report.rates.far_skilled));
    table_row(out, "EER (global threshold)", pct(report.eer_global));
    table_row(out, "EER (user thresholds)", pct(report.eer_user));
    table_row(out, "mean AUC", num(report.mean_auc));
    table_row(out, "AER", pct(report.aer));
    table_row(out, "AER (genuine/skilled)", pct(report.aer_genuine_skilled));
    if (!report.per_user.empty()) {
        out << "\n  user      EER        AUC      genuine  skilled\n";
        for (const auto& u : report.per_user) {
            char line[128];
            std::snprintf(line, sizeof(line), "  u%04u    %-9s  %-7s  %-7zu  %zu\n", u.user,
                          pct(u.eer).c_str(), num(u.auc).c_str(), u.genuine_count,
                          u.skilled_count);
            out << line;
        }
    }
    return out.str();
}

std::string format_experiment_table(const ExperimentSummary& summary) {
    std::ostringstream out;
    out << "experiment " << hash_hex(summary.config_hash) << " ("
        << summary.replications.size() << " replication"
        << (summary.replications.size() == 1 ? "" : "s") << ")\n\n";
    out << "  rep  split seed            EER(glob)  EER(user)  mean AUC  AER(g/s)\n";
    for (const auto& rep : summary.replications) {
        char line[160];
        std::snprintf(line, sizeof(line), "  %3zu  %-20llu  %-9s  %-9s  %-8s  %s\n",
                      rep.replication, static_cast<unsigned long long>(rep.split_seed),
                      pct(rep.report.eer_global).c_str(), pct(rep.report.eer_user).c_str(),
                      num(rep.report.mean_auc).c_str(),
                      pct(rep.report.aer_genuine_skilled).c_str());
        out << line;
    }
    out << "\n  aggregate (mean +/- sample stdev)\n";
    auto agg_row = [&](const char* label, const Aggregate& a, bool percent) {
        const std::string value = percent ? pct(a.mean) + " +/- " + pct(a.stdev)
                                          : num(a.mean) + " +/- " + num(a.stdev);
        table_row(out, label, value);
    };
    agg_row("EER (global threshold)", summary.eer_global, true);
    agg_row("EER (user thresholds)", summary.eer_user, true);
    agg_row("mean AUC", summary.mean_auc, false);
    agg_row("AER", summary.aer, true);
    agg_row("AER (genuine/skilled)", summary.aer_genuine_skilled, true);
    agg_row("FRR", summary.frr, true);
    agg_row("FAR (random)", summary.far_random, true);
    agg_row("FAR (skilled)", summary.far_skilled, true);
    return out.str();
}

}  // namespace signet
