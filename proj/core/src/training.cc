#include "signet/training.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "signet/errors.hpp"
#include "signet/preprocess.hpp"

namespace signet {

void TrainConfig::validate() const {
    if (batch_size == 0) throw ConfigError("training.batch_size must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("training.momentum must lie in [0,1)");
    if (weight_decay < 0.0) throw ConfigError("training.weight_decay must be non-negative");
    if (epochs == 0) throw ConfigError("training.epochs must be positive");
    if (lr_initial <= 0.0) throw ConfigError("training.lr_initial must be positive");
    if (lr_drop_factor <= 0.0) throw ConfigError("training.lr_drop_factor must be positive");
    if (lr_drop_every == 0) throw ConfigError("training.lr_drop_every must be positive");
    if (lambda < 0.0 || lambda > 1.0) throw ConfigError("loss.lambda must lie in [0,1]");
    if (input_scale <= 0.0) throw ConfigError("training.input_scale must be positive");
}

double lr_schedule(std::size_t epoch, const TrainConfig& cfg) {
    const double drops = static_cast<double>(epoch / cfg.lr_drop_every);
    return cfg.lr_initial / std::pow(cfg.lr_drop_factor, drops);
}

void nesterov_step(std::vector<ParamRef<float>>& params, std::vector<Tensor>& velocities,
                   double lr, const TrainConfig& cfg) {
    if (velocities.size() != params.size())
        throw ShapeError("nesterov_step: velocity count does not match parameter count");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!velocities[i].same_shape(*params[i].value))
            throw ShapeError("nesterov_step: velocity shape mismatch for " + params[i].name);
        if (!tensor_all_finite(*params[i].grad))
            throw NonFiniteGradient("nesterov_step: non-finite gradient in " + params[i].name);
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i].value;
        Tensor& g = *params[i].grad;
        Tensor& v = velocities[i];
        const double wd = params[i].decay ? cfg.weight_decay : 0.0;
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double grad = static_cast<double>(g.data[j]) + wd * static_cast<double>(p.data[j]);
            const double vel = cfg.momentum * static_cast<double>(v.data[j]) - lr * grad;
            v.data[j] = static_cast<float>(vel);
            p.data[j] = static_cast<float>(static_cast<double>(p.data[j]) + cfg.momentum * vel -
                                           lr * grad);
        }
    }
}

void init_parameters(Network& net, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "train.init"));
    net.init_parameters(rng);
}

Tensor assemble_batch(const LabeledImageSet& data, const std::vector<std::size_t>& indices,
                      const NetworkSpec& spec, const TrainConfig& cfg, Rng* crop_rng) {
    const std::size_t h = spec.input_height, w = spec.input_width;
    Tensor batch({indices.size(), 1, h, w});
    const float scale = static_cast<float>(cfg.input_scale);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const FloatImage& img = data[indices[i]].image;
        const Tensor crop = crop_rng ? random_crop(img, static_cast<int>(h), static_cast<int>(w),
                                                   *crop_rng)
                                     : center_crop(img, static_cast<int>(h), static_cast<int>(w));
        float* dst = batch.ptr() + i * h * w;
        for (std::size_t j = 0; j < h * w; ++j) dst[j] = crop.data[j] * scale;
    }
    return batch;
}

namespace {

// Deterministic Fisher-Yates; std::shuffle's draw pattern is not pinned by
// the standard, so the permutation comes from our own generator.
std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.uniform_below(i));
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

std::vector<Tensor> zero_velocities(Network& net) {
    std::vector<Tensor> v;
    for (const auto& p : net.parameters()) v.emplace_back(p.value->shape);
    return v;
}

}  // namespace

EpochMetrics train_epoch(Network& net, const LabeledImageSet& data, const TrainConfig& cfg,
                         std::vector<Tensor>& velocities, double lr, Rng& shuffle_rng,
                         Rng& crop_rng) {
    if (data.empty()) throw ProtocolError("train_epoch: empty training set");
    const std::vector<std::size_t> order = shuffled_indices(data.size(), shuffle_rng);

    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::size_t end = std::min(order.size(), start + cfg.batch_size);
        batches.emplace_back(order.begin() + start, order.begin() + end);
    }
    // A singleton trailing batch cannot feed batchnorm; fold it into the
    // previous batch so the epoch still covers every sample.
    if (batches.size() > 1 && batches.back().size() == 1) {
        batches[batches.size() - 2].push_back(batches.back()[0]);
        batches.pop_back();
    }

    auto params = net.parameters();
    double loss_sum = 0.0;
    std::size_t seen = 0, user_correct = 0, forg_correct = 0, forg_counted = 0;
    const std::size_t m = net.spec().num_users;

    for (const auto& batch_idx : batches) {
        const Tensor x = assemble_batch(data, batch_idx, net.spec(), cfg, &crop_rng);
        std::vector<std::size_t> labels(batch_idx.size());
        std::vector<std::uint8_t> forgery(batch_idx.size());
        for (std::size_t i = 0; i < batch_idx.size(); ++i) {
            labels[i] = data[batch_idx[i]].user;
            forgery[i] = data[batch_idx[i]].forgery ? 1 : 0;
        }

        FeedResult<float> out = net.forward(x, Mode::train);
        LossResult<float> loss = compute_loss(cfg.formulation, cfg.lambda, out.user_logits,
                                              out.forgery_logits, labels, forgery, m);
        net.zero_grad();
        net.backward(loss.grad_user, loss.grad_forgery);
        nesterov_step(params, velocities, lr, cfg);

        loss_sum += loss.total * static_cast<double>(batch_idx.size());
        seen += batch_idx.size();
        const std::size_t k = out.user_logits.dim(1);
        for (std::size_t i = 0; i < batch_idx.size(); ++i) {
            const float* row = out.user_logits.ptr() + i * k;
            std::size_t arg = 0;
            for (std::size_t j = 1; j < k; ++j)
                if (row[j] > row[arg]) arg = j;
            if (arg == effective_label(cfg.formulation, labels[i], forgery[i], m)) ++user_correct;
            if (net.spec().has_forgery_head()) {
                const bool pred = out.forgery_logits.data[i] >= 0.0f;  // sigmoid(z) >= 0.5
                if (pred == (forgery[i] != 0)) ++forg_correct;
                ++forg_counted;
            } else if (cfg.formulation == LossFormulation::forgery_as_class) {
                if ((arg >= m) == (forgery[i] != 0)) ++forg_correct;
                ++forg_counted;
            }
        }
    }

    EpochMetrics metrics;
    metrics.loss = loss_sum / static_cast<double>(seen);
    metrics.user_accuracy = static_cast<double>(user_correct) / static_cast<double>(seen);
    metrics.forgery_accuracy =
        forg_counted ? static_cast<double>(forg_correct) / static_cast<double>(forg_counted) : 0.0;
    metrics.learning_rate = lr;
    return metrics;
}

void finalize_bn_statistics(Network& net, const LabeledImageSet& data, const TrainConfig& cfg) {
    if (data.size() < 2)
        throw InsufficientBatch("finalize_bn_statistics: need at least 2 training images");
    std::vector<std::size_t> indices(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) indices[i] = i;
    const Tensor x = assemble_batch(data, indices, net.spec(), cfg, nullptr);
    net.forward(x, Mode::capture);
}

std::vector<EpochMetrics> run_training(Network& net, const LabeledImageSet& train_set,
                                       const TrainConfig& cfg, const TrainRunOptions& opts) {
    cfg.validate();
    auto params = net.parameters();

    std::vector<Tensor> velocities;
    Rng shuffle_rng(derive_seed(cfg.rng_seed, "train.shuffle"));
    Rng crop_rng(derive_seed(cfg.rng_seed, "train.crop"));
    std::size_t start_epoch = 0;

    if (!opts.resume_from.empty()) {
        TrainingSnapshot snap;
        Network stored = load_training_state(opts.resume_from, snap);
        if (!same_architecture(stored.spec(), net.spec()))
            throw ProtocolError("resume: stored network does not match configured architecture");
        stored.copy_parameters_to(net);
        velocities = std::move(snap.velocities);
        shuffle_rng.restore_state(snap.rng_train_state);
        crop_rng.restore_state(snap.rng_augment_state);
        start_epoch = snap.completed_epochs;
    } else {
        init_parameters(net, cfg.rng_seed);
        velocities = zero_velocities(net);
    }

    std::ofstream csv;
    if (!opts.metrics_csv.empty()) {
        const bool fresh = !std::filesystem::exists(opts.metrics_csv) || start_epoch == 0;
        csv.open(opts.metrics_csv, fresh ? std::ios::trunc : std::ios::app);
        if (!csv) throw IoError("cannot open metrics file: " + opts.metrics_csv);
        if (fresh) csv << "epoch,loss,user_acc,forgery_acc,lr\n";
    }

    std::vector<EpochMetrics> history;
    for (std::size_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_schedule(epoch, cfg);
        EpochMetrics m = train_epoch(net, train_set, cfg, velocities, lr, shuffle_rng, crop_rng);
        m.epoch = epoch;
        history.push_back(m);
        if (csv.is_open()) {
            char line[160];
            std::snprintf(line, sizeof(line), "%zu,%.8f,%.6f,%.6f,%.8g\n", epoch, m.loss,
                          m.user_accuracy, m.forgery_accuracy, m.learning_rate);
            csv << line;
            csv.flush();
        }
        if (!opts.state_path.empty()) {
            TrainingSnapshot snap;
            snap.velocities = velocities;
            snap.rng_train_state = shuffle_rng.serialize_state();
            snap.rng_augment_state = crop_rng.serialize_state();
            snap.completed_epochs = epoch + 1;
            save_training_state(opts.state_path, net, snap, opts.config_hash);
        }
    }

    finalize_bn_statistics(net, train_set, cfg);
    return history;
}

}  // namespace signet
