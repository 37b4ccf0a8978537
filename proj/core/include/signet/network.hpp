#pragma once

// Composable layer stack: a trunk (conv / pool / batchnorm / relu / flatten /
// fc) feeding two linear heads — an M-way (or M+1-way) user classifier and an
// optional single-logit forgery detector. The trunk's final activation is the
// feature vector used downstream by the writer-dependent classifiers.
//
// The whole network is templated on the scalar type: float in production,
// double for end-to-end finite-difference checks.

#include <cstdint>
#include <string>
#include <vector>

#include "signet/errors.hpp"
#include "signet/layers.hpp"
#include "signet/losses.hpp"
#include "signet/rng.hpp"
#include "signet/tensor.hpp"

namespace signet {

enum class LayerKind : std::uint32_t { conv = 1, maxpool = 2, batchnorm = 3, relu = 4, flatten = 5, fc = 6 };

struct LayerSpec {
    LayerKind kind;
    std::size_t out_channels = 0;  // conv / fc
    std::size_t kernel = 0;        // conv / maxpool
    std::size_t stride = 0;        // conv / maxpool
    std::size_t pad = 0;           // conv
    bool bias = false;             // conv / fc (off when batchnorm follows)

    static LayerSpec conv(std::size_t oc, std::size_t k, std::size_t s, std::size_t p,
                          bool bias = false) {
        return {LayerKind::conv, oc, k, s, p, bias};
    }
    static LayerSpec maxpool(std::size_t k, std::size_t s) {
        return {LayerKind::maxpool, 0, k, s, 0, false};
    }
    static LayerSpec batchnorm() { return {LayerKind::batchnorm, 0, 0, 0, 0, false}; }
    static LayerSpec relu() { return {LayerKind::relu, 0, 0, 0, 0, false}; }
    static LayerSpec flatten() { return {LayerKind::flatten, 0, 0, 0, 0, false}; }
    static LayerSpec fc(std::size_t out, bool bias = false) {
        return {LayerKind::fc, out, 0, 0, 0, bias};
    }
};

struct NetworkSpec {
    std::size_t input_height = 150;
    std::size_t input_width = 220;
    std::size_t input_channels = 1;
    std::vector<LayerSpec> trunk;
    std::size_t num_users = 0;
    LossFormulation formulation = LossFormulation::genuine_only;
    double bn_eps = 1e-5;

    bool has_forgery_head() const {
        return formulation == LossFormulation::multitask_l1 ||
               formulation == LossFormulation::multitask_l2;
    }
    std::size_t user_classes() const { return user_head_classes(formulation, num_users); }
};

inline bool operator==(const LayerSpec& a, const LayerSpec& b) {
    return a.kind == b.kind && a.out_channels == b.out_channels && a.kernel == b.kernel &&
           a.stride == b.stride && a.pad == b.pad && a.bias == b.bias;
}

inline bool same_architecture(const NetworkSpec& a, const NetworkSpec& b) {
    return a.input_height == b.input_height && a.input_width == b.input_width &&
           a.input_channels == b.input_channels && a.trunk == b.trunk &&
           a.num_users == b.num_users && a.formulation == b.formulation && a.bn_eps == b.bn_eps;
}

// Canonical trunk: five conv blocks (11/4, 5/1 p2, three 3/1 p1) with max
// pooling after blocks 1, 2 and 5, then two fc blocks; batchnorm + relu after
// every learnable layer. Width vectors allow reduced variants for tests; the
// defaults are the full-scale model.
NetworkSpec make_signature_network_spec(std::size_t num_users, LossFormulation formulation,
                                        const std::vector<std::size_t>& conv_channels = {96, 256, 384, 384, 256},
                                        const std::vector<std::size_t>& fc_dims = {2048, 2048},
                                        std::size_t input_height = 150,
                                        std::size_t input_width = 220);

enum class Mode {
    train,    // batch statistics, caches kept for backward
    infer,    // population statistics, no caches
    capture,  // batch statistics, and store them as the population statistics
};

template <typename T>
struct FeedResult {
    TensorT<T> features;        // (N, D) trunk output
    TensorT<T> user_logits;     // (N, K)
    TensorT<T> forgery_logits;  // (N, 1); empty when the head is absent
};

template <typename T>
struct ParamRef {
    std::string name;
    TensorT<T>* value;
    TensorT<T>* grad;
    bool decay;  // weight decay applies to conv/fc weights only
};

template <typename T>
class NetworkT {
  public:
    explicit NetworkT(const NetworkSpec& spec);

    // He-normal for trunk weights, zeros for biases, gamma=1/beta=0. Head
    // weights and biases start at exactly zero so an untrained network
    // predicts the uniform distribution (initial cross-entropy == log K).
    void init_parameters(Rng& rng);

    FeedResult<T> forward(const TensorT<T>& x, Mode mode);

    // Backward through heads and trunk; parameter gradients accumulate into
    // the registry tensors. Requires a preceding forward in train mode.
    void backward(const TensorT<T>& grad_user, const TensorT<T>& grad_forgery);

    void zero_grad();
    std::vector<ParamRef<T>> parameters();
    std::size_t parameter_count() const;

    const NetworkSpec& spec() const { return spec_; }
    std::size_t feature_dim() const { return feature_dim_; }

    // Copies this network's parameters (and population statistics) into a
    // differently-typed twin with an identical spec.
    template <typename U>
    void copy_parameters_to(NetworkT<U>& other) const;

    struct TrunkLayer {
        LayerSpec spec;
        TensorT<T> w, gw;
        TensorT<T> b, gb;
        TensorT<T> gamma, beta, ggamma, gbeta;
        TensorT<T> pop_mean, pop_var;
        std::size_t bn_channels = 0, bn_spatial = 0;
        std::size_t fan_in = 0;
        // forward caches
        TensorT<T> in_cache;
        std::vector<std::size_t> in_shape;
        std::vector<std::size_t> pool_argmax;
        nn::BatchNormCache<T> bn_cache;
    };

    std::vector<TrunkLayer>& trunk() { return trunk_; }
    const std::vector<TrunkLayer>& trunk() const { return trunk_; }
    TensorT<T>& user_w() { return user_w_; }
    TensorT<T>& user_b() { return user_b_; }
    TensorT<T>& forgery_w() { return forg_w_; }
    TensorT<T>& forgery_b() { return forg_b_; }
    const TensorT<T>& user_w() const { return user_w_; }
    const TensorT<T>& user_b() const { return user_b_; }
    const TensorT<T>& forgery_w() const { return forg_w_; }
    const TensorT<T>& forgery_b() const { return forg_b_; }

  private:
    NetworkSpec spec_;
    std::vector<TrunkLayer> trunk_;
    TensorT<T> user_w_, user_b_, gu_w_, gu_b_;
    TensorT<T> forg_w_, forg_b_, gf_w_, gf_b_;
    TensorT<T> features_cache_;
    std::size_t feature_dim_ = 0;
    bool have_cache_ = false;
};

using Network = NetworkT<float>;

// ---------------------------------------------------------------------------
// Implementation (templated, header-only).
// ---------------------------------------------------------------------------

template <typename T>
NetworkT<T>::NetworkT(const NetworkSpec& spec) : spec_(spec) {
    if (spec_.num_users == 0) throw ConfigError("network: num_users must be positive");
    std::size_t c = spec_.input_channels, h = spec_.input_height, w = spec_.input_width;
    bool flat = false;
    std::size_t width = 0;  // valid once flat
    for (const LayerSpec& ls : spec_.trunk) {
        TrunkLayer layer;
        layer.spec = ls;
        switch (ls.kind) {
            case LayerKind::conv: {
                if (flat) throw ShapeError("network: conv after flatten");
                layer.fan_in = c * ls.kernel * ls.kernel;
                layer.w = TensorT<T>({ls.out_channels, c, ls.kernel, ls.kernel});
                layer.gw = TensorT<T>(layer.w.shape);
                if (ls.bias) {
                    layer.b = TensorT<T>({ls.out_channels});
                    layer.gb = TensorT<T>({ls.out_channels});
                }
                h = nn::conv_out_dim(h, ls.kernel, ls.stride, ls.pad);
                w = nn::conv_out_dim(w, ls.kernel, ls.stride, ls.pad);
                c = ls.out_channels;
                break;
            }
            case LayerKind::maxpool:
                if (flat) throw ShapeError("network: maxpool after flatten");
                h = nn::conv_out_dim(h, ls.kernel, ls.stride, 0);
                w = nn::conv_out_dim(w, ls.kernel, ls.stride, 0);
                break;
            case LayerKind::batchnorm: {
                layer.bn_channels = flat ? width : c;
                layer.bn_spatial = flat ? 1 : h * w;
                layer.gamma = TensorT<T>({layer.bn_channels});
                layer.beta = TensorT<T>({layer.bn_channels});
                layer.ggamma = TensorT<T>({layer.bn_channels});
                layer.gbeta = TensorT<T>({layer.bn_channels});
                layer.pop_mean = TensorT<T>({layer.bn_channels});
                layer.pop_var = TensorT<T>({layer.bn_channels});
                layer.pop_var.fill(T(1));
                break;
            }
            case LayerKind::relu:
                break;
            case LayerKind::flatten:
                if (flat) throw ShapeError("network: duplicate flatten");
                flat = true;
                width = c * h * w;
                break;
            case LayerKind::fc: {
                if (!flat) throw ShapeError("network: fc before flatten");
                layer.fan_in = width;
                layer.w = TensorT<T>({ls.out_channels, width});
                layer.gw = TensorT<T>(layer.w.shape);
                if (ls.bias) {
                    layer.b = TensorT<T>({ls.out_channels});
                    layer.gb = TensorT<T>({ls.out_channels});
                }
                width = ls.out_channels;
                break;
            }
        }
        trunk_.push_back(std::move(layer));
    }
    if (!flat) throw ShapeError("network: trunk must end in flattened features");
    feature_dim_ = width;

    const std::size_t k = spec_.user_classes();
    user_w_ = TensorT<T>({k, feature_dim_});
    user_b_ = TensorT<T>({k});
    gu_w_ = TensorT<T>(user_w_.shape);
    gu_b_ = TensorT<T>(user_b_.shape);
    if (spec_.has_forgery_head()) {
        forg_w_ = TensorT<T>({1, feature_dim_});
        forg_b_ = TensorT<T>({1});
        gf_w_ = TensorT<T>(forg_w_.shape);
        gf_b_ = TensorT<T>(forg_b_.shape);
    }
}

template <typename T>
void NetworkT<T>::init_parameters(Rng& rng) {
    for (TrunkLayer& layer : trunk_) {
        if (layer.spec.kind == LayerKind::conv || layer.spec.kind == LayerKind::fc) {
            const double stddev = std::sqrt(2.0 / static_cast<double>(layer.fan_in));
            for (T& v : layer.w.data) v = static_cast<T>(rng.normal() * stddev);
            if (layer.spec.bias) layer.b.fill(T(0));
        } else if (layer.spec.kind == LayerKind::batchnorm) {
            layer.gamma.fill(T(1));
            layer.beta.fill(T(0));
            layer.pop_mean.fill(T(0));
            layer.pop_var.fill(T(1));
        }
    }
    user_w_.fill(T(0));
    user_b_.fill(T(0));
    if (spec_.has_forgery_head()) {
        forg_w_.fill(T(0));
        forg_b_.fill(T(0));
    }
}

template <typename T>
FeedResult<T> NetworkT<T>::forward(const TensorT<T>& x, Mode mode) {
    if (x.rank() != 4 || x.dim(1) != spec_.input_channels || x.dim(2) != spec_.input_height ||
        x.dim(3) != spec_.input_width)
        throw ShapeError("network: input must be (N," + std::to_string(spec_.input_channels) +
                         "," + std::to_string(spec_.input_height) + "," +
                         std::to_string(spec_.input_width) + "), got " + x.shape_string());
    const bool train = mode != Mode::infer;
    TensorT<T> cur = x;
    for (TrunkLayer& layer : trunk_) {
        switch (layer.spec.kind) {
            case LayerKind::conv: {
                if (train) layer.in_cache = cur;
                cur = nn::conv2d_forward(cur, layer.w, layer.spec.bias ? &layer.b : nullptr,
                                         layer.spec.stride, layer.spec.pad);
                break;
            }
            case LayerKind::maxpool: {
                layer.in_shape = cur.shape;
                cur = nn::maxpool_forward(cur, layer.spec.kernel, layer.spec.stride,
                                          layer.pool_argmax);
                break;
            }
            case LayerKind::batchnorm: {
                if (train) {
                    cur = nn::batchnorm_forward_train(cur, layer.bn_channels, layer.bn_spatial,
                                                      layer.gamma, layer.beta, spec_.bn_eps,
                                                      layer.bn_cache);
                    if (mode == Mode::capture) {
                        for (std::size_t i = 0; i < layer.bn_channels; ++i) {
                            layer.pop_mean.data[i] = static_cast<T>(layer.bn_cache.mean[i]);
                            const double inv = layer.bn_cache.inv_std[i];
                            layer.pop_var.data[i] = static_cast<T>(1.0 / (inv * inv) - spec_.bn_eps);
                        }
                    }
                } else {
                    cur = nn::batchnorm_forward_infer(cur, layer.bn_channels, layer.bn_spatial,
                                                      layer.gamma, layer.beta, layer.pop_mean,
                                                      layer.pop_var, spec_.bn_eps);
                }
                break;
            }
            case LayerKind::relu: {
                if (train) layer.in_cache = cur;
                cur = nn::relu_forward(cur);
                break;
            }
            case LayerKind::flatten: {
                layer.in_shape = cur.shape;
                cur.shape = {cur.dim(0), cur.size() / cur.dim(0)};
                break;
            }
            case LayerKind::fc: {
                if (train) layer.in_cache = cur;
                cur = nn::fc_forward(cur, layer.w, layer.spec.bias ? &layer.b : nullptr);
                break;
            }
        }
    }
    FeedResult<T> out;
    out.features = cur;
    out.user_logits = nn::fc_forward(cur, user_w_, &user_b_);
    if (spec_.has_forgery_head()) out.forgery_logits = nn::fc_forward(cur, forg_w_, &forg_b_);
    if (train) {
        features_cache_ = cur;
        have_cache_ = true;
    }
    return out;
}

template <typename T>
void NetworkT<T>::backward(const TensorT<T>& grad_user, const TensorT<T>& grad_forgery) {
    if (!have_cache_) throw ProtocolError("network: backward without a train-mode forward");
    const std::size_t n = features_cache_.dim(0);

    TensorT<T> gfeat({n, feature_dim_});
    {
        TensorT<T> gx, gw, gb;
        nn::fc_backward(features_cache_, user_w_, grad_user, gx, gw, &gb);
        for (std::size_t i = 0; i < gfeat.size(); ++i) gfeat.data[i] += gx.data[i];
        for (std::size_t i = 0; i < gw.size(); ++i) gu_w_.data[i] += gw.data[i];
        for (std::size_t i = 0; i < gb.size(); ++i) gu_b_.data[i] += gb.data[i];
    }
    if (spec_.has_forgery_head() && grad_forgery.size() == n) {
        TensorT<T> gx, gw, gb;
        nn::fc_backward(features_cache_, forg_w_, grad_forgery, gx, gw, &gb);
        for (std::size_t i = 0; i < gfeat.size(); ++i) gfeat.data[i] += gx.data[i];
        for (std::size_t i = 0; i < gw.size(); ++i) gf_w_.data[i] += gw.data[i];
        for (std::size_t i = 0; i < gb.size(); ++i) gf_b_.data[i] += gb.data[i];
    }

    TensorT<T> cur = std::move(gfeat);
    for (auto it = trunk_.rbegin(); it != trunk_.rend(); ++it) {
        TrunkLayer& layer = *it;
        switch (layer.spec.kind) {
            case LayerKind::conv: {
                TensorT<T> gx, gw, gb;
                nn::conv2d_backward(layer.in_cache, layer.w, layer.spec.stride, layer.spec.pad,
                                    cur, gx, gw, layer.spec.bias ? &gb : nullptr);
                for (std::size_t i = 0; i < gw.size(); ++i) layer.gw.data[i] += gw.data[i];
                if (layer.spec.bias)
                    for (std::size_t i = 0; i < gb.size(); ++i) layer.gb.data[i] += gb.data[i];
                cur = std::move(gx);
                break;
            }
            case LayerKind::maxpool:
                cur = nn::maxpool_backward(layer.in_shape, layer.pool_argmax, cur);
                break;
            case LayerKind::batchnorm: {
                TensorT<T> gx, gg, gb;
                nn::batchnorm_backward(cur, layer.bn_channels, layer.bn_spatial, layer.gamma,
                                       layer.bn_cache, gx, gg, gb);
                for (std::size_t i = 0; i < gg.size(); ++i) layer.ggamma.data[i] += gg.data[i];
                for (std::size_t i = 0; i < gb.size(); ++i) layer.gbeta.data[i] += gb.data[i];
                cur = std::move(gx);
                break;
            }
            case LayerKind::relu:
                cur = nn::relu_backward(layer.in_cache, cur);
                break;
            case LayerKind::flatten:
                cur.shape = layer.in_shape;
                break;
            case LayerKind::fc: {
                TensorT<T> gx, gw, gb;
                nn::fc_backward(layer.in_cache, layer.w, cur, gx, gw,
                                layer.spec.bias ? &gb : nullptr);
                for (std::size_t i = 0; i < gw.size(); ++i) layer.gw.data[i] += gw.data[i];
                if (layer.spec.bias)
                    for (std::size_t i = 0; i < gb.size(); ++i) layer.gb.data[i] += gb.data[i];
                cur = std::move(gx);
                break;
            }
        }
    }
    have_cache_ = false;
}

template <typename T>
void NetworkT<T>::zero_grad() {
    for (TrunkLayer& layer : trunk_) {
        layer.gw.fill(T(0));
        layer.gb.fill(T(0));
        layer.ggamma.fill(T(0));
        layer.gbeta.fill(T(0));
    }
    gu_w_.fill(T(0));
    gu_b_.fill(T(0));
    gf_w_.fill(T(0));
    gf_b_.fill(T(0));
}

template <typename T>
std::vector<ParamRef<T>> NetworkT<T>::parameters() {
    std::vector<ParamRef<T>> out;
    std::size_t conv_idx = 0, fc_idx = 0, bn_idx = 0;
    for (TrunkLayer& layer : trunk_) {
        if (layer.spec.kind == LayerKind::conv || layer.spec.kind == LayerKind::fc) {
            const std::string base =
                (layer.spec.kind == LayerKind::conv ? "conv" + std::to_string(++conv_idx)
                                                    : "fc" + std::to_string(++fc_idx));
            out.push_back({base + ".w", &layer.w, &layer.gw, true});
            if (layer.spec.bias) out.push_back({base + ".b", &layer.b, &layer.gb, false});
        } else if (layer.spec.kind == LayerKind::batchnorm) {
            const std::string base = "bn" + std::to_string(++bn_idx);
            out.push_back({base + ".gamma", &layer.gamma, &layer.ggamma, false});
            out.push_back({base + ".beta", &layer.beta, &layer.gbeta, false});
        }
    }
    out.push_back({"head_user.w", &user_w_, &gu_w_, true});
    out.push_back({"head_user.b", &user_b_, &gu_b_, false});
    if (spec_.has_forgery_head()) {
        out.push_back({"head_forgery.w", &forg_w_, &gf_w_, true});
        out.push_back({"head_forgery.b", &forg_b_, &gf_b_, false});
    }
    return out;
}

template <typename T>
std::size_t NetworkT<T>::parameter_count() const {
    std::size_t total = 0;
    for (const TrunkLayer& layer : trunk_) {
        total += layer.w.size() + layer.b.size() + layer.gamma.size() + layer.beta.size();
    }
    total += user_w_.size() + user_b_.size() + forg_w_.size() + forg_b_.size();
    return total;
}

template <typename T>
template <typename U>
void NetworkT<T>::copy_parameters_to(NetworkT<U>& other) const {
    if (other.trunk().size() != trunk_.size()) throw ShapeError("copy_parameters_to: spec mismatch");
    for (std::size_t i = 0; i < trunk_.size(); ++i) {
        auto& dst = other.trunk()[i];
        const auto& src = trunk_[i];
        dst.w = src.w.template cast<U>();
        dst.gw = TensorT<U>(dst.w.shape);
        if (src.spec.bias) {
            dst.b = src.b.template cast<U>();
            dst.gb = TensorT<U>(dst.b.shape);
        }
        if (src.spec.kind == LayerKind::batchnorm) {
            dst.gamma = src.gamma.template cast<U>();
            dst.beta = src.beta.template cast<U>();
            dst.ggamma = TensorT<U>(dst.gamma.shape);
            dst.gbeta = TensorT<U>(dst.beta.shape);
            dst.pop_mean = src.pop_mean.template cast<U>();
            dst.pop_var = src.pop_var.template cast<U>();
        }
    }
    other.user_w() = user_w_.template cast<U>();
    other.user_b() = user_b_.template cast<U>();
    if (spec_.has_forgery_head()) {
        other.forgery_w() = forg_w_.template cast<U>();
        other.forgery_b() = forg_b_.template cast<U>();
    }
}

}  // namespace signet
