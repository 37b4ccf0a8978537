#pragma once

// The four training objectives. All of them combine a softmax cross-entropy
// over user identities with (optionally) a binary cross-entropy on the
// forgery head:
//
//   genuine_only      L = L_c                      (M-way, genuine samples)
//   forgery_as_class  L = L_c over 2M classes      (forgeries of user y -> M+y)
//   multitask_l1      L = (1-lambda) L_c + lambda L_f
//   multitask_l2      L = (1-f_i)(1-lambda) L_c + lambda L_f   (per sample)
//
// Losses are averaged over the batch. Gradients are with respect to the raw
// logits of each head. Internal arithmetic is double; the multitask paths at
// lambda = 0 (and l2 with no forgeries in the batch) reproduce the
// genuine_only gradients bit for bit because every path shares the same
// kernels and scale factors.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "signet/errors.hpp"
#include "signet/layers.hpp"
#include "signet/tensor.hpp"

namespace signet {

enum class LossFormulation { genuine_only, forgery_as_class, multitask_l1, multitask_l2 };

inline LossFormulation parse_loss_formulation(const std::string& s) {
    if (s == "genuine_only") return LossFormulation::genuine_only;
    if (s == "forgery_as_class") return LossFormulation::forgery_as_class;
    if (s == "multitask_l1") return LossFormulation::multitask_l1;
    if (s == "multitask_l2") return LossFormulation::multitask_l2;
    throw ConfigError("unknown loss formulation: " + s);
}

inline std::string to_string(LossFormulation f) {
    switch (f) {
        case LossFormulation::genuine_only: return "genuine_only";
        case LossFormulation::forgery_as_class: return "forgery_as_class";
        case LossFormulation::multitask_l1: return "multitask_l1";
        case LossFormulation::multitask_l2: return "multitask_l2";
    }
    return "?";
}

// Number of softmax outputs the user head needs for a formulation. Treating
// forgeries as classes doubles the label space: class y holds user y's
// genuine signatures, class num_users + y their forgeries.
inline std::size_t user_head_classes(LossFormulation f, std::size_t num_users) {
    return f == LossFormulation::forgery_as_class ? 2 * num_users : num_users;
}

// Class index a sample trains against (the remapping is a bijection from
// (user, forgery) pairs onto [0, 2*num_users) under forgery_as_class).
inline std::size_t effective_label(LossFormulation f, std::size_t user, bool forgery,
                                   std::size_t num_users) {
    if (f == LossFormulation::forgery_as_class && forgery) return num_users + user;
    return user;
}

template <typename T>
struct LossResult {
    double total = 0.0;
    double user_term = 0.0;     // mean cross-entropy (gated for multitask_l2)
    double forgery_term = 0.0;  // mean binary cross-entropy, 0 when head unused
    TensorT<T> grad_user;       // dL/d(user logits), shape of the logits
    TensorT<T> grad_forgery;    // dL/d(forgery logits), (N,1); zeros when unused
};

namespace detail {

// Softmax CE over rows of `logits` with per-sample gate weights. Adds
// gate[i] * scale * (p - onehot) into grad and returns sum_i gate[i] * CE_i.
template <typename T>
double softmax_ce(const TensorT<T>& logits, const std::vector<std::size_t>& labels,
                  const std::vector<double>& gate, double scale, TensorT<T>& grad) {
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    grad = TensorT<T>(logits.shape);
    double loss_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] >= k) throw IndexError("loss: label out of range for head width");
        const T* row = logits.ptr() + i * k;
        double mx = static_cast<double>(row[0]);
        for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(row[j]));
        double denom = 0.0;
        for (std::size_t j = 0; j < k; ++j) denom += std::exp(static_cast<double>(row[j]) - mx);
        const double log_denom = std::log(denom) + mx;
        loss_sum += gate[i] * (log_denom - static_cast<double>(row[labels[i]]));
        const double w = gate[i] * scale;
        T* g = grad.ptr() + i * k;
        for (std::size_t j = 0; j < k; ++j) {
            const double p = std::exp(static_cast<double>(row[j]) - log_denom);
            const double target = j == labels[i] ? 1.0 : 0.0;
            g[j] = static_cast<T>(w * (p - target));
        }
    }
    return loss_sum;
}

// Binary CE on a single logit per sample, numerically stable form.
// Adds scale * (sigma(z) - f) into grad; returns sum of per-sample BCE.
template <typename T>
double binary_ce(const TensorT<T>& logits, const std::vector<std::uint8_t>& forgery, double scale,
                 TensorT<T>& grad) {
    const std::size_t n = logits.dim(0);
    grad = TensorT<T>(logits.shape);
    double loss_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double z = static_cast<double>(logits.data[i]);
        const double f = forgery[i] ? 1.0 : 0.0;
        loss_sum += std::max(z, 0.0) - z * f + std::log1p(std::exp(-std::abs(z)));
        const double sig = 1.0 / (1.0 + std::exp(-z));
        grad.data[i] = static_cast<T>(scale * (sig - f));
    }
    return loss_sum;
}

}  // namespace detail

// user_logits: (N, K) with K = user_head_classes(...); forgery_logits: (N, 1).
// labels hold the claimed user index of every sample (before any remapping);
// forgery[i] != 0 marks skilled forgeries.
template <typename T>
LossResult<T> compute_loss(LossFormulation form, double lambda, const TensorT<T>& user_logits,
                           const TensorT<T>& forgery_logits,
                           const std::vector<std::size_t>& labels,
                           const std::vector<std::uint8_t>& forgery, std::size_t num_users) {
    if (lambda < 0.0 || lambda > 1.0) throw ConfigError("loss.lambda must lie in [0, 1]");
    const std::size_t n = user_logits.dim(0);
    if (labels.size() != n || forgery.size() != n)
        throw ShapeError("loss: labels/forgery flags must match batch size");
    if (user_logits.dim(1) != user_head_classes(form, num_users))
        throw ShapeError("loss: user head width does not match formulation");
    const bool multitask =
        form == LossFormulation::multitask_l1 || form == LossFormulation::multitask_l2;
    if (multitask && (forgery_logits.rank() != 2 || forgery_logits.dim(0) != n ||
                      forgery_logits.dim(1) != 1))
        throw ShapeError("loss: forgery head logits must be (N,1)");

    std::vector<std::size_t> eff(n);
    for (std::size_t i = 0; i < n; ++i) eff[i] = effective_label(form, labels[i], forgery[i], num_users);

    std::vector<double> gate(n, 1.0);
    if (form == LossFormulation::multitask_l2)
        for (std::size_t i = 0; i < n; ++i) gate[i] = forgery[i] ? 0.0 : 1.0;

    const double inv_n = 1.0 / static_cast<double>(n);
    const double user_scale = multitask ? (1.0 - lambda) * inv_n : inv_n;

    LossResult<T> r;
    const double ce_sum = detail::softmax_ce(user_logits, eff, gate, user_scale, r.grad_user);
    r.user_term = ce_sum * inv_n;

    if (multitask) {
        const double bce_sum = detail::binary_ce(forgery_logits, forgery, lambda * inv_n, r.grad_forgery);
        r.forgery_term = bce_sum * inv_n;
        r.total = (1.0 - lambda) * r.user_term + lambda * r.forgery_term;
    } else {
        r.grad_forgery = TensorT<T>(forgery_logits.size() ? forgery_logits.shape
                                                          : std::vector<std::size_t>{n, 1});
        r.forgery_term = 0.0;
        r.total = r.user_term;
    }
    return r;
}

}  // namespace signet
