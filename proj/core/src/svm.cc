#include "signet/svm.hpp"

#include <cmath>
#include <limits>

#include "signet/errors.hpp"
#include "signet/io.hpp"

namespace signet {

KernelKind parse_kernel(const std::string& s) {
    if (s == "linear") return KernelKind::linear;
    if (s == "rbf") return KernelKind::rbf;
    throw ConfigError("unknown kernel: " + s);
}

std::string to_string(KernelKind k) { return k == KernelKind::linear ? "linear" : "rbf"; }

void WDConfig::validate() const {
    if (c_minus <= 0.0) throw ConfigError("wd.c_minus must be positive");
    if (gamma_rbf <= 0.0) throw ConfigError("wd.gamma_rbf must be positive");
    if (tolerance <= 0.0) throw ConfigError("wd.tolerance must be positive");
    if (iteration_cap_per_point == 0) throw ConfigError("wd.iteration_cap must be positive");
}

SkewWeights compute_skew(std::size_t positives, std::size_t negatives, double c_minus) {
    if (positives == 0 || negatives == 0)
        throw ProtocolError("compute_skew: both classes must be non-empty");
    const double psi = static_cast<double>(negatives) / static_cast<double>(positives);
    return {psi, psi * c_minus};
}

namespace {

double kernel_eval(KernelKind kind, double gamma, const std::vector<float>& a,
                   const std::vector<float>& b) {
    double acc = 0.0;
    if (kind == KernelKind::linear) {
        for (std::size_t i = 0; i < a.size(); ++i)
            acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
        return acc;
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return std::exp(-gamma * acc);
}

}  // namespace

WDModel train_wd(const std::vector<std::vector<float>>& positives,
                 const std::vector<std::vector<float>>& negatives, const WDConfig& cfg,
                 SolveInfo* info) {
    cfg.validate();
    if (positives.empty() || negatives.empty())
        throw ProtocolError("train_wd: need at least one sample of each class");
    const std::size_t dim = positives[0].size();
    const std::size_t n = positives.size() + negatives.size();

    std::vector<const std::vector<float>*> x;
    std::vector<double> y, c;
    const SkewWeights skew = compute_skew(positives.size(), negatives.size(), cfg.c_minus);
    for (const auto& v : positives) {
        if (v.size() != dim) throw ShapeError("train_wd: inconsistent feature dimension");
        x.push_back(&v);
        y.push_back(1.0);
        c.push_back(skew.c_plus);
    }
    for (const auto& v : negatives) {
        if (v.size() != dim) throw ShapeError("train_wd: inconsistent feature dimension");
        x.push_back(&v);
        y.push_back(-1.0);
        c.push_back(cfg.c_minus);
    }

    auto kernel = [&](std::size_t i, std::size_t j) {
        return kernel_eval(cfg.kernel, cfg.gamma_rbf, *x[i], *x[j]);
    };

    std::vector<double> diag(n);
    for (std::size_t i = 0; i < n; ++i) diag[i] = kernel(i, i);

    // Dual problem in libsvm form: min 1/2 a'Qa - e'a with Q_ij = y_i y_j K_ij,
    // 0 <= a_i <= C_i, y'a = 0. Gradient G = Qa - e; starting from a = 0.
    std::vector<double> alpha(n, 0.0), grad(n, -1.0);
    std::vector<double> k_i(n), k_j(n);

    const std::size_t cap = cfg.iteration_cap_per_point * n;
    double violation = std::numeric_limits<double>::infinity();
    std::size_t iter = 0;
    for (; iter < cap; ++iter) {
        // Maximal violating pair over I_up (can increase) / I_low (can decrease).
        std::ptrdiff_t i = -1, j = -1;
        double up_best = -std::numeric_limits<double>::infinity();
        double low_best = std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < n; ++t) {
            const double v = -y[t] * grad[t];
            const bool in_up = (y[t] > 0 && alpha[t] < c[t]) || (y[t] < 0 && alpha[t] > 0);
            const bool in_low = (y[t] > 0 && alpha[t] > 0) || (y[t] < 0 && alpha[t] < c[t]);
            if (in_up && v > up_best) {
                up_best = v;
                i = static_cast<std::ptrdiff_t>(t);
            }
            if (in_low && v < low_best) {
                low_best = v;
                j = static_cast<std::ptrdiff_t>(t);
            }
        }
        violation = up_best - low_best;
        if (i < 0 || j < 0 || violation < cfg.tolerance) break;

        const std::size_t ii = static_cast<std::size_t>(i), jj = static_cast<std::size_t>(j);
        for (std::size_t t = 0; t < n; ++t) k_i[t] = kernel(ii, t);
        for (std::size_t t = 0; t < n; ++t) k_j[t] = kernel(jj, t);

        const double old_ai = alpha[ii], old_aj = alpha[jj];
        constexpr double kTau = 1e-12;
        if (y[ii] != y[jj]) {
            double quad = diag[ii] + diag[jj] + 2.0 * k_i[jj];
            if (quad <= 0.0) quad = kTau;
            const double delta = (-grad[ii] - grad[jj]) / quad;
            const double diff = alpha[ii] - alpha[jj];
            alpha[ii] += delta;
            alpha[jj] += delta;
            if (diff > 0) {
                if (alpha[jj] < 0) {
                    alpha[jj] = 0;
                    alpha[ii] = diff;
                }
            } else {
                if (alpha[ii] < 0) {
                    alpha[ii] = 0;
                    alpha[jj] = -diff;
                }
            }
            if (diff > c[ii] - c[jj]) {
                if (alpha[ii] > c[ii]) {
                    alpha[ii] = c[ii];
                    alpha[jj] = c[ii] - diff;
                }
            } else {
                if (alpha[jj] > c[jj]) {
                    alpha[jj] = c[jj];
                    alpha[ii] = c[jj] + diff;
                }
            }
        } else {
            double quad = diag[ii] + diag[jj] - 2.0 * k_i[jj];
            if (quad <= 0.0) quad = kTau;
            const double delta = (grad[ii] - grad[jj]) / quad;
            const double sum = alpha[ii] + alpha[jj];
            alpha[ii] -= delta;
            alpha[jj] += delta;
            if (sum > c[ii]) {
                if (alpha[ii] > c[ii]) {
                    alpha[ii] = c[ii];
                    alpha[jj] = sum - c[ii];
                }
            } else {
                if (alpha[jj] < 0) {
                    alpha[jj] = 0;
                    alpha[ii] = sum;
                }
            }
            if (sum > c[jj]) {
                if (alpha[jj] > c[jj]) {
                    alpha[jj] = c[jj];
                    alpha[ii] = sum - c[jj];
                }
            } else {
                if (alpha[ii] < 0) {
                    alpha[ii] = 0;
                    alpha[jj] = sum;
                }
            }
        }

        const double dai = alpha[ii] - old_ai, daj = alpha[jj] - old_aj;
        if (dai == 0.0 && daj == 0.0) break;  // numerically stuck at the boundary
        for (std::size_t t = 0; t < n; ++t)
            grad[t] += y[t] * (y[ii] * k_i[t] * dai + y[jj] * k_j[t] * daj);
    }
    if (violation >= cfg.tolerance && iter >= cap)
        throw ConvergenceError("train_wd: SMO did not reach tolerance within iteration cap",
                               violation);

    // Bias from free support vectors (KKT: y_i f(x_i) = 1 there), falling back
    // to the midpoint of the violating-pair bounds when none are strictly free.
    double bias_sum = 0.0;
    std::size_t bias_cnt = 0;
    for (std::size_t t = 0; t < n; ++t) {
        const double margin = 1e-8 * c[t];
        if (alpha[t] > margin && alpha[t] < c[t] - margin) {
            bias_sum += -y[t] * grad[t];
            ++bias_cnt;
        }
    }
    double bias;
    if (bias_cnt > 0) {
        bias = bias_sum / static_cast<double>(bias_cnt);
    } else {
        double up_best = -std::numeric_limits<double>::infinity();
        double low_best = std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < n; ++t) {
            const double v = -y[t] * grad[t];
            const bool in_up = (y[t] > 0 && alpha[t] < c[t]) || (y[t] < 0 && alpha[t] > 0);
            const bool in_low = (y[t] > 0 && alpha[t] > 0) || (y[t] < 0 && alpha[t] < c[t]);
            if (in_up) up_best = std::max(up_best, v);
            if (in_low) low_best = std::min(low_best, v);
        }
        bias = (up_best + low_best) / 2.0;
    }

    if (info) {
        info->alpha = alpha;
        info->labels.assign(n, 1);
        for (std::size_t t = positives.size(); t < n; ++t) info->labels[t] = -1;
        double obj = 0.0;
        for (std::size_t t = 0; t < n; ++t) obj += alpha[t] * (1.0 - 0.5 * (grad[t] + 1.0));
        info->objective = obj;  // sum(a) - 1/2 a'Qa via G = Qa - e
        info->kkt_violation = violation;
        info->iterations = iter;
    }

    WDModel model;
    model.kernel = cfg.kernel;
    model.gamma = cfg.gamma_rbf;
    model.bias = bias;
    model.psi = skew.psi;
    if (cfg.kernel == KernelKind::linear) {
        model.w.assign(dim, 0.0f);
        std::vector<double> w(dim, 0.0);
        for (std::size_t t = 0; t < n; ++t) {
            if (alpha[t] == 0.0) continue;
            const double coef = alpha[t] * y[t];
            for (std::size_t d = 0; d < dim; ++d) w[d] += coef * static_cast<double>((*x[t])[d]);
        }
        for (std::size_t d = 0; d < dim; ++d) model.w[d] = static_cast<float>(w[d]);
    } else {
        for (std::size_t t = 0; t < n; ++t) {
            if (alpha[t] <= 0.0) continue;
            model.support_vectors.push_back(*x[t]);
            model.dual_coefs.push_back(alpha[t] * y[t]);
        }
    }
    return model;
}

double decision_value(const WDModel& model, const std::vector<float>& x) {
    if (model.kernel == KernelKind::linear) {
        if (x.size() != model.w.size()) throw ShapeError("decision_value: dimension mismatch");
        double acc = model.bias;
        for (std::size_t i = 0; i < x.size(); ++i)
            acc += static_cast<double>(model.w[i]) * static_cast<double>(x[i]);
        return acc;
    }
    double acc = model.bias;
    for (std::size_t s = 0; s < model.support_vectors.size(); ++s) {
        if (x.size() != model.support_vectors[s].size())
            throw ShapeError("decision_value: dimension mismatch");
        acc += model.dual_coefs[s] * kernel_eval(KernelKind::rbf, model.gamma, x,
                                                 model.support_vectors[s]);
    }
    return acc;
}

namespace {
constexpr char kWdMagic[4] = {'S', 'G', 'W', 'D'};
constexpr std::uint32_t kWdVersion = 1;
}  // namespace

void save_wd_model(const std::string& path, const WDModel& model, std::uint64_t config_hash) {
    BinaryWriter w(path);
    w.magic(kWdMagic);
    w.u32(kWdVersion);
    w.u32(static_cast<std::uint32_t>(model.kernel));
    w.f64(model.gamma);
    w.f64(model.bias);
    w.f64(model.psi);
    if (model.kernel == KernelKind::linear) {
        w.u64(model.w.size());
        w.f32_array(model.w.data(), model.w.size());
    } else {
        const std::size_t dim = model.support_vectors.empty() ? 0 : model.support_vectors[0].size();
        w.u64(model.support_vectors.size());
        w.u64(dim);
        for (std::size_t i = 0; i < model.support_vectors.size(); ++i) {
            w.f64(model.dual_coefs[i]);
            w.f32_array(model.support_vectors[i].data(), dim);
        }
    }
    w.u64(config_hash);
    w.close();
}

WDModel load_wd_model(const std::string& path, std::uint64_t* config_hash_out) {
    BinaryReader r(path);
    r.expect_magic(kWdMagic, "verifier model");
    if (r.u32() != kWdVersion) r.fail("unsupported model version");
    WDModel model;
    const std::uint32_t kernel = r.u32();
    if (kernel != 1 && kernel != 2) r.fail("invalid kernel tag");
    model.kernel = static_cast<KernelKind>(kernel);
    model.gamma = r.f64();
    model.bias = r.f64();
    model.psi = r.f64();
    if (model.kernel == KernelKind::linear) {
        const std::uint64_t dim = r.u64();
        model.w.resize(dim);
        r.f32_array(model.w.data(), dim);
    } else {
        const std::uint64_t count = r.u64();
        const std::uint64_t dim = r.u64();
        for (std::uint64_t i = 0; i < count; ++i) {
            model.dual_coefs.push_back(r.f64());
            std::vector<float> sv(dim);
            r.f32_array(sv.data(), dim);
            model.support_vectors.push_back(std::move(sv));
        }
    }
    const std::uint64_t hash = r.u64();
    if (config_hash_out) *config_hash_out = hash;
    return model;
}

}  // namespace signet
