#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace signet {

enum class KernelKind : std::uint32_t { linear = 1, rbf = 2 };

KernelKind parse_kernel(const std::string& s);
std::string to_string(KernelKind k);

struct WDConfig {
    KernelKind kernel = KernelKind::linear;
    double c_minus = 1.0;
    double gamma_rbf = 0.00048828125;  // 2^-11
    double tolerance = 1e-3;           // KKT violation stopping threshold
    std::size_t iteration_cap_per_point = 1000;  // cap = this * n

    void validate() const;
};

// Class weighting that matches the genuine/forgery skew: psi = N/P and
// C+ = psi * C-, so each class contributes equally to the penalty term.
struct SkewWeights {
    double psi;
    double c_plus;
};
SkewWeights compute_skew(std::size_t positives, std::size_t negatives, double c_minus = 1.0);

// Per-user verifier. Linear models store the primal (w, b); RBF models keep
// the support vectors with their signed dual coefficients alpha_i * y_i.
struct WDModel {
    KernelKind kernel = KernelKind::linear;
    double gamma = 0.0;
    double bias = 0.0;
    double psi = 1.0;
    std::vector<float> w;                            // linear
    std::vector<std::vector<float>> support_vectors;  // rbf
    std::vector<double> dual_coefs;                   // rbf, alpha_i * y_i
};

// Diagnostics from the SMO solve, mainly for oracle tests: dual variables in
// input order (positives first), the dual objective sum(alpha) -
// 0.5*alpha'Q.alpha, the final maximal KKT violation, and iterations used.
struct SolveInfo {
    std::vector<double> alpha;
    std::vector<int> labels;
    double objective = 0.0;
    double kkt_violation = 0.0;
    std::size_t iterations = 0;
};

// Class-weighted soft-margin SVM via sequential minimal optimization with
// maximal-violating-pair selection. Positives are the genuine references
// (label +1, box C+ = psi*C-), negatives the random forgeries (label -1,
// box C-). Deterministic given input order.
WDModel train_wd(const std::vector<std::vector<float>>& positives,
                 const std::vector<std::vector<float>>& negatives, const WDConfig& cfg,
                 SolveInfo* info = nullptr);

double decision_value(const WDModel& model, const std::vector<float>& x);

void save_wd_model(const std::string& path, const WDModel& model, std::uint64_t config_hash);
WDModel load_wd_model(const std::string& path, std::uint64_t* config_hash_out = nullptr);

}  // namespace signet
