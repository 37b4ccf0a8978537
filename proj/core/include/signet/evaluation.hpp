#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace signet {

enum class SampleKind { genuine, random_forgery, simple_forgery, skilled_forgery };

SampleKind parse_sample_kind(const std::string& s);
std::string to_string(SampleKind k);

struct ScoredSample {
    std::uint32_t user = 0;  // claimed identity
    std::uint32_t sample = 0;
    SampleKind kind = SampleKind::genuine;
    double score = 0.0;
};

struct Rates {
    double frr = 0.0;
    double far_random = 0.0;
    double far_skilled = 0.0;
    std::optional<double> far_simple;  // only under the simple-forgery protocol
};

// Acceptance rule is score >= threshold. FRR over genuine samples, one FAR
// per forgery kind present. Requires >= 1 genuine and >= 1 skilled sample.
Rates rates_at_threshold(const std::vector<ScoredSample>& samples, double threshold);

struct EerResult {
    double eer = 0.0;
    double threshold = 0.0;
    double frr = 0.0;
    double far_skilled = 0.0;
};

// Sweeps every distinct score as a candidate threshold over genuine vs
// skilled-forgery samples only; picks the candidate minimizing
// |FRR - FAR_skilled| (ties: lower mean error, then lower threshold) and
// reports the midpoint of the two rates there.
EerResult eer_global(const std::vector<ScoredSample>& samples);

struct UserEval {
    std::uint32_t user = 0;
    double eer = 0.0;
    double threshold = 0.0;
    double auc = 0.0;
    std::size_t genuine_count = 0;
    std::size_t skilled_count = 0;
};

// Per-user EER under user-specific thresholds; returns the mean and fills
// the per-user table (users need >= 1 genuine and >= 1 skilled sample).
double eer_user_thresholds(const std::vector<ScoredSample>& samples,
                           std::vector<UserEval>* per_user = nullptr);

// Mean per-user ROC AUC via the rank statistic (ties count 1/2).
double mean_auc(const std::vector<ScoredSample>& samples,
                std::vector<UserEval>* per_user = nullptr);

struct AerResult {
    double aer = 0.0;  // mean of FRR and every FAR present (4 kinds -> /4)
    double aer_genuine_skilled = 0.0;  // (FRR + FAR_skilled) / 2
};
AerResult aer(const Rates& rates);

// Threshold transferred from the validation users: the global-EER threshold
// on their scores. Falls back to 0 when no validation scores exist.
double pick_global_threshold(const std::vector<ScoredSample>& validation);

struct EvalReport {
    double threshold = 0.0;
    Rates rates;
    double eer_global = 0.0;
    double eer_user = 0.0;
    double mean_auc = 0.0;
    double aer = 0.0;
    double aer_genuine_skilled = 0.0;
    std::vector<UserEval> per_user;
};

// Full protocol: threshold from validation (or 0), rates at that threshold,
// EERs, mean AUC, AER variants, per-user table.
EvalReport evaluate(const std::vector<ScoredSample>& test,
                    const std::vector<ScoredSample>& validation);

// Scores CSV: header "user,sample,kind,score"; kind spelled as in
// to_string(SampleKind). Report JSON holds every EvalReport field as raw
// doubles plus two-decimal percentage strings.
void write_scores_csv(const std::string& path, const std::vector<ScoredSample>& samples);
std::vector<ScoredSample> read_scores_csv(const std::string& path);
std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& json_text);
void write_report_json(const std::string& path, const EvalReport& report);
EvalReport read_report_json(const std::string& path);

}  // namespace signet
