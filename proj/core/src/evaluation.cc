#include "signet/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "signet/errors.hpp"

namespace signet {

using json = nlohmann::ordered_json;

SampleKind parse_sample_kind(const std::string& s) {
    if (s == "genuine") return SampleKind::genuine;
    if (s == "random") return SampleKind::random_forgery;
    if (s == "simple") return SampleKind::simple_forgery;
    if (s == "skilled") return SampleKind::skilled_forgery;
    throw ParseError("unknown sample kind: " + s);
}

std::string to_string(SampleKind k) {
    switch (k) {
        case SampleKind::genuine: return "genuine";
        case SampleKind::random_forgery: return "random";
        case SampleKind::simple_forgery: return "simple";
        case SampleKind::skilled_forgery: return "skilled";
    }
    return "?";
}

Rates rates_at_threshold(const std::vector<ScoredSample>& samples, double threshold) {
    std::size_t genuine = 0, rejected = 0;
    std::size_t rand_n = 0, rand_acc = 0, skill_n = 0, skill_acc = 0, simple_n = 0, simple_acc = 0;
    for (const ScoredSample& s : samples) {
        const bool accepted = s.score >= threshold;
        switch (s.kind) {
            case SampleKind::genuine:
                ++genuine;
                if (!accepted) ++rejected;
                break;
            case SampleKind::random_forgery:
                ++rand_n;
                if (accepted) ++rand_acc;
                break;
            case SampleKind::simple_forgery:
                ++simple_n;
                if (accepted) ++simple_acc;
                break;
            case SampleKind::skilled_forgery:
                ++skill_n;
                if (accepted) ++skill_acc;
                break;
        }
    }
    if (genuine == 0 || skill_n == 0)
        throw ProtocolError("rates_at_threshold: need at least one genuine and one skilled sample");
    Rates r;
    r.frr = static_cast<double>(rejected) / static_cast<double>(genuine);
    r.far_random = rand_n ? static_cast<double>(rand_acc) / static_cast<double>(rand_n) : 0.0;
    r.far_skilled = static_cast<double>(skill_acc) / static_cast<double>(skill_n);
    if (simple_n) r.far_simple = static_cast<double>(simple_acc) / static_cast<double>(simple_n);
    return r;
}

namespace {

// Genuine/skilled scores only; the EER protocol ignores other kinds.
void split_scores(const std::vector<ScoredSample>& samples, std::vector<double>& genuine,
                  std::vector<double>& skilled) {
    for (const ScoredSample& s : samples) {
        if (s.kind == SampleKind::genuine) genuine.push_back(s.score);
        else if (s.kind == SampleKind::skilled_forgery) skilled.push_back(s.score);
    }
}

EerResult eer_from_scores(const std::vector<double>& genuine, const std::vector<double>& skilled) {
    if (genuine.empty() || skilled.empty())
        throw ProtocolError("eer: need at least one genuine and one skilled score");
    std::vector<double> candidates;
    candidates.reserve(genuine.size() + skilled.size());
    candidates.insert(candidates.end(), genuine.begin(), genuine.end());
    candidates.insert(candidates.end(), skilled.begin(), skilled.end());
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    // Sorted copies let each candidate's rates come from binary searches:
    // FRR(t) = #(genuine < t)/P, FAR(t) = #(skilled >= t)/N.
    std::vector<double> g = genuine, f = skilled;
    std::sort(g.begin(), g.end());
    std::sort(f.begin(), f.end());

    EerResult best;
    bool have = false;
    double best_diff = 0.0, best_mean = 0.0;
    for (double t : candidates) {
        const auto below = std::lower_bound(g.begin(), g.end(), t) - g.begin();
        const auto accepted = f.end() - std::lower_bound(f.begin(), f.end(), t);
        const double frr = static_cast<double>(below) / static_cast<double>(g.size());
        const double far = static_cast<double>(accepted) / static_cast<double>(f.size());
        const double diff = std::abs(frr - far);
        const double mean = (frr + far) / 2.0;
        if (!have || diff < best_diff || (diff == best_diff && mean < best_mean)) {
            have = true;
            best_diff = diff;
            best_mean = mean;
            best = {mean, t, frr, far};
        }
    }
    return best;
}

}  // namespace

EerResult eer_global(const std::vector<ScoredSample>& samples) {
    std::vector<double> genuine, skilled;
    split_scores(samples, genuine, skilled);
    return eer_from_scores(genuine, skilled);
}

double eer_user_thresholds(const std::vector<ScoredSample>& samples,
                           std::vector<UserEval>* per_user) {
    std::map<std::uint32_t, std::pair<std::vector<double>, std::vector<double>>> by_user;
    for (const ScoredSample& s : samples) {
        if (s.kind == SampleKind::genuine) by_user[s.user].first.push_back(s.score);
        else if (s.kind == SampleKind::skilled_forgery) by_user[s.user].second.push_back(s.score);
    }
    double sum = 0.0;
    std::size_t counted = 0;
    for (const auto& [user, scores] : by_user) {
        if (scores.first.empty() || scores.second.empty()) continue;
        const EerResult r = eer_from_scores(scores.first, scores.second);
        sum += r.eer;
        ++counted;
        if (per_user) {
            UserEval ue;
            ue.user = user;
            ue.eer = r.eer;
            ue.threshold = r.threshold;
            ue.genuine_count = scores.first.size();
            ue.skilled_count = scores.second.size();
            per_user->push_back(ue);
        }
    }
    if (counted == 0)
        throw ProtocolError("eer_user_thresholds: no user has both genuine and skilled scores");
    return sum / static_cast<double>(counted);
}

double mean_auc(const std::vector<ScoredSample>& samples, std::vector<UserEval>* per_user) {
    std::map<std::uint32_t, std::pair<std::vector<double>, std::vector<double>>> by_user;
    for (const ScoredSample& s : samples) {
        if (s.kind == SampleKind::genuine) by_user[s.user].first.push_back(s.score);
        else if (s.kind == SampleKind::skilled_forgery) by_user[s.user].second.push_back(s.score);
    }
    double sum = 0.0;
    std::size_t counted = 0;
    for (const auto& [user, scores] : by_user) {
        const auto& g = scores.first;
        const auto& f = scores.second;
        if (g.empty() || f.empty()) continue;
        double wins = 0.0;
        for (double gs : g)
            for (double fs : f) {
                if (gs > fs) wins += 1.0;
                else if (gs == fs) wins += 0.5;
            }
        const double auc = wins / (static_cast<double>(g.size()) * static_cast<double>(f.size()));
        sum += auc;
        ++counted;
        if (per_user) {
            auto it = std::find_if(per_user->begin(), per_user->end(),
                                   [user = user](const UserEval& u) { return u.user == user; });
            if (it != per_user->end()) {
                it->auc = auc;
            } else {
                UserEval ue;
                ue.user = user;
                ue.auc = auc;
                ue.genuine_count = g.size();
                ue.skilled_count = f.size();
                per_user->push_back(ue);
            }
        }
    }
    if (counted == 0) throw ProtocolError("mean_auc: no user has both genuine and skilled scores");
    return sum / static_cast<double>(counted);
}

AerResult aer(const Rates& rates) {
    AerResult r;
    double sum = rates.frr + rates.far_random + rates.far_skilled;
    double terms = 3.0;
    if (rates.far_simple) {
        sum += *rates.far_simple;
        terms += 1.0;
    }
    r.aer = sum / terms;
    r.aer_genuine_skilled = (rates.frr + rates.far_skilled) / 2.0;
    return r;
}

double pick_global_threshold(const std::vector<ScoredSample>& validation) {
    if (validation.empty()) return 0.0;  // protocol fallback: raw SVM boundary
    return eer_global(validation).threshold;
}

EvalReport evaluate(const std::vector<ScoredSample>& test,
                    const std::vector<ScoredSample>& validation) {
    EvalReport rep;
    rep.threshold = pick_global_threshold(validation);
    rep.rates = rates_at_threshold(test, rep.threshold);
    rep.eer_global = eer_global(test).eer;
    rep.eer_user = eer_user_thresholds(test, &rep.per_user);
    rep.mean_auc = mean_auc(test, &rep.per_user);
    const AerResult a = aer(rep.rates);
    rep.aer = a.aer;
    rep.aer_genuine_skilled = a.aer_genuine_skilled;
    return rep;
}

void write_scores_csv(const std::string& path, const std::vector<ScoredSample>& samples) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "user,sample,kind,score\n";
    char line[128];
    for (const ScoredSample& s : samples) {
        std::snprintf(line, sizeof(line), "%u,%u,%s,%.9g\n", s.user, s.sample,
                      to_string(s.kind).c_str(), s.score);
        out << line;
    }
    if (!out.good()) throw IoError("write failed: " + path);
}

std::vector<ScoredSample> read_scores_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    std::vector<ScoredSample> out;
    std::string line;
    bool first = true;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (first) {
            first = false;
            if (line == "user,sample,kind,score") continue;
        }
        std::istringstream ss(line);
        std::string user, sample, kind, score;
        if (!std::getline(ss, user, ',') || !std::getline(ss, sample, ',') ||
            !std::getline(ss, kind, ',') || !std::getline(ss, score))
            throw ParseError(path + ":" + std::to_string(lineno) + ": malformed score row");
        ScoredSample s;
        try {
            s.user = static_cast<std::uint32_t>(std::stoul(user));
            s.sample = static_cast<std::uint32_t>(std::stoul(sample));
            s.score = std::stod(score);
        } catch (const std::exception&) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": malformed score row");
        }
        s.kind = parse_sample_kind(kind);
        if (!std::isfinite(s.score))
            throw ParseError(path + ":" + std::to_string(lineno) + ": non-finite score");
        out.push_back(s);
    }
    return out;
}

namespace {

std::string percent2(double rate) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", rate * 100.0);
    return buf;
}

}  // namespace

std::string report_to_json(const EvalReport& rep) {
    json j;
    j["threshold"] = rep.threshold;
    j["rates"] = {{"frr", rep.rates.frr},
                  {"far_random", rep.rates.far_random},
                  {"far_skilled", rep.rates.far_skilled}};
    if (rep.rates.far_simple) j["rates"]["far_simple"] = *rep.rates.far_simple;
    j["eer_global"] = rep.eer_global;
    j["eer_user"] = rep.eer_user;
    j["mean_auc"] = rep.mean_auc;
    j["aer"] = rep.aer;
    j["aer_genuine_skilled"] = rep.aer_genuine_skilled;
    json pct;
    pct["FRR"] = percent2(rep.rates.frr);
    pct["FAR_random"] = percent2(rep.rates.far_random);
    if (rep.rates.far_simple) pct["FAR_simple"] = percent2(*rep.rates.far_simple);
    pct["FAR_skilled"] = percent2(rep.rates.far_skilled);
    pct["EER_global"] = percent2(rep.eer_global);
    pct["EER_user"] = percent2(rep.eer_user);
    pct["AER"] = percent2(rep.aer);
    pct["AER_genuine_skilled"] = percent2(rep.aer_genuine_skilled);
    j["percent"] = pct;
    json users = json::array();
    for (const UserEval& u : rep.per_user) {
        users.push_back({{"user", u.user},
                         {"eer", u.eer},
                         {"threshold", u.threshold},
                         {"auc", u.auc},
                         {"genuine", u.genuine_count},
                         {"skilled", u.skilled_count}});
    }
    j["per_user"] = users;
    return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("report JSON: ") + e.what());
    }
    EvalReport rep;
    rep.threshold = j.at("threshold").get<double>();
    rep.rates.frr = j.at("rates").at("frr").get<double>();
    rep.rates.far_random = j.at("rates").at("far_random").get<double>();
    rep.rates.far_skilled = j.at("rates").at("far_skilled").get<double>();
    if (j.at("rates").contains("far_simple"))
        rep.rates.far_simple = j.at("rates").at("far_simple").get<double>();
    rep.eer_global = j.at("eer_global").get<double>();
    rep.eer_user = j.at("eer_user").get<double>();
    rep.mean_auc = j.at("mean_auc").get<double>();
    rep.aer = j.at("aer").get<double>();
    rep.aer_genuine_skilled = j.at("aer_genuine_skilled").get<double>();
    for (const auto& u : j.at("per_user")) {
        UserEval ue;
        ue.user = u.at("user").get<std::uint32_t>();
        ue.eer = u.at("eer").get<double>();
        ue.threshold = u.at("threshold").get<double>();
        ue.auc = u.at("auc").get<double>();
        ue.genuine_count = u.at("genuine").get<std::size_t>();
        ue.skilled_count = u.at("skilled").get<std::size_t>();
        rep.per_user.push_back(ue);
    }
    return rep;
}

void write_report_json(const std::string& path, const EvalReport& report) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << report_to_json(report);
    if (!out.good()) throw IoError("write failed: " + path);
}

EvalReport read_report_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return report_from_json(ss.str());
}

}  // namespace signet
