#include "signet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "signet/errors.hpp"
#include "signet/rng.hpp"

namespace fs = std::filesystem;

namespace signet {

char kind_char(SampleKind k) {
    switch (k) {
        case SampleKind::genuine: return 'g';
        case SampleKind::skilled_forgery: return 'f';
        case SampleKind::simple_forgery: return 's';
        case SampleKind::random_forgery: return 'r';
    }
    return '?';
}

SampleKind kind_from_char(char c) {
    switch (c) {
        case 'g': return SampleKind::genuine;
        case 'f': return SampleKind::skilled_forgery;
        case 's': return SampleKind::simple_forgery;
        case 'r': return SampleKind::random_forgery;
    }
    throw ParseError(std::string("unknown sample kind tag: ") + c);
}

std::vector<const SampleRecord*> DatasetIndex::of(std::uint32_t user, SampleKind kind) const {
    std::vector<const SampleRecord*> out;
    for (const SampleRecord& r : records)
        if (r.user == user && r.kind == kind) out.push_back(&r);
    return out;
}

std::size_t DatasetIndex::ordinal(const SampleRecord& rec) const {
    const auto base = records.data();
    if (&rec >= base && &rec < base + records.size())
        return static_cast<std::size_t>(&rec - base);
    for (std::size_t i = 0; i < records.size(); ++i)
        if (records[i].user == rec.user && records[i].kind == rec.kind &&
            records[i].sample == rec.sample)
            return i;
    throw IndexError("ordinal: record not part of this index");
}

SampleRecord parse_sample_filename(const std::string& filename) {
    // u%04d_%c_%02d with optional .png; sample may exceed two digits.
    std::string stem = filename;
    if (stem.size() > 4 && stem.substr(stem.size() - 4) == ".png")
        stem = stem.substr(0, stem.size() - 4);
    const auto bad = [&]() -> ParseError {
        return ParseError("malformed sample filename: " + filename);
    };
    if (stem.size() < 10 || stem[0] != 'u') throw bad();
    for (int i = 1; i <= 4; ++i)
        if (!std::isdigit(static_cast<unsigned char>(stem[i]))) throw bad();
    if (stem[5] != '_' || stem[7] != '_') throw bad();
    if (stem.size() < 10) throw bad();
    for (std::size_t i = 8; i < stem.size(); ++i)
        if (!std::isdigit(static_cast<unsigned char>(stem[i]))) throw bad();
    SampleRecord rec;
    rec.user = static_cast<std::uint32_t>(std::stoul(stem.substr(1, 4)));
    rec.kind = kind_from_char(stem[6]);
    rec.sample = static_cast<std::uint32_t>(std::stoul(stem.substr(8)));
    rec.path = filename;
    return rec;
}

std::string sample_filename(std::uint32_t user, SampleKind kind, std::uint32_t sample) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "u%04u_%c_%02u.png", user, kind_char(kind), sample);
    return buf;
}

namespace {

int kind_rank(SampleKind k) {
    switch (k) {
        case SampleKind::genuine: return 0;
        case SampleKind::skilled_forgery: return 1;
        case SampleKind::simple_forgery: return 2;
        case SampleKind::random_forgery: return 3;
    }
    return 4;
}

void sort_records(std::vector<SampleRecord>& records) {
    std::sort(records.begin(), records.end(), [](const SampleRecord& a, const SampleRecord& b) {
        if (a.user != b.user) return a.user < b.user;
        if (a.kind != b.kind) return kind_rank(a.kind) < kind_rank(b.kind);
        return a.sample < b.sample;
    });
}

}  // namespace

DatasetIndex load_index(const std::string& root) {
    if (!fs::is_directory(root)) throw IoError("dataset root is not a directory: " + root);
    DatasetIndex index;
    index.name = fs::path(root).filename().string();

    std::vector<fs::path> user_dirs;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory() && entry.path().filename().string().rfind("u", 0) == 0)
            user_dirs.push_back(entry.path());
    }
    std::sort(user_dirs.begin(), user_dirs.end());

    std::set<std::uint32_t> seen_users;
    std::set<std::tuple<std::uint32_t, int, std::uint32_t>> seen_triples;
    for (const fs::path& dir : user_dirs) {
        const std::string dirname = dir.filename().string();
        if (dirname.size() != 5) throw ParseError("malformed user directory: " + dir.string());
        for (int i = 1; i <= 4; ++i)
            if (!std::isdigit(static_cast<unsigned char>(dirname[i])))
                throw ParseError("malformed user directory: " + dir.string());
        const std::uint32_t user = static_cast<std::uint32_t>(std::stoul(dirname.substr(1)));
        seen_users.insert(user);

        std::vector<fs::path> files;
        for (const auto& f : fs::directory_iterator(dir))
            if (f.is_regular_file() && f.path().extension() == ".png") files.push_back(f.path());
        std::sort(files.begin(), files.end());
        for (const fs::path& f : files) {
            SampleRecord rec = parse_sample_filename(f.filename().string());
            if (rec.user != user)
                throw ParseError("sample file in wrong user directory: " + f.string());
            rec.path = f.string();
            const auto triple = std::make_tuple(rec.user, kind_rank(rec.kind), rec.sample);
            if (!seen_triples.insert(triple).second)
                throw ParseError("duplicate sample: " + f.string());
            index.records.push_back(std::move(rec));
        }
    }

    index.num_users = seen_users.size();
    for (std::uint32_t u = 0; u < index.num_users; ++u)
        if (!seen_users.count(u))
            throw IndexError("user ids not contiguous: missing user " + std::to_string(u));
    for (std::uint32_t u = 0; u < index.num_users; ++u) {
        const bool has_genuine = std::any_of(
            index.records.begin(), index.records.end(), [u](const SampleRecord& r) {
                return r.user == u && r.kind == SampleKind::genuine;
            });
        if (!has_genuine)
            throw IndexError("user " + std::to_string(u) + " has no genuine samples");
    }
    sort_records(index.records);
    return index;
}

void SplitPlan::validate() const {
    if (exploitation_users == 0) throw ConfigError("split.exploitation_users must be positive");
    if (train_fraction <= 0.0 || train_fraction >= 1.0)
        throw ConfigError("split.train_fraction must lie in (0,1)");
    if (reference_count == 0) throw ConfigError("split.reference_count must be positive");
}

std::vector<const SplitEntry*> SplitListing::of(const std::string& split) const {
    std::vector<const SplitEntry*> out;
    for (const SplitEntry& e : entries)
        if (e.split == split) out.push_back(&e);
    return out;
}

std::vector<const SplitEntry*> SplitListing::of(const std::string& split,
                                                std::uint32_t user) const {
    std::vector<const SplitEntry*> out;
    for (const SplitEntry& e : entries)
        if (e.split == split && e.user == user) out.push_back(&e);
    return out;
}

namespace {

std::vector<const SampleRecord*> shuffled(std::vector<const SampleRecord*> recs, Rng& rng) {
    for (std::size_t i = recs.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.uniform_below(i));
        std::swap(recs[i - 1], recs[j]);
    }
    return recs;
}

}  // namespace

SplitListing build_split(const DatasetIndex& index, const SplitPlan& plan, std::uint64_t seed) {
    plan.validate();
    const std::size_t dev_count = plan.development_users
                                      ? plan.development_users
                                      : index.num_users - std::min(index.num_users,
                                                                   plan.exploitation_users);
    if (plan.exploitation_users + dev_count > index.num_users)
        throw ProtocolError("split: plan needs " +
                            std::to_string(plan.exploitation_users + dev_count) +
                            " users but the dataset has " + std::to_string(index.num_users));
    if (dev_count == 0) throw ProtocolError("split: no development users remain");
    if (plan.vv_users > dev_count)
        throw ProtocolError("split: validation-verification users exceed development users");

    const std::uint32_t exploit_begin = 0;
    const std::uint32_t exploit_end = static_cast<std::uint32_t>(plan.exploitation_users);
    const std::uint32_t dev_begin = exploit_end;
    const std::uint32_t dev_end = dev_begin + static_cast<std::uint32_t>(dev_count);
    const std::size_t negs_per_pool =
        plan.negatives_per_pool_user ? plan.negatives_per_pool_user : plan.reference_count;

    SplitListing out;
    auto add = [&out](const char* split, std::uint32_t user, SampleKind kind,
                      const std::string& path) {
        out.entries.push_back({split, user, kind, path});
    };

    // Development users: 90/10 into L_c / V_c, genuine and skilled alike.
    for (std::uint32_t u = dev_begin; u < dev_end; ++u) {
        Rng rng(derive_seed(seed, "split.dev.user" + std::to_string(u)));
        for (SampleKind kind : {SampleKind::genuine, SampleKind::skilled_forgery}) {
            auto recs = shuffled(index.of(u, kind), rng);
            // floor of the validation share; the epsilon absorbs binary
            // representation error in (1 - train_fraction) so n=10 at 90/10
            // yields exactly 1 validation sample.
            const std::size_t val = static_cast<std::size_t>(std::floor(
                static_cast<double>(recs.size()) * (1.0 - plan.train_fraction) + 1e-9));
            for (std::size_t i = 0; i < recs.size(); ++i)
                add(i < recs.size() - val ? "lc" : "vc", u, kind, recs[i]->path);
        }
    }

    // Exploitation users: r references, disjoint genuine tests, all skilled
    // forgeries as tests.
    for (std::uint32_t u = exploit_begin; u < exploit_end; ++u) {
        Rng rng(derive_seed(seed, "split.exploit.user" + std::to_string(u)));
        auto genuine = shuffled(index.of(u, SampleKind::genuine), rng);
        if (genuine.size() < plan.reference_count + 1)
            throw ProtocolError("split: user " + std::to_string(u) + " has " +
                                std::to_string(genuine.size()) + " genuine samples, needs >= " +
                                std::to_string(plan.reference_count + 1) +
                                " (references + 1 test)");
        for (std::size_t i = 0; i < genuine.size(); ++i)
            add(i < plan.reference_count ? "lv" : "tv", u, SampleKind::genuine, genuine[i]->path);
        for (const SampleRecord* r : index.of(u, SampleKind::skilled_forgery))
            add("tv", u, SampleKind::skilled_forgery, r->path);
        for (const SampleRecord* r : index.of(u, SampleKind::simple_forgery))
            add("tv", u, SampleKind::simple_forgery, r->path);
    }

    // Negative (random-forgery) training samples per enrolled user. With the
    // exploitation convention these are the other users' references, so they
    // never collide with anyone's test presentations; with the development
    // convention they come from users outside the exploitation set entirely.
    for (std::uint32_t u = exploit_begin; u < exploit_end; ++u) {
        if (plan.negatives_from_development) {
            for (std::uint32_t p = dev_begin; p < dev_end; ++p) {
                Rng rng(derive_seed(seed, "split.neg.user" + std::to_string(u) + ".pool" +
                                              std::to_string(p)));
                auto pool = shuffled(index.of(p, SampleKind::genuine), rng);
                const std::size_t take = std::min(negs_per_pool, pool.size());
                for (std::size_t i = 0; i < take; ++i)
                    add("neg", u, SampleKind::random_forgery, pool[i]->path);
            }
        } else {
            for (std::uint32_t p = exploit_begin; p < exploit_end; ++p) {
                if (p == u) continue;
                std::vector<std::string> ref_paths;
                for (const SplitEntry& e : out.entries)
                    if (e.split == "lv" && e.user == p) ref_paths.push_back(e.path);
                const std::size_t take = std::min(negs_per_pool, ref_paths.size());
                for (std::size_t i = 0; i < take; ++i)
                    add("neg", u, SampleKind::random_forgery, ref_paths[i]);
            }
        }
    }

    // Random-forgery test presentations: other exploitation users' genuine
    // *test* samples, never their references (references may train this
    // user's classifier as negatives under the exploitation convention).
    for (std::uint32_t u = exploit_begin; u < exploit_end; ++u) {
        Rng rng(derive_seed(seed, "split.random.user" + std::to_string(u)));
        std::vector<std::string> pool;
        for (const SplitEntry& e : out.entries)
            if (e.split == "tv" && e.user != u && e.user < exploit_end &&
                e.kind == SampleKind::genuine)
                pool.push_back(e.path);
        if (pool.size() < plan.test_random)
            throw ProtocolError("split: random-forgery pool for user " + std::to_string(u) +
                                " has " + std::to_string(pool.size()) + " samples, needs " +
                                std::to_string(plan.test_random));
        for (std::size_t i = 0; i < plan.test_random; ++i) {
            const std::size_t j = static_cast<std::size_t>(rng.uniform_below(pool.size()));
            add("tv", u, SampleKind::random_forgery, pool[j]);
            pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(j));
        }
    }

    // Validation-verification users: the leading development users, treated
    // like enrollees but entirely inside the development set.
    for (std::uint32_t u = dev_begin; u < dev_begin + static_cast<std::uint32_t>(plan.vv_users);
         ++u) {
        Rng rng(derive_seed(seed, "split.vv.user" + std::to_string(u)));
        auto genuine = shuffled(index.of(u, SampleKind::genuine), rng);
        if (genuine.size() < plan.reference_count + 1)
            throw ProtocolError("split: validation user " + std::to_string(u) + " has " +
                                std::to_string(genuine.size()) + " genuine samples, needs >= " +
                                std::to_string(plan.reference_count + 1));
        for (std::size_t i = 0; i < genuine.size(); ++i)
            add(i < plan.reference_count ? "vv_ref" : "vv_test", u, SampleKind::genuine,
                genuine[i]->path);
        for (const SampleRecord* r : index.of(u, SampleKind::skilled_forgery))
            add("vv_test", u, SampleKind::skilled_forgery, r->path);
        for (std::uint32_t p = dev_begin; p < dev_end; ++p) {
            if (p == u) continue;
            Rng pool_rng(derive_seed(seed, "split.vv_neg.user" + std::to_string(u) + ".pool" +
                                               std::to_string(p)));
            auto pool = shuffled(index.of(p, SampleKind::genuine), pool_rng);
            const std::size_t take = std::min(negs_per_pool, pool.size());
            for (std::size_t i = 0; i < take; ++i)
                add("vv_neg", u, SampleKind::random_forgery, pool[i]->path);
        }
    }

    return out;
}

void write_manifest(const std::string& path, const SplitListing& listing) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    for (const SplitEntry& e : listing.entries)
        out << e.split << '\t' << e.user << '\t' << kind_char(e.kind) << '\t' << e.path << '\n';
    if (!out.good()) throw IoError("write failed: " + path);
}

SplitListing read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    SplitListing listing;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string split, user, kind, file_path;
        if (!std::getline(ss, split, '\t') || !std::getline(ss, user, '\t') ||
            !std::getline(ss, kind, '\t') || !std::getline(ss, file_path))
            throw ParseError(path + ":" + std::to_string(lineno) + ": malformed manifest row");
        SplitEntry e;
        e.split = split;
        try {
            e.user = static_cast<std::uint32_t>(std::stoul(user));
        } catch (const std::exception&) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": bad user id");
        }
        if (kind.size() != 1)
            throw ParseError(path + ":" + std::to_string(lineno) + ": bad kind tag");
        e.kind = kind_from_char(kind[0]);
        e.path = file_path;
        listing.entries.push_back(std::move(e));
    }
    return listing;
}

}  // namespace signet
