#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "signet/evaluation.hpp"  // SampleKind

namespace signet {

// File kinds reuse SampleKind; on disk they appear as one-letter tags in the
// naming convention u%04d_{g|f|s|r}_%02d.png.
char kind_char(SampleKind k);
SampleKind kind_from_char(char c);

struct SampleRecord {
    std::string path;
    std::uint32_t user = 0;
    SampleKind kind = SampleKind::genuine;
    std::uint32_t sample = 0;

    bool forgery() const { return kind == SampleKind::skilled_forgery; }
};

struct DatasetIndex {
    std::string name;
    std::size_t num_users = 0;
    int canvas_height = 0;  // advisory geometry for preprocessing configs
    int canvas_width = 0;
    // Sorted by (user, kind, sample); the position of a record is its global
    // sample ordinal, the stable id used by feature files and score CSVs.
    std::vector<SampleRecord> records;

    std::vector<const SampleRecord*> of(std::uint32_t user, SampleKind kind) const;
    std::size_t ordinal(const SampleRecord& rec) const;
};

// Parses u%04d_{g|f|s|r}_%02d(.png) into its parts.
SampleRecord parse_sample_filename(const std::string& filename);
std::string sample_filename(std::uint32_t user, SampleKind kind, std::uint32_t sample);

// Walks <root>/uNNNN/ directories. User ids must be contiguous from 0, every
// user needs at least one genuine sample, duplicate (user, kind, sample)
// triples are rejected.
DatasetIndex load_index(const std::string& root);

struct SplitPlan {
    std::size_t exploitation_users = 10;  // users [0, e)
    std::size_t development_users = 0;    // users [e, e+d); 0 = all remaining
    double train_fraction = 0.9;          // development genuine/forgery split L_c : V_c
    std::size_t vv_users = 0;             // leading development users doubling as
                                          // validation-verification identities
    std::size_t reference_count = 5;      // r genuine references per enrolled user
    std::size_t test_random = 10;         // random-forgery presentations per test user
    bool negatives_from_development = false;  // else: other exploitation users' references
    std::size_t negatives_per_pool_user = 0;  // 0 = reference_count

    void validate() const;
};

// One line of the materialized split. `user` is the owning / claimed user;
// for random-forgery rows the path belongs to a different user.
struct SplitEntry {
    std::string split;  // lc vc vv_ref vv_test vv_neg lv tv neg
    std::uint32_t user = 0;
    SampleKind kind = SampleKind::genuine;
    std::string path;
};

struct SplitListing {
    std::vector<SplitEntry> entries;

    std::vector<const SplitEntry*> of(const std::string& split) const;
    std::vector<const SplitEntry*> of(const std::string& split, std::uint32_t user) const;
};

// Deterministic materialization of the protocol: development users split
// 90/10 into L_c/V_c; exploitation users get r references (L_v) and disjoint
// genuine + skilled + random test presentations (T_v) plus negative training
// samples from the configured pool; V_v users mirror the exploitation
// treatment inside the development set.
SplitListing build_split(const DatasetIndex& index, const SplitPlan& plan, std::uint64_t seed);

// Tab-separated manifest: split<TAB>user<TAB>kind<TAB>path.
void write_manifest(const std::string& path, const SplitListing& listing);
SplitListing read_manifest(const std::string& path);

}  // namespace signet
