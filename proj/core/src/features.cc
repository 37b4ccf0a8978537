#include "signet/features.hpp"

#include "signet/errors.hpp"
#include "signet/io.hpp"

namespace signet {

std::vector<const FeatureRecord*> FeatureSet::of_user(std::uint32_t user, bool forgery) const {
    std::vector<const FeatureRecord*> out;
    for (const FeatureRecord& r : records)
        if (r.user == user && (r.forgery != 0) == forgery) out.push_back(&r);
    return out;
}

const FeatureRecord* FeatureSet::by_sample(std::uint32_t sample) const {
    for (const FeatureRecord& r : records)
        if (r.sample == sample) return &r;
    return nullptr;
}

FeatureSet extract_features(Network& net, const LabeledImageSet& images,
                            const std::vector<std::uint32_t>& sample_ids, double input_scale,
                            std::size_t batch_size) {
    if (sample_ids.size() != images.size())
        throw ShapeError("extract_features: sample id count does not match image count");
    if (batch_size == 0) throw ConfigError("extract_features: batch_size must be positive");

    TrainConfig cfg;
    cfg.input_scale = input_scale;

    FeatureSet set;
    set.dim = net.feature_dim();
    for (std::size_t start = 0; start < images.size(); start += batch_size) {
        const std::size_t end = std::min(images.size(), start + batch_size);
        std::vector<std::size_t> indices;
        for (std::size_t i = start; i < end; ++i) indices.push_back(i);
        const Tensor batch = assemble_batch(images, indices, net.spec(), cfg, nullptr);
        FeedResult<float> out = net.forward(batch, Mode::infer);
        for (std::size_t i = 0; i < indices.size(); ++i) {
            FeatureRecord rec;
            rec.user = static_cast<std::uint32_t>(images[indices[i]].user);
            rec.forgery = images[indices[i]].forgery ? 1 : 0;
            rec.sample = sample_ids[indices[i]];
            rec.values.assign(out.features.ptr() + i * set.dim,
                              out.features.ptr() + (i + 1) * set.dim);
            set.records.push_back(std::move(rec));
        }
    }
    return set;
}

namespace {
constexpr char kFeatureMagic[4] = {'S', 'G', 'F', 'V'};
constexpr std::uint32_t kFeatureVersion = 1;
}  // namespace

void save_features(const std::string& path, const FeatureSet& set, std::uint64_t config_hash) {
    BinaryWriter w(path);
    w.magic(kFeatureMagic);
    w.u32(kFeatureVersion);
    w.u64(set.records.size());
    w.u64(set.dim);
    for (const FeatureRecord& r : set.records) {
        if (r.values.size() != set.dim)
            throw ShapeError("save_features: record dimension mismatch");
        w.u32(r.user);
        w.u8(r.forgery);
        w.u32(r.sample);
        w.f32_array(r.values.data(), r.values.size());
    }
    w.u64(config_hash);
    w.close();
}

FeatureSet load_features(const std::string& path, std::uint64_t* config_hash_out) {
    BinaryReader r(path);
    r.expect_magic(kFeatureMagic, "feature file");
    if (r.u32() != kFeatureVersion) r.fail("unsupported feature file version");
    FeatureSet set;
    const std::uint64_t count = r.u64();
    set.dim = r.u64();
    for (std::uint64_t i = 0; i < count; ++i) {
        FeatureRecord rec;
        rec.user = r.u32();
        rec.forgery = r.u8();
        rec.sample = r.u32();
        rec.values.resize(set.dim);
        r.f32_array(rec.values.data(), set.dim);
        set.records.push_back(std::move(rec));
    }
    const std::uint64_t hash = r.u64();
    if (config_hash_out) *config_hash_out = hash;
    return set;
}

}  // namespace signet
