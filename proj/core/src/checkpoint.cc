#include "signet/checkpoint.hpp"

#include "signet/errors.hpp"
#include "signet/io.hpp"

namespace signet {

namespace {

constexpr char kCheckpointMagic[4] = {'S', 'G', 'N', 'T'};
constexpr char kTrainStateMagic[4] = {'S', 'G', 'T', 'R'};
constexpr std::uint32_t kVersion = 1;

void write_spec(BinaryWriter& w, const NetworkSpec& spec) {
    w.u64(spec.input_height);
    w.u64(spec.input_width);
    w.u64(spec.input_channels);
    w.u64(spec.num_users);
    w.u32(static_cast<std::uint32_t>(spec.formulation));
    w.f64(spec.bn_eps);
    w.u64(spec.trunk.size());
    for (const LayerSpec& ls : spec.trunk) {
        w.u32(static_cast<std::uint32_t>(ls.kind));
        w.u64(ls.out_channels);
        w.u64(ls.kernel);
        w.u64(ls.stride);
        w.u64(ls.pad);
        w.u8(ls.bias ? 1 : 0);
    }
}

NetworkSpec read_spec(BinaryReader& r) {
    NetworkSpec spec;
    spec.input_height = r.u64();
    spec.input_width = r.u64();
    spec.input_channels = r.u64();
    spec.num_users = r.u64();
    const std::uint32_t form = r.u32();
    if (form > 3) r.fail("invalid loss formulation tag");
    spec.formulation = static_cast<LossFormulation>(form);
    spec.bn_eps = r.f64();
    const std::uint64_t n_layers = r.u64();
    for (std::uint64_t i = 0; i < n_layers; ++i) {
        LayerSpec ls{};
        const std::uint32_t kind = r.u32();
        if (kind < 1 || kind > 6) r.fail("invalid layer kind tag");
        ls.kind = static_cast<LayerKind>(kind);
        ls.out_channels = r.u64();
        ls.kernel = r.u64();
        ls.stride = r.u64();
        ls.pad = r.u64();
        ls.bias = r.u8() != 0;
        spec.trunk.push_back(ls);
    }
    return spec;
}

void write_parameters(BinaryWriter& w, const Network& net) {
    for (const auto& layer : net.trunk()) {
        if (layer.spec.kind == LayerKind::conv || layer.spec.kind == LayerKind::fc) {
            w.tensor(layer.w);
            if (layer.spec.bias) w.tensor(layer.b);
        } else if (layer.spec.kind == LayerKind::batchnorm) {
            w.tensor(layer.gamma);
            w.tensor(layer.beta);
            w.tensor(layer.pop_mean);
            w.tensor(layer.pop_var);
        }
    }
    w.tensor(net.user_w());
    w.tensor(net.user_b());
    if (net.spec().has_forgery_head()) {
        w.tensor(net.forgery_w());
        w.tensor(net.forgery_b());
    }
}

void read_into(BinaryReader& r, Tensor& dst, const char* what) {
    Tensor t = r.tensor();
    if (!t.same_shape(dst))
        r.fail(std::string("tensor shape mismatch for ") + what + ": stored " + t.shape_string() +
               ", expected " + dst.shape_string());
    dst = std::move(t);
}

void read_parameters(BinaryReader& r, Network& net) {
    for (auto& layer : net.trunk()) {
        if (layer.spec.kind == LayerKind::conv || layer.spec.kind == LayerKind::fc) {
            read_into(r, layer.w, "weights");
            if (layer.spec.bias) read_into(r, layer.b, "bias");
        } else if (layer.spec.kind == LayerKind::batchnorm) {
            read_into(r, layer.gamma, "bn gamma");
            read_into(r, layer.beta, "bn beta");
            read_into(r, layer.pop_mean, "bn mean");
            read_into(r, layer.pop_var, "bn variance");
        }
    }
    read_into(r, net.user_w(), "user head weights");
    read_into(r, net.user_b(), "user head bias");
    if (net.spec().has_forgery_head()) {
        read_into(r, net.forgery_w(), "forgery head weights");
        read_into(r, net.forgery_b(), "forgery head bias");
    }
}

}  // namespace

void save_checkpoint(const std::string& path, const Network& net, std::uint64_t config_hash) {
    BinaryWriter w(path);
    w.magic(kCheckpointMagic);
    w.u32(kVersion);
    write_spec(w, net.spec());
    write_parameters(w, net);
    w.u64(config_hash);
    w.close();
}

Network load_checkpoint(const std::string& path, std::uint64_t* config_hash_out) {
    BinaryReader r(path);
    r.expect_magic(kCheckpointMagic, "checkpoint");
    if (r.u32() != kVersion) r.fail("unsupported checkpoint version");
    Network net(read_spec(r));
    read_parameters(r, net);
    const std::uint64_t hash = r.u64();
    if (config_hash_out) *config_hash_out = hash;
    return net;
}

void save_training_state(const std::string& path, const Network& net,
                         const TrainingSnapshot& snap, std::uint64_t config_hash) {
    BinaryWriter w(path);
    w.magic(kTrainStateMagic);
    w.u32(kVersion);
    write_spec(w, net.spec());
    write_parameters(w, net);
    w.u64(snap.velocities.size());
    for (const Tensor& v : snap.velocities) w.tensor(v);
    w.str(snap.rng_train_state);
    w.str(snap.rng_augment_state);
    w.u64(snap.completed_epochs);
    w.u64(config_hash);
    w.close();
}

Network load_training_state(const std::string& path, TrainingSnapshot& snap_out,
                            std::uint64_t* config_hash_out) {
    BinaryReader r(path);
    r.expect_magic(kTrainStateMagic, "training state");
    if (r.u32() != kVersion) r.fail("unsupported training state version");
    Network net(read_spec(r));
    read_parameters(r, net);
    const std::uint64_t n_vel = r.u64();
    snap_out.velocities.clear();
    for (std::uint64_t i = 0; i < n_vel; ++i) snap_out.velocities.push_back(r.tensor());
    snap_out.rng_train_state = r.str();
    snap_out.rng_augment_state = r.str();
    snap_out.completed_epochs = r.u64();
    const std::uint64_t hash = r.u64();
    if (config_hash_out) *config_hash_out = hash;
    return net;
}

}  // namespace signet
