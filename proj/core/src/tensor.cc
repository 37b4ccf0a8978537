#include "signet/tensor.hpp"

#include "signet/io.hpp"

namespace signet {

static const char kTensorMagic[4] = {'S', 'G', 'T', 'S'};
static constexpr std::uint32_t kTensorVersion = 1;

void save_tensor(const std::string& path, const Tensor& t) {
    BinaryWriter w(path);
    w.magic(kTensorMagic);
    w.u32(kTensorVersion);
    w.tensor(t);
    w.close();
}

Tensor load_tensor(const std::string& path) {
    BinaryReader r(path);
    r.expect_magic(kTensorMagic, "tensor");
    std::uint32_t version = r.u32();
    if (version != kTensorVersion) r.fail("unsupported tensor file version");
    return r.tensor();
}

}  // namespace signet
