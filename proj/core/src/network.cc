#include "signet/network.hpp"

namespace signet {

NetworkSpec make_signature_network_spec(std::size_t num_users, LossFormulation formulation,
                                        const std::vector<std::size_t>& conv_channels,
                                        const std::vector<std::size_t>& fc_dims,
                                        std::size_t input_height, std::size_t input_width) {
    if (conv_channels.size() != 5)
        throw ConfigError("signature network needs exactly 5 conv widths");
    if (fc_dims.empty()) throw ConfigError("signature network needs at least one fc width");

    NetworkSpec spec;
    spec.input_height = input_height;
    spec.input_width = input_width;
    spec.num_users = num_users;
    spec.formulation = formulation;

    auto block = [&spec](LayerSpec conv) {
        spec.trunk.push_back(conv);
        spec.trunk.push_back(LayerSpec::batchnorm());
        spec.trunk.push_back(LayerSpec::relu());
    };
    block(LayerSpec::conv(conv_channels[0], 11, 4, 0));
    spec.trunk.push_back(LayerSpec::maxpool(3, 2));
    block(LayerSpec::conv(conv_channels[1], 5, 1, 2));
    spec.trunk.push_back(LayerSpec::maxpool(3, 2));
    block(LayerSpec::conv(conv_channels[2], 3, 1, 1));
    block(LayerSpec::conv(conv_channels[3], 3, 1, 1));
    block(LayerSpec::conv(conv_channels[4], 3, 1, 1));
    spec.trunk.push_back(LayerSpec::maxpool(3, 2));
    spec.trunk.push_back(LayerSpec::flatten());
    for (std::size_t dim : fc_dims) {
        spec.trunk.push_back(LayerSpec::fc(dim));
        spec.trunk.push_back(LayerSpec::batchnorm());
        spec.trunk.push_back(LayerSpec::relu());
    }
    return spec;
}

}  // namespace signet
