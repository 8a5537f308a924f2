#pragma once

#include <cstdint>
#include <filesystem>

#include <json.hpp>

#include "mimo/model.hpp"

namespace mimo {

struct Checkpoint {
    Network network;
    std::size_t step = 0;
    std::uint64_t sampler_seed = 0;
};

// File layout: "MIMO" magic, format byte 0x01, u32 little-endian header
// length, UTF-8 JSON header (version, network config, named parameter shapes
// in order, dtype, step, rng seed), then each parameter's values as
// little-endian f64 in header order.
void save_checkpoint(const Network& net, std::size_t step, std::uint64_t sampler_seed,
                     const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json network_config_to_json(const NetworkConfig& config);
NetworkConfig network_config_from_json(const nlohmann::json& j);

} // namespace mimo
