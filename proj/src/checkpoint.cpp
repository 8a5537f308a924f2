#include "mimo/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "mimo/io.hpp"

namespace mimo {

namespace {

constexpr char kMagic[4] = {'M', 'I', 'M', 'O'};
constexpr std::uint8_t kFormatVersion = 0x01;

void put_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64_le(std::vector<std::uint8_t>& out, double v) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

double get_f64_le(const std::uint8_t* p) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

} // namespace

nlohmann::json network_config_to_json(const NetworkConfig& c) {
    return nlohmann::json{
        {"architecture", architecture_name(c.architecture)},
        {"task", task_name(c.task)},
        {"ensemble_size", c.ensemble_size},
        {"input_dim", c.input_dim},
        {"hidden_widths", c.hidden_widths},
        {"output_dim", c.output_dim},
        {"init_seed", c.init_seed},
    };
}

NetworkConfig network_config_from_json(const nlohmann::json& j) {
    NetworkConfig c;
    c.architecture = architecture_from_name(j.at("architecture").get<std::string>());
    c.task = task_from_name(j.at("task").get<std::string>());
    c.ensemble_size = j.at("ensemble_size").get<std::size_t>();
    c.input_dim = j.at("input_dim").get<std::size_t>();
    c.hidden_widths = j.at("hidden_widths").get<std::vector<std::size_t>>();
    c.output_dim = j.at("output_dim").get<std::size_t>();
    c.init_seed = j.at("init_seed").get<std::uint64_t>();
    c.validate();
    return c;
}

void save_checkpoint(const Network& net, std::size_t step, std::uint64_t sampler_seed,
                     const std::filesystem::path& path) {
    nlohmann::json shapes = nlohmann::json::array();
    for (const auto& p : net.parameters) {
        shapes.push_back({{"name", p.name}, {"shape", p.value.shape()}});
    }
    const nlohmann::json header{
        {"version", 1},
        {"network", network_config_to_json(net.config)},
        {"shapes", shapes},
        {"dtype", "f64"},
        {"step", step},
        {"rng", {{"seed", sampler_seed}}},
    };
    const std::string header_text = header.dump();

    std::vector<std::uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    out.push_back(kFormatVersion);
    put_u32_le(out, static_cast<std::uint32_t>(header_text.size()));
    out.insert(out.end(), header_text.begin(), header_text.end());
    for (const auto& p : net.parameters) {
        for (double v : p.value.values()) put_f64_le(out, v);
    }
    io::write_binary_atomic(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const std::vector<std::uint8_t> raw = io::read_binary(path);
    const std::string where = path.string();
    if (raw.size() < 4 || std::memcmp(raw.data(), kMagic, 4) != 0) {
        throw IoError(where + ": bad magic, not a checkpoint file");
    }
    if (raw.size() < 9) {
        throw IoError(where + ": truncated header");
    }
    if (raw[4] != kFormatVersion) {
        throw IoError(where + ": unsupported checkpoint format version " +
                      std::to_string(raw[4]));
    }
    std::uint32_t header_len = 0;
    for (int i = 0; i < 4; ++i) {
        header_len |= static_cast<std::uint32_t>(raw[5 + i]) << (8 * i);
    }
    if (raw.size() < 9 + static_cast<std::size_t>(header_len)) {
        throw IoError(where + ": truncated header");
    }

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(raw.begin() + 9, raw.begin() + 9 + header_len);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(where + ": unreadable header: " + e.what());
    }

    Checkpoint ckpt;
    try {
        if (header.at("version").get<int>() != 1) {
            throw IoError(where + ": unsupported header version");
        }
        if (header.at("dtype").get<std::string>() != "f64") {
            throw IoError(where + ": unsupported dtype '" +
                          header.at("dtype").get<std::string>() + "'");
        }
        ckpt.network.config = network_config_from_json(header.at("network"));
        ckpt.step = header.at("step").get<std::size_t>();
        ckpt.sampler_seed = header.at("rng").at("seed").get<std::uint64_t>();

        std::size_t offset = 9 + header_len;
        for (const auto& entry : header.at("shapes")) {
            const std::string name = entry.at("name").get<std::string>();
            const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
            Tensor value(shape);
            if (offset + 8 * value.size() > raw.size()) {
                throw IoError(where + ": truncated payload for parameter '" + name + "'");
            }
            for (std::size_t i = 0; i < value.size(); ++i) {
                value[i] = get_f64_le(raw.data() + offset + 8 * i);
            }
            offset += 8 * value.size();
            ckpt.network.parameters.push_back({name, std::move(value)});
        }
        if (offset != raw.size()) {
            throw IoError(where + ": trailing bytes after parameter payload");
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError(where + ": malformed header field: " + e.what());
    }

    // Parameter names and shapes must be exactly those the embedded config
    // dictates.
    const Network expected = build_network(ckpt.network.config);
    if (expected.parameters.size() != ckpt.network.parameters.size()) {
        throw IoError(where + ": header lists " +
                      std::to_string(ckpt.network.parameters.size()) +
                      " parameters, config implies " +
                      std::to_string(expected.parameters.size()));
    }
    for (std::size_t i = 0; i < expected.parameters.size(); ++i) {
        if (expected.parameters[i].name != ckpt.network.parameters[i].name ||
            !expected.parameters[i].value.same_shape(ckpt.network.parameters[i].value)) {
            throw IoError(where + ": parameter '" + ckpt.network.parameters[i].name +
                          "' does not match the embedded config (expected '" +
                          expected.parameters[i].name + "' " +
                          expected.parameters[i].value.shape_str() + ")");
        }
    }
    return ckpt;
}

} // namespace mimo
