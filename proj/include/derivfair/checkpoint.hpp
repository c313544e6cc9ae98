#pragma once

// JSON checkpoints for trained and tuned networks.
//
// {
//   "format": "derivfair-mlp/1",
//   "config": {"input_width", "hidden_widths", "elu_alpha", "output_head", "init_seed"},
//   "parameters": [...],     flat; per layer the weight (out x in, row-major) then the bias
//   "seeds": {"init": u64, "shuffle": u64},
//   "fairness": {            tuned models only
//     "lambda_spd", "lambda_ppd", "not_allowed": [...], "allowed": [...],
//     "reference_checksum": "fnv1a64:<hex>"
//   }
// }

#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>

#include "json.hpp"

#include "derivfair/errors.hpp"
#include "derivfair/fairness.hpp"
#include "derivfair/mlp.hpp"

namespace derivfair {

struct FairnessMetadata {
    double lambda_spd = 0.0;
    double lambda_ppd = 0.0;
    std::vector<int> not_allowed;
    std::vector<int> allowed;
    std::string reference_checksum;
};

struct Checkpoint {
    MLPModel model;
    std::uint64_t shuffle_seed = 0;
    std::optional<FairnessMetadata> fairness;
};

/// FNV-1a over the little-endian bytes of the flat parameter vector.
inline std::string parameter_checksum(const MLPModel& model) {
    const Vector p = model.parameters();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, &p[i], sizeof bits);
        for (int b = 0; b < 8; ++b) {
            h ^= (bits >> (8 * b)) & 0xffU;
            h *= 0x100000001b3ULL;
        }
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "fnv1a64:%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline FairnessMetadata fairness_metadata(const TuningConfig& cfg, const MLPModel& reference) {
    return {cfg.lambda_spd, cfg.lambda_ppd, cfg.not_allowed, cfg.allowed, parameter_checksum(reference)};
}

inline nlohmann::json to_json(const Checkpoint& c) {
    const auto& cfg = c.model.config();
    nlohmann::json j;
    j["format"] = "derivfair-mlp/1";
    j["config"] = {{"input_width", cfg.input_width},
                   {"hidden_widths", cfg.hidden_widths},
                   {"elu_alpha", cfg.elu_alpha},
                   {"output_head", cfg.output_head == OutputHead::Sigmoid ? "sigmoid" : "identity"},
                   {"init_seed", cfg.init_seed}};
    const Vector p = c.model.parameters();
    j["parameters"] = std::vector<double>(p.data(), p.data() + p.size());
    j["seeds"] = {{"init", cfg.init_seed}, {"shuffle", c.shuffle_seed}};
    if (c.fairness)
        j["fairness"] = {{"lambda_spd", c.fairness->lambda_spd},
                         {"lambda_ppd", c.fairness->lambda_ppd},
                         {"not_allowed", c.fairness->not_allowed},
                         {"allowed", c.fairness->allowed},
                         {"reference_checksum", c.fairness->reference_checksum}};
    return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format") != "derivfair-mlp/1") throw SchemaError("checkpoint: unknown format");
        const auto& jc = j.at("config");
        MLPConfig cfg;
        cfg.input_width = jc.at("input_width").get<int>();
        cfg.hidden_widths = jc.at("hidden_widths").get<std::vector<int>>();
        cfg.elu_alpha = jc.at("elu_alpha").get<double>();
        const auto head = jc.at("output_head").get<std::string>();
        if (head != "identity" && head != "sigmoid") throw SchemaError("checkpoint: unknown output head '" + head + "'");
        cfg.output_head = head == "sigmoid" ? OutputHead::Sigmoid : OutputHead::Identity;
        cfg.init_seed = jc.at("init_seed").get<std::uint64_t>();

        Checkpoint c{init_model(cfg), j.at("seeds").at("shuffle").get<std::uint64_t>(), std::nullopt};
        const auto flat = j.at("parameters").get<std::vector<double>>();
        if (flat.size() != c.model.parameter_count())
            throw SchemaError("checkpoint: expected " + std::to_string(c.model.parameter_count()) + " parameters, found " +
                              std::to_string(flat.size()));
        c.model.set_parameters(Eigen::Map<const Vector>(flat.data(), static_cast<Eigen::Index>(flat.size())));
        if (j.contains("fairness")) {
            const auto& f = j.at("fairness");
            c.fairness = FairnessMetadata{f.at("lambda_spd").get<double>(), f.at("lambda_ppd").get<double>(),
                                          f.at("not_allowed").get<std::vector<int>>(),
                                          f.at("allowed").get<std::vector<int>>(),
                                          f.at("reference_checksum").get<std::string>()};
        }
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("checkpoint: ") + e.what());
    }
}

inline void save_checkpoint(const Checkpoint& c, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << to_json(c).dump(1) << '\n';
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("checkpoint '" + path + "': " + e.what());
    }
    return checkpoint_from_json(j);
}

}  // namespace derivfair
