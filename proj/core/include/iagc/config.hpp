#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "iagc/errors.hpp"
#include "iagc/loss.hpp"
#include "iagc/model.hpp"

namespace iagc {

// Flat key=value run configuration. Precedence: CLI overrides > config file >
// profile defaults. The "desk" profile is sized for CPU experiments; "paper"
// carries the published training hyper-parameters.
struct RunConfig {
    std::string profile = "desk";

    // architecture
    std::size_t embed_dim = 15;
    std::size_t heads = 5;
    std::size_t blocks = 2;
    std::size_t window = 16;
    std::size_t global_dim = 60;
    std::size_t mlp_ratio = 4;
    std::size_t se_reduction = 4;
    int taylor_order = 2;
    double gamma_floor = 1e-4;
    double drop_path = 0.1;

    // training
    std::size_t epochs = 1;
    std::size_t steps_per_epoch = 500;
    std::size_t batch = 2;
    double lr = 4e-4;
    double weight_decay = 1e-7;
    std::size_t crop = 64;
    std::uint64_t seed = 7;
    std::size_t checkpoint_every = 0;  // 0 = final checkpoint only
    std::string charbonnier = "tensor";  // tensor | elementwise
    bool augment = false;
    std::size_t probe_index = 0;
    std::size_t threads = 0;  // 0 = hardware concurrency

    void apply_profile(const std::string& name) {
        if (name == "desk") {
            // constructor defaults
        } else if (name == "paper") {
            epochs = 300;
            steps_per_epoch = 0;  // one pass over the dataset per epoch
            batch = 8;
            crop = 512;
            augment = true;
        } else {
            throw ConfigError("unknown profile '" + name + "' (expected desk|paper)");
        }
        profile = name;
    }

    void validate() const {
        if (batch < 1) throw ConfigError("batch must be >= 1");
        if (lr <= 0) throw ConfigError("lr must be positive");
        if (charbonnier != "tensor" && charbonnier != "elementwise")
            throw ConfigError("charbonnier must be tensor|elementwise");
        to_iagc_config().validate();
    }

    IagcConfig to_iagc_config() const {
        IagcConfig c;
        c.embed_dim = embed_dim;
        c.heads = heads;
        c.blocks = blocks;
        c.window = window;
        c.global_dim = global_dim;
        c.mlp_ratio = mlp_ratio;
        c.se_reduction = se_reduction;
        c.taylor_order = taylor_order;
        c.gamma_floor = gamma_floor;
        c.drop_path = drop_path;
        c.pos_extent = crop;
        return c;
    }

    CharbonnierMode charbonnier_mode() const {
        return charbonnier == "tensor" ? CharbonnierMode::WholeTensor
                                       : CharbonnierMode::Elementwise;
    }

    std::vector<std::pair<std::string, std::string>> to_key_values() const;
    void set(const std::string& key, const std::string& value);
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace((unsigned char)s[b])) ++b;
    while (e > b && std::isspace((unsigned char)s[e - 1])) --e;
    return s.substr(b, e - b);
}

template <class V>
V parse_number(const std::string& key, const std::string& value) {
    std::istringstream is(value);
    V v{};
    is >> v;
    if (is.fail() || !(is >> std::ws).eof())
        throw ConfigError("bad value for " + key + ": '" + value + "'");
    return v;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "on") return true;
    if (value == "false" || value == "0" || value == "off") return false;
    throw ConfigError("bad boolean for " + key + ": '" + value + "'");
}

inline const std::vector<std::string>& known_keys() {
    static const std::vector<std::string> keys = {
        "profile",      "embed_dim",        "heads",       "blocks",         "window",
        "global_dim",   "mlp_ratio",        "se_reduction", "taylor_order",  "gamma_floor",
        "drop_path",    "epochs",           "steps_per_epoch", "batch",      "lr",
        "weight_decay", "crop",             "seed",        "checkpoint_every",
        "charbonnier",  "augment",          "probe_index", "threads"};
    return keys;
}

}  // namespace detail

inline void RunConfig::set(const std::string& key, const std::string& value) {
    using detail::parse_bool;
    using detail::parse_number;
    if (key == "profile") apply_profile(value);
    else if (key == "embed_dim") embed_dim = parse_number<std::size_t>(key, value);
    else if (key == "heads") heads = parse_number<std::size_t>(key, value);
    else if (key == "blocks") blocks = parse_number<std::size_t>(key, value);
    else if (key == "window") window = parse_number<std::size_t>(key, value);
    else if (key == "global_dim") global_dim = parse_number<std::size_t>(key, value);
    else if (key == "mlp_ratio") mlp_ratio = parse_number<std::size_t>(key, value);
    else if (key == "se_reduction") se_reduction = parse_number<std::size_t>(key, value);
    else if (key == "taylor_order") taylor_order = parse_number<int>(key, value);
    else if (key == "gamma_floor") gamma_floor = parse_number<double>(key, value);
    else if (key == "drop_path") drop_path = parse_number<double>(key, value);
    else if (key == "epochs") epochs = parse_number<std::size_t>(key, value);
    else if (key == "steps_per_epoch") steps_per_epoch = parse_number<std::size_t>(key, value);
    else if (key == "batch") batch = parse_number<std::size_t>(key, value);
    else if (key == "lr") lr = parse_number<double>(key, value);
    else if (key == "weight_decay") weight_decay = parse_number<double>(key, value);
    else if (key == "crop") crop = parse_number<std::size_t>(key, value);
    else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
    else if (key == "checkpoint_every") checkpoint_every = parse_number<std::size_t>(key, value);
    else if (key == "charbonnier") charbonnier = value;
    else if (key == "augment") augment = parse_bool(key, value);
    else if (key == "probe_index") probe_index = parse_number<std::size_t>(key, value);
    else if (key == "threads") threads = parse_number<std::size_t>(key, value);
    else {
        std::string keys;
        for (const auto& k : detail::known_keys()) keys += (keys.empty() ? "" : ", ") + k;
        throw ConfigError("unknown config key '" + key + "' (valid keys: " + keys + ")");
    }
}

inline std::vector<std::pair<std::string, std::string>> RunConfig::to_key_values() const {
    auto num = [](auto v) {
        std::ostringstream os;
        os << v;
        return os.str();
    };
    return {
        {"profile", profile},
        {"embed_dim", num(embed_dim)},
        {"heads", num(heads)},
        {"blocks", num(blocks)},
        {"window", num(window)},
        {"global_dim", num(global_dim)},
        {"mlp_ratio", num(mlp_ratio)},
        {"se_reduction", num(se_reduction)},
        {"taylor_order", num(taylor_order)},
        {"gamma_floor", num(gamma_floor)},
        {"drop_path", num(drop_path)},
        {"epochs", num(epochs)},
        {"steps_per_epoch", num(steps_per_epoch)},
        {"batch", num(batch)},
        {"lr", num(lr)},
        {"weight_decay", num(weight_decay)},
        {"crop", num(crop)},
        {"seed", num(seed)},
        {"checkpoint_every", num(checkpoint_every)},
        {"charbonnier", charbonnier},
        {"augment", augment ? "true" : "false"},
        {"probe_index", num(probe_index)},
        {"threads", num(threads)},
    };
}

// Parses `key = value` lines ('#' comments). Profile is applied before any
// other key from either source; CLI overrides win over file values.
inline RunConfig parse_config(const std::string& path_or_empty,
                              const std::vector<std::pair<std::string, std::string>>& cli_overrides = {}) {
    std::vector<std::pair<std::string, std::string>> file_kv;
    if (!path_or_empty.empty()) {
        std::ifstream f(path_or_empty);
        if (!f) throw IoError("cannot open config file: " + path_or_empty);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(f, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            line = detail::trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError(path_or_empty + ":" + std::to_string(lineno) +
                                  ": expected 'key = value'");
            file_kv.emplace_back(detail::trim(line.substr(0, eq)),
                                 detail::trim(line.substr(eq + 1)));
        }
    }

    RunConfig cfg;
    // profile first, wherever it appears; CLI profile beats file profile
    std::string profile;
    for (const auto& [k, v] : file_kv)
        if (k == "profile") profile = v;
    for (const auto& [k, v] : cli_overrides)
        if (k == "profile") profile = v;
    if (!profile.empty()) cfg.apply_profile(profile);

    for (const auto& [k, v] : file_kv)
        if (k != "profile") cfg.set(k, v);
    for (const auto& [k, v] : cli_overrides)
        if (k != "profile") cfg.set(k, v);

    cfg.validate();
    return cfg;
}

}  // namespace iagc
