#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "iagc/errors.hpp"
#include "iagc/image_io.hpp"
#include "iagc/tensor.hpp"

namespace iagc {

// Low-light input and its normal-light ground truth, both [H,W,3] in [0,1].
template <class T = float>
struct ImagePair {
    BasicTensor<T> low;
    BasicTensor<T> gt;
    std::string name;
};

template <class T = float>
std::vector<ImagePair<T>> load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    const fs::path manifest_path = fs::path(dir) / "manifest.json";
    if (!fs::exists(manifest_path))
        throw IoError("no manifest.json in dataset directory: " + dir);
    std::ifstream f(manifest_path);
    nlohmann::json manifest;
    try {
        f >> manifest;
    } catch (const std::exception& e) {
        throw FormatError("bad manifest.json: " + std::string(e.what()));
    }
    std::vector<ImagePair<T>> pairs;
    for (const auto& entry : manifest.at("pairs")) {
        ImagePair<T> p;
        p.name = entry.at("name").get<std::string>();
        p.low = read_image<T>((fs::path(dir) / entry.at("low").get<std::string>()).string());
        p.gt = read_image<T>((fs::path(dir) / entry.at("gt").get<std::string>()).string());
        if (p.low.shape() != p.gt.shape())
            throw ShapeError("pair " + p.name + ": low/gt shapes disagree");
        pairs.push_back(std::move(p));
    }
    if (pairs.empty()) throw IoError("dataset is empty: " + dir);
    return pairs;
}

inline std::vector<std::string> list_ppm_files(const std::string& dir) {
    namespace fs = std::filesystem;
    std::vector<std::string> names;
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".ppm")
            names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    return names;
}

}  // namespace iagc
