#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "kgqa/params.hpp"

namespace kgqa {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Little-endian f32 on every supported target; asserted here rather than
// byte-swapped.
static_assert(sizeof(float) == 4);

void write_file(const fs::path& p, const std::string& bytes) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    require(f.good(), "checkpoint: cannot open ", p.string(), " for writing");
    f.write(bytes.data(), std::streamsize(bytes.size()));
    require(f.good(), "checkpoint: short write to ", p.string());
}

}  // namespace

void write_checkpoint_files(const std::string& dir, const ParamStore& store) {
    fs::path d(dir);
    fs::create_directories(d);
    json manifest = json::array();
    std::string blob;
    for (const auto& p : store) {
        size_t bytes = p.value.numel() * sizeof(float);
        manifest.push_back({{"name", p.name},
                            {"shape", {p.value.rows, p.value.cols}},
                            {"dtype", "f32"},
                            {"byte_offset", blob.size()},
                            {"byte_length", bytes}});
        blob.append(reinterpret_cast<const char*>(p.value.data.data()), bytes);
    }
    write_file(d / "manifest.json", manifest.dump(2) + "\n");
    write_file(d / "weights.bin", blob);
}

void save_checkpoint(const std::string& dir, const ParamStore& store) {
    fs::path final_dir(dir);
    fs::path tmp_dir = final_dir;
    tmp_dir += ".tmp";
    std::error_code ec;
    fs::remove_all(tmp_dir, ec);
    write_checkpoint_files(tmp_dir.string(), store);
    fs::remove_all(final_dir, ec);
    fs::rename(tmp_dir, final_dir);
}

std::vector<std::pair<std::string, Tensor>> read_checkpoint(const std::string& dir) {
    fs::path d(dir);
    std::ifstream mf(d / "manifest.json");
    require(mf.good(), "checkpoint: cannot read ", (d / "manifest.json").string());
    json manifest = json::parse(mf, nullptr, /*allow_exceptions=*/true);

    std::ifstream wf(d / "weights.bin", std::ios::binary);
    require(wf.good(), "checkpoint: cannot read ", (d / "weights.bin").string());
    std::string blob((std::istreambuf_iterator<char>(wf)), std::istreambuf_iterator<char>());

    std::vector<std::pair<std::string, Tensor>> out;
    for (const auto& e : manifest) {
        std::string name = e.at("name").get<std::string>();
        auto shape = e.at("shape").get<std::vector<int>>();
        require(shape.size() == 2, "checkpoint: tensor '", name, "' has rank ", shape.size());
        require(e.at("dtype").get<std::string>() == "f32", "checkpoint: tensor '", name,
                "' has unsupported dtype");
        size_t off = e.at("byte_offset").get<size_t>();
        size_t len = e.at("byte_length").get<size_t>();
        Tensor t(shape[0], shape[1]);
        require(len == t.numel() * sizeof(float), "checkpoint: tensor '", name,
                "' byte_length ", len, " does not match shape ", shape_str(t));
        require(off + len <= blob.size(), "checkpoint: tensor '", name,
                "' extends past end of weights.bin");
        std::memcpy(t.data.data(), blob.data() + off, len);
        out.emplace_back(std::move(name), std::move(t));
    }
    return out;
}

void load_checkpoint(const std::string& dir, ParamStore& store) {
    auto tensors = read_checkpoint(dir);
    size_t matched = 0;
    for (auto& [name, t] : tensors) {
        ParamT<float>* p = store.find(name);
        require(p != nullptr, "checkpoint: tensor '", name, "' not present in model");
        require(p->value.same_shape(t), "checkpoint: tensor '", name, "' has shape ",
                shape_str(t), ", model expects ", shape_str(p->value));
        p->value = std::move(t);
        ++matched;
    }
    require(matched == store.size(), "checkpoint: model has ", store.size(),
            " tensors but checkpoint provides ", matched);
}

}  // namespace kgqa
