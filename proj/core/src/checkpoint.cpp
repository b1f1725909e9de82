#include "bigraph/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace bigraph {

static_assert(std::endian::native == std::endian::little,
              "checkpoint files are little-endian; big-endian hosts are unsupported");

void write_checkpoint_dir(const std::string& dir, const std::vector<CheckpointEntry>& entries,
                          const std::vector<std::vector<float>>& data, int64_t step) {
  BG_CHECK(entries.size() == data.size(), "checkpoint: entry/data count mismatch");
  std::error_code ec;
  fs::create_directories(dir, ec);
  BG_CHECK(!ec, "checkpoint: cannot create directory " << dir << ": " << ec.message());
  json manifest;
  manifest["format"] = "f32le";
  manifest["step"] = step;
  json params = json::object();
  for (size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    params[e.name] = {{"shape", e.shape}, {"file", e.file}};
    std::string path = dir + "/" + e.file;
    std::FILE* f = std::fopen(path.c_str(), "wb");
    BG_CHECK(f != nullptr, "checkpoint: cannot open " << path << " for writing");
    size_t written = std::fwrite(data[i].data(), sizeof(float), data[i].size(), f);
    int rc = std::fclose(f);
    BG_CHECK(written == data[i].size() && rc == 0, "checkpoint: short write to " << path);
  }
  manifest["params"] = std::move(params);
  std::ofstream out(dir + "/manifest.json");
  BG_CHECK(out.good(), "checkpoint: cannot write manifest in " << dir);
  out << manifest.dump(2) << "\n";
  BG_CHECK(out.good(), "checkpoint: manifest write failed in " << dir);
}

std::vector<CheckpointEntry> read_checkpoint_manifest(const std::string& dir) {
  std::ifstream in(dir + "/manifest.json");
  BG_CHECK_CFG(in.good(), "checkpoint: cannot read manifest in " << dir);
  json manifest = json::parse(in, nullptr, true);
  BG_CHECK_CFG(manifest.value("format", "") == "f32le",
               "checkpoint: unsupported format in " << dir);
  std::vector<CheckpointEntry> entries;
  for (const auto& [name, meta] : manifest.at("params").items()) {
    CheckpointEntry e;
    e.name = name;
    e.shape = meta.at("shape").get<Shape>();
    e.file = meta.at("file").get<std::string>();
    entries.push_back(std::move(e));
  }
  return entries;
}

std::vector<float> read_checkpoint_param(const std::string& dir, const CheckpointEntry& entry) {
  std::string path = dir + "/" + entry.file;
  std::FILE* f = std::fopen(path.c_str(), "rb");
  BG_CHECK_CFG(f != nullptr, "checkpoint: cannot open " << path);
  size_t n = static_cast<size_t>(shape_numel(entry.shape));
  std::vector<float> data(n);
  size_t got = std::fread(data.data(), sizeof(float), n, f);
  // must be exactly the declared element count, with nothing trailing
  char extra;
  size_t more = std::fread(&extra, 1, 1, f);
  std::fclose(f);
  BG_CHECK_CFG(got == n && more == 0, "checkpoint: " << path << " holds " << got
                                                     << " floats, manifest says " << n);
  return data;
}

int64_t read_checkpoint_step(const std::string& dir) {
  std::ifstream in(dir + "/manifest.json");
  BG_CHECK_CFG(in.good(), "checkpoint: cannot read manifest in " << dir);
  json manifest = json::parse(in, nullptr, true);
  return manifest.value("step", static_cast<int64_t>(0));
}

}  // namespace bigraph
