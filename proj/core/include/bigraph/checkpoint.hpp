#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bigraph/nn.hpp"
#include "bigraph/tensor.hpp"

namespace bigraph {

// A checkpoint is a directory of raw little-endian float32 files, one per
// parameter tensor, plus a JSON manifest mapping names to shapes and files.
struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::string file;
};

void write_checkpoint_dir(const std::string& dir, const std::vector<CheckpointEntry>& entries,
                          const std::vector<std::vector<float>>& data, int64_t step);
std::vector<CheckpointEntry> read_checkpoint_manifest(const std::string& dir);
std::vector<float> read_checkpoint_param(const std::string& dir, const CheckpointEntry& entry);
int64_t read_checkpoint_step(const std::string& dir);

template <typename T>
void save_checkpoint(const std::string& dir, const ParamMap<T>& params, int64_t step = 0) {
  std::vector<CheckpointEntry> entries;
  std::vector<std::vector<float>> data;
  entries.reserve(params.items().size());
  data.reserve(params.items().size());
  for (const auto& [name, t] : params.items()) {
    entries.push_back({name, t.shape(), name + ".bin"});
    std::vector<float> row(static_cast<size_t>(t.numel()));
    auto v = t.values();
    for (size_t i = 0; i < row.size(); ++i) row[i] = static_cast<float>(v[i]);
    data.push_back(std::move(row));
  }
  write_checkpoint_dir(dir, entries, data, step);
}

template <typename T>
void load_checkpoint(const std::string& dir, ParamMap<T>& params) {
  auto entries = read_checkpoint_manifest(dir);
  BG_CHECK_CFG(entries.size() == params.items().size(),
               "checkpoint: " << dir << " holds " << entries.size() << " parameters, model expects "
                              << params.items().size());
  for (const auto& e : entries) {
    const Tensor<T>* t = params.find(e.name);
    BG_CHECK_CFG(t != nullptr, "checkpoint: unknown parameter '" << e.name << "' in " << dir);
    BG_CHECK_CFG(t->shape() == e.shape, "checkpoint: parameter '"
                                            << e.name << "' has shape " << shape_str(t->shape())
                                            << ", manifest says " << shape_str(e.shape));
    std::vector<float> raw = read_checkpoint_param(dir, e);
    auto dst = const_cast<Tensor<T>*>(t)->values_mut();
    for (size_t i = 0; i < raw.size(); ++i) dst[i] = static_cast<T>(raw[i]);
  }
}

}  // namespace bigraph
