#include "cdsvae/batching.hpp"

#include <algorithm>

#include "cdsvae/error.hpp"

namespace cdsvae::data {

ad::Tensor gather_frames(const synth::Dataset& data, std::span<const std::size_t> indices) {
  std::vector<std::vector<float>> seqs;
  seqs.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= data.size()) throw ContractError("gather_frames: index " + std::to_string(i) + " out of range");
    seqs.push_back(data.sequences[i].frames);
  }
  return model::batch_frames(seqs, data.config.steps, static_cast<int>(data.config.frame_size()));
}

ad::Tensor all_frames(const synth::Dataset& data) {
  std::vector<std::size_t> idx(data.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return gather_frames(data, idx);
}

std::vector<int> content_labels(const synth::Dataset& data) {
  std::vector<int> out;
  out.reserve(data.size());
  for (const auto& s : data.sequences) out.push_back(s.content);
  return out;
}

std::vector<int> motion_labels(const synth::Dataset& data) {
  std::vector<int> out;
  out.reserve(data.size());
  for (const auto& s : data.sequences) out.push_back(s.motion);
  return out;
}

model::ModelConfig fit_to(const synth::Dataset& data, const model::ModelConfig& sizes) {
  model::ModelConfig c = sizes;
  c.steps = data.config.steps;
  c.height = data.config.height;
  c.width = data.config.width;
  c.channels = data.config.channels;
  return c;
}

std::vector<std::pair<std::size_t, std::size_t>> chunks(std::size_t n, std::size_t batch) {
  if (batch == 0) throw ContractError("chunks: batch must be positive");
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t b = 0; b < n; b += batch) out.emplace_back(b, std::min(n, b + batch));
  return out;
}

}  // namespace cdsvae::data
