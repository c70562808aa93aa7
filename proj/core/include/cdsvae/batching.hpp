#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cdsvae/seqvae.hpp"
#include "cdsvae/synthseq.hpp"

namespace cdsvae::data {

// Time-major [T, batch, P] frames of the selected sequences.
ad::Tensor gather_frames(const synth::Dataset& data, std::span<const std::size_t> indices);
ad::Tensor all_frames(const synth::Dataset& data);

std::vector<int> content_labels(const synth::Dataset& data);
std::vector<int> motion_labels(const synth::Dataset& data);

// Model geometry (steps and frame shape) taken from the dataset; the other
// fields come from `sizes`.
model::ModelConfig fit_to(const synth::Dataset& data, const model::ModelConfig& sizes);

// Consecutive index ranges [begin, end) of at most `batch` entries.
std::vector<std::pair<std::size_t, std::size_t>> chunks(std::size_t n, std::size_t batch);

}  // namespace cdsvae::data
