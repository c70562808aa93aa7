#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace cdsvae::synth {

enum class Motion : std::uint8_t {
  kBounceHorizontal = 0,
  kBounceVertical = 1,
  kDiagonal = 2,
  kCircular = 3,
};
inline constexpr int kMaxMotionClasses = 4;

struct SyntheticConfig {
  int height = 16;
  int width = 16;
  int channels = 1;
  int steps = 8;
  // Blob peak intensity of content class k is (k + 1) / content_classes.
  int content_classes = 4;
  int motion_classes = 4;
  float radius = 2.0f;
  std::uint64_t seed = 0;

  void validate() const;
  float intensity(int content_class) const;
  std::size_t frame_size() const {
    return static_cast<std::size_t>(height) * width * channels;
  }
  std::size_t sequence_size() const { return frame_size() * steps; }
};

struct Position {
  float x = 0.0f;
  float y = 0.0f;
};

struct LabeledSequence {
  std::vector<float> frames;  // [T, H, W, C] row-major
  std::uint8_t content = 0;
  std::uint8_t motion = 0;
  float phase = 0.0f;
};

struct Dataset {
  SyntheticConfig config;
  std::vector<LabeledSequence> sequences;

  std::size_t size() const { return sequences.size(); }
};

// Closed-form blob path; t in [0, steps).
Position trajectory(const SyntheticConfig& config, int motion_class, float phase, int t);

// Gaussian blob with spatial sigma = radius / 2, peak `intensity` at `pos`.
std::vector<float> render_frame(const SyntheticConfig& config, Position pos, float intensity);

LabeledSequence make_sequence(const SyntheticConfig& config, int content_class,
                              int motion_class, float phase);

// Labels are drawn independently and uniformly; each sequence uses its own
// generator seeded from (config.seed, index).
Dataset generate(const SyntheticConfig& config, std::size_t n);

// ---- label oracles --------------------------------------------------------

// Blob centre of one frame: a matched-filter centre of mass (signed by the
// blob's polarity, so inverted frames work) refined by a least-squares fit of
// background + amplitude * blob with the known width.
Position frame_centroid(const SyntheticConfig& config, std::span<const float> frame);

// Best-fitting motion class over all phases for the per-frame centroids.
int recover_motion(const SyntheticConfig& config, std::span<const float> frames);

// Content class whose blob mass best matches the mean per-frame mass.
int recover_content(const SyntheticConfig& config, std::span<const float> frames);

// ---- persistence ----------------------------------------------------------

void write_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace cdsvae::synth
