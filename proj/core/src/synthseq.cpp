#include "cdsvae/synthseq.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>

#include "cdsvae/binary_io.hpp"
#include "cdsvae/error.hpp"

namespace cdsvae::synth {

namespace {

constexpr std::uint32_t kFormatVersion = 1;

// 0 at u = 0, 1 at u = 0.5, back to 0 at u = 1.
float triangle(float u) {
  const float f = u - std::floor(u);
  return 1.0f - std::abs(2.0f * f - 1.0f);
}

float median_of(std::vector<float> v) {
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

// Per-pixel value averaged over channels.
std::vector<float> luminance(const SyntheticConfig& c, std::span<const float> frame) {
  std::vector<float> lum(static_cast<std::size_t>(c.height) * c.width);
  for (std::size_t p = 0; p < lum.size(); ++p) {
    float acc = 0.0f;
    for (int ch = 0; ch < c.channels; ++ch) acc += frame[p * c.channels + ch];
    lum[p] = acc / static_cast<float>(c.channels);
  }
  return lum;
}

float blob_sigma(const SyntheticConfig& c) { return c.radius / 2.0f; }

}  // namespace

void SyntheticConfig::validate() const {
  if (height <= 0 || width <= 0 || channels <= 0) {
    throw ContractError("synthetic config: frame extents must be positive");
  }
  if (steps < 2) throw ContractError("synthetic config: need at least 2 steps");
  if (content_classes < 2 || content_classes > 255) {
    throw ContractError("synthetic config: content_classes must be in [2, 255]");
  }
  if (motion_classes < 2 || motion_classes > kMaxMotionClasses) {
    throw ContractError("synthetic config: motion_classes must be in [2, 4]");
  }
  if (!(radius > 0.0f) || radius >= static_cast<float>(std::min(height, width)) / 4.0f) {
    throw ContractError("synthetic config: radius must be in (0, min(H, W) / 4)");
  }
}

float SyntheticConfig::intensity(int content_class) const {
  return static_cast<float>(content_class + 1) / static_cast<float>(content_classes);
}

Position trajectory(const SyntheticConfig& c, int motion_class, float phase, int t) {
  if (t < 0 || t >= c.steps) throw ContractError("trajectory: step out of range");
  const float u = phase + static_cast<float>(t) / static_cast<float>(c.steps);
  const float r = c.radius;
  const float w = static_cast<float>(c.width);
  const float h = static_cast<float>(c.height);
  switch (motion_class) {
    case static_cast<int>(Motion::kBounceHorizontal):
      return {r + triangle(u) * (w - 2.0f * r), h / 2.0f};
    case static_cast<int>(Motion::kBounceVertical):
      return {w / 2.0f, r + triangle(u) * (h - 2.0f * r)};
    case static_cast<int>(Motion::kDiagonal):
      return {r + triangle(u) * (w - 2.0f * r), r + triangle(u) * (h - 2.0f * r)};
    case static_cast<int>(Motion::kCircular): {
      const float R = std::min(w, h) / 3.0f;
      const float a = 2.0f * std::numbers::pi_v<float> * u;
      return {w / 2.0f + R * std::cos(a), h / 2.0f + R * std::sin(a)};
    }
    default:
      throw ContractError("trajectory: unknown motion class " + std::to_string(motion_class));
  }
}

std::vector<float> render_frame(const SyntheticConfig& c, Position pos, float intensity) {
  const float s = blob_sigma(c);
  const float inv = 1.0f / (2.0f * s * s);
  std::vector<float> frame(c.frame_size());
  for (int y = 0; y < c.height; ++y) {
    for (int x = 0; x < c.width; ++x) {
      const float dx = static_cast<float>(x) - pos.x;
      const float dy = static_cast<float>(y) - pos.y;
      const float v = std::clamp(intensity * std::exp(-(dx * dx + dy * dy) * inv), 0.0f, 1.0f);
      for (int ch = 0; ch < c.channels; ++ch) {
        frame[(static_cast<std::size_t>(y) * c.width + x) * c.channels + ch] = v;
      }
    }
  }
  return frame;
}

LabeledSequence make_sequence(const SyntheticConfig& c, int content_class, int motion_class,
                              float phase) {
  LabeledSequence seq;
  seq.content = static_cast<std::uint8_t>(content_class);
  seq.motion = static_cast<std::uint8_t>(motion_class);
  seq.phase = phase;
  seq.frames.reserve(c.sequence_size());
  const float intensity = c.intensity(content_class);
  for (int t = 0; t < c.steps; ++t) {
    const auto frame = render_frame(c, trajectory(c, motion_class, phase, t), intensity);
    seq.frames.insert(seq.frames.end(), frame.begin(), frame.end());
  }
  return seq;
}

Dataset generate(const SyntheticConfig& c, std::size_t n) {
  c.validate();
  if (n < 1) throw ContractError("generate: need n >= 1");
  Dataset data;
  data.config = c;
  data.sequences.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::seed_seq seq{static_cast<std::uint32_t>(c.seed), static_cast<std::uint32_t>(c.seed >> 32),
                      static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i >> 32)};
    std::mt19937_64 rng(seq);
    std::uniform_int_distribution<int> content(0, c.content_classes - 1);
    std::uniform_int_distribution<int> motion(0, c.motion_classes - 1);
    std::uniform_real_distribution<float> phase(0.0f, 1.0f);
    const int yc = content(rng);
    const int ym = motion(rng);
    const float ph = phase(rng);
    data.sequences.push_back(make_sequence(c, yc, ym, ph));
  }
  return data;
}

namespace {

// Gaussian smoothing with the blob's own width (matched filter),
// normalised by the in-frame kernel mass so edges are not darkened.
std::vector<float> matched_filter(const SyntheticConfig& c, const std::vector<float>& dev) {
  const float s = blob_sigma(c);
  const int kr = static_cast<int>(std::ceil(2.0f * s));
  std::vector<float> out(dev.size());
  for (int y = 0; y < c.height; ++y) {
    for (int x = 0; x < c.width; ++x) {
      double acc = 0.0, mass = 0.0;
      for (int dy = -kr; dy <= kr; ++dy) {
        for (int dx = -kr; dx <= kr; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= c.height || xx < 0 || xx >= c.width) continue;
          const double w = std::exp(-(dx * dx + dy * dy) / (2.0 * s * s));
          acc += w * dev[static_cast<std::size_t>(yy) * c.width + xx];
          mass += w;
        }
      }
      out[static_cast<std::size_t>(y) * c.width + x] = static_cast<float>(acc / mass);
    }
  }
  return out;
}

// Coarse estimate: centre of mass of the filtered response around its peak,
// with the blob's polarity so inverted frames work.
Position coarse_centroid(const SyntheticConfig& c, const std::vector<float>& lum, float bg) {
  std::vector<float> dev(lum.size());
  for (std::size_t p = 0; p < lum.size(); ++p) dev[p] = lum[p] - bg;
  const auto sm = matched_filter(c, dev);
  std::size_t peak = 0;
  for (std::size_t p = 1; p < sm.size(); ++p) {
    if (std::abs(sm[p]) > std::abs(sm[peak])) peak = p;
  }
  const float polarity = sm[peak] >= 0.0f ? 1.0f : -1.0f;
  std::vector<float> mag(sm.size());
  for (std::size_t p = 0; p < sm.size(); ++p) mag[p] = std::abs(sm[p]);
  // Robust noise scale of the filtered background; zero on clean frames.
  const float floor = 2.0f * 1.4826f * median_of(mag);
  const int px = static_cast<int>(peak % c.width), py = static_cast<int>(peak / c.width);
  const int window = static_cast<int>(std::ceil(3.0f * blob_sigma(c)));
  double mass = 0.0, mx = 0.0, my = 0.0;
  for (int y = std::max(0, py - window); y <= std::min(c.height - 1, py + window); ++y) {
    for (int x = std::max(0, px - window); x <= std::min(c.width - 1, px + window); ++x) {
      const double w = std::max(0.0f, polarity * sm[static_cast<std::size_t>(y) * c.width + x] - floor);
      mass += w;
      mx += w * x;
      my += w * y;
    }
  }
  if (mass <= 0.0) return {static_cast<float>(px), static_cast<float>(py)};
  return {static_cast<float>(mx / mass), static_cast<float>(my / mass)};
}

}  // namespace

Position frame_centroid(const SyntheticConfig& c, std::span<const float> frame) {
  const auto lum = luminance(c, frame);
  const float bg0 = median_of(lum);
  const Position start = coarse_centroid(c, lum, bg0);

  // Least-squares fit of background + amplitude * blob(x0, y0) with the
  // known blob width, over a window around the coarse estimate.
  const double s2 = static_cast<double>(blob_sigma(c)) * blob_sigma(c);
  const int window = static_cast<int>(std::ceil(3.0f * blob_sigma(c)));
  const int cx = std::clamp(static_cast<int>(std::lround(start.x)), 0, c.width - 1);
  const int cy = std::clamp(static_cast<int>(std::lround(start.y)), 0, c.height - 1);
  double x0 = start.x, y0 = start.y, bg = bg0;
  double amp = lum[static_cast<std::size_t>(cy) * c.width + cx] - bg;
  for (int it = 0; it < 6; ++it) {
    Eigen::Matrix4d jtj = Eigen::Matrix4d::Zero();
    Eigen::Vector4d jtr = Eigen::Vector4d::Zero();
    for (int y = std::max(0, cy - window); y <= std::min(c.height - 1, cy + window); ++y) {
      for (int x = std::max(0, cx - window); x <= std::min(c.width - 1, cx + window); ++x) {
        const double dx = x - x0, dy = y - y0;
        const double g = std::exp(-(dx * dx + dy * dy) / (2.0 * s2));
        const double r = lum[static_cast<std::size_t>(y) * c.width + x] - (bg + amp * g);
        const Eigen::Vector4d j(amp * g * dx / s2, amp * g * dy / s2, g, 1.0);
        jtj += j * j.transpose();
        jtr += j * r;
      }
    }
    const Eigen::Vector4d step = jtj.ldlt().solve(jtr);
    if (!step.allFinite()) break;
    x0 += std::clamp(step[0], -1.0, 1.0);
    y0 += std::clamp(step[1], -1.0, 1.0);
    amp += step[2];
    bg += step[3];
  }
  if (!std::isfinite(x0) || !std::isfinite(y0) || std::hypot(x0 - start.x, y0 - start.y) > 2.0) {
    return start;
  }
  return {static_cast<float>(x0), static_cast<float>(y0)};
}

int recover_motion(const SyntheticConfig& c, std::span<const float> frames) {
  const std::size_t fs = c.frame_size();
  std::vector<Position> centroids;
  for (int t = 0; t < c.steps; ++t) {
    centroids.push_back(frame_centroid(c, frames.subspan(t * fs, fs)));
  }
  constexpr int kPhaseGrid = 512;
  int best_class = 0;
  double best = std::numeric_limits<double>::infinity();
  for (int m = 0; m < c.motion_classes; ++m) {
    for (int k = 0; k < kPhaseGrid; ++k) {
      const float phase = static_cast<float>(k) / kPhaseGrid;
      double err = 0.0;
      for (int t = 0; t < c.steps; ++t) {
        const Position p = trajectory(c, m, phase, t);
        err += std::pow(p.x - centroids[t].x, 2) + std::pow(p.y - centroids[t].y, 2);
      }
      if (err < best) {
        best = err;
        best_class = m;
      }
    }
  }
  return best_class;
}

int recover_content(const SyntheticConfig& c, std::span<const float> frames) {
  const std::size_t fs = c.frame_size();
  const float s = blob_sigma(c);
  const double unit_mass = 2.0 * std::numbers::pi * s * s;
  double mass = 0.0;
  for (int t = 0; t < c.steps; ++t) {
    const auto lum = luminance(c, frames.subspan(t * fs, fs));
    const float bg = median_of(lum);
    for (float v : lum) mass += v - bg;
  }
  const double estimate = mass / c.steps / unit_mass;
  int best = 0;
  for (int k = 1; k < c.content_classes; ++k) {
    if (std::abs(estimate - c.intensity(k)) < std::abs(estimate - c.intensity(best))) best = k;
  }
  return best;
}

void write_dataset(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  const auto& c = data.config;
  os.write("SYNQ", 4);
  io::put<std::uint32_t>(os, kFormatVersion);
  io::put<std::uint32_t>(os, static_cast<std::uint32_t>(data.sequences.size()));
  for (int v : {c.steps, c.height, c.width, c.channels, c.content_classes, c.motion_classes}) {
    io::put<std::uint16_t>(os, static_cast<std::uint16_t>(v));
  }
  for (const auto& s : data.sequences) {
    if (s.frames.size() != c.sequence_size()) {
      throw DimensionError("write_dataset: sequence has wrong frame count");
    }
    io::put<std::uint8_t>(os, s.content);
    io::put<std::uint8_t>(os, s.motion);
    io::put<float>(os, s.phase);
    io::put_floats(os, s.frames);
  }
  if (!os) throw IoError("write failed for " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  io::expect_magic(is, "SYNQ");
  const auto version = io::get<std::uint32_t>(is);
  if (version != kFormatVersion) {
    throw FormatError("unsupported dataset version " + std::to_string(version));
  }
  Dataset data;
  const auto n = io::get<std::uint32_t>(is);
  auto& c = data.config;
  c.steps = io::get<std::uint16_t>(is);
  c.height = io::get<std::uint16_t>(is);
  c.width = io::get<std::uint16_t>(is);
  c.channels = io::get<std::uint16_t>(is);
  c.content_classes = io::get<std::uint16_t>(is);
  c.motion_classes = io::get<std::uint16_t>(is);
  data.sequences.resize(n);
  for (auto& s : data.sequences) {
    s.content = io::get<std::uint8_t>(is);
    s.motion = io::get<std::uint8_t>(is);
    s.phase = io::get<float>(is);
    if (s.content >= c.content_classes || s.motion >= c.motion_classes) {
      throw FormatError("dataset label out of range");
    }
    s.frames.resize(c.sequence_size());
    io::get_floats(is, s.frames);
  }
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes in dataset");
  return data;
}

}  // namespace cdsvae::synth
