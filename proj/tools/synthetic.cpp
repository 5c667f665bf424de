#include "synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace attnvlad::synth {

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

std::vector<ActivationTensor> make_scene(const std::string& image_id, const SceneOptions& o,
                                         std::mt19937_64& rng) {
  std::vector<ActivationTensor> layers;
  const int w = static_cast<int>(o.width);
  const int h = static_cast<int>(o.height);
  for (const auto& tag : o.layer_tags) {
    std::vector<float> values(o.width * o.height * o.channels, 0.0f);
    for (std::size_t k = 0; k < o.channels; ++k) {
      int blobs = uniform_int(rng, o.min_blobs, o.max_blobs);
      for (int b = 0; b < blobs; ++b) {
        int r = uniform_int(rng, 1, o.max_radius);
        int cx = uniform_int(rng, o.margin + r, w - 1 - o.margin - r);
        int cy = uniform_int(rng, o.margin + r, h - 1 - o.margin - r);
        double amp = 0.5 + 1.5 * unit(rng);
        for (int y = cy - r; y <= cy + r; ++y) {
          for (int x = cx - r; x <= cx + r; ++x) {
            double d = std::hypot(x - cx, y - cy);
            if (d > r) continue;
            auto idx = (static_cast<std::size_t>(y) * o.width + static_cast<std::size_t>(x)) * o.channels + k;
            values[idx] += static_cast<float>(amp * (1.0 - d / (r + 1)));
          }
        }
      }
    }
    layers.emplace_back(o.width, o.height, o.channels, std::move(values), tag, image_id);
  }
  return layers;
}

ActivationTensor perturb(const ActivationTensor& t, int dx, int dy, double noise,
                         std::mt19937_64& rng, const std::string& image_id) {
  std::vector<float> values(t.values().size(), 0.0f);
  const int w = static_cast<int>(t.width());
  const int h = static_cast<int>(t.height());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int sx = x - dx, sy = y - dy;
      for (std::size_t k = 0; k < t.channels(); ++k) {
        double factor = 1.0 + noise * (2.0 * unit(rng) - 1.0);
        if (sx < 0 || sy < 0 || sx >= w || sy >= h) continue;
        double v = t.at(static_cast<std::size_t>(sx), static_cast<std::size_t>(sy), k) * factor;
        values[(static_cast<std::size_t>(y) * t.width() + static_cast<std::size_t>(x)) * t.channels() + k] =
            static_cast<float>(v);
      }
    }
  }
  return ActivationTensor(t.width(), t.height(), t.channels(), std::move(values), t.layer_tag(), image_id);
}

ActivationTensor random_sparse(std::size_t width, std::size_t height, std::size_t channels,
                               double density, std::mt19937_64& rng, const std::string& layer_tag,
                               const std::string& image_id) {
  std::vector<float> values(width * height * channels, 0.0f);
  for (auto& v : values) {
    if (unit(rng) < density) v = static_cast<float>(1.0 - unit(rng));
  }
  return ActivationTensor(width, height, channels, std::move(values), layer_tag, image_id);
}

std::string place_id(char prefix, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c_%04zu", prefix, index);
  return buf;
}

void write_dataset(const std::filesystem::path& dir, const DatasetOptions& options) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "queries");
  fs::create_directories(dir / "refs");
  std::mt19937_64 rng(options.seed);
  std::ofstream truth(dir / "truth.csv");
  truth << "query_id,reference_ids\n";
  for (std::size_t p = 0; p < options.places; ++p) {
    const std::string qid = place_id('q', p);
    const std::string rid = place_id('r', p);
    auto scene = make_scene(qid, options.scene, rng);
    int dx = uniform_int(rng, -options.max_shift, options.max_shift);
    int dy = uniform_int(rng, -options.max_shift, options.max_shift);
    for (const auto& layer : scene) {
      save_tensor(layer, dir / "queries" / (qid + "." + layer.layer_tag() + kTensorExtension));
      auto ref = perturb(layer, dx, dy, options.noise, rng, rid);
      save_tensor(ref, dir / "refs" / (rid + "." + layer.layer_tag() + kTensorExtension));
    }
    truth << qid << ',' << rid << '\n';
  }
}

} // namespace attnvlad::synth
