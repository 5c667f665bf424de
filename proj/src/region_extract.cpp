#include "attnvlad/region_extract.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "attnvlad/error.hpp"

namespace attnvlad {

void GroupingConfig::validate() const {
  if (!std::isfinite(zero_threshold) || zero_threshold < 0.0) {
    throw Error(ErrorKind::Parameter, "zero_threshold must be a finite value >= 0");
  }
  if (similarity_ratio && !(*similarity_ratio >= 1.0)) {
    throw Error(ErrorKind::Parameter, "similarity_ratio must be >= 1 when enabled");
  }
  if (connectivity != Connectivity::Four && connectivity != Connectivity::Eight) {
    throw Error(ErrorKind::Parameter, "connectivity must be 4 or 8");
  }
}

namespace {

constexpr int kOffsets8[8][2] = {{-1, -1}, {0, -1}, {1, -1}, {-1, 0}, {1, 0}, {-1, 1}, {0, 1}, {1, 1}};
constexpr int kOffsets4[4][2] = {{0, -1}, {-1, 0}, {1, 0}, {0, 1}};

bool couples(double a, double b, const GroupingConfig& config) {
  if (!config.similarity_ratio) return true;
  double hi = std::max(a, b);
  double lo = std::min(a, b);
  return hi <= *config.similarity_ratio * lo;
}

} // namespace

std::vector<Region> extract_regions(const ActivationTensor& tensor, const GroupingConfig& config) {
  config.validate();
  const int width = static_cast<int>(tensor.width());
  const int height = static_cast<int>(tensor.height());
  const std::size_t cells = tensor.width() * tensor.height();
  const bool eight = config.connectivity == Connectivity::Eight;
  const int num_offsets = eight ? 8 : 4;
  const auto* offsets = eight ? kOffsets8 : kOffsets4;

  std::vector<Region> regions;
  std::vector<char> visited(cells);
  std::vector<Position> frontier;

  for (std::size_t k = 0; k < tensor.channels(); ++k) {
    std::fill(visited.begin(), visited.end(), 0);
    std::size_t rank = 0;
    auto value = [&](int x, int y) -> double {
      return tensor.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), k);
    };

    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        std::size_t idx = static_cast<std::size_t>(y) * tensor.width() + static_cast<std::size_t>(x);
        if (visited[idx] || value(x, y) <= config.zero_threshold) continue;

        Region region;
        region.feature_map = k;
        region.discovery_rank = rank++;
        visited[idx] = 1;
        frontier.assign(1, Position{x, y});
        while (!frontier.empty()) {
          Position p = frontier.back();
          frontier.pop_back();
          region.positions.push_back(p);
          double here = value(p.x, p.y);
          for (int o = 0; o < num_offsets; ++o) {
            int nx = p.x + offsets[o][0];
            int ny = p.y + offsets[o][1];
            if (nx < 0 || ny < 0 || nx >= width || ny >= height) continue;
            std::size_t nidx = static_cast<std::size_t>(ny) * tensor.width() + static_cast<std::size_t>(nx);
            if (visited[nidx]) continue;
            double there = value(nx, ny);
            if (there <= config.zero_threshold || !couples(here, there, config)) continue;
            visited[nidx] = 1;
            frontier.push_back(Position{nx, ny});
          }
        }

        std::sort(region.positions.begin(), region.positions.end(),
                  [](const Position& a, const Position& b) {
                    return a.y != b.y ? a.y < b.y : a.x < b.x;
                  });
        double sum = 0.0;
        for (const auto& p : region.positions) sum += value(p.x, p.y);
        region.energy = sum / static_cast<double>(region.positions.size());
        regions.push_back(std::move(region));
      }
    }
  }
  return regions;
}

bool ranks_before(const Region& a, const Region& b) noexcept {
  if (a.energy != b.energy) return a.energy > b.energy;
  if (a.feature_map != b.feature_map) return a.feature_map < b.feature_map;
  return a.discovery_rank < b.discovery_rank;
}

RegionSelection select_top_n(std::vector<Region> regions, std::size_t n, std::string layer_tag) {
  if (n == 0) throw Error(ErrorKind::Parameter, "number of regions per layer must be positive");
  std::size_t keep = std::min(n, regions.size());
  std::partial_sort(regions.begin(), regions.begin() + static_cast<std::ptrdiff_t>(keep),
                    regions.end(), ranks_before);
  regions.resize(keep);
  return RegionSelection{std::move(layer_tag), n, std::move(regions)};
}

RegionSelection select_regions(const ActivationTensor& tensor, const GroupingConfig& config,
                               std::size_t n) {
  return select_top_n(extract_regions(tensor, config), n, tensor.layer_tag());
}

} // namespace attnvlad
