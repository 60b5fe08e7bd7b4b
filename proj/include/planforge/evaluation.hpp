#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "planforge/connectivity.hpp"
#include "planforge/floorplan.hpp"
#include "planforge/graph.hpp"

namespace planforge {

/// Edit distance between the diagram's graph and the graph reconstructed from
/// the plan's geometry.
EditDistance compatibility(const BubbleDiagram& input, const Floorplan& fp, const Vocabulary& vocab,
                           int epsilon = 2);

/// Half-open cell rectangle [x0, x1) x [y0, y1) on the 256 grid. A box covers
/// the cells xL..xR and yT..yB inclusive.
struct CellRect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  long area() const { return static_cast<long>(x1 - x0) * (y1 - y0); }
};

CellRect cells_of(const Box& b);

/// Render geometry of one element: a single rectangle, or the disjoint
/// rectangles of a trimmed living room.
struct RenderShape {
  int element = 0;
  int category = 0;
  std::vector<CellRect> parts;
  long area() const;
};

/// Every element as a shape, in element order. The living room (at most one)
/// loses the cells covered by other rooms; doors never trim it.
std::vector<RenderShape> trim_living_overlap(const Floorplan& fp, const Vocabulary& vocab);

/// Category-indexed grid; `kBackground` where nothing is painted.
struct Raster {
  static constexpr int kBackground = -1;
  int size = 0;
  std::vector<int> cells;  // row-major

  int at(int x, int y) const { return cells[static_cast<std::size_t>(y) * static_cast<std::size_t>(size) + static_cast<std::size_t>(x)]; }
  bool operator==(const Raster&) const = default;
};

/// Rooms are painted in reverse element order, then doors; the living room
/// uses its trimmed shape. At sizes other than 256 cell coordinates are scaled
/// by size / 256.
Raster rasterize(const Floorplan& fp, const Vocabulary& vocab, int size = 256);

/// Maps a raster to a fixed-length feature vector.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual Eigen::VectorXd features(const Raster& r) const = 0;
  virtual std::string name() const = 0;
};

/// Fixed random-weight convolutions over a downsampled one-hot raster with
/// ReLU and quadrant pooling.
class RandomConvFeatures : public FeatureExtractor {
 public:
  RandomConvFeatures(int numCategories, std::uint64_t seed = 2024, int channels = 16);
  Eigen::VectorXd features(const Raster& r) const override;
  std::string name() const override { return "random-conv"; }

 private:
  int numCategories_;
  int channels_;
  std::vector<Eigen::MatrixXd> conv1_;  // per output channel: inChannels x 9
  std::vector<Eigen::MatrixXd> conv2_;
};

/// Fréchet distance between Gaussian fits of two feature sets (one row per
/// sample). Throws ConfigError when either set has fewer than 2 rows.
double frechet_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

double fid_diversity(const std::vector<Raster>& generated, const std::vector<Raster>& reference,
                     const FeatureExtractor& extractor);

/// Fill colour of a category, HouseGAN++ palette.
std::string category_colour(const Vocabulary& vocab, int category);

struct SvgOptions {
  bool legend = true;
  int canvas = 256;
};

/// One <rect> or <path class="element"> per element, doors last, on a
/// white canvas; byte-identical output for identical input.
std::string render_svg(const Floorplan& fp, const Vocabulary& vocab, const SvgOptions& opt = {});

}  // namespace planforge
