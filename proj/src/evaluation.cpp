#include "planforge/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "planforge/errors.hpp"

namespace planforge {

EditDistance compatibility(const BubbleDiagram& input, const Floorplan& fp, const Vocabulary& vocab, int epsilon) {
  return graph_edit_distance(diagram_graph(input, vocab), reconstruct_graph(fp, vocab, epsilon).graph);
}

CellRect cells_of(const Box& b) { return {b.xL, b.yT, b.xR + 1, b.yB + 1}; }

long RenderShape::area() const {
  long a = 0;
  for (const auto& p : parts) a += p.area();
  return a;
}

namespace {

// Region minus the union of `holes`, as disjoint rectangles: coordinate
// compression, then horizontal runs merged per row strip.
std::vector<CellRect> subtract(const CellRect& region, const std::vector<CellRect>& holes) {
  std::vector<int> xs = {region.x0, region.x1}, ys = {region.y0, region.y1};
  for (const auto& h : holes) {
    for (int x : {h.x0, h.x1})
      if (x > region.x0 && x < region.x1) xs.push_back(x);
    for (int y : {h.y0, h.y1})
      if (y > region.y0 && y < region.y1) ys.push_back(y);
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  std::sort(ys.begin(), ys.end());
  ys.erase(std::unique(ys.begin(), ys.end()), ys.end());

  std::vector<CellRect> out;
  for (std::size_t j = 0; j + 1 < ys.size(); ++j) {
    int runStart = -1;
    for (std::size_t i = 0; i + 1 <= xs.size(); ++i) {
      bool free = false;
      if (i + 1 < xs.size()) {
        free = true;
        for (const auto& h : holes)
          if (xs[i] >= h.x0 && xs[i + 1] <= h.x1 && ys[j] >= h.y0 && ys[j + 1] <= h.y1) free = false;
      }
      if (free && runStart < 0) runStart = xs[i];
      if (!free && runStart >= 0) {
        out.push_back({runStart, ys[j], xs[i], ys[j + 1]});
        runStart = -1;
      }
    }
  }
  return out;
}

}  // namespace

std::vector<RenderShape> trim_living_overlap(const Floorplan& fp, const Vocabulary& vocab) {
  const auto living = vocab.living_room();
  std::vector<RenderShape> shapes;
  for (std::size_t i = 0; i < fp.size(); ++i) {
    const auto& e = fp.elements[i];
    RenderShape s{static_cast<int>(i), e.category, {cells_of(e.box)}};
    if (living && e.category == *living) {
      std::vector<CellRect> holes;
      for (const auto& o : fp.elements)
        if (&o != &e && !vocab.is_door(o.category) && o.category != *living) holes.push_back(cells_of(o.box));
      s.parts = subtract(s.parts.front(), holes);
    }
    shapes.push_back(std::move(s));
  }
  return shapes;
}

namespace {

// Rooms in reverse element order, then doors in element order.
std::vector<const RenderShape*> paint_order(const std::vector<RenderShape>& shapes, const Vocabulary& vocab) {
  std::vector<const RenderShape*> order;
  for (auto it = shapes.rbegin(); it != shapes.rend(); ++it)
    if (!vocab.is_door(it->category)) order.push_back(&*it);
  for (const auto& s : shapes)
    if (vocab.is_door(s.category)) order.push_back(&s);
  return order;
}

}  // namespace

Raster rasterize(const Floorplan& fp, const Vocabulary& vocab, int size) {
  if (size < 1) throw ConfigError("rasterize: size must be positive");
  Raster r{size, std::vector<int>(static_cast<std::size_t>(size) * static_cast<std::size_t>(size), Raster::kBackground)};
  const auto shapes = trim_living_overlap(fp, vocab);
  auto scaleLo = [&](int v) { return static_cast<int>(static_cast<long>(v) * size / kCoordBins); };
  auto scaleHi = [&](int v) { return static_cast<int>((static_cast<long>(v) * size + kCoordBins - 1) / kCoordBins); };
  for (const RenderShape* s : paint_order(shapes, vocab))
    for (const auto& p : s->parts) {
      const int x0 = scaleLo(p.x0), x1 = std::max(scaleHi(p.x1), x0 + 1);
      const int y0 = scaleLo(p.y0), y1 = std::max(scaleHi(p.y1), y0 + 1);
      for (int y = y0; y < std::min(y1, size); ++y)
        for (int x = x0; x < std::min(x1, size); ++x)
          r.cells[static_cast<std::size_t>(y) * static_cast<std::size_t>(size) + static_cast<std::size_t>(x)] = s->category;
    }
  return r;
}

RandomConvFeatures::RandomConvFeatures(int numCategories, std::uint64_t seed, int channels)
    : numCategories_(numCategories), channels_(channels) {
  std::mt19937_64 rng(seed);
  auto init = [&](int in) {
    std::normal_distribution<double> n(0.0, 1.0 / std::sqrt(9.0 * in));
    Eigen::MatrixXd w(in, 9);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = n(rng);
    return w;
  };
  for (int c = 0; c < channels; ++c) conv1_.push_back(init(numCategories + 1));
  for (int c = 0; c < channels; ++c) conv2_.push_back(init(channels));
}

namespace {

using Planes = std::vector<Eigen::MatrixXd>;

Planes conv_relu(const Planes& in, const std::vector<Eigen::MatrixXd>& weights) {
  const Eigen::Index h = in.front().rows(), w = in.front().cols();
  Planes out;
  for (const auto& k : weights) {
    Eigen::MatrixXd o = Eigen::MatrixXd::Zero(h, w);
    for (std::size_t c = 0; c < in.size(); ++c)
      for (int t = 0; t < 9; ++t) {
        const int dy = t / 3 - 1, dx = t % 3 - 1;
        const double wt = k(static_cast<Eigen::Index>(c), t);
        for (Eigen::Index y = std::max<Eigen::Index>(0, -dy); y < std::min(h, h - dy); ++y)
          for (Eigen::Index x = std::max<Eigen::Index>(0, -dx); x < std::min(w, w - dx); ++x)
            o(y, x) += wt * in[c](y + dy, x + dx);
      }
    out.push_back(o.cwiseMax(0.0));
  }
  return out;
}

Eigen::MatrixXd pool(const Eigen::MatrixXd& m, int f) {
  Eigen::MatrixXd out(m.rows() / f, m.cols() / f);
  for (Eigen::Index y = 0; y < out.rows(); ++y)
    for (Eigen::Index x = 0; x < out.cols(); ++x) out(y, x) = m.block(y * f, x * f, f, f).mean();
  return out;
}

}  // namespace

Eigen::VectorXd RandomConvFeatures::features(const Raster& r) const {
  constexpr int kGrid = 32;
  if (r.size % kGrid != 0) throw ShapeError("RandomConvFeatures: raster size must be a multiple of 32");
  const int f = r.size / kGrid;
  // One-hot planes (background last), pooled to 32 x 32.
  Planes planes(static_cast<std::size_t>(numCategories_) + 1, Eigen::MatrixXd::Zero(kGrid, kGrid));
  const double unit = 1.0 / (f * f);
  for (int y = 0; y < r.size; ++y)
    for (int x = 0; x < r.size; ++x) {
      const int c = r.at(x, y);
      const std::size_t plane = c == Raster::kBackground ? static_cast<std::size_t>(numCategories_) : static_cast<std::size_t>(c);
      planes[plane](y / f, x / f) += unit;
    }
  Planes h1 = conv_relu(planes, conv1_);
  for (auto& p : h1) p = pool(p, 2);
  const Planes h2 = conv_relu(h1, conv2_);
  Eigen::VectorXd out(channels_ * 4);
  const Eigen::Index half = h2.front().rows() / 2;
  for (int c = 0; c < channels_; ++c)
    for (int q = 0; q < 4; ++q)
      out(c * 4 + q) = h2[static_cast<std::size_t>(c)].block((q / 2) * half, (q % 2) * half, half, half).mean();
  return out;
}

namespace {

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() < 2 || b.rows() < 2) throw ConfigError("fid: each set needs at least 2 samples");
  if (a.cols() != b.cols()) throw ShapeError("fid: feature dimensions differ");
  auto fit = [](const Eigen::MatrixXd& x, Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
    mu = x.colwise().mean().transpose();
    const Eigen::MatrixXd c = x.rowwise() - mu.transpose();
    cov = c.transpose() * c / static_cast<double>(x.rows() - 1);
  };
  Eigen::VectorXd mu1, mu2;
  Eigen::MatrixXd s1, s2;
  fit(a, mu1, s1);
  fit(b, mu2, s2);
  // tr((S1 S2)^1/2) = tr((S1^1/2 S2 S1^1/2)^1/2), which stays symmetric.
  const Eigen::MatrixXd r1 = psd_sqrt(s1);
  Eigen::MatrixXd inner = r1 * s2 * r1;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inner, Eigen::EigenvaluesOnly);
  const double trCross = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double d = (mu1 - mu2).squaredNorm() + s1.trace() + s2.trace() - 2.0 * trCross;
  return std::max(0.0, d);
}

double fid_diversity(const std::vector<Raster>& generated, const std::vector<Raster>& reference,
                     const FeatureExtractor& extractor) {
  if (generated.size() < 2 || reference.size() < 2) throw ConfigError("fid: each set needs at least 2 samples");
  auto stack = [&](const std::vector<Raster>& set) {
    Eigen::MatrixXd m;
    for (std::size_t i = 0; i < set.size(); ++i) {
      const Eigen::VectorXd f = extractor.features(set[i]);
      if (i == 0) m.resize(static_cast<Eigen::Index>(set.size()), f.size());
      m.row(static_cast<Eigen::Index>(i)) = f.transpose();
    }
    return m;
  };
  return frechet_distance(stack(generated), stack(reference));
}

std::string category_colour(const Vocabulary& vocab, int category) {
  static const std::pair<const char*, const char*> palette[] = {
      {"living_room", "#EE4D4D"}, {"kitchen", "#C67C7B"},     {"bedroom", "#FFD274"},
      {"bathroom", "#BEBEBE"},    {"balcony", "#BFE3E8"},     {"entrance", "#7BA779"},
      {"dining_room", "#E87A90"}, {"study_room", "#FF8C69"},  {"storage", "#1F849B"},
      {"front_door", "#727171"},  {"interior_door", "#D3A2C7"}};
  const std::string& name = vocab.category(category).name;
  for (const auto& [n, c] : palette)
    if (name == n) return c;
  return "#785A67";
}

std::string render_svg(const Floorplan& fp, const Vocabulary& vocab, const SvgOptions& opt) {
  const int legendHeight = opt.legend ? 14 * ((vocab.num_categories() + 2) / 3) + 8 : 0;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.canvas << "\" height=\""
     << opt.canvas + legendHeight << "\" viewBox=\"0 0 256 " << 256 + legendHeight * 256 / opt.canvas << "\">\n";
  os << "<rect class=\"canvas\" x=\"0\" y=\"0\" width=\"256\" height=\"256\" fill=\"#FFFFFF\"/>\n";
  const auto shapes = trim_living_overlap(fp, vocab);
  for (const RenderShape* s : paint_order(shapes, vocab)) {
    const auto& e = fp.elements[static_cast<std::size_t>(s->element)];
    const std::string attrs = "class=\"element\" data-category=\"" + vocab.category(e.category).name +
                              "\" data-room-index=\"" + std::to_string(e.roomIndex) + "\" fill=\"" +
                              category_colour(vocab, e.category) + "\"";
    const bool door = vocab.is_door(e.category);
    const std::string stroke = door ? "" : " stroke=\"#000000\" stroke-width=\"1\"";
    if (s->parts.size() == 1) {
      const auto& p = s->parts.front();
      os << "<rect " << attrs << stroke << " x=\"" << p.x0 << "\" y=\"" << p.y0 << "\" width=\"" << p.x1 - p.x0
         << "\" height=\"" << p.y1 - p.y0 << "\"/>\n";
    } else {
      os << "<path " << attrs << stroke << " d=\"";
      for (std::size_t k = 0; k < s->parts.size(); ++k) {
        const auto& p = s->parts[k];
        os << (k ? " " : "") << 'M' << p.x0 << ' ' << p.y0 << 'H' << p.x1 << 'V' << p.y1 << 'H' << p.x0 << 'Z';
      }
      os << "\"/>\n";
    }
  }
  if (opt.legend) {
    os << "<g class=\"legend\" font-family=\"sans-serif\" font-size=\"8\">\n";
    for (int c = 0; c < vocab.num_categories(); ++c) {
      const int x = 4 + (c % 3) * 84, y = 260 + (c / 3) * 14;
      os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"10\" height=\"10\" fill=\""
         << category_colour(vocab, c) << "\"/><text x=\"" << x + 13 << "\" y=\"" << y + 8 << "\">"
         << vocab.category(c).name << "</text>\n";
    }
    os << "</g>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace planforge
