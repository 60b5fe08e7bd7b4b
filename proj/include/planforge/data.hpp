#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "planforge/connectivity.hpp"
#include "planforge/floorplan.hpp"
#include "planforge/serialization.hpp"

namespace planforge {

/// One vector-graphic floorplan before vectorization. Coordinates are divided
/// by `scale` to land in the unit square.
struct RawSample {
  struct Shape {
    int category = 0;
    std::vector<Eigen::Vector2d> points;
  };
  std::string sourceId;
  double scale = 1.0;
  std::vector<Shape> rooms;  // polygons
  std::vector<Shape> doors;  // segments or polygons
};

/// {"source_id", "scale", "rooms": [{"category", "polygon": [[x, y], ...]}],
///  "doors": [{"category", "points": [[x, y], ...]}]}
RawSample raw_sample_from_json(const Json& j, const Vocabulary& vocab);

/// Bounding box of every shape, quantized; rooms first, then doors, with room
/// indexes in that order. Throws ValidationError for degenerate shapes or
/// points outside the unit square.
Floorplan vectorize_to_boxes(const RawSample& raw, const Vocabulary& vocab);

/// Intersection area over the area of `door`. A zero-area door counts as 1
/// when it lies strictly inside `room` and 0 otherwise.
double overlap_fraction(const Box& door, const Box& room);

struct FilterVerdict {
  bool keep = true;
  std::string reason;
};

struct FilterOptions {
  double tau = 0.5;
  /// Discard on any front-door overlap; otherwise front doors use `tau` too.
  bool strictFrontDoor = true;
};

FilterVerdict filter_noisy(const Floorplan& fp, const Vocabulary& vocab, const FilterOptions& opt = {});

enum class SplitMode { separate, mixed };

struct SplitSpec {
  SplitMode mode = SplitMode::mixed;
  int heldOutRoomCount = 0;
  std::uint64_t seed = 0;
  double train = 0.8, val = 0.1, test = 0.1;
};

struct Splits {
  std::vector<Floorplan> train, val, test;
};

int room_count(const Floorplan& fp, const Vocabulary& vocab);

/// Separate mode: test holds exactly the plans with `heldOutRoomCount` rooms,
/// the rest is split into train and val. Mixed mode: plans are grouped by the
/// canonical hash of their reconstructed graph and whole groups are assigned,
/// so no diagram appears in two splits. Throws ConfigError on an empty split.
Splits make_splits(const std::vector<Floorplan>& corpus, const SplitSpec& spec, const Vocabulary& vocab);

struct SynthOptions {
  int minRooms = 4, maxRooms = 8;
  /// Grid step of random offsets applied to interior cut lines; 0 keeps every
  /// cut at the even split.
  int cutJitter = 0;
  /// Pick the door between two bands among every overlapping pair instead of
  /// the leftmost one.
  bool randomBandDoors = false;
};

struct SynthSample {
  Floorplan plan;
  BubbleDiagram diagram;
};

/// Rooms tile a fixed footprint by guillotine cuts: horizontal bands, each
/// split into rooms. Neighbours in a band share a door, consecutive bands are
/// joined by one door and the front door sits on the outer wall of the
/// living room. Plans are hybrid-sorted with statistics of the generated set.
std::vector<SynthSample> synth_corpus(int n, const SynthOptions& opt, std::uint64_t seed,
                                      const Vocabulary& vocab);

/// JSON-lines corpus, one Floorplan record per line.
void write_corpus(const std::string& path, const std::vector<Floorplan>& corpus, const Vocabulary& vocab);
std::vector<Floorplan> read_corpus(const std::string& path, const Vocabulary& vocab);
/// Sidecar path of the statistics file for a corpus path.
std::string stats_path_for(const std::string& corpusPath);

}  // namespace planforge
