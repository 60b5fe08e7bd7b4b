#include "planforge/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

#include "planforge/errors.hpp"
#include "planforge/graph.hpp"

namespace planforge {

namespace {

RawSample::Shape shape_from_json(const Json& j, const char* pointsKey, const std::string& field,
                                 const Vocabulary& vocab) {
  if (!j.is_object() || !j.contains("category") || !j["category"].is_string())
    throw ValidationError(field + ".category", "missing or not a string");
  RawSample::Shape s;
  s.category = vocab.require(j["category"].get<std::string>(), field + ".category");
  if (!j.contains(pointsKey) || !j[pointsKey].is_array())
    throw ValidationError(field + "." + pointsKey, "missing or not an array");
  for (const auto& p : j[pointsKey]) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
      throw ValidationError(field + "." + pointsKey, "points must be [x, y] numbers");
    s.points.emplace_back(p[0].get<double>(), p[1].get<double>());
  }
  return s;
}

Box bounding_box(const RawSample::Shape& s, double scale, const std::string& field) {
  double x0 = s.points[0].x(), x1 = x0, y0 = s.points[0].y(), y1 = y0;
  for (const auto& p : s.points) {
    x0 = std::min(x0, p.x()), x1 = std::max(x1, p.x());
    y0 = std::min(y0, p.y()), y1 = std::max(y1, p.y());
  }
  for (double v : {x0, x1, y0, y1})
    if (!(v / scale >= 0.0 && v / scale <= 1.0))
      throw ValidationError(field, "point outside the unit square after normalization");
  return {quantize(x0 / scale), quantize(y0 / scale), quantize(x1 / scale), quantize(y1 / scale)};
}

}  // namespace

RawSample raw_sample_from_json(const Json& j, const Vocabulary& vocab) {
  if (!j.is_object()) throw ValidationError("sample", "expected an object");
  RawSample raw;
  raw.sourceId = j.value("source_id", std::string{});
  raw.scale = j.value("scale", 1.0);
  if (!(raw.scale > 0)) throw ValidationError("scale", "must be positive");
  if (!j.contains("rooms") || !j["rooms"].is_array()) throw ValidationError("rooms", "missing or not an array");
  for (std::size_t i = 0; i < j["rooms"].size(); ++i)
    raw.rooms.push_back(shape_from_json(j["rooms"][i], "polygon", "rooms[" + std::to_string(i) + "]", vocab));
  if (j.contains("doors")) {
    if (!j["doors"].is_array()) throw ValidationError("doors", "not an array");
    for (std::size_t i = 0; i < j["doors"].size(); ++i)
      raw.doors.push_back(shape_from_json(j["doors"][i], "points", "doors[" + std::to_string(i) + "]", vocab));
  }
  return raw;
}

Floorplan vectorize_to_boxes(const RawSample& raw, const Vocabulary& vocab) {
  Floorplan fp;
  fp.vocabVersion = vocab.version();
  int index = 0;
  for (std::size_t i = 0; i < raw.rooms.size(); ++i) {
    const auto& s = raw.rooms[i];
    const std::string field = "rooms[" + std::to_string(i) + "]";
    if (vocab.is_door(s.category)) throw ValidationError(field + ".category", "door category on a room polygon");
    if (s.points.size() < 3) throw ValidationError(field + ".polygon", "fewer than 3 vertices");
    const Box b = bounding_box(s, raw.scale, field + ".polygon");
    if (b.xL == b.xR || b.yT == b.yB) throw ValidationError(field + ".polygon", "degenerate polygon");
    fp.elements.push_back({index++, s.category, b});
  }
  for (std::size_t i = 0; i < raw.doors.size(); ++i) {
    const auto& s = raw.doors[i];
    const std::string field = "doors[" + std::to_string(i) + "]";
    if (!vocab.is_door(s.category)) throw ValidationError(field + ".category", "room category on a door");
    if (s.points.size() < 2) throw ValidationError(field + ".points", "fewer than 2 points");
    fp.elements.push_back({index++, s.category, bounding_box(s, raw.scale, field + ".points")});
  }
  return fp;
}

double overlap_fraction(const Box& door, const Box& room) {
  if (door.area() == 0) {
    const bool inside = door.xL > room.xL && door.xR < room.xR && door.yT > room.yT && door.yB < room.yB;
    return inside ? 1.0 : 0.0;
  }
  const long w = std::max(0, std::min(door.xR, room.xR) - std::max(door.xL, room.xL));
  const long h = std::max(0, std::min(door.yB, room.yB) - std::max(door.yT, room.yT));
  return static_cast<double>(w * h) / static_cast<double>(door.area());
}

FilterVerdict filter_noisy(const Floorplan& fp, const Vocabulary& vocab, const FilterOptions& opt) {
  const auto living = vocab.living_room();
  for (const auto& d : fp.elements) {
    if (!vocab.is_door(d.category)) continue;
    const bool front = d.category == vocab.front_door();
    for (const auto& r : fp.elements) {
      if (vocab.is_door(r.category)) continue;
      const double f = overlap_fraction(d.box, r.box);
      const std::string who = "door " + std::to_string(d.roomIndex) + " overlaps room " + std::to_string(r.roomIndex);
      if (front && opt.strictFrontDoor) {
        if (f > 0) return {false, "front " + who};
        continue;
      }
      if (!front && living && r.category == *living) continue;
      if (f > opt.tau) return {false, (front ? "front " : "interior ") + who + " above threshold"};
    }
  }
  return {};
}

int room_count(const Floorplan& fp, const Vocabulary& vocab) {
  return static_cast<int>(std::count_if(fp.elements.begin(), fp.elements.end(),
                                        [&](const Element& e) { return !vocab.is_door(e.category); }));
}

Splits make_splits(const std::vector<Floorplan>& corpus, const SplitSpec& spec, const Vocabulary& vocab) {
  if (spec.train < 0 || spec.val < 0 || spec.test < 0 || spec.train + spec.val + spec.test <= 0)
    throw ConfigError("make_splits: fractions must be non-negative with a positive sum");
  std::mt19937_64 rng(spec.seed);
  Splits out;

  if (spec.mode == SplitMode::separate) {
    if (spec.heldOutRoomCount <= 0) throw ConfigError("make_splits: separate mode requires a held-out room count");
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      if (room_count(corpus[i], vocab) == spec.heldOutRoomCount)
        out.test.push_back(corpus[i]);
      else
        rest.push_back(i);
    }
    std::shuffle(rest.begin(), rest.end(), rng);
    const double share = spec.train + spec.val > 0 ? spec.val / (spec.train + spec.val) : 0.0;
    const auto nVal = static_cast<std::size_t>(std::llround(share * static_cast<double>(rest.size())));
    for (std::size_t k = 0; k < rest.size(); ++k) (k < nVal ? out.val : out.train).push_back(corpus[rest[k]]);
  } else {
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < corpus.size(); ++i)
      groups[canonical_hash(reconstruct_graph(corpus[i], vocab).graph)].push_back(i);
    std::vector<const std::vector<std::size_t>*> order;
    for (const auto& [hash, members] : groups) order.push_back(&members);
    std::shuffle(order.begin(), order.end(), rng);
    const double total = spec.train + spec.val + spec.test;
    const double targets[3] = {spec.train / total, spec.val / total, spec.test / total};
    std::vector<Floorplan>* dest[3] = {&out.train, &out.val, &out.test};
    std::size_t assigned = 0;
    for (const auto* members : order) {
      // Largest deficit against the target share takes the next group.
      int pick = 0;
      double bestDeficit = -1e300;
      for (int s = 0; s < 3; ++s) {
        if (targets[s] <= 0) continue;
        const double deficit = targets[s] * static_cast<double>(assigned + members->size()) -
                               static_cast<double>(dest[s]->size());
        if (deficit > bestDeficit) bestDeficit = deficit, pick = s;
      }
      for (std::size_t i : *members) dest[pick]->push_back(corpus[i]);
      assigned += members->size();
    }
  }

  if (out.train.empty()) throw ConfigError("make_splits: train split is empty");
  if (out.test.empty() && (spec.mode == SplitMode::separate || spec.test > 0))
    throw ConfigError("make_splits: test split is empty");
  if (out.val.empty() && spec.val > 0) throw ConfigError("make_splits: val split is empty");
  return out;
}

namespace {

// Footprint and door sizes in quantized units.
constexpr int kLo = 16, kHi = 240;
constexpr int kDoor = 12, kFrontDoor = 16;

// Everything random about one plan except which slot each category takes.
struct PlanDraw {
  std::vector<int> categories;  // multiset, living room included
  std::vector<int> ys;          // band cuts
  std::vector<std::vector<int>> xs;  // room cuts per band
  std::vector<double> bandDoor;      // uniform draws picking the door between bands
};

std::vector<int> draw_categories(int rooms, std::mt19937_64& rng, const Vocabulary& vocab) {
  struct Pool {
    const char* name;
    double weight;
    int cap;
  };
  std::vector<Pool> pool = {{"bedroom", 4.0, 4},   {"bathroom", 1.5, 2}, {"balcony", 1.0, 1},
                            {"dining_room", 0.7, 1}, {"study_room", 0.6, 1}, {"storage", 0.5, 1},
                            {"entrance", 0.4, 1}};
  std::vector<int> ids = {vocab.require("living_room")};
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (rooms > 1 && u(rng) < 0.9) ids.push_back(vocab.require("kitchen"));
  while (static_cast<int>(ids.size()) < rooms) {
    double total = 0;
    for (const auto& p : pool)
      if (p.cap > 0) total += p.weight;
    double x = u(rng) * total;
    const char* pick = "bedroom";
    for (auto& p : pool) {
      if (p.cap <= 0) continue;
      x -= p.weight;
      if (x <= 0) {
        pick = p.name;
        --p.cap;
        break;
      }
    }
    ids.push_back(vocab.require(pick));
  }
  return ids;
}

// Even cuts of [lo, hi] into k parts, interior cuts optionally jittered.
std::vector<int> cuts(int lo, int hi, int k, int jitter, std::mt19937_64& rng) {
  std::vector<int> c(static_cast<std::size_t>(k) + 1);
  for (int i = 0; i <= k; ++i)
    c[static_cast<std::size_t>(i)] = lo + static_cast<int>(std::lround((hi - lo) * static_cast<double>(i) / k));
  if (jitter > 0) {
    std::uniform_int_distribution<int> step(-2, 2);
    for (int i = 1; i < k; ++i) {
      const int lowBound = c[static_cast<std::size_t>(i) - 1] + 40, highBound = c[static_cast<std::size_t>(i) + 1] - 40;
      const int v = c[static_cast<std::size_t>(i)] + jitter * step(rng);
      c[static_cast<std::size_t>(i)] = std::clamp(v, lowBound, highBound);
    }
  }
  return c;
}

PlanDraw draw_plan(int rooms, const SynthOptions& opt, std::mt19937_64& rng, const Vocabulary& vocab) {
  PlanDraw d;
  d.categories = draw_categories(rooms, rng, vocab);
  const int bands = (rooms + 2) / 3;
  d.ys = cuts(kLo, kHi, bands, opt.cutJitter, rng);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int b = 0; b < bands; ++b) {
    const int k = rooms / bands + (b < rooms % bands ? 1 : 0);
    d.xs.push_back(cuts(kLo, kHi, k, opt.cutJitter, rng));
    if (b + 1 < bands) d.bandDoor.push_back(opt.randomBandDoors ? u(rng) : 0.0);
  }
  return d;
}

// Lays rooms out band by band, left to right, taking categories in `rank`
// order, then places the doors.
SynthSample build_plan(const PlanDraw& d, const std::vector<int>& rank, const Vocabulary& vocab) {
  std::vector<int> cats(d.categories);
  std::stable_sort(cats.begin(), cats.end(), [&](int a, int b) {
    return std::find(rank.begin(), rank.end(), a) < std::find(rank.begin(), rank.end(), b);
  });

  SynthSample out;
  Floorplan& fp = out.plan;
  fp.vocabVersion = vocab.version();
  std::vector<std::vector<int>> bandRooms(d.xs.size());
  for (std::size_t b = 0; b < d.xs.size(); ++b)
    for (std::size_t k = 0; k + 1 < d.xs[b].size(); ++k) {
      bandRooms[b].push_back(static_cast<int>(fp.size()));
      fp.elements.push_back({static_cast<int>(fp.size()), cats[fp.size()],
                             {d.xs[b][k], d.ys[b], d.xs[b][k + 1], d.ys[b + 1]}});
    }
  auto box = [&](int i) -> const Box& { return fp.elements[static_cast<std::size_t>(i)].box; };

  std::vector<std::pair<int, int>> edges;  // (room, door) element indexes
  auto addDoor = [&](int category, Box b, std::vector<int> sides) {
    const int door = static_cast<int>(fp.size());
    fp.elements.push_back({door, category, b});
    for (int s : sides) edges.emplace_back(s, door);
  };
  for (std::size_t b = 0; b < bandRooms.size(); ++b) {
    const auto& ids = bandRooms[b];
    for (std::size_t k = 0; k + 1 < ids.size(); ++k) {
      const Box l = box(ids[k]);
      const int mid = (l.yT + l.yB) / 2;
      addDoor(vocab.interior_door(), {l.xR, mid - kDoor / 2, l.xR, mid + kDoor / 2}, {ids[k], ids[k + 1]});
    }
    if (b + 1 == bandRooms.size()) continue;
    std::vector<std::pair<int, int>> pairs;
    for (int top : ids)
      for (int bottom : bandRooms[b + 1])
        if (std::min(box(top).xR, box(bottom).xR) - std::max(box(top).xL, box(bottom).xL) >= 2 * kDoor)
          pairs.emplace_back(top, bottom);
    const auto pick = std::min(pairs.size() - 1, static_cast<std::size_t>(d.bandDoor[b] * static_cast<double>(pairs.size())));
    const auto [top, bottom] = pairs[pick];
    const Box t = box(top), u = box(bottom);
    const int mid = (std::max(t.xL, u.xL) + std::min(t.xR, u.xR)) / 2;
    addDoor(vocab.interior_door(), {mid - kDoor / 2, t.yB, mid + kDoor / 2, t.yB}, {top, bottom});
  }
  // Front door on an outer wall of the living room, or of the first room when
  // the living room is enclosed.
  int host = 0;
  for (std::size_t i = 0; i < fp.size(); ++i) {
    const Box& b = fp.elements[i].box;
    const bool outer = b.yT == kLo || b.yB == kHi || b.xL == kLo || b.xR == kHi;
    if (fp.elements[i].category == vocab.living_room() && outer) host = static_cast<int>(i);
  }
  const Box h = box(host);
  const int cx = (h.xL + h.xR) / 2, cy = (h.yT + h.yB) / 2, f = kFrontDoor / 2;
  Box front;
  if (h.yT == kLo)
    front = {cx - f, kLo, cx + f, kLo};
  else if (h.yB == kHi)
    front = {cx - f, kHi, cx + f, kHi};
  else if (h.xL == kLo)
    front = {kLo, cy - f, kLo, cy + f};
  else
    front = {kHi, cy - f, kHi, cy + f};
  addDoor(vocab.front_door(), front, {host});

  for (const auto& e : fp.elements) out.diagram.nodes.push_back({"e" + std::to_string(e.roomIndex), e.category});
  out.diagram.edges = std::move(edges);
  return out;
}

}  // namespace

std::vector<SynthSample> synth_corpus(int n, const SynthOptions& opt, std::uint64_t seed, const Vocabulary& vocab) {
  if (n < 1) throw ConfigError("synth_corpus: n must be at least 1");
  if (opt.minRooms < 1 || opt.maxRooms < opt.minRooms || opt.maxRooms > 12)
    throw ConfigError("synth_corpus: room range must satisfy 1 <= min <= max <= 12");
  if (opt.cutJitter < 0 || opt.cutJitter > 8) throw ConfigError("synth_corpus: cut jitter must be in [0, 8]");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> count(opt.minRooms, opt.maxRooms);
  std::vector<PlanDraw> draws;
  for (int i = 0; i < n; ++i) draws.push_back(draw_plan(count(rng), opt, rng, vocab));

  // Slots are filled in category rank order, but the rank comes from the
  // statistics of the filled corpus. Iterate to a fixed point so that hybrid
  // order and layout order agree.
  std::vector<int> rank;
  for (const char* name : {"living_room", "kitchen", "dining_room", "entrance", "study_room", "bedroom",
                           "bathroom", "balcony", "storage"})
    rank.push_back(vocab.require(name));
  std::vector<SynthSample> out;
  CategoryPositionStats stats;
  for (int round = 0; round < 16; ++round) {
    out.clear();
    std::vector<Floorplan> plans;
    for (const auto& d : draws) {
      out.push_back(build_plan(d, rank, vocab));
      plans.push_back(out.back().plan);
    }
    stats = compute_category_stats(plans);
    std::vector<int> present;
    for (int c : rank)
      if (stats.mean.count(c)) present.push_back(c);
    std::vector<int> next = category_rank_order(stats, vocab, present);
    for (int c : rank)
      if (std::find(next.begin(), next.end(), c) == next.end()) next.push_back(c);
    if (next == rank) break;
    rank = std::move(next);
  }

  for (auto& s : out) {
    // Reorder elements and remap diagram edges to the new positions.
    Floorplan sorted = hybrid_sort(s.plan, stats, vocab);
    std::vector<int> where(sorted.size());
    for (std::size_t k = 0; k < sorted.size(); ++k) where[static_cast<std::size_t>(sorted.elements[k].roomIndex)] = static_cast<int>(k);
    BubbleDiagram bd;
    for (const auto& e : sorted.elements) bd.nodes.push_back({"e" + std::to_string(e.roomIndex), e.category});
    for (const auto& [a, b] : s.diagram.edges)
      bd.edges.emplace_back(where[static_cast<std::size_t>(a)], where[static_cast<std::size_t>(b)]);
    s.plan = std::move(sorted);
    s.diagram = std::move(bd);
  }
  return out;
}

void write_corpus(const std::string& path, const std::vector<Floorplan>& corpus, const Vocabulary& vocab) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write corpus: " + path);
  for (const auto& fp : corpus) f << to_json(fp, vocab).dump() << '\n';
  if (!f) throw ConfigError("failed writing corpus: " + path);
}

std::vector<Floorplan> read_corpus(const std::string& path, const Vocabulary& vocab) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read corpus: " + path);
  std::vector<Floorplan> out;
  std::string line;
  long lineNo = 0;
  while (std::getline(f, line)) {
    ++lineNo;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(floorplan_from_json(Json::parse(line), vocab));
    } catch (const Json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineNo) + ": " + e.what(), lineNo);
    } catch (const ValidationError& e) {
      throw ParseError(path + ":" + std::to_string(lineNo) + ": " + e.what(), lineNo);
    }
  }
  return out;
}

std::string stats_path_for(const std::string& corpusPath) {
  const auto dot = corpusPath.rfind(".jsonl");
  const std::string stem = dot == std::string::npos ? corpusPath : corpusPath.substr(0, dot);
  return stem + ".stats.json";
}

}  // namespace planforge
